//! Pansharpening physics: MTF blur + decimation for the multispectral
//! band, spectral response weighting for the panchromatic band.

use crate::error::{dims_mismatch, Error, Result};
use crate::image::{reflect_index, Image};
use crate::linear::LinearMap;
use crate::scalar::Scalar;

/// Square odd-sized convolution kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel2D<T> {
    size: usize,
    data: Vec<T>,
}

impl<T: Scalar> Kernel2D<T> {
    pub fn new(size: usize, data: Vec<T>) -> Result<Self> {
        if size.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!("kernel size must be odd, got {size}")));
        }
        if data.len() != size * size {
            return Err(dims_mismatch(size * size, data.len()));
        }
        Ok(Self { size, data })
    }

    /// Single-tap kernel.
    pub fn delta() -> Self {
        Self {
            size: 1,
            data: vec![T::one()],
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }
    pub fn radius(&self) -> usize {
        self.size / 2
    }
    pub fn data(&self) -> &[T] {
        &self.data
    }
    #[inline]
    pub fn at(&self, r: usize, c: usize) -> T {
        self.data[r * self.size + c]
    }
    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }
}

/// Smallest odd integer `>= 8 sigma + 1`.
pub fn default_kernel_size(sigma: f64) -> usize {
    let n = (8.0 * sigma + 1.0).ceil() as usize;
    if n.is_multiple_of(2) {
        n + 1
    } else {
        n
    }
}

/// Isotropic Gaussian sampled on a `size x size` grid and renormalised to sum 1.
pub fn gaussian_mtf_kernel<T: Scalar>(sigma: f64, size: usize) -> Result<Kernel2D<T>> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter(format!("MTF sigma must be positive, got {sigma}")));
    }
    if size.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!("kernel size must be odd, got {size}")));
    }
    let r = (size / 2) as f64;
    let mut w = Vec::with_capacity(size * size);
    for i in 0..size {
        for j in 0..size {
            let (dy, dx) = (i as f64 - r, j as f64 - r);
            w.push((-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp());
        }
    }
    let total: f64 = w.iter().sum();
    Kernel2D::new(size, w.into_iter().map(|v| T::c(v / total)).collect())
}

/// `(k * x)↓j`: reflection-padded convolution evaluated only at the kept
/// samples `0, j, 2j, ...` of each axis.
#[derive(Debug, Clone, PartialEq)]
pub struct BlurDownsample<T> {
    kernel: Kernel2D<T>,
    factor: usize,
}

impl<T: Scalar> BlurDownsample<T> {
    pub fn new(kernel: Kernel2D<T>, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::InvalidParameter("downsampling factor must be >= 1".into()));
        }
        Ok(Self { kernel, factor })
    }

    pub fn kernel(&self) -> &Kernel2D<T> {
        &self.kernel
    }
    pub fn factor(&self) -> usize {
        self.factor
    }

    fn check(&self, h: usize, w: usize) -> Result<()> {
        if !h.is_multiple_of(self.factor) || !w.is_multiple_of(self.factor) {
            return Err(Error::InvalidParameter(format!(
                "image {h}x{w} not divisible by factor {}",
                self.factor
            )));
        }
        Ok(())
    }

    /// Reflected source indices for each kept output sample along one axis.
    fn taps(&self, n: usize) -> Vec<Vec<usize>> {
        let r = self.kernel.radius() as isize;
        let size = self.kernel.size() as isize;
        (0..n / self.factor)
            .map(|o| {
                let centre = (o * self.factor) as isize;
                // convolution: tap a reads x[centre + r - a]
                (0..size).map(|a| reflect_index(centre + r - a, n)).collect()
            })
            .collect()
    }

    pub fn apply(&self, x: &Image<T>) -> Result<Image<T>> {
        let (c, h, w) = x.dims();
        self.check(h, w)?;
        let (oh, ow) = (h / self.factor, w / self.factor);
        let (rows, cols) = (self.taps(h), self.taps(w));
        let size = self.kernel.size();
        let mut out = Image::zeros(c, oh, ow);
        for ch in 0..c {
            let src = x.plane(ch);
            let dst = out.plane_mut(ch);
            for (oy, ry) in rows.iter().enumerate() {
                for (ox, rx) in cols.iter().enumerate() {
                    let mut acc = T::zero();
                    for a in 0..size {
                        let row = &src[ry[a] * w..(ry[a] + 1) * w];
                        let krow = &self.kernel.data[a * size..(a + 1) * size];
                        for (b, &kv) in krow.iter().enumerate() {
                            acc += kv * row[rx[b]];
                        }
                    }
                    dst[oy * ow + ox] = acc;
                }
            }
        }
        Ok(out)
    }

    /// Zero-upsampling followed by the transposed (reflection-folded) convolution.
    pub fn adjoint(&self, v: &Image<T>) -> Result<Image<T>> {
        let (c, oh, ow) = v.dims();
        let (h, w) = (oh * self.factor, ow * self.factor);
        let (rows, cols) = (self.taps(h), self.taps(w));
        let size = self.kernel.size();
        let mut out = Image::zeros(c, h, w);
        for ch in 0..c {
            let src = v.plane(ch);
            let dst = out.plane_mut(ch);
            for (oy, ry) in rows.iter().enumerate() {
                for (ox, rx) in cols.iter().enumerate() {
                    let s = src[oy * ow + ox];
                    for a in 0..size {
                        let base = ry[a] * w;
                        let krow = &self.kernel.data[a * size..(a + 1) * size];
                        for (b, &kv) in krow.iter().enumerate() {
                            dst[base + rx[b]] += kv * s;
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

impl<T: Scalar> LinearMap<T> for BlurDownsample<T> {
    fn name(&self) -> &'static str {
        "blur_downsample"
    }
    fn apply(&self, x: &Image<T>) -> Result<Image<T>> {
        BlurDownsample::apply(self, x)
    }
    fn adjoint(&self, y: &Image<T>) -> Result<Image<T>> {
        BlurDownsample::adjoint(self, y)
    }
}

/// Spectral response: per-band weights summing the multispectral channels
/// into one panchromatic channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Srf<T> {
    weights: Vec<T>,
}

impl<T: Scalar> Srf<T> {
    pub fn new(weights: Vec<T>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidParameter("SRF needs at least one weight".into()));
        }
        if weights.iter().any(|&w| w < T::zero() || !w.is_finite()) {
            return Err(Error::InvalidParameter("SRF weights must be finite and >= 0".into()));
        }
        let total: f64 = weights.iter().map(|w| w.f64()).sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidParameter(format!("SRF weights must sum to 1, got {total}")));
        }
        Ok(Self { weights })
    }

    /// Equal weights `1 / channels`.
    pub fn flat(channels: usize) -> Self {
        Self {
            weights: vec![T::one() / T::from_usize_lossy(channels); channels],
        }
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn apply(&self, x: &Image<T>) -> Result<Image<T>> {
        if x.channels() != self.weights.len() {
            return Err(dims_mismatch(self.weights.len(), x.channels()));
        }
        let mut out = Image::zeros(1, x.height(), x.width());
        for (c, &wc) in self.weights.iter().enumerate() {
            for (o, &v) in out.data_mut().iter_mut().zip(x.plane(c)) {
                *o += wc * v;
            }
        }
        Ok(out)
    }

    pub fn adjoint(&self, v: &Image<T>) -> Result<Image<T>> {
        if v.channels() != 1 {
            return Err(dims_mismatch(1, v.channels()));
        }
        let mut out = Image::zeros(self.weights.len(), v.height(), v.width());
        for (c, &wc) in self.weights.iter().enumerate() {
            for (o, &s) in out.plane_mut(c).iter_mut().zip(v.data()) {
                *o = wc * s;
            }
        }
        Ok(out)
    }
}

impl<T: Scalar> LinearMap<T> for Srf<T> {
    fn name(&self) -> &'static str {
        "srf"
    }
    fn apply(&self, x: &Image<T>) -> Result<Image<T>> {
        Srf::apply(self, x)
    }
    fn adjoint(&self, y: &Image<T>) -> Result<Image<T>> {
        Srf::adjoint(self, y)
    }
}

/// `x -> {(k * x)↓j, R_pan x}`.
#[derive(Debug, Clone, PartialEq)]
pub struct PansharpeningOperator<T> {
    pub blur: BlurDownsample<T>,
    pub srf: Srf<T>,
}

impl<T: Scalar> PansharpeningOperator<T> {
    /// Gaussian MTF with the given sigma and default support.
    pub fn new(factor: usize, mtf_sigma: f64, srf: Srf<T>) -> Result<Self> {
        let kernel = gaussian_mtf_kernel(mtf_sigma, default_kernel_size(mtf_sigma))?;
        Ok(Self {
            blur: BlurDownsample::new(kernel, factor)?,
            srf,
        })
    }

    pub fn factor(&self) -> usize {
        self.blur.factor()
    }

    pub fn channels(&self) -> usize {
        self.srf.weights().len()
    }

    /// Returns `(y_ms, y_pan)`.
    pub fn apply(&self, x: &Image<T>) -> Result<(Image<T>, Image<T>)> {
        Ok((self.blur.apply(x)?, self.srf.apply(x)?))
    }

    pub fn adjoint(&self, ms: &Image<T>, pan: &Image<T>) -> Result<Image<T>> {
        let a = self.blur.adjoint(ms)?;
        let b = self.srf.adjoint(pan)?;
        a.add(&b)
    }

    /// Wald's protocol: degrade both measurements once more with the same
    /// blur-downsample; the original `y_ms` becomes the training target.
    /// Returns `((ms_reduced, pan_reduced), target)`.
    pub fn wald_pair(
        &self,
        ms: &Image<T>,
        pan: &Image<T>,
    ) -> Result<((Image<T>, Image<T>), Image<T>)> {
        Ok((
            (self.blur.apply(ms)?, self.blur.apply(pan)?),
            ms.clone(),
        ))
    }
}

pub fn blur_downsample<T: Scalar>(x: &Image<T>, kernel: &Kernel2D<T>, j: usize) -> Result<Image<T>> {
    BlurDownsample::new(kernel.clone(), j)?.apply(x)
}

pub fn blur_downsample_adjoint<T: Scalar>(
    v: &Image<T>,
    kernel: &Kernel2D<T>,
    j: usize,
) -> Result<Image<T>> {
    BlurDownsample::new(kernel.clone(), j)?.adjoint(v)
}

pub fn srf_apply<T: Scalar>(weights: &[T], x: &Image<T>) -> Result<Image<T>> {
    Srf::new(weights.to_vec())?.apply(x)
}

pub fn srf_adjoint<T: Scalar>(weights: &[T], v: &Image<T>) -> Result<Image<T>> {
    Srf::new(weights.to_vec())?.adjoint(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear::adjoint_mismatch;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(rng: &mut impl Rng, c: usize, h: usize, w: usize) -> Image<f64> {
        Image::from_fn(c, h, w, |_, _, _| rng.random::<f64>() - 0.5)
    }

    #[test]
    fn kernel_properties() {
        assert_eq!(default_kernel_size(4.0), 33);
        let k = gaussian_mtf_kernel::<f64>(4.0, 33).unwrap();
        assert!((k.sum() - 1.0).abs() < 1e-12);
        for i in 0..33 {
            for j in 0..33 {
                assert!((k.at(i, j) - k.at(j, i)).abs() < 1e-18);
                assert!((k.at(i, j) - k.at(32 - i, 32 - j)).abs() < 1e-18);
            }
        }
        let narrow = gaussian_mtf_kernel::<f64>(0.05, default_kernel_size(0.05)).unwrap();
        assert_eq!(narrow.size(), 3);
        assert!(narrow.at(1, 1) > 1.0 - 1e-12);
        assert!(gaussian_mtf_kernel::<f64>(1.0, 4).is_err());
        assert!(gaussian_mtf_kernel::<f64>(0.0, 5).is_err());
    }

    #[test]
    fn constant_image_downsamples_to_constant() {
        let op = PansharpeningOperator::new(4, 4.0, Srf::<f64>::flat(3)).unwrap();
        let x = Image::filled(3, 64, 64, 0.37);
        let (ms, pan) = op.apply(&x).unwrap();
        assert_eq!(ms.dims(), (3, 16, 16));
        assert_eq!(pan.dims(), (1, 64, 64));
        assert!(ms.data().iter().all(|v| (v - 0.37).abs() < 1e-14));
        assert!(pan.data().iter().all(|v| (v - 0.37).abs() < 1e-14));
    }

    #[test]
    fn srf_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let base = random_image(&mut rng, 1, 6, 6);
        let x = Image::stack(&[base.clone(), base.clone(), base.clone(), base.clone()]).unwrap();
        let pan = srf_apply(&[0.25; 4], &x).unwrap();
        for (a, b) in pan.data().iter().zip(base.data()) {
            assert!((a - b).abs() < 1e-15);
        }
        let y = random_image(&mut rng, 4, 6, 6);
        let first = srf_apply(&[1.0, 0.0, 0.0, 0.0], &y).unwrap();
        assert_eq!(first, y.channel(0));
        assert!(srf_apply(&[0.5, 0.5], &y).is_err());
        assert!(Srf::new(vec![0.7, 0.7]).is_err());
        assert!(Srf::new(vec![1.5, -0.5]).is_err());
    }

    #[test]
    fn adjoint_dot_tests() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let op = PansharpeningOperator::new(4, 4.0, Srf::<f64>::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap()).unwrap();
        for _ in 0..5 {
            let x = random_image(&mut rng, 4, 32, 32);
            let v = random_image(&mut rng, 4, 8, 8);
            assert!(adjoint_mismatch(&op.blur, &x, &v).unwrap() < 1e-10);
            let p = random_image(&mut rng, 1, 32, 32);
            assert!(adjoint_mismatch(&op.srf, &x, &p).unwrap() < 1e-10);
            // stacked operator
            let (ms, pan) = op.apply(&x).unwrap();
            let lhs = ms.dot(&v).unwrap() + pan.dot(&p).unwrap();
            let rhs = x.dot(&op.adjoint(&v, &p).unwrap()).unwrap();
            assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));
        }
    }

    #[test]
    fn divisibility_is_checked() {
        let k = gaussian_mtf_kernel::<f64>(1.0, 9).unwrap();
        assert!(blur_downsample(&Image::zeros(1, 10, 12), &k, 4).is_err());
        let y = blur_downsample(&Image::filled(1, 12, 12, 1.0), &k, 4).unwrap();
        assert_eq!(y.dims(), (1, 3, 3));
        assert_eq!(blur_downsample_adjoint(&y, &k, 4).unwrap().dims(), (1, 12, 12));
    }

    #[test]
    fn wald_pair_shapes() {
        let op = PansharpeningOperator::new(2, 2.0, Srf::<f64>::flat(2)).unwrap();
        let ms = Image::filled(2, 8, 8, 0.5);
        let pan = Image::filled(1, 16, 16, 0.5);
        let ((ms_r, pan_r), target) = op.wald_pair(&ms, &pan).unwrap();
        assert_eq!(ms_r.dims(), (2, 4, 4));
        assert_eq!(pan_r.dims(), (1, 8, 8));
        assert_eq!(target, ms);
        assert!(ms_r.data().iter().all(|v| (v - 0.5).abs() < 1e-14));

        let id = PansharpeningOperator {
            blur: BlurDownsample::new(Kernel2D::delta(), 1).unwrap(),
            srf: Srf::<f64>::flat(2),
        };
        let ((ms_r, pan_r), _) = id.wald_pair(&ms, &pan).unwrap();
        assert_eq!(ms_r, ms);
        assert_eq!(pan_r, pan);
    }
}
