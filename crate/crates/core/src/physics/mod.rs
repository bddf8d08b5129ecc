//! Forward operators `A` and noise `eta` in `y ~ eta(A(x))`.

mod inpainting;
mod noise;
mod pansharpen;

use std::sync::Arc;

use rand::Rng;

use crate::error::{dims_mismatch, Error, Result};
use crate::image::Image;
use crate::linear::LinearMap;
use crate::scalar::Scalar;

pub use inpainting::{inpaint_apply, random_mask, InpaintingOperator};
pub use noise::{apply_noise, NoiseModel};
pub use pansharpen::{
    blur_downsample, blur_downsample_adjoint, default_kernel_size, gaussian_mtf_kernel, srf_adjoint,
    srf_apply, BlurDownsample, Kernel2D, PansharpeningOperator, Srf,
};

/// A measurement split into rasters (one for inpainting, `{y_ms, y_pan}`
/// for pansharpening). Norms are taken per part and summed.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement<T> {
    pub parts: Vec<Image<T>>,
}

impl<T: Scalar> Measurement<T> {
    pub fn new(parts: Vec<Image<T>>) -> Self {
        Self { parts }
    }

    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    fn check(&self, other: &Measurement<T>) -> Result<()> {
        if self.parts.len() != other.parts.len() {
            return Err(dims_mismatch(self.parts.len(), other.parts.len()));
        }
        for (a, b) in self.parts.iter().zip(&other.parts) {
            a.same_dims(b)?;
        }
        Ok(())
    }

    pub fn dot(&self, other: &Measurement<T>) -> Result<f64> {
        self.check(other)?;
        let mut acc = 0.0;
        for (a, b) in self.parts.iter().zip(&other.parts) {
            acc += a.dot(b)?;
        }
        Ok(acc)
    }

    pub fn zip_map(&self, other: &Measurement<T>, f: impl Fn(T, T) -> T + Copy) -> Result<Self> {
        self.check(other)?;
        let parts = self
            .parts
            .iter()
            .zip(&other.parts)
            .map(|(a, b)| a.zip_map(b, f))
            .collect::<Result<_>>()?;
        Ok(Self { parts })
    }

    pub fn map(&self, f: impl Fn(T) -> T + Copy) -> Self {
        Self {
            parts: self.parts.iter().map(|p| p.map(f)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.parts.iter().all(Image::is_finite)
    }
}

/// Selects one output part of the pansharpening operator as a linear map.
struct PanPart<T> {
    op: Arc<PansharpeningOperator<T>>,
    ms: bool,
}

impl<T: Scalar> LinearMap<T> for PanPart<T> {
    fn name(&self) -> &'static str {
        if self.ms {
            "blur_downsample"
        } else {
            "srf"
        }
    }
    fn apply(&self, x: &Image<T>) -> Result<Image<T>> {
        if self.ms {
            self.op.blur.apply(x)
        } else {
            self.op.srf.apply(x)
        }
    }
    fn adjoint(&self, y: &Image<T>) -> Result<Image<T>> {
        if self.ms {
            self.op.blur.adjoint(y)
        } else {
            self.op.srf.adjoint(y)
        }
    }
}

/// The physics `A` of one measured tile.
#[derive(Clone)]
pub enum ForwardOperator<T: Scalar> {
    Inpainting(Arc<InpaintingOperator<T>>),
    Pansharpening(Arc<PansharpeningOperator<T>>),
}

impl<T: Scalar> std::fmt::Debug for ForwardOperator<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ForwardOperator::Inpainting(op) => {
                write!(f, "Inpainting(kept={:.3})", op.kept_fraction())
            }
            ForwardOperator::Pansharpening(op) => write!(
                f,
                "Pansharpening(j={}, kernel={}, bands={})",
                op.factor(),
                op.blur.kernel().size(),
                op.channels()
            ),
        }
    }
}

impl<T: Scalar> ForwardOperator<T> {
    pub fn inpainting(op: InpaintingOperator<T>) -> Self {
        ForwardOperator::Inpainting(Arc::new(op))
    }

    pub fn pansharpening(op: PansharpeningOperator<T>) -> Self {
        ForwardOperator::Pansharpening(Arc::new(op))
    }

    pub fn num_parts(&self) -> usize {
        match self {
            ForwardOperator::Inpainting(_) => 1,
            ForwardOperator::Pansharpening(_) => 2,
        }
    }

    /// One linear map per measurement part.
    pub fn part_maps(&self) -> Vec<Arc<dyn LinearMap<T>>> {
        match self {
            ForwardOperator::Inpainting(op) => vec![op.clone() as Arc<dyn LinearMap<T>>],
            ForwardOperator::Pansharpening(op) => vec![
                Arc::new(PanPart {
                    op: op.clone(),
                    ms: true,
                }),
                Arc::new(PanPart {
                    op: op.clone(),
                    ms: false,
                }),
            ],
        }
    }

    pub fn apply(&self, x: &Image<T>) -> Result<Measurement<T>> {
        match self {
            ForwardOperator::Inpainting(op) => Ok(Measurement::new(vec![op.apply(x)?])),
            ForwardOperator::Pansharpening(op) => {
                let (ms, pan) = op.apply(x)?;
                Ok(Measurement::new(vec![ms, pan]))
            }
        }
    }

    pub fn adjoint(&self, y: &Measurement<T>) -> Result<Image<T>> {
        if y.len() != self.num_parts() {
            return Err(dims_mismatch(self.num_parts(), y.len()));
        }
        match self {
            ForwardOperator::Inpainting(op) => op.apply(&y.parts[0]),
            ForwardOperator::Pansharpening(op) => op.adjoint(&y.parts[0], &y.parts[1]),
        }
    }

    /// Number of genuinely observed scalars in `part` of a measurement with
    /// the given channel count; masked-out entries of an inpainting raster
    /// are not observations.
    pub fn measured_count(&self, part: usize, dims: (usize, usize, usize)) -> usize {
        match self {
            ForwardOperator::Inpainting(op) => op.kept_count() * dims.0,
            ForwardOperator::Pansharpening(_) => {
                debug_assert!(part < 2);
                dims.0 * dims.1 * dims.2
            }
        }
    }

    /// Restricts a measurement-space vector to the observed entries.
    pub fn project_measurement(&self, part: usize, v: &Image<T>) -> Result<Image<T>> {
        match self {
            ForwardOperator::Inpainting(op) => op.apply(v),
            ForwardOperator::Pansharpening(_) => {
                debug_assert!(part < 2);
                Ok(v.clone())
            }
        }
    }

    /// `eta(A x)`, with inpainting noise kept on the observed pixels only.
    pub fn measure<R: Rng + ?Sized>(
        &self,
        x: &Image<T>,
        noise: &NoiseModel,
        rng: &mut R,
    ) -> Result<Measurement<T>> {
        let clean = self.apply(x)?;
        let mut parts = Vec::with_capacity(clean.len());
        for (i, z) in clean.parts.iter().enumerate() {
            let y = apply_noise(noise, z, rng)?;
            parts.push(self.project_measurement(i, &y)?);
        }
        Ok(Measurement::new(parts))
    }
}

/// Component of `v` in the nullspace of `A`: `v - A^T (A A^T)^+ A v`, with
/// the normal equations solved by conjugate gradients.
pub fn nullspace_component<T: Scalar>(
    op: &ForwardOperator<T>,
    v: &Image<T>,
    max_iter: usize,
    tol: f64,
) -> Result<Image<T>> {
    let b = op.apply(v)?;
    let gram = |z: &Measurement<T>| -> Result<Measurement<T>> { op.apply(&op.adjoint(z)?) };
    let mut z = b.map(|_| T::zero());
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rr = r.dot(&r)?;
    let stop = tol * tol * rr.max(1e-300);
    for _ in 0..max_iter {
        if rr <= stop {
            break;
        }
        let gp = gram(&p)?;
        let denom = p.dot(&gp)?;
        if denom <= 0.0 {
            break;
        }
        let alpha = T::c(rr / denom);
        z = z.zip_map(&p, |a, b| a + alpha * b)?;
        r = r.zip_map(&gp, |a, b| a - alpha * b)?;
        let rr_new = r.dot(&r)?;
        let beta = T::c(rr_new / rr);
        p = r.zip_map(&p, |a, b| a + beta * b)?;
        rr = rr_new;
    }
    if !z.is_finite() {
        return Err(Error::NonFinite("nullspace projection".into()));
    }
    v.sub(&op.adjoint(&z)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pansharpening_has_nullspace() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let op = ForwardOperator::pansharpening(
            PansharpeningOperator::new(4, 1.5, Srf::<f64>::flat(3)).unwrap(),
        );
        let x1 = Image::from_fn(3, 16, 16, |_, _, _| rng.random::<f64>());
        let noise = Image::from_fn(3, 16, 16, |_, _, _| rng.random::<f64>() - 0.5);
        let n = nullspace_component(&op, &noise, 500, 1e-13).unwrap();
        assert!(n.norm_sq() > 1.0);
        let x2 = x1.add(&n).unwrap();
        let (y1, y2) = (op.apply(&x1).unwrap(), op.apply(&x2).unwrap());
        for (a, b) in y1.parts.iter().zip(&y2.parts) {
            assert!(a.sub(b).unwrap().max_abs() < 1e-8);
        }
    }

    #[test]
    fn inpainting_noise_stays_on_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let op = ForwardOperator::inpainting(random_mask::<f64, _>(0.6, 12, 12, &mut rng).unwrap());
        let x = Image::filled(2, 12, 12, 0.5);
        let y = op
            .measure(&x, &NoiseModel::Gaussian { sigma: 0.1 }, &mut rng)
            .unwrap();
        let ForwardOperator::Inpainting(mask) = &op else { unreachable!() };
        for c in 0..2 {
            for (v, m) in y.parts[0].plane(c).iter().zip(mask.mask().data()) {
                if *m == 0.0 {
                    assert_eq!(*v, 0.0);
                }
            }
        }
        assert_eq!(op.measured_count(0, (2, 12, 12)), 2 * mask.kept_count());
    }
}
