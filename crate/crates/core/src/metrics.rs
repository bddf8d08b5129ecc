//! Reference-based (PSNR, SSIM, ERGAS) and no-reference (QNR) quality metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::physics::PansharpeningOperator;
use crate::scalar::Scalar;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
/// QNR exponents on `1 - D_lambda` and `1 - D_s`.
pub const QNR_ALPHA: f64 = 1.0;
pub const QNR_BETA: f64 = 1.5;

/// `10 log10(peak^2 / MSE)`; `+inf` for identical images.
pub fn psnr<T: Scalar>(xhat: &Image<T>, x: &Image<T>, peak: f64) -> Result<f64> {
    let d = xhat.sub(x)?;
    let mse = d.norm_sq() / d.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

/// Normalized 1-D Gaussian taps of odd length `size`.
pub fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let r = (size / 2) as f64;
    let w: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - r;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Window side used for an `h x w` image: 11, or the largest odd size that fits.
pub fn ssim_window_size(h: usize, w: usize) -> usize {
    let m = h.min(w).min(SSIM_WINDOW);
    if m.is_multiple_of(2) {
        m - 1
    } else {
        m
    }
}

/// Separable Gaussian filter evaluated at valid positions only.
fn filter_valid(x: &[f64], h: usize, w: usize, g: &[f64]) -> (Vec<f64>, usize, usize) {
    let k = g.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut rows = vec![0.0; h * ow];
    for i in 0..h {
        for j in 0..ow {
            rows[i * ow + j] = (0..k).map(|t| g[t] * x[i * w + j + t]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for i in 0..oh {
        for j in 0..ow {
            out[i * ow + j] = (0..k).map(|t| g[t] * rows[(i + t) * ow + j]).sum();
        }
    }
    (out, oh, ow)
}

/// Mean local SSIM of two single-plane rasters (data range 1).
pub fn ssim_plane(a: &[f64], b: &[f64], h: usize, w: usize) -> Result<f64> {
    if a.len() != h * w || b.len() != h * w {
        return Err(Error::DimensionMismatch {
            expected: format!("{h}x{w}"),
            got: format!("{} and {} values", a.len(), b.len()),
        });
    }
    let size = ssim_window_size(h, w);
    if size == 0 {
        return Err(Error::InvalidParameter("image too small for SSIM".into()));
    }
    let g = gaussian_window(size, SSIM_SIGMA);
    let (c1, c2) = (SSIM_K1 * SSIM_K1, SSIM_K2 * SSIM_K2);
    let prod = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(x, y)| x * y).collect::<Vec<_>>();
    let (ma, oh, ow) = filter_valid(a, h, w, &g);
    let (mb, _, _) = filter_valid(b, h, w, &g);
    let (saa, _, _) = filter_valid(&prod(a, a), h, w, &g);
    let (sbb, _, _) = filter_valid(&prod(b, b), h, w, &g);
    let (sab, _, _) = filter_valid(&prod(a, b), h, w, &g);
    let mut total = 0.0;
    for i in 0..oh * ow {
        let (mx, my) = (ma[i], mb[i]);
        let vx = saa[i] - mx * mx;
        let vy = sbb[i] - my * my;
        let cxy = sab[i] - mx * my;
        total += ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
    }
    Ok(total / (oh * ow) as f64)
}

/// SSIM of two images, averaged over channels.
pub fn ssim<T: Scalar>(a: &Image<T>, b: &Image<T>) -> Result<f64> {
    a.same_dims(b)?;
    let (c, h, w) = a.dims();
    let mut acc = 0.0;
    for ch in 0..c {
        let pa: Vec<f64> = a.plane(ch).iter().map(|v| v.f64()).collect();
        let pb: Vec<f64> = b.plane(ch).iter().map(|v| v.f64()).collect();
        acc += ssim_plane(&pa, &pb, h, w)?;
    }
    Ok(acc / c as f64)
}

/// `(100 / j) sqrt(mean_c (RMSE_c / mean_c(ref))^2)`.
pub fn ergas<T: Scalar>(xhat: &Image<T>, reference: &Image<T>, ratio: f64) -> Result<f64> {
    xhat.same_dims(reference)?;
    let c = reference.channels();
    let mut acc = 0.0;
    for ch in 0..c {
        let r = reference.plane(ch);
        let mu = r.iter().map(|v| v.f64()).sum::<f64>() / r.len() as f64;
        if mu == 0.0 {
            return Err(Error::InvalidParameter(format!("ERGAS: reference channel {ch} has zero mean")));
        }
        let mse = xhat
            .plane(ch)
            .iter()
            .zip(r)
            .map(|(a, b)| (a.f64() - b.f64()).powi(2))
            .sum::<f64>()
            / r.len() as f64;
        acc += mse / (mu * mu);
    }
    Ok(100.0 / ratio * (acc / c as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Qnr {
    pub qnr: f64,
    pub d_lambda: f64,
    pub d_s: f64,
}

/// `(1 - D_lambda)^alpha (1 - D_s)^beta`, each factor clamped at zero.
pub fn qnr_from_distortions(d_lambda: f64, d_s: f64) -> f64 {
    (1.0 - d_lambda).max(0.0).powf(QNR_ALPHA) * (1.0 - d_s).max(0.0).powf(QNR_BETA)
}

fn plane64<T: Scalar>(img: &Image<T>, c: usize) -> Vec<f64> {
    img.plane(c).iter().map(|v| v.f64()).collect()
}

/// QNR with spectral distortion over ordered band pairs and spatial
/// distortion against the pan image and its degraded copy.
pub fn qnr<T: Scalar>(
    xhat: &Image<T>,
    y_ms: &Image<T>,
    y_pan: &Image<T>,
    op: &PansharpeningOperator<T>,
) -> Result<Qnr> {
    let (c, h, w) = xhat.dims();
    let (mc, mh, mw) = y_ms.dims();
    if mc != c || y_pan.dims() != (1, h, w) || mh * op.factor() != h || mw * op.factor() != w {
        return Err(Error::DimensionMismatch {
            expected: format!("x {c}x{h}x{w}, pan 1x{h}x{w}, ms {c}x{}x{}", h / op.factor(), w / op.factor()),
            got: format!("ms {:?}, pan {:?}", y_ms.dims(), y_pan.dims()),
        });
    }
    let xs: Vec<Vec<f64>> = (0..c).map(|k| plane64(xhat, k)).collect();
    let ms: Vec<Vec<f64>> = (0..c).map(|k| plane64(y_ms, k)).collect();
    let mut d_lambda = 0.0;
    if c > 1 {
        for a in 0..c {
            for b in 0..c {
                if a != b {
                    let q_hi = ssim_plane(&xs[b], &xs[a], h, w)?;
                    let q_lo = ssim_plane(&ms[b], &ms[a], mh, mw)?;
                    d_lambda += (q_hi - q_lo).abs();
                }
            }
        }
        d_lambda /= (c * (c - 1)) as f64;
    }
    let pan = plane64(y_pan, 0);
    let pan_lr = plane64(&op.blur.apply(y_pan)?, 0);
    let mut d_s = 0.0;
    for k in 0..c {
        let q_hi = ssim_plane(&xs[k], &pan, h, w)?;
        let q_lo = ssim_plane(&ms[k], &pan_lr, mh, mw)?;
        d_s += (q_hi - q_lo).abs();
    }
    d_s /= c as f64;
    Ok(Qnr {
        qnr: qnr_from_distortions(d_lambda, d_s),
        d_lambda,
        d_s,
    })
}

/// Per-image metrics; absent values are left empty in reports.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
    pub ergas: Option<f64>,
    pub qnr: Option<f64>,
    pub d_lambda: Option<f64>,
    pub d_s: Option<f64>,
}

impl MetricReport {
    pub const COLUMNS: [&'static str; 6] = ["psnr", "ssim", "ergas", "qnr", "d_lambda", "d_s"];

    pub fn values(&self) -> [Option<f64>; 6] {
        [self.psnr, self.ssim, self.ergas, self.qnr, self.d_lambda, self.d_s]
    }

    pub fn from_values(v: [Option<f64>; 6]) -> Self {
        Self {
            psnr: v[0],
            ssim: v[1],
            ergas: v[2],
            qnr: v[3],
            d_lambda: v[4],
            d_s: v[5],
        }
    }

    /// Column-wise mean over reports, skipping missing entries; infinite
    /// PSNR values propagate.
    pub fn mean(reports: &[MetricReport]) -> MetricReport {
        let mut out = [None; 6];
        for (k, slot) in out.iter_mut().enumerate() {
            let vals: Vec<f64> = reports.iter().filter_map(|r| r.values()[k]).collect();
            if !vals.is_empty() {
                *slot = Some(vals.iter().sum::<f64>() / vals.len() as f64);
            }
        }
        Self::from_values(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::Srf;

    fn pattern(c: usize, h: usize, w: usize) -> Image<f64> {
        Image::from_fn(c, h, w, |c, i, j| 0.5 + 0.4 * ((i * 3 + j * 7 + c * 5) as f64 * 0.37).sin())
    }

    #[test]
    fn psnr_examples() {
        let x = pattern(1, 8, 8);
        assert_eq!(psnr(&x, &x, 1.0).unwrap(), f64::INFINITY);
        let y = x.map(|v| v + 0.1);
        assert!((psnr(&y, &x, 1.0).unwrap() - 20.0).abs() < 1e-10);
    }

    #[test]
    fn ssim_examples() {
        let x = pattern(1, 16, 16);
        assert!((ssim(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        let y = x.map(|v| v * v);
        assert!((ssim(&x, &y).unwrap() - ssim(&y, &x).unwrap()).abs() < 1e-15);
        let cb = Image::from_fn(1, 16, 16, |_, i, j| ((i + j) % 2) as f64);
        assert!(ssim(&cb, &cb.map(|v| 1.0 - v)).unwrap() < 0.0);
        let w: f64 = gaussian_window(11, 1.5).iter().sum();
        assert!((w - 1.0).abs() < 1e-15);
        assert_eq!(ssim_window_size(8, 20), 7);
    }

    #[test]
    fn ergas_examples() {
        let r = Image::filled(1, 4, 4, 2.0);
        assert_eq!(ergas(&r, &r, 4.0).unwrap(), 0.0);
        let x = r.map(|v| v + 2.0 * 0.05);
        assert!((ergas(&x, &r, 4.0).unwrap() - 25.0 * 0.05).abs() < 1e-12);
        let a = pattern(3, 8, 8);
        let b = a.map(|v| v * 1.1 + 0.01);
        let e1 = ergas(&b, &a, 4.0).unwrap();
        let e2 = ergas(&b.scale(3.0), &a.scale(3.0), 4.0).unwrap();
        assert!((e1 - e2).abs() < 1e-12);
        assert!(ergas(&r, &Image::zeros(1, 4, 4), 4.0).is_err());
    }

    #[test]
    fn qnr_fixed_points() {
        assert_eq!(qnr_from_distortions(0.0, 0.0), 1.0);
        let op = PansharpeningOperator::new(2, 1.0, Srf::flat(2)).unwrap();
        let band = pattern(1, 16, 16);
        let x = Image::stack(&[band.clone(), band.clone()]).unwrap();
        let (ms, pan) = op.apply(&x).unwrap();
        let q = qnr(&x, &ms, &pan, &op).unwrap();
        assert!(q.d_lambda.abs() < 1e-12);
        assert!(q.qnr <= 1.0 && q.qnr >= 0.0);
    }

    #[test]
    fn report_mean_skips_missing() {
        let a = MetricReport {
            psnr: Some(10.0),
            qnr: Some(0.5),
            ..Default::default()
        };
        let b = MetricReport {
            psnr: Some(20.0),
            ..Default::default()
        };
        let m = MetricReport::mean(&[a, b]);
        assert_eq!(m.psnr, Some(15.0));
        assert_eq!(m.qnr, Some(0.5));
        assert_eq!(m.ssim, None);
    }
}
