//! Procedural multispectral "urban" scenes for simulation and tests.
//!
//! Scenes are block layouts of roofs, roads and vegetation with window
//! grids, seen through a random camera tilt so straight edges converge.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::image::Image;
use crate::physics::{BlurDownsample, Kernel2D};
use crate::projective::{camera_rotation_homography, CameraIntrinsics, EulerAngles};
use crate::scalar::Scalar;
use crate::warp::WarpTable;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub buildings: usize,
    /// Largest camera pan/tilt in degrees applied to the flat layout.
    pub max_tilt_deg: f64,
    pub focal: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            buildings: 14,
            max_tilt_deg: 12.0,
            focal: 100.0,
        }
    }
}

fn spectrum<R: Rng + ?Sized>(channels: usize, base: f64, rng: &mut R) -> Vec<f64> {
    let slope = rng.random_range(-0.25..0.25);
    (0..channels)
        .map(|c| {
            let t = if channels > 1 { c as f64 / (channels - 1) as f64 - 0.5 } else { 0.0 };
            (base * (1.0 + slope * t) + rng.random_range(-0.03..0.03)).clamp(0.05, 0.95)
        })
        .collect()
}

/// Renders one `channels x height x width` scene with values in `[0.05, 0.95]`.
pub fn urban_scene<T: Scalar, R: Rng + ?Sized>(
    channels: usize,
    height: usize,
    width: usize,
    cfg: &SceneConfig,
    rng: &mut R,
) -> Result<Image<T>> {
    let (hf, wf) = (height as f64, width as f64);
    let mut canvas = vec![0.0f64; channels * height * width];
    let paint = |canvas: &mut Vec<f64>, y0: f64, x0: f64, y1: f64, x1: f64, s: &[f64]| {
        let (ya, yb) = (y0.max(0.0) as usize, (y1.min(hf) as usize).min(height));
        let (xa, xb) = (x0.max(0.0) as usize, (x1.min(wf) as usize).min(width));
        for (c, &v) in s.iter().enumerate() {
            for i in ya..yb {
                for j in xa..xb {
                    canvas[(c * height + i) * width + j] = v;
                }
            }
        }
    };

    // ground with low-frequency shading
    let ground = spectrum(channels, rng.random_range(0.3..0.45), rng);
    let (fy, fx) = (rng.random_range(0.5..2.0), rng.random_range(0.5..2.0));
    for c in 0..channels {
        for i in 0..height {
            for j in 0..width {
                let shade = 0.06 * ((i as f64 / hf * fy * 6.28).sin() + (j as f64 / wf * fx * 6.28).cos());
                canvas[(c * height + i) * width + j] = ground[c] + shade;
            }
        }
    }

    // roads
    let road = spectrum(channels, rng.random_range(0.15..0.25), rng);
    for _ in 0..rng.random_range(1..=2) {
        let p = rng.random_range(0.15..0.85);
        let t = rng.random_range(0.04..0.08);
        paint(&mut canvas, p * hf, 0.0, (p + t) * hf, wf, &road);
        let q = rng.random_range(0.15..0.85);
        paint(&mut canvas, 0.0, q * wf, hf, (q + t) * wf, &road);
    }

    // vegetation patches
    let green = spectrum(channels, 0.35, rng);
    for _ in 0..3 {
        let (cy, cx) = (rng.random_range(0.0..hf), rng.random_range(0.0..wf));
        let r = rng.random_range(0.04..0.1) * hf.min(wf);
        for c in 0..channels {
            let v = green[c] * if c + 1 == channels { 1.6 } else { 0.7 };
            for i in 0..height {
                for j in 0..width {
                    let d = ((i as f64 - cy).powi(2) + (j as f64 - cx).powi(2)).sqrt();
                    if d < r {
                        canvas[(c * height + i) * width + j] = v.clamp(0.05, 0.95);
                    }
                }
            }
        }
    }

    // buildings with window grids
    for _ in 0..cfg.buildings {
        let bh = rng.random_range(0.08..0.25) * hf;
        let bw = rng.random_range(0.08..0.25) * wf;
        let y0 = rng.random_range(-0.05..0.95) * hf;
        let x0 = rng.random_range(-0.05..0.95) * wf;
        let roof = spectrum(channels, rng.random_range(0.45..0.85), rng);
        paint(&mut canvas, y0, x0, y0 + bh, x0 + bw, &roof);
        let glass = spectrum(channels, rng.random_range(0.1..0.3), rng);
        let pitch = rng.random_range(4.0..7.0);
        let size = pitch * rng.random_range(0.35..0.6);
        let mut y = y0 + pitch * 0.5;
        while y + size < y0 + bh {
            let mut x = x0 + pitch * 0.5;
            while x + size < x0 + bw {
                paint(&mut canvas, y, x, y + size, x + size, &glass);
                x += pitch;
            }
            y += pitch;
        }
    }

    let flat: Image<T> = Image::from_vec(channels, height, width, canvas.into_iter().map(T::c).collect())?;

    let tilt = cfg.max_tilt_deg.to_radians();
    let angles = EulerAngles::new(
        T::c(rng.random_range(-tilt..=tilt)),
        T::c(rng.random_range(-tilt..=tilt)),
        T::c(rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)),
    );
    let k = CameraIntrinsics {
        f: T::c(cfg.focal),
        ..CameraIntrinsics::centred(height, width)
    };
    let h = camera_rotation_homography(&k, &angles);
    let warped = WarpTable::from_homography(&h, height, width)?.apply(&flat)?;

    let smooth = Kernel2D::new(3, [1.0, 2.0, 1.0, 2.0, 4.0, 2.0, 1.0, 2.0, 1.0].map(|v| T::c(v / 16.0)).to_vec())?;
    let out = BlurDownsample::new(smooth, 1)?.apply(&warped)?;
    Ok(out.clamp(T::c(0.05), T::c(0.95)))
}
