//! Grids of warped samples for eyeballing the transformation groups.

use std::path::Path;

use pei_core::projective::{
    camera_rotation_homography, sample_transform, EulerAngles, GroupKind, GroupSpec, TransformBounds,
};
use pei_core::warp::WarpTable;
use pei_core::Image;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::CliResult;
use crate::io;

#[derive(Debug, Clone, PartialEq)]
pub struct PreviewOptions {
    pub alpha: f64,
    pub bounds: TransformBounds,
    /// Random samples per group kind.
    pub samples: usize,
    /// Number of `theta_y` values in the keystone sweep row.
    pub sweep_steps: usize,
    /// The sweep covers `[-sweep_deg, sweep_deg]`.
    pub sweep_deg: f64,
    pub seed: u64,
}

impl Default for PreviewOptions {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            bounds: TransformBounds::default(),
            samples: 5,
            sweep_steps: 7,
            sweep_deg: 20.0,
            seed: 0,
        }
    }
}

const GAP: usize = 2;

/// `theta_y` values of the sweep row, in degrees.
pub fn sweep_angles(opts: &PreviewOptions) -> Vec<f64> {
    let n = opts.sweep_steps;
    if n <= 1 {
        return vec![0.0; n];
    }
    (0..n).map(|k| -opts.sweep_deg + 2.0 * opts.sweep_deg * k as f64 / (n - 1) as f64).collect()
}

/// Rows: one per group kind, then the `theta_y` sweep. The first cell of
/// every row is the untransformed image.
pub fn preview_cells(img: &Image<f32>, opts: &PreviewOptions) -> CliResult<Vec<Vec<Image<f32>>>> {
    let (_, h, w) = img.dims();
    let mut rows = Vec::new();
    for (k, kind) in GroupKind::ALL.iter().enumerate() {
        let spec = GroupSpec {
            bounds: opts.bounds,
            ..GroupSpec::new(*kind, opts.alpha, h, w)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(k as u64);
        let mut row = vec![img.clone()];
        for _ in 0..opts.samples {
            let hm = sample_transform::<f32, _>(&spec, &mut rng);
            row.push(WarpTable::from_homography(&hm, h, w)?.apply(img)?);
        }
        rows.push(row);
    }
    let k = GroupSpec::new(GroupKind::PanTilt, opts.alpha, h, w).base_intrinsics::<f32>();
    let mut sweep = vec![img.clone()];
    for deg in sweep_angles(opts) {
        let hm = camera_rotation_homography(&k, &EulerAngles::new(0.0, deg.to_radians() as f32, 0.0));
        sweep.push(WarpTable::from_homography(&hm, h, w)?.apply(img)?);
    }
    rows.push(sweep);
    Ok(rows)
}

/// Packs cells into one image with white gutters.
pub fn assemble(rows: &[Vec<Image<f32>>]) -> CliResult<Image<f32>> {
    let first = &rows[0][0];
    let (c, h, w) = first.dims();
    let ncols = rows.iter().map(|r| r.len()).max().unwrap_or(1);
    let gh = rows.len() * (h + GAP) - GAP;
    let gw = ncols * (w + GAP) - GAP;
    let mut grid = Image::filled(c, gh, gw, 1.0f32);
    for (r, row) in rows.iter().enumerate() {
        for (col, cell) in row.iter().enumerate() {
            first.same_dims(cell)?;
            for ch in 0..c {
                for i in 0..h {
                    for j in 0..w {
                        grid.set(ch, r * (h + GAP) + i, col * (w + GAP) + j, cell.get(ch, i, j));
                    }
                }
            }
        }
    }
    Ok(grid)
}

/// Reads `image`, renders the preview grid and writes it as PNG to `out`.
pub fn preview_transforms(image: &Path, out: &Path, opts: &PreviewOptions) -> CliResult<Image<f32>> {
    let img = io::read_image(image)?;
    let grid = assemble(&preview_cells(&img, opts)?)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    io::write_png(out, &grid)?;
    Ok(grid)
}
