//! Dataset simulation: tiles, measurements, masks and the train/test split.

use std::path::Path;

use pei_core::models::Task;
use pei_core::physics::{random_mask, ForwardOperator, PansharpeningOperator};
use pei_core::synth::urban_scene;
use pei_core::Image;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::ExperimentConfig;
use crate::error::{io_at, CliError, CliResult};
use crate::io;
use crate::manifest::{DatasetManifest, Split, TileEntry};

/// Stable 64-bit FNV-1a hash, used to derive per-tile RNG streams.
pub fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// RNG for one tile, determined by the global seed and the tile id.
pub fn tile_rng(seed: u64, id: &str) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a(id));
    rng
}

/// Cuts non-overlapping `tile x tile` crops out of `img` in raster order.
pub fn tiles_of(img: &Image<f32>, tile: usize, channels: usize) -> CliResult<Vec<Image<f32>>> {
    let (c, h, w) = img.dims();
    if c < channels {
        return Err(CliError::Config(format!("image has {c} channels, {channels} configured")));
    }
    if h < tile || w < tile {
        return Err(CliError::Config(format!("image {h}x{w} is smaller than the {tile}x{tile} tile")));
    }
    let mut out = Vec::new();
    for ty in 0..h / tile {
        for tx in 0..w / tile {
            out.push(Image::from_fn(channels, tile, tile, |k, i, j| img.get(k, ty * tile + i, tx * tile + j)));
        }
    }
    Ok(out)
}

fn source_tiles(cfg: &ExperimentConfig) -> CliResult<Vec<(String, Option<Image<f32>>)>> {
    let d = &cfg.data;
    match cfg.source_dir() {
        None => Ok((0..d.count).map(|i| (format!("s{i:04}"), None)).collect()),
        Some(dir) => {
            let mut files: Vec<_> = std::fs::read_dir(&dir)
                .map_err(|e| io_at(&dir, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file() && io::is_supported(p))
                .collect();
            files.sort();
            if files.is_empty() {
                return Err(io_at(&dir, "no PNG or TIFF images found"));
            }
            let mut out = Vec::new();
            for f in files {
                let img = io::read_image(&f)?;
                let stem = f.file_stem().and_then(|s| s.to_str()).unwrap_or("img").to_string();
                let tiles = tiles_of(&img, d.tile, d.channels).map_err(|e| io_at(&f, e))?;
                for (k, t) in tiles.into_iter().enumerate() {
                    out.push((format!("{stem}_t{k:03}"), Some(t)));
                }
            }
            Ok(out)
        }
    }
}

/// Shuffles `n` indices with `seed` and marks the first `round(fraction * n)`
/// (at least one, at most `n - 1`) as training tiles.
pub fn split_labels(n: usize, fraction: f64, seed: u64) -> CliResult<Vec<Split>> {
    if n < 2 {
        return Err(CliError::Config(format!("need at least 2 tiles to split, got {n}")));
    }
    let n_train = ((fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    order.shuffle(&mut rng);
    let mut labels = vec![Split::Test; n];
    for &i in &order[..n_train] {
        labels[i] = Split::Train;
    }
    Ok(labels)
}

/// Writes tiles, measurements and `manifest.json` under `cfg.data_dir()`.
pub fn simulate(cfg: &ExperimentConfig) -> CliResult<DatasetManifest> {
    let dir = cfg.data_dir();
    std::fs::create_dir_all(&dir).map_err(|e| io_at(&dir, e))?;
    let d = &cfg.data;
    let sources = source_tiles(cfg)?;
    let labels = split_labels(sources.len(), d.train_fraction, cfg.split_seed())?;
    let pan_op = match cfg.task {
        Task::Pansharpening => Some(ForwardOperator::pansharpening(PansharpeningOperator::new(
            cfg.physics.factor,
            cfg.physics.mtf_sigma(),
            cfg.physics.srf(d.channels)?,
        )?)),
        Task::Inpainting => None,
    };
    let mut tiles = Vec::with_capacity(sources.len());
    for ((id, src), split) in sources.into_iter().zip(labels) {
        let mut rng = tile_rng(cfg.seed, &id);
        let x = match src {
            Some(x) => x,
            None => urban_scene::<f32, _>(d.channels, d.tile, d.tile, &d.scene, &mut rng)?,
        };
        let (op, mask) = match &pan_op {
            Some(op) => (op.clone(), None),
            None => {
                let m = random_mask::<f32, _>(cfg.physics.masked_fraction, d.tile, d.tile, &mut rng)?;
                let mask = m.mask().clone();
                (ForwardOperator::inpainting(m), Some(mask))
            }
        };
        let y = op.measure(&x, &cfg.physics.noise, &mut rng)?;
        let names: &[&str] = match cfg.task {
            Task::Inpainting => &["y"],
            Task::Pansharpening => &["ms", "pan"],
        };
        let mut measurement = Vec::new();
        for (part, name) in y.parts.iter().zip(names) {
            let f = format!("{id}_{name}.tiff");
            io::write_tiff(&dir.join(&f), part)?;
            measurement.push(f);
        }
        let mask = match mask {
            Some(m) => {
                let f = format!("{id}_mask.png");
                io::write_mask(&dir.join(&f), &m)?;
                Some(f)
            }
            None => None,
        };
        let reference = if d.keep_reference {
            let f = format!("{id}_ref.tiff");
            io::write_tiff(&dir.join(&f), &x)?;
            Some(f)
        } else {
            None
        };
        tiles.push(TileEntry {
            id,
            split,
            measurement,
            mask,
            reference,
        });
    }
    let manifest = DatasetManifest {
        task: cfg.task,
        channels: d.channels,
        tile: d.tile,
        physics: cfg.physics.clone(),
        tiles,
    };
    manifest.validate()?;
    manifest.save(&dir)?;
    Ok(manifest)
}

/// Loads the manifest written by [`simulate`] for this config.
pub fn load_manifest(cfg: &ExperimentConfig) -> CliResult<(DatasetManifest, std::path::PathBuf)> {
    let dir = cfg.data_dir();
    let m = DatasetManifest::load(&dir)?;
    check_manifest(cfg, &m, &dir)?;
    Ok((m, dir))
}

fn check_manifest(cfg: &ExperimentConfig, m: &DatasetManifest, dir: &Path) -> CliResult<()> {
    if m.task != cfg.task || m.channels != cfg.data.channels {
        return Err(CliError::Config(format!(
            "{}: dataset is {} with {} channels, config asks for {} with {}",
            dir.display(),
            m.task,
            m.channels,
            cfg.task,
            cfg.data.channels
        )));
    }
    if m.task == Task::Pansharpening && m.physics.factor != cfg.physics.factor {
        return Err(CliError::Config("dataset and config disagree on the resolution ratio".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_is_disjoint_and_sized() {
        let l = split_labels(25, 0.8, 3).unwrap();
        assert_eq!(l.iter().filter(|s| **s == Split::Train).count(), 20);
        assert_eq!(l, split_labels(25, 0.8, 3).unwrap());
        assert_ne!(l, split_labels(25, 0.8, 4).unwrap());
        assert_eq!(split_labels(2, 0.99, 0).unwrap().iter().filter(|s| **s == Split::Test).count(), 1);
        assert!(split_labels(1, 0.5, 0).is_err());
    }

    #[test]
    fn tiling_covers_whole_tiles_only() {
        let img = Image::from_fn(4, 70, 140, |c, i, j| (c * 10000 + i * 200 + j) as f32);
        let t = tiles_of(&img, 64, 3).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t[1].get(2, 5, 0), img.get(2, 5, 64));
        assert!(tiles_of(&img, 80, 3).is_err());
        assert!(tiles_of(&img, 64, 5).is_err());
    }

    #[test]
    fn tile_streams_differ() {
        use rand::Rng;
        let a: u64 = tile_rng(1, "a").random();
        let b: u64 = tile_rng(1, "b").random();
        let a2: u64 = tile_rng(1, "a").random();
        assert_ne!(a, b);
        assert_eq!(a, a2);
    }
}
