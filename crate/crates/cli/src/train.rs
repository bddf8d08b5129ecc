//! Training loop: Adam over the train split, one CSV row per epoch.

use std::fmt::Write as _;
use std::path::PathBuf;

use pei_core::autodiff::{save_checkpoint, Adam, Params, Tensor};
use pei_core::losses::{objective, Batch, Graph, LossTerm};
use pei_core::models::ReconNet;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::ExperimentConfig;
use crate::error::{io_at, CliError, CliResult};
use crate::manifest::{Sample, Split};
use crate::simulate::load_manifest;

pub const LOG_FILE: &str = "log.csv";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";
pub const BEST_CHECKPOINT: &str = "best.ckpt";

const MODEL_STREAM: u64 = 1;
const TRAIN_STREAM: u64 = 2;

/// Mean loss values over one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub total: f64,
    pub terms: Vec<(LossTerm, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub records: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub final_checkpoint: PathBuf,
    pub best_checkpoint: PathBuf,
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// The freshly initialized network for this config.
pub fn init_model(cfg: &ExperimentConfig) -> CliResult<ReconNet<f32>> {
    Ok(ReconNet::new(cfg.model_config(), &mut stream_rng(cfg.seed, MODEL_STREAM))?)
}

fn accumulate(sum: &mut Option<Vec<Tensor<f32>>>, grads: Vec<Tensor<f32>>) {
    match sum {
        None => *sum = Some(grads),
        Some(s) => s.iter_mut().zip(&grads).for_each(|(a, g)| a.add_assign(g)),
    }
}

/// Trains `net` in place on `samples`, calling `on_epoch` after every epoch.
///
/// The epoch-mean total loss picks the best parameters, which are returned
/// alongside the per-epoch records.
pub fn fit(
    cfg: &ExperimentConfig,
    net: &mut ReconNet<f32>,
    samples: &[Sample],
    mut on_epoch: impl FnMut(&EpochRecord, &Params<f32>) -> CliResult<()>,
) -> CliResult<(Vec<EpochRecord>, Params<f32>, Option<usize>)> {
    if samples.is_empty() {
        return Err(CliError::Config("train split is empty".into()));
    }
    let terms = cfg.loss.parsed_terms()?;
    let mut adam = Adam::new(cfg.optim.adam(), net.params());
    let mut rng = stream_rng(cfg.seed, TRAIN_STREAM);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut best = (f64::INFINITY, net.params().clone(), None);
    let mut records = Vec::with_capacity(cfg.optim.epochs);
    for epoch in 0..cfg.optim.epochs {
        order.shuffle(&mut rng);
        let lr = adam.lr();
        let mut sums = vec![0.0; terms.len()];
        let mut total = 0.0;
        for batch in order.chunks(cfg.optim.batch_size) {
            let mut grad_sum = None;
            for &i in batch {
                let s = &samples[i];
                let mut g = Graph::new(net, &s.op);
                let obj = objective(
                    &mut g,
                    &cfg.loss,
                    &Batch {
                        y: &s.y,
                        reference: s.reference.as_ref(),
                        noise: &cfg.physics.noise,
                    },
                    &mut rng,
                )
                .map_err(|e| numeric(e, epoch, &s.id))?;
                let value = g.value(obj.total)?;
                if !value.is_finite() {
                    return Err(CliError::Numeric(format!("epoch {epoch}, tile {}: total loss is {value}", s.id)));
                }
                total += value;
                for (k, (_, v)) in obj.terms.iter().enumerate() {
                    sums[k] += v;
                }
                let grads = g.tape.backward(obj.total).map_err(|e| numeric(e, epoch, &s.id))?;
                accumulate(&mut grad_sum, grads.collect(&g.params)?);
            }
            let scale = 1.0 / batch.len() as f32;
            let grads: Vec<Tensor<f32>> = grad_sum.unwrap_or_default().iter().map(|t| t.map(|v| v * scale)).collect();
            adam.step(net.params_mut(), &grads)?;
        }
        if (epoch + 1) % cfg.optim.decay_every_epochs == 0 {
            adam.decay();
        }
        let n = samples.len() as f64;
        let rec = EpochRecord {
            epoch,
            lr,
            total: total / n,
            terms: terms.iter().zip(&sums).map(|(&t, &s)| (t, s / n)).collect(),
        };
        if rec.total < best.0 {
            best = (rec.total, net.params().clone(), Some(epoch));
        }
        on_epoch(&rec, net.params())?;
        records.push(rec);
    }
    Ok((records, best.1, best.2))
}

fn numeric(e: pei_core::Error, epoch: usize, id: &str) -> CliError {
    match e {
        pei_core::Error::NonFinite(what) => CliError::Numeric(format!("epoch {epoch}, tile {id}: non-finite {what}")),
        other => other.into(),
    }
}

pub fn log_header(terms: &[LossTerm]) -> String {
    let mut s = String::from("epoch,lr,total");
    for t in terms {
        let _ = write!(s, ",{}", t.name());
    }
    s.push('\n');
    s
}

pub fn log_row(rec: &EpochRecord) -> String {
    let mut s = format!("{},{:.6e},{:.8e}", rec.epoch, rec.lr, rec.total);
    for (_, v) in &rec.terms {
        let _ = write!(s, ",{v:.8e}");
    }
    s.push('\n');
    s
}

/// Trains on the simulated train split and writes `log.csv`,
/// `final.ckpt` and `best.ckpt` under `cfg.train_dir()`.
pub fn train(cfg: &ExperimentConfig, mut progress: impl FnMut(&EpochRecord)) -> CliResult<TrainSummary> {
    let (manifest, data_dir) = load_manifest(cfg)?;
    let samples = manifest.load_split(&data_dir, Split::Train)?;
    let out = cfg.train_dir();
    std::fs::create_dir_all(&out).map_err(|e| io_at(&out, e))?;
    std::fs::write(out.join("config.toml"), cfg.to_toml()).map_err(|e| io_at(&out, e))?;
    let mut net = init_model(cfg)?;
    let log_path = out.join(LOG_FILE);
    let mut log = log_header(&cfg.loss.parsed_terms()?);
    std::fs::write(&log_path, &log).map_err(|e| io_at(&log_path, e))?;
    let (records, best, best_epoch) = fit(cfg, &mut net, &samples, |rec, _| {
        log.push_str(&log_row(rec));
        std::fs::write(&log_path, &log).map_err(|e| io_at(&log_path, e))?;
        progress(rec);
        Ok(())
    })?;
    let final_checkpoint = out.join(FINAL_CHECKPOINT);
    let best_checkpoint = out.join(BEST_CHECKPOINT);
    save_checkpoint(net.params(), &final_checkpoint)?;
    save_checkpoint(&best, &best_checkpoint)?;
    Ok(TrainSummary {
        records,
        best_epoch,
        final_checkpoint,
        best_checkpoint,
    })
}
