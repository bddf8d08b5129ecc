//! Test-split evaluation: metrics CSV and reconstruction previews.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use pei_core::autodiff::load_checkpoint;
use pei_core::metrics::{ergas, psnr, qnr, ssim, MetricReport};
use pei_core::models::{ReconNet, Task};
use pei_core::physics::ForwardOperator;

use crate::config::{ExperimentConfig, MetricKind};
use crate::error::{io_at, CliError, CliResult};
use crate::io;
use crate::manifest::{Sample, Split};
use crate::simulate::load_manifest;

pub const METRICS_FILE: &str = "metrics.csv";

/// Which weights to evaluate.
#[derive(Debug, Clone)]
pub enum Weights {
    Checkpoint(PathBuf),
    /// All-zero network, i.e. the linear baseline.
    Baseline,
}

pub fn load_model(cfg: &ExperimentConfig, weights: &Weights) -> CliResult<ReconNet<f32>> {
    match weights {
        Weights::Baseline => Ok(ReconNet::zeroed(cfg.model_config())?),
        Weights::Checkpoint(path) => {
            if !path.exists() {
                return Err(CliError::Config(format!("checkpoint {} does not exist", path.display())));
            }
            let params = load_checkpoint(path)?;
            let mut net = ReconNet::zeroed(cfg.model_config())?;
            net.load_params(params).map_err(|e| {
                CliError::Config(format!("checkpoint {} does not match the model config: {e}", path.display()))
            })?;
            Ok(net)
        }
    }
}

/// Metrics of one reconstruction against its measurement and reference.
pub fn score(cfg: &ExperimentConfig, s: &Sample, xhat: &pei_core::Image<f32>) -> CliResult<MetricReport> {
    let want = |m: MetricKind| cfg.eval.metrics.contains(&m);
    let mut r = MetricReport::default();
    if let Some(x) = &s.reference {
        if want(MetricKind::Psnr) {
            r.psnr = Some(psnr(xhat, x, cfg.eval.peak)?);
        }
        if want(MetricKind::Ssim) {
            r.ssim = Some(ssim(xhat, x)?);
        }
        if want(MetricKind::Ergas) {
            let ratio = match cfg.task {
                Task::Inpainting => 1.0,
                Task::Pansharpening => cfg.physics.factor as f64,
            };
            r.ergas = ergas(xhat, x, ratio).ok();
        }
    }
    if let (true, ForwardOperator::Pansharpening(op)) = (want(MetricKind::Qnr), &s.op) {
        let q = qnr(xhat, &s.y.parts[0], &s.y.parts[1], op)?;
        r.qnr = Some(q.qnr);
        r.d_lambda = Some(q.d_lambda);
        r.d_s = Some(q.d_s);
    }
    Ok(r)
}

pub fn fmt_value(v: Option<f64>) -> String {
    match v {
        None => String::new(),
        Some(x) if x == f64::INFINITY => "inf".into(),
        Some(x) if x == f64::NEG_INFINITY => "-inf".into(),
        Some(x) => format!("{x:.6}"),
    }
}

pub fn metrics_csv(rows: &[(String, MetricReport)]) -> String {
    let mut s = String::from("image_id");
    for c in MetricReport::COLUMNS {
        let _ = write!(s, ",{c}");
    }
    s.push('\n');
    let reports: Vec<MetricReport> = rows.iter().map(|(_, r)| *r).collect();
    let mean = ("mean".to_string(), MetricReport::mean(&reports));
    for (id, r) in rows.iter().chain(std::iter::once(&mean)) {
        s.push_str(id);
        for v in r.values() {
            let _ = write!(s, ",{}", fmt_value(v));
        }
        s.push('\n');
    }
    s
}

#[derive(Debug, Clone)]
pub struct EvalSummary {
    pub rows: Vec<(String, MetricReport)>,
    pub mean: MetricReport,
    pub metrics_path: PathBuf,
}

/// Evaluates on the test split, writing `metrics.csv` and PNG previews to `out`.
pub fn evaluate(cfg: &ExperimentConfig, weights: &Weights, out: &Path) -> CliResult<EvalSummary> {
    let net = load_model(cfg, weights)?;
    let (manifest, data_dir) = load_manifest(cfg)?;
    let samples = manifest.load_split(&data_dir, Split::Test)?;
    if samples.is_empty() {
        return Err(CliError::Config("test split is empty".into()));
    }
    std::fs::create_dir_all(out).map_err(|e| io_at(out, e))?;
    let img_dir = out.join("images");
    if cfg.eval.write_images {
        std::fs::create_dir_all(&img_dir).map_err(|e| io_at(&img_dir, e))?;
    }
    let mut rows = Vec::with_capacity(samples.len());
    for s in &samples {
        let xhat = net.reconstruct(&s.y)?;
        if !xhat.is_finite() {
            return Err(CliError::Numeric(format!("reconstruction of {} is not finite", s.id)));
        }
        rows.push((s.id.clone(), score(cfg, s, &xhat)?));
        if cfg.eval.write_images {
            io::write_png(&img_dir.join(format!("{}.png", s.id)), &xhat)?;
        }
    }
    let metrics_path = out.join(METRICS_FILE);
    std::fs::write(&metrics_path, metrics_csv(&rows)).map_err(|e| io_at(&metrics_path, e))?;
    let reports: Vec<MetricReport> = rows.iter().map(|(_, r)| *r).collect();
    Ok(EvalSummary {
        mean: MetricReport::mean(&reports),
        rows,
        metrics_path,
    })
}
