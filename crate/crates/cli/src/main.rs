use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pei_cli::config::ExperimentConfig;
use pei_cli::evaluate::{evaluate, Weights};
use pei_cli::preview::{preview_transforms, PreviewOptions};
use pei_cli::report::report;
use pei_cli::simulate::simulate;
use pei_cli::train::{train, BEST_CHECKPOINT, FINAL_CHECKPOINT};
use pei_cli::CliResult;

#[derive(Parser)]
#[command(name = "pei", version, about = "Perspective-equivariant imaging experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the global seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> CliResult<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.out_dir = o.clone();
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Builds measurements, masks and the train/test manifest.
    Simulate(Common),
    /// Trains on the simulated train split.
    Train {
        #[command(flatten)]
        common: Common,
        /// Print every epoch instead of every tenth.
        #[arg(long)]
        verbose: bool,
    },
    /// Scores a checkpoint on the test split.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Checkpoint to evaluate; `<out>/train/final.ckpt` by default.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Evaluate the best-loss checkpoint instead of the final one.
        #[arg(long, conflicts_with = "checkpoint")]
        best: bool,
        /// Evaluate the all-zero network (linear baseline).
        #[arg(long, conflicts_with_all = ["checkpoint", "best"])]
        baseline: bool,
    },
    /// Renders a grid of sampled transforms of one image.
    PreviewTransforms {
        /// Image to warp (PNG or TIFF).
        #[arg(long)]
        image: PathBuf,
        /// Output PNG.
        #[arg(long)]
        out: PathBuf,
        /// Takes `alpha` and bounds from the `[loss]` section when given.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5)]
        samples: usize,
    },
    /// Aggregates the mean metrics of several runs.
    Report {
        /// Run directories or metrics CSV files.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Checks a config file and prints it with defaults filled in.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate(c) => {
            let cfg = c.load()?;
            let m = simulate(&cfg)?;
            println!("wrote {} tiles to {}", m.tiles.len(), cfg.data_dir().display());
        }
        Command::Train { common, verbose } => {
            let cfg = common.load()?;
            let s = train(&cfg, |r| {
                if verbose || r.epoch % 10 == 0 || r.epoch + 1 == cfg.optim.epochs {
                    let terms: Vec<String> = r.terms.iter().map(|(t, v)| format!("{}={v:.5e}", t.name())).collect();
                    eprintln!("epoch {:4} lr {:.3e} loss {:.5e} [{}]", r.epoch, r.lr, r.total, terms.join(" "));
                }
            })?;
            println!("final checkpoint {}", s.final_checkpoint.display());
            println!("best checkpoint {}", s.best_checkpoint.display());
        }
        Command::Evaluate {
            common,
            checkpoint,
            best,
            baseline,
        } => {
            let cfg = common.load()?;
            let weights = if baseline {
                Weights::Baseline
            } else {
                let name = if best { BEST_CHECKPOINT } else { FINAL_CHECKPOINT };
                Weights::Checkpoint(checkpoint.unwrap_or_else(|| cfg.train_dir().join(name)))
            };
            let out = if baseline { cfg.out_dir.join("eval_baseline") } else { cfg.eval_dir() };
            let s = evaluate(&cfg, &weights, &out)?;
            let m = s.mean;
            println!(
                "{} test tiles: psnr {:?} ssim {:?} ergas {:?} qnr {:?}",
                s.rows.len(),
                m.psnr,
                m.ssim,
                m.ergas,
                m.qnr
            );
            println!("metrics {}", s.metrics_path.display());
        }
        Command::PreviewTransforms {
            image,
            out,
            config,
            seed,
            samples,
        } => {
            let mut opts = PreviewOptions {
                seed,
                samples,
                ..Default::default()
            };
            if let Some(path) = config {
                let cfg = ExperimentConfig::load(&path)?;
                opts.alpha = cfg.loss.alpha;
                opts.bounds = cfg.loss.bounds;
            }
            preview_transforms(&image, &out, &opts)?;
            println!("wrote {}", out.display());
        }
        Command::Report { runs, out } => {
            let rows = report(&runs, &out)?;
            println!("{} runs -> {}", rows.len(), out.display());
        }
        Command::Validate { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            print!("{}", cfg.to_toml());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
