use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::process::Command;

use pei_cli::evaluate::{evaluate, Weights};
use pei_cli::io::{read_image, read_mask, write_png};
use pei_cli::manifest::Split;
use pei_cli::simulate::simulate;
use pei_cli::train::{init_model, train, FINAL_CHECKPOINT, LOG_FILE};
use pei_cli::{CliError, ExperimentConfig};
use pei_core::autodiff::{load_checkpoint, save_checkpoint};
use pei_core::models::ReconNet;
use pei_core::Image;

fn config(task: &str, terms: &str, out: &Path, epochs: usize) -> ExperimentConfig {
    let text = format!(
        r#"
task = "{task}"
seed = 7
out_dir = "{}"

[data]
source = "synthetic"
count = 6
channels = 4
tile = 16
train_fraction = 0.5

[physics]
factor = 4

[model]
hidden = 3
blocks = 1
highpass_size = 5

[loss]
terms = "{terms}"

[optim]
epochs = {epochs}
"#,
        out.display()
    );
    ExperimentConfig::from_toml(&text).unwrap()
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn inpainting_simulation_writes_masks_with_expected_density() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config("inpainting", "mc", dir.path(), 2);
    cfg.data.count = 10;
    cfg.data.tile = 32;
    cfg.data.channels = 3;
    let m = simulate(&cfg).unwrap();
    assert_eq!(m.tiles.len(), 10);
    let mut kept = 0.0;
    for t in &m.tiles {
        assert_eq!(t.measurement.len(), 1);
        let mask = read_mask(&cfg.data_dir().join(t.mask.as_ref().unwrap())).unwrap();
        kept += mask.data().iter().sum::<f32>() as f64 / mask.len() as f64;
    }
    assert!((kept / 10.0 - 0.3).abs() < 0.03, "kept {}", kept / 10.0);
}

#[test]
fn pansharpening_simulation_has_the_right_shapes() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config("pansharpening", "mc+tv", dir.path(), 2);
    cfg.data.tile = 32;
    let m = simulate(&cfg).unwrap();
    for t in &m.tiles {
        let ms = read_image(&cfg.data_dir().join(&t.measurement[0])).unwrap();
        let pan = read_image(&cfg.data_dir().join(&t.measurement[1])).unwrap();
        assert_eq!((ms.channels(), ms.height(), ms.width()), (4, 8, 8));
        assert_eq!((pan.channels(), pan.height(), pan.width()), (1, 32, 32));
    }
}

#[test]
fn simulation_is_byte_identical_and_split_disjoint() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ma = simulate(&config("pansharpening", "mc+tv", a.path(), 2)).unwrap();
    simulate(&config("pansharpening", "mc+tv", b.path(), 2)).unwrap();
    assert_eq!(files(&a.path().join("data")), files(&b.path().join("data")));
    let train: BTreeSet<_> = ma.ids(Split::Train).into_iter().collect();
    let test: BTreeSet<_> = ma.ids(Split::Test).into_iter().collect();
    assert!(train.is_disjoint(&test));
    assert_eq!(train.len() + test.len(), ma.tiles.len());
    assert!(!train.is_empty() && !test.is_empty());
}

#[test]
fn zero_epochs_saves_the_initialisation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("inpainting", "mc", dir.path(), 0);
    simulate(&cfg).unwrap();
    let s = train(&cfg, |_| {}).unwrap();
    assert!(s.records.is_empty());
    let saved = load_checkpoint::<f32>(&s.final_checkpoint).unwrap();
    assert_eq!(&saved, init_model(&cfg).unwrap().params());
}

#[test]
fn log_has_one_row_per_epoch_and_per_term_columns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("pansharpening", "mc+tv+ei", dir.path(), 2);
    simulate(&cfg).unwrap();
    train(&cfg, |_| {}).unwrap();
    let log = fs::read_to_string(cfg.train_dir().join(LOG_FILE)).unwrap();
    let lines: Vec<&str> = log.lines().collect();
    assert_eq!(lines.len(), 3);
    for col in ["epoch", "lr", "total", "mc", "tv", "ei"] {
        assert!(lines[0].split(',').any(|c| c == col), "missing {col} in {}", lines[0]);
    }
}

#[test]
fn zero_weight_model_matches_linear_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("pansharpening", "mc+tv", dir.path(), 2);
    simulate(&cfg).unwrap();
    let ckpt = dir.path().join("zero.ckpt");
    save_checkpoint(ReconNet::<f32>::zeroed(cfg.model_config()).unwrap().params(), &ckpt).unwrap();
    let z = evaluate(&cfg, &Weights::Checkpoint(ckpt), &dir.path().join("z")).unwrap();
    let b = evaluate(&cfg, &Weights::Baseline, &dir.path().join("b")).unwrap();
    assert_eq!(fs::read(z.metrics_path).unwrap(), fs::read(&b.metrics_path).unwrap());
    let csv = fs::read_to_string(&b.metrics_path).unwrap();
    assert_eq!(csv.lines().count(), 1 + b.rows.len() + 1);
    assert!(csv.lines().last().unwrap().starts_with("mean,"));
    assert!(b.mean.qnr.is_some());
    for (id, _) in &b.rows {
        assert!(dir.path().join("b/images").join(format!("{id}.png")).is_file());
    }
}

#[test]
fn full_pipeline_is_deterministic() {
    let run = |dir: &Path| {
        let cfg = config("inpainting", "mc+ei", dir, 2);
        simulate(&cfg).unwrap();
        train(&cfg, |_| {}).unwrap();
        let e = evaluate(&cfg, &Weights::Checkpoint(cfg.train_dir().join(FINAL_CHECKPOINT)), &cfg.eval_dir()).unwrap();
        (
            fs::read(e.metrics_path).unwrap(),
            fs::read(cfg.train_dir().join(LOG_FILE)).unwrap(),
            fs::read(cfg.train_dir().join(FINAL_CHECKPOINT)).unwrap(),
        )
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert_eq!(run(a.path()), run(b.path()));
}

#[test]
fn mismatched_checkpoint_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("inpainting", "mc", dir.path(), 2);
    simulate(&cfg).unwrap();
    let mut other = cfg.clone();
    other.model.hidden = 5;
    let ckpt = dir.path().join("other.ckpt");
    save_checkpoint(init_model(&other).unwrap().params(), &ckpt).unwrap();
    let err = evaluate(&cfg, &Weights::Checkpoint(ckpt), &dir.path().join("e")).unwrap_err();
    assert!(matches!(err, CliError::Config(_)), "{err}");
    assert_eq!(err.exit_code(), 2);
}

fn pei(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_pei")).args(args).output().unwrap()
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.toml");
    fs::write(&good, config("inpainting", "mc", dir.path(), 2).to_toml()).unwrap();
    assert_eq!(pei(&["validate", "--config", good.to_str().unwrap()]).status.code(), Some(0));

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, fs::read_to_string(&good).unwrap() + "\nbogus = 1\n").unwrap();
    assert_eq!(pei(&["validate", "--config", bad.to_str().unwrap()]).status.code(), Some(2));

    let fraction = dir.path().join("fraction.toml");
    let text = fs::read_to_string(&good).unwrap().replace("train_fraction = 0.5", "train_fraction = 1.5");
    fs::write(&fraction, text).unwrap();
    assert_eq!(pei(&["validate", "--config", fraction.to_str().unwrap()]).status.code(), Some(2));

    assert_eq!(pei(&["no-such-command"]).status.code(), Some(2));
    let missing = dir.path().join("missing.toml");
    assert_ne!(pei(&["validate", "--config", missing.to_str().unwrap()]).status.code(), Some(0));
}

#[test]
fn binary_end_to_end_with_report() {
    let dir = tempfile::tempdir().unwrap();
    let mut runs = Vec::new();
    for terms in ["mc+tv", "mc+tv+ei"] {
        let out = dir.path().join(terms.replace('+', "_"));
        let cfg_path = dir.path().join(format!("{}.toml", terms.replace('+', "_")));
        fs::write(&cfg_path, config("pansharpening", terms, &out, 1).to_toml()).unwrap();
        let c = cfg_path.to_str().unwrap();
        for cmd in ["simulate", "train", "evaluate"] {
            let o = pei(&[cmd, "--config", c]);
            assert!(o.status.success(), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        }
        runs.push(out);
    }
    let report_dir = dir.path().join("report");
    let mut args = vec!["report"];
    args.extend(runs.iter().map(|p| p.to_str().unwrap()));
    args.extend(["--out", report_dir.to_str().unwrap()]);
    assert!(pei(&args).status.success());
    let csv = fs::read_to_string(report_dir.join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(report_dir.join("report.md").is_file());
}

#[test]
fn preview_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("src.png");
    let img = Image::from_fn(3, 24, 24, |c, i, j| ((i / 4 + j / 4 + c) % 2) as f32);
    write_png(&src, &img).unwrap();
    let render = |name: &str| {
        let out = dir.path().join(name);
        let o = pei(&["preview-transforms", "--image", src.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "3"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        fs::read(out).unwrap()
    };
    assert_eq!(render("a.png"), render("b.png"));
}
