use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nowcast::data::{Dataset, Split};
use nowcast::forecaster::{ForecastManifest, FORECAST_MANIFEST};
use nowcast::trainer::read_metrics;

const TINY: &str = include_str!("../configs/tiny.toml");

struct Workspace {
    _tmp: tempfile::TempDir,
    config: PathBuf,
    out: PathBuf,
}

fn workspace() -> Workspace {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("tiny.toml");
    fs::write(&config, TINY).unwrap();
    let out = tmp.path().join("out");
    Workspace { _tmp: tmp, config, out }
}

fn nowcast(ws: &Workspace, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nowcast"))
        .args(args)
        .arg("--config")
        .arg(&ws.config)
        .arg("--out")
        .arg(&ws.out)
        .output()
        .unwrap()
}

fn ok(ws: &Workspace, args: &[&str]) -> String {
    let o = nowcast(ws, args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.clone(), fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

#[test]
fn gen_data_is_byte_identical_on_rerun_and_guards_output() {
    let ws = workspace();
    ok(&ws, &["gen-data"]);
    let data = ws.out.join("data");
    let first = files(&data);
    let ds = Dataset::open(&data).unwrap();
    assert_eq!(ds.manifest.sequences.len(), 6);
    assert!(!ds.samples(Split::Train).unwrap().is_empty());
    assert!(!ds.samples(Split::Test).unwrap().is_empty());

    let refused = nowcast(&ws, &["gen-data"]);
    assert_eq!(code(&refused), 1);
    assert!(String::from_utf8_lossy(&refused.stderr).contains("--force"));
    ok(&ws, &["gen-data", "--force"]);
    assert_eq!(files(&data), first);

    let other = nowcast(&ws, &["gen-data", "--force", "--seed", "4"]);
    assert!(other.status.success());
    assert_ne!(files(&data), first);
}

#[test]
fn zero_sequences_give_an_empty_dataset() {
    let ws = workspace();
    fs::write(&ws.config, TINY.replace("sequences = 6", "sequences = 0")).unwrap();
    ok(&ws, &["gen-data"]);
    let ds = Dataset::open(ws.out.join("data")).unwrap();
    assert!(ds.manifest.sequences.is_empty());
    assert!(ds.samples(Split::Train).unwrap().is_empty());
    let train = nowcast(&ws, &["train"]);
    assert_eq!(code(&train), 1);
}

#[test]
fn train_forecast_evaluate_plot() {
    let ws = workspace();
    ok(&ws, &["gen-data"]);
    ok(&ws, &["train", "--model", "svfp"]);
    ok(&ws, &["train", "--model", "convlstm"]);
    let run = ws.out.join("runs/svfp");
    assert_eq!(read_metrics(&run.join("metrics.jsonl")).unwrap().len(), 2);
    assert!(run.join("best.ckpt").exists() && run.join("run_config.toml").exists());

    // Resume with a larger budget continues the epoch count.
    fs::write(&ws.config, TINY.replace("max_epochs = 2", "max_epochs = 3")).unwrap();
    ok(&ws, &["train", "--model", "svfp", "--resume"]);
    let epochs: Vec<usize> = read_metrics(&run.join("metrics.jsonl")).unwrap().iter().map(|m| m.epoch).collect();
    assert_eq!(epochs, vec![1, 2, 3]);
    assert_eq!(code(&nowcast(&ws, &["train", "--model", "svfp"])), 1);

    ok(&ws, &["forecast", "--model", "svfp", "--members", "10"]);
    let fc = ws.out.join("forecasts/svfp/sample_0000");
    let m: ForecastManifest = toml::from_str(&fs::read_to_string(fc.join(FORECAST_MANIFEST)).unwrap()).unwrap();
    assert_eq!(m.members.len(), 10);
    assert_eq!(m.lead_frames, 3);
    assert!(fc.join("mean").join("manifest.toml").exists());
    for e in &m.members {
        let s = Dataset::open(fc.join(&e.dir)).unwrap().samples(Split::Forecast).unwrap();
        assert_eq!(s[0].targets.len(), 3);
    }

    ok(&ws, &["forecast", "--model", "convlstm", "--lead", "20"]);
    let fc = ws.out.join("forecasts/convlstm/sample_0000");
    let m: ForecastManifest = toml::from_str(&fs::read_to_string(fc.join(FORECAST_MANIFEST)).unwrap()).unwrap();
    assert_eq!((m.members.len(), m.lead_frames), (1, 20));
    assert_eq!(m.members[0].seed, None);
    assert_eq!(code(&nowcast(&ws, &["forecast", "--model", "convlstm", "--lead", "20"])), 1);
    assert_eq!(code(&nowcast(&ws, &["forecast", "--sample", "999"])), 1);

    let stdout = ok(&ws, &["evaluate"]);
    assert!(stdout.contains("svfp") && stdout.contains("convlstm"));
    let eval = ws.out.join("eval");
    for f in ["scores.jsonl", "ssim_samples.jsonl", "ssim_curve.png", "strip_00.png", "strip_02.png"] {
        assert!(fs::metadata(eval.join(f)).unwrap().len() > 0, "{f}");
    }
    let curve = fs::read(eval.join("ssim_curve.png")).unwrap();
    fs::remove_file(eval.join("ssim_curve.png")).unwrap();
    ok(&ws, &["plot"]);
    assert_eq!(fs::read(eval.join("ssim_curve.png")).unwrap(), curve);
}

#[test]
fn exit_codes() {
    let ws = workspace();
    // Usage errors.
    assert_eq!(code(&nowcast(&ws, &["bogus"])), 1);
    assert_eq!(code(&nowcast(&ws, &["train", "--model", "gru"])), 1);
    let help = Command::new(env!("CARGO_BIN_EXE_nowcast")).arg("--help").output().unwrap();
    assert_eq!(code(&help), 0);
    // Configuration errors.
    fs::write(&ws.config, format!("{TINY}\n[extra]\nx = 1\n")).unwrap();
    assert_eq!(code(&nowcast(&ws, &["gen-data"])), 1);
    fs::write(&ws.config, TINY.replace("downsample = 2", "downsample = 1")).unwrap();
    assert_eq!(code(&nowcast(&ws, &["gen-data"])), 1);
    fs::write(&ws.config, TINY).unwrap();
    let missing = Command::new(env!("CARGO_BIN_EXE_nowcast"))
        .args(["gen-data", "--config", "/nonexistent/x.toml", "--out"])
        .arg(&ws.out)
        .output()
        .unwrap();
    assert_eq!(code(&missing), 1);
    // Data errors.
    ok(&ws, &["gen-data"]);
    let seq = ws.out.join("data/seq_00000.bin");
    let mut bytes = fs::read(&seq).unwrap();
    bytes.truncate(bytes.len() / 2);
    fs::write(&seq, bytes).unwrap();
    assert_eq!(code(&nowcast(&ws, &["train"])), 2);
    fs::write(ws.out.join("data/manifest.toml"), "format_version = [").unwrap();
    assert_eq!(code(&nowcast(&ws, &["train"])), 2);
    // A missing dataset is a usage error: gen-data has not been run.
    fs::remove_dir_all(ws.out.join("data")).unwrap();
    assert_eq!(code(&nowcast(&ws, &["train"])), 1);
    // Numerical failure: a huge learning rate blows the loss up.
    ok(&ws, &["gen-data"]);
    fs::write(&ws.config, TINY.replace("batch_size = 4", "batch_size = 4\nlearning_rate = 1e300\nclip_norm = 1e300")).unwrap();
    let o = nowcast(&ws, &["train", "--force"]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}
