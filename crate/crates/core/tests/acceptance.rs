//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Set `NOWCAST_ACCEPTANCE_DIR` to keep the desk experiment outputs.

mod common;

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use common::{brute_force_ssim, gradient_check, random_frame, random_samples, tiny_baseline, tiny_svfp};
use nowcast::cli::{
    cmd_evaluate, cmd_gen_data, cmd_train, data_dir, eval_dir, load_trained, run_dir, Options,
};
use nowcast::config::RunConfig;
use nowcast::data::{rain_rate_to_reflectivity, reflectivity_to_rain_rate, Dataset, RainFrame, Sample, Split};
use nowcast::evaluation::{ssim, CURVE_FILE, SAMPLE_SCORES_FILE, SCORES_FILE};
use nowcast::forecaster::forecast;
use nowcast::model::{BaselineConfig, ConvLstmBaseline, GaussianParams, Model, ModelConfig, ModelKind, Svfp};
use nowcast::objective::kl_diag_gaussians;
use nowcast::seeds::derive;
use nowcast::trainer::{
    read_metrics, Batch, EpochMetrics, LossSteps, TrainConfig, Trainer, BEST_CHECKPOINT, LAST_CHECKPOINT,
    METRICS_FILE,
};
use nowcast_autograd::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

type Check = std::result::Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn fail<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn config_file(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn load(name: &str) -> RunConfig {
    RunConfig::load(&config_file(name)).unwrap().resolve().unwrap()
}

fn kernels() -> Check {
    // Z-R roundtrip over 1e-3..300 mm/h and -20..75 dBZ.
    let mut worst: f64 = 0.0;
    for i in 0..=2000 {
        let r = 10f64.powf(-3.0 + 5.477 * i as f64 / 2000.0);
        let back = reflectivity_to_rain_rate(rain_rate_to_reflectivity(r).map_err(fail)?);
        worst = worst.max((back - r).abs() / r);
        let dbz = -20.0 + 95.0 * i as f64 / 2000.0;
        let back = rain_rate_to_reflectivity(reflectivity_to_rain_rate(dbz)).map_err(fail)?;
        worst = worst.max((back - dbz).abs() / dbz.abs().max(1.0));
    }
    ensure(worst <= 1e-9, || format!("Z-R roundtrip relative error {worst:e}"))?;

    // KL closed form against Monte Carlo of log q(z) - log p(z), z ~ q.
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst_z: f64 = 0.0;
    for case in 0..100 {
        let mut draw = |lo: f64, hi: f64| (0..5).map(|_| rng.random_range(lo..hi)).collect::<Vec<f64>>();
        let (mq, lq, mp, lp) = (draw(-2.0, 2.0), draw(-2.0, 1.0), draw(-2.0, 2.0), draw(-2.0, 1.0));
        let q = GaussianParams::from_vecs(mq.clone(), lq.clone()).map_err(fail)?;
        let p = GaussianParams::from_vecs(mp.clone(), lp.clone()).map_err(fail)?;
        let kl = kl_diag_gaussians(&q, &p).map_err(fail)?;
        let mut mc = ChaCha8Rng::seed_from_u64(1000 + case);
        let n = 1_000_000;
        let (mut sum, mut sum2) = (0.0, 0.0);
        for _ in 0..n {
            let mut v = 0.0;
            for d in 0..5 {
                let e: f64 = StandardNormal.sample(&mut mc);
                let z = mq[d] + (0.5 * lq[d]).exp() * e;
                v += -0.5 * lq[d] - 0.5 * e * e + 0.5 * lp[d] + 0.5 * (z - mp[d]).powi(2) * (-lp[d]).exp();
            }
            sum += v;
            sum2 += v * v;
        }
        let mean = sum / n as f64;
        let se = ((sum2 / n as f64 - mean * mean) * n as f64 / (n - 1) as f64 / n as f64).sqrt();
        let z = (mean - kl).abs() / se;
        ensure(z <= 4.0, || format!("case {case}: KL {kl} vs Monte Carlo {mean} ({z:.2} SE)"))?;
        worst_z = worst_z.max(z);
    }

    // SSIM against a direct 2-D evaluation.
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut worst_ssim: f64 = 0.0;
    for _ in 0..100 {
        let (h, w) = (11 + rng.random_range(0..12), 11 + rng.random_range(0..12));
        let a = random_frame(&mut rng, h, w);
        let noise = random_frame(&mut rng, h, w);
        let mix = rng.random::<f64>();
        let v = a.normalized().unwrap().iter().zip(noise.normalized().unwrap()).map(|(x, n)| mix * x + (1.0 - mix) * n);
        let b = RainFrame::from_normalized(h, w, v.collect()).map_err(fail)?;
        let want = brute_force_ssim(a.normalized().unwrap(), b.normalized().unwrap(), h, w);
        worst_ssim = worst_ssim.max((ssim(&a, &b).map_err(fail)? - want).abs());
    }
    ensure(worst_ssim <= 1e-6, || format!("SSIM differs from reference by {worst_ssim:e}"))?;
    Ok(format!("Z-R {worst:.1e}, KL worst {worst_z:.2} SE, SSIM {worst_ssim:.1e}"))
}

fn gradients() -> Check {
    let mut details = Vec::new();
    for (beta, steps) in [(1e-7, LossSteps::Targets), (0.5, LossSteps::All)] {
        let mut cfg = tiny_svfp(2, 1);
        cfg.beta = beta;
        let model = Model::Svfp(Svfp::new(cfg, 21).map_err(fail)?);
        let t = Trainer::new(model, TrainConfig { loss_steps: steps, ..TrainConfig::default() }).map_err(fail)?;
        let r = gradient_check(&t, &random_samples(2, 16, 2, 1, 22), 150, 1e-3, 1e-6, 23);
        ensure(r.checked >= 100 && r.worst <= 1e-4, || {
            format!("svfp beta {beta}: {} probes, worst {:e}", r.checked, r.worst)
        })?;
        details.push(format!("svfp beta {beta:e} {:.1e} on {}", r.worst, r.checked));
    }
    let model = Model::Baseline(ConvLstmBaseline::new(tiny_baseline(8, 2, 1), 31).map_err(fail)?);
    let t = Trainer::new(model, TrainConfig { loss_steps: LossSteps::All, ..TrainConfig::default() }).map_err(fail)?;
    let r = gradient_check(&t, &random_samples(2, 8, 2, 1, 32), 150, 1e-3, 1e-6, 33);
    ensure(r.checked >= 100 && r.worst <= 1e-4, || {
        format!("baseline: {} probes, worst {:e}", r.checked, r.worst)
    })?;
    details.push(format!("baseline {:.1e} on {}", r.worst, r.checked));
    Ok(details.join(", "))
}

fn architecture() -> Check {
    let m = Svfp::new(ModelConfig::default(), 0).map_err(fail)?;
    let padded = RainFrame::from_normalized(160, 112, vec![0.5; 160 * 112]).map_err(fail)?;
    let f = m.encode(&[padded]).map_err(fail)?;
    ensure(f.shape() == [128, 1, 10, 7], || format!("encoder output {:?}", f.shape()))?;
    ensure(m.config.latent_dim == 70, || format!("latent {}", m.config.latent_dim))?;
    let mut s = m.zero_state(1);
    for head in [nowcast::model::Head::Prior, nowcast::model::Head::Inference] {
        let x = RainFrame::from_normalized(160, 110, vec![0.5; 160 * 110]).map_err(fail)?;
        let g = m.gaussian_head_step(&[x], head, &mut s).map_err(fail)?;
        ensure(g.dim() == 70, || format!("{head:?} head emits {} dims", g.dim()))?;
    }
    ensure(
        m.predictor.len() == 2 && m.predictor.iter().all(|c| c.filters == 128 && c.kernel() == 3),
        || "predictor is not 2 x ConvLSTM(128, 3x3)".into(),
    )?;
    let y = m
        .predict_step(&f, &Tensor::zeros(&[70, 1]), &mut m.zero_state(1))
        .map_err(fail)?;
    ensure(y.shape() == [128, 1, 10, 7], || format!("predictor output {:?}", y.shape()))?;
    let b = ConvLstmBaseline::new(BaselineConfig::default(), 0).map_err(fail)?;
    ensure(
        b.layers.len() == 2 && b.layers.iter().all(|l| l.filters == 64 && l.kernel() == 3),
        || "baseline is not 2 x ConvLSTM(64, 3x3)".into(),
    )?;
    Ok("encoder 128x10x7, latent 70, predictor 2x128 k3, baseline 2x64 k3".into())
}

fn options(out: &Path) -> Options {
    Options {
        out: out.to_path_buf(),
        ..Options::default()
    }
}

fn desk(out: &Path) -> Check {
    let start = Instant::now();
    let cfg = load("desk.toml");
    let ds = cmd_gen_data(&cfg, out, true).map_err(fail)?;
    let train = ds.normalized_samples(Split::Train).map_err(fail)?;
    let test = ds.normalized_samples(Split::Test).map_err(fail)?;
    let n_val = cfg.train.validation_count(train.len()).map_err(fail)?;
    let val: Vec<&Sample> = train[train.len() - n_val..].iter().collect();
    let zeros = Batch::new(&val).map_err(fail)?.zeros_loss(cfg.train.loss_steps);
    let mut lines = vec![format!("{} train / {} test samples, zeros oracle {zeros:.3}", train.len(), test.len())];

    // (a)
    for kind in [ModelKind::Svfp, ModelKind::Convlstm] {
        let fit = cmd_train(&cfg, out, kind, true, false).map_err(fail)?;
        ensure(fit.stopped_early, || format!("{kind} hit max_epochs without early stopping"))?;
        ensure(fit.best_val_loss < zeros, || {
            format!("(a) {kind} validation loss {} does not beat zeros {zeros}", fit.best_val_loss)
        })?;
        lines.push(format!(
            "(a) {kind} val {:.3} at epoch {} of {}",
            fit.best_val_loss,
            fit.best_epoch,
            fit.metrics.len()
        ));
    }

    // (b) and (d)
    let evals = cmd_evaluate(&cfg, &options(out)).map_err(fail)?;
    for e in &evals {
        ensure(e.leads.len() == 10 && e.leads.iter().all(|s| s.mean.is_finite()), || {
            format!("(b) {}: {} leads, some non-finite", e.model, e.leads.len())
        })?;
        let (first, last) = (e.lead(1).unwrap().mean, e.lead(10).unwrap().mean);
        ensure(last <= first, || format!("(b) {} lead-10 SSIM {last} above lead-1 {first}", e.model))?;
        lines.push(format!("(b) {} SSIM lead 1 {first:.3}, lead 10 {last:.3}", e.model));
    }
    let dir = eval_dir(&cfg, out);
    let curve = fs::metadata(dir.join(CURVE_FILE)).map(|m| m.len()).unwrap_or(0);
    let strips = fs::read_dir(&dir)
        .map_err(fail)?
        .filter_map(|e| e.ok())
        .filter(|e| {
            let name = e.file_name().to_string_lossy().to_string();
            name.starts_with("strip_") && name.ends_with(".png") && e.metadata().map(|m| m.len() > 0).unwrap_or(false)
        })
        .count();
    ensure(curve > 0 && strips >= 3, || format!("(d) curve {curve} bytes, {strips} strips"))?;
    lines.push(format!("(d) overlay figure and {strips} strips"));

    // (c)
    let (svfp, _) = load_trained(&cfg, out, ModelKind::Svfp).map_err(fail)?;
    let (baseline, _) = load_trained(&cfg, out, ModelKind::Convlstm).map_err(fail)?;
    let (mut rainy, mut spread) = (0usize, 0usize);
    for (i, s) in test.iter().enumerate() {
        let f = forecast(&svfp, &s.inputs, 10, 10, derive(cfg.eval.seed, 1, i as u64)).map_err(fail)?;
        for t in 0..10 {
            let sd = f.spread(t).map_err(fail)?;
            for (truth, sd) in s.targets[t].normalized().map_err(fail)?.iter().zip(sd) {
                if *truth > 0.0 {
                    rainy += 1;
                    spread += usize::from(sd > 0.0);
                }
            }
        }
    }
    let share = spread as f64 / rainy.max(1) as f64;
    ensure(rainy > 0 && share >= 0.01, || format!("(c) svfp spread on {spread} of {rainy} rainy pixels"))?;
    for (i, s) in test.iter().enumerate().take(10) {
        let seed = derive(cfg.eval.seed, 1, i as u64);
        let f = forecast(&baseline, &s.inputs, 10, 10, seed).map_err(fail)?;
        let again = forecast(&baseline, &s.inputs, 10, 10, seed + 1).map_err(fail)?;
        ensure(f.members == again.members, || "(c) baseline forecasts depend on the seed".into())?;
        for t in 0..10 {
            ensure(f.spread(t).map_err(fail)?.iter().all(|v| *v == 0.0), || "(c) baseline spread not zero".into())?;
        }
    }
    lines.push(format!("(c) svfp spread > 0 on {:.1}% of rainy pixels, baseline 0", 100.0 * share));

    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 7200.0, || format!("took {secs:.0} s"))?;
    lines.push(format!("{:.1} min", secs / 60.0));
    Ok(lines.join("; "))
}

fn strip_time(m: Vec<EpochMetrics>) -> Vec<EpochMetrics> {
    m.into_iter().map(|e| EpochMetrics { wall_time_s: 0.0, ..e }).collect()
}

/// gen-data, train both models and evaluate with the tiny config.
fn end_to_end(cfg: &RunConfig, out: &Path) -> std::result::Result<(), String> {
    cmd_gen_data(cfg, out, false).map_err(fail)?;
    for kind in [ModelKind::Svfp, ModelKind::Convlstm] {
        cmd_train(cfg, out, kind, false, false).map_err(fail)?;
    }
    cmd_evaluate(cfg, &options(out)).map_err(fail)?;
    Ok(())
}

fn reproducibility() -> Check {
    let tmp = tempfile::tempdir().map_err(fail)?;
    let cfg = load("tiny.toml");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    end_to_end(&cfg, &a)?;
    end_to_end(&cfg, &b)?;
    for kind in [ModelKind::Svfp, ModelKind::Convlstm] {
        let metrics = |root: &Path| read_metrics(&run_dir(&cfg, root, kind).join(METRICS_FILE)).map(strip_time);
        ensure(metrics(&a).map_err(fail)? == metrics(&b).map_err(fail)?, || {
            format!("{kind} metrics logs differ")
        })?;
    }
    for file in [SCORES_FILE, SAMPLE_SCORES_FILE] {
        let read = |root: &Path| fs::read(eval_dir(&cfg, root).join(file));
        ensure(read(&a).map_err(fail)? == read(&b).map_err(fail)?, || format!("{file} differs"))?;
    }

    // Stop after one epoch, resume to the configured budget.
    let c = tmp.path().join("c");
    let mut short = cfg.clone();
    short.train.max_epochs = 1;
    cmd_gen_data(&cfg, &c, false).map_err(fail)?;
    for kind in [ModelKind::Svfp, ModelKind::Convlstm] {
        cmd_train(&short, &c, kind, false, false).map_err(fail)?;
        cmd_train(&cfg, &c, kind, false, true).map_err(fail)?;
        let metrics = |root: &Path| read_metrics(&run_dir(&cfg, root, kind).join(METRICS_FILE)).map(strip_time);
        ensure(metrics(&a).map_err(fail)? == metrics(&c).map_err(fail)?, || {
            format!("resumed {kind} metrics differ")
        })?;
        for ckpt in [LAST_CHECKPOINT, BEST_CHECKPOINT] {
            let params = |root: &Path| {
                nowcast::trainer::Checkpoint::load(&run_dir(&cfg, root, kind).join(ckpt)).map(|k| (k.params, k.optimizer))
            };
            ensure(params(&a).map_err(fail)? == params(&c).map_err(fail)?, || {
                format!("resumed {kind} {ckpt} differs")
            })?;
        }
    }
    let ds = Dataset::open(data_dir(&cfg, &a)).map_err(fail)?;
    Ok(format!(
        "two runs on {} sequences agree; resume after epoch 1 matches",
        ds.manifest.sequences.len()
    ))
}

fn long_rollout(out: &Path) -> Check {
    let cfg = load("desk.toml");
    let test = Dataset::open(data_dir(&cfg, out))
        .and_then(|d| d.normalized_samples(Split::Test))
        .map_err(fail)?;
    let mut frames = 0;
    for kind in [ModelKind::Svfp, ModelKind::Convlstm] {
        let (model, _) = load_trained(&cfg, out, kind).map_err(fail)?;
        for (i, s) in test.iter().enumerate().take(5) {
            let f = forecast(&model, &s.inputs, 40, 4, i as u64).map_err(fail)?;
            let last = s.inputs.last().unwrap().timestamp_min;
            for member in &f.members {
                ensure(member.len() == 40, || format!("{kind}: {} leads", member.len()))?;
                for (t, fr) in member.iter().enumerate() {
                    let v = fr.normalized().map_err(fail)?;
                    ensure(fr.dims() == (32, 32) && v.iter().all(|x| x.is_finite() && (0.0..=1.0).contains(x)), || {
                        format!("{kind} sample {i} lead {}: invalid frame", t + 1)
                    })?;
                    ensure(fr.timestamp_min == last + 15.0 * (t + 1) as f64, || {
                        format!("{kind} lead {} timestamp {}", t + 1, fr.timestamp_min)
                    })?;
                    frames += 1;
                }
            }
        }
    }
    Ok(format!("{frames} frames at leads 1..40 in [0, 1]"))
}

fn report(n: usize, name: &str, f: impl FnOnce() -> Check) -> bool {
    let start = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into()))
    });
    let secs = start.elapsed().as_secs_f64();
    match &result {
        Ok(d) => println!("criterion {n} ({name}): PASS [{secs:.1} s] {d}"),
        Err(e) => println!("criterion {n} ({name}): FAIL [{secs:.1} s] {e}"),
    }
    result.is_ok()
}

fn main() {
    // `cargo test -- --list` and filters from the libtest harness.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let kept = std::env::var_os("NOWCAST_ACCEPTANCE_DIR").map(PathBuf::from);
    let tmp = tempfile::tempdir().unwrap();
    let out = kept.unwrap_or_else(|| tmp.path().to_path_buf());

    let start = Instant::now();
    let mut ok = report(1, "numerical kernels", kernels);
    ok &= report(2, "gradients", gradients);
    ok &= report(3, "architecture", architecture);
    let desk_ok = report(4, "desk experiment", || desk(&out));
    ok &= desk_ok;
    ok &= report(5, "reproducibility", reproducibility);
    ok &= report(6, "40-frame rollout", || {
        if desk_ok || out.join("runs").exists() {
            long_rollout(&out)
        } else {
            Err("no trained models".into())
        }
    });
    println!("acceptance: {} in {:.1} min", if ok { "PASS" } else { "FAIL" }, start.elapsed().as_secs_f64() / 60.0);
    if !ok {
        std::process::exit(1);
    }
}
