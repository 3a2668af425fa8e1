#![allow(dead_code)]

use nowcast::data::{RainFrame, Sample};
use nowcast::model::{BaselineConfig, ModelConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// 16×16 frames, a few thousand parameters.
pub fn tiny_svfp(n_inputs: usize, n_predict: usize) -> ModelConfig {
    ModelConfig {
        frame_height: 16,
        frame_width: 16,
        encoder_filters: vec![2, 3, 3, 4],
        encoder_kernels: vec![3, 3, 3, 3],
        predictor_filters: 4,
        head_filters: 3,
        lstm_units: 4,
        latent_dim: 3,
        n_inputs,
        n_predict,
        ..ModelConfig::default()
    }
}

pub fn tiny_baseline(size: usize, n_inputs: usize, n_predict: usize) -> BaselineConfig {
    BaselineConfig {
        frame_height: size,
        frame_width: size,
        filters: 3,
        n_inputs,
        n_predict,
        ..BaselineConfig::default()
    }
}

pub fn random_frame(rng: &mut ChaCha8Rng, h: usize, w: usize) -> RainFrame {
    RainFrame::from_normalized(h, w, (0..h * w).map(|_| rng.random::<f64>()).collect()).unwrap()
}

/// Normalized frames with a Gaussian blob centred at `(cy, cx)`.
pub fn blob(h: usize, w: usize, cy: f64, cx: f64, radius: f64) -> RainFrame {
    let values = (0..h * w)
        .map(|i| {
            let (y, x) = ((i / w) as f64, (i % w) as f64);
            let d2 = (y - cy).powi(2) + (x - cx).powi(2);
            0.9 * (-d2 / (2.0 * radius * radius)).exp()
        })
        .collect();
    RainFrame::from_normalized(h, w, values).unwrap()
}

/// A blob drifting `speed` cells per frame to the east, cut into samples.
pub fn advecting_samples(count: usize, size: usize, n_inputs: usize, n_targets: usize, speed: f64) -> Vec<Sample> {
    (0..count)
        .map(|k| {
            let cy = size as f64 / 2.0 + (k % 5) as f64 - 2.0;
            let frames: Vec<RainFrame> = (0..n_inputs + n_targets)
                .map(|t| {
                    blob(size, size, cy, 4.0 + speed * t as f64, 3.0).with_timestamp(15.0 * t as f64)
                })
                .collect();
            let (inputs, targets) = frames.split_at(n_inputs);
            Sample::new(inputs.to_vec(), targets.to_vec()).unwrap()
        })
        .collect()
}

pub fn random_samples(count: usize, size: usize, n_inputs: usize, n_targets: usize, seed: u64) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let frames: Vec<RainFrame> = (0..n_inputs + n_targets)
                .map(|t| random_frame(&mut rng, size, size).with_timestamp(15.0 * t as f64))
                .collect();
            let (inputs, targets) = frames.split_at(n_inputs);
            Sample::new(inputs.to_vec(), targets.to_vec()).unwrap()
        })
        .collect()
}

/// Direct evaluation over every valid 11×11 window with a 2-D Gaussian
/// kernel and two-pass moments.
pub fn brute_force_ssim(a: &[f64], b: &[f64], h: usize, w: usize) -> f64 {
    let mut k = [[0.0; 11]; 11];
    let mut z = 0.0;
    for (i, row) in k.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let d2 = (i as f64 - 5.0).powi(2) + (j as f64 - 5.0).powi(2);
            *v = (-d2 / (2.0 * 1.5 * 1.5)).exp();
            z += *v;
        }
    }
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut total = 0.0;
    let mut count = 0;
    for y in 0..=h - 11 {
        for x in 0..=w - 11 {
            let at = |p: &[f64], i: usize, j: usize| p[(y + i) * w + x + j];
            let (mut ma, mut mb) = (0.0, 0.0);
            for i in 0..11 {
                for j in 0..11 {
                    ma += k[i][j] / z * at(a, i, j);
                    mb += k[i][j] / z * at(b, i, j);
                }
            }
            let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
            for i in 0..11 {
                for j in 0..11 {
                    let g = k[i][j] / z;
                    let (da, db) = (at(a, i, j) - ma, at(b, i, j) - mb);
                    va += g * da * da;
                    vb += g * db * db;
                    cov += g * da * db;
                }
            }
            total += (2.0 * ma * mb + c1) * (2.0 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    total / count as f64
}

pub struct GradientReport {
    pub worst: f64,
    pub checked: usize,
    /// Probes whose ±step moved some leaky-ReLU or clamp input across its
    /// breakpoint; central differences are not a derivative there.
    pub skipped: usize,
}

/// Central differences on `count` randomly chosen parameter scalars of the
/// full training loss, relative error `|a - n| / max(|a|, |n|, floor)`.
pub fn gradient_check(
    trainer: &nowcast::trainer::Trainer,
    samples: &[Sample],
    count: usize,
    step: f64,
    floor: f64,
    seed: u64,
) -> GradientReport {
    let refs: Vec<&Sample> = samples.iter().collect();
    let batch = nowcast::trainer::Batch::new(&refs).unwrap();
    let (_, grads) = trainer.loss_and_grads(&batch, seed).unwrap();
    let (_, pattern) = trainer.loss_with_branches(&batch, seed).unwrap();
    let sizes: Vec<usize> = grads.iter().map(|g| g.len()).collect();
    let total: usize = sizes.iter().sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks: Vec<usize> = (0..total).collect();
    for i in 0..picks.len() {
        let j = rng.random_range(i..picks.len());
        picks.swap(i, j);
    }
    let mut probe = trainer.clone();
    let mut report = GradientReport { worst: 0.0, checked: 0, skipped: 0 };
    for flat in picks {
        if report.checked == count {
            break;
        }
        let (mut p, mut k) = (0, flat);
        while k >= sizes[p] {
            k -= sizes[p];
            p += 1;
        }
        let mut eval = |delta: f64| {
            let original = probe.model.params().iter().nth(p).unwrap().value.data()[k];
            probe.model.params_mut().iter_mut().nth(p).unwrap().value.data_mut()[k] = original + delta;
            let out = probe.loss_with_branches(&batch, seed).unwrap();
            probe.model.params_mut().iter_mut().nth(p).unwrap().value.data_mut()[k] = original;
            (out.0.total, out.1)
        };
        let (plus, plus_pattern) = eval(step);
        let (minus, minus_pattern) = eval(-step);
        if plus_pattern != pattern || minus_pattern != pattern {
            report.skipped += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * step);
        let analytic = grads[p].data()[k];
        let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor);
        if std::env::var("GRAD_DEBUG").is_ok() && err > 1e-4 {
            let name = &probe.model.params().iter().nth(p).unwrap().name;
            eprintln!("{name} [{k}] analytic {analytic:e} numeric {numeric:e}");
        }
        report.worst = report.worst.max(err);
        report.checked += 1;
    }
    report
}
