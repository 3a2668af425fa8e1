mod common;

use common::{advecting_samples, brute_force_ssim, random_frame, tiny_svfp};
use nowcast::data::RainFrame;
use nowcast::evaluation::{
    aggregate, emit_figures, evaluate, plot_frame_strip, read_sample_scores, read_scores, ssim, write_scores,
    EvalConfig, Predictor, ScoreKind, StripPanel, CURVE_FILE, SAMPLE_SCORES_FILE, SCORES_FILE,
};
use nowcast::model::{Model, Svfp};
use nowcast::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dry(h: usize, w: usize) -> RainFrame {
    RainFrame::from_normalized(h, w, vec![0.0; h * w]).unwrap()
}

#[test]
fn ssim_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(71);
    for i in 0..100 {
        let (h, w) = (11 + rng.random_range(0..10), 11 + rng.random_range(0..14));
        let a = random_frame(&mut rng, h, w);
        // Mix of unrelated and correlated pairs.
        let b = if i % 2 == 0 {
            random_frame(&mut rng, h, w)
        } else {
            let noise = random_frame(&mut rng, h, w);
            let v = a
                .normalized()
                .unwrap()
                .iter()
                .zip(noise.normalized().unwrap())
                .map(|(x, n)| 0.8 * x + 0.2 * n)
                .collect();
            RainFrame::from_normalized(h, w, v).unwrap()
        };
        let want = brute_force_ssim(a.normalized().unwrap(), b.normalized().unwrap(), h, w);
        let got = ssim(&a, &b).unwrap();
        assert!((got - want).abs() < 1e-6, "{got} vs {want}");
    }
}

#[test]
fn ssim_is_symmetric_bounded_and_one_on_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(72);
    for i in 0..10_000 {
        let a = random_frame(&mut rng, 12, 12);
        let b = match i % 4 {
            0 => dry(12, 12),
            _ => random_frame(&mut rng, 12, 12),
        };
        let (ab, ba) = (ssim(&a, &b).unwrap(), ssim(&b, &a).unwrap());
        assert!((ab - ba).abs() < 1e-12);
        assert!((-1.0..=1.0).contains(&ab), "{ab}");
        if i % 100 == 0 {
            assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn ssim_errors() {
    let a = dry(12, 12);
    assert!(matches!(ssim(&a, &dry(12, 13)), Err(Error::Shape(_))));
    let tiny = dry(10, 30);
    assert!(matches!(ssim(&tiny, &tiny), Err(Error::Domain(_))));
}

fn cfg(n_predict: usize) -> EvalConfig {
    EvalConfig {
        n_predict,
        members: 3,
        seed: 9,
        ..EvalConfig::default()
    }
}

#[test]
fn oracle_scores_one_with_zero_width() {
    let test = advecting_samples(6, 24, 3, 5, 1.0);
    let e = evaluate(Predictor::Oracle, &test, &cfg(5)).unwrap();
    assert_eq!(e.leads.len(), 5);
    for s in &e.leads {
        assert_eq!((s.mean, s.ci, s.n), (1.0, 0.0, 6));
    }
    assert!(e.reconstruction.is_empty());
}

#[test]
fn persistence_decays_on_moving_rain() {
    let test = advecting_samples(6, 24, 3, 6, 1.0);
    let e = evaluate(Predictor::Persistence, &test, &cfg(6)).unwrap();
    for pair in e.leads.windows(2) {
        assert!(pair[1].mean < pair[0].mean, "{:?}", e.leads);
    }
    assert!(e.leads[0].ci > 0.0);
}

#[test]
fn horizon_longer_than_targets_is_rejected() {
    let test = advecting_samples(2, 24, 3, 2, 1.0);
    assert!(matches!(evaluate(Predictor::Oracle, &test, &cfg(3)), Err(Error::Config(_))));
    assert!(evaluate(Predictor::Oracle, &[], &cfg(1)).is_err());
}

#[test]
fn stored_scores_recompute_from_per_sample_values() {
    let model = Model::Svfp(Svfp::new(tiny_svfp(3, 4), 73).unwrap());
    let test = advecting_samples(4, 16, 3, 4, 1.0);
    let svfp = evaluate(Predictor::Model(&model), &test, &cfg(4)).unwrap();
    assert_eq!(svfp.reconstruction.len(), 3);
    assert_eq!(svfp.leads.len(), 4);
    assert!(svfp.leads.iter().all(|s| s.n == 4 && s.mean.is_finite()));
    let persistence = evaluate(Predictor::Persistence, &test, &cfg(4)).unwrap();

    let dir = tempfile::tempdir().unwrap();
    write_scores(dir.path(), &[svfp.clone(), persistence]).unwrap();
    let scores = read_scores(&dir.path().join(SCORES_FILE)).unwrap();
    let samples = read_sample_scores(&dir.path().join(SAMPLE_SCORES_FILE)).unwrap();
    assert_eq!(scores.len(), 3 + 4 + 4);
    assert_eq!(samples.len(), scores.len());
    for (score, s) in scores.iter().zip(&samples) {
        assert_eq!((score.model.as_str(), score.kind, score.lead), (s.model.as_str(), s.kind, s.lead));
        let (mean, ci) = aggregate(&s.values);
        assert_eq!((score.mean, score.ci, score.n), (mean, ci, s.values.len()));
    }
    assert_eq!(scores[0].kind, ScoreKind::Reconstruction);
    assert_eq!(&scores[3], svfp.lead(1).unwrap());
}

#[test]
fn ensemble_seed_changes_svfp_scores_only_through_noise() {
    let model = Model::Svfp(Svfp::new(tiny_svfp(3, 2), 74).unwrap());
    let test = advecting_samples(3, 16, 3, 2, 1.0);
    let a = evaluate(Predictor::Model(&model), &test, &cfg(2)).unwrap();
    let b = evaluate(Predictor::Model(&model), &test, &cfg(2)).unwrap();
    assert_eq!(a, b);
    let c = evaluate(Predictor::Model(&model), &test, &EvalConfig { seed: 10, ..cfg(2) }).unwrap();
    assert_eq!(a.reconstruction, c.reconstruction);
    assert_ne!(a.leads, c.leads);
}

#[test]
fn figures_are_written_with_transparent_dry_cells() {
    let test = advecting_samples(4, 24, 3, 4, 1.0);
    let evals = [
        evaluate(Predictor::Oracle, &test, &cfg(4)).unwrap(),
        evaluate(Predictor::Persistence, &test, &cfg(4)).unwrap(),
    ];
    let mut truth: Vec<RainFrame> = test[0].frames().cloned().collect();
    truth[0] = dry(24, 24);
    truth[1] = RainFrame::from_normalized(24, 24, vec![1.0; 24 * 24]).unwrap();
    let panel = StripPanel {
        truth,
        rows: vec![("persistence".into(), vec![test[0].inputs[2].clone(); 4])],
    };
    let dir = tempfile::tempdir().unwrap();
    let files = emit_figures(&evals, 3, &[panel.clone()], dir.path()).unwrap();
    assert_eq!(files.len(), 2);
    assert_eq!(files[0], dir.path().join(CURVE_FILE));
    for f in &files {
        assert!(std::fs::metadata(f).unwrap().len() > 0);
    }
    let strip = image::open(&files[1]).unwrap().to_rgba8();
    // Strip cells are 4 px per frame cell with a 4 px margin.
    assert_eq!(strip.get_pixel(0, 0)[3], 0);
    assert_eq!(strip.get_pixel(4 + 40, 4 + 40)[3], 0);
    let wet = strip.get_pixel(4 + 96 + 4 + 40, 4 + 40);
    assert_eq!(wet[3], 255);

    let mut long = panel;
    long.rows[0].1 = vec![test[0].inputs[0].clone(); 8];
    assert!(matches!(plot_frame_strip(&long, &dir.path().join("x.png")), Err(Error::Shape(_))));
}
