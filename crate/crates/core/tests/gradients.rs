mod common;

use common::{gradient_check, random_samples, tiny_baseline, tiny_svfp};
use nowcast::model::{ConvLstmBaseline, Model, Svfp};
use nowcast::trainer::{LossSteps, TrainConfig, Trainer};

fn config(steps: LossSteps) -> TrainConfig {
    TrainConfig {
        loss_steps: steps,
        ..TrainConfig::default()
    }
}

#[test]
fn variational_loss_gradients_match_central_differences() {
    for (beta, steps) in [(1e-7, LossSteps::Targets), (0.5, LossSteps::All)] {
        let mut cfg = tiny_svfp(2, 1);
        cfg.beta = beta;
        let model = Svfp::new(cfg, 21).unwrap();
        assert!(model.params.num_scalars() <= 5_000, "{}", model.params.num_scalars());
        let trainer = Trainer::new(Model::Svfp(model), config(steps)).unwrap();
        let samples = random_samples(2, 16, 2, 1, 22);
        let r = gradient_check(&trainer, &samples, 150, 1e-3, 1e-6, 23);
        assert!(r.checked >= 100, "only {} smooth probes", r.checked);
        assert!(r.worst <= 1e-4, "beta {beta}: worst relative error {}", r.worst);
    }
}

#[test]
fn baseline_loss_gradients_match_central_differences() {
    let model = ConvLstmBaseline::new(tiny_baseline(8, 2, 1), 31).unwrap();
    assert!(model.params.num_scalars() >= 100);
    let trainer = Trainer::new(Model::Baseline(model), config(LossSteps::All)).unwrap();
    let samples = random_samples(2, 8, 2, 1, 32);
    let r = gradient_check(&trainer, &samples, 150, 1e-3, 1e-6, 33);
    assert!(r.checked >= 100);
    assert!(r.worst <= 1e-4, "worst relative error {}", r.worst);
}
