//! Train the stochastic model and the deterministic ConvLSTM on the same
//! synthetic data, then score both against persistence by SSIM per lead.

use nowcast::config::RunConfig;
use nowcast::data::{Dataset, Split};
use nowcast::evaluation::{evaluate, EvalConfig, Predictor};
use nowcast::model::{BaselineConfig, ConvLstmBaseline, Model, ModelConfig, Svfp};
use nowcast::trainer::{TrainConfig, Trainer};

fn main() -> nowcast::Result<()> {
    let out = std::env::temp_dir().join("nowcast-comparison");
    let mut cfg = RunConfig::desk();
    cfg.data.sequences = 120;
    let cfg = cfg.resolve()?;
    let ds: Dataset = nowcast::cli::cmd_gen_data(&cfg, &out, true)?;
    let train = ds.normalized_samples(Split::Train)?;
    let test = ds.normalized_samples(Split::Test)?;
    println!("{} train / {} test samples", train.len(), test.len());

    let svfp = ModelConfig {
        encoder_filters: vec![4, 8, 8, 16],
        predictor_filters: 16,
        head_filters: 8,
        lstm_units: 16,
        latent_dim: 8,
        ..ModelConfig::desk()
    };
    let baseline = BaselineConfig { filters: 4, ..BaselineConfig::desk() };
    let train_cfg = TrainConfig { max_epochs: 40, patience: 4, learning_rate: 2e-3, seed: 3, ..TrainConfig::default() };
    let mut models = Vec::new();
    for model in [
        Model::Svfp(Svfp::new(svfp, 1)?),
        Model::Baseline(ConvLstmBaseline::new(baseline, 2)?),
    ] {
        let mut t = Trainer::new(model, train_cfg.clone())?;
        let fit = t.fit(&train, None)?;
        println!("{}: best val {:.3} after {} epochs", t.model.kind(), fit.best_val_loss, fit.metrics.len());
        models.push(fit.best.build_model()?);
    }

    let eval = EvalConfig { n_predict: 10, members: 5, ..EvalConfig::default() };
    let mut rows = vec![evaluate(Predictor::Persistence, &test, &eval)?];
    for m in &models {
        rows.push(evaluate(Predictor::Model(m), &test, &eval)?);
    }
    print!("lead");
    for r in &rows {
        print!("  {:>14}", r.model);
    }
    println!();
    for lead in 1..=10 {
        print!("{lead:>4}");
        for r in &rows {
            let s = r.lead(lead).unwrap();
            print!("  {:>6.3} ± {:.3}", s.mean, s.ci);
        }
        println!();
    }
    Ok(())
}
