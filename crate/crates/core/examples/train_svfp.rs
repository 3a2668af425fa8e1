//! Train a small stochastic model on synthetic rain, with early stopping
//! and per-epoch checkpoints.
//!
//! cargo run --release --example train_svfp -- /tmp/svfp-run

use std::path::PathBuf;

use nowcast::data::{
    downsample, generate_synthetic_sequence, normalize, window_dataset, ClassTable, RainFrame,
    Sample, Sequence, SyntheticConfig, WindowSpec,
};
use nowcast::model::{Model, ModelConfig, Svfp};
use nowcast::trainer::{Checkpoint, TrainConfig, Trainer, BEST_CHECKPOINT};

/// Rain rates to normalized intensity classes.
fn model_input(frames: &[RainFrame]) -> nowcast::Result<Vec<RainFrame>> {
    let table = ClassTable::default();
    frames
        .iter()
        .map(|f| normalize(&table.quantize(f)?))
        .collect()
}

fn samples(count: u64, spec: &WindowSpec) -> nowcast::Result<Vec<Sample>> {
    let mut out = Vec::new();
    for seed in 0..count {
        let native = generate_synthetic_sequence(&SyntheticConfig {
            seed,
            length: 60,
            ..SyntheticConfig::default()
        })?
        .thin(3)?;
        let frames = native
            .frames
            .iter()
            .map(|f| downsample(f, 2))
            .collect::<nowcast::Result<Vec<_>>>()?;
        let seq = Sequence::new(frames, native.timestep_min)?;
        for s in window_dataset(&seq, spec, 0.0)? {
            out.push(Sample::new(
                model_input(&s.inputs)?,
                model_input(&s.targets)?,
            )?);
        }
    }
    Ok(out)
}

fn main() -> nowcast::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("nowcast-svfp"));

    let spec = WindowSpec {
        n_inputs: 4,
        n_targets: 4,
        stride: 4,
    };
    let data = samples(24, &spec)?;
    let model = ModelConfig {
        encoder_filters: vec![4, 8, 8, 16],
        predictor_filters: 16,
        head_filters: 8,
        lstm_units: 16,
        latent_dim: 8,
        n_inputs: 4,
        n_predict: 4,
        ..ModelConfig::desk()
    };
    let svfp = Svfp::new(model, 1)?;
    println!(
        "{} samples, {} parameters",
        data.len(),
        svfp.params.num_scalars()
    );

    let config = TrainConfig {
        batch_size: 8,
        max_epochs: 15,
        patience: 3,
        seed: 1,
        ..TrainConfig::default()
    };
    let mut trainer = Trainer::new(Model::Svfp(svfp), config)?;
    let fit = trainer.fit(&data, Some(&dir))?;
    for m in &fit.metrics {
        println!(
            "epoch {:>2}  train {:>8.3}  val {:>8.3}  (kl {:.2})",
            m.epoch, m.train_total, m.val_total, m.val_kl
        );
    }
    println!(
        "best epoch {} val {:.3}, stopped early: {}",
        fit.best_epoch, fit.best_val_loss, fit.stopped_early
    );
    let best = Checkpoint::load(&dir.join(BEST_CHECKPOINT))?;
    println!(
        "{} -> id {}",
        dir.join(BEST_CHECKPOINT).display(),
        best.id()?
    );
    Ok(())
}
