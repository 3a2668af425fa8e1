//! K-member ensemble forecast from a trained checkpoint: per-pixel mean and
//! spread at each lead, and an exported forecast container.
//!
//! cargo run --release --example train_svfp
//! cargo run --release --example ensemble_forecast -- /tmp/nowcast-svfp/best.ckpt

use std::path::PathBuf;

use nowcast::data::{generate_synthetic_sequence, normalize, ClassTable, RainFrame, SyntheticConfig};
use nowcast::forecaster::{ensemble_forecast, export_forecast};
use nowcast::model::{Model, ModelConfig, ModelKind, Svfp};
use nowcast::trainer::Checkpoint;

fn main() -> nowcast::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("nowcast-svfp/best.ckpt"));
    let (svfp, id) = if path.exists() {
        let ckpt = Checkpoint::load(&path)?;
        match ckpt.build_model()? {
            Model::Svfp(m) => (m, ckpt.id()?),
            Model::Baseline(_) => return Err(nowcast::Error::Config("expected a stochastic model checkpoint".into())),
        }
    } else {
        println!("{} not found, using an untrained model", path.display());
        (Svfp::new(ModelConfig::desk(), 0)?, "untrained".to_string())
    };
    let (h, w) = (svfp.config.frame_height, svfp.config.frame_width);

    // Fresh rain the model has not seen, at the model's grid size.
    let seq = generate_synthetic_sequence(&SyntheticConfig {
        height: h,
        width: w,
        seed: 999,
        timestep_min: 15.0,
        ..SyntheticConfig::default()
    })?;
    let table = ClassTable::default();
    let inputs = seq.frames[10..10 + svfp.config.n_inputs]
        .iter()
        .map(|f| normalize(&table.quantize(f)?))
        .collect::<nowcast::Result<Vec<RainFrame>>>()?;

    let (leads, members) = (12, 10);
    let f = ensemble_forecast(&svfp, &inputs, leads, members, 7)?;
    println!("lead  minutes  mean rain  max spread  pixels with spread");
    for t in 0..leads {
        let spread = f.spread(t)?;
        let wet = f.mean[t].normalized()?.iter().sum::<f64>() / (h * w) as f64;
        let max = spread.iter().copied().fold(0.0, f64::max);
        let n = spread.iter().filter(|s| **s > 0.0).count();
        println!("{:>4}  {:>7}  {wet:>9.4}  {max:>10.4}  {n:>18}", t + 1, f.mean[t].timestamp_min);
    }

    let out = std::env::temp_dir().join("nowcast-ensemble");
    let manifest = export_forecast(&f, ModelKind::Svfp, &id, &out, true)?;
    println!("{} members and their mean written to {}", manifest.members.len(), out.display());
    Ok(())
}
