//! The whole command sequence on a tiny configuration, as the `nowcast`
//! binary runs it: gen-data, train both models, forecast, evaluate.
//!
//! cargo run --release --example pipeline -- /tmp/pipeline

use nowcast::cli::{cmd_evaluate, cmd_forecast, cmd_gen_data, cmd_train, load_config, Options};
use nowcast::model::ModelKind;

fn main() -> nowcast::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("nowcast-pipeline"));
    let opts = Options {
        config: Some(std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/tiny.toml")),
        out: out.clone(),
        force: true,
        ..Options::default()
    };
    let cfg = load_config(&opts)?;
    let ds = cmd_gen_data(&cfg, &out, true)?;
    println!("gen-data: {} sequences", ds.manifest.sequences.len());
    for kind in [ModelKind::Svfp, ModelKind::Convlstm] {
        let fit = cmd_train(&cfg, &out, kind, true, false)?;
        println!("train {kind}: {} epochs, best val {:.3}", fit.metrics.len(), fit.best_val_loss);
    }
    let manifest = cmd_forecast(&cfg, &Options { members: Some(5), lead: Some(8), ..opts.clone() })?;
    println!("forecast: {} members x {} leads from {}", manifest.members.len(), manifest.lead_frames, manifest.checkpoint_id);
    for e in cmd_evaluate(&cfg, &opts)? {
        let leads: Vec<String> = e.leads.iter().map(|s| format!("{:.3}", s.mean)).collect();
        println!("evaluate {}: ssim per lead {}", e.model, leads.join(" "));
    }
    println!("outputs under {}", out.display());
    Ok(())
}
