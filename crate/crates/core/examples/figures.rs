//! The SSIM-per-lead overlay and frame strips: truth on top, one row per
//! forecast, dry cells transparent.
//!
//! cargo run --example figures -- /tmp/figures

use nowcast::data::{RainFrame, Sample};
use nowcast::evaluation::{emit_figures, evaluate, EvalConfig, Predictor, StripPanel};

fn cell(size: usize, cy: f64, cx: f64) -> RainFrame {
    let v = (0..size * size)
        .map(|i| {
            let (y, x) = ((i / size) as f64, (i % size) as f64);
            (-((y - cy).powi(2) + (x - cx).powi(2)) / 18.0).exp()
        })
        .collect();
    RainFrame::from_normalized(size, size, v).unwrap()
}

fn main() -> nowcast::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("nowcast-figures"));
    let test: Vec<Sample> = (0..8)
        .map(|k| {
            let frames: Vec<RainFrame> = (0..15)
                .map(|t| cell(32, 8.0 + 2.0 * k as f64, 4.0 + 1.5 * t as f64).with_timestamp(15.0 * t as f64))
                .collect();
            Sample::new(frames[..5].to_vec(), frames[5..].to_vec()).unwrap()
        })
        .collect();
    let cfg = EvalConfig::default();
    let evals = vec![
        evaluate(Predictor::Oracle, &test, &cfg)?,
        evaluate(Predictor::Persistence, &test, &cfg)?,
    ];
    let panels: Vec<StripPanel> = test
        .iter()
        .take(3)
        .map(|s| StripPanel {
            truth: s.frames().cloned().collect(),
            rows: vec![("persistence".into(), vec![s.inputs[4].clone(); 10])],
        })
        .collect();
    for f in emit_figures(&evals, 5, &panels, &dir)? {
        println!("{}", f.display());
    }
    Ok(())
}
