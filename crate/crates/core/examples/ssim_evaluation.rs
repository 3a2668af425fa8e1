//! SSIM between rain fields, and lead-time scores with confidence
//! intervals for the persistence forecast.

use nowcast::data::{RainFrame, Sample};
use nowcast::evaluation::{aggregate, evaluate, ssim, write_scores, EvalConfig, Predictor};

/// Normalized field with one Gaussian cell.
fn cell(size: usize, cy: f64, cx: f64, radius: f64) -> RainFrame {
    let v = (0..size * size)
        .map(|i| {
            let (y, x) = ((i / size) as f64, (i % size) as f64);
            0.8 * (-((y - cy).powi(2) + (x - cx).powi(2)) / (2.0 * radius * radius)).exp()
        })
        .collect();
    RainFrame::from_normalized(size, size, v).unwrap()
}

fn main() -> nowcast::Result<()> {
    let truth = cell(32, 16.0, 16.0, 4.0);
    for (name, other) in [
        ("identical", truth.clone()),
        ("shifted 2 px", cell(32, 16.0, 18.0, 4.0)),
        ("shifted 6 px", cell(32, 16.0, 22.0, 4.0)),
        ("wider", cell(32, 16.0, 16.0, 6.0)),
        ("dry", RainFrame::from_normalized(32, 32, vec![0.0; 1024])?),
    ] {
        println!("{name:>13}: ssim {:.4}", ssim(&truth, &other)?);
    }

    let (mean, ci) = aggregate(&[0.71, 0.65, 0.80, 0.59, 0.74]);
    println!("\nfive samples: {mean:.3} ± {ci:.3}");

    // Cells drifting east at varied speeds; persistence loses skill with lead.
    let test: Vec<Sample> = (0..20)
        .map(|k| {
            let speed = 0.5 + 0.1 * k as f64;
            let frames: Vec<RainFrame> = (0..10)
                .map(|t| cell(32, 10.0 + k as f64 / 2.0, 6.0 + speed * t as f64, 3.5).with_timestamp(15.0 * t as f64))
                .collect();
            Sample::new(frames[..5].to_vec(), frames[5..].to_vec()).unwrap()
        })
        .collect();
    let cfg = EvalConfig { n_predict: 5, ..EvalConfig::default() };
    let e = evaluate(Predictor::Persistence, &test, &cfg)?;
    for s in &e.leads {
        println!("persistence lead {}: {:.3} ± {:.3} (n={})", s.lead, s.mean, s.ci, s.n);
    }
    let dir = std::env::temp_dir().join("nowcast-ssim");
    write_scores(&dir, &[e])?;
    println!("scores in {}", dir.display());
    Ok(())
}
