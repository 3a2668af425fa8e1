//! Layer shapes and parameter counts of the full-size and desk-size models.

use nowcast::data::RainFrame;
use nowcast::model::{BaselineConfig, ConvLstmBaseline, Head, ModelConfig, Svfp};
use nowcast_autograd::Tensor;

fn main() -> nowcast::Result<()> {
    for (name, cfg) in [("full", ModelConfig::default()), ("desk", ModelConfig::desk())] {
        let m = Svfp::new(cfg.clone(), 0)?;
        let (ph, pw) = cfg.padded_dims();
        let x = RainFrame::from_normalized(ph, pw, vec![0.1; ph * pw])?;
        let f = m.encode(&[x])?;
        let frame = RainFrame::from_normalized(cfg.frame_height, cfg.frame_width, vec![0.1; cfg.frame_height * cfg.frame_width])?;
        let mut state = m.zero_state(1);
        let prior = m.gaussian_head_step(&[frame], Head::Prior, &mut state)?;
        let h = m.predict_step(&f, &Tensor::zeros(&[cfg.latent_dim, 1]), &mut state)?;
        println!("{name}: frames {}x{} padded to {ph}x{pw}", cfg.frame_height, cfg.frame_width);
        println!("  encoder features {:?}", f.shape());
        println!("  latent {} (prior head emits {})", cfg.latent_dim, prior.dim());
        for (i, c) in m.predictor.iter().enumerate() {
            println!("  predictor layer {i}: ConvLSTM {} filters, {}x{}", c.filters, c.kernel(), c.kernel());
        }
        println!("  predictor output {:?}, {} parameters", h.shape(), m.params.num_scalars());
    }
    for (name, cfg) in [("full", BaselineConfig::default()), ("desk", BaselineConfig::desk())] {
        let b = ConvLstmBaseline::new(cfg, 0)?;
        let layers: Vec<String> = b.layers.iter().map(|l| format!("ConvLSTM({}, {}x{})", l.filters, l.kernel(), l.kernel())).collect();
        println!("baseline {name}: {}, {} parameters", layers.join(" -> "), b.params.num_scalars());
    }
    Ok(())
}
