//! The training objective: squared reconstruction error plus a
//! β-weighted KL divergence between diagonal Gaussians, and the
//! reparameterized latent draw.

use nowcast::data::RainFrame;
use nowcast::model::{sample_latent, GaussianParams};
use nowcast::objective::{elbo_loss, kl_diag_gaussians, reconstruction_loss};
use nowcast_autograd::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn main() -> nowcast::Result<()> {
    let standard = GaussianParams::from_vecs(vec![0.0; 4], vec![0.0; 4])?;
    let shifted = GaussianParams::from_vecs(vec![1.0, -1.0, 0.5, 0.0], vec![0.0; 4])?;
    let narrow = GaussianParams::from_vecs(vec![0.0; 4], vec![-2.0; 4])?;
    println!("KL(q || q)        = {:.4}", kl_diag_gaussians(&standard, &standard)?);
    println!("KL(shifted || N)  = {:.4}", kl_diag_gaussians(&shifted, &standard)?);
    println!("KL(narrow || N)   = {:.4}", kl_diag_gaussians(&narrow, &standard)?);
    println!("KL(N || narrow)   = {:.4}", kl_diag_gaussians(&standard, &narrow)?);

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let noise: Vec<f64> = (0..4).map(|_| StandardNormal.sample(&mut rng)).collect();
    let z = sample_latent(&shifted, &Tensor::new(&[4, 1], noise)?)?;
    println!("z = mean + sigma * eps = {:?}", z.data());

    let target = RainFrame::from_normalized(4, 4, (0..16).map(|i| i as f64 / 15.0).collect())?;
    let pred = RainFrame::from_normalized(4, 4, vec![0.5; 16])?;
    println!("\nreconstruction = {:.4}", reconstruction_loss(&pred, &target)?);
    for beta in [0.0, 1e-4, 1.0] {
        let l = elbo_loss(&pred, &target, &shifted, &standard, beta)?;
        println!("beta {beta:<6}: total {:.4} (kl {:.4})", l.total, l.kl);
    }
    Ok(())
}
