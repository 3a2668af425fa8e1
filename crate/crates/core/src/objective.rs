//! Negative variational lower bound: summed squared reconstruction error
//! plus a β-weighted closed-form KL divergence between diagonal Gaussians.
//!
//! Reduction: sum over pixels and latent dimensions, mean over the batch.

use nowcast_autograd::{Tape, Var};
use serde::{Deserialize, Serialize};

use crate::data::RainFrame;
use crate::model::GaussianParams;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub reconstruction: f64,
    pub kl: f64,
    pub total: f64,
    pub beta: f64,
}

impl LossBreakdown {
    pub fn new(reconstruction: f64, kl: f64, beta: f64) -> Self {
        Self {
            reconstruction,
            kl,
            total: reconstruction + beta * kl,
            beta,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.reconstruction.is_finite() && self.kl.is_finite() && self.total.is_finite()
    }
}

/// Sum of squared per-cell differences between two normalized frames.
pub fn reconstruction_loss(pred: &RainFrame, target: &RainFrame) -> Result<f64> {
    if pred.dims() != target.dims() {
        return Err(Error::Shape(format!(
            "prediction {:?} vs target {:?}",
            pred.dims(),
            target.dims()
        )));
    }
    Ok(pred
        .normalized()?
        .iter()
        .zip(target.normalized()?)
        .map(|(a, b)| (a - b) * (a - b))
        .sum())
}

fn kl_term(mq: f64, lq: f64, mp: f64, lp: f64) -> f64 {
    0.5 * ((lq - lp).exp() + (mp - mq) * (mp - mq) * (-lp).exp() - 1.0 + lp - lq)
}

/// `KL(q || p)` summed over latent dimensions and averaged over batch columns.
pub fn kl_diag_gaussians(q: &GaussianParams, p: &GaussianParams) -> Result<f64> {
    if q.mean.shape() != p.mean.shape()
        || q.log_variance.shape() != q.mean.shape()
        || p.log_variance.shape() != p.mean.shape()
    {
        return Err(Error::Shape(format!(
            "KL between {:?} and {:?} Gaussians",
            q.mean.shape(),
            p.mean.shape()
        )));
    }
    let batch = q.mean.shape().get(1).copied().unwrap_or(1).max(1);
    let sum: f64 = q
        .mean
        .data()
        .iter()
        .zip(q.log_variance.data())
        .zip(p.mean.data().iter().zip(p.log_variance.data()))
        .map(|((&mq, &lq), (&mp, &lp))| kl_term(mq, lq, mp, lp))
        .sum();
    Ok(sum / batch as f64)
}

pub fn elbo_loss(
    pred: &RainFrame,
    target: &RainFrame,
    q: &GaussianParams,
    p: &GaussianParams,
    beta: f64,
) -> Result<LossBreakdown> {
    Ok(LossBreakdown::new(
        reconstruction_loss(pred, target)?,
        kl_diag_gaussians(q, p)?,
        beta,
    ))
}

/// Summed squared error on the tape.
pub fn reconstruction_var(tape: &mut Tape, pred: Var, target: Var) -> Result<Var> {
    let d = tape.sub(pred, target)?;
    let sq = tape.square(d);
    Ok(tape.sum(sq))
}

/// Summed closed-form KL on the tape.
pub fn kl_var(tape: &mut Tape, q_mean: Var, q_logvar: Var, p_mean: Var, p_logvar: Var) -> Result<Var> {
    let ratio = tape.sub(q_logvar, p_logvar)?;
    let var_ratio = tape.exp(ratio);
    let dm = tape.sub(p_mean, q_mean)?;
    let dm2 = tape.square(dm);
    let neg_lp = tape.scale(p_logvar, -1.0);
    let inv_vp = tape.exp(neg_lp);
    let mahal = tape.mul(dm2, inv_vp)?;
    let s = tape.add(var_ratio, mahal)?;
    let s = tape.sub(s, ratio)?;
    let s = tape.add_scalar(s, -1.0);
    let total = tape.sum(s);
    Ok(tape.scale(total, 0.5))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nowcast_autograd::Tensor;

    fn g(m: &[f64], lv: &[f64]) -> GaussianParams {
        GaussianParams::from_vecs(m.to_vec(), lv.to_vec()).unwrap()
    }

    #[test]
    fn reconstruction_examples() {
        let a = RainFrame::from_normalized(2, 2, vec![0.0; 4]).unwrap();
        let b = RainFrame::from_normalized(2, 2, vec![1.0; 4]).unwrap();
        assert_eq!(reconstruction_loss(&a, &a).unwrap(), 0.0);
        assert_eq!(reconstruction_loss(&a, &b).unwrap(), 4.0);
        let c = RainFrame::from_normalized(1, 4, vec![1.0; 4]).unwrap();
        assert!(matches!(reconstruction_loss(&a, &c), Err(Error::Shape(_))));
    }

    #[test]
    fn kl_examples() {
        assert_eq!(kl_diag_gaussians(&g(&[0.3, -1.0], &[0.2, 1.0]), &g(&[0.3, -1.0], &[0.2, 1.0])).unwrap(), 0.0);
        let v = kl_diag_gaussians(&g(&[0.0], &[0.0]), &g(&[1.0], &[0.0])).unwrap();
        assert!((v - 0.5).abs() < 1e-15);
        let v = kl_diag_gaussians(&g(&[0.0], &[2f64.ln()]), &g(&[0.0], &[0.0])).unwrap();
        assert!((v - 0.5 * (2.0 - 1.0 - 2f64.ln())).abs() < 1e-15);
        assert!((v - 0.153_426).abs() < 1e-6);
        assert!(kl_diag_gaussians(&g(&[0.0], &[0.0]), &g(&[0.0, 1.0], &[0.0, 0.0])).is_err());
    }

    #[test]
    fn elbo_examples() {
        let a = RainFrame::from_normalized(1, 2, vec![0.5, 0.25]).unwrap();
        let b = RainFrame::from_normalized(1, 2, vec![0.0, 0.25]).unwrap();
        let q = g(&[0.0], &[0.0]);
        let p = g(&[1.0], &[0.0]);
        let l = elbo_loss(&a, &b, &q, &p, 0.0).unwrap();
        assert_eq!(l.total, l.reconstruction);
        let l = elbo_loss(&a, &a, &q, &q, 1e-7).unwrap();
        assert_eq!(l.total, 0.0);
        let l = LossBreakdown::new(1.0, 1e6, 1e-7);
        assert!((l.total - 1.1).abs() < 1e-12);
    }

    #[test]
    fn tape_kl_matches_closed_form() {
        let q = g(&[0.1, -0.4, 2.0], &[0.3, -1.2, 0.0]);
        let p = g(&[-0.2, 0.5, 1.0], &[1.0, 0.4, -0.7]);
        let mut tape = Tape::new();
        let vars: Vec<Var> = [&q.mean, &q.log_variance, &p.mean, &p.log_variance]
            .into_iter()
            .map(|t: &Tensor| tape.constant(t.clone()))
            .collect();
        let k = kl_var(&mut tape, vars[0], vars[1], vars[2], vars[3]).unwrap();
        let direct = kl_diag_gaussians(&q, &p).unwrap();
        assert!((tape.value(k).item() - direct).abs() < 1e-13);
    }
}
