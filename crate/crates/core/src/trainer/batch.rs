//! Batched teacher-forced loss graphs for both networks.

use nowcast_autograd::{Bound, Tape, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::Sample;
use crate::model::{sample_latent_var, ConvLstmBaseline, Head, Svfp};
use crate::objective::{kl_var, reconstruction_var};
use crate::{Error, Result};

/// Which transitions contribute to the loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossSteps {
    /// Only the target frames of each sample.
    #[default]
    Targets,
    /// Every frame after the first, inputs included.
    All,
}

/// Samples stacked along the batch axis: `frames[t]` is `[1, B, h, w]`.
#[derive(Debug, Clone)]
pub struct Batch {
    pub frames: Vec<Tensor>,
    pub n_inputs: usize,
    pub size: usize,
}

impl Batch {
    pub fn new(samples: &[&Sample]) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::Shape("empty batch".into()))?;
        let n_inputs = first.inputs.len();
        let len = first.len();
        let (h, w) = first.inputs[0].dims();
        if samples
            .iter()
            .any(|s| s.inputs.len() != n_inputs || s.len() != len || s.inputs[0].dims() != (h, w))
        {
            return Err(Error::Shape("samples in a batch differ in layout".into()));
        }
        let plane = h * w;
        let mut frames = Vec::with_capacity(len);
        for t in 0..len {
            let mut data = Vec::with_capacity(samples.len() * plane);
            for s in samples {
                let f = s.frames().nth(t).expect("checked length");
                data.extend_from_slice(f.normalized()?);
            }
            frames.push(Tensor::new(&[1, samples.len(), h, w], data)?);
        }
        Ok(Self {
            frames,
            n_inputs,
            size: samples.len(),
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    fn scored(&self, t: usize, steps: LossSteps) -> bool {
        match steps {
            LossSteps::Targets => t >= self.n_inputs,
            LossSteps::All => t >= 1,
        }
    }

    /// Summed squared error of predicting all zeros, averaged over the batch.
    pub fn zeros_loss(&self, steps: LossSteps) -> f64 {
        (1..self.len())
            .filter(|&t| self.scored(t, steps))
            .map(|t| self.frames[t].data().iter().map(|x| x * x).sum::<f64>())
            .sum::<f64>()
            / self.size as f64
    }

    /// Standard-normal latent noise `[latent_dim, B]` for each transition.
    pub fn latent_noise(&self, latent_dim: usize, seed: u64) -> Vec<Tensor> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (1..self.len())
            .map(|_| {
                let data = (0..latent_dim * self.size)
                    .map(|_| StandardNormal.sample(&mut rng))
                    .collect();
                Tensor::new(&[latent_dim, self.size], data).expect("noise shape")
            })
            .collect()
    }
}

/// Noise `[latent_dim, B]` per transition where column `j` comes from its
/// own generator seeded with `seeds[j]`, so a sample's draws do not depend
/// on which batch it lands in.
pub fn per_sample_noise(transitions: usize, latent_dim: usize, seeds: &[u64]) -> Vec<Tensor> {
    let b = seeds.len();
    let mut rngs: Vec<ChaCha8Rng> = seeds.iter().map(|&s| ChaCha8Rng::seed_from_u64(s)).collect();
    (0..transitions)
        .map(|_| {
            let mut data = vec![0.0; latent_dim * b];
            for (j, rng) in rngs.iter_mut().enumerate() {
                for d in 0..latent_dim {
                    data[d * b + j] = StandardNormal.sample(rng);
                }
            }
            Tensor::new(&[latent_dim, b], data).expect("noise shape")
        })
        .collect()
}

/// Loss nodes already divided by the batch size.
#[derive(Debug, Clone, Copy)]
pub struct LossVars {
    pub total: Var,
    pub reconstruction: Var,
    pub kl: Var,
}

fn accumulate(tape: &mut Tape, acc: Option<Var>, v: Var) -> Result<Var> {
    Ok(match acc {
        Some(a) => tape.add(a, v)?,
        None => v,
    })
}

fn finish(tape: &mut Tape, recon: Option<Var>, kl: Option<Var>, beta: f64, batch: usize) -> Result<LossVars> {
    let zero = || Tensor::scalar(0.0);
    let recon = match recon {
        Some(v) => v,
        None => tape.constant(zero()),
    };
    let kl = match kl {
        Some(v) => v,
        None => tape.constant(zero()),
    };
    let inv = 1.0 / batch as f64;
    let reconstruction = tape.scale(recon, inv);
    let kl = tape.scale(kl, inv);
    let weighted = tape.scale(kl, beta);
    let total = tape.add(reconstruction, weighted)?;
    Ok(LossVars {
        total,
        reconstruction,
        kl,
    })
}

/// Teacher-forced variational loss. The inference head first sees frame 0;
/// at transition `t` the prior has seen frames `0..t`, the inference head
/// frames `0..=t`, and the predictor maps frame `t-1` and a posterior draw
/// to a prediction of frame `t`.
pub fn svfp_loss(
    model: &Svfp,
    tape: &mut Tape,
    p: &Bound,
    batch: &Batch,
    noise: &[Tensor],
    beta: f64,
    steps: LossSteps,
) -> Result<LossVars> {
    if batch.len() < 2 || noise.len() != batch.len() - 1 {
        return Err(Error::Shape(format!(
            "{} frames need {} noise tensors, got {}",
            batch.len(),
            batch.len().saturating_sub(1),
            noise.len()
        )));
    }
    let mut sv = model.state_vars(tape, &model.zero_state(batch.size));
    let mut padded = Vec::with_capacity(batch.len());
    let mut feats = Vec::with_capacity(batch.len());
    for f in &batch.frames {
        let x = tape.constant(f.clone());
        let x = model.pad_var(tape, x)?;
        feats.push(model.encode_var(tape, p, x)?);
        padded.push(x);
    }
    let (_, _, s) = model.head_var(Head::Inference, tape, p, padded[0], feats[0], sv.inference)?;
    sv.inference = s;
    let (mut recon, mut kl) = (None, None);
    for t in 1..batch.len() {
        let (pm, plv, s) = model.head_var(Head::Prior, tape, p, padded[t - 1], feats[t - 1], sv.prior)?;
        sv.prior = s;
        let (qm, qlv, s) = model.head_var(Head::Inference, tape, p, padded[t], feats[t], sv.inference)?;
        sv.inference = s;
        let e = tape.constant(noise[t - 1].clone());
        let z = sample_latent_var(tape, qm, qlv, e)?;
        let h = model.predict_var(tape, p, feats[t - 1], z, &mut sv.predictor)?;
        if batch.scored(t, steps) {
            let y = model.decode_var(tape, p, h)?;
            let target = tape.constant(batch.frames[t].clone());
            let r = reconstruction_var(tape, y, target)?;
            recon = Some(accumulate(tape, recon, r)?);
            let k = kl_var(tape, qm, qlv, pm, plv)?;
            kl = Some(accumulate(tape, kl, k)?);
        }
    }
    finish(tape, recon, kl, beta, batch.size)
}

/// Teacher-forced loss of the deterministic baseline; the KL node is zero.
pub fn baseline_loss(
    model: &ConvLstmBaseline,
    tape: &mut Tape,
    p: &Bound,
    batch: &Batch,
    steps: LossSteps,
) -> Result<LossVars> {
    if batch.len() < 2 {
        return Err(Error::Shape("a training sample needs at least two frames".into()));
    }
    let mut sv = model.state_vars(tape, &model.zero_state(batch.size));
    let mut recon = None;
    for t in 1..batch.len() {
        let x = tape.constant(batch.frames[t - 1].clone());
        let y = model.step_var(tape, p, x, &mut sv)?;
        if batch.scored(t, steps) {
            let target = tape.constant(batch.frames[t].clone());
            let r = reconstruction_var(tape, y, target)?;
            recon = Some(accumulate(tape, recon, r)?);
        }
    }
    finish(tape, recon, None, 0.0, batch.size)
}
