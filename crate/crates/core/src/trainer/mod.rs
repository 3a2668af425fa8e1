//! Teacher-forced training with Adam, a tail validation holdout, early
//! stopping and checkpointing, for either network.

mod adam;
mod batch;
mod checkpoint;

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use nowcast_autograd::{ParamStore, Tape, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adam::{clip_global_norm, global_norm, Adam, AdamConfig};
pub use batch::{baseline_loss, per_sample_noise, svfp_loss, Batch, LossSteps, LossVars};
pub use checkpoint::{Checkpoint, CheckpointMeta, TensorMeta, CHECKPOINT_VERSION};

use crate::data::{FrameData, Sample};
use crate::model::Model;
use crate::objective::LossBreakdown;
use crate::seeds::derive;
use crate::{Error, Result};

pub const LAST_CHECKPOINT: &str = "last.ckpt";
pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const METRICS_FILE: &str = "metrics.jsonl";

const NOISE_STREAM: u64 = 1;
const SHUFFLE_STREAM: u64 = 2;
const VALIDATION_STREAM: u64 = 3;

#[derive(Clone, Copy)]
enum Noise<'a> {
    Seed(u64),
    PerSample(&'a [u64]),
}

/// Stable content hash of a sample's frames.
fn fingerprint(sample: &Sample) -> u64 {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    for f in sample.frames() {
        match f.data() {
            FrameData::Rate(v) | FrameData::Normalized(v) => v.iter().for_each(|x| h.update(x.to_le_bytes())),
            FrameData::Class(v) => h.update(v),
        }
    }
    u64::from_le_bytes(h.finalize()[..8].try_into().expect("8 bytes"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub validation_fraction: f64,
    pub clip_norm: f64,
    pub loss_steps: LossSteps,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 16,
            max_epochs: 100,
            patience: 10,
            validation_fraction: 0.1,
            clip_norm: 5.0,
            loss_steps: LossSteps::Targets,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patience < 1 {
            return Err(Error::Config("patience must be >= 1".into()));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::Config("validation fraction must lie in (0, 1)".into()));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Config("batch size and max epochs must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.clip_norm > 0.0) {
            return Err(Error::Config("learning rate and clip norm must be positive".into()));
        }
        Ok(())
    }

    /// Number of samples held out for validation: the last
    /// `round(fraction * n)`, at least one.
    pub fn validation_count(&self, n: usize) -> Result<usize> {
        let v = ((n as f64 * self.validation_fraction).round() as usize).max(1);
        if n == 0 {
            return Err(Error::Config("training set is empty after filtering".into()));
        }
        if v >= n {
            return Err(Error::Config(format!(
                "{n} samples leave nothing to train on after the validation holdout"
            )));
        }
        Ok(v)
    }
}

/// Early-stopping bookkeeping carried in checkpoints.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Progress {
    /// Epochs completed so far.
    pub epoch: usize,
    pub best_epoch: Option<usize>,
    pub best_val_loss: Option<f64>,
    pub since_best: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_reconstruction: f64,
    pub train_kl: f64,
    pub train_total: f64,
    pub val_reconstruction: f64,
    pub val_kl: f64,
    pub val_total: f64,
    pub wall_time_s: f64,
}

impl EpochMetrics {
    pub fn is_finite(&self) -> bool {
        [
            self.train_reconstruction,
            self.train_kl,
            self.train_total,
            self.val_reconstruction,
            self.val_kl,
            self.val_total,
        ]
        .iter()
        .all(|x| x.is_finite())
    }
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    /// Metrics of the epochs run by this call.
    pub metrics: Vec<EpochMetrics>,
    pub best: Checkpoint,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

/// Read every record of a metrics log.
pub fn read_metrics(path: &Path) -> Result<Vec<EpochMetrics>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| Error::Data(format!("{}: {e}", path.display()))))
        .collect()
}

#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: Model,
    pub optimizer: Adam,
    pub config: TrainConfig,
    pub progress: Progress,
    pub best_params: Option<ParamStore>,
}

impl Trainer {
    pub fn new(model: Model, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let optimizer = Adam::new(
            model.params(),
            AdamConfig {
                learning_rate: config.learning_rate,
                ..AdamConfig::default()
            },
        );
        Ok(Self {
            model,
            optimizer,
            config,
            progress: Progress::default(),
            best_params: None,
        })
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let model = ckpt.build_model()?;
        let optimizer = ckpt
            .optimizer
            .clone()
            .ok_or_else(|| Error::Checkpoint("checkpoint has no optimizer state to resume".into()))?;
        Ok(Self {
            model,
            optimizer,
            config: ckpt.meta.train.clone(),
            progress: ckpt.meta.progress,
            best_params: None,
        })
    }

    /// Resume from `run_dir/last.ckpt`, restoring the best parameters too.
    pub fn resume(run_dir: &Path) -> Result<Self> {
        let mut t = Self::from_checkpoint(&Checkpoint::load(&run_dir.join(LAST_CHECKPOINT))?)?;
        let best = run_dir.join(BEST_CHECKPOINT);
        if t.progress.best_epoch.is_some() && best.exists() {
            t.best_params = Some(Checkpoint::load(&best)?.params);
        }
        Ok(t)
    }

    pub fn beta(&self) -> f64 {
        match &self.model {
            Model::Svfp(m) => m.config.beta,
            Model::Baseline(_) => 0.0,
        }
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::new(&self.model, Some(&self.optimizer), &self.config, self.progress)
    }

    fn forward(&self, tape: &mut Tape, batch: &Batch, noise: Noise, trainable: bool) -> Result<(LossVars, nowcast_autograd::Bound)> {
        let params = self.model.params();
        let p = if trainable { params.bind(tape) } else { params.bind_frozen(tape) };
        let vars = match &self.model {
            Model::Svfp(m) => {
                let noise = match noise {
                    Noise::Seed(seed) => batch.latent_noise(m.config.latent_dim, seed),
                    Noise::PerSample(seeds) => per_sample_noise(batch.len() - 1, m.config.latent_dim, seeds),
                };
                svfp_loss(m, tape, &p, batch, &noise, m.config.beta, self.config.loss_steps)?
            }
            Model::Baseline(m) => baseline_loss(m, tape, &p, batch, self.config.loss_steps)?,
        };
        Ok((vars, p))
    }

    fn breakdown(&self, tape: &Tape, v: &LossVars) -> LossBreakdown {
        LossBreakdown {
            reconstruction: tape.value(v.reconstruction).item(),
            kl: tape.value(v.kl).item(),
            total: tape.value(v.total).item(),
            beta: self.beta(),
        }
    }

    /// Loss and unclipped parameter gradients on one batch.
    pub fn loss_and_grads(&self, batch: &Batch, noise_seed: u64) -> Result<(LossBreakdown, Vec<Tensor>)> {
        let mut tape = Tape::new();
        let (vars, p) = self.forward(&mut tape, batch, Noise::Seed(noise_seed), true)?;
        let loss = self.breakdown(&tape, &vars);
        if !loss.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite loss (reconstruction {}, kl {})",
                loss.reconstruction, loss.kl
            )));
        }
        let mut grads = tape.backward(vars.total)?;
        Ok((loss, self.model.params().collect_grads(&p, &mut grads)))
    }

    /// Loss without gradients.
    pub fn loss(&self, batch: &Batch, noise_seed: u64) -> Result<LossBreakdown> {
        self.loss_with(batch, Noise::Seed(noise_seed))
    }

    fn loss_with(&self, batch: &Batch, noise: Noise) -> Result<LossBreakdown> {
        let mut tape = Tape::new();
        let (vars, _) = self.forward(&mut tape, batch, noise, false)?;
        Ok(self.breakdown(&tape, &vars))
    }

    /// Loss plus the branch pattern of its piecewise-linear ops, for
    /// telling smooth finite-difference probes from ones across a kink.
    pub fn loss_with_branches(&self, batch: &Batch, noise_seed: u64) -> Result<(LossBreakdown, Vec<u8>)> {
        let mut tape = Tape::new();
        let (vars, _) = self.forward(&mut tape, batch, Noise::Seed(noise_seed), false)?;
        Ok((self.breakdown(&tape, &vars), tape.branch_pattern()))
    }

    /// One optimizer update on a batch. Returns the loss before the update.
    pub fn train_step(&mut self, samples: &[&Sample], noise_seed: u64) -> Result<LossBreakdown> {
        let batch = Batch::new(samples)?;
        let (loss, mut grads) = self.loss_and_grads(&batch, noise_seed)?;
        let norm = clip_global_norm(&mut grads, self.config.clip_norm);
        if !norm.is_finite() {
            return Err(Error::Numerical(format!("non-finite gradient norm at loss {}", loss.total)));
        }
        self.optimizer.update(self.model.params_mut(), &grads)?;
        Ok(loss)
    }

    /// Sample-weighted mean loss over `samples`. Each sample's latent noise
    /// is keyed by its content, so the result does not depend on order.
    pub fn validation_loss(&self, samples: &[Sample]) -> Result<LossBreakdown> {
        let mut acc = LossBreakdown {
            beta: self.beta(),
            ..LossBreakdown::default()
        };
        for chunk in samples.chunks(self.config.batch_size) {
            let refs: Vec<&Sample> = chunk.iter().collect();
            let seeds: Vec<u64> = chunk
                .iter()
                .map(|s| derive(self.config.seed, VALIDATION_STREAM, fingerprint(s)))
                .collect();
            let l = self.loss_with(&Batch::new(&refs)?, Noise::PerSample(&seeds))?;
            let w = chunk.len() as f64;
            acc.reconstruction += w * l.reconstruction;
            acc.kl += w * l.kl;
            acc.total += w * l.total;
        }
        let n = samples.len().max(1) as f64;
        acc.reconstruction /= n;
        acc.kl /= n;
        acc.total /= n;
        Ok(acc)
    }

    /// One pass over the training samples in a seed-determined order.
    pub fn run_epoch(&mut self, train: &[Sample], epoch: usize) -> Result<LossBreakdown> {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive(self.config.seed, SHUFFLE_STREAM, epoch as u64)));
        let noise_base = derive(self.config.seed, NOISE_STREAM, epoch as u64);
        let mut acc = LossBreakdown {
            beta: self.beta(),
            ..LossBreakdown::default()
        };
        for (step, idx) in order.chunks(self.config.batch_size).enumerate() {
            let refs: Vec<&Sample> = idx.iter().map(|&i| &train[i]).collect();
            let l = self
                .train_step(&refs, derive(noise_base, 0, step as u64))
                .map_err(|e| match e {
                    Error::Numerical(m) => Error::Numerical(format!("epoch {epoch}, step {step}: {m}")),
                    other => other,
                })?;
            let w = refs.len() as f64;
            acc.reconstruction += w * l.reconstruction;
            acc.kl += w * l.kl;
            acc.total += w * l.total;
        }
        let n = train.len() as f64;
        acc.reconstruction /= n;
        acc.kl /= n;
        acc.total /= n;
        Ok(acc)
    }

    pub fn finished(&self) -> bool {
        self.progress.epoch >= self.config.max_epochs || self.progress.since_best >= self.config.patience
    }

    /// Train until early stopping or `max_epochs`. The last `validation_fraction`
    /// of `samples` is held out. With `run_dir`, appends to the metrics log and
    /// writes `last.ckpt` every epoch and `best.ckpt` on improvement.
    pub fn fit(&mut self, samples: &[Sample], run_dir: Option<&Path>) -> Result<FitOutcome> {
        let n_val = self.config.validation_count(samples.len())?;
        let (train, val) = samples.split_at(samples.len() - n_val);
        let mut log = match run_dir {
            Some(dir) => {
                fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                let path = dir.join(METRICS_FILE);
                Some((
                    OpenOptions::new()
                        .create(true)
                        .append(true)
                        .open(&path)
                        .map_err(|e| Error::io(&path, e))?,
                    path,
                ))
            }
            None => None,
        };
        let mut metrics = Vec::new();
        while !self.finished() {
            let epoch = self.progress.epoch + 1;
            let start = Instant::now();
            let tr = self.run_epoch(train, epoch)?;
            let va = self.validation_loss(val)?;
            let m = EpochMetrics {
                epoch,
                train_reconstruction: tr.reconstruction,
                train_kl: tr.kl,
                train_total: tr.total,
                val_reconstruction: va.reconstruction,
                val_kl: va.kl,
                val_total: va.total,
                wall_time_s: start.elapsed().as_secs_f64(),
            };
            if !m.is_finite() {
                return Err(Error::Numerical(format!("non-finite metrics at epoch {epoch}: {m:?}")));
            }
            self.progress.epoch = epoch;
            let improved = self.progress.best_val_loss.is_none_or(|b| va.total < b);
            if improved {
                self.progress.best_epoch = Some(epoch);
                self.progress.best_val_loss = Some(va.total);
                self.progress.since_best = 0;
                self.best_params = Some(self.model.params().clone());
            } else {
                self.progress.since_best += 1;
            }
            if let Some((file, path)) = &mut log {
                let line = serde_json::to_string(&m).map_err(|e| Error::Data(e.to_string()))?;
                writeln!(file, "{line}").map_err(|e| Error::io(&*path, e))?;
                let dir = run_dir.expect("log implies run dir");
                let ckpt = self.checkpoint();
                if improved {
                    ckpt.save(&dir.join(BEST_CHECKPOINT))?;
                }
                ckpt.save(&dir.join(LAST_CHECKPOINT))?;
            }
            metrics.push(m);
        }
        let best_params = self
            .best_params
            .clone()
            .ok_or_else(|| Error::Config("no epoch completed; raise max_epochs".into()))?;
        let mut best_model = self.model.clone();
        best_model.params_mut().load_from(&best_params)?;
        let best = Checkpoint::new(&best_model, None, &self.config, self.progress);
        Ok(FitOutcome {
            metrics,
            best,
            best_epoch: self.progress.best_epoch.expect("best params imply best epoch"),
            best_val_loss: self.progress.best_val_loss.expect("best params imply best loss"),
            stopped_early: self.progress.since_best >= self.config.patience,
        })
    }
}
