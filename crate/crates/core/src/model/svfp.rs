//! Stochastic variational frame predictor: a convolutional encoder, a
//! ConvLSTM prediction stack conditioned on a latent sample, a mirrored
//! transposed-convolution decoder, and recurrent Gaussian heads for the
//! learned prior `p(z_i | x_{1:i-1})` and the inference model `q(z_i | x_{1:i})`.

use nowcast_autograd::{Bound, ParamStore, Tape, Tensor, Var};
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use super::config::ModelConfig;
use super::layers::{Conv2d, ConvLstmCell, Linear, LstmCell, LstmVars, UpConv2d};
use super::{frames_to_map, map_to_frames, LstmState};
use crate::data::RainFrame;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    Prior,
    Inference,
}

/// Diagonal Gaussian over the latent space, one column per batch member.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianParams {
    /// `[latent_dim, n]`
    pub mean: Tensor,
    /// `[latent_dim, n]`, clamped to `±logvar_clamp`.
    pub log_variance: Tensor,
}

impl GaussianParams {
    /// Single-member parameters from plain vectors.
    pub fn from_vecs(mean: Vec<f64>, log_variance: Vec<f64>) -> Result<Self> {
        if mean.len() != log_variance.len() {
            return Err(Error::Shape(format!(
                "mean has {} entries, log-variance {}",
                mean.len(),
                log_variance.len()
            )));
        }
        let d = mean.len();
        Ok(Self {
            mean: Tensor::new(&[d, 1], mean)?,
            log_variance: Tensor::new(&[d, 1], log_variance)?,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.shape()[0]
    }

    pub fn is_finite(&self) -> bool {
        self.mean.all_finite() && self.log_variance.all_finite()
    }
}

/// Reparameterized draw `mean + exp(log_variance / 2) ⊙ noise`.
pub fn sample_latent(params: &GaussianParams, noise: &Tensor) -> Result<Tensor> {
    if noise.shape() != params.mean.shape() {
        return Err(Error::Shape(format!(
            "noise {:?} does not match latent {:?}",
            noise.shape(),
            params.mean.shape()
        )));
    }
    let data = params
        .mean
        .data()
        .iter()
        .zip(params.log_variance.data())
        .zip(noise.data())
        .map(|((m, lv), e)| m + (0.5 * lv).exp() * e)
        .collect();
    Ok(Tensor::new(params.mean.shape(), data)?)
}

/// Differentiable counterpart of [`sample_latent`].
pub fn sample_latent_var(tape: &mut Tape, mean: Var, log_variance: Var, noise: Var) -> Result<Var> {
    let half = tape.scale(log_variance, 0.5);
    let std = tape.exp(half);
    let scaled = tape.mul(std, noise)?;
    Ok(tape.add(mean, scaled)?)
}

/// Recurrent state of every component, as plain tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentState {
    pub predictor: Vec<LstmState>,
    pub prior: LstmState,
    pub inference: LstmState,
}

/// Recurrent state recorded on a tape.
#[derive(Debug, Clone)]
pub struct StateVars {
    pub predictor: Vec<LstmVars>,
    pub prior: LstmVars,
    pub inference: LstmVars,
}

#[derive(Debug, Clone)]
pub struct Encoder {
    pub layers: Vec<Conv2d>,
    slope: f64,
}

impl Encoder {
    fn new(store: &mut ParamStore, name: &str, cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Self {
        let mut in_ch = 1;
        let layers = cfg
            .encoder_filters
            .iter()
            .zip(&cfg.encoder_kernels)
            .enumerate()
            .map(|(i, (&f, &k))| {
                let l = Conv2d::new(store, &format!("{name}.conv{i}"), in_ch, f, k, 2, rng);
                in_ch = f;
                l
            })
            .collect();
        Self {
            layers,
            slope: cfg.leaky_slope,
        }
    }

    fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var> {
        let mut h = x;
        for l in &self.layers {
            let y = l.forward(tape, p, h)?;
            h = tape.leaky_relu(y, self.slope);
        }
        Ok(h)
    }
}

#[derive(Debug, Clone)]
pub struct Decoder {
    pub layers: Vec<UpConv2d>,
    slope: f64,
}

impl Decoder {
    /// Mirror of the encoder: filters reversed down to one output channel,
    /// kernels reversed.
    fn new(store: &mut ParamStore, cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Self {
        let n = cfg.encoder_filters.len();
        let mut in_ch = cfg.predictor_filters;
        let layers = (0..n)
            .map(|i| {
                let out = if i + 1 < n {
                    cfg.encoder_filters[n - 2 - i]
                } else {
                    1
                };
                let l = UpConv2d::new(
                    store,
                    &format!("decoder.deconv{i}"),
                    in_ch,
                    out,
                    cfg.encoder_kernels[n - 1 - i],
                    rng,
                );
                in_ch = out;
                l
            })
            .collect();
        Self {
            layers,
            slope: cfg.leaky_slope,
        }
    }

    fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var> {
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let y = l.forward(tape, p, h)?;
            h = if i == last {
                tape.sigmoid(y)
            } else {
                tape.leaky_relu(y, self.slope)
            };
        }
        Ok(h)
    }
}

/// Extra stride-2 convolution, an LSTM, and parallel linear mean and
/// log-variance projections.
#[derive(Debug, Clone)]
pub struct GaussianHead {
    pub encoder: Option<Encoder>,
    pub conv: Conv2d,
    pub lstm: LstmCell,
    pub mean: Linear,
    pub log_variance: Linear,
    slope: f64,
    clamp: f64,
}

impl GaussianHead {
    fn new(store: &mut ParamStore, name: &str, cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Self {
        let encoder = (!cfg.share_encoder).then(|| Encoder::new(store, &format!("{name}.encoder"), cfg, rng));
        let enc_out = *cfg.encoder_filters.last().expect("validated encoder");
        let conv = Conv2d::new(store, &format!("{name}.conv"), enc_out, cfg.head_filters, cfg.head_kernel, 2, rng);
        let (fh, fw) = cfg.feature_dims();
        let flat = cfg.head_filters * fh.div_ceil(2) * fw.div_ceil(2);
        let lstm = LstmCell::new(store, &format!("{name}.lstm"), flat, cfg.lstm_units, rng);
        let mean = Linear::new(store, &format!("{name}.mean"), cfg.lstm_units, cfg.latent_dim, rng);
        let log_variance = Linear::new(store, &format!("{name}.logvar"), cfg.lstm_units, cfg.latent_dim, rng);
        Self {
            encoder,
            conv,
            lstm,
            mean,
            log_variance,
            slope: cfg.leaky_slope,
            clamp: cfg.logvar_clamp,
        }
    }

    /// Returns `(mean, log_variance, new_state)`.
    fn step(
        &self,
        tape: &mut Tape,
        p: &Bound,
        frame: Var,
        shared: Var,
        state: LstmVars,
    ) -> Result<(Var, Var, LstmVars)> {
        let features = match &self.encoder {
            Some(enc) => enc.forward(tape, p, frame)?,
            None => shared,
        };
        let y = self.conv.forward(tape, p, features)?;
        let y = tape.leaky_relu(y, self.slope);
        let flat = tape.flatten_map(y)?;
        let state = self.lstm.step(tape, p, flat, state)?;
        let mean = self.mean.forward(tape, p, state.h)?;
        let lv = self.log_variance.forward(tape, p, state.h)?;
        let lv = tape.clamp(lv, -self.clamp, self.clamp);
        Ok((mean, lv, state))
    }
}

/// The full predictor with its parameters.
#[derive(Debug, Clone)]
pub struct Svfp {
    pub config: ModelConfig,
    pub params: ParamStore,
    pub encoder: Encoder,
    pub decoder: Decoder,
    pub predictor: Vec<ConvLstmCell>,
    pub prior: GaussianHead,
    pub inference: GaussianHead,
}

impl Svfp {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let encoder = Encoder::new(&mut params, "encoder", &config, &mut rng);
        let mut in_ch = config.predictor_filters + config.latent_dim;
        let predictor = (0..config.predictor_layers)
            .map(|i| {
                let cell = ConvLstmCell::new(
                    &mut params,
                    &format!("predictor.convlstm{i}"),
                    in_ch,
                    config.predictor_filters,
                    config.predictor_kernel,
                    &mut rng,
                );
                in_ch = config.predictor_filters;
                cell
            })
            .collect();
        let decoder = Decoder::new(&mut params, &config, &mut rng);
        let prior = GaussianHead::new(&mut params, "prior", &config, &mut rng);
        let inference = GaussianHead::new(&mut params, "inference", &config, &mut rng);
        Ok(Self {
            config,
            params,
            encoder,
            decoder,
            predictor,
            prior,
            inference,
        })
    }

    pub fn head(&self, which: Head) -> &GaussianHead {
        match which {
            Head::Prior => &self.prior,
            Head::Inference => &self.inference,
        }
    }

    pub fn zero_state(&self, batch: usize) -> RecurrentState {
        let (fh, fw) = self.config.feature_dims();
        let lstm = |c: &LstmCell| {
            let (h, c) = c.zero_state(batch);
            LstmState { h, c }
        };
        RecurrentState {
            predictor: self
                .predictor
                .iter()
                .map(|cell| {
                    let (h, c) = cell.zero_state(batch, fh, fw);
                    LstmState { h, c }
                })
                .collect(),
            prior: lstm(&self.prior.lstm),
            inference: lstm(&self.inference.lstm),
        }
    }

    pub fn state_vars(&self, tape: &mut Tape, state: &RecurrentState) -> StateVars {
        let mut bind = |s: &LstmState| LstmVars {
            h: tape.constant(s.h.clone()),
            c: tape.constant(s.c.clone()),
        };
        StateVars {
            predictor: state.predictor.iter().map(&mut bind).collect(),
            prior: bind(&state.prior),
            inference: bind(&state.inference),
        }
    }

    pub fn read_state(&self, tape: &Tape, vars: &StateVars) -> RecurrentState {
        let get = |v: &LstmVars| LstmState {
            h: tape.value(v.h).clone(),
            c: tape.value(v.c).clone(),
        };
        RecurrentState {
            predictor: vars.predictor.iter().map(get).collect(),
            prior: get(&vars.prior),
            inference: get(&vars.inference),
        }
    }

    /// Zero-pad a `[1, n, h, w]` frame batch to the encoder's multiple.
    pub fn pad_var(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let (h, w) = self.config.padded_dims();
        let s = tape.shape(x);
        if (s[2], s[3]) != (self.config.frame_height, self.config.frame_width) {
            return Err(Error::Shape(format!(
                "model expects {}x{} frames, got {}x{}",
                self.config.frame_height, self.config.frame_width, s[2], s[3]
            )));
        }
        Ok(tape.pad2d(x, h, w)?)
    }

    pub fn encode_var(&self, tape: &mut Tape, p: &Bound, padded: Var) -> Result<Var> {
        let s = tape.shape(padded);
        let m = self.config.pad_multiple();
        if s.len() != 4 || s[0] != 1 || s[2] % m != 0 || s[3] % m != 0 {
            return Err(Error::Shape(format!(
                "encoder input must be [1, n, h, w] with h, w divisible by {m}, got {s:?}"
            )));
        }
        self.encoder.forward(tape, p, padded)
    }

    /// Decode to `[1, n, frame_height, frame_width]` in `[0, 1]`.
    pub fn decode_var(&self, tape: &mut Tape, p: &Bound, features: Var) -> Result<Var> {
        let (fh, fw) = self.config.feature_dims();
        let s = tape.shape(features);
        if s.len() != 4 || s[0] != self.config.predictor_filters || (s[2], s[3]) != (fh, fw) {
            return Err(Error::Shape(format!(
                "decoder expects [{}, n, {fh}, {fw}], got {s:?}",
                self.config.predictor_filters
            )));
        }
        let y = self.decoder.forward(tape, p, features)?;
        Ok(tape.crop2d(y, self.config.frame_height, self.config.frame_width)?)
    }

    pub fn head_var(
        &self,
        which: Head,
        tape: &mut Tape,
        p: &Bound,
        padded: Var,
        features: Var,
        state: LstmVars,
    ) -> Result<(Var, Var, LstmVars)> {
        self.head(which).step(tape, p, padded, features, state)
    }

    /// Broadcast `z` over the feature grid, concatenate on channels and run
    /// the ConvLSTM stack. Returns the top layer's hidden map.
    pub fn predict_var(
        &self,
        tape: &mut Tape,
        p: &Bound,
        features: Var,
        z: Var,
        states: &mut [LstmVars],
    ) -> Result<Var> {
        let fs = tape.shape(features).to_vec();
        let zs = tape.shape(z);
        if zs.len() != 2 || zs[0] != self.config.latent_dim || zs[1] != fs[1] {
            return Err(Error::Shape(format!(
                "latent must be [{}, {}], got {zs:?}",
                self.config.latent_dim, fs[1]
            )));
        }
        let zmap = tape.broadcast_spatial(z, fs[2], fs[3])?;
        let mut x = tape.concat0(&[features, zmap])?;
        for (cell, st) in self.predictor.iter().zip(states.iter_mut()) {
            *st = cell.step(tape, p, x, *st)?;
            x = st.h;
        }
        Ok(x)
    }

    fn check_frames(&self, frames: &[RainFrame]) -> Result<()> {
        if frames.is_empty() {
            return Err(Error::Shape("empty frame batch".into()));
        }
        Ok(())
    }

    /// Encoder features `[C, n, h/16, w/16]` of already padded frames.
    pub fn encode(&self, frames: &[RainFrame]) -> Result<Tensor> {
        self.check_frames(frames)?;
        let mut tape = Tape::new();
        let p = self.params.bind_frozen(&mut tape);
        let x = tape.constant(frames_to_map(frames)?);
        let y = self.encode_var(&mut tape, &p, x)?;
        Ok(tape.value(y).clone())
    }

    /// Decode features to frames of the configured (unpadded) size.
    pub fn decode(&self, features: &Tensor) -> Result<Vec<RainFrame>> {
        let mut tape = Tape::new();
        let p = self.params.bind_frozen(&mut tape);
        let f = tape.constant(features.clone());
        let y = self.decode_var(&mut tape, &p, f)?;
        map_to_frames(tape.value(y))
    }

    /// Advance one Gaussian head on `frames` and return its distribution.
    pub fn gaussian_head_step(
        &self,
        frames: &[RainFrame],
        which: Head,
        state: &mut RecurrentState,
    ) -> Result<GaussianParams> {
        self.check_frames(frames)?;
        let mut tape = Tape::new();
        let p = self.params.bind_frozen(&mut tape);
        let mut sv = self.state_vars(&mut tape, state);
        let x = tape.constant(frames_to_map(frames)?);
        let x = self.pad_var(&mut tape, x)?;
        let features = self.encode_var(&mut tape, &p, x)?;
        let slot = match which {
            Head::Prior => &mut sv.prior,
            Head::Inference => &mut sv.inference,
        };
        let (mean, lv, next) = self.head_var(which, &mut tape, &p, x, features, *slot)?;
        *slot = next;
        *state = self.read_state(&tape, &sv);
        Ok(GaussianParams {
            mean: tape.value(mean).clone(),
            log_variance: tape.value(lv).clone(),
        })
    }

    /// One step of the latent ConvLSTM stack.
    pub fn predict_step(&self, features: &Tensor, z: &Tensor, state: &mut RecurrentState) -> Result<Tensor> {
        let mut tape = Tape::new();
        let p = self.params.bind_frozen(&mut tape);
        let mut sv = self.state_vars(&mut tape, state);
        let f = tape.constant(features.clone());
        let zv = tape.constant(z.clone());
        let out = self.predict_var(&mut tape, &p, f, zv, &mut sv.predictor)?;
        *state = self.read_state(&tape, &sv);
        Ok(tape.value(out).clone())
    }

    /// `decode(predict_step(encode(prev), z))`, padding and cropping as needed.
    pub fn predict_next_frame(
        &self,
        prev: &[RainFrame],
        z: &Tensor,
        state: &mut RecurrentState,
    ) -> Result<Vec<RainFrame>> {
        self.check_frames(prev)?;
        let mut tape = Tape::new();
        let p = self.params.bind_frozen(&mut tape);
        let mut sv = self.state_vars(&mut tape, state);
        let x = tape.constant(frames_to_map(prev)?);
        let x = self.pad_var(&mut tape, x)?;
        let f = self.encode_var(&mut tape, &p, x)?;
        let zv = tape.constant(z.clone());
        let h = self.predict_var(&mut tape, &p, f, zv, &mut sv.predictor)?;
        let y = self.decode_var(&mut tape, &p, h)?;
        *state = self.read_state(&tape, &sv);
        map_to_frames(tape.value(y))
    }

    /// `decode(encode(pad(x)))` cropped back to the frame size.
    pub fn reconstruct(&self, frames: &[RainFrame]) -> Result<Vec<RainFrame>> {
        self.check_frames(frames)?;
        let mut tape = Tape::new();
        let p = self.params.bind_frozen(&mut tape);
        let x = tape.constant(frames_to_map(frames)?);
        let x = self.pad_var(&mut tape, x)?;
        let f = self.encode_var(&mut tape, &p, x)?;
        let y = self.decode_var(&mut tape, &p, f)?;
        map_to_frames(tape.value(y))
    }
}
