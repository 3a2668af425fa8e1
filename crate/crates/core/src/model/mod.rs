//! Network definitions: the stochastic variational frame predictor and the
//! ConvLSTM baseline.

mod baseline;
mod config;
pub mod layers;
mod svfp;

use nowcast_autograd::{ParamStore, Tensor};
use serde::{Deserialize, Serialize};

pub use baseline::ConvLstmBaseline;
pub use config::{BaselineConfig, ModelConfig};
pub use svfp::{
    sample_latent, sample_latent_var, Decoder, Encoder, GaussianHead, GaussianParams, Head,
    RecurrentState, StateVars, Svfp,
};

use crate::data::RainFrame;
use crate::{Error, Result};

/// Hidden and cell state of one recurrent layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Tensor,
    pub c: Tensor,
}

/// Stack normalized frames into a `[1, n, h, w]` map.
pub fn frames_to_map(frames: &[RainFrame]) -> Result<Tensor> {
    let first = frames
        .first()
        .ok_or_else(|| Error::Shape("empty frame batch".into()))?;
    let (h, w) = first.dims();
    let mut data = Vec::with_capacity(frames.len() * h * w);
    for f in frames {
        if f.dims() != (h, w) {
            return Err(Error::Shape("frames in a batch differ in size".into()));
        }
        data.extend_from_slice(f.normalized()?);
    }
    Ok(Tensor::new(&[1, frames.len(), h, w], data)?)
}

/// Split a `[1, n, h, w]` map into `n` normalized frames.
pub fn map_to_frames(map: &Tensor) -> Result<Vec<RainFrame>> {
    let s = map.shape();
    if s.len() != 4 || s[0] != 1 {
        return Err(Error::Shape(format!("expected a [1, n, h, w] map, got {s:?}")));
    }
    let plane = s[2] * s[3];
    map.data()
        .chunks(plane)
        .map(|c| RainFrame::from_normalized(s[2], s[3], c.iter().map(|v| v.clamp(0.0, 1.0)).collect()))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Svfp,
    Convlstm,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Svfp => "svfp",
            ModelKind::Convlstm => "convlstm",
        })
    }
}

/// Either trainable network.
#[derive(Debug, Clone)]
pub enum Model {
    Svfp(Svfp),
    Baseline(ConvLstmBaseline),
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Svfp(_) => ModelKind::Svfp,
            Model::Baseline(_) => ModelKind::Convlstm,
        }
    }

    pub fn params(&self) -> &ParamStore {
        match self {
            Model::Svfp(m) => &m.params,
            Model::Baseline(m) => &m.params,
        }
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        match self {
            Model::Svfp(m) => &mut m.params,
            Model::Baseline(m) => &mut m.params,
        }
    }

    pub fn frame_dims(&self) -> (usize, usize) {
        match self {
            Model::Svfp(m) => (m.config.frame_height, m.config.frame_width),
            Model::Baseline(m) => (m.config.frame_height, m.config.frame_width),
        }
    }
}
