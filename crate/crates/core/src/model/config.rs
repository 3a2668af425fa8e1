use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Architecture of the stochastic variational frame predictor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Unpadded frame size the Gaussian heads are built for.
    pub frame_height: usize,
    pub frame_width: usize,
    pub encoder_filters: Vec<usize>,
    pub encoder_kernels: Vec<usize>,
    pub predictor_layers: usize,
    pub predictor_filters: usize,
    pub predictor_kernel: usize,
    pub head_filters: usize,
    pub head_kernel: usize,
    pub lstm_units: usize,
    pub latent_dim: usize,
    pub beta: f64,
    pub n_inputs: usize,
    pub n_predict: usize,
    pub leaky_slope: f64,
    pub logvar_clamp: f64,
    /// Prior and inference heads reuse the predictor's encoder when true;
    /// otherwise each head owns an encoder of the same shape.
    pub share_encoder: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            frame_height: 160,
            frame_width: 110,
            encoder_filters: vec![16, 32, 64, 128],
            encoder_kernels: vec![5, 5, 3, 3],
            predictor_layers: 2,
            predictor_filters: 128,
            predictor_kernel: 3,
            head_filters: 128,
            head_kernel: 3,
            lstm_units: 64,
            latent_dim: 70,
            beta: 1e-7,
            n_inputs: 5,
            n_predict: 10,
            leaky_slope: 0.2,
            logvar_clamp: 14.0,
            share_encoder: true,
        }
    }
}

impl ModelConfig {
    /// Reduced widths for 32×32 frames on a single CPU core.
    pub fn desk() -> Self {
        Self {
            frame_height: 32,
            frame_width: 32,
            encoder_filters: vec![8, 16, 32, 32],
            predictor_filters: 32,
            head_filters: 32,
            lstm_units: 32,
            ..Self::default()
        }
    }

    /// Spatial size both frame dimensions are padded to a multiple of.
    pub fn pad_multiple(&self) -> usize {
        1 << self.encoder_filters.len()
    }

    pub fn padded_dims(&self) -> (usize, usize) {
        let m = self.pad_multiple();
        (
            self.frame_height.div_ceil(m) * m,
            self.frame_width.div_ceil(m) * m,
        )
    }

    /// Spatial size of the encoder output for the padded frame.
    pub fn feature_dims(&self) -> (usize, usize) {
        let (h, w) = self.padded_dims();
        let m = self.pad_multiple();
        (h / m, w / m)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.frame_height,
            self.frame_width,
            self.predictor_layers,
            self.predictor_filters,
            self.predictor_kernel,
            self.head_filters,
            self.head_kernel,
            self.lstm_units,
            self.latent_dim,
            self.n_inputs,
            self.n_predict,
        ];
        if positive.contains(&0) {
            return Err(Error::Config("model sizes must all be positive".into()));
        }
        if self.encoder_filters.is_empty()
            || self.encoder_filters.len() != self.encoder_kernels.len()
            || self.encoder_filters.contains(&0)
            || self.encoder_kernels.iter().any(|k| k % 2 == 0)
        {
            return Err(Error::Config(
                "encoder needs matching non-empty filter/kernel lists with odd kernels".into(),
            ));
        }
        if self.predictor_kernel % 2 == 0 || self.head_kernel % 2 == 0 {
            return Err(Error::Config("predictor and head kernels must be odd".into()));
        }
        if self.encoder_filters.last() != Some(&self.predictor_filters) {
            return Err(Error::Config(
                "predictor filters must equal the last encoder filter count (the decoder mirrors the encoder)".into(),
            ));
        }
        if !(self.beta >= 0.0) || !(self.logvar_clamp > 0.0) {
            return Err(Error::Config("beta must be >= 0 and logvar_clamp > 0".into()));
        }
        Ok(())
    }
}

/// The deterministic ConvLSTM comparison model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineConfig {
    pub frame_height: usize,
    pub frame_width: usize,
    pub layers: usize,
    pub filters: usize,
    pub kernel: usize,
    pub n_inputs: usize,
    pub n_predict: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            frame_height: 160,
            frame_width: 110,
            layers: 2,
            filters: 64,
            kernel: 3,
            n_inputs: 5,
            n_predict: 10,
        }
    }
}

impl BaselineConfig {
    /// Reduced width for 32×32 frames on a single CPU core.
    pub fn desk() -> Self {
        Self {
            frame_height: 32,
            frame_width: 32,
            filters: 8,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if [self.frame_height, self.frame_width, self.layers, self.filters, self.kernel, self.n_inputs]
            .contains(&0)
            || self.kernel % 2 == 0
        {
            return Err(Error::Config("baseline sizes must be positive with an odd kernel".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_config_geometry() {
        let c = ModelConfig::default();
        c.validate().unwrap();
        assert_eq!(c.padded_dims(), (160, 112));
        assert_eq!(c.feature_dims(), (10, 7));
    }

    #[test]
    fn mismatched_predictor_width_rejected() {
        let c = ModelConfig {
            predictor_filters: 64,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }
}
