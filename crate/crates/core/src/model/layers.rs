//! Parameterized building blocks recorded onto an autograd tape.

use nowcast_autograd::{Bound, ParamId, ParamStore, Tape, Tensor, Var};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::Result;

/// Fan-in-scaled uniform initialization, `U(-sqrt(3/fan_in), sqrt(3/fan_in))`.
fn init_uniform(shape: &[usize], fan_in: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let bound = (3.0 / fan_in.max(1) as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
    Tensor::new(shape, data).expect("init shape")
}

#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl Conv2d {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let shape = [out_channels, in_channels, kernel, kernel];
        let weight = store.add(
            format!("{name}.weight"),
            init_uniform(&shape, in_channels * kernel * kernel, rng),
        );
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[out_channels]));
        Self {
            weight,
            bias,
            in_channels,
            out_channels,
            kernel,
            stride,
        }
    }

    /// "Same" padding: output is `ceil(input / stride)`.
    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var> {
        let y = tape.conv2d(x, p.var(self.weight), self.stride, (self.kernel - 1) / 2)?;
        Ok(tape.add_bias(y, p.var(self.bias))?)
    }
}

/// Stride-2 transposed convolution that exactly doubles the spatial size.
#[derive(Debug, Clone)]
pub struct UpConv2d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
}

impl UpConv2d {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let shape = [in_channels, out_channels, kernel, kernel];
        // Each output site receives roughly in·k²/4 contributions at stride 2.
        let fan_in = (in_channels * kernel * kernel / 4).max(1);
        let weight = store.add(format!("{name}.weight"), init_uniform(&shape, fan_in, rng));
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[out_channels]));
        Self {
            weight,
            bias,
            in_channels,
            out_channels,
            kernel,
        }
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var> {
        let y = tape.conv_transpose2d(x, p.var(self.weight), 2, (self.kernel - 1) / 2, 1)?;
        Ok(tape.add_bias(y, p.var(self.bias))?)
    }
}

#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_features: usize,
    pub out_features: usize,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_features: usize,
        out_features: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let weight = store.add(
            format!("{name}.weight"),
            init_uniform(&[out_features, in_features], in_features, rng),
        );
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[out_features]));
        Self {
            weight,
            bias,
            in_features,
            out_features,
        }
    }

    /// `[in, n] -> [out, n]`.
    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var> {
        let y = tape.matmul(p.var(self.weight), x)?;
        Ok(tape.add_bias(y, p.var(self.bias))?)
    }
}

/// Hidden and cell state of one recurrent layer.
#[derive(Debug, Clone, Copy)]
pub struct LstmVars {
    pub h: Var,
    pub c: Var,
}

/// Gate bias vector with the forget block set to +1. Gate order is
/// input, forget, candidate, output.
fn lstm_bias(units: usize) -> Tensor {
    let mut b = Tensor::zeros(&[4 * units]);
    b.data_mut()[units..2 * units].fill(1.0);
    b
}

/// Shared gate arithmetic for dense and convolutional LSTMs.
fn lstm_update(tape: &mut Tape, gates: Var, units: usize, state: LstmVars) -> Result<LstmVars> {
    let i = tape.slice0(gates, 0, units)?;
    let f = tape.slice0(gates, units, units)?;
    let g = tape.slice0(gates, 2 * units, units)?;
    let o = tape.slice0(gates, 3 * units, units)?;
    let (i, f, g, o) = (tape.sigmoid(i), tape.sigmoid(f), tape.tanh(g), tape.sigmoid(o));
    let keep = tape.mul(f, state.c)?;
    let write = tape.mul(i, g)?;
    let c = tape.add(keep, write)?;
    let tc = tape.tanh(c);
    let h = tape.mul(o, tc)?;
    Ok(LstmVars { h, c })
}

/// Fully connected LSTM over `[features, n]` inputs.
#[derive(Debug, Clone)]
pub struct LstmCell {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_features: usize,
    pub units: usize,
}

impl LstmCell {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_features: usize,
        units: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let fan_in = in_features + units;
        let weight = store.add(
            format!("{name}.weight"),
            init_uniform(&[4 * units, fan_in], fan_in, rng),
        );
        let bias = store.add(format!("{name}.bias"), lstm_bias(units));
        Self {
            weight,
            bias,
            in_features,
            units,
        }
    }

    pub fn zero_state(&self, batch: usize) -> (Tensor, Tensor) {
        (
            Tensor::zeros(&[self.units, batch]),
            Tensor::zeros(&[self.units, batch]),
        )
    }

    pub fn step(&self, tape: &mut Tape, p: &Bound, x: Var, state: LstmVars) -> Result<LstmVars> {
        let xh = tape.concat0(&[x, state.h])?;
        let gates = tape.matmul(p.var(self.weight), xh)?;
        let gates = tape.add_bias(gates, p.var(self.bias))?;
        lstm_update(tape, gates, self.units, state)
    }
}

/// Convolutional LSTM over `[channels, n, h, w]` inputs; gates are a
/// same-padded convolution of the input concatenated with the hidden map.
#[derive(Debug, Clone)]
pub struct ConvLstmCell {
    pub gates: Conv2d,
    pub in_channels: usize,
    pub filters: usize,
}

impl ConvLstmCell {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_channels: usize,
        filters: usize,
        kernel: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let mut gates = Conv2d::new(store, name, in_channels + filters, 4 * filters, kernel, 1, rng);
        *store.get_mut(gates.bias) = lstm_bias(filters);
        gates.stride = 1;
        Self {
            gates,
            in_channels,
            filters,
        }
    }

    pub fn kernel(&self) -> usize {
        self.gates.kernel
    }

    pub fn zero_state(&self, batch: usize, h: usize, w: usize) -> (Tensor, Tensor) {
        let shape = [self.filters, batch, h, w];
        (Tensor::zeros(&shape), Tensor::zeros(&shape))
    }

    pub fn step(&self, tape: &mut Tape, p: &Bound, x: Var, state: LstmVars) -> Result<LstmVars> {
        let xh = tape.concat0(&[x, state.h])?;
        let gates = self.gates.forward(tape, p, xh)?;
        lstm_update(tape, gates, self.filters, state)
    }
}
