//! Deterministic ConvLSTM baseline operating at full frame resolution.

use nowcast_autograd::{Bound, ParamStore, Tape, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::BaselineConfig;
use super::layers::{Conv2d, ConvLstmCell, LstmVars};
use super::{frames_to_map, map_to_frames, LstmState};
use crate::data::RainFrame;
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct ConvLstmBaseline {
    pub config: BaselineConfig,
    pub params: ParamStore,
    pub layers: Vec<ConvLstmCell>,
    /// 1×1 projection from the top hidden map to one channel.
    pub head: Conv2d,
}

impl ConvLstmBaseline {
    pub fn new(config: BaselineConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let mut in_ch = 1;
        let layers = (0..config.layers)
            .map(|i| {
                let c = ConvLstmCell::new(
                    &mut params,
                    &format!("baseline.convlstm{i}"),
                    in_ch,
                    config.filters,
                    config.kernel,
                    &mut rng,
                );
                in_ch = config.filters;
                c
            })
            .collect();
        let head = Conv2d::new(&mut params, "baseline.head", config.filters, 1, 1, 1, &mut rng);
        Ok(Self {
            config,
            params,
            layers,
            head,
        })
    }

    pub fn zero_state(&self, batch: usize) -> Vec<LstmState> {
        self.layers
            .iter()
            .map(|l| {
                let (h, c) = l.zero_state(batch, self.config.frame_height, self.config.frame_width);
                LstmState { h, c }
            })
            .collect()
    }

    pub fn state_vars(&self, tape: &mut Tape, state: &[LstmState]) -> Vec<LstmVars> {
        state
            .iter()
            .map(|s| LstmVars {
                h: tape.constant(s.h.clone()),
                c: tape.constant(s.c.clone()),
            })
            .collect()
    }

    /// `[1, n, h, w] -> [1, n, h, w]` in `[0, 1]`, advancing `states`.
    pub fn step_var(&self, tape: &mut Tape, p: &Bound, x: Var, states: &mut [LstmVars]) -> Result<Var> {
        let s = tape.shape(x);
        if s.len() != 4 || s[0] != 1 || (s[2], s[3]) != (self.config.frame_height, self.config.frame_width) {
            return Err(Error::Shape(format!(
                "baseline expects [1, n, {}, {}] frames, got {s:?}",
                self.config.frame_height, self.config.frame_width
            )));
        }
        let mut h = x;
        for (cell, st) in self.layers.iter().zip(states.iter_mut()) {
            *st = cell.step(tape, p, h, *st)?;
            h = st.h;
        }
        let y = self.head.forward(tape, p, h)?;
        Ok(tape.sigmoid(y))
    }

    pub fn baseline_predict_next(
        &self,
        frames: &[RainFrame],
        state: &mut Vec<LstmState>,
    ) -> Result<Vec<RainFrame>> {
        let mut tape = Tape::new();
        let p = self.params.bind_frozen(&mut tape);
        let mut sv = self.state_vars(&mut tape, state);
        let x = tape.constant(frames_to_map(frames)?);
        let y = self.step_var(&mut tape, &p, x, &mut sv)?;
        *state = sv
            .iter()
            .map(|v| LstmState {
                h: tape.value(v.h).clone(),
                c: tape.value(v.c).clone(),
            })
            .collect();
        map_to_frames(tape.value(y))
    }

    /// Warm up on the true frames, then feed each prediction back for `n_predict` steps.
    /// `inputs[t]` holds frame `t` of every batch member.
    pub fn rollout_maps(&self, inputs: &[Tensor], n_predict: usize) -> Result<Vec<Tensor>> {
        if n_predict == 0 {
            return Err(Error::Domain("prediction horizon must be >= 1".into()));
        }
        let first = inputs
            .first()
            .ok_or_else(|| Error::Shape("rollout needs at least one input frame".into()))?;
        let batch = first.shape()[1];
        let mut tape = Tape::new();
        let p = self.params.bind_frozen(&mut tape);
        let mut sv = self.state_vars(&mut tape, &self.zero_state(batch));
        let mut last = None;
        for x in inputs {
            let xv = tape.constant(x.clone());
            last = Some(self.step_var(&mut tape, &p, xv, &mut sv)?);
        }
        let mut out = Vec::with_capacity(n_predict);
        let mut y = last.expect("non-empty inputs");
        out.push(tape.value(y).clone());
        for _ in 1..n_predict {
            y = self.step_var(&mut tape, &p, y, &mut sv)?;
            out.push(tape.value(y).clone());
        }
        Ok(out)
    }

    pub fn baseline_rollout(&self, inputs: &[RainFrame], n_predict: usize) -> Result<Vec<RainFrame>> {
        let maps = inputs
            .iter()
            .map(|f| frames_to_map(std::slice::from_ref(f)))
            .collect::<Result<Vec<_>>>()?;
        let out = self.rollout_maps(&maps, n_predict)?;
        let step = inputs
            .windows(2)
            .last()
            .map(|w| w[1].timestamp_min - w[0].timestamp_min)
            .unwrap_or(15.0);
        let last = inputs.last().expect("non-empty inputs");
        out.iter()
            .enumerate()
            .map(|(k, m)| {
                let f = map_to_frames(m)?.remove(0);
                Ok(f.with_resolution(last.resolution_km)
                    .with_timestamp(last.timestamp_min + step * (k + 1) as f64))
            })
            .collect()
    }
}
