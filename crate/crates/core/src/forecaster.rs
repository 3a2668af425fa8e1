//! Autoregressive rollouts with predicted-frame feedback, ensembles of
//! prior-sampled rollouts, and forecast export.

use std::fs;
use std::path::Path;

use nowcast_autograd::{Tape, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::container::{prepare_output_dir, sequence_file_name, write_manifest, write_sequence_file};
use crate::data::{denormalize, ClassTable, Manifest, RainFrame, SequenceEntry, Split, WindowSpec};
use crate::model::{map_to_frames, ConvLstmBaseline, Head, Model, ModelKind, RecurrentState, Svfp};
use crate::{Error, Result};

pub const FORECAST_MANIFEST: &str = "forecast.toml";
pub const DEFAULT_MEMBERS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct Forecast {
    /// `members[k][t]` is lead `t + 1` of member `k`.
    pub members: Vec<Vec<RainFrame>>,
    pub mean: Vec<RainFrame>,
    pub inputs: Vec<RainFrame>,
    /// Empty for the deterministic baseline.
    pub seeds: Vec<u64>,
}

impl Forecast {
    pub fn leads(&self) -> usize {
        self.mean.len()
    }

    /// Per-cell standard deviation across members at lead index `t`.
    pub fn spread(&self, t: usize) -> Result<Vec<f64>> {
        let k = self.members.len() as f64;
        let mean = self.mean[t].normalized()?;
        let mut var = vec![0.0; mean.len()];
        for m in &self.members {
            for ((v, x), mu) in var.iter_mut().zip(m[t].normalized()?).zip(mean) {
                *v += (x - mu) * (x - mu);
            }
        }
        Ok(var.into_iter().map(|v| (v / k).sqrt()).collect())
    }
}

/// Each frame repeated `copies` times along the batch axis.
fn stack(frames: &[RainFrame], copies: usize) -> Result<Vec<Tensor>> {
    let (h, w) = frames[0].dims();
    frames
        .iter()
        .map(|f| {
            if f.dims() != (h, w) {
                return Err(Error::Shape("input frames differ in size".into()));
            }
            let v = f.normalized()?;
            Ok(Tensor::new(&[1, copies, h, w], v.repeat(copies))?)
        })
        .collect()
}

/// Latent noise `[dim, K]`, column `k` drawn from member `k`'s stream.
fn member_noise(rngs: &mut [ChaCha8Rng], dim: usize) -> Tensor {
    let k = rngs.len();
    let mut data = vec![0.0; dim * k];
    for (j, rng) in rngs.iter_mut().enumerate() {
        for i in 0..dim {
            data[i * k + j] = StandardNormal.sample(rng);
        }
    }
    Tensor::new(&[dim, k], data).expect("noise shape")
}

/// Run `seeds.len()` rollouts as one batch. Warm-up transitions draw `z`
/// from the inference head over the true frames; generation steps draw it
/// from the prior, which sees the true frames and then each prediction.
/// With `deterministic`, distribution means replace samples.
/// Returns one `[1, K, h, w]` map per lead time.
pub fn rollout_batch(
    model: &Svfp,
    inputs: &[RainFrame],
    n_predict: usize,
    seeds: &[u64],
    deterministic: bool,
) -> Result<Vec<Tensor>> {
    if n_predict == 0 {
        return Err(Error::Domain("prediction horizon must be >= 1".into()));
    }
    if inputs.is_empty() || seeds.is_empty() {
        return Err(Error::Shape("rollout needs input frames and at least one member".into()));
    }
    let k = seeds.len();
    let dim = model.config.latent_dim;
    let mut rngs: Vec<ChaCha8Rng> = seeds.iter().map(|&s| ChaCha8Rng::seed_from_u64(s)).collect();
    let draw = |rngs: &mut [ChaCha8Rng]| {
        if deterministic {
            Tensor::zeros(&[dim, k])
        } else {
            member_noise(rngs, dim)
        }
    };
    let truth = stack(inputs, k)?;
    let mut state = model.zero_state(k);

    // One tape per transition keeps memory flat for long horizons.
    let step = |state: &mut RecurrentState,
                prev: &Tensor,
                next: Option<&Tensor>,
                noise: &Tensor,
                decode: bool|
     -> Result<Option<Tensor>> {
        let mut tape = Tape::new();
        let p = model.params.bind_frozen(&mut tape);
        let mut sv = model.state_vars(&mut tape, state);
        let x = tape.constant(prev.clone());
        let xp = model.pad_var(&mut tape, x)?;
        let f = model.encode_var(&mut tape, &p, xp)?;
        let (pm, plv, s) = model.head_var(Head::Prior, &mut tape, &p, xp, f, sv.prior)?;
        sv.prior = s;
        let (m, lv) = match next {
            Some(next) => {
                let y = tape.constant(next.clone());
                let yp = model.pad_var(&mut tape, y)?;
                let fy = model.encode_var(&mut tape, &p, yp)?;
                let (qm, qlv, s) = model.head_var(Head::Inference, &mut tape, &p, yp, fy, sv.inference)?;
                sv.inference = s;
                (qm, qlv)
            }
            None => (pm, plv),
        };
        let e = tape.constant(noise.clone());
        let z = crate::model::sample_latent_var(&mut tape, m, lv, e)?;
        let h = model.predict_var(&mut tape, &p, f, z, &mut sv.predictor)?;
        let out = if decode {
            let y = model.decode_var(&mut tape, &p, h)?;
            Some(tape.value(y).clone())
        } else {
            None
        };
        *state = model.read_state(&tape, &sv);
        Ok(out)
    };

    // The inference head first sees frame 0 on its own.
    {
        let mut tape = Tape::new();
        let p = model.params.bind_frozen(&mut tape);
        let mut sv = model.state_vars(&mut tape, &state);
        let x = tape.constant(truth[0].clone());
        let xp = model.pad_var(&mut tape, x)?;
        let f = model.encode_var(&mut tape, &p, xp)?;
        let (_, _, s) = model.head_var(Head::Inference, &mut tape, &p, xp, f, sv.inference)?;
        sv.inference = s;
        state = model.read_state(&tape, &sv);
    }
    for t in 1..truth.len() {
        let noise = draw(&mut rngs);
        step(&mut state, &truth[t - 1], Some(&truth[t]), &noise, false)?;
    }
    let mut prev = truth.last().expect("non-empty").clone();
    let mut out = Vec::with_capacity(n_predict);
    for _ in 0..n_predict {
        let noise = draw(&mut rngs);
        let y = step(&mut state, &prev, None, &noise, true)?.expect("decoded");
        prev = y.clone();
        out.push(y);
    }
    Ok(out)
}

/// One stochastic rollout of `n_predict` frames.
pub fn rollout(model: &Svfp, inputs: &[RainFrame], n_predict: usize, seed: u64) -> Result<Vec<RainFrame>> {
    let maps = rollout_batch(model, inputs, n_predict, &[seed], false)?;
    frames_from_maps(&maps, inputs, 0)
}

/// Member `k` of each `[1, K, h, w]` map as frames carrying lead timestamps.
fn frames_from_maps(maps: &[Tensor], inputs: &[RainFrame], k: usize) -> Result<Vec<RainFrame>> {
    let last = inputs.last().expect("non-empty inputs");
    let dt = inputs
        .windows(2)
        .last()
        .map(|w| w[1].timestamp_min - w[0].timestamp_min)
        .unwrap_or(15.0);
    maps.iter()
        .enumerate()
        .map(|(t, m)| {
            let f = map_to_frames(m)?.swap_remove(k);
            Ok(f.with_resolution(last.resolution_km)
                .with_timestamp(last.timestamp_min + dt * (t + 1) as f64))
        })
        .collect()
}

fn mean_frames(members: &[Vec<RainFrame>]) -> Result<Vec<RainFrame>> {
    let k = members.len() as f64;
    (0..members[0].len())
        .map(|t| {
            let first = &members[0][t];
            let mut acc = vec![0.0; first.normalized()?.len()];
            for m in members {
                for (a, x) in acc.iter_mut().zip(m[t].normalized()?) {
                    *a += x;
                }
            }
            let (h, w) = first.dims();
            Ok(RainFrame::from_normalized(h, w, acc.into_iter().map(|a| (a / k).clamp(0.0, 1.0)).collect())?
                .with_timestamp(first.timestamp_min)
                .with_resolution(first.resolution_km))
        })
        .collect()
}

/// `members` rollouts with seeds `base_seed + k`, run as one batch.
pub fn ensemble_forecast(
    model: &Svfp,
    inputs: &[RainFrame],
    n_predict: usize,
    members: usize,
    base_seed: u64,
) -> Result<Forecast> {
    ensemble_forecast_with(model, inputs, n_predict, members, base_seed, false)
}

pub fn ensemble_forecast_with(
    model: &Svfp,
    inputs: &[RainFrame],
    n_predict: usize,
    members: usize,
    base_seed: u64,
    deterministic: bool,
) -> Result<Forecast> {
    if members == 0 {
        return Err(Error::Domain("ensemble size must be >= 1".into()));
    }
    let seeds: Vec<u64> = (0..members as u64).map(|k| base_seed.wrapping_add(k)).collect();
    let maps = rollout_batch(model, inputs, n_predict, &seeds, deterministic)?;
    let members = (0..members)
        .map(|k| frames_from_maps(&maps, inputs, k))
        .collect::<Result<Vec<_>>>()?;
    Ok(Forecast {
        mean: mean_frames(&members)?,
        members,
        inputs: inputs.to_vec(),
        seeds,
    })
}

/// The baseline's single deterministic future, as a one-member forecast.
pub fn baseline_forecast(model: &ConvLstmBaseline, inputs: &[RainFrame], n_predict: usize) -> Result<Forecast> {
    let frames = model.baseline_rollout(inputs, n_predict)?;
    Ok(Forecast {
        mean: frames.clone(),
        members: vec![frames],
        inputs: inputs.to_vec(),
        seeds: Vec::new(),
    })
}

/// Ensemble for the SVFP model, single rollout for the baseline.
pub fn forecast(model: &Model, inputs: &[RainFrame], n_predict: usize, members: usize, base_seed: u64) -> Result<Forecast> {
    match model {
        Model::Svfp(m) => ensemble_forecast(m, inputs, n_predict, members, base_seed),
        Model::Baseline(m) => baseline_forecast(m, inputs, n_predict),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemberEntry {
    pub dir: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// Top-level manifest of an exported forecast.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForecastManifest {
    pub model: ModelKind,
    pub checkpoint_id: String,
    pub n_inputs: usize,
    pub lead_frames: usize,
    pub members: Vec<MemberEntry>,
    pub mean: String,
}

fn write_container(dir: &Path, frames: &[RainFrame], n_inputs: usize, seed: Option<u64>, classes: &ClassTable) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (h, w) = frames[0].dims();
    let dt = frames
        .windows(2)
        .next()
        .map(|p| p[1].timestamp_min - p[0].timestamp_min)
        .unwrap_or(15.0);
    let quantized = frames.iter().map(denormalize).collect::<Result<Vec<_>>>()?;
    let file = sequence_file_name(0);
    write_sequence_file(&dir.join(&file), &quantized)?;
    let window = WindowSpec {
        n_inputs,
        n_targets: frames.len() - n_inputs,
        stride: 1,
    };
    write_manifest(
        dir,
        &Manifest {
            format_version: crate::data::container::FORMAT_VERSION,
            height: h,
            width: w,
            resolution_km: frames[0].resolution_km,
            timestep_min: dt,
            rain_threshold: 0.0,
            train_window: window,
            test_window: window,
            class_table: classes.clone(),
            sequences: vec![SequenceEntry {
                file,
                frames: frames.len(),
                split: Split::Forecast,
                seed,
                samples: vec![0],
            }],
        },
    )
}

/// Write each member and the mean as a dataset container holding the input
/// frames followed by the forecast, plus a `forecast.toml` linking member
/// seeds to the checkpoint.
pub fn export_forecast(
    forecast: &Forecast,
    kind: ModelKind,
    checkpoint_id: &str,
    dir: &Path,
    force: bool,
) -> Result<ForecastManifest> {
    prepare_output_dir(dir, force)?;
    let classes = ClassTable::default();
    let n_inputs = forecast.inputs.len();
    let mut entries = Vec::new();
    for (k, member) in forecast.members.iter().enumerate() {
        let name = format!("member_{k:02}");
        let seed = forecast.seeds.get(k).copied();
        let frames: Vec<RainFrame> = forecast.inputs.iter().chain(member).cloned().collect();
        write_container(&dir.join(&name), &frames, n_inputs, seed, &classes)?;
        entries.push(MemberEntry { dir: name, seed });
    }
    let frames: Vec<RainFrame> = forecast.inputs.iter().chain(&forecast.mean).cloned().collect();
    write_container(&dir.join("mean"), &frames, n_inputs, None, &classes)?;
    let manifest = ForecastManifest {
        model: kind,
        checkpoint_id: checkpoint_id.to_string(),
        n_inputs,
        lead_frames: forecast.leads(),
        members: entries,
        mean: "mean".into(),
    };
    let text = toml::to_string_pretty(&manifest).map_err(|e| Error::Data(e.to_string()))?;
    let path = dir.join(FORECAST_MANIFEST);
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}
