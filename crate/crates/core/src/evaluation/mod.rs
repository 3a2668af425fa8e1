//! SSIM scoring per lead time with normal-approximation confidence
//! intervals, and figure output.

mod figures;
mod ssim;

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use figures::{emit_figures, palette, plot_frame_strip, plot_ssim_curves, StripPanel, CURVE_FILE};
pub use ssim::{gaussian_taps, ssim, ssim_planes, C1, C2, SIGMA, WINDOW};

use crate::data::{RainFrame, Sample};
use crate::forecaster::{baseline_forecast, ensemble_forecast};
use crate::model::Model;
use crate::seeds::derive;
use crate::{Error, Result};

pub const SCORES_FILE: &str = "scores.jsonl";
pub const SAMPLE_SCORES_FILE: &str = "ssim_samples.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreKind {
    /// Forecast frame at lead `lead`.
    Forecast,
    /// `decode(encode(x))` of input frame `lead`.
    Reconstruction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeadTimeScore {
    pub model: String,
    pub kind: ScoreKind,
    pub lead: usize,
    pub mean: f64,
    /// Half-width of the 95% interval, `1.96 s / sqrt(n)`.
    pub ci: f64,
    pub n: usize,
}

/// Mean and 95% half-width of per-sample scores. A single sample has zero width.
pub fn aggregate(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, 1.96 * var.sqrt() / n.sqrt())
}

/// Per-sample SSIMs for one lead, kept so scores can be recomputed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleScores {
    pub model: String,
    pub kind: ScoreKind,
    pub lead: usize,
    pub values: Vec<f64>,
}

impl SampleScores {
    pub fn score(&self) -> LeadTimeScore {
        let (mean, ci) = aggregate(&self.values);
        LeadTimeScore {
            model: self.model.clone(),
            kind: self.kind,
            lead: self.lead,
            mean,
            ci,
            n: self.values.len(),
        }
    }
}

/// What produces the forecasts being scored.
#[derive(Debug, Clone, Copy)]
pub enum Predictor<'a> {
    Model(&'a Model),
    /// Returns the ground truth.
    Oracle,
    /// Repeats the last input frame.
    Persistence,
}

impl Predictor<'_> {
    pub fn label(&self) -> String {
        match self {
            Predictor::Model(m) => m.kind().to_string(),
            Predictor::Oracle => "oracle".into(),
            Predictor::Persistence => "persistence".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub n_predict: usize,
    /// Ensemble size for the stochastic model.
    pub members: usize,
    /// Score the ensemble mean; otherwise score member 0 alone.
    pub ensemble_mean: bool,
    pub seed: u64,
    /// Number of frame-strip figures.
    pub strips: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            n_predict: 10,
            members: 10,
            ensemble_mean: true,
            seed: 0,
            strips: 5,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_predict == 0 || self.members == 0 {
            return Err(Error::Config("evaluation needs n_predict >= 1 and members >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub model: String,
    pub leads: Vec<LeadTimeScore>,
    /// Empty except for the variational model.
    pub reconstruction: Vec<LeadTimeScore>,
    pub samples: Vec<SampleScores>,
}

impl Evaluation {
    /// Mean forecast SSIM at lead `lead` (1-based).
    pub fn lead(&self, lead: usize) -> Option<&LeadTimeScore> {
        self.leads.iter().find(|s| s.lead == lead)
    }
}

/// Forecast frames scored for one sample: the ensemble mean (or member 0)
/// for the variational model, the single rollout for the baseline.
pub fn predict_sample(predictor: Predictor, sample: &Sample, index: usize, cfg: &EvalConfig) -> Result<Vec<RainFrame>> {
    let n = cfg.n_predict;
    Ok(match predictor {
        Predictor::Oracle => sample.targets[..n].to_vec(),
        Predictor::Persistence => vec![sample.inputs.last().expect("inputs").clone(); n],
        Predictor::Model(Model::Baseline(m)) => baseline_forecast(m, &sample.inputs, n)?.mean,
        Predictor::Model(Model::Svfp(m)) => {
            let members = if cfg.ensemble_mean { cfg.members } else { 1 };
            let f = ensemble_forecast(m, &sample.inputs, n, members, derive(cfg.seed, 0, index as u64))?;
            if cfg.ensemble_mean {
                f.mean
            } else {
                f.members.into_iter().next().expect("one member")
            }
        }
    })
}

/// SSIM against ground truth for every sample and lead time.
pub fn evaluate(predictor: Predictor, test: &[Sample], cfg: &EvalConfig) -> Result<Evaluation> {
    cfg.validate()?;
    if test.is_empty() {
        return Err(Error::Config("test set is empty".into()));
    }
    if let Some(s) = test.iter().find(|s| s.targets.len() < cfg.n_predict) {
        return Err(Error::Config(format!(
            "test samples hold {} targets, evaluation asks for {}",
            s.targets.len(),
            cfg.n_predict
        )));
    }
    let model = predictor.label();
    let n_inputs = test[0].inputs.len();
    let mut per_lead = vec![Vec::with_capacity(test.len()); cfg.n_predict];
    let mut per_input = vec![Vec::with_capacity(test.len()); n_inputs];
    for (i, sample) in test.iter().enumerate() {
        let pred = predict_sample(predictor, sample, i, cfg)?;
        for (t, (p, truth)) in pred.iter().zip(&sample.targets).enumerate() {
            per_lead[t].push(ssim(p, truth)?);
        }
        if let Predictor::Model(Model::Svfp(m)) = predictor {
            for (t, (r, x)) in m.reconstruct(&sample.inputs)?.iter().zip(&sample.inputs).enumerate() {
                per_input[t].push(ssim(r, x)?);
            }
        }
    }
    let wrap = |kind, v: Vec<Vec<f64>>| -> Vec<SampleScores> {
        v.into_iter()
            .enumerate()
            .filter(|(_, values)| !values.is_empty())
            .map(|(t, values)| SampleScores {
                model: model.clone(),
                kind,
                lead: t + 1,
                values,
            })
            .collect()
    };
    let mut samples = wrap(ScoreKind::Reconstruction, per_input);
    samples.extend(wrap(ScoreKind::Forecast, per_lead));
    let (mut leads, mut reconstruction) = (Vec::new(), Vec::new());
    for s in &samples {
        let score = s.score();
        if !score.mean.is_finite() {
            return Err(Error::Numerical(format!("non-finite SSIM at lead {}", s.lead)));
        }
        match s.kind {
            ScoreKind::Forecast => leads.push(score),
            ScoreKind::Reconstruction => reconstruction.push(score),
        }
    }
    Ok(Evaluation {
        model,
        leads,
        reconstruction,
        samples,
    })
}

fn write_jsonl<T: Serialize>(path: &Path, records: impl Iterator<Item = T>) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for r in records {
        let line = serde_json::to_string(&r).map_err(|e| Error::Data(e.to_string()))?;
        writeln!(f, "{line}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Write `scores.jsonl` (one record per model, kind and lead) and the
/// per-sample values they aggregate.
pub fn write_scores(dir: &Path, evals: &[Evaluation]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_jsonl(
        &dir.join(SCORES_FILE),
        evals.iter().flat_map(|e| e.reconstruction.iter().chain(&e.leads)),
    )?;
    write_jsonl(&dir.join(SAMPLE_SCORES_FILE), evals.iter().flat_map(|e| e.samples.iter()))
}

pub fn read_scores(path: &Path) -> Result<Vec<LeadTimeScore>> {
    read_jsonl(path)
}

pub fn read_sample_scores(path: &Path) -> Result<Vec<SampleScores>> {
    read_jsonl(path)
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| Error::Data(format!("{}: {e}", path.display()))))
        .collect()
}
