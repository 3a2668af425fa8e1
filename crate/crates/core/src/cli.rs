//! Command implementations behind the `nowcast` binary. Every command
//! takes the resolved configuration and an output root; paths in the
//! configuration are relative to that root.

use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::data::container::{
    prepare_output_dir, sequence_file_name, write_manifest, write_sequence_file, FORMAT_VERSION,
};
use crate::data::{
    downsample, filtered_starts, generate_synthetic_sequence, ClassTable, Dataset, Manifest, Sample,
    Sequence, SequenceEntry, Split,
};
use crate::evaluation::{
    emit_figures, evaluate, predict_sample, read_scores, write_scores, Evaluation, Predictor,
    ScoreKind, StripPanel, SCORES_FILE,
};
use crate::forecaster::{export_forecast, forecast, ForecastManifest};
use crate::model::{ConvLstmBaseline, Model, ModelKind, Svfp};
use crate::seeds::derive;
use crate::trainer::{Checkpoint, FitOutcome, Trainer, BEST_CHECKPOINT, LAST_CHECKPOINT};
use crate::{Error, Result};

/// Flags shared by every command.
#[derive(Debug, Clone, Default)]
pub struct Options {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub model: Option<ModelKind>,
    pub lead: Option<usize>,
    pub members: Option<usize>,
    pub force: bool,
    pub resume: bool,
    /// Index into the test samples for `forecast`.
    pub sample: usize,
}

/// Load the config file (or the defaults), apply `--seed`, derive sub-seeds.
pub fn load_config(opts: &Options) -> Result<RunConfig> {
    let mut cfg = match &opts.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = opts.seed {
        cfg.seed = s;
    }
    cfg.resolve()
}

fn under(out: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        out.join(p)
    }
}

pub fn data_dir(cfg: &RunConfig, out: &Path) -> PathBuf {
    under(out, &cfg.paths.data_dir)
}

pub fn run_dir(cfg: &RunConfig, out: &Path, kind: ModelKind) -> PathBuf {
    under(out, &cfg.paths.runs_dir).join(kind.to_string())
}

pub fn eval_dir(cfg: &RunConfig, out: &Path) -> PathBuf {
    under(out, &cfg.paths.eval_dir)
}

pub fn forecast_dir(cfg: &RunConfig, out: &Path, kind: ModelKind, sample: usize) -> PathBuf {
    under(out, &cfg.paths.forecasts_dir)
        .join(kind.to_string())
        .join(format!("sample_{sample:04}"))
}

/// Native synthetic sequence `index` after thinning and downsampling, in
/// rain-rate encoding.
pub fn prepared_sequence(cfg: &RunConfig, index: usize) -> Result<Sequence> {
    let synth = crate::data::SyntheticConfig {
        seed: cfg.sequence_seed(index),
        ..cfg.synthetic.clone()
    };
    let seq = generate_synthetic_sequence(&synth)?.thin(cfg.data.thin)?;
    let frames = seq
        .frames
        .iter()
        .map(|f| downsample(f, cfg.data.downsample))
        .collect::<Result<Vec<_>>>()?;
    Sequence::new(frames, seq.timestep_min)
}

/// Generate, thin, downsample, filter and write the synthetic dataset. The
/// trailing `test_fraction` of sequences forms the test split.
pub fn cmd_gen_data(cfg: &RunConfig, out: &Path, force: bool) -> Result<Dataset> {
    let dir = data_dir(cfg, out);
    prepare_output_dir(&dir, force)?;
    let n = cfg.data.sequences;
    let n_test = (n as f64 * cfg.data.test_fraction).round() as usize;
    let table = ClassTable::default();
    let (h, w) = cfg.frame_dims();
    let mut entries = Vec::with_capacity(n);
    let mut timestep = cfg.synthetic.timestep_min * cfg.data.thin as f64;
    for i in 0..n {
        let seq = prepared_sequence(cfg, i)?;
        timestep = seq.timestep_min;
        let split = if i >= n - n_test { Split::Test } else { Split::Train };
        let window = match split {
            Split::Test => cfg.test_window(),
            _ => cfg.train_window(),
        };
        let samples = filtered_starts(&seq, &window, cfg.data.rain_threshold)?;
        let classes = seq.frames.iter().map(|f| table.quantize(f)).collect::<Result<Vec<_>>>()?;
        let file = sequence_file_name(i);
        write_sequence_file(&dir.join(&file), &classes)?;
        entries.push(SequenceEntry {
            file,
            frames: classes.len(),
            split,
            seed: Some(cfg.sequence_seed(i)),
            samples,
        });
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        height: h,
        width: w,
        resolution_km: cfg.synthetic.resolution_km * cfg.data.downsample as f64,
        timestep_min: timestep,
        rain_threshold: cfg.data.rain_threshold,
        train_window: cfg.train_window(),
        test_window: cfg.test_window(),
        class_table: table,
        sequences: entries,
    };
    write_manifest(&dir, &manifest)?;
    cfg.echo(&dir)?;
    Dataset::open(dir)
}

fn check_dims(ds: &Dataset, model: &Model) -> Result<()> {
    let dims = (ds.manifest.height, ds.manifest.width);
    if dims != model.frame_dims() {
        return Err(Error::Shape(format!(
            "dataset frames are {}x{} but the {} model expects {}x{}",
            dims.0,
            dims.1,
            model.kind(),
            model.frame_dims().0,
            model.frame_dims().1
        )));
    }
    Ok(())
}

pub fn new_model(cfg: &RunConfig, kind: ModelKind) -> Result<Model> {
    Ok(match kind {
        ModelKind::Svfp => Model::Svfp(Svfp::new(cfg.model.clone(), cfg.svfp_init_seed())?),
        ModelKind::Convlstm => Model::Baseline(ConvLstmBaseline::new(cfg.baseline.clone(), cfg.baseline_init_seed())?),
    })
}

/// Train one model on the training split. Writes `last.ckpt`, `best.ckpt`
/// and `metrics.jsonl` into the run directory; `resume` continues from
/// `last.ckpt` with the epoch count it holds; only the stopping limits
/// (`max_epochs`, `patience`) are taken from the current configuration.
pub fn cmd_train(cfg: &RunConfig, out: &Path, kind: ModelKind, force: bool, resume: bool) -> Result<FitOutcome> {
    let ds = Dataset::open(data_dir(cfg, out))?;
    let samples = ds.normalized_samples(Split::Train)?;
    if samples.is_empty() {
        return Err(Error::Config("the training split has no samples after filtering".into()));
    }
    let dir = run_dir(cfg, out, kind);
    let mut trainer = if resume {
        if !dir.join(LAST_CHECKPOINT).exists() {
            return Err(Error::Config(format!("nothing to resume in {}", dir.display())));
        }
        let mut t = Trainer::resume(&dir)?;
        t.config.max_epochs = cfg.train.max_epochs;
        t.config.patience = cfg.train.patience;
        t
    } else {
        prepare_output_dir(&dir, force)?;
        Trainer::new(new_model(cfg, kind)?, cfg.train.clone())?
    };
    check_dims(&ds, &trainer.model)?;
    if !resume {
        cfg.echo(&dir)?;
    }
    trainer.fit(&samples, Some(&dir))
}

/// Best checkpoint of a trained model.
pub fn load_trained(cfg: &RunConfig, out: &Path, kind: ModelKind) -> Result<(Model, String)> {
    let path = run_dir(cfg, out, kind).join(BEST_CHECKPOINT);
    if !path.exists() {
        return Err(Error::Config(format!(
            "no trained {kind} model at {} (run `train --model {kind}` first)",
            path.display()
        )));
    }
    let ckpt = Checkpoint::load(&path)?;
    Ok((ckpt.build_model()?, ckpt.id()?))
}

/// Forecast test sample `opts.sample` and export members, mean and manifest.
pub fn cmd_forecast(cfg: &RunConfig, opts: &Options) -> Result<ForecastManifest> {
    let kind = opts.model.unwrap_or(ModelKind::Svfp);
    let (model, id) = load_trained(cfg, &opts.out, kind)?;
    let ds = Dataset::open(data_dir(cfg, &opts.out))?;
    check_dims(&ds, &model)?;
    let test = ds.normalized_samples(Split::Test)?;
    let sample = test.get(opts.sample).ok_or_else(|| {
        Error::Domain(format!(
            "sample {} out of range: the test split has {} samples",
            opts.sample,
            test.len()
        ))
    })?;
    let lead = opts.lead.unwrap_or(cfg.model.n_predict);
    let members = opts.members.unwrap_or(cfg.eval.members);
    let f = forecast(&model, &sample.inputs, lead, members, derive(cfg.eval.seed, 1, opts.sample as u64))?;
    let dir = forecast_dir(cfg, &opts.out, kind, opts.sample);
    let manifest = export_forecast(&f, kind, &id, &dir, opts.force)?;
    cfg.echo(&dir)?;
    Ok(manifest)
}

fn trained_models(cfg: &RunConfig, out: &Path, only: Option<ModelKind>) -> Result<Vec<Model>> {
    let kinds = match only {
        Some(k) => vec![k],
        None => [ModelKind::Svfp, ModelKind::Convlstm]
            .into_iter()
            .filter(|k| run_dir(cfg, out, *k).join(BEST_CHECKPOINT).exists())
            .collect(),
    };
    if kinds.is_empty() {
        return Err(Error::Config("no trained models found; run `train` first".into()));
    }
    kinds.into_iter().map(|k| Ok(load_trained(cfg, out, k)?.0)).collect()
}

/// Strip panels for the first `cfg.eval.strips` test samples: ground truth
/// over inputs and leads, then one row per model.
pub fn strip_panels(cfg: &RunConfig, models: &[Model], test: &[Sample]) -> Result<Vec<StripPanel>> {
    let ecfg = &cfg.eval;
    test.iter()
        .take(ecfg.strips)
        .enumerate()
        .map(|(i, s)| {
            let truth = s.inputs.iter().chain(&s.targets[..ecfg.n_predict]).cloned().collect();
            let rows = models
                .iter()
                .map(|m| Ok((m.kind().to_string(), predict_sample(Predictor::Model(m), s, i, ecfg)?)))
                .collect::<Result<Vec<_>>>()?;
            Ok(StripPanel { truth, rows })
        })
        .collect()
}

/// Score trained models on the test split; write scores, per-sample SSIMs
/// and figures to the evaluation directory.
pub fn cmd_evaluate(cfg: &RunConfig, opts: &Options) -> Result<Vec<Evaluation>> {
    let mut cfg = cfg.clone();
    if let Some(l) = opts.lead {
        cfg.eval.n_predict = l;
    }
    if let Some(k) = opts.members {
        cfg.eval.members = k;
    }
    let models = trained_models(&cfg, &opts.out, opts.model)?;
    let ds = Dataset::open(data_dir(&cfg, &opts.out))?;
    for m in &models {
        check_dims(&ds, m)?;
    }
    let test = ds.normalized_samples(Split::Test)?;
    let evals = models
        .iter()
        .map(|m| evaluate(Predictor::Model(m), &test, &cfg.eval))
        .collect::<Result<Vec<_>>>()?;
    let dir = eval_dir(&cfg, &opts.out);
    write_scores(&dir, &evals)?;
    emit_figures(&evals, cfg.model.n_inputs, &strip_panels(&cfg, &models, &test)?, &dir)?;
    cfg.echo(&dir)?;
    Ok(evals)
}

/// Regenerate figures from a stored scores file and the trained checkpoints.
pub fn cmd_plot(cfg: &RunConfig, opts: &Options) -> Result<Vec<PathBuf>> {
    let dir = eval_dir(cfg, &opts.out);
    let scores = read_scores(&dir.join(SCORES_FILE)).map_err(|e| match e {
        Error::Io { path, .. } => Error::Config(format!("no scores at {} (run `evaluate` first)", path.display())),
        other => other,
    })?;
    // Keep the file's model order so the redrawn figure matches the original.
    let mut evals: Vec<Evaluation> = Vec::new();
    for s in scores {
        let i = match evals.iter().position(|e| e.model == s.model) {
            Some(i) => i,
            None => {
                evals.push(Evaluation {
                    model: s.model.clone(),
                    leads: Vec::new(),
                    reconstruction: Vec::new(),
                    samples: Vec::new(),
                });
                evals.len() - 1
            }
        };
        let e = &mut evals[i];
        match s.kind {
            ScoreKind::Forecast => e.leads.push(s),
            ScoreKind::Reconstruction => e.reconstruction.push(s),
        }
    }
    let n_predict = evals
        .iter()
        .flat_map(|e| e.leads.iter().map(|s| s.lead))
        .max()
        .unwrap_or(cfg.eval.n_predict);
    let mut cfg = cfg.clone();
    cfg.eval.n_predict = n_predict;
    let models = trained_models(&cfg, &opts.out, opts.model)?;
    let ds = Dataset::open(data_dir(&cfg, &opts.out))?;
    let test = ds.normalized_samples(Split::Test)?;
    emit_figures(&evals, cfg.model.n_inputs, &strip_panels(&cfg, &models, &test)?, &dir)
}
