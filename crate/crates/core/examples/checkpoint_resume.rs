//! Interrupt training after two epochs, resume from `last.ckpt`, and get
//! the same weights as an uninterrupted run.

use nowcast::config::RunConfig;
use nowcast::data::Split;
use nowcast::model::{Model, Svfp};
use nowcast::trainer::{read_metrics, Checkpoint, TrainConfig, Trainer, LAST_CHECKPOINT, METRICS_FILE};

fn main() -> nowcast::Result<()> {
    let root = std::env::temp_dir().join("nowcast-resume");
    let cfg = RunConfig::load(&std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/tiny.toml"))?.resolve()?;
    let samples = nowcast::cli::cmd_gen_data(&cfg, &root, true)?.normalized_samples(Split::Train)?;
    let train = TrainConfig { max_epochs: 4, ..cfg.train.clone() };
    let fresh = || Ok::<_, nowcast::Error>(Model::Svfp(Svfp::new(cfg.model.clone(), cfg.svfp_init_seed())?));

    let full_dir = root.join("full");
    let part_dir = root.join("interrupted");
    for d in [&full_dir, &part_dir] {
        let _ = std::fs::remove_dir_all(d);
    }
    let mut full = Trainer::new(fresh()?, train.clone())?;
    full.fit(&samples, Some(&full_dir))?;

    let mut first = Trainer::new(fresh()?, TrainConfig { max_epochs: 2, ..train.clone() })?;
    first.fit(&samples, Some(&part_dir))?;
    let ckpt = Checkpoint::load(&part_dir.join(LAST_CHECKPOINT))?;
    println!("interrupted after epoch {}, checkpoint {}", ckpt.meta.progress.epoch, ckpt.id()?);

    let mut resumed = Trainer::resume(&part_dir)?;
    resumed.config.max_epochs = train.max_epochs;
    resumed.fit(&samples, Some(&part_dir))?;

    for m in read_metrics(&part_dir.join(METRICS_FILE))? {
        println!("epoch {}  val {:.6}", m.epoch, m.val_total);
    }
    println!("weights identical: {}", resumed.model.params() == full.model.params());
    println!("optimizer identical: {}", resumed.optimizer == full.optimizer);
    Ok(())
}
