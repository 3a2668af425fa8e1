use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use nowcast::cli::{self, Options};
use nowcast::model::ModelKind;

#[derive(Parser)]
#[command(version, about = "Stochastic radar precipitation nowcasting")]
struct Args {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration; built-in full-size defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global seed, overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output root; configured paths are relative to it.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[arg(long, global = true, value_enum)]
    model: Option<Kind>,
    /// Number of frames to forecast.
    #[arg(long, global = true)]
    lead: Option<usize>,
    /// Ensemble size.
    #[arg(long, global = true)]
    members: Option<usize>,
    /// Overwrite non-empty output directories.
    #[arg(long, global = true)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic dataset.
    GenData,
    /// Train one model.
    Train {
        /// Continue from the run's last checkpoint.
        #[arg(long)]
        resume: bool,
    },
    /// Forecast one test sample and export the frames.
    Forecast {
        /// Index into the test samples.
        #[arg(long, default_value_t = 0)]
        sample: usize,
    },
    /// Score trained models on the test split and draw figures.
    Evaluate,
    /// Redraw figures from stored scores.
    Plot,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Svfp,
    Convlstm,
}

fn run(args: Args) -> nowcast::Result<()> {
    let mut opts = Options {
        config: args.config,
        seed: args.seed,
        out: args.out,
        model: args.model.map(|k| match k {
            Kind::Svfp => ModelKind::Svfp,
            Kind::Convlstm => ModelKind::Convlstm,
        }),
        lead: args.lead,
        members: args.members,
        force: args.force,
        ..Options::default()
    };
    let cfg = cli::load_config(&opts)?;
    match args.command {
        Command::GenData => {
            let ds = cli::cmd_gen_data(&cfg, &opts.out, opts.force)?;
            let count = |s| ds.manifest.sequences.iter().filter(|e| e.split == s).map(|e| e.samples.len()).sum::<usize>();
            println!(
                "wrote {} sequences to {} ({} train / {} test samples)",
                ds.manifest.sequences.len(),
                ds.root.display(),
                count(nowcast::data::Split::Train),
                count(nowcast::data::Split::Test)
            );
        }
        Command::Train { resume } => {
            let kind = opts.model.unwrap_or(ModelKind::Svfp);
            let fit = cli::cmd_train(&cfg, &opts.out, kind, opts.force, resume)?;
            for m in &fit.metrics {
                println!(
                    "epoch {:3}  train {:.4}  val {:.4}  ({:.1}s)",
                    m.epoch, m.train_total, m.val_total, m.wall_time_s
                );
            }
            println!("best epoch {} (val {:.4})", fit.best_epoch, fit.best_val_loss);
        }
        Command::Forecast { sample } => {
            opts.sample = sample;
            let m = cli::cmd_forecast(&cfg, &opts)?;
            println!(
                "exported {} member(s) x {} frames from checkpoint {}",
                m.members.len(),
                m.lead_frames,
                m.checkpoint_id
            );
        }
        Command::Evaluate => {
            for e in cli::cmd_evaluate(&cfg, &opts)? {
                for s in e.reconstruction.iter().chain(&e.leads) {
                    println!("{:9} {:?} {:2}  ssim {:.4} ± {:.4}  (n={})", e.model, s.kind, s.lead, s.mean, s.ci, s.n);
                }
            }
        }
        Command::Plot => {
            for p in cli::cmd_plot(&cfg, &opts)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
