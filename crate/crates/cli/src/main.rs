use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use damformer::config::RunConfig;
use damformer::data::{self, Split};
use damformer::{gradcheck, train, Error, Result};

/// Relative error bound for the `gradcheck` command.
const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Parser)]
#[command(name = "damformer", version, about = "Building damage assessment from pre/post image pairs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic train and eval splits as DFR1 rasters
    Synth(Common),
    /// Train a model and write checkpoints
    Train(Common),
    /// Score a checkpoint on the evaluation split
    Eval(Common),
    /// Write predicted masks (PGM) and damage maps (PPM)
    Predict(Common),
    /// Compare model gradients with finite differences in f64
    Gradcheck {
        #[command(flatten)]
        common: Common,
        /// Entries probed per parameter tensor
        #[arg(long, default_value_t = 3)]
        per_tensor: usize,
    },
}

#[derive(Args)]
struct Common {
    /// Config file of `key = value` lines
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Checkpoint to evaluate or predict with [default: <out>/model.dfw]
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Override a config key, e.g. `--set opt.steps=10`
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Common {
    fn run_config(&self) -> Result<RunConfig> {
        let mut run = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        for kv in &self.overrides {
            let (k, v) =
                kv.split_once('=').ok_or_else(|| Error::Usage(format!("--set expects KEY=VALUE, got {kv:?}")))?;
            run.set(k.trim(), v.trim())?;
        }
        if let Some(seed) = self.seed {
            run.seed = seed;
        }
        if let Some(out) = &self.out {
            run.out_dir = out.clone();
        }
        run.validate()?;
        Ok(run)
    }

    fn checkpoint(&self, run: &RunConfig) -> PathBuf {
        self.checkpoint.clone().unwrap_or_else(|| run.out_dir.join(train::FINAL_CHECKPOINT))
    }
}

fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Input(format!("checkpoint {} does not exist", path.display())))
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(c) => {
            let run = c.run_config()?;
            let cfg = run.synth();
            for (split, count) in [(Split::Train, run.data.train_count), (Split::Eval, run.data.eval_count)] {
                let dir = run.out_dir.join(split.name());
                data::write_dir(&dir, &data::synth_split(&cfg, split, count)?)?;
                println!("wrote {count} samples to {}", dir.display());
            }
        }
        Command::Train(c) => {
            let run = c.run_config()?;
            let summary = train::train(&run)?;
            for line in &summary.log {
                println!("{line}");
            }
            println!("checkpoint {}", run.out_dir.join(train::FINAL_CHECKPOINT).display());
        }
        Command::Eval(c) => {
            let run = c.run_config()?;
            let ckpt = c.checkpoint(&run);
            require_file(&ckpt)?;
            let report = train::evaluate(&run, &ckpt)?;
            print!("{}\n{}", report.table(), report.key_values());
        }
        Command::Predict(c) => {
            let run = c.run_config()?;
            let ckpt = c.checkpoint(&run);
            require_file(&ckpt)?;
            let dir = run.out_dir.join("predictions");
            let n = train::predict(&run, &ckpt, &dir)?;
            println!("wrote {n} predictions to {}", dir.display());
        }
        Command::Gradcheck { common, per_tensor } => {
            let run = common.run_config()?;
            let report = train::with_workers(run.workers, || gradcheck::check_model(&run, per_tensor))??;
            print!("{}", report.summary());
            let worst = report.max_rel_err();
            if worst.is_nan() || worst >= GRADCHECK_TOLERANCE {
                return Err(Error::Numerical(format!(
                    "gradient check: max relative error {worst:.3e} exceeds {GRADCHECK_TOLERANCE:e}"
                )));
            }
            println!("gradient check passed");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
