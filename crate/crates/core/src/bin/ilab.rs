use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ilab::harness::{emit_report, output_root, run_dir, run_experiment, train_and_save, write_corpus, ExperimentId, ExperimentSpec};
use ilab::{LabError, Result};

#[derive(Parser)]
#[command(name = "ilab", version, about = "Causal-intervention laboratory for filler-gap dependencies in a toy transformer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON experiment config; defaults apply to every omitted field.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output location. Experiments treat it as the run root, which
    /// otherwise comes from $ILAB_OUT, then ./runs.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    float32: bool,
}

#[derive(Args)]
struct ExpArgs {
    #[command(flatten)]
    common: Common,
    /// Model checkpoint, overriding the config's.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train the toy LM on its synthetic corpus. `--seed` sets the
    /// initialisation seed, `--out` the checkpoint path.
    TrainLm(Common),
    /// Write the training corpus, one sentence per line. `--seed` sets the
    /// corpus seed, `--out` the file path.
    GenCorpus(Common),
    /// Behavioural licensing against the designed gap rates.
    Exp1(ExpArgs),
    /// Directions trained on classic embedded-wh pairs.
    Exp2(ExpArgs),
    /// Directions trained across unextractable and extractable conjuncts.
    Exp3(ExpArgs),
    /// Corpus chunks projected onto the learned directions.
    Exp4(ExpArgs),
    /// Render report.html for a run directory.
    Report {
        /// Run directory containing run.json.
        dir: PathBuf,
    },
}

/// Loads a config, filling in the experiment id when the file omits it.
fn load_spec(path: Option<&Path>, experiment: ExperimentId) -> Result<ExperimentSpec> {
    let Some(path) = path else {
        return Ok(ExperimentSpec::new(experiment));
    };
    let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
    let mut value: serde_json::Value = serde_json::from_str(&text).map_err(|e| LabError::Config(format!("{}: {e}", path.display())))?;
    let obj = value.as_object_mut().ok_or_else(|| LabError::Config(format!("{}: config must be a JSON object", path.display())))?;
    match obj.get("experiment") {
        None => {
            obj.insert("experiment".into(), serde_json::json!(experiment));
        }
        Some(v) if *v != serde_json::json!(experiment) => {
            return Err(LabError::Config(format!("config is for {v}, not {experiment}")));
        }
        Some(_) => {}
    }
    ExperimentSpec::from_json(&value.to_string())
}

fn artifact_path(common: &Common, spec: &ExperimentSpec, default_name: &str) -> Result<PathBuf> {
    let path = common.out.clone().unwrap_or_else(|| output_root(spec).join(default_name));
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| LabError::io(parent, e))?;
    }
    Ok(path)
}

fn run(cli: Cli) -> Result<()> {
    let exp = |args: ExpArgs, id: ExperimentId| -> Result<()> {
        let mut spec = load_spec(args.common.config.as_deref(), id)?;
        if let Some(s) = args.common.seed {
            spec.stimulus_seed = s;
        }
        if let Some(out) = args.common.out {
            spec.out = Some(out);
        }
        if let Some(c) = args.checkpoint {
            spec.checkpoint = Some(c);
        }
        spec.float32 |= args.common.float32;
        let record = run_experiment(&spec)?;
        println!("{}", run_dir(&spec)?.display());
        println!("{}", serde_json::to_string_pretty(&record.summary)?);
        Ok(())
    };
    match cli.command {
        Command::TrainLm(c) => {
            let mut spec = load_spec(c.config.as_deref(), ExperimentId::Exp1)?;
            if let Some(s) = c.seed {
                spec.lm.hyper.seed = s;
            }
            spec.float32 |= c.float32;
            let path = artifact_path(&c, &spec, "model.ilab")?;
            let losses = train_and_save(&spec, &path)?;
            let tail = &losses[losses.len().saturating_sub(50)..];
            println!("{}", path.display());
            println!("final loss {:.4}", tail.iter().sum::<f64>() / tail.len().max(1) as f64);
        }
        Command::GenCorpus(c) => {
            let mut spec = load_spec(c.config.as_deref(), ExperimentId::Exp1)?;
            if let Some(s) = c.seed {
                spec.lm.corpus_seed = s;
            }
            let path = artifact_path(&c, &spec, "corpus.txt")?;
            let n = write_corpus(&spec, &path)?;
            println!("{} ({n} sentences)", path.display());
        }
        Command::Exp1(a) => exp(a, ExperimentId::Exp1)?,
        Command::Exp2(a) => exp(a, ExperimentId::Exp2)?,
        Command::Exp3(a) => exp(a, ExperimentId::Exp3)?,
        Command::Exp4(a) => exp(a, ExperimentId::Exp4)?,
        Command::Report { dir } => println!("{}", emit_report(&dir)?.display()),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
