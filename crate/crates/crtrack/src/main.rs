use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use crtrack::commands;
use crtrack::error::{read_to_string, write_string};
use crtrack::Settings;

#[derive(Parser)]
#[command(name = "crtrack", version, about = "Low-light multi-object tracking toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// key = value configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key, e.g. --set iou_gate=0.25 (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self, base: Settings) -> anyhow::Result<Settings> {
        let mut s = base;
        if let Some(p) = &self.config {
            s.apply_text(&read_to_string(p)?).with_context(|| format!("in {}", p.display()))?;
        }
        s.apply_overrides(&self.overrides)?;
        s.validate()?;
        Ok(s)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Track detections and write MOT results
    Track {
        #[arg(long)]
        det: PathBuf,
        #[arg(long)]
        emb: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Accepted for a uniform interface; tracking draws no random numbers
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Score tracker results against ground truth
    Eval {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        res: PathBuf,
        /// Also write all scores as key = value lines
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Generate synthetic sequences with ground truth and corrupted detections
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Apply the low-light augmentation to every .ppm/.png in a directory
    Augment {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Assign predictions to pseudo-boxes
    Asa {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Compute the semi-supervised loss of a batch
    SslLoss {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Run the teacher update rule on a trace or a quadratic benchmark
    AnuSim {
        /// Replay recorded evaluations instead of simulating
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long, default_value_t = 8)]
        dim: usize,
        #[arg(long, default_value_t = 20)]
        epochs: usize,
        #[arg(long, default_value_t = 0.3)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Run the appearance/second-stage ablation grid
    Ablate {
        /// Directory of SEQ/{gt,det} sequences; synthesized when omitted
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

fn emit(text: &str, out: Option<&Path>) -> anyhow::Result<()> {
    match out {
        Some(p) => write_string(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Track { det, emb, out, seed: _, cfg } => {
            let s = cfg.load(Settings::default())?;
            let n = commands::track(&det, emb.as_deref(), &out, &s)?;
            eprintln!("wrote {n} result rows to {}", out.display());
        }
        Command::Eval { gt, res, out, cfg } => {
            let s = cfg.load(Settings::default())?;
            let r = commands::eval(&gt, &res, &s)?;
            print!("{}", r.table);
            if let Some(p) = out {
                write_string(&p, &r.kv)?;
            }
        }
        Command::Synth { out, seed, cfg } => {
            let s = cfg.load(Settings::default())?;
            let seqs = commands::synth(&out, &s, seed)?;
            eprintln!("wrote {} sequences to {}", seqs.len(), out.display());
        }
        Command::Augment { input, output, seed, cfg } => {
            let s = cfg.load(Settings::default())?;
            let done = commands::augment(&input, &output, &s, seed)?;
            eprintln!("augmented {} images into {}", done.len(), output.display());
        }
        Command::Asa { input, out, cfg } => {
            let s = cfg.load(Settings::default())?;
            emit(&commands::asa(&input, &s)?, out.as_deref())?;
        }
        Command::SslLoss { input, out, cfg } => {
            let s = cfg.load(Settings::default())?;
            emit(&commands::ssl_loss(&input, &s)?.to_text(), out.as_deref())?;
        }
        Command::AnuSim { trace, dim, epochs, noise, seed, out, cfg } => {
            let s = cfg.load(Settings::default())?;
            let text = match trace {
                Some(p) => commands::anu_replay(&read_to_string(&p)?)?,
                None => commands::anu_quadratic(dim, epochs, noise, &s, seed)?,
            };
            emit(&text, out.as_deref())?;
        }
        Command::Ablate { data, out, seed, cfg } => {
            let s = cfg.load(commands::benchmark_preset())?;
            let (_, table) = commands::ablate(data.as_deref(), &s, seed)?;
            print!("{table}");
            if let Some(dir) = out {
                write_string(&dir.join("ablation.txt"), &table)?;
                commands::echo_config(&dir, &s)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("crtrack: {e:#}");
            ExitCode::FAILURE
        }
    }
}
