//! `hlsed`: heart and lung sound event detection from the command line.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "hlsed", version, about = "Heart and lung sound event detection")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

/// Settings shared by every command. Each one can also come from the
/// `--config` file under the same name.
#[derive(Args, Debug, Default)]
struct GlobalArgs {
    /// INI-style `key = value` file; flags override it
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Single worker thread, for byte-identical reruns
    #[arg(long, global = true)]
    deterministic: bool,
    #[arg(long, global = true)]
    threshold: Option<f64>,
    /// Collar in seconds; defaults to 0.06 for heart and 0.5 for lung classes
    #[arg(long, global = true)]
    collar: Option<f64>,
    #[arg(long, global = true, value_enum)]
    basis: Option<BasisArg>,
    #[arg(long, global = true, value_enum)]
    arch: Option<ArchArg>,
    #[arg(long, global = true, value_enum)]
    loss: Option<LossArg>,
    #[arg(long, global = true)]
    gamma: Option<f64>,
    #[arg(long, global = true)]
    zeta: Option<f64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum BasisArg {
    Event,
    Segment,
    Ji,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ArchArg {
    Crnn,
    Tcn,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum LossArg {
    Bce,
    Afl,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Heart,
    Lung,
    Both,
}

impl From<TaskArg> for sed_core::labels::Task {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::Heart => Self::Heart,
            TaskArg::Lung => Self::Lung,
            TaskArg::Both => Self::Both,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a log-mel feature dump per input file
    Featurize {
        #[arg(long)]
        out: PathBuf,
        audio: Vec<PathBuf>,
    },
    /// Train a model on a manifest's train split, validating on its val split
    Train {
        #[arg(long)]
        manifest: PathBuf,
        /// Run directory for weights, history and config snapshots
        #[arg(long)]
        out: PathBuf,
    },
    /// Decode audio files into label files
    Infer {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        out: PathBuf,
        audio: Vec<PathBuf>,
    },
    /// Score a directory of predicted label files against a manifest
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        /// Holds `<audio stem>.txt` for every manifest entry
        #[arg(long)]
        pred_dir: PathBuf,
        /// CSV destination; stdout when omitted
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Precision-recall and count-error curves over thresholds
    Curves {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pseudo-label a corpus with a specialist model
    Pseudolabel {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        /// Classes to emit
        #[arg(long, value_enum)]
        task: TaskArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Merge ground-truth and pseudo-label manifests
    Merge {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        pl: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic labeled corpus
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        clips: usize,
        #[arg(long, default_value = "clip")]
        name: String,
        #[arg(long, default_value_t = 10.0)]
        duration: f64,
        /// Fixed heart rate; drawn per clip when omitted
        #[arg(long)]
        heart_rate: Option<f64>,
        /// Fixed respiratory rate; drawn per clip when omitted
        #[arg(long)]
        respiratory_rate: Option<f64>,
        #[arg(long, value_enum, default_value = "both")]
        task: TaskArg,
    },
    /// Heart and respiratory rate per recording
    Vitals {
        /// Decode with this model
        #[arg(long, conflicts_with = "labels", required_unless_present = "labels")]
        weights: Option<PathBuf>,
        /// Use these label files instead of a model, one per audio file
        #[arg(long, num_args = 1..)]
        labels: Vec<PathBuf>,
        #[arg(required = true)]
        audio: Vec<PathBuf>,
    },
    /// Run one stage of the specialist, pseudo-label, unified strategy
    Strategy {
        #[arg(long)]
        stage: u8,
        #[arg(long)]
        heart: PathBuf,
        #[arg(long)]
        lung: PathBuf,
        #[arg(long)]
        run_dir: PathBuf,
    },
}

impl GlobalArgs {
    fn resolve(&self) -> anyhow::Result<RunConfig> {
        let mut o: Vec<(&str, String)> = Vec::new();
        if let Some(v) = self.seed {
            o.push(("seed", v.to_string()));
        }
        if self.deterministic {
            o.push(("deterministic", "true".into()));
        }
        if let Some(v) = self.threshold {
            o.push(("threshold", v.to_string()));
        }
        if let Some(v) = self.collar {
            o.push(("collar", v.to_string()));
        }
        if let Some(v) = self.basis {
            o.push(("basis", format!("{v:?}").to_lowercase()));
        }
        if let Some(v) = self.arch {
            o.push(("arch", format!("{v:?}").to_lowercase()));
        }
        if let Some(v) = self.loss {
            o.push(("loss", format!("{v:?}").to_lowercase()));
        }
        if let Some(v) = self.gamma {
            o.push(("gamma", v.to_string()));
        }
        if let Some(v) = self.zeta {
            o.push(("zeta", v.to_string()));
        }
        RunConfig::resolve(self.config.as_deref(), &o)
    }
}

/// One line, `error[<code>]: <message>`, where the code names the failure kind.
fn report(err: &anyhow::Error) -> String {
    let code = err
        .chain()
        .find_map(|e| e.downcast_ref::<sed_core::Error>())
        .map_or("cli", |e| e.code());
    // library errors already print their source, so skip repeated causes
    let mut parts: Vec<String> = Vec::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if !parts.last().is_some_and(|prev| prev.ends_with(&text)) {
            parts.push(text);
        }
    }
    let msg = parts.join(": ").replace('\n', " ");
    format!("error[{code}]: {msg}")
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = cli.global.resolve().and_then(|cfg| {
        let threads = usize::from(cfg.deterministic);
        sed_core::par::with_threads(threads, || commands::run(cli.command, &cfg))
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", report(&e));
            ExitCode::FAILURE
        }
    }
}
