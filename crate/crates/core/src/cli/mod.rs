//! Command-line front end.

pub mod commands;
pub mod config;
pub mod gradcheck;
pub mod pipeline;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use log::error;

use crate::error::{FsnError, Result};

pub use commands::{
    ablate_strong, ablate_weak, cmd_ablate, cmd_eval, cmd_gradcheck, cmd_predict, cmd_predict_weak, cmd_synth,
    cmd_train, cmd_train_weak, Comparison,
};
pub use config::{AblateMode, RunConfig, StrongHead};

pub const THREADS_ENV: &str = "FSN_THREADS";

#[derive(Parser, Debug)]
#[command(name = "fsn", version, about = "Dense temporal action localization on per-frame features")]
pub struct Cli {
    /// Flat `key = value` config file.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads; falls back to FSN_THREADS.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    #[command(flatten)]
    pub overrides: Overrides,
    #[command(subcommand)]
    pub command: Command,
}

/// `--set` is accepted before and after the subcommand; both lists apply, in that order.
#[derive(Args, Debug, Clone, PartialEq, Default)]
pub struct Overrides {
    /// Override any config key, e.g. `--set iterations=500`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Subcommand, Debug, Clone, PartialEq)]
pub enum Command {
    /// Write a synthetic dataset.
    Synth {
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Train a strongly supervised head.
    Train {
        #[arg(long, value_name = "fsn|ablation")]
        head: Option<String>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Train the weakly supervised head.
    TrainWeak {
        #[arg(long, value_name = "gmp|gap")]
        pooling: Option<String>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Localize actions in the test split with a strong head.
    Predict {
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Localize actions in the test split with the weak head.
    PredictWeak {
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Score predictions against the ground truth.
    Eval {
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Train and compare the paired heads.
    Ablate {
        #[arg(long, value_name = "strong|weak|both")]
        mode: Option<String>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Finite-difference check of every backward pass.
    Gradcheck {
        #[command(flatten)]
        overrides: Overrides,
    },
}

impl Command {
    pub fn overrides(&self) -> &[String] {
        match self {
            Command::Synth { overrides }
            | Command::Train { overrides, .. }
            | Command::TrainWeak { overrides, .. }
            | Command::Predict { overrides }
            | Command::PredictWeak { overrides }
            | Command::Eval { overrides }
            | Command::Ablate { overrides, .. }
            | Command::Gradcheck { overrides } => &overrides.set,
        }
    }
}

impl Cli {
    /// Defaults, then the config file, then flags.
    pub fn run_config(&self) -> Result<RunConfig> {
        let mut run = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            run.seed = s;
        }
        if let Some(o) = &self.out {
            run.out_dir = o.clone();
        }
        if let Some(t) = self.threads {
            run.threads = Some(t);
        } else if run.threads.is_none() {
            if let Ok(v) = std::env::var(THREADS_ENV) {
                run.set("threads", &v)?;
            }
        }
        for o in self.overrides.set.iter().chain(self.command.overrides()) {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| FsnError::Config(format!("--set expects KEY=VALUE, got `{o}`")))?;
            run.set(k, v)?;
        }
        match &self.command {
            Command::Train { head: Some(h), .. } => run.set("head", h)?,
            Command::TrainWeak { pooling: Some(p), .. } => run.set("pooling", p)?,
            Command::Ablate { mode: Some(m), .. } => run.set("ablate", m)?,
            _ => {}
        }
        Ok(run)
    }
}

fn init_threads(threads: Option<usize>) {
    if let Some(n) = threads {
        // Fails only if a pool already exists, e.g. on a second call in-process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

pub fn execute(command: &Command, run: &RunConfig) -> Result<()> {
    match command {
        Command::Synth { .. } => cmd_synth(run).map(drop),
        Command::Train { .. } => cmd_train(run).map(drop),
        Command::TrainWeak { .. } => cmd_train_weak(run).map(drop),
        Command::Predict { .. } => cmd_predict(run).map(drop),
        Command::PredictWeak { .. } => cmd_predict_weak(run).map(drop),
        Command::Eval { .. } => cmd_eval(run).map(drop),
        Command::Ablate { .. } => cmd_ablate(run).map(drop),
        Command::Gradcheck { .. } => cmd_gradcheck(run).map(drop),
    }
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).try_init();
    let result = cli.run_config().and_then(|run| {
        init_threads(run.threads);
        execute(&cli.command, &run)
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            1
        }
    }
}
