//! Batch front end: `synth`, `train`, `eval`, `audit` and `sweep`.
//!
//! Each run resolves a flat config, hashes it, and writes everything under
//! `<out>/<command>-<hash>/` next to a `config.txt` echo. Wall-clock times go
//! to `run.log` only, so every other output is reproducible byte for byte.

pub mod commands;
pub mod config;

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use pllab::trainer::TrainError;

pub use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Input(format!("{}: {e}", path.display()))
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Divergence { .. } => CliError::Numeric(e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

macro_rules! input_error {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Input(e.to_string())
            }
        }
    )*};
}

input_error!(
    pllab::data::DataError,
    pllab::evalkit::EvalError,
    pllab::numkernel::KernelError,
    pllab::augment::AugmentError,
    pllab::losses::LossError
);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Synth,
    Train,
    Eval,
    Audit,
    Sweep,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::Train => "train",
            Command::Eval => "eval",
            Command::Audit => "audit",
            Command::Sweep => "sweep",
        }
    }

    pub fn schema(self) -> Vec<(&'static str, &'static str)> {
        match self {
            Command::Synth => config::SYNTH_KEYS.to_vec(),
            Command::Train => config::TRAIN_KEYS.to_vec(),
            Command::Eval => config::EVAL_KEYS.to_vec(),
            Command::Audit => config::AUDIT_KEYS.to_vec(),
            Command::Sweep => config::sweep_schema(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Invocation {
    pub command: Command,
    pub config_file: Option<PathBuf>,
    pub overrides: Vec<String>,
    pub out_root: PathBuf,
}

/// Output directory of one run.
#[derive(Clone, Debug)]
pub struct RunDir {
    pub path: PathBuf,
}

impl RunDir {
    pub fn create(root: &Path, command: Command, config: &RunConfig) -> Result<Self, CliError> {
        let path = root.join(format!("{}-{}", command.name(), config.hash(command.name())));
        fs::create_dir_all(&path).map_err(|e| CliError::io(&path, e))?;
        let dir = Self { path };
        dir.write("config.txt", config.canonical())?;
        Ok(dir)
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    pub fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
        let p = self.file(name);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        fs::write(&p, contents).map_err(|e| CliError::io(&p, e))
    }

    pub fn log(&self, line: &str) {
        let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64());
        if let Ok(mut f) = fs::OpenOptions::new().create(true).append(true).open(self.file("run.log")) {
            let _ = writeln!(f, "[{stamp:.3}] {line}");
        }
    }
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// Resolves the config, creates the run directory and dispatches.
pub fn run(inv: &Invocation) -> Result<RunDir, CliError> {
    let file = inv.config_file.as_deref().map(read_text).transpose()?;
    let config = RunConfig::resolve(&inv.command.schema(), file.as_deref(), &inv.overrides)?;
    let dir = RunDir::create(&inv.out_root, inv.command, &config)?;
    let started = Instant::now();
    dir.log(&format!("start {} threads={}", inv.command.name(), rayon::current_num_threads()));
    let result = match inv.command {
        Command::Synth => commands::synth(&config, &dir),
        Command::Train => commands::train(&config, &dir),
        Command::Eval => commands::eval(&config, &dir),
        Command::Audit => commands::audit(&config, &dir),
        Command::Sweep => commands::sweep(&config, &dir),
    };
    match &result {
        Ok(()) => dir.log(&format!("done in {:.2}s", started.elapsed().as_secs_f64())),
        Err(e) => dir.log(&format!("failed after {:.2}s: {e}", started.elapsed().as_secs_f64())),
    }
    result.map(|()| dir)
}

/// Thread cap from `PLLAB_THREADS`; `None` when unset.
pub fn thread_cap(value: Option<&str>) -> Result<Option<usize>, CliError> {
    match value {
        None | Some("") => Ok(None),
        Some(v) => match v.parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Input(format!("PLLAB_THREADS must be a positive integer, got '{v}'"))),
        },
    }
}
