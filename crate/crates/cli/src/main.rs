use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pllab_cli::{run, thread_cap, CliError, Command, Invocation};

#[derive(Parser)]
#[command(name = "pllab", version, about = "Partial-label learning laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(clap::Args)]
struct Common {
    /// Flat key=value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key (repeatable): --set epochs=10
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Root under which the per-run directory is created.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate an entangled-Gaussian partial-label dataset.
    Synth(Common),
    /// Train a model pair; writes checkpoint, history and summary.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        no_rl: bool,
        #[arg(long)]
        no_ca: bool,
    },
    /// Compute the full metrics report for a checkpoint.
    Eval(Common),
    /// Count entangled pairs per threshold and ratio.
    Audit(Common),
    /// Hyperparameter grids or the ablation table.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        no_rl: bool,
        #[arg(long)]
        no_ca: bool,
    },
}

fn invocation(cli: Cli) -> Invocation {
    let (command, common, flags) = match cli.command {
        Cmd::Synth(c) => (Command::Synth, c, (false, false)),
        Cmd::Train { common, no_rl, no_ca } => (Command::Train, common, (no_rl, no_ca)),
        Cmd::Eval(c) => (Command::Eval, c, (false, false)),
        Cmd::Audit(c) => (Command::Audit, c, (false, false)),
        Cmd::Sweep { common, no_rl, no_ca } => (Command::Sweep, common, (no_rl, no_ca)),
    };
    let mut overrides = common.set;
    if flags.0 {
        overrides.push("no_rl=true".into());
    }
    if flags.1 {
        overrides.push("no_ca=true".into());
    }
    Invocation { command, config_file: common.config, overrides, out_root: common.out }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = thread_cap(std::env::var("PLLAB_THREADS").ok().as_deref()).and_then(|cap| {
        if let Some(n) = cap {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| CliError::Input(format!("thread pool: {e}")))?;
        }
        run(&invocation(cli))
    });
    match outcome {
        Ok(dir) => {
            println!("{}", dir.path.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
