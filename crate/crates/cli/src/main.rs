mod commands;
mod config;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Deterministic tracking-policy simulation harness.
#[derive(Parser)]
#[command(name = "memtrack", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a scenario script to a ground-truth dump.
    Render {
        /// Builtin scenario name or path to a script JSON.
        #[arg(long)]
        script: String,
        /// Output directory.
        #[arg(long)]
        out: std::path::PathBuf,
    },
    /// Run one tracking sequence and evaluate it.
    Run {
        /// Run-config JSON path.
        #[arg(long)]
        config: std::path::PathBuf,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's policy (fifo|cam|orm|ma).
        #[arg(long)]
        policy: Option<String>,
        /// Override the config's output directory.
        #[arg(long)]
        out: Option<std::path::PathBuf>,
    },
    /// Run the (policy x scenario x seed) ablation grid.
    Ablate {
        /// Ablation-config JSON path.
        #[arg(long)]
        config: std::path::PathBuf,
        /// Worker threads (0 = default pool).
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        /// Override the config's output directory.
        #[arg(long)]
        out: Option<std::path::PathBuf>,
    },
    /// Recompute metrics from dumped result and ground-truth files.
    Eval {
        /// Result JSON-lines file written by `run`.
        #[arg(long)]
        result: std::path::PathBuf,
        /// Ground-truth JSON-lines file written by `render`.
        #[arg(long)]
        gt: std::path::PathBuf,
        /// Optional output path for the metric report JSON.
        #[arg(long)]
        out: Option<std::path::PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("MEMTRACK_LOG")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Render { script, out } => commands::render(&script, &out),
        Command::Run {
            config,
            seed,
            policy,
            out,
        } => commands::run(&config, seed, policy.as_deref(), out.as_deref()),
        Command::Ablate { config, jobs, out } => commands::ablate(&config, jobs, out.as_deref()),
        Command::Eval { result, gt, out } => commands::eval(&result, &gt, out.as_deref()),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
