mod artifacts;
mod config;
mod plots;
mod tasks;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

/// Periodic-orbit families, persistence profiles, ridge predictions, and
/// forced-response validation for conservative mechanical models.
#[derive(Parser)]
#[command(name = "backbone", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute every task in a config file and write the artifact manifest.
    Run { config: PathBuf },
    /// Parse and validate a config file without running anything.
    ValidateConfig { config: PathBuf },
    /// Write gnuplot-style .dat files and an overview SVG from a manifest.
    EmitPlots { manifest: PathBuf },
}

/// Exit codes: 0 success, 2 config or manifest problem, 3 numerical failure.
fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run { config } => cmd_run(&config),
        Command::ValidateConfig { config } => cmd_validate(&config),
        Command::EmitPlots { manifest } => plots::emit(&manifest),
    };
    ExitCode::from(code)
}

fn load_checked(path: &PathBuf) -> Result<(config::RunConfig, String), u8> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("{}: {e}", path.display());
            return Err(2);
        }
    };
    let cfg = match config::parse(path, &text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return Err(2);
        }
    };
    let errors = config::validate(&cfg);
    if !errors.is_empty() {
        for e in &errors {
            eprintln!("{}: {e}", path.display());
        }
        return Err(2);
    }
    Ok((cfg, text))
}

fn cmd_run(path: &PathBuf) -> u8 {
    let (cfg, text) = match load_checked(path) {
        Ok(v) => v,
        Err(code) => return code,
    };
    let out_dir = match std::env::var_os("BACKBONE_OUT") {
        Some(dir) => PathBuf::from(dir),
        None => cfg.output_dir.clone(),
    };
    tasks::run(&cfg, &text, &out_dir) as u8
}

fn cmd_validate(path: &PathBuf) -> u8 {
    match load_checked(path) {
        Ok((cfg, _)) => {
            println!(
                "ok: {} task{} on model `{}`",
                cfg.tasks.len(),
                if cfg.tasks.len() == 1 { "" } else { "s" },
                cfg.model.name
            );
            0
        }
        Err(code) => code,
    }
}
