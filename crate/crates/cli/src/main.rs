//! `carenote`: corpus generation, vocabulary training, selection,
//! pre-training, fine-tuning, evaluation and extraction.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use carenote_core::Error;
use clap::{CommandFactory, Parser};

use commands::Command;

#[derive(Parser, Debug)]
#[command(name = "carenote", version, about = "Action-item extraction from hospital discharge notes")]
struct Cli {
    /// JSON file of `<command>.<flag>` defaults (also read from CARENOTE_CONFIG).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

/// A failure with its exit code: 1 internal, 2 usage, 3 missing file,
/// 4 vocabulary fingerprint mismatch, 5 invalid input.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub kind: &'static str,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure { code: 2, kind: "usage", message: message.into() }
    }

    pub fn missing(path: &std::path::Path) -> Self {
        Failure { code: 3, kind: "missing_file", message: format!("no such file: {}", path.display()) }
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Failure { code: 5, kind: "invalid_input", message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let message = e.to_string();
        let (code, kind) = match &e {
            Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound => (3, "missing_file"),
            Error::Io(_) | Error::NonFiniteLoss => (1, "internal"),
            Error::FingerprintMismatch { .. } => (4, "fingerprint_mismatch"),
            _ => (5, "invalid_input"),
        };
        Failure { code, kind, message }
    }
}

fn fail(f: &Failure) -> ExitCode {
    let body = serde_json::json!({"error": f.kind, "code": f.code, "message": f.message});
    eprintln!("{body}");
    ExitCode::from(f.code)
}

fn main() -> ExitCode {
    let mut args: Vec<String> = std::env::args().collect();
    if let Some(path) = config::config_path(&args) {
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(_) => return fail(&Failure::missing(&path)),
        };
        let value: serde_json::Value = match serde_json::from_str(&text) {
            Ok(v) => v,
            Err(e) => return fail(&Failure::invalid(format!("config {}: {e}", path.display()))),
        };
        let names: Vec<String> = Cli::command().get_subcommands().map(|c| c.get_name().to_string()).collect();
        let names: Vec<&str> = names.iter().map(String::as_str).collect();
        args = match config::inject(args, &value, &names) {
            Ok(a) => a,
            Err(m) => return fail(&Failure::invalid(m)),
        };
    }
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail(&Failure::usage(e.render().to_string().trim().to_string())),
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => fail(&f),
    }
}
