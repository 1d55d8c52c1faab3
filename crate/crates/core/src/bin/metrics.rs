//! `metrics analyze <file>` prints cyclomatic complexity, Halstead measures
//! and the maintainability index as JSON.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use faasforge::metrics::analyze;

#[derive(Parser)]
#[command(name = "metrics", version, about = "Code-quality metrics for guest source files")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    Analyze {
        /// Source file, or `-` for stdin.
        file: PathBuf,
        /// python3 or nodejs; guessed from the extension when omitted.
        #[arg(long)]
        runtime: Option<String>,
    },
}

fn guess_runtime(path: &Path) -> Option<&'static str> {
    match path.extension()?.to_str()? {
        "py" => Some("python3"),
        "js" | "mjs" | "cjs" => Some("nodejs"),
        _ => None,
    }
}

fn run(file: PathBuf, runtime: Option<String>) -> anyhow::Result<()> {
    let runtime = match runtime {
        Some(r) => r,
        None => guess_runtime(&file).context("cannot tell the runtime from the file name; pass --runtime")?.to_string(),
    };
    let code = if file.as_os_str() == "-" {
        std::io::read_to_string(std::io::stdin())?
    } else {
        std::fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?
    };
    let report = analyze(&code, &runtime)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn main() -> ExitCode {
    let Command::Analyze { file, runtime } = Cli::parse().command;
    match run(file, runtime) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
