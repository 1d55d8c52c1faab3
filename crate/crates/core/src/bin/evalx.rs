//! `evalx run` drives a dataset through build, deploy and semantic tests
//! and writes an aggregate report. Exits nonzero only when the run itself
//! fails; failed trials are data.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};

use faasforge::config::ForgeConfig;
use faasforge::eval::{emit_report, load_dataset, with_runtime, AggregateReport, Harness, HarnessOptions, ReportFormat};
use faasforge::llm::ProviderKind;
use faasforge::platform::Platform;

#[derive(Parser)]
#[command(name = "evalx", version, about = "Evaluate generated functions against a task dataset")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Provider {
    Live,
    Mock,
}

#[derive(Subcommand)]
enum Command {
    Run(RunArgs),
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Defaults to the config file's provider kind.
    #[arg(long, value_enum)]
    provider: Option<Provider>,
    /// Run every task on this runtime instead of the one in the dataset.
    #[arg(long)]
    runtime: Option<String>,
    /// Trials per task.
    #[arg(long, default_value_t = 1)]
    repeats: usize,
    #[arg(long, default_value = "eval-out")]
    out: PathBuf,
    #[arg(long, default_value = "json,csv", value_delimiter = ',')]
    format: Vec<ReportFormat>,
    /// Mock response table (task id to variants).
    #[arg(long)]
    fixtures: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Synthetic mock generation delay.
    #[arg(long)]
    delay_ms: Option<u64>,
    /// Concurrent trials; latency is not aggregated when above 1.
    #[arg(long, default_value_t = 1)]
    parallel: usize,
    /// Only the first N tasks.
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long, env = "FORGE_CONFIG")]
    config: Option<PathBuf>,
}

fn print_summary(report: &AggregateReport) {
    println!("{:<10} {:>6} {:>10} {:>10} {:>12}", "tier", "trials", "syntactic", "semantic", "total_ms");
    let rows = report.per_complexity.iter().map(|(c, s)| (c.as_str(), s)).chain([("overall", &report.overall)]);
    for (name, s) in rows {
        let total = s.latency.as_ref().and_then(|l| l.total_ms.as_ref()).map(|m| format!("{:.1}", m.mean)).unwrap_or_else(|| "-".into());
        println!("{name:<10} {:>6} {:>10.4} {:>10.4} {total:>12}", s.trials, s.syntactic_rate, s.semantic_rate);
    }
    let failures: Vec<String> = report.failure_histogram.iter().filter(|(_, n)| **n > 0).map(|(c, n)| format!("{c}={n}")).collect();
    if !failures.is_empty() {
        println!("failures: {}", failures.join(" "));
    }
    for s in &report.stability {
        println!("stability {}: {}", s.task_id, s.pattern);
    }
}

async fn run(args: RunArgs) -> anyhow::Result<()> {
    let mut config = ForgeConfig::load(args.config.as_deref())?;
    match args.provider {
        Some(Provider::Live) => config.provider.kind = ProviderKind::Live,
        Some(Provider::Mock) => config.provider.kind = ProviderKind::Mock,
        None => {}
    }
    if let Some(f) = args.fixtures {
        config.provider.fixtures_path = Some(f);
    }
    if let Some(s) = args.seed {
        config.provider.seed = s;
    }
    if let Some(d) = args.delay_ms {
        config.provider.delay_ms = d;
    }

    let mut tasks = with_runtime(load_dataset(&args.dataset)?, args.runtime.as_deref());
    if let Some(n) = args.limit {
        tasks.truncate(n);
    }
    let provider = config.provider.build()?;
    let platform = Platform::new(config.platform.clone()).context("starting platform")?;
    let options = HarnessOptions {
        parallel: args.parallel.max(1),
        bridge: config.bridge_options(),
        prompts: Some(config.prompts()?),
        provider_label: match config.provider.kind {
            ProviderKind::Live => format!("live:{}", config.provider.model),
            ProviderKind::Mock => "mock".into(),
        },
    };
    let harness = Harness::start(platform.clone(), provider, config.provider.llm_config(), options).await?;
    let result = harness.run_dataset(&tasks, args.repeats).await;
    platform.shutdown().await;
    let result = result?;
    let written = emit_report(&result.report, &result.outcomes, &args.out, &args.format)?;
    print_summary(&result.report);
    for path in written {
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    let Command::Run(args) = Cli::parse().command;
    match run(args).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
