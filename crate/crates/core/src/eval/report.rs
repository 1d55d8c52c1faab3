use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::dataset::Complexity;
use super::EvalOutcome;
use crate::bridge::FailureCategory;
use crate::metrics::{aggregate, MeanStd, MetricAggregate, MetricReport};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub llm_generation_ms: Option<MeanStd>,
    pub function_preparation_ms: Option<MeanStd>,
    pub faas_deployment_ms: Option<MeanStd>,
    pub total_ms: Option<MeanStd>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumReport {
    pub trials: usize,
    pub syntactic_passes: usize,
    pub semantic_passes: usize,
    pub syntactic_rate: f64,
    pub semantic_rate: f64,
    /// Absent for parallel runs, where stage timings are not comparable.
    pub latency: Option<LatencyStats>,
    pub failures: BTreeMap<FailureCategory, usize>,
    pub metrics: MetricAggregate,
}

/// Pass pattern of one task over repeated trials: `P` semantic pass, `S`
/// syntactic pass only, `F` failure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StabilitySummary {
    pub task_id: String,
    pub repeats: usize,
    pub syntactic_passes: usize,
    pub semantic_passes: usize,
    pub pattern: String,
}

impl StabilitySummary {
    pub fn of(task_id: &str, outcomes: &[&EvalOutcome]) -> Self {
        Self {
            task_id: task_id.to_string(),
            repeats: outcomes.len(),
            syntactic_passes: outcomes.iter().filter(|o| o.syntactic_pass).count(),
            semantic_passes: outcomes.iter().filter(|o| o.semantic_pass).count(),
            pattern: outcomes.iter().map(|o| o.pass_symbol()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub provider: String,
    pub trials_per_task: usize,
    pub parallel: usize,
    pub per_complexity: BTreeMap<Complexity, StratumReport>,
    pub overall: StratumReport,
    pub failure_histogram: BTreeMap<FailureCategory, usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stability: Vec<StabilitySummary>,
}

fn ms(d: std::time::Duration) -> f64 {
    d.as_secs_f64() * 1000.0
}

fn stratum(outcomes: &[&EvalOutcome], with_latency: bool) -> StratumReport {
    let trials = outcomes.len();
    let syntactic_passes = outcomes.iter().filter(|o| o.syntactic_pass).count();
    let semantic_passes = outcomes.iter().filter(|o| o.semantic_pass).count();
    let rate = |n: usize| if trials == 0 { 0.0 } else { n as f64 / trials as f64 };
    let stage = |pick: fn(&EvalOutcome) -> Option<f64>| {
        let values: Vec<f64> = outcomes.iter().filter_map(|o| pick(o)).collect();
        MeanStd::of(&values)
    };
    let latency = with_latency.then(|| LatencyStats {
        llm_generation_ms: stage(|o| o.breakdown.llm_generation.map(ms)),
        function_preparation_ms: stage(|o| o.breakdown.function_preparation.map(ms)),
        faas_deployment_ms: stage(|o| o.breakdown.faas_deployment.map(ms)),
        total_ms: stage(|o| Some(ms(o.breakdown.total))),
    });
    let mut failures: BTreeMap<FailureCategory, usize> = FailureCategory::ALL.iter().map(|c| (*c, 0)).collect();
    for o in outcomes {
        if let Some(f) = &o.failure {
            *failures.entry(f.category).or_default() += 1;
        }
    }
    let reports: Vec<MetricReport> = outcomes.iter().filter_map(|o| o.metrics.clone()).collect();
    StratumReport {
        trials,
        syntactic_passes,
        semantic_passes,
        syntactic_rate: rate(syntactic_passes),
        semantic_rate: rate(semantic_passes),
        latency,
        failures,
        metrics: aggregate(&reports),
    }
}

impl AggregateReport {
    /// Micro-averaged rates per tier and overall. Tiers with no trials are
    /// omitted.
    pub fn from_outcomes(provider: &str, outcomes: &[EvalOutcome], trials_per_task: usize, parallel: usize) -> Self {
        let with_latency = parallel <= 1;
        let all: Vec<&EvalOutcome> = outcomes.iter().collect();
        let per_complexity = Complexity::ALL
            .iter()
            .filter_map(|c| {
                let tier: Vec<&EvalOutcome> = outcomes.iter().filter(|o| o.complexity == *c).collect();
                (!tier.is_empty()).then(|| (*c, stratum(&tier, with_latency)))
            })
            .collect();
        let overall = stratum(&all, with_latency);
        let mut stability = Vec::new();
        if trials_per_task > 1 {
            let mut order: Vec<&str> = Vec::new();
            for o in outcomes {
                if !order.contains(&o.task_id.as_str()) {
                    order.push(&o.task_id);
                }
            }
            for id in order {
                let mut runs: Vec<&EvalOutcome> = outcomes.iter().filter(|o| o.task_id == id).collect();
                runs.sort_by_key(|o| o.trial_index);
                stability.push(StabilitySummary::of(id, &runs));
            }
        }
        Self {
            provider: provider.to_string(),
            trials_per_task,
            parallel,
            failure_histogram: overall.failures.clone(),
            per_complexity,
            overall,
            stability,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(format!("unknown report format {other:?} (expected json or csv)")),
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3}")).unwrap_or_default()
}

fn mean(v: &Option<MeanStd>) -> Option<f64> {
    v.as_ref().map(|m| m.mean)
}

fn std(v: &Option<MeanStd>) -> Option<f64> {
    v.as_ref().map(|m| m.std)
}

fn summary_csv(report: &AggregateReport) -> Result<Vec<u8>, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec![
        "stratum", "trials", "syntactic_passes", "semantic_passes", "syntactic_rate", "semantic_rate",
        "llm_generation_ms_mean", "llm_generation_ms_std", "function_preparation_ms_mean", "function_preparation_ms_std",
        "faas_deployment_ms_mean", "faas_deployment_ms_std", "total_ms_mean", "total_ms_std",
        "cc_mean", "cc_std", "mi_mean", "mi_std", "effort_median",
    ];
    let failure_cols: Vec<String> = FailureCategory::ALL.iter().map(|c| format!("failures_{c}")).collect();
    header.extend(failure_cols.iter().map(String::as_str));
    w.write_record(&header)?;
    let rows = report.per_complexity.iter().map(|(c, s)| (c.as_str(), s)).chain(std::iter::once(("overall", &report.overall)));
    for (name, s) in rows {
        let lat = s.latency.clone().unwrap_or_default();
        let mut row = vec![
            name.to_string(),
            s.trials.to_string(),
            s.syntactic_passes.to_string(),
            s.semantic_passes.to_string(),
            format!("{:.4}", s.syntactic_rate),
            format!("{:.4}", s.semantic_rate),
        ];
        for stage in [&lat.llm_generation_ms, &lat.function_preparation_ms, &lat.faas_deployment_ms, &lat.total_ms] {
            row.push(opt(mean(stage)));
            row.push(opt(std(stage)));
        }
        row.extend([opt(mean(&s.metrics.cc)), opt(std(&s.metrics.cc)), opt(mean(&s.metrics.mi)), opt(std(&s.metrics.mi))]);
        row.push(opt(s.metrics.effort_median));
        row.extend(FailureCategory::ALL.iter().map(|c| s.failures.get(c).copied().unwrap_or(0).to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(w.into_inner().expect("flushed"))
}

fn outcomes_csv(outcomes: &[EvalOutcome]) -> Result<Vec<u8>, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "task_id", "complexity", "runtime", "trial_index", "syntactic_pass", "semantic_pass", "failure", "failure_stage",
        "llm_generation_ms", "function_preparation_ms", "faas_deployment_ms", "total_ms", "cc", "mi", "effort",
    ])?;
    for o in outcomes {
        let b = &o.breakdown;
        w.write_record([
            o.task_id.clone(),
            o.complexity.to_string(),
            o.runtime.clone(),
            o.trial_index.to_string(),
            o.syntactic_pass.to_string(),
            o.semantic_pass.to_string(),
            o.failure.as_ref().map(|f| f.category.to_string()).unwrap_or_default(),
            o.failure_stage.map(|s| format!("{s:?}").to_lowercase()).unwrap_or_default(),
            opt(b.llm_generation.map(ms)),
            opt(b.function_preparation.map(ms)),
            opt(b.faas_deployment.map(ms)),
            opt(Some(ms(b.total))),
            o.metrics.as_ref().map(|m| m.cc.to_string()).unwrap_or_default(),
            opt(o.metrics.as_ref().and_then(|m| m.mi)),
            opt(o.metrics.as_ref().and_then(MetricReport::effort)),
        ])?;
    }
    w.flush()?;
    Ok(w.into_inner().expect("flushed"))
}

/// Writes `report.json` + `outcomes.json` and/or `summary.csv` +
/// `outcomes.csv` into `dir`. Output depends only on the inputs.
pub fn emit_report(
    report: &AggregateReport,
    outcomes: &[EvalOutcome],
    dir: &Path,
    formats: &[ReportFormat],
) -> anyhow::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut write = |name: &str, bytes: Vec<u8>| -> anyhow::Result<()> {
        let path = dir.join(name);
        std::fs::write(&path, bytes)?;
        written.push(path);
        Ok(())
    };
    for format in formats {
        match format {
            ReportFormat::Json => {
                let mut r = serde_json::to_vec_pretty(report)?;
                r.push(b'\n');
                write("report.json", r)?;
                let mut o = serde_json::to_vec_pretty(outcomes)?;
                o.push(b'\n');
                write("outcomes.json", o)?;
            }
            ReportFormat::Csv => {
                write("summary.csv", summary_csv(report)?)?;
                write("outcomes.csv", outcomes_csv(outcomes)?)?;
            }
        }
    }
    Ok(written)
}
