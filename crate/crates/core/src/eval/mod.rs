//! Evaluation harness: loads task datasets, runs build-and-test trials
//! against an in-process platform and simulator, and aggregates reports.

mod dataset;
mod report;

use std::collections::VecDeque;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use dataset::{load_dataset, parse_dataset, Complexity, DatasetError, SchemaError, TaskSpec};
pub use report::{emit_report, AggregateReport, LatencyStats, ReportFormat, StabilitySummary, StratumReport};

use crate::bridge::{
    classify_failure, Bridge, BridgeOptions, FailureKind, FailureStage, LatencyBreakdown, PromptConstructor, UserDescription,
};
use crate::llm::{LlmConfig, LlmProvider};
use crate::metrics::{analyze, MetricReport};
use crate::platform::{GatewayServer, Platform, PlatformError};
use crate::runtime::GuestLanguage;
use crate::server::ephemeral;
use crate::sim::{run_test, test_client, HomeSimulator, RunError, SimServer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutcome {
    pub task_id: String,
    pub complexity: Complexity,
    pub runtime: String,
    pub trial_index: usize,
    pub syntactic_pass: bool,
    pub semantic_pass: bool,
    pub failure: Option<FailureKind>,
    pub failure_stage: Option<FailureStage>,
    pub breakdown: LatencyBreakdown,
    pub metrics: Option<MetricReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failed_assertions: Vec<String>,
}

impl EvalOutcome {
    /// Semantic pass is forced false whenever syntactic pass is false.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        task: &TaskSpec,
        trial_index: usize,
        syntactic_pass: bool,
        semantic_pass: bool,
        failure: Option<(FailureStage, FailureKind)>,
        breakdown: LatencyBreakdown,
        metrics: Option<MetricReport>,
        failed_assertions: Vec<String>,
    ) -> Self {
        let (failure_stage, failure) = match failure {
            Some((stage, kind)) => (Some(stage), Some(kind)),
            None => (None, None),
        };
        Self {
            task_id: task.task_id.clone(),
            complexity: task.complexity,
            runtime: task.runtime.clone(),
            trial_index,
            syntactic_pass,
            semantic_pass: syntactic_pass && semantic_pass,
            failure,
            failure_stage,
            breakdown,
            metrics,
            failed_assertions,
        }
    }

    pub fn pass_symbol(&self) -> char {
        match (self.syntactic_pass, self.semantic_pass) {
            (true, true) => 'P',
            (true, false) => 'S',
            _ => 'F',
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Busy(#[from] PlatformError),
    #[error("cannot start harness servers: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct HarnessOptions {
    /// Concurrent trials. Each worker gets its own simulator.
    pub parallel: usize,
    pub bridge: BridgeOptions,
    pub prompts: Option<PromptConstructor>,
    pub provider_label: String,
}

impl Default for HarnessOptions {
    fn default() -> Self {
        Self { parallel: 1, bridge: BridgeOptions::default(), prompts: None, provider_label: "mock".into() }
    }
}

struct Worker {
    bridge: Bridge,
    sim: Arc<HomeSimulator>,
    _sim_server: SimServer,
}

/// Owns the servers a run needs: one gateway over the platform and one
/// simulator per worker.
pub struct Harness {
    platform: Platform,
    gateway: GatewayServer,
    workers: Vec<Worker>,
    client: reqwest::Client,
    label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub outcomes: Vec<EvalOutcome>,
    pub report: AggregateReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatResult {
    pub outcomes: Vec<EvalOutcome>,
    pub summary: StabilitySummary,
}

impl Harness {
    pub async fn start(
        platform: Platform,
        provider: Arc<dyn LlmProvider>,
        llm_config: LlmConfig,
        options: HarnessOptions,
    ) -> Result<Self, HarnessError> {
        let gateway = GatewayServer::start(platform.clone(), ephemeral()).await?;
        let mut workers = Vec::new();
        for _ in 0..options.parallel.max(1) {
            let sim = Arc::new(HomeSimulator::default());
            let sim_server = SimServer::start(sim.clone(), ephemeral()).await?;
            let mut bridge_options = options.bridge.clone();
            bridge_options.package.home_api_url = sim_server.base_url();
            let mut bridge = Bridge::new(provider.clone(), llm_config.clone(), platform.clone(), bridge_options);
            if let Some(p) = &options.prompts {
                bridge.prompts = p.clone();
            }
            workers.push(Worker { bridge, sim, _sim_server: sim_server });
        }
        let timeout = options.bridge.package.limits.invocation_timeout + Duration::from_secs(5);
        Ok(Self { platform, gateway, workers, client: test_client(timeout), label: options.provider_label })
    }

    pub fn platform(&self) -> &Platform {
        &self.platform
    }

    pub fn parallel(&self) -> usize {
        self.workers.len()
    }

    /// Builds, tests and removes one function for `task`.
    pub async fn run_trial(&self, task: &TaskSpec, trial_index: usize) -> EvalOutcome {
        self.trial_on(&self.workers[0], task, trial_index).await
    }

    async fn trial_on(&self, worker: &Worker, task: &TaskSpec, trial_index: usize) -> EvalOutcome {
        let description = UserDescription {
            text: task.description_text.clone(),
            task_id: Some(task.task_id.clone()),
            requested_runtime: task.runtime.clone(),
        };
        let language = GuestLanguage::from_runtime(&task.runtime).unwrap_or(GuestLanguage::Python);
        let metrics_of = |code: Option<&str>| code.and_then(|c| analyze(c, &task.runtime).ok());

        let built = worker.bridge.build_and_deploy(&description).await;
        let outcome = match built {
            Err(e) => {
                if let Some(record) = &e.record {
                    let _ = self.platform.remove(record.name()).await;
                }
                let stage = match e.kind {
                    crate::bridge::BuildErrorKind::LlmError => FailureStage::Generation,
                    crate::bridge::BuildErrorKind::ExtractionFailure => FailureStage::Extraction,
                    crate::bridge::BuildErrorKind::DeployFailure => FailureStage::Deployment,
                };
                let code = e.artifact.as_ref().and_then(|a| a.selected_code.as_deref());
                EvalOutcome::new(task, trial_index, false, false, Some((stage, e.failure.clone())), e.breakdown, metrics_of(code), vec![])
            }
            Ok(built) => {
                let name = built.record.name().to_string();
                let endpoint = self.gateway.function_url(&name);
                let code = built.artifact.selected_code.as_deref();
                let mut failed = Vec::new();
                let mut failure = None;
                for (i, case) in task.semantic_suite.iter().enumerate() {
                    match run_test(&worker.sim, case, &endpoint, &self.client).await {
                        Ok(report) => {
                            let label = if case.name.is_empty() { format!("case {i}") } else { case.name.clone() };
                            failed.extend(report.failed_assertions.into_iter().map(|a| format!("{label}: {a}")));
                        }
                        Err(err) => {
                            let evidence = match &err {
                                RunError::GuestError { detail, .. } => guest_detail(detail),
                                other => other.to_string(),
                            };
                            let kind = classify_failure(FailureStage::Invocation, &evidence, code, language);
                            failure = Some((FailureStage::Invocation, kind));
                            break;
                        }
                    }
                }
                let _ = self.platform.remove(&name).await;
                let syntactic = failure.is_none();
                let semantic = syntactic && failed.is_empty();
                EvalOutcome::new(task, trial_index, syntactic, semantic, failure, built.breakdown, metrics_of(code), failed)
            }
        };
        tracing::debug!(task = %task.task_id, trial = trial_index, symbol = %outcome.pass_symbol(), "trial finished");
        outcome
    }

    /// Runs every task `trials_per_task` times. Holds the platform's run
    /// lock for the duration; outcomes come back in dataset order.
    pub async fn run_dataset(&self, tasks: &[TaskSpec], trials_per_task: usize) -> Result<RunResult, HarnessError> {
        let _lock = self.platform.try_run_lock()?;
        let trials = trials_per_task.max(1);
        let outcomes = self.run_all(tasks, trials).await;
        let report = AggregateReport::from_outcomes(&self.label, &outcomes, trials, self.workers.len());
        Ok(RunResult { outcomes, report })
    }

    /// Repeats one task `n` times with an identical description.
    pub async fn run_repeats(&self, task: &TaskSpec, n: usize) -> Result<RepeatResult, HarnessError> {
        let _lock = self.platform.try_run_lock()?;
        let outcomes = self.run_all(std::slice::from_ref(task), n.max(1)).await;
        let summary = StabilitySummary::of(&task.task_id, &outcomes.iter().collect::<Vec<_>>());
        Ok(RepeatResult { outcomes, summary })
    }

    async fn run_all(&self, tasks: &[TaskSpec], trials: usize) -> Vec<EvalOutcome> {
        let jobs: VecDeque<(usize, usize)> =
            (0..tasks.len()).flat_map(|t| (0..trials).map(move |i| (t, i))).collect();
        let queue = Mutex::new(jobs);
        let results = Mutex::new(Vec::new());
        let work = self.workers.iter().map(|worker| async {
            loop {
                let Some((t, i)) = queue.lock().unwrap().pop_front() else { break };
                let outcome = self.trial_on(worker, &tasks[t], i).await;
                results.lock().unwrap().push(((t, i), outcome));
            }
        });
        futures::future::join_all(work).await;
        let mut results = results.into_inner().unwrap();
        results.sort_by_key(|(k, _)| *k);
        results.into_iter().map(|(_, o)| o).collect()
    }
}

/// The guest's own error text from a gateway error body.
fn guest_detail(body: &str) -> String {
    serde_json::from_str::<serde_json::Value>(body)
        .ok()
        .and_then(|v| v.get("detail").and_then(|d| d.as_str()).map(str::to_string))
        .unwrap_or_else(|| body.to_string())
}

/// Applies a runtime override to every task.
pub fn with_runtime(tasks: Vec<TaskSpec>, runtime: Option<&str>) -> Vec<TaskSpec> {
    match runtime {
        None => tasks,
        Some(r) => tasks.into_iter().map(|t| TaskSpec { runtime: r.to_string(), ..t }).collect(),
    }
}
