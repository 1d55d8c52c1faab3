//! Description in, running function out: prompt construction, model call,
//! code extraction, packaging, deployment and failure classification.

mod classify;
mod deps;
mod extract;
mod prompt;
pub mod service;

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use classify::{classify_failure, FailureCategory, FailureKind, FailureStage};
pub use deps::{detect_dependencies, detect_dependencies_for, CLIENT_MODULE};
pub use extract::{extract_function, fence, handler_problem, parse_fences, CodeBlock, GeneratedArtifact};
pub use prompt::{
    builtin_context, construct_prompt, EnvironmentContext, PromptConstructor, PromptError, StructuredPrompt,
    UserDescription, ENTRY_POINT,
};

use crate::llm::{LlmConfig, LlmProvider, ProviderErrorKind};
use crate::platform::{DeploymentRecord, FunctionDescriptor, Platform, PlatformError, ResourceLimits};
use crate::runtime::GuestLanguage;

const MAX_NAME_STEM: usize = 56;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PackageError {
    #[error("artifact has no selected code to package")]
    NoCodeToPackage,
    #[error("unknown runtime {0:?}")]
    UnknownRuntime(String),
}

/// Turns a task id into a function name stem, or `None` if nothing usable
/// remains.
pub fn sanitize_name(raw: &str) -> Option<String> {
    let mut out = String::new();
    for c in raw.chars().flat_map(char::to_lowercase) {
        let c = if c.is_ascii_alphanumeric() { c } else { '-' };
        if c == '-' && (out.is_empty() || out.ends_with('-')) {
            continue;
        }
        out.push(c);
    }
    out.truncate(MAX_NAME_STEM);
    let out = out.trim_end_matches('-').to_string();
    (!out.is_empty()).then_some(out)
}

/// Name stem for a build: the sanitized task id, else a hash of the code.
pub fn base_name(description: &UserDescription, code: &str) -> String {
    description.task_id.as_deref().and_then(sanitize_name).unwrap_or_else(|| {
        let digest = Sha256::digest(code.as_bytes());
        format!("fn-{}", &hex::encode(digest)[..8])
    })
}

/// First of `stem`, `stem-2`, `stem-3`, ... that `taken` rejects.
pub fn dedupe_name(stem: &str, taken: impl Fn(&str) -> bool) -> String {
    if !taken(stem) {
        return stem.to_string();
    }
    (2..).map(|i| format!("{stem}-{i}")).find(|n| !taken(n)).unwrap()
}

/// Settings applied to every packaged function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PackageOptions {
    /// Device API base URL handed to the client stub.
    pub home_api_url: String,
    pub limits: ResourceLimits,
    pub env: BTreeMap<String, String>,
}

impl Default for PackageOptions {
    fn default() -> Self {
        Self { home_api_url: "http://127.0.0.1:8700".into(), limits: ResourceLimits::default(), env: BTreeMap::new() }
    }
}

/// Bundles the selected code with the device API client stub.
pub fn package(
    artifact: &GeneratedArtifact,
    description: &UserDescription,
    options: &PackageOptions,
    taken: impl Fn(&str) -> bool,
) -> Result<FunctionDescriptor, PackageError> {
    let code = artifact.selected_code.as_deref().ok_or(PackageError::NoCodeToPackage)?;
    let runtime = &description.requested_runtime;
    let language = GuestLanguage::from_runtime(runtime).ok_or_else(|| PackageError::UnknownRuntime(runtime.clone()))?;
    let client = match language {
        GuestLanguage::Python => include_str!("../../assets/python3/home.py"),
        GuestLanguage::JavaScript => include_str!("../../assets/nodejs/home.js"),
    };
    let name = dedupe_name(&base_name(description, code), taken);
    let mut env = options.env.clone();
    env.insert("HOME_API_URL".into(), options.home_api_url.clone());
    Ok(FunctionDescriptor {
        name,
        runtime: runtime.clone(),
        source_bundle: BTreeMap::from([
            (language.handler_file().to_string(), code.as_bytes().to_vec()),
            (language.client_file().to_string(), client.as_bytes().to_vec()),
        ]),
        entry_point: ENTRY_POINT.into(),
        dependencies: artifact.dependencies.clone(),
        env,
        resource_limits: options.limits.clone(),
    })
}

/// Per-stage durations of one build. A stage is `None` when the build
/// stopped before it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencyBreakdown {
    #[serde(with = "crate::serde_util::opt_duration_ms", rename = "llm_generation_ms")]
    pub llm_generation: Option<Duration>,
    #[serde(with = "crate::serde_util::opt_duration_ms", rename = "function_preparation_ms")]
    pub function_preparation: Option<Duration>,
    #[serde(with = "crate::serde_util::opt_duration_ms", rename = "faas_deployment_ms")]
    pub faas_deployment: Option<Duration>,
    #[serde(with = "crate::serde_util::duration_ms", rename = "total_ms")]
    pub total: Duration,
}

impl LatencyBreakdown {
    pub fn stage_sum(&self) -> Duration {
        [self.llm_generation, self.function_preparation, self.faas_deployment].into_iter().flatten().sum()
    }
}

/// Progress of a build, in pipeline order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BuildStage {
    Prompting,
    Generating,
    Extracting,
    Deploying,
    Live,
    Failed,
}

impl BuildStage {
    pub fn is_terminal(self) -> bool {
        matches!(self, BuildStage::Live | BuildStage::Failed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageEvent {
    pub stage: BuildStage,
    /// Milliseconds since the build started.
    pub elapsed_ms: f64,
    pub breakdown: LatencyBreakdown,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<FailureKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub function: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuildErrorKind {
    LlmError,
    ExtractionFailure,
    DeployFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, thiserror::Error)]
#[error("{kind:?}: {} ({})", failure.category, failure.evidence.lines().next().unwrap_or(""))]
pub struct BuildError {
    pub kind: BuildErrorKind,
    pub failure: FailureKind,
    pub artifact: Option<GeneratedArtifact>,
    pub breakdown: LatencyBreakdown,
    pub record: Option<DeploymentRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provider_error: Option<ProviderErrorKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildOutcome {
    pub record: DeploymentRecord,
    pub artifact: GeneratedArtifact,
    pub breakdown: LatencyBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BridgeOptions {
    pub package: PackageOptions,
    /// Model calls per build; a new call is made only when the previous
    /// response yielded no usable code.
    pub generation_attempts: u32,
    /// Check guest syntax before deploying.
    pub validate_syntax: bool,
    pub python_bin: String,
    pub node_bin: String,
}

impl Default for BridgeOptions {
    fn default() -> Self {
        Self {
            package: PackageOptions::default(),
            generation_attempts: 1,
            validate_syntax: false,
            python_bin: "python3".into(),
            node_bin: "node".into(),
        }
    }
}

/// The build pipeline bound to one provider and one platform.
pub struct Bridge {
    pub prompts: PromptConstructor,
    pub provider: Arc<dyn LlmProvider>,
    pub llm_config: LlmConfig,
    pub platform: Platform,
    pub options: BridgeOptions,
}

impl Bridge {
    pub fn new(provider: Arc<dyn LlmProvider>, llm_config: LlmConfig, platform: Platform, options: BridgeOptions) -> Self {
        Self { prompts: PromptConstructor::default(), provider, llm_config, platform, options }
    }

    pub async fn build_and_deploy(&self, description: &UserDescription) -> Result<BuildOutcome, BuildError> {
        self.build_with_progress(description, &|_| {}).await
    }

    /// Runs the pipeline, reporting each stage transition to `progress`.
    ///
    /// `total` is wall-clock time across the whole build; the stage
    /// durations are measured independently around the model call, the
    /// extraction and packaging step, and the platform deploy call.
    pub async fn build_with_progress(
        &self,
        description: &UserDescription,
        progress: &(dyn Fn(StageEvent) + Send + Sync),
    ) -> Result<BuildOutcome, BuildError> {
        let started = Instant::now();
        let mut breakdown = LatencyBreakdown::default();
        let emit = |stage, breakdown: &LatencyBreakdown, failure: Option<&FailureKind>, record: Option<&DeploymentRecord>| {
            progress(StageEvent {
                stage,
                elapsed_ms: started.elapsed().as_secs_f64() * 1000.0,
                breakdown: breakdown.clone(),
                failure: failure.cloned(),
                endpoint_path: record.and_then(|r| r.endpoint_path.clone()),
                function: record.map(|r| r.descriptor.name.clone()),
            })
        };
        let fail = |kind, failure: FailureKind, artifact, mut breakdown: LatencyBreakdown, record: Option<DeploymentRecord>, provider_error| {
            breakdown.total = started.elapsed();
            emit(BuildStage::Failed, &breakdown, Some(&failure), record.as_ref());
            Err(BuildError { kind, failure, artifact, breakdown, record, provider_error })
        };

        emit(BuildStage::Prompting, &breakdown, None, None);
        let language = GuestLanguage::from_runtime(&description.requested_runtime);
        let prompt = match (self.prompts.construct(description), language) {
            (Ok(p), Some(_)) => p,
            (Err(e), _) => {
                let failure = FailureKind { category: FailureCategory::Other, evidence: e.to_string() };
                return fail(BuildErrorKind::LlmError, failure, None, breakdown, None, None);
            }
            (Ok(_), None) => {
                let evidence = format!("unsupported runtime {:?}", description.requested_runtime);
                let failure = FailureKind { category: FailureCategory::Other, evidence };
                return fail(BuildErrorKind::LlmError, failure, None, breakdown, None, None);
            }
        };
        let language = language.unwrap();

        let attempts = self.options.generation_attempts.max(1);
        let mut generation = Duration::ZERO;
        let mut preparation = Duration::ZERO;
        let mut artifact = None;
        for attempt in 1..=attempts {
            if attempt == 1 {
                emit(BuildStage::Generating, &breakdown, None, None);
            }
            let response = self.provider.complete(&prompt, &self.llm_config).await;
            generation += response.generation_duration;
            breakdown.llm_generation = Some(generation);
            let text = match response.into_result() {
                Ok((text, _)) => text,
                Err((err, _)) => {
                    if attempt < attempts {
                        continue;
                    }
                    let evidence = format!("{:?}: {}", err.kind, err.detail);
                    let mut failure = classify_failure(FailureStage::Generation, &evidence, None, language);
                    if err.kind == ProviderErrorKind::Timeout {
                        failure.category = FailureCategory::Timeout;
                    }
                    return fail(BuildErrorKind::LlmError, failure, artifact, breakdown, None, Some(err.kind));
                }
            };

            if artifact.is_none() {
                emit(BuildStage::Extracting, &breakdown, None, None);
            }
            let extracting = Instant::now();
            let candidate = extract_function(&text, language);
            preparation += extracting.elapsed();
            breakdown.function_preparation = Some(preparation);
            let usable = candidate.failure.is_none();
            artifact = Some(candidate);
            if usable {
                break;
            }
        }
        let mut artifact = artifact.expect("at least one attempt");
        if let Some(failure) = artifact.failure.clone() {
            return fail(BuildErrorKind::ExtractionFailure, failure, Some(artifact), breakdown, None, None);
        }

        let preparing = Instant::now();
        if self.options.validate_syntax {
            if let Err(evidence) = self.check_syntax(artifact.selected_code.as_deref().unwrap_or(""), language).await {
                preparation += preparing.elapsed();
                breakdown.function_preparation = Some(preparation);
                let failure = classify_failure(FailureStage::Extraction, &evidence, artifact.selected_code.as_deref(), language);
                artifact.failure = Some(failure.clone());
                artifact.selected_code = None;
                return fail(BuildErrorKind::ExtractionFailure, failure, Some(artifact), breakdown, None, None);
            }
        }
        let platform = &self.platform;
        let descriptor = package(&artifact, description, &self.options.package, |n| platform.is_taken(n))
            .expect("selected code present");
        preparation += preparing.elapsed();
        breakdown.function_preparation = Some(preparation);

        emit(BuildStage::Deploying, &breakdown, None, None);
        let deploying = Instant::now();
        let mut descriptor = descriptor;
        let deployed = loop {
            match self.platform.deploy(descriptor.clone()).await {
                Err(PlatformError::DuplicateName(_)) => {
                    // Lost a race for the name against a concurrent build.
                    let stem = base_name(description, artifact.selected_code.as_deref().unwrap_or(""));
                    descriptor.name = dedupe_name(&stem, |n| platform.is_taken(n));
                }
                other => break other,
            }
        };
        breakdown.faas_deployment = Some(deploying.elapsed());

        match deployed {
            Ok(record) => {
                breakdown.total = started.elapsed();
                emit(BuildStage::Live, &breakdown, None, Some(&record));
                Ok(BuildOutcome { record, artifact, breakdown })
            }
            Err(e) => {
                let evidence = match &e {
                    PlatformError::PrepareFailed { detail, .. } | PlatformError::StartFailed { detail, .. } => detail.clone(),
                    other => other.to_string(),
                };
                let failure = classify_failure(FailureStage::Deployment, &evidence, artifact.selected_code.as_deref(), language);
                let record = e.record().cloned();
                fail(BuildErrorKind::DeployFailure, failure, Some(artifact), breakdown, record, None)
            }
        }
    }

    /// Prompts, generates and extracts without touching the platform.
    pub async fn dry_run(&self, description: &UserDescription) -> Result<(StructuredPrompt, GeneratedArtifact, LatencyBreakdown), BuildError> {
        let started = Instant::now();
        let mut breakdown = LatencyBreakdown::default();
        let stop = |failure: FailureKind, artifact, mut breakdown: LatencyBreakdown, provider_error| {
            breakdown.total = started.elapsed();
            Err(BuildError { kind: BuildErrorKind::LlmError, failure, artifact, breakdown, record: None, provider_error })
        };
        let prompt = match self.prompts.construct(description) {
            Ok(p) => p,
            Err(e) => return stop(FailureKind { category: FailureCategory::Other, evidence: e.to_string() }, None, breakdown, None),
        };
        let Some(language) = GuestLanguage::from_runtime(&description.requested_runtime) else {
            let evidence = format!("unsupported runtime {:?}", description.requested_runtime);
            return stop(FailureKind { category: FailureCategory::Other, evidence }, None, breakdown, None);
        };
        let response = self.provider.complete(&prompt, &self.llm_config).await;
        breakdown.llm_generation = Some(response.generation_duration);
        let text = match response.into_result() {
            Ok((text, _)) => text,
            Err((err, _)) => {
                let evidence = format!("{:?}: {}", err.kind, err.detail);
                let failure = classify_failure(FailureStage::Generation, &evidence, None, language);
                return stop(failure, None, breakdown, Some(err.kind));
            }
        };
        let extracting = Instant::now();
        let artifact = extract_function(&text, language);
        breakdown.function_preparation = Some(extracting.elapsed());
        breakdown.total = started.elapsed();
        Ok((prompt, artifact, breakdown))
    }

    async fn check_syntax(&self, code: &str, language: GuestLanguage) -> Result<(), String> {
        use tokio::io::AsyncWriteExt;
        let mut cmd = match language {
            GuestLanguage::Python => {
                let mut c = tokio::process::Command::new(&self.options.python_bin);
                c.args(["-c", "import ast, sys; ast.parse(sys.stdin.read(), 'handler.py')"]);
                c
            }
            GuestLanguage::JavaScript => {
                let mut c = tokio::process::Command::new(&self.options.node_bin);
                c.arg("--check");
                c
            }
        };
        let mut child = cmd
            .stdin(std::process::Stdio::piped())
            .stdout(std::process::Stdio::null())
            .stderr(std::process::Stdio::piped())
            .kill_on_drop(true)
            .spawn()
            .map_err(|e| format!("cannot run syntax check: {e}"))?;
        let mut stdin = child.stdin.take().expect("piped");
        stdin.write_all(code.as_bytes()).await.map_err(|e| e.to_string())?;
        drop(stdin);
        let out = child.wait_with_output().await.map_err(|e| e.to_string())?;
        if out.status.success() {
            Ok(())
        } else {
            Err(String::from_utf8_lossy(&out.stderr).into_owned())
        }
    }
}
