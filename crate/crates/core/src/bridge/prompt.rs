use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::runtime::{GuestLanguage, NODEJS, PYTHON3};

/// Entry point every generated handler must define.
pub const ENTRY_POINT: &str = "fn";

const SYSTEM_TEMPLATE: &str = include_str!("../../assets/prompt/system_prompt.txt");
const APPLICATION_CONSTRAINTS: &str = include_str!("../../assets/prompt/application_constraints.txt");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuredPrompt {
    pub system_message: String,
    pub user_message: String,
    pub runtime: String,
    /// Dataset key of the task, used by the mock provider to pick fixtures.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserDescription {
    pub text: String,
    #[serde(default)]
    pub task_id: Option<String>,
    pub requested_runtime: String,
}

impl UserDescription {
    pub fn new(text: impl Into<String>, runtime: impl Into<String>) -> Self {
        Self { text: text.into(), task_id: None, requested_runtime: runtime.into() }
    }

    pub fn with_task_id(mut self, id: impl Into<String>) -> Self {
        self.task_id = Some(id.into());
        self
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        if self.text.trim().is_empty() {
            return Err(PromptError::EmptyDescription);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvironmentContext {
    pub api_reference: String,
    pub runtime_constraints: String,
    pub application_constraints: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("description text is empty")]
    EmptyDescription,
    #[error("no API reference registered for runtime {0:?}")]
    MissingApiReference(String),
    #[error("cannot read prompt template: {0}")]
    Template(String),
}

/// Builds prompts from a template with `{{placeholder}}` slots and one
/// environment context per runtime.
#[derive(Debug, Clone)]
pub struct PromptConstructor {
    template: String,
    contexts: BTreeMap<String, EnvironmentContext>,
}

impl Default for PromptConstructor {
    /// The shipped template with the python3 and nodejs contexts.
    fn default() -> Self {
        let mut p = Self::with_template(SYSTEM_TEMPLATE);
        p.register(PYTHON3, builtin_context(GuestLanguage::Python));
        p.register(NODEJS, builtin_context(GuestLanguage::JavaScript));
        p
    }
}

/// The device API documentation and handler contract shipped for a language.
pub fn builtin_context(language: GuestLanguage) -> EnvironmentContext {
    let (api, constraints) = match language {
        GuestLanguage::Python => (
            include_str!("../../assets/python3/api_reference.md"),
            include_str!("../../assets/prompt/python3_constraints.txt"),
        ),
        GuestLanguage::JavaScript => (
            include_str!("../../assets/nodejs/api_reference.md"),
            include_str!("../../assets/prompt/nodejs_constraints.txt"),
        ),
    };
    EnvironmentContext {
        api_reference: api.trim_end().to_string(),
        runtime_constraints: constraints.trim_end().to_string(),
        application_constraints: APPLICATION_CONSTRAINTS.trim_end().to_string(),
    }
}

impl PromptConstructor {
    /// A constructor with no runtimes registered.
    pub fn with_template(template: impl Into<String>) -> Self {
        Self { template: template.into(), contexts: BTreeMap::new() }
    }

    /// The default contexts with a template loaded from disk.
    pub fn from_template_file(path: &Path) -> Result<Self, PromptError> {
        let template = std::fs::read_to_string(path).map_err(|e| PromptError::Template(format!("{}: {e}", path.display())))?;
        Ok(Self { template, ..Self::default() })
    }

    pub fn register(&mut self, runtime: impl Into<String>, context: EnvironmentContext) {
        self.contexts.insert(runtime.into(), context);
    }

    pub fn context(&self, runtime: &str) -> Option<&EnvironmentContext> {
        self.contexts.get(runtime)
    }

    pub fn construct(&self, description: &UserDescription) -> Result<StructuredPrompt, PromptError> {
        description.validate()?;
        let runtime = &description.requested_runtime;
        let context = self
            .contexts
            .get(runtime)
            .filter(|c| !c.api_reference.trim().is_empty())
            .ok_or_else(|| PromptError::MissingApiReference(runtime.clone()))?;
        construct_prompt(&self.template, description, context)
    }
}

/// Fills the template. Pure: identical inputs give identical prompts.
pub fn construct_prompt(
    template: &str,
    description: &UserDescription,
    context: &EnvironmentContext,
) -> Result<StructuredPrompt, PromptError> {
    description.validate()?;
    let runtime = &description.requested_runtime;
    if context.api_reference.trim().is_empty() {
        return Err(PromptError::MissingApiReference(runtime.clone()));
    }
    let fence_tag = GuestLanguage::from_runtime(runtime).map(|l| l.primary_tag()).unwrap_or(runtime.as_str());
    // api_reference goes last so its own text is never treated as a slot.
    let system_message = template
        .replace("{{runtime_constraints}}", &context.runtime_constraints)
        .replace("{{application_constraints}}", &context.application_constraints)
        .replace("{{fence_tag}}", fence_tag)
        .replace("{{entry_point}}", ENTRY_POINT)
        .replace("{{runtime}}", runtime)
        .replace("{{api_reference}}", &context.api_reference);
    let user_message = format!("Target runtime: {runtime}\n\nWrite the function for this request:\n\n{}", description.text);
    Ok(StructuredPrompt {
        system_message,
        user_message,
        runtime: runtime.clone(),
        task_id: description.task_id.clone(),
    })
}
