//! Turn a natural-language application description into a deployed,
//! invocable function, and measure how well that works.
//!
//! The pieces:
//!
//! - [`platform`]: an embedded FaaS platform with subprocess guest runtimes
//! - [`llm`]: chat-completion providers (OpenAI-compatible and a seeded mock)
//! - [`bridge`]: prompt construction, code extraction, packaging, deployment
//!   and failure classification
//! - [`sim`]: a smart-home simulator whose state is the oracle for
//!   functional tests
//! - [`metrics`]: cyclomatic complexity, Halstead effort, maintainability
//! - [`eval`]: dataset loading, trials, repeats and reports

pub mod bridge;
pub mod config;
pub mod eval;
pub mod llm;
pub mod metrics;
pub mod platform;
pub mod runtime;
pub mod serde_util;
pub mod server;
pub mod sim;
