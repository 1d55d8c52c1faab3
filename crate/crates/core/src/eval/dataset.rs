use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::sim::SemanticTestCase;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Complexity {
    Easy,
    Medium,
    Advanced,
    Complex,
}

impl Complexity {
    pub const ALL: [Complexity; 4] = [Complexity::Easy, Complexity::Medium, Complexity::Advanced, Complexity::Complex];

    pub fn as_str(self) -> &'static str {
        match self {
            Complexity::Easy => "easy",
            Complexity::Medium => "medium",
            Complexity::Advanced => "advanced",
            Complexity::Complex => "complex",
        }
    }
}

impl std::fmt::Display for Complexity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

fn one() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_id: String,
    pub complexity: Complexity,
    #[serde(default = "one")]
    pub subtask_count: u32,
    pub description_text: String,
    pub runtime: String,
    pub semantic_suite: Vec<SemanticTestCase>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DatasetFile {
    tasks: Vec<TaskSpec>,
}

/// A dataset that does not match the schema. `path` is the JSON path of the
/// offending field, e.g. `tasks[3].semantic_suite`.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{}{path}: {message}", location.map(|(l, c)| format!("line {l}, column {c}: ")).unwrap_or_default())]
pub struct SchemaError {
    pub path: String,
    pub location: Option<(usize, usize)>,
    pub message: String,
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Schema(#[from] SchemaError),
}

pub fn load_dataset(path: &Path) -> Result<Vec<TaskSpec>, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io { path: path.display().to_string(), source })?;
    Ok(parse_dataset(&text)?)
}

/// Parses `{"tasks": [...]}` or a bare array of tasks, then checks the
/// invariants serde cannot express.
pub fn parse_dataset(text: &str) -> Result<Vec<TaskSpec>, SchemaError> {
    let bare = text.trim_start().starts_with('[');
    let mut de = serde_json::Deserializer::from_str(text);
    let parsed = if bare {
        serde_path_to_error::deserialize::<_, Vec<TaskSpec>>(&mut de).map(|tasks| (tasks, ""))
    } else {
        serde_path_to_error::deserialize::<_, DatasetFile>(&mut de).map(|f| (f.tasks, "tasks"))
    };
    let (tasks, root) = parsed.map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        SchemaError {
            path: if path == "." { String::new() } else { path },
            location: (inner.line() > 0).then(|| (inner.line(), inner.column())),
            message: inner.to_string(),
        }
    })?;
    let at = |i: usize, field: &str| format!("{root}[{i}]{}{field}", if field.is_empty() { "" } else { "." });
    let err = |path: String, message: String| SchemaError { path, location: None, message };

    let mut seen = HashSet::new();
    for (i, task) in tasks.iter().enumerate() {
        if task.task_id.trim().is_empty() {
            return Err(err(at(i, "task_id"), "task_id is empty".into()));
        }
        if !seen.insert(task.task_id.as_str()) {
            return Err(err(at(i, "task_id"), format!("duplicate task_id {:?}", task.task_id)));
        }
        if task.description_text.trim().is_empty() {
            return Err(err(at(i, "description_text"), "description_text is empty".into()));
        }
        if task.subtask_count == 0 {
            return Err(err(at(i, "subtask_count"), "subtask_count must be at least 1".into()));
        }
        if task.semantic_suite.is_empty() {
            return Err(err(at(i, "semantic_suite"), "semantic_suite is empty".into()));
        }
        for (j, case) in task.semantic_suite.iter().enumerate() {
            case.validate().map_err(|m| err(at(i, &format!("semantic_suite[{j}]")), m))?;
        }
    }
    Ok(tasks)
}
