//! Shared domain types, the outcome/failure taxonomy and results
//! persistence.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    C,
    Go,
}

impl Language {
    pub fn name(&self) -> &'static str {
        match self {
            Language::C => "C",
            Language::Go => "Go",
        }
    }
}

/// A self-contained, compilable source file plus its entry-point manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SourceProgram {
    pub language: Language,
    pub text: String,
    pub entry_point: String,
    pub manifest: EntryDescriptor,
}

/// Type shape of one named slot (parameter, global or struct field).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: TypeDescriptor,
}

/// Describes the program-state universe of an entry point: which slots
/// exist and what shape each one has.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryDescriptor {
    pub params: Vec<Field>,
    #[serde(default)]
    pub returns: Option<TypeDescriptor>,
    #[serde(default)]
    pub globals: Vec<Field>,
    /// Names of params whose pointed-to state is part of the output.
    #[serde(default)]
    pub mutates: Vec<String>,
    /// Optional structural-consistency hooks for input generation.
    #[serde(default)]
    pub gen_hooks: Vec<GenHook>,
}

impl EntryDescriptor {
    pub fn validate(&self) -> Result<(), ModelError> {
        for m in &self.mutates {
            if !self.params.iter().any(|p| p.name == *m) {
                return Err(ModelError::BadDescriptor(format!(
                    "mutates entry {m:?} is not a parameter"
                )));
            }
        }
        Ok(())
    }

    pub fn is_mutated(&self, param: &str) -> bool {
        self.mutates.iter().any(|m| m == param)
    }
}

/// Recursive type shape of interchange-representable values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TypeDescriptor {
    Int { bits: u8, signed: bool },
    Float { bits: u8 },
    Bool,
    Str,
    Array { of: Box<TypeDescriptor> },
    Optional { of: Box<TypeDescriptor> },
    /// String-keyed map; non-string source keys are stringified.
    Map { value: Box<TypeDescriptor> },
    Aggregate { name: String, fields: Vec<Field> },
    Ref { of: Box<TypeDescriptor>, mutable: bool },
}

impl TypeDescriptor {
    pub const I64: TypeDescriptor = TypeDescriptor::Int { bits: 64, signed: true };

    pub fn array(of: TypeDescriptor) -> TypeDescriptor {
        TypeDescriptor::Array { of: Box::new(of) }
    }

    pub fn reference(of: TypeDescriptor, mutable: bool) -> TypeDescriptor {
        TypeDescriptor::Ref { of: Box::new(of), mutable }
    }
}

/// Structural input-generation hooks, keyed by dotted slot paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GenHook {
    /// Clamp integer generation at `path` to `[min, max]`.
    IntRange { path: String, min: i128, max: i128 },
    /// Force the value at `path` to equal the already-generated `source`.
    Copy { path: String, source: String },
    /// Force the collection at `path` to length `source^power`.
    Len { path: String, source: String, #[serde(default = "one")] power: u32 },
}

fn one() -> u32 {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Initial,
    Restart,
    Hinted,
    BaseRepair,
    Capr,
    Partition,
}

/// One candidate produced by the LLM (possibly after compile repair).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidateTranslation {
    pub text: String,
    pub attempt_index: u32,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    CompileFail,
    SerializationFail,
    CounterexampleRemains,
}

impl FailureKind {
    pub fn label(&self) -> &'static str {
        match self {
            FailureKind::CompileFail => "compile",
            FailureKind::SerializationFail => "serialization",
            FailureKind::CounterexampleRemains => "counterexample",
        }
    }
}

/// Why the translation loop stopped without success.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoopExit {
    /// Compilation-driven repair ran out of rounds.
    RepairExhausted,
    /// Harness/shim build or state round-trip failed.
    BridgeUnsupportedType,
    /// Budget reached zero with E- nonempty.
    BudgetZeroWithCounterexamples,
}

/// Maps a loop exit reason onto the reported failure taxonomy. Total.
pub fn classify_failure(exit: LoopExit) -> FailureKind {
    match exit {
        LoopExit::RepairExhausted => FailureKind::CompileFail,
        LoopExit::BridgeUnsupportedType => FailureKind::SerializationFail,
        LoopExit::BudgetZeroWithCounterexamples => FailureKind::CounterexampleRemains,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub input_tokens: u64,
    pub output_tokens: u64,
}

impl TokenUsage {
    pub fn add(&mut self, other: TokenUsage) {
        self.input_tokens += other.input_tokens;
        self.output_tokens += other.output_tokens;
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub status: Status,
    pub attempts_used: u32,
    pub wall_time: f64,
    pub usage: TokenUsage,
}

#[derive(Debug, Clone)]
pub enum Status {
    Success(CandidateTranslation),
    Fail(FailureKind),
}

impl Outcome {
    pub fn is_success(&self) -> bool {
        matches!(self.status, Status::Success(_))
    }

    pub fn failure_kind(&self) -> Option<FailureKind> {
        match self.status {
            Status::Fail(kind) => Some(kind),
            Status::Success(_) => None,
        }
    }
}

/// One line of the newline-delimited results log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub record_id: String,
    pub task_id: String,
    pub repetition: u32,
    pub strategy: String,
    pub llm: String,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure_kind: Option<String>,
    pub attempts_used: u32,
    pub wall_time_s: f64,
    pub input_tokens: u64,
    pub output_tokens: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lint_buckets: Option<LintBuckets>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LintBuckets {
    pub correctness: u32,
    pub suspicious: u32,
    pub style: u32,
    pub complexity: u32,
    pub performance: u32,
    #[serde(rename = "unsafe")]
    pub unsafe_blocks: u32,
}

impl LintBuckets {
    pub fn is_clean(&self) -> bool {
        *self == LintBuckets::default()
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid descriptor: {0}")]
    BadDescriptor(String),
    #[error("results log i/o: {0}")]
    Persistence(#[from] std::io::Error),
    #[error("corrupt results record: {0}")]
    CorruptRecord(String),
}

/// Append-only, single-writer results sink.
pub struct ResultSink {
    path: PathBuf,
    inner: Mutex<SinkState>,
}

struct SinkState {
    file: File,
    next_seq: u64,
}

impl ResultSink {
    pub fn open(path: &Path) -> Result<ResultSink, ModelError> {
        let existing = if path.exists() { replay(path)?.len() as u64 } else { 0 };
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(ResultSink {
            path: path.to_path_buf(),
            inner: Mutex::new(SinkState { file, next_seq: existing }),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Appends one record, filling in its id, and returns the id.
    pub fn append(&self, mut record: ResultRecord) -> Result<String, ModelError> {
        let mut state = self.inner.lock().expect("results sink poisoned");
        let id = format!("{}#{}#{}", record.task_id, record.repetition, state.next_seq);
        record.record_id = id.clone();
        let line = serde_json::to_string(&record)
            .map_err(|e| ModelError::CorruptRecord(e.to_string()))?;
        state.file.write_all(line.as_bytes())?;
        state.file.write_all(b"\n")?;
        state.file.flush()?;
        state.next_seq += 1;
        Ok(id)
    }
}

/// Reads a results log back into memory. Replaying twice yields identical
/// records.
pub fn replay(path: &Path) -> Result<Vec<ResultRecord>, ModelError> {
    let file = File::open(path)?;
    let mut records = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: ResultRecord =
            serde_json::from_str(&line).map_err(|e| ModelError::CorruptRecord(e.to_string()))?;
        records.push(record);
    }
    Ok(records)
}
