//! crosslate: LLM-driven translation of C programs into safe Rust,
//! validated for I/O equivalence by a cross-language differential fuzzer,
//! with configurable counterexample-feedback strategies.
//!
//! The pipeline: build a translation prompt, obtain a candidate from an
//! LLM (or a scripted mock), drive it through compilation repair, then
//! check it against the original program by fuzzing both sides across a
//! shared-library boundary on randomly generated program states. Failing
//! candidates are retried under a feedback strategy until a budget runs
//! out.

#[path = "../resources/rt_json.rs"]
pub mod rt_json;

pub mod bridge;
pub mod buildrepair;
pub mod cfront;
pub mod fuzzer;
pub mod llm;
pub mod miner;
pub mod model;
pub mod orchestrator;
pub mod prompt;
pub mod strategies;

pub use bridge::{compare_states, deserialize_state, serialize_state, ProgramState};
pub use model::{
    CandidateTranslation, EntryDescriptor, FailureKind, Language, Outcome, SourceProgram,
    TypeDescriptor,
};
pub use rt_json::Value;
