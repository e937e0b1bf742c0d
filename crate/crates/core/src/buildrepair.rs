//! Compilation gate and the compilation-driven repair loop: candidates
//! are compiled as library units; on errors the LLM is asked for
//! line-addressed fixes, with a once-per-round full-rewrite fallback.

use std::path::Path;
use std::process::Command;

use serde::Deserialize;
use thiserror::Error;

use crate::llm::{Dialogue, Hyperparameters, LlmError, Provider};
use crate::model::{CandidateTranslation, TokenUsage};
use crate::prompt::{self, PromptForge};

pub const DEFAULT_MAX_ROUNDS: u32 = 5;

#[derive(Debug, Error)]
pub enum RepairError {
    #[error("rust toolchain missing: {0}")]
    ToolchainMissing(String),
    #[error("sandbox: {0}")]
    Sandbox(#[from] std::io::Error),
    #[error("still failing to compile after {0} repair rounds")]
    CompileFail(u32),
    #[error("unparseable fix response")]
    BadFix,
    #[error("patch spans overlap or fall outside the file")]
    BadPatchSpan,
    #[error(transparent)]
    Llm(#[from] LlmError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone)]
pub struct Diagnostic {
    pub severity: Severity,
    pub code: Option<String>,
    pub message: String,
    /// 1-based inclusive span; None when the compiler gave no location.
    pub span: Option<(usize, usize)>,
    pub rendered: String,
}

/// rustc --error-format=json line shape (the parts we read).
#[derive(Deserialize)]
struct RustcMessage {
    #[serde(default)]
    level: String,
    #[serde(default)]
    message: String,
    #[serde(default)]
    code: Option<RustcCode>,
    #[serde(default)]
    spans: Vec<RustcSpan>,
    #[serde(default)]
    rendered: Option<String>,
}

#[derive(Deserialize)]
struct RustcCode {
    code: String,
}

#[derive(Deserialize)]
struct RustcSpan {
    line_start: usize,
    line_end: usize,
    #[serde(default)]
    is_primary: bool,
}

/// Compiles `code` as a plain library unit in `workdir`. Empty error list
/// means the candidate compiles; warnings never gate.
pub fn compile(code: &str, workdir: &Path) -> Result<Vec<Diagnostic>, RepairError> {
    let src = workdir.join("candidate.rs");
    std::fs::write(&src, code)?;
    let output = Command::new("rustc")
        .arg("--edition=2021")
        .arg("--crate-type=lib")
        .arg("--emit=metadata")
        .arg("--error-format=json")
        .arg("-o")
        .arg(workdir.join("candidate.rmeta"))
        .arg(&src)
        .current_dir(workdir)
        .output()
        .map_err(|e| RepairError::ToolchainMissing(e.to_string()))?;
    let stderr = String::from_utf8_lossy(&output.stderr);
    let mut diagnostics = Vec::new();
    for line in stderr.lines() {
        let Ok(msg) = serde_json::from_str::<RustcMessage>(line) else { continue };
        let severity = match msg.level.as_str() {
            "error" => Severity::Error,
            "warning" => Severity::Warning,
            _ => continue,
        };
        // "aborting due to N previous errors" carries no new information.
        if msg.message.starts_with("aborting due to") {
            continue;
        }
        let span = msg
            .spans
            .iter()
            .find(|s| s.is_primary)
            .or(msg.spans.first())
            .map(|s| (s.line_start, s.line_end));
        diagnostics.push(Diagnostic {
            severity,
            code: msg.code.map(|c| c.code),
            message: msg.message.clone(),
            span,
            rendered: msg.rendered.unwrap_or(msg.message),
        });
    }
    Ok(diagnostics)
}

pub fn errors_only(diagnostics: &[Diagnostic]) -> Vec<&Diagnostic> {
    diagnostics.iter().filter(|d| d.severity == Severity::Error).collect()
}

/// A contiguous line replacement, 1-based inclusive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinePatch {
    pub start: usize,
    pub end: usize,
    pub replacement: String,
}

/// Parses `@@ lines A-B` fix blocks; replacement lines run until the next
/// block header. A fenced response is unwrapped first.
pub fn parse_patches(response: &str) -> Result<Vec<LinePatch>, RepairError> {
    let body = if response.contains("```") {
        prompt::extract_code(response).unwrap_or_else(|_| response.to_string())
    } else {
        response.to_string()
    };
    let mut patches: Vec<LinePatch> = Vec::new();
    let mut current: Option<LinePatch> = None;
    for line in body.lines() {
        let trimmed = line.trim();
        if let Some(rest) = trimmed.strip_prefix("@@ lines ") {
            if let Some(patch) = current.take() {
                patches.push(patch);
            }
            let span = rest.trim().trim_end_matches("@@").trim();
            let (a, b) = match span.split_once('-') {
                Some((a, b)) => (a.trim(), b.trim()),
                None => (span, span),
            };
            let (start, end) = match (a.parse::<usize>(), b.parse::<usize>()) {
                (Ok(s), Ok(e)) if s >= 1 && s <= e => (s, e),
                _ => return Err(RepairError::BadFix),
            };
            current = Some(LinePatch { start, end, replacement: String::new() });
        } else if let Some(patch) = current.as_mut() {
            if !patch.replacement.is_empty() {
                patch.replacement.push('\n');
            }
            patch.replacement.push_str(line);
        }
    }
    if let Some(patch) = current.take() {
        patches.push(patch);
    }
    if patches.is_empty() {
        return Err(RepairError::BadFix);
    }
    Ok(patches)
}

/// Applies patches bottom-up so earlier spans stay valid. Overlapping or
/// out-of-range spans are rejected.
pub fn apply_patches(code: &str, patches: &[LinePatch]) -> Result<String, RepairError> {
    let mut sorted: Vec<&LinePatch> = patches.iter().collect();
    sorted.sort_by_key(|p| p.start);
    for pair in sorted.windows(2) {
        if pair[0].end >= pair[1].start {
            return Err(RepairError::BadPatchSpan);
        }
    }
    let mut lines: Vec<&str> = code.lines().collect();
    let total = lines.len();
    for patch in sorted.iter().rev() {
        if patch.end > total {
            return Err(RepairError::BadPatchSpan);
        }
        let replacement: Vec<&str> =
            if patch.replacement.is_empty() { vec![] } else { patch.replacement.lines().collect() };
        lines.splice(patch.start - 1..patch.end, replacement);
    }
    let mut out = lines.join("\n");
    out.push('\n');
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct RepairOutcome {
    pub code: String,
    pub rounds_used: u32,
    pub llm_calls: u32,
    pub usage: TokenUsage,
}

/// The compilation-repair loop. Each round: compile, send errors to the
/// LLM as a line-fix request, apply the patches; if the fix response is
/// unusable, fall back once to asking for a full rewrite. At most
/// `2 * max_rounds` LLM calls. An already-compiling candidate returns
/// unchanged with zero calls.
pub fn repair_until_compiles(
    candidate: &CandidateTranslation,
    provider: &dyn Provider,
    forge: &PromptForge,
    hp: &Hyperparameters,
    max_rounds: u32,
    workdir: &Path,
) -> Result<RepairOutcome, RepairError> {
    assert!(max_rounds >= 1, "repair needs at least one round");
    let mut code = candidate.text.clone();
    let mut usage = TokenUsage::default();
    let mut llm_calls = 0u32;
    for round in 0..=max_rounds {
        let diagnostics = compile(&code, workdir)?;
        let errors = errors_only(&diagnostics);
        if errors.is_empty() {
            return Ok(RepairOutcome { code, rounds_used: round, llm_calls, usage });
        }
        if round == max_rounds {
            break;
        }
        let rendered: String =
            errors.iter().take(8).map(|d| d.rendered.as_str()).collect::<Vec<_>>().join("\n");
        let fix_prompt = forge.build_compile_fix_prompt(&code, &rendered);
        let mut dialogue = Dialogue::from_human(fix_prompt);
        let completion = provider.complete(&dialogue, hp)?;
        llm_calls += 1;
        usage.add(completion.usage);
        let patched = parse_patches(&completion.text)
            .and_then(|patches| apply_patches(&code, &patches));
        match patched {
            Ok(next) => code = next,
            Err(_) => {
                // One fallback per round: request the whole file.
                dialogue.push_assistant(completion.text.clone())?;
                dialogue.push_human(forge.compile_fix_full_rewrite())?;
                let full = provider.complete(&dialogue, hp)?;
                llm_calls += 1;
                usage.add(full.usage);
                if let Ok(rewritten) = prompt::extract_code(&full.text) {
                    code = rewritten;
                }
            }
        }
    }
    Err(RepairError::CompileFail(max_rounds))
}
