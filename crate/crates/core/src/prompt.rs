//! Prompt construction for every stage of the pipeline, and code
//! extraction from LLM responses.
//!
//! Templates are plain text resources with `{name}` placeholders; the
//! built-in set can be overridden from a directory at runtime so
//! preambles can be localized without recompiling.

use std::path::Path;

use thiserror::Error;

use crate::fuzzer::{Counterexample, Example, PathSignature};
use crate::llm::{Dialogue, Role};
use crate::model::{CandidateTranslation, Language, SourceProgram};
use crate::bridge;

/// Default number of examples rendered into a prompt.
pub const DEFAULT_EXAMPLE_CAP: usize = 4;

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("counterexample list is empty")]
    EmptyCounterexamples,
    #[error("examples span more than one path-equivalence class")]
    MixedPathClasses,
    #[error("no code found in response")]
    NoCodeFound,
    #[error("dialogue shape: {0}")]
    Dialogue(String),
    #[error("template load: {0}")]
    TemplateLoad(#[from] std::io::Error),
}

/// Constraint bullets appended to translation-style prompts.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    pub formatting: Vec<String>,
    pub code_characteristics: Vec<String>,
    pub fuzzer_limits: Vec<String>,
}

impl Default for ConstraintSet {
    fn default() -> ConstraintSet {
        ConstraintSet {
            formatting: vec![
                "Give me only the translated code, don't add explanations or anything else."
                    .to_string(),
            ],
            code_characteristics: vec![
                "Use only safe Rust.".to_string(),
                "Maintain the same function names, parameter names, and return types as the input code."
                    .to_string(),
                "Use only the Rust standard library.".to_string(),
            ],
            fuzzer_limits: vec![
                "Do not use custom generics.".to_string(),
                "Keep the same field names in data type definitions.".to_string(),
            ],
        }
    }
}

impl ConstraintSet {
    pub fn empty() -> ConstraintSet {
        ConstraintSet { formatting: vec![], code_characteristics: vec![], fuzzer_limits: vec![] }
    }

    fn bullets(&self) -> String {
        let mut out = String::new();
        for item in
            self.formatting.iter().chain(&self.code_characteristics).chain(&self.fuzzer_limits)
        {
            out.push_str("- ");
            out.push_str(item);
            out.push('\n');
        }
        // Trailing newline comes from the template.
        if out.ends_with('\n') {
            out.pop();
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct Templates {
    pub translate: String,
    pub repair: String,
    pub rebuttal: String,
    pub partition: String,
    pub compile_fix: String,
    pub compile_fix_full: String,
}

impl Templates {
    pub fn builtin() -> Templates {
        Templates {
            translate: include_str!("../resources/prompts/translate.txt").to_string(),
            repair: include_str!("../resources/prompts/repair.txt").to_string(),
            rebuttal: include_str!("../resources/prompts/rebuttal.txt").to_string(),
            partition: include_str!("../resources/prompts/partition.txt").to_string(),
            compile_fix: include_str!("../resources/prompts/compile_fix.txt").to_string(),
            compile_fix_full: include_str!("../resources/prompts/compile_fix_full.txt").to_string(),
        }
    }

    /// Loads overrides from a directory holding files with the built-in
    /// names (`translate.txt`, `repair.txt`, ...). Missing files keep the
    /// built-in text.
    pub fn from_dir(dir: &Path) -> Result<Templates, PromptError> {
        let mut t = Templates::builtin();
        let load = |name: &str, slot: &mut String| -> Result<(), PromptError> {
            let path = dir.join(name);
            if path.exists() {
                *slot = std::fs::read_to_string(path)?;
            }
            Ok(())
        };
        load("translate.txt", &mut t.translate)?;
        load("repair.txt", &mut t.repair)?;
        load("rebuttal.txt", &mut t.rebuttal)?;
        load("partition.txt", &mut t.partition)?;
        load("compile_fix.txt", &mut t.compile_fix)?;
        load("compile_fix_full.txt", &mut t.compile_fix_full)?;
        Ok(t)
    }
}

/// Single-pass placeholder substitution: `{name}` tokens present in the
/// template are replaced; placeholder-like text inside substituted values
/// is left alone.
pub fn render_template(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let tail = &rest[open..];
        if let Some(close) = tail.find('}') {
            let name = &tail[1..close];
            if let Some((_, value)) = vars.iter().find(|(k, _)| *k == name) {
                out.push_str(value);
                rest = &tail[close + 1..];
                continue;
            }
        }
        out.push('{');
        rest = &tail[1..];
    }
    out.push_str(rest);
    out
}

fn lang_tag(language: Language) -> &'static str {
    match language {
        Language::C => "c",
        Language::Go => "go",
    }
}

pub struct PromptForge {
    templates: Templates,
    pub example_cap: usize,
}

impl Default for PromptForge {
    fn default() -> PromptForge {
        PromptForge { templates: Templates::builtin(), example_cap: DEFAULT_EXAMPLE_CAP }
    }
}

impl PromptForge {
    pub fn new(templates: Templates, example_cap: usize) -> PromptForge {
        PromptForge { templates, example_cap }
    }

    /// Initial translation prompt: preamble, source code block,
    /// instruction, constraint bullets, in that order.
    pub fn build_translation_prompt(&self, p: &SourceProgram, c: &ConstraintSet) -> Dialogue {
        let text = render_template(
            &self.templates.translate,
            &[
                ("source_lang", p.language.name()),
                ("lang_tag", lang_tag(p.language)),
                ("source_code", p.text.trim_end()),
                ("constraints", &c.bullets()),
            ],
        );
        Dialogue::from_human(text.trim_end().to_string())
    }

    /// Repair prompt embedding the faulty translation and counterexamples
    /// from a single path-equivalence class.
    pub fn build_repair_prompt(
        &self,
        p: &SourceProgram,
        faulty: &CandidateTranslation,
        negatives: &[Counterexample],
        c: &ConstraintSet,
    ) -> Result<Dialogue, PromptError> {
        require_single_class(negatives.iter().map(|n| n.path_sig))?;
        if negatives.is_empty() {
            return Err(PromptError::EmptyCounterexamples);
        }
        let ces = render_counterexamples(negatives, self.example_cap);
        let text = render_template(
            &self.templates.repair,
            &[
                ("source_lang", p.language.name()),
                ("lang_tag", lang_tag(p.language)),
                ("source_code", p.text.trim_end()),
                ("faulty_code", faulty.text.trim_end()),
                ("constraints", &c.bullets()),
                ("counterexamples", &ces),
            ],
        );
        Ok(Dialogue::from_human(text.trim_end().to_string()))
    }

    /// Appends a rebuttal turn for the newest faulty translation, then
    /// slides the conversation window: at most `window` prior faulty
    /// translations remain, oldest dropped first, and the initial task
    /// turn is always kept.
    pub fn extend_conversation(
        &self,
        dialogue: &Dialogue,
        new_faulty: &CandidateTranslation,
        negatives: &[Counterexample],
        window: usize,
    ) -> Result<Dialogue, PromptError> {
        let mut d = dialogue.clone();
        if d.last_role() == Some(Role::Human) {
            d.push_assistant(new_faulty.text.clone())
                .map_err(|e| PromptError::Dialogue(e.to_string()))?;
        }
        let ces = render_counterexamples(negatives, self.example_cap);
        let rebuttal = render_template(&self.templates.rebuttal, &[("counterexamples", &ces)]);
        d.push_human(rebuttal.trim_end().to_string())
            .map_err(|e| PromptError::Dialogue(e.to_string()))?;

        // Turns are [task, (faulty, rebuttal)*]; keep the task turn plus
        // the last `window` pairs.
        let turns = d.turns();
        if turns.is_empty() || turns[0].role != Role::Human || (turns.len() - 1) % 2 != 0 {
            return Err(PromptError::Dialogue("expected task turn plus whole pairs".to_string()));
        }
        let pairs = (turns.len() - 1) / 2;
        let keep = pairs.min(window);
        let mut kept = vec![turns[0].clone()];
        kept.extend_from_slice(&turns[turns.len() - 2 * keep..]);
        Dialogue::from_turns(kept).map_err(|e| PromptError::Dialogue(e.to_string()))
    }

    /// Translation prompt augmented with desirable behaviours and known
    /// faulty cases, all from one path-equivalence class.
    pub fn build_hinted_prompt(
        &self,
        p: &SourceProgram,
        c: &ConstraintSet,
        positives: &[Example],
        negatives: &[Counterexample],
    ) -> Result<Dialogue, PromptError> {
        require_single_class(positives.iter().map(|e| e.path_sig))?;
        require_single_class(negatives.iter().map(|n| n.path_sig))?;
        let base = self.build_translation_prompt(p, c);
        let mut text = base.turns()[0].text.clone();

        // Split the example budget between the two sections, giving spare
        // room back to whichever side has more.
        let cap = self.example_cap;
        let mut pos_take = positives.len().min(cap / 2);
        let neg_take = negatives.len().min(cap - pos_take);
        pos_take += (positives.len() - pos_take).min(cap - pos_take - neg_take);

        if pos_take > 0 {
            text.push_str("\n\n# Desirable behaviours\nThe translation must reproduce these behaviours:\n");
            for (i, example) in positives.iter().take(pos_take).enumerate() {
                text.push_str(&render_positive(example, i + 1));
            }
        }
        if neg_take > 0 {
            text.push_str("\n\n# Known faulty cases\nAvoid translations with these faulty behaviours:\n");
            text.push_str(&render_counterexamples(&negatives[..neg_take], neg_take));
        }
        Ok(Dialogue::from_human(text.trim_end().to_string()))
    }

    /// Task-partitioning prompt: cumulative source through the current
    /// unit, with the instruction and constraints after the code.
    pub fn build_partition_prompt(
        &self,
        language: Language,
        cumulative_source: &str,
        c: &ConstraintSet,
    ) -> String {
        render_template(
            &self.templates.partition,
            &[
                ("source_lang", language.name()),
                ("lang_tag", lang_tag(language)),
                ("source_code", cumulative_source.trim_end()),
                ("constraints", &c.bullets()),
            ],
        )
        .trim_end()
        .to_string()
    }

    pub fn build_compile_fix_prompt(&self, faulty: &str, diagnostics: &str) -> String {
        render_template(
            &self.templates.compile_fix,
            &[("faulty_code", faulty.trim_end()), ("diagnostics", diagnostics)],
        )
        .trim_end()
        .to_string()
    }

    pub fn compile_fix_full_rewrite(&self) -> String {
        self.templates.compile_fix_full.trim_end().to_string()
    }
}

fn require_single_class(sigs: impl Iterator<Item = PathSignature>) -> Result<(), PromptError> {
    let mut first = None;
    for sig in sigs {
        match first {
            None => first = Some(sig),
            Some(f) if f != sig => return Err(PromptError::MixedPathClasses),
            Some(_) => {}
        }
    }
    Ok(())
}

fn render_positive(example: &Example, index: usize) -> String {
    format!(
        "\n## Example {index}\nInput:\n{}\nOutput:\n{}\n",
        bridge::serialize_state(&example.input),
        bridge::serialize_state(&example.output),
    )
}

/// Counterexamples render as (input, expected output, actual output)
/// triples in the interchange text form, so prompts are deterministic.
pub fn render_counterexamples(negatives: &[Counterexample], cap: usize) -> String {
    let mut out = String::new();
    for (i, ce) in negatives.iter().take(cap).enumerate() {
        out.push_str(&format!(
            "\n## Counterexample {}\nInput:\n{}\nExpected output:\n{}\nActual output:\n{}\n",
            i + 1,
            bridge::serialize_state(&ce.input),
            bridge::serialize_state(&ce.expected),
            bridge::serialize_state(&ce.actual),
        ));
    }
    out.trim_end().to_string()
}

/// Pulls target-language source out of an LLM response: the first fenced
/// code block if any, otherwise the response stripped of leading/trailing
/// prose lines.
pub fn extract_code(response: &str) -> Result<String, PromptError> {
    if let Some(block) = first_fenced_block(response) {
        return Ok(block);
    }
    let lines: Vec<&str> = response.lines().collect();
    let first = lines.iter().position(|l| is_code_line(l));
    let last = lines.iter().rposition(|l| is_code_line(l));
    match (first, last) {
        (Some(a), Some(b)) if a <= b => Ok(lines[a..=b].join("\n")),
        _ => Err(PromptError::NoCodeFound),
    }
}

fn first_fenced_block(text: &str) -> Option<String> {
    let open = text.find("```")?;
    let after_marker = &text[open + 3..];
    let body_start = after_marker.find('\n')? + 1;
    let body = &after_marker[body_start..];
    let close = body.find("```")?;
    let mut block = &body[..close];
    if let Some(stripped) = block.strip_suffix('\n') {
        block = stripped;
    }
    Some(block.to_string())
}

fn is_code_line(line: &str) -> bool {
    let t = line.trim_start();
    if t.is_empty() {
        return false;
    }
    const STARTERS: [&str; 16] = [
        "fn ", "pub ", "use ", "struct ", "enum ", "impl ", "let ", "static ", "const ", "mod ",
        "match ", "#", "//", "}", "{", "return ",
    ];
    STARTERS.iter().any(|s| t.starts_with(s))
        || t.contains("::")
        || t.ends_with(';')
        || t.ends_with('{')
        || t.ends_with('}')
}
