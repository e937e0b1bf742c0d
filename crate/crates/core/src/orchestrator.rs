//! Drives the validated-translation loop per task, runs experiment
//! batches, audits lint quality of accepted translations and summarizes
//! results logs.

use std::collections::VecDeque;
use std::path::Path;
use std::process::Command;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::buildrepair::{self, RepairError, DEFAULT_MAX_ROUNDS};
use crate::fuzzer::harness::{synthesize_harness, HarnessConfig};
use crate::fuzzer::{run_differential, Counterexample, FuzzBudget, FuzzError};
use crate::llm::{Dialogue, Hyperparameters, LlmError, Provider};
use crate::model::{
    classify_failure, CandidateTranslation, LintBuckets, LoopExit, Outcome,
    Provenance, ResultRecord, ResultSink, SourceProgram, Status, TokenUsage,
};
use crate::prompt::{extract_code, ConstraintSet, PromptError, PromptForge};
use crate::strategies::{
    self, PartitionStep, StrategyError, StrategyKind, StrategyState,
};

pub const DEFAULT_BUDGET: u32 = 5;
pub const DEFAULT_FUZZ_TIME_S: f64 = 300.0;

/// One unit of work for the loop.
#[derive(Debug, Clone)]
pub struct TranslationTask {
    pub task_id: String,
    pub program: SourceProgram,
    pub strategy: StrategyKind,
    pub budget: u32,
    pub fuzz_budget: FuzzBudget,
    pub llm_profile: String,
    pub repetition: u32,
    pub seed: u64,
}

impl TranslationTask {
    pub fn new(task_id: &str, program: SourceProgram, strategy: StrategyKind) -> TranslationTask {
        TranslationTask {
            task_id: task_id.to_string(),
            program,
            strategy,
            budget: DEFAULT_BUDGET,
            fuzz_budget: FuzzBudget::seconds(DEFAULT_FUZZ_TIME_S),
            llm_profile: "mock".to_string(),
            repetition: 1,
            seed: 0,
        }
    }
}

/// Failures of the machinery itself, reported apart from translation
/// failures and excluded from success-rate denominators.
#[derive(Debug, Error)]
pub enum InfraError {
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("strategy: {0}")]
    Strategy(String),
    #[error("toolchain: {0}")]
    Toolchain(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("linter missing: {0}")]
    LinterMissing(String),
}

impl From<StrategyError> for InfraError {
    fn from(e: StrategyError) -> InfraError {
        match e {
            StrategyError::Llm(e) => InfraError::Llm(e),
            StrategyError::Prompt(e) => InfraError::Prompt(e),
            other => InfraError::Strategy(other.to_string()),
        }
    }
}

/// Outcome plus the artifacts callers may want to persist.
#[derive(Debug)]
pub struct TranslateResult {
    pub outcome: Outcome,
    /// Counterexamples still standing when the loop gave up.
    pub residual_negatives: Vec<Counterexample>,
}

fn provenance_of(kind: StrategyKind, attempt: u32) -> Provenance {
    if attempt == 1 {
        return Provenance::Initial;
    }
    match kind {
        StrategyKind::Restart => Provenance::Restart,
        StrategyKind::Hinted => Provenance::Hinted,
        StrategyKind::BaseRepair => Provenance::BaseRepair,
        StrategyKind::Capr => Provenance::Capr,
        StrategyKind::Partition => Provenance::Partition,
    }
}

/// Builds the initial query. Partition first translates every non-entry
/// unit (those calls are preparation, not generation attempts) and hands
/// back the entry-unit dialogue.
fn initial_query(
    forge: &PromptForge,
    constraints: &ConstraintSet,
    task: &TranslationTask,
    st: &mut StrategyState,
    provider: &dyn Provider,
    hp: &Hyperparameters,
    usage: &mut TokenUsage,
) -> Result<Dialogue, InfraError> {
    if task.strategy != StrategyKind::Partition {
        return Ok(forge.build_translation_prompt(&task.program, constraints));
    }
    st.reset_partition();
    let graph = strategies::build_call_graph(&task.program).map_err(InfraError::from)?;
    let plan = strategies::partition_plan(&task.program, &graph).map_err(InfraError::from)?;
    loop {
        match strategies::partition_step(
            forge,
            constraints,
            &task.program,
            &plan,
            st,
            provider,
            hp,
        )
        .map_err(InfraError::from)?
        {
            PartitionStep::Accepted { usage: u, .. } => usage.add(u),
            PartitionStep::Query(d) => return Ok(d),
        }
    }
}

/// Runs the validated-translation loop: generate, repair until it
/// compiles, fuzz, and feed failures back until the budget is spent.
/// Compile-repair rounds never consume the budget; a repair that cannot
/// reach a compiling candidate ends the task as CompileFail.
pub fn translate(
    task: &TranslationTask,
    provider: &dyn Provider,
    forge: &PromptForge,
    hp: &Hyperparameters,
    workdir: &Path,
) -> Result<TranslateResult, InfraError> {
    assert!(task.budget >= 1, "budget must be at least 1");
    let started = Instant::now();
    let constraints = ConstraintSet::default();
    let mut st = StrategyState::new(task.strategy);
    let mut usage = TokenUsage::default();
    let mut q = initial_query(forge, &constraints, task, &mut st, provider, hp, &mut usage)?;

    let harness_config = HarnessConfig::default();
    let mut residual: Vec<Counterexample> = Vec::new();
    let mut exit = LoopExit::BudgetZeroWithCounterexamples;
    let mut attempts = 0u32;

    let mut b = task.budget;
    while b > 0 {
        attempts += 1;
        let completion = provider.complete(&q, hp)?;
        usage.add(completion.usage);
        let entry_code = extract_code(&completion.text)?;
        let code = if task.strategy == StrategyKind::Partition {
            let mut assembled = st.partition_memo.assembled();
            assembled.push_str("\n\n");
            assembled.push_str(&entry_code);
            assembled
        } else {
            entry_code
        };
        let mut candidate = CandidateTranslation {
            text: code,
            attempt_index: attempts,
            provenance: provenance_of(task.strategy, attempts),
        };

        match buildrepair::repair_until_compiles(
            &candidate,
            provider,
            forge,
            hp,
            DEFAULT_MAX_ROUNDS,
            workdir,
        ) {
            Ok(repaired) => {
                usage.add(repaired.usage);
                candidate.text = repaired.code;
            }
            Err(RepairError::CompileFail(_))
            | Err(RepairError::BadFix)
            | Err(RepairError::BadPatchSpan) => {
                exit = LoopExit::RepairExhausted;
                break;
            }
            Err(RepairError::ToolchainMissing(m)) => return Err(InfraError::Toolchain(m)),
            Err(RepairError::Sandbox(e)) => return Err(InfraError::Io(e)),
            Err(RepairError::Llm(e)) => return Err(InfraError::Llm(e)),
        }

        let attempt_dir = workdir.join(format!("attempt_{attempts}"));
        std::fs::create_dir_all(&attempt_dir)?;
        let built = synthesize_harness(
            &task.program,
            &candidate.text,
            &attempt_dir,
            &harness_config,
        );
        let (mut src_exec, mut cand_exec) = match built {
            Ok(pair) => pair,
            Err(FuzzError::Io(e)) => return Err(InfraError::Io(e)),
            Err(_) => {
                exit = LoopExit::BridgeUnsupportedType;
                break;
            }
        };
        let report = match run_differential(
            &mut src_exec,
            &mut cand_exec,
            &task.program.manifest,
            task.fuzz_budget.clone(),
            task.seed,
        ) {
            Ok(r) => r,
            Err(FuzzError::Io(e)) => return Err(InfraError::Io(e)),
            Err(_) => {
                exit = LoopExit::BridgeUnsupportedType;
                break;
            }
        };
        if report.is_equivalent() {
            return Ok(TranslateResult {
                outcome: Outcome {
                    status: Status::Success(candidate),
                    attempts_used: attempts,
                    wall_time: started.elapsed().as_secs_f64(),
                    usage,
                },
                residual_negatives: Vec::new(),
            });
        }
        residual = report.negatives.clone();
        b -= 1;
        if b == 0 {
            exit = LoopExit::BudgetZeroWithCounterexamples;
            break;
        }
        q = match task.strategy {
            StrategyKind::Restart => strategies::restart(&q),
            StrategyKind::Hinted => {
                strategies::hinted(forge, &task.program, &constraints, &report, &mut st)
                    .map_err(InfraError::from)?
            }
            StrategyKind::BaseRepair => strategies::base_repair(
                forge,
                &task.program,
                &constraints,
                &candidate,
                &report,
                &mut st,
            )
            .map_err(InfraError::from)?,
            StrategyKind::Capr => strategies::capr(forge, &q, &candidate, &report, &mut st)
                .map_err(InfraError::from)?,
            StrategyKind::Partition => {
                initial_query(forge, &constraints, task, &mut st, provider, hp, &mut usage)?
            }
        };
    }

    Ok(TranslateResult {
        outcome: Outcome {
            status: Status::Fail(classify_failure(exit)),
            attempts_used: attempts,
            wall_time: started.elapsed().as_secs_f64(),
            usage,
        },
        residual_negatives: residual,
    })
}

/// Runs `tasks` with up to `parallelism` worker threads, one isolated
/// sandbox directory per task, persisting one record per task. Task
/// failures are isolated; infra errors are recorded with status "infra".
pub fn run_batch(
    tasks: Vec<TranslationTask>,
    parallelism: usize,
    sink: &ResultSink,
    forge: &PromptForge,
    hp: &Hyperparameters,
    make_provider: &(dyn Fn(&TranslationTask) -> Result<Box<dyn Provider>, LlmError> + Sync),
) -> Result<(), InfraError> {
    let parallelism = parallelism.max(1);
    let queue: Arc<Mutex<VecDeque<TranslationTask>>> = Arc::new(Mutex::new(tasks.into()));
    std::thread::scope(|scope| {
        for _ in 0..parallelism {
            let queue = Arc::clone(&queue);
            scope.spawn(move || loop {
                let task = match queue.lock().expect("task queue poisoned").pop_front() {
                    Some(t) => t,
                    None => break,
                };
                let record = run_one(&task, forge, hp, make_provider);
                // A full sink is unrecoverable mid-batch; surface loudly.
                sink.append(record).expect("results sink write failed");
            });
        }
    });
    Ok(())
}

fn run_one(
    task: &TranslationTask,
    forge: &PromptForge,
    hp: &Hyperparameters,
    make_provider: &(dyn Fn(&TranslationTask) -> Result<Box<dyn Provider>, LlmError> + Sync),
) -> ResultRecord {
    let base = ResultRecord {
        record_id: String::new(),
        task_id: task.task_id.clone(),
        repetition: task.repetition,
        strategy: task.strategy.token().to_string(),
        llm: task.llm_profile.clone(),
        status: "infra".to_string(),
        failure_kind: None,
        attempts_used: 0,
        wall_time_s: 0.0,
        input_tokens: 0,
        output_tokens: 0,
        lint_buckets: None,
    };
    let provider = match make_provider(task) {
        Ok(p) => p,
        Err(_) => return base,
    };
    let sandbox = match tempfile::tempdir() {
        Ok(d) => d,
        Err(_) => return base,
    };
    match translate(task, provider.as_ref(), forge, hp, sandbox.path()) {
        Ok(result) => {
            let lint = match &result.outcome.status {
                Status::Success(c) => lint_audit(&c.text).ok(),
                Status::Fail(_) => None,
            };
            ResultRecord {
                status: if result.outcome.is_success() { "success" } else { "fail" }.to_string(),
                failure_kind: result.outcome.failure_kind().map(|k| k.label().to_string()),
                attempts_used: result.outcome.attempts_used,
                wall_time_s: result.outcome.wall_time,
                input_tokens: result.outcome.usage.input_tokens,
                output_tokens: result.outcome.usage.output_tokens,
                lint_buckets: lint,
                ..base
            }
        }
        Err(_) => base,
    }
}

const LINT_GROUPS: [(&str, &str); 5] = [
    ("correctness", "clippy::correctness"),
    ("suspicious", "clippy::suspicious"),
    ("style", "clippy::style"),
    ("complexity", "clippy::complexity"),
    ("performance", "clippy::perf"),
];

fn count_group_warnings(path: &Path, group: &str) -> Result<u32, InfraError> {
    let out = Command::new("clippy-driver")
        .args([
            "--edition=2021",
            "--crate-type=lib",
            "--emit=metadata",
            "--error-format=json",
            "-A",
            "clippy::all",
            "-W",
            group,
            "--out-dir",
        ])
        .arg(path.parent().expect("lint file has a parent"))
        .arg(path)
        .output()
        .map_err(|e| InfraError::LinterMissing(e.to_string()))?;
    let mut count = 0;
    for line in String::from_utf8_lossy(&out.stderr).lines() {
        let Ok(v) = serde_json::from_str::<serde_json::Value>(line) else { continue };
        let code = v.pointer("/code/code").and_then(|c| c.as_str()).unwrap_or("");
        if code.starts_with("clippy::") {
            count += 1;
        }
    }
    Ok(count)
}

fn count_unsafe(code: &str) -> u32 {
    use syn::visit::Visit;
    struct V(u32);
    impl<'a> Visit<'a> for V {
        fn visit_expr_unsafe(&mut self, node: &syn::ExprUnsafe) {
            self.0 += 1;
            syn::visit::visit_expr_unsafe(self, node);
        }
        fn visit_item_fn(&mut self, node: &syn::ItemFn) {
            if node.sig.unsafety.is_some() {
                self.0 += 1;
            }
            syn::visit::visit_item_fn(self, node);
        }
    }
    let Ok(file) = syn::parse_file(code) else { return 0 };
    let mut v = V(0);
    v.visit_file(&file);
    v.0
}

/// One linter pass per bucket on a compiling translation, plus a
/// syntactic count of unsafe blocks.
pub fn lint_audit(translation: &str) -> Result<LintBuckets, InfraError> {
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("translation.rs");
    std::fs::write(&path, translation)?;
    let mut buckets = LintBuckets { unsafe_blocks: count_unsafe(translation), ..Default::default() };
    for (bucket, group) in LINT_GROUPS {
        let n = count_group_warnings(&path, group)?;
        match bucket {
            "correctness" => buckets.correctness = n,
            "suspicious" => buckets.suspicious = n,
            "style" => buckets.style = n,
            "complexity" => buckets.complexity = n,
            "performance" => buckets.performance = n,
            _ => unreachable!(),
        }
    }
    Ok(buckets)
}

/// Aggregated view of a results log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Summary {
    /// Records considered (infra records excluded from rates).
    pub total: usize,
    pub infra: usize,
    pub success_rate: f64,
    /// Success on the very first candidate, after compilation repair.
    pub initial_success_rate: f64,
    pub per_strategy: Vec<(String, f64)>,
    pub per_task: Vec<(String, f64)>,
    /// failure kind label → fraction of failures.
    pub failure_distribution: Vec<(String, f64)>,
    /// Mean lint count per bucket across audited successes.
    pub lint_rates: Vec<(String, f64)>,
}

pub fn summarize(records: &[ResultRecord]) -> Summary {
    let infra = records.iter().filter(|r| r.status == "infra").count();
    let counted: Vec<&ResultRecord> =
        records.iter().filter(|r| r.status != "infra").collect();
    let n = counted.len().max(1) as f64;
    let successes: Vec<&&ResultRecord> =
        counted.iter().filter(|r| r.status == "success").collect();
    let success_rate = successes.len() as f64 / n;
    let initial = counted
        .iter()
        .filter(|r| r.status == "success" && r.attempts_used == 1)
        .count() as f64
        / n;

    let mut per_strategy: Vec<(String, f64)> = Vec::new();
    let mut per_task: Vec<(String, f64)> = Vec::new();
    for key in ["strategy", "task"] {
        let groups: Vec<String> = {
            let mut g: Vec<String> = counted
                .iter()
                .map(|r| if key == "strategy" { r.strategy.clone() } else { r.task_id.clone() })
                .collect();
            g.sort();
            g.dedup();
            g
        };
        for group in groups {
            let members: Vec<&&ResultRecord> = counted
                .iter()
                .filter(|r| {
                    if key == "strategy" { r.strategy == group } else { r.task_id == group }
                })
                .collect();
            let rate = members.iter().filter(|r| r.status == "success").count() as f64
                / members.len() as f64;
            if key == "strategy" {
                per_strategy.push((group, rate));
            } else {
                per_task.push((group, rate));
            }
        }
    }

    let failures: Vec<&&ResultRecord> = counted.iter().filter(|r| r.status == "fail").collect();
    let mut failure_distribution = Vec::new();
    if !failures.is_empty() {
        let mut kinds: Vec<String> =
            failures.iter().filter_map(|r| r.failure_kind.clone()).collect();
        kinds.sort();
        kinds.dedup();
        for kind in kinds {
            let k = failures
                .iter()
                .filter(|r| r.failure_kind.as_deref() == Some(&kind))
                .count() as f64;
            failure_distribution.push((kind, k / failures.len() as f64));
        }
    }

    let audited: Vec<LintBuckets> =
        successes.iter().filter_map(|r| r.lint_buckets).collect();
    let mut lint_rates = Vec::new();
    if !audited.is_empty() {
        let m = audited.len() as f64;
        let totals = [
            ("correctness", audited.iter().map(|b| b.correctness).sum::<u32>()),
            ("suspicious", audited.iter().map(|b| b.suspicious).sum::<u32>()),
            ("style", audited.iter().map(|b| b.style).sum::<u32>()),
            ("complexity", audited.iter().map(|b| b.complexity).sum::<u32>()),
            ("performance", audited.iter().map(|b| b.performance).sum::<u32>()),
            ("unsafe", audited.iter().map(|b| b.unsafe_blocks).sum::<u32>()),
        ];
        for (name, total) in totals {
            lint_rates.push((name.to_string(), total as f64 / m));
        }
    }

    Summary {
        total: counted.len(),
        infra,
        success_rate,
        initial_success_rate: initial,
        per_strategy,
        per_task,
        failure_distribution,
        lint_rates,
    }
}

/// Plain-text rendering of a summary.
pub fn render_summary(s: &Summary) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "records: {} counted, {} infra\nsuccess rate: {:.3}\ninitial success rate: {:.3}\nfeedback improvement: {:+.3}\n",
        s.total,
        s.infra,
        s.success_rate,
        s.initial_success_rate,
        s.success_rate - s.initial_success_rate
    ));
    out.push_str("\nper strategy:\n");
    for (name, rate) in &s.per_strategy {
        out.push_str(&format!("  {name}: {rate:.3}\n"));
    }
    out.push_str("\nper benchmark:\n");
    for (name, rate) in &s.per_task {
        out.push_str(&format!("  {name}: {rate:.3}\n"));
    }
    if !s.failure_distribution.is_empty() {
        out.push_str("\nfailure kinds:\n");
        for (kind, share) in &s.failure_distribution {
            out.push_str(&format!("  {kind}: {:.1}%\n", share * 100.0));
        }
    }
    if !s.lint_rates.is_empty() {
        out.push_str("\nmean lint counts per accepted translation:\n");
        for (bucket, rate) in &s.lint_rates {
            out.push_str(&format!("  {bucket}: {rate:.2}\n"));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(
        task: &str,
        strategy: &str,
        status: &str,
        kind: Option<&str>,
        attempts: u32,
    ) -> ResultRecord {
        ResultRecord {
            record_id: String::new(),
            task_id: task.to_string(),
            repetition: 1,
            strategy: strategy.to_string(),
            llm: "mock".to_string(),
            status: status.to_string(),
            failure_kind: kind.map(str::to_string),
            attempts_used: attempts,
            wall_time_s: 1.0,
            input_tokens: 10,
            output_tokens: 10,
            lint_buckets: None,
        }
    }

    #[test]
    fn summary_rates_and_failure_distribution() {
        let records = vec![
            record("a", "restart", "success", None, 1),
            record("a", "restart", "success", None, 2),
            record("b", "capr", "fail", Some("compile"), 1),
            record("b", "capr", "fail", Some("counterexample"), 5),
            record("b", "capr", "fail", Some("counterexample"), 5),
            record("c", "capr", "infra", None, 0),
        ];
        let s = summarize(&records);
        assert_eq!(s.total, 5);
        assert_eq!(s.infra, 1);
        assert!((s.success_rate - 0.4).abs() < 1e-9);
        assert!((s.initial_success_rate - 0.2).abs() < 1e-9);
        let dist: Vec<(&str, f64)> =
            s.failure_distribution.iter().map(|(k, v)| (k.as_str(), *v)).collect();
        assert_eq!(dist.len(), 2);
        assert!((dist[0].1 - 1.0 / 3.0).abs() < 1e-9);
        assert!((dist[1].1 - 2.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn lint_audit_buckets_style_and_unsafe() {
        let code = r#"
pub fn mid(x: i64) -> i64 {
    let y = unsafe { std::mem::transmute::<i64, i64>(x) };
    return y;
}
"#;
        let buckets = lint_audit(code).unwrap();
        assert!(buckets.style >= 1, "explicit return should flag style: {buckets:?}");
        assert_eq!(buckets.unsafe_blocks, 1);
    }

    #[test]
    fn lint_audit_clean_fixture_is_all_zero() {
        let code = "pub fn mid(x: i64) -> i64 {\n    x + 1\n}\n";
        let buckets = lint_audit(code).unwrap();
        assert!(buckets.is_clean(), "{buckets:?}");
    }
}
