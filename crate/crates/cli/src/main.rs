//! Command-line front end: single translations, experiment batches,
//! results reporting, lint audits and benchmark mining.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::Deserialize;

use crosslate_core::fuzzer::FuzzBudget;
use crosslate_core::llm::{load_playbook, GatewayConfig, Hyperparameters, Provider};
use crosslate_core::miner;
use crosslate_core::model::{EntryDescriptor, Language, ResultSink, Status};
use crosslate_core::orchestrator::{self, TranslationTask};
use crosslate_core::prompt::{PromptForge, Templates};
use crosslate_core::rt_json::{write_compact, Value};
use crosslate_core::strategies::StrategyKind;
use crosslate_core::SourceProgram;

const EXIT_TRANSLATION_FAILED: u8 = 1;
const EXIT_INFRA: u8 = 2;

#[derive(Parser)]
#[command(name = "crosslate", about = "Validated C-to-Rust translation")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Translate one benchmark and validate it by differential fuzzing.
    Translate {
        /// Benchmark source file (C).
        #[arg(long)]
        bench: PathBuf,
        /// Entry-point manifest (JSON).
        #[arg(long)]
        manifest: PathBuf,
        /// restart | hinted | base-repair | capr | partition
        #[arg(long, default_value = "restart")]
        strategy: String,
        /// Provider profile name from the gateway config.
        #[arg(long, default_value = "mock")]
        llm: String,
        #[arg(long, default_value_t = 5)]
        budget: u32,
        /// Fuzzing wall-time budget per attempt, in seconds.
        #[arg(long, default_value_t = 300.0)]
        fuzz_time: f64,
        /// Optional executions cap (overrides wall time; deterministic).
        #[arg(long)]
        executions: Option<u64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Provider gateway config (TOML). API keys come from env vars.
        #[arg(long)]
        gateway: Option<PathBuf>,
        /// Scripted-response playbook; overrides --gateway for this run.
        #[arg(long)]
        playbook: Option<PathBuf>,
        /// Where to write counterexample dumps and the accepted translation.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run a batch plan of translation tasks.
    Batch {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        #[arg(long, default_value_t = 3)]
        reps: u32,
        #[arg(long, default_value = "results.jsonl")]
        log: PathBuf,
        #[arg(long)]
        gateway: Option<PathBuf>,
    },
    /// Summarize a results log.
    Report {
        #[arg(long)]
        log: PathBuf,
        /// Emit the machine-readable summary instead of plain text.
        #[arg(long)]
        json: bool,
    },
    /// Lint-audit a translation file.
    Lint {
        #[arg(long)]
        translation: PathBuf,
    },
    /// Mine benchmarks out of a C project.
    Mine {
        #[arg(long)]
        project: PathBuf,
        /// Extract one function by name.
        #[arg(long, conflicts_with = "all")]
        function: Option<String>,
        /// Extract every function passing the selection filters.
        #[arg(long)]
        all: bool,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

/// Manifest file layout: the entry point plus its state descriptor.
#[derive(Deserialize)]
struct ManifestFile {
    entry_point: String,
    #[serde(default = "default_language")]
    language: Language,
    #[serde(flatten)]
    descriptor: EntryDescriptor,
}

fn default_language() -> Language {
    Language::C
}

fn load_program(bench: &Path, manifest: &Path) -> Result<SourceProgram> {
    let text = std::fs::read_to_string(bench)
        .with_context(|| format!("reading benchmark {}", bench.display()))?;
    let mf: ManifestFile = serde_json::from_str(
        &std::fs::read_to_string(manifest)
            .with_context(|| format!("reading manifest {}", manifest.display()))?,
    )
    .context("parsing manifest")?;
    mf.descriptor.validate().map_err(|e| anyhow!("{e}"))?;
    Ok(SourceProgram {
        language: mf.language,
        text,
        entry_point: mf.entry_point,
        manifest: mf.descriptor,
    })
}

fn make_provider(
    profile: &str,
    gateway: Option<&Path>,
    playbook: Option<&Path>,
) -> Result<(Box<dyn Provider>, Hyperparameters)> {
    if let Some(pb) = playbook {
        let provider = load_playbook(pb).map_err(|e| anyhow!("{e}"))?;
        return Ok((Box::new(provider), Hyperparameters::default()));
    }
    let path = gateway.ok_or_else(|| anyhow!("--gateway or --playbook is required"))?;
    let config = GatewayConfig::load(path).map_err(|e| anyhow!("{e}"))?;
    let hp = config.hyperparameters(profile).map_err(|e| anyhow!("{e}"))?;
    let provider = config.make_provider(profile).map_err(|e| anyhow!("{e}"))?;
    Ok((provider, hp))
}

fn dump_counterexamples(
    negatives: &[crosslate_core::fuzzer::Counterexample],
    out: &Path,
) -> Result<()> {
    std::fs::create_dir_all(out)?;
    for (i, ce) in negatives.iter().enumerate() {
        let doc = Value::Object(vec![
            ("input".to_string(), ce.input.as_value()),
            ("expected".to_string(), ce.expected.as_value()),
            ("actual".to_string(), ce.actual.as_value()),
        ]);
        std::fs::write(out.join(format!("ce_{i}.json")), write_compact(&doc))?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_translate(
    bench: PathBuf,
    manifest: PathBuf,
    strategy: String,
    llm: String,
    budget: u32,
    fuzz_time: f64,
    executions: Option<u64>,
    seed: u64,
    gateway: Option<PathBuf>,
    playbook: Option<PathBuf>,
    out: PathBuf,
) -> Result<u8> {
    let program = load_program(&bench, &manifest)?;
    let strategy: StrategyKind = strategy.parse().map_err(|e| anyhow!("{e}"))?;
    let (provider, hp) = make_provider(&llm, gateway.as_deref(), playbook.as_deref())?;
    let fuzz_budget = match executions {
        Some(n) => FuzzBudget::executions(n),
        None => FuzzBudget::seconds(fuzz_time),
    };
    let task_id = bench
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("bench")
        .to_string();
    let task = TranslationTask {
        task_id,
        program,
        strategy,
        budget,
        fuzz_budget,
        llm_profile: llm,
        repetition: 1,
        seed,
    };
    let forge = PromptForge::new(Templates::builtin(), 4);
    let sandbox = tempfile::tempdir()?;
    let result = orchestrator::translate(&task, provider.as_ref(), &forge, &hp, sandbox.path())
        .map_err(|e| anyhow!("{e}"))?;
    match &result.outcome.status {
        Status::Success(candidate) => {
            std::fs::create_dir_all(&out)?;
            let dest = out.join(format!("{}.rs", task.task_id));
            std::fs::write(&dest, &candidate.text)?;
            println!(
                "success: attempts={} wall_time={:.1}s tokens={}+{} -> {}",
                result.outcome.attempts_used,
                result.outcome.wall_time,
                result.outcome.usage.input_tokens,
                result.outcome.usage.output_tokens,
                dest.display()
            );
            Ok(0)
        }
        Status::Fail(kind) => {
            dump_counterexamples(&result.residual_negatives, &out)?;
            println!(
                "fail: kind={} attempts={} counterexamples={}",
                kind.label(),
                result.outcome.attempts_used,
                result.residual_negatives.len()
            );
            Ok(EXIT_TRANSLATION_FAILED)
        }
    }
}

#[derive(Deserialize)]
struct PlanFile {
    tasks: Vec<PlanTask>,
}

#[derive(Deserialize)]
struct PlanTask {
    task_id: String,
    bench: PathBuf,
    manifest: PathBuf,
    strategy: String,
    #[serde(default = "default_profile")]
    llm: String,
    #[serde(default = "default_budget")]
    budget: u32,
    #[serde(default = "default_fuzz_time")]
    fuzz_time: f64,
    #[serde(default)]
    executions: Option<u64>,
    #[serde(default)]
    seed: u64,
    /// Per-task playbook for scripted runs.
    #[serde(default)]
    playbook: Option<PathBuf>,
}

fn default_profile() -> String {
    "mock".to_string()
}

fn default_budget() -> u32 {
    5
}

fn default_fuzz_time() -> f64 {
    300.0
}

fn cmd_batch(
    plan: PathBuf,
    parallel: usize,
    reps: u32,
    log: PathBuf,
    gateway: Option<PathBuf>,
) -> Result<u8> {
    let plan: PlanFile =
        serde_json::from_str(&std::fs::read_to_string(&plan).context("reading plan")?)
            .context("parsing plan")?;
    let config = match &gateway {
        Some(path) => Some(GatewayConfig::load(path).map_err(|e| anyhow!("{e}"))?),
        None => None,
    };
    let mut tasks = Vec::new();
    let mut playbooks: std::collections::BTreeMap<String, PathBuf> = Default::default();
    for t in &plan.tasks {
        let program = load_program(&t.bench, &t.manifest)?;
        let strategy: StrategyKind = t.strategy.parse().map_err(|e| anyhow!("{e}"))?;
        if let Some(pb) = &t.playbook {
            playbooks.insert(t.task_id.clone(), pb.clone());
        }
        for rep in 1..=reps {
            let fuzz_budget = match t.executions {
                Some(n) => FuzzBudget::executions(n),
                None => FuzzBudget::seconds(t.fuzz_time),
            };
            tasks.push(TranslationTask {
                task_id: t.task_id.clone(),
                program: program.clone(),
                strategy,
                budget: t.budget,
                fuzz_budget,
                llm_profile: t.llm.clone(),
                repetition: rep,
                seed: t.seed + (rep as u64 - 1),
            });
        }
    }
    let sink = ResultSink::open(&log).map_err(|e| anyhow!("{e}"))?;
    let forge = PromptForge::new(Templates::builtin(), 4);
    let hp = Hyperparameters::default();
    orchestrator::run_batch(tasks, parallel, &sink, &forge, &hp, &|task| {
        if let Some(pb) = playbooks.get(&task.task_id) {
            return load_playbook(pb).map(|p| Box::new(p) as Box<dyn Provider>);
        }
        match &config {
            Some(c) => c.make_provider(&task.llm_profile),
            None => Err(crosslate_core::llm::LlmError::Config(
                "no gateway config and no per-task playbook".to_string(),
            )),
        }
    })
    .map_err(|e| anyhow!("{e}"))?;
    println!("log written to {}", log.display());
    Ok(0)
}

fn cmd_report(log: PathBuf, json: bool) -> Result<u8> {
    let records = crosslate_core::model::replay(&log).map_err(|e| anyhow!("{e}"))?;
    let summary = orchestrator::summarize(&records);
    if json {
        println!("{}", serde_json::to_string_pretty(&summary)?);
    } else {
        print!("{}", orchestrator::render_summary(&summary));
    }
    Ok(0)
}

fn cmd_lint(translation: PathBuf) -> Result<u8> {
    let code = std::fs::read_to_string(&translation)?;
    let buckets = orchestrator::lint_audit(&code).map_err(|e| anyhow!("{e}"))?;
    println!("{}", serde_json::to_string_pretty(&buckets)?);
    Ok(0)
}

fn write_bundle(bundle: &miner::BenchmarkBundle, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let name = &bundle.entry_point;
    std::fs::write(out.join(format!("{name}.c")), &bundle.source_file)?;
    let manifest = serde_json::json!({
        "entry_point": bundle.entry_point,
        "language": "c",
        "params": serde_json::to_value(&bundle.manifest.params)?,
        "returns": serde_json::to_value(&bundle.manifest.returns)?,
        "globals": serde_json::to_value(&bundle.manifest.globals)?,
        "mutates": serde_json::to_value(&bundle.manifest.mutates)?,
        "gen_hooks": serde_json::to_value(&bundle.manifest.gen_hooks)?,
        "meta": serde_json::to_value(&bundle.meta)?,
    });
    std::fs::write(
        out.join(format!("{name}.manifest.json")),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(())
}

fn cmd_mine(project: PathBuf, function: Option<String>, all: bool, out: PathBuf) -> Result<u8> {
    let index = miner::index_project(&project).map_err(|e| anyhow!("{e}"))?;
    for w in &index.warnings {
        eprintln!("warning: {w}");
    }
    let origin = project
        .file_name()
        .and_then(|s| s.to_str())
        .unwrap_or("project")
        .to_string();
    if let Some(f) = function {
        let bundle = miner::extract_benchmark(&index, &origin, &f).map_err(|e| anyhow!("{e}"))?;
        write_bundle(&bundle, &out)?;
        println!(
            "extracted {} ({} LoC, {} functions, depth {})",
            f, bundle.meta.loc, bundle.meta.function_count, bundle.meta.call_depth
        );
        return Ok(0);
    }
    if !all {
        bail!("pass --function <id> or --all");
    }
    let (accepted, rejected) = miner::select_all(&index, &origin);
    for bundle in &accepted {
        write_bundle(bundle, &out)?;
    }
    for (name, reason) in &rejected {
        eprintln!("rejected {name}: {reason}");
    }
    println!("accepted {} benchmarks, rejected {}", accepted.len(), rejected.len());
    Ok(0)
}

fn run() -> Result<u8> {
    let cli = Cli::parse();
    match cli.command {
        Cmd::Translate {
            bench,
            manifest,
            strategy,
            llm,
            budget,
            fuzz_time,
            executions,
            seed,
            gateway,
            playbook,
            out,
        } => cmd_translate(
            bench, manifest, strategy, llm, budget, fuzz_time, executions, seed, gateway,
            playbook, out,
        ),
        Cmd::Batch { plan, parallel, reps, log, gateway } => {
            cmd_batch(plan, parallel, reps, log, gateway)
        }
        Cmd::Report { log, json } => cmd_report(log, json),
        Cmd::Lint { translation } => cmd_lint(translation),
        Cmd::Mine { project, function, all, out } => cmd_mine(project, function, all, out),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_INFRA)
        }
    }
}
