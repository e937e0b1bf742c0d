//! Harness synthesis and execution: compiles source program and candidate
//! translation into shared libraries with a common C ABI
//! (`flu_run`/`flu_free`), then runs each behind a small subprocess host
//! so hangs and hard crashes on either side never take down the caller.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::time::Duration;

use crate::bridge::{self, BridgeError, ProgramState, StateRole};
use crate::fuzzer::rustmeta::generate_candidate_harness;
use crate::fuzzer::{cshim, ExecOutcome, Executor, FuzzError};
use crate::model::{EntryDescriptor, Language, SourceProgram};
use crate::rt_json::{self, Value};

/// Per-call wall clock before the side is declared hung and its host
/// process killed.
pub const DEFAULT_CALL_TIMEOUT: Duration = Duration::from_secs(2);

#[derive(Debug, Clone)]
pub struct HarnessConfig {
    pub call_timeout: Duration,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        HarnessConfig { call_timeout: DEFAULT_CALL_TIMEOUT }
    }
}

/// Locates the `flu-runner` host binary: `FLU_RUNNER` env override first,
/// then next to the current executable, then one directory up (test
/// binaries live in a `deps/` subdirectory of the build output).
pub fn find_runner() -> Result<PathBuf, FuzzError> {
    if let Ok(p) = std::env::var("FLU_RUNNER") {
        let p = PathBuf::from(p);
        if p.is_file() {
            return Ok(p);
        }
    }
    if let Ok(exe) = std::env::current_exe() {
        if let Some(dir) = exe.parent() {
            for cand in [dir.join("flu-runner"), dir.join("../flu-runner")] {
                if cand.is_file() {
                    return Ok(cand);
                }
            }
        }
    }
    Err(FuzzError::Build(
        "flu-runner host binary not found (set FLU_RUNNER or build the workspace binaries)"
            .to_string(),
    ))
}

/// Compiles the candidate translation into an instrumented shared library.
/// Returns the library path and the instrumented-line count.
pub fn build_candidate_library(
    candidate_code: &str,
    descriptor: &EntryDescriptor,
    entry_point: &str,
    dir: &Path,
) -> Result<(PathBuf, usize), FuzzError> {
    let (harness, lines) = generate_candidate_harness(candidate_code, descriptor, entry_point)?;
    let src = dir.join("harness.rs");
    let lib = dir.join("libcand.so");
    std::fs::write(&src, harness)?;
    let out = Command::new("rustc")
        .args(["--edition=2021", "--crate-type=cdylib", "-o"])
        .arg(&lib)
        .arg(&src)
        .output()?;
    if !out.status.success() {
        return Err(FuzzError::Build(format!(
            "candidate harness failed to compile:\n{}",
            String::from_utf8_lossy(&out.stderr)
        )));
    }
    Ok((lib, lines))
}

/// Compiles the source program plus glue into an instrumented shared
/// library. Returns the library path and the instrumented-line count.
pub fn build_source_library(
    program: &SourceProgram,
    dir: &Path,
) -> Result<(PathBuf, usize), FuzzError> {
    match program.language {
        Language::C => {
            let (shim, lines) =
                cshim::generate_source_shim(&program.text, &program.manifest, &program.entry_point)?;
            let src = dir.join("shim.c");
            let lib = dir.join("libsrc.so");
            std::fs::write(&src, shim)?;
            let out = Command::new("gcc")
                .args(["-shared", "-fPIC", "-O1", "-o"])
                .arg(&lib)
                .arg(&src)
                .arg("-lm")
                .output()?;
            if !out.status.success() {
                return Err(FuzzError::Build(format!(
                    "source shim failed to compile:\n{}",
                    String::from_utf8_lossy(&out.stderr)
                )));
            }
            Ok((lib, lines))
        }
        Language::Go => Err(FuzzError::Build(
            "no Go toolchain is available in this environment".to_string(),
        )),
    }
}

struct RunnerProcess {
    child: Child,
    stdin: std::process::ChildStdin,
    lines: Receiver<std::io::Result<String>>,
}

impl RunnerProcess {
    fn spawn(runner: &Path, library: &Path) -> Result<RunnerProcess, FuzzError> {
        let mut child = Command::new(runner)
            .arg(library)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let failed = line.is_err();
                if tx.send(line).is_err() || failed {
                    break;
                }
            }
        });
        Ok(RunnerProcess { child, stdin, lines: rx })
    }

    fn kill(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl Drop for RunnerProcess {
    fn drop(&mut self) {
        self.kill();
    }
}

/// Executes one side via the runner host over a line protocol. The child
/// is restarted after a timeout or crash, so single bad inputs do not
/// poison later calls.
pub struct SubprocessExecutor {
    runner: PathBuf,
    library: PathBuf,
    descriptor: EntryDescriptor,
    timeout: Duration,
    line_count: usize,
    process: Option<RunnerProcess>,
}

impl SubprocessExecutor {
    pub fn new(
        library: PathBuf,
        descriptor: EntryDescriptor,
        line_count: usize,
        config: &HarnessConfig,
    ) -> Result<SubprocessExecutor, FuzzError> {
        Ok(SubprocessExecutor {
            runner: find_runner()?,
            library,
            descriptor,
            timeout: config.call_timeout,
            line_count,
            process: None,
        })
    }

    fn process(&mut self) -> Result<&mut RunnerProcess, FuzzError> {
        if self.process.is_none() {
            self.process = Some(RunnerProcess::spawn(&self.runner, &self.library)?);
        }
        Ok(self.process.as_mut().expect("just spawned"))
    }

    fn roundtrip(&mut self, line: &str) -> Result<String, String> {
        let timeout = self.timeout;
        let proc = match self.process() {
            Ok(p) => p,
            Err(e) => return Err(format!("runner spawn failed: {e}")),
        };
        if writeln!(proc.stdin, "{line}").is_err() || proc.stdin.flush().is_err() {
            self.restart();
            return Err("runner pipe closed".to_string());
        }
        match proc.lines.recv_timeout(timeout) {
            Ok(Ok(reply)) => Ok(reply),
            Ok(Err(e)) => {
                self.restart();
                Err(format!("runner read error: {e}"))
            }
            Err(RecvTimeoutError::Timeout) => {
                self.restart();
                Err("timeout".to_string())
            }
            Err(RecvTimeoutError::Disconnected) => {
                self.restart();
                Err("crash: runner exited".to_string())
            }
        }
    }

    fn restart(&mut self) {
        if let Some(mut p) = self.process.take() {
            p.kill();
        }
    }

    fn parse_envelope(&self, reply: &str) -> Result<ExecOutcome, FuzzError> {
        let value = rt_json::parse(reply).map_err(BridgeError::from)?;
        let status = match value.get_canonical("status") {
            Some(Value::Str(s)) => s.clone(),
            _ => {
                return Err(FuzzError::HarnessCrash(format!(
                    "malformed envelope: {reply}"
                )))
            }
        };
        match status.as_str() {
            "ok" => {
                let output = value.get_canonical("output").ok_or_else(|| {
                    FuzzError::HarnessCrash("ok envelope without output".to_string())
                })?;
                let state = bridge::bind_state(output, &self.descriptor, StateRole::Output)
                    .map_err(FuzzError::Bridge)?;
                let trace = collect_pairs(value.get_canonical("trace"));
                let lines_hit = collect_lines(value.get_canonical("lines"));
                Ok(ExecOutcome { state: Ok(state), trace, lines_hit })
            }
            "panic" => {
                let msg = match value.get_canonical("message") {
                    Some(Value::Str(s)) => s.clone(),
                    _ => "panic".to_string(),
                };
                Ok(ExecOutcome { state: Err(msg), trace: Vec::new(), lines_hit: Vec::new() })
            }
            other => Err(FuzzError::HarnessCrash(format!("unknown envelope status {other:?}"))),
        }
    }
}

fn collect_pairs(value: Option<&Value>) -> Vec<(u32, u32)> {
    let mut out = Vec::new();
    if let Some(Value::List(items)) = value {
        for item in items {
            if let Value::List(pair) = item {
                if let (Some(Value::Int(a)), Some(Value::Int(b))) = (pair.first(), pair.get(1)) {
                    out.push((*a as u32, *b as u32));
                }
            }
        }
    }
    out
}

fn collect_lines(value: Option<&Value>) -> Vec<u32> {
    let mut out = Vec::new();
    if let Some(Value::List(items)) = value {
        for item in items {
            if let Value::Int(n) = item {
                out.push(*n as u32);
            }
        }
    }
    out
}

impl Executor for SubprocessExecutor {
    fn execute(&mut self, input: &ProgramState) -> Result<ExecOutcome, FuzzError> {
        let line = bridge::serialize_state_compact(input);
        match self.roundtrip(&line) {
            Ok(reply) => self.parse_envelope(&reply),
            // Hangs and hard crashes are behaviors of the program under
            // test, not infrastructure faults: report them as panics so
            // they participate in differential comparison.
            Err(msg) => Ok(ExecOutcome { state: Err(msg), trace: Vec::new(), lines_hit: Vec::new() }),
        }
    }

    fn instrumented_lines(&self) -> usize {
        self.line_count
    }
}

/// Builds both sides of the differential pair in `dir` and returns ready
/// executors (source first, candidate second).
pub fn synthesize_harness(
    source: &SourceProgram,
    candidate_code: &str,
    dir: &Path,
    config: &HarnessConfig,
) -> Result<(SubprocessExecutor, SubprocessExecutor), FuzzError> {
    let (src_lib, src_lines) = build_source_library(source, dir)?;
    let (cand_lib, cand_lines) =
        build_candidate_library(candidate_code, &source.manifest, &source.entry_point, dir)?;
    let src_exec =
        SubprocessExecutor::new(src_lib, source.manifest.clone(), src_lines, config)?;
    let cand_exec =
        SubprocessExecutor::new(cand_lib, source.manifest.clone(), cand_lines, config)?;
    Ok((src_exec, cand_exec))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fuzzer::{run_differential, FuzzBudget};
    use crate::model::{Field, GenHook, TypeDescriptor};

    fn runner_built() -> PathBuf {
        // Test binaries run from target/debug/deps; the runner sits one up.
        match find_runner() {
            Ok(p) => p,
            Err(_) => {
                let status = Command::new("cargo")
                    .args(["build", "-p", "crosslate-core", "--bin", "flu-runner"])
                    .status()
                    .expect("cargo build");
                assert!(status.success());
                find_runner().expect("runner after build")
            }
        }
    }

    const ADD_C: &str = r#"
#include <stdint.h>
#include <stdbool.h>

typedef struct Matrix {
    int64_t n;
    int64_t a[64];
} Matrix;

typedef struct Env {
    int64_t n;
    Matrix *g;
    bool s[8];
} Env;

int64_t get(Matrix *m, int64_t i, int64_t j) {
    return m->a[i * m->n + j];
}

void add(Env *e, int64_t i, int64_t p) {
    if (get(e->g, i, p) == 0) {
        e->s[i] = true;
    }
}
"#;

    const ADD_RS_OK: &str = r#"
pub struct Matrix {
    pub n: i64,
    pub a: Vec<i64>,
}

pub struct Env {
    pub n: i64,
    pub g: Matrix,
    pub s: Vec<bool>,
}

pub fn get(m: &Matrix, i: i64, j: i64) -> i64 {
    m.a[(i * m.n + j) as usize]
}

pub fn add(e: &mut Env, i: i64, p: i64) {
    if get(&e.g, i, p) == 0 {
        e.s[i as usize] = true;
    }
}
"#;

    // Inverted condition: disagrees whenever the matrix entry is nonzero.
    const ADD_RS_BAD: &str = r#"
pub struct Matrix {
    pub n: i64,
    pub a: Vec<i64>,
}

pub struct Env {
    pub n: i64,
    pub g: Matrix,
    pub s: Vec<bool>,
}

pub fn get(m: &Matrix, i: i64, j: i64) -> i64 {
    m.a[(i * m.n + j) as usize]
}

pub fn add(e: &mut Env, i: i64, p: i64) {
    if get(&e.g, i, p) != 0 {
        e.s[i as usize] = true;
    }
}
"#;

    fn env_program() -> SourceProgram {
        let matrix = TypeDescriptor::Aggregate {
            name: "Matrix".to_string(),
            fields: vec![
                Field { name: "n".to_string(), ty: TypeDescriptor::I64 },
                Field { name: "a".to_string(), ty: TypeDescriptor::array(TypeDescriptor::I64) },
            ],
        };
        let env = TypeDescriptor::Aggregate {
            name: "Env".to_string(),
            fields: vec![
                Field { name: "n".to_string(), ty: TypeDescriptor::I64 },
                Field { name: "g".to_string(), ty: TypeDescriptor::reference(matrix, true) },
                Field { name: "s".to_string(), ty: TypeDescriptor::array(TypeDescriptor::Bool) },
            ],
        };
        SourceProgram {
            language: Language::C,
            text: ADD_C.to_string(),
            entry_point: "add".to_string(),
            manifest: EntryDescriptor {
                params: vec![
                    Field { name: "e".to_string(), ty: TypeDescriptor::reference(env, true) },
                    Field { name: "i".to_string(), ty: TypeDescriptor::I64 },
                    Field { name: "p".to_string(), ty: TypeDescriptor::I64 },
                ],
                returns: None,
                globals: vec![],
                mutates: vec!["e".to_string()],
                gen_hooks: vec![
                    GenHook::IntRange { path: "e.n".to_string(), min: 1, max: 8 },
                    GenHook::Copy { path: "e.g.n".to_string(), source: "e.n".to_string() },
                    GenHook::Len {
                        path: "e.g.a".to_string(),
                        source: "e.n".to_string(),
                        power: 2,
                    },
                    GenHook::Len { path: "e.s".to_string(), source: "e.n".to_string(), power: 1 },
                    GenHook::IntRange { path: "i".to_string(), min: 0, max: 0 },
                    GenHook::Copy { path: "p".to_string(), source: "i".to_string() },
                ],
            },
        }
    }

    #[test]
    fn faithful_translation_agrees_end_to_end() {
        let runner = runner_built();
        std::env::set_var("FLU_RUNNER", &runner);
        let dir = tempfile::tempdir().unwrap();
        let program = env_program();
        let config = HarnessConfig::default();
        let (mut src, mut cand) =
            synthesize_harness(&program, ADD_RS_OK, dir.path(), &config).unwrap();
        let budget = FuzzBudget::executions(40);
        let report =
            run_differential(&mut src, &mut cand, &program.manifest, budget, 7).unwrap();
        assert!(report.is_equivalent(), "negatives: {:?}", report.negatives);
        assert!(report.executions >= 40);
        assert!(report.source_coverage > 0.0);
        assert!(report.candidate_coverage > 0.0);
    }

    #[test]
    fn inverted_branch_is_caught_with_witness_state() {
        let runner = runner_built();
        std::env::set_var("FLU_RUNNER", &runner);
        let dir = tempfile::tempdir().unwrap();
        let program = env_program();
        let config = HarnessConfig::default();
        let (mut src, mut cand) =
            synthesize_harness(&program, ADD_RS_BAD, dir.path(), &config).unwrap();
        let budget = FuzzBudget::executions(60);
        let report =
            run_differential(&mut src, &mut cand, &program.manifest, budget, 11).unwrap();
        assert!(!report.is_equivalent());
        // Every divergence is on the written flag, never on echoed inputs.
        for ce in &report.negatives {
            for m in &ce.mismatches {
                assert!(m.path.starts_with("e.s"), "unexpected path {}", m.path);
            }
        }
    }

    #[test]
    fn hanging_candidate_times_out_as_panic() {
        let runner = runner_built();
        std::env::set_var("FLU_RUNNER", &runner);
        let dir = tempfile::tempdir().unwrap();
        let looping = r#"
pub fn spin(x: i64) -> i64 {
    let mut v = x;
    while v != -1 {
        if v < i64::MAX { v = v.wrapping_add(2); }
    }
    v
}
"#;
        let descriptor = EntryDescriptor {
            params: vec![Field { name: "x".to_string(), ty: TypeDescriptor::I64 }],
            returns: Some(TypeDescriptor::I64),
            globals: vec![],
            mutates: vec![],
            gen_hooks: vec![GenHook::IntRange { path: "x".to_string(), min: 0, max: 100 }],
        };
        let (lib, lines) =
            build_candidate_library(looping, &descriptor, "spin", dir.path()).unwrap();
        let config = HarnessConfig { call_timeout: Duration::from_millis(300) };
        let mut exec = SubprocessExecutor::new(lib, descriptor, lines, &config).unwrap();
        let input = ProgramState::new(vec![("x".to_string(), Value::Int(4))]);
        let outcome = exec.execute(&input).unwrap();
        assert_eq!(outcome.state.unwrap_err(), "timeout");
        // The executor recovers for the next call.
        let input2 = ProgramState::new(vec![("x".to_string(), Value::Int(-1))]);
        let outcome2 = exec.execute(&input2).unwrap();
        let state = outcome2.state.unwrap();
        assert_eq!(state.get("return"), Some(&Value::Int(-1)));
    }

    #[test]
    fn go_source_is_unsupported_build() {
        let dir = tempfile::tempdir().unwrap();
        let mut program = env_program();
        program.language = Language::Go;
        let err = build_source_library(&program, dir.path()).unwrap_err();
        assert!(matches!(err, FuzzError::Build(_)));
    }
}
