//! Differential fuzzing: input generation, execution of both programs,
//! state comparison, path-class grouping and coverage accounting.

pub mod cshim;
pub mod harness;
pub mod rustmeta;

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bridge::{self, BridgeError, Mismatch, ProgramState, StateRole, DEFAULT_FLOAT_TOL};
use crate::model::{EntryDescriptor, GenHook, TypeDescriptor};
use crate::rt_json::Value;

/// Branch-outcome traces hash at most this many events, so loops cannot
/// blow up the signature.
pub const TRACE_TRUNCATION: usize = 256;
/// Reservoir cap on retained agreeing examples per path class.
pub const POSITIVE_CAP_PER_CLASS: usize = 32;
/// Stop fuzzing early once this many counterexamples are in hand.
pub const DEFAULT_NEGATIVE_CAP: usize = 16;
/// Recursion cap on aggregate generation.
pub const DEFAULT_DEPTH_CAP: usize = 4;

const CORPUS_CAP: usize = 256;

/// Hash of the ordered branch outcomes a candidate took on one input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PathSignature(pub u64);

/// FNV-1a over the (site, arm) event stream, truncated at
/// [`TRACE_TRUNCATION`] events.
pub fn path_signature(trace: &[(u32, u32)]) -> PathSignature {
    let mut h: u64 = 0xcbf29ce484222325;
    for (site, arm) in trace.iter().take(TRACE_TRUNCATION) {
        for b in site.to_le_bytes().into_iter().chain(arm.to_le_bytes()) {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    }
    PathSignature(h)
}

/// An agreeing execution: the candidate's output on this input matched the
/// source program's.
#[derive(Debug, Clone)]
pub struct Example {
    pub input: ProgramState,
    pub output: ProgramState,
    pub path_sig: PathSignature,
}

/// A disagreeing execution. `expected` is the source program's output.
#[derive(Debug, Clone)]
pub struct Counterexample {
    pub input: ProgramState,
    pub expected: ProgramState,
    pub actual: ProgramState,
    pub mismatches: Vec<Mismatch>,
    pub path_sig: PathSignature,
}

#[derive(Debug, Error)]
pub enum FuzzError {
    #[error("fuzzing budget is zero")]
    BudgetZero,
    #[error("harness crash: {0}")]
    HarnessCrash(String),
    #[error("unsupported type: {0}")]
    UnsupportedType(String),
    #[error(transparent)]
    Bridge(#[from] BridgeError),
    #[error("harness build: {0}")]
    Build(String),
    #[error("entry signature cannot be reconciled with the manifest: {0}")]
    SignatureMismatch(String),
    #[error("harness i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Wall-time budget by default; an executions cap gives deterministic
/// reports for tests. Either (or both) must be nonzero.
#[derive(Debug, Clone, Copy)]
pub struct FuzzBudget {
    pub wall_time: Option<Duration>,
    pub max_executions: Option<u64>,
    pub negative_cap: usize,
}

impl FuzzBudget {
    pub fn seconds(s: f64) -> FuzzBudget {
        FuzzBudget {
            wall_time: Some(Duration::from_secs_f64(s)),
            max_executions: None,
            negative_cap: DEFAULT_NEGATIVE_CAP,
        }
    }

    pub fn executions(n: u64) -> FuzzBudget {
        FuzzBudget {
            wall_time: None,
            max_executions: Some(n),
            negative_cap: DEFAULT_NEGATIVE_CAP,
        }
    }

    pub fn with_executions_cap(mut self, n: u64) -> FuzzBudget {
        self.max_executions = Some(n);
        self
    }

    pub fn is_zero(&self) -> bool {
        let no_time = self.wall_time.map_or(true, |t| t.is_zero());
        let no_exec = self.max_executions.map_or(true, |n| n == 0);
        no_time && no_exec
    }
}

/// One side's result on one input: either an output state or a
/// crash/panic message, plus instrumentation readings.
#[derive(Debug, Clone)]
pub struct ExecOutcome {
    pub state: Result<ProgramState, String>,
    pub trace: Vec<(u32, u32)>,
    pub lines_hit: Vec<u32>,
}

/// One runnable side of the differential pair.
pub trait Executor {
    fn execute(&mut self, input: &ProgramState) -> Result<ExecOutcome, FuzzError>;
    /// Number of instrumented lines (coverage denominator).
    fn instrumented_lines(&self) -> usize;
}

#[derive(Debug, Clone, Default)]
pub struct FuzzReport {
    pub positives: Vec<Example>,
    pub negatives: Vec<Counterexample>,
    pub executions: u64,
    pub elapsed: f64,
    pub source_coverage: f64,
    pub candidate_coverage: f64,
}

impl FuzzReport {
    pub fn is_equivalent(&self) -> bool {
        self.negatives.is_empty()
    }

    /// Counterexample indices grouped by path class, first-seen order.
    pub fn negative_classes(&self) -> Vec<(PathSignature, Vec<usize>)> {
        group_by_path(self.negatives.iter().map(|n| n.path_sig))
    }

    pub fn positives_in_class(&self, sig: PathSignature) -> Vec<&Example> {
        self.positives.iter().filter(|e| e.path_sig == sig).collect()
    }
}

/// Exact partition by signature; groups appear in first-seen order and
/// hold indices into the original sequence.
pub fn group_by_path(
    sigs: impl Iterator<Item = PathSignature>,
) -> Vec<(PathSignature, Vec<usize>)> {
    let mut groups: Vec<(PathSignature, Vec<usize>)> = Vec::new();
    for (i, sig) in sigs.enumerate() {
        match groups.iter_mut().find(|(s, _)| *s == sig) {
            Some((_, members)) => members.push(i),
            None => groups.push((sig, vec![i])),
        }
    }
    groups
}

/// Generates a well-typed input state for the descriptor. Integers are
/// biased toward boundary values with probability 1/4, collection sizes
/// are geometric within `size_budget`, recursion is depth-capped, and the
/// manifest's structural hooks are applied last.
pub fn generate_input(
    d: &EntryDescriptor,
    rng: &mut impl Rng,
    size_budget: usize,
) -> Result<ProgramState, FuzzError> {
    let mut bindings = Vec::new();
    for (name, ty) in bridge::slots(d, StateRole::Input) {
        let value = gen_value(&ty, rng, size_budget, DEFAULT_DEPTH_CAP, None)?;
        bindings.push((bridge::canonical_field_name(&name), value));
    }
    let mut state = ProgramState::new(bindings);
    apply_hooks(&mut state, d, rng)?;
    Ok(state)
}

fn geometric(rng: &mut impl Rng, cap: usize) -> usize {
    let mut n = 0;
    while n < cap && rng.gen_bool(0.5) {
        n += 1;
    }
    n
}

fn gen_int(rng: &mut impl Rng, bits: u8, signed: bool, range: Option<(i128, i128)>) -> i128 {
    let (lo, hi) = range.unwrap_or_else(|| bridge::int_bounds(bits, signed));
    if rng.gen_bool(0.25) {
        let boundaries = [0, 1, -1, lo, hi];
        let pick = boundaries[rng.gen_range(0..boundaries.len())];
        if (lo..=hi).contains(&pick) {
            return pick;
        }
    }
    // Uniform over a small window keeps arithmetic in translated programs
    // away from overflow unless the manifest widens the range.
    let small_lo = lo.max(-1024);
    let small_hi = hi.min(1024);
    if small_lo <= small_hi && range.is_none() {
        rng.gen_range(small_lo..=small_hi)
    } else {
        rng.gen_range(lo..=hi)
    }
}

fn gen_value(
    ty: &TypeDescriptor,
    rng: &mut impl Rng,
    size_budget: usize,
    depth: usize,
    range: Option<(i128, i128)>,
) -> Result<Value, FuzzError> {
    Ok(match ty {
        TypeDescriptor::Int { bits, signed } => Value::Int(gen_int(rng, *bits, *signed, range)),
        TypeDescriptor::Float { .. } => {
            if rng.gen_bool(0.25) {
                let boundaries = [0.0, 1.0, -1.0];
                Value::Float(boundaries[rng.gen_range(0..boundaries.len())])
            } else {
                Value::Float(rng.gen_range(-1000.0..1000.0))
            }
        }
        TypeDescriptor::Bool => Value::Bool(rng.gen_bool(0.5)),
        TypeDescriptor::Str => {
            let len = geometric(rng, size_budget);
            Value::Str((0..len).map(|_| rng.gen_range(b'a'..=b'z') as char).collect())
        }
        TypeDescriptor::Array { of } => {
            let len = geometric(rng, size_budget);
            let mut items = Vec::with_capacity(len);
            for _ in 0..len {
                items.push(gen_value(of, rng, size_budget, depth, None)?);
            }
            Value::List(items)
        }
        TypeDescriptor::Optional { of } => {
            if depth == 0 || rng.gen_bool(0.25) {
                Value::Null
            } else {
                gen_value(of, rng, size_budget, depth - 1, None)?
            }
        }
        TypeDescriptor::Map { value } => {
            let len = geometric(rng, size_budget);
            let mut entries: Vec<(String, Value)> = Vec::new();
            for _ in 0..len {
                let key: String =
                    (0..rng.gen_range(1..=4)).map(|_| rng.gen_range(b'a'..=b'z') as char).collect();
                if entries.iter().all(|(k, _)| *k != key) {
                    entries.push((key, gen_value(value, rng, size_budget, depth, None)?));
                }
            }
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            Value::Object(entries)
        }
        TypeDescriptor::Aggregate { fields, .. } => {
            if depth == 0 {
                return Ok(Value::Null);
            }
            let mut entries = Vec::with_capacity(fields.len());
            for f in fields {
                entries.push((
                    bridge::canonical_field_name(&f.name),
                    gen_value(&f.ty, rng, size_budget, depth - 1, None)?,
                ));
            }
            Value::Object(entries)
        }
        TypeDescriptor::Ref { of, .. } => {
            // References serialize inline; depth guards recursive shapes.
            if depth == 0 {
                return Ok(Value::Null);
            }
            gen_value(of, rng, size_budget, depth - 1, None)?
        }
    })
}

fn lookup_path<'a>(root: &'a mut ProgramState, path: &str) -> Option<&'a mut Value> {
    let mut segments = path.split('.').map(bridge::canonical_field_name);
    let first = segments.next()?;
    let mut cur: &mut Value = &mut root.bindings.iter_mut().find(|(k, _)| *k == first)?.1;
    for seg in segments {
        match cur {
            Value::Object(entries) => {
                cur = entries.iter_mut().find(|(k, _)| *k == seg).map(|(_, v)| v)?;
            }
            _ => return None,
        }
    }
    Some(cur)
}

/// Declared type of the slot at a dotted path, looking through references
/// and optionals.
fn descriptor_at<'a>(d: &'a EntryDescriptor, path: &str) -> Option<&'a TypeDescriptor> {
    fn strip(ty: &TypeDescriptor) -> &TypeDescriptor {
        match ty {
            TypeDescriptor::Ref { of, .. } | TypeDescriptor::Optional { of } => strip(of),
            other => other,
        }
    }
    let mut segments = path.split('.').map(bridge::canonical_field_name);
    let first = segments.next()?;
    let field = d
        .params
        .iter()
        .chain(&d.globals)
        .find(|f| bridge::canonical_field_name(&f.name) == first)?;
    let mut cur = strip(&field.ty);
    for seg in segments {
        match cur {
            TypeDescriptor::Aggregate { fields, .. } => {
                let f = fields
                    .iter()
                    .find(|f| bridge::canonical_field_name(&f.name) == seg)?;
                cur = strip(&f.ty);
            }
            _ => return None,
        }
    }
    Some(cur)
}

fn clone_path(root: &ProgramState, path: &str) -> Option<Value> {
    let mut segments = path.split('.').map(bridge::canonical_field_name);
    let first = segments.next()?;
    let mut cur = root.bindings.iter().find(|(k, _)| *k == first).map(|(_, v)| v)?;
    for seg in segments {
        match cur {
            Value::Object(entries) => {
                cur = entries.iter().find(|(k, _)| *k == seg).map(|(_, v)| v)?;
            }
            _ => return None,
        }
    }
    Some(cur.clone())
}

/// Applies the manifest's structural hooks in order: clamped ranges,
/// copied slots, and length ties (`len(path) = source^power`).
fn apply_hooks(
    state: &mut ProgramState,
    d: &EntryDescriptor,
    rng: &mut impl Rng,
) -> Result<(), FuzzError> {
    for hook in &d.gen_hooks {
        match hook {
            GenHook::IntRange { path, min, max } => {
                let fresh = Value::Int(rng.gen_range(*min..=*max));
                let slot = lookup_path(state, path)
                    .ok_or_else(|| FuzzError::UnsupportedType(format!("hook path {path:?}")))?;
                if let Value::Int(v) = slot {
                    if *v < *min || *v > *max {
                        *slot = fresh;
                    }
                } else {
                    return Err(FuzzError::UnsupportedType(format!(
                        "int_range hook on non-integer at {path:?}"
                    )));
                }
            }
            GenHook::Copy { path, source } => {
                let value = clone_path(state, source)
                    .ok_or_else(|| FuzzError::UnsupportedType(format!("hook source {source:?}")))?;
                let slot = lookup_path(state, path)
                    .ok_or_else(|| FuzzError::UnsupportedType(format!("hook path {path:?}")))?;
                *slot = value;
            }
            GenHook::Len { path, source, power } => {
                let base = match clone_path(state, source) {
                    Some(Value::Int(v)) if v >= 0 => v as u128,
                    other => {
                        return Err(FuzzError::UnsupportedType(format!(
                            "len hook source {source:?} is {other:?}"
                        )))
                    }
                };
                let want = base.pow(*power) as usize;
                // Resize by repeating a template element (or zeroed ints).
                let slot = lookup_path(state, path)
                    .ok_or_else(|| FuzzError::UnsupportedType(format!("hook path {path:?}")))?;
                match slot {
                    Value::List(items) => {
                        let template = match items.first() {
                            Some(v) => v.clone(),
                            // Empty list: fall back to a fresh element of
                            // the declared type so the schema still holds.
                            None => match descriptor_at(d, path) {
                                Some(TypeDescriptor::Array { of }) => {
                                    gen_value(of, rng, 1, DEFAULT_DEPTH_CAP, None)?
                                }
                                _ => Value::Int(0),
                            },
                        };
                        items.resize(want, template);
                    }
                    Value::Str(s) => {
                        let mut t: String = s.chars().take(want).collect();
                        while t.chars().count() < want {
                            t.push('a');
                        }
                        *slot = Value::Str(t);
                    }
                    other => {
                        return Err(FuzzError::UnsupportedType(format!(
                            "len hook on non-collection at {path:?}: {other:?}"
                        )))
                    }
                }
            }
        }
    }
    Ok(())
}

/// Regenerates one randomly chosen scalar leaf, then reapplies hooks so
/// tied slots stay consistent.
pub fn mutate_input(
    input: &ProgramState,
    d: &EntryDescriptor,
    rng: &mut impl Rng,
) -> Result<ProgramState, FuzzError> {
    let mut out = input.clone();
    let leaves = count_leaves(&Value::Object(out.bindings.clone()));
    if leaves > 0 {
        let target = rng.gen_range(0..leaves);
        let mut seen = 0usize;
        let mut wrapper = Value::Object(std::mem::take(&mut out.bindings));
        mutate_leaf(&mut wrapper, target, &mut seen, rng);
        if let Value::Object(bindings) = wrapper {
            out.bindings = bindings;
        }
    }
    apply_hooks(&mut out, d, rng)?;
    Ok(out)
}

fn count_leaves(v: &Value) -> usize {
    match v {
        Value::Object(entries) => entries.iter().map(|(_, v)| count_leaves(v)).sum(),
        Value::List(items) => items.iter().map(count_leaves).sum(),
        _ => 1,
    }
}

fn mutate_leaf(v: &mut Value, target: usize, seen: &mut usize, rng: &mut impl Rng) {
    match v {
        Value::Object(entries) => {
            for (_, child) in entries {
                mutate_leaf(child, target, seen, rng);
            }
        }
        Value::List(items) => {
            for child in items {
                mutate_leaf(child, target, seen, rng);
            }
        }
        leaf => {
            if *seen == target {
                *leaf = match leaf {
                    Value::Int(_) => Value::Int(gen_int(rng, 64, true, None)),
                    Value::Float(_) => Value::Float(rng.gen_range(-1000.0..1000.0)),
                    Value::Bool(b) => Value::Bool(!*b),
                    Value::Str(_) => {
                        let len = geometric(rng, 8);
                        Value::Str((0..len).map(|_| rng.gen_range(b'a'..=b'z') as char).collect())
                    }
                    Value::Null => Value::Null,
                    _ => unreachable!("containers handled above"),
                };
            }
            *seen += 1;
        }
    }
}

fn bottom_state(message: &str) -> ProgramState {
    ProgramState::new(vec![("⊥".to_string(), Value::Str(message.to_string()))])
}

fn coverage(covered: &BTreeSet<u32>, instrumented: usize) -> f64 {
    if instrumented == 0 {
        0.0
    } else {
        covered.len() as f64 / instrumented as f64
    }
}

/// The differential loop: generate (or mutate) an input, run both sides,
/// compare whole program states, bucket the result. Inputs that reach new
/// lines on either side join the mutation corpus.
pub fn run_differential(
    source: &mut dyn Executor,
    candidate: &mut dyn Executor,
    d: &EntryDescriptor,
    budget: FuzzBudget,
    seed: u64,
) -> Result<FuzzReport, FuzzError> {
    if budget.is_zero() {
        return Err(FuzzError::BudgetZero);
    }
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = FuzzReport::default();
    let mut corpus: Vec<ProgramState> = Vec::new();
    let mut covered_src: BTreeSet<u32> = BTreeSet::new();
    let mut covered_cand: BTreeSet<u32> = BTreeSet::new();
    // Per-class totals drive reservoir sampling of positives.
    let mut class_totals: Vec<(PathSignature, u64)> = Vec::new();

    loop {
        if let Some(limit) = budget.max_executions {
            if report.executions >= limit {
                break;
            }
        }
        if let Some(limit) = budget.wall_time {
            if started.elapsed() >= limit {
                break;
            }
        }
        if report.negatives.len() >= budget.negative_cap {
            break;
        }

        let input = if !corpus.is_empty() && rng.gen_bool(0.5) {
            let pick = rng.gen_range(0..corpus.len());
            mutate_input(&corpus[pick].clone(), d, &mut rng)?
        } else {
            generate_input(d, &mut rng, 4)?
        };

        let src = source.execute(&input)?;
        let cand = candidate.execute(&input)?;
        report.executions += 1;

        let mut novel = false;
        for l in &src.lines_hit {
            novel |= covered_src.insert(*l);
        }
        for l in &cand.lines_hit {
            novel |= covered_cand.insert(*l);
        }
        if novel && corpus.len() < CORPUS_CAP {
            corpus.push(input.clone());
        }

        let sig = path_signature(&cand.trace);
        match (&src.state, &cand.state) {
            (Ok(expected), Ok(actual)) => {
                let mismatches = compare_or_shape_mismatch(expected, actual);
                if mismatches.is_empty() {
                    record_positive(
                        &mut report.positives,
                        &mut class_totals,
                        Example { input, output: actual.clone(), path_sig: sig },
                        &mut rng,
                    );
                } else {
                    report.negatives.push(Counterexample {
                        input,
                        expected: expected.clone(),
                        actual: actual.clone(),
                        mismatches,
                        path_sig: sig,
                    });
                }
            }
            (Ok(expected), Err(panic)) => {
                let actual = bottom_state(panic);
                report.negatives.push(Counterexample {
                    mismatches: vec![Mismatch {
                        path: "⊥".to_string(),
                        expected: Value::Null,
                        actual: Value::Str(panic.clone()),
                    }],
                    input,
                    expected: expected.clone(),
                    actual,
                    path_sig: sig,
                });
            }
            (Err(panic), Ok(actual)) => {
                report.negatives.push(Counterexample {
                    mismatches: vec![Mismatch {
                        path: "⊥".to_string(),
                        expected: Value::Str(panic.clone()),
                        actual: Value::Null,
                    }],
                    input,
                    expected: bottom_state(panic),
                    actual: actual.clone(),
                    path_sig: sig,
                });
            }
            // Both sides crashed: termination behaviour agrees, but there
            // is no output state worth retaining as an example.
            (Err(_), Err(_)) => {}
        }
    }

    report.elapsed = started.elapsed().as_secs_f64();
    report.source_coverage = coverage(&covered_src, source.instrumented_lines());
    report.candidate_coverage = coverage(&covered_cand, candidate.instrumented_lines());
    Ok(report)
}

/// A slot-set difference (shape divergence) counts as a whole-state
/// mismatch rather than an infrastructure error.
fn compare_or_shape_mismatch(expected: &ProgramState, actual: &ProgramState) -> Vec<Mismatch> {
    match bridge::compare_states(expected, actual, DEFAULT_FLOAT_TOL) {
        Ok(mismatches) => mismatches,
        Err(_) => vec![Mismatch {
            path: "<state>".to_string(),
            expected: Value::Object(expected.bindings.clone()),
            actual: Value::Object(actual.bindings.clone()),
        }],
    }
}

fn record_positive(
    positives: &mut Vec<Example>,
    class_totals: &mut Vec<(PathSignature, u64)>,
    example: Example,
    rng: &mut impl Rng,
) {
    let total = match class_totals.iter_mut().find(|(s, _)| *s == example.path_sig) {
        Some((_, n)) => {
            *n += 1;
            *n
        }
        None => {
            class_totals.push((example.path_sig, 1));
            1
        }
    };
    let in_class: Vec<usize> = positives
        .iter()
        .enumerate()
        .filter(|(_, e)| e.path_sig == example.path_sig)
        .map(|(i, _)| i)
        .collect();
    if in_class.len() < POSITIVE_CAP_PER_CLASS {
        positives.push(example);
    } else {
        // Reservoir: keep each of the n seen so far with probability cap/n.
        let j = rng.gen_range(0..total);
        if (j as usize) < POSITIVE_CAP_PER_CLASS {
            positives[in_class[j as usize]] = example;
        }
    }
}
