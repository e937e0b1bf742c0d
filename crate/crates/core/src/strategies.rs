//! Feedback strategies: given a failed equivalence check, produce the
//! next LLM query. Five strategies are supported — Restart, Hinted,
//! BaseRepair, CAPR (conversational repair with a sliding window) and
//! Partition (call-graph-ordered unit-by-unit translation).

use std::str::FromStr;

use thiserror::Error;

use crate::cfront;
use crate::fuzzer::{Counterexample, Example, FuzzReport};
use crate::llm::{Dialogue, Hyperparameters, LlmError, Provider};
use crate::model::{CandidateTranslation, Language, SourceProgram, TokenUsage};
use crate::prompt::{extract_code, ConstraintSet, PromptError, PromptForge};

/// CAPR keeps at most this many faulty translations in the conversation.
pub const CAPR_WINDOW: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrategyKind {
    Restart,
    Hinted,
    BaseRepair,
    Capr,
    Partition,
}

impl StrategyKind {
    pub fn token(&self) -> &'static str {
        match self {
            StrategyKind::Restart => "restart",
            StrategyKind::Hinted => "hinted",
            StrategyKind::BaseRepair => "base-repair",
            StrategyKind::Capr => "capr",
            StrategyKind::Partition => "partition",
        }
    }
}

impl FromStr for StrategyKind {
    type Err = StrategyError;

    fn from_str(s: &str) -> Result<StrategyKind, StrategyError> {
        match s {
            "restart" => Ok(StrategyKind::Restart),
            "hinted" => Ok(StrategyKind::Hinted),
            "base-repair" => Ok(StrategyKind::BaseRepair),
            "capr" => Ok(StrategyKind::Capr),
            "partition" => Ok(StrategyKind::Partition),
            other => Err(StrategyError::UnknownStrategy(other.to_string())),
        }
    }
}

#[derive(Debug, Error)]
pub enum StrategyError {
    #[error("unknown strategy token {0:?}")]
    UnknownStrategy(String),
    #[error("strategy invoked without counterexamples")]
    EmptyCounterexamples,
    #[error("partition unit {0:?} is missing its dependencies in the memo")]
    MissingDependency(String),
    #[error("source parse: {0}")]
    Parse(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Llm(#[from] LlmError),
}

/// Accepted translations per partition unit, insertion-ordered. The
/// header entry always lands first; a function's entry exists only once
/// all the units before it are present.
#[derive(Debug, Clone, Default)]
pub struct TranslationMap {
    entries: Vec<(String, String)>,
}

impl TranslationMap {
    pub fn get(&self, unit: &str) -> Option<&str> {
        self.entries.iter().find(|(u, _)| u == unit).map(|(_, t)| t.as_str())
    }

    pub fn insert(&mut self, unit: String, text: String) {
        self.entries.push((unit, text));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// All accepted translations, in acceptance order.
    pub fn assembled(&self) -> String {
        let texts: Vec<&str> = self.entries.iter().map(|(_, t)| t.trim()).collect();
        texts.join("\n\n")
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }
}

/// Per-task mutable strategy state.
#[derive(Debug, Clone)]
pub struct StrategyState {
    pub kind: StrategyKind,
    /// Retained conversation (CAPR only).
    pub dialogue: Option<Dialogue>,
    /// Path-class rotation index (Hinted/BaseRepair).
    pub class_cursor: usize,
    /// Accepted unit translations (Partition only).
    pub partition_memo: TranslationMap,
}

impl StrategyState {
    pub fn new(kind: StrategyKind) -> StrategyState {
        StrategyState {
            kind,
            dialogue: None,
            class_cursor: 0,
            partition_memo: TranslationMap::default(),
        }
    }

    /// Outer-loop retry under Partition replays the plan from scratch.
    pub fn reset_partition(&mut self) {
        self.partition_memo.clear();
        self.dialogue = None;
    }
}

/// Restart drops the failed candidate and replays the query unchanged.
pub fn restart(q: &Dialogue) -> Dialogue {
    q.clone()
}

fn select_class<'a>(
    report: &'a FuzzReport,
    cursor: &mut usize,
) -> Result<(Vec<&'a Counterexample>, Vec<&'a Example>), StrategyError> {
    let classes = report.negative_classes();
    if classes.is_empty() {
        return Err(StrategyError::EmptyCounterexamples);
    }
    let (sig, indices) = &classes[*cursor % classes.len()];
    *cursor += 1;
    let negatives = indices.iter().map(|&i| &report.negatives[i]).collect();
    let positives = report.positives_in_class(*sig);
    Ok((negatives, positives))
}

/// Hinted rebuilds the translation prompt with desirable and faulty
/// behaviours drawn from one path class, rotating classes across calls.
pub fn hinted(
    forge: &PromptForge,
    p: &SourceProgram,
    c: &ConstraintSet,
    report: &FuzzReport,
    st: &mut StrategyState,
) -> Result<Dialogue, StrategyError> {
    let (negatives, positives) = select_class(report, &mut st.class_cursor)?;
    let negatives: Vec<Counterexample> = negatives.into_iter().cloned().collect();
    let positives: Vec<Example> = positives.into_iter().cloned().collect();
    Ok(forge.build_hinted_prompt(p, c, &positives, &negatives)?)
}

/// BaseRepair builds a fresh repair prompt around the most recent faulty
/// translation and one class of counterexamples.
pub fn base_repair(
    forge: &PromptForge,
    p: &SourceProgram,
    c: &ConstraintSet,
    faulty: &CandidateTranslation,
    report: &FuzzReport,
    st: &mut StrategyState,
) -> Result<Dialogue, StrategyError> {
    let (negatives, _) = select_class(report, &mut st.class_cursor)?;
    let negatives: Vec<Counterexample> = negatives.into_iter().cloned().collect();
    Ok(forge.build_repair_prompt(p, faulty, &negatives, c)?)
}

/// CAPR appends the newest faulty translation and a rebuttal to the
/// retained conversation, keeping at most [`CAPR_WINDOW`] faulty turns
/// after the initial task turn.
pub fn capr(
    forge: &PromptForge,
    q: &Dialogue,
    faulty: &CandidateTranslation,
    report: &FuzzReport,
    st: &mut StrategyState,
) -> Result<Dialogue, StrategyError> {
    if report.negatives.is_empty() {
        return Err(StrategyError::EmptyCounterexamples);
    }
    let classes = report.negative_classes();
    let (_, indices) = &classes[0];
    let negatives: Vec<Counterexample> =
        indices.iter().map(|&i| report.negatives[i].clone()).collect();
    let base = st.dialogue.clone().unwrap_or_else(|| q.clone());
    let extended = forge.extend_conversation(&base, faulty, &negatives, CAPR_WINDOW)?;
    st.dialogue = Some(extended.clone());
    Ok(extended)
}

/// Caller → callee edges over the program's defined functions, with the
/// entry point as root. Indirect calls cannot be resolved statically and
/// are recorded as warnings.
#[derive(Debug, Clone)]
pub struct CallGraph {
    /// Function names in source order.
    pub nodes: Vec<String>,
    /// (caller, callee) index pairs.
    pub edges: Vec<(usize, usize)>,
    pub entry: usize,
    pub warnings: Vec<String>,
}

impl CallGraph {
    pub fn from_names(
        nodes: Vec<String>,
        edges: &[(String, String)],
        entry: &str,
    ) -> Result<CallGraph, StrategyError> {
        let idx = |name: &str| {
            nodes
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| StrategyError::Parse(format!("unknown function {name:?}")))
        };
        let entry = idx(entry)?;
        let mut e = Vec::new();
        for (a, b) in edges {
            e.push((idx(a)?, idx(b)?));
        }
        Ok(CallGraph { nodes, edges: e, entry, warnings: Vec::new() })
    }
}

/// Builds the call graph of all defined functions in the program.
pub fn build_call_graph(p: &SourceProgram) -> Result<CallGraph, StrategyError> {
    let unit = cfront::parse_unit(&p.text).map_err(|e| StrategyError::Parse(e.to_string()))?;
    let mut nodes: Vec<String> = Vec::new();
    let mut texts: Vec<String> = Vec::new();
    for f in unit.functions() {
        if let Some(name) = &f.name {
            nodes.push(name.clone());
            texts.push(f.text.clone());
        }
    }
    let entry = nodes
        .iter()
        .position(|n| n == &p.entry_point)
        .ok_or_else(|| StrategyError::Parse(format!("entry {:?} not defined", p.entry_point)))?;
    let mut edges = Vec::new();
    let mut warnings = Vec::new();
    for (i, text) in texts.iter().enumerate() {
        for callee in cfront::callees(text) {
            if let Some(j) = nodes.iter().position(|n| n == &callee) {
                edges.push((i, j));
            }
        }
        // Indirect call syntax: the target is unknowable statically.
        if text.contains(")(") && text.matches("(*").next().is_some() {
            warnings.push(format!("{}: indirect call through a function pointer", nodes[i]));
        }
    }
    edges.dedup();
    Ok(CallGraph { nodes, edges, entry, warnings })
}

/// Function units in translation order: strongly-connected components of
/// the subgraph reachable from the entry, callees before callers, ties in
/// source order, the entry's unit last. Cycles travel as one unit.
pub fn plan_units(g: &CallGraph) -> Vec<Vec<String>> {
    use petgraph::graph::{DiGraph, NodeIndex};

    let mut graph: DiGraph<usize, ()> = DiGraph::new();
    let idx: Vec<NodeIndex> = (0..g.nodes.len()).map(|i| graph.add_node(i)).collect();
    for &(a, b) in &g.edges {
        graph.add_edge(idx[a], idx[b], ());
    }
    let sccs = petgraph::algo::tarjan_scc(&graph);
    // Component id and ordered members for every node.
    let mut comp_of = vec![0usize; g.nodes.len()];
    let mut members: Vec<Vec<usize>> = Vec::with_capacity(sccs.len());
    for scc in &sccs {
        let mut m: Vec<usize> = scc.iter().map(|n| graph[*n]).collect();
        m.sort();
        for &node in &m {
            comp_of[node] = members.len();
        }
        members.push(m);
    }
    // Condensation edges, then post-order from the entry component with
    // successors visited in source order for determinism.
    let ncomp = members.len();
    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); ncomp];
    for &(a, b) in &g.edges {
        let (ca, cb) = (comp_of[a], comp_of[b]);
        if ca != cb && !succ[ca].contains(&cb) {
            succ[ca].push(cb);
        }
    }
    for s in &mut succ {
        s.sort_by_key(|&c| members[c][0]);
    }
    let mut order = Vec::new();
    let mut visited = vec![false; ncomp];
    let mut stack = vec![(comp_of[g.entry], 0usize)];
    visited[comp_of[g.entry]] = true;
    while let Some(&mut (comp, ref mut next)) = stack.last_mut() {
        if *next < succ[comp].len() {
            let child = succ[comp][*next];
            *next += 1;
            if !visited[child] {
                visited[child] = true;
                stack.push((child, 0));
            }
        } else {
            order.push(comp);
            stack.pop();
        }
    }
    order
        .into_iter()
        .map(|c| members[c].iter().map(|&n| g.nodes[n].clone()).collect())
        .collect()
}

/// One unit of a partition plan: the header, or one function set.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionUnit {
    pub name: String,
    /// Function members; empty for the header unit.
    pub members: Vec<String>,
    pub source: String,
}

/// Full plan: header first (includes, type definitions, globals), then
/// function units per [`plan_units`], the entry's unit last.
pub fn partition_plan(p: &SourceProgram, g: &CallGraph) -> Result<Vec<PartitionUnit>, StrategyError> {
    use crate::cfront::CItemKind;
    let unit = cfront::parse_unit(&p.text).map_err(|e| StrategyError::Parse(e.to_string()))?;
    let mut header = String::new();
    for item in &unit.items {
        match item.kind {
            CItemKind::Include
            | CItemKind::StructDef
            | CItemKind::Typedef
            | CItemKind::Global => {
                header.push_str(item.text.trim());
                header.push_str("\n\n");
            }
            _ => {}
        }
    }
    let mut plan = vec![PartitionUnit {
        name: "header".to_string(),
        members: Vec::new(),
        source: header.trim().to_string(),
    }];
    for unit_members in plan_units(g) {
        let mut source = String::new();
        for name in &unit_members {
            let f = unit
                .find(CItemKind::Function, name)
                .ok_or_else(|| StrategyError::Parse(format!("function {name:?} vanished")))?;
            source.push_str(f.text.trim());
            source.push_str("\n\n");
        }
        plan.push(PartitionUnit {
            name: unit_members.join("+"),
            members: unit_members,
            source: source.trim().to_string(),
        });
    }
    Ok(plan)
}

/// Result of advancing the partition plan by one unit.
#[derive(Debug)]
pub enum PartitionStep {
    /// Intermediate unit translated and memoized.
    Accepted { unit: String, usage: TokenUsage },
    /// Entry unit reached: the assembled query for the validation loop.
    Query(Dialogue),
}

fn partition_dialogue(
    forge: &PromptForge,
    c: &ConstraintSet,
    language: Language,
    plan: &[PartitionUnit],
    upto: usize,
    memo: &TranslationMap,
) -> Result<Dialogue, StrategyError> {
    let cumulative: Vec<&str> = plan[..=upto].iter().map(|u| u.source.as_str()).collect();
    let human = forge.build_partition_prompt(language, &cumulative.join("\n\n"), c);
    let mut d = Dialogue::from_human(human);
    if !memo.is_empty() {
        d.push_assistant(memo.assembled())?;
    }
    Ok(d)
}

/// Translates the next pending unit. Intermediate units are sent to the
/// provider immediately and memoized; the final (entry) unit's dialogue is
/// returned so the outer validation loop issues that call itself.
pub fn partition_step(
    forge: &PromptForge,
    c: &ConstraintSet,
    p: &SourceProgram,
    plan: &[PartitionUnit],
    st: &mut StrategyState,
    provider: &dyn Provider,
    hp: &Hyperparameters,
) -> Result<PartitionStep, StrategyError> {
    let next = st.partition_memo.len();
    if next >= plan.len() {
        return Err(StrategyError::MissingDependency("plan already exhausted".to_string()));
    }
    for unit in &plan[..next] {
        if st.partition_memo.get(&unit.name).is_none() {
            return Err(StrategyError::MissingDependency(unit.name.clone()));
        }
    }
    let dialogue = partition_dialogue(forge, c, p.language, plan, next, &st.partition_memo)?;
    if next + 1 == plan.len() {
        return Ok(PartitionStep::Query(dialogue));
    }
    let completion = provider.complete(&dialogue, hp)?;
    let code = extract_code(&completion.text)?;
    st.partition_memo.insert(plan[next].name.clone(), code);
    Ok(PartitionStep::Accepted { unit: plan[next].name.clone(), usage: completion.usage })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bridge::ProgramState;
    use crate::fuzzer::{path_signature, PathSignature};
    use crate::llm::MockProvider;
    use crate::model::Provenance;
    use crate::prompt::Templates;
    use crate::rt_json::Value;

    fn forge() -> PromptForge {
        PromptForge::new(Templates::builtin(), 4)
    }

    fn state(x: i64) -> ProgramState {
        ProgramState::new(vec![("x".to_string(), Value::Int(x.into()))])
    }

    fn ce(x: i64, sig: PathSignature) -> Counterexample {
        Counterexample {
            input: state(x),
            expected: state(x + 1),
            actual: state(x - 1),
            mismatches: vec![],
            path_sig: sig,
        }
    }

    fn report(negs: Vec<Counterexample>) -> FuzzReport {
        FuzzReport {
            positives: vec![],
            negatives: negs,
            executions: 10,
            elapsed: 0.1,
            source_coverage: 1.0,
            candidate_coverage: 1.0,
        }
    }

    fn faulty(text: &str) -> CandidateTranslation {
        CandidateTranslation {
            text: text.to_string(),
            attempt_index: 1,
            provenance: Provenance::Initial,
        }
    }

    #[test]
    fn restart_is_identity() {
        let q = Dialogue::from_human("translate this");
        assert_eq!(restart(&q).render(), q.render());
    }

    #[test]
    fn hinted_rotates_classes() {
        let a = path_signature(&[(0, 0)]);
        let b = path_signature(&[(0, 1)]);
        let rep = report(vec![ce(1, a), ce(-5, b)]);
        let p = program();
        let mut st = StrategyState::new(StrategyKind::Hinted);
        let c = ConstraintSet::default();
        let d0 = hinted(&forge(), &p, &c, &rep, &mut st).unwrap();
        let d1 = hinted(&forge(), &p, &c, &rep, &mut st).unwrap();
        let d2 = hinted(&forge(), &p, &c, &rep, &mut st).unwrap();
        assert!(d0.render().contains("\"x\": 1"));
        assert!(!d0.render().contains("\"x\": -5"));
        assert!(d1.render().contains("\"x\": -5"));
        assert_eq!(d2.render(), d0.render(), "cursor wraps around");
    }

    #[test]
    fn base_repair_requires_counterexamples() {
        let p = program();
        let mut st = StrategyState::new(StrategyKind::BaseRepair);
        let err = base_repair(
            &forge(),
            &p,
            &ConstraintSet::default(),
            &faulty("fn f() {}"),
            &report(vec![]),
            &mut st,
        )
        .unwrap_err();
        assert!(matches!(err, StrategyError::EmptyCounterexamples));
    }

    #[test]
    fn capr_window_keeps_three_faulty_turns_and_task_turn() {
        let sig = path_signature(&[(0, 0)]);
        let p = program();
        let f = forge();
        let q = f.build_translation_prompt(&p, &ConstraintSet::default());
        let mut st = StrategyState::new(StrategyKind::Capr);
        let mut last = None;
        for k in 1..=5 {
            let rep = report(vec![ce(k, sig)]);
            let d = capr(&f, &q, &faulty(&format!("fn wrong_{k}() {{}}")), &rep, &mut st).unwrap();
            last = Some(d);
        }
        let d = last.unwrap();
        let turns = d.turns();
        assert_eq!(turns[0].text, q.turns()[0].text, "task turn retained");
        let faulty_turns: Vec<&str> = turns
            .iter()
            .filter(|t| t.role == crate::llm::Role::Assistant)
            .map(|t| t.text.as_str())
            .collect();
        assert_eq!(faulty_turns.len(), 3);
        assert_eq!(
            faulty_turns,
            vec!["fn wrong_3() {}", "fn wrong_4() {}", "fn wrong_5() {}"],
            "oldest two evicted"
        );
    }

    const CHAIN_C: &str = r#"
#include <stdint.h>
int64_t h(int64_t x) { return x * 2; }
int64_t f(int64_t x) { return h(x) + 1; }
int64_t main_entry(int64_t x) { return f(x); }
"#;

    const DIAMOND_C: &str = r#"
#include <stdint.h>
int64_t h(int64_t x) { return x * 2; }
int64_t f(int64_t x) { return h(x) + 1; }
int64_t g(int64_t x) { return x - 1; }
int64_t main_entry(int64_t x) { return f(x) + g(x); }
"#;

    const CYCLE_C: &str = r#"
#include <stdint.h>
int64_t f(int64_t x);
int64_t g(int64_t x) { if (x <= 0) return 0; return f(x - 1); }
int64_t f(int64_t x) { if (x <= 0) return 1; return g(x - 1); }
int64_t main_entry(int64_t x) { return f(x); }
"#;

    fn program_from(text: &str, entry: &str) -> SourceProgram {
        SourceProgram {
            language: Language::C,
            text: text.to_string(),
            entry_point: entry.to_string(),
            manifest: crate::model::EntryDescriptor {
                params: vec![],
                returns: None,
                globals: vec![],
                mutates: vec![],
                gen_hooks: vec![],
            },
        }
    }

    fn program() -> SourceProgram {
        program_from(CHAIN_C, "main_entry")
    }

    #[test]
    fn call_graph_chain_and_mutual_recursion() {
        let g = build_call_graph(&program_from(CHAIN_C, "main_entry")).unwrap();
        let name = |i: usize| g.nodes[i].as_str();
        let edges: Vec<(&str, &str)> =
            g.edges.iter().map(|&(a, b)| (name(a), name(b))).collect();
        assert_eq!(edges, vec![("f", "h"), ("main_entry", "f")]);

        let g = build_call_graph(&program_from(CYCLE_C, "main_entry")).unwrap();
        let edges: Vec<(String, String)> = g
            .edges
            .iter()
            .map(|&(a, b)| (g.nodes[a].clone(), g.nodes[b].clone()))
            .collect();
        assert!(edges.contains(&("f".to_string(), "g".to_string())));
        assert!(edges.contains(&("g".to_string(), "f".to_string())));
    }

    #[test]
    fn function_pointer_call_warns_without_edge() {
        let src = r#"
#include <stdint.h>
int64_t apply(int64_t (*op)(int64_t), int64_t x) { return op(x); }
int64_t main_entry(int64_t x) { return x; }
"#;
        let g = build_call_graph(&program_from(src, "main_entry")).unwrap();
        assert!(g.edges.is_empty());
        assert!(!g.warnings.is_empty());
    }

    #[test]
    fn plan_orders_chain_diamond_and_cycle() {
        let p = program_from(CHAIN_C, "main_entry");
        let g = build_call_graph(&p).unwrap();
        let plan = partition_plan(&p, &g).unwrap();
        let names: Vec<&str> = plan.iter().map(|u| u.name.as_str()).collect();
        assert_eq!(names, vec!["header", "h", "f", "main_entry"]);

        let p = program_from(DIAMOND_C, "main_entry");
        let g = build_call_graph(&p).unwrap();
        let plan = partition_plan(&p, &g).unwrap();
        let names: Vec<&str> = plan.iter().map(|u| u.name.as_str()).collect();
        assert_eq!(names, vec!["header", "h", "f", "g", "main_entry"]);

        let p = program_from(CYCLE_C, "main_entry");
        let g = build_call_graph(&p).unwrap();
        let plan = partition_plan(&p, &g).unwrap();
        let names: Vec<&str> = plan.iter().map(|u| u.name.as_str()).collect();
        // `g` is defined before `f` in the source, so it leads the unit.
        assert_eq!(names, vec!["header", "g+f", "main_entry"]);
        assert_eq!(plan[1].members, vec!["g".to_string(), "f".to_string()]);
    }

    #[test]
    fn partition_steps_memoize_then_hand_over_entry_query() {
        let p = program_from(CHAIN_C, "main_entry");
        let g = build_call_graph(&p).unwrap();
        let plan = partition_plan(&p, &g).unwrap();
        let provider = MockProvider::from_responses(vec![
            "```rust\n// header: no declarations needed\n```".to_string(),
            "```rust\npub fn h(x: i64) -> i64 { x * 2 }\n```".to_string(),
            "```rust\npub fn f(x: i64) -> i64 { h(x) + 1 }\n```".to_string(),
        ]);
        let mut st = StrategyState::new(StrategyKind::Partition);
        let f = forge();
        let c = ConstraintSet::default();
        let hp = Hyperparameters::default();
        for expected in ["header", "h", "f"] {
            match partition_step(&f, &c, &p, &plan, &mut st, &provider, &hp).unwrap() {
                PartitionStep::Accepted { unit, .. } => assert_eq!(unit, expected),
                PartitionStep::Query(_) => panic!("handed over before the entry unit"),
            }
        }
        match partition_step(&f, &c, &p, &plan, &mut st, &provider, &hp).unwrap() {
            PartitionStep::Query(d) => {
                let turns = d.turns();
                assert_eq!(turns.len(), 2, "human prompt plus assistant context");
                assert!(turns[0].text.contains("main_entry"));
                assert!(turns[1].text.contains("pub fn h"));
                assert!(turns[1].text.contains("pub fn f"));
            }
            PartitionStep::Accepted { .. } => panic!("entry unit must not be sent by the step"),
        }
        assert_eq!(provider.calls(), 3, "entry unit consumed no provider call");
    }

    #[test]
    fn first_partition_step_has_header_only_and_no_context() {
        let p = program_from(CHAIN_C, "main_entry");
        let g = build_call_graph(&p).unwrap();
        let plan = partition_plan(&p, &g).unwrap();
        let st = StrategyState::new(StrategyKind::Partition);
        let d = partition_dialogue(
            &forge(),
            &ConstraintSet::default(),
            Language::C,
            &plan,
            0,
            &st.partition_memo,
        )
        .unwrap();
        assert_eq!(d.turns().len(), 1);
        assert!(d.turns()[0].text.contains("#include <stdint.h>"));
        assert!(!d.turns()[0].text.contains("int64_t h"));
    }

    #[test]
    fn strategy_tokens_round_trip() {
        for kind in [
            StrategyKind::Restart,
            StrategyKind::Hinted,
            StrategyKind::BaseRepair,
            StrategyKind::Capr,
            StrategyKind::Partition,
        ] {
            assert_eq!(kind.token().parse::<StrategyKind>().unwrap(), kind);
        }
        assert!("parameter-search".parse::<StrategyKind>().is_err());
    }
}
