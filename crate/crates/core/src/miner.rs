//! Benchmark mining: indexes a C project, computes the dependency closure
//! of a chosen function, and emits a standalone compilable file plus an
//! entry-point manifest. Selection filters: standard headers only and call
//! depth below four edges.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::{Path, PathBuf};
use std::process::Command;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use walkdir::WalkDir;

use crate::cfront::{self, CItem, CItemKind};
use crate::model::{EntryDescriptor, Field, TypeDescriptor};

/// Maximum call-graph depth (in edges from the entry) for an accepted
/// benchmark.
pub const MAX_CALL_DEPTH: usize = 3;

/// Standard C headers a benchmark may depend on; anything else counts as
/// third party.
const STD_HEADERS: &[&str] = &[
    "assert.h", "ctype.h", "errno.h", "float.h", "inttypes.h", "limits.h", "math.h", "stdarg.h",
    "stdbool.h", "stddef.h", "stdint.h", "stdio.h", "stdlib.h", "string.h", "time.h",
];

#[derive(Debug, Error)]
pub enum MinerError {
    #[error("parse error in {file}: {message}")]
    Parse { file: PathBuf, message: String },
    #[error("unresolved reference: {0}")]
    UnresolvedReference(String),
    #[error("benchmark rejected: {0}")]
    Rejected(String),
    #[error("extracted file does not compile:\n{0}")]
    CompileCheckFailed(String),
    #[error("entry signature is not interchange-representable: {0}")]
    UnsupportedSignatureType(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One indexed definition with its origin for stable ordering.
#[derive(Debug, Clone)]
pub struct IndexedItem {
    pub item: CItem,
    pub file: PathBuf,
    pub file_rank: usize,
}

/// Catalogue of every top-level definition in a project.
#[derive(Debug, Default)]
pub struct ProjectIndex {
    pub functions: BTreeMap<String, IndexedItem>,
    pub types: BTreeMap<String, IndexedItem>,
    pub globals: BTreeMap<String, IndexedItem>,
    pub includes: Vec<String>,
    /// Files that failed to parse, with the reason.
    pub warnings: Vec<String>,
}

impl ProjectIndex {
    pub fn function_names(&self) -> Vec<String> {
        self.functions.keys().cloned().collect()
    }
}

/// Walks `root` and catalogues every `.c`/`.h` file. Unparseable files
/// are skipped with a warning.
pub fn index_project(root: &Path) -> Result<ProjectIndex, MinerError> {
    let mut index = ProjectIndex::default();
    let mut files: Vec<PathBuf> = WalkDir::new(root)
        .into_iter()
        .filter_map(Result::ok)
        .filter(|e| e.file_type().is_file())
        .map(|e| e.into_path())
        .filter(|p| {
            matches!(p.extension().and_then(|e| e.to_str()), Some("c") | Some("h"))
        })
        .collect();
    files.sort();
    for (rank, file) in files.iter().enumerate() {
        let text = std::fs::read_to_string(file)?;
        let unit = match cfront::parse_unit(&text) {
            Ok(u) => u,
            Err(e) => {
                index.warnings.push(format!("{}: {e}", file.display()));
                continue;
            }
        };
        for header in unit.includes() {
            if !index.includes.contains(&header) {
                index.includes.push(header);
            }
        }
        for item in unit.items {
            let slot = IndexedItem { item: item.clone(), file: file.clone(), file_rank: rank };
            match (&item.kind, &item.name) {
                (CItemKind::Function, Some(name)) => {
                    // Qualify duplicates by file stem so both stay reachable.
                    if index.functions.contains_key(name) {
                        let stem =
                            file.file_stem().and_then(|s| s.to_str()).unwrap_or("dup");
                        index.functions.insert(format!("{stem}::{name}"), slot);
                    } else {
                        index.functions.insert(name.clone(), slot);
                    }
                }
                (CItemKind::StructDef | CItemKind::Typedef, Some(name)) => {
                    index.types.entry(name.clone()).or_insert(slot);
                }
                (CItemKind::Global, Some(name)) => {
                    index.globals.entry(name.clone()).or_insert(slot);
                }
                _ => {}
            }
        }
    }
    Ok(index)
}

/// Names included in a dependency closure, split by kind.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Closure {
    pub functions: BTreeSet<String>,
    pub types: BTreeSet<String>,
    pub globals: BTreeSet<String>,
}

impl Closure {
    pub fn names(&self) -> BTreeSet<String> {
        self.functions
            .iter()
            .chain(&self.types)
            .chain(&self.globals)
            .cloned()
            .collect()
    }
}

fn identifiers(text: &str) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let mut cur = String::new();
    for ch in text.chars() {
        if ch.is_ascii_alphanumeric() || ch == '_' {
            cur.push(ch);
        } else if !cur.is_empty() {
            if !cur.chars().next().unwrap().is_ascii_digit() {
                out.insert(std::mem::take(&mut cur));
            } else {
                cur.clear();
            }
        }
    }
    if !cur.is_empty() && !cur.chars().next().unwrap().is_ascii_digit() {
        out.insert(cur);
    }
    out
}

/// Least fixed point over callees, referenced types, and read/written
/// globals; global initializers pull in anything they reference too.
pub fn dependency_closure(index: &ProjectIndex, entry: &str) -> Result<Closure, MinerError> {
    if !index.functions.contains_key(entry) {
        return Err(MinerError::UnresolvedReference(entry.to_string()));
    }
    let mut closure = Closure::default();
    let mut queue: VecDeque<String> = VecDeque::new();
    closure.functions.insert(entry.to_string());
    queue.push_back(entry.to_string());
    while let Some(name) = queue.pop_front() {
        let text = if let Some(f) = index.functions.get(&name) {
            f.item.text.clone()
        } else if let Some(t) = index.types.get(&name) {
            t.item.text.clone()
        } else if let Some(g) = index.globals.get(&name) {
            g.item.text.clone()
        } else {
            continue;
        };
        for callee in cfront::callees(&text) {
            if index.functions.contains_key(&callee) && closure.functions.insert(callee.clone()) {
                queue.push_back(callee);
            }
        }
        for ty in cfront::struct_refs(&text) {
            if index.types.contains_key(&ty) && closure.types.insert(ty.clone()) {
                queue.push_back(ty);
            }
        }
        // Typedef'd aggregates are referenced by bare identifier.
        for ident in identifiers(&text) {
            if ident != name {
                if index.types.contains_key(&ident) && closure.types.insert(ident.clone()) {
                    queue.push_back(ident.clone());
                }
                if index.globals.contains_key(&ident) && closure.globals.insert(ident.clone()) {
                    queue.push_back(ident);
                }
            }
        }
    }
    Ok(closure)
}

/// Longest path, in edges, from `entry` through project-defined callees.
pub fn call_depth(index: &ProjectIndex, entry: &str) -> usize {
    fn depth(
        index: &ProjectIndex,
        name: &str,
        seen: &mut Vec<String>,
        memo: &mut BTreeMap<String, usize>,
    ) -> usize {
        if let Some(d) = memo.get(name) {
            return *d;
        }
        if seen.iter().any(|s| s == name) {
            return 0; // cycle: do not extend the path further
        }
        seen.push(name.to_string());
        let mut best = 0;
        if let Some(f) = index.functions.get(name) {
            for callee in cfront::callees(&f.item.text) {
                if index.functions.contains_key(&callee) {
                    best = best.max(1 + depth(index, &callee, seen, memo));
                }
            }
        }
        seen.pop();
        memo.insert(name.to_string(), best);
        best
    }
    depth(index, entry, &mut Vec::new(), &mut BTreeMap::new())
}

/// Bundle metadata mirroring the corpus-complexity columns.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BundleMeta {
    pub origin: String,
    pub function: String,
    pub loc: usize,
    pub function_count: usize,
    pub call_depth: usize,
}

/// A standalone compilable benchmark: one source file, its entry manifest
/// and complexity metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkBundle {
    pub source_file: String,
    pub entry_point: String,
    pub manifest: EntryDescriptor,
    pub meta: BundleMeta,
}

fn header_is_standard(header: &str) -> bool {
    STD_HEADERS.contains(&header)
}

fn global_type_text(item: &CItem, name: &str) -> String {
    let clean = item.text.trim();
    let stop = clean
        .find('=')
        .or_else(|| clean.find('['))
        .unwrap_or_else(|| clean.rfind(';').unwrap_or(clean.len()));
    let head = clean[..stop].trim();
    let mut ty = head
        .strip_suffix(name)
        .map(str::trim)
        .unwrap_or(head)
        .trim_start_matches("static ")
        .to_string();
    if let Some(open) = clean.find('[') {
        let close = clean[open..].find(']').map(|c| open + c + 1).unwrap_or(clean.len());
        ty.push(' ');
        ty.push_str(&clean[open..close]);
    }
    ty
}

/// Derives the entry manifest from the C signature. Pointer-to-aggregate
/// parameters are marked as mutated.
fn derive_manifest(
    index: &ProjectIndex,
    closure: &Closure,
    entry: &str,
) -> Result<EntryDescriptor, MinerError> {
    let func = &index.functions[entry];
    let lookup = |name: &str| -> Option<Vec<(String, String)>> {
        index.types.get(name).and_then(|t| cfront::parse_struct_fields(&t.item.text).ok())
    };
    let params = cfront::parse_params(&func.item.text)
        .map_err(|e| MinerError::UnsupportedSignatureType(e.to_string()))?;
    let mut fields = Vec::new();
    let mut mutates = Vec::new();
    for (name, ctype) in &params {
        let ty = cfront::c_type_to_descriptor(ctype, &lookup)
            .map_err(|e| MinerError::UnsupportedSignatureType(e.to_string()))?;
        if matches!(ty, TypeDescriptor::Ref { .. }) {
            mutates.push(name.clone());
        }
        fields.push(Field { name: name.clone(), ty });
    }
    let ret = cfront::return_type(&func.item.text)
        .map_err(|e| MinerError::UnsupportedSignatureType(e.to_string()))?;
    let returns = match ret.as_str() {
        "void" | "" => None,
        other => Some(
            cfront::c_type_to_descriptor(other, &lookup)
                .map_err(|e| MinerError::UnsupportedSignatureType(e.to_string()))?,
        ),
    };
    let mut globals = Vec::new();
    for gname in &closure.globals {
        let item = &index.globals[gname];
        let ctype = global_type_text(&item.item, gname);
        let ty = cfront::c_type_to_descriptor(&ctype, &lookup)
            .map_err(|e| MinerError::UnsupportedSignatureType(e.to_string()))?;
        globals.push(Field { name: gname.clone(), ty });
    }
    Ok(EntryDescriptor { params: fields, returns, globals, mutates, gen_hooks: vec![] })
}

/// Emits the closure as a single file, in original (file, line) order so
/// every definition precedes its uses exactly as in the source project.
fn emit_source(index: &ProjectIndex, closure: &Closure) -> String {
    let mut parts: Vec<(usize, usize, String)> = Vec::new();
    for name in closure.names() {
        let slot = index
            .functions
            .get(&name)
            .or_else(|| index.types.get(&name))
            .or_else(|| index.globals.get(&name));
        if let Some(s) = slot {
            parts.push((s.file_rank, s.item.line, s.item.text.trim().to_string()));
        }
    }
    parts.sort();
    parts.dedup();
    let mut out = String::new();
    for header in &index.includes {
        out.push_str(&format!("#include <{header}>\n"));
    }
    out.push('\n');
    for (_, _, text) in parts {
        out.push_str(&text);
        out.push_str("\n\n");
    }
    out
}

fn compile_check(source: &str) -> Result<(), MinerError> {
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("bundle.c");
    std::fs::write(&path, source)?;
    let out = Command::new("gcc")
        .args(["-c", "-o"])
        .arg(dir.path().join("bundle.o"))
        .arg(&path)
        .output()?;
    if out.status.success() {
        Ok(())
    } else {
        Err(MinerError::CompileCheckFailed(String::from_utf8_lossy(&out.stderr).into_owned()))
    }
}

/// Extracts the dependency closure of `entry` into a standalone bundle.
/// Applies the third-party and call-depth filters and verifies the file
/// compiles before returning it.
pub fn extract_benchmark(
    index: &ProjectIndex,
    origin: &str,
    entry: &str,
) -> Result<BenchmarkBundle, MinerError> {
    for header in &index.includes {
        if !header_is_standard(header) {
            return Err(MinerError::Rejected(format!("third-party header {header:?}")));
        }
    }
    let depth = call_depth(index, entry);
    if depth > MAX_CALL_DEPTH {
        return Err(MinerError::Rejected(format!(
            "call depth {depth} exceeds the limit of {MAX_CALL_DEPTH}"
        )));
    }
    let closure = dependency_closure(index, entry)?;
    let manifest = derive_manifest(index, &closure, entry)?;
    let source = emit_source(index, &closure);
    compile_check(&source)?;
    let meta = BundleMeta {
        origin: origin.to_string(),
        function: entry.to_string(),
        loc: source.lines().count(),
        function_count: closure.functions.len(),
        call_depth: depth,
    };
    Ok(BenchmarkBundle { source_file: source, entry_point: entry.to_string(), manifest, meta })
}

/// Extracts every function that survives the filters; rejections are
/// returned alongside for logging.
pub fn select_all(
    index: &ProjectIndex,
    origin: &str,
) -> (Vec<BenchmarkBundle>, Vec<(String, String)>) {
    let mut accepted = Vec::new();
    let mut rejected = Vec::new();
    for name in index.function_names() {
        match extract_benchmark(index, origin, &name) {
            Ok(bundle) => accepted.push(bundle),
            Err(e) => rejected.push((name, e.to_string())),
        }
    }
    (accepted, rejected)
}
