//! Candidate-side harness synthesis: analyzes the translated Rust with
//! `syn`, instruments statements and branch arms, and generates the glue
//! that lifts interchange states into native values, calls the entry
//! point, and lowers the whole program state back out.

use syn::spanned::Spanned;
use syn::visit_mut::VisitMut;

use crate::bridge::canonical_field_name;
use crate::fuzzer::FuzzError;
use crate::model::EntryDescriptor;

/// What the glue needs to know about one candidate file.
#[derive(Debug)]
pub struct CandidateMeta {
    pub entry_name: String,
    pub params: Vec<(String, syn::Type, ParamMode)>,
    pub has_return: bool,
    pub structs: Vec<(String, Vec<(String, syn::Type)>)>,
    pub statics: Vec<(String, syn::Type, bool)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamMode {
    ByValue,
    Ref,
    RefMut,
}

fn sig_err(msg: impl Into<String>) -> FuzzError {
    FuzzError::SignatureMismatch(msg.into())
}

/// Parses the candidate and pulls out the entry signature, struct shapes
/// and statics. The entry point is matched by canonical name.
pub fn analyze_candidate(code: &str, entry_point: &str) -> Result<CandidateMeta, FuzzError> {
    let file = syn::parse_file(code).map_err(|e| FuzzError::Build(format!("syn: {e}")))?;
    let want = canonical_field_name(entry_point);
    let mut entry: Option<&syn::ItemFn> = None;
    let mut structs = Vec::new();
    let mut statics = Vec::new();
    for item in &file.items {
        match item {
            syn::Item::Fn(f) => {
                if canonical_field_name(&f.sig.ident.to_string()) == want {
                    entry = Some(f);
                }
            }
            syn::Item::Struct(s) => {
                if !s.generics.params.is_empty() {
                    return Err(FuzzError::Build(format!(
                        "generic struct {} is not liftable",
                        s.ident
                    )));
                }
                let mut fields = Vec::new();
                match &s.fields {
                    syn::Fields::Named(named) => {
                        for f in &named.named {
                            fields.push((
                                f.ident.as_ref().expect("named field").to_string(),
                                f.ty.clone(),
                            ));
                        }
                    }
                    _ => {
                        return Err(FuzzError::Build(format!(
                            "struct {} has unnamed fields",
                            s.ident
                        )))
                    }
                }
                structs.push((s.ident.to_string(), fields));
            }
            syn::Item::Static(st) => {
                statics.push((
                    st.ident.to_string(),
                    (*st.ty).clone(),
                    matches!(st.mutability, syn::StaticMutability::Mut(_)),
                ));
            }
            _ => {}
        }
    }
    let entry = entry.ok_or_else(|| sig_err(format!("candidate has no function {entry_point:?}")))?;
    let mut params = Vec::new();
    for input in &entry.sig.inputs {
        let pat_ty = match input {
            syn::FnArg::Typed(t) => t,
            syn::FnArg::Receiver(_) => {
                return Err(sig_err("entry point must be a free function".to_string()))
            }
        };
        let name = match &*pat_ty.pat {
            syn::Pat::Ident(p) => p.ident.to_string(),
            other => return Err(sig_err(format!("unsupported parameter pattern {other:?}"))),
        };
        let (ty, mode) = match &*pat_ty.ty {
            syn::Type::Reference(r) => {
                let mode = if r.mutability.is_some() { ParamMode::RefMut } else { ParamMode::Ref };
                ((*r.elem).clone(), mode)
            }
            other => (other.clone(), ParamMode::ByValue),
        };
        params.push((name, ty, mode));
    }
    let has_return = !matches!(entry.sig.output, syn::ReturnType::Default);
    Ok(CandidateMeta {
        entry_name: entry.sig.ident.to_string(),
        params,
        has_return,
        structs,
        statics,
    })
}

/// Records, in traversal order, the original line of every statement of
/// every block — spans go stale once we start rewriting.
struct LineRecorder {
    blocks: Vec<Vec<u32>>,
}

impl<'ast> syn::visit::Visit<'ast> for LineRecorder {
    fn visit_block(&mut self, block: &'ast syn::Block) {
        self.blocks.push(block.stmts.iter().map(|s| s.span().start().line as u32).collect());
        syn::visit::visit_block(self, block);
    }
}

struct Instrumenter {
    blocks: std::collections::VecDeque<Vec<u32>>,
    next_site: u32,
    lines: std::collections::BTreeSet<u32>,
}

fn probe_line(line: u32) -> syn::Stmt {
    syn::parse_str(&format!("crate::__flu_line({line}u32);")).expect("probe stmt parses")
}

fn probe_arm(site: u32, arm: u32) -> syn::Stmt {
    syn::parse_str(&format!("crate::__flu_arm({site}u32, {arm}u32);")).expect("probe stmt parses")
}

impl Instrumenter {
    fn fresh_site(&mut self) -> u32 {
        let s = self.next_site;
        self.next_site += 1;
        s
    }
}

impl VisitMut for Instrumenter {
    fn visit_block_mut(&mut self, block: &mut syn::Block) {
        let lines = self.blocks.pop_front().expect("recorder and rewriter walk the same blocks");
        // Branch-arm probes may already sit at the front of this block;
        // they came from the parent expression, not the recorder.
        let preinserted = block.stmts.len().saturating_sub(lines.len());
        let stmts = std::mem::take(&mut block.stmts);
        let mut out = Vec::with_capacity(stmts.len() * 2);
        for (idx, stmt) in stmts.into_iter().enumerate() {
            if idx >= preinserted {
                let line = lines[idx - preinserted];
                if !matches!(stmt, syn::Stmt::Item(_)) {
                    self.lines.insert(line);
                    out.push(probe_line(line));
                }
            }
            out.push(stmt);
        }
        block.stmts = out;
        syn::visit_mut::visit_block_mut(self, block);
    }

    fn visit_expr_mut(&mut self, expr: &mut syn::Expr) {
        match expr {
            syn::Expr::If(e) => {
                let site = self.fresh_site();
                e.then_branch.stmts.insert(0, probe_arm(site, 0));
                if let Some((_, else_expr)) = &mut e.else_branch {
                    if let syn::Expr::Block(b) = &mut **else_expr {
                        b.block.stmts.insert(0, probe_arm(site, 1));
                    }
                    // `else if` chains: the nested if emits its own site.
                }
            }
            syn::Expr::Match(e) => {
                let site = self.fresh_site();
                for (k, arm) in e.arms.iter_mut().enumerate() {
                    let body = arm.body.clone();
                    let probed: syn::Expr = syn::parse_str(&format!(
                        "{{ crate::__flu_arm({site}u32, {k}u32); __FLU_BODY }}"
                    ))
                    .expect("arm wrapper parses");
                    arm.body = Box::new(replace_marker(probed, &body));
                }
            }
            syn::Expr::While(e) => {
                let site = self.fresh_site();
                e.body.stmts.insert(0, probe_arm(site, 0));
            }
            syn::Expr::ForLoop(e) => {
                let site = self.fresh_site();
                e.body.stmts.insert(0, probe_arm(site, 0));
            }
            syn::Expr::Loop(e) => {
                let site = self.fresh_site();
                e.body.stmts.insert(0, probe_arm(site, 0));
            }
            _ => {}
        }
        syn::visit_mut::visit_expr_mut(self, expr);
    }
}

fn replace_marker(mut wrapper: syn::Expr, body: &syn::Expr) -> syn::Expr {
    if let syn::Expr::Block(b) = &mut wrapper {
        if let Some(last) = b.block.stmts.last_mut() {
            *last = syn::Stmt::Expr(body.clone(), None);
        }
    }
    wrapper
}

/// Rewrites the candidate with line and branch-arm probes. Returns the
/// instrumented source and the count of distinct instrumented lines.
pub fn instrument_candidate(code: &str) -> Result<(String, usize), FuzzError> {
    let mut file = syn::parse_file(code).map_err(|e| FuzzError::Build(format!("syn: {e}")))?;
    let mut recorder = LineRecorder { blocks: Vec::new() };
    syn::visit::Visit::visit_file(&mut recorder, &file);
    let mut inst = Instrumenter {
        blocks: recorder.blocks.into(),
        next_site: 1,
        lines: std::collections::BTreeSet::new(),
    };
    inst.visit_file_mut(&mut file);
    Ok((prettyplease::unparse(&file), inst.lines.len()))
}

fn type_text(ty: &syn::Type) -> String {
    // Token-spaced but syntactically valid spelling of the type.
    use quote::ToTokens;
    ty.to_token_stream().to_string()
}

/// Generates the complete harness source: embedded JSON module, probe
/// runtime, instrumented candidate, lift/lower impls, entry invocation
/// and the C-ABI `flu_run`/`flu_free` exports.
pub fn generate_candidate_harness(
    candidate_code: &str,
    descriptor: &EntryDescriptor,
    entry_point: &str,
) -> Result<(String, usize), FuzzError> {
    let meta = analyze_candidate(candidate_code, entry_point)?;
    if meta.params.len() != descriptor.params.len() {
        return Err(sig_err(format!(
            "entry takes {} parameters, descriptor lists {}",
            meta.params.len(),
            descriptor.params.len()
        )));
    }
    for ((cand_name, _, _), field) in meta.params.iter().zip(&descriptor.params) {
        if canonical_field_name(cand_name) != canonical_field_name(&field.name) {
            return Err(sig_err(format!(
                "parameter {cand_name:?} does not match descriptor slot {:?}",
                field.name
            )));
        }
    }
    if descriptor.returns.is_some() && !meta.has_return {
        return Err(sig_err("descriptor expects a return value, entry returns ()".to_string()));
    }
    let (instrumented, line_count) = instrument_candidate(candidate_code)?;

    let mut glue = String::new();
    glue.push_str("#![allow(warnings)]\n");
    glue.push_str("pub mod __flu_json {\n");
    glue.push_str(include_str!("../../resources/rt_json.rs"));
    glue.push_str("\n}\nuse __flu_json::Value as __FluValue;\n\n");
    glue.push_str(PROBE_RUNTIME);
    glue.push_str("\n// ---- candidate (instrumented) ----\n");
    glue.push_str(&instrumented);
    glue.push_str("\n// ---- lift/lower ----\n");
    glue.push_str(LIFT_LOWER_CORE);
    for (name, fields) in &meta.structs {
        glue.push_str(&struct_impls(name, fields));
    }
    glue.push_str(&invoke_fn(&meta, descriptor)?);
    glue.push_str(EXPORTS);
    Ok((glue, line_count))
}

fn struct_impls(name: &str, fields: &[(String, syn::Type)]) -> String {
    let mut lift_fields = String::new();
    let mut lower_fields = String::new();
    for (fname, _) in fields {
        let key = canonical_field_name(fname);
        lift_fields.push_str(&format!(
            "            {fname}: __FluLift::flu_lift(__flu_get(v, \"{key}\")?)?,\n"
        ));
        lower_fields.push_str(&format!(
            "        (\"{key}\".to_string(), self.{fname}.flu_lower()),\n"
        ));
    }
    format!(
        r#"
impl __FluLift for {name} {{
    fn flu_lift(v: &__FluValue) -> Result<Self, String> {{
        Ok({name} {{
{lift_fields}        }})
    }}
}}
impl __FluLower for {name} {{
    fn flu_lower(&self) -> __FluValue {{
        __FluValue::Object(vec![
{lower_fields}        ])
    }}
}}
"#
    )
}

fn invoke_fn(meta: &CandidateMeta, descriptor: &EntryDescriptor) -> Result<String, FuzzError> {
    let mut body = String::new();
    let mut args = Vec::new();
    let mut outputs: Vec<(String, String)> = Vec::new(); // (canonical key, expr)
    for ((cand_name, ty, mode), field) in meta.params.iter().zip(&descriptor.params) {
        let key = canonical_field_name(&field.name);
        let var = format!("__flu_p_{cand_name}");
        let ty_text = type_text(ty);
        body.push_str(&format!(
            "    let mut {var}: {ty_text} = __FluLift::flu_lift(__flu_get(input, \"{key}\")?)?;\n"
        ));
        match mode {
            ParamMode::ByValue => {
                // By-value arguments cannot change observably; echo the
                // input before the call moves the value.
                body.push_str(&format!("    let {var}_out = {var}.flu_lower();\n"));
                args.push(var.clone());
                outputs.push((key, format!("{var}_out")));
            }
            ParamMode::Ref => {
                args.push(format!("&{var}"));
                outputs.push((key, format!("{var}.flu_lower()")));
            }
            ParamMode::RefMut => {
                args.push(format!("&mut {var}"));
                outputs.push((key, format!("{var}.flu_lower()")));
            }
        }
    }
    for g in &descriptor.globals {
        let key = canonical_field_name(&g.name);
        let Some((sname, _, is_mut)) = meta
            .statics
            .iter()
            .find(|(n, _, _)| canonical_field_name(n) == key)
        else {
            return Err(sig_err(format!("candidate has no static for global {:?}", g.name)));
        };
        if !is_mut {
            return Err(sig_err(format!("static {sname} is not mutable")));
        }
        body.push_str(&format!(
            "    unsafe {{ {sname} = __FluLift::flu_lift(__flu_get(input, \"{key}\")?)?; }}\n"
        ));
        outputs.push((key.clone(), format!("unsafe {{ (*std::ptr::addr_of!({sname})).flu_lower() }}")));
    }
    let call = format!("{}({})", meta.entry_name, args.join(", "));
    if descriptor.returns.is_some() {
        body.push_str(&format!("    let __flu_ret = {call};\n"));
        outputs.push(("return".to_string(), "__flu_ret.flu_lower()".to_string()));
    } else {
        body.push_str(&format!("    {call};\n"));
    }
    let mut out_pushes = String::new();
    for (key, expr) in outputs {
        out_pushes.push_str(&format!("    __out.push((\"{key}\".to_string(), {expr}));\n"));
    }
    Ok(format!(
        r#"
fn __flu_invoke(input: &__FluValue) -> Result<__FluValue, String> {{
{body}    let mut __out: Vec<(String, __FluValue)> = Vec::new();
{out_pushes}    Ok(__FluValue::Object(__out))
}}
"#
    ))
}

const PROBE_RUNTIME: &str = r#"
// ---- probe runtime ----
use std::cell::RefCell;
thread_local! {
    static __FLU_TRACE: RefCell<Vec<(u32, u32)>> = RefCell::new(Vec::new());
    static __FLU_LINES: RefCell<std::collections::BTreeSet<u32>> =
        RefCell::new(std::collections::BTreeSet::new());
}

pub fn __flu_line(line: u32) {
    __FLU_LINES.with(|l| {
        l.borrow_mut().insert(line);
    });
}

pub fn __flu_arm(site: u32, arm: u32) {
    __FLU_TRACE.with(|t| {
        let mut t = t.borrow_mut();
        if t.len() < 4096 {
            t.push((site, arm));
        }
    });
}

fn __flu_reset() {
    __FLU_TRACE.with(|t| t.borrow_mut().clear());
    __FLU_LINES.with(|l| l.borrow_mut().clear());
}
"#;

const LIFT_LOWER_CORE: &str = r#"
trait __FluLift: Sized {
    fn flu_lift(v: &__FluValue) -> Result<Self, String>;
}
trait __FluLower {
    fn flu_lower(&self) -> __FluValue;
}

fn __flu_get<'a>(v: &'a __FluValue, key: &str) -> Result<&'a __FluValue, String> {
    match v {
        __FluValue::Object(entries) => entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v)
            .ok_or_else(|| format!("missing field {key:?}")),
        other => Err(format!("expected object for {key:?}, got {other:?}")),
    }
}

macro_rules! __flu_int {
    ($($t:ty),*) => {$(
        impl __FluLift for $t {
            fn flu_lift(v: &__FluValue) -> Result<Self, String> {
                match v {
                    __FluValue::Int(n) => <$t>::try_from(*n).map_err(|_| format!("{n} out of range")),
                    other => Err(format!("expected integer, got {other:?}")),
                }
            }
        }
        impl __FluLower for $t {
            fn flu_lower(&self) -> __FluValue { __FluValue::Int(*self as i128) }
        }
    )*};
}
__flu_int!(i8, i16, i32, i64, u8, u16, u32, u64, usize, isize, i128);

impl __FluLift for f64 {
    fn flu_lift(v: &__FluValue) -> Result<Self, String> {
        match v {
            __FluValue::Float(f) => Ok(*f),
            __FluValue::Int(n) => Ok(*n as f64),
            other => Err(format!("expected number, got {other:?}")),
        }
    }
}
impl __FluLower for f64 {
    fn flu_lower(&self) -> __FluValue { __FluValue::Float(*self) }
}
impl __FluLift for f32 {
    fn flu_lift(v: &__FluValue) -> Result<Self, String> { f64::flu_lift(v).map(|f| f as f32) }
}
impl __FluLower for f32 {
    fn flu_lower(&self) -> __FluValue { __FluValue::Float(*self as f64) }
}
impl __FluLift for bool {
    fn flu_lift(v: &__FluValue) -> Result<Self, String> {
        match v {
            __FluValue::Bool(b) => Ok(*b),
            other => Err(format!("expected bool, got {other:?}")),
        }
    }
}
impl __FluLower for bool {
    fn flu_lower(&self) -> __FluValue { __FluValue::Bool(*self) }
}
impl __FluLift for String {
    fn flu_lift(v: &__FluValue) -> Result<Self, String> {
        match v {
            __FluValue::Str(s) => Ok(s.clone()),
            other => Err(format!("expected string, got {other:?}")),
        }
    }
}
impl __FluLower for String {
    fn flu_lower(&self) -> __FluValue { __FluValue::Str(self.clone()) }
}
impl<T: __FluLift> __FluLift for Vec<T> {
    fn flu_lift(v: &__FluValue) -> Result<Self, String> {
        match v {
            __FluValue::List(items) => items.iter().map(T::flu_lift).collect(),
            other => Err(format!("expected list, got {other:?}")),
        }
    }
}
impl<T: __FluLower> __FluLower for Vec<T> {
    fn flu_lower(&self) -> __FluValue {
        __FluValue::List(self.iter().map(|x| x.flu_lower()).collect())
    }
}
impl<T: __FluLift> __FluLift for Option<T> {
    fn flu_lift(v: &__FluValue) -> Result<Self, String> {
        match v {
            __FluValue::Null => Ok(None),
            other => T::flu_lift(other).map(Some),
        }
    }
}
impl<T: __FluLower> __FluLower for Option<T> {
    fn flu_lower(&self) -> __FluValue {
        match self {
            None => __FluValue::Null,
            Some(x) => x.flu_lower(),
        }
    }
}
impl<T: __FluLift> __FluLift for Box<T> {
    fn flu_lift(v: &__FluValue) -> Result<Self, String> { T::flu_lift(v).map(Box::new) }
}
impl<T: __FluLower> __FluLower for Box<T> {
    fn flu_lower(&self) -> __FluValue { (**self).flu_lower() }
}
impl<T: __FluLift> __FluLift for std::collections::HashMap<String, T> {
    fn flu_lift(v: &__FluValue) -> Result<Self, String> {
        match v {
            __FluValue::Object(entries) => entries
                .iter()
                .map(|(k, v)| Ok((k.clone(), T::flu_lift(v)?)))
                .collect(),
            other => Err(format!("expected object, got {other:?}")),
        }
    }
}
impl<T: __FluLower> __FluLower for std::collections::HashMap<String, T> {
    fn flu_lower(&self) -> __FluValue {
        let mut entries: Vec<(String, __FluValue)> =
            self.iter().map(|(k, v)| (k.clone(), v.flu_lower())).collect();
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        __FluValue::Object(entries)
    }
}
impl<T: __FluLift> __FluLift for std::collections::BTreeMap<String, T> {
    fn flu_lift(v: &__FluValue) -> Result<Self, String> {
        match v {
            __FluValue::Object(entries) => entries
                .iter()
                .map(|(k, v)| Ok((k.clone(), T::flu_lift(v)?)))
                .collect(),
            other => Err(format!("expected object, got {other:?}")),
        }
    }
}
impl<T: __FluLower> __FluLower for std::collections::BTreeMap<String, T> {
    fn flu_lower(&self) -> __FluValue {
        __FluValue::Object(self.iter().map(|(k, v)| (k.clone(), v.flu_lower())).collect())
    }
}
"#;

const EXPORTS: &str = r#"
// ---- C ABI ----
fn __flu_envelope(input_json: &str) -> String {
    __flu_reset();
    let parsed = match __flu_json::parse(input_json) {
        Ok(v) => v,
        Err(e) => {
            return __flu_json::write_compact(&__FluValue::Object(vec![
                ("status".to_string(), __FluValue::Str("panic".to_string())),
                ("message".to_string(), __FluValue::Str(format!("bad input: {e}"))),
            ]))
        }
    };
    let result = std::panic::catch_unwind(|| __flu_invoke(&parsed));
    let trace = __FLU_TRACE.with(|t| {
        __FluValue::List(
            t.borrow()
                .iter()
                .map(|(s, a)| {
                    __FluValue::List(vec![
                        __FluValue::Int(*s as i128),
                        __FluValue::Int(*a as i128),
                    ])
                })
                .collect(),
        )
    });
    let lines = __FLU_LINES.with(|l| {
        __FluValue::List(l.borrow().iter().map(|x| __FluValue::Int(*x as i128)).collect())
    });
    let envelope = match result {
        Ok(Ok(output)) => __FluValue::Object(vec![
            ("status".to_string(), __FluValue::Str("ok".to_string())),
            ("output".to_string(), output),
            ("trace".to_string(), trace),
            ("lines".to_string(), lines),
        ]),
        Ok(Err(message)) => __FluValue::Object(vec![
            ("status".to_string(), __FluValue::Str("panic".to_string())),
            ("message".to_string(), __FluValue::Str(message)),
            ("trace".to_string(), trace),
            ("lines".to_string(), lines),
        ]),
        Err(panic) => {
            let message = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            __FluValue::Object(vec![
                ("status".to_string(), __FluValue::Str("panic".to_string())),
                ("message".to_string(), __FluValue::Str(message)),
                ("trace".to_string(), trace),
                ("lines".to_string(), lines),
            ])
        }
    };
    __flu_json::write_compact(&envelope)
}

#[no_mangle]
pub extern "C" fn flu_run(input: *const std::os::raw::c_char) -> *mut std::os::raw::c_char {
    static HOOK: std::sync::Once = std::sync::Once::new();
    HOOK.call_once(|| {
        std::panic::set_hook(Box::new(|_| {}));
    });
    let input_str = unsafe { std::ffi::CStr::from_ptr(input) }.to_string_lossy().into_owned();
    let out = __flu_envelope(&input_str);
    std::ffi::CString::new(out.replace('\0', "")).expect("no interior NUL").into_raw()
}

#[no_mangle]
pub unsafe extern "C" fn flu_free(ptr: *mut std::os::raw::c_char) {
    if !ptr.is_null() {
        drop(std::ffi::CString::from_raw(ptr));
    }
}
"#;
