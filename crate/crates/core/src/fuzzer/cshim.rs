//! Source-side shim synthesis for C programs: instruments the original
//! source for line coverage, then generates glue that deserializes an
//! input state, invokes the entry point, and serializes the whole output
//! state. The shim compiles to a shared library exposing
//! `flu_run`/`flu_free`.

use crate::bridge::canonical_field_name;
use crate::cfront::{self, CItemKind};
use crate::fuzzer::FuzzError;
use crate::model::{EntryDescriptor, Field, TypeDescriptor};

const FLUJSON: &str = include_str!("../../resources/flujson.c");

fn build_err(msg: impl Into<String>) -> FuzzError {
    FuzzError::Build(msg.into())
}

/// A C struct catalogue: name -> (field name, C type text).
type StructTable = Vec<(String, Vec<(String, String)>)>;

fn collect_structs(unit: &cfront::CUnit) -> Result<StructTable, FuzzError> {
    let mut out = Vec::new();
    for item in &unit.items {
        let is_struct_like = matches!(item.kind, CItemKind::StructDef)
            || (item.kind == CItemKind::Typedef && item.text.contains('{'));
        if is_struct_like {
            if let Some(name) = &item.name {
                let fields = cfront::parse_struct_fields(&item.text)
                    .map_err(|e| build_err(format!("struct {name}: {e}")))?;
                out.push((name.clone(), fields));
            }
        }
    }
    Ok(out)
}

fn struct_fields<'a>(table: &'a StructTable, name: &str) -> Result<&'a [(String, String)], FuzzError> {
    table
        .iter()
        .find(|(n, _)| n == name)
        .map(|(_, f)| f.as_slice())
        .ok_or_else(|| build_err(format!("unknown struct {name:?}")))
}

/// Splits a C type into (base, pointer_depth, array_extent).
fn shape_of(ctype: &str) -> (String, usize, Option<String>) {
    let mut t = ctype.trim().to_string();
    let mut extent = None;
    if t.ends_with(']') {
        if let Some(open) = t.rfind('[') {
            extent = Some(t[open + 1..t.len() - 1].trim().to_string());
            t = t[..open].trim_end().to_string();
        }
    }
    let mut depth = 0;
    while t.ends_with('*') {
        depth += 1;
        t = t[..t.len() - 1].trim_end().to_string();
    }
    let base = t.trim_start_matches("const ").trim().to_string();
    (base, depth, extent)
}

fn is_char_ptr(base: &str, depth: usize) -> bool {
    depth == 1 && (base == "char" || base == "const char")
}

/// C scalar reader expression for a primitive descriptor type.
fn scalar_reader(ty: &TypeDescriptor) -> Option<&'static str> {
    match ty {
        TypeDescriptor::Int { .. } => Some("flu_as_int"),
        TypeDescriptor::Float { .. } => Some("flu_as_float"),
        TypeDescriptor::Bool => Some("flu_as_bool"),
        TypeDescriptor::Str => Some("flu_as_str"),
        _ => None,
    }
}

fn scalar_writer(ty: &TypeDescriptor) -> Option<&'static str> {
    match ty {
        TypeDescriptor::Int { .. } => Some("flu_sb_int"),
        TypeDescriptor::Float { .. } => Some("flu_sb_float"),
        TypeDescriptor::Bool => Some("flu_sb_bool"),
        TypeDescriptor::Str => Some("flu_sb_str"),
        _ => None,
    }
}

fn mangle(path: &str) -> String {
    path.chars().map(|c| if c.is_ascii_alphanumeric() { c } else { '_' }).collect()
}

/// Generator state: emitted statements plus declarations for shadow
/// length variables and scratch buffers.
struct Gen {
    decls: String,
    counter: u32,
}

impl Gen {
    fn fresh(&mut self, prefix: &str) -> String {
        self.counter += 1;
        format!("__flu_{prefix}{}", self.counter)
    }

    /// Emits statements lifting `json_expr` into C lvalue `lval` of C type
    /// `ctype`, guided by the descriptor type.
    fn lift(
        &mut self,
        out: &mut String,
        ty: &TypeDescriptor,
        ctype: &str,
        lval: &str,
        json_expr: &str,
        path: &str,
        table: &StructTable,
    ) -> Result<(), FuzzError> {
        let (base, depth, extent) = shape_of(ctype);
        match ty {
            TypeDescriptor::Int { .. } | TypeDescriptor::Float { .. } | TypeDescriptor::Bool
                if depth == 0 && extent.is_none() =>
            {
                let reader = scalar_reader(ty).expect("scalar");
                out.push_str(&format!("    {lval} = ({base}){reader}({json_expr});\n"));
                Ok(())
            }
            TypeDescriptor::Str if is_char_ptr(&base, depth) && extent.is_none() => {
                out.push_str(&format!("    {lval} = flu_as_str({json_expr});\n"));
                Ok(())
            }
            TypeDescriptor::Array { of } => {
                let v = self.fresh("arr");
                let len_var = format!("__flu_len_{}", mangle(path));
                self.decls.push_str(&format!("static size_t {len_var} = 0;\n"));
                out.push_str(&format!("    FluVal *{v} = {json_expr};\n"));
                out.push_str(&format!(
                    "    if (!{v} || {v}->kind != FLU_LIST) {{ flu_err = 1; }} else {{\n"
                ));
                match &extent {
                    Some(cap) => {
                        out.push_str(&format!(
                            "    if ({v}->len > (size_t)({cap})) {{ flu_err = 1; }}\n"
                        ));
                        out.push_str(&format!("    {len_var} = {v}->len;\n"));
                    }
                    None if depth >= 1 => {
                        // Pointer-to-element parameter: heap buffer.
                        let elem_ct = base.clone()
                            + &"*".repeat(depth - 1);
                        out.push_str(&format!("    {len_var} = {v}->len;\n"));
                        out.push_str(&format!(
                            "    {lval} = ({elem_ct} *)calloc({v}->len + 1, sizeof({elem_ct}));\n"
                        ));
                    }
                    None => {
                        return Err(build_err(format!(
                            "array slot {path:?} maps to non-array C type {ctype:?}"
                        )))
                    }
                }
                let idx = self.fresh("i");
                out.push_str(&format!(
                    "    {{ size_t {idx}; for ({idx} = 0; {idx} < {v}->len && !flu_err; {idx}++) {{\n"
                ));
                let elem_ctype = if extent.is_some() {
                    format!("{}{}", base, " *".repeat(depth))
                } else {
                    format!("{}{}", base, " *".repeat(depth - 1))
                };
                self.lift(
                    out,
                    of,
                    elem_ctype.trim(),
                    &format!("{lval}[{idx}]"),
                    &format!("{v}->items[{idx}]"),
                    &format!("{path}_e"),
                    table,
                )?;
                out.push_str("    } }\n");
                out.push_str("    }\n");
                Ok(())
            }
            TypeDescriptor::Aggregate { fields, .. } if depth == 0 && extent.is_none() => {
                let v = self.fresh("obj");
                out.push_str(&format!("    FluVal *{v} = {json_expr};\n"));
                self.lift_struct_fields(out, fields, &base, lval, &v, path, table)
            }
            TypeDescriptor::Ref { of, .. } | TypeDescriptor::Optional { of }
                if depth >= 1 =>
            {
                // Pointer: null or a pointed-to value in a scratch slot.
                let inner_ct = format!("{}{}", base, " *".repeat(depth - 1));
                let buf = self.fresh(&format!("buf_{}", mangle(path)));
                self.decls.push_str(&format!("static {inner_ct} {buf};\n"));
                let v = self.fresh("ptr");
                out.push_str(&format!("    FluVal *{v} = {json_expr};\n"));
                out.push_str(&format!(
                    "    if ({v} && {v}->kind == FLU_NULL) {{ {lval} = NULL; }} else {{\n"
                ));
                out.push_str(&format!("    memset(&{buf}, 0, sizeof {buf});\n"));
                self.lift(out, of, &inner_ct, &buf, v.as_str(), path, table)?;
                out.push_str(&format!("    {lval} = &{buf};\n"));
                out.push_str("    }\n");
                Ok(())
            }
            TypeDescriptor::Ref { of, .. } if depth == 0 => {
                // Flattened reference without pointer indirection in C.
                self.lift(out, of, ctype, lval, json_expr, path, table)
            }
            other => Err(build_err(format!(
                "cannot lift {other:?} into C type {ctype:?} at {path:?}"
            ))),
        }
    }

    fn lift_struct_fields(
        &mut self,
        out: &mut String,
        fields: &[Field],
        struct_name: &str,
        lval: &str,
        obj_var: &str,
        path: &str,
        table: &StructTable,
    ) -> Result<(), FuzzError> {
        let cfields = struct_fields(table, struct_name)?.to_vec();
        for f in fields {
            let want = canonical_field_name(&f.name);
            let (cname, cty) = cfields
                .iter()
                .find(|(n, _)| canonical_field_name(n) == want)
                .ok_or_else(|| {
                    build_err(format!("struct {struct_name} has no field matching {:?}", f.name))
                })?
                .clone();
            self.lift(
                out,
                &f.ty,
                &cty,
                &format!("{lval}.{cname}"),
                &format!("flu_get({obj_var}, \"{want}\")"),
                &format!("{path}_{want}"),
                table,
            )?;
        }
        Ok(())
    }

    /// Emits statements lowering C expression `expr` to the builder.
    fn lower(
        &mut self,
        out: &mut String,
        ty: &TypeDescriptor,
        ctype: &str,
        expr: &str,
        path: &str,
        table: &StructTable,
    ) -> Result<(), FuzzError> {
        let (base, depth, extent) = shape_of(ctype);
        match ty {
            TypeDescriptor::Int { .. } | TypeDescriptor::Float { .. } | TypeDescriptor::Bool
                if depth == 0 && extent.is_none() =>
            {
                let writer = scalar_writer(ty).expect("scalar");
                let cast = match ty {
                    TypeDescriptor::Int { .. } => "(long long)",
                    TypeDescriptor::Float { .. } => "(double)",
                    _ => "(int)",
                };
                out.push_str(&format!("    {writer}(&__flu_sb, {cast}({expr}));\n"));
                Ok(())
            }
            TypeDescriptor::Str if is_char_ptr(&base, depth) && extent.is_none() => {
                out.push_str(&format!(
                    "    if ({expr}) flu_sb_str(&__flu_sb, {expr}); else flu_sb_puts(&__flu_sb, \"null\");\n"
                ));
                Ok(())
            }
            TypeDescriptor::Array { of } => {
                let len_var = format!("__flu_len_{}", mangle(path));
                let idx = self.fresh("i");
                out.push_str("    flu_sb_puts(&__flu_sb, \"[\");\n");
                out.push_str(&format!(
                    "    {{ size_t {idx}; for ({idx} = 0; {idx} < {len_var}; {idx}++) {{\n"
                ));
                out.push_str(&format!(
                    "        if ({idx}) flu_sb_puts(&__flu_sb, \",\");\n"
                ));
                let elem_ctype = if extent.is_some() {
                    format!("{}{}", base, " *".repeat(depth))
                } else {
                    format!("{}{}", base, " *".repeat(depth.saturating_sub(1)))
                };
                self.lower(
                    out,
                    of,
                    elem_ctype.trim(),
                    &format!("{expr}[{idx}]"),
                    &format!("{path}_e"),
                    table,
                )?;
                out.push_str("    } }\n");
                out.push_str("    flu_sb_puts(&__flu_sb, \"]\");\n");
                Ok(())
            }
            TypeDescriptor::Aggregate { fields, .. } if depth == 0 && extent.is_none() => {
                self.lower_struct_fields(out, fields, &base, expr, path, table)
            }
            TypeDescriptor::Ref { of, .. } | TypeDescriptor::Optional { of } if depth >= 1 => {
                let inner_ct = format!("{}{}", base, " *".repeat(depth - 1));
                out.push_str(&format!(
                    "    if (!({expr})) {{ flu_sb_puts(&__flu_sb, \"null\"); }} else {{\n"
                ));
                self.lower(out, of, &inner_ct, &format!("(*({expr}))"), path, table)?;
                out.push_str("    }\n");
                Ok(())
            }
            TypeDescriptor::Ref { of, .. } if depth == 0 => {
                self.lower(out, of, ctype, expr, path, table)
            }
            other => Err(build_err(format!(
                "cannot lower {other:?} from C type {ctype:?} at {path:?}"
            ))),
        }
    }

    fn lower_struct_fields(
        &mut self,
        out: &mut String,
        fields: &[Field],
        struct_name: &str,
        expr: &str,
        path: &str,
        table: &StructTable,
    ) -> Result<(), FuzzError> {
        let cfields = struct_fields(table, struct_name)?.to_vec();
        out.push_str("    flu_sb_puts(&__flu_sb, \"{\");\n");
        for (i, f) in fields.iter().enumerate() {
            let want = canonical_field_name(&f.name);
            let (cname, cty) = cfields
                .iter()
                .find(|(n, _)| canonical_field_name(n) == want)
                .ok_or_else(|| {
                    build_err(format!("struct {struct_name} has no field matching {:?}", f.name))
                })?
                .clone();
            if i > 0 {
                out.push_str("    flu_sb_puts(&__flu_sb, \",\");\n");
            }
            out.push_str(&format!("    flu_sb_puts(&__flu_sb, \"\\\"{want}\\\":\");\n"));
            self.lower(
                out,
                &f.ty,
                &cty,
                &format!("({expr}).{cname}"),
                &format!("{path}_{want}"),
                table,
            )?;
        }
        out.push_str("    flu_sb_puts(&__flu_sb, \"}\");\n");
        Ok(())
    }
}

/// Generates the full shim translation unit: JSON library, probe runtime,
/// instrumented program, and the `flu_run`/`flu_free` exports. Returns
/// the C source and the instrumented-line count.
pub fn generate_source_shim(
    source: &str,
    descriptor: &EntryDescriptor,
    entry_point: &str,
) -> Result<(String, usize), FuzzError> {
    let unit = cfront::parse_unit(source).map_err(|e| build_err(e.to_string()))?;
    let table = collect_structs(&unit)?;
    let entry = unit
        .functions()
        .find(|f| {
            f.name.as_deref().map(canonical_field_name)
                == Some(canonical_field_name(entry_point))
        })
        .ok_or_else(|| FuzzError::SignatureMismatch(format!("no C function {entry_point:?}")))?;
    let entry_cname =
        entry.name.clone().expect("matched function has a name");
    let cparams = cfront::parse_params(&entry.text).map_err(|e| build_err(e.to_string()))?;
    let ret_ctype = cfront::return_type(&entry.text).map_err(|e| build_err(e.to_string()))?;
    if cparams.len() != descriptor.params.len() {
        return Err(FuzzError::SignatureMismatch(format!(
            "C entry takes {} parameters, descriptor lists {}",
            cparams.len(),
            descriptor.params.len()
        )));
    }
    let (instrumented, lines) =
        cfront::instrument_c(source).map_err(|e| build_err(e.to_string()))?;
    let max_line = lines.last().copied().unwrap_or(0) + 1;

    let mut gen = Gen { decls: String::new(), counter: 0 };
    let mut lift = String::new();
    let mut lower = String::new();
    let mut args: Vec<String> = Vec::new();
    let mut locals = String::new();

    for ((cname, ctype), field) in cparams.iter().zip(&descriptor.params) {
        let key = canonical_field_name(&field.name);
        if canonical_field_name(cname) != key {
            return Err(FuzzError::SignatureMismatch(format!(
                "C parameter {cname:?} does not match descriptor slot {:?}",
                field.name
            )));
        }
        let (base, depth, extent) = shape_of(ctype);
        let var = format!("__flu_a_{key}");
        // Pointer-to-aggregate parameters get a concrete local the
        // pointer can target; everything else is held by value.
        match (&field.ty, depth) {
            (TypeDescriptor::Ref { of, .. }, 1) if extent.is_none() => {
                locals.push_str(&format!("    {base} {var};\n"));
                locals.push_str(&format!("    memset(&{var}, 0, sizeof {var});\n"));
                lift.push_str(&format!(
                    "    if (flu_get(__flu_in, \"{key}\") && flu_get(__flu_in, \"{key}\")->kind == FLU_NULL) {{ flu_err = 1; }}\n"
                ));
                gen.lift(
                    &mut lift,
                    of,
                    &base,
                    &var,
                    &format!("flu_get(__flu_in, \"{key}\")"),
                    &key,
                    &table,
                )?;
                args.push(format!("&{var}"));
                lower.push_str(&format!("    flu_sb_puts(&__flu_sb, \"\\\"{key}\\\":\");\n"));
                gen.lower(&mut lower, of, &base, &var, &key, &table)?;
            }
            (TypeDescriptor::Array { .. }, _) if depth >= 1 && extent.is_none() => {
                locals.push_str(&format!("    {base} {}{var} = NULL;\n", "*".repeat(depth)));
                gen.lift(
                    &mut lift,
                    &field.ty,
                    ctype,
                    &var,
                    &format!("flu_get(__flu_in, \"{key}\")"),
                    &key,
                    &table,
                )?;
                args.push(var.clone());
                lower.push_str(&format!("    flu_sb_puts(&__flu_sb, \"\\\"{key}\\\":\");\n"));
                gen.lower(&mut lower, &field.ty, ctype, &var, &key, &table)?;
            }
            _ => {
                let decl_ty = format!("{base}{}", " *".repeat(depth));
                locals.push_str(&format!("    {decl_ty} {var};\n"));
                if depth == 0 && matches!(field.ty, TypeDescriptor::Aggregate { .. }) {
                    locals.push_str(&format!("    memset(&{var}, 0, sizeof {var});\n"));
                }
                gen.lift(
                    &mut lift,
                    &field.ty,
                    ctype,
                    &var,
                    &format!("flu_get(__flu_in, \"{key}\")"),
                    &key,
                    &table,
                )?;
                args.push(var.clone());
                lower.push_str(&format!("    flu_sb_puts(&__flu_sb, \"\\\"{key}\\\":\");\n"));
                gen.lower(&mut lower, &field.ty, ctype, &var, &key, &table)?;
            }
        }
        lower.push_str("    flu_sb_puts(&__flu_sb, \",\");\n");
    }

    for g in &descriptor.globals {
        let key = canonical_field_name(&g.name);
        let item = unit
            .items
            .iter()
            .find(|i| {
                i.kind == CItemKind::Global
                    && i.name.as_deref().map(canonical_field_name) == Some(key.clone())
            })
            .ok_or_else(|| {
                FuzzError::SignatureMismatch(format!("no C global matching {:?}", g.name))
            })?;
        let cname = item.name.clone().expect("matched global has a name");
        // Global C type: the declaration minus name/initializer.
        let clean = item.text.trim();
        let stop = clean.find('=').or_else(|| clean.find('[')).unwrap_or(
            clean.rfind(';').unwrap_or(clean.len()),
        );
        let head = clean[..stop].trim();
        let ctype = head
            .strip_suffix(&cname)
            .map(str::trim)
            .unwrap_or(head)
            .trim_start_matches("static ")
            .to_string();
        let ctype = if let Some(open) = clean.find('[') {
            let close = clean[open..].find(']').map(|c| open + c + 1).unwrap_or(clean.len());
            format!("{ctype} {}", &clean[open..close])
        } else {
            ctype
        };
        gen.lift(
            &mut lift,
            &g.ty,
            &ctype,
            &cname,
            &format!("flu_get(__flu_in, \"{key}\")"),
            &key,
            &table,
        )?;
        lower.push_str(&format!("    flu_sb_puts(&__flu_sb, \"\\\"{key}\\\":\");\n"));
        gen.lower(&mut lower, &g.ty, &ctype, &cname, &key, &table)?;
        lower.push_str("    flu_sb_puts(&__flu_sb, \",\");\n");
    }

    let call_args = args.join(", ");
    let (call_stmt, ret_lower) = match &descriptor.returns {
        Some(ret_ty) => {
            if ret_ctype == "void" || ret_ctype.is_empty() {
                return Err(FuzzError::SignatureMismatch(
                    "descriptor expects a return value, C entry returns void".to_string(),
                ));
            }
            let mut rl = String::new();
            rl.push_str("    flu_sb_puts(&__flu_sb, \"\\\"return\\\":\");\n");
            gen.lower(&mut rl, ret_ty, &ret_ctype, "__flu_ret", "return", &table)?;
            (
                format!("    {ret_ctype} __flu_ret = {entry_cname}({call_args});\n"),
                rl,
            )
        }
        None => (format!("    {entry_cname}({call_args});\n"), String::new()),
    };
    // Drop the trailing comma separator when return is absent.
    let lower = if descriptor.returns.is_none() {
        lower
            .strip_suffix("    flu_sb_puts(&__flu_sb, \",\");\n")
            .unwrap_or(&lower)
            .to_string()
    } else {
        lower
    };

    let decls = &gen.decls;
    let shim = format!(
        r#"{FLUJSON}

/* ---- probe runtime ---- */
#define FLU_MAX_LINE {max_line}
static unsigned char __flu_hits[FLU_MAX_LINE + 1];
static void __flu_line(int line) {{
    if (line >= 0 && line <= FLU_MAX_LINE) __flu_hits[line] = 1;
}}

/* ---- program under test (instrumented) ---- */
{instrumented}

/* ---- glue ---- */
{decls}
static FluSb __flu_sb;

char *flu_run(const char *input) {{
    FluVal *__flu_in;
    char *__flu_out;
    memset(__flu_hits, 0, sizeof __flu_hits);
    flu_err = 0;
    __flu_in = flu_parse(input);
    flu_sb_init(&__flu_sb);
    if (__flu_in && !flu_err) {{
{locals}{lift}
    if (!flu_err) {{
{call_stmt}    flu_sb_puts(&__flu_sb, "{{\"status\":\"ok\",\"output\":{{");
{lower}{ret_lower}    flu_sb_puts(&__flu_sb, "}},\"trace\":[],\"lines\":[");
    {{
        int __flu_l, __flu_first = 1;
        for (__flu_l = 0; __flu_l <= FLU_MAX_LINE; __flu_l++) {{
            if (__flu_hits[__flu_l]) {{
                if (!__flu_first) flu_sb_puts(&__flu_sb, ",");
                flu_sb_int(&__flu_sb, __flu_l);
                __flu_first = 0;
            }}
        }}
    }}
    flu_sb_puts(&__flu_sb, "]}}");
    }}
    }}
    if (!__flu_in || flu_err) {{
        __flu_sb.len = 0;
        __flu_sb.buf[0] = '\0';
        flu_sb_puts(&__flu_sb, "{{\"status\":\"panic\",\"message\":\"shim could not bind input state\"}}");
    }}
    if (__flu_in) flu_val_free(__flu_in);
    __flu_out = __flu_sb.buf;
    return __flu_out;
}}

void flu_free(char *p) {{
    free(p);
}}
"#
    );
    Ok((shim, lines.len()))
}
