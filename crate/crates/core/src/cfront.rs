//! Pragmatic C frontend: enough parsing to index a project, extract call
//! graphs and struct shapes, and instrument statements for line coverage.
//! Covers the constructs the benchmark corpus uses (aggregates, fixed
//! arrays, pointers, globals with initializers); full C is a non-goal.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::model::{Field, TypeDescriptor};

#[derive(Debug, Error)]
pub enum CfrontError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unsupported C type: {0}")]
    UnsupportedType(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CItemKind {
    Include,
    StructDef,
    Typedef,
    Global,
    Function,
    Prototype,
    Other,
}

#[derive(Debug, Clone)]
pub struct CItem {
    pub kind: CItemKind,
    /// Struct/function/global name when one can be recovered.
    pub name: Option<String>,
    pub text: String,
    /// 1-based line of the item's first character.
    pub line: usize,
}

#[derive(Debug, Clone)]
pub struct CUnit {
    pub items: Vec<CItem>,
}

impl CUnit {
    pub fn functions(&self) -> impl Iterator<Item = &CItem> {
        self.items.iter().filter(|i| i.kind == CItemKind::Function)
    }

    pub fn find(&self, kind: CItemKind, name: &str) -> Option<&CItem> {
        self.items.iter().find(|i| i.kind == kind && i.name.as_deref() == Some(name))
    }

    /// Header names from `#include <...>` / `#include "..."` directives.
    pub fn includes(&self) -> Vec<String> {
        self.items
            .iter()
            .filter(|i| i.kind == CItemKind::Include)
            .filter_map(|i| {
                let t = i.text.trim();
                let open = t.find(['<', '"'])?;
                let close = t[open + 1..].find(['>', '"'])? + open + 1;
                Some(t[open + 1..close].to_string())
            })
            .collect()
    }
}

/// Blanks comments with spaces, preserving every newline so byte offsets
/// keep mapping to the original lines. String/char literals pass through.
pub fn strip_comments(src: &str) -> String {
    let bytes = src.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'/' if i + 1 < bytes.len() && bytes[i + 1] == b'/' => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    out.push(b' ');
                    i += 1;
                }
            }
            b'/' if i + 1 < bytes.len() && bytes[i + 1] == b'*' => {
                out.push(b' ');
                out.push(b' ');
                i += 2;
                while i < bytes.len() && !(bytes[i] == b'*' && bytes.get(i + 1) == Some(&b'/')) {
                    out.push(if bytes[i] == b'\n' { b'\n' } else { b' ' });
                    i += 1;
                }
                if i < bytes.len() {
                    out.push(b' ');
                    out.push(b' ');
                    i += 2;
                }
            }
            q @ (b'"' | b'\'') => {
                out.push(q);
                i += 1;
                while i < bytes.len() && bytes[i] != q {
                    out.push(bytes[i]);
                    if bytes[i] == b'\\' && i + 1 < bytes.len() {
                        out.push(bytes[i + 1]);
                        i += 1;
                    }
                    i += 1;
                }
                if i < bytes.len() {
                    out.push(q);
                    i += 1;
                }
            }
            b => {
                out.push(b);
                i += 1;
            }
        }
    }
    String::from_utf8(out).expect("comment stripping is byte-preserving for utf-8")
}

/// Blanks string/char literal contents with spaces (quotes stay).
fn blank_literals(src: &str) -> String {
    let bytes = src.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        out.push(b);
        i += 1;
        if b == b'"' || b == b'\'' {
            while i < bytes.len() && bytes[i] != b {
                if bytes[i] == b'\\' && i + 1 < bytes.len() {
                    out.push(b' ');
                    i += 1;
                }
                out.push(if bytes[i] == b'\n' { b'\n' } else { b' ' });
                i += 1;
            }
            if i < bytes.len() {
                out.push(b);
                i += 1;
            }
        }
    }
    String::from_utf8(out).expect("blanking is ascii-preserving")
}

fn line_of(src: &str, offset: usize) -> usize {
    src[..offset].bytes().filter(|&b| b == b'\n').count() + 1
}

fn is_ident_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_'
}

/// Last identifier strictly before `end` in `text`.
fn ident_before(text: &str, end: usize) -> Option<String> {
    let bytes = text.as_bytes();
    let mut j = end;
    while j > 0 && bytes[j - 1].is_ascii_whitespace() {
        j -= 1;
    }
    let stop = j;
    while j > 0 && is_ident_byte(bytes[j - 1]) {
        j -= 1;
    }
    if j == stop {
        None
    } else {
        Some(text[j..stop].to_string())
    }
}

/// Splits a translation unit into top-level items. Works on the
/// comment-stripped text but keeps original item text.
pub fn parse_unit(src: &str) -> Result<CUnit, CfrontError> {
    let clean = strip_comments(src);
    let bytes = clean.as_bytes();
    let mut items = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i].is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if bytes[i] == b'#' {
            // Preprocessor directive; honour backslash continuations.
            while i < bytes.len() && bytes[i] != b'\n' {
                if bytes[i] == b'\\' && bytes.get(i + 1) == Some(&b'\n') {
                    i += 1;
                }
                i += 1;
            }
            let text = src[start..i].to_string();
            let kind = if text.trim_start().starts_with("#include") {
                CItemKind::Include
            } else {
                CItemKind::Other
            };
            items.push(CItem { kind, name: None, text, line: line_of(src, start) });
            continue;
        }

        // Scan forward to the item end: a ';' at depth 0, or a matched
        // top-level brace pair (plus a trailing ';' for aggregates).
        let mut depth = 0usize;
        let mut paren_before_brace = false;
        let mut eq_before_brace = false;
        let mut saw_brace = false;
        let mut end = bytes.len();
        let mut j = i;
        while j < bytes.len() {
            match bytes[j] {
                b'(' if depth == 0 && !saw_brace => paren_before_brace = true,
                b'=' if depth == 0 && !saw_brace => eq_before_brace = true,
                b'{' => {
                    depth += 1;
                    saw_brace = true;
                }
                b'}' => {
                    depth = depth.checked_sub(1).ok_or_else(|| {
                        CfrontError::Parse(format!(
                            "unbalanced '}}' at line {}",
                            line_of(src, j)
                        ))
                    })?;
                    if depth == 0 {
                        if paren_before_brace && !eq_before_brace {
                            // Function definition ends at its brace.
                            end = j + 1;
                        } else {
                            // Aggregate definition or brace initializer
                            // runs to the terminating ';'.
                            let mut k = j + 1;
                            while k < bytes.len() && bytes[k] != b';' {
                                k += 1;
                            }
                            end = (k + 1).min(bytes.len());
                        }
                        break;
                    }
                }
                b';' if depth == 0 => {
                    end = j + 1;
                    break;
                }
                _ => {}
            }
            j += 1;
        }
        if depth > 0 && end == bytes.len() {
            return Err(CfrontError::Parse(format!(
                "unterminated item starting at line {}",
                line_of(src, start)
            )));
        }
        let text = src[start..end.min(src.len())].to_string();
        let clean_item = &clean[start..end.min(clean.len())];
        let item = classify_item(clean_item, text, line_of(src, start), paren_before_brace, eq_before_brace, saw_brace);
        items.push(item);
        i = end;
    }
    Ok(CUnit { items })
}

fn classify_item(
    clean: &str,
    text: String,
    line: usize,
    paren_before_brace: bool,
    eq_before_brace: bool,
    saw_brace: bool,
) -> CItem {
    let head = clean.trim_start();
    let first_word: String =
        head.bytes().take_while(|&b| is_ident_byte(b)).map(|b| b as char).collect();
    let (kind, name) = if first_word == "typedef" {
        // typedef name is the identifier right before the final ';'.
        let name = ident_before(clean, clean.rfind(';').unwrap_or(clean.len()));
        (CItemKind::Typedef, name)
    } else if matches!(first_word.as_str(), "struct" | "enum" | "union")
        && saw_brace
        && !paren_before_brace
    {
        let name = ident_before(clean, clean.find('{').unwrap_or(clean.len()));
        (CItemKind::StructDef, name)
    } else if saw_brace && paren_before_brace && !eq_before_brace {
        let name = clean.find('(').and_then(|p| ident_before(clean, p));
        (CItemKind::Function, name)
    } else if !saw_brace && paren_before_brace && !eq_before_brace {
        let name = clean.find('(').and_then(|p| ident_before(clean, p));
        (CItemKind::Prototype, name)
    } else {
        // Global variable: identifier before '=' or before '[' or the last
        // identifier before ';'.
        let stop = clean
            .find('=')
            .or_else(|| clean.find('['))
            .or_else(|| clean.rfind(';'))
            .unwrap_or(clean.len());
        (CItemKind::Global, ident_before(clean, stop))
    };
    CItem { kind, name, text, line }
}

const C_KEYWORDS: [&str; 22] = [
    "if", "else", "while", "for", "do", "switch", "case", "return", "sizeof", "break", "continue",
    "goto", "struct", "enum", "union", "typedef", "static", "const", "void", "default", "defined",
    "_Alignof",
];

/// Names invoked like functions inside `text` (comment/string aware).
/// For a function definition, only the body is scanned, so the defined
/// name itself is not reported.
pub fn callees(text: &str) -> Vec<String> {
    let clean = blank_literals(&strip_comments(text));
    let bytes = clean.as_bytes();
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    let mut i = match (clean.find('('), clean.find('{')) {
        (Some(p), Some(b)) if p < b => b,
        _ => 0,
    };
    while i < bytes.len() {
        if is_ident_byte(bytes[i]) && (i == 0 || !is_ident_byte(bytes[i - 1])) {
            let start = i;
            while i < bytes.len() && is_ident_byte(bytes[i]) {
                i += 1;
            }
            let name = &clean[start..i];
            let mut j = i;
            while j < bytes.len() && bytes[j].is_ascii_whitespace() {
                j += 1;
            }
            if j < bytes.len()
                && bytes[j] == b'('
                && !C_KEYWORDS.contains(&name)
                && !name.chars().next().is_some_and(|c| c.is_ascii_digit())
                && seen.insert(name.to_string())
            {
                out.push(name.to_string());
            }
        } else {
            i += 1;
        }
    }
    out
}

/// Struct/aggregate names referenced by a definition (`struct Foo`,
/// `Foo bar;` where `Foo` is typedef'd elsewhere is handled by the caller).
pub fn struct_refs(text: &str) -> Vec<String> {
    let clean = strip_comments(text);
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    let mut rest = clean.as_str();
    while let Some(pos) = rest.find("struct") {
        let after = &rest[pos + 6..];
        let boundary_ok = (pos == 0 || !is_ident_byte(rest.as_bytes()[pos - 1]))
            && after.starts_with(|c: char| c.is_ascii_whitespace());
        if boundary_ok {
            let name: String = after
                .trim_start()
                .chars()
                .take_while(|c| c.is_alphanumeric() || *c == '_')
                .collect();
            if !name.is_empty() && seen.insert(name.clone()) {
                out.push(name);
            }
        }
        rest = &rest[pos + 6..];
    }
    out
}

/// Fields of a `struct X { ... };` definition as (name, C type text) with
/// array suffixes folded into the type (`int64_t a[9]` → `int64_t []`).
pub fn parse_struct_fields(def: &str) -> Result<Vec<(String, String)>, CfrontError> {
    let clean = strip_comments(def);
    let open = clean
        .find('{')
        .ok_or_else(|| CfrontError::Parse("struct definition has no body".to_string()))?;
    let close = clean
        .rfind('}')
        .ok_or_else(|| CfrontError::Parse("struct definition has no closing brace".to_string()))?;
    let body = &clean[open + 1..close];
    let mut fields = Vec::new();
    for decl in body.split(';') {
        let decl = decl.trim();
        if decl.is_empty() {
            continue;
        }
        let (decl, suffix) = match decl.find('[') {
            Some(b) => (decl[..b].trim_end(), Some(decl[b..].trim().to_string())),
            None => (decl, None),
        };
        let name = ident_before(decl, decl.len())
            .ok_or_else(|| CfrontError::Parse(format!("unreadable field: {decl:?}")))?;
        let mut ty = decl[..decl.len() - name.len()].trim().to_string();
        if let Some(suffix) = suffix {
            ty.push(' ');
            ty.push_str(&suffix);
        }
        fields.push((name, ty));
    }
    Ok(fields)
}

/// Maps a C type spelling onto an interchange shape. `structs` resolves
/// aggregate names to their own field lists.
pub fn c_type_to_descriptor(
    ctype: &str,
    structs: &dyn Fn(&str) -> Option<Vec<(String, String)>>,
) -> Result<TypeDescriptor, CfrontError> {
    let t = ctype.trim();
    if t.ends_with(']') {
        let open = t.rfind('[').ok_or_else(|| CfrontError::Parse(format!("bad array type {t:?}")))?;
        let elem = t[..open].trim_end();
        return Ok(TypeDescriptor::array(c_type_to_descriptor(elem, structs)?));
    }
    if let Some(inner) = t.strip_suffix('*').map(str::trim_end) {
        if inner == "char" || inner == "const char" {
            return Ok(TypeDescriptor::Str);
        }
        // Pointer to aggregate is a mutable reference; pointer to a
        // primitive is treated as an in/out buffer (array).
        let inner_desc = c_type_to_descriptor(inner, structs)?;
        return Ok(match inner_desc {
            TypeDescriptor::Aggregate { .. } => TypeDescriptor::reference(inner_desc, true),
            other => TypeDescriptor::array(other),
        });
    }
    let t = t.strip_prefix("const ").unwrap_or(t).trim();
    let base = t.strip_prefix("struct ").map(str::trim);
    if let Some(name) = base.or_else(|| structs(t).is_some().then_some(t)) {
        let raw_fields = structs(name)
            .ok_or_else(|| CfrontError::UnsupportedType(format!("unknown aggregate {name:?}")))?;
        let mut fields = Vec::new();
        for (fname, fty) in raw_fields {
            fields.push(Field { name: fname, ty: c_type_to_descriptor(&fty, structs)? });
        }
        return Ok(TypeDescriptor::Aggregate { name: name.to_string(), fields });
    }
    Ok(match t {
        "void" => return Err(CfrontError::UnsupportedType("void value".to_string())),
        "bool" | "_Bool" => TypeDescriptor::Bool,
        "char" | "int8_t" | "signed char" => TypeDescriptor::Int { bits: 8, signed: true },
        "uint8_t" | "unsigned char" => TypeDescriptor::Int { bits: 8, signed: false },
        "int16_t" | "short" => TypeDescriptor::Int { bits: 16, signed: true },
        "uint16_t" | "unsigned short" => TypeDescriptor::Int { bits: 16, signed: false },
        "int" | "int32_t" => TypeDescriptor::Int { bits: 32, signed: true },
        "unsigned" | "unsigned int" | "uint32_t" => TypeDescriptor::Int { bits: 32, signed: false },
        "long" | "long long" | "int64_t" | "ssize_t" | "ptrdiff_t" => TypeDescriptor::I64,
        "unsigned long" | "unsigned long long" | "uint64_t" | "size_t" => {
            TypeDescriptor::Int { bits: 64, signed: false }
        }
        "float" => TypeDescriptor::Float { bits: 32 },
        "double" => TypeDescriptor::Float { bits: 64 },
        other => return Err(CfrontError::UnsupportedType(other.to_string())),
    })
}

/// Parameter list of a function definition as (name, C type text).
pub fn parse_params(fn_text: &str) -> Result<Vec<(String, String)>, CfrontError> {
    let clean = strip_comments(fn_text);
    let open = clean
        .find('(')
        .ok_or_else(|| CfrontError::Parse("function has no parameter list".to_string()))?;
    let mut depth = 0usize;
    let mut close = None;
    for (idx, b) in clean.bytes().enumerate().skip(open) {
        match b {
            b'(' => depth += 1,
            b')' => {
                depth -= 1;
                if depth == 0 {
                    close = Some(idx);
                    break;
                }
            }
            _ => {}
        }
    }
    let close = close.ok_or_else(|| CfrontError::Parse("unbalanced parameter list".to_string()))?;
    let list = &clean[open + 1..close];
    let mut params = Vec::new();
    for decl in list.split(',') {
        let decl = decl.trim();
        if decl.is_empty() || decl == "void" {
            continue;
        }
        let (decl, suffix) = match decl.find('[') {
            Some(b) => (decl[..b].trim_end(), Some(decl[b..].trim().to_string())),
            None => (decl, None),
        };
        let name = ident_before(decl, decl.len())
            .ok_or_else(|| CfrontError::Parse(format!("unnamed parameter: {decl:?}")))?;
        let mut ty = decl[..decl.len() - name.len()].trim().to_string();
        if let Some(suffix) = suffix {
            ty.push(' ');
            ty.push_str(&suffix);
        }
        params.push((name, ty));
    }
    Ok(params)
}

/// Return type text of a function definition.
pub fn return_type(fn_text: &str) -> Result<String, CfrontError> {
    let clean = strip_comments(fn_text);
    let open = clean
        .find('(')
        .ok_or_else(|| CfrontError::Parse("function has no parameter list".to_string()))?;
    let name = ident_before(&clean, open)
        .ok_or_else(|| CfrontError::Parse("function has no name".to_string()))?;
    let head = &clean[..open];
    let name_at = head
        .rfind(&name)
        .ok_or_else(|| CfrontError::Parse("function name not found in header".to_string()))?;
    Ok(head[..name_at].trim().to_string())
}

/// Inserts a `__flu_line(N);` probe after every block opener and every
/// statement-terminating `;` inside function bodies. Returns the rewritten
/// text and the sorted set of instrumented source lines.
pub fn instrument_c(src: &str) -> Result<(String, Vec<usize>), CfrontError> {
    let unit = parse_unit(src)?;
    let clean = strip_comments(src);
    // Offsets of function bodies in the original text.
    let mut spans = Vec::new();
    let mut cursor = 0usize;
    for item in &unit.items {
        let at = src[cursor..]
            .find(&item.text)
            .map(|p| p + cursor)
            .ok_or_else(|| CfrontError::Parse("item text not found".to_string()))?;
        cursor = at + item.text.len();
        if item.kind == CItemKind::Function {
            if let Some(body_open) = clean[at..at + item.text.len()].find('{') {
                spans.push((at + body_open, at + item.text.len()));
            }
        }
    }

    let mut out = String::with_capacity(src.len() * 2);
    let mut lines = BTreeSet::new();
    let mut i = 0;
    for (open, end) in spans {
        out.push_str(&src[i..open]);
        let mut paren = 0usize;
        let mut in_init = false;
        let mut init_brace = 0usize;
        let mut j = open;
        while j < end {
            let b = clean.as_bytes()[j];
            let mut k = j + 1;
            while k <= end && !src.is_char_boundary(k) {
                k += 1;
            }
            out.push_str(&src[j..k.min(end)]);
            match b {
                b'(' => paren += 1,
                b')' => paren = paren.saturating_sub(1),
                // A plain `=` (not ==, <= etc.) may start a brace
                // initializer; suppress probes until its statement ends.
                b'=' if paren == 0
                    && clean.as_bytes().get(j + 1) != Some(&b'=')
                    && (j == 0 || !b"=!<>+-*/%&|^".contains(&clean.as_bytes()[j - 1])) =>
                {
                    in_init = true;
                }
                b'{' if in_init => init_brace += 1,
                b'}' if in_init && init_brace > 0 => init_brace -= 1,
                b'{' | b';' if paren == 0 && !in_init => {
                    let line = line_of(src, j);
                    out.push_str(&format!(" __flu_line({line});"));
                    lines.insert(line);
                }
                b';' if paren == 0 && in_init && init_brace == 0 => {
                    in_init = false;
                    let line = line_of(src, j);
                    out.push_str(&format!(" __flu_line({line});"));
                    lines.insert(line);
                }
                _ => {}
            }
            j = k;
        }
        i = end;
    }
    out.push_str(&src[i..]);
    Ok((out, lines.into_iter().collect()))
}
