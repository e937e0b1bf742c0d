//! Self-contained JSON value model, parser and writer.
//!
//! This module is compiled both into the main library and, verbatim, into
//! every generated fuzzing harness, so it must not depend on anything
//! outside `std`. The dialect is JSON extended with the bare literals
//! `NaN`, `Infinity` and `-Infinity` so runtime float values always have a
//! textual form.

use std::fmt::Write as _;

/// A parsed interchange value. Object keys keep their insertion order.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Null,
    Bool(bool),
    /// Integers are widened so that every `i64` and `u64` fits exactly.
    Int(i128),
    Float(f64),
    Str(String),
    List(Vec<Value>),
    Object(Vec<(String, Value)>),
}

impl Value {
    pub fn as_object(&self) -> Option<&[(String, Value)]> {
        match self {
            Value::Object(fields) => Some(fields),
            _ => None,
        }
    }

    pub fn as_list(&self) -> Option<&[Value]> {
        match self {
            Value::List(items) => Some(items),
            _ => None,
        }
    }

    /// Looks up an object field whose canonical name matches `name`.
    pub fn get_canonical(&self, name: &str) -> Option<&Value> {
        let want = canonical_key(name);
        self.as_object()?
            .iter()
            .find(|(k, _)| canonical_key(k) == want)
            .map(|(_, v)| v)
    }
}

/// Canonical form of a field identifier: lowercased with underscores
/// removed, so `Slackx`, `slackx` and `SLACK_X` all collide.
pub fn canonical_key(name: &str) -> String {
    name.chars()
        .filter(|c| *c != '_')
        .flat_map(|c| c.to_lowercase())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    pub offset: usize,
    pub message: String,
}

impl std::fmt::Display for ParseError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "json parse error at byte {}: {}", self.offset, self.message)
    }
}

impl std::error::Error for ParseError {}

pub fn parse(text: &str) -> Result<Value, ParseError> {
    let bytes = text.as_bytes();
    let mut pos = 0usize;
    let value = parse_value(bytes, &mut pos)?;
    skip_ws(bytes, &mut pos);
    if pos != bytes.len() {
        return Err(err(pos, "trailing input"));
    }
    Ok(value)
}

fn err(offset: usize, message: &str) -> ParseError {
    ParseError { offset, message: message.to_string() }
}

fn skip_ws(bytes: &[u8], pos: &mut usize) {
    while *pos < bytes.len() && matches!(bytes[*pos], b' ' | b'\t' | b'\n' | b'\r') {
        *pos += 1;
    }
}

fn expect(bytes: &[u8], pos: &mut usize, byte: u8) -> Result<(), ParseError> {
    if *pos < bytes.len() && bytes[*pos] == byte {
        *pos += 1;
        Ok(())
    } else {
        Err(err(*pos, &format!("expected '{}'", byte as char)))
    }
}

fn starts_with(bytes: &[u8], pos: usize, word: &str) -> bool {
    bytes[pos..].starts_with(word.as_bytes())
}

fn parse_value(bytes: &[u8], pos: &mut usize) -> Result<Value, ParseError> {
    skip_ws(bytes, pos);
    if *pos >= bytes.len() {
        return Err(err(*pos, "unexpected end of input"));
    }
    match bytes[*pos] {
        b'{' => parse_object(bytes, pos),
        b'[' => parse_list(bytes, pos),
        b'"' => Ok(Value::Str(parse_string(bytes, pos)?)),
        b't' if starts_with(bytes, *pos, "true") => {
            *pos += 4;
            Ok(Value::Bool(true))
        }
        b'f' if starts_with(bytes, *pos, "false") => {
            *pos += 5;
            Ok(Value::Bool(false))
        }
        b'n' if starts_with(bytes, *pos, "null") => {
            *pos += 4;
            Ok(Value::Null)
        }
        b'N' if starts_with(bytes, *pos, "NaN") => {
            *pos += 3;
            Ok(Value::Float(f64::NAN))
        }
        b'I' if starts_with(bytes, *pos, "Infinity") => {
            *pos += 8;
            Ok(Value::Float(f64::INFINITY))
        }
        b'-' if starts_with(bytes, *pos, "-Infinity") => {
            *pos += 9;
            Ok(Value::Float(f64::NEG_INFINITY))
        }
        _ => parse_number(bytes, pos),
    }
}

fn parse_object(bytes: &[u8], pos: &mut usize) -> Result<Value, ParseError> {
    expect(bytes, pos, b'{')?;
    let mut fields: Vec<(String, Value)> = Vec::new();
    skip_ws(bytes, pos);
    if *pos < bytes.len() && bytes[*pos] == b'}' {
        *pos += 1;
        return Ok(Value::Object(fields));
    }
    loop {
        skip_ws(bytes, pos);
        let key = parse_string(bytes, pos)?;
        if fields.iter().any(|(k, _)| *k == key) {
            return Err(err(*pos, &format!("duplicate key {key:?}")));
        }
        skip_ws(bytes, pos);
        expect(bytes, pos, b':')?;
        let value = parse_value(bytes, pos)?;
        fields.push((key, value));
        skip_ws(bytes, pos);
        match bytes.get(*pos) {
            Some(b',') => *pos += 1,
            Some(b'}') => {
                *pos += 1;
                return Ok(Value::Object(fields));
            }
            _ => return Err(err(*pos, "expected ',' or '}'")),
        }
    }
}

fn parse_list(bytes: &[u8], pos: &mut usize) -> Result<Value, ParseError> {
    expect(bytes, pos, b'[')?;
    let mut items = Vec::new();
    skip_ws(bytes, pos);
    if *pos < bytes.len() && bytes[*pos] == b']' {
        *pos += 1;
        return Ok(Value::List(items));
    }
    loop {
        items.push(parse_value(bytes, pos)?);
        skip_ws(bytes, pos);
        match bytes.get(*pos) {
            Some(b',') => *pos += 1,
            Some(b']') => {
                *pos += 1;
                return Ok(Value::List(items));
            }
            _ => return Err(err(*pos, "expected ',' or ']'")),
        }
    }
}

fn parse_string(bytes: &[u8], pos: &mut usize) -> Result<String, ParseError> {
    expect(bytes, pos, b'"')?;
    let mut out = String::new();
    loop {
        if *pos >= bytes.len() {
            return Err(err(*pos, "unterminated string"));
        }
        match bytes[*pos] {
            b'"' => {
                *pos += 1;
                return Ok(out);
            }
            b'\\' => {
                *pos += 1;
                let esc = *bytes.get(*pos).ok_or_else(|| err(*pos, "unterminated escape"))?;
                *pos += 1;
                match esc {
                    b'"' => out.push('"'),
                    b'\\' => out.push('\\'),
                    b'/' => out.push('/'),
                    b'b' => out.push('\u{0008}'),
                    b'f' => out.push('\u{000c}'),
                    b'n' => out.push('\n'),
                    b'r' => out.push('\r'),
                    b't' => out.push('\t'),
                    b'u' => {
                        let hex = bytes
                            .get(*pos..*pos + 4)
                            .ok_or_else(|| err(*pos, "short \\u escape"))?;
                        let hex = std::str::from_utf8(hex).map_err(|_| err(*pos, "bad \\u escape"))?;
                        let cp = u32::from_str_radix(hex, 16).map_err(|_| err(*pos, "bad \\u escape"))?;
                        *pos += 4;
                        // Surrogate pairs.
                        let ch = if (0xd800..0xdc00).contains(&cp) {
                            if bytes.get(*pos) == Some(&b'\\') && bytes.get(*pos + 1) == Some(&b'u') {
                                let hex2 = bytes
                                    .get(*pos + 2..*pos + 6)
                                    .ok_or_else(|| err(*pos, "short surrogate"))?;
                                let hex2 =
                                    std::str::from_utf8(hex2).map_err(|_| err(*pos, "bad surrogate"))?;
                                let lo = u32::from_str_radix(hex2, 16)
                                    .map_err(|_| err(*pos, "bad surrogate"))?;
                                *pos += 6;
                                let combined = 0x10000 + ((cp - 0xd800) << 10) + (lo - 0xdc00);
                                char::from_u32(combined).ok_or_else(|| err(*pos, "bad surrogate pair"))?
                            } else {
                                return Err(err(*pos, "lone surrogate"));
                            }
                        } else {
                            char::from_u32(cp).ok_or_else(|| err(*pos, "bad code point"))?
                        };
                        out.push(ch);
                    }
                    _ => return Err(err(*pos, "unknown escape")),
                }
            }
            _ => {
                // Consume one UTF-8 scalar.
                let rest = std::str::from_utf8(&bytes[*pos..]).map_err(|_| err(*pos, "invalid utf-8"))?;
                let ch = rest.chars().next().unwrap();
                out.push(ch);
                *pos += ch.len_utf8();
            }
        }
    }
}

fn parse_number(bytes: &[u8], pos: &mut usize) -> Result<Value, ParseError> {
    let start = *pos;
    if bytes.get(*pos) == Some(&b'-') {
        *pos += 1;
    }
    let mut is_float = false;
    while let Some(&b) = bytes.get(*pos) {
        match b {
            b'0'..=b'9' => *pos += 1,
            b'.' | b'e' | b'E' | b'+' | b'-' => {
                is_float = true;
                *pos += 1;
            }
            _ => break,
        }
    }
    let text = std::str::from_utf8(&bytes[start..*pos]).map_err(|_| err(start, "bad number"))?;
    if text.is_empty() || text == "-" {
        return Err(err(start, "expected value"));
    }
    if is_float {
        text.parse::<f64>().map(Value::Float).map_err(|_| err(start, "bad float"))
    } else {
        text.parse::<i128>().map(Value::Int).map_err(|_| err(start, "integer out of range"))
    }
}

/// Compact single-line rendering. Not canonical; use the state bridge for
/// canonical output.
pub fn write_compact(value: &Value) -> String {
    let mut out = String::new();
    write_value(&mut out, value);
    out
}

fn write_value(out: &mut String, value: &Value) {
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Int(i) => {
            let _ = write!(out, "{i}");
        }
        Value::Float(f) => out.push_str(&format_float(*f)),
        Value::Str(s) => write_string(out, s),
        Value::List(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_value(out, item);
            }
            out.push(']');
        }
        Value::Object(fields) => {
            out.push('{');
            for (i, (key, item)) in fields.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_string(out, key);
                out.push_str(": ");
                write_value(out, item);
            }
            out.push('}');
        }
    }
}

pub fn write_string(out: &mut String, s: &str) {
    out.push('"');
    for ch in s.chars() {
        match ch {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => {
                let _ = write!(out, "\\u{:04x}", c as u32);
            }
            c => out.push(c),
        }
    }
    out.push('"');
}

/// Shortest round-trip rendering; whole floats keep a trailing `.0` so the
/// float-ness survives a reparse only when the slot type is unknown. The
/// bridge coerces by descriptor, so `1` and `1.0` read back identically.
pub fn format_float(f: f64) -> String {
    if f.is_nan() {
        "NaN".to_string()
    } else if f == f64::INFINITY {
        "Infinity".to_string()
    } else if f == f64::NEG_INFINITY {
        "-Infinity".to_string()
    } else if f == f.trunc() && f.abs() < 1e15 {
        format!("{f:.1}")
    } else {
        format!("{f}")
    }
}
