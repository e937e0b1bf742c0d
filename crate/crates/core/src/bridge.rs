//! The mapping layer between source- and target-language program states:
//! canonical field names, canonical JSON rendering, descriptor-guided
//! reading, and whole-state comparison.

use thiserror::Error;

use crate::model::{EntryDescriptor, TypeDescriptor};
use crate::rt_json::{self, Value};

pub const RETURN_SLOT: &str = "return";

/// Default relative tolerance for float comparison.
pub const DEFAULT_FLOAT_TOL: f64 = 1e-9;

/// The full observable state of one execution: an ordered map from slot
/// name to value. Keys are stored in canonical form, in descriptor order.
#[derive(Debug, Clone, PartialEq)]
pub struct ProgramState {
    pub bindings: Vec<(String, Value)>,
}

impl ProgramState {
    pub fn new(bindings: Vec<(String, Value)>) -> ProgramState {
        ProgramState { bindings }
    }

    pub fn empty() -> ProgramState {
        ProgramState { bindings: Vec::new() }
    }

    pub fn get(&self, slot: &str) -> Option<&Value> {
        let want = canonical_field_name(slot);
        self.bindings.iter().find(|(k, _)| *k == want).map(|(_, v)| v)
    }

    pub fn as_value(&self) -> Value {
        Value::Object(self.bindings.clone())
    }
}

/// Which side of an execution a state describes. Output states may carry a
/// `return` slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateRole {
    Input,
    Output,
}

/// A single point of divergence between two states.
#[derive(Debug, Clone, PartialEq)]
pub struct Mismatch {
    /// Slot/field/index trail, e.g. `e.s[2]`.
    pub path: String,
    pub expected: Value,
    pub actual: Value,
}

#[derive(Debug, Error)]
pub enum BridgeError {
    #[error("unsupported type at {0}")]
    UnsupportedType(String),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("parse error: {0}")]
    Parse(#[from] rt_json::ParseError),
    #[error("descriptor mismatch: {0}")]
    DescriptorMismatch(String),
}

/// Lowercases and strips underscores so that source and target spellings
/// of the same identifier collide.
pub fn canonical_field_name(name: &str) -> String {
    rt_json::canonical_key(name)
}

/// Slot layout of a state for the given role: params, then globals, then
/// (for outputs with a return type) the `return` slot.
pub fn slots(descriptor: &EntryDescriptor, role: StateRole) -> Vec<(String, TypeDescriptor)> {
    let mut out: Vec<(String, TypeDescriptor)> = Vec::new();
    for p in &descriptor.params {
        out.push((p.name.clone(), p.ty.clone()));
    }
    for g in &descriptor.globals {
        out.push((g.name.clone(), g.ty.clone()));
    }
    if role == StateRole::Output {
        if let Some(ret) = &descriptor.returns {
            out.push((RETURN_SLOT.to_string(), ret.clone()));
        }
    }
    out
}

/// Canonical interchange rendering: objects multi-line with fixed 2-space
/// indent and keys in descriptor order, lists inline, floats
/// shortest-round-trip.
pub fn serialize_state(state: &ProgramState) -> String {
    let mut out = String::new();
    write_canonical(&mut out, &state.as_value(), 0);
    out
}

/// Single-line rendering for the execution wire protocol.
pub fn serialize_state_compact(state: &ProgramState) -> String {
    rt_json::write_compact(&state.as_value())
}

pub fn serialize_value(value: &Value) -> String {
    let mut out = String::new();
    write_canonical(&mut out, value, 0);
    out
}

fn write_canonical(out: &mut String, value: &Value, indent: usize) {
    match value {
        Value::Object(fields) if fields.is_empty() => out.push_str("{}"),
        Value::Object(fields) => {
            out.push_str("{\n");
            for (i, (key, v)) in fields.iter().enumerate() {
                for _ in 0..indent + 2 {
                    out.push(' ');
                }
                rt_json::write_string(out, key);
                out.push_str(": ");
                write_canonical(out, v, indent + 2);
                if i + 1 < fields.len() {
                    out.push(',');
                }
                out.push('\n');
            }
            for _ in 0..indent {
                out.push(' ');
            }
            out.push('}');
        }
        Value::List(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_canonical(out, item, indent);
            }
            out.push(']');
        }
        other => out.push_str(&rt_json::write_compact(other)),
    }
}

/// Reads interchange text into a well-typed state. Field matching is
/// order-insensitive and canonical; extra keys are rejected; missing
/// optional slots become null.
pub fn deserialize_state(
    text: &str,
    descriptor: &EntryDescriptor,
    role: StateRole,
) -> Result<ProgramState, BridgeError> {
    let value = rt_json::parse(text)?;
    bind_state(&value, descriptor, role)
}

/// Same as [`deserialize_state`] but starting from an already-parsed value.
pub fn bind_state(
    value: &Value,
    descriptor: &EntryDescriptor,
    role: StateRole,
) -> Result<ProgramState, BridgeError> {
    let fields = value
        .as_object()
        .ok_or_else(|| BridgeError::SchemaMismatch("state must be an object".to_string()))?;
    let layout = slots(descriptor, role);
    for (key, _) in fields {
        let canon = canonical_field_name(key);
        if !layout.iter().any(|(name, _)| canonical_field_name(name) == canon) {
            return Err(BridgeError::SchemaMismatch(format!("extra key {key:?}")));
        }
    }
    let mut bindings = Vec::with_capacity(layout.len());
    for (name, ty) in &layout {
        let canon = canonical_field_name(name);
        let raw = fields.iter().find(|(k, _)| canonical_field_name(k) == canon).map(|(_, v)| v);
        let bound = match raw {
            Some(v) => bind_value(v, ty, name)?,
            None if matches!(ty, TypeDescriptor::Optional { .. }) => Value::Null,
            None => {
                return Err(BridgeError::SchemaMismatch(format!("missing required slot {name:?}")))
            }
        };
        bindings.push((canon, bound));
    }
    Ok(ProgramState::new(bindings))
}

/// Coerces a raw parsed value to a descriptor shape, canonicalizing
/// aggregate keys and ordering fields in descriptor order.
pub fn bind_value(value: &Value, ty: &TypeDescriptor, path: &str) -> Result<Value, BridgeError> {
    match ty {
        TypeDescriptor::Int { bits, signed } => match value {
            Value::Int(i) => {
                check_int_range(*i, *bits, *signed, path)?;
                Ok(Value::Int(*i))
            }
            _ => Err(shape_err(path, "integer", value)),
        },
        TypeDescriptor::Float { .. } => match value {
            Value::Float(f) => Ok(Value::Float(*f)),
            Value::Int(i) => Ok(Value::Float(*i as f64)),
            _ => Err(shape_err(path, "float", value)),
        },
        TypeDescriptor::Bool => match value {
            Value::Bool(b) => Ok(Value::Bool(*b)),
            _ => Err(shape_err(path, "bool", value)),
        },
        TypeDescriptor::Str => match value {
            Value::Str(s) => Ok(Value::Str(s.clone())),
            _ => Err(shape_err(path, "string", value)),
        },
        TypeDescriptor::Array { of } => match value {
            Value::List(items) => {
                let mut out = Vec::with_capacity(items.len());
                for (i, item) in items.iter().enumerate() {
                    out.push(bind_value(item, of, &format!("{path}[{i}]"))?);
                }
                Ok(Value::List(out))
            }
            _ => Err(shape_err(path, "array", value)),
        },
        TypeDescriptor::Optional { of } => match value {
            Value::Null => Ok(Value::Null),
            other => bind_value(other, of, path),
        },
        TypeDescriptor::Map { value: value_ty } => match value {
            Value::Object(entries) => {
                // Map keys sort lexicographically for canonical order.
                let mut out: Vec<(String, Value)> = Vec::with_capacity(entries.len());
                for (k, v) in entries {
                    out.push((k.clone(), bind_value(v, value_ty, &format!("{path}[{k:?}]"))?));
                }
                out.sort_by(|a, b| a.0.cmp(&b.0));
                Ok(Value::Object(out))
            }
            _ => Err(shape_err(path, "map", value)),
        },
        TypeDescriptor::Aggregate { name, fields } => match value {
            Value::Object(entries) => {
                for (key, _) in entries {
                    let canon = canonical_field_name(key);
                    if !fields.iter().any(|f| canonical_field_name(&f.name) == canon) {
                        return Err(BridgeError::SchemaMismatch(format!(
                            "extra key {key:?} in aggregate {name} at {path}"
                        )));
                    }
                }
                let mut out = Vec::with_capacity(fields.len());
                for field in fields {
                    let canon = canonical_field_name(&field.name);
                    let raw = entries
                        .iter()
                        .find(|(k, _)| canonical_field_name(k) == canon)
                        .map(|(_, v)| v);
                    let child_path = format!("{path}.{canon}");
                    let bound = match raw {
                        Some(v) => bind_value(v, &field.ty, &child_path)?,
                        None if matches!(field.ty, TypeDescriptor::Optional { .. }) => Value::Null,
                        None => {
                            return Err(BridgeError::SchemaMismatch(format!(
                                "missing field {} in aggregate {name} at {path}",
                                field.name
                            )))
                        }
                    };
                    out.push((canon, bound));
                }
                Ok(Value::Object(out))
            }
            _ => Err(shape_err(path, "object", value)),
        },
        // References are flattened: the pointed-to value is inline.
        TypeDescriptor::Ref { of, .. } => match value {
            Value::Null => Ok(Value::Null),
            other => bind_value(other, of, path),
        },
    }
}

fn check_int_range(i: i128, bits: u8, signed: bool, path: &str) -> Result<(), BridgeError> {
    let (lo, hi) = int_bounds(bits, signed);
    if i < lo || i > hi {
        return Err(BridgeError::SchemaMismatch(format!(
            "integer {i} out of range for {}{bits} at {path}",
            if signed { "i" } else { "u" }
        )));
    }
    Ok(())
}

pub fn int_bounds(bits: u8, signed: bool) -> (i128, i128) {
    if signed {
        let hi = (1i128 << (bits - 1)) - 1;
        (-hi - 1, hi)
    } else {
        (0, (1i128 << bits) - 1)
    }
}

fn shape_err(path: &str, expected: &str, got: &Value) -> BridgeError {
    BridgeError::SchemaMismatch(format!(
        "expected {expected} at {path}, got {}",
        rt_json::write_compact(got)
    ))
}

/// Deep structural comparison. Floats compare within a relative tolerance
/// and NaN equals NaN; everything else is exact. Returns every mismatch
/// with its path.
pub fn compare_states(
    expected: &ProgramState,
    actual: &ProgramState,
    tol: f64,
) -> Result<Vec<Mismatch>, BridgeError> {
    let expected_keys: Vec<&String> = expected.bindings.iter().map(|(k, _)| k).collect();
    let actual_keys: Vec<&String> = actual.bindings.iter().map(|(k, _)| k).collect();
    if expected_keys != actual_keys {
        return Err(BridgeError::DescriptorMismatch(format!(
            "slot sets differ: {expected_keys:?} vs {actual_keys:?}"
        )));
    }
    let mut mismatches = Vec::new();
    for ((key, exp), (_, act)) in expected.bindings.iter().zip(&actual.bindings) {
        compare_values(exp, act, tol, key, &mut mismatches);
    }
    Ok(mismatches)
}

pub fn floats_equal(a: f64, b: f64, tol: f64) -> bool {
    if a.is_nan() && b.is_nan() {
        return true;
    }
    if a == b {
        return true;
    }
    (a - b).abs() <= tol * f64::max(1.0, f64::max(a.abs(), b.abs()))
}

fn compare_values(exp: &Value, act: &Value, tol: f64, path: &str, out: &mut Vec<Mismatch>) {
    let diverged = match (exp, act) {
        (Value::Null, Value::Null) => false,
        (Value::Bool(a), Value::Bool(b)) => a != b,
        (Value::Int(a), Value::Int(b)) => a != b,
        (Value::Float(a), Value::Float(b)) => !floats_equal(*a, *b, tol),
        (Value::Str(a), Value::Str(b)) => a != b,
        (Value::List(a), Value::List(b)) => {
            if a.len() != b.len() {
                true
            } else {
                for (i, (x, y)) in a.iter().zip(b).enumerate() {
                    compare_values(x, y, tol, &format!("{path}[{i}]"), out);
                }
                return;
            }
        }
        (Value::Object(a), Value::Object(b)) => {
            let a_keys: Vec<&String> = a.iter().map(|(k, _)| k).collect();
            let b_keys: Vec<&String> = b.iter().map(|(k, _)| k).collect();
            if a_keys != b_keys {
                true
            } else {
                for ((k, x), (_, y)) in a.iter().zip(b) {
                    compare_values(x, y, tol, &format!("{path}.{k}"), out);
                }
                return;
            }
        }
        _ => true,
    };
    if diverged {
        out.push(Mismatch { path: path.to_string(), expected: exp.clone(), actual: act.clone() });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Field;

    fn field(name: &str, ty: TypeDescriptor) -> Field {
        Field { name: name.to_string(), ty }
    }

    /// Descriptor of the graph-matching `add` routine used throughout the
    /// test suite.
    pub fn env_descriptor() -> EntryDescriptor {
        let matrix = TypeDescriptor::Aggregate {
            name: "Matrix".to_string(),
            fields: vec![
                field("N", TypeDescriptor::I64),
                field("A", TypeDescriptor::array(TypeDescriptor::I64)),
            ],
        };
        let env = TypeDescriptor::Aggregate {
            name: "Env".to_string(),
            fields: vec![
                field("N", TypeDescriptor::I64),
                field("G", TypeDescriptor::reference(matrix, false)),
                field("S", TypeDescriptor::array(TypeDescriptor::Bool)),
                field("Slack", TypeDescriptor::array(TypeDescriptor::I64)),
                field("Slackx", TypeDescriptor::array(TypeDescriptor::I64)),
                field("Prev", TypeDescriptor::array(TypeDescriptor::I64)),
                field("Lx", TypeDescriptor::array(TypeDescriptor::I64)),
                field("Ly", TypeDescriptor::array(TypeDescriptor::I64)),
            ],
        };
        EntryDescriptor {
            params: vec![
                field("e", TypeDescriptor::reference(env, true)),
                field("i", TypeDescriptor::I64),
                field("p", TypeDescriptor::I64),
            ],
            returns: None,
            globals: vec![],
            mutates: vec!["e".to_string()],
            gen_hooks: vec![],
        }
    }

    /// The serialized input state for `add` with n=3, i=2, p=0.
    pub const ADD_INPUT: &str = r#"{"e": {
        "n": 3,
        "g": {
          "n": 3,
          "a": [0, 0, 0, 0, 0, 0, 0, 0, 0]
        },
        "s": [false, false, false],
        "slack": [0, 0, 0],
        "slackx": [0, 0, 0],
        "prev": [0, 0, 0],
        "lx": [0, 0, 0],
        "ly": [0, 0, 0]
      },
      "i": 2,
      "p": 0}"#;

    #[test]
    fn canonical_field_name_collapses_spellings() {
        assert_eq!(canonical_field_name("Slackx"), "slackx");
        assert_eq!(
            canonical_field_name("MOOV_IO_ACH_STRING_ZEROS"),
            canonical_field_name("moov_io_ach_stringZeros")
        );
        assert_eq!(canonical_field_name("MOOV_IO_ACH_STRING_ZEROS"), "moovioachstringzeros");
        assert_eq!(canonical_field_name("n"), "n");
        // Idempotent.
        assert_eq!(canonical_field_name(&canonical_field_name("CamelCase")), "camelcase");
    }

    #[test]
    fn add_input_round_trips_canonically() {
        let descriptor = env_descriptor();
        let state = deserialize_state(ADD_INPUT, &descriptor, StateRole::Input).unwrap();
        let once = serialize_state(&state);
        let again = deserialize_state(&once, &descriptor, StateRole::Input).unwrap();
        assert_eq!(state, again);
        assert_eq!(once, serialize_state(&again), "double serialization must be byte-identical");
        // Spot-check a couple of canonical keys and values.
        assert_eq!(state.get("i"), Some(&Value::Int(2)));
        let env = state.get("e").unwrap();
        assert_eq!(env.get_canonical("slackx"), Some(&Value::List(vec![Value::Int(0); 3])));
    }

    #[test]
    fn key_order_in_input_is_insignificant() {
        let descriptor = env_descriptor();
        let reordered = r#"{"p": 0, "i": 2, "e": {
            "ly": [0,0,0], "lx": [0,0,0], "prev": [0,0,0],
            "slackx": [0,0,0], "slack": [0,0,0], "s": [false,false,false],
            "g": {"a": [0,0,0,0,0,0,0,0,0], "n": 3}, "n": 3}}"#;
        let a = deserialize_state(ADD_INPUT, &descriptor, StateRole::Input).unwrap();
        let b = deserialize_state(reordered, &descriptor, StateRole::Input).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn extra_keys_are_rejected() {
        let descriptor = EntryDescriptor {
            params: vec![field("x", TypeDescriptor::I64)],
            returns: None,
            globals: vec![],
            mutates: vec![],
            gen_hooks: vec![],
        };
        let result = deserialize_state(r#"{"x": 1, "zz": 2}"#, &descriptor, StateRole::Input);
        assert!(matches!(result, Err(BridgeError::SchemaMismatch(_))));
    }

    #[test]
    fn empty_state_serializes_to_braces() {
        assert_eq!(serialize_state(&ProgramState::empty()), "{}");
    }

    #[test]
    fn compare_flags_single_divergence_with_path() {
        let descriptor = env_descriptor();
        let expected = deserialize_state(
            &ADD_INPUT.replace("[false, false, false]", "[false, false, true]"),
            &descriptor,
            StateRole::Input,
        )
        .unwrap();
        let actual = deserialize_state(ADD_INPUT, &descriptor, StateRole::Input).unwrap();
        let mismatches = compare_states(&expected, &actual, DEFAULT_FLOAT_TOL).unwrap();
        assert_eq!(mismatches.len(), 1);
        assert_eq!(mismatches[0].path, "e.s[2]");
        assert_eq!(mismatches[0].expected, Value::Bool(true));
        assert_eq!(mismatches[0].actual, Value::Bool(false));
    }

    #[test]
    fn compare_is_reflexive_and_tolerant() {
        let descriptor = env_descriptor();
        let state = deserialize_state(ADD_INPUT, &descriptor, StateRole::Input).unwrap();
        assert!(compare_states(&state, &state, 0.0).unwrap().is_empty());

        assert!(floats_equal(1.0, 1.0 + DEFAULT_FLOAT_TOL / 2.0, DEFAULT_FLOAT_TOL));
        assert!(!floats_equal(1.0, 1.0 + DEFAULT_FLOAT_TOL * 10.0, DEFAULT_FLOAT_TOL));
        assert!(floats_equal(f64::NAN, f64::NAN, DEFAULT_FLOAT_TOL));
    }

    #[test]
    fn missing_optional_becomes_null() {
        let descriptor = EntryDescriptor {
            params: vec![
                field("x", TypeDescriptor::I64),
                field("y", TypeDescriptor::Optional { of: Box::new(TypeDescriptor::Str) }),
            ],
            returns: None,
            globals: vec![],
            mutates: vec![],
            gen_hooks: vec![],
        };
        let state = deserialize_state(r#"{"x": 5}"#, &descriptor, StateRole::Input).unwrap();
        assert_eq!(state.get("y"), Some(&Value::Null));
    }

    #[test]
    fn map_keys_sort_lexicographically() {
        let descriptor = EntryDescriptor {
            params: vec![field("m", TypeDescriptor::Map { value: Box::new(TypeDescriptor::Str) })],
            returns: None,
            globals: vec![],
            mutates: vec![],
            gen_hooks: vec![],
        };
        let state =
            deserialize_state(r#"{"m": {"b": "2", "a": "1"}}"#, &descriptor, StateRole::Input)
                .unwrap();
        let rendered = serialize_state(&state);
        assert!(rendered.find("\"a\"").unwrap() < rendered.find("\"b\"").unwrap());
    }
}
