//! Tree-shaped agent state and its single-line wire form.
//!
//! On the wire a document is `;`-separated `path=value` pairs, paths use
//! `.` to nest, and literal `;` or `=` inside values are escaped with a
//! backslash: `alarm.time=06:00;alarm.set=true`.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

/// Scalar leaf. Wire values are untyped text; [`StateValue::parse`]
/// applies the typing rule: `true`/`false` are booleans, anything that
/// parses as f64 is a number, the rest stays text (so `06:00` is text).
#[derive(Debug, Clone, PartialEq)]
pub enum StateValue {
    Text(String),
    Number(f64),
    Boolean(bool),
}

impl StateValue {
    pub fn parse(token: &str) -> StateValue {
        match token {
            "true" => StateValue::Boolean(true),
            "false" => StateValue::Boolean(false),
            _ => match token.parse::<f64>() {
                Ok(n) if n.is_finite() => StateValue::Number(n),
                _ => StateValue::Text(token.to_owned()),
            },
        }
    }

    fn wire_text(&self) -> String {
        match self {
            StateValue::Text(s) => s.clone(),
            StateValue::Number(n) => format!("{n}"),
            StateValue::Boolean(b) => format!("{b}"),
        }
    }
}

impl fmt::Display for StateValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StateValue::Text(s) => write!(f, "{s:?}"),
            StateValue::Number(n) => write!(f, "{n}"),
            StateValue::Boolean(b) => write!(f, "{b}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StateNode {
    Leaf(StateValue),
    Branch(BTreeMap<String, StateNode>),
}

/// Paths must be non-empty `.`-separated segments, each non-empty.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed state path {path:?}")]
pub struct MalformedPath {
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{detail}")]
pub struct WireStateError {
    pub detail: String,
}

fn split_path(path: &str) -> Result<Vec<&str>, MalformedPath> {
    let segments: Vec<&str> = path.split('.').collect();
    if segments.iter().any(|s| s.is_empty()) {
        return Err(MalformedPath {
            path: path.to_owned(),
        });
    }
    Ok(segments)
}

/// Snapshot of agent-visible state.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StateDoc {
    root: BTreeMap<String, StateNode>,
}

impl StateDoc {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.root.is_empty()
    }

    /// Node at `path`, or `None` when absent. Descending through a leaf
    /// is absence, not an error; a syntactically bad path is an error.
    pub fn resolve(&self, path: &str) -> Result<Option<&StateNode>, MalformedPath> {
        let segments = split_path(path)?;
        let mut map = &self.root;
        let (last, prefix) = segments.split_last().expect("split_path yields segments");
        for seg in prefix {
            match map.get(*seg) {
                Some(StateNode::Branch(next)) => map = next,
                _ => return Ok(None),
            }
        }
        Ok(map.get(*last))
    }

    /// Inserts a leaf, creating branches along the way. Fails when the
    /// path crosses an existing leaf or lands on an existing node.
    pub fn set(&mut self, path: &str, value: StateValue) -> Result<(), WireStateError> {
        let segments = split_path(path).map_err(|e| WireStateError {
            detail: e.to_string(),
        })?;
        let (last, prefix) = segments.split_last().expect("split_path yields segments");
        let mut map = &mut self.root;
        for seg in prefix {
            let node = map
                .entry((*seg).to_owned())
                .or_insert_with(|| StateNode::Branch(BTreeMap::new()));
            match node {
                StateNode::Branch(next) => map = next,
                StateNode::Leaf(_) => {
                    return Err(WireStateError {
                        detail: format!("path {path:?} descends through leaf {seg:?}"),
                    });
                }
            }
        }
        if map.contains_key(*last) {
            return Err(WireStateError {
                detail: format!("duplicate or conflicting path {path:?}"),
            });
        }
        map.insert((*last).to_owned(), StateNode::Leaf(value));
        Ok(())
    }

    /// Parses the one-line wire form. Empty (or all-whitespace) input is
    /// the empty document.
    pub fn from_wire(line: &str) -> Result<Self, WireStateError> {
        let mut doc = StateDoc::empty();
        if line.trim().is_empty() {
            return Ok(doc);
        }
        for pair in split_unescaped(line, ';') {
            if pair.is_empty() {
                continue;
            }
            let mut halves = split_unescaped(&pair, '=');
            let path = halves.next().expect("split yields at least one piece");
            let value = halves.next().ok_or_else(|| WireStateError {
                detail: format!("pair {pair:?} has no '='"),
            })?;
            let rest: Vec<String> = halves.collect();
            let value = if rest.is_empty() {
                value
            } else {
                // unescaped '=' inside the value portion
                return Err(WireStateError {
                    detail: format!("pair {pair:?} has more than one unescaped '='"),
                });
            };
            doc.set(path.trim(), StateValue::parse(&unescape(&value)))?;
        }
        Ok(doc)
    }

    /// Serializes to the wire form; leaves appear in sorted path order,
    /// so the output is canonical for a given document.
    pub fn to_wire(&self) -> String {
        let mut pairs = Vec::new();
        collect_wire_pairs(&self.root, &mut String::new(), &mut pairs);
        pairs.join(";")
    }
}

fn collect_wire_pairs(map: &BTreeMap<String, StateNode>, prefix: &mut String, out: &mut Vec<String>) {
    for (key, node) in map {
        let saved = prefix.len();
        if !prefix.is_empty() {
            prefix.push('.');
        }
        prefix.push_str(key);
        match node {
            StateNode::Leaf(value) => {
                out.push(format!("{prefix}={}", escape(&value.wire_text())));
            }
            StateNode::Branch(next) => collect_wire_pairs(next, prefix, out),
        }
        prefix.truncate(saved);
    }
}

/// Splits on `sep` except where a backslash escapes it. Escapes are left
/// in place for a later [`unescape`].
fn split_unescaped(s: &str, sep: char) -> impl Iterator<Item = String> + '_ {
    let mut pieces = Vec::new();
    let mut current = String::new();
    let mut escaped = false;
    for c in s.chars() {
        if escaped {
            current.push('\\');
            current.push(c);
            escaped = false;
        } else if c == '\\' {
            escaped = true;
        } else if c == sep {
            pieces.push(std::mem::take(&mut current));
        } else {
            current.push(c);
        }
    }
    if escaped {
        current.push('\\');
    }
    pieces.push(current);
    pieces.into_iter()
}

fn unescape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut escaped = false;
    for c in s.chars() {
        if escaped {
            out.push(c);
            escaped = false;
        } else if c == '\\' {
            escaped = true;
        } else {
            out.push(c);
        }
    }
    if escaped {
        out.push('\\');
    }
    out
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        if matches!(c, ';' | '=' | '\\') {
            out.push('\\');
        }
        out.push(c);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn typing_rule_booleans_numbers_text() {
        assert_eq!(StateValue::parse("true"), StateValue::Boolean(true));
        assert_eq!(StateValue::parse("false"), StateValue::Boolean(false));
        assert_eq!(StateValue::parse("6"), StateValue::Number(6.0));
        assert_eq!(StateValue::parse("-2.5"), StateValue::Number(-2.5));
        assert_eq!(StateValue::parse("06:00"), StateValue::Text("06:00".to_owned()));
        assert_eq!(StateValue::parse("True"), StateValue::Text("True".to_owned()));
        assert_eq!(StateValue::parse(""), StateValue::Text(String::new()));
    }

    #[test]
    fn wire_round_trip_of_nested_document() {
        let doc = StateDoc::from_wire("alarm.time=06:00;alarm.set=true").unwrap();
        assert_eq!(
            doc.resolve("alarm.time").unwrap(),
            Some(&StateNode::Leaf(StateValue::Text("06:00".to_owned())))
        );
        assert_eq!(
            doc.resolve("alarm.set").unwrap(),
            Some(&StateNode::Leaf(StateValue::Boolean(true)))
        );
        assert_eq!(doc.to_wire(), "alarm.set=true;alarm.time=06:00");
    }

    #[test]
    fn resolve_distinguishes_absent_from_malformed() {
        let doc = StateDoc::from_wire("alarm.time=06:00").unwrap();
        assert_eq!(doc.resolve("alarm.zone").unwrap(), None);
        assert_eq!(doc.resolve("missing").unwrap(), None);
        assert!(doc.resolve("alarm..set").is_err());
        assert!(doc.resolve("").is_err());
        assert!(doc.resolve(".alarm").is_err());
    }

    #[test]
    fn resolve_through_a_leaf_is_absent() {
        let doc = StateDoc::from_wire("alarm=armed").unwrap();
        assert_eq!(doc.resolve("alarm.time").unwrap(), None);
    }

    #[test]
    fn branch_nodes_resolve_too() {
        let doc = StateDoc::from_wire("alarm.time=06:00").unwrap();
        assert!(matches!(
            doc.resolve("alarm").unwrap(),
            Some(StateNode::Branch(_))
        ));
    }

    #[test]
    fn escaped_separators_round_trip() {
        let doc = StateDoc::from_wire(r"note=a\;b\=c;x=1").unwrap();
        assert_eq!(
            doc.resolve("note").unwrap(),
            Some(&StateNode::Leaf(StateValue::Text("a;b=c".to_owned())))
        );
        let wire = doc.to_wire();
        assert_eq!(StateDoc::from_wire(&wire).unwrap(), doc);
    }

    #[test]
    fn empty_line_is_empty_document() {
        assert!(StateDoc::from_wire("").unwrap().is_empty());
        assert!(StateDoc::from_wire("  ").unwrap().is_empty());
        assert_eq!(StateDoc::empty().to_wire(), "");
    }

    #[test]
    fn conflicting_paths_are_rejected() {
        assert!(StateDoc::from_wire("a=1;a.b=2").is_err());
        assert!(StateDoc::from_wire("a.b=2;a=1").is_err());
        assert!(StateDoc::from_wire("a=1;a=2").is_err());
        assert!(StateDoc::from_wire("a=1;x").is_err());
    }

    #[test]
    fn wire_form_is_canonical_and_stable() {
        let a = StateDoc::from_wire("b=2;a=1").unwrap();
        let b = StateDoc::from_wire("a=1;b=2").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_wire(), "a=1;b=2");
        let rewired = StateDoc::from_wire(&a.to_wire()).unwrap();
        assert_eq!(rewired.to_wire(), a.to_wire());
    }
}
