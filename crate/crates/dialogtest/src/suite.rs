//! The `.dtest` suite file format.
//!
//! ```text
//! # comment
//! case wake_word_regression
//!   context.equivalence_threshold = 0.7
//!   say: OK Google, what time is it?
//!   expect_equivalent: it is six a.m. threshold=0.6 message=clock sanity
//!   expect_state: alarm.set == true
//!   expect_state: alarm.time exists
//!   expect_no_breakdown
//! ```
//!
//! Lines are trimmed, so indentation is cosmetic. `case` opens a new
//! case; every other directive belongs to the current one. Context
//! overrides apply to the whole case regardless of position. A case
//! must contain at least one step, and no expectation may precede the
//! first `say` (there would be nothing to check against).

use std::collections::BTreeSet;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::context::ContextBuilder;
use crate::oracle::StateMatcher;
use crate::state::StateValue;

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error("cannot read {path}: {source}")]
    Unreadable {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: {detail}")]
    ParseError { line: usize, detail: String },
    #[error("case {case:?}: {detail}")]
    ValidationError { case: String, detail: String },
    #[error("duplicate case name {0:?}")]
    DuplicateCaseName(String),
}

/// Per-case context overrides; unset fields inherit the base context.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ContextOverrides {
    pub model_id: Option<String>,
    pub strategy_id: Option<String>,
    pub equivalence_threshold: Option<f64>,
    pub relevance_threshold: Option<f64>,
    pub words_per_second: Option<f64>,
    pub allow_confirmations: Option<bool>,
    pub wake_phrase: Option<String>,
    pub max_turns: Option<usize>,
}

impl ContextOverrides {
    pub fn is_empty(&self) -> bool {
        self == &ContextOverrides::default()
    }

    /// Sets one field from its suite-file spelling.
    pub fn set(&mut self, field: &str, value: &str) -> Result<(), String> {
        fn threshold(value: &str) -> Result<f64, String> {
            let t: f64 = value
                .parse()
                .map_err(|_| format!("{value:?} is not a number"))?;
            if !(-1.0..=1.0).contains(&t) {
                return Err(format!("threshold {t} is outside [-1, 1]"));
            }
            Ok(t)
        }
        match field {
            "model_id" => self.model_id = Some(nonempty(value)?),
            "strategy_id" => self.strategy_id = Some(nonempty(value)?),
            "equivalence_threshold" => self.equivalence_threshold = Some(threshold(value)?),
            "relevance_threshold" => self.relevance_threshold = Some(threshold(value)?),
            "words_per_second" => {
                let rate: f64 = value
                    .parse()
                    .map_err(|_| format!("{value:?} is not a number"))?;
                if !(rate.is_finite() && rate > 0.0) {
                    return Err(format!("rate {rate} must be positive"));
                }
                self.words_per_second = Some(rate);
            }
            "allow_confirmations" => {
                self.allow_confirmations = Some(match value {
                    "true" => true,
                    "false" => false,
                    other => return Err(format!("{other:?} is not true/false")),
                });
            }
            "wake_phrase" => self.wake_phrase = Some(nonempty(value)?),
            "max_turns" => {
                let n: usize = value
                    .parse()
                    .map_err(|_| format!("{value:?} is not a positive integer"))?;
                if n == 0 {
                    return Err("max_turns must be at least 1".to_owned());
                }
                self.max_turns = Some(n);
            }
            other => return Err(format!("unknown context field {other:?}")),
        }
        Ok(())
    }

    /// Applies the overrides on top of a builder.
    pub fn apply(&self, mut builder: ContextBuilder) -> ContextBuilder {
        if let Some(v) = &self.model_id {
            builder = builder.with_model(v.clone());
        }
        if let Some(v) = &self.strategy_id {
            builder = builder.with_strategy(v.clone());
        }
        if let Some(v) = self.equivalence_threshold {
            builder = builder.with_threshold(v);
        }
        if let Some(v) = self.relevance_threshold {
            builder = builder.with_relevance_threshold(v);
        }
        if let Some(v) = self.words_per_second {
            builder = builder.with_words_per_second(v);
        }
        if let Some(v) = self.allow_confirmations {
            builder = builder.with_confirmations(v);
        }
        if let Some(v) = &self.wake_phrase {
            builder = builder.with_wake_phrase(v.clone());
        }
        if let Some(v) = self.max_turns {
            builder = builder.with_max_turns(v);
        }
        builder
    }
}

fn nonempty(value: &str) -> Result<String, String> {
    if value.is_empty() {
        return Err("value must not be empty".to_owned());
    }
    Ok(value.to_owned())
}

#[derive(Debug, Clone, PartialEq)]
pub enum TestStep {
    Say {
        text: String,
    },
    ExpectEquivalent {
        expected: String,
        /// Overrides the context's equivalence threshold for this step.
        threshold: Option<f64>,
        message: Option<String>,
    },
    ExpectState {
        path: String,
        matcher: StateMatcher,
    },
    ExpectNoBreakdown,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestCase {
    pub name: String,
    pub overrides: ContextOverrides,
    pub steps: Vec<TestStep>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TestSuite {
    pub cases: Vec<TestCase>,
}

pub fn load_suite(path: &Path) -> Result<TestSuite, SuiteError> {
    let text = fs::read_to_string(path).map_err(|source| SuiteError::Unreadable {
        path: path.to_path_buf(),
        source,
    })?;
    parse_suite(&text)
}

pub fn parse_suite(text: &str) -> Result<TestSuite, SuiteError> {
    let mut cases: Vec<TestCase> = Vec::new();
    let mut names: BTreeSet<String> = BTreeSet::new();
    let mut current: Option<TestCase> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if let Some(rest) = directive(trimmed, "case") {
            if let Some(done) = current.take() {
                validate_case(&done)?;
                cases.push(done);
            }
            let name = rest.trim().to_owned();
            if name.is_empty() {
                return Err(SuiteError::ParseError {
                    line,
                    detail: "case needs a name".to_owned(),
                });
            }
            if !names.insert(name.clone()) {
                return Err(SuiteError::DuplicateCaseName(name));
            }
            current = Some(TestCase {
                name,
                overrides: ContextOverrides::default(),
                steps: Vec::new(),
            });
            continue;
        }
        let case = current.as_mut().ok_or_else(|| SuiteError::ParseError {
            line,
            detail: format!("{trimmed:?} appears before any case"),
        })?;
        if let Some(rest) = trimmed.strip_prefix("context.") {
            let (field, value) = rest.split_once('=').ok_or_else(|| SuiteError::ParseError {
                line,
                detail: "context override needs '='".to_owned(),
            })?;
            case.overrides
                .set(field.trim(), value.trim())
                .map_err(|detail| SuiteError::ParseError { line, detail })?;
        } else if let Some(text) = trimmed.strip_prefix("say:") {
            case.steps.push(TestStep::Say {
                text: text.trim().to_owned(),
            });
        } else if let Some(payload) = trimmed.strip_prefix("expect_equivalent:") {
            case.steps.push(parse_expect_equivalent(payload.trim(), line)?);
        } else if let Some(payload) = trimmed.strip_prefix("expect_state:") {
            case.steps.push(parse_expect_state(payload.trim(), line)?);
        } else if trimmed == "expect_no_breakdown" {
            case.steps.push(TestStep::ExpectNoBreakdown);
        } else {
            return Err(SuiteError::ParseError {
                line,
                detail: format!("unrecognized directive {trimmed:?}"),
            });
        }
    }
    if let Some(done) = current.take() {
        validate_case(&done)?;
        cases.push(done);
    }
    Ok(TestSuite { cases })
}

fn directive<'a>(line: &'a str, word: &str) -> Option<&'a str> {
    let rest = line.strip_prefix(word)?;
    if rest.starts_with(char::is_whitespace) {
        Some(rest)
    } else {
        None
    }
}

/// `<text> [threshold=<t>] [message=<m>]`; `message=` swallows the rest
/// of the line, so it must come last.
fn parse_expect_equivalent(payload: &str, line: usize) -> Result<TestStep, SuiteError> {
    let split = ["threshold=", "message="]
        .iter()
        .flat_map(|marker| {
            payload.match_indices(marker).map(|(i, _)| i).filter(|i| {
                *i == 0 || payload[..*i].ends_with(char::is_whitespace)
            })
        })
        .min();
    let (expected, mut rest) = match split {
        Some(i) => (payload[..i].trim_end(), &payload[i..]),
        None => (payload, ""),
    };
    let mut threshold = None;
    let mut message = None;
    loop {
        rest = rest.trim_start();
        if rest.is_empty() {
            break;
        }
        if let Some(r) = rest.strip_prefix("threshold=") {
            if threshold.is_some() {
                return Err(SuiteError::ParseError {
                    line,
                    detail: "duplicate threshold option".to_owned(),
                });
            }
            let (value, tail) = r.split_once(char::is_whitespace).unwrap_or((r, ""));
            let t: f64 = value.parse().map_err(|_| SuiteError::ParseError {
                line,
                detail: format!("threshold {value:?} is not a number"),
            })?;
            if !(-1.0..=1.0).contains(&t) {
                return Err(SuiteError::ParseError {
                    line,
                    detail: format!("threshold {t} is outside [-1, 1]"),
                });
            }
            threshold = Some(t);
            rest = tail;
        } else if let Some(r) = rest.strip_prefix("message=") {
            message = Some(r.trim_end().to_owned());
            rest = "";
        } else {
            return Err(SuiteError::ParseError {
                line,
                detail: format!("unrecognized option near {rest:?}"),
            });
        }
    }
    Ok(TestStep::ExpectEquivalent {
        expected: expected.to_owned(),
        threshold,
        message,
    })
}

/// `<path> == <value>` or `<path> exists`.
fn parse_expect_state(payload: &str, line: usize) -> Result<TestStep, SuiteError> {
    let (path, matcher) = if let Some((path, value)) = payload.split_once(" == ") {
        (
            path.trim(),
            StateMatcher::Equals(StateValue::parse(value.trim())),
        )
    } else {
        match payload.split_whitespace().collect::<Vec<_>>().as_slice() {
            [path, "exists"] => (*path, StateMatcher::Exists),
            _ => {
                return Err(SuiteError::ParseError {
                    line,
                    detail: format!("expected '<path> == <value>' or '<path> exists', got {payload:?}"),
                });
            }
        }
    };
    if path.is_empty() || path.split('.').any(str::is_empty) {
        return Err(SuiteError::ParseError {
            line,
            detail: format!("malformed state path {path:?}"),
        });
    }
    Ok(TestStep::ExpectState {
        path: path.to_owned(),
        matcher,
    })
}

fn validate_case(case: &TestCase) -> Result<(), SuiteError> {
    if case.steps.is_empty() {
        return Err(SuiteError::ValidationError {
            case: case.name.clone(),
            detail: "case has no steps".to_owned(),
        });
    }
    let first_say = case
        .steps
        .iter()
        .position(|s| matches!(s, TestStep::Say { .. }));
    let first_expect = case
        .steps
        .iter()
        .position(|s| !matches!(s, TestStep::Say { .. }));
    match (first_say, first_expect) {
        (None, Some(_)) => Err(SuiteError::ValidationError {
            case: case.name.clone(),
            detail: "expectation without any say step".to_owned(),
        }),
        (Some(s), Some(e)) if e < s => Err(SuiteError::ValidationError {
            case: case.name.clone(),
            detail: "expectation precedes the first say step".to_owned(),
        }),
        _ => Ok(()),
    }
}
