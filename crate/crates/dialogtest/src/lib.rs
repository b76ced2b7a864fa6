//! Testing toolkit for conversational agents.
//!
//! The crate is organized bottom-up:
//!
//! * [`embedding`]: word-vector models and the vector arithmetic used for
//!   semantic comparison.
//! * [`utterance`]: normalized utterances, their vector encodings, and
//!   wake-phrase transforms.
//! * [`context`]: per-run configuration (model, thresholds, limits) built
//!   through a validating builder.
//! * [`state`]: the tree-shaped agent state document and its single-line
//!   wire form.
//! * [`oracle`]: semantic verdicts (equivalence, state assertions,
//!   breakdown classification).
//! * [`adapter`]: uniform driving of in-process and subprocess agents with
//!   transcript capture.
//! * [`suite`]: the declarative `.dtest` suite file format.
//! * [`runner`]: case execution, reports, and TAP/human rendering.
//! * [`vxml`]: dialog automata extracted from a VoiceXML subset and
//!   coverage-driven suite generation.

pub mod adapter;
pub mod context;
pub mod embedding;
pub mod oracle;
pub mod runner;
pub mod state;
pub mod suite;
pub mod utterance;
pub mod vxml;
