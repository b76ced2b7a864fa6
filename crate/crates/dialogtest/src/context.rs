//! Run configuration: which model and strategy judge equivalence, the
//! thresholds, pacing, and session limits. Built through a validating
//! builder; a constructed context is immutable.

use std::collections::BTreeMap;
use std::path::PathBuf;

use thiserror::Error;

pub const DEFAULT_STRATEGY_ID: &str = "avg-embedding-cosine";
pub const DEFAULT_EQUIVALENCE_THRESHOLD: f64 = 0.5;
pub const DEFAULT_RELEVANCE_THRESHOLD: f64 = 0.3;
pub const DEFAULT_WORDS_PER_SECOND: f64 = 2.5;
pub const DEFAULT_MAX_TURNS: usize = 50;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ContextError {
    #[error("no model configured")]
    MissingModel,
    #[error("threshold {0} is outside [-1, 1]")]
    InvalidThreshold(f64),
    #[error("words-per-second rate {0} must be positive and finite")]
    InvalidRate(f64),
    #[error("max turns must be at least 1")]
    InvalidMaxTurns,
}

/// Immutable snapshot of everything an assertion needs to know about
/// the run it happens in.
#[derive(Debug, Clone, PartialEq)]
pub struct DialogContext {
    model_id: String,
    strategy_id: String,
    equivalence_threshold: f64,
    relevance_threshold: f64,
    words_per_second: f64,
    allow_confirmations: bool,
    wake_phrase: Option<String>,
    dataset_paths: BTreeMap<String, PathBuf>,
    max_turns: usize,
}

impl DialogContext {
    pub fn builder() -> ContextBuilder {
        ContextBuilder::default()
    }

    /// Builder pre-seeded with this context's fields, for derived
    /// contexts that override a subset.
    pub fn to_builder(&self) -> ContextBuilder {
        ContextBuilder {
            model_id: Some(self.model_id.clone()),
            strategy_id: Some(self.strategy_id.clone()),
            equivalence_threshold: Some(self.equivalence_threshold),
            relevance_threshold: Some(self.relevance_threshold),
            words_per_second: Some(self.words_per_second),
            allow_confirmations: Some(self.allow_confirmations),
            wake_phrase: self.wake_phrase.clone(),
            dataset_paths: self.dataset_paths.clone(),
            max_turns: Some(self.max_turns),
        }
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn strategy_id(&self) -> &str {
        &self.strategy_id
    }

    pub fn equivalence_threshold(&self) -> f64 {
        self.equivalence_threshold
    }

    pub fn relevance_threshold(&self) -> f64 {
        self.relevance_threshold
    }

    pub fn words_per_second(&self) -> f64 {
        self.words_per_second
    }

    pub fn allow_confirmations(&self) -> bool {
        self.allow_confirmations
    }

    pub fn wake_phrase(&self) -> Option<&str> {
        self.wake_phrase.as_deref()
    }

    pub fn dataset(&self, id: &str) -> Option<&PathBuf> {
        self.dataset_paths.get(id)
    }

    pub fn max_turns(&self) -> usize {
        self.max_turns
    }
}

#[derive(Debug, Clone, Default)]
pub struct ContextBuilder {
    model_id: Option<String>,
    strategy_id: Option<String>,
    equivalence_threshold: Option<f64>,
    relevance_threshold: Option<f64>,
    words_per_second: Option<f64>,
    allow_confirmations: Option<bool>,
    wake_phrase: Option<String>,
    dataset_paths: BTreeMap<String, PathBuf>,
    max_turns: Option<usize>,
}

impl ContextBuilder {
    pub fn with_model(mut self, id: impl Into<String>) -> Self {
        self.model_id = Some(id.into());
        self
    }

    pub fn with_strategy(mut self, id: impl Into<String>) -> Self {
        self.strategy_id = Some(id.into());
        self
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.equivalence_threshold = Some(threshold);
        self
    }

    pub fn with_relevance_threshold(mut self, threshold: f64) -> Self {
        self.relevance_threshold = Some(threshold);
        self
    }

    pub fn with_words_per_second(mut self, rate: f64) -> Self {
        self.words_per_second = Some(rate);
        self
    }

    pub fn with_confirmations(mut self, allow: bool) -> Self {
        self.allow_confirmations = Some(allow);
        self
    }

    pub fn with_wake_phrase(mut self, phrase: impl Into<String>) -> Self {
        self.wake_phrase = Some(phrase.into());
        self
    }

    pub fn with_dataset(mut self, id: impl Into<String>, path: impl Into<PathBuf>) -> Self {
        self.dataset_paths.insert(id.into(), path.into());
        self
    }

    pub fn with_max_turns(mut self, limit: usize) -> Self {
        self.max_turns = Some(limit);
        self
    }

    /// Validates and freezes the configuration. A model is required;
    /// everything else has a default.
    pub fn build(self) -> Result<DialogContext, ContextError> {
        let model_id = self.model_id.ok_or(ContextError::MissingModel)?;
        let equivalence_threshold = self
            .equivalence_threshold
            .unwrap_or(DEFAULT_EQUIVALENCE_THRESHOLD);
        let relevance_threshold = self
            .relevance_threshold
            .unwrap_or(DEFAULT_RELEVANCE_THRESHOLD);
        for t in [equivalence_threshold, relevance_threshold] {
            if !(-1.0..=1.0).contains(&t) {
                return Err(ContextError::InvalidThreshold(t));
            }
        }
        let words_per_second = self.words_per_second.unwrap_or(DEFAULT_WORDS_PER_SECOND);
        if !(words_per_second.is_finite() && words_per_second > 0.0) {
            return Err(ContextError::InvalidRate(words_per_second));
        }
        let max_turns = self.max_turns.unwrap_or(DEFAULT_MAX_TURNS);
        if max_turns == 0 {
            return Err(ContextError::InvalidMaxTurns);
        }
        Ok(DialogContext {
            model_id,
            strategy_id: self
                .strategy_id
                .unwrap_or_else(|| DEFAULT_STRATEGY_ID.to_owned()),
            equivalence_threshold,
            relevance_threshold,
            words_per_second,
            allow_confirmations: self.allow_confirmations.unwrap_or(true),
            wake_phrase: self.wake_phrase,
            dataset_paths: self.dataset_paths,
            max_turns,
        })
    }
}
