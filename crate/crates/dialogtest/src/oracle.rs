//! Semantic verdicts: utterance equivalence, state assertions, and
//! dialog breakdown classification.
//!
//! The oracle owns two registries. Similarity strategies are pluggable
//! scorers keyed by id; `avg-embedding-cosine` (cosine of averaged token
//! vectors) is built in and is the default. Models are word-vector
//! tables keyed by name. Which strategy and model judge a comparison is
//! taken from the [`DialogContext`], never global state.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::adapter::Transcript;
use crate::context::{DialogContext, DEFAULT_STRATEGY_ID};
use crate::embedding::{cosine, VectorError, WordVectorModel};
use crate::state::{MalformedPath, StateDoc, StateNode, StateValue};
use crate::utterance::{EncodeError, Utterance};

#[derive(Debug, PartialEq, Error)]
pub enum OracleError {
    #[error("unknown similarity strategy {0:?}")]
    UnknownStrategy(String),
    #[error("unknown model {0:?}")]
    UnknownModel(String),
    #[error("similarity strategy {0:?} is already registered")]
    DuplicateStrategyId(String),
    #[error("cannot encode utterance: {0}")]
    Encode(#[from] EncodeError),
    #[error("vector arithmetic failed: {0}")]
    Vector(#[from] VectorError),
    #[error("transcript has no user utterance to anchor on")]
    EmptyTranscript,
    #[error(transparent)]
    Path(#[from] MalformedPath),
}

/// Tokens each side dropped as out-of-vocabulary while encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SkippedTokens {
    pub actual: usize,
    pub expected: usize,
}

/// Outcome of a single assertion.
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub passed: bool,
    pub score: f64,
    pub threshold: f64,
    pub strategy_id: String,
    pub message: String,
    /// Only meaningful for embedding-backed strategies.
    pub skipped: Option<SkippedTokens>,
}

/// Scores how close `a` is to `b` in meaning, higher is closer. Must be
/// deterministic for fixed inputs.
pub trait SimilarityScorer: Send + Sync {
    fn score(
        &self,
        a: &Utterance,
        b: &Utterance,
        ctx: &DialogContext,
        oracle: &Oracle,
    ) -> Result<f64, OracleError>;
}

struct AvgEmbeddingCosine;

impl SimilarityScorer for AvgEmbeddingCosine {
    fn score(
        &self,
        a: &Utterance,
        b: &Utterance,
        ctx: &DialogContext,
        oracle: &Oracle,
    ) -> Result<f64, OracleError> {
        let model = oracle.model(ctx.model_id())?;
        let ea = a.encode(model)?;
        let eb = b.encode(model)?;
        Ok(cosine(&ea.vector, &eb.vector)?)
    }
}

/// Breakdown taxonomy. `IgnoredQuestion` is the keyword-echo case: the
/// reply borrows content words from the question without answering it;
/// a reply sharing nothing at all is plain `IrrelevantResponse`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BreakdownKind {
    None,
    IrrelevantResponse,
    IgnoredQuestion,
    UnclearIntent,
}

impl BreakdownKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            BreakdownKind::None => "none",
            BreakdownKind::IrrelevantResponse => "irrelevant_response",
            BreakdownKind::IgnoredQuestion => "ignored_question",
            BreakdownKind::UnclearIntent => "unclear_intent",
        }
    }
}

impl fmt::Display for BreakdownKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// What the classifier consulted, for reports and debugging.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BreakdownEvidence {
    pub question: bool,
    pub acknowledgment_only: bool,
    /// Similarity of response to the last user utterance; `None` when
    /// classification ended before scoring.
    pub relevance: Option<f64>,
    pub relevance_threshold: f64,
    pub shared_content_tokens: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BreakdownLabel {
    pub kind: BreakdownKind,
    pub evidence: BreakdownEvidence,
}

/// Word lists the breakdown heuristics consult. All entries are in
/// normalized (lowercase) form.
#[derive(Debug, Clone)]
pub struct BreakdownCues {
    /// Leading tokens that mark an utterance as a question.
    pub question_lead_words: BTreeSet<String>,
    /// A response made only of these counts as a bare acknowledgment.
    pub acknowledgment_words: BTreeSet<String>,
    /// Closed-class words ignored when looking for shared content.
    pub function_words: BTreeSet<String>,
}

fn word_set(words: &[&str]) -> BTreeSet<String> {
    words.iter().map(|w| (*w).to_owned()).collect()
}

impl Default for BreakdownCues {
    fn default() -> Self {
        Self {
            question_lead_words: word_set(&[
                "what", "when", "where", "who", "why", "how", "do", "does", "is", "are",
                "can", "could", "will",
            ]),
            acknowledgment_words: word_set(&["yes", "no", "ok", "okay", "sure", "yeah"]),
            function_words: word_set(&[
                "a", "an", "the", "this", "that", "these", "those", "it", "its", "it's",
                "i", "you", "he", "she", "we", "they", "me", "him", "her", "us", "them",
                "my", "your", "his", "our", "their", "is", "are", "was", "were", "be",
                "been", "am", "do", "does", "did", "will", "would", "can", "could",
                "should", "of", "to", "in", "on", "at", "by", "for", "with", "about",
                "as", "and", "or", "but", "if", "so", "there", "here", "please",
            ]),
        }
    }
}

/// Matcher for one state assertion.
#[derive(Debug, Clone, PartialEq)]
pub enum StateMatcher {
    Equals(StateValue),
    Exists,
}

pub struct Oracle {
    strategies: HashMap<String, Arc<dyn SimilarityScorer>>,
    models: HashMap<String, Arc<WordVectorModel>>,
    cues: BreakdownCues,
}

impl fmt::Debug for Oracle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut strategies: Vec<&str> = self.strategies.keys().map(String::as_str).collect();
        strategies.sort_unstable();
        let mut models: Vec<&str> = self.models.keys().map(String::as_str).collect();
        models.sort_unstable();
        f.debug_struct("Oracle")
            .field("strategies", &strategies)
            .field("models", &models)
            .finish()
    }
}

impl Default for Oracle {
    fn default() -> Self {
        Self::new()
    }
}

impl Oracle {
    pub fn new() -> Self {
        let mut strategies: HashMap<String, Arc<dyn SimilarityScorer>> = HashMap::new();
        strategies.insert(DEFAULT_STRATEGY_ID.to_owned(), Arc::new(AvgEmbeddingCosine));
        Self {
            strategies,
            models: HashMap::new(),
            cues: BreakdownCues::default(),
        }
    }

    /// Registers a scorer under a fresh id; ids are write-once.
    pub fn register_strategy(
        &mut self,
        id: impl Into<String>,
        scorer: Arc<dyn SimilarityScorer>,
    ) -> Result<(), OracleError> {
        let id = id.into();
        if self.strategies.contains_key(&id) {
            return Err(OracleError::DuplicateStrategyId(id));
        }
        self.strategies.insert(id, scorer);
        Ok(())
    }

    pub fn has_strategy(&self, id: &str) -> bool {
        self.strategies.contains_key(id)
    }

    /// Registers a model under its own name, replacing any previous
    /// model of that name.
    pub fn register_model(&mut self, model: WordVectorModel) {
        self.models.insert(model.name().to_owned(), Arc::new(model));
    }

    pub fn model(&self, id: &str) -> Result<&WordVectorModel, OracleError> {
        self.models
            .get(id)
            .map(Arc::as_ref)
            .ok_or_else(|| OracleError::UnknownModel(id.to_owned()))
    }

    /// Replaces the breakdown cue lists.
    pub fn set_breakdown_cues(&mut self, cues: BreakdownCues) {
        self.cues = cues;
    }

    pub fn breakdown_cues(&self) -> &BreakdownCues {
        &self.cues
    }

    /// Scores two utterances under the context's strategy and model.
    pub fn similarity(
        &self,
        a: &Utterance,
        b: &Utterance,
        ctx: &DialogContext,
    ) -> Result<f64, OracleError> {
        let scorer = self
            .strategies
            .get(ctx.strategy_id())
            .ok_or_else(|| OracleError::UnknownStrategy(ctx.strategy_id().to_owned()))?;
        scorer.score(a, b, ctx, self)
    }

    /// Pass iff similarity(actual, expected) clears the context's
    /// equivalence threshold.
    pub fn assert_equivalent(
        &self,
        actual: &Utterance,
        expected: &Utterance,
        ctx: &DialogContext,
        message: &str,
    ) -> Result<Verdict, OracleError> {
        let score = self.similarity(actual, expected, ctx)?;
        let threshold = ctx.equivalence_threshold();
        let skipped = if ctx.strategy_id() == DEFAULT_STRATEGY_ID {
            let model = self.model(ctx.model_id())?;
            let ea = actual.encode(model)?;
            let ee = expected.encode(model)?;
            Some(SkippedTokens {
                actual: ea.skipped_tokens,
                expected: ee.skipped_tokens,
            })
        } else {
            None
        };
        Ok(Verdict {
            passed: score >= threshold,
            score,
            threshold,
            strategy_id: ctx.strategy_id().to_owned(),
            message: message.to_owned(),
            skipped,
        })
    }

    /// Labels the latest response against the last user utterance.
    ///
    /// Cascade, first match wins:
    /// 1. the user asked a question and the response is nothing but
    ///    acknowledgment words → unclear intent
    /// 2. question, relevance below threshold, and the response shares
    ///    at least one content token with the question → ignored
    ///    question (keywords echoed, question unanswered)
    /// 3. relevance below threshold → irrelevant response
    /// 4. otherwise no breakdown
    pub fn classify_breakdown(
        &self,
        transcript: &Transcript,
        response: &Utterance,
        ctx: &DialogContext,
    ) -> Result<BreakdownLabel, OracleError> {
        let anchor = transcript.last_user().ok_or(OracleError::EmptyTranscript)?;
        let question = self.is_question(anchor);
        let acknowledgment_only = response
            .tokens()
            .iter()
            .all(|t| self.cues.acknowledgment_words.contains(t));
        let mut evidence = BreakdownEvidence {
            question,
            acknowledgment_only,
            relevance: None,
            relevance_threshold: ctx.relevance_threshold(),
            shared_content_tokens: Vec::new(),
        };
        if question && acknowledgment_only {
            return Ok(BreakdownLabel {
                kind: BreakdownKind::UnclearIntent,
                evidence,
            });
        }
        let relevance = self.similarity(response, anchor, ctx)?;
        evidence.relevance = Some(relevance);
        evidence.shared_content_tokens = self.shared_content_tokens(response, anchor);
        let below = relevance < ctx.relevance_threshold();
        let kind = if question && below && !evidence.shared_content_tokens.is_empty() {
            BreakdownKind::IgnoredQuestion
        } else if below {
            BreakdownKind::IrrelevantResponse
        } else {
            BreakdownKind::None
        };
        Ok(BreakdownLabel { kind, evidence })
    }

    fn is_question(&self, u: &Utterance) -> bool {
        if u.raw().trim_end().ends_with('?') {
            return true;
        }
        u.tokens()
            .first()
            .is_some_and(|t| self.cues.question_lead_words.contains(t))
    }

    fn shared_content_tokens(&self, response: &Utterance, anchor: &Utterance) -> Vec<String> {
        let anchor_tokens: BTreeSet<&str> = anchor.tokens().iter().map(String::as_str).collect();
        let shared: BTreeSet<&str> = response
            .tokens()
            .iter()
            .map(String::as_str)
            .filter(|t| anchor_tokens.contains(t) && !self.cues.function_words.contains(*t))
            .collect();
        shared.into_iter().map(str::to_owned).collect()
    }
}

/// Pass/fail over a resolved state path. Exists: any node there. Equals:
/// a leaf with the same typed value.
pub fn assert_state(
    doc: &StateDoc,
    path: &str,
    matcher: &StateMatcher,
) -> Result<Verdict, OracleError> {
    let node = doc.resolve(path)?;
    let (passed, message) = match matcher {
        StateMatcher::Exists => (
            node.is_some(),
            match node {
                Some(_) => format!("state path {path:?} exists"),
                None => format!("state path {path:?} is absent"),
            },
        ),
        StateMatcher::Equals(want) => match node {
            Some(StateNode::Leaf(got)) if got == want => {
                (true, format!("state {path:?} == {want}"))
            }
            Some(StateNode::Leaf(got)) => (
                false,
                format!("state {path:?} is {got}, expected {want}"),
            ),
            Some(StateNode::Branch(_)) => (
                false,
                format!("state {path:?} is a branch, expected {want}"),
            ),
            None => (
                false,
                format!("state path {path:?} is absent, expected {want}"),
            ),
        },
    };
    Ok(Verdict {
        passed,
        score: if passed { 1.0 } else { 0.0 },
        threshold: 1.0,
        strategy_id: "state-path".to_owned(),
        message,
        skipped: None,
    })
}
