//! Utterances: raw text plus its normalized token view, lazily encodable
//! to a vector through a word-vector model, with wake-phrase transforms
//! for robustness testing.

use std::sync::Mutex;

use thiserror::Error;

use crate::embedding::{average, Vector, WordVectorModel};

/// Lowercases, maps every char that is not a letter, digit, or apostrophe
/// to a space, and splits on whitespace. Idempotent on its own output.
pub fn normalize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .chars()
        .map(|c| if keeps_in_token(c) { c } else { ' ' })
        .collect::<String>()
        .split_whitespace()
        .map(str::to_owned)
        .collect()
}

fn keeps_in_token(c: char) -> bool {
    c.is_alphanumeric() || c == '\''
}

/// Vector form of an utterance under one model.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoding {
    pub vector: Vector,
    /// Tokens dropped because the model had no entry for them.
    pub skipped_tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error("utterance normalizes to no tokens")]
    NoTokens,
    #[error("every token is out of vocabulary for model {model:?}")]
    AllTokensOutOfVocabulary { model: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WakeError {
    #[error("utterance does not begin with wake phrase {wake:?}")]
    WakePhraseAbsent { wake: String },
    #[error("repetition count must be at least 2, got {0}")]
    InvalidRepetitions(u32),
}

#[derive(Debug, Clone)]
struct CachedEncoding {
    model: String,
    encoding: Encoding,
}

/// One unit of dialog. Tokens are derived once at construction; the
/// encoding is computed on first use and cached per model name.
#[derive(Debug)]
pub struct Utterance {
    raw: String,
    tokens: Vec<String>,
    cache: Mutex<Option<CachedEncoding>>,
}

impl Utterance {
    pub fn new(raw: impl Into<String>) -> Self {
        let raw = raw.into();
        let tokens = normalize(&raw);
        Self {
            raw,
            tokens,
            cache: Mutex::new(None),
        }
    }

    pub fn raw(&self) -> &str {
        &self.raw
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Average of the in-vocabulary token vectors. Unknown tokens are
    /// skipped and counted; an utterance with tokens but none in
    /// vocabulary is an error, never a silent zero.
    pub fn encode(&self, model: &WordVectorModel) -> Result<Encoding, EncodeError> {
        if self.tokens.is_empty() {
            return Err(EncodeError::NoTokens);
        }
        {
            let cache = self.cache.lock().expect("encoding cache lock");
            if let Some(hit) = cache.as_ref() {
                if hit.model == model.name() {
                    return Ok(hit.encoding.clone());
                }
            }
        }
        let vectors: Vec<&Vector> = self
            .tokens
            .iter()
            .filter_map(|t| model.lookup(t))
            .collect();
        if vectors.is_empty() {
            return Err(EncodeError::AllTokensOutOfVocabulary {
                model: model.name().to_owned(),
            });
        }
        let skipped = self.tokens.len() - vectors.len();
        let vector = average(vectors).expect("model vectors share one dimension");
        let encoding = Encoding {
            vector,
            skipped_tokens: skipped,
        };
        *self.cache.lock().expect("encoding cache lock") = Some(CachedEncoding {
            model: model.name().to_owned(),
            encoding: encoding.clone(),
        });
        Ok(encoding)
    }

    /// Replaces a leading wake phrase with `repetitions` copies of it,
    /// separated by single spaces; the rest of the text is untouched.
    /// Mirrors the assistant-invocation double-trigger defect class.
    pub fn perturb_duplicate_wake(
        &self,
        wake_phrase: &str,
        repetitions: u32,
    ) -> Result<Utterance, WakeError> {
        if repetitions < 2 {
            return Err(WakeError::InvalidRepetitions(repetitions));
        }
        let trimmed = self.raw.trim_start();
        let rest = strip_prefix_ci(trimmed, wake_phrase).ok_or_else(|| {
            WakeError::WakePhraseAbsent {
                wake: wake_phrase.to_owned(),
            }
        })?;
        let mut out = String::with_capacity(self.raw.len() + wake_phrase.len());
        for i in 0..repetitions {
            if i > 0 {
                out.push(' ');
            }
            out.push_str(wake_phrase);
        }
        out.push_str(rest);
        Ok(Utterance::new(out))
    }

    /// Removes every leading repetition of the wake phrase, along with
    /// the whitespace and punctuation separating repetitions from each
    /// other and from the remaining text. Without a leading wake phrase
    /// the utterance is returned unchanged. Idempotent.
    pub fn strip_wake(&self, wake_phrase: &str) -> Utterance {
        let mut rest = self.raw.as_str();
        let mut matched = false;
        loop {
            let probe = if matched {
                rest.trim_start_matches(|c: char| !keeps_in_token(c))
            } else {
                rest.trim_start()
            };
            match strip_prefix_ci(probe, wake_phrase) {
                Some(after) => {
                    rest = after;
                    matched = true;
                }
                None => {
                    return if matched {
                        Utterance::new(rest.trim_start_matches(|c: char| !keeps_in_token(c)))
                    } else {
                        Utterance::new(self.raw.clone())
                    };
                }
            }
        }
    }
}

impl Clone for Utterance {
    fn clone(&self) -> Self {
        Self {
            raw: self.raw.clone(),
            tokens: self.tokens.clone(),
            cache: Mutex::new(self.cache.lock().expect("encoding cache lock").clone()),
        }
    }
}

impl PartialEq for Utterance {
    fn eq(&self, other: &Self) -> bool {
        self.raw == other.raw
    }
}

impl Eq for Utterance {}

/// Case-insensitive prefix strip; `None` when `s` does not start with
/// `prefix` or the prefix is empty.
fn strip_prefix_ci<'a>(s: &'a str, prefix: &str) -> Option<&'a str> {
    if prefix.is_empty() {
        return None;
    }
    let mut offset = 0usize;
    let mut sc = s.char_indices();
    for p in prefix.chars() {
        let (i, c) = sc.next()?;
        if !chars_eq_ci(c, p) {
            return None;
        }
        offset = i + c.len_utf8();
    }
    Some(&s[offset..])
}

fn chars_eq_ci(a: char, b: char) -> bool {
    a == b || a.to_lowercase().eq(b.to_lowercase())
}
