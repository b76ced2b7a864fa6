//! Word-vector models and the arithmetic behind semantic comparison.
//!
//! Models load from the two common plain-text formats: `w2v-text` (count
//! and dimension on a header line, then one `token c1 .. cn` row per line)
//! and `glove-text` (rows only, dimension taken from the first row).
//! Lookup is exact: no casefolding, no fallback for unknown tokens.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

/// Magnitudes below this are treated as zero when computing cosine.
pub const ZERO_MAGNITUDE: f64 = 1e-12;

/// Dense vector with at least one component, every component finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(components: Vec<f64>) -> Result<Self, VectorError> {
        if components.is_empty() {
            return Err(VectorError::NoComponents);
        }
        if !components.iter().all(|c| c.is_finite()) {
            return Err(VectorError::NonFiniteComponent);
        }
        Ok(Self(components))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn components(&self) -> &[f64] {
        &self.0
    }

    pub fn magnitude(&self) -> f64 {
        self.0.iter().map(|c| c * c).sum::<f64>().sqrt()
    }
}

/// Which argument of a two-vector operation an error refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Left => "left",
            Side::Right => "right",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VectorError {
    #[error("empty vector sequence")]
    EmptyInput,
    #[error("vector must have at least one component")]
    NoComponents,
    #[error("vector component is not finite")]
    NonFiniteComponent,
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("zero-magnitude vector on the {0} side")]
    ZeroVector(Side),
}

/// Component-wise mean of one or more equal-dimension vectors.
pub fn average<'a, I>(vectors: I) -> Result<Vector, VectorError>
where
    I: IntoIterator<Item = &'a Vector>,
{
    let mut it = vectors.into_iter();
    let first = it.next().ok_or(VectorError::EmptyInput)?;
    let mut sum = first.components().to_vec();
    let mut count = 1usize;
    for v in it {
        if v.dim() != sum.len() {
            return Err(VectorError::DimensionMismatch {
                left: sum.len(),
                right: v.dim(),
            });
        }
        for (s, c) in sum.iter_mut().zip(v.components()) {
            *s += c;
        }
        count += 1;
    }
    let n = count as f64;
    for s in &mut sum {
        *s /= n;
    }
    Vector::new(sum)
}

/// Cosine similarity, clamped to [-1, 1] against rounding drift.
pub fn cosine(a: &Vector, b: &Vector) -> Result<f64, VectorError> {
    if a.dim() != b.dim() {
        return Err(VectorError::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    let ma = a.magnitude();
    if ma < ZERO_MAGNITUDE {
        return Err(VectorError::ZeroVector(Side::Left));
    }
    let mb = b.magnitude();
    if mb < ZERO_MAGNITUDE {
        return Err(VectorError::ZeroVector(Side::Right));
    }
    let dot: f64 = a
        .components()
        .iter()
        .zip(b.components())
        .map(|(x, y)| x * y)
        .sum();
    Ok((dot / (ma * mb)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelFormat {
    W2vText,
    GloveText,
}

impl ModelFormat {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelFormat::W2vText => "w2v-text",
            ModelFormat::GloveText => "glove-text",
        }
    }
}

impl fmt::Display for ModelFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "w2v-text" => Ok(ModelFormat::W2vText),
            "glove-text" => Ok(ModelFormat::GloveText),
            other => Err(format!(
                "unknown model format {other:?} (expected w2v-text or glove-text)"
            )),
        }
    }
}

#[derive(Debug, Error)]
pub enum ModelLoadError {
    #[error("cannot read {path}: {source}")]
    FileUnreadable {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {detail}")]
    MalformedLine { line: usize, detail: String },
    #[error("line {0}: row dimension differs from the model dimension")]
    DimensionMismatch(usize),
    #[error("model contains no entries")]
    EmptyModel,
}

impl ModelLoadError {
    /// Line number the error points at, if any.
    pub fn line(&self) -> Option<usize> {
        match self {
            ModelLoadError::MalformedLine { line, .. } => Some(*line),
            ModelLoadError::DimensionMismatch(line) => Some(*line),
            _ => None,
        }
    }
}

/// In-memory token-to-vector table. All vectors share one dimension and
/// the table is never empty.
#[derive(Debug, Clone)]
pub struct WordVectorModel {
    name: String,
    dim: usize,
    entries: HashMap<String, Vector>,
    duplicate_rows: usize,
}

impl WordVectorModel {
    /// Builds a model from explicit entries; the fixture path for tests
    /// and embedded vocabularies. Later duplicates of a token are dropped.
    pub fn from_entries<I, T>(name: impl Into<String>, entries: I) -> Result<Self, ModelLoadError>
    where
        I: IntoIterator<Item = (T, Vec<f64>)>,
        T: Into<String>,
    {
        let mut map = HashMap::new();
        let mut dim = None;
        let mut duplicates = 0usize;
        for (row, (token, components)) in entries.into_iter().enumerate() {
            let line = row + 1;
            let vector = Vector::new(components).map_err(|e| ModelLoadError::MalformedLine {
                line,
                detail: e.to_string(),
            })?;
            match dim {
                None => dim = Some(vector.dim()),
                Some(d) if d != vector.dim() => {
                    return Err(ModelLoadError::DimensionMismatch(line));
                }
                Some(_) => {}
            }
            match map.entry(token.into()) {
                std::collections::hash_map::Entry::Occupied(_) => duplicates += 1,
                std::collections::hash_map::Entry::Vacant(slot) => {
                    slot.insert(vector);
                }
            }
        }
        if map.is_empty() {
            return Err(ModelLoadError::EmptyModel);
        }
        Ok(Self {
            name: name.into(),
            dim: dim.expect("non-empty model has a dimension"),
            entries: map,
            duplicate_rows: duplicates,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Rows dropped during load because an earlier row claimed the token.
    pub fn duplicate_rows(&self) -> usize {
        self.duplicate_rows
    }

    /// Exact-match lookup; `None` for out-of-vocabulary tokens.
    pub fn lookup(&self, token: &str) -> Option<&Vector> {
        self.entries.get(token)
    }

    /// Unordered view of every entry.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &Vector)> {
        self.entries.iter().map(|(t, v)| (t.as_str(), v))
    }
}

/// Loads a model file; the model name is the file stem.
pub fn load_model(path: &Path, format: ModelFormat) -> Result<WordVectorModel, ModelLoadError> {
    let bytes = fs::read(path).map_err(|source| ModelLoadError::FileUnreadable {
        path: path.to_path_buf(),
        source,
    })?;
    let text = match String::from_utf8(bytes) {
        Ok(t) => t,
        Err(e) => {
            let line = text_line_of_offset(e.as_bytes(), e.utf8_error().valid_up_to());
            return Err(ModelLoadError::MalformedLine {
                line,
                detail: "invalid UTF-8".to_owned(),
            });
        }
    };
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "model".to_owned());
    parse_model_text(&text, name, format)
}

fn text_line_of_offset(bytes: &[u8], offset: usize) -> usize {
    bytes[..offset].iter().filter(|b| **b == b'\n').count() + 1
}

/// Parses model text that is already in memory.
pub fn parse_model_text(
    text: &str,
    name: impl Into<String>,
    format: ModelFormat,
) -> Result<WordVectorModel, ModelLoadError> {
    let name = name.into();
    let mut lines = text.lines().enumerate();
    let mut declared: Option<(usize, usize)> = None;
    if format == ModelFormat::W2vText {
        let (_, header) = lines.next().ok_or(ModelLoadError::MalformedLine {
            line: 1,
            detail: "missing header line".to_owned(),
        })?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let parsed = match fields.as_slice() {
            [count, dim] => count
                .parse::<usize>()
                .ok()
                .zip(dim.parse::<usize>().ok()),
            _ => None,
        };
        let (count, dim) = parsed.ok_or_else(|| ModelLoadError::MalformedLine {
            line: 1,
            detail: "header must be two integers: row count and dimension".to_owned(),
        })?;
        if dim == 0 {
            return Err(ModelLoadError::MalformedLine {
                line: 1,
                detail: "declared dimension must be at least 1".to_owned(),
            });
        }
        declared = Some((count, dim));
    }

    let mut entries: HashMap<String, Vector> = HashMap::new();
    let mut dim = declared.map(|(_, d)| d);
    let mut duplicates = 0usize;
    let mut rows = 0usize;
    for (idx, raw) in lines {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let mut parts = raw.split_whitespace();
        let token = parts.next().expect("non-blank line has a first field");
        let mut components = Vec::new();
        for part in parts {
            let value: f64 = part.parse().map_err(|_| ModelLoadError::MalformedLine {
                line,
                detail: format!("non-numeric component {part:?}"),
            })?;
            if !value.is_finite() {
                return Err(ModelLoadError::MalformedLine {
                    line,
                    detail: format!("non-finite component {part:?}"),
                });
            }
            components.push(value);
        }
        if components.is_empty() {
            return Err(ModelLoadError::MalformedLine {
                line,
                detail: "row has a token but no components".to_owned(),
            });
        }
        match dim {
            None => dim = Some(components.len()),
            Some(d) if d != components.len() => {
                return Err(ModelLoadError::DimensionMismatch(line));
            }
            Some(_) => {}
        }
        rows += 1;
        if entries.contains_key(token) {
            // keep-first: the earlier row wins
            duplicates += 1;
        } else {
            let vector = Vector(components);
            entries.insert(token.to_owned(), vector);
        }
    }

    if let Some((count, _)) = declared {
        if rows != count {
            return Err(ModelLoadError::MalformedLine {
                line: 1,
                detail: format!("header declares {count} rows, found {rows}"),
            });
        }
    }
    if entries.is_empty() {
        return Err(ModelLoadError::EmptyModel);
    }
    let dim = dim.expect("non-empty model has a dimension");
    if duplicates > 0 {
        log::warn!("model {name:?}: kept first of {duplicates} duplicated token row(s)");
    }
    Ok(WordVectorModel {
        name,
        dim,
        entries,
        duplicate_rows: duplicates,
    })
}
