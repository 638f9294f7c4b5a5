//! Vocabulary, embedding matrix, and the metric over words.
//!
//! The word domain is a finite set W with an embedding φ : W → R^n; the
//! distance between words is the distance between their vectors. Privacy
//! guarantees downstream are stated relative to this metric, so the space
//! validates its inputs once (finite components, consistent dimension,
//! bijective word ↔ id mapping) and everything later can rely on it.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Dense 0-based word identifier. Ids index rows of the embedding matrix
/// and stay stable for the lifetime of the vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WordId(pub u32);

impl WordId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for WordId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.0, f)
    }
}

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("embedding input is empty")]
    EmptyInput,
    #[error("line {line}: expected {expected} vector components, found {found}")]
    InconsistentDim {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: cannot parse `{token}` as a finite float")]
    BadComponent { line: usize, token: String },
    #[error("line {line}: word without vector components")]
    MissingVector { line: usize },
    #[error("expected dimension {expected}, file has dimension {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("embedding component is not finite")]
    NonFinite,
    #[error("vector length {len} is not a multiple of dimension {dim}")]
    RaggedMatrix { len: usize, dim: usize },
    #[error("dimension must be at least 1")]
    ZeroDim,
    #[error("vocabulary is empty")]
    EmptyVocabulary,
    #[error("duplicate word `{0}` in vocabulary")]
    DuplicateWord(String),
    #[error("word `{0}` contains whitespace")]
    WhitespaceInWord(String),
    #[error("embedding rows ({rows}) do not match vocabulary size ({words})")]
    RowCountMismatch { rows: usize, words: usize },
    #[error("word id {id} out of range for vocabulary of size {size}")]
    IdOutOfRange { id: u32, size: usize },
    #[error("query point has dimension {found}, space has dimension {expected}")]
    PointDimMismatch { expected: usize, found: usize },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

// --- vocabulary ---

/// Bijective mapping between words and dense ids. Construction order fixes
/// the ids, so serializing and re-parsing a store preserves them.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, WordId>,
}

impl Vocabulary {
    /// Builds a vocabulary from words in id order. Words must be unique,
    /// non-empty after trimming, and free of whitespace (the text formats
    /// used for corpora and embeddings are whitespace-delimited).
    pub fn new(words: Vec<String>) -> Result<Self, EmbeddingError> {
        if words.is_empty() {
            return Err(EmbeddingError::EmptyVocabulary);
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, word) in words.iter().enumerate() {
            if word.is_empty() || word.chars().any(char::is_whitespace) {
                return Err(EmbeddingError::WhitespaceInWord(word.clone()));
            }
            if index.insert(word.clone(), WordId(i as u32)).is_some() {
                return Err(EmbeddingError::DuplicateWord(word.clone()));
            }
        }
        Ok(Self { words, index })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, word: &str) -> Option<WordId> {
        self.index.get(word).copied()
    }

    pub fn word(&self, id: WordId) -> Option<&str> {
        self.words.get(id.index()).map(String::as_str)
    }

    /// All words in id order.
    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn ids(&self) -> impl Iterator<Item = WordId> + '_ {
        (0..self.words.len() as u32).map(WordId)
    }
}

// --- embedding matrix ---

/// Row-major |W| × n matrix of finite f64 components.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self, EmbeddingError> {
        if dim == 0 {
            return Err(EmbeddingError::ZeroDim);
        }
        if data.is_empty() || !data.len().is_multiple_of(dim) {
            return Err(EmbeddingError::RaggedMatrix {
                len: data.len(),
                dim,
            });
        }
        if !data.iter().all(|x| x.is_finite()) {
            return Err(EmbeddingError::NonFinite);
        }
        Ok(Self { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

// --- metric space ---

/// Distance function applied to embedding vectors. Euclidean is the only
/// kind in this version; the enum keeps the index format and the API honest
/// about which metric produced a set of distances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Euclidean,
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricKind::Euclidean => f.write_str("euclidean"),
        }
    }
}

/// Vocabulary + matrix + metric, validated to agree with each other.
/// The fingerprint commits to the dimension and the exact word list so a
/// persisted index can refuse to run against the wrong space.
#[derive(Debug, Clone)]
pub struct MetricSpace {
    kind: MetricKind,
    vocabulary: Vocabulary,
    matrix: EmbeddingMatrix,
    fingerprint: [u8; 32],
}

impl MetricSpace {
    pub fn euclidean(
        vocabulary: Vocabulary,
        matrix: EmbeddingMatrix,
    ) -> Result<Self, EmbeddingError> {
        if matrix.rows() != vocabulary.len() {
            return Err(EmbeddingError::RowCountMismatch {
                rows: matrix.rows(),
                words: vocabulary.len(),
            });
        }
        let fingerprint = fingerprint(&vocabulary, matrix.dim());
        Ok(Self {
            kind: MetricKind::Euclidean,
            vocabulary,
            matrix,
            fingerprint,
        })
    }

    pub fn kind(&self) -> MetricKind {
        self.kind
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    pub fn matrix(&self) -> &EmbeddingMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn len(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocabulary.is_empty()
    }

    /// SHA-256 over (dimension, word count, word list). Two spaces with the
    /// same fingerprint index the same words in the same order.
    pub fn fingerprint(&self) -> &[u8; 32] {
        &self.fingerprint
    }

    pub fn vector(&self, id: WordId) -> Result<&[f64], EmbeddingError> {
        if id.index() >= self.len() {
            return Err(EmbeddingError::IdOutOfRange {
                id: id.0,
                size: self.len(),
            });
        }
        Ok(self.matrix.row(id.index()))
    }

    /// d(a, b) under the space's metric. Symmetric, zero on the diagonal,
    /// and a true metric because it is a norm of the vector difference.
    pub fn distance(&self, a: WordId, b: WordId) -> Result<f64, EmbeddingError> {
        let va = self.vector(a)?;
        let vb = self.vector(b)?;
        Ok(euclidean(va, vb))
    }

    /// Distance from an arbitrary point to a vocabulary word.
    pub fn distance_to_point(&self, point: &[f64], id: WordId) -> Result<f64, EmbeddingError> {
        if point.len() != self.dim() {
            return Err(EmbeddingError::PointDimMismatch {
                expected: self.dim(),
                found: point.len(),
            });
        }
        Ok(euclidean(point, self.vector(id)?))
    }

    /// Largest pairwise distance. O(|W|^2); intended for small spaces and
    /// for picking truncation radii in tests and sweeps.
    pub fn diameter(&self) -> f64 {
        let n = self.len();
        let mut max = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                let d = euclidean(self.matrix.row(i), self.matrix.row(j));
                if d > max {
                    max = d;
                }
            }
        }
        max
    }
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        acc += d * d;
    }
    acc.sqrt()
}

fn fingerprint(vocabulary: &Vocabulary, dim: usize) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update((dim as u32).to_le_bytes());
    hasher.update((vocabulary.len() as u32).to_le_bytes());
    for word in vocabulary.words() {
        hasher.update((word.len() as u32).to_le_bytes());
        hasher.update(word.as_bytes());
    }
    hasher.finalize().into()
}

// --- text format ---

/// Options for [`load_embeddings`].
#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Reject the file unless its vectors have exactly this dimension.
    pub expected_dim: Option<usize>,
    /// Skip a leading `<count> <dim>` header line (word2vec text format).
    pub skip_header: bool,
}

/// Non-fatal issue encountered while loading; the loader keeps going.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadWarning {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for LoadWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

/// Result of [`load_embeddings`].
#[derive(Debug, Clone)]
pub struct LoadedEmbeddings {
    pub vocabulary: Vocabulary,
    pub matrix: EmbeddingMatrix,
    pub warnings: Vec<LoadWarning>,
}

/// Parses whitespace-delimited text embeddings: one `word c1 c2 ... cn` row
/// per line. Blank lines are skipped. The first data row fixes the
/// dimension; later rows must match it. Duplicate words keep the first
/// occurrence and produce a warning rather than an error.
pub fn load_embeddings<R: BufRead>(
    reader: R,
    options: &LoadOptions,
) -> Result<LoadedEmbeddings, EmbeddingError> {
    let mut words: Vec<String> = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut data: Vec<f64> = Vec::new();
    let mut dim: Option<usize> = None;
    let mut warnings = Vec::new();
    let mut skipped_header = false;

    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if options.skip_header && !skipped_header {
            skipped_header = true;
            continue;
        }
        let mut parts = line.split_whitespace();
        let word = parts.next().expect("non-blank line has at least one token");
        let values: Vec<&str> = parts.collect();
        if values.is_empty() {
            return Err(EmbeddingError::MissingVector { line: line_no });
        }
        let expected = match dim {
            Some(d) => d,
            None => {
                let d = values.len();
                if let Some(want) = options.expected_dim {
                    if d != want {
                        return Err(EmbeddingError::DimMismatch {
                            expected: want,
                            found: d,
                        });
                    }
                }
                dim = Some(d);
                d
            }
        };
        if values.len() != expected {
            return Err(EmbeddingError::InconsistentDim {
                line: line_no,
                expected,
                found: values.len(),
            });
        }
        if let Some(first) = seen.get(word) {
            warnings.push(LoadWarning {
                line: line_no,
                message: format!(
                    "duplicate word `{word}` (first seen on line {first}); keeping the first"
                ),
            });
            continue;
        }
        let mut row = Vec::with_capacity(expected);
        for token in &values {
            let v: f64 = token.parse().map_err(|_| EmbeddingError::BadComponent {
                line: line_no,
                token: (*token).to_string(),
            })?;
            if !v.is_finite() {
                return Err(EmbeddingError::BadComponent {
                    line: line_no,
                    token: (*token).to_string(),
                });
            }
            row.push(v);
        }
        seen.insert(word.to_string(), line_no);
        words.push(word.to_string());
        data.extend_from_slice(&row);
    }

    let dim = dim.ok_or(EmbeddingError::EmptyInput)?;
    let vocabulary = Vocabulary::new(words)?;
    let matrix = EmbeddingMatrix::new(dim, data)?;
    Ok(LoadedEmbeddings {
        vocabulary,
        matrix,
        warnings,
    })
}

/// Writes embeddings in the same text format [`load_embeddings`] reads,
/// one word per line in id order. Components use the shortest decimal
/// representation that round-trips, so save → load is lossless.
pub fn write_embeddings<W: Write>(
    vocabulary: &Vocabulary,
    matrix: &EmbeddingMatrix,
    mut sink: W,
) -> Result<(), EmbeddingError> {
    if matrix.rows() != vocabulary.len() {
        return Err(EmbeddingError::RowCountMismatch {
            rows: matrix.rows(),
            words: vocabulary.len(),
        });
    }
    for (i, word) in vocabulary.words().iter().enumerate() {
        write!(sink, "{word}")?;
        for v in matrix.row(i) {
            write!(sink, " {v}")?;
        }
        writeln!(sink)?;
    }
    Ok(())
}
