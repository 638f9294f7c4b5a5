//! Built-in synthetic spaces and corpora.
//!
//! The verification suite and the test batteries need small spaces with
//! known geometry. These generators are deterministic: the same arguments
//! always produce the same space, so frozen expectations in tests stay
//! valid.

use crate::embedding_store::{EmbeddingMatrix, MetricSpace, Vocabulary};
use crate::rng::RandomSource;

/// Three words on a line: a=0, b=1, c=5. Small enough to check selection
/// probabilities by hand; at γ=2 the candidate list of `a` is {a, b} and
/// `c` is isolated.
pub fn line_space() -> MetricSpace {
    space_1d(&[("a", 0.0), ("b", 1.0), ("c", 5.0)])
}

/// Three words on a line at 0, 0.1, and 1.1. The outer pair sits exactly
/// distance 1.1 apart while the inner pair is 0.1 apart, so candidate
/// lists at γ=1 disagree about the third word between nearby inputs. This
/// is the space where a broken fallback weight actually shows up as a
/// privacy violation, which makes it the canary for mutation tests.
pub fn near_pair_space() -> MetricSpace {
    space_1d(&[("a", 0.0), ("b", 0.1), ("c", 1.1)])
}

fn space_1d(words: &[(&str, f64)]) -> MetricSpace {
    let vocabulary =
        Vocabulary::new(words.iter().map(|(w, _)| (*w).to_string()).collect()).expect("valid");
    let matrix = EmbeddingMatrix::new(1, words.iter().map(|(_, x)| *x).collect()).expect("valid");
    MetricSpace::euclidean(vocabulary, matrix).expect("valid")
}

/// Random space with `n` words named w0000, w0001, ... and components
/// uniform in [-scale/2, scale/2]^dim.
pub fn random_space(seed: u64, n: usize, dim: usize, scale: f64) -> MetricSpace {
    let mut rng = RandomSource::new(seed).substream(0xE);
    let words = (0..n).map(|i| format!("w{i:04}")).collect();
    let data = (0..n * dim)
        .map(|_| (rng.uniform_open01() - 0.5) * scale)
        .collect();
    MetricSpace::euclidean(
        Vocabulary::new(words).expect("generated words are unique"),
        EmbeddingMatrix::new(dim, data).expect("generated components are finite"),
    )
    .expect("row count matches by construction")
}

/// Random corpus of in-vocabulary tokens: `lines` lines with 1 to
/// `max_line_len` tokens each, drawn uniformly from the vocabulary.
pub fn random_corpus(
    seed: u64,
    vocabulary: &Vocabulary,
    lines: usize,
    max_line_len: usize,
) -> Vec<String> {
    assert!(max_line_len >= 1);
    let mut rng = RandomSource::new(seed).substream(0xC);
    (0..lines)
        .map(|_| {
            let len = 1 + rng.uniform_index(max_line_len as u64) as usize;
            (0..len)
                .map(|_| {
                    let id = rng.uniform_index(vocabulary.len() as u64) as usize;
                    vocabulary.words()[id].clone()
                })
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect()
}
