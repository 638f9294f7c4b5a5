//! Exact radius search and precomputed per-word candidate lists.
//!
//! The truncation radius γ splits the vocabulary, for each input word w,
//! into the candidate list L_w = { i : d(w, i) ≤ γ } and its complement.
//! The privatization mechanism only ever needs members with their exact
//! distances plus the complement *count*, so that is all a candidate set
//! stores. A [`TruncationIndex`] precomputes the sets for every word, which
//! turns per-token privatization into an O(1) lookup at serving time.
//!
//! Persisted indexes carry the fingerprint of the space they were built
//! from and refuse to load against any other space.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use byteorder::{LittleEndian, WriteBytesExt};
use rayon::prelude::*;
use thiserror::Error;

use crate::embedding_store::{EmbeddingError, MetricKind, MetricSpace, WordId};

/// Index file magic. The trailing digit is the format version.
pub const INDEX_MAGIC: &[u8; 7] = b"TEMIDX1";

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("gamma must be nonnegative, got {0}")]
    InvalidGamma(f64),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("bad magic: not a TEMIDX1 index file")]
    BadMagic,
    #[error("unsupported metric kind tag {0}")]
    BadMetricKind(u8),
    #[error("index was built from a different space (fingerprint mismatch)")]
    FingerprintMismatch,
    #[error("truncated index stream while reading {0}")]
    Truncated(&'static str),
    #[error("corrupt index: {0}")]
    Corrupt(String),
    #[error("i/o error: {0}")]
    Io(std::io::Error),
}

impl From<std::io::Error> for IndexError {
    fn from(err: std::io::Error) -> Self {
        IndexError::Io(err)
    }
}

// --- candidate sets ---

/// Candidate list of one input word: every vocabulary word within γ, with
/// its exact distance, sorted by (distance, id). Words at exactly γ are
/// members. The input itself is always a member at distance 0, so a set is
/// never empty and selection always has somewhere to fall back.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    input: WordId,
    gamma: f64,
    members: Vec<(WordId, f64)>,
    complement_count: u32,
}

impl CandidateSet {
    /// Validates and assembles a set from parts. `total_words` is |W| of
    /// the space the distances came from.
    pub fn from_parts(
        input: WordId,
        gamma: f64,
        members: Vec<(WordId, f64)>,
        total_words: usize,
    ) -> Result<Self, IndexError> {
        if gamma.is_nan() || gamma < 0.0 {
            return Err(IndexError::InvalidGamma(gamma));
        }
        if members.is_empty() || members.len() > total_words {
            return Err(IndexError::Corrupt(format!(
                "candidate set for word {input} has {} members in a vocabulary of {total_words}",
                members.len()
            )));
        }
        let mut saw_input = false;
        for window in members.windows(2) {
            let (a, b) = (&window[0], &window[1]);
            if (b.1, b.0) <= (a.1, a.0) {
                return Err(IndexError::Corrupt(format!(
                    "candidate set for word {input} is not sorted by (distance, id)"
                )));
            }
        }
        for (id, d) in &members {
            if id.index() >= total_words {
                return Err(IndexError::Corrupt(format!(
                    "candidate set for word {input} references out-of-range id {id}"
                )));
            }
            if !d.is_finite() || *d < 0.0 || *d > gamma {
                return Err(IndexError::Corrupt(format!(
                    "candidate set for word {input} has member {id} at distance {d} outside [0, {gamma}]"
                )));
            }
            saw_input |= *id == input;
        }
        if !saw_input {
            return Err(IndexError::Corrupt(format!(
                "candidate set for word {input} does not contain the input word"
            )));
        }
        let complement_count = (total_words - members.len()) as u32;
        Ok(Self {
            input,
            gamma,
            members,
            complement_count,
        })
    }

    pub fn input(&self) -> WordId {
        self.input
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Members with exact distances, sorted by (distance, id) ascending.
    pub fn members(&self) -> &[(WordId, f64)] {
        &self.members
    }

    pub fn member_count(&self) -> usize {
        self.members.len()
    }

    /// |W| minus the member count: how many words fall outside γ.
    pub fn complement_count(&self) -> u32 {
        self.complement_count
    }

    /// Size of the vocabulary the set was computed over.
    pub fn total_words(&self) -> usize {
        self.members.len() + self.complement_count as usize
    }

    pub fn contains(&self, id: WordId) -> bool {
        self.members.iter().any(|(m, _)| *m == id)
    }

    /// The id of the complement word with the given rank when the
    /// complement of the member set in {0..|W|-1} is sorted ascending.
    /// Lets selection draw uniformly from the complement without ever
    /// materializing it: exactly member_ids[j] - j complement ids precede
    /// member j, so the answer is rank + (number of members below it).
    pub(crate) fn complement_member(&self, rank: u32) -> WordId {
        debug_assert!(rank < self.complement_count);
        let mut member_ids: Vec<u32> = self.members.iter().map(|(id, _)| id.0).collect();
        member_ids.sort_unstable();
        let mut lo = 0usize;
        let mut hi = member_ids.len();
        while lo < hi {
            let mid = (lo + hi) / 2;
            if (member_ids[mid] as u64) <= rank as u64 + mid as u64 {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        WordId(rank + lo as u32)
    }
}

// --- queries ---

/// All words within distance `gamma` of `input`, by exhaustive scan.
pub fn range_query(
    space: &MetricSpace,
    input: WordId,
    gamma: f64,
) -> Result<CandidateSet, IndexError> {
    if gamma.is_nan() || gamma < 0.0 {
        return Err(IndexError::InvalidGamma(gamma));
    }
    let origin = space.vector(input)?;
    let mut members = Vec::new();
    for id in space.vocabulary().ids() {
        let d = crate::embedding_store::euclidean(origin, space.matrix().row(id.index()));
        if d <= gamma {
            members.push((id, d));
        }
    }
    members.sort_unstable_by(|a, b| (a.1, a.0).partial_cmp(&(b.1, b.0)).expect("finite"));
    CandidateSet::from_parts(input, gamma, members, space.len())
}

/// The vocabulary word nearest to an arbitrary point; distance ties go to
/// the smaller id.
pub fn nearest_neighbor(space: &MetricSpace, point: &[f64]) -> Result<WordId, IndexError> {
    if point.len() != space.dim() {
        return Err(IndexError::Embedding(EmbeddingError::PointDimMismatch {
            expected: space.dim(),
            found: point.len(),
        }));
    }
    let mut best = WordId(0);
    let mut best_d = f64::INFINITY;
    for id in space.vocabulary().ids() {
        let d = crate::embedding_store::euclidean(point, space.matrix().row(id.index()));
        if d < best_d {
            best_d = d;
            best = id;
        }
    }
    Ok(best)
}

// --- the index ---

/// Precomputed candidate sets for every word of a space, all at one γ.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncationIndex {
    gamma: f64,
    kind: MetricKind,
    fingerprint: [u8; 32],
    sets: Vec<CandidateSet>,
}

impl TruncationIndex {
    /// Assembles an index from externally produced candidate sets, e.g. an
    /// alternative search backend. Sets must cover ids 0..|W| in order;
    /// every listed member distance is re-verified against the space.
    /// Completeness of each list is the caller's responsibility — a missing
    /// member is not detectable without redoing the full scan.
    pub fn from_candidate_sets(
        space: &MetricSpace,
        gamma: f64,
        sets: Vec<CandidateSet>,
    ) -> Result<Self, IndexError> {
        if gamma.is_nan() || gamma < 0.0 {
            return Err(IndexError::InvalidGamma(gamma));
        }
        if sets.len() != space.len() {
            return Err(IndexError::Corrupt(format!(
                "index has {} sets for a vocabulary of {}",
                sets.len(),
                space.len()
            )));
        }
        for (i, set) in sets.iter().enumerate() {
            if set.input() != WordId(i as u32) {
                return Err(IndexError::Corrupt(format!(
                    "set at position {i} is for word {}",
                    set.input()
                )));
            }
            if set.gamma() != gamma {
                return Err(IndexError::Corrupt(format!(
                    "set for word {i} has gamma {} instead of {gamma}",
                    set.gamma()
                )));
            }
            if set.total_words() != space.len() {
                return Err(IndexError::Corrupt(format!(
                    "set for word {i} covers {} words instead of {}",
                    set.total_words(),
                    space.len()
                )));
            }
            for (id, d) in set.members() {
                let exact = space.distance(set.input(), *id)?;
                if exact != *d {
                    return Err(IndexError::Corrupt(format!(
                        "set for word {i} stores d({i},{id})={d}, space says {exact}"
                    )));
                }
            }
        }
        Ok(Self {
            gamma,
            kind: space.kind(),
            fingerprint: *space.fingerprint(),
            sets,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn metric_kind(&self) -> MetricKind {
        self.kind
    }

    /// Number of words covered.
    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn fingerprint(&self) -> &[u8; 32] {
        &self.fingerprint
    }

    pub fn matches_space(&self, space: &MetricSpace) -> bool {
        self.fingerprint == *space.fingerprint() && self.kind == space.kind()
    }

    pub fn candidate_set(&self, word: WordId) -> Option<&CandidateSet> {
        self.sets.get(word.index())
    }

    /// Histogram of candidate-list sizes: size → number of words with a
    /// list of that size.
    pub fn size_histogram(&self) -> BTreeMap<usize, usize> {
        let mut histogram = BTreeMap::new();
        for set in &self.sets {
            *histogram.entry(set.member_count()).or_insert(0) += 1;
        }
        histogram
    }
}

/// Builds the index by running [`range_query`] for every word in parallel.
/// The result is bit-identical to the sequential per-word queries.
pub fn build_index(space: &MetricSpace, gamma: f64) -> Result<TruncationIndex, IndexError> {
    if gamma.is_nan() || gamma < 0.0 {
        return Err(IndexError::InvalidGamma(gamma));
    }
    let ids: Vec<WordId> = space.vocabulary().ids().collect();
    let sets: Result<Vec<CandidateSet>, IndexError> = ids
        .par_iter()
        .map(|id| range_query(space, *id, gamma))
        .collect();
    let sets = sets?;
    Ok(TruncationIndex {
        gamma,
        kind: space.kind(),
        fingerprint: *space.fingerprint(),
        sets,
    })
}

// --- persistence ---
//
// Little-endian layout:
//   magic            7 bytes  "TEMIDX1"
//   metric kind      u8       0 = euclidean
//   fingerprint      32 bytes
//   gamma            f64
//   word count       u32
//   per word, in id order:
//     member count   u32
//     per member:    id u32, distance f64

fn metric_kind_tag(kind: MetricKind) -> u8 {
    match kind {
        MetricKind::Euclidean => 0,
    }
}

fn metric_kind_from_tag(tag: u8) -> Result<MetricKind, IndexError> {
    match tag {
        0 => Ok(MetricKind::Euclidean),
        other => Err(IndexError::BadMetricKind(other)),
    }
}

/// Serializes an index. The layout is fixed and platform-independent.
pub fn save_index<W: Write>(index: &TruncationIndex, mut sink: W) -> Result<(), IndexError> {
    sink.write_all(INDEX_MAGIC)?;
    sink.write_u8(metric_kind_tag(index.kind))?;
    sink.write_all(&index.fingerprint)?;
    sink.write_f64::<LittleEndian>(index.gamma)?;
    sink.write_u32::<LittleEndian>(index.sets.len() as u32)?;
    for set in &index.sets {
        sink.write_u32::<LittleEndian>(set.members.len() as u32)?;
        for (id, d) in &set.members {
            sink.write_u32::<LittleEndian>(id.0)?;
            sink.write_f64::<LittleEndian>(*d)?;
        }
    }
    Ok(())
}

fn read_exact_field<R: Read>(
    source: &mut R,
    buf: &mut [u8],
    field: &'static str,
) -> Result<(), IndexError> {
    source.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            IndexError::Truncated(field)
        } else {
            IndexError::Io(e)
        }
    })
}

/// Deserializes an index and checks it against the space it will serve:
/// magic, metric kind, and fingerprint must all match. Structural
/// invariants of every set are re-validated; stored distances are trusted,
/// since the fingerprint pins the exact word list and dimension.
pub fn load_index<R: Read>(
    mut source: R,
    space: &MetricSpace,
) -> Result<TruncationIndex, IndexError> {
    let mut magic = [0u8; 7];
    read_exact_field(&mut source, &mut magic, "magic")?;
    if &magic != INDEX_MAGIC {
        return Err(IndexError::BadMagic);
    }
    let mut tag = [0u8; 1];
    read_exact_field(&mut source, &mut tag, "metric kind")?;
    let kind = metric_kind_from_tag(tag[0])?;
    let mut fingerprint = [0u8; 32];
    read_exact_field(&mut source, &mut fingerprint, "fingerprint")?;
    if fingerprint != *space.fingerprint() || kind != space.kind() {
        return Err(IndexError::FingerprintMismatch);
    }

    let mut f64buf = [0u8; 8];
    read_exact_field(&mut source, &mut f64buf, "gamma")?;
    let gamma = f64::from_le_bytes(f64buf);
    if !gamma.is_finite() || gamma < 0.0 {
        return Err(IndexError::InvalidGamma(gamma));
    }

    let mut u32buf = [0u8; 4];
    read_exact_field(&mut source, &mut u32buf, "word count")?;
    let words = u32::from_le_bytes(u32buf) as usize;
    if words != space.len() {
        return Err(IndexError::Corrupt(format!(
            "index covers {words} words, space has {}",
            space.len()
        )));
    }

    let mut sets = Vec::with_capacity(words);
    for input in 0..words as u32 {
        read_exact_field(&mut source, &mut u32buf, "member count")?;
        let count = u32::from_le_bytes(u32buf) as usize;
        if count == 0 || count > words {
            return Err(IndexError::Corrupt(format!(
                "word {input} has member count {count}"
            )));
        }
        let mut members = Vec::with_capacity(count);
        for _ in 0..count {
            read_exact_field(&mut source, &mut u32buf, "member id")?;
            let id = u32::from_le_bytes(u32buf);
            read_exact_field(&mut source, &mut f64buf, "member distance")?;
            let d = f64::from_le_bytes(f64buf);
            members.push((WordId(id), d));
        }
        sets.push(CandidateSet::from_parts(
            WordId(input),
            gamma,
            members,
            words,
        )?);
    }
    // Trailing garbage means the stream is not what save_index wrote.
    let mut one = [0u8; 1];
    match source.read(&mut one)? {
        0 => {}
        _ => return Err(IndexError::Corrupt("trailing bytes after index".into())),
    }
    Ok(TruncationIndex {
        gamma,
        kind,
        fingerprint,
        sets,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding_store::{load_embeddings, LoadOptions};
    use crate::synth;

    fn toy_space() -> MetricSpace {
        // a=0, b=1, c=5 on a line.
        synth::line_space()
    }

    #[test]
    fn range_query_on_the_line() {
        let space = toy_space();
        let set = range_query(&space, WordId(0), 2.0).unwrap();
        assert_eq!(
            set.members(),
            &[(WordId(0), 0.0), (WordId(1), 1.0)],
            "a's candidates at gamma=2 are a and b"
        );
        assert_eq!(set.complement_count(), 1);
        let set = range_query(&space, WordId(2), 2.0).unwrap();
        assert_eq!(set.members(), &[(WordId(2), 0.0)]);
        assert_eq!(set.complement_count(), 2);
    }

    #[test]
    fn gamma_zero_keeps_only_the_input() {
        let space = toy_space();
        for id in space.vocabulary().ids() {
            let set = range_query(&space, id, 0.0).unwrap();
            assert_eq!(set.members(), &[(id, 0.0)]);
            assert_eq!(set.complement_count() as usize, space.len() - 1);
        }
    }

    #[test]
    fn boundary_distance_is_included() {
        // b is at distance exactly 1 from a.
        let space = toy_space();
        let set = range_query(&space, WordId(0), 1.0).unwrap();
        assert!(set.contains(WordId(1)));
    }

    #[test]
    fn huge_gamma_covers_everything() {
        let space = toy_space();
        let set = range_query(&space, WordId(1), 1e9).unwrap();
        assert_eq!(set.member_count(), 3);
        assert_eq!(set.complement_count(), 0);
    }

    #[test]
    fn members_are_sorted_by_distance_then_id() {
        let text = "a 0.0\nb 1.0\nc 1.0\nd 0.5\n";
        let loaded = load_embeddings(text.as_bytes(), &LoadOptions::default()).unwrap();
        let space = MetricSpace::euclidean(loaded.vocabulary, loaded.matrix).unwrap();
        let set = range_query(&space, WordId(0), 2.0).unwrap();
        let ids: Vec<u32> = set.members().iter().map(|(id, _)| id.0).collect();
        // b and c tie at distance 1; the smaller id comes first.
        assert_eq!(ids, vec![0, 3, 1, 2]);
    }

    #[test]
    fn negative_gamma_is_rejected() {
        let space = toy_space();
        assert!(matches!(
            range_query(&space, WordId(0), -0.5),
            Err(IndexError::InvalidGamma(_))
        ));
    }

    #[test]
    fn nearest_neighbor_basic_and_ties() {
        let space = toy_space();
        assert_eq!(nearest_neighbor(&space, &[0.2]).unwrap(), WordId(0));
        assert_eq!(nearest_neighbor(&space, &[4.0]).unwrap(), WordId(2));
        // 0.5 is equidistant from a (id 0) and b (id 1): smaller id wins.
        assert_eq!(nearest_neighbor(&space, &[0.5]).unwrap(), WordId(0));
        assert!(nearest_neighbor(&space, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn build_index_matches_per_word_queries() {
        let space = synth::random_space(21, 60, 4, 4.0);
        let gamma = 2.5;
        let index = build_index(&space, gamma).unwrap();
        assert_eq!(index.len(), 60);
        for id in space.vocabulary().ids() {
            let direct = range_query(&space, id, gamma).unwrap();
            assert_eq!(index.candidate_set(id).unwrap(), &direct);
        }
    }

    #[test]
    fn complement_member_enumerates_the_complement() {
        let space = synth::random_space(22, 30, 3, 4.0);
        let set = range_query(&space, WordId(7), 2.0).unwrap();
        let member_ids: Vec<u32> = set.members().iter().map(|(id, _)| id.0).collect();
        let expected: Vec<u32> = (0..30u32).filter(|i| !member_ids.contains(i)).collect();
        assert_eq!(expected.len(), set.complement_count() as usize);
        for (rank, want) in expected.iter().enumerate() {
            assert_eq!(set.complement_member(rank as u32), WordId(*want));
        }
    }

    #[test]
    fn save_load_round_trip() {
        let space = synth::random_space(23, 25, 3, 4.0);
        let index = build_index(&space, 1.8).unwrap();
        let mut buf = Vec::new();
        save_index(&index, &mut buf).unwrap();
        let loaded = load_index(buf.as_slice(), &space).unwrap();
        assert_eq!(loaded, index);
    }

    #[test]
    fn bad_magic_is_rejected() {
        let space = toy_space();
        let index = build_index(&space, 2.0).unwrap();
        let mut buf = Vec::new();
        save_index(&index, &mut buf).unwrap();
        buf[0] = b'X';
        assert!(matches!(
            load_index(buf.as_slice(), &space),
            Err(IndexError::BadMagic)
        ));
    }

    #[test]
    fn wrong_version_digit_is_rejected() {
        let space = toy_space();
        let index = build_index(&space, 2.0).unwrap();
        let mut buf = Vec::new();
        save_index(&index, &mut buf).unwrap();
        buf[6] = b'2';
        assert!(matches!(
            load_index(buf.as_slice(), &space),
            Err(IndexError::BadMagic)
        ));
    }

    #[test]
    fn fingerprint_mismatch_is_rejected() {
        let space = toy_space();
        let other = synth::random_space(24, 3, 1, 4.0);
        let index = build_index(&space, 2.0).unwrap();
        let mut buf = Vec::new();
        save_index(&index, &mut buf).unwrap();
        assert!(matches!(
            load_index(buf.as_slice(), &other),
            Err(IndexError::FingerprintMismatch)
        ));
    }

    #[test]
    fn truncated_stream_is_rejected() {
        let space = synth::random_space(25, 10, 2, 4.0);
        let index = build_index(&space, 2.0).unwrap();
        let mut buf = Vec::new();
        save_index(&index, &mut buf).unwrap();
        for cut in [3, 20, 45, buf.len() - 1] {
            let err = load_index(&buf[..cut], &space).unwrap_err();
            assert!(
                matches!(err, IndexError::Truncated(_)),
                "cut at {cut} gave {err}"
            );
        }
    }

    #[test]
    fn corrupt_member_count_is_rejected() {
        let space = toy_space();
        let index = build_index(&space, 2.0).unwrap();
        let mut buf = Vec::new();
        save_index(&index, &mut buf).unwrap();
        // First member count lives right after the 52-byte header.
        let off = 7 + 1 + 32 + 8 + 4;
        buf[off..off + 4].copy_from_slice(&u32::MAX.to_le_bytes());
        let err = load_index(buf.as_slice(), &space).unwrap_err();
        assert!(matches!(
            err,
            IndexError::Corrupt(_) | IndexError::Truncated(_)
        ));
    }

    #[test]
    fn trailing_bytes_are_rejected() {
        let space = toy_space();
        let index = build_index(&space, 2.0).unwrap();
        let mut buf = Vec::new();
        save_index(&index, &mut buf).unwrap();
        buf.push(0);
        assert!(matches!(
            load_index(buf.as_slice(), &space),
            Err(IndexError::Corrupt(_))
        ));
    }

    #[test]
    fn from_candidate_sets_accepts_exact_sets_and_rejects_lies() {
        let space = synth::random_space(26, 12, 2, 4.0);
        let gamma = 2.0;
        let sets: Vec<CandidateSet> = space
            .vocabulary()
            .ids()
            .map(|id| range_query(&space, id, gamma).unwrap())
            .collect();
        let index = TruncationIndex::from_candidate_sets(&space, gamma, sets.clone()).unwrap();
        assert_eq!(index, build_index(&space, gamma).unwrap());

        // A tampered distance must be caught against the space.
        let mut bad = sets;
        let victim = &mut bad[3];
        let mut members = victim.members().to_vec();
        members[0].1 += 0.25;
        members.sort_unstable_by(|a, b| (a.1, a.0).partial_cmp(&(b.1, b.0)).unwrap());
        *victim = CandidateSet::from_parts(victim.input(), gamma, members, 12).unwrap();
        assert!(matches!(
            TruncationIndex::from_candidate_sets(&space, gamma, bad),
            Err(IndexError::Corrupt(_))
        ));
    }

    #[test]
    fn size_histogram_counts_sets_by_size() {
        let space = toy_space();
        // At gamma=2: a→{a,b}, b→{a,b}, c→{c}.
        let index = build_index(&space, 2.0).unwrap();
        let histogram = index.size_histogram();
        assert_eq!(histogram.get(&1), Some(&1));
        assert_eq!(histogram.get(&2), Some(&2));
        assert_eq!(histogram.len(), 2);
    }
}
