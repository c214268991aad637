//! Cross-tokenizer alignment.
//!
//! Two tokenizations of the same caption are related by byte overlap in the
//! original string: source token `k` maps to every target token whose span
//! shares at least one byte with it. Touching spans (`a.end == b.start`) do
//! not overlap, and special tokens with empty spans map to nothing.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::scoring::ConfidenceSeries;
use crate::tokenize::Tokenization;

/// Monotone one-to-many map from source token indices to sorted sets of
/// target token indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignmentMap {
    source_len: usize,
    target_len: usize,
    entries: Vec<Vec<usize>>,
}

impl AlignmentMap {
    /// Checks that every entry is strictly increasing, in range, and that
    /// the map is monotone: `max(V(k1)) <= min(V(k2))` for `k1 < k2`.
    pub fn new(source_len: usize, target_len: usize, entries: Vec<Vec<usize>>) -> Result<Self> {
        if entries.len() != source_len {
            return Err(Error::InvalidAlignment(format!(
                "{} entries for {source_len} source tokens",
                entries.len()
            )));
        }
        let mut floor = 0usize;
        for (k, set) in entries.iter().enumerate() {
            if set.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidAlignment(format!(
                    "entry {k} is not strictly increasing"
                )));
            }
            if let (Some(&lo), Some(&hi)) = (set.first(), set.last()) {
                if hi >= target_len {
                    return Err(Error::InvalidAlignment(format!(
                        "entry {k} references target {hi} of {target_len}"
                    )));
                }
                if lo < floor {
                    return Err(Error::InvalidAlignment(format!(
                        "entry {k} breaks monotonicity"
                    )));
                }
                floor = hi;
            }
        }
        Ok(Self {
            source_len,
            target_len,
            entries,
        })
    }

    pub fn identity(len: usize) -> Self {
        Self {
            source_len: len,
            target_len: len,
            entries: (0..len).map(|k| vec![k]).collect(),
        }
    }

    pub fn source_len(&self) -> usize {
        self.source_len
    }

    pub fn target_len(&self) -> usize {
        self.target_len
    }

    pub fn get(&self, k: usize) -> &[usize] {
        &self.entries[k]
    }

    pub fn entries(&self) -> &[Vec<usize>] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<Vec<usize>> {
        self.entries
    }

    /// Target indices that no source token maps to.
    pub fn unmapped_targets(&self) -> Vec<usize> {
        let mut hit = vec![false; self.target_len];
        for &j in self.entries.iter().flatten() {
            hit[j] = true;
        }
        hit.iter()
            .enumerate()
            .filter_map(|(j, &h)| (!h).then_some(j))
            .collect()
    }

    /// Relational transpose: `j ∈ V(k)` iff `k ∈ V'(j)`.
    pub fn invert(&self) -> AlignmentMap {
        let mut entries = vec![Vec::new(); self.target_len];
        for (k, set) in self.entries.iter().enumerate() {
            for &j in set {
                entries[j].push(k);
            }
        }
        AlignmentMap {
            source_len: self.target_len,
            target_len: self.source_len,
            entries,
        }
    }
}

/// Builds the overlap map from `source` to `target` in a single linear
/// sweep over both span lists.
pub fn build_alignment(source: &Tokenization, target: &Tokenization) -> Result<AlignmentMap> {
    if source.caption_id() != target.caption_id() {
        return Err(Error::Mismatch(format!(
            "caption ids differ: {} vs {}",
            source.caption_id(),
            target.caption_id()
        )));
    }
    if source.text() != target.text() {
        return Err(Error::Mismatch(format!(
            "caption {}: texts differ between tokenizations",
            source.caption_id()
        )));
    }
    if source.is_empty() || target.is_empty() {
        return Err(Error::Degenerate(format!(
            "caption {}: empty tokenization",
            source.caption_id()
        )));
    }

    let targets: Vec<(usize, usize, usize)> = target
        .spans()
        .iter()
        .enumerate()
        .filter(|(_, s)| !s.is_special())
        .map(|(j, s)| (j, s.start, s.end))
        .collect();

    let mut entries = vec![Vec::new(); source.len()];
    let mut first = 0usize;
    for (k, span) in source.spans().iter().enumerate() {
        if span.is_special() {
            continue;
        }
        // targets ending at or before this span cannot reach later sources
        while first < targets.len() && targets[first].2 <= span.start {
            first += 1;
        }
        let mut t = first;
        while t < targets.len() && targets[t].1 < span.end {
            let (j, start, end) = targets[t];
            if start.max(span.start) < end.min(span.end) {
                entries[k].push(j);
            }
            t += 1;
        }
    }
    AlignmentMap::new(source.len(), target.len(), entries)
}

/// Transpose of an alignment map.
pub fn invert_alignment(m: &AlignmentMap) -> AlignmentMap {
    m.invert()
}

/// Moves target-side scores onto source tokens: each source token receives
/// the arithmetic mean of the scored target tokens it maps to. Source tokens
/// with nothing to average stay unscored.
pub fn project_scores<S: Scalar>(
    target_scores: &ConfidenceSeries<S>,
    m: &AlignmentMap,
) -> Result<ConfidenceSeries<S>> {
    if target_scores.len() != m.target_len() {
        return Err(Error::LengthMismatch {
            expected: m.target_len(),
            actual: target_scores.len(),
        });
    }
    let values = target_scores.values();
    let projected = m
        .entries()
        .iter()
        .map(|set| {
            let (sum, n) = set
                .iter()
                .filter_map(|&j| values[j])
                .fold((S::zero(), 0usize), |(s, n), v| (s + v, n + 1));
            (n > 0).then(|| sum / S::from_count(n))
        })
        .collect();
    ConfidenceSeries::new(target_scores.caption_id(), target_scores.kind(), projected)
}
