//! Captioner confidence scores and their distribution statistics.
//!
//! A captioner is run twice over each caption: once conditioned on the image
//! and once on the text prefix alone. The per-token probabilities from those
//! two passes give three score kinds:
//!
//! * `WithImage`: P(token | image, prefix)
//! * `TextOnly`: P(token | prefix)
//! * `Differential`: TextOnly − WithImage, positive when the text prior
//!   carries the token more than the image does.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{Real, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    WithImage,
    #[default]
    TextOnly,
    Differential,
}

impl ScoreKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScoreKind::WithImage => "with_image",
            ScoreKind::TextOnly => "text_only",
            ScoreKind::Differential => "differential",
        }
    }

    /// Closed interval the scores of this kind live in.
    pub fn bounds<S: Scalar>(self) -> (S, S) {
        match self {
            ScoreKind::WithImage | ScoreKind::TextOnly => (S::zero(), S::one()),
            ScoreKind::Differential => (-S::one(), S::one()),
        }
    }
}

impl fmt::Display for ScoreKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScoreKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "with_image" | "withimage" | "image" => Ok(ScoreKind::WithImage),
            "text_only" | "textonly" | "text" => Ok(ScoreKind::TextOnly),
            "differential" | "diff" => Ok(ScoreKind::Differential),
            other => Err(Error::Config(format!("unknown score kind {other:?}"))),
        }
    }
}

/// Per-token scores of one kind for one caption. `None` marks an unscored
/// (special) token.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceSeries<S> {
    caption_id: String,
    kind: ScoreKind,
    values: Vec<Option<S>>,
}

impl<S: Scalar> ConfidenceSeries<S> {
    pub fn new(
        caption_id: impl Into<String>,
        kind: ScoreKind,
        values: Vec<Option<S>>,
    ) -> Result<Self> {
        let (lo, hi) = kind.bounds::<S>();
        for v in values.iter().flatten() {
            // NaN fails both comparisons
            if !(*v >= lo && *v <= hi) {
                return Err(Error::ScoreRange {
                    kind: kind.to_string(),
                    value: v.to_f64().unwrap_or(f64::NAN),
                });
            }
        }
        Ok(Self {
            caption_id: caption_id.into(),
            kind,
            values,
        })
    }

    pub fn caption_id(&self) -> &str {
        &self.caption_id
    }

    pub fn kind(&self) -> ScoreKind {
        self.kind
    }

    pub fn values(&self) -> &[Option<S>] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn scored(&self) -> impl Iterator<Item = S> + '_ {
        self.values.iter().flatten().copied()
    }
}

/// Probabilities from the two captioner passes over one tokenization.
#[derive(Debug, Clone, PartialEq)]
pub struct LogProbRecord<S> {
    pub caption_id: String,
    pub tokenizer: String,
    pub with_image: Vec<Option<S>>,
    pub text_only: Vec<Option<S>>,
}

/// What is wrong with a record, before line numbers are attached.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RecordIssue {
    LengthMismatch { with_image: usize, text_only: usize },
    UnscoredMismatch { index: usize },
    OutOfRange { field: String },
}

impl RecordIssue {
    pub fn at_line(self, line: usize) -> Error {
        match self {
            RecordIssue::LengthMismatch {
                with_image,
                text_only,
            } => Error::Parse {
                line,
                message: format!(
                    "with_image has {with_image} entries but text_only has {text_only}"
                ),
            },
            RecordIssue::UnscoredMismatch { index } => Error::Parse {
                line,
                message: format!("token {index} is null in only one of the two passes"),
            },
            RecordIssue::OutOfRange { field } => Error::Range { line, field },
        }
    }
}

impl<S: Scalar> LogProbRecord<S> {
    pub fn validate(&self) -> std::result::Result<(), RecordIssue> {
        if self.with_image.len() != self.text_only.len() {
            return Err(RecordIssue::LengthMismatch {
                with_image: self.with_image.len(),
                text_only: self.text_only.len(),
            });
        }
        let in_unit = |p: &S| *p >= S::zero() && *p <= S::one();
        for (k, (wi, to)) in self.with_image.iter().zip(&self.text_only).enumerate() {
            match (wi, to) {
                (Some(a), Some(b)) => {
                    if !in_unit(a) {
                        return Err(RecordIssue::OutOfRange {
                            field: format!("with_image[{k}]"),
                        });
                    }
                    if !in_unit(b) {
                        return Err(RecordIssue::OutOfRange {
                            field: format!("text_only[{k}]"),
                        });
                    }
                }
                (None, None) => {}
                _ => return Err(RecordIssue::UnscoredMismatch { index: k }),
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.with_image.len()
    }

    pub fn is_empty(&self) -> bool {
        self.with_image.is_empty()
    }

    /// Scores of the requested kind.
    pub fn series(&self, kind: ScoreKind) -> Result<ConfidenceSeries<S>> {
        match kind {
            ScoreKind::WithImage => {
                ConfidenceSeries::new(&self.caption_id, kind, self.with_image.clone())
            }
            ScoreKind::TextOnly => {
                ConfidenceSeries::new(&self.caption_id, kind, self.text_only.clone())
            }
            ScoreKind::Differential => differential_scores(self),
        }
    }
}

/// `text_only − with_image` per token; unscored tokens stay unscored.
pub fn differential_scores<S: Scalar>(rec: &LogProbRecord<S>) -> Result<ConfidenceSeries<S>> {
    if rec.with_image.len() != rec.text_only.len() {
        return Err(Error::LengthMismatch {
            expected: rec.with_image.len(),
            actual: rec.text_only.len(),
        });
    }
    let values = rec
        .text_only
        .iter()
        .zip(&rec.with_image)
        .map(|(t, i)| match (t, i) {
            (Some(t), Some(i)) => Some(*t - *i),
            _ => None,
        })
        .collect();
    ConfidenceSeries::new(&rec.caption_id, ScoreKind::Differential, values)
}

/// Histogram of scores over all tokens and over ground-truth noisy tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramReport<S> {
    pub kind: ScoreKind,
    pub bin_edges: Vec<S>,
    pub counts_all: Vec<u64>,
    /// Empty when no masks were supplied.
    pub counts_noisy: Vec<u64>,
    pub mean_all: S,
    pub mean_noisy: Option<S>,
    pub separation: Option<Separation<S>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Separation<S> {
    /// mean_noisy − mean_all
    pub mean_shift: S,
    /// Two-sample Kolmogorov–Smirnov statistic, noisy tokens vs all tokens.
    pub ks: S,
}

fn sort_real<S: Real>(v: &mut [S]) {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
}

/// Mean of a sorted slice. Summing in sorted order makes the result
/// independent of input order.
fn sorted_mean<S: Real>(sorted: &[S]) -> S {
    sorted.iter().fold(S::zero(), |acc, &x| acc + x) / S::from_count(sorted.len())
}

/// Sup-norm distance between the empirical CDFs of two sorted samples.
pub fn ks_statistic<S: Real>(a: &[S], b: &[S]) -> S {
    if a.is_empty() || b.is_empty() {
        return S::zero();
    }
    let (n, m) = (S::from_count(a.len()), S::from_count(b.len()));
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = S::zero();
    while i < a.len() && j < b.len() {
        let x = if a[i] <= b[j] { a[i] } else { b[j] };
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        let gap = (S::from_count(i) / n - S::from_count(j) / m).abs();
        if gap > d {
            d = gap;
        }
    }
    d
}

/// Builds the histogram report over every scored token in `series`.
///
/// Bins split the score-kind range (`[0,1]` or `[-1,1]`) evenly; the last
/// bin is closed on the right.
pub fn score_statistics<S: Real>(
    series: &[ConfidenceSeries<S>],
    noise_masks: Option<&[Vec<bool>]>,
    bins: usize,
) -> Result<HistogramReport<S>> {
    let first = series
        .first()
        .ok_or_else(|| Error::EmptyInput("no score series".into()))?;
    if bins == 0 {
        return Err(Error::Config("bin count must be positive".into()));
    }
    let kind = first.kind();
    if let Some(other) = series.iter().find(|s| s.kind() != kind) {
        return Err(Error::Mismatch(format!(
            "mixed score kinds {kind} and {}",
            other.kind()
        )));
    }
    if let Some(masks) = noise_masks {
        if masks.len() != series.len() {
            return Err(Error::LengthMismatch {
                expected: series.len(),
                actual: masks.len(),
            });
        }
        for (s, m) in series.iter().zip(masks) {
            if s.len() != m.len() {
                return Err(Error::LengthMismatch {
                    expected: s.len(),
                    actual: m.len(),
                });
            }
        }
    }

    let mut all = Vec::new();
    let mut noisy = Vec::new();
    for (c, s) in series.iter().enumerate() {
        for (k, v) in s.values().iter().enumerate() {
            let Some(v) = *v else { continue };
            all.push(v);
            if noise_masks.is_some_and(|m| m[c][k]) {
                noisy.push(v);
            }
        }
    }
    if all.is_empty() {
        return Err(Error::EmptyInput("no scored tokens".into()));
    }
    sort_real(&mut all);
    sort_real(&mut noisy);

    let (lo, hi) = kind.bounds::<S>();
    let width = (hi - lo) / S::from_count(bins);
    let bin_edges: Vec<S> = (0..=bins)
        .map(|i| {
            if i == bins {
                hi
            } else {
                lo + width * S::from_count(i)
            }
        })
        .collect();
    let bin_of = |x: S| -> usize {
        let idx = ((x - lo) / width).floor().to_usize().unwrap_or(0);
        idx.min(bins - 1)
    };
    let histogram = |xs: &[S]| {
        let mut counts = vec![0u64; bins];
        for &x in xs {
            counts[bin_of(x)] += 1;
        }
        counts
    };

    let counts_all = histogram(&all);
    let mean_all = sorted_mean(&all);
    let (counts_noisy, mean_noisy, separation) = match noise_masks {
        None => (Vec::new(), None, None),
        Some(_) => {
            let counts = histogram(&noisy);
            if noisy.is_empty() {
                (counts, None, None)
            } else {
                let mean = sorted_mean(&noisy);
                let sep = Separation {
                    mean_shift: mean - mean_all,
                    ks: ks_statistic(&noisy, &all),
                };
                (counts, Some(mean), Some(sep))
            }
        }
    };

    Ok(HistogramReport {
        kind,
        bin_edges,
        counts_all,
        counts_noisy,
        mean_all,
        mean_noisy,
        separation,
    })
}
