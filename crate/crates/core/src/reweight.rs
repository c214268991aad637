//! Threshold selection, per-token attention weights and the token-removal
//! baseline.
//!
//! Tokens whose score exceeds the threshold ε are flagged. Flagged tokens of
//! a caption get weight `-softmax(s)_k` with the softmax taken over the
//! flagged set of that caption, so flagged weights always sum to -1; every
//! other token keeps weight 1.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::scoring::{ConfidenceSeries, ScoreKind};
use crate::tokenize::{Caption, Tokenization};

/// Which scores the σ-quantile is taken over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Population {
    /// Every scored token of the corpus (two passes).
    #[default]
    Corpus,
    /// Every scored token of one training batch.
    Batch,
}

impl FromStr for Population {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "corpus" => Ok(Population::Corpus),
            "batch" => Ok(Population::Batch),
            other => Err(Error::Config(format!("unknown population {other:?}"))),
        }
    }
}

impl fmt::Display for Population {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Population::Corpus => "corpus",
            Population::Batch => "batch",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdConfig<S> {
    pub sigma: f64,
    pub epsilon: S,
    pub population: Population,
    pub score_kind: ScoreKind,
}

impl<S: Real> ThresholdConfig<S> {
    /// Flagging rule: strictly greater than ε. Ties are not flagged.
    pub fn flags(&self, score: S) -> bool {
        score > self.epsilon
    }
}

pub fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma < 1.0 {
        Ok(())
    } else {
        Err(Error::SigmaRange(sigma))
    }
}

/// 0-based index `⌈σ·n⌉ − 1` into the ascending pool.
///
/// `σ·n` within 1e-9 of an integer is snapped to it first, so decimal
/// fractions such as `0.3 · 100` land on 30 rather than 31.
pub fn quantile_index(n: usize, sigma: f64) -> usize {
    let x = sigma * n as f64;
    let nearest = x.round();
    let rank = if (x - nearest).abs() <= 1e-9 * x.abs().max(1.0) {
        nearest
    } else {
        x.ceil()
    };
    (rank as usize).clamp(1, n.max(1)) - 1
}

/// Resolves ε as the σ-quantile of `pool` (non-finite values rejected).
pub fn select_threshold<S: Real>(
    pool: &[S],
    sigma: f64,
    population: Population,
    score_kind: ScoreKind,
) -> Result<ThresholdConfig<S>> {
    check_sigma(sigma)?;
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    if let Some(bad) = pool.iter().find(|v| !v.is_finite()) {
        return Err(Error::ScoreRange {
            kind: score_kind.to_string(),
            value: bad.to_f64_lossy(),
        });
    }
    let mut sorted = pool.to_vec();
    let idx = quantile_index(sorted.len(), sigma);
    let (_, &mut epsilon, _) =
        sorted.select_nth_unstable_by(idx, |a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    Ok(ThresholdConfig {
        sigma,
        epsilon,
        population,
        score_kind,
    })
}

/// Per-token weights for one caption.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector<S> {
    pub caption_id: String,
    pub weights: Vec<S>,
    /// Ascending indices of down-weighted tokens.
    pub flagged: Vec<usize>,
}

impl<S: Real> WeightVector<S> {
    pub fn ones(caption_id: impl Into<String>, len: usize) -> Self {
        Self {
            caption_id: caption_id.into(),
            weights: vec![S::one(); len],
            flagged: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Indices of scored tokens above ε.
pub fn flagged_tokens<S: Real>(
    scores: &ConfidenceSeries<S>,
    cfg: &ThresholdConfig<S>,
) -> Vec<usize> {
    scores
        .values()
        .iter()
        .enumerate()
        .filter_map(|(k, v)| v.filter(|&s| cfg.flags(s)).map(|_| k))
        .collect()
}

pub fn compute_weights<S: Real>(
    scores: &ConfidenceSeries<S>,
    cfg: &ThresholdConfig<S>,
) -> WeightVector<S> {
    let flagged = flagged_tokens(scores, cfg);
    let mut weights = vec![S::one(); scores.len()];
    if !flagged.is_empty() {
        let values = scores.values();
        let score = |k: usize| values[k].expect("flagged tokens are scored");
        let max = flagged
            .iter()
            .map(|&k| score(k))
            .fold(S::neg_infinity(), S::max);
        let exps: Vec<S> = flagged.iter().map(|&k| (score(k) - max).exp()).collect();
        let total = exps.iter().fold(S::zero(), |a, &e| a + e);
        for (&k, e) in flagged.iter().zip(exps) {
            weights[k] = -(e / total);
        }
    }
    WeightVector {
        caption_id: scores.caption_id().to_owned(),
        weights,
        flagged,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReweightMode {
    /// `A'[q,k] = A[q,k] · w_k`, negative weights kept as is.
    #[default]
    LiteralMultiply,
    /// Clamp weights at zero, then renormalize each row to sum to one.
    ClampRenorm,
}

impl FromStr for ReweightMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "literal_multiply" | "literal" => Ok(ReweightMode::LiteralMultiply),
            "clamp_renorm" | "clamp" => Ok(ReweightMode::ClampRenorm),
            other => Err(Error::Config(format!("unknown reweight mode {other:?}"))),
        }
    }
}

impl fmt::Display for ReweightMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReweightMode::LiteralMultiply => "literal_multiply",
            ReweightMode::ClampRenorm => "clamp_renorm",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttentionStage {
    PostSoftmax,
    Reweighted,
}

/// Row-major cross-attention matrix: rows are image-position queries,
/// columns are caption-token keys.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMatrix<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
    stage: AttentionStage,
}

impl<S: Real> AttentionMatrix<S> {
    /// Accepts a post-softmax matrix: non-negative rows summing to 1 ± 1e-6.
    pub fn post_softmax(rows: usize, cols: usize, data: Vec<S>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if cols == 0 && rows > 0 {
            return Err(Error::Shape(format!("{rows} rows with no columns")));
        }
        let tol = S::from_f64_lossy(1e-6);
        for (r, row) in data.chunks(cols.max(1)).enumerate().take(rows) {
            if row.iter().any(|&x| x.is_nan() || x < S::zero()) {
                return Err(Error::Shape(format!("row {r} has a negative or NaN entry")));
            }
            let sum = row.iter().fold(S::zero(), |a, &x| a + x);
            if (sum - S::one()).abs() > tol {
                return Err(Error::Shape(format!(
                    "row {r} sums to {}",
                    sum.to_f64_lossy()
                )));
            }
        }
        Ok(Self {
            rows,
            cols,
            data,
            stage: AttentionStage::PostSoftmax,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn stage(&self) -> AttentionStage {
        self.stage
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[S] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> S {
        self.data[r * self.cols + c]
    }
}

pub fn apply_attention_reweight<S: Real>(
    a: &AttentionMatrix<S>,
    w: &WeightVector<S>,
    mode: ReweightMode,
) -> Result<AttentionMatrix<S>> {
    if a.cols != w.len() {
        return Err(Error::Shape(format!(
            "{} attention columns but {} weights",
            a.cols,
            w.len()
        )));
    }
    let mut data = Vec::with_capacity(a.data.len());
    match mode {
        ReweightMode::LiteralMultiply => {
            for r in 0..a.rows {
                data.extend(a.row(r).iter().zip(&w.weights).map(|(&x, &wk)| x * wk));
            }
        }
        ReweightMode::ClampRenorm => {
            let clamped: Vec<S> = w.weights.iter().map(|&wk| wk.max(S::zero())).collect();
            for r in 0..a.rows {
                let start = data.len();
                data.extend(a.row(r).iter().zip(&clamped).map(|(&x, &wk)| x * wk));
                let sum = data[start..].iter().fold(S::zero(), |acc, &x| acc + x);
                if sum.is_nan() || sum <= S::zero() {
                    return Err(Error::DegenerateRow { row: r });
                }
                data[start..].iter_mut().for_each(|x| *x = *x / sum);
            }
        }
    }
    Ok(AttentionMatrix {
        rows: a.rows,
        cols: a.cols,
        data,
        stage: AttentionStage::Reweighted,
    })
}

/// Drops flagged tokens and rebuilds the caption text.
///
/// Kept tokens contribute their original text. Between two kept tokens the
/// original gap is copied when nothing was removed in between; otherwise the
/// two sides are joined with a single space. Leading and trailing text
/// survives only when no removed token precedes or follows it.
pub fn filter_noisy_tokens<S: Real>(
    tok: &Tokenization,
    scores: &ConfidenceSeries<S>,
    cfg: &ThresholdConfig<S>,
) -> Result<Caption> {
    if tok.len() != scores.len() {
        return Err(Error::LengthMismatch {
            expected: tok.len(),
            actual: scores.len(),
        });
    }
    let flagged = flagged_tokens(scores, cfg);
    let scored = scores.scored().count();
    if scored > 0 && flagged.len() == scored {
        return Err(Error::AllRemoved(tok.caption_id().to_owned()));
    }
    let mut removed = vec![false; tok.len()];
    flagged.iter().for_each(|&k| removed[k] = true);

    let text = tok.text();
    let mut out = String::with_capacity(text.len());
    let mut cursor = Some(0usize);
    let mut emitted_any = false;
    for (k, span) in tok.spans().iter().enumerate() {
        if span.is_special() {
            continue;
        }
        if removed[k] {
            cursor = None;
            continue;
        }
        match cursor {
            Some(c) => out.push_str(&text[c..span.start]),
            None if emitted_any => out.push(' '),
            None => {}
        }
        out.push_str(tok.source_text(k));
        emitted_any = true;
        cursor = Some(span.end);
    }
    if let Some(c) = cursor {
        out.push_str(&text[c..]);
    }
    Ok(Caption::new(tok.caption_id(), out))
}
