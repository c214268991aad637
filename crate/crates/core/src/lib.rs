//! Token-level caption noise toolkit.
//!
//! Detects likely-hallucinated tokens in machine-written image captions from
//! captioner confidence, carries those scores across tokenizers by byte-span
//! overlap, and turns them into per-token cross-attention weights for
//! noise-robust text-to-image training.
//!
//! The numeric core is generic over the scalar type: [`Scalar`] code runs on
//! floats and exact rationals, [`Real`] code on `f32`/`f64`. The aliases
//! below name the concrete instantiations the file formats and CLI use.

pub mod align;
pub mod error;
pub mod formats;
pub mod noise_bench;
pub mod reweight;
pub mod scalar;
pub mod scoring;
pub mod synth;
pub mod tokenize;

pub use align::{build_alignment, invert_alignment, project_scores, AlignmentMap};
pub use error::{Error, Result};
pub use noise_bench::{
    corpus_term_stats, detection_metrics, generate_template_corpus, hal_rate,
    inject_hallucinations, Category, DetectionReport, HalRateReport, HallucinationJudgment,
    NoisyCaption, TemplatedCaption,
};
pub use reweight::{
    apply_attention_reweight, compute_weights, filter_noisy_tokens, select_threshold,
    AttentionMatrix, Population, ReweightMode, ThresholdConfig, WeightVector,
};
pub use scalar::{Real, Scalar};
pub use scoring::{
    differential_scores, score_statistics, ConfidenceSeries, HistogramReport, LogProbRecord,
    ScoreKind,
};
pub use synth::{synthetic_provider, TruncatedNormal};
pub use tokenize::{
    Caption, GreedyTokenizer, SpanTokenizer, TokenSpan, Tokenization, WhitespaceTokenizer,
    WithSpecials,
};

/// Exact rational scalar.
pub type Exact = num_rational::Rational64;

pub type Series = ConfidenceSeries<f64>;
pub type Series32 = ConfidenceSeries<f32>;
pub type ExactSeries = ConfidenceSeries<Exact>;
pub type Weights = WeightVector<f64>;
pub type Weights32 = WeightVector<f32>;
pub type Threshold = ThresholdConfig<f64>;
pub type Attention = AttentionMatrix<f64>;
pub type Histogram = HistogramReport<f64>;
pub type Detection = DetectionReport<f64>;
pub type HalRate = HalRateReport<f64>;
pub type ExactHalRate = HalRateReport<Exact>;
