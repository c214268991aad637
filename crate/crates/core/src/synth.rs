//! Deterministic stand-in for captioner log-prob dumps.
//!
//! Clean tokens draw both probabilities from the clean distribution. Noisy
//! tokens draw the with-image probability from the clean distribution and
//! the text-only probability from the noisy one, so a noisy mean above the
//! clean mean shifts both `TextOnly` and `Differential` scores upward on
//! noisy tokens.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::noise_bench::NoisyCaption;
use crate::scoring::LogProbRecord;

/// Tokenizer tag written into synthetic dumps; noise masks index
/// whitespace tokens.
pub const SYNTHETIC_TOKENIZER: &str = "whitespace";

/// Normal distribution truncated to `[0, 1]`, sampled by inverse CDF.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncatedNormal {
    pub mean: f64,
    pub std: f64,
}

impl TruncatedNormal {
    pub fn new(mean: f64, std: f64) -> Result<Self> {
        let d = Self { mean, std };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mean.is_finite() || !self.std.is_finite() || self.std <= 0.0 {
            return Err(Error::Config(format!(
                "truncated normal needs finite mean and positive std, got N({}, {})",
                self.mean, self.std
            )));
        }
        let (lo, hi) = self.cdf_bounds();
        if (hi - lo).is_nan() || hi - lo <= 1e-12 {
            return Err(Error::Config(format!(
                "N({}, {}) has no usable mass on [0, 1]",
                self.mean, self.std
            )));
        }
        Ok(())
    }

    fn normal(&self) -> Normal {
        Normal::new(self.mean, self.std).expect("validated parameters")
    }

    fn cdf_bounds(&self) -> (f64, f64) {
        match Normal::new(self.mean, self.std) {
            Ok(n) => (n.cdf(0.0), n.cdf(1.0)),
            Err(_) => (0.0, 0.0),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let normal = self.normal();
        let (lo, hi) = (normal.cdf(0.0), normal.cdf(1.0));
        let u = lo + (hi - lo) * rng.random::<f64>();
        normal.inverse_cdf(u).clamp(0.0, 1.0)
    }
}

/// Per-caption RNG: one ChaCha stream per caption index, so captions can be
/// generated independently and in any order.
pub(crate) fn caption_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// One record per caption, one probability pair per mask position.
pub fn synthetic_provider(
    corpus: &[NoisyCaption],
    clean: TruncatedNormal,
    noisy: TruncatedNormal,
    seed: u64,
) -> Result<Vec<LogProbRecord<f64>>> {
    clean.validate()?;
    noisy.validate()?;
    Ok(corpus
        .iter()
        .enumerate()
        .map(|(i, cap)| {
            let mut rng = caption_rng(seed, i);
            let mut with_image = Vec::with_capacity(cap.noise_mask.len());
            let mut text_only = Vec::with_capacity(cap.noise_mask.len());
            for &is_noisy in &cap.noise_mask {
                with_image.push(Some(clean.sample(&mut rng)));
                let dist = if is_noisy { noisy } else { clean };
                text_only.push(Some(dist.sample(&mut rng)));
            }
            LogProbRecord {
                caption_id: cap.caption.id.clone(),
                tokenizer: SYNTHETIC_TOKENIZER.to_owned(),
                with_image,
                text_only,
            }
        })
        .collect())
}
