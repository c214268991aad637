//! Ground-truth noisy caption corpora and the measurements made on them.

mod detection;
mod halrate;
mod inject;
mod templates;
mod terms;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tokenize::{Caption, SpanTokenizer, WhitespaceTokenizer};

pub use detection::{detection_metrics, DetectionReport, DetectionRow};
pub use halrate::{hal_rate, CaptionHalRate, HalRateReport, HallucinationJudgment, ObjectJudgment};
pub use inject::{inject_hallucinations, InjectionStats};
pub use templates::{generate_template_corpus, Slot, TemplateCorpus, TemplatedCaption};
pub use terms::corpus_term_stats;

/// Hallucination families used for both injection and evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Color,
    Spatial,
    Quantity,
    Feature,
}

impl Category {
    pub const ALL: [Category; 4] = [
        Category::Color,
        Category::Spatial,
        Category::Quantity,
        Category::Feature,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Color => "color",
            Category::Spatial => "spatial",
            Category::Quantity => "quantity",
            Category::Feature => "feature",
        }
    }

    /// Substitution vocabulary for the category.
    pub fn vocabulary(self) -> &'static [&'static str] {
        match self {
            Category::Color => &[
                "red",
                "green",
                "yellow",
                "orange",
                "purple",
                "pink",
                "brown",
                "white",
                "light blue",
                "navy blue",
            ],
            Category::Spatial => &[
                "left", "right", "middle", "corner", "top", "bottom", "inside", "outside",
            ],
            Category::Quantity => &["one", "two", "three", "four", "five", "six"],
            Category::Feature => &[
                "open", "closed", "full", "empty", "locked", "unlocked", "filled", "hollow",
            ],
        }
    }

    /// Antonym for feature words; `None` for other categories.
    pub fn antonym(word: &str) -> Option<&'static str> {
        const PAIRS: [(&str, &str); 4] = [
            ("open", "closed"),
            ("full", "empty"),
            ("locked", "unlocked"),
            ("filled", "hollow"),
        ];
        PAIRS.iter().find_map(|&(a, b)| {
            if word == a {
                Some(b)
            } else if word == b {
                Some(a)
            } else {
                None
            }
        })
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown category {s:?}")))
    }
}

/// A caption with a per-token hallucination mask over its whitespace
/// tokenization.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyCaption {
    pub caption: Caption,
    pub clean_text: String,
    pub noise_mask: Vec<bool>,
    /// `Some` exactly where the mask is set.
    pub categories: Vec<Option<Category>>,
    pub injection_seed: u64,
}

impl NoisyCaption {
    pub fn new(
        caption: Caption,
        clean_text: String,
        noise_mask: Vec<bool>,
        categories: Vec<Option<Category>>,
        injection_seed: u64,
    ) -> Result<Self> {
        let tokens = WhitespaceTokenizer.tokenize(&caption)?.len();
        if noise_mask.len() != tokens || categories.len() != tokens {
            return Err(Error::LengthMismatch {
                expected: tokens,
                actual: if noise_mask.len() != tokens {
                    noise_mask.len()
                } else {
                    categories.len()
                },
            });
        }
        if let Some(k) = noise_mask
            .iter()
            .zip(&categories)
            .position(|(m, c)| *m != c.is_some())
        {
            return Err(Error::Mismatch(format!(
                "caption {}: token {k} mask and category disagree",
                caption.id
            )));
        }
        Ok(Self {
            caption,
            clean_text,
            noise_mask,
            categories,
            injection_seed,
        })
    }

    pub fn noisy_count(&self) -> usize {
        self.noise_mask.iter().filter(|&&m| m).count()
    }
}
