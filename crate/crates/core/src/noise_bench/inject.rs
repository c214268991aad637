use std::collections::BTreeSet;

use rand::Rng;

use super::{Category, NoisyCaption, TemplatedCaption};
use crate::error::{Error, Result};
use crate::synth::caption_rng;
use crate::tokenize::{Caption, SpanTokenizer, WhitespaceTokenizer};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct InjectionStats {
    /// Slots of a requested category.
    pub eligible_slots: usize,
    pub substituted_slots: usize,
    pub noisy_tokens: usize,
    pub total_tokens: usize,
}

impl InjectionStats {
    pub fn slot_rate(&self) -> f64 {
        if self.eligible_slots == 0 {
            0.0
        } else {
            self.substituted_slots as f64 / self.eligible_slots as f64
        }
    }
}

fn replacement<R: Rng>(category: Category, current: &str, rng: &mut R) -> &'static str {
    if category == Category::Feature {
        if let Some(a) = Category::antonym(current) {
            return a;
        }
    }
    let vocab = category.vocabulary();
    let others: Vec<&'static str> = vocab.iter().copied().filter(|w| *w != current).collect();
    others[rng.random_range(0..others.len())]
}

/// Substitutes each eligible slot with probability `rate` by a different
/// word of the same category, then marks every whitespace token touching a
/// substituted range. Multi-word replacements mark all their tokens.
pub fn inject_hallucinations(
    corpus: &[TemplatedCaption],
    rate: f64,
    categories: &BTreeSet<Category>,
    seed: u64,
) -> Result<(Vec<NoisyCaption>, InjectionStats)> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::Config(format!(
            "rate must lie in [0, 1], got {rate}"
        )));
    }
    let mut stats = InjectionStats::default();
    let mut out = Vec::with_capacity(corpus.len());
    for (i, cap) in corpus.iter().enumerate() {
        for &category in categories {
            if !cap.slots.iter().any(|s| s.category == category) {
                return Err(Error::NoSlot {
                    caption_id: cap.caption_id.clone(),
                    category: category.to_string(),
                });
            }
        }
        let mut slots = cap.slots.clone();
        slots.sort_by_key(|s| s.start);

        let mut rng = caption_rng(seed, i);
        let mut text = String::with_capacity(cap.text.len() + 8);
        let mut changed: Vec<(usize, usize, Category)> = Vec::new();
        let mut cursor = 0;
        for slot in &slots {
            if slot.start < cursor || slot.end > cap.text.len() {
                return Err(Error::Config(format!(
                    "caption {}: slots overlap or exceed the text",
                    cap.caption_id
                )));
            }
            text.push_str(&cap.text[cursor..slot.start]);
            let current = &cap.text[slot.start..slot.end];
            cursor = slot.end;
            if !categories.contains(&slot.category) {
                text.push_str(current);
                continue;
            }
            stats.eligible_slots += 1;
            if rng.random::<f64>() < rate {
                let word = replacement(slot.category, current, &mut rng);
                let start = text.len();
                text.push_str(word);
                changed.push((start, text.len(), slot.category));
                stats.substituted_slots += 1;
            } else {
                text.push_str(current);
            }
        }
        text.push_str(&cap.text[cursor..]);

        let caption = Caption::new(&cap.caption_id, text);
        let tokens = WhitespaceTokenizer.tokenize(&caption)?;
        let categories_per_token: Vec<Option<Category>> = tokens
            .spans()
            .iter()
            .map(|t| {
                changed
                    .iter()
                    .find(|&&(s, e, _)| t.start.max(s) < t.end.min(e))
                    .map(|&(_, _, c)| c)
            })
            .collect();
        let mask: Vec<bool> = categories_per_token.iter().map(Option::is_some).collect();
        stats.noisy_tokens += mask.iter().filter(|&&m| m).count();
        stats.total_tokens += mask.len();
        out.push(NoisyCaption::new(
            caption,
            cap.text.clone(),
            mask,
            categories_per_token,
            seed,
        )?);
    }
    Ok((out, stats))
}
