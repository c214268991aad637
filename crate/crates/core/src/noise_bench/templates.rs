//! Attribute-template captions with known substitutable slots.

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Category;
use crate::synth::caption_rng;

/// Byte range of an attribute word (or words) inside a caption.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slot {
    pub category: Category,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplatedCaption {
    pub caption_id: String,
    pub text: String,
    pub slots: Vec<Slot>,
}

impl TemplatedCaption {
    pub fn slot_text(&self, slot: &Slot) -> &str {
        &self.text[slot.start..slot.end]
    }
}

/// Generated captions plus the generator's own count of every word it
/// placed into a slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateCorpus {
    pub captions: Vec<TemplatedCaption>,
    pub slot_word_tally: BTreeMap<String, u64>,
}

const SHAPES: [&str; 6] = ["circles", "squares", "triangles", "boxes", "jars", "doors"];

enum Piece {
    Lit(&'static str),
    Shape,
    Slot(Category),
}

use Piece::{Lit, Shape, Slot as S};

const TEMPLATES: [&[Piece]; 3] = [
    &[
        S(Category::Quantity),
        Lit(" "),
        S(Category::Color),
        Lit(" "),
        Shape,
        Lit(" placed at the "),
        S(Category::Spatial),
        Lit(" of the canvas, each "),
        S(Category::Feature),
    ],
    &[
        Lit("a picture of "),
        S(Category::Quantity),
        Lit(" "),
        S(Category::Feature),
        Lit(" "),
        S(Category::Color),
        Lit(" "),
        Shape,
        Lit(" near the "),
        S(Category::Spatial),
    ],
    &[
        Lit("in the "),
        S(Category::Spatial),
        Lit(" there are "),
        S(Category::Quantity),
        Lit(" "),
        S(Category::Color),
        Lit(" "),
        Shape,
        Lit(" that look "),
        S(Category::Feature),
    ],
];

/// Deterministic template corpus; every caption has one slot per category.
pub fn generate_template_corpus(n: usize, seed: u64) -> TemplateCorpus {
    let mut tally = BTreeMap::new();
    let captions = (0..n)
        .map(|i| {
            let mut rng = caption_rng(seed, i);
            let template = TEMPLATES[rng.random_range(0..TEMPLATES.len())];
            let mut text = String::new();
            let mut slots = Vec::new();
            for piece in template {
                match piece {
                    Lit(s) => text.push_str(s),
                    Shape => text.push_str(SHAPES.choose(&mut rng).expect("non-empty")),
                    S(category) => {
                        let word = category.vocabulary().choose(&mut rng).expect("non-empty");
                        let start = text.len();
                        text.push_str(word);
                        slots.push(Slot {
                            category: *category,
                            start,
                            end: text.len(),
                        });
                        for w in word.split_whitespace() {
                            *tally.entry(w.to_owned()).or_insert(0) += 1;
                        }
                    }
                }
            }
            TemplatedCaption {
                caption_id: format!("cap-{i:06}"),
                text,
                slots,
            }
        })
        .collect();
    TemplateCorpus {
        captions,
        slot_word_tally: tally,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(
            generate_template_corpus(50, 3),
            generate_template_corpus(50, 3)
        );
        assert_ne!(
            generate_template_corpus(50, 3).captions,
            generate_template_corpus(50, 4).captions
        );
    }

    #[test]
    fn slots_cover_every_category() {
        for cap in generate_template_corpus(100, 1).captions {
            let cats: HashSet<_> = cap.slots.iter().map(|s| s.category).collect();
            assert_eq!(cats.len(), 4);
            for s in &cap.slots {
                assert!(s.category.vocabulary().contains(&cap.slot_text(s)));
            }
        }
    }

    #[test]
    fn template_words_never_collide_with_slot_words() {
        let slot_words: HashSet<&str> = Category::ALL
            .iter()
            .flat_map(|c| c.vocabulary().iter().flat_map(|w| w.split_whitespace()))
            .collect();
        for template in TEMPLATES {
            for piece in template {
                if let Lit(s) = piece {
                    for w in s
                        .split(|c: char| !c.is_alphanumeric())
                        .filter(|w| !w.is_empty())
                    {
                        assert!(!slot_words.contains(w), "{w}");
                    }
                }
            }
        }
        for shape in SHAPES {
            assert!(!slot_words.contains(shape));
        }
    }
}
