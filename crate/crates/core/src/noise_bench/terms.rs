use std::collections::BTreeMap;

fn lower_words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Case-insensitive whole-word counts. A multi-word term counts every
/// (possibly overlapping) run of consecutive matching words.
pub fn corpus_term_stats<'a, I, T>(captions: I, terms: &[T]) -> BTreeMap<String, u64>
where
    I: IntoIterator<Item = &'a str>,
    T: AsRef<str>,
{
    let patterns: Vec<(String, Vec<String>)> = terms
        .iter()
        .map(|t| (t.as_ref().to_owned(), lower_words(t.as_ref())))
        .collect();
    let mut counts: BTreeMap<String, u64> = patterns.iter().map(|(t, _)| (t.clone(), 0)).collect();
    for text in captions {
        let words = lower_words(text);
        for (term, pat) in &patterns {
            if pat.is_empty() || pat.len() > words.len() {
                continue;
            }
            let hits = words.windows(pat.len()).filter(|w| w == pat).count() as u64;
            *counts.get_mut(term).expect("seeded above") += hits;
        }
    }
    counts
}
