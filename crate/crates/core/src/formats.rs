//! JSONL record schemas shared by the toolkit and any trainer.
//!
//! One record per caption per line. Readers report 1-based line numbers;
//! blank lines are skipped.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::align::AlignmentMap;
use crate::error::{Error, Result};
use crate::noise_bench::{Category, NoisyCaption};
use crate::reweight::{ThresholdConfig, WeightVector};
use crate::scoring::{ConfidenceSeries, LogProbRecord, ScoreKind};
use crate::tokenize::{Caption, TokenSpan, Tokenization};

/// Parses every non-blank line of `reader` as `T`, keeping line numbers.
pub fn read_jsonl<T: DeserializeOwned, R: BufRead>(reader: R) -> Result<Vec<(usize, T)>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        out.push((line_no, rec));
    }
    Ok(out)
}

pub fn read_jsonl_file<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<(usize, T)>> {
    let file = File::open(path.as_ref())
        .map_err(|e| Error::Io(format!("{}: {e}", path.as_ref().display())))?;
    read_jsonl(BufReader::new(file))
}

pub fn write_jsonl<'a, T, W, I>(mut w: W, records: I) -> Result<()>
where
    T: Serialize + 'a,
    W: Write,
    I: IntoIterator<Item = &'a T>,
{
    for rec in records {
        serde_json::to_writer(&mut w, rec).map_err(|e| Error::Io(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenRecord {
    pub id: u32,
    pub surface: String,
    pub start: usize,
    pub end: usize,
}

/// Token dump: how external tokenizers are plugged in.
///
/// `text` is optional. Without it, the caption is rebuilt by placing each
/// surface at its span and filling gaps with spaces, which only works when
/// surfaces are verbatim slices of the caption.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenDumpRecord {
    pub caption_id: String,
    pub tokenizer: String,
    pub tokens: Vec<TokenRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

impl TokenDumpRecord {
    pub fn from_tokenization(t: &Tokenization) -> Self {
        Self {
            caption_id: t.caption_id().to_owned(),
            tokenizer: t.tokenizer().to_owned(),
            tokens: t
                .spans()
                .iter()
                .map(|s| TokenRecord {
                    id: s.token_id,
                    surface: s.surface.clone(),
                    start: s.start,
                    end: s.end,
                })
                .collect(),
            text: Some(t.text().to_owned()),
        }
    }

    fn rebuilt_text(&self, line: usize) -> Result<String> {
        let len = self.tokens.iter().map(|t| t.end).max().unwrap_or(0);
        let mut bytes = vec![b' '; len];
        for (k, t) in self.tokens.iter().enumerate() {
            if t.start == t.end {
                continue;
            }
            if t.start > t.end || t.surface.len() != t.end - t.start {
                return Err(Error::Parse {
                    line,
                    message: format!(
                        "token {k}: surface {:?} does not match span {}..{}; add a `text` field",
                        t.surface, t.start, t.end
                    ),
                });
            }
            bytes[t.start..t.end].copy_from_slice(t.surface.as_bytes());
        }
        String::from_utf8(bytes).map_err(|_| Error::Parse {
            line,
            message: "rebuilt caption is not valid UTF-8".into(),
        })
    }

    pub fn to_tokenization(&self, line: usize) -> Result<Tokenization> {
        let text = match &self.text {
            Some(t) => t.clone(),
            None => self.rebuilt_text(line)?,
        };
        let spans = self
            .tokens
            .iter()
            .map(|t| TokenSpan::new(t.id, t.surface.clone(), t.start, t.end))
            .collect();
        Tokenization::new(&self.caption_id, &self.tokenizer, text, spans)
    }
}

pub fn load_token_dump(path: impl AsRef<Path>) -> Result<Vec<Tokenization>> {
    read_jsonl_file::<TokenDumpRecord>(path)?
        .into_iter()
        .map(|(line, r)| r.to_tokenization(line))
        .collect()
}

/// Log-prob dump; `null` marks an unscored (special) token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogProbDumpRecord {
    pub caption_id: String,
    pub tokenizer: String,
    pub with_image: Vec<Option<f64>>,
    pub text_only: Vec<Option<f64>>,
}

impl From<&LogProbRecord<f64>> for LogProbDumpRecord {
    fn from(r: &LogProbRecord<f64>) -> Self {
        Self {
            caption_id: r.caption_id.clone(),
            tokenizer: r.tokenizer.clone(),
            with_image: r.with_image.clone(),
            text_only: r.text_only.clone(),
        }
    }
}

pub fn read_logprob_dump<R: BufRead>(reader: R) -> Result<Vec<LogProbRecord<f64>>> {
    read_jsonl::<LogProbDumpRecord, _>(reader)?
        .into_iter()
        .map(|(line, r)| {
            let rec = LogProbRecord {
                caption_id: r.caption_id,
                tokenizer: r.tokenizer,
                with_image: r.with_image,
                text_only: r.text_only,
            };
            rec.validate().map_err(|issue| issue.at_line(line))?;
            Ok(rec)
        })
        .collect()
}

/// Loads and strictly validates a log-prob dump.
pub fn load_logprob_dump(path: impl AsRef<Path>) -> Result<Vec<LogProbRecord<f64>>> {
    let file = File::open(path.as_ref())
        .map_err(|e| Error::Io(format!("{}: {e}", path.as_ref().display())))?;
    read_logprob_dump(BufReader::new(file))
}

pub fn write_logprob_dump<W: Write>(w: W, records: &[LogProbRecord<f64>]) -> Result<()> {
    let recs: Vec<LogProbDumpRecord> = records.iter().map(Into::into).collect();
    write_jsonl(w, &recs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub caption_id: String,
    pub tokenizer: String,
    pub kind: ScoreKind,
    pub values: Vec<Option<f64>>,
}

impl ScoreRecord {
    pub fn new(tokenizer: impl Into<String>, s: &ConfidenceSeries<f64>) -> Self {
        Self {
            caption_id: s.caption_id().to_owned(),
            tokenizer: tokenizer.into(),
            kind: s.kind(),
            values: s.values().to_vec(),
        }
    }

    pub fn to_series(&self, line: usize) -> Result<ConfidenceSeries<f64>> {
        ConfidenceSeries::new(&self.caption_id, self.kind, self.values.clone()).map_err(|e| {
            Error::Range {
                line,
                field: format!("values ({e})"),
            }
        })
    }
}

/// One alignment map per caption.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignmentRecord {
    pub caption_id: String,
    pub source_tokenizer: String,
    pub target_tokenizer: String,
    pub source_len: usize,
    pub target_len: usize,
    pub map: Vec<Vec<usize>>,
}

impl AlignmentRecord {
    pub fn new(source: &Tokenization, target: &Tokenization, m: &AlignmentMap) -> Self {
        Self {
            caption_id: source.caption_id().to_owned(),
            source_tokenizer: source.tokenizer().to_owned(),
            target_tokenizer: target.tokenizer().to_owned(),
            source_len: m.source_len(),
            target_len: m.target_len(),
            map: m.entries().to_vec(),
        }
    }

    pub fn to_map(&self, line: usize) -> Result<AlignmentMap> {
        AlignmentMap::new(self.source_len, self.target_len, self.map.clone()).map_err(|e| {
            Error::Parse {
                line,
                message: e.to_string(),
            }
        })
    }
}

/// Weight sidecar: the contract between this toolkit and a trainer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SidecarRecord {
    pub caption_id: String,
    pub tokenizer: String,
    pub sigma: f64,
    pub epsilon: f64,
    pub score_kind: ScoreKind,
    pub weights: Vec<f64>,
    pub flagged: Vec<usize>,
}

impl SidecarRecord {
    pub fn new(
        tokenizer: impl Into<String>,
        cfg: &ThresholdConfig<f64>,
        w: &WeightVector<f64>,
    ) -> Self {
        Self {
            caption_id: w.caption_id.clone(),
            tokenizer: tokenizer.into(),
            sigma: cfg.sigma,
            epsilon: cfg.epsilon,
            score_kind: cfg.score_kind,
            weights: w.weights.clone(),
            flagged: w.flagged.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoisyCaptionRecord {
    pub caption_id: String,
    pub text: String,
    pub clean_text: String,
    pub mask: Vec<u8>,
    pub categories: Vec<Option<Category>>,
    pub seed: u64,
}

impl From<&NoisyCaption> for NoisyCaptionRecord {
    fn from(n: &NoisyCaption) -> Self {
        Self {
            caption_id: n.caption.id.clone(),
            text: n.caption.text.clone(),
            clean_text: n.clean_text.clone(),
            mask: n.noise_mask.iter().map(|&m| u8::from(m)).collect(),
            categories: n.categories.clone(),
            seed: n.injection_seed,
        }
    }
}

impl NoisyCaptionRecord {
    pub fn to_noisy(&self, line: usize) -> Result<NoisyCaption> {
        let mask = self
            .mask
            .iter()
            .enumerate()
            .map(|(k, &m)| match m {
                0 => Ok(false),
                1 => Ok(true),
                _ => Err(Error::Range {
                    line,
                    field: format!("mask[{k}]"),
                }),
            })
            .collect::<Result<Vec<_>>>()?;
        NoisyCaption::new(
            Caption::new(&self.caption_id, &self.text),
            self.clean_text.clone(),
            mask,
            self.categories.clone(),
            self.seed,
        )
        .map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })
    }
}

pub fn load_noisy_corpus(path: impl AsRef<Path>) -> Result<Vec<NoisyCaption>> {
    read_jsonl_file::<NoisyCaptionRecord>(path)?
        .into_iter()
        .map(|(line, r)| r.to_noisy(line))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn logprob_dump_loads_two_records() {
        let src = r#"{"caption_id":"a","tokenizer":"t","with_image":[0.5,null],"text_only":[0.25,null]}

{"caption_id":"b","tokenizer":"t","with_image":[1.0],"text_only":[0.0]}
"#;
        let recs = read_logprob_dump(Cursor::new(src)).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].with_image, vec![Some(0.5), None]);
    }

    #[test]
    fn logprob_dump_range_error_has_line() {
        let src = r#"{"caption_id":"a","tokenizer":"t","with_image":[0.5],"text_only":[0.5]}
{"caption_id":"b","tokenizer":"t","with_image":[1.3],"text_only":[0.5]}"#;
        assert_eq!(
            read_logprob_dump(Cursor::new(src)),
            Err(Error::Range {
                line: 2,
                field: "with_image[0]".into()
            })
        );
    }

    #[test]
    fn logprob_dump_length_mismatch_is_parse_error() {
        let src = r#"{"caption_id":"a","tokenizer":"t","with_image":[0.5,0.1],"text_only":[0.5]}"#;
        assert!(matches!(
            read_logprob_dump(Cursor::new(src)),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn logprob_dump_rejects_nan_and_garbage() {
        let nan = r#"{"caption_id":"a","tokenizer":"t","with_image":[NaN],"text_only":[0.5]}"#;
        assert!(matches!(
            read_logprob_dump(Cursor::new(nan)),
            Err(Error::Parse { line: 1, .. })
        ));
        let missing = r#"{"caption_id":"a","with_image":[],"text_only":[]}"#;
        assert!(matches!(
            read_logprob_dump(Cursor::new(missing)),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn token_dump_without_text_rebuilds_caption() {
        let src = r#"{"caption_id":"c","tokenizer":"x","tokens":[{"id":1,"surface":"<s>","start":0,"end":0},{"id":5,"surface":"a","start":0,"end":1},{"id":6,"surface":"dog","start":2,"end":5}]}"#;
        let recs = read_jsonl::<TokenDumpRecord, _>(Cursor::new(src)).unwrap();
        let t = recs[0].1.to_tokenization(recs[0].0).unwrap();
        assert_eq!(t.text(), "a dog");
        assert_eq!(t.len(), 3);
    }

    #[test]
    fn token_dump_normalized_surface_needs_text() {
        let bare = r#"{"caption_id":"c","tokenizer":"x","tokens":[{"id":1,"surface":"▁Dog","start":0,"end":3}]}"#;
        let recs = read_jsonl::<TokenDumpRecord, _>(Cursor::new(bare)).unwrap();
        assert!(matches!(
            recs[0].1.to_tokenization(1),
            Err(Error::Parse { .. })
        ));

        let with_text = r#"{"caption_id":"c","tokenizer":"x","text":"dog","tokens":[{"id":1,"surface":"▁Dog","start":0,"end":3}]}"#;
        let recs = read_jsonl::<TokenDumpRecord, _>(Cursor::new(with_text)).unwrap();
        assert_eq!(recs[0].1.to_tokenization(1).unwrap().source_text(0), "dog");
    }

    #[test]
    fn token_dump_coverage_error() {
        let src = r#"{"caption_id":"c","tokenizer":"x","text":"a dog","tokens":[{"id":1,"surface":"a","start":0,"end":1}]}"#;
        let recs = read_jsonl::<TokenDumpRecord, _>(Cursor::new(src)).unwrap();
        assert!(matches!(
            recs[0].1.to_tokenization(1),
            Err(Error::Coverage { .. })
        ));
    }

    #[test]
    fn sidecar_schema_field_names() {
        let cfg = ThresholdConfig {
            sigma: 0.3,
            epsilon: 0.5,
            population: crate::reweight::Population::Corpus,
            score_kind: ScoreKind::TextOnly,
        };
        let w = WeightVector {
            caption_id: "c".into(),
            weights: vec![1.0, -1.0],
            flagged: vec![1],
        };
        let json = serde_json::to_string(&SidecarRecord::new("whitespace", &cfg, &w)).unwrap();
        assert_eq!(
            json,
            r#"{"caption_id":"c","tokenizer":"whitespace","sigma":0.3,"epsilon":0.5,"score_kind":"text_only","weights":[1.0,-1.0],"flagged":[1]}"#
        );
    }

    #[test]
    fn noisy_record_mask_must_be_binary() {
        let rec = NoisyCaptionRecord {
            caption_id: "c".into(),
            text: "a b".into(),
            clean_text: "a b".into(),
            mask: vec![0, 2],
            categories: vec![None, None],
            seed: 0,
        };
        assert!(matches!(rec.to_noisy(4), Err(Error::Range { line: 4, .. })));
    }
}
