use super::NoisyCaption;
use crate::error::{Error, Result};
use crate::reweight::{select_threshold, Population};
use crate::scalar::Real;
use crate::scoring::ConfidenceSeries;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionRow<S> {
    pub sigma: f64,
    pub threshold: S,
    /// 1 when nothing is flagged.
    pub precision: f64,
    /// 1 when the corpus has no noisy tokens.
    pub recall: f64,
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionReport<S> {
    pub rows: Vec<DetectionRow<S>>,
}

impl<S> DetectionReport<S> {
    pub fn thresholds(&self) -> impl Iterator<Item = &S> {
        self.rows.iter().map(|r| &r.threshold)
    }
}

/// Precision and recall of the σ-quantile flagging rule against ground-truth
/// masks, one row per σ. ε is taken over the pooled scores of the whole
/// corpus; unscored tokens are ignored.
pub fn detection_metrics<S: Real>(
    scores: &[ConfidenceSeries<S>],
    truth: &[NoisyCaption],
    sigmas: &[f64],
) -> Result<DetectionReport<S>> {
    if scores.len() != truth.len() {
        return Err(Error::Alignment(format!(
            "{} score series for {} captions",
            scores.len(),
            truth.len()
        )));
    }
    let mut pairs: Vec<(S, bool)> = Vec::new();
    for (s, t) in scores.iter().zip(truth) {
        if s.caption_id() != t.caption.id {
            return Err(Error::Alignment(format!(
                "caption order differs: {} vs {}",
                s.caption_id(),
                t.caption.id
            )));
        }
        if s.len() != t.noise_mask.len() {
            return Err(Error::Alignment(format!(
                "caption {}: {} scores for {} mask entries",
                t.caption.id,
                s.len(),
                t.noise_mask.len()
            )));
        }
        pairs.extend(
            s.values()
                .iter()
                .zip(&t.noise_mask)
                .filter_map(|(v, &m)| v.map(|v| (v, m))),
        );
    }
    let pool: Vec<S> = pairs.iter().map(|p| p.0).collect();
    let kind = scores.first().map(|s| s.kind()).ok_or(Error::EmptyPool)?;

    let rows = sigmas
        .iter()
        .map(|&sigma| {
            let cfg = select_threshold(&pool, sigma, Population::Corpus, kind)?;
            let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
            for &(v, noisy) in &pairs {
                match (cfg.flags(v), noisy) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fn_ += 1,
                    (false, false) => {}
                }
            }
            let ratio = |num: u64, den: u64| {
                if den == 0 {
                    1.0
                } else {
                    num as f64 / den as f64
                }
            };
            Ok(DetectionRow {
                sigma,
                threshold: cfg.epsilon,
                precision: ratio(tp, tp + fp),
                recall: ratio(tp, tp + fn_),
                tp,
                fp,
                fn_,
            })
        })
        .collect::<Result<_>>()?;
    Ok(DetectionReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::ScoreKind;
    use crate::tokenize::Caption;

    fn truth(mask: &[bool]) -> NoisyCaption {
        let text = vec!["w"; mask.len()].join(" ");
        let cats = mask
            .iter()
            .map(|&m| m.then_some(super::super::Category::Color))
            .collect();
        NoisyCaption::new(
            Caption::new("c", text.clone()),
            text,
            mask.to_vec(),
            cats,
            0,
        )
        .unwrap()
    }

    fn series(v: &[f64]) -> ConfidenceSeries<f64> {
        ConfidenceSeries::new(
            "c",
            ScoreKind::TextOnly,
            v.iter().map(|&x| Some(x)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn perfect_separation() {
        // σ = 0.5 over four tokens puts ε at the second-lowest score, 0.2
        let r = detection_metrics(
            &[series(&[0.9, 0.1, 0.8, 0.2])],
            &[truth(&[true, false, true, false])],
            &[0.5],
        )
        .unwrap();
        let row = r.rows[0];
        assert_eq!(row.threshold, 0.2);
        assert_eq!((row.precision, row.recall), (1.0, 1.0));
        assert_eq!((row.tp, row.fp, row.fn_), (2, 0, 0));
    }

    #[test]
    fn all_clean_conventions() {
        let r = detection_metrics(
            &[series(&[0.1, 0.5, 0.9])],
            &[truth(&[false; 3])],
            &[0.3, 0.99],
        )
        .unwrap();
        assert_eq!(r.rows[0].precision, 0.0);
        assert_eq!(r.rows[0].fp, 2);
        // nothing flagged at σ = 0.99
        assert_eq!(r.rows[1].tp + r.rows[1].fp, 0);
        assert_eq!(r.rows[1].precision, 1.0);
    }

    #[test]
    fn misaligned_inputs() {
        assert!(matches!(
            detection_metrics(&[series(&[0.1])], &[truth(&[false, true])], &[0.5]),
            Err(Error::Alignment(_))
        ));
        assert!(matches!(
            detection_metrics(&[series(&[0.1])], &[], &[0.5]),
            Err(Error::Alignment(_))
        ));
    }

    #[test]
    fn recall_non_increasing_in_sigma() {
        let scores: Vec<f64> = (0..200).map(|i| ((i * 37) % 200) as f64 / 200.0).collect();
        let mask: Vec<bool> = (0..200).map(|i| i % 3 == 0).collect();
        let sigmas: Vec<f64> = (1..20).map(|i| i as f64 / 20.0).collect();
        let r = detection_metrics(&[series(&scores)], &[truth(&mask)], &sigmas).unwrap();
        let noisy = mask.iter().filter(|&&m| m).count() as u64;
        for w in r.rows.windows(2) {
            assert!(w[1].recall <= w[0].recall);
        }
        for row in &r.rows {
            assert_eq!(row.tp + row.fn_, noisy);
        }
    }
}
