//! Hallucination rate from three-vote object existence judgments.
//!
//! Each extracted object gets `H = votes_not_exist / 3`; a caption's rate is
//! the mean of `H` over its `N` objects. Both are computed as
//! `Σ votes / (3N)`, one division, so the result is exact over rationals and
//! correctly rounded over floats.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const JUDGE_ROUNDS: u8 = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectJudgment {
    pub name: String,
    pub votes_not_exist: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HallucinationJudgment {
    pub caption_id: String,
    pub objects: Vec<ObjectJudgment>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaptionHalRate<S> {
    pub caption_id: String,
    pub num_objects: usize,
    pub rate: S,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HalRateReport<S> {
    pub per_caption: Vec<CaptionHalRate<S>>,
    pub corpus_mean_rate: S,
    pub corpus_mean_num_obj: S,
}

pub fn hal_rate<S: Scalar>(judgments: &[HallucinationJudgment]) -> Result<HalRateReport<S>> {
    if judgments.is_empty() {
        return Err(Error::EmptyInput("no judgments".into()));
    }
    let mut per_caption = Vec::with_capacity(judgments.len());
    for j in judgments {
        if j.objects.is_empty() {
            return Err(Error::EmptyObjects(j.caption_id.clone()));
        }
        let mut votes = 0usize;
        for o in &j.objects {
            if o.votes_not_exist > JUDGE_ROUNDS {
                return Err(Error::Config(format!(
                    "caption {}: object {:?} has {} votes, at most {JUDGE_ROUNDS} allowed",
                    j.caption_id, o.name, o.votes_not_exist
                )));
            }
            votes += usize::from(o.votes_not_exist);
        }
        let n = j.objects.len();
        per_caption.push(CaptionHalRate {
            caption_id: j.caption_id.clone(),
            num_objects: n,
            rate: S::from_count(votes) / S::from_count(usize::from(JUDGE_ROUNDS) * n),
        });
    }
    let count = S::from_count(per_caption.len());
    let corpus_mean_rate = per_caption.iter().fold(S::zero(), |acc, c| acc + c.rate) / count;
    let total_objects: usize = per_caption.iter().map(|c| c.num_objects).sum();
    Ok(HalRateReport {
        per_caption,
        corpus_mean_rate,
        corpus_mean_num_obj: S::from_count(total_objects) / count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Rational64;

    fn judgment(id: &str, votes: &[u8]) -> HallucinationJudgment {
        HallucinationJudgment {
            caption_id: id.into(),
            objects: votes
                .iter()
                .enumerate()
                .map(|(i, &v)| ObjectJudgment {
                    name: format!("object {i}"),
                    votes_not_exist: v,
                })
                .collect(),
        }
    }

    #[test]
    fn rate_examples() {
        let r = hal_rate::<Rational64>(&[
            judgment("a", &[3, 0, 1, 2]),
            judgment("b", &[0, 0]),
            judgment("c", &[3]),
        ])
        .unwrap();
        assert_eq!(r.per_caption[0].rate, Rational64::new(1, 2));
        assert_eq!(r.per_caption[1].rate, Rational64::new(0, 1));
        assert_eq!(r.per_caption[2].rate, Rational64::new(1, 1));
        assert_eq!(r.corpus_mean_rate, Rational64::new(1, 2));
        assert_eq!(r.corpus_mean_num_obj, Rational64::new(7, 3));

        let f = hal_rate::<f64>(&[judgment("a", &[3, 0, 1, 2])]).unwrap();
        assert_eq!(f.per_caption[0].rate, 0.5);
    }

    #[test]
    fn errors() {
        assert!(matches!(hal_rate::<f64>(&[]), Err(Error::EmptyInput(_))));
        assert_eq!(
            hal_rate::<f64>(&[judgment("x", &[])]),
            Err(Error::EmptyObjects("x".into()))
        );
        assert!(hal_rate::<f64>(&[judgment("x", &[4])]).is_err());
    }

    #[test]
    fn order_invariant() {
        let a =
            hal_rate::<Rational64>(&[judgment("a", &[1, 2, 0]), judgment("b", &[3, 3])]).unwrap();
        let b =
            hal_rate::<Rational64>(&[judgment("b", &[3, 3]), judgment("a", &[0, 2, 1])]).unwrap();
        assert_eq!(a.corpus_mean_rate, b.corpus_mean_rate);
        assert_eq!(a.corpus_mean_num_obj, b.corpus_mean_num_obj);
    }
}
