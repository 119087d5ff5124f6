//! Ensemble inference: majority vote on non-responses, then the mean
//! adapted posterior over the members that did not flag the trial.

use serde::{Deserialize, Serialize};

use crate::encoder::Document;
use crate::error::{Error, Result};
use crate::model::{PairScore, Verifier};

/// Output value reserved for non-responses.
pub const NON_RESPONSE: f64 = 0.5;
/// Answered trials that average to exactly 0.5 are reported as this value.
pub const ANSWERED_HALF: f64 = 0.5 - 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleVerdict {
    pub value: f64,
    pub is_nonresponse: bool,
    /// `(p_ual_h1, p_h2)` per member.
    pub per_model: Vec<(f64, f64)>,
}

/// True when strictly more than `⌊M/2⌋` members flag the trial.
pub fn vote(p_h2: &[f64]) -> Result<bool> {
    let m = p_h2.len();
    if m.is_multiple_of(2) {
        return Err(Error::EvenEnsemble(m));
    }
    let flags = p_h2.iter().filter(|&&p| p >= 0.5).count();
    Ok(flags > m / 2)
}

/// Mean of `p_ual_h1` over members with `p_h2 < 0.5`.
pub fn confident_average(per_model: &[(f64, f64)]) -> Result<f64> {
    // Running mean, so equal member outputs average to exactly that value.
    let (mean, n) = per_model
        .iter()
        .filter(|(_, h2)| *h2 < 0.5)
        .fold((0.0, 0usize), |(m, n), (p, _)| (m + (p - m) / (n + 1) as f64, n + 1));
    if n == 0 {
        return Err(Error::EmptyConfidentSet);
    }
    Ok(mean)
}

pub fn aggregate(per_model: Vec<(f64, f64)>) -> Result<EnsembleVerdict> {
    let flags: Vec<f64> = per_model.iter().map(|(_, h2)| *h2).collect();
    if vote(&flags)? {
        return Ok(EnsembleVerdict {
            value: NON_RESPONSE,
            is_nonresponse: true,
            per_model,
        });
    }
    let mut value = confident_average(&per_model)?;
    if value == NON_RESPONSE {
        value = ANSWERED_HALF;
    }
    Ok(EnsembleVerdict {
        value,
        is_nonresponse: false,
        per_model,
    })
}

/// `(p_ual_h1, p_h2)` for one member. Without a trained detector, or when
/// the detector is disabled, the member is always confident.
pub fn member_outputs(score: &PairScore, use_detector: bool) -> (f64, f64) {
    let p_h2 = if use_detector { score.p_h2.unwrap_or(0.0) } else { 0.0 };
    (score.p_ual_h1, p_h2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub members: Vec<Verifier>,
}

impl Ensemble {
    pub fn new(members: Vec<Verifier>) -> Result<Self> {
        if members.len().is_multiple_of(2) {
            return Err(Error::EvenEnsemble(members.len()));
        }
        let first = &members[0].featurizer;
        if members.iter().any(|m| &m.featurizer != first) {
            return Err(Error::InvalidConfig(
                "ensemble members disagree on the featurizer".into(),
            ));
        }
        Ok(Self { members })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn has_detector(&self) -> bool {
        self.members.iter().all(|m| m.o2d2.is_some())
    }

    pub fn predict_features(&self, f1: &[f64], f2: &[f64], use_detector: bool) -> Result<EnsembleVerdict> {
        let per_model = self
            .members
            .iter()
            .map(|m| Ok(member_outputs(&m.score_features(f1, f2)?, use_detector)))
            .collect::<Result<Vec<_>>>()?;
        aggregate(per_model)
    }

    pub fn predict(&self, d1: &Document, d2: &Document, use_detector: bool) -> Result<EnsembleVerdict> {
        let fz = &self.members[0].featurizer;
        self.predict_features(&fz.featurize(d1)?, &fz.featurize(d2)?, use_detector)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vote_examples() {
        assert!(vote(&[0.6, 0.7, 0.2]).unwrap());
        assert!(!vote(&[0.6, 0.4, 0.2]).unwrap());
        assert!(!vote(&[0.4]).unwrap());
        assert!(vote(&[0.5]).unwrap());
        assert!(matches!(vote(&[0.1, 0.2]), Err(Error::EvenEnsemble(2))));
    }

    #[test]
    fn confident_average_examples() {
        assert_eq!(confident_average(&[(0.73, 0.1)]).unwrap(), 0.73);
        let avg = confident_average(&[(0.1, 0.9), (0.8, 0.2), (0.6, 0.3)]).unwrap();
        assert!((avg - 0.7).abs() < 1e-15);
        assert_eq!(confident_average(&[(0.4, 0.0), (0.4, 0.1), (0.4, 0.2)]).unwrap(), 0.4);
        assert!(matches!(
            confident_average(&[(0.4, 0.9)]),
            Err(Error::EmptyConfidentSet)
        ));
    }

    #[test]
    fn aggregate_examples() {
        let v = aggregate(vec![(0.9, 0.6), (0.8, 0.7), (0.1, 0.9)]).unwrap();
        assert!(v.is_nonresponse);
        assert_eq!(v.value, NON_RESPONSE);

        let v = aggregate(vec![(0.1, 0.9), (0.8, 0.2), (0.6, 0.3)]).unwrap();
        assert!(!v.is_nonresponse);
        assert!((v.value - 0.7).abs() < 1e-15);

        let v = aggregate(vec![(0.5, 0.1)]).unwrap();
        assert_eq!(v.value, ANSWERED_HALF);
        assert!(!v.is_nonresponse);
    }
}
