//! Shared-task evaluation metrics and calibration statistics.
//!
//! The non-response convention is the shared task's: a value of exactly 0.5
//! is an abstention. Conventions follow the public evaluator:
//!
//! * AUC is computed over all raw values (abstentions included at 0.5).
//! * c@1 credits abstentions with the accuracy on answered trials.
//! * F1 is computed over answered trials only.
//! * F0.5u counts every abstention as a false negative.
//! * Brier is reported as its complement `1 - mean squared error`.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NON_RESPONSE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Answer {
    pub id: String,
    pub value: f64,
    pub truth: bool,
}

impl Answer {
    pub fn is_nonresponse(&self) -> bool {
        self.value == NON_RESPONSE
    }

    fn predicted(&self) -> Option<bool> {
        if self.value > NON_RESPONSE {
            Some(true)
        } else if self.value < NON_RESPONSE {
            Some(false)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AnswerSet {
    answers: Vec<Answer>,
}

impl AnswerSet {
    pub fn new(answers: Vec<Answer>) -> Result<Self> {
        let mut seen = HashSet::new();
        for a in &answers {
            if !seen.insert(a.id.as_str()) {
                return Err(Error::IdMismatch(format!("duplicate answer id `{}`", a.id)));
            }
            if !a.value.is_finite() || !(0.0..=1.0).contains(&a.value) {
                return Err(Error::InvalidAnswer(format!(
                    "answer `{}` has value {} outside [0, 1]",
                    a.id, a.value
                )));
            }
        }
        Ok(Self { answers })
    }

    /// Join predicted values with ground truth by id. Every predicted id must
    /// have a truth entry; truth entries without a prediction are errors too.
    pub fn join(values: &[(String, f64)], truth: &HashMap<String, bool>) -> Result<Self> {
        if values.len() != truth.len() {
            return Err(Error::IdMismatch(format!(
                "{} answers but {} truth records",
                values.len(),
                truth.len()
            )));
        }
        let answers = values
            .iter()
            .map(|(id, value)| {
                let t = truth
                    .get(id)
                    .ok_or_else(|| Error::IdMismatch(format!("no truth for answer `{id}`")))?;
                Ok(Answer {
                    id: id.clone(),
                    value: *value,
                    truth: *t,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(answers)
    }

    pub fn answers(&self) -> &[Answer] {
        &self.answers
    }

    pub fn len(&self) -> usize {
        self.answers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.answers.is_empty()
    }

    pub fn nonresponse_rate(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.answers.iter().filter(|a| a.is_nonresponse()).count() as f64 / self.len() as f64
    }
}

/// Area under the ROC curve, ties counted as one half (rank-sum form).
pub fn auc(set: &AnswerSet) -> Result<f64> {
    let n_pos = set.answers.iter().filter(|a| a.truth).count();
    let n_neg = set.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<&Answer> = set.answers.iter().collect();
    order.sort_by(|a, b| a.value.total_cmp(&b.value));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && order[j + 1].value == order[i].value {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their average
        let avg = (i + j + 2) as f64 / 2.0;
        rank_sum += avg * order[i..=j].iter().filter(|a| a.truth).count() as f64;
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

pub fn c_at_1(set: &AnswerSet) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::EmptyAnswers);
    }
    let n = set.len() as f64;
    let mut correct = 0.0;
    let mut unanswered = 0.0;
    for a in &set.answers {
        match a.predicted() {
            None => unanswered += 1.0,
            Some(p) if p == a.truth => correct += 1.0,
            Some(_) => {}
        }
    }
    // One rounding: every other quantity is an exact integer.
    Ok(correct * (n + unanswered) / (n * n))
}

#[derive(Debug, Clone, Copy, Default)]
struct Confusion {
    tp: f64,
    fp: f64,
    fn_: f64,
    unanswered: f64,
}

fn confusion(set: &AnswerSet) -> Result<Confusion> {
    if !set.answers.iter().any(|a| a.truth) {
        return Err(Error::NoPositives);
    }
    let mut c = Confusion::default();
    for a in &set.answers {
        match (a.predicted(), a.truth) {
            (None, _) => c.unanswered += 1.0,
            (Some(true), true) => c.tp += 1.0,
            (Some(true), false) => c.fp += 1.0,
            (Some(false), true) => c.fn_ += 1.0,
            (Some(false), false) => {}
        }
    }
    Ok(c)
}

/// F0.5 with every non-response counted as a false negative.
pub fn f_05_u(set: &AnswerSet) -> Result<f64> {
    let c = confusion(set)?;
    let denom = 1.25 * c.tp + 0.25 * (c.fn_ + c.unanswered) + c.fp;
    Ok(if denom > 0.0 { 1.25 * c.tp / denom } else { 0.0 })
}

/// F1 over answered trials.
pub fn f1(set: &AnswerSet) -> Result<f64> {
    let c = confusion(set)?;
    let denom = 2.0 * c.tp + c.fp + c.fn_;
    Ok(if denom > 0.0 { 2.0 * c.tp / denom } else { 0.0 })
}

pub fn brier_complement(set: &AnswerSet) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::EmptyAnswers);
    }
    let sq: f64 = set
        .answers
        .iter()
        .map(|a| {
            let t = if a.truth { 1.0 } else { 0.0 };
            (a.value - t) * (a.value - t)
        })
        .sum();
    Ok(1.0 - sq / set.len() as f64)
}

/// Unweighted mean of AUC, c@1, F0.5u, F1 and Brier complement.
pub fn overall(scores: [f64; 5]) -> f64 {
    scores.iter().sum::<f64>() / 5.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PanScores {
    pub auc: f64,
    pub c_at_1: f64,
    pub f_05_u: f64,
    pub f1: f64,
    pub brier: f64,
    pub overall: f64,
}

impl PanScores {
    pub fn as_array(&self) -> [(&'static str, f64); 6] {
        [
            ("auc", self.auc),
            ("c@1", self.c_at_1),
            ("f_05_u", self.f_05_u),
            ("F1", self.f1),
            ("brier", self.brier),
            ("overall", self.overall),
        ]
    }
}

pub fn pan_scores(set: &AnswerSet) -> Result<PanScores> {
    let auc = auc(set)?;
    let c_at_1 = c_at_1(set)?;
    let f_05_u = f_05_u(set)?;
    let f1 = f1(set)?;
    let brier = brier_complement(set)?;
    Ok(PanScores {
        auc,
        c_at_1,
        f_05_u,
        f1,
        brier,
        overall: overall([auc, c_at_1, f_05_u, f1, brier]),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinStats {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub mean_confidence: f64,
    pub mean_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub acc: f64,
    pub conf: f64,
    pub ece: f64,
    pub mce: f64,
    pub bins: Vec<BinStats>,
}

/// Reliability statistics over confidence bins partitioning `[0.5, 1]`.
///
/// Confidence is the posterior of the predicted label; non-responses are
/// excluded. Empty bins are skipped by the MCE.
pub fn reliability(set: &AnswerSet, n_bins: usize) -> Result<Calibration> {
    if n_bins == 0 {
        return Err(Error::InvalidConfig("reliability needs at least one bin".into()));
    }
    let width = 0.5 / n_bins as f64;
    let mut count = vec![0usize; n_bins];
    let mut conf_sum = vec![0.0; n_bins];
    let mut acc_sum = vec![0.0; n_bins];
    for a in &set.answers {
        let Some(pred) = a.predicted() else { continue };
        let conf = if pred { a.value } else { 1.0 - a.value };
        let b = (((conf - 0.5) / width).floor() as usize).min(n_bins - 1);
        count[b] += 1;
        conf_sum[b] += conf;
        if pred == a.truth {
            acc_sum[b] += 1.0;
        }
    }
    let total: usize = count.iter().sum();
    let bins: Vec<BinStats> = (0..n_bins)
        .map(|b| {
            let n = count[b];
            let (mc, ma) = if n > 0 {
                (conf_sum[b] / n as f64, acc_sum[b] / n as f64)
            } else {
                (0.0, 0.0)
            };
            BinStats {
                lower: 0.5 + b as f64 * width,
                upper: 0.5 + (b + 1) as f64 * width,
                count: n,
                mean_confidence: mc,
                mean_accuracy: ma,
            }
        })
        .collect();
    if total == 0 {
        return Ok(Calibration {
            acc: 0.0,
            conf: 0.0,
            ece: 0.0,
            mce: 0.0,
            bins,
        });
    }
    let n = total as f64;
    let mut cal = Calibration {
        acc: 0.0,
        conf: 0.0,
        ece: 0.0,
        mce: 0.0,
        bins: Vec::new(),
    };
    for b in bins.iter().filter(|b| b.count > 0) {
        let w = b.count as f64 / n;
        let gap = (b.mean_confidence - b.mean_accuracy).abs();
        cal.acc += w * b.mean_accuracy;
        cal.conf += w * b.mean_confidence;
        cal.ece += w * gap;
        cal.mce = cal.mce.max(gap);
    }
    cal.bins = bins;
    Ok(cal)
}
