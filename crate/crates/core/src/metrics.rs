//! Classification metrics over id-keyed predictions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::LabelSpace;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// True instances of this class.
    pub support: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub accuracy: f64,
    /// Keyed by label name.
    pub per_class: BTreeMap<String, ClassMetrics>,
    /// Unweighted mean of per-class F1.
    pub macro_f1: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Predictions and truth must cover exactly the same ids.
pub fn evaluate(
    labels: &LabelSpace,
    predicted: &BTreeMap<String, usize>,
    truth: &BTreeMap<String, usize>,
) -> Result<EvalReport> {
    if predicted.is_empty() {
        return Err(Error::Invalid("evaluation requires at least one prediction".into()));
    }
    if let Some(id) = predicted.keys().find(|id| !truth.contains_key(*id)) {
        return Err(Error::Invalid(format!("prediction for `{id}` has no truth label")));
    }
    if let Some(id) = truth.keys().find(|id| !predicted.contains_key(*id)) {
        return Err(Error::Invalid(format!("truth label for `{id}` has no prediction")));
    }

    let k = labels.len();
    let mut tp = vec![0usize; k];
    let mut fp = vec![0usize; k];
    let mut fn_ = vec![0usize; k];
    let mut correct = 0usize;
    for (id, &p) in predicted {
        let t = truth[id];
        if p >= k || t >= k {
            return Err(Error::Invalid(format!("label index out of range for `{id}`")));
        }
        if p == t {
            correct += 1;
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fn_[t] += 1;
        }
    }

    let mut per_class = BTreeMap::new();
    let mut f1_sum = 0.0;
    for c in 0..k {
        let precision = ratio(tp[c], tp[c] + fp[c]);
        let recall = ratio(tp[c], tp[c] + fn_[c]);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        f1_sum += f1;
        per_class.insert(
            labels.label(c).to_string(),
            ClassMetrics { precision, recall, f1, support: tp[c] + fn_[c] },
        );
    }

    Ok(EvalReport {
        n: predicted.len(),
        accuracy: correct as f64 / predicted.len() as f64,
        per_class,
        macro_f1: f1_sum / k as f64,
    })
}
