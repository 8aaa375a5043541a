//! Seeded synthetic benchmark: linearly separable 2D features with
//! noisy, partially abstaining labeling-function votes in metadata.
//!
//! Positives cluster at (1, 1) and negatives at (-1, -1) with unit
//! noise, so a feature-based prediction module can beat every
//! individual vote source once denoising recovers decent targets.

use std::collections::BTreeMap;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Instance, LabelSpace, SparseVector, POSITIVE};
use crate::error::{Error, Result};
use crate::templates::{FormulaTemplate, Payload, Scope, WeightParam};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_instances: usize,
    /// Per-function probability of matching the true label when it
    /// votes; each must exceed chance.
    pub lf_accuracies: Vec<f64>,
    /// Per-function probability of voting at all.
    pub lf_coverage: f64,
    /// P(label = pos).
    pub class_balance: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_instances: 1000,
            lf_accuracies: vec![0.60, 0.65, 0.70, 0.75, 0.85],
            lf_coverage: 0.6,
            class_balance: 0.5,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_instances == 0 {
            return Err(Error::InvalidConfig("n_instances must be positive".into()));
        }
        if self.lf_accuracies.is_empty() {
            return Err(Error::InvalidConfig("need at least one labeling function".into()));
        }
        for (i, &a) in self.lf_accuracies.iter().enumerate() {
            if !(a > 0.5 && a <= 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "labeling function {i} accuracy {a} outside (0.5, 1]"
                )));
            }
        }
        if !(self.lf_coverage > 0.0 && self.lf_coverage <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "coverage {} outside (0, 1]",
                self.lf_coverage
            )));
        }
        if !(self.class_balance > 0.0 && self.class_balance < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "class balance {} outside (0, 1)",
                self.class_balance
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SynthOutput {
    /// Feature data with lf_<j> votes in metadata; no truth inside.
    pub dataset: Dataset,
    /// True label index per instance id.
    pub truth: BTreeMap<String, usize>,
    /// One learnable vote template per labeling function.
    pub templates: Vec<FormulaTemplate>,
}

pub fn generate(config: &SynthConfig) -> Result<SynthOutput> {
    config.validate()?;
    let labels = LabelSpace::binary();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let noise = Normal::new(0.0, 1.0).expect("valid normal");

    let mut instances = Vec::with_capacity(config.n_instances);
    let mut truth = BTreeMap::new();
    for i in 0..config.n_instances {
        let label = usize::from(rng.random_bool(config.class_balance));
        let center = if label == POSITIVE { 1.0 } else { -1.0 };
        let features = SparseVector::from_pairs([
            (0, center + noise.sample(&mut rng)),
            (1, center + noise.sample(&mut rng)),
        ]);

        let mut meta = BTreeMap::new();
        for (j, &acc) in config.lf_accuracies.iter().enumerate() {
            if !rng.random_bool(config.lf_coverage) {
                continue;
            }
            let vote = if rng.random_bool(acc) { label } else { 1 - label };
            meta.insert(format!("lf_{j}"), labels.label(vote).to_string());
        }

        let id = format!("s{i:05}");
        truth.insert(id.clone(), label);
        instances.push(Instance { id, group_id: None, features, text: None, meta });
    }

    let templates = (0..config.lf_accuracies.len())
        .map(|j| FormulaTemplate {
            id: format!("lf_{j}_vote"),
            weight: WeightParam::learnable(0.5).with_prior(0.5, 0.1),
            scope: Scope::All,
            payload: Payload::LabelingFunction { lf_id: format!("meta:lf_{j}") },
        })
        .collect();

    Ok(SynthOutput { dataset: Dataset::new(labels, instances)?, truth, templates })
}
