//! Supervision M-step: gradient refinement of template weights given
//! soft labels q from the E-step.
//!
//! The objective being maximized is the expected complete-data log
//! likelihood sum_v w_v E_q[f_v] - log Z(w), minus Gaussian prior
//! penalties. Its gradient per template weight is
//! E_model[f_v] - E_q[f_v] + precision (w - mean), with the model
//! expectation taken from BP factor beliefs re-estimated each step.
//! Because a template's gradient sums over all of its groundings, the
//! raw magnitude grows with grounding count; the update divides by that
//! count so the fixed default learning rate behaves the same on one
//! grounding or thousands. Fixed weights never move.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{FactorContent, FactorGraph};
use crate::inference::{
    exact_log_partition, run_bp_state, BpConfig, Marginals,
};
use crate::templates::{Feature, FormulaTemplate};

/// Abort threshold: a weight passing this magnitude means the step size
/// or the supervision is broken, not that the optimum is out there.
pub const WEIGHT_DIVERGENCE_BOUND: f64 = 100.0;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct MStepConfig {
    pub learning_rate: f64,
    pub steps: usize,
    /// Stop once the largest raw gradient magnitude drops below this.
    pub grad_tol: f64,
}

impl Default for MStepConfig {
    fn default() -> Self {
        MStepConfig {
            learning_rate: 0.1,
            steps: 50,
            grad_tol: 1e-5,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MStepReport {
    pub steps_taken: usize,
    pub converged: bool,
    pub max_abs_gradient: f64,
}

fn validate_q(graph: &FactorGraph, q: &Marginals) -> Result<()> {
    if q.len() != graph.n_variables() || q.n_labels() != graph.n_labels() {
        return Err(Error::MarginalCount { got: q.len(), want: graph.n_variables() });
    }
    Ok(())
}

/// E_q[sum over groundings of f] for every weight slot, under the
/// mean-field factorization of q. Exact for unaries; pairwise and
/// at-least-one features use the product of the member marginals.
fn data_expectations(graph: &FactorGraph, q: &Marginals) -> Vec<f64> {
    let mut exp = vec![0.0; graph.weight_slots().len()];
    for f in graph.factors() {
        let Some(slot) = f.weight_slot else { continue };
        let FactorContent::Feature(feat) = &f.content else { continue };
        let v = &f.neighbors;
        exp[slot] += match feat {
            Feature::LabelEquals { label } => q.row(v[0])[*label],
            Feature::Agreement => (0..graph.n_labels())
                .map(|y| q.row(v[0])[y] * q.row(v[1])[y])
                .sum(),
            Feature::CoLabel { label } => q.row(v[0])[*label] * q.row(v[1])[*label],
            Feature::AtLeastOne { label } => {
                1.0 - v.iter().map(|&i| 1.0 - q.row(i)[*label]).product::<f64>()
            }
        };
    }
    exp
}

/// E_model[sum over groundings of f] for every weight slot, read off the
/// factor beliefs of a converged (or at least settled) BP state.
fn model_expectations(graph: &FactorGraph, state: &crate::inference::BpState) -> Vec<f64> {
    use crate::inference::{logaddexp, logsumexp};
    let k = graph.n_labels();
    let mut exp = vec![0.0; graph.weight_slots().len()];
    for (fi, f) in graph.factors().iter().enumerate() {
        let Some(slot) = f.weight_slot else { continue };
        let FactorContent::Feature(feat) = &f.content else { continue };
        let w = graph.weight_of(f);
        exp[slot] += match feat {
            Feature::LabelEquals { label } => {
                let m = state.v2f_msg(fi, 0);
                let scores: Vec<f64> = (0..k)
                    .map(|y| if y == *label { w + m[y] } else { m[y] })
                    .collect();
                (scores[*label] - logsumexp(&scores)).exp()
            }
            Feature::Agreement | Feature::CoLabel { .. } => {
                let m0 = state.v2f_msg(fi, 0).to_vec();
                let m1 = state.v2f_msg(fi, 1).to_vec();
                let mut z = f64::NEG_INFINITY;
                let mut hit = f64::NEG_INFINITY;
                for y0 in 0..k {
                    for y1 in 0..k {
                        let s = w * feat.eval(&[y0, y1]) + m0[y0] + m1[y1];
                        z = logaddexp(z, s);
                        if feat.eval(&[y0, y1]) == 1.0 {
                            hit = logaddexp(hit, s);
                        }
                    }
                }
                (hit - z).exp()
            }
            Feature::AtLeastOne { label } => {
                // P0 = prod over neighbors of (1 - p_j); belief of the
                // satisfied event is e^w (1-P0) / (e^w (1-P0) + P0)
                let log_p0: f64 = (0..f.neighbors.len())
                    .map(|slot_i| {
                        let p = state.v2f_msg(fi, slot_i)[*label].exp();
                        (-p.min(1.0)).ln_1p()
                    })
                    .sum();
                let log_one_minus_p0 = (-(log_p0.exp())).ln_1p();
                let num = w + log_one_minus_p0;
                let den = logaddexp(num, log_p0);
                (num - den).exp()
            }
        };
    }
    exp
}

/// Model expectation of one template's summed feature, BP-estimated.
pub fn feature_expectation_model(
    graph: &FactorGraph,
    template_id: &str,
    bp: &BpConfig,
) -> Result<f64> {
    let slot = graph
        .slot_of_template(template_id)
        .ok_or_else(|| Error::InvalidTemplate {
            id: template_id.to_string(),
            msg: "no such template in graph".into(),
        })?;
    let (state, _, _) = run_bp_state(graph, bp)?;
    Ok(model_expectations(graph, &state)[slot])
}

/// Data expectation of one template's summed feature under q.
pub fn feature_expectation_data(
    graph: &FactorGraph,
    q: &Marginals,
    template_id: &str,
) -> Result<f64> {
    validate_q(graph, q)?;
    let slot = graph
        .slot_of_template(template_id)
        .ok_or_else(|| Error::InvalidTemplate {
            id: template_id.to_string(),
            msg: "no such template in graph".into(),
        })?;
    Ok(data_expectations(graph, q)[slot])
}

/// The maximized objective, evaluated exactly (enumeration for log Z):
/// sum_v w_v E_q[f_v] - log Z - sum prior penalties. Only viable on
/// graphs small enough for exact inference.
pub fn m_step_objective(graph: &FactorGraph, q: &Marginals) -> Result<f64> {
    validate_q(graph, q)?;
    if graph.has_prediction_potentials() {
        return Err(Error::PredictionFactorsPresent);
    }
    let data = data_expectations(graph, q);
    let log_z = exact_log_partition(graph)?;
    let mut obj = -log_z;
    for (slot, ws) in graph.weight_slots().iter().enumerate() {
        let w = ws.param.value;
        obj += w * data[slot];
        let d = w - ws.param.prior_mean;
        obj -= 0.5 * ws.param.prior_precision * d * d;
    }
    Ok(obj)
}

/// Exact objective gradient per learnable template (enumeration-based
/// model expectations). The reference the BP path is tested against.
pub fn objective_gradient_exact(
    graph: &FactorGraph,
    q: &Marginals,
) -> Result<BTreeMap<String, f64>> {
    validate_q(graph, q)?;
    let data = data_expectations(graph, q);
    let mut out = BTreeMap::new();
    for (slot, ws) in graph.weight_slots().iter().enumerate() {
        if ws.param.fixed {
            continue;
        }
        let model = crate::inference::exact_template_expectation(graph, &ws.template_id)?;
        let prior = ws.param.prior_precision * (ws.param.value - ws.param.prior_mean);
        // gradient of the *minimized* form: model - data + prior
        out.insert(ws.template_id.clone(), model - data[slot] + prior);
    }
    Ok(out)
}

/// Gradient-descent refinement of the learnable template weights.
///
/// Starting weights are the graph's current slot values. On return both
/// the graph slots and the matching entries of `templates` carry the
/// refined values; fixed weights are untouched. Divergence past
/// [`WEIGHT_DIVERGENCE_BOUND`] aborts with an error naming the template.
pub fn m_step_supervision(
    graph: &mut FactorGraph,
    q: &Marginals,
    templates: &mut [FormulaTemplate],
    config: &MStepConfig,
    bp: &BpConfig,
) -> Result<MStepReport> {
    validate_q(graph, q)?;
    if graph.has_prediction_potentials() {
        return Err(Error::PredictionFactorsPresent);
    }
    if !(config.learning_rate.is_finite() && config.learning_rate > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "m-step learning rate must be positive, got {}",
            config.learning_rate
        )));
    }

    let data = data_expectations(graph, q);
    let n_slots = graph.weight_slots().len();
    let mut groundings = vec![0usize; n_slots];
    for f in graph.factors() {
        if let Some(slot) = f.weight_slot {
            groundings[slot] += 1;
        }
    }
    let learnable: Vec<usize> = (0..n_slots)
        .filter(|&s| !graph.weight_slots()[s].param.fixed)
        .collect();

    let mut steps_taken = 0;
    let mut converged = false;
    let mut max_grad = 0.0;
    for _ in 0..config.steps {
        let (state, _, _) = run_bp_state(graph, bp)?;
        let model = model_expectations(graph, &state);

        let mut grads = Vec::with_capacity(learnable.len());
        max_grad = 0.0f64;
        for &slot in &learnable {
            let ws = &graph.weight_slots()[slot];
            let prior = ws.param.prior_precision * (ws.param.value - ws.param.prior_mean);
            let g = model[slot] - data[slot] + prior;
            max_grad = max_grad.max(g.abs());
            grads.push((slot, g));
        }
        if max_grad <= config.grad_tol {
            converged = true;
            break;
        }

        for (slot, g) in grads {
            let scale = groundings[slot].max(1) as f64;
            let current = graph.weight_slots()[slot].param.value;
            let next = current - config.learning_rate * g / scale;
            if !next.is_finite() || next.abs() > WEIGHT_DIVERGENCE_BOUND {
                return Err(Error::WeightDiverged {
                    template: graph.weight_slots()[slot].template_id.clone(),
                    value: next,
                    bound: WEIGHT_DIVERGENCE_BOUND,
                });
            }
            graph.set_slot_weight(slot, next);
        }
        steps_taken += 1;
    }

    for t in templates.iter_mut() {
        if t.weight.fixed {
            continue;
        }
        if let Some(slot) = graph.slot_of_template(&t.id) {
            t.weight.value = graph.weight_slots()[slot].param.value;
        }
    }
    Ok(MStepReport { steps_taken, converged, max_abs_gradient: max_grad })
}
