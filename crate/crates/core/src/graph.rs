//! Grounded factor graph over latent label variables.
//!
//! One variable per instance, indexed 0..N-1 in dataset order. Factors
//! are either weighted indicator features (from templates, weights held
//! in per-template slots so tying is structural) or fixed log-probability
//! tables contributed by a prediction module. Every factor also carries
//! a `log_scale` shift; scaling a potential by a positive constant moves
//! only `log_scale`, and inference results are invariant to it.

use std::collections::BTreeMap;

use crate::data::{Dataset, LabelSpace};
use crate::error::{Error, Result};
use crate::templates::{Feature, FormulaTemplate, GroundFactor, TemplateKind, WeightParam};

const PREDICTION_PROB_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct VariableNode {
    pub instance_id: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FactorKind {
    Template(TemplateKind),
    PredictionUnary,
}

#[derive(Clone, Debug)]
pub enum FactorContent {
    /// Indicator feature scaled by the slot weight.
    Feature(Feature),
    /// Fixed table of log values, one per label of the single neighbor.
    LogTable(Vec<f64>),
}

#[derive(Clone, Debug)]
pub struct FactorNode {
    pub kind: FactorKind,
    /// Index into the graph's weight slots; None for prediction factors.
    pub weight_slot: Option<usize>,
    /// Distinct variable indices, in grounding order.
    pub neighbors: Vec<usize>,
    pub content: FactorContent,
    pub log_scale: f64,
}

#[derive(Clone, Debug)]
pub struct WeightSlot {
    pub template_id: String,
    pub param: WeightParam,
}

#[derive(Clone, Debug)]
pub struct FactorGraph {
    label_space: LabelSpace,
    variables: Vec<VariableNode>,
    factors: Vec<FactorNode>,
    var_adj: Vec<Vec<usize>>,
    weight_slots: Vec<WeightSlot>,
    slot_by_template: BTreeMap<String, usize>,
}

impl FactorGraph {
    /// Builds the graph from ground factors. Weight slots are created in
    /// template declaration order; every factor from the same template
    /// shares one slot.
    pub fn build(
        ground_factors: &[GroundFactor],
        templates: &[FormulaTemplate],
        dataset: &Dataset,
    ) -> Result<Self> {
        let n = dataset.len();
        let variables: Vec<VariableNode> = dataset
            .instances()
            .iter()
            .map(|inst| VariableNode { instance_id: inst.id.clone() })
            .collect();

        let mut weight_slots = Vec::new();
        let mut slot_by_template = BTreeMap::new();
        let mut kind_by_template = BTreeMap::new();
        for t in templates {
            if slot_by_template.contains_key(&t.id) {
                return Err(Error::InvalidTemplate {
                    id: t.id.clone(),
                    msg: "duplicate template id".into(),
                });
            }
            slot_by_template.insert(t.id.clone(), weight_slots.len());
            kind_by_template.insert(t.id.clone(), t.kind());
            weight_slots.push(WeightSlot {
                template_id: t.id.clone(),
                param: t.weight.clone(),
            });
        }

        let mut graph = FactorGraph {
            label_space: dataset.label_space().clone(),
            variables,
            factors: Vec::with_capacity(ground_factors.len()),
            var_adj: vec![Vec::new(); n],
            weight_slots,
            slot_by_template,
        };

        for gf in ground_factors {
            let slot = *graph.slot_by_template.get(&gf.template_id).ok_or_else(|| {
                Error::InvalidTemplate {
                    id: gf.template_id.clone(),
                    msg: "ground factor references a template that was not supplied".into(),
                }
            })?;
            let kind = kind_by_template[&gf.template_id];
            let mut seen = std::collections::BTreeSet::new();
            for &v in &gf.variables {
                if v >= n {
                    return Err(Error::DanglingVariable {
                        template: gf.template_id.clone(),
                        variable: v,
                        n_variables: n,
                    });
                }
                if !seen.insert(v) {
                    return Err(Error::RepeatedVariable {
                        template: gf.template_id.clone(),
                        variable: v,
                    });
                }
            }
            graph.push_factor(FactorNode {
                kind: FactorKind::Template(kind),
                weight_slot: Some(slot),
                neighbors: gf.variables.clone(),
                content: FactorContent::Feature(gf.feature.clone()),
                log_scale: 0.0,
            });
        }
        Ok(graph)
    }

    fn push_factor(&mut self, factor: FactorNode) {
        let idx = self.factors.len();
        for &v in &factor.neighbors {
            self.var_adj[v].push(idx);
        }
        self.factors.push(factor);
    }

    /// Attaches one fixed unary log-probability factor per variable from
    /// a prediction module's output. Rows must already be normalized;
    /// probabilities are floored before the log so hard zeros stay
    /// finite. Calling again replaces the previous prediction factors.
    pub fn attach_prediction_potentials(&mut self, predictions: &[Vec<f64>]) -> Result<()> {
        let n = self.variables.len();
        if predictions.len() != n {
            return Err(Error::MarginalCount { got: predictions.len(), want: n });
        }
        let k = self.label_space.len();
        for (i, row) in predictions.iter().enumerate() {
            if row.len() != k {
                return Err(Error::Invalid(format!(
                    "prediction row {i} has {} entries for {k} labels",
                    row.len()
                )));
            }
            let sum: f64 = row.iter().sum();
            if !(sum.is_finite() && (sum - 1.0).abs() <= 1e-9) {
                return Err(Error::UnnormalizedDistribution { index: i, sum });
            }
        }

        self.factors.retain(|f| f.kind != FactorKind::PredictionUnary);
        self.var_adj = vec![Vec::new(); n];
        let existing = std::mem::take(&mut self.factors);
        for f in existing {
            self.push_factor(f);
        }
        for (i, row) in predictions.iter().enumerate() {
            let table: Vec<f64> = row.iter().map(|p| p.max(PREDICTION_PROB_FLOOR).ln()).collect();
            self.push_factor(FactorNode {
                kind: FactorKind::PredictionUnary,
                weight_slot: None,
                neighbors: vec![i],
                content: FactorContent::LogTable(table),
                log_scale: 0.0,
            });
        }
        Ok(())
    }

    /// Drops any attached prediction factors, leaving supervision only.
    pub fn strip_prediction_potentials(&mut self) {
        let n = self.variables.len();
        self.factors.retain(|f| f.kind != FactorKind::PredictionUnary);
        self.var_adj = vec![Vec::new(); n];
        let existing = std::mem::take(&mut self.factors);
        for f in existing {
            self.push_factor(f);
        }
    }

    pub fn has_prediction_potentials(&self) -> bool {
        self.factors.iter().any(|f| f.kind == FactorKind::PredictionUnary)
    }

    pub fn label_space(&self) -> &LabelSpace {
        &self.label_space
    }

    pub fn n_labels(&self) -> usize {
        self.label_space.len()
    }

    pub fn n_variables(&self) -> usize {
        self.variables.len()
    }

    pub fn variables(&self) -> &[VariableNode] {
        &self.variables
    }

    pub fn factors(&self) -> &[FactorNode] {
        &self.factors
    }

    pub fn factors_of_variable(&self, v: usize) -> &[usize] {
        &self.var_adj[v]
    }

    pub fn weight_slots(&self) -> &[WeightSlot] {
        &self.weight_slots
    }

    pub fn slot_of_template(&self, template_id: &str) -> Option<usize> {
        self.slot_by_template.get(template_id).copied()
    }

    pub fn weight_of(&self, factor: &FactorNode) -> f64 {
        factor
            .weight_slot
            .map(|s| self.weight_slots[s].param.value)
            .unwrap_or(0.0)
    }

    pub fn set_weight(&mut self, template_id: &str, value: f64) -> Result<()> {
        let slot = self.slot_of_template(template_id).ok_or_else(|| Error::InvalidTemplate {
            id: template_id.to_string(),
            msg: "no such template in graph".into(),
        })?;
        self.weight_slots[slot].param.value = value;
        Ok(())
    }

    pub fn set_slot_weight(&mut self, slot: usize, value: f64) {
        self.weight_slots[slot].param.value = value;
    }

    /// Multiplies one factor's potential by e^log_scale. Marginals are
    /// invariant to this; only the partition function shifts.
    pub fn scale_factor(&mut self, factor_idx: usize, log_scale: f64) {
        self.factors[factor_idx].log_scale += log_scale;
    }

    /// Log potential of one factor under a full assignment of its
    /// neighbors (assignment indexed like `neighbors`).
    pub fn log_potential(&self, factor_idx: usize, assignment: &[usize]) -> f64 {
        let f = &self.factors[factor_idx];
        match &f.content {
            FactorContent::Feature(feat) => self.weight_of(f) * feat.eval(assignment) + f.log_scale,
            FactorContent::LogTable(t) => t[assignment[0]] + f.log_scale,
        }
    }

    /// Splits into connected components. Component order follows the
    /// smallest variable index; variables and factors keep their
    /// relative order. Weight slots are copied wholesale so slot indices
    /// stay valid in every component.
    pub fn connected_components(&self) -> Vec<SubGraph> {
        let n = self.variables.len();
        let mut comp_of = vec![usize::MAX; n];
        let mut n_comps = 0;
        for start in 0..n {
            if comp_of[start] != usize::MAX {
                continue;
            }
            let comp = n_comps;
            n_comps += 1;
            let mut stack = vec![start];
            comp_of[start] = comp;
            while let Some(v) = stack.pop() {
                for &fi in &self.var_adj[v] {
                    for &u in &self.factors[fi].neighbors {
                        if comp_of[u] == usize::MAX {
                            comp_of[u] = comp;
                            stack.push(u);
                        }
                    }
                }
            }
        }

        let mut subs: Vec<SubGraph> = (0..n_comps)
            .map(|_| SubGraph {
                graph: FactorGraph {
                    label_space: self.label_space.clone(),
                    variables: Vec::new(),
                    factors: Vec::new(),
                    var_adj: Vec::new(),
                    weight_slots: self.weight_slots.clone(),
                    slot_by_template: self.slot_by_template.clone(),
                },
                variable_map: Vec::new(),
            })
            .collect();

        let mut local_index = vec![usize::MAX; n];
        for v in 0..n {
            let c = comp_of[v];
            local_index[v] = subs[c].variable_map.len();
            subs[c].variable_map.push(v);
            subs[c].graph.variables.push(self.variables[v].clone());
        }
        for sub in &mut subs {
            sub.graph.var_adj = vec![Vec::new(); sub.graph.variables.len()];
        }
        for f in &self.factors {
            let c = comp_of[f.neighbors[0]];
            let mut relabeled = f.clone();
            relabeled.neighbors = f.neighbors.iter().map(|&v| local_index[v]).collect();
            subs[c].graph.push_factor(relabeled);
        }
        subs
    }
}

/// A connected component plus the map from its local variable indices
/// back to the parent graph's.
#[derive(Clone, Debug)]
pub struct SubGraph {
    pub graph: FactorGraph,
    pub variable_map: Vec<usize>,
}
