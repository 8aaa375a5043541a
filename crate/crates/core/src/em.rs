//! Variational EM driver.
//!
//! Each iteration: infer soft labels q over the combined graph
//! (supervision factors plus the current prediction module's unary
//! potentials), then hold q fixed while refining template weights on
//! the supervision-only graph and retraining the prediction module on
//! q. The prediction module starts from whatever state it is handed;
//! a freshly constructed linear model predicts uniform, which matches
//! the intended cold start.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::graph::FactorGraph;
use crate::inference::{run_loopy_bp, BpConfig, Marginals};
use crate::learning::{m_step_supervision, MStepConfig};
use crate::prediction::{one_hot, reweight_positives, PredictionModule};
use crate::templates::{ground_all, FormulaTemplate, GroundFactor, LabelingFunctionRegistry};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct EmConfig {
    pub em_iters: usize,
    pub prediction_epochs: usize,
    pub bp: BpConfig,
    pub m_step: MStepConfig,
    /// Threshold q at 0.5 and up-weight positives for the prediction
    /// fit. Binary label spaces only. The supervision M-step always
    /// consumes the soft q.
    pub hard_em: bool,
    /// Recorded in run manifests; the prediction module carries its
    /// own seed and grounding is deterministic.
    pub seed: u64,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            em_iters: 3,
            prediction_epochs: 10,
            bp: BpConfig::default(),
            m_step: MStepConfig::default(),
            hard_em: false,
            seed: 0,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.em_iters == 0 {
            return Err(Error::InvalidConfig("em_iters must be at least 1".into()));
        }
        self.bp.validate()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IterationDiagnostics {
    pub iteration: usize,
    /// KL(q || supervision-only BP marginals) at this E-step.
    pub kl_q_supervision: f64,
    /// KL(q || prediction module output) at this E-step; the module is
    /// the one fit at the end of the previous iteration.
    pub kl_q_prediction: f64,
    /// Final training loss of the prediction fit this iteration.
    pub prediction_loss: f64,
    /// Template weights after this iteration's supervision M-step.
    pub weights: BTreeMap<String, f64>,
}

#[derive(Clone, Debug)]
pub struct EmOutcome {
    pub templates: Vec<FormulaTemplate>,
    /// q from the final E-step.
    pub marginals: Marginals,
    pub history: Vec<IterationDiagnostics>,
}

/// One row of predictions per instance, validated against the module
/// contract (each row sums to 1 within 1e-9).
pub fn predictions_for(
    module: &dyn PredictionModule,
    dataset: &Dataset,
) -> Result<Vec<Vec<f64>>> {
    let k = dataset.label_space().len();
    if module.n_labels() != k {
        return Err(Error::Invalid(format!(
            "prediction module has {} labels, dataset has {k}",
            module.n_labels()
        )));
    }
    let mut rows = Vec::with_capacity(dataset.len());
    for (i, inst) in dataset.instances().iter().enumerate() {
        let row = module.predict_proba(inst);
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
        rows.push(row);
    }
    Ok(rows)
}

fn build_graph(
    ground: &[GroundFactor],
    templates: &[FormulaTemplate],
    dataset: &Dataset,
) -> Result<FactorGraph> {
    FactorGraph::build(ground, templates, dataset)
}

/// E-step: BP marginals over supervision factors plus the prediction
/// module's current unary potentials.
pub fn e_step(
    templates: &[FormulaTemplate],
    dataset: &Dataset,
    module: &dyn PredictionModule,
    registry: &LabelingFunctionRegistry,
    bp: &BpConfig,
) -> Result<Marginals> {
    let ground = ground_all(templates, dataset, registry)?;
    let mut graph = build_graph(&ground, templates, dataset)?;
    let predictions = predictions_for(module, dataset)?;
    graph.attach_prediction_potentials(&predictions)?;
    Ok(run_loopy_bp(&graph, bp)?.marginals)
}

/// Full EM loop. Templates are consumed and returned with refined
/// weights; the module is trained in place. When `checkpoint_dir` is
/// set, per-iteration weight, model, and marginal artifacts are written
/// there.
pub fn run_em(
    dataset: &Dataset,
    templates: Vec<FormulaTemplate>,
    module: &mut dyn PredictionModule,
    registry: &LabelingFunctionRegistry,
    config: &EmConfig,
    checkpoint_dir: Option<&Path>,
) -> Result<EmOutcome> {
    config.validate()?;
    let mut templates = templates;
    let mut history: Vec<IterationDiagnostics> = Vec::new();
    let mut marginals = Marginals::uniform(dataset.len(), dataset.label_space().len());

    // labeling-function votes never change, so ground once
    let ground = ground_all(&templates, dataset, registry)
        .map_err(|e| Error::EmStep { iteration: 1, source: Box::new(e) })?;

    for iteration in 1..=config.em_iters {
        let step = |e: Error| Error::EmStep { iteration, source: Box::new(e) };

        // E-step on the combined graph
        let mut graph = build_graph(&ground, &templates, dataset).map_err(step)?;
        let predictions = predictions_for(module, dataset).map_err(step)?;
        graph.attach_prediction_potentials(&predictions).map_err(step)?;
        let q = run_loopy_bp(&graph, &config.bp).map_err(step)?.marginals;

        // agreement diagnostics against this iteration's inputs
        let mut sup_graph = build_graph(&ground, &templates, dataset).map_err(step)?;
        let sup_marginals = run_loopy_bp(&sup_graph, &config.bp).map_err(step)?.marginals;
        let kl_q_supervision = q.kl_sum(&sup_marginals).map_err(step)?;
        let kl_q_prediction = q
            .kl_sum(&Marginals::from_rows(predictions).map_err(step)?)
            .map_err(step)?;
        if let Some(prev) = history.last() {
            if kl_q_prediction > prev.kl_q_prediction + 0.01 {
                log::warn!(
                    "EM iteration {iteration}: KL(q || prediction) rose from {:.6} to {:.6}",
                    prev.kl_q_prediction,
                    kl_q_prediction
                );
            }
        }

        // supervision M-step (soft q, always)
        m_step_supervision(&mut sup_graph, &q, &mut templates, &config.m_step, &config.bp)
            .map_err(step)?;

        // prediction M-step
        let (targets, fit_weights) = if config.hard_em {
            let rb = reweight_positives(&q).map_err(step)?;
            let targets = one_hot(&rb.hard_labels, dataset.label_space().len()).map_err(step)?;
            (targets, rb.example_weights)
        } else {
            (q.clone(), vec![1.0; dataset.len()])
        };
        let prediction_loss = module
            .fit(dataset.instances(), &targets, &fit_weights, config.prediction_epochs)
            .map_err(step)?;

        let weights: BTreeMap<String, f64> = templates
            .iter()
            .map(|t| (t.id.clone(), t.weight.value))
            .collect();
        history.push(IterationDiagnostics {
            iteration,
            kl_q_supervision,
            kl_q_prediction,
            prediction_loss,
            weights,
        });

        if let Some(dir) = checkpoint_dir {
            write_checkpoint(dir, iteration, &templates, module, &q, dataset).map_err(step)?;
        }
        marginals = q;
    }

    Ok(EmOutcome { templates, marginals, history })
}

pub fn weights_map(templates: &[FormulaTemplate]) -> BTreeMap<String, f64> {
    templates.iter().map(|t| (t.id.clone(), t.weight.value)).collect()
}

pub fn write_weights_json(path: impl AsRef<Path>, templates: &[FormulaTemplate]) -> Result<()> {
    let mut text =
        serde_json::to_string_pretty(&weights_map(templates)).expect("weights serialize");
    text.push('\n');
    crate::data::write_atomic(path.as_ref(), text.as_bytes())
}

fn write_checkpoint(
    dir: &Path,
    iteration: usize,
    templates: &[FormulaTemplate],
    module: &dyn PredictionModule,
    q: &Marginals,
    dataset: &Dataset,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_weights_json(dir.join(format!("iter_{iteration}_weights.json")), templates)?;
    if let Some(json) = module.checkpoint_json() {
        crate::data::write_atomic(
            &dir.join(format!("iter_{iteration}_model.json")),
            json.as_bytes(),
        )?;
    }
    q.write_jsonl(dataset, dir.join(format!("iter_{iteration}_marginals.jsonl")))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Instance, LabelSpace, SparseVector};
    use crate::prediction::LinearModel;
    use crate::templates::{Payload, Scope, WeightParam};

    fn dataset(n: usize) -> Dataset {
        let instances = (0..n)
            .map(|i| {
                let x = if i % 2 == 0 { 1.0 } else { -1.0 };
                let mut meta = BTreeMap::new();
                if i % 2 == 0 {
                    meta.insert("kb_label".to_string(), "pos".to_string());
                }
                Instance {
                    id: format!("i{i}"),
                    group_id: None,
                    features: SparseVector::from_pairs([(0, x)]),
                    text: None,
                    meta,
                }
            })
            .collect();
        Dataset::new(LabelSpace::binary(), instances).unwrap()
    }

    fn ds_template(w: WeightParam) -> FormulaTemplate {
        FormulaTemplate {
            id: "ds".into(),
            weight: w,
            scope: Scope::All,
            payload: Payload::DistantSupervision {
                target_label: "pos".into(),
                kb_meta_key: "kb_label".into(),
            },
        }
    }

    #[test]
    fn e_step_combines_supervision_and_predictions() {
        let ds = dataset(2);
        let templates = vec![ds_template(WeightParam::fixed(2.0))];
        let module = LinearModel::new(ds.label_space(), 0);
        let reg = LabelingFunctionRegistry::empty();
        let q = e_step(&templates, &ds, &module, &reg, &BpConfig::converged(20)).unwrap();
        // instance 0 carries the DS factor; uniform predictions add nothing
        let want = (2.0f64).exp() / (1.0 + (2.0f64).exp());
        assert!((q.row(0)[1] - want).abs() < 1e-9);
        assert!((q.row(1)[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn zero_supervision_equals_uniform_fit() {
        let ds = dataset(6);
        let templates = vec![ds_template(WeightParam::fixed(0.0))];
        let mut module = LinearModel::new(ds.label_space(), 11);
        let reg = LabelingFunctionRegistry::empty();
        let out = run_em(
            &ds,
            templates,
            &mut module,
            &reg,
            &EmConfig::default(),
            None,
        )
        .unwrap();

        // with no supervision signal, q stays uniform every iteration
        for row in out.marginals.rows() {
            assert!((row[1] - 0.5).abs() < 1e-9);
        }
        // and the module matches one fit directly on uniform labels
        let mut reference = LinearModel::new(ds.label_space(), 11);
        let uniform = Marginals::uniform(ds.len(), 2);
        for _ in 0..3 {
            reference
                .fit(ds.instances(), &uniform, &vec![1.0; ds.len()], 10)
                .unwrap();
        }
        assert_eq!(module.checkpoint_json(), reference.checkpoint_json());
    }

    #[test]
    fn em_learns_from_distant_supervision() {
        // KB covers both classes: even instances marked pos, odd neg
        let instances: Vec<Instance> = (0..20)
            .map(|i| {
                let (x, kb) = if i % 2 == 0 { (1.0, "pos") } else { (-1.0, "neg") };
                let mut meta = BTreeMap::new();
                meta.insert("kb_label".to_string(), kb.to_string());
                Instance {
                    id: format!("i{i}"),
                    group_id: None,
                    features: SparseVector::from_pairs([(0, x)]),
                    text: None,
                    meta,
                }
            })
            .collect();
        let ds = Dataset::new(LabelSpace::binary(), instances).unwrap();
        let templates = vec![
            ds_template(WeightParam::learnable(1.0).with_prior(1.0, 0.1)),
            FormulaTemplate {
                id: "ds_neg".into(),
                weight: WeightParam::learnable(1.0).with_prior(1.0, 0.1),
                scope: Scope::All,
                payload: Payload::DistantSupervision {
                    target_label: "neg".into(),
                    kb_meta_key: "kb_label".into(),
                },
            },
        ];
        let mut module = LinearModel::new(ds.label_space(), 5);
        let reg = LabelingFunctionRegistry::empty();
        let cfg = EmConfig { bp: BpConfig::converged(20), ..Default::default() };
        let out = run_em(&ds, templates, &mut module, &reg, &cfg, None).unwrap();

        assert_eq!(out.history.len(), 3);
        // q and the trained module should both follow the KB split
        for i in 0..20 {
            let q = out.marginals.row(i);
            let p = module.predict_proba(ds.instance(i));
            if i % 2 == 0 {
                assert!(q[1] > 0.6, "q[{i}] = {q:?}");
                assert!(p[1] > 0.5, "module p[{i}] = {p:?}");
            } else {
                assert!(q[1] < 0.4, "q[{i}] = {q:?}");
                assert!(p[1] < 0.5, "module p[{i}] = {p:?}");
            }
        }
        // diagnostics populated
        for (t, d) in out.history.iter().enumerate() {
            assert_eq!(d.iteration, t + 1);
            assert!(d.kl_q_supervision.is_finite());
            assert!(d.kl_q_prediction.is_finite());
            assert!(d.weights.contains_key("ds"));
        }
    }

    #[test]
    fn em_is_deterministic() {
        let ds = dataset(10);
        let reg = LabelingFunctionRegistry::empty();
        let cfg = EmConfig::default();
        let run = || {
            let templates = vec![ds_template(WeightParam::learnable(1.0))];
            let mut module = LinearModel::new(ds.label_space(), 42);
            run_em(&ds, templates, &mut module, &reg, &cfg, None).map(|o| {
                (
                    serde_json::to_string(&o.history).unwrap(),
                    serde_json::to_string(&o.marginals).unwrap(),
                    module.checkpoint_json(),
                )
            })
        };
        assert_eq!(run().unwrap(), run().unwrap());
    }

    #[test]
    fn em_errors_carry_iteration_index() {
        let ds = dataset(2);
        let templates = vec![FormulaTemplate {
            id: "bad".into(),
            weight: WeightParam::learnable(0.5),
            scope: Scope::All,
            payload: Payload::LabelingFunction { lf_id: "missing_lf".into() },
        }];
        let mut module = LinearModel::new(ds.label_space(), 0);
        let reg = LabelingFunctionRegistry::empty();
        let err = run_em(&ds, templates, &mut module, &reg, &EmConfig::default(), None)
            .unwrap_err();
        assert!(matches!(err, Error::EmStep { iteration: 1, .. }), "{err}");
    }

    #[test]
    fn hard_em_runs_and_rebalances() {
        // 8 instances, only 2 with positive supervision: imbalanced
        let ls = LabelSpace::binary();
        let instances: Vec<Instance> = (0..8)
            .map(|i| {
                let mut meta = BTreeMap::new();
                meta.insert(
                    "kb_label".to_string(),
                    if i < 2 { "pos".to_string() } else { "neg".to_string() },
                );
                Instance {
                    id: format!("i{i}"),
                    group_id: None,
                    features: SparseVector::from_pairs([(0, if i < 2 { 1.0 } else { -1.0 })]),
                    text: None,
                    meta,
                }
            })
            .collect();
        let ds = Dataset::new(ls, instances).unwrap();
        let templates = vec![
            ds_template(WeightParam::fixed(3.0)),
            FormulaTemplate {
                id: "ds_neg".into(),
                weight: WeightParam::fixed(3.0),
                scope: Scope::All,
                payload: Payload::DistantSupervision {
                    target_label: "neg".into(),
                    kb_meta_key: "kb_label".into(),
                },
            },
        ];
        let mut module = LinearModel::new(ds.label_space(), 3);
        let reg = LabelingFunctionRegistry::empty();
        let cfg = EmConfig { hard_em: true, bp: BpConfig::converged(20), ..Default::default() };
        let out = run_em(&ds, templates, &mut module, &reg, &cfg, None).unwrap();
        for i in 0..8 {
            let p = module.predict_proba(ds.instance(i));
            if i < 2 {
                assert!(p[1] > 0.5, "p[{i}] = {p:?}");
            } else {
                assert!(p[1] < 0.5, "p[{i}] = {p:?}");
            }
        }
        assert_eq!(out.history.len(), 3);
    }

    #[test]
    fn checkpoints_are_written_per_iteration() {
        let dir = tempfile::tempdir().unwrap();
        let ds = dataset(4);
        let templates = vec![ds_template(WeightParam::learnable(1.0))];
        let mut module = LinearModel::new(ds.label_space(), 1);
        let reg = LabelingFunctionRegistry::empty();
        let cfg = EmConfig { em_iters: 2, ..Default::default() };
        run_em(&ds, templates, &mut module, &reg, &cfg, Some(dir.path())).unwrap();
        for t in 1..=2 {
            assert!(dir.path().join(format!("iter_{t}_weights.json")).exists());
            assert!(dir.path().join(format!("iter_{t}_model.json")).exists());
            assert!(dir.path().join(format!("iter_{t}_marginals.jsonl")).exists());
        }
    }

    #[test]
    fn prediction_contract_violations_are_caught() {
        struct BadModule;
        impl PredictionModule for BadModule {
            fn n_labels(&self) -> usize {
                2
            }
            fn predict_proba(&self, _: &Instance) -> Vec<f64> {
                vec![0.7, 0.7]
            }
            fn fit(&mut self, _: &[Instance], _: &Marginals, _: &[f64], _: usize) -> Result<f64> {
                Ok(0.0)
            }
        }
        let ds = dataset(2);
        let err = predictions_for(&BadModule, &ds).unwrap_err();
        assert!(matches!(err, Error::UnnormalizedDistribution { .. }));
    }
}
