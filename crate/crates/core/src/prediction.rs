//! Pluggable discriminative prediction module plus the reference
//! implementation: sparse multinomial logistic regression trained on
//! soft labels with a weighted-KL objective.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Instance, LabelSpace, POSITIVE};
use crate::error::{Error, Result};
use crate::inference::Marginals;

/// Anything that can score instances and be retrained on soft labels.
///
/// Contract: `predict_proba` returns one probability per label summing
/// to 1 within 1e-9, and `fit` is deterministic given the module's own
/// seed. `fit` returns the final training loss.
pub trait PredictionModule {
    fn n_labels(&self) -> usize;
    fn predict_proba(&self, instance: &Instance) -> Vec<f64>;
    fn fit(
        &mut self,
        instances: &[Instance],
        targets: &Marginals,
        example_weights: &[f64],
        epochs: usize,
    ) -> Result<f64>;
    /// Serialized form for checkpointing, if the module supports it.
    fn checkpoint_json(&self) -> Option<String> {
        None
    }
}

/// Max-shifted softmax. Invariant to adding a constant to every score.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|&s| (s - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

const PROB_FLOOR: f64 = 1e-12;

/// Sparse multinomial logistic regression. Weights start at zero, so an
/// untrained model predicts the uniform distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearModel {
    labels: Vec<String>,
    weights: Vec<BTreeMap<u32, f64>>,
    bias: Vec<f64>,
    seed: u64,
    learning_rate: f64,
    batch_size: usize,
}

impl LinearModel {
    pub fn new(label_space: &LabelSpace, seed: u64) -> Self {
        let k = label_space.len();
        LinearModel {
            labels: label_space.labels().to_vec(),
            weights: vec![BTreeMap::new(); k],
            bias: vec![0.0; k],
            seed,
            learning_rate: 0.1,
            batch_size: 32,
        }
    }

    pub fn with_learning_rate(mut self, lr: f64) -> Self {
        self.learning_rate = lr;
        self
    }

    pub fn with_batch_size(mut self, b: usize) -> Self {
        self.batch_size = b.max(1);
        self
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn scores(&self, instance: &Instance) -> Vec<f64> {
        (0..self.labels.len())
            .map(|y| instance.features.dot_map(&self.weights[y]) + self.bias[y])
            .collect()
    }

    pub fn feature_weight(&self, label: usize, feature: u32) -> f64 {
        self.weights[label].get(&feature).copied().unwrap_or(0.0)
    }

    /// Zero removes the entry, keeping the parameter vector sparse.
    pub fn set_feature_weight(&mut self, label: usize, feature: u32, value: f64) {
        if value == 0.0 {
            self.weights[label].remove(&feature);
        } else {
            self.weights[label].insert(feature, value);
        }
    }

    pub fn bias_value(&self, label: usize) -> f64 {
        self.bias[label]
    }

    pub fn set_bias_value(&mut self, label: usize, value: f64) {
        self.bias[label] = value;
    }

    /// Total weighted KL loss: sum_i weight_i KL(q_i || p_i), with model
    /// probabilities floored at 1e-12 inside the log.
    pub fn loss(&self, instances: &[Instance], targets: &Marginals, example_weights: &[f64]) -> f64 {
        let mut total = 0.0;
        for (i, inst) in instances.iter().enumerate() {
            let p = self.predict_proba(inst);
            let q = targets.row(i);
            let mut kl = 0.0;
            for y in 0..q.len() {
                if q[y] > 0.0 {
                    kl += q[y] * (q[y] / p[y].max(PROB_FLOOR)).ln();
                }
            }
            total += example_weights[i] * kl;
        }
        total
    }

    /// Full-batch gradient of [`Self::loss`], for verification: one
    /// sparse map per label plus the bias gradient.
    pub fn loss_gradient(
        &self,
        instances: &[Instance],
        targets: &Marginals,
        example_weights: &[f64],
    ) -> (Vec<BTreeMap<u32, f64>>, Vec<f64>) {
        let k = self.labels.len();
        let mut grad_w = vec![BTreeMap::<u32, f64>::new(); k];
        let mut grad_b = vec![0.0; k];
        for (i, inst) in instances.iter().enumerate() {
            let p = self.predict_proba(inst);
            let q = targets.row(i);
            for y in 0..k {
                let coef = example_weights[i] * (p[y] - q[y]);
                grad_b[y] += coef;
                for (feat, val) in inst.features.iter() {
                    *grad_w[y].entry(feat).or_insert(0.0) += coef * val;
                }
            }
        }
        (grad_w, grad_b)
    }

    fn validate_fit_inputs(
        &self,
        instances: &[Instance],
        targets: &Marginals,
        example_weights: &[f64],
    ) -> Result<()> {
        if targets.len() != instances.len() {
            return Err(Error::MarginalCount { got: targets.len(), want: instances.len() });
        }
        if !instances.is_empty() && targets.n_labels() != self.labels.len() {
            return Err(Error::Invalid(format!(
                "targets have {} labels, model has {}",
                targets.n_labels(),
                self.labels.len()
            )));
        }
        if example_weights.len() != instances.len() {
            return Err(Error::Invalid(format!(
                "{} example weights for {} instances",
                example_weights.len(),
                instances.len()
            )));
        }
        if let Some(w) = example_weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::Invalid(format!("invalid example weight {w}")));
        }
        Ok(())
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = serde_json::to_string_pretty(&ModelFile::from(self)).expect("model serializes");
        text.push('\n');
        crate::data::write_atomic(path.as_ref(), text.as_bytes())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: ModelFile =
            serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e.to_string()))?;
        file.into_model(path)
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    labels: Vec<String>,
    bias: Vec<f64>,
    weights: Vec<BTreeMap<String, f64>>,
    seed: u64,
    learning_rate: f64,
    batch_size: usize,
}

impl From<&LinearModel> for ModelFile {
    fn from(m: &LinearModel) -> Self {
        ModelFile {
            labels: m.labels.clone(),
            bias: m.bias.clone(),
            weights: m
                .weights
                .iter()
                .map(|row| row.iter().map(|(k, v)| (k.to_string(), *v)).collect())
                .collect(),
            seed: m.seed,
            learning_rate: m.learning_rate,
            batch_size: m.batch_size,
        }
    }
}

impl ModelFile {
    fn into_model(self, path: &Path) -> Result<LinearModel> {
        if self.labels.len() < 2 || self.bias.len() != self.labels.len() || self.weights.len() != self.labels.len() {
            return Err(Error::parse(path, 1, "inconsistent model shape"));
        }
        let mut weights = Vec::with_capacity(self.weights.len());
        for row in self.weights {
            let mut parsed = BTreeMap::new();
            for (k, v) in row {
                let id: u32 = k
                    .parse()
                    .map_err(|_| Error::parse(path, 1, format!("bad feature key `{k}`")))?;
                parsed.insert(id, v);
            }
            weights.push(parsed);
        }
        Ok(LinearModel {
            labels: self.labels,
            bias: self.bias,
            weights,
            seed: self.seed,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
        })
    }
}

impl PredictionModule for LinearModel {
    fn n_labels(&self) -> usize {
        self.labels.len()
    }

    fn predict_proba(&self, instance: &Instance) -> Vec<f64> {
        softmax(&self.scores(instance))
    }

    /// Mini-batch gradient descent on the weighted KL loss. Shuffling is
    /// driven by the model's own seed, so runs are reproducible; the
    /// epoch index feeds the stream so each epoch sees a fresh order.
    fn fit(
        &mut self,
        instances: &[Instance],
        targets: &Marginals,
        example_weights: &[f64],
        epochs: usize,
    ) -> Result<f64> {
        self.validate_fit_inputs(instances, targets, example_weights)?;
        if instances.is_empty() || epochs == 0 {
            return Ok(self.loss(instances, targets, example_weights));
        }
        let k = self.labels.len();
        let mut order: Vec<usize> = (0..instances.len()).collect();

        for epoch in 0..epochs {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ (epoch as u64).wrapping_mul(0x9E3779B97F4A7C15));
            order.shuffle(&mut rng);

            for batch in order.chunks(self.batch_size) {
                let scale = 1.0 / batch.len() as f64;
                let mut grad_b = vec![0.0; k];
                let mut grad_w: Vec<BTreeMap<u32, f64>> = vec![BTreeMap::new(); k];
                for &i in batch {
                    let p = self.predict_proba(&instances[i]);
                    let q = targets.row(i);
                    for y in 0..k {
                        let coef = example_weights[i] * (p[y] - q[y]) * scale;
                        if coef == 0.0 {
                            continue;
                        }
                        grad_b[y] += coef;
                        for (feat, val) in instances[i].features.iter() {
                            *grad_w[y].entry(feat).or_insert(0.0) += coef * val;
                        }
                    }
                }
                for y in 0..k {
                    self.bias[y] -= self.learning_rate * grad_b[y];
                    for (feat, g) in &grad_w[y] {
                        *self.weights[y].entry(*feat).or_insert(0.0) -= self.learning_rate * g;
                    }
                }
            }

            let loss = self.loss(instances, targets, example_weights);
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch });
            }
        }
        Ok(self.loss(instances, targets, example_weights))
    }

    fn checkpoint_json(&self) -> Option<String> {
        let mut text = serde_json::to_string_pretty(&ModelFile::from(self)).expect("model serializes");
        text.push('\n');
        Some(text)
    }
}

/// Normalized attention over a group: softmax of the positive-class
/// scores of its members. Binary label spaces only.
pub fn group_softmax_scores(model: &LinearModel, group: &[&Instance]) -> Result<Vec<f64>> {
    if model.labels.len() != 2 {
        return Err(Error::Invalid(
            "group softmax requires a binary label space".into(),
        ));
    }
    if group.is_empty() {
        return Err(Error::Invalid("group softmax needs at least one instance".into()));
    }
    let scores: Vec<f64> = group.iter().map(|inst| model.scores(inst)[POSITIVE]).collect();
    Ok(softmax(&scores))
}

#[derive(Clone, Debug, PartialEq)]
pub struct RebalanceResult {
    /// Thresholded labels: positive where q(pos) >= 0.5.
    pub hard_labels: Vec<usize>,
    /// Per-instance weights: positives get `positive_weight`, negatives 1.
    pub example_weights: Vec<f64>,
    pub n_pos: usize,
    pub n_neg: usize,
    pub positive_weight: f64,
}

/// Hard-EM rebalancing for skewed binary problems: threshold the soft
/// labels at 0.5 and up-weight positives by max(1, n_neg / n_pos).
pub fn reweight_positives(q: &Marginals) -> Result<RebalanceResult> {
    if q.n_labels() != 2 {
        return Err(Error::Invalid(
            "positive reweighting requires a binary label space".into(),
        ));
    }
    let hard_labels: Vec<usize> = (0..q.len())
        .map(|i| usize::from(q.row(i)[POSITIVE] >= 0.5))
        .collect();
    let n_pos = hard_labels.iter().filter(|&&y| y == POSITIVE).count();
    let n_neg = q.len() - n_pos;
    let positive_weight = if n_pos == 0 || n_neg == 0 {
        1.0
    } else {
        (n_neg as f64 / n_pos as f64).max(1.0)
    };
    let example_weights = hard_labels
        .iter()
        .map(|&y| if y == POSITIVE { positive_weight } else { 1.0 })
        .collect();
    Ok(RebalanceResult { hard_labels, example_weights, n_pos, n_neg, positive_weight })
}

/// One-hot rows from hard labels, for feeding a fit call.
pub fn one_hot(labels: &[usize], n_labels: usize) -> Result<Marginals> {
    let rows = labels
        .iter()
        .map(|&y| {
            let mut row = vec![0.0; n_labels];
            row[y] = 1.0;
            row
        })
        .collect();
    Marginals::from_rows(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SparseVector;

    fn inst(id: &str, feats: &[(u32, f64)]) -> Instance {
        Instance {
            id: id.into(),
            group_id: None,
            features: SparseVector::from_pairs(feats.iter().copied()),
            text: None,
            meta: Default::default(),
        }
    }

    #[test]
    fn softmax_normalizes_and_shifts() {
        let p = softmax(&[1.0, 2.0, 3.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let shifted = softmax(&[1.0 + 500.0, 2.0 + 500.0, 3.0 + 500.0]);
        for (a, b) in p.iter().zip(&shifted) {
            assert!((a - b).abs() <= 1e-12);
        }
        // extreme scores stay finite
        let q = softmax(&[1000.0, -1000.0]);
        assert!(q[0].is_finite() && q[1].is_finite());
        assert!((q[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn untrained_model_is_uniform() {
        let m = LinearModel::new(&LabelSpace::binary(), 7);
        let p = m.predict_proba(&inst("a", &[(0, 3.0), (5, -1.0)]));
        assert!((p[0] - 0.5).abs() < 1e-12);
        assert!((p[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn loss_matches_hand_computation() {
        let mut m = LinearModel::new(&LabelSpace::binary(), 0);
        m.bias = vec![0.0, (3.0f64).ln()]; // p = [0.25, 0.75]
        let data = vec![inst("a", &[(0, 1.0)])];
        let q = Marginals::from_rows(vec![vec![0.0, 1.0]]).unwrap();
        let loss = m.loss(&data, &q, &[2.0]);
        let want = 2.0 * (1.0f64 / 0.75).ln();
        assert!((loss - want).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let ls = LabelSpace::new(vec!["a".into(), "b".into(), "c".into()]).unwrap();
        let mut m = LinearModel::new(&ls, 0);
        // deterministic nonzero starting point
        m.bias = vec![0.1, -0.2, 0.05];
        m.weights[0].insert(0, 0.3);
        m.weights[1].insert(1, -0.4);
        m.weights[2].insert(0, 0.2);

        let data = vec![
            inst("a", &[(0, 1.0), (1, -2.0)]),
            inst("b", &[(0, 0.5)]),
            inst("c", &[(1, 1.5), (2, 0.7)]),
        ];
        let q = Marginals::from_rows(vec![
            vec![0.2, 0.5, 0.3],
            vec![0.9, 0.05, 0.05],
            vec![0.1, 0.1, 0.8],
        ])
        .unwrap();
        let w = vec![1.0, 0.5, 2.0];

        let (grad_w, grad_b) = m.loss_gradient(&data, &q, &w);
        let eps = 1e-4;

        for y in 0..3 {
            for feat in [0u32, 1, 2] {
                let mut plus = m.clone();
                *plus.weights[y].entry(feat).or_insert(0.0) += eps;
                let mut minus = m.clone();
                *minus.weights[y].entry(feat).or_insert(0.0) -= eps;
                let fd = (plus.loss(&data, &q, &w) - minus.loss(&data, &q, &w)) / (2.0 * eps);
                let analytic = grad_w[y].get(&feat).copied().unwrap_or(0.0);
                let denom = analytic.abs().max(fd.abs()).max(1e-8);
                assert!(
                    (analytic - fd).abs() / denom <= 1e-4,
                    "weight[{y}][{feat}]: analytic {analytic} fd {fd}"
                );
            }
            let mut plus = m.clone();
            plus.bias[y] += eps;
            let mut minus = m.clone();
            minus.bias[y] -= eps;
            let fd = (plus.loss(&data, &q, &w) - minus.loss(&data, &q, &w)) / (2.0 * eps);
            let denom = grad_b[y].abs().max(fd.abs()).max(1e-8);
            assert!(
                (grad_b[y] - fd).abs() / denom <= 1e-4,
                "bias[{y}]: analytic {} fd {fd}",
                grad_b[y]
            );
        }
    }

    /// Perceptron oracle: returns true if the points are linearly
    /// separable (with bias) within the iteration budget.
    fn perceptron_separable(points: &[(Vec<f64>, usize)], dims: usize) -> bool {
        let mut w = vec![0.0; dims + 1];
        for _ in 0..1000 {
            let mut mistakes = 0;
            for (x, y) in points {
                let sign = if *y == 1 { 1.0 } else { -1.0 };
                let mut score = w[dims];
                for d in 0..dims {
                    score += w[d] * x[d];
                }
                if sign * score <= 0.0 {
                    mistakes += 1;
                    for d in 0..dims {
                        w[d] += sign * x[d];
                    }
                    w[dims] += sign;
                }
            }
            if mistakes == 0 {
                return true;
            }
        }
        false
    }

    #[test]
    fn fit_separable_toy_set_to_full_accuracy() {
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for i in 0..10 {
            let off = (i as f64) * 0.05;
            data.push(inst(&format!("p{i}"), &[(0, 2.0 + off), (1, 2.0 - off)]));
            labels.push(1usize);
            data.push(inst(&format!("n{i}"), &[(0, -2.0 - off), (1, -2.0 + off)]));
            labels.push(0usize);
        }
        let points: Vec<(Vec<f64>, usize)> = data
            .iter()
            .zip(&labels)
            .map(|(d, &y)| (vec![d.features.get(0), d.features.get(1)], y))
            .collect();
        assert!(perceptron_separable(&points, 2), "toy set must be separable");

        let q = one_hot(&labels, 2).unwrap();
        let mut m = LinearModel::new(&LabelSpace::binary(), 13);
        let weights = vec![1.0; data.len()];
        m.fit(&data, &q, &weights, 10).unwrap();

        let correct = data
            .iter()
            .zip(&labels)
            .filter(|(d, &y)| {
                let p = m.predict_proba(d);
                let pred = usize::from(p[1] > p[0]);
                pred == y
            })
            .count();
        assert_eq!(correct, data.len());
    }

    #[test]
    fn fit_on_own_predictions_is_stationary() {
        let mut m = LinearModel::new(&LabelSpace::binary(), 3).with_learning_rate(1e-6);
        m.bias = vec![0.2, -0.1];
        m.weights[1].insert(0, 0.4);
        let data = vec![inst("a", &[(0, 1.0)]), inst("b", &[(0, -0.5)])];
        let q = Marginals::from_rows(data.iter().map(|d| m.predict_proba(d)).collect()).unwrap();
        let w = vec![1.0, 1.0];
        let before = m.loss(&data, &q, &w);
        let snapshot = m.clone();
        let after = m.fit(&data, &q, &w, 1).unwrap();
        assert!((after - before).abs() <= 1e-12);
        assert_eq!(m, snapshot); // gradient is exactly zero
    }

    #[test]
    fn fit_zero_epochs_changes_nothing() {
        let mut m = LinearModel::new(&LabelSpace::binary(), 3);
        let snapshot = m.clone();
        let data = vec![inst("a", &[(0, 1.0)])];
        let q = Marginals::from_rows(vec![vec![0.0, 1.0]]).unwrap();
        m.fit(&data, &q, &[1.0], 0).unwrap();
        assert_eq!(m, snapshot);
    }

    #[test]
    fn fit_is_deterministic_per_seed() {
        let ls = LabelSpace::binary();
        let data: Vec<Instance> = (0..50)
            .map(|i| {
                let x = (i as f64) * 0.1 - 2.5;
                inst(&format!("i{i}"), &[(0, x), (1, -x * 0.5)])
            })
            .collect();
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|i| if i % 2 == 0 { vec![0.8, 0.2] } else { vec![0.3, 0.7] })
            .collect();
        let q = Marginals::from_rows(rows).unwrap();
        let w = vec![1.0; 50];

        let mut a = LinearModel::new(&ls, 99);
        let mut b = LinearModel::new(&ls, 99);
        let la = a.fit(&data, &q, &w, 5).unwrap();
        let lb = b.fit(&data, &q, &w, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(la.to_bits(), lb.to_bits());
        assert_eq!(a.checkpoint_json(), b.checkpoint_json());
    }

    #[test]
    fn fit_validates_shapes() {
        let mut m = LinearModel::new(&LabelSpace::binary(), 0);
        let data = vec![inst("a", &[(0, 1.0)])];
        let q2 = Marginals::from_rows(vec![vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        assert!(m.fit(&data, &q2, &[1.0], 1).is_err());
        let q1 = Marginals::from_rows(vec![vec![0.5, 0.5]]).unwrap();
        assert!(m.fit(&data, &q1, &[1.0, 1.0], 1).is_err());
        assert!(m.fit(&data, &q1, &[-1.0], 1).is_err());
    }

    #[test]
    fn model_json_roundtrip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let mut m = LinearModel::new(&LabelSpace::binary(), 5);
        let data = vec![inst("a", &[(0, 1.0)]), inst("b", &[(1, -1.0)])];
        let q = Marginals::from_rows(vec![vec![0.1, 0.9], vec![0.7, 0.3]]).unwrap();
        m.fit(&data, &q, &[1.0, 1.0], 3).unwrap();
        m.save_json(&path).unwrap();
        let back = LinearModel::load_json(&path).unwrap();
        assert_eq!(back, m);
        let path2 = dir.path().join("model2.json");
        back.save_json(&path2).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn group_softmax_matches_hand_computation() {
        let mut m = LinearModel::new(&LabelSpace::binary(), 0);
        m.weights[1].insert(0, 1.0);
        let a = inst("a", &[(0, 1.0)]);
        let b = inst("b", &[(0, 2.0)]);
        let c = inst("c", &[(0, 3.0)]);
        let out = group_softmax_scores(&m, &[&a, &b, &c]).unwrap();
        let want = softmax(&[1.0, 2.0, 3.0]);
        for (o, w) in out.iter().zip(&want) {
            assert!((o - w).abs() < 1e-12);
        }
        assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reweight_positives_balances_skew() {
        let rows = vec![
            vec![0.1, 0.9],
            vec![0.6, 0.4],
            vec![0.8, 0.2],
            vec![0.55, 0.45],
            vec![0.4, 0.6],
        ];
        let q = Marginals::from_rows(rows).unwrap();
        let r = reweight_positives(&q).unwrap();
        assert_eq!(r.hard_labels, vec![1, 0, 0, 0, 1]);
        assert_eq!((r.n_pos, r.n_neg), (2, 3));
        assert!((r.positive_weight - 1.5).abs() < 1e-12);
        assert_eq!(r.example_weights, vec![1.5, 1.0, 1.0, 1.0, 1.5]);
    }

    #[test]
    fn reweight_positives_degenerate_cases() {
        let all_neg = Marginals::from_rows(vec![vec![0.9, 0.1], vec![0.8, 0.2]]).unwrap();
        let r = reweight_positives(&all_neg).unwrap();
        assert_eq!(r.positive_weight, 1.0);
        assert_eq!(r.example_weights, vec![1.0, 1.0]);

        // exact 0.5 thresholds to positive
        let tie = Marginals::from_rows(vec![vec![0.5, 0.5]]).unwrap();
        assert_eq!(reweight_positives(&tie).unwrap().hard_labels, vec![1]);

        let three = Marginals::from_rows(vec![vec![0.2, 0.3, 0.5]]).unwrap();
        assert!(reweight_positives(&three).is_err());
    }
}
