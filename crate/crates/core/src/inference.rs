//! Marginal inference: loopy sum-product in log space, plus exact
//! enumeration used as the reference on small graphs.
//!
//! The message schedule is fixed (all factor-to-variable updates in
//! factor index order, then all variable-to-factor updates in variable
//! index order) so runs are bit-deterministic. At-least-one factors use
//! the closed noisy-or form of their sum-product messages, so k-ary
//! factors cost O(k) per sweep instead of O(|Y|^k).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::graph::{FactorContent, FactorGraph};
use crate::templates::Feature;

/// Joint-state ceiling for exact enumeration, per connected component.
pub const MAX_EXACT_STATES: f64 = 1_048_576.0;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct BpConfig {
    /// Full sweeps over the graph.
    pub max_iters: usize,
    /// Convergence threshold on the max absolute message change,
    /// measured in probability space.
    pub tol: f64,
    /// 0 = pure updates; d keeps d of the old message (log-space blend,
    /// which preserves fixed points).
    pub damping: f64,
}

impl Default for BpConfig {
    fn default() -> Self {
        BpConfig {
            max_iters: 4,
            tol: 1e-6,
            damping: 0.0,
        }
    }
}

impl BpConfig {
    pub fn converged(max_iters: usize) -> Self {
        BpConfig {
            max_iters,
            tol: 1e-12,
            damping: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("bp max_iters must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.damping) {
            return Err(Error::InvalidConfig(format!(
                "bp damping must be in [0, 1), got {}",
                self.damping
            )));
        }
        if !(self.tol.is_finite() && self.tol >= 0.0) {
            return Err(Error::InvalidConfig(format!("bp tol must be >= 0, got {}", self.tol)));
        }
        Ok(())
    }
}

/// Per-variable label distributions. Rows are kept exactly as produced;
/// construction validates shape, finiteness, and normalization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Marginals {
    rows: Vec<Vec<f64>>,
}

impl Marginals {
    pub fn uniform(n: usize, n_labels: usize) -> Self {
        Marginals {
            rows: vec![vec![1.0 / n_labels as f64; n_labels]; n],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let k = rows.first().map(Vec::len).unwrap_or(0);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != k {
                return Err(Error::Invalid(format!(
                    "marginal row {i} has {} entries, expected {k}",
                    row.len()
                )));
            }
            let mut sum = 0.0;
            for &p in row {
                if !(p.is_finite() && p >= 0.0) {
                    return Err(Error::Invalid(format!("marginal row {i} has invalid entry {p}")));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::UnnormalizedDistribution { index: i, sum });
            }
        }
        Ok(Marginals { rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_labels(&self) -> usize {
        self.rows.first().map(Vec::len).unwrap_or(0)
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    /// Ties break toward the smaller label index.
    pub fn argmax_row(&self, i: usize) -> usize {
        let row = &self.rows[i];
        let mut best = 0;
        for (y, &p) in row.iter().enumerate().skip(1) {
            if p > row[best] {
                best = y;
            }
        }
        best
    }

    /// Sum over rows of KL(self_i || other_i), with the reference
    /// distribution floored at 1e-12 per entry.
    pub fn kl_sum(&self, other: &Marginals) -> Result<f64> {
        if other.len() != self.len() || other.n_labels() != self.n_labels() {
            return Err(Error::MarginalCount { got: other.len(), want: self.len() });
        }
        let mut total = 0.0;
        for (p_row, q_row) in self.rows.iter().zip(&other.rows) {
            for (&p, &q) in p_row.iter().zip(q_row) {
                if p > 0.0 {
                    total += p * (p / q.max(1e-12)).ln();
                }
            }
        }
        Ok(total)
    }

    pub fn write_jsonl(&self, dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if dataset.len() != self.len() {
            return Err(Error::MarginalCount { got: self.len(), want: dataset.len() });
        }
        let mut out = Vec::new();
        for (inst, row) in dataset.instances().iter().zip(&self.rows) {
            let line = MarginalLine { id: inst.id.clone(), q: row.clone() };
            serde_json::to_writer(&mut out, &line).expect("marginal line serializes");
            out.push(b'\n');
        }
        crate::data::write_atomic(path, &out)
    }

    pub fn read_jsonl(path: impl AsRef<Path>) -> Result<(Vec<String>, Marginals)> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut ids = Vec::new();
        let mut rows = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parsed: MarginalLine = serde_json::from_str(line)
                .map_err(|e| Error::parse(path, n + 1, e.to_string()))?;
            ids.push(parsed.id);
            rows.push(parsed.q);
        }
        Ok((ids, Marginals::from_rows(rows)?))
    }
}

#[derive(Serialize, Deserialize)]
struct MarginalLine {
    id: String,
    q: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct BpOutcome {
    pub marginals: Marginals,
    pub converged: bool,
    pub iterations: usize,
}

pub(crate) fn logaddexp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

pub(crate) fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + xs.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}

fn normalize_log(row: &mut [f64]) {
    let z = logsumexp(row);
    for x in row.iter_mut() {
        *x -= z;
    }
}

/// Sum-product messages out of one at-least-one factor, in closed form.
///
/// `incoming` holds one normalized label distribution per neighbor; the
/// result holds one normalized outgoing distribution per neighbor. With
/// p_j the incoming mass on the target label and P = prod over j != i of
/// (1 - p_j), the outgoing message to i is proportional to e^w on the
/// target label and e^w (1 - P) + P elsewhere.
pub fn at_least_one_messages(
    weight: f64,
    target_label: usize,
    incoming: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    let k = incoming
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::Invalid("at-least-one factor needs at least one neighbor".into()))?;
    if target_label >= k {
        return Err(Error::Invalid(format!(
            "target label {target_label} out of range for {k} labels"
        )));
    }
    let probs: Vec<f64> = incoming.iter().map(|m| m[target_label]).collect();
    let logs = alo_log_messages(weight, &probs);
    Ok(logs
        .into_iter()
        .map(|(log_at_target, log_elsewhere)| {
            let mut row: Vec<f64> = (0..k)
                .map(|y| if y == target_label { log_at_target } else { log_elsewhere })
                .collect();
            normalize_log(&mut row);
            row.iter().map(|&x| x.exp()).collect()
        })
        .collect())
}

/// Unnormalized log messages (at-target, elsewhere) per neighbor.
/// Leave-one-out products use guarded division: when a factor 1 - p_j
/// drops below 1e-12 the product is rebuilt without division.
fn alo_log_messages(weight: f64, target_probs: &[f64]) -> Vec<(f64, f64)> {
    let ones_minus: Vec<f64> = target_probs.iter().map(|&p| (1.0 - p).max(0.0)).collect();
    let total: f64 = ones_minus.iter().product();
    ones_minus
        .iter()
        .enumerate()
        .map(|(i, &qi)| {
            let loo = if qi >= 1e-12 {
                total / qi
            } else {
                ones_minus
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, &q)| q)
                    .product()
            };
            let loo = loo.clamp(0.0, 1.0);
            // log(e^w (1 - loo) + loo), kept in log space so large
            // positive or very negative weights stay finite
            let log_elsewhere = logaddexp(weight + (-loo).ln_1p(), loo.ln());
            (weight, log_elsewhere)
        })
        .collect()
}

struct Edges {
    /// First edge id of each factor; edge = offset + slot within the
    /// factor's neighbor list.
    offset: Vec<usize>,
    n_edges: usize,
    /// Per variable: incident (factor, slot) pairs as edge ids.
    var_edges: Vec<Vec<usize>>,
}

fn build_edges(graph: &FactorGraph) -> Edges {
    let mut offset = Vec::with_capacity(graph.factors().len());
    let mut n_edges = 0;
    let mut var_edges = vec![Vec::new(); graph.n_variables()];
    for f in graph.factors() {
        offset.push(n_edges);
        for (slot, &v) in f.neighbors.iter().enumerate() {
            var_edges[v].push(n_edges + slot);
        }
        n_edges += f.neighbors.len();
    }
    Edges { offset, n_edges, var_edges }
}

pub(crate) struct BpState {
    pub k: usize,
    edges: Edges,
    /// Log-normalized messages, flat layout [edge * k + label].
    pub f2v: Vec<f64>,
    pub v2f: Vec<f64>,
}

impl BpState {
    pub fn edge(&self, factor: usize, slot: usize) -> usize {
        self.edges.offset[factor] + slot
    }

    pub fn v2f_msg(&self, factor: usize, slot: usize) -> &[f64] {
        let e = self.edge(factor, slot);
        &self.v2f[e * self.k..(e + 1) * self.k]
    }

    fn beliefs(&self, graph: &FactorGraph) -> Vec<Vec<f64>> {
        let k = self.k;
        (0..graph.n_variables())
            .map(|v| {
                let mut row = vec![0.0; k];
                for &e in &self.edges.var_edges[v] {
                    for y in 0..k {
                        row[y] += self.f2v[e * k + y];
                    }
                }
                normalize_log(&mut row);
                row.iter().map(|&x| x.exp()).collect()
            })
            .collect()
    }
}

fn blend(new: &mut [f64], old: &[f64], damping: f64) {
    if damping > 0.0 {
        for (n, &o) in new.iter_mut().zip(old) {
            *n = (1.0 - damping) * *n + damping * o;
        }
        normalize_log(new);
    }
}

/// One full sweep; returns the max message change in probability space.
fn sweep(graph: &FactorGraph, state: &mut BpState, damping: f64) -> Result<f64> {
    let k = state.k;
    let mut max_delta: f64 = 0.0;
    let mut scratch = vec![0.0; k];

    for (fi, f) in graph.factors().iter().enumerate() {
        let w = graph.weight_of(f);
        let arity = f.neighbors.len();
        let base = state.edge(fi, 0);

        match &f.content {
            FactorContent::LogTable(t) => {
                for y in 0..k {
                    scratch[y] = t[y] + f.log_scale;
                }
                normalize_log(&mut scratch);
                max_delta = max_delta.max(store_msg(&mut state.f2v, base, &mut scratch, damping)?);
            }
            FactorContent::Feature(Feature::LabelEquals { label }) => {
                for y in 0..k {
                    scratch[y] = if y == *label { w } else { 0.0 } + f.log_scale;
                }
                normalize_log(&mut scratch);
                max_delta = max_delta.max(store_msg(&mut state.f2v, base, &mut scratch, damping)?);
            }
            FactorContent::Feature(feat @ (Feature::Agreement | Feature::CoLabel { .. })) => {
                for slot in 0..2 {
                    let other = 1 - slot;
                    let other_msg = state.v2f_msg(fi, other).to_vec();
                    for y in 0..k {
                        let mut acc = f64::NEG_INFINITY;
                        for (yo, &mo) in other_msg.iter().enumerate() {
                            let pair = if slot == 0 { [y, yo] } else { [yo, y] };
                            acc = logaddexp(acc, w * feat.eval(&pair) + mo);
                        }
                        scratch[y] = acc + f.log_scale;
                    }
                    normalize_log(&mut scratch);
                    max_delta =
                        max_delta.max(store_msg(&mut state.f2v, base + slot, &mut scratch, damping)?);
                }
            }
            FactorContent::Feature(Feature::AtLeastOne { label }) => {
                let probs: Vec<f64> = (0..arity)
                    .map(|slot| state.v2f_msg(fi, slot)[*label].exp())
                    .collect();
                let logs = alo_log_messages(w, &probs);
                for (slot, (at_target, elsewhere)) in logs.into_iter().enumerate() {
                    for y in 0..k {
                        scratch[y] = if y == *label { at_target } else { elsewhere };
                    }
                    normalize_log(&mut scratch);
                    max_delta =
                        max_delta.max(store_msg(&mut state.f2v, base + slot, &mut scratch, damping)?);
                }
            }
        }

        let lo = base * k;
        let hi = (base + arity) * k;
        if state.f2v[lo..hi].iter().any(|x| x.is_nan()) {
            return Err(Error::NonFiniteMessage { factor: fi });
        }
    }

    for v in 0..graph.n_variables() {
        let incident = &state.edges.var_edges[v];
        let mut belief = vec![0.0; k];
        for &e in incident {
            for y in 0..k {
                belief[y] += state.f2v[e * k + y];
            }
        }
        for &e in incident {
            for y in 0..k {
                scratch[y] = belief[y] - state.f2v[e * k + y];
            }
            normalize_log(&mut scratch);
            max_delta = max_delta.max(store_msg(&mut state.v2f, e, &mut scratch, damping)?);
        }
    }

    Ok(max_delta)
}

/// Damps `new` against the stored message, writes it back, and returns
/// the probability-space change.
fn store_msg(store: &mut [f64], edge: usize, new: &mut [f64], damping: f64) -> Result<f64> {
    let k = new.len();
    let old = &store[edge * k..(edge + 1) * k];
    let old_copy: Vec<f64> = old.to_vec();
    blend(new, &old_copy, damping);
    let mut delta: f64 = 0.0;
    for y in 0..k {
        delta = delta.max((new[y].exp() - old_copy[y].exp()).abs());
    }
    store[edge * k..(edge + 1) * k].copy_from_slice(new);
    Ok(delta)
}

pub(crate) fn run_bp_state(graph: &FactorGraph, config: &BpConfig) -> Result<(BpState, bool, usize)> {
    config.validate()?;
    let k = graph.n_labels();
    let edges = build_edges(graph);
    let uniform = -(k as f64).ln();
    let mut state = BpState {
        k,
        f2v: vec![uniform; edges.n_edges * k],
        v2f: vec![uniform; edges.n_edges * k],
        edges,
    };

    let mut converged = false;
    let mut iterations = 0;
    for it in 0..config.max_iters {
        let delta = sweep(graph, &mut state, config.damping)?;
        iterations = it + 1;
        if delta < config.tol {
            converged = true;
            break;
        }
    }
    Ok((state, converged, iterations))
}

pub fn run_loopy_bp(graph: &FactorGraph, config: &BpConfig) -> Result<BpOutcome> {
    let (state, converged, iterations) = run_bp_state(graph, config)?;
    let marginals = Marginals::from_rows(state.beliefs(graph))?;
    Ok(BpOutcome { marginals, converged, iterations })
}

/// Odometer over joint assignments of one component; calls `visit` with
/// each assignment and its unnormalized log score.
fn enumerate_component<F: FnMut(&[usize], f64)>(graph: &FactorGraph, mut visit: F) -> Result<()> {
    let n = graph.n_variables();
    let k = graph.n_labels();
    let states = (k as f64).powi(n as i32);
    if states > MAX_EXACT_STATES {
        return Err(Error::StateSpaceTooLarge { states, bound: MAX_EXACT_STATES });
    }
    let mut assignment = vec![0usize; n];
    let mut local = Vec::new();
    loop {
        let mut score = 0.0;
        for (fi, f) in graph.factors().iter().enumerate() {
            local.clear();
            local.extend(f.neighbors.iter().map(|&v| assignment[v]));
            score += graph.log_potential(fi, &local);
        }
        visit(&assignment, score);

        let mut pos = 0;
        loop {
            if pos == n {
                return Ok(());
            }
            assignment[pos] += 1;
            if assignment[pos] < k {
                break;
            }
            assignment[pos] = 0;
            pos += 1;
        }
    }
}

/// Exact marginals by enumeration, one connected component at a time.
/// Errors if any component exceeds [`MAX_EXACT_STATES`] joint states.
pub fn exact_marginals(graph: &FactorGraph) -> Result<Marginals> {
    let k = graph.n_labels();
    let mut rows = vec![vec![0.0; k]; graph.n_variables()];
    for sub in graph.connected_components() {
        let n = sub.graph.n_variables();
        let mut acc = vec![vec![f64::NEG_INFINITY; k]; n];
        let mut log_z = f64::NEG_INFINITY;
        enumerate_component(&sub.graph, |assignment, score| {
            log_z = logaddexp(log_z, score);
            for (v, &y) in assignment.iter().enumerate() {
                acc[v][y] = logaddexp(acc[v][y], score);
            }
        })?;
        for (local, &global) in sub.variable_map.iter().enumerate() {
            for y in 0..k {
                rows[global][y] = (acc[local][y] - log_z).exp();
            }
        }
    }
    // rows can drift a hair off 1.0; renormalize before validating
    for row in &mut rows {
        let s: f64 = row.iter().sum();
        for p in row.iter_mut() {
            *p /= s;
        }
    }
    Marginals::from_rows(rows)
}

/// Exact log partition function (sum over components).
pub fn exact_log_partition(graph: &FactorGraph) -> Result<f64> {
    let mut total = 0.0;
    for sub in graph.connected_components() {
        let mut log_z = f64::NEG_INFINITY;
        enumerate_component(&sub.graph, |_, score| {
            log_z = logaddexp(log_z, score);
        })?;
        total += log_z;
    }
    Ok(total)
}

/// Exact expectation of a template's summed feature count under the
/// graph distribution: E[sum over groundings of f(y)].
pub fn exact_template_expectation(graph: &FactorGraph, template_id: &str) -> Result<f64> {
    let slot = graph
        .slot_of_template(template_id)
        .ok_or_else(|| Error::InvalidTemplate {
            id: template_id.to_string(),
            msg: "no such template in graph".into(),
        })?;
    let mut total = 0.0;
    for sub in graph.connected_components() {
        let has_any = sub
            .graph
            .factors()
            .iter()
            .any(|f| f.weight_slot == Some(slot));
        if !has_any {
            continue;
        }
        let mut log_z = f64::NEG_INFINITY;
        let mut log_num = f64::NEG_INFINITY;
        let mut local = Vec::new();
        enumerate_component(&sub.graph, |assignment, score| {
            log_z = logaddexp(log_z, score);
            let mut count = 0.0;
            for f in sub.graph.factors() {
                if f.weight_slot != Some(slot) {
                    continue;
                }
                if let FactorContent::Feature(feat) = &f.content {
                    local.clear();
                    local.extend(f.neighbors.iter().map(|&v| assignment[v]));
                    count += feat.eval(&local);
                }
            }
            if count > 0.0 {
                log_num = logaddexp(log_num, score + count.ln());
            }
        })?;
        total += (log_num - log_z).exp();
    }
    Ok(total)
}
