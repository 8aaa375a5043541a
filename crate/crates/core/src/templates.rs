//! Weighted formula templates and their grounding into factors.
//!
//! A template is a label-coupling rule (distant supervision, a labeling
//! function, pairwise agreement, at-least-one over a group, or a plain
//! unary preference) plus a weight. Grounding instantiates the rule
//! against a dataset, producing indicator features over small sets of
//! latent label variables. Weights are tied: every factor grounded from
//! one template shares that template's weight.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::de::Error as _;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Instance, LabelSpace};
use crate::error::{Error, Result};

/// Weight used for hard constraints. Large enough to dominate any
/// plausible learned weight without overflowing exp() in message space.
pub const HARD_WEIGHT: f64 = 10.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightParam {
    pub value: f64,
    #[serde(default)]
    pub fixed: bool,
    #[serde(default)]
    pub prior_mean: f64,
    /// Precision of the Gaussian prior pulling the weight toward
    /// `prior_mean`. Zero disables the prior.
    #[serde(default)]
    pub prior_precision: f64,
}

impl WeightParam {
    pub fn fixed(value: f64) -> Self {
        WeightParam {
            value,
            fixed: true,
            prior_mean: 0.0,
            prior_precision: 0.0,
        }
    }

    pub fn learnable(value: f64) -> Self {
        WeightParam {
            value,
            fixed: false,
            prior_mean: 0.0,
            prior_precision: 0.0,
        }
    }

    pub fn with_prior(mut self, mean: f64, precision: f64) -> Self {
        self.prior_mean = mean;
        self.prior_precision = precision;
        self
    }

    pub fn hard() -> Self {
        WeightParam::fixed(HARD_WEIGHT)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateKind {
    DistantSupervision,
    LabelingFunction,
    PairwiseAgreement,
    AtLeastOne,
    UnaryPreference,
}

impl fmt::Display for TemplateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TemplateKind::DistantSupervision => "distant_supervision",
            TemplateKind::LabelingFunction => "labeling_function",
            TemplateKind::PairwiseAgreement => "pairwise_agreement",
            TemplateKind::AtLeastOne => "at_least_one",
            TemplateKind::UnaryPreference => "unary_preference",
        };
        f.write_str(s)
    }
}

/// Restricts which instances a template may touch.
#[derive(Clone, Debug, PartialEq, Default)]
pub enum Scope {
    #[default]
    All,
    Group(String),
    MetaEquals {
        key: String,
        value: String,
    },
    Ids(Vec<String>),
}

impl Scope {
    pub fn selects(&self, instance: &Instance) -> bool {
        match self {
            Scope::All => true,
            Scope::Group(g) => instance.group_id.as_deref() == Some(g.as_str()),
            Scope::MetaEquals { key, value } => {
                instance.meta.get(key).map(String::as_str) == Some(value.as_str())
            }
            Scope::Ids(ids) => ids.iter().any(|id| id == &instance.id),
        }
    }
}

impl Serialize for Scope {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Scope::All => s.serialize_str("all"),
            Scope::Group(g) => {
                let mut m = BTreeMap::new();
                m.insert("group", serde_json::Value::String(g.clone()));
                m.serialize(s)
            }
            Scope::MetaEquals { key, value } => {
                let mut m = BTreeMap::new();
                m.insert("meta_key", serde_json::Value::String(key.clone()));
                m.insert("meta_value", serde_json::Value::String(value.clone()));
                m.serialize(s)
            }
            Scope::Ids(ids) => {
                let mut m = BTreeMap::new();
                m.insert(
                    "ids",
                    serde_json::Value::Array(
                        ids.iter().cloned().map(serde_json::Value::String).collect(),
                    ),
                );
                m.serialize(s)
            }
        }
    }
}

impl<'de> Deserialize<'de> for Scope {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        match &v {
            serde_json::Value::String(s) if s == "all" => Ok(Scope::All),
            serde_json::Value::Object(m) => {
                if let Some(g) = m.get("group") {
                    let g = g.as_str().ok_or_else(|| D::Error::custom("scope group must be a string"))?;
                    Ok(Scope::Group(g.to_string()))
                } else if let (Some(k), Some(val)) = (m.get("meta_key"), m.get("meta_value")) {
                    Ok(Scope::MetaEquals {
                        key: k
                            .as_str()
                            .ok_or_else(|| D::Error::custom("meta_key must be a string"))?
                            .to_string(),
                        value: val
                            .as_str()
                            .ok_or_else(|| D::Error::custom("meta_value must be a string"))?
                            .to_string(),
                    })
                } else if let Some(ids) = m.get("ids") {
                    let ids: Vec<String> = serde_json::from_value(ids.clone()).map_err(D::Error::custom)?;
                    Ok(Scope::Ids(ids))
                } else {
                    Err(D::Error::custom("scope object needs `group`, `meta_key`/`meta_value`, or `ids`"))
                }
            }
            other => Err(D::Error::custom(format!("unsupported scope: {other}"))),
        }
    }
}

/// Picks single instances (for unary preferences and KB membership).
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum InstancePredicate {
    #[default]
    All,
    MetaEquals {
        key: String,
        value: String,
    },
    MetaPresent {
        key: String,
    },
    Ids {
        ids: Vec<String>,
    },
}

impl InstancePredicate {
    pub fn selects(&self, instance: &Instance) -> bool {
        match self {
            InstancePredicate::All => true,
            InstancePredicate::MetaEquals { key, value } => {
                instance.meta.get(key).map(String::as_str) == Some(value.as_str())
            }
            InstancePredicate::MetaPresent { key } => instance.meta.contains_key(key),
            InstancePredicate::Ids { ids } => ids.iter().any(|id| id == &instance.id),
        }
    }
}

/// Picks pairs of instances for pairwise templates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PairPredicate {
    /// Consecutive members of each group, in dataset order (after scope
    /// filtering).
    GroupAdjacent,
    /// Any two instances sharing the same value under `key`.
    MetaEquals { key: String },
    /// Two members of the same group whose integer `key` values differ
    /// by more than `threshold`.
    MetaGapOver { key: String, threshold: u32 },
    /// Pairs listed outright by instance id.
    Explicit { pairs: Vec<(String, String)> },
}

#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    DistantSupervision {
        target_label: String,
        /// Instances whose meta under this key equals the target label
        /// count as known tuples.
        kb_meta_key: String,
    },
    LabelingFunction {
        lf_id: String,
    },
    PairwiseAgreement {
        pairs: PairPredicate,
        /// None couples plain agreement I[y_i = y_j]; Some(r) couples
        /// the joint indicator I[y_i = r and y_j = r].
        co_label: Option<String>,
    },
    AtLeastOne {
        target_label: String,
        /// None groups by group_id; Some(key) groups by the meta value
        /// under `key`.
        meta_group_key: Option<String>,
    },
    UnaryPreference {
        target_label: String,
        selects: InstancePredicate,
    },
}

impl Payload {
    pub fn kind(&self) -> TemplateKind {
        match self {
            Payload::DistantSupervision { .. } => TemplateKind::DistantSupervision,
            Payload::LabelingFunction { .. } => TemplateKind::LabelingFunction,
            Payload::PairwiseAgreement { .. } => TemplateKind::PairwiseAgreement,
            Payload::AtLeastOne { .. } => TemplateKind::AtLeastOne,
            Payload::UnaryPreference { .. } => TemplateKind::UnaryPreference,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FormulaTemplate {
    pub id: String,
    pub weight: WeightParam,
    pub scope: Scope,
    pub payload: Payload,
}

impl FormulaTemplate {
    pub fn kind(&self) -> TemplateKind {
        self.payload.kind()
    }
}

fn default_kb_key() -> String {
    "kb_label".to_string()
}

#[derive(Serialize, Deserialize)]
struct DsPayload {
    target_label: String,
    #[serde(default = "default_kb_key")]
    kb_meta_key: String,
}

#[derive(Serialize, Deserialize)]
struct LfPayload {
    lf_id: String,
}

#[derive(Serialize, Deserialize)]
struct PairPayload {
    pairs: PairPredicate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    co_label: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct AloPayload {
    target_label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    meta_group_key: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct UnaryPayload {
    target_label: String,
    #[serde(default)]
    selects: InstancePredicate,
}

#[derive(Serialize, Deserialize)]
struct RawTemplate {
    id: String,
    kind: TemplateKind,
    weight: WeightParam,
    #[serde(default)]
    scope: Scope,
    payload: serde_json::Value,
}

impl Serialize for FormulaTemplate {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::Error as _;
        let payload = match &self.payload {
            Payload::DistantSupervision { target_label, kb_meta_key } => {
                serde_json::to_value(DsPayload {
                    target_label: target_label.clone(),
                    kb_meta_key: kb_meta_key.clone(),
                })
            }
            Payload::LabelingFunction { lf_id } => {
                serde_json::to_value(LfPayload { lf_id: lf_id.clone() })
            }
            Payload::PairwiseAgreement { pairs, co_label } => serde_json::to_value(PairPayload {
                pairs: pairs.clone(),
                co_label: co_label.clone(),
            }),
            Payload::AtLeastOne { target_label, meta_group_key } => {
                serde_json::to_value(AloPayload {
                    target_label: target_label.clone(),
                    meta_group_key: meta_group_key.clone(),
                })
            }
            Payload::UnaryPreference { target_label, selects } => {
                serde_json::to_value(UnaryPayload {
                    target_label: target_label.clone(),
                    selects: selects.clone(),
                })
            }
        }
        .map_err(S::Error::custom)?;
        RawTemplate {
            id: self.id.clone(),
            kind: self.kind(),
            weight: self.weight.clone(),
            scope: self.scope.clone(),
            payload,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for FormulaTemplate {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = RawTemplate::deserialize(d)?;
        let fail = |e: serde_json::Error| {
            D::Error::custom(format!("template `{}` payload: {e}", raw.id))
        };
        let payload = match raw.kind {
            TemplateKind::DistantSupervision => {
                let p: DsPayload = serde_json::from_value(raw.payload).map_err(fail)?;
                Payload::DistantSupervision {
                    target_label: p.target_label,
                    kb_meta_key: p.kb_meta_key,
                }
            }
            TemplateKind::LabelingFunction => {
                let p: LfPayload = serde_json::from_value(raw.payload).map_err(fail)?;
                Payload::LabelingFunction { lf_id: p.lf_id }
            }
            TemplateKind::PairwiseAgreement => {
                let p: PairPayload = serde_json::from_value(raw.payload).map_err(fail)?;
                Payload::PairwiseAgreement {
                    pairs: p.pairs,
                    co_label: p.co_label,
                }
            }
            TemplateKind::AtLeastOne => {
                let p: AloPayload = serde_json::from_value(raw.payload).map_err(fail)?;
                Payload::AtLeastOne {
                    target_label: p.target_label,
                    meta_group_key: p.meta_group_key,
                }
            }
            TemplateKind::UnaryPreference => {
                let p: UnaryPayload = serde_json::from_value(raw.payload).map_err(fail)?;
                Payload::UnaryPreference {
                    target_label: p.target_label,
                    selects: p.selects,
                }
            }
        };
        if !raw.weight.value.is_finite() {
            return Err(D::Error::custom(format!("template `{}`: non-finite weight", raw.id)));
        }
        if raw.weight.prior_precision < 0.0 {
            return Err(D::Error::custom(format!(
                "template `{}`: negative prior precision",
                raw.id
            )));
        }
        Ok(FormulaTemplate {
            id: raw.id,
            weight: raw.weight,
            scope: raw.scope,
            payload,
        })
    }
}

pub fn load_templates(path: impl AsRef<Path>) -> Result<Vec<FormulaTemplate>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let templates: Vec<FormulaTemplate> =
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e.to_string()))?;
    let mut seen = BTreeSet::new();
    for t in &templates {
        if !seen.insert(t.id.clone()) {
            return Err(Error::InvalidTemplate {
                id: t.id.clone(),
                msg: "duplicate template id".into(),
            });
        }
    }
    Ok(templates)
}

pub fn save_templates(path: impl AsRef<Path>, templates: &[FormulaTemplate]) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(templates).expect("templates serialize");
    text.push('\n');
    crate::data::write_atomic(path, text.as_bytes())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Vote {
    Label(usize),
    Abstain,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LabelingFunctionOutcome {
    pub vote: Vote,
}

pub type LabelingFunction = Box<dyn Fn(&Instance, &LabelSpace) -> Result<Vote> + Send + Sync>;

/// Named labeling functions. Ids of the form `meta:<key>` bypass the
/// registry and read a vote from instance meta (missing, empty, or
/// `abstain` means abstain). Everything else must be registered.
pub struct LabelingFunctionRegistry {
    fns: BTreeMap<String, LabelingFunction>,
}

impl LabelingFunctionRegistry {
    pub fn empty() -> Self {
        LabelingFunctionRegistry { fns: BTreeMap::new() }
    }

    /// Registry preloaded with the built-in lexical heuristics. All of
    /// them are binary-only and vote through the index-1-is-positive
    /// convention.
    pub fn with_builtins() -> Self {
        let mut r = LabelingFunctionRegistry::empty();
        r.register("length_band", Box::new(lf_length_band));
        r.register("length_ratio", Box::new(lf_length_ratio));
        r.register("position", Box::new(lf_position));
        r.register("wh_cue", Box::new(lf_wh_cue));
        r
    }

    pub fn register(&mut self, name: impl Into<String>, f: LabelingFunction) {
        self.fns.insert(name.into(), f);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.fns.keys().map(String::as_str)
    }

    pub fn evaluate(
        &self,
        lf_id: &str,
        instance: &Instance,
        labels: &LabelSpace,
    ) -> Result<LabelingFunctionOutcome> {
        if let Some(key) = lf_id.strip_prefix("meta:") {
            let vote = match instance.meta.get(key).map(String::as_str) {
                None | Some("") | Some("abstain") => Vote::Abstain,
                Some(value) => Vote::Label(labels.require(value)?),
            };
            return Ok(LabelingFunctionOutcome { vote });
        }
        let f = self
            .fns
            .get(lf_id)
            .ok_or_else(|| Error::UnknownLabelingFunction(lf_id.to_string()))?;
        let vote = f(instance, labels)?;
        Ok(LabelingFunctionOutcome { vote })
    }
}

impl Default for LabelingFunctionRegistry {
    fn default() -> Self {
        LabelingFunctionRegistry::with_builtins()
    }
}

fn require_binary(lf: &str, labels: &LabelSpace) -> Result<()> {
    if labels.is_binary() {
        Ok(())
    } else {
        Err(Error::BinaryLabelSpaceRequired { lf: lf.to_string() })
    }
}

fn meta_usize(instance: &Instance, key: &str) -> Option<usize> {
    instance.meta.get(key).and_then(|v| v.parse().ok())
}

/// Sentences far outside a plausible evidence length are voted negative;
/// in-band says nothing.
fn lf_length_band(instance: &Instance, labels: &LabelSpace) -> Result<Vote> {
    require_binary("length_band", labels)?;
    let n = instance.tokens().len();
    if (5..=40).contains(&n) {
        Ok(Vote::Abstain)
    } else {
        Ok(Vote::Label(0))
    }
}

/// Length relative to the answer text; ratios outside [0.5, 3] vote
/// negative.
fn lf_length_ratio(instance: &Instance, labels: &LabelSpace) -> Result<Vote> {
    require_binary("length_ratio", labels)?;
    let n = instance.tokens().len();
    let Some(answer_len) = meta_usize(instance, "answer_len") else {
        return Ok(Vote::Abstain);
    };
    if answer_len == 0 || n == 0 {
        return Ok(Vote::Abstain);
    }
    let ratio = n as f64 / answer_len as f64;
    if (0.5..=3.0).contains(&ratio) {
        Ok(Vote::Abstain)
    } else {
        Ok(Vote::Label(0))
    }
}

/// The opening and closing sentences of a passage carry evidence more
/// often than not.
fn lf_position(instance: &Instance, labels: &LabelSpace) -> Result<Vote> {
    require_binary("position", labels)?;
    let (Some(idx), Some(len)) = (meta_usize(instance, "sent_index"), meta_usize(instance, "doc_len"))
    else {
        return Ok(Vote::Abstain);
    };
    if idx < 3 || idx + 3 >= len {
        Ok(Vote::Label(1))
    } else {
        Ok(Vote::Abstain)
    }
}

/// Question-type cue: `when` questions want a number-bearing sentence,
/// `who` questions want a person cue. Sentences missing the cue are
/// voted negative.
fn lf_wh_cue(instance: &Instance, labels: &LabelSpace) -> Result<Vote> {
    require_binary("wh_cue", labels)?;
    const PERSON_CUES: [&str; 8] = ["he", "she", "his", "her", "mr", "mrs", "dr", "who"];
    match instance.meta.get("question_type").map(String::as_str) {
        Some("when") => {
            let has_number = instance
                .tokens()
                .iter()
                .any(|t| t.chars().any(|c| c.is_ascii_digit()));
            Ok(if has_number { Vote::Abstain } else { Vote::Label(0) })
        }
        Some("who") => {
            let has_person = instance
                .tokens()
                .iter()
                .any(|t| PERSON_CUES.contains(&t.as_str()));
            Ok(if has_person { Vote::Abstain } else { Vote::Label(0) })
        }
        _ => Ok(Vote::Abstain),
    }
}

/// Indicator feature attached to a ground factor. `eval` returns 0 or 1
/// for a full assignment of the factor's variables.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Feature {
    LabelEquals { label: usize },
    Agreement,
    CoLabel { label: usize },
    AtLeastOne { label: usize },
}

impl Feature {
    pub fn eval(&self, assignment: &[usize]) -> f64 {
        let hit = match self {
            Feature::LabelEquals { label } => assignment[0] == *label,
            Feature::Agreement => assignment[0] == assignment[1],
            Feature::CoLabel { label } => assignment[0] == *label && assignment[1] == *label,
            Feature::AtLeastOne { label } => assignment.iter().any(|y| y == label),
        };
        if hit {
            1.0
        } else {
            0.0
        }
    }
}

/// One grounded formula: an indicator feature over a small ordered set
/// of distinct variables, pointing back at the template that owns its
/// weight.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundFactor {
    pub template_id: String,
    pub variables: Vec<usize>,
    pub feature: Feature,
}

fn scope_indices(dataset: &Dataset, scope: &Scope) -> Vec<usize> {
    (0..dataset.len())
        .filter(|&i| scope.selects(dataset.instance(i)))
        .collect()
}

pub fn ground_distant_supervision(
    template: &FormulaTemplate,
    dataset: &Dataset,
) -> Result<Vec<GroundFactor>> {
    let Payload::DistantSupervision { target_label, kb_meta_key } = &template.payload else {
        return Err(Error::InvalidTemplate {
            id: template.id.clone(),
            msg: "not a distant_supervision payload".into(),
        });
    };
    let label = dataset.label_space().require(target_label)?;
    let mut out = Vec::new();
    for i in scope_indices(dataset, &template.scope) {
        let inst = dataset.instance(i);
        if inst.meta.get(kb_meta_key).map(String::as_str) == Some(target_label.as_str()) {
            out.push(GroundFactor {
                template_id: template.id.clone(),
                variables: vec![i],
                feature: Feature::LabelEquals { label },
            });
        }
    }
    Ok(out)
}

pub fn ground_labeling_function(
    template: &FormulaTemplate,
    dataset: &Dataset,
    registry: &LabelingFunctionRegistry,
) -> Result<Vec<GroundFactor>> {
    let Payload::LabelingFunction { lf_id } = &template.payload else {
        return Err(Error::InvalidTemplate {
            id: template.id.clone(),
            msg: "not a labeling_function payload".into(),
        });
    };
    let mut out = Vec::new();
    for i in scope_indices(dataset, &template.scope) {
        let outcome = registry.evaluate(lf_id, dataset.instance(i), dataset.label_space())?;
        if let Vote::Label(label) = outcome.vote {
            out.push(GroundFactor {
                template_id: template.id.clone(),
                variables: vec![i],
                feature: Feature::LabelEquals { label },
            });
        }
    }
    Ok(out)
}

pub fn ground_pairwise_agreement(
    template: &FormulaTemplate,
    dataset: &Dataset,
) -> Result<Vec<GroundFactor>> {
    let Payload::PairwiseAgreement { pairs, co_label } = &template.payload else {
        return Err(Error::InvalidTemplate {
            id: template.id.clone(),
            msg: "not a pairwise_agreement payload".into(),
        });
    };
    let feature = match co_label {
        Some(name) => Feature::CoLabel {
            label: dataset.label_space().require(name)?,
        },
        None => Feature::Agreement,
    };

    let in_scope: BTreeSet<usize> = scope_indices(dataset, &template.scope).into_iter().collect();
    let mut pair_set: BTreeSet<(usize, usize)> = BTreeSet::new();

    match pairs {
        PairPredicate::GroupAdjacent => {
            for members in dataset.groups().values() {
                let kept: Vec<usize> = members.iter().copied().filter(|i| in_scope.contains(i)).collect();
                for w in kept.windows(2) {
                    pair_set.insert((w[0], w[1]));
                }
            }
        }
        PairPredicate::MetaEquals { key } => {
            let mut by_value: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
            for &i in &in_scope {
                if let Some(v) = dataset.instance(i).meta.get(key) {
                    by_value.entry(v.as_str()).or_default().push(i);
                }
            }
            for members in by_value.values() {
                for a in 0..members.len() {
                    for b in a + 1..members.len() {
                        pair_set.insert((members[a], members[b]));
                    }
                }
            }
        }
        PairPredicate::MetaGapOver { key, threshold } => {
            for members in dataset.groups().values() {
                let kept: Vec<(usize, i64)> = members
                    .iter()
                    .copied()
                    .filter(|i| in_scope.contains(i))
                    .filter_map(|i| {
                        dataset
                            .instance(i)
                            .meta
                            .get(key)
                            .and_then(|v| v.parse::<i64>().ok())
                            .map(|v| (i, v))
                    })
                    .collect();
                for a in 0..kept.len() {
                    for b in a + 1..kept.len() {
                        if (kept[a].1 - kept[b].1).unsigned_abs() > u64::from(*threshold) {
                            pair_set.insert((kept[a].0, kept[b].0));
                        }
                    }
                }
            }
        }
        PairPredicate::Explicit { pairs } => {
            for (a, b) in pairs {
                let ia = dataset.index_of_id(a).ok_or_else(|| Error::InvalidTemplate {
                    id: template.id.clone(),
                    msg: format!("explicit pair references unknown instance `{a}`"),
                })?;
                let ib = dataset.index_of_id(b).ok_or_else(|| Error::InvalidTemplate {
                    id: template.id.clone(),
                    msg: format!("explicit pair references unknown instance `{b}`"),
                })?;
                if ia == ib {
                    return Err(Error::InvalidTemplate {
                        id: template.id.clone(),
                        msg: format!("explicit pair repeats instance `{a}`"),
                    });
                }
                if in_scope.contains(&ia) && in_scope.contains(&ib) {
                    pair_set.insert((ia.min(ib), ia.max(ib)));
                }
            }
        }
    }

    Ok(pair_set
        .into_iter()
        .map(|(a, b)| GroundFactor {
            template_id: template.id.clone(),
            variables: vec![a, b],
            feature: feature.clone(),
        })
        .collect())
}

pub fn ground_at_least_one(
    template: &FormulaTemplate,
    dataset: &Dataset,
) -> Result<Vec<GroundFactor>> {
    let Payload::AtLeastOne { target_label, meta_group_key } = &template.payload else {
        return Err(Error::InvalidTemplate {
            id: template.id.clone(),
            msg: "not an at_least_one payload".into(),
        });
    };
    let label = dataset.label_space().require(target_label)?;
    let in_scope: BTreeSet<usize> = scope_indices(dataset, &template.scope).into_iter().collect();

    let groups: BTreeMap<String, Vec<usize>> = match meta_group_key {
        None => dataset
            .groups()
            .iter()
            .map(|(g, members)| (g.clone(), members.clone()))
            .collect(),
        Some(key) => {
            let mut by_value: BTreeMap<String, Vec<usize>> = BTreeMap::new();
            for i in 0..dataset.len() {
                if let Some(v) = dataset.instance(i).meta.get(key) {
                    by_value.entry(v.clone()).or_default().push(i);
                }
            }
            by_value
        }
    };

    let mut out = Vec::new();
    for (group, members) in groups {
        let kept: Vec<usize> = members.into_iter().filter(|i| in_scope.contains(i)).collect();
        if kept.is_empty() {
            log::warn!(
                "template `{}`: group `{group}` has no members in scope; skipped",
                template.id
            );
            continue;
        }
        out.push(GroundFactor {
            template_id: template.id.clone(),
            variables: kept,
            feature: Feature::AtLeastOne { label },
        });
    }
    Ok(out)
}

pub fn ground_unary_preference(
    template: &FormulaTemplate,
    dataset: &Dataset,
) -> Result<Vec<GroundFactor>> {
    let Payload::UnaryPreference { target_label, selects } = &template.payload else {
        return Err(Error::InvalidTemplate {
            id: template.id.clone(),
            msg: "not a unary_preference payload".into(),
        });
    };
    let label = dataset.label_space().require(target_label)?;
    let mut out = Vec::new();
    for i in scope_indices(dataset, &template.scope) {
        if selects.selects(dataset.instance(i)) {
            out.push(GroundFactor {
                template_id: template.id.clone(),
                variables: vec![i],
                feature: Feature::LabelEquals { label },
            });
        }
    }
    Ok(out)
}

pub fn ground_template(
    template: &FormulaTemplate,
    dataset: &Dataset,
    registry: &LabelingFunctionRegistry,
) -> Result<Vec<GroundFactor>> {
    match template.kind() {
        TemplateKind::DistantSupervision => ground_distant_supervision(template, dataset),
        TemplateKind::LabelingFunction => ground_labeling_function(template, dataset, registry),
        TemplateKind::PairwiseAgreement => ground_pairwise_agreement(template, dataset),
        TemplateKind::AtLeastOne => ground_at_least_one(template, dataset),
        TemplateKind::UnaryPreference => ground_unary_preference(template, dataset),
    }
}

/// Grounds every template in order. Factor order is deterministic:
/// template order first, then the template's own grounding order.
pub fn ground_all(
    templates: &[FormulaTemplate],
    dataset: &Dataset,
    registry: &LabelingFunctionRegistry,
) -> Result<Vec<GroundFactor>> {
    let mut out = Vec::new();
    for t in templates {
        out.extend(ground_template(t, dataset, registry)?);
    }
    Ok(out)
}
