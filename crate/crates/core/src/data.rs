//! Instances, datasets, and the text utilities shared by every stage.
//!
//! Datasets live on disk as JSONL: one header line declaring the label
//! space, then one object per instance. Instance ids are unique; groups
//! are derived from the optional `group_id` field, never declared
//! separately.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered set of label names. Index order is meaningful: for binary
/// tasks the convention throughout is that index 1 is the positive
/// class.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LabelSpace {
    labels: Vec<String>,
    #[serde(skip)]
    index: BTreeMap<String, usize>,
}

/// Binary convention: `labels[1]` is the positive class.
pub const POSITIVE: usize = 1;

impl LabelSpace {
    pub fn new(labels: Vec<String>) -> Result<Self> {
        if labels.len() < 2 {
            return Err(Error::InvalidLabelSpace(format!(
                "need at least 2 labels, got {}",
                labels.len()
            )));
        }
        let mut index = BTreeMap::new();
        for (i, name) in labels.iter().enumerate() {
            if name.is_empty() {
                return Err(Error::InvalidLabelSpace("empty label name".into()));
            }
            if index.insert(name.clone(), i).is_some() {
                return Err(Error::InvalidLabelSpace(format!("duplicate label `{name}`")));
            }
        }
        Ok(LabelSpace { labels, index })
    }

    pub fn binary() -> Self {
        LabelSpace::new(vec!["neg".into(), "pos".into()]).unwrap()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn is_binary(&self) -> bool {
        self.labels.len() == 2
    }

    pub fn label(&self, idx: usize) -> &str {
        &self.labels[idx]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn require(&self, name: &str) -> Result<usize> {
        self.index_of(name).ok_or_else(|| Error::UnknownLabel {
            label: name.to_string(),
            space: self.labels.clone(),
        })
    }
}

impl<'de> Deserialize<'de> for LabelSpace {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let labels = Vec::<String>::deserialize(d)?;
        LabelSpace::new(labels).map_err(serde::de::Error::custom)
    }
}

/// Sparse feature vector. Explicit zeros are dropped on construction so
/// equality and iteration see a canonical form.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseVector {
    entries: BTreeMap<u32, f64>,
}

impl SparseVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (u32, f64)>) -> Self {
        let mut v = SparseVector::new();
        for (k, x) in pairs {
            v.insert(k, x);
        }
        v
    }

    pub fn insert(&mut self, key: u32, value: f64) {
        if value == 0.0 {
            self.entries.remove(&key);
        } else {
            self.entries.insert(key, value);
        }
    }

    pub fn get(&self, key: u32) -> f64 {
        self.entries.get(&key).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.entries.iter().map(|(k, v)| (*k, *v))
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn dot_map(&self, weights: &BTreeMap<u32, f64>) -> f64 {
        self.entries
            .iter()
            .map(|(k, v)| v * weights.get(k).copied().unwrap_or(0.0))
            .sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub id: String,
    pub group_id: Option<String>,
    pub features: SparseVector,
    /// Token sequence, present for text-bearing instances.
    pub text: Option<Vec<String>>,
    pub meta: BTreeMap<String, String>,
}

impl Instance {
    pub fn tokens(&self) -> &[String] {
        self.text.as_deref().unwrap_or(&[])
    }
}

/// An immutable collection of instances sharing one label space.
/// Instance order is the order of the source file and is load-bearing:
/// variable indices, groups, and adjacency all follow it.
#[derive(Clone, Debug)]
pub struct Dataset {
    label_space: LabelSpace,
    instances: Vec<Instance>,
    groups: BTreeMap<String, Vec<usize>>,
}

impl Dataset {
    pub fn new(label_space: LabelSpace, instances: Vec<Instance>) -> Result<Self> {
        let mut seen = BTreeMap::new();
        let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, inst) in instances.iter().enumerate() {
            if inst.id.is_empty() {
                return Err(Error::Invalid(format!("instance {i} has an empty id")));
            }
            if seen.insert(inst.id.clone(), i).is_some() {
                return Err(Error::DuplicateId(inst.id.clone()));
            }
            if inst.features.is_empty() && inst.text.is_none() {
                return Err(Error::Invalid(format!(
                    "instance `{}` has neither features nor text",
                    inst.id
                )));
            }
            if let Some(label) = inst.meta.get("label") {
                label_space.require(label)?;
            }
            if let Some(g) = &inst.group_id {
                groups.entry(g.clone()).or_default().push(i);
            }
        }
        Ok(Dataset {
            label_space,
            instances,
            groups,
        })
    }

    pub fn label_space(&self) -> &LabelSpace {
        &self.label_space
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn instance(&self, i: usize) -> &Instance {
        &self.instances[i]
    }

    /// group_id -> member indices, ascending. Only instances that carry a
    /// group_id appear.
    pub fn groups(&self) -> &BTreeMap<String, Vec<usize>> {
        &self.groups
    }

    pub fn index_of_id(&self, id: &str) -> Option<usize> {
        self.instances.iter().position(|inst| inst.id == id)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Dataset> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let reader = BufReader::new(file);
        let mut lines = reader.lines().enumerate();

        let header = loop {
            match lines.next() {
                Some((n, line)) => {
                    let line = line.map_err(|e| Error::io(path, e))?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    break (n + 1, line);
                }
                None => return Err(Error::parse(path, 1, "missing header line")),
            }
        };
        let header_line: HeaderLine = serde_json::from_str(&header.1)
            .map_err(|e| Error::parse(path, header.0, format!("bad header: {e}")))?;
        let label_space =
            LabelSpace::new(header_line.label_space).map_err(|e| Error::parse(path, header.0, e.to_string()))?;

        let mut instances = Vec::new();
        for (n, line) in lines {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let raw: InstanceLine = serde_json::from_str(&line)
                .map_err(|e| Error::parse(path, n + 1, e.to_string()))?;
            let mut features = SparseVector::new();
            for (key, value) in raw.features.unwrap_or_default() {
                let id: u32 = key.parse().map_err(|_| {
                    Error::parse(path, n + 1, format!("feature key `{key}` is not a non-negative integer"))
                })?;
                features.insert(id, value);
            }
            let text = raw.text.map(|t| tokenize(&t));
            let inst = Instance {
                id: raw.id,
                group_id: raw.group_id,
                features,
                text,
                meta: raw.meta.unwrap_or_default(),
            };
            if inst.features.is_empty() && inst.text.is_none() {
                return Err(Error::parse(
                    path,
                    n + 1,
                    format!("instance `{}` has neither features nor text", inst.id),
                ));
            }
            if let Some(label) = inst.meta.get("label") {
                if label_space.index_of(label).is_none() {
                    return Err(Error::parse(
                        path,
                        n + 1,
                        format!(
                            "unknown label `{label}` (label space is {:?})",
                            label_space.labels()
                        ),
                    ));
                }
            }
            instances.push(inst);
        }
        Dataset::new(label_space, instances)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = Vec::new();
        let header = HeaderLine {
            label_space: self.label_space.labels().to_vec(),
        };
        serde_json::to_writer(&mut out, &header).expect("header serializes");
        out.push(b'\n');
        for inst in &self.instances {
            let features: BTreeMap<String, f64> =
                inst.features.iter().map(|(k, v)| (k.to_string(), v)).collect();
            let line = InstanceLine {
                id: inst.id.clone(),
                group_id: inst.group_id.clone(),
                features: if features.is_empty() { None } else { Some(features) },
                text: inst.text.as_ref().map(|t| t.join(" ")),
                meta: if inst.meta.is_empty() {
                    None
                } else {
                    Some(inst.meta.clone())
                },
            };
            serde_json::to_writer(&mut out, &line).expect("instance serializes");
            out.push(b'\n');
        }
        write_atomic(path, &out)
    }
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    label_space: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct InstanceLine {
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    group_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    features: Option<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    meta: Option<BTreeMap<String, String>>,
}

/// Lowercase, strip everything non-alphanumeric to spaces, split on
/// whitespace. Idempotent: tokenizing a joined token list changes
/// nothing.
pub fn tokenize(text: &str) -> Vec<String> {
    let lowered: String = text
        .chars()
        .flat_map(|c| c.to_lowercase())
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    lowered.split_whitespace().map(str::to_string).collect()
}

/// Inverse document frequency with add-one smoothing. Unseen tokens get
/// the weight of a token that appears in zero documents.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IdfTable {
    weights: BTreeMap<String, f64>,
    doc_count: usize,
}

impl IdfTable {
    /// Every token resolves to 1.0. Used where ranking should reduce to
    /// raw overlap counts.
    pub fn uniform() -> Self {
        IdfTable {
            weights: BTreeMap::new(),
            doc_count: 0,
        }
    }

    pub fn doc_count(&self) -> usize {
        self.doc_count
    }

    pub fn weight(&self, token: &str) -> f64 {
        match self.weights.get(token) {
            Some(w) => *w,
            None => idf_value(self.doc_count, 0),
        }
    }
}

fn idf_value(doc_count: usize, df: usize) -> f64 {
    ((1.0 + doc_count as f64) / (1.0 + df as f64)).ln() + 1.0
}

/// Document frequency over token *types*: a token counts once per
/// document no matter how often it repeats.
pub fn compute_idf<'a, I>(documents: I) -> Result<IdfTable>
where
    I: IntoIterator<Item = &'a [String]>,
{
    let mut df: BTreeMap<String, usize> = BTreeMap::new();
    let mut doc_count = 0usize;
    for doc in documents {
        doc_count += 1;
        let mut seen: Vec<&String> = doc.iter().collect();
        seen.sort();
        seen.dedup();
        for token in seen {
            *df.entry(token.clone()).or_insert(0) += 1;
        }
    }
    if doc_count == 0 {
        return Err(Error::Invalid("idf requires a non-empty corpus".into()));
    }
    let weights = df
        .into_iter()
        .map(|(token, df)| {
            let w = idf_value(doc_count, df);
            (token, w)
        })
        .collect();
    Ok(IdfTable { weights, doc_count })
}
