//! Silver evidence labels for (sentence, question) pairs and the
//! supervision graph built on top of them.
//!
//! Two generators produce silver selections per question: a rule-based
//! ranker scoring idf-weighted token overlap with the question and its
//! correct option, and a maximum-coverage selector over weighted word
//! types (exact enumeration with a greedy fallback). The selections
//! seed distant-supervision factors; lexical labeling functions and
//! high-order factors (adjacency agreement, same-question window
//! penalty, cross-question overlap penalty) complete the graph.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write as _};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{
    compute_idf, tokenize, Dataset, IdfTable, Instance, LabelSpace, SparseVector,
};
use crate::error::{Error, Result};
use crate::inference::BpConfig;
use crate::templates::{FormulaTemplate, PairPredicate, Payload, Scope, WeightParam};

/// Largest k-subset count the exact solver will enumerate.
pub const MAX_EXACT_SUBSETS: f64 = 1_000_000.0;

const WH_WORDS: &[&str] = &[
    "how", "what", "when", "where", "which", "who", "whom", "whose", "why",
];

#[derive(Clone, Debug)]
pub struct Document {
    pub id: String,
    /// Ordered, tokenized sentences.
    pub sentences: Vec<Vec<String>>,
}

impl Document {
    pub fn new(id: impl Into<String>, sentences: &[String]) -> Result<Self> {
        let id = id.into();
        if id.is_empty() {
            return Err(Error::Invalid("document id must be non-empty".into()));
        }
        if sentences.is_empty() {
            return Err(Error::Invalid(format!("document `{id}` has no sentences")));
        }
        Ok(Document {
            id,
            sentences: sentences.iter().map(|s| tokenize(s)).collect(),
        })
    }

    /// Idf with each sentence as one document, the unit the rule-based
    /// ranker weights tokens by.
    pub fn sentence_idf(&self) -> Result<IdfTable> {
        compute_idf(self.sentences.iter().map(Vec::as_slice))
    }
}

#[derive(Clone, Debug)]
pub struct Question {
    pub id: String,
    pub doc_id: String,
    pub text: Vec<String>,
    pub options: Vec<Vec<String>>,
    pub correct: usize,
}

impl Question {
    pub fn new(
        id: impl Into<String>,
        doc_id: impl Into<String>,
        text: &str,
        options: &[String],
        correct: usize,
    ) -> Result<Self> {
        let id = id.into();
        if id.is_empty() {
            return Err(Error::Invalid("question id must be non-empty".into()));
        }
        if correct >= options.len() {
            return Err(Error::Invalid(format!(
                "question `{id}`: correct option {correct} out of range for {} options",
                options.len()
            )));
        }
        Ok(Question {
            id,
            doc_id: doc_id.into(),
            text: tokenize(text),
            options: options.iter().map(|o| tokenize(o)).collect(),
            correct,
        })
    }

    pub fn correct_option(&self) -> &[String] {
        &self.options[self.correct]
    }

    /// Leading wh-word, when there is one.
    pub fn question_type(&self) -> Option<&str> {
        self.text
            .first()
            .map(String::as_str)
            .filter(|t| WH_WORDS.contains(t))
    }
}

#[derive(Clone, Debug, Default)]
pub struct EvidenceCorpus {
    pub documents: Vec<Document>,
    pub questions: Vec<Question>,
    doc_index: BTreeMap<String, usize>,
}

impl EvidenceCorpus {
    pub fn new(documents: Vec<Document>, questions: Vec<Question>) -> Result<Self> {
        let mut doc_index = BTreeMap::new();
        for (i, d) in documents.iter().enumerate() {
            if doc_index.insert(d.id.clone(), i).is_some() {
                return Err(Error::DuplicateId(d.id.clone()));
            }
        }
        let mut qids = BTreeSet::new();
        for q in &questions {
            if !qids.insert(q.id.clone()) {
                return Err(Error::DuplicateId(q.id.clone()));
            }
            if !doc_index.contains_key(&q.doc_id) {
                return Err(Error::UnknownDocument {
                    question: q.id.clone(),
                    doc: q.doc_id.clone(),
                });
            }
        }
        Ok(EvidenceCorpus { documents, questions, doc_index })
    }

    pub fn document(&self, id: &str) -> Option<&Document> {
        self.doc_index.get(id).map(|&i| &self.documents[i])
    }

    /// Mixed JSON lines: documents carry `sentences`, questions carry
    /// `doc_id`/`options`/`correct`. Blank lines are skipped.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut documents = Vec::new();
        let mut questions = Vec::new();
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let lineno = lineno + 1;
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: CorpusLine = serde_json::from_str(&line)
                .map_err(|e| Error::parse(path, lineno, e.to_string()))?;
            match parsed {
                CorpusLine::Document { id, sentences } => {
                    documents.push(
                        Document::new(id, &sentences)
                            .map_err(|e| Error::parse(path, lineno, e.to_string()))?,
                    );
                }
                CorpusLine::Question { id, doc_id, text, options, correct } => {
                    questions.push(
                        Question::new(id, doc_id, &text, &options, correct)
                            .map_err(|e| Error::parse(path, lineno, e.to_string()))?,
                    );
                }
            }
        }
        EvidenceCorpus::new(documents, questions)
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum CorpusLine {
    Question {
        id: String,
        doc_id: String,
        text: String,
        options: Vec<String>,
        correct: usize,
    },
    Document {
        id: String,
        sentences: Vec<String>,
    },
}

/// Weighted word-coverage instance over one document's vocabulary.
/// Word values: 1.0 for correct-option words, 0.1 for words appearing
/// only in the question, 0.0 otherwise.
#[derive(Clone, Debug)]
pub struct CoverageProblem {
    /// Sorted document vocabulary; indices are word ids.
    pub words: Vec<String>,
    pub values: Vec<f64>,
    /// Word ids present in each sentence.
    pub occurrence: Vec<BTreeSet<usize>>,
    pub budget: usize,
    /// Token counts per sentence. Carried for completeness, no
    /// constraint uses them.
    pub sentence_lengths: Vec<usize>,
}

impl CoverageProblem {
    pub fn n_sentences(&self) -> usize {
        self.occurrence.len()
    }

    pub fn occurs(&self, word: usize, sentence: usize) -> bool {
        self.occurrence[sentence].contains(&word)
    }
}

/// A chosen sentence subset with the word types it covers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvidenceSelection {
    /// Ascending sentence indices, at most the budget.
    pub sentence_indices: Vec<usize>,
    /// Word types occurring in at least one selected sentence.
    pub covered: BTreeSet<String>,
    pub objective: f64,
}

impl EvidenceSelection {
    pub fn contains(&self, sentence: usize) -> bool {
        self.sentence_indices.binary_search(&sentence).is_ok()
    }
}

pub fn build_coverage_problem(
    doc: &Document,
    question: &Question,
    budget: usize,
) -> Result<CoverageProblem> {
    if budget == 0 {
        return Err(Error::InvalidConfig("coverage budget must be at least 1".into()));
    }
    let vocab: BTreeSet<&String> = doc.sentences.iter().flatten().collect();
    let words: Vec<String> = vocab.into_iter().cloned().collect();
    let id_of: BTreeMap<&str, usize> =
        words.iter().enumerate().map(|(i, w)| (w.as_str(), i)).collect();
    let answer: BTreeSet<&str> = question.correct_option().iter().map(String::as_str).collect();
    let in_question: BTreeSet<&str> = question.text.iter().map(String::as_str).collect();
    let values = words
        .iter()
        .map(|w| {
            if answer.contains(w.as_str()) {
                1.0
            } else if in_question.contains(w.as_str()) {
                0.1
            } else {
                0.0
            }
        })
        .collect();
    let occurrence = doc
        .sentences
        .iter()
        .map(|s| s.iter().map(|t| id_of[t.as_str()]).collect())
        .collect();
    Ok(CoverageProblem {
        words,
        values,
        occurrence,
        budget,
        sentence_lengths: doc.sentences.iter().map(Vec::len).collect(),
    })
}

/// Strict improvement with a relative epsilon, so that float noise
/// from reordered sums cannot steal a tie from the earlier candidate.
fn improves(candidate: f64, best: f64) -> bool {
    candidate > best + 1e-9 * candidate.abs().max(best.abs()).max(1.0)
}

fn selection_from(problem: &CoverageProblem, mut indices: Vec<usize>) -> EvidenceSelection {
    indices.sort_unstable();
    indices.dedup();
    let mut covered_ids = BTreeSet::new();
    for &s in &indices {
        covered_ids.extend(problem.occurrence[s].iter().copied());
    }
    let objective = covered_ids.iter().map(|&w| problem.values[w]).sum();
    let covered = covered_ids.iter().map(|&w| problem.words[w].clone()).collect();
    EvidenceSelection { sentence_indices: indices, covered, objective }
}

fn subset_count(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    let mut acc = 1.0f64;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
        if acc > 1e15 {
            return acc;
        }
    }
    acc
}

/// Exhaustive optimum over subsets of size min(n, budget), visited in
/// lexicographic order so ties resolve to the smallest index set.
pub fn solve_max_coverage_exact(problem: &CoverageProblem) -> Result<EvidenceSelection> {
    let n = problem.n_sentences();
    let k = problem.budget.min(n);
    let combinations = subset_count(n, k);
    if combinations > MAX_EXACT_SUBSETS {
        return Err(Error::CombinatorialBound {
            n,
            k,
            combinations,
            bound: MAX_EXACT_SUBSETS,
        });
    }

    // per-sentence word bitmaps make subset evaluation cheap
    let blocks = problem.words.len().div_ceil(64).max(1);
    let masks: Vec<Vec<u64>> = problem
        .occurrence
        .iter()
        .map(|set| {
            let mut m = vec![0u64; blocks];
            for &w in set {
                m[w / 64] |= 1 << (w % 64);
            }
            m
        })
        .collect();
    let value_of = |union: &[u64]| -> f64 {
        let mut total = 0.0;
        for (b, &bits) in union.iter().enumerate() {
            let mut bits = bits;
            while bits != 0 {
                let w = b * 64 + bits.trailing_zeros() as usize;
                total += problem.values[w];
                bits &= bits - 1;
            }
        }
        total
    };

    let mut idx: Vec<usize> = (0..k).collect();
    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut union = vec![0u64; blocks];
    loop {
        union.iter_mut().for_each(|b| *b = 0);
        for &s in &idx {
            for (b, &bits) in masks[s].iter().enumerate() {
                union[b] |= bits;
            }
        }
        let value = value_of(&union);
        match &best {
            Some((_, b)) if !improves(value, *b) => {}
            _ => best = Some((idx.clone(), value)),
        }

        // advance to the next k-subset in lexicographic order
        let mut j = k;
        loop {
            if j == 0 {
                return Ok(selection_from(problem, best.expect("k-subset visited").0));
            }
            j -= 1;
            if idx[j] < n - k + j {
                idx[j] += 1;
                for t in j + 1..k {
                    idx[t] = idx[t - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Greedy maximum marginal gain, ties to the smaller index, stopping
/// early once no sentence adds value. Carries the usual (1 - 1/e)
/// guarantee relative to the exact optimum.
pub fn solve_max_coverage_greedy(problem: &CoverageProblem) -> EvidenceSelection {
    let n = problem.n_sentences();
    let mut chosen: Vec<usize> = Vec::new();
    let mut covered: BTreeSet<usize> = BTreeSet::new();
    let mut used = vec![false; n];
    for _ in 0..problem.budget.min(n) {
        let mut best: Option<(usize, f64)> = None;
        for s in 0..n {
            if used[s] {
                continue;
            }
            let gain: f64 = problem.occurrence[s]
                .iter()
                .filter(|w| !covered.contains(w))
                .map(|&w| problem.values[w])
                .sum();
            match best {
                Some((_, g)) if !improves(gain, g) => {}
                _ => best = Some((s, gain)),
            }
        }
        let Some((s, gain)) = best else { break };
        if gain <= 0.0 {
            break;
        }
        used[s] = true;
        chosen.push(s);
        covered.extend(problem.occurrence[s].iter().copied());
    }
    selection_from(problem, chosen)
}

/// Idf-weighted overlap between each sentence and the question plus
/// its correct option, counting each shared token type once.
pub fn rule_based_scores(doc: &Document, question: &Question, idf: &IdfTable) -> Vec<f64> {
    let target: BTreeSet<&str> = question
        .text
        .iter()
        .chain(question.correct_option())
        .map(String::as_str)
        .collect();
    doc.sentences
        .iter()
        .map(|sentence| {
            let types: BTreeSet<&str> = sentence.iter().map(String::as_str).collect();
            types
                .intersection(&target)
                .map(|t| idf.weight(t))
                .sum()
        })
        .collect()
}

/// Top-L sentences by overlap score, ties to the smaller index.
pub fn rule_based_silver(
    doc: &Document,
    question: &Question,
    idf: &IdfTable,
    budget: usize,
) -> EvidenceSelection {
    let scores = rule_based_scores(doc, question, idf);
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b].partial_cmp(&scores[a]).expect("finite scores").then(a.cmp(&b))
    });
    order.truncate(budget.min(scores.len()));
    order.sort_unstable();

    let mut covered: BTreeSet<String> = BTreeSet::new();
    for &s in &order {
        covered.extend(doc.sentences[s].iter().cloned());
    }
    let objective = order.iter().map(|&s| scores[s]).sum();
    EvidenceSelection { sentence_indices: order, covered, objective }
}

/// |a ∩ b| / min(|a|, |b|) over sentence index sets; 0 when either is
/// empty.
pub fn overlap_coefficient(a: &[usize], b: &[usize]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let sa: BTreeSet<usize> = a.iter().copied().collect();
    let shared = b.iter().filter(|s| sa.contains(s)).count();
    shared as f64 / sa.len().min(b.len()) as f64
}

/// BP schedule tuned for the evidence graphs, which carry longer
/// dependency chains than generic supervision graphs.
pub fn evidence_bp_config() -> BpConfig {
    BpConfig { max_iters: 5, ..BpConfig::default() }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvidenceLfConfig {
    /// Labeling functions to attach, by registry id.
    pub lf_ids: Vec<String>,
    pub lf_weight: f64,
    pub silver_weight: f64,
    pub adjacency_weight: f64,
    /// Sentence-index gap beyond which two positives in the same
    /// question are penalized.
    pub window: u32,
    pub window_penalty: f64,
    /// Silver overlap coefficient above which two questions on the
    /// same document get cross-question co-positive penalties.
    pub overlap_threshold: f64,
    pub overlap_penalty: f64,
}

impl Default for EvidenceLfConfig {
    fn default() -> Self {
        EvidenceLfConfig {
            lf_ids: vec![
                "length_band".into(),
                "length_ratio".into(),
                "position".into(),
                "wh_cue".into(),
            ],
            lf_weight: 0.5,
            silver_weight: 1.0,
            adjacency_weight: 0.5,
            window: 8,
            window_penalty: 2.0,
            overlap_threshold: 0.5,
            overlap_penalty: 2.0,
        }
    }
}

/// One instance per (sentence, question) pair plus the template set
/// that supervises them: silver distant supervision, lexical labeling
/// functions, adjacency agreement, and the window and cross-question
/// overlap penalties.
pub fn build_evidence_supervision(
    corpus: &EvidenceCorpus,
    silver: &BTreeMap<String, EvidenceSelection>,
    config: &EvidenceLfConfig,
) -> Result<(Dataset, Vec<FormulaTemplate>)> {
    let mut instances = Vec::new();
    for question in &corpus.questions {
        let selection = silver.get(&question.id).ok_or_else(|| {
            Error::Invalid(format!("no silver selection for question `{}`", question.id))
        })?;
        let doc = corpus.document(&question.doc_id).expect("corpus validated");
        let idf = doc.sentence_idf()?;
        let q_types: BTreeSet<&str> = question.text.iter().map(String::as_str).collect();
        let a_types: BTreeSet<&str> =
            question.correct_option().iter().map(String::as_str).collect();
        let doc_len = doc.sentences.len();

        for (s, sentence) in doc.sentences.iter().enumerate() {
            let types: BTreeSet<&str> = sentence.iter().map(String::as_str).collect();
            let q_overlap: f64 =
                types.intersection(&q_types).map(|t| idf.weight(t)).sum();
            let a_overlap: f64 =
                types.intersection(&a_types).map(|t| idf.weight(t)).sum();
            let rel_pos = s as f64 / (doc_len - 1).max(1) as f64;
            let features = SparseVector::from_pairs([
                (0, sentence.len() as f64 / 10.0),
                (1, q_overlap),
                (2, a_overlap),
                (3, rel_pos),
            ]);

            let mut meta = BTreeMap::new();
            meta.insert("doc_id".into(), doc.id.clone());
            meta.insert("sent_index".into(), s.to_string());
            meta.insert("doc_len".into(), doc_len.to_string());
            meta.insert("answer_len".into(), question.correct_option().len().to_string());
            if let Some(qt) = question.question_type() {
                meta.insert("question_type".into(), qt.to_string());
            }
            meta.insert(
                "silver".into(),
                if selection.contains(s) { "pos" } else { "neg" }.to_string(),
            );

            instances.push(Instance {
                id: format!("{}#{s}", question.id),
                group_id: Some(question.id.clone()),
                features,
                text: Some(sentence.clone()),
                meta,
            });
        }
    }
    let dataset = Dataset::new(LabelSpace::binary(), instances)?;

    let mut templates = vec![
        FormulaTemplate {
            id: "silver_pos".into(),
            weight: WeightParam::learnable(config.silver_weight)
                .with_prior(config.silver_weight, 1.0),
            scope: Scope::All,
            payload: Payload::DistantSupervision {
                target_label: "pos".into(),
                kb_meta_key: "silver".into(),
            },
        },
        FormulaTemplate {
            id: "silver_neg".into(),
            weight: WeightParam::learnable(config.silver_weight)
                .with_prior(config.silver_weight, 1.0),
            scope: Scope::All,
            payload: Payload::DistantSupervision {
                target_label: "neg".into(),
                kb_meta_key: "silver".into(),
            },
        },
    ];
    for lf_id in &config.lf_ids {
        templates.push(FormulaTemplate {
            id: format!("lf_{lf_id}"),
            weight: WeightParam::learnable(config.lf_weight).with_prior(config.lf_weight, 1.0),
            scope: Scope::All,
            payload: Payload::LabelingFunction { lf_id: lf_id.clone() },
        });
    }
    templates.push(FormulaTemplate {
        id: "adjacent_agree".into(),
        weight: WeightParam::learnable(config.adjacency_weight)
            .with_prior(config.adjacency_weight, 1.0),
        scope: Scope::All,
        payload: Payload::PairwiseAgreement {
            pairs: PairPredicate::GroupAdjacent,
            co_label: None,
        },
    });
    templates.push(FormulaTemplate {
        id: "evidence_window".into(),
        weight: WeightParam::fixed(-config.window_penalty),
        scope: Scope::All,
        payload: Payload::PairwiseAgreement {
            pairs: PairPredicate::MetaGapOver {
                key: "sent_index".into(),
                threshold: config.window,
            },
            co_label: Some("pos".into()),
        },
    });

    // questions on the same document whose silver sets overlap too
    // much get co-positive penalties on each shared sentence
    let mut overlap_pairs: Vec<(String, String)> = Vec::new();
    for doc in &corpus.documents {
        let qs: Vec<&Question> =
            corpus.questions.iter().filter(|q| q.doc_id == doc.id).collect();
        for a in 0..qs.len() {
            for b in a + 1..qs.len() {
                let sa = &silver[&qs[a].id].sentence_indices;
                let sb = &silver[&qs[b].id].sentence_indices;
                if overlap_coefficient(sa, sb) > config.overlap_threshold {
                    let shared: BTreeSet<usize> = sa
                        .iter()
                        .filter(|s| sb.contains(s))
                        .copied()
                        .collect();
                    for s in shared {
                        overlap_pairs.push((
                            format!("{}#{s}", qs[a].id),
                            format!("{}#{s}", qs[b].id),
                        ));
                    }
                }
            }
        }
    }
    if !overlap_pairs.is_empty() {
        templates.push(FormulaTemplate {
            id: "cross_question_overlap".into(),
            weight: WeightParam::fixed(-config.overlap_penalty),
            scope: Scope::All,
            payload: Payload::PairwiseAgreement {
                pairs: PairPredicate::Explicit { pairs: overlap_pairs },
                co_label: Some("pos".into()),
            },
        });
    }

    Ok((dataset, templates))
}

/// One line per question: {"question_id", "sentence_indices", "objective"}.
pub fn write_silver_jsonl(
    path: impl AsRef<Path>,
    entries: &[(String, EvidenceSelection)],
) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    for (question_id, sel) in entries {
        let line = serde_json::json!({
            "question_id": question_id,
            "sentence_indices": sel.sentence_indices,
            "objective": sel.objective,
        });
        writeln!(buf, "{line}").expect("vec write");
    }
    crate::data::write_atomic(path, &buf)
}

pub fn read_silver_jsonl(path: impl AsRef<Path>) -> Result<Vec<(String, Vec<usize>, f64)>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        #[derive(Deserialize)]
        struct SilverLine {
            question_id: String,
            sentence_indices: Vec<usize>,
            objective: f64,
        }
        let parsed: SilverLine = serde_json::from_str(&line)
            .map_err(|e| Error::parse(path, lineno + 1, e.to_string()))?;
        out.push((parsed.question_id, parsed.sentence_indices, parsed.objective));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::templates::{ground_template, LabelingFunctionRegistry};
    use proptest::prelude::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn doc(id: &str, sentences: &[&str]) -> Document {
        let owned: Vec<String> = sentences.iter().map(|s| s.to_string()).collect();
        Document::new(id, &owned).unwrap()
    }

    fn question(id: &str, doc_id: &str, text: &str, options: &[&str], correct: usize) -> Question {
        let owned: Vec<String> = options.iter().map(|s| s.to_string()).collect();
        Question::new(id, doc_id, text, &owned, correct).unwrap()
    }

    #[test]
    fn sentence_matching_answer_ranks_first() {
        let d = doc(
            "d",
            &["altogether unrelated words here", "the treaty was signed in autumn", "more filler text entirely"],
        );
        let q = question("q", "d", "what happened", &["the treaty was signed in autumn", "nothing"], 0);
        let idf = d.sentence_idf().unwrap();
        let sel = rule_based_silver(&d, &q, &idf, 1);
        assert_eq!(sel.sentence_indices, vec![1]);
    }

    #[test]
    fn budget_at_least_doc_size_selects_everything() {
        let d = doc("d", &["a b", "c d", "e f"]);
        let q = question("q", "d", "a", &["c"], 0);
        let sel = rule_based_silver(&d, &q, &IdfTable::uniform(), 10);
        assert_eq!(sel.sentence_indices, vec![0, 1, 2]);
    }

    #[test]
    fn rule_ranking_matches_hand_scores() {
        // eight sentences with hand-computed uniform-idf overlap counts
        // against target types {what, color, is, the, sky, blue}
        let d = doc(
            "d",
            &[
                "the sky is blue",      // {the, sky, is, blue} -> 4
                "grass is green",       // {is} -> 1
                "blue whales swim",     // {blue} -> 1
                "nothing relevant",     // 0
                "the the the",          // {the} -> 1 (types counted once)
                "is the sky blue",      // 4
                "sky",                  // 1
                "what is the color",    // 4
            ],
        );
        let q = question("q", "d", "what color is the sky", &["blue"], 0);
        let scores = rule_based_scores(&d, &q, &IdfTable::uniform());
        assert_eq!(scores, vec![4.0, 1.0, 1.0, 0.0, 1.0, 4.0, 1.0, 4.0]);
        // ties at 4: indices 0, 5, 7; budget 2 keeps the smaller two
        let sel = rule_based_silver(&d, &q, &IdfTable::uniform(), 2);
        assert_eq!(sel.sentence_indices, vec![0, 5]);
        assert_eq!(sel.objective, 8.0);
    }

    proptest! {
        #[test]
        fn uniform_idf_reduces_to_overlap_counts(
            raw in proptest::collection::vec("[a-f]( [a-f]){0,5}", 1..8),
            qtext in "[a-f]( [a-f]){0,4}",
            answer in "[a-f]( [a-f]){0,3}",
            budget in 1usize..6,
        ) {
            let d = Document::new("d", &raw).unwrap();
            let q = Question::new("q", "d", &qtext, &[answer], 0).unwrap();
            let target: BTreeSet<&str> =
                q.text.iter().chain(q.correct_option()).map(String::as_str).collect();
            let counts: Vec<usize> = d
                .sentences
                .iter()
                .map(|s| {
                    let types: BTreeSet<&str> = s.iter().map(String::as_str).collect();
                    types.intersection(&target).count()
                })
                .collect();
            let mut want: Vec<usize> = (0..counts.len()).collect();
            want.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
            want.truncate(budget.min(counts.len()));
            want.sort_unstable();
            let sel = rule_based_silver(&d, &q, &IdfTable::uniform(), budget);
            prop_assert_eq!(sel.sentence_indices, want);
        }
    }

    #[test]
    fn disjoint_question_gives_all_zero_values() {
        let d = doc("d", &["a b c", "d e"]);
        let q = question("q", "d", "x y", &["z"], 0);
        let p = build_coverage_problem(&d, &q, 2).unwrap();
        assert!(p.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn occurrence_tracks_word_membership() {
        let d = doc("d", &["gold here", "gold again", "nothing"]);
        let q = question("q", "d", "where", &["gold"], 0);
        let p = build_coverage_problem(&d, &q, 1).unwrap();
        let gold = p.words.iter().position(|w| w == "gold").unwrap();
        assert!((p.values[gold] - 1.0).abs() < 1e-15);
        assert!(p.occurs(gold, 0) && p.occurs(gold, 1) && !p.occurs(gold, 2));
        // brute-force recount over every (word, sentence) pair
        for (w, word) in p.words.iter().enumerate() {
            for (s, sentence) in d.sentences.iter().enumerate() {
                assert_eq!(p.occurs(w, s), sentence.contains(word));
            }
        }
        assert_eq!(p.sentence_lengths, vec![2, 2, 1]);
    }

    #[test]
    fn exact_with_large_budget_selects_all() {
        let d = doc("d", &["a b", "b c", "q r"]);
        let q = question("q", "d", "c covered", &["a b"], 0);
        let p = build_coverage_problem(&d, &q, 5).unwrap();
        let sel = solve_max_coverage_exact(&p).unwrap();
        assert_eq!(sel.sentence_indices, vec![0, 1, 2]);
        // a, b at 1.0; c and covered at 0.1 each, c occurs
        assert!((sel.objective - 2.1).abs() < 1e-12, "{}", sel.objective);
    }

    #[test]
    fn exact_prefers_higher_value_sentence() {
        let d = doc("d", &["gold question", "gold"]);
        let q = question("q", "d", "question", &["gold"], 0);
        let mut p = build_coverage_problem(&d, &q, 1).unwrap();
        assert_eq!(solve_max_coverage_exact(&p).unwrap().sentence_indices, vec![0]);
        // flip the advantage to sentence 1 by zeroing the question word
        let qw = p.words.iter().position(|w| w == "question").unwrap();
        p.values[qw] = 0.0;
        assert_eq!(solve_max_coverage_exact(&p).unwrap().sentence_indices, vec![0]);
        // equal coverage now; lexicographically smaller set wins
    }

    // second, independently structured enumeration: recursive, over
    // token-string sets, no bitmaps
    fn oracle_best(problem: &CoverageProblem) -> f64 {
        fn recurse(
            problem: &CoverageProblem,
            start: usize,
            left: usize,
            chosen: &mut Vec<usize>,
            best: &mut f64,
        ) {
            if left == 0 || start == problem.n_sentences() {
                let mut covered: BTreeSet<usize> = BTreeSet::new();
                for &s in chosen.iter() {
                    covered.extend(problem.occurrence[s].iter().copied());
                }
                let v: f64 = covered.iter().map(|&w| problem.values[w]).sum();
                if v > *best {
                    *best = v;
                }
                return;
            }
            for s in start..problem.n_sentences() {
                chosen.push(s);
                recurse(problem, s + 1, left - 1, chosen, best);
                chosen.pop();
            }
            // also consider stopping short when fewer sentences remain
            if problem.n_sentences() - start < left {
                recurse(problem, problem.n_sentences(), 0, chosen, best);
            }
        }
        let mut best = f64::NEG_INFINITY;
        let mut chosen = Vec::new();
        let k = problem.budget.min(problem.n_sentences());
        recurse(problem, 0, k, &mut chosen, &mut best);
        best
    }

    fn random_problem(rng: &mut ChaCha8Rng, n: usize, budget: usize) -> CoverageProblem {
        let vocab = 14usize;
        let words: Vec<String> = (0..vocab).map(|i| format!("w{i}")).collect();
        // dyadic values keep subset sums exact, so order of summation
        // can never shift an objective by an ulp
        let values: Vec<f64> = (0..vocab)
            .map(|_| match rng.random_range(0..3) {
                0 => 1.0,
                1 => 0.125,
                _ => 0.0,
            })
            .collect();
        let occurrence: Vec<BTreeSet<usize>> = (0..n)
            .map(|_| {
                let len = rng.random_range(1..6);
                (0..len).map(|_| rng.random_range(0..vocab)).collect()
            })
            .collect();
        let sentence_lengths = occurrence.iter().map(BTreeSet::len).collect();
        CoverageProblem { words, values, occurrence, budget, sentence_lengths }
    }

    #[test]
    fn exact_matches_independent_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..60 {
            let n = rng.random_range(2..11);
            let budget = rng.random_range(1..4);
            let p = random_problem(&mut rng, n, budget);
            let sel = solve_max_coverage_exact(&p).unwrap();
            let want = oracle_best(&p);
            assert_eq!(sel.objective, want, "trial {trial}");
        }
    }

    #[test]
    fn greedy_matches_exact_on_disjoint_coverage() {
        let d = doc("d", &["a b", "c", "d e f"]);
        let q = question("q", "d", "c d", &["a b e"], 0);
        let p = build_coverage_problem(&d, &q, 2).unwrap();
        let g = solve_max_coverage_greedy(&p);
        let e = solve_max_coverage_exact(&p).unwrap();
        assert_eq!(g, e);
    }

    #[test]
    fn greedy_single_sentence() {
        let d = doc("d", &["only sentence"]);
        let q = question("q", "d", "only", &["sentence"], 0);
        let p = build_coverage_problem(&d, &q, 3).unwrap();
        assert_eq!(solve_max_coverage_greedy(&p).sentence_indices, vec![0]);
    }

    #[test]
    fn greedy_stops_at_zero_gain() {
        let d = doc("d", &["gold", "junk words", "more junk"]);
        let q = question("q", "d", "where", &["gold"], 0);
        let p = build_coverage_problem(&d, &q, 3).unwrap();
        let g = solve_max_coverage_greedy(&p);
        assert_eq!(g.sentence_indices, vec![0]);
    }

    #[test]
    fn greedy_within_guarantee_and_exact_dominates() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let floor = 1.0 - 1.0 / std::f64::consts::E;
        for _ in 0..60 {
            let n = rng.random_range(2..12);
            let budget = rng.random_range(1..5);
            let p = random_problem(&mut rng, n, budget);
            let e = solve_max_coverage_exact(&p).unwrap();
            let g = solve_max_coverage_greedy(&p);
            assert!(e.objective >= g.objective - 1e-12);
            assert!(g.objective >= floor * e.objective - 1e-12);
        }
    }

    #[test]
    fn selections_satisfy_linking_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..40 {
            let n = rng.random_range(1..10);
            let budget = rng.random_range(1..5);
            let p = random_problem(&mut rng, n, budget);
            for sel in [
                solve_max_coverage_exact(&p).unwrap(),
                solve_max_coverage_greedy(&p),
            ] {
                assert!(sel.sentence_indices.len() <= p.budget);
                let mut want: BTreeSet<String> = BTreeSet::new();
                for &s in &sel.sentence_indices {
                    want.extend(p.occurrence[s].iter().map(|&w| p.words[w].clone()));
                }
                assert_eq!(sel.covered, want);
            }
        }
    }

    #[test]
    fn scaling_values_preserves_exact_argmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..40 {
            let n = rng.random_range(2..10);
            let budget = rng.random_range(1..4);
            let p = random_problem(&mut rng, n, budget);
            let base = solve_max_coverage_exact(&p).unwrap();
            let mut scaled = p.clone();
            scaled.values.iter_mut().for_each(|v| *v *= 3.0);
            let s = solve_max_coverage_exact(&scaled).unwrap();
            assert_eq!(base.sentence_indices, s.sentence_indices);
        }
    }

    #[test]
    fn exact_bound_is_enforced() {
        let n = 40;
        let sentences: Vec<String> = (0..n).map(|i| format!("tok{i}")).collect();
        let d = Document::new("d", &sentences).unwrap();
        let q = question("q", "d", "tok0", &["tok1"], 0);
        let p = build_coverage_problem(&d, &q, 12).unwrap();
        let err = solve_max_coverage_exact(&p).unwrap_err();
        assert!(matches!(err, Error::CombinatorialBound { .. }), "{err}");
    }

    fn toy_corpus() -> EvidenceCorpus {
        let d = doc("d1", &["the sky is blue", "water is wet"]);
        let q = question("q1", "d1", "what is blue", &["the sky", "water"], 0);
        EvidenceCorpus::new(vec![d], vec![q]).unwrap()
    }

    fn silver_for(corpus: &EvidenceCorpus, budget: usize) -> BTreeMap<String, EvidenceSelection> {
        corpus
            .questions
            .iter()
            .map(|q| {
                let doc = corpus.document(&q.doc_id).unwrap();
                let idf = doc.sentence_idf().unwrap();
                (q.id.clone(), rule_based_silver(doc, q, &idf, budget))
            })
            .collect()
    }

    #[test]
    fn supervision_instances_and_adjacency() {
        let corpus = toy_corpus();
        let silver = silver_for(&corpus, 1);
        let (ds, templates) =
            build_evidence_supervision(&corpus, &silver, &EvidenceLfConfig::default()).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.instance(0).id, "q1#0");
        assert_eq!(ds.instance(0).group_id.as_deref(), Some("q1"));
        assert_eq!(ds.instance(0).meta["silver"], "pos");
        assert_eq!(ds.instance(1).meta["silver"], "neg");
        assert_eq!(ds.instance(1).meta["sent_index"], "1");
        assert_eq!(ds.instance(1).meta["doc_len"], "2");
        assert_eq!(ds.instance(1).meta["answer_len"], "2");
        assert_eq!(ds.instance(1).meta["question_type"], "what");

        let adjacency = templates.iter().find(|t| t.id == "adjacent_agree").unwrap();
        let reg = LabelingFunctionRegistry::with_builtins();
        let factors = ground_template(adjacency, &ds, &reg).unwrap();
        assert_eq!(factors.len(), 1);
        assert_eq!(factors[0].variables, vec![0, 1]);
        // no cross-question template with a single question
        assert!(templates.iter().all(|t| t.id != "cross_question_overlap"));
    }

    #[test]
    fn window_grounds_beyond_gap() {
        let sentences: Vec<String> = (0..12).map(|i| format!("tok{i} filler")).collect();
        let d = Document::new("d", &sentences).unwrap();
        let q = question("q", "d", "tok0", &["tok9"], 0);
        let corpus = EvidenceCorpus::new(vec![d], vec![q]).unwrap();
        let silver = silver_for(&corpus, 3);
        let (ds, templates) =
            build_evidence_supervision(&corpus, &silver, &EvidenceLfConfig::default()).unwrap();
        let window = templates.iter().find(|t| t.id == "evidence_window").unwrap();
        assert_eq!(window.weight.value, -2.0);
        assert!(window.weight.fixed);
        let reg = LabelingFunctionRegistry::with_builtins();
        let factors = ground_template(window, &ds, &reg).unwrap();
        // pairs with index gap > 8 among 12 sentences: 3 + 2 + 1
        assert_eq!(factors.len(), 6);
        assert!(factors.iter().any(|f| f.variables == vec![0, 9]));
    }

    #[test]
    fn cross_question_overlap_penalty_gated_by_ratio() {
        let d = doc(
            "d1",
            &["alpha beta", "gamma delta", "epsilon zeta", "eta theta"],
        );
        let qa = question("qa", "d1", "alpha", &["gamma"], 0);
        let qb = question("qb", "d1", "beta", &["delta"], 0);
        let corpus = EvidenceCorpus::new(vec![d], vec![qa, qb]).unwrap();

        let sel = |indices: &[usize]| EvidenceSelection {
            sentence_indices: indices.to_vec(),
            covered: BTreeSet::new(),
            objective: 0.0,
        };
        // both picked {0, 1}: coefficient 1.0 > 0.5
        let mut silver = BTreeMap::new();
        silver.insert("qa".to_string(), sel(&[0, 1]));
        silver.insert("qb".to_string(), sel(&[0, 1]));
        let (ds, templates) =
            build_evidence_supervision(&corpus, &silver, &EvidenceLfConfig::default()).unwrap();
        let overlap = templates.iter().find(|t| t.id == "cross_question_overlap").unwrap();
        let reg = LabelingFunctionRegistry::with_builtins();
        let factors = ground_template(overlap, &ds, &reg).unwrap();
        assert_eq!(factors.len(), 2);
        let a0 = ds.index_of_id("qa#0").unwrap();
        let b0 = ds.index_of_id("qb#0").unwrap();
        assert!(factors.iter().any(|f| f.variables == vec![a0.min(b0), a0.max(b0)]));

        // coefficient exactly 0.5 stays unpenalized
        let mut silver = BTreeMap::new();
        silver.insert("qa".to_string(), sel(&[0, 1]));
        silver.insert("qb".to_string(), sel(&[1, 2]));
        let (_, templates) =
            build_evidence_supervision(&corpus, &silver, &EvidenceLfConfig::default()).unwrap();
        assert!(templates.iter().all(|t| t.id != "cross_question_overlap"));
    }

    #[test]
    fn missing_silver_is_an_error() {
        let corpus = toy_corpus();
        let err = build_evidence_supervision(
            &corpus,
            &BTreeMap::new(),
            &EvidenceLfConfig::default(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("q1"), "{err}");
    }

    #[test]
    fn corpus_roundtrip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        std::fs::write(
            &path,
            concat!(
                "{\"id\": \"d1\", \"sentences\": [\"The sky is blue.\", \"Water is wet.\"]}\n",
                "\n",
                "{\"id\": \"q1\", \"doc_id\": \"d1\", \"text\": \"What is blue?\", \"options\": [\"the sky\", \"water\"], \"correct\": 0}\n",
            ),
        )
        .unwrap();
        let corpus = EvidenceCorpus::load(&path).unwrap();
        assert_eq!(corpus.documents.len(), 1);
        assert_eq!(corpus.questions.len(), 1);
        assert_eq!(corpus.documents[0].sentences[0], vec!["the", "sky", "is", "blue"]);
        assert_eq!(corpus.questions[0].question_type(), Some("what"));

        std::fs::write(&path, "{\"id\": \"q\", \"doc_id\": \"nope\", \"text\": \"x\", \"options\": [\"y\"], \"correct\": 0}\n").unwrap();
        let err = EvidenceCorpus::load(&path).unwrap_err();
        assert!(matches!(err, Error::UnknownDocument { .. }), "{err}");

        std::fs::write(&path, "{\"id\": \"d\", \"sentences\": []}\n").unwrap();
        let err = EvidenceCorpus::load(&path).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
    }

    #[test]
    fn silver_jsonl_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("silver.jsonl");
        let entries = vec![(
            "q1".to_string(),
            EvidenceSelection {
                sentence_indices: vec![0, 2],
                covered: BTreeSet::from(["a".to_string()]),
                objective: 1.25,
            },
        )];
        write_silver_jsonl(&path, &entries).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(
            text,
            "{\"objective\":1.25,\"question_id\":\"q1\",\"sentence_indices\":[0,2]}\n"
        );
        let back = read_silver_jsonl(&path).unwrap();
        assert_eq!(back, vec![("q1".to_string(), vec![0, 2], 1.25)]);
    }

    #[test]
    fn evidence_bp_uses_five_sweeps() {
        assert_eq!(evidence_bp_config().max_iters, 5);
    }
}
