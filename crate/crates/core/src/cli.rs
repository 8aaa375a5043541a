//! File-level command implementations behind the binary.
//!
//! Every command writes its artifacts under one output directory and
//! always leaves a manifest.json there recording the command, config,
//! input hashes, outputs, and timing, whether the run succeeded or
//! not. Success means every listed output was written.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write as _};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{write_atomic, Dataset, LabelSpace};
use crate::em::{run_em, write_weights_json, EmConfig, EmOutcome};
use crate::error::{Error, Result};
use crate::evidence::{
    build_coverage_problem, rule_based_silver, solve_max_coverage_exact,
    solve_max_coverage_greedy, write_silver_jsonl, EvidenceCorpus, EvidenceSelection,
};
use crate::metrics::{evaluate, EvalReport};
use crate::prediction::{LinearModel, PredictionModule};
use crate::synth::{generate, SynthConfig};
use crate::templates::{load_templates, save_templates, LabelingFunctionRegistry};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub seed: u64,
    pub config: serde_json::Value,
    /// sha256 per input path.
    pub input_hashes: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub elapsed_ms: u128,
    /// "ok" or the error description.
    pub status: String,
}

pub fn sha256_hex(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// Runs `body`, then writes manifest.json to `out_dir` regardless of
/// the outcome. Input files are hashed before the run.
fn with_manifest(
    command: &str,
    seed: u64,
    config: serde_json::Value,
    inputs: &[&Path],
    out_dir: &Path,
    body: impl FnOnce() -> Result<Vec<PathBuf>>,
) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let started = Instant::now();
    let mut manifest = RunManifest {
        command: command.to_string(),
        seed,
        config,
        input_hashes: BTreeMap::new(),
        outputs: Vec::new(),
        elapsed_ms: 0,
        status: "ok".to_string(),
    };

    let result = inputs
        .iter()
        .try_for_each(|path| {
            let hash = sha256_hex(path)?;
            manifest.input_hashes.insert(path.display().to_string(), hash);
            Ok(())
        })
        .and_then(|()| body());

    let result = match result {
        Ok(outputs) => {
            manifest.outputs = outputs.iter().map(|p| p.display().to_string()).collect();
            Ok(())
        }
        Err(e) => {
            manifest.status = format!("error: {e}");
            Err(e)
        }
    };
    manifest.elapsed_ms = started.elapsed().as_millis();

    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serialize");
    text.push('\n');
    write_atomic(&out_dir.join("manifest.json"), text.as_bytes())?;
    result
}

fn write_truth_jsonl(
    path: &Path,
    labels: &LabelSpace,
    truth: &BTreeMap<String, usize>,
) -> Result<()> {
    let mut buf = Vec::new();
    for (id, &label) in truth {
        let line = serde_json::json!({"id": id, "label": labels.label(label)});
        writeln!(buf, "{line}").expect("vec write");
    }
    write_atomic(path, &buf)
}

fn read_label_jsonl(path: &Path) -> Result<BTreeMap<String, String>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = BTreeMap::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        #[derive(Deserialize)]
        struct Row {
            id: String,
            label: String,
        }
        let row: Row = serde_json::from_str(&line)
            .map_err(|e| Error::parse(path, lineno + 1, e.to_string()))?;
        if out.insert(row.id.clone(), row.label).is_some() {
            return Err(Error::parse(path, lineno + 1, format!("duplicate id `{}`", row.id)));
        }
    }
    Ok(out)
}

/// Generates one synthetic split: dataset.jsonl (features + votes,
/// no truth), truth.jsonl, and templates.json with one learnable vote
/// template per labeling function.
pub fn cmd_synth(config: &SynthConfig, out_dir: &Path) -> Result<()> {
    let snapshot = serde_json::to_value(config).expect("config serialize");
    with_manifest("synth", config.seed, snapshot, &[], out_dir, || {
        let out = generate(config)?;
        let data_path = out_dir.join("dataset.jsonl");
        let truth_path = out_dir.join("truth.jsonl");
        let templates_path = out_dir.join("templates.json");
        out.dataset.save(&data_path)?;
        write_truth_jsonl(&truth_path, out.dataset.label_space(), &out.truth)?;
        save_templates(&templates_path, &out.templates)?;
        Ok(vec![data_path, truth_path, templates_path])
    })
}

/// Full EM run: per-iteration checkpoints, refined templates, final
/// weights, trained model, marginals, and diagnostics history.
pub fn cmd_train(
    data: &Path,
    templates_path: &Path,
    config: &EmConfig,
    out_dir: &Path,
) -> Result<()> {
    let snapshot = serde_json::to_value(config).expect("config serialize");
    with_manifest("train", config.seed, snapshot, &[data, templates_path], out_dir, || {
        let dataset = Dataset::load(data)?;
        let templates = load_templates(templates_path)?;
        let registry = LabelingFunctionRegistry::with_builtins();
        let mut model = LinearModel::new(dataset.label_space(), config.seed);
        if config.m_step.learning_rate > 0.0 {
            model = model.with_learning_rate(config.m_step.learning_rate);
        }

        let checkpoints = out_dir.join("checkpoints");
        let outcome: EmOutcome =
            run_em(&dataset, templates, &mut model, &registry, config, Some(&checkpoints))?;

        let weights_path = out_dir.join("weights.json");
        let templates_out = out_dir.join("templates.json");
        let model_path = out_dir.join("model.json");
        let marginals_path = out_dir.join("marginals.jsonl");
        let history_path = out_dir.join("history.json");
        write_weights_json(&weights_path, &outcome.templates)?;
        save_templates(&templates_out, &outcome.templates)?;
        model.save_json(&model_path)?;
        outcome.marginals.write_jsonl(&dataset, &marginals_path)?;
        let mut history = serde_json::to_string_pretty(&outcome.history).expect("history");
        history.push('\n');
        write_atomic(&history_path, history.as_bytes())?;
        Ok(vec![weights_path, templates_out, model_path, marginals_path, history_path, checkpoints])
    })
}

/// Prediction-module inference only; the supervision graph plays no
/// part here. One line per instance: {"id", "label", "q"}.
pub fn cmd_infer(model_path: &Path, data: &Path, out_dir: &Path) -> Result<()> {
    with_manifest(
        "infer",
        0,
        serde_json::json!({}),
        &[model_path, data],
        out_dir,
        || {
            let model = LinearModel::load_json(model_path)?;
            let dataset = Dataset::load(data)?;
            if model.labels() != dataset.label_space().labels() {
                return Err(Error::Invalid(format!(
                    "model labels {:?} do not match dataset labels {:?}",
                    model.labels(),
                    dataset.label_space().labels()
                )));
            }
            let mut buf = Vec::new();
            for inst in dataset.instances() {
                let q = model.predict_proba(inst);
                let label = q
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite probs"))
                    .map(|(i, _)| i)
                    .expect("non-empty label space");
                let line = serde_json::json!({
                    "id": inst.id,
                    "label": dataset.label_space().label(label),
                    "q": q,
                });
                writeln!(buf, "{line}").expect("vec write");
            }
            let out_path = out_dir.join("predictions.jsonl");
            write_atomic(&out_path, &buf)?;
            Ok(vec![out_path])
        },
    )
}

/// Scores predictions against truth labels; both files are JSONL with
/// "id" and "label" fields and must cover the same ids.
pub fn cmd_eval(predictions: &Path, truth: &Path, out_dir: &Path) -> Result<EvalReport> {
    let mut report = None;
    with_manifest(
        "eval",
        0,
        serde_json::json!({}),
        &[predictions, truth],
        out_dir,
        || {
            let pred_names = read_label_jsonl(predictions)?;
            let truth_names = read_label_jsonl(truth)?;
            let mut names: Vec<String> = truth_names
                .values()
                .chain(pred_names.values())
                .cloned()
                .collect();
            names.sort();
            names.dedup();
            if names.len() < 2 {
                return Err(Error::Invalid(
                    "evaluation needs at least two distinct labels across files".into(),
                ));
            }
            let labels = LabelSpace::new(names)?;
            let to_indices = |m: &BTreeMap<String, String>| -> Result<BTreeMap<String, usize>> {
                m.iter()
                    .map(|(id, name)| Ok((id.clone(), labels.require(name)?)))
                    .collect()
            };
            let result = evaluate(&labels, &to_indices(&pred_names)?, &to_indices(&truth_names)?)?;
            let out_path = out_dir.join("metrics.json");
            let mut text = serde_json::to_string_pretty(&result).expect("report serialize");
            text.push('\n');
            write_atomic(&out_path, text.as_bytes())?;
            report = Some(result);
            Ok(vec![out_path])
        },
    )?;
    Ok(report.expect("report set on success"))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SilverMethod {
    Rule,
    Ilp,
}

/// Per-question silver selections over an evidence corpus. The ilp
/// method solves exactly and falls back to greedy when the subset
/// count blows past the enumeration bound.
pub fn cmd_silver(
    corpus_path: &Path,
    method: SilverMethod,
    budget: usize,
    out_dir: &Path,
) -> Result<Vec<(String, EvidenceSelection)>> {
    let mut selections = None;
    let config = serde_json::json!({
        "method": match method { SilverMethod::Rule => "rule", SilverMethod::Ilp => "ilp" },
        "budget": budget,
    });
    with_manifest("silver", 0, config, &[corpus_path], out_dir, || {
        let corpus = EvidenceCorpus::load(corpus_path)?;
        let mut entries = Vec::new();
        for question in &corpus.questions {
            let doc = corpus.document(&question.doc_id).expect("corpus validated");
            let selection = match method {
                SilverMethod::Rule => {
                    let idf = doc.sentence_idf()?;
                    rule_based_silver(doc, question, &idf, budget)
                }
                SilverMethod::Ilp => {
                    let problem = build_coverage_problem(doc, question, budget)?;
                    match solve_max_coverage_exact(&problem) {
                        Ok(sel) => sel,
                        Err(Error::CombinatorialBound { combinations, bound, .. }) => {
                            log::warn!(
                                "question `{}`: {combinations:.3e} subsets exceeds {bound:.0e}, using greedy",
                                question.id
                            );
                            solve_max_coverage_greedy(&problem)
                        }
                        Err(e) => return Err(e),
                    }
                }
            };
            entries.push((question.id.clone(), selection));
        }
        let out_path = out_dir.join("silver.jsonl");
        write_silver_jsonl(&out_path, &entries)?;
        selections = Some(entries);
        Ok(vec![out_path])
    })?;
    Ok(selections.expect("selections set on success"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::Marginals;

    fn synth_dir(dir: &Path, seed: u64, n: usize) -> PathBuf {
        let out = dir.join(format!("synth{seed}"));
        let config = SynthConfig { n_instances: n, seed, ..Default::default() };
        cmd_synth(&config, &out).unwrap();
        out
    }

    #[test]
    fn synth_writes_artifacts_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let out = synth_dir(dir.path(), 3, 40);
        for name in ["dataset.jsonl", "truth.jsonl", "templates.json", "manifest.json"] {
            assert!(out.join(name).exists(), "{name} missing");
        }
        let manifest: RunManifest =
            serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap())
                .unwrap();
        assert_eq!(manifest.status, "ok");
        assert_eq!(manifest.command, "synth");
        assert_eq!(manifest.outputs.len(), 3);
        // truth never leaks into the dataset file
        let data = std::fs::read_to_string(out.join("dataset.jsonl")).unwrap();
        assert!(!data.contains("\"label\""));
    }

    #[test]
    fn train_infer_eval_pipeline_runs() {
        let dir = tempfile::tempdir().unwrap();
        let synth = synth_dir(dir.path(), 7, 60);
        let train_out = dir.path().join("train");
        let config = EmConfig { em_iters: 1, prediction_epochs: 2, ..Default::default() };
        cmd_train(
            &synth.join("dataset.jsonl"),
            &synth.join("templates.json"),
            &config,
            &train_out,
        )
        .unwrap();
        for name in ["weights.json", "templates.json", "model.json", "marginals.jsonl", "history.json", "manifest.json"] {
            assert!(train_out.join(name).exists(), "{name} missing");
        }
        assert!(train_out.join("checkpoints/iter_1_weights.json").exists());

        let (ids, q) = Marginals::read_jsonl(train_out.join("marginals.jsonl")).unwrap();
        assert_eq!(ids.len(), 60);
        assert_eq!(q.len(), 60);

        let infer_out = dir.path().join("infer");
        cmd_infer(&train_out.join("model.json"), &synth.join("dataset.jsonl"), &infer_out)
            .unwrap();
        let preds = std::fs::read_to_string(infer_out.join("predictions.jsonl")).unwrap();
        assert_eq!(preds.lines().count(), 60);
        assert!(preds.lines().next().unwrap().contains("\"label\""));

        let eval_out = dir.path().join("eval");
        let report = cmd_eval(
            &infer_out.join("predictions.jsonl"),
            &synth.join("truth.jsonl"),
            &eval_out,
        )
        .unwrap();
        assert!(eval_out.join("metrics.json").exists());
        assert!(report.accuracy >= 0.0 && report.accuracy <= 1.0);
        assert_eq!(report.n, 60);
    }

    #[test]
    fn train_failure_still_writes_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("train");
        let err = cmd_train(
            Path::new("/nonexistent/data.jsonl"),
            Path::new("/nonexistent/templates.json"),
            &EmConfig::default(),
            &out,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Io { .. }), "{err}");
        let manifest: RunManifest =
            serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap())
                .unwrap();
        assert!(manifest.status.starts_with("error:"), "{}", manifest.status);
        assert!(manifest.outputs.is_empty());
    }

    #[test]
    fn train_is_deterministic_across_runs() {
        let dir = tempfile::tempdir().unwrap();
        let synth = synth_dir(dir.path(), 11, 50);
        let config = EmConfig { em_iters: 2, prediction_epochs: 3, seed: 5, ..Default::default() };
        let mut artifacts = Vec::new();
        for run in ["a", "b"] {
            let out = dir.path().join(run);
            cmd_train(
                &synth.join("dataset.jsonl"),
                &synth.join("templates.json"),
                &config,
                &out,
            )
            .unwrap();
            artifacts.push((
                std::fs::read(out.join("weights.json")).unwrap(),
                std::fs::read(out.join("model.json")).unwrap(),
                std::fs::read(out.join("marginals.jsonl")).unwrap(),
            ));
        }
        assert_eq!(artifacts[0], artifacts[1]);
    }

    #[test]
    fn silver_runs_both_methods() {
        let dir = tempfile::tempdir().unwrap();
        let corpus_path = dir.path().join("corpus.jsonl");
        std::fs::write(
            &corpus_path,
            concat!(
                "{\"id\": \"d1\", \"sentences\": [\"The treaty was signed in autumn.\", \"Birds fly south.\", \"It was signed by both nations.\"]}\n",
                "{\"id\": \"q1\", \"doc_id\": \"d1\", \"text\": \"When was the treaty signed?\", \"options\": [\"in autumn\", \"in spring\"], \"correct\": 0}\n",
            ),
        )
        .unwrap();
        for (method, name) in [(SilverMethod::Rule, "rule"), (SilverMethod::Ilp, "ilp")] {
            let out = dir.path().join(name);
            let entries = cmd_silver(&corpus_path, method, 1, &out).unwrap();
            assert_eq!(entries.len(), 1);
            assert_eq!(entries[0].1.sentence_indices, vec![0], "{name}");
            assert!(out.join("silver.jsonl").exists());
        }
    }

    #[test]
    fn eval_rejects_single_label_universe() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.jsonl");
        let t = dir.path().join("t.jsonl");
        std::fs::write(&p, "{\"id\": \"a\", \"label\": \"pos\"}\n").unwrap();
        std::fs::write(&t, "{\"id\": \"a\", \"label\": \"pos\"}\n").unwrap();
        assert!(cmd_eval(&p, &t, &dir.path().join("out")).is_err());
    }
}
