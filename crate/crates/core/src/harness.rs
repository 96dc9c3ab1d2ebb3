//! Corpus evaluation and report emission: per-test and combined confusion
//! matrices, the standard accuracy/recall/precision/F1 metrics, per-family
//! pass-rate grids, and deterministic CSV/JSONL outputs.
//!
//! Orientation note: throughout these reports "positive" means a test
//! passing on a BENIGN file (TP = pass on benign, TN = fail on ransomware,
//! FP = pass on ransomware, FN = fail on benign), even though security
//! tooling usually inverts it. The summary header repeats this.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::SystemTime;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{load_corpus, CorpusError, Truth};
use crate::cryptoscan::ApiProfile;
use crate::signatures::{ApiDictionary, KeywordSet};
use crate::votetests::{DetectionConfig, TestId, Verdict};
use crate::voting::{classify_sample_at, Assets, Classification, ScoreCard, VotePolicy};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

fn io_err(path: &Path, source: std::io::Error) -> HarnessError {
    HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Pass/fail tallies against ground truth, positive-means-benign.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    /// Test passes on benign file.
    pub tp: u64,
    /// Test fails on ransomware file.
    pub tn: u64,
    /// Test passes on ransomware file.
    pub fp: u64,
    /// Test fails on benign file.
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn record(&mut self, truth: Truth, pass: bool) {
        match (truth, pass) {
            (Truth::Benign, true) => self.tp += 1,
            (Truth::Malicious, false) => self.tn += 1,
            (Truth::Malicious, true) => self.fp += 1,
            (Truth::Benign, false) => self.fn_ += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }
}

/// Standard detection metrics in [0, 1]. Ratios whose denominator was zero
/// come out as 0.0 and are listed in `undefined`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub undefined: Vec<String>,
}

pub fn metrics_from_confusion(cm: &ConfusionMatrix) -> Metrics {
    let mut undefined = Vec::new();
    let mut ratio = |name: &str, num: u64, den: u64| -> f64 {
        if den == 0 {
            undefined.push(name.to_string());
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let accuracy = ratio("accuracy", cm.tp + cm.tn, cm.total());
    let recall = ratio("recall", cm.tp, cm.tp + cm.fn_);
    let precision = ratio("precision", cm.tp, cm.tp + cm.fp);
    let f1 = if precision + recall == 0.0 {
        undefined.push("f1".to_string());
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Metrics {
        accuracy,
        recall,
        precision,
        f1,
        undefined,
    }
}

/// One test's (or the combined vote's) results over a corpus.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestReport {
    pub matrix: ConfusionMatrix,
    pub metrics: Metrics,
    /// Votes excluded from the matrix because the test did not apply.
    pub abstentions: u64,
}

/// Pass counts for one family under one test.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct PassRate {
    pub pass: u64,
    pub fail: u64,
}

impl PassRate {
    pub fn percent(&self) -> Option<f64> {
        let total = self.pass + self.fail;
        (total > 0).then(|| 100.0 * self.pass as f64 / total as f64)
    }
}

/// Sizes and provenance of the loaded assets, recorded for reproducibility.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssetVersions {
    pub signature_entries: usize,
    pub api_names: usize,
    pub content_keywords: usize,
    pub filename_triggers: usize,
    pub curve_seed: u64,
    pub curve_trials: u32,
}

impl AssetVersions {
    pub fn capture(assets: &Assets, keywords: &KeywordSet) -> AssetVersions {
        AssetVersions {
            signature_entries: assets.signatures.len(),
            api_names: ApiDictionary::bundled().len(),
            content_keywords: keywords.content_keywords.len(),
            filename_triggers: keywords.filename_triggers.len(),
            curve_seed: assets.curve.seed,
            curve_trials: assets.curve.trials,
        }
    }
}

/// Everything an evaluation run produced.
#[derive(Debug, Clone, Serialize)]
pub struct EvaluationReport {
    pub per_test: BTreeMap<TestId, TestReport>,
    pub combined: TestReport,
    /// family -> test -> pass/fail counts, plus the combined column.
    pub per_family: BTreeMap<String, BTreeMap<String, PassRate>>,
    pub config: DetectionConfig,
    pub policy: VotePolicy,
    pub assets: AssetVersions,
    /// Corpus generator seed, when the corpus came from the generator.
    pub seed: Option<u64>,
    pub samples_evaluated: u64,
    pub io_errors: Vec<String>,
    /// One scorecard per sample, in corpus order.
    pub scorecards: Vec<ScoreCard>,
    /// Ground truth aligned with `scorecards`.
    pub truths: Vec<Truth>,
    /// API profiles, present when an apiscan contributed to the report.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub api_profiles: Vec<(String, ApiProfile)>,
}

pub const COMBINED_COLUMN: &str = "COMBINED";

/// Classify every sample in a corpus and tally the results, using a fixed
/// `now` so age votes are stable across the run.
pub fn evaluate_corpus_at(
    root: &Path,
    manifest: Option<&Path>,
    cfg: &DetectionConfig,
    policy: &VotePolicy,
    seed: Option<u64>,
    now: SystemTime,
) -> Result<EvaluationReport, HarnessError> {
    let assets = Assets::bundled();
    let loaded = load_corpus(root, manifest, false)?;
    if loaded.samples.is_empty() {
        return Err(CorpusError::EmptyCorpus(root.to_path_buf()).into());
    }

    let mut per_test: BTreeMap<TestId, (ConfusionMatrix, u64)> = BTreeMap::new();
    let mut combined_matrix = ConfusionMatrix::default();
    let mut per_family: BTreeMap<String, BTreeMap<String, PassRate>> = BTreeMap::new();
    let mut scorecards = Vec::with_capacity(loaded.samples.len());
    let mut truths = Vec::with_capacity(loaded.samples.len());

    for (sample, label) in &loaded.samples {
        let card = classify_sample_at(sample, &assets, cfg, policy, now);
        let family = label.family.clone().unwrap_or_else(|| "unlabeled".into());
        let family_row = per_family.entry(family).or_default();

        for vote in &card.votes {
            let entry = per_test.entry(vote.test_id).or_default();
            match vote.verdict {
                Verdict::Abstain => entry.1 += 1,
                v => {
                    let pass = v == Verdict::Benign;
                    entry.0.record(label.truth, pass);
                    let rate = family_row.entry(vote.test_id.to_string()).or_default();
                    if pass {
                        rate.pass += 1;
                    } else {
                        rate.fail += 1;
                    }
                }
            }
        }
        let pass = card.classification == Classification::Benign;
        combined_matrix.record(label.truth, pass);
        let rate = family_row.entry(COMBINED_COLUMN.to_string()).or_default();
        if pass {
            rate.pass += 1;
        } else {
            rate.fail += 1;
        }
        truths.push(label.truth);
        scorecards.push(card);
    }

    let per_test = per_test
        .into_iter()
        .map(|(id, (matrix, abstentions))| {
            (
                id,
                TestReport {
                    matrix,
                    metrics: metrics_from_confusion(&matrix),
                    abstentions,
                },
            )
        })
        .collect();
    let combined = TestReport {
        matrix: combined_matrix,
        metrics: metrics_from_confusion(&combined_matrix),
        abstentions: 0,
    };
    Ok(EvaluationReport {
        per_test,
        combined,
        per_family,
        config: cfg.clone(),
        policy: policy.clone(),
        assets: AssetVersions::capture(&assets, &cfg.keywords),
        seed,
        samples_evaluated: loaded.samples.len() as u64,
        io_errors: loaded.io_errors,
        scorecards,
        truths,
        api_profiles: Vec::new(),
    })
}

pub fn evaluate_corpus(
    root: &Path,
    manifest: Option<&Path>,
    cfg: &DetectionConfig,
    policy: &VotePolicy,
) -> Result<EvaluationReport, HarnessError> {
    evaluate_corpus_at(root, manifest, cfg, policy, None, SystemTime::now())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Jsonl,
    Csv,
}

impl ReportFormat {
    pub const ALL: [ReportFormat; 2] = [ReportFormat::Jsonl, ReportFormat::Csv];
}

/// Write scorecards.jsonl, summary.csv, grid.csv, and (when API profiles
/// are present) api_profiles.csv under `out_dir`. Output is byte-stable
/// for identical reports. Returns the paths written.
pub fn emit_reports(
    report: &EvaluationReport,
    out_dir: &Path,
    formats: &[ReportFormat],
) -> Result<Vec<PathBuf>, HarnessError> {
    std::fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let mut written = Vec::new();

    if formats.contains(&ReportFormat::Jsonl) {
        let path = out_dir.join("scorecards.jsonl");
        let mut f = std::io::BufWriter::new(
            std::fs::File::create(&path).map_err(|e| io_err(&path, e))?,
        );
        for card in &report.scorecards {
            let line = serde_json::to_string(card).expect("scorecard serializes");
            writeln!(f, "{line}").map_err(|e| io_err(&path, e))?;
        }
        f.flush().map_err(|e| io_err(&path, e))?;
        written.push(path);
    }

    if formats.contains(&ReportFormat::Csv) {
        let path = out_dir.join("summary.csv");
        let mut out = String::new();
        out.push_str("# positive = test passes on a benign file\n");
        out.push_str("test_id,tp,tn,fp,fn,accuracy,recall,precision,f1,abstentions\n");
        for (id, tr) in &report.per_test {
            out.push_str(&summary_row(id.as_str(), tr));
        }
        out.push_str(&summary_row(COMBINED_COLUMN, &report.combined));
        std::fs::write(&path, out).map_err(|e| io_err(&path, e))?;
        written.push(path.clone());

        let grid_path = out_dir.join("grid.csv");
        std::fs::write(&grid_path, grid_csv(report)).map_err(|e| io_err(&grid_path, e))?;
        written.push(grid_path);

        if !report.api_profiles.is_empty() {
            let api_path = out_dir.join("api_profiles.csv");
            let mut out = String::from("name,total,size,per_kb\n");
            for (name, p) in &report.api_profiles {
                out.push_str(&format!(
                    "{name},{},{},{:.4}\n",
                    p.total_hits, p.blob_size_bytes, p.hits_per_kb
                ));
            }
            std::fs::write(&api_path, out).map_err(|e| io_err(&api_path, e))?;
            written.push(api_path);
        }
    }
    Ok(written)
}

fn summary_row(name: &str, tr: &TestReport) -> String {
    let m = &tr.metrics;
    format!(
        "{name},{},{},{},{},{:.4},{:.4},{:.4},{:.4},{}\n",
        tr.matrix.tp,
        tr.matrix.tn,
        tr.matrix.fp,
        tr.matrix.fn_,
        m.accuracy,
        m.recall,
        m.precision,
        m.f1,
        tr.abstentions
    )
}

/// family x test pass-rate percentages; empty cells where a test never
/// produced a verdict for a family.
fn grid_csv(report: &EvaluationReport) -> String {
    let mut columns: Vec<String> = TestId::ALL.iter().map(|t| t.to_string()).collect();
    columns.push(COMBINED_COLUMN.to_string());
    let mut out = String::from("family");
    for c in &columns {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    for (family, rates) in &report.per_family {
        out.push_str(family);
        for c in &columns {
            out.push(',');
            if let Some(pct) = rates.get(c).and_then(|r| r.percent()) {
                out.push_str(&format!("{pct:.2}"));
            }
        }
        out.push('\n');
    }
    out
}
