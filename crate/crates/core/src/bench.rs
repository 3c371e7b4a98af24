//! Classification benchmark harness: task loading, metrics, ablation grids.

use std::collections::{BTreeMap, HashSet};
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decision::{Answer, DecidedBy};
use crate::pipeline::{Pipeline, PipelineConfig, TaskInput};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("{path}: {detail}")]
    Load { path: String, detail: String },
    #[error("{path}: missing column `{column}`")]
    MissingColumn { path: String, column: String },
    #[error("{path}: row {row}: label `{label}` not in {{{vocabulary}}}")]
    UnknownLabel {
        path: String,
        row: usize,
        label: String,
        vocabulary: String,
    },
    #[error("{path}: duplicate example id `{id}`")]
    DuplicateId { path: String, id: String },
    #[error("{predictions} predictions for {gold} gold labels")]
    LengthMismatch { predictions: usize, gold: usize },
    #[error("label `{0}` not in the task vocabulary")]
    OutOfVocabulary(String),
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("{0}")]
    Config(String),
    #[error("{path}: {detail}")]
    Io { path: String, detail: String },
}

/// A binary task: which label means the claim holds, and the claim itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub name: String,
    /// Label predicted when the answer is yes.
    pub positive: String,
    pub negative: String,
    /// Claim evaluated against each example's text.
    pub claim: String,
}

impl TaskSpec {
    pub fn builtin(name: &str) -> Option<TaskSpec> {
        let spec = |positive: &str, negative: &str, claim: &str| TaskSpec {
            name: name.to_string(),
            positive: positive.into(),
            negative: negative.into(),
            claim: claim.into(),
        };
        match name {
            "hearsay" => Some(spec(
                "hearsay",
                "not_hearsay",
                "The evidence described is hearsay: an out-of-court statement offered to prove the truth of the matter asserted.",
            )),
            "learned_hands_courts" => Some(spec(
                "yes",
                "no",
                "The post describes a legal issue concerning courts, judges, court procedure or litigation.",
            )),
            _ => None,
        }
    }

    pub fn labels(&self) -> [String; 2] {
        [self.positive.clone(), self.negative.clone()]
    }

    pub fn label_for(&self, answer: Answer) -> &str {
        match answer {
            Answer::Yes => &self.positive,
            Answer::No => &self.negative,
        }
    }

    fn normalize(&self, raw: &str) -> Option<String> {
        let l = raw.trim().to_ascii_lowercase().replace([' ', '-'], "_");
        self.labels().into_iter().find(|v| v.to_ascii_lowercase() == l)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub id: String,
    pub text: String,
    pub label: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskFormat {
    Tsv,
    Json,
}

impl TaskFormat {
    pub fn from_path(path: &Path) -> TaskFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => TaskFormat::Json,
            _ => TaskFormat::Tsv,
        }
    }
}

const TEXT_COLUMNS: [&str; 2] = ["text", "input"];
const LABEL_COLUMNS: [&str; 2] = ["label", "answer"];
const ID_COLUMNS: [&str; 2] = ["id", "index"];

fn pick<'a>(row: &'a BTreeMap<String, String>, names: &[&str]) -> Option<&'a String> {
    names.iter().find_map(|n| row.get(*n))
}

/// Reads labelled examples from a tab-separated file with a header row or a
/// JSON array of objects. Text comes from `text` or `input`, the label from
/// `label` or `answer`, the id from `id` or `index` (row number otherwise).
pub fn load_task(path: &Path, format: TaskFormat, spec: &TaskSpec) -> Result<Vec<LabeledExample>, BenchError> {
    let p = path.display().to_string();
    let load_err = |detail: String| BenchError::Load {
        path: p.clone(),
        detail,
    };
    let text = std::fs::read_to_string(path).map_err(|e| load_err(e.to_string()))?;
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    let rows: Vec<BTreeMap<String, String>> = match format {
        TaskFormat::Tsv => {
            let mut reader = csv::ReaderBuilder::new()
                .delimiter(b'\t')
                .quoting(false)
                .flexible(false)
                .from_reader(text.as_bytes());
            let headers: Vec<String> = reader
                .headers()
                .map_err(|e| load_err(e.to_string()))?
                .iter()
                .map(|h| h.trim().to_ascii_lowercase())
                .collect();
            let mut rows = Vec::new();
            for record in reader.records() {
                let record = record.map_err(|e| load_err(e.to_string()))?;
                rows.push(headers.iter().cloned().zip(record.iter().map(String::from)).collect());
            }
            rows
        }
        TaskFormat::Json => {
            let values: Vec<BTreeMap<String, serde_json::Value>> =
                serde_json::from_str(&text).map_err(|e| load_err(e.to_string()))?;
            values
                .into_iter()
                .map(|obj| {
                    obj.into_iter()
                        .map(|(k, v)| {
                            let s = match v {
                                serde_json::Value::String(s) => s,
                                other => other.to_string(),
                            };
                            (k.to_ascii_lowercase(), s)
                        })
                        .collect()
                })
                .collect()
        }
    };

    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let row_no = i + 1;
        let missing = |column: &str| BenchError::MissingColumn {
            path: p.clone(),
            column: column.to_string(),
        };
        let text = pick(row, &TEXT_COLUMNS).ok_or_else(|| missing("text"))?;
        let raw_label = pick(row, &LABEL_COLUMNS).ok_or_else(|| missing("label"))?;
        let label = spec.normalize(raw_label).ok_or_else(|| BenchError::UnknownLabel {
            path: p.clone(),
            row: row_no,
            label: raw_label.clone(),
            vocabulary: spec.labels().join(", "),
        })?;
        let id = pick(row, &ID_COLUMNS)
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .unwrap_or_else(|| format!("row-{row_no}"));
        if !seen.insert(id.clone()) {
            return Err(BenchError::DuplicateId { path: p.clone(), id });
        }
        out.push(LabeledExample {
            id,
            text: text.clone(),
            label,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsOptions {
    /// Precision, recall or F1 of a class whose denominator is zero.
    pub zero_division: f64,
    /// Leave failed examples out of every count instead of counting them wrong.
    pub exclude_abstentions: bool,
}

impl Default for MetricsOptions {
    fn default() -> Self {
        MetricsOptions {
            zero_division: 0.0,
            exclude_abstentions: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

/// Rows are gold labels; columns are predicted labels followed by `abstain`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n_examples: usize,
    pub abstentions: usize,
    pub accuracy: f64,
    /// Macro-averaged.
    pub precision: f64,
    /// Macro-averaged.
    pub recall: f64,
    pub macro_f1: f64,
    pub per_class: Vec<ClassMetrics>,
    pub confusion: ConfusionMatrix,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_point: Option<GridPoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<PipelineConfig>,
}

fn ratio(num: usize, den: usize, zero_division: f64) -> f64 {
    if den == 0 {
        zero_division
    } else {
        num as f64 / den as f64
    }
}

/// Accuracy plus macro precision/recall/F1 from a confusion matrix. `None`
/// predictions are abstentions.
pub fn evaluate(
    predictions: &[Option<String>],
    gold: &[String],
    labels: &[String],
    options: &MetricsOptions,
) -> Result<MetricsReport, BenchError> {
    if predictions.len() != gold.len() {
        return Err(BenchError::LengthMismatch {
            predictions: predictions.len(),
            gold: gold.len(),
        });
    }
    let index = |l: &str| {
        labels
            .iter()
            .position(|v| v == l)
            .ok_or_else(|| BenchError::OutOfVocabulary(l.to_string()))
    };
    let k = labels.len();
    let mut counts = vec![vec![0usize; k + 1]; k];
    let mut abstentions = 0;
    for (p, g) in predictions.iter().zip(gold) {
        let gi = index(g)?;
        match p {
            Some(p) => counts[gi][index(p)?] += 1,
            None => {
                abstentions += 1;
                if !options.exclude_abstentions {
                    counts[gi][k] += 1;
                }
            }
        }
    }
    let n: usize = counts.iter().flatten().sum();
    let correct: usize = (0..k).map(|i| counts[i][i]).sum();
    let zd = options.zero_division;

    let per_class: Vec<ClassMetrics> = (0..k)
        .map(|c| {
            let tp = counts[c][c];
            let predicted: usize = (0..k).map(|g| counts[g][c]).sum();
            let support: usize = counts[c].iter().sum();
            let fp = predicted - tp;
            let fn_ = support - tp;
            let f1 = ratio(2 * tp, 2 * tp + fp + fn_, zd);
            ClassMetrics {
                label: labels[c].clone(),
                precision: ratio(tp, predicted, zd),
                recall: ratio(tp, support, zd),
                f1,
                support,
            }
        })
        .collect();
    let mean = |f: fn(&ClassMetrics) -> f64| {
        if k == 0 {
            0.0
        } else {
            per_class.iter().map(f).sum::<f64>() / k as f64
        }
    };
    Ok(MetricsReport {
        n_examples: n,
        abstentions,
        accuracy: ratio(correct, n, 0.0),
        precision: mean(|c| c.precision),
        recall: mean(|c| c.recall),
        macro_f1: mean(|c| c.f1),
        per_class,
        confusion: ConfusionMatrix {
            labels: labels.to_vec(),
            counts,
        },
        task: None,
        grid_point: None,
        config: None,
    })
}

/// One configuration in an ablation grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub name: String,
    pub clash_resolution_enabled: bool,
    pub uae_enabled: bool,
    pub beta: f64,
}

impl GridPoint {
    pub fn from_config(name: impl Into<String>, config: &PipelineConfig) -> Self {
        GridPoint {
            name: name.into(),
            clash_resolution_enabled: config.clash_resolution_enabled,
            uae_enabled: config.decision.uae_enabled,
            beta: config.arena.beta,
        }
    }

    pub fn apply(&self, base: &PipelineConfig) -> PipelineConfig {
        let mut c = base.clone();
        c.clash_resolution_enabled = self.clash_resolution_enabled;
        c.decision.uae_enabled = self.uae_enabled;
        c.arena.beta = self.beta;
        c
    }
}

pub const DEFAULT_BETAS: [f64; 5] = [0.05, 0.10, 0.15, 0.20, 0.25];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationGrid {
    pub points: Vec<GridPoint>,
}

impl AblationGrid {
    pub fn single(base: &PipelineConfig) -> Self {
        AblationGrid {
            points: vec![GridPoint::from_config("config", base)],
        }
    }

    /// Clash resolution × escalation, both on/off.
    pub fn modules(base: &PipelineConfig) -> Self {
        let mut points = Vec::new();
        for cr in [false, true] {
            for uae in [false, true] {
                points.push(GridPoint {
                    name: format!("cr={}-uae={}", on_off(cr), on_off(uae)),
                    clash_resolution_enabled: cr,
                    uae_enabled: uae,
                    beta: base.arena.beta,
                });
            }
        }
        AblationGrid { points }
    }

    /// Full system at each adjustment magnitude.
    pub fn beta(base: &PipelineConfig, betas: &[f64]) -> Self {
        AblationGrid {
            points: betas
                .iter()
                .map(|&beta| GridPoint {
                    name: format!("beta={beta:.2}"),
                    clash_resolution_enabled: true,
                    uae_enabled: base.decision.uae_enabled,
                    beta,
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn on_off(b: bool) -> &'static str {
    if b {
        "on"
    } else {
        "off"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub example_id: String,
    pub gold: String,
    pub predicted: Option<String>,
    pub claim_strength: Option<f64>,
    pub decided_by: Option<DecidedBy>,
    pub case_id: Option<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub workers: usize,
    pub metrics: MetricsOptions,
    /// Where per-example predictions are written, one JSONL file per grid point.
    pub predictions_dir: Option<PathBuf>,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            workers: 4,
            metrics: MetricsOptions::default(),
            predictions_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub report: MetricsReport,
    pub predictions: Vec<PredictionRecord>,
}

/// Runs every example under every grid point. Failed examples become
/// abstentions. Predictions are ordered by example id.
pub fn run_benchmark(
    pipeline: &Pipeline,
    spec: &TaskSpec,
    examples: &[LabeledExample],
    grid: &AblationGrid,
    options: &BenchOptions,
) -> Result<Vec<GridResult>, BenchError> {
    let workers = rayon::ThreadPoolBuilder::new()
        .num_threads(options.workers.max(1))
        .build()
        .map_err(|e| BenchError::Config(e.to_string()))?;
    let mut ordered: Vec<&LabeledExample> = examples.iter().collect();
    ordered.sort_by(|a, b| a.id.cmp(&b.id));
    let labels = spec.labels();

    let mut results = Vec::with_capacity(grid.len());
    for point in &grid.points {
        let config = point.apply(pipeline.config());
        let configured = pipeline
            .reconfigured(config.clone())
            .map_err(|e| BenchError::Config(e.to_string()))?;
        let predictions: Vec<PredictionRecord> = workers.install(|| {
            ordered
                .par_iter()
                .map(|ex| predict(&configured, spec, ex))
                .collect()
        });
        let predicted: Vec<Option<String>> = predictions.iter().map(|p| p.predicted.clone()).collect();
        let gold: Vec<String> = predictions.iter().map(|p| p.gold.clone()).collect();
        let mut report = evaluate(&predicted, &gold, &labels, &options.metrics)?;
        report.task = Some(spec.name.clone());
        report.grid_point = Some(point.clone());
        report.config = Some(config);
        if let Some(dir) = &options.predictions_dir {
            write_predictions(dir, &point.name, &predictions)?;
        }
        results.push(GridResult { report, predictions });
    }
    Ok(results)
}

fn predict(pipeline: &Pipeline, spec: &TaskSpec, example: &LabeledExample) -> PredictionRecord {
    let mut input = TaskInput::new(spec.claim.clone(), example.text.clone());
    input.task_id = Some(spec.name.clone());
    input.metadata.insert("example_id".into(), example.id.clone());
    let base = PredictionRecord {
        example_id: example.id.clone(),
        gold: example.label.clone(),
        predicted: None,
        claim_strength: None,
        decided_by: None,
        case_id: None,
        error: None,
    };
    match pipeline.run(&input) {
        Ok(record) => PredictionRecord {
            predicted: Some(spec.label_for(record.decision.answer).to_string()),
            claim_strength: Some(record.decision.claim_strength),
            decided_by: Some(record.decision.decided_by),
            case_id: Some(record.case_id),
            ..base
        },
        Err(e) => PredictionRecord {
            error: Some(e.to_string()),
            ..base
        },
    }
}

fn write_predictions(dir: &Path, name: &str, predictions: &[PredictionRecord]) -> Result<(), BenchError> {
    let io = |path: &Path, e: std::io::Error| BenchError::Io {
        path: path.display().to_string(),
        detail: e.to_string(),
    };
    std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let file_name: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect();
    let path = dir.join(format!("{file_name}.predictions.jsonl"));
    let mut f = std::fs::File::create(&path).map_err(|e| io(&path, e))?;
    for p in predictions {
        let line = serde_json::to_string(p).expect("prediction serializes");
        writeln!(f, "{line}").map_err(|e| io(&path, e))?;
    }
    Ok(())
}

/// Plain-text table of grid results.
pub fn render_table(reports: &[MetricsReport]) -> String {
    let mut out = format!(
        "{:<24} {:>6} {:>9} {:>10} {:>8} {:>9} {:>9}\n",
        "point", "n", "accuracy", "precision", "recall", "macro_f1", "abstain"
    );
    for r in reports {
        let name = r.grid_point.as_ref().map(|g| g.name.as_str()).unwrap_or("-");
        out.push_str(&format!(
            "{:<24} {:>6} {:>9.4} {:>10.4} {:>8.4} {:>9.4} {:>9}\n",
            name, r.n_examples, r.accuracy, r.precision, r.recall, r.macro_f1, r.abstentions
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn yes_no() -> Vec<String> {
        vec!["yes".into(), "no".into()]
    }

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    fn some(v: &[&str]) -> Vec<Option<String>> {
        v.iter().map(|x| Some(x.to_string())).collect()
    }

    #[test]
    fn worked_example() {
        let r = evaluate(
            &some(&["yes", "no", "no", "no"]),
            &s(&["yes", "yes", "no", "no"]),
            &yes_no(),
            &MetricsOptions::default(),
        )
        .unwrap();
        assert_eq!(r.accuracy, 0.75);
        assert!((r.per_class[0].f1 - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.per_class[1].f1 - 0.8).abs() < 1e-12);
        assert!((r.macro_f1 - 0.733333).abs() < 1e-6);
        assert_eq!(r.confusion.total(), 4);
    }

    #[test]
    fn one_class_predictions() {
        let r = evaluate(
            &some(&["yes", "yes", "yes", "yes"]),
            &s(&["yes", "yes", "no", "no"]),
            &yes_no(),
            &MetricsOptions::default(),
        )
        .unwrap();
        assert_eq!(r.accuracy, 0.5);
        assert!((r.macro_f1 - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn abstentions_count_wrong_by_default() {
        let preds = vec![Some("yes".to_string()), None];
        let gold = s(&["yes", "no"]);
        let r = evaluate(&preds, &gold, &yes_no(), &MetricsOptions::default()).unwrap();
        assert_eq!((r.n_examples, r.abstentions, r.accuracy), (2, 1, 0.5));
        let opts = MetricsOptions {
            exclude_abstentions: true,
            ..MetricsOptions::default()
        };
        let r = evaluate(&preds, &gold, &yes_no(), &opts).unwrap();
        assert_eq!((r.n_examples, r.accuracy), (1, 1.0));
    }

    #[test]
    fn errors() {
        assert!(matches!(
            evaluate(&some(&["yes"]), &[], &yes_no(), &MetricsOptions::default()),
            Err(BenchError::LengthMismatch { .. })
        ));
        assert!(matches!(
            evaluate(&some(&["maybe"]), &s(&["yes"]), &yes_no(), &MetricsOptions::default()),
            Err(BenchError::OutOfVocabulary(_))
        ));
    }

    #[test]
    fn grid_sizes() {
        let base = PipelineConfig::default();
        assert_eq!(AblationGrid::modules(&base).len(), 4);
        let g = AblationGrid::beta(&base, &DEFAULT_BETAS);
        assert_eq!(g.len(), 5);
        assert_eq!(g.points[0].apply(&base).arena.beta, 0.05);
    }

    #[test]
    fn loads_tsv_and_json() {
        let dir = tempfile::tempdir().unwrap();
        let spec = TaskSpec::builtin("hearsay").unwrap();
        let tsv = dir.path().join("t.tsv");
        std::fs::write(
            &tsv,
            "index\ttext\tanswer\n0\ta\tHearsay\n1\tb\tNot Hearsay\n2\tc\thearsay\n3\td\tnot_hearsay\n4\te\thearsay\n",
        )
        .unwrap();
        let ex = load_task(&tsv, TaskFormat::from_path(&tsv), &spec).unwrap();
        assert_eq!(ex.len(), 5);
        assert_eq!(ex[1].label, "not_hearsay");
        assert_eq!(ex[0].id, "0");

        let yn = TaskSpec::builtin("learned_hands_courts").unwrap();
        let bad = dir.path().join("bad.tsv");
        std::fs::write(&bad, "text\tlabel\nx\tyes\ny\tmaybe\n").unwrap();
        match load_task(&bad, TaskFormat::Tsv, &yn) {
            Err(BenchError::UnknownLabel { row, label, .. }) => assert_eq!((row, label.as_str()), (2, "maybe")),
            other => panic!("unexpected {other:?}"),
        }
        let empty = dir.path().join("empty.tsv");
        std::fs::write(&empty, "").unwrap();
        assert!(load_task(&empty, TaskFormat::Tsv, &yn).unwrap().is_empty());

        let nolabel = dir.path().join("nolabel.tsv");
        std::fs::write(&nolabel, "text\nx\n").unwrap();
        assert!(matches!(load_task(&nolabel, TaskFormat::Tsv, &yn), Err(BenchError::MissingColumn { .. })));

        let json = dir.path().join("t.json");
        std::fs::write(&json, r#"[{"id": "q1", "input": "x", "label": "no"}]"#).unwrap();
        let ex = load_task(&json, TaskFormat::from_path(&json), &yn).unwrap();
        assert_eq!(ex[0].id, "q1");
        assert_eq!(ex[0].label, "no");
    }
}
