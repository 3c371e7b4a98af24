//! Pairwise relations between arguments.
//!
//! Two modes: a stance heuristic (same stance supports, opposite stance
//! attacks) and batched model classification. Both emit symmetric edge sets.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;
use tracing::warn;

use crate::backend::{BackendError, BackendRequest, Purpose, TextModelBackend};
use crate::prompts;
use crate::qbaf::{Argument, Edge, EdgeOrigin, NodeId, RelationKind, MIN_MODEL_CONFIDENCE};

pub const DEFAULT_BATCH_SIZE: usize = 10;
pub const DEFAULT_CONFIDENCE_THRESHOLD: f64 = MIN_MODEL_CONFIDENCE;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationMode {
    #[default]
    Heuristic,
    Model,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationLabel {
    Attack,
    Support,
    Neutral,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationVerdict {
    pub first: NodeId,
    pub second: NodeId,
    pub label: RelationLabel,
    pub confidence: f64,
    /// Label as returned before confidence demotion.
    pub proposed: RelationLabel,
}

#[derive(Debug, Error, PartialEq)]
pub enum RelationError {
    #[error("batch size must be at least 1")]
    BadBatchSize,
    #[error("confidence threshold {0} outside [0, 1]")]
    BadThreshold(f64),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// Every unordered pair of `n` items as `(i, j)` with `i < j`, chunked into
/// batches of `batch_size`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchPlan {
    pub batch_size: usize,
    pub batches: Vec<Vec<(usize, usize)>>,
}

impl BatchPlan {
    pub fn pair_count(&self) -> usize {
        self.batches.iter().map(Vec::len).sum()
    }
}

pub fn plan_batches(n: usize, batch_size: usize) -> Result<BatchPlan, RelationError> {
    if batch_size == 0 {
        return Err(RelationError::BadBatchSize);
    }
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect();
    Ok(BatchPlan {
        batch_size,
        batches: pairs.chunks(batch_size).map(<[_]>::to_vec).collect(),
    })
}

fn both_ways(a: &NodeId, b: &NodeId, kind: RelationKind, confidence: f64, origin: EdgeOrigin) -> [Edge; 2] {
    [
        Edge::new(a.clone(), b.clone(), kind, confidence, origin),
        Edge::new(b.clone(), a.clone(), kind, confidence, origin),
    ]
}

/// Same stance: mutual support. Opposite stance: mutual attack.
pub fn heuristic_relations(arguments: &[Argument]) -> Vec<Edge> {
    let mut edges = Vec::new();
    for (i, a) in arguments.iter().enumerate() {
        for b in &arguments[i + 1..] {
            let kind = if a.stance == b.stance {
                RelationKind::Support
            } else {
                RelationKind::Attack
            };
            edges.extend(both_ways(&a.id, &b.id, kind, 1.0, EdgeOrigin::Heuristic));
        }
    }
    edges
}

/// What one model-mode run did, for the stage trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationReport {
    pub mode: RelationMode,
    pub edges: Vec<Edge>,
    pub verdicts: Vec<RelationVerdict>,
    pub demoted: usize,
    pub batches: usize,
    pub failed_batches: usize,
    pub backend_calls: usize,
    pub warnings: Vec<String>,
}

impl RelationReport {
    pub fn heuristic(arguments: &[Argument]) -> Self {
        RelationReport {
            mode: RelationMode::Heuristic,
            edges: heuristic_relations(arguments),
            verdicts: Vec::new(),
            demoted: 0,
            batches: 0,
            failed_batches: 0,
            backend_calls: 0,
            warnings: Vec::new(),
        }
    }
}

#[derive(Deserialize)]
struct RelateReply {
    verdicts: Vec<VerdictItem>,
}

#[derive(Deserialize)]
struct VerdictItem {
    first: String,
    second: String,
    label: RelationLabel,
    confidence: f64,
}

struct BatchResult {
    verdicts: BTreeMap<(usize, usize), (RelationLabel, f64)>,
    calls: usize,
    failed: bool,
    warnings: Vec<String>,
}

fn query_batch(
    arguments: &[Argument],
    batch: &[(usize, usize)],
    claim: &str,
    backend: &dyn TextModelBackend,
) -> Result<BatchResult, BackendError> {
    let rendered: Vec<String> = batch
        .iter()
        .map(|&(i, j)| {
            format!(
                "- first [{}]: {}\n  second [{}]: {}",
                arguments[i].id, arguments[i].text, arguments[j].id, arguments[j].text
            )
        })
        .collect();
    let pairs: Vec<_> = batch
        .iter()
        .map(|&(i, j)| json!({"first": arguments[i].id, "second": arguments[j].id}))
        .collect();
    let request = BackendRequest::new(
        Purpose::Relate,
        prompts::relate(claim, &rendered.join("\n")),
        prompts::RELATE_SCHEMA,
        json!({ "pairs": pairs }),
    );

    let mut warnings = Vec::new();
    let mut calls = 0;
    for attempt in 0..2 {
        calls += 1;
        let response = backend.complete(&request)?;
        let reply = match response.parse::<RelateReply>() {
            Ok(r) if r.verdicts.iter().all(|v| (0.0..=1.0).contains(&v.confidence)) => r,
            Ok(_) => {
                warnings.push(format!("relation batch attempt {}: confidence outside [0, 1]", attempt + 1));
                continue;
            }
            Err(e) => {
                warnings.push(format!("relation batch attempt {}: {e}", attempt + 1));
                continue;
            }
        };
        let mut verdicts = BTreeMap::new();
        for v in reply.verdicts {
            let found = batch.iter().find(|&&(i, j)| {
                (arguments[i].id.as_str() == v.first && arguments[j].id.as_str() == v.second)
                    || (arguments[i].id.as_str() == v.second && arguments[j].id.as_str() == v.first)
            });
            match found {
                Some(&pair) => {
                    verdicts.entry(pair).or_insert((v.label, v.confidence));
                }
                None => warnings.push(format!(
                    "verdict for pair ({}, {}) not in batch, ignored",
                    v.first, v.second
                )),
            }
        }
        for &(i, j) in batch {
            if !verdicts.contains_key(&(i, j)) {
                warnings.push(format!(
                    "no verdict for ({}, {}); treated as neutral",
                    arguments[i].id, arguments[j].id
                ));
            }
        }
        return Ok(BatchResult {
            verdicts,
            calls,
            failed: false,
            warnings,
        });
    }
    warn!(pairs = batch.len(), "relation batch unparseable twice; pairs default to neutral");
    warnings.push(format!("batch of {} pairs defaulted to neutral", batch.len()));
    Ok(BatchResult {
        verdicts: BTreeMap::new(),
        calls,
        failed: true,
        warnings,
    })
}

/// Classifies every pair through the backend, `batch_size` pairs per call.
/// Support/attack verdicts under `threshold` are demoted to neutral; neutral
/// pairs get no edge; the rest become edges in both directions.
pub fn model_relations(
    claim: &str,
    arguments: &[Argument],
    backend: &dyn TextModelBackend,
    batch_size: usize,
    threshold: f64,
) -> Result<RelationReport, RelationError> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(RelationError::BadThreshold(threshold));
    }
    let plan = plan_batches(arguments.len(), batch_size)?;
    let results: Vec<BatchResult> = plan
        .batches
        .par_iter()
        .map(|batch| query_batch(arguments, batch, claim, backend))
        .collect::<Result<_, _>>()?;

    let mut report = RelationReport {
        mode: RelationMode::Model,
        edges: Vec::new(),
        verdicts: Vec::new(),
        demoted: 0,
        batches: plan.batches.len(),
        failed_batches: 0,
        backend_calls: 0,
        warnings: Vec::new(),
    };
    let mut merged = BTreeMap::new();
    for r in results {
        report.backend_calls += r.calls;
        report.failed_batches += usize::from(r.failed);
        report.warnings.extend(r.warnings);
        merged.extend(r.verdicts);
    }

    for (&(i, j), &(proposed, confidence)) in &merged {
        let (a, b) = (&arguments[i], &arguments[j]);
        let label = if proposed != RelationLabel::Neutral && confidence < threshold {
            report.demoted += 1;
            RelationLabel::Neutral
        } else {
            proposed
        };
        let kind = match label {
            RelationLabel::Attack => Some(RelationKind::Attack),
            RelationLabel::Support => Some(RelationKind::Support),
            RelationLabel::Neutral => None,
        };
        if let Some(kind) = kind {
            report
                .edges
                .extend(both_ways(&a.id, &b.id, kind, confidence, EdgeOrigin::Model));
        }
        report.verdicts.push(RelationVerdict {
            first: a.id.clone(),
            second: b.id.clone(),
            label,
            confidence,
            proposed,
        });
    }
    Ok(report)
}
