//! The immutable result of one pipeline run.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::agents::{Generated, LegalTask};
use crate::arena::ArenaReport;
use crate::decision::{DecidedBy, Decision};
use crate::pipeline::PipelineConfig;
use crate::qbaf::{NodeId, QbafGraph, Stance, StrengthMap};
use crate::relations::RelationReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Retrieval,
    TeamSelection,
    Generation,
    Scoring,
    Relations,
    ClashResolution,
    GraphConstruction,
    Solver,
    Decision,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Retrieval => "retrieval",
            Stage::TeamSelection => "team_selection",
            Stage::Generation => "generation",
            Stage::Scoring => "scoring",
            Stage::Relations => "relations",
            Stage::ClashResolution => "clash_resolution",
            Stage::GraphConstruction => "graph_construction",
            Stage::Solver => "solver",
            Stage::Decision => "decision",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeamTrace {
    pub stance: Stance,
    pub roles: Vec<String>,
    pub used_fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTrace {
    pub id: NodeId,
    pub value: f64,
    pub raw: f64,
    pub clamped: bool,
}

/// What a stage did. One entry per enabled stage, in pipeline order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "stage", rename_all = "snake_case")]
pub enum StageEntry {
    Retrieval {
        passage_ids: Vec<String>,
        warnings: Vec<String>,
    },
    TeamSelection {
        teams: Vec<TeamTrace>,
        warnings: Vec<String>,
    },
    Generation {
        agents: Vec<Generated>,
        warnings: Vec<String>,
    },
    Scoring {
        scores: Vec<ScoreTrace>,
        dropped: Vec<NodeId>,
        warnings: Vec<String>,
    },
    Relations {
        report: RelationReport,
    },
    ClashResolution {
        report: ArenaReport,
    },
    GraphConstruction {
        nodes: usize,
        edges: usize,
    },
    Solver {
        iterations: usize,
        residual: f64,
        converged: bool,
        warnings: Vec<String>,
    },
    Decision {
        decided_by: DecidedBy,
        escalated: bool,
        warnings: Vec<String>,
    },
}

impl StageEntry {
    pub fn stage(&self) -> Stage {
        match self {
            StageEntry::Retrieval { .. } => Stage::Retrieval,
            StageEntry::TeamSelection { .. } => Stage::TeamSelection,
            StageEntry::Generation { .. } => Stage::Generation,
            StageEntry::Scoring { .. } => Stage::Scoring,
            StageEntry::Relations { .. } => Stage::Relations,
            StageEntry::ClashResolution { .. } => Stage::ClashResolution,
            StageEntry::GraphConstruction { .. } => Stage::GraphConstruction,
            StageEntry::Solver { .. } => Stage::Solver,
            StageEntry::Decision { .. } => Stage::Decision,
        }
    }

    pub fn warnings(&self) -> &[String] {
        match self {
            StageEntry::Retrieval { warnings, .. }
            | StageEntry::TeamSelection { warnings, .. }
            | StageEntry::Generation { warnings, .. }
            | StageEntry::Scoring { warnings, .. }
            | StageEntry::Solver { warnings, .. }
            | StageEntry::Decision { warnings, .. } => warnings,
            StageEntry::Relations { report } => &report.warnings,
            StageEntry::ClashResolution { report } => &report.warnings,
            StageEntry::GraphConstruction { .. } => &[],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub case_id: String,
    pub task: LegalTask,
    pub graph: QbafGraph,
    pub strengths: StrengthMap,
    pub decision: Decision,
    pub trace: Vec<StageEntry>,
    pub config: PipelineConfig,
    /// RFC 3339 creation time. The only field that varies between identical runs.
    pub created_at: String,
}

impl CaseRecord {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("record serialization is infallible")
    }

    /// Serialization with the timestamp removed and keys sorted, for
    /// comparing runs.
    pub fn canonical_json(&self) -> String {
        let mut value = serde_json::to_value(self).expect("record serialization is infallible");
        if let Some(obj) = value.as_object_mut() {
            obj.remove("created_at");
        }
        serde_json::to_string(&value).expect("value serialization is infallible")
    }

    pub fn clash_report(&self) -> Option<&ArenaReport> {
        self.trace.iter().find_map(|e| match e {
            StageEntry::ClashResolution { report } => Some(report),
            _ => None,
        })
    }

    pub fn stages(&self) -> Vec<Stage> {
        self.trace.iter().map(StageEntry::stage).collect()
    }
}
