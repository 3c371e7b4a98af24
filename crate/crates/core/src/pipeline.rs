//! End-to-end orchestration: evidence, teams, arguments, scores, relations,
//! clash resolution, graph, equilibrium, decision.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use tracing::{info, warn};

use crate::agents::{
    default_pool, generate_arguments, score_argument, select_team, AgentPool, LegalTask,
};
use crate::arena::{apply_clash_resolution, ArenaParams};
use crate::backend::{BackendSelection, Backends, Purpose, TextModelBackend};
use crate::decision::{decide, judge_brief, DecisionParams};
use crate::qbaf::{build_graph, solve_equilibrium, QbafGraph, SolverParams, Stance};
use crate::record::{CaseRecord, ScoreTrace, Stage, StageEntry, TeamTrace};
use crate::relations::{
    model_relations, RelationMode, RelationReport, DEFAULT_BATCH_SIZE, DEFAULT_CONFIDENCE_THRESHOLD,
};
use crate::retrieval::{
    assemble_context, hybrid_retrieve, index_corpus, ChunkParams, CorpusIndex, EvidenceContext, NoWebSearch,
    Provenance, WebSearch, DEFAULT_TOP_K,
};

/// Document id under which the case facts are chunked into the context.
pub const FACTS_DOCUMENT: &str = "facts";

/// Number of arguments per side quoted to the final judge.
const JUDGE_BRIEF_PER_SIDE: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub backends: BackendSelection,
    pub relation_mode: RelationMode,
    pub relation_batch_size: usize,
    pub relation_confidence_threshold: f64,
    pub arena: ArenaParams,
    pub solver: SolverParams,
    pub decision: DecisionParams,
    pub retrieval_k: usize,
    pub chunk: ChunkParams,
    pub clash_resolution_enabled: bool,
    /// Recorded with every case. Every stage breaks ties by id, so no stage
    /// currently draws from it.
    pub seed: u64,
    /// Contestation sessions flag review when σ(φ) moves by more than this.
    pub review_threshold: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            backends: BackendSelection::default(),
            relation_mode: RelationMode::default(),
            relation_batch_size: DEFAULT_BATCH_SIZE,
            relation_confidence_threshold: DEFAULT_CONFIDENCE_THRESHOLD,
            arena: ArenaParams::default(),
            solver: SolverParams::default(),
            decision: DecisionParams::default(),
            retrieval_k: DEFAULT_TOP_K,
            chunk: ChunkParams::default(),
            clash_resolution_enabled: true,
            seed: 0,
            review_threshold: 0.1,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, PipelineError> {
        let config: PipelineConfig =
            toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        config.check()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            PipelineError::Config(m) => PipelineError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes to TOML")
    }

    pub fn check(&self) -> Result<(), PipelineError> {
        let bad = |e: String| Err(PipelineError::Config(e));
        if let Err(e) = self.arena.check() {
            return bad(e.to_string());
        }
        if let Err(e) = self.solver.check() {
            return bad(e.to_string());
        }
        if let Err(e) = self.decision.check() {
            return bad(e.to_string());
        }
        if self.relation_batch_size == 0 {
            return bad("relation_batch_size must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.relation_confidence_threshold) {
            return bad(format!(
                "relation_confidence_threshold {} outside [0, 1]",
                self.relation_confidence_threshold
            ));
        }
        if self.chunk.window == 0 || self.chunk.overlap >= self.chunk.window {
            return bad(format!(
                "chunk overlap {} must be smaller than window {}",
                self.chunk.overlap, self.chunk.window
            ));
        }
        if self.review_threshold.is_nan() || self.review_threshold < 0.0 {
            return bad(format!("review_threshold {} must be non-negative", self.review_threshold));
        }
        Ok(())
    }
}

/// What a caller submits for one case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskInput {
    #[serde(default)]
    pub task_id: Option<String>,
    pub claim: String,
    /// Case description; always part of the evidence context.
    #[serde(default)]
    pub facts: String,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl TaskInput {
    pub fn new(claim: impl Into<String>, facts: impl Into<String>) -> Self {
        TaskInput {
            task_id: None,
            claim: claim.into(),
            facts: facts.into(),
            metadata: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid task: {0}")]
    Task(String),
    #[error("{stage} stage failed: {message}")]
    Stage { stage: Stage, message: String },
}

impl PipelineError {
    fn at(stage: Stage, e: impl std::fmt::Display) -> Self {
        PipelineError::Stage {
            stage,
            message: e.to_string(),
        }
    }

    pub fn stage(&self) -> Option<Stage> {
        match self {
            PipelineError::Stage { stage, .. } => Some(*stage),
            _ => None,
        }
    }
}

/// A configured pipeline: settings plus the resources the stages use.
#[derive(Clone)]
pub struct Pipeline {
    config: PipelineConfig,
    backends: Backends,
    pool: AgentPool,
    corpus: Arc<CorpusIndex>,
    web: Arc<dyn WebSearch>,
}

impl std::fmt::Debug for Pipeline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Pipeline")
            .field("config", &self.config)
            .field("backends", &self.backends)
            .field("corpus_passages", &self.corpus.passages().len())
            .finish()
    }
}

impl Pipeline {
    /// Builds the backends named in the config, the default agent pool, an
    /// empty corpus and no web search.
    pub fn new(config: PipelineConfig) -> Result<Self, PipelineError> {
        config.check()?;
        let backends = Backends::from_selection(&config.backends)
            .map_err(|e| PipelineError::Config(format!("backend: {e}")))?;
        Ok(Pipeline {
            config,
            backends,
            pool: default_pool(),
            corpus: Arc::new(CorpusIndex::default()),
            web: Arc::new(NoWebSearch),
        })
    }

    pub fn with_backends(mut self, backends: Backends) -> Self {
        self.backends = backends;
        self
    }

    pub fn with_pool(mut self, pool: AgentPool) -> Self {
        self.pool = pool;
        self
    }

    pub fn with_corpus(mut self, corpus: CorpusIndex) -> Self {
        self.corpus = Arc::new(corpus);
        self
    }

    pub fn with_web(mut self, web: Arc<dyn WebSearch>) -> Self {
        self.web = web;
        self
    }

    /// Same resources, different settings. Backends are kept as they are.
    pub fn reconfigured(&self, config: PipelineConfig) -> Result<Self, PipelineError> {
        config.check()?;
        Ok(Pipeline {
            config,
            ..self.clone()
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn backends(&self) -> &Backends {
        &self.backends
    }

    pub fn run(&self, input: &TaskInput) -> Result<CaseRecord, PipelineError> {
        if input.claim.trim().is_empty() {
            return Err(PipelineError::Task("claim is empty".into()));
        }
        let cfg = &self.config;
        let mut trace = Vec::new();

        // Retrieval
        let (context, retrieval_warnings) = self.assemble(input)?;
        trace.push(StageEntry::Retrieval {
            passage_ids: context.ids().into_iter().map(String::from).collect(),
            warnings: retrieval_warnings,
        });
        let case_id = case_id_for(input, cfg, &context);
        let mut task = LegalTask::new(
            input.task_id.clone().unwrap_or_else(|| case_id.clone()),
            input.claim.trim(),
            context,
        );
        task.metadata = input.metadata.clone();
        info!(%case_id, "running case");

        // Team selection
        let selector = self.backends.get(Purpose::Select);
        let mut teams = Vec::new();
        let mut team_warnings = Vec::new();
        for stance in [Stance::Support, Stance::Attack] {
            let team = select_team(&self.pool, &task, stance, selector)
                .map_err(|e| PipelineError::at(Stage::TeamSelection, e))?;
            if team.used_fallback {
                team_warnings.push(format!("{stance} selection empty; fallback team used"));
            }
            teams.push(team);
        }
        trace.push(StageEntry::TeamSelection {
            teams: teams
                .iter()
                .map(|t| TeamTrace {
                    stance: t.stance,
                    roles: t.roles().into_iter().map(String::from).collect(),
                    used_fallback: t.used_fallback,
                })
                .collect(),
            warnings: team_warnings,
        });

        // Generation
        let generator = self.backends.get(Purpose::Generate);
        let jobs: Vec<_> = teams
            .iter()
            .flat_map(|t| t.members.iter().map(move |m| (t.stance, m)))
            .collect();
        let results: Vec<_> = jobs
            .par_iter()
            .map(|(stance, agent)| generate_arguments(agent, &task, *stance, generator))
            .collect();
        let mut generated = Vec::new();
        let mut generation_warnings = Vec::new();
        for result in results {
            match result {
                Ok(g) => {
                    generation_warnings.extend(g.warnings.iter().map(|w| format!("{}: {w}", g.role)));
                    generated.push(g);
                }
                Err(e) if e.is_fatal() => return Err(PipelineError::at(Stage::Generation, e)),
                Err(e) => {
                    warn!(error = %e, "agent skipped");
                    generation_warnings.push(e.to_string());
                }
            }
        }
        let drafts: Vec<_> = generated.iter().flat_map(|g| g.arguments.iter().cloned()).collect();
        trace.push(StageEntry::Generation {
            agents: generated,
            warnings: generation_warnings,
        });

        // Scoring
        let scorer = self.backends.get(Purpose::Score);
        let scored: Vec<_> = drafts
            .par_iter()
            .map(|d| score_argument(d, &task, scorer))
            .collect();
        let mut arguments = Vec::new();
        let mut scores = Vec::new();
        let mut dropped = Vec::new();
        let mut scoring_warnings = Vec::new();
        for (draft, result) in drafts.into_iter().zip(scored) {
            match result {
                Ok(s) => {
                    if s.clamped {
                        scoring_warnings.push(format!("{}: score {} clamped to {}", draft.id, s.raw, s.value));
                    }
                    scores.push(ScoreTrace {
                        id: draft.id.clone(),
                        value: s.value,
                        raw: s.raw,
                        clamped: s.clamped,
                    });
                    arguments.push(draft.into_argument(s.value));
                }
                Err(e) if e.is_fatal() => return Err(PipelineError::at(Stage::Scoring, e)),
                Err(e) => {
                    warn!(id = %draft.id, error = %e, "argument dropped");
                    scoring_warnings.push(e.to_string());
                    dropped.push(draft.id);
                }
            }
        }
        trace.push(StageEntry::Scoring {
            scores,
            dropped,
            warnings: scoring_warnings,
        });

        // Relations
        let relations = match cfg.relation_mode {
            RelationMode::Heuristic => RelationReport::heuristic(&arguments),
            RelationMode::Model => model_relations(
                &task.claim,
                &arguments,
                self.backends.get(Purpose::Relate),
                cfg.relation_batch_size,
                cfg.relation_confidence_threshold,
            )
            .map_err(|e| PipelineError::at(Stage::Relations, e))?,
        };
        let edges = relations.edges.clone();
        trace.push(StageEntry::Relations { report: relations });

        // Clash resolution
        if cfg.clash_resolution_enabled {
            let (adjusted, report) = apply_clash_resolution(
                &arguments,
                &task,
                &cfg.arena,
                self.backends.get(Purpose::Adjudicate),
            )
            .map_err(|e| PipelineError::at(Stage::ClashResolution, e))?;
            arguments = adjusted;
            trace.push(StageEntry::ClashResolution { report });
        }

        // Graph construction
        let graph = build_graph(&task.claim, arguments, edges)
            .map_err(|e| PipelineError::at(Stage::GraphConstruction, e))?;
        trace.push(StageEntry::GraphConstruction {
            nodes: graph.node_count(),
            edges: graph.edges().len(),
        });

        // Solver
        let strengths = solve_equilibrium(&graph, &cfg.solver);
        let mut solver_warnings = Vec::new();
        if !strengths.converged {
            solver_warnings.push(format!(
                "no convergence after {} iterations (residual {:e})",
                strengths.iterations, strengths.residual
            ));
        }
        trace.push(StageEntry::Solver {
            iterations: strengths.iterations,
            residual: strengths.residual,
            converged: strengths.converged,
            warnings: solver_warnings,
        });

        // Decision
        let brief = judge_brief(&graph, &strengths, JUDGE_BRIEF_PER_SIDE);
        let outcome = decide(
            strengths.claim(),
            &cfg.decision,
            &task,
            &brief,
            self.backends.get(Purpose::Judge),
        )
        .map_err(|e| PipelineError::at(Stage::Decision, e))?;
        trace.push(StageEntry::Decision {
            decided_by: outcome.decision.decided_by,
            escalated: outcome.decision.escalated,
            warnings: outcome.warnings,
        });

        Ok(CaseRecord {
            case_id,
            task,
            graph,
            strengths,
            decision: outcome.decision,
            trace,
            config: cfg.clone(),
            created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        })
    }

    fn assemble(
        &self,
        input: &TaskInput,
    ) -> Result<(EvidenceContext, Vec<String>), PipelineError> {
        let mut passages = Vec::new();
        let mut warnings = Vec::new();
        if !input.facts.trim().is_empty() {
            let facts = index_corpus(
                vec![(FACTS_DOCUMENT.to_string(), input.facts.clone())],
                self.config.chunk,
            )
            .map_err(|e| PipelineError::at(Stage::Retrieval, e))?;
            passages.extend(facts.passages().iter().cloned().map(|mut p| {
                p.provenance = Provenance::UserSubmitted;
                p
            }));
        }
        let query = format!("{} {}", input.claim, input.facts);
        let retrieved = hybrid_retrieve(&self.corpus, self.web.as_ref(), &query, self.config.retrieval_k);
        if retrieved.is_empty() && !self.corpus.is_empty() {
            warnings.push("no corpus passage matched the case".into());
        }
        passages.extend(retrieved);
        let context = assemble_context(passages).map_err(|e| PipelineError::at(Stage::Retrieval, e))?;
        Ok((context, warnings))
    }
}

/// Runs one case with backends built from `config`.
pub fn run_case(input: &TaskInput, config: PipelineConfig) -> Result<CaseRecord, PipelineError> {
    Pipeline::new(config)?.run(input)
}

/// A record for a graph built by hand rather than by agents: the trace holds
/// only graph construction, solver and decision.
pub fn record_for_graph(
    case_id: impl Into<String>,
    graph: QbafGraph,
    config: PipelineConfig,
    judge: &dyn TextModelBackend,
) -> Result<CaseRecord, PipelineError> {
    config.check()?;
    let case_id = case_id.into();
    let task = LegalTask::new(case_id.clone(), graph.claim().text.clone(), EvidenceContext::default());
    let strengths = solve_equilibrium(&graph, &config.solver);
    let brief = judge_brief(&graph, &strengths, JUDGE_BRIEF_PER_SIDE);
    let outcome = decide(strengths.claim(), &config.decision, &task, &brief, judge)
        .map_err(|e| PipelineError::at(Stage::Decision, e))?;
    let trace = vec![
        StageEntry::GraphConstruction {
            nodes: graph.node_count(),
            edges: graph.edges().len(),
        },
        StageEntry::Solver {
            iterations: strengths.iterations,
            residual: strengths.residual,
            converged: strengths.converged,
            warnings: Vec::new(),
        },
        StageEntry::Decision {
            decided_by: outcome.decision.decided_by,
            escalated: outcome.decision.escalated,
            warnings: outcome.warnings,
        },
    ];
    Ok(CaseRecord {
        case_id,
        task,
        graph,
        strengths,
        decision: outcome.decision,
        trace,
        config,
        created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
    })
}

/// Deterministic id: a digest of the task, the settings and the evidence.
/// Backend selection is left out so a replayed run keeps the id of the run
/// it was recorded from.
pub fn case_id_for(
    input: &TaskInput,
    config: &PipelineConfig,
    context: &EvidenceContext,
) -> String {
    let settings = PipelineConfig {
        backends: BackendSelection::default(),
        ..config.clone()
    };
    let mut h = Sha256::new();
    for part in [
        serde_json::to_string(input).expect("input serializes"),
        serde_json::to_string(&settings).expect("config serializes"),
        serde_json::to_string(context).expect("context serializes"),
    ] {
        h.update(part.as_bytes());
        h.update([0u8]);
    }
    format!("case-{}", &hex::encode(h.finalize())[..16])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{ScriptedBackend, SyntheticBackend};
    use crate::decision::{Answer, DecidedBy};
    use serde_json::json;

    fn scripted() -> ScriptedBackend {
        ScriptedBackend::new()
            .on_fn(Purpose::Select, |req| {
                let stance = req.input["stance"].as_str().unwrap_or_default().to_string();
                let roles = if stance == "support" {
                    vec!["Public Defender"]
                } else {
                    vec!["Prosecutor"]
                };
                json!({ "roles": roles })
            })
            .on(
                Purpose::Generate,
                json!({"arguments": [{"text": "the statement is offered for its truth", "evidence_refs": ["facts#0"]}]}),
            )
            .on(Purpose::Score, json!({"score": 0.8}))
            .on(Purpose::Adjudicate, json!({"winner": "tie", "rationale": "even"}))
            .on(Purpose::Judge, json!({"answer": "no", "rationale": "balanced, defaults to no"}))
    }

    fn pipeline(config: PipelineConfig) -> Pipeline {
        Pipeline::new(config)
            .unwrap()
            .with_backends(Backends::uniform(Arc::new(scripted())))
    }

    fn input() -> TaskInput {
        TaskInput::new("The statement is hearsay.", "A witness repeats what a neighbour said outside court.")
    }

    #[test]
    fn balanced_case_escalates_to_judge() {
        let record = pipeline(PipelineConfig::default()).run(&input()).unwrap();
        assert_eq!(record.graph.arguments().len(), 2);
        assert_eq!(record.strengths.claim(), 0.5);
        assert_eq!(record.decision.decided_by, DecidedBy::FinalJudge);
        assert_eq!(record.decision.answer, Answer::No);
        assert_eq!(
            record.stages(),
            vec![
                Stage::Retrieval,
                Stage::TeamSelection,
                Stage::Generation,
                Stage::Scoring,
                Stage::Relations,
                Stage::ClashResolution,
                Stage::GraphConstruction,
                Stage::Solver,
                Stage::Decision,
            ]
        );
    }

    #[test]
    fn ablations_change_trace_and_answer() {
        let mut config = PipelineConfig {
            clash_resolution_enabled: false,
            ..PipelineConfig::default()
        };
        config.decision.uae_enabled = false;
        let record = pipeline(config).run(&input()).unwrap();
        assert!(record.clash_report().is_none());
        assert!(!record.stages().contains(&Stage::ClashResolution));
        assert!(record.graph.arguments().iter().all(|a| a.base_strength == 0.8));
        assert_eq!(record.decision.answer, Answer::Yes);
        assert_eq!(record.decision.decided_by, DecidedBy::Threshold);
    }

    #[test]
    fn fatal_backend_error_is_stage_tagged() {
        let p = Pipeline::new(PipelineConfig::default())
            .unwrap()
            .with_backends(Backends::uniform(Arc::new(ScriptedBackend::new())));
        let err = p.run(&input()).unwrap_err();
        assert_eq!(err.stage(), Some(Stage::TeamSelection));
    }

    #[test]
    fn synthetic_runs_are_reproducible() {
        let p = Pipeline::new(PipelineConfig::default())
            .unwrap()
            .with_backends(Backends::uniform(Arc::new(SyntheticBackend::new(7))));
        let a = p.run(&input()).unwrap();
        let b = p.run(&input()).unwrap();
        assert_eq!(a.canonical_json(), b.canonical_json());
        assert!(a.case_id.starts_with("case-"));
    }

    #[test]
    fn config_round_trips_through_toml() {
        let mut config = PipelineConfig {
            relation_mode: RelationMode::Model,
            ..PipelineConfig::default()
        };
        config.arena.beta = 0.05;
        let text = config.to_toml();
        assert_eq!(PipelineConfig::from_toml_str(&text).unwrap(), config);
        assert!(PipelineConfig::from_toml_str("no_such_key = 1").is_err());
        assert!(PipelineConfig::from_toml_str("[arena]\ndelta = 0.0\nbeta = 0.1").is_err());
    }
}
