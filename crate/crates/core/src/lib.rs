//! Adaptive collaborative argumentation for legal claims: agent teams build a
//! quantitative bipolar argumentation graph, strengths are computed under
//! quadratic-energy semantics, and a decision is taken that humans can contest.

pub mod agents;
pub mod arena;
pub mod backend;
pub mod bench;
pub mod contestation;
pub mod decision;
pub mod pipeline;
pub mod prompts;
pub mod qbaf;
pub mod record;
pub mod relations;
pub mod retrieval;
pub mod store;

pub use decision::{Answer, DecidedBy, Decision};
pub use pipeline::{run_case, Pipeline, PipelineConfig, PipelineError, TaskInput};
pub use qbaf::{Argument, Edge, NodeId, QbafGraph, RelationKind, Stance, StrengthMap};
pub use record::CaseRecord;
