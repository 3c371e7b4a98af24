//! Human review of a decided case: dashboard artifacts, typed contestation,
//! graph edits with recomputation, and an append-only audit log.

mod audit;
mod cards;
mod session;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decision::Decision;
use crate::qbaf::{NodeId, RelationKind, Stance};

pub use audit::{audit_from_jsonl, audit_to_jsonl};
pub use cards::{
    argument_card, dashboard, participation_summary, ArgumentCard, Dashboard, EvidenceLink, Influence,
    NeighborView, ParticipationRow,
};
pub use session::{
    open_session, ContestOutcome, ContestationSession, Preview, Proposal, ProposalStatus, Recomputed,
};

/// What a contestation challenges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContestationType {
    Factual,
    LegalRule,
    Precedent,
    MissingException,
    ProceduralFairness,
}

impl ContestationType {
    pub const ALL: [ContestationType; 5] = [
        ContestationType::Factual,
        ContestationType::LegalRule,
        ContestationType::Precedent,
        ContestationType::MissingException,
        ContestationType::ProceduralFairness,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ContestationType::Factual => "factual",
            ContestationType::LegalRule => "legal_rule",
            ContestationType::Precedent => "precedent",
            ContestationType::MissingException => "missing_exception",
            ContestationType::ProceduralFairness => "procedural_fairness",
        }
    }

    /// Instruction given to the contestation agents for this type.
    pub fn guidance(self) -> &'static str {
        match self {
            ContestationType::Factual => {
                "The user says a fact was misread or is missing. Correct the affected arguments \
                 against the evidence, including any material the user supplied."
            }
            ContestationType::LegalRule => {
                "The user says the wrong legal test or element was applied. Re-derive the governing \
                 rule and revise arguments that depend on it."
            }
            ContestationType::Precedent => {
                "The user cites authority that was ignored or misapplied. Reassess the arguments \
                 in light of that precedent and adjust their strength if warranted."
            }
            ContestationType::MissingException => {
                "The user says an exception or defense was overlooked. Add arguments that raise it, \
                 on the side it favours."
            }
            ContestationType::ProceduralFairness => {
                "The user questions whether the process was fair (evidence weighting, one-sided \
                 teams). Identify arguments that were over- or under-weighted."
            }
        }
    }
}

impl fmt::Display for ContestationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A new argument supplied by a human or proposed by a contestation agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewArgument {
    /// Assigned by the session when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<NodeId>,
    pub text: String,
    pub stance: Stance,
    #[serde(default = "human_role")]
    pub author_role: String,
    #[serde(default)]
    pub evidence_refs: Vec<String>,
    pub base_strength: f64,
}

fn human_role() -> String {
    "Human Reviewer".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum EditOp {
    AcceptArgument {
        id: NodeId,
    },
    RejectArgument {
        id: NodeId,
    },
    EditArgumentText {
        id: NodeId,
        text: String,
        #[serde(default)]
        rationale: String,
    },
    AddArgument {
        argument: NewArgument,
    },
    SetBaseStrength {
        id: NodeId,
        base_strength: f64,
        #[serde(default)]
        rationale: String,
    },
    /// `kind: None` removes the relation in both directions.
    SetRelation {
        source: NodeId,
        target: NodeId,
        kind: Option<RelationKind>,
        #[serde(default)]
        rationale: String,
    },
}

impl EditOp {
    pub fn name(&self) -> &'static str {
        match self {
            EditOp::AcceptArgument { .. } => "accept_argument",
            EditOp::RejectArgument { .. } => "reject_argument",
            EditOp::EditArgumentText { .. } => "edit_argument_text",
            EditOp::AddArgument { .. } => "add_argument",
            EditOp::SetBaseStrength { .. } => "set_base_strength",
            EditOp::SetRelation { .. } => "set_relation",
        }
    }
}

/// An edit stamped with who made it, why, and when.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edit {
    pub actor: String,
    pub contestation: ContestationType,
    /// RFC 3339; filled in by the session when empty.
    #[serde(default)]
    pub timestamp: String,
    pub op: EditOp,
}

impl Edit {
    pub fn new(actor: impl Into<String>, contestation: ContestationType, op: EditOp) -> Self {
        Edit {
            actor: actor.into(),
            contestation,
            timestamp: String::new(),
            op,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub seq: u64,
    pub actor: String,
    pub contestation: ContestationType,
    pub timestamp: String,
    pub op: EditOp,
    /// Proposal this edit came from, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proposal: Option<u64>,
    pub claim_before: f64,
    pub claim_after: f64,
    /// The new decision when the answer changed with this edit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision_changed: Option<Decision>,
    pub review_required: bool,
}

#[derive(Debug, Error, PartialEq)]
pub enum ContestError {
    #[error("unknown node `{0}`")]
    UnknownNode(NodeId),
    #[error("node `{0}` was rejected earlier in this session")]
    StaleNode(NodeId),
    #[error("the claim cannot be edited this way")]
    ClaimNode,
    #[error("base strength {0} outside [0.1, 1.0]")]
    StrengthOutOfRange(f64),
    #[error("argument text is empty")]
    EmptyText,
    #[error("node id `{0}` is already in use")]
    DuplicateId(NodeId),
    #[error("unknown evidence passage `{0}`")]
    UnknownPassage(String),
    #[error("a relation needs two distinct arguments")]
    SelfRelation,
    #[error("unknown proposal {0}")]
    UnknownProposal(u64),
    #[error("proposal {0} was already decided")]
    ProposalClosed(u64),
    #[error("edit rejected: {0}")]
    Invalid(String),
}

impl ContestError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            ContestError::UnknownNode(_) => "EDIT_UNKNOWN_NODE",
            ContestError::StaleNode(_) => "EDIT_STALE_NODE",
            ContestError::ClaimNode => "EDIT_CLAIM_NODE",
            ContestError::StrengthOutOfRange(_) => "EDIT_STRENGTH_RANGE",
            ContestError::EmptyText => "EDIT_EMPTY_TEXT",
            ContestError::DuplicateId(_) => "EDIT_DUPLICATE_ID",
            ContestError::UnknownPassage(_) => "EDIT_UNKNOWN_PASSAGE",
            ContestError::SelfRelation => "EDIT_SELF_RELATION",
            ContestError::UnknownProposal(_) => "PROPOSAL_UNKNOWN",
            ContestError::ProposalClosed(_) => "PROPOSAL_CLOSED",
            ContestError::Invalid(_) => "EDIT_INVALID",
        }
    }
}
