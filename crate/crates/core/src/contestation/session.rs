use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::json;
use tracing::warn;

use super::cards::build_card;
use super::{ArgumentCard, AuditEntry, ContestError, ContestationType, Edit, EditOp, NewArgument};
use crate::agents::{LegalTask, SCORE_CEILING, SCORE_FLOOR};
use crate::backend::{BackendRequest, Purpose, TextModelBackend};
use crate::decision::{decide, judge_brief, Decision};
use crate::pipeline::PipelineConfig;
use crate::prompts;
use crate::qbaf::{solve_equilibrium, validate, Argument, EdgeOrigin, NodeId, QbafGraph, Stance, StrengthMap};
use crate::record::CaseRecord;
use crate::retrieval::{EvidencePassage, Provenance};

const JUDGE_BRIEF_PER_SIDE: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProposalStatus {
    Pending,
    Accepted,
    Rejected,
}

/// A backend-suggested edit awaiting the user's decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub id: u64,
    pub contestation: ContestationType,
    pub user_claim: String,
    pub op: EditOp,
    pub rationale: String,
    pub status: ProposalStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContestOutcome {
    pub proposals: Vec<Proposal>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recomputed {
    pub strengths: StrengthMap,
    pub decision: Decision,
    pub warnings: Vec<String>,
}

/// Projected effect of an edit that was not applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preview {
    pub op: EditOp,
    pub claim_before: f64,
    pub claim_after: f64,
    pub strengths: StrengthMap,
    pub decision: Decision,
}

/// Editing state over one case. Edits apply one at a time; a failed edit
/// leaves the session untouched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContestationSession {
    session_id: String,
    case_id: String,
    base_claim: f64,
    base_decision: Decision,
    config: PipelineConfig,
    task: LegalTask,
    graph: QbafGraph,
    strengths: StrengthMap,
    decision: Decision,
    removed: BTreeSet<NodeId>,
    accepted: BTreeSet<NodeId>,
    proposals: Vec<Proposal>,
    audit: Vec<AuditEntry>,
    review_required: bool,
    materials: u64,
}

pub fn open_session(record: &CaseRecord, session_id: impl Into<String>) -> ContestationSession {
    ContestationSession {
        session_id: session_id.into(),
        case_id: record.case_id.clone(),
        base_claim: record.strengths.claim(),
        base_decision: record.decision.clone(),
        config: record.config.clone(),
        task: record.task.clone(),
        graph: record.graph.clone(),
        strengths: record.strengths.clone(),
        decision: record.decision.clone(),
        removed: BTreeSet::new(),
        accepted: BTreeSet::new(),
        proposals: Vec::new(),
        audit: Vec::new(),
        review_required: false,
        materials: 0,
    }
}

#[derive(Deserialize)]
struct ContestReply {
    #[serde(default)]
    proposals: Vec<serde_json::Value>,
}

#[derive(Deserialize)]
struct ProposalItem {
    action: String,
    #[serde(default)]
    target: Option<String>,
    #[serde(default)]
    stance: Option<Stance>,
    #[serde(default)]
    text: Option<String>,
    #[serde(default)]
    base_strength: Option<f64>,
    #[serde(default)]
    evidence_refs: Vec<String>,
    #[serde(default)]
    rationale: String,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

fn check_strength(value: f64) -> Result<f64, ContestError> {
    if (SCORE_FLOOR..=SCORE_CEILING).contains(&value) {
        Ok(value)
    } else {
        Err(ContestError::StrengthOutOfRange(value))
    }
}

impl ContestationSession {
    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn case_id(&self) -> &str {
        &self.case_id
    }

    pub fn graph(&self) -> &QbafGraph {
        &self.graph
    }

    pub fn strengths(&self) -> &StrengthMap {
        &self.strengths
    }

    pub fn decision(&self) -> &Decision {
        &self.decision
    }

    pub fn base_decision(&self) -> &Decision {
        &self.base_decision
    }

    pub fn base_claim_strength(&self) -> f64 {
        self.base_claim
    }

    pub fn task(&self) -> &LegalTask {
        &self.task
    }

    pub fn audit(&self) -> &[AuditEntry] {
        &self.audit
    }

    pub fn proposals(&self) -> &[Proposal] {
        &self.proposals
    }

    pub fn pending(&self) -> Vec<&Proposal> {
        self.proposals
            .iter()
            .filter(|p| p.status == ProposalStatus::Pending)
            .collect()
    }

    pub fn review_required(&self) -> bool {
        self.review_required
    }

    pub fn removed(&self) -> &BTreeSet<NodeId> {
        &self.removed
    }

    pub fn accepted(&self) -> &BTreeSet<NodeId> {
        &self.accepted
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("session serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| e.to_string())
    }

    /// Solves the working graph and decides with the case's own settings.
    pub fn recompute(&self, backend: &dyn TextModelBackend) -> Result<Recomputed, ContestError> {
        recompute_graph(&self.graph, &self.config, &self.task, backend)
    }

    pub fn argument_card(&self, id: &NodeId) -> Result<ArgumentCard, ContestError> {
        if self.removed.contains(id) {
            return Err(ContestError::StaleNode(id.clone()));
        }
        build_card(&self.graph, &self.strengths, &self.config.solver, &self.task.context, id)
    }

    pub fn apply_edit(&mut self, edit: Edit, backend: &dyn TextModelBackend) -> Result<AuditEntry, ContestError> {
        self.commit(edit, None, backend)
    }

    /// What `op` would do, without changing the session.
    pub fn preview(&self, op: EditOp, backend: &dyn TextModelBackend) -> Result<Preview, ContestError> {
        let mut scratch = self.clone();
        let op = scratch.mutate(op)?;
        let rec = scratch.recompute(backend)?;
        Ok(Preview {
            op,
            claim_before: self.strengths.claim(),
            claim_after: rec.strengths.claim(),
            strengths: rec.strengths,
            decision: rec.decision,
        })
    }

    /// Asks the contestation agents for edits addressing `user_claim`.
    /// Supplied materials join the evidence context. Proposals stay pending
    /// until accepted.
    pub fn run_contestation_prompt(
        &mut self,
        kind: ContestationType,
        user_claim: &str,
        materials: &[String],
        backend: &dyn TextModelBackend,
    ) -> ContestOutcome {
        let mut warnings = Vec::new();
        let mut material_ids = Vec::new();
        for text in materials.iter().filter(|t| !t.trim().is_empty()) {
            self.materials += 1;
            let id = format!("user-{}", self.materials);
            self.task.context.passages.push(EvidencePassage {
                passage_id: id.clone(),
                document_id: id.clone(),
                offset: 0,
                text: text.clone(),
                score: 0.0,
                provenance: Provenance::UserSubmitted,
            });
            material_ids.push(id);
        }
        let rendered_materials = if material_ids.is_empty() {
            "(none)".to_string()
        } else {
            material_ids
                .iter()
                .filter_map(|id| self.task.context.passage(id))
                .map(|p| format!("[{}] {}", p.passage_id, p.text.trim()))
                .collect::<Vec<_>>()
                .join("\n")
        };
        let rendered_args = self
            .graph
            .arguments()
            .iter()
            .map(|a| {
                format!(
                    "[{}] ({}, base {:.2}, strength {:.3}) {}",
                    a.id,
                    a.stance,
                    a.base_strength,
                    self.strengths.get(&a.id).unwrap_or(a.base_strength),
                    a.text
                )
            })
            .collect::<Vec<_>>()
            .join("\n");
        let request = BackendRequest::new(
            Purpose::Contest,
            prompts::contest(
                kind.as_str(),
                kind.guidance(),
                user_claim,
                &self.task.claim,
                &rendered_args,
                &rendered_materials,
            ),
            prompts::CONTEST_SCHEMA,
            json!({
                "kind": kind,
                "user_claim": user_claim,
                "arguments": self.graph.arguments().iter().map(|a| a.id.as_str()).collect::<Vec<_>>(),
                "materials": material_ids,
            }),
        );
        let reply: ContestReply = match backend.complete(&request).and_then(|r| r.parse()) {
            Ok(r) => r,
            Err(e) => {
                warn!(error = %e, "contestation prompt failed");
                warnings.push(format!("contestation backend failed: {e}"));
                return ContestOutcome {
                    proposals: Vec::new(),
                    warnings,
                };
            }
        };

        let mut created = Vec::new();
        for (i, raw) in reply.proposals.into_iter().enumerate() {
            let item: ProposalItem = match serde_json::from_value(raw) {
                Ok(item) => item,
                Err(e) => {
                    warnings.push(format!("proposal {}: {e}", i + 1));
                    continue;
                }
            };
            match self.proposal_op(&item) {
                Ok(op) => {
                    let proposal = Proposal {
                        id: self.proposals.len() as u64 + 1,
                        contestation: kind,
                        user_claim: user_claim.to_string(),
                        op,
                        rationale: item.rationale,
                        status: ProposalStatus::Pending,
                    };
                    self.proposals.push(proposal.clone());
                    created.push(proposal);
                }
                Err(why) => warnings.push(format!("proposal {} skipped: {why}", i + 1)),
            }
        }
        ContestOutcome {
            proposals: created,
            warnings,
        }
    }

    pub fn accept_proposal(
        &mut self,
        proposal_id: u64,
        actor: &str,
        backend: &dyn TextModelBackend,
    ) -> Result<AuditEntry, ContestError> {
        let idx = self.open_proposal(proposal_id)?;
        let p = &self.proposals[idx];
        let edit = Edit::new(actor, p.contestation, p.op.clone());
        let entry = self.commit(edit, Some(proposal_id), backend)?;
        self.proposals[idx].status = ProposalStatus::Accepted;
        Ok(entry)
    }

    pub fn reject_proposal(&mut self, proposal_id: u64) -> Result<(), ContestError> {
        let idx = self.open_proposal(proposal_id)?;
        self.proposals[idx].status = ProposalStatus::Rejected;
        Ok(())
    }

    fn open_proposal(&self, proposal_id: u64) -> Result<usize, ContestError> {
        let idx = self
            .proposals
            .iter()
            .position(|p| p.id == proposal_id)
            .ok_or(ContestError::UnknownProposal(proposal_id))?;
        if self.proposals[idx].status != ProposalStatus::Pending {
            return Err(ContestError::ProposalClosed(proposal_id));
        }
        Ok(idx)
    }

    fn proposal_op(&self, item: &ProposalItem) -> Result<EditOp, String> {
        let text = item.text.as_deref().map(str::trim).unwrap_or_default().to_string();
        let target = || -> Result<NodeId, String> {
            let id = NodeId::new(item.target.clone().ok_or("missing target")?);
            self.check_live(&id).map_err(|e| e.to_string())?;
            Ok(id)
        };
        match item.action.as_str() {
            "edit_text" => {
                let id = target()?;
                if text.is_empty() {
                    return Err("empty text".into());
                }
                Ok(EditOp::EditArgumentText {
                    id,
                    text,
                    rationale: item.rationale.clone(),
                })
            }
            "set_strength" => {
                let id = target()?;
                let value = item.base_strength.ok_or("missing base_strength")?;
                check_strength(value).map_err(|e| e.to_string())?;
                Ok(EditOp::SetBaseStrength {
                    id,
                    base_strength: value,
                    rationale: item.rationale.clone(),
                })
            }
            "add_argument" => {
                let stance = item.stance.ok_or("missing stance")?;
                if text.is_empty() {
                    return Err("empty text".into());
                }
                let base_strength = item.base_strength.unwrap_or(0.5).clamp(SCORE_FLOOR, SCORE_CEILING);
                Ok(EditOp::AddArgument {
                    argument: NewArgument {
                        id: None,
                        text,
                        stance,
                        author_role: "Contestation Agent".into(),
                        evidence_refs: item
                            .evidence_refs
                            .iter()
                            .filter(|r| self.task.context.passage(r).is_some())
                            .cloned()
                            .collect(),
                        base_strength,
                    },
                })
            }
            other => Err(format!("unknown action `{other}`")),
        }
    }

    fn check_live(&self, id: &NodeId) -> Result<(), ContestError> {
        if id.is_claim() {
            return Err(ContestError::ClaimNode);
        }
        if self.removed.contains(id) {
            return Err(ContestError::StaleNode(id.clone()));
        }
        if self.graph.argument(id).is_none() {
            return Err(ContestError::UnknownNode(id.clone()));
        }
        Ok(())
    }

    fn fresh_id(&self) -> NodeId {
        (1u64..)
            .map(|n| NodeId::new(format!("h-{n}")))
            .find(|id| !self.graph.contains(id) && !self.removed.contains(id))
            .expect("unbounded id space")
    }

    /// Applies `op` to the working graph. Returns the op as logged, with any
    /// session-assigned id filled in.
    fn mutate(&mut self, op: EditOp) -> Result<EditOp, ContestError> {
        let invalid = |e: crate::qbaf::GraphError| ContestError::Invalid(e.to_string());
        let op = match op {
            EditOp::AcceptArgument { id } => {
                self.check_live(&id)?;
                self.accepted.insert(id.clone());
                EditOp::AcceptArgument { id }
            }
            EditOp::RejectArgument { id } => {
                self.check_live(&id)?;
                self.graph.remove_argument(&id);
                self.accepted.remove(&id);
                self.removed.insert(id.clone());
                EditOp::RejectArgument { id }
            }
            EditOp::EditArgumentText { id, text, rationale } => {
                self.check_live(&id)?;
                if text.trim().is_empty() {
                    return Err(ContestError::EmptyText);
                }
                self.graph.argument_mut(&id).expect("checked live").text = text.clone();
                EditOp::EditArgumentText { id, text, rationale }
            }
            EditOp::AddArgument { mut argument } => {
                if argument.text.trim().is_empty() {
                    return Err(ContestError::EmptyText);
                }
                check_strength(argument.base_strength)?;
                if let Some(r) = argument
                    .evidence_refs
                    .iter()
                    .find(|r| self.task.context.passage(r).is_none())
                {
                    return Err(ContestError::UnknownPassage(r.clone()));
                }
                let id = match &argument.id {
                    Some(id) if id.is_claim() => return Err(ContestError::ClaimNode),
                    Some(id) if self.graph.contains(id) || self.removed.contains(id) => {
                        return Err(ContestError::DuplicateId(id.clone()))
                    }
                    Some(id) => id.clone(),
                    None => self.fresh_id(),
                };
                argument.id = Some(id.clone());
                self.graph
                    .add_argument(Argument {
                        id,
                        text: argument.text.clone(),
                        stance: argument.stance,
                        author_role: argument.author_role.clone(),
                        evidence_refs: argument.evidence_refs.clone(),
                        base_strength: argument.base_strength,
                    })
                    .map_err(invalid)?;
                EditOp::AddArgument { argument }
            }
            EditOp::SetBaseStrength {
                id,
                base_strength,
                rationale,
            } => {
                self.check_live(&id)?;
                check_strength(base_strength)?;
                self.graph.argument_mut(&id).expect("checked live").base_strength = base_strength;
                EditOp::SetBaseStrength {
                    id,
                    base_strength,
                    rationale,
                }
            }
            EditOp::SetRelation {
                source,
                target,
                kind,
                rationale,
            } => {
                self.check_live(&source)?;
                self.check_live(&target)?;
                if source == target {
                    return Err(ContestError::SelfRelation);
                }
                self.graph
                    .set_symmetric_relation(&source, &target, kind, EdgeOrigin::Human)
                    .map_err(invalid)?;
                EditOp::SetRelation {
                    source,
                    target,
                    kind,
                    rationale,
                }
            }
        };
        if let Some(d) = validate(&self.graph).first() {
            return Err(ContestError::Invalid(d.to_string()));
        }
        Ok(op)
    }

    fn commit(
        &mut self,
        edit: Edit,
        proposal: Option<u64>,
        backend: &dyn TextModelBackend,
    ) -> Result<AuditEntry, ContestError> {
        let mut next = self.clone();
        let op = next.mutate(edit.op)?;
        let rec = next.recompute(backend)?;
        let claim_before = self.strengths.claim();
        let claim_after = rec.strengths.claim();
        let decision_changed = (rec.decision.answer != self.decision.answer).then(|| rec.decision.clone());
        if (claim_after - self.base_claim).abs() > self.config.review_threshold
            || rec.decision.answer != self.base_decision.answer
        {
            next.review_required = true;
        }
        next.strengths = rec.strengths;
        next.decision = rec.decision;
        let entry = AuditEntry {
            seq: self.audit.len() as u64 + 1,
            actor: edit.actor,
            contestation: edit.contestation,
            timestamp: if edit.timestamp.is_empty() { now() } else { edit.timestamp },
            op,
            proposal,
            claim_before,
            claim_after,
            decision_changed,
            review_required: next.review_required,
        };
        next.audit.push(entry.clone());
        *self = next;
        Ok(entry)
    }
}

pub(crate) fn recompute_graph(
    graph: &QbafGraph,
    config: &PipelineConfig,
    task: &LegalTask,
    backend: &dyn TextModelBackend,
) -> Result<Recomputed, ContestError> {
    let strengths = solve_equilibrium(graph, &config.solver);
    let brief = judge_brief(graph, &strengths, JUDGE_BRIEF_PER_SIDE);
    let outcome = decide(strengths.claim(), &config.decision, task, &brief, backend)
        .map_err(|e| ContestError::Invalid(e.to_string()))?;
    Ok(Recomputed {
        strengths,
        decision: outcome.decision,
        warnings: outcome.warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::ScriptedBackend;
    use crate::contestation::{audit_from_jsonl, audit_to_jsonl, participation_summary};
    use crate::decision::{Answer, DecidedBy};
    use crate::pipeline::record_for_graph;
    use crate::qbaf::{build_graph, RelationKind};
    use serde_json::json;

    fn arg(id: &str, stance: Stance, tau: f64) -> Argument {
        Argument {
            id: NodeId::new(id),
            text: format!("argument {id}"),
            stance,
            author_role: if stance == Stance::Support { "Public Defender" } else { "Prosecutor" }.into(),
            evidence_refs: vec![],
            base_strength: tau,
        }
    }

    fn judge(answer: &str) -> ScriptedBackend {
        ScriptedBackend::new().on(Purpose::Judge, json!({"answer": answer, "rationale": "judged"}))
    }

    fn star(args: Vec<Argument>, backend: &ScriptedBackend) -> CaseRecord {
        let graph = build_graph("the claim", args, vec![]).unwrap();
        record_for_graph("case-t", graph, PipelineConfig::default(), backend).unwrap()
    }

    fn balanced(backend: &ScriptedBackend) -> CaseRecord {
        star(vec![arg("s", Stance::Support, 0.8), arg("a", Stance::Attack, 0.8)], backend)
    }

    fn edit(op: EditOp) -> Edit {
        Edit::new("tester", ContestationType::Factual, op)
    }

    #[test]
    fn zero_edit_session_recomputes_identically() {
        let b = judge("no");
        let record = balanced(&b);
        let session = open_session(&record, "s1");
        let rec = session.recompute(&b).unwrap();
        assert_eq!(rec.strengths, record.strengths);
        assert_eq!(rec.decision, record.decision);
        assert!(session.audit().is_empty());
        assert!(!session.review_required());
    }

    #[test]
    fn rejecting_sole_attacker_raises_claim() {
        let b = judge("no");
        let record = balanced(&b);
        let mut session = open_session(&record, "s1");
        let entry = session
            .apply_edit(edit(EditOp::RejectArgument { id: "a".into() }), &b)
            .unwrap();
        assert_eq!(entry.seq, 1);
        assert_eq!(entry.claim_before, 0.5);
        assert!((entry.claim_after - 0.695122).abs() < 1e-6);
        assert_eq!(session.decision().answer, Answer::Yes);
        assert_eq!(entry.decision_changed.as_ref().map(|d| d.answer), Some(Answer::Yes));
        assert!(session.review_required());
        assert_eq!(
            session.argument_card(&"a".into()).unwrap_err().code(),
            "EDIT_STALE_NODE"
        );
        let err = session
            .apply_edit(edit(EditOp::SetBaseStrength { id: "a".into(), base_strength: 0.5, rationale: String::new() }), &b)
            .unwrap_err();
        assert_eq!(err.code(), "EDIT_STALE_NODE");
        assert_eq!(session.audit().len(), 1);
    }

    #[test]
    fn no_op_edit_is_logged() {
        let b = judge("yes");
        let record = star(vec![arg("s", Stance::Support, 0.8)], &b);
        let mut session = open_session(&record, "s1");
        let entry = session
            .apply_edit(edit(EditOp::SetBaseStrength { id: "s".into(), base_strength: 0.8, rationale: "same".into() }), &b)
            .unwrap();
        assert_eq!(entry.claim_before, entry.claim_after);
        assert_eq!(session.strengths(), &record.strengths);
        assert_eq!(session.audit().len(), 1);
    }

    #[test]
    fn adding_attacker_to_isolated_claim() {
        let b = judge("yes");
        let record = star(vec![], &b);
        let mut session = open_session(&record, "s1");
        let entry = session
            .apply_edit(
                edit(EditOp::AddArgument {
                    argument: NewArgument {
                        id: None,
                        text: "an exception applies".into(),
                        stance: Stance::Attack,
                        author_role: "Human Reviewer".into(),
                        evidence_refs: vec![],
                        base_strength: 0.6,
                    },
                }),
                &b,
            )
            .unwrap();
        assert!((entry.claim_after - 0.367647).abs() < 1e-6);
        match &entry.op {
            EditOp::AddArgument { argument } => assert_eq!(argument.id, Some(NodeId::new("h-1"))),
            other => panic!("unexpected {other:?}"),
        }
        let card = session.argument_card(&"h-1".into()).unwrap();
        assert!(card.supporters.is_empty() && card.attackers.is_empty());
    }

    #[test]
    fn edit_into_band_goes_to_judge() {
        let b = judge("no");
        let record = star(vec![arg("s", Stance::Support, 0.8), arg("a", Stance::Attack, 0.3)], &b);
        assert_eq!(record.decision.decided_by, DecidedBy::Threshold);
        let mut session = open_session(&record, "s1");
        session
            .apply_edit(edit(EditOp::SetBaseStrength { id: "a".into(), base_strength: 0.8, rationale: String::new() }), &b)
            .unwrap();
        assert_eq!(session.decision().decided_by, DecidedBy::FinalJudge);
        assert_eq!(session.decision().answer, Answer::No);
    }

    #[test]
    fn invalid_edits_leave_state_untouched() {
        let b = judge("no");
        let record = balanced(&b);
        let mut session = open_session(&record, "s1");
        let before = session.clone();
        let cases = [
            (EditOp::RejectArgument { id: "zz".into() }, "EDIT_UNKNOWN_NODE"),
            (EditOp::RejectArgument { id: "claim".into() }, "EDIT_CLAIM_NODE"),
            (EditOp::SetBaseStrength { id: "s".into(), base_strength: 0.05, rationale: String::new() }, "EDIT_STRENGTH_RANGE"),
            (EditOp::SetRelation { source: "s".into(), target: "s".into(), kind: Some(RelationKind::Attack), rationale: String::new() }, "EDIT_SELF_RELATION"),
            (EditOp::EditArgumentText { id: "s".into(), text: " ".into(), rationale: String::new() }, "EDIT_EMPTY_TEXT"),
        ];
        for (op, code) in cases {
            assert_eq!(session.apply_edit(edit(op), &b).unwrap_err().code(), code);
        }
        assert_eq!(session, before);
    }

    #[test]
    fn set_relation_is_symmetric_and_removable() {
        let b = judge("no");
        let record = balanced(&b);
        let mut session = open_session(&record, "s1");
        session
            .apply_edit(edit(EditOp::SetRelation { source: "s".into(), target: "a".into(), kind: Some(RelationKind::Attack), rationale: String::new() }), &b)
            .unwrap();
        assert_eq!(session.graph().inter_argument_edges().count(), 2);
        session
            .apply_edit(edit(EditOp::SetRelation { source: "a".into(), target: "s".into(), kind: None, rationale: String::new() }), &b)
            .unwrap();
        assert_eq!(session.graph().inter_argument_edges().count(), 0);
        assert_eq!(session.audit().iter().map(|e| e.seq).collect::<Vec<_>>(), vec![1, 2]);
    }

    #[test]
    fn proposals_wait_for_acceptance() {
        let b = judge("no").on(
            Purpose::Contest,
            json!({"proposals": [
                {"action": "add_argument", "stance": "attack", "text": "the declarant was unavailable", "base_strength": 0.7, "evidence_refs": ["user-1"], "rationale": "exception"},
                {"action": "edit_text", "target": "nope", "text": "x"},
            ]}),
        );
        let record = balanced(&b);
        let mut session = open_session(&record, "s1");
        let out = session.run_contestation_prompt(
            ContestationType::MissingException,
            "an exception applies",
            &["the declarant died before trial".into()],
            &b,
        );
        assert_eq!(out.proposals.len(), 1);
        assert_eq!(out.warnings.len(), 1);
        assert_eq!(session.strengths(), &record.strengths);
        match &out.proposals[0].op {
            EditOp::AddArgument { argument } => {
                assert_eq!(argument.stance, Stance::Attack);
                assert_eq!(argument.evidence_refs, vec!["user-1".to_string()]);
            }
            other => panic!("unexpected {other:?}"),
        }
        let entry = session.accept_proposal(1, "reviewer", &b).unwrap();
        assert_eq!(entry.proposal, Some(1));
        assert!(entry.claim_after < 0.5);
        assert_eq!(session.accept_proposal(1, "reviewer", &b).unwrap_err().code(), "PROPOSAL_CLOSED");
        assert!(session.pending().is_empty());
    }

    #[test]
    fn backend_failure_yields_no_proposals() {
        let b = judge("no");
        let record = balanced(&b);
        let mut session = open_session(&record, "s1");
        let out = session.run_contestation_prompt(ContestationType::ProceduralFairness, "unfair", &[], &b);
        assert!(out.proposals.is_empty());
        assert_eq!(out.warnings.len(), 1);
    }

    #[test]
    fn preview_does_not_commit() {
        let b = judge("no");
        let record = balanced(&b);
        let session = open_session(&record, "s1");
        let p = session.preview(EditOp::RejectArgument { id: "s".into() }, &b).unwrap();
        assert!(p.claim_after < 0.5);
        assert!(session.audit().is_empty());
        assert_eq!(session.strengths(), &record.strengths);
    }

    #[test]
    fn audit_and_session_round_trip() {
        let b = judge("no");
        let record = balanced(&b);
        let mut session = open_session(&record, "s1");
        session.apply_edit(edit(EditOp::AcceptArgument { id: "s".into() }), &b).unwrap();
        session.apply_edit(edit(EditOp::SetBaseStrength { id: "s".into(), base_strength: 0.9, rationale: "cited".into() }), &b).unwrap();
        session.apply_edit(edit(EditOp::RejectArgument { id: "a".into() }), &b).unwrap();
        let text = audit_to_jsonl(session.audit());
        assert_eq!(text.lines().count(), 3);
        let back = audit_from_jsonl(&text).unwrap();
        assert_eq!(back, session.audit());
        assert_eq!(audit_to_jsonl(&back), text);
        let restored = ContestationSession::from_json(&session.to_json()).unwrap();
        assert_eq!(restored, session);
    }

    #[test]
    fn participation_counts_by_role() {
        let b = judge("no");
        let record = star(
            vec![
                arg("a1", Stance::Attack, 0.5),
                arg("a2", Stance::Attack, 0.5),
                arg("a3", Stance::Attack, 0.5),
                arg("s1", Stance::Support, 0.5),
                arg("s2", Stance::Support, 0.5),
            ],
            &b,
        );
        let rows = participation_summary(&record);
        assert_eq!(rows.len(), 2);
        assert_eq!((rows[0].role.as_str(), rows[0].attacks, rows[0].supports), ("Prosecutor", 3, 0));
        assert_eq!((rows[1].role.as_str(), rows[1].attacks, rows[1].supports), ("Public Defender", 0, 2));
        assert!(participation_summary(&star(vec![], &b)).is_empty());
    }
}
