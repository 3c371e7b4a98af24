use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ContestError;
use crate::decision::Decision;
use crate::qbaf::{solve_equilibrium, NodeId, QbafGraph, RelationKind, SolverParams, Stance, StrengthMap};
use crate::record::CaseRecord;
use crate::retrieval::EvidenceContext;

const EXCERPT_CHARS: usize = 240;

/// Contribution statistics for one agent role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipationRow {
    pub role: String,
    pub supports: usize,
    pub attacks: usize,
    pub clashes: usize,
    pub clashes_won: usize,
    /// Sum of (after − before) base-strength changes from clash resolution.
    pub net_adjustment: f64,
}

pub fn participation_summary(record: &CaseRecord) -> Vec<ParticipationRow> {
    let mut rows: BTreeMap<&str, ParticipationRow> = BTreeMap::new();
    let mut owner: BTreeMap<&NodeId, &str> = BTreeMap::new();
    for a in record.graph.arguments() {
        owner.insert(&a.id, &a.author_role);
        let row = rows.entry(&a.author_role).or_insert_with(|| ParticipationRow {
            role: a.author_role.clone(),
            supports: 0,
            attacks: 0,
            clashes: 0,
            clashes_won: 0,
            net_adjustment: 0.0,
        });
        match a.stance {
            Stance::Support => row.supports += 1,
            Stance::Attack => row.attacks += 1,
        }
    }
    if let Some(report) = record.clash_report() {
        for o in &report.outcomes {
            for (id, won) in [
                (&o.clash.supporter, o.winner == crate::arena::Winner::Supporter),
                (&o.clash.attacker, o.winner == crate::arena::Winner::Attacker),
            ] {
                if let Some(row) = owner.get(id).and_then(|r| rows.get_mut(r)) {
                    row.clashes += 1;
                    row.clashes_won += usize::from(won);
                }
            }
        }
        for adj in &report.adjustments {
            if let Some(row) = owner.get(&adj.id).and_then(|r| rows.get_mut(r)) {
                row.net_adjustment += adj.after - adj.before;
            }
        }
    }
    rows.into_values().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceLink {
    pub passage_id: String,
    pub document_id: String,
    pub offset: usize,
    pub excerpt: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborView {
    pub id: NodeId,
    pub kind: RelationKind,
    pub strength: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Influence {
    /// Signed term this argument adds to the claim's energy.
    pub contribution: f64,
    /// σ(φ) recomputed with the argument removed.
    pub claim_without: f64,
    pub claim_with: f64,
    pub trace: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArgumentCard {
    pub id: NodeId,
    pub text: String,
    pub stance: Stance,
    pub author_role: String,
    pub evidence: Vec<EvidenceLink>,
    pub base_strength: f64,
    pub strength: f64,
    pub supporters: Vec<NeighborView>,
    pub attackers: Vec<NeighborView>,
    pub influence: Influence,
}

pub(crate) fn build_card(
    graph: &QbafGraph,
    strengths: &StrengthMap,
    solver: &SolverParams,
    context: &EvidenceContext,
    id: &NodeId,
) -> Result<ArgumentCard, ContestError> {
    if id.is_claim() {
        return Err(ContestError::ClaimNode);
    }
    let arg = graph.argument(id).ok_or_else(|| ContestError::UnknownNode(id.clone()))?;
    let sigma = |n: &NodeId| strengths.get(n).unwrap_or(0.0);
    let strength = sigma(id);

    let evidence = arg
        .evidence_refs
        .iter()
        .map(|r| match context.passage(r) {
            Some(p) => EvidenceLink {
                passage_id: p.passage_id.clone(),
                document_id: p.document_id.clone(),
                offset: p.offset,
                excerpt: p.text.chars().take(EXCERPT_CHARS).collect(),
            },
            None => EvidenceLink {
                passage_id: r.clone(),
                document_id: String::new(),
                offset: 0,
                excerpt: String::new(),
            },
        })
        .collect();

    let mut supporters = Vec::new();
    let mut attackers = Vec::new();
    for e in graph.edges().iter().filter(|e| &e.target == id) {
        let view = NeighborView {
            id: e.source.clone(),
            kind: e.kind,
            strength: sigma(&e.source),
        };
        match e.kind {
            RelationKind::Support => supporters.push(view),
            RelationKind::Attack => attackers.push(view),
        }
    }

    let mut without = graph.clone();
    without.remove_argument(id);
    let claim_without = solve_equilibrium(&without, solver).claim();
    let claim_with = strengths.claim();
    let contribution = arg.stance.relation().sign() * strength;
    let verb = match arg.stance {
        Stance::Support => "supports",
        Stance::Attack => "attacks",
    };
    let direction = if contribution > 0.0 {
        "raises"
    } else if contribution < 0.0 {
        "lowers"
    } else {
        "leaves unchanged"
    };
    let trace = format!(
        "{id} {verb} the claim with strength {strength:.4} (base {:.2}); it {direction} the claim's \
         energy by {:.4}. Without it the claim would score {claim_without:.4} instead of {claim_with:.4}.",
        arg.base_strength,
        contribution.abs(),
    );

    Ok(ArgumentCard {
        id: arg.id.clone(),
        text: arg.text.clone(),
        stance: arg.stance,
        author_role: arg.author_role.clone(),
        evidence,
        base_strength: arg.base_strength,
        strength,
        supporters,
        attackers,
        influence: Influence {
            contribution,
            claim_without,
            claim_with,
            trace,
        },
    })
}

pub fn argument_card(record: &CaseRecord, id: &NodeId) -> Result<ArgumentCard, ContestError> {
    build_card(
        &record.graph,
        &record.strengths,
        &record.config.solver,
        &record.task.context,
        id,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dashboard {
    pub case_id: String,
    pub claim: String,
    pub claim_strength: f64,
    pub decision: Decision,
    pub participation: Vec<ParticipationRow>,
    pub cards: Vec<ArgumentCard>,
}

pub fn dashboard(record: &CaseRecord) -> Dashboard {
    let cards = record
        .graph
        .arguments()
        .iter()
        .map(|a| argument_card(record, &a.id).expect("argument from the record's own graph"))
        .collect();
    Dashboard {
        case_id: record.case_id.clone(),
        claim: record.graph.claim().text.clone(),
        claim_strength: record.strengths.claim(),
        decision: record.decision.clone(),
        participation: participation_summary(record),
        cards,
    }
}
