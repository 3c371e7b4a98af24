//! Clash resolution: near-tied supporter/attacker pairs are adjudicated in
//! one arena round and base strengths move by `beta * (2w - 1)`, where `w`
//! is the argument's win rate across its clashes.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;
use tracing::warn;

use crate::agents::{LegalTask, SCORE_CEILING, SCORE_FLOOR};
use crate::backend::{BackendError, BackendRequest, Purpose, TextModelBackend};
use crate::prompts;
use crate::qbaf::{Argument, NodeId, Stance};

/// Adjusted scores are rounded to this many decimals.
const SCORE_DECIMALS: i32 = 9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArenaParams {
    /// Largest score gap (exclusive) that counts as a clash.
    pub delta: f64,
    /// Base adjustment magnitude.
    pub beta: f64,
}

impl Default for ArenaParams {
    fn default() -> Self {
        ArenaParams {
            delta: 0.2,
            beta: 0.15,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ArenaError {
    #[error("argument `{0}` took part in no clash")]
    NoParticipation(NodeId),
    #[error("invalid arena parameters: {0}")]
    BadParams(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

impl ArenaParams {
    pub fn check(&self) -> Result<(), ArenaError> {
        if self.delta.is_nan() || self.delta <= 0.0 {
            return Err(ArenaError::BadParams(format!("delta {} must be positive", self.delta)));
        }
        if self.beta.is_nan() || self.beta < 0.0 {
            return Err(ArenaError::BadParams(format!("beta {} must be non-negative", self.beta)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clash {
    pub supporter: NodeId,
    pub attacker: NodeId,
    pub score_gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Winner {
    Supporter,
    Attacker,
    Tie,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClashOutcome {
    pub clash: Clash,
    pub winner: Winner,
    pub rationale: String,
    /// Set when the verdict could not be read and the clash was scored a tie.
    #[serde(default)]
    pub degraded: bool,
}

impl ClashOutcome {
    fn credit(&self, id: &NodeId) -> Option<f64> {
        let side = if &self.clash.supporter == id {
            Winner::Supporter
        } else if &self.clash.attacker == id {
            Winner::Attacker
        } else {
            return None;
        };
        Some(match self.winner {
            Winner::Tie => 0.5,
            w if w == side => 1.0,
            _ => 0.0,
        })
    }
}

/// All supporter x attacker pairs whose base strengths differ by less than
/// `delta`, ordered by (supporter id, attacker id).
pub fn detect_clashes(arguments: &[Argument], delta: f64) -> Vec<Clash> {
    let mut clashes = Vec::new();
    for s in arguments.iter().filter(|a| a.stance == Stance::Support) {
        for a in arguments.iter().filter(|a| a.stance == Stance::Attack) {
            let gap = (s.base_strength - a.base_strength).abs();
            if gap < delta {
                clashes.push(Clash {
                    supporter: s.id.clone(),
                    attacker: a.id.clone(),
                    score_gap: gap,
                });
            }
        }
    }
    clashes.sort_by(|x, y| {
        (x.supporter.as_str(), x.attacker.as_str()).cmp(&(y.supporter.as_str(), y.attacker.as_str()))
    });
    clashes
}

#[derive(Deserialize)]
struct AdjudicateReply {
    winner: String,
    #[serde(default)]
    rationale: String,
}

/// Asks the backend which side of a clash is stronger. Unreadable verdicts
/// become ties; transport-level failures are returned.
pub fn adjudicate(
    clash: &Clash,
    arguments: &[Argument],
    task: &LegalTask,
    backend: &dyn TextModelBackend,
) -> Result<ClashOutcome, ArenaError> {
    let text = |id: &NodeId| {
        arguments
            .iter()
            .find(|a| &a.id == id)
            .map(|a| a.text.clone())
            .unwrap_or_default()
    };
    let (sup, att) = (text(&clash.supporter), text(&clash.attacker));
    let request = BackendRequest::new(
        Purpose::Adjudicate,
        prompts::adjudicate(&task.claim, &task.context.render(), &sup, &att),
        prompts::ADJUDICATE_SCHEMA,
        json!({
            "supporter": {"id": clash.supporter, "text": sup},
            "attacker": {"id": clash.attacker, "text": att},
        }),
    );
    let response = backend.complete(&request)?;
    let tie = |why: String| {
        warn!(supporter = %clash.supporter, attacker = %clash.attacker, "{why}; recording a tie");
        ClashOutcome {
            clash: clash.clone(),
            winner: Winner::Tie,
            rationale: why,
            degraded: true,
        }
    };
    let reply: AdjudicateReply = match response.parse() {
        Ok(r) => r,
        Err(e) => return Ok(tie(format!("unreadable verdict: {e}"))),
    };
    let winner = match reply.winner.trim().to_ascii_lowercase().as_str() {
        "supporter" | "support" => Winner::Supporter,
        "attacker" | "attack" => Winner::Attacker,
        "tie" => Winner::Tie,
        other => return Ok(tie(format!("unknown winner `{other}`"))),
    };
    Ok(ClashOutcome {
        clash: clash.clone(),
        winner,
        rationale: reply.rationale,
        degraded: false,
    })
}

/// `(wins + ties/2) / participations` for one argument.
pub fn win_rate(id: &NodeId, outcomes: &[ClashOutcome]) -> Result<f64, ArenaError> {
    let credits: Vec<f64> = outcomes.iter().filter_map(|o| o.credit(id)).collect();
    if credits.is_empty() {
        return Err(ArenaError::NoParticipation(id.clone()));
    }
    Ok(credits.iter().sum::<f64>() / credits.len() as f64)
}

/// `clamp(tau + beta * (2w - 1), 0.1, 1.0)`. A win rate of exactly one half
/// leaves `tau` untouched.
pub fn adjust_strength(tau: f64, win_rate: f64, beta: f64) -> f64 {
    let delta = beta * (2.0 * win_rate - 1.0);
    if delta == 0.0 {
        return tau.clamp(SCORE_FLOOR, SCORE_CEILING);
    }
    let scale = 10f64.powi(SCORE_DECIMALS);
    let moved = ((tau + delta) * scale).round() / scale;
    moved.clamp(SCORE_FLOOR, SCORE_CEILING)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adjustment {
    pub id: NodeId,
    pub clashes: usize,
    pub win_rate: f64,
    pub before: f64,
    pub after: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ArenaReport {
    pub outcomes: Vec<ClashOutcome>,
    pub adjustments: Vec<Adjustment>,
    pub warnings: Vec<String>,
}

/// One arena round: detect, adjudicate (concurrently), then move every
/// participant once by its aggregate win rate. Failed adjudications count as
/// ties; the round itself only fails on bad parameters.
pub fn apply_clash_resolution(
    arguments: &[Argument],
    task: &LegalTask,
    params: &ArenaParams,
    backend: &dyn TextModelBackend,
) -> Result<(Vec<Argument>, ArenaReport), ArenaError> {
    params.check()?;
    let clashes = detect_clashes(arguments, params.delta);
    let outcomes: Vec<ClashOutcome> = clashes
        .par_iter()
        .map(|c| {
            adjudicate(c, arguments, task, backend).unwrap_or_else(|e| {
                warn!(supporter = %c.supporter, attacker = %c.attacker, error = %e, "adjudication failed");
                ClashOutcome {
                    clash: c.clone(),
                    winner: Winner::Tie,
                    rationale: format!("adjudication failed: {e}"),
                    degraded: true,
                }
            })
        })
        .collect();

    let mut report = ArenaReport::default();
    for o in outcomes.iter().filter(|o| o.degraded) {
        report.warnings.push(format!(
            "clash {} vs {}: {}",
            o.clash.supporter, o.clash.attacker, o.rationale
        ));
    }

    let mut participation: BTreeMap<&NodeId, usize> = BTreeMap::new();
    for o in &outcomes {
        *participation.entry(&o.clash.supporter).or_default() += 1;
        *participation.entry(&o.clash.attacker).or_default() += 1;
    }

    let mut adjusted = arguments.to_vec();
    for a in adjusted.iter_mut() {
        let Some(&n) = participation.get(&a.id) else {
            continue;
        };
        let w = win_rate(&a.id, &outcomes)?;
        let after = adjust_strength(a.base_strength, w, params.beta);
        report.adjustments.push(Adjustment {
            id: a.id.clone(),
            clashes: n,
            win_rate: w,
            before: a.base_strength,
            after,
        });
        a.base_strength = after;
    }
    report.outcomes = outcomes;
    Ok((adjusted, report))
}
