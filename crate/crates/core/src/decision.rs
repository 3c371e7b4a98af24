//! Threshold decision with uncertainty-aware escalation to a final judge.

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;
use tracing::warn;

use crate::agents::LegalTask;
use crate::backend::{BackendRequest, Purpose, TextModelBackend};
use crate::prompts;
use crate::qbaf::{QbafGraph, Stance, StrengthMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Answer {
    Yes,
    No,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecidedBy {
    Threshold,
    FinalJudge,
}

impl std::fmt::Display for Answer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Answer::Yes => "yes",
            Answer::No => "no",
        })
    }
}

impl std::fmt::Display for DecidedBy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DecidedBy::Threshold => "threshold",
            DecidedBy::FinalJudge => "final_judge",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub answer: Answer,
    pub claim_strength: f64,
    pub escalated: bool,
    pub judge_rationale: Option<String>,
    pub decided_by: DecidedBy,
}

/// Closed interval of claim strengths that triggers escalation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EscalationBand {
    pub low: f64,
    pub high: f64,
}

impl EscalationBand {
    pub fn contains(&self, strength: f64) -> bool {
        self.low <= strength && strength <= self.high
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionParams {
    pub threshold: f64,
    pub band: EscalationBand,
    pub uae_enabled: bool,
}

impl Default for DecisionParams {
    fn default() -> Self {
        DecisionParams {
            threshold: 0.5,
            band: EscalationBand {
                low: 0.49,
                high: 0.51,
            },
            uae_enabled: true,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum DecisionError {
    #[error("claim strength {0} outside [0, 1]")]
    StrengthOutOfRange(f64),
    #[error("invalid decision parameters: {0}")]
    BadParams(String),
}

impl DecisionParams {
    pub fn check(&self) -> Result<(), DecisionError> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(DecisionError::BadParams(format!(
                "threshold {} outside (0, 1)",
                self.threshold
            )));
        }
        let b = self.band;
        if !(0.0 <= b.low && b.low <= b.high && b.high <= 1.0) {
            return Err(DecisionError::BadParams(format!(
                "escalation band [{}, {}] not inside [0, 1]",
                b.low, b.high
            )));
        }
        Ok(())
    }
}

pub fn threshold_answer(strength: f64, threshold: f64) -> Answer {
    if strength >= threshold {
        Answer::Yes
    } else {
        Answer::No
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionOutcome {
    pub decision: Decision,
    pub warnings: Vec<String>,
}

#[derive(Deserialize)]
struct JudgeReply {
    answer: String,
    #[serde(default)]
    rationale: String,
}

fn parse_answer(s: &str) -> Option<Answer> {
    match s.trim().to_ascii_lowercase().as_str() {
        "yes" | "true" => Some(Answer::Yes),
        "no" | "false" => Some(Answer::No),
        _ => None,
    }
}

/// Maps a claim strength to an answer. Inside the escalation band (with
/// escalation on) the final judge's answer is binding; if the judge cannot
/// answer, the threshold rule applies and a warning is returned.
pub fn decide(
    strength: f64,
    params: &DecisionParams,
    task: &LegalTask,
    brief: &str,
    backend: &dyn TextModelBackend,
) -> Result<DecisionOutcome, DecisionError> {
    if !(0.0..=1.0).contains(&strength) {
        return Err(DecisionError::StrengthOutOfRange(strength));
    }
    params.check()?;
    let by_threshold = Decision {
        answer: threshold_answer(strength, params.threshold),
        claim_strength: strength,
        escalated: false,
        judge_rationale: None,
        decided_by: DecidedBy::Threshold,
    };
    if !(params.uae_enabled && params.band.contains(strength)) {
        return Ok(DecisionOutcome {
            decision: by_threshold,
            warnings: vec![],
        });
    }

    let request = BackendRequest::new(
        Purpose::Judge,
        prompts::judge(&task.claim, &task.context.render(), strength, brief),
        prompts::JUDGE_SCHEMA,
        json!({ "claim": task.claim, "strength": strength }),
    );
    let verdict = backend
        .complete(&request)
        .map_err(|e| e.to_string())
        .and_then(|r| r.parse::<JudgeReply>().map_err(|e| e.to_string()))
        .and_then(|r| {
            parse_answer(&r.answer)
                .map(|a| (a, r.rationale))
                .ok_or_else(|| format!("judge answered `{}`", r.answer))
        });
    match verdict {
        Ok((answer, rationale)) => Ok(DecisionOutcome {
            decision: Decision {
                answer,
                claim_strength: strength,
                escalated: true,
                judge_rationale: Some(rationale),
                decided_by: DecidedBy::FinalJudge,
            },
            warnings: vec![],
        }),
        Err(why) => {
            warn!(strength, "final judge unavailable ({why}); using threshold rule");
            Ok(DecisionOutcome {
                decision: by_threshold,
                warnings: vec![format!("final judge failed, threshold rule applied: {why}")],
            })
        }
    }
}

/// Short textual summary of the strongest arguments on each side, for the
/// judge prompt.
pub fn judge_brief(graph: &QbafGraph, strengths: &StrengthMap, per_side: usize) -> String {
    let mut lines = Vec::new();
    for stance in [Stance::Support, Stance::Attack] {
        let mut side: Vec<(f64, &str, &str)> = graph
            .arguments()
            .iter()
            .filter(|a| a.stance == stance)
            .map(|a| (strengths.get(&a.id).unwrap_or(a.base_strength), a.id.as_str(), a.text.as_str()))
            .collect();
        side.sort_by(|x, y| y.0.total_cmp(&x.0).then_with(|| x.1.cmp(y.1)));
        if side.is_empty() {
            lines.push(format!("{stance}: none"));
            continue;
        }
        for (s, id, text) in side.into_iter().take(per_side) {
            lines.push(format!("{stance} [{id}] (strength {s:.3}): {text}"));
        }
    }
    lines.join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{BackendError, ScriptedBackend};
    use crate::retrieval::EvidenceContext;
    use serde_json::json;

    fn task() -> LegalTask {
        LegalTask::new("t", "claim", EvidenceContext::default())
    }

    fn judge_says(answer: &str) -> ScriptedBackend {
        ScriptedBackend::new().on(Purpose::Judge, json!({"answer": answer, "rationale": "because"}))
    }

    #[test]
    fn outside_band_uses_threshold() {
        let b = judge_says("no");
        let p = DecisionParams::default();
        let d = decide(0.52, &p, &task(), "", &b).unwrap().decision;
        assert_eq!((d.answer, d.decided_by, d.escalated), (Answer::Yes, DecidedBy::Threshold, false));
        let d = decide(0.489, &p, &task(), "", &b).unwrap().decision;
        assert_eq!((d.answer, d.decided_by), (Answer::No, DecidedBy::Threshold));
        assert_eq!(b.calls(), 0);
    }

    #[test]
    fn inside_band_judge_is_binding() {
        let b = judge_says("no");
        let d = decide(0.50, &DecisionParams::default(), &task(), "", &b).unwrap().decision;
        assert_eq!(d.answer, Answer::No);
        assert_eq!(d.decided_by, DecidedBy::FinalJudge);
        assert!(d.escalated);
        assert_eq!(d.judge_rationale.as_deref(), Some("because"));
        for s in [0.49, 0.51] {
            let d = decide(s, &DecisionParams::default(), &task(), "", &judge_says("yes")).unwrap().decision;
            assert_eq!(d.decided_by, DecidedBy::FinalJudge);
        }
    }

    #[test]
    fn disabled_escalation_never_calls_judge() {
        let b = judge_says("no");
        let p = DecisionParams {
            uae_enabled: false,
            ..DecisionParams::default()
        };
        let d = decide(0.5, &p, &task(), "", &b).unwrap().decision;
        assert_eq!((d.answer, d.decided_by), (Answer::Yes, DecidedBy::Threshold));
        assert_eq!(b.calls(), 0);
    }

    #[test]
    fn judge_failure_falls_back() {
        let b = ScriptedBackend::new().on_fail(Purpose::Judge, BackendError::Transport("down".into()));
        let out = decide(0.495, &DecisionParams::default(), &task(), "", &b).unwrap();
        assert_eq!(out.decision.decided_by, DecidedBy::Threshold);
        assert!(!out.decision.escalated);
        assert_eq!(out.decision.answer, Answer::No);
        assert_eq!(out.warnings.len(), 1);

        let b = judge_says("perhaps");
        let out = decide(0.5, &DecisionParams::default(), &task(), "", &b).unwrap();
        assert_eq!(out.decision.decided_by, DecidedBy::Threshold);
    }

    #[test]
    fn rejects_out_of_range_strength() {
        let b = judge_says("yes");
        assert!(decide(1.2, &DecisionParams::default(), &task(), "", &b).is_err());
    }
}
