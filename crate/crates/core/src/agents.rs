//! Legal agent pool, adaptive team selection, argument generation and
//! rubric scoring.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;
use tracing::warn;

use crate::backend::{BackendError, BackendRequest, Purpose, TextModelBackend};
use crate::prompts;
use crate::qbaf::{Argument, NodeId, Stance};
use crate::retrieval::EvidenceContext;

/// Most arguments accepted from one agent.
pub const MAX_ARGUMENTS_PER_AGENT: usize = 5;
pub const SCORE_FLOOR: f64 = 0.1;
pub const SCORE_CEILING: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentCategory {
    Adjudication,
    LitigationAdvocacy,
    AdvisoryTransactional,
    ResearchSupport,
}

impl AgentCategory {
    pub fn label(self) -> &'static str {
        match self {
            AgentCategory::Adjudication => "Adjudication",
            AgentCategory::LitigationAdvocacy => "Litigation & Advocacy",
            AgentCategory::AdvisoryTransactional => "Advisory & Transactional",
            AgentCategory::ResearchSupport => "Research & Support",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentProfile {
    pub role: String,
    pub category: AgentCategory,
    pub expertise_areas: Vec<String>,
    pub focus_priorities: Vec<String>,
    pub argument_style: String,
}

impl AgentProfile {
    fn render(&self) -> String {
        format!(
            "- {} ({}): expertise {}; priorities {}; style: {}",
            self.role,
            self.category.label(),
            self.expertise_areas.join(", "),
            self.focus_priorities.join(" > "),
            self.argument_style
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentPool {
    profiles: Vec<AgentProfile>,
}

#[derive(Debug, Error, PartialEq)]
pub enum AgentError {
    #[error("agent pool is empty")]
    EmptyPool,
    #[error("duplicate role `{0}` in pool")]
    DuplicateRole(String),
    #[error("role `{0}` has no expertise areas")]
    NoExpertise(String),
    #[error("selector returned roles outside the pool: {}", .0.join(", "))]
    UnknownRoles(Vec<String>),
    #[error("{role} produced no usable arguments: {detail}")]
    Generation { role: String, detail: String },
    #[error("argument `{id}` could not be scored: {detail}")]
    Scoring { id: NodeId, detail: String },
    #[error("argument `{0}` has empty text")]
    EmptyText(NodeId),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

impl AgentError {
    pub fn is_fatal(&self) -> bool {
        match self {
            AgentError::Backend(e) => e.is_fatal(),
            AgentError::Generation { .. } | AgentError::Scoring { .. } => false,
            _ => true,
        }
    }
}

impl AgentPool {
    pub fn new(profiles: Vec<AgentProfile>) -> Result<Self, AgentError> {
        if profiles.is_empty() {
            return Err(AgentError::EmptyPool);
        }
        let mut roles = BTreeSet::new();
        for p in &profiles {
            if !roles.insert(p.role.as_str()) {
                return Err(AgentError::DuplicateRole(p.role.clone()));
            }
            if p.expertise_areas.is_empty() {
                return Err(AgentError::NoExpertise(p.role.clone()));
            }
        }
        Ok(AgentPool { profiles })
    }

    pub fn profiles(&self) -> &[AgentProfile] {
        &self.profiles
    }

    pub fn get(&self, role: &str) -> Option<&AgentProfile> {
        self.profiles.iter().find(|p| p.role == role)
    }

    pub fn by_category(&self, category: AgentCategory) -> Vec<&AgentProfile> {
        self.profiles.iter().filter(|p| p.category == category).collect()
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }
}

fn profile(
    role: &str,
    category: AgentCategory,
    expertise: &[&str],
    priorities: &[&str],
    style: &str,
) -> AgentProfile {
    AgentProfile {
        role: role.to_string(),
        category,
        expertise_areas: expertise.iter().map(|s| s.to_string()).collect(),
        focus_priorities: priorities.iter().map(|s| s.to_string()).collect(),
        argument_style: style.to_string(),
    }
}

/// The ten standard legal roles, grouped by functional category.
pub fn default_pool() -> AgentPool {
    use AgentCategory::*;
    AgentPool::new(vec![
        profile(
            "Judge",
            Adjudication,
            &["evidence law", "procedure", "statutory interpretation", "precedent"],
            &["apply the correct legal test", "weigh both sides", "consistency with precedent"],
            "neutral, test-driven reasoning that states the rule and applies it element by element",
        ),
        profile(
            "Law Clerk / Judicial Clerk",
            Adjudication,
            &["legal research", "case law synthesis", "evidence rules"],
            &["accurate statement of the rule", "relevant authority", "gaps in the record"],
            "memo-style analysis citing controlling authority",
        ),
        profile(
            "Private Practice Lawyer",
            LitigationAdvocacy,
            &["civil litigation", "contracts", "torts", "client counseling"],
            &["client-favourable framing", "factual support", "practical outcome"],
            "persuasive advocacy anchored in the facts of the record",
        ),
        profile(
            "Prosecutor",
            LitigationAdvocacy,
            &["criminal law", "evidence law", "burden of proof"],
            &["elements of the offence", "admissibility", "public interest"],
            "adversarial, element-by-element argument",
        ),
        profile(
            "Public Defender",
            LitigationAdvocacy,
            &["criminal defense", "constitutional rights", "evidence exclusion"],
            &["procedural fairness", "reasonable doubt", "exceptions and defenses"],
            "rights-focused argument that probes weaknesses in the opposing case",
        ),
        profile(
            "Corporate Counsel",
            AdvisoryTransactional,
            &["corporate law", "commercial contracts", "employment law"],
            &["risk exposure", "contractual allocation", "regulatory posture"],
            "risk-oriented, pragmatic advisory reasoning",
        ),
        profile(
            "Compliance Officer",
            AdvisoryTransactional,
            &["regulatory compliance", "consumer protection", "administrative law"],
            &["regulatory requirements", "reporting obligations", "policy alignment"],
            "checklist-driven analysis against regulatory requirements",
        ),
        profile(
            "IP Attorney",
            AdvisoryTransactional,
            &["patents", "copyright", "trademarks", "licensing"],
            &["ownership and scope of rights", "infringement elements", "defenses"],
            "technical, claim-by-claim comparison",
        ),
        profile(
            "Legal Analyst",
            ResearchSupport,
            &["legal research", "doctrinal analysis", "classification of legal issues"],
            &["correct categorisation", "doctrinal precision", "edge cases"],
            "structured, definition-first analysis",
        ),
        profile(
            "Paralegal",
            ResearchSupport,
            &["fact gathering", "document review", "court procedure"],
            &["factual accuracy", "procedural posture", "completeness of the record"],
            "fact-centred summaries tied to specific documents",
        ),
    ])
    .expect("default pool is well-formed")
}

/// Roles used when the selector names nobody for a side.
pub fn fallback_roles(stance: Stance) -> [&'static str; 2] {
    match stance {
        Stance::Support => ["Legal Analyst", "Private Practice Lawyer"],
        Stance::Attack => ["Legal Analyst", "Prosecutor"],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LegalTask {
    pub task_id: String,
    pub claim: String,
    pub context: EvidenceContext,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl LegalTask {
    pub fn new(task_id: impl Into<String>, claim: impl Into<String>, context: EvidenceContext) -> Self {
        LegalTask {
            task_id: task_id.into(),
            claim: claim.into(),
            context,
            metadata: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Team {
    pub stance: Stance,
    pub members: Vec<AgentProfile>,
    pub used_fallback: bool,
}

impl Team {
    pub fn roles(&self) -> Vec<&str> {
        self.members.iter().map(|m| m.role.as_str()).collect()
    }
}

#[derive(Deserialize)]
struct SelectReply {
    roles: Vec<String>,
}

/// Asks the backend which agents should argue `stance`. The result is sorted
/// by role name and never empty.
pub fn select_team(
    pool: &AgentPool,
    task: &LegalTask,
    stance: Stance,
    backend: &dyn TextModelBackend,
) -> Result<Team, AgentError> {
    if pool.is_empty() {
        return Err(AgentError::EmptyPool);
    }
    let rendered: Vec<String> = pool.profiles().iter().map(AgentProfile::render).collect();
    let request = BackendRequest::new(
        Purpose::Select,
        prompts::select(stance.as_str(), &task.claim, &task.context.render(), &rendered.join("\n")),
        prompts::SELECT_SCHEMA,
        json!({
            "stance": stance,
            "claim": task.claim,
            "roles": pool.profiles().iter().map(|p| &p.role).collect::<Vec<_>>(),
        }),
    );
    let reply: SelectReply = backend.complete(&request)?.parse()?;

    let unknown: Vec<String> = reply
        .roles
        .iter()
        .filter(|r| pool.get(r).is_none())
        .cloned()
        .collect();
    if !unknown.is_empty() {
        return Err(AgentError::UnknownRoles(unknown));
    }

    let mut names: BTreeSet<String> = reply.roles.into_iter().collect();
    let used_fallback = names.is_empty();
    if used_fallback {
        names = fallback_roles(stance)
            .iter()
            .filter(|r| pool.get(r).is_some())
            .map(|r| r.to_string())
            .collect();
        if names.is_empty() {
            names.insert(pool.profiles()[0].role.clone());
        }
        warn!(%stance, "selector returned no agents; using fallback team");
    }
    Ok(Team {
        stance,
        members: names.iter().filter_map(|n| pool.get(n).cloned()).collect(),
        used_fallback,
    })
}

/// An argument before it has been scored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArgumentDraft {
    pub id: NodeId,
    pub text: String,
    pub stance: Stance,
    pub author_role: String,
    pub evidence_refs: Vec<String>,
}

impl ArgumentDraft {
    pub fn into_argument(self, base_strength: f64) -> Argument {
        Argument {
            id: self.id,
            text: self.text,
            stance: self.stance,
            author_role: self.author_role,
            evidence_refs: self.evidence_refs,
            base_strength,
        }
    }
}

pub fn role_slug(role: &str) -> String {
    let mut slug = String::new();
    for c in role.chars() {
        if c.is_ascii_alphanumeric() {
            slug.push(c.to_ascii_lowercase());
        } else if !slug.ends_with('-') && !slug.is_empty() {
            slug.push('-');
        }
    }
    slug.trim_end_matches('-').to_string()
}

/// Id of the `index`-th (1-based) argument an agent makes for a stance.
pub fn argument_id(stance: Stance, role: &str, index: usize) -> NodeId {
    let prefix = match stance {
        Stance::Support => "s",
        Stance::Attack => "a",
    };
    NodeId::new(format!("{prefix}-{}-{index}", role_slug(role)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generated {
    pub role: String,
    pub arguments: Vec<ArgumentDraft>,
    pub warnings: Vec<String>,
}

#[derive(Deserialize)]
struct GenerateReply {
    arguments: Vec<serde_json::Value>,
}

#[derive(Deserialize)]
struct GeneratedItem {
    text: String,
    #[serde(default)]
    evidence_refs: Vec<String>,
}

/// Has one agent write arguments for `stance`. Keeps at most five, in the
/// order the backend produced them.
pub fn generate_arguments(
    agent: &AgentProfile,
    task: &LegalTask,
    stance: Stance,
    backend: &dyn TextModelBackend,
) -> Result<Generated, AgentError> {
    let request = BackendRequest::new(
        Purpose::Generate,
        prompts::generate(
            &agent.role,
            &agent.expertise_areas.join(", "),
            &agent.focus_priorities.join(" > "),
            &agent.argument_style,
            stance.as_str(),
            &task.claim,
            &task.context.render(),
        ),
        prompts::GENERATE_SCHEMA,
        json!({
            "role": agent.role,
            "stance": stance,
            "claim": task.claim,
            "passage_ids": task.context.ids(),
        }),
    );
    let response = backend.complete(&request)?;
    let reply: GenerateReply = response.parse().map_err(|e| match e {
        BackendError::Schema { detail, .. } => AgentError::Generation {
            role: agent.role.clone(),
            detail,
        },
        other => AgentError::Backend(other),
    })?;

    let mut warnings = Vec::new();
    let mut items: Vec<GeneratedItem> = Vec::new();
    for (i, raw) in reply.arguments.into_iter().enumerate() {
        match serde_json::from_value::<GeneratedItem>(raw) {
            Ok(item) if !item.text.trim().is_empty() => items.push(item),
            Ok(_) => warnings.push(format!("{}: argument #{} has empty text, skipped", agent.role, i + 1)),
            Err(e) => warnings.push(format!("{}: argument #{} malformed ({e}), skipped", agent.role, i + 1)),
        }
    }
    if items.is_empty() {
        return Err(AgentError::Generation {
            role: agent.role.clone(),
            detail: "no parseable arguments".into(),
        });
    }
    if items.len() > MAX_ARGUMENTS_PER_AGENT {
        let msg = format!(
            "{} produced {} arguments; keeping the first {MAX_ARGUMENTS_PER_AGENT}",
            agent.role,
            items.len()
        );
        warn!("{msg}");
        warnings.push(msg);
        items.truncate(MAX_ARGUMENTS_PER_AGENT);
    }

    let known = task.context.ids();
    let arguments = items
        .into_iter()
        .enumerate()
        .map(|(i, item)| {
            let mut refs = Vec::new();
            for r in item.evidence_refs {
                if known.contains(&r.as_str()) {
                    if !refs.contains(&r) {
                        refs.push(r);
                    }
                } else {
                    warnings.push(format!("{}: dropped unknown evidence ref `{r}`", agent.role));
                }
            }
            ArgumentDraft {
                id: argument_id(stance, &agent.role, i + 1),
                text: item.text.trim().to_string(),
                stance,
                author_role: agent.role.clone(),
                evidence_refs: refs,
            }
        })
        .collect();

    Ok(Generated {
        role: agent.role.clone(),
        arguments,
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub value: f64,
    pub raw: f64,
    pub clamped: bool,
}

#[derive(Deserialize)]
struct ScoreReply {
    score: serde_json::Value,
}

/// Rubric score for one argument, clamped into `[0.1, 1.0]`.
pub fn score_argument(
    argument: &ArgumentDraft,
    task: &LegalTask,
    backend: &dyn TextModelBackend,
) -> Result<Score, AgentError> {
    if argument.text.trim().is_empty() {
        return Err(AgentError::EmptyText(argument.id.clone()));
    }
    let request = BackendRequest::new(
        Purpose::Score,
        prompts::score(
            &task.claim,
            argument.stance.as_str(),
            &argument.text,
            &task.context.render(),
        ),
        prompts::SCORE_SCHEMA,
        json!({ "text": argument.text, "stance": argument.stance }),
    );
    let scoring_error = |detail: String| AgentError::Scoring {
        id: argument.id.clone(),
        detail,
    };
    let reply: ScoreReply = backend.complete(&request)?.parse().map_err(|e| match e {
        BackendError::Schema { detail, .. } => scoring_error(detail),
        other => AgentError::Backend(other),
    })?;
    let raw = match &reply.score {
        serde_json::Value::Number(n) => n.as_f64(),
        serde_json::Value::String(s) => s.trim().parse::<f64>().ok(),
        _ => None,
    }
    .filter(|v| v.is_finite())
    .ok_or_else(|| scoring_error(format!("non-numeric score {}", reply.score)))?;

    let value = raw.clamp(SCORE_FLOOR, SCORE_CEILING);
    let clamped = value != raw;
    if clamped {
        warn!(id = %argument.id, raw, value, "score outside rubric range clamped");
    }
    Ok(Score { value, raw, clamped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::ScriptedBackend;
    use crate::retrieval::{EvidencePassage, Provenance};
    use serde_json::json;

    fn task() -> LegalTask {
        let ctx = EvidenceContext {
            passages: vec![EvidencePassage {
                passage_id: "fre#0".into(),
                document_id: "fre".into(),
                offset: 0,
                text: "hearsay means a statement offered for its truth".into(),
                score: 0.4,
                provenance: Provenance::Corpus,
            }],
        };
        LegalTask::new("hearsay", "The statement is hearsay.", ctx)
    }

    #[test]
    fn default_pool_matches_role_table() {
        let pool = default_pool();
        assert_eq!(pool.len(), 10);
        let adj: Vec<_> = pool
            .by_category(AgentCategory::Adjudication)
            .iter()
            .map(|p| p.role.as_str())
            .collect();
        assert_eq!(adj, vec!["Judge", "Law Clerk / Judicial Clerk"]);
        let expect = [
            (AgentCategory::LitigationAdvocacy, vec!["Private Practice Lawyer", "Prosecutor", "Public Defender"]),
            (AgentCategory::AdvisoryTransactional, vec!["Corporate Counsel", "Compliance Officer", "IP Attorney"]),
            (AgentCategory::ResearchSupport, vec!["Legal Analyst", "Paralegal"]),
        ];
        for (cat, roles) in expect {
            let got: Vec<_> = pool.by_category(cat).iter().map(|p| p.role.as_str()).collect();
            assert_eq!(got, roles);
        }
        let unique: BTreeSet<_> = pool.profiles().iter().map(|p| &p.role).collect();
        assert_eq!(unique.len(), 10);
        for p in pool.profiles() {
            assert!(!p.expertise_areas.is_empty());
            assert!(!p.focus_priorities.is_empty());
            assert!(!p.argument_style.is_empty());
        }
    }

    #[test]
    fn select_team_echoes_sorted() {
        let b = ScriptedBackend::new().on(Purpose::Select, json!({"roles": ["Prosecutor", "Legal Analyst"]}));
        let team = select_team(&default_pool(), &task(), Stance::Attack, &b).unwrap();
        assert_eq!(team.roles(), vec!["Legal Analyst", "Prosecutor"]);
        assert!(!team.used_fallback);
        assert!(b.requests()[0].prompt.contains("attack"));
    }

    #[test]
    fn select_team_rejects_unknown_roles() {
        let b = ScriptedBackend::new().on(Purpose::Select, json!({"roles": ["Notary", "Judge"]}));
        let err = select_team(&default_pool(), &task(), Stance::Support, &b).unwrap_err();
        assert_eq!(err, AgentError::UnknownRoles(vec!["Notary".into()]));
    }

    #[test]
    fn empty_selection_falls_back() {
        let b = ScriptedBackend::new().on(Purpose::Select, json!({"roles": []}));
        let sup = select_team(&default_pool(), &task(), Stance::Support, &b).unwrap();
        assert!(sup.used_fallback);
        assert_eq!(sup.roles(), vec!["Legal Analyst", "Private Practice Lawyer"]);
        let att = select_team(&default_pool(), &task(), Stance::Attack, &b).unwrap();
        assert_eq!(att.roles(), vec!["Legal Analyst", "Prosecutor"]);
    }

    fn canned(n: usize) -> serde_json::Value {
        let args: Vec<_> = (1..=n)
            .map(|i| json!({"text": format!("point {i}"), "evidence_refs": ["fre#0", "bogus#9"]}))
            .collect();
        json!({ "arguments": args })
    }

    #[test]
    fn generation_stamps_stance_and_author() {
        let pool = default_pool();
        let agent = pool.get("Prosecutor").unwrap();
        let b = ScriptedBackend::new().on(Purpose::Generate, canned(3));
        let g = generate_arguments(agent, &task(), Stance::Attack, &b).unwrap();
        assert_eq!(g.arguments.len(), 3);
        for (i, a) in g.arguments.iter().enumerate() {
            assert_eq!(a.stance, Stance::Attack);
            assert_eq!(a.author_role, "Prosecutor");
            assert_eq!(a.evidence_refs, vec!["fre#0".to_string()]);
            assert_eq!(a.id.as_str(), format!("a-prosecutor-{}", i + 1));
        }
        assert!(g.warnings.iter().any(|w| w.contains("bogus#9")));
    }

    #[test]
    fn generation_caps_at_five() {
        let pool = default_pool();
        let b = ScriptedBackend::new().on(Purpose::Generate, canned(6));
        let g = generate_arguments(pool.get("Judge").unwrap(), &task(), Stance::Support, &b).unwrap();
        assert_eq!(g.arguments.len(), 5);
        assert_eq!(g.arguments[4].text, "point 5");
        assert!(g.warnings.iter().any(|w| w.contains("keeping the first 5")));
    }

    #[test]
    fn malformed_generation_is_an_error() {
        let pool = default_pool();
        let b = ScriptedBackend::new().on_raw(Purpose::Generate, "I think the claim is true.");
        let err = generate_arguments(pool.get("Judge").unwrap(), &task(), Stance::Support, &b).unwrap_err();
        assert!(matches!(err, AgentError::Generation { .. }));
        assert!(!err.is_fatal());
    }

    fn draft() -> ArgumentDraft {
        ArgumentDraft {
            id: "s-judge-1".into(),
            text: "The declarant spoke out of court.".into(),
            stance: Stance::Support,
            author_role: "Judge".into(),
            evidence_refs: vec![],
        }
    }

    #[test]
    fn scoring_passes_through_and_clamps() {
        let b = ScriptedBackend::new().on(Purpose::Score, json!({"score": 0.75}));
        let s = score_argument(&draft(), &task(), &b).unwrap();
        assert_eq!(s.value, 0.75);
        assert!(!s.clamped);
        assert!(b.requests()[0].prompt.contains(prompts::SCORING_RUBRIC));

        let low = ScriptedBackend::new().on(Purpose::Score, json!({"score": 0.05}));
        let s = score_argument(&draft(), &task(), &low).unwrap();
        assert_eq!(s.value, 0.1);
        assert!(s.clamped);

        let high = ScriptedBackend::new().on(Purpose::Score, json!({"score": 1.4}));
        assert_eq!(score_argument(&draft(), &task(), &high).unwrap().value, 1.0);
    }

    #[test]
    fn non_numeric_score_is_rejected() {
        let b = ScriptedBackend::new().on(Purpose::Score, json!({"score": "strong"}));
        let err = score_argument(&draft(), &task(), &b).unwrap_err();
        assert!(matches!(err, AgentError::Scoring { .. }));
    }

    #[test]
    fn slugs() {
        assert_eq!(role_slug("Law Clerk / Judicial Clerk"), "law-clerk-judicial-clerk");
        assert_eq!(role_slug("IP Attorney"), "ip-attorney");
    }
}
