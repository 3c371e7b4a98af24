//! Prompt templates for every backend purpose.
//!
//! Changing any template changes request digests and therefore invalidates
//! recorded fixtures; bump [`PROMPT_VERSION`] when that happens.

pub const PROMPT_VERSION: &str = "acal-prompts/1";

/// Argument strength rubric, embedded verbatim in scoring prompts.
pub const SCORING_RUBRIC: &str = "\
Score Range | Interpretation
0.1 - 0.2 | Incorrect legal analysis or misidentification of key elements
0.3 - 0.4 | Partially correct but missing critical components or overly generic
0.5 - 0.6 | Sound analysis with minor gaps or insufficient case-specific application
0.7 - 0.8 | Strong analysis with specific facts and correct legal reasoning
0.9 - 1.0 | Exceptional precision with authoritative citations and flawless logic";

pub const SELECT_SCHEMA: &str = r#"{"roles": [string, ...]}"#;
pub const GENERATE_SCHEMA: &str =
    r#"{"arguments": [{"text": string, "evidence_refs": [passage id, ...]}, ...]}"#;
pub const SCORE_SCHEMA: &str = r#"{"score": number between 0.1 and 1.0}"#;
pub const RELATE_SCHEMA: &str = r#"{"verdicts": [{"first": argument id, "second": argument id, "label": "attack" | "support" | "neutral", "confidence": number in [0, 1]}, ...]}"#;
pub const ADJUDICATE_SCHEMA: &str =
    r#"{"winner": "supporter" | "attacker", "rationale": string}"#;
pub const JUDGE_SCHEMA: &str = r#"{"answer": "yes" | "no", "rationale": string}"#;
pub const CONTEST_SCHEMA: &str = r#"{"proposals": [{"action": "edit_text" | "add_argument" | "set_strength", "target": argument id (edit_text, set_strength), "stance": "support" | "attack" (add_argument), "text": string, "base_strength": number (add_argument, set_strength), "evidence_refs": [passage id, ...], "rationale": string}, ...]}"#;

pub fn select(stance: &str, claim: &str, context: &str, profiles: &str) -> String {
    format!(
        "[{PROMPT_VERSION}] Team selection\n\
         You assemble a team of legal professionals for one side of a case.\n\
         Side: {stance} the claim.\n\
         Claim: {claim}\n\n\
         Evidence:\n{context}\n\n\
         Available agents:\n{profiles}\n\n\
         Choose the agents whose expertise best fits the facts and legal issues of this case \
         for building {stance} arguments. Use role names exactly as listed."
    )
}

pub fn generate(
    role: &str,
    expertise: &str,
    priorities: &str,
    style: &str,
    stance: &str,
    claim: &str,
    context: &str,
) -> String {
    let goal = if stance == "support" {
        "show that the claim is TRUE"
    } else {
        "show that the claim is FALSE"
    };
    format!(
        "[{PROMPT_VERSION}] Argument generation\n\
         You are a {role}.\n\
         Expertise: {expertise}\n\
         Priorities: {priorities}\n\
         Argument style: {style}\n\n\
         Claim: {claim}\n\n\
         Evidence:\n{context}\n\n\
         Write between 2 and 5 distinct arguments that {goal} ({stance}). Decide how many from \
         the available evidence and the complexity of the case. Cite evidence passages by id."
    )
}

pub fn score(claim: &str, stance: &str, argument: &str, context: &str) -> String {
    format!(
        "[{PROMPT_VERSION}] Argument scoring\n\
         Rate the intrinsic strength of one argument about a legal claim.\n\
         Claim: {claim}\n\
         Argument ({stance}): {argument}\n\n\
         Evidence:\n{context}\n\n\
         Rubric:\n{SCORING_RUBRIC}\n\n\
         Differentiate strictly. Penalize generic statements; reward case-specific legal precision."
    )
}

pub fn relate(claim: &str, pairs: &str) -> String {
    format!(
        "[{PROMPT_VERSION}] Relation identification\n\
         Claim under discussion: {claim}\n\n\
         For each pair of arguments below decide whether the first and second argument attack \
         each other, support each other, or are neutral (they address different legal aspects). \
         Give a confidence between 0 and 1 for each verdict.\n\n{pairs}"
    )
}

pub fn adjudicate(claim: &str, context: &str, supporter: &str, attacker: &str) -> String {
    format!(
        "[{PROMPT_VERSION}] Clash adjudication\n\
         You are a legal reasoning expert. Two arguments about the claim below received nearly \
         equal strength scores. Decide which one is stronger given the case-specific facts and \
         the governing legal standards.\n\
         Claim: {claim}\n\n\
         Evidence:\n{context}\n\n\
         Supporter: {supporter}\n\
         Attacker: {attacker}"
    )
}

pub fn judge(claim: &str, context: &str, strength: f64, brief: &str) -> String {
    format!(
        "[{PROMPT_VERSION}] Final judgment\n\
         You are the final judge. The argument graph for this case is balanced \
         (claim strength {strength:.6}), so the threshold rule cannot decide it. Perform your own \
         independent legal analysis: re-evaluate the evidence, the legal standard and the key \
         conflicts, then answer whether the claim holds. Your answer is binding.\n\
         Claim: {claim}\n\n\
         Evidence:\n{context}\n\n\
         Strongest arguments on record:\n{brief}"
    )
}

pub fn contest(kind: &str, guidance: &str, user_claim: &str, claim: &str, arguments: &str, materials: &str) -> String {
    format!(
        "[{PROMPT_VERSION}] Contestation ({kind})\n\
         A user challenges the reasoning behind a decision. {guidance}\n\
         Claim: {claim}\n\
         User's contestation: {user_claim}\n\n\
         Materials supplied by the user:\n{materials}\n\n\
         Current arguments:\n{arguments}\n\n\
         Regenerate, refine or rebut arguments so the record reflects the contestation. \
         Propose only concrete edits; the user accepts or rejects each one."
    )
}
