use super::AuditEntry;

/// One JSON object per line, newline-terminated.
pub fn audit_to_jsonl(entries: &[AuditEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        out.push_str(&serde_json::to_string(e).expect("audit entry serializes"));
        out.push('\n');
    }
    out
}

pub fn audit_from_jsonl(text: &str) -> Result<Vec<AuditEntry>, String> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| format!("audit line {}: {e}", i + 1)))
        .collect()
}
