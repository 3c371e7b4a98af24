//! Offline stand-in for a language model.
//!
//! Answers every purpose with a well-formed payload whose content is derived
//! from a hash of the seed and the prompt. Useful for demos, smoke runs and
//! for recording fixture sets without network access. It knows nothing about
//! law; its outputs are only plausible in shape.

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::{BackendError, BackendRequest, BackendResponse, Purpose, TextModelBackend};

#[derive(Debug, Clone)]
pub struct SyntheticBackend {
    seed: u64,
}

/// Deterministic stream of numbers derived from one request.
struct Draws {
    block: [u8; 32],
    counter: u64,
    seed_material: Vec<u8>,
}

impl Draws {
    fn new(seed: u64, request: &BackendRequest, salt: &str) -> Self {
        let mut material = seed.to_le_bytes().to_vec();
        material.extend_from_slice(request.digest().as_bytes());
        material.extend_from_slice(salt.as_bytes());
        Draws {
            block: [0; 32],
            counter: 0,
            seed_material: material,
        }
    }

    fn next(&mut self) -> u64 {
        let mut h = Sha256::new();
        h.update(&self.seed_material);
        h.update(self.counter.to_le_bytes());
        self.counter += 1;
        self.block.copy_from_slice(&h.finalize());
        u64::from_le_bytes(self.block[..8].try_into().unwrap())
    }

    fn below(&mut self, n: u64) -> u64 {
        if n == 0 {
            0
        } else {
            self.next() % n
        }
    }
}

const SCORE_GRID: [f64; 8] = [0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

impl SyntheticBackend {
    pub fn new(seed: u64) -> Self {
        SyntheticBackend { seed }
    }

    fn payload(&self, req: &BackendRequest) -> Value {
        let mut d = Draws::new(self.seed, req, "");
        let input = &req.input;
        match req.purpose {
            Purpose::Select => {
                let roles: Vec<&str> = input["roles"]
                    .as_array()
                    .map(|a| a.iter().filter_map(Value::as_str).collect())
                    .unwrap_or_default();
                let mut picked = Vec::new();
                if !roles.is_empty() {
                    let want = 2.min(roles.len());
                    while picked.len() < want {
                        let r = roles[d.below(roles.len() as u64) as usize];
                        if !picked.contains(&r) {
                            picked.push(r);
                        }
                    }
                }
                json!({ "roles": picked })
            }
            Purpose::Generate => {
                let role = input["role"].as_str().unwrap_or("agent");
                let stance = input["stance"].as_str().unwrap_or("support");
                let passages: Vec<&str> = input["passage_ids"]
                    .as_array()
                    .map(|a| a.iter().filter_map(Value::as_str).collect())
                    .unwrap_or_default();
                let count = 2 + d.below(3);
                let arguments: Vec<Value> = (1..=count)
                    .map(|k| {
                        let refs: Vec<&str> = if passages.is_empty() {
                            vec![]
                        } else {
                            vec![passages[d.below(passages.len() as u64) as usize]]
                        };
                        let verb = if stance == "attack" { "undermines" } else { "supports" };
                        json!({
                            "text": format!("{role} point {k}: the record {verb} the claim on ground #{}.", d.below(1000)),
                            "evidence_refs": refs,
                        })
                    })
                    .collect();
                json!({ "arguments": arguments })
            }
            Purpose::Score => {
                json!({ "score": SCORE_GRID[d.below(SCORE_GRID.len() as u64) as usize] })
            }
            Purpose::Relate => {
                let pairs = input["pairs"].as_array().cloned().unwrap_or_default();
                let verdicts: Vec<Value> = pairs
                    .iter()
                    .map(|p| {
                        let label = ["support", "attack", "neutral"][d.below(3) as usize];
                        let confidence = 0.4 + d.below(61) as f64 / 100.0;
                        json!({
                            "first": p["first"],
                            "second": p["second"],
                            "label": label,
                            "confidence": (confidence * 100.0).round() / 100.0,
                        })
                    })
                    .collect();
                json!({ "verdicts": verdicts })
            }
            Purpose::Adjudicate => {
                let winner = ["supporter", "supporter", "attacker", "attacker", "tie"]
                    [d.below(5) as usize];
                json!({ "winner": winner, "rationale": format!("synthetic verdict: {winner}") })
            }
            Purpose::Judge => {
                let answer = if d.below(2) == 0 { "yes" } else { "no" };
                json!({ "answer": answer, "rationale": format!("synthetic judgment: {answer}") })
            }
            Purpose::Contest => json!({ "proposals": [] }),
        }
    }
}

impl TextModelBackend for SyntheticBackend {
    fn complete(&self, request: &BackendRequest) -> Result<BackendResponse, BackendError> {
        Ok(BackendResponse::json(request.purpose, self.payload(request)))
    }

    fn name(&self) -> &str {
        "synthetic"
    }
}
