use serde::{Deserialize, Serialize};

/// One classification result, serialized as a single JSON line in the
/// verdict log and as the wire response body.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Verdict {
    pub id: u64,
    /// RFC 3339 timestamp.
    pub ts: String,
    /// Watched-file path or wire peer address.
    pub source: String,
    /// Argmax class name; empty on error.
    pub class: String,
    /// Probabilities in fixed class order; empty on error.
    pub probs: Vec<f32>,
    /// Argmax is a malware class and its probability meets the threshold.
    pub flagged: bool,
    /// Encode + inference latency.
    pub latency_ms: f64,
    /// "ok" or "error: <reason>".
    pub status: String,
}

impl Verdict {
    pub fn error(id: u64, source: &str, reason: &str) -> Self {
        Verdict {
            id,
            ts: chrono::Utc::now().to_rfc3339(),
            source: source.to_string(),
            class: String::new(),
            probs: Vec::new(),
            flagged: false,
            latency_ms: 0.0,
            status: format!("error: {reason}"),
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("verdict serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_roundtrip_preserves_probability_bits() {
        let v = Verdict {
            id: 7,
            ts: "2026-01-01T00:00:00+00:00".into(),
            source: "x.bin".into(),
            class: "mirai".into(),
            probs: vec![0.1f32.sin(), 0.7, 0.2000001],
            flagged: true,
            latency_ms: 1.25,
            status: "ok".into(),
        };
        let line = v.to_line();
        assert!(!line.contains('\n'));
        let back: Verdict = serde_json::from_str(&line).unwrap();
        assert_eq!(back, v);
        for (a, b) in v.probs.iter().zip(&back.probs) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
