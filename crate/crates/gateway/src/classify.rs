use std::path::Path;
use std::time::Instant;

use binsight::data::{encode_bytes, EncodingMode, DEFAULT_CLASSES};
use binsight::encoder::RawBinary;
use binsight::metrics::argmax;
use binsight::model::{load_model, Model};

use crate::verdict::Verdict;
use crate::{GatewayError, Result};

/// An immutable loaded model plus everything needed to turn raw bytes into
/// a verdict. Safe to share across threads.
pub struct Classifier {
    model: Model<f32>,
    mode: EncodingMode,
    class_names: Vec<String>,
    threshold: f64,
}

impl Classifier {
    /// Load a model file; the encoding mode defaults to the one implied by
    /// the model's input channel count.
    pub fn load(model_path: &Path, mode: Option<EncodingMode>, threshold: f64) -> Result<Self> {
        if !(0.0 < threshold && threshold < 1.0) {
            return Err(GatewayError::Config(format!(
                "threshold {threshold} outside (0, 1)"
            )));
        }
        let model = load_model(model_path)?;
        let implied = match model.config.channels {
            1 => EncodingMode::Gray,
            3 => EncodingMode::Entropy,
            n => {
                return Err(GatewayError::Config(format!(
                    "model has {n} input channels; expected 1 or 3"
                )))
            }
        };
        let mode = match mode {
            Some(m) if m != implied => {
                return Err(GatewayError::Config(format!(
                    "mode {} conflicts with model channels ({})",
                    m.name(),
                    implied.name()
                )))
            }
            _ => implied,
        };
        Ok(Classifier {
            model,
            mode,
            class_names: DEFAULT_CLASSES.iter().map(|s| s.to_string()).collect(),
            threshold,
        })
    }

    pub fn mode(&self) -> EncodingMode {
        self.mode
    }

    pub fn model(&self) -> &Model<f32> {
        &self.model
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    /// Probabilities for raw bytes, identical to the serve path.
    pub fn probabilities(&self, bytes: &[u8]) -> Result<Vec<f32>> {
        let bin = RawBinary::new(bytes.to_vec(), "direct")?;
        let tensor = encode_bytes(&bin, self.mode)?;
        Ok(self.model.predict(&tensor)?)
    }

    /// Encode, classify, and wrap the result as a verdict record.
    pub fn classify_bytes(&self, id: u64, source: &str, bytes: &[u8]) -> Verdict {
        let started = Instant::now();
        let probs = match self.probabilities(bytes) {
            Ok(p) => p,
            Err(e) => return Verdict::error(id, source, &e.to_string()),
        };
        let winner = argmax(&probs);
        let class = self.class_names[winner].clone();
        let malware = class != "goodware";
        let flagged = malware && probs[winner] as f64 >= self.threshold;
        Verdict {
            id,
            ts: chrono::Utc::now().to_rfc3339(),
            source: source.to_string(),
            class,
            probs,
            flagged,
            latency_ms: started.elapsed().as_secs_f64() * 1000.0,
            status: "ok".into(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use binsight::model::{build_model, save_model, ModelConfig};

    fn saved_model(dir: &Path) -> std::path::PathBuf {
        let path = dir.join("m.bsm");
        let model = build_model::<f32>(&ModelConfig::default()).unwrap();
        save_model(&model, &path).unwrap();
        path
    }

    #[test]
    fn mode_inferred_from_channels() {
        let dir = tempfile::tempdir().unwrap();
        let path = saved_model(dir.path());
        let c = Classifier::load(&path, None, 0.5).unwrap();
        assert_eq!(c.mode(), EncodingMode::Gray);
        assert!(Classifier::load(&path, Some(EncodingMode::Entropy), 0.5).is_err());
    }

    #[test]
    fn threshold_validated() {
        let dir = tempfile::tempdir().unwrap();
        let path = saved_model(dir.path());
        assert!(Classifier::load(&path, None, 0.0).is_err());
        assert!(Classifier::load(&path, None, 1.0).is_err());
    }

    #[test]
    fn verdict_matches_direct_predict() {
        let dir = tempfile::tempdir().unwrap();
        let path = saved_model(dir.path());
        let c = Classifier::load(&path, None, 0.5).unwrap();
        let bytes: Vec<u8> = (0..5000).map(|i| (i % 256) as u8).collect();
        let v = c.classify_bytes(1, "test", &bytes);
        assert_eq!(v.status, "ok");
        assert_eq!(v.probs, c.probabilities(&bytes).unwrap());
        let sum: f32 = v.probs.iter().sum();
        assert!((sum - 1.0).abs() < 1e-6);
        assert!(v.latency_ms > 0.0);
    }

    #[test]
    fn empty_bytes_produce_error_verdict() {
        let dir = tempfile::tempdir().unwrap();
        let path = saved_model(dir.path());
        let c = Classifier::load(&path, None, 0.5).unwrap();
        let v = c.classify_bytes(2, "empty", &[]);
        assert!(v.status.starts_with("error:"));
        assert!(v.probs.is_empty());
        assert!(!v.flagged);
    }
}
