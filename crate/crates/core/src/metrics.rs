//! Confusion accounting, per-class recall/precision/F1, macro averages,
//! and the accuracy-vs-training-size sweep.

use crate::data::{
    encode_corpus, EncodeOptions, EncodingMode, ManifestEntry, SplitSpec, TrainConfig,
};
use crate::error::{Error, Result};
use crate::model::{build_model, Model, ModelConfig};
use crate::train::{evaluate_accuracy, train};
use crate::data::Dataset;

/// Counts indexed `[true class][predicted class]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<usize>>,
    pub class_names: Vec<String>,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }
}

/// Per-class rates and derived scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassScore {
    pub class_name: String,
    pub tp_rate: f64,
    pub fp_rate: f64,
    pub fn_rate: f64,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    /// Set when a denominator was zero and the score was defined as 0.
    pub degenerate: bool,
}

/// Per-epoch training record.
#[derive(Debug, Clone, Default)]
pub struct TrainingHistory {
    pub epochs: Vec<EpochRecord>,
}

#[derive(Debug, Clone)]
pub struct EpochRecord {
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_accuracy: Option<f64>,
    pub wall_ms: u64,
}

impl TrainingHistory {
    pub fn push(
        &mut self,
        train_loss: f64,
        train_accuracy: f64,
        val_accuracy: Option<f64>,
        wall_ms: u64,
    ) {
        self.epochs.push(EpochRecord {
            train_loss,
            train_accuracy,
            val_accuracy,
            wall_ms,
        });
    }
}

/// Argmax-predicted vs true counts over a dataset.
pub fn confusion(model: &Model<f32>, ds: &Dataset) -> Result<ConfusionMatrix> {
    let classes = ds.class_names.len();
    let mut counts = vec![vec![0usize; classes]; classes];
    for (image, &label) in ds.images.iter().zip(&ds.labels) {
        if label >= classes {
            return Err(Error::Data(format!("label {label} out of range")));
        }
        let probs = model.predict(image)?;
        let predicted = argmax(&probs);
        counts[label][predicted] += 1;
    }
    Ok(ConfusionMatrix {
        counts,
        class_names: ds.class_names.clone(),
    })
}

pub fn argmax(probs: &[f32]) -> usize {
    probs
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap_or(0)
}

/// Recall, precision, and F1 from (tp, fp, fn) rates. Works on raw counts
/// too since the formulas are scale-free. Zero denominators yield 0 scores
/// with the degenerate flag set.
pub fn prf_from_rates(tp: f64, fp: f64, fn_: f64) -> (f64, f64, f64, bool) {
    let mut degenerate = false;
    let recall = if tp + fn_ > 0.0 {
        tp / (tp + fn_)
    } else {
        degenerate = true;
        0.0
    };
    let precision = if tp + fp > 0.0 {
        tp / (tp + fp)
    } else {
        degenerate = true;
        0.0
    };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        degenerate = true;
        0.0
    };
    (recall, precision, f1, degenerate)
}

/// Build a [`ClassScore`] from rates via [`prf_from_rates`].
pub fn class_score(name: &str, tp: f64, fp: f64, fn_: f64) -> ClassScore {
    let (recall, precision, f1, degenerate) = prf_from_rates(tp, fp, fn_);
    ClassScore {
        class_name: name.to_string(),
        tp_rate: tp,
        fp_rate: fp,
        fn_rate: fn_,
        recall,
        precision,
        f1,
        degenerate,
    }
}

/// Counts-based per-class scores from a confusion matrix.
pub fn scores_from_confusion(matrix: &ConfusionMatrix) -> Vec<ClassScore> {
    let classes = matrix.counts.len();
    let total: usize = matrix.total();
    (0..classes)
        .map(|c| {
            let tp = matrix.counts[c][c];
            let fn_ = matrix.counts[c].iter().sum::<usize>() - tp;
            let fp = (0..classes).map(|t| matrix.counts[t][c]).sum::<usize>() - tp;
            let _ = total;
            class_score(&matrix.class_names[c], tp as f64, fp as f64, fn_ as f64)
        })
        .collect()
}

/// Unweighted mean recall and precision, with the overall F1 defined as the
/// harmonic mean of those two means.
pub fn macro_summary(scores: &[ClassScore]) -> Result<(f64, f64, f64)> {
    if scores.is_empty() {
        return Err(Error::Data("no class scores to summarize".into()));
    }
    let n = scores.len() as f64;
    let mean_recall = scores.iter().map(|s| s.recall).sum::<f64>() / n;
    let mean_precision = scores.iter().map(|s| s.precision).sum::<f64>() / n;
    let overall_f1 = if mean_recall + mean_precision > 0.0 {
        2.0 * mean_recall * mean_precision / (mean_recall + mean_precision)
    } else {
        0.0
    };
    Ok((mean_recall, mean_precision, overall_f1))
}

/// Trace over total.
pub fn accuracy(matrix: &ConfusionMatrix) -> Result<f64> {
    let total = matrix.total();
    if total == 0 {
        return Err(Error::Data("empty confusion matrix".into()));
    }
    let trace: usize = (0..matrix.counts.len()).map(|c| matrix.counts[c][c]).sum();
    Ok(trace as f64 / total as f64)
}

/// One row of the accuracy-vs-training-size table.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub fraction: f64,
    pub mode: EncodingMode,
    pub mean_accuracy: f64,
}

/// Train a fresh model per `(fraction, mode, seed)` and evaluate on a fixed
/// held-out set (30% of the corpus, split off with the first seed).
pub fn accuracy_vs_trainsize(
    entries: &[ManifestEntry],
    fractions: &[f64],
    modes: &[EncodingMode],
    seeds: &[u64],
    train_config: &TrainConfig,
) -> Result<Vec<SweepRow>> {
    if fractions.is_empty() || modes.is_empty() || seeds.is_empty() {
        return Err(Error::Config("empty sweep axis".into()));
    }
    let holdout_seed = seeds[0];
    let mut rows = Vec::new();
    for &mode in modes {
        let full = encode_corpus(entries, mode, &EncodeOptions::default())?;
        let (pool, holdout) = crate::data::split_dataset(
            &full,
            SplitSpec {
                train_fraction: 0.7,
                seed: holdout_seed,
            },
        )?;
        for &fraction in fractions {
            let mut acc_sum = 0.0;
            for &seed in seeds {
                let n = ((fraction * pool.len() as f64).ceil() as usize)
                    .clamp(1, pool.len());
                // Seeded subsample of the training pool.
                let (subset, _) = if n == pool.len() {
                    (pool.clone(), pool.clone())
                } else {
                    crate::data::split_dataset(
                        &pool,
                        SplitSpec {
                            train_fraction: n as f64 / pool.len() as f64,
                            seed,
                        },
                    )?
                };
                let config = ModelConfig {
                    channels: mode.channels(),
                    seed: seed as u32,
                    ..ModelConfig::default()
                };
                let mut model = build_model::<f32>(&config)?;
                let cfg = TrainConfig {
                    seed,
                    ..*train_config
                };
                train(&mut model, &subset, None, &cfg)?;
                acc_sum += evaluate_accuracy(&model, &holdout)?;
            }
            rows.push(SweepRow {
                fraction,
                mode,
                mean_accuracy: acc_sum / seeds.len() as f64,
            });
        }
    }
    Ok(rows)
}

/// Aligned text table of per-class scores plus the macro summary row.
pub fn report_text(scores: &[ClassScore]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<12}{:>10}{:>10}{:>10}{:>12}{:>12}{:>10}\n",
        "Class", "TP", "FP", "FN", "Recall", "Precision", "F1"
    ));
    for s in scores {
        out.push_str(&format!(
            "{:<12}{:>10.4}{:>10.4}{:>10.4}{:>12.6}{:>12.6}{:>10.6}{}\n",
            s.class_name,
            s.tp_rate,
            s.fp_rate,
            s.fn_rate,
            s.recall,
            s.precision,
            s.f1,
            if s.degenerate { "  (degenerate)" } else { "" }
        ));
    }
    if let Ok((recall, precision, f1)) = macro_summary(scores) {
        out.push_str(&format!(
            "{:<12}{:>10}{:>10}{:>10}{:>12.6}{:>12.6}{:>10.6}\n",
            "macro", "", "", "", recall, precision, f1
        ));
    }
    out
}

/// CSV with one row per class and a trailing macro summary row.
pub fn report_csv(scores: &[ClassScore]) -> String {
    let mut out = String::from("class,tp,fp,fn,recall,precision,f1\n");
    for s in scores {
        out.push_str(&format!(
            "{},{},{},{},{:.6},{:.6},{:.6}\n",
            s.class_name, s.tp_rate, s.fp_rate, s.fn_rate, s.recall, s.precision, s.f1
        ));
    }
    if let Ok((recall, precision, f1)) = macro_summary(scores) {
        out.push_str(&format!("macro,,,,{recall:.6},{precision:.6},{f1:.6}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(counts: Vec<Vec<usize>>) -> ConfusionMatrix {
        let names = (0..counts.len()).map(|i| format!("c{i}")).collect();
        ConfusionMatrix {
            counts,
            class_names: names,
        }
    }

    #[test]
    fn reference_row_mirai() {
        let (recall, precision, _, deg) = prf_from_rates(0.923, 0.035, 0.042);
        assert!((recall - 0.956477).abs() < 1e-6, "recall {recall}");
        assert!((precision - 0.963466).abs() < 1e-6, "precision {precision}");
        assert!(!deg);
    }

    #[test]
    fn reference_row_gafgyt() {
        let (recall, precision, _, _) = prf_from_rates(0.958, 0.033, 0.009);
        assert!((recall - 0.990693).abs() < 1e-6, "recall {recall}");
        assert!((precision - 0.966700).abs() < 1e-6, "precision {precision}");
    }

    #[test]
    fn reference_row_goodware() {
        let (recall, precision, _, _) = prf_from_rates(0.987, 0.010, 0.003);
        assert!((recall - 0.996970).abs() < 1e-6, "recall {recall}");
        assert!((precision - 0.989970).abs() < 1e-6, "precision {precision}");
    }

    #[test]
    fn macro_summary_reproduces_reference_bottom_rows() {
        let scores = vec![
            class_score("mirai", 0.923, 0.035, 0.042),
            class_score("gafgyt", 0.958, 0.033, 0.009),
            class_score("goodware", 0.987, 0.010, 0.003),
        ];
        let (recall, precision, f1) = macro_summary(&scores).unwrap();
        assert!((recall - 0.98138).abs() < 1e-5, "recall {recall}");
        assert!((precision - 0.973379).abs() < 1e-5, "precision {precision}");
        assert!((f1 - 0.977363).abs() < 1e-5, "f1 {f1}");
    }

    #[test]
    fn single_class_harmonic_identity() {
        let mut s = class_score("only", 1.0, 0.0, 0.0);
        s.recall = 0.8;
        s.precision = 0.8;
        let (r, p, f1) = macro_summary(&[s]).unwrap();
        assert_eq!((r, p), (0.8, 0.8));
        assert!((f1 - 0.8).abs() < 1e-12);
    }

    #[test]
    fn degenerate_class_scores_zero() {
        let (recall, precision, f1, deg) = prf_from_rates(0.0, 0.0, 0.0);
        assert_eq!((recall, precision, f1), (0.0, 0.0, 0.0));
        assert!(deg);
        let perfect = class_score("a", 1.0, 0.0, 0.0);
        let degenerate = class_score("b", 0.0, 0.0, 0.0);
        let (r, p, f1) = macro_summary(&[perfect, degenerate]).unwrap();
        assert_eq!((r, p), (0.5, 0.5));
        assert!((f1 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn f1_symmetric_and_equal_case() {
        let (_, _, f1a, _) = prf_from_rates(0.9, 0.2, 0.1);
        let (_, _, f1b, _) = prf_from_rates(0.9, 0.1, 0.2);
        assert!((f1a - f1b).abs() < 1e-12);
        let (r, p, f1, _) = prf_from_rates(0.5, 0.5, 0.5);
        assert!((r - p).abs() < 1e-12);
        assert!((f1 - r).abs() < 1e-12);
    }

    #[test]
    fn accuracy_diagonal_and_uniform() {
        let m = matrix(vec![vec![5, 0, 0], vec![0, 7, 0], vec![0, 0, 3]]);
        assert_eq!(accuracy(&m).unwrap(), 1.0);
        let m = matrix(vec![vec![1, 1, 1], vec![1, 1, 1], vec![1, 1, 1]]);
        assert!((accuracy(&m).unwrap() - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn nine_sample_fixture_hand_counted() {
        // True labels: 0,0,0,1,1,1,2,2,2; predictions: 0,0,1,1,1,1,2,0,2.
        let truths = [0, 0, 0, 1, 1, 1, 2, 2, 2];
        let preds = [0, 0, 1, 1, 1, 1, 2, 0, 2];
        let mut counts = vec![vec![0usize; 3]; 3];
        for (&t, &p) in truths.iter().zip(&preds) {
            counts[t][p] += 1;
        }
        let m = matrix(counts);
        assert_eq!(
            m.counts,
            vec![vec![2, 1, 0], vec![0, 3, 0], vec![1, 0, 2]]
        );
        assert!((accuracy(&m).unwrap() - 7.0 / 9.0).abs() < 1e-12);
        // Row sums equal per-class sample counts.
        for row in &m.counts {
            assert_eq!(row.iter().sum::<usize>(), 3);
        }
        let scores = scores_from_confusion(&m);
        // Class 0: tp=2, fn=1, fp=1.
        assert!((scores[0].recall - 2.0 / 3.0).abs() < 1e-12);
        assert!((scores[0].precision - 2.0 / 3.0).abs() < 1e-12);
        // Class 1: tp=3, fn=0, fp=1.
        assert!((scores[1].recall - 1.0).abs() < 1e-12);
        assert!((scores[1].precision - 0.75).abs() < 1e-12);
    }

    #[test]
    fn csv_report_shape() {
        let scores = vec![
            class_score("mirai", 0.923, 0.035, 0.042),
            class_score("gafgyt", 0.958, 0.033, 0.009),
        ];
        let csv = report_csv(&scores);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "class,tp,fp,fn,recall,precision,f1");
        assert_eq!(lines.len(), 4); // header + 2 classes + macro
        assert!(lines[3].starts_with("macro,"));
    }
}
