//! Metrics and evaluation reports: macro-averaged F1 over the two
//! classes, the majority-class baseline, and the ablation score table.

use serde::{Deserialize, Serialize};

use crate::error::{CcnlError, Result};

/// Per-class precision/recall/F1. Any zero denominator yields 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    /// confusion[gold][predicted]
    pub confusion: [[usize; 2]; 2],
    pub per_class: [ClassScores; 2],
    pub macro_f1: f64,
    pub accuracy: f64,
    pub misclassified: Vec<String>,
}

fn check_lengths(gold: &[u8], predicted: &[u8]) -> Result<()> {
    if gold.len() != predicted.len() {
        return Err(CcnlError::Input(format!(
            "gold has {} labels but predictions have {}",
            gold.len(),
            predicted.len()
        )));
    }
    if gold.is_empty() {
        return Err(CcnlError::Input("cannot score an empty label set".into()));
    }
    Ok(())
}

fn confusion(gold: &[u8], predicted: &[u8]) -> [[usize; 2]; 2] {
    let mut m = [[0usize; 2]; 2];
    for (&g, &p) in gold.iter().zip(predicted) {
        m[g as usize][p as usize] += 1;
    }
    m
}

fn class_scores(m: &[[usize; 2]; 2], c: usize) -> ClassScores {
    let tp = m[c][c] as f64;
    let fp = m[1 - c][c] as f64;
    let fn_ = m[c][1 - c] as f64;
    let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
    let recall = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    ClassScores {
        precision,
        recall,
        f1,
    }
}

/// Unweighted mean of the two per-class F1 scores.
pub fn macro_f1(gold: &[u8], predicted: &[u8]) -> Result<f64> {
    check_lengths(gold, predicted)?;
    let m = confusion(gold, predicted);
    Ok((class_scores(&m, 0).f1 + class_scores(&m, 1).f1) / 2.0)
}

/// Full report; `ids` (parallel to the labels, may be empty) fills the
/// misclassified-example list.
pub fn evaluate(gold: &[u8], predicted: &[u8], ids: &[String]) -> Result<EvalReport> {
    check_lengths(gold, predicted)?;
    let m = confusion(gold, predicted);
    let per_class = [class_scores(&m, 0), class_scores(&m, 1)];
    let correct = m[0][0] + m[1][1];
    let misclassified = if ids.len() == gold.len() {
        gold.iter()
            .zip(predicted)
            .zip(ids)
            .filter(|((g, p), _)| g != p)
            .map(|(_, id)| id.clone())
            .collect()
    } else {
        Vec::new()
    };
    Ok(EvalReport {
        confusion: m,
        per_class,
        macro_f1: (per_class[0].f1 + per_class[1].f1) / 2.0,
        accuracy: correct as f64 / gold.len() as f64,
        misclassified,
    })
}

/// Macro-F1 of always predicting the training modal class on a test set
/// with the given positive rate. Ties in the training distribution break
/// toward class 0.
pub fn majority_baseline(train_positive_rate: f64, test_positive_rate: f64) -> f64 {
    let modal: u8 = if train_positive_rate > 0.5 { 1 } else { 0 };
    // the predicted class scores F1 = 2a/(1+a) where a is its test
    // frequency; the other class scores 0
    let a = if modal == 1 {
        test_positive_rate
    } else {
        1.0 - test_positive_rate
    };
    if a == 0.0 {
        0.0
    } else {
        (2.0 * a / (1.0 + a)) / 2.0
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationRow {
    pub name: String,
    pub macro_f1: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("model\tmacro_f1\n");
        for row in &self.rows {
            out.push_str(&format!("{}\t{:.4}\n", row.name, row.macro_f1));
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some("model\tmacro_f1") => {}
            _ => {
                return Err(CcnlError::Parse {
                    file: "<ablation report>".into(),
                    line: 1,
                    message: "missing header 'model\\tmacro_f1'".into(),
                })
            }
        }
        let mut rows = Vec::new();
        for (n, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let (name, score) = line.split_once('\t').ok_or_else(|| CcnlError::Parse {
                file: "<ablation report>".into(),
                line: n + 2,
                message: "expected two tab-separated fields".into(),
            })?;
            let macro_f1 = score.parse::<f64>().map_err(|e| CcnlError::Parse {
                file: "<ablation report>".into(),
                line: n + 2,
                message: format!("bad score '{score}': {e}"),
            })?;
            rows.push(AblationRow {
                name: name.to_string(),
                macro_f1,
            });
        }
        Ok(AblationReport { rows })
    }
}
