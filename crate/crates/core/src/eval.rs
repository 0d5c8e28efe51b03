//! Confusion matrix, per-class precision/recall/f1 and the fixed-column
//! text report.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labels::{ClassId, NUM_CLASSES};

pub const HEADER: &str = "Label  Precision  Recall  f1-score  Support";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("length mismatch: {truth} true labels vs {pred} predictions")]
    Length { truth: usize, pred: usize },
    #[error("no samples")]
    Empty,
    #[error("class id {0} outside 1..={NUM_CLASSES}")]
    Label(ClassId),
}

/// Rows are true classes, columns predicted, both indexed `id - 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn get(&self, truth: ClassId, pred: ClassId) -> u64 {
        self.counts[truth - 1][pred - 1]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..NUM_CLASSES).map(|i| self.counts[i][i]).sum()
    }
}

pub fn confusion(truth: &[ClassId], pred: &[ClassId]) -> Result<ConfusionMatrix, EvalError> {
    if truth.len() != pred.len() {
        return Err(EvalError::Length {
            truth: truth.len(),
            pred: pred.len(),
        });
    }
    if truth.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut counts = vec![vec![0u64; NUM_CLASSES]; NUM_CLASSES];
    for (&t, &p) in truth.iter().zip(pred) {
        for id in [t, p] {
            if !(1..=NUM_CLASSES).contains(&id) {
                return Err(EvalError::Label(id));
            }
        }
        counts[t - 1][p - 1] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Average {
    /// Support-weighted.
    #[default]
    Weighted,
    Macro,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRow {
    pub label: ClassId,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub rows: Vec<ClassRow>,
    pub average: Average,
    pub avg_precision: f64,
    pub avg_recall: f64,
    pub avg_f1: f64,
    pub total: u64,
    pub correct: u64,
    pub accuracy: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// `2PR / (P + R)`, 0 when both are 0.
pub fn f1_score(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

pub fn report(cm: &ConfusionMatrix) -> ClassReport {
    report_with(cm, Average::Weighted)
}

pub fn report_with(cm: &ConfusionMatrix, average: Average) -> ClassReport {
    let total = cm.total();
    let rows: Vec<ClassRow> = (0..NUM_CLASSES)
        .map(|i| {
            let tp = cm.counts[i][i];
            let support: u64 = cm.counts[i].iter().sum();
            let predicted: u64 = cm.counts.iter().map(|r| r[i]).sum();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            ClassRow {
                label: i + 1,
                precision,
                recall,
                f1: f1_score(precision, recall),
                support,
            }
        })
        .collect();
    let avg = |f: fn(&ClassRow) -> f64| match average {
        Average::Weighted => rows.iter().map(|r| r.support as f64 * f(r)).sum::<f64>() / total.max(1) as f64,
        Average::Macro => rows.iter().map(f).sum::<f64>() / rows.len() as f64,
    };
    let correct = cm.trace();
    ClassReport {
        avg_precision: avg(|r| r.precision),
        avg_recall: avg(|r| r.recall),
        avg_f1: avg(|r| r.f1),
        rows,
        average,
        total,
        correct,
        accuracy: ratio(correct, total),
    }
}

/// Two decimals, halves rounded up. The epsilon absorbs representation
/// error in values such as 0.125 * 100.
pub fn format_metric(x: f64) -> String {
    let cents = (x * 100.0 + 0.5 + 1e-9).floor() as u64;
    format!("{}.{:02}", cents / 100, cents % 100)
}

pub fn render_report(r: &ClassReport) -> String {
    let mut out = String::new();
    out.push_str(HEADER);
    out.push('\n');
    for row in &r.rows {
        out.push_str(&format!(
            "{:>5}  {:>9}  {:>6}  {:>8}  {:>7}\n",
            row.label,
            format_metric(row.precision),
            format_metric(row.recall),
            format_metric(row.f1),
            row.support
        ));
    }
    let name = match r.average {
        Average::Weighted => "avg / total",
        Average::Macro => "macro avg",
    };
    out.push_str(&format!(
        "{:<11}{:>5}  {:>6}  {:>8}  {:>7}\n",
        name,
        format_metric(r.avg_precision),
        format_metric(r.avg_recall),
        format_metric(r.avg_f1),
        r.total
    ));
    out.push_str(&format!(
        "accuracy {} ({}/{})\n",
        format_metric(r.accuracy),
        r.correct,
        r.total
    ));
    out
}

/// Full-precision JSON twin of the text report.
pub fn report_json(cm: &ConfusionMatrix, r: &ClassReport) -> String {
    #[derive(Serialize)]
    struct Twin<'a> {
        confusion: &'a ConfusionMatrix,
        report: &'a ClassReport,
    }
    let mut s = serde_json::to_string_pretty(&Twin {
        confusion: cm,
        report: r,
    })
    .expect("report serializes");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confusion_counts() {
        let cm = confusion(&[3], &[5]).unwrap();
        assert_eq!(cm.get(3, 5), 1);
        assert_eq!(cm.total(), 1);
        let cm = confusion(&[1, 2, 14], &[1, 2, 14]).unwrap();
        assert_eq!(cm.trace(), 3);
        assert!(confusion(&[1], &[1, 2]).is_err());
        assert_eq!(confusion(&[], &[]), Err(EvalError::Empty));
        assert_eq!(confusion(&[0], &[1]), Err(EvalError::Label(0)));
    }

    #[test]
    fn f1_from_table_values() {
        assert_eq!(format_metric(f1_score(0.75, 1.0)), "0.86");
        assert_eq!(format_metric(f1_score(0.92, 0.92)), "0.92");
        assert_eq!(f1_score(0.0, 0.0), 0.0);
    }

    #[test]
    fn half_up_rounding() {
        assert_eq!(format_metric(0.125), "0.13");
        assert_eq!(format_metric(0.135), "0.14");
        assert_eq!(format_metric(0.0), "0.00");
        assert_eq!(format_metric(1.0), "1.00");
        assert_eq!(format_metric(0.994), "0.99");
        assert_eq!(format_metric(0.995), "1.00");
    }

    #[test]
    fn all_correct() {
        let y: Vec<ClassId> = (1..=14).collect();
        let r = report(&confusion(&y, &y).unwrap());
        assert!(r
            .rows
            .iter()
            .all(|row| row.precision == 1.0 && row.recall == 1.0 && row.f1 == 1.0));
        assert_eq!(
            (r.avg_precision, r.avg_recall, r.avg_f1, r.accuracy),
            (1.0, 1.0, 1.0, 1.0)
        );
    }

    #[test]
    fn rendered_layout() {
        // Class 1: 3 of 4 predictions right, all 3 recalled. Class 2: 1 sample missed.
        let cm = confusion(&[1, 1, 1, 2], &[1, 1, 1, 1]).unwrap();
        let r = report(&cm);
        let text = render_report(&r);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], HEADER);
        assert_eq!(lines[1], "    1       0.75    1.00      0.86        3");
        assert_eq!(lines[2], "    2       0.00    0.00      0.00        1");
        assert_eq!(lines[3], "    3       0.00    0.00      0.00        0");
        assert_eq!(lines.len(), 17);
        assert_eq!(lines[15], "avg / total 0.56    0.75      0.64        4");
        assert_eq!(lines[16], "accuracy 0.75 (3/4)");
        for l in &lines[..16] {
            assert_eq!(l.len(), HEADER.len());
        }
        assert_eq!(render_report(&r), text);
    }

    #[test]
    fn macro_average() {
        let cm = confusion(&[1, 2], &[1, 1]).unwrap();
        let r = report_with(&cm, Average::Macro);
        assert!((r.avg_recall - 1.0 / 14.0).abs() < 1e-15);
        assert!(render_report(&r).contains("macro avg"));
    }

    #[test]
    fn json_twin_parses() {
        let cm = confusion(&[1, 2], &[1, 1]).unwrap();
        let r = report(&cm);
        let v: serde_json::Value = serde_json::from_str(&report_json(&cm, &r)).unwrap();
        assert_eq!(v["report"]["total"], 2);
        assert_eq!(v["confusion"]["counts"][1][0], 1);
    }
}
