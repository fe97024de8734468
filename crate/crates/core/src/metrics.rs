//! Binary classification metrics and report tables.

use indexmap::IndexMap;
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

pub fn confusion(pred: &[bool], truth: &[bool]) -> Result<ConfusionCounts> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: truth.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::EmptyInput("confusion over zero samples".into()));
    }
    let mut c = ConfusionCounts::default();
    for (&p, &t) in pred.iter().zip(truth) {
        match (p, t) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// Matthews correlation; 0 when any marginal is empty.
pub fn mcc(c: &ConfusionCounts) -> f64 {
    let [tp, fp, tn, fn_] = [c.tp, c.fp, c.tn, c.fn_].map(|v| v as f64);
    let den = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
    if den == 0.0 {
        return 0.0;
    }
    ((tp * tn - fp * fn_) / den.sqrt()).clamp(-1.0, 1.0)
}

pub fn accuracy(c: &ConfusionCounts) -> f64 {
    (c.tp + c.tn) as f64 / c.total() as f64
}

pub fn precision(c: &ConfusionCounts) -> Option<f64> {
    (c.tp + c.fp > 0).then(|| c.tp as f64 / (c.tp + c.fp) as f64)
}

pub fn recall(c: &ConfusionCounts) -> Option<f64> {
    (c.tp + c.fn_ > 0).then(|| c.tp as f64 / (c.tp + c.fn_) as f64)
}

pub fn f1(c: &ConfusionCounts) -> Option<f64> {
    let (p, r) = (precision(c)?, recall(c)?);
    (p + r > 0.0).then(|| 2.0 * p * r / (p + r))
}

/// Mann–Whitney form: the fraction of (positive, negative) pairs ranked
/// correctly, ties counting one half. Computed from average ranks.
pub fn roc_auc(scores: &[f64], truth: &[bool]) -> Result<f64> {
    if scores.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: scores.len(),
            right: truth.len(),
        });
    }
    let n_pos = truth.iter().filter(|&&t| t).count();
    let n_neg = truth.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::OneClassOnly);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // twice the rank sum keeps tie averages integral
    let mut pos_rank_sum2: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let rank2 = (i + 1 + j + 1) as u128;
        let pos_in_group = order[i..=j].iter().filter(|&&k| truth[k]).count() as u128;
        pos_rank_sum2 += rank2 * pos_in_group;
        i = j + 1;
    }
    let (np, nn) = (n_pos as u128, n_neg as u128);
    let u2 = pos_rank_sum2 - np * (np + 1);
    Ok(u2 as f64 / (2 * np * nn) as f64)
}

pub const METRIC_NAMES: [&str; 5] = ["roc_auc", "mcc", "accuracy", "precision", "f1"];
const METRIC_LABELS: [&str; 5] = ["ROC AUC", "MCC", "Accuracy", "Precision", "F1"];

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricsRow {
    pub roc_auc: Option<f64>,
    pub mcc: Option<f64>,
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub f1: Option<f64>,
}

impl MetricsRow {
    /// All five metrics from thresholded decisions plus the raw scores.
    pub fn compute(pred: &[bool], scores: &[f64], truth: &[bool]) -> Result<Self> {
        let c = confusion(pred, truth)?;
        let auc = match roc_auc(scores, truth) {
            Ok(v) => Some(v),
            Err(Error::OneClassOnly) => None,
            Err(e) => return Err(e),
        };
        Ok(MetricsRow {
            roc_auc: auc,
            ..Self::from_counts(&c)
        })
    }

    pub fn from_counts(c: &ConfusionCounts) -> Self {
        MetricsRow {
            roc_auc: None,
            mcc: Some(mcc(c)),
            accuracy: Some(accuracy(c)),
            precision: precision(c),
            f1: f1(c),
        }
    }

    pub fn values(&self) -> [Option<f64>; 5] {
        [self.roc_auc, self.mcc, self.accuracy, self.precision, self.f1]
    }

    fn from_values(v: [Option<f64>; 5]) -> Self {
        MetricsRow {
            roc_auc: v[0],
            mcc: v[1],
            accuracy: v[2],
            precision: v[3],
            f1: v[4],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub classes: IndexMap<String, MetricsRow>,
    /// Unweighted mean over the classes where each metric is defined.
    pub mean: MetricsRow,
    /// Per metric, how many classes were left out of the mean.
    pub undefined_counts: [usize; 5],
}

pub fn report(per_class: IndexMap<String, MetricsRow>) -> Result<MetricsReport> {
    if per_class.is_empty() {
        return Err(Error::EmptyInput("report needs at least one class".into()));
    }
    let mut mean = [None; 5];
    let mut undefined_counts = [0; 5];
    for m in 0..5 {
        let defined: Vec<f64> = per_class.values().filter_map(|r| r.values()[m]).collect();
        undefined_counts[m] = per_class.len() - defined.len();
        if !defined.is_empty() {
            mean[m] = Some(defined.iter().sum::<f64>() / defined.len() as f64);
        }
    }
    Ok(MetricsReport {
        classes: per_class,
        mean: MetricsRow::from_values(mean),
        undefined_counts,
    })
}

/// Percentage with two decimals, or an em dash when undefined.
pub fn render_percent(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{:.2}", x * 100.0),
        None => "—".to_string(),
    }
}

fn json_percent(v: Option<f64>) -> Value {
    match v {
        Some(x) => {
            let s = format!("{:.2}", x * 100.0);
            Value::from(s.parse::<f64>().expect("formatted float parses"))
        }
        None => Value::Null,
    }
}

fn row_json(r: &MetricsRow) -> Value {
    let mut m = Map::new();
    for (name, v) in METRIC_NAMES.iter().zip(r.values()) {
        m.insert(name.to_string(), json_percent(v));
    }
    Value::Object(m)
}

impl MetricsReport {
    /// Metrics as rows, classes and the mean as columns, values in percent.
    pub fn to_text(&self) -> String {
        let mut header = vec!["Metric".to_string()];
        header.extend(self.classes.keys().cloned());
        header.push("Mean".into());
        let mut rows = vec![header];
        for (m, label) in METRIC_LABELS.iter().enumerate() {
            let mut row = vec![label.to_string()];
            row.extend(self.classes.values().map(|r| render_percent(r.values()[m])));
            row.push(render_percent(self.mean.values()[m]));
            rows.push(row);
        }
        let widths: Vec<usize> = (0..rows[0].len())
            .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for row in &rows {
            let cells: Vec<String> = row
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(c, (cell, &w))| {
                    let pad = w - cell.chars().count();
                    if c == 0 {
                        format!("{cell}{}", " ".repeat(pad))
                    } else {
                        format!("{}{cell}", " ".repeat(pad))
                    }
                })
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
        }
        let excluded: Vec<String> = METRIC_NAMES
            .iter()
            .zip(self.undefined_counts)
            .filter(|(_, n)| *n > 0)
            .map(|(name, n)| format!("{name}: {n}"))
            .collect();
        if !excluded.is_empty() {
            out.push_str(&format!("undefined (excluded from mean): {}\n", excluded.join(", ")));
        }
        out
    }

    pub fn to_json(&self) -> Value {
        let classes: Map<String, Value> = self
            .classes
            .iter()
            .map(|(k, r)| (k.clone(), row_json(r)))
            .collect();
        let undefined: Map<String, Value> = METRIC_NAMES
            .iter()
            .zip(self.undefined_counts)
            .map(|(k, n)| (k.to_string(), json!(n)))
            .collect();
        json!({
            "classes": classes,
            "mean": row_json(&self.mean),
            "undefined_counts": undefined,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counts(tp: u64, fp: u64, tn: u64, fn_: u64) -> ConfusionCounts {
        ConfusionCounts { tp, fp, tn, fn_ }
    }

    #[test]
    fn confusion_examples() {
        let t = [true, true, false];
        assert_eq!(confusion(&t, &t).unwrap(), counts(2, 0, 1, 0));
        let not: Vec<bool> = t.iter().map(|b| !b).collect();
        let c = confusion(&not, &t).unwrap();
        assert_eq!((c.tp, c.tn), (0, 0));
        let truth = [true, true, false, false, true, false];
        let pred = [true, false, false, false, true, true];
        assert_eq!(confusion(&pred, &truth).unwrap(), counts(2, 1, 2, 1));
        assert!(matches!(confusion(&pred[..2], &truth), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn scalar_metrics() {
        let c = counts(2, 1, 2, 1);
        assert!((mcc(&c) - 1.0 / 3.0).abs() < 1e-15);
        assert!((accuracy(&c) - 4.0 / 6.0).abs() < 1e-15);
        assert!((precision(&c).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((recall(&c).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((f1(&c).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(mcc(&counts(3, 0, 4, 0)), 1.0);
        assert_eq!(mcc(&counts(3, 2, 0, 0)), 0.0);
        assert_eq!(precision(&counts(0, 0, 5, 2)), None);
        assert_eq!(recall(&counts(0, 0, 5, 2)), Some(0.0));
        assert_eq!(f1(&counts(0, 0, 5, 2)), None);
        assert_eq!(f1(&counts(0, 3, 5, 2)), None);
    }

    #[test]
    fn auc_examples() {
        let truth = [true, false, true, false];
        assert_eq!(roc_auc(&[0.3; 4], &truth).unwrap(), 0.5);
        assert_eq!(roc_auc(&[0.9, 0.1, 0.8, 0.2], &truth).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.9, 0.8, 0.4, 0.2], &truth).unwrap(), 0.75);
        assert!(matches!(roc_auc(&[0.1, 0.2], &[true, true]), Err(Error::OneClassOnly)));
    }

    #[test]
    fn report_means_and_rendering() {
        let mut m = IndexMap::new();
        m.insert("A".into(), MetricsRow { accuracy: Some(0.6), precision: None, ..Default::default() });
        m.insert("B".into(), MetricsRow { accuracy: Some(0.8), precision: Some(0.5), ..Default::default() });
        let r = report(m).unwrap();
        assert!((r.mean.accuracy.unwrap() - 0.7).abs() < 1e-15);
        assert_eq!(r.mean.precision, Some(0.5));
        assert_eq!(r.undefined_counts[3], 1);
        let text = r.to_text();
        assert!(text.contains("Accuracy"));
        assert!(text.contains("70.00"));
        assert!(text.contains('—'));
        let j = r.to_json();
        assert_eq!(j["mean"]["accuracy"], json!(70.0));
        assert_eq!(j["classes"]["A"]["precision"], Value::Null);
        assert_eq!(j["undefined_counts"]["precision"], json!(1));

        let mut one = IndexMap::new();
        let row = MetricsRow::from_counts(&counts(2, 1, 2, 1));
        one.insert("C".into(), row);
        assert_eq!(report(one).unwrap().mean, row);
        assert!(report(IndexMap::new()).is_err());
    }
}
