//! Three-class confusion matrices and one-vs-rest detector metrics.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::class::ClassLabel;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("no predictions")]
    EmptyInput,
    #[error("class average requires every per-class metric to be defined")]
    UndefinedInput,
    #[error("prediction log line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// One row of a prediction log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prediction {
    pub image_path: String,
    pub truth: ClassLabel,
    pub predicted: ClassLabel,
}

pub const PREDICTION_HEADER: &str = "image_path,true_label,predicted_label";

/// Parses `image_path,true_label,predicted_label` lines (labels 0, 1, 2).
///
/// The path may itself contain commas; the two labels are taken from the end
/// of the line. An optional header line, blank lines and `#` comments are skipped.
pub fn parse_predictions(text: &str) -> Result<Vec<Prediction>, EvalError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || (out.is_empty() && line == PREDICTION_HEADER)
        {
            continue;
        }
        let err = |message: String| EvalError::Parse {
            line: i + 1,
            message,
        };
        let mut fields = line.rsplitn(3, ',');
        let (Some(pred), Some(truth), Some(path)) = (fields.next(), fields.next(), fields.next())
        else {
            return Err(err(format!(
                "expected 3 comma-separated fields, got {line:?}"
            )));
        };
        let label = |s: &str| -> Result<ClassLabel, EvalError> {
            s.trim()
                .parse::<usize>()
                .ok()
                .and_then(ClassLabel::from_index)
                .ok_or_else(|| err(format!("invalid label {:?} (expected 0, 1 or 2)", s.trim())))
        };
        out.push(Prediction {
            image_path: path.trim().to_string(),
            truth: label(truth)?,
            predicted: label(pred)?,
        });
    }
    Ok(out)
}

/// `counts[true][predicted]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConfusionMatrix3 {
    pub counts: [[u64; 3]; 3],
}

impl ConfusionMatrix3 {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..3).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sum(&self, c: ClassLabel) -> u64 {
        self.counts[c.index()].iter().sum()
    }

    pub fn col_sum(&self, c: ClassLabel) -> u64 {
        self.counts.iter().map(|r| r[c.index()]).sum()
    }
}

pub fn confusion_from_predictions<I>(records: I) -> Result<ConfusionMatrix3, EvalError>
where
    I: IntoIterator<Item = (ClassLabel, ClassLabel)>,
{
    let mut cm = ConfusionMatrix3::default();
    for (truth, predicted) in records {
        cm.counts[truth.index()][predicted.index()] += 1;
    }
    if cm.total() == 0 {
        return Err(EvalError::EmptyInput);
    }
    Ok(cm)
}

/// `None` marks a metric whose denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub precision: Option<f64>,
    pub accuracy: Option<f64>,
}

impl ClassMetrics {
    pub fn defined(sensitivity: f64, specificity: f64, precision: f64, accuracy: f64) -> Self {
        Self {
            sensitivity: Some(sensitivity),
            specificity: Some(specificity),
            precision: Some(precision),
            accuracy: Some(accuracy),
        }
    }

    pub fn fields(&self) -> [Option<f64>; 4] {
        [
            self.sensitivity,
            self.specificity,
            self.precision,
            self.accuracy,
        ]
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// One-vs-rest metrics for class `c`.
pub fn per_class_metrics(cm: &ConfusionMatrix3, c: ClassLabel) -> ClassMetrics {
    let n = cm.total();
    let tp = cm.counts[c.index()][c.index()];
    let fn_ = cm.row_sum(c) - tp;
    let fp = cm.col_sum(c) - tp;
    let tn = n - tp - fn_ - fp;
    ClassMetrics {
        sensitivity: ratio(tp, tp + fn_),
        specificity: ratio(tn, tn + fp),
        precision: ratio(tp, tp + fp),
        accuracy: ratio(tp + tn, n),
    }
}

/// Unweighted mean over the three classes.
pub fn class_averaged(metrics: &[ClassMetrics; 3]) -> Result<ClassMetrics, EvalError> {
    let mut sums = [0.0; 4];
    for m in metrics {
        for (s, v) in sums.iter_mut().zip(m.fields()) {
            *s += v.ok_or(EvalError::UndefinedInput)?;
        }
    }
    let [a, b, c, d] = sums.map(|s| s / 3.0);
    Ok(ClassMetrics::defined(a, b, c, d))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub total: u64,
    pub confusion: ConfusionMatrix3,
    pub per_class: BTreeMap<ClassLabel, ClassMetrics>,
    /// Absent when some per-class metric is undefined.
    pub class_average: Option<ClassMetrics>,
}

pub fn evaluate(predictions: &[Prediction]) -> Result<EvalReport, EvalError> {
    let cm = confusion_from_predictions(predictions.iter().map(|p| (p.truth, p.predicted)))?;
    let per: [ClassMetrics; 3] = ClassLabel::ALL.map(|c| per_class_metrics(&cm, c));
    Ok(EvalReport {
        total: cm.total(),
        confusion: cm,
        per_class: ClassLabel::ALL.into_iter().zip(per).collect(),
        class_average: class_averaged(&per).ok(),
    })
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |x| format!("{x}"))
}

fn cell4(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4}"))
}

impl EvalReport {
    pub const CSV_HEADER: &'static str = "class,sensitivity,specificity,precision,accuracy";

    fn rows(&self) -> impl Iterator<Item = (&'static str, ClassMetrics)> + '_ {
        self.per_class
            .iter()
            .map(|(c, m)| (c.name(), *m))
            .chain(self.class_average.map(|m| ("average", m)))
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{}\n", Self::CSV_HEADER);
        for (name, m) in self.rows() {
            let f = m.fields().map(cell);
            let _ = writeln!(s, "{name},{},{},{},{}", f[0], f[1], f[2], f[3]);
        }
        s
    }

    /// Console table with four decimals.
    pub fn to_table(&self) -> String {
        let mut s =
            String::from("confusion (rows = true, cols = predicted: fake real synthetic)\n");
        for (c, row) in ClassLabel::ALL.iter().zip(&self.confusion.counts) {
            let _ = writeln!(
                s,
                "  {:<10}{:>8}{:>8}{:>8}",
                c.name(),
                row[0],
                row[1],
                row[2]
            );
        }
        let _ = writeln!(
            s,
            "{:<10}{:>12}{:>12}{:>12}{:>12}",
            "class", "sensitivity", "specificity", "precision", "accuracy"
        );
        for (name, m) in self.rows() {
            let f = m.fields().map(cell4);
            let _ = writeln!(
                s,
                "{name:<10}{:>12}{:>12}{:>12}{:>12}",
                f[0], f[1], f[2], f[3]
            );
        }
        if self.class_average.is_none() {
            s.push_str("average   undefined (a per-class metric has a zero denominator)\n");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use ClassLabel::*;

    #[test]
    fn confusion_counts() {
        let cm = confusion_from_predictions([(Fake, Fake), (Real, Real), (Synthetic, Synthetic)])
            .unwrap();
        assert_eq!(cm.counts, [[1, 0, 0], [0, 1, 0], [0, 0, 1]]);
        let cm = confusion_from_predictions([(Fake, Real), (Fake, Real)]).unwrap();
        assert_eq!(cm.counts, [[0, 2, 0], [0, 0, 0], [0, 0, 0]]);
        assert_eq!(
            confusion_from_predictions(std::iter::empty()),
            Err(EvalError::EmptyInput)
        );
    }

    #[test]
    fn ten_thousand_per_class() {
        let recs = ClassLabel::ALL.into_iter().flat_map(|t| {
            (0..10_000).map(move |i| (t, ClassLabel::from_index((t.index() + i % 3) % 3).unwrap()))
        });
        let cm = confusion_from_predictions(recs).unwrap();
        for c in ClassLabel::ALL {
            assert_eq!(cm.row_sum(c), 10_000);
        }
    }

    #[test]
    fn perfect_classifier() {
        let cm = ConfusionMatrix3 {
            counts: [[10, 0, 0], [0, 10, 0], [0, 0, 10]],
        };
        for c in ClassLabel::ALL {
            assert_eq!(
                per_class_metrics(&cm, c),
                ClassMetrics::defined(1.0, 1.0, 1.0, 1.0)
            );
        }
    }

    #[test]
    fn never_predicted_class_has_undefined_precision() {
        let cm = ConfusionMatrix3 {
            counts: [[5, 5, 0], [0, 10, 0], [0, 3, 7]],
        };
        let m = per_class_metrics(&cm, Synthetic);
        assert!(m.precision.is_some());
        let cm = ConfusionMatrix3 {
            counts: [[5, 5, 0], [0, 10, 0], [4, 6, 0]],
        };
        let m = per_class_metrics(&cm, Synthetic);
        assert_eq!(m.precision, None);
        assert_eq!(m.sensitivity, Some(0.0));
        let per = ClassLabel::ALL.map(|c| per_class_metrics(&cm, c));
        assert_eq!(class_averaged(&per), Err(EvalError::UndefinedInput));
    }

    #[test]
    fn fake_row_of_best_detector() {
        // TP 9316, FN 684; FP 89 gives precision 9316 / 9405 = 0.99054...
        let cm = ConfusionMatrix3 {
            counts: [[9316, 684, 0], [89, 9911, 0], [0, 0, 10_000]],
        };
        let m = per_class_metrics(&cm, Fake);
        assert!((m.sensitivity.unwrap() - 0.9316).abs() < 1e-12);
        assert!((m.precision.unwrap() - 0.9905).abs() < 5e-5);
    }

    #[test]
    fn averages_from_published_rows() {
        let avg = |v: [f64; 3]| {
            let per = v.map(|s| ClassMetrics::defined(s, s, s, s));
            class_averaged(&per).unwrap().sensitivity.unwrap()
        };
        assert!((avg([0.9316, 0.9903, 0.9993]) - 0.9737).abs() < 5e-5);
        assert!((avg([0.9956, 0.9656, 0.9994]) - 0.9869).abs() < 5e-5);
        assert!((avg([0.9422, 0.9502, 0.9981]) - 0.9635).abs() < 5e-5);
    }

    #[test]
    fn prediction_log_parsing() {
        let text = "image_path,true_label,predicted_label\nfake/a,b.png,0,1\n\n# note\nreal/c.png, 1 , 1\n";
        let p = parse_predictions(text).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p[0].image_path, "fake/a,b.png");
        assert_eq!((p[0].truth, p[0].predicted), (Fake, Real));
        assert_eq!(
            parse_predictions("a.png,0,0\nb.png,3,0\n"),
            Err(EvalError::Parse {
                line: 2,
                message: "invalid label \"3\" (expected 0, 1 or 2)".into()
            })
        );
        assert!(matches!(
            parse_predictions("a.png,0\n"),
            Err(EvalError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn report_csv_layout() {
        let preds = vec![
            Prediction {
                image_path: "a".into(),
                truth: Fake,
                predicted: Fake,
            },
            Prediction {
                image_path: "b".into(),
                truth: Real,
                predicted: Real,
            },
            Prediction {
                image_path: "c".into(),
                truth: Synthetic,
                predicted: Synthetic,
            },
        ];
        let r = evaluate(&preds).unwrap();
        let csv = r.to_csv();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], EvalReport::CSV_HEADER);
        assert_eq!(lines[1], "fake,1,1,1,1");
        assert_eq!(lines[4], "average,1,1,1,1");
        assert!(r.to_table().contains("1.0000"));
    }

    fn arb_matrix() -> impl Strategy<Value = ConfusionMatrix3> {
        proptest::array::uniform3(proptest::array::uniform3(0u64..500))
            .prop_filter("nonempty", |c| c.iter().flatten().sum::<u64>() > 0)
            .prop_map(|counts| ConfusionMatrix3 { counts })
    }

    proptest! {
        #[test]
        fn metric_identities(cm in arb_matrix()) {
            let n = cm.total() as f64;
            let tp_sum: u64 = ClassLabel::ALL.iter().map(|&c| cm.counts[c.index()][c.index()]).sum();
            prop_assert_eq!(tp_sum, cm.trace());
            for c in ClassLabel::ALL {
                let m = per_class_metrics(&cm, c);
                let tp = cm.counts[c.index()][c.index()] as f64;
                let fp = cm.col_sum(c) as f64 - tp;
                let fn_ = cm.row_sum(c) as f64 - tp;
                let tn = n - tp - fp - fn_;
                prop_assert!((m.accuracy.unwrap() - (tp + tn) / n).abs() < 1e-15);
                for v in m.fields().into_iter().flatten() {
                    prop_assert!((0.0..=1.0).contains(&v));
                }
            }
        }

        #[test]
        fn permuting_classes_permutes_metrics(cm in arb_matrix(), perm_idx in 0usize..6) {
            const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
            let p = PERMS[perm_idx];
            let mut permuted = ConfusionMatrix3::default();
            for t in 0..3 {
                for q in 0..3 {
                    permuted.counts[p[t]][p[q]] = cm.counts[t][q];
                }
            }
            let orig = ClassLabel::ALL.map(|c| per_class_metrics(&cm, c));
            let perm = ClassLabel::ALL.map(|c| per_class_metrics(&permuted, c));
            for c in 0..3 {
                prop_assert_eq!(orig[c], perm[p[c]]);
            }
            if let (Ok(a), Ok(b)) = (class_averaged(&orig), class_averaged(&perm)) {
                for (x, y) in a.fields().iter().zip(b.fields()) {
                    prop_assert!((x.unwrap() - y.unwrap()).abs() < 1e-15);
                }
            }
        }
    }
}
