//! Confusion matrices, accuracy/precision/recall/F1 and table rendering.

use std::fmt::Display;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Example;
use crate::error::{Error, Result};
use crate::model::Classifier;
use crate::topics::TopicConcat;

/// Square count matrix indexed `[gold][predicted]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: Vec<String>) -> Self {
        let k = classes.len();
        ConfusionMatrix {
            classes,
            counts: vec![vec![0; k]; k],
        }
    }

    /// Binary matrix with `classes = [positive, negative]`.
    pub fn binary(tp: u64, fn_: u64, fp: u64, tn: u64) -> Self {
        ConfusionMatrix {
            classes: vec!["positive".into(), "negative".into()],
            counts: vec![vec![tp, fn_], vec![fp, tn]],
        }
    }

    pub fn index(&self, class: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == class)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.classes.len()).map(|i| self.counts[i][i]).sum()
    }

    /// (tp, fp, fn) for class `c` against the rest.
    pub fn one_vs_rest(&self, c: usize) -> (u64, u64, u64) {
        let tp = self.counts[c][c];
        let predicted: u64 = self.counts.iter().map(|row| row[c]).sum();
        let gold: u64 = self.counts[c].iter().sum();
        (tp, predicted - tp, gold - tp)
    }
}

/// Builds a confusion matrix over `classes`. Labels outside `classes` are an error.
pub fn confusion<S: AsRef<str>>(gold: &[S], predicted: &[S], classes: &[String]) -> Result<ConfusionMatrix> {
    if gold.len() != predicted.len() {
        return Err(Error::InvalidInput(format!(
            "{} gold labels but {} predictions",
            gold.len(),
            predicted.len()
        )));
    }
    if gold.is_empty() {
        return Err(Error::InvalidInput("no examples to score".into()));
    }
    let mut cm = ConfusionMatrix::new(classes.to_vec());
    let lookup = |label: &str| {
        cm.index(label).ok_or_else(|| Error::UnknownLabel {
            label: label.to_string(),
            known: classes.join(", "),
        })
    };
    let pairs = gold
        .iter()
        .zip(predicted)
        .map(|(g, p)| Ok((lookup(g.as_ref())?, lookup(p.as_ref())?)))
        .collect::<Result<Vec<_>>>()?;
    for (g, p) in pairs {
        cm.counts[g][p] += 1;
    }
    Ok(cm)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    /// Precision or recall had a zero denominator and was reported as 0.
    pub degenerate: bool,
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

fn class_metrics(cm: &ConfusionMatrix, c: usize) -> ClassMetrics {
    let (tp, fp, fn_) = cm.one_vs_rest(c);
    let (precision, dp) = ratio(tp, tp + fp);
    let (recall, dr) = ratio(tp, tp + fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    ClassMetrics {
        class: cm.classes[c].clone(),
        precision,
        recall,
        f1,
        support: tp + fn_,
        degenerate: dp || dr,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Positive class for binary averaging; `None` means macro averaging.
    pub positive: Option<String>,
    pub per_class: Vec<ClassMetrics>,
    pub degenerate: bool,
}

/// Binary metrics for `positive`, or macro averages over all classes when
/// `positive` is `None`. Zero denominators yield 0 and set `degenerate`.
pub fn metrics(cm: &ConfusionMatrix, positive: Option<&str>) -> Result<Metrics> {
    let per_class: Vec<ClassMetrics> = (0..cm.classes.len()).map(|c| class_metrics(cm, c)).collect();
    let (accuracy, empty) = ratio(cm.correct(), cm.total());
    let (precision, recall, f1, degenerate) = match positive {
        Some(p) => {
            let c = cm.index(p).ok_or_else(|| Error::UnknownLabel {
                label: p.to_string(),
                known: cm.classes.join(", "),
            })?;
            let m = &per_class[c];
            (m.precision, m.recall, m.f1, m.degenerate)
        }
        None => {
            let k = per_class.len().max(1) as f64;
            (
                per_class.iter().map(|m| m.precision).sum::<f64>() / k,
                per_class.iter().map(|m| m.recall).sum::<f64>() / k,
                per_class.iter().map(|m| m.f1).sum::<f64>() / k,
                per_class.iter().any(|m| m.degenerate),
            )
        }
    };
    Ok(Metrics {
        accuracy,
        precision,
        recall,
        f1,
        positive: positive.map(str::to_string),
        per_class,
        degenerate: degenerate || empty,
    })
}

#[derive(Debug, Clone, Default)]
pub struct EvalOptions<'a> {
    /// Positive class for binary metrics; macro averaging when `None`.
    pub positive: Option<String>,
    /// Appends each text's topic before prediction.
    pub topic_model: Option<&'a dyn TopicConcat>,
    pub dataset: String,
    pub model: String,
    /// Whether the model was trained on back-translated data.
    pub back_translation: bool,
}

impl std::fmt::Debug for dyn TopicConcat + '_ {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("TopicConcat")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub dataset: String,
    pub model: String,
    pub back_translation: bool,
    pub topic_in_input: bool,
    pub n_examples: usize,
    pub metrics: Metrics,
    pub confusion: ConfusionMatrix,
}

/// Scores `model` on `dataset`. Augmented examples are rejected since
/// evaluation sets must hold original texts only.
pub fn evaluate<L: Display + Sync>(
    model: &dyn Classifier,
    dataset: &[Example<L>],
    options: &EvalOptions,
) -> Result<EvaluationReport> {
    if let Some(i) = dataset.iter().position(|e| e.augmented) {
        return Err(Error::InvalidInput(format!(
            "evaluation set contains an augmented example at index {i}"
        )));
    }
    let results: Vec<(String, String)> = dataset
        .par_iter()
        .map(|e| {
            let text = match options.topic_model {
                Some(tm) => tm.with_topic(&e.text)?,
                None => e.text.clone(),
            };
            Ok((e.label.to_string(), model.predict(&text)?.label))
        })
        .collect::<Result<_>>()?;
    let (gold, predicted): (Vec<String>, Vec<String>) = results.into_iter().unzip();
    let cm = confusion(&gold, &predicted, model.classes())?;
    Ok(EvaluationReport {
        dataset: options.dataset.clone(),
        model: options.model.clone(),
        back_translation: options.back_translation,
        topic_in_input: options.topic_model.is_some(),
        n_examples: dataset.len(),
        metrics: metrics(&cm, options.positive.as_deref())?,
        confusion: cm,
    })
}

fn render_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, &w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
            .collect();
        format!("| {} |\n", padded.join(" | "))
    };
    let mut out = line(header.to_vec());
    let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
    out.push_str(&format!("|-{}-|\n", rule.join("-|-")));
    for row in rows {
        out.push_str(&line(row.iter().map(String::as_str).collect()));
    }
    out
}

fn pct(x: f64) -> String {
    format!("{:.0}", (x * 100.0).round())
}

/// Binary-detector table: one row per model, whole percentages.
pub fn render_detector_table(reports: &[EvaluationReport]) -> String {
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            let m = &r.metrics;
            vec![r.model.clone(), pct(m.accuracy), pct(m.recall), pct(m.precision), pct(m.f1)]
        })
        .collect();
    render_table(&["Model", "Accuracy", "Recall", "Precision", "F1"], &rows)
}

/// Target-classifier table: one row per evaluation configuration with
/// check marks for back-translation and topic input.
pub fn render_target_table(reports: &[EvaluationReport]) -> String {
    let mark = |b: bool| if b { "✓".to_string() } else { String::new() };
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            let m = &r.metrics;
            vec![
                r.dataset.clone(),
                mark(r.back_translation),
                mark(r.topic_in_input),
                format!("{:.2}", m.accuracy),
                format!("{:.2}", m.recall),
                format!("{:.2}", m.precision),
                format!("{:.2}", m.f1),
            ]
        })
        .collect();
    render_table(
        &[
            "Evaluation dataset",
            "Back Translation",
            "Topic in input",
            "Accuracy",
            "Recall",
            "Precision",
            "F1",
        ],
        &rows,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn hand_counts() {
        let classes = vec!["h".to_string(), "n".to_string()];
        let cm = confusion(&["h", "n", "n"], &["h", "h", "n"], &classes).unwrap();
        assert_eq!(cm.counts, vec![vec![1, 0], vec![1, 1]]);
        let m = metrics(&ConfusionMatrix::binary(3, 2, 1, 4), Some("positive")).unwrap();
        assert!(close(m.precision, 0.75) && close(m.recall, 0.6) && close(m.accuracy, 0.7));
        assert!((m.f1 - 2.0 / 3.0).abs() < 1e-12);
        let all_one = metrics(&ConfusionMatrix::binary(5, 0, 5, 0), Some("positive")).unwrap();
        assert!(close(all_one.accuracy, 0.5) && close(all_one.recall, 1.0) && close(all_one.precision, 0.5));
    }

    #[test]
    fn binary_spot_check() {
        let cm = ConfusionMatrix::binary(76, 24, 53, 155);
        let m = metrics(&cm, Some("positive")).unwrap();
        assert_eq!(pct(m.accuracy), "75");
        assert_eq!(pct(m.recall), "76");
        assert_eq!(pct(m.precision), "59");
        assert_eq!(pct(m.f1), "66");
        assert!(!m.degenerate);
    }

    #[test]
    fn degenerate_cases() {
        let cm = ConfusionMatrix::binary(0, 5, 0, 5);
        let m = metrics(&cm, Some("positive")).unwrap();
        assert_eq!(m.precision, 0.0);
        assert_eq!(m.f1, 0.0);
        assert!(m.degenerate);
        let empty = ConfusionMatrix::binary(0, 0, 0, 0);
        let m = metrics(&empty, None).unwrap();
        assert_eq!(m.accuracy, 0.0);
        assert!(m.degenerate);
    }

    #[test]
    fn macro_bounds() {
        let classes: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let gold = ["a", "a", "b", "c", "c", "c"];
        let pred = ["a", "b", "b", "c", "a", "c"];
        let cm = confusion(&gold, &pred, &classes).unwrap();
        assert_eq!(cm.total(), 6);
        let m = metrics(&cm, None).unwrap();
        let f1s: Vec<f64> = m.per_class.iter().map(|c| c.f1).collect();
        let lo = f1s.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = f1s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(lo <= m.f1 && m.f1 <= hi);
        assert!(close(m.accuracy, 4.0 / 6.0));
    }

    #[test]
    fn unknown_labels_rejected() {
        let classes = vec!["a".to_string()];
        assert!(confusion(&["a"], &["z"], &classes).is_err());
        assert!(confusion(&["a", "a"], &["a"], &classes).is_err());
        assert!(confusion::<&str>(&[], &[], &classes).is_err());
        let cm = ConfusionMatrix::new(classes);
        assert!(metrics(&cm, Some("q")).is_err());
    }

    fn report(dataset: &str, bt: bool, topic: bool) -> EvaluationReport {
        let cm = ConfusionMatrix::binary(76, 24, 53, 155);
        EvaluationReport {
            dataset: dataset.into(),
            model: "fastText".into(),
            back_translation: bt,
            topic_in_input: topic,
            n_examples: 308,
            metrics: metrics(&cm, None).unwrap(),
            confusion: cm,
        }
    }

    #[test]
    fn target_table_marks() {
        let table = render_target_table(&[report("TAP", false, true)]);
        let row = table.lines().nth(2).unwrap();
        let cells: Vec<&str> = row.trim_matches('|').split('|').map(str::trim).collect();
        assert_eq!(cells[0], "TAP");
        assert_eq!(cells[1], "");
        assert_eq!(cells[2], "✓");
    }

    #[test]
    fn detector_table_percentages() {
        let mut r = report("x", false, false);
        r.metrics = metrics(&r.confusion, Some("positive")).unwrap();
        let table = render_detector_table(&[r]);
        assert!(table.contains("| fastText | 75       | 76     | 59        | 66 |"), "{table}");
    }
}
