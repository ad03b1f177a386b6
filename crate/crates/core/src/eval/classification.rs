use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::taxonomy::{collapse, parse_class, BinaryClass, EarClass};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledPrediction {
    pub item_id: String,
    pub true_class: EarClass,
    pub predicted_class: EarClass,
}

impl LabeledPrediction {
    pub fn new(item_id: impl Into<String>, true_class: EarClass, predicted_class: EarClass) -> Self {
        Self {
            item_id: item_id.into(),
            true_class,
            predicted_class,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    /// 0 when nothing was predicted as this class.
    pub precision: f64,
    /// 0 when the class never occurs.
    pub recall: f64,
    pub support: u64,
    pub predicted: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub n: u64,
    pub categorical_correct: u64,
    pub categorical_accuracy: f64,
    pub binary_correct: u64,
    pub binary_accuracy: f64,
    pub per_class: BTreeMap<EarClass, ClassMetrics>,
    /// Rows are true classes, columns predictions, both in `EarClass::ALL` order.
    pub confusion: Vec<Vec<u64>>,
    /// Same layout over `BinaryClass::ALL`.
    pub binary_confusion: Vec<Vec<u64>>,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn trace(m: &[Vec<u64>]) -> u64 {
    m.iter().enumerate().map(|(i, row)| row[i]).sum()
}

pub fn classification_report(preds: &[LabeledPrediction]) -> Result<ClassificationReport, EvalError> {
    if preds.is_empty() {
        return Err(EvalError::EmptyEvaluationSet);
    }
    let mut confusion = vec![vec![0u64; EarClass::ALL.len()]; EarClass::ALL.len()];
    let mut binary_confusion = vec![vec![0u64; 2]; 2];
    for p in preds {
        confusion[p.true_class.index()][p.predicted_class.index()] += 1;
        binary_confusion[collapse(p.true_class).index()][collapse(p.predicted_class).index()] += 1;
    }
    let n = preds.len() as u64;
    let categorical_correct = trace(&confusion);
    let binary_correct = trace(&binary_confusion);
    let per_class = EarClass::ALL
        .iter()
        .map(|&c| {
            let i = c.index();
            let tp = confusion[i][i];
            let support: u64 = confusion[i].iter().sum();
            let predicted: u64 = confusion.iter().map(|row| row[i]).sum();
            (
                c,
                ClassMetrics {
                    precision: ratio(tp, predicted),
                    recall: ratio(tp, support),
                    support,
                    predicted,
                },
            )
        })
        .collect();
    Ok(ClassificationReport {
        n,
        categorical_correct,
        categorical_accuracy: ratio(categorical_correct, n),
        binary_correct,
        binary_accuracy: ratio(binary_correct, n),
        per_class,
        confusion,
        binary_confusion,
    })
}

impl ClassificationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "items:                {}", self.n);
        let _ = writeln!(
            out,
            "categorical accuracy: {:.4} ({}/{})",
            self.categorical_accuracy, self.categorical_correct, self.n
        );
        let _ = writeln!(
            out,
            "binary accuracy:      {:.4} ({}/{})",
            self.binary_accuracy, self.binary_correct, self.n
        );
        let _ = writeln!(out);
        let _ = writeln!(out, "{:<18} {:>9} {:>9} {:>8} {:>9}", "class", "precision", "recall", "support", "predicted");
        for (c, m) in &self.per_class {
            let _ = writeln!(
                out,
                "{:<18} {:>9.4} {:>9.4} {:>8} {:>9}",
                c.canonical_label(),
                m.precision,
                m.recall,
                m.support,
                m.predicted
            );
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "confusion (rows = true, cols = predicted):");
        let _ = write!(out, "{:<18}", "");
        for i in 0..EarClass::ALL.len() {
            let _ = write!(out, " {:>4}", format!("c{i}"));
        }
        let _ = writeln!(out);
        for (i, row) in self.confusion.iter().enumerate() {
            let _ = write!(out, "{:<18}", format!("c{i} {}", EarClass::ALL[i].canonical_label()));
            for v in row {
                let _ = write!(out, " {v:>4}");
            }
            let _ = writeln!(out);
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "binary confusion (rows = true, cols = predicted):");
        let _ = writeln!(out, "{:<14} {:>10} {:>12}", "", BinaryClass::NormalEar, BinaryClass::AbnormalEar);
        for (i, row) in self.binary_confusion.iter().enumerate() {
            let _ = writeln!(out, "{:<14} {:>10} {:>12}", BinaryClass::ALL[i].canonical_label(), row[0], row[1]);
        }
        out
    }
}

#[derive(Deserialize)]
struct JsonPrediction {
    item_id: String,
    #[serde(rename = "true")]
    true_label: String,
    pred: String,
}

/// Reads `item_id,true,pred` rows from CSV (with header), or JSON lines with
/// the same keys when the file ends in `.jsonl`. Class labels go through the
/// alias table.
pub fn read_predictions(path: &Path) -> Result<Vec<LabeledPrediction>, EvalError> {
    let is_jsonl = path.extension().and_then(|e| e.to_str()) == Some("jsonl");
    let file = std::fs::File::open(path)?;
    if is_jsonl {
        parse_predictions_jsonl(std::io::BufReader::new(file))
    } else {
        parse_predictions_csv(file)
    }
}

fn class_at(label: &str, line: u64) -> Result<EarClass, EvalError> {
    parse_class(label).map_err(|e| EvalError::Input {
        line,
        message: e.to_string(),
    })
}

pub fn parse_predictions_csv<R: std::io::Read>(r: R) -> Result<Vec<LabeledPrediction>, EvalError> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(r);
    let mut out = Vec::new();
    let mut record = csv::StringRecord::new();
    loop {
        let line = reader.position().line() + 1;
        let more = reader.read_record(&mut record).map_err(|e| EvalError::Input {
            line: e.position().map(|p| p.line()).unwrap_or(line),
            message: e.to_string(),
        })?;
        if !more {
            break;
        }
        let line = record.position().map(|p| p.line()).unwrap_or(line);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() != 3 {
            return Err(EvalError::Input {
                line,
                message: format!("expected 3 fields (item_id,true,pred), found {}", record.len()),
            });
        }
        out.push(LabeledPrediction::new(&record[0], class_at(&record[1], line)?, class_at(&record[2], line)?));
    }
    Ok(out)
}

pub fn parse_predictions_jsonl<R: BufRead>(r: R) -> Result<Vec<LabeledPrediction>, EvalError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line_no = i as u64 + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: JsonPrediction = serde_json::from_str(&line).map_err(|e| EvalError::Input {
            line: line_no,
            message: e.to_string(),
        })?;
        out.push(LabeledPrediction::new(
            rec.item_id,
            class_at(&rec.true_label, line_no)?,
            class_at(&rec.pred, line_no)?,
        ));
    }
    Ok(out)
}
