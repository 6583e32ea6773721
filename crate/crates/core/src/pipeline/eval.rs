use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::write_atomic;
use crate::error::{Error, Result};
use crate::svm::fmt17;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Number of test samples whose true class this is.
    pub support: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub class_names: Vec<String>,
    /// Rows are true classes, columns predicted classes.
    pub confusion: Vec<Vec<usize>>,
    pub per_class: Vec<ClassMetrics>,
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub train_samples: usize,
    pub test_samples: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Confusion matrix and per-class and macro-averaged metrics. Class names
/// default to the class indices.
pub fn evaluate(predictions: &[usize], truths: &[usize], classes: usize) -> Result<EvalReport> {
    if predictions.len() != truths.len() {
        return Err(Error::shape(format!(
            "{} predictions for {} labels",
            predictions.len(),
            truths.len()
        )));
    }
    if predictions.is_empty() || classes == 0 {
        return Err(Error::shape("nothing to evaluate"));
    }
    let mut confusion = vec![vec![0usize; classes]; classes];
    for (&p, &t) in predictions.iter().zip(truths) {
        if p >= classes || t >= classes {
            return Err(Error::Contract(format!(
                "label {} out of range for {classes} classes",
                p.max(t)
            )));
        }
        confusion[t][p] += 1;
    }
    let per_class: Vec<ClassMetrics> = (0..classes)
        .map(|k| {
            let tp = confusion[k][k];
            let predicted: usize = confusion.iter().map(|row| row[k]).sum();
            let actual: usize = confusion[k].iter().sum();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, actual);
            ClassMetrics {
                precision,
                recall,
                f1: harmonic(precision, recall),
                support: actual,
            }
        })
        .collect();
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / classes as f64;
    let correct: usize = (0..classes).map(|k| confusion[k][k]).sum();
    Ok(EvalReport {
        class_names: (0..classes).map(|k| k.to_string()).collect(),
        accuracy: ratio(correct, predictions.len()),
        macro_precision: mean(|m| m.precision),
        macro_recall: mean(|m| m.recall),
        macro_f1: mean(|m| m.f1),
        confusion,
        per_class,
        train_samples: 0,
        test_samples: predictions.len(),
    })
}

impl EvalReport {
    pub fn classes(&self) -> usize {
        self.confusion.len()
    }

    pub fn with_class_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.classes() {
            return Err(Error::shape(format!(
                "{} class names for {} classes",
                names.len(),
                self.classes()
            )));
        }
        self.class_names = names;
        Ok(self)
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        for (key, value) in [
            ("accuracy", fmt17(self.accuracy)),
            ("macro_precision", fmt17(self.macro_precision)),
            ("macro_recall", fmt17(self.macro_recall)),
            ("macro_f1", fmt17(self.macro_f1)),
            ("classes", self.classes().to_string()),
            ("train_samples", self.train_samples.to_string()),
            ("test_samples", self.test_samples.to_string()),
        ] {
            writeln!(s, "{key}={value}").expect("string write");
        }
        s
    }

    pub fn confusion_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["true\\predicted".to_string()];
        header.extend(self.class_names.iter().cloned());
        w.write_record(&header).map_err(csv_err)?;
        for (name, row) in self.class_names.iter().zip(&self.confusion) {
            let mut record = vec![name.clone()];
            record.extend(row.iter().map(usize::to_string));
            w.write_record(&record).map_err(csv_err)?;
        }
        finish(w)
    }

    pub fn per_class_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["class", "precision", "recall", "f1", "support"])
            .map_err(csv_err)?;
        for (name, m) in self.class_names.iter().zip(&self.per_class) {
            w.write_record([
                name.clone(),
                fmt17(m.precision),
                fmt17(m.recall),
                fmt17(m.f1),
                m.support.to_string(),
            ])
            .map_err(csv_err)?;
        }
        finish(w)
    }

    /// Write `summary.txt`, `confusion.csv` and `per_class.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_atomic(&dir.join("summary.txt"), self.summary().as_bytes())?;
        write_atomic(&dir.join("confusion.csv"), self.confusion_csv()?.as_bytes())?;
        write_atomic(&dir.join("per_class.csv"), self.per_class_csv()?.as_bytes())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Contract(format!("csv: {e}"))
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Contract(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Per-class precision, recall and F1 of several models side by side: one
/// row per class per model, then one summary row per model.
pub fn compare_csv(reports: &[(String, EvalReport)]) -> Result<String> {
    let Some((_, first)) = reports.first() else {
        return Err(Error::shape("no reports to compare"));
    };
    for (name, r) in reports {
        if r.classes() != first.classes() || r.class_names != first.class_names {
            return Err(Error::shape(format!("report {name} has different classes")));
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "model",
        "kind",
        "class",
        "precision",
        "recall",
        "f1",
        "accuracy",
    ])
    .map_err(csv_err)?;
    for (name, r) in reports {
        for (class, m) in r.class_names.iter().zip(&r.per_class) {
            w.write_record([
                name.as_str(),
                "class",
                class,
                &fmt17(m.precision),
                &fmt17(m.recall),
                &fmt17(m.f1),
                "",
            ])
            .map_err(csv_err)?;
        }
    }
    for (name, r) in reports {
        w.write_record([
            name.as_str(),
            "macro",
            "",
            &fmt17(r.macro_precision),
            &fmt17(r.macro_recall),
            &fmt17(r.macro_f1),
            &fmt17(r.accuracy),
        ])
        .map_err(csv_err)?;
    }
    finish(w)
}

pub fn compare_report(reports: &[(String, EvalReport)], out: &Path) -> Result<()> {
    write_atomic(out, compare_csv(reports)?.as_bytes())
}
