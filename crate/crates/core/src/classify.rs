//! Nearest-model classification.
//!
//! One model is learned per class. A test sequence is cut into fixed-length
//! segments, each segment is compressed against every class model and the
//! class with the lowest NRC wins. Exact ties go to the lexicographically
//! smallest label.

use std::collections::HashSet;
use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{learn, ModelParams, XaModel};
use crate::nrc::nrc;
use crate::sequence::SymbolSequence;

pub(crate) fn check_label(label: &str) -> Result<()> {
    if label.is_empty() || label.contains([',', '\n', '\r']) {
        return Err(Error::InvalidLabel(label.to_string()));
    }
    Ok(())
}

/// Frozen per-class models sharing one parameter set.
#[derive(Clone, Debug)]
pub struct ClassModelSet {
    entries: Vec<(String, XaModel)>,
}

impl ClassModelSet {
    pub fn new(entries: Vec<(String, XaModel)>) -> Result<Self> {
        let Some((_, first)) = entries.first() else {
            return Err(Error::NoClasses);
        };
        let params = first.params().clone();
        let mut seen = HashSet::new();
        for (label, model) in &entries {
            check_label(label)?;
            if !seen.insert(label.as_str()) {
                return Err(Error::DuplicateLabel(label.clone()));
            }
            if *model.params() != params {
                return Err(Error::InvalidParams(format!(
                    "class {label:?} was learned with different parameters"
                )));
            }
        }
        Ok(ClassModelSet { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn params(&self) -> &ModelParams {
        self.entries[0].1.params()
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(l, _)| l.as_str())
    }

    pub fn models(&self) -> impl Iterator<Item = &XaModel> {
        self.entries.iter().map(|(_, m)| m)
    }

    fn position(&self, label: &str) -> Option<usize> {
        self.entries.iter().position(|(l, _)| l == label)
    }
}

/// Learns one model per labelled reference, in parallel.
pub fn train_class_models(references: &[(String, SymbolSequence)], params: &ModelParams) -> Result<ClassModelSet> {
    if references.is_empty() {
        return Err(Error::NoClasses);
    }
    let mut seen = HashSet::new();
    for (label, seq) in references {
        check_label(label)?;
        if !seen.insert(label.as_str()) {
            return Err(Error::DuplicateLabel(label.clone()));
        }
        if seq.is_empty() {
            return Err(Error::EmptyClassReference(label.clone()));
        }
    }
    let entries = references
        .par_iter()
        .map(|(label, seq)| Ok((label.clone(), learn(seq, params.clone())?)))
        .collect::<Result<Vec<_>>>()?;
    ClassModelSet::new(entries)
}

/// Joins several sequences over one alphabet end to end.
pub fn concatenate(parts: &[SymbolSequence]) -> Result<SymbolSequence> {
    let first = parts.first().ok_or(Error::EmptyInput)?;
    let mut data = Vec::with_capacity(parts.iter().map(SymbolSequence::len).sum());
    for part in parts {
        if part.alphabet() != first.alphabet() {
            return Err(Error::AlphabetMismatch {
                model: first.alphabet().to_string(),
                sequence: part.alphabet().to_string(),
            });
        }
        data.extend_from_slice(part.data());
    }
    SymbolSequence::new(first.alphabet().clone(), data)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segments {
    pub segments: Vec<SymbolSequence>,
    /// Trailing symbols not covered by any segment.
    pub dropped: usize,
}

/// Consecutive non-overlapping segments of exactly `segment_len` symbols.
pub fn split_segments(target: &SymbolSequence, segment_len: usize) -> Result<Segments> {
    split_segments_strided(target, segment_len, segment_len)
}

/// Segments of `segment_len` symbols starting every `stride` symbols.
pub fn split_segments_strided(target: &SymbolSequence, segment_len: usize, stride: usize) -> Result<Segments> {
    if segment_len == 0 || stride == 0 {
        return Err(Error::InvalidParams("segment length and stride must be at least 1".into()));
    }
    let n = target.len();
    let mut segments = Vec::new();
    let mut covered = 0;
    let mut start = 0;
    while start + segment_len <= n {
        segments.push(target.slice(start..start + segment_len));
        covered = start + segment_len;
        start += stride;
    }
    Ok(Segments {
        segments,
        dropped: n - covered,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Decision {
    pub label: String,
    /// NRC against every class, in model-set order.
    pub nrc: Vec<f64>,
}

pub fn classify_segment(segment: &SymbolSequence, models: &ClassModelSet) -> Result<Decision> {
    let scores = models
        .models()
        .map(|m| nrc(segment, m).map(|v| v.value()))
        .collect::<Result<Vec<_>>>()?;
    let best = argmin_by_label(&scores, models);
    Ok(Decision {
        label: models.entries[best].0.clone(),
        nrc: scores,
    })
}

fn argmin_by_label(scores: &[f64], models: &ClassModelSet) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        let current = scores[best];
        if s < current || (s == current && models.entries[i].0 < models.entries[best].0) {
            best = i;
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq)]
pub struct SegmentDecision {
    pub segment_id: usize,
    /// Index of the test sequence the segment came from.
    pub source: usize,
    pub true_label: Option<String>,
    pub predicted: String,
    pub nrc: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassificationReport {
    pub labels: Vec<String>,
    pub decisions: Vec<SegmentDecision>,
    /// `confusion[true][predicted]`, indexed like `labels`.
    pub confusion: Vec<Vec<u64>>,
    /// Symbols dropped at the end of each test sequence.
    pub dropped: Vec<usize>,
}

impl ClassificationReport {
    /// Fraction of labelled segments classified correctly; `None` when there
    /// are none.
    pub fn accuracy(&self) -> Option<f64> {
        let (correct, total) = self.tally();
        (total > 0).then(|| correct as f64 / total as f64)
    }

    /// `(correct, labelled)` segment counts.
    pub fn tally(&self) -> (u64, u64) {
        let correct = (0..self.labels.len()).map(|i| self.confusion[i][i]).sum();
        let total = self.confusion.iter().flatten().sum();
        (correct, total)
    }

    /// `accuracy=<value> correct=<n> total=<n>`, or `accuracy=no-data`.
    pub fn summary(&self) -> String {
        let (correct, total) = self.tally();
        match self.accuracy() {
            Some(a) => format!("accuracy={a:.6} correct={correct} total={total}"),
            None => "accuracy=no-data correct=0 total=0".to_string(),
        }
    }

    /// `segment_id,true_label,predicted_label,nrc_<label>...`, one row per
    /// segment, then the summary as a `#` comment line.
    pub fn write_csv<W: Write>(&self, mut sink: W) -> Result<()> {
        write!(sink, "segment_id,true_label,predicted_label")?;
        for label in &self.labels {
            write!(sink, ",nrc_{label}")?;
        }
        writeln!(sink)?;
        for d in &self.decisions {
            write!(
                sink,
                "{},{},{}",
                d.segment_id,
                d.true_label.as_deref().unwrap_or(""),
                d.predicted
            )?;
            for v in &d.nrc {
                write!(sink, ",{v:.6}")?;
            }
            writeln!(sink)?;
        }
        writeln!(sink, "# {}", self.summary())?;
        sink.flush()?;
        Ok(())
    }

    /// Rows are true labels, columns predicted labels.
    pub fn write_confusion_csv<W: Write>(&self, mut sink: W) -> Result<()> {
        write!(sink, "true\\predicted")?;
        for label in &self.labels {
            write!(sink, ",{label}")?;
        }
        writeln!(sink)?;
        for (label, row) in self.labels.iter().zip(&self.confusion) {
            write!(sink, "{label}")?;
            for c in row {
                write!(sink, ",{c}")?;
            }
            writeln!(sink)?;
        }
        sink.flush()?;
        Ok(())
    }
}

/// Splits every test sequence, classifies all segments and tallies the
/// results. Segments are classified on the current rayon pool; the report
/// keeps input order.
pub fn evaluate(
    test: &[(Option<String>, SymbolSequence)],
    models: &ClassModelSet,
    segment_len: usize,
) -> Result<ClassificationReport> {
    evaluate_strided(test, models, segment_len, segment_len)
}

pub fn evaluate_strided(
    test: &[(Option<String>, SymbolSequence)],
    models: &ClassModelSet,
    segment_len: usize,
    stride: usize,
) -> Result<ClassificationReport> {
    let mut truth = Vec::with_capacity(test.len());
    for (label, _) in test {
        truth.push(match label {
            Some(l) => Some(models.position(l).ok_or_else(|| Error::UnknownLabel(l.clone()))?),
            None => None,
        });
    }
    let mut work = Vec::new();
    let mut dropped = Vec::with_capacity(test.len());
    for (source, (_, seq)) in test.iter().enumerate() {
        let split = split_segments_strided(seq, segment_len, stride)?;
        dropped.push(split.dropped);
        work.extend(split.segments.into_iter().map(|s| (source, s)));
    }
    let decided = work
        .par_iter()
        .map(|(source, seg)| classify_segment(seg, models).map(|d| (*source, d)))
        .collect::<Result<Vec<_>>>()?;

    let labels: Vec<String> = models.labels().map(str::to_string).collect();
    let mut confusion = vec![vec![0u64; labels.len()]; labels.len()];
    let decisions = decided
        .into_iter()
        .enumerate()
        .map(|(segment_id, (source, d))| {
            let predicted = models.position(&d.label).expect("label from the model set");
            if let Some(t) = truth[source] {
                confusion[t][predicted] += 1;
            }
            SegmentDecision {
                segment_id,
                source,
                true_label: test[source].0.clone(),
                predicted: d.label,
                nrc: d.nrc,
            }
        })
        .collect();
    Ok(ClassificationReport {
        labels,
        decisions,
        confusion,
        dropped,
    })
}
