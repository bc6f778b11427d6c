//! Label-sequence metrics and inter-annotator agreement.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labels::{Label, LabelSet};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("gold and prediction lists differ in length ({golds} vs {preds})")]
    LengthMismatch { golds: usize, preds: usize },
    #[error("empty input")]
    EmptyList,
    #[error("insufficient data for agreement: {0}")]
    InsufficientData(String),
}

/// Edit distance with unit-cost insertion, deletion and substitution.
pub fn levenshtein<T: PartialEq>(source: &[T], target: &[T]) -> usize {
    if source.is_empty() {
        return target.len();
    }
    if target.is_empty() {
        return source.len();
    }
    let mut prev: Vec<usize> = (0..=target.len()).collect();
    let mut cur = vec![0; target.len() + 1];
    for (i, s) in source.iter().enumerate() {
        cur[0] = i + 1;
        for (j, t) in target.iter().enumerate() {
            let substitution = prev[j] + usize::from(s != t);
            cur[j + 1] = substitution.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[target.len()]
}

/// Normalised Levenshtein similarity with a flag for the degenerate
/// both-empty case.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nls {
    pub value: f64,
    pub both_empty: bool,
}

/// `1 - LD / max(len)`, in `[0, 1]`. Two empty sequences score 1.
pub fn nls<T: PartialEq>(source: &[T], target: &[T]) -> f64 {
    nls_flagged(source, target).value
}

pub fn nls_flagged<T: PartialEq>(source: &[T], target: &[T]) -> Nls {
    let longest = source.len().max(target.len());
    if longest == 0 {
        return Nls {
            value: 1.0,
            both_empty: true,
        };
    }
    Nls {
        value: 1.0 - levenshtein(source, target) as f64 / longest as f64,
        both_empty: false,
    }
}

/// `|a ∩ b| / |a ∪ b|`; 1 when both are empty.
pub fn set_jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

pub fn jaccard(a: &LabelSet, b: &LabelSet) -> f64 {
    set_jaccard(a.as_set(), b.as_set())
}

/// Jaccard similarity of two annotators' kept response sets.
pub fn pairwise_list_jaccard<T: Ord>(kept_a: &BTreeSet<T>, kept_b: &BTreeSet<T>) -> f64 {
    set_jaccard(kept_a, kept_b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    Micro,
    Macro,
    Samples,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    fn from_pr(precision: f64, recall: f64) -> Self {
        Prf {
            precision,
            recall,
            f1: harmonic(precision, recall),
        }
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Sample-averaged Jaccard.
    pub jaccard: f64,
    pub micro: Prf,
    pub macro_avg: Prf,
    pub samples: Prf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nls: Option<f64>,
    pub mean_len: f64,
    pub n_samples: usize,
}

impl MetricReport {
    pub fn prf(&self, averaging: Averaging) -> Prf {
        match averaging {
            Averaging::Micro => self.micro,
            Averaging::Macro => self.macro_avg,
            Averaging::Samples => self.samples,
        }
    }
}

/// Multi-label precision/recall/F1 under all three averaging schemes, plus
/// sample-averaged Jaccard and mean predicted-set size.
///
/// Macro averaging runs over the labels that occur in the golds or the
/// predictions; a present label with an empty denominator scores 0.
pub fn multilabel_prf(golds: &[LabelSet], preds: &[LabelSet]) -> Result<MetricReport, MetricsError> {
    if golds.len() != preds.len() {
        return Err(MetricsError::LengthMismatch {
            golds: golds.len(),
            preds: preds.len(),
        });
    }
    if golds.is_empty() {
        return Err(MetricsError::EmptyList);
    }

    let mut tp = [0usize; 11];
    let mut fp = [0usize; 11];
    let mut fn_ = [0usize; 11];
    let mut present = [false; 11];
    let (mut sum_p, mut sum_r, mut sum_f, mut sum_j) = (0.0, 0.0, 0.0, 0.0);
    let mut total_pred = 0usize;

    for (gold, pred) in golds.iter().zip(preds) {
        for label in Label::ALL {
            let (g, p) = (gold.contains(label), pred.contains(label));
            let i = label.index();
            present[i] |= g || p;
            match (g, p) {
                (true, true) => tp[i] += 1,
                (false, true) => fp[i] += 1,
                (true, false) => fn_[i] += 1,
                (false, false) => {}
            }
        }
        let hit = gold.as_set().intersection(pred.as_set()).count();
        let p = ratio(hit, pred.len());
        let r = ratio(hit, gold.len());
        sum_p += p;
        sum_r += r;
        sum_f += harmonic(p, r);
        sum_j += jaccard(gold, pred);
        total_pred += pred.len();
    }

    let n = golds.len() as f64;
    let (tp_all, fp_all, fn_all) = (
        tp.iter().sum::<usize>(),
        fp.iter().sum::<usize>(),
        fn_.iter().sum::<usize>(),
    );
    let micro = Prf::from_pr(ratio(tp_all, tp_all + fp_all), ratio(tp_all, tp_all + fn_all));

    let present_labels: Vec<usize> = (0..11).filter(|&i| present[i]).collect();
    let macro_avg = if present_labels.is_empty() {
        Prf::default()
    } else {
        let m = present_labels.len() as f64;
        let mut acc = Prf::default();
        for &i in &present_labels {
            let per = Prf::from_pr(ratio(tp[i], tp[i] + fp[i]), ratio(tp[i], tp[i] + fn_[i]));
            acc.precision += per.precision;
            acc.recall += per.recall;
            acc.f1 += per.f1;
        }
        Prf {
            precision: acc.precision / m,
            recall: acc.recall / m,
            f1: acc.f1 / m,
        }
    };

    Ok(MetricReport {
        jaccard: sum_j / n,
        micro,
        macro_avg,
        samples: Prf {
            precision: sum_p / n,
            recall: sum_r / n,
            f1: sum_f / n,
        },
        nls: None,
        mean_len: total_pred as f64 / n,
        n_samples: golds.len(),
    })
}

pub fn mean_sequence_length<S: AsRef<[Label]>>(seqs: &[S]) -> Result<f64, MetricsError> {
    if seqs.is_empty() {
        return Err(MetricsError::EmptyList);
    }
    let total: usize = seqs.iter().map(|s| s.as_ref().len()).sum();
    Ok(total as f64 / seqs.len() as f64)
}

/// Units × annotators grid; `None` marks a missing judgment.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationMatrix<V> {
    units: Vec<Vec<Option<V>>>,
    annotators: usize,
}

impl<V> AnnotationMatrix<V> {
    pub fn new(annotators: usize) -> Self {
        AnnotationMatrix {
            units: Vec::new(),
            annotators,
        }
    }

    /// Adds one unit; `values[i]` is annotator `i`'s judgment.
    ///
    /// # Panics
    /// If `values.len()` differs from the annotator count.
    pub fn push_unit(&mut self, values: Vec<Option<V>>) {
        assert_eq!(values.len(), self.annotators, "one cell per annotator");
        self.units.push(values);
    }

    pub fn from_units(annotators: usize, units: Vec<Vec<Option<V>>>) -> Self {
        let mut m = Self::new(annotators);
        for u in units {
            m.push_unit(u);
        }
        m
    }

    pub fn annotators(&self) -> usize {
        self.annotators
    }

    pub fn units(&self) -> &[Vec<Option<V>>] {
        &self.units
    }
}

/// 0/1 distance for categorical values.
pub fn nominal_distance<V: PartialEq>(a: &V, b: &V) -> f64 {
    if a == b {
        0.0
    } else {
        1.0
    }
}

/// `1 - jaccard` for set-valued judgments.
pub fn jaccard_distance<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    1.0 - set_jaccard(a, b)
}

/// Krippendorff's alpha, `1 - D_o / D_e`, over the pairable values of the
/// matrix (values in units judged by at least two annotators).
///
/// `D_o` averages within-unit pair distances weighted by `1/(m_u - 1)`;
/// `D_e` averages distances over all pairs of pairable values. When every
/// within-unit pair is at distance 0 the result is exactly 1.
pub fn krippendorff_alpha<V, D>(matrix: &AnnotationMatrix<V>, distance: D) -> Result<f64, MetricsError>
where
    D: Fn(&V, &V) -> f64,
{
    if matrix.annotators < 2 {
        return Err(MetricsError::InsufficientData("fewer than two annotators".into()));
    }
    let pairable: Vec<Vec<&V>> = matrix
        .units
        .iter()
        .map(|u| u.iter().flatten().collect::<Vec<_>>())
        .filter(|u| u.len() >= 2)
        .collect();
    let n: usize = pairable.iter().map(Vec::len).sum();
    if pairable.is_empty() || n < 2 {
        return Err(MetricsError::InsufficientData("no unit has two judgments".into()));
    }

    let mut observed = 0.0;
    for unit in &pairable {
        let mut within = 0.0;
        for (i, a) in unit.iter().enumerate() {
            for (j, b) in unit.iter().enumerate() {
                if i != j {
                    within += distance(a, b);
                }
            }
        }
        observed += within / (unit.len() - 1) as f64;
    }
    let observed = observed / n as f64;
    if observed == 0.0 {
        return Ok(1.0);
    }

    let all: Vec<&V> = pairable.iter().flatten().copied().collect();
    let mut expected = 0.0;
    for (i, a) in all.iter().enumerate() {
        for (j, b) in all.iter().enumerate() {
            if i != j {
                expected += distance(a, b);
            }
        }
    }
    let expected = expected / (n * (n - 1)) as f64;
    if expected == 0.0 {
        return Err(MetricsError::InsufficientData("expected disagreement is zero".into()));
    }
    Ok(1.0 - observed / expected)
}
