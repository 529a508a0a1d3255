//! Evaluation: confusion matrix, F1, AUROC, AUPRC and percentile-bootstrap
//! confidence intervals.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::argmax;
use crate::scalar::Scalar;
use crate::seed;

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    n_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(Error::param("confusion matrix must be square and nonempty"));
        }
        Ok(Self {
            n_classes: n,
            counts: rows.concat(),
        })
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    #[inline]
    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.n_classes + predicted]
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts
            .chunks(self.n_classes)
            .map(<[u64]>::to_vec)
            .collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n_classes).map(|c| self.get(c, c)).sum()
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.trace(), self.total())
    }

    fn row_sum(&self, c: usize) -> u64 {
        (0..self.n_classes).map(|j| self.get(c, j)).sum()
    }

    fn col_sum(&self, c: usize) -> u64 {
        (0..self.n_classes).map(|i| self.get(i, c)).sum()
    }

    pub fn precision(&self, class: usize) -> f64 {
        ratio(self.get(class, class), self.col_sum(class))
    }

    pub fn recall(&self, class: usize) -> f64 {
        ratio(self.get(class, class), self.row_sum(class))
    }

    /// Classes that appear neither in the truth nor in the predictions.
    pub fn absent_classes(&self) -> Vec<usize> {
        (0..self.n_classes)
            .filter(|&c| self.row_sum(c) == 0 && self.col_sum(c) == 0)
            .collect()
    }

    /// Aligned text rendering, one row per true class, thousands separated.
    pub fn render(&self) -> String {
        let cells: Vec<String> = self.counts.iter().map(|c| thousands(*c)).collect();
        let width = cells.iter().map(String::len).max().unwrap_or(1);
        let mut out = String::new();
        for row in cells.chunks(self.n_classes) {
            let line: Vec<String> = row.iter().map(|c| format!("{c:>width$}")).collect();
            let _ = writeln!(out, "{}", line.join("  "));
        }
        out
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn thousands(v: u64) -> String {
    let digits = v.to_string();
    let mut out = String::with_capacity(digits.len() + digits.len() / 3);
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

pub fn confusion_matrix(
    truth: &[usize],
    predicted: &[usize],
    n_classes: usize,
) -> Result<ConfusionMatrix> {
    if truth.len() != predicted.len() {
        return Err(Error::Shape {
            expected: truth.len(),
            got: predicted.len(),
        });
    }
    if n_classes == 0 {
        return Err(Error::param("n_classes must be positive"));
    }
    let mut counts = vec![0u64; n_classes * n_classes];
    for (&t, &p) in truth.iter().zip(predicted) {
        if t >= n_classes || p >= n_classes {
            return Err(Error::param(format!(
                "label pair ({t}, {p}) outside 0..{n_classes}"
            )));
        }
        counts[t * n_classes + p] += 1;
    }
    Ok(ConfusionMatrix { n_classes, counts })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum F1Average {
    Class(usize),
    /// Unweighted mean of the per-class scores.
    Macro,
}

/// `2PR / (P + R)`; a 0/0 precision or recall counts as 0.
pub fn f1(cm: &ConfusionMatrix, which: F1Average) -> f64 {
    let class_f1 = |c: usize| {
        let tp = cm.get(c, c);
        let denom = cm.row_sum(c) + cm.col_sum(c);
        ratio(2 * tp, denom)
    };
    match which {
        F1Average::Class(c) => class_f1(c),
        F1Average::Macro => (0..cm.n_classes).map(class_f1).sum::<f64>() / cm.n_classes as f64,
    }
}

fn check_binary(labels: &[usize]) -> Result<(u64, u64)> {
    let mut pos = 0u64;
    let mut neg = 0u64;
    for &l in labels {
        match l {
            0 => neg += 1,
            1 => pos += 1,
            other => return Err(Error::param(format!("binary label {other} is not 0/1"))),
        }
    }
    Ok((pos, neg))
}

fn sorted_by_score<S: Scalar>(scores: &[S], descending: bool) -> Result<Vec<usize>> {
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::param("scores contain NaN"));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| {
        let o = scores[a].partial_cmp(&scores[b]).unwrap_or(Ordering::Equal);
        if descending {
            o.reverse()
        } else {
            o
        }
    });
    Ok(idx)
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half. Computed from tie groups in O(n log n) with exact
/// integer counts.
pub fn auroc_binary<S: Scalar>(scores: &[S], labels: &[usize]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Shape {
            expected: scores.len(),
            got: labels.len(),
        });
    }
    let (n_pos, n_neg) = check_binary(labels)?;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric(
            "AUROC needs both classes present".into(),
        ));
    }
    let order = sorted_by_score(scores, false)?;
    let mut twice_wins: u128 = 0;
    let mut neg_below: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let (mut p, mut q) = (0u128, 0u128);
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == 1 {
                p += 1;
            } else {
                q += 1;
            }
            i += 1;
        }
        twice_wins += 2 * p * neg_below + p * q;
        neg_below += q;
    }
    Ok(twice_wins as f64 / (2 * n_pos as u128 * n_neg as u128) as f64)
}

/// Mean over classes of the one-vs-rest AUROC of that class's probability column.
pub fn auroc_macro_ovr<S: Scalar>(probs: &[S], n_classes: usize, labels: &[usize]) -> Result<f64> {
    if probs.len() != labels.len() * n_classes {
        return Err(Error::Shape {
            expected: labels.len() * n_classes,
            got: probs.len(),
        });
    }
    let mut total = 0.0;
    let mut column = vec![S::zero(); labels.len()];
    let mut binary = vec![0usize; labels.len()];
    for c in 0..n_classes {
        for (i, row) in probs.chunks_exact(n_classes).enumerate() {
            column[i] = row[c];
            binary[i] = usize::from(labels[i] == c);
        }
        total += auroc_binary(&column, &binary).map_err(|e| match e {
            Error::UndefinedMetric(_) => {
                Error::UndefinedMetric(format!("class {c} absent from the labels or universal"))
            }
            other => other,
        })?;
    }
    Ok(total / n_classes as f64)
}

/// Average precision: precision at each threshold weighted by the recall gained there.
pub fn auprc<S: Scalar>(scores: &[S], labels: &[usize]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Shape {
            expected: scores.len(),
            got: labels.len(),
        });
    }
    let (n_pos, _) = check_binary(labels)?;
    if n_pos == 0 {
        return Err(Error::UndefinedMetric(
            "AUPRC needs at least one positive".into(),
        ));
    }
    let order = sorted_by_score(scores, true)?;
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let recall = tp as f64 / n_pos as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(ap)
}

/// Percentile with linear interpolation between the closest order statistics
/// (`h = (n - 1) p`).
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of an empty sample");
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn half_width(&self) -> f64 {
        (self.hi - self.lo) / 2.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapCi {
    pub interval: Interval,
    pub redraws: usize,
    pub values: Vec<f64>,
}

const MAX_ATTEMPTS_PER_RESAMPLE: usize = 64;

/// Resamples `n` items with replacement `k` times and returns the 2.5th and
/// 97.5th percentiles of `metric` over the resamples.
///
/// Resample `r` draws from its own seeded stream, so the result does not
/// depend on evaluation order. A resample on which the metric is undefined
/// is redrawn; if more than half of all draws are undefined the bootstrap
/// fails.
pub fn bootstrap_ci<F>(n: usize, k: usize, seed: u64, metric: F) -> Result<BootstrapCi>
where
    F: Fn(&[usize]) -> Result<f64> + Sync,
{
    if k < 2 {
        return Err(Error::param("bootstrap needs at least 2 resamples"));
    }
    if n == 0 {
        return Err(Error::param("bootstrap of an empty sample"));
    }
    let per_resample: Vec<(Option<f64>, usize)> = (0..k)
        .into_par_iter()
        .map(|r| -> Result<(Option<f64>, usize)> {
            let base = seed::mix(seed, r as u64);
            let mut idx = vec![0usize; n];
            for attempt in 0..MAX_ATTEMPTS_PER_RESAMPLE {
                let mut rng = seed::stream(base, attempt as u64);
                for slot in idx.iter_mut() {
                    *slot = rng.random_range(0..n);
                }
                match metric(&idx) {
                    Ok(v) => return Ok((Some(v), attempt)),
                    Err(Error::UndefinedMetric(_)) => continue,
                    Err(e) => return Err(e),
                }
            }
            Ok((None, MAX_ATTEMPTS_PER_RESAMPLE))
        })
        .collect::<Result<_>>()?;

    let redraws: usize = per_resample.iter().map(|(_, r)| r).sum();
    let draws = redraws + per_resample.iter().filter(|(v, _)| v.is_some()).count();
    if per_resample.iter().any(|(v, _)| v.is_none()) || 2 * redraws > draws {
        return Err(Error::Evaluation(format!(
            "metric undefined on {redraws} of {draws} bootstrap draws"
        )));
    }
    let mut values: Vec<f64> = per_resample.into_iter().filter_map(|(v, _)| v).collect();
    values.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    Ok(BootstrapCi {
        interval: Interval {
            lo: percentile(&values, 0.025),
            hi: percentile(&values, 0.975),
        },
        redraws,
        values,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSettings {
    pub resamples: usize,
    pub seed: u64,
}

/// Averaging and thresholding conventions used to produce a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conventions {
    pub f1_average: String,
    pub auroc_average: String,
    pub decision_rule: String,
    pub percentile_method: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n_samples: usize,
    pub n_classes: usize,
    pub accuracy: f64,
    pub confusion: Vec<Vec<u64>>,
    pub per_class_f1: Vec<f64>,
    pub macro_f1: f64,
    /// Classes absent from both truth and predictions; their F1 is reported as 0.
    pub absent_classes: Vec<usize>,
    pub auroc: Option<f64>,
    /// Binary tasks only.
    pub auprc: Option<f64>,
    /// Keyed by metric name: `accuracy`, `macro_f1`, `auroc`, `auprc`, and
    /// `f1_class_<c>` for binary tasks.
    pub ci: BTreeMap<String, Interval>,
    pub bootstrap: Option<BootstrapSettings>,
    pub bootstrap_redraws: usize,
    pub conventions: Conventions,
}

impl MetricsReport {
    pub fn confusion_matrix(&self) -> ConfusionMatrix {
        ConfusionMatrix::from_rows(&self.confusion).expect("report holds a square matrix")
    }

    /// Scalar metrics by name, as used for the `ci` keys.
    pub fn scalar(&self, name: &str) -> Option<f64> {
        match name {
            "accuracy" => Some(self.accuracy),
            "macro_f1" => Some(self.macro_f1),
            "auroc" => self.auroc,
            "auprc" => self.auprc,
            other => other
                .strip_prefix("f1_class_")
                .and_then(|c| c.parse::<usize>().ok())
                .and_then(|c| self.per_class_f1.get(c).copied()),
        }
    }
}

type MetricFn<'a> = Box<dyn Fn(&[usize]) -> Result<f64> + Sync + 'a>;

/// Full report for a probability matrix (`labels.len() x n_classes`).
///
/// Predicted class is the argmax (ties to the lower index); for two classes
/// this is "positive when p1 > 0.5". AUROC is binary on the positive column
/// for two classes and macro one-vs-rest otherwise; AUPRC is binary only.
pub fn evaluate<S: Scalar>(
    probs: &[S],
    n_classes: usize,
    labels: &[usize],
    bootstrap: Option<BootstrapSettings>,
) -> Result<MetricsReport> {
    if n_classes < 2 || probs.len() != labels.len() * n_classes {
        return Err(Error::Shape {
            expected: labels.len() * n_classes,
            got: probs.len(),
        });
    }
    if labels.is_empty() {
        return Err(Error::param("cannot evaluate on an empty test set"));
    }
    let predicted: Vec<usize> = probs.chunks_exact(n_classes).map(argmax).collect();
    let binary = n_classes == 2;
    let positive: Vec<S> = if binary {
        probs.chunks_exact(2).map(|r| r[1]).collect()
    } else {
        Vec::new()
    };

    let cm = confusion_matrix(labels, &predicted, n_classes)?;
    let auroc_of = |p: &[S], pos: &[S], l: &[usize]| -> Result<f64> {
        if binary {
            auroc_binary(pos, l)
        } else {
            auroc_macro_ovr(p, n_classes, l)
        }
    };
    let defined = |r: Result<f64>| -> Result<Option<f64>> {
        match r {
            Ok(v) => Ok(Some(v)),
            Err(Error::UndefinedMetric(_)) => Ok(None),
            Err(e) => Err(e),
        }
    };
    let auroc = defined(auroc_of(probs, &positive, labels))?;
    let average_precision = if binary {
        defined(auprc(&positive, labels))?
    } else {
        None
    };

    let mut report = MetricsReport {
        n_samples: labels.len(),
        n_classes,
        accuracy: cm.accuracy(),
        confusion: cm.rows(),
        per_class_f1: (0..n_classes)
            .map(|c| f1(&cm, F1Average::Class(c)))
            .collect(),
        macro_f1: f1(&cm, F1Average::Macro),
        absent_classes: cm.absent_classes(),
        auroc,
        auprc: average_precision,
        ci: BTreeMap::new(),
        bootstrap,
        bootstrap_redraws: 0,
        conventions: Conventions {
            f1_average: "macro".into(),
            auroc_average: if binary {
                "binary".into()
            } else {
                "macro_ovr".into()
            },
            decision_rule: if binary {
                "p1 > 0.5".into()
            } else {
                "argmax".into()
            },
            percentile_method: "linear".into(),
        },
    };

    let Some(settings) = bootstrap else {
        return Ok(report);
    };

    let gather = |idx: &[usize]| -> (Vec<S>, Vec<S>, Vec<usize>, Vec<usize>) {
        let mut p = Vec::with_capacity(idx.len() * n_classes);
        let mut pos = Vec::new();
        let mut l = Vec::with_capacity(idx.len());
        let mut pr = Vec::with_capacity(idx.len());
        for &i in idx {
            p.extend_from_slice(&probs[i * n_classes..(i + 1) * n_classes]);
            if binary {
                pos.push(positive[i]);
            }
            l.push(labels[i]);
            pr.push(predicted[i]);
        }
        (p, pos, l, pr)
    };
    let cm_of = |idx: &[usize]| -> Result<ConfusionMatrix> {
        let t: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
        let p: Vec<usize> = idx.iter().map(|&i| predicted[i]).collect();
        confusion_matrix(&t, &p, n_classes)
    };

    let mut metrics: Vec<(String, MetricFn<'_>)> = vec![
        (
            "accuracy".into(),
            Box::new(|idx| Ok(cm_of(idx)?.accuracy())),
        ),
        (
            "macro_f1".into(),
            Box::new(|idx| Ok(f1(&cm_of(idx)?, F1Average::Macro))),
        ),
    ];
    if report.auroc.is_some() {
        metrics.push((
            "auroc".into(),
            Box::new(|idx| {
                let (p, pos, l, _) = gather(idx);
                auroc_of(&p, &pos, &l)
            }),
        ));
    }
    if report.auprc.is_some() {
        metrics.push((
            "auprc".into(),
            Box::new(|idx| {
                let (_, pos, l, _) = gather(idx);
                auprc(&pos, &l)
            }),
        ));
    }
    if binary {
        for c in 0..2 {
            metrics.push((
                format!("f1_class_{c}"),
                Box::new(move |idx| Ok(f1(&cm_of(idx)?, F1Average::Class(c)))),
            ));
        }
    }

    // Every metric sees the same resamples: the seed is shared.
    for (name, metric) in metrics {
        let ci = bootstrap_ci(labels.len(), settings.resamples, settings.seed, metric)?;
        report.bootstrap_redraws = report.bootstrap_redraws.max(ci.redraws);
        report.ci.insert(name, ci.interval);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table4_basic() -> ConfusionMatrix {
        ConfusionMatrix::from_rows(&[vec![2789, 73], vec![256, 118]]).unwrap()
    }

    #[test]
    fn hand_counted_confusion() {
        let cm = confusion_matrix(&[0, 0, 1, 1], &[0, 1, 1, 1], 2).unwrap();
        assert_eq!(cm.rows(), vec![vec![1, 1], vec![0, 2]]);
        let perfect = confusion_matrix(&[0, 1, 2, 2], &[0, 1, 2, 2], 3).unwrap();
        assert_eq!(perfect.trace(), perfect.total());
        assert!(confusion_matrix(&[0, 3], &[0, 0], 3).is_err());
        assert!(confusion_matrix(&[0], &[0, 0], 3).is_err());
    }

    #[test]
    fn table4_total_and_f1() {
        let cm = table4_basic();
        assert_eq!(cm.total(), 3_236);
        assert!((f1(&cm, F1Average::Class(0)) - 0.944).abs() <= 0.001);
    }

    #[test]
    fn f1_edge_cases() {
        let diag = ConfusionMatrix::from_rows(&[vec![3, 0], vec![0, 4]]).unwrap();
        assert_eq!(f1(&diag, F1Average::Macro), 1.0);
        let no_recall = ConfusionMatrix::from_rows(&[vec![0, 5], vec![0, 5]]).unwrap();
        assert_eq!(f1(&no_recall, F1Average::Class(0)), 0.0);
        let absent =
            ConfusionMatrix::from_rows(&[vec![2, 0, 0], vec![0, 0, 0], vec![0, 0, 1]]).unwrap();
        assert_eq!(absent.absent_classes(), vec![1]);
        assert_eq!(f1(&absent, F1Average::Class(1)), 0.0);
    }

    #[test]
    fn auroc_examples() {
        let v = auroc_binary(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1]).unwrap();
        assert_eq!(v, 0.75);
        assert_eq!(
            auroc_binary(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]).unwrap(),
            1.0
        );
        assert_eq!(auroc_binary(&[0.5; 4], &[0, 1, 0, 1]).unwrap(), 0.5);
        assert!(matches!(
            auroc_binary(&[0.5, 0.6], &[1, 1]),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn macro_ovr_cases() {
        let one_hot = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        assert_eq!(auroc_macro_ovr(&one_hot, 3, &[0, 1, 2]).unwrap(), 1.0);
        let uniform = [1.0 / 3.0; 9];
        assert_eq!(auroc_macro_ovr(&uniform, 3, &[0, 1, 2]).unwrap(), 0.5);
        assert!(matches!(
            auroc_macro_ovr(&uniform, 3, &[0, 1, 1]),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn auprc_examples() {
        assert!((auprc(&[0.9, 0.8, 0.7], &[1, 0, 1]).unwrap() - 5.0 / 6.0).abs() < 1e-15);
        assert_eq!(auprc(&[0.9, 0.8, 0.3, 0.1], &[1, 1, 0, 0]).unwrap(), 1.0);
        assert!(matches!(
            auprc(&[0.9, 0.8], &[0, 0]),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn percentile_interpolates() {
        let v: Vec<f64> = (0..100).map(f64::from).collect();
        assert!((percentile(&v, 0.025) - 2.475).abs() < 1e-12);
        assert!((percentile(&v, 0.975) - 96.525).abs() < 1e-12);
        assert_eq!(percentile(&[4.0], 0.5), 4.0);
    }

    #[test]
    fn constant_metric_gives_degenerate_interval() {
        let ci = bootstrap_ci(50, 100, 3, |_| Ok(0.7)).unwrap();
        assert_eq!(ci.interval, Interval { lo: 0.7, hi: 0.7 });
        assert!(bootstrap_ci(50, 1, 3, |_| Ok(0.7)).is_err());
    }

    #[test]
    fn mostly_undefined_metric_fails() {
        let err = bootstrap_ci(10, 20, 1, |_| Err(Error::UndefinedMetric("x".into()))).unwrap_err();
        assert!(matches!(err, Error::Evaluation(_)));
    }

    #[test]
    fn bootstrap_is_deterministic() {
        let labels = [0, 1, 0, 1, 1, 0, 0, 1, 0, 0];
        let scores = [0.1, 0.9, 0.3, 0.6, 0.4, 0.5, 0.2, 0.8, 0.7, 0.05];
        let run = || {
            bootstrap_ci(labels.len(), 50, 42, |idx| {
                let s: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
                let l: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
                auroc_binary(&s, &l)
            })
            .unwrap()
        };
        let a = run();
        assert_eq!(a, run());
        assert!(a.interval.lo <= a.interval.hi);
    }

    #[test]
    fn report_for_binary_probs() {
        let probs = [0.9, 0.1, 0.2, 0.8, 0.6, 0.4, 0.3, 0.7, 0.55, 0.45, 0.1, 0.9];
        let labels = [0, 1, 0, 1, 1, 1];
        let r = evaluate(
            &probs,
            2,
            &labels,
            Some(BootstrapSettings {
                resamples: 30,
                seed: 1,
            }),
        )
        .unwrap();
        assert_eq!(r.confusion, vec![vec![2, 0], vec![1, 3]]);
        assert!(r.auprc.is_some());
        for key in [
            "accuracy",
            "macro_f1",
            "auroc",
            "auprc",
            "f1_class_0",
            "f1_class_1",
        ] {
            assert!(r.ci.contains_key(key), "missing {key}");
        }
        assert_eq!(r.scalar("f1_class_1"), Some(r.per_class_f1[1]));
    }

    #[test]
    fn render_uses_thousands_separators() {
        let cm = ConfusionMatrix::from_rows(&[vec![1121, 3], vec![0, 12]]).unwrap();
        let text = cm.render();
        assert!(text.contains("1,121"));
        assert_eq!(text.lines().count(), 2);
        assert_eq!(thousands(1_234_567), "1,234,567");
    }
}
