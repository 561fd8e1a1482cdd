//! Classification metrics computed from prediction files: confusion matrix,
//! per-class precision/recall/specificity/F1, multiclass MCC, one-vs-rest
//! AUC, and mean/variance/box-plot summaries across repeated runs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::manifest::{ClassLabel, FrameId, NUM_CLASSES};
use crate::splitting::SplitAssignment;

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub frame_id: FrameId,
    pub run_index: u32,
    pub true_label: ClassLabel,
    pub predicted: ClassLabel,
    pub scores: [f64; NUM_CLASSES],
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PredictionSet {
    pub rows: Vec<PredictionRow>,
}

const SCORE_SUM_TOLERANCE: f64 = 1e-6;

impl PredictionSet {
    pub fn new(rows: Vec<PredictionRow>) -> Self {
        Self { rows }
    }

    pub fn runs(&self) -> BTreeSet<u32> {
        self.rows.iter().map(|r| r.run_index).collect()
    }

    pub fn rows_for(&self, run_index: u32) -> impl Iterator<Item = &PredictionRow> {
        self.rows.iter().filter(move |r| r.run_index == run_index)
    }

    /// Hard errors for malformed scores; warnings (returned) when the
    /// predicted label is not an argmax of the scores.
    pub fn validate(&self) -> Result<Vec<String>> {
        let mut warnings = Vec::new();
        for r in &self.rows {
            if r.scores.iter().any(|s| !s.is_finite() || *s < 0.0) {
                return Err(Error::data(format!(
                    "run {} frame {}: scores must be finite and non-negative",
                    r.run_index, r.frame_id
                )));
            }
            let sum: f64 = r.scores.iter().sum();
            if (sum - 1.0).abs() > SCORE_SUM_TOLERANCE {
                return Err(Error::data(format!(
                    "run {} frame {}: scores sum to {sum}, expected 1",
                    r.run_index, r.frame_id
                )));
            }
            let max = r.scores.iter().copied().fold(f64::MIN, f64::max);
            if r.scores[r.predicted.ordinal()] < max {
                warnings.push(format!(
                    "run {} frame {}: predicted class {} is not the highest-scoring class",
                    r.run_index,
                    r.frame_id,
                    r.predicted.ordinal()
                ));
            }
        }
        Ok(warnings)
    }

    /// Every predicted frame must sit on the test side of its run.
    pub fn check_against(&self, assignments: &[SplitAssignment]) -> Result<()> {
        let by_run: BTreeMap<u32, &SplitAssignment> =
            assignments.iter().map(|a| (a.run_index, a)).collect();
        for r in &self.rows {
            let a = by_run.get(&r.run_index).ok_or_else(|| {
                Error::data(format!("predictions reference run {} with no split", r.run_index))
            })?;
            if !a.test.contains(&r.frame_id) {
                return Err(Error::data(format!(
                    "run {}: frame {} is not on the test side",
                    r.run_index, r.frame_id
                )));
            }
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("frame_id,run,true,pred,s0,s1,s2,s3\n");
        for r in &self.rows {
            let id = r.frame_id.to_string();
            let id = if id.contains([',', '"']) {
                format!("\"{}\"", id.replace('"', "\"\""))
            } else {
                id
            };
            let _ = writeln!(
                s,
                "{id},{},{},{},{:?},{:?},{:?},{:?}",
                r.run_index,
                r.true_label.ordinal(),
                r.predicted.ordinal(),
                r.scores[0],
                r.scores[1],
                r.scores[2],
                r.scores[3]
            );
        }
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| Error::csv(path, e))?;
        let headers = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
        let expected = ["frame_id", "run", "true", "pred", "s0", "s1", "s2", "s3"];
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(Error::data(format!(
                "{}: header must be {}",
                path.display(),
                expected.join(",")
            )));
        }
        let mut rows = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| Error::csv(path, e))?;
            let line = i + 2;
            let bad = |m: String| Error::data(format!("{}:{line}: {m}", path.display()));
            let label = |col: usize, name: &str| -> Result<ClassLabel> {
                rec[col]
                    .parse::<usize>()
                    .ok()
                    .and_then(ClassLabel::from_ordinal)
                    .ok_or_else(|| bad(format!("field {name}: unknown label ordinal {:?}", &rec[col])))
            };
            let mut scores = [0.0; NUM_CLASSES];
            for (k, s) in scores.iter_mut().enumerate() {
                *s = rec[4 + k]
                    .parse()
                    .map_err(|_| bad(format!("field s{k}: cannot parse {:?}", &rec[4 + k])))?;
            }
            rows.push(PredictionRow {
                frame_id: rec[0].parse().map_err(|e: Error| bad(e.to_string()))?,
                run_index: rec[1]
                    .parse()
                    .map_err(|_| bad(format!("field run: cannot parse {:?}", &rec[1])))?,
                true_label: label(2, "true")?,
                predicted: label(3, "pred")?,
                scores,
            });
        }
        Ok(Self { rows })
    }
}

/// `counts[i][j]` = frames of true class `i` predicted as class `j`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub counts: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

impl ConfusionMatrix {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (ClassLabel, ClassLabel)>) -> Self {
        let mut cm = Self::default();
        for (t, p) in pairs {
            cm.counts[t.ordinal()][p.ordinal()] += 1;
        }
        cm
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..NUM_CLASSES).map(|i| self.counts[i][i]).sum()
    }

    /// Row sums: true instances per class.
    pub fn support(&self) -> [u64; NUM_CLASSES] {
        std::array::from_fn(|i| self.counts[i].iter().sum())
    }

    /// Column sums: predictions per class.
    pub fn predicted(&self) -> [u64; NUM_CLASSES] {
        std::array::from_fn(|j| (0..NUM_CLASSES).map(|i| self.counts[i][j]).sum())
    }

    pub fn render(&self) -> String {
        let mut s = String::from("true\\pred");
        for j in 0..NUM_CLASSES {
            let _ = write!(s, "{j:>8}");
        }
        s.push('\n');
        for (i, row) in self.counts.iter().enumerate() {
            let _ = write!(s, "{i:>9}");
            for c in row {
                let _ = write!(s, "{c:>8}");
            }
            s.push('\n');
        }
        s
    }
}

pub fn confusion(pred: &PredictionSet, run_index: u32) -> Result<ConfusionMatrix> {
    let cm = ConfusionMatrix::from_pairs(pred.rows_for(run_index).map(|r| (r.true_label, r.predicted)));
    if cm.total() == 0 {
        return Err(Error::data(format!("no predictions for run {run_index}")));
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub specificity: f64,
    pub f1: f64,
    pub support: u64,
    /// Some ratio was 0/0 and was reported as 0.
    pub degenerate: bool,
}

fn ratio(num: u64, den: u64, degenerate: &mut bool) -> f64 {
    if den == 0 {
        *degenerate = true;
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

pub fn per_class_metrics(cm: &ConfusionMatrix) -> [ClassMetrics; NUM_CLASSES] {
    let total = cm.total();
    let support = cm.support();
    let predicted = cm.predicted();
    std::array::from_fn(|c| {
        let tp = cm.counts[c][c];
        let fp = predicted[c] - tp;
        let fn_ = support[c] - tp;
        let tn = total - tp - fp - fn_;
        let mut degenerate = false;
        let precision = ratio(tp, tp + fp, &mut degenerate);
        let recall = ratio(tp, tp + fn_, &mut degenerate);
        let specificity = ratio(tn, tn + fp, &mut degenerate);
        if precision + recall == 0.0 {
            degenerate = true;
        }
        ClassMetrics {
            precision,
            recall,
            specificity,
            f1: f1_score(precision, recall),
            support: support[c],
            degenerate,
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mcc {
    pub value: f64,
    /// The denominator was zero and the value was reported as 0.
    pub degenerate: bool,
}

/// Multiclass Matthews correlation coefficient (Gorodkin's R_K).
pub fn mcc(cm: &ConfusionMatrix) -> Mcc {
    let s = cm.total() as i128;
    let c = cm.trace() as i128;
    let p = cm.predicted().map(i128::from);
    let t = cm.support().map(i128::from);
    let num = c * s - p.iter().zip(&t).map(|(a, b)| a * b).sum::<i128>();
    let dp = s * s - p.iter().map(|x| x * x).sum::<i128>();
    let dt = s * s - t.iter().map(|x| x * x).sum::<i128>();
    if dp == 0 || dt == 0 {
        return Mcc {
            value: 0.0,
            degenerate: true,
        };
    }
    let value = num as f64 / ((dp as f64).sqrt() * (dt as f64).sqrt());
    Mcc {
        value: value.clamp(-1.0, 1.0),
        degenerate: false,
    }
}

/// ROC AUC via the rank-sum (Mann–Whitney U) formula with average ranks for
/// ties, so each tied positive/negative pair counts 1/2. `None` unless both
/// classes are present.
pub fn binary_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), positive.len());
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Rank sums are kept doubled so tie averages stay integral.
    let mut pos_rank_sum_x2: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1..=j+1 share the average (i + j + 2) / 2.
        let avg_x2 = (i + j + 2) as u128;
        let pos_in_block = order[i..=j].iter().filter(|&&k| positive[k]).count() as u128;
        pos_rank_sum_x2 += avg_x2 * pos_in_block;
        i = j + 1;
    }
    let (np, nn) = (n_pos as u128, n_neg as u128);
    let u_x2 = pos_rank_sum_x2 - np * (np + 1);
    Some(u_x2 as f64 / (2 * np * nn) as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AucResult {
    /// `None` for classes with no positives or no negatives in the run.
    pub per_class: [Option<f64>; NUM_CLASSES],
    /// Unweighted mean over the classes that have an AUC.
    pub macro_auc: Option<f64>,
}

pub fn ovr_auc(pred: &PredictionSet, run_index: u32) -> Result<AucResult> {
    let rows: Vec<&PredictionRow> = pred.rows_for(run_index).collect();
    if rows.is_empty() {
        return Err(Error::data(format!("no predictions for run {run_index}")));
    }
    let per_class: [Option<f64>; NUM_CLASSES] = std::array::from_fn(|c| {
        let scores: Vec<f64> = rows.iter().map(|r| r.scores[c]).collect();
        let positive: Vec<bool> = rows.iter().map(|r| r.true_label.ordinal() == c).collect();
        binary_auc(&scores, &positive)
    });
    let defined: Vec<f64> = per_class.iter().flatten().copied().collect();
    let macro_auc = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    Ok(AucResult {
        per_class,
        macro_auc,
    })
}

/// All metrics for one evaluation run.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub run_index: u32,
    pub confusion: ConfusionMatrix,
    pub per_class: [ClassMetrics; NUM_CLASSES],
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_specificity: f64,
    pub macro_f1: f64,
    /// Micro averages; for single-label data these all equal accuracy.
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub micro_f1: f64,
    pub mcc: Mcc,
    pub auc: AucResult,
}

/// Metric keys emitted by [`MetricsReport::values`], in report order.
pub const METRIC_KEYS: [&str; 10] = [
    "accuracy",
    "precision",
    "recall",
    "f1",
    "auc",
    "mcc",
    "macro_precision",
    "macro_recall",
    "macro_specificity",
    "macro_f1",
];

impl MetricsReport {
    /// `(key, value)` pairs; `auc` is absent when no class had an AUC.
    pub fn values(&self) -> Vec<(&'static str, Option<f64>)> {
        vec![
            ("accuracy", Some(self.accuracy)),
            ("precision", Some(self.micro_precision)),
            ("recall", Some(self.micro_recall)),
            ("f1", Some(self.micro_f1)),
            ("auc", self.auc.macro_auc),
            ("mcc", Some(self.mcc.value)),
            ("macro_precision", Some(self.macro_precision)),
            ("macro_recall", Some(self.macro_recall)),
            ("macro_specificity", Some(self.macro_specificity)),
            ("macro_f1", Some(self.macro_f1)),
        ]
    }

    /// Per-class table in the layout of a classification report.
    pub fn render_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "run {}", self.run_index);
        let _ = writeln!(
            s,
            "{:<22} {:>9} {:>9} {:>11} {:>9} {:>8} {:>8}",
            "class", "precision", "recall", "specificity", "f1", "auc", "support"
        );
        for (c, m) in self.per_class.iter().enumerate() {
            let label = ClassLabel::from_ordinal(c).map_or("?", |l| l.display_name());
            let auc = self.auc.per_class[c].map_or_else(|| "-".to_string(), |a| format!("{a:.4}"));
            let flag = if m.degenerate { " *" } else { "" };
            let _ = writeln!(
                s,
                "{:<22} {:>9.4} {:>9.4} {:>11.4} {:>9.4} {:>8} {:>8}{flag}",
                format!("{label} ({c})"),
                m.precision,
                m.recall,
                m.specificity,
                m.f1,
                auc,
                m.support
            );
        }
        for (k, v) in self.values() {
            let v = v.map_or_else(|| "-".to_string(), |v| format!("{v:.6}"));
            let _ = writeln!(s, "{k:<18} {v}");
        }
        if self.mcc.degenerate {
            let _ = writeln!(s, "note: MCC denominator was zero; reported as 0");
        }
        s.push_str(&self.confusion.render());
        s
    }
}

pub fn evaluate(pred: &PredictionSet, run_index: u32) -> Result<MetricsReport> {
    let cm = confusion(pred, run_index)?;
    let per_class = per_class_metrics(&cm);
    let accuracy = cm.trace() as f64 / cm.total() as f64;
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / NUM_CLASSES as f64;
    Ok(MetricsReport {
        run_index,
        confusion: cm,
        per_class,
        accuracy,
        macro_precision: mean(|m| m.precision),
        macro_recall: mean(|m| m.recall),
        macro_specificity: mean(|m| m.specificity),
        macro_f1: mean(|m| m.f1),
        micro_precision: accuracy,
        micro_recall: accuracy,
        micro_f1: accuracy,
        mcc: mcc(&cm),
        auc: ovr_auc(pred, run_index)?,
    })
}

/// Evaluates every run present in the prediction set.
pub fn evaluate_all(pred: &PredictionSet) -> Result<Vec<MetricsReport>> {
    pred.runs().into_iter().map(|r| evaluate(pred, r)).collect()
}

/// Mean, spread and five-number summary of one metric across runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricSummary {
    pub n: usize,
    pub mean: f64,
    /// Sample variance (n − 1 denominator); `None` for a single run.
    pub variance: Option<f64>,
    pub std_dev: Option<f64>,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

fn median_of_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Summary statistics of a non-empty sample. Quartiles are Tukey hinges:
/// the medians of the lower and upper halves, each half including the
/// overall median when `n` is odd.
pub fn summarize_values(values: &[f64]) -> Result<MetricSummary> {
    if values.is_empty() {
        return Err(Error::invalid("cannot summarize an empty sample"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let mean = crate::stats::mean(&v);
    let variance = (n > 1).then(|| v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64);
    let half = n.div_ceil(2);
    Ok(MetricSummary {
        n,
        mean,
        variance,
        std_dev: variance.map(f64::sqrt),
        min: v[0],
        q1: median_of_sorted(&v[..half]),
        median: median_of_sorted(&v),
        q3: median_of_sorted(&v[n - half..]),
        max: v[n - 1],
    })
}

/// Per-metric summaries across runs, keyed by [`METRIC_KEYS`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunSummary {
    pub metrics: BTreeMap<String, MetricSummary>,
}

pub fn summarize_runs(reports: &[MetricsReport]) -> Result<RunSummary> {
    if reports.is_empty() {
        return Err(Error::invalid("need at least one report to summarize"));
    }
    let mut metrics = BTreeMap::new();
    for key in METRIC_KEYS {
        let values: Vec<f64> = reports
            .iter()
            .filter_map(|r| r.values().into_iter().find(|(k, _)| *k == key).and_then(|(_, v)| v))
            .collect();
        if !values.is_empty() {
            metrics.insert(key.to_string(), summarize_values(&values)?);
        }
    }
    Ok(RunSummary { metrics })
}

impl RunSummary {
    pub fn get(&self, key: &str) -> Option<&MetricSummary> {
        self.metrics.get(key)
    }

    fn ordered(&self) -> impl Iterator<Item = (&str, &MetricSummary)> {
        METRIC_KEYS
            .iter()
            .filter_map(|k| self.metrics.get(*k).map(|m| (*k, m)))
            .chain(
                self.metrics
                    .iter()
                    .filter(|(k, _)| !METRIC_KEYS.contains(&k.as_str()))
                    .map(|(k, m)| (k.as_str(), m)),
            )
    }

    pub fn render_csv(&self) -> String {
        let mut s = String::from("metric,n,mean,variance,std_dev,min,q1,median,q3,max\n");
        let opt = |v: Option<f64>| v.map_or_else(String::new, |v| format!("{v:?}"));
        for (k, m) in self.ordered() {
            let _ = writeln!(
                s,
                "{k},{},{:?},{},{},{:?},{:?},{:?},{:?},{:?}",
                m.n,
                m.mean,
                opt(m.variance),
                opt(m.std_dev),
                m.min,
                m.q1,
                m.median,
                m.q3,
                m.max
            );
        }
        s
    }

    pub fn parse_csv(text: &str, origin: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let mut metrics = BTreeMap::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| Error::csv(origin, e))?;
            let bad = || Error::data(format!("{}:{}: malformed summary row", origin.display(), i + 2));
            if rec.len() != 10 {
                return Err(bad());
            }
            let f = |k: usize| rec[k].parse::<f64>().map_err(|_| bad());
            let opt = |k: usize| -> Result<Option<f64>> {
                if rec[k].is_empty() {
                    Ok(None)
                } else {
                    f(k).map(Some)
                }
            };
            metrics.insert(
                rec[0].to_string(),
                MetricSummary {
                    n: rec[1].parse().map_err(|_| bad())?,
                    mean: f(2)?,
                    variance: opt(3)?,
                    std_dev: opt(4)?,
                    min: f(5)?,
                    q1: f(6)?,
                    median: f(7)?,
                    q3: f(8)?,
                    max: f(9)?,
                },
            );
        }
        Ok(Self { metrics })
    }

    /// Mean ± sd plus a text box plot per metric on a shared 0–1 axis.
    pub fn render_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<18} {:>9} {:>11} {:>8} {:>8} {:>8} {:>8} {:>8}",
            "metric", "mean", "variance", "min", "q1", "median", "q3", "max"
        );
        for (k, m) in self.ordered() {
            let var = m.variance.map_or_else(|| "-".to_string(), |v| format!("{v:.3e}"));
            let _ = writeln!(
                s,
                "{k:<18} {:>9.6} {var:>11} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
                m.mean, m.min, m.q1, m.median, m.q3, m.max
            );
        }
        s.push_str("\nbox plots (0 to 1):\n");
        for (k, m) in self.ordered() {
            let _ = writeln!(s, "{k:<18} |{}|", box_plot_line(m, 50));
        }
        s
    }
}

/// One-line box plot on `[0, 1]` (values outside are clamped; MCC below 0
/// lands on the left edge).
pub fn box_plot_line(m: &MetricSummary, width: usize) -> String {
    let pos = |v: f64| ((v.clamp(0.0, 1.0) * (width - 1) as f64).round()) as usize;
    let mut line = vec![' '; width];
    let (lo, q1, med, q3, hi) = (pos(m.min), pos(m.q1), pos(m.median), pos(m.q3), pos(m.max));
    for c in line.iter_mut().take(q1).skip(lo) {
        *c = '-';
    }
    for c in line.iter_mut().take(hi + 1).skip(q3) {
        *c = '-';
    }
    for c in line.iter_mut().take(q3 + 1).skip(q1) {
        *c = '=';
    }
    line[lo] = '|';
    line[hi] = '|';
    line[med] = 'M';
    line.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cm(rows: [[u64; 4]; 4]) -> ConfusionMatrix {
        ConfusionMatrix { counts: rows }
    }

    fn row(id: u32, t: usize, p: usize, scores: [f64; 4]) -> PredictionRow {
        PredictionRow {
            frame_id: FrameId::new("v", id),
            run_index: 0,
            true_label: ClassLabel::from_ordinal(t).unwrap(),
            predicted: ClassLabel::from_ordinal(p).unwrap(),
            scores,
        }
    }

    #[test]
    fn all_correct_is_diagonal() {
        let pairs = ClassLabel::ALL.iter().flat_map(|&l| std::iter::repeat_n((l, l), 3));
        let m = ConfusionMatrix::from_pairs(pairs);
        assert_eq!(m.trace(), m.total());
        let pc = per_class_metrics(&m);
        assert!(pc.iter().all(|c| c.precision == 1.0 && c.recall == 1.0 && c.f1 == 1.0));
        assert_eq!(mcc(&m).value, 1.0);
    }

    #[test]
    fn single_off_diagonal_entry() {
        let pred = PredictionSet::new(vec![row(0, 0, 1, [0.2, 0.8, 0.0, 0.0])]);
        let m = confusion(&pred, 0).unwrap();
        let mut expected = [[0u64; 4]; 4];
        expected[0][1] = 1;
        assert_eq!(m.counts, expected);
        assert!(confusion(&pred, 3).is_err());
    }

    #[test]
    fn f1_matches_printed_rows() {
        assert!((f1_score(0.95, 0.86) - 0.9028).abs() < 1e-4);
        assert!((f1_score(0.62, 0.23) - 0.3355).abs() < 1e-4);
        assert_eq!(f1_score(0.0, 0.0), 0.0);
    }

    #[test]
    fn single_predicted_class_gives_zero_mcc() {
        let m = cm([[0, 0, 0, 5], [0, 0, 0, 5], [0, 0, 0, 5], [0, 0, 0, 5]]);
        let r = mcc(&m);
        assert_eq!(r.value, 0.0);
        assert!(r.degenerate);
        let pc = per_class_metrics(&m);
        assert!(pc[0].degenerate);
        assert_eq!(pc[3].recall, 1.0);
    }

    #[test]
    fn swapped_binary_predictions_flip_mcc_sign() {
        let good = cm([[8, 2, 0, 0], [3, 7, 0, 0], [0; 4], [0; 4]]);
        let bad = cm([[2, 8, 0, 0], [7, 3, 0, 0], [0; 4], [0; 4]]);
        let (a, b) = (mcc(&good).value, mcc(&bad).value);
        assert!((a + b).abs() < 1e-12, "{a} {b}");
        assert!(a > 0.0);
    }

    #[test]
    fn auc_extremes() {
        let scores = [0.1, 0.2, 0.8, 0.9];
        assert_eq!(binary_auc(&scores, &[false, false, true, true]), Some(1.0));
        assert_eq!(binary_auc(&scores, &[true, true, false, false]), Some(0.0));
        assert_eq!(binary_auc(&[0.5; 4], &[true, false, true, false]), Some(0.5));
        assert_eq!(binary_auc(&scores, &[true; 4]), None);
    }

    #[test]
    fn ovr_auc_skips_absent_classes() {
        let pred = PredictionSet::new(vec![
            row(0, 0, 0, [0.9, 0.1, 0.0, 0.0]),
            row(1, 1, 1, [0.2, 0.8, 0.0, 0.0]),
        ]);
        let auc = ovr_auc(&pred, 0).unwrap();
        assert_eq!(auc.per_class[0], Some(1.0));
        assert_eq!(auc.per_class[1], Some(1.0));
        assert_eq!(auc.per_class[2], None);
        assert_eq!(auc.macro_auc, Some(1.0));
    }

    #[test]
    fn quartiles_of_one_to_eleven() {
        let v: Vec<f64> = (1..=11).map(f64::from).collect();
        let s = summarize_values(&v).unwrap();
        assert_eq!((s.q1, s.median, s.q3), (3.5, 6.0, 8.5));
        assert_eq!((s.min, s.max), (1.0, 11.0));
        assert_eq!(s.variance, Some(11.0));
    }

    #[test]
    fn two_runs_and_one_run() {
        let s = summarize_values(&[0.2, 0.6]).unwrap();
        assert_eq!((s.min, s.q1, s.q3, s.max), (0.2, 0.2, 0.6, 0.6));
        assert!((s.median - 0.4).abs() < 1e-15);
        let one = summarize_values(&[0.3]).unwrap();
        assert_eq!(one.variance, None);
        assert!(summarize_values(&[]).is_err());
    }

    #[test]
    fn identical_reports_have_zero_variance() {
        let pred = PredictionSet::new(vec![
            row(0, 0, 0, [0.9, 0.1, 0.0, 0.0]),
            row(1, 1, 0, [0.6, 0.4, 0.0, 0.0]),
            row(2, 1, 1, [0.2, 0.8, 0.0, 0.0]),
        ]);
        let r = evaluate(&pred, 0).unwrap();
        let s = summarize_runs(&vec![r; 11]).unwrap();
        for m in s.metrics.values() {
            assert_eq!(m.variance, Some(0.0));
            assert_eq!(m.min, m.max);
            assert_eq!(m.q1, m.q3);
        }
    }

    #[test]
    fn prediction_validation() {
        let ok = PredictionSet::new(vec![row(0, 0, 1, [0.5, 0.5, 0.0, 0.0])]);
        assert!(ok.validate().unwrap().is_empty());
        let warn = PredictionSet::new(vec![row(0, 0, 1, [0.7, 0.3, 0.0, 0.0])]);
        assert_eq!(warn.validate().unwrap().len(), 1);
        let bad_sum = PredictionSet::new(vec![row(0, 0, 0, [0.7, 0.7, 0.0, 0.0])]);
        assert!(bad_sum.validate().is_err());
        let negative = PredictionSet::new(vec![row(0, 0, 0, [1.5, -0.5, 0.0, 0.0])]);
        assert!(negative.validate().is_err());
    }

    #[test]
    fn prediction_csv_round_trip_and_bad_ordinal() {
        let pred = PredictionSet::new(vec![
            row(0, 0, 1, [0.25, 0.75, 0.0, 0.0]),
            row(1, 3, 3, [0.1, 0.2, 0.3, 0.4]),
        ]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        pred.save(&path).unwrap();
        assert_eq!(PredictionSet::load(&path).unwrap(), pred);

        fs::write(&path, "frame_id,run,true,pred,s0,s1,s2,s3\nv#0,0,4,0,1,0,0,0\n").unwrap();
        let err = PredictionSet::load(&path).unwrap_err().to_string();
        assert!(err.contains("unknown label ordinal"), "{err}");
    }

    #[test]
    fn summary_csv_round_trip() {
        let s = RunSummary {
            metrics: [("accuracy".to_string(), summarize_values(&[0.8, 0.9, 0.85]).unwrap())].into(),
        };
        assert_eq!(RunSummary::parse_csv(&s.render_csv(), Path::new("x")).unwrap(), s);
        let single = RunSummary {
            metrics: [("mcc".to_string(), summarize_values(&[0.5]).unwrap())].into(),
        };
        assert_eq!(RunSummary::parse_csv(&single.render_csv(), Path::new("x")).unwrap(), single);
    }

    #[test]
    fn box_plot_marks_median() {
        let s = summarize_values(&[0.1, 0.4, 0.5, 0.6, 0.9]).unwrap();
        let line = box_plot_line(&s, 11);
        assert_eq!(line.len(), 11);
        assert_eq!(line.chars().nth(5), Some('M'));
    }
}
