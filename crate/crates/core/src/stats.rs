//! Two-factor ANOVA with replication, the F distribution it needs, and
//! before/after metric drop reports.
//!
//! The row factor is called "Sample" and the column factor "Columns", the
//! names spreadsheet ANOVA tools print, so tables line up with published
//! ones row for row.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::Path;

use crate::error::{Error, Result};
use crate::evaluation::RunSummary;

// --- special functions ------------------------------------------------------

const LANCZOS_G: f64 = 7.0;
// Published to this many digits; kept verbatim.
#[allow(clippy::excessive_precision)]
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // Reflection.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS_COEF[0];
    for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Continued fraction for the incomplete beta (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=20_000 {
        let m = f64::from(m);
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)` and its complement, each computed
/// on the side where it does not suffer cancellation. `xc` must equal
/// `1 - x`; passing it separately keeps precision when `x` is near 1.
pub fn reg_inc_beta_pair(a: f64, b: f64, x: f64, xc: f64) -> (f64, f64) {
    if x <= 0.0 {
        return (0.0, 1.0);
    }
    if xc <= 0.0 {
        return (1.0, 0.0);
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * xc.ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        let i = front * beta_cf(a, b, x) / a;
        (i, 1.0 - i)
    } else {
        let ic = front * beta_cf(b, a, xc) / b;
        (1.0 - ic, ic)
    }
}

pub fn reg_inc_beta(a: f64, b: f64, x: f64) -> f64 {
    reg_inc_beta_pair(a, b, x, 1.0 - x).0
}

fn f_cdf_pair(x: f64, d1: u32, d2: u32) -> (f64, f64) {
    assert!(d1 >= 1 && d2 >= 1, "degrees of freedom must be >= 1");
    if x <= 0.0 {
        return (0.0, 1.0);
    }
    if x.is_infinite() {
        return (1.0, 0.0);
    }
    let (d1, d2) = (f64::from(d1), f64::from(d2));
    let denom = d1 * x + d2;
    reg_inc_beta_pair(d1 / 2.0, d2 / 2.0, d1 * x / denom, d2 / denom)
}

/// CDF of the F distribution with `(d1, d2)` degrees of freedom.
pub fn f_cdf(x: f64, d1: u32, d2: u32) -> f64 {
    f_cdf_pair(x, d1, d2).0
}

/// Upper tail `1 - f_cdf(x)`, computed directly so tiny p-values keep their
/// relative precision.
pub fn f_sf(x: f64, d1: u32, d2: u32) -> f64 {
    f_cdf_pair(x, d1, d2).1
}

/// Critical value: the `x` with `f_sf(x) = alpha`, by bracketed bisection.
pub fn f_crit(alpha: f64, d1: u32, d2: u32) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha must be in (0, 1), got {alpha}")));
    }
    if d1 == 0 || d2 == 0 {
        return Err(Error::invalid("degrees of freedom must be >= 1"));
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while f_sf(hi, d1, d2) > alpha {
        lo = hi;
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::data("critical value bracket diverged"));
        }
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if f_sf(mid, d1, d2) > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-13 * hi.max(1.0) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Arithmetic mean with one correction pass, so a constant sample returns
/// its value exactly and residuals around it are exactly zero.
pub fn mean(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    m + values.iter().map(|x| x - m).sum::<f64>() / n
}

// --- designs ----------------------------------------------------------------

/// Count, sum, mean and sample variance of one cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellSummary {
    pub count: usize,
    pub sum: f64,
    pub mean: f64,
    /// Sample variance (n − 1 denominator); `None` when `count == 1`.
    pub variance: Option<f64>,
}

impl CellSummary {
    pub fn from_values(values: &[f64]) -> Result<Self> {
        let n = values.len();
        if n == 0 {
            return Err(Error::invalid("a cell needs at least one value"));
        }
        let sum: f64 = values.iter().sum();
        let mean = mean(values);
        let variance =
            (n > 1).then(|| values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64);
        Ok(Self {
            count: n,
            sum,
            mean,
            variance,
        })
    }

    pub fn from_moments(count: usize, mean: f64, variance: Option<f64>) -> Result<Self> {
        if count == 0 {
            return Err(Error::invalid("cell count must be >= 1"));
        }
        if let Some(v) = variance {
            if v.is_nan() || v < 0.0 {
                return Err(Error::invalid(format!("cell variance must be >= 0, got {v}")));
            }
        }
        if count > 1 && variance.is_none() {
            return Err(Error::invalid("cell variance is required when count > 1"));
        }
        Ok(Self {
            count,
            sum: mean * count as f64,
            mean,
            variance: if count == 1 { None } else { variance },
        })
    }

    /// Σ (x − mean)² recovered from the sample variance.
    fn within_ss(&self) -> f64 {
        self.variance.unwrap_or(0.0) * (self.count - 1) as f64
    }
}

/// Balanced a × b design described by its cell summaries.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorialDesign {
    pub row_levels: Vec<String>,
    pub col_levels: Vec<String>,
    /// `cells[i][j]` for row level `i`, column level `j`.
    pub cells: Vec<Vec<CellSummary>>,
}

impl FactorialDesign {
    pub fn new(row_levels: Vec<String>, col_levels: Vec<String>, cells: Vec<Vec<CellSummary>>) -> Result<Self> {
        let (a, b) = (row_levels.len(), col_levels.len());
        if a < 2 || b < 2 {
            return Err(Error::invalid(format!("design needs at least 2x2 levels, got {a}x{b}")));
        }
        if cells.len() != a || cells.iter().any(|r| r.len() != b) {
            return Err(Error::invalid("cell grid does not match the level lists"));
        }
        let n = cells[0][0].count;
        if let Some((i, j, c)) = cells
            .iter()
            .enumerate()
            .flat_map(|(i, r)| r.iter().enumerate().map(move |(j, c)| (i, j, c)))
            .find(|(_, _, c)| c.count != n)
        {
            return Err(Error::invalid(format!(
                "unbalanced design: cell ({}, {}) has {} observations, expected {n}",
                row_levels[i], col_levels[j], c.count
            )));
        }
        if n < 2 {
            return Err(Error::invalid("design needs at least 2 replicates per cell"));
        }
        Ok(Self {
            row_levels,
            col_levels,
            cells,
        })
    }

    pub fn replicates(&self) -> usize {
        self.cells[0][0].count
    }

    pub fn from_raw(row_levels: Vec<String>, col_levels: Vec<String>, values: &[Vec<Vec<f64>>]) -> Result<Self> {
        let cells = values
            .iter()
            .map(|row| row.iter().map(|v| CellSummary::from_values(v)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        Self::new(row_levels, col_levels, cells)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Source {
    Sample,
    Columns,
    Interaction,
    Within,
    Total,
}

impl Source {
    pub const ALL: [Source; 5] = [
        Source::Sample,
        Source::Columns,
        Source::Interaction,
        Source::Within,
        Source::Total,
    ];
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Sample => "Sample",
            Source::Columns => "Columns",
            Source::Interaction => "Interaction",
            Source::Within => "Within",
            Source::Total => "Total",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnovaRow {
    pub source: Source,
    pub ss: f64,
    pub df: u32,
    pub ms: Option<f64>,
    pub f: Option<f64>,
    pub p: Option<f64>,
    pub f_crit: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnovaTable {
    pub rows: [AnovaRow; 5],
    pub alpha: f64,
    /// MS_within was zero, so F ratios are infinite or undefined.
    pub degenerate: bool,
    /// Some p-value underflowed below 1e-300 and was reported as 0.
    pub p_clamped: bool,
}

const P_FLOOR: f64 = 1e-300;

impl AnovaTable {
    /// Assembles the table and checks SS and df additivity.
    fn new(
        ss: [f64; 4],
        ss_total: f64,
        df: [u32; 4],
        alpha: f64,
    ) -> Result<Self> {
        let df_total = df.iter().sum::<u32>();
        let ss_sum: f64 = ss.iter().sum();
        if (ss_total - ss_sum).abs() > 1e-9 * ss_total.abs().max(ss_sum.abs()) + 1e-300 {
            return Err(Error::data(format!(
                "sum-of-squares decomposition is not additive: total {ss_total} vs parts {ss_sum}"
            )));
        }
        let ms_within = ss[3] / f64::from(df[3]);
        let degenerate = ms_within == 0.0;
        let mut p_clamped = false;
        let mut rows = [AnovaRow {
            source: Source::Total,
            ss: ss_total,
            df: df_total,
            ms: None,
            f: None,
            p: None,
            f_crit: None,
        }; 5];
        for (k, source) in [Source::Sample, Source::Columns, Source::Interaction].into_iter().enumerate() {
            let ms = ss[k] / f64::from(df[k]);
            let (f, p) = if degenerate {
                if ms > 0.0 {
                    (Some(f64::INFINITY), Some(0.0))
                } else {
                    (None, None)
                }
            } else {
                let f = ms / ms_within;
                let mut p = f_sf(f, df[k], df[3]);
                if p < P_FLOOR {
                    p = 0.0;
                    p_clamped = true;
                }
                (Some(f), Some(p))
            };
            rows[k] = AnovaRow {
                source,
                ss: ss[k],
                df: df[k],
                ms: Some(ms),
                f,
                p,
                f_crit: Some(f_crit(alpha, df[k], df[3])?),
            };
        }
        rows[3] = AnovaRow {
            source: Source::Within,
            ss: ss[3],
            df: df[3],
            ms: Some(ms_within),
            f: None,
            p: None,
            f_crit: None,
        };
        Ok(Self {
            rows,
            alpha,
            degenerate,
            p_clamped,
        })
    }

    pub fn row(&self, source: Source) -> &AnovaRow {
        self.rows.iter().find(|r| r.source == source).expect("all sources present")
    }

    /// Columns: Source, SS, df, MS, F, P-value, F crit.
    pub fn render_text(&self) -> String {
        let opt = |v: Option<f64>, prec: usize| match v {
            Some(x) if x.is_infinite() => "inf".to_string(),
            Some(x) => format!("{x:.prec$}"),
            None => "*".to_string(),
        };
        let p = |v: Option<f64>| match v {
            Some(x) if x != 0.0 && x < 1e-4 => format!("{x:.2E}"),
            other => opt(other, 6),
        };
        let mut s = format!(
            "{:<12} {:>10} {:>4} {:>10} {:>10} {:>10} {:>10}\n",
            "Source", "SS", "df", "MS", "F", "P-value", "F crit"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<12} {:>10.6} {:>4} {:>10} {:>10} {:>10} {:>10}",
                r.source.to_string(),
                r.ss,
                r.df,
                opt(r.ms, 6),
                opt(r.f, 6),
                p(r.p),
                opt(r.f_crit, 6)
            );
        }
        let _ = writeln!(s, "alpha = {}", self.alpha);
        if self.degenerate {
            s.push_str("note: within-cell variance is zero; F ratios are degenerate\n");
        }
        if self.p_clamped {
            s.push_str("note: p-values below 1e-300 are reported as 0\n");
        }
        s
    }

    pub fn render_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(String::new, |x| format!("{x:?}"));
        let mut s = String::from("source,ss,df,ms,f,p_value,f_crit\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{:?},{},{},{},{},{}",
                r.source,
                r.ss,
                r.df,
                opt(r.ms),
                opt(r.f),
                opt(r.p),
                opt(r.f_crit)
            );
        }
        s
    }
}

/// Cell means and the grand mean of a balanced design.
fn means(design: &FactorialDesign) -> (Vec<f64>, Vec<f64>, f64) {
    let (a, b) = (design.row_levels.len(), design.col_levels.len());
    let row_means: Vec<f64> = design
        .cells
        .iter()
        .map(|r| mean(&r.iter().map(|c| c.mean).collect::<Vec<_>>()))
        .collect();
    let col_means: Vec<f64> = (0..b)
        .map(|j| mean(&design.cells.iter().map(|r| r[j].mean).collect::<Vec<_>>()))
        .collect();
    let all: Vec<f64> = design.cells.iter().flatten().map(|c| c.mean).collect();
    let grand = mean(&all);
    debug_assert_eq!(all.len(), a * b);
    (row_means, col_means, grand)
}

fn decompose(design: &FactorialDesign) -> ([f64; 4], f64) {
    let (a, b) = (design.row_levels.len(), design.col_levels.len());
    let n = design.replicates() as f64;
    let (row_means, col_means, grand) = means(design);

    let ss_sample = b as f64 * n * row_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let ss_columns = a as f64 * n * col_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let mut ss_between = 0.0;
    let mut ss_interaction = 0.0;
    for (i, row) in design.cells.iter().enumerate() {
        for (j, c) in row.iter().enumerate() {
            ss_between += (c.mean - grand).powi(2);
            ss_interaction += (c.mean - row_means[i] - col_means[j] + grand).powi(2);
        }
    }
    let ss_within: f64 = design.cells.iter().flatten().map(CellSummary::within_ss).sum();
    let ss = [ss_sample, ss_columns, n * ss_interaction, ss_within];
    (ss, n * ss_between + ss_within)
}

fn degrees(design: &FactorialDesign) -> [u32; 4] {
    let a = design.row_levels.len() as u32;
    let b = design.col_levels.len() as u32;
    let n = design.replicates() as u32;
    [a - 1, b - 1, (a - 1) * (b - 1), a * b * (n - 1)]
}

/// ANOVA from cell summaries (count, mean, sample variance).
pub fn anova_from_summaries(design: &FactorialDesign, alpha: f64) -> Result<AnovaTable> {
    let (ss, ss_total) = decompose(design);
    AnovaTable::new(ss, ss_total, degrees(design), alpha)
}

/// ANOVA from raw observations `values[row][col][replicate]`. Cells are
/// summarized and the summary route does the work; the directly computed
/// total sum of squares is then checked against the decomposition.
pub fn anova_from_raw(values: &[Vec<Vec<f64>>], alpha: f64) -> Result<AnovaTable> {
    let a = values.len();
    let b = values.first().map_or(0, Vec::len);
    let design = FactorialDesign::from_raw(
        (0..a).map(|i| format!("row{i}")).collect(),
        (0..b).map(|j| format!("col{j}")).collect(),
        values,
    )?;
    let table = anova_from_summaries(&design, alpha)?;
    let all: Vec<f64> = values.iter().flatten().flatten().copied().collect();
    let grand = mean(&all);
    let direct_total: f64 = all.iter().map(|x| (x - grand).powi(2)).sum();
    let decomposed = table.row(Source::Total).ss;
    if (direct_total - decomposed).abs() > 1e-9 * direct_total.max(decomposed) + 1e-12 {
        return Err(Error::data(format!(
            "total sum of squares {direct_total} disagrees with decomposition {decomposed}"
        )));
    }
    Ok(table)
}

fn level_index(levels: &mut Vec<String>, name: &str) -> usize {
    levels.iter().position(|l| l == name).unwrap_or_else(|| {
        levels.push(name.to_string());
        levels.len() - 1
    })
}

fn csv_records(path: &Path) -> Result<Vec<csv::StringRecord>> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?
        .records()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::csv(path, e))
}

/// Reads `row_level,col_level,value` rows (with header). Levels are ordered
/// by first appearance.
pub fn load_raw_design(path: &Path) -> Result<FactorialDesign> {
    let mut rows = Vec::new();
    let mut cols = Vec::new();
    let mut values: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    for (k, rec) in csv_records(path)?.iter().enumerate() {
        let bad = || Error::data(format!("{}:{}: expected row_level,col_level,value", path.display(), k + 2));
        if rec.len() != 3 {
            return Err(bad());
        }
        let i = level_index(&mut rows, &rec[0]);
        let j = level_index(&mut cols, &rec[1]);
        values.entry((i, j)).or_default().push(rec[2].parse().map_err(|_| bad())?);
    }
    let grid: Vec<Vec<Vec<f64>>> = (0..rows.len())
        .map(|i| (0..cols.len()).map(|j| values.remove(&(i, j)).unwrap_or_default()).collect())
        .collect();
    if grid.iter().flatten().any(Vec::is_empty) {
        return Err(Error::data(format!("{}: some cell has no observations", path.display())));
    }
    FactorialDesign::from_raw(rows, cols, &grid)
}

/// Reads `row_level,col_level,count,mean,variance` rows (with header).
pub fn load_summary_design(path: &Path) -> Result<FactorialDesign> {
    let mut rows = Vec::new();
    let mut cols = Vec::new();
    let mut cells: BTreeMap<(usize, usize), CellSummary> = BTreeMap::new();
    for (k, rec) in csv_records(path)?.iter().enumerate() {
        let line = k + 2;
        let bad = |m: &str| Error::data(format!("{}:{line}: {m}", path.display()));
        if rec.len() != 5 {
            return Err(bad("expected row_level,col_level,count,mean,variance"));
        }
        let count: usize = rec[2].parse().map_err(|_| bad("field count"))?;
        let mean: f64 = rec[3].parse().map_err(|_| bad("field mean"))?;
        let variance = if rec[4].is_empty() {
            None
        } else {
            Some(rec[4].parse::<f64>().map_err(|_| bad("field variance"))?)
        };
        let i = level_index(&mut rows, &rec[0]);
        let j = level_index(&mut cols, &rec[1]);
        let cell = CellSummary::from_moments(count, mean, variance).map_err(|e| bad(&e.to_string()))?;
        if cells.insert((i, j), cell).is_some() {
            return Err(bad("duplicate cell"));
        }
    }
    let grid = (0..rows.len())
        .map(|i| {
            (0..cols.len())
                .map(|j| {
                    cells.remove(&(i, j)).ok_or_else(|| {
                        Error::data(format!("{}: missing cell ({}, {})", path.display(), rows[i], cols[j]))
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    FactorialDesign::new(rows, cols, grid)
}

// --- before/after drops ------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct DeltaEntry {
    pub model: String,
    pub metric: String,
    pub before: f64,
    pub after: f64,
    /// `before − after`; positive when the metric dropped.
    pub drop: f64,
    /// `drop / before`, absent when `before` is 0.
    pub relative_drop: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DeltaReport {
    pub entries: Vec<DeltaEntry>,
    /// Smallest and largest absolute drop across metrics, per model.
    pub ranges: BTreeMap<String, (f64, f64)>,
}

/// Mean drop per (model, metric) between two sets of run summaries. Both
/// sides must name the same models and metrics.
pub fn delta_report(
    before: &BTreeMap<String, RunSummary>,
    after: &BTreeMap<String, RunSummary>,
) -> Result<DeltaReport> {
    if before.keys().ne(after.keys()) {
        return Err(Error::data(format!(
            "model sets differ: {:?} vs {:?}",
            before.keys().collect::<Vec<_>>(),
            after.keys().collect::<Vec<_>>()
        )));
    }
    let mut report = DeltaReport::default();
    for (model, b) in before {
        let a = &after[model];
        if b.metrics.keys().ne(a.metrics.keys()) {
            return Err(Error::data(format!("metric sets differ for model {model}")));
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (metric, mb) in &b.metrics {
            let ma = &a.metrics[metric];
            let drop = mb.mean - ma.mean;
            lo = lo.min(drop);
            hi = hi.max(drop);
            report.entries.push(DeltaEntry {
                model: model.clone(),
                metric: metric.clone(),
                before: mb.mean,
                after: ma.mean,
                drop,
                relative_drop: (mb.mean != 0.0).then(|| drop / mb.mean),
            });
        }
        if lo.is_finite() {
            report.ranges.insert(model.clone(), (lo, hi));
        }
    }
    Ok(report)
}

impl DeltaReport {
    pub fn get(&self, model: &str, metric: &str) -> Option<&DeltaEntry> {
        self.entries.iter().find(|e| e.model == model && e.metric == metric)
    }

    pub fn render_text(&self) -> String {
        let mut s = format!(
            "{:<12} {:<18} {:>10} {:>10} {:>10} {:>9}\n",
            "model", "metric", "before", "after", "drop", "drop %"
        );
        for e in &self.entries {
            let rel = e.relative_drop.map_or_else(|| "-".into(), |r| format!("{:.1}%", 100.0 * r));
            let _ = writeln!(
                s,
                "{:<12} {:<18} {:>10.4} {:>10.4} {:>10.4} {:>9}",
                e.model, e.metric, e.before, e.after, e.drop, rel
            );
        }
        for (model, (lo, hi)) in &self.ranges {
            let _ = writeln!(s, "{model}: drop range across metrics {lo:.4} .. {hi:.4}");
        }
        s
    }

    pub fn render_csv(&self) -> String {
        let mut s = String::from("model,metric,before,after,drop,relative_drop\n");
        for e in &self.entries {
            let rel = e.relative_drop.map_or_else(String::new, |r| format!("{r:?}"));
            let _ = writeln!(s, "{},{},{:?},{:?},{:?},{rel}", e.model, e.metric, e.before, e.after, e.drop);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::summarize_values;

    #[test]
    fn ln_gamma_known_values() {
        assert!(ln_gamma(1.0).abs() < 1e-14);
        assert!(ln_gamma(2.0).abs() < 1e-14);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-14);
        assert!((ln_gamma(10.0) - 362_880f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn f_cdf_basics() {
        assert_eq!(f_cdf(0.0, 3, 7), 0.0);
        for d in [1, 2, 5, 30] {
            assert!((f_cdf(1.0, d, d) - 0.5).abs() < 1e-12, "d = {d}");
        }
        let mut prev = 0.0;
        for k in 0..200 {
            let c = f_cdf(f64::from(k) * 0.05, 2, 30);
            assert!(c >= prev && c < 1.0);
            prev = c;
        }
    }

    #[test]
    fn table_p_value_and_critical_values() {
        let p = f_sf(193.1412, 1, 30);
        assert!((p - 1.31e-14).abs() / 1.31e-14 < 0.03, "{p}");
        assert!((f_crit(0.05, 1, 30).unwrap() - 4.170877).abs() < 1e-4);
        assert!((f_crit(0.05, 2, 30).unwrap() - 3.31583).abs() < 1e-4);
    }

    #[test]
    fn f_crit_inverts_the_cdf() {
        for (a, d1, d2) in [(0.05, 1, 30), (0.01, 4, 12), (0.5, 3, 3), (0.2, 10, 100)] {
            let x = f_crit(a, d1, d2).unwrap();
            assert!((f_cdf(x, d1, d2) - (1.0 - a)).abs() < 1e-10);
        }
        assert!(f_crit(0.0, 1, 1).is_err());
    }

    #[test]
    fn constant_data_is_degenerate() {
        let values = vec![vec![vec![0.7; 3]; 2]; 2];
        let t = anova_from_raw(&values, 0.05).unwrap();
        assert!(t.rows.iter().all(|r| r.ss == 0.0));
        assert!(t.degenerate);
        assert_eq!(t.row(Source::Sample).f, None);
    }

    #[test]
    fn zero_within_variance_gives_infinite_f() {
        let values = vec![vec![vec![1.0; 2], vec![1.0; 2]], vec![vec![3.0; 2], vec![3.0; 2]]];
        let t = anova_from_raw(&values, 0.05).unwrap();
        assert!(t.degenerate);
        assert_eq!(t.row(Source::Sample).f, Some(f64::INFINITY));
        assert_eq!(t.row(Source::Sample).p, Some(0.0));
    }

    #[test]
    fn unbalanced_and_undersized_designs_are_rejected() {
        let unbalanced = vec![vec![vec![1.0, 2.0], vec![1.0, 2.0, 3.0]], vec![vec![1.0, 2.0], vec![1.0, 2.0]]];
        assert!(anova_from_raw(&unbalanced, 0.05).is_err());
        let one_rep = vec![vec![vec![1.0], vec![2.0]], vec![vec![1.0], vec![2.0]]];
        assert!(anova_from_raw(&one_rep, 0.05).is_err());
        let one_row = vec![vec![vec![1.0, 2.0], vec![1.0, 2.0]]];
        assert!(anova_from_raw(&one_row, 0.05).is_err());
    }

    #[test]
    fn location_and_scale_behaviour() {
        let values = vec![
            vec![vec![1.0, 2.5, 0.3], vec![4.0, 2.0, 3.3], vec![0.1, 0.9, 1.4]],
            vec![vec![2.2, 2.0, 1.1], vec![5.0, 4.4, 3.9], vec![0.5, 2.5, 0.0]],
        ];
        let base = anova_from_raw(&values, 0.05).unwrap();
        let shift: Vec<Vec<Vec<f64>>> =
            values.iter().map(|r| r.iter().map(|c| c.iter().map(|x| x + 10.0).collect()).collect()).collect();
        let scale: Vec<Vec<Vec<f64>>> =
            values.iter().map(|r| r.iter().map(|c| c.iter().map(|x| x * 3.0).collect()).collect()).collect();
        let shifted = anova_from_raw(&shift, 0.05).unwrap();
        let scaled = anova_from_raw(&scale, 0.05).unwrap();
        for s in Source::ALL {
            let (b, sh, sc) = (base.row(s), shifted.row(s), scaled.row(s));
            assert!((b.ss - sh.ss).abs() <= 1e-9 * b.ss.max(1.0));
            assert!((9.0 * b.ss - sc.ss).abs() <= 1e-9 * sc.ss.max(1.0));
            if let (Some(f1), Some(f2)) = (b.f, sc.f) {
                assert!((f1 - f2).abs() <= 1e-9 * f1.max(1.0));
            }
        }
    }

    #[test]
    fn delta_of_identical_summaries_is_zero() {
        let s = RunSummary {
            metrics: [("accuracy".to_string(), summarize_values(&[0.9, 0.8]).unwrap())].into(),
        };
        let m: BTreeMap<String, RunSummary> = [("m".to_string(), s)].into();
        let d = delta_report(&m, &m).unwrap();
        assert!(d.entries.iter().all(|e| e.drop == 0.0));
    }

    #[test]
    fn delta_of_reference_means() {
        let before: BTreeMap<String, RunSummary> = [(
            "m".to_string(),
            RunSummary { metrics: [("accuracy".into(), summarize_values(&[1.0]).unwrap())].into() },
        )]
        .into();
        let after: BTreeMap<String, RunSummary> = [(
            "m".to_string(),
            RunSummary { metrics: [("accuracy".into(), summarize_values(&[0.83]).unwrap())].into() },
        )]
        .into();
        let d = delta_report(&before, &after).unwrap();
        let e = d.get("m", "accuracy").unwrap();
        assert!((e.drop - 0.17).abs() < 1e-12);
        assert!((0.16..=0.19).contains(&e.drop));
    }

    #[test]
    fn delta_key_mismatch_is_fatal() {
        let s = RunSummary {
            metrics: [("accuracy".to_string(), summarize_values(&[0.9]).unwrap())].into(),
        };
        let a: BTreeMap<String, RunSummary> = [("x".to_string(), s.clone())].into();
        let b: BTreeMap<String, RunSummary> = [("y".to_string(), s)].into();
        assert!(delta_report(&a, &b).is_err());
    }
}
