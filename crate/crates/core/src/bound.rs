//! Secrecy-capacity lower bounds assembled from component rates, grid search
//! over first-order sources, and parameter sweeps.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::channel::{effective_rate, ChannelParams};
use crate::condent::{
    genie_block_cond_entropy_lb, mc_cond_entropy_rate, ChannelKind, GenieBlockConfig, EXACT_MAX_LEN,
};
use crate::error::{check_open_probability, Error, Result};
use crate::estimate::{combined_stderr, derive_seed, EstimateReport};
use crate::hmm::{build_erasure_hmm, mc_entropy_rate, scaled_z_entropy_rate};
use crate::source::{binary_entropy, MarkovSource};

pub const CSV_HEADER: &str =
    "channel,param,p01,p10,hx,hy,hz_scaled,hzx,hd_penalty,bound,stderr,re,runs,n,k,seed,method";

/// Monte-Carlo budget of one bound evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct McBudget {
    /// Input length for the conditional-entropy and receiver-entropy runs.
    pub n: usize,
    /// Output length for the eavesdropper entropy-rate runs.
    pub k: usize,
    pub runs: usize,
    /// Use the genie-aided block bound with this block length (deletion only).
    pub genie_block: Option<usize>,
}

impl McBudget {
    /// Desk-scale default: finishes a sweep in minutes.
    pub const DESK: McBudget = McBudget {
        n: 10_000,
        k: 10_000,
        runs: 20,
        genie_block: None,
    };

    /// Long runs: 100 runs of length 10^5 for the hidden-Markov rates. The
    /// exact conditional trellises stay at their length cap.
    pub const LONG_RUN: McBudget = McBudget {
        n: EXACT_MAX_LEN,
        k: 100_000,
        runs: 100,
        genie_block: None,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CondMethod {
    /// Exact alignment trellis.
    Exact,
    /// Genie-aided block lower bound with the given block length.
    GenieBlock(usize),
}

impl CondMethod {
    pub fn tag(&self) -> String {
        match self {
            CondMethod::Exact => "exact".to_string(),
            CondMethod::GenieBlock(t) => format!("genie-T{t}"),
        }
    }
}

/// All components of one lower-bound evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct SecrecyBoundReport {
    pub kind: ChannelKind,
    /// Insertion probability for [`ChannelKind::Insertion`], deletion
    /// probability otherwise.
    pub param: f64,
    pub source: MarkovSource,
    /// Closed-form source entropy rate.
    pub hx: f64,
    /// Receiver (erasure) sequence entropy rate; deletion only.
    pub hy: Option<EstimateReport>,
    /// Eavesdropper entropy rate per input symbol.
    pub hz_scaled: EstimateReport,
    /// Conditional entropy rate of the eavesdropper output given the input.
    pub hzx: EstimateReport,
    pub method: CondMethod,
    /// `h(d)`; deletion only.
    pub hd_penalty: Option<f64>,
    pub bound: f64,
    /// Root-sum-square of the component standard errors.
    pub stderr: f64,
    pub effective_rate: f64,
    pub budget: McBudget,
    pub seed: u64,
}

impl SecrecyBoundReport {
    /// One CSV row matching [`CSV_HEADER`].
    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let (p01, p10) = match self.source.first_order_params() {
            Some((a, b)) => (Some(a), Some(b)),
            None => (None, None),
        };
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.kind.tag(),
            self.param,
            opt(p01),
            opt(p10),
            self.hx,
            opt(self.hy.as_ref().map(|r| r.mean)),
            self.hz_scaled.mean,
            self.hzx.mean,
            opt(self.hd_penalty),
            self.bound,
            self.stderr,
            self.effective_rate,
            self.budget.runs,
            self.budget.n,
            self.budget.k,
            self.seed,
            self.method.tag(),
        )
    }
}

/// Lower bound on the insertion wiretap secrecy capacity:
/// `H(X) - H(Zbar) + H(Zbar | X)` per input symbol.
pub fn secrecy_bound_insertion(source: &MarkovSource, i: f64, budget: McBudget, seed: u64) -> Result<SecrecyBoundReport> {
    check_open_probability("i", i)?;
    if budget.n > EXACT_MAX_LEN {
        return Err(Error::Parameter(format!(
            "insertion conditional entropy is exact only up to n = {EXACT_MAX_LEN}"
        )));
    }
    let params = ChannelParams::insertion_only(i)?;
    let hx = source.entropy_rate();
    let hz_scaled = scaled_z_entropy_rate(source, params, budget.k, budget.runs, derive_seed(seed, 1))?;
    let hzx = mc_cond_entropy_rate(source, params, budget.n, budget.runs, derive_seed(seed, 2))?;
    let bound = hx - hz_scaled.mean + hzx.mean;
    let stderr = combined_stderr(&[hz_scaled.stderr, hzx.stderr]);
    Ok(SecrecyBoundReport {
        kind: ChannelKind::Insertion,
        param: i,
        source: source.clone(),
        hx,
        hy: None,
        hz_scaled,
        hzx,
        method: CondMethod::Exact,
        hd_penalty: None,
        bound,
        stderr,
        effective_rate: effective_rate(i, 0.0),
        budget,
        seed,
    })
}

/// Lower bound on the deletion/erasure wiretap secrecy capacity:
/// `H(Y) - h(d) - H(Zbar) + H(Zbar | X)` per input symbol. With a genie
/// block length the last term is replaced by its block lower bound.
pub fn secrecy_bound_deletion(source: &MarkovSource, d: f64, budget: McBudget, seed: u64) -> Result<SecrecyBoundReport> {
    check_open_probability("d", d)?;
    let params = ChannelParams::deletion_only(d)?;
    let (hzx, method) = match budget.genie_block {
        Some(t) => (
            genie_block_cond_entropy_lb(
                source,
                d,
                budget.n,
                GenieBlockConfig::new(t)?,
                budget.runs,
                derive_seed(seed, 2),
            )?,
            CondMethod::GenieBlock(t),
        ),
        None if budget.n > EXACT_MAX_LEN => {
            return Err(Error::Parameter(format!(
                "deletion conditional entropy above n = {EXACT_MAX_LEN} needs a genie block length"
            )))
        }
        None => (
            mc_cond_entropy_rate(source, params, budget.n, budget.runs, derive_seed(seed, 2))?,
            CondMethod::Exact,
        ),
    };
    let hx = source.entropy_rate();
    let hy = mc_entropy_rate(&build_erasure_hmm(source, d)?, budget.n, budget.runs, derive_seed(seed, 3))?;
    let hz_scaled = scaled_z_entropy_rate(source, params, budget.k, budget.runs, derive_seed(seed, 1))?;
    let penalty = binary_entropy(d)?;
    let bound = hy.mean - penalty - hz_scaled.mean + hzx.mean;
    let stderr = combined_stderr(&[hy.stderr, hz_scaled.stderr, hzx.stderr]);
    Ok(SecrecyBoundReport {
        kind: ChannelKind::Deletion,
        param: d,
        source: source.clone(),
        hx,
        hy: Some(hy),
        hz_scaled,
        hzx,
        method,
        hd_penalty: Some(penalty),
        bound,
        stderr,
        effective_rate: effective_rate(0.0, d),
        budget,
        seed,
    })
}

/// Evaluates the bound for `kind`.
pub fn secrecy_bound(
    kind: ChannelKind,
    source: &MarkovSource,
    param: f64,
    budget: McBudget,
    seed: u64,
) -> Result<SecrecyBoundReport> {
    match kind {
        ChannelKind::Insertion => secrecy_bound_insertion(source, param, budget, seed),
        ChannelKind::Deletion => secrecy_bound_deletion(source, param, budget, seed),
    }
}

/// Parses `start:stop:step` (inclusive, rounded to 12 decimals) or a
/// comma-separated list.
pub fn parse_values(spec: &str) -> Result<Vec<f64>> {
    let bad = |what: &str| Error::Validation(format!("bad value list '{spec}': {what}"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|e| bad(&e.to_string()));
    let values = if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(bad("expected start:stop:step"));
        }
        let (start, stop, step) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
        if !(step > 0.0) || stop < start {
            return Err(bad("need step > 0 and stop >= start"));
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        (0..count)
            .map(|k| ((start + k as f64 * step) * 1e12).round() / 1e12)
            .collect()
    } else {
        spec.split(',').map(num).collect::<Result<Vec<f64>>>()?
    };
    if values.is_empty() {
        return Err(bad("empty"));
    }
    Ok(values)
}

/// Axes of the first-order source grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSpec {
    pub p01: Vec<f64>,
    pub p10: Vec<f64>,
}

impl GridSpec {
    /// Same values on both axes.
    pub fn square(values: Vec<f64>) -> Self {
        Self {
            p01: values.clone(),
            p10: values,
        }
    }

    /// `{0.05, 0.10, .., 0.95}` on both axes.
    pub fn default_grid() -> Self {
        Self::square((1..=19).map(|k| k as f64 / 20.0).collect())
    }

    /// Grid points in lexicographic `(p01, p10)` order.
    pub fn points(&self) -> Vec<(f64, f64)> {
        let mut a = self.p01.clone();
        let mut b = self.p10.clone();
        a.sort_by(f64::total_cmp);
        a.dedup();
        b.sort_by(f64::total_cmp);
        b.dedup();
        a.iter().flat_map(|&x| b.iter().map(move |&y| (x, y))).collect()
    }
}

/// Every grid point's report plus the index of the best one.
#[derive(Debug, Clone)]
pub struct GridSearchResult {
    pub table: Vec<SecrecyBoundReport>,
    pub best: usize,
}

impl GridSearchResult {
    pub fn best(&self) -> &SecrecyBoundReport {
        &self.table[self.best]
    }
}

/// Exhaustive search over first-order sources. Every point gets the same
/// budget and a seed derived from `(seed, point index)`; ties go to the
/// lexicographically smallest `(p01, p10)`.
pub fn grid_search_fom(
    kind: ChannelKind,
    param: f64,
    grid: &GridSpec,
    budget: McBudget,
    seed: u64,
) -> Result<GridSearchResult> {
    let points = grid.points();
    if points.is_empty() {
        return Err(Error::Parameter("source grid is empty".into()));
    }
    for &(a, b) in &points {
        if !(a > 0.0 && a < 1.0 && b > 0.0 && b < 1.0) {
            return Err(Error::Parameter(format!("grid point ({a}, {b}) is outside (0, 1)^2")));
        }
    }
    let table = points
        .par_iter()
        .enumerate()
        .map(|(idx, &(p01, p10))| {
            let source = MarkovSource::first_order(p01, p10)?;
            secrecy_bound(kind, &source, param, budget, derive_seed(seed, idx as u64))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (idx, r) in table.iter().enumerate() {
        if r.bound > table[best].bound {
            best = idx;
        }
    }
    Ok(GridSearchResult { table, best })
}

/// Optimized bound for each channel parameter, in input order.
pub fn sweep(
    kind: ChannelKind,
    params: &[f64],
    grid: &GridSpec,
    budget: McBudget,
    seed: u64,
) -> Result<Vec<SecrecyBoundReport>> {
    if params.is_empty() {
        return Err(Error::Parameter("parameter list is empty".into()));
    }
    params
        .par_iter()
        .enumerate()
        .map(|(idx, &p)| Ok(grid_search_fom(kind, p, grid, budget, derive_seed(seed, idx as u64))?.best().clone()))
        .collect()
}

/// Writes `#`-prefixed metadata lines, the header and one row per report.
pub fn write_csv<W: Write>(mut out: W, metadata: &[String], rows: &[SecrecyBoundReport]) -> Result<()> {
    for line in metadata {
        writeln!(out, "# {line}")?;
    }
    writeln!(out, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(out, "{}", r.csv_row())?;
    }
    out.flush()?;
    Ok(())
}

/// Runs [`sweep`] and writes the table to `path`.
pub fn sweep_to_path(
    kind: ChannelKind,
    params: &[f64],
    grid: &GridSpec,
    budget: McBudget,
    seed: u64,
    metadata: &[String],
    path: &Path,
) -> Result<Vec<SecrecyBoundReport>> {
    let rows = sweep(kind, params, grid, budget, seed)?;
    let file = std::fs::File::create(path)?;
    write_csv(std::io::BufWriter::new(file), metadata, &rows)?;
    Ok(rows)
}
