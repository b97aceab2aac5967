//! Conditional likelihood `P(z | x)` of the eavesdropper's output given the
//! input, by alignment trellises, and Monte-Carlo estimates of the
//! conditional entropy rate built on them.
//!
//! Both trellises step through one sequence while the state counts the
//! synchronization errors seen so far:
//!
//! * insertion: step `j` places input symbol `x_j`; the state `t` is the
//!   number of inserted symbols preceding it, so `x_j` sits at `z_{j+t}`.
//! * deletion: step `m` explains output symbol `z_m`; the state `t` is the
//!   number of input symbols deleted so far, so `z_m` is `x_{m+t}`.
//!
//! Moving from `t'` to `t >= t'` costs `r^(t - t')` with `r = i` or `d`,
//! which turns every step into a geometric prefix sum (O(1) per cell). The
//! factor `2^-1` of each inserted bit is the same for every alignment and is
//! applied once at the end.
//! Row normalizers are accumulated in log domain. Entries at the edges of a
//! row that fall below `f64::MIN_POSITIVE` times the row sum are dropped, so
//! the active band of each row shrinks to the span that can still matter at
//! double precision.

use serde::Serialize;

use crate::channel::{transmit, ChannelParams};
use crate::error::{check_open_probability, Error, Result};
use crate::estimate::{derive_seed, run_parallel, EstimateReport};
use crate::source::{BitSequence, MarkovSource};

/// Largest input length for which the exact trellises are used by default.
pub const EXACT_MAX_LEN: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ChannelKind {
    Insertion,
    Deletion,
}

impl ChannelKind {
    pub fn tag(self) -> &'static str {
        match self {
            ChannelKind::Insertion => "ins",
            ChannelKind::Deletion => "del",
        }
    }
}

/// Alignment lattice between an input block and an observed output.
#[derive(Debug, Clone, Copy)]
pub struct AlignmentTrellis<'a> {
    x: &'a [u8],
    z: &'a [u8],
    kind: ChannelKind,
    prob: f64,
}

/// Row storage: entries on the span `[lo, hi]` are live, `sum` is their
/// total. Rows are kept unnormalized; the next section divides by `sum`.
struct Row {
    vals: Vec<f64>,
    lo: usize,
    hi: usize,
    sum: f64,
}

impl Row {
    fn new(width: usize) -> Self {
        Self {
            vals: vec![0.0; width],
            lo: 0,
            hi: 0,
            sum: 1.0,
        }
    }
}

const LANES: usize = 8;

/// `[r, r^2, ..]` with subnormal powers flushed to zero.
fn power_table(r: f64, width: usize) -> Vec<f64> {
    let mut p = r;
    (0..width)
        .map(|_| {
            let v = p;
            p = flush(p * r);
            v
        })
        .collect()
}

/// `v` if `hit`, else `0.0`, without a branch (match bits are random).
#[inline(always)]
fn keep_if(v: f64, hit: bool) -> f64 {
    f64::from_bits(v.to_bits() & 0u64.wrapping_sub(hit as u64))
}

/// Flush-to-zero: subnormal values are dropped to keep arithmetic fast.
#[inline(always)]
fn flush(v: f64) -> f64 {
    if v < f64::MIN_POSITIVE {
        0.0
    } else {
        v
    }
}

/// One trellis section: `new[t] = weight / old.sum * [seq[offset + t] ==
/// bit] * sum_{t' <= t} old[t'] ratio^(t - t')` for `t <= max_t`, with
/// `powers[q] = ratio^(q + 1)` (flushed) covering the row width. Returns
/// `new.sum`, the normalizer of `old` advanced by one step.
///
/// The prefix sums are computed as independent per-lane scans plus a carry
/// fix-up so that the lanes do not serialize on one accumulator.
#[allow(clippy::too_many_arguments)]
fn section(
    old: &Row,
    new: &mut Row,
    ratio: f64,
    powers: &[f64],
    weight: f64,
    seq: &[u8],
    offset: usize,
    bit: u8,
    max_t: usize,
) -> f64 {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") {
        // SAFETY: the CPU supports AVX2, checked just above.
        return unsafe { section_avx2(old, new, ratio, powers, weight, seq, offset, bit, max_t) };
    }
    section_body(old, new, ratio, powers, weight, seq, offset, bit, max_t)
}

/// `section` compiled with 256-bit vectors; same arithmetic, same results.
#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
#[allow(clippy::too_many_arguments)]
unsafe fn section_avx2(
    old: &Row,
    new: &mut Row,
    ratio: f64,
    powers: &[f64],
    weight: f64,
    seq: &[u8],
    offset: usize,
    bit: u8,
    max_t: usize,
) -> f64 {
    section_body(old, new, ratio, powers, weight, seq, offset, bit, max_t)
}

#[inline(always)]
#[allow(clippy::too_many_arguments)]
fn section_body(
    old: &Row,
    new: &mut Row,
    ratio: f64,
    powers: &[f64],
    weight: f64,
    seq: &[u8],
    offset: usize,
    bit: u8,
    max_t: usize,
) -> f64 {
    let w = weight / old.sum;
    let lo = old.lo;
    let hi = old.hi.min(max_t);
    let len = hi + 1 - lo;
    let src = &old.vals[lo..=hi];
    let obs = &seq[offset + lo..=offset + hi];
    let dst = &mut new.vals[lo..=hi];

    // Lanes of equal length `chunk`; the remainder is finished serially.
    let chunk = len / LANES;
    let body = chunk * LANES;
    let mut run = 0.0;
    let mut sum = 0.0;
    if chunk > 0 {
        let mut acc = [0.0f64; LANES];
        {
            let lanes: [&[f64]; LANES] = std::array::from_fn(|k| &src[k * chunk..(k + 1) * chunk]);
            let mut out = dst[..body].chunks_exact_mut(chunk);
            let out: [&mut [f64]; LANES] = std::array::from_fn(|_| out.next().unwrap_or_default());
            for q in 0..chunk {
                for k in 0..LANES {
                    acc[k] = flush(acc[k] * ratio + lanes[k][q]);
                    out[k][q] = acc[k];
                }
            }
        }
        // carry[k]: full prefix sum just before lane k starts.
        let decay = ratio.powi(chunk as i32);
        let mut carry = [0.0f64; LANES];
        for k in 1..LANES {
            carry[k] = acc[k - 1] + carry[k - 1] * decay;
        }
        run = acc[LANES - 1] + carry[LANES - 1] * decay;
        let mut sums = [0.0f64; 4];
        for (k, lane) in dst[..body].chunks_exact_mut(chunk).enumerate() {
            let c = carry[k];
            let lane_obs = &obs[k * chunk..(k + 1) * chunk];
            let mut quads = lane.chunks_exact_mut(4);
            let mut obs_quads = lane_obs.chunks_exact(4);
            let mut pow_quads = powers[..chunk].chunks_exact(4);
            for ((dq, oq), pq) in (&mut quads).zip(&mut obs_quads).zip(&mut pow_quads) {
                for u in 0..4 {
                    let v = flush(keep_if(w * (dq[u] + c * pq[u]), oq[u] == bit));
                    dq[u] = v;
                    sums[u] += v;
                }
            }
            let rest = quads.into_remainder().iter_mut().zip(obs_quads.remainder()).zip(pow_quads.remainder());
            for ((dv, &ov), &pv) in rest {
                let v = flush(keep_if(w * (*dv + c * pv), ov == bit));
                *dv = v;
                sums[0] += v;
            }
        }
        sum = sums.iter().sum();
    }
    for idx in body..len {
        run = flush(run * ratio + src[idx]);
        let v = flush(keep_if(w * run, obs[idx] == bit));
        dst[idx] = v;
        sum += v;
    }


    // Tail beyond the old span: the prefix sum only decays.
    let floor = f64::MIN_POSITIVE * sum.max(w * run);
    let mut end = hi;
    let mut t = hi + 1;
    while t <= max_t {
        run *= ratio;
        let v = w * run;
        if !(v >= floor) {
            break;
        }
        let v = if seq[offset + t] == bit { v } else { 0.0 };
        new.vals[t] = v;
        sum += v;
        end = t;
        t += 1;
    }
    if !(sum > 0.0) || !sum.is_finite() {
        return sum;
    }
    // Drop negligible entries at both edges of the span.
    let floor = f64::MIN_POSITIVE * sum;
    let mut first = lo;
    while new.vals[first] < floor {
        first += 1;
    }
    let mut last = end;
    while new.vals[last] < floor {
        last -= 1;
    }
    new.lo = first;
    new.hi = last;
    new.sum = sum;
    sum
}

/// `log2 sum_t row[t] ratio^(total - t)` relative to the row sum, or `None`
/// when the sum is zero.
fn log2_tail(row: &Row, ratio: f64, total: usize) -> Option<f64> {
    let log_ratio = ratio.log2();
    let terms: Vec<f64> = (row.lo..=row.hi)
        .filter(|&t| row.vals[t] > 0.0 && (t == total || ratio > 0.0))
        .map(|t| row.vals[t].log2() + if t == total { 0.0 } else { (total - t) as f64 * log_ratio })
        .collect();
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return None;
    }
    Some(max + terms.iter().map(|v| (v - max).exp2()).sum::<f64>().log2() - row.sum.log2())
}

impl<'a> AlignmentTrellis<'a> {
    /// Trellis for the insertion channel with insertion probability `i`.
    pub fn insertion(x: &'a [u8], z: &'a [u8], i: f64) -> Result<Self> {
        check_open_probability("i", i)?;
        if x.is_empty() {
            return Err(Error::Parameter("insertion trellis needs a nonempty input".into()));
        }
        Ok(Self {
            x,
            z,
            kind: ChannelKind::Insertion,
            prob: i,
        })
    }

    /// Trellis for the deletion channel with deletion probability `d`.
    pub fn deletion(x: &'a [u8], z: &'a [u8], d: f64) -> Result<Self> {
        check_open_probability("d", d)?;
        Ok(Self {
            x,
            z,
            kind: ChannelKind::Deletion,
            prob: d,
        })
    }

    pub fn kind(&self) -> ChannelKind {
        self.kind
    }

    /// Number of states reachable from the start at each observed position
    /// (0-based), ignoring the terminal constraint. For the insertion
    /// channel this is `min(m, n - 1) + 1`.
    pub fn reachable_states(&self) -> Vec<usize> {
        let n = self.x.len();
        let len = self.z.len();
        match self.kind {
            // After observing z_0..=z_m, between 1 and min(m + 1, n) inputs
            // are consumed (the first output is always x_1).
            ChannelKind::Insertion => (0..len).map(|m| (m + 1).min(n)).collect(),
            // After explaining z_0..=z_m, inputs m + 1..=n - (len - m - 1)
            // may be consumed.
            ChannelKind::Deletion => vec![(n + 1).saturating_sub(len); len],
        }
    }

    /// `-log2 P(z | x)`.
    pub fn neg_log2_likelihood(&self) -> Result<f64> {
        match self.kind {
            ChannelKind::Insertion => self.insertion_nll(),
            ChannelKind::Deletion => self.deletion_nll(),
        }
    }

    fn insertion_nll(&self) -> Result<f64> {
        let (x, z, i) = (self.x, self.z, self.prob);
        let n = x.len();
        let len = z.len();
        if len < n {
            return Err(Error::ImpossibleObservation { position: len });
        }
        if z[0] != x[0] {
            return Err(Error::ImpossibleObservation { position: 0 });
        }
        let total = len - n;
        if i == 0.0 && total > 0 {
            return Err(Error::ImpossibleObservation { position: n });
        }
        // Every complete alignment carries exactly `total` inserted bits, so
        // the uniform 1/2 per inserted bit is pulled out of the recursion
        // (`total` bits added at the end). Weighting insertions by `i`
        // keeps states with different prefix lengths comparable.
        let ratio = i;
        let keep = 1.0 - i;
        let mut old = Row::new(total + 1);
        let mut new = Row::new(total + 1);
        let powers = power_table(ratio, total + 1);
        old.vals[0] = 1.0;
        let mut nll = total as f64;
        for j in 1..n {
            // x_j (0-based) lands at z[j + t].
            let c = section(&old, &mut new, ratio, &powers, keep, z, j, x[j], total);
            if !(c > 0.0) {
                return Err(Error::ImpossibleObservation { position: j + old.lo });
            }
            nll -= c.log2();
            std::mem::swap(&mut old, &mut new);
        }
        // Trailing insertions after the last input, then the final stop.
        let tail = log2_tail(&old, ratio, total).ok_or(Error::ImpossibleObservation { position: len })?;
        Ok(nll - tail - keep.log2())
    }

    fn deletion_nll(&self) -> Result<f64> {
        let (x, z, d) = (self.x, self.z, self.prob);
        let n = x.len();
        let len = z.len();
        if len > n {
            return Err(Error::ImpossibleObservation { position: n });
        }
        let total = n - len;
        if len == 0 {
            return if total == 0 {
                Ok(0.0)
            } else if d > 0.0 {
                Ok(-(total as f64) * d.log2())
            } else {
                Err(Error::ImpossibleObservation { position: 0 })
            };
        }
        let keep = 1.0 - d;
        let mut old = Row::new(total + 1);
        let mut new = Row::new(total + 1);
        let powers = power_table(d, total + 1);
        old.vals[0] = 1.0;
        let mut nll = 0.0;
        for m in 0..len {
            // z_m (0-based) is x[m + t].
            let c = section(&old, &mut new, d, &powers, keep, x, m, z[m], total);
            if !(c > 0.0) {
                return Err(Error::ImpossibleObservation { position: m });
            }
            nll -= c.log2();
            std::mem::swap(&mut old, &mut new);
        }
        let tail = log2_tail(&old, d, total).ok_or(Error::ImpossibleObservation { position: len })?;
        Ok(nll - tail)
    }
}

/// `-log2 P(z | x)` for the insertion-only transmitter.
pub fn cond_nll_insertion(x: &[u8], z: &[u8], i: f64) -> Result<f64> {
    AlignmentTrellis::insertion(x, z, i)?.neg_log2_likelihood()
}

/// `-log2 P(z | x)` for the deletion-only transmitter.
pub fn cond_nll_deletion_exact(x: &[u8], z: &[u8], d: f64) -> Result<f64> {
    AlignmentTrellis::deletion(x, z, d)?.neg_log2_likelihood()
}

/// Samples one `(x, transmitted record)` pair for run seed `run_seed`.
fn sample_pair(
    source: &MarkovSource,
    params: ChannelParams,
    n: usize,
    run_seed: u64,
) -> Result<(BitSequence, crate::channel::TransmissionRecord)> {
    let x = source.sample_path(n, derive_seed(run_seed, 0));
    let rec = transmit(&x, params, derive_seed(run_seed, 1))?;
    Ok((x, rec))
}

fn pure_channel(params: ChannelParams) -> Result<()> {
    if params.insertion > 0.0 && params.deletion > 0.0 {
        return Err(Error::UnsupportedCombination);
    }
    check_open_probability("d", params.deletion)
}

/// Monte-Carlo estimate of `(1/n) H(Zbar | X^n)` with the exact trellises.
pub fn mc_cond_entropy_rate(
    source: &MarkovSource,
    params: ChannelParams,
    n: usize,
    runs: usize,
    seed: u64,
) -> Result<EstimateReport> {
    pure_channel(params)?;
    if n == 0 {
        return Err(Error::Parameter("input length must be at least 1".into()));
    }
    let (values, seeds) = run_parallel(runs, seed, |run_seed| {
        let (x, rec) = sample_pair(source, params, n, run_seed)?;
        let z = rec.flat_output();
        let nll = if params.insertion > 0.0 {
            cond_nll_insertion(x.as_slice(), z.as_slice(), params.insertion)?
        } else if params.deletion > 0.0 {
            cond_nll_deletion_exact(x.as_slice(), z.as_slice(), params.deletion)?
        } else {
            0.0
        };
        Ok(nll / n as f64)
    })?;
    EstimateReport::from_runs(&values, n, seeds)
}

/// Block length of the genie-aided conditional-entropy lower bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GenieBlockConfig {
    block_len: usize,
}

impl GenieBlockConfig {
    pub fn new(block_len: usize) -> Result<Self> {
        if block_len == 0 {
            return Err(Error::Parameter("genie block length must be at least 1".into()));
        }
        Ok(Self { block_len })
    }

    pub fn block_len(&self) -> usize {
        self.block_len
    }
}

/// `log2 C(n, k)`.
fn log2_binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (1..=k).map(|j| ((n - k + j) as f64 / j as f64).log2()).sum()
}

/// `-log2 P(z_b | x_b, D_b)` for one block whose deletion count `D_b` is
/// revealed: the block likelihood divided by the binomial probability of
/// that count.
fn genie_block_nll(x: &[u8], z: &[u8], d: f64) -> Result<f64> {
    let len = x.len();
    let deleted = len - z.len();
    let block = cond_nll_deletion_exact(x, z, d)?;
    let mut log_count = log2_binomial(len, deleted);
    if deleted > 0 {
        log_count += deleted as f64 * d.log2();
    }
    if deleted < len {
        log_count += (len - deleted) as f64 * (1.0 - d).log2();
    }
    Ok(block + log_count)
}

/// Lower bound on `(1/n) H(Zbar | X^n)` for the deletion channel: the
/// cumulative deletion counts at multiples of the block length are revealed,
/// which only removes uncertainty and splits the trellis into independent
/// blocks. A final short block keeps its natural length.
pub fn genie_block_cond_entropy_lb(
    source: &MarkovSource,
    d: f64,
    n: usize,
    config: GenieBlockConfig,
    runs: usize,
    seed: u64,
) -> Result<EstimateReport> {
    check_open_probability("d", d)?;
    let block = config.block_len();
    if block > n {
        return Err(Error::Parameter(format!(
            "genie block length {block} exceeds the input length {n}"
        )));
    }
    let params = ChannelParams::deletion_only(d)?;
    let (values, seeds) = run_parallel(runs, seed, |run_seed| {
        let (x, rec) = sample_pair(source, params, n, run_seed)?;
        let mut total = 0.0;
        let mut z_block = Vec::with_capacity(block);
        for (xs, segs) in x.as_slice().chunks(block).zip(rec.segments().chunks(block)) {
            z_block.clear();
            segs.iter().for_each(|s| z_block.extend_from_slice(s));
            total += genie_block_nll(xs, &z_block, d)?;
        }
        Ok(total / n as f64)
    })?;
    EstimateReport::from_runs(&values, n, seeds)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    #[test]
    fn insertion_single_symbol() {
        for i in [0.1, 0.5, 0.9] {
            close(cond_nll_insertion(&[0], &[0], i).unwrap(), -(1.0 - i as f64).log2(), 1e-14);
        }
    }

    #[test]
    fn insertion_one_inserted_symbol() {
        close(cond_nll_insertion(&[0], &[0, 1], 0.5).unwrap(), 3.0, 1e-14);
        // (N1, N2) in {(1, 0), (0, 1)}: 2 (1-i)^2 (i/2) = 0.125
        close(cond_nll_insertion(&[0, 0], &[0, 0, 0], 0.5).unwrap(), 3.0, 1e-14);
    }

    #[test]
    fn insertion_impossible() {
        assert!(matches!(
            cond_nll_insertion(&[0], &[1], 0.5),
            Err(Error::ImpossibleObservation { .. })
        ));
        assert!(matches!(
            cond_nll_insertion(&[0, 1], &[0], 0.5),
            Err(Error::ImpossibleObservation { .. })
        ));
        assert!(matches!(
            cond_nll_insertion(&[0, 1], &[0, 0], 0.5),
            Err(Error::ImpossibleObservation { .. })
        ));
    }

    #[test]
    fn insertion_zero_probability_is_identity() {
        close(cond_nll_insertion(&[0, 1, 1], &[0, 1, 1], 0.0).unwrap(), 0.0, 0.0);
        assert!(cond_nll_insertion(&[0, 1], &[0, 1, 1], 0.0).is_err());
    }

    #[test]
    fn deletion_full_keep_and_empty() {
        let x = [0u8, 1, 1, 0, 1];
        let d: f64 = 0.3;
        close(cond_nll_deletion_exact(&x, &x, d).unwrap(), -5.0 * (1.0 - d).log2(), 1e-13);
        close(cond_nll_deletion_exact(&x, &[], d).unwrap(), -5.0 * d.log2(), 1e-13);
        close(cond_nll_deletion_exact(&[0, 0], &[0], d).unwrap(), -(2.0 * d * (1.0 - d)).log2(), 1e-14);
    }

    #[test]
    fn deletion_impossible() {
        assert!(matches!(
            cond_nll_deletion_exact(&[0, 0], &[1], 0.5),
            Err(Error::ImpossibleObservation { .. })
        ));
        assert!(matches!(
            cond_nll_deletion_exact(&[0], &[0, 0], 0.5),
            Err(Error::ImpossibleObservation { .. })
        ));
        assert!(cond_nll_deletion_exact(&[0, 1], &[0], 0.0).is_err());
    }

    #[test]
    fn insertion_state_counts() {
        let x = [0u8, 1, 1];
        let z = [0u8, 1, 0, 1, 1, 0];
        let t = AlignmentTrellis::insertion(&x, &z, 0.5).unwrap();
        let counts = t.reachable_states();
        for (m, &c) in counts.iter().enumerate() {
            assert_eq!(c, m.min(x.len() - 1) + 1);
        }
    }

    #[test]
    fn no_errors_means_zero_conditional_entropy() {
        let src = MarkovSource::first_order(0.3, 0.3).unwrap();
        let r = mc_cond_entropy_rate(&src, ChannelParams::new(0.0, 0.0).unwrap(), 100, 4, 1).unwrap();
        assert_eq!(r.mean, 0.0);
        assert_eq!(r.stderr, 0.0);
    }

    #[test]
    fn combined_channel_rejected() {
        let src = MarkovSource::first_order(0.3, 0.3).unwrap();
        assert!(matches!(
            mc_cond_entropy_rate(&src, ChannelParams::new(0.1, 0.1).unwrap(), 10, 2, 1),
            Err(Error::UnsupportedCombination)
        ));
    }

    #[test]
    fn genie_without_deletions() {
        let src = MarkovSource::first_order(0.3, 0.3).unwrap();
        let r = genie_block_cond_entropy_lb(&src, 0.0, 64, GenieBlockConfig::new(16).unwrap(), 3, 1).unwrap();
        assert_eq!(r.mean, 0.0);
        assert!(genie_block_cond_entropy_lb(&src, 0.2, 8, GenieBlockConfig::new(16).unwrap(), 3, 1).is_err());
        assert!(GenieBlockConfig::new(0).is_err());
    }

    #[test]
    fn genie_short_final_block() {
        let src = MarkovSource::first_order(0.4, 0.4).unwrap();
        let r = genie_block_cond_entropy_lb(&src, 0.3, 50, GenieBlockConfig::new(16).unwrap(), 4, 2).unwrap();
        assert!(r.mean.is_finite() && r.mean >= 0.0);
    }

    #[test]
    fn binomial_logs() {
        close(log2_binomial(4, 2), 6f64.log2(), 1e-15);
        close(log2_binomial(10, 0), 0.0, 0.0);
        close(log2_binomial(10, 10), 0.0, 0.0);
    }
}
