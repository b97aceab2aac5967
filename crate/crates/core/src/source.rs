//! Binary Markov input sources of arbitrary order.
//!
//! A source of order `M` has `2^M` states, each a length-`M` bit string read
//! as an unsigned integer with the oldest bit most significant. Emitting bit
//! `b` from state `s` moves to `((s << 1) | b) & (2^M - 1)`, so the emitted
//! symbol is always the last bit of the new state.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_probability, Error, Result};

const ROW_SUM_TOL: f64 = 1e-12;
const STATIONARY_TOL: f64 = 1e-10;

/// A finite sequence over `{0, 1}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct BitSequence(Vec<u8>);

impl BitSequence {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if let Some(pos) = bits.iter().position(|&b| b > 1) {
            return Err(Error::Validation(format!(
                "symbol {} at position {pos} is not a bit",
                bits[pos]
            )));
        }
        Ok(Self(bits))
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<u8> {
        self.0
    }
}

impl fmt::Display for BitSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b == 0 { "0" } else { "1" })?;
        }
        Ok(())
    }
}

impl FromStr for BitSequence {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.trim()
            .chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                other => Err(Error::Validation(format!("'{other}' is not a bit"))),
            })
            .collect::<Result<Vec<u8>>>()
            .map(Self)
    }
}

/// Binary entropy `h(x) = -x log2 x - (1-x) log2 (1-x)` with `0 log 0 = 0`.
pub fn binary_entropy(x: f64) -> Result<f64> {
    check_probability("x", x)?;
    Ok(plogp(x) + plogp(1.0 - x))
}

/// `-p log2 p`, zero at `p = 0`.
pub(crate) fn plogp(p: f64) -> f64 {
    if p > 0.0 {
        -p * p.log2()
    } else {
        0.0
    }
}

fn validate_stochastic(p: &DMatrix<f64>) -> Result<()> {
    if p.nrows() != p.ncols() || p.nrows() == 0 {
        return Err(Error::Validation(format!(
            "transition matrix must be square and nonempty, got {}x{}",
            p.nrows(),
            p.ncols()
        )));
    }
    for r in 0..p.nrows() {
        let row = p.row(r);
        if let Some(v) = row.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Validation(format!(
                "entry {v} in row {r} is not a probability"
            )));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::Validation(format!("row {r} sums to {sum}, not 1")));
        }
    }
    Ok(())
}

/// Boolean reachability closure of the positive-entry graph (`reach[s][s]`
/// is true only when `s` lies on a cycle).
fn reachability(p: &DMatrix<f64>) -> Vec<Vec<bool>> {
    let n = p.nrows();
    (0..n)
        .map(|start| {
            let mut seen = vec![false; n];
            let mut stack: Vec<usize> = (0..n).filter(|&t| p[(start, t)] > 0.0).collect();
            for &t in &stack {
                seen[t] = true;
            }
            while let Some(u) = stack.pop() {
                for v in 0..n {
                    if p[(u, v)] > 0.0 && !seen[v] {
                        seen[v] = true;
                        stack.push(v);
                    }
                }
            }
            seen
        })
        .collect()
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Period of the communicating class `class`, from BFS levels: the gcd of
/// `level[u] + 1 - level[v]` over all class edges `u -> v`.
fn period(p: &DMatrix<f64>, class: &[usize]) -> usize {
    let n = p.nrows();
    let mut in_class = vec![false; n];
    for &s in class {
        in_class[s] = true;
    }
    let mut level = vec![usize::MAX; n];
    level[class[0]] = 0;
    let mut queue = std::collections::VecDeque::from([class[0]]);
    while let Some(u) = queue.pop_front() {
        for v in 0..n {
            if in_class[v] && p[(u, v)] > 0.0 && level[v] == usize::MAX {
                level[v] = level[u] + 1;
                queue.push_back(v);
            }
        }
    }
    let mut g = 0;
    for &u in class {
        for &v in class {
            if p[(u, v)] > 0.0 {
                g = gcd(g, (level[u] + 1).abs_diff(level[v]));
            }
        }
    }
    g
}

/// Recurrent classes of the chain, each sorted, in order of smallest state.
fn recurrent_classes(p: &DMatrix<f64>) -> Vec<Vec<usize>> {
    let n = p.nrows();
    let reach = reachability(p);
    let recurrent: Vec<bool> = (0..n)
        .map(|s| reach[s][s] && (0..n).all(|t| !reach[s][t] || reach[t][s]))
        .collect();
    let mut assigned = vec![false; n];
    let mut classes = Vec::new();
    for s in 0..n {
        if recurrent[s] && !assigned[s] {
            let class: Vec<usize> = (0..n).filter(|&t| t == s || (reach[s][t] && reach[t][s])).collect();
            for &t in &class {
                assigned[t] = true;
            }
            classes.push(class);
        }
    }
    classes
}

/// Solves `pi P = pi`, `sum(pi) = 1` restricted to `class`; other states
/// get zero mass.
fn solve_stationary(p: &DMatrix<f64>, class: &[usize]) -> Result<Vec<f64>> {
    let k = class.len();
    // Rows of A are the equations (P^T - I) pi = 0 with the last one
    // replaced by the normalization.
    let mut a = DMatrix::<f64>::zeros(k, k);
    for (r, &sr) in class.iter().enumerate() {
        for (c, &sc) in class.iter().enumerate() {
            a[(r, c)] = p[(sc, sr)] - if r == c { 1.0 } else { 0.0 };
        }
    }
    for c in 0..k {
        a[(k - 1, c)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(k);
    b[k - 1] = 1.0;
    let sol = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Numeric("stationary system is singular".into()))?;
    let mut pi = vec![0.0; p.nrows()];
    for (i, &s) in class.iter().enumerate() {
        pi[s] = sol[i].max(0.0);
    }
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|v| *v /= total);
    Ok(pi)
}

/// Unique stationary distribution of a row-stochastic matrix.
///
/// The positive-entry graph must have exactly one closed communicating
/// class and that class must be aperiodic. Transient states are allowed
/// and receive zero mass.
pub fn stationary_dist(p: &DMatrix<f64>) -> Result<Vec<f64>> {
    validate_stochastic(p)?;
    let classes = recurrent_classes(p);
    if classes.len() != 1 {
        return Err(Error::Structure(format!(
            "chain has {} closed classes, stationary law is not unique",
            classes.len()
        )));
    }
    let per = period(p, &classes[0]);
    if per != 1 {
        return Err(Error::Structure(format!("chain is periodic with period {per}")));
    }
    solve_stationary(p, &classes[0])
}

/// An order-`M` binary Markov source.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovSource {
    order: usize,
    transitions: DMatrix<f64>,
    stationary: Vec<f64>,
}

impl MarkovSource {
    /// Builds a source from its full `2^M x 2^M` transition matrix and
    /// computes the stationary law.
    pub fn new(order: usize, transitions: DMatrix<f64>) -> Result<Self> {
        Self::check_shape(order, &transitions)?;
        validate_stochastic(&transitions)?;
        Self::check_shift_structure(order, &transitions)?;
        let stationary = stationary_dist(&transitions)?;
        Ok(Self {
            order,
            transitions,
            stationary,
        })
    }

    /// Builds a source with an explicitly supplied initial law, which must
    /// be stationary. Only the states reachable from its support need to
    /// form an irreducible aperiodic chain, so e.g. the identity matrix
    /// started in one state is admissible.
    pub fn with_initial(order: usize, transitions: DMatrix<f64>, initial: Vec<f64>) -> Result<Self> {
        Self::check_shape(order, &transitions)?;
        validate_stochastic(&transitions)?;
        Self::check_shift_structure(order, &transitions)?;
        let n = transitions.nrows();
        if initial.len() != n {
            return Err(Error::Validation(format!(
                "initial law has {} entries, expected {n}",
                initial.len()
            )));
        }
        if initial.iter().any(|v| !(0.0..=1.0).contains(v))
            || (initial.iter().sum::<f64>() - 1.0).abs() > ROW_SUM_TOL
        {
            return Err(Error::Validation("initial law is not a probability vector".into()));
        }
        for t in 0..n {
            let next: f64 = (0..n).map(|s| initial[s] * transitions[(s, t)]).sum();
            if (next - initial[t]).abs() > STATIONARY_TOL {
                return Err(Error::Validation("initial law is not stationary".into()));
            }
        }
        // Restrict to everything reachable from the support of the initial law.
        let reach = reachability(&transitions);
        let mut keep = vec![false; n];
        for s in (0..n).filter(|&s| initial[s] > 0.0) {
            keep[s] = true;
            for t in 0..n {
                keep[t] |= reach[s][t];
            }
        }
        let kept: Vec<usize> = (0..n).filter(|&s| keep[s]).collect();
        let sub = DMatrix::from_fn(kept.len(), kept.len(), |r, c| transitions[(kept[r], kept[c])]);
        let classes = recurrent_classes(&sub);
        if classes.len() != 1 || classes[0].len() != kept.len() {
            return Err(Error::Structure(
                "chain restricted to reachable states is not irreducible".into(),
            ));
        }
        let per = period(&sub, &classes[0]);
        if per != 1 {
            return Err(Error::Structure(format!("chain is periodic with period {per}")));
        }
        Ok(Self {
            order,
            transitions,
            stationary: initial,
        })
    }

    /// First-order source with `P(1|0) = p01` and `P(0|1) = p10`.
    pub fn first_order(p01: f64, p10: f64) -> Result<Self> {
        check_probability("p01", p01)?;
        check_probability("p10", p10)?;
        Self::new(
            1,
            DMatrix::from_row_slice(2, 2, &[1.0 - p01, p01, p10, 1.0 - p10]),
        )
    }

    /// Source of order `M` given `P(next bit = 1 | state)` for each of the
    /// `2^M` states.
    pub fn from_conditionals(order: usize, prob_one: &[f64]) -> Result<Self> {
        let n = 1usize << order;
        if prob_one.len() != n {
            return Err(Error::Validation(format!(
                "expected {n} conditionals for order {order}, got {}",
                prob_one.len()
            )));
        }
        let mut p = DMatrix::zeros(n, n);
        for (s, &q) in prob_one.iter().enumerate() {
            check_probability("P(1|state)", q)?;
            let base = (s << 1) & (n - 1);
            p[(s, base)] += 1.0 - q;
            p[(s, base | 1)] += q;
        }
        Self::new(order, p)
    }

    /// Parses comma-separated rows; the order is inferred from the row count.
    pub fn from_csv(text: &str) -> Result<Self> {
        let rows: Vec<Vec<f64>> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| {
                l.split(',')
                    .map(|v| {
                        v.trim()
                            .parse::<f64>()
                            .map_err(|e| Error::Validation(format!("bad matrix entry '{v}': {e}")))
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        let n = rows.len();
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::Validation(format!(
                "matrix must have 2^M rows with M >= 1, got {n}"
            )));
        }
        if let Some(r) = rows.iter().position(|r| r.len() != n) {
            return Err(Error::Validation(format!("row {r} does not have {n} entries")));
        }
        let order = n.trailing_zeros() as usize;
        Self::new(order, DMatrix::from_fn(n, n, |r, c| rows[r][c]))
    }

    fn check_shape(order: usize, p: &DMatrix<f64>) -> Result<()> {
        if order == 0 || order > 16 {
            return Err(Error::Validation(format!("order {order} not in 1..=16")));
        }
        let n = 1usize << order;
        if p.nrows() != n || p.ncols() != n {
            return Err(Error::Validation(format!(
                "order {order} needs a {n}x{n} matrix, got {}x{}",
                p.nrows(),
                p.ncols()
            )));
        }
        Ok(())
    }

    fn check_shift_structure(order: usize, p: &DMatrix<f64>) -> Result<()> {
        let mask = (1usize << order) - 1;
        for s in 0..p.nrows() {
            for t in 0..p.ncols() {
                if p[(s, t)] > 0.0 && (s << 1) & mask != t & !1 {
                    return Err(Error::Validation(format!(
                        "transition {s} -> {t} is not a shift of the state bits"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn num_states(&self) -> usize {
        self.transitions.nrows()
    }

    pub fn transitions(&self) -> &DMatrix<f64> {
        &self.transitions
    }

    pub fn transition(&self, from: usize, to: usize) -> f64 {
        self.transitions[(from, to)]
    }

    pub fn stationary(&self) -> &[f64] {
        &self.stationary
    }

    /// `(p01, p10)` for first-order sources.
    pub fn first_order_params(&self) -> Option<(f64, f64)> {
        (self.order == 1).then(|| (self.transitions[(0, 1)], self.transitions[(1, 0)]))
    }

    /// State reached from `state` after emitting `bit`.
    pub fn next_state(&self, state: usize, bit: u8) -> usize {
        ((state << 1) | bit as usize) & (self.num_states() - 1)
    }

    /// Closed-form entropy rate in bits per symbol.
    pub fn entropy_rate(&self) -> f64 {
        let n = self.num_states();
        (0..n)
            .map(|s| self.stationary[s] * (0..n).map(|t| plogp(self.transitions[(s, t)])).sum::<f64>())
            .sum()
    }

    /// Draws `n` symbols: the initial state comes from the stationary law and
    /// each symbol is the last bit of the next state.
    pub fn sample_path(&self, n: usize, seed: u64) -> BitSequence {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut state = draw_index(&mut rng, &self.stationary);
        let mut bits = Vec::with_capacity(n);
        for _ in 0..n {
            let p_one = self.transitions[(state, self.next_state(state, 1))];
            let bit = u8::from(rng.random::<f64>() < p_one);
            state = self.next_state(state, bit);
            bits.push(bit);
        }
        BitSequence(bits)
    }
}

/// Last bit of a state label.
pub fn last_bit(state: usize) -> u8 {
    (state & 1) as u8
}

/// Inverse-CDF draw from a probability vector.
pub(crate) fn draw_index<R: Rng>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Round-off: fall back to the last state with positive mass.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Closed-form entropy rate of `source` (bits per input symbol).
pub fn entropy_rate_closed_form(source: &MarkovSource) -> f64 {
    source.entropy_rate()
}
