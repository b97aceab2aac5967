//! Hidden-Markov descriptions of the eavesdropper's output symbols and the
//! receiver's erasure sequence, with a normalized forward recursion and
//! Monte-Carlo entropy-rate estimation.
//!
//! Every model keeps the state space of the input source. Emissions are
//! attached to transitions: the symbol `z_m` is drawn from
//! `Pr(z_m | s_{m-1}, s_m)` after the state moves along `Q`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channel::{ChannelParams, ERASURE};
use crate::error::{check_open_probability, check_probability, Error, Result};
use crate::estimate::{run_parallel, EstimateReport};
use crate::source::{draw_index, last_bit, MarkovSource};

const ROW_SUM_TOL: f64 = 1e-12;
const STATIONARY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
struct Edge {
    from: usize,
    to: usize,
    prob: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HiddenMarkovModel {
    num_states: usize,
    alphabet: usize,
    q: DMatrix<f64>,
    /// `Pr(symbol | from, to)` laid out as `[(from * S + to) * A + symbol]`.
    emission: Vec<f64>,
    initial: Vec<f64>,
    edges: Vec<Edge>,
    /// `edge_weights[symbol][e] = Q(e) * Pr(symbol | e)`.
    edge_weights: Vec<Vec<f64>>,
    /// Outgoing edge indices per state, for sampling.
    out_edges: Vec<Vec<usize>>,
}

impl HiddenMarkovModel {
    /// Validates and assembles a model. `emission` is indexed
    /// `[(from * S + to) * alphabet + symbol]`; rows only matter where
    /// `Q(from, to) > 0`.
    pub fn new(q: DMatrix<f64>, emission: Vec<f64>, initial: Vec<f64>, alphabet: usize) -> Result<Self> {
        let s = q.nrows();
        if q.ncols() != s || s == 0 {
            return Err(Error::Validation("transition matrix must be square".into()));
        }
        if !(2..=3).contains(&alphabet) {
            return Err(Error::Validation(format!("alphabet size {alphabet} not supported")));
        }
        if emission.len() != s * s * alphabet || initial.len() != s {
            return Err(Error::Validation("emission or initial table has the wrong size".into()));
        }
        for r in 0..s {
            let row = q.row(r);
            if row.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::Validation(format!("row {r} of Q has an entry outside [0, 1]")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::Validation(format!("row {r} of Q sums to {sum}")));
            }
        }
        let mut edges = Vec::new();
        for from in 0..s {
            for to in 0..s {
                let prob = q[(from, to)];
                if prob <= 0.0 {
                    continue;
                }
                let em = &emission[(from * s + to) * alphabet..(from * s + to + 1) * alphabet];
                if em.iter().any(|v| !(0.0..=1.0).contains(v)) {
                    return Err(Error::Validation(format!("emission on {from}->{to} is not a probability")));
                }
                let sum: f64 = em.iter().sum();
                if (sum - 1.0).abs() > ROW_SUM_TOL {
                    return Err(Error::Validation(format!("emission on {from}->{to} sums to {sum}")));
                }
                edges.push(Edge { from, to, prob });
            }
        }
        if initial.iter().any(|v| *v < 0.0) || (initial.iter().sum::<f64>() - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::Validation("initial law is not a probability vector".into()));
        }
        for t in 0..s {
            let next: f64 = (0..s).map(|f| initial[f] * q[(f, t)]).sum();
            if (next - initial[t]).abs() > STATIONARY_TOL {
                return Err(Error::Validation("initial law is not stationary for Q".into()));
            }
        }
        let edge_weights = (0..alphabet)
            .map(|sym| {
                edges
                    .iter()
                    .map(|e| e.prob * emission[(e.from * s + e.to) * alphabet + sym])
                    .collect()
            })
            .collect();
        let mut out_edges = vec![Vec::new(); s];
        for (k, e) in edges.iter().enumerate() {
            out_edges[e.from].push(k);
        }
        Ok(Self {
            num_states: s,
            alphabet,
            q,
            emission,
            initial,
            edges,
            edge_weights,
            out_edges,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    /// Output alphabet size: 2 for bits, 3 when erasures are possible.
    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    pub fn transitions(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    /// `Pr(symbol | from, to)`.
    pub fn emission(&self, from: usize, to: usize, symbol: u8) -> f64 {
        self.emission[(from * self.num_states + to) * self.alphabet + symbol as usize]
    }

    /// Draws `k` output symbols.
    pub fn sample(&self, k: usize, seed: u64) -> Vec<u8> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut state = draw_index(&mut rng, &self.initial);
        let mut out = Vec::with_capacity(k);
        let mut em = vec![0.0; self.alphabet];
        for _ in 0..k {
            let u: f64 = rng.random();
            let candidates = &self.out_edges[state];
            let mut acc = 0.0;
            let mut next = self.edges[*candidates.last().expect("every state has an exit")].to;
            for &e in candidates {
                acc += self.edges[e].prob;
                if u < acc {
                    next = self.edges[e].to;
                    break;
                }
            }
            for (sym, slot) in em.iter_mut().enumerate() {
                *slot = self.emission(state, next, sym as u8);
            }
            out.push(draw_index(&mut rng, &em) as u8);
            state = next;
        }
        out
    }

    /// `-log2 P(z)` by the normalized forward recursion.
    ///
    /// Returns [`Error::ImpossibleObservation`] at the first prefix with zero
    /// probability.
    pub fn forward_nll(&self, observed: &[u8]) -> Result<f64> {
        self.forward_with(observed, |_| {})
    }

    /// Forward recursion reporting every normalizer `c_m` to `visit`.
    pub fn forward_with(&self, observed: &[u8], mut visit: impl FnMut(f64)) -> Result<f64> {
        let mut alpha = self.initial.clone();
        let mut next = vec![0.0; self.num_states];
        let mut nll = 0.0;
        for (m, &sym) in observed.iter().enumerate() {
            if sym as usize >= self.alphabet {
                return Err(Error::Validation(format!(
                    "symbol {sym} at position {m} is outside the model alphabet"
                )));
            }
            next.iter_mut().for_each(|v| *v = 0.0);
            let weights = &self.edge_weights[sym as usize];
            for (e, &w) in self.edges.iter().zip(weights) {
                next[e.to] += alpha[e.from] * w;
            }
            let c: f64 = next.iter().sum();
            if c <= 0.0 || !c.is_finite() {
                return Err(Error::ImpossibleObservation { position: m });
            }
            visit(c);
            next.iter_mut().for_each(|v| *v /= c);
            nll -= c.log2();
            std::mem::swap(&mut alpha, &mut next);
        }
        Ok(nll)
    }
}

fn deterministic_emission(s: usize, alphabet: usize) -> Vec<f64> {
    let mut emission = vec![0.0; s * s * alphabet];
    for from in 0..s {
        for to in 0..s {
            emission[(from * s + to) * alphabet + last_bit(to) as usize] = 1.0;
        }
    }
    emission
}

/// Output symbols of the insertion channel: `Q = (1 - i) P + i I`, and on a
/// self-transition the symbol differs from the state's last bit with
/// probability `(i / 2) / Q(s, s)`.
pub fn build_insertion_hmm(source: &MarkovSource, i: f64) -> Result<HiddenMarkovModel> {
    check_open_probability("i", i)?;
    let s = source.num_states();
    let p = source.transitions();
    let q = p * (1.0 - i) + DMatrix::<f64>::identity(s, s) * i;
    let mut emission = deterministic_emission(s, 2);
    if i > 0.0 {
        for st in 0..s {
            let stay = q[(st, st)];
            if stay <= 0.0 {
                return Err(Error::Numeric(format!("Q({st}, {st}) vanishes with i > 0")));
            }
            let other = (i / 2.0) / stay;
            let base = (st * s + st) * 2;
            let l = last_bit(st) as usize;
            emission[base + l] = 1.0 - other;
            emission[base + (1 - l)] = other;
        }
    }
    HiddenMarkovModel::new(q, emission, source.stationary().to_vec(), 2)
}

/// Output symbols of the deletion channel: `Q = (1 - d) (I - d P)^-1 P`
/// with deterministic emission of the new state's last bit.
pub fn build_deletion_hmm(source: &MarkovSource, d: f64) -> Result<HiddenMarkovModel> {
    check_open_probability("d", d)?;
    let s = source.num_states();
    let p = source.transitions();
    let a = DMatrix::<f64>::identity(s, s) - p * d;
    let solved = a
        .lu()
        .solve(p)
        .ok_or_else(|| Error::Numeric("I - dP is singular".into()))?;
    let mut q = solved * (1.0 - d);
    // The exact matrix is nonnegative; clear round-off and renormalize rows.
    for r in 0..s {
        for c in 0..s {
            if q[(r, c)] < 0.0 {
                q[(r, c)] = 0.0;
            }
        }
        let sum: f64 = q.row(r).iter().sum();
        for c in 0..s {
            q[(r, c)] /= sum;
        }
    }
    HiddenMarkovModel::new(q, deterministic_emission(s, 2), source.stationary().to_vec(), 2)
}

/// Receiver's sequence: the source passed through an erasure channel.
pub fn build_erasure_hmm(source: &MarkovSource, d: f64) -> Result<HiddenMarkovModel> {
    check_probability("d", d)?;
    let s = source.num_states();
    let mut emission = vec![0.0; s * s * 3];
    for from in 0..s {
        for to in 0..s {
            let base = (from * s + to) * 3;
            emission[base + last_bit(to) as usize] = 1.0 - d;
            emission[base + ERASURE as usize] = d;
        }
    }
    HiddenMarkovModel::new(source.transitions().clone(), emission, source.stationary().to_vec(), 3)
}

/// Draws `k` symbols from `model`.
pub fn hmm_sample(model: &HiddenMarkovModel, k: usize, seed: u64) -> Vec<u8> {
    model.sample(k, seed)
}

/// `-log2 P(z)` under `model`.
pub fn forward_nll(model: &HiddenMarkovModel, observed: &[u8]) -> Result<f64> {
    model.forward_nll(observed)
}

/// Monte-Carlo estimate of the entropy rate: each run samples `k` symbols
/// and scores them with the forward recursion.
pub fn mc_entropy_rate(model: &HiddenMarkovModel, k: usize, runs: usize, seed: u64) -> Result<EstimateReport> {
    if k == 0 {
        return Err(Error::Parameter("sequence length must be at least 1".into()));
    }
    let (values, seeds) = run_parallel(runs, seed, |run_seed| {
        let z = model.sample(k, run_seed);
        Ok(model.forward_nll(&z)? / k as f64)
    })?;
    EstimateReport::from_runs(&values, k, seeds)
}

/// Entropy rate of the eavesdropper's output per input symbol:
/// `(1 - d + d i) / (1 - i)` times the per-output-symbol rate. Only pure
/// insertion or pure deletion is supported.
pub fn scaled_z_entropy_rate(
    source: &MarkovSource,
    params: ChannelParams,
    k: usize,
    runs: usize,
    seed: u64,
) -> Result<EstimateReport> {
    let ChannelParams { insertion: i, deletion: d } = params;
    if i > 0.0 && d > 0.0 {
        return Err(Error::UnsupportedCombination);
    }
    if d > 0.0 {
        let model = build_deletion_hmm(source, d)?;
        Ok(mc_entropy_rate(&model, k, runs, seed)?.scaled(1.0 - d))
    } else {
        let model = build_insertion_hmm(source, i)?;
        Ok(mc_entropy_rate(&model, k, runs, seed)?.scaled(1.0 / (1.0 - i)))
    }
}
