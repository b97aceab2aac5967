//! Brute-force reference computations. Everything here enumerates patterns
//! or paths directly and shares no code with the trellises and forward
//! recursions it is used to check; costs are exponential, so keep inputs
//! tiny.

use crate::hmm::HiddenMarkovModel;

/// `P(z | x)` for the deletion channel, summed over all `2^n` keep/delete
/// patterns of `x` that leave exactly `z`.
pub fn deletion_pattern_prob(x: &[u8], z: &[u8], d: f64) -> f64 {
    let n = x.len();
    assert!(n < 31, "enumeration over 2^{n} patterns");
    let mut total = 0.0;
    for mask in 0u32..(1 << n) {
        // bit k set means x_k survives
        if mask.count_ones() as usize != z.len() {
            continue;
        }
        let kept = (0..n).filter(|&k| mask >> k & 1 == 1).map(|k| x[k]);
        if kept.eq(z.iter().copied()) {
            let keep = mask.count_ones() as i32;
            total += (1.0 - d).powi(keep) * d.powi(n as i32 - keep);
        }
    }
    total
}

/// Every output reachable from `x` through the deletion channel with its
/// probability.
pub fn deletion_outputs(x: &[u8], d: f64) -> Vec<(Vec<u8>, f64)> {
    let n = x.len();
    let mut out: std::collections::BTreeMap<Vec<u8>, f64> = Default::default();
    for mask in 0u32..(1 << n) {
        let z: Vec<u8> = (0..n).filter(|&k| mask >> k & 1 == 1).map(|k| x[k]).collect();
        let keep = z.len() as i32;
        *out.entry(z).or_default() += (1.0 - d).powi(keep) * d.powi(n as i32 - keep);
    }
    out.into_iter().collect()
}

/// Calls `f` with every composition `(N_1, .., N_n)` of `total` into `n`
/// nonnegative parts.
fn for_each_composition(n: usize, total: usize, f: &mut impl FnMut(&[usize])) {
    fn rec(parts: &mut Vec<usize>, left: usize, n: usize, f: &mut impl FnMut(&[usize])) {
        if parts.len() + 1 == n {
            parts.push(left);
            f(parts);
            parts.pop();
            return;
        }
        for k in 0..=left {
            parts.push(k);
            rec(parts, left - k, n, f);
            parts.pop();
        }
    }
    if n > 0 {
        rec(&mut Vec::with_capacity(n), total, n, f);
    }
}

/// `P(z | x)` for the insertion channel, summed over every insertion-count
/// composition `(N_1, .., N_n)` with `sum N_k = L(z) - n`. Each composition
/// fixes which output positions carry input symbols; the inserted bits are
/// uniform.
pub fn insertion_composition_prob(x: &[u8], z: &[u8], i: f64) -> f64 {
    let n = x.len();
    if z.len() < n {
        return 0.0;
    }
    let total = z.len() - n;
    let per_pattern = (1.0 - i).powi(n as i32) * (i / 2.0).powi(total as i32);
    let mut count = 0usize;
    for_each_composition(n, total, &mut |counts| {
        let mut pos = 0;
        let ok = counts.iter().zip(x).all(|(&c, &bit)| {
            let hit = z[pos] == bit;
            pos += 1 + c;
            hit
        });
        if ok {
            count += 1;
        }
    });
    count as f64 * per_pattern
}

/// `P(z)` under an HMM by explicit enumeration of every state path
/// `s_0, .., s_k`.
pub fn hmm_path_sum(model: &HiddenMarkovModel, z: &[u8]) -> f64 {
    let s = model.num_states();
    let k = z.len();
    let paths = s.pow(k as u32 + 1);
    let q = model.transitions();
    let mut total = 0.0;
    for code in 0..paths {
        let mut rest = code;
        let mut states = Vec::with_capacity(k + 1);
        for _ in 0..=k {
            states.push(rest % s);
            rest /= s;
        }
        let mut p = model.initial()[states[0]];
        for m in 0..k {
            if p == 0.0 {
                break;
            }
            p *= q[(states[m], states[m + 1])] * model.emission(states[m], states[m + 1], z[m]);
        }
        total += p;
    }
    total
}

/// Exact `H(Z^k) / k` in bits by enumerating all `alphabet^k` outputs, each
/// scored with an unnormalized dense sum over `Q` and the emission table.
pub fn exact_block_entropy_rate(model: &HiddenMarkovModel, k: usize) -> f64 {
    let a = model.alphabet();
    let s = model.num_states();
    let q = model.transitions();
    let mut h = 0.0;
    let mut z = vec![0u8; k];
    for code in 0..a.pow(k as u32) {
        let mut rest = code;
        for slot in z.iter_mut() {
            *slot = (rest % a) as u8;
            rest /= a;
        }
        let mut v = model.initial().to_vec();
        for &sym in &z {
            let mut next = vec![0.0; s];
            for (to, slot) in next.iter_mut().enumerate() {
                *slot = (0..s).map(|from| v[from] * q[(from, to)] * model.emission(from, to, sym)).sum();
            }
            v = next;
        }
        let p: f64 = v.iter().sum();
        if p > 0.0 {
            h -= p * p.log2();
        }
    }
    h / k as f64
}

/// Exact `H(X^k)` of a Markov source by enumerating all `2^k` paths.
pub fn exact_source_block_entropy(source: &crate::source::MarkovSource, k: usize) -> f64 {
    let s = source.num_states();
    let mut h = 0.0;
    for code in 0u64..(1 << k) {
        let mut v = source.stationary().to_vec();
        for m in 0..k {
            let bit = (code >> m & 1) as u8;
            let mut next = vec![0.0; s];
            for (from, &mass) in v.iter().enumerate() {
                let to = source.next_state(from, bit);
                next[to] += mass * source.transition(from, to);
            }
            v = next;
        }
        let p: f64 = v.iter().sum();
        if p > 0.0 {
            h -= p * p.log2();
        }
    }
    h
}
