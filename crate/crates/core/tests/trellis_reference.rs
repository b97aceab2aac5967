//! The banded trellises against a plain log-domain recursion over
//! (observed position, input position) with no band, no rescaling and no
//! flushing. Sizes are far beyond what enumeration reaches.

use syncsec::{cond_nll_deletion_exact, cond_nll_insertion, transmit, ChannelParams, MarkovSource};

const LN2: f64 = std::f64::consts::LN_2;

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `-log2 P(z | x)`: `f[j]` after `z_1..z_m` is the log weight of alignments
/// where `z_m` belongs to the segment opened by `x_j`.
fn insertion_reference(x: &[u8], z: &[u8], i: f64) -> f64 {
    let n = x.len();
    let ni = f64::NEG_INFINITY;
    let mut f = vec![ni; n + 1];
    if z[0] == x[0] {
        f[1] = 0.0;
    }
    let (ins, real) = ((i / 2.0).ln(), (1.0 - i).ln());
    for &sym in &z[1..] {
        let mut g = vec![ni; n + 1];
        for j in 1..=n {
            let stay = f[j] + ins;
            let advance = if j >= 2 && x[j - 1] == sym { f[j - 1] + real } else { ni };
            g[j] = log_add(stay, advance);
        }
        f = g;
    }
    -(f[n] + real) / LN2
}

/// `-log2 P(z | x)`: `f[j]` after `z_1..z_m` is the log weight of
/// embeddings of `z_1..z_m` into `x_1..x_j`, every input up to `j` decided.
fn deletion_reference(x: &[u8], z: &[u8], d: f64) -> f64 {
    let n = x.len();
    let ni = f64::NEG_INFINITY;
    let (del, keep) = (d.ln(), (1.0 - d).ln());
    let mut f: Vec<f64> = (0..=n).map(|j| j as f64 * del).collect();
    for &sym in z {
        let mut g = vec![ni; n + 1];
        for j in 1..=n {
            let skip = g[j - 1] + del;
            let take = if x[j - 1] == sym { f[j - 1] + keep } else { ni };
            g[j] = log_add(skip, take);
        }
        f = g;
    }
    -f[n] / LN2
}

fn relative_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

#[test]
fn insertion_band_matches_full_recursion() {
    let source = MarkovSource::first_order(0.2, 0.4).unwrap();
    for (idx, &(i, n)) in [(0.1, 400), (0.5, 300), (0.9, 120), (0.95, 60)].iter().enumerate() {
        for run in 0..3u64 {
            let x = source.sample_path(n, 100 * idx as u64 + run);
            let rec = transmit(&x, ChannelParams::insertion_only(i).unwrap(), 7 + run).unwrap();
            let z = rec.flat_output();
            let fast = cond_nll_insertion(x.as_slice(), z.as_slice(), i).unwrap();
            let slow = insertion_reference(x.as_slice(), z.as_slice(), i);
            assert!(relative_gap(fast, slow) < 1e-9, "i={i} n={n}: {fast} vs {slow}");
        }
    }
}

#[test]
fn deletion_band_matches_full_recursion() {
    let source = MarkovSource::first_order(0.3, 0.1).unwrap();
    for (idx, &d) in [0.05, 0.3, 0.6, 0.9, 0.99].iter().enumerate() {
        for run in 0..3u64 {
            let x = source.sample_path(1500, 50 * idx as u64 + run);
            let rec = transmit(&x, ChannelParams::deletion_only(d).unwrap(), 11 + run).unwrap();
            let z = rec.flat_output();
            let fast = cond_nll_deletion_exact(x.as_slice(), z.as_slice(), d).unwrap();
            let slow = deletion_reference(x.as_slice(), z.as_slice(), d);
            assert!(relative_gap(fast, slow) < 1e-9, "d={d}: {fast} vs {slow}");
        }
    }
}

#[test]
fn insertion_band_survives_long_inputs() {
    // Long enough that the forward mass spans far more than the double range.
    let x = MarkovSource::first_order(0.5, 0.5).unwrap().sample_path(2000, 3);
    let rec = transmit(&x, ChannelParams::insertion_only(0.9).unwrap(), 4).unwrap();
    let z = rec.flat_output();
    let fast = cond_nll_insertion(x.as_slice(), z.as_slice(), 0.9).unwrap();
    let slow = insertion_reference(x.as_slice(), z.as_slice(), 0.9);
    assert!(relative_gap(fast, slow) < 1e-9, "{fast} vs {slow}");
}
