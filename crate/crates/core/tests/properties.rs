//! Invariants checked over randomly drawn sources, channels and sequences.

use nalgebra::DMatrix;
use proptest::prelude::*;
use syncsec::bound::{secrecy_bound_deletion, secrecy_bound_insertion, McBudget};
use syncsec::channel::{expected_length, ScriptedRandomness};
use syncsec::oracle;
use syncsec::{
    build_deletion_hmm, build_erasure_hmm, build_insertion_hmm, cond_nll_deletion_exact, cond_nll_insertion,
    epsilon_delete, mc_entropy_rate, resynchronize, transmit, AlignmentTrellis, ChannelParams, HiddenMarkovModel,
    MarkovSource,
};

fn source_strategy() -> impl Strategy<Value = MarkovSource> {
    (1usize..=2).prop_flat_map(|order| {
        prop::collection::vec(0.02f64..0.98, 1 << order)
            .prop_map(move |probs| MarkovSource::from_conditionals(order, &probs).unwrap())
    })
}

fn bits(max_len: usize) -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(0u8..2, 1..=max_len)
}

fn assert_stationary(pi: &[f64], q: &DMatrix<f64>) {
    for t in 0..pi.len() {
        let next: f64 = (0..pi.len()).map(|s| pi[s] * q[(s, t)]).sum();
        assert!((next - pi[t]).abs() <= 1e-10, "state {t}: {next} vs {}", pi[t]);
    }
}

/// The same model with states relabelled by `perm` (new index of old state).
fn relabel(model: &HiddenMarkovModel, perm: &[usize]) -> HiddenMarkovModel {
    let s = model.num_states();
    let a = model.alphabet();
    let mut q = DMatrix::zeros(s, s);
    let mut emission = vec![0.0; s * s * a];
    let mut initial = vec![0.0; s];
    for from in 0..s {
        initial[perm[from]] = model.initial()[from];
        for to in 0..s {
            q[(perm[from], perm[to])] = model.transitions()[(from, to)];
            for sym in 0..a {
                emission[(perm[from] * s + perm[to]) * a + sym] = model.emission(from, to, sym as u8);
            }
        }
    }
    HiddenMarkovModel::new(q, emission, initial, a).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn output_chains_keep_the_source_law(source in source_strategy(), i in 0.0f64..0.95, d in 0.0f64..0.95) {
        let pi = source.stationary();
        assert_stationary(pi, build_insertion_hmm(&source, i).unwrap().transitions());
        assert_stationary(pi, build_deletion_hmm(&source, d).unwrap().transitions());
        let total: f64 = pi.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn source_rows_follow_the_shift_register(source in source_strategy()) {
        let p = source.transitions();
        for s in 0..source.num_states() {
            let row: f64 = (0..source.num_states()).map(|t| p[(s, t)]).sum();
            prop_assert!((row - 1.0).abs() < 1e-12);
            for t in 0..source.num_states() {
                let allowed = t == source.next_state(s, 0) || t == source.next_state(s, 1);
                prop_assert!(allowed || p[(s, t)] == 0.0);
            }
        }
    }

    #[test]
    fn forward_matches_path_enumeration(
        p01 in 0.05f64..0.95, p10 in 0.05f64..0.95, prob in 0.05f64..0.9, which in 0usize..3, seed in any::<u64>(),
        k in 1usize..=12,
    ) {
        let source = MarkovSource::first_order(p01, p10).unwrap();
        let model = match which {
            0 => build_insertion_hmm(&source, prob).unwrap(),
            1 => build_deletion_hmm(&source, prob).unwrap(),
            _ => build_erasure_hmm(&source, prob).unwrap(),
        };
        let z = model.sample(k, seed);
        let brute = oracle::hmm_path_sum(&model, &z);
        let nll = model.forward_nll(&z).unwrap();
        prop_assert!((nll + brute.log2()).abs() <= 1e-9, "{} vs {}", nll, -brute.log2());
    }

    #[test]
    fn forward_ignores_state_order(source in source_strategy(), prob in 0.05f64..0.9, seed in any::<u64>()) {
        let model = build_deletion_hmm(&source, prob).unwrap();
        let s = model.num_states();
        let perm: Vec<usize> = (0..s).map(|k| (k * 3 + 1) % s).collect();
        let shuffled = relabel(&model, &perm);
        let z = model.sample(200, seed);
        let a = model.forward_nll(&z).unwrap();
        let b = shuffled.forward_nll(&z).unwrap();
        prop_assert!((a - b).abs() <= 1e-9, "{} vs {}", a, b);
    }

    #[test]
    fn forward_normalizers_are_probabilities(source in source_strategy(), prob in 0.0f64..0.9, seed in any::<u64>()) {
        let model = build_insertion_hmm(&source, prob).unwrap();
        let z = model.sample(300, seed);
        let mut seen = 0;
        model.forward_with(&z, |c| {
            assert!(c > 0.0 && c <= 1.0 + 1e-12, "normalizer {c}");
            seen += 1;
        }).unwrap();
        prop_assert_eq!(seen, z.len());
    }

    #[test]
    fn deletion_trellis_matches_patterns(x in bits(10), d in 0.01f64..0.99) {
        let mut mass = 0.0;
        for (z, p) in oracle::deletion_outputs(&x, d) {
            let q = (-cond_nll_deletion_exact(&x, &z, d).unwrap()).exp2();
            prop_assert!((q - p).abs() <= 1e-12, "z={:?}: {} vs {}", z, q, p);
            prop_assert!((p - oracle::deletion_pattern_prob(&x, &z, d)).abs() <= 1e-15);
            mass += q;
        }
        prop_assert!((mass - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn insertion_trellis_matches_compositions(
        x in bits(5), extra in prop::collection::vec(0u8..2, 0..=9), i in 0.01f64..0.99,
    ) {
        let mut z = vec![x[0]];
        z.extend(&extra);
        z.extend(&x[1..]);
        z.truncate(14);
        let p = oracle::insertion_composition_prob(&x, &z, i);
        match cond_nll_insertion(&x, &z, i) {
            Ok(nll) => prop_assert!(((-nll).exp2() - p).abs() <= 1e-12, "{} vs {}", (-nll).exp2(), p),
            Err(_) => prop_assert_eq!(p, 0.0),
        }
    }

    #[test]
    fn insertion_states_grow_with_position(x in bits(8), len in 1usize..30) {
        let z = vec![0u8; len.max(x.len())];
        let states = AlignmentTrellis::insertion(&x, &z, 0.3).unwrap().reachable_states();
        for (m, &count) in states.iter().enumerate() {
            prop_assert_eq!(count, m.min(x.len() - 1) + 1);
        }
    }

    #[test]
    fn erasure_view_keeps_surviving_symbols(
        x in bits(200), i in 0.0f64..0.9, d in 0.0f64..0.9, seed in any::<u64>(),
    ) {
        let x = syncsec::BitSequence::new(x).unwrap();
        let rec = transmit(&x, ChannelParams::new(i, d).unwrap(), seed).unwrap();
        let kept: Vec<u8> = x.as_slice().iter().zip(rec.delete_flags()).filter(|(_, &del)| !del).map(|(&b, _)| b).collect();
        let seen = epsilon_delete(&resynchronize(&rec).unwrap());
        prop_assert_eq!(seen.as_slice(), &kept[..]);
    }

    #[test]
    fn stripping_insertions_recovers_the_input(x in bits(200), i in 0.0f64..0.9, seed in any::<u64>()) {
        let x = syncsec::BitSequence::new(x).unwrap();
        let rec = transmit(&x, ChannelParams::insertion_only(i).unwrap(), seed).unwrap();
        let recovered: Vec<u8> = rec
            .segments()
            .iter()
            .zip(rec.insert_counts())
            .flat_map(|(s, &n)| s[..s.len() - n].to_vec())
            .collect();
        prop_assert_eq!(&recovered[..], x.as_slice());
    }
}

#[test]
fn block_entropy_differences_reach_the_closed_form() {
    for source in [
        MarkovSource::first_order(0.1, 0.3).unwrap(),
        MarkovSource::first_order(0.45, 0.8).unwrap(),
        MarkovSource::from_conditionals(2, &[0.1, 0.7, 0.45, 0.9]).unwrap(),
        MarkovSource::from_conditionals(3, &[0.2, 0.6, 0.35, 0.9, 0.5, 0.15, 0.7, 0.4]).unwrap(),
    ] {
        let rate = source.entropy_rate();
        let mut prev = oracle::exact_source_block_entropy(&source, source.order() + 1);
        for k in source.order() + 2..=12 {
            let h = oracle::exact_source_block_entropy(&source, k);
            assert!((h - prev - rate).abs() <= 1e-9, "k={k}: {} vs {rate}", h - prev);
            // Per-symbol block entropy stays within O(1/k) of the rate.
            assert!((h / k as f64 - rate).abs() <= source.order() as f64 / k as f64 + 1e-12);
            prev = h;
        }
    }
}

#[test]
fn sampled_transitions_track_the_matrix() {
    let source = MarkovSource::from_conditionals(2, &[0.15, 0.6, 0.4, 0.85]).unwrap();
    let path = source.sample_path(100_000, 21);
    let s = source.num_states();
    let mut counts = vec![vec![0usize; s]; s];
    let mut state = 0;
    for (k, &b) in path.as_slice().iter().enumerate() {
        let next = source.next_state(state, b);
        if k >= source.order() {
            counts[state][next] += 1;
        }
        state = next;
    }
    for (from, row) in counts.iter().enumerate() {
        let visits: usize = row.iter().sum();
        for (to, &c) in row.iter().enumerate() {
            let p = source.transition(from, to);
            let sd = (visits as f64 * p * (1.0 - p)).sqrt();
            assert!((c as f64 - visits as f64 * p).abs() <= 3.0 * sd + 1e-9, "{from}->{to}: {c} of {visits}, p={p}");
        }
    }
}

#[test]
fn insertion_counts_follow_the_geometric_law() {
    let i = 0.4;
    let x = MarkovSource::first_order(0.5, 0.5).unwrap().sample_path(100_000, 5);
    let rec = transmit(&x, ChannelParams::insertion_only(i).unwrap(), 6).unwrap();
    let bins = 12;
    let mut observed = vec![0usize; bins + 1];
    for &n in rec.insert_counts() {
        observed[n.min(bins)] += 1;
    }
    let total = x.len() as f64;
    let chi2: f64 = (0..=bins)
        .map(|m| {
            let p = if m < bins { (1.0 - i) * i.powi(m as i32) } else { i.powi(bins as i32) };
            let e = total * p;
            (observed[m] as f64 - e).powi(2) / e
        })
        .sum();
    let df = bins as f64;
    assert!(chi2 <= df + 3.0 * (2.0 * df).sqrt(), "chi-square {chi2} with {df} degrees of freedom");
}

#[test]
fn stderr_halves_when_runs_quadruple() {
    let model = build_deletion_hmm(&MarkovSource::first_order(0.2, 0.3).unwrap(), 0.4).unwrap();
    let small = mc_entropy_rate(&model, 500, 100, 1).unwrap();
    let large = mc_entropy_rate(&model, 500, 400, 2).unwrap();
    let ratio = small.stderr / large.stderr;
    assert!((1.5..=2.6).contains(&ratio), "stderr ratio {ratio}");
}

#[test]
fn scripted_randomness_is_replayed() {
    let x: syncsec::BitSequence = "0110".parse().unwrap();
    let mut script = ScriptedRandomness::new(vec![2, 0, 0, 1], vec![1, 1, 0], vec![false, false, true, false]);
    let rec = syncsec::channel::transmit_with(&x, ChannelParams::new(0.4, 0.25).unwrap(), &mut script).unwrap();
    assert_eq!(rec.flat_output().to_string(), "011100");
    assert_eq!(rec.resynced().to_string(), "01e0");
    assert_eq!(expected_length(0.5, 0.0, 1000).unwrap(), 2000.0);
}

#[test]
fn bounds_respect_their_component_ceilings() {
    let budget = McBudget { n: 2000, k: 2000, runs: 8, genie_block: None };
    for (k, (p01, p10)) in [(0.1, 0.3), (0.5, 0.5), (0.8, 0.6)].into_iter().enumerate() {
        let source = MarkovSource::first_order(p01, p10).unwrap();
        for param in [0.2, 0.6] {
            let ins = secrecy_bound_insertion(&source, param, budget, k as u64).unwrap();
            assert!(ins.bound <= ins.hx + 3.0 * ins.stderr, "{ins:?}");
            assert!(ins.hzx.mean <= ins.hz_scaled.mean + 3.0 * ins.stderr);
            let del = secrecy_bound_deletion(&source, param, budget, k as u64).unwrap();
            let hy = del.hy.as_ref().unwrap();
            assert!(del.bound <= hy.mean - del.hd_penalty.unwrap() + 3.0 * del.stderr, "{del:?}");
            for r in [&ins.hz_scaled, &ins.hzx, hy, &del.hz_scaled, &del.hzx] {
                assert!(r.mean >= -3.0 * r.stderr);
            }
        }
    }
}
