//! Quick oracle checks run by `syncsec selftest`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channel::{transmit_with, ChannelParams, ScriptedRandomness};
use crate::condent::{cond_nll_deletion_exact, cond_nll_insertion};
use crate::hmm::{build_deletion_hmm, build_erasure_hmm, build_insertion_hmm, HiddenMarkovModel};
use crate::oracle;
use crate::source::{BitSequence, MarkovSource};

type Check = fn() -> Result<(), String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn example_replay() -> Result<(), String> {
    let x: BitSequence = "0110".parse().map_err(|e| format!("{e}"))?;
    let mut script = ScriptedRandomness::new(vec![2, 0, 0, 1], vec![1, 1, 0], vec![false, false, true, false]);
    let params = ChannelParams::new(0.4, 0.25).map_err(|e| e.to_string())?;
    let rec = transmit_with(&x, params, &mut script).map_err(|e| e.to_string())?;
    let z = rec.flat_output().to_string();
    let y = rec.resynced().to_string();
    ensure(z == "011100" && y == "01e0", || format!("got z={z} y={y}"))
}

fn deletion_trellis() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let n = rng.random_range(1..=8);
        let x: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        let d = rng.random_range(0.05..0.95);
        let mut mass = 0.0;
        for (z, p) in oracle::deletion_outputs(&x, d) {
            let nll = cond_nll_deletion_exact(&x, &z, d).map_err(|e| e.to_string())?;
            let q = (-nll).exp2();
            ensure((q - p).abs() <= 1e-12, || format!("x={x:?} z={z:?}: {q} vs {p}"))?;
            mass += q;
        }
        ensure((mass - 1.0).abs() <= 1e-9, || format!("total mass {mass}"))?;
    }
    Ok(())
}

fn insertion_trellis() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..40 {
        let n = rng.random_range(1..=4);
        let len = rng.random_range(n..=10);
        let x: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        let mut z: Vec<u8> = (0..len).map(|_| rng.random_range(0..2)).collect();
        z[0] = x[0];
        let i = rng.random_range(0.05..0.95);
        let p = oracle::insertion_composition_prob(&x, &z, i);
        match cond_nll_insertion(&x, &z, i) {
            Ok(nll) => {
                let q = (-nll).exp2();
                ensure((q - p).abs() <= 1e-12, || format!("x={x:?} z={z:?}: {q} vs {p}"))?;
            }
            Err(_) => ensure(p == 0.0, || format!("trellis rejected x={x:?} z={z:?} with mass {p}"))?,
        }
    }
    Ok(())
}

fn forward_recursion() -> Result<(), String> {
    let source = MarkovSource::first_order(0.2, 0.35).map_err(|e| e.to_string())?;
    let models: Vec<HiddenMarkovModel> = vec![
        build_insertion_hmm(&source, 0.3).map_err(|e| e.to_string())?,
        build_deletion_hmm(&source, 0.4).map_err(|e| e.to_string())?,
        build_erasure_hmm(&source, 0.25).map_err(|e| e.to_string())?,
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for m in &models {
        for _ in 0..10 {
            let z: Vec<u8> = (0..8).map(|_| rng.random_range(0..m.alphabet() as u8)).collect();
            let brute = oracle::hmm_path_sum(m, &z);
            match m.forward_nll(&z) {
                Ok(nll) => ensure((nll + brute.log2()).abs() <= 1e-9, || format!("{nll} vs {}", -brute.log2()))?,
                Err(_) => ensure(brute == 0.0, || "forward rejected a possible sequence".to_string())?,
            }
        }
    }
    Ok(())
}

fn stationarity() -> Result<(), String> {
    let source = MarkovSource::from_conditionals(2, &[0.1, 0.7, 0.45, 0.9]).map_err(|e| e.to_string())?;
    let pi = source.stationary();
    for model in [
        build_insertion_hmm(&source, 0.6).map_err(|e| e.to_string())?,
        build_deletion_hmm(&source, 0.6).map_err(|e| e.to_string())?,
    ] {
        let q = model.transitions();
        for t in 0..pi.len() {
            let next: f64 = (0..pi.len()).map(|s| pi[s] * q[(s, t)]).sum();
            ensure((next - pi[t]).abs() <= 1e-10, || format!("state {t}: {next} vs {}", pi[t]))?;
        }
    }
    Ok(())
}

fn closed_form_rate() -> Result<(), String> {
    let source = MarkovSource::first_order(0.1, 0.3).map_err(|e| e.to_string())?;
    let h = |k| oracle::exact_source_block_entropy(&source, k);
    let diff = h(10) - h(9);
    let rate = source.entropy_rate();
    ensure((diff - rate).abs() <= 1e-9, || format!("{diff} vs {rate}"))
}

const CHECKS: &[(&str, Check)] = &[
    ("transmitter example replay", example_replay),
    ("deletion trellis vs pattern enumeration", deletion_trellis),
    ("insertion trellis vs composition enumeration", insertion_trellis),
    ("forward recursion vs path enumeration", forward_recursion),
    ("stationary law preserved by output chains", stationarity),
    ("closed-form source entropy rate", closed_form_rate),
];

/// Runs every check; returns `(name, outcome)` in a fixed order.
pub fn run_all() -> Vec<(&'static str, Result<(), String>)> {
    CHECKS.iter().map(|(name, check)| (*name, check())).collect()
}
