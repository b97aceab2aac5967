//! The synchronization-error transmitter, the intended receiver's
//! resynchronization, and the equivalent erasure / epsilon-deletion channels.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};

use crate::error::{check_open_probability, check_probability, Error, Result};
use crate::source::BitSequence;

/// Symbol value used for an erasure inside an [`ErasureSequence`].
pub const ERASURE: u8 = 2;

/// Insertion and deletion probabilities of the transmitter.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ChannelParams {
    pub insertion: f64,
    pub deletion: f64,
}

impl ChannelParams {
    /// Parameters for the generative operations: `i` in `[0, 1)`, `d` in `[0, 1]`.
    pub fn new(insertion: f64, deletion: f64) -> Result<Self> {
        check_open_probability("i", insertion)?;
        check_probability("d", deletion)?;
        Ok(Self {
            insertion,
            deletion,
        })
    }

    pub fn insertion_only(i: f64) -> Result<Self> {
        Self::new(i, 0.0)
    }

    pub fn deletion_only(d: f64) -> Result<Self> {
        Self::new(0.0, d)
    }
}

/// Source of the randomness shared by transmitter and intended receiver.
///
/// Draws happen in transmitter order: for each input symbol the insertion
/// count, then the inserted bits, then the deletion flag.
pub trait SharedRandomness {
    fn insertion_count(&mut self, i: f64) -> usize;
    fn inserted_bit(&mut self) -> u8;
    fn deletion(&mut self, d: f64) -> bool;
}

/// Seeded pseudo-random shared source.
pub struct SeededRandomness {
    rng: ChaCha8Rng,
}

impl SeededRandomness {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl SharedRandomness for SeededRandomness {
    fn insertion_count(&mut self, i: f64) -> usize {
        if i == 0.0 {
            return 0;
        }
        // Failures before the first success with success probability 1 - i.
        Geometric::new(1.0 - i)
            .expect("insertion probability validated")
            .sample(&mut self.rng) as usize
    }

    fn inserted_bit(&mut self) -> u8 {
        u8::from(self.rng.random::<bool>())
    }

    fn deletion(&mut self, d: f64) -> bool {
        self.rng.random::<f64>() < d
    }
}

/// Replays a fixed script of draws, e.g. to reproduce a worked example.
#[derive(Debug, Clone, Default)]
pub struct ScriptedRandomness {
    counts: std::vec::IntoIter<usize>,
    bits: std::vec::IntoIter<u8>,
    deletions: std::vec::IntoIter<bool>,
}

impl ScriptedRandomness {
    pub fn new(counts: Vec<usize>, bits: Vec<u8>, deletions: Vec<bool>) -> Self {
        Self {
            counts: counts.into_iter(),
            bits: bits.into_iter(),
            deletions: deletions.into_iter(),
        }
    }
}

impl SharedRandomness for ScriptedRandomness {
    fn insertion_count(&mut self, _i: f64) -> usize {
        self.counts.next().expect("script ran out of insertion counts")
    }

    fn inserted_bit(&mut self) -> u8 {
        self.bits.next().expect("script ran out of inserted bits")
    }

    fn deletion(&mut self, _d: f64) -> bool {
        self.deletions.next().expect("script ran out of deletion flags")
    }
}

/// A sequence over `{0, 1, e}` as seen by the intended receiver.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ErasureSequence(Vec<u8>);

impl ErasureSequence {
    pub fn new(symbols: Vec<u8>) -> Result<Self> {
        if let Some(pos) = symbols.iter().position(|&s| s > ERASURE) {
            return Err(Error::Validation(format!(
                "symbol {} at position {pos} is outside {{0, 1, e}}",
                symbols[pos]
            )));
        }
        Ok(Self(symbols))
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

    pub fn erasures(&self) -> usize {
        self.0.iter().filter(|&&s| s == ERASURE).count()
    }
}

impl fmt::Display for ErasureSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &s in &self.0 {
            f.write_str(match s {
                0 => "0",
                1 => "1",
                _ => "e",
            })?;
        }
        Ok(())
    }
}

impl FromStr for ErasureSequence {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.trim()
            .chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                'e' => Ok(ERASURE),
                other => Err(Error::Validation(format!("'{other}' is not in {{0, 1, e}}"))),
            })
            .collect::<Result<Vec<u8>>>()
            .map(Self)
    }
}

/// One pass of the transmitter over an input block.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmissionRecord {
    input: BitSequence,
    segments: Vec<Vec<u8>>,
    insert_counts: Vec<usize>,
    delete_flags: Vec<bool>,
    resynced: ErasureSequence,
}

impl TransmissionRecord {
    /// Assembles a record from its parts, checking that the segments agree
    /// with the insertion counts, deletion flags and input.
    pub fn from_parts(
        input: BitSequence,
        segments: Vec<Vec<u8>>,
        insert_counts: Vec<usize>,
        delete_flags: Vec<bool>,
    ) -> Result<Self> {
        let n = input.len();
        if segments.len() != n || insert_counts.len() != n || delete_flags.len() != n {
            return Err(Error::Integrity(format!(
                "input has {n} symbols but record has {} segments, {} counts, {} flags",
                segments.len(),
                insert_counts.len(),
                delete_flags.len()
            )));
        }
        let resynced = resync_parts(&segments, &insert_counts, &delete_flags)?;
        for (k, (&x, &y)) in input.as_slice().iter().zip(resynced.as_slice()).enumerate() {
            if y != ERASURE && y != x {
                return Err(Error::Integrity(format!(
                    "segment {k} starts with {y} but input symbol is {x}"
                )));
            }
        }
        Ok(Self {
            input,
            segments,
            insert_counts,
            delete_flags,
            resynced,
        })
    }

    pub fn input(&self) -> &BitSequence {
        &self.input
    }

    /// Per-input-symbol output segments (an empty segment is the empty word).
    pub fn segments(&self) -> &[Vec<u8>] {
        &self.segments
    }

    pub fn insert_counts(&self) -> &[usize] {
        &self.insert_counts
    }

    pub fn delete_flags(&self) -> &[bool] {
        &self.delete_flags
    }

    /// The receiver's resynchronized sequence.
    pub fn resynced(&self) -> &ErasureSequence {
        &self.resynced
    }

    /// Concatenation of all segments: what an eavesdropper observes.
    pub fn flat_output(&self) -> BitSequence {
        BitSequence::new(self.segments.concat()).expect("segments hold bits")
    }

    /// Total number of transmitted symbols.
    pub fn output_len(&self) -> usize {
        self.segments.iter().map(Vec::len).sum()
    }
}

/// Runs the transmitter over `x` with a seeded shared source.
pub fn transmit(x: &BitSequence, params: ChannelParams, seed: u64) -> Result<TransmissionRecord> {
    transmit_with(x, params, &mut SeededRandomness::new(seed))
}

/// Runs the transmitter over `x` drawing from an arbitrary shared source.
pub fn transmit_with<R: SharedRandomness>(
    x: &BitSequence,
    params: ChannelParams,
    shared: &mut R,
) -> Result<TransmissionRecord> {
    check_open_probability("i", params.insertion)?;
    check_probability("d", params.deletion)?;
    let n = x.len();
    let mut segments = Vec::with_capacity(n);
    let mut insert_counts = Vec::with_capacity(n);
    let mut delete_flags = Vec::with_capacity(n);
    let mut resynced = Vec::with_capacity(n);
    for &bit in x.as_slice() {
        let count = shared.insertion_count(params.insertion);
        let inserted: Vec<u8> = (0..count).map(|_| shared.inserted_bit()).collect();
        let deleted = shared.deletion(params.deletion);
        let mut segment = Vec::with_capacity(count + 1);
        if !deleted {
            segment.push(bit);
        }
        segment.extend_from_slice(&inserted);
        segments.push(segment);
        insert_counts.push(count);
        delete_flags.push(deleted);
        resynced.push(if deleted { ERASURE } else { bit });
    }
    Ok(TransmissionRecord {
        input: x.clone(),
        segments,
        insert_counts,
        delete_flags,
        resynced: ErasureSequence(resynced),
    })
}

fn resync_parts(segments: &[Vec<u8>], counts: &[usize], deleted: &[bool]) -> Result<ErasureSequence> {
    let mut y = Vec::with_capacity(segments.len());
    for (k, ((seg, &count), &del)) in segments.iter().zip(counts).zip(deleted).enumerate() {
        let expected = count + usize::from(!del);
        if seg.len() != expected {
            return Err(Error::Integrity(format!(
                "segment {k} has length {} but {count} insertions and deleted={del} imply {expected}",
                seg.len()
            )));
        }
        if seg.iter().any(|&b| b > 1) {
            return Err(Error::Integrity(format!("segment {k} contains a non-bit")));
        }
        y.push(if del { ERASURE } else { seg[0] });
    }
    Ok(ErasureSequence(y))
}

/// Recovers the receiver's view from the segments, insertion counts and
/// deletion flags alone (the input is never consulted).
pub fn resynchronize(record: &TransmissionRecord) -> Result<ErasureSequence> {
    resync_parts(&record.segments, &record.insert_counts, &record.delete_flags)
}

/// Memoryless erasure channel: each symbol becomes `e` with probability `d`.
pub fn apply_erasure_channel(x: &BitSequence, d: f64, seed: u64) -> Result<ErasureSequence> {
    check_probability("d", d)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(ErasureSequence(
        x.as_slice()
            .iter()
            .map(|&b| if rng.random::<f64>() < d { ERASURE } else { b })
            .collect(),
    ))
}

/// Drops every erasure.
pub fn epsilon_delete(y: &ErasureSequence) -> BitSequence {
    BitSequence::new(y.0.iter().copied().filter(|&s| s != ERASURE).collect())
        .expect("erasure-free symbols are bits")
}

/// Expected number of transmitted symbols for `n` inputs:
/// `n (1 - (1 - i) d) / (1 - i)`.
pub fn expected_length(i: f64, d: f64, n: usize) -> Result<f64> {
    check_open_probability("i", i)?;
    check_probability("d", d)?;
    Ok(n as f64 * (1.0 - (1.0 - i) * d) / (1.0 - i))
}

/// Inputs delivered per transmitted symbol, `(1 - i) / (1 - (1 - i) d)`.
///
/// `i = 1` gives 0 (nothing but insertions). `i = 0, d = 1` transmits
/// nothing at all and yields `+inf`.
pub fn effective_rate(i: f64, d: f64) -> f64 {
    if i >= 1.0 {
        return 0.0;
    }
    (1.0 - i) / (1.0 - (1.0 - i) * d)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bits(s: &str) -> BitSequence {
        s.parse().unwrap()
    }

    fn example_one() -> TransmissionRecord {
        let mut script = ScriptedRandomness::new(
            vec![2, 0, 0, 1],
            vec![1, 1, 0],
            vec![false, false, true, false],
        );
        transmit_with(&bits("0110"), ChannelParams::new(0.4, 0.25).unwrap(), &mut script).unwrap()
    }

    #[test]
    fn example_one_replay() {
        let rec = example_one();
        assert_eq!(rec.flat_output().to_string(), "011100");
        assert_eq!(rec.segments(), &[vec![0, 1, 1], vec![1], vec![], vec![0, 0]]);
        assert_eq!(rec.resynced().to_string(), "01e0");
        assert_eq!(resynchronize(&rec).unwrap().to_string(), "01e0");
    }

    #[test]
    fn identity_channel() {
        let x = bits("0110100111");
        let rec = transmit(&x, ChannelParams::new(0.0, 0.0).unwrap(), 3).unwrap();
        assert_eq!(rec.flat_output(), x);
        assert!(rec.segments().iter().all(|s| s.len() == 1));
        assert_eq!(epsilon_delete(rec.resynced()), x);
    }

    #[test]
    fn everything_deleted() {
        let x = bits("0110100111");
        let rec = transmit(&x, ChannelParams::new(0.0, 1.0).unwrap(), 3).unwrap();
        assert_eq!(rec.output_len(), 0);
        assert!(rec.segments().iter().all(Vec::is_empty));
        assert_eq!(rec.resynced().to_string(), "eeeeeeeeee");
    }

    #[test]
    fn insertion_probability_one_rejected() {
        assert!(ChannelParams::new(1.0, 0.0).is_err());
        let params = ChannelParams {
            insertion: 1.0,
            deletion: 0.0,
        };
        assert!(matches!(
            transmit(&bits("01"), params, 0),
            Err(Error::Range { .. })
        ));
        assert!(expected_length(1.0, 0.0, 10).is_err());
    }

    #[test]
    fn record_invariants_hold() {
        let x = BitSequence::new((0..2000).map(|k| (k % 3 == 0) as u8).collect()).unwrap();
        let rec = transmit(&x, ChannelParams::new(0.35, 0.2).unwrap(), 17).unwrap();
        for k in 0..x.len() {
            let seg = &rec.segments()[k];
            let n = rec.insert_counts()[k];
            let del = rec.delete_flags()[k];
            assert_eq!(seg.len(), n + usize::from(!del));
            let real = &seg[..seg.len() - n];
            if del {
                assert!(real.is_empty());
                assert_eq!(rec.resynced().as_slice()[k], ERASURE);
            } else {
                assert_eq!(real, &[x.as_slice()[k]]);
                assert_eq!(rec.resynced().as_slice()[k], x.as_slice()[k]);
            }
        }
        assert_eq!(rec.flat_output().len(), rec.output_len());
    }

    #[test]
    fn integrity_errors() {
        let err = TransmissionRecord::from_parts(bits("01"), vec![vec![0], vec![]], vec![0, 0], vec![false, false])
            .unwrap_err();
        assert!(matches!(err, Error::Integrity(_)));
        let err = TransmissionRecord::from_parts(bits("01"), vec![vec![1], vec![1]], vec![0, 0], vec![false, false])
            .unwrap_err();
        assert!(matches!(err, Error::Integrity(_)));
        let ok = TransmissionRecord::from_parts(bits("01"), vec![vec![0, 1], vec![]], vec![1, 0], vec![false, true])
            .unwrap();
        assert_eq!(ok.resynced().to_string(), "0e");
    }

    #[test]
    fn erasure_channel_extremes() {
        let x = bits("0110100");
        assert_eq!(apply_erasure_channel(&x, 0.0, 1).unwrap().to_string(), "0110100");
        assert_eq!(apply_erasure_channel(&x, 1.0, 1).unwrap().to_string(), "eeeeeee");
    }

    #[test]
    fn erasure_fraction() {
        let n = 100_000;
        let x = BitSequence::new(vec![1; n]).unwrap();
        let y = apply_erasure_channel(&x, 0.3, 8).unwrap();
        let frac = y.erasures() as f64 / n as f64;
        assert!((frac - 0.3).abs() < 3.0 * (0.3f64 * 0.7 / n as f64).sqrt());
    }

    #[test]
    fn epsilon_deletion() {
        assert_eq!(epsilon_delete(&"01e0".parse().unwrap()).to_string(), "010");
        assert!(epsilon_delete(&"eee".parse().unwrap()).is_empty());
        assert_eq!(epsilon_delete(&"0110".parse().unwrap()).to_string(), "0110");
    }

    #[test]
    fn expected_length_formula() {
        assert_eq!(expected_length(0.0, 0.0, 37).unwrap(), 37.0);
        assert_eq!(expected_length(0.5, 0.0, 1000).unwrap(), 2000.0);
        assert_eq!(expected_length(0.0, 0.25, 1000).unwrap(), 750.0);
    }

    #[test]
    fn effective_rates() {
        assert_eq!(effective_rate(1.0, 0.0), 0.0);
        assert_eq!(effective_rate(0.0, 0.0), 1.0);
        assert_eq!(effective_rate(0.0, 0.5), 2.0);
        assert!((effective_rate(0.3, 0.0) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn round_trip_without_deletions() {
        let x = BitSequence::new((0..500).map(|k| ((k * 7) % 5 < 2) as u8).collect()).unwrap();
        let rec = transmit(&x, ChannelParams::new(0.6, 0.0).unwrap(), 4).unwrap();
        let recovered: Vec<u8> = rec
            .segments()
            .iter()
            .zip(rec.insert_counts())
            .flat_map(|(s, &n)| s[..s.len() - n].to_vec())
            .collect();
        assert_eq!(recovered, x.as_slice());
    }
}
