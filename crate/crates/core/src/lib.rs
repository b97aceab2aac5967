//! Secrecy through deliberately injected synchronization errors.
//!
//! A transmitter sharing a source of randomness with the intended receiver
//! inserts random bits and deletes input symbols. The receiver undoes the
//! insertions and sees deletions as erasures; an eavesdropper without the
//! shared randomness faces an insertion/deletion channel. This crate
//! implements the transmitter and estimates lower bounds on the resulting
//! secrecy capacity for Markov inputs:
//!
//! * [`source`]: binary Markov sources, closed-form entropy rates, sampling.
//! * [`channel`]: transmitter, resynchronization, erasure and
//!   epsilon-deletion channels, expected output length and effective rate.
//! * [`hmm`]: hidden-Markov models of the output processes with
//!   forward-recursion Monte-Carlo entropy-rate estimation.
//! * [`condent`]: alignment trellises for `P(z | x)` and conditional
//!   entropy-rate estimates, including a genie-aided block lower bound.
//! * [`bound`]: bound assembly, first-order source grid search and sweeps.
//! * [`oracle`]: brute-force enumerations used to cross-check the above.

pub mod bound;
pub mod channel;
pub mod cli;
pub mod condent;
pub mod error;
pub mod estimate;
pub mod hmm;
pub mod oracle;
pub mod selftest;
pub mod source;

pub use bound::{
    grid_search_fom, secrecy_bound_deletion, secrecy_bound_insertion, sweep, CondMethod, GridSpec, McBudget,
    SecrecyBoundReport,
};
pub use channel::{
    apply_erasure_channel, effective_rate, epsilon_delete, expected_length, resynchronize, transmit, ChannelParams,
    ErasureSequence, TransmissionRecord,
};
pub use condent::{
    cond_nll_deletion_exact, cond_nll_insertion, genie_block_cond_entropy_lb, mc_cond_entropy_rate, AlignmentTrellis,
    ChannelKind, GenieBlockConfig,
};
pub use error::{Error, Result};
pub use estimate::EstimateReport;
pub use hmm::{
    build_deletion_hmm, build_erasure_hmm, build_insertion_hmm, forward_nll, hmm_sample, mc_entropy_rate,
    scaled_z_entropy_rate, HiddenMarkovModel,
};
pub use source::{binary_entropy, entropy_rate_closed_form, stationary_dist, BitSequence, MarkovSource};
