//! Airborne viral transmission modelled as a molecular-communication
//! channel, plus the sequence-side tools for predicting where and how a
//! virus mutates.
//!
//! The crate is organised the way a signal travels:
//!
//! * [`channel`]: concentration fields from instant, continuous, moving and
//!   multiple sources, with optional reflecting walls.
//! * [`mobility`]: trajectories of moving people.
//! * [`epidemic`]: a susceptible–infectious population driven by inhaled dose.
//! * [`detection`]: on-off keying style detection of infection from samples,
//!   with error-probability and mutual-information metrics.
//! * [`localization`]: locating an unknown emitter from a sensor array.
//! * [`seqstat`]: FASTA alignments and per-position Shannon entropy.
//! * [`mutation`]: Kimura two-parameter substitution matrices at base, codon
//!   and amino-acid level, and mutation-direction ranking.
//!
//! Shared pieces live in [`units`], [`genetic`], [`rng`], [`quad`] and [`io`].

pub mod channel;
pub mod detection;
pub mod epidemic;
pub mod error;
pub mod genetic;
pub mod io;
pub mod localization;
pub mod mobility;
pub mod quad;
pub mod mutation;
pub mod rng;
pub mod seqstat;
pub mod units;

pub use error::{Error, Result};

/// Compiles and runs the guide's examples as doc-tests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/channel.md")]
    mod channel {}
    #[doc = include_str!("../../../book/src/mobility.md")]
    mod mobility {}
    #[doc = include_str!("../../../book/src/epidemic.md")]
    mod epidemic {}
    #[doc = include_str!("../../../book/src/detection.md")]
    mod detection {}
    #[doc = include_str!("../../../book/src/localization.md")]
    mod localization {}
    #[doc = include_str!("../../../book/src/entropy.md")]
    mod entropy {}
    #[doc = include_str!("../../../book/src/mutation.md")]
    mod mutation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../book/src/reproduction.md")]
    mod reproduction {}
}
