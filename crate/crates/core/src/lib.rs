//! Exact simulation of the first passage time of standard Brownian motion
//! to the symmetric linear boundary `±(a + b t)`.
//!
//! The law of the passage time `τ` is defective when `b > 0`: with
//! probability `1 - C` the path never touches the boundary. The sampler
//! draws from this law exactly (up to floating-point arithmetic) by
//! deciding inequalities against two oscillating infinite series in
//! finitely many steps, and by acceptance-rejection against a gamma
//! proposal for the conditional law of a finite `τ`.
//!
//! Modules:
//!
//! * [`series`]: the normalizer and density series, tail indices and the
//!   finite-time comparison.
//! * [`distribution`]: CDF, finiteness probability and density evaluation.
//! * [`sampler`]: the two-phase exact sampler.
//! * [`validation`]: Euler crossing oracle, KS statistic and tail checks.
//! * [`cli`]: the `symfpt` command-line front end.

pub mod cli;
pub mod distribution;
mod error;
pub mod rng;
pub mod sampler;
pub mod series;
pub mod validation;

pub use distribution::{
    cdf, conditional_cdf, density, prob_finite, std_normal_integral, EvalBracket, ToleranceSpec,
};
pub use error::{Error, Result};
pub use rng::RandomSource;
pub use sampler::{
    calibrate_envelope, conditional_sample, finiteness_trial, sample, EnvelopeConfig, FptOutcome,
    Sampler, SamplerConfig, SamplerStats, UnresolvedPolicy,
};
pub use series::{
    c_partial, decide_compare, oscillation_ratio, oscillation_ratio_log, q_partial, tail_index_c,
    tail_index_q, Boundary, CompareOutcome, PartialSumSeries, SeriesKind,
};
