//! Two-phase exact sampler for the passage time.
//!
//! Phase one draws `U ~ Uniform(0, 1)` and decides `U < C` against the
//! normalizer series; if not, the path never hits the boundary. Phase two
//! draws `τ` conditioned on finiteness by acceptance-rejection: propose
//! `V ~ Gamma(α, b²/2)` and accept when `Q(V) > M'·g(V)·U`, the comparison
//! again being decided on the density series in finitely many terms.
//!
//! The envelope constant is stored directly for the unnormalized density
//! `Q = C·f`, so the normalizer never enters the rejection loop.

use std::f64::consts::{LN_2, PI};

use rayon::prelude::*;

use crate::distribution::{
    conditional_survival, ln_gamma_density, ln_unnormalized_density, prob_finite, ToleranceSpec,
};
use crate::error::{Error, Result};
use crate::rng::RandomSource;
use crate::series::{compare_scaled, Boundary, CompareOutcome, Decision, PartialSumSeries};

pub const DEFAULT_ALPHA: f64 = 0.5;
pub const DEFAULT_GRID: usize = 4096;
/// Multiplier applied on top of the calibrated supremum.
pub const ENVELOPE_SAFETY: f64 = 2.0;
/// Conditional mass allowed beyond the calibration grid.
pub const TAIL_MASS: f64 = 1e-10;
/// Draws per independently seeded stream in batch sampling.
pub const BATCH_CHUNK: usize = 4096;

/// Gamma proposal together with a domination constant for `Q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeConfig {
    pub alpha: f64,
    /// Gamma rate, always `b²/2`.
    pub rate: f64,
    /// `ln M'` with `Q(t) ≤ M'·g(t; alpha, rate)`.
    pub log_m_prime: f64,
    pub boundary: Boundary,
    /// Calibration grid span.
    pub t_lo: f64,
    pub t_hi: f64,
}

impl EnvelopeConfig {
    #[inline]
    pub fn ln_proposal_density(&self, t: f64) -> f64 {
        ln_gamma_density(t, self.alpha, self.rate)
    }

    #[inline]
    pub fn ln_envelope(&self, t: f64) -> f64 {
        self.log_m_prime + self.ln_proposal_density(t)
    }

    /// Acceptance probability per proposal, `C / M'`.
    pub fn predicted_acceptance(&self) -> f64 {
        prob_finite(&self.boundary, ToleranceSpec::default()) * (-self.log_m_prime).exp()
    }
}

/// Calibrates the gamma envelope on the default 4096-point grid.
pub fn calibrate_envelope(boundary: &Boundary, alpha: f64) -> Result<EnvelopeConfig> {
    calibrate_envelope_with_grid(boundary, alpha, DEFAULT_GRID)
}

/// Calibrates `M'` as twice the larger of the supremum of `Q/g` over a
/// log-uniform grid on `[t_lo, t_hi]` and an analytic bound for `t ≥ t_hi`.
///
/// `t_hi` is the first doubling past `a²` where the conditional survival
/// drops below [`TAIL_MASS`]. Beyond it
/// `Q(t) ≤ 2/√(2πt³) e^{-(a+bt)²/(2t)} Σ_{k≥1} (a+bt+2ak) e^{-2ab(k²-k)}`,
/// and divided by `g` this is nonincreasing in `t` for `α ≥ 1/2`.
pub fn calibrate_envelope_with_grid(
    boundary: &Boundary,
    alpha: f64,
    grid_points: usize,
) -> Result<EnvelopeConfig> {
    if !(alpha >= 0.5 && alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "gamma shape must be >= 0.5, got {alpha}"
        )));
    }
    if grid_points < DEFAULT_GRID {
        return Err(Error::InvalidArgument(format!(
            "calibration grid needs at least {DEFAULT_GRID} points, got {grid_points}"
        )));
    }
    let (a, b) = (boundary.a(), boundary.b());
    let rate = 0.5 * b * b;

    let tol = ToleranceSpec::new(1e-13)?;
    let mut t_hi = a * a;
    while conditional_survival(boundary, t_hi, tol)? >= TAIL_MASS {
        t_hi *= 2.0;
        if t_hi > 1e15 {
            return Err(Error::CalibrationFailure(format!(
                "no finite horizon holds conditional mass above 1 - {TAIL_MASS}"
            )));
        }
    }
    let t_lo = (a * a / 2000.0).min(t_hi * 1e-3);

    let span = (t_hi / t_lo).ln();
    let mut grid_sup = f64::NEG_INFINITY;
    for i in 0..grid_points {
        let t = t_lo * (span * i as f64 / (grid_points - 1) as f64).exp();
        let r = ln_unnormalized_density(boundary, t)? - ln_gamma_density(t, alpha, rate);
        if r.is_nan() || r == f64::INFINITY {
            return Err(Error::CalibrationFailure(format!(
                "non-finite density ratio at t = {t}"
            )));
        }
        grid_sup = grid_sup.max(r);
    }
    if grid_sup == f64::NEG_INFINITY {
        return Err(Error::CalibrationFailure(
            "density vanished on the whole calibration grid".into(),
        ));
    }

    let tail = ln_tail_bound(a, b, alpha, rate, t_hi);
    let log_m_prime = ENVELOPE_SAFETY.ln() + grid_sup.max(tail);
    if !log_m_prime.is_finite() {
        return Err(Error::CalibrationFailure(format!(
            "envelope constant is not finite (grid {grid_sup}, tail {tail})"
        )));
    }
    Ok(EnvelopeConfig {
        alpha,
        rate,
        log_m_prime,
        boundary: *boundary,
        t_lo,
        t_hi,
    })
}

/// `ln sup_{t ≥ t_hi} Q(t)/g(t)` from the right-tail bound.
fn ln_tail_bound(a: f64, b: f64, alpha: f64, rate: f64, t_hi: f64) -> f64 {
    let ab = a * b;
    let (mut s1, mut s2) = (0.0, 0.0);
    let mut k = 1.0f64;
    loop {
        let w = (-2.0 * ab * (k * k - k)).exp();
        s1 += w;
        s2 += k * w;
        if k * w < 1e-18 * s2 {
            break;
        }
        k += 1.0;
    }
    LN_2 + libm::lgamma(alpha)
        - 0.5 * (2.0 * PI).ln()
        - alpha * rate.ln()
        - ab
        - (alpha + 0.5) * t_hi.ln()
        + ((a + b * t_hi) * s1 + 2.0 * a * s2).ln()
}

/// Result of one draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FptOutcome {
    Finite(f64),
    Infinite,
}

impl FptOutcome {
    pub fn is_finite(&self) -> bool {
        matches!(self, FptOutcome::Finite(_))
    }

    pub fn time(&self) -> Option<f64> {
        match *self {
            FptOutcome::Finite(t) => Some(t),
            FptOutcome::Infinite => None,
        }
    }
}

/// Diagnostics accumulated across draws.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SamplerStats {
    pub proposals: u64,
    pub accepted: u64,
    pub max_terms_used: u64,
    pub unresolved_events: u64,
}

impl SamplerStats {
    pub fn merge(&mut self, other: &SamplerStats) {
        self.proposals += other.proposals;
        self.accepted += other.accepted;
        self.max_terms_used = self.max_terms_used.max(other.max_terms_used);
        self.unresolved_events += other.unresolved_events;
    }

    /// `accepted / proposals`, or NaN before any proposal.
    pub fn acceptance_rate(&self) -> f64 {
        self.accepted as f64 / self.proposals as f64
    }

    fn record_terms(&mut self, d: &Decision) {
        self.max_terms_used = self.max_terms_used.max(d.terms_used as u64);
    }
}

/// What to do when a proposal's comparison exhausts floating-point
/// resolution.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum UnresolvedPolicy {
    #[default]
    Fail,
    /// Treat the proposal as rejected and draw again.
    RejectProposal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplerConfig {
    pub proposal_cap: u64,
    pub unresolved_policy: UnresolvedPolicy,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            proposal_cap: 1_000_000,
            unresolved_policy: UnresolvedPolicy::Fail,
        }
    }
}

/// Decides `C > u` on the normalizer series.
pub fn finiteness_decision(boundary: &Boundary, u: f64) -> Result<Decision> {
    compare_scaled(&PartialSumSeries::normalizer(*boundary), u)
}

/// Returns `true` with probability `C`, the chance the boundary is hit.
pub fn finiteness_trial(
    boundary: &Boundary,
    rng: &mut RandomSource,
    stats: &mut SamplerStats,
) -> Result<bool> {
    let u = rng.uniform();
    match finiteness_decision(boundary, u) {
        Ok(d) => {
            stats.record_terms(&d);
            Ok(d.outcome == CompareOutcome::Greater)
        }
        Err(e) => {
            stats.unresolved_events += 1;
            Err(e)
        }
    }
}

/// Acceptance test for proposal `v` with uniform `u`: `Greater` accepts.
pub fn acceptance_decision(env: &EnvelopeConfig, v: f64, u: f64) -> Result<Decision> {
    let series = PartialSumSeries::density(env.boundary, v)?;
    let ln_s = env.ln_envelope(v) + u.ln();
    compare_scaled(&series, (ln_s + series.log_scale()).exp())
}

/// Draws `τ` conditioned on `τ < ∞` with the default [`SamplerConfig`].
pub fn conditional_sample(
    boundary: &Boundary,
    env: &EnvelopeConfig,
    rng: &mut RandomSource,
    stats: &mut SamplerStats,
) -> Result<f64> {
    conditional_sample_with(boundary, env, &SamplerConfig::default(), rng, stats)
}

pub fn conditional_sample_with(
    boundary: &Boundary,
    env: &EnvelopeConfig,
    config: &SamplerConfig,
    rng: &mut RandomSource,
    stats: &mut SamplerStats,
) -> Result<f64> {
    if env.boundary != *boundary {
        return Err(Error::InvalidArgument(
            "envelope was calibrated for a different boundary".into(),
        ));
    }
    for _ in 0..config.proposal_cap {
        let u = rng.uniform();
        let v = rng.gamma(env.alpha, env.rate);
        stats.proposals += 1;
        // Zero or overflowing proposals have probability zero.
        if !(v > 0.0 && v.is_finite()) {
            continue;
        }
        match acceptance_decision(env, v, u) {
            Ok(d) => {
                stats.record_terms(&d);
                if d.outcome == CompareOutcome::Greater {
                    stats.accepted += 1;
                    return Ok(v);
                }
            }
            Err(e @ Error::UnresolvedComparison { .. }) => {
                stats.unresolved_events += 1;
                if config.unresolved_policy == UnresolvedPolicy::Fail {
                    return Err(e);
                }
            }
            Err(e) => return Err(e),
        }
    }
    Err(Error::ProposalExhaustion {
        cap: config.proposal_cap,
    })
}

fn check_coefficients(a: f64, b: f64) -> Result<()> {
    if a >= 0.0 && b >= 0.0 && a.is_finite() && b.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "boundary coefficients must be finite and >= 0, got a = {a}, b = {b}"
        )))
    }
}

/// Draws one passage time for the boundary `±(a + bt)` with `a, b ≥ 0`.
///
/// `a = 0` gives `Finite(0)`; `b = 0` with `a > 0` is unsupported. When
/// `env` is `None` an envelope is calibrated with the default shape, which
/// is costly; pass a calibrated envelope when drawing repeatedly.
pub fn sample(
    a: f64,
    b: f64,
    env: Option<&EnvelopeConfig>,
    rng: &mut RandomSource,
    stats: &mut SamplerStats,
) -> Result<FptOutcome> {
    check_coefficients(a, b)?;
    if a == 0.0 {
        return Ok(FptOutcome::Finite(0.0));
    }
    if b == 0.0 {
        return Err(Error::UnsupportedBoundary { a });
    }
    let boundary = Boundary::new(a, b)?;
    let owned;
    let env = match env {
        Some(e) => e,
        None => {
            owned = calibrate_envelope(&boundary, DEFAULT_ALPHA)?;
            &owned
        }
    };
    if finiteness_trial(&boundary, rng, stats)? {
        conditional_sample(&boundary, env, rng, stats).map(FptOutcome::Finite)
    } else {
        Ok(FptOutcome::Infinite)
    }
}

#[derive(Debug, Clone, Copy)]
enum Target {
    Origin,
    Line {
        boundary: Boundary,
        env: EnvelopeConfig,
    },
}

/// Reusable sampler holding a calibrated envelope.
#[derive(Debug, Clone)]
pub struct Sampler {
    target: Target,
    config: SamplerConfig,
}

impl Sampler {
    pub fn new(a: f64, b: f64, alpha: f64) -> Result<Self> {
        check_coefficients(a, b)?;
        if !(alpha >= 0.5 && alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "gamma shape must be >= 0.5, got {alpha}"
            )));
        }
        let target = if a == 0.0 {
            Target::Origin
        } else if b == 0.0 {
            return Err(Error::UnsupportedBoundary { a });
        } else {
            let boundary = Boundary::new(a, b)?;
            Target::Line {
                boundary,
                env: calibrate_envelope(&boundary, alpha)?,
            }
        };
        Ok(Sampler {
            target,
            config: SamplerConfig::default(),
        })
    }

    pub fn from_envelope(env: EnvelopeConfig) -> Self {
        Sampler {
            target: Target::Line {
                boundary: env.boundary,
                env,
            },
            config: SamplerConfig::default(),
        }
    }

    pub fn with_config(mut self, config: SamplerConfig) -> Self {
        self.config = config;
        self
    }

    pub fn envelope(&self) -> Option<&EnvelopeConfig> {
        match &self.target {
            Target::Origin => None,
            Target::Line { env, .. } => Some(env),
        }
    }

    pub fn draw(&self, rng: &mut RandomSource, stats: &mut SamplerStats) -> Result<FptOutcome> {
        match &self.target {
            Target::Origin => Ok(FptOutcome::Finite(0.0)),
            Target::Line { boundary, env } => {
                if finiteness_trial(boundary, rng, stats)? {
                    conditional_sample_with(boundary, env, &self.config, rng, stats)
                        .map(FptOutcome::Finite)
                } else {
                    Ok(FptOutcome::Infinite)
                }
            }
        }
    }

    /// Draws `n` outcomes. Chunk `j` of [`BATCH_CHUNK`] draws uses stream
    /// `(seed, j)`, so the output does not depend on the thread count.
    pub fn draw_batch(&self, n: usize, seed: u64) -> Result<(Vec<FptOutcome>, SamplerStats)> {
        let chunks = n.div_ceil(BATCH_CHUNK);
        let parts: Vec<Result<(Vec<FptOutcome>, SamplerStats)>> = (0..chunks)
            .into_par_iter()
            .map(|j| {
                let len = BATCH_CHUNK.min(n - j * BATCH_CHUNK);
                let mut rng = RandomSource::for_stream(seed, j as u64);
                let mut stats = SamplerStats::default();
                let mut out = Vec::with_capacity(len);
                for _ in 0..len {
                    out.push(self.draw(&mut rng, &mut stats)?);
                }
                Ok((out, stats))
            })
            .collect();
        let mut all = Vec::with_capacity(n);
        let mut stats = SamplerStats::default();
        for part in parts {
            let (out, st) = part?;
            all.extend(out);
            stats.merge(&st);
        }
        Ok((all, stats))
    }
}
