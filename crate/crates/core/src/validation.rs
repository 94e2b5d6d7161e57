//! Independent checks on the sampler and the analytic law.
//!
//! The Euler crossing oracle simulates Brownian paths on a time grid and
//! records the first grid time outside the boundary. It only sees the path
//! at grid points, so it misses excursions between them and its CDF sits
//! below the true one; the gap shrinks like `√dt`.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::distribution::{conditional_cdf, ln_unnormalized_density, prob_finite, ToleranceSpec};
use crate::error::{Error, Result};
use crate::rng::RandomSource;
use crate::sampler::{EnvelopeConfig, FptOutcome};
use crate::series::{Boundary, PartialSumSeries};

/// Paths per independently seeded oracle stream.
pub const ORACLE_CHUNK: usize = 1024;

/// KS critical value at the 99% level, `1.63 / √n`.
pub fn ks_threshold_99(n: usize) -> f64 {
    1.63 / (n as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig {
    pub dt: f64,
    pub horizon: f64,
    pub n_paths: usize,
}

impl OracleConfig {
    pub fn new(dt: f64, horizon: f64, n_paths: usize) -> Result<Self> {
        if !(dt > 0.0 && horizon.is_finite() && dt <= horizon) {
            return Err(Error::InvalidArgument(format!(
                "oracle needs 0 < dt <= horizon < inf, got dt = {dt}, horizon = {horizon}"
            )));
        }
        if n_paths == 0 {
            return Err(Error::InvalidArgument(
                "oracle needs at least one path".into(),
            ));
        }
        Ok(OracleConfig {
            dt,
            horizon,
            n_paths,
        })
    }
}

/// Crossing times seen by the oracle, plus paths censored at the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalFpt {
    /// Sorted ascending.
    pub crossing_times: Vec<f64>,
    pub censored: usize,
    pub n_paths: usize,
}

impl EmpiricalFpt {
    /// Fraction of all paths that crossed at or before `t`.
    pub fn ecdf(&self, t: f64) -> f64 {
        let hits = self.crossing_times.partition_point(|&x| x <= t);
        hits as f64 / self.n_paths as f64
    }

    pub fn censored_fraction(&self) -> f64 {
        self.censored as f64 / self.n_paths as f64
    }
}

/// Simulates `cfg.n_paths` Brownian paths with increments `√dt·Z` and
/// records the first grid time with `|W(t)| ≥ a + bt`.
///
/// Takes raw coefficients so that `a = 0` (hit at time zero) can be
/// exercised. One `u64` is drawn from `rng` as the master seed; chunk `j`
/// of [`ORACLE_CHUNK`] paths then uses stream `(master, j)`.
pub fn euler_fpt_oracle(
    a: f64,
    b: f64,
    cfg: &OracleConfig,
    rng: &mut RandomSource,
) -> Result<EmpiricalFpt> {
    if !(a >= 0.0 && b >= 0.0 && a.is_finite() && b.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "oracle needs finite a, b >= 0, got a = {a}, b = {b}"
        )));
    }
    let master = rng.next_u64();
    let steps = (cfg.horizon / cfg.dt * (1.0 + 1e-12)).floor() as u64;
    let sd = cfg.dt.sqrt();
    let chunks = cfg.n_paths.div_ceil(ORACLE_CHUNK);
    let parts: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|j| {
            let len = ORACLE_CHUNK.min(cfg.n_paths - j * ORACLE_CHUNK);
            let mut rng = RandomSource::for_stream(master, j as u64);
            let mut hits = Vec::with_capacity(len);
            for _ in 0..len {
                if a <= 0.0 {
                    hits.push(0.0);
                    continue;
                }
                let mut w = 0.0f64;
                for step in 1..=steps {
                    w += sd * rng.standard_normal();
                    let t = step as f64 * cfg.dt;
                    if w.abs() >= a + b * t {
                        hits.push(t);
                        break;
                    }
                }
            }
            hits
        })
        .collect();
    let mut crossing_times: Vec<f64> = parts.into_iter().flatten().collect();
    crossing_times.sort_by(f64::total_cmp);
    Ok(EmpiricalFpt {
        censored: cfg.n_paths - crossing_times.len(),
        crossing_times,
        n_paths: cfg.n_paths,
    })
}

/// One-sample Kolmogorov-Smirnov statistic of sorted `samples` against
/// `cdf_fn`: `max_i max(|i/n - F(x_i)|, |(i-1)/n - F(x_i)|)`.
pub fn ks_statistic<F>(samples: &[f64], cdf_fn: F) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    debug_assert!(
        samples.windows(2).all(|w| w[0] <= w[1]),
        "samples must be sorted"
    );
    let n = samples.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in samples.iter().enumerate() {
        let f = cdf_fn(x);
        let hi = (i + 1) as f64 / n;
        let lo = i as f64 / n;
        d = d.max((hi - f).abs()).max((lo - f).abs());
    }
    Ok(d)
}

/// Goodness-of-fit summary for a batch of sampler outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct GofReport {
    pub ks_statistic: f64,
    pub ks_threshold_99: f64,
    /// Number of draws (finite and infinite).
    pub n: usize,
    pub n_finite: usize,
    pub finite_fraction: f64,
    pub expected_c: f64,
    /// Half-width of the 3σ binomial band on the finite fraction.
    pub finite_band: f64,
    /// Number of failed checks among {KS band, binomial band}.
    pub band_violations: usize,
}

impl GofReport {
    pub fn passed(&self) -> bool {
        self.band_violations == 0
    }
}

/// Tests the finite/infinite split against `C` (3σ binomial band) and the
/// finite draws against the conditional CDF (99% KS band).
pub fn goodness_of_fit(boundary: &Boundary, outcomes: &[FptOutcome]) -> Result<GofReport> {
    if outcomes.is_empty() {
        return Err(Error::EmptySample);
    }
    let tol = ToleranceSpec::default();
    let mut finite: Vec<f64> = outcomes.iter().filter_map(FptOutcome::time).collect();
    finite.sort_by(f64::total_cmp);
    let n = outcomes.len();
    let c = prob_finite(boundary, tol);
    let finite_fraction = finite.len() as f64 / n as f64;
    let finite_band = 3.0 * (c * (1.0 - c) / n as f64).sqrt();
    let mut violations = 0;
    if (finite_fraction - c).abs() > finite_band {
        violations += 1;
    }
    let (ks, thr) = if finite.is_empty() {
        violations += 1;
        (1.0, f64::INFINITY)
    } else {
        let ks = ks_statistic(&finite, |t| {
            conditional_cdf(boundary, t, tol).unwrap_or(f64::NAN)
        })?;
        (ks, ks_threshold_99(finite.len()))
    };
    if ks.partial_cmp(&thr) != Some(std::cmp::Ordering::Less) {
        violations += 1;
    }
    Ok(GofReport {
        ks_statistic: ks,
        ks_threshold_99: thr,
        n,
        n_finite: finite.len(),
        finite_fraction,
        expected_c: c,
        finite_band,
        band_violations: violations,
    })
}

/// Checks that `Q(t)/t^n` vanishes as `t → 0` on `t = 2^-5, ..., 2^-20`:
/// after its first decrease the sequence keeps decreasing, and the last
/// value is below `1e-10` times the first.
pub fn verify_left_tail(boundary: &Boundary, n_exponent: u32) -> bool {
    let n = n_exponent as f64;
    let mut vals = Vec::with_capacity(16);
    for j in 5..=20 {
        let t = (-(j as f64)).exp2();
        match ln_unnormalized_density(boundary, t) {
            Ok(lq) => vals.push(lq - n * t.ln()),
            Err(_) => return false,
        }
    }
    if vals.iter().any(|v| v.is_nan()) {
        return false;
    }
    let first_drop = match vals.windows(2).position(|w| w[1] < w[0]) {
        Some(i) => i,
        None => return false,
    };
    let decreasing = vals[first_drop..].windows(2).all(|w| w[1] < w[0]);
    decreasing && vals[vals.len() - 1] < vals[0] + 1e-10f64.ln()
}

/// `ln R(t)` with `R(t) = Q(t)·√t·e^{b²t/2}`.
pub fn ln_right_tail_ratio(boundary: &Boundary, t: f64) -> Result<f64> {
    let b = boundary.b();
    Ok(ln_unnormalized_density(boundary, t)? + 0.5 * t.ln() + 0.5 * b * b * t)
}

/// Right-tail constant for `t ≥ 10`:
/// `(2/√(2π))·b·Σ_{k≥1} e^{-2ab(k²-k)}·(1 + (a + 2ak)/(10b))`.
pub fn right_tail_constant(boundary: &Boundary) -> f64 {
    let (a, b) = (boundary.a(), boundary.b());
    let mut sum = 0.0;
    let mut k = 1.0f64;
    loop {
        let term = (-2.0 * a * b * (k * k - k)).exp() * (1.0 + (a + 2.0 * a * k) / (b * 10.0));
        sum += term;
        if term < 1e-18 * sum {
            break;
        }
        k += 1.0;
    }
    2.0 / (2.0 * PI).sqrt() * b * sum
}

/// Checks `R(t) = Q(t)·√t·e^{b²t/2}` on `t = 10·2^j`, `j = 0..=10`: every
/// value stays below [`right_tail_constant`], and no doubling of `t`
/// grows `R` by more than 1%.
pub fn verify_right_tail(boundary: &Boundary) -> bool {
    let ln_bound = right_tail_constant(boundary).ln();
    let mut vals = Vec::with_capacity(11);
    for j in 0..=10 {
        let t = 10.0 * (j as f64).exp2();
        match ln_right_tail_ratio(boundary, t) {
            Ok(v) if !v.is_nan() => vals.push(v),
            _ => return false,
        }
    }
    let bounded = vals.iter().all(|&v| v <= ln_bound);
    let no_growth = vals.windows(2).all(|w| w[1] <= w[0] + 1.01f64.ln());
    bounded && no_growth
}

/// Counts points of a log grid on `[lo, hi]` where the upper bracket of
/// `Q(t)` (consecutive partial sums 30 terms past the tail index) exceeds
/// `M'·g(t)`.
pub fn verify_envelope_on(
    env: &EnvelopeConfig,
    lo: f64,
    hi: f64,
    grid_size: usize,
) -> Result<usize> {
    if !(lo > 0.0 && hi >= lo) || grid_size < 2 {
        return Err(Error::InvalidArgument(format!(
            "envelope scan needs 0 < lo <= hi and two or more points, got [{lo}, {hi}] x {grid_size}"
        )));
    }
    let span = (hi / lo).ln();
    let mut violations = 0;
    for i in 0..grid_size {
        let t = lo * (span * i as f64 / (grid_size - 1) as f64).exp();
        let series = PartialSumSeries::density(env.boundary, t)?;
        let k = series.tail_index() + 30;
        let s_k = series.scaled_partial(k);
        let s_next = s_k + series.term(k + 1).value();
        let upper = s_k.max(s_next);
        if upper > 0.0 && upper.ln() - series.log_scale() > env.ln_envelope(t) {
            violations += 1;
        }
    }
    Ok(violations)
}

/// [`verify_envelope_on`] over `[t_lo/10, 10·t_hi]`, which covers the
/// calibration grid and part of the analytic tail region beyond it.
pub fn verify_envelope(env: &EnvelopeConfig, grid_size: usize) -> Result<usize> {
    verify_envelope_on(env, env.t_lo / 10.0, env.t_hi * 10.0, grid_size)
}

/// Inverts `conditional_cdf` by bisection, for null-distribution checks.
pub fn conditional_quantile(boundary: &Boundary, p: f64) -> Result<f64> {
    let tol = ToleranceSpec::default();
    let mut hi = boundary.a() * boundary.a();
    while conditional_cdf(boundary, hi, tol)? < p {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if conditional_cdf(boundary, mid, tol)? < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::calibrate_envelope;

    fn bd(a: f64, b: f64) -> Boundary {
        Boundary::new(a, b).unwrap()
    }

    #[test]
    fn ks_trivial_cases() {
        assert_eq!(ks_statistic(&[1.0], |_| 0.5).unwrap(), 0.5);
        assert_eq!(ks_statistic(&[0.0, 0.0, 0.0], |_| 0.0).unwrap(), 1.0);
        assert_eq!(ks_statistic(&[], |_| 0.0), Err(Error::EmptySample));
    }

    #[test]
    fn ks_uniform_grid() {
        // midpoints of n cells: statistic is exactly 1/(2n)
        let n = 100;
        let xs: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let d = ks_statistic(&xs, |x| x).unwrap();
        assert!((d - 0.005).abs() < 1e-15);
    }

    #[test]
    fn oracle_config_validation() {
        assert!(OracleConfig::new(0.0, 1.0, 1).is_err());
        assert!(OracleConfig::new(2.0, 1.0, 1).is_err());
        assert!(OracleConfig::new(0.1, 1.0, 0).is_err());
    }

    #[test]
    fn oracle_zero_intercept_hits_at_start() {
        let cfg = OracleConfig::new(1e-3, 1.0, 500).unwrap();
        let mut rng = RandomSource::new(5);
        let e = euler_fpt_oracle(0.0, 2.0, &cfg, &mut rng).unwrap();
        assert_eq!(e.censored, 0);
        assert!(e.crossing_times.iter().all(|&t| t == 0.0));
    }

    #[test]
    fn oracle_is_deterministic() {
        let cfg = OracleConfig::new(1e-3, 2.0, 3000).unwrap();
        let x = euler_fpt_oracle(1.0, 1.0, &cfg, &mut RandomSource::new(8)).unwrap();
        let y = euler_fpt_oracle(1.0, 1.0, &cfg, &mut RandomSource::new(8)).unwrap();
        assert_eq!(x, y);
        assert_eq!(x.crossing_times.len() + x.censored, 3000);
    }

    #[test]
    fn left_tail_examples() {
        assert!(verify_left_tail(&bd(1.0, 1.0), 3));
        assert!(verify_left_tail(&bd(0.2, 0.2), 10));
        let b = bd(1.0, 1.0);
        let r = ln_unnormalized_density(&b, (-20f64).exp2()).unwrap()
            - ln_unnormalized_density(&b, (-10f64).exp2()).unwrap();
        assert!(r < 1e-30f64.ln());
    }

    #[test]
    fn right_tail_examples() {
        assert!(verify_right_tail(&bd(1.0, 1.0)));
        assert!(verify_right_tail(&bd(0.1, 2.0)));
    }

    #[test]
    fn envelope_scan_and_negative_control() {
        let b = bd(1.0, 1.0);
        let env = calibrate_envelope(&b, 0.5).unwrap();
        assert_eq!(verify_envelope(&env, 10_000).unwrap(), 0);
        let bad = EnvelopeConfig {
            log_m_prime: env.log_m_prime - 10f64.ln(),
            ..env
        };
        assert!(verify_envelope(&bad, 10_000).unwrap() > 0);
        // neighbourhood of t = a/b, where the leading term changes sign
        assert_eq!(verify_envelope_on(&env, 0.9, 1.1, 1000).unwrap(), 0);
    }

    #[test]
    fn quantile_inverts_cdf() {
        let b = bd(1.0, 1.0);
        let q = conditional_quantile(&b, 0.5).unwrap();
        let v = conditional_cdf(&b, q, ToleranceSpec::default()).unwrap();
        assert!((v - 0.5).abs() < 1e-12);
        // a single draw at the median is exactly half a step off
        assert!(
            (ks_statistic(&[q], |t| conditional_cdf(&b, t, ToleranceSpec::default())
                .unwrap())
            .unwrap()
                - 0.5)
                .abs()
                < 1e-12
        );
    }
}
