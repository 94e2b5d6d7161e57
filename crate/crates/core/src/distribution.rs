//! Evaluation of the passage-time law: finiteness probability, defective
//! CDF, conditional CDF and conditional density.
//!
//! The CDF is a bilateral alternating sum over `k ∈ ℤ` of normal-interval
//! probabilities weighted by `e^{-2k²ab}`. Terms `+k` and `-k` are paired;
//! each paired term is bounded by `2e^{-2k²ab}`, which gives a certified
//! geometric remainder bound used for truncation.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{Error, Result};
use crate::series::{Boundary, CompensatedSum, PartialSumSeries};

/// Absolute error budget for series truncation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToleranceSpec {
    abs_tol: f64,
}

impl ToleranceSpec {
    pub const DEFAULT_ABS_TOL: f64 = 1e-12;

    pub fn new(abs_tol: f64) -> Result<Self> {
        if abs_tol > 0.0 && abs_tol < 1.0 {
            Ok(ToleranceSpec { abs_tol })
        } else {
            Err(Error::InvalidArgument(format!(
                "tolerance must lie in (0, 1), got {abs_tol}"
            )))
        }
    }

    #[inline]
    pub fn abs_tol(&self) -> f64 {
        self.abs_tol
    }

    // Internal tightening; callers never see tolerances outside (0, 1).
    fn scaled(self, factor: f64) -> ToleranceSpec {
        ToleranceSpec {
            abs_tol: (self.abs_tol * factor).clamp(f64::MIN_POSITIVE, self.abs_tol),
        }
    }
}

impl Default for ToleranceSpec {
    fn default() -> Self {
        ToleranceSpec {
            abs_tol: Self::DEFAULT_ABS_TOL,
        }
    }
}

/// Two-sided enclosure of a truncated series value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalBracket {
    pub lower: f64,
    pub upper: f64,
}

impl EvalBracket {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

/// Standard normal upper tail `1 - Φ(x)`.
#[inline]
pub fn normal_upper_tail(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

/// `Φ(hi) - Φ(lo)`, taken as a difference of tail values on the side where
/// both tails are small.
pub fn std_normal_integral(lo: f64, hi: f64) -> Result<f64> {
    if lo.is_nan() || hi.is_nan() || lo > hi {
        return Err(Error::InvalidArgument(format!(
            "normal integral needs lo <= hi, got [{lo}, {hi}]"
        )));
    }
    Ok(normal_mass(lo, hi))
}

#[inline]
fn normal_mass(lo: f64, hi: f64) -> f64 {
    if lo >= 0.0 {
        normal_upper_tail(lo) - normal_upper_tail(hi)
    } else if hi <= 0.0 {
        normal_upper_tail(-hi) - normal_upper_tail(-lo)
    } else {
        1.0 - normal_upper_tail(-lo) - normal_upper_tail(hi)
    }
}

/// Index `K` such that `Σ_{k>K} 2e^{-2k²ab} < tol`, using a geometric bound
/// on the tail of the weights.
fn truncation_index(ab: f64, tol: f64) -> usize {
    let mut k = 0usize;
    loop {
        let next = (k + 1) as f64;
        let ratio = (-2.0 * ab * (2.0 * next + 1.0)).exp();
        let bound = 2.0 * (-2.0 * next * next * ab).exp() / (1.0 - ratio);
        if bound < tol || k > 1_000_000 {
            return k;
        }
        k += 1;
    }
}

/// Bracket on `C = P[τ < ∞]`. The alternating remainder after `K` terms is
/// below the first omitted term, `2e^{-2(K+1)²ab}`.
pub fn prob_finite_bracket(boundary: &Boundary, tol: ToleranceSpec) -> EvalBracket {
    let series = PartialSumSeries::normalizer(*boundary);
    let k = normalizer_cutoff(boundary.ab(), tol);
    let s_k = series.partial(k);
    let s_next = series.partial(k + 1);
    EvalBracket {
        lower: s_k.min(s_next),
        upper: s_k.max(s_next),
    }
}

/// `P[τ < ∞] = 2 Σ_{k≥1} (-1)^{k+1} e^{-2k²ab}`, within `tol`.
pub fn prob_finite(boundary: &Boundary, tol: ToleranceSpec) -> f64 {
    PartialSumSeries::normalizer(*boundary).partial(normalizer_cutoff(boundary.ab(), tol))
}

// First K with 2e^{-2(K+1)²ab} < tol.
fn normalizer_cutoff(ab: f64, tol: ToleranceSpec) -> usize {
    let mut k = 1usize;
    while 2.0 * (-2.0 * ((k + 1) as f64).powi(2) * ab).exp() >= tol.abs_tol {
        k += 1;
    }
    k
}

fn check_nonnegative_time(t: f64) -> Result<()> {
    if t >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "time must be >= 0, got {t}"
        )))
    }
}

/// Bracket on `P[τ ≤ t]`.
pub fn cdf_bracket(boundary: &Boundary, t: f64, tol: ToleranceSpec) -> Result<EvalBracket> {
    check_nonnegative_time(t)?;
    if t == 0.0 {
        return Ok(EvalBracket {
            lower: 0.0,
            upper: 0.0,
        });
    }
    if t.is_infinite() {
        let c = prob_finite_bracket(boundary, tol);
        return Ok(c);
    }
    let (a, b) = (boundary.a(), boundary.b());
    let ab = boundary.ab();
    let sd = t.sqrt();
    let s = a + b * t;
    let kmax = truncation_index(ab, tol.abs_tol);
    // 1 - I_0 = 2(1 - Φ((a+bt)/√t)), taken directly to keep small-t accuracy.
    let mut acc = CompensatedSum::new(2.0 * normal_upper_tail(s / sd));
    for k in 1..=kmax {
        let kf = k as f64;
        let shift = 2.0 * a * kf;
        let pos = normal_mass((shift - s) / sd, (shift + s) / sd);
        let neg = normal_mass((-shift - s) / sd, (-shift + s) / sd);
        let w = (-2.0 * kf * kf * ab).exp();
        // -(-1)^k
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        acc.add(sign * w * (pos + neg));
    }
    let v = acc.value();
    let rem = tail_bound(ab, kmax);
    Ok(EvalBracket {
        lower: v - rem,
        upper: v + rem,
    })
}

fn tail_bound(ab: f64, kmax: usize) -> f64 {
    let next = (kmax + 1) as f64;
    let ratio = (-2.0 * ab * (2.0 * next + 1.0)).exp();
    2.0 * (-2.0 * next * next * ab).exp() / (1.0 - ratio)
}

/// `P[τ ≤ t]` within `tol`. Tends to [`prob_finite`] as `t → ∞`.
pub fn cdf(boundary: &Boundary, t: f64, tol: ToleranceSpec) -> Result<f64> {
    let br = cdf_bracket(boundary, t, tol)?;
    Ok(br.midpoint().max(0.0))
}

/// `P[t < τ < ∞]`, summed in tail-probability form so that it keeps
/// relative accuracy when it is small.
pub fn survival(boundary: &Boundary, t: f64, tol: ToleranceSpec) -> Result<f64> {
    check_nonnegative_time(t)?;
    if t == 0.0 {
        return Ok(prob_finite(boundary, tol));
    }
    if t.is_infinite() {
        return Ok(0.0);
    }
    let (a, b) = (boundary.a(), boundary.b());
    let ab = boundary.ab();
    let sd = t.sqrt();
    let s = a + b * t;
    let kmax = truncation_index(ab, tol.abs_tol);
    // Terms +k and -k coincide: (-1)^{k+1} e^{-2k²ab} [Φ̄((s + 2ak)/√t) + Φ̄((s - 2ak)/√t)]
    let outside =
        |shift: f64| normal_upper_tail((s + shift) / sd) + normal_upper_tail((s - shift) / sd);
    let mut acc = CompensatedSum::new(-2.0 * normal_upper_tail(s / sd));
    for k in 1..=kmax {
        let kf = k as f64;
        let shift = 2.0 * a * kf;
        let w = (-2.0 * kf * kf * ab).exp();
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        acc.add(sign * w * 2.0 * outside(shift));
    }
    Ok(acc.value().max(0.0))
}

/// `P[τ ≤ t | τ < ∞]`, in `[0, 1]`.
pub fn conditional_cdf(boundary: &Boundary, t: f64, tol: ToleranceSpec) -> Result<f64> {
    check_nonnegative_time(t)?;
    if t == 0.0 {
        return Ok(0.0);
    }
    if t.is_infinite() {
        return Ok(1.0);
    }
    let c = prob_finite(boundary, tol.scaled(1e-4));
    let inner = tol.scaled(c);
    let head = cdf(boundary, t, inner)?;
    let v = if head <= 0.5 * c {
        head / c
    } else {
        1.0 - survival(boundary, t, inner)? / c
    };
    Ok(v.clamp(0.0, 1.0))
}

/// `P[τ > t | τ < ∞]`, accurate in relative terms far in the right tail.
pub fn conditional_survival(boundary: &Boundary, t: f64, tol: ToleranceSpec) -> Result<f64> {
    let c = prob_finite(boundary, tol.scaled(1e-4));
    Ok((survival(boundary, t, tol.scaled(c))? / c).clamp(0.0, 1.0))
}

/// Bracket on the unnormalized density `Q(t) = C·f(t)`.
pub fn unnormalized_density_bracket(
    boundary: &Boundary,
    t: f64,
    tol: ToleranceSpec,
) -> Result<EvalBracket> {
    let series = PartialSumSeries::density(*boundary, t)?;
    let scale = series.log_scale().exp();
    let (lo, hi, _) = series.scaled_bracket(0, tol.abs_tol * scale);
    let unscale = (-series.log_scale()).exp();
    Ok(EvalBracket {
        lower: lo * unscale,
        upper: hi * unscale,
    })
}

/// Natural log of `Q(t)`, to near machine relative precision.
///
/// Returns `-∞` when the bracketed value is not positive. When
/// `x = π²t/(2a(a+bt))` exceeds `π` the alternating series in `k` loses
/// everything to cancellation, and its Poisson dual is summed instead:
/// `Q(t) = π a^{-1/2} s^{-3/2} e^{-bs/2} Σ_{j≥0} (-1)^j (j+½) e^{-x(j+½)²}`
/// with `s = a + bt`.
pub fn ln_unnormalized_density(boundary: &Boundary, t: f64) -> Result<f64> {
    check_nonnegative_time(t)?;
    let (a, b) = (boundary.a(), boundary.b());
    let s = a + b * t;
    let x = PI * PI * t / (2.0 * a * s);
    if x > PI && t.is_finite() {
        return Ok(ln_density_dual(a, b, s, x));
    }
    let series = PartialSumSeries::density(*boundary, t)?;
    let (lo, hi, _) = series.scaled_bracket(0, 0.0);
    let mid = 0.5 * (lo + hi);
    Ok(if mid > 0.0 {
        mid.ln() - series.log_scale()
    } else {
        f64::NEG_INFINITY
    })
}

fn ln_density_dual(a: f64, b: f64, s: f64, x: f64) -> f64 {
    // Σ (-1)^j (j+½) e^{-x j(j+1)}, after pulling out e^{-x/4}.
    let mut acc = CompensatedSum::new(0.5);
    for j in 1.. {
        let jf = j as f64;
        let term = (jf + 0.5) * (-x * jf * (jf + 1.0)).exp();
        acc.add(if j % 2 == 1 { -term } else { term });
        if term < 1e-18 {
            break;
        }
    }
    PI.ln() - 0.5 * a.ln() - 1.5 * s.ln() - 0.5 * b * s - 0.25 * x + acc.value().ln()
}

/// Conditional density `f(t) = Q(t) / C` within `tol`.
pub fn density(boundary: &Boundary, t: f64, tol: ToleranceSpec) -> Result<f64> {
    let c = prob_finite(boundary, tol.scaled(1e-4));
    let q = unnormalized_density_bracket(boundary, t, tol.scaled(c))?;
    let v = q.midpoint() / c;
    if v < 0.0 && -v <= tol.abs_tol {
        Ok(0.0)
    } else {
        Ok(v)
    }
}

/// `ln g(t; α, λ)` for the gamma density `λ^α t^{α-1} e^{-λt} / Γ(α)`.
pub fn ln_gamma_density(t: f64, shape: f64, rate: f64) -> f64 {
    shape * rate.ln() + (shape - 1.0) * t.ln() - rate * t - libm::lgamma(shape)
}

/// Standard normal density, used by tests and oracles.
#[inline]
pub fn normal_density(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}
