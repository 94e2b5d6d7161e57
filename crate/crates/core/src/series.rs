//! The two oscillating series that define the passage-time law.
//!
//! * The normalizer `C = 2 Σ_{k≥1} (-1)^{k+1} e^{-2k²ab}`, which is the
//!   probability that the boundary is ever hit.
//! * The unnormalized density `Q(t) = C·f(t)` at a fixed `t > 0`: a leading
//!   term `L(t)` followed by corrections in `k ≥ 1`.
//!
//! Past a known tail index the partial sums of both series alternate around
//! their limit with shrinking steps, so two consecutive partial sums bracket
//! the limit. [`decide_compare`] uses this to decide `S > s` or `S < s` in
//! finitely many terms.
//!
//! Terms are evaluated as a sign and a log-magnitude. The density series is
//! additionally rescaled by `e^{(a+bt)²/(2t)}` so that partial sums stay in
//! the normal floating-point range even when `Q(t)` itself underflows.

use std::f64::consts::{LN_2, PI};

use crate::error::{Error, Result};

/// Relative resolution floor for [`decide_compare`] (2⁻⁴⁰).
pub const RESOLVE_EPS: f64 = 9.094_947_017_729_282e-13;

/// Symmetric linear boundary `±(a + b t)` with `a, b > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Boundary {
    a: f64,
    b: f64,
}

impl Boundary {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite() {
            Ok(Boundary { a, b })
        } else {
            Err(Error::InvalidBoundary { a, b })
        }
    }

    #[inline]
    pub fn a(&self) -> f64 {
        self.a
    }

    #[inline]
    pub fn b(&self) -> f64 {
        self.b
    }

    #[inline]
    pub(crate) fn ab(&self) -> f64 {
        self.a * self.b
    }
}

/// Outcome of comparing a series limit against a threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompareOutcome {
    Greater,
    Less,
}

/// A resolved comparison together with the number of terms it consumed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Decision {
    pub outcome: CompareOutcome,
    pub terms_used: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SeriesKind {
    NormalizerC,
    DensityQ { t: f64 },
}

/// A series term as sign and natural log of its magnitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Term {
    pub negative: bool,
    pub ln_abs: f64,
}

impl Term {
    #[inline]
    fn from_value(v: f64) -> Term {
        Term {
            negative: v < 0.0,
            ln_abs: v.abs().ln(),
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        let m = self.ln_abs.exp();
        if self.negative {
            -m
        } else {
            m
        }
    }
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new(init: f64) -> Self {
        CompensatedSum {
            sum: init,
            comp: 0.0,
        }
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Evaluator for one of the two oscillating series on a fixed boundary.
///
/// `partial(n)` is the sum of the leading term and the first `n`
/// corrections. Internally all sums are carried multiplied by
/// `e^{log_scale}`; [`PartialSumSeries::scaled_partial`] exposes that form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartialSumSeries {
    kind: SeriesKind,
    boundary: Boundary,
    tail_index: usize,
    log_scale: f64,
    // Cached per-series constants for the density kind.
    ln_prefactor: f64,
    decay: f64,
}

impl PartialSumSeries {
    pub fn normalizer(boundary: Boundary) -> Self {
        PartialSumSeries {
            kind: SeriesKind::NormalizerC,
            boundary,
            tail_index: tail_index_c(),
            log_scale: 0.0,
            ln_prefactor: LN_2,
            decay: 0.0,
        }
    }

    pub fn density(boundary: Boundary, t: f64) -> Result<Self> {
        check_time(t)?;
        let (a, b) = (boundary.a, boundary.b);
        let s = a + b * t;
        Ok(PartialSumSeries {
            kind: SeriesKind::DensityQ { t },
            boundary,
            tail_index: tail_index_q(&boundary, t)?,
            log_scale: s * s / (2.0 * t),
            ln_prefactor: -0.5 * (2.0 * PI).ln() - 1.5 * t.ln(),
            decay: 2.0 * a * (b + a / t),
        })
    }

    #[inline]
    pub fn kind(&self) -> SeriesKind {
        self.kind
    }

    #[inline]
    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    /// First index from which consecutive partial sums bracket the limit.
    #[inline]
    pub fn tail_index(&self) -> usize {
        self.tail_index
    }

    /// Natural log of the factor applied to every scaled partial sum.
    #[inline]
    pub fn log_scale(&self) -> f64 {
        self.log_scale
    }

    /// Leading (k = 0) term of the scaled series.
    #[inline]
    pub fn scaled_head(&self) -> f64 {
        match self.kind {
            SeriesKind::NormalizerC => 0.0,
            SeriesKind::DensityQ { t } => {
                (self.boundary.a - self.boundary.b * t) * self.ln_prefactor.exp()
            }
        }
    }

    /// The k-th correction term (k ≥ 1) of the scaled series.
    pub fn term(&self, k: usize) -> Term {
        debug_assert!(k >= 1);
        let kf = k as f64;
        let odd = k % 2 == 1;
        match self.kind {
            SeriesKind::NormalizerC => Term {
                negative: !odd,
                ln_abs: LN_2 - 2.0 * kf * kf * self.boundary.ab(),
            },
            SeriesKind::DensityQ { t } => {
                let (a, b) = (self.boundary.a, self.boundary.b);
                let bt = b * t;
                let upper = bt - a + 2.0 * a * kf;
                let lower = a - bt + 2.0 * a * kf;
                let delta = 4.0 * a * kf * (a + bt) / t;
                // upper - lower·e^{-δ}, written to avoid cancellation for small δ
                let bracket = if delta < 0.5 {
                    2.0 * (bt - a) - lower * (-delta).exp_m1()
                } else {
                    upper - lower * (-delta).exp()
                };
                let inner = Term::from_value(bracket);
                Term {
                    negative: inner.negative == odd,
                    ln_abs: inner.ln_abs + self.ln_prefactor - self.decay * kf * (kf - 1.0),
                }
            }
        }
    }

    /// Scaled partial sums `S_0, S_1, ...` in order.
    pub fn scaled_partials(&self) -> ScaledPartials<'_> {
        ScaledPartials {
            series: self,
            next_index: 0,
            acc: CompensatedSum::new(self.scaled_head()),
        }
    }

    /// Scaled partial sum with `n` correction terms.
    pub fn scaled_partial(&self, n: usize) -> f64 {
        let mut acc = CompensatedSum::new(self.scaled_head());
        for k in 1..=n {
            acc.add(self.term(k).value());
        }
        acc.value()
    }

    /// Partial sum with `n` correction terms, in natural units.
    pub fn partial(&self, n: usize) -> f64 {
        let scaled = self.scaled_partial(n);
        if self.log_scale == 0.0 {
            scaled
        } else {
            scaled * (-self.log_scale).exp()
        }
    }

    /// Two consecutive scaled partial sums at or past the tail index whose
    /// gap is at most `max_width` (or cannot shrink further in f64).
    /// Returns `(lower, upper, k)` with the bracket `[S_k, S_{k+1}]` sorted.
    pub fn scaled_bracket(&self, min_index: usize, max_width: f64) -> (f64, f64, usize) {
        let start = self.tail_index.max(min_index);
        let mut it = self.scaled_partials();
        let mut prev = it.nth(start).expect("partial sums are unbounded");
        let mut k = start;
        loop {
            let next = it.next().expect("partial sums are unbounded");
            let width = (next - prev).abs();
            let stalled = width <= 0.5 * f64::EPSILON * prev.abs().max(next.abs());
            if width <= max_width || stalled || !width.is_finite() {
                return (prev.min(next), prev.max(next), k);
            }
            prev = next;
            k += 1;
        }
    }
}

/// Iterator over scaled partial sums.
pub struct ScaledPartials<'a> {
    series: &'a PartialSumSeries,
    next_index: usize,
    acc: CompensatedSum,
}

impl Iterator for ScaledPartials<'_> {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        if self.next_index > 0 {
            self.acc.add(self.series.term(self.next_index).value());
        }
        self.next_index += 1;
        Some(self.acc.value())
    }
}

fn check_time(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "time must be finite and > 0, got {t}"
        )))
    }
}

/// Partial sum `2 Σ_{k=1}^{n} (-1)^{k+1} e^{-2k²ab}`.
pub fn c_partial(boundary: &Boundary, n: usize) -> f64 {
    PartialSumSeries::normalizer(*boundary).partial(n)
}

/// Partial sum of the unnormalized density series at `t` with `n`
/// correction terms; `n = 0` gives the leading term alone.
pub fn q_partial(boundary: &Boundary, t: f64, n: usize) -> Result<f64> {
    Ok(PartialSumSeries::density(*boundary, t)?.partial(n))
}

/// The normalizer series oscillates from its first term on.
pub fn tail_index_c() -> usize {
    1
}

/// `ceil(max(ln 6 / (4ab), bt / (2a), 1) + 1)`.
pub fn tail_index_q(boundary: &Boundary, t: f64) -> Result<usize> {
    check_time(t)?;
    let (a, b) = (boundary.a, boundary.b);
    let n = (6f64.ln() / (4.0 * a * b)).max(b * t / (2.0 * a)).max(1.0) + 1.0;
    if n.is_finite() && n < usize::MAX as f64 {
        Ok(n.ceil() as usize)
    } else {
        Err(Error::InvalidArgument(format!(
            "tail index overflows for a = {a}, b = {b}, t = {t}"
        )))
    }
}

/// Decides whether the series limit is above or below `s`.
pub fn decide_compare(series: &PartialSumSeries, s: f64) -> Result<CompareOutcome> {
    let scaled = if s == 0.0 || series.log_scale == 0.0 {
        s
    } else {
        s * series.log_scale.exp()
    };
    compare_scaled(series, scaled).map(|d| d.outcome)
}

/// Same as [`decide_compare`] but with the threshold already multiplied by
/// `e^{log_scale}`, and reporting the number of terms consumed.
pub fn compare_scaled(series: &PartialSumSeries, s: f64) -> Result<Decision> {
    if s.is_nan() {
        return Err(Error::InvalidArgument("threshold is NaN".into()));
    }
    let start = series.tail_index;
    let mut acc = CompensatedSum::new(series.scaled_head());
    for k in 1..=start {
        acc.add(series.term(k).value());
    }
    let mut prev = acc.value();
    let mut k = start;
    loop {
        let term = series.term(k + 1).value();
        acc.add(term);
        let next = acc.value();
        let (lo, hi) = if prev <= next {
            (prev, next)
        } else {
            (next, prev)
        };
        if lo > s {
            return Ok(Decision {
                outcome: CompareOutcome::Greater,
                terms_used: k + 1,
            });
        }
        if hi < s {
            return Ok(Decision {
                outcome: CompareOutcome::Less,
                terms_used: k + 1,
            });
        }
        let floor = RESOLVE_EPS * s.abs().max(prev.abs()).max(next.abs());
        if term.abs() < floor || term == 0.0 {
            return Err(Error::UnresolvedComparison {
                index: k,
                width: term.abs(),
                threshold: s,
            });
        }
        prev = next;
        k += 1;
    }
}

/// `(S_{n+1} - S_n) / (S_n - S_{n-1})`, computed from log-magnitudes of the
/// increments so that it survives underflow of the terms themselves.
///
/// The ratio itself can fall below the f64 range (for `ab = 25` it is about
/// `e^{-100n}`); [`oscillation_ratio_log`] keeps it exactly.
pub fn oscillation_ratio(series: &PartialSumSeries, n: usize) -> Result<f64> {
    oscillation_ratio_log(series, n).map(Term::value)
}

/// [`oscillation_ratio`] as a sign and log-magnitude.
pub fn oscillation_ratio_log(series: &PartialSumSeries, n: usize) -> Result<Term> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "oscillation ratio needs n >= 1".into(),
        ));
    }
    let cur = series.term(n);
    let nxt = series.term(n + 1);
    if cur.ln_abs == f64::NEG_INFINITY || cur.ln_abs.is_nan() {
        return Err(Error::DegenerateDifference { n });
    }
    Ok(Term {
        negative: cur.negative != nxt.negative,
        ln_abs: nxt.ln_abs - cur.ln_abs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bd(a: f64, b: f64) -> Boundary {
        Boundary::new(a, b).unwrap()
    }

    // Straightforward linear-domain evaluation of the density series.
    fn q_direct(a: f64, b: f64, t: f64, n: usize) -> f64 {
        let pre = 1.0 / (2.0 * PI * t.powi(3)).sqrt();
        let mut s = (a - b * t) * pre * (-(a + b * t).powi(2) / (2.0 * t)).exp();
        for k in 1..=n {
            let kf = k as f64;
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            let y = a + b * t + 2.0 * a * kf;
            let x = 2.0 * a * kf - a - b * t;
            s += sign
                * (-2.0 * kf * kf * a * b).exp()
                * pre
                * ((b * t - a + 2.0 * a * kf) * (-x * x / (2.0 * t)).exp()
                    - (a - b * t + 2.0 * a * kf) * (-y * y / (2.0 * t)).exp());
        }
        s
    }

    #[test]
    fn boundary_rejects_nonpositive() {
        assert!(Boundary::new(0.0, 1.0).is_err());
        assert!(Boundary::new(1.0, 0.0).is_err());
        assert!(Boundary::new(-1.0, 1.0).is_err());
        assert!(Boundary::new(f64::NAN, 1.0).is_err());
        assert!(Boundary::new(1.0, f64::INFINITY).is_err());
    }

    #[test]
    fn c_partial_values() {
        let b = bd(1.0, 1.0);
        assert_eq!(c_partial(&b, 0), 0.0);
        assert!((c_partial(&b, 1) - 2.0 * (-2.0f64).exp()).abs() < 1e-16);
        let direct: f64 = (1..=3)
            .map(|k| {
                let k = k as f64;
                2.0 * (-1f64).powf(k + 1.0) * (-2.0 * k * k).exp()
            })
            .sum();
        assert!((c_partial(&b, 3) - direct).abs() < 1e-16);
        assert!((c_partial(&b, 3) - 0.269_999_671_677_354_5).abs() < 1e-13);
    }

    #[test]
    fn q_partial_matches_linear_form() {
        for &(a, b, t) in &[
            (1.0, 1.0, 1.0),
            (1.0, 0.5, 1.0),
            (0.7, 1.3, 0.4),
            (2.0, 0.3, 5.0),
        ] {
            for n in 0..6 {
                let got = q_partial(&bd(a, b), t, n).unwrap();
                let want = q_direct(a, b, t, n);
                assert!(
                    (got - want).abs() <= 1e-14 * want.abs().max(1e-3),
                    "{a} {b} {t} {n}: {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn q_partial_leading_term() {
        assert_eq!(q_partial(&bd(1.0, 1.0), 1.0, 0).unwrap(), 0.0);
        let want = 0.5 / (2.0 * PI).sqrt() * (-1.125f64).exp();
        let got = q_partial(&bd(1.0, 0.5), 1.0, 0).unwrap();
        assert!((got - want).abs() < 1e-16);
        assert!((got - 0.06475).abs() < 1e-5);
    }

    #[test]
    fn q_partial_rejects_bad_time() {
        assert!(q_partial(&bd(1.0, 1.0), 0.0, 3).is_err());
        assert!(q_partial(&bd(1.0, 1.0), -1.0, 3).is_err());
    }

    #[test]
    fn tail_indices() {
        assert_eq!(tail_index_c(), 1);
        assert_eq!(tail_index_q(&bd(1.0, 1.0), 1.0).unwrap(), 2);
        assert_eq!(tail_index_q(&bd(1.0, 1.0), 10.0).unwrap(), 6);
        assert_eq!(tail_index_q(&bd(0.1, 0.1), 1.0).unwrap(), 46);
        assert!(tail_index_q(&bd(1.0, 1.0), 0.0).is_err());
    }

    #[test]
    fn normalizer_ratios() {
        let s = PartialSumSeries::normalizer(bd(1.0, 1.0));
        let r1 = oscillation_ratio(&s, 1).unwrap();
        assert!((r1 + (-6.0f64).exp()).abs() < 1e-17);
        let r2 = oscillation_ratio(&s, 2).unwrap();
        assert!((r2 + (-10.0f64).exp()).abs() < 1e-18);
        let s = PartialSumSeries::normalizer(bd(0.1, 0.1));
        let r = oscillation_ratio(&s, 2).unwrap();
        assert!((r + (-0.1f64).exp()).abs() < 1e-15);
        assert!(oscillation_ratio(&s, 0).is_err());
    }

    #[test]
    fn density_ratio_at_tail_index() {
        let s = PartialSumSeries::density(bd(1.0, 1.0), 1.0).unwrap();
        let r = oscillation_ratio(&s, 2).unwrap();
        assert!(r > -1.0 && r < 0.0, "{r}");
    }

    #[test]
    fn ratio_survives_term_underflow() {
        // Terms at k ~ 60 are far below f64 range for ab = 25.
        let s = PartialSumSeries::density(bd(5.0, 5.0), 20.0).unwrap();
        assert_eq!(s.term(60).value(), 0.0);
        let r = oscillation_ratio_log(&s, 60).unwrap();
        assert!(r.negative && r.ln_abs < 0.0 && r.ln_abs.is_finite());
        // e^{-4ak(b + a/t)} at k = 60, times a bracket ratio near 705/695
        let expect = -4.0 * 5.0 * 60.0 * 5.25 + (705.0f64 / 695.0).ln();
        assert!((r.ln_abs - expect).abs() < 1e-3, "{}", r.ln_abs);
    }

    #[test]
    fn decide_normalizer_examples() {
        let c = PartialSumSeries::normalizer(bd(1.0, 1.0));
        assert_eq!(decide_compare(&c, 0.5).unwrap(), CompareOutcome::Less);
        assert_eq!(decide_compare(&c, 0.1).unwrap(), CompareOutcome::Greater);
        let c = PartialSumSeries::normalizer(bd(0.5, 0.5));
        assert_eq!(decide_compare(&c, 0.9).unwrap(), CompareOutcome::Greater);
    }

    #[test]
    fn decide_at_limit_is_unresolved() {
        let c = PartialSumSeries::normalizer(bd(1.0, 1.0));
        let limit = c.partial(40);
        match decide_compare(&c, limit) {
            Err(Error::UnresolvedComparison { .. }) => {}
            other => panic!("expected unresolved, got {other:?}"),
        }
    }

    #[test]
    fn decide_rejects_nan() {
        let c = PartialSumSeries::normalizer(bd(1.0, 1.0));
        assert!(decide_compare(&c, f64::NAN).is_err());
    }

    #[test]
    fn decide_density_with_underflowing_values() {
        // Q(0.01) for a = 1 is about e^{-50}; unscaled thresholds still resolve.
        let q = PartialSumSeries::density(bd(1.0, 1.0), 0.01).unwrap();
        let limit = q.partial(q.tail_index() + 20);
        assert!(limit > 0.0 && limit < 1e-15);
        assert_eq!(
            decide_compare(&q, limit * 1.001).unwrap(),
            CompareOutcome::Less
        );
        assert_eq!(
            decide_compare(&q, limit * 0.999).unwrap(),
            CompareOutcome::Greater
        );
    }

    #[test]
    fn compensated_sum_recovers_small_addends() {
        let mut s = CompensatedSum::new(1.0);
        for _ in 0..10 {
            s.add(1e-17);
        }
        assert!((s.value() - (1.0 + 1e-16)).abs() < 1e-17);
    }

    #[test]
    fn c_terms_shrink() {
        let s = PartialSumSeries::normalizer(bd(0.3, 0.7));
        for k in 1..50 {
            assert!(s.term(k + 1).ln_abs < s.term(k).ln_abs);
        }
    }
}
