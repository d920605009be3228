//! Shared numerical kernel: standard normal functions with extended-value
//! quantiles, monotone step functions and their generalized inverse,
//! concentration bounds for empirical state types, Gaussian derivative bounds
//! and the Berry–Esseen constant used by the finite-n direct bound.
//!
//! Every quantity that carries a logarithm is reported in bits. The two
//! uniform constants (variance bound and third-moment bound) are stored in
//! nats and converted on the way out.

use std::f64::consts::{E, LN_2, LOG2_E, PI, SQRT_2};

use crate::error::{Error, Result};

/// Per-output-symbol variance bound `V+ / |Y|`, in nats².
pub const V_PLUS_PER_OUTPUT_NATS2: f64 = 2.3;

/// `(9 / e)`, the per-symbol third-moment factor in nats.
pub const L_PLUS_FACTOR_NATS: f64 = 9.0 / E;

#[inline]
pub fn nats_to_bits(x: f64) -> f64 {
    x * LOG2_E
}

#[inline]
pub fn bits_to_nats(x: f64) -> f64 {
    x * LN_2
}

/// Uniform bound on the (un)conditional information variance, in bits².
pub fn v_plus_bits(output_size: usize) -> f64 {
    V_PLUS_PER_OUTPUT_NATS2 * output_size as f64 * LOG2_E * LOG2_E
}

/// Uniform bound on the third absolute moment, in bits³.
pub fn l_plus_bits(output_size: usize) -> f64 {
    output_size as f64 * (L_PLUS_FACTOR_NATS * LOG2_E).powi(3)
}

pub fn l_plus_nats(output_size: usize) -> f64 {
    output_size as f64 * L_PLUS_FACTOR_NATS.powi(3)
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Standard normal cdf, total on the extended reals.
pub fn normal_cdf(x: f64) -> f64 {
    if x == f64::INFINITY {
        return 1.0;
    }
    if x == f64::NEG_INFINITY {
        return 0.0;
    }
    0.5 * libm::erfc(-x / SQRT_2)
}

/// `sup { a | Φ(a) <= eps }`: −∞ at or below zero, +∞ at or above one.
pub fn normal_quantile(eps: f64) -> f64 {
    if eps.is_nan() {
        return f64::NAN;
    }
    if eps <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if eps >= 1.0 {
        return f64::INFINITY;
    }
    if eps == 0.5 {
        return 0.0;
    }
    // Solve in the lower tail, where Φ is evaluated without cancellation.
    let (q, sign) = if eps < 0.5 { (eps, 1.0) } else { (1.0 - eps, -1.0) };
    let mut x = acklam_lower(q);
    for _ in 0..3 {
        let err = normal_cdf(x) - q;
        let u = err * (2.0 * PI).sqrt() * (0.5 * x * x).exp();
        let step = u / (1.0 + 0.5 * x * u);
        x -= step;
        if step.abs() <= 1e-17 * x.abs().max(1.0) {
            break;
        }
    }
    sign * x
}

// Rational starting point for the lower-tail quantile (q < 0.5), relative
// error about 1e-9 before refinement.
fn acklam_lower(q: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.38357751867269e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00, 3.754408661907416e+00];
    const P_LOW: f64 = 0.02425;
    if q < P_LOW {
        let r = (-2.0 * q.ln()).sqrt();
        (((((C[0] * r + C[1]) * r + C[2]) * r + C[3]) * r + C[4]) * r + C[5])
            / ((((D[0] * r + D[1]) * r + D[2]) * r + D[3]) * r + 1.0)
    } else {
        let r = q - 0.5;
        let s = r * r;
        (((((A[0] * s + A[1]) * s + A[2]) * s + A[3]) * s + A[4]) * s + A[5]) * r
            / (((((B[0] * s + B[1]) * s + B[2]) * s + B[3]) * s + B[4]) * s + 1.0)
    }
}

/// A right-continuous, nondecreasing step function on ℝ.
///
/// `f(x) = below` for `x < breakpoints[0]` and `f(x) = values[i]` on
/// `[breakpoints[i], breakpoints[i + 1])`. Right-continuity is the
/// upper-semicontinuity convention for nondecreasing functions.
#[derive(Debug, Clone, PartialEq)]
pub struct StepFunction {
    below: f64,
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl StepFunction {
    pub fn new(below: f64, breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if breakpoints.len() != values.len() {
            return Err(Error::InvalidInput("step function needs one value per breakpoint".into()));
        }
        if breakpoints.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidInput("breakpoints must be finite".into()));
        }
        if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput("breakpoints must be strictly increasing".into()));
        }
        let mut prev = below;
        for &v in &values {
            if v.is_nan() || v < prev {
                return Err(Error::InvalidInput("values must be nondecreasing".into()));
            }
            prev = v;
        }
        if below.is_nan() {
            return Err(Error::InvalidInput("NaN step value".into()));
        }
        Ok(Self { below, breakpoints, values })
    }

    /// Build from unsorted jump locations and nonnegative jump sizes, e.g.
    /// the atoms of a discrete law. Coincident locations are merged.
    pub fn from_jumps(below: f64, mut jumps: Vec<(f64, f64)>) -> Result<Self> {
        if jumps.iter().any(|(x, h)| !x.is_finite() || !(*h >= 0.0)) {
            return Err(Error::InvalidInput("jumps must be finite and nonnegative".into()));
        }
        jumps.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut breakpoints: Vec<f64> = Vec::with_capacity(jumps.len());
        let mut values: Vec<f64> = Vec::with_capacity(jumps.len());
        let mut level = below;
        for (x, h) in jumps {
            level += h;
            if breakpoints.last() == Some(&x) {
                *values.last_mut().unwrap() = level;
            } else {
                breakpoints.push(x);
                values.push(level);
            }
        }
        Self::new(below, breakpoints, values)
    }

    pub fn below(&self) -> f64 {
        self.below
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn eval(&self, x: f64) -> f64 {
        let idx = self.breakpoints.partition_point(|&b| b <= x);
        if idx == 0 {
            self.below
        } else {
            self.values[idx - 1]
        }
    }

    /// Left limit `f(x-)`.
    pub fn eval_left(&self, x: f64) -> f64 {
        let idx = self.breakpoints.partition_point(|&b| b < x);
        if idx == 0 {
            self.below
        } else {
            self.values[idx - 1]
        }
    }

    /// Generalized inverse `sup { x | f(x) <= y }`.
    pub fn inverse_at(&self, y: f64) -> f64 {
        if self.below > y {
            return f64::NEG_INFINITY;
        }
        match self.values.iter().position(|&v| v > y) {
            Some(i) => self.breakpoints[i],
            None => f64::INFINITY,
        }
    }

    /// `sup { x | f(x) < y }`.
    pub fn strict_inverse_at(&self, y: f64) -> f64 {
        if self.below >= y {
            return f64::NEG_INFINITY;
        }
        match self.values.iter().position(|&v| v >= y) {
            Some(i) => self.breakpoints[i],
            None => f64::INFINITY,
        }
    }

    /// The generalized inverse as a step function of `y`.
    pub fn inverse(&self) -> StepFunction {
        let mut levels: Vec<f64> = Vec::with_capacity(self.values.len() + 1);
        levels.push(self.below);
        for &v in &self.values {
            if v > *levels.last().unwrap() {
                levels.push(v);
            }
        }
        let mut below = f64::NEG_INFINITY;
        let mut breakpoints = Vec::with_capacity(levels.len());
        let mut values = Vec::with_capacity(levels.len());
        for &level in &levels {
            let value = self.inverse_at(level);
            if level == f64::NEG_INFINITY {
                below = value;
            } else if level.is_finite() {
                breakpoints.push(level);
                values.push(value);
            }
        }
        StepFunction { below, breakpoints, values }
    }

    /// Pointwise maximum of a nonempty family.
    pub fn pointwise_max(fns: &[StepFunction]) -> Result<StepFunction> {
        Self::combine(fns, f64::max)
    }

    /// Pointwise minimum of a nonempty family.
    pub fn pointwise_min(fns: &[StepFunction]) -> Result<StepFunction> {
        Self::combine(fns, f64::min)
    }

    fn combine(fns: &[StepFunction], op: fn(f64, f64) -> f64) -> Result<StepFunction> {
        let first = fns.first().ok_or_else(|| Error::InvalidInput("empty step-function family".into()))?;
        let mut xs: Vec<f64> = fns.iter().flat_map(|f| f.breakpoints.iter().copied()).collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        let below = fns.iter().skip(1).fold(first.below, |acc, f| op(acc, f.below));
        let mut breakpoints = Vec::with_capacity(xs.len());
        let mut values = Vec::with_capacity(xs.len());
        let mut last = below;
        for x in xs {
            let v = fns.iter().skip(1).fold(first.eval(x), |acc, f| op(acc, f.eval(x)));
            if v != last {
                breakpoints.push(x);
                values.push(v);
                last = v;
            }
        }
        Ok(StepFunction { below, breakpoints, values })
    }
}

/// `sup { x in [lo, hi] | f(x) <= y }` for a nondecreasing callable, by
/// bisection down to width `tol`. Returns −∞ when `f(lo) > y` and +∞ when
/// `f(hi) <= y`; both mean the crossing lies outside the search range.
pub fn generalized_inverse_fn<F>(f: F, y: f64, lo: f64, hi: f64, tol: f64) -> f64
where
    F: Fn(f64) -> f64,
{
    if f(lo) > y {
        return f64::NEG_INFINITY;
    }
    if f(hi) <= y {
        return f64::INFINITY;
    }
    let (mut a, mut b) = (lo, hi);
    while b - a > tol {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        if f(mid) <= y {
            a = mid;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}

/// `Pr[ ||T - π||∞ > η ] <= 2|S| exp(-2nη²)` for i.i.d. states.
pub fn hoeffding_type_bound(n: usize, eta: f64, state_count: usize) -> Result<f64> {
    if !(eta > 0.0) {
        return Err(Error::InvalidInput("eta must be positive".into()));
    }
    Ok(2.0 * state_count as f64 * (-2.0 * n as f64 * eta * eta).exp())
}

/// Doeblin-chain analogue `2|S| exp(-(n-1)η² / (32 m²))`, valid for
/// `n >= 12 m / η + 1`.
pub fn markov_type_bound(n: usize, eta: f64, state_count: usize, doeblin_m: usize) -> Result<f64> {
    if !(eta > 0.0) || doeblin_m == 0 {
        return Err(Error::InvalidInput("eta and m must be positive".into()));
    }
    let m = doeblin_m as f64;
    let n_min = 12.0 * m / eta + 1.0;
    if (n as f64) < n_min {
        return Err(Error::OutOfValidity { n_min });
    }
    Ok(2.0 * state_count as f64 * (-(n as f64 - 1.0) * eta * eta / (32.0 * m * m)).exp())
}

/// Probabilists' Hermite polynomial `He_k(x)` by the three-term recurrence.
pub fn hermite_he(k: usize, x: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, x);
    if k == 0 {
        return prev;
    }
    for j in 1..k {
        let next = x.mul_add(cur, -(j as f64) * prev);
        prev = cur;
        cur = next;
    }
    cur
}

/// k-th derivative of the standard normal density, `(-1)^k He_k(x) φ(x)`.
pub fn normal_pdf_derivative(k: usize, x: f64) -> f64 {
    let sign = if k.is_multiple_of(2) { 1.0 } else { -1.0 };
    sign * hermite_he(k, x) * normal_pdf(x)
}

/// `sup_x |φ^(k)(x)| <= e^{1/8} (2π)^{-1/4} k^{1/4} (k/e)^{k/2}` for k >= 1.
pub fn hermite_derivative_bound(k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidInput("derivative order must be at least 1".into()));
    }
    let kf = k as f64;
    Ok((0.125f64).exp() / (2.0 * PI).powf(0.25) * kf.powf(0.25) * (kf / E).powf(kf / 2.0))
}

/// `B = 6 L+ / V_min^{3/2}` for an output alphabet of the given size.
pub fn berry_esseen_constant(v_min_bits: f64, output_size: usize) -> Result<f64> {
    berry_esseen_from(l_plus_bits(output_size), v_min_bits)
}

pub fn berry_esseen_from(l_plus: f64, v_min: f64) -> Result<f64> {
    if !(v_min > 0.0) {
        return Err(Error::DegenerateDispersion { state: usize::MAX, value: v_min, floor: 0.0 });
    }
    Ok(6.0 * l_plus / v_min.powf(1.5))
}

/// Least-squares slope of `ln y` against `ln x`. `None` unless at least two
/// strictly positive finite points are available.
pub fn fit_loglog_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0 && y.is_finite())
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 || pts.len() != xs.len() {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        None
    } else {
        Some(sxy / sxx)
    }
}

/// Natural log of the multinomial coefficient `n! / Π c_i!`.
pub fn ln_multinomial(counts: &[u32]) -> f64 {
    let n: u32 = counts.iter().sum();
    libm::lgamma(n as f64 + 1.0) - counts.iter().map(|&c| libm::lgamma(c as f64 + 1.0)).sum::<f64>()
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let denom = 1.0 + z * z / n;
    let centre = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// `x ln x` convention helpers: `p log2(p/q)` with `0 log 0 = 0`.
#[inline]
pub(crate) fn plogq_bits(p: f64, q: f64) -> f64 {
    if p == 0.0 {
        0.0
    } else {
        p * (p / q).log2()
    }
}
