//! Second-order coding rates: the finite-n K functional, its level-ε inverse
//! Λ, model closed forms, the normal approximation to `log M*`, and an audit
//! of the two Gaussian approximation steps behind the i.i.d. result.

use crate::channel::StateChannel;
use crate::error::{Error, Result};
use crate::first_order::{check_states, closed_form_capacity, eps_capacity};
use crate::numerics::{fit_loglog_slope, generalized_inverse_fn, normal_cdf, normal_quantile, v_plus_bits};
use crate::state::{
    block_layout, type_distribution, v_double_star, v_double_star_finite, v_star, StateProcess, TypeDistribution,
    TypeOptions,
};

pub const DEFAULT_LAMBDA_TOL: f64 = 1e-6;
/// Minimum log-log growth rate of `|Λ_n|` read as divergence.
pub const DIVERGENCE_SLOPE: f64 = 0.25;
pub const AUDIT_GRID_POINTS: usize = 201;

/// One evaluation point of the K functional.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KQuery {
    /// Second-order rate on the `n^β` scale, bits.
    pub r: f64,
    /// First-order rate, bits.
    pub rate: f64,
    pub beta: f64,
    pub n: usize,
}

impl KQuery {
    pub fn new(r: f64, rate: f64, beta: f64, n: usize) -> Result<Self> {
        check_beta(beta)?;
        if n == 0 {
            return Err(Error::InvalidInput("blocklength must be positive".into()));
        }
        Ok(Self { r, rate, beta, n })
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if !(0.5..1.0).contains(&beta) {
        return Err(Error::InvalidInput(format!("beta {beta} outside [1/2, 1)")));
    }
    Ok(())
}

fn check_open_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidEpsilon(eps));
    }
    Ok(())
}

fn require_dispersion(channel: &StateChannel) -> Result<()> {
    if !(channel.v_min() > 0.0) {
        let state = channel.dispersions().iter().position(|v| !(*v > 0.0)).unwrap_or(0);
        return Err(Error::DegenerateDispersion { state, value: channel.v_min(), floor: 0.0 });
    }
    Ok(())
}

/// `r ↦ E[Φ((nR + n^β r − nC(T)) / √(nV(T)))]` over a fixed type law.
#[derive(Debug, Clone)]
pub struct KCurve {
    n: usize,
    scale: f64,
    // (probability, n(R − C(t)), √(n V(t)))
    atoms: Vec<(f64, f64, f64)>,
}

impl KCurve {
    pub fn new(types: &TypeDistribution, channel: &StateChannel, rate: f64, beta: f64) -> Result<Self> {
        check_beta(beta)?;
        require_dispersion(channel)?;
        let n = types.n();
        let nf = n as f64;
        let atoms = types
            .atoms()
            .iter()
            .map(|(t, p)| {
                let f = t.fractions();
                (*p, nf * (rate - channel.mean_capacity(&f)), (nf * channel.mean_dispersion(&f)).sqrt())
            })
            .collect();
        Ok(Self { n, scale: nf.powf(beta), atoms })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn eval(&self, r: f64) -> f64 {
        let shift = self.scale * r;
        self.atoms.iter().map(|(p, a, s)| p * normal_cdf((a + shift) / s)).sum::<f64>().clamp(0.0, 1.0)
    }

    /// `K(r) − ε` without cancellation: atoms with a positive argument enter
    /// as `p − pΦ(−z)`, so their masses are netted against ε first.
    pub fn excess(&self, r: f64, eps: f64) -> f64 {
        let shift = self.scale * r;
        let mut mass = -eps;
        let mut small = 0.0;
        for (p, a, s) in &self.atoms {
            let z = (a + shift) / s;
            if z > 0.0 {
                mass += p;
                small -= p * normal_cdf(-z);
            } else {
                small += p * normal_cdf(z);
            }
        }
        mass + small
    }

    /// `sup{r ∈ [−r_max, r_max] | K(r) <= ε}`, ±∞ when K stays on one side
    /// of ε across the whole range.
    pub fn level_inverse(&self, eps: f64, r_max: f64, tol: f64) -> f64 {
        generalized_inverse_fn(|r| self.excess(r, eps), 0.0, -r_max, r_max, tol)
    }

    /// Monte Carlo standard error of `level_inverse` by the delta method,
    /// for a type law estimated from `samples` paths.
    pub fn level_inverse_stderr(&self, r: f64, samples: u64) -> Option<f64> {
        if !r.is_finite() || samples < 2 {
            return None;
        }
        let shift = self.scale * r;
        let mut mean = 0.0;
        let mut second = 0.0;
        let mut slope = 0.0;
        for (p, a, s) in &self.atoms {
            let z = (a + shift) / s;
            let g = normal_cdf(z);
            mean += p * g;
            second += p * g * g;
            slope += p * crate::numerics::normal_pdf(z) * self.scale / s;
        }
        let var = (second - mean * mean).max(0.0) / (samples - 1) as f64;
        (slope > 0.0).then(|| var.sqrt() / slope)
    }
}

pub fn k_functional(query: &KQuery, process: &StateProcess, channel: &StateChannel, opts: &TypeOptions) -> Result<f64> {
    check_states(process, channel)?;
    let td = type_distribution(process, query.n, opts)?;
    Ok(KCurve::new(&td, channel, query.rate, query.beta)?.eval(query.r))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    FunctionalBisection,
    ClosedForm,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::FunctionalBisection => "functional_bisection",
            Method::ClosedForm => "closed_form",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateSource {
    ClosedForm,
    FiniteN,
}

impl RateSource {
    pub fn as_str(self) -> &'static str {
        match self {
            RateSource::ClosedForm => "closed_form",
            RateSource::FiniteN => "finite_n",
        }
    }
}

/// Closed-form Λ with its dispersion decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedForm {
    pub lambda: f64,
    /// `Υ(ε)`, present when β = ½ and ε ≠ ½.
    pub dispersion: Option<f64>,
    pub decomposition: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SecondOrderResult {
    pub eps: f64,
    pub beta: f64,
    pub lambda: f64,
    pub dispersion: Option<f64>,
    pub decomposition: Vec<(String, f64)>,
    pub method: Method,
    pub n_grid: Vec<usize>,
    /// `(n, Λ_n)` for every grid point.
    pub trace: Vec<(usize, f64)>,
    /// Monte Carlo standard error of each `Λ_n`; `None` for exact type laws.
    pub trace_stderr: Vec<Option<f64>>,
    pub closed_form: Option<ClosedForm>,
    pub rate: f64,
    pub rate_source: RateSource,
    /// Λ reported as infinite because `|Λ_n|` grows along the grid tail.
    pub diverged: bool,
    pub exact: bool,
    pub r_max: f64,
    pub tol: f64,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    pub tol: f64,
    /// Half-width of the bisection range; defaults to `20 √V+` bits.
    pub r_max: Option<f64>,
    pub types: TypeOptions,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { tol: DEFAULT_LAMBDA_TOL, r_max: None, types: TypeOptions::default() }
    }
}

fn dispersion_of(lambda: f64, eps: f64, beta: f64) -> Option<f64> {
    if beta == 0.5 && eps != 0.5 && lambda.is_finite() {
        Some((lambda / normal_quantile(eps)).powi(2))
    } else {
        None
    }
}

/// Λ(ε, β) at the largest grid blocklength, with a per-n trace.
pub fn lambda_solve(
    eps: f64,
    beta: f64,
    process: &StateProcess,
    channel: &StateChannel,
    n_grid: &[usize],
    opts: &SolveOptions,
) -> Result<SecondOrderResult> {
    check_open_eps(eps)?;
    check_beta(beta)?;
    check_states(process, channel)?;
    require_dispersion(channel)?;
    if n_grid.is_empty() || n_grid.contains(&0) {
        return Err(Error::InvalidInput("blocklength grid must be nonempty and positive".into()));
    }
    let mut grid = n_grid.to_vec();
    grid.sort_unstable();
    grid.dedup();
    let r_max = opts.r_max.unwrap_or_else(|| 20.0 * v_plus_bits(channel.output_size()).sqrt());
    let mut diagnostics = Vec::new();

    let (rate, rate_source) = match closed_form_capacity(process, &channel.capacities(), eps)? {
        Some((c, _)) if c.is_finite() => (c, RateSource::ClosedForm),
        _ => {
            let report = eps_capacity(process, channel, eps, &grid, &opts.types)?;
            if !report.eps_capacity.is_finite() {
                return Err(Error::InvalidInput("first-order rate is not finite".into()));
            }
            (report.eps_capacity, RateSource::FiniteN)
        }
    };

    let mut trace = Vec::with_capacity(grid.len());
    let mut trace_stderr = Vec::with_capacity(grid.len());
    let mut exact = true;
    for &n in &grid {
        let td = type_distribution(process, n, &opts.types)?;
        exact &= td.is_exact();
        let curve = KCurve::new(&td, channel, rate, beta)?;
        let r = curve.level_inverse(eps, r_max, opts.tol);
        if !r.is_finite() {
            diagnostics.push(format!("n = {n}: K does not cross {eps} on [-{r_max}, {r_max}]"));
        }
        trace.push((n, r));
        trace_stderr.push(td.sample_count().and_then(|b| curve.level_inverse_stderr(r, b)));
    }

    let mut lambda = trace.last().map(|t| t.1).unwrap_or(f64::NAN);
    let diverged = lambda.is_finite() && tail_diverges(&trace);
    if diverged {
        lambda = lambda.signum() * f64::INFINITY;
        diagnostics.push(format!("|Lambda_n| grows along the grid tail (log-log slope >= {DIVERGENCE_SLOPE})"));
    }

    let closed_form = match closed_form_lambda(process, channel, eps, beta) {
        Ok(c) => Some(c),
        Err(e) => {
            diagnostics.push(format!("no closed form: {e}"));
            None
        }
    };
    let decomposition = closed_form.as_ref().map(|c| c.decomposition.clone()).unwrap_or_default();
    Ok(SecondOrderResult {
        eps,
        beta,
        lambda,
        dispersion: dispersion_of(lambda, eps, beta),
        decomposition,
        method: Method::FunctionalBisection,
        n_grid: grid,
        trace,
        trace_stderr,
        closed_form,
        rate,
        rate_source,
        diverged,
        exact,
        r_max,
        tol: opts.tol,
        diagnostics,
    })
}

// Last three finite values share a sign, grow in magnitude, and |Λ_n| has a
// log-log slope of at least DIVERGENCE_SLOPE.
fn tail_diverges(trace: &[(usize, f64)]) -> bool {
    if trace.len() < 3 {
        return false;
    }
    let tail = &trace[trace.len() - 3..];
    if tail.iter().any(|t| !t.1.is_finite() || t.1 == 0.0) {
        return false;
    }
    let sign = tail[0].1.signum();
    if tail.iter().any(|t| t.1.signum() != sign) {
        return false;
    }
    if !tail.windows(2).all(|w| w[1].1.abs() > w[0].1.abs()) {
        return false;
    }
    let xs: Vec<f64> = tail.iter().map(|t| t.0 as f64).collect();
    let ys: Vec<f64> = tail.iter().map(|t| t.1.abs()).collect();
    fit_loglog_slope(&xs, &ys).is_some_and(|s| s >= DIVERGENCE_SLOPE)
}

fn require_half(beta: f64) -> Result<()> {
    if beta != 0.5 {
        return Err(Error::BetaMismatch { expected: 0.5, got: beta });
    }
    Ok(())
}

fn closed(lambda: f64, eps: f64, beta: f64, decomposition: Vec<(&str, f64)>) -> ClosedForm {
    ClosedForm {
        lambda,
        dispersion: dispersion_of(lambda, eps, beta),
        decomposition: decomposition.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
    }
}

/// Model closed forms for Λ(ε, β).
pub fn closed_form_lambda(process: &StateProcess, channel: &StateChannel, eps: f64, beta: f64) -> Result<ClosedForm> {
    check_open_eps(eps)?;
    check_states(process, channel)?;
    require_dispersion(channel)?;
    let caps = channel.capacities();
    let disp = channel.dispersions();
    let q_eps = normal_quantile(eps);
    match process {
        StateProcess::Mixed { q } => {
            require_half(beta)?;
            let lambda = mixed_lambda(q, &caps, &disp, eps)?;
            Ok(closed(lambda, eps, beta, vec![]))
        }
        StateProcess::Iid { pi } => {
            require_half(beta)?;
            let v = channel.mean_dispersion(pi);
            let vs = v_star(pi, &caps)?;
            Ok(closed((v + vs).sqrt() * q_eps, eps, beta, vec![("V(pi)", v), ("V*(pi)", vs)]))
        }
        StateProcess::BlockIid { pi, nu } => {
            let expected = 1.0 - nu / 2.0;
            if (beta - expected).abs() > 1e-12 {
                return Err(Error::BetaMismatch { expected, got: beta });
            }
            let vs = v_star(pi, &caps)?;
            let v = channel.mean_dispersion(pi);
            Ok(ClosedForm {
                lambda: vs.sqrt() * q_eps,
                dispersion: None,
                decomposition: vec![("V(pi)".into(), v), ("V*(pi)".into(), vs)],
            })
        }
        StateProcess::Markov(chain) => {
            require_half(beta)?;
            chain.require_ergodic()?;
            let pi = chain.stationary();
            let v = channel.mean_dispersion(pi);
            let vss = v_double_star(chain, &caps)?.value;
            Ok(closed((v + vss).sqrt() * q_eps, eps, beta, vec![("V(pi)", v), ("V**(M)", vss)]))
        }
        StateProcess::Alternating { sa, sb, .. } => {
            require_half(beta)?;
            let heavy_a = (2.0 * disp[*sa] + disp[*sb]) / 3.0;
            let heavy_b = (disp[*sa] + 2.0 * disp[*sb]) / 3.0;
            let upsilon = if caps[*sa] < caps[*sb] {
                heavy_a
            } else if caps[*sb] < caps[*sa] {
                heavy_b
            } else if eps < 0.5 {
                // Equal capacities: the limsup picks the larger spread below
                // the median and the smaller one above it.
                heavy_a.max(heavy_b)
            } else {
                heavy_a.min(heavy_b)
            };
            Ok(closed(upsilon.sqrt() * q_eps, eps, beta, vec![("V(t)", upsilon)]))
        }
    }
}

// Limit of K for a mixture: states below C_ε contribute their full mass,
// states at C_ε contribute q_s Φ(r/√V_s), states above contribute nothing.
fn mixed_lambda(q: &[f64], caps: &[f64], disp: &[f64], eps: f64) -> Result<f64> {
    let cdf = crate::numerics::StepFunction::from_jumps(0.0, caps.iter().copied().zip(q.iter().copied()).collect())?;
    let c_eps = cdf.inverse_at(eps);
    let same = |c: f64| (c - c_eps).abs() <= 1e-12 * (1.0 + c_eps.abs());
    let below: f64 = q.iter().zip(caps).filter(|(_, c)| **c < c_eps && !same(**c)).map(|(w, _)| w).sum();
    let level: Vec<(f64, f64)> =
        q.iter().zip(caps).zip(disp).filter(|((w, c), _)| **w > 0.0 && same(**c)).map(|((w, _), v)| (*w, *v)).collect();
    if eps <= below {
        return Ok(f64::NEG_INFINITY);
    }
    let total: f64 = level.iter().map(|l| l.0).sum();
    if eps >= below + total {
        return Ok(f64::INFINITY);
    }
    let k = |r: f64| below + level.iter().map(|(w, v)| w * normal_cdf(r / v.sqrt())).sum::<f64>();
    let vmax = level.iter().map(|l| l.1).fold(0.0, f64::max);
    let span = 50.0 * vmax.sqrt();
    Ok(generalized_inverse_fn(k, eps, -span, span, 1e-13))
}

/// `log M* ≈ nC(π) + √(n V_total) Φ⁻¹(ε)`, with the mixed-power variance
/// `nV(π) + n^{2−ν}V*(π)` for block-i.i.d. states. No `O(log n)` term.
pub fn normal_approximation_log_m(eps: f64, n: usize, process: &StateProcess, channel: &StateChannel) -> Result<f64> {
    check_open_eps(eps)?;
    check_states(process, channel)?;
    let caps = channel.capacities();
    let nf = n as f64;
    let q = normal_quantile(eps);
    let (pi, spread) = match process {
        StateProcess::Iid { pi } => {
            let pi = pi.clone();
            let s = nf * (channel.mean_dispersion(&pi) + v_star(&pi, &caps)?);
            (pi, s)
        }
        StateProcess::BlockIid { pi, nu } => {
            let pi = pi.clone();
            let s = nf * channel.mean_dispersion(&pi) + nf.powf(2.0 - nu) * v_star(&pi, &caps)?;
            (pi, s)
        }
        StateProcess::Markov(chain) => {
            chain.require_ergodic()?;
            let pi = chain.stationary().to_vec();
            let s = nf * (channel.mean_dispersion(&pi) + v_double_star(chain, &caps)?.value);
            (pi, s)
        }
        other => {
            return Err(Error::Unsupported(format!("normal approximation for {} states", other.name())));
        }
    };
    Ok(nf * channel.mean_capacity(&pi) + spread.sqrt() * q)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditRow {
    pub n: usize,
    /// `sup_x |E Φ(√n(x−C(T))/√V(T)) − E Φ(√n(x−C(T))/√V(π))|`.
    pub gap_dispersion: f64,
    /// `sup_x |E Φ(√n(x−C(T))/√V(π)) − Φ(√n(x−C(π))/√(V(π)+V_eff))|`.
    pub gap_capacity: f64,
    pub v_eff: f64,
    pub exact: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditTable {
    pub rows: Vec<AuditRow>,
    pub slope_dispersion: Option<f64>,
    pub slope_capacity: Option<f64>,
}

/// Measure both approximation gaps over `n_grid` and fit log-log slopes.
pub fn approximation_gap_audit(
    process: &StateProcess,
    channel: &StateChannel,
    n_grid: &[usize],
    opts: &TypeOptions,
) -> Result<AuditTable> {
    check_states(process, channel)?;
    require_dispersion(channel)?;
    let caps = channel.capacities();
    let pi = match process {
        StateProcess::Iid { pi } | StateProcess::BlockIid { pi, .. } => pi.clone(),
        StateProcess::Markov(chain) => {
            chain.require_ergodic()?;
            chain.stationary().to_vec()
        }
        other => return Err(Error::Unsupported(format!("approximation audit for {} states", other.name()))),
    };
    let c_pi = channel.mean_capacity(&pi);
    let v_pi = channel.mean_dispersion(&pi);
    let mut rows = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        let nf = n as f64;
        let v_eff = match process {
            StateProcess::Iid { .. } => v_star(&pi, &caps)?,
            StateProcess::BlockIid { nu, .. } => {
                let (d, m, _) = block_layout(n, *nu);
                (m * m * (d + 1)) as f64 / nf * v_star(&pi, &caps)?
            }
            StateProcess::Markov(chain) => v_double_star_finite(chain, &caps, n)?,
            _ => unreachable!("filtered above"),
        };
        let td = type_distribution(process, n, opts)?;
        let atoms: Vec<(f64, f64, f64)> = td
            .atoms()
            .iter()
            .map(|(t, p)| {
                let f = t.fractions();
                (*p, channel.mean_capacity(&f), channel.mean_dispersion(&f))
            })
            .collect();
        let half = 5.0 * ((v_pi + v_eff) / nf).sqrt();
        let sn = nf.sqrt();
        let (mut g1, mut g2) = (0.0f64, 0.0f64);
        for i in 0..AUDIT_GRID_POINTS {
            let x = c_pi - half + 2.0 * half * i as f64 / (AUDIT_GRID_POINTS - 1) as f64;
            let mut own = 0.0;
            let mut pooled = 0.0;
            for &(p, c, v) in &atoms {
                own += p * normal_cdf(sn * (x - c) / v.sqrt());
                pooled += p * normal_cdf(sn * (x - c) / v_pi.sqrt());
            }
            let gauss = normal_cdf(sn * (x - c_pi) / (v_pi + v_eff).sqrt());
            g1 = g1.max((own - pooled).abs());
            g2 = g2.max((pooled - gauss).abs());
        }
        rows.push(AuditRow { n, gap_dispersion: g1, gap_capacity: g2, v_eff, exact: td.is_exact() });
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let g1: Vec<f64> = rows.iter().map(|r| r.gap_dispersion).collect();
    let g2: Vec<f64> = rows.iter().map(|r| r.gap_capacity).collect();
    Ok(AuditTable { slope_dispersion: fit_loglog_slope(&xs, &g1), slope_capacity: fit_loglog_slope(&xs, &g2), rows })
}
