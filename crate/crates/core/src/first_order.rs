//! Finite-n first-order functionals: the cdf of `C(T_{S^n})`, ε-capacity and
//! optimistic ε-capacity, and strong-converse verdicts.

use crate::channel::StateChannel;
use crate::error::{Error, Result};
use crate::numerics::{fit_loglog_slope, StepFunction};
use crate::state::{covariance_sum, mean_capacity_term, type_distribution, StateProcess, TypeOptions};

/// Default blocklength grid `{2^4, ..., 2^12}`.
pub fn default_n_grid() -> Vec<usize> {
    (4..=12).map(|k| 1usize << k).collect()
}

/// Right-continuous step cdf of `C(T_{S^n}) = Σ_s T(s) C_s`.
#[derive(Debug, Clone, PartialEq)]
pub struct CdfCurve {
    pub n: usize,
    pub exact: bool,
    cdf: StepFunction,
}

impl CdfCurve {
    pub fn step_function(&self) -> &StepFunction {
        &self.cdf
    }

    pub fn eval(&self, rate: f64) -> f64 {
        self.cdf.eval(rate)
    }

    /// `(R, Pr[C(T) <= R])` at every jump.
    pub fn points(&self) -> Vec<(f64, f64)> {
        self.cdf.breakpoints().iter().copied().zip(self.cdf.values().iter().copied()).collect()
    }
}

pub fn j_cdf(process: &StateProcess, channel: &StateChannel, n: usize, opts: &TypeOptions) -> Result<CdfCurve> {
    check_states(process, channel)?;
    let td = type_distribution(process, n, opts)?;
    let jumps: Vec<(f64, f64)> = td.atoms().iter().map(|(t, p)| (channel.mean_capacity(&t.fractions()), *p)).collect();
    let raw = StepFunction::from_jumps(0.0, jumps)?;
    // Clamp accumulated rounding so the top level is exactly 1.
    let values: Vec<f64> = raw.values().iter().map(|v| v.min(1.0)).collect();
    let mut values = values;
    if let Some(last) = values.last_mut() {
        if (*last - 1.0).abs() < 1e-9 {
            *last = 1.0;
        }
    }
    let cdf = StepFunction::new(0.0, raw.breakpoints().to_vec(), values)?;
    Ok(CdfCurve { n, exact: td.is_exact(), cdf })
}

pub(crate) fn check_states(process: &StateProcess, channel: &StateChannel) -> Result<()> {
    if process.state_count() != channel.state_count() {
        return Err(Error::InvalidInput(format!(
            "process has {} states, channel has {}",
            process.state_count(),
            channel.state_count()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Holds,
    Fails,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Holds => "holds",
            Verdict::Fails => "fails",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrongConverseReport {
    pub verdict: Verdict,
    pub reason: String,
    /// `(n, (1/n) Σ E[C_{S_k}])`.
    pub mean_term: Vec<(usize, f64)>,
    /// `(n, (1/n²) ΣΣ Cov[C_{S_k}, C_{S_l}])`.
    pub cov_term: Vec<(usize, f64)>,
    /// Least-squares log-log slope of `cov_term` against `n`.
    pub cov_decay_slope: Option<f64>,
}

pub fn strong_converse_check(
    process: &StateProcess,
    channel: &StateChannel,
    n_grid: &[usize],
) -> Result<StrongConverseReport> {
    check_states(process, channel)?;
    let caps = channel.capacities();
    let mut mean_term = Vec::with_capacity(n_grid.len());
    let mut cov_term = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        mean_term.push((n, mean_capacity_term(process, n, &caps)?));
        cov_term.push((n, covariance_sum(process, n, &caps)?));
    }
    let xs: Vec<f64> = cov_term.iter().map(|c| c.0 as f64).collect();
    let ys: Vec<f64> = cov_term.iter().map(|c| c.1).collect();
    let cov_decay_slope = fit_loglog_slope(&xs, &ys);
    let spread = |w: &[f64]| {
        let m: f64 = w.iter().zip(&caps).map(|(a, b)| a * b).sum();
        w.iter().zip(&caps).map(|(a, b)| a * (b - m).powi(2)).sum::<f64>()
    };
    let (verdict, reason) = match process {
        StateProcess::Iid { .. } => (Verdict::Holds, "memoryless stationary states".to_string()),
        StateProcess::BlockIid { .. } => (Verdict::Holds, "block-memoryless states with growing block count".into()),
        StateProcess::Markov(chain) if chain.is_ergodic() => (Verdict::Holds, "ergodic Markov states".into()),
        StateProcess::Markov(_) => (Verdict::Inconclusive, "Markov kernel is not ergodic".into()),
        StateProcess::Mixed { q } => {
            if spread(q) > 0.0 {
                (Verdict::Fails, "mixture over states with distinct capacities".into())
            } else {
                (Verdict::Holds, "all mixture components share one capacity".into())
            }
        }
        StateProcess::Alternating { sa, sb, .. } => {
            if caps[*sa] != caps[*sb] {
                (Verdict::Fails, "running mean oscillates between one-third and two-thirds splits".into())
            } else {
                (Verdict::Holds, "both alternating states share one capacity".into())
            }
        }
    };
    Ok(StrongConverseReport { verdict, reason, mean_term, cov_term, cov_decay_slope })
}

/// Model closed forms `(C(ε), C†(ε))`, where available.
pub fn closed_form_capacity(process: &StateProcess, caps: &[f64], eps: f64) -> Result<Option<(f64, f64)>> {
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::InvalidEpsilon(eps));
    }
    let dot = |w: &[f64]| w.iter().zip(caps).map(|(a, b)| a * b).sum::<f64>();
    let flat = |c: f64| {
        let lower = if eps < 1.0 { c } else { f64::INFINITY };
        let upper = if eps > 0.0 { c } else { f64::NEG_INFINITY };
        (lower, upper)
    };
    Ok(match process {
        StateProcess::Mixed { q } => {
            let cdf = StepFunction::from_jumps(0.0, caps.iter().copied().zip(q.iter().copied()).collect())?;
            Some((cdf.inverse_at(eps), cdf.strict_inverse_at(eps)))
        }
        StateProcess::Iid { pi } | StateProcess::BlockIid { pi, .. } => Some(flat(dot(pi))),
        StateProcess::Markov(chain) if chain.is_ergodic() => Some(flat(dot(chain.stationary()))),
        StateProcess::Markov(_) => None,
        StateProcess::Alternating { sa, sb, .. } => {
            let (c, d) = (caps[*sa].min(caps[*sb]), caps[*sa].max(caps[*sb]));
            let lower = if eps < 1.0 { 2.0 * c / 3.0 + d / 3.0 } else { f64::INFINITY };
            let upper = if eps > 0.0 { c / 3.0 + 2.0 * d / 3.0 } else { f64::NEG_INFINITY };
            Some((lower, upper))
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FirstOrderReport {
    pub eps: f64,
    pub n_grid: Vec<usize>,
    /// `sup{R | max_n Pr[C(T) <= R] <= ε}` over the grid.
    pub eps_capacity: f64,
    pub eps_capacity_closed: Option<f64>,
    /// `sup{R | min_n Pr[C(T) <= R] < ε}` over the grid.
    pub optimistic: f64,
    pub optimistic_closed: Option<f64>,
    pub exact: bool,
    pub strong_converse: StrongConverseReport,
    /// The grid envelope `max_n` of the cdfs.
    pub limsup_cdf: StepFunction,
}

pub fn eps_capacity(
    process: &StateProcess,
    channel: &StateChannel,
    eps: f64,
    n_grid: &[usize],
    opts: &TypeOptions,
) -> Result<FirstOrderReport> {
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::InvalidEpsilon(eps));
    }
    if n_grid.is_empty() {
        return Err(Error::InvalidInput("blocklength grid must be nonempty".into()));
    }
    let curves = n_grid.iter().map(|&n| j_cdf(process, channel, n, opts)).collect::<Result<Vec<_>>>()?;
    let fns: Vec<StepFunction> = curves.iter().map(|c| c.cdf.clone()).collect();
    let upper_env = StepFunction::pointwise_max(&fns)?;
    let lower_env = StepFunction::pointwise_min(&fns)?;
    let closed = closed_form_capacity(process, &channel.capacities(), eps)?;
    Ok(FirstOrderReport {
        eps,
        n_grid: n_grid.to_vec(),
        eps_capacity: upper_env.inverse_at(eps),
        eps_capacity_closed: closed.map(|c| c.0),
        optimistic: lower_env.strict_inverse_at(eps),
        optimistic_closed: closed.map(|c| c.1),
        exact: curves.iter().all(|c| c.exact),
        strong_converse: strong_converse_check(process, channel, n_grid)?,
        limsup_cdf: upper_env,
    })
}

/// Whether one input law achieves capacity on every state, in which case
/// state knowledge at the encoder is not needed for the first-order limit.
pub fn common_caid_check(channel: &StateChannel, tol: f64) -> bool {
    channel.common_caid(tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::Dmc;
    use crate::state::TypeMode;

    fn two_bsc() -> StateChannel {
        StateChannel::new(vec![Dmc::bsc(0.11).unwrap(), Dmc::bsc(0.02).unwrap()]).unwrap()
    }

    #[test]
    fn mixed_cdf_is_two_step() {
        let ch = two_bsc();
        let caps = ch.capacities();
        assert!(caps[0] < caps[1]);
        let p = StateProcess::mixed(vec![0.3, 0.7]).unwrap();
        let curve = j_cdf(&p, &ch, 33, &TypeOptions::default()).unwrap();
        assert_eq!(curve.eval(caps[0] - 1e-9), 0.0);
        assert!((curve.eval(caps[0]) - 0.3).abs() < 1e-15);
        assert!((curve.eval(caps[1] - 1e-9) - 0.3).abs() < 1e-15);
        assert_eq!(curve.eval(caps[1]), 1.0);
    }

    #[test]
    fn mixed_capacity_table() {
        let ch = two_bsc();
        let caps = ch.capacities();
        let p = StateProcess::mixed(vec![0.3, 0.7]).unwrap();
        for (eps, want, want_opt) in [(0.1, caps[0], caps[0]), (0.3, caps[1], caps[0]), (0.6, caps[1], caps[1])] {
            let r = eps_capacity(&p, &ch, eps, &[16, 64], &TypeOptions::default()).unwrap();
            assert_eq!(r.eps_capacity, want);
            assert_eq!(r.eps_capacity_closed, Some(want));
            assert_eq!(r.optimistic, want_opt);
            assert!(r.eps_capacity <= r.optimistic || eps == 0.3);
            assert_eq!(r.strong_converse.verdict, Verdict::Fails);
        }
        // At an atom level, the optimistic capacity sits one step lower.
        let r = eps_capacity(&p, &ch, 0.3, &[16], &TypeOptions::default()).unwrap();
        assert!(r.optimistic < r.eps_capacity);
    }

    #[test]
    fn iid_closed_form_and_verdict() {
        let ch = two_bsc();
        let p = StateProcess::iid(vec![0.4, 0.6]).unwrap();
        let r = eps_capacity(&p, &ch, 0.25, &[64, 256, 1024], &TypeOptions::default()).unwrap();
        let c_pi = ch.mean_capacity(&[0.4, 0.6]);
        assert_eq!(r.eps_capacity_closed, Some(c_pi));
        assert!((r.eps_capacity - c_pi).abs() < 0.02);
        assert!(r.eps_capacity <= r.optimistic + 1e-12);
        assert_eq!(r.strong_converse.verdict, Verdict::Holds);
        let slope = r.strong_converse.cov_decay_slope.unwrap();
        assert!((slope + 1.0).abs() < 1e-9);
        assert!(r.exact);
    }

    #[test]
    fn alternating_capacity() {
        let ch = two_bsc();
        let caps = ch.capacities();
        let p = StateProcess::alternating(0, 1, 2).unwrap();
        let grid: Vec<usize> = (1..=6).map(|k| (1usize << (2 * k)) - 1).collect();
        for eps in [0.0, 0.2, 0.9] {
            let r = eps_capacity(&p, &ch, eps, &grid, &TypeOptions::default()).unwrap();
            let want = (2.0 * caps[0] + caps[1]) / 3.0;
            assert!((r.eps_capacity - want).abs() < 1e-15);
            assert_eq!(r.strong_converse.verdict, Verdict::Fails);
        }
        let (_, opt) = closed_form_capacity(&p, &caps, 0.5).unwrap().unwrap();
        assert!((opt - (caps[0] + 2.0 * caps[1]) / 3.0).abs() < 1e-15);
    }

    #[test]
    fn invalid_eps() {
        let ch = two_bsc();
        let p = StateProcess::iid(vec![0.4, 0.6]).unwrap();
        assert_eq!(eps_capacity(&p, &ch, 1.5, &[4], &TypeOptions::default()), Err(Error::InvalidEpsilon(1.5)));
    }

    #[test]
    fn iid_cdf_matches_sampled_within_dkw_band() {
        let ch = two_bsc();
        let p = StateProcess::iid(vec![0.4, 0.6]).unwrap();
        let exact = j_cdf(&p, &ch, 50, &TypeOptions::default()).unwrap();
        let mc_opts = TypeOptions { mode: TypeMode::MonteCarlo, budget: 100_000, seed: 9, ..Default::default() };
        let mc = j_cdf(&p, &ch, 50, &mc_opts).unwrap();
        // DKW at 99%: sqrt(ln(2/0.01) / (2 N)).
        let band = ((2.0f64 / 0.01).ln() / 200_000.0).sqrt();
        for (r, _) in exact.points() {
            assert!((exact.eval(r) - mc.eval(r)).abs() <= band);
        }
    }

    #[test]
    fn non_ergodic_markov_is_inconclusive() {
        let ch = two_bsc();
        let chain = crate::state::MarkovChain::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![0.5, 0.5]).unwrap();
        let p = StateProcess::Markov(chain);
        let r = strong_converse_check(&p, &ch, &[16, 32]).unwrap();
        assert_eq!(r.verdict, Verdict::Inconclusive);
        assert_eq!(closed_form_capacity(&p, &ch.capacities(), 0.1).unwrap(), None);
    }
}
