//! Finite-blocklength bounds: the state-dependent Feinstein achievability
//! bound, the hypothesis-testing divergence, the information-spectrum
//! converse over conditional types, and the explicit Gaussian direct bound.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channel::{check_distribution, StateChannel};
use crate::error::{Error, Result};
use crate::first_order::check_states;
use crate::numerics::{normal_cdf, wilson_interval, StepFunction};
use crate::state::{sample_states, type_distribution, StateProcess, StateType, TypeMode, TypeOptions};

pub const DEFAULT_ENUM_CAP: f64 = 1e7;
pub const DEFAULT_TYPE_ENUM_CAP: f64 = 1e6;
pub const DPI_TOL: f64 = 1e-9;
/// Relative slack when comparing a log-likelihood sum against a threshold.
pub const TIE_SLACK: f64 = 1e-12;
const Z_99: f64 = 2.5758293035489004;

fn at_most(v: f64, x: f64) -> bool {
    v <= x + TIE_SLACK * x.abs().max(1.0)
}

/// Finite discrete law on the extended reals, atoms sorted and merged.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteLaw {
    atoms: Vec<(f64, f64)>,
}

impl DiscreteLaw {
    pub fn point(v: f64) -> Self {
        Self { atoms: vec![(v, 1.0)] }
    }

    pub fn from_atoms(mut atoms: Vec<(f64, f64)>) -> Self {
        atoms.retain(|a| a.1 > 0.0);
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
        for (v, p) in atoms {
            match merged.last_mut() {
                Some(last) if last.0 == v || (v.is_finite() && (v - last.0).abs() <= TIE_SLACK * v.abs().max(1.0)) => {
                    last.1 += p;
                }
                _ => merged.push((v, p)),
            }
        }
        Self { atoms: merged }
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn convolve(&self, other: &Self) -> Self {
        let mut out = Vec::with_capacity(self.atoms.len() * other.atoms.len());
        for &(a, p) in &self.atoms {
            for &(b, q) in &other.atoms {
                out.push((a + b, p * q));
            }
        }
        Self::from_atoms(out)
    }

    /// Law of the sum of `count` independent copies.
    pub fn power(&self, count: u32) -> Self {
        let mut acc = Self::point(0.0);
        let mut base = self.clone();
        let mut c = count;
        while c > 0 {
            if c & 1 == 1 {
                acc = acc.convolve(&base);
            }
            c >>= 1;
            if c > 0 {
                base = base.convolve(&base);
            }
        }
        acc
    }

    pub fn mixture(parts: &[(f64, DiscreteLaw)]) -> Self {
        Self::from_atoms(parts.iter().flat_map(|(w, l)| l.atoms.iter().map(move |&(v, p)| (v, w * p))).collect())
    }

    pub fn scale_values(&self, factor: f64) -> Self {
        Self { atoms: self.atoms.iter().map(|&(v, p)| (v * factor, p)).collect() }
    }

    /// `Pr[V <= x]`, ties resolved with [`TIE_SLACK`].
    pub fn cdf(&self, x: f64) -> f64 {
        self.atoms.iter().take_while(|a| at_most(a.0, x)).map(|a| a.1).sum::<f64>().min(1.0)
    }

    /// The cdf as a right-continuous step function over the finite atoms.
    pub fn step(&self) -> StepFunction {
        let mut below = 0.0;
        let mut jumps = Vec::with_capacity(self.atoms.len());
        for &(v, p) in &self.atoms {
            if v == f64::NEG_INFINITY {
                below += p;
            } else if v.is_finite() {
                jumps.push((v, p));
            }
        }
        StepFunction::from_jumps(below, jumps).expect("finite sorted atoms")
    }
}

/// Input law `P(·|s)` for every state.
#[derive(Debug, Clone, PartialEq)]
pub struct InputPolicy {
    per_state: Vec<Vec<f64>>,
}

impl InputPolicy {
    pub fn new(per_state: Vec<Vec<f64>>) -> Result<Self> {
        for (s, p) in per_state.iter().enumerate() {
            check_distribution(p, &format!("input policy for state {s}"))?;
        }
        Ok(Self { per_state })
    }

    pub fn capacity_achieving(channel: &StateChannel) -> Self {
        Self { per_state: channel.summaries().iter().map(|s| s.caid.probs().to_vec()).collect() }
    }

    pub fn state(&self, s: usize) -> &[f64] {
        &self.per_state[s]
    }

    fn check(&self, channel: &StateChannel) -> Result<()> {
        if self.per_state.len() != channel.state_count()
            || self.per_state.iter().any(|p| p.len() != channel.input_size())
        {
            return Err(Error::InvalidInput("input policy does not match channel dimensions".into()));
        }
        Ok(())
    }
}

fn output_law(channel: &StateChannel, s: usize, p: &[f64]) -> Vec<f64> {
    let mut q = vec![0.0; channel.output_size()];
    for (px, row) in p.iter().zip(channel.channel(s).rows()) {
        for (qy, w) in q.iter_mut().zip(row) {
            *qy += px * w;
        }
    }
    q
}

fn log_ratio(w: f64, q: f64) -> f64 {
    if q == 0.0 {
        f64::INFINITY
    } else {
        (w / q).log2()
    }
}

/// Single-letter law of `i(X;Y|s) = log₂ W_s(Y|X) / P_sW_s(Y)` under `P_s × W_s`.
fn density_law(channel: &StateChannel, policy: &InputPolicy, s: usize) -> DiscreteLaw {
    let p = policy.state(s);
    let q = output_law(channel, s, p);
    let mut atoms = Vec::new();
    for (x, row) in channel.channel(s).rows().iter().enumerate() {
        for (y, &w) in row.iter().enumerate() {
            if p[x] > 0.0 && w > 0.0 {
                atoms.push((log_ratio(w, q[y]), p[x] * w));
            }
        }
    }
    DiscreteLaw::from_atoms(atoms)
}

/// Options shared by the enumeration-or-sampling bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundOptions {
    pub mode: TypeMode,
    /// Joint-atom cap `(|X||Y||S|)^n` for exact evaluation.
    pub enum_cap: f64,
    pub budget: u64,
    pub seed: u64,
}

impl Default for BoundOptions {
    fn default() -> Self {
        Self { mode: TypeMode::Auto, enum_cap: DEFAULT_ENUM_CAP, budget: 1_000_000, seed: 0 }
    }
}

fn joint_atoms(channel: &StateChannel, n: usize) -> f64 {
    ((channel.input_size() * channel.output_size() * channel.state_count()) as f64).powi(n as i32)
}

/// Exact law of `Σ_k i(X_k;Y_k|S_k)` at blocklength `n`.
pub fn information_sum_law(
    channel: &StateChannel,
    process: &StateProcess,
    policy: &InputPolicy,
    n: usize,
    enum_cap: f64,
) -> Result<DiscreteLaw> {
    check_states(process, channel)?;
    policy.check(channel)?;
    let needed = joint_atoms(channel, n);
    if needed > enum_cap {
        return Err(Error::BudgetExceeded { needed, cap: enum_cap });
    }
    let types = type_distribution(process, n, &TypeOptions { mode: TypeMode::Exact, ..Default::default() })?;
    let per_state: Vec<DiscreteLaw> = (0..channel.state_count()).map(|s| density_law(channel, policy, s)).collect();
    let parts: Vec<(f64, DiscreteLaw)> = types
        .atoms()
        .iter()
        .map(|(t, p)| {
            let law = t.counts().iter().zip(&per_state).fold(DiscreteLaw::point(0.0), |acc, (&c, l)| {
                if c == 0 {
                    acc
                } else {
                    acc.convolve(&l.power(c))
                }
            });
            (*p, law)
        })
        .collect();
    Ok(DiscreteLaw::mixture(&parts))
}

/// A probability with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub exact: bool,
    /// 99% interval for sampled estimates.
    pub interval: Option<(f64, f64)>,
    pub samples: Option<u64>,
}

/// Feinstein right-hand side `Pr[Σ i <= log M + η] + 2^{−η}`.
#[allow(clippy::too_many_arguments)]
pub fn feinstein_rhs(
    channel: &StateChannel,
    process: &StateProcess,
    policy: &InputPolicy,
    n: usize,
    log_m: f64,
    eta: f64,
    opts: &BoundOptions,
) -> Result<Estimate> {
    if !(eta > 0.0) {
        return Err(Error::InvalidInput("eta must be positive".into()));
    }
    check_states(process, channel)?;
    policy.check(channel)?;
    let tail = (-eta).exp2();
    let exact_allowed = opts.mode != TypeMode::MonteCarlo;
    if exact_allowed {
        match information_sum_law(channel, process, policy, n, opts.enum_cap) {
            Ok(law) => {
                return Ok(Estimate { value: law.cdf(log_m + eta) + tail, exact: true, interval: None, samples: None })
            }
            Err(e @ Error::BudgetExceeded { .. }) if opts.mode == TypeMode::Exact => return Err(e),
            Err(Error::BudgetExceeded { .. }) | Err(Error::Unsupported(_)) if opts.mode == TypeMode::Auto => {}
            Err(e) => return Err(e),
        }
    }
    let hits = sample_density_hits(channel, process, policy, n, log_m + eta, opts.budget, opts.seed)?;
    let p = hits as f64 / opts.budget as f64;
    let (lo, hi) = wilson_interval(hits, opts.budget, Z_99);
    Ok(Estimate { value: p + tail, exact: false, interval: Some((lo + tail, hi + tail)), samples: Some(opts.budget) })
}

fn sample_density_hits(
    channel: &StateChannel,
    process: &StateProcess,
    policy: &InputPolicy,
    n: usize,
    threshold: f64,
    budget: u64,
    seed: u64,
) -> Result<u64> {
    let sums = sample_information_sums(channel, process, policy, n, budget, seed)?;
    Ok(sums.iter().filter(|&&v| at_most(v, threshold)).count() as u64)
}

fn sample_information_sums(
    channel: &StateChannel,
    process: &StateProcess,
    policy: &InputPolicy,
    n: usize,
    budget: u64,
    seed: u64,
) -> Result<Vec<f64>> {
    let outputs: Vec<Vec<f64>> = (0..channel.state_count()).map(|s| output_law(channel, s, policy.state(s))).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sums = Vec::with_capacity(budget as usize);
    for _ in 0..budget {
        let states = sample_states(process, n, rng.random())?;
        let mut acc = 0.0;
        for &s in &states {
            let x = draw(&mut rng, policy.state(s));
            let row = &channel.channel(s).rows()[x];
            let y = draw(&mut rng, row);
            acc += log_ratio(row[y], outputs[s][y]);
        }
        sums.push(acc);
    }
    Ok(sums)
}

/// Empirical law of `Σ_k i(X_k;Y_k|S_k)` from `budget` sampled blocks.
pub fn sampled_information_sum_law(
    channel: &StateChannel,
    process: &StateProcess,
    policy: &InputPolicy,
    n: usize,
    budget: u64,
    seed: u64,
) -> Result<DiscreteLaw> {
    check_states(process, channel)?;
    policy.check(channel)?;
    if budget == 0 {
        return Err(Error::InvalidInput("sample budget must be positive".into()));
    }
    let w = 1.0 / budget as f64;
    let sums = sample_information_sums(channel, process, policy, n, budget, seed)?;
    Ok(DiscreteLaw::from_atoms(sums.into_iter().map(|v| (v, w)).collect()))
}

fn draw<R: Rng>(rng: &mut R, p: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &v) in p.iter().enumerate() {
        acc += v;
        if u < acc {
            return i;
        }
    }
    p.iter().rposition(|&v| v > 0.0).unwrap_or(0)
}

/// `inf_{η>0} Pr[Σ i <= L + η] + 2^{−η}` for a given law, approached just
/// below each atom above `L`.
pub fn feinstein_best(law: &DiscreteLaw, log_m: f64) -> f64 {
    let mut best = 1.0f64;
    let mut below = 0.0;
    for &(v, p) in law.atoms() {
        if v > log_m && v.is_finite() {
            best = best.min(below + (log_m - v).exp2());
        }
        below += p;
    }
    best.min(1.0)
}

/// Largest `log₂ M` with `inf_η` Feinstein RHS at most `eps`, in bits per block.
pub fn feinstein_log_m(law: &DiscreteLaw, eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidEpsilon(eps));
    }
    let mut best = f64::NEG_INFINITY;
    let mut below = 0.0;
    for &(v, p) in law.atoms() {
        if below < eps && v.is_finite() {
            best = best.max(v + (eps - below).log2());
        }
        below += p;
    }
    Ok(best)
}

/// Randomized Neyman–Pearson test: reject below `threshold` (bits of
/// `log P/Q`), accept above, accept with probability `randomization` on it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HypothesisTest {
    pub threshold: f64,
    pub randomization: f64,
}

/// Minimum `Q[ξ]` over tests with `P[ξ] >= 1 − ε`, with the optimal test.
pub fn neyman_pearson(p: &[f64], q: &[f64], eps: f64) -> Result<(f64, HypothesisTest)> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidEpsilon(eps));
    }
    if p.len() != q.len() {
        return Err(Error::InvalidInput("distributions differ in length".into()));
    }
    check_distribution(p, "P")?;
    check_distribution(q, "Q")?;
    let mut order: Vec<usize> = (0..p.len()).filter(|&i| p[i] > 0.0).collect();
    let ratio = |i: usize| if q[i] == 0.0 { f64::INFINITY } else { p[i] / q[i] };
    order.sort_by(|&a, &b| ratio(b).total_cmp(&ratio(a)));
    let target = 1.0 - eps;
    let (mut p_acc, mut q_acc) = (0.0, 0.0);
    for &i in &order {
        if p_acc + p[i] >= target {
            let gamma = ((target - p_acc) / p[i]).clamp(0.0, 1.0);
            let threshold = ratio(i).log2();
            return Ok((q_acc + gamma * q[i], HypothesisTest { threshold, randomization: gamma }));
        }
        p_acc += p[i];
        q_acc += q[i];
    }
    // Rounding left the target just out of reach: the last atom is taken whole.
    let last = *order.last().expect("P has positive mass");
    Ok((q_acc, HypothesisTest { threshold: ratio(last).log2(), randomization: 1.0 }))
}

/// `D_h^ε(P‖Q) = −log₂(β_{1−ε}(P, Q) / (1 − ε))`, bits.
pub fn dh_divergence(p: &[f64], q: &[f64], eps: f64) -> Result<f64> {
    let (beta, _) = neyman_pearson(p, q, eps)?;
    if beta <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok((-(beta / (1.0 - eps)).log2()).max(0.0))
}

/// Push a law through a row-stochastic kernel.
pub fn push_forward(p: &[f64], kernel: &[Vec<f64>]) -> Vec<f64> {
    let width = kernel.first().map_or(0, Vec::len);
    let mut out = vec![0.0; width];
    for (pi, row) in p.iter().zip(kernel) {
        for (o, k) in out.iter_mut().zip(row) {
            *o += pi * k;
        }
    }
    out
}

/// `D_h^ε(P‖Q) >= D_h^ε(PK‖QK)` within [`DPI_TOL`].
pub fn dpi_check(p: &[f64], q: &[f64], kernel: &[Vec<f64>], eps: f64) -> Result<bool> {
    if kernel.len() != p.len() {
        return Err(Error::InvalidInput("kernel rows must match the input support".into()));
    }
    for (i, row) in kernel.iter().enumerate() {
        check_distribution(row, &format!("kernel row {i}"))?;
    }
    let before = dh_divergence(p, q, eps)?;
    let pk = renormalize(push_forward(p, kernel));
    let qk = renormalize(push_forward(q, kernel));
    let after = dh_divergence(&pk, &qk, eps)?;
    Ok(before == f64::INFINITY || after <= before + DPI_TOL)
}

fn renormalize(mut v: Vec<f64>) -> Vec<f64> {
    let z: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= z);
    v
}

/// Conditional input counts `N(x, s)`, rows indexed by state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConditionalType {
    counts: Vec<Vec<u32>>,
}

impl ConditionalType {
    pub fn new(counts: Vec<Vec<u32>>) -> Self {
        Self { counts }
    }

    pub fn counts(&self) -> &[Vec<u32>] {
        &self.counts
    }

    fn check(&self, t: &StateType, input_size: usize) -> Result<()> {
        if self.counts.len() != t.counts().len() || self.counts.iter().any(|r| r.len() != input_size) {
            return Err(Error::InconsistentType("dimension mismatch".into()));
        }
        for (s, (row, &ts)) in self.counts.iter().zip(t.counts()).enumerate() {
            if row.iter().sum::<u32>() != ts {
                return Err(Error::InconsistentType(format!("row {s} does not sum to the state count {ts}")));
            }
        }
        Ok(())
    }

    /// Every conditional type consistent with `t`.
    pub fn enumerate(t: &StateType, input_size: usize) -> Vec<ConditionalType> {
        let mut rows_per_state: Vec<Vec<Vec<u32>>> = Vec::new();
        for &ts in t.counts() {
            let mut rows = Vec::new();
            compositions(ts, input_size, &mut vec![0; input_size], 0, &mut rows);
            rows_per_state.push(rows);
        }
        let mut out = vec![Vec::new()];
        for rows in rows_per_state {
            let mut next = Vec::with_capacity(out.len() * rows.len());
            for prefix in &out {
                for r in &rows {
                    let mut v: Vec<Vec<u32>> = prefix.clone();
                    v.push(r.clone());
                    next.push(v);
                }
            }
            out = next;
        }
        out.into_iter().map(ConditionalType::new).collect()
    }
}

fn compositions(total: u32, parts: usize, cur: &mut Vec<u32>, idx: usize, out: &mut Vec<Vec<u32>>) {
    if idx + 1 == parts {
        cur[idx] = total;
        out.push(cur.clone());
        return;
    }
    for c in 0..=total {
        cur[idx] = c;
        compositions(total - c, parts, cur, idx + 1, out);
    }
}

/// Reference output law in `j_Q = log₂ W / Q`.
#[derive(Debug, Clone, PartialEq)]
pub enum OutputReference {
    /// `Q_s = Σ_x (N(x,s)/t(s)) W_s(·|x)`, the law induced by the conditional type.
    ConditionalType,
    /// A fixed per-state output law.
    Fixed(Vec<Vec<f64>>),
}

/// Law of `Σ_k j_Q(x_k; Y_k | s_k)` for sequences of joint type `(t, v)`.
fn spectrum_law(
    channel: &StateChannel,
    t: &StateType,
    v: &ConditionalType,
    reference: &OutputReference,
) -> DiscreteLaw {
    let mut law = DiscreteLaw::point(0.0);
    for (s, (&ts, row)) in t.counts().iter().zip(v.counts()).enumerate() {
        if ts == 0 {
            continue;
        }
        let w = channel.channel(s);
        let q: Vec<f64> = match reference {
            OutputReference::ConditionalType => {
                let p: Vec<f64> = row.iter().map(|&c| f64::from(c) / f64::from(ts)).collect();
                output_law(channel, s, &p)
            }
            OutputReference::Fixed(qs) => qs[s].clone(),
        };
        for (x, &c) in row.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let letter = DiscreteLaw::from_atoms(
                w.rows()[x]
                    .iter()
                    .zip(&q)
                    .filter(|(wy, _)| **wy > 0.0)
                    .map(|(&wy, &qy)| (log_ratio(wy, qy), wy))
                    .collect(),
            );
            law = law.convolve(&letter.power(c));
        }
    }
    law
}

/// `Ξ(R; n, t) = Pr[(1/n) Σ_k j_Q(X_k;Y_k|S_k) <= R]` for sequences of
/// state type `t` and conditional type `v`.
pub fn xi_cdf(
    channel: &StateChannel,
    t: &StateType,
    v: &ConditionalType,
    rate: f64,
    reference: &OutputReference,
) -> Result<f64> {
    v.check(t, channel.input_size())?;
    if t.counts().len() != channel.state_count() {
        return Err(Error::InconsistentType("state type length differs from state count".into()));
    }
    let n = t.n() as f64;
    Ok(spectrum_law(channel, t, v, reference).cdf(rate * n))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConverseReport {
    pub n: usize,
    pub eps: f64,
    pub delta: f64,
    /// Bound with the type-averaged output law, bits per block.
    pub log_m_type_average: f64,
    /// Bound with the per-state capacity-achieving output law, bits per block.
    pub log_m_caid_output: f64,
    pub log_m: f64,
}

/// Information-spectrum converse on `log₂ M*(ε)` with the supremum over
/// encoders taken exactly over conditional types.
pub fn spectrum_converse_log_m(
    channel: &StateChannel,
    process: &StateProcess,
    n: usize,
    eps: f64,
    delta: Option<f64>,
    type_enum_cap: f64,
) -> Result<ConverseReport> {
    check_states(process, channel)?;
    if n == 0 {
        return Err(Error::InvalidInput("blocklength must be positive".into()));
    }
    let delta = delta.unwrap_or(1.0 / (n as f64).sqrt());
    if !(eps > 0.0 && delta > 0.0 && eps + delta < 1.0) {
        return Err(Error::InvalidInput(format!("need eps > 0, delta > 0 and eps + delta < 1 (got {eps}, {delta})")));
    }
    let (nx, ns) = (channel.input_size(), channel.state_count());
    let cond_types = ((n + 1) as f64).powi((nx * ns) as i32);
    if cond_types > type_enum_cap {
        return Err(Error::EnumerationTooLarge { needed: cond_types, cap: type_enum_cap });
    }
    let types = type_distribution(process, n, &TypeOptions { mode: TypeMode::Exact, ..Default::default() })?;
    let caid_outputs: Vec<Vec<f64>> =
        (0..ns).map(|s| output_law(channel, s, channel.summaries()[s].caid.probs())).collect();
    let level = eps + delta;
    let mut bounds = [0.0f64; 2];
    for (slot, reference) in [OutputReference::ConditionalType, OutputReference::Fixed(caid_outputs)].iter().enumerate()
    {
        // g(R) = Σ_t P(t) min_v Pr[Σ j <= R]; its inverse at ε + δ bounds log M.
        let mut parts: Vec<(f64, StepFunction)> = Vec::with_capacity(types.atoms().len());
        for (t, p) in types.atoms() {
            let cdfs: Vec<StepFunction> = ConditionalType::enumerate(t, nx)
                .iter()
                .map(|v| spectrum_law(channel, t, v, reference).step())
                .collect();
            parts.push((*p, StepFunction::pointwise_min(&cdfs)?));
        }
        let g = weighted_sum(&parts)?;
        let inv = g.inverse_at(level);
        let penalty = match reference {
            OutputReference::ConditionalType => (nx * ns) as f64 * ((n + 1) as f64).log2(),
            OutputReference::Fixed(_) => 0.0,
        };
        bounds[slot] = inv + penalty - delta.log2();
    }
    Ok(ConverseReport {
        n,
        eps,
        delta,
        log_m_type_average: bounds[0],
        log_m_caid_output: bounds[1],
        log_m: bounds[0].min(bounds[1]),
    })
}

fn weighted_sum(parts: &[(f64, StepFunction)]) -> Result<StepFunction> {
    let mut xs: Vec<f64> = parts.iter().flat_map(|(_, f)| f.breakpoints().iter().copied()).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let below: f64 = parts.iter().map(|(w, f)| w * f.below()).sum();
    let mut values = Vec::with_capacity(xs.len());
    let mut prev = below;
    for &x in &xs {
        let v = parts.iter().map(|(w, f)| w * f.eval(x)).sum::<f64>().max(prev);
        values.push(v);
        prev = v;
    }
    StepFunction::new(below, xs, values)
}

/// The explicit finite-n direct bound and its three terms.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectBound {
    pub gaussian_term: f64,
    pub log_term: f64,
    pub berry_esseen_term: f64,
    pub unclipped: f64,
    /// Sum clipped to `[0, 1]`.
    pub value: f64,
    pub exact: bool,
}

/// `E[Φ(√n(R − C(T))/√V(T))] + D₁ log₂ n/√n + (B + 1)/√n`.
pub fn prop3_direct_rhs(
    channel: &StateChannel,
    process: &StateProcess,
    n: usize,
    rate: f64,
    opts: &TypeOptions,
) -> Result<DirectBound> {
    check_states(process, channel)?;
    if !(channel.v_min() > 0.0) {
        return Err(Error::DegenerateDispersion { state: 0, value: channel.v_min(), floor: 0.0 });
    }
    if n == 0 {
        return Err(Error::InvalidInput("blocklength must be positive".into()));
    }
    let types = type_distribution(process, n, opts)?;
    let sn = (n as f64).sqrt();
    let gaussian_term =
        types.expect(|t| normal_cdf(sn * (rate - channel.mean_capacity(t)) / channel.mean_dispersion(t).sqrt()));
    let log_term = channel.d1_constant() * (n as f64).log2() / sn;
    let berry_esseen_term = (channel.be_constant() + 1.0) / sn;
    let unclipped = gaussian_term + log_term + berry_esseen_term;
    Ok(DirectBound {
        gaussian_term,
        log_term,
        berry_esseen_term,
        unclipped,
        value: unclipped.clamp(0.0, 1.0),
        exact: types.is_exact(),
    })
}

/// Average ML error of a random code with `m` codewords drawn from the input
/// policy given the state sequence, known at both ends. Ties are broken
/// uniformly at random.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomCodingEstimate {
    pub error: f64,
    pub std_error: f64,
    pub codebooks: u64,
    pub codewords: usize,
}

pub fn random_coding_error(
    channel: &StateChannel,
    process: &StateProcess,
    policy: &InputPolicy,
    n: usize,
    codewords: usize,
    codebooks: u64,
    seed: u64,
) -> Result<RandomCodingEstimate> {
    check_states(process, channel)?;
    policy.check(channel)?;
    if codewords == 0 || codebooks < 2 || n == 0 {
        return Err(Error::InvalidInput("need n >= 1, at least one codeword and two codebooks".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    let mut book = vec![0usize; codewords * n];
    for _ in 0..codebooks {
        let states = sample_states(process, n, rng.random())?;
        for m in 0..codewords {
            for (k, &s) in states.iter().enumerate() {
                book[m * n + k] = draw(&mut rng, policy.state(s));
            }
        }
        let y: Vec<usize> =
            states.iter().enumerate().map(|(k, &s)| draw(&mut rng, &channel.channel(s).rows()[book[k]])).collect();
        let loglik = |m: usize| -> f64 {
            states.iter().enumerate().map(|(k, &s)| channel.channel(s).rows()[book[m * n + k]][y[k]].ln()).sum()
        };
        let sent = loglik(0);
        let mut ties = 1usize;
        let mut beaten = false;
        for m in 1..codewords {
            let l = loglik(m);
            if l > sent {
                beaten = true;
                break;
            }
            if l == sent {
                ties += 1;
            }
        }
        let err = if beaten { 1.0 } else { 1.0 - 1.0 / ties as f64 };
        sum += err;
        sum_sq += err * err;
    }
    let b = codebooks as f64;
    let mean = sum / b;
    let var = ((sum_sq / b) - mean * mean).max(0.0) * b / (b - 1.0);
    Ok(RandomCodingEstimate { error: mean, std_error: (var / b).sqrt(), codebooks, codewords })
}
