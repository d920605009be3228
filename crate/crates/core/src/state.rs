//! State-process models, the law of the empirical state type, and the
//! covariance quantities that govern the spread of `(1/n) Σ C_{S_k}`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

use crate::channel::check_distribution;
use crate::error::{Error, Result};
use crate::numerics::ln_multinomial;

pub const DEFAULT_MARKOV_CAP_BINARY: usize = 512;
pub const DEFAULT_MARKOV_CAP_TERNARY: usize = 128;
pub const DEFAULT_MAX_ATOMS: usize = 2_000_000;
pub const SERIES_MAX_TERMS: usize = 1_000_000;
pub const SERIES_REL_STOP: f64 = 1e-14;

/// A time-homogeneous Markov chain on the state alphabet.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovChain {
    kernel: Vec<Vec<f64>>,
    init: Vec<f64>,
    stationary: Vec<f64>,
    irreducible: bool,
    aperiodic: bool,
}

impl MarkovChain {
    pub fn new(kernel: Vec<Vec<f64>>, init: Vec<f64>) -> Result<Self> {
        let k = kernel.len();
        if k == 0 {
            return Err(Error::InvalidModel("empty Markov kernel".into()));
        }
        for (s, row) in kernel.iter().enumerate() {
            if row.len() != k {
                return Err(Error::InvalidModel("Markov kernel must be square".into()));
            }
            check_distribution(row, &format!("kernel row {s}")).map_err(to_model_err)?;
        }
        if init.len() != k {
            return Err(Error::InvalidModel("initial law has wrong length".into()));
        }
        check_distribution(&init, "initial law").map_err(to_model_err)?;
        let (irreducible, aperiodic) = ergodicity_flags(&kernel);
        let stationary = if irreducible { stationary_law(&kernel)? } else { cesaro_limit(&kernel, &init) };
        Ok(Self { kernel, init, stationary, irreducible, aperiodic })
    }

    /// Chain started from its stationary law. Requires irreducibility.
    pub fn stationary_start(kernel: Vec<Vec<f64>>) -> Result<Self> {
        let k = kernel.len();
        let probe = Self::new(kernel, vec![1.0 / k.max(1) as f64; k])?;
        if !probe.irreducible {
            return Err(Error::NotErgodic { irreducible: false, aperiodic: probe.aperiodic });
        }
        let init = probe.stationary.clone();
        Ok(Self { init, ..probe })
    }

    /// Symmetric two-state chain with flip probability `tau`.
    pub fn gilbert_elliott(tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau <= 1.0) {
            return Err(Error::InvalidModel("flip probability must lie in (0, 1]".into()));
        }
        Self::stationary_start(vec![vec![1.0 - tau, tau], vec![tau, 1.0 - tau]])
    }

    pub fn kernel(&self) -> &[Vec<f64>] {
        &self.kernel
    }

    pub fn init(&self) -> &[f64] {
        &self.init
    }

    /// Stationary law; for a reducible chain, the Cesàro limit from `init`.
    pub fn stationary(&self) -> &[f64] {
        &self.stationary
    }

    pub fn state_count(&self) -> usize {
        self.kernel.len()
    }

    pub fn irreducible(&self) -> bool {
        self.irreducible
    }

    pub fn aperiodic(&self) -> bool {
        self.aperiodic
    }

    pub fn is_ergodic(&self) -> bool {
        self.irreducible && self.aperiodic
    }

    pub fn require_ergodic(&self) -> Result<()> {
        if self.is_ergodic() {
            Ok(())
        } else {
            Err(Error::NotErgodic { irreducible: self.irreducible, aperiodic: self.aperiodic })
        }
    }

    pub fn starts_stationary(&self) -> bool {
        self.init.iter().zip(&self.stationary).all(|(a, b)| (a - b).abs() <= 1e-12)
    }

    fn matrix(&self) -> DMatrix<f64> {
        let k = self.state_count();
        DMatrix::from_fn(k, k, |i, j| self.kernel[i][j])
    }

    /// `v ↦ M v` for a column vector.
    fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.kernel.iter().map(|row| row.iter().zip(v).map(|(m, x)| m * x).sum()).collect()
    }

    /// `p ↦ p M` for a row vector.
    fn step_law(&self, p: &[f64]) -> Vec<f64> {
        let k = self.state_count();
        let mut out = vec![0.0; k];
        for (ps, row) in p.iter().zip(&self.kernel) {
            if *ps != 0.0 {
                for (o, m) in out.iter_mut().zip(row) {
                    *o += ps * m;
                }
            }
        }
        out
    }

    /// Modulus of the second-largest eigenvalue.
    pub fn spectral_radius_second(&self) -> f64 {
        let mut mods: Vec<f64> = self.matrix().complex_eigenvalues().iter().map(|z| z.norm()).collect();
        mods.sort_by(|a, b| b.total_cmp(a));
        mods.get(1).copied().unwrap_or(0.0)
    }

    /// The row-stochastic matrix `Π = U diag(1, (1+λ)/(1−λ), ...) U⁻¹` built
    /// from a right-eigenvector basis of the kernel.
    pub fn fundamental_kernel(&self) -> Result<Vec<Vec<f64>>> {
        self.require_ergodic()?;
        let pi = eigen_fundamental(&self.matrix())?;
        Ok((0..pi.nrows()).map(|i| (0..pi.ncols()).map(|j| pi[(i, j)]).collect()).collect())
    }
}

fn to_model_err(e: Error) -> Error {
    match e {
        Error::InvalidInput(m) => Error::InvalidModel(m),
        other => other,
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

// Irreducibility from the reachability closure; aperiodicity from the gcd of
// cycle lengths inside every closed communicating class.
#[allow(clippy::needless_range_loop)]
fn ergodicity_flags(kernel: &[Vec<f64>]) -> (bool, bool) {
    let k = kernel.len();
    let mut reach: Vec<Vec<bool>> = kernel.iter().map(|r| r.iter().map(|&p| p > 0.0).collect()).collect();
    for m in 0..k {
        for i in 0..k {
            if reach[i][m] {
                for j in 0..k {
                    if reach[m][j] {
                        reach[i][j] = true;
                    }
                }
            }
        }
    }
    let irreducible = (0..k).all(|i| (0..k).all(|j| i == j || reach[i][j])) && (k > 1 || kernel[0][0] > 0.0);
    let mut visited = vec![false; k];
    let mut aperiodic = true;
    for root in 0..k {
        if visited[root] {
            continue;
        }
        let class: Vec<usize> = (0..k).filter(|&j| j == root || (reach[root][j] && reach[j][root])).collect();
        class.iter().for_each(|&j| visited[j] = true);
        let closed = class.iter().all(|&i| (0..k).all(|j| kernel[i][j] == 0.0 || class.contains(&j)));
        if !closed {
            continue;
        }
        let mut level = vec![usize::MAX; k];
        level[root] = 0;
        let mut queue = std::collections::VecDeque::from([root]);
        let mut period = 0usize;
        while let Some(u) = queue.pop_front() {
            for &v in &class {
                if kernel[u][v] > 0.0 {
                    if level[v] == usize::MAX {
                        level[v] = level[u] + 1;
                        queue.push_back(v);
                    } else {
                        period = gcd(period, (level[u] + 1).abs_diff(level[v]));
                    }
                }
            }
        }
        if period != 1 {
            aperiodic = false;
        }
    }
    (irreducible, aperiodic)
}

fn stationary_law(kernel: &[Vec<f64>]) -> Result<Vec<f64>> {
    let k = kernel.len();
    // Solve π(M − I) = 0 with the last equation replaced by Σπ = 1.
    let mut a = DMatrix::from_fn(k, k, |i, j| kernel[j][i] - if i == j { 1.0 } else { 0.0 });
    let mut b = nalgebra::DVector::zeros(k);
    for j in 0..k {
        a[(k - 1, j)] = 1.0;
    }
    b[k - 1] = 1.0;
    let sol = a.lu().solve(&b).ok_or_else(|| Error::InvalidModel("stationary law is not unique".into()))?;
    let mut pi: Vec<f64> = sol.iter().map(|v| v.max(0.0)).collect();
    let z: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|v| *v /= z);
    Ok(pi)
}

fn cesaro_limit(kernel: &[Vec<f64>], init: &[f64]) -> Vec<f64> {
    const STEPS: usize = 20_000;
    let k = kernel.len();
    let mut p = init.to_vec();
    let mut avg = vec![0.0; k];
    for _ in 0..STEPS {
        avg.iter_mut().zip(&p).for_each(|(a, v)| *a += v / STEPS as f64);
        let mut next = vec![0.0; k];
        for (ps, row) in p.iter().zip(kernel) {
            for (n, m) in next.iter_mut().zip(row) {
                *n += ps * m;
            }
        }
        p = next;
    }
    avg
}

fn eigen_fundamental(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let k = m.nrows();
    if k == 1 {
        return Ok(DMatrix::from_element(1, 1, 1.0));
    }
    let eig: Vec<Complex64> = m.complex_eigenvalues().iter().copied().collect();
    let mc: DMatrix<Complex64> = m.map(|v| Complex64::new(v, 0.0));
    let mut used = vec![false; k];
    let mut vectors: Vec<nalgebra::DVector<Complex64>> = Vec::with_capacity(k);
    let mut lambdas: Vec<Complex64> = Vec::with_capacity(k);
    for i in 0..k {
        if used[i] {
            continue;
        }
        let cluster: Vec<usize> = (i..k).filter(|&j| !used[j] && (eig[j] - eig[i]).norm() < 1e-6).collect();
        cluster.iter().for_each(|&j| used[j] = true);
        let centre = cluster.iter().map(|&j| eig[j]).sum::<Complex64>() / cluster.len() as f64;
        let shifted = &mc - DMatrix::<Complex64>::identity(k, k) * centre;
        let svd = shifted.svd(false, true);
        let v_t = svd.v_t.ok_or(Error::NonDiagonalizable)?;
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
        let scale = svd.singular_values.iter().copied().fold(1.0, f64::max);
        for (slot, &idx) in order.iter().take(cluster.len()).enumerate() {
            if svd.singular_values[idx] > 1e-6 * scale {
                return Err(Error::NonDiagonalizable);
            }
            vectors.push(v_t.row(idx).adjoint());
            lambdas.push(eig[cluster[slot]]);
        }
    }
    let u = DMatrix::from_columns(&vectors);
    let sv = u.clone().svd(false, false).singular_values;
    let (smin, smax) = sv.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &s| (lo.min(s), hi.max(s)));
    if !(smin > 1e-10 * smax) {
        return Err(Error::NonDiagonalizable);
    }
    let u_inv = u.clone().try_inverse().ok_or(Error::NonDiagonalizable)?;
    let one = Complex64::new(1.0, 0.0);
    let diag = nalgebra::DVector::from_iterator(
        k,
        lambdas.iter().map(|&l| if (l - one).norm() < 1e-9 { one } else { (one + l) / (one - l) }),
    );
    let pi = &u * DMatrix::from_diagonal(&diag) * u_inv;
    if pi.iter().any(|z| z.im.abs() > 1e-8 * (1.0 + z.re.abs())) {
        return Err(Error::NonDiagonalizable);
    }
    Ok(pi.map(|z| z.re))
}

/// The five state-evolution models.
#[derive(Debug, Clone, PartialEq)]
pub enum StateProcess {
    /// One state drawn from `q` and held for the whole block.
    Mixed {
        q: Vec<f64>,
    },
    Iid {
        pi: Vec<f64>,
    },
    /// `⌊n^ν⌋` blocks of equal length plus a remainder block, each block
    /// assigned an independent state from `pi`.
    BlockIid {
        pi: Vec<f64>,
        nu: f64,
    },
    Markov(MarkovChain),
    /// Deterministic: position `i` (1-based) is `sa` iff
    /// `2^{2k−1} <= i < 2^{2k}` for some `k >= 1`, else `sb`.
    Alternating {
        sa: usize,
        sb: usize,
        state_count: usize,
    },
}

impl StateProcess {
    pub fn mixed(q: Vec<f64>) -> Result<Self> {
        check_distribution(&q, "mixture weights").map_err(to_model_err)?;
        Ok(Self::Mixed { q })
    }

    pub fn iid(pi: Vec<f64>) -> Result<Self> {
        check_distribution(&pi, "state law").map_err(to_model_err)?;
        Ok(Self::Iid { pi })
    }

    pub fn block_iid(pi: Vec<f64>, nu: f64) -> Result<Self> {
        check_distribution(&pi, "state law").map_err(to_model_err)?;
        if !(nu > 0.0 && nu <= 1.0) {
            return Err(Error::InvalidModel(format!("block exponent {nu} outside (0, 1]")));
        }
        Ok(Self::BlockIid { pi, nu })
    }

    pub fn markov(chain: MarkovChain) -> Self {
        Self::Markov(chain)
    }

    pub fn alternating(sa: usize, sb: usize, state_count: usize) -> Result<Self> {
        if sa == sb || sa >= state_count || sb >= state_count {
            return Err(Error::InvalidModel("alternating states must be distinct valid indices".into()));
        }
        Ok(Self::Alternating { sa, sb, state_count })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Mixed { .. } => "mixed",
            Self::Iid { .. } => "iid",
            Self::BlockIid { .. } => "block_iid",
            Self::Markov(_) => "markov",
            Self::Alternating { .. } => "alternating",
        }
    }

    pub fn state_count(&self) -> usize {
        match self {
            Self::Mixed { q } => q.len(),
            Self::Iid { pi } | Self::BlockIid { pi, .. } => pi.len(),
            Self::Markov(c) => c.state_count(),
            Self::Alternating { state_count, .. } => *state_count,
        }
    }

    /// Long-run state law: `q`, `π`, the chain's stationary law, or the
    /// two-thirds/one-third split for the alternating source.
    pub fn marginal(&self) -> Vec<f64> {
        match self {
            Self::Mixed { q } => q.clone(),
            Self::Iid { pi } | Self::BlockIid { pi, .. } => pi.clone(),
            Self::Markov(c) => c.stationary().to_vec(),
            Self::Alternating { sa, sb, state_count } => {
                let mut t = vec![0.0; *state_count];
                t[*sa] = 2.0 / 3.0;
                t[*sb] = 1.0 / 3.0;
                t
            }
        }
    }
}

/// Block layout `(d, m, r)` with `d = ⌊n^ν⌋`, `m = ⌊n/d⌋`, `r = n − md`.
pub fn block_layout(n: usize, nu: f64) -> (usize, usize, usize) {
    let mut d = (n as f64).powf(nu).floor() as usize;
    // Guard against powf rounding just below an exact integer power.
    while ((d + 1) as f64) <= (n as f64).powf(nu) * (1.0 + 1e-15) && d < n {
        d += 1;
    }
    let d = d.clamp(1, n.max(1));
    let m = n / d;
    (d, m, n - m * d)
}

/// Whether 1-based position `i` belongs to the `sa` index set.
pub fn in_alternating_set(i: u64) -> bool {
    // 2^{2k−1} <= i < 2^{2k} iff the highest set bit sits at an odd position.
    i >= 1 && (63 - i.leading_zeros()) % 2 == 1
}

/// Number of positions in `1..=n` that belong to the `sa` index set.
pub fn alternating_count(n: u64) -> u64 {
    let mut count = 0u64;
    let mut k = 1u32;
    loop {
        let lo = 1u64 << (2 * k - 1);
        if lo > n || 2 * k > 63 {
            break;
        }
        let hi = (1u64 << (2 * k)) - 1;
        count += hi.min(n) - lo + 1;
        k += 1;
    }
    count
}

fn categorical<R: Rng>(rng: &mut R, p: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    p.iter().rposition(|&v| v > 0.0).unwrap_or(0)
}

/// Draw a state sequence of length `n`.
pub fn sample_states(process: &StateProcess, n: usize, seed: u64) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(Error::InvalidModel("blocklength must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(sample_with(process, n, &mut rng))
}

fn sample_with<R: Rng>(process: &StateProcess, n: usize, rng: &mut R) -> Vec<usize> {
    match process {
        StateProcess::Mixed { q } => vec![categorical(rng, q); n],
        StateProcess::Iid { pi } => (0..n).map(|_| categorical(rng, pi)).collect(),
        StateProcess::BlockIid { pi, nu } => {
            let (d, m, r) = block_layout(n, *nu);
            let mut out = Vec::with_capacity(n);
            for _ in 0..d {
                let s = categorical(rng, pi);
                out.extend(std::iter::repeat_n(s, m));
            }
            if r > 0 {
                let s = categorical(rng, pi);
                out.extend(std::iter::repeat_n(s, r));
            }
            out
        }
        StateProcess::Markov(c) => {
            let mut s = categorical(rng, c.init());
            let mut out = Vec::with_capacity(n);
            out.push(s);
            for _ in 1..n {
                s = categorical(rng, &c.kernel()[s]);
                out.push(s);
            }
            out
        }
        StateProcess::Alternating { sa, sb, .. } => {
            (1..=n as u64).map(|i| if in_alternating_set(i) { *sa } else { *sb }).collect()
        }
    }
}

/// Empirical state counts of a length-`n` sequence.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StateType {
    counts: Vec<u32>,
}

impl StateType {
    pub fn new(counts: Vec<u32>) -> Result<Self> {
        if counts.is_empty() || counts.iter().all(|&c| c == 0) {
            return Err(Error::InvalidInput("state type needs a positive blocklength".into()));
        }
        Ok(Self { counts })
    }

    pub fn from_sequence(states: &[usize], state_count: usize) -> Self {
        let mut counts = vec![0u32; state_count];
        states.iter().for_each(|&s| counts[s] += 1);
        Self { counts }
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn n(&self) -> usize {
        self.counts.iter().map(|&c| c as usize).sum()
    }

    pub fn fractions(&self) -> Vec<f64> {
        let n = self.n() as f64;
        self.counts.iter().map(|&c| f64::from(c) / n).collect()
    }
}

/// Law of the random state type `T_{S^n}`.
#[derive(Debug, Clone, PartialEq)]
pub struct TypeDistribution {
    n: usize,
    atoms: Vec<(StateType, f64)>,
    exact: bool,
    sample_count: Option<u64>,
    seed: Option<u64>,
}

impl TypeDistribution {
    fn from_map(n: usize, map: BTreeMap<Vec<u32>, f64>, exact: bool) -> Self {
        let atoms = map.into_iter().filter(|(_, p)| *p > 0.0).map(|(c, p)| (StateType { counts: c }, p)).collect();
        Self { n, atoms, exact, sample_count: None, seed: None }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn atoms(&self) -> &[(StateType, f64)] {
        &self.atoms
    }

    pub fn is_exact(&self) -> bool {
        self.exact
    }

    pub fn sample_count(&self) -> Option<u64> {
        self.sample_count
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.1).sum()
    }

    /// `E[g(T)]` with `T` given as a vector of fractions.
    pub fn expect(&self, mut g: impl FnMut(&[f64]) -> f64) -> f64 {
        self.atoms.iter().map(|(t, p)| p * g(&t.fractions())).sum()
    }

    pub fn mean_type(&self) -> Vec<f64> {
        let k = self.atoms.first().map_or(0, |a| a.0.counts.len());
        let mut m = vec![0.0; k];
        for (t, p) in &self.atoms {
            for (mi, f) in m.iter_mut().zip(t.fractions()) {
                *mi += p * f;
            }
        }
        m
    }

    /// CSV with one `count_<label>` column per state and a probability column.
    pub fn to_csv(&self, labels: &[String]) -> String {
        let mut out = String::new();
        let header: Vec<String> = labels.iter().map(|l| format!("count_{l}")).collect();
        let _ = writeln!(out, "{},probability", header.join(","));
        for (t, p) in &self.atoms {
            let counts: Vec<String> = t.counts.iter().map(u32::to_string).collect();
            let _ = writeln!(out, "{},{}", counts.join(","), crate::io::fmt_float(*p));
        }
        out
    }
}

/// How to obtain a [`TypeDistribution`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TypeMode {
    Exact,
    MonteCarlo,
    /// Exact when supported, Monte Carlo otherwise.
    Auto,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TypeOptions {
    pub mode: TypeMode,
    pub budget: u64,
    pub seed: u64,
    pub markov_cap_binary: usize,
    pub markov_cap_ternary: usize,
    pub max_atoms: usize,
}

impl Default for TypeOptions {
    fn default() -> Self {
        Self {
            mode: TypeMode::Auto,
            budget: 100_000,
            seed: 0,
            markov_cap_binary: DEFAULT_MARKOV_CAP_BINARY,
            markov_cap_ternary: DEFAULT_MARKOV_CAP_TERNARY,
            max_atoms: DEFAULT_MAX_ATOMS,
        }
    }
}

pub fn type_distribution(process: &StateProcess, n: usize, opts: &TypeOptions) -> Result<TypeDistribution> {
    if n == 0 {
        return Err(Error::InvalidModel("blocklength must be positive".into()));
    }
    match opts.mode {
        TypeMode::Exact => exact_types(process, n, opts),
        TypeMode::MonteCarlo => sampled_types(process, n, opts.budget, opts.seed),
        TypeMode::Auto => match exact_types(process, n, opts) {
            Err(Error::Unsupported(_)) => sampled_types(process, n, opts.budget, opts.seed),
            other => other,
        },
    }
}

fn binomial_coefficient(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn compositions(total: u32, parts: usize, out: &mut Vec<Vec<u32>>) {
    fn rec(rem: u32, idx: usize, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if idx + 1 == cur.len() {
            cur[idx] = rem;
            out.push(cur.clone());
            return;
        }
        for c in (0..=rem).rev() {
            cur[idx] = c;
            rec(rem - c, idx + 1, cur, out);
        }
    }
    let mut cur = vec![0; parts];
    rec(total, 0, &mut cur, out);
}

fn multinomial_law(total: u32, probs: &[f64], max_atoms: usize) -> Result<Vec<(Vec<u32>, f64)>> {
    let needed = binomial_coefficient(total as usize + probs.len() - 1, probs.len() - 1);
    if needed > max_atoms as f64 {
        return Err(Error::Unsupported(format!("exact multinomial with {needed:.0} atoms exceeds cap {max_atoms}")));
    }
    let mut comps = Vec::new();
    compositions(total, probs.len(), &mut comps);
    Ok(comps
        .into_iter()
        .filter_map(|c| {
            let mut lp = ln_multinomial(&c);
            for (&ci, &p) in c.iter().zip(probs) {
                if ci > 0 {
                    if p == 0.0 {
                        return None;
                    }
                    lp += f64::from(ci) * p.ln();
                }
            }
            Some((c, lp.exp()))
        })
        .collect())
}

fn exact_types(process: &StateProcess, n: usize, opts: &TypeOptions) -> Result<TypeDistribution> {
    let k = process.state_count();
    let n32 = u32::try_from(n).map_err(|_| Error::Unsupported("blocklength too large".into()))?;
    let mut map: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
    match process {
        StateProcess::Mixed { q } => {
            for (s, &p) in q.iter().enumerate() {
                let mut c = vec![0; k];
                c[s] = n32;
                *map.entry(c).or_default() += p;
            }
        }
        StateProcess::Iid { pi } => {
            for (c, p) in multinomial_law(n32, pi, opts.max_atoms)? {
                map.insert(c, p);
            }
        }
        StateProcess::BlockIid { pi, nu } => {
            let (d, m, r) = block_layout(n, *nu);
            let blocks = multinomial_law(d as u32, pi, opts.max_atoms)?;
            for (b, p) in blocks {
                let base: Vec<u32> = b.iter().map(|&bi| bi * m as u32).collect();
                if r == 0 {
                    *map.entry(base).or_default() += p;
                } else {
                    for (s, &ps) in pi.iter().enumerate() {
                        if ps > 0.0 {
                            let mut c = base.clone();
                            c[s] += r as u32;
                            *map.entry(c).or_default() += p * ps;
                        }
                    }
                }
            }
        }
        StateProcess::Markov(chain) => {
            let cap = match k {
                1 => usize::MAX,
                2 => opts.markov_cap_binary,
                3 => opts.markov_cap_ternary,
                _ => 0,
            };
            if n > cap {
                return Err(Error::Unsupported(format!("exact Markov type law for |S| = {k}, n = {n} (cap {cap})")));
            }
            map = markov_type_dp(chain, n);
        }
        StateProcess::Alternating { sa, sb, .. } => {
            let a = alternating_count(n as u64) as u32;
            let mut c = vec![0; k];
            c[*sa] = a;
            c[*sb] = n32 - a;
            map.insert(c, 1.0);
        }
    }
    Ok(TypeDistribution::from_map(n, map, true))
}

// Forward recursion over (counts of the first |S|−1 states, current state).
// Counts are stored in a dense mixed-radix array of size (n+1)^{|S|−1}.
fn markov_type_dp(chain: &MarkovChain, n: usize) -> BTreeMap<Vec<u32>, f64> {
    let k = chain.state_count();
    let free = k - 1;
    let radix = n + 1;
    let cells = radix.pow(free as u32);
    let idx_of = |counts: &[usize]| counts.iter().take(free).rev().fold(0usize, |acc, &c| acc * radix + c);
    let decode = |mut idx: usize| {
        let mut c = vec![0usize; free];
        for slot in c.iter_mut() {
            *slot = idx % radix;
            idx /= radix;
        }
        c
    };
    let stride: Vec<usize> = (0..free).map(|s| radix.pow(s as u32)).collect();
    let mut cur = vec![0.0f64; cells * k];
    for s in 0..k {
        let p = chain.init()[s];
        if p > 0.0 {
            let off = if s < free { stride[s] } else { 0 };
            cur[off * k + s] += p;
        }
    }
    for _ in 1..n {
        let mut next = vec![0.0f64; cells * k];
        for cell in 0..cells {
            for s in 0..k {
                let p = cur[cell * k + s];
                if p == 0.0 {
                    continue;
                }
                for (t, &m) in chain.kernel()[s].iter().enumerate() {
                    if m > 0.0 {
                        let target = if t < free { cell + stride[t] } else { cell };
                        next[target * k + t] += p * m;
                    }
                }
            }
        }
        cur = next;
    }
    let mut map = BTreeMap::new();
    for cell in 0..cells {
        let mass: f64 = cur[cell * k..(cell + 1) * k].iter().sum();
        if mass > 0.0 {
            let partial = decode(cell);
            let used: usize = partial.iter().sum();
            let mut counts: Vec<u32> = partial.iter().map(|&c| c as u32).collect();
            counts.push((n - used) as u32);
            debug_assert_eq!(idx_of(&partial), cell);
            *map.entry(counts).or_insert(0.0) += mass;
        }
    }
    map
}

/// Monte Carlo type law from `budget` independent paths.
pub fn sampled_types(process: &StateProcess, n: usize, budget: u64, seed: u64) -> Result<TypeDistribution> {
    if budget == 0 {
        return Err(Error::InvalidInput("Monte Carlo budget must be positive".into()));
    }
    let k = process.state_count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hist: BTreeMap<Vec<u32>, u64> = BTreeMap::new();
    for _ in 0..budget {
        let counts = match process {
            StateProcess::Iid { pi } => sample_multinomial(&mut rng, n as u64, pi),
            StateProcess::BlockIid { pi, nu } => {
                let (d, m, r) = block_layout(n, *nu);
                let mut c: Vec<u32> =
                    sample_multinomial(&mut rng, d as u64, pi).iter().map(|&b| b * m as u32).collect();
                if r > 0 {
                    c[categorical(&mut rng, pi)] += r as u32;
                }
                c
            }
            _ => StateType::from_sequence(&sample_with(process, n, &mut rng), k).counts,
        };
        *hist.entry(counts).or_default() += 1;
    }
    let map = hist.into_iter().map(|(c, h)| (c, h as f64 / budget as f64)).collect();
    let mut td = TypeDistribution::from_map(n, map, false);
    td.sample_count = Some(budget);
    td.seed = Some(seed);
    Ok(td)
}

fn sample_multinomial<R: Rng>(rng: &mut R, n: u64, p: &[f64]) -> Vec<u32> {
    let mut remaining = n;
    let mut mass = 1.0;
    let mut out = vec![0u32; p.len()];
    for (i, &pi) in p.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if i + 1 == p.len() {
            out[i] = remaining as u32;
            break;
        }
        let prob = if mass > 0.0 { (pi / mass).clamp(0.0, 1.0) } else { 0.0 };
        let draw = Binomial::new(remaining, prob).map(|b| b.sample(rng)).unwrap_or(0);
        out[i] = draw as u32;
        remaining -= draw;
        mass -= pi;
    }
    out
}

fn weighted_variance(w: &[f64], x: &[f64]) -> f64 {
    let mean: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum();
    w.iter().zip(x).map(|(a, b)| a * (b - mean).powi(2)).sum::<f64>().max(0.0)
}

/// `V*(π) = Var_{S∼π}[C_S]`, bits².
pub fn v_star(pi: &[f64], caps: &[f64]) -> Result<f64> {
    if pi.len() != caps.len() {
        return Err(Error::InvalidInput("state law and capacities differ in length".into()));
    }
    check_distribution(pi, "state law")?;
    Ok(weighted_variance(pi, caps))
}

/// Which route produced a long-run variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LongRunMethod {
    Eigen,
    Series,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LongRunVariance {
    pub value: f64,
    pub method: LongRunMethod,
    /// Bound on `|value − V**|` from truncation and rounding; zero for the
    /// eigendecomposition route.
    pub error_bound: f64,
    pub terms: usize,
}

/// `V**(M) = Var_π[C_S] + 2 Σ_{k>=1} Cov[C_{S_1}, C_{S_{1+k}}]` for a
/// stationary ergodic chain, by eigendecomposition with a truncated-series
/// fallback for defective kernels.
pub fn v_double_star(chain: &MarkovChain, caps: &[f64]) -> Result<LongRunVariance> {
    match v_double_star_eigen(chain, caps) {
        Ok(value) => Ok(LongRunVariance { value, method: LongRunMethod::Eigen, error_bound: 0.0, terms: 0 }),
        Err(Error::NonDiagonalizable) => v_double_star_series(chain, caps, SERIES_MAX_TERMS),
        Err(e) => Err(e),
    }
}

pub fn v_double_star_eigen(chain: &MarkovChain, caps: &[f64]) -> Result<f64> {
    check_caps(chain, caps)?;
    let fk = chain.fundamental_kernel()?;
    let pi = chain.stationary();
    let mean: f64 = pi.iter().zip(caps).map(|(p, c)| p * c).sum();
    let centred: Vec<f64> = caps.iter().map(|c| c - mean).collect();
    let mut acc = 0.0;
    for (s, row) in fk.iter().enumerate() {
        for (t, &f) in row.iter().enumerate() {
            acc += pi[s] * f * centred[s] * centred[t];
        }
    }
    Ok(acc)
}

fn check_caps(chain: &MarkovChain, caps: &[f64]) -> Result<()> {
    if caps.len() != chain.state_count() {
        return Err(Error::InvalidInput("capacity vector length differs from state count".into()));
    }
    Ok(())
}

/// Truncated covariance series with an envelope-based tail bound
/// `2 a ρ^{K+1} / (1 − ρ)`, `ρ` the second eigenvalue modulus and `a` the
/// empirical envelope `max_k |Cov_k| / ρ^k`.
pub fn v_double_star_series(chain: &MarkovChain, caps: &[f64], max_terms: usize) -> Result<LongRunVariance> {
    check_caps(chain, caps)?;
    chain.require_ergodic()?;
    let pi = chain.stationary();
    let mean: f64 = pi.iter().zip(caps).map(|(p, c)| p * c).sum();
    let centred: Vec<f64> = caps.iter().map(|c| c - mean).collect();
    let var = weighted_variance(pi, caps);
    let rho = chain.spectral_radius_second();
    let mut v = centred.clone();
    let mut sum = var;
    let mut envelope: f64 = 0.0;
    let mut largest = var.abs();
    let mut k = 0;
    while k < max_terms {
        k += 1;
        v = chain.apply(&v);
        let cov: f64 = pi.iter().zip(&centred).zip(&v).map(|((p, c), x)| p * c * x).sum();
        sum += 2.0 * cov;
        largest = largest.max(2.0 * cov.abs());
        if rho > 0.0 {
            envelope = envelope.max(cov.abs() / rho.powi(k as i32));
        }
        if 2.0 * cov.abs() < SERIES_REL_STOP * sum.abs().max(1.0) || rho == 0.0 {
            break;
        }
    }
    let tail = if rho > 0.0 && rho < 1.0 && envelope.is_finite() {
        2.0 * envelope * rho.powi(k as i32 + 1) / (1.0 - rho)
    } else if rho == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    let rounding = (k as f64 + 1.0) * f64::EPSILON * largest.max(sum.abs());
    Ok(LongRunVariance { value: sum, method: LongRunMethod::Series, error_bound: tail + rounding, terms: k })
}

/// `V**_n(M) = (1/n) Var[Σ_{k<=n} C_{S_k}]` under a stationary start.
pub fn v_double_star_finite(chain: &MarkovChain, caps: &[f64], n: usize) -> Result<f64> {
    check_caps(chain, caps)?;
    chain.require_ergodic()?;
    if n == 0 {
        return Err(Error::InvalidInput("blocklength must be positive".into()));
    }
    let pi = chain.stationary();
    let mean: f64 = pi.iter().zip(caps).map(|(p, c)| p * c).sum();
    let centred: Vec<f64> = caps.iter().map(|c| c - mean).collect();
    let mut acc = weighted_variance(pi, caps);
    let mut v = centred.clone();
    for j in 1..n {
        v = chain.apply(&v);
        let cov: f64 = pi.iter().zip(&centred).zip(&v).map(|((p, c), x)| p * c * x).sum();
        acc += 2.0 * (n - j) as f64 / n as f64 * cov;
    }
    Ok(acc)
}

/// `Var[Σ_{k<=n} C_{S_k}]` for a chain started from its own initial law.
fn markov_sum_variance(chain: &MarkovChain, caps: &[f64], n: usize) -> f64 {
    let k = chain.state_count();
    let shift: f64 = chain.stationary().iter().zip(caps).map(|(p, c)| p * c).sum();
    let c: Vec<f64> = caps.iter().map(|v| v - shift).collect();
    let mut a = chain.init().to_vec();
    let mut b: Vec<f64> = (0..k).map(|s| a[s] * c[s]).collect();
    let mut sq: Vec<f64> = (0..k).map(|s| a[s] * c[s] * c[s]).collect();
    for _ in 1..n {
        let a_next = chain.step_law(&a);
        let b_prop = chain.step_law(&b);
        let sq_prop = chain.step_law(&sq);
        sq = (0..k).map(|s| sq_prop[s] + 2.0 * c[s] * b_prop[s] + a_next[s] * c[s] * c[s]).collect();
        b = (0..k).map(|s| b_prop[s] + a_next[s] * c[s]).collect();
        a = a_next;
    }
    let m: f64 = b.iter().sum();
    (sq.iter().sum::<f64>() - m * m).max(0.0)
}

/// `(1/n²) Σ_k Σ_l Cov[C_{S_k}, C_{S_l}] = Var[(1/n) Σ_k C_{S_k}]`.
pub fn covariance_sum(process: &StateProcess, n: usize, caps: &[f64]) -> Result<f64> {
    if caps.len() != process.state_count() {
        return Err(Error::InvalidInput("capacity vector length differs from state count".into()));
    }
    if n == 0 {
        return Err(Error::InvalidInput("blocklength must be positive".into()));
    }
    let nf = n as f64;
    Ok(match process {
        StateProcess::Mixed { q } => weighted_variance(q, caps),
        StateProcess::Iid { pi } => weighted_variance(pi, caps) / nf,
        StateProcess::BlockIid { pi, nu } => {
            let (d, m, r) = block_layout(n, *nu);
            ((m * m * d + r * r) as f64) * weighted_variance(pi, caps) / (nf * nf)
        }
        StateProcess::Markov(chain) => markov_sum_variance(chain, caps, n) / (nf * nf),
        StateProcess::Alternating { .. } => 0.0,
    })
}

/// `(1/n) Σ_k E[C_{S_k}]`.
pub fn mean_capacity_term(process: &StateProcess, n: usize, caps: &[f64]) -> Result<f64> {
    if caps.len() != process.state_count() || n == 0 {
        return Err(Error::InvalidInput("capacity vector or blocklength invalid".into()));
    }
    let dot = |p: &[f64]| p.iter().zip(caps).map(|(a, b)| a * b).sum::<f64>();
    Ok(match process {
        StateProcess::Mixed { q } => dot(q),
        StateProcess::Iid { pi } | StateProcess::BlockIid { pi, .. } => dot(pi),
        StateProcess::Markov(chain) => {
            let mut p = chain.init().to_vec();
            let mut acc = 0.0;
            for _ in 0..n {
                acc += dot(&p);
                p = chain.step_law(&p);
            }
            acc / n as f64
        }
        StateProcess::Alternating { sa, sb, .. } => {
            let a = alternating_count(n as u64) as f64;
            (a * caps[*sa] + (n as f64 - a) * caps[*sb]) / n as f64
        }
    })
}
