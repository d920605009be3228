//! Discrete memoryless channels and their single-letter information
//! quantities. All outputs are in bits.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};
use crate::numerics::{self, plogq_bits};

/// Row-sum tolerance for stochastic vectors.
pub const PROB_TOL: f64 = 1e-12;
pub const DEFAULT_CAPACITY_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 100_000;
pub const DEFAULT_DISPERSION_FLOOR: f64 = 1e-12;
pub const DEFAULT_PROBE_STARTS: usize = 16;
pub const DEFAULT_PROBE_SEED: u64 = 0x5eed_ca1d;

/// Ordered set of symbol labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alphabet {
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl Alphabet {
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(Error::InvalidInput("alphabet must be nonempty".into()));
        }
        let mut index = HashMap::with_capacity(labels.len());
        for (i, l) in labels.iter().enumerate() {
            if index.insert(l.clone(), i).is_some() {
                return Err(Error::InvalidInput(format!("duplicate label {l:?}")));
            }
        }
        Ok(Self { labels, index })
    }

    /// Labels `"0"`, `"1"`, ... of the given size.
    pub fn with_size(size: usize) -> Result<Self> {
        Self::new((0..size).map(|i| i.to_string()))
    }

    pub fn size(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> Option<&str> {
        self.labels.get(i).map(String::as_str)
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }
}

pub(crate) fn check_distribution(p: &[f64], what: &str) -> Result<()> {
    if p.is_empty() {
        return Err(Error::InvalidInput(format!("{what}: empty distribution")));
    }
    if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidInput(format!("{what}: entries must be finite and nonnegative")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > PROB_TOL * (p.len() as f64).max(1.0) {
        return Err(Error::InvalidInput(format!("{what}: sums to {s}, not 1")));
    }
    Ok(())
}

/// A stochastic matrix `W(y|x)` with alphabet metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Dmc {
    input: Alphabet,
    output: Alphabet,
    rows: Vec<Vec<f64>>,
}

impl Dmc {
    pub fn new(input: Alphabet, output: Alphabet, rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.len() != input.size() {
            return Err(Error::InvalidInput(format!(
                "{} rows for an input alphabet of size {}",
                rows.len(),
                input.size()
            )));
        }
        for (x, row) in rows.iter().enumerate() {
            if row.len() != output.size() {
                return Err(Error::InvalidInput(format!(
                    "row {x} has {} entries, output alphabet has {}",
                    row.len(),
                    output.size()
                )));
            }
            check_distribution(row, &format!("row {x}"))?;
        }
        Ok(Self { input, output, rows })
    }

    /// Channel with numeric default labels.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let nx = rows.len();
        let ny = rows.first().map_or(0, Vec::len);
        Self::new(Alphabet::with_size(nx)?, Alphabet::with_size(ny)?, rows)
    }

    pub fn bsc(p: f64) -> Result<Self> {
        Self::from_rows(vec![vec![1.0 - p, p], vec![p, 1.0 - p]])
    }

    /// Binary erasure channel; outputs are `0`, `e`, `1`.
    pub fn bec(erasure: f64) -> Result<Self> {
        Self::new(
            Alphabet::with_size(2)?,
            Alphabet::new(["0", "e", "1"])?,
            vec![vec![1.0 - erasure, erasure, 0.0], vec![0.0, erasure, 1.0 - erasure]],
        )
    }

    pub fn identity(k: usize) -> Result<Self> {
        Self::from_rows((0..k).map(|i| (0..k).map(|j| f64::from(u8::from(i == j))).collect()).collect())
    }

    pub fn input(&self) -> &Alphabet {
        &self.input
    }

    pub fn output(&self) -> &Alphabet {
        &self.output
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn input_size(&self) -> usize {
        self.input.size()
    }

    pub fn output_size(&self) -> usize {
        self.output.size()
    }

    /// Output law `PW`.
    pub fn output_law(&self, p: &InputDistribution) -> Result<Vec<f64>> {
        self.check_input(p)?;
        Ok(self.output_law_unchecked(p.probs()))
    }

    fn output_law_unchecked(&self, p: &[f64]) -> Vec<f64> {
        let mut q = vec![0.0; self.output_size()];
        for (px, row) in p.iter().zip(&self.rows) {
            if *px > 0.0 {
                for (qy, w) in q.iter_mut().zip(row) {
                    *qy += px * w;
                }
            }
        }
        q
    }

    fn check_input(&self, p: &InputDistribution) -> Result<()> {
        if p.len() != self.input_size() {
            return Err(Error::InvalidInput(format!(
                "input distribution has {} entries, channel has {} inputs",
                p.len(),
                self.input_size()
            )));
        }
        Ok(())
    }
}

/// A probability vector over channel inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct InputDistribution {
    probs: Vec<f64>,
}

impl InputDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        check_distribution(&probs, "input distribution")?;
        Ok(Self { probs })
    }

    pub fn uniform(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidInput("empty input alphabet".into()));
        }
        Ok(Self { probs: vec![1.0 / k as f64; k] })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn linf_distance(&self, other: &Self) -> f64 {
        self.probs.iter().zip(&other.probs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// `D(W(·|x) ‖ q)` in bits for every input.
fn row_divergences(w: &Dmc, q: &[f64]) -> Vec<f64> {
    w.rows.iter().map(|row| row.iter().zip(q).map(|(&wy, &qy)| plogq_bits(wy, qy)).sum()).collect()
}

/// `I(P, W) = Σ_x P(x) D(W(·|x) ‖ PW)`.
pub fn mutual_information(p: &InputDistribution, w: &Dmc) -> Result<f64> {
    let q = w.output_law(p)?;
    let d = row_divergences(w, &q);
    Ok(p.probs.iter().zip(&d).filter(|(px, _)| **px > 0.0).map(|(px, dx)| px * dx).sum::<f64>().max(0.0))
}

// Σ_x P(x) Σ_y W(y|x) |i(x;y) − centre(x)|^k over the support of P×W.
fn centred_moment(p: &InputDistribution, w: &Dmc, centre: impl Fn(usize, f64) -> f64, k: i32) -> Result<f64> {
    let q = w.output_law(p)?;
    let d = row_divergences(w, &q);
    let mut acc = 0.0;
    for (x, (&px, row)) in p.probs.iter().zip(&w.rows).enumerate() {
        if px == 0.0 {
            continue;
        }
        let c = centre(x, d[x]);
        let inner: f64 = row
            .iter()
            .zip(&q)
            .filter(|(wy, _)| **wy > 0.0)
            .map(|(&wy, &qy)| wy * ((wy / qy).log2() - c).abs().powi(k))
            .sum();
        acc += px * inner;
    }
    Ok(acc)
}

/// Conditional information variance `V(P, W)`, bits².
pub fn conditional_variance(p: &InputDistribution, w: &Dmc) -> Result<f64> {
    centred_moment(p, w, |_, dx| dx, 2)
}

/// Unconditional information variance `U(P, W)` about a reference rate
/// `capacity` (bits), weighted by `P×W`. Bits².
pub fn unconditional_variance(p: &InputDistribution, w: &Dmc, capacity: f64) -> Result<f64> {
    if !capacity.is_finite() {
        return Err(Error::InvalidInput("reference rate must be finite".into()));
    }
    centred_moment(p, w, |_, _| capacity, 2)
}

/// Centred third absolute moment `L(P, W)`, bits³.
pub fn third_absolute_moment(p: &InputDistribution, w: &Dmc) -> Result<f64> {
    centred_moment(p, w, |_, dx| dx, 3)
}

/// Result of the alternating-maximization capacity solver.
#[derive(Debug, Clone, PartialEq)]
pub struct CapacitySolution {
    /// Certified lower bound `I(P*, W)`, reported as the capacity.
    pub capacity: f64,
    pub caid: InputDistribution,
    /// `max_x D(W_x ‖ P*W) − I(P*, W) >= C − I(P*, W)`.
    pub gap: f64,
    pub upper: f64,
    pub iterations: usize,
}

/// Capacity by Blahut–Arimoto iteration, stopped once the duality gap is at
/// most `tol` bits.
pub fn capacity(w: &Dmc, tol: f64, max_iter: usize) -> Result<CapacitySolution> {
    let start = vec![1.0 / w.input_size() as f64; w.input_size()];
    blahut_arimoto(w, start, tol, max_iter)
}

pub fn capacity_default(w: &Dmc) -> Result<CapacitySolution> {
    capacity(w, DEFAULT_CAPACITY_TOL, DEFAULT_MAX_ITER)
}

/// Mutual information and per-input divergences `D(W_x ‖ rW)` at `r`.
fn ba_state(w: &Dmc, r: &[f64]) -> (f64, Vec<f64>) {
    let q = w.output_law_unchecked(r);
    let d = row_divergences(w, &q);
    let info = r.iter().zip(&d).filter(|(rx, _)| **rx > 0.0).map(|(rx, dx)| rx * dx).sum::<f64>().max(0.0);
    (info, d)
}

/// `r_x ∝ r_x 2^{step·D_x}`, shifted by the largest exponent for stability.
fn ba_update(r: &[f64], d: &[f64], step: f64) -> Vec<f64> {
    let shift = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut next: Vec<f64> = r.iter().zip(d).map(|(rx, dx)| rx * (step * (dx - shift)).exp2()).collect();
    let z: f64 = next.iter().sum();
    next.iter_mut().for_each(|x| *x /= z);
    next
}

const MAX_BA_STEP: f64 = 1e8;

/// Blahut–Arimoto with an over-relaxed exponent. A relaxed step is kept only
/// if it does not lower `I(r, W)`; otherwise the plain step, which never
/// lowers it, is taken. Near-useless channels need the relaxation because
/// every `D_x` is tiny and the plain step barely moves `r`.
fn blahut_arimoto(w: &Dmc, mut r: Vec<f64>, tol: f64, max_iter: usize) -> Result<CapacitySolution> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput("tolerance must be positive".into()));
    }
    let mut best = (f64::NEG_INFINITY, f64::INFINITY);
    let mut step = 1.0f64;
    let (mut lower, mut d) = ba_state(w, &r);
    for it in 0..=max_iter {
        let upper = d.iter().copied().fold(f64::NEG_INFINITY, f64::max).max(lower);
        best = (best.0.max(lower), best.1.min(upper));
        if upper - lower <= tol {
            return Ok(CapacitySolution {
                capacity: lower,
                caid: InputDistribution { probs: r },
                gap: upper - lower,
                upper,
                iterations: it,
            });
        }
        let plain = ba_update(&r, &d, 1.0);
        let plain_state = ba_state(w, &plain);
        let mut accepted = (plain, plain_state);
        if step > 1.0 {
            let relaxed = ba_update(&r, &d, step);
            let relaxed_state = ba_state(w, &relaxed);
            if relaxed_state.0 >= accepted.1 .0 {
                accepted = (relaxed, relaxed_state);
                step = (step * 2.0).min(MAX_BA_STEP);
            } else {
                step = (step / 4.0).max(1.0);
            }
        } else {
            step = 2.0;
        }
        r = accepted.0;
        (lower, d) = accepted.1;
    }
    Err(Error::NonConvergence { max_iter, lower: best.0, upper: best.1 })
}

/// Heuristic test that the capacity-achieving input is unique: seeded
/// Dirichlet restarts must land within `√tol` (ℓ∞) of each other and their
/// dispersions must agree within `tol`. False negatives are possible.
pub fn caid_uniqueness_probe(w: &Dmc, capacity: f64, tol: f64, n_starts: usize, seed: u64) -> bool {
    let inner_tol = (tol * 1e-2).max(1e-15);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gamma = Gamma::new(1.0, 1.0).expect("valid gamma parameters");
    let mut found: Vec<(InputDistribution, f64)> = Vec::with_capacity(n_starts);
    for _ in 0..n_starts.max(1) {
        let mut r: Vec<f64> = (0..w.input_size()).map(|_| gamma.sample(&mut rng) + 1e-12).collect();
        let z: f64 = r.iter().sum();
        r.iter_mut().for_each(|v| *v /= z);
        let Ok(sol) = blahut_arimoto(w, r, inner_tol, DEFAULT_MAX_ITER) else {
            return false;
        };
        if (sol.capacity - capacity).abs() > tol.sqrt() {
            return false;
        }
        let Ok(v) = conditional_variance(&sol.caid, w) else {
            return false;
        };
        found.push((sol.caid, v));
    }
    let spread = found.iter().flat_map(|(a, _)| found.iter().map(move |(b, _)| a.linf_distance(b))).fold(0.0, f64::max);
    let vmin = found.iter().map(|f| f.1).fold(f64::INFINITY, f64::min);
    let vmax = found.iter().map(|f| f.1).fold(f64::NEG_INFINITY, f64::max);
    spread <= tol.sqrt() && vmax - vmin < tol
}

/// Per-channel single-letter summary at the capacity-achieving input.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSummary {
    pub capacity_bits: f64,
    pub caid: InputDistribution,
    pub v_cond: f64,
    pub v_uncond: f64,
    pub third_moment: f64,
    pub duality_gap: f64,
    pub caid_unique: bool,
}

pub fn summarize(w: &Dmc, opts: &ChannelOptions) -> Result<ChannelSummary> {
    let sol = capacity(w, opts.tol, opts.max_iter)?;
    let v_cond = conditional_variance(&sol.caid, w)?;
    let v_uncond = unconditional_variance(&sol.caid, w, sol.capacity)?;
    let third_moment = third_absolute_moment(&sol.caid, w)?;
    let caid_unique = caid_uniqueness_probe(w, sol.capacity, opts.tol, opts.probe_starts, opts.probe_seed);
    Ok(ChannelSummary {
        capacity_bits: sol.capacity,
        caid: sol.caid,
        v_cond,
        v_uncond,
        third_moment,
        duality_gap: sol.gap,
        caid_unique,
    })
}

/// Solver and validation knobs for [`StateChannel`] construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Minimum admissible per-state dispersion; `0` disables the check.
    pub dispersion_floor: f64,
    pub probe_starts: usize,
    pub probe_seed: u64,
}

impl Default for ChannelOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_CAPACITY_TOL,
            max_iter: DEFAULT_MAX_ITER,
            dispersion_floor: DEFAULT_DISPERSION_FLOOR,
            probe_starts: DEFAULT_PROBE_STARTS,
            probe_seed: DEFAULT_PROBE_SEED,
        }
    }
}

/// A family of channels indexed by a state known at both terminals.
#[derive(Debug, Clone, PartialEq)]
pub struct StateChannel {
    states: Alphabet,
    channels: Vec<Dmc>,
    summaries: Vec<ChannelSummary>,
    v_min: f64,
    be_constant: f64,
}

impl StateChannel {
    pub fn new(channels: Vec<Dmc>) -> Result<Self> {
        let states = Alphabet::with_size(channels.len())?;
        Self::with_options(states, channels, &ChannelOptions::default())
    }

    pub fn with_options(states: Alphabet, channels: Vec<Dmc>, opts: &ChannelOptions) -> Result<Self> {
        let first =
            channels.first().ok_or_else(|| Error::InvalidInput("at least one state channel required".into()))?;
        if states.size() != channels.len() {
            return Err(Error::InvalidInput(format!("{} state labels for {} channels", states.size(), channels.len())));
        }
        if channels.iter().any(|c| c.input != first.input || c.output != first.output) {
            return Err(Error::InvalidInput("state channels must share input and output alphabets".into()));
        }
        let summaries = channels.iter().map(|c| summarize(c, opts)).collect::<Result<Vec<_>>>()?;
        for (s, summary) in summaries.iter().enumerate() {
            if summary.v_cond < opts.dispersion_floor {
                return Err(Error::DegenerateDispersion {
                    state: s,
                    value: summary.v_cond,
                    floor: opts.dispersion_floor,
                });
            }
        }
        let v_min = summaries.iter().map(|s| s.v_cond).fold(f64::INFINITY, f64::min);
        let be_constant =
            if v_min > 0.0 { numerics::berry_esseen_constant(v_min, first.output_size())? } else { f64::INFINITY };
        Ok(Self { states, channels, summaries, v_min, be_constant })
    }

    pub fn states(&self) -> &Alphabet {
        &self.states
    }

    pub fn channels(&self) -> &[Dmc] {
        &self.channels
    }

    pub fn channel(&self, s: usize) -> &Dmc {
        &self.channels[s]
    }

    pub fn summaries(&self) -> &[ChannelSummary] {
        &self.summaries
    }

    pub fn state_count(&self) -> usize {
        self.channels.len()
    }

    pub fn input_size(&self) -> usize {
        self.channels[0].input_size()
    }

    pub fn output_size(&self) -> usize {
        self.channels[0].output_size()
    }

    pub fn v_min(&self) -> f64 {
        self.v_min
    }

    pub fn be_constant(&self) -> f64 {
        self.be_constant
    }

    /// `D₁ = (2√(2π V_min))⁻¹`.
    pub fn d1_constant(&self) -> f64 {
        1.0 / (2.0 * (2.0 * std::f64::consts::PI * self.v_min).sqrt())
    }

    pub fn capacities(&self) -> Vec<f64> {
        self.summaries.iter().map(|s| s.capacity_bits).collect()
    }

    pub fn dispersions(&self) -> Vec<f64> {
        self.summaries.iter().map(|s| s.v_cond).collect()
    }

    /// `C(t) = Σ_s t(s) C_s` for a state distribution or type.
    pub fn mean_capacity(&self, t: &[f64]) -> f64 {
        t.iter().zip(&self.summaries).map(|(ts, s)| ts * s.capacity_bits).sum()
    }

    /// `V(t) = Σ_s t(s) V_s`.
    pub fn mean_dispersion(&self, t: &[f64]) -> f64 {
        t.iter().zip(&self.summaries).map(|(ts, s)| ts * s.v_cond).sum()
    }

    /// Whether some input distribution achieves capacity on every state,
    /// tested on the solver's caids with tolerance `tol` in bits.
    pub fn common_caid(&self, tol: f64) -> bool {
        self.summaries.iter().any(|cand| {
            self.channels
                .iter()
                .zip(&self.summaries)
                .all(|(w, s)| mutual_information(&cand.caid, w).is_ok_and(|i| i >= s.capacity_bits - tol))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h2(p: f64) -> f64 {
        if p == 0.0 || p == 1.0 {
            0.0
        } else {
            -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
        }
    }

    #[test]
    fn alphabet_rejects_duplicates() {
        assert!(Alphabet::new(["a", "a"]).is_err());
        let a = Alphabet::new(["a", "b"]).unwrap();
        assert_eq!(a.index_of("b"), Some(1));
        assert_eq!(a.label(0), Some("a"));
    }

    #[test]
    fn dmc_validation() {
        assert!(Dmc::from_rows(vec![vec![0.5, 0.6]]).is_err());
        assert!(Dmc::from_rows(vec![vec![f64::NAN, 1.0]]).is_err());
        assert!(Dmc::from_rows(vec![vec![1.0, 0.0], vec![1.0]]).is_err());
    }

    #[test]
    fn mutual_information_examples() {
        let u = InputDistribution::uniform(2).unwrap();
        assert!((mutual_information(&u, &Dmc::identity(2).unwrap()).unwrap() - 1.0).abs() < 1e-15);
        let same = Dmc::from_rows(vec![vec![0.3, 0.7], vec![0.3, 0.7]]).unwrap();
        assert_eq!(mutual_information(&u, &same).unwrap(), 0.0);
        let i = mutual_information(&u, &Dmc::bsc(0.11).unwrap()).unwrap();
        assert!((i - (1.0 - h2(0.11))).abs() < 1e-14);
        let p3 = InputDistribution::uniform(3).unwrap();
        assert!(mutual_information(&p3, &same).is_err());
    }

    #[test]
    fn capacity_closed_forms() {
        for &p in &[0.0, 0.01, 0.11, 0.3, 0.5] {
            let sol = capacity_default(&Dmc::bsc(p).unwrap()).unwrap();
            assert!((sol.capacity - (1.0 - h2(p))).abs() <= 1e-10, "p = {p}");
            assert!(sol.gap <= 1e-10);
        }
        for &e in &[0.0, 0.2, 0.9] {
            let sol = capacity_default(&Dmc::bec(e).unwrap()).unwrap();
            assert!((sol.capacity - (1.0 - e)).abs() <= 1e-10);
        }
        let sol = capacity_default(&Dmc::identity(5).unwrap()).unwrap();
        assert!((sol.capacity - 5f64.log2()).abs() < 1e-12);
    }

    #[test]
    fn nonconvergence_carries_bracket() {
        let w = Dmc::from_rows(vec![vec![0.9, 0.1, 0.0], vec![0.0, 0.2, 0.8], vec![0.4, 0.3, 0.3]]).unwrap();
        match capacity(&w, 1e-14, 2) {
            Err(Error::NonConvergence { lower, upper, .. }) => assert!(lower <= upper),
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn bsc_dispersion() {
        let p: f64 = 0.11;
        let u = InputDistribution::uniform(2).unwrap();
        let w = Dmc::bsc(p).unwrap();
        let v = conditional_variance(&u, &w).unwrap();
        // Two-point law: log2(2(1-p)) w.p. 1-p and log2(2p) w.p. p.
        let (a, b) = ((2.0 * (1.0 - p)).log2(), (2.0 * p).log2());
        let mean = (1.0 - p) * a + p * b;
        let oracle = (1.0 - p) * (a - mean).powi(2) + p * (b - mean).powi(2);
        assert!((v - oracle).abs() < 1e-14);
        assert!((v - p * (1.0 - p) * ((1.0 - p) / p).log2().powi(2)).abs() < 1e-13);
        let l = third_absolute_moment(&u, &w).unwrap();
        let l_oracle = (1.0 - p) * (a - mean).abs().powi(3) + p * (b - mean).abs().powi(3);
        assert!((l - l_oracle).abs() < 1e-14);
        assert!(l <= numerics::l_plus_bits(2));
        assert_eq!(conditional_variance(&u, &Dmc::identity(2).unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn unconditional_exceeds_conditional_off_caid() {
        let w = Dmc::bsc(0.2).unwrap();
        let c = capacity_default(&w).unwrap().capacity;
        let p = InputDistribution::new(vec![0.9, 0.1]).unwrap();
        let v = conditional_variance(&p, &w).unwrap();
        let u = unconditional_variance(&p, &w, c).unwrap();
        assert!(u > v);
        // Direct oracle over the four (x, y) pairs.
        let q: [f64; 2] = [0.9 * 0.8 + 0.1 * 0.2, 0.9 * 0.2 + 0.1 * 0.8];
        let rows: [[f64; 2]; 2] = [[0.8, 0.2], [0.2, 0.8]];
        let px = [0.9, 0.1];
        let mut u_oracle = 0.0;
        for x in 0..2 {
            for y in 0..2 {
                u_oracle += px[x] * rows[x][y] * ((rows[x][y] / q[y]).log2() - c).powi(2);
            }
        }
        assert!((u - u_oracle).abs() < 1e-14);
    }

    #[test]
    fn uniqueness_probe() {
        let w = Dmc::bsc(0.11).unwrap();
        let c = capacity_default(&w).unwrap().capacity;
        assert!(caid_uniqueness_probe(&w, c, 1e-10, 16, 1));
        let id = Dmc::identity(3).unwrap();
        assert!(caid_uniqueness_probe(&id, 3f64.log2(), 1e-10, 16, 1));
        // Inputs 0 and 1 are interchangeable, so every split is optimal.
        let dup = Dmc::from_rows(vec![vec![0.9, 0.1], vec![0.9, 0.1], vec![0.1, 0.9]]).unwrap();
        let c = capacity_default(&dup).unwrap().capacity;
        assert!(!caid_uniqueness_probe(&dup, c, 1e-10, 16, 1));
    }

    #[test]
    fn state_channel_assembly() {
        let sc = StateChannel::new(vec![Dmc::bsc(0.1).unwrap(), Dmc::bsc(0.2).unwrap()]).unwrap();
        let v2 = 0.2 * 0.8 * (0.8f64 / 0.2).log2().powi(2);
        assert!((sc.v_min() - v2).abs() < 1e-10);
        let expected_b = 6.0 * numerics::l_plus_bits(2) / v2.powf(1.5);
        assert!((sc.be_constant() - expected_b).abs() < 1e-6 * expected_b);
        assert!(sc.common_caid(1e-9));
        match StateChannel::new(vec![Dmc::bsc(0.1).unwrap(), Dmc::bsc(0.5).unwrap()]) {
            Err(Error::DegenerateDispersion { state: 1, .. }) => {}
            other => panic!("expected degenerate dispersion, got {other:?}"),
        }
        let mismatch = StateChannel::new(vec![Dmc::bsc(0.1).unwrap(), Dmc::bec(0.1).unwrap()]);
        assert!(mismatch.is_err());
    }
}
