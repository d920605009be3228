use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statecap::channel::{Alphabet, ChannelOptions, Dmc, StateChannel};
use statecap::numerics::normal_cdf;
use statecap::oneshot::{
    dh_divergence, dpi_check, feinstein_best, feinstein_log_m, feinstein_rhs, information_sum_law, neyman_pearson,
    prop3_direct_rhs, random_coding_error, sampled_information_sum_law, spectrum_converse_log_m, xi_cdf, BoundOptions,
    ConditionalType, InputPolicy, OutputReference,
};
use statecap::state::{StateProcess, StateType, TypeMode, TypeOptions};
use statecap::Error;

fn bsc_pair() -> StateChannel {
    StateChannel::new(vec![Dmc::bsc(0.11).unwrap(), Dmc::bsc(0.02).unwrap()]).unwrap()
}

/// `β_{1−ε}` by enumerating the vertices of the test polytope: a set taken
/// whole plus at most one fractional atom.
fn beta_by_vertices(p: &[f64], q: &[f64], eps: f64) -> f64 {
    let k = p.len();
    let target = 1.0 - eps;
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << k) {
        let inside = |i: usize| mask >> i & 1 == 1;
        let pa: f64 = (0..k).filter(|&i| inside(i)).map(|i| p[i]).sum();
        let qa: f64 = (0..k).filter(|&i| inside(i)).map(|i| q[i]).sum();
        if pa >= target - 1e-15 {
            best = best.min(qa);
        }
        for b in (0..k).filter(|&i| !inside(i) && p[i] > 0.0) {
            let gamma = (target - pa) / p[b];
            if (0.0..=1.0).contains(&gamma) {
                best = best.min(qa + gamma * q[b]);
            }
        }
    }
    best
}

fn random_simplex(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
    let z: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / z).collect()
}

#[test]
fn feinstein_exact_agrees_with_monte_carlo() {
    let ch = bsc_pair();
    let p = StateProcess::iid(vec![0.4, 0.6]).unwrap();
    let pol = InputPolicy::capacity_achieving(&ch);
    let n = 8;
    let exact_opts = BoundOptions { mode: TypeMode::Exact, enum_cap: 1e8, ..Default::default() };
    let mc_opts = BoundOptions { mode: TypeMode::MonteCarlo, budget: 1_000_000, seed: 5, ..Default::default() };
    for (log_m, eta) in [(2.0, 1.0), (4.0, 0.5), (5.0, 1.5)] {
        let exact = feinstein_rhs(&ch, &p, &pol, n, log_m, eta, &exact_opts).unwrap();
        let mc = feinstein_rhs(&ch, &p, &pol, n, log_m, eta, &mc_opts).unwrap();
        assert!(exact.exact && !mc.exact);
        let prob = exact.value - (-eta).exp2();
        let sigma = (prob * (1.0 - prob) / 1e6).sqrt();
        assert!((exact.value - mc.value).abs() <= 3.0 * sigma + 1e-12, "{} vs {}", exact.value, mc.value);
        let (lo, hi) = mc.interval.unwrap();
        assert!(lo <= mc.value && mc.value <= hi);
    }
    let capped = BoundOptions { mode: TypeMode::Exact, ..Default::default() };
    assert!(matches!(feinstein_rhs(&ch, &p, &pol, n, 4.0, 1.0, &capped), Err(Error::BudgetExceeded { .. })));
}

#[test]
fn feinstein_optimum_beats_eta_sweep() {
    let ch = bsc_pair();
    let p = StateProcess::mixed(vec![0.5, 0.5]).unwrap();
    let law = information_sum_law(&ch, &p, &InputPolicy::capacity_achieving(&ch), 6, 1e7).unwrap();
    for log_m in [0.0, 1.5, 3.0] {
        let sweep = (1..=20_000)
            .map(|i| {
                let eta = i as f64 * 5e-4;
                law.cdf(log_m + eta) + (-eta).exp2()
            })
            .fold(f64::INFINITY, f64::min);
        let best = feinstein_best(&law, log_m);
        assert!(best <= sweep + 1e-12 && sweep - best < 1e-3, "L={log_m}: {best} vs {sweep}");
    }
    let eps = 0.2;
    let l = feinstein_log_m(&law, eps).unwrap();
    assert!(feinstein_best(&law, l - 1e-9) <= eps + 1e-9);
    assert!(feinstein_best(&law, l + 1e-6) > eps);
}

#[test]
fn sampled_law_tracks_exact_law() {
    let ch = bsc_pair();
    let p = StateProcess::iid(vec![0.5, 0.5]).unwrap();
    let pol = InputPolicy::capacity_achieving(&ch);
    let exact = information_sum_law(&ch, &p, &pol, 4, 1e7).unwrap();
    let sampled = sampled_information_sum_law(&ch, &p, &pol, 4, 200_000, 9).unwrap();
    let band = ((2.0f64 / 1e-6).ln() / 4e5).sqrt();
    for &(v, _) in exact.atoms() {
        assert!((exact.cdf(v) - sampled.cdf(v)).abs() <= band);
    }
}

#[test]
fn dh_worked_example() {
    let (p, q) = ([0.8, 0.2], [0.5, 0.5]);
    let (beta, test) = neyman_pearson(&p, &q, 0.2).unwrap();
    assert!((beta - 0.5).abs() < 1e-15);
    assert!((test.threshold - 1.6f64.log2()).abs() < 1e-15);
    let d = dh_divergence(&p, &q, 0.2).unwrap();
    assert!((d - 1.6f64.log2()).abs() < 1e-15);
    assert!((beta - beta_by_vertices(&p, &q, 0.2)).abs() < 1e-15);
    // Grid search over tests ξ = (a, b) with P[ξ] >= 1 − ε.
    let mut grid_best = f64::INFINITY;
    for i in 0..=100 {
        for j in 0..=100 {
            let (a, b) = (i as f64 / 100.0, j as f64 / 100.0);
            if p[0] * a + p[1] * b >= 0.8 - 1e-12 {
                grid_best = grid_best.min(q[0] * a + q[1] * b);
            }
        }
    }
    let sweep = grid_best;
    assert!(beta <= sweep + 1e-15 && sweep - beta < 1e-12);
}

#[test]
fn neyman_pearson_matches_vertex_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..200 {
        let k = rng.random_range(2..=6);
        let p = random_simplex(&mut rng, k);
        let q = random_simplex(&mut rng, k);
        let eps = rng.random_range(0.01..0.99);
        let (beta, _) = neyman_pearson(&p, &q, eps).unwrap();
        assert!((beta - beta_by_vertices(&p, &q, eps)).abs() < 1e-12);
    }
    assert!(neyman_pearson(&[0.5, 0.5], &[0.5, 0.5], 0.0).is_err());
    assert!(neyman_pearson(&[0.5, 0.5], &[1.0], 0.1).is_err());
    assert_eq!(dh_divergence(&[1.0, 0.0], &[0.0, 1.0], 0.1).unwrap(), f64::INFINITY);
}

#[test]
fn dpi_holds_for_random_kernels() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..200 {
        let k = rng.random_range(2..=5);
        let m = rng.random_range(1..=4);
        let p = random_simplex(&mut rng, k);
        let q = random_simplex(&mut rng, k);
        let kernel: Vec<Vec<f64>> = (0..k).map(|_| random_simplex(&mut rng, m)).collect();
        assert!(dpi_check(&p, &q, &kernel, rng.random_range(0.05..0.95)).unwrap());
    }
}

#[test]
fn xi_matches_path_enumeration() {
    let ch = bsc_pair();
    // States (0, 0, 1, 1) with inputs (0, 1, 0, 0).
    let states = [0usize, 0, 1, 1];
    let inputs = [0usize, 1, 0, 0];
    let t = StateType::new(vec![2, 2]).unwrap();
    let v = ConditionalType::new(vec![vec![1, 1], vec![2, 0]]);
    let rows = |s: usize| ch.channel(s).rows().to_vec();
    let induced = [vec![0.5, 0.5], rows(1)[0].clone()];
    let uniform = vec![vec![0.5, 0.5]; 2];
    for (reference, q) in [
        (OutputReference::ConditionalType, induced.to_vec()),
        (OutputReference::Fixed(uniform.clone()), uniform.clone()),
    ] {
        for rate in [-0.5, 0.0, 0.3, 0.6, 0.95] {
            let mut mass = 0.0;
            for ys in 0..16usize {
                let mut prob = 1.0;
                let mut j = 0.0;
                for k in 0..4 {
                    let y = ys >> k & 1;
                    let w = rows(states[k])[inputs[k]][y];
                    prob *= w;
                    j += (w / q[states[k]][y]).log2();
                }
                if j <= 4.0 * rate + 1e-12 {
                    mass += prob;
                }
            }
            let got = xi_cdf(&ch, &t, &v, rate, &reference).unwrap();
            assert!((got - mass).abs() < 1e-14, "rate={rate}");
        }
    }
    assert!(xi_cdf(
        &ch,
        &t,
        &ConditionalType::new(vec![vec![1, 2], vec![2, 0]]),
        0.0,
        &OutputReference::ConditionalType
    )
    .is_err());
}

#[test]
fn converse_on_noiseless_channel() {
    let ch = StateChannel::with_options(
        Alphabet::with_size(2).unwrap(),
        vec![Dmc::identity(2).unwrap(), Dmc::identity(2).unwrap()],
        &ChannelOptions { dispersion_floor: 0.0, ..Default::default() },
    )
    .unwrap();
    let p = StateProcess::iid(vec![0.5, 0.5]).unwrap();
    for n in [1usize, 3, 5] {
        let delta = 0.25;
        let r = spectrum_converse_log_m(&ch, &p, n, 0.1, Some(delta), 1e6).unwrap();
        // j = 1 bit per letter under the uniform output, so the bound is n − log₂ δ.
        assert!((r.log_m_caid_output - (n as f64 + 2.0)).abs() < 1e-12);
        assert!(r.log_m <= r.log_m_type_average);
        assert!(r.log_m >= n as f64);
    }
}

#[test]
fn converse_is_monotone_in_eps_and_above_achievability() {
    let ch = bsc_pair();
    let p = StateProcess::mixed(vec![0.3, 0.7]).unwrap();
    let n = 4;
    let law = information_sum_law(&ch, &p, &InputPolicy::capacity_achieving(&ch), n, 1e7).unwrap();
    let mut last = f64::NEG_INFINITY;
    for eps in [0.05, 0.1, 0.2, 0.3, 0.4] {
        let r = spectrum_converse_log_m(&ch, &p, n, eps, Some(0.1), 1e6).unwrap();
        assert!(r.log_m >= last - 1e-12);
        last = r.log_m;
        assert!(r.log_m >= feinstein_log_m(&law, eps).unwrap());
    }
    assert!(spectrum_converse_log_m(&ch, &p, n, 0.6, Some(0.5), 1e6).is_err());
    assert!(matches!(spectrum_converse_log_m(&ch, &p, 40, 0.1, None, 1e6), Err(Error::EnumerationTooLarge { .. })));
}

#[test]
fn direct_bound_terms() {
    let ch = bsc_pair();
    let pi = [0.5, 0.5];
    let p = StateProcess::iid(pi.to_vec()).unwrap();
    let n = 64usize;
    let rate = ch.mean_capacity(&pi);
    let b = prop3_direct_rhs(&ch, &p, n, rate, &TypeOptions::default()).unwrap();
    let (caps, disp) = (ch.capacities(), ch.dispersions());
    let mut gaussian = 0.0;
    for k in 0..=n {
        let t0 = k as f64 / n as f64;
        let c = t0 * caps[0] + (1.0 - t0) * caps[1];
        let v = t0 * disp[0] + (1.0 - t0) * disp[1];
        let weight = (statecap::numerics::ln_multinomial(&[k as u32, (n - k) as u32]) - n as f64 * 2f64.ln()).exp();
        gaussian += weight * normal_cdf(8.0 * (rate - c) / v.sqrt());
    }
    assert!((b.gaussian_term - gaussian).abs() < 1e-12);
    assert!((b.log_term - ch.d1_constant() * 6.0 / 8.0).abs() < 1e-15);
    assert!((b.berry_esseen_term - (ch.be_constant() + 1.0) / 8.0).abs() < 1e-12);
    assert_eq!(b.value, b.unclipped.min(1.0));
    assert!(b.exact);
}

#[test]
fn random_coding_respects_threshold_decoder_bound() {
    let ch = bsc_pair();
    let p = StateProcess::iid(vec![0.5, 0.5]).unwrap();
    let pol = InputPolicy::capacity_achieving(&ch);
    let n = 6;
    let law = information_sum_law(&ch, &p, &pol, n, 1e7).unwrap();
    for m in [2usize, 4, 8] {
        let est = random_coding_error(&ch, &p, &pol, n, m, 20_000, 13).unwrap();
        let bound = feinstein_best(&law, (m as f64).log2());
        assert!(est.error <= bound + 3.0 * est.std_error, "M={m}: {} vs {bound}", est.error);
        let again = random_coding_error(&ch, &p, &pol, n, m, 20_000, 13).unwrap();
        assert_eq!(est, again);
    }
    let single = random_coding_error(&ch, &p, &pol, n, 1, 100, 1).unwrap();
    assert_eq!(single.error, 0.0);
}
