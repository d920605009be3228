use std::collections::BTreeMap;

use statecap::numerics::hoeffding_type_bound;
use statecap::state::{
    alternating_count, block_layout, covariance_sum, sample_states, sampled_types, type_distribution, v_double_star,
    v_double_star_finite, v_star, MarkovChain, StateProcess, StateType, TypeMode, TypeOptions,
};

fn exact() -> TypeOptions {
    TypeOptions { mode: TypeMode::Exact, ..Default::default() }
}

fn atom_map(p: &StateProcess, n: usize) -> BTreeMap<Vec<u32>, f64> {
    type_distribution(p, n, &exact()).unwrap().atoms().iter().map(|(t, w)| (t.counts().to_vec(), *w)).collect()
}

#[test]
fn mixed_atoms_are_pure_types() {
    let p = StateProcess::mixed(vec![0.3, 0.7]).unwrap();
    let m = atom_map(&p, 5);
    assert_eq!(m.len(), 2);
    assert!((m[&vec![5, 0]] - 0.3).abs() < 1e-15);
    assert!((m[&vec![0, 5]] - 0.7).abs() < 1e-15);
    let s = sample_states(&p, 5, 4).unwrap();
    assert!(s.iter().all(|&x| x == s[0]));
}

#[test]
fn iid_binomial() {
    let p = StateProcess::iid(vec![0.5, 0.5]).unwrap();
    let m = atom_map(&p, 2);
    assert_eq!(m.len(), 3);
    assert!((m[&vec![2, 0]] - 0.25).abs() < 1e-15);
    assert!((m[&vec![1, 1]] - 0.5).abs() < 1e-15);
    assert!((m[&vec![0, 2]] - 0.25).abs() < 1e-15);
}

#[test]
fn markov_dp_matches_path_enumeration() {
    let chain = MarkovChain::new(vec![vec![0.8, 0.2], vec![0.35, 0.65]], vec![0.6, 0.4]).unwrap();
    let p = StateProcess::markov(chain.clone());
    for n in 1..=6usize {
        let mut brute: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
        for code in 0..(1usize << n) {
            let path: Vec<usize> = (0..n).map(|k| (code >> k) & 1).collect();
            let mut prob = chain.init()[path[0]];
            for k in 1..n {
                prob *= chain.kernel()[path[k - 1]][path[k]];
            }
            let ones = path.iter().filter(|&&s| s == 1).count() as u32;
            *brute.entry(vec![n as u32 - ones, ones]).or_default() += prob;
        }
        let got = atom_map(&p, n);
        assert_eq!(got.len(), brute.len());
        for (k, v) in &brute {
            assert!((got[k] - v).abs() < 1e-14, "n={n} type {k:?}");
        }
    }
}

#[test]
fn ternary_markov_dp_sums_to_one() {
    let chain =
        MarkovChain::stationary_start(vec![vec![0.5, 0.3, 0.2], vec![0.1, 0.8, 0.1], vec![0.3, 0.3, 0.4]]).unwrap();
    let td = type_distribution(&StateProcess::markov(chain), 40, &exact()).unwrap();
    assert!((td.total_mass() - 1.0).abs() < 1e-9);
    assert!(td.atoms().len() as f64 <= 41f64.powi(3));
}

#[test]
fn alternating_sequence_is_pinned() {
    let p = StateProcess::alternating(0, 1, 2).unwrap();
    // Position i (1-based) is in the first state's set iff 2^{2k−1} <= i < 2^{2k}.
    assert_eq!(sample_states(&p, 8, 0).unwrap(), vec![1, 0, 0, 1, 1, 1, 1, 0]);
    for k in 1..=6u32 {
        let n = (1u64 << (2 * k)) - 1;
        assert_eq!(3 * alternating_count(n), 2 * n);
    }
    let m = atom_map(&p, 15);
    assert_eq!(m.len(), 1);
    assert_eq!(m.keys().next().unwrap(), &vec![10, 5]);
}

#[test]
fn iid_sample_type_concentrates() {
    let pi = [0.3, 0.7];
    let p = StateProcess::iid(pi.to_vec()).unwrap();
    let s = sample_states(&p, 10_000, 17).unwrap();
    let t = StateType::from_sequence(&s, 2).fractions();
    // Violation probability at this tolerance is below 1e-21.
    assert!(hoeffding_type_bound(10_000, 0.05, 2).unwrap() < 1e-21);
    assert!(t.iter().zip(pi).all(|(a, b)| (a - b).abs() <= 0.05));
}

#[test]
fn sampled_types_are_frequencies() {
    let p = StateProcess::iid(vec![0.4, 0.6]).unwrap();
    let td = sampled_types(&p, 30, 5000, 3).unwrap();
    assert!(!td.is_exact());
    assert_eq!(td.sample_count(), Some(5000));
    assert!((td.total_mass() - 1.0).abs() < 1e-12);
}

#[test]
fn v_star_examples() {
    assert_eq!(v_star(&[0.5, 0.5], &[0.3, 0.3]).unwrap(), 0.0);
    let (c0, c1) = (0.2, 0.9);
    assert!((v_star(&[0.5, 0.5], &[c0, c1]).unwrap() - ((c0 - c1) / 2.0f64).powi(2)).abs() < 1e-15);
    let a = 0.3;
    assert!((v_star(&[a, 1.0 - a], &[0.0, 1.0]).unwrap() - a * (1.0 - a)).abs() < 1e-15);
}

#[test]
fn v_double_star_examples() {
    let caps: [f64; 2] = [0.5, 0.86];
    for tau in [0.1, 0.3, 0.5, 0.9] {
        let chain = MarkovChain::gilbert_elliott(tau).unwrap();
        let closed = (1.0 - tau) / (4.0 * tau) * (caps[0] - caps[1]).powi(2);
        assert!((v_double_star(&chain, &caps).unwrap().value - closed).abs() < 1e-12);
        assert!((v_double_star_finite(&chain, &caps, 1).unwrap() - v_star(&[0.5, 0.5], &caps).unwrap()).abs() < 1e-15);
        let large = v_double_star_finite(&chain, &caps, 100_000).unwrap();
        assert!((large - closed).abs() < 1e-4 * closed.max(1e-3));
    }
    let half = MarkovChain::gilbert_elliott(0.5).unwrap();
    assert!((v_double_star(&half, &caps).unwrap().value - v_star(&[0.5, 0.5], &caps).unwrap()).abs() < 1e-15);
    let iid_like = MarkovChain::stationary_start(vec![vec![0.3, 0.7], vec![0.3, 0.7]]).unwrap();
    for n in [1, 5, 50] {
        let v = v_double_star_finite(&iid_like, &caps, n).unwrap();
        assert!((v - v_star(&[0.3, 0.7], &caps).unwrap()).abs() < 1e-14);
    }
    assert_eq!(v_double_star(&half, &[0.4, 0.4]).unwrap().value, 0.0);
}

#[test]
fn covariance_sum_examples() {
    let caps = [0.0, 1.0];
    let var = 0.25;
    let mixed = StateProcess::mixed(vec![0.5, 0.5]).unwrap();
    for n in [1, 10, 1000] {
        assert!((covariance_sum(&mixed, n, &caps).unwrap() - var).abs() < 1e-15);
    }
    let iid = StateProcess::iid(vec![0.5, 0.5]).unwrap();
    assert!((covariance_sum(&iid, 100, &caps).unwrap() - var / 100.0).abs() < 1e-15);
    let block = StateProcess::block_iid(vec![0.5, 0.5], 0.5).unwrap();
    assert_eq!(block_layout(100, 0.5), (10, 10, 0));
    assert!((covariance_sum(&block, 100, &caps).unwrap() - 0.1 * var).abs() < 1e-15);
    let alt = StateProcess::alternating(0, 1, 2).unwrap();
    assert_eq!(covariance_sum(&alt, 63, &caps).unwrap(), 0.0);
}

#[test]
fn block_variance_matches_monte_carlo() {
    let caps = [0.2, 0.9];
    let pi = [0.5, 0.5];
    let (n, nu) = (100usize, 0.5);
    let p = StateProcess::block_iid(pi.to_vec(), nu).unwrap();
    let trials = 40_000u64;
    let sums: Vec<f64> =
        (0..trials).map(|seed| sample_states(&p, n, seed).unwrap().iter().map(|&s| caps[s]).sum::<f64>()).collect();
    let mean = sums.iter().sum::<f64>() / trials as f64;
    let var = sums.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
    let (d, m, r) = block_layout(n, nu);
    let identity = (m * m * d + r * r) as f64 * v_star(&pi, &caps).unwrap();
    // Relative standard error of a sample variance is about sqrt(2 / trials) for near-Gaussian sums.
    assert!((var - identity).abs() < 5.0 * (2.0 / trials as f64).sqrt() * identity, "{var} vs {identity}");
}

#[test]
fn invalid_models_rejected() {
    assert!(StateProcess::iid(vec![0.5, 0.6]).is_err());
    assert!(StateProcess::block_iid(vec![0.5, 0.5], 0.0).is_err());
    assert!(StateProcess::alternating(1, 1, 2).is_err());
    assert!(MarkovChain::new(vec![vec![0.5, 0.5], vec![0.2, 0.7]], vec![1.0, 0.0]).is_err());
    let periodic = MarkovChain::new(vec![vec![0.0, 1.0], vec![1.0, 0.0]], vec![1.0, 0.0]).unwrap();
    assert!(!periodic.is_ergodic());
    assert!(v_double_star(&periodic, &[0.1, 0.2]).is_err());
}
