use statecap::channel::{
    caid_uniqueness_probe, capacity_default, conditional_variance, mutual_information, summarize,
    third_absolute_moment, unconditional_variance, Alphabet, ChannelOptions, Dmc, InputDistribution, StateChannel,
};
use statecap::numerics::{berry_esseen_from, l_plus_bits, v_plus_bits};
use statecap::Error;

fn h2(p: f64) -> f64 {
    -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
}

/// `(I, V, U about c, L)` by summing over every `(x, y)` pair directly.
#[allow(clippy::needless_range_loop)]
fn direct_moments(p: &[f64], rows: &[Vec<f64>], c: f64) -> (f64, f64, f64, f64) {
    let ny = rows[0].len();
    let q: Vec<f64> = (0..ny).map(|y| p.iter().zip(rows).map(|(px, r)| px * r[y]).sum()).collect();
    let dens = |x: usize, y: usize| (rows[x][y] / q[y]).log2();
    let d: Vec<f64> =
        (0..p.len()).map(|x| (0..ny).filter(|&y| rows[x][y] > 0.0).map(|y| rows[x][y] * dens(x, y)).sum()).collect();
    let mut i = 0.0;
    let (mut v, mut u, mut l) = (0.0, 0.0, 0.0);
    for x in 0..p.len() {
        for y in 0..ny {
            let w = p[x] * rows[x][y];
            if w > 0.0 {
                i += w * dens(x, y);
                v += w * (dens(x, y) - d[x]).powi(2);
                u += w * (dens(x, y) - c).powi(2);
                l += w * (dens(x, y) - d[x]).abs().powi(3);
            }
        }
    }
    (i, v, u, l)
}

#[test]
fn alphabet_bijection() {
    let a = Alphabet::new(["g", "b"]).unwrap();
    assert_eq!(a.size(), 2);
    assert_eq!(a.index_of("b"), Some(1));
    assert_eq!(a.label(0), Some("g"));
    assert!(Alphabet::new(["x", "x"]).is_err());
    assert!(Alphabet::new(Vec::<String>::new()).is_err());
}

#[test]
fn dmc_rejects_bad_rows() {
    assert!(Dmc::from_rows(vec![vec![0.5, 0.6]]).is_err());
    assert!(Dmc::from_rows(vec![vec![f64::NAN, 1.0]]).is_err());
    assert!(Dmc::from_rows(vec![vec![-0.1, 1.1]]).is_err());
    assert!(Dmc::from_rows(vec![vec![0.5, 0.5], vec![1.0]]).is_err());
}

#[test]
fn mutual_information_examples() {
    let u = InputDistribution::uniform(2).unwrap();
    assert!((mutual_information(&u, &Dmc::identity(2).unwrap()).unwrap() - 1.0).abs() < 1e-15);
    let flat = Dmc::from_rows(vec![vec![0.3, 0.7], vec![0.3, 0.7]]).unwrap();
    assert_eq!(mutual_information(&InputDistribution::new(vec![0.2, 0.8]).unwrap(), &flat).unwrap(), 0.0);
    let bsc = Dmc::bsc(0.11).unwrap();
    let (i, ..) = direct_moments(&[0.5, 0.5], bsc.rows(), 0.0);
    assert!((mutual_information(&u, &bsc).unwrap() - i).abs() < 1e-14);
    assert!((i - (1.0 - h2(0.11))).abs() < 1e-14);
}

#[test]
fn variances_match_direct_summation() {
    for p in [0.01, 0.11, 0.3, 0.45] {
        let w = Dmc::bsc(p).unwrap();
        let u = InputDistribution::uniform(2).unwrap();
        let closed = p * (1.0 - p) * ((1.0 - p) / p).log2().powi(2);
        let v = conditional_variance(&u, &w).unwrap();
        assert!((v - closed).abs() < 1e-13, "p={p}");
        let (_, vd, _, ld) = direct_moments(&[0.5, 0.5], w.rows(), 0.0);
        assert!((v - vd).abs() < 1e-13);
        assert!((third_absolute_moment(&u, &w).unwrap() - ld).abs() < 1e-13);
    }
    assert_eq!(conditional_variance(&InputDistribution::uniform(3).unwrap(), &Dmc::identity(3).unwrap()).unwrap(), 0.0);
}

#[test]
fn unconditional_exceeds_conditional_off_caid() {
    let w = Dmc::bsc(0.2).unwrap();
    let c = 1.0 - h2(0.2);
    let p = InputDistribution::new(vec![0.9, 0.1]).unwrap();
    let (_, vd, ud, _) = direct_moments(p.probs(), w.rows(), c);
    let v = conditional_variance(&p, &w).unwrap();
    let u = unconditional_variance(&p, &w, c).unwrap();
    assert!((v - vd).abs() < 1e-13 && (u - ud).abs() < 1e-13);
    assert!(u > v);
    let caid = InputDistribution::uniform(2).unwrap();
    let gap = unconditional_variance(&caid, &w, c).unwrap() - conditional_variance(&caid, &w).unwrap();
    assert!(gap.abs() < 1e-12);
}

#[test]
fn capacity_closed_forms() {
    for p in [0.0, 0.05, 0.11, 0.25, 0.4, 0.5] {
        let s = capacity_default(&Dmc::bsc(p).unwrap()).unwrap();
        let closed = if p == 0.0 { 1.0 } else { 1.0 - h2(p) };
        assert!((s.capacity - closed).abs() < 1e-9);
        assert!(s.gap <= 1e-10);
    }
    for e in [0.0, 0.2, 0.7, 1.0] {
        let s = capacity_default(&Dmc::bec(e).unwrap()).unwrap();
        assert!((s.capacity - (1.0 - e)).abs() < 1e-9);
    }
    let s = capacity_default(&Dmc::identity(4).unwrap()).unwrap();
    assert!((s.capacity - 2.0).abs() < 1e-12);
    assert!(s.caid.probs().iter().all(|&x| (x - 0.25).abs() < 1e-9));
}

#[test]
fn caid_probe_examples() {
    let opts = ChannelOptions::default();
    let bsc = Dmc::bsc(0.11).unwrap();
    let c = capacity_default(&bsc).unwrap().capacity;
    assert!(caid_uniqueness_probe(&bsc, c, opts.tol, opts.probe_starts, opts.probe_seed));
    let id = Dmc::identity(3).unwrap();
    assert!(caid_uniqueness_probe(&id, 3f64.log2(), opts.tol, opts.probe_starts, opts.probe_seed));
    // Inputs 0 and 1 are interchangeable, so the optimum is a segment.
    let dup = Dmc::from_rows(vec![vec![0.9, 0.1], vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap();
    let s = summarize(&dup, &opts).unwrap();
    if s.caid_unique {
        assert!((s.v_cond - s.v_uncond).abs() < 1e-9);
    }
}

#[test]
fn summary_bounds() {
    let opts = ChannelOptions { dispersion_floor: 0.0, ..Default::default() };
    for rows in [
        vec![vec![0.7, 0.2, 0.1], vec![0.1, 0.3, 0.6]],
        vec![vec![0.5, 0.5], vec![0.1, 0.9], vec![0.99, 0.01]],
        vec![vec![1.0, 0.0], vec![0.0, 1.0]],
    ] {
        let w = Dmc::from_rows(rows).unwrap();
        let s = summarize(&w, &opts).unwrap();
        let cap_max = (w.input_size().min(w.output_size()) as f64).log2();
        assert!(s.capacity_bits >= 0.0 && s.capacity_bits <= cap_max + 1e-12);
        assert!(s.v_cond <= s.v_uncond + 1e-12);
        assert!(s.v_uncond <= v_plus_bits(w.output_size()));
        assert!(s.third_moment <= l_plus_bits(w.output_size()));
    }
}

#[test]
fn state_channel_examples() {
    let ch = StateChannel::new(vec![Dmc::bsc(0.1).unwrap(), Dmc::bsc(0.2).unwrap()]).unwrap();
    let v = |p: f64| p * (1.0 - p) * ((1.0 - p) / p).log2().powi(2);
    // v_min is the smaller per-state dispersion.
    assert!((ch.v_min() - v(0.1).min(v(0.2))).abs() < 1e-12);
    let b = berry_esseen_from(l_plus_bits(2), ch.v_min()).unwrap();
    assert!((ch.be_constant() - b).abs() < 1e-9 * b);

    let single = StateChannel::new(vec![Dmc::bsc(0.11).unwrap()]).unwrap();
    let plain = capacity_default(&Dmc::bsc(0.11).unwrap()).unwrap();
    assert!((single.capacities()[0] - plain.capacity).abs() < 1e-15);

    let err = StateChannel::new(vec![Dmc::bsc(0.1).unwrap(), Dmc::bsc(0.5).unwrap()]).unwrap_err();
    assert!(matches!(err, Error::DegenerateDispersion { state: 1, .. }));

    let mismatch = StateChannel::new(vec![Dmc::bsc(0.1).unwrap(), Dmc::bec(0.1).unwrap()]);
    assert!(mismatch.is_err());
}
