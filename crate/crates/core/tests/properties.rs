use noisefree_bo::analysis::{dyadic_horizons, fit_rate, min_dist_sum, min_dist_sum_bound};
use noisefree_bo::gp::{History, Posterior};
use noisefree_bo::kernels::{matern_eval, HyperParams, MaternSpec, Smoothness};
use noisefree_bo::linalg::JitterPolicy;
use noisefree_bo::points::PointSet;
use noisefree_bo::testbed::{Objective, RkhsFunction};
use noisefree_bo::BallDomain;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn smoothness() -> impl Strategy<Value = Smoothness> {
    prop_oneof![
        Just(Smoothness::HALF),
        Just(Smoothness::THREE_HALVES),
        Just(Smoothness::FIVE_HALVES),
    ]
}

fn spec(nu: Smoothness, sigma2: f64, lengthscale: f64) -> MaternSpec<f64> {
    MaternSpec::new(nu, HyperParams::new(sigma2, lengthscale).unwrap())
}

/// `n` uniform points observing a random expansion in the emulator's RKHS.
fn history(s: &MaternSpec<f64>, d: usize, n: usize, seed: u64) -> History<f64> {
    let dom = BallDomain::new(d).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = RkhsFunction::random(s.clone(), &dom, 10, 1.0, None, &mut rng).unwrap();
    let mut h = History::in_domain(dom);
    while h.len() < n {
        let x: Vec<f64> = dom.sample_uniform(&mut rng);
        if !h.is_duplicate(&x) {
            h.push(&x, f.eval(&x)).unwrap();
        }
    }
    h
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kernel_is_bounded_and_decreasing(
        nu in smoothness(),
        sigma2 in 0.1f64..10.0,
        lengthscale in 0.05f64..5.0,
        r in 0.0f64..5.0,
        dr in 1e-6f64..1.0,
    ) {
        let s = spec(nu, sigma2, lengthscale);
        prop_assert!((matern_eval(&s, 0.0).unwrap() - sigma2).abs() <= 1e-12 * sigma2);
        let a = matern_eval(&s, r).unwrap();
        let b = matern_eval(&s, r + dr).unwrap();
        prop_assert!(a > 0.0 && a <= sigma2);
        prop_assert!(b <= a);
    }

    #[test]
    fn posterior_interpolates_and_is_bounded(
        nu in smoothness(),
        d in 1usize..=2,
        n in 1usize..100,
        seed in any::<u64>(),
        lengthscale in 0.1f64..1.0,
    ) {
        let s = spec(nu, 1.5, lengthscale);
        let h = history(&s, d, n, seed);
        let post = Posterior::new(s, h.clone(), JitterPolicy::default()).unwrap();
        let ymax = h.values().iter().fold(1.0f64, |m, y| m.max(y.abs()));
        for (x, &y) in h.points().iter().zip(h.values()) {
            let (m, s) = post.mean_sd(x).unwrap();
            prop_assert!((m - y).abs() <= 1e-6 * ymax, "mean {m} vs {y}");
            prop_assert!(s <= 1e-4 * 1.5f64.sqrt(), "sd {s}");
        }
        let dom = BallDomain::new(d).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        for _ in 0..20 {
            let x: Vec<f64> = dom.sample_uniform(&mut rng);
            let s = post.sd(&x).unwrap();
            prop_assert!((0.0..=1.5f64.sqrt() * (1.0 + 1e-12)).contains(&s));
        }
    }

    #[test]
    fn adding_data_never_raises_the_sd(
        nu in smoothness(),
        n in 2usize..25,
        seed in any::<u64>(),
    ) {
        let s = spec(nu, 1.0, 0.5);
        let h = history(&s, 1, n, seed);
        let probes: Vec<Vec<f64>> = (0..41).map(|i| vec![-0.5 + i as f64 / 40.0]).collect();
        let mut prev = vec![1.0f64; probes.len()];
        for k in 1..=n {
            let post = Posterior::new(s.clone(), h.prefix(k), JitterPolicy::default()).unwrap();
            for (p, x) in prev.iter_mut().zip(&probes) {
                let sd = post.sd(x).unwrap();
                prop_assert!(sd <= *p + 1e-6, "sd rose from {p} to {sd} at k = {k}");
                *p = sd;
            }
        }
    }

    #[test]
    fn distance_sum_stays_below_bound(
        d in 1usize..=3,
        nu_twice in prop_oneof![Just(1u8), Just(3u8)],
        n in 2usize..200,
        seed in any::<u64>(),
    ) {
        let nu = nu_twice as f64 / 2.0;
        let dom = BallDomain::new(d).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut z = PointSet::new(d);
        while z.len() < n {
            let x: Vec<f64> = dom.sample_uniform(&mut rng);
            z.push(&x).unwrap();
        }
        prop_assert!(min_dist_sum(&z, nu).unwrap() <= min_dist_sum_bound(d, nu, n).unwrap());
    }

    #[test]
    fn rate_fit_recovers_exponent(e in 0.05f64..1.0, scale in 0.01f64..100.0, horizon in 256usize..5000) {
        let hs: Vec<usize> = dyadic_horizons(horizon).into_iter().filter(|&h| h >= 8).collect();
        let v: Vec<f64> = hs.iter().map(|&h| scale * (h as f64).powf(e)).collect();
        let fit = fit_rate(&v, &hs).unwrap();
        prop_assert!((fit.slope - e).abs() < 1e-9);
    }

    #[test]
    fn dyadic_horizons_are_sorted_and_end_at_horizon(horizon in 1usize..100_000) {
        let hs = dyadic_horizons(horizon);
        prop_assert_eq!(*hs.last().unwrap(), horizon);
        prop_assert!(hs.windows(2).all(|w| w[0] < w[1]));
        prop_assert_eq!(hs[0], 1);
    }

    #[test]
    fn projection_lands_in_the_domain(d in 1usize..=4, x in prop::collection::vec(-3.0f64..3.0, 4)) {
        let dom = BallDomain::new(d).unwrap();
        let mut x = x[..d].to_vec();
        dom.project(&mut x);
        prop_assert!(dom.contains(&x));
    }
}
