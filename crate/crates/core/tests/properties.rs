use mfgc_core::fbode_solver::{BundleMode, TrajectoryBundle};
use mfgc_core::game_model::{
    legendre_argmax, semimon_probe, Context, CostModel, DeclaredConstants, LqModel, NewtonConfig, PotentialModel,
    ProbeSample,
};
use mfgc_core::lq_oracle::{
    classify_degeneracy, semimon_constants, solve_nplayer_lq, Degeneracy, GameMode, LqParams, LqValue,
};
use mfgc_core::metrics::{empirical_convergence_error, fournier_guillin_rate, w2_1d, w2_exact_small};
use mfgc_core::stochastic_sim::{simulate, FeedbackSet, InitialLaw, SimConfig};
use mfgc_core::TimeGrid;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn samples(max: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, 1..max)
}

fn column(v: &[f64]) -> Vec<[f64; 1]> {
    v.iter().map(|&x| [x]).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn w2_is_symmetric(a in samples(40), b in samples(40)) {
        let (ab, ba) = (w2_1d(&a, &b).unwrap(), w2_1d(&b, &a).unwrap());
        prop_assert!((ab - ba).abs() <= 1e-12);
    }

    #[test]
    fn w2_triangle(a in samples(30), b in samples(30), c in samples(30)) {
        let ac = w2_1d(&a, &c).unwrap();
        let bound = w2_1d(&a, &b).unwrap() + w2_1d(&b, &c).unwrap();
        prop_assert!(ac <= bound + 1e-10);
    }

    #[test]
    fn w2_vanishes_on_permutations(a in samples(40), seed in any::<u64>()) {
        let mut b = a.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..b.len()).rev() {
            b.swap(i, rng.random_range(0..=i));
        }
        prop_assert_eq!(w2_1d(&a, &b).unwrap(), 0.0);
        let mut c = b.clone();
        c[0] += 1e-3;
        prop_assert!(w2_1d(&a, &c).unwrap() > 0.0);
    }

    #[test]
    fn w2_assignment_agrees_on_the_line(pair in (1usize..40).prop_flat_map(|n| {
        (prop::collection::vec(-10.0f64..10.0, n), prop::collection::vec(-10.0f64..10.0, n))
    })) {
        let (a, b) = pair;
        let sorted = w2_1d(&a, &b).unwrap();
        let exact: f64 = w2_exact_small(&column(&a), &column(&b)).unwrap();
        prop_assert!((sorted - exact).abs() <= 1e-12, "{} {}", sorted, exact);
    }

    #[test]
    fn rate_decreases_in_n(d in 1usize..8, q in 2.1f64..20.0, n in 1usize..100_000) {
        prop_assume!((q - 4.0).abs() > 1e-6);
        prop_assume!(d <= 2 || (q * (d as f64 - 2.0) - d as f64).abs() > 1e-6);
        let lo = fournier_guillin_rate(d, q, n).unwrap();
        let hi = fournier_guillin_rate(d, q, n + 1).unwrap();
        prop_assert!(hi < lo);
    }

    #[test]
    fn self_comparison_has_no_error(values in prop::collection::vec(-5.0f64..5.0, 33)) {
        let g = TimeGrid::new(1.0, 10).unwrap();
        let mut b = TrajectoryBundle::zeros(BundleMode::NPlayer, g, 3);
        for m in 0..11 {
            for i in 0..3 {
                b.set(i, m, values[m * 3 + i], 0.0, values[(m * 3 + i + 1) % 33]);
            }
        }
        let e = empirical_convergence_error(&b, &b, None).unwrap();
        prop_assert_eq!(e.traj_error, 0.0);
    }
}

/// Distance to the nearest degeneracy manifold, in parameter units.
fn clearance(kappa: f64, rho: f64, gamma: f64, horizon: f64, n: usize) -> f64 {
    let a = 1.0 + gamma;
    let m = (n - 1) as f64;
    [
        (kappa + a).abs(),
        (kappa - a * m).abs(),
        (a + kappa + horizon * (1.0 + rho)).abs(),
        (a - kappa / m + horizon * (1.0 - rho / m)).abs(),
    ]
    .into_iter()
    .fold(f64::INFINITY, f64::min)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn degeneracy_is_locally_constant(
        kappa in -6.0f64..6.0, rho in -6.0f64..6.0, gamma in 0.0f64..2.0,
        horizon in 0.2f64..3.0, n in 2usize..8, dk in -1.0f64..1.0, dr in -1.0f64..1.0,
    ) {
        prop_assume!(clearance(kappa, rho, gamma, horizon, n) > 0.1);
        let z: Vec<f64> = (0..n).map(|i| i as f64 - 1.0).collect();
        for mode in [GameMode::NPlayer, GameMode::MeanField] {
            let p = LqParams::nplayer(kappa, rho, gamma, horizon, z.clone()).unwrap();
            let q = LqParams::nplayer(kappa + 1e-3 * dk, rho + 1e-3 * dr, gamma, horizon, z.clone()).unwrap();
            let (cp, cq) = (classify_degeneracy(&p, mode), classify_degeneracy(&q, mode));
            prop_assert_eq!(cp.classification, Degeneracy::Regular);
            prop_assert_eq!(cp.classification, cq.classification);
        }
    }

    #[test]
    fn lq_solution_identities(
        c in -0.9f64..0.9, rho in -0.9f64..0.9, gamma in 0.0f64..2.0,
        z in prop::collection::vec(-2.0f64..2.0, 2..6),
    ) {
        let kappa = c * (1.0 + gamma);
        let params = LqParams::nplayer(kappa, rho, gamma, 1.0, z.clone()).unwrap();
        prop_assume!(clearance(kappa, rho, gamma, 1.0, z.len()) > 1e-3);
        let sol = solve_nplayer_lq(&params, &TimeGrid::new(1.0, 200).unwrap()).unwrap();
        prop_assert_eq!(*sol.riccati.last().unwrap(), 1.0);
        prop_assert!(sol.riccati.windows(2).all(|w| w[1] > w[0]));
        let (pi, pm) = sol.terminal_residuals();
        prop_assert!(pi.abs() <= 1e-10 && pm.abs() <= 1e-10);
        for i in 0..z.len() {
            for t in [0.0, 0.37, 1.0] {
                let e = sol.eval(i, t, 0.8);
                prop_assert!(e.consistency_residual(kappa, gamma).abs() <= 1e-10);
            }
        }
    }
}

#[test]
fn lq_gains_do_not_depend_on_noise() {
    let z = vec![0.3, -1.0, 0.9, 0.1];
    let grid = TimeGrid::new(1.0, 500).unwrap();
    let base = LqParams::nplayer(0.6, -0.4, 0.8, 1.0, z).unwrap();
    let reference = solve_nplayer_lq(&base, &grid).unwrap();
    for beta in [0.1, 1.0] {
        let sol = solve_nplayer_lq(&base.clone().with_beta(beta).unwrap(), &grid).unwrap();
        assert_eq!(sol.gain, reference.gain);
        assert_eq!(sol.offset, reference.offset);
        assert_eq!(sol.costate, reference.costate);
        assert_ne!(sol.constant, reference.constant);
    }
}

#[test]
fn simulation_is_seed_deterministic() {
    let params = LqParams::nplayer(0.5, 0.2, 1.0, 1.0, vec![0.1, -0.4, 0.6]).unwrap();
    let sol = solve_nplayer_lq(&params, &TimeGrid::new(1.0, 100).unwrap()).unwrap();
    let fb = FeedbackSet::from_lq(&sol);
    let init = [
        InitialLaw::Dirac(0.1),
        InitialLaw::Gaussian { mean: -0.4, std_dev: 0.3 },
        InitialLaw::Dirac(0.6),
    ];
    for seed in [0u64, 7, 99] {
        let cfg = SimConfig {
            beta: 0.4,
            n_paths: 64,
            dt: 0.01,
            seed,
            antithetic: seed % 2 == 1,
            ..SimConfig::default()
        };
        let a = simulate(&fb, &init, 1.0, &cfg).unwrap();
        let b = simulate(&fb, &init, 1.0, &cfg).unwrap();
        assert_eq!(a, b);
    }
}

fn probe_sampler(n: usize, seed: u64) -> impl FnMut(usize) -> ProbeSample<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    move |_| {
        let mut v = || (0..n).map(|_| rng.random_range(-3.0..3.0)).collect::<Vec<f64>>();
        ProbeSample {
            x: v(),
            a: v(),
            x_bar: v(),
            a_bar: v(),
        }
    }
}

#[test]
fn spectral_semimonotonicity_constants_survive_probing() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..10 {
        let n = rng.random_range(2..7);
        let gamma = rng.random_range(0.0..2.0);
        let kappa = rng.random_range(-2.0..2.0);
        let rho = rng.random_range(-2.0..2.0);
        let params = LqParams::nplayer(kappa, rho, gamma, 1.0, vec![0.0; n]).unwrap();
        let report = semimon_constants(&params, GameMode::NPlayer);
        let model = LqModel::new(kappa, rho, gamma).unwrap();
        let declared = DeclaredConstants {
            c_la: report.c_la_spectral,
            c_lx: report.c_lx,
            c_g: report.c_g_spectral,
        };
        let stats = semimon_probe(&model, 10_000, probe_sampler(n, 5), GameMode::NPlayer, declared).unwrap();
        assert!(!stats.falsified(1e-9), "kappa {kappa} rho {rho} n {n}: {stats:?}");
        let inflated = DeclaredConstants {
            c_la: declared.c_la + 1.0,
            ..declared
        };
        let stats = semimon_probe(&model, 10_000, probe_sampler(n, 6), GameMode::NPlayer, inflated).unwrap();
        assert!(stats.min_running_gap < 0.0);
    }
}

#[test]
fn printed_constant_is_refuted_for_negative_coupling() {
    let params = LqParams::nplayer(-1.0, 0.0, 0.0, 1.0, vec![0.0; 3]).unwrap();
    let report = semimon_constants(&params, GameMode::NPlayer);
    let model = LqModel::new(-1.0, 0.0, 0.0).unwrap();
    let declared = DeclaredConstants {
        c_la: report.c_la,
        c_lx: report.c_lx,
        c_g: report.c_g_spectral,
    };
    let stats = semimon_probe(&model, 10_000, probe_sampler(3, 8), GameMode::NPlayer, declared).unwrap();
    assert!(stats.falsified(1e-9));
}

#[test]
fn argmax_is_lipschitz_in_the_costate() {
    let model = PotentialModel::new(1.5, 0.7, 0.4, 0.2).unwrap();
    let lambda = CostModel::<f64>::metadata(&model).lambda_min;
    let cfg = NewtonConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let ctx = Context::moments(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let x = rng.random_range(-3.0..3.0);
        let (p1, p2) = (rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
        let a1 = legendre_argmax(&model, x, p1, &ctx, None, &cfg).unwrap();
        let a2 = legendre_argmax(&model, x, p2, &ctx, None, &cfg).unwrap();
        assert!((a1 - a2).abs() <= (p1 - p2).abs() / lambda + 1e-9);
    }
}
