mod common;

use cbranch::cumulant::{solve_cumulant, uniform_grid, CumulantOptions, ExtensionOptions};
use cbranch::levy::{Atom, LevyMeasure};
use cbranch::rng::path_stream;
use cbranch::simulator::{
    fold_ensemble, simulate_ensemble, simulate_path, PathSimulator, RecordGrid, SimConfig,
};
use cbranch::verify::{
    branching_property_check, dynkin_residual, martingale_residual, monte_carlo_laplace,
    TestFunction, DEFAULT_K,
};
use cbranch::{BranchingMechanism, LeftHalfPoint, MechanismRow};
use rand::Rng;
use rand_distr::StandardNormal;

fn feller() -> BranchingMechanism {
    BranchingMechanism::feller(2.0).unwrap()
}

fn end_only(seed: u64) -> SimConfig {
    SimConfig {
        master_seed: seed,
        record: RecordGrid::EndOnly,
        ..Default::default()
    }
}

fn minus_one() -> LeftHalfPoint {
    LeftHalfPoint::real(&[-1.0]).unwrap()
}

#[test]
fn feller_mean_is_preserved() {
    let mech = feller();
    let sim = PathSimulator::new(&mech, &[1.0], 1.0, &end_only(11)).unwrap();
    let n = 10_000;
    let finals = fold_ensemble(
        n,
        Vec::with_capacity(n),
        |i| Ok(sim.path(i)?.final_state().map_or(0.0, |x| x[0])),
        |mut acc, v| {
            acc.push(v);
            acc
        },
    )
    .unwrap();
    let mean = finals.iter().sum::<f64>() / n as f64;
    let var = finals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let se = (var / n as f64).sqrt();
    assert!((mean - 1.0).abs() <= 4.0 * se, "mean {mean}, se {se}");
}

#[test]
fn drift_only_path_follows_linear_ode() {
    let a = vec![vec![-1.0, 0.5], vec![0.25, -0.5]];
    let mech = BranchingMechanism::linear(a.clone()).unwrap();
    let x0 = [1.0, 2.0];
    let cfg = SimConfig {
        dt: 1e-4,
        ..Default::default()
    };
    let path = simulate_path(&mech, &x0, 1.0, &cfg, 0).unwrap();
    // The state moves along x ↦ Aᵀx.
    let at: Vec<Vec<f64>> = (0..2).map(|i| (0..2).map(|j| a[j][i]).collect()).collect();
    let e = common::expm(&at, 1.0);
    let end = path.final_state().unwrap();
    for i in 0..2 {
        let exact: f64 = (0..2).map(|j| e[i][j] * x0[j]).sum();
        assert!((end[i] - exact).abs() <= 1e-3, "{i}: {} vs {exact}", end[i]);
    }
}

#[test]
fn path_streams_are_distinct() {
    let first = |seed: u64, i: u64| -> f64 { path_stream(seed, i).sample(StandardNormal) };
    for i in 0..1000u64 {
        assert_ne!(first(5, i), first(5, i + 1), "indices {i}, {}", i + 1);
        assert_ne!(first(5, i), first(6, i), "seeds at index {i}");
    }
}

#[test]
fn ensembles_are_reproducible() {
    let mech = BranchingMechanism::new(vec![MechanismRow {
        alpha: vec![-0.5],
        beta: 1.0,
        levy: LevyMeasure::FiniteAtoms(vec![Atom {
            z: vec![0.4],
            mass: 2.0,
        }]),
    }])
    .unwrap();
    let cfg = SimConfig {
        dt: 1e-2,
        master_seed: 99,
        ..Default::default()
    };
    let a = simulate_ensemble(&mech, &[1.0], 1.0, &cfg, 64).unwrap();
    let b = simulate_ensemble(&mech, &[1.0], 1.0, &cfg, 64).unwrap();
    assert_eq!(a, b);
    let single = simulate_ensemble(&mech, &[1.0], 1.0, &cfg, 1).unwrap();
    assert_eq!(
        single[0],
        simulate_path(&mech, &[1.0], 1.0, &cfg, 0).unwrap()
    );
    assert_ne!(a[0], a[1]);
}

#[test]
fn halving_dt_stays_within_band() {
    let mech = feller();
    let ext = ExtensionOptions::default();
    let n = 20_000;
    let coarse = SimConfig {
        dt: 2e-3,
        ..end_only(3)
    };
    let fine = SimConfig {
        dt: 1e-3,
        ..end_only(3)
    };
    let a = monte_carlo_laplace(
        &mech,
        &[1.0],
        1.0,
        &minus_one(),
        n,
        &coarse,
        DEFAULT_K,
        &ext,
    )
    .unwrap();
    let b =
        monte_carlo_laplace(&mech, &[1.0], 1.0, &minus_one(), n, &fine, DEFAULT_K, &ext).unwrap();
    let diff = (a.estimate() - b.estimate()).norm();
    assert!(diff <= 3.0 * b.std_error, "diff {diff}, se {}", b.std_error);
}

#[test]
fn std_error_shrinks_like_inverse_root_n() {
    let mech = feller();
    let ext = ExtensionOptions::default();
    let cfg = SimConfig {
        dt: 1e-2,
        ..end_only(8)
    };
    let small = monte_carlo_laplace(
        &mech,
        &[1.0],
        1.0,
        &minus_one(),
        5_000,
        &cfg,
        DEFAULT_K,
        &ext,
    )
    .unwrap();
    let large = monte_carlo_laplace(
        &mech,
        &[1.0],
        1.0,
        &minus_one(),
        20_000,
        &cfg,
        DEFAULT_K,
        &ext,
    )
    .unwrap();
    let ratio = small.std_error / large.std_error;
    assert!((ratio / 2.0 - 1.0).abs() <= 0.2, "ratio {ratio}");
}

#[test]
fn feller_reference_matches_riccati_oracle() {
    let flow = solve_cumulant(
        &feller(),
        &minus_one(),
        &uniform_grid(1.0, 4),
        &CumulantOptions::default(),
    )
    .unwrap();
    for (t, v) in flow.times.iter().zip(&flow.values) {
        let exact = common::feller_cumulant(2.0, -1.0, *t);
        assert!((v[0].re - exact).abs() <= 1e-10);
    }
}

#[test]
fn martingale_is_flat_and_exact_at_start() {
    let mech = feller();
    let reports = martingale_residual(
        &mech,
        &[1.0],
        &minus_one(),
        1.0,
        &[0.0, 0.5, 1.0],
        20_000,
        &end_only(21),
        DEFAULT_K,
        &CumulantOptions::default(),
    )
    .unwrap();
    assert_eq!(reports.len(), 3);
    assert_eq!(reports[0].std_error, 0.0);
    assert!((reports[0].estimate() - reports[0].reference()).norm() <= 1e-12);
    for r in &reports {
        assert!(r.pass, "{}", r.to_json());
        assert_eq!(r.pass, r.recompute_pass());
    }
}

#[test]
fn time_exponential_dynkin_matches_martingale() {
    let mech = feller();
    let ode = CumulantOptions::default();
    let cfg = SimConfig {
        dt: 1e-3,
        ..end_only(4)
    };
    let checkpoints = [0.25, 0.5, 1.0];
    let n = 2_000;
    let f = TestFunction::TimeExponential {
        lambda: minus_one(),
        u: 1.0,
    };
    let dynkin = dynkin_residual(
        &mech,
        &[1.0],
        &f,
        1.0,
        &checkpoints,
        n,
        &cfg,
        DEFAULT_K,
        &ode,
    )
    .unwrap();
    let mart = martingale_residual(
        &mech,
        &[1.0],
        &minus_one(),
        1.0,
        &checkpoints,
        n,
        &cfg,
        DEFAULT_K,
        &ode,
    )
    .unwrap();
    for (d, m) in dynkin.iter().zip(&mart) {
        let expected = m.estimate() - m.reference();
        assert!(
            (d.estimate() - expected).norm() <= 1e-3,
            "t={:?}: {} vs {expected}",
            d.meta.t,
            d.estimate()
        );
    }
}

#[test]
fn exponential_dynkin_on_feller_centres_on_zero() {
    let reports = dynkin_residual(
        &feller(),
        &[1.0],
        &TestFunction::Exponential(minus_one()),
        1.0,
        &[0.5, 1.0],
        20_000,
        &end_only(17),
        DEFAULT_K,
        &CumulantOptions::default(),
    )
    .unwrap();
    for r in &reports {
        assert!(r.pass, "{}", r.to_json());
    }
}

#[test]
fn exponential_dynkin_on_drift_only_is_small() {
    let mech = BranchingMechanism::linear(vec![vec![-0.7]]).unwrap();
    let reports = dynkin_residual(
        &mech,
        &[2.0],
        &TestFunction::Exponential(LeftHalfPoint::real(&[-0.5]).unwrap()),
        1.0,
        &[1.0],
        1,
        &SimConfig::default(),
        DEFAULT_K,
        &CumulantOptions::default(),
    )
    .unwrap();
    assert!(reports[0].estimate().norm() <= 1e-3);
}

#[test]
fn branching_pairs_on_drift_only_are_exact() {
    let mech = BranchingMechanism::linear(vec![vec![-0.3]]).unwrap();
    let cfg = SimConfig {
        dt: 1e-4,
        ..end_only(0)
    };
    let r = branching_property_check(
        &mech,
        &[0.5],
        &[1.5],
        1.0,
        &minus_one(),
        4,
        &cfg,
        DEFAULT_K,
        &ExtensionOptions::default(),
    )
    .unwrap();
    assert_eq!(r.std_error, 0.0);
    assert!((r.estimate() - r.reference()).norm() <= 1e-4);
}
