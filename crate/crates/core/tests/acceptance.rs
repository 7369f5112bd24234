//! Acceptance suite: one PASS/FAIL line per criterion, each with its runtime
//! limit. Runs without the libtest harness so the lines print in order.

mod common;

use std::process::Command;
use std::time::{Duration, Instant};

use cbranch::cumulant::{
    conservativeness_verdict, minimal_solution_at_zero, nonuniqueness_residual, semigroup_defect,
    solve_cumulant, CumulantOptions, ExtensionOptions, Verdict,
};
use cbranch::levy::LevyMeasure;
use cbranch::mechanism::stable_mechanism;
use cbranch::simulator::{RecordGrid, SimConfig};
use cbranch::verify::{
    branching_property_check, generator_check, martingale_residual, monte_carlo_laplace, DEFAULT_K,
};
use cbranch::{BranchingMechanism, LeftHalfPoint, MechanismRow};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

type Criterion = fn() -> Outcome;

fn grid_01_to_5() -> Vec<f64> {
    (1..=50).map(|i| i as f64 / 10.0).collect()
}

fn with_zero(times: &[f64]) -> Vec<f64> {
    std::iter::once(0.0).chain(times.iter().copied()).collect()
}

fn feller_config(seed: u64) -> SimConfig {
    SimConfig {
        dt: 1e-3,
        master_seed: seed,
        record: RecordGrid::EndOnly,
        ..Default::default()
    }
}

fn stable_flow_error(sigma: f64, alpha: f64, exact: impl Fn(f64) -> f64) -> f64 {
    let mech = stable_mechanism(sigma, alpha).unwrap();
    let times = with_zero(&grid_01_to_5());
    let flow = solve_cumulant(
        &mech,
        &LeftHalfPoint::real(&[-1.0]).unwrap(),
        &times,
        &CumulantOptions::default(),
    )
    .unwrap();
    flow.times
        .iter()
        .zip(&flow.values)
        .skip(1)
        .map(|(t, v)| (v[0].re - exact(*t)).abs() / exact(*t).abs())
        .fold(0.0, f64::max)
}

fn linear_stable_flow() -> Outcome {
    let err = stable_flow_error(1.0, 1.0, |t| -t.exp());
    Outcome {
        pass: err <= 1e-8,
        detail: format!("max relative error {err:.3e} (limit 1e-8)"),
    }
}

fn square_stable_flow() -> Outcome {
    let err = stable_flow_error(2.0, 0.5, |t| -(t + 1.0).powi(2));
    Outcome {
        pass: err <= 1e-8,
        detail: format!("max relative error {err:.3e} (limit 1e-8)"),
    }
}

fn minimal_solution() -> Outcome {
    let times = [0.0, 0.5, 1.0, 2.0];
    let mut worst = 0.0f64;
    let mut converged = true;
    for alpha in [0.3, 0.5, 0.8] {
        let mech = stable_mechanism(1.0, alpha).unwrap();
        let ext = minimal_solution_at_zero(&mech, &times, &ExtensionOptions::default()).unwrap();
        converged &= ext.converged;
        for (t, v) in ext.flow.times.iter().zip(&ext.flow.values).skip(1) {
            let exact = -((1.0 - alpha) * t).powf(1.0 / (1.0 - alpha));
            worst = worst.max((v[0].re - exact).abs());
        }
    }
    Outcome {
        pass: converged && worst <= 1e-6,
        detail: format!("max abs error {worst:.3e} (limit 1e-6), converged {converged}"),
    }
}

fn dichotomy() -> Outcome {
    let ext = ExtensionOptions::default();
    let mut pass = true;
    let mut seen = Vec::new();
    for (alpha, want) in [
        (0.3, Verdict::NonConservative),
        (0.5, Verdict::NonConservative),
        (0.8, Verdict::NonConservative),
        (1.0, Verdict::ConservativeEvidence),
    ] {
        let mech = stable_mechanism(1.0, alpha).unwrap();
        let got = conservativeness_verdict(&mech, 10.0, 1e-7, &ext)
            .unwrap()
            .verdict;
        pass &= got == want;
        seen.push(format!("α={alpha}: {}", got.as_str()));
    }
    Outcome {
        pass,
        detail: seen.join(", "),
    }
}

fn nonuniqueness() -> Outcome {
    let mut worst = 0.0f64;
    for r in [0.0, 0.5, 1.0, 2.0, f64::INFINITY] {
        worst = worst.max(nonuniqueness_residual(2.0, 0.5, r, 3.0).unwrap());
    }
    Outcome {
        pass: worst <= 1e-9,
        detail: format!("max residual {worst:.3e} (limit 1e-9)"),
    }
}

fn semigroup() -> Outcome {
    let mut worst = 0.0f64;
    let opts = CumulantOptions::default();
    for seed in 0..20u64 {
        let mech = common::random_atoms_mechanism(1000 + seed, 3, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lam: Vec<Complex64> = (0..mech.m)
            .map(|_| Complex64::new(rng.random_range(-2.0..-0.05), rng.random_range(-1.0..1.0)))
            .collect();
        let lam = LeftHalfPoint::new(lam).unwrap();
        for s in [0.3, 0.7] {
            for t in [0.3, 0.7] {
                worst = worst.max(semigroup_defect(&mech, &lam, s, t, &opts).unwrap());
            }
        }
    }
    Outcome {
        pass: worst <= 1e-6,
        detail: format!("max defect {worst:.3e} over 20 mechanisms (limit 1e-6)"),
    }
}

fn stable_rows_mechanism(rng: &mut ChaCha8Rng) -> BranchingMechanism {
    let m = rng.random_range(1..=2);
    let rows = (0..m)
        .map(|i| MechanismRow {
            alpha: (0..m)
                .map(|j| {
                    if i == j {
                        rng.random_range(-1.0..1.0)
                    } else {
                        rng.random_range(0.0..0.5)
                    }
                })
                .collect(),
            beta: rng.random_range(0.0..1.0),
            levy: LevyMeasure::axis_stable(
                i,
                rng.random_range(0.2..1.9),
                rng.random_range(0.2..2.0),
            ),
        })
        .collect();
    BranchingMechanism::new(rows).unwrap()
}

fn generator_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst_atoms = 0.0f64;
    let mut worst_stable = 0.0f64;
    for trial in 0..10 {
        let stable = trial % 2 == 1;
        let mech = if stable {
            stable_rows_mechanism(&mut rng)
        } else {
            common::random_atoms_mechanism(rng.random(), 3, 5)
        };
        let lam: Vec<Complex64> = (0..mech.m)
            .map(|_| Complex64::new(rng.random_range(-2.0..-0.1), rng.random_range(-1.5..1.5)))
            .collect();
        let x: Vec<f64> = (0..mech.m).map(|_| rng.random_range(0.1..2.0)).collect();
        let check = generator_check(&mech, &LeftHalfPoint::new(lam).unwrap(), &x).unwrap();
        let slot = if stable {
            &mut worst_stable
        } else {
            &mut worst_atoms
        };
        *slot = slot.max(check.rel_error);
    }
    Outcome {
        pass: worst_atoms <= 1e-6 && worst_stable <= 1e-5,
        detail: format!(
            "max relative error {worst_atoms:.3e} atoms (limit 1e-6), {worst_stable:.3e} stable (limit 1e-5)"
        ),
    }
}

fn feller_laplace() -> Outcome {
    let mech = BranchingMechanism::feller(2.0).unwrap();
    let lam = LeftHalfPoint::real(&[-1.0]).unwrap();
    let oracle = common::feller_cumulant(2.0, -1.0, 1.0).exp();
    let solved = solve_cumulant(&mech, &lam, &[0.0, 1.0], &CumulantOptions::default())
        .unwrap()
        .last()[0]
        .re
        .exp();
    let r = monte_carlo_laplace(
        &mech,
        &[1.0],
        1.0,
        &lam,
        100_000,
        &feller_config(8),
        DEFAULT_K,
        &ExtensionOptions::default(),
    )
    .unwrap();
    let oracle_ok = (solved - oracle).abs() <= 1e-9 && (r.reference().re - oracle).abs() <= 1e-9;
    let dev = (r.estimate().re - oracle).abs();
    Outcome {
        pass: oracle_ok && dev <= 3.0 * r.std_error,
        detail: format!(
            "estimate {:.5} vs {oracle:.5}, |Δ| = {:.2} SE (limit 3); oracle agrees with solver: {oracle_ok}",
            r.estimate().re,
            dev / r.std_error
        ),
    }
}

fn martingale_flatness() -> Outcome {
    let mech = BranchingMechanism::feller(2.0).unwrap();
    let reports = martingale_residual(
        &mech,
        &[1.0],
        &LeftHalfPoint::real(&[-1.0]).unwrap(),
        1.0,
        &[0.0, 0.5, 1.0],
        100_000,
        &feller_config(9),
        DEFAULT_K,
        &CumulantOptions::default(),
    )
    .unwrap();
    let oracle = common::feller_cumulant(2.0, -1.0, 1.0).exp();
    let start = &reports[0];
    let exact_start = start.std_error == 0.0 && start.estimate() == start.reference();
    let mut pass = exact_start && (start.reference().re - oracle).abs() <= 1e-9;
    let mut parts = Vec::new();
    for r in &reports {
        let dev = (r.estimate().re - oracle).abs();
        pass &= if r.std_error > 0.0 {
            dev <= 3.0 * r.std_error
        } else {
            r.estimate() == r.reference()
        };
        parts.push(format!(
            "t={}: {:.5} ({:.2} SE)",
            r.meta.t.unwrap(),
            r.estimate().re,
            if r.std_error > 0.0 {
                dev / r.std_error
            } else {
                0.0
            }
        ));
    }
    Outcome {
        pass,
        detail: format!(
            "{} vs {oracle:.5}, t=0 exact: {exact_start}",
            parts.join(", ")
        ),
    }
}

fn survival_config(seed: u64) -> SimConfig {
    SimConfig {
        eps: 1e-3,
        truncation_n: 1e6,
        master_seed: seed,
        record: RecordGrid::EndOnly,
        ..Default::default()
    }
}

fn survival() -> Outcome {
    let mech = stable_mechanism(2.0, 0.5).unwrap();
    let n = 10_000;
    let r = monte_carlo_laplace(
        &mech,
        &[1.0],
        1.0,
        &LeftHalfPoint::zero(1),
        n,
        &survival_config(10),
        DEFAULT_K,
        &ExtensionOptions::default(),
    )
    .unwrap();
    let p = (-1.0f64).exp();
    let band = (0.05 * p).max(4.0 * (p * (1.0 - p) / n as f64).sqrt());
    let dev = (r.estimate().re - p).abs();
    Outcome {
        pass: dev <= band && (r.reference().re - p).abs() <= 1e-6,
        detail: format!(
            "surviving fraction {:.4} vs {p:.4}, |Δ| {dev:.4} (band {band:.4})",
            r.estimate().re
        ),
    }
}

fn branching() -> Outcome {
    let mech = BranchingMechanism::feller(2.0).unwrap();
    let r = branching_property_check(
        &mech,
        &[0.5],
        &[0.5],
        1.0,
        &LeftHalfPoint::real(&[-1.0]).unwrap(),
        100_000,
        &feller_config(11),
        DEFAULT_K,
        &ExtensionOptions::default(),
    )
    .unwrap();
    let oracle = common::feller_cumulant(2.0, -1.0, 1.0).exp();
    let dev = (r.estimate().re - oracle).abs();
    Outcome {
        pass: dev <= 3.0 * r.std_error,
        detail: format!(
            "estimate {:.5} vs {oracle:.5}, |Δ| = {:.2} SE (limit 3)",
            r.estimate().re,
            dev / r.std_error
        ),
    }
}

fn cli_report(threads: &str, args: &[&str]) -> Vec<u8> {
    let o = Command::new(env!("CARGO_BIN_EXE_cbranch"))
        .args(args)
        .env("CB_THREADS", threads)
        .output()
        .expect("binary runs");
    assert!(
        matches!(o.status.code(), Some(0) | Some(2)),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    o.stdout
}

fn determinism() -> Outcome {
    let feller = [
        "verify",
        "laplace",
        "--mech",
        "-",
        "--lambda=-1",
        "--x0",
        "1",
        "--t",
        "1",
        "--paths",
        "100000",
        "--dt",
        "0.001",
        "--seed",
        "8",
    ];
    let survival = [
        "verify",
        "laplace",
        "--mech",
        "stable:2,0.5",
        "--lambda=0",
        "--x0",
        "1",
        "--t",
        "1",
        "--paths",
        "10000",
        "--eps",
        "0.001",
        "--truncate",
        "1000000",
        "--seed",
        "10",
    ];
    let dir = tempfile::tempdir().unwrap();
    let feller_file = dir.path().join("feller.json");
    std::fs::write(
        &feller_file,
        r#"{"m":1,"rows":[{"alpha":[0],"beta":2,"levy":{"type":"zero"}}]}"#,
    )
    .unwrap();
    let mut feller: Vec<&str> = feller.to_vec();
    feller[3] = feller_file.to_str().unwrap();
    let mut identical = true;
    let mut sizes = Vec::new();
    for args in [&feller[..], &survival[..]] {
        let runs: Vec<Vec<u8>> = ["1", "1", "2"]
            .iter()
            .map(|t| cli_report(t, args))
            .collect();
        identical &= !runs[0].is_empty() && runs.windows(2).all(|w| w[0] == w[1]);
        sizes.push(runs[0].len());
    }
    Outcome {
        pass: identical,
        detail: format!(
            "reports of {sizes:?} bytes identical across repeats and CB_THREADS 1/2: {identical}"
        ),
    }
}

fn main() {
    let criteria: [(u32, &str, Criterion, Duration); 12] = [
        (
            1,
            "stable flow, α=1",
            linear_stable_flow,
            Duration::from_secs(1),
        ),
        (
            2,
            "stable flow, α=1/2",
            square_stable_flow,
            Duration::from_secs(1),
        ),
        (
            3,
            "minimal solution at zero",
            minimal_solution,
            Duration::from_secs(10),
        ),
        (
            4,
            "conservativeness dichotomy",
            dichotomy,
            Duration::from_secs(10),
        ),
        (
            5,
            "non-uniqueness family",
            nonuniqueness,
            Duration::from_secs(5),
        ),
        (6, "semigroup law", semigroup, Duration::from_secs(30)),
        (
            7,
            "generator identity",
            generator_identity,
            Duration::from_secs(10),
        ),
        (
            8,
            "Monte Carlo Laplace, Feller",
            feller_laplace,
            Duration::from_secs(180),
        ),
        (
            9,
            "martingale flatness",
            martingale_flatness,
            Duration::from_secs(180),
        ),
        (
            10,
            "non-conservative survival",
            survival,
            Duration::from_secs(300),
        ),
        (
            11,
            "branching property",
            branching,
            Duration::from_secs(300),
        ),
        (12, "determinism", determinism, Duration::from_secs(600)),
    ];
    let mut failures = 0;
    for (id, name, run, limit) in criteria {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let pass = outcome.pass && elapsed <= limit;
        failures += usize::from(!pass);
        println!(
            "criterion {id:>2} {}: {name}: {} [{:.2}s, limit {}s]",
            if pass { "PASS" } else { "FAIL" },
            outcome.detail,
            elapsed.as_secs_f64(),
            limit.as_secs()
        );
    }
    if failures > 0 {
        eprintln!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}
