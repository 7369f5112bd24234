//! Shared fixtures and independent oracles for the integration tests.

#![allow(dead_code)]

use cbranch::levy::{Atom, LevyMeasure};
use cbranch::{BranchingMechanism, MechanismRow};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random admissible mechanism with finitely many atoms per row.
pub fn random_atoms_mechanism(seed: u64, max_m: usize, max_atoms: usize) -> BranchingMechanism {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = rng.random_range(1..=max_m);
    let rows = (0..m)
        .map(|i| {
            let alpha = (0..m)
                .map(|j| {
                    if i == j {
                        rng.random_range(-2.0..1.0)
                    } else {
                        rng.random_range(0.0..1.0)
                    }
                })
                .collect();
            let beta = if rng.random_bool(0.7) {
                rng.random_range(0.0..2.0)
            } else {
                0.0
            };
            let n_atoms = rng.random_range(0..=max_atoms);
            let atoms: Vec<Atom> = (0..n_atoms)
                .map(|_| {
                    let mut z: Vec<f64> = (0..m)
                        .map(|_| {
                            if rng.random_bool(0.6) {
                                rng.random_range(0.0..2.0)
                            } else {
                                0.0
                            }
                        })
                        .collect();
                    if z.iter().all(|v| *v == 0.0) {
                        z[i] = rng.random_range(0.05..2.0);
                    }
                    Atom {
                        z,
                        mass: rng.random_range(0.05..2.0),
                    }
                })
                .collect();
            let levy = if atoms.is_empty() {
                LevyMeasure::Zero
            } else {
                LevyMeasure::FiniteAtoms(atoms)
            };
            MechanismRow { alpha, beta, levy }
        })
        .collect();
    BranchingMechanism::new(rows).expect("generator yields admissible mechanisms")
}

/// `exp(tA)` by Taylor series with scaling and squaring.
pub fn expm(a: &[Vec<f64>], t: f64) -> Vec<Vec<f64>> {
    let n = a.len();
    let norm: f64 = a
        .iter()
        .map(|r| r.iter().map(|v| (v * t).abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let scale = t / 2f64.powi(squarings);
    let mul = |x: &[Vec<f64>], y: &[Vec<f64>]| -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| (0..n).map(|k| x[i][k] * y[k][j]).sum())
                    .collect()
            })
            .collect()
    };
    let mut result: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let mut term = result.clone();
    let scaled: Vec<Vec<f64>> = a
        .iter()
        .map(|r| r.iter().map(|v| v * scale).collect())
        .collect();
    for k in 1..30 {
        term = mul(&term, &scaled)
            .into_iter()
            .map(|r| r.into_iter().map(|v| v / k as f64).collect())
            .collect();
        for i in 0..n {
            for j in 0..n {
                result[i][j] += term[i][j];
            }
        }
    }
    for _ in 0..squarings {
        result = mul(&result, &result);
    }
    result
}

/// Backward-equation solution for the Feller mechanism `H(λ) = ½βλ²`:
/// `K(t, λ) = λ / (1 − ½βλt)`.
pub fn feller_cumulant(beta: f64, lambda: f64, t: f64) -> f64 {
    lambda / (1.0 - 0.5 * beta * lambda * t)
}
