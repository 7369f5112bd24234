//! Branching mechanisms `H = (H_1, …, H_m)` in Lévy–Khintchine form.
//!
//! Each coordinate carries a drift row `α_i`, a diffusion coefficient `β_i`
//! and a jump measure `π_i`:
//!
//! ```text
//! H_i(λ) = ⟨α_i, λ⟩ + ½ β_i λ_i² + ∫ (e^{⟨λ,z⟩} − 1 − λ_i z_i 1{|z|≤1}) π_i(dz)
//! ```
//!
//! The alternative parameterization with compensation `λ_i z_i / (1+|z|²)`
//! and drift `a_i` is available through [`AFormMechanism`].

mod schema;

use std::fmt;

use num_complex::Complex64;
use statrs::function::gamma::gamma;

use crate::error::{invalid, CbError, Result};
use crate::levy::{LevyMeasure, TailServices};

pub use schema::{AtomSpec, LevySpec, MechanismFile, RowSpec};

/// A point of the closed left half-space `ℂ₋^m`.
#[derive(Debug, Clone, PartialEq)]
pub struct LeftHalfPoint(Vec<Complex64>);

impl LeftHalfPoint {
    pub fn new(components: Vec<Complex64>) -> Result<Self> {
        if components.is_empty() {
            return Err(invalid("a point of ℂ₋^m needs at least one component"));
        }
        for (i, c) in components.iter().enumerate() {
            if !(c.re <= 0.0) || !c.im.is_finite() {
                return Err(invalid(format!(
                    "component {} = {c} is outside the closed left half-plane",
                    i + 1
                )));
            }
        }
        Ok(Self(components))
    }

    pub fn real(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    pub fn zero(m: usize) -> Self {
        Self(vec![Complex64::new(0.0, 0.0); m])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<Complex64> {
        self.0
    }

    /// Every component has strictly negative real part.
    pub fn is_interior(&self) -> bool {
        self.0.iter().all(|c| c.re < 0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|c| c.re == 0.0 && c.im == 0.0)
    }

    pub fn is_real(&self) -> bool {
        self.0.iter().all(|c| c.im == 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MechanismRow {
    pub alpha: Vec<f64>,
    pub beta: f64,
    pub levy: LevyMeasure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchingMechanism {
    pub m: usize,
    pub rows: Vec<MechanismRow>,
}

/// One failed admissibility rule.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    /// One-based coordinate, absent for whole-mechanism rules.
    pub coordinate: Option<usize>,
    pub rule: &'static str,
    pub value: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.coordinate {
            Some(i) => write!(f, "coordinate {i}: {} (value {})", self.rule, self.value),
            None => write!(f, "{} (value {})", self.rule, self.value),
        }
    }
}

pub mod rules {
    pub const DIMENSION: &str = "dimension mismatch";
    pub const NON_FINITE: &str = "non-finite parameter";
    pub const OFF_DIAGONAL: &str = "off-diagonal drift negative";
    pub const NEGATIVE_DIFFUSION: &str = "negative diffusion";
    pub const ATOM_OUTSIDE: &str = "atom outside orthant";
    pub const ATOM_AT_ORIGIN: &str = "atom at origin";
    pub const ATOM_MASS: &str = "nonpositive atom mass";
    pub const AXIS_RANGE: &str = "axis out of range";
    pub const STABLE_INDEX: &str = "stable index out of range";
    pub const STABLE_SCALE: &str = "nonpositive stable scale";
    pub const CROSS_AXIS: &str = "cross-axis first-moment divergence";
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn pass(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Values of `H(λ)` with the quadrature bookkeeping behind them.
#[derive(Debug, Clone)]
pub struct HValue {
    pub values: Vec<Complex64>,
    /// Largest quadrature error estimate among the coordinates.
    pub max_error: f64,
    /// Set when λ sits on `∂ℂ₋^m` and a stable integral missed its tolerance.
    pub oscillatory: bool,
}

impl BranchingMechanism {
    pub fn new(rows: Vec<MechanismRow>) -> Result<Self> {
        let mech = Self {
            m: rows.len(),
            rows,
        };
        mech.ensure_valid()?;
        Ok(mech)
    }

    /// Linear mechanism with drift matrix `alpha` and nothing else.
    pub fn linear(alpha: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(
            alpha
                .into_iter()
                .map(|row| MechanismRow {
                    alpha: row,
                    beta: 0.0,
                    levy: LevyMeasure::Zero,
                })
                .collect(),
        )
    }

    /// One-dimensional Feller diffusion `H(λ) = ½βλ²`.
    pub fn feller(beta: f64) -> Result<Self> {
        Self::new(vec![MechanismRow {
            alpha: vec![0.0],
            beta,
            levy: LevyMeasure::Zero,
        }])
    }

    pub fn validate(&self) -> ValidationReport {
        let mut v = Vec::new();
        let m = self.m;
        let mut push = |coordinate: Option<usize>, rule, value| {
            v.push(Violation {
                coordinate,
                rule,
                value,
            })
        };
        if m == 0 || self.rows.len() != m {
            push(None, rules::DIMENSION, self.rows.len() as f64);
            return ValidationReport { violations: v };
        }
        for (i, row) in self.rows.iter().enumerate() {
            let coord = Some(i + 1);
            if row.alpha.len() != m {
                push(coord, rules::DIMENSION, row.alpha.len() as f64);
            }
            for (j, &a) in row.alpha.iter().enumerate() {
                if !a.is_finite() {
                    push(coord, rules::NON_FINITE, a);
                } else if j != i && a < 0.0 {
                    push(coord, rules::OFF_DIAGONAL, a);
                }
            }
            if !row.beta.is_finite() {
                push(coord, rules::NON_FINITE, row.beta);
            } else if row.beta < 0.0 {
                push(coord, rules::NEGATIVE_DIFFUSION, row.beta);
            }
            match &row.levy {
                LevyMeasure::Zero => {}
                LevyMeasure::FiniteAtoms(atoms) => {
                    for atom in atoms {
                        if atom.z.len() != m {
                            push(coord, rules::DIMENSION, atom.z.len() as f64);
                            continue;
                        }
                        if let Some(&bad) = atom.z.iter().find(|z| !(z.is_finite() && **z >= 0.0)) {
                            push(coord, rules::ATOM_OUTSIDE, bad);
                        } else if atom.z.iter().all(|&z| z == 0.0) {
                            push(coord, rules::ATOM_AT_ORIGIN, 0.0);
                        }
                        if !(atom.mass.is_finite() && atom.mass > 0.0) {
                            push(coord, rules::ATOM_MASS, atom.mass);
                        }
                    }
                }
                LevyMeasure::AxisStable(s) => {
                    if s.axis >= m {
                        push(coord, rules::AXIS_RANGE, (s.axis + 1) as f64);
                    }
                    if !(s.index > 0.0 && s.index < 2.0) {
                        push(coord, rules::STABLE_INDEX, s.index);
                    } else if s.axis != i && s.index >= 1.0 {
                        push(coord, rules::CROSS_AXIS, s.index);
                    }
                    if !(s.scale.is_finite() && s.scale > 0.0) {
                        push(coord, rules::STABLE_SCALE, s.scale);
                    }
                }
            }
        }
        ValidationReport { violations: v }
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let report = self.validate();
        if report.pass() {
            Ok(())
        } else {
            Err(CbError::InvalidMechanism(report.violations))
        }
    }

    /// Evaluates `H(λ)`. `λ` must lie in `ℂ₋^m`.
    pub fn evaluate(&self, lambda: &[Complex64]) -> Result<HValue> {
        if lambda.len() != self.m {
            return Err(invalid(format!(
                "λ has {} components, mechanism has dimension {}",
                lambda.len(),
                self.m
            )));
        }
        if let Some(c) = lambda.iter().find(|c| !(c.re <= 0.0)) {
            return Err(invalid(format!("λ component {c} outside ℂ₋")));
        }
        let boundary = lambda.iter().any(|c| c.re == 0.0);
        let mut values = Vec::with_capacity(self.m);
        let mut max_error: f64 = 0.0;
        let mut oscillatory = false;
        for (i, row) in self.rows.iter().enumerate() {
            let mut h: Complex64 = row.alpha.iter().zip(lambda).map(|(a, l)| l * *a).sum();
            h += 0.5 * row.beta * lambda[i] * lambda[i];
            let jump = row.levy.jump_integral(lambda, i)?;
            if !jump.converged {
                if boundary {
                    oscillatory = true;
                } else {
                    return Err(CbError::Quadrature {
                        value: jump.value.re,
                        error: jump.error,
                    });
                }
            }
            max_error = max_error.max(jump.error);
            values.push(h + jump.value);
        }
        Ok(HValue {
            values,
            max_error,
            oscillatory,
        })
    }

    pub fn eval(&self, lambda: &LeftHalfPoint) -> Result<Vec<Complex64>> {
        Ok(self.evaluate(lambda.as_slice())?.values)
    }

    /// Tail decompositions of every `π_i` at cutoff `eps`.
    pub fn tail_services(&self, eps: f64) -> Result<Vec<TailServices>> {
        self.rows
            .iter()
            .map(|r| r.levy.tail_services(eps, self.m))
            .collect()
    }

    pub fn has_jumps(&self) -> bool {
        self.rows
            .iter()
            .any(|r| !matches!(r.levy, LevyMeasure::Zero))
    }
}

/// `H(λ)` for a valid mechanism.
pub fn eval_mechanism(mech: &BranchingMechanism, lambda: &LeftHalfPoint) -> Result<Vec<Complex64>> {
    mech.ensure_valid()?;
    mech.eval(lambda)
}

pub fn validate_mechanism(mech: &BranchingMechanism) -> ValidationReport {
    mech.validate()
}

/// `α_i` from `a_i`: off-diagonal entries unchanged, the diagonal shifted by
/// `∫ z_i (1{|z|≤1} − 1/(1+|z|²)) π_i(dz)`.
pub fn convert_a_to_alpha(a_row: &[f64], levy: &LevyMeasure, i: usize) -> Result<Vec<f64>> {
    if i >= a_row.len() {
        return Err(invalid(format!("coordinate {i} out of range")));
    }
    let shift = levy.a_to_alpha_shift(i);
    if !shift.converged {
        return Err(CbError::Quadrature {
            value: shift.value.re,
            error: shift.error,
        });
    }
    let mut alpha = a_row.to_vec();
    alpha[i] += shift.value.re;
    Ok(alpha)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AFormRow {
    pub a: Vec<f64>,
    pub beta: f64,
    pub levy: LevyMeasure,
}

/// Mechanism given with the `1/(1+|z|²)` compensation.
#[derive(Debug, Clone, PartialEq)]
pub struct AFormMechanism {
    pub rows: Vec<AFormRow>,
}

impl AFormMechanism {
    pub fn eval(&self, lambda: &[Complex64]) -> Result<Vec<Complex64>> {
        self.rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let mut h: Complex64 = row.a.iter().zip(lambda).map(|(a, l)| l * *a).sum();
                h += 0.5 * row.beta * lambda[i] * lambda[i];
                let jump = row.levy.jump_integral_a_form(lambda, i)?;
                if !jump.converged {
                    return Err(CbError::Quadrature {
                        value: jump.value.re,
                        error: jump.error,
                    });
                }
                Ok(h + jump.value)
            })
            .collect()
    }

    pub fn to_alpha_form(&self) -> Result<BranchingMechanism> {
        let rows = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                Ok(MechanismRow {
                    alpha: convert_a_to_alpha(&row.a, &row.levy, i)?,
                    beta: row.beta,
                    levy: row.levy.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        BranchingMechanism::new(rows)
    }
}

/// The one-dimensional mechanism `H(λ) = −σ(−λ)^α`, `0 < α ≤ 1`.
///
/// For `α < 1` the jump part is `c r^{−1−α} dr` with `c = σα/Γ(1−α)` and the
/// drift `c/(1−α)` cancels the `1{r≤1}` compensation.
pub fn stable_mechanism(sigma: f64, alpha: f64) -> Result<BranchingMechanism> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(invalid(format!("stable σ must be positive, got {sigma}")));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(invalid(format!("stable α must lie in (0, 1], got {alpha}")));
    }
    if alpha == 1.0 {
        return BranchingMechanism::linear(vec![vec![sigma]]);
    }
    let c = stable_scale(sigma, alpha);
    BranchingMechanism::new(vec![MechanismRow {
        alpha: vec![c / (1.0 - alpha)],
        beta: 0.0,
        levy: LevyMeasure::axis_stable(0, alpha, c),
    }])
}

/// `σα / Γ(1−α)`.
pub fn stable_scale(sigma: f64, alpha: f64) -> f64 {
    sigma * alpha / gamma(1.0 - alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy::Atom;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn single_atom() -> BranchingMechanism {
        BranchingMechanism::new(vec![MechanismRow {
            alpha: vec![0.0],
            beta: 0.0,
            levy: LevyMeasure::FiniteAtoms(vec![Atom {
                z: vec![1.0],
                mass: 1.0,
            }]),
        }])
        .unwrap()
    }

    #[test]
    fn gamma_half_is_sqrt_pi() {
        assert!((gamma(0.5) - std::f64::consts::PI.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn half_stable_example() {
        let mech = stable_mechanism(2.0, 0.5).unwrap();
        let h = mech.eval(&LeftHalfPoint::real(&[-1.0]).unwrap()).unwrap();
        assert!((h[0].re + 2.0).abs() < 1e-12);
        assert_eq!(h[0].im, 0.0);
    }

    #[test]
    fn linear_stable_case() {
        let mech = stable_mechanism(1.0, 1.0).unwrap();
        let h = mech.eval(&LeftHalfPoint::real(&[-3.0]).unwrap()).unwrap();
        assert_eq!(h[0], c(-3.0));
    }

    #[test]
    fn stable_point_seven() {
        let mech = stable_mechanism(1.0, 0.7).unwrap();
        let h = mech.eval(&LeftHalfPoint::real(&[-2.0]).unwrap()).unwrap();
        assert!((h[0].re + 2f64.powf(0.7)).abs() < 1e-10);
        assert!((h[0].re + 1.624_504_792_712_471).abs() < 1e-10);
    }

    #[test]
    fn stable_family_relative_accuracy() {
        for &(sigma, alpha) in &[(1.0, 0.3), (2.0, 0.5), (0.7, 0.8), (1.5, 0.95), (3.0, 1.0)] {
            let mech = stable_mechanism(sigma, alpha).unwrap();
            for &l in &[-0.1, -1.0, -10.0] {
                let h = mech.eval(&LeftHalfPoint::real(&[l]).unwrap()).unwrap()[0];
                let want = sigma * (-l).powf(alpha);
                assert!(
                    (h.re + want).abs() <= 1e-8 * want,
                    "σ={sigma} α={alpha} λ={l}"
                );
            }
        }
    }

    #[test]
    fn zero_maps_to_zero() {
        for mech in [single_atom(), stable_mechanism(2.0, 0.5).unwrap()] {
            let h = mech.eval(&LeftHalfPoint::zero(1)).unwrap();
            assert_eq!(h, vec![c(0.0)]);
        }
    }

    #[test]
    fn single_atom_eval() {
        let h = single_atom()
            .eval(&LeftHalfPoint::real(&[-1.0]).unwrap())
            .unwrap();
        assert!((h[0].re - 0.367_879_441_171_442_3).abs() < 1e-15);
    }

    #[test]
    fn validation_rules() {
        let ok = BranchingMechanism {
            m: 2,
            rows: vec![
                MechanismRow {
                    alpha: vec![-3.0, 0.5],
                    beta: 1.0,
                    levy: LevyMeasure::Zero,
                },
                MechanismRow {
                    alpha: vec![0.2, -1.0],
                    beta: 1.0,
                    levy: LevyMeasure::Zero,
                },
            ],
        };
        assert!(ok.validate().pass());

        let mut neg = ok.clone();
        neg.rows[0].alpha[1] = -0.1;
        let r = neg.validate();
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].rule, rules::OFF_DIAGONAL);
        assert_eq!(r.violations[0].coordinate, Some(1));

        let mut cross = ok.clone();
        cross.rows[0].levy = LevyMeasure::axis_stable(1, 1.5, 1.0);
        let r = cross.validate();
        assert_eq!(r.violations[0].rule, rules::CROSS_AXIS);

        let mut own = ok.clone();
        own.rows[1].levy = LevyMeasure::axis_stable(1, 1.5, 1.0);
        assert!(own.validate().pass());

        let mut bad_beta = ok;
        bad_beta.rows[1].beta = -1.0;
        assert_eq!(
            bad_beta.validate().violations[0].rule,
            rules::NEGATIVE_DIFFUSION
        );
    }

    #[test]
    fn eval_rejects_invalid_mechanism() {
        let bad = BranchingMechanism {
            m: 1,
            rows: vec![MechanismRow {
                alpha: vec![0.0],
                beta: -2.0,
                levy: LevyMeasure::Zero,
            }],
        };
        assert!(matches!(
            eval_mechanism(&bad, &LeftHalfPoint::zero(1)),
            Err(CbError::InvalidMechanism(_))
        ));
    }

    #[test]
    fn a_to_alpha_examples() {
        let a = convert_a_to_alpha(&[1.0, 2.0], &LevyMeasure::Zero, 0).unwrap();
        assert_eq!(a, vec![1.0, 2.0]);
        let one = LevyMeasure::FiniteAtoms(vec![Atom {
            z: vec![1.0],
            mass: 1.0,
        }]);
        assert!((convert_a_to_alpha(&[0.0], &one, 0).unwrap()[0] - 0.5).abs() < 1e-15);
        let two = LevyMeasure::FiniteAtoms(vec![Atom {
            z: vec![2.0],
            mass: 1.0,
        }]);
        assert!((convert_a_to_alpha(&[0.0], &two, 0).unwrap()[0] + 0.4).abs() < 1e-15);
    }

    #[test]
    fn left_half_point_rejects_right_half() {
        assert!(LeftHalfPoint::real(&[0.1]).is_err());
        assert!(LeftHalfPoint::new(vec![]).is_err());
        let p = LeftHalfPoint::new(vec![Complex64::new(0.0, 2.0)]).unwrap();
        assert!(!p.is_interior());
    }
}
