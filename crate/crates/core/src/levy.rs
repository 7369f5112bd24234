//! Jump measures on `ℝ₊^m ∖ {0}` in three parametric forms, with the
//! integrals the branching mechanism needs and the tail decomposition the
//! simulator needs.
//!
//! Norms are ℓ¹ throughout: `|z| = z_1 + … + z_m`.

use std::sync::OnceLock;

use num_complex::Complex64;
use rand::Rng;

use crate::error::{CbError, Result};
use crate::quad::{self, QuadOptions, QuadResult};

/// Below this radius AxisStable integrands are integrated by power series.
const SERIES_CUTOFF: f64 = 1e-6;

/// Upper end of the rotated tail contour, in units of `1/|μ|`; `e^{-50}` is
/// below any tolerance we care about.
const CONTOUR_LENGTH: f64 = 50.0;

pub(crate) fn quad_opts() -> QuadOptions {
    QuadOptions {
        abs_tol: 1e-15,
        rel_tol: 1e-13,
        max_intervals: 4000,
    }
}

pub fn l1_norm(z: &[f64]) -> f64 {
    z.iter().sum()
}

/// `e^x - Σ_{k<n0} x^k/k!`, accurate for small `|x|`.
pub(crate) fn exp_remainder(x: Complex64, n0: u32) -> Complex64 {
    if x.norm() <= 1.0 {
        let mut term = Complex64::new(1.0, 0.0);
        for k in 1..=n0 {
            term = term * x / k as f64;
        }
        let mut sum = term;
        let mut k = n0;
        loop {
            k += 1;
            term = term * x / k as f64;
            sum += term;
            if term.norm() <= 1e-18 * sum.norm() || k > 60 {
                return sum;
            }
        }
    } else {
        let mut partial = Complex64::new(0.0, 0.0);
        let mut term = Complex64::new(1.0, 0.0);
        for k in 0..n0 {
            if k > 0 {
                term = term * x / k as f64;
            }
            partial += term;
        }
        x.exp() - partial
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub z: Vec<f64>,
    pub mass: f64,
}

/// `c · r^{-1-α} dr` on the ray `{r e_axis : r > 0}`.
#[derive(Debug, Clone)]
pub struct AxisStable {
    /// Zero-based coordinate index.
    pub axis: usize,
    pub index: f64,
    pub scale: f64,
    // Unit-scale integral in the real negative direction, shared by every
    // evaluation at real λ.
    real_unit: OnceLock<QuadResult>,
}

impl PartialEq for AxisStable {
    fn eq(&self, other: &Self) -> bool {
        self.axis == other.axis && self.index == other.index && self.scale == other.scale
    }
}

impl AxisStable {
    pub fn new(axis: usize, index: f64, scale: f64) -> Self {
        Self {
            axis,
            index,
            scale,
            real_unit: OnceLock::new(),
        }
    }

    /// Number of leading Taylor terms removed from `e^{ωρ}` on `[0, 1]`.
    fn compensation_order(&self) -> u32 {
        if self.index < 1.0 {
            1
        } else {
            2
        }
    }

    /// `J(ω) = ∫_0^∞ (e^{ωρ} - 1 - ωρ·κ(ρ)) ρ^{-1-α} dρ` for `|ω| = 1`, where the
    /// linear compensation `κ` is absent for α < 1, restricted to `ρ ≤ 1` for
    /// α = 1 and global for α > 1.
    fn unit_integral(&self, omega: Complex64) -> QuadResult {
        let a = self.index;
        let n0 = self.compensation_order();
        let opts = quad_opts();

        // [0, ρ0]: term-wise power integrals.
        let mut series = Complex64::new(0.0, 0.0);
        let mut wn = Complex64::new(1.0, 0.0);
        let mut fact = 1.0;
        for n in 1..40u32 {
            wn *= omega;
            fact *= n as f64;
            if n < n0 {
                continue;
            }
            let nf = n as f64;
            let term = wn * SERIES_CUTOFF.powf(nf - a) / (fact * (nf - a));
            series += term;
            if term.norm() < 1e-20 * series.norm().max(1e-300) {
                break;
            }
        }
        let head = QuadResult {
            value: series,
            error: 0.0,
            evals: 0,
            converged: true,
        };

        // [ρ0, 1]
        let body = quad::integrate_log(
            |r| exp_remainder(omega * r, n0) * r.powf(-1.0 - a),
            SERIES_CUTOFF,
            1.0,
            &opts,
        );

        // [1, ∞): ∫ e^{ωρ} ρ^{-1-α} along the ray 1 + d·s with d = -conj(ω),
        // on which e^{ωρ} = e^{ω} e^{-s}; no oscillation anywhere on ∂ℂ₋.
        let d = -omega.conj();
        let ray = quad::integrate(
            |s| {
                let rho = Complex64::new(1.0, 0.0) + d * s;
                (-s).exp() * rho.powf(-1.0 - a)
            },
            0.0,
            CONTOUR_LENGTH,
            &opts,
        );
        let mut tail = QuadResult {
            value: d * omega.exp() * ray.value,
            ..ray
        };
        tail.value -= 1.0 / a;
        if a > 1.0 {
            tail.value -= omega / (a - 1.0);
        }

        head.combine(body).combine(tail)
    }

    fn unit_integral_at(&self, omega: Complex64) -> QuadResult {
        if omega.im == 0.0 && omega.re == -1.0 {
            *self.real_unit.get_or_init(|| self.unit_integral(omega))
        } else {
            self.unit_integral(omega)
        }
    }

    /// `∫ (e^{μr} - 1 - μ r 1{r≤1}·own) c r^{-1-α} dr` with `Re μ ≤ 0`.
    fn jump_integral(&self, mu: Complex64, own: bool) -> Result<QuadResult> {
        let a = self.index;
        if !own && a >= 1.0 {
            return Err(CbError::InvalidArgument(format!(
                "cross-axis stable measure with index {a} has infinite first moment"
            )));
        }
        if mu == Complex64::new(0.0, 0.0) {
            return Ok(QuadResult::zero());
        }
        let modulus = mu.norm();
        let omega = mu / modulus;
        let unit = self.unit_integral_at(omega);
        // Scaling ρ = |μ| r maps the compensation window r ≤ 1 to ρ ≤ |μ|;
        // the difference from the unit window is a closed-form power integral.
        let value = if a < 1.0 {
            let mut v = unit.value * modulus.powf(a);
            if own {
                v -= mu * (1.0 / (1.0 - a));
            }
            v
        } else if a == 1.0 {
            unit.value * modulus - mu * modulus.ln()
        } else {
            unit.value * modulus.powf(a) + mu * (1.0 / (a - 1.0))
        };
        let scale = self.scale;
        Ok(QuadResult {
            value: value * scale,
            error: unit.error * modulus.powf(a) * scale,
            ..unit
        })
    }

    /// a-form integrand `e^{μr} - 1 - μ r/(1+r²)` on the own axis.
    fn jump_integral_a_form(&self, mu: Complex64) -> QuadResult {
        let a = self.index;
        let opts = quad_opts();
        if mu == Complex64::new(0.0, 0.0) {
            return QuadResult::zero();
        }
        // e^{μr} - 1 - μr/(1+r²) = (e^{μr} - 1 - μr) + μ r³/(1+r²)
        let r0 = SERIES_CUTOFF.min(0.5 / mu.norm());
        let mut series = Complex64::new(0.0, 0.0);
        let mut wn = Complex64::new(1.0, 0.0);
        let mut fact = 1.0;
        for n in 1..60u32 {
            wn *= mu;
            fact *= n as f64;
            if n < 2 {
                continue;
            }
            let nf = n as f64;
            let term = wn * r0.powf(nf - a) / (fact * (nf - a));
            series += term;
            if term.norm() < 1e-20 * series.norm().max(1e-300) {
                break;
            }
        }
        series += mu * (r0.powf(3.0 - a) / (3.0 - a) - r0.powf(5.0 - a) / (5.0 - a));
        let head = QuadResult {
            value: series,
            error: 0.0,
            evals: 0,
            converged: true,
        };
        let body = quad::integrate_log(
            |r| (exp_remainder(mu * r, 2) + mu * (r * r * r / (1.0 + r * r))) * r.powf(-1.0 - a),
            r0,
            1.0,
            &opts,
        );
        let modulus = mu.norm();
        let d = -mu.conj() / modulus;
        let ray = quad::integrate(
            |s| {
                let rho = Complex64::new(1.0, 0.0) + d * s;
                (-modulus * s).exp() * rho.powf(-1.0 - a)
            },
            0.0,
            CONTOUR_LENGTH / modulus,
            &opts,
        );
        let exp_part = QuadResult {
            value: d * mu.exp() * ray.value,
            ..ray
        };
        let comp = quad::integrate_log(
            |r| Complex64::new(r.powf(-a) / (1.0 + r * r), 0.0),
            1.0,
            1e16,
            &opts,
        );
        let tail = QuadResult {
            value: exp_part.value - 1.0 / a - mu * comp.value,
            ..exp_part.combine(comp)
        };
        let total = head.combine(body).combine(tail);
        QuadResult {
            value: total.value * self.scale,
            error: total.error * self.scale,
            ..total
        }
    }

    /// `∫ r (1{r≤1} - 1/(1+r²)) c r^{-1-α} dr`.
    fn a_to_alpha_shift(&self) -> QuadResult {
        let a = self.index;
        let opts = quad_opts();
        let near = quad::integrate_log(
            |r| Complex64::new(r.powf(2.0 - a) / (1.0 + r * r), 0.0),
            SERIES_CUTOFF,
            1.0,
            &opts,
        );
        let head = SERIES_CUTOFF.powf(3.0 - a) / (3.0 - a);
        let far = quad::integrate_log(
            |r| Complex64::new(r.powf(-a) / (1.0 + r * r), 0.0),
            1.0,
            1e16,
            &opts,
        );
        let far_tail = 1e16f64.powf(-1.0 - a) / (1.0 + a);
        let value = (near.value.re + head - far.value.re - far_tail) * self.scale;
        QuadResult {
            value: Complex64::new(value, 0.0),
            error: (near.error + far.error) * self.scale,
            ..near.combine(far)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LevyMeasure {
    Zero,
    FiniteAtoms(Vec<Atom>),
    AxisStable(AxisStable),
}

/// Integral value together with the achieved quadrature error estimate.
#[derive(Debug, Clone, Copy)]
pub struct JumpIntegral {
    pub value: Complex64,
    pub error: f64,
    pub converged: bool,
}

impl From<QuadResult> for JumpIntegral {
    fn from(q: QuadResult) -> Self {
        Self {
            value: q.value,
            error: q.error,
            converged: q.converged,
        }
    }
}

impl JumpIntegral {
    fn exact(value: Complex64) -> Self {
        Self {
            value,
            error: 0.0,
            converged: true,
        }
    }
}

fn dot(lambda: &[Complex64], z: &[f64]) -> Complex64 {
    lambda.iter().zip(z).map(|(l, &zi)| l * zi).sum()
}

impl LevyMeasure {
    pub fn axis_stable(axis: usize, index: f64, scale: f64) -> Self {
        LevyMeasure::AxisStable(AxisStable::new(axis, index, scale))
    }

    /// `∫ (e^{⟨λ,z⟩} - 1 - λ_own z_own 1{|z|≤1}) π(dz)`.
    pub fn jump_integral(&self, lambda: &[Complex64], own: usize) -> Result<JumpIntegral> {
        match self {
            LevyMeasure::Zero => Ok(JumpIntegral::exact(Complex64::new(0.0, 0.0))),
            LevyMeasure::FiniteAtoms(atoms) => {
                let mut sum = Complex64::new(0.0, 0.0);
                for atom in atoms {
                    let mut g = dot(lambda, &atom.z).exp() - 1.0;
                    if l1_norm(&atom.z) <= 1.0 {
                        g -= lambda[own] * atom.z[own];
                    }
                    sum += g * atom.mass;
                }
                Ok(JumpIntegral::exact(sum))
            }
            LevyMeasure::AxisStable(s) => {
                Ok(s.jump_integral(lambda[s.axis], s.axis == own)?.into())
            }
        }
    }

    /// Same integral with the `λ_own z_own / (1+|z|²)` compensation.
    pub fn jump_integral_a_form(&self, lambda: &[Complex64], own: usize) -> Result<JumpIntegral> {
        match self {
            LevyMeasure::Zero => Ok(JumpIntegral::exact(Complex64::new(0.0, 0.0))),
            LevyMeasure::FiniteAtoms(atoms) => {
                let mut sum = Complex64::new(0.0, 0.0);
                for atom in atoms {
                    let n = l1_norm(&atom.z);
                    let g = dot(lambda, &atom.z).exp()
                        - 1.0
                        - lambda[own] * atom.z[own] / (1.0 + n * n);
                    sum += g * atom.mass;
                }
                Ok(JumpIntegral::exact(sum))
            }
            LevyMeasure::AxisStable(s) if s.axis == own => {
                Ok(s.jump_integral_a_form(lambda[s.axis]).into())
            }
            // No own-coordinate component, so both compensations vanish.
            LevyMeasure::AxisStable(s) => Ok(s.jump_integral(lambda[s.axis], false)?.into()),
        }
    }

    /// `∫ z_own (1{|z|≤1} - 1/(1+|z|²)) π(dz)`.
    pub fn a_to_alpha_shift(&self, own: usize) -> JumpIntegral {
        match self {
            LevyMeasure::Zero => JumpIntegral::exact(Complex64::new(0.0, 0.0)),
            LevyMeasure::FiniteAtoms(atoms) => {
                let s: f64 = atoms
                    .iter()
                    .map(|atom| {
                        let n = l1_norm(&atom.z);
                        let ind = if n <= 1.0 { 1.0 } else { 0.0 };
                        atom.mass * atom.z[own] * (ind - 1.0 / (1.0 + n * n))
                    })
                    .sum();
                JumpIntegral::exact(Complex64::new(s, 0.0))
            }
            LevyMeasure::AxisStable(s) if s.axis == own => s.a_to_alpha_shift().into(),
            LevyMeasure::AxisStable(_) => JumpIntegral::exact(Complex64::new(0.0, 0.0)),
        }
    }

    /// Tail decomposition at cutoff `eps ∈ (0, 1]` in dimension `m`.
    pub fn tail_services(&self, eps: f64, m: usize) -> Result<TailServices> {
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(CbError::InvalidArgument(format!(
                "small-jump cutoff {eps} outside (0, 1]"
            )));
        }
        let mut compensator = vec![0.0; m];
        let mut small_first = vec![0.0; m];
        let mut small_second = vec![vec![0.0; m]; m];
        let sampler = match self {
            LevyMeasure::Zero => TailSampler::Empty,
            LevyMeasure::FiniteAtoms(atoms) => {
                let mut tail = Vec::new();
                let mut cumulative = Vec::new();
                let mut acc = 0.0;
                for atom in atoms {
                    let n = l1_norm(&atom.z);
                    if n > eps {
                        acc += atom.mass;
                        cumulative.push(acc);
                        tail.push(atom.z.clone());
                        if n <= 1.0 {
                            for (c, z) in compensator.iter_mut().zip(&atom.z) {
                                *c += atom.mass * z;
                            }
                        }
                    } else {
                        for k in 0..m {
                            small_first[k] += atom.mass * atom.z[k];
                            for l in 0..m {
                                small_second[k][l] += atom.mass * atom.z[k] * atom.z[l];
                            }
                        }
                    }
                }
                if tail.is_empty() {
                    TailSampler::Empty
                } else {
                    TailSampler::Atoms {
                        jumps: tail,
                        cumulative,
                    }
                }
            }
            LevyMeasure::AxisStable(s) => {
                let (a, c, k) = (s.index, s.scale, s.axis);
                compensator[k] = if a == 1.0 {
                    c * (1.0 / eps).ln()
                } else {
                    c * (1.0 - eps.powf(1.0 - a)) / (1.0 - a)
                };
                small_first[k] = if a < 1.0 {
                    c * eps.powf(1.0 - a) / (1.0 - a)
                } else {
                    f64::INFINITY
                };
                small_second[k][k] = c * eps.powf(2.0 - a) / (2.0 - a);
                TailSampler::Pareto {
                    axis: k,
                    index: a,
                    eps,
                }
            }
        };
        let tail_mass = match (&sampler, self) {
            (TailSampler::Atoms { cumulative, .. }, _) => *cumulative.last().unwrap_or(&0.0),
            (TailSampler::Pareto { .. }, LevyMeasure::AxisStable(s)) => {
                s.scale * eps.powf(-s.index) / s.index
            }
            _ => 0.0,
        };
        Ok(TailServices {
            eps,
            m,
            tail_mass,
            compensator,
            small_first_moment: small_first,
            small_second_moment: small_second,
            sampler,
        })
    }
}

#[derive(Debug, Clone)]
enum TailSampler {
    Empty,
    Atoms {
        jumps: Vec<Vec<f64>>,
        cumulative: Vec<f64>,
    },
    Pareto {
        axis: usize,
        index: f64,
        eps: f64,
    },
}

/// Decomposition of a jump measure at a cutoff `ε`: the finite-mass part
/// `{|z| > ε}` is sampled, the rest is represented by its moments.
#[derive(Debug, Clone)]
pub struct TailServices {
    pub eps: f64,
    pub m: usize,
    /// `π({|z| > ε})`
    pub tail_mass: f64,
    /// `∫_{ε<|z|≤1} z π(dz)`
    pub compensator: Vec<f64>,
    /// `∫_{|z|≤ε} z π(dz)`; infinite in coordinates where it diverges.
    pub small_first_moment: Vec<f64>,
    /// `∫_{|z|≤ε} z zᵀ π(dz)`
    pub small_second_moment: Vec<Vec<f64>>,
    sampler: TailSampler,
}

impl TailServices {
    /// Draws a jump from `π` restricted to `{|z| > ε}` and normalized.
    pub fn sample_jump<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        match &self.sampler {
            TailSampler::Empty => Err(CbError::ZeroTailMass { eps: self.eps }),
            TailSampler::Atoms { jumps, cumulative } => {
                let total = *cumulative.last().expect("non-empty");
                let u = rng.random::<f64>() * total;
                let idx = cumulative.partition_point(|&c| c <= u).min(jumps.len() - 1);
                Ok(jumps[idx].clone())
            }
            TailSampler::Pareto { axis, index, eps } => {
                let mut z = vec![0.0; self.m];
                z[*axis] = sample_pareto(rng, *eps, *index);
                Ok(z)
            }
        }
    }

    /// Samples into `out`, avoiding an allocation per jump.
    pub(crate) fn add_jump<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        cap: f64,
        out: &mut [f64],
    ) -> Result<()> {
        match &self.sampler {
            TailSampler::Pareto { axis, index, eps } => {
                out[*axis] += sample_pareto(rng, *eps, *index).min(cap);
                Ok(())
            }
            _ => {
                let z = self.sample_jump(rng)?;
                for (o, zi) in out.iter_mut().zip(z) {
                    *o += zi.min(cap);
                }
                Ok(())
            }
        }
    }
}

/// Inverse transform for the tail `P(R > r) = (r/ε)^{-α}`.
fn sample_pareto<R: Rng + ?Sized>(rng: &mut R, eps: f64, index: f64) -> f64 {
    let u = 1.0 - rng.random::<f64>();
    eps * u.powf(-1.0 / index)
}
