//! The backward equation `dK/dt = H(K)`, `K(0) = λ`, and what it yields:
//! Laplace transforms, the semigroup law, the minimal solution at `λ = 0`
//! and conservativeness diagnostics.

use std::io::Write;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{invalid, CbError, Result};
use crate::mechanism::{stable_mechanism, BranchingMechanism, LeftHalfPoint};
use crate::ode::{self, OdeOptions, SolverStats};
use crate::quad::{self, QuadOptions};

type C = Complex64;

#[derive(Debug, Clone, Copy)]
pub struct CumulantOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_steps: usize,
}

impl Default for CumulantOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-9,
            abs_tol: 1e-12,
            max_steps: 1_000_000,
        }
    }
}

/// `t ↦ K(t, λ)` sampled on a time grid.
#[derive(Debug, Clone)]
pub struct CumulantFlow {
    pub lambda0: LeftHalfPoint,
    pub times: Vec<f64>,
    pub values: Vec<Vec<C>>,
    pub stats: SolverStats,
}

impl CumulantFlow {
    pub fn dim(&self) -> usize {
        self.lambda0.dim()
    }

    pub fn last(&self) -> &[C] {
        self.values.last().expect("flow has at least one value")
    }

    /// Value at a grid time (exact match required).
    pub fn at(&self, t: f64) -> Option<&[C]> {
        self.times
            .iter()
            .position(|&s| s == t)
            .map(|i| self.values[i].as_slice())
    }

    /// Largest `|K_i(t)|` over the grid.
    pub fn sup_norm(&self) -> f64 {
        self.values
            .iter()
            .flat_map(|v| v.iter().map(|c| c.norm()))
            .fold(0.0, f64::max)
    }

    /// `t,Re_K1,Im_K1,…` with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let mut header = String::from("t");
        for i in 1..=self.dim() {
            header.push_str(&format!(",Re_K{i},Im_K{i}"));
        }
        writeln!(w, "{header}")?;
        for (t, v) in self.times.iter().zip(&self.values) {
            let mut line = fmt17(*t);
            for c in v {
                line.push(',');
                line.push_str(&fmt17(c.re));
                line.push(',');
                line.push_str(&fmt17(c.im));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

pub(crate) fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// `[0, T/n, …, T]`
pub fn uniform_grid(horizon: f64, n: usize) -> Vec<f64> {
    let n = n.max(1);
    (0..=n)
        .map(|i| {
            if i == n {
                horizon
            } else {
                horizon * i as f64 / n as f64
            }
        })
        .collect()
}

fn check_grid(times: &[f64]) -> Result<()> {
    if times.first() != Some(&0.0) {
        return Err(invalid("output grid must start at t = 0"));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) || times.iter().any(|t| !t.is_finite()) {
        return Err(invalid(
            "output grid must be finite and strictly increasing",
        ));
    }
    Ok(())
}

fn solve_raw(
    mech: &BranchingMechanism,
    lambda: &[C],
    times: &[f64],
    opts: &CumulantOptions,
) -> Result<(Vec<Vec<C>>, SolverStats)> {
    let ode_opts = OdeOptions {
        rel_tol: opts.rel_tol,
        abs_tol: opts.abs_tol,
        max_steps: opts.max_steps,
    };
    let abs_tol = opts.abs_tol;
    let mut scratch = vec![C::new(0.0, 0.0); lambda.len()];
    ode::integrate(
        |y| {
            // Intermediate stages may poke out of ℂ₋ by roundoff; evaluate H
            // at the nearest point of the closed half-space.
            for (s, v) in scratch.iter_mut().zip(y) {
                *s = C::new(v.re.min(0.0), v.im);
            }
            Ok(mech.evaluate(&scratch)?.values)
        },
        lambda,
        times,
        &ode_opts,
        |t, y| {
            let mut changed = false;
            for (i, v) in y.iter_mut().enumerate() {
                if v.re > abs_tol {
                    return Err(CbError::DomainEscape {
                        t,
                        component: i + 1,
                        value: v.re,
                    });
                }
                if v.re > 0.0 {
                    v.re = 0.0;
                    changed = true;
                }
            }
            Ok(changed)
        },
    )
}

/// Integrates the backward equation from `λ` through the output grid `times`
/// (which must start at 0).
pub fn solve_cumulant(
    mech: &BranchingMechanism,
    lambda: &LeftHalfPoint,
    times: &[f64],
    opts: &CumulantOptions,
) -> Result<CumulantFlow> {
    mech.ensure_valid()?;
    check_grid(times)?;
    if lambda.dim() != mech.m {
        return Err(invalid(format!(
            "λ has dimension {}, mechanism {}",
            lambda.dim(),
            mech.m
        )));
    }
    let (mut values, stats) = solve_raw(mech, lambda.as_slice(), times, opts)?;
    values[0] = lambda.as_slice().to_vec();
    Ok(CumulantFlow {
        lambda0: lambda.clone(),
        times: times.to_vec(),
        values,
        stats,
    })
}

/// `K(t, λ)` at a single time.
pub fn cumulant_at(
    mech: &BranchingMechanism,
    lambda: &LeftHalfPoint,
    t: f64,
    opts: &CumulantOptions,
) -> Result<Vec<C>> {
    if t == 0.0 {
        return Ok(lambda.as_slice().to_vec());
    }
    Ok(solve_cumulant(mech, lambda, &[0.0, t], opts)?
        .last()
        .to_vec())
}

/// `sup_t |K(t) − λ − ∫_0^t H(K(s)) ds|` over the flow's grid. The integral
/// is a composite 15-point Kronrod rule with `pieces` panels per grid
/// interval, fed by re-solving from the left grid value.
pub fn integral_form_residual(
    mech: &BranchingMechanism,
    flow: &CumulantFlow,
    pieces: usize,
    opts: &CumulantOptions,
) -> Result<f64> {
    let m = flow.dim();
    let pieces = pieces.max(1);
    let mut integral = vec![C::new(0.0, 0.0); m];
    let mut worst: f64 = 0.0;
    for j in 0..flow.times.len() - 1 {
        let (t0, t1) = (flow.times[j], flow.times[j + 1]);
        let start = LeftHalfPoint::new(
            flow.values[j]
                .iter()
                .map(|c| C::new(c.re.min(0.0), c.im))
                .collect(),
        )?;
        let width = (t1 - t0) / pieces as f64;
        for p in 0..pieces {
            let a = p as f64 * width;
            let b = a + width;
            for i in 0..m {
                let mut panel_err = None;
                let mut f = |s: f64| -> C {
                    if panel_err.is_some() {
                        return C::new(0.0, 0.0);
                    }
                    let k = if s == 0.0 {
                        Ok(start.as_slice().to_vec())
                    } else {
                        cumulant_at(mech, &start, s, opts)
                    };
                    match k.and_then(|k| mech.evaluate(&k)) {
                        Ok(h) => h.values[i],
                        Err(e) => {
                            panel_err = Some(e);
                            C::new(0.0, 0.0)
                        }
                    }
                };
                let (v, _) = quad::gk15(&mut f, a, b);
                if let Some(e) = panel_err {
                    return Err(e);
                }
                integral[i] += v;
            }
        }
        for i in 0..m {
            let r = (flow.values[j + 1][i] - flow.lambda0.as_slice()[i] - integral[i]).norm();
            worst = worst.max(r);
        }
    }
    Ok(worst)
}

/// `max_i |K_i(s+t, λ) − K_i(s, K(t, λ))|`.
pub fn semigroup_defect(
    mech: &BranchingMechanism,
    lambda: &LeftHalfPoint,
    s: f64,
    t: f64,
    opts: &CumulantOptions,
) -> Result<f64> {
    if !(s >= 0.0 && t >= 0.0) {
        return Err(invalid("semigroup times must be nonnegative"));
    }
    let direct = cumulant_at(mech, lambda, s + t, opts)?;
    let inner = cumulant_at(mech, lambda, t, opts)?;
    let inner = LeftHalfPoint::new(inner.iter().map(|c| C::new(c.re.min(0.0), c.im)).collect())?;
    let composed = cumulant_at(mech, &inner, s, opts)?;
    Ok(direct
        .iter()
        .zip(&composed)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max))
}

/// Controls for the `ε ↓ 0` limit along `λ − ε𝟙`.
#[derive(Debug, Clone)]
pub struct ExtensionOptions {
    /// Exponents `k` of `ε = 2^{−k}`, increasing.
    pub schedule: Vec<i32>,
    pub stall_tol: f64,
    pub ode: CumulantOptions,
}

impl Default for ExtensionOptions {
    fn default() -> Self {
        let mut schedule: Vec<i32> = (4..=24).collect();
        schedule.extend([32, 48, 64, 96, 128, 192, 256, 384, 512, 768, 1020]);
        Self {
            schedule,
            stall_tol: 1e-9,
            ode: CumulantOptions::default(),
        }
    }
}

/// Result of the boundary limit.
#[derive(Debug, Clone)]
pub struct ExtendedFlow {
    pub flow: CumulantFlow,
    /// Exponent `k` of the last `ε = 2^{−k}` solved.
    pub k_final: i32,
    /// Sup-norm distance between the last two flows.
    pub gap: f64,
    pub converged: bool,
    /// Grid values where a smaller ε produced a smaller real flow, beyond
    /// solver noise.
    pub monotone_violations: usize,
}

/// `lim_{ε↓0} K(t, λ − ε𝟙)` on the grid `times`. For interior `λ` this is
/// just `K(t, λ)`; on the boundary it is the continuous extension.
pub fn continuous_extension(
    mech: &BranchingMechanism,
    lambda: &LeftHalfPoint,
    times: &[f64],
    opts: &ExtensionOptions,
) -> Result<ExtendedFlow> {
    mech.ensure_valid()?;
    check_grid(times)?;
    if opts.schedule.is_empty() {
        return Err(invalid("empty ε schedule"));
    }
    let real = lambda.is_real();
    let mut prev: Option<Vec<Vec<C>>> = None;
    let mut violations = 0;
    let mut gap = f64::INFINITY;
    let mut last = None;
    for &k in &opts.schedule {
        let eps = 2f64.powi(-k);
        let start: Vec<C> = lambda.as_slice().iter().map(|c| c - eps).collect();
        // Absolute tolerance follows the size of the perturbation so that the
        // early, near-singular part of the flow is resolved in relative terms.
        let ode_opts = CumulantOptions {
            abs_tol: opts.ode.abs_tol.min(eps * opts.ode.rel_tol),
            ..opts.ode
        };
        let (values, stats) = solve_raw(mech, &start, times, &ode_opts)?;
        if let Some(p) = &prev {
            gap = 0.0;
            for (a, b) in p.iter().zip(&values) {
                for (x, y) in a.iter().zip(b) {
                    gap = gap.max((x - y).norm());
                    let slack = 10.0 * opts.ode.rel_tol * x.norm().max(y.norm()) + 1e-300;
                    if real && y.re < x.re - slack {
                        violations += 1;
                    }
                }
            }
        }
        let flow = CumulantFlow {
            lambda0: lambda.clone(),
            times: times.to_vec(),
            values: values.clone(),
            stats,
        };
        last = Some((k, flow));
        if gap < opts.stall_tol {
            let (k_final, mut flow) = last.expect("just set");
            flow.values[0] = lambda.as_slice().to_vec();
            return Ok(ExtendedFlow {
                flow,
                k_final,
                gap,
                converged: true,
                monotone_violations: violations,
            });
        }
        prev = Some(values);
    }
    let (k_final, mut flow) = last.expect("schedule is non-empty");
    flow.values[0] = lambda.as_slice().to_vec();
    Ok(ExtendedFlow {
        flow,
        k_final,
        gap,
        converged: false,
        monotone_violations: violations,
    })
}

/// The minimal solution `K(t, 0) = lim_{ε↓0} K(t, −ε𝟙)`.
pub fn minimal_solution_at_zero(
    mech: &BranchingMechanism,
    times: &[f64],
    opts: &ExtensionOptions,
) -> Result<ExtendedFlow> {
    continuous_extension(mech, &LeftHalfPoint::zero(mech.m), times, opts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    ConservativeEvidence,
    NonConservative,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::ConservativeEvidence => "conservative-evidence",
            Verdict::NonConservative => "non-conservative",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

/// One-dimensional integral test near `λ = 0`.
#[derive(Debug, Clone, Serialize)]
pub struct GreyEvidence {
    /// `(δ, ∫_δ^{δ₀} dλ / (0 ∨ −H(−λ)))` for `δ = 10^{-1}, …, 10^{-10}`.
    pub partial_integrals: Vec<(f64, f64)>,
    /// Local power of `−H(−λ)` fitted over the smallest decades; absent when
    /// `−H(−λ) ≤ 0` there (the integrand is infinite).
    pub exponent: Option<f64>,
    pub diverges: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConservativenessReport {
    pub verdict: Verdict,
    pub tol: f64,
    pub horizon: f64,
    /// `sup_{t≤T} |K(t, 0)|` for the minimal solution.
    pub minimal_sup: f64,
    pub minimal_converged: bool,
    pub minimal_gap: f64,
    pub grey: Option<GreyEvidence>,
}

const GREY_UPPER: f64 = 0.1;
const GREY_DECADES: i32 = 10;
// Fitted exponents are compared against 1 with this much slack for roundoff
// in the log-log slope.
const EXPONENT_SLACK: f64 = 1e-6;

fn grey_evidence(mech: &BranchingMechanism) -> Result<GreyEvidence> {
    let g = |l: f64| -> Result<f64> {
        let h = mech.evaluate(&[C::new(-l, 0.0)])?;
        Ok(-h.values[0].re)
    };
    // Sign of −H(−λ) at the small end decides whether the integrand is finite.
    let probes: Vec<f64> = (GREY_DECADES - 2..=GREY_DECADES)
        .map(|j| 10f64.powi(-j))
        .collect();
    let small: Vec<f64> = probes.iter().map(|&l| g(l)).collect::<Result<_>>()?;
    let opts = QuadOptions {
        abs_tol: 0.0,
        rel_tol: 1e-8,
        max_intervals: 500,
    };
    let mut partial = Vec::new();
    let mut acc = 0.0;
    let mut upper = GREY_UPPER;
    let mut infinite = false;
    for j in 1..=GREY_DECADES {
        let lower = 10f64.powi(-j);
        if j > 1 && !infinite {
            let mut fail = None;
            let r = quad::integrate_log(
                |l| match g(l) {
                    Ok(v) if v > 0.0 => C::new(1.0 / v, 0.0),
                    Ok(_) => C::new(f64::INFINITY, 0.0),
                    Err(e) => {
                        fail = Some(e);
                        C::new(0.0, 0.0)
                    }
                },
                lower,
                upper,
                &opts,
            );
            if let Some(e) = fail {
                return Err(e);
            }
            if r.value.re.is_finite() {
                acc += r.value.re;
            } else {
                infinite = true;
            }
        }
        partial.push((lower, if infinite { f64::INFINITY } else { acc }));
        upper = lower;
    }
    if small.iter().any(|&v| v <= 0.0) {
        return Ok(GreyEvidence {
            partial_integrals: partial,
            exponent: None,
            diverges: true,
        });
    }
    // Least-squares slope of log g against log λ over the probe points.
    let xs: Vec<f64> = probes.iter().map(|l| l.ln()).collect();
    let ys: Vec<f64> = small.iter().map(|v| v.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let p = sxy / sxx;
    Ok(GreyEvidence {
        partial_integrals: partial,
        exponent: Some(p),
        diverges: infinite || p >= 1.0 - EXPONENT_SLACK,
    })
}

/// Conservativeness from the minimal solution at zero, with the integral
/// test as corroboration in one dimension.
pub fn conservativeness_verdict(
    mech: &BranchingMechanism,
    horizon: f64,
    tol: f64,
    opts: &ExtensionOptions,
) -> Result<ConservativenessReport> {
    if !(horizon > 0.0) {
        return Err(invalid("horizon must be positive"));
    }
    let minimal = minimal_solution_at_zero(mech, &uniform_grid(horizon, 100), opts)?;
    let sup = minimal.flow.sup_norm();
    let grey = if mech.m == 1 {
        Some(grey_evidence(mech)?)
    } else {
        None
    };
    // K(t, 0) ≥ K(t, −ε) componentwise, so an unconverged flow still bounds
    // the minimal solution from below.
    let verdict = if sup > tol {
        if minimal.converged {
            Verdict::NonConservative
        } else {
            Verdict::Inconclusive
        }
    } else {
        match &grey {
            Some(g) if !g.diverges => Verdict::Inconclusive,
            _ => Verdict::ConservativeEvidence,
        }
    };
    Ok(ConservativenessReport {
        verdict,
        tol,
        horizon,
        minimal_sup: sup,
        minimal_converged: minimal.converged,
        minimal_gap: minimal.gap,
        grey,
    })
}

pub(crate) fn exp_inner(x: &[f64], k: &[C]) -> C {
    let s: C = x.iter().zip(k).map(|(xi, ki)| ki * *xi).sum();
    s.exp()
}

/// Value together with whether the boundary limit behind it converged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Flagged<T> {
    pub value: T,
    pub converged: bool,
}

fn check_state(x: &[f64], m: usize) -> Result<()> {
    if x.len() != m {
        return Err(invalid(format!(
            "state has {} components, expected {m}",
            x.len()
        )));
    }
    if x.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(invalid(
            "state must be finite and componentwise nonnegative",
        ));
    }
    Ok(())
}

/// `∫ e^{⟨λ,z⟩} P(t, x, dz) = exp⟨x, K(t, λ)⟩`. Boundary `λ` uses the
/// continuous extension, so `λ = 0` gives the total mass.
pub fn laplace_transform(
    mech: &BranchingMechanism,
    x: &[f64],
    t: f64,
    lambda: &LeftHalfPoint,
    opts: &ExtensionOptions,
) -> Result<Flagged<C>> {
    check_state(x, mech.m)?;
    if !(t >= 0.0) {
        return Err(invalid("time must be nonnegative"));
    }
    if t == 0.0 || x.iter().all(|&v| v == 0.0) {
        return Ok(Flagged {
            value: exp_inner(x, lambda.as_slice()),
            converged: true,
        });
    }
    if lambda.is_interior() {
        let k = cumulant_at(mech, lambda, t, &opts.ode)?;
        return Ok(Flagged {
            value: exp_inner(x, &k),
            converged: true,
        });
    }
    let ext = continuous_extension(mech, lambda, &[0.0, t], opts)?;
    Ok(Flagged {
        value: exp_inner(x, ext.flow.last()),
        converged: ext.converged,
    })
}

/// `P(t, x, D) = exp⟨x, K(t, 0)⟩` with the minimal solution.
pub fn survival_mass(
    mech: &BranchingMechanism,
    x: &[f64],
    t: f64,
    opts: &ExtensionOptions,
) -> Result<Flagged<f64>> {
    let v = laplace_transform(mech, x, t, &LeftHalfPoint::zero(mech.m), opts)?;
    Ok(Flagged {
        value: v.value.re,
        converged: v.converged,
    })
}

/// `K^r(t, 0) = −[σ(1−α)(t−r)]^{1/(1−α)} 1{t>r}` for the stable mechanism
/// `H(λ) = −σ(−λ)^α`, `α < 1`; `r = ∞` is the zero branch.
pub fn shifted_minimal(sigma: f64, alpha: f64, r: f64, t: f64) -> f64 {
    if t > r {
        -(sigma * (1.0 - alpha) * (t - r)).powf(1.0 / (1.0 - alpha))
    } else {
        0.0
    }
}

/// `sup_{t≤T} |K^r(t,0) − ∫_0^t H(K^r(s,0)) ds|` for the shifted family of
/// solutions at `λ = 0`, with `H` evaluated by the mechanism's own quadrature.
pub fn nonuniqueness_residual(sigma: f64, alpha: f64, r: f64, horizon: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid("the shifted family needs 0 < α < 1"));
    }
    if !(r >= 0.0) || !(horizon > 0.0) {
        return Err(invalid("need r ≥ 0 and T > 0"));
    }
    let mech = stable_mechanism(sigma, alpha)?;
    if r >= horizon {
        // K^r vanishes on [0, T] and H(0) = 0.
        let h0 = mech.evaluate(&[C::new(0.0, 0.0)])?.values[0];
        return Ok(h0.norm() * horizon);
    }
    let mut grid = uniform_grid(horizon, 300);
    if r > 0.0 {
        grid.push(r);
        grid.sort_by(|a, b| a.total_cmp(b));
        grid.dedup();
    }
    let qopts = QuadOptions {
        abs_tol: 1e-15,
        rel_tol: 1e-13,
        max_intervals: 200,
    };
    let mut integral = 0.0;
    let mut worst: f64 = 0.0;
    for w in grid.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b > r {
            let mut fail = None;
            let q = quad::integrate(
                |s| {
                    let k = shifted_minimal(sigma, alpha, r, s);
                    match mech.evaluate(&[C::new(k, 0.0)]) {
                        Ok(h) => h.values[0],
                        Err(e) => {
                            fail = Some(e);
                            C::new(0.0, 0.0)
                        }
                    }
                },
                a.max(r),
                b,
                &qopts,
            );
            if let Some(e) = fail {
                return Err(e);
            }
            if !q.converged {
                return Err(CbError::Quadrature {
                    value: q.value.re,
                    error: q.error,
                });
            }
            integral += q.value.re;
        }
        worst = worst.max((shifted_minimal(sigma, alpha, r, b) - integral).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanism::stable_mechanism;

    fn real(v: &[f64]) -> LeftHalfPoint {
        LeftHalfPoint::real(v).unwrap()
    }

    #[test]
    fn linear_stable_flow() {
        let mech = stable_mechanism(1.0, 1.0).unwrap();
        let flow = solve_cumulant(
            &mech,
            &real(&[-1.0]),
            &[0.0, 0.5, 1.0, 5.0],
            &Default::default(),
        )
        .unwrap();
        for (t, v) in flow.times.iter().zip(&flow.values) {
            let exact = -t.exp();
            assert!((v[0].re - exact).abs() <= 1e-8 * exact.abs(), "t={t}");
        }
        assert_eq!(flow.values[0], vec![C::new(-1.0, 0.0)]);
    }

    #[test]
    fn half_stable_flow() {
        let mech = stable_mechanism(2.0, 0.5).unwrap();
        let grid = uniform_grid(5.0, 10);
        let flow = solve_cumulant(&mech, &real(&[-1.0]), &grid, &Default::default()).unwrap();
        for (t, v) in flow.times.iter().zip(&flow.values) {
            let exact = -(t + 1.0) * (t + 1.0);
            assert!((v[0].re - exact).abs() <= 1e-8 * exact.abs(), "t={t}");
        }
    }

    #[test]
    fn zero_is_a_fixed_point() {
        let mech = stable_mechanism(2.0, 0.5).unwrap();
        let flow = solve_cumulant(
            &mech,
            &LeftHalfPoint::zero(1),
            &uniform_grid(3.0, 6),
            &Default::default(),
        )
        .unwrap();
        assert!(flow.values.iter().all(|v| v[0] == C::new(0.0, 0.0)));
    }

    #[test]
    fn semigroup_zero_and_closed_form() {
        let mech = stable_mechanism(1.0, 1.0).unwrap();
        let d = semigroup_defect(&mech, &real(&[-1.0]), 1.0, 1.0, &Default::default()).unwrap();
        assert!(d <= 1e-8 * 1f64.exp().powi(2));
        let d = semigroup_defect(
            &mech,
            &LeftHalfPoint::zero(1),
            1.0,
            1.0,
            &Default::default(),
        )
        .unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn minimal_solution_linear_is_zero() {
        let mech = stable_mechanism(1.0, 1.0).unwrap();
        let ext =
            minimal_solution_at_zero(&mech, &uniform_grid(2.0, 4), &Default::default()).unwrap();
        assert!(ext.converged);
        assert!(ext.flow.sup_norm() < 1e-8);
        assert_eq!(ext.monotone_violations, 0);
    }

    #[test]
    fn minimal_solution_half_stable() {
        let mech = stable_mechanism(2.0, 0.5).unwrap();
        let ext =
            minimal_solution_at_zero(&mech, &[0.0, 0.5, 1.0, 2.0], &Default::default()).unwrap();
        assert!(ext.converged, "gap {}", ext.gap);
        for (t, v) in ext.flow.times.iter().zip(&ext.flow.values) {
            assert!((v[0].re + t * t).abs() < 1e-7, "t={t}: {}", v[0].re);
        }
    }

    #[test]
    fn survival_mass_examples() {
        let mech = stable_mechanism(2.0, 0.5).unwrap();
        let opts = ExtensionOptions::default();
        let s1 = survival_mass(&mech, &[1.0], 1.0, &opts).unwrap();
        assert!(s1.converged);
        assert!((s1.value - (-1f64).exp()).abs() < 1e-7);
        let s2 = survival_mass(&mech, &[2.0], 1.0, &opts).unwrap();
        assert!((s2.value - s1.value * s1.value).abs() < 1e-7);
        let cons = stable_mechanism(1.0, 1.0).unwrap();
        let s = survival_mass(&cons, &[3.0], 2.0, &opts).unwrap();
        assert!((s.value - 1.0).abs() < 1e-7);
    }

    #[test]
    fn laplace_transform_examples() {
        let mech = stable_mechanism(2.0, 0.5).unwrap();
        let opts = ExtensionOptions::default();
        let l = real(&[-1.0]);
        let v = laplace_transform(&mech, &[1.0], 1.0, &l, &opts).unwrap();
        assert!((v.value.re - (-4f64).exp()).abs() < 1e-10);
        let v0 = laplace_transform(&mech, &[1.5], 0.0, &l, &opts).unwrap();
        assert_eq!(v0.value, C::new((-1.5f64).exp(), 0.0));
        let vx = laplace_transform(&mech, &[0.0], 1.0, &l, &opts).unwrap();
        assert_eq!(vx.value, C::new(1.0, 0.0));
    }

    #[test]
    fn nonuniqueness_family() {
        for r in [0.0, 1.0, f64::INFINITY] {
            let res = nonuniqueness_residual(2.0, 0.5, r, 3.0).unwrap();
            assert!(res <= 1e-9, "r={r}: {res}");
        }
    }

    #[test]
    fn verdicts_on_stable_family() {
        let opts = ExtensionOptions::default();
        let v = conservativeness_verdict(&stable_mechanism(1.0, 1.0).unwrap(), 10.0, 1e-7, &opts)
            .unwrap();
        assert_eq!(v.verdict, Verdict::ConservativeEvidence);
        let v = conservativeness_verdict(&stable_mechanism(1.0, 0.5).unwrap(), 1.0, 1e-7, &opts)
            .unwrap();
        assert_eq!(v.verdict, Verdict::NonConservative);
        let p = v.grey.unwrap().exponent.unwrap();
        assert!((p - 0.5).abs() < 1e-6);
    }

    #[test]
    fn csv_layout() {
        let mech = stable_mechanism(1.0, 1.0).unwrap();
        let flow = solve_cumulant(&mech, &real(&[-1.0]), &[0.0, 1.0], &Default::default()).unwrap();
        let mut buf = Vec::new();
        flow.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,Re_K1,Im_K1"));
        assert_eq!(
            lines.next(),
            Some("0.0000000000000000e0,-1.0000000000000000e0,0.0000000000000000e0")
        );
    }

    #[test]
    fn grid_must_start_at_zero() {
        let mech = stable_mechanism(1.0, 1.0).unwrap();
        assert!(solve_cumulant(&mech, &real(&[-1.0]), &[0.5, 1.0], &Default::default()).is_err());
        assert!(
            solve_cumulant(&mech, &real(&[-1.0]), &[0.0, 1.0, 1.0], &Default::default()).is_err()
        );
    }
}
