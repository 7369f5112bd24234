//! Dormand–Prince 5(4) integrator for autonomous complex systems with PI
//! step-size control. Output times are hit exactly by shortening the step
//! that would cross them.

use num_complex::Complex64;

use crate::error::{CbError, Result};

type C = Complex64;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const BETA: f64 = 0.04;
const EXPO: f64 = 0.2 - 0.75 * BETA;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-9,
            abs_tol: 1e-12,
            max_steps: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SolverStats {
    pub steps: usize,
    pub rejected: usize,
    /// Largest scaled error norm among accepted steps (≤ 1 by construction).
    pub max_local_error: f64,
}

fn error_norm(err: &[C], y0: &[C], y1: &[C], opts: &OdeOptions) -> f64 {
    let n = err.len() as f64;
    let s: f64 = err
        .iter()
        .zip(y0.iter().zip(y1))
        .map(|(e, (a, b))| {
            let sc = opts.abs_tol + opts.rel_tol * a.norm().max(b.norm());
            let q = e.norm() / sc;
            q * q
        })
        .sum();
    (s / n).sqrt()
}

fn axpy(out: &mut [C], y: &[C], h: f64, terms: &[(f64, &[C])]) {
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = C::new(0.0, 0.0);
        for (c, k) in terms {
            if *c != 0.0 {
                acc += k[i] * *c;
            }
        }
        *o = y[i] + acc * h;
    }
}

/// Integrates `y' = f(y)` from `times[0]` through every later entry of `times`,
/// returning the state at each. `project` runs after every accepted step and
/// may adjust the state in place (returning `true` when it did) or abort.
pub fn integrate<F, P>(
    mut f: F,
    y0: &[C],
    times: &[f64],
    opts: &OdeOptions,
    mut project: P,
) -> Result<(Vec<Vec<C>>, SolverStats)>
where
    F: FnMut(&[C]) -> Result<Vec<C>>,
    P: FnMut(f64, &mut [C]) -> Result<bool>,
{
    let n = y0.len();
    let mut out = Vec::with_capacity(times.len());
    out.push(y0.to_vec());
    let mut stats = SolverStats::default();
    if times.len() < 2 {
        return Ok((out, stats));
    }
    let mut t = times[0];
    let mut y = y0.to_vec();
    let mut k1 = f(&y)?;
    let mut h = initial_step(&mut f, &y, &k1, opts, times[times.len() - 1] - t)?;
    let mut err_old: f64 = 1e-4;
    let mut rejected_last = false;

    let mut ytmp = vec![C::new(0.0, 0.0); n];
    let mut ynew = vec![C::new(0.0, 0.0); n];
    let mut errv = vec![C::new(0.0, 0.0); n];

    for &t_out in &times[1..] {
        while t < t_out {
            if stats.steps + stats.rejected >= opts.max_steps {
                return Err(CbError::TooManySteps {
                    t,
                    steps: opts.max_steps,
                });
            }
            let remaining = t_out - t;
            let last = h >= remaining * (1.0 - 1e-12);
            let step = if last { remaining } else { h };
            if too_small(step, t) && !last {
                return Err(CbError::StepUnderflow { t });
            }

            axpy(&mut ytmp, &y, step, &[(A21, &k1)]);
            let k2 = f(&ytmp)?;
            axpy(&mut ytmp, &y, step, &[(A31, &k1), (A32, &k2)]);
            let k3 = f(&ytmp)?;
            axpy(&mut ytmp, &y, step, &[(A41, &k1), (A42, &k2), (A43, &k3)]);
            let k4 = f(&ytmp)?;
            axpy(
                &mut ytmp,
                &y,
                step,
                &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)],
            );
            let k5 = f(&ytmp)?;
            axpy(
                &mut ytmp,
                &y,
                step,
                &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
            );
            let k6 = f(&ytmp)?;
            axpy(
                &mut ynew,
                &y,
                step,
                &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)],
            );
            let k7 = f(&ynew)?;
            for i in 0..n {
                errv[i] =
                    (k1[i] * E1 + k3[i] * E3 + k4[i] * E4 + k5[i] * E5 + k6[i] * E6 + k7[i] * E7)
                        * step;
            }
            let mut err = error_norm(&errv, &y, &ynew, opts);
            if !err.is_finite() || ynew.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
                err = f64::INFINITY;
            }

            if err <= 1.0 {
                stats.steps += 1;
                stats.max_local_error = stats.max_local_error.max(err);
                t = if last { t_out } else { t + step };
                let changed = project(t, &mut ynew)?;
                std::mem::swap(&mut y, &mut ynew);
                k1 = if changed { f(&y)? } else { k7 };
                let e = err.max(1e-10);
                let mut fac = SAFETY * e.powf(-EXPO) * err_old.powf(BETA);
                fac = fac.clamp(FAC_MIN, FAC_MAX);
                if rejected_last {
                    fac = fac.min(1.0);
                }
                let proposal = step * fac;
                // A step shortened to land on an output time says little about
                // the admissible size; keep the larger proposal.
                h = if last { proposal.max(h) } else { proposal };
                err_old = e;
                rejected_last = false;
            } else {
                stats.rejected += 1;
                let fac = if err.is_finite() {
                    (SAFETY * err.powf(-EXPO)).max(FAC_MIN)
                } else {
                    FAC_MIN
                };
                h = step * fac;
                rejected_last = true;
                if too_small(h, t) {
                    return Err(CbError::StepUnderflow { t });
                }
            }
        }
        out.push(y.clone());
    }
    Ok((out, stats))
}

/// A step that no longer moves `t` in floating point.
fn too_small(h: f64, t: f64) -> bool {
    h < 4.0 * f64::EPSILON * t.abs() || h < f64::MIN_POSITIVE
}

fn initial_step<F>(f: &mut F, y: &[C], k1: &[C], opts: &OdeOptions, span: f64) -> Result<f64>
where
    F: FnMut(&[C]) -> Result<Vec<C>>,
{
    let scale = |v: &[C], i: usize| opts.abs_tol + opts.rel_tol * v[i].norm();
    let n = y.len() as f64;
    let rms = |v: &[C]| -> f64 {
        (v.iter()
            .enumerate()
            .map(|(i, x)| (x.norm() / scale(y, i)).powi(2))
            .sum::<f64>()
            / n)
            .sqrt()
    };
    let d0 = rms(y);
    let d1 = rms(k1);
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    h0 = h0.min(span);
    let y1: Vec<C> = y.iter().zip(k1).map(|(a, b)| a + b * h0).collect();
    let k2 = f(&y1)?;
    let diff: Vec<C> = k2.iter().zip(k1).map(|(a, b)| a - b).collect();
    let d2 = rms(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    Ok((100.0 * h0).min(h1).min(span))
}
