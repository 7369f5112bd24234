//! Adaptive Gauss–Kronrod (7/15) quadrature for complex-valued integrands.
//!
//! Global subdivision: the interval with the largest error estimate is
//! bisected until the summed estimate drops under
//! `max(abs_tol, rel_tol * |value|)` or the interval budget runs out. A
//! result whose remaining error is all floating-point roundoff of the panels
//! also counts as converged, since subdividing cannot improve it.
//! Error estimates follow the QUADPACK scaling of `|K15 - G7|`.

use num_complex::Complex64;
use std::cmp::Ordering;
use std::collections::BinaryHeap;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_5,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_48,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224,
    0.063_092_092_629_978_56,
    0.104_790_010_322_250_19,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_42,
    0.204_432_940_075_298_89,
    0.209_482_141_084_727_82,
];

// Gauss weights attached to XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_64,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-14,
            rel_tol: 1e-12,
            max_intervals: 2000,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: Complex64,
    pub error: f64,
    pub evals: usize,
    pub converged: bool,
}

impl QuadResult {
    pub fn zero() -> Self {
        Self {
            value: Complex64::new(0.0, 0.0),
            error: 0.0,
            evals: 0,
            converged: true,
        }
    }

    /// Sum of two independent pieces of one integral.
    pub fn combine(self, other: QuadResult) -> QuadResult {
        QuadResult {
            value: self.value + other.value,
            error: self.error + other.error,
            evals: self.evals + other.evals,
            converged: self.converged && other.converged,
        }
    }
}

struct Piece {
    a: f64,
    b: f64,
    value: Complex64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// One 15-point Kronrod application on `[a, b]`; returns (value, error estimate).
pub fn gk15<F>(f: &mut F, a: f64, b: f64) -> (Complex64, f64)
where
    F: FnMut(f64) -> Complex64,
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    let mut fv1 = [Complex64::new(0.0, 0.0); 7];
    let mut fv2 = [Complex64::new(0.0, 0.0); 7];
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        kronrod += (f1 + f2) * WGK[j];
        if j % 2 == 1 {
            gauss += (f1 + f2) * WG[j / 2];
        }
    }
    let mean = kronrod * 0.5;
    let mut resasc = WGK[7] * (fc - mean).norm();
    for j in 0..7 {
        resasc += WGK[j] * ((fv1[j] - mean).norm() + (fv2[j] - mean).norm());
    }
    let value = kronrod * half;
    resasc *= half.abs();
    let mut err = ((kronrod - gauss) * half).norm();
    if resasc != 0.0 && err != 0.0 {
        err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
    }
    (value, err.max(roundoff_floor(value)))
}

/// Error floor of one panel at roundoff level.
fn roundoff_floor(value: Complex64) -> f64 {
    50.0 * f64::EPSILON * value.norm()
}

/// Adaptive integration of `f` over the finite interval `[a, b]`.
pub fn integrate<F>(mut f: F, a: f64, b: f64, opts: &QuadOptions) -> QuadResult
where
    F: FnMut(f64) -> Complex64,
{
    if a == b {
        return QuadResult::zero();
    }
    let (value, error) = gk15(&mut f, a, b);
    let mut evals = 15;
    let mut heap = BinaryHeap::new();
    heap.push(Piece { a, b, value, error });
    let mut total = value;
    let mut total_err = error;
    let mut floor = roundoff_floor(value);
    loop {
        let tol = opts
            .abs_tol
            .max(opts.rel_tol * total.norm())
            .max(2.0 * floor);
        if total_err <= tol {
            return QuadResult {
                value: total,
                error: total_err,
                evals,
                converged: true,
            };
        }
        if heap.len() >= opts.max_intervals {
            break;
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Interval no longer divisible in f64.
            heap.push(worst);
            break;
        }
        let (v1, e1) = gk15(&mut f, worst.a, mid);
        let (v2, e2) = gk15(&mut f, mid, worst.b);
        evals += 30;
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.error;
        floor += roundoff_floor(v1) + roundoff_floor(v2) - roundoff_floor(worst.value);
        heap.push(Piece {
            a: worst.a,
            b: mid,
            value: v1,
            error: e1,
        });
        heap.push(Piece {
            a: mid,
            b: worst.b,
            value: v2,
            error: e2,
        });
    }
    // Re-sum to shed accumulated cancellation in the running totals.
    let value = heap.iter().map(|p| p.value).sum();
    let error = heap.iter().map(|p| p.error).sum::<f64>();
    let floor: f64 = heap.iter().map(|p| roundoff_floor(p.value)).sum();
    let tol = opts
        .abs_tol
        .max(opts.rel_tol * Complex64::norm(value))
        .max(2.0 * floor);
    QuadResult {
        value,
        error,
        evals,
        converged: error <= tol,
    }
}

/// Integrates `g(r)` over `[a, b] ⊂ (0, ∞)` after the substitution `r = e^s`.
/// Suited to integrands carrying power-law factors in `r`.
pub fn integrate_log<F>(mut g: F, a: f64, b: f64, opts: &QuadOptions) -> QuadResult
where
    F: FnMut(f64) -> Complex64,
{
    debug_assert!(a > 0.0 && b >= a);
    integrate(
        |s| {
            let r = s.exp();
            g(r) * r
        },
        a.ln(),
        b.ln(),
        opts,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let r = integrate(
            |x| Complex64::new(x.powi(5) - 3.0 * x, x * x),
            -1.0,
            2.0,
            &QuadOptions::default(),
        );
        assert!(r.converged);
        let re = (64.0 - 1.0) / 6.0 - 1.5 * (4.0 - 1.0);
        let im = (8.0 + 1.0) / 3.0;
        assert!((r.value.re - re).abs() < 1e-13);
        assert!((r.value.im - im).abs() < 1e-13);
    }

    #[test]
    fn oscillatory_complex_exponential() {
        // ∫_0^10 e^{(-1+5i)x} dx
        let w = Complex64::new(-1.0, 5.0);
        let r = integrate(|x| (w * x).exp(), 0.0, 10.0, &QuadOptions::default());
        let exact = ((w * 10.0).exp() - 1.0) / w;
        assert!(r.converged);
        assert!((r.value - exact).norm() < 1e-12);
    }

    #[test]
    fn endpoint_singularity_via_log_substitution() {
        // ∫_{1e-8}^1 r^{-0.9} dr = 10 (1 - 1e-0.8)
        let r = integrate_log(
            |r| Complex64::new(r.powf(-0.9), 0.0),
            1e-8,
            1.0,
            &QuadOptions::default(),
        );
        let exact = 10.0 * (1.0 - 1e-8f64.powf(0.1));
        assert!((r.value.re - exact).abs() < 1e-11 * exact);
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let opts = QuadOptions {
            abs_tol: 0.0,
            rel_tol: 1e-15,
            max_intervals: 3,
        };
        let r = integrate(
            |x| Complex64::new((50.0 * x).sin().abs(), 0.0),
            0.0,
            7.0,
            &opts,
        );
        assert!(!r.converged);
        assert!(r.error > 0.0);
    }
}
