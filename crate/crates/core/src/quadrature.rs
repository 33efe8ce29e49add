//! Numerical quadrature helpers: double-exponential (tanh-sinh) rules for
//! endpoint-singular integrands, Gauss–Legendre nodes, and adaptive
//! Gauss–Kronrod for smooth integrands.

use std::f64::consts::FRAC_PI_2;

/// One node of a tanh-sinh rule on `(0, 1)`.
///
/// The distances to both endpoints are stored separately so integrands can
/// avoid cancellation when evaluating `b - x` near `b`.
#[derive(Debug, Clone, Copy)]
pub struct DeNode {
    pub left: f64,
    pub right: f64,
    pub weight: f64,
}

/// Nodes of the tanh-sinh rule with step `h` truncated at `|τ| ≤ tmax`,
/// ordered by τ. Every second node (starting at index 0) forms the rule with
/// step `2h` when `tmax / h` is an even integer.
pub fn tanh_sinh_nodes(h: f64, tmax: f64) -> Vec<DeNode> {
    let k = (tmax / h).round() as i64;
    let mut out = Vec::with_capacity(2 * k as usize + 1);
    for i in -k..=k {
        let tau = i as f64 * h;
        let u = FRAC_PI_2 * tau.sinh();
        // x = 1 / (1 + e^{-2u}); 1 - x = 1 / (1 + e^{2u}).
        let e = (-2.0 * u.abs()).exp();
        let (left, right) = if u >= 0.0 {
            (1.0 / (1.0 + e), e / (1.0 + e))
        } else {
            (e / (1.0 + e), 1.0 / (1.0 + e))
        };
        // dx/dτ = (π/2) cosh τ · 2e / (1+e)^2 with e = e^{-2|u|}
        let weight = h * FRAC_PI_2 * tau.cosh() * 2.0 * e / ((1.0 + e) * (1.0 + e));
        out.push(DeNode {
            left,
            right,
            weight,
        });
    }
    out
}

/// Adaptive tanh-sinh integration of `f(x, x - a, b - x)` over `(a, b)`.
///
/// Halves the step until two successive levels agree to `tol`
/// (absolute). Returns `(value, error_estimate)`.
pub fn tanh_sinh<F>(mut f: F, a: f64, b: f64, tol: f64) -> (f64, f64)
where
    F: FnMut(f64, f64, f64) -> f64,
{
    let len = b - a;
    let tmax = 4.5;
    let mut h = 0.5;
    let mut eval_sum = |nodes: &[DeNode], skip_even: bool| -> f64 {
        let mut s = 0.0;
        for (i, n) in nodes.iter().enumerate() {
            if skip_even && i % 2 == 0 {
                continue;
            }
            if n.weight == 0.0 {
                continue;
            }
            let x = a + len * n.left;
            let v = f(x, len * n.left, len * n.right);
            if v.is_finite() {
                s += n.weight * v;
            }
        }
        s
    };
    // Level sums are built incrementally: the rule at h/2 reuses the
    // previous sum (scaled) plus the new odd nodes.
    let nodes = tanh_sinh_nodes(h, tmax);
    let mut sum = eval_sum(&nodes, false);
    let mut est = len * sum;
    let mut err = f64::INFINITY;
    for _ in 0..9 {
        h *= 0.5;
        let nodes = tanh_sinh_nodes(h, tmax);
        let odd = eval_sum(&nodes, true);
        sum = 0.5 * sum + odd;
        let next = len * sum;
        err = (next - est).abs();
        est = next;
        if err <= tol {
            break;
        }
    }
    (est, err)
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` (Newton iteration on the
/// Legendre recurrence).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        if d != 0.0 {
            dp = d;
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let hl = 0.5 * (b - a);
    let fc = f(c);
    let mut rk = fc * WGK[7];
    let mut rg = fc * WG[3];
    for j in 0..7 {
        let dx = hl * XGK[j];
        let s = f(c - dx) + f(c + dx);
        rk += WGK[j] * s;
        if j % 2 == 1 {
            rg += WG[j / 2] * s;
        }
    }
    (rk * hl, ((rk - rg) * hl).abs())
}

/// Globally adaptive Gauss–Kronrod (7/15) quadrature. Returns
/// `(value, error_estimate)`.
pub fn integrate_adaptive<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> (f64, f64) {
    let mut intervals = vec![{
        let (v, e) = gk15(&mut f, a, b);
        (a, b, v, e)
    }];
    for _ in 0..2000 {
        let total_err: f64 = intervals.iter().map(|iv| iv.3).sum();
        if total_err <= tol {
            break;
        }
        let (idx, _) = intervals
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("non-empty");
        let (lo, hi, _, _) = intervals.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(&mut f, lo, mid);
        let (v2, e2) = gk15(&mut f, mid, hi);
        intervals.push((lo, mid, v1, e1));
        intervals.push((mid, hi, v2, e2));
    }
    intervals.sort_by(|x, y| x.0.total_cmp(&y.0));
    let v = intervals.iter().map(|iv| iv.2).sum();
    let e = intervals.iter().map(|iv| iv.3).sum();
    (v, e)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        let (x, w) = gauss_legendre(6);
        for k in 0..12 {
            let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(k)).sum();
            let exact = if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
            assert!((q - exact).abs() < 1e-14, "k={k}: {q} vs {exact}");
        }
    }

    #[test]
    fn kronrod_constants_integrate_polynomials() {
        for k in 0..22 {
            let (v, _) = gk15(&mut |x: f64| x.powi(k), 0.0, 1.0);
            assert!((v - 1.0 / (k as f64 + 1.0)).abs() < 1e-14, "degree {k}");
        }
    }

    #[test]
    fn tanh_sinh_handles_endpoint_singularities() {
        // ∫_0^1 x^{-1/2} dx = 2, ∫_0^1 ln x dx = -1
        let (v, _) = tanh_sinh(|_, l, _| l.powf(-0.5), 0.0, 1.0, 1e-13);
        assert!((v - 2.0).abs() < 1e-11);
        let (v, _) = tanh_sinh(|_, l, _| l.ln(), 0.0, 1.0, 1e-13);
        assert!((v + 1.0).abs() < 1e-12);
        let (v, _) = tanh_sinh(|_, _, r| r.powf(-0.3), 0.0, 2.0, 1e-13);
        assert!((v - 2f64.powf(0.7) / 0.7).abs() < 1e-11);
    }

    #[test]
    fn adaptive_gk_smooth_and_peaked() {
        let (v, _) = integrate_adaptive(|x| (-x * x).exp(), -10.0, 10.0, 1e-13);
        assert!((v - std::f64::consts::PI.sqrt()).abs() < 1e-12);
        let (v, _) = integrate_adaptive(|x| 1.0 / (1e-4 + x * x), -1.0, 1.0, 1e-10);
        let exact = 2.0 * (1.0f64 / 1e-2).atan() / 1e-2;
        assert!((v - exact).abs() / exact < 1e-10);
    }
}
