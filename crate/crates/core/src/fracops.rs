//! Discrete fractional calculus on graded time grids.
//!
//! All operators use exact product integration against piecewise-linear
//! interpolants of the samples. Right-sided operators are obtained by
//! reversing time and applying the left-sided code.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::SpectralField;
use crate::specfun::gamma_fn;

/// Nodes `t_j = T (j/n)^r`, `j = 0..=n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridParams", into = "GridParams")]
pub struct GradedTimeGrid {
    horizon: f64,
    n_steps: usize,
    grading: f64,
    nodes: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct GridParams {
    horizon: f64,
    n_steps: usize,
    grading: f64,
}

impl TryFrom<GridParams> for GradedTimeGrid {
    type Error = Error;
    fn try_from(p: GridParams) -> Result<Self> {
        GradedTimeGrid::new(p.horizon, p.n_steps, p.grading)
    }
}

impl From<GradedTimeGrid> for GridParams {
    fn from(g: GradedTimeGrid) -> Self {
        GridParams {
            horizon: g.horizon,
            n_steps: g.n_steps,
            grading: g.grading,
        }
    }
}

impl GradedTimeGrid {
    pub fn new(horizon: f64, n_steps: usize, grading: f64) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::config("grid.horizon", "must be positive and finite"));
        }
        if n_steps == 0 {
            return Err(Error::config("grid.n_steps", "must be at least 1"));
        }
        if !(grading >= 1.0 && grading.is_finite()) {
            return Err(Error::config("grid.grading", "must be >= 1"));
        }
        let nodes = (0..=n_steps)
            .map(|j| {
                if j == n_steps {
                    horizon
                } else {
                    horizon * (j as f64 / n_steps as f64).powf(grading)
                }
            })
            .collect();
        Ok(GradedTimeGrid {
            horizon,
            n_steps,
            grading,
            nodes,
        })
    }

    pub fn uniform(horizon: f64, n_steps: usize) -> Result<Self> {
        Self::new(horizon, n_steps, 1.0)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn grading(&self) -> f64 {
        self.grading
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Trapezoid weights `ω_j` on the nodes.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        trapezoid_weights(&self.nodes)
    }

    /// Same grid with `2 n` steps.
    pub fn refined(&self) -> GradedTimeGrid {
        GradedTimeGrid::new(self.horizon, 2 * self.n_steps, self.grading).expect("valid parameters")
    }
}

pub(crate) fn trapezoid_weights(t: &[f64]) -> Vec<f64> {
    let n = t.len();
    let mut w = vec![0.0; n];
    for k in 1..n {
        let h = 0.5 * (t[k] - t[k - 1]);
        w[k - 1] += h;
        w[k] += h;
    }
    w
}

/// Samples of a scalar function on a [`GradedTimeGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarTrajectory {
    pub grid: GradedTimeGrid,
    pub values: Vec<f64>,
}

impl ScalarTrajectory {
    pub fn new(grid: GradedTimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::mismatch(grid.len(), values.len(), "trajectory values vs grid nodes"));
        }
        Ok(ScalarTrajectory { grid, values })
    }

    pub fn from_fn(grid: &GradedTimeGrid, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.nodes().iter().map(|&t| f(t)).collect();
        ScalarTrajectory {
            grid: grid.clone(),
            values,
        }
    }

    fn with_values(&self, values: Vec<f64>) -> ScalarTrajectory {
        ScalarTrajectory {
            grid: self.grid.clone(),
            values,
        }
    }

    /// Trapezoid integral over `[0, T]`.
    pub fn integral(&self) -> f64 {
        self.grid
            .trapezoid_weights()
            .iter()
            .zip(&self.values)
            .map(|(w, v)| w * v)
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Left,
    Right,
}

/// `a^p - b^p` for `a ≥ b ≥ 0` without cancellation when `a ≈ b`.
pub(crate) fn pow_diff(a: f64, b: f64, p: f64) -> f64 {
    if b <= 0.0 {
        return a.powf(p);
    }
    b.powf(p) * (p * ((a - b) / b).ln_1p()).exp_m1()
}

/// L1 Caputo derivative at the nodes `t` of samples `u`. The entry at
/// `t_0` is set to zero.
pub(crate) fn caputo_l1_nodes(t: &[f64], u: &[f64], gamma: f64) -> Vec<f64> {
    let n = t.len();
    let c = 1.0 / gamma_fn(2.0 - gamma).expect("2 - γ is not a pole");
    let p = 1.0 - gamma;
    let slopes: Vec<f64> = (1..n).map(|k| (u[k] - u[k - 1]) / (t[k] - t[k - 1])).collect();
    let mut out = vec![0.0; n];
    for j in 1..n {
        let mut s = 0.0;
        for k in 1..=j {
            s += slopes[k - 1] * pow_diff(t[j] - t[k - 1], t[j] - t[k], p);
        }
        out[j] = c * s;
    }
    out
}

/// Left Riemann–Liouville integral of order `q > 0` of the piecewise-linear
/// interpolant of `u`, evaluated at every node.
pub(crate) fn left_rl_nodes(t: &[f64], u: &[f64], q: f64) -> Vec<f64> {
    let n = t.len();
    let g1 = 1.0 / gamma_fn(q + 1.0).expect("q + 1 > 0");
    let g2 = 1.0 / gamma_fn(q + 2.0).expect("q + 2 > 0");
    let mut out = vec![0.0; n];
    for j in 1..n {
        let mut s = 0.0;
        for k in 1..=j {
            let a = t[j] - t[k - 1];
            let b = t[j] - t[k];
            let h = t[k] - t[k - 1];
            // ∫ g_q(t_j - s) ds over the step, and the same against the
            // rising hat (s - t_{k-1}) / h
            let i0 = pow_diff(a, b, q) * g1;
            let i1 = (pow_diff(a, b, q + 1.0) * g2 - b.powf(q) * h * g1) / h;
            let i1 = i1.clamp(0.0, i0);
            s += u[k - 1] * (i0 - i1) + u[k] * i1;
        }
        out[j] = s;
    }
    out
}

fn reversed(t: &[f64], u: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let big_t = *t.last().expect("non-empty grid");
    let s: Vec<f64> = t.iter().rev().map(|x| big_t - x).collect();
    let v: Vec<f64> = u.iter().rev().copied().collect();
    (s, v)
}

/// Caputo derivative of order `γ ∈ (0,1)` by the L1 scheme.
pub fn caputo_l1(traj: &ScalarTrajectory, gamma: f64) -> Result<ScalarTrajectory> {
    check_order(gamma, "caputo_l1")?;
    if traj.values.len() < 2 {
        return Err(Error::Domain("caputo_l1 needs at least two nodes".into()));
    }
    Ok(traj.with_values(caputo_l1_nodes(traj.grid.nodes(), &traj.values, gamma)))
}

/// `I_{0,t}^q u` or `I_{t,T}^q u` at every node.
pub fn rl_integral(traj: &ScalarTrajectory, order: f64, direction: Direction) -> Result<ScalarTrajectory> {
    check_order(order, "rl_integral")?;
    let t = traj.grid.nodes();
    let values = match direction {
        Direction::Left => left_rl_nodes(t, &traj.values, order),
        Direction::Right => {
            let (s, v) = reversed(t, &traj.values);
            let mut r = left_rl_nodes(&s, &v, order);
            r.reverse();
            r
        }
    };
    Ok(traj.with_values(values))
}

/// Left Riemann–Liouville derivative `d/dt I^{1-γ}` of the piecewise-linear
/// interpolant: the L1 Caputo part plus `u(0) t^{-γ}/Γ(1-γ)`. Infinite at
/// `t = 0` when `u(0) ≠ 0`.
pub(crate) fn left_rl_derivative_nodes(t: &[f64], u: &[f64], gamma: f64) -> Vec<f64> {
    let mut d = caputo_l1_nodes(t, u, gamma);
    let u0 = u[0];
    if u0 != 0.0 {
        let c = 1.0 / gamma_fn(1.0 - gamma).expect("1 - γ > 0");
        for (dj, tj) in d.iter_mut().zip(t) {
            *dj += if *tj > 0.0 { c * u0 * tj.powf(-gamma) } else { u0.signum() * f64::INFINITY };
        }
    }
    d
}

/// Right Riemann–Liouville derivative `∂_{t,T}^γ u = -d/dt I_{t,T}^{1-γ} u`,
/// computed as the left derivative of the time-reversed samples.
pub fn right_rl_derivative(traj: &ScalarTrajectory, gamma: f64) -> Result<ScalarTrajectory> {
    check_order(gamma, "right_rl_derivative")?;
    if traj.values.len() < 2 {
        return Err(Error::Domain("right_rl_derivative needs at least two nodes".into()));
    }
    let (s, v) = reversed(traj.grid.nodes(), &traj.values);
    let mut d = left_rl_derivative_nodes(&s, &v, gamma);
    d.reverse();
    Ok(traj.with_values(d))
}

/// Residual of the fractional integration-by-parts identity
/// `∫ v ∂^γ u = ∫ (∂_{t,T}^γ v) u + [I_{t,T}^{1-γ} v · u]_0^T`.
///
/// When `v(T) ≠ 0` the right derivative has a `(T - t)^{-γ}` singularity;
/// that part is integrated exactly against the interpolant of `u`.
pub fn ibp_residual(u: &ScalarTrajectory, v: &ScalarTrajectory, gamma: f64) -> Result<f64> {
    check_order(gamma, "ibp_residual")?;
    if u.grid != v.grid {
        return Err(Error::Domain("ibp_residual: u and v live on different grids".into()));
    }
    let t = u.grid.nodes();
    let w = u.grid.trapezoid_weights();
    let cu = caputo_l1_nodes(t, &u.values, gamma);
    let lhs: f64 = (0..t.len()).map(|j| w[j] * v.values[j] * cu[j]).sum();

    let (s, vr) = reversed(t, &v.values);
    let mut dv = caputo_l1_nodes(&s, &vr, gamma);
    dv.reverse();
    let mut rhs: f64 = (0..t.len()).map(|j| w[j] * dv[j] * u.values[j]).sum();
    let v_end = *v.values.last().expect("non-empty");
    if v_end != 0.0 {
        // ∫ v(T) g_{1-γ}(T - t) u(t) dt is the left integral of u at T
        let i = left_rl_nodes(t, &u.values, 1.0 - gamma);
        rhs += v_end * i[i.len() - 1];
    }
    let iv = rl_integral(v, 1.0 - gamma, Direction::Right)?;
    let bracket = iv.values[t.len() - 1] * u.values[t.len() - 1] - iv.values[0] * u.values[0];
    Ok((lhs - rhs - bracket).abs())
}

/// Derivative at each node by the three-point formula on a nonuniform grid
/// (one-sided at the ends).
pub(crate) fn node_derivative(t: &[f64], u: &[f64]) -> Vec<f64> {
    let n = t.len();
    let mut d = vec![0.0; n];
    if n < 2 {
        return d;
    }
    if n == 2 {
        let s = (u[1] - u[0]) / (t[1] - t[0]);
        return vec![s, s];
    }
    // difference form, so constants differentiate to exactly zero
    for j in 1..n - 1 {
        let h0 = t[j] - t[j - 1];
        let h1 = t[j + 1] - t[j];
        d[j] = h1 / (h0 * (h0 + h1)) * (u[j] - u[j - 1]) + h0 / (h1 * (h0 + h1)) * (u[j + 1] - u[j]);
    }
    let (h0, h1) = (t[1] - t[0], t[2] - t[1]);
    d[0] = (h0 + h1) / (h0 * h1) * (u[1] - u[0]) - h0 / (h1 * (h0 + h1)) * (u[2] - u[0]);
    let m = n - 1;
    let (h0, h1) = (t[m - 1] - t[m - 2], t[m] - t[m - 1]);
    d[m] = (h0 + h1) / (h0 * h1) * (u[m] - u[m - 1]) - h1 / (h0 * (h0 + h1)) * (u[m] - u[m - 2]);
    d
}

/// Trapezoid value of `∫_0^T (∂_t^γ u, ∂_t u) dt` for a spectral trajectory,
/// mode by mode.
pub fn coercivity_value(grid: &GradedTimeGrid, states: &[SpectralField], gamma: f64) -> Result<f64> {
    check_order(gamma, "coercivity_value")?;
    if states.len() != grid.len() {
        return Err(Error::mismatch(grid.len(), states.len(), "coercivity_value states"));
    }
    if states.len() < 3 {
        return Err(Error::Domain("coercivity_value needs at least three nodes".into()));
    }
    let t = grid.nodes();
    let w = grid.trapezoid_weights();
    let n_modes = states[0].len();
    let mut total = 0.0;
    for m in 0..n_modes {
        let u: Vec<f64> = states.iter().map(|s| s.coeffs[m]).collect();
        let cu = caputo_l1_nodes(t, &u, gamma);
        let du = node_derivative(t, &u);
        total += (0..t.len()).map(|j| w[j] * cu[j] * du[j]).sum::<f64>();
    }
    Ok(total)
}

fn check_order(q: f64, what: &str) -> Result<()> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Domain(format!("{what}: order {q} outside (0,1)")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specfun::{ml_eval, SeriesControl};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn g(n: usize, r: f64) -> GradedTimeGrid {
        GradedTimeGrid::new(1.0, n, r).unwrap()
    }

    #[test]
    fn grid_nodes_and_weights() {
        let grid = GradedTimeGrid::new(2.0, 4, 2.0).unwrap();
        assert_eq!(grid.nodes(), &[0.0, 0.125, 0.5, 1.125, 2.0]);
        assert!((grid.trapezoid_weights().iter().sum::<f64>() - 2.0).abs() < 1e-15);
        assert!(GradedTimeGrid::new(1.0, 4, 0.5).is_err());
        let json = serde_json::to_string(&grid).unwrap();
        let back: GradedTimeGrid = serde_json::from_str(&json).unwrap();
        assert_eq!(back, grid);
    }

    #[test]
    fn caputo_examples() {
        let grid = g(64, 2.0);
        let c = caputo_l1(&ScalarTrajectory::from_fn(&grid, |_| 3.0), 0.4).unwrap();
        assert!(c.values.iter().all(|v| *v == 0.0));
        let c = caputo_l1(&ScalarTrajectory::from_fn(&grid, |t| t), 0.5).unwrap();
        assert!((c.values[64] - 2.0 / PI.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn caputo_of_mittag_leffler_relaxation() {
        let grid = g(4096, 2.0);
        let ctl = SeriesControl::default();
        let u = ScalarTrajectory::from_fn(&grid, |t| ml_eval(0.5, 1.0, -t.sqrt(), ctl).unwrap());
        let c = caputo_l1(&u, 0.5).unwrap();
        assert!((c.values[4096] + 0.4275835762).abs() < 1e-3, "{}", c.values[4096]);
    }

    #[test]
    fn rl_integral_of_constant() {
        let grid = g(32, 1.5);
        let one = ScalarTrajectory::from_fn(&grid, |_| 1.0);
        let gam = 0.3;
        let c = gamma_fn(gam + 1.0).unwrap();
        let l = rl_integral(&one, gam, Direction::Left).unwrap();
        let r = rl_integral(&one, gam, Direction::Right).unwrap();
        for (j, t) in grid.nodes().iter().enumerate() {
            assert!((l.values[j] - t.powf(gam) / c).abs() < 1e-14);
            assert!((r.values[j] - (1.0 - t).powf(gam) / c).abs() < 1e-14);
        }
    }

    #[test]
    fn rl_integral_exact_for_linear() {
        // I^q t = t^{q+1}/Γ(q+2)
        let grid = g(16, 2.0);
        let u = ScalarTrajectory::from_fn(&grid, |t| t);
        let l = rl_integral(&u, 0.6, Direction::Left).unwrap();
        for (j, t) in grid.nodes().iter().enumerate() {
            assert!((l.values[j] - t.powf(1.6) / gamma_fn(2.6).unwrap()).abs() < 1e-14);
        }
    }

    #[test]
    fn rl_of_derivative_matches_caputo() {
        let grid = g(2048, 1.0);
        let gam = 0.2;
        let u = ScalarTrajectory::from_fn(&grid, |t| (2.0 * t).sin());
        let du = ScalarTrajectory::from_fn(&grid, |t| 2.0 * (2.0 * t).cos());
        let a = rl_integral(&du, 1.0 - gam, Direction::Left).unwrap();
        let b = caputo_l1(&u, gam).unwrap();
        for j in 1..grid.len() {
            assert!((a.values[j] - b.values[j]).abs() < 1e-6, "j={j}");
        }
    }

    #[test]
    fn right_derivative_examples() {
        let grid = g(64, 1.0);
        let gam = 0.35;
        let c = ScalarTrajectory::from_fn(&grid, |_| 2.0);
        let d = right_rl_derivative(&c, gam).unwrap();
        let k = 1.0 / gamma_fn(1.0 - gam).unwrap();
        for (j, t) in grid.nodes().iter().enumerate().take(64) {
            assert!((d.values[j] - 2.0 * k * (1.0 - t).powf(-gam)).abs() < 1e-12);
        }
        let u = ScalarTrajectory::from_fn(&grid, |t| 1.0 - t);
        let d = right_rl_derivative(&u, gam).unwrap();
        for (j, t) in grid.nodes().iter().enumerate() {
            let want = (1.0 - t).powf(1.0 - gam) / gamma_fn(2.0 - gam).unwrap();
            assert!((d.values[j] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn right_derivative_is_reversed_left() {
        let grid = g(40, 2.0);
        let u = ScalarTrajectory::from_fn(&grid, |t| (3.0 * t).cos() + t * t);
        let d = right_rl_derivative(&u, 0.7).unwrap();
        let (s, v) = reversed(grid.nodes(), &u.values);
        let mut l = left_rl_derivative_nodes(&s, &v, 0.7);
        l.reverse();
        for (a, b) in d.values.iter().zip(&l) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn integration_by_parts() {
        let zero = ScalarTrajectory::from_fn(&g(8, 1.0), |_| 0.0);
        assert_eq!(ibp_residual(&zero, &zero, 0.5).unwrap(), 0.0);
        let grid = g(2048, 1.0);
        let u = ScalarTrajectory::from_fn(&grid, |t| t * t);
        let v = ScalarTrajectory::from_fn(&grid, |t| (1.0 - t).powi(2));
        assert!(ibp_residual(&u, &v, 0.5).unwrap() <= 1e-4);
        // nonzero u(0) and v(T): the bracket and the singular part both enter
        let u = ScalarTrajectory::from_fn(&grid, |t| 1.0 + t.sin());
        let v = ScalarTrajectory::from_fn(&grid, |t| 0.5 + t * t);
        assert!(ibp_residual(&u, &v, 0.3).unwrap() <= 1e-3);
    }

    #[test]
    fn semigroup_of_integrals() {
        let grid = g(1024, 1.5);
        let u = ScalarTrajectory::from_fn(&grid, |t| (t + 0.5).ln());
        let ab = rl_integral(&rl_integral(&u, 0.3, Direction::Left).unwrap(), 0.4, Direction::Left).unwrap();
        let direct = rl_integral(&u, 0.7, Direction::Left).unwrap();
        for j in 0..grid.len() {
            assert!((ab.values[j] - direct.values[j]).abs() < 2e-4);
        }
    }

    #[test]
    fn caputo_near_one_is_the_derivative() {
        let grid = g(4000, 1.0);
        let u = ScalarTrajectory::from_fn(&grid, |t| (2.0 * t).sin());
        let c = caputo_l1(&u, 1.0 - 1e-6).unwrap();
        for (j, t) in grid.nodes().iter().enumerate().skip(1) {
            assert!((c.values[j] - 2.0 * (2.0 * t).cos()).abs() < 1e-3);
        }
    }

    #[test]
    fn generalized_caputo_equivalence() {
        // d/dt I^{1-γ}(u - u(0)) by differencing agrees with the L1 value
        let grid = g(4000, 1.0);
        let gam = 0.6;
        let u = ScalarTrajectory::from_fn(&grid, |t| 2.0 + t.exp());
        let shifted = ScalarTrajectory::from_fn(&grid, |t| t.exp() - 1.0);
        let i = rl_integral(&shifted, 1.0 - gam, Direction::Left).unwrap();
        let d = node_derivative(grid.nodes(), &i.values);
        let c = caputo_l1(&u, gam).unwrap();
        for j in (10..grid.len()).step_by(131) {
            assert!((d[j] - c.values[j]).abs() < 1e-3, "j={j}: {} vs {}", d[j], c.values[j]);
        }
    }

    #[test]
    fn coercivity_examples() {
        let grid = g(512, 1.0);
        let constant: Vec<SpectralField> = grid.nodes().iter().map(|_| SpectralField::new(vec![1.0, -2.0])).collect();
        assert!(coercivity_value(&grid, &constant, 0.5).unwrap().abs() < 1e-14);
        let lin: Vec<SpectralField> = grid.nodes().iter().map(|t| SpectralField::new(vec![1.0 - t])).collect();
        let v = coercivity_value(&grid, &lin, 0.5).unwrap();
        // ∫ t^{1/2}/Γ(3/2) dt = 1/Γ(5/2)
        assert!((v - 1.0 / gamma_fn(2.5).unwrap()).abs() < 1e-3, "{v}");
    }

    proptest! {
        #[test]
        fn coercivity_is_nonnegative(coeffs in prop::collection::vec(-2.0f64..2.0, 8), gam in 0.1f64..0.9) {
            let grid = g(200, 1.5);
            let states: Vec<SpectralField> = grid
                .nodes()
                .iter()
                .map(|&t| {
                    let a: f64 = coeffs.iter().enumerate().map(|(k, c)| c * (k as f64 * 2.0 * t).cos()).sum();
                    let b: f64 = coeffs.iter().enumerate().map(|(k, c)| c * (-(k as f64) * t).exp()).sum();
                    SpectralField::new(vec![a, b])
                })
                .collect();
            let v = coercivity_value(&grid, &states, gam).unwrap();
            let scale: f64 = coeffs.iter().map(|c| c * c).sum::<f64>() * 64.0 + 1.0;
            prop_assert!(v >= -1e-3 * scale, "{v}");
        }

        #[test]
        fn reversal_twice_is_identity(vals in prop::collection::vec(-1.0f64..1.0, 9)) {
            let grid = g(8, 2.0);
            let (s, v) = reversed(grid.nodes(), &vals);
            let (t2, v2) = reversed(&s, &v);
            prop_assert_eq!(v2, vals);
            for (a, b) in t2.iter().zip(grid.nodes()) {
                prop_assert!((a - b).abs() < 1e-15);
            }
        }
    }
}
