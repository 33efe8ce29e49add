//! Control operators, control signals, the admissible set and the tracking
//! cost.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fracops::{node_derivative, GradedTimeGrid};
use crate::forward::Trajectory;
use crate::spectral::{EigenBasis, SpectralField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlKind {
    /// `D = Ω`; the control acts in the bulk only.
    InteriorIdentity,
    /// `D = ∂Ω`; `z ↦ (0, z)` in the Wentzell product space.
    BoundaryInjection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlOperator {
    pub kind: ControlKind,
    /// Index `α̃` of the target space `V_α̃`.
    #[serde(default)]
    pub target_index: f64,
}

impl ControlOperator {
    pub fn interior() -> Self {
        ControlOperator {
            kind: ControlKind::InteriorIdentity,
            target_index: 0.0,
        }
    }

    pub fn boundary() -> Self {
        ControlOperator {
            kind: ControlKind::BoundaryInjection,
            target_index: 0.0,
        }
    }

    pub fn validate(&self, basis: &EigenBasis) -> Result<()> {
        if self.kind == ControlKind::BoundaryInjection && !basis.spec().has_boundary() {
            return Err(Error::config(
                "control.kind",
                "boundary_injection needs an operator whose state carries boundary traces (wentzell_robin_1d)",
            ));
        }
        Ok(())
    }

    /// Number of control nodes.
    pub fn dim(&self, basis: &EigenBasis) -> usize {
        match self.kind {
            ControlKind::InteriorIdentity => basis.grid().n_interior(),
            ControlKind::BoundaryInjection => 2,
        }
    }

    /// Quadrature weights of `L²(D)`.
    pub fn weights(&self, basis: &EigenBasis) -> Vec<f64> {
        match self.kind {
            ControlKind::InteriorIdentity => basis.grid().quad_weights().to_vec(),
            ControlKind::BoundaryInjection => vec![1.0, 1.0],
        }
    }

    /// Positions of the control nodes.
    pub fn nodes(&self, basis: &EigenBasis) -> Vec<f64> {
        match self.kind {
            ControlKind::InteriorIdentity => basis.grid().nodes().to_vec(),
            ControlKind::BoundaryInjection => vec![0.0, basis.grid().length()],
        }
    }

    /// `𝔹 z`.
    pub fn apply_b(&self, basis: &EigenBasis, z: &[f64]) -> Result<SpectralField> {
        let d = self.dim(basis);
        if z.len() != d {
            return Err(Error::mismatch(d, z.len(), "apply_B control vector"));
        }
        let m = basis.grid().n_interior();
        let mut values = vec![0.0; basis.grid().n_values()];
        match self.kind {
            ControlKind::InteriorIdentity => values[..m].copy_from_slice(z),
            ControlKind::BoundaryInjection => values[m..].copy_from_slice(z),
        }
        basis.analyze(&values)
    }

    /// `𝔹* v`, the adjoint under the `μ` and `L²(D)` quadratures.
    pub fn apply_b_star(&self, basis: &EigenBasis, v: &SpectralField) -> Result<Vec<f64>> {
        let values = basis.synthesize(v)?;
        let m = basis.grid().n_interior();
        Ok(match self.kind {
            ControlKind::InteriorIdentity => values[..m].to_vec(),
            ControlKind::BoundaryInjection => values[m..].to_vec(),
        })
    }
}

/// Control values per time node, each a vector over the control nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSignal {
    pub grid: GradedTimeGrid,
    pub values: Vec<Vec<f64>>,
}

impl ControlSignal {
    pub fn new(grid: GradedTimeGrid, values: Vec<Vec<f64>>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::mismatch(grid.len(), values.len(), "control signal time nodes"));
        }
        let d = values.first().map_or(0, |v| v.len());
        if let Some(bad) = values.iter().find(|v| v.len() != d) {
            return Err(Error::mismatch(d, bad.len(), "control signal node vector"));
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Domain("control signal has non-finite entries".into()));
        }
        Ok(ControlSignal { grid, values })
    }

    pub fn zeros(grid: &GradedTimeGrid, dim: usize) -> Self {
        ControlSignal {
            grid: grid.clone(),
            values: vec![vec![0.0; dim]; grid.len()],
        }
    }

    pub fn from_fn(grid: &GradedTimeGrid, dim: usize, f: impl Fn(f64, usize) -> f64) -> Self {
        let values = grid
            .nodes()
            .iter()
            .map(|&t| (0..dim).map(|i| f(t, i)).collect())
            .collect();
        ControlSignal {
            grid: grid.clone(),
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.values.first().map_or(0, |v| v.len())
    }

    /// Linear interpolation in time.
    pub fn value_at(&self, t: f64) -> Vec<f64> {
        let nodes = self.grid.nodes();
        let j = nodes.partition_point(|x| *x < t);
        if j == 0 {
            return self.values[0].clone();
        }
        if j >= nodes.len() {
            return self.values[nodes.len() - 1].clone();
        }
        if nodes[j] == t {
            return self.values[j].clone();
        }
        let s = (t - nodes[j - 1]) / (nodes[j] - nodes[j - 1]);
        self.values[j - 1]
            .iter()
            .zip(&self.values[j])
            .map(|(a, b)| (1.0 - s) * a + s * b)
            .collect()
    }

    /// Discrete `L²((0,T) × D)` inner product.
    pub fn inner(&self, other: &ControlSignal, weights: &[f64]) -> f64 {
        let omega = self.grid.trapezoid_weights();
        let mut s = 0.0;
        for (j, w) in omega.iter().enumerate() {
            s += w * dot_w(&self.values[j], &other.values[j], weights);
        }
        s
    }

    pub fn l2_norm(&self, weights: &[f64]) -> f64 {
        self.inner(self, weights).sqrt()
    }

    /// `self + a * other`.
    pub fn axpy(&self, a: f64, other: &ControlSignal) -> ControlSignal {
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| x.iter().zip(y).map(|(x, y)| x + a * y).collect())
            .collect();
        ControlSignal {
            grid: self.grid.clone(),
            values,
        }
    }

    pub fn scaled(&self, a: f64) -> ControlSignal {
        ControlSignal {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v.iter().map(|x| a * x).collect()).collect(),
        }
    }

    /// Largest pointwise difference.
    pub fn max_abs_diff(&self, other: &ControlSignal) -> f64 {
        self.values
            .iter()
            .flatten()
            .zip(other.values.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// CSV with columns `t, z_1, ..., z_d`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        for i in 0..self.dim() {
            let _ = write!(out, ",z_{}", i + 1);
        }
        out.push('\n');
        for (t, v) in self.grid.nodes().iter().zip(&self.values) {
            out.push_str(&fmt_f64(*t));
            for x in v {
                out.push(',');
                out.push_str(&fmt_f64(*x));
            }
            out.push('\n');
        }
        out
    }

    /// Reads the format written by [`ControlSignal::to_csv`]; the time column
    /// must match `grid`.
    pub fn from_csv(grid: &GradedTimeGrid, text: &str) -> Result<Self> {
        let mut values = Vec::new();
        for (i, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let mut cols = line.split(',');
            let t: f64 = parse_cell(cols.next(), i)?;
            let j = values.len();
            if j >= grid.len() || (grid.nodes()[j] - t).abs() > 1e-12 * grid.horizon().max(1.0) {
                return Err(Error::Domain(format!("control CSV line {}: time {t} does not match the grid", i + 1)));
            }
            let row = cols.map(|c| parse_cell(Some(c), i)).collect::<Result<Vec<f64>>>()?;
            values.push(row);
        }
        Self::new(grid.clone(), values)
    }
}

fn parse_cell(cell: Option<&str>, line: usize) -> Result<f64> {
    cell.and_then(|c| c.trim().parse().ok())
        .ok_or_else(|| Error::Domain(format!("control CSV line {}: bad number", line + 1)))
}

/// 17 significant digits, round-trip exact.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub(crate) fn dot_w(a: &[f64], b: &[f64], w: &[f64]) -> f64 {
    a.iter().zip(b).zip(w).map(|((a, b), w)| w * a * b).sum()
}

/// `‖z‖_{C([0,T];L²(D))} + sup_t t^{1-ρ} ‖∂_t z(t)‖_{L²(D)}`, the derivative
/// by central differences at interior nodes.
pub fn zrho_norm(z: &ControlSignal, rho: f64, weights: &[f64]) -> Result<f64> {
    if z.values.len() < 3 {
        return Err(Error::Domain("zrho_norm needs at least three nodes".into()));
    }
    let t = z.grid.nodes();
    let sup = z.values.iter().map(|v| dot_w(v, v, weights).sqrt()).fold(0.0, f64::max);
    let d = z.dim();
    let mut deriv = vec![vec![0.0; d]; t.len()];
    for i in 0..d {
        let series: Vec<f64> = z.values.iter().map(|v| v[i]).collect();
        for (j, dv) in node_derivative(t, &series).into_iter().enumerate() {
            deriv[j][i] = dv;
        }
    }
    let seminorm = (1..t.len() - 1)
        .map(|j| t[j].powf(1.0 - rho) * dot_w(&deriv[j], &deriv[j], weights).sqrt())
        .fold(0.0, f64::max);
    Ok(sup + seminorm)
}

/// Pointwise bound: one constant or one value per control node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Bound {
    Constant(f64),
    PerNode(Vec<f64>),
}

impl Bound {
    fn at(&self, i: usize) -> f64 {
        match self {
            Bound::Constant(c) => *c,
            Bound::PerNode(v) => v[i],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdmissibleSet {
    pub z_a: Bound,
    pub z_b: Bound,
    /// Derivative bound `‖∂_t z(t)‖ ≤ M t^{ρ-1}`.
    #[serde(rename = "M")]
    pub m: f64,
    pub rho: f64,
    /// Apply the causal increment limiter when the derivative bound fails.
    #[serde(default)]
    pub enforce_derivative_bound: bool,
}

impl AdmissibleSet {
    pub fn boxed(z_a: f64, z_b: f64, m: f64, rho: f64) -> Self {
        AdmissibleSet {
            z_a: Bound::Constant(z_a),
            z_b: Bound::Constant(z_b),
            m,
            rho,
            enforce_derivative_bound: false,
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.m > 0.0) {
            return Err(Error::config("admissible_set.M", "must be > 0"));
        }
        if !(self.rho > 0.5 && self.rho <= 1.0) {
            return Err(Error::config(
                "admissible_set.rho",
                format!("the admissible set needs 1/2 < rho <= 1 (got {})", self.rho),
            ));
        }
        for (name, b) in [("z_a", &self.z_a), ("z_b", &self.z_b)] {
            if let Bound::PerNode(v) = b {
                if v.len() != dim {
                    return Err(Error::config(
                        format!("admissible_set.{name}"),
                        format!("expected {dim} values, got {}", v.len()),
                    ));
                }
            }
        }
        for i in 0..dim {
            if !(self.z_a.at(i) <= self.z_b.at(i)) {
                return Err(Error::config("admissible_set", format!("z_a > z_b at control node {i}")));
            }
        }
        Ok(())
    }

    /// `M (t_j^ρ - t_{j-1}^ρ) / ρ`, the integrated derivative bound per step.
    fn increment_cap(&self, t0: f64, t1: f64) -> f64 {
        self.m * (t1.powf(self.rho) - t0.powf(self.rho)) / self.rho
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ProjectionReport {
    pub clamped_entries: usize,
    pub derivative_violations_before: usize,
    pub limited_steps: usize,
    /// Steps still violating the derivative bound after projection.
    pub residual_violations: usize,
}

/// Clamp into `[z_a, z_b]`, then check the derivative bound and, when
/// enabled, limit increments causally and re-clamp.
pub fn project_admissible(
    z: &ControlSignal,
    set: &AdmissibleSet,
    weights: &[f64],
) -> (ControlSignal, ProjectionReport) {
    let mut report = ProjectionReport::default();
    let mut out = z.clone();
    for v in out.values.iter_mut() {
        for (i, x) in v.iter_mut().enumerate() {
            let c = x.clamp(set.z_a.at(i), set.z_b.at(i));
            if c != *x {
                report.clamped_entries += 1;
                *x = c;
            }
        }
    }
    let t = z.grid.nodes();
    let violations = |s: &ControlSignal| {
        (1..t.len())
            .filter(|&j| {
                let d: Vec<f64> = s.values[j].iter().zip(&s.values[j - 1]).map(|(a, b)| a - b).collect();
                dot_w(&d, &d, weights).sqrt() > set.increment_cap(t[j - 1], t[j]) * (1.0 + 1e-12)
            })
            .count()
    };
    report.derivative_violations_before = violations(&out);
    if set.enforce_derivative_bound && report.derivative_violations_before > 0 {
        for j in 1..t.len() {
            let cap = set.increment_cap(t[j - 1], t[j]);
            let d: Vec<f64> = out.values[j].iter().zip(&out.values[j - 1]).map(|(a, b)| a - b).collect();
            let norm = dot_w(&d, &d, weights).sqrt();
            if norm > cap {
                report.limited_steps += 1;
                let s = cap / norm;
                let prev = out.values[j - 1].clone();
                for (i, x) in out.values[j].iter_mut().enumerate() {
                    *x = (prev[i] + s * d[i]).clamp(set.z_a.at(i), set.z_b.at(i));
                }
            }
        }
    }
    report.residual_violations = violations(&out);
    (out, report)
}

/// Target values per time node on the state grid (interior samples or the
/// boundary pair).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Zero,
    Constant(f64),
    Samples(Vec<Vec<f64>>),
}

impl Default for Target {
    fn default() -> Self {
        Target::Zero
    }
}

impl Target {
    fn value(&self, j: usize, i: usize) -> f64 {
        match self {
            Target::Zero => 0.0,
            Target::Constant(c) => *c,
            Target::Samples(s) => s[j][i],
        }
    }

    fn check(&self, n_t: usize, dim: usize, path: &str) -> Result<()> {
        if let Target::Samples(s) = self {
            if s.len() != n_t {
                return Err(Error::config(path, format!("expected {n_t} time nodes, got {}", s.len())));
            }
            if let Some(row) = s.iter().find(|r| r.len() != dim) {
                return Err(Error::config(path, format!("expected {dim} values per node, got {}", row.len())));
            }
        }
        Ok(())
    }

    /// `max_j t_j^{1-θ} ‖∂_t z(t_j)‖` over interior nodes for sampled
    /// targets; zero for constant ones.
    pub fn y_seminorm(&self, grid: &GradedTimeGrid, weights: &[f64], theta: f64) -> f64 {
        let Target::Samples(s) = self else {
            return 0.0;
        };
        let t = grid.nodes();
        if s.len() != t.len() || t.len() < 3 {
            return 0.0;
        }
        let mut deriv = vec![vec![0.0; weights.len()]; t.len()];
        for i in 0..weights.len() {
            let series: Vec<f64> = s.iter().map(|v| v[i]).collect();
            for (j, dv) in node_derivative(t, &series).into_iter().enumerate() {
                deriv[j][i] = dv;
            }
        }
        (1..t.len() - 1)
            .map(|j| t[j].powf(1.0 - theta) * dot_w(&deriv[j], &deriv[j], weights).sqrt())
            .fold(0.0, f64::max)
    }
}

/// `J = (a₁/2)∫‖u - z_Q‖²_{L²(Ω)} + (a₂/2)∫‖u - z_Σ‖²_{L²(∂Ω)} + (ζ/2)‖z‖²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSpec {
    pub a1: f64,
    #[serde(default)]
    pub a2: f64,
    pub zeta: f64,
    #[serde(default)]
    pub z_q: Target,
    #[serde(default)]
    pub z_sigma: Target,
}

impl CostSpec {
    pub fn validate(&self, basis: &EigenBasis, n_t: usize) -> Result<()> {
        if !(self.a1 >= 0.0 && self.a2 >= 0.0 && self.zeta >= 0.0) {
            return Err(Error::config("cost", "a1, a2 and zeta must be nonnegative"));
        }
        if !(self.a1 + self.a2 > 0.0) {
            return Err(Error::config("cost", "a1 + a2 must be positive"));
        }
        if self.a2 > 0.0 && !basis.spec().has_boundary() {
            return Err(Error::config(
                "cost.a2",
                "boundary tracking needs an operator with boundary traces (wentzell_robin_1d)",
            ));
        }
        self.z_q.check(n_t, basis.grid().n_interior(), "cost.z_q")?;
        self.z_sigma.check(n_t, 2, "cost.z_sigma")?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostValue {
    pub j1: f64,
    pub j2: f64,
    pub total: f64,
}

/// Residual values `(a₁(u - z_Q), a₂(u - z_Σ))` at nominal node `j` on the
/// state grid.
fn weighted_residual(basis: &EigenBasis, u: &SpectralField, cs: &CostSpec, j: usize) -> Vec<f64> {
    let mut vals = basis.synthesize_slice(&u.coeffs);
    let m = basis.grid().n_interior();
    for (i, v) in vals.iter_mut().enumerate() {
        *v = if i < m {
            cs.a1 * (*v - cs.z_q.value(j, i))
        } else {
            cs.a2 * (*v - cs.z_sigma.value(j, i - m))
        };
    }
    vals
}

/// Trapezoid-in-time, quadrature-in-space value of the cost.
pub fn eval_cost(
    basis: &EigenBasis,
    control: &ControlOperator,
    traj: &Trajectory,
    z: &ControlSignal,
    cs: &CostSpec,
) -> Result<CostValue> {
    if !traj.is_complete() {
        return Err(Error::Solver("cost requested for a trajectory that blew up".into()));
    }
    if z.grid != traj.grid {
        return Err(Error::Domain("eval_cost: control and state grids differ".into()));
    }
    let omega = traj.grid.trapezoid_weights();
    let m = basis.grid().n_interior();
    let mut j1 = 0.0;
    for (j, w) in omega.iter().enumerate() {
        let u = traj.nominal_state(j);
        let vals = basis.synthesize_slice(&u.coeffs);
        let mut s = 0.0;
        for (i, qw) in basis.grid().quad_weights().iter().enumerate() {
            s += cs.a1 * qw * (vals[i] - cs.z_q.value(j, i)).powi(2);
        }
        if let Some(bw) = basis.grid().boundary_weights() {
            for b in 0..2 {
                s += cs.a2 * bw[b] * (vals[m + b] - cs.z_sigma.value(j, b)).powi(2);
            }
        }
        j1 += 0.5 * w * s;
    }
    let cw = control.weights(basis);
    let j2 = 0.5 * cs.zeta * z.inner(z, &cw);
    Ok(CostValue { j1, j2, total: j1 + j2 })
}

/// `d_u J₁` at every nominal node as a spectral field, so that
/// `∫⟨ψ, η⟩ dt` is the directional derivative of `J₁`.
pub fn tracking_gradient(basis: &EigenBasis, traj: &Trajectory, cs: &CostSpec) -> Vec<SpectralField> {
    (0..traj.grid.len())
        .map(|j| {
            let vals = weighted_residual(basis, traj.nominal_state(j), cs, j);
            SpectralField::new(basis.analyze_slice(&vals))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{build_basis, OperatorSpec, PhysicalGrid};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn went() -> EigenBasis {
        let spec = OperatorSpec::wentzell([1.0, 0.5], 1.0, 0.0);
        build_basis(&spec, 6, PhysicalGrid::for_operator(&spec, 96).unwrap()).unwrap()
    }

    fn neu() -> EigenBasis {
        let spec = OperatorSpec::neumann(1.0, 1.0);
        build_basis(&spec, 6, PhysicalGrid::trapezoid(1.0, 48).unwrap()).unwrap()
    }

    #[test]
    fn apply_b_examples() {
        let b = neu();
        let op = ControlOperator::interior();
        assert!(op.apply_b(&b, &vec![0.0; 49]).unwrap().norm() == 0.0);
        let e = op.apply_b(&b, b.mode_values(1)).unwrap();
        assert!(e.sub(&SpectralField::unit(6, 1)).norm() < 1e-12);
        let w = went();
        let op = ControlOperator::boundary();
        let c = op.apply_b(&w, &[1.0, 1.0]).unwrap();
        for n in 0..6 {
            let want = w.mode_at(n, 0.0) + w.mode_at(n, 1.0);
            assert!((c.coeffs[n] - want).abs() < 1e-14);
        }
        let tr = op.apply_b_star(&w, &SpectralField::unit(6, 3).scaled(2.0)).unwrap();
        assert!((tr[0] - 2.0 * w.mode_at(3, 0.0)).abs() < 1e-14);
        assert!((tr[1] - 2.0 * w.mode_at(3, 1.0)).abs() < 1e-14);
        assert!(op.validate(&b).is_err());
    }

    #[test]
    fn adjoint_identity_random_pairs() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for (basis, op) in [
            (neu(), ControlOperator::interior()),
            (went(), ControlOperator::interior()),
            (went(), ControlOperator::boundary()),
        ] {
            let d = op.dim(&basis);
            let w = op.weights(&basis);
            for _ in 0..100 {
                let z: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let v = SpectralField::new((0..6).map(|_| rng.gen_range(-1.0..1.0)).collect());
                let lhs = op.apply_b(&basis, &z).unwrap().dot(&v);
                let rhs = dot_w(&z, &op.apply_b_star(&basis, &v).unwrap(), &w);
                assert!((lhs - rhs).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn zrho_norm_examples() {
        let grid = GradedTimeGrid::new(1.0, 256, 2.0).unwrap();
        let w = vec![0.5, 0.5];
        assert_eq!(zrho_norm(&ControlSignal::zeros(&grid, 2), 0.7, &w).unwrap(), 0.0);
        let c = ControlSignal::from_fn(&grid, 2, |_, i| [3.0, 4.0][i]);
        let cn = (0.5f64 * 9.0 + 0.5 * 16.0).sqrt();
        assert!((zrho_norm(&c, 0.7, &w).unwrap() - cn).abs() < 1e-12);
        let rho = 0.75;
        let z = ControlSignal::from_fn(&grid, 2, |t, i| t.powf(rho) * [3.0, 4.0][i]);
        let want = cn + rho * cn;
        let got = zrho_norm(&z, rho, &w).unwrap();
        // the difference quotient at t_1 misses t^{ρ-1} by a fixed fraction
        assert!((got - want).abs() < 0.1 * want, "{got} vs {want}");
    }

    #[test]
    fn target_seminorm_examples() {
        let grid = GradedTimeGrid::new(1.0, 256, 2.0).unwrap();
        let w = vec![0.25; 4];
        assert_eq!(Target::Constant(2.0).y_seminorm(&grid, &w, 0.4), 0.0);
        let theta = 0.75;
        let s = grid.nodes().iter().map(|t| vec![t.powf(theta); 4]).collect();
        let got = Target::Samples(s).y_seminorm(&grid, &w, theta);
        // on r = 2 grids the weighted difference quotient at t_1 is
        // 3/4 + (4^θ - 1)/12 for every n, and later nodes tend to θ
        let first = 0.75 + (4f64.powf(theta) - 1.0) / 12.0;
        assert!((got - first).abs() < 1e-12, "{got} vs {first}");
    }

    #[test]
    fn projection_examples() {
        let grid = GradedTimeGrid::new(1.0, 16, 1.0).unwrap();
        let set = AdmissibleSet::boxed(-1.0, 1.0, 100.0, 1.0);
        let w = vec![1.0, 1.0];
        let feasible = ControlSignal::from_fn(&grid, 2, |t, i| 0.3 * t - 0.1 * i as f64);
        let (p, r) = project_admissible(&feasible, &set, &w);
        assert_eq!(p, feasible);
        assert_eq!(r.clamped_entries, 0);
        let high = ControlSignal::from_fn(&grid, 2, |_, _| 5.0);
        let (p, _) = project_admissible(&high, &set, &w);
        assert!(p.values.iter().flatten().all(|v| *v == 1.0));
    }

    #[test]
    fn limiter_enforces_the_derivative_bound() {
        let grid = GradedTimeGrid::new(1.0, 32, 2.0).unwrap();
        let mut set = AdmissibleSet::boxed(-2.0, 2.0, 0.5, 0.75);
        let w = vec![1.0, 1.0];
        let jumpy = ControlSignal::from_fn(&grid, 2, |t, _| if t > 0.5 { 1.5 } else { 0.0 });
        let (_, r) = project_admissible(&jumpy, &set, &w);
        assert!(r.derivative_violations_before > 0);
        assert_eq!(r.residual_violations, r.derivative_violations_before);
        set.enforce_derivative_bound = true;
        let (_, r) = project_admissible(&jumpy, &set, &w);
        assert!(r.limited_steps > 0);
        assert_eq!(r.residual_violations, 0);
    }

    #[test]
    fn validation_messages() {
        let set = AdmissibleSet::boxed(0.0, 1.0, 1.0, 0.5);
        match set.validate(3) {
            Err(Error::Config { path, message }) => {
                assert_eq!(path, "admissible_set.rho");
                assert!(message.contains("1/2 < rho"));
            }
            other => panic!("{other:?}"),
        }
        assert!(AdmissibleSet::boxed(1.0, 0.0, 1.0, 0.8).validate(1).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let grid = GradedTimeGrid::new(2.0, 5, 1.5).unwrap();
        let z = ControlSignal::from_fn(&grid, 3, |t, i| (t * (i + 1) as f64).sin() / 3.0);
        let text = z.to_csv();
        assert_eq!(ControlSignal::from_csv(&grid, &text).unwrap(), z);
    }

    proptest! {
        #[test]
        fn clamp_projection_is_idempotent_and_nonexpansive(
            a in prop::collection::vec(-3.0f64..3.0, 18),
            b in prop::collection::vec(-3.0f64..3.0, 18),
        ) {
            let grid = GradedTimeGrid::new(1.0, 5, 1.0).unwrap();
            let w = vec![0.5, 1.5, 1.0];
            let set = AdmissibleSet::boxed(-1.0, 0.8, 1e6, 1.0);
            let mk = |v: &Vec<f64>| ControlSignal::new(grid.clone(), v.chunks(3).map(|c| c.to_vec()).collect()).unwrap();
            let (za, zb) = (mk(&a), mk(&b));
            let (pa, _) = project_admissible(&za, &set, &w);
            let (ppa, _) = project_admissible(&pa, &set, &w);
            prop_assert_eq!(&ppa, &pa);
            let (pb, _) = project_admissible(&zb, &set, &w);
            let d_proj = pa.axpy(-1.0, &pb).l2_norm(&w);
            let d = za.axpy(-1.0, &zb).l2_norm(&w);
            prop_assert!(d_proj <= d + 1e-12);
        }

        #[test]
        fn control_cost_is_convex(
            a in prop::collection::vec(-3.0f64..3.0, 12),
            b in prop::collection::vec(-3.0f64..3.0, 12),
            zeta in 0.0f64..5.0,
        ) {
            let grid = GradedTimeGrid::new(1.0, 5, 2.0).unwrap();
            let w = vec![1.0, 1.0];
            let mk = |v: &Vec<f64>| ControlSignal::new(grid.clone(), v.chunks(2).map(|c| c.to_vec()).collect()).unwrap();
            let (za, zb) = (mk(&a), mk(&b));
            let j2 = |z: &ControlSignal| 0.5 * zeta * z.inner(z, &w);
            let mid = za.axpy(1.0, &zb).scaled(0.5);
            prop_assert!(j2(&mid) <= 0.5 * (j2(&za) + j2(&zb)) + 1e-12);
        }
    }
}
