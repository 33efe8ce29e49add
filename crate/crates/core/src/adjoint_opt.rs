//! Linearized and adjoint solves, the reduced gradient, optimality
//! diagnostics and a projected-gradient optimizer.
//!
//! The adjoint is the exact transpose of the discrete linearized map: with
//! `η = L(Dη + b)` (`L` the product-integration operator, `D` the modal
//! Jacobians, `b = 𝔹h`) and the cost pairing `Σ_j ω_j ⟨ψ_j, η_j⟩`, the
//! adjoint solves `v = Lᵀ(Cψ + Dᵀv)` by a backward march and `w_j = v_j/ω_j`.
//! This marches the time-reversed Volterra equation with the transposed
//! weights, so `∫⟨ψ, η⟩ = ∫⟨w, 𝔹h⟩` holds to rounding on every grid.
//!
//! [`AdjointScheme::Continuous`] instead discretizes the backward equation
//! directly with the product-integration masses of `K` and `w(T) = 0`. Its
//! duality gap is a discretization error that shrinks under refinement.

use log::info;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control_cost::{
    eval_cost, project_admissible, tracking_gradient, AdmissibleSet, ControlSignal, CostSpec, CostValue,
    ProjectionReport,
};
use crate::error::{Error, Result};
use crate::forward::{solve_forward, ForwardProblem, PicardOptions, SolveReport, Trajectory};
use crate::fracops::GradedTimeGrid;
use crate::spectral::SpectralField;

fn jacobians(problem: &ForwardProblem, u: &Trajectory) -> Result<Vec<Option<DMatrix<f64>>>> {
    let nl = problem.nonlinearity();
    if nl.is_zero() {
        return Ok(vec![None; u.states.len()]);
    }
    u.states.par_iter().map(|s| nl.jacobian(s).map(Some)).collect()
}

/// `(I - diag(c) M) x = rhs`, or `x = rhs` without a Jacobian.
fn step_solve(c: &[f64], m: Option<&DMatrix<f64>>, rhs: Vec<f64>) -> Result<Vec<f64>> {
    let Some(m) = m else { return Ok(rhs) };
    let n = c.len();
    let mut a = DMatrix::identity(n, n);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] -= c[i] * m[(i, j)];
        }
    }
    a.lu()
        .solve(&DVector::from_vec(rhs))
        .map(|x| x.as_slice().to_vec())
        .ok_or_else(|| Error::Solver("singular step matrix in the linearized/adjoint solve".into()))
}

fn matvec(m: Option<&DMatrix<f64>>, x: &[f64], transpose: bool) -> Vec<f64> {
    match m {
        None => vec![0.0; x.len()],
        Some(m) => {
            let v = DVector::from_column_slice(x);
            let r = if transpose { m.tr_mul(&v) } else { m * v };
            r.as_slice().to_vec()
        }
    }
}

/// Nominal nodes and weights of the linear interpolant at time `t`.
fn interp_weights(grid: &GradedTimeGrid, t: f64) -> [(usize, f64); 2] {
    let nodes = grid.nodes();
    let j = nodes.partition_point(|x| *x < t).min(nodes.len() - 1);
    if nodes[j] == t || j == 0 {
        return [(j, 1.0), (j, 0.0)];
    }
    let s = (t - nodes[j - 1]) / (nodes[j] - nodes[j - 1]);
    [(j - 1, 1.0 - s), (j, s)]
}

/// `η` with `∂_t^γ η + Aη = f'(u_*)η + 𝔹h`, `η(0) = 0`, on the nodes of
/// `u_star`.
pub fn solve_linearized(problem: &ForwardProblem, u_star: &Trajectory, h: &ControlSignal) -> Result<Trajectory> {
    if !u_star.is_complete() {
        return Err(Error::Solver("linearization around a trajectory that blew up".into()));
    }
    if h.grid != u_star.grid {
        return Err(Error::Domain("direction and state grids differ".into()));
    }
    let basis = problem.basis();
    let n = basis.n_modes();
    let table = problem.table_for(&u_star.times)?;
    let jac = jacobians(problem, u_star)?;
    let b: Vec<Vec<f64>> = u_star
        .times
        .iter()
        .map(|t| problem.control().apply_b(basis, &h.value_at(*t)).map(|f| f.coeffs))
        .collect::<Result<_>>()?;
    let mut eta = vec![vec![0.0; n]];
    let mut g_prev = b[0].clone();
    let mut means: Vec<Vec<f64>> = Vec::with_capacity(b.len());
    for j in 1..u_star.times.len() {
        let mut acc = vec![0.0; n];
        table.accumulate(j, j - 1, &means, &mut acc);
        let half_w: Vec<f64> = table.mass(j, j - 1).iter().map(|w| 0.5 * w).collect();
        for i in 0..n {
            acc[i] += half_w[i] * (g_prev[i] + b[j][i]);
        }
        let e = step_solve(&half_w, jac[j].as_ref(), acc)?;
        let mut g = matvec(jac[j].as_ref(), &e, false);
        for i in 0..n {
            g[i] += b[j][i];
        }
        means.push(g_prev.iter().zip(&g).map(|(a, b)| 0.5 * (a + b)).collect());
        g_prev = g;
        eta.push(e);
    }
    Ok(Trajectory {
        grid: u_star.grid.clone(),
        times: u_star.times.clone(),
        nominal: u_star.nominal.clone(),
        states: eta.into_iter().map(SpectralField::new).collect(),
        status: u_star.status,
    })
}

/// Adjoint state `w` on the nominal grid for the cost density `psi`
/// (one field per nominal node), linearized around `u_star`.
pub fn solve_adjoint(problem: &ForwardProblem, u_star: &Trajectory, psi: &[SpectralField]) -> Result<Trajectory> {
    if !u_star.is_complete() {
        return Err(Error::Solver("adjoint around a trajectory that blew up".into()));
    }
    let grid = &u_star.grid;
    if psi.len() != grid.len() {
        return Err(Error::mismatch(grid.len(), psi.len(), "adjoint source nodes"));
    }
    let n = problem.basis().n_modes();
    let omega = grid.trapezoid_weights();
    let n_t = u_star.times.len();
    let mut c = vec![vec![0.0; n]; n_t];
    for (j, &i) in u_star.nominal.iter().enumerate() {
        if psi[j].len() != n {
            return Err(Error::mismatch(n, psi[j].len(), "adjoint source field"));
        }
        c[i] = psi[j].coeffs.iter().map(|p| omega[j] * p).collect();
    }
    let table = problem.table_for(&u_star.times)?;
    let jac = jacobians(problem, u_star)?;

    let mut v = vec![vec![0.0; n]; n_t];
    let mut y = vec![vec![0.0; n]; n_t];
    let mut s_next = vec![0.0; n];
    for i in (1..n_t).rev() {
        // r_i = Σ_{j>i} W_{ji} y_j
        let mut r = vec![0.0; n];
        for (j, yj) in y.iter().enumerate().skip(i + 1) {
            let a = table.mass(j, i - 1);
            let b = table.mass(j, i);
            for m in 0..n {
                r[m] += (a[m] - b[m]) * yj[m];
            }
        }
        let w_ii = table.mass(i, i - 1);
        let half_w: Vec<f64> = w_ii.iter().map(|w| 0.5 * w).collect();
        let rhs: Vec<f64> = (0..n).map(|m| 0.5 * (w_ii[m] * c[i][m] + r[m] + s_next[m])).collect();
        let jt = jac[i].as_ref().map(|j| j.transpose());
        v[i] = step_solve(&half_w, jt.as_ref(), rhs)?;
        let dv = matvec(jac[i].as_ref(), &v[i], true);
        y[i] = (0..n).map(|m| c[i][m] + dv[m]).collect();
        s_next = (0..n).map(|m| w_ii[m] * y[i][m] + r[m]).collect();
    }
    v[0] = s_next.iter().map(|s| 0.5 * s).collect();

    let mut w = vec![vec![0.0; n]; grid.len()];
    for (t, vi) in u_star.times.iter().zip(&v) {
        for (j, a) in interp_weights(grid, *t) {
            if a != 0.0 {
                for m in 0..n {
                    w[j][m] += a * vi[m];
                }
            }
        }
    }
    let states = w
        .into_iter()
        .zip(&omega)
        .map(|(wj, o)| SpectralField::new(wj.into_iter().map(|x| x / o).collect()))
        .collect();
    Trajectory::on_grid(grid, states)
}

/// How the adjoint state is discretized.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdjointScheme {
    /// Exact transpose of the discrete linearized map ([`solve_adjoint`]).
    #[default]
    DiscreteTranspose,
    /// Product integration of the backward mild equation
    /// ([`solve_adjoint_continuous`]).
    Continuous,
}

pub fn solve_adjoint_with(
    problem: &ForwardProblem,
    u_star: &Trajectory,
    psi: &[SpectralField],
    scheme: AdjointScheme,
) -> Result<Trajectory> {
    match scheme {
        AdjointScheme::DiscreteTranspose => solve_adjoint(problem, u_star, psi),
        AdjointScheme::Continuous => solve_adjoint_continuous(problem, u_star, psi),
    }
}

/// Adjoint from the backward mild equation
/// `w(t) = ∫_t^T P(τ - t)[f'(u_*(τ))* w(τ) + ψ(τ)] dτ`, discretized like the
/// forward solve: kernel masses over `[t_{k-1}, t_k]` times the mean of the
/// bracket at the two ends, marched from `w(T) = 0`. Uses the nominal nodes
/// of `u_star` only. Its duality gap against [`solve_linearized`] is a
/// discretization error.
pub fn solve_adjoint_continuous(problem: &ForwardProblem, u_star: &Trajectory, psi: &[SpectralField]) -> Result<Trajectory> {
    if !u_star.is_complete() {
        return Err(Error::Solver("adjoint around a trajectory that blew up".into()));
    }
    let grid = &u_star.grid;
    if psi.len() != grid.len() {
        return Err(Error::mismatch(grid.len(), psi.len(), "adjoint source nodes"));
    }
    let n = problem.basis().n_modes();
    if let Some(p) = psi.iter().find(|p| p.len() != n) {
        return Err(Error::mismatch(n, p.len(), "adjoint source field"));
    }
    let table = problem.table_for(grid.nodes())?;
    let states = u_star.nominal_states();
    let jac: Vec<Option<DMatrix<f64>>> = if problem.nonlinearity().is_zero() {
        vec![None; states.len()]
    } else {
        states
            .par_iter()
            .map(|s| problem.nonlinearity().jacobian(s).map(|m| Some(m.transpose())))
            .collect::<Result<_>>()?
    };
    let n_t = grid.len();
    let mut w = vec![vec![0.0; n]; n_t];
    // bracket G_k = D_k^T w_k + ψ_k
    let mut g = vec![vec![0.0; n]; n_t];
    g[n_t - 1] = psi[n_t - 1].coeffs.clone();
    for j in (0..n_t - 1).rev() {
        let mut rhs = vec![0.0; n];
        for k in j + 1..n_t {
            let hi = table.mass(k, j);
            let lo = table.mass(k - 1, j);
            let (a, b) = if k == j + 1 { (&psi[j].coeffs, &g[k]) } else { (&g[k - 1], &g[k]) };
            for m in 0..n {
                rhs[m] += 0.5 * (hi[m] - lo[m]) * (a[m] + b[m]);
            }
        }
        let half_v: Vec<f64> = table.mass(j + 1, j).iter().map(|v| 0.5 * v).collect();
        w[j] = step_solve(&half_v, jac[j].as_ref(), rhs)?;
        let dw = match &jac[j] {
            Some(m) => (m * DVector::from_column_slice(&w[j])).as_slice().to_vec(),
            None => vec![0.0; n],
        };
        g[j] = (0..n).map(|m| dw[m] + psi[j].coeffs[m]).collect();
    }
    Trajectory::on_grid(grid, w.into_iter().map(SpectralField::new).collect())
}

/// `𝔹*w + ζz` at every node.
pub fn reduced_gradient(problem: &ForwardProblem, z: &ControlSignal, w: &Trajectory, cs: &CostSpec) -> Result<ControlSignal> {
    if z.grid != w.grid || w.nominal.len() != z.grid.len() {
        return Err(Error::Domain("reduced_gradient: control and adjoint grids differ".into()));
    }
    let basis = problem.basis();
    let values = (0..z.grid.len())
        .map(|j| {
            let bw = problem.control().apply_b_star(basis, w.nominal_state(j))?;
            Ok(bw.iter().zip(&z.values[j]).map(|(b, z)| b + cs.zeta * z).collect())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    ControlSignal::new(z.grid.clone(), values)
}

/// Relative mismatch of `∫⟨ψ, η⟩ dt` and `∫⟨w, 𝔹h⟩ dt`.
pub fn duality_gap(
    problem: &ForwardProblem,
    psi: &[SpectralField],
    eta: &Trajectory,
    w: &Trajectory,
    h: &ControlSignal,
) -> Result<f64> {
    let grid = &h.grid;
    if psi.len() != grid.len() || eta.nominal.len() != grid.len() || w.nominal.len() != grid.len() {
        return Err(Error::Domain("duality_gap: inputs live on different grids".into()));
    }
    let omega = grid.trapezoid_weights();
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    for (j, o) in omega.iter().enumerate() {
        lhs += o * psi[j].dot(eta.nominal_state(j));
        rhs += o * w.nominal_state(j).dot(&problem.control().apply_b(problem.basis(), &h.values[j])?);
    }
    Ok((lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1e-30))
}

fn project(z: &ControlSignal, set: Option<&AdmissibleSet>, weights: &[f64]) -> (ControlSignal, ProjectionReport) {
    match set {
        Some(s) => project_admissible(z, s, weights),
        None => (z.clone(), ProjectionReport::default()),
    }
}

/// `‖z - P(z - s·grad)‖` in the discrete `L²((0,T) × D)` norm.
pub fn vi_residual(
    z_star: &ControlSignal,
    grad: &ControlSignal,
    set: Option<&AdmissibleSet>,
    step: f64,
    weights: &[f64],
) -> f64 {
    let (p, _) = project(&z_star.axpy(-step, grad), set, weights);
    z_star.axpy(-1.0, &p).l2_norm(weights)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimOptions {
    pub max_outer_iters: usize,
    pub initial_step: f64,
    pub shrink: f64,
    pub sufficient_decrease: f64,
    pub max_shrinks: usize,
    pub grad_tol: f64,
    pub vi_tol: f64,
    /// Start each line search at the Barzilai-Borwein step.
    pub barzilai_borwein: bool,
}

impl Default for OptimOptions {
    fn default() -> Self {
        OptimOptions {
            max_outer_iters: 200,
            initial_step: 1.0,
            shrink: 0.5,
            sufficient_decrease: 1e-4,
            max_shrinks: 40,
            grad_tol: 1e-12,
            vi_tol: 1e-9,
            barzilai_borwein: true,
        }
    }
}

impl OptimOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(Error::config("optimizer.shrink", "must lie in (0, 1)"));
        }
        if !(self.sufficient_decrease > 0.0 && self.sufficient_decrease <= 0.5) {
            return Err(Error::config("optimizer.sufficient_decrease", "must lie in (0, 1/2]"));
        }
        if !(self.initial_step > 0.0) {
            return Err(Error::config("optimizer.initial_step", "must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub cost: f64,
    pub step: f64,
    pub vi_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FinalRecord {
    pub cost: f64,
    pub j1: f64,
    pub j2: f64,
    pub vi_residual: f64,
    pub projected_gradient_norm: f64,
    pub gradient_norm: f64,
    pub duality_gap: f64,
    pub converged: bool,
    pub outer_iterations: usize,
    pub feasible: bool,
    pub projection: ProjectionReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimReport {
    pub iterations: Vec<IterationRecord>,
    #[serde(rename = "final")]
    pub final_: FinalRecord,
}

/// A forward problem together with its initial state, cost and constraints.
#[derive(Debug)]
pub struct ControlProblem {
    pub forward: ForwardProblem,
    pub u0: SpectralField,
    pub cost: CostSpec,
    pub set: Option<AdmissibleSet>,
    pub picard: PicardOptions,
    pub adjoint: AdjointScheme,
}

/// Cost, gradient and the intermediate objects behind them.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub cost: CostValue,
    pub state: Trajectory,
    pub psi: Vec<SpectralField>,
    pub adjoint: Trajectory,
    pub gradient: ControlSignal,
}

impl ControlProblem {
    pub fn new(
        forward: ForwardProblem,
        u0: SpectralField,
        cost: CostSpec,
        set: Option<AdmissibleSet>,
        picard: PicardOptions,
    ) -> Result<Self> {
        cost.validate(forward.basis(), forward.grid().len())?;
        if let Some(s) = &set {
            s.validate(forward.control_dim())?;
        }
        picard.validate()?;
        if u0.len() != forward.basis().n_modes() {
            return Err(Error::mismatch(forward.basis().n_modes(), u0.len(), "initial state"));
        }
        Ok(ControlProblem {
            forward,
            u0,
            cost,
            set,
            picard,
            adjoint: AdjointScheme::default(),
        })
    }

    pub fn with_adjoint_scheme(mut self, scheme: AdjointScheme) -> Self {
        self.adjoint = scheme;
        self
    }

    pub fn weights(&self) -> Vec<f64> {
        self.forward.control_weights()
    }

    pub fn state(&self, z: &ControlSignal) -> Result<(Trajectory, SolveReport)> {
        solve_forward(&self.forward, z, &self.u0, &self.picard)
    }

    pub fn objective(&self, z: &ControlSignal) -> Result<(CostValue, Trajectory)> {
        let (traj, _) = self.state(z)?;
        let c = eval_cost(self.forward.basis(), self.forward.control(), &traj, z, &self.cost)?;
        Ok((c, traj))
    }

    pub fn evaluate(&self, z: &ControlSignal) -> Result<Evaluation> {
        let (cost, state) = self.objective(z)?;
        self.gradient_at(z, cost, state)
    }

    fn gradient_at(&self, z: &ControlSignal, cost: CostValue, state: Trajectory) -> Result<Evaluation> {
        let psi = tracking_gradient(self.forward.basis(), &state, &self.cost);
        let adjoint = solve_adjoint_with(&self.forward, &state, &psi, self.adjoint)?;
        let gradient = reduced_gradient(&self.forward, z, &adjoint, &self.cost)?;
        Ok(Evaluation {
            cost,
            state,
            psi,
            adjoint,
            gradient,
        })
    }

    pub fn project(&self, z: &ControlSignal) -> (ControlSignal, ProjectionReport) {
        project(z, self.set.as_ref(), &self.weights())
    }
}

/// Projected gradient with Armijo backtracking.
pub fn optimize(cp: &ControlProblem, z0: &ControlSignal, opts: &OptimOptions) -> Result<(ControlSignal, OptimReport)> {
    opts.validate()?;
    let weights = cp.weights();
    let set = cp.set.as_ref();
    let (mut z, _) = cp.project(z0);
    let mut ev = cp
        .evaluate(&z)
        .map_err(|e| Error::Optimizer(format!("forward problem not solvable at the initial control: {e}")))?;
    let mut vi = vi_residual(&z, &ev.gradient, set, 1.0, &weights);
    let mut iterations = vec![IterationRecord {
        cost: ev.cost.total,
        step: 0.0,
        vi_residual: vi,
    }];
    let mut prev: Option<(ControlSignal, ControlSignal)> = None;
    let mut converged = false;
    for k in 1..=opts.max_outer_iters {
        if vi <= opts.vi_tol || ev.gradient.l2_norm(&weights) <= opts.grad_tol {
            converged = true;
            break;
        }
        let mut s = opts.initial_step;
        if opts.barzilai_borwein {
            if let Some((zp, gp)) = &prev {
                let dz = z.axpy(-1.0, zp);
                let dg = ev.gradient.axpy(-1.0, gp);
                let den = dz.inner(&dg, &weights);
                let bb = dz.inner(&dz, &weights) / den;
                if den > 0.0 && bb.is_finite() {
                    s = bb.clamp(1e-10, 1e10);
                }
            }
        }
        let mut shrinks = 0;
        let (z_new, c_new, traj_new) = loop {
            let (cand, _) = cp.project(&z.axpy(-s, &ev.gradient));
            let d = cand.axpy(-1.0, &z);
            let slope = ev.gradient.inner(&d, &weights);
            match cp.objective(&cand) {
                Ok((c, t)) if c.total <= ev.cost.total + opts.sufficient_decrease * slope => break (cand, c, t),
                Ok(_) => {}
                Err(e) => info!("line search trial at step {s:e} failed: {e}"),
            }
            shrinks += 1;
            if shrinks > opts.max_shrinks {
                return Err(Error::Optimizer(format!(
                    "line search failed after {} shrinks at outer iteration {k}",
                    opts.max_shrinks
                )));
            }
            s *= opts.shrink;
        };
        prev = Some((z, ev.gradient.clone()));
        z = z_new;
        ev = cp.gradient_at(&z, c_new, traj_new)?;
        vi = vi_residual(&z, &ev.gradient, set, 1.0, &weights);
        iterations.push(IterationRecord {
            cost: ev.cost.total,
            step: s,
            vi_residual: vi,
        });
        info!("iteration {k}: cost {:.6e}, step {s:.3e}, vi {vi:.3e}", ev.cost.total);
    }
    if !converged && (vi <= opts.vi_tol || ev.gradient.l2_norm(&weights) <= opts.grad_tol) {
        converged = true;
    }

    let eta = solve_linearized(&cp.forward, &ev.state, &ev.gradient)?;
    let gap = duality_gap(&cp.forward, &ev.psi, &eta, &ev.adjoint, &ev.gradient)?;
    let (_, projection) = cp.project(&z);
    let final_ = FinalRecord {
        cost: ev.cost.total,
        j1: ev.cost.j1,
        j2: ev.cost.j2,
        vi_residual: vi,
        projected_gradient_norm: vi,
        gradient_norm: ev.gradient.l2_norm(&weights),
        duality_gap: gap,
        converged,
        outer_iterations: iterations.len() - 1,
        feasible: projection.clamped_entries == 0 && projection.residual_violations == 0,
        projection,
    };
    Ok((z, OptimReport { iterations, final_ }))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FdRow {
    pub epsilon: f64,
    pub finite_difference: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FdReport {
    /// `∫(grad, h) dt` from the adjoint gradient.
    pub directional_derivative: f64,
    pub rows: Vec<FdRow>,
    pub best_relative_error: f64,
}

/// Compares the adjoint gradient with central differences
/// `(J(z + εh) - J(z - εh)) / 2ε` for every `ε` in `epsilons`.
pub fn finite_difference_check(
    cp: &ControlProblem,
    z: &ControlSignal,
    h: &ControlSignal,
    epsilons: &[f64],
) -> Result<FdReport> {
    let ev = cp.evaluate(z)?;
    let dd = ev.gradient.inner(h, &cp.weights());
    let mut rows = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let (jp, _) = cp.objective(&z.axpy(eps, h))?;
        let (jm, _) = cp.objective(&z.axpy(-eps, h))?;
        let fd = (jp.total - jm.total) / (2.0 * eps);
        rows.push(FdRow {
            epsilon: eps,
            finite_difference: fd,
            relative_error: (fd - dd).abs() / dd.abs().max(1e-300),
        });
    }
    let best_relative_error = rows.iter().map(|r| r.relative_error).fold(f64::INFINITY, f64::min);
    Ok(FdReport {
        directional_derivative: dd,
        rows,
        best_relative_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control_cost::{ControlOperator, Target};
    use crate::forward::{Nonlinearity, ProblemIndices};
    use crate::fracops::{rl_integral, Direction, ScalarTrajectory};
    use crate::specfun::SeriesControl;
    use crate::spectral::{build_basis, EigenBasis, OperatorSpec, PhysicalGrid};
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn basis(n: usize) -> Arc<EigenBasis> {
        let spec = OperatorSpec::dirichlet(PI, 0.0);
        Arc::new(build_basis(&spec, n, PhysicalGrid::trapezoid(PI, 16 * n).unwrap()).unwrap())
    }

    fn forward(nl: Nonlinearity, gamma: f64, n_modes: usize, n_steps: usize) -> ForwardProblem {
        let idx = ProblemIndices {
            gamma,
            alpha: 0.5,
            alpha_tilde: 0.0,
            beta: 0.0,
            q: None,
            rho: 1.0,
        };
        let grid = GradedTimeGrid::new(1.0, n_steps, 2.0).unwrap();
        ForwardProblem::new(basis(n_modes), idx, nl, ControlOperator::interior(), grid, SeriesControl::default()).unwrap()
    }

    fn smooth_control(p: &ForwardProblem, a: f64) -> ControlSignal {
        let x = p.basis().grid().nodes().to_vec();
        ControlSignal::from_fn(p.grid(), p.control_dim(), move |t, i| a * (1.0 + t) * (x[i]).sin() * (2.0 - x[i] / PI))
    }

    fn u0(n: usize) -> SpectralField {
        let mut c = vec![0.0; n];
        c[0] = 0.4;
        c[1] = -0.1;
        SpectralField::new(c)
    }

    #[test]
    fn linearized_examples() {
        let p = forward(Nonlinearity::zero(), 0.6, 4, 32);
        let (u, _) = p.solve(&smooth_control(&p, 0.5), &u0(4), &PicardOptions::default()).unwrap();
        let zero = ControlSignal::zeros(p.grid(), p.control_dim());
        let eta = solve_linearized(&p, &u, &zero).unwrap();
        assert!(eta.states.iter().all(|s| s.norm() == 0.0));
        let h = smooth_control(&p, 1.0);
        let eta = solve_linearized(&p, &u, &h).unwrap();
        let bh: Vec<SpectralField> = h.values.iter().map(|v| p.control().apply_b(p.basis(), v).unwrap()).collect();
        let conv = p.context().convolve_p(p.grid(), &bh).unwrap();
        for (a, b) in eta.states.iter().zip(&conv) {
            assert!(a.sub(b).norm() < 1e-10);
        }
    }

    #[test]
    fn linearization_is_the_frechet_derivative() {
        let p = forward(Nonlinearity::AllenCahn { c1: 1.0, c2: 2.0 }, 0.5, 6, 96);
        let z = smooth_control(&p, 0.1);
        let h = smooth_control(&p, 1.0);
        let opts = PicardOptions::default();
        let (u, report) = p.solve(&z, &u0(6), &opts).unwrap();
        // halving would make the discrete map only piecewise smooth
        assert_eq!(report.inserted_nodes, 0);
        let eta = solve_linearized(&p, &u, &h).unwrap();
        let err = |eps: f64| {
            let (ue, r) = p.solve(&z.axpy(eps, &h), &u0(6), &opts).unwrap();
            assert_eq!(r.inserted_nodes, 0);
            (0..u.states.len())
                .map(|j| {
                    let mut d = ue.states[j].sub(&u.states[j]);
                    d.axpy(-eps, &eta.states[j]);
                    p.basis().valpha_norm(&d, 0.5).unwrap()
                })
                .fold(0.0, f64::max)
        };
        let ratio = err(1e-2) / err(5e-3);
        assert!((3.4..=4.6).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn adjoint_examples() {
        let idx = ProblemIndices {
            gamma: 0.5,
            alpha: 0.5,
            alpha_tilde: 0.0,
            beta: 0.0,
            q: None,
            rho: 1.0,
        };
        let setup = |n: usize| {
            let spec = OperatorSpec::dirichlet(PI, 0.0);
            let b = Arc::new(build_basis(&spec, 3, PhysicalGrid::trapezoid(PI, 48).unwrap()).unwrap());
            let grid = GradedTimeGrid::uniform(1.0, n).unwrap();
            let p = ForwardProblem::new(b, idx, Nonlinearity::zero(), ControlOperator::interior(), grid, SeriesControl::default())
                .unwrap();
            let (u, _) = p.solve(&ControlSignal::zeros(p.grid(), p.control_dim()), &u0(3), &PicardOptions::default()).unwrap();
            (p, u)
        };
        let (p, u) = setup(256);
        let zero = vec![SpectralField::zeros(3); p.grid().len()];
        let w = solve_adjoint(&p, &u, &zero).unwrap();
        assert!(w.states.iter().all(|s| s.norm() == 0.0));
        let psi = vec![SpectralField::unit(3, 1); p.grid().len()];
        let w = solve_adjoint(&p, &u, &psi).unwrap();
        let nodes = p.grid().nodes();
        let n = nodes.len() - 1;
        let mass = |t: f64| p.context().kernels().k(4.0, t).unwrap();
        // w_n carries the O(h^γ) end deviation, which decays over a layer of
        // nodes before T and converges pointwise under refinement
        for j in 1..n {
            if nodes[j] <= 0.95 {
                let want = mass(1.0 - nodes[j]);
                assert!((w.states[j].coeffs[1] - want).abs() < 1e-4, "t={}", nodes[j]);
            }
        }
        assert!((w.states[n].coeffs[1] - 0.5 * mass(nodes[n] - nodes[n - 1])).abs() < 1e-14);
        let series: Vec<f64> = w.states.iter().map(|s| s.coeffs[1]).collect();
        let iw = rl_integral(&ScalarTrajectory::new(p.grid().clone(), series).unwrap(), 0.5, Direction::Right).unwrap();
        assert!(iw.values[n].abs() < 1e-12);

        let coarse = (w.states[n - 10].coeffs[1] - mass(10.0 / 256.0)).abs();
        let (pf, uf) = setup(1024);
        let psi = vec![SpectralField::unit(3, 1); pf.grid().len()];
        let wf = solve_adjoint(&pf, &uf, &psi).unwrap();
        let fine = (wf.states[1024 - 40].coeffs[1] - mass(40.0 / 1024.0)).abs();
        assert!(fine < 0.25 * coarse, "{fine} vs {coarse}");
    }

    fn cost(zeta: f64) -> CostSpec {
        CostSpec {
            a1: 1.0,
            a2: 0.0,
            zeta,
            z_q: Target::Constant(0.3),
            z_sigma: Target::Zero,
        }
    }

    #[test]
    fn continuous_adjoint_examples() {
        let p = forward(Nonlinearity::zero(), 0.5, 3, 64);
        let (u, _) = p.solve(&ControlSignal::zeros(p.grid(), p.control_dim()), &u0(3), &PicardOptions::default()).unwrap();
        let zero = vec![SpectralField::zeros(3); p.grid().len()];
        let w = solve_adjoint_continuous(&p, &u, &zero).unwrap();
        assert!(w.states.iter().all(|s| s.norm() == 0.0));
        let psi = vec![SpectralField::unit(3, 2); p.grid().len()];
        let w = solve_adjoint_continuous(&p, &u, &psi).unwrap();
        let nodes = p.grid().nodes();
        for (t, s) in nodes.iter().zip(&w.states) {
            let want = p.context().kernels().k(9.0, 1.0 - t).unwrap();
            assert!((s.coeffs[2] - want).abs() < 1e-12, "t={t}");
            assert_eq!(s.coeffs[0], 0.0);
        }
        assert_eq!(w.states.last().unwrap().norm(), 0.0);
    }

    #[test]
    fn continuous_adjoint_gap_shrinks_under_refinement() {
        let mut gaps = vec![];
        for n in [32, 64, 128] {
            let p = forward(Nonlinearity::AllenCahn { c1: 0.25, c2: 0.5 }, 0.5, 5, n);
            let (u, _) = p.solve(&smooth_control(&p, 0.3), &u0(5), &PicardOptions::default()).unwrap();
            let psi = tracking_gradient(p.basis(), &u, &cost(0.1));
            let h = smooth_control(&p, 1.0);
            let eta = solve_linearized(&p, &u, &h).unwrap();
            let w = solve_adjoint_continuous(&p, &u, &psi).unwrap();
            gaps.push(duality_gap(&p, &psi, &eta, &w, &h).unwrap());
        }
        assert!(gaps[0] < 1e-2);
        assert!(gaps[1] < 0.7 * gaps[0] && gaps[2] < 0.7 * gaps[1], "{gaps:?}");
    }

    #[test]
    fn duality_holds_to_rounding() {
        for nl in [Nonlinearity::zero(), Nonlinearity::AllenCahn { c1: 1.0, c2: 2.0 }] {
            let p = forward(nl, 0.6, 5, 40);
            let z = smooth_control(&p, 0.2);
            let (u, _) = p.solve(&z, &u0(5), &PicardOptions::default()).unwrap();
            let psi = tracking_gradient(p.basis(), &u, &cost(0.1));
            let w = solve_adjoint(&p, &u, &psi).unwrap();
            let h = smooth_control(&p, -0.7);
            let eta = solve_linearized(&p, &u, &h).unwrap();
            assert!(duality_gap(&p, &psi, &eta, &w, &h).unwrap() < 1e-12);
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        for nl in [
            Nonlinearity::FisherKpp { r: 1.0, k: 1.0 },
            Nonlinearity::NonlocalBurgers { kernel: Default::default() },
        ] {
            let p = forward(nl, 0.7, 5, 32);
            let cp = ControlProblem::new(p, u0(5), cost(0.05), None, PicardOptions::default()).unwrap();
            let z = smooth_control(&cp.forward, 0.2);
            let h = smooth_control(&cp.forward, 1.0).axpy(0.5, &ControlSignal::from_fn(cp.forward.grid(), cp.forward.control_dim(), |t, i| (t * 3.0 + i as f64).cos()));
            let ev = cp.evaluate(&z).unwrap();
            let dir = ev.gradient.inner(&h, &cp.weights());
            let eps = 1e-4;
            let jp = cp.objective(&z.axpy(eps, &h)).unwrap().0.total;
            let jm = cp.objective(&z.axpy(-eps, &h)).unwrap().0.total;
            let fd = (jp - jm) / (2.0 * eps);
            assert!((fd - dir).abs() <= 1e-6 * fd.abs(), "fd {fd} vs {dir}");
        }
    }

    #[test]
    fn zero_adjoint_and_zeta_give_zero_gradient() {
        let p = forward(Nonlinearity::zero(), 0.5, 3, 8);
        let z = smooth_control(&p, 1.0);
        let w = Trajectory::on_grid(p.grid(), vec![SpectralField::zeros(3); 9]).unwrap();
        let g = reduced_gradient(&p, &z, &w, &cost(0.0)).unwrap();
        assert!(g.values.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn vi_residual_examples() {
        let grid = GradedTimeGrid::new(1.0, 4, 1.0).unwrap();
        let z = ControlSignal::from_fn(&grid, 2, |t, i| t - i as f64);
        let w = [1.0, 1.0];
        assert_eq!(vi_residual(&z, &ControlSignal::zeros(&grid, 2), None, 1.0, &w), 0.0);
        let set = AdmissibleSet::boxed(-1.0, 1.0, 10.0, 1.0);
        // pushing against an active bound is stationary
        let z = ControlSignal::from_fn(&grid, 2, |_, _| 1.0);
        let g = ControlSignal::from_fn(&grid, 2, |_, _| -3.0);
        assert_eq!(vi_residual(&z, &g, Some(&set), 1.0, &w), 0.0);
    }

    #[test]
    fn stationary_start_needs_no_iterations() {
        let p = forward(Nonlinearity::zero(), 0.5, 3, 8);
        let mut c = cost(1.0);
        c.z_q = Target::Zero;
        let cp = ControlProblem::new(p, SpectralField::zeros(3), c, None, PicardOptions::default()).unwrap();
        let z = ControlSignal::zeros(cp.forward.grid(), cp.forward.control_dim());
        let (zs, report) = optimize(&cp, &z, &OptimOptions::default()).unwrap();
        assert_eq!(zs, z);
        assert_eq!(report.final_.outer_iterations, 0);
        assert!(report.final_.converged);
    }

    #[test]
    fn optimizer_decreases_cost_monotonically() {
        let p = forward(Nonlinearity::FisherKpp { r: 1.0, k: 1.0 }, 0.6, 4, 24);
        let set = AdmissibleSet::boxed(-2.0, 2.0, 100.0, 1.0);
        let cp = ControlProblem::new(p, u0(4), cost(1e-3), Some(set), PicardOptions::default()).unwrap();
        let z = ControlSignal::zeros(cp.forward.grid(), cp.forward.control_dim());
        let opts = OptimOptions {
            max_outer_iters: 30,
            ..Default::default()
        };
        let (_, report) = optimize(&cp, &z, &opts).unwrap();
        let costs: Vec<f64> = report.iterations.iter().map(|r| r.cost).collect();
        assert!(costs.windows(2).all(|w| w[1] <= w[0]));
        assert!(costs[costs.len() - 1] < 0.5 * costs[0]);
        assert!(report.final_.duality_gap < 1e-10);
        let json = serde_json::to_value(&report).unwrap();
        assert!(json["iterations"][0]["vi_residual"].is_number());
        assert!(json["final"]["cost"].is_number());
    }
}
