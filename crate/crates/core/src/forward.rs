//! Mild-solution solver for `∂_t^γ u + A u = f(u) + 𝔹 z`, `u(0) = u₀`.
//!
//! Discretization: product integration of the Duhamel form on the nodes of a
//! graded grid,
//!
//! `u_j = S(t_j) u₀ + Σ_{k=1}^{j} W_{jk} (g_{k-1} + g_k)/2`, `g = f(u) + 𝔹z`,
//!
//! with `W_{jk}` the exact kernel masses of `P_γ` over `[t_{k-1}, t_k]`. The
//! implicit part of the last step is resolved by Picard iteration with the
//! history frozen.

use std::borrow::Cow;
use std::fmt::Write as _;
use std::sync::{Arc, Mutex};

use log::{debug, warn};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::control_cost::{fmt_f64, ControlOperator, ControlSignal};
use crate::error::{Error, Result};
use crate::fracops::{node_derivative, GradedTimeGrid, ScalarTrajectory};
use crate::propagators::{KernelTable, PropagatorContext};
use crate::specfun::SeriesControl;
use crate::spectral::{EigenBasis, SpectralField};

/// Convolution kernel of the nonlocal Burgers term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum BurgersKernel {
    /// `J(x) = a exp(-x²/(2w²))`.
    Gaussian { amplitude: f64, width: f64 },
    /// Samples of `J` and `J'` on equispaced offsets covering `[-L, L]`.
    Sampled { values: Vec<f64>, derivatives: Vec<f64> },
}

impl Default for BurgersKernel {
    fn default() -> Self {
        BurgersKernel::Gaussian {
            amplitude: 1.0,
            width: 0.1,
        }
    }
}

impl BurgersKernel {
    fn derivative(&self, x: f64, length: f64) -> f64 {
        match self {
            BurgersKernel::Gaussian { amplitude, width } => {
                -x / (width * width) * amplitude * (-0.5 * x * x / (width * width)).exp()
            }
            BurgersKernel::Sampled { derivatives, .. } => {
                let n = derivatives.len() - 1;
                let s = ((x + length) / (2.0 * length) * n as f64).clamp(0.0, n as f64);
                let i = (s.floor() as usize).min(n - 1);
                let f = s - i as f64;
                (1.0 - f) * derivatives[i] + f * derivatives[i + 1]
            }
        }
    }
}

/// Reaction term `f` with `f(0) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Nonlinearity {
    /// `f = -W'` for the double well `W(u) = c₁u⁴ - c₂u²`.
    AllenCahn { c1: f64, c2: f64 },
    /// `f = r u (1 - u/K)`.
    FisherKpp {
        r: f64,
        #[serde(rename = "K")]
        k: f64,
    },
    /// `f = -u (J' ∗ u)`.
    NonlocalBurgers {
        #[serde(default)]
        kernel: BurgersKernel,
    },
    /// `f = Σ_k coefficients[k] u^{k+1}`.
    Polynomial { coefficients: Vec<f64> },
}

impl Nonlinearity {
    pub fn zero() -> Self {
        Nonlinearity::Polynomial { coefficients: vec![] }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Nonlinearity::Polynomial { coefficients } if coefficients.iter().all(|c| *c == 0.0))
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Nonlinearity::AllenCahn { c1, c2 } => {
                if !(*c1 > 0.0 && c2 > c1 && c2.is_finite()) {
                    return Err(Error::config("nonlinearity", "allen_cahn needs c2 > c1 > 0"));
                }
            }
            Nonlinearity::FisherKpp { r, k } => {
                if !(*r > 0.0 && *k > 0.0 && r.is_finite() && k.is_finite()) {
                    return Err(Error::config("nonlinearity", "fisher_kpp needs r > 0 and K > 0"));
                }
            }
            Nonlinearity::NonlocalBurgers { kernel } => match kernel {
                BurgersKernel::Gaussian { amplitude, width } => {
                    if !(amplitude.is_finite() && *width > 0.0) {
                        return Err(Error::config("nonlinearity.kernel", "gaussian needs a finite amplitude and width > 0"));
                    }
                }
                BurgersKernel::Sampled { values, derivatives } => {
                    if values.len() < 2 || values.len() != derivatives.len() {
                        return Err(Error::config(
                            "nonlinearity.kernel",
                            "sampled kernel needs at least two values and as many derivative samples",
                        ));
                    }
                    if values.iter().chain(derivatives).any(|v| !v.is_finite()) {
                        return Err(Error::config("nonlinearity.kernel", "samples must be finite"));
                    }
                }
            },
            Nonlinearity::Polynomial { coefficients } => {
                if coefficients.iter().any(|c| !c.is_finite()) {
                    return Err(Error::config("nonlinearity.coefficients", "must be finite"));
                }
            }
        }
        Ok(())
    }

    fn is_pointwise(&self) -> bool {
        !matches!(self, Nonlinearity::NonlocalBurgers { .. })
    }

    /// `f(u)` for the pointwise kinds.
    pub fn f(&self, u: f64) -> f64 {
        match self {
            Nonlinearity::AllenCahn { c1, c2 } => -4.0 * c1 * u * u * u + 2.0 * c2 * u,
            Nonlinearity::FisherKpp { r, k } => r * u * (1.0 - u / k),
            Nonlinearity::Polynomial { coefficients } => {
                coefficients.iter().rev().fold(0.0, |acc, c| acc * u + c) * u
            }
            Nonlinearity::NonlocalBurgers { .. } => f64::NAN,
        }
    }

    pub fn df(&self, u: f64) -> f64 {
        match self {
            Nonlinearity::AllenCahn { c1, c2 } => -12.0 * c1 * u * u + 2.0 * c2,
            Nonlinearity::FisherKpp { r, k } => r * (1.0 - 2.0 * u / k),
            Nonlinearity::Polynomial { coefficients } => coefficients
                .iter()
                .enumerate()
                .rev()
                .fold(0.0, |acc, (i, c)| acc * u + (i + 1) as f64 * c),
            Nonlinearity::NonlocalBurgers { .. } => f64::NAN,
        }
    }

    pub fn d2f(&self, u: f64) -> f64 {
        match self {
            Nonlinearity::AllenCahn { c1, .. } => -24.0 * c1 * u,
            Nonlinearity::FisherKpp { r, k } => -2.0 * r / k,
            Nonlinearity::Polynomial { coefficients } => coefficients
                .iter()
                .enumerate()
                .skip(1)
                .rev()
                .fold(0.0, |acc, (i, c)| acc * u + ((i + 1) * i) as f64 * c),
            Nonlinearity::NonlocalBurgers { .. } => f64::NAN,
        }
    }

    /// `F(u) = ∫_0^u f`; `None` for the nonlocal kind.
    pub fn potential(&self, u: f64) -> Option<f64> {
        match self {
            Nonlinearity::AllenCahn { c1, c2 } => Some(-c1 * u.powi(4) + c2 * u * u),
            Nonlinearity::FisherKpp { r, k } => Some(r * (0.5 * u * u - u * u * u / (3.0 * k))),
            Nonlinearity::Polynomial { coefficients } => Some(
                coefficients
                    .iter()
                    .enumerate()
                    .map(|(i, c)| c * u.powi(i as i32 + 2) / (i + 2) as f64)
                    .sum(),
            ),
            Nonlinearity::NonlocalBurgers { .. } => None,
        }
    }
}

/// A [`Nonlinearity`] bound to a basis: evaluates `f`, `f'` and `f''` on
/// spectral fields through the physical grid. Boundary components of the
/// result are zero.
#[derive(Debug, Clone)]
pub struct NonlinearOp {
    kind: Nonlinearity,
    basis: Arc<EigenBasis>,
    /// `conv[i*m + y] = J'(x_i - x_y) w_y` for the Burgers kind.
    conv: Option<Vec<f64>>,
}

impl NonlinearOp {
    pub fn new(kind: Nonlinearity, basis: Arc<EigenBasis>) -> Result<Self> {
        kind.validate()?;
        let conv = match &kind {
            Nonlinearity::NonlocalBurgers { kernel } => {
                let g = basis.grid();
                let (x, w) = (g.nodes(), g.quad_weights());
                let m = x.len();
                let mut c = vec![0.0; m * m];
                for i in 0..m {
                    for y in 0..m {
                        c[i * m + y] = kernel.derivative(x[i] - x[y], g.length()) * w[y];
                    }
                }
                Some(c)
            }
            _ => None,
        };
        Ok(NonlinearOp { kind, basis, conv })
    }

    pub fn kind(&self) -> &Nonlinearity {
        &self.kind
    }

    pub fn basis(&self) -> &Arc<EigenBasis> {
        &self.basis
    }

    pub fn is_zero(&self) -> bool {
        self.kind.is_zero()
    }

    fn interior(&self, u: &SpectralField) -> Result<Vec<f64>> {
        if u.len() != self.basis.n_modes() {
            return Err(Error::mismatch(self.basis.n_modes(), u.len(), "nonlinearity input"));
        }
        let mut v = self.basis.synthesize_slice(&u.coeffs);
        v.truncate(self.basis.grid().n_interior());
        Ok(v)
    }

    fn convolve(&self, v: &[f64]) -> Vec<f64> {
        let c = self.conv.as_ref().expect("convolution matrix");
        let m = v.len();
        (0..m).map(|i| c[i * m..(i + 1) * m].iter().zip(v).map(|(a, b)| a * b).sum()).collect()
    }

    fn back(&self, mut vals: Vec<f64>, what: &str) -> Result<SpectralField> {
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::Evaluation {
                what: format!("{what}: non-finite value on the grid"),
                terms: 0,
                estimate: f64::NAN,
                err_est: f64::NAN,
            });
        }
        vals.resize(self.basis.grid().n_values(), 0.0);
        Ok(SpectralField::new(self.basis.analyze_slice(&vals)))
    }

    pub fn eval_f(&self, u: &SpectralField) -> Result<SpectralField> {
        if self.is_zero() {
            return Ok(SpectralField::zeros(self.basis.n_modes()));
        }
        let uv = self.interior(u)?;
        let vals = if self.kind.is_pointwise() {
            uv.iter().map(|x| self.kind.f(*x)).collect()
        } else {
            let du = self.convolve(&uv);
            uv.iter().zip(&du).map(|(a, b)| -a * b).collect()
        };
        self.back(vals, "f(u)")
    }

    /// `f'(u) v`.
    pub fn eval_fprime_apply(&self, u: &SpectralField, v: &SpectralField) -> Result<SpectralField> {
        if self.is_zero() {
            return Ok(SpectralField::zeros(self.basis.n_modes()));
        }
        let uv = self.interior(u)?;
        let vv = self.interior(v)?;
        let vals = if self.kind.is_pointwise() {
            uv.iter().zip(&vv).map(|(a, b)| self.kind.df(*a) * b).collect()
        } else {
            let (cu, cv) = (self.convolve(&uv), self.convolve(&vv));
            (0..uv.len()).map(|i| -vv[i] * cu[i] - uv[i] * cv[i]).collect()
        };
        self.back(vals, "f'(u)v")
    }

    /// `f''(u)[v, w]`.
    pub fn eval_fsecond_apply(&self, u: &SpectralField, v: &SpectralField, w: &SpectralField) -> Result<SpectralField> {
        if self.is_zero() {
            return Ok(SpectralField::zeros(self.basis.n_modes()));
        }
        let uv = self.interior(u)?;
        let vv = self.interior(v)?;
        let wv = self.interior(w)?;
        let vals = if self.kind.is_pointwise() {
            (0..uv.len()).map(|i| self.kind.d2f(uv[i]) * (vv[i] * wv[i])).collect()
        } else {
            let (cv, cw) = (self.convolve(&vv), self.convolve(&wv));
            (0..uv.len()).map(|i| -vv[i] * cw[i] - wv[i] * cv[i]).collect()
        };
        self.back(vals, "f''(u)[v,w]")
    }

    /// Modal matrix of `v ↦ f'(u) v`.
    pub fn jacobian(&self, u: &SpectralField) -> Result<DMatrix<f64>> {
        let n = self.basis.n_modes();
        if self.is_zero() {
            return Ok(DMatrix::zeros(n, n));
        }
        let uv = self.interior(u)?;
        let m = uv.len();
        let w = self.basis.grid().quad_weights();
        if self.kind.is_pointwise() {
            let d: Vec<f64> = uv.iter().zip(w).map(|(x, w)| self.kind.df(*x) * w).collect();
            if d.iter().any(|v| !v.is_finite()) {
                return Err(Error::Evaluation {
                    what: "f'(u): non-finite value on the grid".into(),
                    terms: 0,
                    estimate: f64::NAN,
                    err_est: f64::NAN,
                });
            }
            let mut jac = DMatrix::zeros(n, n);
            for a in 0..n {
                let pa = &self.basis.mode_values(a)[..m];
                for b in a..n {
                    let pb = &self.basis.mode_values(b)[..m];
                    let s: f64 = (0..m).map(|i| pa[i] * d[i] * pb[i]).sum();
                    jac[(a, b)] = s;
                    jac[(b, a)] = s;
                }
            }
            Ok(jac)
        } else {
            let mut jac = DMatrix::zeros(n, n);
            for b in 0..n {
                let col = self.eval_fprime_apply(u, &SpectralField::unit(n, b))?;
                for a in 0..n {
                    jac[(a, b)] = col.coeffs[a];
                }
            }
            Ok(jac)
        }
    }

    /// `(F(u), 1)` over the bulk.
    pub fn potential_integral(&self, u: &SpectralField) -> Result<f64> {
        let uv = self.interior(u)?;
        let mut s = 0.0;
        for (x, w) in uv.iter().zip(self.basis.grid().quad_weights()) {
            s += w * self
                .kind
                .potential(*x)
                .ok_or_else(|| Error::Domain("nonlocal_burgers has no potential".into()))?;
        }
        Ok(s)
    }
}

/// Smoothness and integrability indices of a problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemIndices {
    pub gamma: f64,
    pub alpha: f64,
    #[serde(default)]
    pub alpha_tilde: f64,
    #[serde(default)]
    pub beta: f64,
    /// `None` stands for `q = ∞`.
    #[serde(default)]
    pub q: Option<f64>,
    pub rho: f64,
}

impl ProblemIndices {
    pub fn validate(&self) -> Result<()> {
        let p = |f: &str| format!("indices.{f}");
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::config(p("gamma"), "must lie in (0, 1]"));
        }
        if !(self.alpha_tilde >= -1.0) {
            return Err(Error::config(p("alpha_tilde"), "must be >= -1"));
        }
        if !(self.alpha >= self.beta && self.alpha < self.beta + 2.0) {
            return Err(Error::config(p("alpha"), "must lie in [beta, beta + 2)"));
        }
        if !(self.alpha >= self.alpha_tilde && self.alpha < self.alpha_tilde + 2.0) {
            return Err(Error::config(p("alpha"), "must lie in [alpha_tilde, alpha_tilde + 2)"));
        }
        if let Some(q) = self.q {
            let qmin = 2.0 / (self.gamma * (2.0 - self.alpha + self.alpha_tilde));
            if !(q > qmin) {
                return Err(Error::config(p("q"), format!("must exceed 2/(gamma(2 - alpha + alpha_tilde)) = {qmin}")));
            }
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(Error::config(p("rho"), "must lie in (0, 1]"));
        }
        let theta = self.theta();
        if !(theta > 0.0) {
            return Err(Error::config("indices", format!("theta = {theta} is not positive")));
        }
        Ok(())
    }

    /// The temporal regularity exponent; see [`theta_exponent`].
    pub fn theta(&self) -> f64 {
        let h = 0.5 * self.gamma;
        let inv_q = self.q.map_or(0.0, |q| 1.0 / q);
        let a = h * (2.0 - self.alpha + self.alpha_tilde) - inv_q;
        let b = h * (2.0 - self.alpha + self.beta);
        let c = h * (2.0 - self.alpha + self.alpha_tilde) + self.rho;
        a.min(b).min(c)
    }

    /// `ξ` halfway into `(0, θ/(1-θ))`; `1` when `θ ≥ 1`.
    pub fn xi(&self) -> f64 {
        let t = self.theta();
        if t < 1.0 {
            0.5 * t / (1.0 - t)
        } else {
            1.0
        }
    }

    pub fn sigma(&self) -> f64 {
        let s = 1.0 + self.xi();
        self.q.map_or(s, |q| s.min(q))
    }
}

/// `θ = min{γ/2(2-α+α̃) - 1/q, γ/2(2-α+β), γ/2(2-α+α̃) + ρ}`.
pub fn theta_exponent(idx: &ProblemIndices) -> Result<f64> {
    let t = idx.theta();
    if !(t > 0.0) {
        return Err(Error::config("indices", format!("theta = {t} is not positive")));
    }
    Ok(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PicardOptions {
    /// Stop when successive iterates differ by at most `tol · max(1, |u|_α)`.
    pub tol: f64,
    pub max_iter: usize,
    /// Largest number of local step halvings.
    pub max_halvings: usize,
    pub blowup_threshold: f64,
}

impl Default for PicardOptions {
    fn default() -> Self {
        PicardOptions {
            tol: 1e-12,
            max_iter: 200,
            max_halvings: 40,
            blowup_threshold: 1e8,
        }
    }
}

impl PicardOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::config("picard.tol", "must be > 0"));
        }
        if self.max_iter == 0 {
            return Err(Error::config("picard.max_iter", "must be at least 1"));
        }
        if !(self.blowup_threshold > 0.0) {
            return Err(Error::config("picard.blowup_threshold", "must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Completed,
    /// Index into the actual nodes, and its time.
    BlowupAt { node: usize, time: f64 },
}

/// States on the actual nodes of a solve: the nominal grid nodes plus any
/// nodes inserted by step halving.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub grid: GradedTimeGrid,
    pub times: Vec<f64>,
    /// Position in `times` of each nominal node reached.
    pub nominal: Vec<usize>,
    pub states: Vec<SpectralField>,
    pub status: Status,
}

impl Trajectory {
    /// A trajectory living exactly on the grid nodes.
    pub fn on_grid(grid: &GradedTimeGrid, states: Vec<SpectralField>) -> Result<Self> {
        if states.len() != grid.len() {
            return Err(Error::mismatch(grid.len(), states.len(), "trajectory states"));
        }
        Ok(Trajectory {
            grid: grid.clone(),
            times: grid.nodes().to_vec(),
            nominal: (0..grid.len()).collect(),
            states,
            status: Status::Completed,
        })
    }

    pub fn is_complete(&self) -> bool {
        self.status == Status::Completed
    }

    pub fn nominal_state(&self, j: usize) -> &SpectralField {
        &self.states[self.nominal[j]]
    }

    pub fn nominal_states(&self) -> Vec<SpectralField> {
        self.nominal.iter().map(|i| self.states[*i].clone()).collect()
    }

    pub fn inserted_nodes(&self) -> usize {
        self.times.len() - self.nominal.len()
    }

    pub fn max_norm(&self, basis: &EigenBasis, alpha: f64) -> f64 {
        self.states
            .iter()
            .map(|s| basis.valpha_norm_unchecked(&s.coeffs, alpha))
            .fold(0.0, f64::max)
    }

    /// Columns `t, mode_1..mode_N` over all actual nodes.
    pub fn to_mode_csv(&self) -> String {
        let n = self.states.first().map_or(0, |s| s.len());
        let mut out = String::from("t");
        for i in 0..n {
            let _ = write!(out, ",mode_{}", i + 1);
        }
        out.push('\n');
        for (t, s) in self.times.iter().zip(&self.states) {
            out.push_str(&fmt_f64(*t));
            for c in &s.coeffs {
                out.push(',');
                out.push_str(&fmt_f64(*c));
            }
            out.push('\n');
        }
        out
    }

    /// Columns `t` and one per physical grid value; the header carries the
    /// positions (boundary traces last for Wentzell bases).
    pub fn to_physical_csv(&self, basis: &EigenBasis) -> String {
        let g = basis.grid();
        let mut xs = g.nodes().to_vec();
        if g.boundary_weights().is_some() {
            xs.push(0.0);
            xs.push(g.length());
        }
        let mut out = String::from("t");
        for x in &xs {
            out.push(',');
            out.push_str(&fmt_f64(*x));
        }
        out.push('\n');
        for (t, s) in self.times.iter().zip(&self.states) {
            out.push_str(&fmt_f64(*t));
            for v in basis.synthesize_slice(&s.coeffs) {
                out.push(',');
                out.push_str(&fmt_f64(v));
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    /// Picard sweeps per nominal step, summed over its substeps.
    pub picard_iterations: Vec<usize>,
    pub inserted_nodes: usize,
    pub max_valpha_norm: f64,
    pub ynorm_seminorm: f64,
    pub blowup: bool,
    pub blowup_time: Option<f64>,
}

/// Everything a solve needs besides the control and the initial state.
#[derive(Debug)]
pub struct ForwardProblem {
    ctx: PropagatorContext,
    idx: ProblemIndices,
    nl: NonlinearOp,
    control: ControlOperator,
    grid: GradedTimeGrid,
    table: Arc<KernelTable>,
    s_nodes: Vec<Vec<f64>>,
    refined: Mutex<Option<Arc<KernelTable>>>,
}

impl ForwardProblem {
    pub fn new(
        basis: Arc<EigenBasis>,
        idx: ProblemIndices,
        nl: Nonlinearity,
        control: ControlOperator,
        grid: GradedTimeGrid,
        ctl: SeriesControl,
    ) -> Result<Self> {
        idx.validate()?;
        control.validate(&basis)?;
        let ctx = PropagatorContext::new(basis.clone(), idx.gamma, ctl)?;
        let table = Arc::new(ctx.kernel_table(grid.nodes())?);
        let s_nodes = grid
            .nodes()
            .iter()
            .map(|t| basis.eigenvalues().iter().map(|l| ctx.kernels().s(*l, *t)).collect())
            .collect::<Result<Vec<Vec<f64>>>>()?;
        let nl = NonlinearOp::new(nl, basis)?;
        Ok(ForwardProblem {
            ctx,
            idx,
            nl,
            control,
            grid,
            table,
            s_nodes,
            refined: Mutex::new(None),
        })
    }

    pub fn basis(&self) -> &Arc<EigenBasis> {
        self.ctx.basis()
    }

    pub fn context(&self) -> &PropagatorContext {
        &self.ctx
    }

    pub fn indices(&self) -> &ProblemIndices {
        &self.idx
    }

    pub fn nonlinearity(&self) -> &NonlinearOp {
        &self.nl
    }

    pub fn control(&self) -> &ControlOperator {
        &self.control
    }

    pub fn grid(&self) -> &GradedTimeGrid {
        &self.grid
    }

    pub fn control_dim(&self) -> usize {
        self.control.dim(self.basis())
    }

    pub fn control_weights(&self) -> Vec<f64> {
        self.control.weights(self.basis())
    }

    /// Kernel table on `times`: the nominal one, or a (cached) table for a
    /// refined node set.
    pub fn table_for(&self, times: &[f64]) -> Result<Arc<KernelTable>> {
        if times == self.grid.nodes() {
            return Ok(self.table.clone());
        }
        let mut cache = self.refined.lock().expect("kernel table cache");
        if let Some(t) = cache.as_ref() {
            if t.nodes() == times {
                return Ok(t.clone());
            }
        }
        let t = Arc::new(self.ctx.kernel_table(times)?);
        *cache = Some(t.clone());
        Ok(t)
    }

    fn check_inputs(&self, z: &ControlSignal, u0: &SpectralField) -> Result<()> {
        let n = self.basis().n_modes();
        if u0.len() != n {
            return Err(Error::mismatch(n, u0.len(), "initial state"));
        }
        if !u0.is_finite() {
            return Err(Error::Domain("initial state is not finite".into()));
        }
        if z.grid != self.grid {
            return Err(Error::Domain("control signal grid differs from the problem grid".into()));
        }
        if z.dim() != self.control_dim() {
            return Err(Error::mismatch(self.control_dim(), z.dim(), "control signal dimension"));
        }
        Ok(())
    }

    fn control_field(&self, z: &[f64]) -> Result<SpectralField> {
        self.control.apply_b(self.basis(), z)
    }

    pub fn solve(&self, z: &ControlSignal, u0: &SpectralField, opts: &PicardOptions) -> Result<(Trajectory, SolveReport)> {
        solve_forward(self, z, u0, opts)
    }
}

/// History and current-step weight for a tentative node.
struct StepData {
    base: Vec<f64>,
    w_cur: Vec<f64>,
}

/// Marches the mild-solution identity over the grid of `problem`.
pub fn solve_forward(
    problem: &ForwardProblem,
    z: &ControlSignal,
    u0: &SpectralField,
    opts: &PicardOptions,
) -> Result<(Trajectory, SolveReport)> {
    opts.validate()?;
    problem.check_inputs(z, u0)?;
    let basis = problem.basis().clone();
    let n_modes = basis.n_modes();
    let alpha = problem.idx.alpha;
    let nodes = problem.grid.nodes();
    let lambdas = basis.eigenvalues();
    let kernels = problem.ctx.kernels();

    let mut times = vec![0.0];
    let mut nominal = vec![0usize];
    let mut states = vec![u0.clone()];
    let mut forcing = {
        let mut g = problem.nl.eval_f(u0)?;
        g.axpy(1.0, &problem.control_field(&z.values[0])?);
        vec![g]
    };
    let mut means: Vec<Vec<f64>> = Vec::new();
    let mut iterations = Vec::with_capacity(nodes.len());
    let mut status = Status::Completed;

    // Builds the frozen part of the step equation at `tau`.
    let step_data = |tau: f64, nominal_j: Option<usize>, times: &[f64], means: &[Vec<f64>], g_last: &SpectralField| -> Result<StepData> {
        let m = times.len() - 1;
        let clean = nominal_j == Some(times.len());
        let row: Cow<[f64]> = match nominal_j {
            Some(j) if clean => Cow::Borrowed(problem.table.row(j)),
            _ => {
                let mut r = Vec::with_capacity((m + 1) * n_modes);
                for tk in times {
                    for l in lambdas {
                        r.push(kernels.k(*l, tau - tk)?);
                    }
                }
                Cow::Owned(r)
            }
        };
        let s: Cow<[f64]> = match nominal_j {
            Some(j) => Cow::Borrowed(&problem.s_nodes[j]),
            None => Cow::Owned(lambdas.iter().map(|l| kernels.s(*l, tau)).collect::<Result<Vec<f64>>>()?),
        };
        let mut base: Vec<f64> = s.iter().zip(&u0.coeffs).map(|(s, c)| s * c).collect();
        for (k, g) in means.iter().enumerate() {
            let a = &row[k * n_modes..(k + 1) * n_modes];
            let b = &row[(k + 1) * n_modes..(k + 2) * n_modes];
            for n in 0..n_modes {
                base[n] += (a[n] - b[n]) * g[n];
            }
        }
        let w_cur = row[m * n_modes..(m + 1) * n_modes].to_vec();
        for n in 0..n_modes {
            base[n] += 0.5 * w_cur[n] * g_last.coeffs[n];
        }
        Ok(StepData { base, w_cur })
    };

    'nominal: for j in 1..nodes.len() {
        let target = nodes[j];
        let mut iters_here = 0;
        // full step first; after a halving, regrow by at most a factor two
        let mut trial = target - times[times.len() - 1];
        loop {
            let t_prev = times[times.len() - 1];
            let reaches = trial >= target - t_prev;
            let tau = if reaches { target } else { t_prev + trial };
            let nominal_j = if reaches { Some(j) } else { None };
            let zc = if reaches { Cow::Borrowed(&z.values[j]) } else { Cow::Owned(z.value_at(tau)) };
            let bz = problem.control_field(&zc)?;
            let g_last = &forcing[forcing.len() - 1];
            let data = step_data(tau, nominal_j, &times, &means, g_last)?;
            let mut base = data.base;
            for n in 0..n_modes {
                base[n] += 0.5 * data.w_cur[n] * bz.coeffs[n];
            }
            match picard_step(problem, &base, &data.w_cur, &states[states.len() - 1], opts, alpha) {
                Ok((u, f_u, its)) => {
                    iters_here += its;
                    let mut g = f_u;
                    g.axpy(1.0, &bz);
                    means.push(g_last.coeffs.iter().zip(&g.coeffs).map(|(a, b)| 0.5 * (a + b)).collect());
                    forcing.push(g);
                    let last_step = tau - t_prev;
                    times.push(tau);
                    let norm = basis.valpha_norm_unchecked(&u.coeffs, alpha);
                    states.push(u);
                    if reaches {
                        nominal.push(times.len() - 1);
                    }
                    if !(norm <= opts.blowup_threshold) {
                        status = Status::BlowupAt {
                            node: times.len() - 1,
                            time: tau,
                        };
                        iterations.push(iters_here);
                        debug!("blow-up at t = {tau}: |u|_alpha = {norm:e}");
                        break 'nominal;
                    }
                    if reaches {
                        break;
                    }
                    trial = (target - tau).min(2.0 * last_step);
                }
                Err(its) => {
                    iters_here += its;
                    let nominal_step = nodes[j] - nodes[j - 1];
                    trial = 0.5 * (tau - t_prev);
                    if trial < nominal_step * 0.5f64.powi(opts.max_halvings as i32) || tau - trial <= t_prev {
                        let norm = basis.valpha_norm_unchecked(&states[states.len() - 1].coeffs, alpha);
                        return Err(Error::Solver(format!(
                            "Picard iteration not contractive at t = {t_prev} after {} halvings (|u|_alpha = {norm:e})",
                            opts.max_halvings
                        )));
                    }
                }
            }
        }
        iterations.push(iters_here.max(1));
    }

    let traj = Trajectory {
        grid: problem.grid.clone(),
        times,
        nominal,
        states,
        status,
    };
    if traj.inserted_nodes() > 0 {
        warn!("step halving inserted {} nodes", traj.inserted_nodes());
    }
    let report = SolveReport {
        picard_iterations: iterations,
        inserted_nodes: traj.inserted_nodes(),
        max_valpha_norm: traj.max_norm(&basis, alpha),
        ynorm_seminorm: if traj.is_complete() {
            ynorm_seminorm(&traj, &problem.idx, &basis)
        } else {
            f64::NAN
        },
        blowup: !traj.is_complete(),
        blowup_time: match traj.status {
            Status::BlowupAt { time, .. } => Some(time),
            Status::Completed => None,
        },
    };
    Ok((traj, report))
}

/// Solves `u = base + (w/2)·f(u)`; returns the iterate, `f` at it and the
/// sweep count, or the sweep count on failure.
fn picard_step(
    problem: &ForwardProblem,
    base: &[f64],
    w_cur: &[f64],
    guess: &SpectralField,
    opts: &PicardOptions,
    alpha: f64,
) -> std::result::Result<(SpectralField, SpectralField, usize), usize> {
    let basis = problem.basis();
    let nl = &problem.nl;
    let apply = |f: &SpectralField| -> SpectralField {
        SpectralField::new(
            base.iter()
                .zip(w_cur)
                .zip(&f.coeffs)
                .map(|((b, w), f)| b + 0.5 * w * f)
                .collect(),
        )
    };
    if nl.is_zero() {
        let f = SpectralField::zeros(base.len());
        return Ok((apply(&f), f, 1));
    }
    let mut u = guess.clone();
    let mut prev_diff = f64::INFINITY;
    for it in 1..=opts.max_iter {
        let f = nl.eval_f(&u).map_err(|_| it)?;
        let next = apply(&f);
        if !next.is_finite() {
            return Err(it);
        }
        let diff = basis.valpha_norm_unchecked(&next.sub(&u).coeffs, alpha);
        let scale = basis.valpha_norm_unchecked(&next.coeffs, alpha).max(1.0);
        if diff <= opts.tol * scale {
            let f = nl.eval_f(&next).map_err(|_| it)?;
            return Ok((next, f, it));
        }
        if it >= 3 && diff > 0.5 * prev_diff {
            return Err(it);
        }
        prev_diff = diff;
        u = next;
    }
    Err(opts.max_iter)
}

/// `|u_j - S(t_j)u₀ - Σ W_{jk} ḡ_k|_α` at every actual node, with `g`
/// recomputed from the returned states.
pub fn mild_residual(problem: &ForwardProblem, traj: &Trajectory, z: &ControlSignal, u0: &SpectralField) -> Result<Vec<f64>> {
    let basis = problem.basis();
    let table = problem.table_for(&traj.times)?;
    let lambdas = basis.eigenvalues();
    let mut forcing = Vec::with_capacity(traj.times.len());
    for (t, u) in traj.times.iter().zip(&traj.states) {
        let mut g = problem.nl.eval_f(u)?;
        g.axpy(1.0, &problem.control_field(&z.value_at(*t))?);
        forcing.push(g);
    }
    let conv = table.convolve(&forcing);
    let mut out = Vec::with_capacity(traj.times.len());
    for (i, t) in traj.times.iter().enumerate() {
        let mut r = traj.states[i].sub(&conv[i]);
        for (n, l) in lambdas.iter().enumerate() {
            r.coeffs[n] -= problem.ctx.kernels().s(*l, *t)? * u0.coeffs[n];
        }
        out.push(basis.valpha_norm_unchecked(&r.coeffs, problem.idx.alpha));
    }
    Ok(out)
}

/// `max_j t_j^{1-θ} |∂_t u(t_j)|_α` over interior nominal nodes, the time
/// derivative by three-point differences.
pub fn ynorm_seminorm(traj: &Trajectory, idx: &ProblemIndices, basis: &EigenBasis) -> f64 {
    let states = traj.nominal_states();
    let t = &traj.grid.nodes()[..states.len()];
    if states.len() < 3 {
        return 0.0;
    }
    let n = states[0].len();
    let mut deriv = vec![vec![0.0; n]; t.len()];
    for m in 0..n {
        let series: Vec<f64> = states.iter().map(|s| s.coeffs[m]).collect();
        for (j, d) in node_derivative(t, &series).into_iter().enumerate() {
            deriv[j][m] = d;
        }
    }
    let theta = idx.theta();
    (1..t.len() - 1)
        .map(|j| t[j].powf(1.0 - theta) * basis.valpha_norm_unchecked(&deriv[j], idx.alpha))
        .fold(0.0, f64::max)
}

/// `E(t) = C_T + |u|₁² - 2(F(u), 1) - 2(𝔹z, u)` at the nominal nodes.
pub fn energy_functional(
    problem: &ForwardProblem,
    traj: &Trajectory,
    z: &ControlSignal,
    c_t: f64,
) -> Result<ScalarTrajectory> {
    let basis = problem.basis();
    let states = traj.nominal_states();
    if states.len() != traj.grid.len() {
        return Err(Error::Solver("energy requested for an incomplete trajectory".into()));
    }
    let mut values = Vec::with_capacity(states.len());
    for (j, u) in states.iter().enumerate() {
        let h1 = basis.valpha_norm_unchecked(&u.coeffs, 1.0);
        let pot = problem.nl.potential_integral(u)?;
        let bz = problem.control_field(&z.values[j])?;
        values.push(c_t + h1 * h1 - 2.0 * pot - 2.0 * bz.dot(u));
    }
    ScalarTrajectory::new(traj.grid.clone(), values)
}
