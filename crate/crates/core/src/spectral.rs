//! Eigenbases of the spatial operator, fractional-power norms and the
//! transforms between spectral coefficients and grid values.
//!
//! Every mode is stored as `a cos(kx) + b sin(kx)` on `[0, L]`, which covers
//! the Dirichlet, Neumann and Wentzell–Robin realizations alike.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorKind {
    #[serde(rename = "dirichlet_laplacian_1d")]
    DirichletLaplacian1d,
    #[serde(rename = "neumann_laplacian_1d")]
    NeumannLaplacian1d,
    FractionalNeumann {
        s: f64,
    },
    /// Dynamic boundary conditions `∂_ν u + β u = λ u` at both endpoints.
    /// `delta` weights the surface Laplacian, which vanishes on the two-point
    /// boundary of an interval; it is carried for completeness only.
    #[serde(rename = "wentzell_robin_1d")]
    WentzellRobin1d {
        robin_coefficients: [f64; 2],
        #[serde(default)]
        delta: u8,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorSpec {
    pub kind: OperatorKind,
    pub domain_length: f64,
    #[serde(default)]
    pub shift: f64,
}

impl OperatorSpec {
    pub fn dirichlet(length: f64, shift: f64) -> Self {
        OperatorSpec {
            kind: OperatorKind::DirichletLaplacian1d,
            domain_length: length,
            shift,
        }
    }

    pub fn neumann(length: f64, shift: f64) -> Self {
        OperatorSpec {
            kind: OperatorKind::NeumannLaplacian1d,
            domain_length: length,
            shift,
        }
    }

    pub fn fractional_neumann(s: f64, length: f64, shift: f64) -> Self {
        OperatorSpec {
            kind: OperatorKind::FractionalNeumann { s },
            domain_length: length,
            shift,
        }
    }

    pub fn wentzell(robin: [f64; 2], length: f64, shift: f64) -> Self {
        OperatorSpec {
            kind: OperatorKind::WentzellRobin1d {
                robin_coefficients: robin,
                delta: 0,
            },
            domain_length: length,
            shift,
        }
    }

    /// Whether the state space carries boundary components (the measure
    /// has point masses at the endpoints).
    pub fn has_boundary(&self) -> bool {
        matches!(self.kind, OperatorKind::WentzellRobin1d { .. })
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            OperatorKind::DirichletLaplacian1d => "dirichlet_laplacian_1d",
            OperatorKind::NeumannLaplacian1d => "neumann_laplacian_1d",
            OperatorKind::FractionalNeumann { .. } => "fractional_neumann",
            OperatorKind::WentzellRobin1d { .. } => "wentzell_robin_1d",
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.domain_length > 0.0 && self.domain_length.is_finite()) {
            return Err(Error::config("operator.domain_length", "must be positive and finite"));
        }
        if !(self.shift >= 0.0 && self.shift.is_finite()) {
            return Err(Error::config("operator.shift", "must be nonnegative and finite"));
        }
        match &self.kind {
            OperatorKind::DirichletLaplacian1d => {}
            OperatorKind::NeumannLaplacian1d => {
                if self.shift <= 0.0 {
                    return Err(Error::config(
                        "operator.shift",
                        "the Neumann Laplacian has a zero eigenvalue; shift must be > 0",
                    ));
                }
            }
            OperatorKind::FractionalNeumann { s } => {
                if !(*s > 0.0 && *s <= 1.0) {
                    return Err(Error::config("operator.kind.s", "must lie in (0, 1]"));
                }
                if self.shift <= 0.0 {
                    return Err(Error::config(
                        "operator.shift",
                        "the fractional Neumann operator needs shift > 0",
                    ));
                }
            }
            OperatorKind::WentzellRobin1d {
                robin_coefficients,
                delta,
            } => {
                if robin_coefficients.iter().any(|b| !(*b > 0.0 && b.is_finite())) {
                    return Err(Error::config(
                        "operator.kind.robin_coefficients",
                        "both Robin coefficients must be positive",
                    ));
                }
                if *delta > 1 {
                    return Err(Error::config("operator.kind.delta", "must be 0 or 1"));
                }
            }
        }
        Ok(())
    }
}

/// Quadrature grid on `[0, L]`. Values on the grid are stored as the
/// interior samples followed, when `boundary_weights` is present, by the
/// traces at `x = 0` and `x = L`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalGrid {
    length: f64,
    nodes: Vec<f64>,
    quad_weights: Vec<f64>,
    boundary_weights: Option<[f64; 2]>,
}

impl PhysicalGrid {
    /// `intervals + 1` equispaced nodes with trapezoid weights.
    pub fn trapezoid(length: f64, intervals: usize) -> Result<Self> {
        if intervals < 2 || !(length > 0.0) {
            return Err(Error::Construction(format!(
                "trapezoid grid needs length > 0 and at least 2 intervals (got {length}, {intervals})"
            )));
        }
        let h = length / intervals as f64;
        let nodes = (0..=intervals).map(|i| i as f64 * h).collect();
        let mut quad_weights = vec![h; intervals + 1];
        quad_weights[0] = 0.5 * h;
        quad_weights[intervals] = 0.5 * h;
        Ok(PhysicalGrid {
            length,
            nodes,
            quad_weights,
            boundary_weights: None,
        })
    }

    /// Composite Gauss–Legendre rule with `panels` panels of `order` nodes.
    /// With `boundary = true` the two endpoints carry unit point masses.
    pub fn gauss(length: f64, panels: usize, order: usize, boundary: bool) -> Result<Self> {
        if panels == 0 || order == 0 || !(length > 0.0) {
            return Err(Error::Construction("Gauss grid needs panels, order and length > 0".into()));
        }
        let (x, w) = gauss_legendre(order);
        let h = length / panels as f64;
        let mut nodes = Vec::with_capacity(panels * order);
        let mut quad_weights = Vec::with_capacity(panels * order);
        for p in 0..panels {
            let a = p as f64 * h;
            for (xi, wi) in x.iter().zip(&w) {
                nodes.push(a + 0.5 * h * (xi + 1.0));
                quad_weights.push(0.5 * h * wi);
            }
        }
        Ok(PhysicalGrid {
            length,
            nodes,
            quad_weights,
            boundary_weights: boundary.then_some([1.0, 1.0]),
        })
    }

    /// Default grid for an operator: trapezoid with `n_space` intervals, or
    /// for Wentzell a 16-point composite Gauss rule with at least `n_space`
    /// interior nodes.
    pub fn for_operator(spec: &OperatorSpec, n_space: usize) -> Result<Self> {
        if spec.has_boundary() {
            let panels = n_space.div_ceil(16).max(1);
            Self::gauss(spec.domain_length, panels, 16, true)
        } else {
            Self::trapezoid(spec.domain_length, n_space)
        }
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn quad_weights(&self) -> &[f64] {
        &self.quad_weights
    }

    pub fn boundary_weights(&self) -> Option<[f64; 2]> {
        self.boundary_weights
    }

    pub fn n_interior(&self) -> usize {
        self.nodes.len()
    }

    /// Length of a value vector (interior plus boundary components).
    pub fn n_values(&self) -> usize {
        self.nodes.len() + if self.boundary_weights.is_some() { 2 } else { 0 }
    }

    /// Weight of each value component under `μ`.
    pub fn measure_weights(&self) -> Vec<f64> {
        let mut w = self.quad_weights.clone();
        if let Some(b) = self.boundary_weights {
            w.extend_from_slice(&b);
        }
        w
    }

    /// `(a, b)_μ`.
    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut s = 0.0;
        for (i, w) in self.quad_weights.iter().enumerate() {
            s += w * a[i] * b[i];
        }
        if let Some(bw) = self.boundary_weights {
            let m = self.nodes.len();
            s += bw[0] * a[m] * b[m] + bw[1] * a[m + 1] * b[m + 1];
        }
        s
    }
}

/// Coefficients of a state in an [`EigenBasis`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SpectralField {
    pub coeffs: Vec<f64>,
}

impl SpectralField {
    pub fn new(coeffs: Vec<f64>) -> Self {
        SpectralField { coeffs }
    }

    pub fn zeros(n: usize) -> Self {
        SpectralField { coeffs: vec![0.0; n] }
    }

    pub fn unit(n: usize, k: usize) -> Self {
        let mut f = Self::zeros(n);
        f.coeffs[k] = 1.0;
        f
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }

    pub fn dot(&self, other: &SpectralField) -> f64 {
        self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a * b).sum()
    }

    /// `|u|_0`.
    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scaled(&self, s: f64) -> SpectralField {
        SpectralField::new(self.coeffs.iter().map(|c| s * c).collect())
    }

    /// `self += a * x`
    pub fn axpy(&mut self, a: f64, x: &SpectralField) {
        for (c, xi) in self.coeffs.iter_mut().zip(&x.coeffs) {
            *c += a * xi;
        }
    }

    pub fn sub(&self, other: &SpectralField) -> SpectralField {
        SpectralField::new(self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect())
    }
}

/// Truncated eigensystem `(λ_n, φ_n)` of the spatial operator, sampled on a
/// [`PhysicalGrid`].
#[derive(Debug, Clone)]
pub struct EigenBasis {
    spec: OperatorSpec,
    grid: PhysicalGrid,
    eigenvalues: Vec<f64>,
    wavenumbers: Vec<f64>,
    amplitudes: Vec<(f64, f64)>,
    /// `phi[n * m + i] = φ_n(x_i)` over all value components.
    phi: Vec<f64>,
    /// Same layout, premultiplied by the measure weights.
    wphi: Vec<f64>,
}

/// Builds the first `n_modes` eigenpairs of `spec` sampled on `grid`.
pub fn build_basis(spec: &OperatorSpec, n_modes: usize, grid: PhysicalGrid) -> Result<EigenBasis> {
    spec.validate()?;
    if n_modes == 0 {
        return Err(Error::Construction("n_modes must be at least 1".into()));
    }
    if (grid.length - spec.domain_length).abs() > 1e-12 * spec.domain_length {
        return Err(Error::Construction(format!(
            "grid length {} differs from the domain length {}",
            grid.length, spec.domain_length
        )));
    }
    if spec.has_boundary() != grid.boundary_weights.is_some() {
        return Err(Error::Construction(
            "boundary point weights must be present exactly for Wentzell operators".into(),
        ));
    }
    let l = spec.domain_length;
    let (wavenumbers, amplitudes, raw): (Vec<f64>, Vec<(f64, f64)>, Vec<f64>) = match &spec.kind {
        OperatorKind::DirichletLaplacian1d => {
            let amp = (2.0 / l).sqrt();
            (1..=n_modes)
                .map(|n| {
                    let k = n as f64 * PI / l;
                    (k, (0.0, amp), k * k)
                })
                .fold((vec![], vec![], vec![]), push3)
        }
        OperatorKind::NeumannLaplacian1d | OperatorKind::FractionalNeumann { .. } => (0..n_modes)
            .map(|n| {
                let k = n as f64 * PI / l;
                let amp = if n == 0 { (1.0 / l).sqrt() } else { (2.0 / l).sqrt() };
                (k, (amp, 0.0), k * k)
            })
            .fold((vec![], vec![], vec![]), push3),
        OperatorKind::WentzellRobin1d {
            robin_coefficients, ..
        } => wentzell_modes(*robin_coefficients, l, n_modes)?.into_iter().fold(
            (vec![], vec![], vec![]),
            push3,
        ),
    };
    let eigenvalues: Vec<f64> = match &spec.kind {
        OperatorKind::FractionalNeumann { s } => raw.iter().map(|r| (spec.shift + r).powf(*s)).collect(),
        _ => raw.iter().map(|r| spec.shift + r).collect(),
    };
    if !(eigenvalues[0] > 0.0) {
        return Err(Error::Construction(format!(
            "first eigenvalue {} is not strictly positive",
            eigenvalues[0]
        )));
    }
    // at least 8 grid points per wavelength of the highest mode
    let k_max = *wavenumbers.last().expect("n_modes >= 1");
    let spacing = l / grid.n_interior() as f64;
    if k_max > 0.0 && 2.0 * PI / k_max < 8.0 * spacing * (1.0 - 1e-12) {
        return Err(Error::Construction(format!(
            "grid with {} interior nodes under-resolves mode {} (wavenumber {k_max:.4}); need at least 8 nodes per wavelength",
            grid.n_interior(),
            n_modes
        )));
    }
    let m = grid.n_values();
    let mut xs = grid.nodes.clone();
    if grid.boundary_weights.is_some() {
        xs.push(0.0);
        xs.push(l);
    }
    let weights = grid.measure_weights();
    let mut phi = Vec::with_capacity(n_modes * m);
    let mut wphi = Vec::with_capacity(n_modes * m);
    for (k, (a, b)) in wavenumbers.iter().zip(&amplitudes) {
        for (x, w) in xs.iter().zip(&weights) {
            let v = a * (k * x).cos() + b * (k * x).sin();
            phi.push(v);
            wphi.push(w * v);
        }
    }
    Ok(EigenBasis {
        spec: spec.clone(),
        grid,
        eigenvalues,
        wavenumbers,
        amplitudes,
        phi,
        wphi,
    })
}

fn push3(
    mut acc: (Vec<f64>, Vec<(f64, f64)>, Vec<f64>),
    item: (f64, (f64, f64), f64),
) -> (Vec<f64>, Vec<(f64, f64)>, Vec<f64>) {
    acc.0.push(item.0);
    acc.1.push(item.1);
    acc.2.push(item.2);
    acc
}

/// Secular function of the Wentzell–Robin eigenproblem for the mode
/// `u = k cos kx + (β₀ - k²) sin kx`, which already satisfies the condition
/// at `x = 0`; roots in `k > 0` give `λ = k²`. Scaled by `(1 + k²)^{-2}` to
/// keep magnitudes moderate.
fn wentzell_secular(b0: f64, b1: f64, l: f64, k: f64) -> f64 {
    let (s, c) = (k * l).sin_cos();
    let u = k * c + (b0 - k * k) * s;
    let du = -k * k * s + k * (b0 - k * k) * c;
    (du + (b1 - k * k) * u) / (1.0 + k * k).powi(2)
}

/// `(k, (a, b), k²)` for the first `n` Wentzell–Robin modes normalized in
/// `L²(Ω̄, μ)`.
fn wentzell_modes(beta: [f64; 2], l: f64, n: usize) -> Result<Vec<(f64, (f64, f64), f64)>> {
    let [b0, b1] = beta;
    // a sign-change scan resolves roots at spacing well below π/L
    let dk = PI / l / 256.0;
    let mut out = Vec::with_capacity(n);
    let mut k_prev = 1e-9;
    let mut f_prev = wentzell_secular(b0, b1, l, k_prev);
    let k_limit = (n as f64 + 4.0) * PI / l + 2.0 * (b0.max(b1)).sqrt() + 10.0;
    while out.len() < n {
        let k = k_prev + dk;
        if k > k_limit {
            return Err(Error::Construction(format!(
                "Wentzell root scan failed to bracket mode {} below k = {k_limit:.3}",
                out.len() + 1
            )));
        }
        let f = wentzell_secular(b0, b1, l, k);
        if f == 0.0 || f.signum() != f_prev.signum() {
            let root = if f == 0.0 {
                k
            } else {
                bisect(|k| wentzell_secular(b0, b1, l, k), k_prev, k, f_prev)
            };
            out.push(root);
        }
        k_prev = k;
        f_prev = if f == 0.0 { wentzell_secular(b0, b1, l, k + 1e-3 * dk) } else { f };
    }
    Ok(out
        .into_iter()
        .map(|k| {
            let (a, b) = (k, b0 - k * k);
            let norm2 = mode_norm_sq(a, b, k, l) + a * a + (a * (k * l).cos() + b * (k * l).sin()).powi(2);
            let s = 1.0 / norm2.sqrt();
            (k, (a * s, b * s), k * k)
        })
        .collect())
}

fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, mut f_lo: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= 1e-15 * hi.max(1.0) {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if fm.signum() == f_lo.signum() {
            lo = mid;
            f_lo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `∫_0^L (a cos kx + b sin kx)² dx`.
fn mode_norm_sq(a: f64, b: f64, k: f64, l: f64) -> f64 {
    if k == 0.0 {
        return a * a * l;
    }
    let s2 = (2.0 * k * l).sin();
    let sl = (k * l).sin();
    a * a * (0.5 * l + s2 / (4.0 * k)) + b * b * (0.5 * l - s2 / (4.0 * k)) + a * b * sl * sl / k
}

impl EigenBasis {
    pub fn spec(&self) -> &OperatorSpec {
        &self.spec
    }

    pub fn grid(&self) -> &PhysicalGrid {
        &self.grid
    }

    pub fn n_modes(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// `φ_n` at every value component of the grid.
    pub fn mode_values(&self, n: usize) -> &[f64] {
        let m = self.grid.n_values();
        &self.phi[n * m..(n + 1) * m]
    }

    /// Pointwise `φ_n(x)`.
    pub fn mode_at(&self, n: usize, x: f64) -> f64 {
        let k = self.wavenumbers[n];
        let (a, b) = self.amplitudes[n];
        a * (k * x).cos() + b * (k * x).sin()
    }

    /// Pointwise `φ_n'(x)`.
    pub fn mode_derivative_at(&self, n: usize, x: f64) -> f64 {
        let k = self.wavenumbers[n];
        let (a, b) = self.amplitudes[n];
        k * (b * (k * x).cos() - a * (k * x).sin())
    }

    fn check(&self, field: &SpectralField, ctx: &str) -> Result<()> {
        if field.len() != self.n_modes() {
            return Err(Error::mismatch(self.n_modes(), field.len(), ctx));
        }
        Ok(())
    }

    /// `|u|_α = (Σ λ_n^α c_n²)^{1/2}`.
    pub fn valpha_norm(&self, field: &SpectralField, alpha: f64) -> Result<f64> {
        self.check(field, "valpha_norm")?;
        Ok(self.valpha_norm_unchecked(&field.coeffs, alpha))
    }

    pub(crate) fn valpha_norm_unchecked(&self, c: &[f64], alpha: f64) -> f64 {
        if alpha == 0.0 {
            return c.iter().map(|x| x * x).sum::<f64>().sqrt();
        }
        c.iter()
            .zip(&self.eigenvalues)
            .map(|(c, l)| l.powf(alpha) * c * c)
            .sum::<f64>()
            .sqrt()
    }

    /// `A^p u`.
    pub fn apply_a_power(&self, field: &SpectralField, power: f64) -> Result<SpectralField> {
        self.check(field, "apply_A_power")?;
        if power == 0.0 {
            return Ok(field.clone());
        }
        Ok(SpectralField::new(
            field
                .coeffs
                .iter()
                .zip(&self.eigenvalues)
                .map(|(c, l)| l.powf(power) * c)
                .collect(),
        ))
    }

    /// Grid values `Σ c_n φ_n(x_i)` (interior, then boundary traces).
    pub fn synthesize(&self, field: &SpectralField) -> Result<Vec<f64>> {
        self.check(field, "synthesize")?;
        Ok(self.synthesize_slice(&field.coeffs))
    }

    pub(crate) fn synthesize_slice(&self, c: &[f64]) -> Vec<f64> {
        let m = self.grid.n_values();
        let mut out = vec![0.0; m];
        for (n, cn) in c.iter().enumerate() {
            if *cn == 0.0 {
                continue;
            }
            for (o, p) in out.iter_mut().zip(&self.phi[n * m..(n + 1) * m]) {
                *o += cn * p;
            }
        }
        out
    }

    /// `c_n = (values, φ_n)_μ`.
    pub fn analyze(&self, values: &[f64]) -> Result<SpectralField> {
        let m = self.grid.n_values();
        if values.len() != m {
            return Err(Error::mismatch(m, values.len(), "analyze: grid values"));
        }
        Ok(SpectralField::new(self.analyze_slice(values)))
    }

    pub(crate) fn analyze_slice(&self, values: &[f64]) -> Vec<f64> {
        let m = self.grid.n_values();
        (0..self.n_modes())
            .map(|n| {
                self.wphi[n * m..(n + 1) * m]
                    .iter()
                    .zip(values)
                    .map(|(w, v)| w * v)
                    .sum()
            })
            .collect()
    }

    /// Size of the last retained mode in `V_α`, `λ_N^{α/2}|c_N|`.
    pub fn tail_indicator(&self, field: &SpectralField, alpha: f64) -> Result<f64> {
        self.check(field, "tail_indicator")?;
        let n = self.n_modes() - 1;
        Ok(self.eigenvalues[n].powf(0.5 * alpha) * field.coeffs[n].abs())
    }

    /// Gram matrix `(φ_m, φ_n)_μ` under the grid quadrature.
    pub fn gram(&self) -> Vec<Vec<f64>> {
        let n = self.n_modes();
        (0..n)
            .map(|a| (0..n).map(|b| self.grid.inner(self.mode_values(a), self.mode_values(b))).collect())
            .collect()
    }

    pub fn export(&self) -> BasisExport {
        BasisExport {
            kind: self.spec.name().to_string(),
            operator: self.spec.clone(),
            l: self.spec.domain_length,
            shift: self.spec.shift,
            eigenvalues: self.eigenvalues.clone(),
            nodes: self.grid.nodes.clone(),
        }
    }
}

/// Reproducibility record of a basis.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BasisExport {
    pub kind: String,
    pub operator: OperatorSpec,
    #[serde(rename = "L")]
    pub l: f64,
    pub shift: f64,
    pub eigenvalues: Vec<f64>,
    pub nodes: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dirichlet_pi(n: usize) -> EigenBasis {
        let spec = OperatorSpec::dirichlet(PI, 0.0);
        build_basis(&spec, n, PhysicalGrid::trapezoid(PI, 64).unwrap()).unwrap()
    }

    fn wentzell(n: usize) -> EigenBasis {
        let spec = OperatorSpec::wentzell([1.0, 2.0], 1.0, 0.0);
        let grid = PhysicalGrid::for_operator(&spec, 16 * n).unwrap();
        build_basis(&spec, n, grid).unwrap()
    }

    #[test]
    fn closed_form_eigenvalues() {
        assert_eq!(dirichlet_pi(3).eigenvalues(), &[1.0, 4.0, 9.0]);
        let spec = OperatorSpec::neumann(PI, 1.0);
        let b = build_basis(&spec, 3, PhysicalGrid::trapezoid(PI, 64).unwrap()).unwrap();
        assert_eq!(b.eigenvalues(), &[1.0, 2.0, 5.0]);
        let spec = OperatorSpec::fractional_neumann(0.5, PI, 1.0);
        let b = build_basis(&spec, 2, PhysicalGrid::trapezoid(PI, 64).unwrap()).unwrap();
        assert_eq!(b.eigenvalues()[0], 1.0);
        assert!((b.eigenvalues()[1] - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn validation_rejects_unshifted_neumann() {
        let spec = OperatorSpec::neumann(1.0, 0.0);
        assert!(matches!(spec.validate(), Err(Error::Config { .. })));
        let spec = OperatorSpec::wentzell([1.0, 0.0], 1.0, 0.0);
        assert!(spec.validate().is_err());
    }

    #[test]
    fn underresolved_grid_is_rejected() {
        let spec = OperatorSpec::dirichlet(1.0, 0.0);
        let err = build_basis(&spec, 20, PhysicalGrid::trapezoid(1.0, 40).unwrap()).unwrap_err();
        assert!(matches!(err, Error::Construction(_)));
    }

    #[test]
    fn norm_examples() {
        let spec = OperatorSpec::dirichlet(PI, 0.0);
        let b = build_basis(&spec, 2, PhysicalGrid::trapezoid(PI, 16).unwrap()).unwrap();
        let e2 = SpectralField::unit(2, 1);
        assert_eq!(b.valpha_norm(&e2, 1.0).unwrap(), 2.0);
        let c = SpectralField::new(vec![1.0, 1.0]);
        assert!((b.valpha_norm(&c, -2.0).unwrap() - (1.0f64 + 1.0 / 16.0).sqrt()).abs() < 1e-15);
        assert_eq!(b.valpha_norm(&c, 0.0).unwrap(), 2f64.sqrt());
        let v = SpectralField::new(vec![0.3, -1.7]);
        let back = b.apply_a_power(&b.apply_a_power(&v, 0.5).unwrap(), -0.5).unwrap();
        assert!(back.sub(&v).norm() < 1e-12);
        assert!(b.valpha_norm(&SpectralField::zeros(3), 0.0).is_err());
    }

    #[test]
    fn synthesize_examples() {
        let b = dirichlet_pi(3);
        let vals = b.synthesize(&SpectralField::unit(3, 0)).unwrap();
        // node 32 of 64 is x = π/2
        assert!((vals[32] - (2.0 / PI).sqrt()).abs() < 1e-15);
        assert!(b.synthesize(&SpectralField::zeros(3)).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn analyze_constant_on_neumann() {
        let spec = OperatorSpec::neumann(2.0, 1.0);
        let b = build_basis(&spec, 8, PhysicalGrid::trapezoid(2.0, 64).unwrap()).unwrap();
        let c = b.analyze(&vec![1.0; 65]).unwrap();
        assert!((c.coeffs[0] - 2f64.sqrt()).abs() < 1e-12);
        assert!(c.coeffs[1..].iter().all(|x| x.abs() < 1e-12));
        let e = b.analyze(b.mode_values(2)).unwrap();
        assert!(e.sub(&SpectralField::unit(8, 2)).norm() < 1e-12);
        assert!(b.analyze(&[1.0; 3]).is_err());
    }

    #[test]
    fn parseval_against_fine_quadrature() {
        let b = dirichlet_pi(8);
        let g = |x: f64| 0.3 * x.sin() - 1.1 * (3.0 * x).sin() + 0.05 * (7.0 * x).sin();
        let vals: Vec<f64> = b.grid().nodes().iter().map(|&x| g(x)).collect();
        let c = b.analyze(&vals).unwrap();
        let (fine, _) = crate::quadrature::integrate_adaptive(|x| g(x) * g(x), 0.0, PI, 1e-13);
        assert!((c.norm().powi(2) - fine).abs() < 1e-8);
    }

    #[test]
    fn gram_is_identity() {
        let spec = OperatorSpec::neumann(1.0, 0.5);
        let b = build_basis(&spec, 64, PhysicalGrid::trapezoid(1.0, 256).unwrap()).unwrap();
        let w = wentzell(64);
        for basis in [&b, &w] {
            let g = basis.gram();
            for (i, row) in g.iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    let target = if i == j { 1.0 } else { 0.0 };
                    assert!((v - target).abs() < 5e-8, "{}: ({i},{j}) {v}", basis.spec().name());
                }
            }
        }
    }

    #[test]
    fn wentzell_eigenvalues_sorted_and_positive() {
        let b = wentzell(24);
        let ev = b.eigenvalues();
        assert!(ev[0] > 0.0);
        assert!(ev.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn wentzell_weak_form_residual() {
        let b = wentzell(12);
        let [b0, b1] = [1.0, 2.0];
        let l = 1.0;
        // test functions: polynomials and a few smooth oscillations
        let tests: Vec<Box<dyn Fn(f64) -> (f64, f64)>> = vec![
            Box::new(|_| (1.0, 0.0)),
            Box::new(|x| (x, 1.0)),
            Box::new(|x| (x * x - 0.3, 2.0 * x)),
            Box::new(|x| ((5.0 * x).cos(), -5.0 * (5.0 * x).sin())),
            Box::new(|x| ((2.0 * x + 0.3).sin(), 2.0 * (2.0 * x + 0.3).cos())),
        ];
        for n in 0..b.n_modes() {
            let lam = b.eigenvalues()[n];
            for v in &tests {
                let (form, _) = crate::quadrature::integrate_adaptive(
                    |x| b.mode_derivative_at(n, x) * v(x).1,
                    0.0,
                    l,
                    1e-13,
                );
                let form = form + b0 * b.mode_at(n, 0.0) * v(0.0).0 + b1 * b.mode_at(n, l) * v(l).0;
                let (mass, _) =
                    crate::quadrature::integrate_adaptive(|x| b.mode_at(n, x) * v(x).0, 0.0, l, 1e-13);
                let mass = mass + b.mode_at(n, 0.0) * v(0.0).0 + b.mode_at(n, l) * v(l).0;
                assert!((form - lam * mass).abs() <= 1e-6, "mode {n}: {form} vs {}", lam * mass);
            }
        }
    }

    #[test]
    fn export_round_trips_through_json() {
        let b = wentzell(4);
        let text = serde_json::to_string(&b.export()).unwrap();
        let back: BasisExport = serde_json::from_str(&text).unwrap();
        assert_eq!(back.eigenvalues, b.eigenvalues());
        assert_eq!(back.kind, "wentzell_robin_1d");
    }

    proptest! {
        #[test]
        fn fractional_power_consistency(c in prop::collection::vec(-5.0f64..5.0, 6), alpha in -2.0f64..2.0) {
            let b = dirichlet_pi(6);
            let f = SpectralField::new(c);
            let lhs = b.valpha_norm(&f, alpha).unwrap();
            let rhs = b.apply_a_power(&f, alpha / 2.0).unwrap().norm();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.max(1.0));
        }

        #[test]
        fn round_trip_band_limited(c in prop::collection::vec(-3.0f64..3.0, 10)) {
            let w = wentzell(10);
            let f = SpectralField::new(c);
            let back = w.analyze(&w.synthesize(&f).unwrap()).unwrap();
            prop_assert!(back.sub(&f).norm() < 1e-10);
        }
    }
}
