//! The resolvent families `S_γ(t)`, `P_γ(t)` in the eigenbasis and the
//! singular Volterra convolution `∫_0^t P_γ(t - τ) g(τ) dτ`.
//!
//! Per mode, with `x = λ t^γ`:
//! `S(t) = E_{γ,1}(-x)`, `P(t) = t^{γ-1} E_{γ,γ}(-x)` and the kernel mass
//! `K(t) = ∫_0^t P = t^γ E_{γ,γ+1}(-x)`.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fracops::GradedTimeGrid;
use crate::specfun::{MlTable, SeriesControl};
use crate::spectral::{EigenBasis, SpectralField};

/// Scalar Mittag-Leffler kernels for one order `γ ∈ (0, 1]`.
#[derive(Debug, Clone)]
pub struct ModeKernels {
    gamma: f64,
    e1: MlTable,
    eg: MlTable,
    eg1: MlTable,
}

impl ModeKernels {
    pub fn new(gamma: f64, ctl: SeriesControl) -> Result<Self> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::Domain(format!("propagator order gamma={gamma} outside (0,1]")));
        }
        Ok(ModeKernels {
            gamma,
            e1: MlTable::new(gamma, 1.0, ctl)?,
            eg: MlTable::new(gamma, gamma, ctl)?,
            eg1: MlTable::new(gamma, gamma + 1.0, ctl)?,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// `E_{γ,1}(-λ t^γ)`.
    pub fn s(&self, lambda: f64, t: f64) -> Result<f64> {
        if t == 0.0 {
            return Ok(1.0);
        }
        self.e1.eval(-lambda * t.powf(self.gamma))
    }

    /// `t^{γ-1} E_{γ,γ}(-λ t^γ)`, `t > 0`.
    pub fn p(&self, lambda: f64, t: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::Domain(format!("P_gamma(t) needs t > 0, got {t}")));
        }
        let tg = t.powf(self.gamma);
        Ok(tg / t * self.eg.eval(-lambda * tg)?)
    }

    /// `t^γ E_{γ,γ+1}(-λ t^γ)`.
    pub fn k(&self, lambda: f64, t: f64) -> Result<f64> {
        if t <= 0.0 {
            return Ok(0.0);
        }
        let tg = t.powf(self.gamma);
        Ok(tg * self.eg1.eval(-lambda * tg)?)
    }
}

/// Basis plus kernels: the propagators of one fractional order.
#[derive(Debug, Clone)]
pub struct PropagatorContext {
    basis: Arc<EigenBasis>,
    kernels: ModeKernels,
}

impl PropagatorContext {
    pub fn new(basis: Arc<EigenBasis>, gamma: f64, ctl: SeriesControl) -> Result<Self> {
        Ok(PropagatorContext {
            basis,
            kernels: ModeKernels::new(gamma, ctl)?,
        })
    }

    pub fn basis(&self) -> &Arc<EigenBasis> {
        &self.basis
    }

    pub fn gamma(&self) -> f64 {
        self.kernels.gamma
    }

    pub fn kernels(&self) -> &ModeKernels {
        &self.kernels
    }

    fn check(&self, v: &SpectralField) -> Result<()> {
        if v.len() != self.basis.n_modes() {
            return Err(Error::mismatch(self.basis.n_modes(), v.len(), "propagator input"));
        }
        Ok(())
    }

    /// `S_γ(t) v`.
    pub fn apply_s(&self, t: f64, v: &SpectralField) -> Result<SpectralField> {
        self.check(v)?;
        if !(t >= 0.0) {
            return Err(Error::Domain(format!("S_gamma(t) needs t >= 0, got {t}")));
        }
        if t == 0.0 {
            return Ok(v.clone());
        }
        let mut out = Vec::with_capacity(v.len());
        for (c, l) in v.coeffs.iter().zip(self.basis.eigenvalues()) {
            out.push(self.kernels.s(*l, t)? * c);
        }
        Ok(SpectralField::new(out))
    }

    /// `P_γ(t) v`, `t > 0`.
    pub fn apply_p(&self, t: f64, v: &SpectralField) -> Result<SpectralField> {
        self.check(v)?;
        let mut out = Vec::with_capacity(v.len());
        for (c, l) in v.coeffs.iter().zip(self.basis.eigenvalues()) {
            out.push(self.kernels.p(*l, t)? * c);
        }
        Ok(SpectralField::new(out))
    }

    /// Kernel masses for every node pair of `nodes`.
    pub fn kernel_table(&self, nodes: &[f64]) -> Result<KernelTable> {
        KernelTable::build(&self.kernels, self.basis.eigenvalues(), nodes)
    }

    /// `∫_0^{t_j} P_γ(t_j - τ) g(τ) dτ` at every node, with `g` constant on
    /// each step at the mean of its endpoint values and the kernel
    /// integrated exactly.
    pub fn convolve_p(&self, grid: &GradedTimeGrid, forcing: &[SpectralField]) -> Result<Vec<SpectralField>> {
        if forcing.len() != grid.len() {
            return Err(Error::mismatch(grid.len(), forcing.len(), "convolve_P forcing nodes"));
        }
        for f in forcing {
            self.check(f)?;
        }
        let table = self.kernel_table(grid.nodes())?;
        Ok(table.convolve(forcing))
    }
}

/// `K_n(t_j - t_k)` for all `k ≤ j` and modes `n`, so that the step weights
/// `W_{jk} = K(t_j - t_{k-1}) - K(t_j - t_k)` are differences of stored
/// values. Lags on graded grids rarely repeat exactly, so entries are keyed by
/// node pair.
#[derive(Debug, Clone)]
pub struct KernelTable {
    n_modes: usize,
    nodes: Vec<f64>,
    k: Vec<f64>,
}

fn tri(j: usize) -> usize {
    j * (j + 1) / 2
}

impl KernelTable {
    pub fn build(kernels: &ModeKernels, eigenvalues: &[f64], nodes: &[f64]) -> Result<Self> {
        if nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Domain("kernel table nodes must be strictly increasing".into()));
        }
        let n_modes = eigenvalues.len();
        let rows: Vec<Result<Vec<f64>>> = (0..nodes.len())
            .into_par_iter()
            .map(|j| {
                let mut row = Vec::with_capacity((j + 1) * n_modes);
                for k in 0..=j {
                    let lag = nodes[j] - nodes[k];
                    for l in eigenvalues {
                        row.push(kernels.k(*l, lag)?);
                    }
                }
                Ok(row)
            })
            .collect();
        let mut k = Vec::with_capacity(tri(nodes.len()) * n_modes);
        for r in rows {
            k.extend(r?);
        }
        Ok(KernelTable {
            n_modes,
            nodes: nodes.to_vec(),
            k,
        })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    /// `K(t_j - t_k)` for all modes.
    #[inline]
    pub fn mass(&self, j: usize, k: usize) -> &[f64] {
        let o = (tri(j) + k) * self.n_modes;
        &self.k[o..o + self.n_modes]
    }

    /// `K(t_j - t_k)` for `k = 0..=j`, mode-fastest.
    pub fn row(&self, j: usize) -> &[f64] {
        let o = tri(j) * self.n_modes;
        &self.k[o..o + (j + 1) * self.n_modes]
    }

    /// Step weight `W_{jk}` of mode `n`, `1 ≤ k ≤ j`.
    #[inline]
    pub fn weight(&self, j: usize, k: usize, n: usize) -> f64 {
        self.mass(j, k - 1)[n] - self.mass(j, k)[n]
    }

    /// Adds `Σ_{k=1}^{upto} W_{jk} ḡ_k` to `acc` for every mode, where
    /// `means[k-1]` is `ḡ_k`.
    pub fn accumulate(&self, j: usize, upto: usize, means: &[Vec<f64>], acc: &mut [f64]) {
        for (k, g) in means.iter().enumerate().take(upto) {
            let a = self.mass(j, k);
            let b = self.mass(j, k + 1);
            for n in 0..self.n_modes {
                acc[n] += (a[n] - b[n]) * g[n];
            }
        }
    }

    /// The product-integration convolution on this table's nodes.
    pub fn convolve(&self, forcing: &[SpectralField]) -> Vec<SpectralField> {
        let means: Vec<Vec<f64>> = forcing
            .windows(2)
            .map(|w| w[0].coeffs.iter().zip(&w[1].coeffs).map(|(a, b)| 0.5 * (a + b)).collect())
            .collect();
        (0..self.nodes.len())
            .map(|j| {
                let mut acc = vec![0.0; self.n_modes];
                self.accumulate(j, j, &means, &mut acc);
                SpectralField::new(acc)
            })
            .collect()
    }
}
