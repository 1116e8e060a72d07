//! Monte Carlo solver for the backward doubly stochastic equation
//!
//! ```text
//! Y_s = h(X_T) + ∫_s^T f̄(←B_r, X_r, Y_r, Z_r) dr
//!              + ∫_s^T ḡ(←B_r, X_r, Y_r, Z_r) dB_r − ∫_s^T Z_r dW_r
//! ```
//!
//! conditioned on one realisation of B, with conditional expectations over
//! W taken by cross-sectional regression on the forward state.

mod assumptions;
pub(crate) mod engine;
mod moments;
mod picard;

pub use assumptions::{check_assumptions, AssumptionReport, DomainBox, Violation};
pub use engine::{BdsdeOptions, NodeFit};
pub use moments::{moment_diagnostics, MomentReport, MomentRow};
pub use picard::{picard_solve, PicardResult, PicardTrace};

use serde::Serialize;

use crate::coeffs::{Arg, CoefficientSet};
use crate::error::{Error, Result};
use crate::forward::ForwardSolution;
use crate::linalg;
use crate::paths::{BackwardBFunctional, BrownianBundle, TimeGrid};
use crate::regression::{predict, RegressionSpec};
use crate::stats;

use engine::BackwardDriver;

#[derive(Debug, Clone, Default, Serialize)]
pub struct Diagnostics {
    /// RMS regression residual of the `Y` payoff at each node.
    pub residual_rms: Vec<f64>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct BdsdeSolution {
    pub grid: TimeGrid,
    pub m: usize,
    pub d: usize,
    pub k: usize,
    pub l: usize,
    /// `M × (N+1) × k`, regressed per-path values.
    pub y: Vec<f64>,
    /// `M × N × (k·d)`.
    pub z: Vec<f64>,
    /// Regression of each node `0..N`.
    pub fits: Vec<NodeFit>,
    /// `←B` at the nodes, `(N+1) × l`.
    pub e: Vec<f64>,
    /// `M × k` pathwise sums `h(X_T) + Σ (f dt + g dB − Z dW)`. Their mean
    /// is `Y_0` up to regression error; the `Z dW` term removes the
    /// martingale part so their spread matches the regression estimator.
    pub pathwise: Vec<f64>,
    /// `M × (k·d)` samples whose mean is `Z` at the first node.
    pub z_samples: Vec<f64>,
    pub inner_iterations: usize,
    pub diagnostics: Diagnostics,
}

impl BdsdeSolution {
    #[inline]
    pub fn y_at(&self, path: usize, i: usize) -> &[f64] {
        let o = (path * (self.grid.n + 1) + i) * self.k;
        &self.y[o..o + self.k]
    }

    #[inline]
    pub fn z_at(&self, path: usize, i: usize) -> &[f64] {
        let kd = self.k * self.d;
        let o = (path * self.grid.n + i) * kd;
        &self.z[o..o + kd]
    }

    fn mean_over_paths(&self, len: usize, at: impl Fn(usize, usize) -> f64) -> Vec<f64> {
        (0..len)
            .map(|a| stats::sum((0..self.m).map(|p| at(p, a))) / self.m as f64)
            .collect()
    }

    /// `Y` at the first node, averaged over paths (all paths share `X_0`).
    pub fn y0(&self) -> Vec<f64> {
        self.mean_over_paths(self.k, |p, a| self.y_at(p, 0)[a])
    }

    pub fn z0(&self) -> Vec<f64> {
        self.mean_over_paths(self.k * self.d, |p, a| self.z_at(p, 0)[a])
    }

    /// Monte Carlo standard error of [`Self::y0`] from the pathwise sums.
    pub fn y0_standard_error(&self) -> Vec<f64> {
        std_error(&self.pathwise, self.k, self.m)
    }

    pub fn z0_standard_error(&self) -> Vec<f64> {
        std_error(&self.z_samples, self.k * self.d, self.m)
    }

    #[inline]
    pub fn e_at(&self, i: usize) -> &[f64] {
        &self.e[i * self.l..(i + 1) * self.l]
    }

    /// `x ↦ Ẑ(τ_i, x)` for `i < N`.
    pub fn z_field(&self, i: usize, x: &[f64]) -> Vec<f64> {
        let fit = &self.fits[i];
        let mut out = vec![0.0; self.k * self.d];
        predict(&fit.basis, &fit.z_coef, self.k * self.d, x, &mut out);
        out
    }

    /// `x ↦ Ŷ(τ_i, x)`, the same fixed point the per-path values solve.
    pub fn y_field(&self, coeffs: &CoefficientSet, i: usize, x: &[f64]) -> Vec<f64> {
        let k = self.k;
        let mut y = vec![0.0; k];
        if i == self.grid.n {
            (coeffs.h)(x, &mut y);
            return y;
        }
        let fit = &self.fits[i];
        let mut c = vec![0.0; k];
        predict(&fit.basis, &fit.cond_coef, k, x, &mut c);
        let z = self.z_field(i, x);
        let mut f = vec![0.0; k];
        y.copy_from_slice(&c);
        for _ in 0..self.inner_iterations.max(1) {
            let arg = Arg {
                e: self.e_at(i),
                x,
                y: &y,
                z: &z,
            };
            (coeffs.fbar)(&arg, &mut f);
            for a in 0..k {
                y[a] = c[a] + f[a] * self.grid.dt;
            }
        }
        y
    }
}

pub(crate) fn std_error(samples: &[f64], q: usize, m: usize) -> Vec<f64> {
    if m < 2 {
        return vec![f64::NAN; q];
    }
    (0..q)
        .map(|a| {
            let mean = stats::sum((0..m).map(|p| samples[p * q + a])) / m as f64;
            let var = (0..m)
                .map(|p| (samples[p * q + a] - mean).powi(2))
                .sum::<f64>()
                / (m as f64 - 1.0);
            (var / m as f64).sqrt()
        })
        .collect()
}

/// `∂h/∂x · σ` at `x`, the terminal stand-in for `Z`. Falls back to a
/// central difference of `h` when no analytic derivative is supplied.
pub(crate) fn terminal_z(coeffs: &CoefficientSet, x: &[f64], out: &mut [f64]) {
    let (d, k) = (coeffs.dims.d, coeffs.dims.k);
    let mut hx = vec![0.0; k * d];
    match &coeffs.derivatives {
        Some(der) => (der.h_x)(x, &mut hx),
        None => {
            let mut xp = x.to_vec();
            let (mut hp, mut hm) = (vec![0.0; k], vec![0.0; k]);
            for j in 0..d {
                let eps = 1e-6 * (1.0 + x[j].abs());
                xp[j] = x[j] + eps;
                (coeffs.h)(&xp, &mut hp);
                xp[j] = x[j] - eps;
                (coeffs.h)(&xp, &mut hm);
                xp[j] = x[j];
                for a in 0..k {
                    hx[a * d + j] = (hp[a] - hm[a]) / (2.0 * eps);
                }
            }
        }
    }
    let mut sig = vec![0.0; d * d];
    (coeffs.sigma)(x, &mut sig);
    linalg::matmul(&hx, &sig, out, k, d, d);
}

struct BaseDriver<'a> {
    coeffs: &'a CoefficientSet,
    forward: &'a ForwardSolution,
    e: &'a BackwardBFunctional,
}

impl BackwardDriver for BaseDriver<'_> {
    fn q(&self) -> usize {
        self.coeffs.dims.k
    }

    fn terminal(&self, path: usize, y: &mut [f64]) {
        (self.coeffs.h)(self.forward.state(path, self.forward.grid.n), y);
    }

    fn terminal_z(&self, path: usize, z: &mut [f64]) {
        terminal_z(
            self.coeffs,
            self.forward.state(path, self.forward.grid.n),
            z,
        );
    }

    fn generator(&self, path: usize, node: usize, y: &[f64], z: &[f64], out: &mut [f64]) {
        let arg = Arg {
            e: self.e.at(node),
            x: self.forward.state(path, node),
            y,
            z,
        };
        (self.coeffs.fbar)(&arg, out);
    }

    fn noise(&self, path: usize, node: usize, y: &[f64], z: &[f64], out: &mut [f64]) {
        let arg = Arg {
            e: self.e.at(node),
            x: self.forward.state(path, node),
            y,
            z,
        };
        (self.coeffs.gbar)(&arg, out);
    }
}

pub(crate) fn check_inputs(
    coeffs: &CoefficientSet,
    forward: &ForwardSolution,
    bundle: &BrownianBundle,
    bback: &BackwardBFunctional,
) -> Result<()> {
    let dims = coeffs.dims;
    if forward.d != dims.d || bundle.d() != dims.d {
        return Err(Error::invalid(
            "d",
            "forward state, bundle and coefficients disagree",
        ));
    }
    if bundle.l() != dims.l || bback.l != dims.l {
        return Err(Error::invalid(
            "l",
            "B path, backward functional and coefficients disagree",
        ));
    }
    if !forward.grid.matches(&bundle.grid()) || !bback.grid.matches(&bundle.grid()) {
        return Err(Error::invalid(
            "grid",
            "forward solution, bundle and ←B use different grids",
        ));
    }
    Ok(())
}

pub fn solve_bdsde(
    coeffs: &CoefficientSet,
    forward: &ForwardSolution,
    bundle: &BrownianBundle,
    bback: &BackwardBFunctional,
    reg: &RegressionSpec,
) -> Result<BdsdeSolution> {
    solve_bdsde_with(
        coeffs,
        forward,
        bundle,
        bback,
        reg,
        &BdsdeOptions::default(),
    )
}

pub fn solve_bdsde_with(
    coeffs: &CoefficientSet,
    forward: &ForwardSolution,
    bundle: &BrownianBundle,
    bback: &BackwardBFunctional,
    reg: &RegressionSpec,
    opts: &BdsdeOptions,
) -> Result<BdsdeSolution> {
    check_inputs(coeffs, forward, bundle, bback)?;
    let driver = BaseDriver {
        coeffs,
        forward,
        e: bback,
    };
    let raw = engine::run(&driver, forward, &bundle.w, &bundle.b, reg, opts, 0)?;
    Ok(assemble(coeffs, forward, bback, raw, opts))
}

pub(crate) fn assemble(
    coeffs: &CoefficientSet,
    forward: &ForwardSolution,
    bback: &BackwardBFunctional,
    raw: engine::Raw,
    opts: &BdsdeOptions,
) -> BdsdeSolution {
    let fits: Vec<NodeFit> = raw
        .fits
        .into_iter()
        .map(|f| f.expect("every node solved"))
        .collect();
    BdsdeSolution {
        grid: forward.grid,
        m: forward.m,
        d: coeffs.dims.d,
        k: coeffs.dims.k,
        l: coeffs.dims.l,
        diagnostics: Diagnostics {
            residual_rms: fits.iter().map(|f| f.residual_rms).collect(),
            warnings: raw.warnings,
        },
        y: raw.y,
        z: raw.z,
        fits,
        e: bback.values.clone(),
        pathwise: raw.pathwise,
        z_samples: raw.z_samples,
        inner_iterations: opts.inner_iterations,
    }
}
