//! Backward least-squares Monte Carlo recursion shared by the nonlinear
//! solver, the Picard iterates and the linearised (variational and
//! Malliavin) systems.
//!
//! One step, from node `i+1` to node `i`, with the B increment `dB_i` fixed:
//!
//! ```text
//! P   = Y_{i+1} + g(θ_{i+1}) dB_i
//! C   = Ê[P | X_i]
//! Z_i = Ê[(P − C) dW_iᵀ | X_i] / dt
//!     + Ê[(P − C − Z_i dW_i) dW_iᵀ | X_i] / dt    (correction sweeps,
//! C   ← Ê[P − Z_i dW_i | X_i]                        each followed by this)
//! Y_i = C + f(θ_i) dt          (Y_i inside f by fixed-point sweeps)
//! ```

use crate::error::{Error, Result};
use crate::forward::ForwardSolution;
use crate::par;
use crate::paths::{BPath, WIncrements};
use crate::regression::{Basis, RegressionSpec, Regressor};

/// Capacity of the per-path stack buffers.
const BUF: usize = 64;

/// Per-path coefficients of a backward equation with `q` components.
pub(crate) trait BackwardDriver: Sync {
    fn q(&self) -> usize;
    fn terminal(&self, path: usize, y: &mut [f64]);
    /// Stand-in for `Z_N` where the noise coefficient is evaluated at `T`.
    fn terminal_z(&self, path: usize, z: &mut [f64]);
    /// Drift `f` at node `node` (`q` values).
    fn generator(&self, path: usize, node: usize, y: &[f64], z: &[f64], out: &mut [f64]);
    /// Noise `g` at node `node` (`q × l` values).
    fn noise(&self, path: usize, node: usize, y: &[f64], z: &[f64], out: &mut [f64]);
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BdsdeOptions {
    /// Fixed-point sweeps for `Y_i` inside the drift.
    pub inner_iterations: usize,
    /// Include `g dB` in the payoff that is correlated with `dW` for `Z`.
    pub z_includes_noise: bool,
    /// Correction refits of `Z` against the part of the payoff left after
    /// `Ẑ dW`; 0 keeps the plain `(P − C) dW / dt` regression.
    pub z_sweeps: usize,
}

impl Default for BdsdeOptions {
    fn default() -> Self {
        Self {
            inner_iterations: 2,
            z_includes_noise: true,
            z_sweeps: 1,
        }
    }
}

/// Regression output of one node.
#[derive(Debug, Clone)]
pub struct NodeFit {
    pub basis: Basis,
    /// `p × q`: `x ↦ Ê[P | X_i = x]`.
    pub cond_coef: Vec<f64>,
    /// `p × (q·d)`: `x ↦ Ẑ_i(x)`.
    pub z_coef: Vec<f64>,
    pub residual_rms: f64,
    pub ridge: f64,
}

pub(crate) struct Raw {
    /// `M × (N+1) × q`.
    pub y: Vec<f64>,
    /// `M × N × (q·d)`.
    pub z: Vec<f64>,
    /// Index `i` holds the fit of node `i`; nodes before `start` are `None`.
    pub fits: Vec<Option<NodeFit>>,
    /// `M × q`: `Y_N + Σ (f dt + g dB − Z dW)` along each path.
    pub pathwise: Vec<f64>,
    /// `M × (q·d)`: `(P − C) dW / dt` at the first solved node.
    pub z_samples: Vec<f64>,
    pub warnings: Vec<String>,
}

pub(crate) fn run<D: BackwardDriver>(
    driver: &D,
    forward: &ForwardSolution,
    w: &WIncrements,
    b: &BPath,
    spec: &RegressionSpec,
    opts: &BdsdeOptions,
    start: usize,
) -> Result<Raw> {
    spec.validate()?;
    let grid = forward.grid;
    if !w.grid.matches(&grid) || !b.grid.matches(&grid) {
        return Err(Error::invalid(
            "bundle",
            "bundle and forward solution use different grids",
        ));
    }
    if w.m != forward.m {
        return Err(Error::invalid(
            "bundle",
            "bundle and forward solution have different path counts",
        ));
    }
    let (n, m, d, l, q) = (grid.n, forward.m, forward.d, b.l, driver.q());
    if start > n {
        return Err(Error::IndexOutOfRange {
            field: "start",
            index: start,
            len: n + 1,
        });
    }
    let dt = grid.dt;
    let qd = q * d;
    if q * l > BUF || qd > BUF {
        return Err(Error::invalid(
            "dims",
            format!("q·l and q·d must not exceed {BUF} (q = {q}, d = {d}, l = {l})"),
        ));
    }
    let ys = (n + 1) * q;
    let zs = n * qd;

    let mut y = vec![0.0; m * ys];
    let mut z = vec![0.0; m * zs];
    let mut pathwise = vec![0.0; m * q];
    par::for_each_block2(&mut y, ys, &mut pathwise, q, |p, yb, acc| {
        driver.terminal(p, &mut yb[n * q..]);
        acc.copy_from_slice(&yb[n * q..]);
    });
    if let Some(p) = (0..m).find(|&p| {
        y[p * ys + n * q..p * ys + ys]
            .iter()
            .any(|v| !v.is_finite())
    }) {
        return Err(Error::NonFinite {
            what: "terminal value",
            node: n,
            path: Some(p),
        });
    }
    let mut z_next = vec![0.0; m * qd];
    par::for_each_block(&mut z_next, qd, |p, zb| driver.terminal_z(p, zb));

    let mut fits: Vec<Option<NodeFit>> = vec![None; n];
    let mut warnings = Vec::new();
    let mut payoff = vec![0.0; m * q];
    let mut noise_term = vec![0.0; m * q];
    let mut y_only = vec![0.0; m * q];
    let mut z_samples = vec![0.0; m * qd];

    for i in (start..n).rev() {
        let db = b.step(i);
        {
            let (y, z_next) = (&y, &z_next);
            par::for_each_block2(&mut payoff, q, &mut noise_term, q, |p, pay, nt| {
                let y1 = &y[p * ys + (i + 1) * q..p * ys + (i + 2) * q];
                let mut g = [0.0; BUF];
                driver.noise(p, i + 1, y1, &z_next[p * qd..(p + 1) * qd], &mut g[..q * l]);
                for a in 0..q {
                    let mut s = 0.0;
                    for c in 0..l {
                        let gv = g[a * l + c];
                        if gv != 0.0 {
                            s += gv * db[c];
                        }
                    }
                    nt[a] = s;
                    pay[a] = y1[a] + s;
                }
            });
        }
        let reg = Regressor::new(spec, m, d, |p| forward.state(p, i))?;
        if let Some(wm) = &reg.warning {
            if m > 1 || warnings.is_empty() {
                warnings.push(format!("node {i}: {wm}"));
            }
        }
        let mut cond_coef = reg.fit(q, |p, out| out.copy_from_slice(&payoff[p * q..(p + 1) * q]));

        // The payoff correlated with dW for Z; its conditional mean is `C`
        // unless the noise is left out.
        let y_coef = (!opts.z_includes_noise).then(|| {
            par::for_each_block(&mut y_only, q, |p, yo| {
                yo.copy_from_slice(&y[p * ys + (i + 1) * q..p * ys + (i + 2) * q]);
            });
            reg.fit(q, |p, out| out.copy_from_slice(&y_only[p * q..(p + 1) * q]))
        });
        let src: &[f64] = if y_coef.is_some() { &y_only } else { &payoff };
        let mut z_coef = reg.fit(qd, |p, out| {
            let mut c = [0.0; BUF];
            reg.fitted(p, y_coef.as_deref().unwrap_or(&cond_coef), q, &mut c);
            zresp(&src[p * q..(p + 1) * q], &c, w.step(p, i), dt, d, out);
        });
        // Refit Z, then C, on what Ẑ dW leaves unexplained: the Z response
        // variance drops from |Z|² to O(dt) + |Z − Ẑ|², the C one from
        // |Z|² dt to O(dt²).
        for _ in 0..opts.z_sweeps {
            let delta = reg.fit(qd, |p, out| {
                let (mut c, mut zh) = ([0.0; BUF], [0.0; BUF]);
                reg.fitted(p, y_coef.as_deref().unwrap_or(&cond_coef), q, &mut c);
                reg.fitted(p, &z_coef, qd, &mut zh);
                let r = explained(&src[p * q..(p + 1) * q], &zh[..qd], w.step(p, i), d);
                zresp(&r[..q], &c, w.step(p, i), dt, d, out);
            });
            for (a, b) in z_coef.iter_mut().zip(&delta) {
                *a += b;
            }
            let shift = reg.fit(q, |p, out| {
                let (mut c, mut zh) = ([0.0; BUF], [0.0; BUF]);
                reg.fitted(p, &cond_coef, q, &mut c);
                reg.fitted(p, &z_coef, qd, &mut zh);
                let r = explained(&payoff[p * q..(p + 1) * q], &zh[..qd], w.step(p, i), d);
                for a in 0..q {
                    out[a] = r[a] - c[a];
                }
            });
            for (a, b) in cond_coef.iter_mut().zip(&shift) {
                *a += b;
            }
        }
        if i == start {
            let zc = if opts.z_sweeps > 0 {
                Some(&z_coef)
            } else {
                None
            };
            par::for_each_block(&mut z_samples, qd, |p, out| {
                let mut c = [0.0; BUF];
                reg.fitted(p, &cond_coef, q, &mut c);
                let pay = &payoff[p * q..(p + 1) * q];
                match zc {
                    None => zresp(pay, &c, w.step(p, i), dt, d, out),
                    Some(zc) => {
                        let mut zh = [0.0; BUF];
                        reg.fitted(p, zc, qd, &mut zh);
                        let r = explained(pay, &zh[..qd], w.step(p, i), d);
                        zresp(&r[..q], &c, w.step(p, i), dt, d, out);
                        for (o, z) in out.iter_mut().zip(&zh[..qd]) {
                            *o += z;
                        }
                    }
                }
            });
        }

        let inner = opts.inner_iterations.max(1);
        par::for_each_block2(&mut y, ys, &mut z, zs, |p, yb, zb| {
            let zi = &mut zb[i * qd..(i + 1) * qd];
            reg.fitted(p, &z_coef, qd, zi);
            let mut c = [0.0; BUF];
            reg.fitted(p, &cond_coef, q, &mut c);
            let mut f = [0.0; BUF];
            let yi = &mut yb[i * q..(i + 1) * q];
            yi.copy_from_slice(&c[..q]);
            for _ in 0..inner {
                driver.generator(p, i, yi, zi, &mut f[..q]);
                for a in 0..q {
                    yi[a] = c[a] + f[a] * dt;
                }
            }
        });
        if let Some(p) = (0..m).find(|&p| {
            y[p * ys + i * q..p * ys + (i + 1) * q]
                .iter()
                .any(|v| !v.is_finite())
        }) {
            return Err(Error::NonFinite {
                what: "Y",
                node: i,
                path: Some(p),
            });
        }

        let residual = par::reduce(
            m,
            || 0.0f64,
            |acc, p| {
                let mut c = [0.0; BUF];
                reg.fitted(p, &cond_coef, q, &mut c);
                for a in 0..q {
                    *acc += (payoff[p * q + a] - c[a]).powi(2);
                }
            },
            |a, b| *a += b,
        );
        {
            let (y, z) = (&y, &z);
            par::for_each_block(&mut pathwise, q, |p, acc| {
                let mut f = [0.0; BUF];
                driver.generator(
                    p,
                    i,
                    &y[p * ys + i * q..p * ys + (i + 1) * q],
                    &z[p * zs + i * qd..p * zs + (i + 1) * qd],
                    &mut f[..q],
                );
                let zi = &z[p * zs + i * qd..p * zs + (i + 1) * qd];
                let dw = w.step(p, i);
                for a in 0..q {
                    let mart: f64 = (0..d).map(|j| zi[a * d + j] * dw[j]).sum();
                    acc[a] += f[a] * dt + noise_term[p * q + a] - mart;
                }
            });
        }
        {
            let z = &z;
            par::for_each_block(&mut z_next, qd, |p, zn| {
                zn.copy_from_slice(&z[p * zs + i * qd..p * zs + (i + 1) * qd]);
            });
        }
        fits[i] = Some(NodeFit {
            residual_rms: (residual / (m * q) as f64).sqrt(),
            ridge: reg.ridge_used,
            basis: reg.basis,
            cond_coef,
            z_coef,
        });
    }
    Ok(Raw {
        y,
        z,
        fits,
        pathwise,
        z_samples,
        warnings,
    })
}

/// `payoff − ẑ dW`.
#[inline]
fn explained(payoff: &[f64], zh: &[f64], dw: &[f64], d: usize) -> [f64; BUF] {
    let mut r = [0.0; BUF];
    for a in 0..payoff.len() {
        r[a] = payoff[a] - (0..d).map(|j| zh[a * d + j] * dw[j]).sum::<f64>();
    }
    r
}

#[inline]
fn zresp(payoff: &[f64], fitted: &[f64], dw: &[f64], dt: f64, d: usize, out: &mut [f64]) {
    for a in 0..payoff.len() {
        let r = (payoff[a] - fitted[a]) / dt;
        for j in 0..d {
            out[a * d + j] = r * dw[j];
        }
    }
}
