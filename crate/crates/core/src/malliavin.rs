//! Variational (`∇Y`, `∇Z`) and Malliavin (`D_θY`, `D_θZ`) layers, solved
//! with the same backward engine as the nonlinear equation, and the
//! identities tying them to `Z`:
//!
//! ```text
//! D_θY_s = ∇Y_s (∇X_θ)⁻¹ σ(X_θ),   Z_t = ∇Y_t σ(x),   D_sY_s = Z_s.
//! ```
//!
//! Layouts: `∇Y` is `k × d` per path and node, index `a·d + j` for
//! `∂Y_a/∂x_j`; `∇Z` is `(k·d) × d`, index `(a·d + j)·d + r` for
//! `∂Z_{a r}/∂x_j`. The `D_θ` layers use the same layout with `j` the W
//! component perturbed at `θ`.

use serde::Serialize;

use crate::bdsde::engine::{self, BackwardDriver, BdsdeOptions};
use crate::bdsde::{self, BdsdeSolution, NodeFit};
use crate::coeffs::{Arg, CoefficientSet, Derivatives};
use crate::error::{Error, Result};
use crate::forward::{euler_forward, tangent_flow, ForwardSolution, SINGULAR_COND};
use crate::linalg;
use crate::par;
use crate::paths::{BackwardBFunctional, BrownianBundle};
use crate::regression::RegressionSpec;

/// Capacity of the per-call derivative buffers.
const DBUF: usize = 256;
/// Step of the difference quotient of `h'σ` at the terminal node.
const TERMINAL_FD: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct LinearLayer {
    /// `M × (N+1) × (k·d)`.
    pub y: Vec<f64>,
    /// `M × N × (k·d·d)`.
    pub z: Vec<f64>,
    pub fits: Vec<Option<NodeFit>>,
    /// First solved node; everything before it is zero.
    pub start: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct VariationalSolution {
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub d: usize,
    /// `(∇Y, ∇Z)`.
    pub gradient: LinearLayer,
    /// `(D_θY, D_θZ)` keyed by `θ` node, in the order they were added.
    pub d_layers: Vec<(usize, LinearLayer)>,
}

impl LinearLayer {
    #[inline]
    pub fn y_at(&self, path: usize, i: usize, n: usize, kd: usize) -> &[f64] {
        let o = (path * (n + 1) + i) * kd;
        &self.y[o..o + kd]
    }

    #[inline]
    pub fn z_at(&self, path: usize, i: usize, n: usize, kdd: usize) -> &[f64] {
        let o = (path * n + i) * kdd;
        &self.z[o..o + kdd]
    }
}

impl VariationalSolution {
    pub fn grad_y(&self, path: usize, i: usize) -> &[f64] {
        self.gradient.y_at(path, i, self.n, self.k * self.d)
    }

    pub fn grad_z(&self, path: usize, i: usize) -> &[f64] {
        self.gradient
            .z_at(path, i, self.n, self.k * self.d * self.d)
    }

    pub fn layer(&self, theta: usize) -> Option<&LinearLayer> {
        self.d_layers
            .iter()
            .find(|(t, _)| *t == theta)
            .map(|(_, l)| l)
    }

    pub fn d_y(&self, theta: usize, path: usize, i: usize) -> Option<&[f64]> {
        self.layer(theta)
            .map(|l| l.y_at(path, i, self.n, self.k * self.d))
    }

    pub fn d_z(&self, theta: usize, path: usize, i: usize) -> Option<&[f64]> {
        self.layer(theta)
            .map(|l| l.z_at(path, i, self.n, self.k * self.d * self.d))
    }

    /// Mean of `∇Y` at the first node.
    pub fn grad_y0(&self) -> Vec<f64> {
        let kd = self.k * self.d;
        let mut acc = vec![0.0; kd];
        for p in 0..self.m {
            for (a, v) in acc.iter_mut().zip(self.grad_y(p, 0)) {
                *a += v;
            }
        }
        acc.iter().map(|v| v / self.m as f64).collect()
    }
}

/// Scales of the two inhomogeneous parts of the linear system, used to
/// check superposition. The full system has both equal to one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearParts {
    pub terminal: f64,
    pub forcing: f64,
}

impl Default for LinearParts {
    fn default() -> Self {
        Self {
            terminal: 1.0,
            forcing: 1.0,
        }
    }
}

enum Forcing {
    Tangent,
    /// `M × d × d` values of `(∇X_θ)⁻¹ σ(X_θ)`.
    Malliavin(Vec<f64>),
}

struct LinearDriver<'a> {
    coeffs: &'a CoefficientSet,
    der: &'a Derivatives,
    forward: &'a ForwardSolution,
    base: &'a BdsdeSolution,
    /// `M × (k·d)` terminal `Z` of the base solution.
    z_end: &'a [f64],
    forcing: Forcing,
    parts: LinearParts,
}

impl LinearDriver<'_> {
    fn forcing_at(&self, path: usize, node: usize, out: &mut [f64]) {
        let d = self.forward.d;
        match &self.forcing {
            Forcing::Tangent => out[..d * d].copy_from_slice(self.forward.grad(path, node)),
            Forcing::Malliavin(a) => linalg::matmul(
                self.forward.grad(path, node),
                &a[path * d * d..(path + 1) * d * d],
                &mut out[..d * d],
                d,
                d,
                d,
            ),
        }
    }

    fn base_arg(&self, path: usize, node: usize) -> Arg<'_> {
        let kd = self.coeffs.dims.z_len();
        Arg {
            e: self.base.e_at(node),
            x: self.forward.state(path, node),
            y: self.base.y_at(path, node),
            z: if node == self.base.grid.n {
                &self.z_end[path * kd..(path + 1) * kd]
            } else {
                self.base.z_at(path, node)
            },
        }
    }
}

impl BackwardDriver for LinearDriver<'_> {
    fn q(&self) -> usize {
        self.coeffs.dims.k * self.coeffs.dims.d
    }

    fn terminal(&self, path: usize, y: &mut [f64]) {
        let (d, k) = (self.coeffs.dims.d, self.coeffs.dims.k);
        let n = self.forward.grid.n;
        let mut hx = [0.0; DBUF];
        let mut mx = [0.0; DBUF];
        (self.der.h_x)(self.forward.state(path, n), &mut hx[..k * d]);
        self.forcing_at(path, n, &mut mx);
        linalg::matmul(&hx[..k * d], &mx[..d * d], y, k, d, d);
        y.iter_mut().for_each(|v| *v *= self.parts.terminal);
    }

    fn terminal_z(&self, path: usize, z: &mut [f64]) {
        // ∂(h'σ)_{ar}/∂x_i by central differences, contracted with the forcing.
        let (d, k) = (self.coeffs.dims.d, self.coeffs.dims.k);
        let n = self.forward.grid.n;
        let x = self.forward.state(path, n);
        let mut mx = [0.0; DBUF];
        self.forcing_at(path, n, &mut mx);
        let mut xp = [0.0; DBUF];
        xp[..d].copy_from_slice(x);
        let mut jac = [0.0; DBUF];
        let (mut zp, mut zm) = ([0.0; DBUF], [0.0; DBUF]);
        for i in 0..d {
            let h = TERMINAL_FD * (1.0 + x[i].abs());
            xp[i] = x[i] + h;
            bdsde::terminal_z(self.coeffs, &xp[..d], &mut zp[..k * d]);
            xp[i] = x[i] - h;
            bdsde::terminal_z(self.coeffs, &xp[..d], &mut zm[..k * d]);
            xp[i] = x[i];
            for ar in 0..k * d {
                jac[ar * d + i] = (zp[ar] - zm[ar]) / (2.0 * h);
            }
        }
        for a in 0..k {
            for j in 0..d {
                for r in 0..d {
                    let s: f64 = (0..d)
                        .map(|i| jac[(a * d + r) * d + i] * mx[i * d + j])
                        .sum();
                    z[(a * d + j) * d + r] = s * self.parts.terminal;
                }
            }
        }
    }

    fn generator(&self, path: usize, node: usize, y: &[f64], z: &[f64], out: &mut [f64]) {
        let dims = self.coeffs.dims;
        let (d, k, kd) = (dims.d, dims.k, dims.z_len());
        let arg = self.base_arg(path, node);
        let (mut fx, mut fy, mut fz, mut mx) = ([0.0; DBUF], [0.0; DBUF], [0.0; DBUF], [0.0; DBUF]);
        (self.der.f_x)(&arg, &mut fx[..k * d]);
        (self.der.f_y)(&arg, &mut fy[..k * k]);
        (self.der.f_z)(&arg, &mut fz[..k * kd]);
        self.forcing_at(path, node, &mut mx);
        for a in 0..k {
            for j in 0..d {
                let mut s = 0.0;
                for i in 0..d {
                    s += fx[a * d + i] * mx[i * d + j] * self.parts.forcing;
                }
                for b in 0..k {
                    s += fy[a * k + b] * y[b * d + j];
                    for r in 0..d {
                        s += fz[a * kd + b * d + r] * z[(b * d + j) * d + r];
                    }
                }
                out[a * d + j] = s;
            }
        }
    }

    fn noise(&self, path: usize, node: usize, y: &[f64], z: &[f64], out: &mut [f64]) {
        let dims = self.coeffs.dims;
        let (d, k, l, kd, kl) = (dims.d, dims.k, dims.l, dims.z_len(), dims.g_len());
        let arg = self.base_arg(path, node);
        let (mut gx, mut gy, mut gz, mut mx) = ([0.0; DBUF], [0.0; DBUF], [0.0; DBUF], [0.0; DBUF]);
        (self.der.g_x)(&arg, &mut gx[..kl * d]);
        (self.der.g_y)(&arg, &mut gy[..kl * k]);
        (self.der.g_z)(&arg, &mut gz[..kl * kd]);
        self.forcing_at(path, node, &mut mx);
        for a in 0..k {
            for c in 0..l {
                let row = a * l + c;
                for j in 0..d {
                    let mut s = 0.0;
                    for i in 0..d {
                        s += gx[row * d + i] * mx[i * d + j] * self.parts.forcing;
                    }
                    for b in 0..k {
                        s += gy[row * k + b] * y[b * d + j];
                        for r in 0..d {
                            s += gz[row * kd + b * d + r] * z[(b * d + j) * d + r];
                        }
                    }
                    out[(a * d + j) * l + c] = s;
                }
            }
        }
    }
}

fn check_layer_inputs(
    coeffs: &CoefficientSet,
    forward: &ForwardSolution,
    base: &BdsdeSolution,
) -> Result<()> {
    let dims = coeffs.dims;
    forward.tangent()?;
    if !base.grid.matches(&forward.grid) || base.m != forward.m {
        return Err(Error::invalid(
            "base",
            "base solution and forward solution differ in grid or paths",
        ));
    }
    let (kd, kl) = (dims.z_len(), dims.g_len());
    if kl * kd > DBUF || kd * dims.d > DBUF || dims.d * dims.d > DBUF || dims.k * dims.k > DBUF {
        return Err(Error::invalid(
            "dims",
            format!("derivative blocks must fit in {DBUF} entries"),
        ));
    }
    Ok(())
}

fn base_terminal_z(coeffs: &CoefficientSet, forward: &ForwardSolution) -> Vec<f64> {
    let kd = coeffs.dims.z_len();
    let n = forward.grid.n;
    let mut z = vec![0.0; forward.m * kd];
    par::for_each_block(&mut z, kd, |p, zb| {
        bdsde::terminal_z(coeffs, forward.state(p, n), zb)
    });
    z
}

#[allow(clippy::too_many_arguments)]
fn run_layer(
    coeffs: &CoefficientSet,
    der: &Derivatives,
    forward: &ForwardSolution,
    bundle: &BrownianBundle,
    base: &BdsdeSolution,
    z_end: &[f64],
    forcing: Forcing,
    parts: LinearParts,
    reg: &RegressionSpec,
    start: usize,
) -> Result<LinearLayer> {
    let driver = LinearDriver {
        coeffs,
        der,
        forward,
        base,
        z_end,
        forcing,
        parts,
    };
    let opts = BdsdeOptions {
        inner_iterations: base.inner_iterations,
        ..BdsdeOptions::default()
    };
    let raw = engine::run(&driver, forward, &bundle.w, &bundle.b, reg, &opts, start)?;
    Ok(LinearLayer {
        y: raw.y,
        z: raw.z,
        fits: raw.fits,
        start,
        warnings: raw.warnings,
    })
}

/// `(∇Y, ∇Z)` around `base`. `forward` must carry its tangent flow.
pub fn solve_variational(
    coeffs: &CoefficientSet,
    forward: &ForwardSolution,
    bundle: &BrownianBundle,
    base: &BdsdeSolution,
    reg: &RegressionSpec,
) -> Result<VariationalSolution> {
    solve_variational_parts(coeffs, forward, bundle, base, reg, LinearParts::default())
}

pub fn solve_variational_parts(
    coeffs: &CoefficientSet,
    forward: &ForwardSolution,
    bundle: &BrownianBundle,
    base: &BdsdeSolution,
    reg: &RegressionSpec,
    parts: LinearParts,
) -> Result<VariationalSolution> {
    let der = coeffs.derivatives()?;
    check_layer_inputs(coeffs, forward, base)?;
    let z_end = base_terminal_z(coeffs, forward);
    let gradient = run_layer(
        coeffs,
        der,
        forward,
        bundle,
        base,
        &z_end,
        Forcing::Tangent,
        parts,
        reg,
        0,
    )?;
    Ok(VariationalSolution {
        m: forward.m,
        n: forward.grid.n,
        k: coeffs.dims.k,
        d: coeffs.dims.d,
        gradient,
        d_layers: Vec::new(),
    })
}

/// Adds the `(D_θY, D_θZ)` layer for each node in `thetas` to `var`.
/// Layers are zero before `θ` and start from `h'(X_T) D_θX_T`.
pub fn solve_malliavin_d(
    coeffs: &CoefficientSet,
    forward: &ForwardSolution,
    bundle: &BrownianBundle,
    base: &BdsdeSolution,
    thetas: &[usize],
    reg: &RegressionSpec,
    var: &mut VariationalSolution,
) -> Result<()> {
    let der = coeffs.derivatives()?;
    check_layer_inputs(coeffs, forward, base)?;
    let (n, d, m) = (forward.grid.n, forward.d, forward.m);
    let dd = d * d;
    let z_end = base_terminal_z(coeffs, forward);
    for &theta in thetas {
        if theta > n {
            return Err(Error::IndexOutOfRange {
                field: "theta",
                index: theta,
                len: n + 1,
            });
        }
        let mut a = vec![0.0; m * dd];
        let flow = forward.tangent()?;
        for p in 0..m {
            let o = (p * (n + 1) + theta) * dd;
            let cond = linalg::norm1(&flow.grad[o..o + dd], d)
                * linalg::norm1(&flow.grad_inv[o..o + dd], d);
            if !cond.is_finite() || cond > SINGULAR_COND {
                return Err(Error::SingularFlow {
                    path: p,
                    node: theta,
                    cond,
                });
            }
        }
        par::for_each_block(&mut a, dd, |p, block| {
            let mut sig = [0.0; DBUF];
            (coeffs.sigma)(forward.state(p, theta), &mut sig[..dd]);
            linalg::matmul(forward.grad_inv(p, theta), &sig[..dd], block, d, d, d);
        });
        let layer = run_layer(
            coeffs,
            der,
            forward,
            bundle,
            base,
            &z_end,
            Forcing::Malliavin(a),
            LinearParts::default(),
            reg,
            theta,
        )?;
        var.d_layers.retain(|(t, _)| *t != theta);
        var.d_layers.push((theta, layer));
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentityReport {
    /// RMS over paths and nodes `< N` of `Z − ∇Y (∇X)⁻¹ σ(X)`.
    pub z_vs_flow: f64,
    /// RMS over paths of `Z_0 − ∇Y_0 σ(x)`.
    pub z0_vs_gradient: f64,
    /// Per `θ` layer, RMS over paths of `D_θY_θ − Z_θ`; `θ = N` is skipped.
    pub diagonal: Vec<(usize, f64)>,
    /// Per `θ` layer, RMS over paths and nodes `≥ θ` of
    /// `D_θY_s − ∇Y_s (∇X_θ)⁻¹ σ(X_θ)`.
    pub d_vs_product: Vec<(usize, f64)>,
    /// Paths left out because their flow is singular.
    pub skipped_paths: usize,
}

/// Residuals of the identities listed in the module docs.
pub fn identity_checks(
    coeffs: &CoefficientSet,
    var: &VariationalSolution,
    forward: &ForwardSolution,
    base: &BdsdeSolution,
) -> Result<IdentityReport> {
    let flow = forward.tangent()?;
    let (n, m, d, k) = (var.n, var.m, var.d, var.k);
    let (kd, dd) = (k * d, d * d);
    let ok: Vec<bool> = flow.singular.iter().map(|s| !s).collect();
    let used = ok.iter().filter(|v| **v).count().max(1) as f64;

    // ∇Y_s (∇X_θ)⁻¹ σ(X_θ) on one path.
    let product = |p: usize, s: usize, theta: usize, out: &mut [f64]| {
        let mut sig = [0.0; DBUF];
        let mut tmp = [0.0; DBUF];
        (coeffs.sigma)(forward.state(p, theta), &mut sig[..dd]);
        linalg::matmul(
            forward.grad_inv(p, theta),
            &sig[..dd],
            &mut tmp[..dd],
            d,
            d,
            d,
        );
        linalg::matmul(var.grad_y(p, s), &tmp[..dd], out, k, d, d);
    };

    let z_vs_flow = {
        let s = par::reduce(
            m,
            || 0.0f64,
            |acc, p| {
                if !ok[p] {
                    return;
                }
                let mut pr = [0.0; DBUF];
                for i in 0..n {
                    product(p, i, i, &mut pr[..kd]);
                    *acc += base
                        .z_at(p, i)
                        .iter()
                        .zip(&pr[..kd])
                        .map(|(a, b)| (a - b).powi(2))
                        .sum::<f64>();
                }
            },
            |a, b| *a += b,
        );
        (s / (used * n as f64 * kd as f64)).sqrt()
    };

    let z0_vs_gradient = {
        let mut sig = vec![0.0; dd];
        (coeffs.sigma)(&forward.x0, &mut sig);
        let s = par::reduce(
            m,
            || 0.0f64,
            |acc, p| {
                let mut pr = [0.0; DBUF];
                linalg::matmul(var.grad_y(p, 0), &sig, &mut pr[..kd], k, d, d);
                *acc += base
                    .z_at(p, 0)
                    .iter()
                    .zip(&pr[..kd])
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>();
            },
            |a, b| *a += b,
        );
        (s / (m * kd) as f64).sqrt()
    };

    let mut diagonal = Vec::new();
    let mut d_vs_product = Vec::new();
    for (theta, layer) in &var.d_layers {
        let theta = *theta;
        if theta < n {
            let s = par::reduce(
                m,
                || 0.0f64,
                |acc, p| {
                    let dy = layer.y_at(p, theta, n, kd);
                    *acc += dy
                        .iter()
                        .zip(base.z_at(p, theta))
                        .map(|(a, b)| (a - b).powi(2))
                        .sum::<f64>();
                },
                |a, b| *a += b,
            );
            diagonal.push((theta, (s / (m * kd) as f64).sqrt()));
        }
        let s = par::reduce(
            m,
            || 0.0f64,
            |acc, p| {
                if !ok[p] {
                    return;
                }
                let mut pr = [0.0; DBUF];
                for i in theta..=n {
                    product(p, i, theta, &mut pr[..kd]);
                    let dy = layer.y_at(p, i, n, kd);
                    *acc += dy
                        .iter()
                        .zip(&pr[..kd])
                        .map(|(a, b)| (a - b).powi(2))
                        .sum::<f64>();
                }
            },
            |a, b| *a += b,
        );
        d_vs_product.push((
            theta,
            (s / (used * (n + 1 - theta) as f64 * kd as f64)).sqrt(),
        ));
    }
    Ok(IdentityReport {
        z_vs_flow,
        z0_vs_gradient,
        diagonal,
        d_vs_product,
        skipped_paths: m - ok.iter().filter(|v| **v).count(),
    })
}

/// `count` equispaced `θ` nodes on `[0, upto]` (rounded, deduplicated).
pub fn theta_nodes(upto: usize, count: usize) -> Vec<usize> {
    if count <= 1 || upto == 0 {
        return vec![0];
    }
    let mut v: Vec<usize> = (0..count)
        .map(|i| ((i as f64 * upto as f64) / (count - 1) as f64).round() as usize)
        .collect();
    v.dedup();
    v
}

/// `E|Y_s|² + ∫ E|D_θY_s|² dθ`, the integral by the trapezoid rule over the
/// `θ` layers of `var` lying in `[t0, τ_s]`.
pub fn malliavin_norm(base: &BdsdeSolution, var: &VariationalSolution, s: usize) -> Result<f64> {
    if s > base.grid.n {
        return Err(Error::IndexOutOfRange {
            field: "s",
            index: s,
            len: base.grid.n + 1,
        });
    }
    let (m, n, kd) = (base.m, base.grid.n, var.k * var.d);
    let second = |f: &dyn Fn(usize) -> f64| (0..m).map(f).sum::<f64>() / m as f64;
    let ey2 = second(&|p| base.y_at(p, s).iter().map(|v| v * v).sum());
    let mut pts: Vec<(f64, f64)> = var
        .d_layers
        .iter()
        .filter(|(t, _)| *t <= s)
        .map(|(t, layer)| {
            let v = second(&|p| layer.y_at(p, s, n, kd).iter().map(|v| v * v).sum());
            (base.grid.node(*t), v)
        })
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let integral: f64 = pts
        .windows(2)
        .map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1))
        .sum();
    Ok(ey2 + integral)
}

#[derive(Debug, Clone, Serialize)]
pub struct FdGradientReport {
    pub x: Vec<f64>,
    pub eps: f64,
    /// `∇Y_0`, `k × d`.
    pub gradient: Vec<f64>,
    pub forward_quotient: Vec<f64>,
    pub central_quotient: Vec<f64>,
    /// Componentwise `|quotient − ∇Y_0| / max(|∇Y_0|, 1e-12)`.
    pub forward_rel_error: Vec<f64>,
    pub central_rel_error: Vec<f64>,
}

/// Difference quotients of `Y_0` in `x` against `∇Y_0`, every solve on the
/// same bundle.
pub fn fd_gradient_check(
    coeffs: &CoefficientSet,
    bundle: &BrownianBundle,
    bback: &BackwardBFunctional,
    x: &[f64],
    eps: f64,
    reg: &RegressionSpec,
) -> Result<FdGradientReport> {
    if !(eps > 0.0) {
        return Err(Error::invalid("eps", "must be positive"));
    }
    let (d, k) = (coeffs.dims.d, coeffs.dims.k);
    let mut fwd = euler_forward(coeffs, x, &bundle.w)?;
    tangent_flow(coeffs, &mut fwd, &bundle.w)?;
    let base = bdsde::solve_bdsde(coeffs, &fwd, bundle, bback, reg)?;
    let var = solve_variational(coeffs, &fwd, bundle, &base, reg)?;
    let gradient = var.grad_y0();
    let y0 = base.y0();
    let solve_at = |xs: &[f64]| -> Result<Vec<f64>> {
        let f = euler_forward(coeffs, xs, &bundle.w)?;
        Ok(bdsde::solve_bdsde(coeffs, &f, bundle, bback, reg)?.y0())
    };
    let mut forward_quotient = vec![0.0; k * d];
    let mut central_quotient = vec![0.0; k * d];
    for j in 0..d {
        let mut xp = x.to_vec();
        xp[j] += eps;
        let yp = solve_at(&xp)?;
        xp[j] = x[j] - eps;
        let ym = solve_at(&xp)?;
        for a in 0..k {
            forward_quotient[a * d + j] = (yp[a] - y0[a]) / eps;
            central_quotient[a * d + j] = (yp[a] - ym[a]) / (2.0 * eps);
        }
    }
    let rel = |q: &[f64]| -> Vec<f64> {
        q.iter()
            .zip(&gradient)
            .map(|(q, g)| (q - g).abs() / g.abs().max(1e-12))
            .collect()
    };
    Ok(FdGradientReport {
        x: x.to_vec(),
        eps,
        forward_rel_error: rel(&forward_quotient),
        central_rel_error: rel(&central_quotient),
        gradient,
        forward_quotient,
        central_quotient,
    })
}
