//! Euler-Maruyama for the forward diffusion, with the first-order tangent
//! flow `∇X`, its inverse, and the Malliavin derivative `D_θX` built from
//! them.

use crate::coeffs::CoefficientSet;
use crate::error::{Error, Result};
use crate::linalg;
use crate::par;
use crate::paths::{TimeGrid, WIncrements};

/// Steps between direct re-inversions of the tangent flow.
pub const RESYNC_EVERY: usize = 16;
/// Condition number above which a path's flow is flagged singular.
pub const SINGULAR_COND: f64 = 1e12;

#[derive(Debug, Clone)]
pub struct TangentFlow {
    /// `M × (N+1) × d × d`.
    pub grad: Vec<f64>,
    /// Same layout as `grad`.
    pub grad_inv: Vec<f64>,
    /// Paths whose flow became numerically singular.
    pub singular: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct ForwardSolution {
    pub grid: TimeGrid,
    pub m: usize,
    pub d: usize,
    pub x0: Vec<f64>,
    /// `M × (N+1) × d`.
    pub x: Vec<f64>,
    pub tangent: Option<TangentFlow>,
}

impl ForwardSolution {
    #[inline]
    pub fn state(&self, path: usize, i: usize) -> &[f64] {
        let o = (path * (self.grid.n + 1) + i) * self.d;
        &self.x[o..o + self.d]
    }

    pub fn tangent(&self) -> Result<&TangentFlow> {
        self.tangent
            .as_ref()
            .ok_or_else(|| Error::invalid("forward", "tangent flow has not been computed"))
    }

    #[inline]
    pub fn grad(&self, path: usize, i: usize) -> &[f64] {
        let dd = self.d * self.d;
        let o = (path * (self.grid.n + 1) + i) * dd;
        &self.tangent.as_ref().expect("tangent flow").grad[o..o + dd]
    }

    #[inline]
    pub fn grad_inv(&self, path: usize, i: usize) -> &[f64] {
        let dd = self.d * self.d;
        let o = (path * (self.grid.n + 1) + i) * dd;
        &self.tangent.as_ref().expect("tangent flow").grad_inv[o..o + dd]
    }

    /// `∇X_s (∇X_θ)^{-1} σ(X_θ)` on one path, written into `out` (`d × d`),
    /// zero when `s < θ`. `sigma_theta` must hold `σ(X_θ)` for this path.
    pub fn malliavin_dx_at(
        &self,
        path: usize,
        theta: usize,
        s: usize,
        sigma_theta: &[f64],
        scratch: &mut [f64],
        out: &mut [f64],
    ) {
        let d = self.d;
        if s < theta {
            out[..d * d].fill(0.0);
            return;
        }
        linalg::matmul(self.grad_inv(path, theta), sigma_theta, scratch, d, d, d);
        linalg::matmul(self.grad(path, s), scratch, out, d, d, d);
    }
}

/// Euler-Maruyama from `x0` along every path of `w`.
pub fn euler_forward(
    coeffs: &CoefficientSet,
    x0: &[f64],
    w: &WIncrements,
) -> Result<ForwardSolution> {
    let d = coeffs.dims.d;
    if w.d != d {
        return Err(Error::invalid(
            "bundle",
            format!("W has dimension {} but the coefficients need d = {d}", w.d),
        ));
    }
    if x0.len() != d {
        return Err(Error::invalid("x", format!("expected {d} components")));
    }
    let grid = w.grid;
    let n = grid.n;
    let dt = grid.dt;
    let stride = (n + 1) * d;
    let mut x = vec![0.0; w.m * stride];
    par::for_each_block(&mut x, stride, |path, block| {
        let mut drift = vec![0.0; d];
        let mut sig = vec![0.0; d * d];
        block[..d].copy_from_slice(x0);
        for i in 0..n {
            let (head, tail) = block.split_at_mut((i + 1) * d);
            let cur = &head[i * d..];
            let next = &mut tail[..d];
            (coeffs.b)(cur, &mut drift);
            (coeffs.sigma)(cur, &mut sig);
            let dw = w.step(path, i);
            for a in 0..d {
                let mut v = cur[a] + drift[a] * dt;
                for j in 0..d {
                    v += sig[a * d + j] * dw[j];
                }
                next[a] = v;
            }
        }
    });
    if let Some(pos) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "forward state",
            node: (pos / d) % (n + 1),
            path: Some(pos / stride),
        });
    }
    Ok(ForwardSolution {
        grid,
        m: w.m,
        d,
        x0: x0.to_vec(),
        x,
        tangent: None,
    })
}

/// Propagates `∇X` and its inverse along the stored Euler paths.
///
/// The inverse follows the exact inverse of each Euler step matrix and is
/// replaced by a direct inversion of `∇X` every [`RESYNC_EVERY`] steps.
pub fn tangent_flow(
    coeffs: &CoefficientSet,
    forward: &mut ForwardSolution,
    w: &WIncrements,
) -> Result<()> {
    let der = coeffs.derivatives()?;
    let d = forward.d;
    let dd = d * d;
    let n = forward.grid.n;
    let dt = forward.grid.dt;
    let stride = (n + 1) * dd;
    let mut grad = vec![0.0; forward.m * stride];
    let mut grad_inv = vec![0.0; forward.m * stride];
    let fw = &*forward;
    par::for_each_block2(&mut grad, stride, &mut grad_inv, stride, |path, g, gi| {
        let mut bx = vec![0.0; dd];
        let mut sx = vec![0.0; dd * d];
        let mut step = vec![0.0; dd];
        let mut step_inv = vec![0.0; dd];
        let mut work = vec![0.0; dd];
        linalg::identity(&mut g[..dd], d);
        linalg::identity(&mut gi[..dd], d);
        for i in 0..n {
            let xi = fw.state(path, i);
            (der.b_x)(xi, &mut bx);
            (der.sigma_x)(xi, &mut sx);
            let dw = w.step(path, i);
            // E = I + b' dt + Σ_j (∂σ_{·j}/∂x) dW_j
            for a in 0..d {
                for p in 0..d {
                    let mut v = if a == p { 1.0 } else { 0.0 };
                    v += bx[a * d + p] * dt;
                    for j in 0..d {
                        v += sx[(a * d + j) * d + p] * dw[j];
                    }
                    step[a * d + p] = v;
                }
            }
            let (gh, gt) = g.split_at_mut((i + 1) * dd);
            linalg::matmul(&step, &gh[i * dd..], &mut gt[..dd], d, d, d);
            let (ih, it) = gi.split_at_mut((i + 1) * dd);
            let next_inv = &mut it[..dd];
            let resync = (i + 1) % RESYNC_EVERY == 0 || i + 1 == n;
            let ok = if resync {
                linalg::invert(&gt[..dd], next_inv, &mut work, d)
            } else if linalg::invert(&step, &mut step_inv, &mut work, d) {
                linalg::matmul(&ih[i * dd..], &step_inv, next_inv, d, d, d);
                true
            } else {
                false
            };
            if !ok {
                next_inv.fill(f64::NAN);
            }
        }
    });
    let singular = (0..forward.m)
        .map(|path| {
            (0..=n).any(|i| {
                let o = path * stride + i * dd;
                let g = &grad[o..o + dd];
                let gi = &grad_inv[o..o + dd];
                let cond = linalg::norm1(g, d) * linalg::norm1(gi, d);
                !cond.is_finite() || cond > SINGULAR_COND
            })
        })
        .collect();
    forward.tangent = Some(TangentFlow {
        grad,
        grad_inv,
        singular,
    });
    Ok(())
}

/// `D_θX_s` for every path and node, `M × (N+1) × d × d`, zero for `s < θ`.
pub fn malliavin_dx(
    forward: &ForwardSolution,
    theta: usize,
    coeffs: &CoefficientSet,
) -> Result<Vec<f64>> {
    let n = forward.grid.n;
    if theta > n {
        return Err(Error::IndexOutOfRange {
            field: "theta",
            index: theta,
            len: n + 1,
        });
    }
    let flow = forward.tangent()?;
    let d = forward.d;
    for path in 0..forward.m {
        let o = (path * (n + 1) + theta) * d * d;
        let cond = linalg::norm1(&flow.grad[o..o + d * d], d)
            * linalg::norm1(&flow.grad_inv[o..o + d * d], d);
        if !cond.is_finite() || cond > SINGULAR_COND {
            return Err(Error::SingularFlow {
                path,
                node: theta,
                cond,
            });
        }
    }
    let dd = d * d;
    let stride = (n + 1) * dd;
    let mut out = vec![0.0; forward.m * stride];
    par::for_each_block(&mut out, stride, |path, block| {
        let mut sig = vec![0.0; dd];
        let mut scratch = vec![0.0; dd];
        (coeffs.sigma)(forward.state(path, theta), &mut sig);
        for s in theta..=n {
            forward.malliavin_dx_at(
                path,
                theta,
                s,
                &sig,
                &mut scratch,
                &mut block[s * dd..(s + 1) * dd],
            );
        }
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::coeffs::scalar::{Scalar, Smooth};
    use crate::paths::TimeGrid;

    fn w(n: usize, m: usize, seed: u64) -> WIncrements {
        WIncrements::generate(seed, TimeGrid::new(0.0, 1.0, n).unwrap(), m, 1).unwrap()
    }

    #[test]
    fn frozen_state_without_coefficients() {
        let c = Scalar {
            sigma: Smooth::constant(0.0),
            ..Default::default()
        }
        .build();
        let f = euler_forward(&c, &[0.7], &w(10, 4, 1)).unwrap();
        assert!(f.x.iter().all(|&v| v == 0.7));
    }

    #[test]
    fn constant_drift_is_exact() {
        let c = Scalar {
            b: Smooth::constant(1.0),
            sigma: Smooth::constant(0.0),
            ..Default::default()
        }
        .build();
        let f = euler_forward(&c, &[0.5], &w(8, 2, 1)).unwrap();
        for i in 0..=8 {
            assert!((f.state(1, i)[0] - (0.5 + f.grid.node(i))).abs() < 1e-15);
        }
    }

    #[test]
    fn blow_up_names_the_path() {
        let c = Scalar {
            b: Smooth {
                value: Arc::new(|x| x * x * 1e200),
                deriv: Arc::new(|x| 2.0 * x),
            },
            sigma: Smooth::constant(0.0),
            ..Default::default()
        }
        .build();
        let e = euler_forward(&c, &[1.0], &w(10, 3, 1)).unwrap_err();
        assert!(matches!(e, Error::NonFinite { path: Some(0), .. }), "{e}");
    }

    #[test]
    fn constant_coefficients_have_identity_flow() {
        let c = Scalar {
            b: Smooth::constant(0.3),
            sigma: Smooth::constant(0.8),
            ..Default::default()
        }
        .build();
        let ww = w(20, 5, 3);
        let mut f = euler_forward(&c, &[0.0], &ww).unwrap();
        tangent_flow(&c, &mut f, &ww).unwrap();
        let t = f.tangent().unwrap();
        assert!(t.grad.iter().all(|&v| v == 1.0));
        assert!(t.grad_inv.iter().all(|&v| v == 1.0));
        let dx = malliavin_dx(&f, 7, &c).unwrap();
        for s in 0..=20 {
            let want = if s < 7 { 0.0 } else { 0.8 };
            assert_eq!(dx[2 * 21 + s], want);
        }
    }

    #[test]
    fn linear_ode_flow() {
        let a = -0.7;
        let c = Scalar {
            b: Smooth::linear(a, 0.0),
            sigma: Smooth::constant(0.0),
            ..Default::default()
        }
        .build();
        let ww = w(50, 1, 3);
        let mut f = euler_forward(&c, &[1.0], &ww).unwrap();
        tangent_flow(&c, &mut f, &ww).unwrap();
        for i in 0..=50 {
            let g = f.grad(0, i)[0];
            assert!((g - (1.0 + a * 0.02f64).powi(i as i32)).abs() < 1e-13);
            assert!((g - (a * f.grid.node(i)).exp()).abs() < 0.02);
        }
    }

    #[test]
    fn geometric_flow_matches_difference_quotient() {
        // b = -x, σ = 0.2x: linear in x, so the flow is X/x and the forward
        // difference quotient from x(1+ε) reproduces it.
        let c = Scalar {
            b: Smooth::linear(-1.0, 0.0),
            sigma: Smooth::linear(0.2, 0.0),
            ..Default::default()
        }
        .build();
        let ww = w(100, 50, 8);
        let x = 1.3;
        let eps = 1e-5;
        let mut base = euler_forward(&c, &[x], &ww).unwrap();
        tangent_flow(&c, &mut base, &ww).unwrap();
        let bumped = euler_forward(&c, &[x * (1.0 + eps)], &ww).unwrap();
        for p in 0..50 {
            for i in 0..=100 {
                let g = base.grad(p, i)[0];
                let fd = (bumped.state(p, i)[0] - base.state(p, i)[0]) / (x * eps);
                assert!((g - fd).abs() < 1e-6 * (1.0 + g.abs()));
                assert!((g - base.state(p, i)[0] / x).abs() < 1e-12);
                assert!((g * base.grad_inv(p, i)[0] - 1.0).abs() < 1e-8);
            }
        }
    }
}
