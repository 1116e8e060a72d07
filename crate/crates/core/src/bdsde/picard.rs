//! Picard iteration: each iterate solves the BDSDE whose drivers are frozen
//! at the previous iterate, starting from `(Y, Z) = (0, 0)`.

use serde::Serialize;

use super::engine::{self, BackwardDriver, BdsdeOptions};
use super::{assemble, check_inputs, terminal_z, BdsdeSolution};
use crate::coeffs::{Arg, CoefficientSet};
use crate::error::{Error, Result};
use crate::forward::ForwardSolution;
use crate::par;
use crate::paths::{BackwardBFunctional, BrownianBundle};
use crate::regression::RegressionSpec;

#[derive(Debug, Clone, Serialize)]
pub struct PicardTrace {
    /// Distance between successive iterates, one entry per iteration.
    pub distances: Vec<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct PicardResult {
    pub solution: BdsdeSolution,
    pub trace: PicardTrace,
}

struct Frozen<'a> {
    coeffs: &'a CoefficientSet,
    forward: &'a ForwardSolution,
    e: &'a BackwardBFunctional,
    /// Previous iterate; `None` is the zero start.
    prev: Option<&'a BdsdeSolution>,
    /// `M × (k·d)` terminal `Z` stand-in, used once an iterate exists.
    z_end: &'a [f64],
}

impl Frozen<'_> {
    fn eval(&self, f: &crate::coeffs::DriverFn, path: usize, node: usize, out: &mut [f64]) {
        let (k, kd) = (self.coeffs.dims.k, self.coeffs.dims.z_len());
        let zero_y = [0.0; 64];
        let zero_z = [0.0; 64];
        let (y, z) = match self.prev {
            None => (&zero_y[..k], &zero_z[..kd]),
            Some(s) if node == s.grid.n => {
                (s.y_at(path, node), &self.z_end[path * kd..(path + 1) * kd])
            }
            Some(s) => (s.y_at(path, node), s.z_at(path, node)),
        };
        let arg = Arg {
            e: self.e.at(node),
            x: self.forward.state(path, node),
            y,
            z,
        };
        f(&arg, out);
    }
}

impl BackwardDriver for Frozen<'_> {
    fn q(&self) -> usize {
        self.coeffs.dims.k
    }

    fn terminal(&self, path: usize, y: &mut [f64]) {
        (self.coeffs.h)(self.forward.state(path, self.forward.grid.n), y);
    }

    fn terminal_z(&self, path: usize, z: &mut [f64]) {
        let kd = self.coeffs.dims.z_len();
        z.copy_from_slice(&self.z_end[path * kd..(path + 1) * kd]);
    }

    fn generator(&self, path: usize, node: usize, _y: &[f64], _z: &[f64], out: &mut [f64]) {
        self.eval(&self.coeffs.fbar, path, node, out);
    }

    fn noise(&self, path: usize, node: usize, _y: &[f64], _z: &[f64], out: &mut [f64]) {
        self.eval(&self.coeffs.gbar, path, node, out);
    }
}

/// `sqrt(E ∫ |ΔY|² + ‖ΔZ‖² dr)` by the left-point rule over the nodes, the
/// norm in which the Picard map contracts. (A sup over nodes does not: for
/// `f = −y`, `T = 1` the first step has ratio exactly 1 there.)
fn distance(a: &BdsdeSolution, b: Option<&BdsdeSolution>) -> f64 {
    let n = a.grid.n;
    let s = par::reduce(
        a.m,
        || 0.0f64,
        |acc, p| {
            for i in 0..n {
                for (c, v) in a.y_at(p, i).iter().enumerate() {
                    let w = b.map_or(0.0, |b| b.y_at(p, i)[c]);
                    *acc += (v - w).powi(2);
                }
                for (c, v) in a.z_at(p, i).iter().enumerate() {
                    let w = b.map_or(0.0, |b| b.z_at(p, i)[c]);
                    *acc += (v - w).powi(2);
                }
            }
        },
        |x, y| *x += y,
    );
    (s * a.grid.dt / a.m as f64).sqrt()
}

pub fn picard_solve(
    coeffs: &CoefficientSet,
    forward: &ForwardSolution,
    bundle: &BrownianBundle,
    bback: &BackwardBFunctional,
    reg: &RegressionSpec,
    tol: f64,
    max_iter: usize,
) -> Result<PicardResult> {
    check_inputs(coeffs, forward, bundle, bback)?;
    if !(tol >= 0.0) {
        return Err(Error::invalid("tol", "must be non-negative"));
    }
    if max_iter == 0 {
        return Err(Error::invalid("max_iter", "must be at least 1"));
    }
    let kd = coeffs.dims.z_len();
    let n = forward.grid.n;
    let mut z_end = vec![0.0; forward.m * kd];
    par::for_each_block(&mut z_end, kd, |p, z| {
        terminal_z(coeffs, forward.state(p, n), z)
    });
    let opts = BdsdeOptions {
        inner_iterations: 1,
        ..BdsdeOptions::default()
    };

    let mut prev: Option<BdsdeSolution> = None;
    let mut distances = Vec::new();
    for _ in 0..max_iter {
        let driver = Frozen {
            coeffs,
            forward,
            e: bback,
            prev: prev.as_ref(),
            z_end: &z_end,
        };
        let raw = engine::run(&driver, forward, &bundle.w, &bundle.b, reg, &opts, 0)?;
        let next = assemble(coeffs, forward, bback, raw, &opts);
        let dist = distance(&next, prev.as_ref());
        distances.push(dist);
        prev = Some(next);
        if dist < tol {
            return Ok(PicardResult {
                solution: prev.expect("at least one iterate"),
                trace: PicardTrace {
                    distances,
                    converged: true,
                },
            });
        }
    }
    Ok(PicardResult {
        solution: prev.expect("at least one iterate"),
        trace: PicardTrace {
            distances,
            converged: false,
        },
    })
}
