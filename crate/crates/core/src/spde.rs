//! Pathwise finite differences for the backward SPDE
//!
//! ```text
//! u(t,x) = h(x) + ∫_t^T [L u + f̄(←B_s, x, u, σ ∂_x u)] ds
//!               + ∫_t^T ḡ(←B_s, x, u, σ ∂_x u) dB_s,   L = ½σ²∂² + b∂,
//! ```
//!
//! in one space dimension, on the same B path the BDSDE solver uses.
//! Nodes `x_0 … x_{J+1}`; the two outer nodes are ghosts extrapolated
//! linearly (`∂²u = 0`) after every step.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::coeffs::{Arg, CoefficientSet};
use crate::error::{Error, Result};
use crate::par;
use crate::paths::{BPath, BackwardBFunctional, TimeGrid};

const MAGIC: &[u8; 8] = b"BDSDFELD";
const VERSION: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpaceGrid {
    pub x_min: f64,
    pub x_max: f64,
    /// Interior node count.
    pub j: usize,
    pub dx: f64,
}

impl SpaceGrid {
    pub fn new(x_min: f64, x_max: f64, j: usize) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite() && x_min < x_max) {
            return Err(Error::invalid("space", "need finite x_min < x_max"));
        }
        if j < 3 {
            return Err(Error::invalid("J", "need at least 3 interior nodes"));
        }
        Ok(Self {
            x_min,
            x_max,
            j,
            dx: (x_max - x_min) / (j + 1) as f64,
        })
    }

    /// Total node count `J + 2`.
    #[inline]
    pub fn len(&self) -> usize {
        self.j + 2
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn node(&self, idx: usize) -> f64 {
        if idx == self.j + 1 {
            self.x_max
        } else {
            self.x_min + idx as f64 * self.dx
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.node(i)).collect()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    #[default]
    Explicit,
    /// Crank-Nicolson on `L`; `f̄`, `ḡ` stay explicit.
    ThetaImplicit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomFieldU {
    pub grid: TimeGrid,
    pub space: SpaceGrid,
    /// `(N+1) × (J+2)`.
    pub u: Vec<f64>,
    pub ux: Vec<f64>,
    pub uxx: Vec<f64>,
    pub b_seed: u64,
}

/// Central first difference; one-sided at the ends.
pub fn first_difference(row: &[f64], dx: f64, out: &mut [f64]) {
    let last = row.len() - 1;
    out[0] = (row[1] - row[0]) / dx;
    out[last] = (row[last] - row[last - 1]) / dx;
    for j in 1..last {
        out[j] = (row[j + 1] - row[j - 1]) / (2.0 * dx);
    }
}

/// Central second difference; zero at the ends.
pub fn second_difference(row: &[f64], dx: f64, out: &mut [f64]) {
    let last = row.len() - 1;
    out[0] = 0.0;
    out[last] = 0.0;
    for j in 1..last {
        out[j] = (row[j + 1] - 2.0 * row[j] + row[j - 1]) / (dx * dx);
    }
}

fn extrapolate_ghosts(row: &mut [f64]) {
    let last = row.len() - 1;
    row[0] = 2.0 * row[1] - row[2];
    row[last] = 2.0 * row[last - 1] - row[last - 2];
}

fn eval_state(f: &crate::coeffs::StateFn, x: f64) -> f64 {
    let mut o = [0.0];
    f(&[x], &mut o);
    o[0]
}

/// `(L u)(x_j)` on interior nodes, zero at the two ghosts.
pub fn generator_apply(
    row: &[f64],
    space: &SpaceGrid,
    coeffs: &CoefficientSet,
) -> Result<Vec<f64>> {
    check_dims(coeffs)?;
    if row.len() != space.len() {
        return Err(Error::invalid(
            "u_row",
            format!("expected {} values", space.len()),
        ));
    }
    let dx = space.dx;
    let mut out = vec![0.0; row.len()];
    for j in 1..=space.j {
        let x = space.node(j);
        let s = eval_state(&coeffs.sigma, x);
        let b = eval_state(&coeffs.b, x);
        out[j] = 0.5 * s * s * (row[j + 1] - 2.0 * row[j] + row[j - 1]) / (dx * dx)
            + b * (row[j + 1] - row[j - 1]) / (2.0 * dx);
    }
    Ok(out)
}

fn check_dims(coeffs: &CoefficientSet) -> Result<()> {
    if coeffs.dims.d != 1 || coeffs.dims.k != 1 {
        return Err(Error::invalid("dims", "the SPDE solver needs d = k = 1"));
    }
    Ok(())
}

/// Solves `T x = r` for tridiagonal `T` with sub-, main and super-diagonals
/// `a`, `b`, `c` (Thomas algorithm, no pivoting). `a[0]`, `c[n-1]` unused.
fn thomas(a: &[f64], b: &[f64], c: &[f64], r: &mut [f64], scratch: &mut [f64]) {
    let n = b.len();
    scratch[0] = c[0] / b[0];
    r[0] /= b[0];
    for i in 1..n {
        let m = b[i] - a[i] * scratch[i - 1];
        scratch[i] = if i + 1 < n { c[i] / m } else { 0.0 };
        r[i] = (r[i] - a[i] * r[i - 1]) / m;
    }
    for i in (0..n - 1).rev() {
        r[i] -= scratch[i] * r[i + 1];
    }
}

pub fn solve_spde(
    coeffs: &CoefficientSet,
    b: &BPath,
    bback: &BackwardBFunctional,
    space: &SpaceGrid,
    scheme: Scheme,
) -> Result<RandomFieldU> {
    check_dims(coeffs)?;
    let grid = b.grid;
    if !bback.grid.matches(&grid) || b.l != coeffs.dims.l || bback.l != coeffs.dims.l {
        return Err(Error::invalid(
            "bback",
            "B path, ←B and coefficients disagree in grid or l",
        ));
    }
    let (n, nx, dx, dt, l) = (grid.n, space.len(), space.dx, grid.dt, coeffs.dims.l);
    let xs = space.nodes();
    let sig: Vec<f64> = xs.iter().map(|&x| eval_state(&coeffs.sigma, x)).collect();
    let drift: Vec<f64> = xs.iter().map(|&x| eval_state(&coeffs.b, x)).collect();
    if scheme == Scheme::Explicit {
        let smax = sig[1..=space.j].iter().fold(0.0f64, |m, s| m.max(s * s));
        if smax > 0.0 && dt > dx * dx / smax {
            return Err(Error::Cfl {
                dt,
                required_dt: dx * dx / smax,
            });
        }
    }

    let mut u = vec![0.0; (n + 1) * nx];
    for (j, &x) in xs.iter().enumerate() {
        u[n * nx + j] = eval_state(&coeffs.h, x);
    }
    let mut ux_next = vec![0.0; nx];
    let mut explicit = vec![0.0; nx];
    let (mut lo, mut di, mut up, mut scratch) =
        (vec![0.0; nx], vec![0.0; nx], vec![0.0; nx], vec![0.0; nx]);
    let diff = |j: usize| 0.5 * sig[j] * sig[j] / (dx * dx);
    let adv = |j: usize| drift[j] / (2.0 * dx);
    let lop = |row: &[f64], j: usize| {
        diff(j) * (row[j + 1] - 2.0 * row[j] + row[j - 1]) + adv(j) * (row[j + 1] - row[j - 1])
    };

    for i in (0..n).rev() {
        let (head, tail) = u.split_at_mut((i + 1) * nx);
        let next = &tail[..nx];
        let cur = &mut head[i * nx..];
        first_difference(next, dx, &mut ux_next);
        let db = b.step(i);
        let (e_i, e_next) = (bback.at(i), bback.at(i + 1));
        let ux_ref = &ux_next;
        let weight = if scheme == Scheme::Explicit { 1.0 } else { 0.5 };
        par::for_each_block(&mut explicit[1..=space.j], 1, |jj, out| {
            let j = jj + 1;
            let mut f = [0.0];
            let mut g = [0.0; 64];
            let z = [sig[j] * ux_ref[j]];
            let y = [next[j]];
            let x = [xs[j]];
            (coeffs.fbar)(
                &Arg {
                    e: e_i,
                    x: &x,
                    y: &y,
                    z: &z,
                },
                &mut f,
            );
            (coeffs.gbar)(
                &Arg {
                    e: e_next,
                    x: &x,
                    y: &y,
                    z: &z,
                },
                &mut g[..l],
            );
            let mut noise = 0.0;
            for c in 0..l {
                if g[c] != 0.0 {
                    noise += g[c] * db[c];
                }
            }
            out[0] = next[j] + weight * lop(next, j) * dt + f[0] * dt + noise;
        });
        match scheme {
            Scheme::Explicit => cur[1..=space.j].copy_from_slice(&explicit[1..=space.j]),
            Scheme::ThetaImplicit => {
                // (I − ½dt L) u_i = rhs, with the ghost closure folded into
                // the first and last interior rows.
                let m = space.j;
                for r in 0..m {
                    let j = r + 1;
                    let (a, c) = (diff(j) - adv(j), diff(j) + adv(j));
                    lo[r] = -0.5 * dt * a;
                    di[r] = 1.0 + 0.5 * dt * 2.0 * diff(j);
                    up[r] = -0.5 * dt * c;
                    scratch[r] = explicit[j];
                }
                // u_0 = 2u_1 − u_2 and u_{J+1} = 2u_J − u_{J−1}.
                di[0] += 2.0 * lo[0];
                up[0] -= lo[0];
                di[m - 1] += 2.0 * up[m - 1];
                lo[m - 1] -= up[m - 1];
                let mut rhs = scratch[..m].to_vec();
                thomas(&lo[..m], &di[..m], &up[..m], &mut rhs, &mut scratch[..m]);
                cur[1..=m].copy_from_slice(&rhs);
            }
        }
        extrapolate_ghosts(&mut cur[..nx]);
        if cur[..nx].iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "u",
                node: i,
                path: None,
            });
        }
    }

    let mut ux = vec![0.0; (n + 1) * nx];
    let mut uxx = vec![0.0; (n + 1) * nx];
    for i in 0..=n {
        first_difference(&u[i * nx..(i + 1) * nx], dx, &mut ux[i * nx..(i + 1) * nx]);
        second_difference(&u[i * nx..(i + 1) * nx], dx, &mut uxx[i * nx..(i + 1) * nx]);
    }
    Ok(RandomFieldU {
        grid,
        space: *space,
        u,
        ux,
        uxx,
        b_seed: b.seed,
    })
}

impl RandomFieldU {
    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        let nx = self.space.len();
        &self.u[i * nx..(i + 1) * nx]
    }

    #[inline]
    pub fn ux_row(&self, i: usize) -> &[f64] {
        let nx = self.space.len();
        &self.ux[i * nx..(i + 1) * nx]
    }

    /// Cubic Lagrange interpolation of `row` at `x`.
    fn interpolate(&self, row: &[f64], x: f64) -> Result<f64> {
        let s = &self.space;
        if !(x >= s.x_min && x <= s.x_max) {
            return Err(Error::invalid(
                "x",
                format!("{x} lies outside [{}, {}]", s.x_min, s.x_max),
            ));
        }
        let pos = (x - s.x_min) / s.dx;
        let base = (pos.floor() as isize - 1).clamp(0, s.len() as isize - 4) as usize;
        let mut acc = 0.0;
        for a in 0..4 {
            let xa = s.node(base + a);
            let mut w = 1.0;
            for b in 0..4 {
                if a != b {
                    w *= (x - s.node(base + b)) / (xa - s.node(base + b));
                }
            }
            acc += w * row[base + a];
        }
        Ok(acc)
    }

    /// `u(τ_i, x)`.
    pub fn value(&self, i: usize, x: f64) -> Result<f64> {
        self.interpolate(self.row(i), x)
    }

    /// `∂_x u(τ_i, x)`.
    pub fn gradient(&self, i: usize, x: f64) -> Result<f64> {
        self.interpolate(self.ux_row(i), x)
    }

    /// `t,x,u,ux` rows, every node.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "t,x,u,ux")?;
        let nx = self.space.len();
        for i in 0..=self.grid.n {
            let t = self.grid.node(i);
            for j in 0..nx {
                writeln!(
                    w,
                    "{t},{},{},{}",
                    self.space.node(j),
                    self.u[i * nx + j],
                    self.ux[i * nx + j]
                )?;
            }
        }
        Ok(())
    }

    /// Header (magic, version, b seed, N, J, t0, T, x_min, x_max; 64-bit
    /// little-endian) then `u`, `ux`, `uxx` row-major.
    pub fn write_binary(&self, mut w: impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        for v in [
            VERSION,
            self.b_seed,
            self.grid.n as u64,
            self.space.j as u64,
        ] {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in [
            self.grid.t0,
            self.grid.t_end,
            self.space.x_min,
            self.space.x_max,
        ] {
            w.write_all(&v.to_le_bytes())?;
        }
        for arr in [&self.u, &self.ux, &self.uxx] {
            for v in arr.iter() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_binary(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a field dump".into()));
        }
        let mut buf = [0u8; 8];
        let mut next = |r: &mut dyn Read| -> Result<[u8; 8]> {
            r.read_exact(&mut buf)?;
            Ok(buf)
        };
        let version = u64::from_le_bytes(next(&mut r)?);
        if version != VERSION {
            return Err(Error::Format(format!(
                "unsupported field dump version {version}"
            )));
        }
        let b_seed = u64::from_le_bytes(next(&mut r)?);
        let n = u64::from_le_bytes(next(&mut r)?) as usize;
        let j = u64::from_le_bytes(next(&mut r)?) as usize;
        let t0 = f64::from_le_bytes(next(&mut r)?);
        let t_end = f64::from_le_bytes(next(&mut r)?);
        let x_min = f64::from_le_bytes(next(&mut r)?);
        let x_max = f64::from_le_bytes(next(&mut r)?);
        let grid = TimeGrid::new(t0, t_end, n)?;
        let space = SpaceGrid::new(x_min, x_max, j)?;
        let len = (n + 1) * space.len();
        let mut read_arr = || -> Result<Vec<f64>> {
            let mut bytes = vec![0u8; len * 8];
            r.read_exact(&mut bytes)?;
            Ok(bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect())
        };
        let (u, ux, uxx) = (read_arr()?, read_arr()?, read_arr()?);
        Ok(Self {
            grid,
            space,
            u,
            ux,
            uxx,
            b_seed,
        })
    }
}
