//! Discretised Brownian drivers, the backward functional of the B path and
//! the forward/backward Itô sums shared by every solver.
//!
//! W paths come from per-path ChaCha streams of the W seed, so path `m` is
//! the same whatever the path count or thread schedule. The B path is a
//! single realisation drawn from a reserved stream of the B seed.

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::par;

/// Stream reserved for the backward driver.
pub const B_STREAM: u64 = u64::MAX;
/// Stream used when refining the B path by Brownian bridge.
const BRIDGE_STREAM: u64 = u64::MAX - 1;

const DUMP_MAGIC: &[u8; 8] = b"BDSDPATH";
const DUMP_VERSION: u64 = 1;

/// Uniform time grid `t0 = τ_0 < … < τ_N = T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub t0: f64,
    pub t_end: f64,
    pub n: usize,
    pub dt: f64,
}

impl TimeGrid {
    pub fn new(t0: f64, t_end: f64, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("N", "step count must be at least 1"));
        }
        if !(t0.is_finite() && t_end.is_finite()) || t_end <= t0 {
            return Err(Error::invalid(
                "T",
                format!("need t0 < T, got t0 = {t0}, T = {t_end}"),
            ));
        }
        Ok(Self {
            t0,
            t_end,
            n,
            dt: (t_end - t0) / n as f64,
        })
    }

    /// Time of node `i`; the last node is `T` exactly.
    pub fn node(&self, i: usize) -> f64 {
        if i >= self.n {
            self.t_end
        } else {
            self.t0 + i as f64 * self.dt
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.n).map(|i| self.node(i)).collect()
    }

    /// Same step count and endpoints up to rounding; grids reached by
    /// different coarsen/tail sequences compare equal here.
    pub fn matches(&self, other: &TimeGrid) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs()));
        self.n == other.n
            && close(self.t0, other.t0)
            && close(self.t_end, other.t_end)
            && close(self.dt, other.dt)
    }

    /// Grid made of every `factor`-th node.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || self.n % factor != 0 {
            return Err(Error::invalid(
                "factor",
                format!("{factor} does not divide N = {}", self.n),
            ));
        }
        TimeGrid::new(self.t0, self.t_end, self.n / factor)
    }

    /// Grid on `[τ_i, T]`.
    pub fn tail(&self, i: usize) -> Result<Self> {
        if i >= self.n {
            return Err(Error::IndexOutOfRange {
                field: "node",
                index: i,
                len: self.n,
            });
        }
        Ok(Self {
            t0: self.node(i),
            t_end: self.t_end,
            n: self.n - i,
            dt: self.dt,
        })
    }

    /// Index of the node at time `t`, if `t` lies on the grid.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let r = (t - self.t0) / self.dt;
        let i = r.round();
        if i < 0.0 || i > self.n as f64 || (r - i).abs() > 1e-9 {
            None
        } else {
            Some(i as usize)
        }
    }
}

/// Forward increments `dW`, laid out `M × N × d` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct WIncrements {
    pub grid: TimeGrid,
    pub m: usize,
    pub d: usize,
    pub dw: Vec<f64>,
    pub seed: u64,
    pub stream_ids: Vec<u64>,
}

impl WIncrements {
    pub fn generate(seed: u64, grid: TimeGrid, m: usize, d: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::invalid("M", "path count must be at least 1"));
        }
        if d == 0 {
            return Err(Error::invalid("d", "W dimension must be at least 1"));
        }
        let stride = grid.n * d;
        let sd = grid.dt.sqrt();
        let mut dw = vec![0.0; m * stride];
        par::for_each_block(&mut dw, stride, |path, block| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(path as u64);
            for v in block.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v = sd * z;
            }
        });
        Ok(Self {
            grid,
            m,
            d,
            dw,
            seed,
            stream_ids: (0..m as u64).collect(),
        })
    }

    #[inline]
    pub fn step(&self, path: usize, i: usize) -> &[f64] {
        let o = (path * self.grid.n + i) * self.d;
        &self.dw[o..o + self.d]
    }

    /// Sums consecutive blocks of `factor` increments.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        let grid = self.grid.coarsen(factor)?;
        let (n, d) = (grid.n, self.d);
        let mut dw = vec![0.0; self.m * n * d];
        par::for_each_block(&mut dw, n * d, |path, block| {
            for i in 0..n {
                for r in 0..factor {
                    let src = self.step(path, i * factor + r);
                    for c in 0..d {
                        block[i * d + c] += src[c];
                    }
                }
            }
        });
        Ok(Self {
            grid,
            m: self.m,
            d,
            dw,
            seed: self.seed,
            stream_ids: self.stream_ids.clone(),
        })
    }

    /// The first `m` paths.
    pub fn take_paths(&self, m: usize) -> Result<Self> {
        if m == 0 || m > self.m {
            return Err(Error::invalid(
                "M",
                format!("cannot take {m} of {} paths", self.m),
            ));
        }
        let stride = self.grid.n * self.d;
        Ok(Self {
            grid: self.grid,
            m,
            d: self.d,
            dw: self.dw[..m * stride].to_vec(),
            seed: self.seed,
            stream_ids: self.stream_ids[..m].to_vec(),
        })
    }

    /// Increments on `[τ_i, T]` for every path.
    pub fn tail(&self, i: usize) -> Result<Self> {
        let grid = self.grid.tail(i)?;
        let (n, d) = (self.grid.n, self.d);
        let mut dw = Vec::with_capacity(self.m * grid.n * d);
        for path in 0..self.m {
            dw.extend_from_slice(&self.dw[(path * n + i) * d..(path + 1) * n * d]);
        }
        Ok(Self {
            grid,
            m: self.m,
            d,
            dw,
            seed: self.seed,
            stream_ids: self.stream_ids.clone(),
        })
    }
}

/// One realisation of the backward driver, `N × l` increments.
#[derive(Debug, Clone, PartialEq)]
pub struct BPath {
    pub grid: TimeGrid,
    pub l: usize,
    pub db: Vec<f64>,
    pub seed: u64,
}

impl BPath {
    pub fn generate(seed: u64, grid: TimeGrid, l: usize) -> Result<Self> {
        if l == 0 {
            return Err(Error::invalid("l", "B dimension must be at least 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(B_STREAM);
        let sd = grid.dt.sqrt();
        let db = (0..grid.n * l)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                sd * z
            })
            .collect();
        Ok(Self { grid, l, db, seed })
    }

    #[inline]
    pub fn step(&self, i: usize) -> &[f64] {
        &self.db[i * self.l..(i + 1) * self.l]
    }

    /// Cumulative values `B_{τ_i} − B_{τ_0}`, `(N+1) × l`.
    pub fn cumulative(&self) -> Vec<f64> {
        let mut out = vec![0.0; (self.grid.n + 1) * self.l];
        for i in 0..self.grid.n {
            for c in 0..self.l {
                out[(i + 1) * self.l + c] = out[i * self.l + c] + self.db[i * self.l + c];
            }
        }
        out
    }

    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        let grid = self.grid.coarsen(factor)?;
        let l = self.l;
        let mut db = vec![0.0; grid.n * l];
        for i in 0..grid.n {
            for r in 0..factor {
                for c in 0..l {
                    db[i * l + c] += self.db[(i * factor + r) * l + c];
                }
            }
        }
        Ok(Self {
            grid,
            l,
            db,
            seed: self.seed,
        })
    }

    /// Brownian-bridge refinement: splits every increment into `factor`
    /// pieces drawn conditionally on their sum, so this path is exactly the
    /// coarsening of the result.
    pub fn refine(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::invalid("factor", "must be at least 1"));
        }
        let grid = TimeGrid::new(self.grid.t0, self.grid.t_end, self.grid.n * factor)?;
        let l = self.l;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ (factor as u64).rotate_left(17));
        rng.set_stream(BRIDGE_STREAM);
        let sd = grid.dt.sqrt();
        let mut db = vec![0.0; grid.n * l];
        let mut xi = vec![0.0; factor];
        for i in 0..self.grid.n {
            for c in 0..l {
                for v in xi.iter_mut() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *v = sd * z;
                }
                let excess = (xi.iter().sum::<f64>() - self.db[i * l + c]) / factor as f64;
                for (r, v) in xi.iter().enumerate() {
                    db[(i * factor + r) * l + c] = v - excess;
                }
            }
        }
        Ok(Self {
            grid,
            l,
            db,
            seed: self.seed,
        })
    }

    /// Increments on `[τ_i, T]`.
    pub fn tail(&self, i: usize) -> Result<Self> {
        Ok(Self {
            grid: self.grid.tail(i)?,
            l: self.l,
            db: self.db[i * self.l..].to_vec(),
            seed: self.seed,
        })
    }
}

/// Both drivers on a common grid: `M` forward paths and one B path.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianBundle {
    pub w: WIncrements,
    pub b: BPath,
}

impl BrownianBundle {
    pub fn from_parts(w: WIncrements, b: BPath) -> Result<Self> {
        if !w.grid.matches(&b.grid) {
            return Err(Error::invalid(
                "grid",
                "W and B increments live on different grids",
            ));
        }
        Ok(Self { w, b })
    }

    pub fn grid(&self) -> TimeGrid {
        self.w.grid
    }

    pub fn m(&self) -> usize {
        self.w.m
    }

    pub fn d(&self) -> usize {
        self.w.d
    }

    pub fn l(&self) -> usize {
        self.b.l
    }

    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        Self::from_parts(self.w.coarsen(factor)?, self.b.coarsen(factor)?)
    }

    pub fn tail(&self, i: usize) -> Result<Self> {
        Self::from_parts(self.w.tail(i)?, self.b.tail(i)?)
    }
}

/// Generates a bundle whose W and B parts both derive from `seed`.
pub fn gen_bundle(
    seed: u64,
    grid: TimeGrid,
    m: usize,
    d: usize,
    l: usize,
) -> Result<BrownianBundle> {
    let w = WIncrements::generate(seed, grid, m, d)?;
    let b = BPath::generate(seed, grid, l)?;
    BrownianBundle::from_parts(w, b)
}

/// Evaluation point of the integrand on each subinterval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Quadrature {
    /// Backward Itô: integrand taken at `τ_{j+1}`.
    #[default]
    Right,
    /// Forward Itô: integrand taken at `τ_j`.
    Left,
}

/// `←B_{τ_i} = ∫_{τ_i}^T φ(s) dB_s` at every node.
#[derive(Debug, Clone, PartialEq)]
pub struct BackwardBFunctional {
    pub grid: TimeGrid,
    pub l: usize,
    /// φ sampled at the nodes, `(N+1) × l`.
    pub phi: Vec<f64>,
    /// `(N+1) × l`; the last row is zero.
    pub values: Vec<f64>,
}

impl BackwardBFunctional {
    #[inline]
    pub fn at(&self, i: usize) -> &[f64] {
        &self.values[i * self.l..(i + 1) * self.l]
    }

    /// Values on every `factor`-th node of the grid they were computed on.
    pub fn restrict(&self, factor: usize) -> Result<Self> {
        let grid = self.grid.coarsen(factor)?;
        let l = self.l;
        let pick = |v: &[f64]| -> Vec<f64> {
            (0..=grid.n)
                .flat_map(|i| v[i * factor * l..(i * factor + 1) * l].iter().copied())
                .collect()
        };
        Ok(Self {
            grid,
            l,
            phi: pick(&self.phi),
            values: pick(&self.values),
        })
    }

    /// Values on `[τ_i, T]`.
    pub fn tail(&self, i: usize) -> Result<Self> {
        Ok(Self {
            grid: self.grid.tail(i)?,
            l: self.l,
            phi: self.phi[i * self.l..].to_vec(),
            values: self.values[i * self.l..].to_vec(),
        })
    }
}

/// Right-endpoint backward functional of `phi` along `b`.
pub fn backward_b<F>(phi: F, b: &BPath) -> BackwardBFunctional
where
    F: Fn(f64, &mut [f64]),
{
    backward_b_with(phi, b, Quadrature::Right)
}

pub fn backward_b_with<F>(phi: F, b: &BPath, rule: Quadrature) -> BackwardBFunctional
where
    F: Fn(f64, &mut [f64]),
{
    let (n, l) = (b.grid.n, b.l);
    let mut phi_nodes = vec![0.0; (n + 1) * l];
    for i in 0..=n {
        phi(b.grid.node(i), &mut phi_nodes[i * l..(i + 1) * l]);
    }
    let mut values = vec![0.0; (n + 1) * l];
    for j in (0..n).rev() {
        let at = match rule {
            Quadrature::Right => j + 1,
            Quadrature::Left => j,
        };
        for c in 0..l {
            let w = phi_nodes[at * l + c];
            let mut v = values[(j + 1) * l + c];
            // φ ≡ 0 must leave the functional untouched bit for bit.
            if w != 0.0 {
                v += w * b.db[j * l + c];
            }
            values[j * l + c] = v;
        }
    }
    BackwardBFunctional {
        grid: b.grid,
        l,
        phi: phi_nodes,
        values,
    }
}

/// `Σ_{j=i0}^{i1-1} integrand[j+1] · dB_j` for a `(N+1) × k × l` integrand.
pub fn backward_ito_sum(
    integrand: &[f64],
    k: usize,
    b: &BPath,
    i0: usize,
    i1: usize,
) -> Result<Vec<f64>> {
    ito_sum(integrand, k, b, i0, i1, Quadrature::Right)
}

/// [`backward_ito_sum`] with a selectable evaluation point.
pub fn ito_sum(
    integrand: &[f64],
    k: usize,
    b: &BPath,
    i0: usize,
    i1: usize,
    rule: Quadrature,
) -> Result<Vec<f64>> {
    let (n, l) = (b.grid.n, b.l);
    if i1 > n {
        return Err(Error::IndexOutOfRange {
            field: "i1",
            index: i1,
            len: n + 1,
        });
    }
    if i0 > i1 {
        return Err(Error::invalid("i0", format!("i0 = {i0} exceeds i1 = {i1}")));
    }
    if integrand.len() != (n + 1) * k * l {
        return Err(Error::invalid(
            "integrand",
            format!(
                "expected {} values, got {}",
                (n + 1) * k * l,
                integrand.len()
            ),
        ));
    }
    let mut out = vec![0.0; k];
    for j in i0..i1 {
        let at = match rule {
            Quadrature::Right => j + 1,
            Quadrature::Left => j,
        };
        let g = &integrand[at * k * l..(at + 1) * k * l];
        let db = b.step(j);
        for (a, o) in out.iter_mut().enumerate() {
            for c in 0..l {
                *o += g[a * l + c] * db[c];
            }
        }
    }
    Ok(out)
}

fn put_u64(w: &mut impl Write, v: u64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn put_f64(w: &mut impl Write, v: f64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn get_u64(r: &mut impl Read) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn get_f64(r: &mut impl Read) -> std::io::Result<f64> {
    Ok(f64::from_bits(get_u64(r)?))
}

/// Writes the path-dump format: magic, version, seed, N, M, d, l, t0, T
/// (little-endian 64-bit), then `dW` and `dB` row-major as `f64`.
///
/// The header carries the W seed; the increments themselves are the
/// authority when the B path came from a different seed.
pub fn write_bundle(bundle: &BrownianBundle, mut w: impl Write) -> Result<()> {
    let g = bundle.grid();
    w.write_all(DUMP_MAGIC)?;
    put_u64(&mut w, DUMP_VERSION)?;
    put_u64(&mut w, bundle.w.seed)?;
    put_u64(&mut w, g.n as u64)?;
    put_u64(&mut w, bundle.m() as u64)?;
    put_u64(&mut w, bundle.d() as u64)?;
    put_u64(&mut w, bundle.l() as u64)?;
    put_f64(&mut w, g.t0)?;
    put_f64(&mut w, g.t_end)?;
    for v in bundle.w.dw.iter().chain(bundle.b.db.iter()) {
        put_f64(&mut w, *v)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_bundle(mut r: impl Read) -> Result<BrownianBundle> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != DUMP_MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = get_u64(&mut r)?;
    if version != DUMP_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let seed = get_u64(&mut r)?;
    let n = get_u64(&mut r)? as usize;
    let m = get_u64(&mut r)? as usize;
    let d = get_u64(&mut r)? as usize;
    let l = get_u64(&mut r)? as usize;
    let t0 = get_f64(&mut r)?;
    let t_end = get_f64(&mut r)?;
    let grid = TimeGrid::new(t0, t_end, n)?;
    if m == 0 || d == 0 || l == 0 {
        return Err(Error::Format("zero dimension in header".into()));
    }
    let read_vec = |r: &mut dyn Read, len: usize| -> std::io::Result<Vec<f64>> {
        let mut bytes = vec![0u8; len * 8];
        r.read_exact(&mut bytes)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    };
    let dw = read_vec(&mut r, m * n * d)?;
    let db = read_vec(&mut r, n * l)?;
    let w = WIncrements {
        grid,
        m,
        d,
        dw,
        seed,
        stream_ids: (0..m as u64).collect(),
    };
    let b = BPath { grid, l, db, seed };
    BrownianBundle::from_parts(w, b)
}
