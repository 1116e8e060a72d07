//! Cross-sectional least squares used as the conditional expectation given
//! the forward state at one node.
//!
//! Polynomial bases are probabilists' Hermite polynomials of the
//! standardised state (total degree ≤ `degree`), which keeps the Gram matrix
//! close to diagonal for near-Gaussian clouds. Responses are centred
//! before the solve, so shifting every response by a constant shifts the
//! fit by that constant whatever the ridge.

use nalgebra::{Cholesky, DMatrix, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BasisKind {
    GlobalPolynomial { degree: usize },
    PiecewiseLinear { bins: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressionSpec {
    pub basis: BasisKind,
    pub ridge: f64,
}

impl Default for RegressionSpec {
    fn default() -> Self {
        Self {
            basis: BasisKind::GlobalPolynomial { degree: 3 },
            ridge: 1e-8,
        }
    }
}

impl RegressionSpec {
    pub fn polynomial(degree: usize) -> Self {
        Self {
            basis: BasisKind::GlobalPolynomial { degree },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return Err(Error::invalid("ridge", "must be finite and non-negative"));
        }
        if let BasisKind::PiecewiseLinear { bins: 0 } = self.basis {
            return Err(Error::invalid("bins", "must be at least 1"));
        }
        Ok(())
    }
}

/// A basis adapted to the sample cloud it was built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Basis {
    pub kind: BasisKind,
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
    /// Coordinates with non-degenerate spread.
    pub active: Vec<bool>,
    /// Polynomial multi-indices, one per basis function.
    terms: Vec<Vec<u32>>,
    /// Piecewise-linear knot ranges `(lo, width)` per coordinate.
    knots: Vec<(f64, f64)>,
    len: usize,
}

fn hermite(u: f64, n: u32) -> f64 {
    match n {
        0 => 1.0,
        1 => u,
        _ => {
            let (mut a, mut b) = (1.0, u);
            for k in 1..n {
                let c = u * b - k as f64 * a;
                a = b;
                b = c;
            }
            b
        }
    }
}

fn multi_indices(active: &[usize], d: usize, degree: u32) -> Vec<Vec<u32>> {
    let mut out = vec![vec![0u32; d]];
    for total in 1..=degree {
        let mut acc = Vec::new();
        rec(active, 0, total, &mut vec![0u32; d], &mut acc);
        out.extend(acc);
    }
    out
}

fn rec(active: &[usize], from: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if left == 0 {
        out.push(cur.clone());
        return;
    }
    for (pos, &c) in active.iter().enumerate().skip(from) {
        cur[c] += 1;
        rec(active, pos, left - 1, cur, out);
        cur[c] -= 1;
    }
}

impl Basis {
    /// Builds the basis from the `m` points returned by `point`.
    pub fn fit<'a, P>(kind: BasisKind, m: usize, d: usize, point: P) -> Self
    where
        P: Fn(usize) -> &'a [f64] + Sync + Send,
    {
        #[derive(Clone)]
        struct Acc {
            sum: Vec<f64>,
            lo: Vec<f64>,
            hi: Vec<f64>,
        }
        let stats = par::reduce(
            m,
            || Acc {
                sum: vec![0.0; d],
                lo: vec![f64::INFINITY; d],
                hi: vec![f64::NEG_INFINITY; d],
            },
            |a, i| {
                let x = point(i);
                for c in 0..d {
                    a.sum[c] += x[c];
                    a.lo[c] = a.lo[c].min(x[c]);
                    a.hi[c] = a.hi[c].max(x[c]);
                }
            },
            |a, b| {
                for c in 0..d {
                    a.sum[c] += b.sum[c];
                    a.lo[c] = a.lo[c].min(b.lo[c]);
                    a.hi[c] = a.hi[c].max(b.hi[c]);
                }
            },
        );
        let center: Vec<f64> = stats.sum.iter().map(|s| s / m as f64).collect();
        let var = par::reduce(
            m,
            || vec![0.0; d],
            |a, i| {
                let x = point(i);
                for c in 0..d {
                    a[c] += (x[c] - center[c]).powi(2);
                }
            },
            |a, b| a.iter_mut().zip(b).for_each(|(x, y)| *x += y),
        );
        let scale: Vec<f64> = var.iter().map(|v| (v / m as f64).sqrt()).collect();
        let active: Vec<bool> = (0..d)
            .map(|c| m > 1 && scale[c] > 1e-12 * (1.0 + center[c].abs()))
            .collect();
        let act: Vec<usize> = (0..d).filter(|&c| active[c]).collect();
        let (terms, knots, len) = match kind {
            BasisKind::GlobalPolynomial { degree } => {
                let t = multi_indices(&act, d, degree as u32);
                let len = t.len();
                (t, Vec::new(), len)
            }
            BasisKind::PiecewiseLinear { bins } => {
                let knots: Vec<(f64, f64)> = (0..d)
                    .map(|c| (stats.lo[c], (stats.hi[c] - stats.lo[c]) / bins as f64))
                    .collect();
                let len = if act.is_empty() {
                    1
                } else {
                    (bins + 1) + (act.len() - 1) * bins
                };
                (Vec::new(), knots, len)
            }
        };
        Self {
            kind,
            center,
            scale,
            active,
            terms,
            knots,
            len,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Basis functions whose sum is identically one: the constant term,
    /// or the hats of the first active coordinate.
    pub fn unit_terms(&self) -> std::ops::Range<usize> {
        match self.kind {
            BasisKind::PiecewiseLinear { bins } if !self.is_constant() => 0..bins + 1,
            _ => 0..1,
        }
    }

    /// Whether only the constant function survived (degenerate cloud).
    pub fn is_constant(&self) -> bool {
        self.len == 1
    }

    /// Penalty weight of each basis function relative to the ridge.
    fn penalised(&self, j: usize) -> bool {
        match self.kind {
            BasisKind::GlobalPolynomial { .. } => j != 0,
            BasisKind::PiecewiseLinear { .. } => !self.is_constant(),
        }
    }

    pub fn eval(&self, x: &[f64], out: &mut [f64]) {
        match self.kind {
            BasisKind::GlobalPolynomial { degree } => {
                let d = x.len();
                let mut he = [[0.0f64; 16]; 8];
                let deg = degree.min(15);
                for c in 0..d.min(8) {
                    if self.active[c] {
                        let u = (x[c] - self.center[c]) / self.scale[c];
                        for n in 0..=deg {
                            he[c][n] = hermite(u, n as u32);
                        }
                    }
                }
                for (o, t) in out.iter_mut().zip(&self.terms) {
                    let mut v = 1.0;
                    for (c, &p) in t.iter().enumerate() {
                        if p > 0 {
                            v *= if c < 8 && (p as usize) <= deg {
                                he[c][p as usize]
                            } else {
                                hermite((x[c] - self.center[c]) / self.scale[c], p)
                            };
                        }
                    }
                    *o = v;
                }
            }
            BasisKind::PiecewiseLinear { bins } => {
                out[..self.len].fill(0.0);
                if self.is_constant() {
                    out[0] = 1.0;
                    return;
                }
                let mut offset = 0;
                let mut first = true;
                for (c, &xc) in x.iter().enumerate() {
                    if !self.active[c] {
                        continue;
                    }
                    let (lo, w) = self.knots[c];
                    let r = ((xc - lo) / w).clamp(0.0, bins as f64);
                    let cell = (r.floor() as usize).min(bins - 1);
                    let frac = r - cell as f64;
                    // hats at knots `cell` and `cell + 1`; later coordinates
                    // drop their first hat to avoid a second constant.
                    let mut put = |knot: usize, v: f64| {
                        if first {
                            out[offset + knot] += v;
                        } else if knot > 0 {
                            out[offset + knot - 1] += v;
                        }
                    };
                    put(cell, 1.0 - frac);
                    put(cell + 1, frac);
                    offset += if first { bins + 1 } else { bins };
                    first = false;
                }
            }
        }
    }
}

/// Basis, design matrix and factored Gram matrix of one node.
pub struct Regressor {
    pub basis: Basis,
    /// `M × p` basis evaluations.
    design: Vec<f64>,
    chol: Cholesky<f64, Dyn>,
    pub m: usize,
    pub ridge_used: f64,
    pub warning: Option<String>,
}

impl Regressor {
    pub fn new<'a, P>(spec: &RegressionSpec, m: usize, d: usize, point: P) -> Result<Self>
    where
        P: Fn(usize) -> &'a [f64] + Sync + Send,
    {
        let basis = Basis::fit(spec.basis, m, d, &point);
        let p = basis.len();
        let mut design = vec![0.0; m * p];
        par::for_each_block(&mut design, p, |i, row| basis.eval(point(i), row));
        let gram_flat = par::reduce(
            m,
            || vec![0.0; p * p],
            |acc, i| {
                let row = &design[i * p..(i + 1) * p];
                for a in 0..p {
                    let ra = row[a];
                    if ra != 0.0 {
                        for b in a..p {
                            acc[a * p + b] += ra * row[b];
                        }
                    }
                }
            },
            |a, b| a.iter_mut().zip(b).for_each(|(x, y)| *x += y),
        );
        let mut gram = DMatrix::zeros(p, p);
        for a in 0..p {
            for b in a..p {
                let v = gram_flat[a * p + b] / m as f64;
                gram[(a, b)] = v;
                gram[(b, a)] = v;
            }
        }
        let mut ridge = spec.ridge;
        let mut warning = None;
        let scale = (0..p).map(|j| gram[(j, j)]).sum::<f64>() / p as f64;
        let chol = loop {
            let mut g = gram.clone();
            for j in 0..p {
                if basis.penalised(j) {
                    g[(j, j)] += ridge;
                }
            }
            if let Some(c) = Cholesky::new(g) {
                break c;
            }
            let next = if ridge == 0.0 {
                1e-12 * scale.max(1e-300)
            } else {
                ridge * 100.0
            };
            if !next.is_finite() || next > 1e6 * scale.max(1.0) {
                return Err(Error::invalid(
                    "regression",
                    "Gram matrix cannot be factored",
                ));
            }
            warning = Some(format!(
                "rank-deficient regression; ridge raised to {next:.3e}"
            ));
            ridge = next;
        };
        if m == 1 {
            warning = Some("single path: regression collapses to the path value".into());
        }
        Ok(Self {
            basis,
            design,
            chol,
            m,
            ridge_used: ridge,
            warning,
        })
    }

    pub fn p(&self) -> usize {
        self.basis.len()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.p();
        &self.design[i * p..(i + 1) * p]
    }

    /// Regresses the `q` responses returned by `response` on the basis;
    /// returns `p × q` coefficients, row-major.
    ///
    /// Responses are centred before the solve and their mean is added
    /// back along [`Basis::unit_terms`], so a constant shift of every
    /// response moves the fit by that constant up to one rounding.
    pub fn fit<R>(&self, q: usize, response: R) -> Vec<f64>
    where
        R: Fn(usize, &mut [f64]) + Sync + Send,
    {
        let p = self.p();
        let mut resp = vec![0.0; self.m * q];
        par::for_each_block(&mut resp, q, |i, buf| response(i, buf));
        let mean: Vec<f64> = par::reduce(
            self.m,
            || vec![0.0; q],
            |acc, i| {
                for j in 0..q {
                    acc[j] += resp[i * q + j];
                }
            },
            |a, b| a.iter_mut().zip(b).for_each(|(x, y)| *x += y),
        )
        .into_iter()
        .map(|s| s / self.m as f64)
        .collect();
        let rhs = par::reduce(
            self.m,
            || vec![0.0; p * q],
            |acc, i| {
                let buf = &resp[i * q..(i + 1) * q];
                let row = self.row(i);
                for a in 0..p {
                    let ra = row[a];
                    if ra != 0.0 {
                        for j in 0..q {
                            acc[a * q + j] += ra * (buf[j] - mean[j]);
                        }
                    }
                }
            },
            |a, b| a.iter_mut().zip(b).for_each(|(x, y)| *x += y),
        );
        let b = DMatrix::from_fn(p, q, |a, j| rhs[a * q + j] / self.m as f64);
        let sol = self.chol.solve(&b);
        let mut out = vec![0.0; p * q];
        for a in 0..p {
            for j in 0..q {
                out[a * q + j] = sol[(a, j)];
            }
        }
        for a in self.basis.unit_terms() {
            for j in 0..q {
                out[a * q + j] += mean[j];
            }
        }
        out
    }

    /// Fitted values of path `i` for coefficients `coef` (`p × q`).
    #[inline]
    pub fn fitted(&self, i: usize, coef: &[f64], q: usize, out: &mut [f64]) {
        predict_row(self.row(i), coef, q, out);
    }
}

#[inline]
pub fn predict_row(row: &[f64], coef: &[f64], q: usize, out: &mut [f64]) {
    out[..q].fill(0.0);
    for (a, &ra) in row.iter().enumerate() {
        if ra != 0.0 {
            for j in 0..q {
                out[j] += ra * coef[a * q + j];
            }
        }
    }
}

/// Evaluates a fitted regression at an arbitrary point.
pub fn predict(basis: &Basis, coef: &[f64], q: usize, x: &[f64], out: &mut [f64]) {
    let mut row = vec![0.0; basis.len()];
    basis.eval(x, &mut row);
    predict_row(&row, coef, q, out);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud(m: usize) -> Vec<f64> {
        (0..m)
            .map(|i| ((i as f64) * 0.618_033_988_7).fract() * 4.0 - 2.0)
            .collect()
    }

    #[test]
    fn cubic_is_reproduced_exactly() {
        let xs = cloud(500);
        let reg =
            Regressor::new(&RegressionSpec::polynomial(3), 500, 1, |i| &xs[i..i + 1]).unwrap();
        let f = |x: f64| 1.0 - 2.0 * x + 0.5 * x * x * x;
        let coef = reg.fit(1, |i, out| out[0] = f(xs[i]));
        let mut v = [0.0];
        predict(&reg.basis, &coef, 1, &[0.37], &mut v);
        assert!((v[0] - f(0.37)).abs() < 1e-6);
    }

    #[test]
    fn constant_shift_passes_through() {
        let xs = cloud(300);
        let reg = Regressor::new(&RegressionSpec::default(), 300, 1, |i| &xs[i..i + 1]).unwrap();
        let a = reg.fit(1, |i, out| out[0] = (3.0 * xs[i]).sin());
        let b = reg.fit(1, |i, out| out[0] = (3.0 * xs[i]).sin() + 0.75);
        assert!((b[0] - a[0] - 0.75).abs() < 1e-14);
        for j in 1..a.len() {
            assert!((b[j] - a[j]).abs() < 1e-14);
        }
    }

    #[test]
    fn constant_shift_passes_through_penalised_hats() {
        let xs = cloud(400);
        let spec = RegressionSpec {
            basis: BasisKind::PiecewiseLinear { bins: 6 },
            ridge: 1e-2,
        };
        let reg = Regressor::new(&spec, 400, 1, |i| &xs[i..i + 1]).unwrap();
        let a = reg.fit(1, |i, out| out[0] = xs[i].cos());
        let b = reg.fit(1, |i, out| out[0] = xs[i].cos() - 2.5);
        for x in [-1.7, -0.2, 0.9, 1.95] {
            let (mut va, mut vb) = ([0.0], [0.0]);
            predict(&reg.basis, &a, 1, &[x], &mut va);
            predict(&reg.basis, &b, 1, &[x], &mut vb);
            assert!((vb[0] - va[0] + 2.5).abs() < 1e-13);
        }
    }

    #[test]
    fn degenerate_cloud_gives_the_mean() {
        let xs = vec![0.3; 10];
        let reg = Regressor::new(&RegressionSpec::default(), 10, 1, |i| &xs[i..i + 1]).unwrap();
        assert!(reg.basis.is_constant());
        let c = reg.fit(1, |i, out| out[0] = i as f64);
        assert!((c[0] - 4.5).abs() < 1e-14);
    }

    #[test]
    fn single_path_is_flagged() {
        let xs = vec![1.0];
        let reg = Regressor::new(&RegressionSpec::default(), 1, 1, |i| &xs[i..i + 1]).unwrap();
        assert!(reg.warning.is_some());
        assert_eq!(reg.fit(1, |_, o| o[0] = 2.5), vec![2.5]);
    }

    #[test]
    fn piecewise_linear_reproduces_hat_interpolant() {
        let xs = cloud(400);
        let spec = RegressionSpec {
            basis: BasisKind::PiecewiseLinear { bins: 4 },
            ridge: 0.0,
        };
        let reg = Regressor::new(&spec, 400, 1, |i| &xs[i..i + 1]).unwrap();
        assert_eq!(reg.p(), 5);
        let coef = reg.fit(1, |i, o| o[0] = 2.0 * xs[i] + 1.0);
        let mut v = [0.0];
        predict(&reg.basis, &coef, 1, &[0.1], &mut v);
        assert!((v[0] - 1.2).abs() < 1e-9);
    }

    #[test]
    fn two_dimensional_total_degree() {
        let m = 400;
        let pts: Vec<f64> = (0..m)
            .flat_map(|i| {
                let a = ((i as f64) * 0.618_033_988_7).fract() * 2.0 - 1.0;
                let b = ((i as f64) * 0.414_213_562_3).fract() * 2.0 - 1.0;
                [a, b]
            })
            .collect();
        let reg = Regressor::new(&RegressionSpec::polynomial(2), m, 2, |i| {
            &pts[2 * i..2 * i + 2]
        })
        .unwrap();
        assert_eq!(reg.p(), 6);
        let coef = reg.fit(1, |i, o| o[0] = pts[2 * i] * pts[2 * i + 1] + 0.5);
        let mut v = [0.0];
        predict(&reg.basis, &coef, 1, &[0.3, -0.4], &mut v);
        assert!((v[0] - (0.5 - 0.12)).abs() < 1e-6);
    }

    #[test]
    fn invalid_specs() {
        assert!(RegressionSpec {
            ridge: -1.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        let s = RegressionSpec {
            basis: BasisKind::PiecewiseLinear { bins: 0 },
            ridge: 0.0,
        };
        assert!(s.validate().is_err());
    }
}
