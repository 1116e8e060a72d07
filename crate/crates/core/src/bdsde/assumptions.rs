//! Sample-based checks of the Lipschitz/contraction condition (H1), the
//! growth condition (H2) and the `Z`-contraction condition (H3).
//!
//! (H1): `|f(y,z) − f(y',z')|² ≤ c(|y−y'|² + ‖z−z'‖²)` and
//! `‖g(y,z) − g(y',z')‖² ≤ c|y−y'|² + α‖z−z'‖²`, uniformly in `(e, x)`.
//! (H2): `g gᵀ(y,z) ≤ z zᵀ + C(‖g(0,0)‖² + |y|²) I` as `k × k` matrices.
//! (H3): `(g'_z θ)(g'_z θ)ᵀ ≤ θ θᵀ` for `θ ∈ ℝ^{k×d}`.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coeffs::{Arg, CoefficientSet, DriverFn};
use crate::error::{Error, Result};

/// Witnesses kept per assumption.
const MAX_WITNESSES: usize = 5;
/// Step for the difference quotients.
const FD_STEP: f64 = 1e-4;

/// Sampling box; each bound applies to every component of its argument.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainBox {
    pub e: [f64; 2],
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub z: [f64; 2],
}

impl Default for DomainBox {
    fn default() -> Self {
        Self {
            e: [-2.0, 2.0],
            x: [-3.0, 3.0],
            y: [-3.0, 3.0],
            z: [-3.0, 3.0],
        }
    }
}

impl DomainBox {
    fn validate(&self) -> Result<()> {
        for (name, [lo, hi]) in [("e", self.e), ("x", self.x), ("y", self.y), ("z", self.z)] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::invalid(
                    "domain_box",
                    format!("bound `{name}` must be finite with lo ≤ hi"),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SamplePoint {
    pub e: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub assumption: &'static str,
    pub detail: String,
    pub point: SamplePoint,
}

#[derive(Debug, Clone, Serialize)]
pub struct AssumptionReport {
    pub samples: usize,
    /// Smallest `c` consistent with the samples, `max(c_f, c_g)`.
    pub c_hat: f64,
    pub c_f: f64,
    pub c_g: f64,
    /// Smallest `α` consistent with the samples.
    pub alpha_hat: f64,
    /// Same quantities from random-direction difference quotients.
    pub c_hat_fd: f64,
    pub alpha_hat_fd: f64,
    pub h2_constant: f64,
    /// Smallest eigenvalue of `θθᵀ − (g'_zθ)(g'_zθ)ᵀ` seen.
    pub h3_min_eigenvalue: f64,
    pub h1_holds: bool,
    pub h2_holds: bool,
    pub h3_holds: bool,
    pub violations: Vec<Violation>,
}

fn uniform(rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2], n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| {
            if lo == hi {
                lo
            } else {
                rng.random_range(lo..=hi)
            }
        })
        .collect()
}

fn op_norm_sq(a: &[f64], rows: usize, cols: usize) -> f64 {
    if rows == 0 || cols == 0 {
        return 0.0;
    }
    let m = DMatrix::from_row_slice(rows, cols, a);
    let gram = m.transpose() * &m;
    SymmetricEigen::new(gram).eigenvalues.max().max(0.0)
}

fn eval(f: &DriverFn, p: &SamplePoint, out: &mut [f64]) {
    f(
        &Arg {
            e: &p.e,
            x: &p.x,
            y: &p.y,
            z: &p.z,
        },
        out,
    );
}

/// `(g'_z θ)` as a `k × l` matrix, analytic when available, else central
/// difference along `θ`.
fn gz_apply(coeffs: &CoefficientSet, p: &SamplePoint, theta: &[f64]) -> Vec<f64> {
    let dims = coeffs.dims;
    let (kl, kd) = (dims.g_len(), dims.z_len());
    match &coeffs.derivatives {
        Some(der) => {
            let mut gz = vec![0.0; kl * kd];
            eval(&der.g_z, p, &mut gz);
            (0..kl)
                .map(|r| (0..kd).map(|c| gz[r * kd + c] * theta[c]).sum())
                .collect()
        }
        None => {
            let mut plus = p.clone();
            let mut minus = p.clone();
            for c in 0..kd {
                plus.z[c] += FD_STEP * theta[c];
                minus.z[c] -= FD_STEP * theta[c];
            }
            let (mut gp, mut gm) = (vec![0.0; kl], vec![0.0; kl]);
            eval(&coeffs.gbar, &plus, &mut gp);
            eval(&coeffs.gbar, &minus, &mut gm);
            gp.iter()
                .zip(&gm)
                .map(|(a, b)| (a - b) / (2.0 * FD_STEP))
                .collect()
        }
    }
}

fn push(
    violations: &mut Vec<Violation>,
    assumption: &'static str,
    detail: String,
    point: &SamplePoint,
) {
    if violations
        .iter()
        .filter(|v| v.assumption == assumption)
        .count()
        < MAX_WITNESSES
    {
        violations.push(Violation {
            assumption,
            detail,
            point: point.clone(),
        });
    }
}

/// Samples `sample_count` points of `domain` (deterministically from `seed`)
/// and estimates the constants of (H1)–(H3). Violations are reported, never
/// returned as errors.
pub fn check_assumptions(
    coeffs: &CoefficientSet,
    sample_count: usize,
    domain: &DomainBox,
    seed: u64,
) -> Result<AssumptionReport> {
    domain.validate()?;
    if sample_count == 0 {
        return Err(Error::invalid("sample_count", "must be at least 1"));
    }
    coeffs.check_shapes()?;
    let dims = coeffs.dims;
    let (d, k, l) = (dims.d, dims.k, dims.l);
    let (kd, kl) = (dims.z_len(), dims.g_len());
    let declared = coeffs.constants;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let (mut c_f, mut c_g, mut alpha) = (0.0f64, 0.0f64, 0.0f64);
    let (mut c_fd, mut alpha_fd) = (0.0f64, 0.0f64);
    let mut h2 = 0.0f64;
    let mut h3_min = f64::INFINITY;
    let mut violations = Vec::new();
    let (mut f0, mut f1, mut g0, mut g1) =
        (vec![0.0; k], vec![0.0; k], vec![0.0; kl], vec![0.0; kl]);

    for _ in 0..sample_count {
        let p = SamplePoint {
            e: uniform(&mut rng, domain.e, l),
            x: uniform(&mut rng, domain.x, d),
            y: uniform(&mut rng, domain.y, k),
            z: uniform(&mut rng, domain.z, kd),
        };

        if let Some(der) = &coeffs.derivatives {
            let (mut fy, mut fz) = (vec![0.0; k * k], vec![0.0; k * kd]);
            eval(&der.f_y, &p, &mut fy);
            eval(&der.f_z, &p, &mut fz);
            let mut fyz = vec![0.0; k * (k + kd)];
            for r in 0..k {
                fyz[r * (k + kd)..r * (k + kd) + k].copy_from_slice(&fy[r * k..(r + 1) * k]);
                fyz[r * (k + kd) + k..(r + 1) * (k + kd)]
                    .copy_from_slice(&fz[r * kd..(r + 1) * kd]);
            }
            c_f = c_f.max(op_norm_sq(&fyz, k, k + kd));
            let (mut gy, mut gz) = (vec![0.0; kl * k], vec![0.0; kl * kd]);
            eval(&der.g_y, &p, &mut gy);
            eval(&der.g_z, &p, &mut gz);
            c_g = c_g.max(op_norm_sq(&gy, kl, k));
            alpha = alpha.max(op_norm_sq(&gz, kl, kd));
        }

        // Random-direction difference quotients in (y, z).
        let dir: Vec<f64> = (0..k + kd).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
        let mut q = p.clone();
        for (a, v) in dir.iter().enumerate() {
            let step = FD_STEP * v / norm;
            if a < k {
                q.y[a] += step;
            } else {
                q.z[a - k] += step;
            }
        }
        eval(&coeffs.fbar, &p, &mut f0);
        eval(&coeffs.fbar, &q, &mut f1);
        let df: f64 = f0.iter().zip(&f1).map(|(a, b)| (a - b).powi(2)).sum();
        c_fd = c_fd.max(df / (FD_STEP * FD_STEP));
        eval(&coeffs.gbar, &p, &mut g0);
        // z-only and y-only moves separate α from c for g.
        let mut qz = p.clone();
        let mut qy = p.clone();
        let (zn, yn) = (
            dir[k..].iter().map(|v| v * v).sum::<f64>().sqrt(),
            dir[..k].iter().map(|v| v * v).sum::<f64>().sqrt(),
        );
        if zn > 0.0 {
            for (c, v) in dir[k..].iter().enumerate() {
                qz.z[c] += FD_STEP * v / zn;
            }
            eval(&coeffs.gbar, &qz, &mut g1);
            let dg: f64 = g0.iter().zip(&g1).map(|(a, b)| (a - b).powi(2)).sum();
            alpha_fd = alpha_fd.max(dg / (FD_STEP * FD_STEP));
        }
        if yn > 0.0 {
            for (c, v) in dir[..k].iter().enumerate() {
                qy.y[c] += FD_STEP * v / yn;
            }
            eval(&coeffs.gbar, &qy, &mut g1);
            let dg: f64 = g0.iter().zip(&g1).map(|(a, b)| (a - b).powi(2)).sum();
            c_fd = c_fd.max(dg / (FD_STEP * FD_STEP));
        }

        // (H2): λ_max(g gᵀ − z zᵀ) against ‖g(e,x,0,0)‖² + |y|².
        let gm = DMatrix::from_row_slice(k, l, &g0);
        let zm = DMatrix::from_row_slice(k, d, &p.z);
        let diff = &gm * gm.transpose() - &zm * zm.transpose();
        let lam = SymmetricEigen::new(diff).eigenvalues.max();
        let origin = SamplePoint {
            y: vec![0.0; k],
            z: vec![0.0; kd],
            ..p.clone()
        };
        let mut g00 = vec![0.0; kl];
        eval(&coeffs.gbar, &origin, &mut g00);
        let scale = g00.iter().map(|v| v * v).sum::<f64>() + p.y.iter().map(|v| v * v).sum::<f64>();
        if lam > 0.0 {
            let c_needed = if scale > 0.0 {
                lam / scale
            } else {
                f64::INFINITY
            };
            h2 = h2.max(c_needed);
            if c_needed > declared.growth * (1.0 + 1e-9) {
                push(
                    &mut violations,
                    "H2",
                    format!("needs C ≥ {c_needed:.6e}, declared {:.6e}", declared.growth),
                    &p,
                );
            }
        }

        // (H3) with a random θ ∈ ℝ^{k×d}.
        let theta: Vec<f64> = (0..kd).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let gt = gz_apply(coeffs, &p, &theta);
        let tm = DMatrix::from_row_slice(k, d, &theta);
        let gtm = DMatrix::from_row_slice(k, l, &gt);
        let m3 = &tm * tm.transpose() - &gtm * gtm.transpose();
        let lam3 = SymmetricEigen::new(m3).eigenvalues.min();
        let theta_sq: f64 = theta.iter().map(|v| v * v).sum();
        h3_min = h3_min.min(lam3);
        if lam3 < -1e-10 * (1.0 + theta_sq) {
            push(
                &mut violations,
                "H3",
                format!("θθᵀ − (g'_zθ)(g'_zθ)ᵀ has eigenvalue {lam3:.6e}"),
                &p,
            );
        }
    }

    let (c_hat, alpha_hat) = if coeffs.derivatives.is_some() {
        (c_f.max(c_g), alpha)
    } else {
        (c_fd, alpha_fd)
    };
    let witness = SamplePoint {
        e: vec![0.0; l],
        x: vec![0.0; d],
        y: vec![0.0; k],
        z: vec![0.0; kd],
    };
    if alpha_hat >= 1.0 {
        push(
            &mut violations,
            "H1",
            format!("α estimate {alpha_hat:.6} is not below 1"),
            &witness,
        );
    }
    if alpha_hat > declared.alpha * 1.05 + 1e-12 {
        push(
            &mut violations,
            "H1",
            format!(
                "α estimate {alpha_hat:.6} exceeds declared {:.6}",
                declared.alpha
            ),
            &witness,
        );
    }
    if c_hat > declared.c * 1.05 {
        push(
            &mut violations,
            "H1",
            format!("c estimate {c_hat:.6} exceeds declared {:.6}", declared.c),
            &witness,
        );
    }
    let holds = |name: &str| !violations.iter().any(|v| v.assumption == name);
    Ok(AssumptionReport {
        samples: sample_count,
        c_hat,
        c_f,
        c_g,
        alpha_hat,
        c_hat_fd: c_fd,
        alpha_hat_fd: alpha_fd,
        h2_constant: h2,
        h3_min_eigenvalue: h3_min,
        h1_holds: holds("H1"),
        h2_holds: holds("H2"),
        h3_holds: holds("H3"),
        violations,
    })
}
