//! Empirical `L^p` moments of the solution and their growth in `x`.

use serde::Serialize;

use super::BdsdeSolution;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize)]
pub struct MomentRow {
    pub x: f64,
    /// `E[sup_i |Y_i|^p]`.
    pub sup_y: f64,
    /// `E[(Σ_i ‖Z_i‖² dt)^{p/2}]`.
    pub z_energy: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MomentReport {
    pub p: u32,
    pub rows: Vec<MomentRow>,
    /// Least-squares slope of `log E sup|Y|^p` against `log(1 + |x|)`.
    pub growth_y: Option<f64>,
    pub growth_z: Option<f64>,
}

/// `solutions[j]` must be the solve started at `x_values[j]` (first
/// component of the state is used as the abscissa).
pub fn moment_diagnostics(
    solutions: &[&BdsdeSolution],
    p: u32,
    x_values: &[f64],
) -> Result<MomentReport> {
    if p != 2 && p != 4 {
        return Err(Error::invalid("p", "only p ∈ {2, 4} is supported"));
    }
    if solutions.len() != x_values.len() {
        return Err(Error::invalid(
            "x_values",
            "one solution per x value is required",
        ));
    }
    let pf = p as f64;
    let rows: Vec<MomentRow> = solutions
        .iter()
        .zip(x_values)
        .map(|(s, &x)| {
            let (n, m) = (s.grid.n, s.m);
            let mut sup_acc = 0.0;
            let mut z_acc = 0.0;
            for path in 0..m {
                let sup = (0..=n)
                    .map(|i| s.y_at(path, i).iter().map(|v| v * v).sum::<f64>().sqrt())
                    .fold(0.0, f64::max);
                sup_acc += sup.powf(pf);
                let energy: f64 = (0..n)
                    .map(|i| s.z_at(path, i).iter().map(|v| v * v).sum::<f64>() * s.grid.dt)
                    .sum();
                z_acc += energy.powf(pf / 2.0);
            }
            MomentRow {
                x,
                sup_y: sup_acc / m as f64,
                z_energy: z_acc / m as f64,
            }
        })
        .collect();
    let growth_y = log_slope(rows.iter().map(|r| (r.x, r.sup_y)));
    let growth_z = log_slope(rows.iter().map(|r| (r.x, r.z_energy)));
    Ok(MomentReport {
        p,
        rows,
        growth_y,
        growth_z,
    })
}

fn log_slope(points: impl Iterator<Item = (f64, f64)>) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .filter(|&(_, v)| v > 0.0 && v.is_finite())
        .map(|(x, v)| ((1.0 + x.abs()).ln(), v.ln()))
        .collect();
    crate::stats::ls_slope(&pts)
}
