//! JSON and CSV renderings of solver output.

use std::io::Write;

use serde::Serialize;

use super::compare::ComparisonReport;
use super::convergence::ConvergenceTable;
use crate::bdsde::BdsdeSolution;
use crate::coeffs::CoefficientSet;
use crate::error::Result;
use crate::forward::ForwardSolution;

/// Points per node in the BDSDE field table.
const TABLE_POINTS: usize = 41;

/// Pretty JSON with a trailing newline. Field order follows the struct
/// definitions, so equal values give equal bytes.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// `probe,node,t,x,Y,Z` rows. Node 0 is the start point; later nodes use
/// an even grid over mean ± 3 sd of the forward cloud, evaluated through
/// the fitted regression.
pub fn write_bdsde_csv(
    mut out: impl Write,
    coeffs: &CoefficientSet,
    runs: &[(&BdsdeSolution, &ForwardSolution)],
) -> Result<()> {
    writeln!(out, "probe,node,t,x,Y,Z")?;
    for (probe, (solution, forward)) in runs.iter().enumerate() {
        let g = &solution.grid;
        writeln!(
            out,
            "{probe},0,{},{},{},{}",
            g.node(0),
            forward.state(0, 0)[0],
            solution.y0()[0],
            solution.z0()[0]
        )?;
        let m = forward.m as f64;
        for i in 1..=g.n {
            let xs = (0..forward.m).map(|p| forward.state(p, i)[0]);
            let mean = xs.clone().sum::<f64>() / m;
            let sd = (xs.map(|x| (x - mean).powi(2)).sum::<f64>() / m).sqrt();
            let count = if sd > 0.0 { TABLE_POINTS } else { 1 };
            for q in 0..count {
                let x = if count == 1 {
                    mean
                } else {
                    mean - 3.0 * sd + 6.0 * sd * q as f64 / (count - 1) as f64
                };
                let y = solution.y_field(coeffs, i, &[x])[0];
                let z = if i == g.n {
                    let mut z = [0.0];
                    crate::bdsde::terminal_z(coeffs, &[x], &mut z);
                    z[0]
                } else {
                    solution.z_field(i, &[x])[0]
                };
                writeln!(out, "{probe},{i},{},{x},{y},{z}", g.node(i))?;
            }
        }
    }
    Ok(())
}

pub fn write_comparison_csv(mut out: impl Write, report: &ComparisonReport) -> Result<()> {
    writeln!(
        out,
        "t,x,u_spde,y_bdsde,abs_diff,se_mc,tolerance,pass,z_bdsde,sigma_ux,z_abs_diff"
    )?;
    for p in &report.probes {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            p.t,
            p.x,
            p.u_spde,
            p.y_bdsde,
            p.abs_diff,
            p.se_mc,
            p.tolerance,
            p.pass,
            p.z_bdsde,
            p.sigma_ux,
            p.z_abs_diff
        )?;
    }
    Ok(())
}

pub fn write_convergence_csv(mut out: impl Write, table: &ConvergenceTable) -> Result<()> {
    writeln!(out, "axis,N,M,J,dt,dx,max_error,max_se,max_budget,pass")?;
    for r in &table.rows {
        let axis = match r.axis {
            super::Axis::N => "N",
            super::Axis::M => "M",
            super::Axis::J => "J",
        };
        writeln!(
            out,
            "{axis},{},{},{},{},{},{},{},{},{}",
            r.n, r.m, r.j, r.dt, r.dx, r.max_error, r.max_se, r.max_budget, r.pass
        )?;
    }
    Ok(())
}
