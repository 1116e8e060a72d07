//! Repeated comparisons along N, M and J sweeps on coupled drivers: one B
//! path and one W sample per probe at the finest level, coarsened (and
//! truncated in M) for every cell.

use std::collections::BTreeMap;

use serde::Serialize;

use super::compare::{compare_cell, probe_w, Cell, CommonB, WSource};
use super::scenario::{Scenario, Sweep};
use crate::error::{Error, Result};
use crate::spde::RandomFieldU;
use crate::stats::empirical_order;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Axis {
    #[serde(rename = "N")]
    N,
    #[serde(rename = "M")]
    M,
    #[serde(rename = "J")]
    J,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub axis: Axis,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "J")]
    pub j: usize,
    pub dt: f64,
    pub dx: f64,
    /// Largest `|u − Y|` over the probes.
    pub max_error: f64,
    pub max_se: f64,
    /// Largest `3·SE + C_FD·(dt + dx²)` over the probes.
    pub max_budget: f64,
    pub probe_errors: Vec<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct OrderFit {
    pub axis: Axis,
    /// What was regressed: `error` or `budget` against `dt`, `error` or
    /// `se` against `1/M`, `error` against `dx²`.
    pub quantity: &'static str,
    pub order: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceTable {
    pub scenario: String,
    pub rows: Vec<SweepRow>,
    pub orders: Vec<OrderFit>,
    /// Max-probe error nonincreasing along the N sweep.
    pub monotone_in_n: bool,
    pub pass: bool,
}

impl ConvergenceTable {
    pub fn axis_rows(&self, axis: Axis) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(move |r| r.axis == axis)
    }

    pub fn order(&self, axis: Axis, quantity: &str) -> Option<f64> {
        self.orders
            .iter()
            .find(|o| o.axis == axis && o.quantity == quantity)
            .and_then(|o| o.order)
    }
}

pub fn convergence_study(scenario: &Scenario, sweep: &Sweep) -> Result<ConvergenceTable> {
    for (name, list) in [
        ("sweep.N", &sweep.n),
        ("sweep.M", &sweep.m),
        ("sweep.J", &sweep.j),
    ] {
        if list.windows(2).any(|w| w[1] <= w[0]) || list.contains(&0) {
            return Err(Error::config(
                name,
                "must be strictly increasing and positive",
            ));
        }
    }
    let coeffs = scenario.coefficients()?;
    let nm = &scenario.numerics;
    let base = Cell {
        n: nm.n,
        m: nm.m,
        j: nm.space.j,
    };
    let n_max = sweep
        .n
        .iter()
        .copied()
        .chain([base.n])
        .max()
        .expect("non-empty");
    let m_max = sweep
        .m
        .iter()
        .copied()
        .chain([base.m])
        .max()
        .expect("non-empty");
    if sweep.n.iter().chain([&base.n]).any(|n| n_max % n != 0) {
        return Err(Error::config(
            "sweep.N",
            "every level, and numerics.N, must divide the largest",
        ));
    }
    let common = CommonB::generate(scenario, &coeffs, n_max * nm.spde_substeps)?;
    let (coarse_b, _) = common.coarse(n_max)?;
    let ws = scenario
        .probes
        .iter()
        .map(|p| {
            let node = coarse_b.grid.index_of(p.t).ok_or_else(|| {
                Error::config(
                    "probes.t",
                    format!("{} is not a node of the N = {n_max} grid", p.t),
                )
            })?;
            probe_w(scenario, coarse_b.grid, node, m_max, coeffs.dims.d)
        })
        .collect::<Result<Vec<_>>>()?;
    let source = WSource::Coupled(&ws);

    let mut cells: Vec<(Axis, Cell)> = Vec::new();
    cells.extend(sweep.n.iter().map(|&n| (Axis::N, Cell { n, ..base })));
    cells.extend(sweep.m.iter().map(|&m| (Axis::M, Cell { m, ..base })));
    cells.extend(sweep.j.iter().map(|&j| (Axis::J, Cell { j, ..base })));

    let mut fields: BTreeMap<usize, RandomFieldU> = BTreeMap::new();
    let mut rows = Vec::new();
    for (axis, cell) in cells {
        if !fields.contains_key(&cell.j) {
            let f = super::compare::solve_field(scenario, &coeffs, &common, cell.j)?;
            fields.insert(cell.j, f);
        }
        let report = compare_cell(scenario, &coeffs, cell, &common, &fields[&cell.j], &source)?;
        let max_of = |f: fn(&super::compare::ProbeResult) -> f64| {
            report.probes.iter().map(f).fold(0.0, f64::max)
        };
        rows.push(SweepRow {
            axis,
            n: cell.n,
            m: cell.m,
            j: cell.j,
            dt: report.dt,
            dx: report.dx,
            max_error: max_of(|p| p.abs_diff),
            max_se: max_of(|p| p.se_mc),
            max_budget: max_of(|p| p.tolerance),
            probe_errors: report.probes.iter().map(|p| p.abs_diff).collect(),
            pass: report.pass,
        });
    }

    let fit = |axis: Axis, x: fn(&SweepRow) -> f64, y: fn(&SweepRow) -> f64| {
        let rs: Vec<&SweepRow> = rows.iter().filter(|r| r.axis == axis).collect();
        let xs: Vec<f64> = rs.iter().map(|r| x(r)).collect();
        let ys: Vec<f64> = rs.iter().map(|r| y(r)).collect();
        empirical_order(&xs, &ys)
    };
    let orders = vec![
        OrderFit {
            axis: Axis::N,
            quantity: "error",
            order: fit(Axis::N, |r| r.dt, |r| r.max_error),
        },
        OrderFit {
            axis: Axis::N,
            quantity: "budget",
            order: fit(Axis::N, |r| r.dt, |r| r.max_budget),
        },
        OrderFit {
            axis: Axis::M,
            quantity: "error",
            order: fit(Axis::M, |r| 1.0 / r.m as f64, |r| r.max_error),
        },
        OrderFit {
            axis: Axis::M,
            quantity: "se",
            order: fit(Axis::M, |r| 1.0 / r.m as f64, |r| r.max_se),
        },
        OrderFit {
            axis: Axis::J,
            quantity: "error",
            order: fit(Axis::J, |r| r.dx * r.dx, |r| r.max_error),
        },
    ];
    let n_errors: Vec<f64> = rows
        .iter()
        .filter(|r| r.axis == Axis::N)
        .map(|r| r.max_error)
        .collect();
    let monotone_in_n = n_errors.windows(2).all(|w| w[1] <= w[0]);
    let pass = rows.iter().all(|r| r.pass);
    Ok(ConvergenceTable {
        scenario: scenario.id.clone(),
        rows,
        orders,
        monotone_in_n,
        pass,
    })
}
