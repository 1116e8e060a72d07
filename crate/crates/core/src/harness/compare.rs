//! Both solvers on one B path: `u(t, x)` from the SPDE against `Y_t^{t,x}`
//! from the BDSDE, and `σ ∂_x u` against `Z_t^{t,x}`.

use serde::Serialize;

use super::scenario::{Scenario, Seeds};
use crate::bdsde::{solve_bdsde, BdsdeSolution};
use crate::coeffs::CoefficientSet;
use crate::error::{Error, Result};
use crate::forward::{euler_forward, ForwardSolution};
use crate::paths::{backward_b, BPath, BackwardBFunctional, BrownianBundle, TimeGrid, WIncrements};
use crate::spde::{solve_spde, RandomFieldU, SpaceGrid};

/// Points of each field comparison.
const FIELD_POINTS: usize = 21;

/// The B path at SPDE resolution together with `←B` on it.
#[derive(Debug, Clone)]
pub struct CommonB {
    pub fine: BPath,
    pub fine_back: BackwardBFunctional,
}

impl CommonB {
    pub fn generate(scenario: &Scenario, coeffs: &CoefficientSet, fine_n: usize) -> Result<Self> {
        let grid = TimeGrid::new(scenario.horizon.t0, scenario.horizon.t_end, fine_n)?;
        let fine = BPath::generate(scenario.seeds.b, grid, coeffs.dims.l)?;
        let phi = coeffs.phi.clone();
        let fine_back = backward_b(move |t, o| phi(t, o), &fine);
        Ok(Self { fine, fine_back })
    }

    /// Coarsened B and restricted `←B` on an `n`-step grid.
    pub fn coarse(&self, n: usize) -> Result<(BPath, BackwardBFunctional)> {
        if n == 0 || self.fine.grid.n % n != 0 {
            return Err(Error::invalid(
                "N",
                format!(
                    "{n} does not divide the SPDE step count {}",
                    self.fine.grid.n
                ),
            ));
        }
        let f = self.fine.grid.n / n;
        Ok((self.fine.coarsen(f)?, self.fine_back.restrict(f)?))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeResult {
    pub t: f64,
    pub x: f64,
    pub u_spde: f64,
    pub y_bdsde: f64,
    pub abs_diff: f64,
    pub se_mc: f64,
    pub fd_budget: f64,
    pub tolerance: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact: Option<f64>,
    pub z_bdsde: f64,
    pub z_se: f64,
    pub sigma_ux: f64,
    pub z_abs_diff: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FieldResult {
    pub probe: usize,
    /// Time of the compared node (midway between the probe and `T`).
    pub t: f64,
    pub x_lo: f64,
    pub x_hi: f64,
    pub rms_u: f64,
    pub max_u: f64,
    pub rms_z: f64,
    pub max_z: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub scenario: String,
    pub preset: String,
    pub seeds: Seeds,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub spde_steps: usize,
    #[serde(rename = "J")]
    pub j: usize,
    pub dt: f64,
    pub dx: f64,
    /// Spatial truncation used by the SPDE side.
    pub domain: [f64; 2],
    pub c_fd: f64,
    pub probes: Vec<ProbeResult>,
    pub fields: Vec<FieldResult>,
    pub warnings: Vec<String>,
    pub pass: bool,
}

/// Resolution of one comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cell {
    pub n: usize,
    pub m: usize,
    pub j: usize,
}

/// One probe's BDSDE solve, kept for callers that need more than the
/// summary.
#[derive(Debug, Clone)]
pub struct ProbeRun {
    pub node: usize,
    pub bundle: BrownianBundle,
    pub back: BackwardBFunctional,
    pub forward: ForwardSolution,
    pub solution: BdsdeSolution,
}

/// Where the W increments of each probe come from.
pub(crate) enum WSource<'a> {
    /// Fresh from the scenario's W seed at the cell resolution.
    Generate,
    /// Coarsened and truncated from one finest-level sample per probe.
    Coupled(&'a [WIncrements]),
}

/// W on `[τ_node, T]`: the tail of one sample drawn on the full grid, so
/// a dumped full-grid bundle reproduces every probe.
pub(crate) fn probe_w(
    scenario: &Scenario,
    full: TimeGrid,
    node: usize,
    m: usize,
    d: usize,
) -> Result<WIncrements> {
    WIncrements::generate(scenario.seeds.w, full, m, d)?.tail(node)
}

/// BDSDE solve started at probe `(t, x)` on the common B path.
pub fn solve_probe(
    scenario: &Scenario,
    coeffs: &CoefficientSet,
    cell: Cell,
    common: &CommonB,
    probe: usize,
) -> Result<ProbeRun> {
    solve_probe_with(scenario, coeffs, cell, common, probe, &WSource::Generate)
}

pub(crate) fn solve_probe_with(
    scenario: &Scenario,
    coeffs: &CoefficientSet,
    cell: Cell,
    common: &CommonB,
    probe: usize,
    source: &WSource<'_>,
) -> Result<ProbeRun> {
    let p = scenario.probes.get(probe).ok_or(Error::IndexOutOfRange {
        field: "probe",
        index: probe,
        len: scenario.probes.len(),
    })?;
    let (b, back) = common.coarse(cell.n)?;
    let node = b.grid.index_of(p.t).ok_or_else(|| {
        Error::config(
            "probes.t",
            format!("{} is not a node of the N = {} grid", p.t, cell.n),
        )
    })?;
    let full = b.grid;
    let b = b.tail(node)?;
    let back = back.tail(node)?;
    let w = match source {
        WSource::Generate => probe_w(scenario, full, node, cell.m, coeffs.dims.d)?,
        WSource::Coupled(ws) => {
            let fine = &ws[probe];
            if fine.grid.n % b.grid.n != 0 {
                return Err(Error::invalid(
                    "N",
                    "sweep levels must divide the finest level",
                ));
            }
            fine.coarsen(fine.grid.n / b.grid.n)?.take_paths(cell.m)?
        }
    };
    let bundle = BrownianBundle::from_parts(w, b)?;
    let forward = euler_forward(coeffs, &[p.x], &bundle.w)?;
    let solution = solve_bdsde(
        coeffs,
        &forward,
        &bundle,
        &back,
        &scenario.numerics.regression,
    )?;
    Ok(ProbeRun {
        node,
        bundle,
        back,
        forward,
        solution,
    })
}

pub fn solve_field(
    scenario: &Scenario,
    coeffs: &CoefficientSet,
    common: &CommonB,
    j: usize,
) -> Result<RandomFieldU> {
    let s = scenario.numerics.space;
    let space = SpaceGrid::new(s.x_min, s.x_max, j)?;
    solve_spde(
        coeffs,
        &common.fine,
        &common.fine_back,
        &space,
        scenario.numerics.scheme,
    )
}

fn field_comparison(
    probe: usize,
    run: &ProbeRun,
    coeffs: &CoefficientSet,
    field: &RandomFieldU,
    factor: usize,
) -> Result<Option<FieldResult>> {
    let sol = &run.solution;
    let mid = sol.grid.n / 2;
    if mid == 0 {
        return Ok(None);
    }
    let m = run.forward.m as f64;
    let xs: Vec<f64> = (0..run.forward.m)
        .map(|p| run.forward.state(p, mid)[0])
        .collect();
    let mean = xs.iter().sum::<f64>() / m;
    let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / m).sqrt();
    let s = field.space;
    let lo = (mean - 2.0 * sd).max(s.x_min + s.dx);
    let hi = (mean + 2.0 * sd).min(s.x_max - s.dx);
    if !(hi > lo) {
        return Ok(None);
    }
    let fine_i = (run.node + mid) * factor;
    let (mut su, mut mu, mut sz, mut mz) = (0.0, 0.0f64, 0.0, 0.0f64);
    for q in 0..FIELD_POINTS {
        let x = lo + (hi - lo) * q as f64 / (FIELD_POINTS - 1) as f64;
        let du = (sol.y_field(coeffs, mid, &[x])[0] - field.value(fine_i, x)?).abs();
        let mut sig = [0.0];
        (coeffs.sigma)(&[x], &mut sig);
        let dz = (sol.z_field(mid, &[x])[0] - sig[0] * field.gradient(fine_i, x)?).abs();
        su += du * du;
        sz += dz * dz;
        mu = mu.max(du);
        mz = mz.max(dz);
    }
    let k = FIELD_POINTS as f64;
    Ok(Some(FieldResult {
        probe,
        t: sol.grid.node(mid),
        x_lo: lo,
        x_hi: hi,
        rms_u: (su / k).sqrt(),
        max_u: mu,
        rms_z: (sz / k).sqrt(),
        max_z: mz,
    }))
}

pub(crate) fn compare_cell(
    scenario: &Scenario,
    coeffs: &CoefficientSet,
    cell: Cell,
    common: &CommonB,
    field: &RandomFieldU,
    source: &WSource<'_>,
) -> Result<ComparisonReport> {
    let preset = scenario.preset();
    let factor = common.fine.grid.n / cell.n;
    let dt = (scenario.horizon.t_end - scenario.horizon.t0) / cell.n as f64;
    let dx = field.space.dx;
    let c_fd = preset.c_fd();
    let fd_budget = c_fd * (dt + dx * dx);
    let mut probes = Vec::new();
    let mut fields = Vec::new();
    let mut warnings = Vec::new();
    for (idx, p) in scenario.probes.iter().enumerate() {
        let run = solve_probe_with(scenario, coeffs, cell, common, idx, source)?;
        let sol = &run.solution;
        let fine_i = run.node * factor;
        let u = field.value(fine_i, p.x)?;
        let mut sig = [0.0];
        (coeffs.sigma)(&[p.x], &mut sig);
        let sigma_ux = sig[0] * field.gradient(fine_i, p.x)?;
        let y = sol.y0()[0];
        let se = sol.y0_standard_error()[0];
        let z = sol.z0()[0];
        let tolerance = 3.0 * se + fd_budget;
        let abs_diff = (u - y).abs();
        probes.push(ProbeResult {
            t: p.t,
            x: p.x,
            u_spde: u,
            y_bdsde: y,
            abs_diff,
            se_mc: se,
            fd_budget,
            tolerance,
            pass: abs_diff <= tolerance,
            exact: preset.exact(
                &scenario.coefficients.params,
                p.t,
                scenario.horizon.t_end,
                p.x,
            ),
            z_bdsde: z,
            z_se: sol.z0_standard_error()[0],
            sigma_ux,
            z_abs_diff: (z - sigma_ux).abs(),
        });
        if let Some(f) = field_comparison(idx, &run, coeffs, field, factor)? {
            fields.push(f);
        }
        for w in &sol.diagnostics.warnings {
            warnings.push(format!("probe {idx}: {w}"));
        }
    }
    let pass = probes.iter().all(|p| p.pass);
    Ok(ComparisonReport {
        scenario: scenario.id.clone(),
        preset: preset.name().to_string(),
        seeds: scenario.seeds,
        n: cell.n,
        m: cell.m,
        spde_steps: common.fine.grid.n,
        j: field.space.j,
        dt,
        dx,
        domain: [field.space.x_min, field.space.x_max],
        c_fd,
        probes,
        fields,
        warnings,
        pass,
    })
}

/// One SPDE solve and one BDSDE solve per probe, all on the B path drawn
/// from the scenario's B seed.
pub fn fk_compare(scenario: &Scenario) -> Result<ComparisonReport> {
    let coeffs = scenario.coefficients()?;
    let nm = &scenario.numerics;
    let common = CommonB::generate(scenario, &coeffs, nm.n * nm.spde_substeps)?;
    let field = solve_field(scenario, &coeffs, &common, nm.space.j)?;
    let cell = Cell {
        n: nm.n,
        m: nm.m,
        j: nm.space.j,
    };
    compare_cell(scenario, &coeffs, cell, &common, &field, &WSource::Generate)
}

/// The scenario's W and B increments on the full `N`-step grid: what
/// `dump-paths` writes and what every probe's drivers are tails of.
pub fn scenario_bundle(scenario: &Scenario, coeffs: &CoefficientSet) -> Result<BrownianBundle> {
    let nm = &scenario.numerics;
    let common = CommonB::generate(scenario, coeffs, nm.n * nm.spde_substeps)?;
    let (b, _) = common.coarse(nm.n)?;
    let w = WIncrements::generate(scenario.seeds.w, b.grid, nm.m, coeffs.dims.d)?;
    BrownianBundle::from_parts(w, b)
}

/// Probe solve on externally supplied increments (a loaded dump). `←B`
/// is rebuilt from the coarse B increments, so with time-dependent `φ` it
/// differs from the SPDE-resolution quadrature used by [`solve_probe`].
pub fn solve_probe_on(
    scenario: &Scenario,
    coeffs: &CoefficientSet,
    bundle: &BrownianBundle,
    probe: usize,
) -> Result<ProbeRun> {
    let p = scenario.probes.get(probe).ok_or(Error::IndexOutOfRange {
        field: "probe",
        index: probe,
        len: scenario.probes.len(),
    })?;
    if !bundle.grid().matches(&scenario.time_grid()?) {
        return Err(Error::config(
            "load-paths",
            "dumped grid does not match the scenario's (t0, T, N)",
        ));
    }
    if bundle.d() != coeffs.dims.d || bundle.l() != coeffs.dims.l {
        return Err(Error::config(
            "load-paths",
            "dumped dimensions do not match the scenario",
        ));
    }
    let node = scenario.node_of(p.t)?;
    let phi = coeffs.phi.clone();
    let back = backward_b(move |t, o| phi(t, o), &bundle.b).tail(node)?;
    let bundle = bundle.tail(node)?;
    let forward = euler_forward(coeffs, &[p.x], &bundle.w)?;
    let solution = solve_bdsde(
        coeffs,
        &forward,
        &bundle,
        &back,
        &scenario.numerics.regression,
    )?;
    Ok(ProbeRun {
        node,
        bundle,
        back,
        forward,
        solution,
    })
}
