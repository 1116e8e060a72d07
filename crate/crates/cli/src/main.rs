//! `bdsde`: scenario-driven runs of the BDSDE and SPDE solvers.
//!
//! Exit codes: 0 when every gate passes, 2 when a numerical gate fails,
//! 1 on usage or configuration errors.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bdsde_core::bdsde::{check_assumptions, DomainBox};
use bdsde_core::harness::{
    convergence_study, fk_compare, scenario_bundle, solve_field, solve_probe, solve_probe_on,
    to_json, write_bdsde_csv, write_comparison_csv, write_convergence_csv, Cell, CommonB, ProbeRun,
    Scenario,
};
use bdsde_core::paths::{read_bundle, write_bundle, BrownianBundle};
use bdsde_core::{par, Error};
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde::Serialize;

/// Samples for the `check-assumptions` subcommand (the load-time check
/// uses fewer).
const ASSUMPTION_SAMPLES: usize = 4096;

#[derive(Parser)]
#[command(name = "bdsde", version, about = "BDSDE / SPDE numerical lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Euler paths of the forward SDE from every probe.
    SimulateSde,
    /// BDSDE solve from every probe on the scenario's drivers.
    SolveBdsde,
    /// Finite-difference solve of the backward SPDE.
    SolveSpde,
    /// SPDE against BDSDE at the probes on one B path.
    CompareFk,
    /// Comparison repeated along the scenario's sweep.
    Converge,
    /// Sampled check of the Lipschitz, growth and contraction conditions.
    CheckAssumptions,
    /// Write the scenario's W and B increments.
    DumpPaths,
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML).
    #[arg(long, global = true, value_name = "FILE")]
    scenario: Option<PathBuf>,
    /// Override the scenario's W seed.
    #[arg(long = "seed-w", global = true, value_name = "SEED")]
    seed_w: Option<u64>,
    /// Override the scenario's B seed.
    #[arg(long = "seed-b", global = true, value_name = "SEED")]
    seed_b: Option<u64>,
    /// Directory for output files; stdout when absent.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Also write the W/B increments to this file.
    #[arg(long = "dump-paths", global = true, value_name = "FILE")]
    dump_paths: Option<PathBuf>,
    /// Use W/B increments from this file (simulate-sde, solve-bdsde).
    #[arg(long = "load-paths", global = true, value_name = "FILE")]
    load_paths: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] Error),
    #[error("{0}")]
    Gate(String),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Gate(_)
            | CliError::Core(Error::NonFinite { .. } | Error::SingularFlow { .. }) => 2,
            _ => 1,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let threads = cli.common.threads;
    let result = match threads {
        Some(0) => Err(CliError::Usage("--threads must be at least 1".into())),
        Some(t) => par::with_threads(t, || run(&cli)),
        None => run(&cli),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let CliError::Usage(_) = e {
                eprintln!("\n{}", Cli::command().render_usage());
            }
            ExitCode::from(e.code())
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    let c = &cli.common;
    let path = c
        .scenario
        .as_ref()
        .ok_or_else(|| CliError::Usage("--scenario <FILE> is required".into()))?;
    if c.load_paths.is_some() && !matches!(cli.command, Command::SimulateSde | Command::SolveBdsde)
    {
        return Err(CliError::Usage(
            "--load-paths applies to simulate-sde and solve-bdsde only".into(),
        ));
    }
    let scenario = Scenario::from_path(path)?.with_seeds(c.seed_w, c.seed_b);
    let out = Output::new(c)?;
    match cli.command {
        Command::SimulateSde => simulate_sde(&scenario, c, &out),
        Command::SolveBdsde => solve_bdsde(&scenario, c, &out),
        Command::SolveSpde => solve_spde(&scenario, &out),
        Command::CompareFk => compare(&scenario, &out),
        Command::Converge => converge(&scenario, &out),
        Command::CheckAssumptions => assumptions(&scenario, &out),
        Command::DumpPaths => dump(&scenario, c),
    }
}

struct Output {
    dir: Option<PathBuf>,
    format: Format,
}

impl Output {
    fn new(c: &Common) -> Result<Self> {
        if let Some(d) = &c.out {
            fs::create_dir_all(d)?;
        }
        Ok(Self {
            dir: c.out.clone(),
            format: c.format,
        })
    }

    /// Writes `name.json` / `name.csv` under `--out`, or to stdout.
    fn emit(
        &self,
        name: &str,
        json: impl FnOnce() -> Result<String>,
        csv: impl FnOnce() -> Result<Vec<u8>>,
    ) -> Result<()> {
        let (ext, bytes) = match self.format {
            Format::Json => ("json", json()?.into_bytes()),
            Format::Csv => ("csv", csv()?),
        };
        match &self.dir {
            Some(d) => fs::write(d.join(format!("{name}.{ext}")), bytes)?,
            None => std::io::stdout().lock().write_all(&bytes)?,
        }
        Ok(())
    }
}

fn load_bundle(file: &Path) -> Result<BrownianBundle> {
    let f = fs::File::open(file)?;
    Ok(read_bundle(std::io::BufReader::new(f))?)
}

fn save_bundle(bundle: &BrownianBundle, file: &Path) -> Result<()> {
    let f = fs::File::create(file)?;
    write_bundle(bundle, std::io::BufWriter::new(f))?;
    Ok(())
}

/// Probe solves on generated drivers, or on a loaded dump.
fn probe_runs(scenario: &Scenario, c: &Common) -> Result<Vec<ProbeRun>> {
    let coeffs = scenario.coefficients()?;
    let nm = &scenario.numerics;
    if let Some(file) = &c.load_paths {
        let bundle = load_bundle(file)?;
        return (0..scenario.probes.len())
            .map(|p| solve_probe_on(scenario, &coeffs, &bundle, p).map_err(Into::into))
            .collect();
    }
    if let Some(file) = &c.dump_paths {
        save_bundle(&scenario_bundle(scenario, &coeffs)?, file)?;
    }
    let common = CommonB::generate(scenario, &coeffs, nm.n * nm.spde_substeps)?;
    let cell = Cell {
        n: nm.n,
        m: nm.m,
        j: nm.space.j,
    };
    (0..scenario.probes.len())
        .map(|p| solve_probe(scenario, &coeffs, cell, &common, p).map_err(Into::into))
        .collect()
}

#[derive(Serialize)]
struct SdeNode {
    t: f64,
    mean: f64,
    sd: f64,
}

#[derive(Serialize)]
struct SdeProbe {
    t: f64,
    x: f64,
    nodes: Vec<SdeNode>,
}

#[derive(Serialize)]
struct SdeSummary {
    scenario: String,
    seed_w: u64,
    #[serde(rename = "M")]
    m: usize,
    probes: Vec<SdeProbe>,
}

fn simulate_sde(scenario: &Scenario, c: &Common, out: &Output) -> Result<()> {
    let coeffs = scenario.coefficients()?;
    let bundle = match &c.load_paths {
        Some(f) => load_bundle(f)?,
        None => scenario_bundle(scenario, &coeffs)?,
    };
    if !bundle.grid().matches(&scenario.time_grid()?) {
        return Err(Error::Config {
            field: "load-paths".into(),
            reason: "dumped grid does not match the scenario's (t0, T, N)".into(),
        }
        .into());
    }
    if let Some(f) = &c.dump_paths {
        save_bundle(&bundle, f)?;
    }
    let mut probes = Vec::new();
    for p in &scenario.probes {
        let node = scenario.node_of(p.t)?;
        let w = bundle.w.tail(node)?;
        let fwd = bdsde_core::euler_forward(&coeffs, &[p.x], &w)?;
        let m = fwd.m as f64;
        let nodes = (0..=fwd.grid.n)
            .map(|i| {
                let xs = (0..fwd.m).map(|q| fwd.state(q, i)[0]);
                let mean = xs.clone().sum::<f64>() / m;
                let sd = (xs.map(|x| (x - mean).powi(2)).sum::<f64>() / m).sqrt();
                SdeNode {
                    t: fwd.grid.node(i),
                    mean,
                    sd,
                }
            })
            .collect();
        probes.push(SdeProbe {
            t: p.t,
            x: p.x,
            nodes,
        });
    }
    let summary = SdeSummary {
        scenario: scenario.id.clone(),
        seed_w: bundle.w.seed,
        m: bundle.m(),
        probes,
    };
    out.emit(
        "sde",
        || Ok(to_json(&summary)?),
        || {
            let mut b = b"probe,t,mean,sd\n".to_vec();
            for (k, p) in summary.probes.iter().enumerate() {
                for n in &p.nodes {
                    writeln!(b, "{k},{},{},{}", n.t, n.mean, n.sd)?;
                }
            }
            Ok(b)
        },
    )
}

#[derive(Serialize)]
struct BdsdeProbe {
    t: f64,
    x: f64,
    y0: f64,
    y0_se: f64,
    z0: f64,
    z0_se: f64,
    max_residual_rms: f64,
    warnings: Vec<String>,
}

#[derive(Serialize)]
struct BdsdeSummary {
    scenario: String,
    seed_w: u64,
    seed_b: u64,
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "M")]
    m: usize,
    probes: Vec<BdsdeProbe>,
}

fn solve_bdsde(scenario: &Scenario, c: &Common, out: &Output) -> Result<()> {
    let runs = probe_runs(scenario, c)?;
    let coeffs = scenario.coefficients()?;
    let probes = runs
        .iter()
        .zip(&scenario.probes)
        .map(|(r, p)| {
            let s = &r.solution;
            BdsdeProbe {
                t: p.t,
                x: p.x,
                y0: s.y0()[0],
                y0_se: s.y0_standard_error()[0],
                z0: s.z0()[0],
                z0_se: s.z0_standard_error()[0],
                max_residual_rms: s
                    .diagnostics
                    .residual_rms
                    .iter()
                    .copied()
                    .fold(0.0, f64::max),
                warnings: s.diagnostics.warnings.clone(),
            }
        })
        .collect();
    let summary = BdsdeSummary {
        scenario: scenario.id.clone(),
        seed_w: scenario.seeds.w,
        seed_b: scenario.seeds.b,
        n: scenario.numerics.n,
        m: runs.first().map_or(0, |r| r.solution.m),
        probes,
    };
    out.emit(
        "bdsde",
        || Ok(to_json(&summary)?),
        || {
            let mut b = Vec::new();
            let pairs: Vec<_> = runs.iter().map(|r| (&r.solution, &r.forward)).collect();
            write_bdsde_csv(&mut b, &coeffs, &pairs)?;
            Ok(b)
        },
    )
}

#[derive(Serialize)]
struct SpdeProbe {
    t: f64,
    x: f64,
    u: f64,
    ux: f64,
}

#[derive(Serialize)]
struct SpdeSummary {
    scenario: String,
    seed_b: u64,
    steps: usize,
    #[serde(rename = "J")]
    j: usize,
    dx: f64,
    domain: [f64; 2],
    scheme: bdsde_core::spde::Scheme,
    probes: Vec<SpdeProbe>,
}

fn solve_spde(scenario: &Scenario, out: &Output) -> Result<()> {
    let coeffs = scenario.coefficients()?;
    let nm = &scenario.numerics;
    let common = CommonB::generate(scenario, &coeffs, nm.n * nm.spde_substeps)?;
    let field = solve_field(scenario, &coeffs, &common, nm.space.j)?;
    let probes = scenario
        .probes
        .iter()
        .map(|p| {
            let i = field.grid.index_of(p.t).ok_or_else(|| Error::Config {
                field: "probes.t".into(),
                reason: format!("{} is not an SPDE node", p.t),
            })?;
            Ok(SpdeProbe {
                t: p.t,
                x: p.x,
                u: field.value(i, p.x)?,
                ux: field.gradient(i, p.x)?,
            })
        })
        .collect::<std::result::Result<Vec<_>, Error>>()?;
    if let Some(d) = &out.dir {
        let f = fs::File::create(d.join("field.bin"))?;
        field.write_binary(std::io::BufWriter::new(f))?;
    }
    let summary = SpdeSummary {
        scenario: scenario.id.clone(),
        seed_b: scenario.seeds.b,
        steps: field.grid.n,
        j: field.space.j,
        dx: field.space.dx,
        domain: [field.space.x_min, field.space.x_max],
        scheme: nm.scheme,
        probes,
    };
    out.emit(
        "spde",
        || Ok(to_json(&summary)?),
        || {
            let mut b = Vec::new();
            field.write_csv(&mut b)?;
            Ok(b)
        },
    )
}

fn compare(scenario: &Scenario, out: &Output) -> Result<()> {
    let report = fk_compare(scenario)?;
    out.emit(
        "compare",
        || Ok(to_json(&report)?),
        || {
            let mut b = Vec::new();
            write_comparison_csv(&mut b, &report)?;
            Ok(b)
        },
    )?;
    if report.pass {
        Ok(())
    } else {
        let failed = report.probes.iter().filter(|p| !p.pass).count();
        Err(CliError::Gate(format!(
            "{failed} probe(s) outside the error budget"
        )))
    }
}

fn converge(scenario: &Scenario, out: &Output) -> Result<()> {
    let sweep = scenario.sweep.as_ref().ok_or_else(|| Error::Config {
        field: "sweep".into(),
        reason: "converge needs a [sweep] table".into(),
    })?;
    let table = convergence_study(scenario, sweep)?;
    out.emit(
        "converge",
        || Ok(to_json(&table)?),
        || {
            let mut b = Vec::new();
            write_convergence_csv(&mut b, &table)?;
            Ok(b)
        },
    )?;
    if table.pass {
        Ok(())
    } else {
        Err(CliError::Gate(
            "sweep cell(s) outside the error budget".into(),
        ))
    }
}

fn assumptions(scenario: &Scenario, out: &Output) -> Result<()> {
    let coeffs = scenario.coefficients()?;
    let report = check_assumptions(
        &coeffs,
        ASSUMPTION_SAMPLES,
        &DomainBox::default(),
        scenario.seeds.w,
    )?;
    out.emit(
        "assumptions",
        || Ok(to_json(&report)?),
        || {
            let mut b = b"quantity,value\n".to_vec();
            for (k, v) in [
                ("c_hat", report.c_hat),
                ("alpha_hat", report.alpha_hat),
                ("c_hat_fd", report.c_hat_fd),
                ("alpha_hat_fd", report.alpha_hat_fd),
                ("h2_constant", report.h2_constant),
                ("h3_min_eigenvalue", report.h3_min_eigenvalue),
            ] {
                writeln!(b, "{k},{v}")?;
            }
            for (k, v) in [
                ("h1_holds", report.h1_holds),
                ("h2_holds", report.h2_holds),
                ("h3_holds", report.h3_holds),
            ] {
                writeln!(b, "{k},{v}")?;
            }
            Ok(b)
        },
    )?;
    if report.violations.is_empty() {
        Ok(())
    } else {
        Err(CliError::Gate(format!(
            "{} assumption violation(s)",
            report.violations.len()
        )))
    }
}

#[derive(Serialize)]
struct DumpSummary {
    file: String,
    seed_w: u64,
    seed_b: u64,
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "M")]
    m: usize,
}

fn dump(scenario: &Scenario, c: &Common) -> Result<()> {
    let file = match (&c.dump_paths, &c.out) {
        (Some(f), _) => f.clone(),
        (None, Some(d)) => d.join("paths.bin"),
        (None, None) => {
            return Err(CliError::Usage(
                "dump-paths needs --dump-paths <FILE> or --out <DIR>".into(),
            ))
        }
    };
    let coeffs = scenario.coefficients()?;
    let bundle = scenario_bundle(scenario, &coeffs)?;
    save_bundle(&bundle, &file)?;
    let summary = DumpSummary {
        file: file.display().to_string(),
        seed_w: scenario.seeds.w,
        seed_b: scenario.seeds.b,
        n: bundle.grid().n,
        m: bundle.m(),
    };
    print!("{}", to_json(&summary)?);
    Ok(())
}
