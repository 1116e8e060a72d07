//! Scenario files, coefficient presets, the solver comparison and the
//! convergence study, plus their JSON/CSV output.

mod compare;
mod convergence;
mod presets;
mod report;
mod scenario;

pub use compare::{
    fk_compare, scenario_bundle, solve_field, solve_probe, solve_probe_on, Cell, CommonB,
    ComparisonReport, FieldResult, ProbeResult, ProbeRun,
};
pub use convergence::{convergence_study, Axis, ConvergenceTable, OrderFit, SweepRow};
pub use presets::{Params, Preset};
pub use report::{to_json, write_bdsde_csv, write_comparison_csv, write_convergence_csv};
pub use scenario::{
    CoefficientSpec, DimsSpec, Horizon, Numerics, Probe, Scenario, Seeds, SpaceSpec, Sweep,
};
