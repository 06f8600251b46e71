//! Configuration-driven sweeps, slope fits and reports.

pub mod config;
pub mod report;
pub mod run;

pub use config::{
    parse_eps_range, EpsSpec, ExperimentConfig, ExperimentKind, FieldSource, MeshSpec, Polynomial, Rule, SurfaceSource, TheorySource,
};
pub use report::{compare_to_theory, FitReport, RateReport, ReportRow, RuleVerdict, TheoryTarget, TheoryVerdict, REPORT_SCHEMA};
pub use run::{homogenized_data, robin_problem, run, Homogenized, NO_CONVERGENCE_DEFECT};
