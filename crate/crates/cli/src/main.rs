//! `homolab`: configuration-driven homogenization sweeps.
//!
//! Exit codes: 0 all rules pass, 1 a rule fails, 2 configuration error,
//! 3 numerical failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use homolab_core::harness::{EpsSpec, ExperimentConfig, ExperimentKind, FieldSource, RateReport, SurfaceSource};
use homolab_core::oscillatory::{OscillatorySeries, SeriesEntry};
use homolab_core::{HomolabError, Result};

#[derive(Parser)]
#[command(name = "homolab", version, about = "Periodic homogenization sweeps with oscillating Robin data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cell correctors and the homogenized tensor.
    Cell(CommonArgs),
    /// Weyl defects of oscillatory surface averages.
    Weyl(CommonArgs),
    /// Boundary constant M_ε of a Robin coefficient.
    MEps(CommonArgs),
    /// Auxiliary Neumann problem norms.
    NeumannAux(CommonArgs),
    /// Oscillating Robin problem against its homogenized limit.
    RobinRate(CommonArgs),
    /// Boundary/volume duality identity.
    Duality(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Report path; `.csv` writes the table (the defect series for weyl),
    /// anything else JSON.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Additional CSV table of the report rows.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Surface spec file, overriding the config.
    #[arg(long)]
    surface: Option<PathBuf>,
    /// Periodic field file: A for cell, b for m-eps, f otherwise.
    #[arg(long)]
    field: Option<PathBuf>,
    /// ε values: `2^-a..2^-b`, `1/a..1/b` or a comma-separated list.
    #[arg(long, allow_hyphen_values = true)]
    eps: Option<String>,
    /// Cell grid size (repeatable).
    #[arg(long)]
    grid: Vec<usize>,
    /// Per-ε meshes with h = ε / eps_per_h.
    #[arg(long)]
    eps_per_h: Option<f64>,
    /// Fixed mesh size.
    #[arg(long)]
    h: Option<f64>,
}

fn kind_of(cmd: &Command) -> (ExperimentKind, &CommonArgs) {
    match cmd {
        Command::Cell(a) => (ExperimentKind::Cell, a),
        Command::Weyl(a) => (ExperimentKind::Weyl, a),
        Command::MEps(a) => (ExperimentKind::MEps, a),
        Command::NeumannAux(a) => (ExperimentKind::NeumannAux, a),
        Command::RobinRate(a) => (ExperimentKind::RobinRate, a),
        Command::Duality(a) => (ExperimentKind::Duality, a),
    }
}

fn parse_eps(s: &str) -> Result<EpsSpec> {
    if s.contains("..") {
        return Ok(EpsSpec::Range(s.to_string()));
    }
    let values = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| HomolabError::Config(format!("bad ε value '{t}'"))))
        .collect::<Result<Vec<f64>>>()?;
    Ok(EpsSpec::List(values))
}

fn build_config(kind: ExperimentKind, args: &CommonArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::new(kind),
    };
    if cfg.kind != kind {
        return Err(HomolabError::Config(format!("config is for {}, not {}", cfg.kind.label(), kind.label())));
    }
    let cwd = |p: &Path| std::env::current_dir().map(|d| d.join(p)).unwrap_or_else(|_| p.to_path_buf());
    if let Some(s) = &args.surface {
        cfg.surface = Some(SurfaceSource::File(cwd(s)));
    }
    if let Some(f) = &args.field {
        let src = Some(FieldSource::File(cwd(f)));
        match kind {
            ExperimentKind::Cell => cfg.fields.a = src,
            ExperimentKind::MEps => cfg.fields.b = src,
            _ => cfg.fields.f = src,
        }
    }
    if let Some(e) = &args.eps {
        cfg.eps = Some(parse_eps(e)?);
    }
    if !args.grid.is_empty() {
        cfg.cell.grids = args.grid.clone();
    }
    if args.h.is_some() || args.eps_per_h.is_some() {
        cfg.mesh.h = args.h;
        cfg.mesh.eps_per_h = args.eps_per_h;
    }
    if let Some(out) = &args.out {
        cfg.output.json = Some(cwd(out));
    }
    if let Some(csv) = &args.csv {
        cfg.output.csv = Some(cwd(csv));
    }
    Ok(cfg)
}

fn series_of(report: &RateReport) -> OscillatorySeries {
    let get = |r: &homolab_core::harness::ReportRow, k: &str| r.metrics.get(k).copied().unwrap_or(f64::NAN);
    OscillatorySeries {
        f_descriptor: String::new(),
        surface_descriptor: String::new(),
        entries: report
            .rows
            .iter()
            .map(|r| SeriesEntry {
                eps: r.eps.unwrap_or(f64::NAN),
                value_re: get(r, "value_re"),
                value_im: get(r, "value_im"),
                defect: get(r, "defect"),
                est_quad_err: get(r, "est_quad_err"),
            })
            .collect(),
    }
}

fn write_outputs(cfg: &ExperimentConfig, report: &RateReport) -> Result<()> {
    let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { cfg.base_dir.join(p) };
    match cfg.output.json.as_deref().map(resolve) {
        Some(p) if p.extension().is_some_and(|e| e == "csv") => {
            let text = if cfg.kind == ExperimentKind::Weyl { series_of(report).to_csv() } else { report.to_csv()? };
            std::fs::write(p, text)?;
        }
        Some(p) => report.write_json(&p)?,
        None => print!("{}", report.to_json()?),
    }
    if let Some(p) = cfg.output.csv.as_deref().map(resolve) {
        report.write_csv(&p)?;
    }
    Ok(())
}

fn execute(cli: &Cli) -> Result<RateReport> {
    let (kind, args) = kind_of(&cli.command);
    let cfg = build_config(kind, args)?;
    let report = homolab_core::run(&cfg)?;
    write_outputs(&cfg, &report)?;
    Ok(report)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(report) => {
            for v in &report.rules {
                eprintln!("{} {}", if v.passed { "PASS" } else { "FAIL" }, v.detail);
            }
            for f in &report.flags {
                eprintln!("flag: {f}");
            }
            if report.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_configuration() { 2 } else { 3 })
        }
    }
}

#[cfg(test)]
mod tests {
    use clap::CommandFactory;

    use super::*;

    #[test]
    fn eps_lists_and_ranges() {
        assert!(matches!(parse_eps("2^-3..2^-9").unwrap(), EpsSpec::Range(r) if r == "2^-3..2^-9"));
        assert!(matches!(parse_eps("0.5, 0.25").unwrap(), EpsSpec::List(v) if v == [0.5, 0.25]));
        assert!(parse_eps("0.5,half").unwrap_err().is_configuration());
    }

    #[test]
    fn command_line_parses() {
        Cli::command().debug_assert();
        let cli = Cli::try_parse_from(["homolab", "weyl", "--eps", "2^-3..2^-5", "--grid", "64", "--grid", "128"]).unwrap();
        let (kind, args) = kind_of(&cli.command);
        assert_eq!(kind, ExperimentKind::Weyl);
        assert_eq!(args.grid, [64, 128]);
    }
}
