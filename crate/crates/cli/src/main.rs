mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use config::{List, Resolver};
use output::{manifest_path, Format};

#[derive(Parser, Debug)]
#[command(name = "curvquant", version, about = "Curvature, operator-ordering and QMP experiments on Riemannian charts")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Catalog chart id (e.g. `polar2`, `sphere2:1`) or a chart expression file.
    #[arg(long, global = true)]
    chart: Option<String>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    hbar: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    mass: Option<f64>,
    /// Output file; defaults to `<command>.<format>`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// TOML file with default settings; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Ricci tensor and scalar curvature at points or over a grid.
    Curvature(PointArgs),
    /// DeWitt QMP and ordering-family shift at points or over a grid.
    Qmp(QmpArgs),
    /// Normal-coordinate QMP asymptote and metric expansion fit.
    Normal(NormalArgs),
    /// Exact versus first-order QMP of a deformed Cartesian chart.
    Deform(DeformArgs),
    /// Lowest eigenvalues of a discretized Hamiltonian.
    Spectrum(SpectrumArgs),
    /// Level-by-level spectral gap between two charts.
    Anomaly(AnomalyArgs),
    /// Action, Van Vleck determinant and two-point QMP along a geodesic ray.
    Propagator(PropagatorArgs),
    /// Conformal coupling coefficient against 1/6.
    Conformal(ConformalArgs),
}

#[derive(Args, Debug)]
pub struct PointArgs {
    /// Evaluation point `q1,q2,..`; repeatable. Overrides the grid.
    #[arg(long, allow_hyphen_values = true)]
    at: Vec<List<f64>>,
    /// Cell-centred nodes per axis (one value for all axes).
    #[arg(long)]
    grid: Option<List<usize>>,
    /// Lower grid bounds per axis (default: chart domain).
    #[arg(long, allow_hyphen_values = true)]
    lo: Option<List<f64>>,
    /// Upper grid bounds per axis (default: chart domain).
    #[arg(long, allow_hyphen_values = true)]
    hi: Option<List<f64>>,
}

#[derive(Args, Debug)]
pub struct QmpArgs {
    #[command(flatten)]
    points: PointArgs,
    /// Ordering parameter; also report `V_ν` (DeWitt is ν = 2).
    #[arg(long, allow_hyphen_values = true)]
    nu: Option<f64>,
}

#[derive(Args, Debug)]
pub struct NormalArgs {
    /// Origin of the normal chart.
    #[arg(long, allow_hyphen_values = true)]
    at: Option<List<f64>>,
    /// Largest sampling radius; the rest halve it.
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    fit_radius: Option<f64>,
}

#[derive(Args, Debug)]
pub struct DeformArgs {
    /// `sin-x`, `linear:a11,a12,..`, `gaussian-bump:sigma`, or a field file.
    #[arg(long)]
    field: Option<String>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    eps: Option<List<f64>>,
    #[arg(long, allow_hyphen_values = true)]
    at: Option<List<f64>>,
}

#[derive(Args, Debug)]
pub struct SpectrumArgs {
    /// `SCH`, `DW` or `NU:<nu>`.
    #[arg(long)]
    variant: Option<String>,
    /// Nodes per axis (one value for all axes).
    #[arg(long = "N")]
    nodes: Option<List<usize>>,
    #[arg(long)]
    k: Option<usize>,
    /// Excise this many cells at both ends of every bounded, non-periodic axis.
    #[arg(long)]
    guard_cells: Option<usize>,
}

#[derive(Args, Debug)]
pub struct AnomalyArgs {
    /// Second chart of the same manifold.
    #[arg(long)]
    chart_b: Option<String>,
    #[arg(long)]
    variant: Option<String>,
    #[arg(long = "N")]
    nodes: Option<List<usize>>,
    #[arg(long)]
    k: Option<usize>,
}

#[derive(Args, Debug)]
pub struct PropagatorArgs {
    /// Fixed end point `q`.
    #[arg(long, allow_hyphen_values = true)]
    at: Option<List<f64>>,
    /// Geodesic separations of `q′` from `q`.
    #[arg(long)]
    seps: Option<List<f64>>,
    #[arg(long)]
    dt: Option<f64>,
}

#[derive(Args, Debug)]
pub struct ConformalArgs {
    /// Dimensions to tabulate (default 1..8).
    #[arg(long)]
    n: Option<List<u32>>,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Curvature(_) => "curvature",
            Command::Qmp(_) => "qmp",
            Command::Normal(_) => "normal",
            Command::Deform(_) => "deform",
            Command::Spectrum(_) => "spectrum",
            Command::Anomaly(_) => "anomaly",
            Command::Propagator(_) => "propagator",
            Command::Conformal(_) => "conformal",
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let start = Instant::now();
    let name = cli.command.name();
    let mut r = Resolver::load(cli.common.config.as_deref())?;
    let format = r.or("format", cli.common.format, Format::Csv)?;
    let out: PathBuf = r.or(
        "out",
        cli.common.out.clone(),
        PathBuf::from(format!("{name}.{}", format.extension())),
    )?;
    let table = commands::dispatch(&mut r, &cli.common, &cli.command)?;
    r.check_unused()?;
    table.write(&out, format)?;
    let manifest = json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "command": name,
        "argv": std::env::args().collect::<Vec<_>>(),
        "config": r.resolved(),
        "config_toml": r.to_toml()?,
        "output": { "path": out, "format": format, "rows": table.rows.len() },
        "timings": { "total_seconds": start.elapsed().as_secs_f64() },
    });
    let mpath = manifest_path(&out);
    std::fs::write(&mpath, serde_json::to_string_pretty(&manifest)? + "\n")
        .map_err(|e| anyhow::anyhow!("writing {}: {e}", mpath.display()))?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let msg = e.to_string();
            eprintln!("{}", msg.lines().next().unwrap_or("error: invalid arguments"));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
