//! `stokes-darcy` command-line driver.
//!
//! Exit codes: 0 on success, 1 on usage or validation failure, 2 when the
//! linear solver fails.

mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::error::ErrorKind;
use clap::Parser;
use stokes_darcy::cases::{run_case, Permeability};
use stokes_darcy::solve::FAIL_ABOVE;
use stokes_darcy::verify::TableRegion;
use stokes_darcy::vtk::write_vtk_file;
use stokes_darcy::{
    assemble, build_layout, compute_errors, convergence_sweep, generate_mesh_with, read_mesh, solve, write_mesh,
    CaseDefinition, CaseId, ConvergenceTable, Error, ExactSolution, Mesh, MeshOptions, ProblemConfig, SweepConfig,
};

use config::{Cli, CommandKind, FileValues, KappaArg, RunConfig};

/// Demo flux balance tolerance, relative to the inflow.
const FLUX_TOLERANCE: f64 = 1e-8;

#[derive(Debug)]
enum Failure {
    Usage(String),
    Validation(String),
    Solver(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) | Failure::Validation(_) => 1,
            Failure::Solver(_) => 2,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Factorization { .. } => Failure::Solver(e.to_string()),
            other => Failure::Validation(other.to_string()),
        }
    }
}

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Validation(format!("{}: {e}", path.display()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Usage(m) => eprintln!("error: {m}\n\nFor more information, try '--help'."),
                Failure::Validation(m) => eprintln!("error: {m}"),
                Failure::Solver(m) => eprintln!("solver error: {m}"),
            }
            ExitCode::from(f.code())
        }
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let file = match &cli.config {
        Some(path) => FileValues::read(path).map_err(Failure::Usage)?,
        None => FileValues::default(),
    };
    let cfg = config::resolve(cli, &file).map_err(Failure::Usage)?;
    log::debug!("{cfg:?}");
    fs::create_dir_all(&cfg.out).map_err(|e| io_failure(&cfg.out, e))?;
    match cfg.command {
        CommandKind::Convergence => convergence(&cfg),
        CommandKind::Solve => solve_one(&cfg),
        CommandKind::Demo => demo(&cfg),
        CommandKind::Mesh => mesh(&cfg),
    }
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| io_failure(path, e))?;
    println!("wrote {}", path.display());
    Ok(())
}

/// Mesh from `--mesh`, or a generated one, plus a label for file names.
fn load_mesh(cfg: &RunConfig) -> Result<(Mesh, String), Failure> {
    match &cfg.mesh {
        Some(path) => {
            let mesh = read_mesh(path)?;
            let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "mesh".into());
            Ok((mesh, stem))
        }
        None => {
            let mesh = generate_mesh_with(cfg.n, MeshOptions { perturb_seed: cfg.perturb_seed })?;
            let label = match cfg.perturb_seed {
                Some(s) => format!("n{}_s{s}", cfg.n),
                None => format!("n{}", cfg.n),
            };
            Ok((mesh, label))
        }
    }
}

fn print_rates(table: &ConvergenceTable) {
    for region in TableRegion::ALL {
        let series = table.series(region);
        let (u, p) = table.final_rates(region);
        let fmt = |r: Option<f64>| r.map(|v| format!("{v:.2}")).unwrap_or_else(|| "-".into());
        if let Some(last) = series.last() {
            println!(
                "{:<7} |u-u_h| {:.3e} rate {:>5}   |p-p_h| {:.3e} rate {:>5}",
                region.name(),
                last.0,
                fmt(u),
                last.1,
                fmt(p)
            );
        }
    }
}

fn convergence(cfg: &RunConfig) -> Result<(), Failure> {
    let sweep = SweepConfig {
        levels: cfg.levels.clone(),
        k: cfg.k,
        mu: cfg.mu,
        kappa: cfg.manufactured_kappa(),
        beta_coeff: cfg.beta_coeff,
        perturb_seed: cfg.perturb_seed,
    };
    let started = Instant::now();
    let table = convergence_sweep(&sweep)?;
    let name = match cfg.perturb_seed {
        Some(s) => format!("convergence_k{}_s{s}.csv", cfg.k),
        None => format!("convergence_k{}.csv", cfg.k),
    };
    write(&cfg.out.join(name), &table.to_csv())?;
    print_rates(&table);
    let worst = table.rows.iter().map(|r| r.solver_residual).fold(0.0, f64::max);
    println!("{} levels in {:.1?}, max solver residual {worst:.1e}", table.rows.len(), started.elapsed());
    Ok(())
}

fn solve_one(cfg: &RunConfig) -> Result<(), Failure> {
    let (mesh, label) = load_mesh(cfg)?;
    let h = if cfg.mesh.is_some() { mesh.h_max() } else { 1.0 / cfg.n as f64 };
    let kappa = cfg.manufactured_kappa();
    let exact = ExactSolution::new(cfg.mu, kappa);
    let problem = ProblemConfig::new(exact.case_definition(), cfg.k).with_beta(cfg.beta_coeff * (cfg.k * cfg.k) as f64);
    let layout = build_layout(&mesh, cfg.k, &problem.case)?;
    let system = assemble(&mesh, &layout, &problem)?;
    let fields = solve(&system, &layout)?;
    let report = compute_errors(&fields, &exact, &mesh, h);

    let table = ConvergenceTable {
        config: SweepConfig {
            levels: vec![cfg.n],
            k: cfg.k,
            mu: cfg.mu,
            kappa,
            beta_coeff: cfg.beta_coeff,
            perturb_seed: cfg.perturb_seed,
        },
        rows: vec![report.clone()],
    };
    let stem = format!("solve_k{}_{label}", cfg.k);
    write(&cfg.out.join(format!("{stem}.csv")), &table.to_csv())?;
    let vtk = cfg.out.join(format!("{stem}.vtk"));
    write_vtk_file(&vtk, &mesh, &fields, &Permeability::Constant(kappa)).map_err(|e| io_failure(&vtk, e))?;
    println!("wrote {}", vtk.display());

    println!("{} cells, {} unknowns, k={}", mesh.num_cells(), system.dim(), cfg.k);
    println!("residual {:.2e}", fields.residual);
    println!(
        "stokes |u-u_h| {:.3e} |p-p_h| {:.3e}; darcy |u-u_h| {:.3e} |p-p_h| {:.3e}",
        report.stokes.velocity, report.stokes.pressure, report.darcy.velocity, report.darcy.pressure
    );
    println!(
        "divergence {:.1e}, normal jump {:.1e}",
        report.stokes.divergence.max(report.darcy.divergence),
        report.jump
    );
    if fields.residual > FAIL_ABOVE {
        return Err(Failure::Solver(format!("residual {:.2e} above {FAIL_ABOVE:.0e}", fields.residual)));
    }
    Ok(())
}

fn demo(cfg: &RunConfig) -> Result<(), Failure> {
    let (mesh, label) = load_mesh(cfg)?;
    let mesh = if mesh.case() == CaseId::SurfaceSubsurface {
        mesh
    } else {
        mesh.classify(CaseId::SurfaceSubsurface)?
    };
    let case = match cfg.kappa {
        KappaArg::Case => CaseDefinition::surface_subsurface(),
        KappaArg::Value(v) => CaseDefinition::surface_subsurface_with(Permeability::Constant(v)),
    };
    let kappa = case.kappa.clone();
    let problem = ProblemConfig::new(case, cfg.k).with_beta(cfg.beta_coeff * (cfg.k * cfg.k) as f64);
    let started = Instant::now();
    let result = run_case(&mesh, problem)?;
    let elapsed = started.elapsed();

    let stem = format!("demo_k{}_{label}", cfg.k);
    let vtk = cfg.out.join(format!("{stem}.vtk"));
    write_vtk_file(&vtk, &mesh, &result.fields, &kappa).map_err(|e| io_failure(&vtk, e))?;
    println!("wrote {}", vtk.display());

    let imbalance = result.flux.relative_imbalance();
    let mut report = String::new();
    let _ = writeln!(report, "cells {}", mesh.num_cells());
    let _ = writeln!(report, "k {}", cfg.k);
    for (class, flux) in &result.flux.per_class {
        let _ = writeln!(report, "flux {} {:.6e}", class.name(), flux);
    }
    let _ = writeln!(report, "net {:.3e}", result.flux.net);
    let _ = writeln!(report, "relative_imbalance {imbalance:.3e}");
    let _ = writeln!(report, "max_divergence {:.3e}", result.residuals.max_divergence());
    let _ = writeln!(report, "max_normal_jump {:.3e}", result.residuals.jump);
    let _ = writeln!(report, "interface_pressure_jump {:.3e}", result.interface_pressure_jump);
    let _ = writeln!(report, "solver_residual {:.3e}", result.fields.residual);
    write(&cfg.out.join(format!("{stem}_flux.txt")), &report)?;
    print!("{report}");
    println!("solved in {elapsed:.1?}");

    if imbalance > FLUX_TOLERANCE {
        return Err(Failure::Validation(format!(
            "flux imbalance {imbalance:.2e} exceeds {FLUX_TOLERANCE:.0e}"
        )));
    }
    Ok(())
}

fn mesh(cfg: &RunConfig) -> Result<(), Failure> {
    let (mesh, label) = load_mesh(cfg)?;
    mesh.validate()?;
    println!(
        "{} vertices, {} cells, {} facets, h_max {:.4}",
        mesh.vertices().len(),
        mesh.num_cells(),
        mesh.facets().len(),
        mesh.h_max()
    );
    if cfg.mesh.is_none() {
        let path: PathBuf = cfg.out.join(format!("mesh_{label}.txt"));
        write_mesh(&mesh, &path)?;
        println!("wrote {}", path.display());
    } else {
        println!("mesh is valid");
    }
    Ok(())
}
