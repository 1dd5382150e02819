//! Batch front-end: read a run configuration, execute a simulation or a
//! convergence study, and leave tables, diagnostics, and a reproducible
//! manifest in the output directory.
//!
//! Usage: qge --config <path> [--mode <mode>] [--out <dir>]
//!
//! Exit status: 0 on success, 2 for configuration errors, 3 for solver
//! failures, 4 for I/O failures. When a study row fails, the rows completed
//! before it are still written out.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use qge::argyris::{build_space, ScalarField};
use qge::config::{RunConfig, RunMode};
use qge::forms::assemble_linear_forms;
use qge::mesh::generate_rectangle_mesh;
use qge::mms::{
    boundary_layer, run_discrete_study, run_study_partial, smooth_vortex, study_csv,
    ManufacturedSolution, StudyConfig, StudyPoint, StudyRow,
};
use qge::stepper::{diagnostics_csv, run_simulation, Forcing, SolverConfig};
use qge::QgeError;

const USAGE: &str = "usage: qge --config <path> [--mode <mode>] [--out <dir>]";

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err);
            ExitCode::from(exit_code(&err))
        }
    }
}

/// Stable exit codes per error class, so scripts can tell a bad config from
/// a diverged solve from a disk problem.
fn exit_code(err: &QgeError) -> u8 {
    match err {
        QgeError::ConfigParse { .. } | QgeError::InvalidConfig(_) | QgeError::InvalidMesh(_) => 2,
        QgeError::Io { .. } => 4,
        _ => 3,
    }
}

struct Cli {
    config: PathBuf,
    mode: Option<RunMode>,
    out: Option<PathBuf>,
}

fn parse_args(args: &[String]) -> Result<Cli, QgeError> {
    let mut config = None;
    let mut mode = None;
    let mut out = None;
    let mut iter = args.iter();
    while let Some(arg) = iter.next() {
        let mut value = |flag: &str| {
            iter.next()
                .cloned()
                .ok_or_else(|| QgeError::InvalidConfig(format!("{} needs a value\n{}", flag, USAGE)))
        };
        match arg.as_str() {
            "--config" => config = Some(PathBuf::from(value("--config")?)),
            "--mode" => {
                let name = value("--mode")?;
                mode = Some(RunMode::parse(&name).ok_or_else(|| {
                    QgeError::InvalidConfig(format!("unknown mode {:?}\n{}", name, USAGE))
                })?);
            }
            "--out" => out = Some(PathBuf::from(value("--out")?)),
            other => {
                return Err(QgeError::InvalidConfig(format!(
                    "unknown argument {:?}\n{}",
                    other, USAGE
                )));
            }
        }
    }
    let config = config
        .ok_or_else(|| QgeError::InvalidConfig(format!("--config is required\n{}", USAGE)))?;
    Ok(Cli { config, mode, out })
}

fn run(args: &[String]) -> Result<(), QgeError> {
    let cli = parse_args(args)?;
    let text = std::fs::read_to_string(&cli.config)
        .map_err(|e| QgeError::io(cli.config.display().to_string(), e))?;
    let mut cfg = RunConfig::from_text(&text, cli.mode, cli.out)?;
    match std::env::var("QGE_THREADS") {
        Ok(raw) => {
            cfg.workers = raw.parse::<usize>().ok().filter(|&n| n >= 1).ok_or_else(|| {
                QgeError::InvalidConfig(format!(
                    "QGE_THREADS must be a positive integer, got {:?}",
                    raw
                ))
            })?;
        }
        Err(_) => {}
    }
    std::fs::create_dir_all(&cfg.out_dir)
        .map_err(|e| QgeError::io(cfg.out_dir.display().to_string(), e))?;

    let start = Instant::now();
    match cfg.mode {
        RunMode::SingleRun => run_single(&cfg, start),
        RunMode::StudyTest1 => run_benchmark_study(&cfg, &smooth_vortex(), start),
        RunMode::StudyTest2 => run_benchmark_study(&cfg, &boundary_layer(), start),
        RunMode::CustomMms => run_custom_study(&cfg, start),
    }
}

fn study_settings(cfg: &RunConfig) -> StudyConfig {
    StudyConfig {
        reynolds: cfg.reynolds,
        rossby: cfg.rossby,
        t_final: cfg.t_final,
        solver: cfg.solver,
        newton_tol: cfg.newton_tol,
        newton_max_iters: cfg.newton_max_iters,
        workers: cfg.workers,
    }
}

fn study_points(cfg: &RunConfig) -> Vec<StudyPoint> {
    cfg.h_list.iter().map(|&h| StudyPoint { dt: cfg.dt, h }).collect()
}

fn run_benchmark_study(
    cfg: &RunConfig,
    sol: &ManufacturedSolution,
    start: Instant,
) -> Result<(), QgeError> {
    let (rows, failure) = run_study_partial(sol, &study_settings(cfg), &study_points(cfg));
    finish_study(cfg, &rows, start)?;
    match failure {
        Some(err) => Err(err),
        None => Ok(()),
    }
}

fn run_custom_study(cfg: &RunConfig, start: Instant) -> Result<(), QgeError> {
    // Rows are independent (each reseeds from the configured seed), so run
    // them one at a time and keep the finished prefix if a later one fails.
    let settings = study_settings(cfg);
    let mut rows = Vec::new();
    let mut failure = None;
    for point in study_points(cfg) {
        match run_discrete_study(
            &settings,
            cfg.width,
            cfg.height,
            &[point],
            cfg.alpha,
            cfg.beta,
            cfg.seed,
        ) {
            Ok(mut row) => rows.append(&mut row),
            Err(err) => {
                failure = Some(err);
                break;
            }
        }
    }
    finish_study(cfg, &rows, start)?;
    match failure {
        Some(err) => Err(err),
        None => Ok(()),
    }
}

/// Write whatever rows a study produced, plus the manifest and optional
/// plot script. Called on both success and failure so partial tables survive.
fn finish_study(cfg: &RunConfig, rows: &[StudyRow], start: Instant) -> Result<(), QgeError> {
    let table = study_csv(rows);
    print!("{}", table);
    write_file(&cfg.out_dir.join("table.csv"), &table)?;
    if cfg.emit_plot {
        write_file(&cfg.out_dir.join("plot.gnuplot"), &plot_script())?;
    }
    write_manifest(cfg, start)
}

fn run_single(cfg: &RunConfig, start: Instant) -> Result<(), QgeError> {
    let mesh = generate_rectangle_mesh(cfg.width, cfg.height, cfg.nx, cfg.ny)?;
    let space = build_space(mesh)?;
    let forms = assemble_linear_forms(&space);
    let n_steps = (cfg.t_final / cfg.dt).round().max(1.0);
    let solver_cfg = SolverConfig {
        reynolds: cfg.reynolds,
        rossby: cfg.rossby,
        dt: cfg.t_final / n_steps,
        t_final: cfg.t_final,
        newton_tol: cfg.newton_tol,
        newton_max_iters: cfg.newton_max_iters,
        linear_solver: cfg.solver,
    };
    let vortex = smooth_vortex();
    let spun_up = vortex.field_at(std::f64::consts::FRAC_PI_2);
    let initial: &dyn ScalarField = match cfg.initial {
        qge::config::InitialState::Zero => &Rest,
        qge::config::InitialState::Vortex => &spun_up,
    };
    let result = run_simulation(&space, &forms, solver_cfg, initial, &Forcing::Zero)?;
    let table = diagnostics_csv(&result.diagnostics);
    print!("{}", table);
    write_file(&cfg.out_dir.join("diagnostics.csv"), &table)?;
    write_manifest(cfg, start)
}

/// Fluid at rest: the zero field.
struct Rest;

impl ScalarField for Rest {
    fn value(&self, _x: f64, _y: f64) -> f64 {
        0.0
    }
    fn gradient(&self, _x: f64, _y: f64) -> [f64; 2] {
        [0.0, 0.0]
    }
    fn hessian(&self, _x: f64, _y: f64) -> [f64; 3] {
        [0.0, 0.0, 0.0]
    }
}

fn write_manifest(cfg: &RunConfig, start: Instant) -> Result<(), QgeError> {
    let manifest = cfg.manifest(env!("CARGO_PKG_VERSION"), start.elapsed().as_secs_f64());
    write_file(&cfg.out_dir.join("manifest.txt"), &manifest)
}

fn write_file(path: &Path, content: &str) -> Result<(), QgeError> {
    std::fs::write(path, content).map_err(|e| QgeError::io(path.display().to_string(), e))
}

/// A gnuplot script for the standard log-log error-versus-mesh-size figure.
/// It reads the table CSV sitting next to it; columns 4, 6, 8 hold the three
/// error norms.
fn plot_script() -> String {
    "set datafile separator ','\n\
     set logscale xy\n\
     set xlabel 'h'\n\
     set ylabel 'final-time error'\n\
     set key left top\n\
     set grid\n\
     plot 'table.csv' every ::1 using 2:4 with linespoints title 'L2', \\\n\
     \x20    'table.csv' every ::1 using 2:6 with linespoints title 'H1', \\\n\
     \x20    'table.csv' every ::1 using 2:8 with linespoints title 'H2'\n"
        .to_string()
}
