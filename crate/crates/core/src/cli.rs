//! Command-line front end: `solve`, `convergence` and `singular-demo`.
//!
//! Exit codes: 0 success, 1 configuration error, 2 singular system,
//! 3 failed self-check.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Deserialize;
use thiserror::Error;

use crate::analysis::{run_convergence_study, solve_level, stabilization_sweep, AnalysisError};
use crate::output;
use crate::problem::{HRefMode, ProblemSpec};
use crate::solver::SolveError;
use crate::spaces::MultiplierSpace;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_SINGULAR: i32 = 2;
pub const EXIT_ASSERTION: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "lps-fd",
    version,
    about = "Stabilized fictitious domain solver for the Poisson problem"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve once and write solution.csv, multiplier.csv, macros.csv and summary.txt.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a refinement study and write convergence.csv (and convergence.svg).
    Convergence {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        svg: bool,
    },
    /// Check which stabilization / multiplier-space combinations are singular.
    SingularDemo {
        #[arg(long)]
        config: PathBuf,
    },
}

/// Contents of the JSON configuration file. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub problem_id: String,
    pub a: f64,
    pub n: usize,
    pub c_s: f64,
    pub multiplier_space: MultiplierSpace,
    pub kmin: f64,
    pub kmax: f64,
    pub h_ref: HRefMode,
    pub n_list: Vec<usize>,
    pub c_s_list: Vec<f64>,
    pub plot: bool,
    pub out_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let spec = ProblemSpec::default();
        Self {
            problem_id: spec.problem_id,
            a: spec.a,
            n: spec.n,
            c_s: spec.c_s,
            multiplier_space: spec.multiplier_space,
            kmin: spec.kmin,
            kmax: spec.kmax,
            h_ref: spec.h_ref,
            n_list: vec![8, 16, 32, 64, 128],
            c_s_list: Vec::new(),
            plot: false,
            out_dir: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn spec(&self) -> ProblemSpec {
        ProblemSpec {
            problem_id: self.problem_id.clone(),
            a: self.a,
            n: self.n,
            c_s: self.c_s,
            multiplier_space: self.multiplier_space,
            kmin: self.kmin,
            kmax: self.kmax,
            h_ref: self.h_ref,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.spec()
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        if let Some(bad) = self
            .c_s_list
            .iter()
            .find(|c| !(**c >= 0.0) || !c.is_finite())
        {
            return Err(CliError::Config(format!(
                "c_s_list entry {bad} is not a non-negative number"
            )));
        }
        Ok(())
    }

    fn validate_levels(&self) -> Result<(), CliError> {
        let l = &self.n_list;
        if l.len() < 3 || l[0] == 0 || l.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CliError::Config(format!(
                "n_list must be strictly increasing positive integers with at least 3 entries, got {l:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("singular matrix for C_s = {c_s} with {space} multipliers: {source}")]
    Singular {
        c_s: f64,
        space: MultiplierSpace,
        source: AnalysisError,
    },
    #[error("{0}")]
    Failed(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io { .. } => EXIT_CONFIG,
            CliError::Singular { .. } => EXIT_SINGULAR,
            CliError::Failed(_) => EXIT_ASSERTION,
        }
    }

    fn from_analysis(err: AnalysisError, spec: &ProblemSpec) -> Self {
        match &err {
            AnalysisError::Solve {
                source: SolveError::SingularMatrix { .. },
                ..
            } => CliError::Singular {
                c_s: spec.c_s,
                space: spec.multiplier_space,
                source: err,
            },
            AnalysisError::Problem(_)
            | AnalysisError::Geometry(_)
            | AnalysisError::InvalidLevels(_) => CliError::Config(err.to_string()),
            _ => CliError::Failed(err.to_string()),
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })
}

fn io_at(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn prepare_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_at(dir))
}

pub fn cmd_solve(cfg: &RunConfig, out: &Path, log: &mut impl Write) -> Result<(), CliError> {
    let spec = cfg.spec();
    let (disc, sol, row) = solve_level(&spec).map_err(|e| CliError::from_analysis(e, &spec))?;
    prepare_dir(out)?;

    let path = out.join("solution.csv");
    let mut w = create(&path)?;
    output::write_solution_csv(&mut w, &disc.mesh, &sol.u)
        .and_then(|_| w.flush())
        .map_err(io_at(&path))?;

    let path = out.join("multiplier.csv");
    let mut w = create(&path)?;
    output::write_multiplier_csv(&mut w, &disc.fine, &sol.lambda)
        .and_then(|_| w.flush())
        .map_err(io_at(&path))?;

    let path = out.join("macros.csv");
    let mut w = create(&path)?;
    output::write_macro_csv(&mut w, &disc.macros)
        .and_then(|_| w.flush())
        .map_err(io_at(&path))?;

    let r = &sol.report;
    let summary = format!(
        "problem_id = {}\na = {}\nn = {}\nc_s = {}\nmultiplier_space = {}\n\
         h = {}\nh_gamma = {}\nn_u = {}\nn_l = {}\nn_macro = {}\n\
         err_h1 = {}\nerr_l2_gamma = {}\nfluct_norm = {}\nenergy_residual = {}\n\
         residual_norm = {}\nrelative_residual = {}\nmin_pivot_ratio = {}\nnear_singular = {}\n",
        spec.problem_id,
        spec.a,
        spec.n,
        spec.c_s,
        spec.multiplier_space,
        output::fmt_real(row.h),
        output::fmt_real(row.h_gamma),
        r.n_u,
        r.n_l,
        disc.macros.len(),
        output::fmt_real(row.err_h1),
        output::fmt_real(row.err_l2_gamma),
        output::fmt_real(row.fluct_norm),
        output::fmt_real(row.energy_residual),
        output::fmt_real(sol.residual_norm),
        output::fmt_real(r.relative_residual),
        output::fmt_real(r.min_pivot_ratio),
        r.near_singular,
    );
    let path = out.join("summary.txt");
    fs::write(&path, &summary).map_err(io_at(&path))?;
    log.write_all(summary.as_bytes()).map_err(io_at(&path))?;
    Ok(())
}

pub fn cmd_convergence(
    cfg: &RunConfig,
    out: &Path,
    svg: bool,
    log: &mut impl Write,
) -> Result<(), CliError> {
    cfg.validate_levels()?;
    let spec = cfg.spec();
    let report =
        run_convergence_study(&spec, &cfg.n_list).map_err(|e| CliError::from_analysis(e, &spec))?;
    prepare_dir(out)?;

    let path = out.join("convergence.csv");
    let mut w = create(&path)?;
    output::write_convergence_csv(&mut w, &report.rows)
        .and_then(|_| w.flush())
        .map_err(io_at(&path))?;

    if svg || cfg.plot {
        let path = out.join("convergence.svg");
        fs::write(&path, output::convergence_svg(&report)).map_err(io_at(&path))?;
    }

    let stdout_err = io_at(out);
    writeln!(
        log,
        "{:>6} {:>12} {:>14} {:>14}",
        "n", "h", "err_h1", "err_l2_gamma"
    )
    .map_err(&stdout_err)?;
    for r in &report.rows {
        writeln!(
            log,
            "{:>6} {:>12.5e} {:>14.6e} {:>14.6e}",
            r.n, r.h, r.err_h1, r.err_l2_gamma
        )
        .map_err(&stdout_err)?;
    }
    for (w, (r1, r2)) in report.rows.windows(2).zip(&report.pairwise) {
        writeln!(
            log,
            "rate {} -> {}: h1 {:.4}, l2_gamma {:.4}",
            w[0].n, w[1].n, r1, r2
        )
        .map_err(&stdout_err)?;
    }
    writeln!(log, "slope_h1 = {:.6}", report.slope_h1).map_err(&stdout_err)?;
    writeln!(log, "slope_l2_gamma = {:.6}", report.slope_l2_gamma).map_err(&stdout_err)?;

    if !cfg.c_s_list.is_empty() {
        let sweep = stabilization_sweep(&spec, &cfg.c_s_list)
            .map_err(|e| CliError::from_analysis(e, &spec))?;
        let path = out.join("cs_sweep.csv");
        let mut w = create(&path)?;
        output::write_sweep_csv(&mut w, &sweep)
            .and_then(|_| w.flush())
            .map_err(io_at(&path))?;
        for (c_s, r) in &sweep {
            writeln!(log, "c_s = {c_s:<8} err_h1 = {:.6e}", r.err_h1).map_err(&stdout_err)?;
        }
    }
    Ok(())
}

/// Outcome of one singular-demo variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Solvability {
    Solvable,
    Singular,
}

/// The four variants and the outcome expected for each.
pub const SINGULAR_DEMO_VARIANTS: [(f64, MultiplierSpace, Solvability); 4] = [
    (0.1, MultiplierSpace::Fine, Solvability::Solvable),
    (0.0, MultiplierSpace::Fine, Solvability::Singular),
    (0.0, MultiplierSpace::Macro, Solvability::Solvable),
    (0.1, MultiplierSpace::Macro, Solvability::Solvable),
];

pub fn singular_demo_pattern(spec: &ProblemSpec) -> Result<Vec<Solvability>, CliError> {
    SINGULAR_DEMO_VARIANTS
        .iter()
        .map(|&(c_s, space, _)| {
            let s = ProblemSpec {
                c_s,
                multiplier_space: space,
                ..spec.clone()
            };
            match solve_level(&s) {
                Ok(_) => Ok(Solvability::Solvable),
                Err(e) if e.is_singular() => Ok(Solvability::Singular),
                Err(e) => Err(CliError::from_analysis(e, &s)),
            }
        })
        .collect()
}

pub fn cmd_singular_demo(cfg: &RunConfig, log: &mut impl Write) -> Result<(), CliError> {
    let spec = cfg.spec();
    let pattern = singular_demo_pattern(&spec)?;
    let io = |e: std::io::Error| CliError::Failed(format!("writing report: {e}"));
    writeln!(
        log,
        "n = {}, a = {}, problem = {}",
        spec.n, spec.a, spec.problem_id
    )
    .map_err(io)?;
    writeln!(
        log,
        "{:>6} {:>10} {:>10} {:>10}",
        "C_s", "space", "observed", "expected"
    )
    .map_err(io)?;
    let mut matches = true;
    for (&(c_s, space, expected), got) in SINGULAR_DEMO_VARIANTS.iter().zip(&pattern) {
        let label = |s: Solvability| match s {
            Solvability::Solvable => "OK",
            Solvability::Singular => "SINGULAR",
        };
        writeln!(
            log,
            "{c_s:>6} {:>10} {:>10} {:>10}",
            space.to_string(),
            label(*got),
            label(expected)
        )
        .map_err(io)?;
        matches &= *got == expected;
    }
    if !matches {
        return Err(CliError::Failed(
            "observed solvability pattern differs from the expected (OK, SINGULAR, OK, OK)".into(),
        ));
    }
    writeln!(log, "pattern reproduced").map_err(io)?;
    Ok(())
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, T>(args: I, out: &mut impl Write, err: &mut impl Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(err, "{e}");
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    EXIT_OK
                }
                _ => EXIT_CONFIG,
            };
        }
    };
    let result = match &cli.command {
        Command::Solve { config, out: dir } => {
            RunConfig::load(config).and_then(|cfg| cmd_solve(&cfg, dir, out))
        }
        Command::Convergence {
            config,
            out: dir,
            svg,
        } => RunConfig::load(config).and_then(|cfg| cmd_convergence(&cfg, dir, *svg, out)),
        Command::SingularDemo { config } => {
            RunConfig::load(config).and_then(|cfg| cmd_singular_demo(&cfg, out))
        }
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
