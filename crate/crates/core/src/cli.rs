//! Command-line front end. [`run`] parses arguments, dispatches, writes the
//! report and returns the process exit code.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::bench::{cost_table, detection_table, CostRow, DetectionRow, COST_RHOS};
use crate::circuit::{prunable_columns, Circuit};
use crate::error::{Error, Result};
use crate::instance::{
    orthonormal_row_instance, planted_circuit_matrix, planted_near_instance, PlantSpec,
};
use crate::io::{load_matrix, save_matrix, Format};
use crate::matrix::{lq_factor, DenseMatrix, IndexSet, Tolerances};
use crate::near::{minimal_epsilon_bisection, near_search, BisectionConfig, NearConfig};
use crate::random_search::{enumerate_circuits, search, SearchConfig, SearchStatus, Variant};
use crate::report::{
    BisectionStep, CircuitEntry, Manifest, MatrixInfo, Mode, Outcome, Report, Stats, Status,
    REPORT_VERSION,
};
use crate::systematic::circuitfind;

pub const EXIT_FOUND: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NOT_FOUND: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "circuitry", version, about = "Find, exclude and approximate circuits (minimal dependent column sets) of dense matrices")]
struct Cli {
    /// Worker threads (default: available parallelism). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Randomized search for a circuit of size at most --max-size.
    Find(FindArgs),
    /// Exhaustive search that either finds a circuit or proves none exists.
    Exclude(ExcludeArgs),
    /// Randomized search for an epsilon-near circuit.
    Near(NearArgs),
    /// Reproduce the detection-frequency or search-cost tables.
    Bench(BenchArgs),
    /// Generate a test matrix and a manifest of its planted column sets.
    Gen(GenArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FormatArg {
    Matrixmarket,
    Csv,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Matrixmarket => Format::MatrixMarket,
            FormatArg::Csv => Format::Csv,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum VariantArg {
    Q,
    Qstar,
}

#[derive(Debug, Args)]
struct InputArgs {
    /// Matrix file (Matrix Market or headerless CSV).
    #[arg(long)]
    input: PathBuf,
    /// Input format; detected from the extension or banner when omitted.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Largest circuit size of interest.
    #[arg(long)]
    max_size: usize,
    #[arg(long, env = "CIRCUITRY_SEED", default_value_t = 0)]
    seed: u64,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Relative singular-value threshold for numerical rank.
    #[arg(long)]
    rank_tol: Option<f64>,
    /// Relative magnitude threshold for numerical support.
    #[arg(long)]
    support_tol: Option<f64>,
}

impl InputArgs {
    fn tolerances(&self) -> Result<Tolerances> {
        Tolerances::new(self.rank_tol, self.support_tol)
    }

    fn load(&self) -> Result<DenseMatrix> {
        load_matrix(&self.input, self.format.map(Format::from))
    }

    fn info(&self, a: &DenseMatrix) -> MatrixInfo {
        MatrixInfo {
            rows: a.rows(),
            cols: a.cols(),
            source: self.input.display().to_string(),
        }
    }

    fn check_size(&self, a: &DenseMatrix) -> Result<()> {
        if self.max_size == 0 || self.max_size > a.cols() {
            return Err(Error::Infeasible(format!(
                "--max-size must lie in 1..={} for this matrix, got {}",
                a.cols(),
                self.max_size
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Args)]
struct FindArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Required confidence 1 - epsilon that no circuit was missed.
    #[arg(long, default_value_t = 0.99)]
    confidence: f64,
    #[arg(long, value_enum, default_value = "q")]
    variant: VariantArg,
    #[arg(long)]
    max_trials: Option<u64>,
    /// Keep searching after each find, deleting a column of every circuit found.
    #[arg(long)]
    all: bool,
}

#[derive(Debug, Args)]
struct ExcludeArgs {
    #[command(flatten)]
    input: InputArgs,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("eps").required(true).args(["epsilon", "bisect"])))]
struct NearArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Residual threshold.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Search for the smallest workable epsilon in [--eps-lo, --eps-hi].
    #[arg(long, requires_all = ["eps_lo", "eps_hi"])]
    bisect: bool,
    #[arg(long)]
    eps_lo: Option<f64>,
    #[arg(long)]
    eps_hi: Option<f64>,
    #[arg(long, default_value_t = 20)]
    iters: usize,
    /// Residual miss probability at which a search gives up.
    #[arg(long, default_value_t = 0.01)]
    delta: f64,
    #[arg(long)]
    max_trials: Option<u64>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// 1: single-trial detection frequency; 2: null-space evaluations to find one circuit.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    table: u8,
    #[arg(long, default_value_t = 100)]
    n_cols: usize,
    /// Trials per row (table 1, default 1000) or attempts per row (table 2, default 100).
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long, env = "CIRCUITRY_SEED", default_value_t = 0)]
    seed: u64,
    /// Rank ratios for table 2 (default 0.9,0.7,0.5,0.3).
    #[arg(long, value_delimiter = ',')]
    rhos: Option<Vec<f64>>,
    /// Write the JSON rows here.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long)]
    n_cols: usize,
    /// Rank ratio m / N; rho * N must be an integer.
    #[arg(long)]
    rho: Option<f64>,
    /// Planted circuit sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    sizes: Vec<usize>,
    /// Plant a near dependency with this smallest singular value (one size).
    #[arg(long)]
    near_sigma: Option<f64>,
    /// Row count for near instances (default rho * N).
    #[arg(long)]
    rows: Option<usize>,
    /// Orthonormalize the rows (one size).
    #[arg(long, conflicts_with = "near_sigma")]
    orthonormal: bool,
    #[arg(long, env = "CIRCUITRY_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "matrixmarket")]
    format: FormatArg,
    #[arg(long)]
    output: PathBuf,
    /// Manifest path (default: the matrix path with `.json` appended).
    #[arg(long)]
    manifest: Option<PathBuf>,
}

/// Runs the CLI with `args` (including the program name) and returns the
/// exit code.
pub fn run<I, T>(args: I, stdout: &mut (dyn Write + Send), stderr: &mut (dyn Write + Send)) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_FOUND };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                write!(stderr, "{text}")
            } else {
                write!(stdout, "{text}")
            };
            return code;
        }
    };
    let threads = cli
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if threads == 0 {
        let _ = writeln!(stderr, "error: --threads must be at least 1");
        return EXIT_USAGE;
    }
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(stderr, "error: cannot start {threads} threads: {e}");
            return EXIT_USAGE;
        }
    };
    match pool.install(|| dispatch(cli.command, stdout, stderr)) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            EXIT_INPUT
        }
    }
}

fn dispatch(cmd: Command, stdout: &mut (dyn Write + Send), stderr: &mut (dyn Write + Send)) -> Result<i32> {
    match cmd {
        Command::Find(a) => emit(find(&a)?, a.input.output.as_deref(), stdout),
        Command::Exclude(a) => emit(exclude(&a)?, a.input.output.as_deref(), stdout),
        Command::Near(a) => emit(near(&a)?, a.input.output.as_deref(), stdout),
        Command::Bench(a) => bench(&a, stdout),
        Command::Gen(a) => generate(&a, stdout, stderr),
    }
}

fn emit(report: Report, output: Option<&Path>, stdout: &mut (dyn Write + Send)) -> Result<i32> {
    let text = report.to_json();
    match output {
        Some(path) => std::fs::write(path, text + "\n")?,
        None => writeln!(stdout, "{text}")?,
    }
    Ok(match report.outcome.status {
        Status::Found => EXIT_FOUND,
        _ => EXIT_NOT_FOUND,
    })
}

fn find(args: &FindArgs) -> Result<Report> {
    let start = Instant::now();
    let input = &args.input;
    let a = input.load()?;
    input.check_size(&a)?;
    if !(args.confidence > 0.0 && args.confidence < 1.0) {
        return Err(Error::InvalidInput(format!(
            "--confidence must lie in (0, 1), got {}",
            args.confidence
        )));
    }
    let tol = input.tolerances()?;
    let variant = match args.variant {
        VariantArg::Q => Variant::Q,
        VariantArg::Qstar => Variant::Qstar,
    };
    let epsilon = 1.0 - args.confidence;
    let config = json!({
        "max_size": input.max_size,
        "confidence": args.confidence,
        "epsilon": epsilon,
        "variant": variant,
        "max_trials": args.max_trials,
        "all": args.all,
        "rank_tol": input.rank_tol,
        "support_tol": input.support_tol,
    });
    let mut report = Report {
        version: REPORT_VERSION.into(),
        mode: Mode::Find,
        matrix: input.info(&a),
        config,
        outcome: Outcome::new(Status::NotFound),
        stats: Stats {
            trials: 0,
            nullspace_evals: 0,
            residual_p: 0.0,
            seconds: 0.0,
            rejected: 0,
        },
        seed: input.seed,
    };

    let f = lq_factor(&a, &tol)?;
    let pruned = prunable_columns(&f, &tol);
    let keep = pruned.complement(a.cols());
    report.outcome = report.outcome.with_pruned(&pruned);
    if keep.len() < 2 {
        // no column left can belong to a circuit
        report.stats.seconds = start.elapsed().as_secs_f64();
        return Ok(report);
    }
    let work = a.select_columns(keep.as_slice())?;
    let cfg = SearchConfig::new(input.max_size.min(keep.len()), epsilon, input.seed)
        .with_variant(variant)
        .with_max_trials(args.max_trials)
        .with_tolerances(tol);
    let lift = |c: &Circuit| CircuitEntry::from(&c.remap(keep.as_slice(), a.cols()));

    let state = if args.all {
        let e = enumerate_circuits(&work, &cfg)?;
        report.outcome.circuits = e.circuits.iter().map(lift).collect();
        e.state
    } else {
        let f = lq_factor(&work, &tol)?;
        let out = search(&f, &cfg)?;
        if let (SearchStatus::Found, Some(c)) = (out.status, &out.circuit) {
            report.outcome.circuits.push(lift(c));
        }
        out.state
    };
    report.outcome.status = if !report.outcome.circuits.is_empty() {
        Status::Found
    } else if state.truncated {
        Status::Truncated
    } else {
        Status::NotFound
    };
    report.stats = Stats {
        trials: state.trials,
        nullspace_evals: state.nullspace_evals,
        residual_p: state.p(),
        seconds: start.elapsed().as_secs_f64(),
        rejected: state.rejected,
    };
    Ok(report)
}

fn exclude(args: &ExcludeArgs) -> Result<Report> {
    let start = Instant::now();
    let input = &args.input;
    let a = input.load()?;
    input.check_size(&a)?;
    let tol = input.tolerances()?;
    let out = circuitfind(&a, input.max_size, &tol, input.seed, None)?;
    let mut outcome = Outcome::new(if out.found { Status::Found } else { Status::Absent });
    outcome.circuits = out.circuit.iter().map(CircuitEntry::from).collect();
    Ok(Report {
        version: REPORT_VERSION.into(),
        mode: Mode::Exclude,
        matrix: input.info(&a),
        config: json!({
            "max_size": input.max_size,
            "rank_tol": input.rank_tol,
            "support_tol": input.support_tol,
        }),
        outcome,
        stats: Stats {
            trials: out.stats.subsets,
            nullspace_evals: out.stats.nullspace_evals,
            residual_p: 0.0,
            seconds: start.elapsed().as_secs_f64(),
            rejected: 0,
        },
        seed: input.seed,
    })
}

fn near(args: &NearArgs) -> Result<Report> {
    let start = Instant::now();
    let input = &args.input;
    let a = input.load()?;
    input.check_size(&a)?;
    let tol = input.tolerances()?;
    let mut config = json!({
        "max_size": input.max_size,
        "delta": args.delta,
        "max_trials": args.max_trials,
        "rank_tol": input.rank_tol,
        "support_tol": input.support_tol,
    });
    let (outcome, stats) = if args.bisect {
        let (lo, hi) = (
            args.eps_lo.expect("required by clap"),
            args.eps_hi.expect("required by clap"),
        );
        config["bisect"] = json!({ "eps_lo": lo, "eps_hi": hi, "iters": args.iters });
        let mut cfg = BisectionConfig::new(input.max_size, args.delta, input.seed, lo, hi);
        cfg.iters = args.iters;
        cfg.max_trials = args.max_trials;
        cfg.tolerances = tol;
        let b = minimal_epsilon_bisection(&a, &cfg)?;
        let mut outcome = Outcome::new(if b.near.is_some() { Status::Found } else { Status::NotFound });
        outcome.circuits = b.near.iter().map(CircuitEntry::from).collect();
        outcome.bisection = b
            .levels
            .iter()
            .map(|l| BisectionStep {
                epsilon: l.epsilon,
                found: l.found,
                no_split: l.no_split,
            })
            .collect();
        let residual_p = match b.levels.iter().rev().find(|l| l.found) {
            Some(l) => l.p,
            None => b.levels.iter().map(|l| l.p).fold(0.0, f64::max),
        };
        let stats = Stats {
            trials: b.trials(),
            nullspace_evals: b.nullspace_evals(),
            residual_p,
            seconds: 0.0,
            rejected: 0,
        };
        (outcome, stats)
    } else {
        let epsilon = args.epsilon.expect("required by clap");
        config["epsilon"] = json!(epsilon);
        let cfg = NearConfig::new(input.max_size, epsilon, args.delta, input.seed)
            .with_max_trials(args.max_trials)
            .with_tolerances(tol);
        let out = near_search(&a, &cfg)?;
        let status = match (&out.near, out.state.truncated) {
            (Some(_), _) => Status::Found,
            (None, true) => Status::Truncated,
            (None, false) => Status::NotFound,
        };
        let mut outcome = Outcome::new(status);
        outcome.circuits = out.near.iter().map(CircuitEntry::from).collect();
        let stats = Stats {
            trials: out.state.trials,
            nullspace_evals: out.state.nullspace_evals,
            residual_p: out.state.p(),
            seconds: 0.0,
            rejected: out.state.rejected,
        };
        (outcome, stats)
    };
    Ok(Report {
        version: REPORT_VERSION.into(),
        mode: Mode::Near,
        matrix: input.info(&a),
        config,
        outcome,
        stats: Stats {
            seconds: start.elapsed().as_secs_f64(),
            ..stats
        },
        seed: input.seed,
    })
}

fn bench(args: &BenchArgs, stdout: &mut (dyn Write + Send)) -> Result<i32> {
    let json = if args.table == 1 {
        let reps = args.reps.unwrap_or(1000) as u64;
        let rows = detection_table(args.n_cols, reps, args.seed)?;
        write_detection(&rows, stdout)?;
        serde_json::to_string_pretty(&rows)
    } else {
        let reps = args.reps.unwrap_or(100);
        let rhos = args.rhos.clone().unwrap_or_else(|| COST_RHOS.to_vec());
        let rows = cost_table(args.n_cols, reps, args.seed, &rhos)?;
        write_cost(&rows, stdout)?;
        serde_json::to_string_pretty(&rows)
    }
    .expect("bench rows serialize");
    if let Some(path) = &args.output {
        std::fs::write(path, json + "\n")?;
    }
    Ok(EXIT_FOUND)
}

fn write_detection(rows: &[DetectionRow], out: &mut (dyn Write + Send)) -> Result<()> {
    writeln!(out, "{:>5}  {:<16} {:>6} {:>9} {:>7}", "rho", "sizes", "N", "observed", "theory")?;
    for r in rows {
        let sizes = format!("{:?}", r.sizes);
        writeln!(
            out,
            "{:>5.2}  {:<16} {:>6} {:>9.3} {:>7.3}",
            r.rho, sizes, r.n_cols, r.frequency, r.theory
        )?;
    }
    Ok(())
}

fn write_cost(rows: &[CostRow], out: &mut (dyn Write + Send)) -> Result<()> {
    writeln!(out, "{:>5}  {:>10} {:>10} {:>10}", "rho", "random", "systematic", "expected")?;
    for r in rows {
        writeln!(
            out,
            "{:>5.2}  {:>10.2} {:>10.2} {:>10.2}",
            r.rho, r.random_mean, r.systematic_mean, r.expected
        )?;
    }
    Ok(())
}

fn generate(args: &GenArgs, stdout: &mut (dyn Write + Send), stderr: &mut (dyn Write + Send)) -> Result<i32> {
    let single_size = || match args.sizes.as_slice() {
        [c] => Ok(*c),
        _ => Err(Error::InvalidInput("this generator takes exactly one --sizes value".into())),
    };
    let (kind, matrix, plants, sigma) = if let Some(sigma) = args.near_sigma {
        let rows = match (args.rows, args.rho) {
            (Some(r), _) => r,
            (None, Some(rho)) => PlantSpec {
                n_cols: args.n_cols,
                rho,
                sizes: vec![],
                seed: args.seed,
            }
            .rows()?,
            (None, None) => return Err(Error::InvalidInput("near instances need --rows or --rho".into())),
        };
        let inst = planted_near_instance(args.n_cols, rows, sigma, single_size()?, args.seed)?;
        ("near", inst.matrix, vec![inst.plant], Some(inst.sigma))
    } else {
        let rho = args
            .rho
            .ok_or_else(|| Error::InvalidInput("--rho is required".into()))?;
        let inst = if args.orthonormal {
            orthonormal_row_instance(args.n_cols, rho, single_size()?, args.seed)?
        } else {
            planted_circuit_matrix(&PlantSpec {
                n_cols: args.n_cols,
                rho,
                sizes: args.sizes.clone(),
                seed: args.seed,
            })?
        };
        let kind = if args.orthonormal { "orthonormal" } else { "planted" };
        (kind, inst.matrix, inst.plants, None)
    };
    save_matrix(&args.output, &matrix, args.format.into())?;
    let manifest = Manifest {
        version: REPORT_VERSION.into(),
        kind: kind.into(),
        rows: matrix.rows(),
        cols: matrix.cols(),
        seed: args.seed,
        rho: args.rho,
        sizes: args.sizes.clone(),
        plants: plants.iter().map(IndexSet::to_one_based).collect(),
        sigma_min: sigma,
        matrix_path: args.output.display().to_string(),
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    let manifest_path = args.manifest.clone().unwrap_or_else(|| {
        let mut p = args.output.clone().into_os_string();
        p.push(".json");
        PathBuf::from(p)
    });
    std::fs::write(&manifest_path, text.clone() + "\n")?;
    writeln!(stdout, "{text}")?;
    writeln!(stderr, "wrote {} and {}", args.output.display(), manifest_path.display())?;
    Ok(EXIT_FOUND)
}
