//! `obstacle`: train, benchmark and verify the obstacle-problem solvers.

mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use obstacle_nn::experiment::{replay, Experiment, ExperimentConfig, SweepCell};
use obstacle_nn::fd_oracle::{self, FdGrid};
use obstacle_nn::method1::Method1;
use obstacle_nn::metrics::{aggregate, rate_eps, rate_n, RunRecord};
use obstacle_nn::shallow_net::Parameters;
use obstacle_nn::{Activation, Error, Grid, Method2, Params, Penalty, Problem, StepPolicy};

#[derive(Parser)]
#[command(
    name = "obstacle",
    version,
    about = "Shallow-network solvers for the obstacle problem"
)]
struct Cli {
    /// Worker threads for independent runs (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,

    /// Only log warnings and errors.
    #[arg(long, short, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one network per seed; write run records and solution samples.
    Solve {
        #[command(flatten)]
        run: RunArgs,
        /// Re-train a saved run record and check the final parameters bitwise.
        #[arg(long, value_name = "FILE")]
        replay: Option<PathBuf>,
    },
    /// Sweep N, ε and homotopy steps; write aggregated tables and rates.
    Benchmark {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated neuron counts.
        #[arg(long, value_delimiter = ',')]
        neurons_list: Vec<usize>,
        /// Comma-separated penalty parameters.
        #[arg(long, value_delimiter = ',')]
        eps_list: Vec<f64>,
        /// Comma-separated homotopy step counts (0 = plain Method 2).
        #[arg(long, value_delimiter = ',')]
        homotopy_list: Vec<usize>,
    },
    /// Finite-difference reference solution as CSV (x[,y],u).
    Oracle {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long, value_enum, default_value_t = Solver::Psor)]
        solver: Solver,
        /// Grid points per axis (default 4001 in 1-D, 257 in 2-D).
        #[arg(long)]
        m: Option<usize>,
        /// Penalty parameter for the Newton solver.
        #[arg(long, default_value_t = 1e-3)]
        eps: f64,
        /// PSOR relaxation factor (default: optimal for the grid).
        #[arg(long)]
        omega: Option<f64>,
        #[arg(long)]
        tol: Option<f64>,
        /// Output file; stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare analytic gradients with central finite differences.
    Gradcheck {
        #[command(flatten)]
        run: RunArgs,
        /// Number of random parameter draws.
        #[arg(long, default_value_t = 5)]
        draws: usize,
        /// Homotopy weights checked for Method 2.
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.0, 0.5, 1.0])]
        t: Vec<f64>,
        /// Maximum relative error.
        #[arg(long, default_value_t = 1e-4)]
        threshold: f64,
        /// Maximum relative error when the feasibility shift is active.
        #[arg(long, default_value_t = 1e-3)]
        envelope_threshold: f64,
        /// Finite-difference step.
        #[arg(long, default_value_t = 1e-6)]
        step: f64,
    },
    /// Empirical convergence rate from three errors.
    Rates {
        #[arg(value_enum)]
        kind: RateKind,
        /// Errors at N, 2N, 4N (kind n) or at ε = 0.1, 0.01, 0.001 (kind eps).
        #[arg(num_args = 3, allow_negative_numbers = true)]
        errors: Vec<f64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Solver {
    Psor,
    Newton,
    Poisson,
}

#[derive(Clone, Copy, ValueEnum)]
enum RateKind {
    N,
    Eps,
}

#[derive(Args, Clone, Default)]
struct ProblemArgs {
    /// Built-in problem id (example1d, example2d).
    #[arg(long)]
    problem: Option<String>,
    /// Problem definition file.
    #[arg(long, conflicts_with = "problem")]
    problem_file: Option<PathBuf>,
}

#[derive(Args, Clone, Default)]
struct RunArgs {
    /// key = value file applied before the flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    problem: ProblemArgs,
    /// 1 = feasibility shift, 2 = penalty.
    #[arg(long)]
    method: Option<u8>,
    #[arg(long)]
    neurons: Option<usize>,
    #[arg(long)]
    activation: Option<Activation>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    homotopy_steps: Option<usize>,
    /// Drop the envelope term of the feasibility shift from the gradient.
    #[arg(long)]
    freeze_delta: bool,
    /// fixed, backtracking or adam.
    #[arg(long)]
    optimizer: Option<StepPolicy>,
    #[arg(long)]
    lr: Option<f64>,
    /// Final learning rate as a fraction of --lr (Adam only).
    #[arg(long)]
    lr_decay: Option<f64>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    init_scale: Option<f64>,
    /// Quadrature nodes per axis.
    #[arg(long)]
    grid: Option<usize>,
    /// Error-evaluation nodes per axis.
    #[arg(long)]
    eval_grid: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ProblemArgs {
    fn id(&self) -> Option<String> {
        self.problem_file
            .as_ref()
            .map(|p| p.display().to_string())
            .or_else(|| self.problem.clone())
    }

    fn load(&self) -> Result<Problem, Failure> {
        match (&self.problem_file, &self.problem) {
            (Some(path), _) => Problem::load(path).map_err(Failure::usage),
            (None, id) => {
                Problem::builtin(id.as_deref().unwrap_or("example1d")).map_err(Failure::usage)
            }
        }
    }
}

impl RunArgs {
    fn config(&self) -> Result<ExperimentConfig, Failure> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text =
                    std::fs::read_to_string(path).map_err(|e| Failure::usage(Error::Io(e)))?;
                ExperimentConfig::from_kv(&text).map_err(Failure::usage)?
            }
            None => ExperimentConfig::default(),
        };
        if let Some(id) = self.problem.id() {
            cfg.problem = id;
        }
        macro_rules! apply {
            ($($flag:ident => $($field:ident).+),* $(,)?) => {
                $(if let Some(v) = self.$flag.clone() { cfg.$($field).+ = v; })*
            };
        }
        apply!(
            method => method,
            neurons => neurons,
            activation => activation,
            eps => eps,
            homotopy_steps => homotopy_steps,
            optimizer => optimizer.policy,
            lr => optimizer.alpha,
            lr_decay => optimizer.final_lr_fraction,
            iters => optimizer.max_iters,
            runs => runs,
            seed => seed,
            init_scale => init_scale,
            grid => grid,
            eval_grid => eval_grid,
        );
        if self.freeze_delta {
            cfg.freeze_delta = true;
        }
        if let Some(out) = &self.out {
            cfg.out = out.display().to_string();
        }
        cfg.validate().map_err(Failure::usage)?;
        // Resolve the problem now so that a bad id is a usage error.
        cfg.load_problem().map_err(Failure::usage)?;
        Ok(cfg)
    }
}

/// Error plus the process exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(e: impl std::fmt::Display) -> Self {
        Self {
            code: 2,
            message: e.to_string(),
        }
    }

    fn runtime(e: impl std::fmt::Display) -> Self {
        Self {
            code: 1,
            message: e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    if cli.jobs > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.jobs)
            .build_global()
        {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    let result = match cli.command {
        Command::Solve { run, replay } => match replay {
            Some(path) => cmd_replay(&path),
            None => run.config().and_then(|cfg| cmd_solve(&cfg)),
        },
        Command::Benchmark {
            run,
            neurons_list,
            eps_list,
            homotopy_list,
        } => run
            .config()
            .and_then(|cfg| cmd_benchmark(&cfg, &neurons_list, &eps_list, &homotopy_list)),
        Command::Oracle {
            problem,
            solver,
            m,
            eps,
            omega,
            tol,
            out,
        } => cmd_oracle(&problem, solver, m, eps, omega, tol, out.as_deref()),
        Command::Gradcheck {
            run,
            draws,
            t,
            threshold,
            envelope_threshold,
            step,
        } => run
            .config()
            .and_then(|cfg| cmd_gradcheck(&cfg, draws, &t, threshold, envelope_threshold, step)),
        Command::Rates { kind, errors } => cmd_rates(kind, &errors),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run_tag(r: &RunRecord) -> String {
    let mut tag = format!("m{}_{}_n{}", r.method, r.problem, r.neurons);
    if let Some(eps) = r.eps {
        tag.push_str(&format!("_eps{eps:e}_h{}", r.homotopy_steps));
    }
    tag
}

fn cmd_solve(cfg: &ExperimentConfig) -> Result<(), Failure> {
    use rayon::prelude::*;
    let exp = Experiment::new(cfg.clone()).map_err(Failure::usage)?;
    let out = PathBuf::from(&cfg.out);
    std::fs::create_dir_all(&out).map_err(Failure::runtime)?;
    let has_exact = exp.problem.has_exact();
    let failures: Vec<String> = cfg
        .seeds()
        .par_iter()
        .map(|&seed| -> Result<Option<String>, Failure> {
            let outcome = exp.run(seed);
            let rec = &outcome.record;
            let stem = out.join(format!("{}_seed{seed}", run_tag(rec)));
            output::write_json(&stem.with_extension("json"), rec).map_err(Failure::runtime)?;
            if rec.failure.is_none() {
                output::write_solution(
                    &path_with(&stem, "_solution.csv"),
                    &outcome.samples,
                    has_exact,
                )
                .map_err(Failure::runtime)?;
                output::write_losses(&path_with(&stem, "_loss.csv"), &rec.loss_history)
                    .map_err(Failure::runtime)?;
            }
            match (&rec.report, &rec.failure) {
                (Some(r), _) => log::info!(
                    "seed {seed}: L∞ {:.3e}, L² {:.3e}, H¹ {:.3e} ({:.1}s)",
                    r.linf,
                    r.l2_norm,
                    r.h1_seminorm,
                    rec.wall_time_s
                ),
                (None, Some(f)) => log::error!("seed {seed} failed: {f}"),
                _ => {}
            }
            Ok(rec.failure.clone().map(|f| format!("seed {seed}: {f}")))
        })
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .flatten()
        .collect();
    println!("wrote {} run(s) to {}", cfg.runs, out.display());
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::runtime(failures.join("; ")))
    }
}

fn path_with(stem: &Path, suffix: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn cmd_replay(path: &Path) -> Result<(), Failure> {
    let record = RunRecord::load(path).map_err(Failure::usage)?;
    if record.final_params.is_empty() {
        return Err(Failure::usage(format!(
            "{} records a failed run; nothing to replay",
            path.display()
        )));
    }
    let params = replay(&record).map_err(Failure::runtime)?.to_f64_vec();
    let identical = params.len() == record.final_params.len()
        && params
            .iter()
            .zip(&record.final_params)
            .all(|(a, b)| a.to_bits() == b.to_bits());
    if identical {
        println!(
            "replay of {} reproduced {} parameters bitwise",
            path.display(),
            params.len()
        );
        Ok(())
    } else {
        Err(Failure::runtime(format!(
            "replay of {} diverged from the record",
            path.display()
        )))
    }
}

fn cmd_benchmark(
    base: &ExperimentConfig,
    neurons: &[usize],
    eps: &[f64],
    homotopy: &[usize],
) -> Result<(), Failure> {
    let neurons = if neurons.is_empty() {
        vec![base.neurons]
    } else {
        neurons.to_vec()
    };
    let eps = if eps.is_empty() || base.method == 1 {
        vec![base.eps]
    } else {
        eps.to_vec()
    };
    let homotopy = if homotopy.is_empty() || base.method == 1 {
        vec![base.homotopy_steps]
    } else {
        homotopy.to_vec()
    };
    let mut cells = Vec::new();
    for &n in &neurons {
        for &e in &eps {
            for &h in &homotopy {
                cells.push(SweepCell {
                    neurons: n,
                    eps: e,
                    homotopy_steps: h,
                });
            }
        }
    }
    for cell in &cells {
        let mut cfg = base.clone();
        cfg.neurons = cell.neurons;
        cfg.eps = cell.eps;
        cfg.homotopy_steps = cell.homotopy_steps;
        cfg.validate().map_err(Failure::usage)?;
    }
    let records = obstacle_nn::experiment::run_sweep(base, &cells).map_err(Failure::usage)?;
    let out = PathBuf::from(&base.out);
    let runs_dir = out.join("runs");
    std::fs::create_dir_all(&runs_dir).map_err(Failure::runtime)?;
    for r in &records {
        let path = runs_dir.join(format!("{}_seed{}.json", run_tag(r), r.seed));
        output::write_json(&path, r).map_err(Failure::runtime)?;
    }
    let rows = aggregate(&records).map_err(Failure::runtime)?;
    output::write_table(&out.join("table.csv"), &rows, &records).map_err(Failure::runtime)?;
    output::write_wide_table(&out.join("table_wide.csv"), &rows).map_err(Failure::runtime)?;
    let rates = output::sweep_rates(&rows);
    output::write_rates(&out.join("rates.csv"), &rates).map_err(Failure::runtime)?;
    for row in &rows {
        let linf = row.linf.map_or("n/a".to_string(), |s| {
            format!("{:.3e} (median {:.3e})", s.mean, s.median)
        });
        println!(
            "method {} N={} eps={} homotopy={}: L∞ mean {linf}, {} failed of {}",
            row.method,
            row.neurons,
            row.eps.map_or("-".into(), |e| e.to_string()),
            row.homotopy_steps,
            row.failures,
            row.runs
        );
    }
    for r in &rates {
        println!(
            "{}: {}",
            r.label,
            r.value
                .as_ref()
                .map_or_else(|e| e.clone(), |v| format!("{v:.3}"))
        );
    }
    println!(
        "wrote {} run record(s) and tables to {}",
        records.len(),
        out.display()
    );
    Ok(())
}

fn cmd_oracle(
    args: &ProblemArgs,
    solver: Solver,
    m: Option<usize>,
    eps: f64,
    omega: Option<f64>,
    tol: Option<f64>,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let problem = args.load()?;
    let m = m.unwrap_or(if problem.dim() == 1 {
        fd_oracle::DEFAULT_M_1D
    } else {
        fd_oracle::DEFAULT_M_2D
    });
    let solution: FdGrid<f64> = match solver {
        Solver::Psor => fd_oracle::solve_obstacle_psor(
            &problem,
            m,
            omega,
            tol.unwrap_or(fd_oracle::DEFAULT_PSOR_TOL),
            100_000_000,
        ),
        Solver::Newton => {
            let pen = Penalty::new(eps).map_err(Failure::usage)?;
            fd_oracle::solve_penalized_newton(
                &problem,
                &pen,
                m,
                tol.unwrap_or(fd_oracle::DEFAULT_NEWTON_TOL),
                500,
            )
        }
        Solver::Poisson => fd_oracle::solve_poisson(&problem, m),
    }
    .map_err(|e| match e {
        Error::InvalidArgument(_) => Failure::usage(e),
        _ => Failure::runtime(e),
    })?;
    log::info!("{} iteration(s)", solution.iterations);
    match out {
        Some(path) => output::write_grid(
            std::fs::File::create(path).map_err(Failure::runtime)?,
            &solution,
        ),
        None => output::write_grid(std::io::stdout().lock(), &solution),
    }
    .map_err(Failure::runtime)
}

fn fd_gradient(theta: &Params, step: f64, f: impl Fn(&Params) -> f64) -> Vec<f64> {
    (0..theta.len())
        .map(|j| {
            let mut up = theta.clone();
            up.as_mut_slice()[j] += step;
            let mut down = theta.clone();
            down.as_mut_slice()[j] -= step;
            (f(&up) - f(&down)) / (2.0 * step)
        })
        .collect()
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    d / b.iter().map(|y| y * y).sum::<f64>().sqrt().max(1e-300)
}

fn cmd_gradcheck(
    cfg: &ExperimentConfig,
    draws: usize,
    ts: &[f64],
    threshold: f64,
    envelope_threshold: f64,
    step: f64,
) -> Result<(), Failure> {
    let problem = cfg.load_problem().map_err(Failure::usage)?;
    let grid =
        Grid::build(problem.domain(), cfg.grid_nodes(problem.dim())).map_err(Failure::usage)?;
    let mut worst_excess = 0.0f64;
    println!("draw,seed,case,rel_err,threshold,status");
    for d in 0..draws {
        let seed = cfg.seed.wrapping_add(d as u64);
        let theta = Params::init(problem.dim(), cfg.neurons, seed, cfg.init_scale);
        // (case, relative error, threshold; None = informational only)
        let mut cases: Vec<(String, f64, Option<f64>)> = Vec::new();
        if cfg.method == 1 {
            let m =
                Method1::new(&problem, &grid, cfg.activation).with_freeze_delta(cfg.freeze_delta);
            let shift = m.delta_u(&theta).map_err(Failure::runtime)?;
            let fd = fd_gradient(&theta, step, |q| m.loss(q));
            let err = rel_err(m.gradient(&theta).as_slice(), &fd);
            cases.push(match (shift.delta > 0.0, cfg.freeze_delta) {
                (false, _) => ("G1 delta=0".to_string(), err, Some(threshold)),
                (true, false) => (
                    format!("G1 delta={:.3e}", shift.delta),
                    err,
                    Some(envelope_threshold),
                ),
                (true, true) => (
                    format!("G1 delta={:.3e} envelope term omitted", shift.delta),
                    err,
                    None,
                ),
            });
        } else {
            let pen = Penalty::new(cfg.eps).map_err(Failure::usage)?;
            let m = Method2::new(&problem, &grid, cfg.activation, pen);
            for &t in ts {
                let fd = fd_gradient(&theta, step, |q| m.loss(q, t));
                let err = rel_err(m.gradient(&theta, t).as_slice(), &fd);
                cases.push((format!("G2 t={t}"), err, Some(threshold)));
            }
        }
        for (case, err, limit) in cases {
            let status = match limit {
                None => {
                    log::warn!("draw {d}: envelope discrepancy {err:.3e} (freeze-delta)");
                    "envelope-discrepancy"
                }
                Some(l) if err <= l => "pass",
                Some(l) => {
                    worst_excess = worst_excess.max(err / l);
                    "FAIL"
                }
            };
            let limit = limit.map(|l| format!("{l:e}")).unwrap_or_default();
            println!("{d},{seed},{case},{err:.3e},{limit},{status}");
        }
    }
    if worst_excess > 0.0 {
        Err(Failure::runtime(format!(
            "gradient check failed: worst relative error is {worst_excess:.1}x its threshold"
        )))
    } else {
        Ok(())
    }
}

fn cmd_rates(kind: RateKind, e: &[f64]) -> Result<(), Failure> {
    let rate = match kind {
        RateKind::N => rate_n(e[0], e[1], e[2]),
        RateKind::Eps => rate_eps(e[0], e[1], e[2]),
    }
    .map_err(Failure::runtime)?;
    println!("{rate:.6}");
    Ok(())
}
