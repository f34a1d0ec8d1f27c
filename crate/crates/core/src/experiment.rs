//! Reproducible training runs: configuration, execution, replay and sweeps.

use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fd_oracle::{self, FdGrid};
use crate::method1::Method1;
use crate::method2::{Method2, PenaltyFamily};
use crate::metrics::{error_report, FnField, RunRecord, SolutionField, RECORD_VERSION};
use crate::optimizer::{minimize, OptimizerConfig, RunTrace, StepPolicy, Termination};
use crate::problem::ObstacleProblem;
use crate::quadrature::QuadratureGrid;
use crate::shallow_net::{Activation, NetworkParams};

/// Everything that determines a run, apart from the seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Built-in problem id, or the path of a problem definition file.
    pub problem: String,
    pub method: u8,
    pub neurons: usize,
    pub activation: Activation,
    pub eps: f64,
    /// 0 runs Method 2 directly at t = 1.
    pub homotopy_steps: usize,
    pub freeze_delta: bool,
    pub optimizer: OptimizerConfig,
    /// Quadrature nodes per axis; 0 picks 1001 (1-D) or 101 (2-D).
    pub grid: usize,
    /// Error-evaluation nodes per axis; 0 picks 2001 (1-D) or 129 (2-D).
    pub eval_grid: usize,
    pub init_scale: f64,
    pub seed: u64,
    pub runs: usize,
    pub out: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            problem: "example1d".into(),
            method: 1,
            neurons: 20,
            activation: Activation::Relu2,
            eps: 1e-3,
            homotopy_steps: 0,
            freeze_delta: false,
            optimizer: OptimizerConfig::default(),
            grid: 0,
            eval_grid: 0,
            init_scale: 1.0,
            seed: 0,
            runs: 10,
            out: "out".into(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Parse(format!("invalid value `{value}` for `{key}`")))
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.method != 1 && self.method != 2 {
            return Err(Error::InvalidArgument(format!(
                "method must be 1 or 2, got {}",
                self.method
            )));
        }
        if self.neurons == 0 {
            return Err(Error::InvalidArgument("neurons must be ≥ 1".into()));
        }
        if !(self.eps > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "eps must be > 0, got {}",
                self.eps
            )));
        }
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            return Err(Error::InvalidArgument("init_scale must be > 0".into()));
        }
        if self.grid != 0 && self.grid < 3 || self.eval_grid != 0 && self.eval_grid < 3 {
            return Err(Error::InvalidArgument(
                "grids need at least 3 nodes per axis".into(),
            ));
        }
        if self.method == 2 && self.homotopy_steps > 0 {
            let stages = self.homotopy_steps + 1;
            if self.optimizer.max_iters < stages {
                return Err(Error::InvalidArgument(format!(
                    "{} iterations cannot cover {stages} homotopy stages",
                    self.optimizer.max_iters
                )));
            }
        }
        self.optimizer.validate()
    }

    /// `key = value` lines, one per field, readable by [`Self::from_kv`].
    pub fn to_kv(&self) -> String {
        let o = &self.optimizer;
        let mut s = String::new();
        let pairs: [(&str, String); 19] = [
            ("problem", self.problem.clone()),
            ("method", self.method.to_string()),
            ("neurons", self.neurons.to_string()),
            ("activation", self.activation.to_string()),
            ("eps", self.eps.to_string()),
            ("homotopy_steps", self.homotopy_steps.to_string()),
            ("freeze_delta", self.freeze_delta.to_string()),
            ("optimizer", o.policy.to_string()),
            ("lr", o.alpha.to_string()),
            ("iters", o.max_iters.to_string()),
            ("grad_tol", o.grad_tol.to_string()),
            ("history_stride", o.history_stride.to_string()),
            ("final_lr_fraction", o.final_lr_fraction.to_string()),
            ("grid", self.grid.to_string()),
            ("eval_grid", self.eval_grid.to_string()),
            ("init_scale", self.init_scale.to_string()),
            ("seed", self.seed.to_string()),
            ("runs", self.runs.to_string()),
            ("out", self.out.clone()),
        ];
        for (k, v) in pairs {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let o = &mut self.optimizer;
        match key {
            "problem" => self.problem = value.to_string(),
            "method" => self.method = parse(key, value)?,
            "neurons" => self.neurons = parse(key, value)?,
            "activation" => self.activation = parse(key, value)?,
            "eps" => self.eps = parse(key, value)?,
            "homotopy_steps" => self.homotopy_steps = parse(key, value)?,
            "freeze_delta" => self.freeze_delta = parse(key, value)?,
            "optimizer" => o.policy = parse::<StepPolicy>(key, value)?,
            "lr" => o.alpha = parse(key, value)?,
            "iters" => o.max_iters = parse(key, value)?,
            "grad_tol" => o.grad_tol = parse(key, value)?,
            "history_stride" => o.history_stride = parse(key, value)?,
            "final_lr_fraction" => o.final_lr_fraction = parse(key, value)?,
            "grid" => self.grid = parse(key, value)?,
            "eval_grid" => self.eval_grid = parse(key, value)?,
            "init_scale" => self.init_scale = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "runs" => self.runs = parse(key, value)?,
            "out" => self.out = value.to_string(),
            _ => return Err(Error::Parse(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines over the defaults. Blank lines and `#`
    /// comments are skipped.
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected `key = value`", n + 1)))?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }

    pub fn load_problem(&self) -> Result<ObstacleProblem<f64>> {
        if crate::problem::BUILTIN_IDS.contains(&self.problem.as_str()) {
            return ObstacleProblem::builtin(&self.problem);
        }
        let path = std::path::Path::new(&self.problem);
        if path.is_file() {
            ObstacleProblem::load(path)
        } else {
            ObstacleProblem::builtin(&self.problem)
        }
    }

    pub fn grid_nodes(&self, dim: usize) -> usize {
        match (self.grid, dim) {
            (0, 1) => 1001,
            (0, _) => 101,
            (n, _) => n,
        }
    }

    pub fn eval_nodes(&self, dim: usize) -> usize {
        match (self.eval_grid, dim) {
            (0, 1) => 2001,
            (0, _) => 129,
            (n, _) => n,
        }
    }

    /// Seeds `seed, seed + 1, …` for `runs` runs.
    pub fn seeds(&self) -> Vec<u64> {
        (0..self.runs as u64)
            .map(|i| self.seed.wrapping_add(i))
            .collect()
    }
}

/// Trained network and how to evaluate it.
#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub method: u8,
    pub activation: Activation,
    pub params: NetworkParams<f64>,
    /// δ_U of the final parameters (Method 1), 0 otherwise.
    pub shift: f64,
    pub traces: Vec<(f64, RunTrace<f64>)>,
}

struct Reconstruction<'a> {
    model: &'a TrainedModel,
    problem: &'a ObstacleProblem<f64>,
}

impl SolutionField<f64> for Reconstruction<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        (self.model.params.forward(self.model.activation, x) + self.model.shift)
            * self.problem.cutoff(x)
    }

    fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        let act = self.model.activation;
        let v = self.model.params.forward(act, x) + self.model.shift;
        let z = self.problem.cutoff(x);
        let gz = self.problem.cutoff_grad(x);
        let gu = self.model.params.grad_x(act, x);
        Some(gu.iter().zip(&gz).map(|(&u, &g)| z * u + v * g).collect())
    }
}

impl TrainedModel {
    pub fn as_field<'a>(
        &'a self,
        problem: &'a ObstacleProblem<f64>,
    ) -> impl SolutionField<f64> + 'a {
        Reconstruction {
            model: self,
            problem,
        }
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.traces.last().and_then(|(_, t)| t.final_loss())
    }
}

/// Trains one network with the given seed.
pub fn train(
    config: &ExperimentConfig,
    problem: &ObstacleProblem<f64>,
    grid: &QuadratureGrid<f64>,
    seed: u64,
) -> Result<TrainedModel> {
    config.validate()?;
    let init = NetworkParams::init(problem.dim(), config.neurons, seed, config.init_scale);
    let diverged = |trace: &RunTrace<f64>| trace.terminated_by == Termination::Divergence;
    match config.method {
        1 => {
            let m = Method1::new(problem, grid, config.activation)
                .with_freeze_delta(config.freeze_delta);
            let (params, trace) =
                minimize(|p| m.loss(p), |p| m.gradient(p), init, &config.optimizer)?;
            if diverged(&trace) {
                return Err(Error::Divergence {
                    iteration: trace.iterations_used,
                });
            }
            let shift = m.delta_u(&params)?.delta;
            Ok(TrainedModel {
                method: 1,
                activation: config.activation,
                params,
                shift,
                traces: vec![(1.0, trace)],
            })
        }
        _ => {
            let pen = PenaltyFamily::new(config.eps)?;
            let m = Method2::new(problem, grid, config.activation, pen);
            let (params, traces) = if config.homotopy_steps == 0 {
                let (p, trace) = m.solve_stage(init, 1.0, &config.optimizer)?;
                if diverged(&trace) {
                    return Err(Error::Divergence {
                        iteration: trace.iterations_used,
                    });
                }
                (p, vec![(1.0, trace)])
            } else {
                let res = m.run_homotopy(init, config.homotopy_steps, &config.optimizer)?;
                (
                    res.params,
                    res.stages.into_iter().map(|s| (s.t, s.trace)).collect(),
                )
            };
            Ok(TrainedModel {
                method: 2,
                activation: config.activation,
                params,
                shift: 0.0,
                traces,
            })
        }
    }
}

/// Reference solution: the exact one where known, otherwise a PSOR solve.
pub enum Reference {
    Exact(ObstacleProblem<f64>),
    Oracle(FdGrid<f64>),
}

impl SolutionField<f64> for Reference {
    fn value(&self, x: &[f64]) -> f64 {
        match self {
            Reference::Exact(p) => p.exact(x).unwrap_or(f64::NAN),
            Reference::Oracle(g) => g.value(x),
        }
    }
}

impl Reference {
    pub fn for_problem(problem: &ObstacleProblem<f64>) -> Result<Self> {
        if problem.has_exact() {
            return Ok(Reference::Exact(problem.clone()));
        }
        let m = match problem.dim() {
            1 => fd_oracle::DEFAULT_M_1D,
            _ => fd_oracle::DEFAULT_M_2D,
        };
        Ok(Reference::Oracle(fd_oracle::solve_obstacle_psor(
            problem,
            m,
            None,
            fd_oracle::DEFAULT_PSOR_TOL,
            10_000_000,
        )?))
    }
}

/// Per-node output of a run: `(x, u_numeric, u_reference, error)`.
pub type SolutionSample = (Vec<f64>, f64, f64, f64);

pub struct RunOutcome {
    pub record: RunRecord,
    pub samples: Vec<SolutionSample>,
}

/// Shared, seed-independent state of an experiment.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub problem: ObstacleProblem<f64>,
    pub grid: QuadratureGrid<f64>,
    pub eval_grid: QuadratureGrid<f64>,
    pub reference: Reference,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let problem = config.load_problem()?;
        let grid = QuadratureGrid::build(problem.domain(), config.grid_nodes(problem.dim()))?;
        let eval_grid = QuadratureGrid::build(problem.domain(), config.eval_nodes(problem.dim()))?;
        let reference = Reference::for_problem(&problem)?;
        Ok(Self {
            config,
            problem,
            grid,
            eval_grid,
            reference,
        })
    }

    /// Trains and evaluates one seed. Training failures are recorded in the
    /// returned record rather than propagated.
    pub fn run(&self, seed: u64) -> RunOutcome {
        let cfg = &self.config;
        let start = Instant::now();
        let trained = train(cfg, &self.problem, &self.grid, seed);
        let wall = start.elapsed().as_secs_f64();
        let mut record = RunRecord {
            version: RECORD_VERSION,
            method: cfg.method,
            problem: self.problem.name().to_string(),
            neurons: cfg.neurons,
            eps: (cfg.method == 2).then_some(cfg.eps),
            homotopy_steps: if cfg.method == 2 {
                cfg.homotopy_steps
            } else {
                0
            },
            seed,
            config: cfg.clone(),
            report: None,
            failure: None,
            final_loss: None,
            final_params: Vec::new(),
            loss_history: Vec::new(),
            wall_time_s: wall,
        };
        let model = match trained {
            Ok(m) => m,
            Err(e) => {
                record.failure = Some(e.to_string());
                return RunOutcome {
                    record,
                    samples: Vec::new(),
                };
            }
        };
        let field = model.as_field(&self.problem);
        record.report = Some(error_report(&field, &self.reference, &self.eval_grid));
        record.final_loss = model.final_loss();
        record.final_params = model.params.to_f64_vec();
        let mut offset = 0;
        for (_, trace) in &model.traces {
            for (&k, &l) in trace.loss_iterations.iter().zip(&trace.losses) {
                record.loss_history.push((offset + k, l));
            }
            offset += trace.iterations_used;
        }
        let samples = self
            .eval_grid
            .nodes()
            .map(|x| {
                let u = field.value(x);
                let r = self.reference.value(x);
                (x.to_vec(), u, r, u - r)
            })
            .collect();
        RunOutcome { record, samples }
    }
}

/// Re-trains the run described by `record` and returns its final parameters.
pub fn replay(record: &RunRecord) -> Result<NetworkParams<f64>> {
    let problem = record.config.load_problem()?;
    let grid = QuadratureGrid::build(problem.domain(), record.config.grid_nodes(problem.dim()))?;
    Ok(train(&record.config, &problem, &grid, record.seed)?.params)
}

/// True if re-training reproduces `record.final_params` bit for bit.
pub fn replay_matches(record: &RunRecord) -> Result<bool> {
    let params = replay(record)?;
    let a = params.to_f64_vec();
    Ok(a.len() == record.final_params.len()
        && a.iter()
            .zip(&record.final_params)
            .all(|(x, y)| x.to_bits() == y.to_bits()))
}

/// One cell of a benchmark sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepCell {
    pub neurons: usize,
    pub eps: f64,
    pub homotopy_steps: usize,
}

/// Runs every cell × seed of a sweep on the current rayon pool. Records come
/// back sorted by (cell order, seed); failed runs are kept with their
/// failure message.
pub fn run_sweep(base: &ExperimentConfig, cells: &[SweepCell]) -> Result<Vec<RunRecord>> {
    let experiments = cells
        .iter()
        .map(|c| {
            let mut cfg = base.clone();
            cfg.neurons = c.neurons;
            cfg.eps = c.eps;
            cfg.homotopy_steps = c.homotopy_steps;
            Experiment::new(cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, u64)> = experiments
        .iter()
        .enumerate()
        .flat_map(|(i, e)| e.config.seeds().into_iter().map(move |s| (i, s)))
        .collect();
    Ok(jobs
        .par_iter()
        .map(|&(i, seed)| experiments[i].run(seed).record)
        .collect())
}

/// `FnField` over the exact solution; `None` if the problem has none.
pub fn exact_field(problem: &ObstacleProblem<f64>) -> Option<impl SolutionField<f64> + '_> {
    problem
        .has_exact()
        .then(|| FnField::new(move |x: &[f64]| problem.exact(x).unwrap_or(f64::NAN)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn quick_config() -> ExperimentConfig {
        let mut cfg = ExperimentConfig {
            neurons: 5,
            grid: 101,
            eval_grid: 101,
            ..ExperimentConfig::default()
        };
        cfg.optimizer.max_iters = 60;
        cfg.runs = 2;
        cfg
    }

    #[test]
    fn kv_round_trip_defaults() {
        let cfg = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::from_kv(&cfg.to_kv()).unwrap(), cfg);
    }

    #[test]
    fn kv_rejects_unknown_keys_and_bad_values() {
        assert!(ExperimentConfig::from_kv("colour = red").is_err());
        assert!(ExperimentConfig::from_kv("neurons = many").is_err());
        assert!(ExperimentConfig::from_kv("just text").is_err());
        let cfg = ExperimentConfig::from_kv("# comment\n\nmethod = 2 # trailing\n").unwrap();
        assert_eq!(cfg.method, 2);
    }

    proptest! {
        #[test]
        fn kv_round_trip(
            method in 1u8..=2, neurons in 1usize..200, eps in 1e-6f64..1.0,
            steps in 0usize..20, freeze in any::<bool>(), lr in 1e-6f64..1.0,
            iters in 1usize..100_000, seed in any::<u64>(), scale in 1e-3f64..10.0,
            frac in 1e-4f64..=1.0, act in 0usize..3, policy in 0usize..3,
        ) {
            let mut cfg = ExperimentConfig {
                method,
                neurons,
                eps,
                homotopy_steps: steps,
                freeze_delta: freeze,
                ..ExperimentConfig::default()
            };
            cfg.optimizer.alpha = lr;
            cfg.optimizer.max_iters = iters;
            cfg.optimizer.final_lr_fraction = frac;
            cfg.optimizer.policy = [StepPolicy::Fixed, StepPolicy::Backtracking, StepPolicy::AdaptiveMoment][policy];
            cfg.activation = [Activation::Relu2, Activation::Sigmoid, Activation::Tanh][act];
            cfg.seed = seed;
            cfg.init_scale = scale;
            cfg.problem = "some dir/problem file.txt".into();
            prop_assert_eq!(ExperimentConfig::from_kv(&cfg.to_kv()).unwrap(), cfg);
        }
    }

    #[test]
    fn run_and_replay_bitwise() {
        for method in [1, 2] {
            let mut cfg = quick_config();
            cfg.method = method;
            cfg.homotopy_steps = if method == 2 { 2 } else { 0 };
            let exp = Experiment::new(cfg).unwrap();
            let out = exp.run(3);
            assert!(out.record.failure.is_none(), "{:?}", out.record.failure);
            assert_eq!(out.samples.len(), 101);
            let json = out.record.to_json().unwrap();
            let back = RunRecord::from_json(&json).unwrap();
            assert!(replay_matches(&back).unwrap());
        }
    }

    #[test]
    fn sweep_is_sorted_and_complete() {
        let cfg = quick_config();
        let cells = [
            SweepCell {
                neurons: 3,
                eps: 1e-2,
                homotopy_steps: 0,
            },
            SweepCell {
                neurons: 4,
                eps: 1e-2,
                homotopy_steps: 0,
            },
        ];
        let recs = run_sweep(&cfg, &cells).unwrap();
        let keys: Vec<(usize, u64)> = recs.iter().map(|r| (r.neurons, r.seed)).collect();
        assert_eq!(keys, vec![(3, 0), (3, 1), (4, 0), (4, 1)]);
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = quick_config();
        cfg.method = 3;
        assert!(cfg.validate().is_err());
        let mut cfg = quick_config();
        cfg.method = 2;
        cfg.homotopy_steps = 100;
        assert!(cfg.validate().is_err());
        let mut cfg = quick_config();
        cfg.problem = "nope".into();
        assert!(matches!(
            Experiment::new(cfg),
            Err(Error::UnknownProblem { .. })
        ));
    }
}
