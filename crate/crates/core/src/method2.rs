//! Penalized scheme and its homotopy driver.
//!
//! The constraint `u ≥ φ` is replaced by the penalty `B_ε(φ − Uζ)` with
//!
//! ```text
//!   β₁(s) = s − 1     (s ≥ 2)        B₁(s) = s²/2 − s + 2/3   (s ≥ 2)
//!           s²/4      (0 ≤ s ≤ 2)            s³/12            (0 ≤ s ≤ 2)
//!           0         (s ≤ 0)                0                (s ≤ 0)
//!
//!   β_ε(s) = β₁(s/ε),   B_ε(s) = ∫₀ˢ β_ε = ε B₁(s/ε)
//! ```
//!
//! `B₁` is the antiderivative of `β₁`; its branches are cross-checked against
//! numerical integration in the tests. The homotopy weight `t ∈ [0, 1]`
//! scales the penalty: `t = 0` is the linear Poisson problem, `t = 1` the
//! full penalized energy.

use crate::energy::{cutoff_energy, network_values, NodeSamples};
use crate::error::{Error, Result};
use crate::optimizer::{minimize, OptimizerConfig, RunTrace, Termination};
use crate::problem::ObstacleProblem;
use crate::quadrature::QuadratureGrid;
use crate::scalar::Scalar;
use crate::shallow_net::{Activation, NetworkParams, Parameters};

/// β₁, β_ε, B_ε for a fixed ε. An infinite ε switches the penalty off.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PenaltyFamily<T> {
    eps: T,
}

impl<T: Scalar> PenaltyFamily<T> {
    pub fn new(eps: T) -> Result<Self> {
        if !(eps > T::zero()) {
            return Err(Error::InvalidArgument(format!(
                "eps must be > 0, got {eps}"
            )));
        }
        Ok(Self { eps })
    }

    /// β ≡ 0 and B ≡ 0.
    pub fn off() -> Self {
        Self { eps: T::infinity() }
    }

    pub fn eps(&self) -> T {
        self.eps
    }

    pub fn is_off(&self) -> bool {
        self.eps.is_infinite()
    }

    pub fn beta1(s: T) -> T {
        let two = T::lit(2.0);
        if s >= two {
            s - T::one()
        } else if s >= T::zero() {
            s * s / T::lit(4.0)
        } else {
            T::zero()
        }
    }

    pub fn beta1_prime(s: T) -> T {
        let two = T::lit(2.0);
        if s >= two {
            T::one()
        } else if s >= T::zero() {
            s / two
        } else {
            T::zero()
        }
    }

    pub fn big_b1(s: T) -> T {
        let two = T::lit(2.0);
        if s >= two {
            s * s / two - s + T::lit(2.0 / 3.0)
        } else if s >= T::zero() {
            s * s * s / T::lit(12.0)
        } else {
            T::zero()
        }
    }

    pub fn beta_eps(&self, s: T) -> T {
        if self.is_off() {
            return T::zero();
        }
        Self::beta1(s / self.eps)
    }

    pub fn beta_eps_prime(&self, s: T) -> T {
        if self.is_off() {
            return T::zero();
        }
        Self::beta1_prime(s / self.eps) / self.eps
    }

    pub fn big_b_eps(&self, s: T) -> T {
        if self.is_off() {
            return T::zero();
        }
        self.eps * Self::big_b1(s / self.eps)
    }
}

/// Penalized objective `F(θ, t)` and its gradient for one (problem, grid)
/// pair.
pub struct Method2<'a, T> {
    problem: &'a ObstacleProblem<T>,
    grid: &'a QuadratureGrid<T>,
    samples: NodeSamples<T>,
    activation: Activation,
    penalty: PenaltyFamily<T>,
}

impl<'a, T: Scalar> Method2<'a, T> {
    pub fn new(
        problem: &'a ObstacleProblem<T>,
        grid: &'a QuadratureGrid<T>,
        activation: Activation,
        penalty: PenaltyFamily<T>,
    ) -> Self {
        Self {
            samples: NodeSamples::new(problem, grid),
            problem,
            grid,
            activation,
            penalty,
        }
    }

    pub fn penalty(&self) -> &PenaltyFamily<T> {
        &self.penalty
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn problem(&self) -> &ObstacleProblem<T> {
        self.problem
    }

    pub fn grid(&self) -> &QuadratureGrid<T> {
        self.grid
    }

    fn terms(
        &self,
        params: &NetworkParams<T>,
        t: T,
        with_gradient: bool,
    ) -> crate::energy::EnergyTerms<T> {
        let pen = self.penalty;
        cutoff_energy(
            params,
            self.activation,
            self.grid,
            &self.samples,
            T::zero(),
            move |gap| (t * pen.big_b_eps(gap), t * pen.beta_eps(gap)),
            with_gradient,
        )
    }

    /// F(θ, t); non-finite values are returned as is.
    pub fn loss(&self, params: &NetworkParams<T>, t: T) -> T {
        self.terms(params, t, false).energy
    }

    pub fn gradient(&self, params: &NetworkParams<T>, t: T) -> NetworkParams<T> {
        self.loss_and_gradient(params, t).1
    }

    pub fn loss_and_gradient(&self, params: &NetworkParams<T>, t: T) -> (T, NetworkParams<T>) {
        let terms = self.terms(params, t, true);
        let mut grad = params.zeros_like();
        grad.as_mut_slice()
            .copy_from_slice(&terms.gradient.expect("gradient requested"));
        (terms.energy, grad)
    }

    fn check_t(t: T) -> Result<()> {
        if t >= T::zero() && t <= T::one() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "homotopy weight t must lie in [0, 1], got {t}"
            )))
        }
    }

    /// Checked F(θ, t).
    pub fn objective(&self, params: &NetworkParams<T>, t: T) -> Result<T> {
        Self::check_t(t)?;
        let value = self.loss(params, t);
        if value.is_finite() {
            Ok(value)
        } else {
            Err(Error::NonFinite("F2 integrand".into()))
        }
    }

    /// Checked ∇θF(θ, t).
    pub fn checked_gradient(&self, params: &NetworkParams<T>, t: T) -> Result<NetworkParams<T>> {
        Self::check_t(t)?;
        let (value, grad) = self.loss_and_gradient(params, t);
        if value.is_finite() && grad.as_slice().iter().all(|v| v.is_finite()) {
            Ok(grad)
        } else {
            Err(Error::NonFinite("G2 integrand".into()))
        }
    }

    /// `U ζ` at every grid node.
    pub fn solution_on_grid(&self, params: &NetworkParams<T>) -> Vec<T> {
        network_values(params, self.activation, self.grid)
            .into_iter()
            .zip(&self.samples.zeta)
            .map(|(u, &z)| u * z)
            .collect()
    }

    /// Minimizes F(·, t) from `init`.
    pub fn solve_stage(
        &self,
        init: NetworkParams<T>,
        t: T,
        config: &OptimizerConfig,
    ) -> Result<(NetworkParams<T>, RunTrace<T>)> {
        Self::check_t(t)?;
        minimize(
            |p: &NetworkParams<T>| self.loss(p, t),
            |p: &NetworkParams<T>| self.gradient(p, t),
            init,
            config,
        )
    }

    /// Homotopy continuation: minimize F(·, 0) from `init`, then F(·, i/steps)
    /// for `i = 1..=steps`, each stage warm-started from the previous one.
    ///
    /// `config.max_iters` is the total budget, split evenly over the
    /// `steps + 1` stages; the remainder goes to the final stage.
    pub fn run_homotopy(
        &self,
        init: NetworkParams<T>,
        steps: usize,
        config: &OptimizerConfig,
    ) -> Result<HomotopyResult<T>> {
        if steps == 0 {
            return Err(Error::InvalidArgument(
                "homotopy needs at least one step".into(),
            ));
        }
        let stages = steps + 1;
        let per_stage = config.max_iters / stages;
        if per_stage == 0 {
            return Err(Error::InvalidArgument(format!(
                "iteration budget {} is smaller than the {stages} homotopy stages",
                config.max_iters
            )));
        }
        let mut theta = init;
        let mut records = Vec::with_capacity(stages);
        for i in 0..stages {
            let t = T::from_count(i) / T::from_count(steps);
            let mut stage_config = config.clone();
            stage_config.max_iters = if i == steps {
                config.max_iters - per_stage * steps
            } else {
                per_stage
            };
            let (next, trace) = self.solve_stage(theta, t, &stage_config)?;
            log::info!(
                "homotopy stage {i}/{steps} (t = {t}): loss {:?} after {} iterations",
                trace.final_loss(),
                trace.iterations_used
            );
            let diverged = trace.terminated_by == Termination::Divergence;
            records.push(StageRecord { t, trace });
            theta = next;
            if diverged {
                return Err(Error::Divergence { iteration: i });
            }
        }
        Ok(HomotopyResult {
            params: theta,
            stages: records,
        })
    }
}

#[derive(Clone, Debug)]
pub struct StageRecord<T> {
    pub t: T,
    pub trace: RunTrace<T>,
}

#[derive(Clone, Debug)]
pub struct HomotopyResult<T> {
    pub params: NetworkParams<T>,
    pub stages: Vec<StageRecord<T>>,
}

/// β_ε(s).
pub fn beta_eps<T: Scalar>(pen: &PenaltyFamily<T>, s: T) -> T {
    pen.beta_eps(s)
}

/// B_ε(s).
pub fn big_b_eps<T: Scalar>(pen: &PenaltyFamily<T>, s: T) -> T {
    pen.big_b_eps(s)
}

/// F(θ, t) on `grid`.
pub fn objective_f2<T: Scalar>(
    params: &NetworkParams<T>,
    act: Activation,
    problem: &ObstacleProblem<T>,
    grid: &QuadratureGrid<T>,
    pen: &PenaltyFamily<T>,
    t: T,
) -> Result<T> {
    Method2::new(problem, grid, act, *pen).objective(params, t)
}

/// ∇θF(θ, t) on `grid`.
pub fn gradient_g2<T: Scalar>(
    params: &NetworkParams<T>,
    act: Activation,
    problem: &ObstacleProblem<T>,
    grid: &QuadratureGrid<T>,
    pen: &PenaltyFamily<T>,
    t: T,
) -> Result<NetworkParams<T>> {
    Method2::new(problem, grid, act, *pen).checked_gradient(params, t)
}
