//! Feasibility-shift scheme.
//!
//! The network output is lifted by the constant
//! `δ_U = max_x (φ/ζ − U)⁺` and multiplied by the cutoff, so the candidate
//! `(U + δ_U) ζ` vanishes on ∂Ω and lies above φ for every θ. The plain
//! Dirichlet energy of that candidate is then minimized over θ with no
//! penalty term anywhere.
//!
//! The max is taken over the interior quadrature nodes. Its θ-derivative is
//! the envelope term `∇θδ_U = −∇θU(x*)` at the (first) maximizer `x*` when
//! `δ_U > 0`, and zero otherwise.

use crate::energy::{cutoff_energy, network_values, NodeSamples};
use crate::error::{Error, Result};
use crate::problem::ObstacleProblem;
use crate::quadrature::QuadratureGrid;
use crate::scalar::Scalar;
use crate::shallow_net::{Activation, NetworkParams, Parameters};

/// δ_U together with the maximizing node.
#[derive(Clone, Debug, PartialEq)]
pub struct FeasibilityShift<T> {
    pub delta: T,
    /// Node index of x*; `None` when δ_U = 0.
    pub argmax: Option<usize>,
    pub point: Option<Vec<T>>,
}

/// Objective, gradient and reconstruction for one (problem, grid) pair, with
/// the problem fields pre-sampled at the nodes.
pub struct Method1<'a, T> {
    problem: &'a ObstacleProblem<T>,
    grid: &'a QuadratureGrid<T>,
    samples: NodeSamples<T>,
    activation: Activation,
    /// Drops the envelope term `∇θδ_U` from the gradient.
    freeze_delta: bool,
}

impl<'a, T: Scalar> Method1<'a, T> {
    pub fn new(
        problem: &'a ObstacleProblem<T>,
        grid: &'a QuadratureGrid<T>,
        activation: Activation,
    ) -> Self {
        Self {
            samples: NodeSamples::new(problem, grid),
            problem,
            grid,
            activation,
            freeze_delta: false,
        }
    }

    pub fn with_freeze_delta(mut self, freeze: bool) -> Self {
        self.freeze_delta = freeze;
        self
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn grid(&self) -> &QuadratureGrid<T> {
        self.grid
    }

    pub fn problem(&self) -> &ObstacleProblem<T> {
        self.problem
    }

    fn shift_from_values(&self, u: &[T]) -> Result<FeasibilityShift<T>> {
        let gaps: Vec<T> = u
            .iter()
            .zip(&self.samples.obstacle)
            .zip(&self.samples.zeta)
            .map(|((&u, &phi), &zeta)| phi / zeta - u)
            .collect();
        let (max, idx) = self.grid.max_on_interior(&gaps)?;
        Ok(if max > T::zero() {
            FeasibilityShift {
                delta: max,
                argmax: Some(idx),
                point: Some(self.grid.node(idx).to_vec()),
            }
        } else {
            FeasibilityShift {
                delta: T::zero(),
                argmax: None,
                point: None,
            }
        })
    }

    pub fn delta_u(&self, params: &NetworkParams<T>) -> Result<FeasibilityShift<T>> {
        self.shift_from_values(&network_values(params, self.activation, self.grid))
    }

    /// `(U(x) + δ_U) ζ(x)`.
    pub fn reconstruct(&self, params: &NetworkParams<T>, delta: T, x: &[T]) -> T {
        (params.forward(self.activation, x) + delta) * self.problem.cutoff(x)
    }

    /// F₁(θ); non-finite values are returned as is.
    pub fn loss(&self, params: &NetworkParams<T>) -> T {
        match self.delta_u(params) {
            Ok(shift) => self.energy(params, shift.delta, false).energy,
            Err(_) => T::nan(),
        }
    }

    /// G₁(θ) = ∇θF₁(θ).
    pub fn gradient(&self, params: &NetworkParams<T>) -> NetworkParams<T> {
        self.loss_and_gradient(params).1
    }

    pub fn loss_and_gradient(&self, params: &NetworkParams<T>) -> (T, NetworkParams<T>) {
        let shift = match self.delta_u(params) {
            Ok(s) => s,
            Err(_) => {
                let mut nan = params.zeros_like();
                nan.as_mut_slice().fill(T::nan());
                return (T::nan(), nan);
            }
        };
        let terms = self.energy(params, shift.delta, true);
        let mut grad = params.zeros_like();
        grad.as_mut_slice()
            .copy_from_slice(&terms.gradient.expect("gradient requested"));
        if let (Some(point), false) = (&shift.point, self.freeze_delta) {
            // ∂θδ_U = −∂θU(x*), multiplied by ∫ c dx.
            params.add_grad_theta(
                self.activation,
                point,
                -terms.coefficient_integral,
                grad.as_mut_slice(),
            );
        }
        (terms.energy, grad)
    }

    fn energy(
        &self,
        params: &NetworkParams<T>,
        delta: T,
        with_gradient: bool,
    ) -> crate::energy::EnergyTerms<T> {
        cutoff_energy(
            params,
            self.activation,
            self.grid,
            &self.samples,
            delta,
            |_| (T::zero(), T::zero()),
            with_gradient,
        )
    }

    /// Checked F₁: fails on a non-finite integral.
    pub fn objective(&self, params: &NetworkParams<T>) -> Result<T> {
        let shift = self.delta_u(params)?;
        let value = self.energy(params, shift.delta, false).energy;
        if value.is_finite() {
            Ok(value)
        } else {
            Err(Error::NonFinite("F1 integrand".into()))
        }
    }

    /// Values of the reconstruction at every grid node.
    pub fn reconstruction_on_grid(&self, params: &NetworkParams<T>) -> Result<Vec<T>> {
        let u = network_values(params, self.activation, self.grid);
        let shift = self.shift_from_values(&u)?;
        Ok(u.iter()
            .zip(&self.samples.zeta)
            .map(|(&u, &z)| (u + shift.delta) * z)
            .collect())
    }
}

/// δ_U for `params` on `grid`.
pub fn compute_delta_u<T: Scalar>(
    params: &NetworkParams<T>,
    act: Activation,
    problem: &ObstacleProblem<T>,
    grid: &QuadratureGrid<T>,
) -> Result<FeasibilityShift<T>> {
    Method1::new(problem, grid, act).delta_u(params)
}

/// `(U + δ_U) ζ` at `x`.
pub fn reconstruct<T: Scalar>(
    params: &NetworkParams<T>,
    act: Activation,
    delta_u: T,
    problem: &ObstacleProblem<T>,
    x: &[T],
) -> T {
    (params.forward(act, x) + delta_u) * problem.cutoff(x)
}

/// F₁(θ) with δ_U recomputed on `grid`.
pub fn objective_f1<T: Scalar>(
    params: &NetworkParams<T>,
    act: Activation,
    problem: &ObstacleProblem<T>,
    grid: &QuadratureGrid<T>,
) -> Result<T> {
    Method1::new(problem, grid, act).objective(params)
}

/// G₁(θ), including the envelope term.
pub fn gradient_g1<T: Scalar>(
    params: &NetworkParams<T>,
    act: Activation,
    problem: &ObstacleProblem<T>,
    grid: &QuadratureGrid<T>,
) -> Result<NetworkParams<T>> {
    let (value, grad) = Method1::new(problem, grid, act).loss_and_gradient(params);
    if value.is_finite() && grad.to_f64_vec().iter().all(|v| v.is_finite()) {
        Ok(grad)
    } else {
        Err(Error::NonFinite("G1 integrand".into()))
    }
}
