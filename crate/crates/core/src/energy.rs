//! Quadrature of cutoff-weighted Dirichlet energies and their θ-gradients.
//!
//! Both schemes minimize an energy of the form
//!
//! ```text
//!   ∫ ½|∇(Vζ)|² − Vζ f + P(φ − Vζ) dx,     V = U(x; θ) + shift
//! ```
//!
//! (Method 1: `shift = δ_U`, `P = 0`; Method 2: `shift = 0`,
//! `P = t·B_ε`). This module evaluates that integral and its gradient in one
//! pass over the grid, node-parallel with a fixed reduction order.

use rayon::prelude::*;

use crate::problem::ObstacleProblem;
use crate::quadrature::{QuadratureGrid, CHUNK};
use crate::scalar::{pairwise_sum, Scalar};
use crate::shallow_net::{Activation, NetworkParams, NodeCache};

/// Problem fields sampled once at the grid nodes.
#[derive(Clone, Debug)]
pub struct NodeSamples<T> {
    dim: usize,
    pub zeta: Vec<T>,
    /// ∇ζ, flattened with stride `dim`.
    pub grad_zeta: Vec<T>,
    pub force: Vec<T>,
    pub obstacle: Vec<T>,
}

impl<T: Scalar> NodeSamples<T> {
    pub fn new(problem: &ObstacleProblem<T>, grid: &QuadratureGrid<T>) -> Self {
        let dim = grid.dim();
        let mut grad_zeta = vec![T::zero(); grid.len() * dim];
        let cutoff = problem.cutoff_function();
        for (i, x) in grid.nodes().enumerate() {
            cutoff.gradient_into(x, &mut grad_zeta[i * dim..(i + 1) * dim]);
        }
        Self {
            dim,
            zeta: grid.nodes().map(|x| problem.cutoff(x)).collect(),
            force: grid.nodes().map(|x| problem.force(x)).collect(),
            obstacle: grid.nodes().map(|x| problem.obstacle(x)).collect(),
            grad_zeta,
        }
    }

    pub fn grad_zeta(&self, i: usize) -> &[T] {
        &self.grad_zeta[i * self.dim..(i + 1) * self.dim]
    }
}

/// U(x; θ) at every grid node.
pub fn network_values<T: Scalar>(
    params: &NetworkParams<T>,
    act: Activation,
    grid: &QuadratureGrid<T>,
) -> Vec<T> {
    (0..grid.len())
        .into_par_iter()
        .with_min_len(CHUNK)
        .map(|i| params.forward(act, grid.node(i)))
        .collect()
}

pub(crate) struct EnergyTerms<T> {
    pub energy: T,
    /// ∫ c dx with `c = ∇(Vζ)·∇ζ − ζ f − P′(φ − Vζ) ζ`, the coefficient of
    /// `∂θV` in the gradient density.
    pub coefficient_integral: T,
    pub gradient: Option<Vec<T>>,
}

/// Energy (and optionally gradient) of `V = U + shift` with penalty density
/// `penalty(gap) = (P(gap), P′(gap))`, `gap = φ − Vζ`.
pub(crate) fn cutoff_energy<T, P>(
    params: &NetworkParams<T>,
    act: Activation,
    grid: &QuadratureGrid<T>,
    samples: &NodeSamples<T>,
    shift: T,
    penalty: P,
    with_gradient: bool,
) -> EnergyTerms<T>
where
    T: Scalar,
    P: Fn(T) -> (T, T) + Sync,
{
    let dim = grid.dim();
    let n_params = params.len();
    let half = T::lit(0.5);
    let chunks = grid.len().div_ceil(CHUNK);

    let partials: Vec<(T, T, Vec<T>)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut cache = NodeCache::new(params.neurons());
            let mut grad_u = [T::zero(); 2];
            let mut w = [T::zero(); 2];
            let mut energy = T::zero();
            let mut coef_sum = T::zero();
            let mut grad = if with_gradient {
                vec![T::zero(); n_params]
            } else {
                Vec::new()
            };
            for i in c * CHUNK..((c + 1) * CHUNK).min(grid.len()) {
                let x = grid.node(i);
                let weight = grid.weights()[i];
                let zeta = samples.zeta[i];
                let f = samples.force[i];
                let gz = samples.grad_zeta(i);
                let u = params.eval_cached(act, x, &mut cache, &mut grad_u[..dim]);
                let v = u + shift;
                let mut w2 = T::zero();
                let mut w_dot_gz = T::zero();
                for k in 0..dim {
                    w[k] = zeta * grad_u[k] + v * gz[k];
                    w2 += w[k] * w[k];
                    w_dot_gz += w[k] * gz[k];
                }
                let (pen, dpen) = penalty(samples.obstacle[i] - v * zeta);
                energy += weight * (half * w2 - v * zeta * f + pen);
                let coef = w_dot_gz - zeta * f - dpen * zeta;
                coef_sum += weight * coef;
                if with_gradient {
                    params.accumulate_energy_grad(
                        x,
                        &cache,
                        &w[..dim],
                        weight * zeta,
                        weight * coef,
                        &mut grad,
                    );
                }
            }
            (energy, coef_sum, grad)
        })
        .collect();

    let energies: Vec<T> = partials.iter().map(|p| p.0).collect();
    let coefs: Vec<T> = partials.iter().map(|p| p.1).collect();
    let gradient = with_gradient.then(|| {
        let grads: Vec<&[T]> = partials.iter().map(|p| p.2.as_slice()).collect();
        pairwise_sum_vectors(&grads, n_params)
    });
    EnergyTerms {
        energy: pairwise_sum(&energies),
        coefficient_integral: pairwise_sum(&coefs),
        gradient,
    }
}

fn pairwise_sum_vectors<T: Scalar>(parts: &[&[T]], len: usize) -> Vec<T> {
    match parts.len() {
        0 => vec![T::zero(); len],
        1 => parts[0].to_vec(),
        n => {
            let mut left = pairwise_sum_vectors(&parts[..n / 2], len);
            let right = pairwise_sum_vectors(&parts[n / 2..], len);
            for (a, b) in left.iter_mut().zip(right) {
                *a += b;
            }
            left
        }
    }
}
