//! Tensor-product composite midpoint rule on intervals and rectangles.
//!
//! The same node set serves integration, the feasibility-shift scan and all
//! feasibility checks. Nodes are cell centers, so none of them touches ∂Ω,
//! where φ/ζ is singular.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::problem::{boundary_samples, Domain};
use crate::scalar::{pairwise_sum, Scalar};

/// Number of nodes per reduction chunk. Fixed, so that chunked sums do not
/// depend on the thread count.
pub const CHUNK: usize = 256;

#[derive(Clone, Debug)]
pub struct QuadratureGrid<T> {
    dim: usize,
    nodes: Vec<T>,
    weights: Vec<T>,
    interior: Vec<bool>,
    boundary_nodes: Vec<T>,
    spacing: Vec<T>,
    measure: T,
}

impl<T: Scalar> QuadratureGrid<T> {
    /// Composite midpoint rule with `nodes_per_axis` cells per axis.
    pub fn build(domain: &Domain<T>, nodes_per_axis: usize) -> Result<Self> {
        if nodes_per_axis < 3 {
            return Err(Error::InvalidArgument(format!(
                "nodes_per_axis must be at least 3, got {nodes_per_axis}"
            )));
        }
        let n = nodes_per_axis;
        let nt = T::from_count(n);
        let half = T::lit(0.5);
        let axes: Vec<(Vec<T>, T)> = domain
            .bounds()
            .iter()
            .map(|&(lo, hi)| {
                let h = (hi - lo) / nt;
                let centers = (0..n)
                    .map(|i| lo + (hi - lo) * (T::from_count(i) + half) / nt)
                    .collect();
                (centers, h)
            })
            .collect();
        let spacing: Vec<T> = axes.iter().map(|a| a.1).collect();
        let (nodes, weights) = match axes.len() {
            1 => (axes[0].0.clone(), vec![spacing[0]; n]),
            _ => {
                let mut nodes = Vec::with_capacity(2 * n * n);
                for &x in &axes[0].0 {
                    for &y in &axes[1].0 {
                        nodes.extend([x, y]);
                    }
                }
                (nodes, vec![spacing[0] * spacing[1]; n * n])
            }
        };
        let interior = nodes
            .chunks(domain.dim())
            .map(|x| domain.contains_open(x))
            .collect();
        Ok(Self {
            dim: domain.dim(),
            boundary_nodes: boundary_samples(domain, n),
            interior,
            nodes,
            weights,
            spacing,
            measure: domain.measure(),
        })
    }

    /// Uniform Monte Carlo points with equal weights |Ω|/samples.
    pub fn monte_carlo(domain: &Domain<T>, samples: usize, seed: u64) -> Result<Self> {
        if samples == 0 {
            return Err(Error::InvalidArgument("samples must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut nodes = Vec::with_capacity(samples * domain.dim());
        for _ in 0..samples {
            for &(lo, hi) in domain.bounds() {
                // Open interval so no sample lands on the boundary.
                let u: f64 = rng.gen_range(f64::EPSILON..1.0);
                nodes.push(lo + (hi - lo) * T::lit(u));
            }
        }
        let measure = domain.measure();
        let per_axis = T::from_count(samples).powf(T::one() / T::from_count(domain.dim()));
        let spacing = domain
            .bounds()
            .iter()
            .map(|&(lo, hi)| (hi - lo) / per_axis)
            .collect();
        let interior = nodes
            .chunks(domain.dim())
            .map(|x| domain.contains_open(x))
            .collect();
        Ok(Self {
            dim: domain.dim(),
            boundary_nodes: boundary_samples(domain, per_axis.ceil().as_f64() as usize),
            interior,
            weights: vec![measure / T::from_count(samples); samples],
            nodes,
            spacing,
            measure,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn node(&self, i: usize) -> &[T] {
        &self.nodes[i * self.dim..(i + 1) * self.dim]
    }

    pub fn nodes(&self) -> impl ExactSizeIterator<Item = &[T]> + '_ {
        self.nodes.chunks(self.dim)
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn interior_mask(&self) -> &[bool] {
        &self.interior
    }

    pub fn boundary_nodes(&self) -> impl Iterator<Item = &[T]> + '_ {
        self.boundary_nodes.chunks(self.dim)
    }

    pub fn spacing(&self) -> &[T] {
        &self.spacing
    }

    /// Largest per-axis spacing.
    pub fn h(&self) -> T {
        self.spacing.iter().fold(T::zero(), |a, &b| a.max(b))
    }

    pub fn measure(&self) -> T {
        self.measure
    }

    /// Σ wᵢ vᵢ with the deterministic chunked reduction.
    pub fn integrate(&self, values: &[T]) -> Result<T> {
        if values.len() != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                actual: values.len(),
            });
        }
        Ok(chunked_sum(self.len(), |i| self.weights[i] * values[i]))
    }

    /// Maximum over interior nodes and the index of its first occurrence.
    pub fn max_on_interior(&self, values: &[T]) -> Result<(T, usize)> {
        if values.len() != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                actual: values.len(),
            });
        }
        let mut best: Option<(T, usize)> = None;
        for (i, (&v, &inside)) in values.iter().zip(&self.interior).enumerate() {
            if inside && best.is_none_or(|(b, _)| v > b) {
                best = Some((v, i));
            }
        }
        best.ok_or(Error::EmptyInterior)
    }
}

/// Sums `term(i)` over `0..len`: sequential within fixed chunks, chunks in
/// parallel, partial sums combined pairwise. Bitwise deterministic.
pub fn chunked_sum<T: Scalar, F>(len: usize, term: F) -> T
where
    F: Fn(usize) -> T + Sync,
{
    let partials: Vec<T> = (0..len.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = T::zero();
            for i in c * CHUNK..((c + 1) * CHUNK).min(len) {
                acc += term(i);
            }
            acc
        })
        .collect();
    pairwise_sum(&partials)
}
