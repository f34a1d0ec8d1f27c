//! Two-layer network `U(x; θ) = W₂ᵀ σ(W₁ᵀ x + b₁) + b₂` and its closed-form
//! derivatives with respect to `x`, `θ`, and the mixed `∂θ(∇ₓU)`.
//!
//! Parameters live in one flat vector laid out as `[W₁ | b₁ | W₂ | b₂]`, with
//! `W₁` stored input-major (`W₁[k][i]` at `k·N + i`). Gradients with respect
//! to θ use the same type and layout.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    /// `max(0, s)²`
    #[default]
    Relu2,
    Sigmoid,
    Tanh,
}

impl Activation {
    pub fn value<T: Scalar>(self, s: T) -> T {
        self.eval(s).0
    }

    pub fn d1<T: Scalar>(self, s: T) -> T {
        self.eval(s).1
    }

    pub fn d2<T: Scalar>(self, s: T) -> T {
        self.eval(s).2
    }

    /// `(σ(s), σ′(s), σ″(s))`.
    #[inline]
    pub fn eval<T: Scalar>(self, s: T) -> (T, T, T) {
        let two = T::lit(2.0);
        match self {
            Activation::Relu2 => {
                if s > T::zero() {
                    (s * s, two * s, two)
                } else {
                    (T::zero(), T::zero(), T::zero())
                }
            }
            Activation::Sigmoid => {
                let v = T::one() / (T::one() + (-s).exp());
                let d = v * (T::one() - v);
                (v, d, d * (T::one() - two * v))
            }
            Activation::Tanh => {
                let v = s.tanh();
                let d = T::one() - v * v;
                (v, d, -two * v * d)
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu2 => "relu2",
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu2" => Ok(Activation::Relu2),
            "sigmoid" => Ok(Activation::Sigmoid),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::Parse(format!(
                "unknown activation `{other}` (expected relu2, sigmoid or tanh)"
            ))),
        }
    }
}

/// Flat parameter vector, as seen by the optimizer.
pub trait Parameters: Clone {
    type Scalar: Scalar;

    fn as_slice(&self) -> &[Self::Scalar];
    fn as_mut_slice(&mut self) -> &mut [Self::Scalar];
}

impl<T: Scalar> Parameters for Vec<T> {
    type Scalar = T;

    fn as_slice(&self) -> &[T] {
        self
    }

    fn as_mut_slice(&mut self) -> &mut [T] {
        self
    }
}

/// θ = {W₁, b₁, W₂, b₂} for a network with `input_dim` inputs and `neurons`
/// hidden units.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams<T> {
    input_dim: usize,
    neurons: usize,
    theta: Vec<T>,
}

impl<T: Scalar> Parameters for NetworkParams<T> {
    type Scalar = T;

    fn as_slice(&self) -> &[T] {
        &self.theta
    }

    fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.theta
    }
}

/// Number of scalar parameters of a `p`-input, `n`-neuron network.
pub fn param_count(p: usize, n: usize) -> usize {
    n * (p + 2) + 1
}

impl<T: Scalar> NetworkParams<T> {
    pub fn zeros(input_dim: usize, neurons: usize) -> Self {
        Self {
            input_dim,
            neurons,
            theta: vec![T::zero(); param_count(input_dim, neurons)],
        }
    }

    pub fn from_flat(input_dim: usize, neurons: usize, theta: Vec<T>) -> Result<Self> {
        if neurons == 0 || !(1..=2).contains(&input_dim) {
            return Err(Error::InvalidArgument(format!(
                "need neurons ≥ 1 and input_dim ∈ {{1, 2}}, got N={neurons}, p={input_dim}"
            )));
        }
        let expected = param_count(input_dim, neurons);
        if theta.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                actual: theta.len(),
            });
        }
        if let Some(bad) = theta.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("parameter entry {bad}")));
        }
        Ok(Self {
            input_dim,
            neurons,
            theta,
        })
    }

    /// Builds θ from its blocks; `w1[k][i]` is the weight from input `k` to
    /// neuron `i`.
    pub fn from_parts(w1: &[Vec<T>], b1: &[T], w2: &[T], b2: T) -> Result<Self> {
        let p = w1.len();
        let n = b1.len();
        if w2.len() != n || w1.iter().any(|row| row.len() != n) {
            return Err(Error::InvalidArgument("inconsistent block shapes".into()));
        }
        let mut theta = Vec::with_capacity(param_count(p, n));
        for row in w1 {
            theta.extend_from_slice(row);
        }
        theta.extend_from_slice(b1);
        theta.extend_from_slice(w2);
        theta.push(b2);
        Self::from_flat(p, n, theta)
    }

    /// Entries i.i.d. uniform on `[−scale, scale]` from a ChaCha8 stream
    /// seeded with `seed`.
    pub fn init(input_dim: usize, neurons: usize, seed: u64, scale: T) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Self::zeros(input_dim, neurons);
        for v in params.theta.iter_mut() {
            let u: f64 = rng.gen();
            *v = scale * T::lit(2.0 * u - 1.0);
        }
        params
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn neurons(&self) -> usize {
        self.neurons
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    /// Zero bundle with the same shape.
    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.input_dim, self.neurons)
    }

    fn b1_offset(&self) -> usize {
        self.input_dim * self.neurons
    }

    fn w2_offset(&self) -> usize {
        self.b1_offset() + self.neurons
    }

    fn b2_offset(&self) -> usize {
        self.w2_offset() + self.neurons
    }

    pub fn w1(&self, k: usize, i: usize) -> T {
        self.theta[k * self.neurons + i]
    }

    pub fn b1(&self, i: usize) -> T {
        self.theta[self.b1_offset() + i]
    }

    pub fn w2(&self, i: usize) -> T {
        self.theta[self.w2_offset() + i]
    }

    pub fn b2(&self) -> T {
        self.theta[self.b2_offset()]
    }

    pub fn w1_mut(&mut self, k: usize, i: usize) -> &mut T {
        let n = self.neurons;
        &mut self.theta[k * n + i]
    }

    pub fn b1_mut(&mut self, i: usize) -> &mut T {
        let o = self.b1_offset();
        &mut self.theta[o + i]
    }

    pub fn w2_mut(&mut self, i: usize) -> &mut T {
        let o = self.w2_offset();
        &mut self.theta[o + i]
    }

    pub fn b2_mut(&mut self) -> &mut T {
        let o = self.b2_offset();
        &mut self.theta[o]
    }

    /// Flat index of `∂/∂b₂`.
    pub fn b2_index(&self) -> usize {
        self.b2_offset()
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.theta.iter().map(|v| v.as_f64()).collect()
    }

    fn preactivation(&self, x: &[T], i: usize) -> T {
        let mut z = self.b1(i);
        for (k, &xk) in x.iter().enumerate() {
            z += self.w1(k, i) * xk;
        }
        z
    }

    /// U(x; θ).
    pub fn forward(&self, act: Activation, x: &[T]) -> T {
        let mut u = self.b2();
        for i in 0..self.neurons {
            u += self.w2(i) * act.value(self.preactivation(x, i));
        }
        u
    }

    /// ∇ₓU = W₁ diag(σ′(z)) W₂.
    pub fn grad_x(&self, act: Activation, x: &[T]) -> Vec<T> {
        let mut g = vec![T::zero(); self.input_dim];
        for i in 0..self.neurons {
            let s = self.w2(i) * act.d1(self.preactivation(x, i));
            for (k, gk) in g.iter_mut().enumerate() {
                *gk += self.w1(k, i) * s;
            }
        }
        g
    }

    /// ∇θU, same layout as θ.
    pub fn grad_theta(&self, act: Activation, x: &[T]) -> Self {
        let mut out = self.zeros_like();
        self.add_grad_theta(act, x, T::one(), &mut out.theta);
        out
    }

    /// `out += scale · ∇θU(x)`.
    pub(crate) fn add_grad_theta(&self, act: Activation, x: &[T], scale: T, out: &mut [T]) {
        let (n, p) = (self.neurons, self.input_dim);
        let (ob1, ow2, ob2) = (self.b1_offset(), self.w2_offset(), self.b2_offset());
        for i in 0..n {
            let (s, ds, _) = act.eval(self.preactivation(x, i));
            let back = scale * self.w2(i) * ds;
            out[ow2 + i] += scale * s;
            out[ob1 + i] += back;
            for k in 0..p {
                out[k * n + i] += back * x[k];
            }
        }
        out[ob2] += scale;
    }

    /// Mixed derivatives `∂θⱼ (∂U/∂x_k)` for every parameter entry `j`.
    pub fn grad_theta_of_grad_x(&self, act: Activation, x: &[T]) -> MixedGradient<T> {
        let (n, p) = (self.neurons, self.input_dim);
        let mut data = vec![T::zero(); self.len() * p];
        let (ob1, ow2) = (self.b1_offset(), self.w2_offset());
        for i in 0..n {
            let (_, ds, dds) = act.eval(self.preactivation(x, i));
            let w2 = self.w2(i);
            for k in 0..p {
                let w1k = self.w1(k, i);
                // ∂/∂W₂ᵢ
                data[(ow2 + i) * p + k] = ds * w1k;
                // ∂/∂b₁ᵢ
                data[(ob1 + i) * p + k] = w2 * dds * w1k;
                // ∂/∂W₁[l][i]
                for l in 0..p {
                    let mut v = w2 * dds * x[l] * w1k;
                    if l == k {
                        v += w2 * ds;
                    }
                    data[(l * n + i) * p + k] = v;
                }
            }
        }
        // ∂/∂b₂ is identically zero.
        MixedGradient { dim: p, data }
    }

    /// Per-node evaluation that fills `cache` with σ, σ′, σ″ of every
    /// neuron and writes ∇ₓU into `grad`. Returns U.
    #[inline]
    pub(crate) fn eval_cached(
        &self,
        act: Activation,
        x: &[T],
        cache: &mut NodeCache<T>,
        grad: &mut [T],
    ) -> T {
        let n = self.neurons;
        let (ob1, ow2) = (self.b1_offset(), self.w2_offset());
        let mut u = self.b2();
        grad.iter_mut().for_each(|g| *g = T::zero());
        for i in 0..n {
            let mut z = self.theta[ob1 + i];
            for (k, &xk) in x.iter().enumerate() {
                z += self.theta[k * n + i] * xk;
            }
            let (s, ds, dds) = act.eval(z);
            cache.sigma[i] = s;
            cache.dsigma[i] = ds;
            cache.ddsigma[i] = dds;
            let w2 = self.theta[ow2 + i];
            u += w2 * s;
            for (k, g) in grad.iter_mut().enumerate() {
                *g += self.theta[k * n + i] * w2 * ds;
            }
        }
        u
    }

    /// Adds the θ-gradient of a Dirichlet-type energy density at one node:
    ///
    /// `out += zeta · (w · ∂θ∇U) + c · ∂θU`
    ///
    /// where `w = ∇(Vζ)` and `c` collects every term multiplying `∂θU`.
    /// `cache` must come from [`NetworkParams::eval_cached`] at the same `x`.
    #[inline]
    pub(crate) fn accumulate_energy_grad(
        &self,
        x: &[T],
        cache: &NodeCache<T>,
        w: &[T],
        zeta: T,
        c: T,
        out: &mut [T],
    ) {
        let n = self.neurons;
        let (ob1, ow2, ob2) = (self.b1_offset(), self.w2_offset(), self.b2_offset());
        for i in 0..n {
            let mut s_w = T::zero();
            for (k, &wk) in w.iter().enumerate() {
                s_w += wk * self.theta[k * n + i];
            }
            let (s, ds, dds) = (cache.sigma[i], cache.dsigma[i], cache.ddsigma[i]);
            let w2 = self.theta[ow2 + i];
            out[ow2 + i] += zeta * ds * s_w + c * s;
            let common = zeta * w2 * dds * s_w + c * w2 * ds;
            out[ob1 + i] += common;
            let direct = zeta * w2 * ds;
            for (l, &xl) in x.iter().enumerate() {
                out[l * n + i] += common * xl + direct * w[l];
            }
        }
        out[ob2] += c;
    }
}

/// Scratch space for one node: σ, σ′, σ″ per neuron.
#[derive(Clone, Debug)]
pub(crate) struct NodeCache<T> {
    sigma: Vec<T>,
    dsigma: Vec<T>,
    ddsigma: Vec<T>,
}

impl<T: Scalar> NodeCache<T> {
    pub(crate) fn new(neurons: usize) -> Self {
        Self {
            sigma: vec![T::zero(); neurons],
            dsigma: vec![T::zero(); neurons],
            ddsigma: vec![T::zero(); neurons],
        }
    }
}

/// `∂θⱼ ∇ₓU` for every parameter entry `j`: one `p`-vector per entry.
#[derive(Clone, Debug, PartialEq)]
pub struct MixedGradient<T> {
    dim: usize,
    data: Vec<T>,
}

impl<T: Scalar> MixedGradient<T> {
    /// `∂θⱼ (∂U/∂x_k)`.
    pub fn get(&self, j: usize, k: usize) -> T {
        self.data[j * self.dim + k]
    }

    /// The `p`-vector for parameter entry `j`.
    pub fn entry(&self, j: usize) -> &[T] {
        &self.data[j * self.dim..(j + 1) * self.dim]
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}
