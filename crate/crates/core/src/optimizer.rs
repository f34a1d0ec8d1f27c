//! First-order minimization: `θ_{k+1} = θ_k − α_k G(θ_k)`.
//!
//! Three stepsize policies are available: a fixed step, Armijo backtracking
//! by halving, and adaptive moment estimation (Adam).

use std::fmt;
use std::str::FromStr;

use num_traits::{Float, One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{norm2, Scalar};
use crate::shallow_net::Parameters;

/// Armijo sufficient-decrease constant.
pub const ARMIJO_C: f64 = 1e-4;
/// Maximum number of step halvings per backtracking iteration.
pub const MAX_HALVINGS: usize = 30;
pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_OFFSET: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum StepPolicy {
    Fixed,
    Backtracking,
    #[default]
    AdaptiveMoment,
}

impl StepPolicy {
    pub fn name(self) -> &'static str {
        match self {
            StepPolicy::Fixed => "fixed",
            StepPolicy::Backtracking => "backtracking",
            StepPolicy::AdaptiveMoment => "adam",
        }
    }
}

impl fmt::Display for StepPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StepPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" | "gd" => Ok(StepPolicy::Fixed),
            "backtracking" | "armijo" => Ok(StepPolicy::Backtracking),
            "adam" | "adaptive-moment" => Ok(StepPolicy::AdaptiveMoment),
            other => Err(Error::Parse(format!(
                "unknown optimizer `{other}` (expected fixed, backtracking or adam)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub policy: StepPolicy,
    /// Step α (initial step for backtracking, learning rate for Adam).
    pub alpha: f64,
    pub max_iters: usize,
    pub grad_tol: f64,
    /// Record the loss every `history_stride` iterations.
    pub history_stride: usize,
    /// Adam only: the learning rate decays geometrically from `alpha` to
    /// `alpha · final_lr_fraction` over `max_iters`. 1 keeps it constant.
    pub final_lr_fraction: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            policy: StepPolicy::AdaptiveMoment,
            alpha: 1e-2,
            max_iters: 4000,
            grad_tol: 0.0,
            history_stride: 10,
            final_lr_fraction: 1.0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "alpha must be > 0, got {}",
                self.alpha
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be ≥ 1".into()));
        }
        if !(self.grad_tol >= 0.0) {
            return Err(Error::InvalidArgument("grad_tol must be ≥ 0".into()));
        }
        if self.history_stride == 0 {
            return Err(Error::InvalidArgument("history_stride must be ≥ 1".into()));
        }
        if !(self.final_lr_fraction > 0.0 && self.final_lr_fraction <= 1.0) {
            return Err(Error::InvalidArgument(
                "final_lr_fraction must lie in (0, 1]".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    MaxIters,
    GradTol,
    Divergence,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunTrace<T> {
    /// Recorded losses; `loss_iterations[i]` is the iteration of `losses[i]`.
    pub losses: Vec<T>,
    pub loss_iterations: Vec<usize>,
    /// ‖G(θ_k)‖₂ at the same iterations as `losses`.
    pub grad_norms: Vec<T>,
    pub iterations_used: usize,
    pub terminated_by: Termination,
}

impl<T: Scalar> RunTrace<T> {
    pub fn final_loss(&self) -> Option<T> {
        self.losses.last().copied()
    }
}

/// Runs the configured descent from `init`.
///
/// On divergence (non-finite loss or gradient) the best recorded iterate is
/// returned with `terminated_by = Divergence`.
pub fn minimize<P, F, G>(
    objective: F,
    gradient: G,
    init: P,
    config: &OptimizerConfig,
) -> Result<(P, RunTrace<P::Scalar>)>
where
    P: Parameters,
    F: Fn(&P) -> P::Scalar,
    G: Fn(&P) -> P,
{
    config.validate()?;
    let lit = <P::Scalar as Scalar>::lit;
    let alpha = lit(config.alpha);
    let (beta1, beta2, offset) = (lit(ADAM_BETA1), lit(ADAM_BETA2), lit(ADAM_OFFSET));
    let decay = config.final_lr_fraction.powf(1.0 / config.max_iters as f64);

    let mut theta = init;
    let n = theta.as_slice().len();
    let mut m = vec![P::Scalar::zero(); n];
    let mut v = vec![P::Scalar::zero(); n];
    let (mut pow1, mut pow2) = (P::Scalar::one(), P::Scalar::one());
    let mut lr = config.alpha;

    let mut trace = RunTrace {
        losses: Vec::new(),
        loss_iterations: Vec::new(),
        grad_norms: Vec::new(),
        iterations_used: 0,
        terminated_by: Termination::MaxIters,
    };
    let mut best: Option<(P::Scalar, P)> = None;

    let diverge = |trace: &mut RunTrace<P::Scalar>, best: Option<(P::Scalar, P)>, theta: P, k| {
        trace.iterations_used = k;
        trace.terminated_by = Termination::Divergence;
        log::warn!("optimizer diverged at iteration {k}");
        Ok((best.map(|b| b.1).unwrap_or(theta), std::mem::take(trace)))
    };

    for k in 0..config.max_iters {
        let g = gradient(&theta);
        let gnorm = norm2(g.as_slice());
        let record = k % config.history_stride == 0;
        let needs_loss = record || config.policy == StepPolicy::Backtracking;
        let loss = if needs_loss {
            objective(&theta)
        } else {
            P::Scalar::zero()
        };
        if !gnorm.is_finite() || (needs_loss && !loss.is_finite()) {
            return diverge(&mut trace, best, theta, k);
        }
        if record {
            trace.losses.push(loss);
            trace.loss_iterations.push(k);
            trace.grad_norms.push(gnorm);
            if best.as_ref().is_none_or(|b| loss < b.0) {
                best = Some((loss, theta.clone()));
            }
        }
        if gnorm <= lit(config.grad_tol) {
            trace.iterations_used = k;
            trace.terminated_by = Termination::GradTol;
            finish(&objective, &theta, gnorm, k, &mut trace);
            return Ok((theta, trace));
        }
        match config.policy {
            StepPolicy::Fixed => {
                for (t, &gi) in theta.as_mut_slice().iter_mut().zip(g.as_slice()) {
                    *t -= alpha * gi;
                }
            }
            StepPolicy::Backtracking => {
                let mut step = alpha;
                let target_slope = lit(ARMIJO_C) * gnorm * gnorm;
                let mut accepted = None;
                let mut trial = theta.clone();
                for _ in 0..=MAX_HALVINGS {
                    for ((t, &t0), &gi) in trial
                        .as_mut_slice()
                        .iter_mut()
                        .zip(theta.as_slice())
                        .zip(g.as_slice())
                    {
                        *t = t0 - step * gi;
                    }
                    let f_trial = objective(&trial);
                    if f_trial.is_finite() && f_trial <= loss - step * target_slope {
                        accepted = Some(trial.clone());
                        break;
                    }
                    step /= lit(2.0);
                }
                // No sufficient decrease within the halving budget: stay put.
                if let Some(next) = accepted {
                    theta = next;
                }
            }
            StepPolicy::AdaptiveMoment => {
                pow1 *= beta1;
                pow2 *= beta2;
                let step = lit(lr);
                for (((t, &gi), mi), vi) in theta
                    .as_mut_slice()
                    .iter_mut()
                    .zip(g.as_slice())
                    .zip(m.iter_mut())
                    .zip(v.iter_mut())
                {
                    *mi = beta1 * *mi + (P::Scalar::one() - beta1) * gi;
                    *vi = beta2 * *vi + (P::Scalar::one() - beta2) * gi * gi;
                    let m_hat = *mi / (P::Scalar::one() - pow1);
                    let v_hat = *vi / (P::Scalar::one() - pow2);
                    *t -= step * m_hat / (v_hat.sqrt() + offset);
                }
                lr *= decay;
            }
        }
    }

    let k = config.max_iters;
    let g = gradient(&theta);
    let gnorm = norm2(g.as_slice());
    if !gnorm.is_finite() {
        return diverge(&mut trace, best, theta, k);
    }
    trace.iterations_used = k;
    if !finish(&objective, &theta, gnorm, k, &mut trace) {
        return diverge(&mut trace, best, theta, k);
    }
    Ok((theta, trace))
}

/// Appends the final loss; false if it is not finite.
fn finish<P, F>(
    objective: &F,
    theta: &P,
    gnorm: P::Scalar,
    k: usize,
    trace: &mut RunTrace<P::Scalar>,
) -> bool
where
    P: Parameters,
    F: Fn(&P) -> P::Scalar,
{
    let loss = objective(theta);
    if trace.loss_iterations.last() != Some(&k) {
        trace.losses.push(loss);
        trace.loss_iterations.push(k);
        trace.grad_norms.push(gnorm);
    }
    loss.is_finite()
}

impl<T> Default for RunTrace<T> {
    fn default() -> Self {
        Self {
            losses: Vec::new(),
            loss_iterations: Vec::new(),
            grad_norms: Vec::new(),
            iterations_used: 0,
            terminated_by: Termination::MaxIters,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[allow(clippy::ptr_arg)] // used as an objective over Vec<f64>
    fn bowl(theta: &Vec<f64>) -> f64 {
        0.5 * theta.iter().map(|t| t * t).sum::<f64>()
    }

    fn config(policy: StepPolicy, alpha: f64, iters: usize) -> OptimizerConfig {
        OptimizerConfig {
            policy,
            alpha,
            max_iters: iters,
            grad_tol: 0.0,
            history_stride: 1,
            final_lr_fraction: 1.0,
        }
    }

    #[test]
    fn fixed_step_halves_each_iteration() {
        let init = vec![4.0, -8.0];
        let (theta, trace) = minimize(
            bowl,
            |t| t.clone(),
            init,
            &config(StepPolicy::Fixed, 0.5, 10),
        )
        .unwrap();
        assert_eq!(theta, vec![4.0 / 1024.0, -8.0 / 1024.0]);
        assert_eq!(trace.terminated_by, Termination::MaxIters);
        assert_eq!(trace.iterations_used, 10);
        assert_eq!(trace.losses.len(), 11);
    }

    #[test]
    fn backtracking_decreases_monotonically() {
        let init = vec![3.0, 1.0, -2.0];
        let (_, trace) = minimize(
            bowl,
            |t| t.clone(),
            init,
            &config(StepPolicy::Backtracking, 5.0, 30),
        )
        .unwrap();
        for w in trace.losses.windows(2) {
            assert!(w[1] < w[0] || w[0] == 0.0, "{} then {}", w[0], w[1]);
        }
    }

    #[test]
    fn grad_tol_termination() {
        let mut cfg = config(StepPolicy::Fixed, 0.5, 1000);
        cfg.grad_tol = 1e-6;
        let (theta, trace) = minimize(bowl, |t| t.clone(), vec![1.0, 1.0], &cfg).unwrap();
        assert_eq!(trace.terminated_by, Termination::GradTol);
        assert!(norm2(&theta) <= 1e-6);
        assert!(trace.iterations_used < 1000);
    }

    #[test]
    fn adam_converges_on_bowl() {
        let (theta, _) = minimize(
            bowl,
            |t| t.clone(),
            vec![1.0, -2.0],
            &config(StepPolicy::AdaptiveMoment, 0.05, 2000),
        )
        .unwrap();
        assert!(norm2(&theta) < 1e-2);
    }

    #[test]
    fn divergence_returns_best_iterate() {
        // Step 3 on the bowl multiplies θ by −2 every iteration.
        let mut cfg = config(StepPolicy::Fixed, 3.0, 5000);
        cfg.history_stride = 1;
        let (theta, trace) = minimize(bowl, |t| t.clone(), vec![1.0], &cfg).unwrap();
        assert_eq!(trace.terminated_by, Termination::Divergence);
        assert_eq!(theta, vec![1.0]);
    }

    #[test]
    fn invalid_configs() {
        let cfg = OptimizerConfig {
            alpha: 0.0,
            ..OptimizerConfig::default()
        };
        assert!(minimize(bowl, |t| t.clone(), vec![1.0], &cfg).is_err());
        let cfg = OptimizerConfig {
            max_iters: 0,
            ..OptimizerConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn policy_names_round_trip() {
        for p in [
            StepPolicy::Fixed,
            StepPolicy::Backtracking,
            StepPolicy::AdaptiveMoment,
        ] {
            assert_eq!(p.name().parse::<StepPolicy>().unwrap(), p);
        }
    }
}
