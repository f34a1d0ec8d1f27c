//! Error norms, empirical convergence rates and seed aggregation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::ExperimentConfig;
use crate::fd_oracle::FdGrid;
use crate::quadrature::{chunked_sum, QuadratureGrid};
use crate::scalar::Scalar;

pub const RECORD_VERSION: u32 = 1;

/// Anything that can be evaluated pointwise on Ω.
pub trait SolutionField<T>: Sync {
    fn value(&self, x: &[T]) -> T;

    /// Analytic gradient, if available.
    fn gradient(&self, _x: &[T]) -> Option<Vec<T>> {
        None
    }
}

/// Wraps a value closure (and optionally a gradient closure).
pub struct FnField<V, G = fn(&[f64]) -> Vec<f64>> {
    value: V,
    gradient: Option<G>,
}

impl<V> FnField<V> {
    pub fn new(value: V) -> Self {
        Self {
            value,
            gradient: None,
        }
    }
}

impl<V, G> FnField<V, G> {
    pub fn with_gradient(value: V, gradient: G) -> Self {
        Self {
            value,
            gradient: Some(gradient),
        }
    }
}

impl<T, V, G> SolutionField<T> for FnField<V, G>
where
    V: Fn(&[T]) -> T + Sync,
    G: Fn(&[T]) -> Vec<T> + Sync,
{
    fn value(&self, x: &[T]) -> T {
        (self.value)(x)
    }

    fn gradient(&self, x: &[T]) -> Option<Vec<T>> {
        self.gradient.as_ref().map(|g| g(x))
    }
}

impl<T: Scalar> SolutionField<T> for FdGrid<T> {
    /// Piecewise linear interpolant; points off the grid evaluate to NaN.
    fn value(&self, x: &[T]) -> T {
        self.interpolate(x).unwrap_or_else(T::nan)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub linf: f64,
    /// ∫ e² dx.
    pub l2_integral: f64,
    /// (∫ e² dx)^½.
    pub l2_norm: f64,
    pub h1_seminorm: f64,
    pub n_eval_points: usize,
}

/// Gradient from `field` itself or, failing that, central differences with
/// step `step[k]` along each axis.
fn field_gradient<T: Scalar>(field: &dyn SolutionField<T>, x: &[T], step: &[T]) -> Vec<T> {
    if let Some(g) = field.gradient(x) {
        return g;
    }
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|k| {
            probe[k] = x[k] + step[k];
            let up = field.value(&probe);
            probe[k] = x[k] - step[k];
            let down = field.value(&probe);
            probe[k] = x[k];
            (up - down) / (step[k] + step[k])
        })
        .collect()
}

/// Errors of `candidate` against `reference` at the nodes of `grid`.
///
/// L∞ is the max over nodes; ∫e² and |e|_{H¹} use the grid's quadrature
/// weights. Gradients come from [`SolutionField::gradient`] when available
/// and from central differences with half the grid spacing otherwise.
pub fn error_report<T: Scalar>(
    candidate: &dyn SolutionField<T>,
    reference: &dyn SolutionField<T>,
    grid: &QuadratureGrid<T>,
) -> ErrorReport {
    let half = T::lit(0.5);
    let step: Vec<T> = grid.spacing().iter().map(|&h| h * half).collect();
    let errors: Vec<T> = grid
        .nodes()
        .map(|x| candidate.value(x) - reference.value(x))
        .collect();
    let linf = errors.iter().fold(T::zero(), |a, &e| a.max(e.abs()));
    let w = grid.weights();
    let l2_integral = chunked_sum(grid.len(), |i| w[i] * errors[i] * errors[i]);
    let h1_sq = chunked_sum(grid.len(), |i| {
        let x = grid.node(i);
        let gc = field_gradient(candidate, x, &step);
        let gr = field_gradient(reference, x, &step);
        w[i] * gc
            .iter()
            .zip(&gr)
            .fold(T::zero(), |a, (&c, &r)| a + (c - r) * (c - r))
    });
    ErrorReport {
        linf: linf.as_f64(),
        l2_integral: l2_integral.as_f64(),
        l2_norm: l2_integral.sqrt().as_f64(),
        h1_seminorm: h1_sq.sqrt().as_f64(),
        n_eval_points: grid.len(),
    }
}

fn ratio(a: f64, b: f64, c: f64) -> Result<f64> {
    let num = a - b;
    let den = b - c;
    if den == 0.0 {
        return Err(Error::UndefinedRate(format!(
            "zero denominator ({b} − {c})"
        )));
    }
    let r = num / den;
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::UndefinedRate(format!(
            "error differences ({num:e}, {den:e}) do not share a sign"
        )));
    }
    Ok(r)
}

/// Empirical order in N from errors at N, 2N, 4N:
/// `|log_{1/2}((e₁ − e₂)/(e₂ − e₃))|`.
pub fn rate_n(e10: f64, e20: f64, e40: f64) -> Result<f64> {
    Ok((ratio(e10, e20, e40)?.ln() / 0.5f64.ln()).abs())
}

/// Empirical order in ε from errors at ε = 10⁻¹, 10⁻², 10⁻³:
/// `log₁₀((e₁ − e₂)/(e₂ − e₃))`.
pub fn rate_eps(e_1: f64, e_01: f64, e_001: f64) -> Result<f64> {
    Ok(ratio(e_1, e_01, e_001)?.log10())
}

/// One training run, as written to disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub version: u32,
    pub method: u8,
    pub problem: String,
    pub neurons: usize,
    /// Penalty ε; recorded for Method 2 only.
    pub eps: Option<f64>,
    pub homotopy_steps: usize,
    pub seed: u64,
    pub config: ExperimentConfig,
    /// `None` when the run failed; see `failure`.
    pub report: Option<ErrorReport>,
    pub failure: Option<String>,
    pub final_loss: Option<f64>,
    pub final_params: Vec<f64>,
    /// Losses at the recorded iterations, concatenated over stages.
    pub loss_history: Vec<(usize, f64)>,
    pub wall_time_s: f64,
}

impl RunRecord {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let record: Self = serde_json::from_str(text)?;
        if record.version != RECORD_VERSION {
            return Err(Error::Parse(format!(
                "unsupported run record version {} (expected {RECORD_VERSION})",
                record.version
            )));
        }
        Ok(record)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    fn key(&self) -> GroupKey {
        GroupKey {
            method: self.method,
            problem: self.problem.clone(),
            neurons: self.neurons,
            eps_bits: self.eps.map(f64::to_bits),
            homotopy_steps: self.homotopy_steps,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct GroupKey {
    method: u8,
    problem: String,
    neurons: usize,
    eps_bits: Option<u64>,
    homotopy_steps: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    pub median: f64,
    pub min: f64,
}

impl Stats {
    /// `None` for an empty slice.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
        };
        Some(Self {
            mean: sorted.iter().sum::<f64>() / n as f64,
            median,
            min: sorted[0],
        })
    }
}

/// Seed-aggregated errors of one configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: u8,
    pub problem: String,
    pub neurons: usize,
    pub eps: Option<f64>,
    pub homotopy_steps: usize,
    pub runs: usize,
    pub failures: usize,
    pub linf: Option<Stats>,
    pub l2_integral: Option<Stats>,
    pub l2_norm: Option<Stats>,
    pub h1_seminorm: Option<Stats>,
}

/// Groups records by (method, problem, N, ε, homotopy steps), in that sort
/// order, and summarizes each group over its successful runs.
pub fn aggregate(records: &[RunRecord]) -> Result<Vec<SummaryRow>> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("no run records to aggregate".into()));
    }
    let mut groups: BTreeMap<GroupKey, Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(r.key()).or_default().push(r);
    }
    Ok(groups
        .into_iter()
        .map(|(key, members)| {
            let reports: Vec<&ErrorReport> =
                members.iter().filter_map(|r| r.report.as_ref()).collect();
            let column = |f: fn(&ErrorReport) -> f64| {
                Stats::of(&reports.iter().map(|r| f(r)).collect::<Vec<_>>())
            };
            SummaryRow {
                method: key.method,
                problem: key.problem,
                neurons: key.neurons,
                eps: key.eps_bits.map(f64::from_bits),
                homotopy_steps: key.homotopy_steps,
                runs: members.len(),
                failures: members.len() - reports.len(),
                linf: column(|r| r.linf),
                l2_integral: column(|r| r.l2_integral),
                l2_norm: column(|r| r.l2_norm),
                h1_seminorm: column(|r| r.h1_seminorm),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::Domain;
    use proptest::prelude::*;

    fn interval_grid(n: usize) -> QuadratureGrid<f64> {
        QuadratureGrid::build(&Domain::interval(-2.0, 2.0).unwrap(), n).unwrap()
    }

    #[test]
    fn identical_fields_have_zero_error() {
        let g = interval_grid(101);
        let f = FnField::new(|x: &[f64]| x[0].sin());
        let r = error_report(&f, &f, &g);
        assert_eq!(
            (r.linf, r.l2_integral, r.l2_norm, r.h1_seminorm),
            (0.0, 0.0, 0.0, 0.0)
        );
        assert_eq!(r.n_eval_points, 101);
    }

    #[test]
    fn constant_shift() {
        let g = interval_grid(400);
        let a = FnField::new(|x: &[f64]| x[0] * x[0]);
        let b = FnField::new(|x: &[f64]| x[0] * x[0] + 0.01);
        let r = error_report(&b, &a, &g);
        assert!((r.linf - 0.01).abs() < 1e-15);
        assert!((r.l2_integral - 4e-4).abs() < 1e-15);
        assert!((r.l2_norm * r.l2_norm - r.l2_integral).abs() <= 1e-12 * r.l2_integral);
        assert!(r.h1_seminorm < 1e-9);
    }

    #[test]
    fn analytic_and_fd_gradients_agree() {
        let g = interval_grid(200);
        let zero = FnField::new(|_: &[f64]| 0.0);
        let plain = FnField::new(|x: &[f64]| x[0].powi(3));
        let analytic = FnField::with_gradient(
            |x: &[f64]| x[0].powi(3),
            |x: &[f64]| vec![3.0 * x[0] * x[0]],
        );
        let a = error_report(&plain, &zero, &g).h1_seminorm;
        let b = error_report(&analytic, &zero, &g).h1_seminorm;
        assert!((a - b).abs() < 1e-3 * b);
        // ∫ 9x⁴ over (−2, 2) = 576/5.
        assert!((b - (576.0f64 / 5.0).sqrt()).abs() < 1e-2);
        let swapped = error_report(&zero, &plain, &g);
        assert!((swapped.h1_seminorm - a).abs() < 1e-12);
    }

    #[test]
    fn rate_examples() {
        assert!((rate_n(1.021e-2, 7.203e-3, 5.241e-3).unwrap() - 0.616).abs() < 5e-4);
        assert!((rate_n(8.864e-2, 7.008e-2, 5.700e-2).unwrap() - 0.505).abs() < 5e-4);
        assert!((rate_n(4.0, 2.0, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((rate_eps(2.243e-1, 3.380e-2, 1.594e-2).unwrap() - 1.03).abs() < 5e-3);
        assert!((rate_eps(0.1, 0.01, 0.001).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(
            rate_eps(0.1, 0.01, 0.01),
            Err(Error::UndefinedRate(_))
        ));
        assert!(matches!(
            rate_n(1.0, 2.0, 1.5),
            Err(Error::UndefinedRate(_))
        ));
    }

    proptest! {
        #[test]
        fn rates_are_scale_invariant(
            a in 1.0f64..10.0, b in 0.1f64..1.0, c in 0.001f64..0.09, k in -20i32..20, lam in 1e-3f64..1e3
        ) {
            let pow2 = 2f64.powi(k);
            prop_assert_eq!(rate_n(a, b, c).unwrap(), rate_n(pow2 * a, pow2 * b, pow2 * c).unwrap());
            prop_assert_eq!(rate_eps(a, b, c).unwrap(), rate_eps(pow2 * a, pow2 * b, pow2 * c).unwrap());
            let r = rate_n(a, b, c).unwrap();
            prop_assert!((r - rate_n(lam * a, lam * b, lam * c).unwrap()).abs() <= 1e-12 * r.max(1.0));
        }
    }

    fn record(seed: u64, linf: f64) -> RunRecord {
        RunRecord {
            version: RECORD_VERSION,
            method: 1,
            problem: "example1d".into(),
            neurons: 20,
            eps: None,
            homotopy_steps: 0,
            seed,
            config: ExperimentConfig::default(),
            report: Some(ErrorReport {
                linf,
                ..Default::default()
            }),
            failure: None,
            final_loss: Some(0.5),
            final_params: vec![0.1, -0.2],
            loss_history: vec![(0, 1.0)],
            wall_time_s: 0.0,
        }
    }

    #[test]
    fn aggregation_statistics() {
        let single = aggregate(&[record(0, 0.5)]).unwrap();
        let s = single[0].linf.unwrap();
        assert_eq!((s.mean, s.median, s.min), (0.5, 0.5, 0.5));
        let rows = aggregate(&[record(0, 3.0), record(1, 1.0), record(2, 2.0)]).unwrap();
        assert_eq!(rows.len(), 1);
        let s = rows[0].linf.unwrap();
        assert_eq!((s.mean, s.median, s.min), (2.0, 2.0, 1.0));
        assert!(aggregate(&[]).is_err());
    }

    #[test]
    fn aggregation_groups_and_counts_failures() {
        let mut other = record(0, 1.0);
        other.neurons = 10;
        let mut failed = record(1, 0.0);
        failed.report = None;
        failed.failure = Some("diverged".into());
        let rows = aggregate(&[record(0, 1.0), other, failed]).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].neurons, 10);
        assert_eq!((rows[1].runs, rows[1].failures), (2, 1));
    }

    #[test]
    fn record_json_round_trip() {
        let mut r = record(7, 0.1 + 0.2);
        r.final_params = vec![1.0 / 3.0, -2.5e-300, 123456.789];
        let back = RunRecord::from_json(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
        let mut bad = r.clone();
        bad.version = 2;
        assert!(RunRecord::from_json(&bad.to_json().unwrap()).is_err());
    }
}
