//! Obstacle problem instances.
//!
//! An [`ObstacleProblem`] bundles the domain Ω (an interval or a rectangle),
//! the force `f`, the obstacle `φ`, the cutoff function `ζ` used to impose
//! the homogeneous boundary condition, and an optional closed-form solution.
//! Two benchmark problems ship with the crate ([`ObstacleProblem::example_1d`]
//! and [`ObstacleProblem::example_2d`]); further instances can be described by
//! a small text file with polynomial `f` and `φ` (see
//! [`ObstacleProblem::from_definition`]).

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Identifiers accepted by [`ObstacleProblem::builtin`].
pub const BUILTIN_IDS: [&str; 2] = ["example1d", "example2d"];

/// Ω as a product of open intervals, in one or two dimensions.
#[derive(Clone, Debug, PartialEq)]
pub struct Domain<T> {
    bounds: Vec<(T, T)>,
}

impl<T: Scalar> Domain<T> {
    pub fn interval(lo: T, hi: T) -> Result<Self> {
        Self::new(vec![(lo, hi)])
    }

    pub fn rectangle(x: (T, T), y: (T, T)) -> Result<Self> {
        Self::new(vec![x, y])
    }

    pub fn new(bounds: Vec<(T, T)>) -> Result<Self> {
        if !(1..=2).contains(&bounds.len()) {
            return Err(Error::InvalidDomain(format!(
                "dimension must be 1 or 2, got {}",
                bounds.len()
            )));
        }
        for (axis, &(lo, hi)) in bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidDomain(format!(
                    "axis {axis}: need finite lo < hi, got ({lo}, {hi})"
                )));
            }
        }
        Ok(Self { bounds })
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(T, T)] {
        &self.bounds
    }

    /// Lebesgue measure |Ω|.
    pub fn measure(&self) -> T {
        self.bounds
            .iter()
            .fold(T::one(), |acc, &(lo, hi)| acc * (hi - lo))
    }

    /// Membership in the closure, with a few ulps of slack per axis.
    pub fn contains_closed(&self, x: &[T]) -> bool {
        x.len() == self.dim()
            && self.bounds.iter().zip(x).all(|(&(lo, hi), &xi)| {
                let slack = T::epsilon() * T::lit(16.0) * (hi - lo);
                xi >= lo - slack && xi <= hi + slack
            })
    }

    /// Membership in the open domain.
    pub fn contains_open(&self, x: &[T]) -> bool {
        x.len() == self.dim()
            && self
                .bounds
                .iter()
                .zip(x)
                .all(|(&(lo, hi), &xi)| xi > lo && xi < hi)
    }
}

/// ζ(x) = Π_k (x_k − lo_k)(hi_k − x_k) / ((hi_k − lo_k)/2)².
///
/// Vanishes on ∂Ω, is positive inside, has a nonzero gradient on ∂Ω, and its
/// maximum (attained at the center) is 1. On (−2, 2) it is (4 − x²)/4.
#[derive(Clone, Debug, PartialEq)]
pub struct CutoffFunction<T> {
    domain: Domain<T>,
}

impl<T: Scalar> CutoffFunction<T> {
    pub fn new(domain: Domain<T>) -> Self {
        Self { domain }
    }

    fn factor(lo: T, hi: T, x: T) -> (T, T) {
        let half = (hi - lo) / T::lit(2.0);
        let scale = half * half;
        ((x - lo) * (hi - x) / scale, (lo + hi - x - x) / scale)
    }

    pub fn value(&self, x: &[T]) -> T {
        self.domain
            .bounds()
            .iter()
            .zip(x)
            .fold(T::one(), |acc, (&(lo, hi), &xi)| {
                acc * Self::factor(lo, hi, xi).0
            })
    }

    /// ∇ζ written into `out` (length = dimension).
    pub fn gradient_into(&self, x: &[T], out: &mut [T]) {
        let bounds = self.domain.bounds();
        match bounds.len() {
            1 => out[0] = Self::factor(bounds[0].0, bounds[0].1, x[0]).1,
            _ => {
                let (vx, dx) = Self::factor(bounds[0].0, bounds[0].1, x[0]);
                let (vy, dy) = Self::factor(bounds[1].0, bounds[1].1, x[1]);
                out[0] = dx * vy;
                out[1] = vx * dy;
            }
        }
    }

    pub fn gradient(&self, x: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.domain.dim()];
        self.gradient_into(x, &mut out);
        out
    }
}

/// Sum of monomials `c · x^i · y^j`.
#[derive(Clone, Debug, PartialEq)]
pub struct Polynomial<T> {
    dim: usize,
    terms: Vec<(T, [u32; 2])>,
}

impl<T: Scalar> Polynomial<T> {
    pub fn new(dim: usize, terms: Vec<(T, [u32; 2])>) -> Self {
        Self { dim, terms }
    }

    pub fn constant(dim: usize, c: T) -> Self {
        Self::new(dim, vec![(c, [0, 0])])
    }

    pub fn eval(&self, x: &[T]) -> T {
        self.terms.iter().fold(T::zero(), |acc, &(c, [i, j])| {
            let mut term = c * x[0].powi(i as i32);
            if self.dim == 2 {
                term *= x[1].powi(j as i32);
            }
            acc + term
        })
    }

    /// Parses comma-separated terms `coef i` (1-D) or `coef i j` (2-D).
    pub fn parse(dim: usize, text: &str) -> Result<Self> {
        let mut terms = Vec::new();
        for raw in text.split(',') {
            let fields: Vec<&str> = raw.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            if fields.len() != dim + 1 {
                return Err(Error::Parse(format!(
                    "term `{}`: expected coefficient and {dim} exponent(s)",
                    raw.trim()
                )));
            }
            let coef: f64 = fields[0]
                .parse()
                .map_err(|_| Error::Parse(format!("bad coefficient `{}`", fields[0])))?;
            let mut exps = [0u32; 2];
            for (k, f) in fields[1..].iter().enumerate() {
                exps[k] = f
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad exponent `{f}`")))?;
            }
            terms.push((T::lit(coef), exps));
        }
        if terms.is_empty() {
            return Err(Error::Parse("empty polynomial".into()));
        }
        Ok(Self::new(dim, terms))
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Fields<T> {
    Example1d,
    /// `c = (r*)²/√(1 − (r*)²)` is cached next to r*.
    Example2d {
        rstar: T,
        c: T,
    },
    Custom {
        force: Polynomial<T>,
        obstacle: Polynomial<T>,
    },
}

/// Field selector for [`ObstacleProblem::eval`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Field {
    Force,
    Obstacle,
    Cutoff,
    CutoffGrad,
    Exact,
}

impl FromStr for Field {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "force" => Ok(Field::Force),
            "obstacle" => Ok(Field::Obstacle),
            "cutoff" => Ok(Field::Cutoff),
            "cutoff_grad" => Ok(Field::CutoffGrad),
            "exact" => Ok(Field::Exact),
            other => Err(Error::Parse(format!("unknown field `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum FieldValue<T> {
    Scalar(T),
    Vector(Vec<T>),
}

impl<T: Copy> FieldValue<T> {
    pub fn scalar(&self) -> Option<T> {
        match self {
            FieldValue::Scalar(v) => Some(*v),
            FieldValue::Vector(_) => None,
        }
    }
}

/// A complete obstacle problem instance. Immutable after construction.
#[derive(Clone, Debug, PartialEq)]
pub struct ObstacleProblem<T> {
    name: String,
    domain: Domain<T>,
    cutoff: CutoffFunction<T>,
    fields: Fields<T>,
}

/// g(r) = r²(1 − log(r/2)) − 1, whose root in (0.5, 1) is r*.
fn rstar_residual<T: Scalar>(r: T) -> T {
    r * r * (T::one() - (r / T::lit(2.0)).ln()) - T::one()
}

/// Root r* of `r²(1 − log(r/2)) = 1` in (0.5, 1.0), by bisection.
///
/// Stops once `|g(r)| ≤ tol`; fails if the bracket does not change sign or if
/// the scalar type cannot resolve the requested tolerance.
pub fn solve_rstar<T: Scalar>(tol: T) -> Result<T> {
    if !(tol > T::zero()) {
        return Err(Error::InvalidArgument(format!(
            "tol must be positive, got {tol}"
        )));
    }
    let (mut lo, mut hi) = (T::lit(0.5), T::one());
    let (g_lo, g_hi) = (rstar_residual(lo), rstar_residual(hi));
    if g_lo.signum() == g_hi.signum() {
        return Err(Error::NoSignChange {
            lo: lo.as_f64(),
            hi: hi.as_f64(),
        });
    }
    let lo_negative = g_lo < T::zero();
    for iteration in 0..200 {
        let mid = (lo + hi) / T::lit(2.0);
        let g = rstar_residual(mid);
        if g.abs() <= tol {
            return Ok(mid);
        }
        if mid <= lo || mid >= hi {
            return Err(Error::NoConvergence {
                solver: "r* bisection",
                iterations: iteration,
                residual: g.abs().as_f64(),
            });
        }
        if (g < T::zero()) == lo_negative {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::NoConvergence {
        solver: "r* bisection",
        iterations: 200,
        residual: rstar_residual((lo + hi) / T::lit(2.0)).abs().as_f64(),
    })
}

impl<T: Scalar> ObstacleProblem<T> {
    /// Ω = (−2, 2), f ≡ 0, φ = 1 − x².
    pub fn example_1d() -> Self {
        let two = T::lit(2.0);
        let domain = Domain::interval(-two, two).expect("valid interval");
        Self {
            name: "example1d".into(),
            cutoff: CutoffFunction::new(domain.clone()),
            domain,
            fields: Fields::Example1d,
        }
    }

    /// Ω = (−2, 2)², radially symmetric obstacle with contact radius r*.
    pub fn example_2d() -> Self {
        // f32 cannot reach 1e-12 on g; a few ulps of g is the best it can do.
        let tol = T::lit(1e-12).max(T::epsilon() * T::lit(8.0));
        let rstar = solve_rstar(tol).expect("r* bracket is valid");
        let c = rstar * rstar / (T::one() - rstar * rstar).sqrt();
        let two = T::lit(2.0);
        let domain = Domain::rectangle((-two, two), (-two, two)).expect("valid square");
        Self {
            name: "example2d".into(),
            cutoff: CutoffFunction::new(domain.clone()),
            domain,
            fields: Fields::Example2d { rstar, c },
        }
    }

    /// Looks up a built-in problem by id.
    pub fn builtin(id: &str) -> Result<Self> {
        match id {
            "example1d" => Ok(Self::example_1d()),
            "example2d" => Ok(Self::example_2d()),
            other => Err(Error::UnknownProblem {
                id: other.to_string(),
                valid: BUILTIN_IDS.join(", "),
            }),
        }
    }

    /// Problem with polynomial force and obstacle on a box domain.
    pub fn custom(
        name: impl Into<String>,
        domain: Domain<T>,
        force: Polynomial<T>,
        obstacle: Polynomial<T>,
    ) -> Result<Self> {
        let problem = Self {
            name: name.into(),
            cutoff: CutoffFunction::new(domain.clone()),
            domain,
            fields: Fields::Custom { force, obstacle },
        };
        problem.validate()?;
        Ok(problem)
    }

    /// Parses a plain-text definition:
    ///
    /// ```text
    /// # either a builtin ...
    /// builtin = example1d
    /// # ... or a polynomial problem
    /// name = bump
    /// domain = -1 1            # or: -1 1 -1 1
    /// force = -2 0             # terms `coef i [j]`, comma separated
    /// obstacle = 0.5 0, -1 2
    /// ```
    pub fn from_definition(text: &str) -> Result<Self> {
        let mut name = String::from("custom");
        let mut domain = None;
        let mut force = None;
        let mut obstacle = None;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Parse(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "builtin" => return Self::builtin(value),
                "name" => name = value.to_string(),
                "domain" => {
                    let nums = value
                        .split_whitespace()
                        .map(|v| v.parse::<f64>().map(T::lit))
                        .collect::<std::result::Result<Vec<T>, _>>()
                        .map_err(|e| Error::Parse(format!("domain: {e}")))?;
                    if nums.len() % 2 != 0 {
                        return Err(Error::Parse("domain needs lo/hi pairs".into()));
                    }
                    domain = Some(Domain::new(nums.chunks(2).map(|p| (p[0], p[1])).collect())?);
                }
                "force" => force = Some(value.to_string()),
                "obstacle" => obstacle = Some(value.to_string()),
                other => {
                    return Err(Error::Parse(format!(
                        "line {}: unknown key `{other}`",
                        lineno + 1
                    )))
                }
            }
        }
        let domain = domain.ok_or_else(|| Error::Parse("missing `domain`".into()))?;
        let dim = domain.dim();
        let force = match force {
            Some(text) => Polynomial::parse(dim, &text)?,
            None => Polynomial::constant(dim, T::zero()),
        };
        let obstacle = Polynomial::parse(
            dim,
            &obstacle.ok_or_else(|| Error::Parse("missing `obstacle`".into()))?,
        )?;
        Self::custom(name, domain, force, obstacle)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_definition(&std::fs::read_to_string(path)?)
    }

    /// Checks φ < 0 on boundary samples.
    pub fn validate(&self) -> Result<()> {
        for x in boundary_samples(&self.domain, 64).chunks(self.dim()) {
            let phi = self.obstacle(x);
            if !(phi < T::zero()) {
                return Err(Error::InvalidProblem(format!(
                    "obstacle must be negative on the boundary; φ({:?}) = {phi}",
                    x
                )));
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn domain(&self) -> &Domain<T> {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn cutoff_function(&self) -> &CutoffFunction<T> {
        &self.cutoff
    }

    /// r* for [`ObstacleProblem::example_2d`].
    pub fn rstar(&self) -> Option<T> {
        match self.fields {
            Fields::Example2d { rstar, .. } => Some(rstar),
            _ => None,
        }
    }

    pub fn has_exact(&self) -> bool {
        !matches!(self.fields, Fields::Custom { .. })
    }

    pub fn force(&self, x: &[T]) -> T {
        match &self.fields {
            Fields::Example1d => T::zero(),
            Fields::Example2d { c, .. } => -*c / T::lit(2.0),
            Fields::Custom { force, .. } => force.eval(x),
        }
    }

    pub fn obstacle(&self, x: &[T]) -> T {
        match &self.fields {
            Fields::Example1d => T::one() - x[0] * x[0],
            Fields::Example2d { c, .. } => {
                let r2 = x[0] * x[0] + x[1] * x[1];
                let bowl = *c * (r2 / T::lit(8.0) - T::lit(0.5));
                if r2 <= T::one() {
                    (T::one() - r2).sqrt() + bowl
                } else {
                    -T::one() + bowl
                }
            }
            Fields::Custom { obstacle, .. } => obstacle.eval(x),
        }
    }

    pub fn cutoff(&self, x: &[T]) -> T {
        self.cutoff.value(x)
    }

    pub fn cutoff_grad(&self, x: &[T]) -> Vec<T> {
        self.cutoff.gradient(x)
    }

    /// Closed-form solution, branch by branch; a point on a seam goes to the
    /// earlier-listed branch.
    pub fn exact(&self, x: &[T]) -> Option<T> {
        match &self.fields {
            Fields::Example1d => {
                let two = T::lit(2.0);
                let s3 = T::lit(3.0).sqrt();
                let slope = T::lit(4.0) - two * s3;
                let x = x[0];
                Some(if x <= -two + s3 {
                    slope * (x + two)
                } else if x <= two - s3 {
                    T::one() - x * x
                } else {
                    slope * (two - x)
                })
            }
            Fields::Example2d { rstar, c } => {
                let r2 = x[0] * x[0] + x[1] * x[1];
                let bowl = *c * (r2 / T::lit(8.0) - T::lit(0.5));
                Some(if r2 <= *rstar * *rstar {
                    (T::one() - r2).sqrt() + bowl
                } else if r2 <= T::lit(4.0) {
                    -*c * (r2.sqrt() / T::lit(2.0)).ln() + bowl
                } else {
                    T::zero()
                })
            }
            Fields::Custom { .. } => None,
        }
    }

    /// Checked pointwise evaluation of one field.
    pub fn eval(&self, which: Field, x: &[T]) -> Result<FieldValue<T>> {
        if !self.domain.contains_closed(x) {
            return Err(Error::OutOfDomain {
                point: x.iter().map(|v| v.as_f64()).collect(),
            });
        }
        Ok(match which {
            Field::Force => FieldValue::Scalar(self.force(x)),
            Field::Obstacle => FieldValue::Scalar(self.obstacle(x)),
            Field::Cutoff => FieldValue::Scalar(self.cutoff(x)),
            Field::CutoffGrad => FieldValue::Vector(self.cutoff_grad(x)),
            Field::Exact => FieldValue::Scalar(
                self.exact(x)
                    .ok_or_else(|| Error::NoExactSolution(self.name.clone()))?,
            ),
        })
    }
}

impl<T: Scalar> fmt::Display for ObstacleProblem<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} on ", self.name)?;
        for (k, (lo, hi)) in self.domain.bounds().iter().enumerate() {
            if k > 0 {
                write!(f, "×")?;
            }
            write!(f, "({lo}, {hi})")?;
        }
        Ok(())
    }
}

/// Points on ∂Ω, flattened: both endpoints in 1-D, `n + 1` points per edge
/// (corners shared, `4n` distinct points) in 2-D.
pub fn boundary_samples<T: Scalar>(domain: &Domain<T>, n: usize) -> Vec<T> {
    let b = domain.bounds();
    match b.len() {
        1 => vec![b[0].0, b[0].1],
        _ => {
            let ((x0, x1), (y0, y1)) = (b[0], b[1]);
            let nt = T::from_count(n);
            let at = |lo: T, hi: T, k: usize| {
                if k == n {
                    hi
                } else {
                    lo + (hi - lo) * T::from_count(k) / nt
                }
            };
            let mut out = Vec::with_capacity(8 * n);
            for k in 0..n {
                out.extend([at(x0, x1, k), y0]);
                out.extend([x1, at(y0, y1, k)]);
                out.extend([at(x0, x1, n - k), y1]);
                out.extend([x0, at(y0, y1, n - k)]);
            }
            out
        }
    }
}
