//! Finite-difference reference solutions on uniform vertex grids.
//!
//! Three solvers share the standard 3-point / 5-point Laplacian `−Δ_h` with
//! homogeneous Dirichlet data:
//!
//! * [`solve_obstacle_psor`]: projected SOR for the discrete complementarity
//!   problem `u ≥ φ`, `−Δ_h u ≥ f`, `(u − φ)(−Δ_h u − f) = 0`.
//! * [`solve_penalized_newton`]: damped Newton for `−Δ_h u − f = β_ε(φ − u)`.
//! * [`solve_poisson`]: `−Δ_h u = f`.
//!
//! Linear systems are solved with the Thomas algorithm in 1-D and Jacobi
//! preconditioned conjugate gradients in 2-D.

use crate::error::{Error, Result};
use crate::method2::PenaltyFamily;
use crate::problem::ObstacleProblem;
use crate::scalar::Scalar;

pub const DEFAULT_PSOR_TOL: f64 = 1e-10;
pub const DEFAULT_NEWTON_TOL: f64 = 1e-8;
pub const DEFAULT_M_1D: usize = 4001;
pub const DEFAULT_M_2D: usize = 257;
const MAX_LINE_SEARCH: usize = 30;

/// Node values on a uniform grid of `m` points per axis, boundary included.
/// 2-D values are row-major with x as the outer index.
#[derive(Clone, Debug, PartialEq)]
pub struct FdGrid<T> {
    dim: usize,
    m: usize,
    lo: Vec<T>,
    h: Vec<T>,
    pub values: Vec<T>,
    /// Sweeps (PSOR) or Newton iterations used to produce `values`.
    pub iterations: usize,
}

impl<T: Scalar> FdGrid<T> {
    /// Zero field on the vertex grid of `problem`'s domain.
    pub fn zeros(problem: &ObstacleProblem<T>, m: usize) -> Result<Self> {
        if m < 3 {
            return Err(Error::InvalidArgument(format!(
                "grid needs at least 3 points per axis, got {m}"
            )));
        }
        let bounds = problem.domain().bounds();
        let dim = bounds.len();
        let steps = T::from_count(m - 1);
        Ok(Self {
            dim,
            m,
            lo: bounds.iter().map(|b| b.0).collect(),
            h: bounds.iter().map(|&(lo, hi)| (hi - lo) / steps).collect(),
            values: vec![T::zero(); m.pow(dim as u32)],
            iterations: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Points per axis.
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn spacing(&self) -> &[T] {
        &self.h
    }

    /// Largest spacing.
    pub fn h(&self) -> T {
        self.h.iter().copied().fold(T::zero(), T::max)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Multi-index of flat node `idx`.
    pub fn index(&self, idx: usize) -> [usize; 2] {
        match self.dim {
            1 => [idx, 0],
            _ => [idx / self.m, idx % self.m],
        }
    }

    pub fn coord(&self, axis: usize, i: usize) -> T {
        self.lo[axis] + T::from_count(i) * self.h[axis]
    }

    pub fn node(&self, idx: usize) -> Vec<T> {
        let ij = self.index(idx);
        (0..self.dim).map(|a| self.coord(a, ij[a])).collect()
    }

    pub fn is_boundary(&self, idx: usize) -> bool {
        let ij = self.index(idx);
        ij[..self.dim].iter().any(|&i| i == 0 || i == self.m - 1)
    }

    pub fn interior_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&i| !self.is_boundary(i))
    }

    fn sample(&self, f: impl Fn(&[T]) -> T) -> Vec<T> {
        (0..self.len())
            .map(|i| {
                if self.is_boundary(i) {
                    T::zero()
                } else {
                    f(&self.node(i))
                }
            })
            .collect()
    }

    fn inv_h2(&self) -> Vec<T> {
        self.h.iter().map(|&h| T::one() / (h * h)).collect()
    }

    /// `−Δ_h v` at interior nodes, zero on the boundary.
    pub fn neg_laplacian(&self, v: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); v.len()];
        self.apply(v, None, &mut out);
        out
    }

    /// `out = (−Δ_h + diag(shift)) v` at interior nodes.
    fn apply(&self, v: &[T], shift: Option<&[T]>, out: &mut [T]) {
        let inv = self.inv_h2();
        let two = T::lit(2.0);
        for idx in 0..v.len() {
            if self.is_boundary(idx) {
                out[idx] = T::zero();
                continue;
            }
            let mut acc =
                inv[0] * (two * v[idx] - v[idx - self.stride(0)] - v[idx + self.stride(0)]);
            if self.dim == 2 {
                acc += inv[1] * (two * v[idx] - v[idx - 1] - v[idx + 1]);
            }
            if let Some(s) = shift {
                acc += s[idx] * v[idx];
            }
            out[idx] = acc;
        }
    }

    fn stride(&self, axis: usize) -> usize {
        if self.dim == 2 && axis == 0 {
            self.m
        } else {
            1
        }
    }

    /// Piecewise (bi)linear interpolation; `None` outside the grid.
    pub fn interpolate(&self, x: &[T]) -> Option<T> {
        let mut base = [0usize; 2];
        let mut frac = [T::zero(); 2];
        for a in 0..self.dim {
            let s = (x[a] - self.lo[a]) / self.h[a];
            let slack = T::lit(1e-9);
            if s < -slack || s > T::from_count(self.m - 1) + slack {
                return None;
            }
            let s = s.max(T::zero()).min(T::from_count(self.m - 1));
            let i = s.floor().to_usize().unwrap_or(0).min(self.m - 2);
            base[a] = i;
            frac[a] = s - T::from_count(i);
        }
        let one = T::one();
        Some(match self.dim {
            1 => {
                let i = base[0];
                (one - frac[0]) * self.values[i] + frac[0] * self.values[i + 1]
            }
            _ => {
                let (i, j, m) = (base[0], base[1], self.m);
                let (s, t) = (frac[0], frac[1]);
                let v = |a: usize, b: usize| self.values[a * m + b];
                (one - s) * (one - t) * v(i, j)
                    + s * (one - t) * v(i + 1, j)
                    + (one - s) * t * v(i, j + 1)
                    + s * t * v(i + 1, j + 1)
            }
        })
    }

    /// Max |u − g| over all nodes.
    pub fn linf_against(&self, g: impl Fn(&[T]) -> T) -> T {
        (0..self.len())
            .map(|i| (self.values[i] - g(&self.node(i))).abs())
            .fold(T::zero(), T::max)
    }

    /// Max |u − v| against another field on the same grid.
    pub fn linf_diff(&self, other: &Self) -> Result<T> {
        self.check_same(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max))
    }

    /// Discrete H¹ seminorm of `u − v` from forward differences on every grid
    /// edge.
    pub fn h1_seminorm_diff(&self, other: &Self) -> Result<T> {
        self.check_same(other)?;
        let e: Vec<T> = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| a - b)
            .collect();
        Ok(self.h1_seminorm_of(&e))
    }

    fn h1_seminorm_of(&self, e: &[T]) -> T {
        let cell: T = self.h.iter().copied().fold(T::one(), |a, b| a * b);
        let m = self.m;
        let mut sum = T::zero();
        for idx in 0..e.len() {
            let ij = self.index(idx);
            for a in 0..self.dim {
                if ij[a] + 1 < m {
                    let d = (e[idx + self.stride(a)] - e[idx]) / self.h[a];
                    sum += d * d;
                }
            }
        }
        (sum * cell).sqrt()
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim || self.m != other.m || self.h != other.h {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                actual: other.len(),
            });
        }
        Ok(())
    }
}

/// Over-relaxation factor minimizing the SOR spectral radius for the model
/// Laplacian with `m` points per axis.
pub fn optimal_omega<T: Scalar>(m: usize) -> T {
    let s = (T::PI() / T::from_count(m - 1)).sin();
    T::lit(2.0) / (T::one() + s)
}

/// Projected SOR. `omega = None` uses [`optimal_omega`].
pub fn solve_obstacle_psor<T: Scalar>(
    problem: &ObstacleProblem<T>,
    m: usize,
    omega: Option<T>,
    tol: T,
    max_sweeps: usize,
) -> Result<FdGrid<T>> {
    let omega = omega.unwrap_or_else(|| optimal_omega(m));
    if !(omega > T::one() && omega < T::lit(2.0)) {
        return Err(Error::InvalidArgument(format!(
            "omega must lie in (1, 2), got {omega}"
        )));
    }
    if !(tol > T::zero()) {
        return Err(Error::InvalidArgument(format!(
            "tol must be positive, got {tol}"
        )));
    }
    let mut grid = FdGrid::zeros(problem, m)?;
    let phi = grid.sample(|x| problem.obstacle(x));
    let f = grid.sample(|x| problem.force(x));
    let inv = grid.inv_h2();
    let diag = inv.iter().fold(T::zero(), |a, &b| a + b + b);
    let interior: Vec<usize> = grid.interior_indices().collect();
    let (s0, s1) = (grid.stride(0), grid.stride(1));
    let u = &mut grid.values;
    for &i in &interior {
        u[i] = phi[i].max(T::zero());
    }
    let one = T::one();
    let mut change = T::infinity();
    for sweep in 1..=max_sweeps {
        change = T::zero();
        for &i in &interior {
            let mut nb = inv[0] * (u[i - s0] + u[i + s0]);
            if inv.len() == 2 {
                nb += inv[1] * (u[i - s1] + u[i + s1]);
            }
            let gs = (nb + f[i]) / diag;
            let next = phi[i].max((one - omega) * u[i] + omega * gs);
            change = change.max((next - u[i]).abs());
            u[i] = next;
        }
        if change <= tol {
            grid.iterations = sweep;
            return Ok(grid);
        }
    }
    Err(Error::NoConvergence {
        solver: "PSOR",
        iterations: max_sweeps,
        residual: change.as_f64(),
    })
}

/// `−Δ_h u − f − β_ε(φ − u)` at interior nodes.
fn penalized_residual<T: Scalar>(
    grid: &FdGrid<T>,
    u: &[T],
    f: &[T],
    phi: &[T],
    pen: &PenaltyFamily<T>,
) -> Vec<T> {
    let mut r = grid.neg_laplacian(u);
    for i in grid.interior_indices() {
        r[i] = r[i] - f[i] - pen.beta_eps(phi[i] - u[i]);
    }
    r
}

fn sup<T: Scalar>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |a, &b| a.max(b.abs()))
}

fn norm<T: Scalar>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |a, &b| a + b * b).sqrt()
}

/// Damped Newton for the penalized system, started from `u = 0`.
///
/// Each step solves `(−Δ_h + β_ε′(φ − u)) d = −R(u)` and halves the step until
/// the residual 2-norm decreases. Stops once `sup |R| ≤ tol`.
pub fn solve_penalized_newton<T: Scalar>(
    problem: &ObstacleProblem<T>,
    pen: &PenaltyFamily<T>,
    m: usize,
    tol: T,
    max_newton: usize,
) -> Result<FdGrid<T>> {
    if !(tol > T::zero()) {
        return Err(Error::InvalidArgument(format!(
            "tol must be positive, got {tol}"
        )));
    }
    let mut grid = FdGrid::zeros(problem, m)?;
    let phi = grid.sample(|x| problem.obstacle(x));
    let f = grid.sample(|x| problem.force(x));
    let mut u = grid.values.clone();
    let mut r = penalized_residual(&grid, &u, &f, &phi, pen);
    for iteration in 1..=max_newton {
        let shift: Vec<T> = (0..u.len())
            .map(|i| pen.beta_eps_prime(phi[i] - u[i]))
            .collect();
        let rhs: Vec<T> = r.iter().map(|&v| -v).collect();
        let d = solve_linear(&grid, &shift, &rhs)?;
        let r_norm = norm(&r);
        let mut alpha = T::one();
        let mut accepted = false;
        for _ in 0..=MAX_LINE_SEARCH {
            let trial: Vec<T> = u.iter().zip(&d).map(|(&a, &b)| a + alpha * b).collect();
            let r_trial = penalized_residual(&grid, &trial, &f, &phi, pen);
            if norm(&r_trial) < r_norm || sup(&r_trial) <= tol {
                u = trial;
                r = r_trial;
                accepted = true;
                break;
            }
            alpha /= T::lit(2.0);
        }
        if sup(&r) <= tol {
            grid.values = u;
            grid.iterations = iteration;
            return Ok(grid);
        }
        if !accepted {
            return Err(Error::NoConvergence {
                solver: "penalized Newton (stagnated)",
                iterations: iteration,
                residual: sup(&r).as_f64(),
            });
        }
    }
    Err(Error::NoConvergence {
        solver: "penalized Newton",
        iterations: max_newton,
        residual: sup(&r).as_f64(),
    })
}

/// `−Δ_h u = f`, zero boundary.
pub fn solve_poisson<T: Scalar>(problem: &ObstacleProblem<T>, m: usize) -> Result<FdGrid<T>> {
    let mut grid = FdGrid::zeros(problem, m)?;
    let f = grid.sample(|x| problem.force(x));
    let shift = vec![T::zero(); grid.len()];
    grid.values = solve_linear(&grid, &shift, &f)?;
    grid.iterations = 1;
    Ok(grid)
}

/// Solves `(−Δ_h + diag(shift)) x = b` on the interior; boundary entries of
/// `x` are zero.
fn solve_linear<T: Scalar>(grid: &FdGrid<T>, shift: &[T], b: &[T]) -> Result<Vec<T>> {
    match grid.dim {
        1 => Ok(thomas(grid, shift, b)),
        _ => pcg(grid, shift, b),
    }
}

fn thomas<T: Scalar>(grid: &FdGrid<T>, shift: &[T], b: &[T]) -> Vec<T> {
    let m = grid.m;
    let n = m - 2;
    let inv = grid.inv_h2()[0];
    let off = -inv;
    let mut c = vec![T::zero(); n];
    let mut d = vec![T::zero(); n];
    for k in 0..n {
        let i = k + 1;
        let diag = inv + inv + shift[i];
        if k == 0 {
            c[k] = off / diag;
            d[k] = b[i] / diag;
        } else {
            let denom = diag - off * c[k - 1];
            c[k] = off / denom;
            d[k] = (b[i] - off * d[k - 1]) / denom;
        }
    }
    let mut x = vec![T::zero(); m];
    for k in (0..n).rev() {
        x[k + 1] = if k + 1 == n {
            d[k]
        } else {
            d[k] - c[k] * x[k + 2]
        };
    }
    x
}

fn pcg<T: Scalar>(grid: &FdGrid<T>, shift: &[T], b: &[T]) -> Result<Vec<T>> {
    let len = grid.len();
    let interior: Vec<usize> = grid.interior_indices().collect();
    let inv = grid.inv_h2();
    let base = inv.iter().fold(T::zero(), |a, &v| a + v + v);
    let mut precond = vec![T::zero(); len];
    for &i in &interior {
        precond[i] = T::one() / (base + shift[i]);
    }
    let dot = |a: &[T], c: &[T]| interior.iter().fold(T::zero(), |s, &i| s + a[i] * c[i]);

    let mut x = vec![T::zero(); len];
    let mut r = vec![T::zero(); len];
    for &i in &interior {
        r[i] = b[i];
    }
    let b_norm = dot(&r, &r).sqrt();
    if b_norm == T::zero() {
        return Ok(x);
    }
    let target = b_norm * T::lit(1e-13).max(T::epsilon() * T::lit(16.0));
    let mut z: Vec<T> = (0..len).map(|i| precond[i] * r[i]).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![T::zero(); len];
    let max_iter = 20 * grid.m * grid.dim + 100;
    for _ in 0..max_iter {
        grid.apply(&p, Some(shift), &mut ap);
        let alpha = rz / dot(&p, &ap);
        for &i in &interior {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if dot(&r, &r).sqrt() <= target {
            return Ok(x);
        }
        for &i in &interior {
            z[i] = precond[i] * r[i];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for &i in &interior {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::NoConvergence {
        solver: "conjugate gradients",
        iterations: max_iter,
        residual: (dot(&r, &r).sqrt() / b_norm).as_f64(),
    })
}

/// C* = max over interior nodes of `(−Δ_h φ − f)⁺`.
pub fn c_star<T: Scalar>(problem: &ObstacleProblem<T>, m: usize) -> Result<T> {
    let grid = FdGrid::zeros(problem, m)?;
    let phi: Vec<T> = (0..grid.len())
        .map(|i| problem.obstacle(&grid.node(i)))
        .collect();
    let lap = grid.neg_laplacian(&phi);
    Ok(grid
        .interior_indices()
        .map(|i| (lap[i] - problem.force(&grid.node(i))).max(T::zero()))
        .fold(T::zero(), T::max))
}

/// Discrete complementarity diagnostics of a candidate obstacle solution.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Complementarity<T> {
    /// min over interior nodes of `u − φ`.
    pub min_gap: T,
    /// min over interior nodes of `−Δ_h u − f`.
    pub min_residual: T,
    /// max over interior nodes of `|min(−Δ_h u − f, u − φ)|`.
    pub max_violation: T,
}

pub fn complementarity<T: Scalar>(
    problem: &ObstacleProblem<T>,
    sol: &FdGrid<T>,
) -> Complementarity<T> {
    let lap = sol.neg_laplacian(&sol.values);
    let mut out = Complementarity {
        min_gap: T::infinity(),
        min_residual: T::infinity(),
        max_violation: T::zero(),
    };
    for i in sol.interior_indices() {
        let x = sol.node(i);
        let gap = sol.values[i] - problem.obstacle(&x);
        let res = lap[i] - problem.force(&x);
        out.min_gap = out.min_gap.min(gap);
        out.min_residual = out.min_residual.min(res);
        out.max_violation = out.max_violation.max(gap.min(res).abs());
    }
    out
}

/// Largest distance from the origin of an interior node with
/// `u − φ ≤ threshold`; `None` if no node is in contact.
pub fn contact_radius<T: Scalar>(
    problem: &ObstacleProblem<T>,
    sol: &FdGrid<T>,
    threshold: T,
) -> Option<T> {
    sol.interior_indices()
        .filter_map(|i| {
            let x = sol.node(i);
            (sol.values[i] - problem.obstacle(&x) <= threshold)
                .then(|| x.iter().fold(T::zero(), |a, &v| a + v * v).sqrt())
        })
        .reduce(T::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{Domain, Polynomial};

    fn constant_force(f: f64, phi: f64) -> ObstacleProblem<f64> {
        ObstacleProblem::custom(
            "const",
            Domain::interval(-2.0, 2.0).unwrap(),
            Polynomial::constant(1, f),
            Polynomial::constant(1, phi),
        )
        .unwrap()
    }

    #[test]
    fn poisson_closed_forms() {
        let p = constant_force(1.0, -10.0);
        let u = solve_poisson(&p, 4001).unwrap();
        assert!(u.linf_against(|x| (4.0 - x[0] * x[0]) / 2.0) <= 1e-8);
        let p = constant_force(-2.0, -10.0);
        let u = solve_poisson(&p, 4001).unwrap();
        assert!(u.linf_against(|x| x[0] * x[0] - 4.0) <= 1e-8);
        let p = constant_force(0.0, -10.0);
        assert!(solve_poisson(&p, 101)
            .unwrap()
            .values
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn poisson_2d_matches_quadratic() {
        // −Δ(x(2−x)... ) use u = (4 − x²)(4 − y²) with f = 2(4 − y²) + 2(4 − x²).
        let d = Domain::rectangle((-2.0, 2.0), (-2.0, 2.0)).unwrap();
        let f = Polynomial::parse(2, "16 0 0, -2 2 0, -2 0 2").unwrap();
        let p = ObstacleProblem::custom("q", d, f, Polynomial::constant(2, -1.0)).unwrap();
        let u = solve_poisson(&p, 33).unwrap();
        // The 5-point stencil is exact on this biquadratic.
        let err = u.linf_against(|x| (4.0 - x[0] * x[0]) * (4.0 - x[1] * x[1]));
        assert!(err <= 1e-9, "{err}");
    }

    #[test]
    fn psor_inactive_obstacle_is_poisson() {
        let p = constant_force(1.0, -10.0);
        let u = solve_obstacle_psor(&p, 4001, None, 1e-13, 1_000_000).unwrap();
        assert!(u.linf_against(|x| (4.0 - x[0] * x[0]) / 2.0) <= 1e-6);
    }

    #[test]
    fn psor_example_1d_accuracy_and_complementarity() {
        let p = ObstacleProblem::<f64>::example_1d();
        let tol = 1e-12;
        let u = solve_obstacle_psor(&p, 4001, None, tol, 1_000_000).unwrap();
        let err = u.linf_against(|x| p.exact(x).unwrap());
        assert!(err <= 5e-4, "{err}");
        let c = complementarity(&p, &u);
        let h2 = u.h() * u.h();
        assert!(c.min_gap >= 0.0);
        assert!(c.min_residual >= -tol / h2);
        assert!(c.max_violation <= tol / h2 + 1e-8);
    }

    #[test]
    fn psor_error_shrinks_with_h() {
        let p = ObstacleProblem::<f64>::example_1d();
        let ms = [51usize, 101, 201, 401, 801, 1601, 3201];
        let errs: Vec<f64> = ms
            .iter()
            .map(|&m| {
                solve_obstacle_psor(&p, m, None, 1e-13, 1_000_000)
                    .unwrap()
                    .linf_against(|x| p.exact(x).unwrap())
            })
            .collect();
        assert!(errs[0] / errs[1] >= 3.0, "{errs:?}");
        // Least-squares slope of log e against log h.
        let xs: Vec<f64> = ms.iter().map(|&m| (4.0 / (m - 1) as f64).ln()).collect();
        let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
        let n = xs.len() as f64;
        let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        assert!(sxy / sxx >= 1.8, "order {} from {errs:?}", sxy / sxx);
    }

    #[test]
    fn psor_rejects_bad_omega() {
        let p = ObstacleProblem::<f64>::example_1d();
        assert!(solve_obstacle_psor(&p, 11, Some(2.0), 1e-10, 10).is_err());
        assert!(solve_obstacle_psor(&p, 11, Some(1.0), 1e-10, 10).is_err());
        assert!(matches!(
            solve_obstacle_psor(&p, 401, Some(1.5), 1e-14, 3),
            Err(Error::NoConvergence { .. })
        ));
    }

    #[test]
    fn penalty_off_newton_equals_poisson_bitwise() {
        let p = ObstacleProblem::<f64>::example_2d();
        let a = solve_penalized_newton(&p, &PenaltyFamily::off(), 33, 1e-8, 5).unwrap();
        let b = solve_poisson(&p, 33).unwrap();
        assert_eq!(a.values, b.values);
        let p = ObstacleProblem::<f64>::example_1d();
        let a = solve_penalized_newton(&p, &PenaltyFamily::off(), 201, 1e-8, 5).unwrap();
        assert_eq!(a.values, solve_poisson(&p, 201).unwrap().values);
    }

    #[test]
    fn sandwich_at_eps_1e_2() {
        let p = ObstacleProblem::<f64>::example_1d();
        let m = 4001;
        let eps = 1e-2;
        let u = solve_obstacle_psor(&p, m, None, 1e-12, 1_000_000).unwrap();
        let pen = PenaltyFamily::new(eps).unwrap();
        let ue = solve_penalized_newton(&p, &pen, m, 1e-8, 100).unwrap();
        let cs = c_star(&p, m).unwrap();
        assert!((cs - 2.0).abs() < 1e-6);
        let tol = 10.0 * u.h() * u.h();
        for (a, b) in u.values.iter().zip(&ue.values) {
            assert!(a - b >= -tol);
            assert!(a - b <= (cs + 1.0) * eps + tol);
        }
    }

    #[test]
    fn assembled_operator_is_diagonally_dominant() {
        let p = ObstacleProblem::<f64>::example_2d();
        let g = FdGrid::zeros(&p, 9).unwrap();
        let pen = PenaltyFamily::new(1e-3).unwrap();
        // Row sums of −Δ_h + β′ I applied to the all-ones interior vector.
        let ones: Vec<f64> = (0..g.len())
            .map(|i| if g.is_boundary(i) { 0.0 } else { 1.0 })
            .collect();
        let shift: Vec<f64> = (0..g.len())
            .map(|i| pen.beta_eps_prime(0.5 - i as f64 * 1e-3))
            .collect();
        let mut out = vec![0.0; g.len()];
        g.apply(&ones, Some(&shift), &mut out);
        assert!(g.interior_indices().all(|i| out[i] >= 0.0));
    }

    #[test]
    fn interpolation_and_h1() {
        let p = ObstacleProblem::<f64>::example_2d();
        let mut g = FdGrid::zeros(&p, 5).unwrap();
        for i in 0..g.len() {
            let x = g.node(i);
            g.values[i] = 2.0 * x[0] - x[1];
        }
        let v = g.interpolate(&[0.3, -1.1]).unwrap();
        assert!((v - (0.6 + 1.1)).abs() < 1e-12);
        assert!(g.interpolate(&[2.5, 0.0]).is_none());
        let zero = FdGrid::zeros(&p, 5).unwrap();
        // |∇e|² = 5 on every edge-direction sum over the 4×5 + 5×4 edges.
        let h1 = g.h1_seminorm_diff(&zero).unwrap();
        let expected = ((4.0 * 20.0 + 1.0 * 20.0) * 1.0f64).sqrt();
        assert!((h1 - expected).abs() < 1e-12);
    }

    #[test]
    fn contact_radius_example_2d_coarse() {
        let p = ObstacleProblem::<f64>::example_2d();
        let u = solve_obstacle_psor(&p, 65, None, 1e-12, 100_000).unwrap();
        let r = contact_radius(&p, &u, 1e-9).unwrap();
        assert!((r - p.rstar().unwrap()).abs() < 0.1, "{r}");
    }
}
