//! Exponential eigenfunctions `phi_lambda` of the perturbed Laplacian.
//!
//! `phi_lambda = phi(lambda .) + psi_lambda` where the correction solves
//! `(-Delta_g + lambda^2) psi = f_lambda`, `f_lambda = (Delta_g - Delta) phi(lambda .)`.
//! Radially this is a two-point boundary value problem on `[0, R_max]`,
//! discretized by finite volumes on the self-adjoint form
//! `(r^{n-1} alpha psi')'`, with symmetry at the origin and an exact
//! far-field closure `psi' + kappa psi = 0` taken from the decaying flat
//! solution `r^{-nu} K_nu(lambda r)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::RadialGrid;
use crate::metric::MetricField;
use crate::scalar::{bracket, from_usize, lit, Scalar};
use crate::special::{bessel_k_scaled, phi_flat_prime_scaled, phi_flat_scaled, radial_order};
use crate::tridiag::SymTridiagonal;

/// Solution of one correction problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correction<T> {
    pub lambda: T,
    pub psi: Vec<T>,
    /// Far-field log-derivative: `psi' = -kappa psi` at `R_max`.
    pub kappa: T,
    /// `max |A psi - b| / max |b|` of the assembled system.
    pub solver_residual: T,
}

/// Decay rate `kappa = lambda K_{nu+1}(lambda R) / K_nu(lambda R)` of the
/// decaying flat solution at radius `r_max`.
pub fn far_field_kappa<T: Scalar>(n: usize, lambda: T, r_max: T) -> T {
    let nu = radial_order::<T>(n);
    let z = lambda * r_max;
    lambda * bessel_k_scaled(nu + T::one(), z) / bessel_k_scaled(nu, z)
}

/// Source `f_lambda(r) = (alpha - 1) lambda^2 phi(lambda r) + alpha' lambda phi'(lambda r)`.
pub fn source<T: Scalar>(metric: &MetricField<T>, lambda: T, r: T) -> T {
    if metric.is_flat() {
        return T::zero();
    }
    let n = metric.dimension();
    let s = lambda * r;
    let growth = s.exp();
    let phi = phi_flat_scaled(n, s) * growth;
    let dphi = phi_flat_prime_scaled(n, s) * growth;
    (metric.alpha(r) - T::one()) * lambda * lambda * phi + metric.alpha_prime(r) * lambda * dphi
}

/// Finite-volume pieces shared by the solver and the residual audit.
struct Stencil<T> {
    /// `r^{n-1} alpha` at the faces `r_{i+1/2}`, `i = 0..N-1`.
    face: Vec<T>,
    /// Control volumes `\int r^{n-1} dr` (without the sphere area).
    volume: Vec<T>,
    /// Boundary flux coefficient `R^{n-1} alpha(R) kappa`.
    boundary: T,
}

impl<T: Scalar> Stencil<T> {
    fn new(metric: &MetricField<T>, grid: &RadialGrid<T>, kappa: T) -> Self {
        let n = metric.dimension();
        let dr = grid.dr();
        let len = grid.len();
        let half = lit::<T>(0.5);
        let nf = from_usize::<T>(n);
        let pow_n = |r: T| r.powi(n as i32);
        let face: Vec<T> = (0..len - 1)
            .map(|i| {
                let r = (from_usize::<T>(i) + half) * dr;
                r.powi(n as i32 - 1) * metric.alpha(r)
            })
            .collect();
        let volume: Vec<T> = (0..len)
            .map(|i| {
                let lo = if i == 0 { T::zero() } else { (from_usize::<T>(i) - half) * dr };
                let hi = if i == len - 1 { grid.r(i) } else { (from_usize::<T>(i) + half) * dr };
                (pow_n(hi) - pow_n(lo)) / nf
            })
            .collect();
        let r_max = grid.r_max();
        let boundary = r_max.powi(n as i32 - 1) * metric.alpha(r_max) * kappa;
        Self { face, volume, boundary }
    }

    /// Symmetric matrix of `-(r^{n-1} alpha u')' + lambda^2 r^{n-1} u`.
    fn matrix(&self, lambda: T, dr: T) -> SymTridiagonal<T> {
        let len = self.volume.len();
        let lam2 = lambda * lambda;
        let mut diag = vec![T::zero(); len];
        for (i, d) in diag.iter_mut().enumerate() {
            let mut flux = T::zero();
            if i > 0 {
                flux = flux + self.face[i - 1];
            }
            if i + 1 < len {
                flux = flux + self.face[i];
            }
            *d = flux / dr + lam2 * self.volume[i];
        }
        diag[len - 1] = diag[len - 1] + self.boundary;
        let off = self.face.iter().map(|&w| -w / dr).collect();
        SymTridiagonal::new(diag, off)
    }

    /// Pointwise discrete `Delta_g u` (flux difference over control volume).
    fn laplacian(&self, u: &[T], dr: T) -> Vec<T> {
        let len = u.len();
        (0..len)
            .map(|i| {
                let mut flux = T::zero();
                if i + 1 < len {
                    flux = flux + self.face[i] * (u[i + 1] - u[i]) / dr;
                } else {
                    flux = flux - self.boundary * u[i];
                }
                if i > 0 {
                    flux = flux - self.face[i - 1] * (u[i] - u[i - 1]) / dr;
                }
                flux / self.volume[i]
            })
            .collect()
    }
}

/// Solves the radial correction problem for one `lambda`.
pub fn solve_correction<T: Scalar>(metric: &MetricField<T>, lambda: T, grid: &RadialGrid<T>) -> Result<Correction<T>> {
    let beta_half = metric.beta() / lit(2.0);
    if !(lambda > T::zero()) || lambda > beta_half * lit(1.0 + 1e-12) {
        return Err(Error::InvalidParameter(format!(
            "lambda must lie in (0, beta/2] = (0, {beta_half}], got {lambda}"
        )));
    }
    let n = metric.dimension();
    let kappa = far_field_kappa(n, lambda, grid.r_max());
    let stencil = Stencil::new(metric, grid, kappa);
    let matrix = stencil.matrix(lambda, grid.dr());
    let rhs: Vec<T> = (0..grid.len())
        .map(|i| stencil.volume[i] * source(metric, lambda, grid.r(i)))
        .collect();
    let psi = matrix.solve(&rhs)?;
    let solver_residual = matrix.relative_residual(&psi, &rhs);
    if !solver_residual.is_finite() {
        return Err(Error::SingularSystem { row: 0 });
    }
    Ok(Correction {
        lambda,
        psi,
        kappa,
        solver_residual,
    })
}

/// Relative change of `psi` on `[0, R_max / 2]` when the domain is doubled
/// at the same spacing.
pub fn truncation_sensitivity<T: Scalar>(metric: &MetricField<T>, lambda: T, grid: &RadialGrid<T>) -> Result<T> {
    let base = solve_correction(metric, lambda, grid)?;
    let wide = RadialGrid::with_cells(grid.dr(), 2 * (grid.len() - 1));
    let doubled = solve_correction(metric, lambda, &wide)?;
    let half = (grid.len() - 1) / 2;
    let scale = base.psi.iter().map(|v| v.abs()).fold(T::zero(), T::max);
    if scale == T::zero() {
        return Ok(T::zero());
    }
    let diff = base.psi[..=half]
        .iter()
        .zip(&doubled.psi[..=half])
        .map(|(a, b)| (*a - *b).abs())
        .fold(T::zero(), T::max);
    Ok(diff / scale)
}

/// Table build options.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableOptions<T> {
    /// If set, every `lambda` must pass the domain-doubling test at this
    /// relative tolerance.
    pub truncation_tolerance: Option<T>,
}

impl<T> Default for TableOptions<T> {
    fn default() -> Self {
        Self {
            truncation_tolerance: None,
        }
    }
}

/// `phi_lambda` and `psi_lambda` sampled on a `lambda` grid times a radial grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenfunctionTable<T> {
    metric: MetricField<T>,
    lambdas: Vec<T>,
    grid: RadialGrid<T>,
    psi: Vec<Vec<T>>,
    phi_lambda: Vec<Vec<T>>,
    kappa: Vec<T>,
    d0: T,
    d1: T,
    theta_fit: Option<T>,
    max_solver_residual: T,
}

/// Default domain radius for the correction solves.
pub fn default_r_max<T: Scalar>(metric: &MetricField<T>) -> T {
    lit::<T>(40.0).max(lit::<T>(40.0) / metric.beta())
}

/// Solves every `lambda` in `lambdas` (in parallel) and measures the table's
/// two-sided bound constants and correction decay exponent.
pub fn build_table<T: Scalar>(
    metric: &MetricField<T>,
    lambdas: &[T],
    grid: &RadialGrid<T>,
    options: TableOptions<T>,
) -> Result<EigenfunctionTable<T>> {
    if lambdas.is_empty() {
        return Err(Error::InvalidParameter("empty lambda grid".into()));
    }
    if lambdas.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidParameter("lambda grid must be strictly increasing".into()));
    }
    let n = metric.dimension();
    let solved: Vec<Result<Correction<T>>> = lambdas
        .par_iter()
        .map(|&lambda| {
            let c = solve_correction(metric, lambda, grid)?;
            if let Some(tol) = options.truncation_tolerance {
                let sens = truncation_sensitivity(metric, lambda, grid)?;
                if sens > tol {
                    return Err(Error::Domain(format!(
                        "R_max = {} too small: doubling changes psi by {sens} at lambda = {lambda}",
                        grid.r_max()
                    )));
                }
            }
            Ok(c)
        })
        .collect();

    let mut psi = Vec::with_capacity(lambdas.len());
    let mut phi_lambda = Vec::with_capacity(lambdas.len());
    let mut kappa = Vec::with_capacity(lambdas.len());
    let mut d0 = T::infinity();
    let mut d1 = T::zero();
    let mut max_solver_residual = T::zero();
    let exponent = (from_usize::<T>(n) - T::one()) / lit(2.0);
    for result in solved {
        let c = result?;
        let lambda = c.lambda;
        let mut row = Vec::with_capacity(grid.len());
        for (i, &p) in c.psi.iter().enumerate() {
            let r = grid.r(i);
            let s = lambda * r;
            let value = phi_flat_scaled(n, s) * s.exp() + p;
            if !(value > T::zero()) {
                return Err(Error::PositivityViolation {
                    lambda: lambda.to_f64().unwrap_or(f64::NAN),
                    r: r.to_f64().unwrap_or(f64::NAN),
                    value: value.to_f64().unwrap_or(f64::NAN),
                });
            }
            let ratio = value * (-s).exp() * bracket(s).powf(exponent);
            d0 = d0.min(ratio);
            d1 = d1.max(ratio);
            row.push(value);
        }
        max_solver_residual = max_solver_residual.max(c.solver_residual);
        kappa.push(c.kappa);
        phi_lambda.push(row);
        psi.push(c.psi);
    }
    let theta_fit = fit_decay_exponent(lambdas, &psi);
    Ok(EigenfunctionTable {
        metric: *metric,
        lambdas: lambdas.to_vec(),
        grid: *grid,
        psi,
        phi_lambda,
        kappa,
        d0,
        d1,
        theta_fit,
        max_solver_residual,
    })
}

/// Least-squares slope of `log sup|psi_lambda|` against `log lambda`.
/// `None` when fewer than two corrections are nonzero.
pub fn fit_decay_exponent<T: Scalar>(lambdas: &[T], psi: &[Vec<T>]) -> Option<T> {
    let points: Vec<(T, T)> = lambdas
        .iter()
        .zip(psi)
        .filter_map(|(&l, row)| {
            let sup = sup_norm(row);
            (sup > T::zero()).then(|| (l.ln(), sup.ln()))
        })
        .collect();
    if points.len() < 2 {
        return None;
    }
    let m = from_usize::<T>(points.len());
    let mean_x = points.iter().map(|p| p.0).sum::<T>() / m;
    let mean_y = points.iter().map(|p| p.1).sum::<T>() / m;
    let sxy: T = points.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let sxx: T = points.iter().map(|p| (p.0 - mean_x) * (p.0 - mean_x)).sum();
    (sxx > T::zero()).then(|| sxy / sxx)
}

pub(crate) fn sup_norm<T: Scalar>(values: &[T]) -> T {
    values.iter().map(|v| v.abs()).fold(T::zero(), T::max)
}

impl<T: Scalar> EigenfunctionTable<T> {
    pub fn metric(&self) -> &MetricField<T> {
        &self.metric
    }

    pub fn lambdas(&self) -> &[T] {
        &self.lambdas
    }

    pub fn grid(&self) -> &RadialGrid<T> {
        &self.grid
    }

    /// Correction samples for the `k`-th `lambda`.
    pub fn psi(&self, k: usize) -> &[T] {
        &self.psi[k]
    }

    /// `phi_lambda` samples for the `k`-th `lambda`.
    pub fn phi_lambda(&self, k: usize) -> &[T] {
        &self.phi_lambda[k]
    }

    /// Lower constant of the two-sided bound, measured over the table.
    pub fn d0(&self) -> T {
        self.d0
    }

    /// Upper constant of the two-sided bound, measured over the table.
    pub fn d1(&self) -> T {
        self.d1
    }

    pub fn theta_fit(&self) -> Option<T> {
        self.theta_fit
    }

    pub fn max_solver_residual(&self) -> T {
        self.max_solver_residual
    }

    pub fn psi_sup_norms(&self) -> Vec<T> {
        self.psi.iter().map(|row| sup_norm(row)).collect()
    }

    /// `sup|psi_{k+1} - psi_k| / (lambda_{k+1} - lambda_k)` for adjacent pairs.
    pub fn continuity_moduli(&self) -> Vec<T> {
        self.lambdas
            .windows(2)
            .zip(self.psi.windows(2))
            .map(|(l, p)| {
                let diff = p[0].iter().zip(&p[1]).map(|(a, b)| (*a - *b).abs()).fold(T::zero(), T::max);
                diff / (l[1] - l[0])
            })
            .collect()
    }

    /// `psi_lambda(r)` for the `k`-th `lambda`: interpolated on the grid and
    /// continued by the decaying flat solution beyond `R_max`.
    pub fn psi_at(&self, k: usize, r: T) -> T {
        let r_max = self.grid.r_max();
        if r <= r_max {
            return self.grid.interpolate(&self.psi[k], r);
        }
        let boundary = self.psi[k][self.grid.len() - 1];
        if boundary == T::zero() {
            return T::zero();
        }
        let lambda = self.lambdas[k];
        let nu = radial_order::<T>(self.metric.dimension());
        let decay = (r_max / r).powf(nu) * bessel_k_scaled(nu, lambda * r) / bessel_k_scaled(nu, lambda * r_max)
            * (-lambda * (r - r_max)).exp();
        boundary * decay
    }

    /// `e^{-lambda r} phi_lambda(r)` for the `k`-th `lambda`, any `r >= 0`.
    pub fn phi_lambda_scaled(&self, k: usize, r: T) -> T {
        let lambda = self.lambdas[k];
        let s = lambda * r;
        let flat = phi_flat_scaled(self.metric.dimension(), s);
        if self.metric.is_flat() {
            return flat;
        }
        flat + (-s).exp() * self.psi_at(k, r)
    }

    /// Discrete eigen-equation residual `max |Delta_g^h phi_lambda - lambda^2 phi_lambda|`
    /// over interior nodes with `r >= r_from`.
    pub fn eigen_residual(&self, k: usize, r_from: T) -> T {
        let stencil = Stencil::new(&self.metric, &self.grid, self.kappa[k]);
        let lambda = self.lambdas[k];
        let phi = &self.phi_lambda[k];
        let lap = stencil.laplacian(phi, self.grid.dr());
        (1..self.grid.len() - 1)
            .filter(|&i| self.grid.r(i) >= r_from)
            .map(|i| (lap[i] - lambda * lambda * phi[i]).abs())
            .fold(T::zero(), T::max)
    }
}
