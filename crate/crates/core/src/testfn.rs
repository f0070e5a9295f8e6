//! Test functions built as `lambda`-moments of the eigenfunctions:
//!
//! ```text
//! xi_q(x, t)     = \int_0^{lambda_0} e^{-lambda (t+R)} cosh(lambda t) phi_lambda(x) lambda^q d lambda
//! eta_q(x, t, s) = \int_0^{lambda_0} e^{-lambda (t+R)} sinh(lambda (t-s)) / (lambda (t-s)) phi_lambda(x) lambda^q d lambda
//! ```
//!
//! Both integrands are rewritten so that every factor is O(1):
//! `e^{-lambda (t+R)} cosh(lambda t) = e^{-lambda R} (1 + e^{-2 lambda t}) / 2` and
//! `e^{-lambda (t+R)} sinh(z) / z = e^{-lambda (s+R)} (1 - e^{-2z}) / (2z)` with
//! `z = lambda (t - s)`, while `phi_lambda` is carried as `e^{-lambda |x|} phi_lambda`.
//! The eigenfunction table is built on the quadrature nodes themselves, so no
//! interpolation in `lambda` is ever needed.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eigenfunction::{build_table, default_r_max, EigenfunctionTable, TableOptions};
use crate::error::{Error, Result};
use crate::grid::RadialGrid;
use crate::metric::MetricField;
use crate::quadrature::{radial_weights, LambdaGridSpec, LambdaQuadrature};
use crate::scalar::{bracket, from_usize, lit, Scalar};
use crate::special::sphere_area;

/// Construction parameters for [`TestFunctionEvaluator`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestFunctionSpec<T> {
    /// Moment exponent, `q > -1`.
    pub q: T,
    /// Support radius `R` of the solution cone `|x| <= t + R`.
    pub r_support: T,
    /// Upper quadrature limit; defaults to `beta / 4`.
    pub lambda_0: Option<T>,
    pub lambda_grid: LambdaGridSpec,
    /// Radial spacing of the eigenfunction table.
    pub table_dr: T,
    /// Domain radius of the eigenfunction table; defaults to `max(40, 40/beta)`.
    pub table_r_max: Option<T>,
}

impl<T: Scalar> TestFunctionSpec<T> {
    pub fn new(q: T, r_support: T) -> Self {
        Self {
            q,
            r_support,
            lambda_0: None,
            lambda_grid: LambdaGridSpec::default(),
            table_dr: lit(0.005),
            table_r_max: None,
        }
    }
}

const MAX_SHRINKS: usize = 8;

/// `(1 - e^{-2z}) / (2z)`, i.e. `e^{-z} sinh(z) / z`.
#[inline]
pub fn sinhc_scaled<T: Scalar>(z: T) -> T {
    if z < lit(1e-4) {
        T::one() - z + lit::<T>(2.0 / 3.0) * z * z
    } else {
        -(lit::<T>(-2.0) * z).exp_m1() / (lit::<T>(2.0) * z)
    }
}

/// Evaluates `xi_q`, `eta_q` and their pairings with radial functions.
#[derive(Debug, Clone)]
pub struct TestFunctionEvaluator<T> {
    table: EigenfunctionTable<T>,
    quad: LambdaQuadrature<T>,
    /// `w_k lambda_k^q`.
    weights_q: Vec<T>,
    /// `|S^{n-1}| \int_0^{lambda_min} lambda^q`, the origin piece with
    /// `phi_0 = |S^{n-1}|` folded in.
    origin: T,
    q: T,
    r_support: T,
    shrinks: usize,
}

impl<T: Scalar> TestFunctionEvaluator<T> {
    /// Builds the quadrature and eigenfunction table. If the table violates
    /// positivity, `lambda_0` is halved and the build retried.
    pub fn new(metric: &MetricField<T>, spec: TestFunctionSpec<T>) -> Result<Self> {
        if !(spec.q > -T::one()) {
            return Err(Error::InvalidParameter(format!("q must exceed -1, got {}", spec.q)));
        }
        if !(spec.r_support > T::zero()) {
            return Err(Error::InvalidParameter(format!("R must be positive, got {}", spec.r_support)));
        }
        let mut lambda_0 = spec.lambda_0.unwrap_or_else(|| metric.default_lambda_0());
        let beta_half = metric.beta() / lit(2.0);
        if !(lambda_0 > T::zero() && lambda_0 <= beta_half) {
            return Err(Error::InvalidParameter(format!(
                "lambda_0 must lie in (0, beta/2] = (0, {beta_half}], got {lambda_0}"
            )));
        }
        let r_max = spec.table_r_max.unwrap_or_else(|| default_r_max(metric));
        let grid = RadialGrid::new(r_max, spec.table_dr)?;
        let mut shrinks = 0;
        loop {
            let quad = LambdaQuadrature::new(lambda_0, spec.lambda_grid)?;
            match build_table(metric, quad.nodes(), &grid, TableOptions::default()) {
                Ok(table) => {
                    let weights_q = quad
                        .nodes()
                        .iter()
                        .zip(quad.weights())
                        .map(|(&l, &w)| w * l.powf(spec.q))
                        .collect();
                    let origin = quad.origin_weight(spec.q) * sphere_area::<T>(metric.dimension());
                    return Ok(Self {
                        table,
                        quad,
                        weights_q,
                        origin,
                        q: spec.q,
                        r_support: spec.r_support,
                        shrinks,
                    });
                }
                Err(Error::PositivityViolation { .. }) if shrinks < MAX_SHRINKS => {
                    lambda_0 = lambda_0 / lit(2.0);
                    shrinks += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }

    pub fn q(&self) -> T {
        self.q
    }

    pub fn r_support(&self) -> T {
        self.r_support
    }

    pub fn lambda_0(&self) -> T {
        self.quad.lambda_0()
    }

    /// How many times `lambda_0` was halved to restore positivity.
    pub fn lambda_0_shrinks(&self) -> usize {
        self.shrinks
    }

    pub fn dimension(&self) -> usize {
        self.table.metric().dimension()
    }

    pub fn table(&self) -> &EigenfunctionTable<T> {
        &self.table
    }

    pub fn quadrature(&self) -> &LambdaQuadrature<T> {
        &self.quad
    }

    /// `xi_q(x, t)` for `|x| = x`, `t >= 0`.
    pub fn xi(&self, x: T, t: T) -> T {
        let two = lit::<T>(2.0);
        let mut acc = self.origin;
        for (k, (&lambda, &w)) in self.quad.nodes().iter().zip(&self.weights_q).enumerate() {
            let kernel = (T::one() + (-two * lambda * t).exp()) / two;
            acc = acc + w * kernel * (-lambda * (self.r_support - x)).exp() * self.table.phi_lambda_scaled(k, x);
        }
        acc
    }

    /// `eta_q(x, t, s)` for `0 <= s <= t`.
    pub fn eta(&self, x: T, t: T, s: T) -> Result<T> {
        if !(s >= T::zero() && s <= t) {
            return Err(Error::Domain(format!("eta needs 0 <= s <= t, got s = {s}, t = {t}")));
        }
        let mut acc = self.origin;
        for (k, (&lambda, &w)) in self.quad.nodes().iter().zip(&self.weights_q).enumerate() {
            let kernel = sinhc_scaled(lambda * (t - s));
            acc = acc + w * kernel * (-lambda * (s + self.r_support - x)).exp() * self.table.phi_lambda_scaled(k, x);
        }
        Ok(acc)
    }

    /// Samples `e^{-lambda r} phi_lambda(r)` on `grid` for every node, with
    /// the radial quadrature weights, for repeated pairings.
    pub fn basis(&self, grid: &RadialGrid<T>) -> RadialBasis<T> {
        let len = grid.len();
        let phi: Vec<Vec<T>> = (0..self.quad.nodes().len())
            .into_par_iter()
            .map(|k| (0..len).map(|i| self.table.phi_lambda_scaled(k, grid.r(i))).collect())
            .collect();
        RadialBasis {
            grid: *grid,
            weights: radial_weights(self.dimension(), grid.dr(), len),
            phi,
        }
    }

    /// `m_k(s) = \int f(x) e^{-lambda_k (s+R)} phi_{lambda_k}(x) dx` for a
    /// radial `f` sampled on the basis grid.
    pub fn moments(&self, basis: &RadialBasis<T>, f: &[T], s: T) -> LambdaMoments<T> {
        assert_eq!(f.len(), basis.grid.len());
        let support = f.iter().rposition(|v| *v != T::zero()).map_or(0, |i| i + 1);
        let weighted: Vec<(usize, T, T)> = (0..support)
            .filter(|&i| f[i] != T::zero())
            .map(|i| (i, basis.grid.r(i), basis.weights[i] * f[i]))
            .collect();
        let values = self
            .quad
            .nodes()
            .iter()
            .enumerate()
            .map(|(k, &lambda)| {
                let shift = s + self.r_support;
                let row = &basis.phi[k];
                weighted
                    .iter()
                    .map(|&(i, r, wf)| wf * (-lambda * (shift - r)).exp() * row[i])
                    .sum()
            })
            .collect();
        let origin = weighted.iter().map(|p| p.2).sum::<T>();
        LambdaMoments { s, values, origin }
    }

    /// `\int f(x) eta_q(x, t, s) dx` from the moments of `f` at time `s`.
    pub fn pair_eta(&self, m: &LambdaMoments<T>, t: T) -> T {
        let mut acc = self.origin * m.origin;
        for ((&lambda, &w), &v) in self.quad.nodes().iter().zip(&self.weights_q).zip(&m.values) {
            acc = acc + w * sinhc_scaled(lambda * (t - m.s)) * v;
        }
        acc
    }

    /// `(t - s) \int f(x) eta_q(x, t, s) dx`, finite as `t - s -> 0` and
    /// computed without dividing by `t - s`.
    pub fn pair_eta_times_gap(&self, m: &LambdaMoments<T>, t: T) -> T {
        let gap = t - m.s;
        let two = lit::<T>(2.0);
        let mut acc = self.origin * m.origin * gap;
        for ((&lambda, &w), &v) in self.quad.nodes().iter().zip(&self.weights_q).zip(&m.values) {
            let kernel = -(-two * lambda * gap).exp_m1() / (two * lambda);
            acc = acc + w * kernel * v;
        }
        acc
    }

    /// `\int f(x) xi_q(x, t) dx` from the moments of `f` taken at `s = 0`.
    pub fn pair_xi(&self, m0: &LambdaMoments<T>, t: T) -> T {
        debug_assert!(m0.s == T::zero());
        let two = lit::<T>(2.0);
        let mut acc = self.origin * m0.origin;
        for ((&lambda, &w), &v) in self.quad.nodes().iter().zip(&self.weights_q).zip(&m0.values) {
            acc = acc + w * (T::one() + (-two * lambda * t).exp()) / two * v;
        }
        acc
    }
}

/// Radial quadrature data and sampled eigenfunctions on one grid.
#[derive(Debug, Clone)]
pub struct RadialBasis<T> {
    grid: RadialGrid<T>,
    weights: Vec<T>,
    phi: Vec<Vec<T>>,
}

impl<T: Scalar> RadialBasis<T> {
    pub fn grid(&self) -> &RadialGrid<T> {
        &self.grid
    }

    /// `\int f(|x|) dx` by the trapezoid rule.
    pub fn integrate(&self, f: &[T]) -> T {
        self.weights.iter().zip(f).map(|(w, v)| *w * *v).sum()
    }
}

/// `lambda`-moments of a radial function at time `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaMoments<T> {
    pub s: T,
    pub values: Vec<T>,
    /// `\int f dx`, the `lambda -> 0` moment up to `phi_0 = |S^{n-1}|`.
    pub origin: T,
}

/// Sampling layout for the Lemma 3.1 constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma31Grid<T> {
    pub t_values: Vec<T>,
    /// `|x|` as fractions of the admissible radius of each bound.
    pub x_fractions: Vec<T>,
    /// `s` as fractions of `t`.
    pub s_fractions: Vec<T>,
}

impl<T: Scalar> Default for Lemma31Grid<T> {
    fn default() -> Self {
        let mut t_values = vec![T::zero()];
        // Four points per decade on [0.1, 1000].
        for k in 0..=16 {
            t_values.push(lit::<T>(10.0).powf(lit::<T>(-1.0) + from_usize::<T>(k) / lit(4.0)));
        }
        let fr = |v: &[f64]| v.iter().map(|&x| lit::<T>(x)).collect::<Vec<T>>();
        Self {
            t_values,
            x_fractions: fr(&[0.0, 0.25, 0.5, 0.75, 0.9, 0.99, 1.0]),
            s_fractions: fr(&[0.0, 0.25, 0.5, 0.75, 0.95]),
        }
    }
}

/// Measured constant of one bound and its large-`t` trend.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FittedBound<T> {
    /// inf (lower bounds) or sup (upper bound) of the normalized ratio.
    pub value: T,
    /// Same extremum restricted to the last `t`-decade of the grid.
    pub last_decade: T,
    /// Same extremum over the decade before.
    pub previous_decade: T,
    pub pass: bool,
}

/// Fitted constants `A_0, B_0, B_1, B_2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma31Constants<T> {
    pub a_0: FittedBound<T>,
    pub b_0: FittedBound<T>,
    pub b_1: FittedBound<T>,
    pub b_2: FittedBound<T>,
    pub q: T,
    pub lambda_0: T,
    pub min_value: T,
    pub samples: usize,
    pub pass: bool,
}

struct Extremum<T> {
    lower: bool,
    all: T,
    last: T,
    previous: T,
}

impl<T: Scalar> Extremum<T> {
    fn new(lower: bool) -> Self {
        let init = if lower { T::infinity() } else { T::zero() };
        Self {
            lower,
            all: init,
            last: init,
            previous: init,
        }
    }

    fn pick(&self, a: T, b: T) -> T {
        if self.lower {
            a.min(b)
        } else {
            a.max(b)
        }
    }

    fn push(&mut self, t: T, t_top: T, ratio: T) {
        self.all = self.pick(self.all, ratio);
        let decade = lit::<T>(10.0);
        if t > t_top / decade {
            self.last = self.pick(self.last, ratio);
        } else if t > t_top / (decade * decade) {
            self.previous = self.pick(self.previous, ratio);
        }
    }

    fn finish(self) -> FittedBound<T> {
        let finite = self.all.is_finite() && self.all > T::zero();
        let trend_ok = if !self.last.is_finite() || !self.previous.is_finite() {
            true
        } else if self.lower {
            self.last >= self.previous * lit(0.5)
        } else {
            self.last <= self.previous * lit(2.0)
        };
        FittedBound {
            value: self.all,
            last_decade: self.last,
            previous_decade: self.previous,
            pass: finite && trend_ok,
        }
    }
}

/// Fits the constants of the four bounds over `grid`.
///
/// Lower bounds report the infimum of the normalized ratio, the upper bound
/// the supremum. A bound passes if its constant is finite and positive and
/// the extremum over the last decade of `t` has not drifted by more than a
/// factor two from the decade before, i.e. the normalization captures the
/// large-`t` rate.
pub fn fit_lemma31_constants<T: Scalar>(ev: &TestFunctionEvaluator<T>, grid: &Lemma31Grid<T>) -> Result<Lemma31Constants<T>> {
    let q = ev.q();
    let n = ev.dimension();
    let nf = from_usize::<T>(n);
    if !(q > T::zero()) {
        return Err(Error::InvalidParameter(format!("bounds (i) and (ii) need q > 0, got {q}")));
    }
    let q_floor = (nf - lit(3.0)) / lit(2.0);
    if !(q > q_floor) {
        return Err(Error::InvalidParameter(format!(
            "bound (iii) needs q > (n-3)/2 = {q_floor}, got {q}"
        )));
    }
    let r = ev.r_support();
    let t_top = grid.t_values.iter().copied().fold(T::zero(), T::max);
    let mut a0 = Extremum::new(true);
    let mut b0 = Extremum::new(true);
    let mut b1 = Extremum::new(true);
    let mut b2 = Extremum::new(false);
    let mut min_value = T::infinity();
    let mut samples = 0usize;
    let mut record = |v: T| {
        min_value = min_value.min(v);
        samples += 1;
    };
    let half_a = (nf - T::one()) / lit(2.0);
    for &t in &grid.t_values {
        for &fx in &grid.x_fractions {
            // (i): |x| <= R.
            let x = fx * r;
            let xi = ev.xi(x, t);
            let eta0 = ev.eta(x, t, T::zero())?;
            record(xi);
            record(eta0);
            a0.push(t, t_top, xi);
            b0.push(t, t_top, eta0 * bracket(t));

            // (iii): |x| <= t + R, t > 0.
            if t > T::zero() {
                let x = fx * (t + r);
                let v = ev.eta(x, t, t)?;
                record(v);
                b2.push(t, t_top, v * bracket(t).powf(half_a) * bracket(t - x).powf(q - q_floor));
            }
        }
        // (ii): 0 <= s < t, |x| <= s + R.
        for &fs in &grid.s_fractions {
            let s = fs * t;
            if !(s < t) {
                continue;
            }
            for &fx in &grid.x_fractions {
                let x = fx * (s + r);
                let v = ev.eta(x, t, s)?;
                record(v);
                b1.push(t, t_top, v * bracket(t) * bracket(s).powf(q));
            }
        }
    }
    let (a_0, b_0, b_1, b_2) = (a0.finish(), b0.finish(), b1.finish(), b2.finish());
    let pass = a_0.pass && b_0.pass && b_1.pass && b_2.pass && min_value > T::zero();
    Ok(Lemma31Constants {
        a_0,
        b_0,
        b_1,
        b_2,
        q,
        lambda_0: ev.lambda_0(),
        min_value,
        samples,
        pass,
    })
}
