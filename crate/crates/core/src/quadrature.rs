//! Quadrature rules: Gauss-Legendre panels for the `lambda` integrals and
//! trapezoid weights for radial integrals `\int f(|x|) dx`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{from_usize, lit, Scalar};
use crate::special::sphere_area;

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre<T: Scalar>(order: usize) -> (Vec<T>, Vec<T>) {
    assert!(order >= 1);
    let m = (order + 1) / 2;
    let mut nodes = vec![T::zero(); order];
    let mut weights = vec![T::zero(); order];
    let nf = from_usize::<T>(order);
    for i in 0..m {
        // Chebyshev-like initial guess, refined by Newton on P_order.
        let mut x = (T::PI() * (from_usize::<T>(i) + lit(0.75)) / (nf + lit(0.5))).cos();
        let mut dp = T::one();
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(order, x);
            dp = d;
            let dx = p / d;
            x = x - dx;
            if dx.abs() <= T::epsilon() * lit(4.0) {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(order, x);
        dp = if d.is_finite() { d } else { dp };
        let w = lit::<T>(2.0) / ((T::one() - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[order - 1 - i] = x;
        weights[i] = w;
        weights[order - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative<T: Scalar>(order: usize, x: T) -> (T, T) {
    let mut p0 = T::one();
    let mut p1 = x;
    for k in 2..=order {
        let kf = from_usize::<T>(k);
        let p2 = ((lit::<T>(2.0) * kf - T::one()) * x * p1 - (kf - T::one()) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if order == 0 {
        return (T::one(), T::zero());
    }
    let nf = from_usize::<T>(order);
    let d = nf * (x * p1 - p0) / (x * x - T::one());
    (p1, d)
}

/// Layout of the `lambda` quadrature on `(0, lambda_0]`.
///
/// The range is cut into octaves `[lambda_0 2^{-k-1}, lambda_0 2^{-k}]`
/// (geometric towards zero), each octave into `subdivisions` equal panels,
/// each panel carrying an `order`-point Gauss-Legendre rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaGridSpec {
    pub octaves: usize,
    pub subdivisions: usize,
    pub order: usize,
}

impl Default for LambdaGridSpec {
    fn default() -> Self {
        Self {
            octaves: 36,
            subdivisions: 1,
            order: 12,
        }
    }
}

impl LambdaGridSpec {
    /// Every panel split in two: twice the nodes, same coverage.
    pub fn doubled(&self) -> Self {
        Self {
            subdivisions: self.subdivisions * 2,
            ..*self
        }
    }
}

/// Composite rule for `\int_0^{lambda_0} lambda^q g(lambda) d lambda`.
///
/// Geometric panels `[lambda_0 2^{-k-1}, lambda_0 2^{-k}]` resolve the
/// `lambda^q` endpoint behaviour; the innermost piece `[0, lambda_min]` is
/// integrated with `g` frozen at `g(0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaQuadrature<T> {
    lambda_0: T,
    nodes: Vec<T>,
    weights: Vec<T>,
    lambda_min: T,
    spec: LambdaGridSpec,
}

impl<T: Scalar> LambdaQuadrature<T> {
    pub fn new(lambda_0: T, spec: LambdaGridSpec) -> Result<Self> {
        if !(lambda_0 > T::zero()) {
            return Err(Error::InvalidParameter(format!("lambda_0 must be positive, got {lambda_0}")));
        }
        if spec.order == 0 || spec.subdivisions == 0 || spec.octaves == 0 {
            return Err(Error::InvalidParameter("empty lambda grid".into()));
        }
        let (gl_x, gl_w) = gauss_legendre::<T>(spec.order);
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        let push_panel = |a: T, b: T, nodes: &mut Vec<T>, weights: &mut Vec<T>| {
            let half = (b - a) / lit(2.0);
            let mid = (a + b) / lit(2.0);
            for (x, w) in gl_x.iter().zip(&gl_w) {
                nodes.push(mid + half * *x);
                weights.push(half * *w);
            }
        };
        let two = lit::<T>(2.0);
        let lambda_min = lambda_0 / two.powi(spec.octaves as i32);
        let mut a = lambda_min;
        for _ in 0..spec.octaves {
            let b = a * two;
            let width = (b - a) / from_usize(spec.subdivisions);
            for k in 0..spec.subdivisions {
                let lo = a + width * from_usize(k);
                push_panel(lo, lo + width, &mut nodes, &mut weights);
            }
            a = b;
        }
        Ok(Self {
            lambda_0,
            nodes,
            weights,
            lambda_min,
            spec,
        })
    }

    pub fn lambda_0(&self) -> T {
        self.lambda_0
    }

    /// Sorted quadrature nodes in `(lambda_min, lambda_0)`.
    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn lambda_min(&self) -> T {
        self.lambda_min
    }

    pub fn spec(&self) -> LambdaGridSpec {
        self.spec
    }

    /// Weight of the analytic piece `\int_0^{lambda_min} lambda^q d lambda`.
    pub fn origin_weight(&self, q: T) -> T {
        self.lambda_min.powf(q + T::one()) / (q + T::one())
    }

    /// `\int_0^{lambda_0} lambda^q g(lambda) d lambda` given `g` at the nodes
    /// and its limit at zero.
    pub fn integrate(&self, q: T, g_at_zero: T, g: impl Fn(usize, T) -> T) -> T {
        let mut acc = self.origin_weight(q) * g_at_zero;
        for (k, (&lambda, &w)) in self.nodes.iter().zip(&self.weights).enumerate() {
            acc = acc + w * lambda.powf(q) * g(k, lambda);
        }
        acc
    }
}

/// Trapezoid weights for `\int_{R^n} f(|x|) dx = |S^{n-1}| \int f(r) r^{n-1} dr`
/// on the uniform grid `r_i = i dr`, `i = 0..len`.
pub fn radial_weights<T: Scalar>(n: usize, dr: T, len: usize) -> Vec<T> {
    let area = sphere_area::<T>(n);
    let mut w: Vec<T> = (0..len)
        .map(|i| area * (dr * from_usize(i)).powi(n as i32 - 1) * dr)
        .collect();
    if let Some(last) = w.last_mut() {
        *last = *last / lit(2.0);
    }
    if let Some(first) = w.first_mut() {
        *first = *first / lit(2.0);
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        for order in [1usize, 2, 5, 12, 24] {
            let (x, w) = gauss_legendre::<f64>(order);
            assert_relative_eq!(w.iter().sum::<f64>(), 2.0, epsilon = 1e-14);
            for deg in 0..(2 * order) {
                let approx: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((approx - exact).abs() < 1e-13, "order {order} deg {deg}");
            }
        }
    }

    #[test]
    fn lambda_rule_power_weight() {
        // \int_0^{0.25} lambda^q e^{-2 lambda} d lambda against a fine series.
        let quad = LambdaQuadrature::new(0.25f64, LambdaGridSpec::default()).unwrap();
        for &q in &[-0.5f64, 0.0, 0.585_786_437_626_905, 1.0, 3.0] {
            let value = quad.integrate(q, 1.0, |_, l| (-2.0 * l).exp());
            let oracle = lower_gamma_series(q + 1.0, 0.5) / 2f64.powf(q + 1.0);
            assert_relative_eq!(value, oracle, max_relative = 1e-12);
        }
    }

    fn lower_gamma_series(a: f64, x: f64) -> f64 {
        let mut term = 1.0 / a;
        let mut sum = term;
        for k in 1..200 {
            term *= x / (a + k as f64);
            sum += term;
        }
        sum * x.powf(a) * (-x).exp()
    }

    #[test]
    fn doubled_grid_has_twice_the_nodes() {
        let spec = LambdaGridSpec::default();
        let a = LambdaQuadrature::new(0.25f64, spec).unwrap();
        let b = LambdaQuadrature::new(0.25f64, spec.doubled()).unwrap();
        assert_eq!(b.nodes().len(), 2 * a.nodes().len());
        assert!(a.nodes().windows(2).all(|w| w[0] < w[1]));
        assert!(*a.nodes().last().unwrap() < 0.25);
    }

    #[test]
    fn radial_weights_integrate_ball_volume() {
        let dr = 1e-3f64;
        let len = 1001;
        let w = radial_weights::<f64>(3, dr, len);
        let vol: f64 = w.iter().sum();
        assert_relative_eq!(vol, 4.0 * std::f64::consts::PI / 3.0, max_relative = 1e-5);
    }
}
