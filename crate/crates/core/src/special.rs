//! Modified Bessel functions and the flat radial eigenfunction
//! `phi(x) = \int_{S^{n-1}} e^{x . omega} dS_omega`.
//!
//! In closed form `phi(r) = (2 pi)^{n/2} r^{-(n-2)/2} I_{(n-2)/2}(r)`. Every
//! routine has an exponentially scaled variant (`e^{-r} phi(r)`) because the
//! callers multiply by `e^{-lambda (t + R)}` and only the product is O(1).

use crate::error::{Error, Result};
use crate::scalar::{from_usize, lit, Scalar};

const MAX_SERIES_TERMS: usize = 2000;

/// Below this argument (plus `nu^2`) the power series is summed; above it the
/// large-argument expansion is used.
const ASYMPTOTIC_THRESHOLD: f64 = 30.0;

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEFFS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0`.
pub fn ln_gamma<T: Scalar>(x: T) -> T {
    let half = lit::<T>(0.5);
    if x < half {
        // Reflection: Gamma(x) Gamma(1 - x) = pi / sin(pi x).
        let pi = T::PI();
        return (pi / (pi * x).sin().abs()).ln() - ln_gamma(T::one() - x);
    }
    let x = x - T::one();
    let mut acc = lit::<T>(LANCZOS_COEFFS[0]);
    for (i, &c) in LANCZOS_COEFFS.iter().enumerate().skip(1) {
        acc = acc + lit::<T>(c) / (x + from_usize(i));
    }
    let t = x + lit::<T>(LANCZOS_G) + half;
    half * (lit::<T>(2.0) * T::PI()).ln() + (x + half) * t.ln() - t + acc.ln()
}

/// Area of the unit sphere `S^{n-1}` in `R^n`.
pub fn sphere_area<T: Scalar>(n: usize) -> T {
    assert!(n >= 1, "sphere_area needs n >= 1");
    let two_pi = lit::<T>(2.0) * T::PI();
    let mut area = if n % 2 == 1 { lit::<T>(2.0) } else { two_pi };
    let mut k = if n % 2 == 1 { 1 } else { 2 };
    while k < n {
        area = area * two_pi / from_usize(k);
        k += 2;
    }
    area
}

fn uses_asymptotic<T: Scalar>(nu: T, x: T) -> bool {
    x > lit::<T>(ASYMPTOTIC_THRESHOLD) + nu * nu
}

/// `e^{-x} x^{-nu} I_nu(x)`, finite at `x = 0`.
fn reduced_scaled<T: Scalar>(nu: T, x: T) -> T {
    if uses_asymptotic(nu, x) {
        return asymptotic_scaled(nu, x) * x.powf(-nu);
    }
    let quarter_sq = x * x / lit(4.0);
    let mut term = (-x - nu * lit::<T>(2.0).ln() - ln_gamma(nu + T::one())).exp();
    let mut sum = term;
    for k in 0..MAX_SERIES_TERMS {
        let k1 = from_usize::<T>(k + 1);
        term = term * quarter_sq / (k1 * (k1 + nu));
        sum = sum + term;
        if term <= sum * T::epsilon() * lit(0.25) {
            break;
        }
    }
    sum
}

/// Large-argument expansion of `e^{-x} I_nu(x)`.
fn asymptotic_scaled<T: Scalar>(nu: T, x: T) -> T {
    let mu = lit::<T>(4.0) * nu * nu;
    let mut term = T::one();
    let mut sum = T::one();
    let mut prev_abs = T::infinity();
    for k in 1..MAX_SERIES_TERMS {
        let odd = from_usize::<T>(2 * k - 1);
        term = -term * (mu - odd * odd) / (lit::<T>(8.0) * from_usize::<T>(k) * x);
        let abs = term.abs();
        if abs == T::zero() || abs > prev_abs {
            break;
        }
        sum = sum + term;
        if abs <= sum.abs() * T::epsilon() * lit(0.25) {
            break;
        }
        prev_abs = abs;
    }
    sum / (lit::<T>(2.0) * T::PI() * x).sqrt()
}

/// Exponentially scaled modified Bessel function `e^{-x} I_nu(x)`.
pub fn bessel_i_scaled<T: Scalar>(nu: T, x: T) -> T {
    assert!(nu >= T::zero() && x >= T::zero(), "bessel_i needs nu >= 0, x >= 0");
    if x == T::zero() {
        return if nu == T::zero() { T::one() } else { T::zero() };
    }
    if uses_asymptotic(nu, x) {
        asymptotic_scaled(nu, x)
    } else {
        reduced_scaled(nu, x) * x.powf(nu)
    }
}

/// Modified Bessel function of the first kind `I_nu(x)`.
///
/// Returns [`Error::Overflow`] once `e^x` leaves the representable range.
pub fn bessel_i<T: Scalar>(nu: T, x: T) -> Result<T> {
    let value = bessel_i_scaled(nu, x) * x.exp();
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Overflow {
            what: "bessel_i",
            x: x.to_f64().unwrap_or(f64::NAN),
        })
    }
}

/// Exponentially scaled modified Bessel function of the second kind
/// `e^{z} K_nu(z)` for `z > 0`.
///
/// Trapezoid rule on `\int_0^inf e^{-z (cosh t - 1)} cosh(nu t) dt`; the
/// integrand is analytic and decays doubly exponentially, so a fixed step
/// reaches full precision.
pub fn bessel_k_scaled<T: Scalar>(nu: T, z: T) -> T {
    assert!(z > T::zero(), "bessel_k needs z > 0");
    let h = lit::<T>(0.05);
    let ln2 = lit::<T>(2.0).ln();
    let nu = nu.abs();
    let mut sum = lit::<T>(0.5);
    let mut k = 1usize;
    loop {
        let t = h * from_usize(k);
        let log_cosh = nu * t + (-lit::<T>(2.0) * nu * t).exp().ln_1p() - ln2;
        let term = (-z * (t.cosh() - T::one()) + log_cosh).exp();
        sum = sum + term;
        if term <= sum * T::epsilon() * lit(1e-2) && t > T::one() {
            break;
        }
        k += 1;
        if k > 200_000 {
            break;
        }
    }
    sum * h
}

/// Order `nu = (n - 2) / 2` attached to dimension `n`.
pub fn radial_order<T: Scalar>(n: usize) -> T {
    (from_usize::<T>(n) - lit(2.0)) / lit(2.0)
}

/// `e^{-r} phi(r)` for the flat eigenfunction in dimension `n`.
pub fn phi_flat_scaled<T: Scalar>(n: usize, r: T) -> T {
    debug_assert!(n >= 2 && r >= T::zero());
    let nu = radial_order::<T>(n);
    let prefactor = (lit::<T>(2.0) * T::PI()).powf(from_usize::<T>(n) / lit(2.0));
    prefactor * reduced_scaled(nu, r)
}

/// `e^{-r} phi'(r)`; uses `d/dr [r^{-nu} I_nu(r)] = r^{-nu} I_{nu+1}(r)`.
pub fn phi_flat_prime_scaled<T: Scalar>(n: usize, r: T) -> T {
    debug_assert!(n >= 2 && r >= T::zero());
    let nu = radial_order::<T>(n);
    let prefactor = (lit::<T>(2.0) * T::PI()).powf(from_usize::<T>(n) / lit(2.0));
    prefactor * r * reduced_scaled(nu + T::one(), r)
}

/// Flat radial eigenfunction `phi(r)`, solving `phi'' + (n-1)/r phi' = phi`.
pub fn phi_flat<T: Scalar>(n: usize, r: T) -> Result<T> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("dimension must be >= 2, got {n}")));
    }
    if !(r >= T::zero()) {
        return Err(Error::Domain(format!("phi_flat needs r >= 0, got {r}")));
    }
    let value = phi_flat_scaled(n, r) * r.exp();
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Overflow {
            what: "phi_flat",
            x: r.to_f64().unwrap_or(f64::NAN),
        })
    }
}

/// Constant in `phi(r) ~ c_n r^{-(n-1)/2} e^r`.
pub fn asymptotic_constant<T: Scalar>(n: usize) -> T {
    (lit::<T>(2.0) * T::PI()).powf((from_usize::<T>(n) - T::one()) / lit(2.0))
}

/// Leading large-`r` behaviour `c_n r^{-(n-1)/2} e^r`.
pub fn phi_flat_asymptotic<T: Scalar>(n: usize, r: T) -> Result<T> {
    if !(r > T::zero()) {
        return Err(Error::Domain(format!("asymptotic form needs r > 0, got {r}")));
    }
    let exponent = (from_usize::<T>(n) - T::one()) / lit(2.0);
    let value = asymptotic_constant::<T>(n) * r.powf(-exponent) * r.exp();
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Overflow {
            what: "phi_flat_asymptotic",
            x: r.to_f64().unwrap_or(f64::NAN),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Partial sums of `sum (x/2)^{2k+nu} / (k! Gamma(k+nu+1))` to convergence.
    fn bessel_series_oracle(nu: f64, x: f64) -> f64 {
        let mut term = (x / 2.0).powf(nu) / ln_gamma(nu + 1.0).exp();
        let mut sum = term;
        for k in 1..400 {
            term *= (x / 2.0).powi(2) / (k as f64 * (k as f64 + nu));
            sum += term;
        }
        sum
    }

    #[test]
    fn ln_gamma_known_values() {
        assert_relative_eq!(ln_gamma(1.0f64), 0.0, epsilon = 1e-14);
        assert_relative_eq!(ln_gamma(5.0f64).exp(), 24.0, max_relative = 1e-13);
        assert_relative_eq!(ln_gamma(0.5f64).exp(), std::f64::consts::PI.sqrt(), max_relative = 1e-13);
        assert_relative_eq!(ln_gamma(1.5f64).exp(), std::f64::consts::PI.sqrt() / 2.0, max_relative = 1e-13);
    }

    #[test]
    fn i0_at_zero_and_one() {
        assert_eq!(bessel_i(0.0f64, 0.0).unwrap(), 1.0);
        let oracle = bessel_series_oracle(0.0, 1.0);
        assert_relative_eq!(oracle, 1.266_065_877_752_008_4, max_relative = 1e-15);
        assert_relative_eq!(bessel_i(0.0f64, 1.0).unwrap(), oracle, max_relative = 1e-13);
    }

    #[test]
    fn half_order_closed_form() {
        let x = 1.0f64;
        let closed = (2.0 / (std::f64::consts::PI * x)).sqrt() * x.sinh();
        assert_relative_eq!(closed, 0.937_674_888_245_488, max_relative = 1e-14);
        assert_relative_eq!(bessel_series_oracle(0.5, x), closed, max_relative = 1e-14);
        for &x in &[0.01, 0.7, 3.0, 12.0, 29.0, 31.0, 45.0, 200.0] {
            let closed = (2.0 / (std::f64::consts::PI * x)).sqrt() * x.sinh();
            assert_relative_eq!(bessel_i(0.5f64, x).unwrap(), closed, max_relative = 1e-12);
        }
    }

    #[test]
    fn series_and_asymptotic_agree_at_crossover() {
        for &nu in &[0.0f64, 0.5, 1.0, 1.5, 2.0, 3.0] {
            let cross = ASYMPTOTIC_THRESHOLD + nu * nu;
            for &dx in &[-1e-9, 1e-9, -0.5, 0.5] {
                let x = cross + dx;
                let oracle = bessel_series_oracle(nu, x) * (-x).exp();
                assert_relative_eq!(bessel_i_scaled(nu, x), oracle, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn overflow_is_signalled() {
        assert!(matches!(bessel_i(0.0f64, 800.0), Err(Error::Overflow { .. })));
        assert!(bessel_i_scaled(0.0f64, 800.0).is_finite());
        assert!(matches!(bessel_i(0.0f32, 100.0), Err(Error::Overflow { .. })));
    }

    #[test]
    fn k_half_order_closed_form() {
        // e^z K_{1/2}(z) = sqrt(pi / (2 z)), K_{3/2} = K_{1/2} (1 + 1/z).
        for &z in &[1e-8f64, 1e-3, 0.2, 1.0, 7.5, 60.0] {
            let k_half = (std::f64::consts::PI / (2.0 * z)).sqrt();
            assert_relative_eq!(bessel_k_scaled(0.5, z), k_half, max_relative = 1e-12);
            assert_relative_eq!(bessel_k_scaled(1.5, z), k_half * (1.0 + 1.0 / z), max_relative = 1e-12);
        }
    }

    #[test]
    fn k0_reference_value() {
        // K_0(1) = 0.42102443824070833...
        assert_relative_eq!(bessel_k_scaled(0.0f64, 1.0) * (-1.0f64).exp(), 0.421_024_438_240_708_3, max_relative = 1e-13);
    }

    #[test]
    fn phi_at_origin_is_sphere_area() {
        for n in 2..=8 {
            let area: f64 = sphere_area(n);
            assert_relative_eq!(phi_flat(n, 0.0f64).unwrap(), area, max_relative = 1e-13);
        }
        assert_relative_eq!(sphere_area::<f64>(2), 2.0 * std::f64::consts::PI);
        assert_relative_eq!(sphere_area::<f64>(3), 4.0 * std::f64::consts::PI);
    }

    #[test]
    fn phi_three_dimensional_closed_form() {
        let four_pi = 4.0 * std::f64::consts::PI;
        for i in 1..=300 {
            let r = 0.1 * i as f64;
            let expected = four_pi * r.sinh() / r;
            assert_relative_eq!(phi_flat(3, r).unwrap(), expected, max_relative = 1e-10);
        }
    }

    #[test]
    fn phi_derivative_matches_finite_difference() {
        for &n in &[2usize, 3, 5] {
            for &r in &[0.3f64, 2.0, 9.0, 35.0] {
                let h = 1e-5;
                let fd = (phi_flat(n, r + h).unwrap() - phi_flat(n, r - h).unwrap()) / (2.0 * h);
                let exact = phi_flat_prime_scaled(n, r) * r.exp();
                assert_relative_eq!(exact, fd, max_relative = 1e-8);
            }
        }
    }

    #[test]
    fn asymptotic_requires_positive_radius() {
        assert!(phi_flat_asymptotic::<f64>(2, 0.0).is_err());
        assert!(phi_flat(3, -1.0f64).is_err());
    }

    #[test]
    fn single_precision_phi() {
        let r = 2.0f32;
        let expected = 4.0 * std::f32::consts::PI * r.sinh() / r;
        assert!((phi_flat(3, r).unwrap() - expected).abs() / expected < 1e-5);
    }
}
