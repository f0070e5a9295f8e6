//! The slicing iteration behind the lifespan estimate.
//!
//! Starting from `F(t) >= M eps^p log(t / l_0)`, each step feeds the previous
//! lower bound into the frame inequality and integrates over `[l_j, t]`:
//!
//! ```text
//! F(t) >= C_j (log<t>)^{-b_j} (log(t / l_j))^{a_j},   t >= l_j,
//! ```
//!
//! with `C_{j+1} = E C_j^p / (2p)^j`. `C_j` is doubly exponential in `j`, so
//! it is only ever handled through its logarithm. The index sequences are
//! generic over any [`Num`] so their identities can be checked exactly in
//! rational arithmetic.

use num_traits::{Num, One};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{bracket, from_usize, lit, Scalar};
use crate::Rational;

/// `gamma(p, n) = 2 + (n + 1) p - (n - 1) p^2`.
pub fn strauss_gamma<T: Scalar>(p: T, n: usize) -> T {
    let nf = from_usize::<T>(n);
    lit::<T>(2.0) + (nf + T::one()) * p - (nf - T::one()) * p * p
}

/// Critical exponent `p_0(n)`, the positive root of `gamma(p, n) = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StraussExponent<T> {
    pub n: usize,
    pub p0: T,
}

pub fn strauss_exponent<T: Scalar>(n: usize) -> Result<StraussExponent<T>> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("dimension must be >= 2, got {n}")));
    }
    let nf = from_usize::<T>(n);
    let a = nf - T::one();
    let b = nf + T::one();
    // Both roots are real with opposite signs; take the positive one.
    let disc = (b * b + lit::<T>(8.0) * a).sqrt();
    Ok(StraussExponent {
        n,
        p0: (b + disc) / (lit::<T>(2.0) * a),
    })
}

/// `(n-1) p / 2 - (n-1) / 2 - 1/p`; equals one exactly at `p = p_0(n)`.
pub fn critical_identity<T: Scalar>(p: T, n: usize) -> T {
    let half_a = (from_usize::<T>(n) - T::one()) / lit(2.0);
    half_a * p - half_a - p.recip()
}

/// Test-function exponent `q = (n-1)/2 - 1/p` used by the frame inequality.
pub fn critical_q<T: Scalar>(p: T, n: usize) -> T {
    (from_usize::<T>(n) - T::one()) / lit(2.0) - p.recip()
}

fn pow_int<N: Clone + Num>(base: &N, exp: usize) -> N {
    let mut acc = N::one();
    for _ in 0..exp {
        acc = acc * base.clone();
    }
    acc
}

fn two<N: Num>() -> N {
    N::one() + N::one()
}

/// Slicing point `l_j = 2 - 2^{-(j+1)}`.
pub fn slicing_point<N: Clone + Num>(j: usize) -> N {
    two::<N>() - N::one() / pow_int(&two::<N>(), j + 1)
}

/// Exponent `a_j = (p^{j+1} - 1) / (p - 1)`.
pub fn exponent_a<N: Clone + Num>(p: &N, j: usize) -> N {
    (pow_int(p, j + 1) - N::one()) / (p.clone() - N::one())
}

/// Exponent `b_j = p^j - 1`.
pub fn exponent_b<N: Clone + Num>(p: &N, j: usize) -> N {
    pow_int(p, j) - N::one()
}

/// Partial sum `S_j = sum_{i=1}^{j-1} i / p^i`.
pub fn partial_s<N: Clone + Num>(p: &N, j: usize) -> N {
    let mut acc = N::zero();
    let mut i_n = N::zero();
    for i in 1..j {
        i_n = i_n + N::one();
        acc = acc + i_n.clone() / pow_int(p, i);
    }
    acc
}

/// Checks, in exact arithmetic, `a_{j+1} = p a_j + 1`, `b_{j+1} = p b_j + p - 1`,
/// `l_{j+1} - l_j = 2^{-(j+2)}` and the slicing gap `1 - l_j / l_{j+1} >= 2^{-(j+3)}`
/// for `j <= j_max`.
pub fn sequence_identities_hold(p: &Rational, j_max: usize) -> bool {
    let one = Rational::one();
    let two = Rational::from_integer(2.into());
    let mut ok = true;
    let mut pow = Rational::from_integer(4.into());
    for j in 0..=j_max {
        ok &= exponent_a(p, j + 1) == p.clone() * exponent_a(p, j) + one.clone();
        ok &= exponent_b(p, j + 1) == p.clone() * exponent_b(p, j) + p.clone() - one.clone();
        let l: Rational = slicing_point(j);
        let l_next: Rational = slicing_point(j + 1);
        ok &= l_next.clone() - l.clone() == one.clone() / pow.clone();
        ok &= one.clone() - l / l_next >= one.clone() / (pow.clone() * two.clone());
        pow = pow * two.clone();
    }
    ok
}

/// Limit `S = p / (p - 1)^2`.
pub fn limit_s<T: Scalar>(p: T) -> T {
    p / ((p - T::one()) * (p - T::one()))
}

/// Constants fitted upstream that feed the iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationConstants<T> {
    /// Constant of the frame inequality.
    pub c_frame: T,
    /// Constant of the `L^p` lower bound.
    pub c_0: T,
    /// Lower constant of `eta_q(x, t, s) <t> <s>^q`.
    pub b_1: T,
}

/// Sequences and constants of the iteration for one amplitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationSchedule<T> {
    pub p: T,
    pub eps: T,
    pub constants: IterationConstants<T>,
    /// `M = C_0 B_1 / 27`.
    pub m: T,
    /// `N = C M^p / (63 (p + 1))`.
    pub n_const: T,
    /// `E = C (p - 1) / (72 p^2)`.
    pub e: T,
    /// `log C_j` by recursion, `j = 1..=j_max` at index `j - 1`.
    pub log_c: Vec<T>,
    /// `log C_j` from the closed form, same indexing.
    pub log_c_closed: Vec<T>,
    /// `S = p / (p - 1)^2`.
    pub s_limit: T,
}

/// Builds the schedule up to `j_max`.
pub fn build_schedule<T: Scalar>(
    p: T,
    constants: IterationConstants<T>,
    eps: T,
    j_max: usize,
) -> Result<IterationSchedule<T>> {
    let IterationConstants { c_frame, c_0, b_1 } = constants;
    let positive = |x: T| x > T::zero() && x.is_finite();
    if !(p > T::one()) || !positive(c_frame) || !positive(c_0) || !positive(b_1) || !positive(eps) {
        return Err(Error::InvalidParameter(format!(
            "iteration needs p > 1 and positive constants, got p = {p}, C = {c_frame}, C_0 = {c_0}, B_1 = {b_1}, eps = {eps}"
        )));
    }
    if j_max == 0 {
        return Err(Error::InvalidParameter("j_max must be >= 1".into()));
    }
    let m = c_0 * b_1 / lit(27.0);
    let n_const = c_frame * m.powf(p) / (lit::<T>(63.0) * (p + T::one()));
    let e = c_frame * (p - T::one()) / (lit::<T>(72.0) * p * p);

    let log_2p = (lit::<T>(2.0) * p).ln();
    let log_e = e.ln();
    let log_c1 = n_const.ln() + p * p * eps.ln();
    let ell = log_e / (p - T::one());

    let mut log_c = Vec::with_capacity(j_max);
    let mut log_c_closed = Vec::with_capacity(j_max);
    let mut current = log_c1;
    let mut s_j = T::zero();
    let mut p_pow = T::one();
    for j in 1..=j_max {
        if j > 1 {
            let jm1 = from_usize::<T>(j - 1);
            current = p * current + log_e - jm1 * log_2p;
            s_j = s_j + jm1 / p.powi(j as i32 - 1);
            p_pow = p_pow * p;
        }
        log_c.push(current);
        log_c_closed.push(p_pow * (log_c1 - s_j * log_2p + ell) - ell);
    }
    Ok(IterationSchedule {
        p,
        eps,
        constants,
        m,
        n_const,
        e,
        log_c,
        log_c_closed,
        s_limit: limit_s(p),
    })
}

impl<T: Scalar> IterationSchedule<T> {
    pub fn j_max(&self) -> usize {
        self.log_c.len()
    }

    /// Largest `|recursion - closed form| / max(1, |log C_j|)`.
    pub fn closed_form_deviation(&self) -> T {
        self.log_c
            .iter()
            .zip(&self.log_c_closed)
            .map(|(a, b)| (*a - *b).abs() / T::one().max(a.abs()))
            .fold(T::zero(), T::max)
    }

    /// `log` of the `j`-th lower bound at `t`, given `log t`. Index `j = 0`
    /// is the first step `M eps^p log(t / l_0)`. Returns `-inf` at `t = l_j`.
    pub fn log_envelope_at_log_t(&self, j: usize, log_t: T) -> Result<T> {
        if j > self.j_max() {
            return Err(Error::Domain(format!("envelope index {j} beyond j_max = {}", self.j_max())));
        }
        let l_j: T = slicing_point(j);
        let gap = log_t - l_j.ln();
        if gap < T::zero() {
            return Err(Error::Domain(format!("envelope {j} needs t >= l_j = {l_j}")));
        }
        if j == 0 {
            return Ok(self.m.ln() + self.p * self.eps.ln() + gap.ln());
        }
        // log<t> = log t + log(1 + 3/t), stable for huge t.
        let log_bracket = if log_t > lit(30.0) {
            log_t + (lit::<T>(3.0) * (-log_t).exp()).ln_1p()
        } else {
            bracket(log_t.exp()).ln()
        };
        let a: T = exponent_a(&self.p, j);
        let b: T = exponent_b(&self.p, j);
        Ok(self.log_c[j - 1] - b * log_bracket.ln() + a * gap.ln())
    }

    /// The `j`-th lower bound for `F(t)`.
    pub fn envelope(&self, t: T, j: usize) -> Result<T> {
        if !(t > T::zero()) {
            return Err(Error::Domain(format!("envelope needs t > 0, got {t}")));
        }
        Ok(self.log_envelope_at_log_t(j, t.ln())?.exp())
    }

    /// `log log t` at which envelope `j + 1` first overtakes envelope `j`,
    /// found by bisection in `log log t`. `None` if no crossing exists below
    /// `log t = 1e300`.
    pub fn crossing_log_log_t(&self, j: usize) -> Result<Option<T>> {
        let diff = |w: T| -> Result<T> {
            let log_t = w.exp();
            Ok(self.log_envelope_at_log_t(j + 1, log_t)? - self.log_envelope_at_log_t(j, log_t)?)
        };
        let l_next: T = slicing_point(j + 1);
        // Start just above l_{j+1} where envelope j+1 vanishes.
        let mut lo = (l_next.ln() * lit(1.0 + 1e-9)).ln();
        if diff(lo)? >= T::zero() {
            return Ok(Some(lo));
        }
        let cap = lit::<T>(1e300).ln();
        let mut hi = lo.abs().max(T::one());
        while diff(hi)? < T::zero() {
            lo = hi;
            hi = hi * lit(2.0);
            if hi > cap {
                return Ok(None);
            }
        }
        for _ in 0..200 {
            let mid = (lo + hi) / lit(2.0);
            if diff(mid)? < T::zero() {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= T::epsilon() * hi.abs() {
                break;
            }
        }
        Ok(Some(hi))
    }
}

/// Lifespan upper bound `T_eps <= exp(K_eff eps^{-p(p-1)})`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LifespanBound<T> {
    /// `log B`, `B = N (2p)^{-S} 2^{p(1-2p)/(p-1)} E^{1/(p-1)}`.
    pub log_b: T,
    /// `K_eff = B^{-(p-1)/p}`.
    pub k_eff: T,
    /// `log T_bound = K_eff eps^{-p(p-1)}`.
    pub log_t_bound: T,
    /// Amplitude where `T_bound = 4`.
    pub eps_0: T,
    /// `eps <= eps_0`; outside it the bound is reported but not guaranteed.
    pub within_guarantee: bool,
}

impl<T: Scalar> LifespanBound<T> {
    /// `T_bound` itself; infinite once it leaves the scalar range.
    pub fn t_bound(&self) -> T {
        self.log_t_bound.exp()
    }
}

pub fn lifespan_bound<T: Scalar>(schedule: &IterationSchedule<T>, eps: T) -> Result<LifespanBound<T>> {
    if !(eps > T::zero()) {
        return Err(Error::InvalidParameter(format!("eps must be positive, got {eps}")));
    }
    let p = schedule.p;
    let pm1 = p - T::one();
    let ln2 = lit::<T>(2.0).ln();
    let log_b = schedule.n_const.ln() - schedule.s_limit * (lit::<T>(2.0) * p).ln()
        + p * (T::one() - lit::<T>(2.0) * p) / pm1 * ln2
        + schedule.e.ln() / pm1;
    let k_eff = (-(pm1 / p) * log_b).exp();
    let exponent = p * pm1;
    let log_t_bound = k_eff * eps.powf(-exponent);
    let ln4 = lit::<T>(4.0).ln();
    let eps_0 = (k_eff / ln4).powf(exponent.recip());
    Ok(LifespanBound {
        log_b,
        k_eff,
        log_t_bound,
        eps_0,
        within_guarantee: eps <= eps_0,
    })
}

/// `K(t) = log B + p^2 log eps + (p/(p-1)) log log t`, given `log t > 0`.
pub fn k_function<T: Scalar>(p: T, log_b: T, eps: T, log_t: T) -> T {
    log_b + p * p * eps.ln() + p / (p - T::one()) * log_t.ln()
}

/// `K(T_bound (1 + delta))`, evaluated without cancellation:
/// `(p/(p-1)) log(1 + log(1 + delta) / log T_bound)`.
pub fn k_past_bound<T: Scalar>(p: T, bound: &LifespanBound<T>, delta: T) -> T {
    p / (p - T::one()) * (delta.ln_1p() / bound.log_t_bound).ln_1p()
}
