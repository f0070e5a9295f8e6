//! Isotropic radial coefficient fields `g = alpha(r) I`.
//!
//! The variable-coefficient Laplacian of a radial function reduces to
//! `r^{1-n} (r^{n-1} alpha u')'`, so every solve in the crate is one
//! dimensional. Only perturbations with `alpha <= 1` are admitted, which keeps
//! the propagation speed at most one.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{lit, Scalar};

/// Shape of the coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MetricKind<T> {
    /// `alpha = 1`. Any decay rate is admissible; `beta` only sets the
    /// default eigenfunction range `lambda <= beta / 2`.
    Flat { beta: T },
    /// `alpha(r) = 1 - eps_g * exp(-beta r)` with `0 < eps_g < 1`.
    ExpPerturbed { eps_g: T, beta: T },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricField<T> {
    dimension: usize,
    kind: MetricKind<T>,
    gamma: T,
    beta: T,
}

impl<T: Scalar> MetricField<T> {
    /// Validates parameters and builds the field.
    pub fn new(dimension: usize, kind: MetricKind<T>) -> Result<Self> {
        if dimension < 2 {
            return Err(Error::InvalidParameter(format!(
                "dimension must be >= 2, got {dimension}"
            )));
        }
        let (gamma, beta) = match kind {
            MetricKind::Flat { beta } => (T::one(), beta),
            MetricKind::ExpPerturbed { eps_g, beta } => {
                if !(eps_g > T::zero() && eps_g < T::one()) {
                    return Err(Error::InvalidParameter(format!(
                        "eps_g must lie in (0, 1), got {eps_g}"
                    )));
                }
                (T::one() - eps_g, beta)
            }
        };
        if !(beta > T::zero()) || !beta.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "beta must be positive, got {beta}"
            )));
        }
        Ok(Self {
            dimension,
            kind,
            gamma,
            beta,
        })
    }

    /// Flat metric with unit decay rate.
    pub fn flat(dimension: usize) -> Result<Self> {
        Self::new(dimension, MetricKind::Flat { beta: T::one() })
    }

    pub fn exp_perturbed(dimension: usize, eps_g: T, beta: T) -> Result<Self> {
        Self::new(dimension, MetricKind::ExpPerturbed { eps_g, beta })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn kind(&self) -> MetricKind<T> {
        self.kind
    }

    /// Ellipticity floor.
    pub fn gamma(&self) -> T {
        self.gamma
    }

    /// Exponential decay rate of the perturbation.
    pub fn beta(&self) -> T {
        self.beta
    }

    pub fn is_flat(&self) -> bool {
        matches!(self.kind, MetricKind::Flat { .. })
    }

    #[inline]
    pub fn alpha(&self, r: T) -> T {
        match self.kind {
            MetricKind::Flat { .. } => T::one(),
            MetricKind::ExpPerturbed { eps_g, beta } => T::one() - eps_g * (-beta * r).exp(),
        }
    }

    /// `1 - alpha(r)`, evaluated without cancellation.
    #[inline]
    pub fn deficit(&self, r: T) -> T {
        match self.kind {
            MetricKind::Flat { .. } => T::zero(),
            MetricKind::ExpPerturbed { eps_g, beta } => eps_g * (-beta * r).exp(),
        }
    }

    #[inline]
    pub fn alpha_prime(&self, r: T) -> T {
        match self.kind {
            MetricKind::Flat { .. } => T::zero(),
            MetricKind::ExpPerturbed { eps_g, beta } => eps_g * beta * (-beta * r).exp(),
        }
    }

    /// Largest value of `alpha`; equals one for every admissible field.
    pub fn max_alpha(&self) -> T {
        T::one()
    }

    /// Default upper end of the eigenfunction parameter range.
    pub fn default_lambda_0(&self) -> T {
        self.beta / lit(4.0)
    }
}

/// Outcome of [`verify_hypotheses`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport<T> {
    /// `min alpha` over the samples.
    pub gamma_observed: T,
    /// `sup (|alpha - 1| + |alpha'|) e^{beta r}` over the samples.
    pub k_g_observed: T,
    pub pass: bool,
}

/// Checks ellipticity and exponential decay of `metric` on `r_samples`.
pub fn verify_hypotheses<T: Scalar>(metric: &MetricField<T>, r_samples: &[T]) -> HypothesisReport<T> {
    verify_profile(
        |r| metric.alpha(r),
        |r| -metric.deficit(r),
        |r| metric.alpha_prime(r),
        metric.gamma(),
        metric.beta(),
        r_samples,
    )
}

/// Profile-level check behind [`verify_hypotheses`].
///
/// Finite samples cannot prove a supremum is finite; the proxy used here is
/// that the weighted decay ratio over the outer half of the samples does not
/// exceed its maximum over the inner half.
///
/// `alpha_minus_one` is passed separately so callers can evaluate it without
/// cancellation.
pub fn verify_profile<T, A, B, D>(
    alpha: A,
    alpha_minus_one: B,
    alpha_prime: D,
    gamma: T,
    beta: T,
    r_samples: &[T],
) -> HypothesisReport<T>
where
    T: Scalar,
    A: Fn(T) -> T,
    B: Fn(T) -> T,
    D: Fn(T) -> T,
{
    if r_samples.is_empty() {
        return HypothesisReport {
            gamma_observed: T::nan(),
            k_g_observed: T::nan(),
            pass: false,
        };
    }
    let mut sorted: Vec<T> = r_samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));

    let mut gamma_observed = T::infinity();
    let mut ratios = Vec::with_capacity(sorted.len());
    for &r in &sorted {
        let a = alpha(r);
        gamma_observed = gamma_observed.min(a);
        let deviation = alpha_minus_one(r).abs() + alpha_prime(r).abs();
        ratios.push(deviation * (beta * r).exp());
    }
    let k_g_observed = ratios.iter().copied().fold(T::zero(), T::max);

    let half = ratios.len() / 2;
    let (inner, outer) = ratios.split_at(half.max(1).min(ratios.len()));
    let inner_max = inner.iter().copied().fold(T::zero(), T::max);
    let outer_max = outer.iter().copied().fold(T::zero(), T::max);
    let envelope_ok = outer.is_empty() || outer_max <= inner_max * lit(1.0 + 1e-6) + T::min_positive_value();

    let ellipticity_ok = gamma_observed >= gamma * lit(1.0 - 1e-12);
    let finite = ratios.iter().all(|r| r.is_finite());

    HypothesisReport {
        gamma_observed,
        k_g_observed,
        pass: ellipticity_ok && finite && envelope_ok,
    }
}
