//! The blow-up functional `F(t) = \int u(x, t) eta_q(x, t, t) dx` and the
//! checks built on it: the exact averaged identity, the frame inequality and
//! the `L^p` lower bound.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::iteration::{critical_identity, critical_q, slicing_point, IterationSchedule};
use crate::scalar::{bracket, lit, Scalar};
use crate::testfn::{LambdaMoments, RadialBasis, TestFunctionEvaluator};
use crate::wavesolver::{Nonlinearity, RunRecord, SeriesRow, Termination};

/// Fewest snapshots in a window that the time quadrature accepts.
pub const MIN_SNAPSHOTS: usize = 5;

/// `F(t)` for a radial `u` sampled on the basis grid at time `t`.
pub fn compute_f<T: Scalar>(ev: &TestFunctionEvaluator<T>, basis: &RadialBasis<T>, u: &[T], t: T) -> T {
    ev.pair_eta(&ev.moments(basis, u, t), t)
}

/// `F` at every snapshot of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalTrace<T> {
    pub q: T,
    pub times: Vec<T>,
    pub f: Vec<T>,
}

impl<T: Scalar> FunctionalTrace<T> {
    /// Times at which `F <= 0` (a positive `F` is expected throughout).
    pub fn nonpositive_times(&self) -> Vec<T> {
        self.times
            .iter()
            .zip(&self.f)
            .filter(|(_, f)| !(**f > T::zero()))
            .map(|(t, _)| *t)
            .collect()
    }
}

fn padded<T: Scalar>(u: &[T], len: usize) -> Vec<T> {
    let mut v = u.to_vec();
    v.resize(len, T::zero());
    v
}

pub fn functional_trace<T: Scalar>(run: &RunRecord<T>, ev: &TestFunctionEvaluator<T>, basis: &RadialBasis<T>) -> FunctionalTrace<T> {
    let len = run.grid.len();
    let f = run
        .snapshots
        .par_iter()
        .map(|s| compute_f(ev, basis, &padded(&s.u, len), s.t))
        .collect();
    FunctionalTrace {
        q: ev.q(),
        times: run.snapshots.iter().map(|s| s.t).collect(),
        f,
    }
}

/// Default end of the pre-blow-up window: three quarters of the first
/// blow-up estimate, or the whole run.
pub fn default_window_end<T: Scalar>(run: &RunRecord<T>) -> T {
    match (run.termination, &run.blowup) {
        (Termination::Blowup, Some(b)) => b.t_lo * lit(0.75),
        _ => run.t_final(),
    }
}

/// One checked time of the averaged identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityRow<T> {
    pub t: T,
    /// `F(t)`.
    pub lhs: T,
    /// `eps \int u_0 xi_q(., t)`.
    pub position_term: T,
    /// `eps t \int u_1 eta_q(., t, 0)`.
    pub velocity_term: T,
    /// `\int_0^t (t - s) \int |u|^p eta_q(., t, s) dx ds`.
    pub source_term: T,
    pub rhs: T,
    pub residual: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck<T> {
    pub rows: Vec<IdentityRow<T>>,
    pub max_residual: T,
    pub tolerance: T,
    pub pass: bool,
}

impl<T: Scalar> IdentityCheck<T> {
    /// Largest `C_1, C_2` with `position_term >= C_1 eps` and
    /// `velocity_term >= C_2 eps t / <t>` on the checked times.
    pub fn data_constants(&self, eps: T) -> (T, T) {
        let c_1 = self.rows.iter().map(|r| r.position_term / eps).fold(T::infinity(), T::min);
        let c_2 = self
            .rows
            .iter()
            .map(|r| r.velocity_term * bracket(r.t) / (eps * r.t))
            .fold(T::infinity(), T::min);
        (c_1, c_2)
    }
}

/// Compares `F(t)` with the data and source terms at every snapshot in
/// `(0, window_end]`. The source integral is the trapezoid rule over the
/// snapshots, so the cadence must resolve the window.
pub fn check_identity<T: Scalar>(
    run: &RunRecord<T>,
    ev: &TestFunctionEvaluator<T>,
    basis: &RadialBasis<T>,
    window_end: T,
    tolerance: T,
) -> Result<IdentityCheck<T>> {
    let snaps: Vec<_> = run.snapshots.iter().filter(|s| s.t <= window_end).collect();
    if snaps.len() < MIN_SNAPSHOTS {
        return Err(Error::InsufficientSnapshots(format!(
            "{} snapshots in [0, {window_end}], need {MIN_SNAPSHOTS}; lower snapshot_dt",
            snaps.len()
        )));
    }
    let len = run.grid.len();
    let grid = run.grid;
    let eps = run.data.eps;
    let sample = |g: &dyn Fn(T) -> T| (0..len).map(|i| eps * g(grid.r(i))).collect::<Vec<T>>();
    let u0 = sample(&|r| run.data.u0.eval(r));
    let u1 = sample(&|r| run.data.u1.eval(r));
    let m_u0 = ev.moments(basis, &u0, T::zero());
    let m_u1 = ev.moments(basis, &u1, T::zero());

    let source_moments: Vec<Option<LambdaMoments<T>>> = snaps
        .par_iter()
        .map(|s| match run.nonlinearity {
            Nonlinearity::Power { p } => {
                let f: Vec<T> = padded(&s.u, len).iter().map(|v| v.abs().powf(p)).collect();
                Some(ev.moments(basis, &f, s.t))
            }
            Nonlinearity::Off => None,
        })
        .collect();
    let lhs: Vec<T> = snaps
        .par_iter()
        .map(|s| compute_f(ev, basis, &padded(&s.u, len), s.t))
        .collect();

    let rows: Vec<IdentityRow<T>> = (1..snaps.len())
        .map(|k| {
            let t = snaps[k].t;
            let mut source = T::zero();
            for j in 0..k {
                let h = snaps[j + 1].t - snaps[j].t;
                let g = |i: usize| source_moments[i].as_ref().map_or(T::zero(), |m| ev.pair_eta_times_gap(m, t));
                source = source + h * (g(j) + g(j + 1)) / lit(2.0);
            }
            let position_term = ev.pair_xi(&m_u0, t);
            let velocity_term = t * ev.pair_eta(&m_u1, t);
            let rhs = position_term + velocity_term + source;
            IdentityRow {
                t,
                lhs: lhs[k],
                position_term,
                velocity_term,
                source_term: source,
                rhs,
                residual: if lhs[k] == rhs { T::zero() } else { (lhs[k] - rhs).abs() / rhs.abs() },
            }
        })
        .collect();
    let max_residual = rows.iter().map(|r| r.residual).fold(T::zero(), T::max);
    Ok(IdentityCheck {
        rows,
        max_residual,
        tolerance,
        pass: max_residual <= tolerance,
    })
}

/// Outcome of the frame inequality
/// `F(t) >= C <t>^{-1} \int_0^t (t-s) <s>^{-1} F(s)^p (log <s>)^{1-p} ds`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameCheck<T> {
    /// Largest admissible `C` over the window; infinite when the right side
    /// vanishes identically.
    pub c_frame: T,
    /// Time at which `C` is attained.
    pub t_min: T,
    /// `(n-1)p/2 - (n-1)/2 - 1/p`, equal to one at the critical power.
    pub exponent_identity: T,
    /// The right side vanished everywhere, so the inequality holds trivially.
    pub trivial: bool,
    pub pass: bool,
}

/// Fits the frame constant on a trace computed with the critical `q`.
pub fn check_frame_inequality<T: Scalar>(trace: &FunctionalTrace<T>, p: T, n: usize, window_end: T) -> Result<FrameCheck<T>> {
    let q = critical_q(p, n);
    if (trace.q - q).abs() > lit::<T>(1e-9) * q.abs().max(T::one()) {
        return Err(Error::InvalidParameter(format!(
            "frame inequality needs q = (n-1)/2 - 1/p = {q}, trace has q = {}",
            trace.q
        )));
    }
    let exponent_identity = critical_identity(p, n);
    let k_end = trace.times.iter().rposition(|t| *t <= window_end).map_or(0, |k| k + 1);
    let times = &trace.times[..k_end];
    let weight: Vec<T> = times
        .iter()
        .zip(&trace.f)
        .map(|(&s, &f)| f.max(T::zero()).powf(p) / (bracket(s) * bracket(s).ln().powf(p - T::one())))
        .collect();
    let mut c_frame = T::infinity();
    let mut t_min = T::zero();
    for k in 1..times.len() {
        let t = times[k];
        let mut acc = T::zero();
        for j in 0..k {
            let h = times[j + 1] - times[j];
            acc = acc + h * ((t - times[j]) * weight[j] + (t - times[j + 1]) * weight[j + 1]) / lit(2.0);
        }
        let rhs = acc / bracket(t);
        if rhs > T::zero() {
            let ratio = trace.f[k] / rhs;
            if ratio < c_frame {
                c_frame = ratio;
                t_min = t;
            }
        }
    }
    let trivial = c_frame == T::infinity();
    Ok(FrameCheck {
        c_frame,
        t_min,
        exponent_identity,
        trivial,
        pass: trivial || (c_frame > T::zero() && c_frame.is_finite()),
    })
}

/// Fitted `C_0` in `\int |u|^p >= C_0 eps^p <t>^{n-1-(n-1)p/2}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LpLowerBound<T> {
    pub c_0: T,
    pub eps: T,
    pub p: T,
    pub window: (T, T),
    /// `C_0 = 0`, as for vanishing data.
    pub degenerate: bool,
}

/// Minimum of `\int |u|^p / (eps^p <t>^{n-1-(n-1)p/2})` over `window`. The
/// series must record the `L^p` integral with exponent `p`.
pub fn fit_lp_lower_bound<T: Scalar>(run: &RunRecord<T>, p: T, window: (T, T)) -> Result<LpLowerBound<T>> {
    if (run.lp_exponent - p).abs() > lit::<T>(1e-12) * p {
        return Err(Error::InvalidParameter(format!(
            "run records the L^{} integral, not L^{p}",
            run.lp_exponent
        )));
    }
    let n = run.dimension();
    let nm1 = lit::<T>((n - 1) as f64);
    let rate = nm1 - nm1 * p / lit(2.0);
    let eps = run.data.eps;
    let rows: Vec<&SeriesRow<T>> = run.series.iter().filter(|r| r.t >= window.0 && r.t <= window.1).collect();
    if rows.is_empty() {
        return Err(Error::InsufficientSnapshots(format!(
            "no series rows in [{}, {}]",
            window.0, window.1
        )));
    }
    let scale = eps.powf(p);
    let c_0 = if scale > T::zero() {
        rows.iter()
            .map(|r| r.lp_integral / (scale * bracket(r.t).powf(rate)))
            .fold(T::infinity(), T::min)
    } else {
        T::zero()
    };
    Ok(LpLowerBound {
        c_0,
        eps,
        p,
        window,
        degenerate: !(c_0 > T::zero()),
    })
}

/// Comparison of two `L^p` bounds at amplitudes `eps` and `eps / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LpScalingCheck<T> {
    /// `(C_0 (eps/2)^p) / (C_0 eps^p)` as measured.
    pub bound_ratio: T,
    /// `2^{-p}`.
    pub expected: T,
    pub relative_error: T,
    pub pass: bool,
}

pub fn check_lp_scaling<T: Scalar>(full: &LpLowerBound<T>, half: &LpLowerBound<T>, tolerance: T) -> LpScalingCheck<T> {
    let bound = |b: &LpLowerBound<T>| b.c_0 * b.eps.powf(b.p);
    let bound_ratio = bound(half) / bound(full);
    let expected = (full.eps / half.eps).powf(-full.p);
    let relative_error = (bound_ratio / expected - T::one()).abs();
    LpScalingCheck {
        bound_ratio,
        expected,
        relative_error,
        pass: !full.degenerate && !half.degenerate && relative_error <= tolerance,
    }
}

/// Domination of the iteration envelopes by the measured `F`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeCheck<T> {
    pub j: usize,
    /// Smallest `F(t) / envelope_j(t)` over the overlap window; infinite if
    /// the window is empty.
    pub min_ratio: T,
    pub samples: usize,
    pub pass: bool,
}

/// Checks `F(t) >= envelope_j(t)` for `t` in `(l_j, window_end]`.
pub fn check_envelope_domination<T: Scalar>(
    trace: &FunctionalTrace<T>,
    schedule: &IterationSchedule<T>,
    j: usize,
    window_end: T,
) -> Result<EnvelopeCheck<T>> {
    let l_j: T = slicing_point(j);
    let mut min_ratio = T::infinity();
    let mut samples = 0;
    for (&t, &f) in trace.times.iter().zip(&trace.f) {
        if t > l_j && t <= window_end {
            let env = schedule.envelope(t, j)?;
            min_ratio = min_ratio.min(f / env);
            samples += 1;
        }
    }
    Ok(EnvelopeCheck {
        j,
        min_ratio,
        samples,
        pass: samples > 0 && min_ratio >= T::one(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::RadialGrid;
    use crate::metric::MetricField;
    use crate::testfn::TestFunctionSpec;
    use crate::wavesolver::{run_until_blowup, InitialData, SolverConfig};
    use approx::assert_relative_eq;

    fn evaluator(m: &MetricField<f64>, p: f64) -> TestFunctionEvaluator<f64> {
        let n = m.dimension();
        TestFunctionEvaluator::new(m, TestFunctionSpec::new(critical_q(p, n), 2.0)).unwrap()
    }

    fn p3() -> f64 {
        1.0 + 2f64.sqrt()
    }

    #[test]
    fn zero_field_has_zero_functional() {
        let m = MetricField::flat(3).unwrap();
        let ev = evaluator(&m, p3());
        let grid = RadialGrid::new(5.0, 0.05).unwrap();
        let basis = ev.basis(&grid);
        assert_eq!(compute_f(&ev, &basis, &vec![0.0; grid.len()], 1.0), 0.0);
    }

    #[test]
    fn narrow_bump_samples_eta_at_origin() {
        let m = MetricField::exp_perturbed(3, 0.5, 1.0).unwrap();
        let ev = evaluator(&m, p3());
        let grid = RadialGrid::new(4.0, 0.002).unwrap();
        let basis = ev.basis(&grid);
        let u: Vec<f64> = (0..grid.len())
            .map(|i| {
                let x = grid.r(i) / 0.05;
                if x < 1.0 { (1.0 - x * x).powi(4) } else { 0.0 }
            })
            .collect();
        let t = 2.0;
        let f = compute_f(&ev, &basis, &u, t);
        let midpoint = basis.integrate(&u) * ev.eta(0.0, t, t).unwrap();
        assert_relative_eq!(f, midpoint, max_relative = 0.05);
        assert!(f > 0.0);
    }

    fn short_run(m: &MetricField<f64>, nl: Nonlinearity<f64>, eps: f64, dr: f64, snapshot_dt: f64, t_max: f64) -> RunRecord<f64> {
        let cfg = SolverConfig {
            dr,
            cfl: 0.5,
            t_max,
            snapshot_dt,
            bracket: false,
            ..SolverConfig::default()
        };
        run_until_blowup(&InitialData::bump(eps), m, nl, &cfg).unwrap()
    }

    #[test]
    fn linear_identity_holds_to_discretization_error() {
        let m = MetricField::exp_perturbed(3, 0.5, 1.0).unwrap();
        let ev = evaluator(&m, p3());
        let run = short_run(&m, Nonlinearity::Off, 0.1, 0.02, 0.1, 3.0);
        let basis = ev.basis(&run.grid);
        let check = check_identity(&run, &ev, &basis, 3.0, 0.01).unwrap();
        assert!(check.pass, "{}", check.max_residual);
        assert!(check.rows.iter().all(|r| r.source_term == 0.0));
        let (c_1, c_2) = check.data_constants(0.1);
        assert!(c_1 > 0.0 && c_2 > 0.0);
    }

    #[test]
    fn identity_residual_vanishes_as_t_goes_to_zero() {
        let m = MetricField::flat(3).unwrap();
        let ev = evaluator(&m, p3());
        let run = short_run(&m, Nonlinearity::Power { p: p3() }, 0.2, 0.02, 0.01, 0.1);
        let basis = ev.basis(&run.grid);
        let check = check_identity(&run, &ev, &basis, 0.1, 0.02).unwrap();
        let first = check.rows[0];
        assert_relative_eq!(first.lhs, first.position_term, max_relative = 1e-2);
        assert!(first.source_term < 1e-3 * first.rhs);
    }

    #[test]
    fn sparse_cadence_is_refused() {
        let m = MetricField::flat(3).unwrap();
        let ev = evaluator(&m, p3());
        let run = short_run(&m, Nonlinearity::Off, 0.1, 0.05, 0.5, 1.5);
        let basis = ev.basis(&run.grid);
        assert!(matches!(
            check_identity(&run, &ev, &basis, 1.5, 0.02),
            Err(Error::InsufficientSnapshots(_))
        ));
    }

    #[test]
    fn frame_inequality_on_zero_trace_is_trivial() {
        let p = p3();
        let trace = FunctionalTrace {
            q: critical_q(p, 3),
            times: (0..10).map(|k| k as f64 * 0.1).collect(),
            f: vec![0.0; 10],
        };
        let check = check_frame_inequality(&trace, p, 3, 1.0).unwrap();
        assert!(check.trivial && check.pass);
        assert!((check.exponent_identity - 1.0).abs() < 1e-12);
        let wrong_q = FunctionalTrace { q: 0.3, ..trace };
        assert!(check_frame_inequality(&wrong_q, p, 3, 1.0).is_err());
    }

    #[test]
    fn frame_constant_of_constant_trace_matches_closed_form() {
        // F = 1 gives J(t) = <t>^{-1} \int_0^t (t-s) / (<s> log<s>^{p-1}) ds.
        let p = 2.0;
        let n = 5;
        let times: Vec<f64> = (0..=4000).map(|k| k as f64 * 0.001).collect();
        let trace = FunctionalTrace {
            q: critical_q(p, n),
            f: vec![1.0; times.len()],
            times,
        };
        let check = check_frame_inequality(&trace, p, n, 4.0).unwrap();
        // Exact J(4) by a fine Simpson rule.
        let g = |s: f64| (4.0 - s) / ((3.0 + s) * (3.0 + s).ln());
        let h = 4.0 / 2000.0;
        let simpson: f64 = (0..=2000)
            .map(|k| {
                let w = if k == 0 || k == 2000 { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
                w * g(k as f64 * h)
            })
            .sum::<f64>()
            * h
            / 3.0;
        assert_relative_eq!(check.t_min, 4.0);
        assert_relative_eq!(check.c_frame, 7.0 / simpson, max_relative = 1e-6);
    }

    #[test]
    fn lp_bound_is_degenerate_for_zero_data() {
        let m = MetricField::flat(3).unwrap();
        let run = short_run(&m, Nonlinearity::Power { p: p3() }, 0.0, 0.05, 0.1, 1.0);
        let b = fit_lp_lower_bound(&run, p3(), (0.0, 1.0)).unwrap();
        assert!(b.degenerate);
        assert!(fit_lp_lower_bound(&run, 2.0, (0.0, 1.0)).is_err());
    }

    #[test]
    fn lp_bound_scales_like_eps_to_the_p_in_the_linear_regime() {
        let m = MetricField::flat(3).unwrap();
        let p = p3();
        let a = short_run(&m, Nonlinearity::Power { p }, 0.02, 0.05, 0.1, 8.0);
        let b = short_run(&m, Nonlinearity::Power { p }, 0.01, 0.05, 0.1, 8.0);
        let fa = fit_lp_lower_bound(&a, p, (0.0, 8.0)).unwrap();
        let fb = fit_lp_lower_bound(&b, p, (0.0, 8.0)).unwrap();
        let check = check_lp_scaling(&fa, &fb, 0.2);
        assert!(check.pass, "{check:?}");
        assert!(check.relative_error < 0.01);
    }
}
