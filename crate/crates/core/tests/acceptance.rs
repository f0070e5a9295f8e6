//! Acceptance suite: one line per criterion, nonzero exit if any fails.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use blowuplab_core::eigenfunction::{build_table, default_r_max, TableOptions};
use blowuplab_core::functional::{
    check_envelope_domination, check_frame_inequality, check_identity, check_lp_scaling, default_window_end,
    fit_lp_lower_bound, functional_trace, FunctionalTrace,
};
use blowuplab_core::grid::RadialGrid;
use blowuplab_core::iteration::{
    build_schedule, critical_identity, critical_q, exponent_a, exponent_b, lifespan_bound, slicing_point,
    strauss_exponent, strauss_gamma, IterationConstants,
};
use blowuplab_core::metric::MetricField;
use blowuplab_core::special::phi_flat;
use blowuplab_core::testfn::{fit_lemma31_constants, Lemma31Constants, Lemma31Grid, TestFunctionEvaluator, TestFunctionSpec};
use blowuplab_core::wavesolver::{run_until_blowup, InitialData, Nonlinearity, RunRecord, SolverConfig, Termination};
use blowuplab_core::Rational;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn p3() -> f64 {
    strauss_exponent::<f64>(3).unwrap().p0
}

fn critical_evaluator(metric: &MetricField<f64>) -> TestFunctionEvaluator<f64> {
    let n = metric.dimension();
    let p = strauss_exponent::<f64>(n).unwrap().p0;
    TestFunctionEvaluator::new(metric, TestFunctionSpec::new(critical_q(p, n), 2.0)).unwrap()
}

fn critical_run(eps: f64, dr: f64, snapshot_dt: f64) -> RunRecord<f64> {
    let cfg = SolverConfig {
        dr,
        snapshot_dt,
        ..SolverConfig::default()
    };
    run_until_blowup(&InitialData::bump(eps), &MetricField::flat(3).unwrap(), Nonlinearity::Power { p: p3() }, &cfg).unwrap()
}

fn criterion_1() -> Outcome {
    let p3 = strauss_exponent::<f64>(3).unwrap().p0;
    let p2 = strauss_exponent::<f64>(2).unwrap().p0;
    let e3 = (p3 - (1.0 + 2f64.sqrt())).abs();
    let e2 = (p2 - (3.0 + 17f64.sqrt()) / 2.0).abs();
    let g = strauss_gamma(p3, 3).abs().max(strauss_gamma(p2, 2).abs());
    let ident = (2..=8)
        .map(|n| (critical_identity(strauss_exponent::<f64>(n).unwrap().p0, n) - 1.0).abs())
        .fold(0.0, f64::max);
    outcome(
        e3 <= 1e-12 && e2 <= 1e-12 && g <= 1e-12 && ident <= 1e-12,
        format!("p0(3) err {e3:.1e}, p0(2) err {e2:.1e}, max |gamma| {g:.1e}, identity err n=2..8 {ident:.1e}"),
    )
}

// Direct quadrature of \int_{S^{n-1}} e^{r w_1} dw.
fn sphere_oracle(n: usize, r: f64) -> f64 {
    match n {
        2 => {
            let m = 4000;
            (0..m).map(|k| (r * (2.0 * PI * k as f64 / m as f64).cos()).exp()).sum::<f64>() * 2.0 * PI / m as f64
        }
        3 => {
            let m = 40000;
            let h = PI / m as f64;
            let f = |th: f64| (r * th.cos()).exp() * th.sin();
            let s: f64 = (0..=m)
                .map(|k| {
                    let w = if k == 0 || k == m { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
                    w * f(k as f64 * h)
                })
                .sum();
            2.0 * PI * s * h / 3.0
        }
        _ => unreachable!(),
    }
}

fn criterion_2() -> Outcome {
    let mut closed = 0.0f64;
    for k in 0..=3000 {
        let r = k as f64 * 0.01;
        let exact = if r == 0.0 { 4.0 * PI } else { 4.0 * PI * r.sinh() / r };
        closed = closed.max((phi_flat(3, r).unwrap() / exact - 1.0).abs());
    }
    let mut quad = 0.0f64;
    for n in [2, 3] {
        for k in 0..=60 {
            let r = k as f64 * 0.5;
            quad = quad.max((phi_flat(n, r).unwrap() / sphere_oracle(n, r) - 1.0).abs());
        }
    }
    outcome(
        closed <= 1e-10 && quad <= 1e-8,
        format!("n=3 vs 4pi sinh(r)/r rel err {closed:.1e}, sphere quadrature rel err {quad:.1e}"),
    )
}

fn criterion_3() -> Outcome {
    let m = MetricField::exp_perturbed(3, 0.5, 1.0).unwrap();
    let grid = RadialGrid::new(default_r_max(&m), 0.01).unwrap();
    let table = build_table(&m, &[0.0125, 0.025, 0.05, 0.1], &grid, TableOptions::default()).unwrap();
    let theta = table.theta_fit().unwrap_or(f64::NAN);
    let (d0, d1) = (table.d0(), table.d1());
    outcome(
        theta > 0.0 && d0 > 0.0 && d1.is_finite() && d0 <= d1,
        format!("theta_fit {theta:.3}, D0 {d0:.4}, D1 {d1:.4}"),
    )
}

fn lemma31_values(c: &Lemma31Constants<f64>) -> [f64; 4] {
    [c.a_0.value, c.b_0.value, c.b_1.value, c.b_2.value]
}

fn criterion_4() -> Outcome {
    let m = MetricField::exp_perturbed(3, 0.5, 1.0).unwrap();
    let p = p3();
    let spec = TestFunctionSpec::new(critical_q(p, 3), 2.0);
    let grid = Lemma31Grid::default();
    let base = fit_lemma31_constants(&TestFunctionEvaluator::new(&m, spec.clone()).unwrap(), &grid).unwrap();
    let fine_spec = TestFunctionSpec {
        lambda_grid: spec.lambda_grid.doubled(),
        ..spec
    };
    let fine = fit_lemma31_constants(&TestFunctionEvaluator::new(&m, fine_spec).unwrap(), &grid).unwrap();
    let (a, b) = (lemma31_values(&base), lemma31_values(&fine));
    let drift = a.iter().zip(&b).map(|(x, y)| ((x - y) / x).abs()).fold(0.0, f64::max);
    let positive = a.iter().all(|v| *v > 0.0 && v.is_finite());
    let t_top = grid.t_values.iter().cloned().fold(0.0, f64::max);
    outcome(
        base.pass && positive && drift <= 1e-8 && t_top >= 1e3,
        format!(
            "A0 {:.4e} B0 {:.4e} B1 {:.4e} B2 {:.4e}, t up to {t_top}, lambda-doubling drift {drift:.1e}",
            a[0], a[1], a[2], a[3]
        ),
    )
}

fn criterion_5() -> Outcome {
    let m = MetricField::flat(3).unwrap();
    let ev = critical_evaluator(&m);
    let residual = |dr: f64, ds: f64| {
        let run = critical_run(0.5, dr, ds);
        let basis = ev.basis(&run.grid);
        check_identity(&run, &ev, &basis, default_window_end(&run), 0.02).unwrap().max_residual
    };
    let coarse = residual(0.02, 0.05);
    let fine = residual(0.01, 0.025);
    let cfg = SolverConfig {
        t_max: 4.0,
        ..SolverConfig::default()
    };
    let linear = run_until_blowup(&InitialData::bump(0.5), &m, Nonlinearity::Off, &cfg).unwrap();
    let basis = ev.basis(&linear.grid);
    let lin = check_identity(&linear, &ev, &basis, 4.0, 0.01).unwrap().max_residual;
    outcome(
        coarse <= 0.02 && coarse / fine >= 2.0 && lin <= 0.01,
        format!(
            "nonlinear residual {coarse:.2e} -> {fine:.2e} (x{:.2}) under halving, linear residual {lin:.2e}",
            coarse / fine
        ),
    )
}

struct CriticalFit {
    trace: FunctionalTrace<f64>,
    window_end: f64,
    c_frame: f64,
    c_0: f64,
    b_1: f64,
}

fn criterion_6(fit: &CriticalFit) -> Outcome {
    let m = MetricField::flat(3).unwrap();
    let ev = critical_evaluator(&m);
    let run = critical_run(0.5, 0.01, 0.025);
    let basis = ev.basis(&run.grid);
    let trace = functional_trace(&run, &ev, &basis);
    let fine = check_frame_inequality(&trace, p3(), 3, fit.window_end).unwrap();
    let spread = (fine.c_frame / fit.c_frame - 1.0).abs();
    let nonpositive = fit.trace.nonpositive_times().len() + trace.nonpositive_times().len();
    outcome(
        fit.c_frame > 0.0 && fine.pass && spread <= 0.2 && nonpositive == 0,
        format!("C_frame {:.4} vs {:.4} refined ({:.1}% apart), F > 0 at every snapshot", fit.c_frame, fine.c_frame, 100.0 * spread),
    )
}

fn criterion_7() -> Outcome {
    let p = p3();
    let cfg = SolverConfig {
        t_max: 10.0,
        ..SolverConfig::default()
    };
    let fit = |eps: f64| {
        let run = run_until_blowup(&InitialData::bump(eps), &MetricField::flat(3).unwrap(), Nonlinearity::Power { p }, &cfg).unwrap();
        fit_lp_lower_bound(&run, p, (0.0, 10.0)).unwrap()
    };
    let (full, half) = (fit(0.1), fit(0.05));
    let check = check_lp_scaling(&full, &half, 0.2);
    outcome(
        check.pass,
        format!(
            "C_0 {:.4} (eps 0.1), {:.4} (eps 0.05), bound ratio {:.4} vs 2^-p {:.4} ({:.1}% off)",
            full.c_0,
            half.c_0,
            check.bound_ratio,
            check.expected,
            100.0 * check.relative_error
        ),
    )
}

fn criterion_8(fit: &CriticalFit) -> Outcome {
    let p = p3();
    let constants = IterationConstants {
        c_frame: fit.c_frame,
        c_0: fit.c_0,
        b_1: fit.b_1,
    };
    let schedule = build_schedule(p, constants, 0.5, 30).unwrap();
    let closed = schedule.closed_form_deviation();

    let one = Rational::from_integer(1.into());
    let mut exact = true;
    for p in [Rational::new(3.into(), 2.into()), Rational::from_integer(2.into()), Rational::new(5.into(), 2.into())] {
        for j in 0..=30usize {
            exact &= exponent_a(&p, j + 1) == p.clone() * exponent_a(&p, j) + one.clone();
            exact &= exponent_b(&p, j + 1) == p.clone() * exponent_b(&p, j) + p.clone() - one.clone();
        }
    }
    for j in 0..=30usize {
        let l: Rational = slicing_point(j);
        let l_next: Rational = slicing_point(j + 1);
        exact &= l_next.clone() - l.clone() == Rational::new(1.into(), (1u64 << (j + 2)).into());
        exact &= one.clone() - l / l_next >= Rational::new(1.into(), (1u64 << (j + 3)).into());
    }

    let first_step = [1.6, 2.0, 3.0, 4.0]
        .iter()
        .map(|&t| (schedule.envelope(t, 0).unwrap() / (schedule.m * 0.5f64.powf(p) * (t / 1.5).ln()) - 1.0).abs())
        .fold(0.0, f64::max);

    let mut dominated = true;
    let mut ratios = Vec::new();
    for j in 0..=2 {
        let c = check_envelope_domination(&fit.trace, &schedule, j, fit.window_end).unwrap();
        dominated &= c.pass;
        ratios.push(format!("j={j}: {:.3e} ({} pts)", c.min_ratio, c.samples));
    }
    outcome(
        closed <= 1e-9 && exact && first_step <= 1e-12 && dominated,
        format!(
            "closed-form dev {closed:.1e}, rational identities {}, first-step form err {first_step:.1e}, min F/envelope {}",
            if exact { "exact" } else { "BROKEN" },
            ratios.join(", ")
        ),
    )
}

fn criterion_9(fit: &CriticalFit) -> Outcome {
    let mut times = Vec::new();
    let mut widths = Vec::new();
    let mut all_blow = true;
    for eps in [1.0, 0.8, 0.6] {
        let run = critical_run(eps, 0.02, 0.05);
        match (run.termination, run.blowup) {
            (Termination::Blowup, Some(b)) => {
                times.push(b.estimate);
                widths.push(b.relative_width());
                all_blow &= b.estimates.len() == 3;
            }
            _ => {
                all_blow = false;
                times.push(f64::NAN);
                widths.push(f64::NAN);
            }
        }
    }
    let monotone = times.windows(2).all(|w| w[0] <= w[1]);
    let tight = widths.iter().all(|w| *w <= 0.05);

    let p = p3();
    let constants = IterationConstants {
        c_frame: fit.c_frame,
        c_0: fit.c_0,
        b_1: fit.b_1,
    };
    let schedule = build_schedule(p, constants, 0.5, 30).unwrap();
    let linearity = (0..8)
        .map(|k| {
            let eps = 1.0 - 0.1 * k as f64;
            let b = lifespan_bound(&schedule, eps).unwrap();
            (b.log_t_bound / eps.powf(-p * (p - 1.0)) / b.k_eff - 1.0).abs()
        })
        .fold(0.0, f64::max);
    outcome(
        all_blow && monotone && tight && linearity <= 1e-12,
        format!(
            "T_eps {:.4} / {:.4} / {:.4} for eps 1.0 / 0.8 / 0.6, bracket widths {:.2}% / {:.2}% / {:.2}%, log T_bound linearity err {linearity:.1e}",
            times[0],
            times[1],
            times[2],
            100.0 * widths[0],
            100.0 * widths[1],
            100.0 * widths[2]
        ),
    )
}

fn critical_fit() -> CriticalFit {
    let m = MetricField::flat(3).unwrap();
    let p = p3();
    let ev = critical_evaluator(&m);
    let run = critical_run(0.5, 0.02, 0.05);
    let basis = ev.basis(&run.grid);
    let window_end = default_window_end(&run);
    let trace = functional_trace(&run, &ev, &basis);
    let frame = check_frame_inequality(&trace, p, 3, window_end).unwrap();
    let lp = fit_lp_lower_bound(&run, p, (0.0, window_end)).unwrap();
    let l31 = fit_lemma31_constants(&ev, &Lemma31Grid::default()).unwrap();
    CriticalFit {
        trace,
        window_end,
        c_frame: frame.c_frame,
        c_0: lp.c_0,
        b_1: l31.b_1.value,
    }
}

fn main() -> ExitCode {
    let start = Instant::now();
    let fit = critical_fit();
    let results = [
        criterion_1(),
        criterion_2(),
        criterion_3(),
        criterion_4(),
        criterion_5(),
        criterion_6(&fit),
        criterion_7(),
        criterion_8(&fit),
        criterion_9(&fit),
    ];
    let mut failed = 0;
    for (k, r) in results.iter().enumerate() {
        println!("criterion {}: {} | {}", k + 1, if r.pass { "PASS" } else { "FAIL" }, r.detail);
        failed += usize::from(!r.pass);
    }
    println!("acceptance: {}/{} passed in {:.1?}", results.len() - failed, results.len(), start.elapsed());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
