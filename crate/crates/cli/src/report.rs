//! Verification reports shared by `verify`, `lifespan` and `simulate`.

use blowuplab_core::functional::{
    check_envelope_domination, check_frame_inequality, check_identity, default_window_end, fit_lp_lower_bound,
    functional_trace, EnvelopeCheck, FrameCheck, FunctionalTrace, IdentityRow, LpLowerBound,
};
use blowuplab_core::iteration::{
    build_schedule, lifespan_bound, sequence_identities_hold, IterationConstants, LifespanBound,
};
use blowuplab_core::metric::MetricField;
use blowuplab_core::testfn::{fit_lemma31_constants, Lemma31Constants, Lemma31Grid, TestFunctionEvaluator, TestFunctionSpec};
use blowuplab_core::wavesolver::{Nonlinearity, RunRecord};
use blowuplab_core::Rational;
use serde::{Deserialize, Serialize};

use crate::config::Resolved;
use crate::output::SCHEMA_VERSION;
use crate::CliError;

/// Steps of the iteration that are tabulated and checked.
pub const J_MAX: usize = 30;

fn core(e: blowuplab_core::Error) -> CliError {
    CliError::Core(e)
}

pub fn evaluator(spec: TestFunctionSpec<f64>, metric: &MetricField<f64>) -> Result<TestFunctionEvaluator<f64>, CliError> {
    TestFunctionEvaluator::new(metric, spec).map_err(core)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestfnReport {
    pub schema_version: u32,
    pub q: f64,
    pub lambda_0: f64,
    pub lambda_0_shrinks: usize,
    pub constants: Lemma31Constants<f64>,
    pub pass: bool,
}

pub fn testfn_report(resolved: &Resolved) -> Result<TestfnReport, CliError> {
    let ev = evaluator(resolved.testfn, &resolved.metric)?;
    let constants = fit_lemma31_constants(&ev, &Lemma31Grid::default()).map_err(core)?;
    Ok(TestfnReport {
        schema_version: SCHEMA_VERSION,
        q: ev.q(),
        lambda_0: ev.lambda_0(),
        lambda_0_shrinks: ev.lambda_0_shrinks(),
        pass: constants.pass,
        constants,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdentitySummary {
    pub max_residual: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub rows: Vec<IdentityRow<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FunctionalReport {
    pub schema_version: u32,
    pub run_hash: Option<String>,
    pub q: f64,
    pub window_end: f64,
    pub f_min: f64,
    /// Snapshot times with `F <= 0`.
    pub f_nonpositive: Vec<f64>,
    pub identity: IdentitySummary,
    /// Absent when `q` is not the critical value.
    pub frame: Option<FrameCheck<f64>>,
    pub lp: LpLowerBound<f64>,
    /// `C_1(u_0)`, `C_2(u_1)` of the data terms.
    pub c_1: f64,
    pub c_2: f64,
    pub pass: bool,
}

/// Everything computed from one run that later stages reuse.
pub struct FunctionalAnalysis {
    pub report: FunctionalReport,
    pub trace: FunctionalTrace<f64>,
    pub ev: TestFunctionEvaluator<f64>,
}

pub fn functional_analysis(resolved: &Resolved, run: &RunRecord<f64>) -> Result<FunctionalAnalysis, CliError> {
    let spec = TestFunctionSpec {
        r_support: run.config.r_support,
        ..resolved.testfn
    };
    let ev = evaluator(spec, &run.metric)?;
    let basis = ev.basis(&run.grid);
    let window_end = default_window_end(run);
    let (p, tolerance) = match run.nonlinearity {
        Nonlinearity::Power { p } => (p, 0.02),
        Nonlinearity::Off => (resolved.p, 0.01),
    };
    let identity = check_identity(run, &ev, &basis, window_end, tolerance).map_err(core)?;
    let (c_1, c_2) = identity.data_constants(run.data.eps);
    let trace = functional_trace(run, &ev, &basis);
    let frame = check_frame_inequality(&trace, p, run.dimension(), window_end).ok();
    let lp = fit_lp_lower_bound(run, run.lp_exponent, (0.0, window_end)).map_err(core)?;
    let f_nonpositive = trace.nonpositive_times();
    let f_min = trace.f.iter().cloned().fold(f64::INFINITY, f64::min);
    let pass = identity.pass && frame.is_some_and(|f| f.pass) && !lp.degenerate && f_nonpositive.is_empty();
    let report = FunctionalReport {
        schema_version: SCHEMA_VERSION,
        run_hash: run.config_hash.clone(),
        q: ev.q(),
        window_end,
        f_min,
        f_nonpositive,
        identity: IdentitySummary {
            max_residual: identity.max_residual,
            tolerance,
            pass: identity.pass,
            rows: identity.rows,
        },
        frame,
        lp,
        c_1,
        c_2,
        pass,
    };
    Ok(FunctionalAnalysis { report, trace, ev })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstantsSource {
    /// Placeholder constants; only the structural checks are meaningful.
    Unit,
    Flags,
    Report,
    Measured,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationReport {
    pub schema_version: u32,
    pub p: f64,
    pub eps: f64,
    pub constants: IterationConstants<f64>,
    pub constants_source: ConstantsSource,
    pub j_max: usize,
    pub log_c: Vec<f64>,
    pub closed_form_deviation: f64,
    pub sequence_identities_exact: bool,
    /// `|envelope_0 / (M eps^p log(t / 1.5)) - 1|` on sample times.
    pub first_step_error: f64,
    pub lifespan: LifespanBound<f64>,
    /// Present when a run was supplied. Steps whose slicing point lies past
    /// the window have no samples and do not enter `pass`.
    pub domination: Vec<EnvelopeCheck<f64>>,
    pub pass: bool,
}

pub fn iteration_report(
    p: f64,
    eps: f64,
    constants: IterationConstants<f64>,
    source: ConstantsSource,
    trace: Option<(&FunctionalTrace<f64>, f64)>,
) -> Result<IterationReport, CliError> {
    let schedule = build_schedule(p, constants, eps, J_MAX).map_err(core)?;
    let closed_form_deviation = schedule.closed_form_deviation();
    let exact = Rational::from_float(p).is_some_and(|r| sequence_identities_hold(&r, J_MAX));
    let mut first_step_error = 0.0f64;
    for t in [1.6f64, 2.0, 4.0, 100.0] {
        let expected = schedule.m * eps.powf(p) * (t / 1.5f64).ln();
        first_step_error = first_step_error.max((schedule.envelope(t, 0).map_err(core)? / expected - 1.0).abs());
    }
    let lifespan = lifespan_bound(&schedule, eps).map_err(core)?;
    let domination = match trace {
        Some((trace, window_end)) => (0..=2)
            .map(|j| check_envelope_domination(trace, &schedule, j, window_end).map_err(core))
            .collect::<Result<Vec<_>, _>>()?,
        None => Vec::new(),
    };
    let pass = closed_form_deviation <= 1e-9
        && exact
        && first_step_error <= 1e-12
        && domination.iter().filter(|d| d.samples > 0).all(|d| d.pass);
    Ok(IterationReport {
        schema_version: SCHEMA_VERSION,
        p,
        eps,
        constants,
        constants_source: source,
        j_max: J_MAX,
        log_c: schedule.log_c.clone(),
        closed_form_deviation,
        sequence_identities_exact: exact,
        first_step_error,
        lifespan,
        domination,
        pass,
    })
}

/// Iteration constants measured from one run: `C_frame` and `C_0` from the
/// functional checks, `B_1` from the test-function fit.
pub fn measured_constants(analysis: &FunctionalAnalysis) -> Result<IterationConstants<f64>, CliError> {
    let frame = analysis
        .report
        .frame
        .ok_or_else(|| CliError::Other("frame constant needs the critical q".into()))?;
    let b_1 = fit_lemma31_constants(&analysis.ev, &Lemma31Grid::default()).map_err(core)?.b_1.value;
    let constants = IterationConstants {
        c_frame: frame.c_frame,
        c_0: analysis.report.lp.c_0,
        b_1,
    };
    let ok = |x: f64| x > 0.0 && x.is_finite();
    if !(ok(constants.c_frame) && ok(constants.c_0) && ok(constants.b_1)) {
        return Err(CliError::Other(format!(
            "run yields degenerate constants {constants:?}; use a run with nonzero data"
        )));
    }
    Ok(constants)
}
