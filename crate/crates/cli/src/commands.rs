use std::io::Write;
use std::path::{Path, PathBuf};

use blowuplab_core::eigenfunction::{build_table, default_r_max, TableOptions};
use blowuplab_core::functional::functional_trace;
use blowuplab_core::grid::RadialGrid;
use blowuplab_core::iteration::{build_schedule, lifespan_bound, IterationConstants};
use blowuplab_core::wavesolver::{run_until_blowup, Nonlinearity, RunRecord, Termination};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Resolved};
use crate::output::{
    config_hash, content_hash, ensure_dir, num, out_dir, read_text, write_csv, write_csv_file, write_json, SCHEMA_VERSION,
};
use crate::report::{
    evaluator, functional_analysis, iteration_report, measured_constants, testfn_report, ConstantsSource, FunctionalReport,
    IterationReport, TestfnReport, J_MAX,
};
use crate::{CliError, Common, ConstantFlags, Target};

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig, CliError> {
    match path {
        Some(p) => ExperimentConfig::from_json(&read_text(p)?),
        None => Ok(ExperimentConfig::default()),
    }
}

fn stdout_csv(header: &[&str], rows: Vec<Vec<String>>) -> Result<(), CliError> {
    let stdout = std::io::stdout();
    write_csv(stdout.lock(), header, rows).map_err(|e| CliError::Other(e.to_string()))
}

fn print_json<S: Serialize>(value: &S) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Other(e.to_string()))?;
    writeln!(std::io::stdout(), "{text}").map_err(|e| CliError::Other(e.to_string()))
}

#[derive(Serialize)]
struct EigenKey<'a> {
    config: &'a ExperimentConfig,
    lambdas: &'a [f64],
    dr: f64,
}

#[derive(Serialize)]
struct EigenSummary {
    schema_version: u32,
    lambdas: Vec<f64>,
    dr: f64,
    r_max: f64,
    d0: f64,
    d1: f64,
    theta_fit: Option<f64>,
    psi_sup_norms: Vec<f64>,
    max_solver_residual: f64,
}

pub fn eigen(common: &Common, lambdas: &[f64], dr: f64) -> Result<(), CliError> {
    let config = load_config(common.config.as_deref())?;
    let resolved = config.resolve()?;
    let mut ladder = lambdas.to_vec();
    if ladder.is_empty() || ladder.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
        return Err(CliError::Config("lambdas must be positive".into()));
    }
    ladder.sort_by(f64::total_cmp);
    ladder.dedup();
    let metric = resolved.metric;
    let grid = RadialGrid::new(default_r_max(&metric), dr).map_err(|e| CliError::Config(e.to_string()))?;
    let table = build_table(&metric, &ladder, &grid, TableOptions::default())?;

    let hash = content_hash(&EigenKey {
        config: &config,
        lambdas: &ladder,
        dr,
    });
    let dir = out_dir(common.out.as_deref(), Some(&config)).join("eigen").join(&hash);
    ensure_dir(&dir)?;
    let rows = (0..ladder.len()).flat_map(|k| {
        let phi = table.phi_lambda(k);
        let psi = table.psi(k);
        let lambda = ladder[k];
        (0..grid.len()).map(move |i| vec![num(lambda), num(grid.r(i)), num(phi[i]), num(psi[i])])
    });
    write_csv_file(&dir.join("table.csv"), &["lambda", "r", "phi_lambda", "psi"], rows)?;
    let summary = EigenSummary {
        schema_version: SCHEMA_VERSION,
        lambdas: ladder,
        dr,
        r_max: grid.r_max(),
        d0: table.d0(),
        d1: table.d1(),
        theta_fit: table.theta_fit(),
        psi_sup_norms: table.psi_sup_norms(),
        max_solver_residual: table.max_solver_residual(),
    };
    write_json(&dir.join("summary.json"), &summary)?;
    println!(
        "D0 = {}, D1 = {}, theta_fit = {}",
        summary.d0,
        summary.d1,
        summary.theta_fit.map_or("n/a".to_string(), |t| t.to_string())
    );
    println!("{}", dir.display());
    Ok(())
}

pub fn testfn(common: &Common, xs: &[f64], ts: &[f64], ss: &[f64]) -> Result<(), CliError> {
    let resolved = load_config(common.config.as_deref())?.resolve()?;
    let ev = evaluator(resolved.testfn, &resolved.metric)?;
    let mut rows = Vec::new();
    for &x in xs {
        for &t in ts {
            let s_values: Vec<f64> = if ss.is_empty() { vec![t] } else { ss.iter().cloned().filter(|s| *s <= t).collect() };
            for s in s_values {
                let eta = ev.eta(x, t, s).map_err(|e| CliError::Config(e.to_string()))?;
                rows.push(vec![num(x), num(t), num(s), num(ev.xi(x, t)), num(eta)]);
            }
        }
    }
    stdout_csv(&["x", "t", "s", "xi", "eta"], rows)
}

/// Runs one experiment and writes `config.json`, `record.json` and
/// `series.csv` under `runs/<hash>/`.
fn simulate_one(resolved: &Resolved, root: &Path) -> Result<(String, PathBuf, RunRecord<f64>), CliError> {
    let hash = config_hash(&resolved.config);
    let mut run = run_until_blowup(&resolved.data, &resolved.metric, resolved.nonlinearity(), &resolved.solver)?;
    run.config_hash = Some(hash.clone());
    let ev = evaluator(resolved.testfn, &resolved.metric)?;
    let trace = functional_trace(&run, &ev, &ev.basis(&run.grid));

    let dir = root.join("runs").join(&hash);
    ensure_dir(&dir)?;
    let mut stored = resolved.config.clone();
    stored.output_dir = None;
    write_json(&dir.join("config.json"), &stored)?;
    write_json(&dir.join("record.json"), &run)?;
    let rows = run.series.iter().zip(&trace.f).map(|(r, f)| {
        vec![
            num(r.t),
            num(r.max_abs_u),
            num(r.l2_norm),
            num(r.lp_integral),
            num(r.energy),
            num(r.outside_fraction),
            num(*f),
        ]
    });
    write_csv_file(
        &dir.join("series.csv"),
        &["t", "max_abs_u", "l2_norm", "lp_integral", "energy", "outside_fraction", "F"],
        rows,
    )?;
    Ok((hash, dir, run))
}

fn describe(run: &RunRecord<f64>) -> String {
    match (&run.termination, &run.blowup) {
        (Termination::Blowup, Some(b)) => format!(
            "blow-up at T = {} (bracket [{}, {}], width {:.2}%)",
            b.estimate,
            b.t_lo,
            b.t_hi,
            100.0 * b.relative_width()
        ),
        _ => format!("no blow-up within t_max = {}", run.config.t_max),
    }
}

pub fn simulate(common: &Common, eps: Option<f64>) -> Result<(), CliError> {
    let mut config = load_config(common.config.as_deref())?;
    if let Some(eps) = eps {
        config.data.eps = eps;
    }
    let resolved = config.resolve()?;
    let root = out_dir(common.out.as_deref(), Some(&config));
    let (hash, dir, run) = simulate_one(&resolved, &root)?;
    println!("run {hash}: {}", describe(&run));
    println!("{}", dir.display());
    Ok(())
}

/// Record path and run directory from `--run`.
fn locate_run(path: &Path) -> (PathBuf, PathBuf) {
    if path.is_dir() {
        (path.join("record.json"), path.to_path_buf())
    } else {
        let dir = path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf);
        (path.to_path_buf(), dir)
    }
}

fn load_run(record: &Path) -> Result<RunRecord<f64>, CliError> {
    serde_json::from_str(&read_text(record)?).map_err(|e| CliError::Other(format!("{}: {e}", record.display())))
}

fn flag_constants(flags: ConstantFlags) -> Option<IterationConstants<f64>> {
    Some(IterationConstants {
        c_frame: flags.c_frame?,
        c_0: flags.c0?,
        b_1: flags.b1?,
    })
}

#[derive(Serialize, Deserialize)]
struct CombinedReport {
    schema_version: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    testfn: Option<TestfnReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    functional: Option<FunctionalReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    iteration: Option<IterationReport>,
    pass: bool,
}

pub fn verify(common: &Common, target: Target, run: Option<&Path>, flags: ConstantFlags) -> Result<(), CliError> {
    let located = run.map(locate_run);
    let config = match (&common.config, &located) {
        (Some(p), _) => load_config(Some(p))?,
        (None, Some((_, dir))) if dir.join("config.json").is_file() => load_config(Some(&dir.join("config.json")))?,
        _ => ExperimentConfig::default(),
    };
    let resolved = config.resolve()?;
    let record = match &located {
        Some((path, _)) => Some(load_run(path)?),
        None => None,
    };
    let wants = |t: Target| target == t || target == Target::All;
    if target == Target::Functional && record.is_none() {
        return Err(CliError::Config("verify functional needs --run".into()));
    }

    let testfn = if wants(Target::Testfn) { Some(testfn_report(&resolved)?) } else { None };
    let analysis = match &record {
        Some(run) if wants(Target::Functional) || wants(Target::Iteration) => Some(functional_analysis(&resolved, run)?),
        _ => None,
    };
    let iteration = if wants(Target::Iteration) {
        let (constants, source) = match (flag_constants(flags), &analysis) {
            (Some(c), _) => (c, ConstantsSource::Flags),
            (None, Some(a)) => (measured_constants(a)?, ConstantsSource::Measured),
            (None, None) => (
                IterationConstants {
                    c_frame: 1.0,
                    c_0: 1.0,
                    b_1: 1.0,
                },
                ConstantsSource::Unit,
            ),
        };
        let (p, eps) = match &record {
            Some(run) => match run.nonlinearity {
                Nonlinearity::Power { p } => (p, run.data.eps),
                Nonlinearity::Off => (resolved.p, run.data.eps),
            },
            None => (resolved.p, resolved.data.eps),
        };
        let trace = analysis.as_ref().map(|a| (&a.trace, a.report.window_end));
        Some(iteration_report(p, eps, constants, source, trace)?)
    } else {
        None
    };
    let functional = if wants(Target::Functional) { analysis.map(|a| a.report) } else { None };
    let pass = testfn.as_ref().map_or(true, |r| r.pass)
        && functional.as_ref().map_or(true, |r| r.pass)
        && iteration.as_ref().map_or(true, |r| r.pass);
    let report = CombinedReport {
        schema_version: SCHEMA_VERSION,
        testfn,
        functional,
        iteration,
        pass,
    };
    if let Some((_, dir)) = &located {
        let name = match target {
            Target::All => "report.json".to_string(),
            t => format!("report-{}.json", format!("{t:?}").to_lowercase()),
        };
        write_json(&dir.join(name), &report)?;
    }
    print_json(&report)?;
    if pass {
        Ok(())
    } else {
        Err(CliError::Other("verification failed".into()))
    }
}

/// `start:stop:count`, evenly spaced with both ends included.
pub fn parse_sweep(spec: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Config(format!("eps sweep must be start:stop:count, got {spec:?}"));
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let start: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let stop: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let count: usize = parts[2].trim().parse().map_err(|_| bad())?;
    if count == 0 || !(start > 0.0 && stop > 0.0) || !start.is_finite() || !stop.is_finite() {
        return Err(bad());
    }
    if count == 1 {
        return Ok(vec![start]);
    }
    let step = (stop - start) / (count - 1) as f64;
    Ok((0..count).map(|k| if k + 1 == count { stop } else { start + step * k as f64 }).collect())
}

#[derive(Deserialize)]
struct HasConstants {
    constants: IterationConstants<f64>,
}

fn constants_from_report(path: &Path) -> Result<IterationConstants<f64>, CliError> {
    let text = read_text(path)?;
    if let Ok(r) = serde_json::from_str::<HasConstants>(&text) {
        return Ok(r.constants);
    }
    #[derive(Deserialize)]
    struct Wrapped {
        iteration: HasConstants,
    }
    serde_json::from_str::<Wrapped>(&text)
        .map(|w| w.iteration.constants)
        .map_err(|e| CliError::Config(format!("{}: no iteration constants ({e})", path.display())))
}

pub fn lifespan(
    common: &Common,
    n: Option<usize>,
    sweep: &str,
    flags: ConstantFlags,
    report: Option<&Path>,
    measure: bool,
) -> Result<(), CliError> {
    let mut config = load_config(common.config.as_deref())?;
    if let Some(n) = n {
        config.n = n;
    }
    let resolved = config.resolve()?;
    let eps_values = parse_sweep(sweep)?;
    let (constants, source) = match (flag_constants(flags), report) {
        (Some(c), _) => (c, ConstantsSource::Flags),
        (None, Some(path)) => (constants_from_report(path)?, ConstantsSource::Report),
        (None, None) => {
            let run = run_until_blowup(&resolved.data, &resolved.metric, resolved.nonlinearity(), &resolved.solver)?;
            (measured_constants(&functional_analysis(&resolved, &run)?)?, ConstantsSource::Measured)
        }
    };
    eprintln!(
        "constants ({source:?}): C_frame = {}, C_0 = {}, B_1 = {}",
        constants.c_frame, constants.c_0, constants.b_1
    );
    let p = resolved.p;
    let measured: Vec<Option<f64>> = if measure {
        eps_values
            .par_iter()
            .map(|&eps| {
                let r = resolved.with_eps(eps)?;
                let run = run_until_blowup(&r.data, &r.metric, r.nonlinearity(), &r.solver)?;
                Ok(run.blowup.map(|b| b.estimate))
            })
            .collect::<Result<_, CliError>>()?
    } else {
        vec![None; eps_values.len()]
    };
    let mut rows = Vec::new();
    for (&eps, t_measured) in eps_values.iter().zip(measured) {
        let schedule = build_schedule(p, constants, eps, J_MAX)?;
        let bound = lifespan_bound(&schedule, eps)?;
        rows.push(vec![
            num(eps),
            num(eps.powf(-p * (p - 1.0))),
            num(bound.log_t_bound),
            num(bound.t_bound()),
            bound.within_guarantee.to_string(),
            t_measured.map_or(String::new(), num),
        ]);
    }
    stdout_csv(&["eps", "eps_pow", "log_T_bound", "T_bound", "within_guarantee", "T_measured"], rows)
}

#[derive(Serialize)]
struct SweepKey<'a> {
    config: &'a str,
    eps: &'a [f64],
}

pub fn sweep(common: &Common, eps: &[f64]) -> Result<(), CliError> {
    let config = load_config(common.config.as_deref())?;
    let base = config.resolve()?;
    let variants = eps.iter().map(|&e| base.with_eps(e)).collect::<Result<Vec<_>, _>>()?;
    let root = out_dir(common.out.as_deref(), Some(&config));
    let results = variants
        .par_iter()
        .map(|r| simulate_one(r, &root))
        .collect::<Result<Vec<_>, _>>()?;
    let rows: Vec<Vec<String>> = eps
        .iter()
        .zip(&results)
        .map(|(&e, (hash, _, run))| {
            let (est, lo, hi, width) = match &run.blowup {
                Some(b) => (num(b.estimate), num(b.t_lo), num(b.t_hi), num(b.relative_width())),
                None => Default::default(),
            };
            let termination = serde_json::to_value(run.termination)
                .ok()
                .and_then(|v| v.as_str().map(str::to_owned))
                .unwrap_or_default();
            vec![num(e), hash.clone(), termination, est, lo, hi, width]
        })
        .collect();
    let header = ["eps", "hash", "termination", "t_estimate", "t_lo", "t_hi", "relative_width"];
    let key = content_hash(&SweepKey {
        config: &config_hash(&config),
        eps,
    });
    let dir = root.join("sweeps");
    ensure_dir(&dir)?;
    let path = dir.join(format!("{key}.csv"));
    write_csv_file(&path, &header, rows.clone())?;
    stdout_csv(&header, rows)?;
    eprintln!("{}", path.display());
    Ok(())
}
