//! Experiment configuration: a JSON document with defaults for every key.

use blowuplab_core::iteration::{critical_q, strauss_exponent};
use blowuplab_core::metric::{MetricField, MetricKind};
use blowuplab_core::quadrature::LambdaGridSpec;
use blowuplab_core::testfn::TestFunctionSpec;
use blowuplab_core::wavesolver::{InitialData, Nonlinearity, SolverConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// A number, or the literal `"critical"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Exponent {
    Value(f64),
    Named(Critical),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Critical {
    Critical,
}

impl Default for Exponent {
    fn default() -> Self {
        Exponent::Named(Critical::Critical)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MetricSpec {
    Flat {
        #[serde(default = "one")]
        beta: f64,
    },
    Exp {
        eps_g: f64,
        #[serde(default = "one")]
        beta: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl Default for MetricSpec {
    fn default() -> Self {
        MetricSpec::Exp { eps_g: 0.5, beta: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSpec {
    pub eps: f64,
    /// Support radius `R_0` of both bumps.
    pub r0: f64,
    pub height: f64,
}

impl Default for DataSpec {
    fn default() -> Self {
        Self {
            eps: 0.5,
            r0: 1.5,
            height: 8.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSpec {
    pub dr: f64,
    pub cfl: f64,
    pub t_max: f64,
    pub blowup_threshold: f64,
    pub snapshot_dt: f64,
    pub bracket: bool,
}

impl Default for SolverSpec {
    fn default() -> Self {
        let d = SolverConfig::<f64>::default();
        Self {
            dr: d.dr,
            cfl: d.cfl,
            t_max: d.t_max,
            blowup_threshold: d.blowup_threshold,
            snapshot_dt: d.snapshot_dt,
            bracket: d.bracket,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TestFnSpec {
    pub q: Exponent,
    pub lambda_0: Option<f64>,
    /// Support radius `R`; must cover the data.
    pub r_support: f64,
    pub octaves: usize,
    pub subdivisions: usize,
    pub order: usize,
    pub table_dr: f64,
}

impl Default for TestFnSpec {
    fn default() -> Self {
        let g = LambdaGridSpec::default();
        Self {
            q: Exponent::default(),
            lambda_0: None,
            r_support: 2.0,
            octaves: g.octaves,
            subdivisions: g.subdivisions,
            order: g.order,
            table_dr: 0.005,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: usize,
    pub p: Exponent,
    pub metric: MetricSpec,
    pub data: DataSpec,
    pub solver: SolverSpec,
    pub testfn: TestFnSpec,
    /// Output directory, overridden by `--out` and `BLOWUPLAB_OUT`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n: 3,
            p: Exponent::default(),
            metric: MetricSpec::default(),
            data: DataSpec::default(),
            solver: SolverSpec::default(),
            testfn: TestFnSpec::default(),
            output_dir: None,
        }
    }
}

/// Configuration with every derived quantity resolved and validated.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: ExperimentConfig,
    pub p: f64,
    pub metric: MetricField<f64>,
    pub data: InitialData<f64>,
    pub solver: SolverConfig<f64>,
    pub testfn: TestFunctionSpec<f64>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))
    }

    pub fn resolve(&self) -> Result<Resolved, CliError> {
        let bad = |e: blowuplab_core::Error| CliError::Config(e.to_string());
        let p = match self.p {
            Exponent::Value(p) => p,
            Exponent::Named(Critical::Critical) => strauss_exponent::<f64>(self.n).map_err(bad)?.p0,
        };
        if !(p > 1.0) || !p.is_finite() {
            return Err(CliError::Config(format!("p must exceed 1, got {p}")));
        }
        let q = match self.testfn.q {
            Exponent::Value(q) => q,
            Exponent::Named(Critical::Critical) => critical_q(p, self.n),
        };
        let kind = match self.metric {
            MetricSpec::Flat { beta } => MetricKind::Flat { beta },
            MetricSpec::Exp { eps_g, beta } => MetricKind::ExpPerturbed { eps_g, beta },
        };
        let metric = MetricField::new(self.n, kind).map_err(bad)?;
        let data = InitialData::bump_with(self.data.eps, self.data.r0, self.data.height);
        data.validate().map_err(bad)?;
        let s = self.solver;
        let solver = SolverConfig {
            dr: s.dr,
            cfl: s.cfl,
            t_max: s.t_max,
            blowup_threshold: s.blowup_threshold,
            snapshot_dt: s.snapshot_dt,
            r_support: self.testfn.r_support,
            domain_radius: None,
            lp_exponent: Some(p),
            bracket: s.bracket,
        };
        solver.validate().map_err(bad)?;
        if self.data.r0 > self.testfn.r_support {
            return Err(CliError::Config(format!(
                "data radius {} exceeds testfn.r_support {}",
                self.data.r0, self.testfn.r_support
            )));
        }
        let t = self.testfn;
        if t.octaves == 0 || t.subdivisions == 0 || t.order == 0 || !(t.table_dr > 0.0) {
            return Err(CliError::Config("testfn grid sizes must be positive".into()));
        }
        let testfn = TestFunctionSpec {
            q,
            r_support: t.r_support,
            lambda_0: t.lambda_0,
            lambda_grid: LambdaGridSpec {
                octaves: t.octaves,
                subdivisions: t.subdivisions,
                order: t.order,
            },
            table_dr: t.table_dr,
            table_r_max: None,
        };
        Ok(Resolved {
            config: self.clone(),
            p,
            metric,
            data,
            solver,
            testfn,
        })
    }
}

impl Resolved {
    pub fn nonlinearity(&self) -> Nonlinearity<f64> {
        Nonlinearity::Power { p: self.p }
    }

    /// Same experiment at another amplitude.
    pub fn with_eps(&self, eps: f64) -> Result<Resolved, CliError> {
        let mut c = self.config.clone();
        c.data.eps = eps;
        c.resolve()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_takes_defaults() {
        let c = ExperimentConfig::from_json("{}").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        let r = c.resolve().unwrap();
        assert!((r.p - (1.0 + 2f64.sqrt())).abs() < 1e-15);
        assert!((r.testfn.q - (1.0 - 1.0 / r.p)).abs() < 1e-15);
    }

    #[test]
    fn numbers_and_critical_both_parse() {
        let c = ExperimentConfig::from_json(r#"{"n": 2, "p": 3.5, "testfn": {"q": "critical"}, "metric": {"kind": "flat"}}"#).unwrap();
        assert_eq!(c.p, Exponent::Value(3.5));
        let r = c.resolve().unwrap();
        assert!((r.testfn.q - (0.5 - 1.0 / 3.5)).abs() < 1e-15);
        assert!(r.metric.is_flat());
    }

    #[test]
    fn round_trips_bit_exactly() {
        let mut c = ExperimentConfig::default();
        c.data.eps = 0.1 + 0.2;
        c.metric = MetricSpec::Exp { eps_g: 1.0 / 3.0, beta: 0.7 };
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), c);
    }

    #[test]
    fn rejects_bad_values() {
        for text in [
            r#"{"metric": {"kind": "exp", "eps_g": 1.5}}"#,
            r#"{"p": 0.5}"#,
            r#"{"solver": {"cfl": 1.2}}"#,
            r#"{"data": {"r0": 3.0}}"#,
            r#"{"n": 1}"#,
        ] {
            assert!(ExperimentConfig::from_json(text).unwrap().resolve().is_err(), "{text}");
        }
        assert!(ExperimentConfig::from_json(r#"{"nn": 3}"#).is_err());
    }
}
