//! Simulation study comparing OLS, ridge, PAN and PAN-ridge on orthogonal
//! designs with equal true coefficients, scored by test-set MSE against the
//! true mean.

use std::fmt::Write as _;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{PanError, Result};
use crate::estimators::{ols_fit, pan_ridge_fit_scaled, CoefficientVector};
use crate::evaluation::test_mse;
use crate::geometry::{orthonormalize, Dataset, OrthoScale};
use crate::parallel::rng_stream;
use crate::tuning::{bootstrap_tune, oracle_tune_scaled, TuningGrid, TuningMethod};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimMethod {
    Ols,
    Pan,
    Ridge,
    PanRidgeFixedOracle,
    PanRidgeFixedEstimated,
    PanRidgeJoint,
}

impl SimMethod {
    /// Reporting order.
    pub const ALL: [SimMethod; 6] = [
        SimMethod::Ols,
        SimMethod::Pan,
        SimMethod::Ridge,
        SimMethod::PanRidgeFixedOracle,
        SimMethod::PanRidgeFixedEstimated,
        SimMethod::PanRidgeJoint,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SimMethod::Ols => "ols",
            SimMethod::Pan => "pan",
            SimMethod::Ridge => "ridge",
            SimMethod::PanRidgeFixedOracle => "pan_ridge_fixed_oracle",
            SimMethod::PanRidgeFixedEstimated => "pan_ridge_fixed_estimated",
            SimMethod::PanRidgeJoint => "pan_ridge_joint",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            SimMethod::Ols => "OLS",
            SimMethod::Pan => "PAN",
            SimMethod::Ridge => "Ridge",
            SimMethod::PanRidgeFixedOracle => "PAN-ridge (fixed l1, oracle)",
            SimMethod::PanRidgeFixedEstimated => "PAN-ridge (fixed l1, estimated)",
            SimMethod::PanRidgeJoint => "PAN-ridge (l1, l2)",
        }
    }

    pub fn parse(s: &str) -> Result<SimMethod> {
        SimMethod::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| PanError::Config(format!("unknown simulation method '{s}'")))
    }
}

/// Study grids for `X^T X = I`, log-spaced around the typical `|b_ols|^2`.
/// Multiplied by the design scale for other normalizations.
pub const SIM_LAMBDA1: [f64; 16] = [0.0, 0.125, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0, 12.0, 16.0, 24.0, 32.0];
pub const SIM_LAMBDA2: [f64; 20] = [
    -0.4, -0.2, -0.1, -0.05, 0.0, 0.025, 0.05, 0.1, 0.15, 0.2, 0.3, 0.4, 0.6, 0.8, 1.2, 1.6, 2.4, 3.2, 4.8, 6.4,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub n: usize,
    pub p: usize,
    pub sigma: f64,
    pub beta_value: f64,
    pub replications: usize,
    pub test_size: usize,
    pub b: usize,
    pub seed: u64,
    pub methods: Vec<SimMethod>,
    /// Training design normalization: `X^T X = I` or `X^T X = n I`.
    pub design: OrthoScale,
    pub lambda1_values: Vec<f64>,
    pub lambda2_values: Vec<f64>,
}

impl SimulationConfig {
    /// Study defaults: `n = 50`, `X^T X = I`, noise standard deviation
    /// `1 / sqrt(n)`, standard normal test points and all six methods.
    pub fn study(p: usize, beta_value: f64, replications: usize, b: usize, seed: u64) -> Self {
        let n = 50;
        SimulationConfig {
            n,
            p,
            sigma: 1.0 / (n as f64).sqrt(),
            beta_value,
            replications,
            test_size: 1000,
            b,
            seed,
            methods: SimMethod::ALL.to_vec(),
            design: OrthoScale::Unit,
            lambda1_values: SIM_LAMBDA1.to_vec(),
            lambda2_values: SIM_LAMBDA2.to_vec(),
        }
    }

    pub fn design_scale(&self) -> f64 {
        match self.design {
            OrthoScale::Unit => 1.0,
            OrthoScale::SqrtN => self.n as f64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p == 0 || self.replications == 0 || self.test_size == 0 || self.b == 0 {
            return Err(PanError::Config("n, p, replications, test_size and B must be positive".into()));
        }
        if self.p >= self.n {
            return Err(PanError::Config(format!("need p < n, got p = {}, n = {}", self.p, self.n)));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() || !self.beta_value.is_finite() {
            return Err(PanError::Config("sigma must be finite and >= 0; beta_value finite".into()));
        }
        TuningGrid::new(self.lambda1_values.clone(), self.lambda2_values.clone(), self.b, self.seed)?;
        Ok(())
    }

    fn grid(&self, seed: u64) -> TuningGrid {
        TuningGrid { lambda1_values: self.lambda1_values.clone(), lambda2_values: self.lambda2_values.clone(), b: self.b, seed }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: SimMethod,
    pub mean_mse: f64,
    pub std_error: f64,
    pub completed: usize,
    pub failures: usize,
    pub mean_lambda1: f64,
    pub mean_lambda2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub config: SimulationConfig,
    pub methods: Vec<MethodSummary>,
    pub wall_time_seconds: f64,
}

impl SimulationReport {
    pub fn mse(&self, method: SimMethod) -> Option<f64> {
        self.methods.iter().find(|m| m.method == method).map(|m| m.mean_mse)
    }
}

/// Outcome of one method in one replication: `(mse, l1, l2)`.
type Cell = Option<(f64, f64, f64)>;

fn personalized_mse(
    ols: &CoefficientVector,
    x_test: &[DVector<f64>],
    beta: &DVector<f64>,
    l1: f64,
    l2: f64,
    scale: f64,
) -> Result<f64> {
    if l2 == 0.0 {
        let shared = ols.as_vector() * (scale / (scale + l1));
        return test_mse(&[shared], x_test, beta);
    }
    let fits = x_test
        .iter()
        .map(|x| pan_ridge_fit_scaled(ols, x, l1, l2, scale).map(|f| f.beta_hat.into_vector()))
        .collect::<Result<Vec<_>>>()?;
    test_mse(&fits, x_test, beta)
}

fn replicate(cfg: &SimulationConfig, r: usize) -> Result<Vec<Cell>> {
    let mut rng = rng_stream(cfg.seed, r as u64);
    let tuning_seed = rng.next_u64();
    let (n, p) = (cfg.n, cfg.p);
    let raw = DMatrix::from_fn(n, p, |_, _| StandardNormal.sample(&mut rng));
    let x = orthonormalize(&raw, cfg.design)?;
    let beta = DVector::from_element(p, cfg.beta_value);
    let y = &x * &beta + DVector::from_fn(n, |_, _| {
        let e: f64 = StandardNormal.sample(&mut rng);
        cfg.sigma * e
    });
    let x_test: Vec<DVector<f64>> = (0..cfg.test_size)
        .map(|_| DVector::from_fn(p, |_, _| StandardNormal.sample(&mut rng)))
        .collect();
    let data = Dataset::new(x, y)?;
    let ols = ols_fit(&data)?;
    let scale = cfg.design_scale();
    let grid = cfg.grid(tuning_seed);

    let wants = |m: SimMethod| cfg.methods.contains(&m);
    let needs_ridge = wants(SimMethod::Ridge) || wants(SimMethod::PanRidgeFixedOracle) || wants(SimMethod::PanRidgeFixedEstimated);
    let ridge_l1 = if needs_ridge { bootstrap_tune(&data, &grid, TuningMethod::RidgeOnly).map(|t| t.selected.0).ok() } else { None };

    let score = |l1: f64, l2: f64| -> Cell { personalized_mse(&ols, &x_test, &beta, l1, l2, scale).ok().map(|m| (m, l1, l2)) };
    let mut out = Vec::with_capacity(cfg.methods.len());
    for &m in &cfg.methods {
        let cell = match m {
            SimMethod::Ols => score(0.0, 0.0),
            SimMethod::Ridge => ridge_l1.and_then(|l1| score(l1, 0.0)),
            SimMethod::Pan => bootstrap_tune(&data, &grid, TuningMethod::PanOnly).ok().and_then(|t| score(0.0, t.selected.1)),
            SimMethod::PanRidgeJoint => {
                bootstrap_tune(&data, &grid, TuningMethod::PanRidge).ok().and_then(|t| score(t.selected.0, t.selected.1))
            }
            SimMethod::PanRidgeFixedEstimated => ridge_l1.and_then(|l1| {
                bootstrap_tune(&data, &grid, TuningMethod::PanGivenLambda1(l1)).ok().and_then(|t| score(l1, t.selected.1))
            }),
            SimMethod::PanRidgeFixedOracle => ridge_l1.and_then(|l1| {
                oracle_tune_scaled(&x_test, &beta, cfg.sigma, &grid, l1, (n, p), scale)
                    .ok()
                    .and_then(|t| score(l1, t.selected.1))
            }),
        };
        out.push(cell);
    }
    Ok(out)
}

/// Run every replication and average per method. Bit-identical for a fixed
/// seed regardless of thread count, apart from the wall time.
pub fn run_study(config: &SimulationConfig) -> Result<SimulationReport> {
    config.validate()?;
    let start = Instant::now();
    let per_rep: Vec<Result<Vec<Cell>>> = (0..config.replications).into_par_iter().map(|r| replicate(config, r)).collect();
    let k = config.methods.len();
    let mut cells: Vec<Vec<(f64, f64, f64)>> = vec![Vec::new(); k];
    let mut failures = vec![0usize; k];
    for rep in per_rep {
        match rep {
            Ok(row) => {
                for (j, c) in row.into_iter().enumerate() {
                    match c {
                        Some(v) => cells[j].push(v),
                        None => failures[j] += 1,
                    }
                }
            }
            Err(_) => failures.iter_mut().for_each(|f| *f += 1),
        }
    }
    let methods = config
        .methods
        .iter()
        .enumerate()
        .map(|(j, &method)| {
            let vals = &cells[j];
            let m = vals.len() as f64;
            let mean = |f: fn(&(f64, f64, f64)) -> f64| if vals.is_empty() { f64::NAN } else { vals.iter().map(f).sum::<f64>() / m };
            let mean_mse = mean(|v| v.0);
            let std_error = if vals.len() > 1 {
                (vals.iter().map(|v| (v.0 - mean_mse).powi(2)).sum::<f64>() / (m - 1.0) / m).sqrt()
            } else {
                0.0
            };
            MethodSummary {
                method,
                mean_mse,
                std_error,
                completed: vals.len(),
                failures: failures[j],
                mean_lambda1: mean(|v| v.1),
                mean_lambda2: mean(|v| v.2),
            }
        })
        .collect();
    Ok(SimulationReport { config: config.clone(), methods, wall_time_seconds: start.elapsed().as_secs_f64() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableFormat {
    Text,
    Json,
    Csv,
}

impl TableFormat {
    pub fn parse(s: &str) -> Result<TableFormat> {
        match s {
            "text" => Ok(TableFormat::Text),
            "json" => Ok(TableFormat::Json),
            "csv" => Ok(TableFormat::Csv),
            other => Err(PanError::Config(format!("unknown table format '{other}'"))),
        }
    }
}

fn cell(r: &SimulationReport, m: SimMethod) -> Option<&MethodSummary> {
    r.methods.iter().find(|s| s.method == m)
}

/// Method rows by report columns, rows in the fixed method order.
pub fn emit_table(reports: &[SimulationReport], format: TableFormat) -> Result<String> {
    let rows: Vec<SimMethod> = SimMethod::ALL
        .into_iter()
        .filter(|m| reports.iter().any(|r| r.methods.iter().any(|s| s.method == *m)))
        .collect();
    match format {
        TableFormat::Json => serde_json::to_string_pretty(reports).map_err(|e| PanError::Io(e.to_string())),
        TableFormat::Csv => {
            let mut out = String::from("method,p,beta_value,mean_mse,std_error,completed,failures\n");
            for &m in &rows {
                for r in reports {
                    if let Some(s) = cell(r, m) {
                        let _ = writeln!(
                            out,
                            "{},{},{},{},{},{},{}",
                            m.as_str(),
                            r.config.p,
                            r.config.beta_value,
                            s.mean_mse,
                            s.std_error,
                            s.completed,
                            s.failures
                        );
                    }
                }
            }
            Ok(out)
        }
        TableFormat::Text => {
            let mut out = format!("{:<34}", "method");
            for r in reports {
                let _ = write!(out, " {:>14}", format!("p={} b={}", r.config.p, r.config.beta_value));
            }
            out.push('\n');
            for &m in &rows {
                let _ = write!(out, "{:<34}", m.label());
                for r in reports {
                    match cell(r, m) {
                        Some(s) => {
                            let _ = write!(out, " {:>14.3}", s.mean_mse);
                        }
                        None => {
                            let _ = write!(out, " {:>14}", "-");
                        }
                    }
                }
                out.push('\n');
            }
            Ok(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parallel::with_workers;

    fn small(methods: Vec<SimMethod>) -> SimulationConfig {
        let mut c = SimulationConfig::study(4, 0.1, 6, 40, 5);
        c.n = 30;
        c.sigma = 1.0 / 30f64.sqrt();
        c.test_size = 100;
        c.methods = methods;
        c
    }

    fn strip_time(mut r: SimulationReport) -> SimulationReport {
        r.wall_time_seconds = 0.0;
        r
    }

    #[test]
    fn config_validation() {
        let mut c = small(vec![SimMethod::Ols]);
        c.p = 30;
        assert!(c.validate().is_err());
        let mut c = small(vec![SimMethod::Ols]);
        c.b = 0;
        assert!(c.validate().is_err());
        assert!(SimMethod::parse("lasso").is_err());
        assert_eq!(SimMethod::parse("pan_ridge_joint").unwrap(), SimMethod::PanRidgeJoint);
    }

    #[test]
    fn noiseless_study_has_zero_error() {
        let mut c = small(SimMethod::ALL.to_vec());
        c.sigma = 0.0;
        let rep = run_study(&c).unwrap();
        for m in &rep.methods {
            assert_eq!(m.failures, 0, "{:?}", m.method);
            assert!(m.mean_mse < 1e-20, "{:?}: {}", m.method, m.mean_mse);
        }
    }

    #[test]
    fn ols_error_matches_its_variance() {
        // E (x^T (b_ols - b))^2 = s^2 p for standard normal x and X^T X = I
        let mut c = small(vec![SimMethod::Ols]);
        c.replications = 200;
        let rep = run_study(&c).unwrap();
        let m = &rep.methods[0];
        let expected = c.sigma.powi(2) * 4.0;
        assert!((m.mean_mse - expected).abs() < 4.0 * m.std_error, "{} vs {expected}", m.mean_mse);
    }

    #[test]
    fn study_is_deterministic_across_workers() {
        let c = small(SimMethod::ALL.to_vec());
        let a = with_workers(Some(1), || run_study(&c)).unwrap().unwrap();
        let b = with_workers(Some(3), || run_study(&c)).unwrap().unwrap();
        assert_eq!(strip_time(a), strip_time(b));
    }

    #[test]
    fn unit_design_matches_scaled_design_with_rescaled_noise() {
        let unit = small(vec![SimMethod::Ols, SimMethod::Ridge, SimMethod::Pan, SimMethod::PanRidgeFixedOracle]);
        let mut scaled = unit.clone();
        scaled.design = OrthoScale::SqrtN;
        scaled.sigma = 1.0;
        scaled.lambda1_values = unit.lambda1_values.iter().map(|v| v * 30.0).collect();
        scaled.lambda2_values = unit.lambda2_values.iter().map(|v| v * 30.0).collect();
        let a = run_study(&scaled).unwrap();
        let b = run_study(&unit).unwrap();
        for (x, y) in a.methods.iter().zip(&b.methods) {
            assert!((x.mean_mse - y.mean_mse).abs() < 1e-9 * (1.0 + x.mean_mse), "{:?}", x.method);
        }
    }

    #[test]
    fn table_layouts() {
        let empty = SimulationReport { config: small(vec![]), methods: vec![], wall_time_seconds: 0.0 };
        let text = emit_table(std::slice::from_ref(&empty), TableFormat::Text).unwrap();
        assert_eq!(text.lines().count(), 1);
        let csv = emit_table(std::slice::from_ref(&empty), TableFormat::Csv).unwrap();
        assert_eq!(csv.lines().count(), 1);

        let rep = run_study(&small(vec![SimMethod::PanRidgeJoint, SimMethod::Ols])).unwrap();
        let text = emit_table(std::slice::from_ref(&rep), TableFormat::Text).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("OLS"));
        let json = emit_table(std::slice::from_ref(&rep), TableFormat::Json).unwrap();
        let back: Vec<SimulationReport> = serde_json::from_str(&json).unwrap();
        assert_eq!(back[0], rep);
    }
}
