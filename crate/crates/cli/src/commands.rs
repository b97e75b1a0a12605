use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DVector;
use serde::Serialize;
use serde_json::{json, Value};

use panreg::estimators::{ols_fit, shrinkage_factor, Method};
use panreg::evaluation::{loocv_mean_baseline, loocv_with, per_observation_report_with, EvaluationReport};
use panreg::geometry::{center, Dataset};
use panreg::io::{parse_list, read_table_file, Config, Document};
use panreg::optimizer::{fit_personalized, Initializer, OptimizerConfig, Parametrization};
use panreg::parallel::with_workers;
use panreg::simulation::{emit_table, run_study, SimMethod, SimulationConfig, TableFormat};
use panreg::theory::{lambda1_star, mc_mse_curve, mse_derivative_at_zero, oracle_fridge_lambda, proportion_within, TheoryInstance};
use panreg::tuning::{bootstrap_tune_with, TuningGrid, TuningMethod, DEFAULT_LAMBDA1, DEFAULT_LAMBDA2};
use panreg::{PanError, Result};

use crate::args::*;

const DEFAULT_FITS: &str = "ols:0:0,pan:0:2.5,ridge:4:0,pan-ridge:2:3";
const STUDY_P: [usize; 2] = [6, 15];
const STUDY_BETA: [f64; 4] = [0.05, 0.10, 0.15, 0.20];

/// Flag value, else config value from `[section]`, else nothing.
struct Settings<'a> {
    config: &'a Config,
    section: &'static str,
}

impl Settings<'_> {
    fn pick<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>> {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.config.get_parsed(self.section, key),
        }
    }

    fn or<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T> {
        Ok(self.pick(flag, key)?.unwrap_or(default))
    }

    fn list(&self, flag: &Option<Vec<f64>>, key: &str) -> Result<Option<Vec<f64>>> {
        match flag {
            Some(v) => Ok(Some(v.clone())),
            None => self.config.get_list(self.section, key),
        }
    }

    fn words(&self, flag: &Option<Vec<String>>, key: &str) -> Option<Vec<String>> {
        flag.clone().or_else(|| {
            self.config
                .get(self.section, key)
                .map(|v| v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect())
        })
    }

    fn path(&self, flag: &Option<PathBuf>, key: &str) -> Option<PathBuf> {
        flag.clone().or_else(|| self.config.get(self.section, key).map(PathBuf::from))
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let config = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let workers = match cli.workers {
        Some(w) => Some(w),
        None => config.get_parsed::<usize>("", "workers")?,
    };
    let seed = match cli.seed {
        Some(s) => Some(s),
        None => config.get_parsed::<u64>("", "seed")?,
    };
    let out = with_workers(workers, || match &cli.command {
        Command::Fit(a) => fit(a, &Settings { config: &config, section: "fit" }),
        Command::Predict(a) => predict(a, &Settings { config: &config, section: "predict" }),
        Command::Tune(a) => tune(a, &Settings { config: &config, section: "tune" }, seed),
        Command::Cv(a) => cv(a, &Settings { config: &config, section: "cv" }),
        Command::Simulate(a) => simulate(a, &Settings { config: &config, section: "simulate" }, seed),
        Command::Theory(a) => theory(a, &Settings { config: &config, section: "theory" }, seed),
        Command::ShrinkCurve(a) => shrink_curve(a, &Settings { config: &config, section: "shrink-curve" }),
    })??;
    write_output(cli.output.as_deref(), &out)
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    let mut text = text.to_string();
    if !text.ends_with('\n') {
        text.push('\n');
    }
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| PanError::Io(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn document<T: Serialize>(command: &str, settings: &Value, seed: Option<u64>, result: T) -> Result<String> {
    Document::new(command, settings, seed, result)?.to_json()
}

fn resolve_seed(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(rand::random)
}

struct Prepared {
    data: Dataset,
    /// Divisors applied to each covariate column.
    scales: Vec<f64>,
    source: String,
    standardize: bool,
}

impl Prepared {
    /// Put an original-scale covariate vector on the fitting scale.
    fn scale_point(&self, x: &[f64]) -> Result<DVector<f64>> {
        if x.len() != self.scales.len() {
            return Err(PanError::Dimension { expected: self.scales.len(), got: x.len() });
        }
        Ok(DVector::from_iterator(x.len(), x.iter().zip(&self.scales).map(|(v, s)| v / s)))
    }

    fn settings(&self) -> Value {
        json!({
            "data": self.source,
            "columns": self.data.column_names,
            "n": self.data.n(),
            "standardize": self.standardize,
        })
    }
}

fn load_data(a: &DataArgs, s: &Settings) -> Result<Prepared> {
    let path = s
        .path(&a.data, "data")
        .ok_or_else(|| PanError::Config("--data is required".into()))?;
    let table = read_table_file(&path)?;
    let outcome = match s.pick(a.outcome.clone(), "outcome")? {
        Some(o) => o,
        None => table.columns.last().cloned().unwrap_or_default(),
    };
    let covariates = s.words(&a.covariates, "covariates");
    let raw = table.to_dataset(&outcome, covariates.as_deref())?;
    let standardize = !a.raw && s.or(None, "standardize", true)?;
    let (data, scales) = if standardize {
        let scales = (0..raw.p()).map(|j| column_sd(&raw, j)).collect();
        (raw.standardized()?, scales)
    } else {
        (raw.clone(), vec![1.0; raw.p()])
    };
    Ok(Prepared { data, scales, source: path.display().to_string(), standardize })
}

fn column_sd(d: &Dataset, j: usize) -> f64 {
    let col = d.x.column(j);
    let mean = col.mean();
    (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (d.n() as f64 - 1.0)).sqrt()
}

fn solver_config(a: &SolverArgs, s: &Settings) -> Result<OptimizerConfig> {
    let mut cfg = OptimizerConfig::default();
    if let Some(p) = s.pick(a.parametrization.clone(), "parametrization")? {
        cfg.parametrization = match p.as_str() {
            "cartesian" => Parametrization::Cartesian,
            "hyperspherical" => Parametrization::Hyperspherical,
            other => return Err(PanError::Config(format!("unknown parametrization '{other}'"))),
        };
    }
    cfg.max_iterations = s.or(a.max_iterations, "max_iterations", cfg.max_iterations)?;
    cfg.gradient_tolerance = s.or(a.tolerance, "tolerance", cfg.gradient_tolerance)?;
    cfg.validate()?;
    Ok(cfg)
}

fn solver_settings(cfg: &OptimizerConfig) -> Value {
    json!({
        "parametrization": match cfg.parametrization { Parametrization::Cartesian => "cartesian", Parametrization::Hyperspherical => "hyperspherical" },
        "initializer": match cfg.initializer { Initializer::Ols => "ols", Initializer::Ridge => "ridge" },
        "max_iterations": cfg.max_iterations,
        "tolerance": cfg.gradient_tolerance,
    })
}

/// Tuning values a method actually uses.
fn method_lambdas(method: Method, l1: f64, l2: f64) -> (f64, f64) {
    match method {
        Method::Ols => (0.0, 0.0),
        Method::Ridge => (l1, 0.0),
        Method::Pan => (0.0, l2),
        Method::PanRidge => (l1, l2),
    }
}

#[derive(Serialize)]
struct FitOutput {
    method: Method,
    lambda1: f64,
    lambda2: f64,
    columns: Vec<String>,
    /// Centered (and scaled) target actually used in the penalty.
    x0: Vec<f64>,
    coefficients: Vec<f64>,
    direction: Vec<f64>,
    length: f64,
    angles: Vec<f64>,
    prediction: f64,
    prediction_outcome_scale: f64,
    ols_coefficients: Vec<f64>,
    ols_prediction: f64,
    cos_sim: f64,
    shrinkage_factor: f64,
    c_value: Option<f64>,
}

fn fit(a: &FitArgs, s: &Settings) -> Result<String> {
    let prep = load_data(&a.data, s)?;
    let solver = solver_config(&a.solver, s)?;
    let method = Method::parse(&s.or(a.method.clone(), "method", "pan".to_string())?)?;
    let (l1, l2) = method_lambdas(method, s.or(a.lambda1, "lambda1", 0.0)?, s.or(a.lambda2, "lambda2", 0.0)?);
    let c = center(&prep.data)?;
    let (x0, target) = if let Some(x) = &a.x0 {
        (c.center_point(&prep.scale_point(x)?)?, json!({ "vector": x }))
    } else if let Some(p) = &a.x0_file {
        let t = read_table_file(p)?;
        let idx = c.column_names.iter().map(|n| t.column_index(n)).collect::<Result<Vec<_>>>()?;
        let raw: Vec<f64> = idx.iter().map(|&j| t.rows[0][j]).collect();
        (c.center_point(&prep.scale_point(&raw)?)?, json!({ "file": p.display().to_string() }))
    } else {
        let row = s
            .pick(a.row, "row")?
            .ok_or_else(|| PanError::Config("give the target with --row, --x0 or --x0-file".into()))?;
        if row == 0 || row > c.n() {
            return Err(PanError::Config(format!("--row must be in 1..={}, got {row}", c.n())));
        }
        (c.row(row - 1), json!({ "row": row }))
    };
    let fit = fit_personalized(&c, &x0, l1, l2, &solver)?;
    let ols = ols_fit(&c)?;
    let prediction = fit.prediction_by_dot();
    let output = FitOutput {
        method,
        lambda1: l1,
        lambda2: l2,
        columns: c.column_names.clone(),
        x0: x0.as_slice().to_vec(),
        coefficients: fit.beta_hat.as_slice().to_vec(),
        direction: fit.direction.as_slice().to_vec(),
        length: fit.length,
        angles: fit.beta_hat.hyperspherical().angles,
        prediction,
        prediction_outcome_scale: c.y_mean + prediction,
        ols_coefficients: ols.as_slice().to_vec(),
        ols_prediction: ols.predict(&x0),
        cos_sim: fit.cos_sim,
        shrinkage_factor: fit.shrinkage_factor,
        c_value: fit.c_value,
    };
    let settings = json!({
        "input": prep.settings(),
        "method": method,
        "lambda1": l1,
        "lambda2": l2,
        "target": target,
        "solver": solver_settings(&solver),
    });
    document("fit", &settings, None, output)
}

#[derive(Serialize)]
struct PredictionRecord {
    index: usize,
    prediction: f64,
    prediction_outcome_scale: f64,
    ols_prediction: f64,
    cos_sim: f64,
    shrinkage_factor: f64,
}

fn predict(a: &PredictArgs, s: &Settings) -> Result<String> {
    let prep = load_data(&a.data, s)?;
    let solver = solver_config(&a.solver, s)?;
    let method = Method::parse(&s.or(a.method.clone(), "method", "pan".to_string())?)?;
    let (l1, l2) = method_lambdas(method, s.or(a.lambda1, "lambda1", 0.0)?, s.or(a.lambda2, "lambda2", 0.0)?);
    let c = center(&prep.data)?;
    let targets_path = s.path(&a.targets, "targets");
    let targets: Vec<DVector<f64>> = match &targets_path {
        Some(p) => {
            let t = read_table_file(p)?;
            let idx = c.column_names.iter().map(|n| t.column_index(n)).collect::<Result<Vec<_>>>()?;
            t.rows
                .iter()
                .map(|r| {
                    let raw: Vec<f64> = idx.iter().map(|&j| r[j]).collect();
                    c.center_point(&prep.scale_point(&raw)?)
                })
                .collect::<Result<_>>()?
        }
        None => (0..c.n()).map(|i| c.row(i)).collect(),
    };
    let ols = ols_fit(&c)?;
    let records = targets
        .iter()
        .enumerate()
        .map(|(i, x0)| {
            let ols_prediction = ols.predict(x0);
            let (prediction, cos_sim, factor) = if x0.norm_squared() == 0.0 {
                (0.0, 0.0, 1.0)
            } else {
                let f = fit_personalized(&c, x0, l1, l2, &solver)?;
                (f.prediction_by_dot(), f.cos_sim, f.shrinkage_factor)
            };
            Ok(PredictionRecord {
                index: i + 1,
                prediction,
                prediction_outcome_scale: c.y_mean + prediction,
                ols_prediction,
                cos_sim,
                shrinkage_factor: factor,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let settings = json!({
        "input": prep.settings(),
        "method": method,
        "lambda1": l1,
        "lambda2": l2,
        "targets": targets_path.map(|p| p.display().to_string()),
        "solver": solver_settings(&solver),
    });
    document("predict", &settings, None, records)
}

fn tune(a: &TuneArgs, s: &Settings, seed: Option<u64>) -> Result<String> {
    let prep = load_data(&a.data, s)?;
    let solver = solver_config(&a.solver, s)?;
    let seed = resolve_seed(seed);
    let name = s.or(a.method.clone(), "method", "pan-ridge".to_string())?.replace('-', "_");
    let method = TuningMethod::parse(&name, s.pick(a.lambda1, "lambda1")?)?;
    let grid = TuningGrid::new(
        s.list(&a.lambda1_grid, "lambda1_grid")?.unwrap_or_else(|| DEFAULT_LAMBDA1.to_vec()),
        s.list(&a.lambda2_grid, "lambda2_grid")?.unwrap_or_else(|| DEFAULT_LAMBDA2.to_vec()),
        s.or(a.b, "b", 500)?,
        seed,
    )?;
    let c = center(&prep.data)?;
    let result = bootstrap_tune_with(&c, &grid, method, &solver)?;
    let argmin = result.lambda2_argmin_by_row();
    let settings = json!({
        "input": prep.settings(),
        "method": method,
        "lambda1_grid": grid.lambda1_values,
        "lambda2_grid": grid.lambda2_values,
        "b": grid.b,
        "solver": solver_settings(&solver),
    });
    document(
        "tune",
        &settings,
        Some(seed),
        json!({ "tuning": result, "min_mse": result.min_mse(), "lambda2_argmin_by_row": argmin }),
    )
}

#[derive(Serialize)]
struct CvOutput {
    fits: Vec<EvaluationReport>,
    mean_baseline: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    per_observation: Option<EvaluationReport>,
}

fn parse_fit_spec(spec: &str) -> Result<(Method, f64, f64)> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(PanError::Config(format!("fit '{spec}' is not method:lambda1:lambda2")));
    }
    let num = |t: &str| t.trim().parse::<f64>().map_err(|_| PanError::Config(format!("bad number '{t}' in '{spec}'")));
    Ok((Method::parse(parts[0].trim())?, num(parts[1])?, num(parts[2])?))
}

fn cv(a: &CvArgs, s: &Settings) -> Result<String> {
    let prep = load_data(&a.data, s)?;
    let solver = solver_config(&a.solver, s)?;
    let specs = s
        .words(&a.fits, "fits")
        .unwrap_or_else(|| DEFAULT_FITS.split(',').map(str::to_string).collect());
    let fits = specs.iter().map(|f| parse_fit_spec(f)).collect::<Result<Vec<_>>>()?;
    let reports = fits
        .iter()
        .map(|&(m, l1, l2)| loocv_with(&prep.data, m, l1, l2, &solver))
        .collect::<Result<Vec<_>>>()?;
    let k = s.pick(a.per_observation, "per_observation")?;
    let report_l2 = s.or(a.report_lambda2, "report_lambda2", 2.5)?;
    let per_observation = match k {
        Some(k) => Some(per_observation_report_with(&prep.data, report_l2, k, &solver)?),
        None => None,
    };
    let settings = json!({
        "input": prep.settings(),
        "fits": specs,
        "per_observation": k,
        "report_lambda2": k.map(|_| report_l2),
        "solver": solver_settings(&solver),
    });
    let out = CvOutput { fits: reports, mean_baseline: loocv_mean_baseline(&prep.data)?, per_observation };
    document("cv", &settings, None, out)
}

fn simulate(a: &SimulateArgs, s: &Settings, seed: Option<u64>) -> Result<String> {
    let seed = resolve_seed(seed);
    let reps = s.or(a.replications, "replications", 200)?;
    let b = s.or(a.b, "b", 2000)?;
    let format = TableFormat::parse(&s.or(a.format.clone(), "format", "json".to_string())?)?;
    let study = a.study || s.or(None, "study", false)?;
    let cells: Vec<(usize, f64)> = if study {
        STUDY_P.iter().flat_map(|&p| STUDY_BETA.iter().map(move |&bv| (p, bv))).collect()
    } else {
        let p = s.pick(a.p, "p")?.ok_or_else(|| PanError::Config("--p is required without --study".into()))?;
        let bv = s.pick(a.beta, "beta")?.ok_or_else(|| PanError::Config("--beta is required without --study".into()))?;
        vec![(p, bv)]
    };
    let methods = match s.words(&a.methods, "methods") {
        Some(m) => m.iter().map(|t| SimMethod::parse(t)).collect::<Result<Vec<_>>>()?,
        None => SimMethod::ALL.to_vec(),
    };
    let n = s.pick(a.n, "n")?;
    let sigma = s.pick(a.sigma, "sigma")?;
    let test_size = s.pick(a.test_size, "test_size")?;
    let mut configs = Vec::new();
    for (p, bv) in cells {
        let mut cfg = SimulationConfig::study(p, bv, reps, b, seed);
        if let Some(n) = n {
            cfg.n = n;
            cfg.sigma = 1.0 / (n as f64).sqrt();
        }
        if let Some(sg) = sigma {
            cfg.sigma = sg;
        }
        if let Some(t) = test_size {
            cfg.test_size = t;
        }
        cfg.methods = methods.clone();
        cfg.validate()?;
        configs.push(cfg);
    }
    let reports = configs.iter().map(run_study).collect::<Result<Vec<_>>>()?;
    match format {
        TableFormat::Json => {
            let settings = json!({ "configs": configs });
            document("simulate", &settings, Some(seed), reports)
        }
        other => emit_table(&reports, other),
    }
}

fn theory(a: &TheoryArgs, s: &Settings, seed: Option<u64>) -> Result<String> {
    let mut result = serde_json::Map::new();
    let mut settings = serde_json::Map::new();
    let mut used_seed = None;
    if let Some(t) = s.pick(a.proportion, "proportion")? {
        let p = s.pick(a.p, "p")?.ok_or_else(|| PanError::Config("--proportion needs --p".into()))?;
        result.insert("proportion".into(), json!(proportion_within(t, p)?));
        settings.insert("proportion".into(), json!({ "t": t, "p": p }));
    }
    let x0 = s.list(&a.x0, "x0")?;
    let beta = s.list(&a.beta, "beta")?;
    match (x0, beta) {
        (Some(x0), Some(beta)) => {
            let sigma = s.or(a.sigma, "sigma", 1.0)?;
            let n = s.or(a.n, "n", 1)?;
            let l1 = s.or(a.lambda1, "lambda1", 0.0)?;
            let x0v = DVector::from_vec(x0.clone());
            let bv = DVector::from_vec(beta.clone());
            let inst = TheoryInstance::new(x0v.clone(), bv.clone(), sigma, n, l1)?;
            result.insert("cos_sim".into(), json!(inst.cos_sim()));
            result.insert("mse_derivative_at_zero".into(), json!(mse_derivative_at_zero(&inst)?));
            result.insert("lambda1_star".into(), json!(lambda1_star(&x0v, &bv, sigma).ok()));
            result.insert("oracle_fridge_lambda".into(), json!(oracle_fridge_lambda(&x0v, &bv, sigma).ok()));
            settings.insert("instance".into(), json!({ "x0": x0, "beta": beta, "sigma": sigma, "n": n, "lambda1": l1 }));
            if let Some(l2s) = s.list(&a.mc_lambda2, "mc_lambda2")? {
                let reps = s.or(a.replications, "replications", 100_000)?;
                let seed = resolve_seed(seed);
                used_seed = Some(seed);
                result.insert("monte_carlo".into(), json!(mc_mse_curve(&inst, &l2s, reps, seed)?));
                settings.insert("monte_carlo".into(), json!({ "lambda2": l2s, "replications": reps }));
            }
        }
        (None, None) => {
            if a.mc_lambda2.is_some() {
                return Err(PanError::Config("--mc-lambda2 needs --x0 and --beta".into()));
            }
        }
        _ => return Err(PanError::Config("--x0 and --beta must be given together".into())),
    }
    if result.is_empty() {
        return Err(PanError::Config("nothing to evaluate: give --proportion or --x0/--beta".into()));
    }
    document("theory", &Value::Object(settings), used_seed, Value::Object(result))
}

fn shrink_curve(a: &ShrinkArgs, s: &Settings) -> Result<String> {
    let beta_norm = s.or(a.beta_norm, "beta_norm", 1.0)?;
    let points = s.or(a.points, "points", 201)?;
    if points < 2 {
        return Err(PanError::Config("--points must be at least 2".into()));
    }
    if !(beta_norm > 0.0) || !beta_norm.is_finite() {
        return Err(PanError::Config(format!("--beta-norm must be positive, got {beta_norm}")));
    }
    let pairs = s
        .words(&a.pairs, "pairs")
        .unwrap_or_else(|| ["0:0.5", "0:1", "0:-0.5", "1:1", "1:-0.5"].iter().map(|p| p.to_string()).collect());
    let mut out = String::from("cos_sim,lambda1,lambda2,factor\n");
    for pair in &pairs {
        let v = parse_list(&pair.replace(':', ","))?;
        if v.len() != 2 || v[0] < 0.0 {
            return Err(PanError::Config(format!("pair '{pair}' is not lambda1:lambda2 with lambda1 >= 0")));
        }
        for k in 0..points {
            let cos = -1.0 + 2.0 * k as f64 / (points - 1) as f64;
            let f = shrinkage_factor(cos, beta_norm, v[0], v[1]);
            out.push_str(&format!("{cos},{},{},{f}\n", v[0], v[1]));
        }
    }
    Ok(out)
}
