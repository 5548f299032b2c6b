//! Step-by-step estimation run that persists every table it produces.
//!
//! Each command writes a `manifest.json` listing the files it created, the
//! configuration hash and the seeds in use. When a step fails, the files
//! already written stay in place and the manifest records the failing step.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use labormarkdown::bootstrap::{
    pairs_bootstrap_theta, wild_bootstrap, BootstrapOptions, BootstrapReport, ConductData, ProductionFit,
};
use labormarkdown::dgp::simulate_panel;
use labormarkdown::estim::{step1_estimate, step2_estimate, GmmResult, Step1Output, Step2Output};
use labormarkdown::kalman::{estimate_sigma_h, kalman_smooth, SigmaEstimate, SmootherOutput, StateSpaceSpec};
use labormarkdown::laborsupply::{
    apply_conduct, conduct_inputs, estimate_labor_supply, estimate_theta, ConductInputs, IvResult, LaborSupplyData,
    SupplyEstimate, SupplyMethod, ThetaEstimate, WorkerType,
};
use labormarkdown::markets::{market_power, MarketPowerRecord};
use labormarkdown::model::ProductionParams;
use labormarkdown::{Error, GeometricMeans, Panel, Result};
use serde::{Deserialize, Serialize};

use crate::capital::apply_perpetual_inventory;
use crate::config::RunConfig;
use crate::io::{ingest, write_panel_file};
use crate::report::{
    interval_summary, market_power_summary, markdown_series, output_series, plot_series, wage_series, ProductivityRow,
};

pub const MANIFEST: &str = "manifest.json";
/// `report` runs inside an estimation directory, so it keeps its own manifest.
pub const REPORT_MANIFEST: &str = "report_manifest.json";

/// Failure of one named stage.
#[derive(Debug)]
pub struct PipelineError {
    pub step: String,
    pub source: Error,
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} failed: {}", self.step, self.source)
    }
}

impl std::error::Error for PipelineError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.source)
    }
}

impl PipelineError {
    /// Input or configuration problem rather than an estimation failure.
    pub fn is_validation(&self) -> bool {
        matches!(self.step.as_str(), "config" | "ingest")
            || matches!(self.source, Error::Validation(_) | Error::Config(_))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_hash: String,
    pub seeds: BTreeMap<String, u64>,
    pub steps_requested: u8,
    pub steps_completed: u8,
    pub completed: bool,
    pub failed_step: Option<String>,
    pub error: Option<String>,
    pub observations: usize,
    pub plants: usize,
    pub outputs: Vec<String>,
}

/// Output directory that remembers what it wrote.
struct Artifacts {
    dir: PathBuf,
    manifest: Manifest,
}

impl Artifacts {
    fn new(dir: &Path, command: &str, cfg: &RunConfig) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config_hash: cfg.hash(),
            seeds: BTreeMap::new(),
            steps_requested: 0,
            steps_completed: 0,
            completed: false,
            failed_step: None,
            error: None,
            observations: 0,
            plants: 0,
            outputs: Vec::new(),
        };
        Ok(Self { dir: dir.to_path_buf(), manifest })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        if !self.manifest.outputs.iter().any(|n| n == name) {
            self.manifest.outputs.push(name.into());
        }
        self.dir.join(name)
    }

    fn csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<()> {
        let mut w = csv::Writer::from_path(self.path(name))?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value)?;
        std::fs::write(self.path(name), text + "\n")?;
        Ok(())
    }

    fn write_manifest(&self) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.manifest)?;
        let name = if self.manifest.command == "report" { REPORT_MANIFEST } else { MANIFEST };
        std::fs::write(self.dir.join(name), text + "\n")?;
        Ok(())
    }

    /// Runs one stage; on failure the manifest is written before returning.
    fn stage<T>(&mut self, step: &str, f: impl FnOnce(&mut Self) -> Result<T>) -> std::result::Result<T, PipelineError> {
        match f(self) {
            Ok(v) => Ok(v),
            Err(source) => {
                self.manifest.failed_step = Some(step.into());
                self.manifest.error = Some(source.to_string());
                let _ = self.write_manifest();
                Err(PipelineError { step: step.into(), source })
            }
        }
    }

    fn finish(mut self) -> std::result::Result<Manifest, PipelineError> {
        self.manifest.completed = true;
        self.write_manifest().map_err(|source| PipelineError { step: "manifest".into(), source })?;
        Ok(self.manifest)
    }
}

/// Parameter-table row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamRow {
    pub parameter: String,
    pub estimate: f64,
    pub std_error: Option<f64>,
}

impl ParamRow {
    fn new(parameter: impl Into<String>, estimate: f64, std_error: Option<f64>) -> Self {
        Self { parameter: parameter.into(), estimate, std_error: std_error.filter(|s| s.is_finite()) }
    }
}

fn gmm_rows(gmm: &GmmResult) -> Vec<ParamRow> {
    let mut rows: Vec<ParamRow> = gmm
        .names
        .iter()
        .zip(&gmm.estimates)
        .zip(&gmm.std_errors)
        .map(|((n, &e), &s)| ParamRow::new(n.clone(), e, Some(s)))
        .collect();
    rows.push(ParamRow::new("J", gmm.j_stat, None));
    rows.push(ParamRow::new("J_df", gmm.j_df as f64, None));
    if let Some(p) = gmm.j_pvalue {
        rows.push(ParamRow::new("J_pvalue", p, None));
    }
    rows.push(ParamRow::new("jacobian_rank", gmm.jacobian_rank as f64, None));
    rows.push(ParamRow::new("mean_abs_instrument_residual_corr", gmm.mean_abs_corr, None));
    rows.push(ParamRow::new("observations", gmm.n_obs as f64, None));
    rows
}

fn iv_rows(prefix: &str, fit: &IvResult) -> Vec<ParamRow> {
    let mut rows: Vec<ParamRow> = fit
        .names
        .iter()
        .zip(&fit.coefficients)
        .zip(&fit.std_errors)
        .map(|((n, &c), &s)| ParamRow::new(format!("{prefix}{n}"), c, Some(s)))
        .collect();
    for (k, f) in fit.first_stage_f.iter().enumerate() {
        rows.push(ParamRow::new(format!("{prefix}first_stage_F[{}]", fit.names[k]), *f, None));
    }
    rows.push(ParamRow::new(format!("{prefix}observations"), fit.n as f64, None));
    rows
}

/// Everything the run estimated, for callers that continue in memory.
#[derive(Debug)]
pub struct Estimates {
    pub panel: Panel,
    pub means: GeometricMeans,
    pub step1: Option<Step1Output>,
    pub step2: Option<Step2Output>,
    pub sigma_h: Option<SigmaEstimate>,
    pub smoother: Option<SmootherOutput>,
    pub records: Option<Vec<MarketPowerRecord>>,
    pub supply: Vec<(WorkerType, SupplyEstimate, SupplyEstimate)>,
    pub conduct: Option<Vec<Option<ConductInputs>>>,
    pub theta: Option<ThetaEstimate>,
}

/// Ingests the configured panel and resolves the normalization baseline.
pub fn load_panel(cfg: &RunConfig) -> Result<(Panel, GeometricMeans)> {
    let path = cfg.input.panel.as_ref().ok_or_else(|| Error::Config("input.panel is not set".into()))?;
    let mut obs = ingest(path)?;
    cfg.validate_columns(&obs)?;
    if cfg.input.perpetual_inventory {
        apply_perpetual_inventory(&mut obs, cfg.input.depreciation)?;
    }
    let means = match &cfg.input.means {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
            let m: GeometricMeans = serde_json::from_str(&text)?;
            m.validate()?;
            m
        }
        None => GeometricMeans::from_sample(&obs)?,
    };
    Ok((Panel::new(obs)?, means))
}

fn productivity_rows(panel: &Panel, est: &Estimates) -> Vec<ProductivityRow> {
    let s1 = est.step1.as_ref().expect("step 1 ran");
    panel
        .obs()
        .iter()
        .enumerate()
        .map(|(i, o)| ProductivityRow {
            plant_id: o.plant_id.clone(),
            year: o.year,
            omega_l: s1.omega_labor[i],
            xi_l: s1.innovations[i],
            composite: est.step2.as_ref().map(|s| s.composite[i]),
            omega_h: est.smoother.as_ref().map(|s| s.omega_neutral[i]),
            xi_h: est.smoother.as_ref().and_then(|s| s.innovation[i]),
            measurement: est.smoother.as_ref().map(|s| s.measurement[i]),
        })
        .collect()
}

fn write_reports(art: &mut Artifacts, cfg: &RunConfig, est: &Estimates) -> Result<()> {
    let records = est.records.as_ref().expect("step 4 ran");
    let obs = est.panel.obs();
    let productivity = productivity_rows(&est.panel, est);
    art.csv("market_power.csv", records)?;
    art.csv("market_power_summary.csv", &market_power_summary(records, &cfg.report))?;
    let output = output_series(obs, records, &productivity, &cfg.report);
    art.csv("plot_output_market.csv", &plot_series(obs, &output, cfg.report.weighting))?;
    if est.theta.is_some() || records.iter().any(|r| r.nu_c.is_some()) {
        let md = markdown_series(records);
        let wages = wage_series(obs, records, cfg.report.working_days);
        art.csv("plot_markdowns.csv", &plot_series(obs, &md, cfg.report.weighting))?;
        art.csv("wage_counterfactuals.csv", &plot_series(obs, &wages, cfg.report.weighting))?;
        if !cfg.report.policy_intervals.is_empty() {
            let mut rows = interval_summary(obs, &md, &cfg.report);
            rows.extend(interval_summary(obs, &wages, &cfg.report));
            art.csv("interval_summary.csv", &rows)?;
        }
    }
    Ok(())
}

fn production_params(est: &Estimates) -> Result<ProductionParams> {
    let s1 = est.step1.as_ref().expect("step 1 ran");
    let s2 = est.step2.as_ref().expect("step 2 ran");
    ProductionParams::new(s1.exponents, s2.tau, est.means)
}

fn estimate(art: &mut Artifacts, cfg: &RunConfig) -> std::result::Result<Estimates, PipelineError> {
    art.stage("config", |_| cfg.validate())?;
    let (panel, means) = art.stage("ingest", |_| load_panel(cfg))?;
    art.manifest.observations = panel.len();
    art.manifest.plants = panel.plants().len();
    art.manifest.steps_requested = cfg.steps;
    let mut est = Estimates {
        panel,
        means,
        step1: None,
        step2: None,
        sigma_h: None,
        smoother: None,
        records: None,
        supply: Vec::new(),
        conduct: None,
        theta: None,
    };

    let s1 = art.stage("step 1", |a| {
        let s1 = step1_estimate(&est.panel, &est.means, &cfg.step1)?;
        a.csv("step1_estimates.csv", &gmm_rows(&s1.gmm))?;
        Ok(s1)
    })?;
    est.step1 = Some(s1);
    art.manifest.steps_completed = 1;
    if cfg.steps >= 2 {
        let s2 = art.stage("step 2", |a| {
            let s2 = step2_estimate(&est.panel, est.step1.as_ref().expect("step 1"), &est.means, &cfg.step2)?;
            let mut rows = gmm_rows(&s2.gmm);
            let (k, m, l) = s2.outer_shares;
            rows.extend([ParamRow::new("alpha_K", k, None), ParamRow::new("alpha_M", m, None), ParamRow::new("alpha_L", l, None)]);
            a.csv("step2_estimates.csv", &rows)?;
            Ok(s2)
        })?;
        est.step2 = Some(s2);
        art.manifest.steps_completed = 2;
    }
    if cfg.steps >= 3 {
        let (sig, sm) = art.stage("step 3", |a| {
            let s2 = est.step2.as_ref().expect("step 2");
            let spec = StateSpaceSpec::from_panel(&est.panel, &s2.composite, s2.persistence, s2.regulation, s2.imports, &s2.year_effects)?;
            let sig = estimate_sigma_h(&spec)?;
            let sm = kalman_smooth(&spec, sig.sigma * sig.sigma, &s2.composite);
            a.csv(
                "kalman_estimates.csv",
                &[
                    ParamRow::new("sigma_H", sig.sigma, Some(sig.std_error)),
                    ParamRow::new("loglik", sig.loglik, None),
                    ParamRow::new("at_boundary", f64::from(u8::from(sig.at_boundary)), None),
                ],
            )?;
            Ok((sig, sm))
        })?;
        est.sigma_h = Some(sig);
        est.smoother = Some(sm);
        art.manifest.steps_completed = 3;
    }
    art.stage("productivity output", |a| a.csv("productivity.csv", &productivity_rows(&est.panel, &est)))?;
    if cfg.steps >= 4 {
        let records = art.stage("step 4", |a| {
            let params = production_params(&est)?;
            let sm = est.smoother.as_ref().expect("step 3");
            let records = market_power(est.panel.obs(), &params, &est.step1.as_ref().expect("step 1").omega_labor, &sm.omega_neutral)?;
            a.csv("market_power.csv", &records)?;
            Ok(records)
        })?;
        est.records = Some(records);
        art.manifest.steps_completed = 4;
    }
    if cfg.steps >= 5 {
        art.stage("step 5", |a| step5(a, cfg, &mut est))?;
        art.manifest.steps_completed = 5;
    }
    if est.records.is_some() {
        art.stage("reports", |a| write_reports(a, cfg, &est))?;
    }
    Ok(est)
}

fn step5(art: &mut Artifacts, cfg: &RunConfig, est: &mut Estimates) -> Result<()> {
    let mut rows = Vec::new();
    let mut usable = Vec::new();
    for worker in [WorkerType::Temporary, WorkerType::Permanent] {
        let data = LaborSupplyData::from_panel(&est.panel, worker, &est.means, &cfg.supply.instruments)?;
        let iv = estimate_labor_supply(&data, &cfg.supply.time_factor, SupplyMethod::Iv)?;
        let ols = estimate_labor_supply(&data, &cfg.supply.time_factor, SupplyMethod::Ols)?;
        let label = worker.label();
        rows.extend(iv_rows(&format!("{label}.iv."), &iv.fit));
        rows.extend(iv_rows(&format!("{label}.ols."), &ols.fit));
        usable.push(iv.usable(cfg.supply.allow_out_of_range)?.clone());
        est.supply.push((worker, iv, ols));
    }
    art.csv("labor_supply_estimates.csv", &rows)?;

    let records = est.records.as_mut().expect("step 4");
    let blue = est.step1.as_ref().expect("step 1").exponents.blue;
    let inputs = conduct_inputs(&est.panel, records, &usable[0], &usable[1], blue, &est.means)?;
    let theta = estimate_theta(&est.panel, records, &inputs, &est.means, &cfg.theta)?;
    let mut t5 = iv_rows("conduct.", &theta.fit);
    t5.push(ParamRow::new("theta", theta.theta, Some(theta.theta_se)));
    t5.push(ParamRow::new("surplus_coefficient_nonnegative", f64::from(u8::from(theta.boundary)), None));
    art.csv("conduct_estimates.csv", &t5)?;
    apply_conduct(records, &inputs, Some(theta.coef));
    est.conduct = Some(inputs);
    est.theta = Some(theta);
    Ok(())
}

/// Runs the configured steps and writes their tables into `out`.
pub fn run_pipeline(cfg: &RunConfig, out: &Path) -> std::result::Result<(Manifest, Estimates), PipelineError> {
    let mut art = Artifacts::new(out, "estimate", cfg).map_err(|source| PipelineError { step: "output".into(), source })?;
    let est = estimate(&mut art, cfg)?;
    Ok((art.finish()?, est))
}

fn bootstrap_options(cfg: &RunConfig) -> BootstrapOptions {
    BootstrapOptions {
        reps: cfg.bootstrap.reps,
        seed: cfg.bootstrap.seed,
        scheme: cfg.bootstrap.scheme,
        step1: cfg.step1.clone(),
        step2: cfg.step2.clone(),
        ..Default::default()
    }
}

fn write_bootstrap(art: &mut Artifacts, prefix: &str, report: &BootstrapReport) -> Result<()> {
    report.write_replications(std::fs::File::create(art.path(&format!("{prefix}_replications.csv")))?)?;
    report.write_summary(std::fs::File::create(art.path(&format!("{prefix}_summary.csv")))?)?;
    Ok(())
}

/// Point estimates followed by the wild bootstrap of Steps 1–3 and, when
/// Step 5 is configured, the pairs bootstrap of the bargaining weight.
pub fn run_bootstrap(cfg: &RunConfig, out: &Path) -> std::result::Result<Manifest, PipelineError> {
    let mut art = Artifacts::new(out, "bootstrap", cfg).map_err(|source| PipelineError { step: "output".into(), source })?;
    art.manifest.seeds.insert("bootstrap".into(), cfg.bootstrap.seed);
    let mut point_cfg = cfg.clone();
    point_cfg.steps = cfg.steps.max(3);
    let est = estimate(&mut art, &point_cfg)?;
    art.stage("wild bootstrap", |a| {
        let fit = ProductionFit {
            step1: est.step1.as_ref().expect("step 1"),
            step2: est.step2.as_ref().expect("step 2"),
            smoother: est.smoother.as_ref().expect("step 3"),
        };
        let report = wild_bootstrap(&est.panel, &est.means, &fit, &bootstrap_options(cfg))?;
        write_bootstrap(a, "bootstrap", &report)
    })?;
    if let (Some(records), Some(inputs)) = (&est.records, &est.conduct) {
        if cfg.bootstrap.theta_reps > 0 {
            art.stage("theta bootstrap", |a| {
                let data = ConductData { panel: &est.panel, records, inputs, means: &est.means };
                let report = pairs_bootstrap_theta(&data, &cfg.theta, cfg.bootstrap.theta_reps, cfg.bootstrap.seed);
                write_bootstrap(a, "theta_bootstrap", &report)
            })?;
        }
    }
    art.finish()
}

/// Generates a synthetic panel with its baseline and latent truth.
pub fn run_simulate(cfg: &RunConfig, out: &Path) -> std::result::Result<Manifest, PipelineError> {
    let mut art = Artifacts::new(out, "simulate", cfg).map_err(|source| PipelineError { step: "output".into(), source })?;
    art.manifest.seeds.insert("simulate".into(), cfg.simulate.seed);
    art.stage("simulate", |a| {
        let sim = simulate_panel(&cfg.simulate)?;
        a.manifest.observations = sim.panel.len();
        a.manifest.plants = sim.panel.plants().len();
        write_panel_file(&a.path("panel.csv"), sim.panel.obs())?;
        a.json("means.json", &sim.truth.means)?;
        a.json("truth.json", &sim.truth)?;
        Ok(())
    })?;
    art.finish()
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Rebuilds summary tables and plot data from a previous estimation run in
/// `out` using the current report options.
pub fn run_report(cfg: &RunConfig, out: &Path) -> std::result::Result<Manifest, PipelineError> {
    let mut art = Artifacts::new(out, "report", cfg).map_err(|source| PipelineError { step: "output".into(), source })?;
    art.stage("config", |_| cfg.validate())?;
    let (panel, _) = art.stage("ingest", |_| load_panel(cfg))?;
    art.manifest.observations = panel.len();
    art.manifest.plants = panel.plants().len();
    art.stage("report", |a| {
        let records: Vec<MarketPowerRecord> = read_csv(&out.join("market_power.csv"))?;
        let productivity: Vec<ProductivityRow> = read_csv(&out.join("productivity.csv"))?;
        let aligned = records.len() == panel.len()
            && productivity.len() == panel.len()
            && panel.obs().iter().zip(&records).zip(&productivity).all(|((o, r), p)| {
                o.plant_id == r.plant_id && o.year == r.year && o.plant_id == p.plant_id && o.year == p.year
            });
        if !aligned {
            return Err(Error::Validation("stored results do not match the input panel".into()));
        }
        let obs = panel.obs();
        a.csv("market_power_summary.csv", &market_power_summary(&records, &cfg.report))?;
        let output = output_series(obs, &records, &productivity, &cfg.report);
        a.csv("plot_output_market.csv", &plot_series(obs, &output, cfg.report.weighting))?;
        let md = markdown_series(&records);
        let wages = wage_series(obs, &records, cfg.report.working_days);
        a.csv("plot_markdowns.csv", &plot_series(obs, &md, cfg.report.weighting))?;
        a.csv("wage_counterfactuals.csv", &plot_series(obs, &wages, cfg.report.weighting))?;
        if !cfg.report.policy_intervals.is_empty() {
            let mut rows = interval_summary(obs, &md, &cfg.report);
            rows.extend(interval_summary(obs, &wages, &cfg.report));
            a.csv("interval_summary.csv", &rows)?;
        }
        Ok(())
    })?;
    art.finish()
}
