//! Capital wedge and the composite of Hicks-neutral productivity and
//! measurement error.
//!
//! Given first-step exponents and labor-augmenting productivity, log observed
//! output net of the CES component `ln f(τ)` follows the Hicks-neutral law of
//! motion up to a composite error that mixes the innovation with current and
//! lagged measurement error.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::gmm::{gmm_estimate_profiled, profiled_rank_check, GmmOptions, GmmResult, LinearDesign, ProfiledSystem, RankReport};
use super::instruments::{InstrumentContext, InstrumentSet};
use super::step1::Step1Output;
use super::year_groups;
use crate::error::{Error, Result};
use crate::model::{log_f_from_logs, log_labor_aggregate, shares_from_tau, worker_shares_from_means, GeometricMeans, LawOfMotion, LogInputs};
use crate::panel::Panel;

/// Current and lagged capital, lagged labor-augmenting productivity.
pub const DEFAULT_INSTRUMENTS: [&str; 3] = ["log_K", "lag.log_K", "lag.omega_L"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Step2Options {
    pub gmm: GmmOptions,
    pub instruments: Vec<String>,
    pub bounds: (f64, f64),
}

impl Default for Step2Options {
    fn default() -> Self {
        let gmm = GmmOptions { optim: super::OptimOptions { starts: 4, ..Default::default() }, ..Default::default() };
        Self { gmm, instruments: DEFAULT_INSTRUMENTS.iter().map(|s| s.to_string()).collect(), bounds: (0.001, 20.0) }
    }
}

pub struct Step2System<'a> {
    panel: &'a Panel,
    log_output: Vec<f64>,
    log_capital: Vec<f64>,
    log_materials: Vec<f64>,
    log_labor: Vec<f64>,
    omega_labor: Vec<f64>,
    outer: f64,
    labor_to_materials: f64,
    sample: Vec<usize>,
    external: DMatrix<f64>,
    external_names: Vec<String>,
    groups: Vec<usize>,
    years: Vec<i32>,
    clusters: Vec<usize>,
    bounds: (f64, f64),
}

impl<'a> Step2System<'a> {
    pub fn new(panel: &'a Panel, step1: &Step1Output, means: &GeometricMeans, opts: &Step2Options) -> Result<Self> {
        let set = InstrumentSet::parse(&opts.instruments)?;
        let workers = worker_shares_from_means(means)?;
        let logs = panel.obs().iter().map(|o| LogInputs::of(o, means)).collect::<Result<Vec<_>>>()?;
        let market_size = panel.plants_in_market_year();
        let ctx = InstrumentContext { panel, means, omega_labor: Some(&step1.omega_labor), market_size: &market_size };
        let mut sample = Vec::new();
        let mut rows = Vec::new();
        for i in panel.with_lag() {
            if let Some(r) = set.row(&ctx, i)? {
                sample.push(i);
                rows.push(r);
            }
        }
        let (groups, years) = year_groups(panel, &sample);
        let n_params = 1 + years.len() + 3;
        let n_moments = years.len() + set.len() + 2;
        if n_moments < n_params {
            return Err(Error::Config(format!(
                "second step has {n_moments} moments for {n_params} parameters; add external instruments"
            )));
        }
        if sample.len() <= n_params {
            return Err(Error::Estimation(format!("second step has only {} usable observations", sample.len())));
        }
        let external = DMatrix::from_fn(sample.len(), set.len(), |r, c| rows[r][c]);
        let clusters = sample.iter().map(|&i| panel.plant_index(i)).collect();
        Ok(Self {
            panel,
            log_output: logs.iter().map(|l| l.output).collect(),
            log_capital: logs.iter().map(|l| l.capital).collect(),
            log_materials: logs.iter().map(|l| l.materials).collect(),
            log_labor: logs.iter().map(|l| log_labor_aggregate(l, &step1.exponents, &workers)).collect(),
            omega_labor: step1.omega_labor.clone(),
            outer: step1.exponents.outer,
            labor_to_materials: means.labor_to_materials(),
            sample,
            external,
            external_names: set.names(),
            groups,
            years,
            clusters,
            bounds: opts.bounds,
        })
    }

    pub fn years(&self) -> &[i32] {
        &self.years
    }

    /// `ln f(τ)` for every panel observation.
    pub fn log_f(&self, tau: f64) -> Vec<f64> {
        (0..self.log_output.len())
            .map(|i| {
                log_f_from_logs(
                    self.log_capital[i],
                    self.log_materials[i],
                    self.log_labor[i],
                    self.omega_labor[i],
                    tau,
                    self.outer,
                    self.labor_to_materials,
                )
            })
            .collect()
    }

    /// Normalized labor aggregate (log) at the first-step exponents.
    pub fn log_labor(&self) -> &[f64] {
        &self.log_labor
    }

    pub fn full_params(&self, tau: f64, law: &LawOfMotion) -> Result<Vec<f64>> {
        let mut p = vec![tau];
        for y in &self.years {
            p.push(law.year_effect(*y)?);
        }
        p.extend([law.persistence, law.regulation, law.imports]);
        Ok(p)
    }

    pub fn rank_at(&self, tau: f64, law: &LawOfMotion) -> Result<RankReport> {
        profiled_rank_check(self, &self.full_params(tau, law)?)
    }
}

impl ProfiledSystem for Step2System<'_> {
    fn nonlinear_names(&self) -> Vec<String> {
        vec!["tau".into()]
    }

    fn linear_names(&self) -> Vec<String> {
        let mut v: Vec<String> = self.years.iter().map(|y| format!("iota_H[{y}]")).collect();
        v.extend(["rho_H", "beta_H1", "beta_H2"].map(String::from));
        v
    }

    fn nonlinear_bounds(&self) -> Vec<(f64, f64)> {
        vec![self.bounds]
    }

    fn instrument_names(&self) -> Vec<String> {
        let mut v = self.external_names.clone();
        v.extend(["IDA", "Imp_lag"].map(String::from));
        v
    }

    fn design(&self, nonlinear: &[f64]) -> Result<LinearDesign> {
        let tau = nonlinear[0];
        if !(tau > 0.0) {
            return Err(Error::Parameter(format!("capital wedge must be positive, got {tau}")));
        }
        let lf = self.log_f(tau);
        let obs = self.panel.obs();
        let n = self.sample.len();
        let e = self.external.ncols();
        let mut y = DVector::zeros(n);
        let mut x = DMatrix::zeros(n, 3);
        let mut z = DMatrix::zeros(n, e + 2);
        z.columns_mut(0, e).copy_from(&self.external);
        for (r, &i) in self.sample.iter().enumerate() {
            let lag = self.panel.lag(i).expect("sample has lags");
            y[r] = self.log_output[i] - lf[i];
            x[(r, 0)] = self.log_output[lag] - lf[lag];
            x[(r, 1)] = obs[i].regulation;
            x[(r, 2)] = obs[i].importer_lag;
            z[(r, e)] = obs[i].regulation;
            z[(r, e + 1)] = obs[i].importer_lag;
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("log f is not finite".into()));
        }
        Ok(LinearDesign { y, x, z, groups: self.groups.clone(), n_groups: self.years.len(), clusters: self.clusters.clone() })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Step2Output {
    pub tau: f64,
    /// Capital, materials and labor shares implied by `tau`.
    pub outer_shares: (f64, f64, f64),
    pub persistence: f64,
    pub regulation: f64,
    pub imports: f64,
    pub year_effects: BTreeMap<i32, f64>,
    /// `ln Q̈̃ − ln f̂` for every observation; year effects are not removed.
    pub composite: Vec<f64>,
    pub log_f: Vec<f64>,
    /// Normalized log labor aggregate used in `f`.
    pub log_labor: Vec<f64>,
    /// Composite residual where the previous year is observed.
    pub residuals: Vec<Option<f64>>,
    pub at_bound: bool,
    pub gmm: GmmResult,
}

impl Step2Output {
    pub fn law(&self, innovation_sd: f64) -> LawOfMotion {
        LawOfMotion {
            persistence: self.persistence,
            regulation: self.regulation,
            imports: self.imports,
            year_effects: self.year_effects.clone(),
            innovation_sd,
        }
    }
}

pub fn step2_estimate(panel: &Panel, step1: &Step1Output, means: &GeometricMeans, opts: &Step2Options) -> Result<Step2Output> {
    let system = Step2System::new(panel, step1, means, opts)?;
    let gmm = gmm_estimate_profiled(&system, &opts.gmm)?;
    let tau = gmm.estimates[0];
    let g = system.years.len();
    let year_effects: BTreeMap<i32, f64> = system.years.iter().enumerate().map(|(k, &y)| (y, gmm.estimates[1 + k])).collect();
    let (persistence, regulation, imports) = (gmm.estimates[1 + g], gmm.estimates[2 + g], gmm.estimates[3 + g]);
    let log_f = system.log_f(tau);
    let composite: Vec<f64> = system.log_output.iter().zip(&log_f).map(|(q, f)| q - f).collect();
    let obs = panel.obs();
    let residuals = (0..panel.len())
        .map(|i| {
            let lag = panel.lag(i)?;
            let iota = year_effects.get(&obs[i].year)?;
            Some(composite[i] - iota - persistence * composite[lag] - regulation * obs[i].regulation - imports * obs[i].importer_lag)
        })
        .collect();
    let at_bound = tau - opts.bounds.0 < 1e-3 || opts.bounds.1 - tau < 1e-3;
    Ok(Step2Output {
        tau,
        outer_shares: shares_from_tau(tau, means)?,
        persistence,
        regulation,
        imports,
        year_effects,
        composite,
        log_f,
        log_labor: system.log_labor.clone(),
        residuals,
        at_bound,
        gmm,
    })
}
