//! Substitution exponents and labor-augmenting productivity.
//!
//! The ratio of the white-collar and materials first-order conditions pins
//! down labor-augmenting productivity as a closed-form function of the three
//! exponents. Plugging that function into its law of motion gives moment
//! conditions on the innovation; year effects, persistence and covariate
//! loadings are concentrated out.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::gmm::{gmm_estimate_profiled, profiled_rank_check, GmmOptions, GmmResult, LinearDesign, ProfiledSystem, RankReport};
use super::instruments::{InstrumentContext, InstrumentSet};
use super::year_groups;
use crate::error::{Error, Result};
use crate::model::{omega_labor_from_logs, worker_shares_from_means, Exponents, GeometricMeans, LawOfMotion, LogInputs, WorkerShares};
use crate::panel::Panel;
use crate::stats::sd;

/// Lagged input levels, the lagged white-collar bill, their squares and
/// pairwise products of lagged employment.
pub const DEFAULT_INSTRUMENTS: [&str; 11] = [
    "lag.log_H",
    "lag.log_C",
    "lag.log_D",
    "lag.log_M",
    "lag.log_wbill_H",
    "lag.log_H^2",
    "lag.log_C^2",
    "lag.log_D^2",
    "lag.log_H*lag.log_C",
    "lag.log_C*lag.log_D",
    "lag.log_H*lag.log_D",
];

const NAMES: [&str; 3] = ["sigma_O", "sigma_M", "sigma_I"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Step1Options {
    pub gmm: GmmOptions,
    /// External instruments; the lagged productivity, regulation, import
    /// indicator and year dummies are always added.
    pub instruments: Vec<String>,
    /// Search box for (outer, labor, blue) exponents.
    pub bounds: [(f64, f64); 3],
    /// Exponents held at a given value instead of estimated; serialized as
    /// a table keyed by exponent name.
    #[serde(with = "fixed_by_name")]
    pub fixed: [Option<f64>; 3],
}

mod fixed_by_name {
    use std::collections::BTreeMap;

    use serde::{de::Error as _, Deserialize, Deserializer, Serialize, Serializer};

    use super::NAMES;

    pub fn serialize<S: Serializer>(fixed: &[Option<f64>; 3], s: S) -> Result<S::Ok, S::Error> {
        let map: BTreeMap<&str, f64> = NAMES.iter().zip(fixed).filter_map(|(n, v)| v.map(|v| (*n, v))).collect();
        map.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[Option<f64>; 3], D::Error> {
        let map = BTreeMap::<String, f64>::deserialize(d)?;
        let mut out = [None; 3];
        for (k, v) in map {
            let i = NAMES.iter().position(|n| *n == k).ok_or_else(|| D::Error::custom(format!("unknown exponent '{k}'")))?;
            out[i] = Some(v);
        }
        Ok(out)
    }
}

impl Default for Step1Options {
    fn default() -> Self {
        Self {
            gmm: GmmOptions::default(),
            instruments: DEFAULT_INSTRUMENTS.iter().map(|s| s.to_string()).collect(),
            bounds: [(0.01, 0.99); 3],
            fixed: [None; 3],
        }
    }
}

/// Profiled moment system of the first step.
pub struct Step1System<'a> {
    panel: &'a Panel,
    means: GeometricMeans,
    workers: WorkerShares,
    logs: Vec<LogInputs>,
    sample: Vec<usize>,
    external: DMatrix<f64>,
    external_names: Vec<String>,
    groups: Vec<usize>,
    years: Vec<i32>,
    clusters: Vec<usize>,
    free: Vec<usize>,
    fixed: [Option<f64>; 3],
    bounds: [(f64, f64); 3],
}

impl<'a> Step1System<'a> {
    pub fn new(panel: &'a Panel, means: &GeometricMeans, opts: &Step1Options) -> Result<Self> {
        let set = InstrumentSet::parse(&opts.instruments)?;
        if set.uses_omega_labor() {
            return Err(Error::Config("first-step external instruments cannot use omega_L".into()));
        }
        let workers = worker_shares_from_means(means)?;
        let logs = panel.obs().iter().map(|o| LogInputs::of(o, means)).collect::<Result<Vec<_>>>()?;
        let market_size = panel.plants_in_market_year();
        let ctx = InstrumentContext { panel, means, omega_labor: None, market_size: &market_size };
        let mut sample = Vec::new();
        let mut rows = Vec::new();
        for i in panel.with_lag() {
            if let Some(r) = set.row(&ctx, i)? {
                sample.push(i);
                rows.push(r);
            }
        }
        let free: Vec<usize> = (0..3).filter(|&k| opts.fixed[k].is_none()).collect();
        let (groups, years) = year_groups(panel, &sample);
        let n_params = free.len() + years.len() + 3;
        let n_moments = years.len() + set.len() + 3;
        if n_moments < n_params {
            return Err(Error::Config(format!(
                "first step has {n_moments} moments for {n_params} parameters; add external instruments"
            )));
        }
        if sample.len() <= n_params {
            return Err(Error::Estimation(format!("first step has only {} usable observations", sample.len())));
        }
        let external = DMatrix::from_fn(sample.len(), set.len(), |r, c| rows[r][c]);
        let clusters = sample.iter().map(|&i| panel.plant_index(i)).collect();
        Ok(Self {
            panel,
            means: *means,
            workers,
            logs,
            sample,
            external,
            external_names: set.names(),
            groups,
            years,
            clusters,
            free,
            fixed: opts.fixed,
            bounds: opts.bounds,
        })
    }

    pub fn years(&self) -> &[i32] {
        &self.years
    }

    pub fn sample(&self) -> &[usize] {
        &self.sample
    }

    fn exponents(&self, free: &[f64]) -> Exponents {
        let mut s = [0.0; 3];
        let mut it = free.iter();
        for k in 0..3 {
            s[k] = match self.fixed[k] {
                Some(v) => v,
                None => *it.next().expect("free exponent"),
            };
        }
        Exponents::new(s[0], s[1], s[2])
    }

    /// Labor-augmenting productivity of every observation at given exponents.
    pub fn omega_labor(&self, exps: &Exponents) -> Result<Vec<f64>> {
        self.logs.iter().map(|l| omega_labor_from_logs(l, exps, &self.workers, &self.means)).collect()
    }

    /// Full parameter vector (free exponents, year effects, persistence,
    /// loadings) matching this system's layout.
    pub fn full_params(&self, exps: &Exponents, law: &LawOfMotion) -> Result<Vec<f64>> {
        let mut p: Vec<f64> = self.free.iter().map(|&k| exps.as_array()[k]).collect();
        for y in &self.years {
            p.push(law.year_effect(*y)?);
        }
        p.extend([law.persistence, law.regulation, law.imports]);
        Ok(p)
    }

    pub fn rank_at(&self, exps: &Exponents, law: &LawOfMotion) -> Result<RankReport> {
        profiled_rank_check(self, &self.full_params(exps, law)?)
    }
}

impl ProfiledSystem for Step1System<'_> {
    fn nonlinear_names(&self) -> Vec<String> {
        self.free.iter().map(|&k| NAMES[k].to_string()).collect()
    }

    fn linear_names(&self) -> Vec<String> {
        let mut v: Vec<String> = self.years.iter().map(|y| format!("iota_L[{y}]")).collect();
        v.extend(["rho_L", "beta_L1", "beta_L2"].map(String::from));
        v
    }

    fn nonlinear_bounds(&self) -> Vec<(f64, f64)> {
        self.free.iter().map(|&k| self.bounds[k]).collect()
    }

    fn instrument_names(&self) -> Vec<String> {
        let mut v = self.external_names.clone();
        v.extend(["lag.omega_L", "IDA", "Imp_lag"].map(String::from));
        v
    }

    fn design(&self, nonlinear: &[f64]) -> Result<LinearDesign> {
        let exps = self.exponents(nonlinear);
        let omega = self.omega_labor(&exps)?;
        let n = self.sample.len();
        let e = self.external.ncols();
        let obs = self.panel.obs();
        let mut y = DVector::zeros(n);
        let mut x = DMatrix::zeros(n, 3);
        let mut z = DMatrix::zeros(n, e + 3);
        z.columns_mut(0, e).copy_from(&self.external);
        for (r, &i) in self.sample.iter().enumerate() {
            let lag = self.panel.lag(i).expect("sample has lags");
            y[r] = omega[i];
            let cov = [omega[lag], obs[i].regulation, obs[i].importer_lag];
            for c in 0..3 {
                x[(r, c)] = cov[c];
                z[(r, e + c)] = cov[c];
            }
        }
        Ok(LinearDesign { y, x, z, groups: self.groups.clone(), n_groups: self.years.len(), clusters: self.clusters.clone() })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Step1Output {
    pub exponents: Exponents,
    pub persistence: f64,
    pub regulation: f64,
    pub imports: f64,
    pub year_effects: BTreeMap<i32, f64>,
    /// Labor-augmenting productivity for every panel observation.
    pub omega_labor: Vec<f64>,
    /// Innovations where the previous year is observed.
    pub innovations: Vec<Option<f64>>,
    pub innovation_sd: f64,
    /// Exponents within 1e-3 of a search bound.
    pub at_bound: [bool; 3],
    pub gmm: GmmResult,
}

impl Step1Output {
    pub fn law(&self) -> LawOfMotion {
        LawOfMotion {
            persistence: self.persistence,
            regulation: self.regulation,
            imports: self.imports,
            year_effects: self.year_effects.clone(),
            innovation_sd: self.innovation_sd,
        }
    }

    pub fn interior(&self) -> bool {
        !self.at_bound.iter().any(|&b| b)
    }
}

/// Runs the first step on a panel normalized by `means`.
pub fn step1_estimate(panel: &Panel, means: &GeometricMeans, opts: &Step1Options) -> Result<Step1Output> {
    let system = Step1System::new(panel, means, opts)?;
    let gmm = gmm_estimate_profiled(&system, &opts.gmm)?;
    let q = system.free.len();
    let exponents = system.exponents(&gmm.estimates[..q]);
    let g = system.years.len();
    let year_effects: BTreeMap<i32, f64> =
        system.years.iter().enumerate().map(|(k, &y)| (y, gmm.estimates[q + k])).collect();
    let (persistence, regulation, imports) = (gmm.estimates[q + g], gmm.estimates[q + g + 1], gmm.estimates[q + g + 2]);
    let omega_labor = system.omega_labor(&exponents)?;
    let obs = panel.obs();
    let innovations: Vec<Option<f64>> = (0..panel.len())
        .map(|i| {
            let lag = panel.lag(i)?;
            let iota = year_effects.get(&obs[i].year)?;
            Some(
                omega_labor[i]
                    - iota
                    - persistence * omega_labor[lag]
                    - regulation * obs[i].regulation
                    - imports * obs[i].importer_lag,
            )
        })
        .collect();
    let observed: Vec<f64> = innovations.iter().flatten().copied().collect();
    let arr = exponents.as_array();
    let at_bound = [0, 1, 2].map(|k| {
        opts.fixed[k].is_none() && (arr[k] - opts.bounds[k].0 < 1e-3 || opts.bounds[k].1 - arr[k] < 1e-3)
    });
    Ok(Step1Output {
        exponents,
        persistence,
        regulation,
        imports,
        year_effects,
        omega_labor,
        innovations,
        innovation_sd: sd(&observed),
        at_bound,
        gmm,
    })
}
