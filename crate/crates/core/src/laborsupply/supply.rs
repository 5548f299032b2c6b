//! Nested-logit labor supply by worker type.
//!
//! Plants in a market form a nest; workers outside every plant form the
//! outside option. The share inversion gives
//! `ln(s_j / s_0) = c + trend·t + γ_t W_j + η ln s_{j|r} + ξ_j`, with the
//! wage and the within-nest share endogenous.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::iv::{ols, tsls, Block, IvResult};
use crate::error::{domain, Error, Result};
use crate::estim::instruments::{InstrumentContext, InstrumentSet};
use crate::model::{GeometricMeans, PanelObservation};
use crate::panel::Panel;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkerType {
    Temporary,
    Permanent,
}

impl WorkerType {
    pub fn label(self) -> &'static str {
        match self {
            Self::Temporary => "C",
            Self::Permanent => "D",
        }
    }

    pub fn days(self, o: &PanelObservation) -> f64 {
        match self {
            Self::Temporary => o.temp_days,
            Self::Permanent => o.perm_days,
        }
    }

    pub fn wage(self, o: &PanelObservation) -> f64 {
        match self {
            Self::Temporary => o.temp_wage,
            Self::Permanent => o.perm_wage,
        }
    }

    pub fn outside(self, o: &PanelObservation) -> f64 {
        match self {
            Self::Temporary => o.outside_temp_days,
            Self::Permanent => o.outside_perm_days,
        }
    }
}

/// How the wage coefficient moves over time: `γ_t = γ + Σ_k γ_k g_k(t)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimeFactor {
    Constant,
    /// `g(t) = (t − origin) / scale`.
    Linear { origin: i32, scale: f64 },
    /// Shift dummies for every interval after the first; `starts` are the
    /// first years of consecutive intervals.
    Intervals { starts: Vec<i32> },
}

impl Default for TimeFactor {
    fn default() -> Self {
        Self::Constant
    }
}

impl TimeFactor {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Constant => Ok(()),
            Self::Linear { scale, .. } if !(*scale > 0.0) => {
                Err(Error::Config(format!("time-factor scale must be positive, got {scale}")))
            }
            Self::Linear { .. } => Ok(()),
            Self::Intervals { starts } => {
                if starts.len() < 2 {
                    return Err(Error::Config("policy intervals need at least two start years".into()));
                }
                if starts.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::Config("policy interval starts must be strictly increasing".into()));
                }
                Ok(())
            }
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Self::Constant => 0,
            Self::Linear { .. } => 1,
            Self::Intervals { starts } => starts.len() - 1,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn names(&self) -> Vec<String> {
        match self {
            Self::Constant => Vec::new(),
            Self::Linear { .. } => vec!["trend".into()],
            Self::Intervals { starts } => starts[1..].iter().map(|s| format!("from{s}")).collect(),
        }
    }

    pub fn values(&self, year: i32) -> Vec<f64> {
        match self {
            Self::Constant => Vec::new(),
            Self::Linear { origin, scale } => vec![(year - origin) as f64 / scale],
            Self::Intervals { starts } => {
                let k = starts.iter().rposition(|&s| s <= year).unwrap_or(0);
                (1..starts.len()).map(|j| if j == k { 1.0 } else { 0.0 }).collect()
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaborSupplyParams {
    pub intercept: f64,
    /// Loading on `year − trend_origin`.
    pub trend: f64,
    pub trend_origin: i32,
    /// Base wage coefficient.
    pub gamma: f64,
    /// Loadings on the time factor.
    pub gamma_shifts: Vec<f64>,
    /// Within-nest correlation.
    pub eta: f64,
    pub time_factor: TimeFactor,
}

impl LaborSupplyParams {
    pub fn gamma_at(&self, year: i32) -> f64 {
        self.gamma + self.gamma_shifts.iter().zip(self.time_factor.values(year)).map(|(a, g)| a * g).sum::<f64>()
    }

    /// `0 < η < 1`.
    pub fn eta_in_range(&self) -> bool {
        self.eta > 0.0 && self.eta < 1.0
    }
}

/// `1 + (1 − η) / (γ_t W (1 − η s_{j|r} − (1 − η) s_j))`.
pub fn inverse_supply_elasticity_term(wage: f64, share: f64, cond_share: f64, params: &LaborSupplyParams, year: i32) -> Result<f64> {
    inverse_elasticity(wage, share, cond_share, params.eta, params.gamma_at(year))
}

/// The same term for explicit `η` and `γ_t`.
pub fn inverse_elasticity(wage: f64, share: f64, cond_share: f64, eta: f64, gamma_t: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&eta) {
        return Err(domain(format!("within-nest correlation {eta} is outside [0, 1)")));
    }
    let bracket = 1.0 - eta * cond_share - (1.0 - eta) * share;
    let denom = gamma_t * wage * bracket;
    if !(denom > 0.0) || !denom.is_finite() {
        return Err(domain(format!("non-positive elasticity denominator {denom}")));
    }
    Ok(1.0 + (1.0 - eta) / denom)
}

/// Estimation sample for one worker type.
#[derive(Clone, Debug, PartialEq)]
pub struct LaborSupplyData {
    /// `ln(s_j / s_0)`.
    pub log_ratio: Vec<f64>,
    pub wage: Vec<f64>,
    pub share: Vec<f64>,
    pub cond_share: Vec<f64>,
    pub year: Vec<i32>,
    pub cluster: Vec<usize>,
    pub instruments: Block,
    /// Panel row of each sample element, when built from a panel.
    pub source: Vec<usize>,
}

/// Market shares of one worker type for every panel row: `(s_j, s_{j|r}, s_0)`.
///
/// The labor force of a year is the outside pool (averaged across the
/// year's rows) plus employment at every plant; nests are market-years.
pub fn panel_shares(panel: &Panel, worker: WorkerType) -> Result<Vec<(f64, f64, f64)>> {
    let obs = panel.obs();
    let mut outside: BTreeMap<i32, (f64, usize)> = BTreeMap::new();
    let mut employed: BTreeMap<i32, f64> = BTreeMap::new();
    let mut nest: HashMap<(usize, i32), f64> = HashMap::new();
    for (i, o) in obs.iter().enumerate() {
        let x = worker.days(o);
        let out = worker.outside(o);
        if !(out > 0.0) {
            return Err(domain(format!("outside {} pool must be positive for {} in {}", worker.label(), o.plant_id, o.year)));
        }
        let e = outside.entry(o.year).or_insert((0.0, 0));
        e.0 += out;
        e.1 += 1;
        *employed.entry(o.year).or_insert(0.0) += x;
        *nest.entry((panel.market_index(i), o.year)).or_insert(0.0) += x;
    }
    Ok(obs
        .iter()
        .enumerate()
        .map(|(i, o)| {
            let (sum, count) = outside[&o.year];
            let pool = sum / count as f64;
            let total = pool + employed[&o.year];
            let x = worker.days(o);
            (x / total, x / nest[&(panel.market_index(i), o.year)], pool / total)
        })
        .collect())
}

/// Instruments for the supply equation: own terms, optionally the mean of
/// each term over rival plants in the same market-year.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SupplyInstruments {
    pub terms: Vec<String>,
    pub rival_means: bool,
}

impl Default for SupplyInstruments {
    fn default() -> Self {
        Self { terms: vec!["log_P".into(), "log_K".into(), "log_n_market".into()], rival_means: true }
    }
}

impl LaborSupplyData {
    pub fn from_panel(panel: &Panel, worker: WorkerType, means: &GeometricMeans, spec: &SupplyInstruments) -> Result<Self> {
        let set = InstrumentSet::parse(&spec.terms)?;
        if set.uses_omega_labor() {
            return Err(Error::Config("labor-supply instruments cannot use omega_L".into()));
        }
        let shares = panel_shares(panel, worker)?;
        let market_size = panel.plants_in_market_year();
        let ctx = InstrumentContext { panel, means, omega_labor: None, market_size: &market_size };
        let rows: Vec<Option<Vec<f64>>> = (0..panel.len()).map(|i| set.row(&ctx, i)).collect::<Result<_>>()?;
        let obs = panel.obs();

        let mut names = set.names();
        let mut rival: Vec<Option<Vec<f64>>> = vec![None; panel.len()];
        if spec.rival_means {
            names.extend(set.names().iter().map(|n| format!("rival.{n}")));
            let mut groups: HashMap<(usize, i32), Vec<usize>> = HashMap::new();
            for i in 0..panel.len() {
                if rows[i].is_some() {
                    groups.entry((panel.market_index(i), obs[i].year)).or_default().push(i);
                }
            }
            for members in groups.values() {
                for &i in members {
                    let others: Vec<&Vec<f64>> =
                        members.iter().filter(|&&k| k != i).map(|&k| rows[k].as_ref().expect("filtered")).collect();
                    let own = rows[i].as_ref().expect("filtered");
                    rival[i] = Some(if others.is_empty() {
                        own.clone()
                    } else {
                        (0..own.len()).map(|c| others.iter().map(|r| r[c]).sum::<f64>() / others.len() as f64).collect()
                    });
                }
            }
        }

        let mut data = Self {
            log_ratio: Vec::new(),
            wage: Vec::new(),
            share: Vec::new(),
            cond_share: Vec::new(),
            year: Vec::new(),
            cluster: Vec::new(),
            instruments: Block::empty(0),
            source: Vec::new(),
        };
        let mut z_rows = Vec::new();
        for (i, row) in rows.into_iter().enumerate() {
            let Some(mut row) = row else { continue };
            let (s, sc, s0) = shares[i];
            if !(s > 0.0) {
                continue;
            }
            if let Some(r) = &rival[i] {
                row.extend(r.iter().copied());
            }
            data.log_ratio.push((s / s0).ln());
            data.wage.push(worker.wage(&obs[i]));
            data.share.push(s);
            data.cond_share.push(sc);
            data.year.push(obs[i].year);
            data.cluster.push(panel.plant_index(i));
            data.source.push(i);
            z_rows.push(row);
        }
        // Rival means of market-level terms repeat the own column.
        let own = set.names().len();
        let keep: Vec<usize> = (0..names.len())
            .filter(|&c| c < own || z_rows.iter().any(|r| (r[c] - r[c - own]).abs() > 1e-12 * r[c].abs().max(1.0)))
            .collect();
        let names: Vec<String> = keep.iter().map(|&c| names[c].clone()).collect();
        let n = z_rows.len();
        data.instruments = Block::new(names, nalgebra::DMatrix::from_fn(n, keep.len(), |r, c| z_rows[r][keep[c]]));
        Ok(data)
    }

    pub fn len(&self) -> usize {
        self.log_ratio.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_ratio.is_empty()
    }

    /// Rows selected by `keep`, in order.
    pub fn subset(&self, keep: &[usize]) -> Self {
        let pick = |v: &[f64]| keep.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Self {
            log_ratio: pick(&self.log_ratio),
            wage: pick(&self.wage),
            share: pick(&self.share),
            cond_share: pick(&self.cond_share),
            year: keep.iter().map(|&i| self.year[i]).collect(),
            cluster: keep.iter().map(|&i| self.cluster[i]).collect(),
            instruments: Block::new(
                self.instruments.names.clone(),
                self.instruments.data.select_rows(keep.iter()),
            ),
            source: keep.iter().filter_map(|&i| self.source.get(i).copied()).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupplyMethod {
    #[default]
    Iv,
    Ols,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupplyEstimate {
    pub params: LaborSupplyParams,
    pub fit: IvResult,
    pub method: SupplyMethod,
    /// `η` inside `(0, 1)`; elasticities refuse to run otherwise unless overridden.
    pub eta_in_range: bool,
    /// `γ_t > 0` in every sample year.
    pub upward_sloping: bool,
}

impl SupplyEstimate {
    /// Parameters for elasticity computations, refusing an out-of-range `η`
    /// unless `allow_out_of_range`.
    pub fn usable(&self, allow_out_of_range: bool) -> Result<&LaborSupplyParams> {
        if self.eta_in_range || allow_out_of_range {
            Ok(&self.params)
        } else {
            Err(Error::Estimation(format!(
                "estimated within-nest correlation {:.4} is outside (0, 1)",
                self.params.eta
            )))
        }
    }
}

const COND_SHARE: &str = "log_cond_share";

/// 2SLS (or OLS) of the share inversion.
pub fn estimate_labor_supply(data: &LaborSupplyData, time_factor: &TimeFactor, method: SupplyMethod) -> Result<SupplyEstimate> {
    time_factor.validate()?;
    let n = data.len();
    if n == 0 {
        return Err(Error::Estimation("labor-supply sample is empty".into()));
    }
    if data.cond_share.iter().all(|&s| (s - 1.0).abs() < 1e-12) {
        return Err(Error::Estimation(
            "every market has a single plant, so the within-nest correlation is unidentified".into(),
        ));
    }
    let origin = *data.year.iter().min().expect("non-empty");
    let factors: Vec<Vec<f64>> = data.year.iter().map(|&y| time_factor.values(y)).collect();
    let f_names = time_factor.names();

    let mut endog = vec![("wage".to_string(), data.wage.clone())];
    for (k, name) in f_names.iter().enumerate() {
        endog.push((format!("wage*{name}"), (0..n).map(|i| data.wage[i] * factors[i][k]).collect()));
    }
    endog.push((COND_SHARE.into(), data.cond_share.iter().map(|s| s.ln()).collect()));
    let endog = Block::from_columns(endog);
    let exog = Block::from_columns(vec![
        ("const".into(), vec![1.0; n]),
        ("year_trend".into(), data.year.iter().map(|&y| (y - origin) as f64).collect()),
    ]);

    let fit = match method {
        SupplyMethod::Ols => ols(&data.log_ratio, &endog, &exog, Some(&data.cluster))?,
        SupplyMethod::Iv => {
            let z = &data.instruments;
            let mut cols: Vec<(String, Vec<f64>)> =
                (0..z.ncols()).map(|c| (z.names[c].clone(), z.data.column(c).iter().copied().collect())).collect();
            for (k, name) in f_names.iter().enumerate() {
                for c in 0..z.ncols() {
                    cols.push((
                        format!("{}*{name}", z.names[c]),
                        (0..n).map(|i| z.data[(i, c)] * factors[i][k]).collect(),
                    ));
                }
            }
            tsls(&data.log_ratio, &endog, &exog, &Block::from_columns(cols), Some(&data.cluster))?
        }
    };
    let c = |name: &str| fit.coef(name).expect("named coefficient");
    let params = LaborSupplyParams {
        intercept: c("const"),
        trend: c("year_trend"),
        trend_origin: origin,
        gamma: c("wage"),
        gamma_shifts: f_names.iter().map(|n| c(&format!("wage*{n}"))).collect(),
        eta: c(COND_SHARE),
        time_factor: time_factor.clone(),
    };
    let mut years = data.year.clone();
    years.sort_unstable();
    years.dedup();
    let upward_sloping = years.iter().all(|&y| params.gamma_at(y) > 0.0);
    Ok(SupplyEstimate { eta_in_range: params.eta_in_range(), upward_sloping, params, fit, method })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(eta: f64, gamma: f64) -> LaborSupplyParams {
        LaborSupplyParams {
            intercept: 0.0,
            trend: 0.0,
            trend_origin: 0,
            gamma,
            gamma_shifts: Vec::new(),
            eta,
            time_factor: TimeFactor::Constant,
        }
    }

    #[test]
    fn plain_logit_limit() {
        let v = inverse_supply_elasticity_term(100.0, 0.0, 0.0, &params(0.0, 0.01), 2000).unwrap();
        assert!((v - 2.0).abs() < 1e-15);
    }

    #[test]
    fn competitive_limit() {
        let v = inverse_supply_elasticity_term(1e12, 0.1, 0.5, &params(0.3, 1.0), 2000).unwrap();
        assert!((v - 1.0).abs() < 1e-10);
    }

    #[test]
    fn non_positive_denominator_is_flagged() {
        assert!(inverse_supply_elasticity_term(100.0, 0.5, 1.0, &params(0.99, 0.01), 2000).is_ok());
        assert!(inverse_supply_elasticity_term(100.0, 0.5, 1.0, &params(0.5, -0.01), 2000).is_err());
    }

    #[test]
    fn interval_factor_dummies() {
        let f = TimeFactor::Intervals { starts: vec![1990, 2000, 2005] };
        assert_eq!(f.values(1995), vec![0.0, 0.0]);
        assert_eq!(f.values(2001), vec![1.0, 0.0]);
        assert_eq!(f.values(2010), vec![0.0, 1.0]);
        assert!(TimeFactor::Intervals { starts: vec![2000, 1990] }.validate().is_err());
    }

    #[test]
    fn time_varying_gamma() {
        let mut p = params(0.2, 0.01);
        p.time_factor = TimeFactor::Linear { origin: 2000, scale: 10.0 };
        p.gamma_shifts = vec![0.002];
        assert!((p.gamma_at(2010) - 0.012).abs() < 1e-15);
    }
}
