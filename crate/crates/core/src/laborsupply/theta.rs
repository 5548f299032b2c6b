//! Bargaining weight of permanent workers and the split of composite
//! frictions into monopsony and coordination-cost components.
//!
//! Temporary workers face wage posting, so `F^C = ν̃^C − ν^C`. The
//! permanent-worker coordination cost is proxied from `F^C` by the chain
//! rule through the blue-collar nest, and what remains of `ν̃^D` beyond the
//! posting term loads on the surplus ratio `Π̂ / (D W^D)` with coefficient
//! `(θ − 1) / θ`.

use serde::{Deserialize, Serialize};

use super::iv::{tsls, Block, IvResult};
use super::supply::{inverse_supply_elasticity_term, panel_shares, LaborSupplyParams, WorkerType};
use crate::error::{Error, Result};
use crate::estim::instruments::{InstrumentContext, InstrumentSet};
use crate::markets::{markdown, MarketPowerRecord};
use crate::model::GeometricMeans;
use crate::panel::Panel;

/// Strike intensity times lagged strike-eligible employment, and the
/// materials price.
pub const DEFAULT_INSTRUMENTS: [&str; 2] = ["log_strike*lag.log_DH", "log_P_M"];

const SURPLUS: &str = "surplus_ratio";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ThetaOptions {
    pub instruments: Vec<String>,
}

impl Default for ThetaOptions {
    fn default() -> Self {
        Self { instruments: DEFAULT_INSTRUMENTS.iter().map(|s| s.to_string()).collect() }
    }
}

/// Per-observation ingredients of the conduct equation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConductInputs {
    /// Temporary-worker inverse-elasticity term.
    pub nu_c: f64,
    /// Permanent-worker inverse-elasticity term (wage posting).
    pub nu_d_posting: f64,
    pub f_c: f64,
    /// Chain-rule proxy for `F^D`.
    pub f_d_proxy: f64,
    /// `Π̂ / (D W^D)`.
    pub surplus_ratio: f64,
}

impl ConductInputs {
    /// Left-hand side of the conduct regression.
    pub fn lhs(&self, nu_tilde_d: f64) -> f64 {
        (nu_tilde_d - self.nu_d_posting - self.f_d_proxy) / (self.nu_d_posting - 1.0)
    }

    /// `ν^D` under bargaining with surplus coefficient `coef`.
    pub fn nu_d(&self, coef: f64) -> f64 {
        1.0 + (self.nu_d_posting - 1.0) * (1.0 + coef * self.surplus_ratio)
    }
}

/// Conduct ingredients for every record; `None` where an elasticity term is
/// undefined (non-positive denominator) or a wage bill is zero.
pub fn conduct_inputs(
    panel: &Panel,
    records: &[MarketPowerRecord],
    temp: &LaborSupplyParams,
    perm: &LaborSupplyParams,
    blue_exponent: f64,
    means: &GeometricMeans,
) -> Result<Vec<Option<ConductInputs>>> {
    if records.len() != panel.len() {
        return Err(Error::Config("market-power records do not match the panel".into()));
    }
    let sc = panel_shares(panel, WorkerType::Temporary)?;
    let sd = panel_shares(panel, WorkerType::Permanent)?;
    Ok(panel
        .obs()
        .iter()
        .zip(records)
        .enumerate()
        .map(|(i, (o, r))| {
            let nu_c = inverse_supply_elasticity_term(o.temp_wage, sc[i].0, sc[i].1, temp, o.year).ok()?;
            let nu_d_posting = inverse_supply_elasticity_term(o.perm_wage, sd[i].0, sd[i].1, perm, o.year).ok()?;
            let f_c = r.nu_tilde_c - nu_c;
            let wage_ratio = (o.temp_wage / means.temp_wage) / (o.perm_wage / means.perm_wage);
            let qty_ratio = (o.perm_days / means.perm) / (o.temp_days / means.temp);
            let f_d_proxy = f_c * wage_ratio * qty_ratio.powf(blue_exponent - 1.0);
            let surplus_ratio = r.pi_hat / o.perm_bill();
            [f_d_proxy, surplus_ratio].iter().all(|v| v.is_finite()).then_some(ConductInputs {
                nu_c,
                nu_d_posting,
                f_c,
                f_d_proxy,
                surplus_ratio,
            })
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaEstimate {
    pub fit: IvResult,
    /// Surplus-ratio coefficient, `(θ − 1) / θ`.
    pub coef: f64,
    pub coef_se: f64,
    pub theta: f64,
    pub theta_se: f64,
    /// `coef ≥ 0`, i.e. `θ ≥ 1` or undefined.
    pub boundary: bool,
    /// Panel rows used.
    pub sample: Vec<usize>,
}

/// `θ = 1 / (1 − coef)` with delta-method standard error `se · θ²`.
pub fn theta_from_coef(coef: f64, se: f64) -> (f64, f64) {
    let theta = 1.0 / (1.0 - coef);
    (theta, se * theta * theta)
}

/// 2SLS of the conduct equation with year effects and the regulation
/// indicator as controls; rows lacking any input are dropped.
pub fn estimate_theta(
    panel: &Panel,
    records: &[MarketPowerRecord],
    inputs: &[Option<ConductInputs>],
    means: &GeometricMeans,
    opts: &ThetaOptions,
) -> Result<ThetaEstimate> {
    let set = InstrumentSet::parse(&opts.instruments)?;
    let market_size = panel.plants_in_market_year();
    let ctx = InstrumentContext { panel, means, omega_labor: None, market_size: &market_size };
    let obs = panel.obs();
    let mut sample = Vec::new();
    let (mut y, mut x, mut z_rows) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..panel.len() {
        let Some(inp) = inputs[i] else { continue };
        let Some(z) = set.row(&ctx, i)? else { continue };
        let lhs = inp.lhs(records[i].nu_tilde_d);
        if !lhs.is_finite() || inp.nu_d_posting <= 1.0 {
            continue;
        }
        sample.push(i);
        y.push(lhs);
        x.push(inp.surplus_ratio);
        z_rows.push(z);
    }
    let n = sample.len();
    if n == 0 {
        return Err(Error::Estimation("conduct sample is empty".into()));
    }
    let mut years: Vec<i32> = sample.iter().map(|&i| obs[i].year).collect();
    years.sort_unstable();
    years.dedup();
    let mut exog: Vec<(String, Vec<f64>)> = years
        .iter()
        .map(|&yr| (format!("year{yr}"), sample.iter().map(|&i| f64::from(u8::from(obs[i].year == yr))).collect()))
        .collect();
    exog.push(("IDA".into(), sample.iter().map(|&i| obs[i].regulation).collect()));
    let names = set.names();
    let excluded = Block::new(names.clone(), nalgebra::DMatrix::from_fn(n, names.len(), |r, c| z_rows[r][c]));
    let clusters: Vec<usize> = sample.iter().map(|&i| panel.plant_index(i)).collect();
    let fit = tsls(&y, &Block::from_columns(vec![(SURPLUS.into(), x)]), &Block::from_columns(exog), &excluded, Some(&clusters))?;
    let coef = fit.coef(SURPLUS).expect("surplus coefficient");
    let coef_se = fit.se(SURPLUS).expect("surplus coefficient");
    let (theta, theta_se) = theta_from_coef(coef, coef_se);
    Ok(ThetaEstimate { fit, coef, coef_se, theta, theta_se, boundary: coef >= 0.0, sample })
}

/// Fills the Step-5 fields of every record with computable inputs.
/// Without a conduct coefficient the bargaining fields stay empty.
pub fn apply_conduct(records: &mut [MarketPowerRecord], inputs: &[Option<ConductInputs>], coef: Option<f64>) {
    for (r, inp) in records.iter_mut().zip(inputs) {
        let Some(inp) = inp else { continue };
        r.nu_c = Some(inp.nu_c);
        r.f_c = Some(inp.f_c);
        r.markdown_c = Some(markdown(inp.nu_c));
        r.nu_d_posting = Some(inp.nu_d_posting);
        r.markdown_d_nn = Some(markdown(inp.nu_d_posting));
        if let Some(c) = coef {
            let nu_d = inp.nu_d(c);
            r.nu_d = Some(nu_d);
            r.f_d = Some(r.nu_tilde_d - nu_d);
            r.markdown_d_nb = Some(markdown(nu_d));
        }
    }
}

/// Bargaining markdown inside its theoretical range: strictly above the
/// competitive level and strictly below the wage-posting level.
pub fn in_bargaining_range(r: &MarketPowerRecord) -> bool {
    matches!((r.nu_d, r.nu_d_posting), (Some(nb), Some(post)) if nb > 1.0 && nb < post)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_delta_method_example() {
        let (theta, se) = theta_from_coef(-0.065, 0.020);
        assert!((theta - 0.939).abs() < 5e-4);
        assert!((se - 0.018).abs() < 5e-4);
    }

    #[test]
    fn posting_limit_has_zero_coefficient() {
        let (theta, _) = theta_from_coef(0.0, 0.1);
        assert_eq!(theta, 1.0);
        let inp = ConductInputs { nu_c: 1.5, nu_d_posting: 1.4, f_c: 0.0, f_d_proxy: 0.0, surplus_ratio: 2.0 };
        assert!((inp.nu_d(0.0) - 1.4).abs() < 1e-15);
        assert!((inp.lhs(inp.nu_d(-0.1)) + 0.2).abs() < 1e-12);
    }
}
