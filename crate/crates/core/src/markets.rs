//! Output markups, operating profits, TFP and composite labor frictions.
//!
//! Markups come from the materials first-order condition evaluated at planned
//! output, so measurement error in observed output never enters. Composite
//! frictions compare the marginal product of each blue-collar type with that
//! of white-collar labor, whose wage is taken as competitive.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::model::{ces_kernel, PanelObservation, ProductionParams};

/// Normalized nest quantities of one observation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NestLevels {
    pub capital: f64,
    pub materials: f64,
    pub white: f64,
    pub temp: f64,
    pub perm: f64,
    pub blue: f64,
    pub labor: f64,
}

impl NestLevels {
    pub fn of(obs: &PanelObservation, params: &ProductionParams) -> Result<Self> {
        let m = &params.means;
        let temp = obs.temp_days / m.temp;
        let perm = obs.perm_days / m.perm;
        let white = obs.white_days / m.white;
        let blue = crate::model::blue_collar_nest(temp, perm, params)?;
        let labor = crate::model::labor_nest(white, blue, params)?;
        Ok(Self { capital: obs.capital / m.capital, materials: obs.materials / m.materials, white, temp, perm, blue, labor })
    }
}

/// Planned output `Q̄ · kernel^{1/σ} · e^{ω^H}`.
pub fn planned_output_at(levels: &NestLevels, omega_labor: f64, omega_neutral: f64, params: &ProductionParams) -> Result<f64> {
    crate::model::planned_output(levels.capital, levels.materials, levels.labor, omega_labor, omega_neutral, params)
}

/// Markup from the materials first-order condition.
pub fn markup_from_materials(
    obs: &PanelObservation,
    params: &ProductionParams,
    omega_labor: f64,
    levels: &NestLevels,
    planned: f64,
) -> Result<f64> {
    let s = params.exponents.outer;
    let kernel = ces_kernel(levels.capital, levels.materials, levels.labor, omega_labor, params)?;
    let marginal = planned / kernel * params.shares.materials * levels.materials.powf(s) / obs.materials;
    Ok(marginal * obs.price / obs.materials_price)
}

/// Markup from the white-collar first-order condition.
pub fn markup_from_labor(
    obs: &PanelObservation,
    params: &ProductionParams,
    omega_labor: f64,
    levels: &NestLevels,
    planned: f64,
) -> Result<f64> {
    let (so, sm) = (params.exponents.outer, params.exponents.labor);
    let sh = &params.shares;
    let kernel = ces_kernel(levels.capital, levels.materials, levels.labor, omega_labor, params)?;
    let labor_part = sh.labor * (omega_labor.exp() * levels.labor).powf(so);
    let inner = sh.white * levels.white.powf(sm) + sh.blue * levels.blue.powf(sm);
    let marginal = planned / kernel * labor_part / inner * sh.white * levels.white.powf(sm) / obs.white_days;
    Ok(marginal * obs.price / obs.white_wage)
}

/// Composite frictions `(ν̃^C, ν̃^D)`: marginal product to wage ratios of the
/// blue-collar types relative to white-collar labor.
pub fn labor_frictions(obs: &PanelObservation, params: &ProductionParams, levels: &NestLevels) -> Result<(f64, f64)> {
    if obs.temp_bill() <= 0.0 || obs.perm_bill() <= 0.0 {
        return Err(domain("blue-collar wage bill must be positive"));
    }
    let (sm, si) = (params.exponents.labor, params.exponents.blue);
    let sh = &params.shares;
    let across = sh.blue * levels.blue.powf(sm) / (sh.white * levels.white.powf(sm));
    let temp = across * sh.temp * levels.temp.powf(si) / levels.blue.powf(si) * obs.white_bill() / obs.temp_bill();
    let perm = across * sh.perm * levels.perm.powf(si) / levels.blue.powf(si) * obs.white_bill() / obs.perm_bill();
    Ok((temp, perm))
}

/// `Q̂ (P − P/μ)`.
pub fn operating_profit(price: f64, markup: f64, planned: f64) -> f64 {
    planned * (price - price / markup)
}

/// Log of the cost-share weighted productivity index: labor cost share on
/// `e^{ω^L}`, materials share on `e^{ω^H}`.
pub fn tfp(obs: &PanelObservation, omega_neutral: f64, omega_labor: f64) -> f64 {
    let labor = obs.payroll();
    let materials = obs.materials_bill();
    let total = labor + materials;
    ((labor / total) * omega_labor.exp() + (materials / total) * omega_neutral.exp()).ln()
}

/// `100 (ν − 1) / ν`.
pub fn markdown(nu: f64) -> f64 {
    100.0 * (nu - 1.0) / nu
}

/// Per-observation market-power measures. Step-5 fields stay `None` until
/// labor supply and conduct are estimated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarketPowerRecord {
    pub plant_id: String,
    pub year: i32,
    pub mu: f64,
    pub mc: f64,
    pub lerner: f64,
    pub pi_hat: f64,
    pub q_hat: f64,
    pub tfp: f64,
    pub nu_tilde_c: f64,
    pub nu_tilde_d: f64,
    pub nu_c: Option<f64>,
    /// Permanent-worker component under bargaining.
    pub nu_d: Option<f64>,
    /// Permanent-worker component under wage posting (inverse elasticity only).
    pub nu_d_posting: Option<f64>,
    pub f_c: Option<f64>,
    pub f_d: Option<f64>,
    pub markdown_c: Option<f64>,
    pub markdown_d_nb: Option<f64>,
    pub markdown_d_nn: Option<f64>,
    /// Markup from the white-collar condition, for the cross-check.
    pub mu_labor: f64,
}

impl MarketPowerRecord {
    pub fn positive_lerner(&self) -> bool {
        self.lerner > 0.0
    }
}

/// Step-4 measures for every observation given smoothed productivities.
pub fn market_power(
    obs: &[PanelObservation],
    params: &ProductionParams,
    omega_labor: &[f64],
    omega_neutral: &[f64],
) -> Result<Vec<MarketPowerRecord>> {
    obs.iter()
        .enumerate()
        .map(|(i, o)| {
            let levels = NestLevels::of(o, params)?;
            let q_hat = planned_output_at(&levels, omega_labor[i], omega_neutral[i], params)?;
            let mu = markup_from_materials(o, params, omega_labor[i], &levels, q_hat)?;
            let mu_labor = markup_from_labor(o, params, omega_labor[i], &levels, q_hat)?;
            let (nu_tilde_c, nu_tilde_d) = labor_frictions(o, params, &levels)?;
            Ok(MarketPowerRecord {
                plant_id: o.plant_id.clone(),
                year: o.year,
                mu,
                mc: o.price / mu,
                lerner: 1.0 - 1.0 / mu,
                pi_hat: operating_profit(o.price, mu, q_hat),
                q_hat,
                tfp: tfp(o, omega_neutral[i], omega_labor[i]),
                nu_tilde_c,
                nu_tilde_d,
                nu_c: None,
                nu_d: None,
                nu_d_posting: None,
                f_c: None,
                f_d: None,
                markdown_c: None,
                markdown_d_nb: None,
                markdown_d_nn: None,
                mu_labor,
            })
        })
        .collect()
}

/// Records with a positive Lerner index.
pub fn lerner_restricted(records: &[MarketPowerRecord]) -> Vec<&MarketPowerRecord> {
    records.iter().filter(|r| r.positive_lerner()).collect()
}
