//! Domain types and the normalized nested-CES production algebra.
//!
//! Output combines capital, materials and a labor aggregate; labor nests
//! white-collar days with a blue-collar aggregate, which in turn nests
//! temporary and permanent days. Every quantity enters relative to a frozen
//! geometric-mean baseline.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Levels below this are rejected as data errors rather than clamped.
pub const MIN_LEVEL: f64 = 1e-300;

/// One plant-year record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PanelObservation {
    pub plant_id: String,
    pub year: i32,
    pub market_id: String,
    /// Observed (noisy) output quantity.
    pub output: f64,
    /// Output price index.
    pub price: f64,
    pub capital: f64,
    pub materials: f64,
    pub materials_price: f64,
    /// White-collar mandays and daily wage.
    pub white_days: f64,
    pub white_wage: f64,
    /// Temporary blue-collar mandays and daily wage.
    pub temp_days: f64,
    pub temp_wage: f64,
    /// Permanent blue-collar mandays and daily wage.
    pub perm_days: f64,
    pub perm_wage: f64,
    /// Pro-worker regulation index of the plant's market.
    pub regulation: f64,
    /// Lagged import indicator, 0 or 1.
    pub importer_lag: f64,
    pub strike_intensity: f64,
    /// Mandays worked outside the industry, by worker type (outside option).
    pub outside_temp_days: f64,
    pub outside_perm_days: f64,
    /// Gross investment, when reported.
    pub investment: Option<f64>,
    pub extra: BTreeMap<String, f64>,
}

impl PanelObservation {
    pub fn white_bill(&self) -> f64 {
        self.white_wage * self.white_days
    }

    pub fn temp_bill(&self) -> f64 {
        self.temp_wage * self.temp_days
    }

    pub fn perm_bill(&self) -> f64 {
        self.perm_wage * self.perm_days
    }

    pub fn materials_bill(&self) -> f64 {
        self.materials_price * self.materials
    }

    pub fn payroll(&self) -> f64 {
        self.white_bill() + self.temp_bill() + self.perm_bill()
    }

    pub fn revenue(&self) -> f64 {
        self.price * self.output
    }

    /// Checks positivity of levels and the import indicator.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("Q", self.output),
            ("P", self.price),
            ("K", self.capital),
            ("M", self.materials),
            ("P_M", self.materials_price),
            ("H", self.white_days),
            ("W_H", self.white_wage),
            ("C", self.temp_days),
            ("W_C", self.temp_wage),
            ("D", self.perm_days),
            ("W_D", self.perm_wage),
            ("outside_mandays_C", self.outside_temp_days),
            ("outside_mandays_D", self.outside_perm_days),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v >= MIN_LEVEL) {
                return Err(Error::Validation(format!(
                    "plant {} year {}: {name} must be strictly positive, got {v}",
                    self.plant_id, self.year
                )));
            }
        }
        if self.importer_lag != 0.0 && self.importer_lag != 1.0 {
            return Err(Error::Validation(format!(
                "plant {} year {}: Imp_lag must be 0 or 1, got {}",
                self.plant_id, self.year, self.importer_lag
            )));
        }
        if !(self.strike_intensity.is_finite() && self.strike_intensity >= 0.0) {
            return Err(Error::Validation(format!(
                "plant {} year {}: strike_intensity must be non-negative",
                self.plant_id, self.year
            )));
        }
        if !self.regulation.is_finite() {
            return Err(Error::Validation(format!(
                "plant {} year {}: IDA must be finite",
                self.plant_id, self.year
            )));
        }
        Ok(())
    }
}

/// Baseline point of the normalization: geometric means of levels and prices.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometricMeans {
    pub output: f64,
    pub capital: f64,
    pub materials: f64,
    pub white: f64,
    pub temp: f64,
    pub perm: f64,
    pub white_wage: f64,
    pub temp_wage: f64,
    pub perm_wage: f64,
    pub materials_price: f64,
    pub blue_wage: f64,
    pub labor_wage: f64,
    pub blue: f64,
    pub labor: f64,
}

fn geometric_mean(values: impl Iterator<Item = f64>) -> f64 {
    let mut n = 0usize;
    let mut acc = 0.0;
    for v in values {
        acc += v.ln();
        n += 1;
    }
    (acc / n as f64).exp()
}

impl GeometricMeans {
    /// Sample geometric means. Blue-collar and total labor baselines are the
    /// geometric means of summed mandays; their price indices follow from
    /// expenditure adding-up.
    pub fn from_sample(obs: &[PanelObservation]) -> Result<Self> {
        if obs.is_empty() {
            return Err(domain("cannot compute geometric means of an empty sample"));
        }
        let gm = |f: &dyn Fn(&PanelObservation) -> f64| geometric_mean(obs.iter().map(f));
        let white = gm(&|o| o.white_days);
        let temp = gm(&|o| o.temp_days);
        let perm = gm(&|o| o.perm_days);
        let blue = gm(&|o| o.temp_days + o.perm_days);
        let labor = gm(&|o| o.white_days + o.temp_days + o.perm_days);
        let white_wage = gm(&|o| o.white_wage);
        let temp_wage = gm(&|o| o.temp_wage);
        let perm_wage = gm(&|o| o.perm_wage);
        let blue_wage = (temp_wage * temp + perm_wage * perm) / blue;
        let labor_wage = (white_wage * white + blue_wage * blue) / labor;
        let means = Self {
            output: gm(&|o| o.output),
            capital: gm(&|o| o.capital),
            materials: gm(&|o| o.materials),
            white,
            temp,
            perm,
            white_wage,
            temp_wage,
            perm_wage,
            materials_price: gm(&|o| o.materials_price),
            blue_wage,
            labor_wage,
            blue,
            labor,
        };
        means.validate()?;
        Ok(means)
    }

    /// Baseline whose expenditure ratios reproduce the given worker shares and
    /// labor-to-materials expenditure ratio exactly.
    #[allow(clippy::too_many_arguments)]
    pub fn from_targets(
        output: f64,
        capital: f64,
        materials: f64,
        white: f64,
        temp: f64,
        perm: f64,
        materials_price: f64,
        white_share: f64,
        temp_share: f64,
        labor_to_materials: f64,
    ) -> Result<Self> {
        let labor_bill = materials_price * materials * labor_to_materials;
        let white_bill = white_share * labor_bill;
        let blue_bill = (1.0 - white_share) * labor_bill;
        let temp_bill = temp_share * blue_bill;
        let perm_bill = (1.0 - temp_share) * blue_bill;
        let blue = temp + perm;
        let labor = white + blue;
        let means = Self {
            output,
            capital,
            materials,
            white,
            temp,
            perm,
            white_wage: white_bill / white,
            temp_wage: temp_bill / temp,
            perm_wage: perm_bill / perm,
            materials_price,
            blue_wage: blue_bill / blue,
            labor_wage: labor_bill / labor,
            blue,
            labor,
        };
        means.validate()?;
        Ok(means)
    }

    pub fn materials_bill(&self) -> f64 {
        self.materials_price * self.materials
    }

    pub fn labor_bill(&self) -> f64 {
        self.labor_wage * self.labor
    }

    pub fn white_bill(&self) -> f64 {
        self.white_wage * self.white
    }

    pub fn blue_bill(&self) -> f64 {
        self.blue_wage * self.blue
    }

    pub fn temp_bill(&self) -> f64 {
        self.temp_wage * self.temp
    }

    pub fn perm_bill(&self) -> f64 {
        self.perm_wage * self.perm
    }

    /// Baseline labor-to-materials expenditure ratio.
    pub fn labor_to_materials(&self) -> f64 {
        self.labor_bill() / self.materials_bill()
    }

    pub fn validate(&self) -> Result<()> {
        let entries = [
            ("Q", self.output),
            ("K", self.capital),
            ("M", self.materials),
            ("H", self.white),
            ("C", self.temp),
            ("D", self.perm),
            ("W_H", self.white_wage),
            ("W_C", self.temp_wage),
            ("W_D", self.perm_wage),
            ("P_M", self.materials_price),
            ("W_B", self.blue_wage),
            ("W_L", self.labor_wage),
            ("B", self.blue),
            ("L", self.labor),
        ];
        for (name, v) in entries {
            if !(v.is_finite() && v > 0.0) {
                return Err(domain(format!("geometric mean of {name} must be positive, got {v}")));
            }
        }
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs());
        if rel(self.blue_bill(), self.temp_bill() + self.perm_bill()) > 1e-9 {
            return Err(domain("blue-collar baseline expenditure does not add up"));
        }
        if rel(self.labor_bill(), self.white_bill() + self.blue_bill()) > 1e-9 {
            return Err(domain("labor baseline expenditure does not add up"));
        }
        Ok(())
    }
}

/// Substitution exponents of the three nests.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Exponents {
    /// Capital, materials and effective labor.
    pub outer: f64,
    /// White-collar versus blue-collar.
    pub labor: f64,
    /// Temporary versus permanent blue-collar.
    pub blue: f64,
}

impl Exponents {
    pub fn new(outer: f64, labor: f64, blue: f64) -> Self {
        Self { outer, labor, blue }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.outer, self.labor, self.blue]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, s) in [("outer", self.outer), ("labor", self.labor), ("blue", self.blue)] {
            if !s.is_finite() || s == 0.0 || s > 1.0 {
                return Err(Error::Parameter(format!(
                    "{name} exponent must be nonzero and at most one, got {s}"
                )));
            }
        }
        Ok(())
    }
}

/// Distribution parameters of every nest.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Shares {
    pub capital: f64,
    pub materials: f64,
    pub labor: f64,
    pub white: f64,
    pub blue: f64,
    pub temp: f64,
    pub perm: f64,
}

/// Worker-side distribution parameters read off baseline expenditures.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkerShares {
    pub temp: f64,
    pub perm: f64,
    pub white: f64,
    pub blue: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductionParams {
    pub exponents: Exponents,
    /// Capital's deviation from the materials first-order condition.
    pub capital_wedge: f64,
    pub shares: Shares,
    pub means: GeometricMeans,
}

impl ProductionParams {
    /// Builds the parameter set with all shares implied by the baseline.
    pub fn new(exponents: Exponents, capital_wedge: f64, means: GeometricMeans) -> Result<Self> {
        means.validate()?;
        let (capital, materials, labor) = shares_from_tau(capital_wedge, &means)?;
        let w = worker_shares_from_means(&means)?;
        Ok(Self {
            exponents,
            capital_wedge,
            shares: Shares {
                capital,
                materials,
                labor,
                white: w.white,
                blue: w.blue,
                temp: w.temp,
                perm: w.perm,
            },
            means,
        })
    }

    pub fn worker_shares(&self) -> WorkerShares {
        WorkerShares {
            temp: self.shares.temp,
            perm: self.shares.perm,
            white: self.shares.white,
            blue: self.shares.blue,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.exponents.validate()?;
        let s = &self.shares;
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12;
        if !close(s.capital + s.materials + s.labor, 1.0)
            || !close(s.white + s.blue, 1.0)
            || !close(s.temp + s.perm, 1.0)
        {
            return Err(Error::Parameter("nest shares must sum to one".into()));
        }
        if !close(s.capital, self.capital_wedge * s.materials) {
            return Err(Error::Parameter("capital share must equal wedge times materials share".into()));
        }
        Ok(())
    }
}

fn check_level(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= MIN_LEVEL {
        Ok(())
    } else {
        Err(domain(format!("{name} must be strictly positive, got {v}")))
    }
}

/// `(1/s) ln(Σ w_i exp(s x_i))` evaluated stably; zero weights drop out.
pub fn log_power_mean(weights: &[f64], logs: &[f64], s: f64) -> f64 {
    let mut top = f64::NEG_INFINITY;
    for (w, x) in weights.iter().zip(logs) {
        if *w > 0.0 {
            top = top.max(s * x);
        }
    }
    if top == f64::NEG_INFINITY {
        return f64::NAN;
    }
    let mut acc = 0.0;
    for (w, x) in weights.iter().zip(logs) {
        if *w > 0.0 {
            acc += w * (s * x - top).exp();
        }
    }
    (top + acc.ln()) / s
}

/// Normalized blue-collar aggregate.
pub fn blue_collar_nest(temp: f64, perm: f64, params: &ProductionParams) -> Result<f64> {
    check_level("normalized temporary days", temp)?;
    check_level("normalized permanent days", perm)?;
    let s = params.exponents.blue;
    if s == 0.0 {
        return Err(Error::Parameter("blue-collar exponent must be nonzero".into()));
    }
    let sh = &params.shares;
    Ok((sh.temp * temp.powf(s) + sh.perm * perm.powf(s)).powf(1.0 / s))
}

/// Normalized labor aggregate of white-collar days and the blue-collar aggregate.
pub fn labor_nest(white: f64, blue: f64, params: &ProductionParams) -> Result<f64> {
    check_level("normalized white-collar days", white)?;
    check_level("normalized blue-collar aggregate", blue)?;
    let s = params.exponents.labor;
    if s == 0.0 {
        return Err(Error::Parameter("labor exponent must be nonzero".into()));
    }
    let sh = &params.shares;
    Ok((sh.white * white.powf(s) + sh.blue * blue.powf(s)).powf(1.0 / s))
}

/// Outer CES kernel `α_K K^s + α_M M^s + α_L (e^ω L)^s` in normalized units.
pub fn ces_kernel(capital: f64, materials: f64, labor: f64, omega_labor: f64, params: &ProductionParams) -> Result<f64> {
    check_level("normalized capital", capital)?;
    check_level("normalized materials", materials)?;
    check_level("normalized labor", labor)?;
    let s = params.exponents.outer;
    if s == 0.0 {
        return Err(Error::Parameter("outer exponent must be nonzero".into()));
    }
    let sh = &params.shares;
    Ok(sh.capital * capital.powf(s)
        + sh.materials * materials.powf(s)
        + sh.labor * (omega_labor.exp() * labor).powf(s))
}

/// Planned (noise-free) output in levels.
pub fn planned_output(
    capital: f64,
    materials: f64,
    labor: f64,
    omega_labor: f64,
    omega_neutral: f64,
    params: &ProductionParams,
) -> Result<f64> {
    let kernel = ces_kernel(capital, materials, labor, omega_labor, params)?;
    let q = params.means.output * kernel.powf(1.0 / params.exponents.outer) * omega_neutral.exp();
    if q.is_finite() {
        Ok(q)
    } else {
        Err(domain("planned output is not finite"))
    }
}

/// Outer-nest shares implied by the capital wedge and baseline expenditures.
pub fn shares_from_tau(tau: f64, means: &GeometricMeans) -> Result<(f64, f64, f64)> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::Parameter(format!("capital wedge must be positive, got {tau}")));
    }
    let m = means.materials_bill();
    let l = means.labor_bill();
    if !(m > 0.0 && l > 0.0) {
        return Err(domain("baseline expenditures must be positive"));
    }
    let denom = m + l + tau * m;
    let materials = m / denom;
    let labor = l / denom;
    let capital = tau * materials;
    Ok((capital, materials, labor))
}

/// Worker-side shares read off baseline expenditure ratios.
pub fn worker_shares_from_means(means: &GeometricMeans) -> Result<WorkerShares> {
    let temp = means.temp_bill();
    let perm = means.perm_bill();
    let white = means.white_bill();
    let blue = means.blue_bill();
    if temp + perm <= 0.0 || white + blue <= 0.0 {
        return Err(domain("baseline worker expenditure must be positive"));
    }
    let temp_share = temp / (temp + perm);
    let white_share = white / (white + blue);
    Ok(WorkerShares {
        temp: temp_share,
        perm: 1.0 - temp_share,
        white: white_share,
        blue: 1.0 - white_share,
    })
}

/// Logs of normalized inputs plus the two observed ratios the estimators need.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogInputs {
    pub capital: f64,
    pub materials: f64,
    pub white: f64,
    pub temp: f64,
    pub perm: f64,
    /// `ln(W_H H / (P_M M))`.
    pub white_to_materials: f64,
    /// `ln(Q / Q̄)` of observed output.
    pub output: f64,
}

impl LogInputs {
    pub fn of(obs: &PanelObservation, means: &GeometricMeans) -> Result<Self> {
        for (name, v) in [
            ("K", obs.capital),
            ("M", obs.materials),
            ("H", obs.white_days),
            ("C", obs.temp_days),
            ("D", obs.perm_days),
            ("Q", obs.output),
            ("W_H", obs.white_wage),
            ("P_M", obs.materials_price),
        ] {
            check_level(name, v)?;
        }
        Ok(Self {
            capital: (obs.capital / means.capital).ln(),
            materials: (obs.materials / means.materials).ln(),
            white: (obs.white_days / means.white).ln(),
            temp: (obs.temp_days / means.temp).ln(),
            perm: (obs.perm_days / means.perm).ln(),
            white_to_materials: (obs.white_bill() / obs.materials_bill()).ln(),
            output: (obs.output / means.output).ln(),
        })
    }
}

/// `ln B̈` from log inputs.
pub fn log_blue_aggregate(logs: &LogInputs, blue: f64, workers: &WorkerShares) -> f64 {
    log_power_mean(&[workers.temp, workers.perm], &[logs.temp, logs.perm], blue)
}

/// `ln L̈` from log inputs.
pub fn log_labor_aggregate(logs: &LogInputs, exps: &Exponents, workers: &WorkerShares) -> f64 {
    let b = log_blue_aggregate(logs, exps.blue, workers);
    log_power_mean(&[workers.white, workers.blue], &[logs.white, b], exps.labor)
}

/// Labor-augmenting productivity implied by the ratio of the white-collar and
/// materials first-order conditions, evaluated term by term.
pub fn omega_labor_from_logs(
    logs: &LogInputs,
    exps: &Exponents,
    workers: &WorkerShares,
    means: &GeometricMeans,
) -> Result<f64> {
    let so = exps.outer;
    if so == 0.0 {
        return Err(Error::Parameter("outer exponent must be nonzero".into()));
    }
    let share_term = -workers.white.ln() / so;
    let ratio_term = logs.white_to_materials / so;
    let baseline_term = (means.materials_bill() / means.labor_bill()).ln() / so;
    let aggregate_term = (exps.labor / so - 1.0) * log_labor_aggregate(logs, exps, workers);
    let white_term = -(exps.labor / so) * logs.white;
    let terms = [
        ("white-collar share", share_term),
        ("expenditure ratio", ratio_term),
        ("baseline expenditure ratio", baseline_term),
        ("labor aggregate", aggregate_term),
        ("materials", logs.materials),
        ("white-collar days", white_term),
    ];
    let mut total = 0.0;
    for (name, v) in terms {
        if !v.is_finite() {
            return Err(domain(format!("labor-augmenting productivity: {name} term is not finite")));
        }
        total += v;
    }
    Ok(total)
}

/// Labor-augmenting productivity of one observation.
pub fn omega_l_characterization(
    obs: &PanelObservation,
    exps: &Exponents,
    workers: &WorkerShares,
    means: &GeometricMeans,
) -> Result<f64> {
    let logs = LogInputs::of(obs, means)?;
    omega_labor_from_logs(&logs, exps, workers, means)
}

/// `ln f(τ)` from logs: output net of Hicks-neutral productivity, relative to Q̄.
pub fn log_f_from_logs(
    log_capital: f64,
    log_materials: f64,
    log_labor: f64,
    omega_labor: f64,
    tau: f64,
    outer: f64,
    labor_to_materials: f64,
) -> f64 {
    let prefactor = -(1.0 + labor_to_materials + tau).ln();
    let kernel = tau * (outer * log_capital).exp()
        + (outer * log_materials).exp()
        + labor_to_materials * (outer * (omega_labor + log_labor)).exp();
    (prefactor + kernel.ln()) / outer
}

/// Derivative of `ln f(τ)` with respect to the capital wedge.
pub fn d_log_f_d_tau(
    log_capital: f64,
    log_materials: f64,
    log_labor: f64,
    omega_labor: f64,
    tau: f64,
    outer: f64,
    labor_to_materials: f64,
) -> f64 {
    let k = (outer * log_capital).exp();
    let kernel = tau * k
        + (outer * log_materials).exp()
        + labor_to_materials * (outer * (omega_labor + log_labor)).exp();
    (-1.0 / (1.0 + labor_to_materials + tau) + k / kernel) / outer
}

/// `ln f(τ)` for one observation given estimated labor-augmenting productivity
/// and the normalized labor aggregate.
pub fn log_f_tau(
    obs: &PanelObservation,
    tau: f64,
    exps: &Exponents,
    omega_labor_hat: f64,
    labor_norm: f64,
    means: &GeometricMeans,
) -> Result<f64> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::Parameter(format!("capital wedge must be positive, got {tau}")));
    }
    check_level("K", obs.capital)?;
    check_level("M", obs.materials)?;
    check_level("normalized labor", labor_norm)?;
    let v = log_f_from_logs(
        (obs.capital / means.capital).ln(),
        (obs.materials / means.materials).ln(),
        labor_norm.ln(),
        omega_labor_hat,
        tau,
        exps.outer,
        means.labor_to_materials(),
    );
    if v.is_finite() {
        Ok(v)
    } else {
        Err(domain("log f is not finite"))
    }
}

/// Law of motion for one productivity process.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LawOfMotion {
    pub persistence: f64,
    /// Loading on the regulation index.
    pub regulation: f64,
    /// Loading on the lagged import indicator.
    pub imports: f64,
    pub year_effects: BTreeMap<i32, f64>,
    pub innovation_sd: f64,
}

impl LawOfMotion {
    pub fn year_effect(&self, year: i32) -> Result<f64> {
        self.year_effects
            .get(&year)
            .copied()
            .ok_or_else(|| Error::Config(format!("no year effect configured for {year}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductivityParams {
    pub neutral: LawOfMotion,
    pub labor: LawOfMotion,
    /// Output measurement error sd; the model fixes it at one.
    pub measurement_sd: f64,
}

impl ProductivityParams {
    pub fn validate(&self) -> Result<()> {
        if self.neutral.innovation_sd < 0.0 || self.labor.innovation_sd < 0.0 {
            return Err(Error::Parameter("innovation sd must be non-negative".into()));
        }
        if self.measurement_sd < 0.0 {
            return Err(Error::Parameter("measurement sd must be non-negative".into()));
        }
        Ok(())
    }

    pub fn law(&self, which: Productivity) -> &LawOfMotion {
        match which {
            Productivity::Neutral => &self.neutral,
            Productivity::LaborAugmenting => &self.labor,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Productivity {
    Neutral,
    LaborAugmenting,
}

/// One step of the controlled AR(1).
pub fn productivity_step(
    prev: f64,
    params: &ProductivityParams,
    which: Productivity,
    regulation: f64,
    importer_lag: f64,
    innovation: f64,
    year: i32,
) -> Result<f64> {
    let law = params.law(which);
    Ok(law.year_effect(year)? + law.persistence * prev + law.regulation * regulation + law.imports * importer_lag + innovation)
}

/// Latent states of one plant-year.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ProductivityState {
    pub omega_neutral: f64,
    pub omega_labor: f64,
    pub innovation_neutral: f64,
    pub innovation_labor: f64,
    pub measurement: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn means_for(white_share: f64, temp_share: f64, ratio: f64) -> GeometricMeans {
        GeometricMeans::from_targets(100.0, 50.0, 40.0, 20.0, 30.0, 60.0, 1.5, white_share, temp_share, ratio).unwrap()
    }

    fn params(exps: Exponents, tau: f64, means: GeometricMeans) -> ProductionParams {
        ProductionParams::new(exps, tau, means).unwrap()
    }

    #[test]
    fn blue_nest_baseline_is_one() {
        let p = params(Exponents::new(0.5, 0.7, 0.2), 0.4, means_for(0.449, 0.307, 0.1));
        assert_relative_eq!(blue_collar_nest(1.0, 1.0, &p).unwrap(), 1.0, epsilon = 1e-15);
        assert_relative_eq!(labor_nest(1.0, 1.0, &p).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn linear_limits() {
        let p = params(Exponents::new(0.5, 1.0, 1.0), 0.4, means_for(0.5, 0.5, 0.1));
        assert_relative_eq!(blue_collar_nest(2.0, 4.0, &p).unwrap(), 3.0, epsilon = 1e-12);
        assert_relative_eq!(labor_nest(1.0, 3.0, &p).unwrap(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn blue_nest_oracle() {
        let p = params(Exponents::new(0.5, 0.7, 0.222), 0.4, means_for(0.449, 0.307, 0.1));
        assert_relative_eq!(p.shares.temp, 0.307, epsilon = 1e-12);
        let v = blue_collar_nest(2.0, 0.5, &p).unwrap();
        assert_relative_eq!(v, 0.802_129_258_152_195_5, epsilon = 1e-13);
    }

    #[test]
    fn labor_nest_oracle() {
        let p = params(Exponents::new(0.5, 0.773, 0.222), 0.4, means_for(0.449, 0.307, 0.1));
        let v = labor_nest(1.5, 0.8, &p).unwrap();
        assert_relative_eq!(v, 1.102_015_751_671_680_4, epsilon = 1e-13);
    }

    #[test]
    fn planned_output_oracle() {
        let tau = 0.256 / 0.680;
        let ratio = 1.0 / 0.680 - 1.0 - tau;
        let p = params(Exponents::new(0.501, 0.773, 0.222), tau, means_for(0.449, 0.307, ratio));
        assert_relative_eq!(p.shares.materials, 0.680, epsilon = 1e-12);
        assert_relative_eq!(p.shares.labor, 0.064, epsilon = 1e-12);
        let q = planned_output(1.2, 0.9, 1.1, 0.1, -0.05, &p).unwrap();
        assert_relative_eq!(q / p.means.output, 0.943_840_576_762_950_6, epsilon = 1e-13);
        assert_relative_eq!(planned_output(1.0, 1.0, 1.0, 0.0, 0.0, &p).unwrap(), p.means.output, epsilon = 1e-10);
        assert_relative_eq!(
            planned_output(1.0, 1.0, 1.0, 0.0, 2f64.ln(), &p).unwrap(),
            2.0 * p.means.output,
            epsilon = 1e-10
        );
    }

    #[test]
    fn nonpositive_inputs_rejected() {
        let p = params(Exponents::new(0.5, 0.7, 0.2), 0.4, means_for(0.5, 0.5, 0.1));
        assert!(blue_collar_nest(0.0, 1.0, &p).is_err());
        assert!(labor_nest(1.0, -1.0, &p).is_err());
        assert!(planned_output(1.0, 1e-301, 1.0, 0.0, 0.0, &p).is_err());
    }

    #[test]
    fn symmetric_shares_from_tau() {
        let m = means_for(0.5, 0.5, 1.0);
        let (k, mm, l) = shares_from_tau(1.0, &m).unwrap();
        for v in [k, mm, l] {
            assert_relative_eq!(v, 1.0 / 3.0, epsilon = 1e-15);
        }
        assert!(shares_from_tau(0.0, &m).is_err());
        let (k, _, _) = shares_from_tau(1e-12, &m).unwrap();
        assert!(k < 1e-11);
    }

    #[test]
    fn table_shares_from_tau() {
        let tau = 0.376;
        let ratio = 1.0 / 0.680 - 1.0 - tau;
        let (k, m, l) = shares_from_tau(tau, &means_for(0.449, 0.307, ratio)).unwrap();
        assert_relative_eq!(m, 0.680, epsilon = 1e-12);
        assert!((k - 0.256).abs() < 5e-4);
        assert!((l - 0.064).abs() < 5e-4);
        assert_relative_eq!(k, tau * m, epsilon = 1e-15);
        assert_relative_eq!(k + m + l, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn worker_shares() {
        let w = worker_shares_from_means(&means_for(0.5, 0.5, 0.3)).unwrap();
        assert_relative_eq!(w.temp, 0.5, epsilon = 1e-12);
        assert_relative_eq!(w.white, 0.5, epsilon = 1e-12);
        let w = worker_shares_from_means(&means_for(0.449, 0.307, 0.3)).unwrap();
        assert_relative_eq!(w.temp, 0.307, epsilon = 1e-12);
        assert_relative_eq!(w.perm, 0.693, epsilon = 1e-12);
        let mut m = means_for(0.5, 0.5, 0.3);
        m.temp_wage = 0.0;
        m.blue_wage = m.perm_bill() / m.blue;
        let w = worker_shares_from_means(&m).unwrap();
        assert_eq!(w.temp, 0.0);
    }

    fn baseline_obs(means: &GeometricMeans) -> PanelObservation {
        PanelObservation {
            plant_id: "a".into(),
            year: 2000,
            market_id: "r".into(),
            output: means.output,
            price: 1.0,
            capital: means.capital,
            materials: means.materials,
            materials_price: means.materials_price,
            white_days: means.white,
            white_wage: means.white_wage,
            temp_days: means.temp,
            temp_wage: means.temp_wage,
            perm_days: means.perm,
            perm_wage: means.perm_wage,
            regulation: 0.0,
            importer_lag: 0.0,
            strike_intensity: 0.1,
            outside_temp_days: 1e6,
            outside_perm_days: 1e6,
            investment: None,
            extra: BTreeMap::new(),
        }
    }

    #[test]
    fn characterization_at_baseline_and_wage_doubling() {
        let means = means_for(0.449, 0.307, 0.094);
        let exps = Exponents::new(0.501, 0.773, 0.222);
        let w = worker_shares_from_means(&means).unwrap();
        let mut obs = baseline_obs(&means);
        let base = omega_l_characterization(&obs, &exps, &w, &means).unwrap();
        assert!(base.abs() < 1e-12);
        obs.white_wage *= 2.0;
        let doubled = omega_l_characterization(&obs, &exps, &w, &means).unwrap();
        assert_relative_eq!(doubled - base, 2f64.ln() / 0.501, epsilon = 1e-12);
    }

    #[test]
    fn log_f_at_baseline_is_zero() {
        let means = means_for(0.449, 0.307, 0.094);
        let exps = Exponents::new(0.501, 0.773, 0.222);
        let obs = baseline_obs(&means);
        for tau in [0.1, 0.376, 2.0] {
            let v = log_f_tau(&obs, tau, &exps, 0.0, 1.0, &means).unwrap();
            assert!(v.abs() < 1e-12);
        }
        assert!(log_f_tau(&obs, 0.0, &exps, 0.0, 1.0, &means).is_err());
    }

    #[test]
    fn log_f_derivative_matches_finite_difference() {
        let (k, m, l, w, so, r) = (0.3, -0.2, 0.1, 0.05, 0.501, 0.094);
        for tau in [0.2, 0.376, 1.5] {
            let h = 1e-6;
            let fd = (log_f_from_logs(k, m, l, w, tau + h, so, r) - log_f_from_logs(k, m, l, w, tau - h, so, r)) / (2.0 * h);
            assert!((fd - d_log_f_d_tau(k, m, l, w, tau, so, r)).abs() < 1e-6);
        }
    }

    fn laws() -> ProductivityParams {
        let year_effects: BTreeMap<i32, f64> = [(2000, 0.0)].into_iter().collect();
        ProductivityParams {
            neutral: LawOfMotion {
                persistence: 0.880,
                regulation: -0.031,
                imports: -0.071,
                year_effects: year_effects.clone(),
                innovation_sd: 0.725,
            },
            labor: LawOfMotion {
                persistence: 0.0,
                regulation: 0.0,
                imports: 0.0,
                year_effects,
                innovation_sd: 0.1,
            },
            measurement_sd: 1.0,
        }
    }

    #[test]
    fn productivity_steps() {
        let p = laws();
        assert_eq!(productivity_step(0.7, &p, Productivity::LaborAugmenting, 1.0, 1.0, 0.0, 2000).unwrap(), 0.0);
        let v = productivity_step(1.0, &p, Productivity::Neutral, 2.0, 1.0, 0.0, 2000).unwrap();
        assert_relative_eq!(v, 0.747, epsilon = 1e-12);
        assert!(productivity_step(1.0, &p, Productivity::Neutral, 2.0, 1.0, 0.0, 1999).is_err());
    }
}
