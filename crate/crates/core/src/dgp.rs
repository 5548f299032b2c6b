//! Synthetic plant panels that satisfy every estimating equation.
//!
//! Capital, materials, white-collar days and output prices are exogenous
//! processes; productivities follow their laws of motion. The white-collar
//! wage and the materials price are backed out of their first-order
//! conditions, so the labor-augmenting characterization holds exactly. Blue
//! collar employment comes from nested-logit supply, and wages solve the
//! monopsony (temporary) and bargaining (permanent) conditions jointly for
//! all plants of a year.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estim::optimize::brent_root;
use crate::laborsupply::{Block, LaborSupplyData, LaborSupplyParams, TimeFactor};
use crate::model::{
    blue_collar_nest, ces_kernel, labor_nest, Exponents, GeometricMeans, LawOfMotion, PanelObservation,
    ProductionParams, ProductivityParams, ProductivityState,
};
use crate::panel::Panel;

/// Independent generator for `(domain, index)` under a master seed.
pub fn substream(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((domain << 40) | index);
    rng
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Baseline levels and expenditure ratios that fix the normalization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Baseline {
    pub output: f64,
    pub capital: f64,
    pub materials: f64,
    pub white: f64,
    pub temp: f64,
    pub perm: f64,
    pub materials_price: f64,
    /// White-collar share of the labor nest.
    pub white_share: f64,
    /// Temporary share of the blue-collar nest.
    pub temp_share: f64,
    pub labor_to_materials: f64,
}

impl Default for Baseline {
    fn default() -> Self {
        Self {
            output: 1.0e6,
            capital: 5.0e4,
            materials: 1.5e5,
            white: 800.0,
            temp: 1000.0,
            perm: 1300.0,
            materials_price: 100.0,
            white_share: 0.449,
            temp_share: 0.307,
            labor_to_materials: 1.0 / 0.680 - 1.0 - 0.376,
        }
    }
}

impl Baseline {
    pub fn means(&self) -> Result<GeometricMeans> {
        GeometricMeans::from_targets(
            self.output,
            self.capital,
            self.materials,
            self.white,
            self.temp,
            self.perm,
            self.materials_price,
            self.white_share,
            self.temp_share,
            self.labor_to_materials,
        )
    }
}

/// Law of motion of one productivity process.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LawSpec {
    pub persistence: f64,
    pub regulation: f64,
    pub imports: f64,
    pub innovation_sd: f64,
    /// Dispersion of year effects around the value that centers the process.
    pub year_effect_sd: f64,
    /// Cross-sectional sd in the first year; stationary sd when absent.
    pub initial_sd: Option<f64>,
}

impl Default for LawSpec {
    fn default() -> Self {
        Self { persistence: 0.88, regulation: -0.031, imports: -0.071, innovation_sd: 0.725, year_effect_sd: 0.05, initial_sd: None }
    }
}

impl LawSpec {
    fn initial_sd(&self) -> f64 {
        self.initial_sd.unwrap_or_else(|| self.innovation_sd / (1.0 - self.persistence.powi(2)).max(1e-6).sqrt())
    }
}

/// Stationary AR(1) in logs of normalized levels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArSpec {
    pub persistence: f64,
    /// Stationary standard deviation.
    pub sd: f64,
}

impl ArSpec {
    fn validate(&self, label: &str) -> Result<()> {
        if self.persistence.abs() < 1.0 && self.sd >= 0.0 {
            Ok(())
        } else {
            Err(Error::Config(format!("{label} process needs |persistence| < 1 and a non-negative sd")))
        }
    }

    fn start(&self, z: f64) -> f64 {
        self.sd * z
    }

    fn step(&self, prev: f64, z: f64) -> f64 {
        self.persistence * prev + self.sd * (1.0 - self.persistence.powi(2)).max(0.0).sqrt() * z
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MarkupRule {
    Constant { markup: f64 },
    /// Constant-elasticity demand: `μ = e / (e − 1)`.
    Isoelastic { elasticity: f64 },
    /// Log-normal plant-year markups with the given mean of `ln μ`.
    Dispersed { log_mean: f64, log_sd: f64 },
}

impl MarkupRule {
    fn draw(&self, z: f64) -> f64 {
        match self {
            Self::Constant { markup } => *markup,
            Self::Isoelastic { elasticity } => elasticity / (elasticity - 1.0),
            Self::Dispersed { log_mean, log_sd } => (log_mean + log_sd * z).exp(),
        }
    }

    fn typical(&self) -> f64 {
        self.draw(0.0)
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            Self::Constant { markup } => *markup > 1.0,
            Self::Isoelastic { elasticity } => *elasticity > 1.0,
            Self::Dispersed { log_mean, log_sd } => *log_mean > 0.0 && *log_sd >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("markup rule {self:?} does not imply markups above one")))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Conduct {
    NashBertrand,
    NashBargaining { theta: f64 },
}

impl Conduct {
    pub fn theta(&self) -> f64 {
        match self {
            Self::NashBertrand => 1.0,
            Self::NashBargaining { theta } => *theta,
        }
    }

    /// Loading of the surplus ratio in the permanent-worker condition.
    pub fn surplus_coef(&self) -> f64 {
        let t = self.theta();
        (t - 1.0) / t
    }
}

/// Nested-logit supply of one worker type.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SupplySpec {
    pub gamma: f64,
    /// Change of the wage coefficient per decade.
    pub gamma_per_decade: f64,
    pub eta: f64,
    pub trend: f64,
    /// Intercept; calibrated so employment sits near the baseline when absent.
    pub intercept: Option<f64>,
    /// Plant amenity process.
    pub amenity: ArSpec,
    /// Employed share of the labor force at the baseline.
    pub employment_rate: f64,
}

impl SupplySpec {
    fn temporary() -> Self {
        Self {
            gamma: 0.009,
            gamma_per_decade: 0.0,
            eta: 0.245,
            trend: 0.0,
            intercept: None,
            amenity: ArSpec { persistence: 0.8, sd: 0.7 },
            employment_rate: 0.3,
        }
    }

    fn permanent() -> Self {
        Self { gamma: 0.005, eta: 0.402, ..Self::temporary() }
    }

    fn time_factor(&self, first_year: i32) -> TimeFactor {
        if self.gamma_per_decade == 0.0 {
            TimeFactor::Constant
        } else {
            TimeFactor::Linear { origin: first_year, scale: 10.0 }
        }
    }

    fn params(&self, intercept: f64, first_year: i32) -> LaborSupplyParams {
        let time_factor = self.time_factor(first_year);
        LaborSupplyParams {
            intercept,
            trend: self.trend,
            trend_origin: first_year,
            gamma: self.gamma,
            gamma_shifts: if time_factor.is_empty() { Vec::new() } else { vec![self.gamma_per_decade] },
            eta: self.eta,
            time_factor,
        }
    }

    fn validate(&self, label: &str) -> Result<()> {
        if !(self.eta >= 0.0 && self.eta < 1.0) {
            return Err(Error::Config(format!("{label} within-nest correlation must lie in [0, 1)")));
        }
        if !(self.gamma > 0.0) {
            return Err(Error::Config(format!("{label} wage coefficient must be positive")));
        }
        if !(self.employment_rate > 0.0 && self.employment_rate < 1.0) {
            return Err(Error::Config(format!("{label} employment rate must lie in (0, 1)")));
        }
        self.amenity.validate(&format!("{label} amenity"))?;
        Ok(())
    }
}

impl Default for SupplySpec {
    fn default() -> Self {
        Self::temporary()
    }
}

/// Exogenous state processes and instrument strengths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExogenousSpec {
    pub capital: ArSpec,
    /// Loading of log capital on last year's Hicks-neutral productivity.
    pub capital_response: f64,
    pub materials: ArSpec,
    pub white: ArSpec,
    pub price: ArSpec,
    /// Loading of the log output price on Hicks-neutral productivity.
    pub price_productivity: f64,
    pub strike_log_mean: f64,
    /// Log strike intensity around its mean.
    pub strike: ArSpec,
    /// Shift of permanent-worker amenities per unit of log strike intensity.
    pub strike_effect: f64,
    /// Per-year probability that a market's regulation index moves one step.
    pub regulation_change_prob: f64,
    pub import_share: f64,
    pub import_switch_prob: f64,
    /// Correlation of temporary and permanent amenity innovations.
    pub amenity_correlation: f64,
}

/// Marginal cost of coordinating blue-collar labor. Costs accrue on the
/// blue-collar aggregate, so the permanent-worker cost follows from the
/// temporary one through the nest's marginal rate of substitution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoordinationSpec {
    /// Cost per temporary manday at the baseline.
    pub cost: f64,
    /// Log-sd of plant-year cost shocks.
    pub noise_sd: f64,
}

impl Default for CoordinationSpec {
    fn default() -> Self {
        Self { cost: 10.0, noise_sd: 0.3 }
    }
}

impl Default for ExogenousSpec {
    fn default() -> Self {
        Self {
            capital: ArSpec { persistence: 0.3, sd: 1.0 },
            capital_response: 0.25,
            materials: ArSpec { persistence: 0.8, sd: 0.4 },
            white: ArSpec { persistence: 0.8, sd: 0.4 },
            price: ArSpec { persistence: 0.7, sd: 0.2 },
            price_productivity: 1.0,
            strike_log_mean: -1.0,
            strike: ArSpec { persistence: 0.6, sd: 1.0 },
            strike_effect: 0.3,
            regulation_change_prob: 0.2,
            import_share: 0.3,
            import_switch_prob: 0.15,
            amenity_correlation: -0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DgpConfig {
    pub seed: u64,
    pub n_plants: usize,
    pub n_years: usize,
    pub first_year: i32,
    pub n_markets: usize,
    pub exponents: Exponents,
    pub capital_wedge: f64,
    pub baseline: Baseline,
    pub neutral: LawSpec,
    pub labor: LawSpec,
    pub measurement_sd: f64,
    pub markup: MarkupRule,
    pub conduct: Conduct,
    pub temp: SupplySpec,
    pub perm: SupplySpec,
    pub exogenous: ExogenousSpec,
    pub coordination: CoordinationSpec,
    pub max_iterations: usize,
    pub damping: f64,
}

impl Default for DgpConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            n_plants: 200,
            n_years: 15,
            first_year: 2000,
            n_markets: 25,
            exponents: Exponents::new(0.501, 0.773, 0.222),
            capital_wedge: 0.376,
            baseline: Baseline::default(),
            neutral: LawSpec::default(),
            labor: LawSpec {
                persistence: 0.885,
                regulation: 0.010,
                imports: -0.044,
                innovation_sd: 0.02,
                year_effect_sd: 0.02,
                initial_sd: None,
            },
            measurement_sd: 1.0,
            markup: MarkupRule::Constant { markup: 1.1 },
            conduct: Conduct::NashBargaining { theta: 0.939 },
            temp: SupplySpec::temporary(),
            perm: SupplySpec::permanent(),
            exogenous: ExogenousSpec::default(),
            coordination: CoordinationSpec::default(),
            max_iterations: 500,
            damping: 0.5,
        }
    }
}

impl DgpConfig {
    /// Same configuration without productivity innovations or measurement
    /// error; initial productivity dispersion is kept so persistence stays
    /// identified.
    pub fn noiseless(mut self) -> Self {
        for law in [&mut self.neutral, &mut self.labor] {
            let init = law.initial_sd();
            law.initial_sd = Some(init.max(0.3));
            law.innovation_sd = 0.0;
        }
        self.measurement_sd = 0.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_years < 3 {
            return Err(Error::Config("the panel needs at least three years".into()));
        }
        if self.n_plants == 0 || self.n_markets == 0 {
            return Err(Error::Config("the panel needs plants and markets".into()));
        }
        self.exponents.validate()?;
        self.markup.validate()?;
        let theta = self.conduct.theta();
        if !(theta > 0.0 && theta <= 1.0) {
            return Err(Error::Config(format!("bargaining weight must lie in (0, 1], got {theta}")));
        }
        self.temp.validate("temporary")?;
        self.perm.validate("permanent")?;
        let ex = &self.exogenous;
        for (label, ar) in [("capital", &ex.capital), ("materials", &ex.materials), ("white-collar", &ex.white), ("price", &ex.price), ("strike", &ex.strike)] {
            ar.validate(label)?;
        }
        if ex.amenity_correlation.abs() > 1.0 {
            return Err(Error::Config("amenity correlation must lie in [-1, 1]".into()));
        }
        if self.coordination.cost < 0.0 || self.coordination.noise_sd < 0.0 {
            return Err(Error::Config("coordination cost and its noise must be non-negative".into()));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::Config("damping must lie in (0, 1]".into()));
        }
        Ok(())
    }

    pub fn years(&self) -> Vec<i32> {
        (0..self.n_years as i32).map(|t| self.first_year + t).collect()
    }
}

/// Latent and structural values of one generated observation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub plant_id: String,
    pub year: i32,
    pub state: ProductivityState,
    pub markup: f64,
    pub planned_output: f64,
    pub amenity_c: f64,
    pub amenity_d: f64,
    pub share_c: f64,
    pub cond_share_c: f64,
    pub share_d: f64,
    pub cond_share_d: f64,
    /// Inverse-elasticity terms.
    pub nu_c: f64,
    pub nu_d_posting: f64,
    /// Permanent-worker monopsony component under the configured conduct.
    pub nu_d: f64,
    /// Marginal coordination cost per manday.
    pub coordination_c: f64,
    pub coordination_d: f64,
    /// Wage-normalized coordination costs `g / W`.
    pub f_c: f64,
    pub f_d: f64,
}

/// Everything the generator knows about a panel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DgpTruth {
    pub config: DgpConfig,
    pub means: GeometricMeans,
    pub params: ProductionParams,
    pub productivity: ProductivityParams,
    pub temp_supply: LaborSupplyParams,
    pub perm_supply: LaborSupplyParams,
    pub theta: f64,
    pub surplus_coef: f64,
    /// Same order as the panel.
    pub records: Vec<TruthRecord>,
    /// Plant-years without a positive-wage solution, left out of the panel.
    pub exits: Vec<(String, i32)>,
}

impl DgpTruth {
    pub fn omega_labor(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.state.omega_labor).collect()
    }

    pub fn omega_neutral(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.state.omega_neutral).collect()
    }
}

#[derive(Clone, Debug)]
pub struct SimulatedPanel {
    pub panel: Panel,
    pub truth: DgpTruth,
}

/// Sidecar path for a panel file: same basename with a `.truth` extension.
pub fn truth_path(panel_path: &std::path::Path) -> std::path::PathBuf {
    panel_path.with_extension("truth")
}

const STREAM_LAYOUT: u64 = 0;
const STREAM_PLANT: u64 = 1;
const STREAM_MARKET: u64 = 2;
const STREAM_YEAR: u64 = 3;

/// Normal draws of one plant-year, in a fixed order.
#[derive(Clone, Copy, Default)]
struct Draws {
    capital: f64,
    materials: f64,
    white: f64,
    price: f64,
    xi_neutral: f64,
    xi_labor: f64,
    measurement: f64,
    amenity_c: f64,
    amenity_d: f64,
    strike: f64,
    coord_c: f64,
    markup: f64,
    import_u: f64,
}

impl Draws {
    fn sample(rng: &mut ChaCha8Rng) -> Self {
        Self {
            capital: gauss(rng),
            materials: gauss(rng),
            white: gauss(rng),
            price: gauss(rng),
            xi_neutral: gauss(rng),
            xi_labor: gauss(rng),
            measurement: gauss(rng),
            amenity_c: gauss(rng),
            amenity_d: gauss(rng),
            strike: gauss(rng),
            coord_c: gauss(rng),
            markup: gauss(rng),
            import_u: rng.random(),
        }
    }
}

/// Exogenous state of one plant-year entering the wage equilibrium.
#[derive(Clone, Copy, Debug)]
struct PlantYear {
    plant: usize,
    market: usize,
    capital: f64,
    materials: f64,
    white: f64,
    omega_labor: f64,
    omega_neutral: f64,
    price: f64,
    markup: f64,
    amenity_c: f64,
    amenity_d: f64,
    base_c: f64,
    base_d: f64,
    coord_c: f64,
}

/// Production side of one plant-year at normalized capital, materials and
/// white-collar days.
struct Technology<'a> {
    params: &'a ProductionParams,
    py: &'a PlantYear,
}

impl Technology<'_> {
    /// Planned output and marginal products of temporary and permanent days.
    fn evaluate(&self, temp: f64, perm: f64) -> Result<(f64, f64, f64)> {
        let p = self.params;
        let m = &p.means;
        let (c, d) = (temp / m.temp, perm / m.perm);
        let blue = blue_collar_nest(c, d, p)?;
        let labor = labor_nest(self.py.white, blue, p)?;
        let kernel = ces_kernel(self.py.capital, self.py.materials, labor, self.py.omega_labor, p)?;
        let Exponents { outer, labor: sm, blue: si } = p.exponents;
        let q = m.output * kernel.powf(1.0 / outer) * self.py.omega_neutral.exp();
        let common = q / kernel
            * p.shares.labor
            * (self.py.omega_labor * outer).exp()
            * labor.powf(outer - sm)
            * p.shares.blue
            * blue.powf(sm - si);
        Ok((q, common * p.shares.temp * c.powf(si) / temp, common * p.shares.perm * d.powf(si) / perm))
    }
}

/// Permanent-worker coordination cost implied by the temporary one.
fn perm_coordination(params: &ProductionParams, coord_c: f64, temp: f64, perm: f64) -> f64 {
    let m = &params.means;
    coord_c * m.perm_wage / m.temp_wage * ((perm / m.perm) / (temp / m.temp)).powf(params.exponents.blue - 1.0)
}

/// Nested-logit side of one worker type in one year.
struct Logit<'a> {
    eta: f64,
    gamma: f64,
    pool: f64,
    base: Vec<f64>,
    market: &'a [usize],
    n_markets: usize,
}

impl Logit<'_> {
    fn utility(&self, j: usize, wage: f64) -> f64 {
        (self.base[j] + self.gamma * wage) / (1.0 - self.eta)
    }

    fn nest_sums(&self, wages: &[f64], active: &[bool]) -> Vec<f64> {
        let mut sums = vec![0.0; self.n_markets];
        for (j, &w) in wages.iter().enumerate() {
            if active[j] {
                sums[self.market[j]] += self.utility(j, w).exp();
            }
        }
        sums
    }

    /// `(s_j, s_{j|r}, s_0)` for every plant; zero for inactive plants.
    fn shares(&self, wages: &[f64], active: &[bool]) -> Vec<(f64, f64, f64)> {
        let sums = self.nest_sums(wages, active);
        let total = 1.0 + sums.iter().filter(|&&a| a > 0.0).map(|a| a.powf(1.0 - self.eta)).sum::<f64>();
        wages
            .iter()
            .enumerate()
            .map(|(j, &w)| {
                if !active[j] {
                    return (0.0, 0.0, 1.0 / total);
                }
                let a = sums[self.market[j]];
                let cond = self.utility(j, w).exp() / a;
                (cond * a.powf(1.0 - self.eta) / total, cond, 1.0 / total)
            })
            .collect()
    }

    /// Own share as a function of the own wage, active rivals held at `wages`.
    fn own_share_fn(&self, j: usize, wages: &[f64], active: &[bool], sums: &[f64]) -> impl Fn(f64) -> (f64, f64) + '_ {
        let r = self.market[j];
        let others_in_nest: f64 = wages
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != j && active[k] && self.market[k] == r)
            .map(|(k, &w)| self.utility(k, w).exp())
            .sum();
        let others_total = 1.0
            + sums
                .iter()
                .enumerate()
                .filter(|&(q, &a)| q != r && a > 0.0)
                .map(|(_, a)| a.powf(1.0 - self.eta))
                .sum::<f64>();
        let eta = self.eta;
        move |w: f64| {
            let e = self.utility(j, w).exp();
            let a = others_in_nest + e;
            let cond = if e.is_finite() { e / a } else { 1.0 };
            let top = a.powf(1.0 - eta);
            let s = if top.is_finite() { cond * top / (others_total + top) } else { cond };
            (s, cond)
        }
    }
}

fn wedge(eta: f64, gamma: f64, share: f64, cond: f64) -> f64 {
    (1.0 - eta) / (gamma * (1.0 - eta * cond - (1.0 - eta) * share))
}

/// Positive root of a decreasing residual, bracketing upward from `start`.
fn decreasing_root(f: &mut dyn FnMut(f64) -> f64, start: f64) -> Option<f64> {
    let lo = 1e-9;
    if !(f(lo) > 0.0) {
        return None;
    }
    let mut hi = start.max(1.0);
    let mut tries = 0;
    while f(hi) >= 0.0 {
        hi *= 2.0;
        tries += 1;
        if tries > 200 {
            return None;
        }
    }
    brent_root(f, lo, hi, 1e-15 * hi, 300)
}

struct YearSolution {
    /// Plants with a positive-wage solution; the others exit for the year.
    active: Vec<bool>,
    temp_wage: Vec<f64>,
    perm_wage: Vec<f64>,
    temp: Vec<f64>,
    perm: Vec<f64>,
    shares_c: Vec<(f64, f64, f64)>,
    shares_d: Vec<(f64, f64, f64)>,
}

/// Best responses of every plant to frozen rival wages, iterated with
/// damping until wages and the set of active plants settle. A plant whose
/// marginal revenue product cannot cover the wage-setting wedge at any
/// positive wage hires nobody that year.
#[allow(clippy::too_many_arguments)]
fn solve_year(
    year: i32,
    plants: &[PlantYear],
    params: &ProductionParams,
    temp: &Logit<'_>,
    perm: &Logit<'_>,
    coef: f64,
    start: (f64, f64),
    cfg: &DgpConfig,
    plant_ids: &[String],
) -> Result<YearSolution> {
    let n = plants.len();
    let mut wc = vec![start.0; n];
    let mut wd = vec![start.1; n];
    let mut active = vec![true; n];
    let mut worst = 0;
    for _ in 0..cfg.max_iterations {
        let shares_d = perm.shares(&wd, &active);
        let sums_c = temp.nest_sums(&wc, &active);
        let sums_d = perm.nest_sums(&wd, &active);
        let best: Vec<Option<(f64, f64)>> = (0..n)
            .map(|j| {
                let py = &plants[j];
                let tech = Technology { params, py };
                let revenue_scale = py.price / py.markup;
                let d_now = if active[j] { shares_d[j].0 * perm.pool } else { perm.pool * 1e-6 };
                let share_c = temp.own_share_fn(j, &wc, &active, &sums_c);
                let mut foc_c = |w: f64| {
                    let (s, cond) = share_c(w);
                    match tech.evaluate(s * temp.pool, d_now) {
                        Ok((_, mp, _)) => revenue_scale * mp - w - wedge(temp.eta, temp.gamma, s, cond) - py.coord_c,
                        Err(_) => f64::NAN,
                    }
                };
                let new_c = decreasing_root(&mut foc_c, wc[j])?;
                let c_now = share_c(new_c).0 * temp.pool;
                let share_d = perm.own_share_fn(j, &wd, &active, &sums_d);
                let mut foc_d = |w: f64| {
                    let (s, cond) = share_d(w);
                    let d = s * perm.pool;
                    match tech.evaluate(c_now, d) {
                        Ok((q, _, mp)) => {
                            let surplus = py.price * q * (1.0 - 1.0 / py.markup);
                            revenue_scale * mp
                                - w
                                - wedge(perm.eta, perm.gamma, s, cond) * (1.0 + coef * surplus / (d * w))
                                - perm_coordination(params, py.coord_c, c_now, d)
                        }
                        Err(_) => f64::NAN,
                    }
                };
                let new_d = decreasing_root(&mut foc_d, wd[j])?;
                Some((new_c, new_d))
            })
            .collect();
        let mut change: f64 = 0.0;
        let mut switched = false;
        for (j, b) in best.into_iter().enumerate() {
            match b {
                Some((bc, bd)) => {
                    if !active[j] {
                        active[j] = true;
                        switched = true;
                        wc[j] = bc;
                        wd[j] = bd;
                        continue;
                    }
                    let c = ((bc - wc[j]) / bc).abs().max(((bd - wd[j]) / bd).abs());
                    if c > change {
                        change = c;
                        worst = j;
                    }
                    wc[j] += cfg.damping * (bc - wc[j]);
                    wd[j] += cfg.damping * (bd - wd[j]);
                }
                None => {
                    switched |= active[j];
                    active[j] = false;
                }
            }
        }
        if !switched && change < 1e-13 {
            if !active.iter().any(|&a| a) {
                return Err(Error::Generation(format!("no plant can pay a positive wage in {year}")));
            }
            let shares_c = temp.shares(&wc, &active);
            let shares_d = perm.shares(&wd, &active);
            return Ok(YearSolution {
                temp: shares_c.iter().map(|s| s.0 * temp.pool).collect(),
                perm: shares_d.iter().map(|s| s.0 * perm.pool).collect(),
                active,
                temp_wage: wc,
                perm_wage: wd,
                shares_c,
                shares_d,
            });
        }
    }
    Err(Error::Generation(format!(
        "wage fixed point for plant {} in {year} did not converge within {} iterations",
        plant_ids[plants[worst].plant], cfg.max_iterations
    )))
}

/// Baseline wage that clears the first-order condition at baseline inputs
/// with a typical within-market share.
fn target_wage(mrpl: f64, spec: &SupplySpec, coordination: f64, cond: f64, surplus_term: f64) -> f64 {
    let w = mrpl - coordination - (1.0 - spec.eta) / (spec.gamma * (1.0 - spec.eta * cond)) * surplus_term;
    w.max(0.1 * mrpl)
}

pub fn simulate_panel(cfg: &DgpConfig) -> Result<SimulatedPanel> {
    cfg.validate()?;
    let means = cfg.baseline.means()?;
    let params = ProductionParams::new(cfg.exponents, cfg.capital_wedge, means)?;
    let years = cfg.years();
    let (n, t_len) = (cfg.n_plants, cfg.n_years);
    let ex = &cfg.exogenous;

    let mut layout = substream(cfg.seed, STREAM_LAYOUT, 0);
    let market_of: Vec<usize> = (0..n).map(|_| layout.random_range(0..cfg.n_markets)).collect();
    let plant_ids: Vec<String> = (0..n).map(|j| format!("p{j:04}")).collect();

    let regulation: Vec<Vec<f64>> = (0..cfg.n_markets)
        .map(|r| {
            let mut rng = substream(cfg.seed, STREAM_MARKET, r as u64);
            let mut level = rng.random_range(0..=3) as f64;
            (0..t_len)
                .map(|t| {
                    if t > 0 && rng.random::<f64>() < ex.regulation_change_prob {
                        level = if rng.random::<bool>() { level + 1.0 } else { (level - 1.0).max(0.0) };
                    }
                    level
                })
                .collect()
        })
        .collect();

    let draws: Vec<Vec<Draws>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let mut rng = substream(cfg.seed, STREAM_PLANT, j as u64);
            (0..t_len).map(|_| Draws::sample(&mut rng)).collect()
        })
        .collect();
    let imports: Vec<Vec<f64>> = draws
        .iter()
        .map(|d| {
            let mut state = d[0].import_u < ex.import_share;
            d.iter()
                .enumerate()
                .map(|(t, x)| {
                    if t > 0 && x.import_u < ex.import_switch_prob {
                        state = !state;
                    }
                    f64::from(u8::from(state))
                })
                .collect()
        })
        .collect();

    let mut year_rng = substream(cfg.seed, STREAM_YEAR, 0);
    let mut laws = Vec::new();
    for spec in [&cfg.neutral, &cfg.labor] {
        let mut effects = BTreeMap::new();
        for (t, &y) in years.iter().enumerate() {
            let mean_reg = (0..n).map(|j| regulation[market_of[j]][t]).sum::<f64>() / n as f64;
            let mean_imp = (0..n).map(|j| imports[j][t]).sum::<f64>() / n as f64;
            let z: f64 = gauss(&mut year_rng);
            effects.insert(y, -spec.regulation * mean_reg - spec.imports * mean_imp + spec.year_effect_sd * z);
        }
        laws.push(LawOfMotion {
            persistence: spec.persistence,
            regulation: spec.regulation,
            imports: spec.imports,
            year_effects: effects,
            innovation_sd: spec.innovation_sd,
        });
    }
    let labor_law = laws.pop().expect("two laws");
    let neutral_law = laws.pop().expect("two laws");
    let productivity = ProductivityParams { neutral: neutral_law, labor: labor_law, measurement_sd: cfg.measurement_sd };

    let mu_typical = cfg.markup.typical();
    let price_level = mu_typical * means.materials_bill() / (means.output * params.shares.materials);
    let coef = cfg.conduct.surplus_coef();

    // Plant paths.
    let mut states = vec![vec![ProductivityState::default(); t_len]; n];
    let mut plant_years = vec![Vec::with_capacity(n); t_len];
    let mut strikes = vec![vec![0.0; t_len]; n];
    for j in 0..n {
        let d = &draws[j];
        let r = market_of[j];
        let rho_a = ex.amenity_correlation;
        let amenity_d_z = |x: &Draws| rho_a * x.amenity_c + (1.0 - rho_a * rho_a).sqrt() * x.amenity_d;
        let (mut lk, mut lm, mut lh, mut lp) = (0.0, 0.0, 0.0, 0.0);
        let (mut ac, mut ad, mut ls) = (0.0, 0.0, 0.0);
        let mut prev = (0.0, 0.0);
        for t in 0..t_len {
            let year = years[t];
            let reg = regulation[r][t];
            let imp = imports[j][t];
            let (xi_h, xi_l) = (cfg.neutral.innovation_sd * d[t].xi_neutral, cfg.labor.innovation_sd * d[t].xi_labor);
            let step = |law: &LawOfMotion, spec: &LawSpec, prev: f64, xi: f64, z: f64| -> Result<f64> {
                let drift = law.year_effect(year)? + law.regulation * reg + law.imports * imp;
                Ok(if t == 0 { drift / (1.0 - law.persistence) + spec.initial_sd() * z } else { drift + law.persistence * prev + xi })
            };
            let omega_h = step(&productivity.neutral, &cfg.neutral, prev.0, xi_h, d[t].xi_neutral)?;
            let omega_l = step(&productivity.labor, &cfg.labor, prev.1, xi_l, d[t].xi_labor)?;
            if t == 0 {
                lk = ex.capital.start(d[t].capital) + ex.capital_response * omega_h;
                lm = ex.materials.start(d[t].materials);
                lh = ex.white.start(d[t].white);
                lp = ex.price.start(d[t].price);
                ac = cfg.temp.amenity.start(d[t].amenity_c);
                ad = cfg.perm.amenity.start(amenity_d_z(&d[t]));
                ls = ex.strike.start(d[t].strike);
            } else {
                lk = ex.capital_response * prev.0 + ex.capital.step(lk, d[t].capital);
                lm = ex.materials.step(lm, d[t].materials);
                lh = ex.white.step(lh, d[t].white);
                lp = ex.price.step(lp, d[t].price);
                ac = cfg.temp.amenity.step(ac, d[t].amenity_c);
                ad = cfg.perm.amenity.step(ad, amenity_d_z(&d[t]));
                ls = ex.strike.step(ls, d[t].strike);
            }
            let measurement = cfg.measurement_sd * d[t].measurement;
            states[j][t] = ProductivityState {
                omega_neutral: omega_h,
                omega_labor: omega_l,
                innovation_neutral: if t == 0 { 0.0 } else { xi_h },
                innovation_labor: if t == 0 { 0.0 } else { xi_l },
                measurement,
            };
            let log_strike = ex.strike_log_mean + ls;
            strikes[j][t] = log_strike.exp();
            let noise_sd = cfg.coordination.noise_sd;
            let tt = (year - cfg.first_year) as f64;
            plant_years[t].push(PlantYear {
                plant: j,
                market: r,
                capital: lk.exp(),
                materials: lm.exp(),
                white: lh.exp(),
                omega_labor: omega_l,
                omega_neutral: omega_h,
                price: price_level * (lp - ex.price_productivity * omega_h).exp(),
                markup: cfg.markup.draw(d[t].markup),
                amenity_c: ac,
                amenity_d: ad,
                base_c: cfg.temp.trend * tt + ac,
                base_d: cfg.perm.trend * tt + ad - ex.strike_effect * log_strike,
                coord_c: cfg.coordination.cost * (noise_sd * d[t].coord_c - 0.5 * noise_sd * noise_sd).exp(),
            });
            prev = (omega_h, omega_l);
        }
    }

    // Supply calibration.
    let mut market_sizes: HashMap<usize, usize> = HashMap::new();
    for &r in &market_of {
        *market_sizes.entry(r).or_default() += 1;
    }
    let typical_cond = market_of.iter().map(|r| 1.0 / market_sizes[r] as f64).sum::<f64>() / n as f64;
    let mean_log_cond = market_of.iter().map(|r| -(market_sizes[r] as f64).ln()).sum::<f64>() / n as f64;
    let perm_surplus_term = {
        let bill_share = params.shares.labor * params.shares.blue * params.shares.perm / mu_typical;
        1.0 + coef * (1.0 - 1.0 / mu_typical) / bill_share
    };
    let coord_c0 = cfg.coordination.cost;
    let coord_d0 = coord_c0 * means.perm_wage / means.temp_wage;
    let wc0 = target_wage(means.temp_wage, &cfg.temp, coord_c0, typical_cond, 1.0);
    let wd0 = target_wage(means.perm_wage, &cfg.perm, coord_d0, typical_cond, perm_surplus_term.max(0.2));
    let calibrate = |spec: &SupplySpec, level: f64, wage: f64| {
        let pool = level * n as f64 / spec.employment_rate;
        let outside = (1.0 - spec.employment_rate) * pool;
        let intercept = spec.intercept.unwrap_or_else(|| (level / outside).ln() - spec.gamma * wage - spec.eta * mean_log_cond);
        (pool, intercept)
    };
    let (pool_c, c_c) = calibrate(&cfg.temp, means.temp, wc0);
    let (pool_d, c_d) = calibrate(&cfg.perm, means.perm, wd0);
    let temp_supply = cfg.temp.params(c_c, cfg.first_year);
    let perm_supply = cfg.perm.params(c_d, cfg.first_year);

    let solutions: Vec<YearSolution> = (0..t_len)
        .into_par_iter()
        .map(|t| {
            let year = years[t];
            let pys = &plant_years[t];
            let markets: Vec<usize> = pys.iter().map(|p| p.market).collect();
            let temp = Logit {
                eta: cfg.temp.eta,
                gamma: temp_supply.gamma_at(year),
                pool: pool_c,
                base: pys.iter().map(|p| c_c + p.base_c).collect(),
                market: &markets,
                n_markets: cfg.n_markets,
            };
            let perm = Logit {
                eta: cfg.perm.eta,
                gamma: perm_supply.gamma_at(year),
                pool: pool_d,
                base: pys.iter().map(|p| c_d + p.base_d).collect(),
                market: &markets,
                n_markets: cfg.n_markets,
            };
            solve_year(year, pys, &params, &temp, &perm, coef, (wc0, wd0), cfg, &plant_ids)
        })
        .collect::<Result<_>>()?;

    // Assemble observations plant by plant, year by year.
    let mut obs = Vec::with_capacity(n * t_len);
    let mut records = Vec::with_capacity(n * t_len);
    let mut exits = Vec::new();
    for j in 0..n {
        for t in 0..t_len {
            let sol = &solutions[t];
            if !sol.active[j] {
                exits.push((plant_ids[j].clone(), years[t]));
                continue;
            }
            let py = &plant_years[t][j];
            let (temp_days, perm_days) = (sol.temp[j], sol.perm[j]);
            let tech = Technology { params: &params, py };
            let (planned, _, _) = tech.evaluate(temp_days, perm_days)?;
            let exps = &params.exponents;
            let labor = labor_nest(py.white, blue_collar_nest(temp_days / means.temp, perm_days / means.perm, &params)?, &params)?;
            let kernel = ces_kernel(py.capital, py.materials, labor, py.omega_labor, &params)?;
            let scale = py.price / py.markup * planned / kernel;
            let materials = py.materials * means.materials;
            let white_days = py.white * means.white;
            let materials_price = scale * params.shares.materials * py.materials.powf(exps.outer) / materials;
            let white_wage = scale
                * params.shares.labor
                * (py.omega_labor * exps.outer).exp()
                * labor.powf(exps.outer - exps.labor)
                * params.shares.white
                * py.white.powf(exps.labor)
                / white_days;
            let state = states[j][t];
            let (sc, sd) = (sol.shares_c[j], sol.shares_d[j]);
            let (wc, wd) = (sol.temp_wage[j], sol.perm_wage[j]);
            let gamma_c = temp_supply.gamma_at(years[t]);
            let gamma_d = perm_supply.gamma_at(years[t]);
            let coord_d = perm_coordination(&params, py.coord_c, temp_days, perm_days);
            let nu_c = 1.0 + wedge(cfg.temp.eta, gamma_c, sc.0, sc.1) / wc;
            let nu_d_posting = 1.0 + wedge(cfg.perm.eta, gamma_d, sd.0, sd.1) / wd;
            let surplus = py.price * planned * (1.0 - 1.0 / py.markup);
            let nu_d = 1.0 + (nu_d_posting - 1.0) * (1.0 + coef * surplus / (perm_days * wd));
            obs.push(PanelObservation {
                plant_id: plant_ids[j].clone(),
                year: years[t],
                market_id: format!("m{:03}", py.market),
                output: planned * state.measurement.exp(),
                price: py.price,
                capital: py.capital * means.capital,
                materials,
                materials_price,
                white_days,
                white_wage,
                temp_days,
                temp_wage: wc,
                perm_days,
                perm_wage: wd,
                regulation: regulation[py.market][t],
                importer_lag: imports[j][t],
                strike_intensity: strikes[j][t],
                outside_temp_days: sc.2 * pool_c,
                outside_perm_days: sd.2 * pool_d,
                investment: None,
                extra: BTreeMap::new(),
            });
            records.push(TruthRecord {
                plant_id: plant_ids[j].clone(),
                year: years[t],
                state,
                markup: py.markup,
                planned_output: planned,
                amenity_c: py.amenity_c,
                amenity_d: py.amenity_d,
                share_c: sc.0,
                cond_share_c: sc.1,
                share_d: sd.0,
                cond_share_d: sd.1,
                nu_c,
                nu_d_posting,
                nu_d,
                coordination_c: py.coord_c,
                coordination_d: coord_d,
                f_c: py.coord_c / wc,
                f_d: coord_d / wd,
            });
        }
    }
    let panel = Panel::new(obs)?;
    Ok(SimulatedPanel {
        panel,
        truth: DgpTruth {
            config: cfg.clone(),
            means,
            params,
            productivity,
            temp_supply,
            perm_supply,
            theta: cfg.conduct.theta(),
            surplus_coef: coef,
            records,
            exits,
        },
    })
}

/// Stand-alone labor-market sample for the supply equation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LaborMarketConfig {
    pub seed: u64,
    pub n_markets: usize,
    pub min_plants: usize,
    pub max_plants: usize,
    pub n_years: usize,
    pub first_year: i32,
    pub gamma: f64,
    pub gamma_per_decade: f64,
    pub eta: f64,
    pub intercept: f64,
    pub trend: f64,
    pub amenity_sd: f64,
    /// Wage level at zero instrument and amenity.
    pub wage_base: f64,
    /// Wage response to a unit of the cost-shifter instrument.
    pub wage_instrument: f64,
    /// Wage response to a unit of amenity; negative for compensating differentials.
    pub wage_amenity: f64,
    pub wage_noise_sd: f64,
}

impl Default for LaborMarketConfig {
    fn default() -> Self {
        Self::temporary()
    }
}

impl LaborMarketConfig {
    pub fn temporary() -> Self {
        Self {
            seed: 1,
            n_markets: 25,
            min_plants: 1,
            max_plants: 9,
            n_years: 4,
            first_year: 2000,
            gamma: 0.009,
            gamma_per_decade: 0.002,
            eta: 0.245,
            intercept: -6.0,
            trend: 0.01,
            amenity_sd: 0.5,
            wage_base: 150.0,
            wage_instrument: 40.0,
            wage_amenity: -18.0,
            wage_noise_sd: 10.0,
        }
    }

    pub fn permanent() -> Self {
        Self { gamma: 0.005, eta: 0.402, wage_base: 300.0, wage_instrument: 70.0, wage_amenity: -30.0, wage_noise_sd: 15.0, ..Self::temporary() }
    }

    pub fn truth(&self) -> LaborSupplyParams {
        let time_factor = if self.gamma_per_decade == 0.0 {
            TimeFactor::Constant
        } else {
            TimeFactor::Linear { origin: self.first_year, scale: 10.0 }
        };
        LaborSupplyParams {
            intercept: self.intercept,
            trend: self.trend,
            trend_origin: self.first_year,
            gamma: self.gamma,
            gamma_shifts: if time_factor.is_empty() { Vec::new() } else { vec![self.gamma_per_decade] },
            eta: self.eta,
            time_factor,
        }
    }
}

/// Draws markets, wages and amenities and builds shares forward from the
/// nested logit, so the share inversion holds exactly. Instruments are the
/// plant cost shifter, the log number of plants in the market and the mean
/// shifter of rivals.
pub fn simulate_labor_market(cfg: &LaborMarketConfig) -> Result<LaborSupplyData> {
    if cfg.min_plants == 0 || cfg.max_plants < cfg.min_plants || cfg.n_markets == 0 || cfg.n_years == 0 {
        return Err(Error::Config("labor-market layout needs markets, years and at least one plant per market".into()));
    }
    if !(0.0..1.0).contains(&cfg.eta) {
        return Err(Error::Config("within-nest correlation must lie in [0, 1)".into()));
    }
    let truth = cfg.truth();
    let mut layout = substream(cfg.seed, STREAM_LAYOUT, 0);
    let sizes: Vec<usize> = (0..cfg.n_markets).map(|_| layout.random_range(cfg.min_plants..=cfg.max_plants)).collect();
    let mut plant_base = 0;
    let mut market_plants = Vec::new();
    for &s in &sizes {
        market_plants.push((plant_base..plant_base + s).collect::<Vec<_>>());
        plant_base += s;
    }

    let mut data = LaborSupplyData {
        log_ratio: Vec::new(),
        wage: Vec::new(),
        share: Vec::new(),
        cond_share: Vec::new(),
        year: Vec::new(),
        cluster: Vec::new(),
        instruments: Block::empty(0),
        source: Vec::new(),
    };
    let mut z_rows: Vec<[f64; 3]> = Vec::new();
    for t in 0..cfg.n_years {
        let year = cfg.first_year + t as i32;
        let mut rng = substream(cfg.seed, STREAM_YEAR, t as u64);
        let gamma = truth.gamma_at(year);
        let mut rows = Vec::new();
        let mut sums = vec![0.0; cfg.n_markets];
        for (r, plants) in market_plants.iter().enumerate() {
            for &j in plants {
                let z: f64 = gauss(&mut rng);
                let xi = cfg.amenity_sd * gauss(&mut rng);
                let wage = cfg.wage_base + cfg.wage_instrument * z + cfg.wage_amenity * xi + cfg.wage_noise_sd * gauss(&mut rng);
                let delta = truth.intercept + truth.trend * t as f64 + gamma * wage + xi;
                let e = (delta / (1.0 - cfg.eta)).exp();
                sums[r] += e;
                rows.push((r, j, z, wage, e));
            }
        }
        let total = 1.0 + sums.iter().map(|a| a.powf(1.0 - cfg.eta)).sum::<f64>();
        for &(r, j, z, wage, e) in &rows {
            let cond = e / sums[r];
            let share = cond * sums[r].powf(1.0 - cfg.eta) / total;
            if !(share > 0.0 && share < 1.0) {
                return Err(Error::Config(format!("share {share} outside (0, 1); lower the intercept")));
            }
            let others: Vec<f64> = rows.iter().filter(|o| o.0 == r && o.1 != j).map(|o| o.2).collect();
            let rival = if others.is_empty() { z } else { others.iter().sum::<f64>() / others.len() as f64 };
            data.log_ratio.push((share * total).ln());
            data.wage.push(wage);
            data.share.push(share);
            data.cond_share.push(cond);
            data.year.push(year);
            data.cluster.push(j);
            z_rows.push([z, (market_plants[r].len() as f64).ln(), rival]);
        }
    }
    let n = z_rows.len();
    data.instruments = Block::new(
        vec!["cost_shifter".into(), "log_n_market".into(), "rival.cost_shifter".into()],
        nalgebra::DMatrix::from_fn(n, 3, |r, c| z_rows[r][c]),
    );
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laborsupply::{inverse_supply_elasticity_term, panel_shares, WorkerType};
    use crate::markets::{labor_frictions, markup_from_labor, markup_from_materials, NestLevels};
    use crate::model::{omega_l_characterization, worker_shares_from_means};

    fn small(seed: u64) -> DgpConfig {
        DgpConfig { seed, n_plants: 40, n_years: 4, n_markets: 6, ..Default::default() }
    }

    #[test]
    fn first_order_conditions_hold() {
        let sim = simulate_panel(&small(3)).unwrap();
        let t = &sim.truth;
        let workers = worker_shares_from_means(&t.means).unwrap();
        for (o, r) in sim.panel.obs().iter().zip(&t.records) {
            let omega = omega_l_characterization(o, &t.params.exponents, &workers, &t.means).unwrap();
            assert!((omega - r.state.omega_labor).abs() < 1e-10);
            let lv = NestLevels::of(o, &t.params).unwrap();
            let mu_m = markup_from_materials(o, &t.params, r.state.omega_labor, &lv, r.planned_output).unwrap();
            let mu_l = markup_from_labor(o, &t.params, r.state.omega_labor, &lv, r.planned_output).unwrap();
            assert!((mu_m - r.markup).abs() < 1e-10 && (mu_l - r.markup).abs() < 1e-10);
            let (ntc, ntd) = labor_frictions(o, &t.params, &lv).unwrap();
            assert!((ntc - r.nu_c - r.f_c).abs() < 1e-8, "{ntc} {} {}", r.nu_c, r.f_c);
            assert!((ntd - r.nu_d - r.f_d).abs() < 1e-8, "{ntd} {} {}", r.nu_d, r.f_d);
        }
    }

    #[test]
    fn shares_add_up_and_match_estimator_view() {
        let sim = simulate_panel(&small(4)).unwrap();
        let t = &sim.truth;
        let est = panel_shares(&sim.panel, WorkerType::Temporary).unwrap();
        for (i, r) in t.records.iter().enumerate() {
            assert!((est[i].0 - r.share_c).abs() < 1e-12 * r.share_c.max(1e-300) + 1e-15);
            assert!((est[i].1 - r.cond_share_c).abs() < 1e-12);
            let o = &sim.panel.obs()[i];
            let nu = inverse_supply_elasticity_term(o.temp_wage, est[i].0, est[i].1, &t.temp_supply, o.year).unwrap();
            assert!((nu - r.nu_c).abs() < 1e-10);
        }
        let mut by_year: BTreeMap<i32, f64> = BTreeMap::new();
        for (i, o) in sim.panel.obs().iter().enumerate() {
            *by_year.entry(o.year).or_default() += est[i].0;
        }
        for (y, s) in by_year {
            let s0 = est[sim.panel.obs().iter().position(|o| o.year == y).unwrap()].2;
            assert!((s + s0 - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn same_seed_same_panel() {
        let a = simulate_panel(&small(9)).unwrap();
        let b = simulate_panel(&small(9)).unwrap();
        assert_eq!(a.panel.obs(), b.panel.obs());
        let c = simulate_panel(&small(10)).unwrap();
        assert_ne!(a.panel.obs(), c.panel.obs());
    }

    #[test]
    fn full_firm_power_matches_posting() {
        let nb = simulate_panel(&DgpConfig { conduct: Conduct::NashBertrand, ..small(5) }).unwrap();
        let one = simulate_panel(&DgpConfig { conduct: Conduct::NashBargaining { theta: 1.0 }, ..small(5) }).unwrap();
        for (a, b) in nb.panel.obs().iter().zip(one.panel.obs()) {
            assert!((a.perm_wage - b.perm_wage).abs() < 1e-10 * a.perm_wage);
        }
    }

    #[test]
    fn labor_market_inversion_is_exact() {
        let cfg = LaborMarketConfig::temporary();
        let d = simulate_labor_market(&cfg).unwrap();
        assert!(d.len() > 50);
        let truth = cfg.truth();
        // Residual of the share inversion is the amenity, which is mean zero.
        let resid: Vec<f64> = (0..d.len())
            .map(|i| {
                d.log_ratio[i]
                    - truth.intercept
                    - truth.trend * (d.year[i] - cfg.first_year) as f64
                    - truth.gamma_at(d.year[i]) * d.wage[i]
                    - truth.eta * d.cond_share[i].ln()
            })
            .collect();
        assert!(crate::stats::mean(&resid).abs() < 0.15);
    }
}
