//! Run configuration read from a single TOML file.
//!
//! Relative paths are resolved against the directory holding the file.

use std::path::{Path, PathBuf};

use labormarkdown::bootstrap::DrawScheme;
use labormarkdown::dgp::DgpConfig;
use labormarkdown::estim::{InstrumentSet, Step1Options, Step2Options};
use labormarkdown::laborsupply::{SupplyInstruments, ThetaOptions, TimeFactor};
use labormarkdown::{Error, PanelObservation, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const LAST_STEP: u8 = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    /// Panel CSV in the ingest layout.
    pub panel: Option<PathBuf>,
    /// JSON file with the normalization baseline; sample geometric means
    /// are used when absent.
    pub means: Option<PathBuf>,
    /// Rebuild capital by perpetual inventory from the `I` column.
    pub perpetual_inventory: bool,
    pub depreciation: f64,
}

impl Default for InputConfig {
    fn default() -> Self {
        Self { panel: None, means: None, perpetual_inventory: false, depreciation: crate::capital::DEFAULT_DEPRECIATION }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SupplyConfig {
    pub instruments: SupplyInstruments,
    pub time_factor: TimeFactor,
    /// Use 2SLS estimates even when the within-nest correlation is outside (0, 1).
    pub allow_out_of_range: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapConfig {
    pub reps: usize,
    pub seed: u64,
    pub scheme: DrawScheme,
    /// Pairs-bootstrap replications for the bargaining weight.
    pub theta_reps: usize,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self { reps: 100, seed: 1, scheme: DrawScheme::PerPlant, theta_reps: 100 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportWeighting {
    /// Log of revenue in constant prices.
    #[default]
    LogRevenue,
    Equal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    pub weighting: ReportWeighting,
    /// Restrict output-market statistics to positive Lerner indices.
    pub lerner_restriction: bool,
    /// Inclusive `[first, last]` year ranges for period summaries.
    pub policy_intervals: Vec<[i32; 2]>,
    /// Days per year used to annualize daily wages.
    pub working_days: f64,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self { weighting: ReportWeighting::LogRevenue, lerner_restriction: true, policy_intervals: Vec::new(), working_days: 250.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub input: InputConfig,
    /// Last estimation step to run; steps always start at 1.
    pub steps: u8,
    pub step1: Step1Options,
    pub step2: Step2Options,
    pub supply: SupplyConfig,
    pub theta: ThetaOptions,
    pub bootstrap: BootstrapConfig,
    pub report: ReportConfig,
    /// Generator settings for `simulate`.
    pub simulate: DgpConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input: InputConfig::default(),
            steps: LAST_STEP,
            step1: Step1Options::default(),
            step2: Step2Options::default(),
            supply: SupplyConfig::default(),
            theta: ThetaOptions::default(),
            bootstrap: BootstrapConfig::default(),
            report: ReportConfig::default(),
            simulate: DgpConfig::default(),
        }
    }
}

/// Parses `--steps`: `N`, `1..N`, `1..=N` or `1-N`.
pub fn parse_steps(s: &str) -> Result<u8> {
    let s = s.trim();
    let (first, last) = match s.split_once("..=").or_else(|| s.split_once("..")).or_else(|| s.split_once('-')) {
        Some((a, b)) => (a.trim(), b.trim()),
        None => ("1", s),
    };
    let parse = |v: &str| v.parse::<u8>().map_err(|_| Error::Config(format!("invalid step range '{s}'")));
    let (first, last) = (parse(first)?, parse(last)?);
    if first != 1 {
        return Err(Error::Config(format!("step range must start at 1, got '{s}'")));
    }
    if !(1..=LAST_STEP).contains(&last) {
        return Err(Error::Config(format!("last step must be between 1 and {LAST_STEP}, got {last}")));
    }
    Ok(last)
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("invalid configuration: {e}")))
    }

    /// Reads a config file and resolves its relative paths.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.input.panel, &mut cfg.input.means].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize configuration: {e}")))
    }

    /// SHA-256 of the canonical serialization, so formatting and comments do
    /// not change it but any setting does.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("configuration serializes");
        Sha256::digest(&canonical).iter().map(|b| format!("{b:02x}")).collect()
    }

    fn instrument_sets(&self) -> Result<Vec<InstrumentSet>> {
        [&self.step1.instruments, &self.step2.instruments, &self.theta.instruments, &self.supply.instruments.terms]
            .into_iter()
            .map(|v| InstrumentSet::parse(v))
            .collect()
    }

    /// Checks that do not need the data.
    pub fn validate(&self) -> Result<()> {
        if !(1..=LAST_STEP).contains(&self.steps) {
            return Err(Error::Config(format!("steps must be between 1 and {LAST_STEP}, got {}", self.steps)));
        }
        if !(0.0..=1.0).contains(&self.input.depreciation) {
            return Err(Error::Config(format!("depreciation must lie in [0, 1], got {}", self.input.depreciation)));
        }
        if !(self.report.working_days > 0.0) {
            return Err(Error::Config("working_days must be positive".into()));
        }
        for w in &self.report.policy_intervals {
            if w[0] > w[1] {
                return Err(Error::Config(format!("policy interval [{}, {}] is reversed", w[0], w[1])));
            }
        }
        for pair in self.report.policy_intervals.windows(2) {
            if pair[1][0] <= pair[0][1] {
                return Err(Error::Config(format!(
                    "policy intervals [{}, {}] and [{}, {}] overlap or are out of order",
                    pair[0][0], pair[0][1], pair[1][0], pair[1][1]
                )));
            }
        }
        self.supply.time_factor.validate()?;
        self.instrument_sets()?;
        Ok(())
    }

    /// Checks that extra-column instruments exist in every observation.
    pub fn validate_columns(&self, obs: &[PanelObservation]) -> Result<()> {
        for set in self.instrument_sets()? {
            for col in set.extra_columns() {
                if let Some(o) = obs.iter().find(|o| !o.extra.contains_key(&col)) {
                    return Err(Error::Validation(format!(
                        "instrument column '{col}' is missing (first at plant {} in {})",
                        o.plant_id, o.year
                    )));
                }
            }
        }
        if self.input.perpetual_inventory && obs.iter().all(|o| o.investment.is_none()) {
            return Err(Error::Validation("perpetual inventory requested but the I column is absent".into()));
        }
        Ok(())
    }
}
