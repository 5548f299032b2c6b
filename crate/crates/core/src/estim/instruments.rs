//! Instrument terms written as small expressions.
//!
//! A term is one or more factors joined by `*`. A factor is a base variable,
//! optionally prefixed by `lag.` (previous year of the same plant) and
//! optionally suffixed by `^2`. Extra input columns are referenced as
//! `x:<column>`. Examples: `lag.log_H`, `lag.log_C*lag.log_D`, `lag.log_M^2`.

use std::fmt;

use crate::error::{Error, Result};
use crate::model::GeometricMeans;
use crate::panel::Panel;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Base {
    LogCapital,
    LogMaterials,
    LogWhite,
    LogTemp,
    LogPerm,
    /// `ln(D̈ + Ḧ)`, strike-eligible employment.
    LogEligible,
    LogWhiteBill,
    LogPrice,
    LogMaterialsPrice,
    LogStrike,
    Strike,
    Regulation,
    ImporterLag,
    LogMarketSize,
    OmegaLabor,
    Extra(String),
}

impl Base {
    fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "log_K" => Self::LogCapital,
            "log_M" => Self::LogMaterials,
            "log_H" => Self::LogWhite,
            "log_C" => Self::LogTemp,
            "log_D" => Self::LogPerm,
            "log_DH" => Self::LogEligible,
            "log_wbill_H" => Self::LogWhiteBill,
            "log_P" => Self::LogPrice,
            "log_P_M" => Self::LogMaterialsPrice,
            "log_strike" => Self::LogStrike,
            "strike" => Self::Strike,
            "IDA" => Self::Regulation,
            "Imp_lag" => Self::ImporterLag,
            "log_n_market" => Self::LogMarketSize,
            "omega_L" => Self::OmegaLabor,
            other => match other.strip_prefix("x:") {
                Some(name) if !name.is_empty() => Self::Extra(name.to_string()),
                _ => return Err(Error::Config(format!("unknown instrument variable '{other}'"))),
            },
        })
    }

    fn name(&self) -> String {
        match self {
            Self::LogCapital => "log_K".into(),
            Self::LogMaterials => "log_M".into(),
            Self::LogWhite => "log_H".into(),
            Self::LogTemp => "log_C".into(),
            Self::LogPerm => "log_D".into(),
            Self::LogEligible => "log_DH".into(),
            Self::LogWhiteBill => "log_wbill_H".into(),
            Self::LogPrice => "log_P".into(),
            Self::LogMaterialsPrice => "log_P_M".into(),
            Self::LogStrike => "log_strike".into(),
            Self::Strike => "strike".into(),
            Self::Regulation => "IDA".into(),
            Self::ImporterLag => "Imp_lag".into(),
            Self::LogMarketSize => "log_n_market".into(),
            Self::OmegaLabor => "omega_L".into(),
            Self::Extra(n) => format!("x:{n}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Factor {
    pub base: Base,
    pub lagged: bool,
    pub squared: bool,
}

/// Product of factors.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InstrumentTerm {
    pub factors: Vec<Factor>,
}

impl InstrumentTerm {
    pub fn parse(s: &str) -> Result<Self> {
        let mut factors = Vec::new();
        for raw in s.split('*') {
            let raw = raw.trim();
            let (raw, squared) = match raw.strip_suffix("^2") {
                Some(r) => (r, true),
                None => (raw, false),
            };
            let (raw, lagged) = match raw.strip_prefix("lag.") {
                Some(r) => (r, true),
                None => (raw, false),
            };
            factors.push(Factor { base: Base::parse(raw)?, lagged, squared });
        }
        if factors.is_empty() {
            return Err(Error::Config("empty instrument term".into()));
        }
        Ok(Self { factors })
    }

    pub fn uses_omega_labor(&self) -> bool {
        self.factors.iter().any(|f| f.base == Base::OmegaLabor)
    }

    pub fn needs_lag(&self) -> bool {
        self.factors.iter().any(|f| f.lagged)
    }
}

impl fmt::Display for InstrumentTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .factors
            .iter()
            .map(|x| format!("{}{}{}", if x.lagged { "lag." } else { "" }, x.base.name(), if x.squared { "^2" } else { "" }))
            .collect();
        write!(f, "{}", parts.join("*"))
    }
}

/// Data an instrument may read besides the panel itself.
pub struct InstrumentContext<'a> {
    pub panel: &'a Panel,
    pub means: &'a GeometricMeans,
    pub omega_labor: Option<&'a [f64]>,
    /// Plants per market-year, per observation.
    pub market_size: &'a [usize],
}

fn positive_log(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v.ln())
    } else {
        Err(Error::Validation(format!("instrument {name} needs a positive value, got {v}")))
    }
}

impl InstrumentContext<'_> {
    fn base_value(&self, base: &Base, i: usize) -> Result<f64> {
        let o = &self.panel.obs()[i];
        let m = self.means;
        Ok(match base {
            Base::LogCapital => (o.capital / m.capital).ln(),
            Base::LogMaterials => (o.materials / m.materials).ln(),
            Base::LogWhite => (o.white_days / m.white).ln(),
            Base::LogTemp => (o.temp_days / m.temp).ln(),
            Base::LogPerm => (o.perm_days / m.perm).ln(),
            Base::LogEligible => (o.perm_days / m.perm + o.white_days / m.white).ln(),
            Base::LogWhiteBill => (o.white_bill() / m.white_bill()).ln(),
            Base::LogPrice => o.price.ln(),
            Base::LogMaterialsPrice => (o.materials_price / m.materials_price).ln(),
            Base::LogStrike => positive_log("log_strike", o.strike_intensity)?,
            Base::Strike => o.strike_intensity,
            Base::Regulation => o.regulation,
            Base::ImporterLag => o.importer_lag,
            Base::LogMarketSize => (self.market_size[i] as f64).ln(),
            Base::OmegaLabor => match self.omega_labor {
                Some(w) => w[i],
                None => return Err(Error::Config("omega_L instrument used before it is available".into())),
            },
            Base::Extra(name) => *o
                .extra
                .get(name)
                .ok_or_else(|| Error::Config(format!("extra instrument column '{name}' is missing")))?,
        })
    }

    /// Value of a term at observation `i`, or `None` when a lag is missing.
    pub fn value(&self, term: &InstrumentTerm, i: usize) -> Result<Option<f64>> {
        let mut v = 1.0;
        for f in &term.factors {
            let at = if f.lagged {
                match self.panel.lag(i) {
                    Some(j) => j,
                    None => return Ok(None),
                }
            } else {
                i
            };
            let x = self.base_value(&f.base, at)?;
            v *= if f.squared { x * x } else { x };
        }
        if v.is_finite() {
            Ok(Some(v))
        } else {
            Err(Error::Validation(format!("instrument {term} is not finite at observation {i}")))
        }
    }
}

/// Ordered list of instrument terms.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct InstrumentSet {
    pub terms: Vec<InstrumentTerm>,
}

impl InstrumentSet {
    pub fn parse<S: AsRef<str>>(specs: &[S]) -> Result<Self> {
        let terms = specs.iter().map(|s| InstrumentTerm::parse(s.as_ref())).collect::<Result<Vec<_>>>()?;
        Ok(Self { terms })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.terms.iter().map(|t| t.to_string()).collect()
    }

    pub fn uses_omega_labor(&self) -> bool {
        self.terms.iter().any(|t| t.uses_omega_labor())
    }

    /// Extra input columns referenced through `x:<column>`.
    pub fn extra_columns(&self) -> Vec<String> {
        let mut cols: Vec<String> = self
            .terms
            .iter()
            .flat_map(|t| &t.factors)
            .filter_map(|f| match &f.base {
                Base::Extra(name) => Some(name.clone()),
                _ => None,
            })
            .collect();
        cols.sort();
        cols.dedup();
        cols
    }

    /// All term values at `i`, or `None` if any lag is missing.
    pub fn row(&self, ctx: &InstrumentContext<'_>, i: usize) -> Result<Option<Vec<f64>>> {
        let mut out = Vec::with_capacity(self.terms.len());
        for t in &self.terms {
            match ctx.value(t, i)? {
                Some(v) => out.push(v),
                None => return Ok(None),
            }
        }
        Ok(Some(out))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display_round_trip() {
        for s in ["lag.log_H", "lag.log_C*lag.log_D", "lag.log_M^2", "x:electricity", "log_strike*lag.log_D"] {
            assert_eq!(InstrumentTerm::parse(s).unwrap().to_string(), s);
        }
        assert!(InstrumentTerm::parse("log_Z").is_err());
        assert!(InstrumentTerm::parse("x:").is_err());
    }

    #[test]
    fn lag_detection() {
        let t = InstrumentTerm::parse("log_K*lag.omega_L").unwrap();
        assert!(t.needs_lag());
        assert!(t.uses_omega_labor());
    }
}
