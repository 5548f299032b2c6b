//! Validated plant-year panel with lag links.

use std::collections::{BTreeMap, HashSet};

use crate::error::{Error, Result};
use crate::model::PanelObservation;

/// Observations sorted by (plant, year) with precomputed indices.
#[derive(Clone, Debug)]
pub struct Panel {
    obs: Vec<PanelObservation>,
    lag: Vec<Option<usize>>,
    plant: Vec<usize>,
    plants: Vec<String>,
    market: Vec<usize>,
    markets: Vec<String>,
    years: Vec<i32>,
}

impl Panel {
    pub fn new(mut obs: Vec<PanelObservation>) -> Result<Self> {
        if obs.is_empty() {
            return Err(Error::Validation("panel is empty".into()));
        }
        for o in &obs {
            o.validate()?;
        }
        obs.sort_by(|a, b| a.plant_id.cmp(&b.plant_id).then(a.year.cmp(&b.year)));
        let mut seen = HashSet::new();
        for o in &obs {
            if !seen.insert((o.plant_id.as_str(), o.year)) {
                return Err(Error::Validation(format!(
                    "duplicate observation for plant {} in {}",
                    o.plant_id, o.year
                )));
            }
        }
        let mut plants = Vec::new();
        let mut plant = Vec::with_capacity(obs.len());
        let mut lag = Vec::with_capacity(obs.len());
        for (i, o) in obs.iter().enumerate() {
            let same_plant = i > 0 && obs[i - 1].plant_id == o.plant_id;
            if !same_plant {
                plants.push(o.plant_id.clone());
            }
            plant.push(plants.len() - 1);
            lag.push(if same_plant && obs[i - 1].year == o.year - 1 { Some(i - 1) } else { None });
        }
        let market_ids: BTreeMap<&str, usize> = {
            let mut names: Vec<&str> = obs.iter().map(|o| o.market_id.as_str()).collect();
            names.sort_unstable();
            names.dedup();
            names.into_iter().enumerate().map(|(i, n)| (n, i)).collect()
        };
        let markets: Vec<String> = market_ids.keys().map(|s| s.to_string()).collect();
        let market = obs.iter().map(|o| market_ids[o.market_id.as_str()]).collect();
        let mut years: Vec<i32> = obs.iter().map(|o| o.year).collect();
        years.sort_unstable();
        years.dedup();
        Ok(Self { obs, lag, plant, plants, market, markets, years })
    }

    /// Same panel structure with replaced observation values (plant, market and
    /// year identifiers must be unchanged).
    pub fn with_values(&self, obs: Vec<PanelObservation>) -> Result<Self> {
        if obs.len() != self.obs.len()
            || obs
                .iter()
                .zip(&self.obs)
                .any(|(a, b)| a.plant_id != b.plant_id || a.year != b.year || a.market_id != b.market_id)
        {
            return Err(Error::Validation("replacement observations change the panel layout".into()));
        }
        for o in &obs {
            o.validate()?;
        }
        Ok(Self { obs, ..self.clone() })
    }

    pub fn obs(&self) -> &[PanelObservation] {
        &self.obs
    }

    pub fn into_obs(self) -> Vec<PanelObservation> {
        self.obs
    }

    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }

    pub fn lag(&self, i: usize) -> Option<usize> {
        self.lag[i]
    }

    pub fn plant_index(&self, i: usize) -> usize {
        self.plant[i]
    }

    pub fn plants(&self) -> &[String] {
        &self.plants
    }

    pub fn market_index(&self, i: usize) -> usize {
        self.market[i]
    }

    pub fn markets(&self) -> &[String] {
        &self.markets
    }

    pub fn years(&self) -> &[i32] {
        &self.years
    }

    /// Indices of observations that have a previous-year record.
    pub fn with_lag(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.lag[i].is_some()).collect()
    }

    /// Number of plants observed in each observation's market-year.
    pub fn plants_in_market_year(&self) -> Vec<usize> {
        let mut counts: BTreeMap<(usize, i32), usize> = BTreeMap::new();
        for (i, o) in self.obs.iter().enumerate() {
            *counts.entry((self.market[i], o.year)).or_default() += 1;
        }
        self.obs
            .iter()
            .enumerate()
            .map(|(i, o)| counts[&(self.market[i], o.year)])
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn obs(plant: &str, year: i32) -> PanelObservation {
        PanelObservation {
            plant_id: plant.into(),
            year,
            market_id: "m".into(),
            output: 1.0,
            price: 1.0,
            capital: 1.0,
            materials: 1.0,
            materials_price: 1.0,
            white_days: 1.0,
            white_wage: 1.0,
            temp_days: 1.0,
            temp_wage: 1.0,
            perm_days: 1.0,
            perm_wage: 1.0,
            regulation: 0.0,
            importer_lag: 0.0,
            strike_intensity: 0.0,
            outside_temp_days: 1.0,
            outside_perm_days: 1.0,
            investment: None,
            extra: BTreeMap::new(),
        }
    }

    #[test]
    fn lags_follow_consecutive_years() {
        let p = Panel::new(vec![obs("b", 2001), obs("a", 2002), obs("a", 2000), obs("a", 2001), obs("b", 2003)]).unwrap();
        let keys: Vec<(String, i32)> = p.obs().iter().map(|o| (o.plant_id.clone(), o.year)).collect();
        assert_eq!(keys[0], ("a".to_string(), 2000));
        assert_eq!(p.lag(0), None);
        assert_eq!(p.lag(1), Some(0));
        assert_eq!(p.lag(2), Some(1));
        assert_eq!(p.lag(3), None);
        assert_eq!(p.lag(4), None);
        assert_eq!(p.plants().len(), 2);
    }

    #[test]
    fn duplicates_rejected() {
        assert!(Panel::new(vec![obs("a", 2000), obs("a", 2000)]).is_err());
    }
}
