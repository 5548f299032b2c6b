//! Summary tables and plot-data series built from per-observation results.

use std::collections::BTreeMap;

use labormarkdown::laborsupply::in_bargaining_range;
use labormarkdown::markets::{markdown, MarketPowerRecord};
use labormarkdown::stats::{self, quantile, weighted_mean_se};
use labormarkdown::PanelObservation;
use serde::{Deserialize, Serialize};

use crate::config::{ReportConfig, ReportWeighting};

/// Two-sided 95% normal critical value.
const Z95: f64 = 1.959_963_984_540_054;

/// Per-observation productivity output of Steps 1–3.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductivityRow {
    pub plant_id: String,
    pub year: i32,
    pub omega_l: f64,
    pub xi_l: Option<f64>,
    pub composite: Option<f64>,
    pub omega_h: Option<f64>,
    pub xi_h: Option<f64>,
    pub measurement: Option<f64>,
}

/// One row of the market-power summary table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub measure: String,
    pub median: f64,
    pub mean: f64,
    pub sd: f64,
    pub iqr: f64,
    pub observations: usize,
}

impl SummaryRow {
    pub fn of(measure: &str, values: &[f64]) -> Self {
        Self {
            measure: measure.into(),
            median: stats::median(values),
            mean: stats::mean(values),
            sd: stats::sd(values),
            iqr: quantile(values, 0.75) - quantile(values, 0.25),
            observations: values.len(),
        }
    }
}

/// One point of a plot series: weighted mean by year with a 95% band.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlotPoint {
    pub series: String,
    pub year: i32,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub observations: usize,
}

/// Weighted mean of a measure over a block of years.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalPoint {
    pub series: String,
    pub first_year: i32,
    pub last_year: i32,
    pub mean: f64,
    pub std_error: f64,
    pub observations: usize,
}

/// Report weight of an observation, `None` when unusable.
pub fn weight(o: &PanelObservation, weighting: ReportWeighting) -> Option<f64> {
    match weighting {
        ReportWeighting::Equal => Some(1.0),
        ReportWeighting::LogRevenue => {
            let w = o.revenue().ln();
            (w.is_finite() && w > 0.0).then_some(w)
        }
    }
}

/// Market-power summary: materials and labor markups (Lerner-restricted when
/// configured), markdown components and composite frictions.
pub fn market_power_summary(records: &[MarketPowerRecord], cfg: &ReportConfig) -> Vec<SummaryRow> {
    let output_side: Vec<&MarketPowerRecord> =
        records.iter().filter(|r| !cfg.lerner_restriction || r.positive_lerner()).collect();
    let col = |f: &dyn Fn(&MarketPowerRecord) -> Option<f64>, rs: &[&MarketPowerRecord]| -> Vec<f64> {
        rs.iter().filter_map(|r| f(r)).filter(|v| v.is_finite()).collect()
    };
    let all: Vec<&MarketPowerRecord> = records.iter().collect();
    let bargaining: Vec<&MarketPowerRecord> = records.iter().filter(|r| in_bargaining_range(r)).collect();
    vec![
        SummaryRow::of("mu_M", &col(&|r| Some(r.mu), &output_side)),
        SummaryRow::of("mu_H", &col(&|r| Some(r.mu_labor), &output_side)),
        SummaryRow::of("nu_C", &col(&|r| r.nu_c, &all)),
        SummaryRow::of("nu_D_NB", &col(&|r| r.nu_d, &bargaining)),
        SummaryRow::of("nu_D_NN", &col(&|r| r.nu_d_posting, &all)),
        SummaryRow::of("nu_tilde_C", &col(&|r| Some(r.nu_tilde_c), &all)),
        SummaryRow::of("nu_tilde_D", &col(&|r| Some(r.nu_tilde_d), &all)),
    ]
}

/// A named per-observation measure with its own sample filter.
pub struct Series<'a> {
    pub name: &'a str,
    pub value: Box<dyn Fn(usize) -> Option<f64> + 'a>,
}

fn by_year(obs: &[PanelObservation], series: &Series<'_>, weighting: ReportWeighting) -> BTreeMap<i32, (Vec<f64>, Vec<f64>)> {
    let mut groups: BTreeMap<i32, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for (i, o) in obs.iter().enumerate() {
        let (Some(v), Some(w)) = ((series.value)(i), weight(o, weighting)) else { continue };
        if v.is_finite() {
            let g = groups.entry(o.year).or_default();
            g.0.push(v);
            g.1.push(w);
        }
    }
    groups
}

/// Weighted yearly means with 95% bands.
pub fn plot_series(obs: &[PanelObservation], series: &[Series<'_>], weighting: ReportWeighting) -> Vec<PlotPoint> {
    let mut out = Vec::new();
    for s in series {
        for (year, (v, w)) in by_year(obs, s, weighting) {
            let (m, se) = weighted_mean_se(&v, &w);
            out.push(PlotPoint {
                series: s.name.into(),
                year,
                mean: m,
                ci_low: m - Z95 * se,
                ci_high: m + Z95 * se,
                observations: v.len(),
            });
        }
    }
    out
}

/// Weighted means of each series within the configured year blocks.
pub fn interval_summary(obs: &[PanelObservation], series: &[Series<'_>], cfg: &ReportConfig) -> Vec<IntervalPoint> {
    let mut out = Vec::new();
    for s in series {
        for &[first, last] in &cfg.policy_intervals {
            let (mut v, mut w) = (Vec::new(), Vec::new());
            for (i, o) in obs.iter().enumerate() {
                if o.year < first || o.year > last {
                    continue;
                }
                if let (Some(x), Some(wt)) = ((s.value)(i), weight(o, cfg.weighting)) {
                    if x.is_finite() {
                        v.push(x);
                        w.push(wt);
                    }
                }
            }
            let (m, se) = weighted_mean_se(&v, &w);
            out.push(IntervalPoint {
                series: s.name.into(),
                first_year: first,
                last_year: last,
                mean: m,
                std_error: se,
                observations: v.len(),
            });
        }
    }
    out
}

/// Output-market and productivity series; observations with a
/// non-positive Lerner index are dropped when the restriction is on.
pub fn output_series<'a>(
    obs: &'a [PanelObservation],
    records: &'a [MarketPowerRecord],
    productivity: &'a [ProductivityRow],
    cfg: &ReportConfig,
) -> Vec<Series<'a>> {
    let restrict = cfg.lerner_restriction;
    let keep = move |i: usize| !restrict || records[i].positive_lerner();
    let mk = |name: &'a str, f: Box<dyn Fn(usize) -> Option<f64> + 'a>| Series {
        name,
        value: Box::new(move |i| if keep(i) { f(i) } else { None }),
    };
    vec![
        mk("markup", Box::new(|i| Some(records[i].mu))),
        mk("lerner", Box::new(|i| Some(records[i].lerner))),
        mk("log_planned_output", Box::new(|i| Some(records[i].q_hat.ln()))),
        mk("log_operating_profit", Box::new(|i| Some(records[i].pi_hat).filter(|p| *p > 0.0).map(f64::ln))),
        mk("log_price", Box::new(|i| Some(obs[i].price.ln()))),
        mk("log_marginal_cost", Box::new(|i| Some(records[i].mc.ln()))),
        mk("omega_H", Box::new(|i| productivity[i].omega_h)),
        mk("omega_L", Box::new(|i| Some(productivity[i].omega_l))),
        mk("tfp", Box::new(|i| Some(records[i].tfp))),
    ]
}

/// Markdown series: temporary workers and permanent workers under wage
/// posting on the full sample, bargaining where its markdown is in range.
pub fn markdown_series(records: &[MarketPowerRecord]) -> Vec<Series<'_>> {
    vec![
        Series { name: "markdown_C", value: Box::new(|i| records[i].nu_c.map(markdown)) },
        Series { name: "markdown_D_posting", value: Box::new(|i| records[i].nu_d_posting.map(markdown)) },
        Series {
            name: "markdown_D_bargaining",
            value: Box::new(|i| in_bargaining_range(&records[i]).then(|| records[i].nu_d.map(markdown)).flatten()),
        },
    ]
}

/// Actual and counterfactual annual wages; the counterfactual pays the
/// marginal revenue product, `ν · W`, times the working days per year.
pub fn wage_series<'a>(obs: &'a [PanelObservation], records: &'a [MarketPowerRecord], days: f64) -> Vec<Series<'a>> {
    let in_range = move |i: usize| in_bargaining_range(&records[i]);
    vec![
        Series { name: "wage_C", value: Box::new(move |i| Some(obs[i].temp_wage * days)) },
        Series { name: "wage_C_no_market_power", value: Box::new(move |i| records[i].nu_c.map(|n| n * obs[i].temp_wage * days)) },
        Series { name: "wage_D", value: Box::new(move |i| Some(obs[i].perm_wage * days)) },
        Series {
            name: "wage_D_no_market_power_posting",
            value: Box::new(move |i| records[i].nu_d_posting.map(|n| n * obs[i].perm_wage * days)),
        },
        Series {
            name: "wage_D_bargaining_sample",
            value: Box::new(move |i| in_range(i).then_some(obs[i].perm_wage * days)),
        },
        Series {
            name: "wage_D_no_market_power_bargaining",
            value: Box::new(move |i| if in_range(i) { records[i].nu_d.map(|n| n * obs[i].perm_wage * days) } else { None }),
        },
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_statistics() {
        let row = SummaryRow::of("x", &[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(row.median, 3.0);
        assert_eq!(row.mean, 3.0);
        assert_eq!(row.iqr, 2.0);
        assert_eq!(row.observations, 5);
    }
}
