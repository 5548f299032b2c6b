//! Wild bootstrap for the production parameters and a plant-level pairs
//! bootstrap for the bargaining weight.
//!
//! The wild bootstrap perturbs labor-augmenting innovations and output
//! measurement error with Rademacher signs, rebuilds materials so that the
//! white-collar/materials first-order ratio still holds, and re-runs the
//! first three estimation steps on each perturbed panel. Replications run in
//! parallel and are reduced in index order, so results do not depend on the
//! number of worker threads.

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dgp::substream;
use crate::error::{Error, Result};
use crate::estim::step1::{step1_estimate, Step1Options, Step1Output};
use crate::estim::step2::{step2_estimate, Step2Options, Step2Output};
use crate::kalman::{estimate_sigma_h, SmootherOutput, StateSpaceSpec};
use crate::laborsupply::theta::{estimate_theta, ConductInputs, ThetaOptions};
use crate::markets::MarketPowerRecord;
use crate::model::{log_f_from_logs, omega_l_characterization, worker_shares_from_means, GeometricMeans, LogInputs};
use crate::panel::Panel;
use crate::stats;

const STREAM_WILD: u64 = 16;
const STREAM_PAIRS: u64 = 17;

/// Tolerance of the per-replication first-order-ratio check.
const CHARACTERIZATION_TOL: f64 = 1e-8;

/// Parameters reported by the wild bootstrap, in table order.
pub const WILD_PARAMETERS: [&str; 14] = [
    "sigma_I", "sigma_M", "sigma_O", "alpha_K", "alpha_L", "alpha_M", "tau", "sigma_H", "rho_H", "beta_H1", "beta_H2",
    "rho_L", "beta_L1", "beta_L2",
];

/// Parameters reported by the pairs bootstrap.
pub const THETA_PARAMETERS: [&str; 2] = ["coef", "theta"];

/// One Rademacher sign.
pub fn rademacher<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    if rng.random::<bool>() {
        1.0
    } else {
        -1.0
    }
}

/// Level at which perturbation signs are shared.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DrawScheme {
    /// One pair of signs per plant, kept across its years.
    #[default]
    PerPlant,
    PerObservation,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Perturbation {
    #[default]
    Rademacher,
    /// Every sign is +1; replications reproduce the point estimates.
    Identity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapOptions {
    pub reps: usize,
    pub seed: u64,
    pub scheme: DrawScheme,
    pub perturbation: Perturbation,
    pub step1: Step1Options,
    pub step2: Step2Options,
    /// Extra random starts for each replication's first step; the point
    /// estimate is always the first start.
    pub starts: usize,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        Self {
            reps: 100,
            seed: 1,
            scheme: DrawScheme::PerPlant,
            perturbation: Perturbation::Rademacher,
            step1: Step1Options::default(),
            step2: Step2Options::default(),
            starts: 0,
        }
    }
}

/// Point estimates the bootstrap perturbs around.
#[derive(Clone, Copy, Debug)]
pub struct ProductionFit<'a> {
    pub step1: &'a Step1Output,
    pub step2: &'a Step2Output,
    pub smoother: &'a SmootherOutput,
}

/// One replication: a value per reported parameter (`None` when not
/// computed) and whether it counts toward the summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub index: usize,
    pub values: Vec<Option<f64>>,
    pub effective: Vec<bool>,
    /// First step re-run with some exponents held fixed.
    pub fallback: bool,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub name: String,
    pub mean: f64,
    pub median: f64,
    pub sd: f64,
    pub max: f64,
    pub min: f64,
    pub effective: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapReport {
    pub parameters: Vec<String>,
    pub requested: usize,
    pub summary: Vec<ParameterSummary>,
    pub replications: Vec<Replication>,
}

impl BootstrapReport {
    /// Summarizes replications over their effective values only.
    pub fn new(parameters: &[&str], requested: usize, replications: Vec<Replication>) -> Self {
        let summary = parameters
            .iter()
            .enumerate()
            .map(|(k, name)| {
                let v: Vec<f64> = replications
                    .iter()
                    .filter(|r| r.effective[k])
                    .filter_map(|r| r.values[k])
                    .collect();
                ParameterSummary {
                    name: name.to_string(),
                    mean: stats::mean(&v),
                    median: stats::median(&v),
                    sd: stats::sd(&v),
                    max: v.iter().copied().fold(f64::NAN, f64::max),
                    min: v.iter().copied().fold(f64::NAN, f64::min),
                    effective: v.len(),
                }
            })
            .collect();
        Self { parameters: parameters.iter().map(|s| s.to_string()).collect(), requested, summary, replications }
    }

    pub fn get(&self, name: &str) -> Option<&ParameterSummary> {
        self.summary.iter().find(|s| s.name == name)
    }

    /// Replication table as CSV: index, fallback flag, error, then value and
    /// effective flag per parameter.
    pub fn write_replications<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["replication".to_string(), "fallback".into(), "error".into()];
        for p in &self.parameters {
            header.push(p.clone());
            header.push(format!("{p}_effective"));
        }
        out.write_record(&header)?;
        for r in &self.replications {
            let mut row = vec![r.index.to_string(), r.fallback.to_string(), r.error.clone().unwrap_or_default()];
            for (v, e) in r.values.iter().zip(&r.effective) {
                row.push(v.map(|x| format!("{x:.10}")).unwrap_or_default());
                row.push(e.to_string());
            }
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Summary table as CSV with one row per parameter.
    pub fn write_summary<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["parameter", "mean", "median", "sd", "max", "min", "effective_replications"])?;
        for s in &self.summary {
            out.write_record([
                s.name.clone(),
                format!("{:.6}", s.mean),
                format!("{:.6}", s.median),
                format!("{:.6}", s.sd),
                format!("{:.6}", s.max),
                format!("{:.6}", s.min),
                s.effective.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

fn signs(rng: &mut ChaCha8Rng, panel: &Panel, opts: &BootstrapOptions) -> (Vec<f64>, Vec<f64>) {
    let n = panel.len();
    if opts.perturbation == Perturbation::Identity {
        return (vec![1.0; n], vec![1.0; n]);
    }
    match opts.scheme {
        DrawScheme::PerObservation => (0..n).map(|_| (rademacher(rng), rademacher(rng))).unzip(),
        DrawScheme::PerPlant => {
            let per_plant: Vec<(f64, f64)> =
                panel.plants().iter().map(|_| (rademacher(rng), rademacher(rng))).collect();
            (0..n).map(|i| per_plant[panel.plant_index(i)]).unzip()
        }
    }
}

/// Perturbed panel and the labor-augmenting productivity it was built from.
pub fn perturbed_panel(
    panel: &Panel,
    means: &GeometricMeans,
    fit: &ProductionFit<'_>,
    r1: &[f64],
    r2: &[f64],
) -> Result<(Panel, Vec<f64>)> {
    let s1 = fit.step1;
    let s2 = fit.step2;
    let obs = panel.obs();
    let outer = s1.exponents.outer;
    let slope = 1.0 - 1.0 / outer;
    let l2m = means.labor_to_materials();
    let mut omega = vec![0.0; panel.len()];
    let mut out = Vec::with_capacity(panel.len());
    for (i, o) in obs.iter().enumerate() {
        omega[i] = match (panel.lag(i), s1.innovations[i]) {
            (Some(j), Some(xi)) => {
                let iota = s1.year_effects.get(&o.year).copied().unwrap_or(0.0);
                iota + s1.persistence * omega[j] + s1.regulation * o.regulation + s1.imports * o.importer_lag + xi * r1[i]
            }
            _ => s1.omega_labor[i],
        };
        // Labor-augmenting productivity is affine in log materials with slope
        // (1 − 1/σ^O), all else fixed.
        let logs = LogInputs::of(o, means)?;
        let log_m = logs.materials + (omega[i] - s1.omega_labor[i]) / slope;
        let log_q = log_f_from_logs(logs.capital, log_m, s2.log_labor[i], omega[i], s2.tau, outer, l2m)
            + fit.smoother.omega_neutral[i]
            + fit.smoother.measurement[i] * r2[i];
        let mut p = o.clone();
        p.materials = means.materials * log_m.exp();
        p.output = means.output * log_q.exp();
        if !(p.materials.is_finite() && p.materials > 0.0 && p.output.is_finite() && p.output > 0.0) {
            return Err(Error::Estimation(format!("perturbed inputs of {} in {} are not finite", o.plant_id, o.year)));
        }
        out.push(p);
    }
    let perturbed = panel.with_values(out)?;
    let workers = worker_shares_from_means(means)?;
    for (i, o) in perturbed.obs().iter().enumerate() {
        let implied = omega_l_characterization(o, &s1.exponents, &workers, means)?;
        if (implied - omega[i]).abs() > CHARACTERIZATION_TOL * omega[i].abs().max(1.0) {
            return Err(Error::Estimation(format!(
                "perturbed panel breaks the first-order ratio for {} in {}",
                o.plant_id, o.year
            )));
        }
    }
    Ok((perturbed, omega))
}

/// Midpoints of the free exponents' bounds: the weight reference used by a
/// fresh first-step run.
fn default_reference(opts: &Step1Options) -> Vec<f64> {
    (0..3).filter(|&k| opts.fixed[k].is_none()).map(|k| 0.5 * (opts.bounds[k].0 + opts.bounds[k].1)).collect()
}

fn warm_step1(opts: &Step1Options, start: &[f64; 3], starts: usize) -> Step1Options {
    let mut o = opts.clone();
    if o.gmm.reference.is_none() {
        o.gmm.reference = Some(default_reference(&o));
    }
    o.gmm.optim.initial = Some((0..3).filter(|&k| o.fixed[k].is_none()).map(|k| start[k]).collect());
    o.gmm.optim.starts = starts;
    o
}

fn replicate(
    panel: &Panel,
    means: &GeometricMeans,
    fit: &ProductionFit<'_>,
    opts: &BootstrapOptions,
    index: usize,
) -> Replication {
    let n = WILD_PARAMETERS.len();
    let mut rep = Replication { index, values: vec![None; n], effective: vec![false; n], fallback: false, error: None };
    let mut rng = substream(opts.seed, STREAM_WILD, index as u64);
    let (r1, r2) = signs(&mut rng, panel, opts);
    if let Err(e) = run_replication(panel, means, fit, opts, &r1, &r2, &mut rep) {
        rep.error = Some(e.to_string());
    }
    rep
}

fn run_replication(
    panel: &Panel,
    means: &GeometricMeans,
    fit: &ProductionFit<'_>,
    opts: &BootstrapOptions,
    r1: &[f64],
    r2: &[f64],
    rep: &mut Replication,
) -> Result<()> {
    let (perturbed, _) = perturbed_panel(panel, means, fit, r1, r2)?;
    let point = fit.step1.exponents.as_array();
    let mut s1 = step1_estimate(&perturbed, means, &warm_step1(&opts.step1, &point, opts.starts))?;
    let outer_interior = !s1.at_bound[0];
    if outer_interior && (s1.at_bound[1] || s1.at_bound[2]) {
        let est = s1.exponents.as_array();
        let mut fixed = opts.step1.fixed;
        fixed[0] = Some(est[0]);
        for k in 1..3 {
            if !s1.at_bound[k] {
                fixed[k] = Some(est[k]);
            }
        }
        let mut o = opts.step1.clone();
        o.fixed = fixed;
        o.gmm.reference = None;
        s1 = step1_estimate(&perturbed, means, &warm_step1(&o, &point, opts.starts))?;
        rep.fallback = true;
    }
    let exps = s1.exponents.as_array();
    let sigma_ok = [outer_interior, !s1.at_bound[1], !s1.at_bound[2]];
    rep.values[0] = Some(exps[2]);
    rep.values[1] = Some(exps[1]);
    rep.values[2] = Some(exps[0]);
    rep.effective[0] = sigma_ok[2];
    rep.effective[1] = sigma_ok[1];
    rep.effective[2] = sigma_ok[0];
    rep.values[11] = Some(s1.persistence);
    rep.values[12] = Some(s1.regulation);
    rep.values[13] = Some(s1.imports);
    for k in 11..14 {
        rep.effective[k] = true;
    }

    let mut o2 = opts.step2.clone();
    o2.gmm.optim.initial = Some(vec![fit.step2.tau]);
    let s2 = step2_estimate(&perturbed, &s1, means, &o2)?;
    let (ak, am, al) = s2.outer_shares;
    for (k, v) in [(3, ak), (4, al), (5, am), (6, s2.tau), (8, s2.persistence), (9, s2.regulation), (10, s2.imports)] {
        rep.values[k] = Some(v);
        rep.effective[k] = !s2.at_bound;
    }

    let spec =
        StateSpaceSpec::from_panel(&perturbed, &s2.composite, s2.persistence, s2.regulation, s2.imports, &s2.year_effects)?;
    let sh = estimate_sigma_h(&spec)?;
    rep.values[7] = Some(sh.sigma);
    rep.effective[7] = !s2.at_bound;
    Ok(())
}

/// Wild bootstrap of the production parameters. Failed replications are
/// kept in the table as ineffective.
pub fn wild_bootstrap(
    panel: &Panel,
    means: &GeometricMeans,
    fit: &ProductionFit<'_>,
    opts: &BootstrapOptions,
) -> Result<BootstrapReport> {
    let n = panel.len();
    if fit.step1.omega_labor.len() != n
        || fit.step1.innovations.len() != n
        || fit.step2.log_labor.len() != n
        || fit.smoother.omega_neutral.len() != n
        || fit.smoother.measurement.len() != n
    {
        return Err(Error::Config("fitted series do not match the panel".into()));
    }
    let replications: Vec<Replication> =
        (0..opts.reps).into_par_iter().map(|b| replicate(panel, means, fit, opts, b)).collect();
    Ok(BootstrapReport::new(&WILD_PARAMETERS, opts.reps, replications))
}

/// Inputs of the conduct regression, aligned with the panel.
#[derive(Clone, Copy, Debug)]
pub struct ConductData<'a> {
    pub panel: &'a Panel,
    pub records: &'a [MarketPowerRecord],
    pub inputs: &'a [Option<ConductInputs>],
    pub means: &'a GeometricMeans,
}

fn theta_replication(data: &ConductData<'_>, opts: &ThetaOptions, seed: u64, index: usize) -> Replication {
    let n = THETA_PARAMETERS.len();
    let mut rep = Replication { index, values: vec![None; n], effective: vec![false; n], fallback: false, error: None };
    let mut rng = substream(seed, STREAM_PAIRS, index as u64);
    let plants = data.panel.plants().len();
    let draws: Vec<usize> = (0..plants).map(|_| rng.random_range(0..plants)).collect();
    let mut distinct = draws.clone();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        rep.error = Some("resample contains a single plant".into());
        return rep;
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); plants];
    for i in 0..data.panel.len() {
        members[data.panel.plant_index(i)].push(i);
    }
    let mut obs = Vec::new();
    let mut origin: HashMap<(String, i32), usize> = HashMap::new();
    for (k, &p) in draws.iter().enumerate() {
        for &i in &members[p] {
            let mut o = data.panel.obs()[i].clone();
            o.plant_id = format!("{}#{k}", o.plant_id);
            origin.insert((o.plant_id.clone(), o.year), i);
            obs.push(o);
        }
    }
    let result = Panel::new(obs).and_then(|resampled| {
        let idx: Vec<usize> =
            resampled.obs().iter().map(|o| origin[&(o.plant_id.clone(), o.year)]).collect();
        let records: Vec<MarketPowerRecord> = idx.iter().map(|&i| data.records[i].clone()).collect();
        let inputs: Vec<Option<ConductInputs>> = idx.iter().map(|&i| data.inputs[i]).collect();
        estimate_theta(&resampled, &records, &inputs, data.means, opts)
    });
    match result {
        Ok(est) => {
            let ok = est.coef < 0.0;
            rep.values = vec![Some(est.coef), Some(est.theta)];
            rep.effective = vec![ok, ok];
        }
        Err(e) => rep.error = Some(e.to_string()),
    }
    rep
}

/// Plant-level pairs bootstrap of the conduct regression; replications with
/// a non-negative surplus coefficient are kept but not summarized.
pub fn pairs_bootstrap_theta(data: &ConductData<'_>, opts: &ThetaOptions, reps: usize, seed: u64) -> BootstrapReport {
    let replications: Vec<Replication> =
        (0..reps).into_par_iter().map(|b| theta_replication(data, opts, seed, b)).collect();
    BootstrapReport::new(&THETA_PARAMETERS, reps, replications)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn rademacher_is_balanced() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let draws: Vec<f64> = (0..100_000).map(|_| rademacher(&mut rng)).collect();
        assert!(draws.iter().all(|&d| d == 1.0 || d == -1.0));
        assert!(stats::mean(&draws).abs() < 0.01);
    }

    #[test]
    fn summary_uses_effective_replications_only() {
        let reps = vec![
            Replication { index: 0, values: vec![Some(1.0)], effective: vec![true], fallback: false, error: None },
            Replication { index: 1, values: vec![Some(3.0)], effective: vec![true], fallback: false, error: None },
            Replication { index: 2, values: vec![Some(100.0)], effective: vec![false], fallback: false, error: None },
            Replication { index: 3, values: vec![None], effective: vec![false], fallback: false, error: Some("x".into()) },
        ];
        let report = BootstrapReport::new(&["a"], 4, reps);
        let s = &report.summary[0];
        assert_eq!(s.effective, 2);
        assert_eq!(s.mean, 2.0);
        assert_eq!(s.max, 3.0);
        assert_eq!(s.min, 1.0);
        assert!((s.sd - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn empty_report() {
        let report = BootstrapReport::new(&THETA_PARAMETERS, 0, Vec::new());
        assert!(report.replications.is_empty());
        assert!(report.summary.iter().all(|s| s.effective == 0 && s.mean.is_nan()));
    }
}
