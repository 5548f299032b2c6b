//! Separation of Hicks-neutral productivity from measurement error.
//!
//! Within a run of consecutive years of one plant, the quasi-differenced
//! composite `y_t = ω̃_t − ι_t − ρ ω̃_{t−1} − β·x_t` equals
//! `ξ_t + ε_t − ρ ε_{t−1}`. The state `π_t = (ξ_t, ε_t, ε_{t−1})` evolves by
//! a shift, so a three-state Kalman filter yields the likelihood of the
//! innovation variance and a fixed-interval smoother recovers `ξ` and `ε`.
//! A gap in a plant's years starts a new run with a fresh prior.

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estim::optimize::brent_minimize;
use crate::panel::Panel;
use crate::stats::compensated_sum;

/// Consecutive-year run of one plant.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    /// Panel indices in year order.
    pub indices: Vec<usize>,
    /// Quasi-differenced composite for positions `1..len`.
    pub detrended: Vec<f64>,
}

/// Measurement and transition of the composite decomposition.
#[derive(Clone, Debug, PartialEq)]
pub struct StateSpaceSpec {
    pub persistence: f64,
    pub regulation: f64,
    pub imports: f64,
    pub year_effects: BTreeMap<i32, f64>,
    pub segments: Vec<Segment>,
    /// Measurement-error variance; fixed at one by the model.
    pub measurement_var: f64,
}

impl StateSpaceSpec {
    /// Builds runs from the panel's lag links and detrends the composite.
    pub fn from_panel(
        panel: &Panel,
        composite: &[f64],
        persistence: f64,
        regulation: f64,
        imports: f64,
        year_effects: &BTreeMap<i32, f64>,
    ) -> Result<Self> {
        if composite.len() != panel.len() {
            return Err(Error::Config("composite series length differs from the panel".into()));
        }
        let obs = panel.obs();
        let mut segments: Vec<Segment> = Vec::new();
        for i in 0..panel.len() {
            match panel.lag(i) {
                None => segments.push(Segment { indices: vec![i], detrended: Vec::new() }),
                Some(j) => {
                    let iota = *year_effects
                        .get(&obs[i].year)
                        .ok_or_else(|| Error::Config(format!("no year effect for {}", obs[i].year)))?;
                    let y = composite[i] - iota - persistence * composite[j] - regulation * obs[i].regulation - imports * obs[i].importer_lag;
                    let seg = segments.last_mut().expect("lagged observation follows its predecessor");
                    seg.indices.push(i);
                    seg.detrended.push(y);
                }
            }
        }
        Ok(Self { persistence, regulation, imports, year_effects: year_effects.clone(), segments, measurement_var: 1.0 })
    }

    fn measurement_row(&self) -> Vector3<f64> {
        Vector3::new(1.0, 1.0, -self.persistence)
    }

    fn shock_cov(&self, sigma2: f64) -> Matrix3<f64> {
        Matrix3::from_diagonal(&Vector3::new(sigma2, self.measurement_var, 0.0))
    }
}

fn shift() -> Matrix3<f64> {
    let mut f = Matrix3::zeros();
    f[(2, 1)] = 1.0;
    f
}

struct FilterPass {
    loglik: f64,
    predicted: Vec<(Vector3<f64>, Matrix3<f64>)>,
    filtered: Vec<(Vector3<f64>, Matrix3<f64>)>,
}

fn filter_segment(spec: &StateSpaceSpec, seg: &Segment, sigma2: f64, keep: bool) -> FilterPass {
    let h = spec.measurement_row();
    let f = shift();
    let q = spec.shock_cov(sigma2);
    let mut state = Vector3::zeros();
    let mut cov = q;
    let mut terms = Vec::with_capacity(seg.detrended.len());
    let mut predicted = Vec::new();
    let mut filtered = Vec::new();
    for &y in &seg.detrended {
        let s_pred = f * state;
        let p_pred = f * cov * f.transpose() + q;
        let innov = y - h.dot(&s_pred);
        let n = h.dot(&(p_pred * h));
        if !(n > 0.0 && n.is_finite()) {
            return FilterPass { loglik: f64::NEG_INFINITY, predicted, filtered };
        }
        let gain = p_pred * h / n;
        state = s_pred + gain * innov;
        cov = (Matrix3::identity() - gain * h.transpose()) * p_pred;
        terms.push(-n.ln() - innov * innov / n);
        if keep {
            predicted.push((s_pred, p_pred));
            filtered.push((state, cov));
        }
    }
    FilterPass { loglik: compensated_sum(terms), predicted, filtered }
}

/// Likelihood as `Σ [−ln N − ν²/N]` over all measured positions, with the
/// Gaussian constant and the one-half factor omitted.
pub fn kalman_loglik(spec: &StateSpaceSpec, sigma2: f64) -> f64 {
    if !(sigma2 >= 0.0) {
        return f64::NEG_INFINITY;
    }
    let parts: Vec<f64> = spec.segments.par_iter().map(|s| filter_segment(spec, s, sigma2, false).loglik).collect();
    if parts.iter().any(|v| *v == f64::NEG_INFINITY) {
        return f64::NEG_INFINITY;
    }
    compensated_sum(parts)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmaEstimate {
    pub sigma: f64,
    pub std_error: f64,
    pub loglik: f64,
    /// Estimate sits on the zero-variance boundary.
    pub at_boundary: bool,
}

/// Maximizes the likelihood over the innovation variance by a coarse scan
/// followed by Brent refinement in the best bracket.
pub fn estimate_sigma_h(spec: &StateSpaceSpec) -> Result<SigmaEstimate> {
    let all: Vec<f64> = spec.segments.iter().flat_map(|s| s.detrended.iter().copied()).collect();
    if all.is_empty() {
        return Err(Error::Estimation("no consecutive-year observations for the decomposition".into()));
    }
    let var = compensated_sum(all.iter().map(|v| v * v)) / all.len() as f64;
    let upper = (4.0 * var).max(10.0);
    let grid: Vec<f64> = (0..=60).map(|k| upper * (k as f64 / 60.0).powi(2)).collect();
    let values: Vec<f64> = grid.iter().map(|&s| kalman_loglik(spec, s)).collect();
    let best = (0..grid.len()).max_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap_or(0);
    let lo = grid[best.saturating_sub(1)];
    let hi = grid[(best + 1).min(grid.len() - 1)];
    let (s, neg) = brent_minimize(&|s| -kalman_loglik(spec, s), lo, hi, 1e-12, 200);
    let (s, loglik) = if -neg >= values[best] { (s, -neg) } else { (grid[best], values[best]) };
    let at_boundary = s < 1e-8;
    let std_error = if at_boundary {
        f64::NAN
    } else {
        let h = 1e-4 * s.max(1e-2);
        let h = h.min(0.5 * s);
        let d2 = (kalman_loglik(spec, s + h) - 2.0 * loglik + kalman_loglik(spec, s - h)) / (h * h);
        // The printed likelihood is twice the Gaussian log density.
        if d2 < 0.0 {
            (2.0 / -d2).sqrt() / (2.0 * s.sqrt())
        } else {
            f64::NAN
        }
    };
    Ok(SigmaEstimate { sigma: s.sqrt(), std_error, loglik, at_boundary })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmootherOutput {
    /// Smoothed innovation per observation; `None` for the first year of a run.
    pub innovation: Vec<Option<f64>>,
    /// Smoothed measurement error per observation.
    pub measurement: Vec<f64>,
    /// Composite minus smoothed measurement error.
    pub omega_neutral: Vec<f64>,
    pub sigma: f64,
    pub loglik: f64,
    /// A predicted covariance was singular and a pseudo-inverse was used.
    pub pseudo_inverse_used: bool,
}

struct SegmentSmooth {
    states: Vec<Vector3<f64>>,
    pseudo: bool,
}

fn smooth_segment(spec: &StateSpaceSpec, seg: &Segment, sigma2: f64) -> SegmentSmooth {
    let pass = filter_segment(spec, seg, sigma2, true);
    let m = pass.filtered.len();
    if m == 0 || pass.loglik == f64::NEG_INFINITY {
        return SegmentSmooth { states: vec![Vector3::zeros(); seg.detrended.len()], pseudo: false };
    }
    let f = shift();
    let mut pseudo = false;
    let mut states = vec![Vector3::zeros(); m];
    let mut covs = vec![Matrix3::zeros(); m];
    states[m - 1] = pass.filtered[m - 1].0;
    covs[m - 1] = pass.filtered[m - 1].1;
    for t in (0..m - 1).rev() {
        let (s_f, p_f) = pass.filtered[t];
        let (s_p, p_p) = pass.predicted[t + 1];
        let inv = match p_p.try_inverse() {
            Some(inv) if inv.iter().all(|v| v.is_finite()) => inv,
            _ => {
                pseudo = true;
                p_p.pseudo_inverse(1e-12).unwrap_or_else(|_| Matrix3::zeros())
            }
        };
        let c = p_f * f.transpose() * inv;
        states[t] = s_f + c * (states[t + 1] - s_p);
        covs[t] = p_f + c * (covs[t + 1] - p_p) * c.transpose();
    }
    SegmentSmooth { states, pseudo }
}

/// Smoothed decomposition at a given innovation variance.
pub fn kalman_smooth(spec: &StateSpaceSpec, sigma2: f64, composite: &[f64]) -> SmootherOutput {
    let n = composite.len();
    let mut innovation = vec![None; n];
    let mut measurement = vec![0.0; n];
    let results: Vec<SegmentSmooth> = spec.segments.par_iter().map(|s| smooth_segment(spec, s, sigma2)).collect();
    let mut pseudo = false;
    for (seg, res) in spec.segments.iter().zip(&results) {
        pseudo |= res.pseudo;
        if res.states.is_empty() {
            continue;
        }
        measurement[seg.indices[0]] = res.states[0][2];
        for (k, st) in res.states.iter().enumerate() {
            let i = seg.indices[k + 1];
            innovation[i] = Some(st[0]);
            measurement[i] = st[1];
        }
    }
    let omega_neutral = composite.iter().zip(&measurement).map(|(w, e)| w - e).collect();
    SmootherOutput {
        innovation,
        measurement,
        omega_neutral,
        sigma: sigma2.max(0.0).sqrt(),
        loglik: kalman_loglik(spec, sigma2),
        pseudo_inverse_used: pseudo,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    fn spec_of(rho: f64, runs: Vec<Vec<f64>>) -> StateSpaceSpec {
        let mut next = 0;
        let segments = runs
            .into_iter()
            .map(|d| {
                let indices = (next..next + d.len() + 1).collect();
                next += d.len() + 1;
                Segment { indices, detrended: d }
            })
            .collect();
        StateSpaceSpec {
            persistence: rho,
            regulation: 0.0,
            imports: 0.0,
            year_effects: BTreeMap::new(),
            segments,
            measurement_var: 1.0,
        }
    }

    /// Joint-Gaussian oracle over (ξ_1..ξ_m, ε_0..ε_m).
    fn dense(y: &[f64], rho: f64, s2: f64) -> (f64, Vec<f64>, Vec<f64>) {
        let m = y.len();
        let dim = 2 * m + 1;
        let mut load = DMatrix::zeros(m, dim);
        for k in 0..m {
            load[(k, k)] = 1.0;
            load[(k, m + k + 1)] = 1.0;
            load[(k, m + k)] = -rho;
        }
        let mut prior = DMatrix::zeros(dim, dim);
        for k in 0..m {
            prior[(k, k)] = s2;
        }
        for k in 0..=m {
            prior[(m + k, m + k)] = 1.0;
        }
        let cov = &load * &prior * load.transpose();
        let inv = cov.clone().try_inverse().unwrap();
        let yv = DVector::from_column_slice(y);
        let ll = -cov.determinant().ln() - yv.dot(&(&inv * &yv));
        let mean = &prior * load.transpose() * &inv * &yv;
        (ll, mean.rows(0, m).iter().copied().collect(), mean.rows(m, m + 1).iter().copied().collect())
    }

    #[test]
    fn matches_dense_oracle() {
        let ys = [vec![0.4], vec![0.3, -1.2], vec![1.1, -0.5, 0.2], vec![-0.7, 0.9, 0.05, 1.4]];
        for y in ys {
            for (rho, s2) in [(0.88, 0.526), (0.3, 2.0), (0.0, 0.1)] {
                let spec = spec_of(rho, vec![y.clone()]);
                let composite = vec![0.0; y.len() + 1];
                let (ll, xi, eps) = dense(&y, rho, s2);
                assert!((kalman_loglik(&spec, s2) - ll).abs() < 1e-10);
                let out = kalman_smooth(&spec, s2, &composite);
                for k in 0..y.len() {
                    assert!((out.innovation[k + 1].unwrap() - xi[k]).abs() < 1e-10);
                }
                for k in 0..=y.len() {
                    assert!((out.measurement[k] - eps[k]).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn zero_variance_matches_moving_average_density() {
        let y = vec![0.5, -0.2, 0.3];
        let spec = spec_of(0.5, vec![y.clone()]);
        let (ll, _, _) = dense(&y, 0.5, 0.0);
        assert!((kalman_loglik(&spec, 0.0) - ll).abs() < 1e-10);
    }

    #[test]
    fn large_variance_attributes_to_innovation() {
        let y = vec![0.5, -0.2, 0.3];
        let spec = spec_of(0.5, vec![y.clone()]);
        let out = kalman_smooth(&spec, 1e6, &[0.0; 4]);
        for e in &out.measurement {
            assert!(e.abs() < 1e-3);
        }
        for k in 0..3 {
            assert!((out.innovation[k + 1].unwrap() - y[k]).abs() < 1e-3);
        }
    }
}
