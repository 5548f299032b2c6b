//! Generic GMM engine.
//!
//! Systems expose residuals and instruments at a parameter vector. Systems
//! whose residual is linear in a subset of parameters can instead expose a
//! [`LinearDesign`]; those coefficients (year effects included) are then
//! concentrated out in closed form at every trial value of the nonlinear ones.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::optimize::{minimize, OptimOptions};
use crate::error::{Error, Result};
use crate::stats::correlation;

/// Residuals and instruments for every observation at one parameter value.
#[derive(Clone, Debug)]
pub struct MomentData {
    pub residuals: DVector<f64>,
    /// n × L.
    pub instruments: DMatrix<f64>,
    /// Cluster index per observation for the moment covariance.
    pub clusters: Option<Vec<usize>>,
}

pub trait MomentSystem: Sync {
    fn param_names(&self) -> Vec<String>;
    fn bounds(&self) -> Vec<(f64, f64)>;
    fn evaluate(&self, params: &[f64]) -> Result<MomentData>;
}

/// Residual `y − [G | X] b` with instruments `[G | Z]`, where `G` holds
/// group (year) dummies and `X`, `Z`, `y` may depend on nonlinear parameters.
#[derive(Clone, Debug)]
pub struct LinearDesign {
    pub y: DVector<f64>,
    pub x: DMatrix<f64>,
    pub z: DMatrix<f64>,
    pub groups: Vec<usize>,
    pub n_groups: usize,
    pub clusters: Vec<usize>,
}

pub trait ProfiledSystem: Sync {
    fn nonlinear_names(&self) -> Vec<String>;
    /// Group-dummy names first, then dense regressors.
    fn linear_names(&self) -> Vec<String>;
    fn nonlinear_bounds(&self) -> Vec<(f64, f64)>;
    fn design(&self, nonlinear: &[f64]) -> Result<LinearDesign>;
    /// Names of the dense instrument columns.
    fn instrument_names(&self) -> Vec<String>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    Identity,
    /// `(Z'Z/n)⁻¹`, the two-stage least squares weight.
    InstrumentCrossProduct,
    /// Second step weighted by the inverse cluster-robust moment covariance,
    /// first step by `(Z'Z/n)⁻¹`.
    TwoStepOptimal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GmmOptions {
    pub weighting: Weighting,
    pub optim: OptimOptions,
    /// Parameter value at which a parameter-dependent `Z'Z` weight is formed.
    pub reference: Option<Vec<f64>>,
}

impl Default for GmmOptions {
    fn default() -> Self {
        Self { weighting: Weighting::TwoStepOptimal, optim: OptimOptions::default(), reference: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmmResult {
    pub names: Vec<String>,
    pub estimates: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// `ḡ'Wḡ` at the estimate.
    pub objective: f64,
    pub j_stat: f64,
    pub j_df: usize,
    pub j_pvalue: Option<f64>,
    /// Correlation of each non-dummy instrument with the residual.
    pub instrument_residual_corr: Vec<f64>,
    pub mean_abs_corr: f64,
    pub converged: bool,
    pub jacobian_rank: usize,
    pub jacobian_condition: f64,
    pub weighting: Weighting,
    pub n_obs: usize,
    pub n_moments: usize,
    pub warnings: Vec<String>,
}

impl GmmResult {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.estimates[i])
    }
}

/// Rank and conditioning of a moment Jacobian.
#[derive(Clone, Debug, PartialEq)]
pub struct RankReport {
    pub rank: usize,
    pub condition: f64,
    pub singular_values: Vec<f64>,
    pub n_params: usize,
}

fn moment_mean(data: &MomentData) -> DVector<f64> {
    let n = data.residuals.len() as f64;
    data.instruments.tr_mul(&data.residuals) / n
}

/// Cluster-robust (uncentered) moment covariance from per-observation
/// contributions supplied as (cluster, contribution) pairs.
fn cluster_covariance(contrib: &DMatrix<f64>, clusters: Option<&[usize]>) -> DMatrix<f64> {
    let (n, l) = contrib.shape();
    match clusters {
        None => contrib.tr_mul(contrib) / n as f64,
        Some(c) => {
            let n_c = c.iter().copied().max().map_or(0, |m| m + 1);
            let mut sums = DMatrix::zeros(n_c, l);
            for i in 0..n {
                for j in 0..l {
                    sums[(c[i], j)] += contrib[(i, j)];
                }
            }
            sums.tr_mul(&sums) / n as f64
        }
    }
}

/// Inverts a symmetric positive semi-definite matrix, adding a ridge when it
/// is singular or badly conditioned.
pub fn regularized_inverse(m: &DMatrix<f64>, warnings: &mut Vec<String>, what: &str) -> DMatrix<f64> {
    let l = m.nrows();
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let min = eig.eigenvalues.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    if max > 0.0 && min > 1e-12 * max {
        if let Some(c) = sym.clone().cholesky() {
            return c.inverse();
        }
    }
    let ridge = 1e-10 * max.max(1e-300) + if min < 0.0 { -min } else { 0.0 };
    warnings.push(format!("{what} singular or ill-conditioned; ridge {ridge:.3e} added"));
    let reg = sym + DMatrix::identity(l, l) * ridge.max(1e-300);
    match reg.clone().cholesky() {
        Some(c) => c.inverse(),
        None => reg.pseudo_inverse(1e-300).unwrap_or_else(|_| DMatrix::identity(l, l)),
    }
}

fn finite_bounds(bounds: &[(f64, f64)]) -> (Vec<f64>, Vec<f64>) {
    (bounds.iter().map(|b| b.0).collect(), bounds.iter().map(|b| b.1).collect())
}

fn reference_point(bounds: &[(f64, f64)], opts: &GmmOptions) -> Vec<f64> {
    if let Some(r) = &opts.reference {
        return r.clone();
    }
    if let Some(r) = &opts.optim.initial {
        return r.clone();
    }
    bounds
        .iter()
        .map(|&(a, b)| match (a.is_finite(), b.is_finite()) {
            (true, true) => 0.5 * (a + b),
            (true, false) => a + 1.0,
            (false, true) => b - 1.0,
            (false, false) => 0.0,
        })
        .collect()
}

/// Central-difference Jacobian of a vector function; step `1e-5·max(1,|θ|)`.
pub fn numerical_jacobian(f: &dyn Fn(&[f64]) -> Result<DVector<f64>>, x: &[f64]) -> Result<DMatrix<f64>> {
    let base = f(x)?;
    let mut jac = DMatrix::zeros(base.len(), x.len());
    let mut work = x.to_vec();
    for j in 0..x.len() {
        let h = 1e-5 * x[j].abs().max(1.0);
        work[j] = x[j] + h;
        let up = f(&work)?;
        work[j] = x[j] - h;
        let down = f(&work)?;
        work[j] = x[j];
        for i in 0..base.len() {
            let v = (up[i] - down[i]) / (2.0 * h);
            if !v.is_finite() {
                return Err(Error::Diagnostic(format!("non-finite Jacobian entry for parameter {j}")));
            }
            jac[(i, j)] = v;
        }
    }
    Ok(jac)
}

fn rank_of(jac: &DMatrix<f64>) -> RankReport {
    let svd = jac.clone().svd(false, false);
    let sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    let max = sv.iter().copied().fold(0.0, f64::max);
    let rank = sv.iter().filter(|&&s| s > 1e-7 * max).count();
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    let condition = if jac.ncols() > sv.len() || min <= 0.0 { f64::INFINITY } else { max / min };
    RankReport { rank, condition, singular_values: sv, n_params: jac.ncols() }
}

/// Rank of the stacked-moment Jacobian at `params`, tolerance `1e-7·σ_max`.
pub fn identification_rank_check(system: &dyn MomentSystem, params: &[f64]) -> Result<RankReport> {
    let f = |p: &[f64]| -> Result<DVector<f64>> { Ok(moment_mean(&system.evaluate(p)?)) };
    let jac = numerical_jacobian(&f, params)?;
    Ok(rank_of(&jac))
}

struct Finalized {
    std_errors: Vec<f64>,
    rank: RankReport,
    s: DMatrix<f64>,
}

fn sandwich(
    jac: &DMatrix<f64>,
    w: &DMatrix<f64>,
    s: &DMatrix<f64>,
    n: usize,
    warnings: &mut Vec<String>,
) -> Vec<f64> {
    let gwg = jac.tr_mul(&(w * jac));
    let bread = regularized_inverse(&gwg, warnings, "G'WG");
    let meat = jac.tr_mul(&(w * s * w * jac));
    let v = &bread * meat * &bread / n as f64;
    (0..v.nrows()).map(|i| v[(i, i)].max(0.0).sqrt()).collect()
}

fn j_test(n: usize, g: &DVector<f64>, w: &DMatrix<f64>, df: usize) -> (f64, Option<f64>) {
    let j = n as f64 * g.dot(&(w * g));
    let p = if df > 0 {
        ChiSquared::new(df as f64).ok().map(|d| 1.0 - d.cdf(j.max(0.0)))
    } else {
        None
    };
    (j.max(0.0), p)
}

fn corr_columns(z: &DMatrix<f64>, u: &DVector<f64>, skip_dummies: bool) -> Vec<f64> {
    let uv: Vec<f64> = u.iter().copied().collect();
    let mut out = Vec::new();
    for j in 0..z.ncols() {
        let col: Vec<f64> = z.column(j).iter().copied().collect();
        if skip_dummies && col.iter().all(|&v| v == 0.0 || v == 1.0) {
            continue;
        }
        let c = correlation(&col, &uv);
        if c.is_finite() {
            out.push(c);
        }
    }
    out
}

/// GMM over all parameters of a generic system.
pub fn gmm_estimate(system: &dyn MomentSystem, opts: &GmmOptions) -> Result<GmmResult> {
    let bounds = system.bounds();
    let names = system.param_names();
    if names.len() != bounds.len() {
        return Err(Error::Config("parameter names and bounds differ in length".into()));
    }
    let (lo, hi) = finite_bounds(&bounds);
    let mut warnings = Vec::new();
    let reference = reference_point(&bounds, opts);
    let ref_data = system.evaluate(&reference)?;
    let n = ref_data.residuals.len();
    let l = ref_data.instruments.ncols();
    if l < names.len() {
        return Err(Error::Config(format!("{l} instruments for {} parameters", names.len())));
    }
    let first_w = match opts.weighting {
        Weighting::Identity => DMatrix::identity(l, l),
        _ => regularized_inverse(&(ref_data.instruments.tr_mul(&ref_data.instruments) / n as f64), &mut warnings, "Z'Z"),
    };
    let objective = |w: &DMatrix<f64>, p: &[f64]| -> f64 {
        match system.evaluate(p) {
            Ok(d) => {
                let g = moment_mean(&d);
                g.dot(&(w * &g))
            }
            Err(_) => f64::INFINITY,
        }
    };
    let first = minimize(&|p| objective(&first_w, p), &lo, &hi, &opts.optim);
    let (w, best) = if opts.weighting == Weighting::TwoStepOptimal {
        let d = system.evaluate(&first.x)?;
        let contrib = moment_contributions(&d);
        let s = cluster_covariance(&contrib, d.clusters.as_deref());
        let w2 = regularized_inverse(&s, &mut warnings, "moment covariance");
        let mut o = opts.optim.clone();
        o.initial = Some(first.x.clone());
        o.starts = 0;
        let second = minimize(&|p| objective(&w2, p), &lo, &hi, &o);
        (w2, second)
    } else {
        (first_w, first)
    };
    let d = system.evaluate(&best.x)?;
    let g = moment_mean(&d);
    let fin = finalize_generic(system, &best.x, &w, &d, &mut warnings)?;
    let df = l.saturating_sub(names.len());
    let (j_stat, j_pvalue) = j_test(n, &g, &w, df);
    let corr = corr_columns(&d.instruments, &d.residuals, true);
    let _ = fin.s;
    Ok(GmmResult {
        names,
        estimates: best.x,
        std_errors: fin.std_errors,
        objective: best.value,
        j_stat,
        j_df: df,
        j_pvalue,
        mean_abs_corr: mean_abs(&corr),
        instrument_residual_corr: corr,
        converged: best.converged,
        jacobian_rank: fin.rank.rank,
        jacobian_condition: fin.rank.condition,
        weighting: opts.weighting,
        n_obs: n,
        n_moments: l,
        warnings,
    })
}

fn mean_abs(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().map(|c| c.abs()).sum::<f64>() / v.len() as f64
    }
}

fn moment_contributions(d: &MomentData) -> DMatrix<f64> {
    let mut c = d.instruments.clone();
    for i in 0..c.nrows() {
        let u = d.residuals[i];
        c.row_mut(i).scale_mut(u);
    }
    c
}

fn finalize_generic(
    system: &dyn MomentSystem,
    x: &[f64],
    w: &DMatrix<f64>,
    d: &MomentData,
    warnings: &mut Vec<String>,
) -> Result<Finalized> {
    let f = |p: &[f64]| -> Result<DVector<f64>> { Ok(moment_mean(&system.evaluate(p)?)) };
    let jac = numerical_jacobian(&f, x)?;
    let s = cluster_covariance(&moment_contributions(d), d.clusters.as_deref());
    let std_errors = sandwich(&jac, w, &s, d.residuals.len(), warnings);
    Ok(Finalized { std_errors, rank: rank_of(&jac), s })
}

/// Cross products of a linear design, exploiting the group-dummy block.
#[derive(Clone, Debug)]
pub struct CrossProducts {
    pub ztx: DMatrix<f64>,
    pub zty: DVector<f64>,
    pub n: usize,
}

impl LinearDesign {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn n_moments(&self) -> usize {
        self.n_groups + self.z.ncols()
    }

    pub fn n_coefficients(&self) -> usize {
        self.n_groups + self.x.ncols()
    }

    fn group_sums(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n_groups, m.ncols());
        for j in 0..m.ncols() {
            let col = m.column(j);
            for (i, &g) in self.groups.iter().enumerate() {
                out[(g, j)] += col[i];
            }
        }
        out
    }

    fn group_counts(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.n_groups];
        for &g in &self.groups {
            c[g] += 1.0;
        }
        c
    }

    pub fn cross(&self) -> CrossProducts {
        let g = self.n_groups;
        let (kd, ld) = (self.x.ncols(), self.z.ncols());
        let mut ztx = DMatrix::zeros(g + ld, g + kd);
        for (k, c) in self.group_counts().into_iter().enumerate() {
            ztx[(k, k)] = c;
        }
        let gx = self.group_sums(&self.x);
        let gz = self.group_sums(&self.z);
        ztx.view_mut((0, g), (g, kd)).copy_from(&gx);
        ztx.view_mut((g, 0), (ld, g)).copy_from(&gz.transpose());
        ztx.view_mut((g, g), (ld, kd)).copy_from(&self.z.tr_mul(&self.x));
        let mut zty = DVector::zeros(g + ld);
        for (i, &k) in self.groups.iter().enumerate() {
            zty[k] += self.y[i];
        }
        zty.rows_mut(g, ld).copy_from(&self.z.tr_mul(&self.y));
        CrossProducts { ztx, zty, n: self.n() }
    }

    pub fn ztz(&self) -> DMatrix<f64> {
        let g = self.n_groups;
        let ld = self.z.ncols();
        let mut m = DMatrix::zeros(g + ld, g + ld);
        for (k, c) in self.group_counts().into_iter().enumerate() {
            m[(k, k)] = c;
        }
        let gz = self.group_sums(&self.z);
        m.view_mut((0, g), (g, ld)).copy_from(&gz);
        m.view_mut((g, 0), (ld, g)).copy_from(&gz.transpose());
        m.view_mut((g, g), (ld, ld)).copy_from(&self.z.tr_mul(&self.z));
        m
    }

    pub fn residuals(&self, b: &DVector<f64>) -> DVector<f64> {
        let g = self.n_groups;
        let fitted = &self.x * b.rows(g, self.x.ncols());
        DVector::from_iterator(
            self.n(),
            (0..self.n()).map(|i| self.y[i] - fitted[i] - if g > 0 { b[self.groups[i]] } else { 0.0 }),
        )
    }

    /// Per-observation moment contributions `[G | Z]_i · u_i`.
    pub fn contributions(&self, u: &DVector<f64>) -> DMatrix<f64> {
        let g = self.n_groups;
        let ld = self.z.ncols();
        let mut c = DMatrix::zeros(self.n(), g + ld);
        for i in 0..self.n() {
            if g > 0 {
                c[(i, self.groups[i])] = u[i];
            }
            for j in 0..ld {
                c[(i, g + j)] = self.z[(i, j)] * u[i];
            }
        }
        c
    }

    /// Dense `[G | Z]`.
    pub fn full_instruments(&self) -> DMatrix<f64> {
        let g = self.n_groups;
        let ld = self.z.ncols();
        let mut m = DMatrix::zeros(self.n(), g + ld);
        for i in 0..self.n() {
            if g > 0 {
                m[(i, self.groups[i])] = 1.0;
            }
        }
        m.view_mut((0, g), (self.n(), ld)).copy_from(&self.z);
        m
    }
}

impl CrossProducts {
    /// Linear GMM coefficients for weight `w`, or `None` if unidentified.
    pub fn coefficients(&self, w: &DMatrix<f64>) -> Option<DVector<f64>> {
        let wzx = w * &self.ztx;
        let a = self.ztx.tr_mul(&wzx);
        let rhs = wzx.tr_mul(&self.zty);
        let chol = a.clone().cholesky()?;
        let b = chol.solve(&rhs);
        b.iter().all(|v| v.is_finite()).then_some(b)
    }

    pub fn moments(&self, b: &DVector<f64>) -> DVector<f64> {
        (&self.zty - &self.ztx * b) / self.n as f64
    }

    pub fn objective(&self, w: &DMatrix<f64>) -> (f64, Option<DVector<f64>>) {
        match self.coefficients(w) {
            Some(b) => {
                let g = self.moments(&b);
                (g.dot(&(w * &g)), Some(b))
            }
            None => (f64::INFINITY, None),
        }
    }
}

/// A profiled system viewed as a generic system over all parameters.
pub struct FullSystem<'a>(pub &'a dyn ProfiledSystem);

impl MomentSystem for FullSystem<'_> {
    fn param_names(&self) -> Vec<String> {
        let mut v = self.0.nonlinear_names();
        v.extend(self.0.linear_names());
        v
    }

    fn bounds(&self) -> Vec<(f64, f64)> {
        let mut b = self.0.nonlinear_bounds();
        b.extend(self.0.linear_names().iter().map(|_| (f64::NEG_INFINITY, f64::INFINITY)));
        b
    }

    fn evaluate(&self, params: &[f64]) -> Result<MomentData> {
        let q = self.0.nonlinear_names().len();
        let d = self.0.design(&params[..q])?;
        let b = DVector::from_column_slice(&params[q..]);
        Ok(MomentData { residuals: d.residuals(&b), instruments: d.full_instruments(), clusters: Some(d.clusters.clone()) })
    }
}

/// Fast stacked moments of a profiled system at full parameters.
pub fn profiled_moments(system: &dyn ProfiledSystem, params: &[f64]) -> Result<DVector<f64>> {
    let q = system.nonlinear_names().len();
    let d = system.design(&params[..q])?;
    let b = DVector::from_column_slice(&params[q..]);
    Ok(d.cross().moments(&b))
}

/// Rank check of a profiled system over all parameters.
pub fn profiled_rank_check(system: &dyn ProfiledSystem, params: &[f64]) -> Result<RankReport> {
    let f = |p: &[f64]| profiled_moments(system, p);
    Ok(rank_of(&numerical_jacobian(&f, params)?))
}

/// GMM for a profiled system; only the nonlinear parameters are searched.
pub fn gmm_estimate_profiled(system: &dyn ProfiledSystem, opts: &GmmOptions) -> Result<GmmResult> {
    let nl_bounds = system.nonlinear_bounds();
    let (lo, hi) = finite_bounds(&nl_bounds);
    let mut warnings = Vec::new();
    let reference = reference_point(&nl_bounds, opts);
    let ref_design = system.design(&reference)?;
    let n = ref_design.n();
    let l = ref_design.n_moments();
    let n_params = nl_bounds.len() + ref_design.n_coefficients();
    if l < n_params {
        return Err(Error::Config(format!("{l} instruments for {n_params} parameters")));
    }
    let first_w = match opts.weighting {
        Weighting::Identity => DMatrix::identity(l, l),
        _ => regularized_inverse(&(ref_design.ztz() / n as f64), &mut warnings, "Z'Z"),
    };
    let objective = |w: &DMatrix<f64>, p: &[f64]| -> f64 {
        match system.design(p) {
            Ok(d) => d.cross().objective(w).0,
            Err(_) => f64::INFINITY,
        }
    };
    let first = minimize(&|p| objective(&first_w, p), &lo, &hi, &opts.optim);
    let (w, best) = if opts.weighting == Weighting::TwoStepOptimal {
        let d = system.design(&first.x)?;
        let b = d
            .cross()
            .coefficients(&first_w)
            .ok_or_else(|| Error::Estimation("linear coefficients unidentified at first-step estimate".into()))?;
        let u = d.residuals(&b);
        let s = cluster_covariance(&d.contributions(&u), Some(&d.clusters));
        let w2 = regularized_inverse(&s, &mut warnings, "moment covariance");
        let mut o = opts.optim.clone();
        o.initial = Some(first.x.clone());
        o.starts = 0;
        let second = minimize(&|p| objective(&w2, p), &lo, &hi, &o);
        (w2, second)
    } else {
        (first_w, first)
    };
    let d = system.design(&best.x)?;
    let cross = d.cross();
    let b = cross
        .coefficients(&w)
        .ok_or_else(|| Error::Estimation("linear coefficients unidentified at the estimate".into()))?;
    let mut full = best.x.clone();
    full.extend(b.iter().copied());
    let g = cross.moments(&b);
    let u = d.residuals(&b);
    let s = cluster_covariance(&d.contributions(&u), Some(&d.clusters));
    let f = |p: &[f64]| profiled_moments(system, p);
    let jac = numerical_jacobian(&f, &full)?;
    let std_errors = sandwich(&jac, &w, &s, n, &mut warnings);
    let rank = rank_of(&jac);
    let df = l.saturating_sub(n_params);
    let (j_stat, j_pvalue) = j_test(n, &g, &w, df);
    let corr = corr_columns(&d.z, &u, false);
    let mut names = system.nonlinear_names();
    names.extend(system.linear_names());
    Ok(GmmResult {
        names,
        estimates: full,
        std_errors,
        objective: g.dot(&(&w * &g)),
        j_stat,
        j_df: df,
        j_pvalue,
        mean_abs_corr: mean_abs(&corr),
        instrument_residual_corr: corr,
        converged: best.converged,
        jacobian_rank: rank.rank,
        jacobian_condition: rank.condition,
        weighting: opts.weighting,
        n_obs: n,
        n_moments: l,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    struct LinearIv {
        y: Vec<f64>,
        x: Vec<f64>,
        z: Vec<[f64; 2]>,
    }

    impl MomentSystem for LinearIv {
        fn param_names(&self) -> Vec<String> {
            vec!["a".into(), "b".into()]
        }
        fn bounds(&self) -> Vec<(f64, f64)> {
            vec![(f64::NEG_INFINITY, f64::INFINITY); 2]
        }
        fn evaluate(&self, p: &[f64]) -> Result<MomentData> {
            let n = self.y.len();
            let u = DVector::from_iterator(n, (0..n).map(|i| self.y[i] - p[0] - p[1] * self.x[i]));
            let z = DMatrix::from_fn(n, 3, |i, j| if j == 0 { 1.0 } else { self.z[i][j - 1] });
            Ok(MomentData { residuals: u, instruments: z, clusters: None })
        }
    }

    fn iv_data(seed: u64) -> LinearIv {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 400;
        let mut y = Vec::new();
        let mut x = Vec::new();
        let mut z = Vec::new();
        for _ in 0..n {
            let z1: f64 = StandardNormal.sample(&mut rng);
            let z2: f64 = StandardNormal.sample(&mut rng);
            let e: f64 = StandardNormal.sample(&mut rng);
            let v: f64 = StandardNormal.sample(&mut rng);
            let xi = 1.0 + z1 + 0.5 * z2 + 0.8 * e + v;
            y.push(0.5 + 2.0 * xi + e);
            x.push(xi);
            z.push([z1, z2]);
        }
        LinearIv { y, x, z }
    }

    fn closed_form_2sls(d: &LinearIv) -> DVector<f64> {
        let n = d.y.len();
        let z = DMatrix::from_fn(n, 3, |i, j| if j == 0 { 1.0 } else { d.z[i][j - 1] });
        let x = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { d.x[i] });
        let y = DVector::from_column_slice(&d.y);
        let pz = &z * (z.tr_mul(&z)).try_inverse().unwrap() * z.transpose();
        let xh = &pz * &x;
        (xh.tr_mul(&x)).try_inverse().unwrap() * xh.tr_mul(&y)
    }

    #[test]
    fn linear_iv_matches_closed_form() {
        let d = iv_data(3);
        let opts = GmmOptions { weighting: Weighting::InstrumentCrossProduct, ..Default::default() };
        let r = gmm_estimate(&d, &opts).unwrap();
        let cf = closed_form_2sls(&d);
        for k in 0..2 {
            assert!((r.estimates[k] - cf[k]).abs() < 1e-8 * cf[k].abs().max(1.0), "{} vs {}", r.estimates[k], cf[k]);
        }
    }

    struct Exact {
        c: f64,
    }

    impl MomentSystem for Exact {
        fn param_names(&self) -> Vec<String> {
            vec!["theta".into()]
        }
        fn bounds(&self) -> Vec<(f64, f64)> {
            vec![(-10.0, 10.0)]
        }
        fn evaluate(&self, p: &[f64]) -> Result<MomentData> {
            Ok(MomentData {
                residuals: DVector::from_element(5, p[0] - self.c),
                instruments: DMatrix::from_element(5, 1, 1.0),
                clusters: None,
            })
        }
    }

    #[test]
    fn exactly_identified_constant() {
        let r = gmm_estimate(&Exact { c: 1.75 }, &GmmOptions { weighting: Weighting::Identity, ..Default::default() }).unwrap();
        assert!((r.estimates[0] - 1.75).abs() < 1e-8);
        assert!(r.j_stat < 1e-12);
        assert_eq!(r.j_df, 0);
    }

    struct Duplicated;

    impl MomentSystem for Duplicated {
        fn param_names(&self) -> Vec<String> {
            vec!["a".into(), "b".into()]
        }
        fn bounds(&self) -> Vec<(f64, f64)> {
            vec![(-5.0, 5.0); 2]
        }
        fn evaluate(&self, p: &[f64]) -> Result<MomentData> {
            let x = [1.0, 2.0, 3.0, 4.0, 5.0];
            let y = [2.0, 4.1, 5.9, 8.2, 9.9];
            let u = DVector::from_iterator(5, (0..5).map(|i| y[i] - (p[0] + p[1]) * x[i]));
            let z = DMatrix::from_fn(5, 2, |i, j| if j == 0 { 1.0 } else { x[i] });
            Ok(MomentData { residuals: u, instruments: z, clusters: None })
        }
    }

    #[test]
    fn duplicated_parameter_is_rank_deficient() {
        let r = identification_rank_check(&Duplicated, &[1.0, 1.0]).unwrap();
        assert_eq!(r.rank, 1);
        assert!(r.condition.is_infinite() || r.condition > 1e7);
    }

    struct ScaledIv {
        inner: LinearIv,
        scale: [f64; 3],
    }

    impl MomentSystem for ScaledIv {
        fn param_names(&self) -> Vec<String> {
            self.inner.param_names()
        }
        fn bounds(&self) -> Vec<(f64, f64)> {
            self.inner.bounds()
        }
        fn evaluate(&self, p: &[f64]) -> Result<MomentData> {
            let mut d = self.inner.evaluate(p)?;
            for j in 0..3 {
                d.instruments.column_mut(j).scale_mut(self.scale[j]);
            }
            Ok(d)
        }
    }

    #[test]
    fn two_step_invariant_to_instrument_scale() {
        let base = gmm_estimate(&iv_data(9), &GmmOptions::default()).unwrap();
        let scaled = gmm_estimate(&ScaledIv { inner: iv_data(9), scale: [3.0, 0.01, 250.0] }, &GmmOptions::default()).unwrap();
        for k in 0..2 {
            assert!((base.estimates[k] - scaled.estimates[k]).abs() < 1e-7);
        }
        assert!((base.j_stat - scaled.j_stat).abs() < 1e-6 * (1.0 + base.j_stat));
    }
}
