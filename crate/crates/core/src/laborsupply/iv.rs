//! Two-stage least squares with heteroskedasticity- and cluster-robust
//! covariances, first-stage F statistics and Hansen's J.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

/// A named design block.
#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub names: Vec<String>,
    /// n × k.
    pub data: DMatrix<f64>,
}

impl Block {
    pub fn new(names: Vec<String>, data: DMatrix<f64>) -> Self {
        Self { names, data }
    }

    pub fn empty(n: usize) -> Self {
        Self { names: Vec::new(), data: DMatrix::zeros(n, 0) }
    }

    pub fn from_columns(columns: Vec<(String, Vec<f64>)>) -> Self {
        let n = columns.first().map_or(0, |c| c.1.len());
        let names = columns.iter().map(|c| c.0.clone()).collect();
        let data = DMatrix::from_fn(n, columns.len(), |r, c| columns[c].1[r]);
        Self { names, data }
    }

    pub fn ncols(&self) -> usize {
        self.data.ncols()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IvResult {
    /// Endogenous regressors first, then exogenous.
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    /// Clustered by the supplied ids (plain robust when none are given).
    pub std_errors: Vec<f64>,
    pub robust_std_errors: Vec<f64>,
    /// One per endogenous regressor.
    pub first_stage_f: Vec<f64>,
    pub j_stat: Option<f64>,
    pub j_pvalue: Option<f64>,
    pub n: usize,
}

impl IvResult {
    pub fn coef(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.coefficients[i])
    }

    pub fn se(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.std_errors[i])
    }
}

fn hstack(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    m.columns_mut(0, a.ncols()).copy_from(a);
    m.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    m
}

/// Names of columns that are (numerically) linear combinations of earlier ones.
fn collinear_columns(m: &DMatrix<f64>, names: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    let mut kept: Vec<usize> = Vec::new();
    for j in 0..m.ncols() {
        let mut trial = kept.clone();
        trial.push(j);
        let sub = DMatrix::from_fn(m.nrows(), trial.len(), |r, c| m[(r, trial[c])]);
        let g = sub.tr_mul(&sub);
        let scale = (0..g.nrows()).map(|i| g[(i, i)]).fold(0.0, f64::max).max(1e-300);
        let eig = g.symmetric_eigen();
        let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        if min <= 1e-11 * scale {
            out.push(names.get(j).cloned().unwrap_or_else(|| format!("column {j}")));
        } else {
            kept.push(j);
        }
    }
    out
}

fn solve_spd(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    a.clone().cholesky().map(|c| c.solve(b))
}

fn ols_fit(y: &DVector<f64>, x: &DMatrix<f64>) -> Option<(DVector<f64>, f64)> {
    if x.ncols() == 0 {
        return Some((DVector::zeros(0), y.dot(y)));
    }
    let b = x.tr_mul(x).cholesky()?.solve(&x.tr_mul(y));
    let r = y - x * &b;
    Some((b, r.dot(&r)))
}

/// 2SLS of `y` on `[endog | exog]` with instruments `[excluded | exog]`.
pub fn tsls(
    y: &[f64],
    endog: &Block,
    exog: &Block,
    excluded: &Block,
    clusters: Option<&[usize]>,
) -> Result<IvResult> {
    let n = y.len();
    if endog.data.nrows() != n || exog.data.nrows() != n || excluded.data.nrows() != n {
        return Err(Error::Config("design blocks differ in length".into()));
    }
    if excluded.ncols() < endog.ncols() {
        return Err(Error::Config(format!(
            "{} excluded instruments for {} endogenous regressors",
            excluded.ncols(),
            endog.ncols()
        )));
    }
    let x = hstack(&endog.data, &exog.data);
    let z = hstack(&excluded.data, &exog.data);
    let k = x.ncols();
    if n <= k {
        return Err(Error::Estimation(format!("{n} observations for {k} coefficients")));
    }
    let mut z_names = excluded.names.clone();
    z_names.extend(exog.names.iter().cloned());
    let mut x_names = endog.names.clone();
    x_names.extend(exog.names.iter().cloned());
    let bad = collinear_columns(&z, &z_names);
    if !bad.is_empty() {
        return Err(Error::Estimation(format!("collinear instrument columns: {}", bad.join(", "))));
    }
    let yv = DVector::from_column_slice(y);
    let ztz = z.tr_mul(&z);
    let proj = solve_spd(&ztz, &z.tr_mul(&x)).ok_or_else(|| Error::Estimation("instrument cross-product is singular".into()))?;
    let x_hat = &z * proj;
    let bad = collinear_columns(&x_hat, &x_names);
    if !bad.is_empty() {
        return Err(Error::Estimation(format!("rank-deficient first stage in: {}", bad.join(", "))));
    }
    let a = x_hat.tr_mul(&x_hat);
    let a_inv = a.clone().try_inverse().ok_or_else(|| Error::Estimation("second-stage cross-product is singular".into()))?;
    let b = &a_inv * x_hat.tr_mul(&yv);
    let u = &yv - &x * &b;

    let mut meat_robust = DMatrix::zeros(k, k);
    for i in 0..n {
        let row = x_hat.row(i).transpose() * u[i];
        meat_robust += &row * row.transpose();
    }
    let robust = &a_inv * meat_robust * &a_inv;
    let clustered = match clusters {
        None => robust.clone(),
        Some(c) => {
            if c.len() != n {
                return Err(Error::Config("cluster ids differ in length from the data".into()));
            }
            let n_c = c.iter().copied().max().map_or(0, |m| m + 1);
            let mut sums = DMatrix::zeros(n_c, k);
            for i in 0..n {
                for j in 0..k {
                    sums[(c[i], j)] += x_hat[(i, j)] * u[i];
                }
            }
            &a_inv * sums.tr_mul(&sums) * &a_inv
        }
    };
    let diag_sqrt = |m: &DMatrix<f64>| (0..k).map(|i| m[(i, i)].max(0.0).sqrt()).collect::<Vec<_>>();

    let mut first_stage_f = Vec::with_capacity(endog.ncols());
    let q = excluded.ncols();
    for j in 0..endog.ncols() {
        let target = DVector::from_iterator(n, endog.data.column(j).iter().copied());
        let (_, rss_u) = ols_fit(&target, &z).ok_or_else(|| Error::Estimation("first stage is singular".into()))?;
        let (_, rss_r) = ols_fit(&target, &exog.data).ok_or_else(|| Error::Estimation("first stage is singular".into()))?;
        let df = (n - z.ncols()) as f64;
        let f = if rss_u > 0.0 { ((rss_r - rss_u) / q as f64) / (rss_u / df) } else { f64::INFINITY };
        first_stage_f.push(f.max(0.0));
    }

    let (j_stat, j_pvalue) = if z.ncols() > k {
        let g = z.tr_mul(&u) / n as f64;
        let mut s = DMatrix::zeros(z.ncols(), z.ncols());
        for i in 0..n {
            let row = z.row(i).transpose() * u[i];
            s += &row * row.transpose();
        }
        s /= n as f64;
        match s.try_inverse() {
            Some(w) => {
                let j = (n as f64 * g.dot(&(w * &g))).max(0.0);
                let df = (z.ncols() - k) as f64;
                let p = ChiSquared::new(df).ok().map(|d| 1.0 - d.cdf(j));
                (Some(j), p)
            }
            None => (None, None),
        }
    } else {
        (None, None)
    };

    Ok(IvResult {
        names: x_names,
        coefficients: b.iter().copied().collect(),
        std_errors: diag_sqrt(&clustered),
        robust_std_errors: diag_sqrt(&robust),
        first_stage_f,
        j_stat,
        j_pvalue,
        n,
    })
}

/// Least squares, as 2SLS with every regressor instrumenting itself.
pub fn ols(y: &[f64], regressors: &Block, exog: &Block, clusters: Option<&[usize]>) -> Result<IvResult> {
    let mut r = tsls(y, regressors, exog, regressors, clusters)?;
    r.first_stage_f = vec![f64::INFINITY; regressors.ncols()];
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block(name: &str, v: &[f64]) -> Block {
        Block::from_columns(vec![(name.into(), v.to_vec())])
    }

    #[test]
    fn exactly_identified_by_itself_is_ols() {
        let x = [1.0, 2.0, 4.0, 3.0, 5.0, 7.0];
        let y = [2.1, 3.9, 8.2, 6.1, 9.8, 14.3];
        let cons = block("const", &[1.0; 6]);
        let r = tsls(&y, &block("x", &x), &cons, &block("x", &x), None).unwrap();
        let n = 6.0;
        let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
        let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
        assert!((r.coefficients[0] - sxy / sxx).abs() < 1e-10);
        assert!((r.coefficients[1] - (my - sxy / sxx * mx)).abs() < 1e-10);
    }

    #[test]
    fn three_observation_sandwich() {
        // y = b x, instrument z, no constant: b = z'y / z'x and the robust
        // variance is Σ z_i² u_i² / (z'x)².
        let (x, y, z) = ([1.0, 2.0, 3.0], [1.5, 3.5, 6.5], [1.0, 1.0, 2.0]);
        let r = tsls(&y, &block("x", &x), &Block::empty(3), &block("z", &z), None).unwrap();
        let zx: f64 = z.iter().zip(&x).map(|(a, b)| a * b).sum();
        let zy: f64 = z.iter().zip(&y).map(|(a, b)| a * b).sum();
        let b = zy / zx;
        let meat: f64 = (0..3).map(|i| (z[i] * (y[i] - b * x[i])).powi(2)).sum();
        assert!((r.coefficients[0] - b).abs() < 1e-12);
        assert!((r.robust_std_errors[0] - meat.sqrt() / zx.abs()).abs() < 1e-10);
    }

    #[test]
    fn collinear_instruments_are_named() {
        let z = [1.0, 2.0, 3.0, 4.0, 5.0];
        let err = tsls(
            &[1.0, 2.0, 3.0, 4.0, 6.0],
            &block("x", &[1.0, 2.5, 2.0, 4.0, 5.0]),
            &block("const", &[1.0; 5]),
            &Block::from_columns(vec![("z1".into(), z.to_vec()), ("z2".into(), z.iter().map(|v| 2.0 * v).collect())]),
            None,
        )
        .unwrap_err();
        assert!(err.to_string().contains("z2"));
    }
}
