//! Bounded multi-start minimization: Nelder-Mead simplex refined by a
//! projected quasi-Newton step with numerical gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimOptions {
    /// Latin-hypercube starts in addition to any supplied initial point.
    pub starts: usize,
    pub max_evals: usize,
    pub f_tol: f64,
    pub x_tol: f64,
    pub seed: u64,
    pub initial: Option<Vec<f64>>,
}

impl Default for OptimOptions {
    fn default() -> Self {
        Self { starts: 8, max_evals: 3000, f_tol: 1e-14, x_tol: 1e-10, seed: 7, initial: None }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub converged: bool,
    pub evals: usize,
}

fn project(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lo[i], hi[i]);
    }
}

fn safe(f: &dyn Fn(&[f64]) -> f64, x: &[f64]) -> f64 {
    let v = f(x);
    if v.is_finite() {
        v
    } else {
        f64::INFINITY
    }
}

/// Width used to size the initial simplex and to draw starts for a coordinate.
fn span(lo: f64, hi: f64, x: f64) -> f64 {
    if lo.is_finite() && hi.is_finite() {
        hi - lo
    } else {
        2.0 * x.abs().max(1.0)
    }
}

/// Bounded Nelder-Mead; trial points are projected onto the box.
pub fn nelder_mead(
    f: &dyn Fn(&[f64]) -> f64,
    x0: &[f64],
    lo: &[f64],
    hi: &[f64],
    f_tol: f64,
    x_tol: f64,
    max_evals: usize,
) -> OptimResult {
    let n = x0.len();
    let evals = std::cell::Cell::new(0usize);
    let eval = |x: &[f64]| {
        evals.set(evals.get() + 1);
        safe(f, x)
    };
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    let mut start = x0.to_vec();
    project(&mut start, lo, hi);
    simplex.push(start.clone());
    for i in 0..n {
        let mut v = start.clone();
        let step = 0.1 * span(lo[i], hi[i], start[i]);
        v[i] = if v[i] + step <= hi[i] { v[i] + step } else { v[i] - step };
        project(&mut v, lo, hi);
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| eval(v)).collect();
    let mut converged = false;
    while evals.get() < max_evals {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();
        let f_spread = (values[n] - values[0]).abs();
        let x_spread = simplex[1..]
            .iter()
            .flat_map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        let scale = 1.0 + simplex[0].iter().fold(0.0f64, |a, b| a.max(b.abs()));
        let flat = f_spread <= f_tol * (1.0 + values[0].abs()) && x_spread <= 1e-6 * scale;
        if values[0].is_finite() && (flat || x_spread <= x_tol * scale) {
            converged = true;
            break;
        }
        let mut centroid = vec![0.0; n];
        for v in &simplex[..n] {
            for j in 0..n {
                centroid[j] += v[j] / n as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            let mut p: Vec<f64> = (0..n).map(|j| centroid[j] + t * (simplex[n][j] - centroid[j])).collect();
            project(&mut p, lo, hi);
            p
        };
        let xr = along(-1.0);
        let fr = eval(&xr);
        if fr < values[0] {
            let xe = along(-2.0);
            let fe = eval(&xe);
            if fe < fr {
                simplex[n] = xe;
                values[n] = fe;
            } else {
                simplex[n] = xr;
                values[n] = fr;
            }
            continue;
        }
        if fr < values[n - 1] {
            simplex[n] = xr;
            values[n] = fr;
            continue;
        }
        let (xc, fc) = if fr < values[n] {
            let x = along(-0.5);
            let v = eval(&x);
            (x, v)
        } else {
            let x = along(0.5);
            let v = eval(&x);
            (x, v)
        };
        if fc < values[n].min(fr) {
            simplex[n] = xc;
            values[n] = fc;
            continue;
        }
        for i in 1..=n {
            let mut p: Vec<f64> = (0..n).map(|j| simplex[0][j] + 0.5 * (simplex[i][j] - simplex[0][j])).collect();
            project(&mut p, lo, hi);
            values[i] = eval(&p);
            simplex[i] = p;
        }
    }
    let best = (0..=n).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap_or(0);
    OptimResult { x: simplex[best].clone(), value: values[best], converged, evals: evals.get() }
}

/// Central-difference gradient with one-sided steps at active bounds.
pub fn numerical_gradient(f: &dyn Fn(&[f64]) -> f64, x: &[f64], lo: &[f64], hi: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    let mut work = x.to_vec();
    let fx = safe(f, x);
    for i in 0..x.len() {
        let h = 1e-5 * x[i].abs().max(1.0);
        let up = (x[i] + h).min(hi[i]);
        let down = (x[i] - h).max(lo[i]);
        work[i] = up;
        let fu = if up > x[i] { safe(f, &work) } else { fx };
        work[i] = down;
        let fd = if down < x[i] { safe(f, &work) } else { fx };
        work[i] = x[i];
        let denom = up - down;
        g[i] = if denom > 0.0 { (fu - fd) / denom } else { 0.0 };
    }
    g
}

/// Projected BFGS polish from `x0`.
pub fn bfgs_polish(
    f: &dyn Fn(&[f64]) -> f64,
    x0: &[f64],
    lo: &[f64],
    hi: &[f64],
    f_tol: f64,
    max_iter: usize,
) -> OptimResult {
    let n = x0.len();
    let mut x = x0.to_vec();
    project(&mut x, lo, hi);
    let mut fx = safe(f, &x);
    let mut evals = 1usize;
    let mut inv_h = vec![vec![0.0; n]; n];
    for (i, row) in inv_h.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let free = |x: &[f64], g: &[f64], i: usize| !((x[i] <= lo[i] && g[i] > 0.0) || (x[i] >= hi[i] && g[i] < 0.0));
    let mut g = numerical_gradient(f, &x, lo, hi);
    evals += 2 * n;
    let mut converged = false;
    for _ in 0..max_iter {
        let pg: Vec<f64> = (0..n).map(|i| if free(&x, &g, i) { g[i] } else { 0.0 }).collect();
        let gnorm = pg.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !fx.is_finite() || gnorm <= 1e-14 * (1.0 + fx.abs()) {
            converged = fx.is_finite();
            break;
        }
        let mut d: Vec<f64> = (0..n)
            .map(|i| -(0..n).map(|j| inv_h[i][j] * pg[j]).sum::<f64>())
            .collect();
        for i in 0..n {
            if !free(&x, &g, i) {
                d[i] = 0.0;
            }
        }
        let slope: f64 = d.iter().zip(&pg).map(|(a, b)| a * b).sum();
        if slope >= 0.0 {
            d = pg.iter().map(|v| -v).collect();
            for row in inv_h.iter_mut() {
                row.iter_mut().for_each(|v| *v = 0.0);
            }
            for (i, row) in inv_h.iter_mut().enumerate() {
                row[i] = 1.0;
            }
        }
        let slope: f64 = d.iter().zip(&pg).map(|(a, b)| a * b).sum();
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let mut trial: Vec<f64> = (0..n).map(|i| x[i] + step * d[i]).collect();
            project(&mut trial, lo, hi);
            let ft = safe(f, &trial);
            evals += 1;
            if ft <= fx + 1e-4 * step * slope {
                accepted = Some((trial, ft));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fnew)) = accepted else {
            converged = true;
            break;
        };
        let gn = numerical_gradient(f, &xn, lo, hi);
        evals += 2 * n;
        let s: Vec<f64> = (0..n).map(|i| xn[i] - x[i]).collect();
        let y: Vec<f64> = (0..n).map(|i| gn[i] - g[i]).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let decrease = fx - fnew;
        x = xn;
        fx = fnew;
        g = gn;
        if sy > 1e-300 {
            let hy: Vec<f64> = (0..n).map(|i| (0..n).map(|j| inv_h[i][j] * y[j]).sum()).collect();
            let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
            for i in 0..n {
                for j in 0..n {
                    inv_h[i][j] += ((sy + yhy) * s[i] * s[j]) / (sy * sy) - (hy[i] * s[j] + s[i] * hy[j]) / sy;
                }
            }
        }
        if decrease.abs() <= f_tol * (1.0 + fx.abs()) {
            converged = true;
            break;
        }
    }
    OptimResult { x, value: fx, converged, evals }
}

/// Latin-hypercube sample of `count` points inside the (finite part of the) box.
pub fn latin_hypercube(count: usize, lo: &[f64], hi: &[f64], center: &[f64], rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = lo.len();
    let mut points = vec![vec![0.0; n]; count];
    for j in 0..n {
        let (a, b) = if lo[j].is_finite() && hi[j].is_finite() {
            (lo[j], hi[j])
        } else {
            let w = span(lo[j], hi[j], center[j]);
            ((center[j] - w / 2.0).max(lo[j]), (center[j] + w / 2.0).min(hi[j]))
        };
        let mut perm: Vec<usize> = (0..count).collect();
        for i in (1..count).rev() {
            let k = rng.random_range(0..=i);
            perm.swap(i, k);
        }
        for i in 0..count {
            let u: f64 = rng.random();
            points[i][j] = a + (b - a) * (perm[i] as f64 + u) / count as f64;
        }
    }
    points
}

/// Best point of a scalar grid, log-spaced when the interval is positive and
/// spans more than two orders of magnitude.
fn grid_scan(f: &dyn Fn(&[f64]) -> f64, lo: f64, hi: f64, points: usize) -> f64 {
    let log = lo > 0.0 && hi / lo > 100.0;
    (0..points)
        .map(|k| {
            let u = k as f64 / (points - 1) as f64;
            if log {
                (lo.ln() + u * (hi.ln() - lo.ln())).exp()
            } else {
                lo + u * (hi - lo)
            }
        })
        .map(|x| (x, safe(f, &[x])))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map_or(lo, |(x, _)| x)
}

/// Multi-start minimization over a box. Infinite bounds are allowed; starts for
/// such coordinates are drawn around the initial point (or zero).
pub fn minimize(f: &dyn Fn(&[f64]) -> f64, lo: &[f64], hi: &[f64], opts: &OptimOptions) -> OptimResult {
    let n = lo.len();
    let center: Vec<f64> = match &opts.initial {
        Some(x) => x.clone(),
        None => (0..n)
            .map(|j| match (lo[j].is_finite(), hi[j].is_finite()) {
                (true, true) => 0.5 * (lo[j] + hi[j]),
                (true, false) => lo[j] + 1.0,
                (false, true) => hi[j] - 1.0,
                (false, false) => 0.0,
            })
            .collect(),
    };
    let mut starts = Vec::new();
    if let Some(x) = &opts.initial {
        starts.push(x.clone());
    }
    if n == 1 && lo[0].is_finite() && hi[0].is_finite() {
        starts.push(vec![grid_scan(f, lo[0], hi[0], 64)]);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    starts.extend(latin_hypercube(opts.starts, lo, hi, &center, &mut rng));
    if starts.is_empty() {
        starts.push(center);
    }
    let mut best: Option<OptimResult> = None;
    let mut total = 0usize;
    for s in &starts {
        let nm = nelder_mead(f, s, lo, hi, opts.f_tol, opts.x_tol, opts.max_evals);
        total += nm.evals;
        let polished = bfgs_polish(f, &nm.x, lo, hi, opts.f_tol, 200);
        total += polished.evals;
        let cand = if polished.value <= nm.value {
            OptimResult { converged: nm.converged || polished.converged, ..polished }
        } else {
            nm
        };
        if best.as_ref().map_or(true, |b| cand.value < b.value) {
            best = Some(cand);
        }
    }
    let mut out = best.expect("at least one start");
    out.evals = total;
    out
}

/// Brent minimization of a scalar function on [a, b].
pub fn brent_minimize(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, max_iter: usize) -> (f64, f64) {
    let golden = 0.381_966_011_250_105_1;
    let (mut a, mut b) = (a, b);
    let mut x = a + golden * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = f(x);
    let (mut fw, mut fv) = (fx, fx);
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;
    for _ in 0..max_iter {
        let m = 0.5 * (a + b);
        let tol1 = tol * x.abs() + 1e-12;
        let tol2 = 2.0 * tol1;
        if (x - m).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut use_golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            if p.abs() < (0.5 * q * e).abs() && p > q * (a - x) && p < q * (b - x) {
                e = d;
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if m > x { tol1 } else { -tol1 };
                }
                use_golden = false;
            }
        }
        if use_golden {
            e = if x >= m { a - x } else { b - x };
            d = golden * e;
        }
        let u = if d.abs() >= tol1 { x + d } else { x + tol1.copysign(d) };
        let fu = f(u);
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    (x, fx)
}

/// Brent root finding on a bracket with `f(a)` and `f(b)` of opposite sign.
pub fn brent_root(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64, tol: f64, max_iter: usize) -> Option<f64> {
    let (mut a, mut b) = (a, b);
    let mut fa = f(a);
    let mut fb = f(b);
    if !(fa.is_finite() && fb.is_finite()) || fa * fb > 0.0 {
        return None;
    }
    if fa == 0.0 {
        return Some(a);
    }
    if fb == 0.0 {
        return Some(b);
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..max_iter {
        if fb * fc > 0.0 {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * tol;
        let m = 0.5 * (c - b);
        if m.abs() <= tol1 || fb == 0.0 {
            return Some(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol1 * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = d;
            }
        } else {
            d = m;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(m) };
        fb = f(b);
        if !fb.is_finite() {
            return None;
        }
    }
    Some(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> f64 {
        (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
    }

    #[test]
    fn finds_rosenbrock_minimum() {
        let r = minimize(&rosenbrock, &[-2.0, -2.0], &[2.0, 2.0], &OptimOptions::default());
        assert!((r.x[0] - 1.0).abs() < 1e-5 && (r.x[1] - 1.0).abs() < 1e-5, "{:?}", r.x);
    }

    #[test]
    fn respects_bounds() {
        let f = |x: &[f64]| (x[0] - 3.0).powi(2);
        let r = minimize(&f, &[0.0], &[1.0], &OptimOptions::default());
        assert!((r.x[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unbounded_quadratic() {
        let f = |x: &[f64]| (x[0] - 12.5).powi(2) + (x[1] + 4.0).powi(2);
        let inf = f64::INFINITY;
        let r = minimize(&f, &[-inf, -inf], &[inf, inf], &OptimOptions::default());
        assert!((r.x[0] - 12.5).abs() < 1e-7 && (r.x[1] + 4.0).abs() < 1e-7);
    }

    #[test]
    fn brent_routines() {
        let (x, _) = brent_minimize(&|x| (x - 0.3).powi(2) + 1.0, 0.0, 2.0, 1e-10, 200);
        assert!((x - 0.3).abs() < 1e-8);
        let r = brent_root(&mut |x| x * x - 2.0, 0.0, 2.0, 1e-14, 200).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-12);
        assert!(brent_root(&mut |x| x * x + 1.0, 0.0, 2.0, 1e-14, 200).is_none());
    }
}
