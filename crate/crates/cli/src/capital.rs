//! Perpetual-inventory capital stock.

use labormarkdown::{Error, PanelObservation, Result};

pub const DEFAULT_DEPRECIATION: f64 = 0.10;

/// `K_t = (1 − δ) K_{t−1} + I_{t−1}` along one plant's consecutive years,
/// restarting from the book value whenever no previous stock or investment
/// is available.
pub fn perpetual_inventory(book: &[f64], investment: &[Option<f64>], delta: f64) -> Result<Vec<f64>> {
    if book.len() != investment.len() {
        return Err(Error::Config("capital and investment series differ in length".into()));
    }
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::Config(format!("depreciation rate must lie in [0, 1], got {delta}")));
    }
    let mut out: Vec<f64> = Vec::with_capacity(book.len());
    for t in 0..book.len() {
        let k = match (t.checked_sub(1), t.checked_sub(1).and_then(|s| investment[s])) {
            (Some(s), Some(inv)) => (1.0 - delta) * out[s] + inv,
            _ => book[t],
        };
        out.push(k);
    }
    Ok(out)
}

/// Replaces book capital by the perpetual-inventory stock plant by plant;
/// a gap in a plant's years restarts the recursion.
pub fn apply_perpetual_inventory(obs: &mut [PanelObservation], delta: f64) -> Result<()> {
    let mut order: Vec<usize> = (0..obs.len()).collect();
    order.sort_by(|&a, &b| obs[a].plant_id.cmp(&obs[b].plant_id).then(obs[a].year.cmp(&obs[b].year)));
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len()
            && obs[order[end]].plant_id == obs[order[start]].plant_id
            && obs[order[end]].year == obs[order[end - 1]].year + 1
        {
            end += 1;
        }
        let run = &order[start..end];
        let book: Vec<f64> = run.iter().map(|&i| obs[i].capital).collect();
        let inv: Vec<Option<f64>> = run.iter().map(|&i| obs[i].investment).collect();
        for (&i, k) in run.iter().zip(perpetual_inventory(&book, &inv, delta)?) {
            if !(k.is_finite() && k > 0.0) {
                return Err(Error::Validation(format!(
                    "perpetual-inventory capital of plant {} in {} is not positive",
                    obs[i].plant_id, obs[i].year
                )));
            }
            obs[i].capital = k;
        }
        start = end;
    }
    Ok(())
}
