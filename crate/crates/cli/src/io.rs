//! Wide-format panel CSV: one row per plant-year.
//!
//! | column | meaning |
//! |---|---|
//! | `plant_id`, `year`, `market_id` | identifiers |
//! | `Q`, `P` | output quantity and price index |
//! | `K`, `M`, `P_M` | capital, materials quantity and price |
//! | `H`, `W_H` | white-collar mandays and daily wage |
//! | `C`, `W_C` | temporary blue-collar mandays and daily wage |
//! | `D`, `W_D` | permanent blue-collar mandays and daily wage |
//! | `IDA` | pro-worker regulation index of the market |
//! | `Imp_lag` | lagged import indicator (0/1) |
//! | `strike_intensity` | strike intensity |
//! | `outside_mandays_C`, `outside_mandays_D` | mandays outside the industry |
//! | `I` | gross investment, optional, may be blank |
//!
//! Any further column is read as a numeric extra variable.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use labormarkdown::{Error, PanelObservation, Result};

pub const REQUIRED_COLUMNS: [&str; 19] = [
    "plant_id",
    "year",
    "market_id",
    "Q",
    "P",
    "K",
    "M",
    "P_M",
    "H",
    "W_H",
    "C",
    "W_C",
    "D",
    "W_D",
    "IDA",
    "Imp_lag",
    "strike_intensity",
    "outside_mandays_C",
    "outside_mandays_D",
];

pub const INVESTMENT_COLUMN: &str = "I";

fn row_error(line: u64, msg: impl std::fmt::Display) -> Error {
    Error::Validation(format!("line {line}: {msg}"))
}

/// Reads and validates a panel CSV.
pub fn ingest(path: &Path) -> Result<Vec<PanelObservation>> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Validation(format!("cannot open {}: {e}", path.display())))?;
    ingest_reader(file)
}

pub fn ingest_reader<R: Read>(reader: R) -> Result<Vec<PanelObservation>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let index: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h, i)).collect();
    let missing: Vec<&str> = REQUIRED_COLUMNS.iter().copied().filter(|c| !index.contains_key(c)).collect();
    if !missing.is_empty() {
        return Err(Error::Validation(format!("missing required column(s): {}", missing.join(", "))));
    }
    let extras: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| !REQUIRED_COLUMNS.contains(h) && *h != INVESTMENT_COLUMN)
        .map(|(i, h)| (i, h.to_string()))
        .collect();
    let mut out = Vec::new();
    let mut seen: HashMap<(String, i32), u64> = HashMap::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let text = |c: &str| record.get(index[c]).unwrap_or("");
        let num = |c: &str| -> Result<f64> {
            let s = text(c);
            s.parse::<f64>().map_err(|_| row_error(line, format!("column {c}: '{s}' is not a number")))
        };
        let year: i32 =
            text("year").parse().map_err(|_| row_error(line, format!("column year: '{}' is not an integer", text("year"))))?;
        let investment = match index.get(INVESTMENT_COLUMN).and_then(|&i| record.get(i)) {
            None | Some("") => None,
            Some(s) => Some(
                s.parse::<f64>()
                    .map_err(|_| row_error(line, format!("column {INVESTMENT_COLUMN}: '{s}' is not a number")))?,
            ),
        };
        let mut extra = BTreeMap::new();
        for (i, name) in &extras {
            let s = record.get(*i).unwrap_or("");
            let v = s.parse::<f64>().map_err(|_| row_error(line, format!("column {name}: '{s}' is not a number")))?;
            extra.insert(name.clone(), v);
        }
        let obs = PanelObservation {
            plant_id: text("plant_id").to_string(),
            year,
            market_id: text("market_id").to_string(),
            output: num("Q")?,
            price: num("P")?,
            capital: num("K")?,
            materials: num("M")?,
            materials_price: num("P_M")?,
            white_days: num("H")?,
            white_wage: num("W_H")?,
            temp_days: num("C")?,
            temp_wage: num("W_C")?,
            perm_days: num("D")?,
            perm_wage: num("W_D")?,
            regulation: num("IDA")?,
            importer_lag: num("Imp_lag")?,
            strike_intensity: num("strike_intensity")?,
            outside_temp_days: num("outside_mandays_C")?,
            outside_perm_days: num("outside_mandays_D")?,
            investment,
            extra,
        };
        if obs.plant_id.is_empty() {
            return Err(row_error(line, "plant_id is empty"));
        }
        obs.validate().map_err(|e| row_error(line, e))?;
        if let Some(first) = seen.insert((obs.plant_id.clone(), obs.year), line) {
            return Err(row_error(
                line,
                format!("duplicate observation for plant {} in {} (first on line {first})", obs.plant_id, obs.year),
            ));
        }
        out.push(obs);
    }
    if out.is_empty() {
        return Err(Error::Validation("panel has no rows".into()));
    }
    Ok(out)
}

/// Writes a panel in the ingest layout. Values use the shortest decimal form
/// that parses back to the same `f64`, so a write-read cycle is lossless.
pub fn write_panel<W: Write>(writer: W, obs: &[PanelObservation]) -> Result<()> {
    let extras: BTreeSet<&str> = obs.iter().flat_map(|o| o.extra.keys().map(String::as_str)).collect();
    let with_investment = obs.iter().any(|o| o.investment.is_some());
    let mut out = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = REQUIRED_COLUMNS.to_vec();
    if with_investment {
        header.push(INVESTMENT_COLUMN);
    }
    header.extend(extras.iter().copied());
    out.write_record(&header)?;
    for o in obs {
        let mut row = vec![o.plant_id.clone(), o.year.to_string(), o.market_id.clone()];
        row.extend(
            [
                o.output,
                o.price,
                o.capital,
                o.materials,
                o.materials_price,
                o.white_days,
                o.white_wage,
                o.temp_days,
                o.temp_wage,
                o.perm_days,
                o.perm_wage,
                o.regulation,
                o.importer_lag,
                o.strike_intensity,
                o.outside_temp_days,
                o.outside_perm_days,
            ]
            .iter()
            .map(|v| v.to_string()),
        );
        if with_investment {
            row.push(o.investment.map(|v| v.to_string()).unwrap_or_default());
        }
        for name in &extras {
            row.push(o.extra.get(*name).map(|v| v.to_string()).unwrap_or_default());
        }
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_panel_file(path: &Path, obs: &[PanelObservation]) -> Result<()> {
    write_panel(std::fs::File::create(path)?, obs)
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "plant_id,year,market_id,Q,P,K,M,P_M,H,W_H,C,W_C,D,W_D,IDA,Imp_lag,strike_intensity,outside_mandays_C,outside_mandays_D";

    fn row(plant: &str, year: i32) -> String {
        format!("{plant},{year},r1,100,1.5,50,30,2,10,5,20,3,15,4,1,0,0.2,1000,900")
    }

    #[test]
    fn missing_column_is_named() {
        let header = HEADER.replace(",W_D", "");
        let body = row("a", 2000).replacen(",4,1,0", ",1,0", 1);
        let err = ingest_reader(format!("{header}\n{body}\n").as_bytes()).unwrap_err().to_string();
        assert!(err.contains("W_D"), "{err}");
    }

    #[test]
    fn bad_cells_report_their_line() {
        let csv = format!("{HEADER}\n{}\n{}\n", row("a", 2000), row("a", 2001).replace(",1.5,", ",abc,"));
        let err = ingest_reader(csv.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("line 3") && err.contains("column P"), "{err}");

        let csv = format!("{HEADER}\n{}\n", row("a", 2000).replace(",100,", ",-1,"));
        let err = ingest_reader(csv.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("line 2") && err.contains("Q"), "{err}");
    }

    #[test]
    fn duplicates_are_rejected() {
        let csv = format!("{HEADER}\n{}\n{}\n", row("a", 2000), row("a", 2000));
        let err = ingest_reader(csv.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("duplicate") && err.contains("line 3"), "{err}");
    }

    #[test]
    fn optional_and_extra_columns() {
        let csv = format!("{HEADER},I,elec\n{},5,0.5\n{},,0.7\n", row("a", 2000), row("a", 2001));
        let obs = ingest_reader(csv.as_bytes()).unwrap();
        assert_eq!(obs[0].investment, Some(5.0));
        assert_eq!(obs[1].investment, None);
        assert_eq!(obs[1].extra["elec"], 0.7);
        let mut buf = Vec::new();
        write_panel(&mut buf, &obs).unwrap();
        assert_eq!(ingest_reader(buf.as_slice()).unwrap(), obs);
    }
}
