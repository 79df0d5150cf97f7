use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::Serialize;
use serde_json::json;

use super::{io_err, CommandError};
use crate::config::ExperimentConfig;
use crate::models::DataSet;

#[derive(Debug, Clone, PartialEq)]
pub struct PriceRow {
    pub date: NaiveDate,
    pub close: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct IngestOutput {
    pub path: PathBuf,
    pub returns: usize,
    pub first_date: String,
    pub last_date: String,
    pub mean: f64,
    /// Standard error of the mean.
    pub mean_se: f64,
    #[serde(skip)]
    pub data: DataSet,
}

/// Percent log-returns `100 (log s_t - log s_{t-1})`.
///
/// Dates must be strictly increasing and prices positive.
pub fn log_returns(rows: &[PriceRow]) -> Result<Vec<f64>, CommandError> {
    if rows.len() < 2 {
        return Err(CommandError::Input("at least two prices are required".into()));
    }
    for (i, r) in rows.iter().enumerate() {
        if !(r.close > 0.0 && r.close.is_finite()) {
            return Err(CommandError::Input(format!("non-positive price {} on {}", r.close, r.date)));
        }
        if i > 0 && r.date <= rows[i - 1].date {
            let what = if r.date == rows[i - 1].date { "duplicate" } else { "out-of-order" };
            return Err(CommandError::Input(format!("{what} date {}", r.date)));
        }
    }
    Ok(rows.windows(2).map(|w| 100.0 * (w[1].close.ln() - w[0].close.ln())).collect())
}

fn read_prices(path: &Path) -> Result<Vec<PriceRow>, CommandError> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = reader.headers().map_err(|e| CommandError::Input(e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| CommandError::Input(format!("missing column `{name}`")))
    };
    let (dc, pc) = (col("date")?, col("close")?);
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| CommandError::Input(e.to_string()))?;
        let field = |c: usize| rec.get(c).unwrap_or("");
        let date = NaiveDate::parse_from_str(field(dc), "%Y-%m-%d")
            .map_err(|e| CommandError::Input(format!("row {}: bad date `{}`: {e}", i + 1, field(dc))))?;
        let close = field(pc)
            .parse::<f64>()
            .map_err(|_| CommandError::Input(format!("row {}: bad price `{}`", i + 1, field(pc))))?;
        rows.push(PriceRow { date, close });
    }
    Ok(rows)
}

/// Converts a `date,close` price file into `returns.csv` with header `t,y`.
pub fn ingest_bitcoin(config: &ExperimentConfig, input: &Path) -> Result<IngestOutput, CommandError> {
    let rows = read_prices(input)?;
    let y = log_returns(&rows)?;
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = if y.len() > 1 { y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    let data = DataSet::observations_only(y)?;
    let path = config.output.join("returns.csv");
    crate::io::write_with(&path, |w| data.write_csv(w)).map_err(io_err(&path))?;
    let (first, last) = (rows[0].date.to_string(), rows[rows.len() - 1].date.to_string());
    let extra = json!({
        "input": input.file_name().map(|n| n.to_string_lossy().into_owned()),
        "first_date": first,
        "last_date": last,
        "returns": data.len(),
        "mean": mean,
    });
    crate::io::write_sidecar(&path, &crate::io::provenance("ingest-bitcoin", config, config.seed, extra))
        .map_err(io_err(&path))?;
    Ok(IngestOutput { path, returns: data.len(), first_date: first, last_date: last, mean, mean_se: (var / n).sqrt(), data })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(d: &str, close: f64) -> PriceRow {
        PriceRow { date: NaiveDate::parse_from_str(d, "%Y-%m-%d").unwrap(), close }
    }

    #[test]
    fn returns_formula() {
        assert_eq!(log_returns(&[row("2017-01-01", 100.0), row("2017-01-02", 100.0)]).unwrap(), vec![0.0]);
        let y = log_returns(&[row("2017-01-01", 100.0), row("2017-01-02", 110.0)]).unwrap();
        assert!((y[0] - 9.531017980432486).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_rows() {
        assert!(log_returns(&[row("2017-01-01", 100.0), row("2017-01-01", 101.0)]).is_err());
        assert!(log_returns(&[row("2017-01-02", 100.0), row("2017-01-01", 101.0)]).is_err());
        assert!(log_returns(&[row("2017-01-01", 100.0), row("2017-01-02", 0.0)]).is_err());
        assert!(log_returns(&[row("2017-01-01", 100.0)]).is_err());
    }
}
