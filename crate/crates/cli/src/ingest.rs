//! CSV ingestion and per-series transform pipelines.
//!
//! Each modelled series runs through its own pipeline. A differencing step
//! drops the series' first observation; afterwards every series, and the date
//! column, is cut to the common tail so rows stay aligned.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use signvar::var_core::TimeSeriesData;

use crate::config::{resolve, DataConfig};
use crate::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Transform {
    Log,
    #[serde(rename = "scale-100")]
    Scale100,
    #[serde(rename = "scale-400")]
    Scale400,
    /// First difference of a logged series.
    LogDifference,
    /// Residuals from an OLS regression on a constant and a linear trend.
    LinearDetrend,
    None,
}

/// A log-difference needs an earlier `log`; a `log` after a difference is rejected.
pub fn validate_pipeline(name: &str, steps: &[Transform]) -> CliResult<()> {
    let mut logged = false;
    let mut differenced = false;
    for step in steps {
        match step {
            Transform::Log if differenced => {
                return Err(CliError::Config(format!("{name}: log after log-difference")));
            }
            Transform::Log => logged = true,
            Transform::LogDifference if !logged => {
                return Err(CliError::Config(format!("{name}: log-difference before log")));
            }
            Transform::LogDifference => differenced = true,
            _ => {}
        }
    }
    Ok(())
}

fn detrend(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let t_bar = (n - 1.0) / 2.0;
    let x_bar = x.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (t, &v) in x.iter().enumerate() {
        let dt = t as f64 - t_bar;
        sxy += dt * (v - x_bar);
        sxx += dt * dt;
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    x.iter().enumerate().map(|(t, &v)| v - x_bar - slope * (t as f64 - t_bar)).collect()
}

/// Runs a validated pipeline; the result is shorter by one per difference.
pub fn apply_pipeline(name: &str, series: &[f64], steps: &[Transform]) -> CliResult<Vec<f64>> {
    validate_pipeline(name, steps)?;
    let mut x = series.to_vec();
    for step in steps {
        x = match step {
            Transform::Log => {
                if let Some(bad) = x.iter().find(|v| **v <= 0.0) {
                    return Err(CliError::Data(format!("{name}: log of non-positive value {bad}")));
                }
                x.iter().map(|v| v.ln()).collect()
            }
            Transform::Scale100 => x.iter().map(|v| v * 100.0).collect(),
            Transform::Scale400 => x.iter().map(|v| v * 400.0).collect(),
            Transform::LogDifference => x.windows(2).map(|w| w[1] - w[0]).collect(),
            Transform::LinearDetrend if x.len() < 2 => {
                return Err(CliError::Data(format!("{name}: too short to detrend")));
            }
            Transform::LinearDetrend => detrend(&x),
            Transform::None => x,
        };
    }
    Ok(x)
}

#[derive(Debug, Clone)]
pub struct Ingested {
    pub data: TimeSeriesData,
    /// Date labels aligned with the rows of `data`.
    pub dates: Option<Vec<String>>,
}

fn looks_like_date(header: &str) -> bool {
    matches!(header.trim().to_ascii_lowercase().as_str(), "date" | "time" | "period" | "quarter" | "obs" | "observation_date")
}

/// Reads a header-first CSV and applies the configured transforms.
pub fn ingest_csv(path: &Path, cfg: &DataConfig) -> CliResult<Ingested> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::Data(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let date_col = match &cfg.date_column {
        Some(name) => Some(
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| CliError::Config(format!("date column '{name}' not in header")))?,
        ),
        None => headers.first().filter(|h| looks_like_date(h)).map(|_| 0),
    };
    let numeric: Vec<usize> = (0..headers.len()).filter(|&j| Some(j) != date_col).collect();
    let numeric_names: Vec<String> = numeric.iter().map(|&j| headers[j].clone()).collect();
    let selected: Vec<usize> = match &cfg.variables {
        Some(vars) => vars.iter().map(|v| resolve(v, &numeric_names)).collect::<CliResult<_>>()?,
        None => (0..numeric.len()).collect(),
    };
    if selected.is_empty() {
        return Err(CliError::Data("no numeric columns selected".into()));
    }
    let names: Vec<String> = selected.iter().map(|&k| numeric_names[k].clone()).collect();
    for key in cfg.transforms.keys() {
        if !names.contains(key) {
            return Err(CliError::Config(format!("transform for unknown variable '{key}'")));
        }
    }

    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); selected.len()];
    let mut dates = date_col.map(|_| Vec::new());
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Data(e.to_string()))?;
        if rec.len() != headers.len() {
            return Err(CliError::Data(format!("row {}: {} fields, header has {}", row + 2, rec.len(), headers.len())));
        }
        if let (Some(d), Some(j)) = (dates.as_mut(), date_col) {
            d.push(rec[j].to_string());
        }
        for (col, &k) in columns.iter_mut().zip(&selected) {
            let cell = &rec[numeric[k]];
            let v: f64 = cell.parse().map_err(|_| {
                CliError::Data(format!("row {}, column '{}': non-numeric value '{cell}'", row + 2, numeric_names[k]))
            })?;
            if !v.is_finite() {
                return Err(CliError::Data(format!("row {}, column '{}': {v}", row + 2, numeric_names[k])));
            }
            col.push(v);
        }
    }

    let transformed: Vec<Vec<f64>> = columns
        .iter()
        .zip(&names)
        .map(|(c, name)| apply_pipeline(name, c, cfg.transforms.get(name).map_or(&[][..], |v| v.as_slice())))
        .collect::<CliResult<_>>()?;
    let len = transformed.iter().map(Vec::len).min().unwrap_or(0);
    let raw = columns[0].len();
    if len == 0 {
        return Err(CliError::Data("no observations left after transforms".into()));
    }
    let values = DMatrix::from_fn(len, names.len(), |t, j| {
        let c = &transformed[j];
        c[c.len() - len + t]
    });
    let dates = dates.map(|d| d[raw - len..].to_vec());
    let data = TimeSeriesData::new(values, names)?;
    Ok(Ingested { data, dates })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::VarRef;
    use std::io::Write;

    #[test]
    fn log_difference_of_exponential_growth() {
        let x: Vec<f64> = (0..40).map(|t| (0.01 * t as f64).exp()).collect();
        let y = apply_pipeline("x", &x, &[Transform::Log, Transform::LogDifference, Transform::Scale400]).unwrap();
        assert_eq!(y.len(), 39);
        assert!(y.iter().all(|v| (v - 4.0).abs() < 1e-9));
    }

    #[test]
    fn constant_detrends_to_zero() {
        let y = apply_pipeline("x", &[0.1; 25], &[Transform::LinearDetrend]).unwrap();
        assert!(y.iter().all(|v| v.abs() < 1e-15));
        let z = apply_pipeline("x", &[3.0, 5.0, 7.0, 9.0], &[Transform::LinearDetrend]).unwrap();
        assert!(z.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn pipeline_order_is_checked() {
        assert!(validate_pipeline("x", &[Transform::LogDifference, Transform::Log]).is_err());
        assert!(validate_pipeline("x", &[Transform::LogDifference]).is_err());
        assert!(validate_pipeline("x", &[Transform::Log, Transform::LogDifference]).is_ok());
        assert!(apply_pipeline("x", &[1.0, -2.0], &[Transform::Log]).is_err());
    }

    #[test]
    fn differencing_realigns_series_and_dates() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, "date,a,b").unwrap();
        for t in 0..5 {
            writeln!(f, "q{t},{},{}", (t as f64).exp(), t * 10).unwrap();
        }
        drop(f);
        let mut cfg = DataConfig::default();
        cfg.transforms.insert("a".into(), vec![Transform::Log, Transform::LogDifference]);
        let ing = ingest_csv(&path, &cfg).unwrap();
        assert_eq!(ing.data.len(), 4);
        assert_eq!(ing.dates.unwrap(), vec!["q1", "q2", "q3", "q4"]);
        assert!((ing.data.values[(0, 0)] - 1.0).abs() < 1e-12);
        assert_eq!(ing.data.values[(0, 1)], 10.0);
    }

    #[test]
    fn non_numeric_cell_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        std::fs::write(&path, "a,b\n1,2\n3,x\n").unwrap();
        let err = ingest_csv(&path, &DataConfig::default()).unwrap_err();
        assert!(err.to_string().contains("row 3"), "{err}");
    }

    #[test]
    fn variables_by_name_and_index() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        std::fs::write(&path, "a,b,c\n1,2,3\n4,5,6\n").unwrap();
        let cfg = DataConfig {
            variables: Some(vec![VarRef::Name("c".into()), VarRef::Index(1)]),
            ..Default::default()
        };
        let ing = ingest_csv(&path, &cfg).unwrap();
        assert_eq!(ing.data.names, vec!["c", "a"]);
        assert_eq!(ing.data.values[(1, 0)], 6.0);
    }
}
