//! CSV input and output.

use std::fs::File;
use std::path::Path;

use barma::{CovariateMatrix, ObservationSeries};

use crate::error::{CliError, CliResult};

/// Formats a number with 17 significant digits so it parses back exactly.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "NaN".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub fn opt_num(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".into(), num)
}

fn input_error(path: &Path, message: impl Into<String>) -> CliError {
    CliError::Input { path: path.display().to_string(), message: message.into() }
}

/// Reads a header row plus one row per time step. The first column is the
/// response; any further columns are covariates.
pub fn load_series(path: &Path) -> CliResult<(ObservationSeries, CovariateMatrix)> {
    let file = File::open(path).map_err(|e| input_error(path, e.to_string()))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(file);
    let width = reader.headers().map_err(|e| input_error(path, e.to_string()))?.len();
    if width == 0 {
        return Err(input_error(path, "missing header row"));
    }
    let mut ys = Vec::new();
    let mut rows = Vec::new();
    let mut bad = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row_no = i + 1;
        let record = record.map_err(|e| input_error(path, format!("row {row_no}: {e}")))?;
        if record.len() != width {
            return Err(input_error(path, format!("row {row_no}: expected {width} fields, found {}", record.len())));
        }
        let mut values = Vec::with_capacity(width);
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| input_error(path, format!("row {row_no}, column {}: cannot parse {field:?}", j + 1)))?;
            values.push(v);
        }
        let y = values[0];
        if !(y > 0.0 && y < 1.0) {
            bad.push(format!("row {row_no} ({y})"));
        }
        ys.push(y);
        rows.push(values[1..].to_vec());
    }
    if !bad.is_empty() {
        return Err(input_error(path, format!("values outside (0,1) at {}", bad.join(", "))));
    }
    if ys.is_empty() {
        return Err(input_error(path, "no observations"));
    }
    let n = ys.len();
    let series = ObservationSeries::new(ys)?;
    let covariates = if width == 1 { CovariateMatrix::empty(n) } else { CovariateMatrix::from_rows(&rows)? };
    Ok((series, covariates))
}

/// Reads a header row plus rows of covariate values only.
pub fn load_matrix(path: &Path) -> CliResult<Vec<Vec<f64>>> {
    let file = File::open(path).map_err(|e| input_error(path, e.to_string()))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(file);
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| input_error(path, format!("row {}: {e}", i + 1)))?;
        let row = record
            .iter()
            .map(|f| f.parse::<f64>().map_err(|_| input_error(path, format!("row {}: cannot parse {f:?}", i + 1))))
            .collect::<CliResult<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

/// Writes a CSV file from a header and string rows.
pub fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Gaussian kernel density estimate on an evenly spaced grid, with
/// Silverman's rule-of-thumb bandwidth. Empty for degenerate samples.
pub fn kde_grid(values: &[f64], points: usize) -> Vec<(f64, f64)> {
    let n = values.len();
    if n < 2 || points < 2 {
        return Vec::new();
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    let iqr = barma::analysis::quantile(values, 0.75) - barma::analysis::quantile(values, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let bw = 0.9 * spread * (n as f64).powf(-0.2);
    if !(bw > 0.0) {
        return Vec::new();
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min) - 3.0 * bw;
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 3.0 * bw;
    let norm = 1.0 / (n as f64 * bw * (2.0 * std::f64::consts::PI).sqrt());
    (0..points)
        .map(|i| {
            let x = lo + (hi - lo) * i as f64 / (points - 1) as f64;
            let d = values.iter().map(|v| (-0.5 * ((x - v) / bw).powi(2)).exp()).sum::<f64>() * norm;
            (x, d)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_format_round_trips() {
        for x in [0.1, 1.0 / 3.0, 123456.789, -2.5e-300, 0.0] {
            let s = num(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
        }
        assert_eq!(num(0.5), "5.0000000000000000e-1");
        assert_eq!(opt_num(None), "NA");
    }

    #[test]
    fn kde_integrates_to_about_one() {
        let vals: Vec<f64> = (0..200).map(|i| ((i * 37) % 101) as f64 / 101.0).collect();
        let grid = kde_grid(&vals, 256);
        let dx = grid[1].0 - grid[0].0;
        let area: f64 = grid.iter().map(|g| g.1).sum::<f64>() * dx;
        assert!((area - 1.0).abs() < 0.01, "{area}");
        assert!(kde_grid(&[1.0; 10], 16).is_empty());
    }
}
