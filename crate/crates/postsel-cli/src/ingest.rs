//! CSV ingestion: covariate columns plus response columns, with missing
//! values dropped and reported.

use nalgebra::{DMatrix, DVector};
use postsel::model_family::{Dataset, FamilyKind, Response};
use postsel::{Error, Result};

pub struct IngestReport {
    pub dataset: Dataset,
    pub dropped_rows: usize,
}

fn is_missing(cell: &str) -> bool {
    let c = cell.trim();
    c.is_empty() || c.eq_ignore_ascii_case("na") || c.eq_ignore_ascii_case("nan") || c == "?"
}

/// Read a headered CSV into a dataset.
///
/// Gaussian/logistic: the response column is named by `response`; Cox: the
/// `time` and `status` columns are used. Every other column is a numeric
/// feature. Rows with missing values are dropped and counted. Unless
/// `no_intercept` is set (or the family is Cox, which has no intercept), an
/// unpenalized all-ones `intercept` column is prepended.
pub fn ingest_csv(path: &str, family: FamilyKind, response: Option<&str>, no_intercept: bool) -> Result<IngestReport> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::InvalidInput(format!("cannot read {path}: {e}")))?;
    let headers: Vec<String> =
        reader.headers().map_err(|e| Error::InvalidInput(format!("bad header row: {e}")))?.iter().map(String::from).collect();

    let response_cols: Vec<&str> = match family {
        FamilyKind::Cox => vec!["time", "status"],
        _ => {
            let name = response.ok_or_else(|| {
                Error::InvalidInput("gaussian/logistic ingestion needs --response <column>".into())
            })?;
            vec![name]
        }
    };
    let mut response_idx = Vec::new();
    for rc in &response_cols {
        let idx = headers
            .iter()
            .position(|h| h == rc)
            .ok_or_else(|| Error::InvalidInput(format!("response column `{rc}` not found in header")))?;
        response_idx.push(idx);
    }
    let feature_idx: Vec<usize> = (0..headers.len()).filter(|i| !response_idx.contains(i)).collect();
    if feature_idx.is_empty() {
        return Err(Error::InvalidInput("no feature columns left after removing response columns".into()));
    }

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut resp_rows: Vec<Vec<f64>> = Vec::new();
    let mut dropped = 0usize;
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::InvalidInput(format!("row {}: {e}", line + 2)))?;
        if record.len() != headers.len() {
            return Err(Error::InvalidInput(format!(
                "row {}: expected {} fields, found {}",
                line + 2,
                headers.len(),
                record.len()
            )));
        }
        if record.iter().any(is_missing) {
            dropped += 1;
            continue;
        }
        let parse = |idx: usize| -> Result<f64> {
            record[idx].parse::<f64>().map_err(|_| {
                Error::InvalidInput(format!(
                    "row {}, column `{}`: non-numeric value `{}`",
                    line + 2,
                    headers[idx],
                    &record[idx]
                ))
            })
        };
        let feat: Vec<f64> = feature_idx.iter().map(|&i| parse(i)).collect::<Result<_>>()?;
        let resp: Vec<f64> = response_idx.iter().map(|&i| parse(i)).collect::<Result<_>>()?;
        rows.push(feat);
        resp_rows.push(resp);
    }
    if rows.is_empty() {
        return Err(Error::InvalidInput("no usable rows after dropping missing values".into()));
    }

    let n = rows.len();
    let intercept = !no_intercept && family != FamilyKind::Cox;
    let p_feat = feature_idx.len();
    let offset = usize::from(intercept);
    let mut x = DMatrix::zeros(n, p_feat + offset);
    let mut names = Vec::with_capacity(p_feat + offset);
    let mut unpenalized = Vec::new();
    if intercept {
        for i in 0..n {
            x[(i, 0)] = 1.0;
        }
        names.push("intercept".to_string());
        unpenalized.push(0);
    }
    for (k, &idx) in feature_idx.iter().enumerate() {
        names.push(headers[idx].clone());
        for i in 0..n {
            x[(i, k + offset)] = rows[i][k];
        }
    }

    let response = match family {
        FamilyKind::Gaussian => Response::Continuous(DVector::from_iterator(n, resp_rows.iter().map(|r| r[0]))),
        FamilyKind::Logistic => Response::Binary(DVector::from_iterator(n, resp_rows.iter().map(|r| r[0]))),
        FamilyKind::Cox => Response::Survival {
            time: DVector::from_iterator(n, resp_rows.iter().map(|r| r[0])),
            status: DVector::from_iterator(n, resp_rows.iter().map(|r| r[1])),
        },
    };
    let dataset = Dataset::with_names(x, response, unpenalized, names)?;
    Ok(IngestReport { dataset, dropped_rows: dropped })
}

/// Read a headered all-numeric CSV as a raw data matrix.
pub fn ingest_matrix(path: &str) -> Result<(DMatrix<f64>, Vec<String>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::InvalidInput(format!("cannot read {path}: {e}")))?;
    let names: Vec<String> =
        reader.headers().map_err(|e| Error::InvalidInput(format!("bad header row: {e}")))?.iter().map(String::from).collect();
    let p = names.len();
    let mut values: Vec<f64> = Vec::new();
    let mut n = 0usize;
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::InvalidInput(format!("row {}: {e}", line + 2)))?;
        if record.len() != p {
            return Err(Error::InvalidInput(format!("row {}: expected {p} fields", line + 2)));
        }
        if record.iter().any(is_missing) {
            continue;
        }
        for (j, cell) in record.iter().enumerate() {
            let v = cell.parse::<f64>().map_err(|_| {
                Error::InvalidInput(format!("row {}, column `{}`: non-numeric value `{cell}`", line + 2, names[j]))
            })?;
            values.push(v);
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::InvalidInput("no usable rows after dropping missing values".into()));
    }
    Ok((DMatrix::from_row_slice(n, p, &values), names))
}

/// Read a covariance matrix (headered CSV, square numeric block).
pub fn ingest_covariance(path: &str) -> Result<(DMatrix<f64>, Vec<String>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::InvalidInput(format!("cannot read {path}: {e}")))?;
    let names: Vec<String> =
        reader.headers().map_err(|e| Error::InvalidInput(format!("bad header row: {e}")))?.iter().map(String::from).collect();
    let p = names.len();
    let mut values = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::InvalidInput(format!("row {}: {e}", line + 2)))?;
        if record.len() != p {
            return Err(Error::InvalidInput(format!("row {}: expected {p} fields", line + 2)));
        }
        for (j, cell) in record.iter().enumerate() {
            let v = cell.parse::<f64>().map_err(|_| {
                Error::InvalidInput(format!("row {}, column `{}`: non-numeric value `{cell}`", line + 2, names[j]))
            })?;
            values.push(v);
        }
    }
    if values.len() != p * p {
        return Err(Error::InvalidInput(format!("covariance must be {p}x{p}, found {} rows", values.len() / p)));
    }
    Ok((DMatrix::from_row_slice(p, p, &values), names))
}
