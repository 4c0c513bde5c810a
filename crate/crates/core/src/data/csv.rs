//! Dataset CSV: header `y,w,x1,...,xp` with the `w` column optional.
//!
//! `w` holds background quadrature weights; it must be empty or 0 on presence
//! rows. Lines starting with `#` are comments. The domain area is not stored.

use std::io::{Read, Write};

use nalgebra::DMatrix;

use super::dataset::Dataset;
use crate::error::DataError;

pub fn read_csv<R: Read>(reader: R, domain_area: f64) -> Result<Dataset, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let header_line = || 1;
    let headers = rdr
        .headers()
        .map_err(|e| DataError::Malformed {
            line: header_line(),
            message: e.to_string(),
        })?
        .clone();
    if headers.get(0) != Some("y") {
        return Err(DataError::Malformed {
            line: header_line(),
            message: "first column must be `y`".into(),
        });
    }
    let has_w = headers.get(1) == Some("w");
    let first_feature = if has_w { 2 } else { 1 };
    let p = headers.len().saturating_sub(first_feature);
    if p == 0 {
        return Err(DataError::Malformed {
            line: header_line(),
            message: "no feature columns".into(),
        });
    }

    let mut labels = Vec::new();
    let mut values = Vec::new();
    let mut weights: Vec<Option<f64>> = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| DataError::Malformed {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let bad = |message: String| DataError::Malformed { line, message };
        if record.len() != headers.len() {
            return Err(bad(format!(
                "expected {} fields, found {}",
                headers.len(),
                record.len()
            )));
        }
        let y = match &record[0] {
            "1" => true,
            "0" => false,
            other => return Err(bad(format!("label must be 0 or 1, got `{other}`"))),
        };
        let w = if has_w {
            let raw = &record[1];
            if raw.is_empty() {
                None
            } else {
                let v: f64 = raw
                    .parse()
                    .map_err(|_| bad(format!("weight `{raw}` is not a number")))?;
                if y && v != 0.0 {
                    return Err(bad("presence rows must have an empty or zero weight".into()));
                }
                if y {
                    None
                } else {
                    Some(v)
                }
            }
        } else {
            None
        };
        for field in record.iter().skip(first_feature) {
            let v: f64 = field
                .parse()
                .map_err(|_| bad(format!("feature `{field}` is not a number")))?;
            if !v.is_finite() {
                return Err(bad(format!("feature `{field}` is not finite")));
            }
            values.push(v);
        }
        if !y {
            weights.push(w);
        }
        labels.push(y);
    }

    let quad_weights = if weights.iter().all(Option::is_none) {
        None
    } else if weights.iter().all(Option::is_some) {
        Some(weights.into_iter().flatten().collect())
    } else {
        return Err(DataError::InvalidArgument(
            "either every background row has a weight or none does".into(),
        ));
    };
    let x = DMatrix::from_row_slice(labels.len(), p, &values);
    Dataset::new(labels, x, domain_area, quad_weights)
}

/// Writes `data` as CSV, preceded by `# `-prefixed comment lines.
pub fn write_csv<W: Write>(mut out: W, data: &Dataset, comments: &[String]) -> Result<(), DataError> {
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    let has_w = data.quad_weights().is_some();
    let mut header = vec!["y".to_string()];
    if has_w {
        header.push("w".into());
    }
    header.extend((1..=data.dim()).map(|j| format!("x{j}")));
    writeln!(out, "{}", header.join(","))?;
    let x = data.features();
    for i in 0..data.len() {
        let mut fields = vec![if data.is_presence(i) { "1" } else { "0" }.to_string()];
        if has_w {
            fields.push(if data.is_presence(i) {
                String::new()
            } else {
                data.row_weight(i).to_string()
            });
        }
        fields.extend((0..data.dim()).map(|j| x[(i, j)].to_string()));
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}
