use std::path::Path;

use serde_json::json;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub y: Vec<f64>,
    /// Rows of `x1..xd`, when the file has covariate columns.
    pub x: Option<Vec<Vec<f64>>>,
}

impl Dataset {
    pub fn covariates(&self) -> CliResult<&[Vec<f64>]> {
        self.x
            .as_deref()
            .ok_or_else(|| CliError::config("this command needs covariate columns x1..xd in the input"))
    }
}

/// Read a CSV with a required `y` column and optional `x1..xd` columns.
/// Line numbers in errors count the header as line 1.
pub fn ingest_csv(path: &Path) -> CliResult<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::io(path, e))?;
    let headers = rdr
        .headers()
        .map_err(|e| CliError::new("csv", e.to_string(), json!({ "path": path.display().to_string() })))?
        .clone();
    let y_col = headers.iter().position(|h| h == "y").ok_or_else(|| {
        CliError::new(
            "csv",
            "missing header: expected a header row with a `y` column",
            json!({ "path": path.display().to_string(), "line": 1 }),
        )
    })?;
    let mut x_cols = Vec::new();
    while let Some(c) = headers.iter().position(|h| h == format!("x{}", x_cols.len() + 1)) {
        x_cols.push(c);
    }

    let mut y = Vec::new();
    let mut x = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::new("csv", e.to_string(), json!({ "path": path.display().to_string() })))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let field = |col: usize, name: &str| -> CliResult<f64> {
            let raw = rec.get(col).unwrap_or("");
            if raw.is_empty() {
                return Err(CliError::new(
                    "missing_value",
                    format!("missing {name} at line {line}"),
                    json!({ "line": line, "column": name }),
                ));
            }
            raw.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                CliError::new(
                    "malformed_number",
                    format!("cannot parse {name} = '{raw}' at line {line}"),
                    json!({ "line": line, "column": name, "value": raw }),
                )
            })
        };
        y.push(field(y_col, "y")?);
        let mut row = Vec::with_capacity(x_cols.len());
        for (j, &c) in x_cols.iter().enumerate() {
            let name = format!("x{}", j + 1);
            let v = field(c, &name)?;
            if !(0.0..=1.0).contains(&v) {
                return Err(CliError::new(
                    "covariate_out_of_range",
                    format!("{name} = {v} at line {line} is outside [0, 1]"),
                    json!({ "line": line, "column": name, "value": v }),
                ));
            }
            row.push(v);
        }
        x.push(row);
    }
    if y.is_empty() {
        return Err(CliError::new(
            "csv",
            "input has no data rows",
            json!({ "path": path.display().to_string() }),
        ));
    }
    Ok(Dataset {
        y,
        x: (!x_cols.is_empty()).then_some(x),
    })
}
