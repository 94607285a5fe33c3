use std::collections::HashMap;
use std::path::Path;

use ndarray::{Array1, Array2};

use super::schema::{validate_row, FeatureSchema, ValidationMode};
use crate::{Error, Result};

/// Encoded survey responses with their outcome scores.
///
/// Construction always validates: entries are nonnegative, every row meets
/// the schema in report mode, and one-hot blocks sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct SurveyDataset {
    x: Array2<f64>,
    y: Array1<f64>,
    schema: FeatureSchema,
    respondent_ids: Vec<String>,
}

impl SurveyDataset {
    pub fn new(
        x: Array2<f64>,
        y: Array1<f64>,
        schema: FeatureSchema,
        respondent_ids: Vec<String>,
    ) -> Result<Self> {
        let (n, d) = x.dim();
        if n < 2 || d < 2 {
            return Err(Error::invalid(format!("dataset must be at least 2x2, got {n}x{d}")));
        }
        if d != schema.len() {
            return Err(Error::dim(format!("X has {d} columns, schema has {}", schema.len())));
        }
        if y.len() != n || respondent_ids.len() != n {
            return Err(Error::dim(format!(
                "X has {n} rows, y has {}, ids has {}",
                y.len(),
                respondent_ids.len()
            )));
        }
        for (i, yi) in y.iter().enumerate() {
            if !yi.is_finite() {
                return Err(Error::Data {
                    row: i,
                    feature: schema.outcome().to_string(),
                    message: format!("outcome {yi} is not finite"),
                });
            }
        }
        for (i, row) in x.outer_iter().enumerate() {
            let row = row.to_vec();
            if let Some((j, v)) = row.iter().enumerate().find(|(_, v)| **v < 0.0) {
                return Err(Error::Data {
                    row: i,
                    feature: schema.feature(j).name.clone(),
                    message: format!("negative value {v}"),
                });
            }
            if let Some(v) = validate_row(&row, &schema, ValidationMode::Report).into_iter().next() {
                return Err(Error::Data {
                    row: i,
                    feature: v.name.clone(),
                    message: v.to_string(),
                });
            }
        }
        Ok(SurveyDataset {
            x,
            y,
            schema,
            respondent_ids,
        })
    }

    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn y(&self) -> &Array1<f64> {
        &self.y
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn respondent_ids(&self) -> &[String] {
        &self.respondent_ids
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    /// Writes the dataset as CSV: optional id column, every feature in schema
    /// order, then the outcome column.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<&str> = Vec::with_capacity(self.d() + 2);
        if let Some(id) = self.schema.id_column() {
            header.push(id);
        }
        header.extend(self.schema.features().iter().map(|f| f.name.as_str()));
        header.push(self.schema.outcome());
        w.write_record(&header)?;
        for i in 0..self.n() {
            let mut rec: Vec<String> = Vec::with_capacity(header.len());
            if self.schema.id_column().is_some() {
                rec.push(self.respondent_ids[i].clone());
            }
            rec.extend(self.x.row(i).iter().map(|v| v.to_string()));
            rec.push(self.y[i].to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Reads an already-encoded survey CSV against a JSON schema.
///
/// Columns are matched by header name. Columns other than the features, the
/// outcome and the optional id column are rejected. Without an id column,
/// respondents are named by their 0-based data row.
pub fn load_dataset(csv_path: &Path, schema_path: &Path) -> Result<SurveyDataset> {
    let schema = FeatureSchema::from_json_file(schema_path)?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(csv_path)?;
    let headers = reader.headers()?.clone();
    let pos: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h.trim(), i)).collect();

    let lookup = |name: &str| pos.get(name).copied().ok_or_else(|| Error::MissingColumn(name.to_string()));
    let feature_cols: Vec<usize> = schema
        .features()
        .iter()
        .map(|f| lookup(&f.name))
        .collect::<Result<_>>()?;
    let outcome_col = lookup(schema.outcome())?;
    let id_col = schema.id_column().map(lookup).transpose()?;

    let known = feature_cols.len() + 1 + usize::from(id_col.is_some());
    if headers.len() != known {
        let extra: Vec<&str> = headers
            .iter()
            .enumerate()
            .filter(|(i, _)| !feature_cols.contains(i) && *i != outcome_col && Some(*i) != id_col)
            .map(|(_, h)| h)
            .collect();
        return Err(Error::Schema(format!("CSV has columns not declared in the schema: {extra:?}")));
    }

    let d = schema.len();
    let mut flat = Vec::new();
    let mut y = Vec::new();
    let mut ids = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec?;
        let parse = |col: usize, name: &str| -> Result<f64> {
            let raw = rec.get(col).unwrap_or("").trim();
            raw.parse::<f64>().map_err(|_| Error::Data {
                row,
                feature: name.to_string(),
                message: format!("cannot parse `{raw}` as a number"),
            })
        };
        for (j, &col) in feature_cols.iter().enumerate() {
            flat.push(parse(col, &schema.feature(j).name)?);
        }
        y.push(parse(outcome_col, schema.outcome())?);
        ids.push(match id_col {
            Some(c) => rec.get(c).unwrap_or("").to_string(),
            None => row.to_string(),
        });
    }
    let n = y.len();
    let x = Array2::from_shape_vec((n, d), flat).map_err(|e| Error::dim(e.to_string()))?;
    SurveyDataset::new(x, Array1::from(y), schema, ids)
}
