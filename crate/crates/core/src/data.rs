//! Count-response datasets and their CSV form: a header row, the response
//! column, predictor columns and an optional `lambda_star` column.

use std::path::Path;

use crate::error::{Result, StarError};

pub const LAMBDA_STAR: &str = "lambda_star";

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub y: Vec<u64>,
    pub names: Vec<String>,
    /// Predictor columns, one vector per name.
    pub columns: Vec<Vec<f64>>,
    pub lambda_star: Option<Vec<f64>>,
}

/// Parses a count, rejecting negative and non-integer values.
pub fn parse_count(field: &str, row: usize) -> Result<u64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| StarError::Input(format!("row {row}: response {field:?} is not a number")))?;
    if !v.is_finite() || v < 0.0 || v.fract() != 0.0 {
        return Err(StarError::Input(format!(
            "row {row}: response {v} is not a nonnegative integer"
        )));
    }
    Ok(v as u64)
}

impl Dataset {
    pub fn new(y: Vec<u64>, names: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        let d = Dataset {
            y,
            names,
            columns,
            lambda_star: None,
        };
        d.validate()?;
        Ok(d)
    }

    fn validate(&self) -> Result<()> {
        if self.names.len() != self.columns.len() {
            return Err(StarError::Input("predictor names and columns differ in number".into()));
        }
        for (name, col) in self.names.iter().zip(&self.columns) {
            if col.len() != self.y.len() {
                return Err(StarError::Input(format!(
                    "predictor {name} has {} rows, response has {}",
                    col.len(),
                    self.y.len()
                )));
            }
            if let Some(i) = col.iter().position(|v| !v.is_finite()) {
                return Err(StarError::Input(format!("predictor {name} is not finite at row {i}")));
            }
        }
        if let Some(ls) = &self.lambda_star {
            if ls.len() != self.y.len() {
                return Err(StarError::Input("lambda_star length differs from the response".into()));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.columns[i].as_slice())
            .ok_or_else(|| StarError::Input(format!("no predictor named {name:?}")))
    }

    /// Row `i` as a predictor vector in column order.
    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            y: idx.iter().map(|&i| self.y[i]).collect(),
            names: self.names.clone(),
            columns: self
                .columns
                .iter()
                .map(|c| idx.iter().map(|&i| c[i]).collect())
                .collect(),
            lambda_star: self
                .lambda_star
                .as_ref()
                .map(|l| idx.iter().map(|&i| l[i]).collect()),
        }
    }

    /// Reads a CSV file. Every column other than the response and
    /// `lambda_star` is a predictor.
    pub fn read_csv<P: AsRef<Path>>(path: P, response: &str) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
        let yi = headers
            .iter()
            .position(|h| h == response)
            .ok_or_else(|| StarError::Input(format!("no response column {response:?}")))?;
        let li = headers.iter().position(|h| h == LAMBDA_STAR);
        let pred: Vec<usize> = (0..headers.len()).filter(|&i| i != yi && Some(i) != li).collect();
        let mut y = Vec::new();
        let mut columns = vec![Vec::new(); pred.len()];
        let mut lambda = li.map(|_| Vec::new());
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            y.push(parse_count(&rec[yi], row + 1)?);
            for (c, &j) in pred.iter().enumerate() {
                let v: f64 = rec[j].trim().parse().map_err(|_| {
                    StarError::Input(format!("row {}: {:?} is not a number", row + 1, &rec[j]))
                })?;
                columns[c].push(v);
            }
            if let (Some(l), Some(j)) = (lambda.as_mut(), li) {
                l.push(rec[j].trim().parse().map_err(|_| {
                    StarError::Input(format!("row {}: bad lambda_star {:?}", row + 1, &rec[j]))
                })?);
            }
        }
        if y.is_empty() {
            return Err(StarError::Input("dataset has no rows".into()));
        }
        let d = Dataset {
            y,
            names: pred.iter().map(|&i| headers[i].clone()).collect(),
            columns,
            lambda_star: lambda,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn write_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["y".to_string()];
        header.extend(self.names.iter().cloned());
        if self.lambda_star.is_some() {
            header.push(LAMBDA_STAR.into());
        }
        w.write_record(&header)?;
        for i in 0..self.n() {
            let mut rec = vec![self.y[i].to_string()];
            rec.extend(self.columns.iter().map(|c| c[i].to_string()));
            if let Some(l) = &self.lambda_star {
                rec.push(l[i].to_string());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}
