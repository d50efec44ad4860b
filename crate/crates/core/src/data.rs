use std::io::Read;

use nalgebra::{DMatrix, DVector};

use crate::error::{ensure_finite, MtaError, Result};

/// A response vector paired with an `n x p` design matrix.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub column_names: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(MtaError::Shape(format!(
                "design has {} rows but response has {} entries",
                x.nrows(),
                y.len()
            )));
        }
        ensure_finite(x.as_slice(), "design matrix")?;
        ensure_finite(y.as_slice(), "response")?;
        Ok(Self {
            x,
            y,
            column_names: None,
        })
    }

    pub fn with_column_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.x.ncols() {
            return Err(MtaError::Shape(format!(
                "{} column names for {} columns",
                names.len(),
                self.x.ncols()
            )));
        }
        self.column_names = Some(names);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Rows `indices` of the dataset, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let x = self.x.select_rows(indices);
        let y = DVector::from_iterator(indices.len(), indices.iter().map(|&i| self.y[i]));
        Dataset {
            x,
            y,
            column_names: self.column_names.clone(),
        }
    }
}

/// Numeric matrix from comma-separated text.
///
/// A first row that does not parse as numbers is taken as a header and its
/// fields returned as column names. Every remaining row must have the same
/// number of finite fields.
pub fn read_matrix_csv<R: Read>(reader: R) -> Result<(DMatrix<f64>, Option<Vec<String>>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut header = None;
    let mut values = Vec::new();
    let mut ncols = 0;
    let mut nrows = 0;
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| MtaError::Io(e.to_string()))?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(row) => {
                if nrows == 0 && header.is_none() {
                    ncols = row.len();
                } else if row.len() != ncols {
                    return Err(MtaError::InvalidData(format!(
                        "line {}: {} fields, expected {ncols}",
                        line + 1,
                        row.len()
                    )));
                }
                ensure_finite(&row, "design file")?;
                values.extend(row);
                nrows += 1;
            }
            Err(_) if line == 0 => {
                ncols = rec.len();
                header = Some(rec.iter().map(str::to_owned).collect());
            }
            Err(e) => {
                return Err(MtaError::InvalidData(format!("line {}: {e}", line + 1)));
            }
        }
    }
    if nrows == 0 || ncols == 0 {
        return Err(MtaError::InvalidData("no numeric rows".into()));
    }
    Ok((DMatrix::from_row_slice(nrows, ncols, &values), header))
}
