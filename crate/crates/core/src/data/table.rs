//! Comma-delimited numeric tables for regression.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Targets};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Per-column affine transform `(x − mean) / std`. Constant columns carry `std = 0`
/// and map to zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub columns: Vec<String>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardization {
    pub fn fit(columns: Vec<String>, x: &Tensor) -> Self {
        let (n, d) = (x.rows(), x.cols());
        let mut mean = vec![0.0; d];
        for row in x.rows_iter() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n.max(1) as f64);
        let mut var = vec![0.0; d];
        for row in x.rows_iter() {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m).powi(2);
            }
        }
        let std = var
            .into_iter()
            .zip(&mean)
            .map(|(s, m)| {
                let sd = (s / n.max(1) as f64).sqrt();
                if sd <= 1e-12 * m.abs().max(1.0) {
                    0.0
                } else {
                    sd
                }
            })
            .collect();
        Self { columns, mean, std }
    }

    pub fn apply(&self, x: &Tensor) -> Tensor {
        let mut out = x.clone();
        for i in 0..out.rows() {
            for ((v, m), s) in out.row_mut(i).iter_mut().zip(&self.mean).zip(&self.std) {
                *v = if *s == 0.0 { 0.0 } else { (*v - m) / s };
            }
        }
        out
    }

    /// Undo [`apply`](Self::apply). Constant columns come back as their mean.
    pub fn invert(&self, z: &Tensor) -> Tensor {
        let mut out = z.clone();
        for i in 0..out.rows() {
            for ((v, m), s) in out.row_mut(i).iter_mut().zip(&self.mean).zip(&self.std) {
                *v = *v * s + m;
            }
        }
        out
    }
}

/// Load a header-led CSV; `target` names the response column (default: last).
pub fn load_regression_table(path: impl AsRef<Path>, target: Option<&str>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path.file_stem().map_or_else(|| "table".to_string(), |s| s.to_string_lossy().into_owned());
    parse_regression_table(file, &name, target)
}

pub fn parse_regression_table(reader: impl std::io::Read, name: &str, target: Option<&str>) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Data(format!("unreadable header: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.len() < 2 {
        return Err(Error::Data("need at least one feature column and a target column".into()));
    }
    let t = match target {
        Some(t) => header
            .iter()
            .position(|h| h == t)
            .ok_or_else(|| Error::Data(format!("target column '{t}' not in header {header:?}")))?,
        None => header.len() - 1,
    };
    let mut features = Vec::new();
    let mut values = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Data(format!("row {row}: {e}")))?;
        if rec.len() != header.len() {
            return Err(Error::Data(format!(
                "row {row}: {} fields, header has {}",
                rec.len(),
                header.len()
            )));
        }
        for (j, cell) in rec.iter().enumerate() {
            let v: f64 = cell.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| {
                Error::Data(format!("row {row}, column {} ('{}'): not a number: {cell:?}", j + 1, header[j]))
            })?;
            if j == t {
                values.push(v);
            } else {
                features.push(v);
            }
        }
    }
    if values.is_empty() {
        return Err(Error::Data("table has no data rows".into()));
    }
    let d = header.len() - 1;
    let raw = Tensor::matrix(values.len(), d, features)?;
    let columns = header.into_iter().enumerate().filter(|&(j, _)| j != t).map(|(_, h)| h).collect();
    let standardization = Standardization::fit(columns, &raw);
    let mut ds = Dataset::new(name, standardization.apply(&raw), Targets::Values(values))?;
    ds.standardization = Some(standardization);
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(s: &str) -> Result<Dataset> {
        parse_regression_table(s.as_bytes(), "t", None)
    }

    #[test]
    fn shapes_and_target_column() {
        let ds = parse("a,b,y\n1,2,10\n2,4,20\n3,9,30\n").unwrap();
        assert_eq!(ds.features.shape(), &[3, 2]);
        assert_eq!(ds.targets, Targets::Values(vec![10.0, 20.0, 30.0]));
        let ds = parse_regression_table("y,a\n5,1\n6,2\n".as_bytes(), "t", Some("y")).unwrap();
        assert_eq!(ds.targets, Targets::Values(vec![5.0, 6.0]));
        assert_eq!(ds.standardization.unwrap().columns, vec!["a"]);
    }

    #[test]
    fn standardized_columns() {
        let ds = parse("a,c,y\n1,7,0\n2,7,0\n3,7,0\n").unwrap();
        let col = |j: usize| ds.features.rows_iter().map(|r| r[j]).collect::<Vec<_>>();
        assert_eq!(col(1), vec![0.0; 3]);
        let a = col(0);
        assert!(a.iter().sum::<f64>().abs() < 1e-12);
        assert!((a.iter().map(|v| v * v).sum::<f64>() / 3.0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bad_cells_cite_their_row() {
        let err = parse("a,y\n1,2\nabc,3\n").unwrap_err().to_string();
        assert!(err.contains("row 2"), "{err}");
        assert!(parse("a,y\n1,2\n3\n").is_err());
        assert!(parse_regression_table("a,y\n1,2\n".as_bytes(), "t", Some("z")).is_err());
        assert!(parse("a,y\n").is_err());
    }

    proptest! {
        #[test]
        fn standardization_inverts(vals in proptest::collection::vec(-1e3f64..1e3, 12)) {
            let x = Tensor::matrix(4, 3, vals).unwrap();
            let st = Standardization::fit(vec!["a".into(), "b".into(), "c".into()], &x);
            let back = st.invert(&st.apply(&x));
            for j in 0..3 {
                if st.std[j] == 0.0 {
                    continue;
                }
                for i in 0..4 {
                    prop_assert!((back.row(i)[j] - x.row(i)[j]).abs() < 1e-10 * x.row(i)[j].abs().max(1.0));
                }
            }
        }
    }
}
