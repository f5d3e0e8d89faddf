//! CSV formats: the dataset file (`y,x1,...,xp,sx,sy`) and the ground-truth
//! sidecar (`row,label,outlier_type,beta_component`).

use std::io::{Read, Write};

use crate::error::{Result, SrmrError};
use crate::model::SpatialDataset;
use crate::simgen::LabeledDataset;

fn csv_error(e: csv::Error) -> SrmrError {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => SrmrError::Io(io.to_string()),
        kind => SrmrError::Parse {
            line,
            message: format!("{kind:?}"),
        },
    }
}

fn parse_f64(field: &str, line: usize, column: &str) -> Result<f64> {
    let v: f64 = field.trim().parse().map_err(|_| SrmrError::Parse {
        line,
        message: format!("column '{column}': '{field}' is not a number"),
    })?;
    if !v.is_finite() {
        return Err(SrmrError::Parse {
            line,
            message: format!("column '{column}': non-finite value '{field}'"),
        });
    }
    Ok(v)
}

pub fn dataset_header(p: usize) -> Vec<String> {
    let mut h = vec!["y".to_string()];
    h.extend((1..=p).map(|j| format!("x{j}")));
    h.push("sx".into());
    h.push("sy".into());
    h
}

/// Reads a dataset CSV; the intercept column is added here.
pub fn read_dataset<R: Read>(reader: R) -> Result<SpatialDataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(csv_error)?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if header.len() < 3 {
        return Err(SrmrError::Parse {
            line: 1,
            message: "header must be y,x1,...,xp,sx,sy".into(),
        });
    }
    let p = header.len() - 3;
    if header != dataset_header(p) {
        return Err(SrmrError::Parse {
            line: 1,
            message: format!(
                "header '{}' does not match '{}'",
                header.join(","),
                dataset_header(p).join(",")
            ),
        });
    }
    let mut y = Vec::new();
    let mut predictors = Vec::new();
    let mut coords = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != header.len() {
            return Err(SrmrError::Parse {
                line,
                message: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        let values = record
            .iter()
            .zip(&header)
            .map(|(f, h)| parse_f64(f, line, h))
            .collect::<Result<Vec<f64>>>()?;
        y.push(values[0]);
        predictors.push(values[1..=p].to_vec());
        coords.push([values[p + 1], values[p + 2]]);
    }
    if y.is_empty() {
        return Err(SrmrError::EmptyData("dataset file has no rows".into()));
    }
    SpatialDataset::from_predictors(y, &predictors, coords)
}

/// Writes a dataset CSV with shortest round-trip number formatting.
pub fn write_dataset<W: Write>(ds: &SpatialDataset, writer: W) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    let p = ds.p();
    wtr.write_record(dataset_header(p)).map_err(csv_error)?;
    let mut fields = Vec::with_capacity(p + 3);
    for i in 0..ds.n() {
        fields.clear();
        fields.push(ds.y()[i].to_string());
        for j in 1..=p {
            fields.push(ds.x()[(i, j)].to_string());
        }
        let s = ds.coords()[i];
        fields.push(s[0].to_string());
        fields.push(s[1].to_string());
        wtr.write_record(&fields).map_err(csv_error)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Ground truth of a labelled dataset as stored in the sidecar file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Truth {
    pub labels: Vec<usize>,
    pub type1: Vec<usize>,
    pub type2: Vec<usize>,
    pub beta_component: Vec<usize>,
}

impl Truth {
    pub fn n(&self) -> usize {
        self.labels.len()
    }
}

impl From<&LabeledDataset> for Truth {
    fn from(l: &LabeledDataset) -> Self {
        Truth {
            labels: l.true_labels.clone(),
            type1: l.true_type1.clone(),
            type2: l.true_type2.clone(),
            beta_component: l.beta_component.clone(),
        }
    }
}

pub fn write_truth<W: Write>(truth: &Truth, writer: W) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    wtr.write_record(["row", "label", "outlier_type", "beta_component"])
        .map_err(csv_error)?;
    let mut kind = vec!["none"; truth.n()];
    for &i in &truth.type1 {
        kind[i] = "type1";
    }
    for &i in &truth.type2 {
        kind[i] = "type2";
    }
    for i in 0..truth.n() {
        wtr.write_record([
            i.to_string(),
            truth.labels[i].to_string(),
            kind[i].to_string(),
            truth.beta_component[i].to_string(),
        ])
        .map_err(csv_error)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_truth<R: Read>(reader: R) -> Result<Truth> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(csv_error)?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if header != ["row", "label", "outlier_type", "beta_component"] {
        return Err(SrmrError::Parse {
            line: 1,
            message: "header must be row,label,outlier_type,beta_component".into(),
        });
    }
    let mut truth = Truth {
        labels: Vec::new(),
        type1: Vec::new(),
        type2: Vec::new(),
        beta_component: Vec::new(),
    };
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let int = |j: usize| -> Result<usize> {
            record[j].trim().parse().map_err(|_| SrmrError::Parse {
                line,
                message: format!("'{}' is not a non-negative integer", &record[j]),
            })
        };
        let row = int(0)?;
        if row != truth.n() {
            return Err(SrmrError::Parse {
                line,
                message: format!("row {row} out of order, expected {}", truth.n()),
            });
        }
        truth.labels.push(int(1)?);
        truth.beta_component.push(int(3)?);
        match record[2].trim() {
            "none" => {}
            "type1" => truth.type1.push(row),
            "type2" => truth.type2.push(row),
            other => {
                return Err(SrmrError::Parse {
                    line,
                    message: format!("outlier_type '{other}' not one of none, type1, type2"),
                })
            }
        }
    }
    Ok(truth)
}
