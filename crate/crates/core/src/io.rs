//! CSV and JSON interchange: datasets (`x1,...,xn,y`), samples
//! (`value,weight`), robust weights (`index,weight`), and the model JSON
//! schema. Floats are written in shortest round-trip form so files parse back
//! to identical bits.

use std::fs;
use std::path::Path;

use serde_json::json;
use thiserror::Error;

use crate::distribution::{DistributionError, EmpiricalSample};
use crate::drr::WeightVector;
use crate::linalg::Mat;
use crate::svr::{Dataset, SvrError, SvrModel};

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    File(#[from] std::io::Error),
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Svr(#[from] Box<SvrError>),
    #[error(transparent)]
    Distribution(#[from] DistributionError),
}

impl From<SvrError> for IoError {
    fn from(e: SvrError) -> Self {
        IoError::Svr(Box::new(e))
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    fs::write(path, text)?;
    Ok(())
}

pub fn write_dataset_csv(path: &Path, d: &Dataset) -> Result<(), IoError> {
    let n = d.num_features();
    let mut out = String::new();
    for j in 0..n {
        out.push_str(&format!("x{},", j + 1));
    }
    out.push_str("y\n");
    for i in 0..d.len() {
        for j in 0..n {
            out.push_str(&format!("{},", d.features().get(i, j)));
        }
        out.push_str(&format!("{}\n", d.targets()[i]));
    }
    write_text(path, &out)
}

fn parse_field(path: &Path, line: usize, field: &str) -> Result<f64, IoError> {
    field.trim().parse::<f64>().map_err(|e| IoError::Parse {
        path: path.display().to_string(),
        line,
        message: format!("bad number {field:?}: {e}"),
    })
}

pub fn read_dataset_csv(path: &Path) -> Result<Dataset, IoError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| IoError::Parse {
        path: path.display().to_string(),
        line: 1,
        message: "empty file".into(),
    })?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.len() < 2 || cols.last() != Some(&"y") {
        return Err(IoError::Parse {
            path: path.display().to_string(),
            line: 1,
            message: "expected header x1,...,xn,y".into(),
        });
    }
    let n = cols.len() - 1;
    let mut rows = Vec::new();
    let mut ys = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != n + 1 {
            return Err(IoError::Parse {
                path: path.display().to_string(),
                line: idx + 1,
                message: format!("expected {} fields, got {}", n + 1, fields.len()),
            });
        }
        let mut row = Vec::with_capacity(n);
        for f in &fields[..n] {
            row.push(parse_field(path, idx + 1, f)?);
        }
        rows.push(row);
        ys.push(parse_field(path, idx + 1, fields[n])?);
    }
    Ok(Dataset::new(Mat::from_rows(&rows), ys).map_err(Box::new)?)
}

pub fn write_sample_csv(path: &Path, s: &EmpiricalSample) -> Result<(), IoError> {
    let mut out = String::from("value,weight\n");
    for (v, w) in s.values().iter().zip(s.weights()) {
        out.push_str(&format!("{v},{w}\n"));
    }
    write_text(path, &out)
}

pub fn read_sample_csv(path: &Path) -> Result<EmpiricalSample, IoError> {
    let text = fs::read_to_string(path)?;
    let mut values = Vec::new();
    let mut weights = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if idx == 0 {
            if line.trim() != "value,weight" {
                return Err(IoError::Parse {
                    path: path.display().to_string(),
                    line: 1,
                    message: "expected header value,weight".into(),
                });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 2 {
            return Err(IoError::Parse {
                path: path.display().to_string(),
                line: idx + 1,
                message: format!("expected 2 fields, got {}", fields.len()),
            });
        }
        values.push(parse_field(path, idx + 1, fields[0])?);
        weights.push(parse_field(path, idx + 1, fields[1])?);
    }
    Ok(EmpiricalSample::new(values, weights)?)
}

pub fn write_weights_csv(path: &Path, w: &WeightVector) -> Result<(), IoError> {
    let mut out = String::from("index,weight\n");
    for (i, q) in w.weights.iter().enumerate() {
        out.push_str(&format!("{i},{q}\n"));
    }
    write_text(path, &out)
}

/// Model JSON: `{formulation, alpha, eps, lambda, C, w or mu, b, objective,
/// linked_eps, linked_alpha}`.
pub fn model_json(model: &SvrModel) -> serde_json::Value {
    let mut obj = json!({
        "formulation": model.formulation.to_string(),
        "alpha": model.alpha,
        "eps": model.eps,
        "lambda": model.lambda,
        "C": model.cap_c,
        "b": model.intercept,
        "objective": model.objective,
        "linked_eps": [model.linked_eps.lo, model.linked_eps.hi],
        "linked_alpha": {
            "lo": model.linked_alpha.lo,
            "hi": model.linked_alpha.hi,
            "hi_inclusive": model.linked_alpha.hi_inclusive,
        },
    });
    let map = obj.as_object_mut().expect("object literal");
    if let Some(w) = &model.weights {
        map.insert("w".into(), json!(w));
    } else if let Some(mu) = &model.dual_coeffs {
        map.insert("mu".into(), json!(mu));
    }
    obj
}

pub fn write_model_json(path: &Path, model: &SvrModel) -> Result<(), IoError> {
    write_text(
        path,
        &serde_json::to_string_pretty(&model_json(model)).expect("serializable"),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case_study::simulate;

    #[test]
    fn dataset_csv_round_trips_bitwise() {
        let d = simulate(25, 99).unwrap();
        let dir = std::env::temp_dir().join("rqsvr_io_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("d.csv");
        write_dataset_csv(&path, &d).unwrap();
        let back = read_dataset_csv(&path).unwrap();
        assert_eq!(back.fingerprint(), d.fingerprint());
        // writing again produces identical bytes
        let first = std::fs::read(&path).unwrap();
        write_dataset_csv(&path, &back).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), first);
    }

    #[test]
    fn sample_csv_round_trips() {
        let s = EmpiricalSample::new(vec![0.5, -1.25, 3.0], vec![0.25, 0.25, 0.5]).unwrap();
        let dir = std::env::temp_dir().join("rqsvr_io_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("s.csv");
        write_sample_csv(&path, &s).unwrap();
        let back = read_sample_csv(&path).unwrap();
        assert_eq!(back.values(), s.values());
        assert_eq!(back.weights(), s.weights());
    }

    #[test]
    fn rejects_malformed_rows() {
        let dir = std::env::temp_dir().join("rqsvr_io_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.csv");
        std::fs::write(&path, "x1,y\n1.0\n").unwrap();
        assert!(matches!(
            read_dataset_csv(&path),
            Err(IoError::Parse { .. })
        ));
        std::fs::write(&path, "value,weight\n1.0,nope\n").unwrap();
        assert!(matches!(read_sample_csv(&path), Err(IoError::Parse { .. })));
    }
}
