//! On-disk formats: matrix and measure JSON, trace CSV, contour grids.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use suot_core::barycenter::{IterRecord, Monitor};
use suot_core::{GaussianMeasure, SpdMatrix, SymMatrix};

use crate::error::{HarnessError, Result};

/// Largest |m_ij − m_ji| accepted when reading a symmetric matrix.
pub const SYMMETRY_TOL: f64 = 1e-9;

/// Square matrix stored row-major: `{"d": 2, "data": [a, b, c, d]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixJson {
    pub d: usize,
    pub data: Vec<f64>,
}

impl MatrixJson {
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        let d = m.nrows();
        let data = (0..d).flat_map(|i| (0..d).map(move |j| m[(i, j)])).collect();
        Self { d, data }
    }

    pub fn from_spd(m: &SpdMatrix) -> Self {
        Self::from_matrix(m.as_matrix())
    }

    pub fn to_matrix(&self) -> std::result::Result<DMatrix<f64>, String> {
        if self.d == 0 || self.data.len() != self.d * self.d {
            return Err(format!(
                "matrix with d = {} needs {} entries, got {}",
                self.d,
                self.d * self.d,
                self.data.len()
            ));
        }
        Ok(DMatrix::from_row_slice(self.d, self.d, &self.data))
    }

    pub fn to_sym(&self) -> std::result::Result<SymMatrix, String> {
        SymMatrix::from_matrix_strict(self.to_matrix()?, SYMMETRY_TOL).map_err(|e| e.to_string())
    }

    pub fn to_spd(&self) -> std::result::Result<SpdMatrix, String> {
        SpdMatrix::new(self.to_sym()?).map_err(|e| e.to_string())
    }
}

/// `{"mass": 1.0, "mean": [..], "cov": {..}}`. Mass defaults to 1 and mean to zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureJson {
    #[serde(default = "one")]
    pub mass: f64,
    #[serde(default)]
    pub mean: Vec<f64>,
    pub cov: MatrixJson,
}

fn one() -> f64 {
    1.0
}

impl MeasureJson {
    pub fn from_measure(g: &GaussianMeasure) -> Self {
        Self {
            mass: g.mass(),
            mean: g.mean().iter().copied().collect(),
            cov: MatrixJson::from_spd(g.cov()),
        }
    }

    pub fn to_measure(&self) -> std::result::Result<GaussianMeasure, String> {
        let cov = self.cov.to_spd()?;
        let mean = if self.mean.is_empty() {
            DVector::zeros(cov.dim())
        } else {
            DVector::from_vec(self.mean.clone())
        };
        GaussianMeasure::new(self.mass, mean, cov).map_err(|e| e.to_string())
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| HarnessError::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    ensure_parent(path)?;
    let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|source| HarnessError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    w.write_all(b"\n")
        .and_then(|_| w.flush())
        .map_err(|e| HarnessError::io(path, e))
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => ensure_dir(p),
        _ => Ok(()),
    }
}

pub fn read_measure(path: &Path) -> Result<GaussianMeasure> {
    let m: MeasureJson = read_json(path)?;
    m.to_measure()
        .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
}

pub fn measure_path(dir: &Path, i: usize) -> PathBuf {
    dir.join(format!("measure_{i:03}.json"))
}

pub fn write_corpus(dir: &Path, measures: &[GaussianMeasure]) -> Result<()> {
    ensure_dir(dir)?;
    for (i, g) in measures.iter().enumerate() {
        write_json(&measure_path(dir, i), &MeasureJson::from_measure(g))?;
    }
    Ok(())
}

/// Reads every `measure_*.json` in `dir`, in file-name order.
pub fn read_corpus(dir: &Path) -> Result<Vec<GaussianMeasure>> {
    let entries = fs::read_dir(dir).map_err(|e| HarnessError::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| HarnessError::io(dir, e))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if name.starts_with("measure_") && name.ends_with(".json") {
            paths.push(path);
        }
    }
    paths.sort();
    if paths.is_empty() {
        return Err(HarnessError::Config(format!(
            "{}: no measure_*.json files",
            dir.display()
        )));
    }
    let measures: Vec<GaussianMeasure> = paths.iter().map(|p| read_measure(p)).collect::<Result<_>>()?;
    let d = measures[0].dim();
    if let Some(bad) = paths.iter().zip(&measures).find(|(_, m)| m.dim() != d) {
        return Err(HarnessError::Config(format!(
            "{}: dimension {} differs from {d}",
            bad.0.display(),
            bad.1.dim()
        )));
    }
    Ok(measures)
}

/// Streams trace records to CSV, flushing after every row so the file can be
/// read while a run is in progress.
pub struct CsvTrace {
    path: PathBuf,
    writer: csv::Writer<File>,
    start: Instant,
    error: Option<csv::Error>,
}

impl CsvTrace {
    pub fn create(path: &Path) -> Result<Self> {
        ensure_parent(path)?;
        let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
        let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(file);
        writer
            .write_record(["iter", "loss", "grad_norm", "in_box", "ms"])
            .and_then(|_| writer.flush().map_err(csv::Error::from))
            .map_err(|source| HarnessError::Csv {
                path: path.to_path_buf(),
                source,
            })?;
        Ok(Self {
            path: path.to_path_buf(),
            writer,
            start: Instant::now(),
            error: None,
        })
    }

    /// Surfaces the first write error, if any.
    pub fn finish(mut self) -> Result<()> {
        if let Some(source) = self.error.take() {
            return Err(HarnessError::Csv {
                path: self.path,
                source,
            });
        }
        self.writer.flush().map_err(|e| HarnessError::io(&self.path, e))
    }
}

impl Monitor for CsvTrace {
    fn elapsed_ms(&mut self) -> f64 {
        self.start.elapsed().as_secs_f64() * 1e3
    }

    fn record(&mut self, rec: &IterRecord, _sigma: &SpdMatrix) {
        if self.error.is_some() {
            return;
        }
        let res = self
            .writer
            .serialize(rec)
            .and_then(|_| self.writer.flush().map_err(csv::Error::from));
        if let Err(e) = res {
            self.error = Some(e);
        }
    }
}

pub fn read_trace(path: &Path) -> Result<Vec<IterRecord>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|source| HarnessError::Csv {
        path: path.to_path_buf(),
        source,
    })?;
    rdr.deserialize()
        .collect::<std::result::Result<Vec<IterRecord>, _>>()
        .map_err(|source| HarnessError::Csv {
            path: path.to_path_buf(),
            source,
        })
}

/// Writes `x,y,density` rows for a 2-D density over a square grid.
pub fn write_contour(path: &Path, axis: &[f64], density: impl Fn(f64, f64) -> f64) -> Result<()> {
    ensure_parent(path)?;
    let csv_err = |source| HarnessError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["x", "y", "density"]).map_err(csv_err)?;
    for &y in axis {
        for &x in axis {
            w.serialize((x, y, density(x, y))).map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

/// Generic CSV writer for small tables with a fixed header.
pub fn write_rows<R: Serialize>(path: &Path, header: &[&str], rows: &[R]) -> Result<()> {
    ensure_parent(path)?;
    let csv_err = |source| HarnessError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_round_trip_is_row_major() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let j = MatrixJson::from_matrix(&m);
        assert_eq!(j.data, vec![2.0, 0.5, 0.5, 1.0]);
        assert_eq!(j.to_spd().unwrap().as_matrix(), &m);
    }

    #[test]
    fn asymmetry_beyond_tolerance_is_rejected() {
        let near = MatrixJson { d: 2, data: vec![1.0, 0.5, 0.5 + 1e-12, 1.0] };
        assert!(near.to_spd().is_ok());
        let far = MatrixJson { d: 2, data: vec![1.0, 0.5, 0.5 + 1e-6, 1.0] };
        assert!(far.to_spd().is_err());
        let indefinite = MatrixJson { d: 2, data: vec![1.0, 2.0, 2.0, 1.0] };
        assert!(indefinite.to_spd().is_err());
    }

    #[test]
    fn measure_defaults() {
        let m: MeasureJson = serde_json::from_str(r#"{"cov": {"d": 2, "data": [1, 0, 0, 1]}}"#).unwrap();
        let g = m.to_measure().unwrap();
        assert_eq!(g.mass(), 1.0);
        assert!(g.is_centered());
        assert!(serde_json::from_str::<MeasureJson>(r#"{"cov": {"d": 1, "data": [1]}, "weight": 2}"#).is_err());
    }
}
