//! File formats: trace CSVs with JSON sidecar manifests, Koopman model
//! persistence, occupancy-field snapshots, and cluster/region exports.
//!
//! All floating-point values are written with the shortest round-trip
//! representation, so re-reading reproduces values bit-exactly and repeated
//! runs produce byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::coverage::{ObjectiveSpace, OccupancyField};
use crate::error::{Error, Result};
use crate::geometry::ConvexRegion;
use crate::koopman::{KoopmanModel, ObservableMap};
use crate::types::{ControlInput, DataTrace, State, TraceOrigin};

/// Sidecar manifest describing one trace file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceManifest {
    pub n: usize,
    pub w: usize,
    pub dt: f64,
    pub seed: u64,
    pub origin: TraceOrigin,
}

fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// Writes `trace` as CSV (`t,x0..,u0..`; final row with empty input
/// columns) plus a JSON sidecar manifest.
pub fn write_trace_csv(csv_path: &Path, trace: &DataTrace<f64>) -> Result<()> {
    let n = trace.state_dim();
    let w = trace.input_dim();
    let mut out = String::new();
    out.push('t');
    for i in 0..n {
        let _ = write!(out, ",x{i}");
    }
    for i in 0..w {
        let _ = write!(out, ",u{i}");
    }
    out.push('\n');
    for (k, state) in trace.states().iter().enumerate() {
        let _ = write!(out, "{}", k as f64 * trace.dt());
        for v in state.values() {
            let _ = write!(out, ",{v}");
        }
        if k < trace.steps() {
            for v in trace.inputs()[k].values() {
                let _ = write!(out, ",{v}");
            }
        } else {
            for _ in 0..w {
                out.push(',');
            }
        }
        out.push('\n');
    }
    fs::write(csv_path, out)?;
    let manifest = TraceManifest {
        n,
        w,
        dt: trace.dt(),
        seed: trace.seed(),
        origin: trace.origin(),
    };
    fs::write(
        sidecar_path(csv_path),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(())
}

/// Reads a trace CSV and its sidecar manifest back into a [`DataTrace`].
pub fn read_trace_csv(csv_path: &Path) -> Result<DataTrace<f64>> {
    let manifest: TraceManifest =
        serde_json::from_str(&fs::read_to_string(sidecar_path(csv_path))?)?;
    let text = fs::read_to_string(csv_path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        message: "empty trace file".into(),
    })?;
    let expected_cols = 1 + manifest.n + manifest.w;
    if header.split(',').count() != expected_cols {
        return Err(Error::Parse {
            line: 1,
            message: format!("header has wrong column count for n={} w={}", manifest.n, manifest.w),
        });
    }
    let mut states = Vec::new();
    let mut inputs = Vec::new();
    for (idx, line) in lines {
        let row = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != expected_cols {
            return Err(Error::Parse {
                line: row,
                message: format!("expected {expected_cols} columns, got {}", cells.len()),
            });
        }
        let parse = |cell: &str| -> Result<f64> {
            cell.trim().parse::<f64>().map_err(|_| Error::Parse {
                line: row,
                message: format!("non-numeric cell '{cell}'"),
            })
        };
        let mut state = Vec::with_capacity(manifest.n);
        for cell in &cells[1..1 + manifest.n] {
            state.push(parse(cell)?);
        }
        states.push(State::new(state).map_err(|_| Error::Parse {
            line: row,
            message: "non-finite state".into(),
        })?);
        let input_cells = &cells[1 + manifest.n..];
        if input_cells.iter().all(|c| c.trim().is_empty()) {
            continue; // final row
        }
        let mut input = Vec::with_capacity(manifest.w);
        for cell in input_cells {
            input.push(parse(cell)?);
        }
        inputs.push(ControlInput::new(input).map_err(|_| Error::Parse {
            line: row,
            message: "non-finite input".into(),
        })?);
    }
    DataTrace::new(states, inputs, manifest.dt, manifest.seed, manifest.origin)
}

/// Reads every `.csv` trace in a directory, sorted by file name.
pub fn read_traces_dir(dir: &Path) -> Result<Vec<DataTrace<f64>>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().map_or(false, |e| e == "csv"))
        .collect();
    paths.sort();
    paths.iter().map(|p| read_trace_csv(p)).collect()
}

/// JSON manifest of a stored Koopman model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelManifest {
    pub n: usize,
    pub w: usize,
    pub m_rff: usize,
    pub lengthscale: f64,
    pub seed: u64,
    pub reg: f64,
    pub val_rmse: Option<f64>,
    pub a_csv: String,
    pub b_csv: String,
}

fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut out = String::new();
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            if c > 0 {
                out.push(',');
            }
            let _ = write!(out, "{}", m[(r, c)]);
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

fn read_matrix_csv(path: &Path, rows: usize, cols: usize, name: &str) -> Result<DMatrix<f64>> {
    let text = fs::read_to_string(path)?;
    let mut values = Vec::with_capacity(rows * cols);
    let mut row_count = 0usize;
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() && cols > 0 {
            continue;
        }
        row_count += 1;
        let row_values: Vec<&str> = if cols == 0 {
            Vec::new()
        } else {
            line.split(',').collect()
        };
        if row_values.len() != cols {
            return Err(Error::Parse {
                line: idx + 1,
                message: format!(
                    "{name}: expected {cols} columns, got {}",
                    row_values.len()
                ),
            });
        }
        for cell in row_values {
            values.push(cell.trim().parse::<f64>().map_err(|_| Error::Parse {
                line: idx + 1,
                message: format!("{name}: non-numeric cell '{cell}'"),
            })?);
        }
    }
    if row_count != rows {
        return Err(Error::Parse {
            line: row_count + 1,
            message: format!("{name}: expected {rows} rows, got {row_count}"),
        });
    }
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}

/// Writes the model as a JSON manifest plus CSV matrices into `dir`.
/// The observable map is reconstructed from its seed on load.
pub fn write_model(dir: &Path, model: &KoopmanModel<f64>) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let a_csv = "A.csv".to_string();
    let b_csv = "B.csv".to_string();
    write_matrix_csv(&dir.join(&a_csv), model.a())?;
    write_matrix_csv(&dir.join(&b_csv), model.b_in())?;
    let manifest = ModelManifest {
        n: model.state_dim(),
        w: model.input_dim(),
        m_rff: model.map().feature_count(),
        lengthscale: model.map().lengthscale(),
        seed: model.map().seed(),
        reg: model.reg(),
        val_rmse: model.val_rmse(),
        a_csv,
        b_csv,
    };
    let path = dir.join("model.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(path)
}

/// Loads a model written by [`write_model`]; prediction outputs are
/// bit-exact with the original.
pub fn read_model(manifest_path: &Path) -> Result<KoopmanModel<f64>> {
    let manifest: ModelManifest = serde_json::from_str(&fs::read_to_string(manifest_path)?)?;
    let dir = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let map = ObservableMap::new(manifest.n, manifest.m_rff, manifest.lengthscale, manifest.seed)?;
    let m = map.lifted_dim();
    let a = read_matrix_csv(&dir.join(&manifest.a_csv), m, m, "A matrix")?;
    let b = read_matrix_csv(&dir.join(&manifest.b_csv), m, manifest.w, "B matrix")?;
    KoopmanModel::from_parts(a, b, map, manifest.reg, manifest.val_rmse)
}

/// Sidecar describing a field snapshot, for resuming.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldManifest {
    pub dim: usize,
    pub cells_per_dim: usize,
    pub sigma: f64,
    pub bounds: Vec<(f64, f64)>,
    pub inserted_count: usize,
}

/// Writes the field as CSV of node coordinates and values, plus a JSON
/// sidecar with the space parameters.
pub fn write_field_snapshot(csv_path: &Path, field: &OccupancyField<f64>) -> Result<()> {
    let dim = field.space().dim();
    let mut out = String::new();
    for d in 0..dim {
        let _ = write!(out, "c{d},");
    }
    out.push_str("value\n");
    for (coords, value) in field.nodes() {
        for c in coords {
            let _ = write!(out, "{c},");
        }
        let _ = writeln!(out, "{value}");
    }
    fs::write(csv_path, out)?;
    let manifest = FieldManifest {
        dim,
        cells_per_dim: field.space().cells_per_dim(),
        sigma: field.space().sigma(),
        bounds: field.space().bounds().to_vec(),
        inserted_count: field.inserted_count(),
    };
    fs::write(
        sidecar_path(csv_path),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(())
}

/// Restores a snapshot into a fresh field over `space`. The snapshot's
/// space parameters must match.
pub fn read_field_snapshot(csv_path: &Path, space: &ObjectiveSpace<f64>) -> Result<OccupancyField<f64>> {
    let manifest: FieldManifest =
        serde_json::from_str(&fs::read_to_string(sidecar_path(csv_path))?)?;
    if manifest.dim != space.dim()
        || manifest.cells_per_dim != space.cells_per_dim()
        || manifest.sigma != space.sigma()
        || manifest.bounds != space.bounds()
    {
        return Err(Error::Config(
            "field snapshot does not match the configured objective space".into(),
        ));
    }
    let text = fs::read_to_string(csv_path)?;
    let mut values = Vec::new();
    for (idx, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let last = line.rsplit(',').next().ok_or(Error::Parse {
            line: idx + 1,
            message: "empty snapshot row".into(),
        })?;
        values.push(last.trim().parse::<f64>().map_err(|_| Error::Parse {
            line: idx + 1,
            message: format!("non-numeric value '{last}'"),
        })?);
    }
    let mut field = OccupancyField::new(space.clone());
    field.restore_values(values, manifest.inserted_count)?;
    Ok(field)
}

/// Writes `(trace id, cluster id)` assignments as CSV.
pub fn write_clusters_csv(path: &Path, assignments: &[(usize, usize)]) -> Result<()> {
    let mut out = String::from("trace_id,cluster_id\n");
    for (trace, cluster) in assignments {
        let _ = writeln!(out, "{trace},{cluster}");
    }
    fs::write(path, out)?;
    Ok(())
}

/// Writes region generator points as CSV rows `(cluster id, coords...)`.
pub fn write_regions_csv(path: &Path, regions: &[ConvexRegion<f64>]) -> Result<()> {
    let dim = regions.first().map_or(0, |r| r.dim());
    let mut out = String::from("cluster_id");
    for d in 0..dim {
        let _ = write!(out, ",g{d}");
    }
    out.push('\n');
    for (id, region) in regions.iter().enumerate() {
        for g in region.generators() {
            let _ = write!(out, "{id}");
            for v in g {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
    }
    fs::write(path, out)?;
    Ok(())
}
