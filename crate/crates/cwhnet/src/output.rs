//! Output files. Every JSON document carries a [`Metadata`] block.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use cwhnet_core::admissible::AdmissibleSet;
use cwhnet_core::net::Edge;
use cwhnet_core::numerics::RngAlgorithm;
use cwhnet_core::sim::Trace;
use cwhnet_core::{Matrix, Vector};
use serde::{Deserialize, Serialize};

use crate::error::AppResult;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub scenario_hash: String,
    pub seed: u64,
    pub rng: String,
    pub version: String,
}

impl Metadata {
    pub fn new(scenario_hash: String, seed: u64) -> Self {
        Self {
            scenario_hash,
            seed,
            rng: RngAlgorithm::Xoshiro256PlusPlus.id().to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

/// Row-major nested rows.
pub fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

pub fn from_rows(rows: &[Vec<f64>]) -> Option<Matrix> {
    let n = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != n) {
        return None;
    }
    Some(Matrix::from_fn(rows.len(), n, |i, j| rows[i][j]))
}

pub fn vec_of(v: &Vector) -> Vec<f64> {
    v.iter().copied().collect()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> AppResult<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> AppResult<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// `i,j,weight,region`, one row per directed edge in `(i, j)` order.
pub fn write_edges_csv(path: &Path, edges: &[Edge]) -> AppResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["i", "j", "weight", "region"])?;
    for e in edges {
        w.write_record([
            e.from.to_string(),
            e.to.to_string(),
            e.weight.to_string(),
            e.region.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub const TRACE_HEADER: [&str; 21] = [
    "k",
    "x1",
    "x2",
    "x3",
    "x4",
    "x5",
    "x6",
    "xhat1",
    "xhat2",
    "xhat3",
    "xhat4",
    "xhat5",
    "xhat6",
    "u1",
    "u2",
    "u3",
    "r_index",
    "box_ok",
    "obstacle_ok",
    "region_ok",
    "region",
];

/// One row per step. `r_index` is the net node of the active set-point; `region` is
/// the certificate region of the active leg.
pub fn write_trace_csv(path: &Path, trace: &Trace, route_nodes: &[usize]) -> AppResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(TRACE_HEADER)?;
    for rec in &trace.records {
        let mut row = Vec::with_capacity(TRACE_HEADER.len());
        row.push(rec.k.to_string());
        row.extend(
            rec.x
                .iter()
                .chain(rec.x_hat.iter())
                .chain(rec.u.iter())
                .map(|v| v.to_string()),
        );
        row.push(route_nodes[rec.cursor].to_string());
        for flag in [rec.box_ok, rec.obstacle_ok, rec.region_ok] {
            row.push(u8::from(flag).to_string());
        }
        row.push(rec.region.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SetRowExport {
    pub step: usize,
    pub row: usize,
    pub normal: Vec<f64>,
    pub offset: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SetExport {
    pub node: usize,
    pub region: usize,
    pub set_point_m: Vec<f64>,
    pub horizon: usize,
    pub empty: bool,
    pub degenerate: bool,
    pub rows: Vec<SetRowExport>,
}

impl SetExport {
    pub fn new(node: usize, set: &AdmissibleSet) -> Self {
        Self {
            node,
            region: set.region_id(),
            set_point_m: vec_of(set.set_point()),
            horizon: set.horizon(),
            empty: set.is_empty(),
            degenerate: set.is_degenerate(),
            rows: set
                .rows()
                .map(|r| SetRowExport {
                    step: r.step,
                    row: r.row,
                    normal: r.normal.to_vec(),
                    offset: r.offset,
                })
                .collect(),
        }
    }
}
