//! CSV and JSON file formats.
//!
//! Moment files hold one row per time point: `t`, `mean_1..mean_k`, then the
//! full covariance row-major as `cov_1_1, cov_1_2, ..., cov_k_k`. The same
//! layout serves the full `2n` loop state and the `n̄` measured states.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::lqg::MomentTrajectory;
use crate::model::GroundTruthMoments;
use crate::montecarlo::{BatchMeta, TrajectoryBatch};
use crate::{Error, Result};

fn parse_err(msg: impl Into<String>) -> Error {
    Error::Parse(msg.into())
}

fn moments_header(k: usize) -> Vec<String> {
    let mut header = vec!["t".to_string()];
    header.extend((1..=k).map(|i| format!("mean_{i}")));
    for i in 1..=k {
        header.extend((1..=k).map(|j| format!("cov_{i}_{j}")));
    }
    header
}

/// Writes mean and covariance series in the moment CSV layout.
pub fn write_moments<W: Write>(writer: W, mean: &[DVector<f64>], cov: &[DMatrix<f64>]) -> Result<()> {
    let k = mean.first().map_or(0, |m| m.len());
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(moments_header(k))?;
    for (t, (m, c)) in mean.iter().zip(cov).enumerate() {
        let mut row = vec![t.to_string()];
        row.extend(m.iter().map(f64::to_string));
        for i in 0..k {
            row.extend((0..k).map(|j| c[(i, j)].to_string()));
        }
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a moment CSV; the dimension is taken from the header.
pub fn read_moments<R: Read>(reader: R) -> Result<GroundTruthMoments> {
    let mut input = csv::Reader::from_reader(reader);
    let header: Vec<String> = input.headers()?.iter().map(str::trim).map(String::from).collect();
    let k = header.iter().filter(|h| h.starts_with("mean_")).count();
    if header != moments_header(k) {
        return Err(parse_err(format!("unexpected moment CSV header for dimension {k}")));
    }
    let mut m_hat = Vec::new();
    let mut omega_hat = Vec::new();
    for (row_idx, record) in input.records().enumerate() {
        let record = record?;
        if record.len() != header.len() {
            return Err(parse_err(format!("row {} has {} fields, expected {}", row_idx + 1, record.len(), header.len())));
        }
        let values: Vec<f64> = record
            .iter()
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| parse_err(format!("row {}: {e}", row_idx + 1)))?;
        if values[0] != row_idx as f64 {
            return Err(parse_err(format!("row {} has t = {}, expected {row_idx}", row_idx + 1, values[0])));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(parse_err(format!("row {} contains a non-finite value", row_idx + 1)));
        }
        m_hat.push(DVector::from_column_slice(&values[1..1 + k]));
        omega_hat.push(DMatrix::from_row_slice(k, k, &values[1 + k..]));
    }
    if m_hat.is_empty() {
        return Err(parse_err("moment CSV has no data rows"));
    }
    Ok(GroundTruthMoments { m_hat, omega_hat })
}

pub fn write_moments_file(path: &Path, moments: &GroundTruthMoments) -> Result<()> {
    write_moments(fs::File::create(path)?, &moments.m_hat, &moments.omega_hat)
}

pub fn write_trajectory_file(path: &Path, trajectory: &MomentTrajectory) -> Result<()> {
    write_moments(fs::File::create(path)?, &trajectory.mean, &trajectory.cov)
}

pub fn read_moments_file(path: &Path) -> Result<GroundTruthMoments> {
    read_moments(fs::File::open(path)?)
}

/// Writes a batch as `sample, t, x_1..x_k` rows.
pub fn write_batch<W: Write>(writer: W, batch: &TrajectoryBatch) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    let mut header = vec!["sample".to_string(), "t".to_string()];
    header.extend((1..=batch.dim()).map(|i| format!("x_{i}")));
    out.write_record(&header)?;
    for s in 0..batch.samples() {
        for t in 0..batch.steps() {
            let mut row = vec![s.to_string(), t.to_string()];
            row.extend(batch.get(s, t).iter().map(f64::to_string));
            out.write_record(&row)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Reads a batch CSV written by [`write_batch`] given its sidecar.
pub fn read_batch<R: Read>(reader: R, meta: BatchMeta) -> Result<TrajectoryBatch> {
    let mut input = csv::Reader::from_reader(reader);
    let dim = input.headers()?.len().checked_sub(2).ok_or_else(|| parse_err("batch CSV header too short"))?;
    let mut data = Vec::new();
    let mut steps = 0;
    for (row_idx, record) in input.records().enumerate() {
        let record = record?;
        let sample: usize = record[0].trim().parse().map_err(|e| parse_err(format!("row {}: {e}", row_idx + 1)))?;
        let t: usize = record[1].trim().parse().map_err(|e| parse_err(format!("row {}: {e}", row_idx + 1)))?;
        if sample == 0 {
            steps = steps.max(t + 1);
        }
        for field in record.iter().skip(2) {
            data.push(field.trim().parse::<f64>().map_err(|e| parse_err(format!("row {}: {e}", row_idx + 1)))?);
        }
    }
    TrajectoryBatch::from_parts(meta, steps, dim, data)
}

pub fn write_batch_files(csv_path: &Path, sidecar_path: &Path, batch: &TrajectoryBatch) -> Result<()> {
    write_batch(fs::File::create(csv_path)?, batch)?;
    write_json(sidecar_path, &batch.meta())
}

pub fn read_batch_files(csv_path: &Path, sidecar_path: &Path) -> Result<TrajectoryBatch> {
    let meta: BatchMeta = serde_json::from_slice(&fs::read(sidecar_path)?)?;
    read_batch(fs::File::open(csv_path)?, meta)
}

/// One measured channel of a moment series in tidy plot form.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PlotRow<'a> {
    pub channel: &'a str,
    pub t: usize,
    pub mean: f64,
    pub variance: f64,
    pub source: &'a str,
}

/// Appends `channel, t, mean, variance, source` rows for every channel.
pub fn write_plot_rows<W: Write>(
    out: &mut csv::Writer<W>,
    moments: &GroundTruthMoments,
    channels: &[String],
    source: &str,
) -> Result<()> {
    for (t, (m, c)) in moments.m_hat.iter().zip(&moments.omega_hat).enumerate() {
        for (i, channel) in channels.iter().enumerate() {
            out.serialize(PlotRow { channel, t, mean: m[i], variance: c[(i, i)], source })?;
        }
    }
    Ok(())
}

/// Tidy plot CSV comparing several labelled moment series.
pub fn write_plot_file(path: &Path, series: &[(&str, &GroundTruthMoments)], channels: &[String]) -> Result<()> {
    let mut out = csv::Writer::from_path(path)?;
    for (source, moments) in series {
        write_plot_rows(&mut out, moments, channels, source)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// One JSON document per line.
pub fn write_json_lines<T: Serialize>(path: &Path, values: &[T]) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    for v in values {
        serde_json::to_writer(&mut out, v)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}
