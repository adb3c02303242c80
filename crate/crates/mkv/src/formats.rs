//! MKVG binary grids and CSV plot tables.
//!
//! MKVG layout, all little-endian:
//!
//! | field | type |
//! |---|---|
//! | magic | `b"MKVG"` |
//! | version | `u32`: 1 measure, 2 kernel, 3 flow |
//! | d | `u32` |
//! | cells | `u32` per axis |
//! | lo, hi | `f64` pair per axis |
//! | kernel block (v2) | `s: f64`, `n_t: u32`, `n_t × f64` times, `n_x: u32`, `n_x·d × f64` start points |
//! | flow block (v3) | `n_t: u32`, `n_t × f64` times |
//! | values | row-major `f64`; kernels `[t][x][y]`, flows `[t][cell]` |
//!
//! Values are cell densities (cell averages), so a slice has mass `Σ v · cell_volume`.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use mkv_core::particles::EmpiricalFlow;
use mkv_core::parametrix::KernelGrid;
use mkv_core::{Grid, Measure, MeasureFlow, WeightFunction};

pub const MAGIC: &[u8; 4] = b"MKVG";
pub const VERSION_MEASURE: u32 = 1;
pub const VERSION_KERNEL: u32 = 2;
pub const VERSION_FLOW: u32 = 3;

/// Version-specific header block.
#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Measure,
    Kernel { s: f64, t_nodes: Vec<f64>, x_points: Vec<f64> },
    Flow { times: Vec<f64> },
}

/// A decoded MKVG file.
#[derive(Debug, Clone, PartialEq)]
pub struct MkvgFile {
    pub grid: Grid,
    pub payload: Payload,
    pub values: Vec<f64>,
}

impl MkvgFile {
    pub fn version(&self) -> u32 {
        match self.payload {
            Payload::Measure => VERSION_MEASURE,
            Payload::Kernel { .. } => VERSION_KERNEL,
            Payload::Flow { .. } => VERSION_FLOW,
        }
    }

    /// Number of grid slices stored.
    pub fn slices(&self) -> usize {
        match &self.payload {
            Payload::Measure => 1,
            Payload::Kernel { t_nodes, x_points, .. } => t_nodes.len() * (x_points.len() / self.grid.dim()),
            Payload::Flow { times } => times.len(),
        }
    }

    pub fn slice(&self, k: usize) -> &[f64] {
        let n = self.grid.len();
        &self.values[k * n..(k + 1) * n]
    }

    /// Mass of every stored slice.
    pub fn masses(&self) -> Vec<f64> {
        let vol = self.grid.cell_volume();
        (0..self.slices()).map(|k| self.slice(k).iter().sum::<f64>() * vol).collect()
    }

    pub fn to_measure(&self) -> Result<Measure> {
        ensure!(self.payload == Payload::Measure, "file holds a version {} grid, not a measure", self.version());
        Ok(Measure::grid(self.grid.clone(), self.values.clone())?)
    }

    pub fn to_flow(&self, weight: WeightFunction) -> Result<MeasureFlow> {
        let Payload::Flow { times } = &self.payload else { bail!("file holds a version {} grid, not a flow", self.version()) };
        let ms = (0..times.len()).map(|k| Measure::grid(self.grid.clone(), self.slice(k).to_vec())).collect::<Result<Vec<_>, _>>()?;
        Ok(MeasureFlow::new(times.clone(), ms, weight, true)?)
    }
}

fn grid_values(m: &Measure) -> Result<(&Grid, &[f64])> {
    m.as_grid().context("only grid densities serialize to MKVG; rebin atoms first")
}

fn put_u32(w: &mut impl Write, v: usize) -> io::Result<()> {
    let v = u32::try_from(v).map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "count exceeds u32"))?;
    w.write_all(&v.to_le_bytes())
}

fn put_f64s(w: &mut impl Write, vs: &[f64]) -> io::Result<()> {
    for v in vs {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn put_header(w: &mut impl Write, version: u32, grid: &Grid) -> io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&version.to_le_bytes())?;
    put_u32(w, grid.dim())?;
    for c in &grid.cells {
        put_u32(w, *c)?;
    }
    for k in 0..grid.dim() {
        put_f64s(w, &[grid.lo[k], grid.hi[k]])?;
    }
    Ok(())
}

pub fn write_measure(w: &mut impl Write, m: &Measure) -> Result<()> {
    let (grid, values) = grid_values(m)?;
    put_header(w, VERSION_MEASURE, grid)?;
    put_f64s(w, values)?;
    Ok(())
}

pub fn write_kernel(w: &mut impl Write, k: &KernelGrid) -> Result<()> {
    put_header(w, VERSION_KERNEL, &k.grid)?;
    put_f64s(w, &[k.s])?;
    put_u32(w, k.t_nodes.len())?;
    put_f64s(w, &k.t_nodes)?;
    put_u32(w, k.n_x())?;
    put_f64s(w, &k.x_points)?;
    put_f64s(w, &k.values)?;
    Ok(())
}

/// Every slice must be a grid density on one shared grid.
pub fn write_flow(w: &mut impl Write, flow: &MeasureFlow) -> Result<()> {
    let (grid, _) = grid_values(flow.measures.first().context("empty flow")?)?;
    put_header(w, VERSION_FLOW, grid)?;
    put_u32(w, flow.times.len())?;
    put_f64s(w, &flow.times)?;
    for m in &flow.measures {
        let (g, v) = grid_values(m)?;
        ensure!(g.same_as(grid), "flow slices live on different grids");
        put_f64s(w, v)?;
    }
    Ok(())
}

fn get_u32(r: &mut impl Read) -> Result<usize> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).context("truncated MKVG file")?;
    Ok(u32::from_le_bytes(b) as usize)
}

fn get_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n);
    let mut b = [0u8; 8];
    for _ in 0..n {
        r.read_exact(&mut b).context("truncated MKVG file")?;
        out.push(f64::from_le_bytes(b));
    }
    Ok(out)
}

/// Bound on any count read from a header, so a corrupt file cannot request huge buffers.
const MAX_COUNT: usize = 1 << 28;

fn get_count(r: &mut impl Read, what: &str) -> Result<usize> {
    let n = get_u32(r)?;
    ensure!(n <= MAX_COUNT, "{what} = {n} is implausibly large");
    Ok(n)
}

pub fn read(r: &mut impl Read) -> Result<MkvgFile> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).context("truncated MKVG file")?;
    ensure!(&magic == MAGIC, "bad magic {magic:?}");
    let version = get_u32(r)? as u32;
    let d = get_u32(r)?;
    ensure!(d == 1 || d == 2, "unsupported dimension {d}");
    let cells = (0..d).map(|_| get_count(r, "cells")).collect::<Result<Vec<_>>>()?;
    let bounds = get_f64s(r, 2 * d)?;
    let lo = bounds.iter().step_by(2).copied().collect();
    let hi = bounds.iter().skip(1).step_by(2).copied().collect();
    let grid = Grid::new(lo, hi, cells)?;
    let payload = match version {
        VERSION_MEASURE => Payload::Measure,
        VERSION_KERNEL => {
            let s = get_f64s(r, 1)?[0];
            let n_t = get_count(r, "n_t")?;
            let t_nodes = get_f64s(r, n_t)?;
            let n_x = get_count(r, "n_x")?;
            let x_points = get_f64s(r, n_x * d)?;
            Payload::Kernel { s, t_nodes, x_points }
        }
        VERSION_FLOW => {
            let n_t = get_count(r, "n_t")?;
            Payload::Flow { times: get_f64s(r, n_t)? }
        }
        v => bail!("unknown MKVG version {v}"),
    };
    let mut file = MkvgFile { grid, payload, values: Vec::new() };
    let n = file.slices().checked_mul(file.grid.len()).filter(|n| *n <= MAX_COUNT).context("value block too large")?;
    file.values = get_f64s(r, n)?;
    let mut extra = [0u8; 1];
    ensure!(r.read(&mut extra)? == 0, "trailing bytes after the value block");
    Ok(file)
}

pub fn read_path(path: &Path) -> Result<MkvgFile> {
    let f = File::open(path).with_context(|| format!("open {}", path.display()))?;
    read(&mut BufReader::new(f)).with_context(|| format!("read {}", path.display()))
}

/// Creates `path` and hands a buffered writer to `body`.
pub fn write_path(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let f = File::create(path).with_context(|| format!("create {}", path.display()))?;
    let mut w = BufWriter::new(f);
    body(&mut w)?;
    w.flush()?;
    Ok(())
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn axis_names(prefix: &str, d: usize) -> Vec<String> {
    (0..d).map(|k| format!("{prefix}{k}")).collect()
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    csv::Writer::from_path(path).with_context(|| format!("create {}", path.display()))
}

/// Columns `x0[,x1],value`, one row per cell.
pub fn measure_csv(path: &Path, m: &Measure) -> Result<()> {
    let (grid, values) = grid_values(m)?;
    let mut w = csv_writer(path)?;
    let mut head = axis_names("x", grid.dim());
    head.push("value".into());
    w.write_record(&head)?;
    for (i, v) in values.iter().enumerate() {
        let mut row: Vec<String> = grid.center_vec(i).into_iter().map(num).collect();
        row.push(num(*v));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Columns `t,x0[,x1],value`.
pub fn flow_csv(path: &Path, flow: &MeasureFlow) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut head = vec!["t".to_string()];
    head.extend(axis_names("x", flow.dim()));
    head.push("value".into());
    w.write_record(&head)?;
    for (t, m) in flow.times.iter().zip(&flow.measures) {
        let (grid, values) = grid_values(m)?;
        for (i, v) in values.iter().enumerate() {
            let mut row = vec![num(*t)];
            row.extend(grid.center_vec(i).into_iter().map(num));
            row.push(num(*v));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Columns `t,x0[,x1],y0[,y1],value` with `x` the start point and `y` the cell centre.
pub fn kernel_csv(path: &Path, k: &KernelGrid) -> Result<()> {
    let d = k.dim();
    let mut w = csv_writer(path)?;
    let mut head = vec!["t".to_string()];
    head.extend(axis_names("x", d));
    head.extend(axis_names("y", d));
    head.push("value".into());
    w.write_record(&head)?;
    for (ti, t) in k.t_nodes.iter().enumerate() {
        for xi in 0..k.n_x() {
            for (yi, v) in k.slice(ti, xi).iter().enumerate() {
                let mut row = vec![num(*t)];
                row.extend(k.x(xi).iter().map(|v| num(*v)));
                row.extend(k.grid.center_vec(yi).into_iter().map(num));
                row.push(num(*v));
                w.write_record(&row)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Columns `time,particle_id,x0[,x1]`.
pub fn snapshots_csv(path: &Path, flow: &EmpiricalFlow) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut head = vec!["time".to_string(), "particle_id".to_string()];
    head.extend(axis_names("x", flow.dim));
    w.write_record(&head)?;
    for (t, pos) in flow.times.iter().zip(&flow.positions) {
        for (id, p) in pos.chunks(flow.dim).enumerate() {
            let mut row = vec![num(*t), id.to_string()];
            row.extend(p.iter().map(|v| num(*v)));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Columns `iter,residual,wallclock_ms`.
pub fn trace_csv(path: &Path, rows: &[(usize, f64, f64)]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["iter", "residual", "wallclock_ms"])?;
    for (i, r, ms) in rows {
        w.write_record([i.to_string(), num(*r), format!("{ms:.3}")])?;
    }
    w.flush()?;
    Ok(())
}
