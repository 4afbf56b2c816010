//! Phase-space discretization in one space and one momentum dimension.
//!
//! Cells are uniform and cell-centered; every integral is the midpoint rule.
//! Values are stored x-major, so each x-cell owns one contiguous momentum row.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::kinematics::{energy, rel_velocity};
use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub p_max: f64,
    pub n_x: usize,
    pub n_p: usize,
}

impl PhaseGrid {
    pub fn new(x_min: f64, x_max: f64, p_max: f64, n_x: usize, n_p: usize) -> Result<Self, Error> {
        if !(x_max > x_min) || !x_min.is_finite() || !x_max.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "need x_min < x_max, got [{x_min}, {x_max}]"
            )));
        }
        if !(p_max > 0.0) || !p_max.is_finite() {
            return Err(Error::InvalidArgument(format!("p_max must be positive, got {p_max}")));
        }
        if n_x == 0 || n_p < 2 {
            return Err(Error::InvalidArgument(format!(
                "need n_x >= 1 and n_p >= 2, got n_x = {n_x}, n_p = {n_p}"
            )));
        }
        Ok(Self { x_min, x_max, p_max, n_x, n_p })
    }

    /// Reference grid: `x in [-8, 8]`, `p in [-8, 8]`, 128 x 128 cells.
    pub fn reference() -> Self {
        Self::new(-8.0, 8.0, 8.0, 128, 128).expect("valid reference grid")
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.n_x as f64
    }

    pub fn dp(&self) -> f64 {
        2.0 * self.p_max / self.n_p as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + (i as f64 + 0.5) * self.dx()
    }

    pub fn p(&self, j: usize) -> f64 {
        -self.p_max + (j as f64 + 0.5) * self.dp()
    }

    /// Position of the face between cells `i - 1` and `i`; `i` ranges over `0..=n_x`.
    pub fn x_face(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx()
    }

    pub fn p_face(&self, j: usize) -> f64 {
        -self.p_max + j as f64 * self.dp()
    }

    pub fn len(&self) -> usize {
        self.n_x * self.n_p
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.n_p + j
    }

    pub fn cell_volume(&self) -> f64 {
        self.dx() * self.dp()
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.n_x).map(|i| self.x(i)).collect()
    }

    pub fn ps(&self) -> Vec<f64> {
        (0..self.n_p).map(|j| self.p(j)).collect()
    }
}

/// Nonnegative samples of a distribution function on a [`PhaseGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionField {
    grid: PhaseGrid,
    values: Vec<f64>,
}

impl DistributionField {
    pub fn zeros(grid: PhaseGrid) -> Self {
        Self { values: vec![0.0; grid.len()], grid }
    }

    pub fn from_values(grid: PhaseGrid, values: Vec<f64>) -> Result<Self, Error> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "distribution values must be finite and nonnegative, found {v}"
            )));
        }
        Ok(Self { grid, values })
    }

    /// Samples `f(x, p)` at the cell centers.
    pub fn from_fn(grid: PhaseGrid, f: impl Fn(f64, f64) -> f64) -> Result<Self, Error> {
        let mut values = Vec::with_capacity(grid.len());
        for i in 0..grid.n_x {
            let x = grid.x(i);
            for j in 0..grid.n_p {
                values.push(f(x, grid.p(j)));
            }
        }
        Self::from_values(grid, values)
    }

    pub fn grid(&self) -> &PhaseGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Mutable access for solver substeps. Callers must keep the values nonnegative.
    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    /// Momentum row at spatial cell `i`.
    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.grid.n_p;
        &self.values[i * n..(i + 1) * n]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn scale(&mut self, factor: f64) {
        self.values.iter_mut().for_each(|v| *v *= factor);
    }

    /// Discrete L1 distance to another field on the same grid.
    pub fn l1_distance(&self, other: &DistributionField) -> f64 {
        let vol = self.grid.cell_volume();
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            * vol
    }
}

/// `rho(x) = int f dp`, midpoint rule.
pub fn density(f: &DistributionField) -> Vec<f64> {
    let dp = f.grid.dp();
    (0..f.grid.n_x).map(|i| f.row(i).iter().sum::<f64>() * dp).collect()
}

/// `j(x) = int p^ f dp`, midpoint rule.
pub fn current(f: &DistributionField) -> Vec<f64> {
    let g = &f.grid;
    let dp = g.dp();
    let vel: Vec<f64> = (0..g.n_p).map(|j| rel_velocity(&[g.p(j)])[0]).collect();
    (0..g.n_x)
        .map(|i| f.row(i).iter().zip(&vel).map(|(v, c)| v * c).sum::<f64>() * dp)
        .collect()
}

/// Total phase-space mass.
pub fn mass(f: &DistributionField) -> f64 {
    density(f).iter().sum::<f64>() * f.grid.dx()
}

/// Relativistic energies `p0` at the momentum cell centers.
pub fn cell_energies(grid: &PhaseGrid) -> Vec<f64> {
    (0..grid.n_p).map(|j| energy(&[grid.p(j)])).collect()
}

/// An external potential `V(x)`; used both on the line and, through `|x|`,
/// for radially symmetric problems.
#[derive(Debug, Clone, PartialEq)]
pub enum ExternalPotential {
    Zero,
    /// `V = k x^2 / 2`
    Harmonic { strength: f64 },
    /// `V = k x^4 / 4`
    Quartic { strength: f64 },
    /// Piecewise-linear interpolation of samples, constant extrapolation.
    Tabulated { xs: Vec<f64>, vs: Vec<f64> },
}

impl ExternalPotential {
    pub fn harmonic() -> Self {
        Self::Harmonic { strength: 1.0 }
    }

    pub fn tabulated(xs: Vec<f64>, vs: Vec<f64>) -> Result<Self, Error> {
        if xs.len() != vs.len() || xs.len() < 2 {
            return Err(Error::InvalidArgument("tabulated potential needs >= 2 matching samples".into()));
        }
        if xs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("tabulated abscissae must increase strictly".into()));
        }
        if vs.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("tabulated potential values must be finite".into()));
        }
        Ok(Self::Tabulated { xs, vs })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Zero => "zero",
            Self::Harmonic { .. } => "harmonic",
            Self::Quartic { .. } => "quartic",
            Self::Tabulated { .. } => "tabulated",
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Harmonic { strength } => 0.5 * strength * x * x,
            Self::Quartic { strength } => 0.25 * strength * x.powi(4),
            Self::Tabulated { xs, vs } => {
                let k = Self::segment(xs, x);
                match k {
                    None if x < xs[0] => vs[0],
                    None => vs[vs.len() - 1],
                    Some(k) => {
                        let s = (x - xs[k]) / (xs[k + 1] - xs[k]);
                        vs[k] + s * (vs[k + 1] - vs[k])
                    }
                }
            }
        }
    }

    pub fn gradient(&self, x: f64) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Harmonic { strength } => strength * x,
            Self::Quartic { strength } => strength * x.powi(3),
            Self::Tabulated { xs, vs } => match Self::segment(xs, x) {
                None => 0.0,
                Some(k) => (vs[k + 1] - vs[k]) / (xs[k + 1] - xs[k]),
            },
        }
    }

    fn segment(xs: &[f64], x: f64) -> Option<usize> {
        if x < xs[0] || x > xs[xs.len() - 1] {
            return None;
        }
        let k = xs.partition_point(|&a| a <= x);
        Some(k.saturating_sub(1).min(xs.len() - 2))
    }

    /// Ratio of `e^{-V}` at the ends of `[a, b]` to its maximum over the cell
    /// centers; small values mean the confinement is resolved by the grid.
    pub fn tail_ratio(&self, a: f64, b: f64, centers: &[f64]) -> f64 {
        let vmin = centers.iter().map(|&x| self.value(x)).fold(f64::INFINITY, f64::min);
        let edge = self.value(a).min(self.value(b));
        (-(edge - vmin)).exp()
    }
}

// ---------------------------------------------------------------------------
// Grid dumps

const RAW_MAGIC: &[u8; 8] = b"RFPGRID1";
pub const RAW_HEADER_LEN: usize = 64;

/// Writes `x,p,f` rows, x-major.
pub fn write_csv(f: &DistributionField, path: &Path) -> Result<(), Error> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "x,p,f")?;
    let g = f.grid();
    for i in 0..g.n_x {
        let x = g.x(i);
        for j in 0..g.n_p {
            writeln!(w, "{},{},{}", x, g.p(j), f.get(i, j))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a CSV written by [`write_csv`]; the grid must be supplied.
pub fn read_csv(grid: PhaseGrid, path: &Path) -> Result<DistributionField, Error> {
    let r = BufReader::new(File::open(path)?);
    let mut lines = r.lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    if header.trim() != "x,p,f" {
        return Err(Error::Format(path.into(), format!("unexpected header {header:?}")));
    }
    let mut values = Vec::with_capacity(grid.len());
    for (n, line) in lines.enumerate() {
        let line = line?;
        let v = line
            .rsplit(',')
            .next()
            .and_then(|s| s.trim().parse::<f64>().ok())
            .ok_or_else(|| Error::Format(path.into(), format!("bad row {}", n + 2)))?;
        values.push(v);
    }
    DistributionField::from_values(grid, values).map_err(|e| Error::Format(path.into(), e.to_string()))
}

/// Serializes a field as a 64-byte header followed by little-endian `f64`
/// values, x-major.
///
/// Header layout: magic `RFPGRID1` (8 bytes); `d`, `n_x`, `n_p` as `u32`;
/// 4 reserved bytes; `x_min`, `x_max`, `p_max`, `t` as `f64`; 8 reserved bytes.
pub fn encode_raw(f: &DistributionField, t: f64) -> Vec<u8> {
    let g = f.grid();
    let mut out = Vec::with_capacity(RAW_HEADER_LEN + 8 * g.len());
    out.extend_from_slice(RAW_MAGIC);
    out.extend_from_slice(&1u32.to_le_bytes());
    out.extend_from_slice(&(g.n_x as u32).to_le_bytes());
    out.extend_from_slice(&(g.n_p as u32).to_le_bytes());
    out.extend_from_slice(&[0u8; 4]);
    for v in [g.x_min, g.x_max, g.p_max, t] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&[0u8; 8]);
    debug_assert_eq!(out.len(), RAW_HEADER_LEN);
    for v in f.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Inverse of [`encode_raw`]; returns the field and its time stamp.
pub fn decode_raw(bytes: &[u8]) -> Result<(DistributionField, f64), String> {
    if bytes.len() < RAW_HEADER_LEN || &bytes[..8] != RAW_MAGIC {
        return Err("missing RFPGRID1 header".into());
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let d = u32_at(8);
    if d != 1 {
        return Err(format!("unsupported dimension {d}"));
    }
    let (n_x, n_p) = (u32_at(12), u32_at(16));
    let (x_min, x_max, p_max, t) = (f64_at(24), f64_at(32), f64_at(40), f64_at(48));
    let grid = PhaseGrid::new(x_min, x_max, p_max, n_x, n_p).map_err(|e| e.to_string())?;
    let body = &bytes[RAW_HEADER_LEN..];
    if body.len() != 8 * grid.len() {
        return Err(format!("expected {} value bytes, found {}", 8 * grid.len(), body.len()));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let field = DistributionField::from_values(grid, values).map_err(|e| e.to_string())?;
    Ok((field, t))
}

pub fn write_raw(f: &DistributionField, t: f64, path: &Path) -> Result<(), Error> {
    std::fs::write(path, encode_raw(f, t))?;
    Ok(())
}

pub fn read_raw(path: &Path) -> Result<(DistributionField, f64), Error> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    decode_raw(&bytes).map_err(|m| Error::Format(path.into(), m))
}
