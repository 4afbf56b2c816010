//! Pointwise relativistic kinematics on the unit mass shell.
//!
//! Everything here works in natural units (particle mass, speed of light,
//! friction and diffusion constants all equal to one) and accepts momenta of
//! dimension 1, 2 or 3 as plain slices. The dimension is taken from the slice
//! length at each call.

use crate::Error;

/// Largest supported phase-space dimension.
pub const MAX_DIM: usize = 3;

/// Below this boost magnitude the factor `(u0 - 1)/|u|^2` is evaluated by
/// its Taylor series.

fn check_dim(d: usize) -> Result<(), Error> {
    if (1..=MAX_DIM).contains(&d) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "dimension must be 1, 2 or 3, got {d}"
        )))
    }
}

fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Small dense symmetric matrix of dimension `d <= 3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    entries: [[f64; MAX_DIM]; MAX_DIM],
}

impl SymMatrix {
    pub fn identity(dim: usize) -> Self {
        let mut entries = [[0.0; MAX_DIM]; MAX_DIM];
        for (i, row) in entries.iter_mut().enumerate().take(dim) {
            row[i] = 1.0;
        }
        Self { dim, entries }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i][j]
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.entries[i][j] * v[j]).sum())
            .collect()
    }

    pub fn mul(&self, other: &SymMatrix) -> [[f64; MAX_DIM]; MAX_DIM] {
        let mut out = [[0.0; MAX_DIM]; MAX_DIM];
        for (i, row) in out.iter_mut().enumerate().take(self.dim) {
            for (j, cell) in row.iter_mut().enumerate().take(self.dim) {
                *cell = (0..self.dim)
                    .map(|k| self.entries[i][k] * other.entries[k][j])
                    .sum();
            }
        }
        out
    }

    fn from_fn(dim: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut entries = [[0.0; MAX_DIM]; MAX_DIM];
        for (i, row) in entries.iter_mut().enumerate().take(dim) {
            for (j, cell) in row.iter_mut().enumerate().take(dim) {
                *cell = f(i, j);
            }
        }
        Self { dim, entries }
    }
}

/// The hyperbolic metric induced on the mass shell, its inverse and its
/// determinant, all in the coordinates `p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricSample {
    pub h: SymMatrix,
    pub h_inv: SymMatrix,
    pub det_h: f64,
}

/// `p0 = sqrt(1 + |p|^2)`.
pub fn energy(p: &[f64]) -> f64 {
    (1.0 + norm_sq(p)).sqrt()
}

/// Relativistic velocity `p / p0`. Its magnitude is strictly below one.
pub fn rel_velocity(p: &[f64]) -> Vec<f64> {
    let p0 = energy(p);
    p.iter().map(|c| c / p0).collect()
}

/// Relativistic diffusion matrix `(I + p p^T) / p0`.
pub fn diffusion_matrix(p: &[f64]) -> SymMatrix {
    let p0 = energy(p);
    SymMatrix::from_fn(p.len(), |i, j| {
        let delta = if i == j { 1.0 } else { 0.0 };
        (delta + p[i] * p[j]) / p0
    })
}

/// Metric `h_ij = delta_ij - p^_i p^_j`, inverse `delta + p p^T`, and
/// `det h = 1 / (1 + |p|^2)`.
pub fn hyperbolic_metric(p: &[f64]) -> MetricSample {
    let d = p.len();
    let v = rel_velocity(p);
    let h = SymMatrix::from_fn(d, |i, j| {
        let delta = if i == j { 1.0 } else { 0.0 };
        delta - v[i] * v[j]
    });
    let h_inv = SymMatrix::from_fn(d, |i, j| {
        let delta = if i == j { 1.0 } else { 0.0 };
        delta + p[i] * p[j]
    });
    MetricSample {
        h,
        h_inv,
        det_h: 1.0 / (1.0 + norm_sq(p)),
    }
}

/// Unnormalized Jüttner weight `exp(-gamma p0)`.
pub fn juttner(p: &[f64], gamma: f64) -> f64 {
    (-gamma * energy(p)).exp()
}

/// Diffusion matrix of the conformally rescaled mass shell used by the
/// scalar-gravity model: `(e^{4 phi} I + e^{2 phi} p p^T) / sqrt(e^{2 phi} + |p|^2)`.
pub fn conformal_diffusion_matrix(phi: f64, p: &[f64]) -> SymMatrix {
    let e2 = (2.0 * phi).exp();
    let denom = (e2 + norm_sq(p)).sqrt();
    SymMatrix::from_fn(p.len(), |i, j| {
        let delta = if i == j { 1.0 } else { 0.0 };
        (e2 * e2 * delta + e2 * p[i] * p[j]) / denom
    })
}

/// Boost parameter `u`, the spatial part of the four-velocity of the new
/// frame. Any finite vector is admissible.
#[derive(Debug, Clone, PartialEq)]
pub struct BoostVelocity(Vec<f64>);

impl BoostVelocity {
    pub fn new(components: Vec<f64>) -> Result<Self, Error> {
        check_dim(components.len())?;
        if components.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument("boost velocity must be finite".into()));
        }
        Ok(Self(components))
    }

    pub fn components(&self) -> &[f64] {
        &self.0
    }

    pub fn u0(&self) -> f64 {
        energy(&self.0)
    }

    pub fn negated(&self) -> Self {
        Self(self.0.iter().map(|c| -c).collect())
    }

    /// `(u0 - 1) / |u|^2`, a removable singularity at `u = 0`.
    fn transverse_factor(&self) -> f64 {
        // (u0 - 1) / |u|^2 without cancellation
        1.0 / (self.u0() + 1.0)
    }
}

/// A point `(t, x, p)` of the extended phase space.
#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub t: f64,
    pub x: Vec<f64>,
    pub p: Vec<f64>,
}

impl Event {
    pub fn new(t: f64, x: Vec<f64>, p: Vec<f64>) -> Self {
        debug_assert_eq!(x.len(), p.len());
        Self { t, x, p }
    }
}

/// Lorentz boost of an event and of the momentum attached to it.
pub fn lorentz_boost(u: &BoostVelocity, event: &Event) -> Event {
    let uv = u.components();
    let u0 = u.u0();
    let k = u.transverse_factor();
    let ux = dot(uv, &event.x);
    let up = dot(uv, &event.p);
    let p0 = energy(&event.p);
    let t = u0 * event.t - ux;
    let x = event
        .x
        .iter()
        .zip(uv)
        .map(|(xi, ui)| xi - ui * event.t + k * ui * ux)
        .collect();
    let p = event
        .p
        .iter()
        .zip(uv)
        .map(|(pi, ui)| pi - ui * p0 + k * ui * up)
        .collect();
    Event { t, x, p }
}

/// Galilean boost `(t, x - u t, p - u)`.
pub fn galilean_boost(u: &[f64], event: &Event) -> Event {
    Event {
        t: event.t,
        x: event
            .x
            .iter()
            .zip(u)
            .map(|(xi, ui)| xi - ui * event.t)
            .collect(),
        p: event.p.iter().zip(u).map(|(pi, ui)| pi - ui).collect(),
    }
}
