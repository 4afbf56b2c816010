//! Spherically symmetric steady states of the two self-consistent systems:
//! the plasma (Maxwell) case, where the electrostatic potential solves
//! `-Lap U = rho`, and the scalar-gravity (Nordström) case, where
//! `u = -phi0 >= 0` solves `-Lap u = s[u]`.
//!
//! Radial functions live on cell centers `r_k = (k + 1/2) dr` of `[0, r_max]`.
//! The discrete Laplacian is the finite-volume operator `A` whose quadratic
//! form `phi^T A phi` is the Dirichlet energy of `phi` on the grid plus the
//! exterior energy of its `1/r` continuation; `A U = w g` is solved exactly by
//! a two-sweep Gauss-law recursion.

use rand::Rng;

use crate::kinematics::{conformal_diffusion_matrix, energy};
use crate::phase_grid::ExternalPotential;
use crate::special::{composite_gauss_legendre, gauss_legendre, integrate_adaptive};
use crate::Error;

use std::f64::consts::PI;

/// Required `exp(-(V(r_max) - min V))`.
pub const RADIAL_TAIL: f64 = 1e-12;

/// Cutoff for momentum integrals of `exp(-sqrt(a^2 + p^2))`.
pub const MOMENTUM_CUTOFF: f64 = 80.0;

const GRADED_LEVELS: i32 = 6;

/// Sobolev constant of `||phi||_6 <= eta ||grad phi||_2` in three dimensions.
pub fn sobolev_constant() -> f64 {
    2.0 / 3f64.sqrt() * PI.powf(-2.0 / 3.0)
}

fn adaptive_radial(f: impl Fn(f64) -> f64) -> f64 {
    integrate_adaptive(f, 0.0, MOMENTUM_CUTOFF, 1e-15, 1e-14).value
}

fn check_positive(a: f64) -> Result<(), Error> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::InvalidArgument(format!("momentum integral needs a > 0, got {a}")));
    }
    Ok(())
}

/// `int_{R^3} exp(-sqrt(a^2+|p|^2)) / sqrt(a^2+|p|^2) dp`; equals `4 pi a K1(a)`.
pub fn momentum_number_integral(a: f64) -> Result<f64, Error> {
    check_positive(a)?;
    Ok(4.0 * PI * adaptive_radial(|p| {
        let e = (a * a + p * p).sqrt();
        p * p * (-e).exp() / e
    }))
}

/// `int_{R^3} exp(-sqrt(a^2+|p|^2)) dp`; equals `4 pi a^2 K2(a)`.
pub fn momentum_density_integral(a: f64) -> Result<f64, Error> {
    check_positive(a)?;
    Ok(4.0 * PI * adaptive_radial(|p| p * p * (-(a * a + p * p).sqrt()).exp()))
}

/// One-dimensional variant `int_R exp(-sqrt(a^2+p^2)) dp`; equals `2 a K1(a)`.
pub fn momentum_density_integral_1d(a: f64) -> Result<f64, Error> {
    check_positive(a)?;
    Ok(2.0 * adaptive_radial(|p| (-(a * a + p * p).sqrt()).exp()))
}

/// Radial cell grid on `[0, r_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialGrid {
    pub r_max: f64,
    pub n_r: usize,
}

impl RadialGrid {
    pub fn new(r_max: f64, n_r: usize) -> Result<Self, Error> {
        if !(r_max > 0.0) || !r_max.is_finite() {
            return Err(Error::InvalidArgument(format!("r_max must be positive, got {r_max}")));
        }
        if n_r < 2 {
            return Err(Error::InvalidArgument(format!("n_r must be at least 2, got {n_r}")));
        }
        Ok(Self { r_max, n_r })
    }

    pub fn dr(&self) -> f64 {
        self.r_max / self.n_r as f64
    }

    pub fn r(&self, k: usize) -> f64 {
        (k as f64 + 0.5) * self.dr()
    }

    /// Face `k` sits at `k dr`, `k = 0..=n_r`.
    pub fn r_face(&self, k: usize) -> f64 {
        k as f64 * self.dr()
    }

    pub fn rs(&self) -> Vec<f64> {
        (0..self.n_r).map(|k| self.r(k)).collect()
    }

    /// Shell volumes `4 pi r_k^2 dr`.
    pub fn weights(&self) -> Vec<f64> {
        (0..self.n_r).map(|k| 4.0 * PI * self.r(k).powi(2) * self.dr()).collect()
    }

    /// Errors unless `exp(-V)` has decayed below [`RADIAL_TAIL`] at `r_max`.
    pub fn check_confinement(&self, v: &ExternalPotential) -> Result<(), Error> {
        let v_min = self.rs().iter().map(|&r| v.value(r)).fold(f64::INFINITY, f64::min);
        let tail = (-(v.value(self.r_max) - v_min)).exp();
        if !(tail < RADIAL_TAIL) {
            return Err(Error::NotConfining(format!(
                "exp(-V) at r_max = {} is {tail:.3e} of its maximum (need < {RADIAL_TAIL:.0e})",
                self.r_max
            )));
        }
        Ok(())
    }

    /// `a_{k+1/2} = 4 pi r_{k+1/2}^2 / dr` for the interior faces `k = 0..n_r-1`.
    fn face_conductances(&self) -> Vec<f64> {
        (1..self.n_r).map(|k| 4.0 * PI * self.r_face(k).powi(2) / self.dr()).collect()
    }

    /// Boundary term matching the `1/r` exterior continuation.
    fn exterior_conductance(&self) -> f64 {
        4.0 * PI * self.r(self.n_r - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FarField {
    /// continued by `C / r` beyond `r_max`
    DecayingOneOverR,
    /// zero beyond `r_max`
    Zero,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadialField {
    pub grid: RadialGrid,
    pub values: Vec<f64>,
    pub far_field: FarField,
}

impl RadialField {
    pub fn new(grid: RadialGrid, values: Vec<f64>, far_field: FarField) -> Result<Self, Error> {
        if values.len() != grid.n_r {
            return Err(Error::InvalidArgument(format!("expected {} radial values, got {}", grid.n_r, values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("radial values must be finite".into()));
        }
        Ok(Self { grid, values, far_field })
    }

    pub fn zeros(grid: RadialGrid, far_field: FarField) -> Self {
        Self { grid, values: vec![0.0; grid.n_r], far_field }
    }

    pub fn from_fn(grid: RadialGrid, far_field: FarField, f: impl Fn(f64) -> f64) -> Result<Self, Error> {
        Self::new(grid, grid.rs().into_iter().map(f).collect(), far_field)
    }

    /// `int g dx = sum g_k w_k`.
    pub fn integral(&self) -> f64 {
        self.values.iter().zip(self.grid.weights()).map(|(v, w)| v * w).sum()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn sup_distance(&self, other: &RadialField) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// Piecewise-linear interpolation in `r`, even extension through the
    /// origin, far-field continuation beyond the last cell center.
    pub fn value_at(&self, r: f64) -> f64 {
        let g = &self.grid;
        let r = r.abs();
        let last = g.r(g.n_r - 1);
        if r >= last {
            return match self.far_field {
                FarField::DecayingOneOverR => self.values[g.n_r - 1] * last / r,
                FarField::Zero if r <= g.r_max => self.values[g.n_r - 1],
                FarField::Zero => 0.0,
            };
        }
        if r <= g.r(0) {
            return self.values[0];
        }
        let s = r / g.dr() - 0.5;
        let k = (s.floor() as usize).min(g.n_r - 2);
        let frac = s - k as f64;
        self.values[k] * (1.0 - frac) + self.values[k + 1] * frac
    }

    /// `sum_k w_k (g_k)^2` raised to 1/2.
    pub fn weighted_l2(&self) -> f64 {
        self.values.iter().zip(self.grid.weights()).map(|(v, w)| v * v * w).sum::<f64>().sqrt()
    }
}

/// Solves `-Lap U = g` with `U -> 0` at infinity: `A U = w g` exactly.
pub fn poisson_radial(g: &RadialField) -> RadialField {
    let grid = g.grid;
    let n = grid.n_r;
    let w = grid.weights();
    let a = grid.face_conductances();
    let mut enclosed = vec![0.0; n];
    let mut acc = 0.0;
    for k in 0..n {
        acc += g.values[k] * w[k];
        enclosed[k] = acc;
    }
    let mut u = vec![0.0; n];
    u[n - 1] = enclosed[n - 1] / grid.exterior_conductance();
    for k in (0..n - 1).rev() {
        u[k] = u[k + 1] + enclosed[k] / a[k];
    }
    RadialField { grid, values: u, far_field: FarField::DecayingOneOverR }
}

/// `(A u)_k` for the discrete operator.
fn apply_laplacian(u: &RadialField) -> Vec<f64> {
    let grid = u.grid;
    let n = grid.n_r;
    let a = grid.face_conductances();
    let mut out = vec![0.0; n];
    for k in 0..n - 1 {
        let flux = a[k] * (u.values[k] - u.values[k + 1]);
        out[k] += flux;
        out[k + 1] -= flux;
    }
    out[n - 1] += grid.exterior_conductance() * u.values[n - 1];
    out
}

/// Discrete `-Lap u`, i.e. `(A u) / w`.
pub fn discrete_neg_laplacian(u: &RadialField) -> RadialField {
    let w = u.grid.weights();
    let values = apply_laplacian(u).iter().zip(&w).map(|(a, w)| a / w).collect();
    RadialField { grid: u.grid, values, far_field: FarField::Zero }
}

/// Weighted L2 norm of `-Lap u - g`.
pub fn poisson_residual(u: &RadialField, g: &RadialField) -> f64 {
    let lap = discrete_neg_laplacian(u);
    let w = u.grid.weights();
    lap.values
        .iter()
        .zip(&g.values)
        .zip(&w)
        .map(|((a, b), w)| (a - b).powi(2) * w)
        .sum::<f64>()
        .sqrt()
}

/// `1/2 int |grad phi|^2`, including the exterior `1/r` continuation.
pub fn dirichlet_energy(phi: &RadialField) -> f64 {
    0.5 * apply_laplacian(phi).iter().zip(&phi.values).map(|(a, b)| a * b).sum::<f64>()
}

/// Composite Gauss-Legendre rule in `|p|` on `[0, p_max]` with the `4 pi p^2`
/// Jacobian folded into the weights.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumQuadrature {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl MomentumQuadrature {
    pub fn new(p_max: f64, panels: usize, order: usize) -> Result<Self, Error> {
        if !(p_max > 0.0) || panels == 0 || order == 0 {
            return Err(Error::InvalidArgument("momentum quadrature needs p_max > 0 and nonempty panels".into()));
        }
        // dyadic refinement toward p = 0, where exp(-sqrt(a^2+p^2)) has
        // branch points at p = +-ia, then uniform panels
        let width = p_max / panels as f64;
        let mut edges = vec![0.0];
        let mut h = width / 2f64.powi(GRADED_LEVELS);
        while h < width {
            edges.push(edges[edges.len() - 1] + h);
            h *= 2.0;
        }
        let start = edges[edges.len() - 1];
        let uniform = ((p_max - start) / width).ceil().max(1.0) as usize;
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        let mut push = |a: f64, b: f64, n: usize| {
            let (x, w) = composite_gauss_legendre(a, b, n, order);
            nodes.extend(x);
            weights.extend(w);
        };
        for e in edges.windows(2) {
            push(e[0], e[1], 1);
        }
        push(start, p_max, uniform);
        let weights = nodes.iter().zip(&weights).map(|(p, w)| 4.0 * PI * p * p * w).collect();
        Ok(Self { nodes, weights })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `sum w exp(-sqrt(a^2 + p^2))`
    pub fn density(&self, a: f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(p, w)| w * (-(a * a + p * p).sqrt()).exp()).sum()
    }

    /// `sum w exp(-sqrt(a^2 + p^2)) / sqrt(a^2 + p^2)`
    pub fn number(&self, a: f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| {
                let e = (a * a + p * p).sqrt();
                w * (-e).exp() / e
            })
            .sum()
    }
}

impl Default for MomentumQuadrature {
    fn default() -> Self {
        Self::new(MOMENTUM_CUTOFF, 40, 16).expect("valid constants")
    }
}

/// Distribution on radial cells times `|p|` nodes, isotropic in direction.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialPhaseField {
    pub grid: RadialGrid,
    pub momentum: MomentumQuadrature,
    /// row-major `[k][l]`
    pub values: Vec<f64>,
}

impl RadialPhaseField {
    pub fn from_fn(grid: RadialGrid, momentum: MomentumQuadrature, f: impl Fn(usize, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.n_r * momentum.len());
        for k in 0..grid.n_r {
            for &p in &momentum.nodes {
                values.push(f(k, p));
            }
        }
        Self { grid, momentum, values }
    }

    pub fn row(&self, k: usize) -> &[f64] {
        let m = self.momentum.len();
        &self.values[k * m..(k + 1) * m]
    }

    /// `rho(r) = int f dp`.
    pub fn density(&self) -> RadialField {
        let values = (0..self.grid.n_r)
            .map(|k| self.row(k).iter().zip(&self.momentum.weights).map(|(f, w)| f * w).sum())
            .collect();
        RadialField { grid: self.grid, values, far_field: FarField::Zero }
    }

    pub fn mass(&self) -> f64 {
        self.density().integral()
    }

    /// Component of `int p^ f dp` along a fixed axis, with a symmetric rule in
    /// the polar cosine; vanishes for isotropic `f`.
    pub fn axial_current(&self) -> Vec<f64> {
        let (mu, wmu) = gauss_legendre(8);
        let angular: f64 = mu.iter().zip(&wmu).map(|(m, w)| 0.5 * m * w).sum();
        (0..self.grid.n_r)
            .map(|k| {
                let radial: f64 = self
                    .row(k)
                    .iter()
                    .zip(self.momentum.nodes.iter().zip(&self.momentum.weights))
                    .map(|(f, (p, w))| f * w * p / energy(&[*p]))
                    .sum();
                radial * angular
            })
            .collect()
    }

    /// `sum f (E_k(p) + V + log f) dmu` with a per-cell energy function.
    fn entropy_with(&self, v: &ExternalPotential, energy_at: impl Fn(usize, f64) -> f64) -> f64 {
        let w_r = self.grid.weights();
        let mut total = 0.0;
        for k in 0..self.grid.n_r {
            let vk = v.value(self.grid.r(k));
            for ((f, p), w) in self.row(k).iter().zip(&self.momentum.nodes).zip(&self.momentum.weights) {
                if *f > 0.0 {
                    total += f * (energy_at(k, *p) + vk + f.ln()) * w * w_r[k];
                }
            }
        }
        total
    }

    /// `Q[f] = int f (p0 + V + log f)`.
    pub fn free_energy(&self, v: &ExternalPotential) -> f64 {
        self.entropy_with(v, |_, p| energy(&[p]))
    }

    /// `int f (|p| + V + log f)`, the lower-bound functional.
    pub fn massless_free_energy(&self, v: &ExternalPotential) -> f64 {
        self.entropy_with(v, |_, p| p)
    }

    fn scale(&mut self, c: f64) {
        self.values.iter_mut().for_each(|x| *x *= c);
    }
}

/// `M log(M / sum exp(-|p| - V))` on the grid: the value every functional
/// bounded by the massless free energy must exceed.
pub fn massless_lower_bound(mass: f64, v: &ExternalPotential, grid: &RadialGrid, momentum: &MomentumQuadrature) -> f64 {
    let px: f64 = momentum.nodes.iter().zip(&momentum.weights).map(|(p, w)| w * (-p).exp()).sum();
    let rx: f64 = grid.rs().iter().zip(grid.weights()).map(|(r, w)| w * (-v.value(*r)).exp()).sum();
    mass * (mass / (px * rx)).ln()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointConfig {
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub mass: f64,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        Self { damping: 1.0, tol: 1e-12, max_iter: 500, mass: 1.0 }
    }
}

impl FixedPointConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidArgument(format!("damping must lie in (0, 1], got {}", self.damping)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
        }
        if !(self.mass > 0.0) || !self.mass.is_finite() {
            return Err(Error::InvalidArgument(format!("mass must be positive, got {}", self.mass)));
        }
        Ok(())
    }
}

/// One line of a fixed-point convergence log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRecord {
    pub iteration: usize,
    /// `sup |x_{n+1} - x_n|`
    pub residual: f64,
    /// ratio of consecutive residuals; NaN for the first iteration
    pub ratio: f64,
}

pub const CONVERGENCE_HEADER: &str = "iter,residual,ratio";

pub fn convergence_csv(log: &[ConvergenceRecord]) -> String {
    let mut s = format!("{CONVERGENCE_HEADER}\n");
    for r in log {
        s.push_str(&format!("{},{:e},{:e}\n", r.iteration, r.residual, r.ratio));
    }
    s
}

/// Largest ratio among records whose residual is above rounding level.
pub fn empirical_contraction(log: &[ConvergenceRecord], floor: f64) -> f64 {
    log.windows(2)
        .filter(|w| w[0].residual > floor && w[1].residual > floor)
        .map(|w| w[1].ratio)
        .fold(0.0, f64::max)
}

struct Iterate {
    value: RadialField,
    log: Vec<ConvergenceRecord>,
    range: (f64, f64),
}

/// Damped iteration `x <- (1 - theta) x + theta K(x)` with divergence detection.
fn damped_iteration(
    start: RadialField,
    config: &FixedPointConfig,
    mut map: impl FnMut(&RadialField) -> Result<RadialField, Error>,
) -> Result<Iterate, Error> {
    let theta = config.damping;
    let mut x = start;
    let mut log = Vec::new();
    let mut range = (x.min(), x.max());
    let mut growing = 0;
    for iteration in 1..=config.max_iter {
        let kx = map(&x)?;
        let next: Vec<f64> = x.values.iter().zip(&kx.values).map(|(a, b)| (1.0 - theta) * a + theta * b).collect();
        let next = RadialField { grid: x.grid, values: next, far_field: kx.far_field };
        let residual = next.sup_distance(&x);
        let ratio = log.last().map_or(f64::NAN, |r: &ConvergenceRecord| residual / r.residual);
        log.push(ConvergenceRecord { iteration, residual, ratio });
        range = (range.0.min(next.min()), range.1.max(next.max()));
        x = next;
        if !residual.is_finite() {
            return Err(Error::Divergence { iteration, ratio });
        }
        if residual < config.tol {
            return Ok(Iterate { value: x, log, range });
        }
        growing = if ratio > 1.0 { growing + 1 } else { 0 };
        if growing >= 8 && residual > log[0].residual {
            return Err(Error::Divergence { iteration, ratio });
        }
    }
    Err(Error::NonConvergence { iterations: config.max_iter, residual: log.last().map_or(f64::NAN, |r| r.residual) })
}

fn potential_values(grid: &RadialGrid, v: &ExternalPotential) -> Vec<f64> {
    grid.rs().iter().map(|&r| v.value(r)).collect()
}

/// Electrostatic steady state of the plasma system.
#[derive(Debug, Clone)]
pub struct VmfpSolution {
    pub potential: RadialField,
    pub density: RadialField,
    pub distribution: RadialPhaseField,
    pub log: Vec<ConvergenceRecord>,
    pub mass: f64,
}

impl VmfpSolution {
    pub fn iterations(&self) -> usize {
        self.log.len()
    }

    /// Weighted L2 residual of `-Lap U = rho`.
    pub fn residual(&self) -> f64 {
        poisson_residual(&self.potential, &self.density)
    }
}

/// `rho[U] = M exp(-U - V) / sum exp(-U - V) w`.
fn vmfp_density(u: &RadialField, vr: &[f64], mass: f64) -> Result<RadialField, Error> {
    let w = u.grid.weights();
    let shape: Vec<f64> = u.values.iter().zip(vr).map(|(a, b)| (-(a + b)).exp()).collect();
    let z: f64 = shape.iter().zip(&w).map(|(s, w)| s * w).sum();
    if !(z > 0.0) || !z.is_finite() {
        return Err(Error::NotConfining(format!("radial normalization {z}")));
    }
    RadialField::new(u.grid, shape.iter().map(|s| mass * s / z).collect(), FarField::Zero)
}

/// Damped fixed point `U <- (1 - theta) U + theta P(rho[U])`.
pub fn vmfp_steady(
    v: &ExternalPotential,
    grid: &RadialGrid,
    momentum: &MomentumQuadrature,
    config: &FixedPointConfig,
) -> Result<VmfpSolution, Error> {
    config.validate()?;
    grid.check_confinement(v)?;
    let vr = potential_values(grid, v);
    let start = RadialField::zeros(*grid, FarField::DecayingOneOverR);
    let it = damped_iteration(start, config, |u| Ok(poisson_radial(&vmfp_density(u, &vr, config.mass)?)))?;
    let potential = it.value;
    let density = vmfp_density(&potential, &vr, config.mass)?;
    let distribution = assemble_equilibrium(grid, momentum, config.mass, |k| potential.values[k] + vr[k], |_, p| energy(&[p]));
    Ok(VmfpSolution { potential, density, distribution, log: it.log, mass: config.mass })
}

/// `(M / Theta) exp(-E_k(p) - W_k)` with `Theta` the grid quadrature.
fn assemble_equilibrium(
    grid: &RadialGrid,
    momentum: &MomentumQuadrature,
    mass: f64,
    spatial: impl Fn(usize) -> f64,
    energy_at: impl Fn(usize, f64) -> f64,
) -> RadialPhaseField {
    let mut f = RadialPhaseField::from_fn(*grid, momentum.clone(), |k, p| (-energy_at(k, p) - spatial(k)).exp());
    let m = f.mass();
    f.scale(mass / m);
    f
}

/// `K_red[f] = Q[f] + 1/2 int rho U` with `U` the potential of `rho[f]`.
pub fn reduced_entropy_vmfp(f: &RadialPhaseField, v: &ExternalPotential) -> f64 {
    let rho = f.density();
    let u = poisson_radial(&rho);
    f.free_energy(v) + 0.5 * rho.values.iter().zip(&u.values).zip(f.grid.weights()).map(|((a, b), w)| a * b * w).sum::<f64>()
}

/// Result of the scalar-gravity fixed-point iteration for `u = -phi0`.
#[derive(Debug, Clone)]
pub struct VnfpIteration {
    pub u: RadialField,
    pub log: Vec<ConvergenceRecord>,
    pub contraction_ratio: f64,
    /// smallest and largest value over all iterates
    pub range: (f64, f64),
    pub mass: f64,
}

/// `s[u] = M exp(-V) exp(-2u) N(exp(-u)) / Theta[u]`, `Theta = sum exp(-V) Dn(exp(-u)) w`.
pub fn vnfp_source(u: &RadialField, vr: &[f64], mass: f64, momentum: &MomentumQuadrature) -> Result<RadialField, Error> {
    let w = u.grid.weights();
    let per_cell: Vec<(f64, f64)> = u
        .values
        .iter()
        .zip(vr)
        .map(|(&uk, &vk)| {
            let a = (-uk).exp();
            let ev = (-vk).exp();
            (ev * (-2.0 * uk).exp() * momentum.number(a), ev * momentum.density(a))
        })
        .collect();
    let theta: f64 = per_cell.iter().zip(&w).map(|((_, d), w)| d * w).sum();
    if !(theta > 0.0) || !theta.is_finite() {
        return Err(Error::NotConfining(format!("normalization Theta[u] = {theta}")));
    }
    RadialField::new(u.grid, per_cell.iter().map(|(n, _)| mass * n / theta).collect(), FarField::Zero)
}

/// Iterates `u <- (1 - theta) u + theta P(s[u])` from `initial` (zero by default).
pub fn vnfp_fixed_point(
    v: &ExternalPotential,
    grid: &RadialGrid,
    momentum: &MomentumQuadrature,
    config: &FixedPointConfig,
    initial: Option<&RadialField>,
) -> Result<VnfpIteration, Error> {
    config.validate()?;
    grid.check_confinement(v)?;
    let vr = potential_values(grid, v);
    let start = initial.cloned().unwrap_or_else(|| RadialField::zeros(*grid, FarField::DecayingOneOverR));
    let it = damped_iteration(start, config, |u| Ok(poisson_radial(&vnfp_source(u, &vr, config.mass, momentum)?)))?;
    let floor = 1e3 * f64::EPSILON * it.value.max().abs().max(1e-300);
    Ok(VnfpIteration {
        contraction_ratio: empirical_contraction(&it.log, floor),
        u: it.value,
        log: it.log,
        range: it.range,
        mass: config.mass,
    })
}

/// One stage of mass continuation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuationStep {
    pub mass: f64,
    pub iterations: usize,
    pub contraction_ratio: f64,
    /// smallest and largest iterate value during the stage
    pub range: (f64, f64),
    pub converged: bool,
}

/// Scalar-gravity steady state `(m_M, phi0)`.
#[derive(Debug, Clone)]
pub struct VnfpSolution {
    pub phi0: RadialField,
    pub source: RadialField,
    pub distribution: RadialPhaseField,
    pub iteration: VnfpIteration,
    pub continuation: Vec<ContinuationStep>,
    pub mass: f64,
}

impl VnfpSolution {
    /// Weighted L2 residual of `-Lap u = s[u]`.
    pub fn residual(&self) -> f64 {
        let u = negate(&self.phi0);
        poisson_residual(&u, &self.source)
    }
}

fn negate(f: &RadialField) -> RadialField {
    RadialField { grid: f.grid, values: f.values.iter().map(|v| -v).collect(), far_field: f.far_field }
}

/// Mass at which the direct iteration is attempted before continuation.
pub const CONTINUATION_SEED_MASS: f64 = 0.1;

/// Direct iteration for `mass <= CONTINUATION_SEED_MASS`; otherwise
/// continuation in the mass from the seed with damping 0.5, halving the mass
/// increment after a failed stage. Failure to reach the target is an error
/// listing the stages taken.
pub fn vnfp_steady(
    v: &ExternalPotential,
    grid: &RadialGrid,
    momentum: &MomentumQuadrature,
    config: &FixedPointConfig,
) -> Result<VnfpSolution, Error> {
    config.validate()?;
    let target = config.mass;
    let mut steps = Vec::new();
    let iteration = if target <= CONTINUATION_SEED_MASS {
        let it = vnfp_fixed_point(v, grid, momentum, config, None)?;
        steps.push(ContinuationStep { mass: target, iterations: it.log.len(), contraction_ratio: it.contraction_ratio, range: it.range, converged: true });
        it
    } else {
        let seed_cfg = FixedPointConfig { mass: CONTINUATION_SEED_MASS, ..*config };
        let mut current = vnfp_fixed_point(v, grid, momentum, &seed_cfg, None)?;
        steps.push(ContinuationStep {
            mass: CONTINUATION_SEED_MASS,
            iterations: current.log.len(),
            contraction_ratio: current.contraction_ratio,
            range: current.range,
            converged: true,
        });
        let mut m = CONTINUATION_SEED_MASS;
        let mut increment = (target - m) / 4.0;
        let min_increment = (target - m) * 1e-3;
        while m < target {
            let next_m = (m + increment).min(target);
            let cfg = FixedPointConfig { mass: next_m, damping: 0.5, ..*config };
            match vnfp_fixed_point(v, grid, momentum, &cfg, Some(&current.u)) {
                Ok(it) => {
                    steps.push(ContinuationStep { mass: next_m, iterations: it.log.len(), contraction_ratio: it.contraction_ratio, range: it.range, converged: true });
                    current = it;
                    m = next_m;
                }
                Err(e) => {
                    steps.push(ContinuationStep { mass: next_m, iterations: 0, contraction_ratio: f64::NAN, range: (f64::NAN, f64::NAN), converged: false });
                    increment *= 0.5;
                    if increment < min_increment {
                        return Err(Error::InvalidArgument(format!(
                            "mass continuation stalled at M = {m} before reaching {target}: {e}"
                        )));
                    }
                }
            }
        }
        current
    };
    let vr = potential_values(grid, v);
    let u = iteration.u.clone();
    let source = vnfp_source(&u, &vr, target, momentum)?;
    let distribution = assemble_equilibrium(grid, momentum, target, |k| vr[k], |k, p| {
        let a = (-u.values[k]).exp();
        (a * a + p * p).sqrt()
    });
    Ok(VnfpSolution { phi0: negate(&u), source, distribution, iteration, continuation: steps, mass: target })
}

/// `E(f, phi) = int f (sqrt(e^{2 phi} + p^2) + V + log f) + 1/2 int |grad phi|^2`,
/// returned as `(total, field part)`.
pub fn energy_vnfp(f: &RadialPhaseField, phi: &RadialField, v: &ExternalPotential) -> (f64, f64) {
    let kinetic = f.entropy_with(v, |k, p| ((2.0 * phi.values[k]).exp() + p * p).sqrt());
    let field = dirichlet_energy(phi);
    (kinetic + field, field)
}

/// `(||phi||_6, eta ||grad phi||_2)`, both including the `1/r` exterior.
pub fn sobolev_check(phi: &RadialField) -> (f64, f64) {
    let g = phi.grid;
    let interior: f64 = phi.values.iter().zip(g.weights()).map(|(p, w)| p.powi(6) * w).sum();
    // C / r beyond r_max with C fixed by the last cell: int_R^inf (C/r)^6 4 pi r^2 dr
    let c = phi.values[g.n_r - 1] * g.r(g.n_r - 1);
    let exterior = 4.0 * PI * c.powi(6) / (3.0 * g.r_max.powi(3));
    let lhs = (interior + exterior).powf(1.0 / 6.0);
    let rhs = sobolev_constant() * (2.0 * dirichlet_energy(phi)).sqrt();
    (lhs, rhs)
}

/// Outcome of perturbing a steady state.
#[derive(Debug, Clone, PartialEq)]
pub struct CertificateReport {
    pub steady_value: f64,
    pub perturbations: usize,
    /// smallest `value(perturbed) - value(steady)`
    pub min_gap: f64,
    pub violations: usize,
    /// `(eps, (value(eps) - value(0)) / eps)` along one fixed direction
    pub first_variation: Vec<(f64, f64)>,
    /// `value(eps) - 2 value(0) + value(-eps)` at the smallest eps
    pub second_difference: f64,
}

impl CertificateReport {
    pub fn passed(&self) -> bool {
        self.violations == 0 && self.second_difference > 0.0 && self.stationary()
    }

    /// Difference quotients shrink at least linearly with eps.
    pub fn stationary(&self) -> bool {
        self.first_variation
            .windows(2)
            .all(|w| w[1].1.abs() <= 0.75 * w[0].1.abs() || w[1].1.abs() < 1e-9)
    }
}

const VARIATION_EPS: [f64; 4] = [1e-2, 5e-3, 2.5e-3, 1.25e-3];

fn perturb(f: &RadialPhaseField, eta: &[f64], eps: f64) -> RadialPhaseField {
    let mut out = f.clone();
    for (v, e) in out.values.iter_mut().zip(eta) {
        *v *= 1.0 + eps * e;
    }
    let m = out.mass();
    out.scale(f.mass() / m);
    out
}

fn random_direction(len: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn certify(
    steady_value: f64,
    n: usize,
    eps_choices: &[f64],
    rng: &mut impl Rng,
    mut perturbed_value: impl FnMut(&mut dyn FnMut() -> f64, f64) -> f64,
) -> CertificateReport {
    let mut min_gap = f64::INFINITY;
    let mut violations = 0;
    for i in 0..n {
        let eps = eps_choices[i % eps_choices.len()];
        let mut draw = || rng.gen_range(-1.0..1.0);
        let gap = perturbed_value(&mut draw, eps) - steady_value;
        min_gap = min_gap.min(gap);
        if !(gap > 0.0) {
            violations += 1;
        }
    }
    CertificateReport { steady_value, perturbations: n, min_gap, violations, first_variation: Vec::new(), second_difference: f64::NAN }
}

/// Mass-preserving perturbations `m (1 + eps eta)` of the plasma steady state
/// under `K_red`, plus a stationarity check along one direction.
pub fn minimizer_certificate_vmfp(
    sol: &VmfpSolution,
    v: &ExternalPotential,
    n: usize,
    eps_choices: &[f64],
    rng: &mut impl Rng,
) -> CertificateReport {
    let m = &sol.distribution;
    let base = reduced_entropy_vmfp(m, v);
    let len = m.values.len();
    let mut report = certify(base, n, eps_choices, rng, |draw, eps| {
        let eta: Vec<f64> = (0..len).map(|_| draw()).collect();
        reduced_entropy_vmfp(&perturb(m, &eta, eps), v)
    });
    let eta = random_direction(len, rng);
    report.first_variation = VARIATION_EPS
        .iter()
        .map(|&e| (e, (reduced_entropy_vmfp(&perturb(m, &eta, e), v) - base) / e))
        .collect();
    let e = VARIATION_EPS[VARIATION_EPS.len() - 1];
    report.second_difference =
        reduced_entropy_vmfp(&perturb(m, &eta, e), v) - 2.0 * base + reduced_entropy_vmfp(&perturb(m, &eta, -e), v);
    report
}

/// Compactly supported radial bump on `[r0 - h, r0 + h]`.
fn bump(grid: &RadialGrid, r0: f64, h: f64) -> Vec<f64> {
    grid.rs()
        .iter()
        .map(|&r| {
            let s = (r - r0) / h;
            if s.abs() < 1.0 { (1.0 - s * s).powi(2) } else { 0.0 }
        })
        .collect()
}

/// Joint perturbations of `(m_M, phi0)` under `E`: mass-preserving changes of
/// `f` and compactly supported bumps added to `phi0`.
pub fn minimizer_certificate_vnfp(
    sol: &VnfpSolution,
    v: &ExternalPotential,
    n: usize,
    eps_choices: &[f64],
    rng: &mut impl Rng,
) -> CertificateReport {
    let m = &sol.distribution;
    let phi = &sol.phi0;
    let grid = phi.grid;
    let base = energy_vnfp(m, phi, v).0;
    let len = m.values.len();
    let shifted = |dphi: &[f64], scale: f64| RadialField {
        grid,
        values: phi.values.iter().zip(dphi).map(|(a, b)| a + scale * b).collect(),
        far_field: phi.far_field,
    };
    let mut report = certify(base, n, eps_choices, rng, |draw, eps| {
        let eta: Vec<f64> = (0..len).map(|_| draw()).collect();
        let center = 0.5 * (draw() + 1.0) * 0.5 * grid.r_max;
        let width = 0.1 * grid.r_max * (1.0 + 0.5 * (draw() + 1.0));
        let amp = 0.05 * draw();
        let dphi = bump(&grid, center, width);
        energy_vnfp(&perturb(m, &eta, eps), &shifted(&dphi, eps * amp * 10.0), v).0
    });
    let eta = random_direction(len, rng);
    let dphi = bump(&grid, 0.25 * grid.r_max, 0.2 * grid.r_max);
    let value = |e: f64| energy_vnfp(&perturb(m, &eta, e), &shifted(&dphi, 0.5 * e), v).0;
    report.first_variation = VARIATION_EPS.iter().map(|&e| (e, (value(e) - base) / e)).collect();
    let e = VARIATION_EPS[VARIATION_EPS.len() - 1];
    report.second_difference = value(e) - 2.0 * base + value(-e);
    report
}

/// Largest relative residual of the static scalar-gravity kinetic equation
/// at Cartesian sample points `(x, p)`: transport
/// `d_p E . grad_x f - grad_x (E + V) . d_p f` and collision
/// `d_p . (Lambda d_p f + e^{2 phi} p f)` for `f = C exp(-E - V)`,
/// `E = sqrt(e^{2 phi} + |p|^2)`, each relative to the size of its terms.
pub fn vnfp_static_residual(sol: &VnfpSolution, v: &ExternalPotential, points: &[([f64; 3], [f64; 3])]) -> (f64, f64) {
    let h = 1e-4;
    let phi = |x: &[f64; 3]| sol.phi0.value_at((x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt());
    let pot = |x: &[f64; 3]| v.value((x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt());
    let e_of = |x: &[f64; 3], p: &[f64; 3]| ((2.0 * phi(x)).exp() + p.iter().map(|c| c * c).sum::<f64>()).sqrt();
    let f = |x: &[f64; 3], p: &[f64; 3]| (-e_of(x, p) - pot(x)).exp();
    let shift = |a: &[f64; 3], k: usize, d: f64| {
        let mut b = *a;
        b[k] += d;
        b
    };
    let grad = |g: &dyn Fn(&[f64; 3]) -> f64, a: &[f64; 3]| -> [f64; 3] {
        let mut out = [0.0; 3];
        for (k, o) in out.iter_mut().enumerate() {
            *o = (g(&shift(a, k, h)) - g(&shift(a, k, -h))) / (2.0 * h);
        }
        out
    };
    let mut worst_transport: f64 = 0.0;
    let mut worst_collision: f64 = 0.0;
    for (x, p) in points {
        let dp_e = grad(&|q| e_of(x, q), p);
        let dx_f = grad(&|y| f(y, p), x);
        let dx_ev = grad(&|y| e_of(y, p) + pot(y), x);
        let dp_f = grad(&|q| f(x, q), p);
        let a: f64 = (0..3).map(|k| dp_e[k] * dx_f[k]).sum();
        let b: f64 = (0..3).map(|k| dx_ev[k] * dp_f[k]).sum();
        let scale = a.abs().max(b.abs()).max(1e-300);
        worst_transport = worst_transport.max((a - b).abs() / scale);

        let ph = phi(x);
        let flux = |q: &[f64; 3], i: usize| -> f64 {
            let lam = conformal_diffusion_matrix(ph, q);
            let g = grad(&|s| f(x, s), q);
            (0..3).map(|j| lam.get(i, j) * g[j]).sum::<f64>() + (2.0 * ph).exp() * q[i] * f(x, q)
        };
        let mut div = 0.0;
        let mut size: f64 = 0.0;
        for i in 0..3 {
            let (up, down) = (flux(&shift(p, i, h), i), flux(&shift(p, i, -h), i));
            div += (up - down) / (2.0 * h);
            let lam = conformal_diffusion_matrix(ph, p);
            let dpf = grad(&|s| f(x, s), p);
            size = size.max((0..3).map(|j| lam.get(i, j) * dpf[j]).sum::<f64>().abs() / h);
        }
        worst_collision = worst_collision.max(div.abs() / size.max(1e-300));
    }
    (worst_transport, worst_collision)
}
