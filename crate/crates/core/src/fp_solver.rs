//! Time stepping for the linear relativistic Fokker-Planck equation in one
//! space and one momentum dimension.
//!
//! A step composes a transport substep (free streaming at `p^` plus the
//! external force `-V'`) with a collision substep (`d_p (D d_p f + p f)`,
//! `D = p0`). Both substeps are written in flux form around the discrete
//! equilibrium `J_ij = exp(-V(x_i) - p0(p_j))`:
//!
//! * transport fluxes come from a discrete stream function
//!   `Psi = e^{-V(x_face)} (e^{-p0(p_face)} - e^{-p0(p_max)})`, so the flux
//!   field carried by any multiple of `J` is exactly divergence free and
//!   vanishes on the momentum boundary;
//! * collision fluxes use exponential fitting (Chang-Cooper weights, the
//!   logarithmic mean of `J` across each face), so they vanish identically on
//!   any multiple of `J` in every x-column.
//!
//! With the first-order integrators both substeps are nonnegative matrices
//! that conserve mass and fix `J`, which makes the scheme positivity
//! preserving and dissipative for every convex entropy relative to `J`.

use crate::kinematics::energy;
use crate::phase_grid::{DistributionField, ExternalPotential, PhaseGrid};
use crate::Error;

/// Largest admissible ratio `e^{-V}(boundary) / max e^{-V}` for building an
/// equilibrium on a finite grid.
pub const CONFINEMENT_TAIL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Splitting {
    /// transport(dt), then collision(dt)
    Lie,
    /// collision(dt/2), transport(dt), collision(dt/2)
    Strang,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CollisionWeights {
    ChangCooper,
    /// Central flux; does not preserve the discrete equilibrium.
    Centered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransportScheme {
    Upwind1,
    MusclMinmod,
    /// Central slopes limited only to keep face values nonnegative. Not
    /// monotone; requires the second-order integrator.
    MusclPositive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeIntegrator {
    /// Forward Euler transport, backward Euler collisions. Positivity preserving.
    FirstOrder,
    /// Heun transport, Crank-Nicolson collisions. Second order with Strang
    /// splitting; positivity is checked, not guaranteed.
    SecondOrder,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub dt: f64,
    pub t_end: f64,
    pub cfl_transport: f64,
    pub splitting: Splitting,
    pub collision_weights: CollisionWeights,
    pub transport_scheme: TransportScheme,
    pub integrator: TimeIntegrator,
    pub collisions_enabled: bool,
    /// Multiplies every x-velocity. Only for negative controls of the
    /// light-cone diagnostic; physical runs keep it at 1.
    #[doc(hidden)]
    pub superluminal_factor: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_end: 1.0,
            cfl_transport: 1.0,
            splitting: Splitting::Strang,
            collision_weights: CollisionWeights::ChangCooper,
            transport_scheme: TransportScheme::Upwind1,
            integrator: TimeIntegrator::FirstOrder,
            collisions_enabled: true,
            superluminal_factor: 1.0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), Error> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return bad(format!("t_end must be nonnegative, got {}", self.t_end));
        }
        if !(self.cfl_transport > 0.0 && self.cfl_transport <= 1.0) {
            return bad(format!("cfl_transport must lie in (0, 1], got {}", self.cfl_transport));
        }
        if self.transport_scheme == TransportScheme::MusclPositive && self.integrator == TimeIntegrator::FirstOrder {
            return bad("muscl-positive transport is unstable with forward Euler; use the second-order integrator".into());
        }
        if !(self.superluminal_factor > 0.0) {
            return bad("superluminal_factor must be positive".into());
        }
        Ok(())
    }

    /// Number of steps to reach `t_end`, rounding to the nearest integer.
    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub f: DistributionField,
    pub t: f64,
    pub step_count: usize,
}

impl SolverState {
    pub fn new(f: DistributionField) -> Self {
        Self { f, t: 0.0, step_count: 0 }
    }
}

/// Exponential-fit weights of the transport fluxes for one grid and potential.
#[derive(Debug, Clone)]
pub struct TransportOperator {
    grid: PhaseGrid,
    /// discrete velocity per momentum row
    velocity: Vec<f64>,
    /// `exp(V_i - V(x_face))` for the faces left (`lo`) and right (`hi`) of cell i
    v_ratio_lo: Vec<f64>,
    v_ratio_hi: Vec<f64>,
    /// discrete force `-V'` per x-column
    force: Vec<f64>,
    /// `exp(p0_j - p0(p_face)) - exp(p0_j - p0(p_max))` below / above cell j
    e_ratio_lo: Vec<f64>,
    e_ratio_hi: Vec<f64>,
    /// scaled equilibrium pieces for MUSCL reconstruction
    j_x: Vec<f64>,
    j_p: Vec<f64>,
    j_x_face: Vec<f64>,
    j_p_face: Vec<f64>,
    speed_factor: f64,
}

impl TransportOperator {
    pub fn new(grid: &PhaseGrid, potential: &ExternalPotential) -> Self {
        Self::with_speed_factor(grid, potential, 1.0)
    }

    fn with_speed_factor(grid: &PhaseGrid, potential: &ExternalPotential, speed_factor: f64) -> Self {
        let (dx, dp) = (grid.dx(), grid.dp());
        let e_cell: Vec<f64> = (0..grid.n_p).map(|j| energy(&[grid.p(j)])).collect();
        let e_face: Vec<f64> = (0..=grid.n_p).map(|j| energy(&[grid.p_face(j)])).collect();
        let e_max = energy(&[grid.p_max]);
        let v_cell: Vec<f64> = (0..grid.n_x).map(|i| potential.value(grid.x(i))).collect();
        let v_face: Vec<f64> = (0..=grid.n_x).map(|i| potential.value(grid.x_face(i))).collect();
        let v_min = v_cell.iter().copied().fold(f64::INFINITY, f64::min);

        let velocity = (0..grid.n_p)
            .map(|j| ((e_cell[j] - e_face[j]).exp() - (e_cell[j] - e_face[j + 1]).exp()) / dp)
            .collect();
        let e_ratio = |j: usize, face: usize| (e_cell[j] - e_face[face]).exp() - (e_cell[j] - e_max).exp();
        let e_ratio_lo = (0..grid.n_p).map(|j| e_ratio(j, j)).collect();
        let e_ratio_hi = (0..grid.n_p).map(|j| e_ratio(j, j + 1)).collect();
        let v_ratio_lo: Vec<f64> = (0..grid.n_x).map(|i| (v_cell[i] - v_face[i]).exp()).collect();
        let v_ratio_hi: Vec<f64> = (0..grid.n_x).map(|i| (v_cell[i] - v_face[i + 1]).exp()).collect();
        let force = (0..grid.n_x).map(|i| (v_ratio_hi[i] - v_ratio_lo[i]) / dx).collect();

        Self {
            grid: *grid,
            velocity,
            v_ratio_lo,
            v_ratio_hi,
            force,
            e_ratio_lo,
            e_ratio_hi,
            j_x: v_cell.iter().map(|v| (-(v - v_min)).exp()).collect(),
            j_p: e_cell.iter().map(|e| (-(e - 1.0)).exp()).collect(),
            j_x_face: v_face.iter().map(|v| (-(v - v_min)).exp()).collect(),
            j_p_face: e_face.iter().map(|e| (-(e - 1.0)).exp() - (-(e_max - 1.0)).exp()).collect(),
            speed_factor,
        }
    }

    /// Discrete streaming velocity of momentum row `j`.
    pub fn velocity(&self, j: usize) -> f64 {
        self.velocity[j] * self.speed_factor
    }

    /// `max_j |v_j|`; exceeds 1 by `O(dp^2)` because of the exponential fitting.
    pub fn max_speed(&self) -> f64 {
        (0..self.grid.n_p).map(|j| self.velocity(j).abs()).fold(0.0, f64::max)
    }

    /// Discrete force `-V'` acting on x-column `i`.
    pub fn force(&self, i: usize) -> f64 {
        self.force[i]
    }

    /// Upwind flux across the x-face left of cell `i` in row `j`; zero at the walls.
    fn x_flux(&self, f: &[f64], i: usize, j: usize) -> f64 {
        if i == 0 || i == self.grid.n_x {
            return 0.0;
        }
        let n_p = self.grid.n_p;
        let v = self.velocity(j);
        if v > 0.0 {
            v * self.v_ratio_hi[i - 1] * f[(i - 1) * n_p + j]
        } else {
            v * self.v_ratio_lo[i] * f[i * n_p + j]
        }
    }

    /// Upwind flux across the p-face below cell `j` in column `i`.
    fn p_flux(&self, f: &[f64], i: usize, j: usize) -> f64 {
        if j == 0 || j == self.grid.n_p {
            return 0.0;
        }
        let n_p = self.grid.n_p;
        let a = self.force[i];
        if a > 0.0 {
            a * self.e_ratio_hi[j - 1] * f[i * n_p + j - 1]
        } else {
            a * self.e_ratio_lo[j] * f[i * n_p + j]
        }
    }

    /// Largest outflow Courant numbers `(x, p, combined)` for time step `dt`.
    pub fn courant_numbers(&self, dt: f64) -> (f64, f64, f64) {
        let g = &self.grid;
        let (dx, dp) = (g.dx(), g.dp());
        let mut cx: f64 = 0.0;
        let mut cp: f64 = 0.0;
        let mut total: f64 = 0.0;
        for i in 0..g.n_x {
            for j in 0..g.n_p {
                let v = self.velocity(j);
                let out_x = if v > 0.0 {
                    if i + 1 < g.n_x { v * self.v_ratio_hi[i] } else { 0.0 }
                } else if i > 0 {
                    -v * self.v_ratio_lo[i]
                } else {
                    0.0
                };
                let a = self.force[i];
                let out_p = if a > 0.0 { a * self.e_ratio_hi[j] } else { -a * self.e_ratio_lo[j] };
                let (kx, kp) = (dt * out_x / dx, dt * out_p / dp);
                cx = cx.max(kx);
                cp = cp.max(kp);
                total = total.max(kx + kp);
            }
        }
        (cx, cp, total)
    }

    /// `-div(flux)` of the transport fluxes, written into `out`.
    fn rate(&self, f: &[f64], scheme: TransportScheme, out: &mut [f64]) {
        match scheme {
            TransportScheme::Upwind1 => self.rate_upwind(f, out),
            TransportScheme::MusclMinmod | TransportScheme::MusclPositive => self.rate_muscl(f, scheme, out),
        }
    }

    fn rate_upwind(&self, f: &[f64], out: &mut [f64]) {
        let g = self.grid;
        let (dx, dp) = (g.dx(), g.dp());
        for_each_column(out, g.n_p, |i, row| {
            for (j, r) in row.iter_mut().enumerate() {
                let div_x = (self.x_flux(f, i + 1, j) - self.x_flux(f, i, j)) / dx;
                let div_p = (self.p_flux(f, i, j + 1) - self.p_flux(f, i, j)) / dp;
                *r = -(div_x + div_p);
            }
        });
    }

    fn rate_muscl(&self, f: &[f64], scheme: TransportScheme, out: &mut [f64]) {
        let g = self.grid;
        let (n_x, n_p) = (g.n_x, g.n_p);
        let (dx, dp) = (g.dx(), g.dp());
        let ratio: Vec<f64> = (0..n_x * n_p)
            .map(|k| f[k] / (self.j_x[k / n_p] * self.j_p[k % n_p]))
            .collect();
        let at = |i: usize, j: usize| ratio[i * n_p + j];
        let minmod = scheme == TransportScheme::MusclMinmod;
        let slope = |a: f64, b: f64, center: f64| {
            if minmod {
                if a * b <= 0.0 { 0.0 } else if a.abs() < b.abs() { a } else { b }
            } else {
                (0.5 * (a + b)).clamp(-2.0 * center, 2.0 * center)
            }
        };
        let x_slope = |i: usize, j: usize| {
            if i == 0 || i + 1 == n_x {
                0.0
            } else {
                slope(at(i, j) - at(i - 1, j), at(i + 1, j) - at(i, j), at(i, j))
            }
        };
        let p_slope = |i: usize, j: usize| {
            if j == 0 || j + 1 == n_p {
                0.0
            } else {
                slope(at(i, j) - at(i, j - 1), at(i, j + 1) - at(i, j), at(i, j))
            }
        };
        let x_flux = |i: usize, j: usize| {
            if i == 0 || i == n_x {
                return 0.0;
            }
            let v = self.velocity(j);
            let face = if v > 0.0 {
                at(i - 1, j) + 0.5 * x_slope(i - 1, j)
            } else {
                at(i, j) - 0.5 * x_slope(i, j)
            };
            v * self.j_p[j] * self.j_x_face[i] * face
        };
        let p_flux = |i: usize, j: usize| {
            if j == 0 || j == n_p {
                return 0.0;
            }
            let a = self.force[i];
            let face = if a > 0.0 {
                at(i, j - 1) + 0.5 * p_slope(i, j - 1)
            } else {
                at(i, j) - 0.5 * p_slope(i, j)
            };
            a * self.j_x[i] * self.j_p_face[j] * face
        };
        for_each_column(out, n_p, |i, row| {
            for (j, r) in row.iter_mut().enumerate() {
                let div_x = (x_flux(i + 1, j) - x_flux(i, j)) / dx;
                let div_p = (p_flux(i, j + 1) - p_flux(i, j)) / dp;
                *r = -(div_x + div_p);
            }
        });
    }
}

#[cfg(feature = "parallel")]
fn for_each_column(out: &mut [f64], n_p: usize, body: impl Fn(usize, &mut [f64]) + Sync + Send) {
    use rayon::prelude::*;
    out.par_chunks_mut(n_p).enumerate().for_each(|(i, row)| body(i, row));
}

#[cfg(not(feature = "parallel"))]
fn for_each_column(out: &mut [f64], n_p: usize, body: impl Fn(usize, &mut [f64])) {
    out.chunks_mut(n_p).enumerate().for_each(|(i, row)| body(i, row));
}

/// Tridiagonal collision operator shared by every x-column.
#[derive(Debug, Clone)]
pub struct CollisionOperator {
    n_p: usize,
    /// coefficient of `f_{j-1}` in `(L f)_j`
    lower: Vec<f64>,
    diag: Vec<f64>,
    /// coefficient of `f_{j+1}` in `(L f)_j`
    upper: Vec<f64>,
}

impl CollisionOperator {
    pub fn new(grid: &PhaseGrid, weights: CollisionWeights) -> Self {
        let n = grid.n_p;
        let dp = grid.dp();
        // face k sits between cells k-1 and k; flux A_k = alpha_k f_k - beta_k f_{k-1}
        let mut alpha = vec![0.0; n + 1];
        let mut beta = vec![0.0; n + 1];
        for k in 1..n {
            let pf = grid.p_face(k);
            let d = energy(&[pf]) / dp;
            match weights {
                CollisionWeights::ChangCooper => {
                    let delta = energy(&[grid.p(k)]) - energy(&[grid.p(k - 1)]);
                    let (up, down) = fitted_weights(delta);
                    alpha[k] = d * up;
                    beta[k] = d * down;
                }
                CollisionWeights::Centered => {
                    alpha[k] = d + 0.5 * pf;
                    beta[k] = d - 0.5 * pf;
                }
            }
        }
        let mut lower = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut upper = vec![0.0; n];
        for j in 0..n {
            // (L f)_j = (A_{j+1} - A_j) / dp
            upper[j] = alpha[j + 1] / dp;
            diag[j] = -(beta[j + 1] + alpha[j]) / dp;
            lower[j] = beta[j] / dp;
        }
        Self { n_p: n, lower, diag, upper }
    }

    /// `(L f)` for one momentum column.
    pub fn apply(&self, f: &[f64], out: &mut [f64]) {
        let n = self.n_p;
        for j in 0..n {
            let mut v = self.diag[j] * f[j];
            if j > 0 {
                v += self.lower[j] * f[j - 1];
            }
            if j + 1 < n {
                v += self.upper[j] * f[j + 1];
            }
            out[j] = v;
        }
    }

    /// Solves `(I - theta dt L) x = rhs` in place for one column.
    fn solve(&self, theta_dt: f64, rhs: &mut [f64], column: usize, scratch: &mut [f64]) -> Result<(), Error> {
        let n = self.n_p;
        let a = |j: usize| -theta_dt * self.lower[j];
        let b = |j: usize| 1.0 - theta_dt * self.diag[j];
        let c = |j: usize| -theta_dt * self.upper[j];
        let mut denom = b(0);
        if !(denom > 0.0) || !denom.is_finite() {
            return Err(Error::SingularSolve { column });
        }
        scratch[0] = c(0) / denom;
        rhs[0] /= denom;
        for j in 1..n {
            denom = b(j) - a(j) * scratch[j - 1];
            if !(denom > 0.0) || !denom.is_finite() {
                return Err(Error::SingularSolve { column });
            }
            scratch[j] = c(j) / denom;
            rhs[j] = (rhs[j] - a(j) * rhs[j - 1]) / denom;
        }
        for j in (0..n - 1).rev() {
            rhs[j] -= scratch[j] * rhs[j + 1];
        }
        Ok(())
    }
}

/// Exponential-fit weights `(e^d - 1)/d` and `(1 - e^{-d})/d`.
fn fitted_weights(delta: f64) -> (f64, f64) {
    if delta.abs() < 1e-8 {
        (1.0 + 0.5 * delta, 1.0 - 0.5 * delta)
    } else {
        (delta.exp_m1() / delta, -(-delta).exp_m1() / delta)
    }
}

/// Precomputed operators for repeated stepping on one grid.
#[derive(Debug, Clone)]
pub struct FpSolver {
    config: SolverConfig,
    transport: TransportOperator,
    collision: CollisionOperator,
}

impl FpSolver {
    pub fn new(grid: &PhaseGrid, potential: &ExternalPotential, config: SolverConfig) -> Result<Self, Error> {
        config.validate()?;
        let transport = TransportOperator::with_speed_factor(grid, potential, config.superluminal_factor);
        let collision = CollisionOperator::new(grid, config.collision_weights);
        let solver = Self { config, transport, collision };
        solver.check_cfl()?;
        if config_needs_equilibrium_scale(&solver.config)
            && (solver.transport.j_x.iter().any(|&v| v == 0.0) || solver.transport.j_p.iter().any(|&v| v == 0.0))
        {
            return Err(Error::InvalidArgument(
                "MUSCL reconstruction needs e^{-V} representable on the whole grid".into(),
            ));
        }
        Ok(solver)
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn transport(&self) -> &TransportOperator {
        &self.transport
    }

    pub fn collision(&self) -> &CollisionOperator {
        &self.collision
    }

    fn check_cfl(&self) -> Result<(), Error> {
        let (cx, cp, total) = self.transport.courant_numbers(self.config.dt);
        let limit = self.config.cfl_transport;
        if cx > limit {
            return Err(Error::Cfl { ratio_name: "dt*max|v_x|/dx", value: cx, limit });
        }
        if cp > limit {
            return Err(Error::Cfl { ratio_name: "dt*max|V'|/dp", value: cp, limit });
        }
        let positivity = match self.config.transport_scheme {
            TransportScheme::Upwind1 => 1.0,
            TransportScheme::MusclMinmod | TransportScheme::MusclPositive => 0.5,
        };
        if total > positivity {
            return Err(Error::Cfl { ratio_name: "combined outflow Courant number", value: total, limit: positivity });
        }
        Ok(())
    }

    /// Transport substep of length `dt`.
    pub fn transport_substep(&self, f: &mut DistributionField, dt: f64) {
        let scheme = self.config.transport_scheme;
        let n = f.values().len();
        let mut rate = vec![0.0; n];
        match self.config.integrator {
            TimeIntegrator::FirstOrder => {
                self.transport.rate(f.values(), scheme, &mut rate);
                for (v, r) in f.values_mut().iter_mut().zip(&rate) {
                    *v = (*v + dt * r).max(0.0);
                }
            }
            TimeIntegrator::SecondOrder => {
                let f0 = f.values().to_vec();
                self.transport.rate(&f0, scheme, &mut rate);
                let f1: Vec<f64> = f0.iter().zip(&rate).map(|(v, r)| v + dt * r).collect();
                self.transport.rate(&f1, scheme, &mut rate);
                for ((v, a), (b, r)) in f.values_mut().iter_mut().zip(&f0).zip(f1.iter().zip(&rate)) {
                    *v = 0.5 * (a + b + dt * r);
                }
            }
        }
    }

    /// Collision substep of length `dt` on every x-column.
    pub fn collision_substep(&self, f: &mut DistributionField, dt: f64) -> Result<(), Error> {
        let n_p = f.grid().n_p;
        let op = &self.collision;
        let integrator = self.config.integrator;
        let solve_column = |i: usize, col: &mut [f64]| -> Result<(), Error> {
            let mut scratch = vec![0.0; n_p];
            match integrator {
                TimeIntegrator::FirstOrder => op.solve(dt, col, i, &mut scratch),
                TimeIntegrator::SecondOrder => {
                    let mut lf = vec![0.0; n_p];
                    op.apply(col, &mut lf);
                    for (c, l) in col.iter_mut().zip(&lf) {
                        *c += 0.5 * dt * l;
                    }
                    op.solve(0.5 * dt, col, i, &mut scratch)
                }
            }
        };
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            f.values_mut()
                .par_chunks_mut(n_p)
                .enumerate()
                .try_for_each(|(i, col)| solve_column(i, col))?;
        }
        #[cfg(not(feature = "parallel"))]
        {
            for (i, col) in f.values_mut().chunks_mut(n_p).enumerate() {
                solve_column(i, col)?;
            }
        }
        Ok(())
    }

    /// Advances `state` by one time step.
    pub fn step(&self, state: &mut SolverState) -> Result<(), Error> {
        let dt = self.config.dt;
        if !self.config.collisions_enabled {
            self.transport_substep(&mut state.f, dt);
        } else {
            match self.config.splitting {
                Splitting::Lie => {
                    self.transport_substep(&mut state.f, dt);
                    self.collision_substep(&mut state.f, dt)?;
                }
                Splitting::Strang => {
                    self.collision_substep(&mut state.f, 0.5 * dt)?;
                    self.transport_substep(&mut state.f, dt);
                    self.collision_substep(&mut state.f, 0.5 * dt)?;
                }
            }
        }
        if self.config.integrator == TimeIntegrator::SecondOrder {
            // second-order integrators are not monotone; clip rounding-level undershoot
            // and report anything larger
            let floor = -1e-12 * state.f.max();
            if state.f.min() < floor {
                return Err(Error::InvalidArgument(format!(
                    "second-order step produced negative values (min {:.3e}); reduce dt",
                    state.f.min()
                )));
            }
            state.f.values_mut().iter_mut().for_each(|v| *v = v.max(0.0));
        }
        state.t += dt;
        state.step_count += 1;
        Ok(())
    }

    /// Runs to `t_end`, calling `observe` after the initial state and after every step.
    pub fn run(&self, state: &mut SolverState, mut observe: impl FnMut(&SolverState)) -> Result<(), Error> {
        observe(state);
        for _ in 0..self.config.n_steps() {
            self.step(state)?;
            observe(state);
        }
        Ok(())
    }
}

fn config_needs_equilibrium_scale(config: &SolverConfig) -> bool {
    config.transport_scheme != TransportScheme::Upwind1
}

/// One explicit transport substep with the default upwind scheme.
pub fn transport_step(f: &DistributionField, potential: &ExternalPotential, dt: f64) -> Result<DistributionField, Error> {
    let config = SolverConfig { dt, collisions_enabled: false, ..SolverConfig::default() };
    let solver = FpSolver::new(f.grid(), potential, config)?;
    let mut out = f.clone();
    solver.transport_substep(&mut out, dt);
    Ok(out)
}

/// One backward-Euler collision substep with Chang-Cooper weights.
pub fn collision_step(f: &DistributionField, dt: f64) -> Result<DistributionField, Error> {
    let op = CollisionOperator::new(f.grid(), CollisionWeights::ChangCooper);
    let n_p = f.grid().n_p;
    let mut out = f.clone();
    let mut scratch = vec![0.0; n_p];
    for (i, col) in out.values_mut().chunks_mut(n_p).enumerate() {
        op.solve(dt, col, i, &mut scratch)?;
    }
    Ok(out)
}

/// One full step of `state` with a freshly built solver.
pub fn step(state: &mut SolverState, potential: &ExternalPotential, config: &SolverConfig) -> Result<(), Error> {
    FpSolver::new(state.f.grid(), potential, config.clone())?.step(state)
}

/// Discrete equilibrium of mass `total_mass`: `(M / Theta) exp(-p0 - V)` with
/// `Theta` the grid quadrature of the same profile.
pub fn steady_state_linear(total_mass: f64, potential: &ExternalPotential, grid: &PhaseGrid) -> Result<DistributionField, Error> {
    if !(total_mass > 0.0) || !total_mass.is_finite() {
        return Err(Error::InvalidArgument(format!("mass must be positive, got {total_mass}")));
    }
    let xs = grid.xs();
    let tail = potential.tail_ratio(grid.x_min, grid.x_max, &xs);
    if !(tail <= CONFINEMENT_TAIL) {
        return Err(Error::NotConfining(format!(
            "e^(-V) at the x-boundary is {tail:.3e} of its maximum (limit {CONFINEMENT_TAIL:.0e})"
        )));
    }
    let v: Vec<f64> = xs.iter().map(|&x| potential.value(x)).collect();
    let v_min = v.iter().copied().fold(f64::INFINITY, f64::min);
    let wx: Vec<f64> = v.iter().map(|vi| (-(vi - v_min)).exp()).collect();
    let wp: Vec<f64> = (0..grid.n_p).map(|j| (-energy(&[grid.p(j)])).exp()).collect();
    let theta_scaled = wx.iter().sum::<f64>() * wp.iter().sum::<f64>() * grid.cell_volume();
    if !(theta_scaled > 0.0) || !theta_scaled.is_finite() {
        return Err(Error::NotConfining(format!("normalization Theta = {theta_scaled}")));
    }
    let c = total_mass / theta_scaled;
    let mut values = Vec::with_capacity(grid.len());
    for a in &wx {
        for b in &wp {
            values.push(c * a * b);
        }
    }
    DistributionField::from_values(*grid, values)
}

/// `Theta = int exp(-p0 - V) dp dx` on the grid, unscaled.
pub fn equilibrium_normalization(potential: &ExternalPotential, grid: &PhaseGrid) -> f64 {
    let sx: f64 = grid.xs().iter().map(|&x| (-potential.value(x)).exp()).sum();
    let sp: f64 = (0..grid.n_p).map(|j| (-energy(&[grid.p(j)])).exp()).sum();
    sx * sp * grid.cell_volume()
}
