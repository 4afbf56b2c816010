//! Browser bindings: a relaxing phase-space distribution, radial mean-field
//! profiles and the Bessel oracle table.

use relfp::cli::oracle_table;
use relfp::diagnostics::{entropy_dissipation, free_energy};
use relfp::fp_solver::{FpSolver, SolverConfig, SolverState};
use relfp::kinematics::energy;
use relfp::mean_field::{vmfp_steady, vnfp_steady, FixedPointConfig, MomentumQuadrature, RadialGrid};
use relfp::phase_grid::{density, mass, DistributionField, ExternalPotential, PhaseGrid};
use wasm_bindgen::prelude::*;

fn js_error(e: relfp::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// A shifted Jüttner profile relaxing toward equilibrium in a harmonic trap.
#[wasm_bindgen]
pub struct Relaxation {
    solver: FpSolver,
    state: SolverState,
    potential: ExternalPotential,
}

#[wasm_bindgen]
impl Relaxation {
    /// `n` cells per direction on `[-8, 8]^2`; `shift` is the initial mean momentum.
    #[wasm_bindgen(constructor)]
    pub fn new(n: usize, shift: f64, strength: f64) -> Result<Relaxation, JsError> {
        let grid = PhaseGrid::new(-8.0, 8.0, 8.0, n, n).map_err(js_error)?;
        let potential = ExternalPotential::Harmonic { strength };
        let mut f = DistributionField::from_fn(grid, |x, p| (-0.5 * x * x - energy(&[p - shift])).exp()).map_err(js_error)?;
        f.scale(1.0 / mass(&f));
        let dt = 0.5 * grid.dx().min(grid.dp()) / (1.0 + 8.0 * strength);
        let config = SolverConfig { dt, t_end: dt, ..SolverConfig::default() };
        let solver = FpSolver::new(&grid, &potential, config).map_err(js_error)?;
        Ok(Self { solver, state: SolverState::new(f), potential })
    }

    /// Advances `steps` time steps.
    pub fn advance(&mut self, steps: usize) -> Result<(), JsError> {
        for _ in 0..steps {
            self.solver.step(&mut self.state).map_err(js_error)?;
        }
        Ok(())
    }

    pub fn time(&self) -> f64 {
        self.state.t
    }

    pub fn side(&self) -> usize {
        self.state.f.grid().n_x
    }

    /// Row-major `f(x_i, p_j)`, x-major.
    pub fn values(&self) -> Vec<f64> {
        self.state.f.values().to_vec()
    }

    pub fn density(&self) -> Vec<f64> {
        density(&self.state.f)
    }

    pub fn free_energy(&self) -> f64 {
        free_energy(&self.state.f, &self.potential)
    }

    pub fn dissipation(&self) -> f64 {
        entropy_dissipation(&self.state.f)
    }

    pub fn mass(&self) -> f64 {
        mass(&self.state.f)
    }
}

/// Radial steady state of mass `m` in a unit harmonic trap. `model` is
/// `"vmfp"` (returns `r, U, rho` interleaved) or `"vnfp"` (returns `r, phi0, source`).
#[wasm_bindgen]
pub fn radial_profile(model: &str, m: f64, n_r: usize) -> Result<Vec<f64>, JsError> {
    let grid = RadialGrid::new(8.0, n_r).map_err(js_error)?;
    let momentum = MomentumQuadrature::new(60.0, 24, 12).map_err(js_error)?;
    let v = ExternalPotential::harmonic();
    let config = FixedPointConfig { mass: m, tol: 1e-10, ..FixedPointConfig::default() };
    let (a, b) = match model {
        "vmfp" => {
            let s = vmfp_steady(&v, &grid, &momentum, &config).map_err(js_error)?;
            (s.potential.values, s.density.values)
        }
        "vnfp" => {
            let s = vnfp_steady(&v, &grid, &momentum, &config).map_err(js_error)?;
            (s.phi0.values, s.source.values)
        }
        other => return Err(JsError::new(&format!("unknown model {other:?}; use \"vmfp\" or \"vnfp\""))),
    };
    Ok(grid.rs().iter().zip(a.iter().zip(&b)).flat_map(|(r, (a, b))| [*r, *a, *b]).collect())
}

/// Tab-separated rows `name, quadrature, closed form, |difference|`.
#[wasm_bindgen]
pub fn oracle_report() -> Result<String, JsError> {
    let rows = oracle_table().map_err(js_error)?;
    Ok(rows
        .iter()
        .map(|(n, q, c)| format!("{n}\t{q:.15}\t{c:.15}\t{:.2e}", (q - c).abs()))
        .collect::<Vec<_>>()
        .join("\n"))
}
