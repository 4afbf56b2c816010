use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;

use relfp::diagnostics::{chi2_divergence, entropy_gap_lower_bound, free_energy};
use relfp::fp_solver::{steady_state_linear, FpSolver, SolverConfig, SolverState, TimeIntegrator, TransportScheme};
use relfp::kinematics::{diffusion_matrix, energy, hyperbolic_metric, lorentz_boost, BoostVelocity, Event};
use relfp::mean_field::{poisson_radial, poisson_residual, FarField, RadialField, RadialGrid};
use relfp::phase_grid::{mass, DistributionField, ExternalPotential, PhaseGrid};

fn small_grid() -> PhaseGrid {
    PhaseGrid::new(-8.0, 8.0, 6.0, 16, 16).unwrap()
}

fn field(values: Vec<f64>) -> DistributionField {
    let mut f = DistributionField::from_values(small_grid(), values.into_iter().map(|v| v + 1e-3).collect()).unwrap();
    f.scale(1.0 / mass(&f));
    f
}

fn vec3() -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-2.0f64..2.0, 3)
}

fn boost() -> impl Strategy<Value = BoostVelocity> {
    proptest::collection::vec(-0.57f64..0.57, 3).prop_map(|u| BoostVelocity::new(u).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn boost_preserves_interval_and_mass_shell(u in boost(), t in -2.0f64..2.0, x in vec3(), p in vec3()) {
        let e = Event::new(t, x.clone(), p.clone());
        let b = lorentz_boost(&u, &e);
        let interval = |e: &Event| e.t * e.t - e.x.iter().map(|c| c * c).sum::<f64>();
        prop_assert!((interval(&e) - interval(&b)).abs() < 1e-10);
        let uv = u.components();
        let expected_p0 = u.u0() * energy(&p) - uv.iter().zip(&p).map(|(a, b)| a * b).sum::<f64>();
        prop_assert!((energy(&b.p) - expected_p0).abs() < 1e-10 * expected_p0);
    }

    #[test]
    fn inverse_boost_round_trips(u in boost(), t in -2.0f64..2.0, x in vec3(), p in vec3()) {
        let e = Event::new(t, x, p);
        let back = lorentz_boost(&u.negated(), &lorentz_boost(&u, &e));
        prop_assert!((back.t - e.t).abs() < 1e-10);
        for (a, b) in back.x.iter().zip(&e.x).chain(back.p.iter().zip(&e.p)) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn diffusion_matrix_spectrum(p in vec3()) {
        let d = diffusion_matrix(&p);
        let m = DMatrix::from_fn(3, 3, |i, j| d.get(i, j));
        let eig = SymmetricEigen::new(m).eigenvalues;
        let p0 = energy(&p);
        let mut ev: Vec<f64> = eig.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        prop_assert!((ev[0] - 1.0 / p0).abs() < 1e-12 && (ev[1] - 1.0 / p0).abs() < 1e-12);
        prop_assert!((ev[2] - p0).abs() < 1e-10 * p0);
        let g = hyperbolic_metric(&p);
        let prod = g.h.mul(&g.h_inv);
        for (i, row) in prod.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                prop_assert!((v - f64::from(u8::from(i == j))).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn steps_preserve_mass_and_positivity(
        values in proptest::collection::vec(0.0f64..1.0, 256),
        muscl in any::<bool>(),
    ) {
        let (scheme, integrator) = if muscl {
            (TransportScheme::MusclPositive, TimeIntegrator::SecondOrder)
        } else {
            (TransportScheme::Upwind1, TimeIntegrator::FirstOrder)
        };
        let config = SolverConfig { dt: 0.005, t_end: 0.2, transport_scheme: scheme, integrator, ..SolverConfig::default() };
        let v = ExternalPotential::harmonic();
        let solver = FpSolver::new(&small_grid(), &v, config).unwrap();
        let mut state = SolverState::new(field(values));
        solver.run(&mut state, |_| ()).unwrap();
        prop_assert!((mass(&state.f) - 1.0).abs() < 1e-13);
        prop_assert!(state.f.min() >= 0.0);
    }

    #[test]
    fn chi2_and_free_energy_decrease_each_step(values in proptest::collection::vec(0.0f64..1.0, 256)) {
        let v = ExternalPotential::harmonic();
        let g = small_grid();
        let m = steady_state_linear(1.0, &v, &g).unwrap();
        let solver = FpSolver::new(&g, &v, SolverConfig { dt: 0.01, ..SolverConfig::default() }).unwrap();
        let mut state = SolverState::new(field(values));
        for _ in 0..20 {
            let (c0, q0) = (chi2_divergence(&state.f, &m), free_energy(&state.f, &v));
            solver.step(&mut state).unwrap();
            prop_assert!(chi2_divergence(&state.f, &m) <= c0 * (1.0 + 1e-12));
            prop_assert!(free_energy(&state.f, &v) <= q0 + 1e-12 * q0.abs());
        }
        let (lhs, rhs) = entropy_gap_lower_bound(&state.f, &m, &v).unwrap();
        prop_assert!(lhs >= rhs);
    }

    #[test]
    fn radial_poisson_is_exact_for_its_discretization(values in proptest::collection::vec(0.0f64..1.0, 40)) {
        let grid = RadialGrid::new(4.0, 40).unwrap();
        let g = RadialField::new(grid, values, FarField::Zero).unwrap();
        let u = poisson_radial(&g);
        prop_assert!(poisson_residual(&u, &g) < 1e-12 * (1.0 + g.weighted_l2()));
        prop_assert!(u.values.windows(2).all(|w| w[1] <= w[0] + 1e-15));
    }
}
