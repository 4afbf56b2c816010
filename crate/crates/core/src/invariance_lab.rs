//! Frame-change checks for the frictionless kinetic operators.
//!
//! Residuals of the relativistic operator
//! `d_t f + p^ . grad_x f - grad V . grad_p f - d_{p_i}(beta p_i f + D_ij d_{p_j} f)`
//! and of its classical counterpart (`p` in place of `p^`, `D = I`) are
//! evaluated on closed-form test functions by nested central differences with
//! one Richardson extrapolation. Comparing the residual of `f` at a point with
//! the residual of the transformed function at the transformed point tests
//! whether the operator commutes with the frame change.
//!
//! For Lorentz boosts the scalar `p0 * residual` (the `p^mu d_mu` form of the
//! transport term, minus the Laplace-Beltrami operator of the mass shell) is
//! frame independent, so `r_boosted = r_original * p0 / p0~`.

use std::sync::Arc;

use rand::Rng;

use crate::kinematics::{diffusion_matrix, energy, galilean_boost, lorentz_boost, rel_velocity, BoostVelocity, Event};
use crate::phase_grid::ExternalPotential;
use crate::Error;

/// Default finite-difference step.
pub const DEFAULT_STEP: f64 = 1e-3;

type Evaluator = dyn Fn(f64, &[f64], &[f64]) -> f64 + Send + Sync;

/// A closed-form `f(t, x, p)` on `R x R^d x R^d`.
#[derive(Clone)]
pub struct TestFunction {
    name: String,
    dim: usize,
    eval: Arc<Evaluator>,
}

impl std::fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TestFunction").field("name", &self.name).field("dim", &self.dim).finish()
    }
}

impl TestFunction {
    pub fn new(name: impl Into<String>, dim: usize, eval: impl Fn(f64, &[f64], &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self { name: name.into(), dim, eval: Arc::new(eval) }
    }

    /// `exp(-|x - xc|^2 / (2 sx^2) - |p - pc|^2 / (2 sp^2))`, static.
    pub fn gaussian(x_center: Vec<f64>, p_center: Vec<f64>, sigma_x: f64, sigma_p: f64) -> Result<Self, Error> {
        if x_center.len() != p_center.len() || x_center.is_empty() || x_center.len() > 3 {
            return Err(Error::InvalidArgument("gaussian centers need matching dimension 1..=3".into()));
        }
        if !(sigma_x > 0.0 && sigma_p > 0.0) {
            return Err(Error::InvalidArgument("gaussian widths must be positive".into()));
        }
        let dim = x_center.len();
        Ok(Self::new("gaussian", dim, move |_, x, p| {
            let dx: f64 = x.iter().zip(&x_center).map(|(a, b)| (a - b) * (a - b)).sum();
            let dp: f64 = p.iter().zip(&p_center).map(|(a, b)| (a - b) * (a - b)).sum();
            (-0.5 * dx / (sigma_x * sigma_x) - 0.5 * dp / (sigma_p * sigma_p)).exp()
        }))
    }

    /// Gaussian times `(1 + a t + b x_0 p_0)`, breaking the static and
    /// product structure.
    pub fn gaussian_polynomial(x_center: Vec<f64>, p_center: Vec<f64>, a: f64, b: f64) -> Result<Self, Error> {
        let g = Self::gaussian(x_center, p_center, 1.0, 1.0)?;
        let dim = g.dim;
        Ok(Self::new("gaussian-polynomial", dim, move |t, x, p| {
            (g.eval)(t, x, p) * (1.0 + a * t + b * x[0] * p[0])
        }))
    }

    /// Jüttner profile `exp(-p0)`, independent of `t` and `x`.
    pub fn juttner(dim: usize) -> Self {
        Self::new("juttner", dim, |_, _, p| (-energy(p)).exp())
    }

    /// `exp(-p0 - k |x|^2 / 2)`, static for the harmonic potential of strength `k`.
    pub fn harmonic_equilibrium(dim: usize, strength: f64) -> Self {
        Self::new("harmonic-equilibrium", dim, move |_, x, p| {
            let r2: f64 = x.iter().map(|c| c * c).sum();
            (-energy(p) - 0.5 * strength * r2).exp()
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval(&self, t: f64, x: &[f64], p: &[f64]) -> f64 {
        (self.eval)(t, x, p)
    }

    /// `f~ = f o L^{-1}` for a Lorentz boost `L` with velocity `u`.
    pub fn lorentz_transformed(&self, u: &BoostVelocity) -> Self {
        let inverse = u.negated();
        let inner = self.clone();
        Self::new(format!("{}~lorentz", self.name), self.dim, move |t, x, p| {
            let e = lorentz_boost(&inverse, &Event::new(t, x.to_vec(), p.to_vec()));
            inner.eval(e.t, &e.x, &e.p)
        })
    }

    /// `f~(t, x, p) = f(t, x + u t, p + u)`.
    pub fn galilean_transformed(&self, u: &[f64]) -> Self {
        let minus: Vec<f64> = u.iter().map(|c| -c).collect();
        let inner = self.clone();
        Self::new(format!("{}~galilean", self.name), self.dim, move |t, x, p| {
            let e = galilean_boost(&minus, &Event::new(t, x.to_vec(), p.to_vec()));
            inner.eval(e.t, &e.x, &e.p)
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorKind {
    /// velocity `p / p0`, diffusion `(I + p p^T) / p0`
    Relativistic,
    /// velocity `p`, diffusion `I`
    Classical,
}

/// Parameters of the kinetic operator; the potential acts radially, `V(|x|)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorParams {
    pub kind: OperatorKind,
    pub beta: f64,
    pub potential: ExternalPotential,
}

impl OperatorParams {
    pub fn relativistic(beta: f64) -> Self {
        Self { kind: OperatorKind::Relativistic, beta, potential: ExternalPotential::Zero }
    }

    pub fn classical(beta: f64) -> Self {
        Self { kind: OperatorKind::Classical, beta, potential: ExternalPotential::Zero }
    }
}

fn shifted(v: &[f64], k: usize, h: f64) -> Vec<f64> {
    let mut w = v.to_vec();
    w[k] += h;
    w
}

/// Operator residual with plain second-order central differences of step `h`.
fn residual_central(f: &TestFunction, z: &Event, params: &OperatorParams, h: f64) -> f64 {
    let d = z.x.len();
    let (t, x, p) = (z.t, &z.x, &z.p);
    let ev = |t: f64, x: &[f64], p: &[f64]| f.eval(t, x, p);

    let dt = (ev(t + h, x, p) - ev(t - h, x, p)) / (2.0 * h);
    let velocity = match params.kind {
        OperatorKind::Relativistic => rel_velocity(p),
        OperatorKind::Classical => p.to_vec(),
    };
    let mut transport = dt;
    for k in 0..d {
        let dxk = (ev(t, &shifted(x, k, h), p) - ev(t, &shifted(x, k, -h), p)) / (2.0 * h);
        transport += velocity[k] * dxk;
    }

    let r = x.iter().map(|c| c * c).sum::<f64>().sqrt();
    if r > 0.0 && params.potential != ExternalPotential::Zero {
        let dv = params.potential.gradient(r) / r;
        for k in 0..d {
            let dpk = (ev(t, x, &shifted(p, k, h)) - ev(t, x, &shifted(p, k, -h))) / (2.0 * h);
            transport -= dv * x[k] * dpk;
        }
    }

    // momentum flux beta p_i f + D_ij d_j f at a momentum point
    let flux = |q: &[f64], i: usize| -> f64 {
        let mut s = params.beta * q[i] * ev(t, x, q);
        let grad: Vec<f64> = (0..d)
            .map(|j| (ev(t, x, &shifted(q, j, h)) - ev(t, x, &shifted(q, j, -h))) / (2.0 * h))
            .collect();
        match params.kind {
            OperatorKind::Relativistic => {
                let dm = diffusion_matrix(q);
                for (j, g) in grad.iter().enumerate() {
                    s += dm.get(i, j) * g;
                }
            }
            OperatorKind::Classical => s += grad[i],
        }
        s
    };
    let mut collision = 0.0;
    for i in 0..d {
        collision += (flux(&shifted(p, i, h), i) - flux(&shifted(p, i, -h), i)) / (2.0 * h);
    }
    transport - collision
}

/// Richardson-extrapolated operator residual, fourth order in `h`.
pub fn operator_residual(f: &TestFunction, point: &Event, params: &OperatorParams, h: f64) -> f64 {
    let coarse = residual_central(f, point, params, h);
    let fine = residual_central(f, point, params, 0.5 * h);
    (4.0 * fine - coarse) / 3.0
}

/// Relativistic operator residual without external potential, default step.
pub fn relativistic_operator_residual(f: &TestFunction, point: &Event, beta: f64) -> f64 {
    operator_residual(f, point, &OperatorParams::relativistic(beta), DEFAULT_STEP)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvarianceSample {
    pub point: Event,
    pub transformed: Event,
    pub r_original: f64,
    pub r_boosted: f64,
    /// factor mapping `r_original` onto the expected `r_boosted`
    pub weight: f64,
}

impl InvarianceSample {
    pub fn discrepancy(&self) -> f64 {
        (self.r_original * self.weight - self.r_boosted).abs()
    }
}

/// Residuals of `f` at `points` and of the boosted function at the boosted points.
pub fn lorentz_invariance_residual(
    u: &BoostVelocity,
    f: &TestFunction,
    points: &[Event],
    beta: f64,
    h: f64,
) -> Vec<InvarianceSample> {
    let params = OperatorParams::relativistic(beta);
    let boosted = f.lorentz_transformed(u);
    points
        .iter()
        .map(|z| {
            let zt = lorentz_boost(u, z);
            InvarianceSample {
                r_original: operator_residual(f, z, &params, h),
                r_boosted: operator_residual(&boosted, &zt, &params, h),
                weight: energy(&z.p) / energy(&zt.p),
                point: z.clone(),
                transformed: zt,
            }
        })
        .collect()
}

/// Same comparison for the classical operator and a Galilean boost; weight 1.
pub fn galilean_invariance_residual(u: &[f64], f: &TestFunction, points: &[Event], beta: f64, h: f64) -> Vec<InvarianceSample> {
    let params = OperatorParams::classical(beta);
    let boosted = f.galilean_transformed(u);
    points
        .iter()
        .map(|z| {
            let zt = galilean_boost(u, z);
            InvarianceSample {
                r_original: operator_residual(f, z, &params, h),
                r_boosted: operator_residual(&boosted, &zt, &params, h),
                weight: 1.0,
                point: z.clone(),
                transformed: zt,
            }
        })
        .collect()
}

/// Random sample points with `|x|, |p| <= radius` and `t` in `[0, 1]`.
pub fn sample_points(dim: usize, n: usize, radius: f64, rng: &mut impl Rng) -> Vec<Event> {
    let ball = |rng: &mut _| -> Vec<f64> {
        // rejection sampling from the enclosing cube
        loop {
            let v: Vec<f64> = (0..dim).map(|_| Rng::gen_range(rng, -1.0..1.0)).collect();
            let n2: f64 = v.iter().map(|c| c * c).sum();
            if n2 <= 1.0 {
                return v.iter().map(|c| c * radius).collect();
            }
        }
    };
    (0..n)
        .map(|_| {
            let x = ball(rng);
            let p = ball(rng);
            Event::new(rng.gen_range(0.0..1.0), x, p)
        })
        .collect()
}

/// Largest discrepancy over the samples.
pub fn max_discrepancy(samples: &[InvarianceSample]) -> f64 {
    samples.iter().map(InvarianceSample::discrepancy).fold(0.0, f64::max)
}

/// Observed orders `log2(e_k / e_{k+1})` for errors at steps halving each time.
pub fn observed_orders(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn points(n: usize) -> Vec<Event> {
        sample_points(3, n, 3.0, &mut ChaCha8Rng::seed_from_u64(7))
    }

    #[test]
    fn juttner_is_static_with_friction_only() {
        let f = TestFunction::juttner(3);
        for z in points(10) {
            assert!(relativistic_operator_residual(&f, &z, 1.0).abs() < 1e-8);
        }
        // without friction the residual is d_p.(p J) = (d - |p|^2/p0) J
        let z = Event::new(0.0, vec![0.0; 3], vec![0.5, -0.2, 0.1]);
        let p0 = energy(&z.p);
        let p2: f64 = z.p.iter().map(|c| c * c).sum();
        let expected = (3.0 - p2 / p0) * (-p0).exp();
        let r = relativistic_operator_residual(&f, &z, 0.0);
        assert!((r - expected).abs() < 1e-7, "{r} vs {expected}");
    }

    #[test]
    fn juttner_residual_converges_at_fourth_order() {
        let f = TestFunction::juttner(3);
        let z = Event::new(0.0, vec![0.0; 3], vec![0.7, 0.3, -0.4]);
        let params = OperatorParams::relativistic(1.0);
        let errs: Vec<f64> = [0.2, 0.1, 0.05].iter().map(|&h| operator_residual(&f, &z, &params, h).abs()).collect();
        let orders = observed_orders(&errs);
        assert!(orders.iter().all(|&o| o > 3.5), "{orders:?}");
    }

    #[test]
    fn harmonic_equilibrium_is_static() {
        let f = TestFunction::harmonic_equilibrium(3, 1.0);
        let params = OperatorParams { potential: ExternalPotential::harmonic(), ..OperatorParams::relativistic(1.0) };
        for z in points(10) {
            assert!(operator_residual(&f, &z, &params, DEFAULT_STEP).abs() < 1e-8);
        }
    }

    #[test]
    fn zero_boost_is_identity() {
        let f = TestFunction::gaussian(vec![0.5, 0.0, 0.0], vec![0.2, 0.1, 0.0], 1.0, 1.0).unwrap();
        let u = BoostVelocity::new(vec![0.0; 3]).unwrap();
        for s in lorentz_invariance_residual(&u, &f, &points(5), 0.0, 0.01) {
            assert_eq!(s.r_original, s.r_boosted);
        }
        for s in galilean_invariance_residual(&[0.0; 3], &f, &points(5), 0.0, 0.01) {
            assert_eq!(s.r_original, s.r_boosted);
        }
    }

    #[test]
    fn classical_gaussian_residual_matches_hand_computation() {
        // 1-d, f = exp(-x^2/2 - p^2/2): residual = -x p f - (p^2 - 1) f - beta (1 - p^2) f
        let f = TestFunction::gaussian(vec![0.0], vec![0.0], 1.0, 1.0).unwrap();
        let (x, p): (f64, f64) = (0.4, -0.9);
        let fv = (-0.5 * x * x - 0.5 * p * p).exp();
        for beta in [0.0, 1.0] {
            let z = Event::new(0.0, vec![x], vec![p]);
            let r = operator_residual(&f, &z, &OperatorParams::classical(beta), 1e-3);
            let expected = -x * p * fv - (p * p - 1.0) * fv - beta * (1.0 - p * p) * fv;
            assert!((r - expected).abs() < 1e-8, "{r} {expected}");
        }
    }

    #[test]
    fn lorentz_agreement_and_friction_control() {
        let f = TestFunction::gaussian(vec![0.3, -0.2, 0.1], vec![0.4, 0.0, -0.3], 1.2, 1.0).unwrap();
        let u = BoostVelocity::new(vec![0.3, 0.0, 0.0]).unwrap();
        let pts = points(20);
        let ok = max_discrepancy(&lorentz_invariance_residual(&u, &f, &pts, 0.0, 0.02));
        assert!(ok < 1e-6, "{ok}");
        let bad = max_discrepancy(&lorentz_invariance_residual(&u, &f, &pts, 1.0, 0.02));
        assert!(bad > 1e-2, "{bad}");
    }

    #[test]
    fn galilean_agreement_and_friction_control() {
        let f = TestFunction::gaussian_polynomial(vec![0.3, -0.2, 0.1], vec![0.4, 0.0, -0.3], 0.5, 0.2).unwrap();
        let pts = points(20);
        let u = [1.0, 0.0, 0.0];
        let ok = max_discrepancy(&galilean_invariance_residual(&u, &f, &pts, 0.0, 0.02));
        assert!(ok < 1e-6, "{ok}");
        let bad = max_discrepancy(&galilean_invariance_residual(&u, &f, &pts, 1.0, 0.02));
        assert!(bad > 1e-2, "{bad}");
    }

    #[test]
    fn sample_points_respect_radius() {
        for z in points(50) {
            assert!(z.x.iter().map(|c| c * c).sum::<f64>().sqrt() <= 3.0);
            assert!(z.p.iter().map(|c| c * c).sum::<f64>().sqrt() <= 3.0);
        }
    }
}
