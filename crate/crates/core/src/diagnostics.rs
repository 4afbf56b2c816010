//! Functionals of a distribution on the phase grid: mass, free energy,
//! entropy dissipation, relative-entropy bounds, chi-square divergence,
//! continuity residual and the light-cone support check.

use std::io::Write;
use std::path::Path;

use crate::kinematics::energy;
use crate::phase_grid::{current, density, mass, DistributionField, ExternalPotential};
use crate::Error;

/// Relative threshold separating genuine support from rounding-level fill-in.
pub const SUPPORT_THRESHOLD: f64 = 1e-14;

/// Floor applied inside square roots and logarithms of `f`.
const DENSITY_FLOOR: f64 = 1e-300;

/// Tolerated relative mass mismatch for [`entropy_gap_lower_bound`].
pub const MASS_MATCH_TOL: f64 = 1e-8;

fn x_potential(f: &DistributionField, v: &ExternalPotential) -> Vec<f64> {
    f.grid().xs().iter().map(|&x| v.value(x)).collect()
}

fn sum_cells(f: &DistributionField, v: &ExternalPotential, log_part: impl Fn(f64) -> f64) -> f64 {
    let g = f.grid();
    let vx = x_potential(f, v);
    let e: Vec<f64> = (0..g.n_p).map(|j| energy(&[g.p(j)])).collect();
    let mut total = 0.0;
    for (i, vi) in vx.iter().enumerate() {
        for (j, &fij) in f.row(i).iter().enumerate() {
            if fij > 0.0 {
                total += fij * (e[j] + vi + log_part(fij));
            }
        }
    }
    total * g.cell_volume()
}

/// `Q[f] = int f (p0 + V + log f)`, with `f log f = 0` where `f = 0`.
pub fn free_energy(f: &DistributionField, v: &ExternalPotential) -> f64 {
    sum_cells(f, v, f64::ln)
}

/// `Q+[f] = int f (p0 + V + max(0, log f))`.
pub fn q_plus(f: &DistributionField, v: &ExternalPotential) -> f64 {
    sum_cells(f, v, |x| x.ln().max(0.0))
}

/// `4 int D d_p sqrt(f/J) d_p sqrt(f/J) J dp dx` with `J = exp(-p0)`.
///
/// Differences of `sqrt(f/J)` are taken across interior momentum faces,
/// where `D` and `J` are evaluated, so every term is a nonnegative square.
pub fn entropy_dissipation(f: &DistributionField) -> f64 {
    let g = f.grid();
    let dp = g.dp();
    let e: Vec<f64> = (0..g.n_p).map(|j| energy(&[g.p(j)])).collect();
    let face: Vec<(f64, f64)> = (1..g.n_p)
        .map(|k| {
            let ef = energy(&[g.p_face(k)]);
            (ef, (-ef).exp())
        })
        .collect();
    let mut total = 0.0;
    let mut s = vec![0.0; g.n_p];
    for i in 0..g.n_x {
        for (j, &fij) in f.row(i).iter().enumerate() {
            s[j] = (0.5 * (fij.max(DENSITY_FLOOR).ln() + e[j])).exp();
        }
        for (k, &(d, j_face)) in face.iter().enumerate() {
            let ds = (s[k + 1] - s[k]) / dp;
            total += d * j_face * ds * ds;
        }
    }
    4.0 * total * g.cell_volume()
}

/// `(Q[f] - Q[m], 1/2 int (sqrt f - sqrt m)^2)`; the first entry dominates
/// the second when `m` is the equilibrium with the mass of `f`.
pub fn entropy_gap_lower_bound(
    f: &DistributionField,
    m: &DistributionField,
    v: &ExternalPotential,
) -> Result<(f64, f64), Error> {
    if f.grid() != m.grid() {
        return Err(Error::InvalidArgument("fields live on different grids".into()));
    }
    let (mf, mm) = (mass(f), mass(m));
    if (mf - mm).abs() > MASS_MATCH_TOL * mm.abs().max(f64::MIN_POSITIVE) {
        return Err(Error::MassMismatch { lhs: mf, rhs: mm });
    }
    let lhs = free_energy(f, v) - free_energy(m, v);
    let rhs: f64 = f
        .values()
        .iter()
        .zip(m.values())
        .map(|(a, b)| {
            let d = a.sqrt() - b.sqrt();
            d * d
        })
        .sum::<f64>()
        * 0.5
        * f.grid().cell_volume();
    Ok((lhs, rhs))
}

/// `int (f/m)^2 m dp dx`.
pub fn chi2_divergence(f: &DistributionField, m: &DistributionField) -> f64 {
    f.values()
        .iter()
        .zip(m.values())
        .map(|(a, b)| if *a == 0.0 { 0.0 } else { a * a / b })
        .sum::<f64>()
        * f.grid().cell_volume()
}

/// `(rho_next - rho_prev)/dt + d_x (j_next + j_prev)/2` at interior x-cells,
/// centered differences; the two boundary cells are reported as zero.
pub fn continuity_residual(prev: &DistributionField, next: &DistributionField, dt: f64) -> Result<Vec<f64>, Error> {
    if prev.grid() != next.grid() {
        return Err(Error::InvalidArgument("fields live on different grids".into()));
    }
    let g = prev.grid();
    let (rp, rn) = (density(prev), density(next));
    let (jp, jn) = (current(prev), current(next));
    let j: Vec<f64> = jp.iter().zip(&jn).map(|(a, b)| 0.5 * (a + b)).collect();
    let mut out = vec![0.0; g.n_x];
    for i in 1..g.n_x.saturating_sub(1) {
        out[i] = (rn[i] - rp[i]) / dt + (j[i + 1] - j[i - 1]) / (2.0 * g.dx());
    }
    Ok(out)
}

/// Largest `|x_i - x0|` over columns holding a value above
/// `SUPPORT_THRESHOLD * max f`; zero for the zero field.
pub fn support_radius(f: &DistributionField, x0: f64) -> f64 {
    let g = f.grid();
    let cut = SUPPORT_THRESHOLD * f.max();
    if !(cut > 0.0) {
        return 0.0;
    }
    (0..g.n_x)
        .filter(|&i| f.row(i).iter().any(|&v| v > cut))
        .map(|i| (g.x(i) - x0).abs())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LightconeReport {
    pub passed: bool,
    /// `min_t (R + (t - t0) + dx - radius(t))`
    pub margin: f64,
    pub initial_radius: f64,
    /// time of the snapshot attaining the margin
    pub worst_time: f64,
}

/// Checks `support_radius(f(t)) <= R + (t - t0) + dx` for every snapshot,
/// with `R` the support radius of the first snapshot.
pub fn lightcone_check(snapshots: &[(f64, DistributionField)], t0: f64, x0: f64) -> Result<LightconeReport, Error> {
    let (first_t, first) = snapshots
        .first()
        .ok_or_else(|| Error::InvalidArgument("light-cone check needs at least one snapshot".into()))?;
    if snapshots.windows(2).any(|w| !(w[1].0 > w[0].0)) {
        return Err(Error::InvalidArgument("snapshot times must increase strictly".into()));
    }
    if *first_t < t0 {
        return Err(Error::InvalidArgument("snapshots start before the cone vertex time".into()));
    }
    let dx = first.grid().dx();
    let r0 = support_radius(first, x0);
    let mut margin = f64::INFINITY;
    let mut worst_time = *first_t;
    for (t, f) in snapshots {
        let m = r0 + (t - t0) + dx - support_radius(f, x0);
        if m < margin {
            margin = m;
            worst_time = *t;
        }
    }
    Ok(LightconeReport { passed: margin >= 0.0, margin, initial_radius: r0, worst_time })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticRecord {
    pub t: f64,
    pub mass: f64,
    pub q: f64,
    pub q_plus: f64,
    pub dissipation: f64,
    pub chi2: f64,
    pub support_radius: f64,
}

impl DiagnosticRecord {
    /// Evaluates every functional; `chi2` is NaN without a reference equilibrium.
    pub fn measure(t: f64, f: &DistributionField, v: &ExternalPotential, equilibrium: Option<&DistributionField>, x0: f64) -> Self {
        Self {
            t,
            mass: mass(f),
            q: free_energy(f, v),
            q_plus: q_plus(f, v),
            dissipation: entropy_dissipation(f),
            chi2: equilibrium.map_or(f64::NAN, |m| chi2_divergence(f, m)),
            support_radius: support_radius(f, x0),
        }
    }
}

/// Time series of diagnostic records, strictly increasing in `t`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DiagnosticSeries {
    records: Vec<DiagnosticRecord>,
}

pub const CSV_HEADER: &str = "t,mass,Q,Qplus,dissipation,chi2,support_radius";

impl DiagnosticSeries {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, record: DiagnosticRecord) -> Result<(), Error> {
        if let Some(last) = self.records.last() {
            if !(record.t > last.t) {
                return Err(Error::InvalidArgument(format!(
                    "diagnostic time {} does not follow {}",
                    record.t, last.t
                )));
            }
        }
        self.records.push(record);
        Ok(())
    }

    pub fn records(&self) -> &[DiagnosticRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Largest `|mass(t) - mass(0)| / mass(0)`.
    pub fn mass_drift(&self) -> f64 {
        let Some(first) = self.records.first() else { return 0.0 };
        self.records
            .iter()
            .map(|r| ((r.mass - first.mass) / first.mass).abs())
            .fold(0.0, f64::max)
    }

    /// `(Q(end) - Q(start), trapezoidal integral of the dissipation)`.
    pub fn entropy_balance(&self) -> (f64, f64) {
        let r = &self.records;
        if r.len() < 2 {
            return (0.0, 0.0);
        }
        let integral = r
            .windows(2)
            .map(|w| 0.5 * (w[1].t - w[0].t) * (w[0].dissipation + w[1].dissipation))
            .sum();
        (r[r.len() - 1].q - r[0].q, integral)
    }

    /// Number of consecutive records where `key` increases by more than
    /// `rel_tol` relative to its magnitude.
    pub fn count_increases(&self, key: impl Fn(&DiagnosticRecord) -> f64, rel_tol: f64) -> usize {
        self.records
            .windows(2)
            .filter(|w| {
                let (a, b) = (key(&w[0]), key(&w[1]));
                b - a > rel_tol * a.abs().max(b.abs())
            })
            .count()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for r in &self.records {
            s.push_str(&format!(
                "{:e},{:e},{:e},{:e},{:e},{:e},{:e}\n",
                r.t, r.mass, r.q, r.q_plus, r.dissipation, r.chi2, r.support_radius
            ));
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), Error> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        file.write_all(self.to_csv().as_bytes())?;
        file.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fp_solver::{equilibrium_normalization, steady_state_linear};
    use crate::phase_grid::PhaseGrid;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn grid() -> PhaseGrid {
        PhaseGrid::new(-8.0, 8.0, 8.0, 64, 64).unwrap()
    }

    #[test]
    fn free_energy_of_equilibrium_is_closed_form() {
        let g = grid();
        let v = ExternalPotential::harmonic();
        let theta = equilibrium_normalization(&v, &g);
        for m in [0.5, 1.0, 3.0] {
            let eq = steady_state_linear(m, &v, &g).unwrap();
            assert_abs_diff_eq!(free_energy(&eq, &v), m * (m / theta).ln(), epsilon = 1e-12);
        }
    }

    #[test]
    fn doubling_equilibrium_costs_two_m_log_two() {
        let g = grid();
        let v = ExternalPotential::harmonic();
        let m1 = steady_state_linear(1.0, &v, &g).unwrap();
        let m2 = steady_state_linear(2.0, &v, &g).unwrap();
        let mut doubled = m1.clone();
        doubled.scale(2.0);
        // 2 m_1 coincides with m_2; scaling by 2 adds 2 M log 2
        let gap = free_energy(&doubled, &v) - 2.0 * free_energy(&m1, &v);
        assert_abs_diff_eq!(gap, 2.0 * 2f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(free_energy(&doubled, &v), free_energy(&m2, &v), epsilon = 1e-12);
    }

    #[test]
    fn q_plus_dominates_q_and_zero_field_vanishes() {
        let g = grid();
        let v = ExternalPotential::harmonic();
        let eq = steady_state_linear(1.0, &v, &g).unwrap();
        assert!(q_plus(&eq, &v) >= free_energy(&eq, &v));
        let z = DistributionField::zeros(g);
        assert_eq!(free_energy(&z, &v), 0.0);
        assert!(entropy_dissipation(&z) < 1e-200);
        assert_eq!(support_radius(&z, 0.0), 0.0);
    }

    #[test]
    fn dissipation_vanishes_on_local_equilibria() {
        let g = grid();
        let v = ExternalPotential::harmonic();
        let eq = steady_state_linear(1.0, &v, &g).unwrap();
        assert!(entropy_dissipation(&eq) < 1e-20);
        let local = DistributionField::from_fn(g, |x, p| (2.0 + x.sin()) * (-energy(&[p])).exp()).unwrap();
        assert!(entropy_dissipation(&local) < 1e-20 * mass(&local).max(1.0));
    }

    #[test]
    fn dissipation_of_gaussian_matches_quadrature() {
        // f = exp(-p^2/2), independent of x on a unit-length slab
        let g = PhaseGrid::new(0.0, 1.0, 12.0, 1, 2400).unwrap();
        let f = DistributionField::from_fn(g, |_, p| (-0.5 * p * p).exp()).unwrap();
        // 4 int p0 J (d_p sqrt(f/J))^2 = int p0 f (p/p0 - p)^2
        let oracle = crate::special::integrate_adaptive(
            |p: f64| {
                let e = energy(&[p]);
                e * (-0.5 * p * p).exp() * (p / e - p).powi(2)
            },
            -12.0,
            12.0,
            1e-13,
            1e-13,
        )
        .value;
        assert_abs_diff_eq!(entropy_dissipation(&f), oracle, epsilon = 1e-5 * oracle);
    }

    #[test]
    fn chi2_special_cases() {
        let g = grid();
        let v = ExternalPotential::harmonic();
        let eq = steady_state_linear(1.5, &v, &g).unwrap();
        assert_abs_diff_eq!(chi2_divergence(&eq, &eq), 1.5, epsilon = 1e-12);
        assert_eq!(chi2_divergence(&DistributionField::zeros(g), &eq), 0.0);
    }

    #[test]
    fn lower_bound_pair_at_equilibrium_and_perturbation() {
        let g = grid();
        let v = ExternalPotential::harmonic();
        let eq = steady_state_linear(1.0, &v, &g).unwrap();
        let (l, r) = entropy_gap_lower_bound(&eq, &eq, &v).unwrap();
        assert_abs_diff_eq!(l, 0.0, epsilon = 1e-14);
        assert_eq!(r, 0.0);
        let mut f = DistributionField::from_fn(g, |x, p| {
            (1.0 + 0.5 * (x + p).sin()) * (-energy(&[p]) - 0.5 * x * x).exp()
        })
        .unwrap();
        f.scale(1.0 / mass(&f));
        let (l, r) = entropy_gap_lower_bound(&f, &eq, &v).unwrap();
        assert!(l >= r && r > 0.0, "{l} {r}");
        let mut heavy = f.clone();
        heavy.scale(1.1);
        assert!(matches!(entropy_gap_lower_bound(&heavy, &eq, &v), Err(Error::MassMismatch { .. })));
    }

    #[test]
    fn continuity_residual_of_static_even_field() {
        let g = grid();
        let f = DistributionField::from_fn(g, |x, p| (-x * x - p * p).exp()).unwrap();
        let r = continuity_residual(&f, &f, 0.01).unwrap();
        assert!(r.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn lightcone_flags_fast_growth() {
        let g = PhaseGrid::new(-4.0, 4.0, 4.0, 80, 8).unwrap();
        let blob = |w: f64| DistributionField::from_fn(g, move |x, _| if x.abs() < w { 1.0 } else { 0.0 }).unwrap();
        let ok = vec![(0.0, blob(1.0)), (0.5, blob(1.5)), (1.0, blob(1.95))];
        let rep = lightcone_check(&ok, 0.0, 0.0).unwrap();
        assert!(rep.passed, "{rep:?}");
        let bad = vec![(0.0, blob(1.0)), (0.5, blob(1.8))];
        let rep = lightcone_check(&bad, 0.0, 0.0).unwrap();
        assert!(!rep.passed);
        assert!(lightcone_check(&[], 0.0, 0.0).is_err());
    }

    #[test]
    fn series_csv_and_ordering() {
        let mut s = DiagnosticSeries::new();
        let rec = |t: f64| DiagnosticRecord { t, mass: 1.0, q: -t, q_plus: 0.0, dissipation: 1.0, chi2: 1.0, support_radius: 0.0 };
        s.push(rec(0.0)).unwrap();
        s.push(rec(1.0)).unwrap();
        assert!(s.push(rec(1.0)).is_err());
        let csv = s.to_csv();
        assert!(csv.starts_with(CSV_HEADER));
        assert_eq!(csv.lines().count(), 3);
        let (dq, diss) = s.entropy_balance();
        assert_abs_diff_eq!(dq + diss, 0.0, epsilon = 1e-15);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn dissipation_is_nonnegative(values in proptest::collection::vec(0.0f64..10.0, 16 * 16)) {
            let g = PhaseGrid::new(-1.0, 1.0, 3.0, 16, 16).unwrap();
            let f = DistributionField::from_values(g, values).unwrap();
            prop_assert!(entropy_dissipation(&f) >= 0.0);
        }

        #[test]
        fn free_energy_is_minimized_by_equilibrium(values in proptest::collection::vec(0.0f64..5.0, 16 * 16)) {
            let g = PhaseGrid::new(-4.0, 4.0, 4.0, 16, 16).unwrap();
            let v = ExternalPotential::Harmonic { strength: 4.0 };
            let f = DistributionField::from_values(g, values).unwrap();
            let m = mass(&f);
            prop_assume!(m > 1e-3);
            let eq = steady_state_linear(m, &v, &g).unwrap();
            prop_assert!(free_energy(&f, &v) >= free_energy(&eq, &v) - 1e-12 * m.max(1.0));
        }
    }
}
