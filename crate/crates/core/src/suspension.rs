//! Constant-roof suspensions and their flow resonance lattice.
//!
//! Suspending a map with constant return time r turns each map resonance mu
//! into a vertical family of flow resonances `(2 pi j + lambda)/r`,
//! `lambda = i Log mu`, j over the integers. Everything spectral about the
//! flow is therefore a lattice computation on the accepted map resonances.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::perturbed_maps::{OrbitTable, PerturbedMap};
use crate::transfer::MapResonances;

const TAU: f64 = std::f64::consts::TAU;
const PI: f64 = std::f64::consts::PI;

#[derive(Clone, Debug)]
pub struct SuspensionFlow {
    base: PerturbedMap,
    roof: f64,
}

impl SuspensionFlow {
    pub fn new(base: PerturbedMap, roof: f64) -> Result<Self> {
        if !roof.is_finite() || roof <= 0.0 {
            return Err(Error::InvalidInput(format!("roof must be positive, got {roof}")));
        }
        Ok(SuspensionFlow { base, roof })
    }

    pub fn base(&self) -> &PerturbedMap {
        &self.base
    }

    pub fn roof(&self) -> f64 {
        self.roof
    }

    /// Dimension of the suspension manifold: base dimension plus the flow
    /// direction.
    pub fn flow_dim(&self) -> usize {
        self.base.dim() + 1
    }

    /// Flow period of a map orbit class with total map period p.
    pub fn period_of(&self, p: usize) -> f64 {
        p as f64 * self.roof
    }
}

/// `i Log mu` with the branch fixed so the real part lands in (-pi, pi].
pub(crate) fn rotation_log(mu: Complex64) -> Complex64 {
    let mut a = mu.arg();
    if a >= PI {
        a = -PI;
    }
    Complex64::new(-a, mu.norm().ln())
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct LatticePoint {
    pub family: usize,
    pub j: i64,
    pub re: f64,
    pub im: f64,
}

impl LatticePoint {
    pub fn lambda(&self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }
}

/// How much base spectrum the lattice is missing: families below `mu_min`
/// were dropped at extraction, and `discarded_power_sums[p-1]` bounds their
/// total contribution to the p-th trace.
#[derive(Clone, Debug, Serialize)]
pub struct SpectralTruncation {
    pub k_cut: usize,
    pub mu_min: f64,
    pub discarded_power_sums: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct FlowResonanceLattice {
    pub roof: f64,
    pub j_max: i64,
    /// Map resonances, one lattice family each, multiplicity preserved.
    pub mus: Vec<Complex64>,
    /// `i Log mu` per family.
    pub base_logs: Vec<Complex64>,
    /// All `(2 pi j + base_log)/roof` with |j| <= j_max, ordered by
    /// (family, j).
    pub entries: Vec<LatticePoint>,
    /// Present when the families came from a truncated transfer spectrum;
    /// None means the family list is exact.
    pub source: Option<SpectralTruncation>,
}

impl FlowResonanceLattice {
    pub fn new(roof: f64, mus: &[Complex64], j_max: i64) -> Result<Self> {
        if !roof.is_finite() || roof <= 0.0 {
            return Err(Error::InvalidInput(format!("roof must be positive, got {roof}")));
        }
        if j_max < 0 {
            return Err(Error::InvalidInput("j window must be nonnegative".into()));
        }
        // Every spectrum member gets its own family. A repeated resonance is
        // an algebraic multiplicity and must stay repeated, or the trace
        // sums lose its extra copy.
        let mut kept: Vec<Complex64> = Vec::new();
        for &mu in mus {
            if mu.norm() == 0.0 {
                return Err(Error::InvalidInput("zero map resonance".into()));
            }
            if mu.norm() > 1.0 + 1e-6 {
                return Err(Error::InvalidInput(format!(
                    "map resonance {mu} lies outside the closed unit disk"
                )));
            }
            kept.push(mu);
        }
        if kept.is_empty() {
            return Err(Error::InvalidInput("no map resonances supplied".into()));
        }
        let base_logs: Vec<Complex64> = kept.iter().map(|&mu| rotation_log(mu)).collect();
        let mut entries = Vec::with_capacity(kept.len() * (2 * j_max as usize + 1));
        for (family, lam) in base_logs.iter().enumerate() {
            for j in -j_max..=j_max {
                let z = (Complex64::new(TAU * j as f64, 0.0) + lam) / roof;
                entries.push(LatticePoint {
                    family,
                    j,
                    re: z.re,
                    im: z.im,
                });
            }
        }
        Ok(FlowResonanceLattice {
            roof,
            j_max,
            mus: kept,
            base_logs,
            entries,
            source: None,
        })
    }

    /// Lattice of the unperturbed suspension: the single family mu = 1.
    pub fn linear(roof: f64, j_max: i64) -> Result<Self> {
        Self::new(roof, &[Complex64::new(1.0, 0.0)], j_max)
    }

    pub fn from_resonances(roof: f64, res: &MapResonances, j_max: i64) -> Result<Self> {
        let mut lattice = Self::new(roof, &res.eigenvalues, j_max)?;
        lattice.source = Some(SpectralTruncation {
            k_cut: res.k_cut,
            mu_min: res.mu_min,
            discarded_power_sums: res.discarded_power_sums.clone(),
        });
        Ok(lattice)
    }

    /// Largest counting radius the j window supports.
    pub fn window_radius(&self) -> f64 {
        TAU * self.j_max as f64 / self.roof
    }

    fn guard(&self, radius: f64) -> Result<()> {
        if !(radius > 0.0) {
            return Err(Error::InvalidInput(format!("radius must be positive, got {radius}")));
        }
        if radius >= self.window_radius() {
            return Err(Error::WindowTooSmall {
                radius,
                window: self.window_radius(),
            });
        }
        Ok(())
    }

    /// `N_A(R)`: lattice points with `|lambda| <= R` and `Im lambda > -A`.
    pub fn counting(&self, radius: f64, depth: f64) -> Result<usize> {
        self.guard(radius)?;
        Ok(self
            .entries
            .iter()
            .filter(|p| p.lambda().norm() <= radius && p.im > -depth)
            .count())
    }

    /// Least-squares exponent of `log N(R)` against `log R`.
    pub fn counting_exponent(&self, radii: &[f64], depth: f64) -> Result<f64> {
        if radii.len() < 2 {
            return Err(Error::InvalidInput("exponent fit needs at least two radii".into()));
        }
        let mut xs = Vec::with_capacity(radii.len());
        let mut ys = Vec::with_capacity(radii.len());
        for &r in radii {
            let n = self.counting(r, depth)?;
            if n == 0 {
                return Err(Error::EmptyWindow { center: r });
            }
            xs.push(r.ln());
            ys.push((n as f64).ln());
        }
        let m = xs.len() as f64;
        let sx: f64 = xs.iter().sum();
        let sy: f64 = ys.iter().sum();
        let sxx: f64 = xs.iter().map(|x| x * x).sum();
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
        Ok((m * sxy - sx * sy) / (m * sxx - sx * sx))
    }

    /// The spectrum of a real operator reflects across the imaginary axis:
    /// for each entry, distance to the nearest `-conj` partner. Entries on
    /// the outermost j ring are skipped since their partner may fall just
    /// outside the window.
    pub fn conjugation_gap(&self) -> f64 {
        let mut worst = 0.0f64;
        for p in &self.entries {
            if p.j.abs() >= self.j_max {
                continue;
            }
            let target = Complex64::new(-p.re, p.im);
            let d = self
                .entries
                .iter()
                .map(|q| (q.lambda() - target).norm())
                .fold(f64::INFINITY, f64::min);
            worst = worst.max(d);
        }
        worst
    }

    /// Shifting the real part by `2 pi / roof` lands on the next j index;
    /// returns the largest mismatch over the interior of the window.
    pub fn periodicity_gap(&self) -> f64 {
        let shift = TAU / self.roof;
        let mut worst = 0.0f64;
        for p in &self.entries {
            if p.j >= self.j_max {
                continue;
            }
            let partner = self
                .entries
                .iter()
                .find(|q| q.family == p.family && q.j == p.j + 1)
                .expect("interior point has a successor");
            let d = (partner.lambda() - (p.lambda() + Complex64::new(shift, 0.0))).norm();
            worst = worst.max(d);
        }
        worst
    }

    /// Rows `family,j,re,im` in entry order.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("family,j,re,im\n");
        for p in &self.entries {
            out.push_str(&format!("{},{},{:.16e},{:.16e}\n", p.family, p.j, p.re, p.im));
        }
        out
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct StripReport {
    pub flow_dim: usize,
    pub delta: f64,
    pub theta0: f64,
    pub a_delta: f64,
    pub a0: f64,
    pub p2psi_u: f64,
    pub naud_strip: f64,
}

/// Strip constants of the suspension, all driven by the shortest primitive
/// orbit and a supplied pressure value for twice the unstable potential.
///
/// theta0 is the per-time unstable expansion of the shortest orbit;
/// `a_delta = theta0 (1 + (2n+1)/(1-delta))`, `a0 = theta0 (2n+2)`, and the
/// pressure-based strip is `(2n + 3/2) P(2 psi_u)` with n the flow
/// dimension.
pub fn strip_constants(
    flow: &SuspensionFlow,
    table: &OrbitTable,
    delta: f64,
    p2psi_u: f64,
) -> Result<StripReport> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidInput(format!("delta must lie in (0,1), got {delta}")));
    }
    // shortest primitive orbit; table order is (period, lexicographic seed)
    let classes = table.classes_up_to(table.horizon())?;
    let gamma0 = classes
        .iter()
        .find(|c| c.iterate == 1 && c.count > 0.0)
        .ok_or_else(|| Error::InvalidInput("orbit table has no primitive orbits".into()))?;
    let t0 = flow.period_of(gamma0.primitive_period);
    let theta0 = gamma0.unstable_log / t0;
    let n = flow.flow_dim() as f64;
    Ok(StripReport {
        flow_dim: flow.flow_dim(),
        delta,
        theta0,
        a_delta: theta0 * (1.0 + (2.0 * n + 1.0) / (1.0 - delta)),
        a0: theta0 * (2.0 * n + 2.0),
        p2psi_u,
        naud_strip: (2.0 * n + 1.5) * p2psi_u,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice_maps::ToralAutomorphism;

    #[test]
    fn linear_lattice_small_window() {
        let lat = FlowResonanceLattice::linear(1.0, 3).unwrap();
        assert_eq!(lat.entries.len(), 7);
        for p in &lat.entries {
            assert!((p.re - TAU * p.j as f64).abs() < 1e-14);
            assert!(p.im.abs() < 1e-14);
        }
    }

    #[test]
    fn linear_counting_values() {
        let lat = FlowResonanceLattice::linear(1.0, 1700).unwrap();
        assert_eq!(lat.counting(100.0, 1.0).unwrap(), 31);
        assert_eq!(lat.counting(1000.0, 1.0).unwrap(), 319);
        assert_eq!(lat.counting(10000.0, 1.0).unwrap(), 3183);
        assert_eq!(lat.counting(TAU - 0.01, 1.0).unwrap(), 1);
    }

    #[test]
    fn window_guard() {
        let lat = FlowResonanceLattice::linear(1.0, 10).unwrap();
        assert!(matches!(
            lat.counting(100.0, 1.0),
            Err(Error::WindowTooSmall { .. })
        ));
    }

    #[test]
    fn counting_exponent_near_one() {
        let lat = FlowResonanceLattice::linear(1.0, 1700).unwrap();
        let slope = lat
            .counting_exponent(&[100.0, 1000.0, 10000.0], 1.0)
            .unwrap();
        assert!((slope - 1.00577).abs() < 1e-3, "slope = {slope}");
        assert!(slope > 0.95 && slope < 1.05);
    }

    #[test]
    fn perturbed_lattice_structure() {
        // representative accepted spectrum: leading 1 and a real negative
        // pair; the pair's families sit at Re = pi/r with Im = log|mu|/r
        let mus = [
            Complex64::new(1.0, 0.0),
            Complex64::new(-0.0313659, 0.0),
            Complex64::new(-0.03136592, 0.0),
        ];
        let lat = FlowResonanceLattice::new(2.0, &mus, 40).unwrap();
        assert_eq!(lat.mus.len(), 3);
        for p in &lat.entries {
            if p.family == 0 {
                assert!(p.im.abs() < 1e-14);
            } else {
                let expect = (0.0313659f64).ln() / 2.0;
                assert!((p.im - expect).abs() < 1e-6);
                assert!(p.im < 0.0);
            }
        }
        assert!(lat.conjugation_gap() < 1e-9);
        assert!(lat.periodicity_gap() < 1e-12);
        // per-family linear upper bound on the disc count
        let r = 50.0;
        let n = lat.counting(r, f64::INFINITY).unwrap();
        let bound = lat.mus.len() as f64 * (r * 2.0 / PI + 1.0) * 1.05;
        assert!((n as f64) <= bound, "N = {n}, bound = {bound}");
    }

    #[test]
    fn families_keep_multiplicity() {
        // A repeated resonance is an algebraic multiplicity; every copy
        // keeps its own family or the trace sums would lose it.
        let mus = [
            Complex64::new(1.0, 0.0),
            Complex64::new(1.0 - 1e-12, 0.0),
            Complex64::new(0.5, 0.0),
        ];
        let lat = FlowResonanceLattice::new(1.0, &mus, 2).unwrap();
        assert_eq!(lat.mus.len(), 3);
        assert_eq!(lat.entries.len(), 15);
    }

    #[test]
    fn strip_constants_linear_closed_forms() {
        let base = PerturbedMap::standard_example(0.0);
        let flow = SuspensionFlow::new(base, 1.0).unwrap();
        let cat = ToralAutomorphism::cat_map();
        let table = OrbitTable::linear_aggregates(&cat, 4);
        let lp = (3.0 + 5f64.sqrt()) / 2.0;
        let rep = strip_constants(&flow, &table, 0.5, -lp.ln()).unwrap();
        assert_eq!(rep.flow_dim, 3);
        assert!((rep.theta0 - 0.9624236501192069).abs() < 1e-12);
        assert!((rep.a_delta - 14.436354751788103).abs() < 1e-10);
        assert!((rep.a0 - 7.699389200953655).abs() < 1e-10);
        assert!((rep.naud_strip - -7.218177375894052).abs() < 1e-10);
    }

    #[test]
    fn rejects_expanding_resonances() {
        let mus = [Complex64::new(1.2, 0.0)];
        assert!(FlowResonanceLattice::new(1.0, &mus, 2).is_err());
    }
}
