//! Weighted dynamical zeta function of a suspension flow.
//!
//! The logarithmic derivative is kept in two independent representations: a
//! finite orbit sum carrying an explicit geometric tail bound, and a closed
//! form driven by the resonances of the base map. Their agreement on a grid is
//! the main consistency check between orbit data and spectral data. Contour
//! integration of the closed form counts lattice poles with integer winding.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::par;
use crate::perturbed_maps::{FlowOrbitClass, OrbitTable};
use crate::suspension::{rotation_log, SuspensionFlow};
use crate::transfer::MapResonances;

use std::f64::consts::PI;

/// Orbit sums converge like e^{-Im(lambda) T}; below this imaginary part the
/// truncation error is not usefully small at practical horizons.
pub const LOG_DERIV_MARGIN: f64 = 0.05;

/// The zeta value itself is only evaluated well inside the convergence
/// half-plane.
pub const ZETA_MARGIN: f64 = 0.5;

/// Denominator modulus below which the resonance form refuses to evaluate.
pub const POLE_GAP: f64 = 1e-8;

/// Contour refinement target for pole counting.
pub const RESIDUE_TOL: f64 = 1e-8;

/// The converged contour integral must sit this close to an integer.
pub const WINDING_TOL: f64 = 1e-6;

const CONTOUR_NODES_START: usize = 256;
const CONTOUR_NODES_MAX: usize = 1 << 16;

/// A value together with a rigorous bound on the truncated tail.
#[derive(Clone, Copy, Debug)]
pub struct Evaluation {
    pub value: Complex64,
    pub tail_bound: f64,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ScanRow {
    pub re_lambda: f64,
    pub im_lambda: f64,
    pub re_value: f64,
    pub im_value: f64,
    pub tail_bound: f64,
}

/// Evaluates the zeta function of `flow` from a finite orbit inventory and,
/// independently, from the resonances of the base map.
pub struct ZetaEvaluator {
    flow: SuspensionFlow,
    res: MapResonances,
    t_max: f64,
    /// Orbit classes with flow period <= t_max, ordered by flow period.
    classes: Vec<FlowOrbitClass>,
    /// Coefficient of the geometric tail envelope.
    tail_amp: f64,
}

impl ZetaEvaluator {
    /// `t_max` caps the orbit sums at flow period t_max. It must cover at
    /// least three returns of the roof so the leading periods are present.
    pub fn new(
        flow: SuspensionFlow,
        table: &OrbitTable,
        res: MapResonances,
        t_max: f64,
    ) -> Result<Self> {
        let r = flow.roof();
        if !t_max.is_finite() || t_max < 3.0 * r {
            return Err(Error::InvalidInput(format!(
                "t_max = {t_max} must cover at least three roof returns ({})",
                3.0 * r
            )));
        }
        let p_cap = (t_max / r).floor() as usize;
        let mut classes = table.classes_up_to(p_cap)?;
        // Stable: classes of equal flow period keep their table order, so
        // sums are reproducible run to run.
        classes.sort_by_key(|c| c.map_period());

        let mut period_sums = vec![0.0f64; p_cap];
        for c in &classes {
            period_sums[c.map_period() - 1] +=
                c.count * c.primitive_period as f64 / c.inv_weight;
        }
        let peak = period_sums.iter().cloned().fold(1.0f64, f64::max);
        Ok(ZetaEvaluator {
            flow,
            res,
            t_max,
            classes,
            tail_amp: 2.0 * peak,
        })
    }

    pub fn flow(&self) -> &SuspensionFlow {
        &self.flow
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    fn require_margin(lambda: Complex64, margin: f64) -> Result<f64> {
        if lambda.im < margin {
            return Err(Error::ConvergenceMargin {
                value: lambda.im,
                tol: margin,
            });
        }
        Ok(lambda.im)
    }

    /// Sum of e^{-a p r} over map periods p beyond the horizon, with the
    /// envelope coefficient folded in.
    fn tail_geometric(&self, a: f64) -> f64 {
        let r = self.flow.roof();
        self.tail_amp * (-a * self.t_max).exp() / (-(-a * r).exp_m1())
    }

    /// Orbit-sum form of d/dlambda log zeta: (1/i) sum over orbits of
    /// T_prim e^{i lambda T} / |det(I - P)|, truncated at T <= t_max.
    pub fn log_deriv_orbit_sum(&self, lambda: Complex64) -> Result<Evaluation> {
        let a = Self::require_margin(lambda, LOG_DERIV_MARGIN)?;
        let r = self.flow.roof();
        let mut sum = Complex64::new(0.0, 0.0);
        for c in &self.classes {
            let t_prim = c.primitive_period as f64 * r;
            let t_total = c.map_period() as f64 * r;
            let phase = (Complex64::i() * lambda * t_total).exp();
            sum += phase * (c.count * t_prim / c.inv_weight);
        }
        Ok(Evaluation {
            value: sum * Complex64::new(0.0, -1.0),
            tail_bound: r * self.tail_geometric(a),
        })
    }

    /// Resonance form of the same log derivative: each base resonance mu
    /// contributes (r/i) mu e^{i lambda r} / (1 - mu e^{i lambda r}), a
    /// geometric resummation of the orbit sum with no truncation error.
    pub fn log_deriv_resonance_form(&self, lambda: Complex64) -> Result<Complex64> {
        let r = self.flow.roof();
        let ph = (Complex64::i() * lambda * r).exp();
        let mut sum = Complex64::new(0.0, 0.0);
        for (k, &mu) in self.res.eigenvalues.iter().enumerate() {
            let denom = Complex64::new(1.0, 0.0) - mu * ph;
            if denom.norm() < POLE_GAP {
                let lam_k = rotation_log(mu);
                let j = ((lambda.re * r - lam_k.re) / (2.0 * PI)).round() as i64;
                return Err(Error::NearPole {
                    k,
                    j,
                    dist: denom.norm(),
                });
            }
            sum += mu * ph / denom;
        }
        Ok(sum * Complex64::new(0.0, -r))
    }

    /// All poles of the resonance form whose real part falls in
    /// [re_lo, re_hi], as points in the lambda plane.
    fn poles_in_band(&self, re_lo: f64, re_hi: f64) -> Vec<Complex64> {
        let r = self.flow.roof();
        let mut poles = Vec::new();
        for &mu in &self.res.eigenvalues {
            let lam_k = rotation_log(mu);
            let j_lo = ((re_lo * r - lam_k.re) / (2.0 * PI)).floor() as i64 - 1;
            let j_hi = ((re_hi * r - lam_k.re) / (2.0 * PI)).ceil() as i64 + 1;
            for j in j_lo..=j_hi {
                poles.push(Complex64::new(
                    (2.0 * PI * j as f64 + lam_k.re) / r,
                    lam_k.im / r,
                ));
            }
        }
        poles
    }

    /// Number of resonance lattice points enclosed by the circle around
    /// `center`, computed as the winding of the resonance form. Every pole is
    /// simple with residue one, so the contour integral is a count.
    pub fn residue_at(&self, center: Complex64, radius: f64) -> Result<i64> {
        self.winding_with_drift(center, radius).map(|(w, _)| w)
    }

    /// Winding number together with how far the contour integral sat from
    /// it; the drift is the numerical evidence that the count is exact.
    pub fn winding_with_drift(&self, center: Complex64, radius: f64) -> Result<(i64, f64)> {
        if !radius.is_finite() || radius <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "contour radius must be positive, got {radius}"
            )));
        }
        for pole in self.poles_in_band(center.re - radius, center.re + radius) {
            let gap = ((pole - center).norm() - radius).abs();
            if gap < radius / 2.0 {
                return Err(Error::PoleOnContour { dist: gap });
            }
        }

        let contour = |n: usize| -> Result<Complex64> {
            let terms = par::map_range(n, |m| {
                let theta = 2.0 * PI * (m as f64 + 0.5) / n as f64;
                let dir = Complex64::new(0.0, theta).exp();
                self.log_deriv_resonance_form(center + radius * dir)
                    .map(|v| v * dir)
            });
            let mut total = Complex64::new(0.0, 0.0);
            for t in terms {
                total += t?;
            }
            Ok(total * radius / n as f64)
        };

        let mut nodes = CONTOUR_NODES_START;
        let mut prev = contour(nodes)?;
        let integral = loop {
            nodes *= 2;
            let cur = contour(nodes)?;
            let step = (cur - prev).norm();
            if step < RESIDUE_TOL {
                break cur;
            }
            if nodes >= CONTOUR_NODES_MAX {
                return Err(Error::QuadratureNonconvergence {
                    target: RESIDUE_TOL,
                    reached: step,
                });
            }
            prev = cur;
        };

        let winding = integral.re.round();
        let drift = (integral - winding).norm();
        if drift >= WINDING_TOL {
            return Err(Error::ConvergenceMargin {
                value: drift,
                tol: WINDING_TOL,
            });
        }
        Ok((winding as i64, drift))
    }

    /// zeta_1(lambda) = exp(-sum over orbit classes of
    /// e^{i lambda T} / (n |det(I - P)|)), n the iterate count.
    pub fn zeta1_value(&self, lambda: Complex64) -> Result<Evaluation> {
        let a = Self::require_margin(lambda, ZETA_MARGIN)?;
        let r = self.flow.roof();
        let mut log_sum = Complex64::new(0.0, 0.0);
        for c in &self.classes {
            let t_total = c.map_period() as f64 * r;
            let phase = (Complex64::i() * lambda * t_total).exp();
            log_sum += phase * (c.count / (c.iterate as f64 * c.inv_weight));
        }
        let value = (-log_sum).exp();
        let log_tail = self.tail_geometric(a);
        Ok(Evaluation {
            value,
            tail_bound: value.norm() * log_tail.exp_m1(),
        })
    }

    /// Orbit-sum log derivative on a batch of points. Rows come back in
    /// input order regardless of thread width.
    pub fn scan(&self, lambdas: &[Complex64]) -> Result<Vec<ScanRow>> {
        let rows = par::map_range(lambdas.len(), |i| {
            let lambda = lambdas[i];
            self.log_deriv_orbit_sum(lambda).map(|e| ScanRow {
                re_lambda: lambda.re,
                im_lambda: lambda.im,
                re_value: e.value.re,
                im_value: e.value.im,
                tail_bound: e.tail_bound,
            })
        });
        rows.into_iter().collect()
    }
}

pub fn scan_to_csv(rows: &[ScanRow]) -> String {
    let mut out = String::from("re_lambda,im_lambda,re_value,im_value,tail_bound\n");
    for row in rows {
        out.push_str(&format!(
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
            row.re_lambda, row.im_lambda, row.re_value, row.im_value, row.tail_bound
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice_maps::ToralAutomorphism;
    use crate::perturbed_maps::{Perturbation, PerturbedMap};
    use std::f64::consts::E;

    fn linear_flow(roof: f64) -> SuspensionFlow {
        let map = ToralAutomorphism::cat_map();
        let linear = PerturbedMap::new(map, 0.0, Perturbation::empty(2)).unwrap();
        SuspensionFlow::new(linear, roof).unwrap()
    }

    fn linear_eval(roof: f64, t_max: f64) -> ZetaEvaluator {
        let map = ToralAutomorphism::cat_map();
        let horizon = (t_max / roof).floor() as usize;
        let table = OrbitTable::linear_aggregates(&map, horizon);
        ZetaEvaluator::new(linear_flow(roof), &table, MapResonances::exact_linear(), t_max)
            .unwrap()
    }

    // Unit roof: per-period weights telescope to exactly 1, so the log
    // derivative at lambda = i is -i / (e - 1) up to the e^{-40} tail.
    #[test]
    fn log_derivative_at_i_matches_closed_form() {
        let ev = linear_eval(1.0, 40.0);
        let got = ev.log_deriv_orbit_sum(Complex64::i()).unwrap();
        assert!(got.value.re.abs() < 1e-15);
        assert!((got.value.im - (-0.5819767068693264)).abs() < 1e-14);
        assert!((got.value.im + 1.0 / (E - 1.0)).abs() < 1e-14);
        assert!(got.tail_bound < 1e-15);
    }

    #[test]
    fn zeta_one_matches_closed_form() {
        let ev = linear_eval(1.0, 40.0);

        let at_i = ev.zeta1_value(Complex64::i()).unwrap();
        assert!((at_i.value.re - 0.6321205588285577).abs() < 1e-14);
        assert!(at_i.value.im.abs() < 1e-15);

        // zeta_1 = 1 - e^{i lambda} for this flow.
        let lambda = Complex64::new(2.0, 1.0);
        let expect = Complex64::new(1.0, 0.0) - (Complex64::i() * lambda).exp();
        let got = ev.zeta1_value(lambda).unwrap();
        assert!((got.value - expect).norm() < 1e-13);

        let far = ev.zeta1_value(Complex64::new(0.0, 10.0)).unwrap();
        assert!((far.value - Complex64::new(1.0, 0.0)).norm() < 2.0 * (-10.0f64).exp());
    }

    #[test]
    fn representations_agree_on_a_grid() {
        let ev = linear_eval(1.0, 40.0);
        for t in 0..50 {
            let s = t as f64 / 49.0;
            let lambda = Complex64::new(-3.0 + 6.0 * s, 0.5 + 2.5 * s);
            let orbit = ev.log_deriv_orbit_sum(lambda).unwrap();
            let reso = ev.log_deriv_resonance_form(lambda).unwrap();
            let diff = (orbit.value - reso).norm();
            // The closed form is exact, so the gap is pure truncation plus
            // summation roundoff.
            assert!(
                diff <= orbit.tail_bound + 1e-13,
                "lambda {lambda}: gap {diff:e} exceeds tail {:e}",
                orbit.tail_bound
            );
        }
    }

    #[test]
    fn resonance_form_grows_near_the_pole_at_zero() {
        let ev = linear_eval(1.0, 40.0);
        let v = ev.log_deriv_resonance_form(Complex64::new(0.1, 0.0)).unwrap();
        assert!(v.norm() > 9.0);
    }

    #[test]
    fn near_pole_is_identified_by_lattice_indices() {
        let ev = linear_eval(1.0, 40.0);
        let err = ev
            .log_deriv_resonance_form(Complex64::new(2.0 * PI, 0.0))
            .unwrap_err();
        match err {
            Error::NearPole { k, j, dist } => {
                assert_eq!(k, 0);
                assert_eq!(j, 1);
                assert!(dist < POLE_GAP);
            }
            other => panic!("expected NearPole, got {other}"),
        }
    }

    #[test]
    fn contour_integrals_count_lattice_points() {
        let ev = linear_eval(1.0, 40.0);
        let origin = Complex64::new(0.0, 0.0);
        assert_eq!(ev.residue_at(origin, 1.0).unwrap(), 1);
        assert_eq!(ev.residue_at(Complex64::new(2.0 * PI, 0.0), 1.0).unwrap(), 1);
        assert_eq!(ev.residue_at(Complex64::new(PI, 0.0), 1.0).unwrap(), 0);
        // Radius 2 pi around pi encloses the poles at 0 and 2 pi.
        assert_eq!(ev.residue_at(Complex64::new(PI, 0.0), 2.0 * PI).unwrap(), 2);
    }

    #[test]
    fn contour_through_a_pole_is_rejected() {
        let ev = linear_eval(1.0, 40.0);
        let err = ev.residue_at(Complex64::new(PI, 0.0), PI).unwrap_err();
        assert!(matches!(err, Error::PoleOnContour { .. }));
    }

    #[test]
    fn convergence_margins_are_enforced() {
        let ev = linear_eval(1.0, 40.0);
        assert!(matches!(
            ev.log_deriv_orbit_sum(Complex64::new(1.0, 0.01)),
            Err(Error::ConvergenceMargin { .. })
        ));
        assert!(matches!(
            ev.zeta1_value(Complex64::new(1.0, 0.3)),
            Err(Error::ConvergenceMargin { .. })
        ));

        let map = ToralAutomorphism::cat_map();
        let table = OrbitTable::linear_aggregates(&map, 40);
        assert!(matches!(
            ZetaEvaluator::new(linear_flow(1.0), &table, MapResonances::exact_linear(), 2.0),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            ZetaEvaluator::new(linear_flow(1.0), &table, MapResonances::exact_linear(), 50.0),
            Err(Error::SupportExceedsTable { .. })
        ));
    }

    #[test]
    fn log_derivative_reflects_across_the_imaginary_axis() {
        let ev = linear_eval(1.0, 40.0);
        let lambda = Complex64::new(0.7, 1.3);
        let plus = ev.log_deriv_orbit_sum(lambda).unwrap().value;
        let minus = ev.log_deriv_orbit_sum(-lambda.conj()).unwrap().value;
        assert!((minus + plus.conj()).norm() < 1e-14 * plus.norm().max(1.0));
    }

    #[test]
    fn finite_difference_of_log_zeta_matches_log_derivative() {
        let ev = linear_eval(1.0, 40.0);
        let lambda = Complex64::new(0.0, 2.0);
        let h = 1e-5;
        let up = ev.zeta1_value(lambda + Complex64::new(h, 0.0)).unwrap().value;
        let dn = ev.zeta1_value(lambda - Complex64::new(h, 0.0)).unwrap().value;
        let fd = (up.ln() - dn.ln()) / Complex64::new(2.0 * h, 0.0);
        let ld = ev.log_deriv_orbit_sum(lambda).unwrap().value;
        assert!((fd - ld).norm() < 1e-6);
    }

    #[test]
    fn scan_is_reproducible_across_thread_widths() {
        let ev = linear_eval(1.0, 40.0);
        let points: Vec<Complex64> = (0..20)
            .map(|t| Complex64::new(-2.0 + 0.2 * t as f64, 0.8 + 0.05 * t as f64))
            .collect();
        let narrow = par::with_width(1, || ev.scan(&points)).unwrap();
        let wide = par::with_width(4, || ev.scan(&points)).unwrap();
        let csv_a = scan_to_csv(&narrow);
        let csv_b = scan_to_csv(&wide);
        assert_eq!(csv_a, csv_b);

        assert!(csv_a.starts_with("re_lambda,im_lambda,re_value,im_value,tail_bound\n"));
        assert_eq!(csv_a.lines().count(), 21);
        let first = csv_a.lines().nth(1).unwrap();
        let fields: Vec<f64> = first.split(',').map(|f| f.parse().unwrap()).collect();
        assert_eq!(fields.len(), 5);
        assert!((fields[0] - points[0].re).abs() < 1e-15);
    }

    // A roof other than 1 moves the lattice spacing to 2 pi / r; the count
    // inside radius 1 around the origin then picks up more poles.
    #[test]
    fn roof_rescales_the_pole_spacing() {
        let roof = 0.25;
        let ev = linear_eval(roof, 10.0);
        // Poles at 8 pi j: within radius 1 of 0 only j = 0.
        assert_eq!(ev.residue_at(Complex64::new(0.0, 0.0), 1.0).unwrap(), 1);
        let spacing = 2.0 * PI / roof;
        assert_eq!(
            ev.residue_at(Complex64::new(spacing, 0.0), 1.0).unwrap(),
            1
        );
        assert_eq!(
            ev.residue_at(Complex64::new(spacing / 2.0, 0.0), 1.0).unwrap(),
            0
        );
    }
}
