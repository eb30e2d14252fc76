//! Test functions and the two sides of the flow trace formula.
//!
//! The geometric side sums a test function over closed-orbit periods; the
//! spectral side sums its Fourier transform over the resonance lattice. The
//! module also carries the windowed pressure estimators and the
//! Gaussian-averaged second moment built from a plateau window.

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::Serialize;
use std::f64::consts::{PI, TAU};
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::par;
use crate::perturbed_maps::OrbitTable;
use crate::quad;
use crate::suspension::{FlowResonanceLattice, SuspensionFlow};
use crate::zeta::Evaluation;

/// Absolute error target for test-function transforms.
pub const TRANSFORM_TOL: f64 = 1e-13;

/// A lattice window is accepted once the estimated spillover beyond it
/// drops below this.
pub const WINDOW_TAIL_TOL: f64 = 1e-10;

/// Polynomial order of the transform decay bound used for window tails.
pub const PW_ORDER: i32 = 4;

const PLATEAU_EDGE: f64 = 1.5;
const PLATEAU_SMOOTH: f64 = 0.4;

/// Half-width of the plateau window's support.
pub const PLATEAU_SUPPORT: f64 = PLATEAU_EDGE + PLATEAU_SMOOTH;

/// exp(-1/(1-s^2)) inside (-1, 1), zero outside.
pub fn standard_bump(s: f64) -> f64 {
    if s.abs() < 1.0 {
        (-1.0 / (1.0 - s * s)).exp()
    } else {
        0.0
    }
}

/// Total mass of the standard bump.
pub fn bump_mass() -> f64 {
    static MASS: OnceLock<f64> = OnceLock::new();
    *MASS.get_or_init(|| {
        quad::integrate_real(&standard_bump, -1.0, 1.0, 1e-14, 2)
            .expect("bump mass quadrature")
            .value
            .re
    })
}

const STEP_GRID: usize = 8192;

struct StepTable {
    vals: Vec<f64>,
    ders: Vec<f64>,
}

/// Cumulative bump mass on [-1, 1], tabulated once. Per-cell quadrature is
/// exact to machine precision at this resolution, and cubic Hermite
/// interpolation between cells stays below 1e-14.
fn step_table() -> &'static StepTable {
    static TABLE: OnceLock<StepTable> = OnceLock::new();
    TABLE.get_or_init(|| {
        let h = 2.0 / STEP_GRID as f64;
        let mut cum = vec![0.0; STEP_GRID + 1];
        for i in 1..=STEP_GRID {
            let a = -1.0 + (i - 1) as f64 * h;
            let b = a + h;
            cum[i] = cum[i - 1]
                + quad::integrate_real(&standard_bump, a, b, 1e-13, 1)
                    .expect("step panel")
                    .value
                    .re;
        }
        let mass = cum[STEP_GRID];
        StepTable {
            vals: cum.iter().map(|c| (c / mass).clamp(0.0, 1.0)).collect(),
            ders: (0..=STEP_GRID)
                .map(|i| standard_bump(-1.0 + i as f64 * h) / mass)
                .collect(),
        }
    })
}

/// Mollified step: 0 below -1, 1 above 1, normalized bump mass in between.
fn smooth_step(x: f64) -> f64 {
    if x <= -1.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        let table = step_table();
        let h = 2.0 / STEP_GRID as f64;
        let u = (x + 1.0) / h;
        let i = (u as usize).min(STEP_GRID - 1);
        let s = u - i as f64;
        let (p0, p1) = (table.vals[i], table.vals[i + 1]);
        let (m0, m1) = (table.ders[i] * h, table.ders[i + 1] * h);
        let s2 = s * s;
        let s3 = s2 * s;
        let v = (2.0 * s3 - 3.0 * s2 + 1.0) * p0
            + (s3 - 2.0 * s2 + s) * m0
            + (3.0 * s2 - 2.0 * s3) * p1
            + (s3 - s2) * m1;
        // interpolation noise must not push the step outside [0, 1], or the
        // plateau could go negative at its edges
        v.clamp(0.0, 1.0)
    }
}

/// Plateau window: the indicator of [-1.5, 1.5] convolved with the bump
/// mollifier at scale 0.4. Identically 1 on [-1.1, 1.1] and supported in
/// (-1.9, 1.9), so any function built from it is flat across a unit window.
pub fn plateau(s: f64) -> f64 {
    smooth_step((s + PLATEAU_EDGE) / PLATEAU_SMOOTH)
        - smooth_step((s - PLATEAU_EDGE) / PLATEAU_SMOOTH)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub enum TestFunction {
    /// The standard bump carried to `center` at width `scale`.
    Bump { scale: f64, center: f64 },
    /// The plateau window around `center`, carrying e^{i modulation t}.
    ModulatedPlateau { center: f64, modulation: f64 },
}

impl TestFunction {
    pub fn bump(scale: f64, center: f64) -> Result<Self> {
        if !(scale > 0.0) || !scale.is_finite() || !center.is_finite() {
            return Err(Error::InvalidInput(format!(
                "bump needs a positive finite scale and finite center, got ({scale}, {center})"
            )));
        }
        Ok(TestFunction::Bump { scale, center })
    }

    pub fn plateau_window(center: f64, modulation: f64) -> Result<Self> {
        if !center.is_finite() || !modulation.is_finite() {
            return Err(Error::InvalidInput(format!(
                "plateau window needs finite parameters, got ({center}, {modulation})"
            )));
        }
        Ok(TestFunction::ModulatedPlateau { center, modulation })
    }

    /// Support interval of the real envelope.
    pub fn support(&self) -> (f64, f64) {
        match *self {
            TestFunction::Bump { scale, center } => (center - scale, center + scale),
            TestFunction::ModulatedPlateau { center, .. } => {
                (center - PLATEAU_SUPPORT, center + PLATEAU_SUPPORT)
            }
        }
    }

    /// Real envelope at `t`, the modulation stripped.
    pub fn envelope(&self, t: f64) -> f64 {
        match *self {
            TestFunction::Bump { scale, center } => standard_bump((t - center) / scale),
            TestFunction::ModulatedPlateau { center, .. } => plateau(t - center),
        }
    }

    /// Full complex value at `t`.
    pub fn value(&self, t: f64) -> Complex64 {
        match *self {
            TestFunction::Bump { .. } => Complex64::new(self.envelope(t), 0.0),
            TestFunction::ModulatedPlateau { modulation, .. } => {
                Complex64::new(0.0, modulation * t).exp() * self.envelope(t)
            }
        }
    }

    /// `∫ f(t) e^{-izt} dt` over the support.
    pub fn fourier(&self, z: Complex64) -> Result<Complex64> {
        match *self {
            TestFunction::Bump { scale, center } => {
                let base = quad::fourier_integral_complex(
                    &standard_bump,
                    -1.0,
                    1.0,
                    z * scale,
                    TRANSFORM_TOL,
                )?;
                Ok(base * scale * (Complex64::new(0.0, -1.0) * z * center).exp())
            }
            TestFunction::ModulatedPlateau { center, modulation } => {
                let w = z - Complex64::new(modulation, 0.0);
                let base = quad::fourier_integral_complex(
                    &plateau,
                    -PLATEAU_SUPPORT,
                    PLATEAU_SUPPORT,
                    w,
                    1e-11,
                )?;
                Ok(base * (Complex64::new(0.0, -1.0) * w * center).exp())
            }
        }
    }

    /// (prefactor, frequency scale) of the decay bound
    /// |fourier(z)| <= prefactor * e^{support_lo * Im z} * (1 + scale |z'|)^{-PW_ORDER},
    /// valid for Im z <= 0; z' is z minus any modulation.
    fn decay_envelope(&self) -> Result<(f64, f64)> {
        let c = bump_decay_constant_cached()?;
        Ok(match *self {
            TestFunction::Bump { scale, .. } => (c * scale, scale),
            // plateau = indicator * mollifier: the indicator transform is
            // bounded by its mass 3, the mollifier inherits the bump bound.
            TestFunction::ModulatedPlateau { .. } => {
                (2.0 * PLATEAU_EDGE * c / bump_mass(), PLATEAU_SMOOTH)
            }
        })
    }

    fn modulation(&self) -> f64 {
        match *self {
            TestFunction::Bump { .. } => 0.0,
            TestFunction::ModulatedPlateau { modulation, .. } => modulation,
        }
    }
}

/// Fits the decay constant of the bump transform: the grid maximum of
/// |phihat(z)| (1+|z|)^n e^{-|Im z|} over a lower-half-plane window. The
/// transform decays faster than any polynomial along the real axis, so the
/// maximum sits at moderate |z| and the grid captures it.
pub fn fit_bump_decay_constant(n: i32) -> Result<f64> {
    const LINES: [f64; 6] = [0.0, -0.25, -0.5, -1.0, -2.0, -3.0];
    const STEPS: usize = 961;
    let mut best: f64 = 0.0;
    for &y in &LINES {
        let vals: Vec<Result<f64>> = par::map_range(STEPS, |i| {
            let z = Complex64::new(i as f64 * 0.125, y);
            let t = quad::fourier_integral_complex(&standard_bump, -1.0, 1.0, z, 1e-10)?;
            Ok(t.norm() * (1.0 + z.norm()).powi(n) * (-y.abs()).exp())
        });
        for v in vals {
            best = best.max(v?);
        }
    }
    Ok(best)
}

fn bump_decay_constant_cached() -> Result<f64> {
    static C4: OnceLock<f64> = OnceLock::new();
    if let Some(&c) = C4.get() {
        return Ok(c);
    }
    let c = fit_bump_decay_constant(PW_ORDER)?;
    Ok(*C4.get_or_init(|| c))
}

/// Geometric side of the trace formula: the sum over closed orbits and
/// iterates with period inside the support of
/// `T_prim * phi(T) / |det(I - P)|`.
pub fn orbit_side(phi: &TestFunction, table: &OrbitTable, flow: &SuspensionFlow) -> Result<f64> {
    let (lo, hi) = phi.support();
    if lo <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "orbit sums need test support inside (0, inf), got [{lo}, {hi}]"
        )));
    }
    let r = flow.roof();
    let p_hi = (hi / r).floor() as usize;
    if p_hi > table.horizon() {
        return Err(Error::SupportExceedsTable {
            lo,
            hi,
            horizon: table.horizon() as f64 * r,
        });
    }
    let mut sum = 0.0;
    for c in table.classes_up_to(p_hi)? {
        let t_total = c.map_period() as f64 * r;
        if t_total <= lo || t_total >= hi {
            continue;
        }
        let t_prim = c.primitive_period as f64 * r;
        sum += c.count * t_prim * phi.envelope(t_total) / c.inv_weight;
    }
    Ok(sum)
}

/// The same orbit sum with the modulation factor kept; at zero modulation it
/// reduces to `orbit_side`.
pub fn modulated_orbit_sum(
    phi: &TestFunction,
    table: &OrbitTable,
    flow: &SuspensionFlow,
) -> Result<Complex64> {
    let (lo, hi) = phi.support();
    if lo <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "orbit sums need test support inside (0, inf), got [{lo}, {hi}]"
        )));
    }
    let r = flow.roof();
    let p_hi = (hi / r).floor() as usize;
    if p_hi > table.horizon() {
        return Err(Error::SupportExceedsTable {
            lo,
            hi,
            horizon: table.horizon() as f64 * r,
        });
    }
    let mut sum = Complex64::new(0.0, 0.0);
    for c in table.classes_up_to(p_hi)? {
        let t_total = c.map_period() as f64 * r;
        if t_total <= lo || t_total >= hi {
            continue;
        }
        let t_prim = c.primitive_period as f64 * r;
        sum += phi.value(t_total) * (c.count * t_prim / c.inv_weight);
    }
    Ok(sum)
}

/// Estimated spillover of the spectral sum beyond the lattice's j window,
/// per family, using the fitted transform decay bound. Also returns the
/// window radius the current tolerance would need.
fn window_tail(phi: &TestFunction, lattice: &FlowResonanceLattice) -> Result<(f64, f64)> {
    let (amp, scale) = phi.decay_envelope()?;
    let r = lattice.roof;
    let (lo, _) = phi.support();
    let j_shift = (phi.modulation().abs() * r / TAU).ceil() as i64;
    let j_eff = lattice.j_max - j_shift;
    if j_eff < 1 {
        return Ok((f64::INFINITY, f64::INFINITY));
    }
    // sum over |j| > J of (1 + scale(2 pi j - pi)/r)^{-N} <= the integral
    // from J, and the family weight e^{lo Im lambda} <= 1 decays with depth.
    let mut families = 0.0;
    for lam in &lattice.base_logs {
        families += (lo * lam.im / r).exp();
    }
    let unit = 2.0 * amp * families * (r / (TAU * scale)) / 3.0;
    let tail = unit * (1.0 + scale * (TAU * j_eff as f64 - PI) / r).powi(-(PW_ORDER - 1));
    let needed_ratio = (unit / WINDOW_TAIL_TOL).powf(1.0 / (PW_ORDER - 1) as f64);
    let j_needed = ((needed_ratio - 1.0) * r / scale + PI) / TAU + j_shift as f64;
    Ok((tail, TAU * j_needed.ceil() / r))
}

/// Transform values for a whole lattice family in one pass, indexed by
/// j + j_max. The family's points sit at base_log/roof plus multiples of
/// 2 pi / roof, so sampling phi(t) e^{-i base_log t / roof} over a whole
/// number of roof periods turns every needed value into a DFT bin. The
/// sampling rate puts the nearest alias past three times the guard
/// frequency, where the transform is long dead.
fn family_transform_batch(
    phi: &TestFunction,
    base_log: Complex64,
    roof: f64,
    j_max: i64,
) -> Result<Vec<Complex64>> {
    let (lo, hi) = phi.support();
    let spans = ((hi - lo) / roof).ceil().max(1.0);
    let span_t = spans * roof;
    let m = spans as i64;
    let xi_idx = (phi.modulation().abs() * span_t / TAU).ceil() as i64;
    let top_idx = j_max * m + xi_idx + 4;
    let n = usize::try_from(3 * top_idx)
        .ok()
        .and_then(usize::checked_next_power_of_two)
        .filter(|&v| v <= 1 << 24)
        .ok_or_else(|| Error::InvalidInput("resonance window too large to batch".into()))?;
    let h = span_t / n as f64;
    let rot = Complex64::new(0.0, -1.0) * base_log / roof;
    let mut buf: Vec<Complex64> = par::map_range(n, |i| {
        let t = lo + i as f64 * h;
        phi.value(t) * (rot * t).exp()
    });
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    Ok((-j_max..=j_max)
        .map(|j| {
            let idx = (j * m).rem_euclid(n as i64) as usize;
            let omega = TAU * j as f64 / roof;
            buf[idx] * h * Complex64::from_polar(1.0, -omega * lo)
        })
        .collect())
}

/// Spectral side of the trace formula: the transform summed over the
/// resonance lattice. The tail bound covers the finite j window, the
/// per-entry quadrature budget and, for extracted spectra, the families the
/// extraction dropped. Values come from per-family batches, but the sum
/// walks the entry list itself, so a doctored list shows up faithfully.
pub fn resonance_side(phi: &TestFunction, lattice: &FlowResonanceLattice) -> Result<Evaluation> {
    let (tail, needed) = window_tail(phi, lattice)?;
    if tail > WINDOW_TAIL_TOL {
        return Err(Error::WindowTooSmall {
            radius: needed,
            window: lattice.window_radius(),
        });
    }
    let batches = lattice
        .base_logs
        .iter()
        .map(|&lam| family_transform_batch(phi, lam, lattice.roof, lattice.j_max))
        .collect::<Result<Vec<_>>>()?;
    let entries = &lattice.entries;
    let mut value = Complex64::new(0.0, 0.0);
    for e in entries {
        value += batches[e.family][(e.j + lattice.j_max) as usize];
    }

    let mut budget = tail + entries.len() as f64 * TRANSFORM_TOL;
    if let Some(src) = &lattice.source {
        // Dropped families contribute r sum_p mu^p phi(pr) per family; the
        // stored power sums estimate the dropped mu^p totals, the last one
        // standing in for every deeper power.
        let r = lattice.roof;
        let (lo, hi) = phi.support();
        let disc = &src.discarded_power_sums;
        if let Some(&deep) = disc.last() {
            let p_lo = (lo / r).floor().max(1.0) as usize;
            let p_hi = (hi / r).ceil() as usize;
            for p in p_lo..=p_hi {
                let gap = disc.get(p - 1).copied().unwrap_or(deep);
                budget += r * gap * phi.envelope(p as f64 * r);
            }
        }
    }
    Ok(Evaluation { value, tail_bound: budget })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct TraceReport {
    pub center: f64,
    pub half_width: f64,
    pub lhs_orbit_side: f64,
    pub rhs_re: f64,
    pub rhs_im: f64,
    pub t_max: f64,
    pub j_max: i64,
    pub k_cut: usize,
    pub tail_budget: f64,
    pub difference: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Pairs the two sides of the trace formula for each test function. A report
/// passes when the sides agree within the tolerance plus the reported tails
/// and the spectral side is real up to the same budget.
pub fn verify_global_trace(
    flow: &SuspensionFlow,
    table: &OrbitTable,
    lattice: &FlowResonanceLattice,
    phis: &[TestFunction],
    tol: f64,
) -> Result<Vec<TraceReport>> {
    phis.iter()
        .map(|phi| {
            let lhs = orbit_side(phi, table, flow)?;
            let rhs = resonance_side(phi, lattice)?;
            let difference = (rhs.value - Complex64::new(lhs, 0.0)).norm();
            let (lo, hi) = phi.support();
            Ok(TraceReport {
                center: 0.5 * (lo + hi),
                half_width: 0.5 * (hi - lo),
                lhs_orbit_side: lhs,
                rhs_re: rhs.value.re,
                rhs_im: rhs.value.im,
                t_max: table.horizon() as f64 * flow.roof(),
                j_max: lattice.j_max,
                k_cut: lattice.source.as_ref().map_or(0, |s| s.k_cut),
                tail_budget: rhs.tail_bound,
                difference,
                tolerance: tol,
                pass: difference <= tol + rhs.tail_bound
                    && rhs.value.im.abs() <= rhs.tail_bound,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct PressureEstimate {
    pub p_hat: f64,
    pub fit_residual: f64,
}

/// Least-squares line fit, returning (slope, rms residual).
pub(crate) fn line_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let xm = xs.iter().sum::<f64>() / n;
    let ym = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - xm) * (x - xm);
        sxy += (x - xm) * (y - ym);
    }
    let slope = sxy / sxx;
    let icept = ym - slope * xm;
    let mut ss = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        let e = y - (icept + slope * x);
        ss += e * e;
    }
    (slope, (ss / n).sqrt())
}

/// Topological pressure of `g_multiplier * psi_u`, estimated from windowed
/// orbit sums, with an optional constant rate added per unit time.
///
/// W(T) sums e^{int_gamma G} over closed orbits with |T_gamma - T| <= 1. The
/// orbit count at period T carries a 1/T density factor, so the fit
/// regresses log(T W(T)) on T; fitting log W directly biases the slope low
/// by about 1/T. Because nonpositive pressure drains the windows, the
/// potential is lifted by 1.1 |P_guess| per unit time and refit, twice, and
/// the lift is subtracted back out.
pub fn pressure_estimate_shifted(
    table: &OrbitTable,
    flow: &SuspensionFlow,
    g_multiplier: f64,
    unit_rate: f64,
    t_grid: &[f64],
) -> Result<PressureEstimate> {
    if t_grid.len() < 2 || t_grid.windows(2).any(|w| w[1] <= w[0]) || t_grid[0] <= 0.0 {
        return Err(Error::InvalidInput(
            "pressure grid must be increasing and positive with at least two points".into(),
        ));
    }
    let r = flow.roof();
    let t_last = *t_grid.last().unwrap();
    let p_cap = ((t_last + 1.0) / r).floor() as usize;
    let classes = table.classes_up_to(p_cap)?;

    let windowed = |lift: f64| -> Result<Vec<f64>> {
        t_grid
            .iter()
            .map(|&t| {
                let mut w = 0.0;
                let mut seen = false;
                for c in &classes {
                    let tg = c.map_period() as f64 * r;
                    if (tg - t).abs() <= 1.0 {
                        seen = true;
                        // int_gamma of c psi_u is -c times the orbit's
                        // unstable log.
                        w += c.count
                            * (-g_multiplier * c.unstable_log + (unit_rate + lift) * tg).exp();
                    }
                }
                if !seen || w <= 0.0 {
                    return Err(Error::EmptyWindow { center: t });
                }
                Ok((t * w).ln())
            })
            .collect()
    };

    let (slope0, _) = line_fit(t_grid, &windowed(0.0)?);
    let mut guess = slope0;
    let mut residual = 0.0;
    for _ in 0..2 {
        let lift = 1.1 * guess.abs();
        let (slope, res) = line_fit(t_grid, &windowed(lift)?);
        guess = slope - lift;
        residual = res;
    }
    Ok(PressureEstimate {
        p_hat: guess,
        fit_residual: residual,
    })
}

pub fn pressure_estimate(
    table: &OrbitTable,
    flow: &SuspensionFlow,
    g_multiplier: f64,
    t_grid: &[f64],
) -> Result<PressureEstimate> {
    pressure_estimate_shifted(table, flow, g_multiplier, 0.0, t_grid)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct GaussianRecord {
    pub t: f64,
    pub s_abs: f64,
    pub g_value: f64,
    pub diag_lower: f64,
    pub pressure_bound: f64,
}

/// Gaussian-averaged second moment of the plateau-windowed orbit sum.
///
/// Averaging |S(t, xi)|^2 against a Gaussian in the modulation collapses to
/// the closed double sum
/// G(t, s) = sqrt(2 pi) sum_{g,g'} T# T#' e^{-(T-T')^2/(2s)} psi psi'/(w w'),
/// every term nonnegative, so the diagonal alone is a lower bound whose
/// growth rate the pressure of 2 psi_u controls.
pub fn gaussian_average_experiment(
    table: &OrbitTable,
    flow: &SuspensionFlow,
    t_grid: &[f64],
    sigma: f64,
) -> Result<Vec<GaussianRecord>> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidInput(format!(
            "gaussian width must be positive, got {sigma}"
        )));
    }
    if t_grid.len() < 2 || t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput(
            "experiment grid must be increasing with at least two points".into(),
        ));
    }
    let r = flow.roof();
    if t_grid[0] - PLATEAU_SUPPORT <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "plateau around t = {} dips below time zero",
            t_grid[0]
        )));
    }
    let t_last = *t_grid.last().unwrap();
    let p_cap = ((t_last + PLATEAU_SUPPORT) / r).floor() as usize;
    let classes = table.classes_up_to(p_cap)?;
    let pressure = pressure_estimate(table, flow, 2.0, t_grid)?;

    let sqrt_tau = TAU.sqrt();
    let mut records = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        // (count, T, single-orbit weight T# psi / |det|) per active class
        let active: Vec<(f64, f64, f64)> = classes
            .iter()
            .filter_map(|c| {
                let tg = c.map_period() as f64 * r;
                let psi = plateau(tg - t);
                if psi == 0.0 {
                    return None;
                }
                let u = c.primitive_period as f64 * r * psi / c.inv_weight;
                Some((c.count, tg, u))
            })
            .collect();

        let partials = par::map_range(active.len(), |i| {
            let (ci, ti, ui) = active[i];
            let mut row = 0.0;
            for &(cj, tj, uj) in &active {
                let d = ti - tj;
                row += ci * cj * ui * uj * (-d * d / (2.0 * sigma)).exp();
            }
            row
        });
        let g_value = sqrt_tau * partials.iter().sum::<f64>();
        let diag_lower = sqrt_tau
            * active
                .iter()
                .map(|&(c, _, u)| c * u * u)
                .sum::<f64>();
        let s_abs = active.iter().map(|&(c, _, u)| c * u).sum::<f64>().abs();
        assert!(
            g_value + 1e-12 * g_value.abs() >= diag_lower && diag_lower >= 0.0,
            "nonnegative double sum dipped under its own diagonal"
        );
        records.push(GaussianRecord {
            t,
            s_abs,
            g_value,
            diag_lower,
            pressure_bound: 0.0,
        });
    }

    // scale the pressure envelope through the first grid point
    let c0 = records[0].diag_lower / (pressure.p_hat * records[0].t).exp();
    for rec in &mut records {
        rec.pressure_bound = c0 * (pressure.p_hat * rec.t).exp();
    }
    Ok(records)
}

pub fn gaussian_to_csv(records: &[GaussianRecord]) -> String {
    let mut out = String::from("t,s_abs,g_value,diag_lower,pressure_bound\n");
    for r in records {
        out.push_str(&format!(
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
            r.t, r.s_abs, r.g_value, r.diag_lower, r.pressure_bound
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice_maps::ToralAutomorphism;
    use crate::perturbed_maps::{Perturbation, PerturbedMap};

    fn linear_flow(roof: f64) -> SuspensionFlow {
        let map = ToralAutomorphism::cat_map();
        let linear = PerturbedMap::new(map, 0.0, Perturbation::empty(2)).unwrap();
        SuspensionFlow::new(linear, roof).unwrap()
    }

    #[test]
    fn bump_values_and_transform_convention() {
        let phi = TestFunction::bump(0.4, 3.0).unwrap();
        assert_eq!(phi.support(), (2.6, 3.4));
        // center value e^{-1}
        assert!((phi.envelope(3.0) - 0.36787944117144233).abs() < 1e-16);
        assert_eq!(phi.envelope(2.6), 0.0);

        // transform at zero is the mass
        let at0 = phi.fourier(Complex64::new(0.0, 0.0)).unwrap();
        assert!((at0.re - 0.4 * 0.44399381616807937).abs() < 1e-12);
        assert!(at0.im.abs() < 1e-13);

        // frozen magnitude used by the corruption control
        let at_2pi = phi.fourier(Complex64::new(TAU, 0.0)).unwrap();
        assert!((at_2pi.norm() - 0.10319841208556793).abs() < 1e-11);

        // real-frequency transform of a real function reflects conjugately
        let plus = phi.fourier(Complex64::new(1.7, 0.0)).unwrap();
        let minus = phi.fourier(Complex64::new(-1.7, 0.0)).unwrap();
        assert!((minus - plus.conj()).norm() < 1e-12);
    }

    #[test]
    fn batched_family_values_match_direct_transforms() {
        let phi = TestFunction::bump(0.4, 3.0).unwrap();
        let zero = Complex64::new(0.0, 0.0);
        let vals = family_transform_batch(&phi, zero, 1.0, 50).unwrap();
        assert_eq!(vals.len(), 101);
        for j in [-50i64, -7, 0, 1, 13] {
            let z = Complex64::new(TAU * j as f64, 0.0);
            let direct = phi.fourier(z).unwrap();
            let batch = vals[(j + 50) as usize];
            assert!((batch - direct).norm() < 1e-10, "j = {j}");
        }

        // a complex family log tilts the whole comb off the real axis
        let lam = Complex64::new(1.3, -0.7);
        let vals = family_transform_batch(&phi, lam, 1.0, 50).unwrap();
        for j in [-3i64, 0, 2] {
            let z = Complex64::new(TAU * j as f64, 0.0) + lam;
            let direct = phi.fourier(z).unwrap();
            assert!((vals[(j + 50) as usize] - direct).norm() < 1e-9, "j = {j}");
        }

        // modulation shifts the plateau's spectrum without breaking the comb
        let psi = TestFunction::plateau_window(4.0, 2.0).unwrap();
        let vals = family_transform_batch(&psi, zero, 1.0, 60).unwrap();
        for j in [-11i64, 0, 5] {
            let z = Complex64::new(TAU * j as f64, 0.0);
            let direct = psi.fourier(z).unwrap();
            assert!((vals[(j + 60) as usize] - direct).norm() < 1e-9, "j = {j}");
        }
    }

    #[test]
    fn plateau_is_flat_on_the_unit_window() {
        for s in [-1.0, -0.5, 0.0, 0.7, 1.0] {
            assert_eq!(plateau(s), 1.0, "plateau({s})");
        }
        assert_eq!(plateau(2.0), 0.0);
        assert_eq!(plateau(-2.3), 0.0);
        // the support edge sits on quadrature noise but never below zero
        assert!(plateau(1.9) >= 0.0 && plateau(1.9) < 1e-12);
        // mollified edge: odd symmetry around the half-height point
        assert!((plateau(1.5) - 0.5).abs() < 1e-10);
        assert!((plateau(1.5 + 0.2) + plateau(1.5 - 0.2) - 1.0).abs() < 1e-10);
        // convolution preserves the indicator mass
        let psi = TestFunction::plateau_window(5.0, 0.0).unwrap();
        let mass = psi.fourier(Complex64::new(0.0, 0.0)).unwrap();
        assert!((mass.re - 3.0).abs() < 1e-9);
        assert!(mass.im.abs() < 1e-9);
    }

    #[test]
    fn orbit_side_reduces_to_weighted_period_samples() {
        let map = ToralAutomorphism::cat_map();
        let table = OrbitTable::linear_aggregates(&map, 4);
        let flow = linear_flow(1.0);

        // per-period trace sums telescope to 1, so the sum is phi at the
        // period times the roof
        let phi = TestFunction::bump(0.4, 3.0).unwrap();
        let got = orbit_side(&phi, &table, &flow).unwrap();
        assert!((got - 0.36787944117144233).abs() < 1e-14);

        // support below the first return
        let early = TestFunction::bump(0.3, 0.5).unwrap();
        assert_eq!(orbit_side(&early, &table, &flow).unwrap(), 0.0);

        // support past the horizon
        let deep = TestFunction::bump(0.4, 6.0).unwrap();
        assert!(matches!(
            orbit_side(&deep, &table, &flow),
            Err(Error::SupportExceedsTable { .. })
        ));

        // support touching zero
        let astride = TestFunction::bump(1.0, 0.5).unwrap();
        assert!(matches!(
            orbit_side(&astride, &table, &flow),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn transform_decay_constant_is_reproduced() {
        let c = fit_bump_decay_constant(PW_ORDER).unwrap();
        assert!((c - 753.56547698).abs() < 0.05, "C_4 = {c}");
    }

    #[test]
    fn spectral_side_matches_poisson_summation() {
        let flow = linear_flow(1.0);
        let map = ToralAutomorphism::cat_map();
        let table = OrbitTable::linear_aggregates(&map, 4);
        let lattice = FlowResonanceLattice::linear(1.0, 3700).unwrap();
        let phi = TestFunction::bump(0.4, 3.0).unwrap();

        let lhs = orbit_side(&phi, &table, &flow).unwrap();
        let rhs = resonance_side(&phi, &lattice).unwrap();
        assert!((rhs.value.re - lhs).abs() < 1e-8, "gap {}", rhs.value.re - lhs);
        assert!(rhs.value.im.abs() <= rhs.tail_bound);
        assert!(rhs.tail_bound < 1e-8);
    }

    #[test]
    fn narrow_window_is_rejected_with_a_requirement() {
        let lattice = FlowResonanceLattice::linear(1.0, 1200).unwrap();
        let phi = TestFunction::bump(0.4, 3.0).unwrap();
        match resonance_side(&phi, &lattice).unwrap_err() {
            Error::WindowTooSmall { radius, window } => {
                assert!(radius > window);
                // the fitted bound needs roughly J = 3700 at this scale
                assert!(radius > TAU * 3000.0 && radius < TAU * 4500.0);
            }
            other => panic!("expected WindowTooSmall, got {other}"),
        }
    }

    #[test]
    fn trace_reports_pass_and_feel_a_dropped_entry() {
        let flow = linear_flow(1.0);
        let map = ToralAutomorphism::cat_map();
        let table = OrbitTable::linear_aggregates(&map, 5);
        let lattice = FlowResonanceLattice::linear(1.0, 3700).unwrap();
        let phis = [
            TestFunction::bump(0.4, 2.0).unwrap(),
            TestFunction::bump(0.4, 3.0).unwrap(),
        ];
        let reports = verify_global_trace(&flow, &table, &lattice, &phis, 1e-8).unwrap();
        assert!(reports.iter().all(|r| r.pass));
        // translating the bump by the roof moves the orbit side to the next
        // period block without changing its value here
        assert!((reports[0].lhs_orbit_side - reports[1].lhs_orbit_side).abs() < 1e-14);
        assert!((reports[0].rhs_re - reports[1].rhs_re).abs() < 1e-8);

        // corruption control: dropping one lattice entry must break the
        // identity by that entry's transform value
        let mut broken = lattice.clone();
        let pos = broken
            .entries
            .iter()
            .position(|e| e.family == 0 && e.j == 1)
            .unwrap();
        broken.entries.remove(pos);
        let reports = verify_global_trace(&flow, &table, &broken, &phis[1..], 1e-8).unwrap();
        assert!(!reports[0].pass);
        assert!((reports[0].difference - 0.10319841208556793).abs() < 1e-6);
    }

    #[test]
    fn pressure_estimates_recover_closed_forms() {
        let map = ToralAutomorphism::cat_map();
        let table = OrbitTable::linear_aggregates(&map, 21);
        let flow = linear_flow(1.0);
        let grid: Vec<f64> = (8..=20).map(|t| t as f64).collect();
        let log_lam = map.expansion_rate();

        let p0 = pressure_estimate(&table, &flow, 0.0, &grid).unwrap();
        assert!((p0.p_hat - log_lam).abs() < 0.05, "P(0) = {}", p0.p_hat);
        assert!((p0.p_hat - 0.9663313).abs() < 1e-4);

        let p1 = pressure_estimate(&table, &flow, 1.0, &grid).unwrap();
        assert!(p1.p_hat.abs() < 0.05, "P(psi_u) = {}", p1.p_hat);
        assert!((p1.p_hat + 0.0016505).abs() < 1e-4);

        let p2 = pressure_estimate(&table, &flow, 2.0, &grid).unwrap();
        assert!((p2.p_hat + log_lam).abs() < 0.05, "P(2 psi_u) = {}", p2.p_hat);
        assert!((p2.p_hat + 0.9636773).abs() < 1e-4);
    }

    #[test]
    fn pressure_shift_moves_the_estimate_by_the_rate() {
        let map = ToralAutomorphism::cat_map();
        let table = OrbitTable::linear_aggregates(&map, 21);
        let flow = linear_flow(1.0);
        let grid: Vec<f64> = (8..=20).map(|t| t as f64).collect();
        for g in [1.0, 2.0] {
            let base = pressure_estimate(&table, &flow, g, &grid).unwrap();
            for c in [0.5, 1.0] {
                let lifted = pressure_estimate_shifted(&table, &flow, g, c, &grid).unwrap();
                let gap = ((lifted.p_hat - c) - base.p_hat).abs();
                let budget = 2.0 * base.fit_residual.max(lifted.fit_residual);
                assert!(gap <= budget, "g={g} c={c}: gap {gap:e} budget {budget:e}");
            }
        }
    }

    #[test]
    fn empty_window_is_reported() {
        let map = ToralAutomorphism::cat_map();
        let table = OrbitTable::linear_aggregates(&map, 10);
        let flow = linear_flow(3.0);
        // periods sit at multiples of 3; the window around 1 sees none
        let err = pressure_estimate(&table, &flow, 0.0, &[1.0, 4.0, 7.0]).unwrap_err();
        assert!(matches!(err, Error::EmptyWindow { center } if center == 1.0));
    }

    #[test]
    fn gaussian_experiment_structure() {
        let map = ToralAutomorphism::cat_map();
        let table = OrbitTable::linear_aggregates(&map, 22);
        let flow = linear_flow(1.0);
        let grid: Vec<f64> = (12..=20).map(|t| t as f64).collect();
        let records = gaussian_average_experiment(&table, &flow, &grid, 1.0).unwrap();
        assert_eq!(records.len(), grid.len());
        for r in &records {
            assert!(r.g_value >= r.diag_lower && r.diag_lower > 0.0);
            assert!(r.pressure_bound > 0.0);
        }
        // envelope anchored at the first point
        assert!((records[0].pressure_bound - records[0].diag_lower).abs() < 1e-15);

        // diagonal decay rate tracks the pressure of 2 psi_u
        let ys: Vec<f64> = records.iter().map(|r| r.diag_lower.ln()).collect();
        let (slope, _) = line_fit(&grid, &ys);
        assert!(
            (slope - (-map.expansion_rate())).abs() < 0.1,
            "diag slope {slope}"
        );

        // wide-gaussian limit collapses the double sum to the square
        let wide = gaussian_average_experiment(&table, &flow, &grid[..2], 1e9).unwrap();
        let rec = &wide[0];
        let square = rec.s_abs * rec.s_abs;
        assert!((rec.g_value / TAU.sqrt() - square).abs() <= 1e-6 * square);

        let csv = gaussian_to_csv(&records);
        assert!(csv.starts_with("t,s_abs,g_value,diag_lower,pressure_bound\n"));
        assert_eq!(csv.lines().count(), records.len() + 1);
    }

    #[test]
    fn modulated_sum_reduces_and_contracts() {
        let map = ToralAutomorphism::cat_map();
        let table = OrbitTable::linear_aggregates(&map, 8);
        let flow = linear_flow(1.0);
        let flat = TestFunction::plateau_window(5.0, 0.0).unwrap();
        let plain = orbit_side(&flat, &table, &flow).unwrap();
        let complex0 = modulated_orbit_sum(&flat, &table, &flow).unwrap();
        assert!((complex0 - Complex64::new(plain, 0.0)).norm() < 1e-15);
        // plateau flat across three integer periods, each with unit trace sum
        assert!((plain - 3.0).abs() < 1e-9);

        // modulation can only lose mass against nonnegative weights
        let wavy = TestFunction::plateau_window(5.0, 0.7).unwrap();
        let s = modulated_orbit_sum(&wavy, &table, &flow).unwrap();
        assert!(s.norm() <= plain + 1e-12);
    }
}
