//! Nonlinear perturbations of hyperbolic toral automorphisms and the orbit
//! bookkeeping built on top of them.
//!
//! A map is `F(x) = A x + eps * Psi(x) mod 1` with `Psi` a trigonometric
//! polynomial, so `F` lifts to the cover as `A x + eps Psi(x)` minus an
//! integer translation per step. Periodic orbits are continued from the
//! exact rational orbits of `A` by a multipoint Newton scheme: all orbit
//! points are unknowns at once and the integer translations are frozen at
//! their eps = 0 values, which keeps the combinatorial type fixed along the
//! homotopy.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::intmat::bigint_to_f64;
use crate::lattice_maps::{
    primitive_counts, primitive_orbits, rational_point_to_f64, RationalOrbit, ToralAutomorphism,
};
use crate::par;

const TAU: f64 = std::f64::consts::TAU;

pub const NEWTON_TOL: f64 = 1e-12;
pub const NEWTON_MAX_ITERS: usize = 50;
pub const CONTINUATION_STEPS: usize = 10;
pub const MAX_STEP_HALVINGS: usize = 3;
const UNIT_MULTIPLIER_GAP: f64 = 1e-6;

pub const DEFAULT_CONE_GRID: usize = 16;
pub const DEFAULT_CONE_ITERATIONS: usize = 7;
pub const DEFAULT_CONE_BURN_IN: usize = 3;

/// One Fourier mode of the perturbation:
/// `cos * cos(2 pi freq . x) + sin * sin(2 pi freq . x)`,
/// with `cos` and `sin` coefficient vectors in R^d.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrigTerm {
    pub freq: Vec<i64>,
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Perturbation {
    dim: usize,
    terms: Vec<TrigTerm>,
}

impl Perturbation {
    pub fn new(dim: usize, terms: Vec<TrigTerm>) -> Result<Self> {
        for t in &terms {
            if t.freq.len() != dim || t.cos.len() != dim || t.sin.len() != dim {
                return Err(Error::InvalidInput(format!(
                    "perturbation term has wrong arity for dimension {dim}: {t:?}"
                )));
            }
        }
        Ok(Perturbation { dim, terms })
    }

    pub fn empty(dim: usize) -> Self {
        Perturbation { dim, terms: Vec::new() }
    }

    pub fn terms(&self) -> &[TrigTerm] {
        &self.terms
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for t in &self.terms {
            let phase: f64 = TAU * t.freq.iter().zip(x).map(|(&f, &xi)| f as f64 * xi).sum::<f64>();
            let (s, c) = phase.sin_cos();
            for i in 0..self.dim {
                out[i] += t.cos[i] * c + t.sin[i] * s;
            }
        }
        out
    }

    pub fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.dim, self.dim);
        for t in &self.terms {
            let phase: f64 = TAU * t.freq.iter().zip(x).map(|(&f, &xi)| f as f64 * xi).sum::<f64>();
            let (s, c) = phase.sin_cos();
            for i in 0..self.dim {
                let amp = -t.cos[i] * s + t.sin[i] * c;
                for j in 0..self.dim {
                    out[(i, j)] += TAU * t.freq[j] as f64 * amp;
                }
            }
        }
        out
    }
}

/// Serializable description of a perturbed map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapSpec {
    pub matrix: Vec<Vec<i64>>,
    pub epsilon: f64,
    pub psi: Vec<TrigTerm>,
}

#[derive(Clone, Debug)]
pub struct PerturbedMap {
    linear: ToralAutomorphism,
    epsilon: f64,
    psi: Perturbation,
}

impl PerturbedMap {
    pub fn new(linear: ToralAutomorphism, epsilon: f64, psi: Perturbation) -> Result<Self> {
        if psi.dim != linear.dim() {
            return Err(Error::InvalidInput(format!(
                "perturbation dimension {} does not match matrix dimension {}",
                psi.dim,
                linear.dim()
            )));
        }
        if !epsilon.is_finite() || epsilon < 0.0 {
            return Err(Error::InvalidInput(format!("bad epsilon {epsilon}")));
        }
        Ok(PerturbedMap { linear, epsilon, psi })
    }

    /// Cat matrix with `Psi(x) = (sin 2 pi x_2, 0)`.
    pub fn standard_example(epsilon: f64) -> Self {
        let psi = Perturbation::new(
            2,
            vec![TrigTerm {
                freq: vec![0, 1],
                cos: vec![0.0, 0.0],
                sin: vec![1.0, 0.0],
            }],
        )
        .unwrap();
        PerturbedMap::new(ToralAutomorphism::cat_map(), epsilon, psi).unwrap()
    }

    pub fn from_spec(spec: &MapSpec) -> Result<Self> {
        let rows: Vec<Vec<i64>> = spec.matrix.clone();
        let linear = ToralAutomorphism::new(&rows)?;
        let psi = Perturbation::new(linear.dim(), spec.psi.clone())?;
        PerturbedMap::new(linear, spec.epsilon, psi)
    }

    pub fn to_spec(&self) -> MapSpec {
        let d = self.dim();
        let matrix = (0..d)
            .map(|i| {
                (0..d)
                    .map(|j| self.linear.matrix().get(i, j).to_i64().unwrap())
                    .collect()
            })
            .collect();
        MapSpec {
            matrix,
            epsilon: self.epsilon,
            psi: self.psi.terms.clone(),
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let spec: MapSpec = serde_json::from_str(s)?;
        Self::from_spec(&spec)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_spec())?)
    }

    pub fn linear(&self) -> &ToralAutomorphism {
        &self.linear
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn psi(&self) -> &Perturbation {
        &self.psi
    }

    pub fn dim(&self) -> usize {
        self.linear.dim()
    }

    /// Lift to the cover: `A x + eps Psi(x)`, no reduction.
    pub fn eval_cover(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let a = self.linear.matrix_f64();
        let psi = self.psi.eval(x);
        (0..d)
            .map(|i| (0..d).map(|j| a[(i, j)] * x[j]).sum::<f64>() + self.epsilon * psi[i])
            .collect()
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.eval_cover(x).iter().map(|v| v.rem_euclid(1.0)).collect()
    }

    pub fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        self.linear.matrix_f64() + self.psi.jacobian(x).scale(self.epsilon)
    }

    fn at_epsilon(&self, eps: f64) -> PerturbedMap {
        PerturbedMap {
            linear: self.linear.clone(),
            epsilon: eps,
            psi: self.psi.clone(),
        }
    }
}

/// A continued primitive orbit. Points live on the cover (they stay within
/// O(eps) of the unit cell); `translations[i]` is the integer vector with
/// `F_lift(points[i]) = points[i+1 mod k] + translations[i]`.
#[derive(Clone, Debug)]
pub struct PerturbedOrbit {
    pub least_period: usize,
    pub points: Vec<Vec<f64>>,
    pub translations: Vec<Vec<i64>>,
    pub monodromy: DMatrix<f64>,
    pub floquet: Vec<Complex64>,
    pub unstable_log: f64,
    pub residual: f64,
}

impl PerturbedOrbit {
    /// `|det(I - P^n)|` for the n-th iterate of the orbit monodromy.
    pub fn iterate_inv_weight(&self, n: usize) -> f64 {
        let d = self.monodromy.nrows();
        let mut pw = DMatrix::<f64>::identity(d, d);
        for _ in 0..n {
            pw = &self.monodromy * pw;
        }
        (DMatrix::<f64>::identity(d, d) - pw).determinant().abs()
    }
}

fn exact_translations(map: &ToralAutomorphism, orbit: &RationalOrbit) -> Vec<Vec<i64>> {
    let k = orbit.points.len();
    let d = map.dim();
    (0..k)
        .map(|i| {
            let img: Vec<BigRational> = (0..d)
                .map(|r| {
                    let mut acc = BigRational::zero();
                    for c in 0..d {
                        acc += BigRational::from(map.matrix().get(r, c).clone())
                            * &orbit.points[i][c];
                    }
                    acc - &orbit.points[(i + 1) % k][r]
                })
                .collect();
            img.iter()
                .map(|v| {
                    debug_assert!(v.is_integer());
                    v.to_integer().to_i64().expect("translation fits i64")
                })
                .collect()
        })
        .collect()
}

/// One Newton solve at fixed eps. `x` is the flat vector of all orbit
/// points; returns the final max-norm residual on success.
fn newton_solve(
    map: &PerturbedMap,
    k: usize,
    x: &mut DVector<f64>,
    m: &[Vec<i64>],
) -> Option<f64> {
    let d = map.dim();
    let n = k * d;
    for _ in 0..NEWTON_MAX_ITERS {
        let mut res = DVector::<f64>::zeros(n);
        let mut worst = 0.0f64;
        for i in 0..k {
            let j = (i + 1) % k;
            let xi = x.as_slice()[i * d..(i + 1) * d].to_vec();
            let img = map.eval_cover(&xi);
            for c in 0..d {
                let v = img[c] - x[j * d + c] - m[i][c] as f64;
                res[i * d + c] = v;
                worst = worst.max(v.abs());
            }
        }
        if worst < NEWTON_TOL {
            return Some(worst);
        }
        let mut jac = DMatrix::<f64>::zeros(n, n);
        for i in 0..k {
            let j = (i + 1) % k;
            let xi = x.as_slice()[i * d..(i + 1) * d].to_vec();
            let dfi = map.jacobian(&xi);
            for r in 0..d {
                for c in 0..d {
                    jac[(i * d + r, i * d + c)] += dfi[(r, c)];
                }
                jac[(i * d + r, j * d + r)] += -1.0;
            }
        }
        let delta = jac.lu().solve(&res)?;
        *x -= delta;
    }
    None
}

/// Continue one exact orbit of the linear map to the target eps by stepped
/// homotopy: uniform steps, each failed step halved up to a few times.
pub fn continue_orbit(map: &PerturbedMap, seed: &RationalOrbit) -> Result<PerturbedOrbit> {
    let k = seed.points.len();
    let d = map.dim();
    let m = exact_translations(map.linear(), seed);
    let mut x = DVector::<f64>::zeros(k * d);
    for i in 0..k {
        let p = rational_point_to_f64(&seed.points[i]);
        for c in 0..d {
            x[i * d + c] = p[c];
        }
    }
    let target = map.epsilon();
    let mut eps_cur = 0.0;
    let mut step = target / CONTINUATION_STEPS as f64;
    let mut halvings = 0;
    // the eps = 0 residual is identically zero, but running one solve
    // validates the translations
    let mut residual = match newton_solve(&map.at_epsilon(0.0), k, &mut x, &m) {
        Some(r) => r,
        None => {
            return Err(Error::NewtonDivergence {
                period: k,
                epsilon_reached: 0.0,
            })
        }
    };
    while eps_cur < target {
        let eps_next = (eps_cur + step).min(target);
        let mut trial = x.clone();
        match newton_solve(&map.at_epsilon(eps_next), k, &mut trial, &m) {
            Some(r) => {
                x = trial;
                eps_cur = eps_next;
                residual = r;
            }
            None => {
                halvings += 1;
                if halvings > MAX_STEP_HALVINGS {
                    return Err(Error::NewtonDivergence {
                        period: k,
                        epsilon_reached: eps_cur,
                    });
                }
                step *= 0.5;
            }
        }
    }
    let points: Vec<Vec<f64>> = (0..k)
        .map(|i| x.as_slice()[i * d..(i + 1) * d].to_vec())
        .collect();
    let mut monodromy = DMatrix::<f64>::identity(d, d);
    for p in &points {
        monodromy = map.jacobian(p) * monodromy;
    }
    let mut floquet: Vec<Complex64> = monodromy
        .complex_eigenvalues()
        .iter()
        .map(|z| Complex64::new(z.re, z.im))
        .collect();
    crate::eig::sort_eigenvalues(&mut floquet);
    for mu in &floquet {
        if (mu.norm() - 1.0).abs() < UNIT_MULTIPLIER_GAP {
            return Err(Error::HyperbolicityLoss {
                period: k,
                modulus: mu.norm(),
            });
        }
    }
    let unstable_log = floquet
        .iter()
        .filter(|mu| mu.norm() > 1.0)
        .map(|mu| mu.norm().ln())
        .sum();
    Ok(PerturbedOrbit {
        least_period: k,
        points,
        translations: m,
        monodromy,
        floquet,
        unstable_log,
        residual,
    })
}

/// All primitive orbits with least period <= `p_max`, continued from the
/// linear map. Orbits are independent, so this is the natural parallel axis.
pub fn continue_orbits(map: &PerturbedMap, p_max: usize) -> Result<Vec<PerturbedOrbit>> {
    let seeds = primitive_orbits(map.linear(), p_max)?;
    par::map_range(seeds.len(), |i| continue_orbit(map, &seeds[i]))
        .into_iter()
        .collect()
}

/// Expansion and contraction statistics measured in the eigenbasis of the
/// linear part.
#[derive(Clone, Debug, Serialize)]
pub struct ConeReport {
    pub grid: usize,
    pub iterations: usize,
    pub burn_in: usize,
    pub unstable_dim: usize,
    pub stable_dim: usize,
    pub min_expansion: f64,
    pub max_expansion: f64,
    pub min_contraction: f64,
    pub max_contraction: f64,
}

fn real_eigenbasis(map: &ToralAutomorphism) -> Result<(DMatrix<f64>, usize)> {
    let d = map.dim();
    for ev in map.eigenvalues() {
        if ev.im.abs() > 1e-9 {
            return Err(Error::InvalidInput(
                "cone analysis needs a real simple spectrum".into(),
            ));
        }
    }
    let mut cm = crate::eig::ComplexMatrix::zeros(d);
    for r in 0..d {
        for c in 0..d {
            cm.set(r, c, Complex64::new(map.matrix_f64()[(r, c)], 0.0));
        }
    }
    let (vals, vecs) = crate::eig::eigen_decomposition(&cm)?;
    let unstable_dim = vals.iter().filter(|v| v.norm() > 1.0).count();
    // scale each eigenvector so its first nonzero component is exactly 1;
    // the expansion factors are invariant under column scaling but the test
    // rays are not, so the normalization is pinned here
    let mut u = DMatrix::<f64>::zeros(d, d);
    for c in 0..d {
        let col: Vec<Complex64> = (0..d).map(|r| vecs.get(r, c)).collect();
        let lead = col
            .iter()
            .position(|z| z.norm() > 1e-8)
            .ok_or_else(|| Error::Eigensolver("zero eigenvector column".into()))?;
        for r in 0..d {
            let z = col[r] / col[lead];
            if z.im.abs() > 1e-8 {
                return Err(Error::Eigensolver(format!(
                    "eigenvector not real after scaling: imag {}",
                    z.im
                )));
            }
            u[(r, c)] = z.re;
        }
    }
    Ok((u, unstable_dim))
}

fn coeff_norms(uinv: &DMatrix<f64>, v: &DVector<f64>, du: usize) -> (f64, f64) {
    let c = uinv * v;
    let mut nu = 0.0;
    let mut ns = 0.0;
    for i in 0..c.len() {
        if i < du {
            nu += c[i] * c[i];
        } else {
            ns += c[i] * c[i];
        }
    }
    (nu.sqrt(), ns.sqrt())
}

/// Walk test rays on the boundary of the unit eigen-cones along forward
/// orbits of a uniform grid. Forward differentials measure unstable
/// expansion; the stable side is measured by inverting the stored
/// differentials back along the same orbit segment, which avoids needing
/// an inverse of the map itself.
pub fn cone_check(
    map: &PerturbedMap,
    grid: usize,
    iterations: usize,
    burn_in: usize,
) -> Result<ConeReport> {
    if grid == 0 || iterations <= burn_in {
        return Err(Error::InvalidInput(
            "cone check needs a nonempty grid and iterations > burn_in".into(),
        ));
    }
    let d = map.dim();
    let (u, du) = real_eigenbasis(map.linear())?;
    let ds = d - du;
    if du == 0 || ds == 0 {
        return Err(Error::InvalidInput(
            "cone analysis needs both stable and unstable directions".into(),
        ));
    }
    let uinv = u
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Eigensolver("eigenbasis not invertible".into()))?;
    // boundary rays: unit unstable mix against every sign pattern of the
    // stable coefficients, and vice versa for the backward walk
    let mut unstable_rays: Vec<DVector<f64>> = Vec::new();
    for signs in 0..(1usize << ds) {
        let mut c = DVector::<f64>::zeros(d);
        for i in 0..du {
            c[i] = 1.0;
        }
        for i in 0..ds {
            c[du + i] = if signs >> i & 1 == 1 { -1.0 } else { 1.0 };
        }
        unstable_rays.push(&u * c);
    }
    let mut stable_rays: Vec<DVector<f64>> = Vec::new();
    for signs in 0..(1usize << du) {
        let mut c = DVector::<f64>::zeros(d);
        for i in 0..du {
            c[i] = if signs >> i & 1 == 1 { -1.0 } else { 1.0 };
        }
        for i in 0..ds {
            c[du + i] = 1.0;
        }
        stable_rays.push(&u * c);
    }

    let cells: usize = grid.pow(d as u32);
    let stats = par::map_range(cells, |cell| -> Result<(f64, f64, f64, f64)> {
        let mut x = vec![0.0; d];
        let mut rem = cell;
        for c in (0..d).rev() {
            x[c] = (rem % grid) as f64 / grid as f64;
            rem /= grid;
        }
        let mut min_e = f64::INFINITY;
        let mut max_e = f64::NEG_INFINITY;
        // forward pass, recording the differentials for the backward pass
        let mut jacs = Vec::with_capacity(iterations);
        let mut rays = unstable_rays.clone();
        let mut y = x.clone();
        for it in 0..iterations {
            let dj = map.jacobian(&y);
            jacs.push(dj.clone());
            let mut next = Vec::with_capacity(rays.len());
            for v in &rays {
                let w = &dj * v;
                let (nu_v, _) = coeff_norms(&uinv, v, du);
                let (nu_w, ns_w) = coeff_norms(&uinv, &w, du);
                if ns_w > nu_w {
                    return Err(Error::ConeEscape { x: x[0], y: x[1 % d] });
                }
                if it >= burn_in {
                    let fac = nu_w / nu_v;
                    min_e = min_e.min(fac);
                    max_e = max_e.max(fac);
                }
                next.push(w.normalize());
            }
            rays = next;
            y = map.eval(&y);
        }
        // backward pass over the same segment
        let mut min_b = f64::INFINITY;
        let mut max_b = f64::NEG_INFINITY;
        let mut rays = stable_rays.clone();
        for (it, dj) in jacs.iter().rev().enumerate() {
            let inv = dj.clone().try_inverse().ok_or(Error::ConeEscape {
                x: x[0],
                y: x[1 % d],
            })?;
            let mut next = Vec::with_capacity(rays.len());
            for v in &rays {
                let w = &inv * v;
                let (_, ns_v) = coeff_norms(&uinv, v, du);
                let (nu_w, ns_w) = coeff_norms(&uinv, &w, du);
                if nu_w > ns_w {
                    return Err(Error::ConeEscape { x: x[0], y: x[1 % d] });
                }
                if it >= burn_in {
                    let fac = ns_w / ns_v;
                    min_b = min_b.min(fac);
                    max_b = max_b.max(fac);
                }
                next.push(w.normalize());
            }
            rays = next;
        }
        Ok((min_e, max_e, min_b, max_b))
    });
    let mut min_expansion = f64::INFINITY;
    let mut max_expansion = f64::NEG_INFINITY;
    let mut min_back = f64::INFINITY;
    let mut max_back = f64::NEG_INFINITY;
    for s in stats {
        let (a, b, c, e) = s?;
        min_expansion = min_expansion.min(a);
        max_expansion = max_expansion.max(b);
        min_back = min_back.min(c);
        max_back = max_back.max(e);
    }
    Ok(ConeReport {
        grid,
        iterations,
        burn_in,
        unstable_dim: du,
        stable_dim: ds,
        min_expansion,
        max_expansion,
        // backward growth of stable coefficients inverts to forward
        // contraction factors
        min_contraction: 1.0 / max_back,
        max_contraction: 1.0 / min_back,
    })
}

/// A pooled class of closed flow orbits: `count` primitive map orbits of
/// least period `primitive_period`, traversed `iterate` times. For explicit
/// tables `count` is 1; aggregate tables pool all orbits of one period,
/// which is only valid when the weights coincide (the linear map).
#[derive(Clone, Copy, Debug)]
pub struct FlowOrbitClass {
    pub primitive_period: usize,
    pub iterate: usize,
    pub count: f64,
    pub inv_weight: f64,
    pub unstable_log: f64,
}

impl FlowOrbitClass {
    pub fn map_period(&self) -> usize {
        self.primitive_period * self.iterate
    }
}

#[derive(Clone, Debug)]
struct PeriodAggregate {
    period: usize,
    orbit_count: f64,
    unstable_log: f64,
}

/// Periodic-orbit data for one map up to a period horizon. Two storage
/// modes: explicit orbits (always used for perturbed maps) and per-period
/// aggregates (linear maps only, where a period determines the weight);
/// aggregates reach horizons where enumeration would need ~1e17 orbits.
#[derive(Clone, Debug)]
pub struct OrbitTable {
    linear: ToralAutomorphism,
    epsilon: f64,
    horizon: usize,
    orbits: Vec<PerturbedOrbit>,
    aggregates: Vec<PeriodAggregate>,
}

impl OrbitTable {
    pub fn perturbed(map: &PerturbedMap, horizon: usize) -> Result<OrbitTable> {
        let orbits = continue_orbits(map, horizon)?;
        Ok(OrbitTable {
            linear: map.linear().clone(),
            epsilon: map.epsilon(),
            horizon,
            orbits,
            aggregates: Vec::new(),
        })
    }

    pub fn from_linear_orbits(
        map: &ToralAutomorphism,
        horizon: usize,
        seeds: &[RationalOrbit],
    ) -> Result<OrbitTable> {
        let trivial = PerturbedMap::new(map.clone(), 0.0, Perturbation::empty(map.dim()))?;
        let orbits: Result<Vec<PerturbedOrbit>> =
            seeds.iter().map(|s| continue_orbit(&trivial, s)).collect();
        Ok(OrbitTable {
            linear: map.clone(),
            epsilon: 0.0,
            horizon,
            orbits: orbits?,
            aggregates: Vec::new(),
        })
    }

    /// Aggregate-only table for the linear map: per period, the primitive
    /// orbit count (by Möbius inversion of the fixed-point counts) and the
    /// shared unstable log.
    pub fn linear_aggregates(map: &ToralAutomorphism, horizon: usize) -> OrbitTable {
        let counts = primitive_counts(map, horizon);
        let rate = map.expansion_rate();
        let aggregates = (1..=horizon)
            .map(|k| PeriodAggregate {
                period: k,
                orbit_count: bigint_to_f64(&counts[k - 1]),
                unstable_log: k as f64 * rate,
            })
            .collect();
        OrbitTable {
            linear: map.clone(),
            epsilon: 0.0,
            horizon,
            orbits: Vec::new(),
            aggregates,
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn orbits(&self) -> &[PerturbedOrbit] {
        &self.orbits
    }

    pub fn is_aggregate(&self) -> bool {
        !self.aggregates.is_empty()
    }

    /// All orbit classes with total map period <= `p_cap`, ordered by
    /// (primitive period, table order, iterate).
    pub fn classes_up_to(&self, p_cap: usize) -> Result<Vec<FlowOrbitClass>> {
        if p_cap > self.horizon {
            return Err(Error::SupportExceedsTable {
                lo: 0.0,
                hi: p_cap as f64,
                horizon: self.horizon as f64,
            });
        }
        let mut out = Vec::new();
        if self.is_aggregate() {
            for agg in &self.aggregates {
                let k = agg.period;
                if k > p_cap || agg.orbit_count == 0.0 {
                    continue;
                }
                for n in 1..=p_cap / k {
                    let fix = self.linear.count_fixed_points(k * n);
                    out.push(FlowOrbitClass {
                        primitive_period: k,
                        iterate: n,
                        count: agg.orbit_count,
                        inv_weight: bigint_to_f64(&fix),
                        unstable_log: n as f64 * agg.unstable_log,
                    });
                }
            }
        } else {
            for orbit in &self.orbits {
                let k = orbit.least_period;
                if k > p_cap {
                    continue;
                }
                for n in 1..=p_cap / k {
                    out.push(FlowOrbitClass {
                        primitive_period: k,
                        iterate: n,
                        count: 1.0,
                        inv_weight: orbit.iterate_inv_weight(n),
                        unstable_log: n as f64 * orbit.unstable_log,
                    });
                }
            }
        }
        Ok(out)
    }

    /// Flat trace of the p-th map iterate:
    /// sum over fixed points of `F^p` of `1 / |det(I - D F^p)|`.
    pub fn trace_sum(&self, p: usize) -> Result<f64> {
        let classes = self.classes_up_to(p)?;
        Ok(classes
            .iter()
            .filter(|c| c.map_period() == p)
            .map(|c| c.count * c.primitive_period as f64 / c.inv_weight)
            .sum())
    }
}
