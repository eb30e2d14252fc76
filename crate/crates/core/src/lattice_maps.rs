//! Hyperbolic automorphisms of the d-torus and their exact periodic-point
//! arithmetic.
//!
//! Counting is done with big integers (`|det(A^p - I)|`), enumeration with a
//! Smith decomposition so every fixed point of `A^p` is produced as an exact
//! rational vector. Weights like `1/|det(I - D F^p)|` stay rational for the
//! linear map, which is what makes the per-period census checks exact rather
//! than approximate.

use std::collections::HashSet;

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::intmat::{smith_normal_form, IntMat};
use crate::perturbed_maps::OrbitTable;

pub type RationalPoint = Vec<BigRational>;

const UNIT_CIRCLE_GAP: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct ToralAutomorphism {
    dim: usize,
    mat: IntMat,
    matf: DMatrix<f64>,
    eigenvalues: Vec<Complex64>,
    expansion_rate: f64,
}

impl ToralAutomorphism {
    /// Validates unimodularity and hyperbolicity.
    pub fn new(rows: &[Vec<i64>]) -> Result<Self> {
        let mat = IntMat::from_rows(rows)?;
        let dim = mat.size();
        if dim > 4 {
            return Err(Error::InvalidInput(format!(
                "dimension {dim} unsupported; exact enumeration is intended for d <= 4"
            )));
        }
        let det = mat.det();
        if det.abs() != BigInt::one() {
            return Err(Error::NotUnimodular {
                det: det.to_string(),
            });
        }
        let matf = mat.to_f64();
        let eigenvalues: Vec<Complex64> = matf
            .complex_eigenvalues()
            .iter()
            .map(|c| Complex64::new(c.re, c.im))
            .collect();
        let mut eigenvalues = eigenvalues;
        eigenvalues.sort_by(|a, b| {
            b.norm()
                .partial_cmp(&a.norm())
                .unwrap()
                .then(a.arg().partial_cmp(&b.arg()).unwrap())
        });
        for ev in &eigenvalues {
            if (ev.norm() - 1.0).abs() < UNIT_CIRCLE_GAP {
                return Err(Error::NotHyperbolic {
                    modulus: ev.norm(),
                    tol: UNIT_CIRCLE_GAP,
                });
            }
        }
        let modulus_product: f64 = eigenvalues.iter().map(|e| e.norm()).product();
        if (modulus_product - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidInput(format!(
                "eigenvalue moduli multiply to {modulus_product}, expected 1"
            )));
        }
        let expansion_rate = eigenvalues
            .iter()
            .filter(|e| e.norm() > 1.0)
            .map(|e| e.norm().ln())
            .sum();
        Ok(ToralAutomorphism {
            dim,
            mat,
            matf,
            eigenvalues,
            expansion_rate,
        })
    }

    /// The standard two-dimensional example [[1,1],[1,2]].
    pub fn cat_map() -> Self {
        Self::new(&[vec![1, 1], vec![1, 2]]).expect("cat map is hyperbolic")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &IntMat {
        &self.mat
    }

    pub fn matrix_f64(&self) -> &DMatrix<f64> {
        &self.matf
    }

    /// Sorted by descending modulus.
    pub fn eigenvalues(&self) -> &[Complex64] {
        &self.eigenvalues
    }

    /// Sum of log moduli over the expanding spectrum.
    pub fn expansion_rate(&self) -> f64 {
        self.expansion_rate
    }

    /// `#fix(A^p) = |det(A^p - I)|`, exactly.
    pub fn count_fixed_points(&self, p: usize) -> BigInt {
        self.mat.pow(p).sub_identity().det().abs()
    }

    /// All fixed points of `A^p` as exact rationals in `[0,1)^d`,
    /// lexicographically ordered.
    ///
    /// Solves `(A^p - I) x ∈ Z^d` through the Smith decomposition
    /// `U (A^p - I) V = D`: the solutions are `x = V y mod 1` with
    /// `y_i = m_i / d_i`, `0 <= m_i < d_i`.
    pub fn enumerate_fixed_points(&self, p: usize) -> Result<Vec<RationalPoint>> {
        let m = self.mat.pow(p).sub_identity();
        let s = smith_normal_form(&m);
        if s.diag.iter().any(|d| d.is_zero()) {
            return Err(Error::SingularPower { period: p });
        }
        let d = self.dim;
        let mut points = Vec::new();
        let mut idx = vec![BigInt::zero(); d];
        loop {
            let y: Vec<BigRational> = (0..d)
                .map(|i| BigRational::new(idx[i].clone(), s.diag[i].clone()))
                .collect();
            let x: RationalPoint = (0..d)
                .map(|i| {
                    let mut acc = BigRational::zero();
                    for j in 0..d {
                        acc += BigRational::from(s.col_ops.get(i, j).clone()) * &y[j];
                    }
                    frac(&acc)
                })
                .collect();
            points.push(x);
            // odometer over (m_1, ..., m_d)
            let mut carry = true;
            for i in (0..d).rev() {
                if !carry {
                    break;
                }
                idx[i] += 1;
                if idx[i] < s.diag[i] {
                    carry = false;
                } else {
                    idx[i] = BigInt::zero();
                }
            }
            if carry {
                break;
            }
        }
        points.sort();
        Ok(points)
    }

    /// `A x mod 1`, exact.
    pub fn apply_rational(&self, x: &RationalPoint) -> RationalPoint {
        (0..self.dim)
            .map(|i| {
                let mut acc = BigRational::zero();
                for j in 0..self.dim {
                    acc += BigRational::from(self.mat.get(i, j).clone()) * &x[j];
                }
                frac(&acc)
            })
            .collect()
    }

    /// `A x mod 1` in floats.
    pub fn apply_f64(&self, x: &[f64]) -> Vec<f64> {
        (0..self.dim)
            .map(|i| {
                let mut acc = 0.0;
                for j in 0..self.dim {
                    acc += self.matf[(i, j)] * x[j];
                }
                acc.rem_euclid(1.0)
            })
            .collect()
    }

    /// `|det(A^p - I)|` pushed to floats; the reciprocal is the weight every
    /// fixed point of `A^p` carries in the flat trace.
    pub fn linear_orbit_weight(&self, p: usize) -> f64 {
        1.0 / crate::intmat::bigint_to_f64(&self.count_fixed_points(p))
    }
}

fn frac(x: &BigRational) -> BigRational {
    x - x.floor()
}

/// One exact primitive orbit: `points.len()` is the least period and the
/// first point is the lexicographically smallest on the orbit.
#[derive(Clone, Debug)]
pub struct RationalOrbit {
    pub points: Vec<RationalPoint>,
}

impl RationalOrbit {
    pub fn least_period(&self) -> usize {
        self.points.len()
    }
}

/// Exact decomposition of all periodic points with period <= `p_max` into
/// primitive orbits, grouped by least period.
pub fn primitive_orbits(map: &ToralAutomorphism, p_max: usize) -> Result<Vec<RationalOrbit>> {
    let mut claimed: HashSet<RationalPoint> = HashSet::new();
    let mut orbits = Vec::new();
    for p in 1..=p_max {
        for x in map.enumerate_fixed_points(p)? {
            if claimed.contains(&x) {
                continue;
            }
            // enumeration runs over ascending p, so an unclaimed point here
            // has least period exactly p
            let mut pts = vec![x.clone()];
            let mut y = map.apply_rational(&x);
            while y != x {
                pts.push(y.clone());
                y = map.apply_rational(&y);
            }
            debug_assert_eq!(pts.len(), p);
            for q in &pts {
                claimed.insert(q.clone());
            }
            // rotate so the smallest point leads
            let lead = pts
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.cmp(b.1))
                .map(|(i, _)| i)
                .unwrap();
            pts.rotate_left(lead);
            orbits.push(RationalOrbit { points: pts });
        }
    }
    orbits.sort_by(|a, b| {
        a.least_period()
            .cmp(&b.least_period())
            .then_with(|| a.points[0].cmp(&b.points[0]))
    });
    Ok(orbits)
}

/// Sum of `1/|det(A^p - I)|` over the enumerated fixed points of `A^p`,
/// in exact rational arithmetic. Equals 1 for every hyperbolic `A`.
pub fn exact_trace_sum(map: &ToralAutomorphism, p: usize) -> Result<BigRational> {
    let det = map.count_fixed_points(p);
    let points = map.enumerate_fixed_points(p)?;
    let w = BigRational::new(BigInt::one(), det);
    let mut acc = BigRational::zero();
    for _ in &points {
        acc += &w;
    }
    Ok(acc)
}

/// Orbit table of the unperturbed map: exact seeds, exact translation
/// vectors, Jacobian `A^k` per orbit.
pub fn decompose_orbits(map: &ToralAutomorphism, p_max: usize) -> Result<OrbitTable> {
    let orbits = primitive_orbits(map, p_max)?;
    OrbitTable::from_linear_orbits(map, p_max, &orbits)
}

pub fn mobius(n: usize) -> i64 {
    let mut m = n;
    let mut res = 1i64;
    let mut p = 2;
    while p * p <= m {
        if m.is_multiple_of(p) {
            m /= p;
            if m.is_multiple_of(p) {
                return 0;
            }
            res = -res;
        }
        p += 1;
    }
    if m > 1 {
        res = -res;
    }
    res
}

/// Primitive-orbit counts per least period via Möbius inversion of the
/// fixed-point counts; avoids enumeration, so it scales to the pressure
/// horizons where orbit storage would be absurd.
pub fn primitive_counts(map: &ToralAutomorphism, p_max: usize) -> Vec<BigInt> {
    let fix: Vec<BigInt> = (1..=p_max).map(|p| map.count_fixed_points(p)).collect();
    (1..=p_max)
        .map(|k| {
            let mut acc = BigInt::zero();
            for d in 1..=k {
                if k % d == 0 {
                    acc += BigInt::from(mobius(k / d)) * &fix[d - 1];
                }
            }
            debug_assert!((&acc % BigInt::from(k as i64)).is_zero());
            acc / BigInt::from(k as i64)
        })
        .collect()
}

pub fn rational_point_to_f64(x: &RationalPoint) -> Vec<f64> {
    x.iter().map(|c| c.to_f64().unwrap()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    // counts for p = 1..12, cross-checked against round(l+^p + l-^p - 2)
    const CENSUS: [u64; 12] = [1, 5, 16, 45, 121, 320, 841, 2205, 5776, 15125, 39601, 103680];

    #[test]
    fn rejects_non_hyperbolic_and_non_unimodular() {
        assert!(matches!(
            ToralAutomorphism::new(&[vec![1, 1], vec![0, 1]]),
            Err(Error::NotHyperbolic { .. })
        ));
        assert!(matches!(
            ToralAutomorphism::new(&[vec![2, 0], vec![0, 2]]),
            Err(Error::NotUnimodular { .. })
        ));
        assert!(ToralAutomorphism::new(&[vec![2, 1], vec![1, 1]]).is_ok());
    }

    #[test]
    fn census_counts_match_eigenvalue_formula() {
        let map = ToralAutomorphism::cat_map();
        let lp = (3.0 + 5f64.sqrt()) / 2.0;
        let lm = (3.0 - 5f64.sqrt()) / 2.0;
        for (i, &expect) in CENSUS.iter().enumerate() {
            let p = i + 1;
            let n = map.count_fixed_points(p);
            assert_eq!(n, BigInt::from(expect), "count at p = {p}");
            let guess = (lp.powi(p as i32) + lm.powi(p as i32) - 2.0).round() as u64;
            assert_eq!(guess, expect, "eigenvalue cross-check at p = {p}");
        }
    }

    #[test]
    fn enumeration_count_and_membership() {
        let map = ToralAutomorphism::cat_map();
        for p in 1..=8 {
            let pts = map.enumerate_fixed_points(p).unwrap();
            assert_eq!(BigInt::from(pts.len()), map.count_fixed_points(p));
            // distinct and genuinely periodic
            let set: HashSet<_> = pts.iter().cloned().collect();
            assert_eq!(set.len(), pts.len());
            for x in pts.iter().take(50) {
                let mut y = x.clone();
                for _ in 0..p {
                    y = map.apply_rational(&y);
                }
                assert_eq!(&y, x);
            }
        }
    }

    #[test]
    fn period_two_points_have_denominator_five() {
        let map = ToralAutomorphism::cat_map();
        let pts = map.enumerate_fixed_points(2).unwrap();
        assert_eq!(pts.len(), 5);
        for x in pts.iter().skip(1) {
            for c in x {
                assert_eq!(*c.denom(), BigInt::from(5), "point {x:?}");
            }
        }
    }

    #[test]
    fn orbit_decomposition_census() {
        let map = ToralAutomorphism::cat_map();
        let orbits = primitive_orbits(&map, 8).unwrap();
        let counts = primitive_counts(&map, 8);
        // enumerated primitive orbit counts match the Möbius inversion
        for k in 1..=8usize {
            let enumerated = orbits.iter().filter(|o| o.least_period() == k).count();
            assert_eq!(BigInt::from(enumerated), counts[k - 1], "N_{k}");
        }
        // sum_{k | p} k N_k = #fix(p)
        for p in 1..=8usize {
            let mut acc = BigInt::zero();
            for k in 1..=p {
                if p % k == 0 {
                    acc += BigInt::from(k) * &counts[k - 1];
                }
            }
            assert_eq!(acc, map.count_fixed_points(p), "census identity at p = {p}");
        }
    }

    #[test]
    fn trace_sum_is_exactly_one() {
        let map = ToralAutomorphism::cat_map();
        for p in 1..=6 {
            assert_eq!(exact_trace_sum(&map, p).unwrap(), BigRational::one());
        }
    }

    #[test]
    fn three_dimensional_example() {
        // companion-style unimodular hyperbolic matrix
        let map = ToralAutomorphism::new(&[vec![0, 1, 0], vec![0, 0, 1], vec![1, 1, 3]]);
        let map = map.unwrap();
        for p in 1..=4 {
            let pts = map.enumerate_fixed_points(p).unwrap();
            assert_eq!(BigInt::from(pts.len()), map.count_fixed_points(p));
        }
        assert_eq!(exact_trace_sum(&map, 3).unwrap(), BigRational::one());
    }
}
