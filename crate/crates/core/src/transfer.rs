//! Fourier-truncated transfer operator of a perturbed toral map.
//!
//! The operator acts on Fourier modes by
//! `(L e_k')(x) = e^{2 pi i k'. F(x)}`, which in the mode basis becomes
//! `M[k, k'] = Phi_hat_{k'}(k - A^T k')` with
//! `Phi_{k'}(x) = exp(2 pi i eps k'. Psi(x))`. Since `Psi` is a trig
//! polynomial, each `Phi_{k'}` is band limited up to superexponentially small
//! tails, so a modest FFT grid holds every coefficient to well below the
//! working tolerance; the grid doubles until the tail ring confirms it.
//!
//! Many columns share the same `Phi` (it depends on k' only through the
//! dot products with the perturbation coefficients), so coefficient grids
//! are computed once per distinct profile.

use std::collections::HashMap;
use std::sync::Arc;

use num_complex::Complex64;
use num_traits::ToPrimitive;
use rustfft::FftPlanner;

use crate::eig::{eigenvalues, ComplexMatrix};
use crate::error::{Error, Result};
use crate::par;
use crate::perturbed_maps::PerturbedMap;

const TAU: f64 = std::f64::consts::TAU;

/// Coefficients beyond the guard band must fall below this before the grid
/// is accepted.
const ALIAS_TOL: f64 = 1e-12;
const MAX_GRID: usize = 4096;

pub const DEFAULT_MATCH_TOL: f64 = 1e-6;
pub const DEFAULT_MU_MIN: f64 = 0.05;
pub const CHECK_CUT_STEP: usize = 4;

/// Entries with `|k - A^T k'|_inf` beyond this are treated as zero by the
/// decay checks. The first part tracks the Bessel-type bandwidth of the
/// phase factors; the additive margin pushes the boundary to where the
/// coefficients are provably below 1e-10 rather than merely small.
pub fn decay_bandwidth(map: &PerturbedMap, k_cut: usize) -> usize {
    let mut coeff: f64 = 0.0;
    for t in map.psi().terms() {
        let fmax = t.freq.iter().map(|f| f.unsigned_abs()).max().unwrap_or(0) as f64;
        let amp = t
            .cos
            .iter()
            .chain(t.sin.iter())
            .fold(0.0f64, |a, &v| a.max(v.abs()));
        coeff = coeff.max(fmax * amp);
    }
    let reach = TAU * map.epsilon() * k_cut as f64 * coeff;
    4 * reach.ceil() as usize + 8
}

#[derive(Clone, Debug)]
pub struct TransferMatrix {
    pub k_cut: usize,
    /// FFT grid that passed the tail check; None when the map is linear and
    /// the matrix was filled analytically.
    pub grid: Option<usize>,
    pub matrix: ComplexMatrix,
}

fn mode_index(k1: i64, k2: i64, k_cut: usize) -> usize {
    let side = 2 * k_cut + 1;
    ((k1 + k_cut as i64) as usize) * side + (k2 + k_cut as i64) as usize
}

/// In-place 2-D forward FFT of a row-major N x N complex grid, normalized
/// by 1/N^2 so the output holds Fourier coefficients.
fn fft2_coefficients(data: &mut [Complex64], n: usize) {
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n);
    for row in data.chunks_exact_mut(n) {
        fft.process(row);
    }
    // columns via transpose, row FFT, transpose back
    let mut t = vec![Complex64::new(0.0, 0.0); n * n];
    for i in 0..n {
        for j in 0..n {
            t[j * n + i] = data[i * n + j];
        }
    }
    for row in t.chunks_exact_mut(n) {
        fft.process(row);
    }
    let scale = 1.0 / (n * n) as f64;
    for i in 0..n {
        for j in 0..n {
            data[i * n + j] = t[j * n + i] * scale;
        }
    }
}

/// Fourier coefficient grid of `exp(2 pi i eps * g(x))` where
/// `g(x) = sum_t dc_t cos(2 pi f_t . x) + ds_t sin(2 pi f_t . x)`.
fn phase_coefficients(
    map: &PerturbedMap,
    dots: &[(f64, f64)],
    n: usize,
) -> Vec<Complex64> {
    let eps = map.epsilon();
    let terms = map.psi().terms();
    let mut grid = vec![Complex64::new(0.0, 0.0); n * n];
    for i1 in 0..n {
        let x1 = i1 as f64 / n as f64;
        for i2 in 0..n {
            let x2 = i2 as f64 / n as f64;
            let mut g = 0.0;
            for (t, &(dc, ds)) in terms.iter().zip(dots) {
                let phase = TAU * (t.freq[0] as f64 * x1 + t.freq[1] as f64 * x2);
                let (s, c) = phase.sin_cos();
                g += dc * c + ds * s;
            }
            grid[i1 * n + i2] = Complex64::from_polar(1.0, TAU * eps * g);
        }
    }
    fft2_coefficients(&mut grid, n);
    grid
}

fn alias_tail(grid: &[Complex64], n: usize) -> f64 {
    let mut worst = 0.0f64;
    for m1 in 0..n {
        let c1 = if m1 > n / 2 { n - m1 } else { m1 };
        for m2 in 0..n {
            let c2 = if m2 > n / 2 { n - m2 } else { m2 };
            if c1.max(c2) >= n / 4 {
                worst = worst.max(grid[m1 * n + m2].norm());
            }
        }
    }
    worst
}

/// Builds the truncated matrix with modes `|k_i| <= k_cut`.
pub fn assemble(map: &PerturbedMap, k_cut: usize) -> Result<TransferMatrix> {
    if map.dim() != 2 {
        return Err(Error::InvalidInput(
            "the Fourier transfer matrix is implemented for 2-d maps".into(),
        ));
    }
    if k_cut == 0 {
        return Err(Error::InvalidInput("mode cutoff must be positive".into()));
    }
    let side = 2 * k_cut + 1;
    let dim = side * side;
    let kc = k_cut as i64;
    let mut a = [[0i64; 2]; 2];
    for r in 0..2 {
        for c in 0..2 {
            a[r][c] = map.linear().matrix().get(r, c).to_i64().unwrap();
        }
    }
    // A^T k'
    let at = |v: (i64, i64)| -> (i64, i64) {
        (a[0][0] * v.0 + a[1][0] * v.1, a[0][1] * v.0 + a[1][1] * v.1)
    };

    let mut matrix = ComplexMatrix::zeros(dim);

    if map.epsilon() == 0.0 || map.psi().terms().is_empty() {
        // Phi = 1: exact Kronecker transport of modes
        for k1p in -kc..=kc {
            for k2p in -kc..=kc {
                let (t1, t2) = at((k1p, k2p));
                if t1.abs() <= kc && t2.abs() <= kc {
                    matrix.set(
                        mode_index(t1, t2, k_cut),
                        mode_index(k1p, k2p, k_cut),
                        Complex64::new(1.0, 0.0),
                    );
                }
            }
        }
        return Ok(TransferMatrix {
            k_cut,
            grid: None,
            matrix,
        });
    }

    // distinct phase profiles over columns
    let terms = map.psi().terms();
    let mut profile_of_col = vec![0usize; dim];
    let mut profiles: Vec<Vec<(f64, f64)>> = Vec::new();
    let mut seen: HashMap<Vec<(u64, u64)>, usize> = HashMap::new();
    for k1p in -kc..=kc {
        for k2p in -kc..=kc {
            let col = mode_index(k1p, k2p, k_cut);
            let dots: Vec<(f64, f64)> = terms
                .iter()
                .map(|t| {
                    let dc = k1p as f64 * t.cos[0] + k2p as f64 * t.cos[1];
                    let ds = k1p as f64 * t.sin[0] + k2p as f64 * t.sin[1];
                    (dc, ds)
                })
                .collect();
            let key: Vec<(u64, u64)> = dots
                .iter()
                .map(|&(dc, ds)| (dc.to_bits(), ds.to_bits()))
                .collect();
            let id = *seen.entry(key).or_insert_with(|| {
                profiles.push(dots);
                profiles.len() - 1
            });
            profile_of_col[col] = id;
        }
    }

    // band-limit estimate: reads stay inside |m|_inf <= (1 + |A|_inf) K + B
    let band = decay_bandwidth(map, k_cut);
    let a_norm = (0..2)
        .map(|r| (0..2).map(|c| a[r][c].abs()).sum::<i64>())
        .max()
        .unwrap() as usize;
    let reach = (1 + a_norm) * k_cut + band + 8;
    let mut n = 256usize;
    while n / 2 <= reach {
        n *= 2;
    }

    let grids: Vec<Arc<Vec<Complex64>>> = loop {
        let computed = par::map_range(profiles.len(), |i| {
            Arc::new(phase_coefficients(map, &profiles[i], n))
        });
        let worst = computed
            .iter()
            .map(|g| alias_tail(g, n))
            .fold(0.0f64, f64::max);
        if worst < ALIAS_TOL {
            break computed;
        }
        n *= 2;
        if n > MAX_GRID {
            return Err(Error::QuadratureNonconvergence {
                target: ALIAS_TOL,
                reached: worst,
            });
        }
    };

    // fill column by column
    let columns = par::map_range(dim, |col| {
        let k1p = (col / side) as i64 - kc;
        let k2p = (col % side) as i64 - kc;
        let c = &grids[profile_of_col[col]];
        let (t1, t2) = at((k1p, k2p));
        let mut out = vec![Complex64::new(0.0, 0.0); dim];
        for k1 in -kc..=kc {
            let m1 = k1 - t1;
            if m1.unsigned_abs() as usize >= n / 2 {
                continue;
            }
            for k2 in -kc..=kc {
                let m2 = k2 - t2;
                if m2.unsigned_abs() as usize >= n / 2 {
                    continue;
                }
                let r1 = m1.rem_euclid(n as i64) as usize;
                let r2 = m2.rem_euclid(n as i64) as usize;
                out[mode_index(k1, k2, k_cut)] = c[r1 * n + r2];
            }
        }
        out
    });
    for (col, data) in columns.into_iter().enumerate() {
        for (row, v) in data.into_iter().enumerate() {
            if v != Complex64::new(0.0, 0.0) {
                matrix.set(row, col, v);
            }
        }
    }

    Ok(TransferMatrix {
        k_cut,
        grid: Some(n),
        matrix,
    })
}

impl TransferMatrix {
    pub fn side(&self) -> usize {
        2 * self.k_cut + 1
    }

    pub fn dim(&self) -> usize {
        self.matrix.size()
    }

    /// `tr M^p` for p = 1..=p_max.
    pub fn truncated_traces(&self, p_max: usize) -> Vec<Complex64> {
        self.matrix.power_traces(p_max)
    }

    pub fn eigenvalues(&self) -> Result<Vec<Complex64>> {
        eigenvalues(&self.matrix)
    }

    pub fn entry(&self, k: (i64, i64), kp: (i64, i64)) -> Complex64 {
        let kc = self.k_cut as i64;
        assert!(
            k.0.abs() <= kc && k.1.abs() <= kc && kp.0.abs() <= kc && kp.1.abs() <= kc,
            "mode outside the truncation box"
        );
        self.matrix
            .get(mode_index(k.0, k.1, self.k_cut), mode_index(kp.0, kp.1, self.k_cut))
    }
}

/// Truncation-stable point spectrum: eigenvalues of the `k_cut` matrix that
/// reappear in the `k_cut + 4` matrix within `match_tol`, with modulus at
/// least `mu_min`. Everything else is truncation junk; its contribution to
/// the first few power traces is reported so callers can see what was
/// thrown away.
#[derive(Clone, Debug)]
pub struct MapResonances {
    pub k_cut: usize,
    pub k_check: usize,
    pub mu_min: f64,
    pub match_tol: f64,
    pub eigenvalues: Vec<Complex64>,
    pub match_dists: Vec<f64>,
    pub discarded_power_sums: Vec<f64>,
    pub trivial_beyond_leading: bool,
}

impl MapResonances {
    /// The linear map has exactly one nontrivial resonance, mu = 1, with no
    /// truncation involved.
    pub fn exact_linear() -> Self {
        MapResonances {
            k_cut: 0,
            k_check: 0,
            mu_min: 0.0,
            match_tol: 0.0,
            eigenvalues: vec![Complex64::new(1.0, 0.0)],
            match_dists: vec![0.0],
            discarded_power_sums: vec![0.0, 0.0, 0.0],
            trivial_beyond_leading: true,
        }
    }
}

pub fn extract_resonances(
    map: &PerturbedMap,
    k_cut: usize,
    mu_min: f64,
    match_tol: f64,
) -> Result<MapResonances> {
    let k_check = k_cut + CHECK_CUT_STEP;
    let m1 = assemble(map, k_cut)?;
    let m2 = assemble(map, k_check)?;
    let e1 = m1.eigenvalues()?;
    let e2 = m2.eigenvalues()?;
    let mut accepted = Vec::new();
    let mut dists = Vec::new();
    for &mu in &e1 {
        if mu.norm() < mu_min {
            continue;
        }
        let d = e2
            .iter()
            .map(|&nu| (mu - nu).norm())
            .fold(f64::INFINITY, f64::min);
        if d < match_tol {
            accepted.push(mu);
            dists.push(d);
        }
    }
    // junk contribution to traces: tr M^p minus the accepted power sums
    let traces = m1.truncated_traces(3);
    let discarded_power_sums = (1..=3)
        .map(|p| {
            let acc: Complex64 = accepted.iter().map(|mu| mu.powu(p as u32)).sum();
            (traces[p - 1] - acc).norm()
        })
        .collect();
    let trivial_beyond_leading = accepted.len() <= 1;
    Ok(MapResonances {
        k_cut,
        k_check,
        mu_min,
        match_tol,
        eigenvalues: accepted,
        match_dists: dists,
        discarded_power_sums,
        trivial_beyond_leading,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perturbed_maps::OrbitTable;

    #[test]
    fn linear_matrix_is_mode_transport() {
        let map = PerturbedMap::standard_example(0.0);
        let tm = assemble(&map, 4).unwrap();
        assert!(tm.grid.is_none());
        // column k' = 0 maps to row k = 0 with entry exactly 1
        assert_eq!(tm.entry((0, 0), (0, 0)), Complex64::new(1.0, 0.0));
        // (1,0) -> A^T (1,0) = (1,1)
        assert_eq!(tm.entry((1, 1), (1, 0)), Complex64::new(1.0, 0.0));
        assert_eq!(tm.entry((1, 0), (1, 0)), Complex64::new(0.0, 0.0));
        // spectrum: a single 1 plus nilpotent junk
        let ev = tm.eigenvalues().unwrap();
        assert!((ev[0] - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        assert!(ev[1].norm() < 1e-10);
    }

    #[test]
    fn entries_follow_bessel_line() {
        // for Psi = (sin 2 pi x_2, 0) the profile of column k' is
        // exp(i w sin 2 pi x_2) with w = 2 pi eps k'_1, whose coefficients
        // along the k_2 axis are Bessel J_m(w)
        let map = PerturbedMap::standard_example(0.01);
        let tm = assemble(&map, 5).unwrap();
        let w1 = [
            (0i64, 0.99901328305591497),
            (1, 0.031400425947512099),
            (2, 0.00049331789159703509),
            (3, 5.1664378238686881e-06),
        ];
        // k' = (1, 0): A^T k' = (1, 1); row k = (1, 1 + m2) holds J_{m2}(w)
        for &(m2, jm) in &w1 {
            let v = tm.entry((1, 1 + m2), (1, 0));
            assert!((v.re - jm).abs() < 1e-12, "m2 = {m2}: {} vs {jm}", v.re);
            assert!(v.im.abs() < 1e-12);
            // J_{-m}(w) = (-1)^m J_m(w)
            let sign = if m2 % 2 == 0 { 1.0 } else { -1.0 };
            let v = tm.entry((1, 1 - m2), (1, 0));
            assert!((v.re - sign * jm).abs() < 1e-12);
        }
        // k' = (5, 0): w = 2 pi eps 5, A^T k' = (5, 5); the m2 = -2 entry
        // is the only second-order one still inside the box
        let v = tm.entry((5, 5 - 2), (5, 0));
        assert!((v.re - 0.012235850136155843).abs() < 1e-12);
    }

    #[test]
    fn coefficient_decay_beyond_bandwidth() {
        let map = PerturbedMap::standard_example(0.01);
        let k_cut = 12;
        let tm = assemble(&map, k_cut).unwrap();
        let band = decay_bandwidth(&map, k_cut) as i64;
        let kc = k_cut as i64;
        let mut checked = 0usize;
        for k1p in -kc..=kc {
            for k2p in -kc..=kc {
                let t = (k1p + k2p, k1p + 2 * k2p); // A^T k'
                for k1 in -kc..=kc {
                    for k2 in -kc..=kc {
                        let d = (k1 - t.0).abs().max((k2 - t.1).abs());
                        if d > band {
                            let v = tm.entry((k1, k2), (k1p, k2p));
                            assert!(
                                v.norm() < 1e-10,
                                "entry at offset {d} has modulus {}",
                                v.norm()
                            );
                            checked += 1;
                        }
                    }
                }
            }
        }
        assert!(checked > 0);
    }

    #[test]
    fn truncated_traces_meet_orbit_sums() {
        let map = PerturbedMap::standard_example(0.01);
        let tm = assemble(&map, 8).unwrap();
        let traces = tm.truncated_traces(3);
        let table = OrbitTable::perturbed(&map, 3).unwrap();
        for p in 1..=3usize {
            let orbit_side = table.trace_sum(p).unwrap();
            let gap = (traces[p - 1] - Complex64::new(orbit_side, 0.0)).norm();
            assert!(gap < 1e-9, "p = {p}: trace gap {gap}");
        }
    }

    #[test]
    fn resonances_of_the_standard_map() {
        let map = PerturbedMap::standard_example(0.01);
        let res = extract_resonances(&map, 12, 0.005, DEFAULT_MATCH_TOL).unwrap();
        assert_eq!(res.eigenvalues.len(), 3, "{:?}", res.eigenvalues);
        assert!((res.eigenvalues[0] - Complex64::new(1.0, 0.0)).norm() < 1e-10);
        // near-degenerate real pair; each member is pinned only to the
        // square root of roundoff, the pair as a set much tighter
        for mu in &res.eigenvalues[1..] {
            assert!((mu.re - -0.0313659).abs() < 1e-5, "mu = {mu}");
            assert!(mu.im.abs() < 1e-5);
        }
        assert!(!res.trivial_beyond_leading);
        // junk power sums decay fast in p
        assert!(res.discarded_power_sums[0] < 0.1);
        assert!(res.discarded_power_sums[1] < 1e-3);
        assert!(res.discarded_power_sums[2] < 1e-5);
    }

    #[test]
    fn strict_modulus_floor_keeps_only_the_leading_eigenvalue() {
        let map = PerturbedMap::standard_example(0.01);
        let res = extract_resonances(&map, 8, DEFAULT_MU_MIN, DEFAULT_MATCH_TOL).unwrap();
        assert!(res.trivial_beyond_leading);
        assert_eq!(res.eigenvalues.len(), 1);
    }
}
