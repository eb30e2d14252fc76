//! Dense complex linear algebra over LAPACK/BLAS.
//!
//! Matrices are column-major `Vec<Complex64>`, which is exactly the layout
//! zgeev_/zgemm_ expect, so no transposition happens at the boundary.
//! The BLAS thread count is pinned to one: reproducibility of the suite
//! depends on reduction order, and threaded BLAS reassociates sums. All
//! parallelism in this crate lives above the BLAS layer.

use std::sync::Once;

use num_complex::Complex64;

use crate::error::{Error, Result};

extern "C" {
    fn openblas_set_num_threads(n: i32);

    fn zgeev_(
        jobvl: *const u8,
        jobvr: *const u8,
        n: *const i32,
        a: *mut Complex64,
        lda: *const i32,
        w: *mut Complex64,
        vl: *mut Complex64,
        ldvl: *const i32,
        vr: *mut Complex64,
        ldvr: *const i32,
        work: *mut Complex64,
        lwork: *const i32,
        rwork: *mut f64,
        info: *mut i32,
    );

    fn zgemm_(
        transa: *const u8,
        transb: *const u8,
        m: *const i32,
        n: *const i32,
        k: *const i32,
        alpha: *const Complex64,
        a: *const Complex64,
        lda: *const i32,
        b: *const Complex64,
        ldb: *const i32,
        beta: *const Complex64,
        c: *mut Complex64,
        ldc: *const i32,
    );
}

static BLAS_SERIAL: Once = Once::new();

pub fn force_serial_blas() {
    BLAS_SERIAL.call_once(|| unsafe {
        openblas_set_num_threads(1);
    });
}

/// Square complex matrix, column-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexMatrix {
    n: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn zeros(n: usize) -> Self {
        ComplexMatrix {
            n,
            data: vec![Complex64::new(0.0, 0.0); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.set(i, i, Complex64::new(1.0, 0.0));
        }
        m
    }

    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[col * self.n + row]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: Complex64) {
        self.data[col * self.n + row] = v;
    }

    pub fn column(&self, col: usize) -> &[Complex64] {
        &self.data[col * self.n..(col + 1) * self.n]
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `self * rhs` through zgemm.
    pub fn mul(&self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.n, rhs.n);
        force_serial_blas();
        let n = self.n as i32;
        let mut out = ComplexMatrix::zeros(self.n);
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        unsafe {
            zgemm_(
                b"N".as_ptr(),
                b"N".as_ptr(),
                &n,
                &n,
                &n,
                &one,
                self.data.as_ptr(),
                &n,
                rhs.data.as_ptr(),
                &n,
                &zero,
                out.data.as_mut_ptr(),
                &n,
            );
        }
        out
    }

    /// `tr(self^p)` for p = 1..=pmax by repeated multiplication. The final
    /// trace of each power costs O(n^2) as a dot of the running power's rows
    /// against self, but plain zgemm keeps the code obvious; pmax is tiny.
    pub fn power_traces(&self, pmax: usize) -> Vec<Complex64> {
        let mut traces = Vec::with_capacity(pmax);
        let mut acc = self.clone();
        traces.push(acc.trace());
        for _ in 2..=pmax {
            acc = acc.mul(self);
            traces.push(acc.trace());
        }
        traces
    }
}

/// Canonical ordering: descending modulus, then ascending argument. Every
/// eigenvalue list in this crate is sorted this way before anything else
/// looks at it, so downstream matching never depends on LAPACK's order.
pub fn sort_eigenvalues(vals: &mut [Complex64]) {
    vals.sort_by(|a, b| {
        b.norm()
            .partial_cmp(&a.norm())
            .unwrap()
            .then(a.arg().partial_cmp(&b.arg()).unwrap())
    });
}

fn zgeev(m: &ComplexMatrix, want_vectors: bool) -> Result<(Vec<Complex64>, Option<ComplexMatrix>)> {
    force_serial_blas();
    let n = m.n;
    let ni = n as i32;
    let mut a = m.data.clone();
    let mut w = vec![Complex64::new(0.0, 0.0); n];
    let mut vr = if want_vectors {
        vec![Complex64::new(0.0, 0.0); n * n]
    } else {
        vec![Complex64::new(0.0, 0.0); 1]
    };
    let ldvr = if want_vectors { ni } else { 1 };
    let jobvr: &[u8] = if want_vectors { b"V" } else { b"N" };
    let mut rwork = vec![0.0f64; 2 * n];
    let mut info: i32 = 0;
    // workspace query
    let mut wkopt = Complex64::new(0.0, 0.0);
    let lwork_query: i32 = -1;
    unsafe {
        zgeev_(
            b"N".as_ptr(),
            jobvr.as_ptr(),
            &ni,
            a.as_mut_ptr(),
            &ni,
            w.as_mut_ptr(),
            std::ptr::null_mut(),
            &1,
            vr.as_mut_ptr(),
            &ldvr,
            &mut wkopt,
            &lwork_query,
            rwork.as_mut_ptr(),
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Eigensolver(format!(
            "zgeev workspace query failed, info = {info}"
        )));
    }
    let lwork = wkopt.re as i32;
    let mut work = vec![Complex64::new(0.0, 0.0); lwork.max(1) as usize];
    unsafe {
        zgeev_(
            b"N".as_ptr(),
            jobvr.as_ptr(),
            &ni,
            a.as_mut_ptr(),
            &ni,
            w.as_mut_ptr(),
            std::ptr::null_mut(),
            &1,
            vr.as_mut_ptr(),
            &ldvr,
            work.as_mut_ptr(),
            &lwork,
            rwork.as_mut_ptr(),
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Eigensolver(format!("zgeev failed, info = {info}")));
    }
    let vectors = if want_vectors {
        Some(ComplexMatrix { n, data: vr })
    } else {
        None
    };
    Ok((w, vectors))
}

/// Eigenvalues only, canonically sorted.
pub fn eigenvalues(m: &ComplexMatrix) -> Result<Vec<Complex64>> {
    let (mut w, _) = zgeev(m, false)?;
    sort_eigenvalues(&mut w);
    Ok(w)
}

/// Eigenvalues with right eigenvectors, both in canonical eigenvalue order.
/// Each vector is phase-fixed so its largest-modulus component is real
/// positive; LAPACK's phase is otherwise arbitrary.
pub fn eigen_decomposition(m: &ComplexMatrix) -> Result<(Vec<Complex64>, ComplexMatrix)> {
    let (w, vr) = zgeev(m, true)?;
    let vr = vr.unwrap();
    let n = m.n;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        w[j].norm()
            .partial_cmp(&w[i].norm())
            .unwrap()
            .then(w[i].arg().partial_cmp(&w[j].arg()).unwrap())
    });
    let mut vals = Vec::with_capacity(n);
    let mut vecs = ComplexMatrix::zeros(n);
    for (dst, &src) in order.iter().enumerate() {
        vals.push(w[src]);
        let col = vr.column(src);
        let mut top = 0;
        for (r, z) in col.iter().enumerate() {
            if z.norm() > col[top].norm() {
                top = r;
            }
        }
        let phase = col[top] / col[top].norm();
        for r in 0..n {
            vecs.set(r, dst, col[r] / phase);
        }
    }
    Ok((vals, vecs))
}
