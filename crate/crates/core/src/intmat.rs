//! Exact integer matrices for the lattice-map arithmetic.
//!
//! Everything here is `BigInt`: determinants of `A^p - I` outgrow `i64`
//! around p = 45 for the standard two-dimensional example, and the fixed
//! point enumeration needs exact unimodular transforms.

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};

/// Square integer matrix, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IntMat {
    n: usize,
    a: Vec<BigInt>,
}

impl IntMat {
    pub fn zero(n: usize) -> Self {
        IntMat {
            n,
            a: vec![BigInt::zero(); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zero(n);
        for i in 0..n {
            m.a[i * n + i] = BigInt::one();
        }
        m
    }

    pub fn from_rows(rows: &[Vec<i64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidInput(format!(
                "expected a square matrix, got {} rows of lengths {:?}",
                n,
                rows.iter().map(|r| r.len()).collect::<Vec<_>>()
            )));
        }
        let a = rows
            .iter()
            .flat_map(|r| r.iter().map(|&x| BigInt::from(x)))
            .collect();
        Ok(IntMat { n, a })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> &BigInt {
        &self.a[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: BigInt) {
        self.a[i * self.n + j] = v;
    }

    pub fn mul(&self, o: &IntMat) -> IntMat {
        assert_eq!(self.n, o.n);
        let n = self.n;
        let mut out = IntMat::zero(n);
        for i in 0..n {
            for k in 0..n {
                let lik = &self.a[i * n + k];
                if lik.is_zero() {
                    continue;
                }
                for j in 0..n {
                    let t = lik * &o.a[k * n + j];
                    out.a[i * n + j] += t;
                }
            }
        }
        out
    }

    pub fn pow(&self, p: usize) -> IntMat {
        let mut out = IntMat::identity(self.n);
        for _ in 0..p {
            out = out.mul(self);
        }
        out
    }

    pub fn sub_identity(&self) -> IntMat {
        let mut out = self.clone();
        for i in 0..self.n {
            out.a[i * self.n + i] -= 1;
        }
        out
    }

    /// Laplace expansion; fine for the n <= 4 sizes used here.
    pub fn det(&self) -> BigInt {
        let n = self.n;
        if n == 1 {
            return self.a[0].clone();
        }
        if n == 2 {
            return &self.a[0] * &self.a[3] - &self.a[1] * &self.a[2];
        }
        let mut acc = BigInt::zero();
        for j in 0..n {
            if self.a[j].is_zero() {
                continue;
            }
            let mut minor = IntMat::zero(n - 1);
            for i in 1..n {
                let mut cj = 0;
                for jj in 0..n {
                    if jj == j {
                        continue;
                    }
                    minor.a[(i - 1) * (n - 1) + cj] = self.a[i * n + jj].clone();
                    cj += 1;
                }
            }
            let term = &self.a[j] * minor.det();
            if j % 2 == 0 {
                acc += term;
            } else {
                acc -= term;
            }
        }
        acc
    }

    pub fn to_f64(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_fn(self.n, self.n, |i, j| bigint_to_f64(self.get(i, j)))
    }

    fn swap_rows(&mut self, i: usize, j: usize) {
        if i == j {
            return;
        }
        for c in 0..self.n {
            self.a.swap(i * self.n + c, j * self.n + c);
        }
    }

    fn swap_cols(&mut self, i: usize, j: usize) {
        if i == j {
            return;
        }
        for r in 0..self.n {
            self.a.swap(r * self.n + i, r * self.n + j);
        }
    }

    /// row_dst -= q * row_src
    fn sub_row(&mut self, dst: usize, src: usize, q: &BigInt) {
        if q.is_zero() {
            return;
        }
        for c in 0..self.n {
            let t = q * &self.a[src * self.n + c];
            self.a[dst * self.n + c] -= t;
        }
    }

    /// col_dst -= q * col_src
    fn sub_col(&mut self, dst: usize, src: usize, q: &BigInt) {
        if q.is_zero() {
            return;
        }
        for r in 0..self.n {
            let t = q * &self.a[r * self.n + src];
            self.a[r * self.n + dst] -= t;
        }
    }

    fn neg_row(&mut self, i: usize) {
        for c in 0..self.n {
            let v = -self.a[i * self.n + c].clone();
            self.a[i * self.n + c] = v;
        }
    }
}

pub fn bigint_to_f64(x: &BigInt) -> f64 {
    use num_traits::ToPrimitive;
    x.to_f64().unwrap_or(f64::NAN)
}

/// Smith decomposition `row_ops * m * col_ops = diag(d)` with unimodular
/// transforms and the divisibility chain d[0] | d[1] | ... All d[i] >= 0.
pub struct SmithForm {
    pub row_ops: IntMat,
    pub col_ops: IntMat,
    pub diag: Vec<BigInt>,
}

pub fn smith_normal_form(m: &IntMat) -> SmithForm {
    let n = m.size();
    let mut b = m.clone();
    let mut u = IntMat::identity(n);
    let mut v = IntMat::identity(n);

    for t in 0..n {
        'outer: loop {
            // smallest nonzero entry of the trailing block into the pivot slot
            let mut pivot: Option<(usize, usize)> = None;
            for i in t..n {
                for j in t..n {
                    if b.get(i, j).is_zero() {
                        continue;
                    }
                    let better = match pivot {
                        None => true,
                        Some((pi, pj)) => b.get(i, j).abs() < b.get(pi, pj).abs(),
                    };
                    if better {
                        pivot = Some((i, j));
                    }
                }
            }
            let Some((pi, pj)) = pivot else {
                break; // trailing block all zero
            };
            b.swap_rows(t, pi);
            u.swap_rows(t, pi);
            b.swap_cols(t, pj);
            v.swap_cols(t, pj);

            // clear column t below the pivot
            let mut dirty = false;
            for i in t + 1..n {
                if b.get(i, t).is_zero() {
                    continue;
                }
                let q = div_round(b.get(i, t), b.get(t, t));
                b.sub_row(i, t, &q);
                u.sub_row(i, t, &q);
                if !b.get(i, t).is_zero() {
                    dirty = true;
                }
            }
            // clear row t right of the pivot
            for j in t + 1..n {
                if b.get(t, j).is_zero() {
                    continue;
                }
                let q = div_round(b.get(t, j), b.get(t, t));
                b.sub_col(j, t, &q);
                v.sub_col(j, t, &q);
                if !b.get(t, j).is_zero() {
                    dirty = true;
                }
            }
            if dirty {
                continue; // a remainder became the new smaller pivot candidate
            }

            // pivot must divide the whole trailing block
            for i in t + 1..n {
                for j in t + 1..n {
                    if !(b.get(i, j) % b.get(t, t)).is_zero() {
                        // fold row i into row t and restart the reduction
                        let one = BigInt::from(-1);
                        b.sub_row(t, i, &one);
                        u.sub_row(t, i, &one);
                        continue 'outer;
                    }
                }
            }
            break;
        }
        if b.get(t, t).is_negative() {
            b.neg_row(t);
            u.neg_row(t);
        }
    }

    let diag = (0..n).map(|i| b.get(i, i).clone()).collect();
    SmithForm {
        row_ops: u,
        col_ops: v,
        diag,
    }
}

/// Round-to-nearest integer division, which keeps remainders small and the
/// reduction fast.
fn div_round(a: &BigInt, b: &BigInt) -> BigInt {
    let two = BigInt::from(2);
    let (mut q, r) = num_integer::Integer::div_rem(a, b);
    if (&r * &two).abs() > b.abs() {
        if (r.is_negative()) == (b.is_negative()) {
            q += 1;
        } else {
            q -= 1;
        }
    }
    q
}
