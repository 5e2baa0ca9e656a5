//! Small dense symmetric kernels: Cholesky, triangular solves, and a cyclic
//! Jacobi eigensolver generic over the scalar type.

use crate::error::{Error, Result};

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat<S = f64> {
    pub n: usize,
    pub a: Vec<S>,
}

impl<S: Clone> Mat<S> {
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> S) -> Self {
        let mut a = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                a.push(f(i, j));
            }
        }
        Self { n, a }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> &S {
        &self.a[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: S) {
        self.a[i * self.n + j] = v;
    }
}

impl Mat<f64> {
    pub fn zeros(n: usize) -> Self {
        Self { n, a: vec![0.0; n * n] }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.n + j]
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.a[i * self.n..(i + 1) * self.n].iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut m = 0.0f64;
        for i in 0..self.n {
            for j in 0..i {
                m = m.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        m
    }
}

/// Lower Cholesky factor L with A = L Lᵀ.
pub fn cholesky(m: &Mat) -> Result<Mat> {
    let n = m.n;
    let mut l = Mat::zeros(n);
    for j in 0..n {
        let mut d = m.get(j, j);
        for k in 0..j {
            d -= l.get(j, k) * l.get(j, k);
        }
        if !(d > 0.0 && d.is_finite()) {
            return Err(Error::Singular(format!(
                "matrix not numerically positive definite at pivot {j}"
            )));
        }
        let d = d.sqrt();
        l.set(j, j, d);
        for i in j + 1..n {
            let mut s = m.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, s / d);
        }
    }
    Ok(l)
}

/// Solve L x = b for lower-triangular L.
pub fn solve_lower(l: &Mat, b: &[f64]) -> Vec<f64> {
    let n = l.n;
    let mut x = b.to_vec();
    for i in 0..n {
        let mut s = x[i];
        for k in 0..i {
            s -= l.get(i, k) * x[k];
        }
        x[i] = s / l.get(i, i);
    }
    x
}

/// Solve Lᵀ x = b for lower-triangular L.
pub fn solve_lower_transpose(l: &Mat, b: &[f64]) -> Vec<f64> {
    let n = l.n;
    let mut x = b.to_vec();
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in i + 1..n {
            s -= l.get(k, i) * x[k];
        }
        x[i] = s / l.get(i, i);
    }
    x
}

/// Solve A x = b given A's Cholesky factor.
pub fn cholesky_solve(l: &Mat, b: &[f64]) -> Vec<f64> {
    solve_lower_transpose(l, &solve_lower(l, b))
}

/// Solve a general square system by Gaussian elimination with partial pivoting.
pub fn lu_solve(m: &Mat, b: &[f64]) -> Result<Vec<f64>> {
    let n = m.n;
    let mut a = m.a.clone();
    let mut x = b.to_vec();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))
            .unwrap_or(col);
        if a[piv * n + col] == 0.0 {
            return Err(Error::Singular(format!("zero pivot in column {col}")));
        }
        if piv != col {
            for k in 0..n {
                a.swap(col * n + k, piv * n + k);
            }
            x.swap(col, piv);
        }
        for i in col + 1..n {
            let f = a[i * n + col] / a[col * n + col];
            if f != 0.0 {
                for k in col..n {
                    a[i * n + k] -= f * a[col * n + k];
                }
                x[i] -= f * x[col];
            }
        }
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in i + 1..n {
            s -= a[i * n + k] * x[k];
        }
        x[i] = s / a[i * n + i];
    }
    Ok(x)
}

/// Arithmetic needed by the Jacobi sweep.
pub trait Scalar: Clone {
    fn zero_like(&self) -> Self;
    fn one_like(&self) -> Self;
    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn div(&self, o: &Self) -> Self;
    fn sqrt(&self) -> Self;
    fn abs(&self) -> Self;
    fn neg(&self) -> Self;
    fn lt(&self, o: &Self) -> bool;
    fn is_zero(&self) -> bool;
    /// Relative unit round-off at this value's precision.
    fn epsilon(&self) -> Self;
    fn to_f64(&self) -> f64;
}

impl Scalar for f64 {
    fn zero_like(&self) -> Self {
        0.0
    }
    fn one_like(&self) -> Self {
        1.0
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div(&self, o: &Self) -> Self {
        self / o
    }
    fn sqrt(&self) -> Self {
        f64::sqrt(*self)
    }
    fn abs(&self) -> Self {
        f64::abs(*self)
    }
    fn neg(&self) -> Self {
        -self
    }
    fn lt(&self, o: &Self) -> bool {
        self < o
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
    fn epsilon(&self) -> Self {
        f64::EPSILON
    }
    fn to_f64(&self) -> f64 {
        *self
    }
}

/// Eigen-decomposition of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymEigen<S> {
    /// Eigenvalues in ascending order.
    pub values: Vec<S>,
    /// Column `k` of the row-major matrix is the eigenvector of `values[k]`.
    pub vectors: Mat<S>,
    pub sweeps: usize,
}

/// Cyclic Jacobi rotations until the off-diagonal mass is below round-off.
pub fn jacobi_eigen<S: Scalar>(m: &Mat<S>) -> Result<SymEigen<S>> {
    let n = m.n;
    if n == 0 {
        return Err(Error::InvalidArgument("empty matrix".into()));
    }
    let proto = m.at(0, 0).clone();
    let zero = proto.zero_like();
    let one = proto.one_like();
    let mut a = m.clone();
    let mut v = Mat::from_fn(n, |i, j| if i == j { one.clone() } else { zero.clone() });
    let eps = proto.epsilon();
    let frob = a.a.iter().fold(zero.clone(), |acc, x| acc.add(&x.mul(x))).sqrt();
    let threshold = eps.mul(&frob);

    let max_sweeps = 100;
    let mut sweeps = 0;
    loop {
        let mut off = zero.clone();
        for i in 0..n {
            for j in 0..i {
                let x = a.at(i, j);
                off = off.add(&x.mul(x));
            }
        }
        if !threshold.lt(&off.sqrt()) || n == 1 {
            break;
        }
        if sweeps == max_sweeps {
            return Err(Error::NonConvergence {
                what: "jacobi sweeps",
                index: sweeps,
            });
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a.at(p, q).clone();
                if apq.is_zero() {
                    continue;
                }
                let app = a.at(p, p).clone();
                let aqq = a.at(q, q).clone();
                let two = one.add(&one);
                let theta = aqq.sub(&app).div(&two.mul(&apq));
                let t = {
                    let denom = theta.abs().add(&theta.mul(&theta).add(&one).sqrt());
                    let t = one.div(&denom);
                    if theta.lt(&zero) {
                        t.neg()
                    } else {
                        t
                    }
                };
                let c = one.div(&t.mul(&t).add(&one).sqrt());
                let s = t.mul(&c);
                for k in 0..n {
                    let akp = a.at(k, p).clone();
                    let akq = a.at(k, q).clone();
                    a.set(k, p, c.mul(&akp).sub(&s.mul(&akq)));
                    a.set(k, q, s.mul(&akp).add(&c.mul(&akq)));
                }
                for k in 0..n {
                    let apk = a.at(p, k).clone();
                    let aqk = a.at(q, k).clone();
                    a.set(p, k, c.mul(&apk).sub(&s.mul(&aqk)));
                    a.set(q, k, s.mul(&apk).add(&c.mul(&aqk)));
                }
                for k in 0..n {
                    let vkp = v.at(k, p).clone();
                    let vkq = v.at(k, q).clone();
                    v.set(k, p, c.mul(&vkp).sub(&s.mul(&vkq)));
                    v.set(k, q, s.mul(&vkp).add(&c.mul(&vkq)));
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        let (x, y) = (a.at(i, i), a.at(j, j));
        if x.lt(y) {
            std::cmp::Ordering::Less
        } else if y.lt(x) {
            std::cmp::Ordering::Greater
        } else {
            i.cmp(&j)
        }
    });
    let values = order.iter().map(|&i| a.at(i, i).clone()).collect();
    let vectors = Mat::from_fn(n, |r, c| v.at(r, order[c]).clone());
    Ok(SymEigen {
        values,
        vectors,
        sweeps,
    })
}

impl<S: Clone> SymEigen<S> {
    pub fn vector(&self, k: usize) -> Vec<S> {
        (0..self.vectors.n).map(|r| self.vectors.at(r, k).clone()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hilbert(n: usize) -> Mat {
        Mat::from_fn(n, |i, j| 1.0 / (i + j + 1) as f64)
    }

    #[test]
    fn jacobi_on_known_matrix() {
        // eigenvalues of [[2,1],[1,2]] are 1 and 3
        let m = Mat::from_fn(2, |i, j| if i == j { 2.0 } else { 1.0 });
        let e = jacobi_eigen(&m).unwrap();
        assert!((e.values[0] - 1.0).abs() < 1e-15);
        assert!((e.values[1] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn jacobi_reconstructs_hilbert() {
        let m = hilbert(6);
        let e = jacobi_eigen(&m).unwrap();
        for k in 0..6 {
            let v = e.vector(k);
            let mv = m.matvec(&v);
            for (a, b) in mv.iter().zip(&v) {
                assert!((a - e.values[k] * b).abs() < 1e-14);
            }
        }
        // smallest eigenvalue of the 6x6 Hilbert matrix
        assert!((e.values[0] - 1.082_799_484_519_278_6e-7).abs() < 1e-15);
    }

    #[test]
    fn pivoted_solve() {
        let m = Mat { n: 3, a: vec![0.0, 2.0, 1.0, 1.0, 1.0, 0.0, 3.0, 0.0, 1.0] };
        let x = vec![1.0, -1.0, 2.0];
        let b = m.matvec(&x);
        let got = lu_solve(&m, &b).unwrap();
        for (a, c) in got.iter().zip(&x) {
            assert!((a - c).abs() < 1e-14);
        }
        assert!(lu_solve(&Mat::zeros(2), &[1.0, 1.0]).is_err());
    }

    #[test]
    fn cholesky_roundtrip() {
        let m = hilbert(5);
        let l = cholesky(&m).unwrap();
        let b = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let x = cholesky_solve(&l, &b);
        let back = m.matvec(&x);
        for (a, c) in back.iter().zip(&b) {
            assert!((a - c).abs() < 1e-8);
        }
        let not_pd = Mat::from_fn(2, |i, j| if i == j { 1.0 } else { 2.0 });
        assert!(cholesky(&not_pd).is_err());
    }
}
