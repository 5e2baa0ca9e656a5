//! Symmetric tridiagonal matrices: Sturm-count bisection, inverse iteration,
//! and a factored SPD solver used by the time stepper.

use crate::error::{Error, Result};

/// Symmetric tridiagonal matrix with diagonal `d` (len n) and
/// off-diagonal `e` (len n-1).
#[derive(Debug, Clone, PartialEq)]
pub struct SymTridiag {
    pub d: Vec<f64>,
    pub e: Vec<f64>,
}

impl SymTridiag {
    pub fn new(d: Vec<f64>, e: Vec<f64>) -> Result<Self> {
        if d.is_empty() || e.len() + 1 != d.len() {
            return Err(Error::DimensionMismatch {
                what: "tridiagonal off-diagonal",
                expected: d.len().saturating_sub(1),
                got: e.len(),
            });
        }
        Ok(Self { d, e })
    }

    pub fn n(&self) -> usize {
        self.d.len()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n();
        let mut y: Vec<f64> = self.d.iter().zip(x).map(|(d, x)| d * x).collect();
        for i in 0..n - 1 {
            y[i] += self.e[i] * x[i + 1];
            y[i + 1] += self.e[i] * x[i];
        }
        y
    }

    /// Gershgorin enclosure of the spectrum.
    pub fn gershgorin(&self) -> (f64, f64) {
        let n = self.n();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let mut rad = 0.0;
            if i > 0 {
                rad += self.e[i - 1].abs();
            }
            if i + 1 < n {
                rad += self.e[i].abs();
            }
            lo = lo.min(self.d[i] - rad);
            hi = hi.max(self.d[i] + rad);
        }
        (lo, hi)
    }

    /// Number of eigenvalues strictly below `x` (Sturm sequence count).
    pub fn count_below(&self, x: f64) -> usize {
        let scale = self.gershgorin_scale();
        let tiny = f64::MIN_POSITIVE.sqrt() * scale.max(1.0);
        let mut count = 0;
        let mut q = self.d[0] - x;
        for i in 0..self.n() {
            if i > 0 {
                q = self.d[i] - x - self.e[i - 1] * self.e[i - 1] / q;
            }
            if q == 0.0 {
                q = -tiny;
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    fn gershgorin_scale(&self) -> f64 {
        let (lo, hi) = self.gershgorin();
        lo.abs().max(hi.abs())
    }

    /// The `k`-th smallest eigenvalue (0-based) by bisection.
    pub fn eigenvalue(&self, k: usize) -> Result<f64> {
        if k >= self.n() {
            return Err(Error::TooManyEigenpairs {
                requested: k + 1,
                available: self.n(),
            });
        }
        let (mut lo, mut hi) = self.gershgorin();
        let pad = 1e-12 * lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE);
        lo -= pad;
        hi += pad;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                return Ok(mid);
            }
            if self.count_below(mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo <= 4.0 * f64::EPSILON * lo.abs().max(hi.abs()) {
                return Ok(0.5 * (lo + hi));
            }
        }
        Err(Error::NonConvergence {
            what: "bisection",
            index: k,
        })
    }

    /// First `k` eigenpairs; vectors are Euclidean-orthonormal with the first
    /// significant component positive.
    pub fn lowest_eigenpairs(&self, k: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        if k > self.n() {
            return Err(Error::TooManyEigenpairs {
                requested: k,
                available: self.n(),
            });
        }
        let values = (0..k).map(|i| self.eigenvalue(i)).collect::<Result<Vec<_>>>()?;
        let scale = self.gershgorin_scale().max(f64::MIN_POSITIVE);
        let cluster_tol = 1e-8 * scale;
        let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(k);
        let mut cluster_start = 0;
        for (i, &lam) in values.iter().enumerate() {
            if i > 0 && (lam - values[i - 1]).abs() > cluster_tol {
                cluster_start = i;
            }
            let v = self.inverse_iteration(lam, &vectors[cluster_start..i], i)?;
            vectors.push(v);
        }
        Ok((values, vectors))
    }

    fn inverse_iteration(&self, lam: f64, previous: &[Vec<f64>], index: usize) -> Result<Vec<f64>> {
        let n = self.n();
        let scale = self.gershgorin_scale().max(f64::MIN_POSITIVE);
        let lu = PivotedTridiagLu::factor(self, lam, f64::EPSILON * scale)?;
        // deterministic, generic start vector
        let mut x: Vec<f64> = (0..n)
            .map(|i| 1.0 + 0.5 * ((i as f64 + 1.0) * 0.754_877_666).sin())
            .collect();
        normalize(&mut x);
        for _ in 0..8 {
            let mut y = lu.solve(&x);
            for p in previous {
                let c = dot(&y, p);
                for (a, b) in y.iter_mut().zip(p) {
                    *a -= c * b;
                }
            }
            let nrm = normalize(&mut y);
            if !nrm.is_finite() || nrm == 0.0 {
                return Err(Error::NonConvergence {
                    what: "inverse iteration",
                    index,
                });
            }
            let change = x
                .iter()
                .zip(&y)
                .map(|(a, b)| (a - b).abs().min((a + b).abs()))
                .fold(0.0, f64::max);
            x = y;
            if change < 1e-14 {
                break;
            }
        }
        let amax = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if let Some(first) = x.iter().find(|v| v.abs() > 1e-8 * amax) {
            if *first < 0.0 {
                x.iter_mut().for_each(|v| *v = -*v);
            }
        }
        Ok(x)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(x: &mut [f64]) -> f64 {
    let n = dot(x, x).sqrt();
    if n > 0.0 {
        x.iter_mut().for_each(|v| *v /= n);
    }
    n
}

/// LU with partial pivoting of `T - shift I` (fill-in on the second
/// superdiagonal).
struct PivotedTridiagLu {
    l: Vec<f64>,
    u0: Vec<f64>,
    u1: Vec<f64>,
    u2: Vec<f64>,
    swap: Vec<bool>,
}

impl PivotedTridiagLu {
    fn factor(t: &SymTridiag, shift: f64, tiny: f64) -> Result<Self> {
        let n = t.n();
        let mut u0: Vec<f64> = t.d.iter().map(|d| d - shift).collect();
        let mut u1: Vec<f64> = t.e.clone();
        let mut u2 = vec![0.0; n.saturating_sub(2)];
        let mut l = vec![0.0; n.saturating_sub(1)];
        let mut swap = vec![false; n.saturating_sub(1)];
        // the subdiagonal equals the superdiagonal of the symmetric input
        let sub = t.e.clone();
        for i in 0..n.saturating_sub(1) {
            if u0[i].abs() >= sub[i].abs() {
                if u0[i] == 0.0 {
                    u0[i] = tiny;
                }
                let m = sub[i] / u0[i];
                l[i] = m;
                u0[i + 1] -= m * u1[i];
            } else {
                // swap rows i and i+1
                swap[i] = true;
                let m = u0[i] / sub[i];
                l[i] = m;
                let a1 = u1[i];
                u0[i] = sub[i];
                u1[i] = u0[i + 1];
                u0[i + 1] = a1 - m * u1[i];
                if i + 1 < n - 1 {
                    u2[i] = u1[i + 1];
                    u1[i + 1] = -m * u2[i];
                }
            }
        }
        if u0[n - 1] == 0.0 {
            u0[n - 1] = tiny;
        }
        if u0.iter().any(|v| !v.is_finite()) {
            return Err(Error::Singular("tridiagonal LU".into()));
        }
        Ok(Self { l, u0, u1, u2, swap })
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.u0.len();
        let mut y = b.to_vec();
        for i in 0..n.saturating_sub(1) {
            if self.swap[i] {
                y.swap(i, i + 1);
            }
            y[i + 1] -= self.l[i] * y[i];
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = y[i];
            if i + 1 < n {
                s -= self.u1[i] * x[i + 1];
            }
            if i + 2 < n {
                s -= self.u2[i] * x[i + 2];
            }
            x[i] = s / self.u0[i];
        }
        x
    }
}

/// Factored symmetric positive definite tridiagonal system (no pivoting).
#[derive(Debug, Clone)]
pub struct SpdTridiagFactor {
    /// Pivots of the LDLᵀ factorization.
    piv: Vec<f64>,
    /// Multipliers l_i = e_i / piv_i.
    mult: Vec<f64>,
}

impl SpdTridiagFactor {
    pub fn factor(d: &[f64], e: &[f64]) -> Result<Self> {
        let n = d.len();
        if e.len() + 1 != n {
            return Err(Error::DimensionMismatch {
                what: "tridiagonal off-diagonal",
                expected: n.saturating_sub(1),
                got: e.len(),
            });
        }
        let mut piv = Vec::with_capacity(n);
        let mut mult = Vec::with_capacity(n.saturating_sub(1));
        piv.push(d[0]);
        for i in 1..n {
            let m = e[i - 1] / piv[i - 1];
            mult.push(m);
            piv.push(d[i] - m * e[i - 1]);
        }
        if piv.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(Error::Singular("tridiagonal system is not positive definite".into()));
        }
        Ok(Self { piv, mult })
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.piv.len();
        for i in 1..n {
            x[i] -= self.mult[i - 1] * x[i - 1];
        }
        x[n - 1] /= self.piv[n - 1];
        for i in (0..n - 1).rev() {
            x[i] = x[i] / self.piv[i] - self.mult[i] * x[i + 1];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn laplacian(n: usize) -> SymTridiag {
        SymTridiag::new(vec![2.0; n], vec![-1.0; n - 1]).unwrap()
    }

    #[test]
    fn laplacian_eigenvalues_closed_form() {
        let n = 50;
        let t = laplacian(n);
        let (vals, vecs) = t.lowest_eigenpairs(n).unwrap();
        for (k, v) in vals.iter().enumerate() {
            let exact = 2.0 - 2.0 * ((k + 1) as f64 * PI / (n + 1) as f64).cos();
            assert!((v - exact).abs() < 1e-13, "{k}: {v} vs {exact}");
        }
        for i in 0..n {
            for j in 0..n {
                let d = dot(&vecs[i], &vecs[j]);
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((d - want).abs() < 1e-10);
            }
            let r = t.matvec(&vecs[i]);
            let res: f64 = r
                .iter()
                .zip(&vecs[i])
                .map(|(a, b)| (a - vals[i] * b).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(res < 1e-12);
        }
    }

    #[test]
    fn degenerate_cluster_gets_orthogonal_vectors() {
        // direct sum of two identical blocks: every eigenvalue is double
        let mut e = vec![-1.0; 9];
        e[4] = 0.0;
        let t = SymTridiag::new(vec![2.0; 10], e).unwrap();
        let (vals, vecs) = t.lowest_eigenpairs(10).unwrap();
        assert!((vals[0] - vals[1]).abs() < 1e-14);
        for i in 0..10 {
            for j in 0..i {
                assert!(dot(&vecs[i], &vecs[j]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn spd_solver_matches_matvec() {
        let d = vec![4.0, 5.0, 3.0, 6.0];
        let e = vec![-1.0, 2.0, 0.5];
        let f = SpdTridiagFactor::factor(&d, &e).unwrap();
        let t = SymTridiag::new(d, e).unwrap();
        let x = vec![1.0, -2.0, 0.5, 3.0];
        let mut b = t.matvec(&x);
        f.solve_in_place(&mut b);
        for (a, c) in b.iter().zip(&x) {
            assert!((a - c).abs() < 1e-14);
        }
    }

    #[test]
    fn too_many_requested() {
        assert!(laplacian(4).lowest_eigenpairs(5).is_err());
    }
}
