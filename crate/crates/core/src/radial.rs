//! The degenerate radial operator −(r^α u′)′ on (0,1) with Dirichlet ends:
//! finite-volume assembly, eigenpairs, and the weighted Hardy quotient.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::SymTridiag;
use crate::model::{mass_dot, RadialGrid};

/// Flux-form stiffness S (symmetric tridiagonal) together with the lumped
/// mass M; the operator itself is M⁻¹S.
#[derive(Debug, Clone)]
pub struct RadialOperator {
    pub alpha: f64,
    /// Face conductances, one per cell.
    pub conductance: Vec<f64>,
    pub stiff_diag: Vec<f64>,
    /// Strictly negative off-diagonal of S.
    pub stiff_off: Vec<f64>,
    pub mass: Vec<f64>,
}

/// Cell conductance: the exact harmonic average of r^α over [r_i, r_{i+1}],
/// so constant-flux profiles are reproduced exactly.
fn cell_conductance(alpha: f64, r0: f64, r1: f64) -> f64 {
    let e = 1.0 - alpha;
    e / (r1.powf(e) - r0.powf(e))
}

pub fn assemble_radial_operator(alpha: f64, grid: &RadialGrid) -> Result<RadialOperator> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::AlphaOutOfRange(alpha));
    }
    let conductance: Vec<f64> = grid
        .points
        .windows(2)
        .map(|w| cell_conductance(alpha, w[0], w[1]))
        .collect();
    let n = grid.n_interior();
    let stiff_diag = (0..n).map(|j| conductance[j] + conductance[j + 1]).collect();
    let stiff_off = (0..n.saturating_sub(1)).map(|j| -conductance[j + 1]).collect();
    Ok(RadialOperator {
        alpha,
        conductance,
        stiff_diag,
        stiff_off,
        mass: grid.mass.clone(),
    })
}

impl RadialOperator {
    pub fn n(&self) -> usize {
        self.mass.len()
    }

    /// The symmetric similarity transform M^{-1/2} S M^{-1/2}.
    pub fn normalized(&self) -> SymTridiag {
        let d = self
            .stiff_diag
            .iter()
            .zip(&self.mass)
            .map(|(s, m)| s / m)
            .collect();
        let e = self
            .stiff_off
            .iter()
            .enumerate()
            .map(|(j, s)| s / (self.mass[j] * self.mass[j + 1]).sqrt())
            .collect();
        SymTridiag { d, e }
    }

    /// S u.
    pub fn stiffness_apply(&self, u: &[f64]) -> Vec<f64> {
        let n = self.n();
        let mut y: Vec<f64> = self.stiff_diag.iter().zip(u).map(|(d, x)| d * x).collect();
        for j in 0..n.saturating_sub(1) {
            y[j] += self.stiff_off[j] * u[j + 1];
            y[j + 1] += self.stiff_off[j] * u[j];
        }
        y
    }

    /// M⁻¹ S u, the discrete action of −(r^α u′)′.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let mut y = self.stiffness_apply(u);
        y.iter_mut().zip(&self.mass).for_each(|(v, m)| *v /= m);
        y
    }

    /// ⟨Su,u⟩ / ⟨Mu,u⟩.
    pub fn rayleigh_quotient(&self, u: &[f64]) -> Result<f64> {
        let den = mass_dot(&self.mass, u, u);
        if den <= 0.0 {
            return Err(Error::ZeroDenominator("Rayleigh quotient of zero vector".into()));
        }
        let su = self.stiffness_apply(u);
        Ok(su.iter().zip(u).map(|(a, b)| a * b).sum::<f64>() / den)
    }
}

/// Eigenpairs of M⁻¹S; eigenvectors are orthonormal in the mass inner product.
#[derive(Debug, Clone)]
pub struct RadialSpectrum {
    pub alpha: f64,
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

impl RadialSpectrum {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// max_k ‖AΦ_k − λ_kΦ_k‖ / λ_k in the mass norm.
    pub fn max_relative_residual(&self, op: &RadialOperator) -> f64 {
        self.values
            .iter()
            .zip(&self.vectors)
            .map(|(lam, v)| {
                let r: Vec<f64> = op.apply(v).iter().zip(v).map(|(a, b)| a - lam * b).collect();
                mass_dot(&op.mass, &r, &r).sqrt() / lam
            })
            .fold(0.0, f64::max)
    }

    pub fn max_orthogonality_defect(&self, op: &RadialOperator) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.len() {
            for j in 0..=i {
                let d = mass_dot(&op.mass, &self.vectors[i], &self.vectors[j]);
                let want = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((d - want).abs());
            }
        }
        worst
    }
}

/// Lowest `k` eigenpairs of the discrete radial operator.
pub fn radial_spectrum(op: &RadialOperator, k: usize) -> Result<RadialSpectrum> {
    let n = op.n();
    if k > n {
        return Err(Error::TooManyEigenpairs {
            requested: k,
            available: n,
        });
    }
    let (values, mut vectors) = op.normalized().lowest_eigenpairs(k)?;
    let inv_sqrt_m: Vec<f64> = op.mass.iter().map(|m| 1.0 / m.sqrt()).collect();
    for v in vectors.iter_mut() {
        v.iter_mut().zip(&inv_sqrt_m).for_each(|(x, s)| *x *= s);
    }
    Ok(RadialSpectrum {
        alpha: op.alpha,
        values,
        vectors,
    })
}

/// Lower bound (1−α)²/4 of the radial spectrum.
pub fn spectral_gap_bound(alpha: f64) -> f64 {
    0.25 * (1.0 - alpha) * (1.0 - alpha)
}

/// Sharp weighted Hardy constant 4/(1−α)².
pub fn hardy_constant(alpha: f64) -> f64 {
    4.0 / ((1.0 - alpha) * (1.0 - alpha))
}

#[derive(Debug, Clone, Serialize)]
pub struct HardyReport {
    pub alpha: f64,
    pub label: String,
    /// ∫ r^{α−2} u².
    pub left: f64,
    /// ∫ r^α (u′)².
    pub right: f64,
    pub ratio: f64,
    pub constant: f64,
    pub exceeds: bool,
}

/// Hardy quotient of interior samples `u` (zero at both ends implied),
/// by cell-midpoint quadrature.
pub fn hardy_ratio(u: &[f64], alpha: f64, grid: &RadialGrid) -> Result<HardyReport> {
    hardy_ratio_labeled("samples", u, alpha, grid)
}

pub fn hardy_ratio_labeled(
    label: &str,
    u: &[f64],
    alpha: f64,
    grid: &RadialGrid,
) -> Result<HardyReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::AlphaOutOfRange(alpha));
    }
    let n = grid.n_interior();
    if u.len() != n {
        return Err(Error::DimensionMismatch {
            what: "Hardy test function",
            expected: n,
            got: u.len(),
        });
    }
    let value = |i: usize| if i == 0 || i == n + 1 { 0.0 } else { u[i - 1] };
    let mut left = 0.0;
    let mut right = 0.0;
    for c in 0..grid.n_cells() {
        let h = grid.widths[c];
        let rm = grid.half_nodes[c];
        let (u0, u1) = (value(c), value(c + 1));
        let um = 0.5 * (u0 + u1);
        let du = (u1 - u0) / h;
        left += h * rm.powf(alpha - 2.0) * um * um;
        right += h * rm.powf(alpha) * du * du;
    }
    if right <= 0.0 {
        return Err(Error::ZeroDenominator(
            "Hardy quotient: test function has zero weighted gradient".into(),
        ));
    }
    let ratio = left / right;
    let constant = hardy_constant(alpha);
    Ok(HardyReport {
        alpha,
        label: label.to_string(),
        left,
        right,
        ratio,
        constant,
        exceeds: ratio > constant,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bessel::bessel_oracle;
    use std::f64::consts::PI;

    fn op(alpha: f64, n_r: usize, g: f64) -> (RadialGrid, RadialOperator) {
        let grid = RadialGrid::new(n_r, g, alpha).unwrap();
        let op = assemble_radial_operator(alpha, &grid).unwrap();
        (grid, op)
    }

    #[test]
    fn small_uniform_entries() {
        let (_, op) = op(0.5, 4, 1.0);
        let b = op.normalized();
        // conductance of cell [0.5,0.75] is 0.5/(0.75^0.5 - 0.5^0.5); mass is h = 0.25
        let want = -0.5 / (0.75f64.sqrt() - 0.5f64.sqrt()) / 0.25;
        assert!((b.e[1] - want).abs() < 1e-12);
        // cell [0.25,0.5]
        let want01 = -0.5 / (0.5f64.sqrt() - 0.25f64.sqrt()) / 0.25;
        assert!((b.e[0] - want01).abs() < 1e-12);
        assert!((want01 + 9.656_854_249_492_38).abs() < 1e-9);
        assert!(op.stiff_off.iter().all(|&v| v < 0.0));
    }

    #[test]
    fn near_zero_alpha_is_laplacian_stencil() {
        let (_, op) = op(1e-9, 10, 1.0);
        let b = op.normalized();
        let h2 = 0.01;
        for d in &b.d {
            assert!((d * h2 - 2.0).abs() < 1e-6);
        }
        for e in &b.e {
            assert!((e * h2 + 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn constant_flux_is_exact() {
        // u with r^α u′ = 1 and u(0)=0: u = r^{1-α}/(1-α); −(r^α u′)′ = 0
        let alpha = 0.4;
        let (grid, op) = op(alpha, 16, 1.5);
        let u: Vec<f64> = grid.interior().iter().map(|r| r.powf(1.0 - alpha) / (1.0 - alpha)).collect();
        let su = op.stiffness_apply(&u);
        // interior rows vanish except the last one, which sees the nonzero right end value
        for v in &su[..su.len() - 1] {
            assert!(v.abs() < 1e-11, "{v}");
        }
    }

    #[test]
    fn near_laplacian_spectrum() {
        let (_, op) = op(1e-8, 2000, 1.0);
        let s = radial_spectrum(&op, 3).unwrap();
        for (k, v) in s.values.iter().enumerate() {
            let want = ((k + 1) as f64 * PI).powi(2);
            assert!((v / want - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn spectrum_invariants_and_oracle() {
        let alpha = 0.5;
        let (_, op) = op(alpha, 400, 4.0 / 3.0);
        let s = radial_spectrum(&op, 8).unwrap();
        assert!(s.values.windows(2).all(|w| w[0] <= w[1]));
        assert!(s.values[0] > spectral_gap_bound(alpha));
        assert!(s.max_orthogonality_defect(&op) < 1e-8);
        assert!(s.max_relative_residual(&op) < 1e-8);
        let oracle = bessel_oracle(alpha, 5).unwrap();
        assert!((s.values[0] / oracle[0] - 1.0).abs() < 5e-3);
        assert!((s.values[0] - 4.73).abs() < 0.03);
        let rq = op.rayleigh_quotient(&s.vectors[0]).unwrap();
        assert!((rq - s.values[0]).abs() < 1e-10 * s.values[0]);
    }

    #[test]
    fn too_many_pairs() {
        let (_, op) = op(0.5, 8, 1.0);
        assert!(radial_spectrum(&op, 8).is_err());
        assert_eq!(radial_spectrum(&op, 7).unwrap().len(), 7);
    }

    #[test]
    fn hardy_quadratic_closed_form() {
        let alpha = 0.5;
        let grid = RadialGrid::new(2000, 4.0 / 3.0, alpha).unwrap();
        let u: Vec<f64> = grid.interior().iter().map(|r| r * (1.0 - r)).collect();
        let rep = hardy_ratio(&u, alpha, &grid).unwrap();
        let a = alpha;
        let left = 1.0 / (a + 1.0) - 2.0 / (a + 2.0) + 1.0 / (a + 3.0);
        let right = 1.0 / (a + 1.0) - 4.0 / (a + 2.0) + 4.0 / (a + 3.0);
        assert!((rep.ratio - left / right).abs() < 1e-4);
        assert!((rep.constant - 16.0).abs() < 1e-15);
        assert!(!rep.exceeds);
    }

    #[test]
    fn hardy_rejects_zero() {
        let grid = RadialGrid::new(10, 1.0, 0.5).unwrap();
        assert!(hardy_ratio(&[0.0; 9], 0.5, &grid).is_err());
        assert!(hardy_ratio(&[1.0; 3], 0.5, &grid).is_err());
    }
}
