//! Bessel functions of the first kind and their positive zeros, used as an
//! independent eigenvalue oracle for the continuous radial operator.

use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::hp::Hp;
use crate::linalg::Scalar;

/// Σ_m (−x²/4)^m / (m! (ν+1)_m), summed in enough precision that the
/// alternating cancellation leaves a full double-precision result.
fn reduced_series(nu: f64, x: f64) -> f64 {
    let p = 128 + (x * std::f64::consts::LOG2_E) as usize + 64;
    let q = Hp::from_f64(-0.25 * x * x, p);
    let one = Hp::from_int(1, p);
    let nu_hp = Hp::from_f64(nu, p);
    let mut term = one.clone();
    let mut sum = one;
    let tol = 2f64.powi(-(p as i32) + 8);
    let mut m = 0usize;
    let mut peak = 1.0f64;
    loop {
        m += 1;
        // m(ν+m) must not be rounded to f64: the error would be amplified by
        // the size of the largest term
        let mh = Hp::from_int(m as i64, p);
        let denom = mh.mul(&nu_hp.add(&mh));
        term = term.mul(&q).div(&denom);
        sum = sum.add(&term);
        let t = term.to_f64().abs();
        peak = peak.max(t);
        if m as f64 > 0.5 * x && t <= tol * peak {
            break;
        }
    }
    sum.to_f64()
}

/// J_ν(x) for ν > −1 and x ≥ 0.
pub fn bessel_j(nu: f64, x: f64) -> f64 {
    if x == 0.0 {
        return if nu == 0.0 { 1.0 } else { 0.0 };
    }
    (0.5 * x).powf(nu) / gamma(nu + 1.0) * reduced_series(nu, x)
}

fn bessel_j_prime(nu: f64, x: f64) -> f64 {
    nu / x * bessel_j(nu, x) - bessel_j(nu + 1.0, x)
}

/// McMahon's large-zero expansion, good enough to seed brackets.
fn mcmahon(nu: f64, k: usize) -> f64 {
    let beta = (k as f64 + 0.5 * nu - 0.25) * std::f64::consts::PI;
    beta - (4.0 * nu * nu - 1.0) / (8.0 * beta)
}

fn bracket(nu: f64, k: usize, lower: f64) -> Option<(f64, f64)> {
    let g = mcmahon(nu, k);
    let (a, b) = ((g - 0.3).max(lower), g + 0.3);
    if a < b && bessel_j(nu, a) * bessel_j(nu, b) < 0.0 {
        return Some((a, b));
    }
    // fall back to a scan just above the previous zero
    let step = 0.05;
    let mut x0 = lower;
    let mut f0 = bessel_j(nu, x0);
    while x0 < g + 2.0 {
        let x1 = x0 + step;
        let f1 = bessel_j(nu, x1);
        if f0 * f1 < 0.0 {
            return Some((x0, x1));
        }
        x0 = x1;
        f0 = f1;
    }
    None
}

/// First `k` positive zeros of J_ν.
pub fn bessel_zeros(nu: f64, k: usize) -> Result<Vec<f64>> {
    if !(nu > -1.0 && nu.is_finite()) {
        return Err(Error::InvalidArgument(format!("Bessel order must exceed -1, got {nu}")));
    }
    let mut zeros = Vec::with_capacity(k);
    let mut lower = 1e-6;
    for idx in 1..=k {
        let (mut a, mut b) = bracket(nu, idx, lower).ok_or(Error::BracketFailed { k: idx })?;
        let mut fa = bessel_j(nu, a);
        while b - a > 1e-9 * b {
            let m = 0.5 * (a + b);
            let fm = bessel_j(nu, m);
            if fm == 0.0 {
                a = m;
                b = m;
                break;
            }
            if fa * fm < 0.0 {
                b = m;
            } else {
                a = m;
                fa = fm;
            }
        }
        let mut x = 0.5 * (a + b);
        for _ in 0..6 {
            let f = bessel_j(nu, x);
            let step = f / bessel_j_prime(nu, x);
            let next = x - step;
            if !(next >= a - 1e-9 && next <= b + 1e-9) {
                break;
            }
            x = next;
            if step.abs() <= 2.0 * f64::EPSILON * x {
                break;
            }
        }
        if bessel_j(nu, x).abs() > 1e-12 {
            return Err(Error::NonConvergence {
                what: "Bessel zero refinement",
                index: idx,
            });
        }
        lower = x + 1e-6;
        zeros.push(x);
    }
    Ok(zeros)
}

/// Order ν = (1−α)/(2−α) and scale κ = (2−α)/2 linking the radial operator to J_ν.
pub fn bessel_parameters(alpha: f64) -> (f64, f64) {
    ((1.0 - alpha) / (2.0 - alpha), (2.0 - alpha) / 2.0)
}

/// Continuous eigenvalues λ_k = κ² j²_{ν,k} of −(r^α u′)′ with Dirichlet ends.
pub fn bessel_oracle(alpha: f64, k: usize) -> Result<Vec<f64>> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::AlphaOutOfRange(alpha));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("need at least one eigenvalue".into()));
    }
    let (nu, kappa) = bessel_parameters(alpha);
    Ok(bessel_zeros(nu, k)?
        .into_iter()
        .map(|j| kappa * kappa * j * j)
        .collect())
}
