//! Carleman weights (spatial η, temporal Θ, combined ξ) and the empirical
//! evaluation of both sides of the weighted estimate on computed solutions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::{ModeTrajectory, TimeGrid};
use crate::linalg::{lu_solve, Mat};
use crate::model::{Parity, RadialGrid};

const POSITIVITY_SAMPLES: usize = 10_000;
const SUP_SAMPLES: usize = 10_000;

/// k-th derivative of r^β.
fn power_derivative(beta: f64, k: usize, r: f64) -> f64 {
    let mut c = 1.0;
    for i in 0..k {
        c *= beta - i as f64;
    }
    c * r.powf(beta - k as f64)
}

/// Falling factorial j(j−1)…(j−k+1) times x^{j−k}.
fn monomial_derivative(j: usize, k: usize, x: f64) -> f64 {
    if k > j {
        return 0.0;
    }
    let mut c = 1.0;
    for i in 0..k {
        c *= (j - i) as f64;
    }
    c * x.powi((j - k) as i32)
}

/// Spatial weight η: r^{2−α} on (0,p], a polynomial bridge on (p,q̂), and
/// (1−r)r^{−α} on [q̂,1).
#[derive(Debug, Clone, Serialize)]
pub struct EtaWeight {
    pub alpha: f64,
    pub a: f64,
    pub b: f64,
    pub p: f64,
    pub q_hat: f64,
    /// Bridge coefficients in the local variable x = (r−p)/(q̂−p).
    pub coeffs: Vec<f64>,
    /// True when the extra midpoint knot was needed to keep η > 0.
    pub fallback_used: bool,
    /// Sup of η over a dense sample of (0,1).
    pub sup_norm: f64,
}

impl EtaWeight {
    fn left(&self, k: usize, r: f64) -> f64 {
        power_derivative(2.0 - self.alpha, k, r)
    }

    fn right(&self, k: usize, r: f64) -> f64 {
        // (1−r)r^{−α} = r^{−α} − r^{1−α}
        power_derivative(-self.alpha, k, r) - power_derivative(1.0 - self.alpha, k, r)
    }

    fn bridge(&self, k: usize, r: f64) -> f64 {
        let len = self.q_hat - self.p;
        let x = (r - self.p) / len;
        let v: f64 = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(j, c)| c * monomial_derivative(j, k, x))
            .sum();
        v / len.powi(k as i32)
    }

    /// k-th derivative (k ≤ 3) of η at r ∈ (0,1).
    pub fn derivative(&self, k: usize, r: f64) -> f64 {
        if r <= self.p {
            self.left(k, r)
        } else if r >= self.q_hat {
            self.right(k, r)
        } else {
            self.bridge(k, r)
        }
    }

    pub fn value(&self, r: f64) -> f64 {
        self.derivative(0, r)
    }

    /// Degree of the bridge polynomial (7, or 8 after the fallback).
    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    fn min_on_bridge(&self) -> f64 {
        (1..POSITIVITY_SAMPLES)
            .map(|i| {
                let r = self.p + (self.q_hat - self.p) * i as f64 / POSITIVITY_SAMPLES as f64;
                self.bridge(0, r)
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// Hermite bridge matching value and three derivatives at both junctions,
/// plus optional interior value constraints.
fn hermite_bridge(eta: &EtaWeight, extra: &[(f64, f64)]) -> Result<Vec<f64>> {
    let len = eta.q_hat - eta.p;
    let mut rows: Vec<(f64, usize, f64)> = Vec::new();
    for k in 0..4 {
        rows.push((0.0, k, eta.left(k, eta.p) * len.powi(k as i32)));
        rows.push((1.0, k, eta.right(k, eta.q_hat) * len.powi(k as i32)));
    }
    for &(x, v) in extra {
        rows.push((x, 0, v));
    }
    let n = rows.len();
    let m = Mat::from_fn(n, |i, j| monomial_derivative(j, rows[i].1, rows[i].0));
    let rhs: Vec<f64> = rows.iter().map(|r| r.2).collect();
    lu_solve(&m, &rhs)
}

pub fn build_eta(alpha: f64, a: f64, b: f64) -> Result<EtaWeight> {
    build_eta_with(alpha, a, b, false)
}

fn build_eta_with(alpha: f64, a: f64, b: f64, force_lift: bool) -> Result<EtaWeight> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::AlphaOutOfRange(alpha));
    }
    if !(0.0 < a && a < b && b <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "observation band needs 0 < a < b <= 1, got ({a}, {b})"
        )));
    }
    let mut eta = EtaWeight {
        alpha,
        a,
        b,
        p: (2.0 * a + b) / 3.0,
        q_hat: (a + 2.0 * b) / 3.0,
        coeffs: Vec::new(),
        fallback_used: false,
        sup_norm: 0.0,
    };
    eta.coeffs = hermite_bridge(&eta, &[])?;
    if force_lift || eta.min_on_bridge() <= 0.0 {
        // lift the midpoint with one extra knot
        let lift = eta.left(0, eta.p).max(eta.right(0, eta.q_hat));
        eta.coeffs = hermite_bridge(&eta, &[(0.5, lift)])?;
        eta.fallback_used = true;
        if eta.min_on_bridge() <= 0.0 {
            return Err(Error::PositivityUnachievable);
        }
    }
    eta.sup_norm = (1..SUP_SAMPLES)
        .map(|i| eta.value(i as f64 / SUP_SAMPLES as f64))
        .fold(0.0, f64::max);
    Ok(eta)
}

/// Θ(t) = 1/[t(T−t)]⁴.
pub fn theta(t_horizon: f64, t: f64) -> f64 {
    (t * (t_horizon - t)).powi(-4)
}

/// Θ′(t) = −4Θ^{5/4}(T−2t).
pub fn theta_prime(t_horizon: f64, t: f64) -> f64 {
    -4.0 * theta(t_horizon, t).powf(1.25) * (t_horizon - 2.0 * t)
}

/// Θ″(t) = 20Θ^{3/2}(T−2t)² + 8Θ^{5/4}.
pub fn theta_second(t_horizon: f64, t: f64) -> f64 {
    let th = theta(t_horizon, t);
    let d = t_horizon - 2.0 * t;
    20.0 * th.powf(1.5) * d * d + 8.0 * th.powf(1.25)
}

/// Default Carleman parameter 10·max(1, T¹⁶).
pub fn s0_default(t_horizon: f64) -> f64 {
    10.0 * t_horizon.powi(16).max(1.0)
}

#[derive(Debug, Clone)]
pub struct CarlemanWeights {
    pub eta: EtaWeight,
    /// γ = sup η + 1 (sup over the dense sample and the grid).
    pub gamma: f64,
    pub t_horizon: f64,
    pub s: f64,
}

pub fn build_carleman_weights(
    eta: &EtaWeight,
    grid: &RadialGrid,
    t_horizon: f64,
    s: f64,
) -> Result<CarlemanWeights> {
    if !(s >= 1.0) {
        return Err(Error::InvalidArgument(format!("Carleman parameter s must be >= 1, got {s}")));
    }
    if !(t_horizon > 0.0) {
        return Err(Error::InvalidArgument(format!("T must be positive, got {t_horizon}")));
    }
    let grid_sup = grid
        .interior()
        .iter()
        .chain(&grid.half_nodes)
        .map(|&r| eta.value(r))
        .fold(0.0, f64::max);
    Ok(CarlemanWeights {
        eta: eta.clone(),
        gamma: eta.sup_norm.max(grid_sup) + 1.0,
        t_horizon,
        s,
    })
}

impl CarlemanWeights {
    pub fn theta(&self, t: f64) -> f64 {
        theta(self.t_horizon, t)
    }

    /// ξ(r,t) = Θ(t)(γ − η(r)).
    pub fn xi(&self, r: f64, t: f64) -> f64 {
        self.theta(t) * (self.gamma - self.eta.value(r))
    }

    /// ∂ᵣξ = −Θη′.
    pub fn xi_r(&self, r: f64, t: f64) -> f64 {
        -self.theta(t) * self.eta.derivative(1, r)
    }

    /// e^{−2sξ}.
    pub fn weight(&self, r: f64, t: f64) -> f64 {
        (-2.0 * self.s * self.xi(r, t)).exp()
    }

    pub fn with_s(&self, s: f64) -> Result<Self> {
        if !(s >= 1.0) {
            return Err(Error::InvalidArgument(format!("Carleman parameter s must be >= 1, got {s}")));
        }
        Ok(Self { s, ..self.clone() })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ThetaBoundsReport {
    pub t_horizon: f64,
    pub nodes_checked: usize,
    /// max |Θ′| / (12TΘ^{5/4}); analytically ≤ 1/3.
    pub max_ratio_first: f64,
    /// max |Θ″| / (196T²Θ^{3/2}); analytically ≤ 22/196.
    pub max_ratio_second: f64,
    pub holds: bool,
}

/// Checks |Θ′| ≤ 12TΘ^{5/4} and |Θ″| ≤ 196T²Θ^{3/2} at every interior node.
pub fn verify_theta_bounds(t_horizon: f64, grid: &TimeGrid) -> ThetaBoundsReport {
    let mut r1 = 0.0f64;
    let mut r2 = 0.0f64;
    let mut holds = true;
    let mut nodes = 0;
    for k in 1..grid.n_steps {
        let t = grid.t(k);
        if t <= 0.0 || t >= t_horizon {
            continue;
        }
        nodes += 1;
        let th = theta(t_horizon, t);
        let b1 = 12.0 * t_horizon * th.powf(1.25);
        let b2 = 196.0 * t_horizon * t_horizon * th.powf(1.5);
        let d1 = theta_prime(t_horizon, t).abs();
        let d2 = theta_second(t_horizon, t).abs();
        holds &= d1 <= b1 && d2 <= b2;
        r1 = r1.max(d1 / b1);
        r2 = r2.max(d2 / b2);
    }
    ThetaBoundsReport {
        t_horizon,
        nodes_checked: nodes,
        max_ratio_first: r1,
        max_ratio_second: r2,
        holds,
    }
}

/// One row of the Carleman report. All four integrals carry the common factor
/// e^{log_scale} (log_scale = 2sΘ(T/2)), which keeps them representable; the
/// ratio is unaffected.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CarlemanRow {
    pub s: f64,
    pub mode_parity: Parity,
    pub mode_n: usize,
    pub lhs_grad: f64,
    pub lhs_zero: f64,
    pub rhs_f: f64,
    pub rhs_obs: f64,
    pub ratio: f64,
    pub log_scale: f64,
    /// s below the default lower threshold (row still computed).
    pub below_s0: bool,
}

/// Evaluates both sides of the Carleman estimate for one mode trajectory.
/// Time quadrature uses interior nodes only (trapezoid, endpoint terms
/// dropped); the source term uses its half-step samples.
pub fn carleman_report(
    grid: &RadialGrid,
    time: &TimeGrid,
    trajectory: &ModeTrajectory,
    source: Option<&[Vec<f64>]>,
    weights: &CarlemanWeights,
    s_list: &[f64],
) -> Result<Vec<CarlemanRow>> {
    let n = grid.n_interior();
    if trajectory.states.len() != time.n_steps + 1
        || trajectory.states.iter().any(|v| v.len() != n)
    {
        return Err(Error::DimensionMismatch {
            what: "Carleman trajectory",
            expected: time.n_steps + 1,
            got: trajectory.states.len(),
        });
    }
    if let Some(s) = source {
        if s.len() != time.n_steps {
            return Err(Error::DimensionMismatch {
                what: "Carleman source samples",
                expected: time.n_steps,
                got: s.len(),
            });
        }
    }
    let t_h = weights.t_horizon;
    let s0 = s0_default(t_h);
    let dt = time.dt();
    let gamma = weights.gamma;
    let nodes = grid.interior();
    let eta_nodes: Vec<f64> = nodes.iter().map(|&r| weights.eta.value(r)).collect();
    let eta_faces: Vec<f64> = grid.half_nodes.iter().map(|&r| weights.eta.value(r)).collect();
    let zero_w: Vec<f64> = nodes
        .iter()
        .zip(&grid.mass)
        .map(|(r, m)| m * r.powf(2.0 - weights.eta.alpha))
        .collect();
    let in_band: Vec<bool> = nodes
        .iter()
        .map(|&r| r >= weights.eta.a && r <= weights.eta.b)
        .collect();
    let theta_ref = theta(t_h, 0.5 * t_h);
    let value = |state: &[f64], i: usize| if i == 0 || i == n + 1 { 0.0 } else { state[i - 1] };

    let rows = s_list
        .par_iter()
        .map(|&s| {
            let mut lhs_grad = 0.0;
            let mut lhs_zero = 0.0;
            let mut rhs_obs = 0.0;
            let mut rhs_f = 0.0;
            // shifted exponent: −2s(ξ − Θ(T/2))
            let expo = |th: f64, eta: f64| (-2.0 * s * (th * (gamma - eta) - theta_ref)).exp();
            for k in 1..time.n_steps {
                let t = time.t(k) - time.t_start;
                let th = theta(t_h, t);
                let state = &trajectory.states[k];
                for c in 0..grid.n_cells() {
                    let h = grid.widths[c];
                    let du = (value(state, c + 1) - value(state, c)) / h;
                    lhs_grad += dt * s * th * h * grid.half_weights[c] * du * du * expo(th, eta_faces[c]);
                }
                let th3 = th * th * th;
                for j in 0..n {
                    let e = expo(th, eta_nodes[j]);
                    let u2 = state[j] * state[j];
                    lhs_zero += dt * s * s * s * th3 * zero_w[j] * u2 * e;
                    if in_band[j] {
                        rhs_obs += dt * s * s * s * th3 * grid.mass[j] * u2 * e;
                    }
                }
            }
            if let Some(src) = source {
                for (k, f) in src.iter().enumerate() {
                    let t = (k as f64 + 0.5) * dt;
                    let th = theta(t_h, t);
                    for j in 0..n {
                        rhs_f += dt * grid.mass[j] * f[j] * f[j] * expo(th, eta_nodes[j]);
                    }
                }
            }
            let lhs = lhs_grad + lhs_zero;
            let rhs = rhs_f + rhs_obs;
            let ratio = if rhs > 0.0 {
                lhs / rhs
            } else if lhs == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
            CarlemanRow {
                s,
                mode_parity: trajectory.mode.parity,
                mode_n: trajectory.mode.n,
                lhs_grad,
                lhs_zero,
                rhs_f,
                rhs_obs,
                ratio,
                log_scale: 2.0 * s * theta_ref,
                below_s0: s < s0,
            }
        })
        .collect();
    Ok(rows)
}
