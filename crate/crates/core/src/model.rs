//! Discrete model of the torus-times-interval domain: radial mesh, angular
//! quadrature, Fourier mode bookkeeping, and the exact analysis/synthesis maps
//! between 2D fields and per-mode radial coefficients.

use std::f64::consts::PI;
use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::radial::{self, RadialOperator, RadialSpectrum};

/// Configuration of the discrete model. Field names on the JSON side follow
/// the published schema (`T_horizon` keeps its capital).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelConfigDoc")]
pub struct ModelConfig {
    pub alpha: f64,
    #[serde(rename = "T_horizon")]
    pub t_horizon: f64,
    pub n_theta_max: usize,
    pub n_r: usize,
    pub grid_power: f64,
    pub n_time: usize,
    pub theta_quad_points: usize,
}

/// On-disk form of [`ModelConfig`]: optional fields get defaults that may
/// depend on `alpha` or `n_theta_max`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelConfigDoc {
    alpha: f64,
    #[serde(rename = "T_horizon")]
    t_horizon: f64,
    n_theta_max: Option<usize>,
    n_r: Option<usize>,
    grid_power: Option<f64>,
    n_time: Option<usize>,
    theta_quad_points: Option<usize>,
}

impl TryFrom<ModelConfigDoc> for ModelConfig {
    type Error = Error;

    fn try_from(doc: ModelConfigDoc) -> Result<Self> {
        let mut cfg = ModelConfig::new(doc.alpha, doc.t_horizon);
        if let Some(n) = doc.n_theta_max {
            cfg.n_theta_max = n;
            cfg.theta_quad_points = default_quad_points(n);
        }
        if let Some(n) = doc.n_r {
            cfg.n_r = n;
        }
        if let Some(g) = doc.grid_power {
            cfg.grid_power = g;
        }
        if let Some(n) = doc.n_time {
            cfg.n_time = n;
        }
        if let Some(q) = doc.theta_quad_points {
            cfg.theta_quad_points = q;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub const DEFAULT_N_THETA_MAX: usize = 4;
pub const DEFAULT_N_R: usize = 200;
pub const DEFAULT_N_TIME: usize = 200;

fn default_quad_points(n_theta_max: usize) -> usize {
    4 * n_theta_max + 8
}

/// Mesh grading exponent that resolves the `r^{1-α}` boundary layer at r=0.
pub fn default_grid_power(alpha: f64) -> f64 {
    2.0 / (2.0 - alpha)
}

impl ModelConfig {
    /// Desk-scale defaults for the given degeneracy exponent and horizon.
    pub fn new(alpha: f64, t_horizon: f64) -> Self {
        Self {
            alpha,
            t_horizon,
            n_theta_max: DEFAULT_N_THETA_MAX,
            n_r: DEFAULT_N_R,
            grid_power: default_grid_power(alpha),
            n_time: DEFAULT_N_TIME,
            theta_quad_points: default_quad_points(DEFAULT_N_THETA_MAX),
        }
    }

    pub fn with_sizes(mut self, n_theta_max: usize, n_r: usize, n_time: usize) -> Self {
        self.n_theta_max = n_theta_max;
        self.theta_quad_points = default_quad_points(n_theta_max);
        self.n_r = n_r;
        self.n_time = n_time;
        self
    }

    pub fn from_json_str(s: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::AlphaOutOfRange(self.alpha));
        }
        if !(self.t_horizon > 0.0 && self.t_horizon.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "T_horizon must be positive, got {}",
                self.t_horizon
            )));
        }
        if self.n_r < 8 {
            return Err(Error::InvalidConfig(format!("n_r must be >= 8, got {}", self.n_r)));
        }
        if self.n_time < 2 {
            return Err(Error::InvalidConfig(format!(
                "n_time must be >= 2, got {}",
                self.n_time
            )));
        }
        if !(self.grid_power >= 1.0 && self.grid_power.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "grid_power must be >= 1, got {}",
                self.grid_power
            )));
        }
        if self.theta_quad_points < 2 * self.n_theta_max + 2 {
            return Err(Error::InvalidConfig(format!(
                "theta_quad_points must be >= 2*n_theta_max+2 = {}, got {}",
                2 * self.n_theta_max + 2,
                self.theta_quad_points
            )));
        }
        Ok(())
    }
}

/// Graded radial mesh `r_i = (i/n_r)^g` on [0,1] with Dirichlet ends.
#[derive(Debug, Clone)]
pub struct RadialGrid {
    /// All mesh points r_0 = 0 < ... < r_{n_r} = 1.
    pub points: Vec<f64>,
    /// Cell widths h_{i+1/2} = r_{i+1} - r_i, one per cell.
    pub widths: Vec<f64>,
    /// Cell midpoints r_{i+1/2}.
    pub half_nodes: Vec<f64>,
    /// w(r_{i+1/2}) = r_{i+1/2}^α.
    pub half_weights: Vec<f64>,
    /// Lumped mass m_i = r_{i+1/2} - r_{i-1/2} at interior nodes.
    pub mass: Vec<f64>,
    pub alpha: f64,
    pub grid_power: f64,
}

impl RadialGrid {
    pub fn new(n_r: usize, grid_power: f64, alpha: f64) -> Result<Self> {
        if n_r < 2 {
            return Err(Error::InvalidConfig(format!("n_r must be >= 2, got {n_r}")));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::AlphaOutOfRange(alpha));
        }
        let points: Vec<f64> = (0..=n_r)
            .map(|i| (i as f64 / n_r as f64).powf(grid_power))
            .collect();
        let widths: Vec<f64> = points.windows(2).map(|w| w[1] - w[0]).collect();
        let half_nodes: Vec<f64> = points.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        let half_weights = half_nodes.iter().map(|r| r.powf(alpha)).collect();
        let mass = half_nodes.windows(2).map(|w| w[1] - w[0]).collect();
        Ok(Self {
            points,
            widths,
            half_nodes,
            half_weights,
            mass,
            alpha,
            grid_power,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.widths.len()
    }

    /// Number of interior (unknown) nodes, n_r - 1.
    pub fn n_interior(&self) -> usize {
        self.mass.len()
    }

    pub fn interior(&self) -> &[f64] {
        &self.points[1..self.points.len() - 1]
    }

    pub fn max_width(&self) -> f64 {
        self.widths.iter().copied().fold(0.0, f64::max)
    }

    /// Discrete L²(Λ) inner product.
    pub fn dot(&self, u: &[f64], v: &[f64]) -> f64 {
        mass_dot(&self.mass, u, v)
    }

    pub fn norm(&self, u: &[f64]) -> f64 {
        self.dot(u, u).sqrt()
    }
}

pub(crate) fn mass_dot(mass: &[f64], u: &[f64], v: &[f64]) -> f64 {
    mass.iter()
        .zip(u.iter().zip(v))
        .map(|(m, (a, b))| m * a * b)
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Cos,
    Sin,
}

impl fmt::Display for Parity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Parity::Cos => f.write_str("cos"),
            Parity::Sin => f.write_str("sin"),
        }
    }
}

/// Angular Fourier mode g_{i,n}, normalized in L²(𝕋): `1/√(2π)` for n = 0,
/// otherwise `cos nθ/√π` or `sin nθ/√π`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ModeIndex {
    pub parity: Parity,
    pub n: usize,
}

impl ModeIndex {
    pub fn new(parity: Parity, n: usize) -> Result<Self> {
        if parity == Parity::Sin && n == 0 {
            return Err(Error::InvalidArgument("sin mode requires n >= 1".into()));
        }
        Ok(Self { parity, n })
    }

    pub fn cos(n: usize) -> Self {
        Self { parity: Parity::Cos, n }
    }

    pub fn sin(n: usize) -> Self {
        assert!(n >= 1, "sin mode requires n >= 1");
        Self { parity: Parity::Sin, n }
    }

    pub fn eval(&self, theta: f64) -> f64 {
        let s = if self.n == 0 {
            1.0 / (2.0 * PI).sqrt()
        } else {
            1.0 / PI.sqrt()
        };
        match self.parity {
            Parity::Cos => s * (self.n as f64 * theta).cos(),
            Parity::Sin => s * (self.n as f64 * theta).sin(),
        }
    }

    /// Position in the canonical ordering (cos 0..N, then sin 1..N).
    pub fn position(&self, n_theta_max: usize) -> usize {
        match self.parity {
            Parity::Cos => self.n,
            Parity::Sin => n_theta_max + self.n,
        }
    }
}

impl fmt::Display for ModeIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.parity, self.n)
    }
}

/// Complete admissible mode set in canonical order.
pub fn mode_set(n_theta_max: usize) -> Vec<ModeIndex> {
    (0..=n_theta_max)
        .map(ModeIndex::cos)
        .chain((1..=n_theta_max).map(ModeIndex::sin))
        .collect()
}

/// Samples on the tensor grid θ_q × r_j, stored row-major by radial node.
#[derive(Debug, Clone, PartialEq)]
pub struct Field2D {
    pub n_radial: usize,
    pub n_theta: usize,
    pub values: Vec<f64>,
}

impl Field2D {
    pub fn zeros(model: &Model) -> Self {
        let n_radial = model.grid.n_interior();
        let n_theta = model.theta.len();
        Self {
            n_radial,
            n_theta,
            values: vec![0.0; n_radial * n_theta],
        }
    }

    /// Sample `f(θ, r)` at every grid point.
    pub fn from_fn(model: &Model, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut out = Self::zeros(model);
        for (j, &r) in model.grid.interior().iter().enumerate() {
            for (q, &th) in model.theta.iter().enumerate() {
                out.values[j * out.n_theta + q] = f(th, r);
            }
        }
        out
    }

    #[inline]
    pub fn get(&self, j: usize, q: usize) -> f64 {
        self.values[j * self.n_theta + q]
    }

    #[inline]
    pub fn set(&mut self, j: usize, q: usize, v: f64) {
        self.values[j * self.n_theta + q] = v;
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn check(&self, model: &Model) -> Result<()> {
        if self.n_radial != model.grid.n_interior() {
            return Err(Error::DimensionMismatch {
                what: "field radial size",
                expected: model.grid.n_interior(),
                got: self.n_radial,
            });
        }
        if self.n_theta != model.theta.len() {
            return Err(Error::DimensionMismatch {
                what: "field angular size",
                expected: model.theta.len(),
                got: self.n_theta,
            });
        }
        if self.values.len() != self.n_radial * self.n_theta {
            return Err(Error::DimensionMismatch {
                what: "field storage",
                expected: self.n_radial * self.n_theta,
                got: self.values.len(),
            });
        }
        Ok(())
    }
}

/// Radial coefficient vectors, one per admissible mode in canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeCoeffs {
    pub n_theta_max: usize,
    pub n_radial: usize,
    pub data: Vec<Vec<f64>>,
}

impl ModeCoeffs {
    pub fn zeros(model: &Model) -> Self {
        Self::zeros_sized(model.config.n_theta_max, model.grid.n_interior())
    }

    pub fn zeros_sized(n_theta_max: usize, n_radial: usize) -> Self {
        Self {
            n_theta_max,
            n_radial,
            data: vec![vec![0.0; n_radial]; 2 * n_theta_max + 1],
        }
    }

    /// A single radial profile placed on one mode.
    pub fn single(model: &Model, mode: ModeIndex, profile: &[f64]) -> Result<Self> {
        let mut c = Self::zeros(model);
        if profile.len() != c.n_radial {
            return Err(Error::DimensionMismatch {
                what: "radial profile",
                expected: c.n_radial,
                got: profile.len(),
            });
        }
        if mode.n > c.n_theta_max {
            return Err(Error::InvalidArgument(format!("mode {mode} above n_theta_max")));
        }
        c.get_mut(mode).copy_from_slice(profile);
        Ok(c)
    }

    pub fn modes(&self) -> Vec<ModeIndex> {
        mode_set(self.n_theta_max)
    }

    pub fn get(&self, mode: ModeIndex) -> &[f64] {
        &self.data[mode.position(self.n_theta_max)]
    }

    pub fn get_mut(&mut self, mode: ModeIndex) -> &mut [f64] {
        let p = mode.position(self.n_theta_max);
        &mut self.data[p]
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().flatten().for_each(|v| *v *= s);
    }

    /// self += s * other
    pub fn axpy(&mut self, s: f64, other: &ModeCoeffs) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += s * y;
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().flatten().all(|v| v.is_finite())
    }

    pub(crate) fn check(&self, model: &Model) -> Result<()> {
        if self.n_theta_max != model.config.n_theta_max || self.data.len() != 2 * self.n_theta_max + 1
        {
            return Err(Error::DimensionMismatch {
                what: "mode count",
                expected: 2 * model.config.n_theta_max + 1,
                got: self.data.len(),
            });
        }
        if self.n_radial != model.grid.n_interior()
            || self.data.iter().any(|v| v.len() != self.n_radial)
        {
            return Err(Error::DimensionMismatch {
                what: "coefficient radial size",
                expected: model.grid.n_interior(),
                got: self.n_radial,
            });
        }
        Ok(())
    }
}

/// The assembled discrete model. Immutable after construction.
#[derive(Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub grid: RadialGrid,
    /// Uniform angular nodes θ_q = 2πq/Q.
    pub theta: Vec<f64>,
    pub modes: Vec<ModeIndex>,
    /// `basis[p][q] = g_{mode p}(θ_q)`.
    basis: Vec<Vec<f64>>,
    operator: RadialOperator,
    spectrum: OnceLock<RadialSpectrum>,
}

pub fn build_model(config: ModelConfig) -> Result<Model> {
    config.validate()?;
    let grid = RadialGrid::new(config.n_r, config.grid_power, config.alpha)?;
    let nq = config.theta_quad_points;
    let theta: Vec<f64> = (0..nq).map(|q| 2.0 * PI * q as f64 / nq as f64).collect();
    let modes = mode_set(config.n_theta_max);
    let basis = modes
        .iter()
        .map(|m| theta.iter().map(|&t| m.eval(t)).collect())
        .collect();
    let operator = radial::assemble_radial_operator(config.alpha, &grid)?;
    Ok(Model {
        config,
        grid,
        theta,
        modes,
        basis,
        operator,
        spectrum: OnceLock::new(),
    })
}

impl Model {
    pub fn operator(&self) -> &RadialOperator {
        &self.operator
    }

    /// Complete radial eigen-decomposition (all n_r-1 pairs), computed once.
    pub fn radial_spectrum(&self) -> &RadialSpectrum {
        self.spectrum.get_or_init(|| {
            radial::radial_spectrum(&self.operator, self.grid.n_interior())
                .expect("full radial spectrum of a valid operator")
        })
    }

    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn theta_weight(&self) -> f64 {
        2.0 * PI / self.theta.len() as f64
    }

    /// Angular basis samples of one mode at the quadrature nodes.
    pub fn basis_samples(&self, mode: ModeIndex) -> &[f64] {
        &self.basis[mode.position(self.config.n_theta_max)]
    }

    /// Discrete L²(Ω) inner product of coefficient sets.
    pub fn inner(&self, a: &ModeCoeffs, b: &ModeCoeffs) -> f64 {
        a.data
            .iter()
            .zip(&b.data)
            .map(|(u, v)| self.grid.dot(u, v))
            .sum()
    }

    pub fn norm(&self, a: &ModeCoeffs) -> f64 {
        self.inner(a, a).sqrt()
    }

    /// Quadrature of F² over Ω on the tensor grid.
    pub fn field_norm_sq(&self, f: &Field2D) -> f64 {
        let w = self.theta_weight();
        let mut total = 0.0;
        for (j, m) in self.grid.mass.iter().enumerate() {
            let row = &f.values[j * f.n_theta..(j + 1) * f.n_theta];
            total += m * w * row.iter().map(|v| v * v).sum::<f64>();
        }
        total
    }

    pub fn time_grid(&self) -> crate::evolution::TimeGrid {
        crate::evolution::TimeGrid::new(self.config.t_horizon, self.config.n_time)
            .expect("validated config")
    }
}

/// Trapezoid-rule Fourier analysis against each g_{i,n}.
pub fn project_modes(model: &Model, field: &Field2D) -> Result<ModeCoeffs> {
    field.check(model)?;
    let w = model.theta_weight();
    let mut out = ModeCoeffs::zeros(model);
    for (p, basis) in model.basis.iter().enumerate() {
        for j in 0..field.n_radial {
            let row = &field.values[j * field.n_theta..(j + 1) * field.n_theta];
            out.data[p][j] = w * row.iter().zip(basis).map(|(f, g)| f * g).sum::<f64>();
        }
    }
    Ok(out)
}

/// Pointwise Fourier synthesis Σ c_{i,n}(r) g_{i,n}(θ).
pub fn synthesize_field(model: &Model, coeffs: &ModeCoeffs) -> Result<Field2D> {
    coeffs.check(model)?;
    let mut out = Field2D::zeros(model);
    for (p, basis) in model.basis.iter().enumerate() {
        for j in 0..out.n_radial {
            let c = coeffs.data[p][j];
            if c == 0.0 {
                continue;
            }
            let row = &mut out.values[j * out.n_theta..(j + 1) * out.n_theta];
            for (v, g) in row.iter_mut().zip(basis) {
                *v += c * g;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn model(n_theta_max: usize, n_r: usize) -> Model {
        build_model(ModelConfig::new(0.5, 1.0).with_sizes(n_theta_max, n_r, 10)).unwrap()
    }

    #[test]
    fn uniform_and_graded_nodes() {
        let g = RadialGrid::new(4, 1.0, 0.5).unwrap();
        assert_eq!(g.interior(), &[0.25, 0.5, 0.75]);
        let g = RadialGrid::new(4, 2.0, 0.5).unwrap();
        let expect = [1.0 / 16.0, 0.25, 9.0 / 16.0];
        for (a, b) in g.interior().iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn alpha_out_of_range_rejected() {
        let cfg = ModelConfig::new(1.2, 1.0);
        let err = build_model(cfg).unwrap_err();
        assert!(err.to_string().contains("alpha out of range"));
    }

    #[test]
    fn grid_is_monotone_and_refines() {
        for g in [1.0, 4.0 / 3.0, 1.9] {
            let grid = RadialGrid::new(64, g, 0.5).unwrap();
            assert!(grid.points.windows(2).all(|w| w[0] < w[1]));
            assert!(grid.mass.iter().all(|&m| m > 0.0));
            assert!(grid.half_weights.iter().all(|&w| w > 0.0));
        }
        let coarse = RadialGrid::new(32, 1.0, 0.5).unwrap();
        let fine = RadialGrid::new(64, 1.0, 0.5).unwrap();
        assert!((coarse.max_width() / fine.max_width() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn json_defaults_and_strictness() {
        let cfg = ModelConfig::from_json_str(r#"{"alpha":0.5,"T_horizon":1.0}"#).unwrap();
        assert_eq!(cfg.n_theta_max, DEFAULT_N_THETA_MAX);
        assert_eq!(cfg.theta_quad_points, 4 * DEFAULT_N_THETA_MAX + 8);
        assert!((cfg.grid_power - 4.0 / 3.0).abs() < 1e-15);
        assert!(ModelConfig::from_json_str(r#"{"alpha":0.5,"T_horizon":1.0,"beta":2}"#).is_err());
        assert!(ModelConfig::from_json_str(r#"{"alpha":"0.5","T_horizon":1.0}"#).is_err());
        assert!(ModelConfig::from_json_str(r#"{"alpha":1.5,"T_horizon":1.0}"#).is_err());
    }

    #[test]
    fn sin_zero_is_not_a_mode() {
        assert!(ModeIndex::new(Parity::Sin, 0).is_err());
        let set = mode_set(3);
        assert_eq!(set.len(), 7);
        for (p, m) in set.iter().enumerate() {
            assert_eq!(m.position(3), p);
        }
    }

    #[test]
    fn project_constant_mode() {
        let m = model(4, 20);
        let g10 = 1.0 / (2.0 * PI).sqrt();
        let f = Field2D::from_fn(&m, |_, r| g10 * r.sin());
        let c = project_modes(&m, &f).unwrap();
        for (p, mode) in m.modes.iter().enumerate() {
            for (j, &r) in m.grid.interior().iter().enumerate() {
                let want = if *mode == ModeIndex::cos(0) { r.sin() } else { 0.0 };
                assert!((c.data[p][j] - want).abs() < 1e-14, "{mode} {j}");
            }
        }
    }

    #[test]
    fn project_sin3_against_dense_quadrature() {
        let m = model(4, 16);
        let f = Field2D::from_fn(&m, |th, r| ModeIndex::sin(3).eval(th) * r * (1.0 - r));
        let c = project_modes(&m, &f).unwrap();
        // independent dense midpoint quadrature in θ
        let nq = 20_000;
        for mode in &m.modes {
            for (j, &r) in m.grid.interior().iter().enumerate() {
                let h = 2.0 * PI / nq as f64;
                let dense: f64 = (0..nq)
                    .map(|q| {
                        let th = (q as f64 + 0.5) * h;
                        h * ModeIndex::sin(3).eval(th) * r * (1.0 - r) * mode.eval(th)
                    })
                    .sum();
                let got = c.get(*mode)[j];
                assert!((got - dense).abs() < 1e-12, "{mode}: {got} vs {dense}");
                if *mode == ModeIndex::sin(3) {
                    assert!((got - r * (1.0 - r)).abs() < 1e-12);
                } else {
                    assert!(got.abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn zero_field_and_coeffs() {
        let m = model(2, 12);
        let c = project_modes(&m, &Field2D::zeros(&m)).unwrap();
        assert_eq!(c.max_abs(), 0.0);
        let f = synthesize_field(&m, &ModeCoeffs::zeros(&m)).unwrap();
        assert_eq!(f.max_abs(), 0.0);
    }

    #[test]
    fn synthesize_cos1_at_zero_angle() {
        let m = model(3, 10);
        let c = ModeCoeffs::single(&m, ModeIndex::cos(1), &[1.0; 9]).unwrap();
        let f = synthesize_field(&m, &c).unwrap();
        // g_{1,1}(0) = 1/sqrt(π) = 0.564189583547756286948079...
        for j in 0..9 {
            assert!((f.get(j, 0) - 0.564_189_583_547_756_3).abs() < 1e-15);
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let m = model(2, 12);
        let other = model(3, 12);
        assert!(project_modes(&m, &Field2D::zeros(&other)).is_err());
        assert!(synthesize_field(&m, &ModeCoeffs::zeros(&other)).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn roundtrip_and_parseval(seed in proptest::collection::vec(-1.0f64..1.0, 9 * 11)) {
            let m = model(4, 12);
            let mut c = ModeCoeffs::zeros(&m);
            for (p, row) in c.data.iter_mut().enumerate() {
                row.copy_from_slice(&seed[p * 11..(p + 1) * 11]);
            }
            let f = synthesize_field(&m, &c).unwrap();
            let back = project_modes(&m, &f).unwrap();
            for (a, b) in c.data.iter().flatten().zip(back.data.iter().flatten()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
            let lhs = m.field_norm_sq(&f);
            let rhs = m.inner(&c, &c);
            prop_assert!((lhs - rhs).abs() <= 1e-10 * rhs.max(1e-300));
        }
    }
}
