//! Shipped desk-scale cases shared by the CLI and the acceptance suite, and
//! the initial-datum description used in configs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::carleman::{build_carleman_weights, build_eta, carleman_report, s0_default, CarlemanRow};
use crate::control::{ControlBox, ControlRegion};
use crate::error::{Error, Result};
use crate::evolution::solve_forward;
use crate::measurable::BoxUnionSet;
use crate::model::{build_model, Model, ModelConfig, ModeCoeffs, ModeIndex, Parity};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EigenTerm {
    pub parity: Parity,
    pub n: usize,
    /// 1-based radial index.
    pub k: usize,
    #[serde(default = "one")]
    pub coeff: f64,
}

fn one() -> f64 {
    1.0
}

impl EigenTerm {
    pub fn new(parity: Parity, n: usize, k: usize, coeff: f64) -> Self {
        Self { parity, n, k, coeff }
    }
}

/// Initial datum φ⁰ in a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialDatum {
    Zero,
    /// Σ coeff · g_{parity,n} Φ_k.
    Eigen { terms: Vec<EigenTerm> },
    /// Unit-norm random combination of the first `radial_modes` radial
    /// eigenvectors in every angular mode.
    Random { radial_modes: usize },
}

impl Default for InitialDatum {
    fn default() -> Self {
        InitialDatum::Eigen {
            terms: vec![EigenTerm::new(Parity::Cos, 1, 1, 1.0)],
        }
    }
}

impl InitialDatum {
    pub fn build(&self, model: &Model, seed: u64) -> Result<ModeCoeffs> {
        let spec = model.radial_spectrum();
        let mut c = ModeCoeffs::zeros(model);
        match self {
            InitialDatum::Zero => {}
            InitialDatum::Eigen { terms } => {
                for t in terms {
                    let mode = ModeIndex::new(t.parity, t.n)?;
                    if t.n > model.config.n_theta_max {
                        return Err(Error::InvalidArgument(format!(
                            "mode {mode} exceeds n_theta_max = {}",
                            model.config.n_theta_max
                        )));
                    }
                    if t.k == 0 || t.k > spec.len() {
                        return Err(Error::TooManyEigenpairs {
                            requested: t.k,
                            available: spec.len(),
                        });
                    }
                    c.get_mut(mode)
                        .iter_mut()
                        .zip(&spec.vectors[t.k - 1])
                        .for_each(|(x, v)| *x += t.coeff * v);
                }
            }
            InitialDatum::Random { radial_modes } => {
                if *radial_modes == 0 || *radial_modes > spec.len() {
                    return Err(Error::TooManyEigenpairs {
                        requested: *radial_modes,
                        available: spec.len(),
                    });
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                for row in c.data.iter_mut() {
                    for v in &spec.vectors[..*radial_modes] {
                        let a: f64 = rng.gen_range(-1.0..1.0);
                        row.iter_mut().zip(v).for_each(|(x, y)| *x += a * y);
                    }
                }
                let n = model.norm(&c);
                c.scale(1.0 / n);
            }
        }
        Ok(c)
    }
}

/// One member of the Carleman regression family.
#[derive(Debug, Clone, Serialize)]
pub struct CarlemanCase {
    pub name: &'static str,
    pub alpha: f64,
    pub a: f64,
    pub b: f64,
    pub mode: ModeIndex,
    pub terms: Vec<(usize, f64)>,
    /// Adds the source χ_{(a,b)} sin(πt) Φ_1 in the same mode.
    pub forced: bool,
}

pub fn carleman_family() -> Vec<CarlemanCase> {
    let cos1 = ModeIndex::cos(1);
    vec![
        CarlemanCase { name: "eigen-cos1", alpha: 0.5, a: 0.3, b: 0.6, mode: cos1, terms: vec![(1, 1.0)], forced: false },
        CarlemanCase { name: "eigen-sin2-k2", alpha: 0.5, a: 0.3, b: 0.6, mode: ModeIndex::sin(2), terms: vec![(2, 1.0)], forced: false },
        CarlemanCase { name: "weak-degeneracy", alpha: 0.2, a: 0.2, b: 0.5, mode: ModeIndex::cos(0), terms: vec![(1, 1.0)], forced: false },
        CarlemanCase { name: "strong-degeneracy", alpha: 0.8, a: 0.4, b: 0.8, mode: cos1, terms: vec![(1, 1.0)], forced: false },
        CarlemanCase { name: "forced", alpha: 0.5, a: 0.3, b: 0.6, mode: cos1, terms: vec![(1, 1.0)], forced: true },
        CarlemanCase { name: "mixed-radial", alpha: 0.5, a: 0.5, b: 0.9, mode: cos1, terms: vec![(1, 1.0), (2, -0.5), (4, 0.25)], forced: false },
    ]
}

/// Rows at s = factor · s0 for one case on a T = 1 model.
pub fn run_carleman_case(case: &CarlemanCase, n_r: usize, n_time: usize, s_factors: &[f64]) -> Result<Vec<CarlemanRow>> {
    let cfg = ModelConfig::new(case.alpha, 1.0).with_sizes(case.mode.n.max(1), n_r, n_time);
    let model = build_model(cfg)?;
    let spec = model.radial_spectrum();
    let mut profile = vec![0.0; model.grid.n_interior()];
    for &(k, c) in &case.terms {
        profile.iter_mut().zip(&spec.vectors[k - 1]).for_each(|(x, v)| *x += c * v);
    }
    let phi0 = ModeCoeffs::single(&model, case.mode, &profile)?;
    let grid = model.time_grid();
    let radial_source: Option<Vec<Vec<f64>>> = case.forced.then(|| {
        grid.half_times()
            .iter()
            .map(|&t| {
                model
                    .grid
                    .interior()
                    .iter()
                    .zip(&spec.vectors[0])
                    .map(|(&r, v)| if r >= case.a && r <= case.b { (std::f64::consts::PI * t).sin() * v } else { 0.0 })
                    .collect()
            })
            .collect()
    });
    let source: Option<Vec<ModeCoeffs>> = match &radial_source {
        Some(rs) => Some(rs.iter().map(|v| ModeCoeffs::single(&model, case.mode, v)).collect::<Result<_>>()?),
        None => None,
    };
    let traj = solve_forward(&model, &phi0, source.as_deref())?;
    let eta = build_eta(case.alpha, case.a, case.b)?;
    let s0 = s0_default(1.0);
    let weights = build_carleman_weights(&eta, &model.grid, 1.0, s0)?;
    let s_list: Vec<f64> = s_factors.iter().map(|f| f * s0).collect();
    carleman_report(&model.grid, &grid, traj.mode(case.mode), radial_source.as_deref(), &weights, &s_list)
}

/// Model of the control desk case: α = 0.5, T = 1, n_theta_max = 4, default grids.
pub fn desk_model_config() -> ModelConfig {
    ModelConfig::new(0.5, 1.0)
}

pub fn desk_region() -> ControlRegion {
    ControlRegion::Cylinder { a: 0.3, b: 0.6 }
}

/// φ⁰ = g_{1,1}Φ_1 + g_{2,2}Φ_3.
pub fn hum_desk_datum() -> InitialDatum {
    InitialDatum::Eigen {
        terms: vec![
            EigenTerm::new(Parity::Cos, 1, 1, 1.0),
            EigenTerm::new(Parity::Sin, 2, 3, 1.0),
        ],
    }
}

/// A datum supported on angular frequencies n ≤ 1.
pub fn lr_desk_datum() -> InitialDatum {
    InitialDatum::Eigen {
        terms: vec![
            EigenTerm::new(Parity::Cos, 0, 1, 1.0),
            EigenTerm::new(Parity::Cos, 1, 1, 0.5),
            EigenTerm::new(Parity::Sin, 1, 2, -0.25),
        ],
    }
}

/// Two disjoint boxes in 𝕋 × (0.3, 0.6) × (0, 1).
pub fn measurable_desk_boxes() -> Vec<ControlBox> {
    vec![
        ControlBox { theta: (0.0, 2.0), r: (0.3, 0.45), t: (0.0, 0.6) },
        ControlBox { theta: (3.0, 5.0), r: (0.45, 0.6), t: (0.4, 1.0) },
    ]
}

pub fn measurable_desk_set() -> Result<BoxUnionSet> {
    BoxUnionSet::new(measurable_desk_boxes(), (0.3, 0.6), 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn initial_data_build() {
        let m = build_model(ModelConfig::new(0.5, 1.0).with_sizes(4, 60, 10)).unwrap();
        let c = hum_desk_datum().build(&m, 0).unwrap();
        assert!((m.norm(&c) - 2f64.sqrt()).abs() < 1e-10);
        let r = InitialDatum::Random { radial_modes: 5 }.build(&m, 3).unwrap();
        assert!((m.norm(&r) - 1.0).abs() < 1e-12);
        assert_eq!(r, InitialDatum::Random { radial_modes: 5 }.build(&m, 3).unwrap());
        let bad = InitialDatum::Eigen { terms: vec![EigenTerm::new(Parity::Cos, 9, 1, 1.0)] };
        assert!(bad.build(&m, 0).is_err());
        let json = r#"{"type":"eigen","terms":[{"parity":"sin","n":2,"k":3}]}"#;
        let d: InitialDatum = serde_json::from_str(json).unwrap();
        assert_eq!(d, InitialDatum::Eigen { terms: vec![EigenTerm::new(Parity::Sin, 2, 3, 1.0)] });
    }

    #[test]
    fn carleman_family_is_finite() {
        for case in carleman_family() {
            let rows = run_carleman_case(&case, 100, 100, &[1.0]).unwrap();
            for r in rows {
                assert!(r.ratio.is_finite() && r.ratio > 0.0, "{}: {r:?}", case.name);
                assert!(r.lhs_grad >= 0.0 && r.rhs_obs > 0.0);
            }
        }
    }
}
