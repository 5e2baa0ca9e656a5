//! Crank–Nicolson time stepping, mode by mode, for the forward problem and
//! the time-reversed adjoint problem.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::SpdTridiagFactor;
use crate::model::{mass_dot, Field2D, Model, ModeCoeffs, ModeIndex, Parity};
use crate::radial::RadialOperator;

/// Uniform time grid on [t_start, t_start + duration].
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    pub t_start: f64,
    pub duration: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(duration: f64, n_steps: usize) -> Result<Self> {
        Self::starting_at(0.0, duration, n_steps)
    }

    pub fn starting_at(t_start: f64, duration: f64, n_steps: usize) -> Result<Self> {
        if !(duration > 0.0 && duration.is_finite()) || n_steps == 0 {
            return Err(Error::InvalidArgument(format!(
                "time grid needs positive duration and steps, got {duration} / {n_steps}"
            )));
        }
        Ok(Self {
            t_start,
            duration,
            n_steps,
        })
    }

    pub fn dt(&self) -> f64 {
        self.duration / self.n_steps as f64
    }

    pub fn t(&self, k: usize) -> f64 {
        self.t_start + self.duration * k as f64 / self.n_steps as f64
    }

    pub fn t_end(&self) -> f64 {
        self.t_start + self.duration
    }

    /// Node times t_0..t_N.
    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|k| self.t(k)).collect()
    }

    /// Half-step times t_{k+1/2}, where sources are sampled.
    pub fn half_times(&self) -> Vec<f64> {
        (0..self.n_steps)
            .map(|k| self.t_start + self.duration * (k as f64 + 0.5) / self.n_steps as f64)
            .collect()
    }
}

/// Radial states of one Fourier mode at every time node.
#[derive(Debug, Clone)]
pub struct ModeTrajectory {
    pub mode: ModeIndex,
    pub states: Vec<Vec<f64>>,
}

/// One CN step operator for a fixed (n, dt).
#[derive(Debug, Clone)]
pub struct CnStepper {
    factor: SpdTridiagFactor,
    /// M − dt/2 K_n as (diag, off).
    rhs_diag: Vec<f64>,
    rhs_off: Vec<f64>,
    mass: Vec<f64>,
    dt: f64,
}

impl CnStepper {
    pub fn new(op: &RadialOperator, n: usize, dt: f64) -> Result<Self> {
        let n2 = (n * n) as f64;
        let h = 0.5 * dt;
        let lhs_diag: Vec<f64> = op
            .stiff_diag
            .iter()
            .zip(&op.mass)
            .map(|(s, m)| m + h * (s + n2 * m))
            .collect();
        let lhs_off: Vec<f64> = op.stiff_off.iter().map(|s| h * s).collect();
        let rhs_diag = op
            .stiff_diag
            .iter()
            .zip(&op.mass)
            .map(|(s, m)| m - h * (s + n2 * m))
            .collect();
        let rhs_off = op.stiff_off.iter().map(|s| -h * s).collect();
        Ok(Self {
            factor: SpdTridiagFactor::factor(&lhs_diag, &lhs_off)?,
            rhs_diag,
            rhs_off,
            mass: op.mass.clone(),
            dt,
        })
    }

    /// v ← one step from v with half-step source `s`.
    pub fn step(&self, v: &[f64], source: Option<&[f64]>) -> Vec<f64> {
        let n = v.len();
        let mut b: Vec<f64> = self.rhs_diag.iter().zip(v).map(|(d, x)| d * x).collect();
        for j in 0..n.saturating_sub(1) {
            b[j] += self.rhs_off[j] * v[j + 1];
            b[j + 1] += self.rhs_off[j] * v[j];
        }
        if let Some(s) = source {
            for ((bj, m), sj) in b.iter_mut().zip(&self.mass).zip(s) {
                *bj += self.dt * m * sj;
            }
        }
        self.factor.solve_in_place(&mut b);
        b
    }
}

/// Crank–Nicolson integration of ∂ₜv + (A + n²)v = s for one mode. `source`,
/// when present, holds one radial vector per step (sampled at t_{k+1/2}).
pub fn evolve_mode(
    mode: ModeIndex,
    phi0: &[f64],
    source: Option<&[Vec<f64>]>,
    grid: &TimeGrid,
    op: &RadialOperator,
) -> Result<ModeTrajectory> {
    if phi0.len() != op.n() {
        return Err(Error::DimensionMismatch {
            what: "initial radial vector",
            expected: op.n(),
            got: phi0.len(),
        });
    }
    if let Some(s) = source {
        if s.len() != grid.n_steps {
            return Err(Error::DimensionMismatch {
                what: "source time samples",
                expected: grid.n_steps,
                got: s.len(),
            });
        }
        if let Some(bad) = s.iter().find(|v| v.len() != op.n()) {
            return Err(Error::DimensionMismatch {
                what: "source radial vector",
                expected: op.n(),
                got: bad.len(),
            });
        }
    }
    let stepper = CnStepper::new(op, mode.n, grid.dt())?;
    let mut states = Vec::with_capacity(grid.n_steps + 1);
    states.push(phi0.to_vec());
    for k in 0..grid.n_steps {
        let next = stepper.step(&states[k], source.map(|s| s[k].as_slice()));
        states.push(next);
    }
    Ok(ModeTrajectory { mode, states })
}

/// Space-time solution stored per mode.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub time: TimeGrid,
    pub n_theta_max: usize,
    pub modes: Vec<ModeTrajectory>,
}

impl Trajectory {
    pub fn n_steps(&self) -> usize {
        self.time.n_steps
    }

    pub fn state(&self, k: usize) -> ModeCoeffs {
        ModeCoeffs {
            n_theta_max: self.n_theta_max,
            n_radial: self.modes[0].states[0].len(),
            data: self.modes.iter().map(|m| m.states[k].clone()).collect(),
        }
    }

    pub fn initial(&self) -> ModeCoeffs {
        self.state(0)
    }

    pub fn terminal(&self) -> ModeCoeffs {
        self.state(self.time.n_steps)
    }

    /// Average of the states at t_k and t_{k+1}.
    pub fn half_step_state(&self, k: usize) -> ModeCoeffs {
        let mut c = self.state(k);
        for (row, m) in c.data.iter_mut().zip(&self.modes) {
            for (x, y) in row.iter_mut().zip(&m.states[k + 1]) {
                *x = 0.5 * (*x + y);
            }
        }
        c
    }

    pub fn mode(&self, mode: ModeIndex) -> &ModeTrajectory {
        &self.modes[mode.position(self.n_theta_max)]
    }

    /// Discrete L²(Ω) norm at every time node.
    pub fn l2_norms(&self, model: &Model) -> Vec<f64> {
        (0..=self.time.n_steps)
            .map(|k| {
                self.modes
                    .iter()
                    .map(|m| mass_dot(&model.grid.mass, &m.states[k], &m.states[k]))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect()
    }
}

fn check_sources(model: &Model, grid: &TimeGrid, source: Option<&[ModeCoeffs]>) -> Result<()> {
    if let Some(s) = source {
        if s.len() != grid.n_steps {
            return Err(Error::DimensionMismatch {
                what: "source time samples",
                expected: grid.n_steps,
                got: s.len(),
            });
        }
        for c in s {
            c.check(model)?;
        }
    }
    Ok(())
}

/// Forward solve on an explicit time grid with half-step mode sources.
pub fn solve_forward_on(
    model: &Model,
    grid: &TimeGrid,
    phi0: &ModeCoeffs,
    source: Option<&[ModeCoeffs]>,
) -> Result<Trajectory> {
    phi0.check(model)?;
    check_sources(model, grid, source)?;
    let op = model.operator();
    let modes = model
        .modes
        .par_iter()
        .enumerate()
        .map(|(p, &mode)| {
            let src: Option<Vec<Vec<f64>>> =
                source.map(|s| s.iter().map(|c| c.data[p].clone()).collect());
            evolve_mode(mode, &phi0.data[p], src.as_deref(), grid, op)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Trajectory {
        time: grid.clone(),
        n_theta_max: model.config.n_theta_max,
        modes,
    })
}

/// Forward solve over the model horizon with half-step mode sources.
pub fn solve_forward(
    model: &Model,
    phi0: &ModeCoeffs,
    source: Option<&[ModeCoeffs]>,
) -> Result<Trajectory> {
    solve_forward_on(model, &model.time_grid(), phi0, source)
}

/// Forward solve from grid samples: the initial field and the masked control
/// fields (one per half step) are projected onto the modes first.
pub fn solve_forward_fields(model: &Model, phi0: &Field2D, control: &[Field2D]) -> Result<Trajectory> {
    let c0 = crate::model::project_modes(model, phi0)?;
    let src = control
        .iter()
        .map(|f| crate::model::project_modes(model, f))
        .collect::<Result<Vec<_>>>()?;
    solve_forward(model, &c0, if src.is_empty() { None } else { Some(&src) })
}

/// Adjoint solve on an explicit grid: the returned trajectory is indexed by
/// physical time, so state `k` is y(t_k) and the last state equals `y_t`.
pub fn solve_adjoint_on(model: &Model, grid: &TimeGrid, y_t: &ModeCoeffs) -> Result<Trajectory> {
    let mut tr = solve_forward_on(model, grid, y_t, None)?;
    for m in tr.modes.iter_mut() {
        m.states.reverse();
    }
    Ok(tr)
}

pub fn solve_adjoint(model: &Model, y_t: &ModeCoeffs) -> Result<Trajectory> {
    solve_adjoint_on(model, &model.time_grid(), y_t)
}

/// One 2D eigenvalue λ_{2,k} + n² with its labels (k is 1-based).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectrumEntry {
    pub parity: Parity,
    pub n: usize,
    pub k: usize,
    pub lambda: f64,
}

/// All eigenvalues λ_{2,k} + n² ≤ bound over admissible modes, ascending;
/// ties ordered by (n, k), then parity.
pub fn full_spectrum(model: &Model, bound: f64) -> Result<Vec<SpectrumEntry>> {
    if !(bound > 0.0) {
        return Err(Error::InvalidArgument(format!("bound must be positive, got {bound}")));
    }
    let spec = model.radial_spectrum();
    let mut out = Vec::new();
    for mode in &model.modes {
        let n2 = (mode.n * mode.n) as f64;
        for (k, lam) in spec.values.iter().enumerate() {
            let l = lam + n2;
            if l > bound {
                break;
            }
            out.push(SpectrumEntry {
                parity: mode.parity,
                n: mode.n,
                k: k + 1,
                lambda: l,
            });
        }
    }
    out.sort_by(|a, b| {
        a.lambda
            .total_cmp(&b.lambda)
            .then(a.n.cmp(&b.n))
            .then(a.k.cmp(&b.k))
            .then(a.parity.cmp(&b.parity))
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_model, ModelConfig};

    fn model(n_r: usize, n_time: usize) -> Model {
        build_model(ModelConfig::new(0.5, 1.0).with_sizes(3, n_r, n_time)).unwrap()
    }

    #[test]
    fn zero_data_stays_zero() {
        let m = model(40, 20);
        let tr = solve_forward(&m, &ModeCoeffs::zeros(&m), None).unwrap();
        assert!(tr.l2_norms(&m).iter().all(|&v| v == 0.0));
        let adj = solve_adjoint(&m, &ModeCoeffs::zeros(&m)).unwrap();
        assert_eq!(adj.initial().max_abs(), 0.0);
    }

    #[test]
    fn eigenmode_decay_matches_scalar_recursion() {
        let m = model(200, 100);
        let spec = m.radial_spectrum();
        let mode = ModeIndex::cos(1);
        let phi0 = ModeCoeffs::single(&m, mode, &spec.vectors[0]).unwrap();
        let tr = solve_forward(&m, &phi0, None).unwrap();
        let mu = spec.values[0] + 1.0;
        let dt = m.time_grid().dt();
        let g = (1.0 - 0.5 * dt * mu) / (1.0 + 0.5 * dt * mu);
        let norms = tr.l2_norms(&m);
        for (k, v) in norms.iter().enumerate() {
            assert!((v - g.powi(k as i32)).abs() < 1e-10, "step {k}");
        }
        // half the horizon: ratio close to e^{-0.5 μ}
        assert!((norms[50] - (-0.5 * mu).exp()).abs() < 1e-3);
    }

    #[test]
    fn energy_never_increases() {
        let m = model(60, 30);
        let mut c = ModeCoeffs::zeros(&m);
        for (p, row) in c.data.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = ((p * 31 + j * 17) as f64).sin();
            }
        }
        let norms = solve_forward(&m, &c, None).unwrap().l2_norms(&m);
        assert!(norms.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn duality_with_source() {
        let m = model(50, 40);
        let fill = |seed: usize| {
            let mut c = ModeCoeffs::zeros(&m);
            for (p, row) in c.data.iter_mut().enumerate() {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = (((p + 3) * (j + seed) * 7919) as f64 * 1e-3).sin();
                }
            }
            c
        };
        let phi0 = fill(1);
        let y_t = fill(2);
        let src: Vec<ModeCoeffs> = (0..40)
            .map(|k| {
                let mut c = fill(k + 5);
                c.scale(0.3);
                c
            })
            .collect();
        let fwd = solve_forward(&m, &phi0, Some(&src)).unwrap();
        let adj = solve_adjoint(&m, &y_t).unwrap();
        let lhs = m.inner(&fwd.terminal(), &y_t);
        let dt = m.time_grid().dt();
        let mut rhs = m.inner(&phi0, &adj.initial());
        for (k, s) in src.iter().enumerate() {
            rhs += dt * m.inner(s, &adj.half_step_state(k));
        }
        assert!((lhs - rhs).abs() < 1e-9 * lhs.abs().max(1.0), "{lhs} vs {rhs}");
    }

    #[test]
    fn full_spectrum_ordering() {
        let m = model(200, 10);
        let lam = m.radial_spectrum().values.clone();
        let all = full_spectrum(&m, 60.0).unwrap();
        assert_eq!(all[0].n, 0);
        assert!((all[0].lambda - lam[0]).abs() < 1e-14);
        assert!((all[1].lambda - lam[1].min(lam[0] + 1.0)).abs() < 1e-12);
        assert!(all.windows(2).all(|w| w[0].lambda <= w[1].lambda));
        assert!(full_spectrum(&m, 0.5 * lam[0]).unwrap().is_empty());
        // cos/sin pairs with equal eigenvalue: cos first
        let pair: Vec<_> = all.iter().filter(|e| e.n == 1 && e.k == 1).collect();
        assert_eq!(pair.len(), 2);
        assert_eq!(pair[0].parity, Parity::Cos);
    }
}
