//! Null-control synthesis: control Gramian, penalized HUM, dyadic block
//! (Lebeau–Robbiano style) control, and L∞ reporting.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::{evolve_mode, solve_adjoint_on, solve_forward_on, TimeGrid};
use crate::linalg::Mat;
use crate::model::{project_modes, synthesize_field, Model, ModeCoeffs, ModeIndex};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlBox {
    pub theta: (f64, f64),
    pub r: (f64, f64),
    pub t: (f64, f64),
}

impl ControlBox {
    fn contains(&self, theta: f64, r: f64, t: f64) -> bool {
        let (c, d) = self.theta;
        let shifted = c + (theta - c).rem_euclid(TWO_PI);
        let in_theta = (d - c) >= TWO_PI || shifted <= d;
        in_theta && r >= self.r.0 && r <= self.r.1 && t >= self.t.0 && t <= self.t.1
    }
}

/// Where the control acts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ControlRegion {
    /// 𝕋 × (a,b) × (0,T).
    Cylinder { a: f64, b: f64 },
    /// Union of θ × r × t boxes; overlaps count once.
    BoxUnion { boxes: Vec<ControlBox> },
}

impl ControlRegion {
    pub fn cylinder(a: f64, b: f64) -> Result<Self> {
        let region = ControlRegion::Cylinder { a, b };
        region.validate(f64::INFINITY)?;
        Ok(region)
    }

    pub fn validate(&self, t_horizon: f64) -> Result<()> {
        let interval = |what: &str, (lo, hi): (f64, f64), min: f64, max: f64| {
            if lo.is_finite() && hi.is_finite() && lo < hi && lo >= min && hi <= max {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!(
                    "{what} interval ({lo}, {hi}) must be non-empty inside [{min}, {max}]"
                )))
            }
        };
        match self {
            ControlRegion::Cylinder { a, b } => interval("radial", (*a, *b), 0.0, 1.0),
            ControlRegion::BoxUnion { boxes } => {
                if boxes.is_empty() {
                    return Err(Error::EmptySet("control region has no boxes".into()));
                }
                for bx in boxes {
                    interval("radial", bx.r, 0.0, 1.0)?;
                    interval("time", bx.t, 0.0, t_horizon)?;
                    let (c, d) = bx.theta;
                    if !(c.is_finite() && d.is_finite() && c < d && d - c <= TWO_PI) {
                        return Err(Error::InvalidArgument(format!(
                            "angular interval ({c}, {d}) must be non-empty with length at most 2π"
                        )));
                    }
                }
                Ok(())
            }
        }
    }

    pub fn contains(&self, theta: f64, r: f64, t: f64) -> bool {
        match self {
            ControlRegion::Cylinder { a, b } => r >= *a && r <= *b,
            ControlRegion::BoxUnion { boxes } => boxes.iter().any(|bx| bx.contains(theta, r, t)),
        }
    }

    /// Space-time measure of the region on the model's grid (half-step times).
    pub fn measure(&self, model: &Model, grid: &TimeGrid) -> f64 {
        let w = model.theta_weight();
        let mut total = 0.0;
        for t in grid.half_times() {
            for (&r, &m) in model.grid.interior().iter().zip(&model.grid.mass) {
                for &th in &model.theta {
                    if self.contains(th, r, t) {
                        total += w * m * grid.dt();
                    }
                }
            }
        }
        total
    }

    fn radial_mask(&self, model: &Model) -> Option<Vec<f64>> {
        match self {
            ControlRegion::Cylinder { a, b } => Some(
                model
                    .grid
                    .interior()
                    .iter()
                    .map(|&r| if r >= *a && r <= *b { 1.0 } else { 0.0 })
                    .collect(),
            ),
            ControlRegion::BoxUnion { .. } => None,
        }
    }
}

/// χ_D applied to a coefficient set at time t.
fn apply_mask(model: &Model, region: &ControlRegion, t: f64, c: &ModeCoeffs) -> Result<ModeCoeffs> {
    if let Some(mask) = region.radial_mask(model) {
        let mut out = c.clone();
        for row in out.data.iter_mut() {
            row.iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
        }
        return Ok(out);
    }
    let mut f = synthesize_field(model, c)?;
    for (j, &r) in model.grid.interior().iter().enumerate() {
        for (q, &th) in model.theta.iter().enumerate() {
            if !region.contains(th, r, t) {
                f.set(j, q, 0.0);
            }
        }
    }
    project_modes(model, &f)
}

/// Half-step controls f^k = χ_D (y^k + y^{k+1})/2 from an adjoint terminal datum.
pub fn control_from_adjoint(
    model: &Model,
    region: &ControlRegion,
    grid: &TimeGrid,
    y_t: &ModeCoeffs,
) -> Result<Vec<ModeCoeffs>> {
    let adj = solve_adjoint_on(model, grid, y_t)?;
    grid.half_times()
        .par_iter()
        .enumerate()
        .map(|(k, &t)| apply_mask(model, region, t, &adj.half_step_state(k)))
        .collect()
}

/// G yᵀ: adjoint backward from yᵀ, mask by χ_D, forward from zero; returns φ(T).
pub fn apply_control_gramian_on(
    model: &Model,
    region: &ControlRegion,
    grid: &TimeGrid,
    y_t: &ModeCoeffs,
) -> Result<ModeCoeffs> {
    y_t.check(model)?;
    region.validate(grid.t_end())?;
    if let Some(mask) = region.radial_mask(model) {
        // modes decouple: one adjoint and one forward sweep per mode
        let op = model.operator();
        let data = model
            .modes
            .par_iter()
            .enumerate()
            .map(|(p, &mode)| {
                let y = &y_t.data[p];
                if y.iter().all(|&v| v == 0.0) {
                    return Ok(vec![0.0; y.len()]);
                }
                let mut adj = evolve_mode(mode, y, None, grid, op)?.states;
                adj.reverse();
                let src: Vec<Vec<f64>> = adj
                    .windows(2)
                    .map(|w| {
                        w[0].iter()
                            .zip(&w[1])
                            .zip(&mask)
                            .map(|((a, b), m)| 0.5 * (a + b) * m)
                            .collect()
                    })
                    .collect();
                let zero = vec![0.0; y.len()];
                let fwd = evolve_mode(mode, &zero, Some(&src), grid, op)?;
                Ok(fwd.states.last().cloned().unwrap_or(zero))
            })
            .collect::<Result<Vec<_>>>()?;
        return Ok(ModeCoeffs {
            n_theta_max: y_t.n_theta_max,
            n_radial: y_t.n_radial,
            data,
        });
    }
    let src = control_from_adjoint(model, region, grid, y_t)?;
    Ok(solve_forward_on(model, grid, &ModeCoeffs::zeros(model), Some(&src))?.terminal())
}

pub fn apply_control_gramian(model: &Model, region: &ControlRegion, y_t: &ModeCoeffs) -> Result<ModeCoeffs> {
    apply_control_gramian_on(model, region, &model.time_grid(), y_t)
}

/// Dense Gramian of a single mode for a cylinder region, in nodal coordinates
/// (column j = G e_j). Used as a direct-solve reference.
pub fn dense_mode_gramian(model: &Model, region: &ControlRegion, mode: ModeIndex) -> Result<Mat> {
    if region.radial_mask(model).is_none() {
        return Err(Error::InvalidArgument("dense mode Gramian needs a cylinder region".into()));
    }
    let n = model.grid.n_interior();
    let p = mode.position(model.config.n_theta_max);
    let cols = (0..n)
        .into_par_iter()
        .map(|j| {
            let mut e = ModeCoeffs::zeros(model);
            e.data[p][j] = 1.0;
            apply_control_gramian(model, region, &e).map(|g| g.data[p].clone())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Mat::from_fn(n, |i, j| cols[j][i]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HumOptions {
    pub epsilon: f64,
    pub cg_tol: f64,
    pub max_iter: usize,
}

impl Default for HumOptions {
    fn default() -> Self {
        Self {
            epsilon: 1e-6,
            cg_tol: 1e-8,
            max_iter: 500,
        }
    }
}

impl HumOptions {
    fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidArgument(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.cg_tol > 0.0) || self.max_iter == 0 {
            return Err(Error::InvalidArgument("cg_tol and max_iter must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct HumResult {
    pub y_terminal: ModeCoeffs,
    /// Control at each half step.
    pub control: Vec<ModeCoeffs>,
    pub time: TimeGrid,
    pub terminal_state: ModeCoeffs,
    /// ‖φ(T; f)‖.
    pub terminal_residual: f64,
    pub phi0_norm: f64,
    pub epsilon: f64,
    pub iterations: usize,
    /// Solver residual ‖b − (G+ε)y‖ / ‖φ⁰‖, one entry per iteration (entry 0 is the start).
    pub residual_history: Vec<f64>,
    pub converged: bool,
    /// ‖φ(T;f) + ε yᵀ‖ / ‖φ⁰‖.
    pub identity_defect: f64,
    /// ∬_D f².
    pub cost: f64,
    /// max |f| over the space-time grid.
    pub linf_control: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct HumSummary {
    pub residual: f64,
    pub relative_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub cost: f64,
    pub linf_ratio: Option<f64>,
    pub epsilon: f64,
    pub identity_defect: f64,
}

impl HumResult {
    pub fn summary(&self) -> HumSummary {
        HumSummary {
            residual: self.terminal_residual,
            relative_residual: if self.phi0_norm > 0.0 {
                self.terminal_residual / self.phi0_norm
            } else {
                0.0
            },
            iterations: self.iterations,
            converged: self.converged,
            cost: self.cost,
            linf_ratio: linf_ratio(self).ok(),
            epsilon: self.epsilon,
            identity_defect: self.identity_defect,
        }
    }
}

/// ‖f‖_∞ / ‖φ⁰‖ for a converged result.
pub fn linf_ratio(result: &HumResult) -> Result<f64> {
    if result.phi0_norm == 0.0 {
        return Err(Error::InvalidArgument("zero initial datum: L∞ ratio undefined".into()));
    }
    if !result.converged {
        return Err(Error::NonConvergence {
            what: "penalized HUM",
            index: result.iterations,
        });
    }
    Ok(result.linf_control / result.phi0_norm)
}

fn restrict(c: &mut ModeCoeffs, active: &[bool]) {
    for (row, &on) in c.data.iter_mut().zip(active) {
        if !on {
            row.iter_mut().for_each(|v| *v = 0.0);
        }
    }
}

/// Penalized HUM on an explicit grid, optionally restricted to a subset of
/// modes (the rest evolve freely and do not count towards the residual).
pub fn hum_control_on(
    model: &Model,
    grid: &TimeGrid,
    phi0: &ModeCoeffs,
    region: &ControlRegion,
    opts: &HumOptions,
    active: Option<&[bool]>,
) -> Result<HumResult> {
    opts.validate()?;
    phi0.check(model)?;
    region.validate(grid.t_end())?;
    let all = vec![true; model.n_modes()];
    let active = active.unwrap_or(&all);
    if active.len() != model.n_modes() {
        return Err(Error::DimensionMismatch {
            what: "active mode mask",
            expected: model.n_modes(),
            got: active.len(),
        });
    }
    let mut phi0_act = phi0.clone();
    restrict(&mut phi0_act, active);
    let phi0_norm = model.norm(&phi0_act);
    let free = solve_forward_on(model, grid, &phi0_act, None)?.terminal();

    let eps = opts.epsilon;
    let apply = |x: &ModeCoeffs| -> Result<ModeCoeffs> {
        let mut g = apply_control_gramian_on(model, region, grid, x)?;
        restrict(&mut g, active);
        g.axpy(eps, x);
        Ok(g)
    };

    // conjugate residual on (G + εI) y = −S_T φ⁰
    let mut y = ModeCoeffs::zeros(model);
    let mut r = free.clone();
    r.scale(-1.0);
    let scale = if phi0_norm > 0.0 { phi0_norm } else { 1.0 };
    let mut history = vec![model.norm(&r) / scale];
    let mut iterations = 0;
    let mut converged = history[0] <= opts.cg_tol;
    if !converged {
        let mut ar = apply(&r)?;
        let mut p = r.clone();
        let mut ap = ar.clone();
        let mut rar = model.inner(&r, &ar);
        while iterations < opts.max_iter {
            let apap = model.inner(&ap, &ap);
            if !(apap > 0.0) {
                break;
            }
            let a = rar / apap;
            y.axpy(a, &p);
            r.axpy(-a, &ap);
            iterations += 1;
            let rel = model.norm(&r) / scale;
            history.push(rel);
            if rel <= opts.cg_tol {
                converged = true;
                break;
            }
            if iterations >= 10 {
                let old = history[iterations - 10];
                if old - rel < 1e-14 * old {
                    break;
                }
            }
            ar = apply(&r)?;
            let rar_new = model.inner(&r, &ar);
            let beta = rar_new / rar;
            rar = rar_new;
            p.scale(beta);
            p.axpy(1.0, &r);
            ap.scale(beta);
            ap.axpy(1.0, &ar);
        }
    }

    let control = control_from_adjoint(model, region, grid, &y)?;
    let traj = solve_forward_on(model, grid, &phi0_act, Some(&control))?;
    let terminal_state = traj.terminal();
    let terminal_residual = model.norm(&terminal_state);
    let mut defect = terminal_state.clone();
    defect.axpy(eps, &y);
    let identity_defect = model.norm(&defect) / scale;
    let cost = grid.dt() * control.iter().map(|f| model.inner(f, f)).sum::<f64>();
    let linf_control = control
        .iter()
        .map(|f| synthesize_field(model, f).map(|s| s.max_abs()))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    Ok(HumResult {
        y_terminal: y,
        control,
        time: grid.clone(),
        terminal_state,
        terminal_residual,
        phi0_norm,
        epsilon: eps,
        iterations,
        residual_history: history,
        converged,
        identity_defect,
        cost,
        linf_control,
    })
}

pub fn hum_control(
    model: &Model,
    phi0: &ModeCoeffs,
    region: &ControlRegion,
    opts: &HumOptions,
) -> Result<HumResult> {
    hum_control_on(model, &model.time_grid(), phi0, region, opts, None)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LrOptions {
    pub blocks: usize,
    pub tol: f64,
    /// Starting penalty; divided by 100 until the block budget is met.
    pub epsilon: f64,
    pub min_epsilon: f64,
    pub cg_tol: f64,
    pub max_iter: usize,
}

impl Default for LrOptions {
    fn default() -> Self {
        Self {
            blocks: 3,
            tol: 1e-3,
            epsilon: 1e-6,
            min_epsilon: 1e-12,
            cg_tol: 1e-10,
            max_iter: 500,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LrBlock {
    pub k: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub j: u32,
    pub n_cap: usize,
    pub epsilon: f64,
    pub iterations: usize,
    pub cost: f64,
    /// Relative norm of the controlled modes after the active half.
    pub low_mode_residual: f64,
    pub budget: f64,
    pub budget_met: bool,
    /// ‖φ(t_end)‖ / ‖φ⁰‖.
    pub norm_at_end: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LrResult {
    pub blocks: Vec<LrBlock>,
    /// T_0 = 0, T_1, ..., T_K, then T.
    pub boundaries: Vec<f64>,
    pub final_residual: f64,
    pub tol: f64,
    pub converged: bool,
}

fn steps_for(duration: f64, dt: f64) -> usize {
    ((duration / dt).round() as usize).max(4)
}

/// Dyadic block control: block k covers [T(1−2^{−k}), T(1−2^{−k−1})]; its
/// first half steers angular modes n ≤ 2^k, its second half is free decay.
/// After the last block the state decays freely up to T.
pub fn lr_control(model: &Model, phi0: &ModeCoeffs, region: &ControlRegion, opts: &LrOptions) -> Result<LrResult> {
    if !matches!(region, ControlRegion::Cylinder { .. }) {
        return Err(Error::InvalidArgument("block control needs a cylinder region".into()));
    }
    if !(opts.tol > 0.0) || opts.blocks == 0 {
        return Err(Error::InvalidArgument("tol and blocks must be positive".into()));
    }
    phi0.check(model)?;
    let t_h = model.config.t_horizon;
    let dt = model.time_grid().dt();
    let norm0 = model.norm(phi0);
    let scale = if norm0 > 0.0 { norm0 } else { 1.0 };
    let mut state = phi0.clone();
    let mut blocks = Vec::with_capacity(opts.blocks);
    let mut boundaries = vec![0.0];

    for k in 0..opts.blocks {
        let t0 = t_h * (1.0 - 0.5f64.powi(k as i32));
        let t1 = t_h * (1.0 - 0.5f64.powi(k as i32 + 1));
        let tm = 0.5 * (t0 + t1);
        let n_cap = (1usize << k).min(model.config.n_theta_max);
        let active: Vec<bool> = model.modes.iter().map(|m| m.n <= n_cap).collect();
        let budget = 0.5 * opts.tol * 0.5f64.powi(k as i32);
        let grid = TimeGrid::starting_at(t0, tm - t0, steps_for(tm - t0, dt))?;

        let mut eps = opts.epsilon;
        let (hum, low) = loop {
            let hum_opts = HumOptions {
                epsilon: eps,
                cg_tol: opts.cg_tol,
                max_iter: opts.max_iter,
            };
            let hum = hum_control_on(model, &grid, &state, region, &hum_opts, Some(&active))?;
            let low = hum.terminal_residual / scale;
            if low <= budget || eps / 100.0 < opts.min_epsilon {
                break (hum, low);
            }
            eps /= 100.0;
        };
        // active half: controlled low modes, free high modes
        let traj = solve_forward_on(model, &grid, &state, Some(&hum.control))?;
        state = traj.terminal();
        let rest = TimeGrid::starting_at(tm, t1 - tm, steps_for(t1 - tm, dt))?;
        state = solve_forward_on(model, &rest, &state, None)?.terminal();
        let norm_at_end = model.norm(&state) / scale;
        blocks.push(LrBlock {
            k,
            t_start: t0,
            t_end: t1,
            j: k as u32,
            n_cap,
            epsilon: eps,
            iterations: hum.iterations,
            cost: hum.cost,
            low_mode_residual: low,
            budget,
            budget_met: low <= budget,
            norm_at_end,
        });
        boundaries.push(t1);
    }
    let t_last = *boundaries.last().unwrap_or(&0.0);
    if t_h - t_last > 1e-12 * t_h {
        let tail = TimeGrid::starting_at(t_last, t_h - t_last, steps_for(t_h - t_last, dt))?;
        state = solve_forward_on(model, &tail, &state, None)?.terminal();
        boundaries.push(t_h);
    }
    let final_residual = model.norm(&state) / scale;
    Ok(LrResult {
        blocks,
        boundaries,
        final_residual,
        tol: opts.tol,
        converged: final_residual <= opts.tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::lu_solve;
    use crate::model::{build_model, ModelConfig};

    fn model(n_r: usize, n_time: usize) -> Model {
        build_model(ModelConfig::new(0.5, 1.0).with_sizes(2, n_r, n_time)).unwrap()
    }

    fn seeded(m: &Model, seed: usize) -> ModeCoeffs {
        let mut c = ModeCoeffs::zeros(m);
        for (p, row) in c.data.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (((p + 3) * 7919 + j * 104729 + seed * 31) as f64).sin();
            }
        }
        c
    }

    #[test]
    fn gramian_of_zero() {
        let m = model(30, 20);
        let d = ControlRegion::cylinder(0.3, 0.6).unwrap();
        let g = apply_control_gramian(&m, &d, &ModeCoeffs::zeros(&m)).unwrap();
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn gramian_is_symmetric_psd() {
        let m = model(30, 20);
        let regions = [
            ControlRegion::cylinder(0.3, 0.6).unwrap(),
            ControlRegion::BoxUnion {
                boxes: vec![
                    ControlBox { theta: (0.0, 2.0), r: (0.2, 0.7), t: (0.1, 0.8) },
                    ControlBox { theta: (1.5, 4.0), r: (0.5, 0.9), t: (0.0, 0.5) },
                ],
            },
        ];
        for d in &regions {
            let (x, z) = (seeded(&m, 1), seeded(&m, 2));
            let gx = apply_control_gramian(&m, d, &x).unwrap();
            let gz = apply_control_gramian(&m, d, &z).unwrap();
            let (a, b) = (m.inner(&gx, &z), m.inner(&x, &gz));
            assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0), "{a} vs {b}");
            assert!(m.inner(&gx, &x) >= -1e-10);
        }
    }

    #[test]
    fn full_cylinder_eigenvalue() {
        let m = model(200, 400);
        let d = ControlRegion::cylinder(0.0, 1.0).unwrap();
        let spec = m.radial_spectrum();
        let mode = ModeIndex::sin(2);
        let y = ModeCoeffs::single(&m, mode, &spec.vectors[0]).unwrap();
        let g = apply_control_gramian(&m, &d, &y).unwrap();
        let mu = spec.values[0] + 4.0;
        let want = (1.0 - (-2.0 * mu).exp()) / (2.0 * mu);
        let got = m.inner(&g, &y);
        assert!((got / want - 1.0).abs() < 1e-4, "{got} vs {want}");
    }

    #[test]
    fn zero_datum_gives_zero_control() {
        let m = model(30, 20);
        let d = ControlRegion::cylinder(0.3, 0.6).unwrap();
        let res = hum_control(&m, &ModeCoeffs::zeros(&m), &d, &HumOptions::default()).unwrap();
        assert_eq!(res.y_terminal.max_abs(), 0.0);
        assert_eq!(res.cost, 0.0);
        assert!(linf_ratio(&res).is_err());
    }

    #[test]
    fn hum_identity_and_dense_reference() {
        let m = model(40, 40);
        let d = ControlRegion::cylinder(0.3, 0.6).unwrap();
        let spec = m.radial_spectrum();
        let mut phi0 = ModeCoeffs::single(&m, ModeIndex::cos(1), &spec.vectors[0]).unwrap();
        phi0.axpy(1.0, &ModeCoeffs::single(&m, ModeIndex::sin(2), &spec.vectors[2]).unwrap());
        let opts = HumOptions { epsilon: 1e-4, cg_tol: 1e-13, max_iter: 500 };
        let res = hum_control(&m, &phi0, &d, &opts).unwrap();
        assert!(res.converged);
        assert!(res.identity_defect <= 10.0 * opts.cg_tol);
        assert!(res.residual_history.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
        let free = solve_forward_on(&m, &m.time_grid(), &phi0, None).unwrap().terminal();
        let mut dense = ModeCoeffs::zeros(&m);
        for mode in [ModeIndex::cos(1), ModeIndex::sin(2)] {
            let g = dense_mode_gramian(&m, &d, mode).unwrap();
            let a = Mat::from_fn(g.n, |i, j| g.get(i, j) + if i == j { opts.epsilon } else { 0.0 });
            let b: Vec<f64> = free.get(mode).iter().map(|v| -v).collect();
            dense.get_mut(mode).copy_from_slice(&lu_solve(&a, &b).unwrap());
        }
        let mut diff = res.y_terminal.clone();
        diff.axpy(-1.0, &dense);
        let rel = m.norm(&diff) / m.norm(&dense);
        assert!(rel <= 1e-6, "relative y error {rel}");
    }

    #[test]
    fn hum_is_linear() {
        let m = model(30, 20);
        let d = ControlRegion::cylinder(0.2, 0.7).unwrap();
        let phi0 = seeded(&m, 5);
        let opts = HumOptions { epsilon: 1e-3, cg_tol: 1e-12, max_iter: 500 };
        let r1 = hum_control(&m, &phi0, &d, &opts).unwrap();
        let mut doubled = phi0.clone();
        doubled.scale(2.0);
        let r2 = hum_control(&m, &doubled, &d, &opts).unwrap();
        let mut diff = r2.y_terminal.clone();
        diff.axpy(-2.0, &r1.y_terminal);
        assert!(m.norm(&diff) <= 1e-8 * m.norm(&r2.y_terminal));
        let (a, b) = (linf_ratio(&r1).unwrap(), linf_ratio(&r2).unwrap());
        assert!((a - b).abs() <= 1e-10 * a.max(1.0) * 100.0);
    }

    #[test]
    fn residual_grows_with_penalty() {
        let m = model(30, 20);
        let d = ControlRegion::cylinder(0.3, 0.6).unwrap();
        let phi0 = seeded(&m, 9);
        let res: Vec<f64> = [1e-8, 1e-6, 1e-4]
            .iter()
            .map(|&e| {
                let opts = HumOptions { epsilon: e, cg_tol: 1e-12, max_iter: 500 };
                hum_control(&m, &phi0, &d, &opts).unwrap().terminal_residual
            })
            .collect();
        assert!(res.windows(2).all(|w| w[0] <= w[1]), "{res:?}");
    }

    #[test]
    fn block_control_zero_and_rejects_boxes() {
        let m = model(30, 40);
        let d = ControlRegion::cylinder(0.3, 0.6).unwrap();
        let r = lr_control(&m, &ModeCoeffs::zeros(&m), &d, &LrOptions::default()).unwrap();
        assert!(r.blocks.iter().all(|b| b.cost == 0.0));
        let boxes = ControlRegion::BoxUnion {
            boxes: vec![ControlBox { theta: (0.0, 1.0), r: (0.2, 0.4), t: (0.0, 1.0) }],
        };
        assert!(lr_control(&m, &ModeCoeffs::zeros(&m), &boxes, &LrOptions::default()).is_err());
    }

    #[test]
    fn region_validation() {
        assert!(ControlRegion::cylinder(0.6, 0.3).is_err());
        let empty = ControlRegion::BoxUnion { boxes: vec![] };
        assert!(empty.validate(1.0).is_err());
        let wrap = ControlBox { theta: (5.0, 7.0), r: (0.0, 1.0), t: (0.0, 1.0) };
        assert!(wrap.contains(0.5, 0.5, 0.5));
        assert!(!wrap.contains(3.0, 0.5, 0.5));
    }
}
