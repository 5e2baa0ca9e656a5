//! One function per CLI command: run the numerics, write artifacts, and
//! report whether the command's checks passed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::artifacts::{fmt_f, ArtifactWriter};
use super::config::{ConfigError, RunConfig};
use crate::bessel::bessel_oracle;
use crate::carleman::{build_carleman_weights, build_eta, carleman_report, s0_default, verify_theta_bounds};
use crate::control::{hum_control, lr_control, ControlBox, ControlRegion, HumOptions, LrOptions};
use crate::error::Error;
use crate::evolution::solve_forward;
use crate::intervals::IntervalSet;
use crate::measurable::{
    build_time_slices, density_sequence, derivative_bound_report, measurable_observability_ratio,
    observation_family, slab_interpolation_report, BoxUnionSet, MeasurableOptions, SlabOptions,
};
use crate::model::{build_model, synthesize_field, Field2D, Model};
use crate::radial::{hardy_ratio_labeled, radial_spectrum, spectral_gap_bound};
use crate::scenarios::{self, InitialDatum};
use crate::spectral_obs::{
    angular_gram_quadrature, mode_observability_constant, torus_smallest_gram_eigenvalue,
    truncated_observability,
};
use crate::linalg::jacobi_eigen;
use crate::model::mode_set;

/// How a command ended when no error was raised.
#[derive(Debug)]
pub enum Outcome {
    Passed,
    /// A check or invariant failed (exit 1).
    Failed(String),
    /// An iterative method stopped short of its tolerance (exit 3).
    NotConverged(String),
}

#[derive(Debug, thiserror::Error)]
pub enum CommandError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Numerics(#[from] Error),
    #[error("cannot write artifacts: {0}")]
    Io(#[from] std::io::Error),
}

impl CommandError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CommandError::Config(e) => e.exit_code(),
            CommandError::Io(_) => 4,
            CommandError::Numerics(e) => match e {
                Error::NonConvergence { .. } => 3,
                Error::AlphaOutOfRange(_)
                | Error::InvalidConfig(_)
                | Error::InvalidArgument(_)
                | Error::DimensionMismatch { .. }
                | Error::TooManyEigenpairs { .. }
                | Error::EmptySet(_) => 2,
                _ => 1,
            },
        }
    }
}

pub struct Context<'a> {
    pub config: &'a RunConfig,
    pub seed: u64,
    pub out: &'a mut ArtifactWriter,
    /// Resolved command options, echoed into the manifest.
    pub resolved: Value,
}

type CmdResult = Result<Outcome, CommandError>;

fn model(ctx: &Context) -> Result<Model, CommandError> {
    Ok(build_model(ctx.config.model.clone())?)
}

fn resolve<T: Serialize + for<'de> Deserialize<'de> + Default>(ctx: &mut Context, name: &str) -> Result<T, CommandError> {
    let opts: T = ctx.config.section(name)?;
    ctx.resolved = serde_json::to_value(&opts).unwrap_or(Value::Null);
    Ok(opts)
}

fn field_rows(model: &Model, f: &Field2D) -> (Vec<String>, Vec<Vec<String>>) {
    let mut header = vec!["r".to_string()];
    header.extend(model.theta.iter().map(|t| fmt_f(*t)));
    let rows = model
        .grid
        .interior()
        .iter()
        .enumerate()
        .map(|(j, r)| {
            let mut row = vec![fmt_f(*r)];
            row.extend((0..f.n_theta).map(|q| fmt_f(f.get(j, q))));
            row
        })
        .collect();
    (header, rows)
}

fn write_field(ctx: &mut Context, name: &str, model: &Model, f: &Field2D) -> std::io::Result<()> {
    let (header, rows) = field_rows(model, f);
    let h: Vec<&str> = header.iter().map(String::as_str).collect();
    ctx.out.csv(name, &h, &rows)
}

fn failures_to_outcome(failures: Vec<String>) -> Outcome {
    if failures.is_empty() {
        Outcome::Passed
    } else {
        Outcome::Failed(failures.join("; "))
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumOptions {
    pub k: usize,
    pub tol: f64,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        Self { k: 10, tol: 5e-3 }
    }
}

pub fn spectrum(ctx: &mut Context) -> CmdResult {
    let opts: SpectrumOptions = resolve(ctx, "spectrum")?;
    let m = model(ctx)?;
    let spec = radial_spectrum(m.operator(), opts.k)?;
    let oracle = bessel_oracle(m.config.alpha, opts.k)?;
    let mut failures = Vec::new();
    let rows: Vec<Vec<String>> = spec
        .values
        .iter()
        .zip(&oracle)
        .enumerate()
        .map(|(i, (d, b))| {
            let rel = (d - b).abs() / b;
            if !(rel < opts.tol) {
                failures.push(format!("k={} relative error {rel:.3e} >= {}", i + 1, opts.tol));
            }
            vec![(i + 1).to_string(), fmt_f(*d), fmt_f(*b), fmt_f(rel)]
        })
        .collect();
    ctx.out.csv("spectrum.csv", &["k", "lambda_discrete", "lambda_bessel", "rel_error"], &rows)?;
    let gap = spectral_gap_bound(m.config.alpha);
    if !(spec.values[0] > gap) {
        failures.push(format!("λ_1 = {} not above (1-α)²/4 = {gap}", spec.values[0]));
    }
    Ok(failures_to_outcome(failures))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HardyOptions {
    pub samples: usize,
    pub max_degree: usize,
}

impl Default for HardyOptions {
    fn default() -> Self {
        Self {
            samples: 1000,
            max_degree: 6,
        }
    }
}

/// Endpoint-vanishing random polynomials r(1−r)P(r).
pub fn hardy_samples(model: &Model, samples: usize, max_degree: usize, seed: u64) -> Vec<(usize, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..samples)
        .map(|_| {
            let d = rng.gen_range(0..=max_degree);
            let c: Vec<f64> = (0..=d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let u = model
                .grid
                .interior()
                .iter()
                .map(|&r| r * (1.0 - r) * c.iter().rev().fold(0.0, |acc, ci| acc * r + ci))
                .collect();
            (d, u)
        })
        .collect()
}

pub fn hardy(ctx: &mut Context) -> CmdResult {
    let opts: HardyOptions = resolve(ctx, "hardy")?;
    let m = model(ctx)?;
    let mut failures = Vec::new();
    let mut rows = Vec::new();
    for (i, (d, u)) in hardy_samples(&m, opts.samples, opts.max_degree, ctx.seed).into_iter().enumerate() {
        let rep = hardy_ratio_labeled(&format!("poly {i}"), &u, m.config.alpha, &m.grid)?;
        if rep.exceeds {
            failures.push(format!("sample {i}: ratio {} exceeds {}", rep.ratio, rep.constant));
        }
        rows.push(vec![
            i.to_string(),
            d.to_string(),
            fmt_f(rep.left),
            fmt_f(rep.right),
            fmt_f(rep.ratio),
            fmt_f(rep.constant),
            rep.exceeds.to_string(),
        ]);
    }
    ctx.out.csv("hardy.csv", &["index", "degree", "left", "right", "ratio", "constant", "exceeds"], &rows)?;
    Ok(failures_to_outcome(failures))
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveOptions {
    pub initial: InitialDatum,
    pub snapshots: Vec<f64>,
}

pub fn solve(ctx: &mut Context) -> CmdResult {
    let opts: SolveOptions = resolve(ctx, "solve")?;
    let m = model(ctx)?;
    let phi0 = opts.initial.build(&m, ctx.seed)?;
    let tr = solve_forward(&m, &phi0, None)?;
    let norms = tr.l2_norms(&m);
    let rows: Vec<Vec<String>> = tr.time.times().iter().zip(&norms).map(|(t, n)| vec![fmt_f(*t), fmt_f(*n)]).collect();
    ctx.out.csv("solve.csv", &["t", "l2_norm"], &rows)?;
    for (i, &t) in opts.snapshots.iter().enumerate() {
        if !(0.0..=m.config.t_horizon).contains(&t) {
            return Err(Error::InvalidArgument(format!("snapshot time {t} outside [0, T]")).into());
        }
        let k = (t / tr.time.dt()).round() as usize;
        let f = synthesize_field(&m, &tr.state(k.min(tr.n_steps())))?;
        write_field(ctx, &format!("snapshot_{i}.csv"), &m, &f)?;
    }
    let mut failures = Vec::new();
    if let Some(k) = norms.windows(2).position(|w| w[1] > w[0] * (1.0 + 1e-12)) {
        failures.push(format!("energy increased at step {}", k + 1));
    }
    Ok(failures_to_outcome(failures))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CarlemanOptions {
    pub a: f64,
    pub b: f64,
    pub s_factors: Vec<f64>,
    pub initial: InitialDatum,
}

impl Default for CarlemanOptions {
    fn default() -> Self {
        Self {
            a: 0.3,
            b: 0.6,
            s_factors: vec![1.0, 2.0, 4.0],
            initial: InitialDatum::default(),
        }
    }
}

pub fn carleman(ctx: &mut Context) -> CmdResult {
    let opts: CarlemanOptions = resolve(ctx, "carleman")?;
    let m = model(ctx)?;
    let t_h = m.config.t_horizon;
    let phi0 = opts.initial.build(&m, ctx.seed)?;
    let tr = solve_forward(&m, &phi0, None)?;
    let eta = build_eta(m.config.alpha, opts.a, opts.b)?;
    let s0 = s0_default(t_h);
    let weights = build_carleman_weights(&eta, &m.grid, t_h, s0)?;
    let s_list: Vec<f64> = opts.s_factors.iter().map(|f| f * s0).collect();
    let mut failures = Vec::new();
    let mut rows = Vec::new();
    for (p, mode) in m.modes.iter().enumerate() {
        if phi0.data[p].iter().all(|&v| v == 0.0) {
            continue;
        }
        for r in carleman_report(&m.grid, &tr.time, &tr.modes[p], None, &weights, &s_list)? {
            let vals = [r.lhs_grad, r.lhs_zero, r.rhs_f, r.rhs_obs];
            if vals.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || !r.ratio.is_finite() {
                failures.push(format!("non-finite or negative Carleman term for {mode} at s = {}", r.s));
            }
            rows.push(vec![
                fmt_f(r.s),
                r.mode_parity.to_string(),
                r.mode_n.to_string(),
                fmt_f(r.lhs_grad),
                fmt_f(r.lhs_zero),
                fmt_f(r.rhs_f),
                fmt_f(r.rhs_obs),
                fmt_f(r.ratio),
                fmt_f(r.log_scale),
                r.below_s0.to_string(),
            ]);
        }
    }
    ctx.out.csv(
        "carleman.csv",
        &["s", "mode_parity", "mode_n", "lhs_grad", "lhs_zero", "rhs_f", "rhs_obs", "ratio", "log_scale", "below_s0"],
        &rows,
    )?;
    let bounds = verify_theta_bounds(t_h, &tr.time);
    if !bounds.holds {
        failures.push("Θ derivative bounds violated".into());
    }
    ctx.out.json(
        "theta_bounds.json",
        &json!({ "report": bounds, "s0": s0, "gamma": weights.gamma, "eta_degree": eta.degree(), "eta_lift_used": eta.fallback_used }),
    )?;
    Ok(failures_to_outcome(failures))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectralIneqOptions {
    pub k_max: usize,
    pub interval: (f64, f64),
}

impl Default for SpectralIneqOptions {
    fn default() -> Self {
        Self {
            k_max: 12,
            interval: (0.0, 1.0),
        }
    }
}

pub fn spectral_ineq(ctx: &mut Context) -> CmdResult {
    let opts: SpectralIneqOptions = resolve(ctx, "spectral_ineq")?;
    let (c, d) = opts.interval;
    let mut failures = Vec::new();
    let mut rows = Vec::new();
    let mut c_emp = Vec::new();
    for k in 0..=opts.k_max {
        let g = torus_smallest_gram_eigenvalue(k, c, d)?;
        if !(g.lambda_min > 0.0 && g.lambda_min <= 1.0 + 1e-12) {
            failures.push(format!("K={k}: λ_min = {} outside (0,1]", g.lambda_min));
        }
        let quad_gap = if k <= 3 {
            let q = angular_gram_quadrature(&mode_set(k), c, d, 20_000);
            let lq = jacobi_eigen(&q)?.values[0];
            let gap = (lq - g.lambda_min).abs();
            if gap > 1e-10 {
                failures.push(format!("K={k}: quadrature cross-check off by {gap:.3e}"));
            }
            fmt_f(gap)
        } else {
            String::new()
        };
        c_emp.push(g.c_emp);
        rows.push(vec![k.to_string(), fmt_f(g.lambda_min), fmt_f(g.c_emp), g.precision_bits.to_string(), quad_gap]);
    }
    ctx.out.csv("spectral_ineq.csv", &["K", "lambda_min", "c_emp", "precision_bits", "quadrature_gap"], &rows)?;
    if opts.k_max >= 6 {
        let cap = 2.0 * c_emp[2..=6].iter().copied().fold(0.0, f64::max);
        if let Some(k) = (2..=opts.k_max).find(|&k| c_emp[k] > cap) {
            failures.push(format!("C_emp({k}) = {} exceeds twice the K ≤ 6 maximum", c_emp[k]));
        }
    }
    Ok(failures_to_outcome(failures))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObservabilityOptions {
    pub a: f64,
    pub b: f64,
    pub theta_interval: (f64, f64),
    pub j_max: u32,
    pub k_max: usize,
    pub modes: Vec<usize>,
}

impl Default for ObservabilityOptions {
    fn default() -> Self {
        Self {
            a: 0.3,
            b: 0.6,
            theta_interval: (0.0, 3.0),
            j_max: 2,
            k_max: 8,
            modes: vec![0, 1, 2, 32],
        }
    }
}

pub fn observability(ctx: &mut Context) -> CmdResult {
    let opts: ObservabilityOptions = resolve(ctx, "observability")?;
    let m = model(ctx)?;
    let mut failures = Vec::new();
    let mut rows = Vec::new();
    let mut push = |e: &crate::spectral_obs::ObservabilityEstimate, failures: &mut Vec<String>| {
        if e.residual > 1e-8 {
            failures.push(format!("{} {}: residual {:.3e}", e.cap_type, e.index, e.residual));
        }
        rows.push(vec![
            e.index.to_string(),
            e.cap_type.clone(),
            fmt_f(e.c_emp),
            e.basis_dim.to_string(),
            fmt_f(e.residual),
            fmt_f(e.log_c_emp),
        ]);
    };
    for &n in &opts.modes {
        let e = mode_observability_constant(&m, n, opts.a, opts.b, opts.k_max)?;
        push(&e, &mut failures);
    }
    let mut prev: Option<f64> = None;
    for j in 0..=opts.j_max {
        let e = truncated_observability(&m, opts.theta_interval, opts.a, opts.b, j, opts.k_max)?;
        if let Some(p) = prev {
            if e.log_c_emp < p + (1.0 - 1e-6f64).ln() {
                failures.push(format!("C_emp(E_{j}) decreased"));
            }
        }
        prev = Some(e.log_c_emp);
        push(&e, &mut failures);
    }
    ctx.out.csv("observability.csv", &["j_or_n", "cap_type", "c_emp", "basis_dim", "residual", "log_c_emp"], &rows)?;
    Ok(failures_to_outcome(failures))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HumCmdOptions {
    pub region: ControlRegion,
    pub initial: InitialDatum,
    pub epsilon: f64,
    pub cg_tol: f64,
    pub max_iter: usize,
    /// Write a control snapshot every this many half steps.
    pub snapshot_every: usize,
}

impl Default for HumCmdOptions {
    fn default() -> Self {
        let h = HumOptions::default();
        Self {
            region: scenarios::desk_region(),
            initial: scenarios::hum_desk_datum(),
            epsilon: h.epsilon,
            cg_tol: h.cg_tol,
            max_iter: h.max_iter,
            snapshot_every: 50,
        }
    }
}

pub fn hum(ctx: &mut Context) -> CmdResult {
    let opts: HumCmdOptions = resolve(ctx, "hum")?;
    let m = model(ctx)?;
    let phi0 = opts.initial.build(&m, ctx.seed)?;
    let hopts = HumOptions {
        epsilon: opts.epsilon,
        cg_tol: opts.cg_tol,
        max_iter: opts.max_iter,
    };
    let res = hum_control(&m, &phi0, &opts.region, &hopts)?;
    let every = opts.snapshot_every.max(1);
    let half = res.time.half_times();
    let mut snapshot_times = Vec::new();
    for k in (0..res.control.len()).step_by(every) {
        let f = synthesize_field(&m, &res.control[k])?;
        write_field(ctx, &format!("control_{k:05}.csv"), &m, &f)?;
        snapshot_times.push(json!({ "file": format!("control_{k:05}.csv"), "t": half[k] }));
    }
    ctx.out.json("hum_summary.json", &json!({ "summary": res.summary(), "snapshots": snapshot_times }))?;
    if !res.converged {
        return Ok(Outcome::NotConverged(format!(
            "penalized HUM stopped after {} iterations at relative residual {:.3e}",
            res.iterations,
            res.residual_history.last().copied().unwrap_or(f64::NAN)
        )));
    }
    if res.identity_defect > 10.0 * opts.cg_tol {
        return Ok(Outcome::Failed(format!("penalized identity defect {:.3e}", res.identity_defect)));
    }
    Ok(Outcome::Passed)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LrCmdOptions {
    pub region: ControlRegion,
    pub initial: InitialDatum,
    pub blocks: usize,
    pub tol: f64,
    pub epsilon: f64,
    pub min_epsilon: f64,
    pub cg_tol: f64,
    pub max_iter: usize,
}

impl Default for LrCmdOptions {
    fn default() -> Self {
        let l = LrOptions::default();
        Self {
            region: scenarios::desk_region(),
            initial: scenarios::lr_desk_datum(),
            blocks: l.blocks,
            tol: l.tol,
            epsilon: l.epsilon,
            min_epsilon: l.min_epsilon,
            cg_tol: l.cg_tol,
            max_iter: l.max_iter,
        }
    }
}

pub fn lr(ctx: &mut Context) -> CmdResult {
    let opts: LrCmdOptions = resolve(ctx, "lr")?;
    let m = model(ctx)?;
    let phi0 = opts.initial.build(&m, ctx.seed)?;
    let lopts = LrOptions {
        blocks: opts.blocks,
        tol: opts.tol,
        epsilon: opts.epsilon,
        min_epsilon: opts.min_epsilon,
        cg_tol: opts.cg_tol,
        max_iter: opts.max_iter,
    };
    let res = lr_control(&m, &phi0, &opts.region, &lopts)?;
    ctx.out.json("lr_blocks.json", &res)?;
    if !res.converged {
        return Ok(Outcome::NotConverged(format!(
            "final residual {:.3e} above tolerance {}",
            res.final_residual, res.tol
        )));
    }
    if m.norm(&phi0) > 0.0 && res.blocks.windows(2).any(|w| !(w[1].norm_at_end < w[0].norm_at_end)) {
        return Ok(Outcome::Failed("block-end norms are not strictly decreasing".into()));
    }
    Ok(Outcome::Passed)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlabCmd {
    pub t1: f64,
    pub t2: f64,
    #[serde(default)]
    pub options: SlabOptions,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DerivativeCmd {
    pub t: f64,
    pub l_max: u32,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeasurableCmdOptions {
    pub band: (f64, f64),
    pub boxes: Vec<ControlBox>,
    pub c_const: f64,
    pub h: f64,
    pub m_max: usize,
    pub n_random: usize,
    /// Optional slab report on the first family member.
    pub slab: Option<SlabCmd>,
    /// Optional derivative-growth report on the first family member.
    pub derivative: Option<DerivativeCmd>,
}

impl Default for MeasurableCmdOptions {
    fn default() -> Self {
        let m = MeasurableOptions::default();
        Self {
            band: (0.3, 0.6),
            boxes: scenarios::measurable_desk_boxes(),
            c_const: m.c_const,
            h: m.h,
            m_max: m.m_max,
            n_random: m.n_random,
            slab: None,
            derivative: None,
        }
    }
}

pub fn measurable(ctx: &mut Context) -> CmdResult {
    let opts: MeasurableCmdOptions = resolve(ctx, "measurable")?;
    let m = model(ctx)?;
    let d = BoxUnionSet::new(opts.boxes.clone(), opts.band, m.config.t_horizon)?;
    let family = observation_family(&m, opts.n_random, ctx.seed);
    let mopts = MeasurableOptions {
        c_const: opts.c_const,
        h: opts.h,
        m_max: opts.m_max,
        n_random: opts.n_random,
        seed: ctx.seed,
    };
    let report = measurable_observability_ratio(&m, &family, &d, &mopts)?;
    ctx.out.json("measurable.json", &report)?;
    let mut failures = Vec::new();
    if let Some(err) = &report.density_error {
        failures.push(err.clone());
    }
    if let Some(slab) = &opts.slab {
        let e = build_time_slices(&d)?.e;
        let rep = slab_interpolation_report(&m, &family[0].1, slab.t1, slab.t2, &e, &d, &slab.options)?;
        ctx.out.json("slab.json", &rep)?;
    }
    if let Some(dc) = &opts.derivative {
        let rep = derivative_bound_report(&m, &family[0].1, dc.t, dc.l_max)?;
        if !rep.all_hold {
            failures.push("derivative bound violated".into());
        }
        ctx.out.json("derivatives.json", &rep)?;
    }
    Ok(failures_to_outcome(failures))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DensitySeqOptions {
    pub intervals: Vec<(f64, f64)>,
    pub ell: f64,
    pub q: f64,
    pub m_max: usize,
    pub ell1: Option<f64>,
}

impl Default for DensitySeqOptions {
    fn default() -> Self {
        Self {
            intervals: vec![(0.0, 1.0)],
            ell: 0.5,
            q: 0.5,
            m_max: 40,
            ell1: None,
        }
    }
}

pub fn density_seq(ctx: &mut Context) -> CmdResult {
    let opts: DensitySeqOptions = resolve(ctx, "density_seq")?;
    let e = IntervalSet::new(opts.intervals.clone());
    let s = density_sequence(&e, opts.ell, opts.q, opts.m_max, ctx.config.model.t_horizon, opts.ell1)?;
    let rows: Vec<Vec<String>> = s
        .values
        .iter()
        .enumerate()
        .map(|(i, v)| vec![(i + 1).to_string(), fmt_f(*v), s.fractions.get(i).map(|f| fmt_f(*f)).unwrap_or_default()])
        .collect();
    ctx.out.csv("density_seq.csv", &["m", "ell_m", "fraction"], &rows)?;
    let mut failures = Vec::new();
    if s.geometric_defect > 1e-12 {
        failures.push(format!("geometric gap identity off by {:.3e}", s.geometric_defect));
    }
    Ok(failures_to_outcome(failures))
}
