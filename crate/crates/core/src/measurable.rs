//! Observability from measurable sets, restricted to finite box unions:
//! time slices and the set E, density-point sequences, the analytically
//! extended field, slab interpolation reports and the end-to-end ratio
//! ‖φ(T)‖ / ∬_D |φ|.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::{ControlBox, ControlRegion};
use crate::error::{Error, Result};
use crate::evolution::solve_forward;
use crate::intervals::IntervalSet;
use crate::model::{mass_dot, synthesize_field, Model, ModeCoeffs};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;
const MAX_EXPONENT: f64 = 700.0;

fn check_unit(what: &str, (lo, hi): (f64, f64), min: f64, max: f64) -> Result<()> {
    if lo.is_finite() && hi.is_finite() && lo < hi && lo >= min && hi <= max {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "{what} interval ({lo}, {hi}) must be non-empty inside [{min}, {max}]"
        )))
    }
}

/// Angular pieces of a box inside [0, 2π).
fn theta_pieces(bx: &ControlBox) -> Vec<(f64, f64)> {
    let (c, d) = bx.theta;
    if d - c >= TWO_PI {
        return vec![(0.0, TWO_PI)];
    }
    let c0 = c.rem_euclid(TWO_PI);
    let d0 = c0 + (d - c);
    if d0 <= TWO_PI {
        vec![(c0, d0)]
    } else {
        vec![(c0, TWO_PI), (0.0, d0 - TWO_PI)]
    }
}

/// Exact measure of a union of axis-aligned rectangles by coordinate compression.
type Rect = ((f64, f64), (f64, f64));

fn union_area(rects: &[Rect]) -> f64 {
    let mut xs: Vec<f64> = rects.iter().flat_map(|r| [r.0 .0, r.0 .1]).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let mut area = 0.0;
    for w in xs.windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        let ys = IntervalSet::new(
            rects
                .iter()
                .filter(|r| r.0 .0 <= mid && mid <= r.0 .1)
                .map(|r| r.1)
                .collect(),
        );
        area += (w[1] - w[0]) * ys.measure();
    }
    area
}

/// A finite union of boxes in 𝕋 × (a,b) × (0,T).
#[derive(Debug, Clone, Serialize)]
pub struct BoxUnionSet {
    pub boxes: Vec<ControlBox>,
    pub band: (f64, f64),
    pub t_horizon: f64,
    /// Exact |D| (overlaps counted once).
    pub measure: f64,
}

impl BoxUnionSet {
    pub fn new(boxes: Vec<ControlBox>, band: (f64, f64), t_horizon: f64) -> Result<Self> {
        check_unit("radial band", band, 0.0, 1.0)?;
        if !(t_horizon > 0.0) {
            return Err(Error::InvalidArgument(format!("horizon must be positive, got {t_horizon}")));
        }
        if boxes.is_empty() {
            return Err(Error::EmptySet("box union has no boxes".into()));
        }
        for bx in &boxes {
            check_unit("radial", bx.r, band.0, band.1)?;
            check_unit("time", bx.t, 0.0, t_horizon)?;
            let (c, d) = bx.theta;
            if !(c.is_finite() && d.is_finite() && c < d && d - c <= TWO_PI) {
                return Err(Error::InvalidArgument(format!(
                    "angular interval ({c}, {d}) must be non-empty with length at most 2π"
                )));
            }
        }
        let mut set = Self {
            boxes,
            band,
            t_horizon,
            measure: 0.0,
        };
        set.measure = set.exact_measure();
        if !(set.measure > 0.0) {
            return Err(Error::EmptySet("box union has zero measure".into()));
        }
        Ok(set)
    }

    fn exact_measure(&self) -> f64 {
        let mut ts: Vec<f64> = self.boxes.iter().flat_map(|b| [b.t.0, b.t.1]).collect();
        ts.sort_by(f64::total_cmp);
        ts.dedup();
        ts.windows(2)
            .map(|w| (w[1] - w[0]) * self.slice_measure(0.5 * (w[0] + w[1])))
            .sum()
    }

    /// |D_t|.
    pub fn slice_measure(&self, t: f64) -> f64 {
        let rects: Vec<_> = self
            .boxes
            .iter()
            .filter(|b| b.t.0 <= t && t <= b.t.1)
            .flat_map(|b| theta_pieces(b).into_iter().map(move |th| (th, b.r)))
            .collect();
        union_area(&rects)
    }

    /// z = (θ,r) ∈ D_t, decided from the same unwrapped rectangles used for |D_t|.
    pub fn slice_contains(&self, theta: f64, r: f64, t: f64) -> bool {
        let th = theta.rem_euclid(TWO_PI);
        self.boxes
            .iter()
            .filter(|b| b.t.0 <= t && t <= b.t.1 && b.r.0 <= r && r <= b.r.1)
            .any(|b| theta_pieces(b).iter().any(|&(c, d)| c <= th && th <= d))
    }

    /// |ω| for the bounding patch ω = 𝕋 × (a,b).
    pub fn patch_measure(&self) -> f64 {
        TWO_PI * (self.band.1 - self.band.0)
    }

    pub fn region(&self) -> ControlRegion {
        ControlRegion::BoxUnion {
            boxes: self.boxes.clone(),
        }
    }

    pub fn contains(&self, theta: f64, r: f64, t: f64) -> bool {
        self.region().contains(theta, r, t)
    }

    /// The same set with box `i` removed.
    pub fn without(&self, i: usize) -> Result<Self> {
        let mut boxes = self.boxes.clone();
        boxes.remove(i);
        Self::new(boxes, self.band, self.t_horizon)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TimeSliceSet {
    pub threshold: f64,
    pub e: IntervalSet,
    pub e_measure: f64,
    pub d_measure: f64,
    pub patch_measure: f64,
}

/// E = {t : |D_t| ≥ |D|/(2T)} as an exact interval union.
pub fn build_time_slices(d: &BoxUnionSet) -> Result<TimeSliceSet> {
    let threshold = d.measure / (2.0 * d.t_horizon);
    let mut ts: Vec<f64> = d.boxes.iter().flat_map(|b| [b.t.0, b.t.1]).collect();
    ts.push(0.0);
    ts.push(d.t_horizon);
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    let e = IntervalSet::new(
        ts.windows(2)
            .filter(|w| d.slice_measure(0.5 * (w[0] + w[1])) >= threshold)
            .map(|w| (w[0], w[1]))
            .collect(),
    );
    let e_measure = e.measure();
    let patch = d.patch_measure();
    let lower = d.measure / (2.0 * patch);
    if e_measure < lower * (1.0 - 1e-12) {
        return Err(Error::Invariant(format!("|E| = {e_measure} below |D|/(2|ω|) = {lower}")));
    }
    if e.intervals().iter().any(|&(a, b)| a < 0.0 || b > d.t_horizon) {
        return Err(Error::Invariant("E leaves (0,T)".into()));
    }
    Ok(TimeSliceSet {
        threshold,
        e,
        e_measure,
        d_measure: d.measure,
        patch_measure: patch,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DensitySequence {
    pub ell: f64,
    pub q: f64,
    /// ℓ_1 > ℓ_2 > … > ℓ_{m_max}.
    pub values: Vec<f64>,
    /// |E ∩ (ℓ_{m+1}, ℓ_m)| / (ℓ_m − ℓ_{m+1}).
    pub fractions: Vec<f64>,
    /// max |(ℓ_{m+1} − ℓ_{m+2}) − q(ℓ_m − ℓ_{m+1})|.
    pub geometric_defect: f64,
    /// ℓ_{m_max} − ℓ.
    pub final_gap: f64,
}

fn sequence_for(e: &IntervalSet, ell: f64, q: f64, m_max: usize, a: f64) -> DensitySequence {
    let values: Vec<f64> = (0..m_max).map(|m| ell + a * q.powi(m as i32)).collect();
    let fractions = values
        .windows(2)
        .map(|w| e.measure_in(w[1], w[0]) / (w[0] - w[1]))
        .collect();
    let geometric_defect = values
        .windows(3)
        .map(|w| ((w[1] - w[2]) - q * (w[0] - w[1])).abs())
        .fold(0.0, f64::max);
    DensitySequence {
        ell,
        q,
        final_gap: values.last().map_or(0.0, |v| v - ell),
        values,
        fractions,
        geometric_defect,
    }
}

/// Geometric sequence ℓ_m = ℓ + A q^{m−1} decreasing to ℓ with every gap at
/// least one-third covered by E. With `ell1` the first term is fixed; otherwise
/// the largest admissible A is searched on a geometric ladder below T − ℓ.
pub fn density_sequence(
    e: &IntervalSet,
    ell: f64,
    q: f64,
    m_max: usize,
    t_horizon: f64,
    ell1: Option<f64>,
) -> Result<DensitySequence> {
    if !(ell > 0.0 && ell < t_horizon) {
        return Err(Error::InvalidArgument(format!("ℓ = {ell} must lie inside (0, {t_horizon})")));
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidArgument(format!("q = {q} must lie in (0,1)")));
    }
    if m_max < 2 {
        return Err(Error::InvalidArgument("m_max must be at least 2".into()));
    }
    let ok = |s: &DensitySequence| s.fractions.iter().all(|&f| f >= 1.0 / 3.0);
    if let Some(l1) = ell1 {
        if !(l1 > ell && l1 <= t_horizon) {
            return Err(Error::InvalidArgument(format!("ℓ_1 = {l1} must lie in (ℓ, T]")));
        }
        let s = sequence_for(e, ell, q, m_max, l1 - ell);
        return if ok(&s) {
            Ok(s)
        } else {
            Err(Error::DensitySearchFailed(format!("ℓ_1 = {l1} violates the one-third coverage")))
        };
    }
    let a_max = t_horizon - ell;
    for i in 0..8 * 60 {
        let a = a_max * 2f64.powf(-(i as f64) / 8.0);
        let s = sequence_for(e, ell, q, m_max, a);
        if ok(&s) {
            return Ok(s);
        }
    }
    Err(Error::DensitySearchFailed(format!(
        "ℓ = {ell} is not a density point of E at resolution m_max = {m_max}"
    )))
}

/// q = ((C + 1 − h)/(C + 1))^{1/8}.
pub fn choose_q(c: f64, h: f64) -> Result<f64> {
    if !(c >= 1.0 && c.is_finite()) || !(h > 0.0 && h < 1.0) {
        return Err(Error::InvalidArgument(format!("need C >= 1 and h in (0,1), got C = {c}, h = {h}")));
    }
    Ok(((c + 1.0 - h) / (c + 1.0)).powf(0.125))
}

/// Coefficients of φ⁰ in the discrete eigenbasis: c[p][k] = ⟨φ⁰_p, Φ_k⟩ with
/// eigenvalues μ[p][k] = λ_k + n_p².
#[derive(Debug, Clone)]
pub struct SpectralExpansion {
    pub coeffs: Vec<Vec<f64>>,
    pub mu: Vec<Vec<f64>>,
    pub cap: usize,
}

impl SpectralExpansion {
    pub fn new(model: &Model, phi0: &ModeCoeffs, cap: Option<usize>) -> Result<Self> {
        phi0.check(model)?;
        let spec = model.radial_spectrum();
        let cap = cap.unwrap_or(spec.len());
        if cap == 0 || cap > spec.len() {
            return Err(Error::TooManyEigenpairs {
                requested: cap,
                available: spec.len(),
            });
        }
        let coeffs = phi0
            .data
            .iter()
            .map(|row| {
                spec.vectors[..cap]
                    .iter()
                    .map(|v| mass_dot(&model.grid.mass, row, v))
                    .collect()
            })
            .collect();
        let mu = model
            .modes
            .iter()
            .map(|m| spec.values[..cap].iter().map(|l| l + (m.n * m.n) as f64).collect())
            .collect();
        Ok(Self { coeffs, mu, cap })
    }

    pub fn max_mu(&self) -> f64 {
        self.mu.iter().flatten().copied().fold(0.0, f64::max)
    }

    /// Σ c e^{−μt + √μ τ} Φ per mode.
    pub fn evaluate(&self, model: &Model, t: f64, tau: f64) -> ModeCoeffs {
        let spec = model.radial_spectrum();
        let mut out = ModeCoeffs::zeros(model);
        for (p, row) in out.data.iter_mut().enumerate() {
            for k in 0..self.cap {
                let c = self.coeffs[p][k];
                if c == 0.0 {
                    continue;
                }
                let mu = self.mu[p][k];
                let w = c * (-mu * t + mu.sqrt() * tau).exp();
                if w == 0.0 {
                    continue;
                }
                row.iter_mut().zip(&spec.vectors[k]).for_each(|(x, v)| *x += w * v);
            }
        }
        out
    }

    /// ‖∂ₜˡφ(t)‖ = (Σ c² μ^{2l} e^{−2μt})^{1/2}, accumulated in log form.
    pub fn time_derivative_norm(&self, t: f64, l: u32) -> f64 {
        let logs: Vec<f64> = self
            .coeffs
            .iter()
            .flatten()
            .zip(self.mu.iter().flatten())
            .filter(|(c, _)| **c != 0.0)
            .map(|(c, mu)| 2.0 * c.abs().ln() + 2.0 * l as f64 * mu.ln() - 2.0 * mu * t)
            .collect();
        let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if top == f64::NEG_INFINITY {
            return 0.0;
        }
        let sum: f64 = logs.iter().map(|v| (v - top).exp()).sum();
        (0.5 * (top + sum.ln())).exp()
    }
}

/// Semi-discrete solution e^{−tA}φ⁰ through the eigenbasis.
pub fn spectral_solution(model: &Model, phi0: &ModeCoeffs, t: f64) -> Result<ModeCoeffs> {
    Ok(SpectralExpansion::new(model, phi0, None)?.evaluate(model, t, 0.0))
}

#[derive(Debug, Clone)]
pub struct ExtendedField {
    pub cap: usize,
    pub t: f64,
    pub tau: Vec<f64>,
    pub samples: Vec<ModeCoeffs>,
    /// max over interior τ of ‖(−𝒜 + ∂_ττ)φ‖ / max_τ ‖φ(τ)‖.
    pub elliptic_residual: f64,
    /// ‖φ(·,·,0,t) − e^{−tA}φ⁰‖ / ‖φ⁰‖ (NaN when τ = 0 is not on the grid).
    pub restriction_defect: f64,
}

/// Samples of φ(θ,r,τ,t) = Σ φ⁰_n e^{−λ_n t + √λ_n τ} Φ_n on a uniform τ grid.
pub fn extended_field(
    model: &Model,
    phi0: &ModeCoeffs,
    t: f64,
    tau: &[f64],
    cap: Option<usize>,
) -> Result<ExtendedField> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("t must be positive, got {t}")));
    }
    if tau.len() < 3 || tau.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("τ grid must be increasing with at least 3 points".into()));
    }
    let dtau = tau[1] - tau[0];
    if tau.windows(2).any(|w| ((w[1] - w[0]) - dtau).abs() > 1e-12 * dtau.abs().max(1.0)) {
        return Err(Error::InvalidArgument("τ grid must be uniform".into()));
    }
    let exp = SpectralExpansion::new(model, phi0, cap)?;
    let tau_max = tau.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let bound = exp.max_mu().sqrt() * tau_max;
    if bound > MAX_EXPONENT {
        return Err(Error::Overflow(format!(
            "√λ_max·τ_max = {bound:.1} exceeds {MAX_EXPONENT}; shrink the τ range or the cap"
        )));
    }
    let samples: Vec<ModeCoeffs> = tau.par_iter().map(|&s| exp.evaluate(model, t, s)).collect();
    let op = model.operator();
    let scale = samples.iter().map(|s| model.norm(s)).fold(0.0, f64::max);
    let mut worst: f64 = 0.0;
    for i in 1..tau.len() - 1 {
        let mut res = samples[i + 1].clone();
        res.axpy(-2.0, &samples[i]);
        res.axpy(1.0, &samples[i - 1]);
        res.scale(1.0 / (dtau * dtau));
        for (p, row) in res.data.iter_mut().enumerate() {
            let n2 = (model.modes[p].n * model.modes[p].n) as f64;
            let a = op.apply(&samples[i].data[p]);
            for ((x, av), s) in row.iter_mut().zip(&a).zip(&samples[i].data[p]) {
                *x -= av + n2 * s;
            }
        }
        worst = worst.max(model.norm(&res));
    }
    let restriction_defect = match tau.iter().position(|&s| s == 0.0) {
        Some(i0) => {
            let mut d = samples[i0].clone();
            d.axpy(-1.0, &SpectralExpansion::new(model, phi0, None)?.evaluate(model, t, 0.0));
            let n0 = model.norm(phi0);
            if n0 > 0.0 {
                model.norm(&d) / n0
            } else {
                0.0
            }
        }
        None => f64::NAN,
    };
    Ok(ExtendedField {
        cap: exp.cap,
        t,
        tau: tau.to_vec(),
        samples,
        elliptic_residual: if scale > 0.0 { worst / scale } else { 0.0 },
        restriction_defect,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DerivativeRow {
    pub l: u32,
    /// ln max_n λ_n^{2l} e^{−λ_n t} over the discrete spectrum.
    pub log_discrete_max: f64,
    /// ln (2/t)^{2l}(l/e)^{2l}.
    pub log_bound: f64,
    pub holds: bool,
    pub derivative_norm: f64,
    /// ‖∂ₜˡφ‖ (t/2)^l / (l! ‖φ⁰‖).
    pub factorial_ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DerivativeReport {
    pub t: f64,
    pub l_max_requested: u32,
    pub l_max_used: u32,
    pub warning: Option<String>,
    pub rows: Vec<DerivativeRow>,
    pub max_factorial_ratio: f64,
    pub all_hold: bool,
}

fn ln_factorial(l: u32) -> f64 {
    statrs::function::factorial::ln_factorial(l as u64)
}

/// Checks max_λ λ^{2l}e^{−λt} ≤ (2/t)^{2l}(l/e)^{2l} on the discrete spectrum
/// and reports the factorial growth of ‖∂ₜˡφ(t)‖.
pub fn derivative_bound_report(model: &Model, phi0: &ModeCoeffs, t: f64, l_max: u32) -> Result<DerivativeReport> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("t must be positive, got {t}")));
    }
    let exp = SpectralExpansion::new(model, phi0, None)?;
    let n0 = model.norm(phi0);
    let all_mu: Vec<f64> = exp.mu.iter().flatten().copied().collect();
    let log_bound = |l: u32| {
        if l == 0 {
            0.0
        } else {
            2.0 * l as f64 * ((2.0 / t).ln() + (l as f64).ln() - 1.0)
        }
    };
    let mut used = l_max;
    let mut warning = None;
    while used > 0 && log_bound(used) > MAX_EXPONENT {
        used -= 1;
    }
    if used < l_max {
        warning = Some(format!("l_max capped at {used}: the bound exceeds e^{MAX_EXPONENT}"));
    }
    let rows: Vec<DerivativeRow> = (0..=used)
        .map(|l| {
            let log_discrete_max = all_mu
                .iter()
                .map(|mu| 2.0 * l as f64 * mu.ln() - mu * t)
                .fold(f64::NEG_INFINITY, f64::max);
            let lb = log_bound(l);
            let derivative_norm = exp.time_derivative_norm(t, l);
            let factorial_ratio = if n0 > 0.0 {
                (derivative_norm.ln() + l as f64 * (0.5 * t).ln() - ln_factorial(l)).exp() / n0
            } else {
                0.0
            };
            DerivativeRow {
                l,
                log_discrete_max,
                log_bound: lb,
                holds: log_discrete_max <= lb + 1e-12 * lb.abs().max(1.0),
                derivative_norm,
                factorial_ratio,
            }
        })
        .collect();
    Ok(DerivativeReport {
        t,
        l_max_requested: l_max,
        l_max_used: used,
        warning,
        max_factorial_ratio: rows.iter().map(|r| r.factorial_ratio).fold(0.0, f64::max),
        all_hold: rows.iter().all(|r| r.holds),
        rows,
    })
}

/// ‖φ‖_{L¹(D_t)} on the tensor grid.
fn l1_on_slice(model: &Model, d: &BoxUnionSet, state: &ModeCoeffs, t: f64) -> Result<f64> {
    let field = synthesize_field(model, state)?;
    let w = model.theta_weight();
    let mut total = 0.0;
    for (j, (&r, &m)) in model.grid.interior().iter().zip(&model.grid.mass).enumerate() {
        if r < d.band.0 || r > d.band.1 {
            continue;
        }
        for (q, &th) in model.theta.iter().enumerate() {
            if d.contains(th, r, t) {
                total += w * m * field.get(j, q).abs();
            }
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SlabOptions {
    /// Calibration constant K in e^{K/(t2−t1)^8}.
    pub calibration: f64,
    /// Required |E ∩ (t1,t2)| / (t2 − t1).
    pub eta: f64,
    /// Gauss points per E interval.
    pub panels: usize,
}

impl Default for SlabOptions {
    fn default() -> Self {
        Self {
            calibration: 1.0,
            eta: 0.1,
            panels: 16,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SlabReport {
    pub t1: f64,
    pub t2: f64,
    pub e_measure: f64,
    /// ‖φ(t2)‖.
    pub n2: f64,
    /// ∫ χ_E ‖φ(t)‖_{L¹(D_t)} dt.
    pub obs: f64,
    /// ‖φ(t1)‖.
    pub n1: f64,
    pub calibration: f64,
    pub h_emp: Option<f64>,
    pub h_in_unit_interval: bool,
    pub degenerate: bool,
}

/// The three slab quantities and the exponent h solving
/// N₂ = Obs^h (e^{K/(t2−t1)^8} N₁)^{1−h}.
pub fn slab_interpolation_report(
    model: &Model,
    phi0: &ModeCoeffs,
    t1: f64,
    t2: f64,
    e: &IntervalSet,
    d: &BoxUnionSet,
    opts: &SlabOptions,
) -> Result<SlabReport> {
    if !(0.0 <= t1 && t1 < t2 && t2 <= model.config.t_horizon) {
        return Err(Error::InvalidArgument(format!("need 0 <= t1 < t2 <= T, got ({t1}, {t2})")));
    }
    let e_slab = e.intersect(t1, t2);
    let e_measure = e_slab.measure();
    if e_measure < opts.eta * (t2 - t1) {
        return Err(Error::InvalidArgument(format!(
            "|E ∩ (t1,t2)| = {e_measure} is below η(t2 − t1) = {}",
            opts.eta * (t2 - t1)
        )));
    }
    let exp = SpectralExpansion::new(model, phi0, None)?;
    let n1 = model.norm(&exp.evaluate(model, t1, 0.0));
    let n2 = model.norm(&exp.evaluate(model, t2, 0.0));
    // composite 3-point Gauss–Legendre on each interval of E
    let nodes = [-(0.6f64).sqrt(), 0.0, (0.6f64).sqrt()];
    let weights = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];
    let mut quad = Vec::new();
    for &(a, b) in e_slab.intervals() {
        let h = (b - a) / opts.panels.max(1) as f64;
        for p in 0..opts.panels.max(1) {
            let mid = a + (p as f64 + 0.5) * h;
            for (x, w) in nodes.iter().zip(&weights) {
                quad.push((mid + 0.5 * h * x, 0.5 * h * w));
            }
        }
    }
    let obs = quad
        .par_iter()
        .map(|&(t, w)| l1_on_slice(model, d, &exp.evaluate(model, t, 0.0), t).map(|v| w * v))
        .collect::<Result<Vec<_>>>()?
        .iter()
        .sum::<f64>();
    let k = opts.calibration;
    let degenerate = !(obs > 0.0 && n1 > 0.0 && n2 > 0.0);
    let h_emp = if degenerate {
        None
    } else {
        let l = k / (t2 - t1).powi(8) + n1.ln();
        Some((l - n2.ln()) / (l - obs.ln()))
    };
    Ok(SlabReport {
        t1,
        t2,
        e_measure,
        n2,
        obs,
        n1,
        calibration: k,
        h_in_unit_interval: h_emp.is_some_and(|h| h > 0.0 && h < 1.0),
        h_emp,
        degenerate,
    })
}

/// Unit-norm test data: the lowest eigenmodes of cos 0, cos 1, sin 1, cos 2
/// (when present) followed by seeded random combinations of low radial modes.
pub fn observation_family(model: &Model, n_random: usize, seed: u64) -> Vec<(String, ModeCoeffs)> {
    let spec = model.radial_spectrum();
    let mut out = Vec::new();
    for mode in model.modes.iter().take(4) {
        let mut c = ModeCoeffs::zeros(model);
        c.get_mut(*mode).copy_from_slice(&spec.vectors[0]);
        out.push((format!("eigen {mode} k=1"), c));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k_low = spec.len().min(8);
    for i in 0..n_random {
        let mut c = ModeCoeffs::zeros(model);
        for row in c.data.iter_mut() {
            for v in &spec.vectors[..k_low] {
                let a: f64 = rng.gen_range(-1.0..1.0);
                row.iter_mut().zip(v).for_each(|(x, y)| *x += a * y);
            }
        }
        let n = model.norm(&c);
        c.scale(1.0 / n);
        out.push((format!("random {i}"), c));
    }
    out
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeasurableOptions {
    /// Constants fed to choose_q.
    pub c_const: f64,
    pub h: f64,
    pub m_max: usize,
    pub n_random: usize,
    pub seed: u64,
}

impl Default for MeasurableOptions {
    fn default() -> Self {
        Self {
            c_const: 1.0,
            h: 0.5,
            m_max: 40,
            n_random: 16,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DatumRow {
    pub label: String,
    pub terminal_norm: f64,
    pub obs_l1: f64,
    pub rho: Option<f64>,
    pub excluded: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct MeasurableReport {
    #[serde(rename = "E_intervals")]
    pub e_intervals: Vec<(f64, f64)>,
    pub e_measure: f64,
    pub d_measure: f64,
    pub threshold: f64,
    pub ell: f64,
    pub q: f64,
    pub ell_sequence: Option<Vec<f64>>,
    pub density_error: Option<String>,
    pub rho_max: f64,
    pub per_datum: Vec<DatumRow>,
}

/// ∬_D |φ| over the free evolution, using half-step states and times.
pub fn observation_l1(model: &Model, phi0: &ModeCoeffs, d: &BoxUnionSet) -> Result<(f64, f64)> {
    let tr = solve_forward(model, phi0, None)?;
    let grid = &tr.time;
    let mut total = 0.0;
    for (k, t) in grid.half_times().into_iter().enumerate() {
        total += grid.dt() * l1_on_slice(model, d, &tr.half_step_state(k), t)?;
    }
    Ok((model.norm(&tr.terminal()), total))
}

/// ρ = ‖φ(T)‖ / ∬_D|φ| over a family of initial data, with the proof's
/// set-theoretic pipeline (E, ℓ, q, ℓ_m) logged alongside.
pub fn measurable_observability_ratio(
    model: &Model,
    family: &[(String, ModeCoeffs)],
    d: &BoxUnionSet,
    opts: &MeasurableOptions,
) -> Result<MeasurableReport> {
    if (d.t_horizon - model.config.t_horizon).abs() > 1e-12 {
        return Err(Error::InvalidArgument("box union horizon differs from the model horizon".into()));
    }
    let slices = build_time_slices(d)?;
    let (a, b) = slices
        .e
        .largest()
        .ok_or_else(|| Error::EmptySet("E is empty".into()))?;
    let ell = 0.5 * (a + b);
    let q = choose_q(opts.c_const, opts.h)?;
    let (ell_sequence, density_error) = match density_sequence(&slices.e, ell, q, opts.m_max, d.t_horizon, None) {
        Ok(s) => (Some(s.values), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let per_datum = family
        .par_iter()
        .map(|(label, phi0)| {
            let (terminal_norm, obs_l1) = observation_l1(model, phi0, d)?;
            let excluded = obs_l1 < 1e-300;
            Ok(DatumRow {
                label: label.clone(),
                terminal_norm,
                obs_l1,
                rho: (!excluded).then(|| terminal_norm / obs_l1),
                excluded,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let rho_max = per_datum.iter().filter_map(|r| r.rho).fold(0.0, f64::max);
    Ok(MeasurableReport {
        e_intervals: slices.e.intervals().to_vec(),
        e_measure: slices.e_measure,
        d_measure: slices.d_measure,
        threshold: slices.threshold,
        ell,
        q,
        ell_sequence,
        density_error,
        rho_max,
        per_datum,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_model, ModelConfig, ModeIndex};
    use proptest::prelude::*;

    fn bx(theta: (f64, f64), r: (f64, f64), t: (f64, f64)) -> ControlBox {
        ControlBox { theta, r, t }
    }

    #[test]
    fn full_patch_slices() {
        let d = BoxUnionSet::new(vec![bx((0.0, TWO_PI), (0.3, 0.6), (0.0, 1.0))], (0.3, 0.6), 1.0).unwrap();
        assert!((d.measure - TWO_PI * 0.3).abs() < 1e-12);
        let s = build_time_slices(&d).unwrap();
        assert_eq!(s.e.intervals(), &[(0.0, 1.0)]);
        let half = BoxUnionSet::new(vec![bx((0.0, TWO_PI), (0.3, 0.6), (0.0, 0.5))], (0.3, 0.6), 1.0).unwrap();
        let s = build_time_slices(&half).unwrap();
        assert_eq!(s.e.intervals(), &[(0.0, 0.5)]);
        assert!((s.threshold - half.patch_measure() / 4.0).abs() < 1e-12);
    }

    #[test]
    fn overlaps_and_wraps_count_once() {
        let d = BoxUnionSet::new(
            vec![
                bx((0.0, 2.0), (0.0, 0.5), (0.0, 1.0)),
                bx((1.0, 3.0), (0.25, 1.0), (0.0, 1.0)),
                bx((6.0, 7.0), (0.0, 0.5), (0.0, 1.0)),
            ],
            (0.0, 1.0),
            1.0,
        )
        .unwrap();
        // inclusion–exclusion by hand
        let overlap_ab = 1.0 * 0.25;
        let wrap_piece = 1.0 * 0.5;
        let wrap_overlap = (7.0 - TWO_PI) * 0.5;
        let want = 2.0 * 0.5 + 2.0 * 0.75 - overlap_ab + wrap_piece - wrap_overlap;
        assert!((d.measure - want).abs() < 1e-12);
    }

    #[test]
    fn measure_agrees_with_grid_count() {
        let m = build_model(ModelConfig::new(0.5, 1.0).with_sizes(8, 400, 200)).unwrap();
        let d = BoxUnionSet::new(
            vec![bx((0.5, 2.5), (0.3, 0.45), (0.1, 0.6)), bx((3.0, 5.0), (0.4, 0.6), (0.3, 0.9))],
            (0.3, 0.6),
            1.0,
        )
        .unwrap();
        let grid_measure = d.region().measure(&m, &m.time_grid());
        // one angular cell, one radial cell and one step of slack per face
        let cell = m.theta_weight().max(m.grid.max_width()).max(m.time_grid().dt());
        assert!((grid_measure - d.measure).abs() <= 6.0 * cell * d.measure.max(1.0));
    }

    #[test]
    fn density_sequence_full_interval() {
        let e = IntervalSet::interval(0.0, 1.0);
        let s = density_sequence(&e, 0.5, 0.5, 4, 1.0, Some(0.9)).unwrap();
        let want = [0.9, 0.7, 0.6, 0.55];
        for (a, b) in s.values.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(((s.values[1] - s.values[2]) / (s.values[0] - s.values[1]) - 0.5).abs() < 1e-12);
        assert!(s.fractions.iter().all(|&f| (f - 1.0).abs() < 1e-12));
    }

    #[test]
    fn density_sequence_with_holes() {
        let holes = IntervalSet::new(
            (1..64)
                .map(|k| {
                    let x = k as f64 / 64.0;
                    (x - 1e-3, x + 1e-3)
                })
                .collect(),
        );
        let e = IntervalSet::interval(0.0, 1.0).subtract(&holes);
        let s = density_sequence(&e, 1.0 / 3.0, 0.5, 40, 1.0, None).unwrap();
        assert!(s.fractions.iter().all(|&f| f >= 1.0 / 3.0));
        assert!(s.geometric_defect < 1e-12);
        assert!(s.final_gap < 1e-9);
    }

    #[test]
    fn density_sequence_fails_off_e() {
        let e = IntervalSet::interval(0.0, 0.2);
        assert!(density_sequence(&e, 0.5, 0.5, 40, 1.0, None).is_err());
    }

    #[test]
    fn choose_q_values() {
        assert!((choose_q(1.0, 0.5).unwrap() - 0.75f64.powf(0.125)).abs() < 1e-15);
        assert!((choose_q(1.0, 0.5).unwrap() - 0.96468).abs() < 1e-5);
        assert!(choose_q(1.0, 1e-12).unwrap() < 1.0);
        assert!(choose_q(1.0, 0.2).unwrap() > choose_q(1.0, 0.8).unwrap());
        assert!(choose_q(0.5, 0.5).is_err());
        assert!(choose_q(1.0, 1.0).is_err());
    }

    fn small_model() -> Model {
        build_model(ModelConfig::new(0.5, 1.0).with_sizes(2, 100, 100)).unwrap()
    }

    #[test]
    fn extended_field_identities() {
        let m = small_model();
        let fam = observation_family(&m, 1, 3);
        let phi0 = &fam[4].1;
        let tau: Vec<f64> = (-100..=100).map(|i| i as f64 * 2e-4).collect();
        let f = extended_field(&m, phi0, 0.5, &tau, None).unwrap();
        assert!(f.restriction_defect < 1e-9);
        assert!(f.elliptic_residual < 1e-6, "{}", f.elliptic_residual);
        let i0 = 100;
        assert!(m.norm(&f.samples[200]) > m.norm(&f.samples[i0]));
        // τ = 0 also agrees with the Crank–Nicolson snapshot up to time error
        let cn = solve_forward(&m, phi0, None).unwrap().state(50);
        let mut d = cn.clone();
        d.axpy(-1.0, &f.samples[i0]);
        assert!(m.norm(&d) < 1e-3);
        let big: Vec<f64> = (0..3).map(|i| i as f64 * 100.0).collect();
        assert!(matches!(extended_field(&m, phi0, 0.5, &big, None), Err(Error::Overflow(_))));
    }

    #[test]
    fn derivative_bounds() {
        let m = small_model();
        let fam = observation_family(&m, 2, 11);
        let r = derivative_bound_report(&m, &fam[5].1, 1.0, 12).unwrap();
        assert!(r.all_hold);
        assert!((r.rows[1].log_bound - (4.0 * (-2.0f64).exp()).ln()).abs() < 1e-12);
        assert!(r.rows[0].log_discrete_max <= 0.0);
        assert!(r.max_factorial_ratio <= 1.0);
        let capped = derivative_bound_report(&m, &fam[5].1, 1e-3, 400).unwrap();
        assert!(capped.warning.is_some() && capped.l_max_used < 400);
    }

    #[test]
    fn slab_report_zero_and_monotone() {
        let m = small_model();
        let d = BoxUnionSet::new(
            vec![bx((0.0, 2.0), (0.3, 0.6), (0.0, 0.6)), bx((3.0, 5.0), (0.3, 0.6), (0.4, 1.0))],
            (0.3, 0.6),
            1.0,
        )
        .unwrap();
        let e = build_time_slices(&d).unwrap().e;
        let zero = slab_interpolation_report(&m, &ModeCoeffs::zeros(&m), 0.2, 0.8, &e, &d, &SlabOptions::default())
            .unwrap();
        assert!(zero.degenerate && zero.obs == 0.0 && zero.n1 == 0.0 && zero.n2 == 0.0);
        let spec = m.radial_spectrum();
        let phi0 = ModeCoeffs::single(&m, ModeIndex::cos(1), &spec.vectors[0]).unwrap();
        let small = IntervalSet::interval(0.3, 0.5);
        let a = slab_interpolation_report(&m, &phi0, 0.2, 0.8, &small, &d, &SlabOptions::default()).unwrap();
        let b = slab_interpolation_report(&m, &phi0, 0.2, 0.8, &e, &d, &SlabOptions::default()).unwrap();
        assert!(b.obs >= a.obs);
        assert!(a.h_in_unit_interval, "{:?}", a.h_emp);
    }

    #[test]
    fn ratio_monotone_in_d() {
        let m = small_model();
        let d = BoxUnionSet::new(
            vec![bx((0.0, 2.0), (0.3, 0.6), (0.0, 1.0)), bx((3.0, 5.0), (0.3, 0.6), (0.2, 0.9))],
            (0.3, 0.6),
            1.0,
        )
        .unwrap();
        let fam = observation_family(&m, 4, 1);
        let opts = MeasurableOptions::default();
        let full = measurable_observability_ratio(&m, &fam, &d, &opts).unwrap();
        let less = measurable_observability_ratio(&m, &fam, &d.without(1).unwrap(), &opts).unwrap();
        for (x, y) in full.per_datum.iter().zip(&less.per_datum) {
            assert!(x.rho.unwrap() <= y.rho.unwrap() * (1.0 + 1e-12));
        }
        assert!(full.rho_max <= less.rho_max);
        assert!(full.ell_sequence.is_some());
    }

    fn arb_box() -> impl Strategy<Value = ControlBox> {
        (0.0..TWO_PI, 0.05..3.0f64, 0.3..0.55f64, 0.01..0.3f64, 0.0..0.9f64, 0.02..1.0f64).prop_map(
            |(c, lc, r0, lr, t0, lt)| ControlBox {
                theta: (c, c + lc),
                r: (r0, (r0 + lr).min(0.6)),
                t: (t0, (t0 + lt).min(1.0)),
            },
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn e_set_lower_bound(boxes in prop::collection::vec(arb_box(), 1..5)) {
            let d = BoxUnionSet::new(boxes, (0.3, 0.6), 1.0).unwrap();
            let s = build_time_slices(&d).unwrap();
            prop_assert!(s.e_measure >= d.measure / (2.0 * d.patch_measure()) - 1e-12);
            // χ_E(t) χ_{D_t}(z) ≤ χ_D(z,t) at sample points
            for i in 0..20 {
                let t = (i as f64 + 0.5) / 20.0;
                let in_e = s.e.contains(t);
                for (th, r) in [(0.3, 0.35), (2.0, 0.5), (4.5, 0.58)] {
                    let slice = d.boxes.iter().any(|b| b.t.0 <= t && t <= b.t.1 && d.contains(th, r, t));
                    prop_assert!(!(in_e && slice) || d.contains(th, r, t));
                }
            }
        }
    }
}
