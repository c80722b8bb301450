//! Squeezer-model fitting and excess-noise inversion.
//!
//! [`fit_squeezer_model`] recovers `(ηγ, P_th, T + L)` from squeezed and
//! anti-squeezed variances measured in dB at several pump powers. The
//! objective is the weighted sum of squared dB residuals of both branches.
//! Parameters are mapped to an unbounded space so that no iterate can leave
//! the physical box:
//!
//! ```text
//! ηγ    = 1 / (1 + e^(−u₀))           ∈ (0, 1)
//! P_th  = P_max · (1 + e^(u₁))        > max pump in the data
//! T + L = 1 / (1 + e^(−u₂))           ∈ (0, 1)
//! ```
//!
//! Minimization is Nelder–Mead from the initial guess plus an 8-point grid
//! of starts; the lowest objective wins (ties go to the earlier start) and is
//! polished by restarting the simplex until it stops improving. The cavity
//! linewidth is recomputed from the candidate `T + L` on every evaluation.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::criteria::{conditional_variance, epr_product, Direction};
use crate::error::{invalid, Error, Result};
use crate::sampling::csv_error;
use crate::source::{
    build_vclass_state, detected_variances, linewidth_ratio, ArmLoss, ExcessNoise, SourceParams,
};
use crate::units::{fmt_sig, to_db};

/// One pump setting with the measured variances in dB.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceRow {
    pub pump_mw: f64,
    pub sqz_db: f64,
    pub asqz_db: f64,
    #[serde(default = "unit_weight")]
    pub weight: f64,
}

fn unit_weight() -> f64 {
    1.0
}

/// Squeezing characterization data: variances against pump power.
#[derive(Clone, Debug, PartialEq)]
pub struct VarianceDataset {
    rows: Vec<VarianceRow>,
}

impl VarianceDataset {
    pub fn new(rows: Vec<VarianceRow>) -> Result<Self> {
        for (i, r) in rows.iter().enumerate() {
            if !(r.pump_mw > 0.0) || !r.pump_mw.is_finite() {
                return Err(invalid(format!(
                    "row {i}: pump {} mW must be positive",
                    r.pump_mw
                )));
            }
            if !r.sqz_db.is_finite() || !r.asqz_db.is_finite() {
                return Err(invalid(format!("row {i}: dB values must be finite")));
            }
            if !(r.weight > 0.0) || !r.weight.is_finite() {
                return Err(invalid(format!(
                    "row {i}: weight {} must be positive",
                    r.weight
                )));
            }
        }
        let mut pumps: Vec<f64> = rows.iter().map(|r| r.pump_mw).collect();
        pumps.sort_by(f64::total_cmp);
        if pumps.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid("pump values must be distinct"));
        }
        Ok(Self { rows })
    }

    /// Parse `pump_mw,sqz_db,asqz_db[,weight]` CSV.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers: Vec<String> = rdr
            .headers()
            .map_err(csv_error)?
            .iter()
            .map(str::to_string)
            .collect();
        let ok = headers == ["pump_mw", "sqz_db", "asqz_db"]
            || headers == ["pump_mw", "sqz_db", "asqz_db", "weight"];
        if !ok {
            return Err(Error::Parse {
                line: 1,
                message: format!(
                    "expected header pump_mw,sqz_db,asqz_db[,weight], got {}",
                    headers.join(",")
                ),
            });
        }
        let mut rows = Vec::new();
        for rec in rdr.deserialize::<VarianceRow>() {
            rows.push(rec.map_err(csv_error)?);
        }
        Self::new(rows)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_csv(std::fs::File::open(path)?)
    }

    pub fn rows(&self) -> &[VarianceRow] {
        &self.rows
    }

    pub fn max_pump(&self) -> f64 {
        self.rows.iter().map(|r| r.pump_mw).fold(0.0, f64::max)
    }

    /// SHA-256 of the rows in canonical text form.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for r in &self.rows {
            let line = format!(
                "{},{},{},{}\n",
                fmt_sig(r.pump_mw),
                fmt_sig(r.sqz_db),
                fmt_sig(r.asqz_db),
                fmt_sig(r.weight)
            );
            h.update(line.as_bytes());
        }
        hex::encode(h.finalize())
    }
}

/// Cavity quantities held fixed during a fit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedCavity {
    pub roundtrip_m: f64,
    pub freq_hz: f64,
}

impl Default for FixedCavity {
    fn default() -> Self {
        let p = SourceParams::default();
        Self {
            roundtrip_m: p.roundtrip_m,
            freq_hz: p.freq_hz,
        }
    }
}

/// Squeezer parameters identifiable from variance data.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SqueezerFitParams {
    pub eta_gamma: f64,
    pub p_th_mw: f64,
    pub t_plus_l: f64,
}

impl SqueezerFitParams {
    /// Model variances in dB `(sqz, asqz)` at `pump_mw`.
    pub fn model_db(&self, cavity: &FixedCavity, pump_mw: f64) -> (f64, f64) {
        let k = linewidth_ratio(self.t_plus_l, cavity.roundtrip_m, cavity.freq_hz);
        let v = detected_variances(self.eta_gamma, pump_mw / self.p_th_mw, k);
        (to_db(v.sqz), to_db(v.asqz))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub eta_gamma: f64,
    pub p_th_mw: f64,
    pub t_plus_l: f64,
    pub residual_rms_db: f64,
    pub objective: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

impl FitResult {
    pub fn params(&self) -> SqueezerFitParams {
        SqueezerFitParams {
            eta_gamma: self.eta_gamma,
            p_th_mw: self.p_th_mw,
            t_plus_l: self.t_plus_l,
        }
    }
}

/// Best objective and best parameters after every Nelder–Mead iteration of
/// the winning start and its polish, in order.
#[derive(Clone, Debug, Default)]
pub struct FitTrace {
    pub objective: Vec<f64>,
    pub params: Vec<SqueezerFitParams>,
}

/// Relative spread of simplex objective values that ends a run.
pub const FIT_FTOL: f64 = 1e-12;
/// Absolute spread that also ends a run. Exact data leaves an objective at
/// the round-off floor (about 1e-26), which a purely relative test never
/// reaches.
pub const FIT_FTOL_ABS: f64 = 1e-20;
/// Evaluation budget per Nelder–Mead run.
pub const FIT_MAX_EVALS: usize = 10_000;
/// Gradient norm (in the unbounded coordinates) below which a fit counts as
/// converged, relative to `max(1, objective)`.
pub const FIT_GRAD_TOL: f64 = 1e-5;

const COORD_LIMIT: f64 = 30.0;

/// Best objective and coordinates after each iteration.
type Trace = Vec<(f64, [f64; 3])>;

struct Problem<'a> {
    data: &'a VarianceDataset,
    cavity: FixedCavity,
    p_max: f64,
}

fn sigmoid(u: f64) -> f64 {
    1.0 / (1.0 + (-u).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

impl Problem<'_> {
    /// Coordinates are clamped to ±30 so the images stay strictly inside
    /// their intervals in floating point.
    fn to_params(&self, u: &[f64; 3]) -> SqueezerFitParams {
        let c = |v: f64| {
            if v.is_nan() {
                0.0
            } else {
                v.clamp(-COORD_LIMIT, COORD_LIMIT)
            }
        };
        let p = SqueezerFitParams {
            eta_gamma: sigmoid(c(u[0])),
            p_th_mw: self.p_max * (1.0 + c(u[1]).exp()),
            t_plus_l: sigmoid(c(u[2])),
        };
        assert!(
            p.eta_gamma > 0.0
                && p.eta_gamma <= 1.0
                && p.p_th_mw > self.p_max
                && p.t_plus_l > 0.0
                && p.t_plus_l < 1.0,
            "fit iterate left bounds: {p:?}"
        );
        p
    }

    fn to_coords(&self, p: &SqueezerFitParams) -> [f64; 3] {
        let eg = p.eta_gamma.clamp(1e-9, 1.0 - 1e-9);
        let ratio = (p.p_th_mw / self.p_max - 1.0).max(1e-9);
        [
            logit(eg),
            ratio.ln(),
            logit(p.t_plus_l.clamp(1e-9, 1.0 - 1e-9)),
        ]
    }

    fn objective(&self, u: &[f64; 3]) -> f64 {
        let p = self.to_params(u);
        let v: f64 = self
            .data
            .rows
            .iter()
            .map(|r| {
                let (s, a) = p.model_db(&self.cavity, r.pump_mw);
                r.weight * ((s - r.sqz_db).powi(2) + (a - r.asqz_db).powi(2))
            })
            .sum();
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    }

    fn gradient_norm(&self, u: &[f64; 3]) -> f64 {
        let h = 1e-6;
        (0..3)
            .map(|i| {
                let (mut up, mut dn) = (*u, *u);
                up[i] += h;
                dn[i] -= h;
                ((self.objective(&up) - self.objective(&dn)) / (2.0 * h)).powi(2)
            })
            .sum::<f64>()
            .sqrt()
    }
}

struct NmRun {
    best: [f64; 3],
    value: f64,
    iterations: usize,
    evaluations: usize,
    hit_tolerance: bool,
}

fn nelder_mead(
    problem: &Problem,
    start: [f64; 3],
    step: f64,
    trace: &mut Vec<(f64, [f64; 3])>,
) -> NmRun {
    let f = |u: &[f64; 3]| problem.objective(u);
    let mut simplex: Vec<([f64; 3], f64)> = Vec::with_capacity(4);
    simplex.push((start, f(&start)));
    for i in 0..3 {
        let mut v = start;
        v[i] += step;
        simplex.push((v, f(&v)));
    }
    let mut evaluations = 4;
    let mut iterations = 0;
    let mut hit_tolerance = false;
    let lerp = |a: &[f64; 3], b: &[f64; 3], t: f64| -> [f64; 3] {
        [
            a[0] + t * (b[0] - a[0]),
            a[1] + t * (b[1] - a[1]),
            a[2] + t * (b[2] - a[2]),
        ]
    };

    while evaluations < FIT_MAX_EVALS {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (best, worst) = (simplex[0].1, simplex[3].1);
        if worst - best <= FIT_FTOL * best.abs() + FIT_FTOL_ABS {
            hit_tolerance = true;
            break;
        }
        iterations += 1;
        let mut centroid = [0.0; 3];
        for (v, _) in &simplex[..3] {
            for k in 0..3 {
                centroid[k] += v[k] / 3.0;
            }
        }
        let worst_pt = simplex[3].0;
        let reflected = lerp(&centroid, &worst_pt, -1.0);
        let fr = f(&reflected);
        evaluations += 1;
        if fr < simplex[0].1 {
            let expanded = lerp(&centroid, &worst_pt, -2.0);
            let fe = f(&expanded);
            evaluations += 1;
            simplex[3] = if fe < fr {
                (expanded, fe)
            } else {
                (reflected, fr)
            };
        } else if fr < simplex[2].1 {
            simplex[3] = (reflected, fr);
        } else {
            let (towards, ft) = if fr < worst {
                (reflected, fr)
            } else {
                (worst_pt, worst)
            };
            let contracted = lerp(&centroid, &towards, 0.5);
            let fc = f(&contracted);
            evaluations += 1;
            if fc < ft {
                simplex[3] = (contracted, fc);
            } else {
                let anchor = simplex[0].0;
                for vertex in simplex.iter_mut().skip(1) {
                    let p = lerp(&anchor, &vertex.0, 0.5);
                    *vertex = (p, f(&p));
                }
                evaluations += 3;
            }
        }
        let lead = simplex
            .iter()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("simplex");
        trace.push((lead.1, lead.0));
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    NmRun {
        best: simplex[0].0,
        value: simplex[0].1,
        iterations,
        evaluations,
        hit_tolerance,
    }
}

/// Initial guess: `ηγ = 0.9`, `P_th = 1.2 × max pump`, `T + L = 0.105`.
pub fn default_initial_guess(data: &VarianceDataset) -> SqueezerFitParams {
    SqueezerFitParams {
        eta_gamma: 0.9,
        p_th_mw: 1.2 * data.max_pump(),
        t_plus_l: 0.105,
    }
}

pub fn fit_squeezer_model(
    data: &VarianceDataset,
    cavity: FixedCavity,
    init: Option<SqueezerFitParams>,
) -> Result<FitResult> {
    fit_squeezer_model_traced(data, cavity, init).map(|(r, _)| r)
}

/// [`fit_squeezer_model`] that also returns the iteration trace.
pub fn fit_squeezer_model_traced(
    data: &VarianceDataset,
    cavity: FixedCavity,
    init: Option<SqueezerFitParams>,
) -> Result<(FitResult, FitTrace)> {
    if data.rows.len() < 3 {
        return Err(invalid(format!(
            "need at least 3 rows to fit 3 parameters, got {}",
            data.rows.len()
        )));
    }
    if !(cavity.roundtrip_m > 0.0 && cavity.freq_hz > 0.0) {
        return Err(invalid("cavity round trip and frequency must be positive"));
    }
    let p_max = data.max_pump();
    let problem = Problem {
        data,
        cavity,
        p_max,
    };
    let init = init.unwrap_or_else(|| default_initial_guess(data));

    let mut starts = vec![problem.to_coords(&init)];
    for &eg in &[0.6, 0.95] {
        for &pth in &[1.15, 2.0] {
            for &tl in &[0.03, 0.3] {
                starts.push(problem.to_coords(&SqueezerFitParams {
                    eta_gamma: eg,
                    p_th_mw: pth * p_max,
                    t_plus_l: tl,
                }));
            }
        }
    }

    let mut evaluations = 0;
    let mut winner: Option<(NmRun, Trace)> = None;
    for start in starts {
        let mut trace = Vec::new();
        let run = nelder_mead(&problem, start, 0.25, &mut trace);
        evaluations += run.evaluations;
        if winner.as_ref().is_none_or(|(w, _)| run.value < w.value) {
            winner = Some((run, trace));
        }
    }
    let (mut best, mut trace) = winner.expect("at least one start");

    // Polish: restart from the best vertex until no further improvement.
    let mut iterations = best.iterations;
    let mut hit_tolerance = best.hit_tolerance;
    for _ in 0..20 {
        let run = nelder_mead(&problem, best.best, 1e-3, &mut trace);
        evaluations += run.evaluations;
        iterations += run.iterations;
        hit_tolerance = run.hit_tolerance;
        let improved = run.value < best.value - FIT_FTOL * best.value.abs();
        if run.value <= best.value {
            best.best = run.best;
            best.value = run.value;
        }
        if !improved {
            break;
        }
    }

    let p = problem.to_params(&best.best);
    let weight_sum: f64 = data.rows.iter().map(|r| r.weight).sum();
    let gradient_norm = problem.gradient_norm(&best.best);
    let result = FitResult {
        eta_gamma: p.eta_gamma,
        p_th_mw: p.p_th_mw,
        t_plus_l: p.t_plus_l,
        residual_rms_db: (best.value / (2.0 * weight_sum)).sqrt(),
        objective: best.value,
        gradient_norm,
        iterations,
        evaluations,
        converged: hit_tolerance && gradient_norm <= FIT_GRAD_TOL * best.value.max(1.0),
    };
    let trace = FitTrace {
        objective: trace.iter().map(|t| t.0).collect(),
        params: trace.iter().map(|t| problem.to_params(&t.1)).collect(),
    };
    Ok((result, trace))
}

/// Bisect a nondecreasing `f` on `[0, ∞)` for `f(eps) = target`.
fn invert_monotone(f: impl Fn(f64) -> Result<f64>, target: f64) -> Result<f64> {
    let floor = f(0.0)?;
    if target <= floor {
        if floor - target <= 1e-12 * floor.abs().max(1.0) {
            return Ok(0.0);
        }
        return Err(Error::InfeasibleTarget {
            target,
            limit: floor,
        });
    }
    let mut hi = 1.0;
    while f(hi)? < target {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::InfeasibleTarget {
                target,
                limit: f(hi)?,
            });
        }
    }
    let mut lo = 0.0;
    while hi - lo > 1e-13 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Excess-noise variance at which the A|B conditional variance of the
/// noisy quadrature reaches `target`. Location and quadrature come from
/// `policy`; its `eps` is ignored.
pub fn fit_excess_noise(
    params: &SourceParams,
    loss: ArmLoss,
    target: f64,
    policy: &ExcessNoise,
) -> Result<f64> {
    let q = policy.quadrature;
    invert_monotone(
        |eps| {
            let s = build_vclass_state(params, loss, Some(&policy.with_eps(eps)))?;
            Ok(conditional_variance(&s.two_mode_stats(0, 1)?, q, Direction::AGivenB)?.value)
        },
        target,
    )
}

/// Excess-noise variance at which the A|B EPR product reaches
/// `target_product`.
pub fn fit_excess_noise_for_product(
    params: &SourceParams,
    loss: ArmLoss,
    target_product: f64,
    policy: &ExcessNoise,
) -> Result<f64> {
    invert_monotone(
        |eps| {
            let s = build_vclass_state(params, loss, Some(&policy.with_eps(eps)))?;
            Ok(epr_product(&s.two_mode_stats(0, 1)?)?.product_ab)
        },
        target_product,
    )
}

/// Synthetic dataset generated from the model, optionally with additive
/// noise in dB drawn by `noise_db(i)` for residual `i`.
pub fn synthetic_dataset(
    truth: &SqueezerFitParams,
    cavity: &FixedCavity,
    pumps: &[f64],
    mut noise_db: impl FnMut(usize) -> f64,
) -> Result<VarianceDataset> {
    let rows = pumps
        .iter()
        .enumerate()
        .map(|(i, &pump_mw)| {
            let (s, a) = truth.model_db(cavity, pump_mw);
            VarianceRow {
                pump_mw,
                sqz_db: s + noise_db(2 * i),
                asqz_db: a + noise_db(2 * i + 1),
                weight: 1.0,
            }
        })
        .collect();
    VarianceDataset::new(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::Quadrature;
    use crate::source::NoiseLocation;
    use approx::assert_abs_diff_eq;

    fn truth() -> SqueezerFitParams {
        SqueezerFitParams {
            eta_gamma: 0.91,
            p_th_mw: 445.0,
            t_plus_l: 0.105,
        }
    }

    fn grid() -> Vec<f64> {
        (0..7).map(|i| 25.0 + 50.0 * i as f64).collect()
    }

    #[test]
    fn model_matches_source() {
        let p = SourceParams::default().with_pump(325.0);
        let v = p.squeezer_variances().unwrap();
        let (s, a) = truth().model_db(&FixedCavity::default(), 325.0);
        assert_abs_diff_eq!(s, v.sqz_db(), epsilon = 1e-12);
        assert_abs_diff_eq!(a, v.asqz_db(), epsilon = 1e-12);
    }

    #[test]
    fn noiseless_recovery() {
        let cav = FixedCavity::default();
        let data = synthetic_dataset(&truth(), &cav, &grid(), |_| 0.0).unwrap();
        let fit = fit_squeezer_model(&data, cav, None).unwrap();
        assert!(fit.converged, "{fit:?}");
        assert!((fit.eta_gamma / 0.91 - 1.0).abs() < 1e-6, "{fit:?}");
        assert!((fit.p_th_mw / 445.0 - 1.0).abs() < 1e-6, "{fit:?}");
        assert!((fit.t_plus_l / 0.105 - 1.0).abs() < 1e-6, "{fit:?}");
        assert!(fit.residual_rms_db < 1e-6);
    }

    #[test]
    fn trace_is_monotone_and_in_bounds() {
        let cav = FixedCavity::default();
        let mut k = 0u32;
        let data = synthetic_dataset(&truth(), &cav, &grid(), |_| {
            k += 1;
            0.05 * ((k as f64) * 1.7).sin()
        })
        .unwrap();
        let (_, trace) = fit_squeezer_model_traced(&data, cav, None).unwrap();
        assert!(!trace.objective.is_empty());
        assert!(trace.objective.windows(2).all(|w| w[1] <= w[0]));
        for p in &trace.params {
            assert!(p.eta_gamma > 0.0 && p.eta_gamma <= 1.0);
            assert!(p.p_th_mw > data.max_pump());
            assert!(p.t_plus_l > 0.0 && p.t_plus_l < 1.0);
        }
    }

    #[test]
    fn quoted_point_dataset_fits() {
        // Model rows except at 325 mW, where the observed −9.9/+18.4 dB is used.
        let cav = FixedCavity::default();
        let mut rows: Vec<VarianceRow> = synthetic_dataset(&truth(), &cav, &grid()[..6], |_| 0.0)
            .unwrap()
            .rows()
            .to_vec();
        rows.push(VarianceRow {
            pump_mw: 325.0,
            sqz_db: -9.9,
            asqz_db: 18.4,
            weight: 1.0,
        });
        let fit = fit_squeezer_model(&VarianceDataset::new(rows).unwrap(), cav, None).unwrap();
        assert!(fit.residual_rms_db <= 0.2, "{fit:?}");
        assert_abs_diff_eq!(fit.eta_gamma, 0.91, epsilon = 0.01);
    }

    #[test]
    fn dataset_validation() {
        let row = |p| VarianceRow {
            pump_mw: p,
            sqz_db: -1.0,
            asqz_db: 1.0,
            weight: 1.0,
        };
        assert!(VarianceDataset::new(vec![row(1.0), row(1.0), row(2.0)]).is_err());
        assert!(VarianceDataset::new(vec![row(0.0)]).is_err());
        let nan = VarianceRow {
            sqz_db: f64::NAN,
            ..row(3.0)
        };
        assert!(VarianceDataset::new(vec![nan]).is_err());
        let two = VarianceDataset::new(vec![row(1.0), row(2.0)]).unwrap();
        assert!(fit_squeezer_model(&two, FixedCavity::default(), None).is_err());
    }

    #[test]
    fn csv_parsing() {
        let d = VarianceDataset::from_csv(
            "pump_mw,sqz_db,asqz_db\n25,-1.5,1.7\n75, -3,3.5\n".as_bytes(),
        )
        .unwrap();
        assert_eq!(d.rows().len(), 2);
        assert_eq!(d.rows()[1].weight, 1.0);
        let w =
            VarianceDataset::from_csv("pump_mw,sqz_db,asqz_db,weight\n25,-1.5,1.7,2\n".as_bytes())
                .unwrap();
        assert_eq!(w.rows()[0].weight, 2.0);
        match VarianceDataset::from_csv("pump_mw,sqz_db,asqz_db\n25,-1.5,1.7\n75,x,3\n".as_bytes())
        {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            VarianceDataset::from_csv("pump,sqz,asqz\n".as_bytes()),
            Err(Error::Parse { line: 1, .. })
        ));
        assert_eq!(d.digest(), d.clone().digest());
        assert_ne!(d.digest(), w.digest());
    }

    #[test]
    fn excess_noise_inversion() {
        let p = SourceParams::default().with_pump(225.0);
        let loss = ArmLoss::symmetric(0.09);
        let policy = ExcessNoise::default();
        let clean = build_vclass_state(&p, loss, None)
            .unwrap()
            .two_mode_stats(0, 1)
            .unwrap();
        let base = conditional_variance(&clean, Quadrature::P, Direction::AGivenB)
            .unwrap()
            .value;
        assert_eq!(fit_excess_noise(&p, loss, base, &policy).unwrap(), 0.0);
        assert!(matches!(
            fit_excess_noise(&p, loss, base - 0.1, &policy),
            Err(Error::InfeasibleTarget { .. })
        ));

        let mut last = 0.0;
        for k in 1..=20 {
            let target = base + 0.05 * k as f64;
            let eps = fit_excess_noise(&p, loss, target, &policy).unwrap();
            assert!(eps > last);
            last = eps;
            let s = build_vclass_state(&p, loss, Some(&policy.with_eps(eps))).unwrap();
            let got = conditional_variance(
                &s.two_mode_stats(0, 1).unwrap(),
                Quadrature::P,
                Direction::AGivenB,
            )
            .unwrap()
            .value;
            assert_abs_diff_eq!(got, target, epsilon = 1e-9);
        }
    }

    #[test]
    fn source_noise_saturates() {
        // Source-located phase noise cannot push the conditional variance past 2.
        let p = SourceParams::default().with_pump(225.0);
        let policy = ExcessNoise {
            location: NoiseLocation::AtSource,
            ..ExcessNoise::default()
        };
        assert!(matches!(
            fit_excess_noise(&p, ArmLoss::symmetric(0.09), 2.5, &policy),
            Err(Error::InfeasibleTarget { .. })
        ));
        assert!(fit_excess_noise(&p, ArmLoss::symmetric(0.09), 1.95, &policy).unwrap() > 0.0);
    }

    #[test]
    fn product_target() {
        let p = SourceParams::default().with_pump(225.0);
        let loss = ArmLoss::symmetric(0.09);
        let eps = fit_excess_noise_for_product(&p, loss, 0.502, &ExcessNoise::default()).unwrap();
        assert!(eps > 0.0);
        let noisy = build_vclass_state(&p, loss, Some(&ExcessNoise::detector_phase(eps)))
            .unwrap()
            .two_mode_stats(0, 1)
            .unwrap();
        let clean = build_vclass_state(&p, loss, None)
            .unwrap()
            .two_mode_stats(0, 1)
            .unwrap();
        let (e, c) = (epr_product(&noisy).unwrap(), epr_product(&clean).unwrap());
        assert_abs_diff_eq!(e.product_ab, 0.502, epsilon = 1e-10);
        assert_abs_diff_eq!(e.condvar_x_ab, c.condvar_x_ab, epsilon = 1e-12);
    }
}
