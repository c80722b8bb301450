//! Seeded homodyne records and empirical estimators.
//!
//! # Stream layout
//!
//! Every acquisition is driven by ChaCha20 seeded with
//! `ChaCha20Rng::seed_from_u64(seed)`. The `X` acquisition uses stream 0 and
//! the `P` acquisition stream 1, so the two quadratures are independent runs
//! even under the same seed. Time index `i` consumes exactly two `u64` words
//! starting at word position `4·i` (in 32-bit words); they become a pair of
//! standard normals by the Box–Muller transform:
//!
//! ```text
//! u1 = ((w0 >> 11) + 1) · 2⁻⁵³        ∈ (0, 1]
//! u2 =  (w1 >> 11)      · 2⁻⁵³        ∈ [0, 1)
//! z0 = √(−2 ln u1) · cos(2π u2)       → Alice
//! z1 = √(−2 ln u1) · sin(2π u2)       → Bob
//! ```
//!
//! and are correlated with the lower Cholesky factor of the 2×2 block. A
//! record can therefore be regenerated from any offset, and batching does
//! not change the values.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::criteria::conditional_from_moments;
use crate::error::{invalid, Error, Result};
use crate::gaussian::{GaussianState, Quadrature, Side};
use crate::units::{fmt_sig, round_sig};

/// Record length used by tests and quick runs.
pub const DEFAULT_COUNT: usize = 1_000_000;

/// Record length of a full-scale acquisition.
pub const FULL_ACQUISITION_COUNT: usize = 5_000_000;

/// Cross `X`–`P` moments above this make quadrature-wise sampling inexact.
pub const CROSS_TERM_TOL: f64 = 1e-9;

/// One homodyne record of one quadrature at one station.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleBatch {
    pub mode: Side,
    pub quadrature: Quadrature,
    pub seed: u64,
    pub values: Vec<f64>,
}

impl SampleBatch {
    pub fn count(&self) -> usize {
        self.values.len()
    }
}

/// Point estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub point_estimate: f64,
    pub std_error: f64,
    pub count: usize,
}

fn stream_id(q: Quadrature) -> u64 {
    match q {
        Quadrature::X => 0,
        Quadrature::P => 1,
    }
}

/// Standard-normal pairs in the documented stream order.
pub struct NormalPairs {
    rng: ChaCha20Rng,
}

impl NormalPairs {
    pub fn new(seed: u64, quadrature: Quadrature, start_index: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(stream_id(quadrature));
        rng.set_word_pos(4 * start_index as u128);
        Self { rng }
    }
}

impl Iterator for NormalPairs {
    type Item = (f64, f64);

    fn next(&mut self) -> Option<(f64, f64)> {
        const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
        let u1 = ((self.rng.next_u64() >> 11) + 1) as f64 * SCALE;
        let u2 = (self.rng.next_u64() >> 11) as f64 * SCALE;
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        Some((r * c, r * s))
    }
}

/// Joint `quadrature` records of modes 0 (A) and 1 (B) of a two-mode state.
pub fn sample_joint_quadratures(
    state: &GaussianState,
    quadrature: Quadrature,
    count: usize,
    seed: u64,
) -> Result<(SampleBatch, SampleBatch)> {
    sample_joint_range(state, quadrature, 0, count, seed)
}

/// Time indices `start .. start + count` of the record that
/// [`sample_joint_quadratures`] would produce.
pub fn sample_joint_range(
    state: &GaussianState,
    quadrature: Quadrature,
    start: u64,
    count: usize,
    seed: u64,
) -> Result<(SampleBatch, SampleBatch)> {
    if count == 0 {
        return Err(invalid("sample count must be at least 1"));
    }
    if state.n_modes() != 2 {
        return Err(invalid(format!(
            "expected a two-mode state, got {} modes",
            state.n_modes()
        )));
    }
    if !state.is_physical() {
        return Err(Error::UnphysicalState(
            "cannot sample an unphysical state".into(),
        ));
    }
    let stats = state.two_mode_stats(0, 1)?;
    let cross = stats.max_cross_xp();
    if cross > CROSS_TERM_TOL {
        return Err(Error::UnsupportedState(format!(
            "X–P cross moment {cross} is nonzero; quadrature-wise sampling would drop it"
        )));
    }
    let k = quadrature.offset();
    let (mean_a, mean_b) = (state.mean()[k], state.mean()[2 + k]);
    let var_a = stats.var(Side::A, quadrature);
    let var_b = stats.var(Side::B, quadrature);
    let l11 = var_a.sqrt();
    let l21 = if l11 > 0.0 {
        stats.cov(quadrature) / l11
    } else {
        0.0
    };
    let l22 = (var_b - l21 * l21).max(0.0).sqrt();

    let mut a = Vec::with_capacity(count);
    let mut b = Vec::with_capacity(count);
    for (z0, z1) in NormalPairs::new(seed, quadrature, start).take(count) {
        a.push(mean_a + l11 * z0);
        b.push(mean_b + l21 * z0 + l22 * z1);
    }
    let batch = |mode, values| SampleBatch {
        mode,
        quadrature,
        seed,
        values,
    };
    Ok((batch(Side::A, a), batch(Side::B, b)))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Unbiased sample covariance (two-pass).
fn sample_cov(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let s: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    s / (a.len() - 1) as f64
}

fn variance_report(values: &[f64]) -> Result<EstimateReport> {
    let n = values.len();
    if n < 2 {
        return Err(invalid(format!("need at least 2 samples, got {n}")));
    }
    let var = sample_cov(values, values);
    Ok(EstimateReport {
        point_estimate: var,
        std_error: var * (2.0 / (n - 1) as f64).sqrt(),
        count: n,
    })
}

/// Unbiased sample variance with the normal-theory error
/// `var·√(2/(n−1))`.
pub fn estimate_variance(batch: &SampleBatch) -> Result<EstimateReport> {
    variance_report(&batch.values)
}

fn check_paired(a: &SampleBatch, b: &SampleBatch) -> Result<()> {
    if a.count() != b.count() {
        return Err(invalid(format!(
            "paired records differ in length ({} vs {})",
            a.count(),
            b.count()
        )));
    }
    if a.quadrature != b.quadrature || a.seed != b.seed {
        return Err(invalid("records do not come from the same acquisition"));
    }
    Ok(())
}

/// Conditional variance of `target` given `other`: the fitted gain
/// `ĝ = Cov/Var(other)` and the sample variance of `target − ĝ·other`.
pub fn estimate_conditional_variance(
    target: &SampleBatch,
    other: &SampleBatch,
) -> Result<(EstimateReport, f64)> {
    check_paired(target, other)?;
    if target.count() < 2 {
        return Err(invalid("need at least 2 samples"));
    }
    let var_b = sample_cov(&other.values, &other.values);
    let cov = sample_cov(&target.values, &other.values);
    let gain = conditional_from_moments(0.0, var_b, cov)?.gain;
    let residual: Vec<f64> = target
        .values
        .iter()
        .zip(&other.values)
        .map(|(x, y)| x - gain * y)
        .collect();
    Ok((variance_report(&residual)?, gain))
}

/// Standard deviation of `a − b`, with error `σ/√(2(n−1))`.
pub fn difference_std(a: &SampleBatch, b: &SampleBatch) -> Result<EstimateReport> {
    check_paired(a, b)?;
    let diff: Vec<f64> = a.values.iter().zip(&b.values).map(|(x, y)| x - y).collect();
    let var = variance_report(&diff)?;
    let sd = var.point_estimate.sqrt();
    Ok(EstimateReport {
        point_estimate: sd,
        std_error: sd / (2.0 * (diff.len() - 1) as f64).sqrt(),
        count: diff.len(),
    })
}

/// Empirical EPR criterion for one inference direction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectionEstimate {
    pub condvar_x: EstimateReport,
    pub condvar_p: EstimateReport,
    pub gain_x: f64,
    pub gain_p: f64,
    pub product: EstimateReport,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EprEstimate {
    pub ab: DirectionEstimate,
    pub ba: DirectionEstimate,
}

fn direction_estimate(
    x_target: &SampleBatch,
    x_other: &SampleBatch,
    p_target: &SampleBatch,
    p_other: &SampleBatch,
) -> Result<DirectionEstimate> {
    let (cx, gain_x) = estimate_conditional_variance(x_target, x_other)?;
    let (cp, gain_p) = estimate_conditional_variance(p_target, p_other)?;
    let value = cx.point_estimate * cp.point_estimate;
    // First-order propagation; X and P come from independent acquisitions.
    let rel = |r: &EstimateReport| {
        if r.point_estimate > 0.0 {
            r.std_error / r.point_estimate
        } else {
            0.0
        }
    };
    let std_error = value * (rel(&cx).powi(2) + rel(&cp).powi(2)).sqrt();
    Ok(DirectionEstimate {
        condvar_x: cx,
        condvar_p: cp,
        gain_x,
        gain_p,
        product: EstimateReport {
            point_estimate: value,
            std_error,
            count: cx.count.min(cp.count),
        },
    })
}

/// EPR products in both directions from the four records.
pub fn estimate_epr_product(
    xa: &SampleBatch,
    xb: &SampleBatch,
    pa: &SampleBatch,
    pb: &SampleBatch,
) -> Result<EprEstimate> {
    let expect = |b: &SampleBatch, mode, q| {
        if b.mode == mode && b.quadrature == q {
            Ok(())
        } else {
            Err(invalid(format!(
                "expected a {}{} record, got {}{}",
                q.label(),
                mode.label(),
                b.quadrature.label(),
                b.mode.label()
            )))
        }
    };
    expect(xa, Side::A, Quadrature::X)?;
    expect(xb, Side::B, Quadrature::X)?;
    expect(pa, Side::A, Quadrature::P)?;
    expect(pb, Side::B, Quadrature::P)?;
    Ok(EprEstimate {
        ab: direction_estimate(xa, xb, pa, pb)?,
        ba: direction_estimate(xb, xa, pb, pa)?,
    })
}

/// Sidecar metadata written next to every exported record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchMetadata {
    pub mode: Side,
    pub quadrature: Quadrature,
    pub seed: u64,
    pub count: usize,
    pub stream: u64,
    pub state: String,
    pub tool_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_digest: Option<String>,
}

impl BatchMetadata {
    /// Metadata for `batch`; `state` describes the sampled state for external
    /// tools.
    pub fn for_batch(batch: &SampleBatch, state: &str) -> Self {
        Self {
            mode: batch.mode,
            quadrature: batch.quadrature,
            seed: batch.seed,
            count: batch.count(),
            stream: stream_id(batch.quadrature),
            state: state.to_string(),
            tool_version: crate::VERSION.to_string(),
            config_digest: None,
        }
    }

    pub fn write_json<W: Write>(&self, mut out: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut out, self)?;
        writeln!(out)?;
        Ok(())
    }
}

/// Path of the JSON sidecar for a CSV record.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// Write the `index,value` CSV body of a record.
pub fn write_batch_csv<W: Write>(batch: &SampleBatch, out: W) -> Result<()> {
    let mut out = BufWriter::new(out);
    writeln!(out, "index,value")?;
    for (i, v) in batch.values.iter().enumerate() {
        writeln!(out, "{i},{}", fmt_sig(*v))?;
    }
    out.flush()?;
    Ok(())
}

/// Write `index,value` CSV plus its JSON sidecar.
pub fn write_batch(batch: &SampleBatch, csv_path: &Path, state: &str) -> Result<()> {
    write_batch_csv(batch, fs::File::create(csv_path)?)?;
    BatchMetadata::for_batch(batch, state).write_json(fs::File::create(sidecar_path(csv_path))?)
}

/// Read a record written by [`write_batch`]. Values round to 12 significant
/// digits on export.
pub fn read_batch(csv_path: &Path) -> Result<SampleBatch> {
    let meta: BatchMetadata = serde_json::from_slice(&fs::read(sidecar_path(csv_path))?)?;
    let mut rdr = csv::Reader::from_path(csv_path).map_err(csv_error)?;
    let headers = rdr.headers().map_err(csv_error)?.clone();
    if headers.iter().collect::<Vec<_>>() != ["index", "value"] {
        return Err(Error::Parse {
            line: 1,
            message: "expected header `index,value`".into(),
        });
    }
    let mut values = Vec::with_capacity(meta.count);
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map_or(0, |p| p.line());
        let parse = |s: &str| {
            s.trim().parse::<f64>().map_err(|e| Error::Parse {
                line,
                message: e.to_string(),
            })
        };
        let index = parse(&rec[0])?;
        if index != values.len() as f64 {
            return Err(Error::Parse {
                line,
                message: format!("index {index} out of sequence"),
            });
        }
        values.push(parse(&rec[1])?);
    }
    if values.len() != meta.count {
        return Err(invalid(format!(
            "record holds {} values but metadata says {}",
            values.len(),
            meta.count
        )));
    }
    Ok(SampleBatch {
        mode: meta.mode,
        quadrature: meta.quadrature,
        seed: meta.seed,
        values,
    })
}

pub(crate) fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        kind => Error::Parse {
            line,
            message: format!("{kind:?}"),
        },
    }
}

impl EstimateReport {
    /// Copy rounded to the serialized precision.
    pub fn rounded(&self) -> Self {
        Self {
            point_estimate: round_sig(self.point_estimate),
            std_error: round_sig(self.std_error),
            count: self.count,
        }
    }
}
