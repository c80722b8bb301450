//! Entanglement figures of merit computed from two-mode second moments.
//!
//! * Reid's EPR criterion: the product of the `X` and `P` conditional
//!   variances is below 1. The optimal inference gain has the closed form
//!   `g = Cov(q_A, q_B) / Var(q_B)`.
//! * The closed form `4 / (2 + V_asqz + V_sqz)` for a lossless v-class state
//!   and the symmetric-loss margin `(1 − V_sqz)²(1 − μ)(1/3 − μ)`.
//! * Duan's sum criterion (bound 4 with unit vacuum variance).
//! * Entanglement of formation of symmetric two-mode states, from the
//!   smallest symplectic eigenvalue of the partially transposed covariance.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gaussian::{GaussianState, Quadrature, Side, TwoModeStats};

/// Which party's outcome is inferred from which.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    /// Infer A's outcome from B's measurement.
    AGivenB,
    /// Infer B's outcome from A's measurement.
    BGivenA,
}

impl Direction {
    pub fn target(self) -> Side {
        match self {
            Direction::AGivenB => Side::A,
            Direction::BGivenA => Side::B,
        }
    }
}

/// Minimum of `Var(a − g·b)` over the gain `g`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionalVariance {
    pub value: f64,
    pub gain: f64,
}

/// `min_g Var(a − g·b)` from the moments of `a` and `b`.
///
/// A constant conditioning variable (`var_b == 0`) carries no information:
/// the result is `var_a` at gain 0.
pub fn conditional_from_moments(
    var_a: f64,
    var_b: f64,
    cov_ab: f64,
) -> Result<ConditionalVariance> {
    if !(var_a >= 0.0 && var_b >= 0.0) || !cov_ab.is_finite() {
        return Err(invalid(format!(
            "variances must be nonnegative (got {var_a}, {var_b})"
        )));
    }
    if var_b == 0.0 {
        return Ok(ConditionalVariance {
            value: var_a,
            gain: 0.0,
        });
    }
    let gain = cov_ab / var_b;
    let value = (var_a - cov_ab * gain).max(0.0);
    Ok(ConditionalVariance { value, gain })
}

pub fn conditional_variance(
    stats: &TwoModeStats,
    q: Quadrature,
    direction: Direction,
) -> Result<ConditionalVariance> {
    let target = direction.target();
    conditional_from_moments(
        stats.var(target, q),
        stats.var(target.other(), q),
        stats.cov(q),
    )
}

/// Conditional variances, gains and EPR products in both directions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EprResult {
    pub condvar_x_ab: f64,
    pub condvar_p_ab: f64,
    pub condvar_x_ba: f64,
    pub condvar_p_ba: f64,
    pub gain_x_ab: f64,
    pub gain_p_ab: f64,
    pub gain_x_ba: f64,
    pub gain_p_ba: f64,
    pub product_ab: f64,
    pub product_ba: f64,
}

impl EprResult {
    pub fn product(&self, direction: Direction) -> f64 {
        match direction {
            Direction::AGivenB => self.product_ab,
            Direction::BGivenA => self.product_ba,
        }
    }

    pub fn mean_product(&self) -> f64 {
        0.5 * (self.product_ab + self.product_ba)
    }

    pub fn is_epr_entangled(&self, direction: Direction) -> bool {
        self.product(direction) < 1.0
    }

    pub fn condvar(&self, q: Quadrature, direction: Direction) -> f64 {
        match (q, direction) {
            (Quadrature::X, Direction::AGivenB) => self.condvar_x_ab,
            (Quadrature::P, Direction::AGivenB) => self.condvar_p_ab,
            (Quadrature::X, Direction::BGivenA) => self.condvar_x_ba,
            (Quadrature::P, Direction::BGivenA) => self.condvar_p_ba,
        }
    }
}

pub fn epr_product(stats: &TwoModeStats) -> Result<EprResult> {
    let xab = conditional_variance(stats, Quadrature::X, Direction::AGivenB)?;
    let pab = conditional_variance(stats, Quadrature::P, Direction::AGivenB)?;
    let xba = conditional_variance(stats, Quadrature::X, Direction::BGivenA)?;
    let pba = conditional_variance(stats, Quadrature::P, Direction::BGivenA)?;
    Ok(EprResult {
        condvar_x_ab: xab.value,
        condvar_p_ab: pab.value,
        condvar_x_ba: xba.value,
        condvar_p_ba: pba.value,
        gain_x_ab: xab.gain,
        gain_p_ab: pab.gain,
        gain_x_ba: xba.gain,
        gain_p_ba: pba.gain,
        product_ab: xab.value * pab.value,
        product_ba: xba.value * pba.value,
    })
}

/// EPR product of a lossless v-class state, `4 / (2 + V_asqz + V_sqz)`.
pub fn epr_pure_vclass(v_sqz: f64, v_asqz: f64) -> Result<f64> {
    if !(v_sqz > 0.0 && v_asqz > 0.0) {
        return Err(invalid(format!(
            "variances must be positive (got {v_sqz}, {v_asqz})"
        )));
    }
    Ok(4.0 / (2.0 + v_asqz + v_sqz))
}

/// `(1 − V_sqz)²(1 − μ)(1/3 − μ)` for a pure squeezed input under symmetric
/// loss `μ`; positive exactly when EPR entanglement survives.
pub fn vclass_loss_margin(v_sqz: f64, mu: f64) -> Result<f64> {
    if !(v_sqz > 0.0 && v_sqz <= 1.0) {
        return Err(invalid(format!("v_sqz {v_sqz} outside (0, 1]")));
    }
    if !(0.0..=1.0).contains(&mu) {
        return Err(invalid(format!("loss {mu} outside [0, 1]")));
    }
    Ok((1.0 - v_sqz).powi(2) * (1.0 - mu) * (1.0 / 3.0 - mu))
}

/// EPR product (A|B) of a pure v-class state, squeezed variance `v_sqz`,
/// with loss `mu` on both arms, evaluated through the state pipeline.
pub fn vclass_epr_under_loss(v_sqz: f64, mu: f64) -> Result<EprResult> {
    let stats = GaussianState::squeezed(v_sqz, 1.0 / v_sqz, 0.0)?
        .tensor(&GaussianState::vacuum(1)?)
        .beam_splitter(0, 1, 0.5)?
        .loss_channel(0, mu)?
        .loss_channel(1, mu)?
        .two_mode_stats(0, 1)?;
    epr_product(&stats)
}

/// Symmetric loss at which the EPR product of a pure v-class state reaches 1,
/// found by bisection on the pipeline product.
pub fn vclass_loss_threshold(v_sqz: f64) -> Result<f64> {
    if !(v_sqz > 0.0 && v_sqz < 1.0) {
        return Err(invalid(format!("v_sqz {v_sqz} outside (0, 1)")));
    }
    let excess = |mu: f64| vclass_epr_under_loss(v_sqz, mu).map(|r| r.product_ab - 1.0);
    let (mut lo, mut hi) = (0.0, 0.5);
    while excess(hi)? <= 0.0 {
        lo = hi;
        hi = 0.5 * (hi + 1.0);
        if 1.0 - hi < 1e-12 {
            return Err(Error::Internal("no EPR threshold below total loss".into()));
        }
    }
    while hi - lo > 1e-15 {
        let mid = 0.5 * (lo + hi);
        if excess(mid)? <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DuanResult {
    pub value: f64,
    /// Separable states satisfy `value ≥ bound`.
    pub bound: f64,
}

impl DuanResult {
    pub fn is_inseparable(&self) -> bool {
        self.value < self.bound
    }
}

/// `min over signs s, s' of Var(X_A + s·X_B) + Var(P_A + s'·P_B)`.
pub fn duan_inseparability(stats: &TwoModeStats) -> DuanResult {
    let sum =
        |q: Quadrature| stats.var(Side::A, q) + stats.var(Side::B, q) - 2.0 * stats.cov(q).abs();
    DuanResult {
        value: sum(Quadrature::X) + sum(Quadrature::P),
        bound: 4.0,
    }
}

/// Largest relative mismatch of the local determinants accepted as symmetric.
pub const EOF_SYMMETRY_TOL: f64 = 1e-6;

/// Smallest symplectic eigenvalue of the partially transposed covariance.
pub fn partial_transpose_min_eigenvalue(stats: &TwoModeStats) -> f64 {
    let det = stats.block().determinant();
    let delta = stats.local_det(Side::A) + stats.local_det(Side::B) - 2.0 * stats.cross_det();
    let disc = (delta * delta - 4.0 * det).max(0.0);
    // 2·det / (Δ + √(Δ² − 4 det)) avoids cancellation for strong entanglement.
    (2.0 * det / (delta + disc.sqrt())).max(0.0).sqrt()
}

/// Entanglement of formation, in bits, of a symmetric two-mode Gaussian state
/// (equal local determinants). Asymmetric states are rejected.
pub fn eof_symmetric(stats: &TwoModeStats) -> Result<f64> {
    let (da, db) = (stats.local_det(Side::A), stats.local_det(Side::B));
    if (da - db).abs() > EOF_SYMMETRY_TOL * da.max(db).max(1.0) {
        return Err(Error::UnsupportedState(format!(
            "entanglement of formation needs a symmetric state (local determinants {da}, {db})"
        )));
    }
    let nu = partial_transpose_min_eigenvalue(stats);
    if nu >= 1.0 {
        return Ok(0.0);
    }
    let c_plus = (1.0 / nu.sqrt() + nu.sqrt()).powi(2) / 4.0;
    let c_minus = (1.0 / nu.sqrt() - nu.sqrt()).powi(2) / 4.0;
    let tail = if c_minus > 0.0 {
        c_minus * c_minus.log2()
    } else {
        0.0
    };
    Ok((c_plus * c_plus.log2() - tail).max(0.0))
}

/// Result of rotating both modes by the same phase and recomputing the EPR
/// criterion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseInvarianceReport {
    pub reference: EprResult,
    pub rotated: Vec<(f64, EprResult)>,
    /// Largest change of either direction's product over all angles.
    pub max_deviation: f64,
}

pub fn phase_invariance_check(
    state: &GaussianState,
    thetas: &[f64],
) -> Result<PhaseInvarianceReport> {
    let reference = epr_product(&state.two_mode_stats(0, 1)?)?;
    let mut rotated = Vec::with_capacity(thetas.len());
    let mut max_deviation: f64 = 0.0;
    for &theta in thetas {
        let r = state.phase_rotation(0, theta)?.phase_rotation(1, theta)?;
        let epr = epr_product(&r.two_mode_stats(0, 1)?)?;
        max_deviation = max_deviation
            .max((epr.product_ab - reference.product_ab).abs())
            .max((epr.product_ba - reference.product_ba).abs());
        rotated.push((theta, epr));
    }
    Ok(PhaseInvarianceReport {
        reference,
        rotated,
        max_deviation,
    })
}
