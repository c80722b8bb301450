//! Below-threshold optical parametric oscillator as a squeezed-light source.
//!
//! The detected quadrature variances at sideband frequency `f` are
//!
//! ```text
//! V_sqz,asqz = 1 ± ηγ · 4√(P/P_th) / ((1 ∓ √(P/P_th))² + 4K²),   K = 2πf/κ,   κ = (T+L)c/l
//! ```
//!
//! Only the product `ηγ` enters, so it is the only efficiency that can be
//! recovered from variance data. At `ηγ = 1` the two variances multiply to
//! exactly 1 for every `K`: the cavity output is a pure squeezed state at each
//! sideband, and all impurity comes from the `1 − ηγ` loss.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::gaussian::{GaussianState, Quadrature};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 2.997_924_58e8;

/// Parameters of the squeezer and its detection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceParams {
    /// Detection efficiency.
    pub eta: f64,
    /// Cavity escape efficiency.
    pub gamma: f64,
    pub pump_mw: f64,
    pub p_th_mw: f64,
    /// Output coupler power transmission.
    pub t_coupler: f64,
    pub intracavity_loss: f64,
    /// Cavity round-trip length in meters.
    pub roundtrip_m: f64,
    /// Sideband (Fourier) frequency in hertz.
    pub freq_hz: f64,
}

impl Default for SourceParams {
    /// 1550 nm squeezer operating point: `ηγ = 0.91`, `P_th = 445 mW`,
    /// `T + L = 0.105`, `l = 79.8 mm`, `f = 5 MHz`, pump off.
    fn default() -> Self {
        Self {
            eta: 0.91,
            gamma: 1.0,
            pump_mw: 0.0,
            p_th_mw: 445.0,
            t_coupler: 0.105,
            intracavity_loss: 0.0,
            roundtrip_m: 0.0798,
            freq_hz: 5.0e6,
        }
    }
}

/// Squeezed and anti-squeezed quadrature variances, vacuum-normalized.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SqueezerVariances {
    pub sqz: f64,
    pub asqz: f64,
}

impl SqueezerVariances {
    pub fn sqz_db(&self) -> f64 {
        crate::units::to_db(self.sqz)
    }

    pub fn asqz_db(&self) -> f64 {
        crate::units::to_db(self.asqz)
    }

    /// `1/√(V_sqz·V_asqz)`, the purity of the corresponding single-mode state.
    pub fn purity(&self) -> f64 {
        1.0 / (self.sqz * self.asqz).sqrt()
    }
}

impl SourceParams {
    pub fn with_pump(&self, pump_mw: f64) -> Self {
        Self {
            pump_mw,
            ..self.clone()
        }
    }

    pub fn eta_gamma(&self) -> f64 {
        self.eta * self.gamma
    }

    /// Cavity decay rate `κ = (T + L)·c / l` in s⁻¹.
    pub fn kappa(&self) -> f64 {
        (self.t_coupler + self.intracavity_loss) * SPEED_OF_LIGHT / self.roundtrip_m
    }

    /// Normalized sideband frequency `K(f) = 2πf/κ`.
    pub fn k_factor(&self) -> f64 {
        linewidth_ratio(
            self.t_coupler + self.intracavity_loss,
            self.roundtrip_m,
            self.freq_hz,
        )
    }

    /// Range checks on every field, including `P < P_th`.
    pub fn validate(&self) -> Result<()> {
        let in_unit = |v: f64| v > 0.0 && v <= 1.0;
        if !in_unit(self.eta) {
            return Err(invalid(format!("eta {} outside (0, 1]", self.eta)));
        }
        if !in_unit(self.gamma) {
            return Err(invalid(format!("gamma {} outside (0, 1]", self.gamma)));
        }
        if !(self.p_th_mw > 0.0) || !self.p_th_mw.is_finite() {
            return Err(invalid(format!(
                "threshold {} mW must be positive",
                self.p_th_mw
            )));
        }
        if !(self.pump_mw >= 0.0) || !self.pump_mw.is_finite() {
            return Err(invalid(format!(
                "pump {} mW must be nonnegative",
                self.pump_mw
            )));
        }
        if !(self.t_coupler > 0.0 && self.t_coupler < 1.0) {
            return Err(invalid(format!(
                "t_coupler {} outside (0, 1)",
                self.t_coupler
            )));
        }
        if !(self.intracavity_loss >= 0.0 && self.intracavity_loss < 1.0) {
            return Err(invalid(format!(
                "intracavity_loss {} outside [0, 1)",
                self.intracavity_loss
            )));
        }
        if !(self.roundtrip_m > 0.0) || !self.roundtrip_m.is_finite() {
            return Err(invalid(format!(
                "roundtrip_m {} must be positive",
                self.roundtrip_m
            )));
        }
        if !(self.freq_hz > 0.0) || !self.freq_hz.is_finite() {
            return Err(invalid(format!(
                "freq_hz {} must be positive",
                self.freq_hz
            )));
        }
        if self.pump_mw >= self.p_th_mw {
            return Err(Error::AboveThreshold {
                pump_mw: self.pump_mw,
                p_th_mw: self.p_th_mw,
            });
        }
        Ok(())
    }

    /// Detected variances, including the `ηγ` efficiency.
    pub fn squeezer_variances(&self) -> Result<SqueezerVariances> {
        self.validate()?;
        Ok(detected_variances(
            self.eta_gamma(),
            self.pump_mw / self.p_th_mw,
            self.k_factor(),
        ))
    }

    /// Variances leaving a lossless source (`ηγ = 1`).
    pub fn pure_state_variances(&self) -> Result<SqueezerVariances> {
        self.validate()?;
        Ok(detected_variances(
            1.0,
            self.pump_mw / self.p_th_mw,
            self.k_factor(),
        ))
    }
}

/// `K = 2πf / ((T+L)·c/l)`.
pub fn linewidth_ratio(t_plus_l: f64, roundtrip_m: f64, freq_hz: f64) -> f64 {
    2.0 * PI * freq_hz * roundtrip_m / (t_plus_l * SPEED_OF_LIGHT)
}

/// Squeezer variances for efficiency `eta_gamma`, normalized pump
/// `pump_ratio = P/P_th` and normalized sideband frequency `k`.
pub fn detected_variances(eta_gamma: f64, pump_ratio: f64, k: f64) -> SqueezerVariances {
    let x = pump_ratio.sqrt();
    let k2 = 4.0 * k * k;
    SqueezerVariances {
        sqz: 1.0 - eta_gamma * 4.0 * x / ((1.0 + x).powi(2) + k2),
        asqz: 1.0 + eta_gamma * 4.0 * x / ((1.0 - x).powi(2) + k2),
    }
}

/// Where classical excess noise enters the chain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseLocation {
    /// On the squeezed mode, before the entangling beam splitter.
    AtSource,
    /// Independently on each homodyne detector, after all loss.
    AtDetectors,
}

/// Classical Gaussian excess noise of variance `eps` on one quadrature.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExcessNoise {
    pub location: NoiseLocation,
    pub quadrature: Quadrature,
    pub eps: f64,
}

impl ExcessNoise {
    /// Detector noise on the phase quadrature.
    pub fn detector_phase(eps: f64) -> Self {
        Self {
            location: NoiseLocation::AtDetectors,
            quadrature: Quadrature::P,
            eps,
        }
    }

    pub fn with_eps(&self, eps: f64) -> Self {
        Self { eps, ..*self }
    }
}

impl Default for ExcessNoise {
    fn default() -> Self {
        Self::detector_phase(0.0)
    }
}

/// Optical loss on each output arm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmLoss {
    pub mu_a: f64,
    pub mu_b: f64,
}

impl ArmLoss {
    pub fn symmetric(mu: f64) -> Self {
        Self { mu_a: mu, mu_b: mu }
    }

    /// `1 − ηγ` on both arms.
    pub fn from_efficiency(params: &SourceParams) -> Self {
        Self::symmetric(1.0 - params.eta_gamma())
    }

    pub fn is_symmetric(&self) -> bool {
        self.mu_a == self.mu_b
    }
}

/// Two-mode v-class state: the lossless source output is mixed with vacuum
/// on a balanced beam splitter, each arm then suffers its loss, and optional
/// excess noise is added where its location says.
///
/// Mode 0 is Alice (A), mode 1 is Bob (B). The squeezed quadrature is `X`.
pub fn build_vclass_state(
    params: &SourceParams,
    loss: ArmLoss,
    noise: Option<&ExcessNoise>,
) -> Result<GaussianState> {
    let v = params.pure_state_variances()?;
    let mut source = GaussianState::squeezed(v.sqz, v.asqz, 0.0)?;
    if let Some(n) = noise.filter(|n| n.location == NoiseLocation::AtSource) {
        source = source.add_classical_noise(0, n.quadrature, n.eps)?;
    }
    let mut state = source
        .tensor(&GaussianState::vacuum(1)?)
        .beam_splitter(0, 1, 0.5)?
        .loss_channel(0, loss.mu_a)?
        .loss_channel(1, loss.mu_b)?;
    if let Some(n) = noise.filter(|n| n.location == NoiseLocation::AtDetectors) {
        state = state
            .add_classical_noise(0, n.quadrature, n.eps)?
            .add_classical_noise(1, n.quadrature, n.eps)?;
    }
    Ok(state)
}
