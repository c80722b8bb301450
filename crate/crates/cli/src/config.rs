//! Run configuration.
//!
//! The file is flat `key = value` text, one entry per line, `#` starting a
//! comment. Numbers are plain decimals or exponent form, strings are quoted
//! and the pump grid is a bracketed list:
//!
//! ```text
//! eta = 0.91
//! pump_mw = 225
//! mu_a = 0.09
//! noise_location = "at_detectors"
//! pump_grid = [25, 75, 125, 175, 225, 275, 325]
//! seed = 7
//! ```
//!
//! Every key is optional; unknown keys are rejected. The grammar is the flat
//! subset of TOML, so any TOML parser reads these files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use vclass_core::sampling::DEFAULT_COUNT;
use vclass_core::{ArmLoss, ExcessNoise, NoiseLocation, Quadrature, SourceParams};

use crate::error::CliError;

/// Configuration as written in the file.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub eta: Option<f64>,
    pub gamma: Option<f64>,
    pub pump_mw: Option<f64>,
    pub p_th_mw: Option<f64>,
    pub t_coupler: Option<f64>,
    pub intracavity_loss: Option<f64>,
    pub roundtrip_m: Option<f64>,
    pub freq_hz: Option<f64>,
    pub mu_a: Option<f64>,
    pub mu_b: Option<f64>,
    pub noise_location: Option<NoiseLocation>,
    pub noise_quadrature: Option<String>,
    pub noise_eps: Option<f64>,
    pub target_epr: Option<f64>,
    pub pump_grid: Option<Vec<f64>>,
    pub sample_count: Option<u64>,
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
}

/// Configuration with defaults filled in and every range checked.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub source: SourceParams,
    pub loss: ArmLoss,
    pub noise: ExcessNoise,
    /// When set, `noise.eps` is solved so the A|B EPR product at `pump_mw`
    /// equals this value.
    pub target_epr: Option<f64>,
    pub pump_grid: Vec<f64>,
    pub sample_count: usize,
    pub seed: u64,
    #[serde(skip)]
    pub output: Option<PathBuf>,
}

fn parse_quadrature(s: &str) -> Result<Quadrature, CliError> {
    match s.to_ascii_lowercase().as_str() {
        "x" => Ok(Quadrature::X),
        "p" => Ok(Quadrature::P),
        other => Err(CliError::Config(format!(
            "noise_quadrature must be \"x\" or \"p\", got {other:?}"
        ))),
    }
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(CliError::Config(msg()))
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        Self::resolve(raw)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Fill defaults and validate. Nothing is computed before this succeeds.
    pub fn resolve(raw: RawConfig) -> Result<Self, CliError> {
        let d = SourceParams::default();
        let source = SourceParams {
            eta: raw.eta.unwrap_or(d.eta),
            gamma: raw.gamma.unwrap_or(d.gamma),
            pump_mw: raw.pump_mw.unwrap_or(d.pump_mw),
            p_th_mw: raw.p_th_mw.unwrap_or(d.p_th_mw),
            t_coupler: raw.t_coupler.unwrap_or(d.t_coupler),
            intracavity_loss: raw.intracavity_loss.unwrap_or(d.intracavity_loss),
            roundtrip_m: raw.roundtrip_m.unwrap_or(d.roundtrip_m),
            freq_hz: raw.freq_hz.unwrap_or(d.freq_hz),
        };
        source
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;

        // Arm loss defaults to the detection inefficiency `1 − ηγ`.
        let default_mu = ArmLoss::from_efficiency(&source).mu_a;
        let loss = ArmLoss {
            mu_a: raw.mu_a.unwrap_or(default_mu),
            mu_b: raw.mu_b.or(raw.mu_a).unwrap_or(default_mu),
        };
        for (name, mu) in [("mu_a", loss.mu_a), ("mu_b", loss.mu_b)] {
            check((0.0..=1.0).contains(&mu), || {
                format!("{name} {mu} outside [0, 1]")
            })?;
        }

        let eps = raw.noise_eps.unwrap_or(0.0);
        check(eps >= 0.0 && eps.is_finite(), || {
            format!("noise_eps {eps} must be nonnegative")
        })?;
        let noise = ExcessNoise {
            location: raw.noise_location.unwrap_or(NoiseLocation::AtDetectors),
            quadrature: match raw.noise_quadrature.as_deref() {
                Some(q) => parse_quadrature(q)?,
                None => Quadrature::P,
            },
            eps,
        };
        if let Some(t) = raw.target_epr {
            check(t > 0.0 && t.is_finite(), || {
                format!("target_epr {t} must be positive")
            })?;
            check(raw.noise_eps.is_none(), || {
                "noise_eps and target_epr are mutually exclusive".into()
            })?;
        }

        let pump_grid = raw.pump_grid.unwrap_or_else(|| vec![source.pump_mw]);
        check(!pump_grid.is_empty(), || "pump_grid is empty".into())?;
        for &p in &pump_grid {
            source
                .with_pump(p)
                .validate()
                .map_err(|e| CliError::Config(format!("pump_grid: {e}")))?;
        }

        let sample_count = raw.sample_count.unwrap_or(DEFAULT_COUNT as u64);
        check(sample_count >= 2, || {
            format!("sample_count {sample_count} must be at least 2")
        })?;
        let sample_count = usize::try_from(sample_count)
            .map_err(|_| CliError::Config(format!("sample_count {sample_count} too large")))?;

        Ok(Self {
            source,
            loss,
            noise,
            target_epr: raw.target_epr,
            pump_grid,
            sample_count,
            seed: raw.seed.unwrap_or(0),
            output: raw.output,
        })
    }

    /// SHA-256 of the canonical JSON form. Output paths are excluded so the
    /// same experiment written elsewhere keeps its digest.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }
}
