use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use vclass_core::criteria::{vclass_loss_margin, DuanResult};
use vclass_core::fitting::{fit_excess_noise_for_product, FitResult};
use vclass_core::sampling::{
    difference_std, estimate_epr_product, sample_joint_quadratures, write_batch_csv, BatchMetadata,
    EprEstimate, EstimateReport, SampleBatch,
};
use vclass_core::units::fmt_sig;
use vclass_core::{
    build_vclass_state, duan_inseparability, eof_symmetric, epr_product, fit_squeezer_model,
    ArmLoss, EprResult, ExcessNoise, FixedCavity, Quadrature, Side, SourceParams, TwoModeStats,
    VarianceDataset,
};

use crate::config::RunConfig;
use crate::error::{exit, CliError};
use crate::output::{to_json, Staged};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

/// Frozen sweep CSV header.
pub const SWEEP_HEADER: &str = "pump_mw,var_sqz_db,var_asqz_db,condvar_x_ab,condvar_p_ab,\
condvar_x_ba,condvar_p_ba,epr_ab,epr_ba,duan,eof,margin_eq3";

/// Fields embedded in every artifact.
#[derive(Clone, Debug, Serialize)]
pub struct Provenance {
    pub tool_version: String,
    pub config_digest: String,
    pub seed: u64,
}

impl Provenance {
    pub fn of(cfg: &RunConfig) -> Self {
        Self {
            tool_version: vclass_core::VERSION.to_string(),
            config_digest: cfg.digest(),
            seed: cfg.seed,
        }
    }

    fn csv_comment(&self) -> String {
        format!(
            "# tool_version={} config_digest={} seed={}\n",
            self.tool_version, self.config_digest, self.seed
        )
    }
}

/// Excess noise with `eps` solved from `target_epr` when one is given.
pub fn resolve_noise(cfg: &RunConfig) -> Result<ExcessNoise, CliError> {
    match cfg.target_epr {
        None => Ok(cfg.noise),
        Some(t) => {
            let eps = fit_excess_noise_for_product(&cfg.source, cfg.loss, t, &cfg.noise)?;
            Ok(cfg.noise.with_eps(eps))
        }
    }
}

/// Everything computed at one pump power.
#[derive(Clone, Debug, Serialize)]
pub struct PointReport {
    pub pump_mw: f64,
    /// Detected squeezer variances, linear.
    pub var_sqz: f64,
    pub var_asqz: f64,
    pub var_sqz_db: f64,
    pub var_asqz_db: f64,
    pub epr: EprResult,
    pub duan: DuanResult,
    /// `None` for asymmetric states.
    pub eof: Option<f64>,
    /// Loss margin of the noiseless symmetric chain; `None` otherwise.
    pub margin_eq3: Option<f64>,
}

pub fn evaluate_point(
    source: &SourceParams,
    loss: ArmLoss,
    noise: &ExcessNoise,
) -> Result<PointReport, CliError> {
    let det = source.squeezer_variances()?;
    let stats = build_vclass_state(source, loss, Some(noise))?.two_mode_stats(0, 1)?;
    let margin_eq3 = if loss.is_symmetric() && noise.eps == 0.0 {
        Some(vclass_loss_margin(
            source.pure_state_variances()?.sqz,
            loss.mu_a,
        )?)
    } else {
        None
    };
    Ok(PointReport {
        pump_mw: source.pump_mw,
        var_sqz: det.sqz,
        var_asqz: det.asqz,
        var_sqz_db: det.sqz_db(),
        var_asqz_db: det.asqz_db(),
        epr: epr_product(&stats)?,
        duan: duan_inseparability(&stats),
        eof: eof_symmetric(&stats).ok(),
        margin_eq3,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_sig).unwrap_or_default()
}

#[derive(Serialize)]
struct SweepJson<'a> {
    #[serde(flatten)]
    provenance: Provenance,
    loss: ArmLoss,
    noise: ExcessNoise,
    rows: &'a [PointReport],
}

/// Rows in pump-grid order.
pub fn sweep_rows(cfg: &RunConfig) -> Result<(ExcessNoise, Vec<PointReport>), CliError> {
    let noise = resolve_noise(cfg)?;
    let rows = cfg
        .pump_grid
        .iter()
        .map(|&p| evaluate_point(&cfg.source.with_pump(p), cfg.loss, &noise))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((noise, rows))
}

pub fn sweep(cfg: &RunConfig, format: Format) -> Result<String, CliError> {
    let (noise, rows) = sweep_rows(cfg)?;
    let provenance = Provenance::of(cfg);
    match format {
        Format::Json => to_json(&SweepJson {
            provenance,
            loss: cfg.loss,
            noise,
            rows: &rows,
        }),
        Format::Csv => {
            let mut s = provenance.csv_comment();
            s.push_str(SWEEP_HEADER);
            s.push('\n');
            for r in &rows {
                let cells = [
                    fmt_sig(r.pump_mw),
                    fmt_sig(r.var_sqz_db),
                    fmt_sig(r.var_asqz_db),
                    fmt_sig(r.epr.condvar_x_ab),
                    fmt_sig(r.epr.condvar_p_ab),
                    fmt_sig(r.epr.condvar_x_ba),
                    fmt_sig(r.epr.condvar_p_ba),
                    fmt_sig(r.epr.product_ab),
                    fmt_sig(r.epr.product_ba),
                    fmt_sig(r.duan.value),
                    opt(r.eof),
                    opt(r.margin_eq3),
                ];
                s.push_str(&cells.join(","));
                s.push('\n');
            }
            Ok(s)
        }
    }
}

#[derive(Serialize)]
struct CriteriaJson {
    #[serde(flatten)]
    provenance: Provenance,
    loss: ArmLoss,
    noise: ExcessNoise,
    #[serde(flatten)]
    point: PointReport,
}

pub fn criteria(cfg: &RunConfig, format: Format) -> Result<String, CliError> {
    let noise = resolve_noise(cfg)?;
    let point = evaluate_point(&cfg.source, cfg.loss, &noise)?;
    let provenance = Provenance::of(cfg);
    match format {
        Format::Json => to_json(&CriteriaJson {
            provenance,
            loss: cfg.loss,
            noise,
            point,
        }),
        Format::Csv => {
            let e = &point.epr;
            let rows = [
                ("pump_mw", Some(point.pump_mw)),
                ("mu_a", Some(cfg.loss.mu_a)),
                ("mu_b", Some(cfg.loss.mu_b)),
                ("noise_eps", Some(noise.eps)),
                ("var_sqz", Some(point.var_sqz)),
                ("var_asqz", Some(point.var_asqz)),
                ("var_sqz_db", Some(point.var_sqz_db)),
                ("var_asqz_db", Some(point.var_asqz_db)),
                ("condvar_x_ab", Some(e.condvar_x_ab)),
                ("condvar_p_ab", Some(e.condvar_p_ab)),
                ("condvar_x_ba", Some(e.condvar_x_ba)),
                ("condvar_p_ba", Some(e.condvar_p_ba)),
                ("gain_x_ab", Some(e.gain_x_ab)),
                ("gain_p_ab", Some(e.gain_p_ab)),
                ("gain_x_ba", Some(e.gain_x_ba)),
                ("gain_p_ba", Some(e.gain_p_ba)),
                ("epr_ab", Some(e.product_ab)),
                ("epr_ba", Some(e.product_ba)),
                ("duan", Some(point.duan.value)),
                ("eof", point.eof),
                ("margin_eq3", point.margin_eq3),
            ];
            let mut s = provenance.csv_comment();
            s.push_str("quantity,value\n");
            for (k, v) in rows {
                let _ = writeln!(s, "{k},{}", opt(v));
            }
            Ok(s)
        }
    }
}

/// Standard deviation of `A − B` for one quadrature.
#[derive(Clone, Debug, Serialize)]
pub struct DifferenceStd {
    pub empirical: EstimateReport,
    pub analytic: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SampleSummary {
    #[serde(flatten)]
    pub provenance: Provenance,
    pub count: usize,
    pub pump_mw: f64,
    pub loss: ArmLoss,
    pub noise: ExcessNoise,
    pub files: Vec<String>,
    pub analytic: EprResult,
    pub empirical: EprEstimate,
    pub difference_std_x: DifferenceStd,
    pub difference_std_p: DifferenceStd,
}

/// File names of the four records, in `X_A, X_B, P_A, P_B` order.
pub const SAMPLE_FILES: [&str; 4] = ["x_a.csv", "x_b.csv", "p_a.csv", "p_b.csv"];
pub const SAMPLE_SUMMARY: &str = "summary.json";

fn analytic_difference_std(stats: &TwoModeStats, q: Quadrature) -> f64 {
    (stats.var(Side::A, q) + stats.var(Side::B, q) - 2.0 * stats.cov(q)).sqrt()
}

/// Sample the configured state and write the records, their sidecars and
/// the summary into `dir`.
pub fn sample(cfg: &RunConfig, dir: &Path) -> Result<SampleSummary, CliError> {
    let noise = resolve_noise(cfg)?;
    let state = build_vclass_state(&cfg.source, cfg.loss, Some(&noise))?;
    let stats = state.two_mode_stats(0, 1)?;
    let (xa, xb) = sample_joint_quadratures(&state, Quadrature::X, cfg.sample_count, cfg.seed)?;
    let (pa, pb) = sample_joint_quadratures(&state, Quadrature::P, cfg.sample_count, cfg.seed)?;

    let provenance = Provenance::of(cfg);
    let summary = SampleSummary {
        count: cfg.sample_count,
        pump_mw: cfg.source.pump_mw,
        loss: cfg.loss,
        noise,
        files: SAMPLE_FILES.iter().map(|s| s.to_string()).collect(),
        analytic: epr_product(&stats)?,
        empirical: estimate_epr_product(&xa, &xb, &pa, &pb)?,
        difference_std_x: DifferenceStd {
            empirical: difference_std(&xa, &xb)?,
            analytic: analytic_difference_std(&stats, Quadrature::X),
        },
        difference_std_p: DifferenceStd {
            empirical: difference_std(&pa, &pb)?,
            analytic: analytic_difference_std(&stats, Quadrature::P),
        },
        provenance,
    };

    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let description = format!(
        "vclass pump_mw={} mu_a={} mu_b={} noise={:?}/{}/{}",
        fmt_sig(cfg.source.pump_mw),
        fmt_sig(cfg.loss.mu_a),
        fmt_sig(cfg.loss.mu_b),
        noise.location,
        noise.quadrature.label(),
        fmt_sig(noise.eps),
    );
    let mut staged = Staged::new();
    for (batch, name) in [&xa, &xb, &pa, &pb].into_iter().zip(SAMPLE_FILES) {
        stage_batch(
            &mut staged,
            batch,
            &dir.join(name),
            &description,
            &summary.provenance,
        )?;
    }
    staged.text(&dir.join(SAMPLE_SUMMARY), &to_json(&summary)?)?;
    staged.commit()?;
    Ok(summary)
}

fn stage_batch(
    staged: &mut Staged,
    batch: &SampleBatch,
    path: &Path,
    description: &str,
    provenance: &Provenance,
) -> Result<(), CliError> {
    staged.file(path, |w| Ok(write_batch_csv(batch, w)?))?;
    let mut meta = BatchMetadata::for_batch(batch, description);
    meta.config_digest = Some(provenance.config_digest.clone());
    let side = vclass_core::sampling::sidecar_path(path);
    staged.file(&side, |w: &mut dyn Write| Ok(meta.write_json(w)?))
}

#[derive(Serialize)]
struct FitJson<'a> {
    #[serde(flatten)]
    provenance: Provenance,
    dataset: String,
    dataset_digest: String,
    rows: usize,
    cavity: FixedCavity,
    #[serde(flatten)]
    result: &'a FitResult,
}

/// Fit the dataset at `path`. Returns the JSON text and the exit code: a fit
/// that did not converge still yields its best estimate, with
/// [`exit::NUMERICAL`].
pub fn fit(cfg: &RunConfig, path: &Path) -> Result<(String, i32), CliError> {
    let data = VarianceDataset::from_path(path).map_err(|e| match e {
        vclass_core::Error::Io(io) => CliError::io(path, io),
        vclass_core::Error::Parse { line, message } => {
            CliError::Config(format!("{}:{line}: {message}", path.display()))
        }
        other => CliError::Config(format!("{}: {other}", path.display())),
    })?;
    let cavity = FixedCavity {
        roundtrip_m: cfg.source.roundtrip_m,
        freq_hz: cfg.source.freq_hz,
    };
    let result = fit_squeezer_model(&data, cavity, None)?;
    let name = path.file_name().map(PathBuf::from).unwrap_or_default();
    let text = to_json(&FitJson {
        provenance: Provenance::of(cfg),
        dataset: name.display().to_string(),
        dataset_digest: data.digest(),
        rows: data.rows().len(),
        cavity,
        result: &result,
    })?;
    let code = if result.converged {
        exit::OK
    } else {
        exit::NUMERICAL
    };
    Ok((text, code))
}
