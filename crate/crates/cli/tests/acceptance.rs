//! Acceptance criteria. Runs as a plain binary and prints one line per
//! criterion; exits nonzero if any criterion fails.
//!
//! Reference values labelled "oracle" are computed here from closed forms
//! that do not go through the library's state pipeline.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use vclass_core::criteria::{vclass_loss_margin, vclass_loss_threshold};
use vclass_core::fitting::{fit_excess_noise_for_product, synthetic_dataset, SqueezerFitParams};
use vclass_core::sampling::{
    difference_std, estimate_epr_product, sample_joint_quadratures, NormalPairs,
    FULL_ACQUISITION_COUNT,
};
use vclass_core::{
    build_vclass_state, duan_inseparability, eof_symmetric, epr_product, fit_squeezer_model,
    ArmLoss, ExcessNoise, FixedCavity, GaussianState, Quadrature, SourceParams,
};

struct Outcome {
    pass: bool,
    detail: String,
    /// Reported but never counted as a failure.
    finding: Option<String>,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome {
        pass,
        detail,
        finding: None,
    }
}

fn pure_vclass(vs: f64) -> GaussianState {
    GaussianState::squeezed(vs, 1.0 / vs, 0.0)
        .unwrap()
        .tensor(&GaussianState::vacuum(1).unwrap())
        .beam_splitter(0, 1, 0.5)
        .unwrap()
}

fn operating_point() -> (SourceParams, ArmLoss) {
    (
        SourceParams::default().with_pump(225.0),
        ArmLoss::symmetric(0.09),
    )
}

/// Oracle: product for a pure source `(Vs, 1/Vs)` behind symmetric loss,
/// from the beam-splitter moments `Var = (V+1)/2`, `Cov = (V−1)/2`.
fn lossy_product_oracle(vs: f64, va: f64, mu: f64) -> f64 {
    let f = |v: f64| {
        let v = (1.0 - mu) * v + mu;
        2.0 * v / (v + 1.0)
    };
    f(vs) * f(va)
}

/// Oracle: entropy in bits of a single-mode Gaussian state with symplectic
/// eigenvalue `nu`.
fn mode_entropy(nu: f64) -> f64 {
    let (p, m) = ((nu + 1.0) / 2.0, (nu - 1.0) / 2.0);
    if m <= 0.0 {
        0.0
    } else {
        p * p.log2() - m * m.log2()
    }
}

fn ac1() -> Outcome {
    let v = SourceParams::default()
        .with_pump(325.0)
        .squeezer_variances()
        .unwrap();
    let (s, a) = (v.sqz_db(), v.asqz_db());
    outcome(
        (s + 9.9).abs() <= 0.1 && (a - 18.4).abs() <= 0.2,
        format!("325 mW: {s:.4} dB (want -9.9±0.1), {a:+.4} dB (want +18.4±0.2)"),
    )
}

fn ac2() -> Outcome {
    let mut u = NormalPairs::new(2024, Quadrature::X, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        // The polar angle of a standard normal pair is uniform.
        let (z0, z1) = u.next().unwrap();
        let t = (z1.atan2(z0) + std::f64::consts::PI) / std::f64::consts::TAU;
        let vs = 1.0 - 0.99 * t;
        let e = epr_product(&pure_vclass(vs).two_mode_stats(0, 1).unwrap()).unwrap();
        let oracle = 4.0 / (2.0 + vs + 1.0 / vs);
        worst = worst
            .max((e.product_ab - oracle).abs())
            .max((e.product_ba - oracle).abs());
    }
    outcome(
        worst < 1e-12,
        format!("1000 random v_sqz: max |pipeline − 4/(2+Vs+Va)| = {worst:.2e}"),
    )
}

fn ac3() -> Outcome {
    let mut worst: f64 = 0.0;
    for i in 0..50 {
        let vs = 0.01 + 0.98 * i as f64 / 49.0;
        let mu = vclass_loss_threshold(vs).unwrap();
        worst = worst.max((mu - 1.0 / 3.0).abs());
    }
    let classify = |x: f64| {
        if x.abs() <= 1e-12 {
            0
        } else if x > 0.0 {
            1
        } else {
            -1
        }
    };
    let mut disagree = 0;
    for i in 0..100 {
        let vs = (i + 1) as f64 / 100.0;
        for j in 0..100 {
            let mu = j as f64 / 99.0;
            let product = vclass_vs_mu(vs, mu);
            let margin = vclass_loss_margin(vs, mu).unwrap();
            if classify(1.0 - product) != classify(margin) {
                disagree += 1;
            }
        }
    }
    outcome(
        worst < 1e-9 && disagree == 0,
        format!("max |μ* − 1/3| = {worst:.2e} over 50 v_sqz; sign disagreements {disagree}/10000"),
    )
}

fn vclass_vs_mu(vs: f64, mu: f64) -> f64 {
    let s = pure_vclass(vs)
        .loss_channel(0, mu)
        .unwrap()
        .loss_channel(1, mu)
        .unwrap();
    epr_product(&s.two_mode_stats(0, 1).unwrap())
        .unwrap()
        .product_ab
}

fn ac4() -> Outcome {
    let (params, loss) = operating_point();
    let clean = build_vclass_state(&params, loss, None).unwrap();
    let e = epr_product(&clean.two_mode_stats(0, 1).unwrap()).unwrap();
    let pure = params.pure_state_variances().unwrap();
    let oracle = lossy_product_oracle(pure.sqz, pure.asqz, loss.mu_a);

    let policy = ExcessNoise::detector_phase(0.0);
    let eps = fit_excess_noise_for_product(&params, loss, 0.502, &policy).unwrap();
    let noisy = build_vclass_state(&params, loss, Some(&policy.with_eps(eps))).unwrap();
    let n = epr_product(&noisy.two_mode_stats(0, 1).unwrap()).unwrap();
    let dx = (n.condvar_x_ab - e.condvar_x_ab).abs();

    let pass = (e.condvar_x_ab - 0.220).abs() <= 0.005
        && (e.product_ab - 0.423).abs() <= 0.01
        && (e.product_ab - oracle).abs() <= 1e-12
        && (n.product_ab - 0.502).abs() <= 1e-9
        && dx <= 1e-12;
    outcome(
        pass,
        format!(
            "condvar_X {:.6}, product {:.6} (oracle {:.6}); ε = {eps:.6} gives {:.6}, Δcondvar_X = {dx:.1e}",
            e.condvar_x_ab, e.product_ab, oracle, n.product_ab
        ),
    )
}

fn ac5() -> Outcome {
    let mut max_below: f64 = f64::NEG_INFINITY;
    let mut worst_unit: f64 = 0.0;
    let mus: Vec<f64> = (0..100)
        .map(|j| j as f64 / 100.0)
        .chain([0.99, 0.999])
        .collect();
    for i in 0..50 {
        let vs = 0.01 + 0.97 * i as f64 / 49.0;
        for &mu in &mus {
            let s = pure_vclass(vs)
                .loss_channel(0, mu)
                .unwrap()
                .loss_channel(1, mu)
                .unwrap();
            let d = duan_inseparability(&s.two_mode_stats(0, 1).unwrap()).value;
            max_below = max_below.max(d);
        }
    }
    for &mu in &mus {
        let s = pure_vclass(1.0)
            .loss_channel(0, mu)
            .unwrap()
            .loss_channel(1, mu)
            .unwrap();
        let d = duan_inseparability(&s.two_mode_stats(0, 1).unwrap()).value;
        worst_unit = worst_unit.max((d - 4.0).abs());
    }
    outcome(
        max_below < 4.0 && worst_unit < 1e-12,
        format!(
            "max Duan over v_sqz<1, μ≤0.999: {max_below:.6}; |Duan−4| at v_sqz=1: {worst_unit:.1e}"
        ),
    )
}

const SEEDS: u64 = 50;
const AC6_COUNT: usize = 1_000_000;

fn ac6a() -> Outcome {
    let vac = build_vclass_state(&SourceParams::default(), ArmLoss::symmetric(0.09), None).unwrap();
    let ok = (0..SEEDS)
        .into_par_iter()
        .filter(|&seed| {
            [Quadrature::X, Quadrature::P].iter().all(|&q| {
                let (a, b) = sample_joint_quadratures(&vac, q, AC6_COUNT, seed).unwrap();
                let d = difference_std(&a, &b).unwrap().point_estimate;
                (d / 2f64.sqrt() - 1.0).abs() < 0.005
            })
        })
        .count();
    outcome(
        ok >= 49,
        format!("vacuum difference-std within 0.5% of √2 in {ok}/{SEEDS} seeds"),
    )
}

fn ac6b() -> Outcome {
    let (params, loss) = operating_point();
    let state = build_vclass_state(&params, loss, None).unwrap();
    let analytic = epr_product(&state.two_mode_stats(0, 1).unwrap()).unwrap();
    let ok = (0..SEEDS)
        .into_par_iter()
        .filter(|&seed| {
            let (xa, xb) =
                sample_joint_quadratures(&state, Quadrature::X, AC6_COUNT, seed).unwrap();
            let (pa, pb) =
                sample_joint_quadratures(&state, Quadrature::P, AC6_COUNT, seed).unwrap();
            let est = estimate_epr_product(&xa, &xb, &pa, &pb).unwrap();
            [
                (est.ab.product, analytic.product_ab),
                (est.ba.product, analytic.product_ba),
            ]
            .iter()
            .all(|(r, a)| (r.point_estimate - a).abs() < 4.0 * r.std_error)
        })
        .count();
    outcome(
        ok >= 49,
        format!("empirical product within 4 SE of analytic in {ok}/{SEEDS} seeds"),
    )
}

fn ac6c() -> Outcome {
    let (params, loss) = operating_point();
    let policy = ExcessNoise::detector_phase(0.0);
    let eps = fit_excess_noise_for_product(&params, loss, 0.502, &policy).unwrap();
    let state = build_vclass_state(&params, loss, Some(&policy.with_eps(eps))).unwrap();
    let n = FULL_ACQUISITION_COUNT;
    let (xa, xb) = sample_joint_quadratures(&state, Quadrature::X, n, 1).unwrap();
    let (pa, pb) = sample_joint_quadratures(&state, Quadrature::P, n, 1).unwrap();
    let est = estimate_epr_product(&xa, &xb, &pa, &pb).unwrap().ab.product;
    let ratio = est.std_error / 0.006;
    outcome(
        (1.0 / 3.0..=3.0).contains(&ratio),
        format!(
            "propagated SE at {n} samples: {:.2e} = {ratio:.3} × 0.006 (product {:.4}); window is ×[1/3, 3]",
            est.std_error, est.point_estimate
        ),
    )
}

fn ac7() -> Outcome {
    let cavity = FixedCavity::default();
    let truth = SqueezerFitParams {
        eta_gamma: 0.91,
        p_th_mw: 445.0,
        t_plus_l: 0.105,
    };
    let pumps: Vec<f64> = (1..=13).map(|i| 25.0 * i as f64).collect();

    let clean = synthetic_dataset(&truth, &cavity, &pumps, |_| 0.0).unwrap();
    let r = fit_squeezer_model(&clean, cavity, None).unwrap();
    let rel = [
        (r.eta_gamma - truth.eta_gamma) / truth.eta_gamma,
        (r.p_th_mw - truth.p_th_mw) / truth.p_th_mw,
        (r.t_plus_l - truth.t_plus_l) / truth.t_plus_l,
    ]
    .iter()
    .fold(0.0f64, |m, x| m.max(x.abs()));

    let seeds = 40u64;
    let ok = (0..seeds)
        .into_par_iter()
        .filter(|&seed| {
            let noise: Vec<f64> = NormalPairs::new(seed, Quadrature::X, 0)
                .take(pumps.len())
                .flat_map(|(a, b)| [0.1 * a, 0.1 * b])
                .collect();
            let data = synthetic_dataset(&truth, &cavity, &pumps, |i| noise[i]).unwrap();
            let f = fit_squeezer_model(&data, cavity, None).unwrap();
            (f.eta_gamma - 0.91).abs() <= 0.01 && (f.p_th_mw / 445.0 - 1.0).abs() <= 0.05
        })
        .count();
    outcome(
        rel <= 1e-6 && r.converged && ok * 10 >= seeds as usize * 9,
        format!(
            "noiseless max rel error {rel:.1e}; noisy recovery in {ok}/{seeds} seeds (need ≥90%)"
        ),
    )
}

fn ac8() -> Outcome {
    let mut worst: f64 = 0.0;
    for i in 0..200 {
        let vs = 0.01 + 0.99 * (i + 1) as f64 / 200.0;
        let s = pure_vclass(vs);
        let nu = s.drop_mode(1).unwrap().cov().determinant().sqrt();
        let eof = eof_symmetric(&s.two_mode_stats(0, 1).unwrap()).unwrap();
        worst = worst.max((eof - mode_entropy(nu)).abs());
    }
    let (params, loss) = operating_point();
    let policy = ExcessNoise::detector_phase(0.0);
    let eps = fit_excess_noise_for_product(&params, loss, 0.502, &policy).unwrap();
    let noisy = build_vclass_state(&params, loss, Some(&policy.with_eps(eps))).unwrap();
    let eof = eof_symmetric(&noisy.two_mode_stats(0, 1).unwrap()).unwrap();
    let finding = ((eof - 1.16).abs() > 0.05).then(|| {
        format!(
            "EoF at the noisy 225 mW point is {eof:.3} bits, outside 1.16 ± 0.05 (model-dependent)"
        )
    });
    Outcome {
        pass: worst < 1e-9,
        detail: format!(
            "pure-state EoF vs subsystem entropy: max error {worst:.1e}; noisy point EoF {eof:.4}"
        ),
        finding,
    }
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_vclass")
}

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name)
}

fn run_to(dir: &Path, args: &[&str]) -> bool {
    Command::new(bin())
        .args(args)
        .current_dir(dir)
        .status()
        .map(|s| s.success())
        .unwrap_or(false)
}

fn ac9() -> Outcome {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let data = dirs[0].path().join("data.csv");
    std::fs::write(
        &data,
        "pump_mw,sqz_db,asqz_db\n25,-3.51,3.84\n125,-7.34,9.46\n225,-9.08,13.94\n325,-9.9,18.4\n",
    )
    .unwrap();
    let sweep = golden("sweep.toml");
    let criteria = golden("criteria.toml");
    let sample = golden("sample.toml");
    let mut ok = true;
    for d in &dirs {
        let p = d.path();
        let s = |p: &Path| p.to_str().unwrap().to_owned();
        ok &= run_to(p, &["sweep", "--config", &s(&sweep), "--out", "sweep.csv"]);
        ok &= run_to(
            p,
            &[
                "sweep",
                "--config",
                &s(&sweep),
                "--format",
                "json",
                "--out",
                "sweep.json",
            ],
        );
        ok &= run_to(
            p,
            &[
                "criteria",
                "--config",
                &s(&criteria),
                "--out",
                "criteria.json",
            ],
        );
        ok &= run_to(
            p,
            &[
                "sample",
                "--config",
                &s(&sample),
                "--seed",
                "9",
                "--out",
                "samples",
            ],
        );
        ok &= run_to(p, &["fit", &s(&data), "--out", "fit.json"]);
    }
    let mut files: Vec<String> = [
        "sweep.csv",
        "sweep.json",
        "criteria.json",
        "fit.json",
        "samples/summary.json",
    ]
    .map(String::from)
    .into();
    for n in ["x_a", "x_b", "p_a", "p_b"] {
        files.push(format!("samples/{n}.csv"));
        files.push(format!("samples/{n}.json"));
    }
    let mut differing = Vec::new();
    for f in &files {
        let a = std::fs::read(dirs[0].path().join(f));
        let b = std::fs::read(dirs[1].path().join(f));
        match (a, b) {
            (Ok(a), Ok(b)) if a == b => {}
            _ => differing.push(f.as_str()),
        }
    }
    let golden_ok = std::fs::read(dirs[0].path().join("sweep.csv")).ok()
        == std::fs::read(golden("sweep.csv")).ok();
    outcome(
        ok && differing.is_empty() && golden_ok,
        format!(
            "{} artifacts compared across two runs, differing: {differing:?}; sweep golden match: {golden_ok}",
            files.len()
        ),
    )
}

/// Identifier, title, check and runtime budget in seconds.
type Check = (&'static str, &'static str, fn() -> Outcome, u64);

fn main() {
    let criteria: [Check; 11] = [
        ("AC1", "squeezer point check", ac1, 1),
        ("AC2", "closed-form equivalence", ac2, 1),
        ("AC3", "loss threshold at 1/3", ac3, 5),
        ("AC4", "225 mW operating point", ac4, 1),
        ("AC5", "Duan inseparability under loss", ac5, 1),
        ("AC6a", "vacuum difference-std", ac6a, 120),
        ("AC6b", "empirical vs analytic product", ac6b, 120),
        ("AC6c", "standard error at full acquisition", ac6c, 120),
        ("AC7", "fit round-trip", ac7, 30),
        ("AC8", "entanglement of formation oracle", ac8, 1),
        ("AC9", "determinism and golden files", ac9, 60),
    ];
    let mut failed = Vec::new();
    for (id, name, run, budget) in criteria {
        let start = Instant::now();
        let o = run();
        let took = start.elapsed();
        let pass = o.pass && took <= Duration::from_secs(budget);
        println!(
            "{id} {} {name}: {} [{:.2}s, budget {}s]",
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            took.as_secs_f64(),
            budget
        );
        if let Some(f) = o.finding {
            println!("{id} FINDING {f}");
        }
        if !pass {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: failed {failed:?}");
        std::process::exit(1);
    }
}
