//! Fixtures shared by the benchmarks in `benches/`.

use vclass_core::fitting::{synthetic_dataset, SqueezerFitParams};
use vclass_core::{
    build_vclass_state, ArmLoss, FixedCavity, GaussianState, SourceParams, VarianceDataset,
};

/// Two-mode state at 225 mW with 9 % loss per arm.
pub fn operating_state() -> GaussianState {
    build_vclass_state(
        &SourceParams::default().with_pump(225.0),
        ArmLoss::symmetric(0.09),
        None,
    )
    .expect("valid operating point")
}

/// Noiseless dataset over 25..=325 mW in 25 mW steps.
pub fn pump_dataset() -> VarianceDataset {
    let truth = SqueezerFitParams {
        eta_gamma: 0.91,
        p_th_mw: 445.0,
        t_plus_l: 0.105,
    };
    let pumps: Vec<f64> = (1..=13).map(|i| 25.0 * i as f64).collect();
    synthetic_dataset(&truth, &FixedCavity::default(), &pumps, |_| 0.0).expect("valid dataset")
}
