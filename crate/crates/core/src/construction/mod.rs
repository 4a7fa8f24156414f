//! Single-stage Wigner–von Neumann perturbations and their assembly into a
//! potential with prescribed embedded eigenvalues.

pub mod assembly;
pub mod engine;
pub mod mollifier;
pub mod schedule;
pub mod stage;

pub use assembly::{assemble, l2_tails, verify_l2, Assembly, EpochCheck, EpochEnvelope, L2Tail, StageRecord};
pub use engine::{Engine, EngineConfig, Segment};
pub use schedule::{
    build_schedule, Check, ConstraintAudit, Envelope, Epoch, GrowthMode, Schedule, ScalingPolicy,
};
pub use stage::{
    calibrate_k_min, check_stage_contract, coupling_for, evaluate_stage, oscillation_diagnostic,
    probe_angles, solve_stage_from, solve_stage_theta, stage_potential, KMinCalibration,
    OscillationReport, ProtectedStability, Stage, StageOptions, StagePotential, StageReport,
};

/// Points from `x0` to `x1` spaced by `max(min_dx, rel (1 + x))`; both ends included.
pub fn geometric_grid(x0: f64, x1: f64, rel: f64, min_dx: f64) -> Vec<f64> {
    let mut g = vec![x0];
    let mut x = x0;
    loop {
        x += min_dx.max(rel * (1.0 + x.abs()));
        if x >= x1 - 1e-9 * (1.0 + x1.abs()) {
            break;
        }
        g.push(x);
    }
    if x1 > x0 {
        g.push(x1);
    }
    g
}

/// Least-squares slope of `ys` against `xs`.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len().min(ys.len());
    if n < 2 {
        return 0.0;
    }
    let mx = xs[..n].iter().sum::<f64>() / n as f64;
    let my = ys[..n].iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for i in 0..n {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx).powi(2);
    }
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}
