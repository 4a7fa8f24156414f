//! Non-resonance rules on quasimomenta.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pairs with `|k_i + k_j - π|` or `|k_i - k_j|` below this are rejected.
pub const ANGLE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PairDefect {
    EqualQuasimomentum,
    SumIsPi,
}

pub fn pair_defect(k1: f64, k2: f64) -> Option<PairDefect> {
    if (k1 - k2).abs() < ANGLE_TOL {
        Some(PairDefect::EqualQuasimomentum)
    } else if (k1 + k2 - PI).abs() < ANGLE_TOL {
        Some(PairDefect::SumIsPi)
    } else {
        None
    }
}

/// Error for a (target, other) pair that breaks the oscillation estimates.
pub fn check_pair(k_target: f64, k_other: f64) -> Result<()> {
    match pair_defect(k_target, k_other) {
        None => Ok(()),
        Some(PairDefect::EqualQuasimomentum) => Err(Error::Precondition(format!(
            "protected energy shares the target quasimomentum k = {k_target}"
        ))),
        Some(PairDefect::SumIsPi) => Err(Error::ResonantPair {
            k1: k_target,
            k2: k_other,
            reason: "k + k' = π".into(),
        }),
    }
}

pub fn is_half_band(k: f64) -> bool {
    (k - FRAC_PI_2).abs() < ANGLE_TOL
}
