use std::f64::consts::TAU;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Smoothness {
    Continuous,
    PiecewiseContinuous,
}

/// A 1-periodic background potential `V0`.
///
/// Every evaluator reduces its argument mod 1 first, so `eval(x)` and
/// `eval(x + 1)` agree whenever `x + 1` is computed exactly.
#[derive(Clone)]
pub enum PeriodicPotential {
    Zero,
    /// `amp * cos(2π freq x)`
    Cosine { amp: f64, freq: u32 },
    /// `c0 + Σ_m cos[m-1] cos(2π m x) + sin[m-1] sin(2π m x)`
    Fourier { c0: f64, cos: Vec<f64>, sin: Vec<f64> },
    Custom {
        f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        smoothness: Smoothness,
        label: String,
    },
}

impl fmt::Debug for PeriodicPotential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Zero => write!(f, "Zero"),
            Self::Cosine { amp, freq } => write!(f, "Cosine {{ amp: {amp}, freq: {freq} }}"),
            Self::Fourier { c0, cos, sin } => {
                write!(f, "Fourier {{ c0: {c0}, cos: {cos:?}, sin: {sin:?} }}")
            }
            Self::Custom { label, smoothness, .. } => {
                write!(f, "Custom {{ label: {label:?}, smoothness: {smoothness:?} }}")
            }
        }
    }
}

impl PeriodicPotential {
    pub fn cosine(amp: f64, freq: u32) -> Self {
        Self::Cosine { amp, freq }
    }

    pub fn custom<F>(label: impl Into<String>, smoothness: Smoothness, f: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self::Custom {
            f: Arc::new(f),
            smoothness,
            label: label.into(),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Self::Zero => true,
            Self::Cosine { amp, .. } => *amp == 0.0,
            Self::Fourier { c0, cos, sin } => {
                *c0 == 0.0 && cos.iter().all(|c| *c == 0.0) && sin.iter().all(|s| *s == 0.0)
            }
            Self::Custom { .. } => false,
        }
    }

    pub fn smoothness(&self) -> Smoothness {
        match self {
            Self::Custom { smoothness, .. } => *smoothness,
            _ => Smoothness::Continuous,
        }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        let r = x - x.floor();
        match self {
            Self::Zero => 0.0,
            Self::Cosine { amp, freq } => amp * (TAU * f64::from(*freq) * r).cos(),
            Self::Fourier { c0, cos, sin } => {
                let mut v = *c0;
                for (m, c) in cos.iter().enumerate() {
                    v += c * (TAU * (m + 1) as f64 * r).cos();
                }
                for (m, s) in sin.iter().enumerate() {
                    v += s * (TAU * (m + 1) as f64 * r).sin();
                }
                v
            }
            Self::Custom { f, .. } => f(r),
        }
    }

    /// Rough bound on `sup |V0|`, used for step-size heuristics.
    pub fn sup_estimate(&self) -> f64 {
        (0..256)
            .map(|i| self.eval(i as f64 / 256.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Serializable description of the built-in backgrounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    Zero,
    Cosine {
        amp: f64,
        freq: u32,
    },
    Fourier {
        #[serde(default)]
        c0: f64,
        #[serde(default)]
        cos: Vec<f64>,
        #[serde(default)]
        sin: Vec<f64>,
    },
}

impl PotentialSpec {
    pub fn build(&self) -> PeriodicPotential {
        match self {
            Self::Zero => PeriodicPotential::Zero,
            Self::Cosine { amp, freq } => PeriodicPotential::cosine(*amp, *freq),
            Self::Fourier { c0, cos, sin } => PeriodicPotential::Fourier {
                c0: *c0,
                cos: cos.clone(),
                sin: sin.clone(),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn periodic_on_dyadic_points(j in -4096i64..4096, shift in -20i64..20) {
            let x = j as f64 / 1024.0;
            let pots = [
                PeriodicPotential::cosine(2.0, 1),
                PeriodicPotential::Fourier { c0: 0.3, cos: vec![1.0, -0.5], sin: vec![0.25] },
                PeriodicPotential::custom("saw", Smoothness::PiecewiseContinuous, |r| r - 0.5),
            ];
            for p in &pots {
                prop_assert_eq!(p.eval(x), p.eval(x + shift as f64));
            }
        }
    }

    #[test]
    fn cosine_values() {
        let p = PeriodicPotential::cosine(2.0, 1);
        assert!((p.eval(0.0) - 2.0).abs() < 1e-15);
        assert!((p.eval(0.5) + 2.0).abs() < 1e-15);
        assert!(PeriodicPotential::Zero.is_zero());
    }
}
