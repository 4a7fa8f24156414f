//! Perturbed periodic Jacobi matrices
//! `a_{n+1} u(n+1) + (b_{n+1} + b'_{n+1}) u(n) + a_n u(n-1) = E u(n)`.

pub mod assembly;
pub mod floquet;
pub mod prufer;
pub mod stage;

use serde::{Deserialize, Serialize};

use crate::bands::{self, BandStructure, ScanOptions};
use crate::error::{Error, Result};

pub use assembly::{assemble_jacobi, no_embed_jacobi, JacobiAssembly, NoEmbedReport};
pub use floquet::{jacobi_floquet, JacobiFloquet};
pub use prufer::{direct_recursion, oprl_ratio, prufer_step, u_from_state, z_from_solution, JacobiState, StepCheck};
pub use stage::{
    block_cos4_sums, build_jacobi_stage, classify_rational, coupling_for_jacobi, ergodic_sum_check,
    evaluate_jacobi_stage, ErgodicReport, JacobiStage, JacobiStageReport, JacobiStageRun, QuasiBranch,
};

/// `q`-periodic coefficients; `a[j] = a_j`, `b[j] = b_j` for `j < q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicJacobi {
    a: Vec<f64>,
    b: Vec<f64>,
}

impl PeriodicJacobi {
    pub fn new(a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if a.is_empty() || a.len() != b.len() {
            return Err(Error::InvalidInput(format!(
                "coefficient periods differ or are empty: {} vs {}",
                a.len(),
                b.len()
            )));
        }
        if let Some(x) = a.iter().find(|x| !(**x > 0.0) || !x.is_finite()) {
            return Err(Error::InvalidInput(format!("off-diagonal a_n must be positive, got {x}")));
        }
        if b.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("diagonal b_n must be finite".into()));
        }
        Ok(Self { a, b })
    }

    /// `a ≡ 1`, `b ≡ 0`.
    pub fn free() -> Self {
        Self {
            a: vec![1.0],
            b: vec![0.0],
        }
    }

    /// `a ≡ 1`, `b` alternating `0, λ`.
    pub fn alternating(lambda: f64) -> Self {
        Self {
            a: vec![1.0, 1.0],
            b: vec![0.0, lambda],
        }
    }

    pub fn period(&self) -> usize {
        self.a.len()
    }

    #[inline]
    pub fn a(&self, n: i64) -> f64 {
        self.a[n.rem_euclid(self.a.len() as i64) as usize]
    }

    #[inline]
    pub fn b(&self, n: i64) -> f64 {
        self.b[n.rem_euclid(self.b.len() as i64) as usize]
    }

    /// `T(n)`: `(u(n), u(n-1)) ↦ (u(n+1), u(n))` at energy `E`.
    pub fn transfer(&self, n: i64, energy: f64) -> [[f64; 2]; 2] {
        let an1 = self.a(n + 1);
        [[(energy - self.b(n + 1)) / an1, -self.a(n) / an1], [1.0, 0.0]]
    }

    /// `M = T(q) ⋯ T(1)`, mapping `(u(1), u(0))` to `(u(q+1), u(q))`.
    pub fn monodromy(&self, energy: f64) -> [[f64; 2]; 2] {
        self.monodromy_with_derivative(energy).0
    }

    pub fn monodromy_with_derivative(&self, energy: f64) -> ([[f64; 2]; 2], [[f64; 2]; 2]) {
        let mut m = [[1.0, 0.0], [0.0, 1.0]];
        let mut dm = [[0.0; 2]; 2];
        for n in 1..=self.period() as i64 {
            let t = self.transfer(n, energy);
            let dt00 = 1.0 / self.a(n + 1);
            let mul = |x: &[[f64; 2]; 2]| {
                [
                    [t[0][0] * x[0][0] + t[0][1] * x[1][0], t[0][0] * x[0][1] + t[0][1] * x[1][1]],
                    [x[0][0], x[0][1]],
                ]
            };
            let mut ndm = mul(&dm);
            ndm[0][0] += dt00 * m[0][0];
            ndm[0][1] += dt00 * m[0][1];
            dm = ndm;
            m = mul(&m);
        }
        (m, dm)
    }

    pub fn discriminant_with_derivative(&self, energy: f64) -> (f64, f64) {
        let (m, dm) = self.monodromy_with_derivative(energy);
        (m[0][0] + m[1][1], dm[0][0] + dm[1][1])
    }

    pub fn discriminant(&self, energy: f64) -> f64 {
        self.discriminant_with_derivative(energy).0
    }

    /// The spectrum lies in `[min b - 2 max a, max b + 2 max a]`.
    pub fn spectral_hull(&self) -> (f64, f64) {
        let amax = self.a.iter().copied().fold(0.0, f64::max);
        let bmin = self.b.iter().copied().fold(f64::INFINITY, f64::min);
        let bmax = self.b.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (bmin - 2.0 * amax, bmax + 2.0 * amax)
    }
}

pub fn jacobi_bands(j0: &PeriodicJacobi, e_min: f64, e_max: f64, opts: ScanOptions) -> Result<BandStructure> {
    bands::locate_bands(|e| Ok(j0.discriminant_with_derivative(e)), e_min, e_max, opts)
}

pub fn jacobi_quasimomentum(j0: &PeriodicJacobi, energy: f64, margin: f64) -> Result<f64> {
    bands::quasimomentum_from_disc(energy, j0.discriminant(energy), margin)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn free_band() {
        let j = PeriodicJacobi::free();
        let bs = jacobi_bands(&j, -3.0, 3.0, ScanOptions::default()).unwrap();
        assert_eq!(bs.bands.len(), 1);
        assert!((bs.bands[0].lower + 2.0).abs() < 1e-8);
        assert!((bs.bands[0].upper - 2.0).abs() < 1e-8);
        let none = jacobi_bands(&j, 3.0, 5.0, ScanOptions::default()).unwrap();
        assert!(none.bands.is_empty());
    }

    #[test]
    fn alternating_gap_matches_dense_scan() {
        let j = PeriodicJacobi::alternating(1.0);
        let (lo, hi) = j.spectral_hull();
        let bs = jacobi_bands(&j, lo - 0.5, hi + 0.5, ScanOptions::default()).unwrap();
        assert_eq!(bs.bands.len(), 2);
        // oracle: Δ(E) = E(E - λ) - 2 for this model, scanned densely
        let n = 400_000;
        let mut inside = Vec::new();
        for i in 0..=n {
            let e = lo - 0.5 + (hi - lo + 1.0) * i as f64 / n as f64;
            if (e * (e - 1.0) - 2.0).abs() <= 2.0 {
                inside.push(e);
            }
        }
        let step = (hi - lo + 1.0) / n as f64;
        let gap_lo = inside.windows(2).find(|w| w[1] - w[0] > 2.0 * step).unwrap()[0];
        assert!((bs.bands[0].upper - gap_lo).abs() < 2.0 * step);
        assert!((bs.bands[0].lower - inside[0]).abs() < 2.0 * step);
        for e in [-1.3, 0.2, 1.7] {
            assert!((j.discriminant(e) - (e * (e - 1.0) - 2.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn derivative_matches_difference() {
        let j = PeriodicJacobi::new(vec![1.0, 0.7, 1.3], vec![0.2, -0.5, 0.9]).unwrap();
        for e in [-1.0, 0.3, 2.2] {
            let h = 1e-6;
            let fd = (j.discriminant(e + h) - j.discriminant(e - h)) / (2.0 * h);
            assert!((j.discriminant_with_derivative(e).1 - fd).abs() < 1e-6);
        }
    }

    #[test]
    fn rejects_nonpositive_a() {
        assert!(PeriodicJacobi::new(vec![1.0, 0.0], vec![0.0, 0.0]).is_err());
        assert!(PeriodicJacobi::new(vec![1.0], vec![0.0, 0.0]).is_err());
    }
}
