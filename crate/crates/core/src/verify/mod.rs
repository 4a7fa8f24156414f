//! Runnable experiments with machine-checkable pass/fail reports.

pub mod experiments;

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::bands::{BandStructure, ScanOptions};
use crate::construction::Check;
use crate::error::{Error, Result};
use crate::floquet;
use crate::jacobi::{jacobi_bands, PeriodicJacobi};
use crate::potential::PotentialSpec;
use crate::resonance::{pair_defect, PairDefect, ANGLE_TOL};

pub use experiments::{
    embedding_demo_finite, embedding_demo_infinite, no_embedding_demo, run_experiments, EmbeddingRun, Experiment,
    Perturbation, Synthesis,
};

/// Background operator of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Operator {
    Continuous { potential: PotentialSpec },
    Jacobi { a: Vec<f64>, b: Vec<f64> },
}

impl Operator {
    pub fn free_continuous() -> Self {
        Self::Continuous {
            potential: PotentialSpec::Zero,
        }
    }

    pub fn free_jacobi() -> Self {
        Self::Jacobi {
            a: vec![1.0],
            b: vec![0.0],
        }
    }

    pub fn jacobi(&self) -> Result<Option<PeriodicJacobi>> {
        match self {
            Self::Continuous { .. } => Ok(None),
            Self::Jacobi { a, b } => PeriodicJacobi::new(a.clone(), b.clone()).map(Some),
        }
    }

    /// Bands on an energy window covering `energies` with a margin of one.
    pub fn bands_around(&self, energies: &[f64]) -> Result<BandStructure> {
        let lo = energies.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = energies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        match self {
            Self::Continuous { potential } => {
                let v0 = potential.build();
                let floor = -v0.sup_estimate();
                floquet::locate_bands(&v0, lo.min(floor) - 1.0, hi + 1.0, ScanOptions::default())
            }
            Self::Jacobi { .. } => {
                let j = self.jacobi()?.expect("jacobi operator");
                let (a, b) = j.spectral_hull();
                jacobi_bands(&j, a.min(lo) - 0.5, b.max(hi) + 0.5, ScanOptions::default())
            }
        }
    }

    pub fn quasimomentum(&self, energy: f64) -> Result<f64> {
        match self {
            Self::Continuous { potential } => floquet::quasimomentum(&potential.build(), energy, floquet::EDGE_MARGIN),
            Self::Jacobi { .. } => {
                let j = self.jacobi()?.expect("jacobi operator");
                crate::jacobi::jacobi_quasimomentum(&j, energy, floquet::EDGE_MARGIN)
            }
        }
    }
}

/// One asserted or reported inequality `lhs ≤ rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inequality {
    /// Dotted family name, e.g. `epoch.contract`.
    pub anchor: String,
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs - lhs`; negative when violated.
    pub margin: f64,
    /// Where the worst case occurs.
    pub location: String,
    pub holds: bool,
}

impl Inequality {
    pub fn le(anchor: &str, name: impl Into<String>, lhs: f64, rhs: f64, location: impl Into<String>) -> Self {
        Self {
            anchor: anchor.to_string(),
            name: name.into(),
            lhs,
            rhs,
            margin: rhs - lhs,
            location: location.into(),
            holds: lhs <= rhs,
        }
    }

    /// Splits `"anchor rest"` check names into anchor and location.
    pub fn from_check(c: &Check) -> Self {
        let (anchor, location) = c.name.split_once(' ').unwrap_or((c.name.as_str(), ""));
        Self {
            anchor: anchor.to_string(),
            name: c.name.clone(),
            lhs: c.lhs,
            rhs: c.rhs,
            margin: c.rhs - c.lhs,
            location: location.to_string(),
            holds: c.holds,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub id: String,
    pub inputs: serde_json::Value,
    /// Gate the pass flag.
    pub inequalities: Vec<Inequality>,
    /// Informational only, e.g. the unscaled constraints.
    pub reported: Vec<Inequality>,
    pub summary: serde_json::Value,
    pub pass: bool,
    pub runtime_s: f64,
}

impl ExperimentReport {
    pub fn new(id: &str, inputs: serde_json::Value) -> Self {
        Self {
            id: id.to_string(),
            inputs,
            inequalities: Vec::new(),
            reported: Vec::new(),
            summary: serde_json::Value::Null,
            pass: false,
            runtime_s: 0.0,
        }
    }

    pub fn finish(mut self, runtime_s: f64) -> Self {
        self.pass = !self.inequalities.is_empty() && self.inequalities.iter().all(|i| i.holds);
        self.runtime_s = runtime_s;
        self
    }

    pub fn failures(&self) -> impl Iterator<Item = &Inequality> {
        self.inequalities.iter().filter(|i| !i.holds)
    }

    /// All asserted records in one anchor family.
    pub fn family<'a>(&'a self, anchor: &'a str) -> impl Iterator<Item = &'a Inequality> + 'a {
        self.inequalities.iter().filter(move |i| i.anchor == anchor)
    }

    /// Copy with the runtime zeroed, for determinism comparisons.
    pub fn without_runtime(&self) -> Self {
        Self {
            runtime_s: 0.0,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuasiEntry {
    pub energy: f64,
    pub band: usize,
    pub k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuasiTable {
    pub entries: Vec<QuasiEntry>,
    /// Every `k` lies strictly on one side of `π/2`; the pair rules are then vacuous.
    pub half_band: bool,
}

impl QuasiTable {
    pub fn ks(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.k).collect()
    }
}

/// Quasimomenta of `eigs`, rejecting equal `k`, pairs with `k + k' = π` and,
/// for stage targets, `k = π/2`.
pub fn resonance_guard<K>(eigs: &[f64], bands: &BandStructure, k_of: K, stage_targets: bool) -> Result<QuasiTable>
where
    K: Fn(f64) -> Result<f64>,
{
    if eigs.is_empty() {
        return Err(Error::EmptyTargetSet);
    }
    let mut entries = Vec::with_capacity(eigs.len());
    for &e in eigs {
        let band = bands
            .band_index(e)
            .ok_or_else(|| Error::Precondition(format!("E = {e} is not in a band interior")))?;
        entries.push(QuasiEntry { energy: e, band, k: k_of(e)? });
    }
    let half_band = entries.iter().all(|e| e.k < FRAC_PI_2 - ANGLE_TOL)
        || entries.iter().all(|e| e.k > FRAC_PI_2 + ANGLE_TOL);
    let mut bad = Vec::new();
    for i in 0..entries.len() {
        let (ei, ki) = (entries[i].energy, entries[i].k);
        if stage_targets && (ki - FRAC_PI_2).abs() < ANGLE_TOL {
            bad.push(format!("E = {ei} has k = π/2"));
        }
        for ej in &entries[i + 1..] {
            match pair_defect(ki, ej.k) {
                Some(PairDefect::EqualQuasimomentum) => {
                    bad.push(format!("(E = {ei}, E = {}) share k = {ki}", ej.energy))
                }
                Some(PairDefect::SumIsPi) => bad.push(format!(
                    "(E = {ei}, E = {}) have k + k' = {} ≈ π",
                    ej.energy,
                    ki + ej.k
                )),
                None => {}
            }
        }
    }
    if !bad.is_empty() {
        return Err(Error::ResonantSet(bad.join("; ")));
    }
    Ok(QuasiTable { entries, half_band })
}

/// [`resonance_guard`] with the operator's own band structure.
pub fn guard_operator(op: &Operator, eigs: &[f64]) -> Result<QuasiTable> {
    if eigs.is_empty() {
        return Err(Error::EmptyTargetSet);
    }
    let bands = op.bands_around(eigs)?;
    resonance_guard(eigs, &bands, |e| op.quasimomentum(e), true)
}

/// `min |k_i + k_j - π|` and `min |k_i - k_j|` over pairs, for reports.
pub fn pair_gaps(ks: &[f64]) -> (f64, f64) {
    let mut sum_gap = f64::INFINITY;
    let mut eq_gap = f64::INFINITY;
    for i in 0..ks.len() {
        for j in i + 1..ks.len() {
            sum_gap = sum_gap.min((ks[i] + ks[j] - PI).abs());
            eq_gap = eq_gap.min((ks[i] - ks[j]).abs());
        }
    }
    (sum_gap, eq_gap)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn free_continuous_pair_passes() {
        let t = guard_operator(&Operator::free_continuous(), &[1.0, 2.0]).unwrap();
        assert!((t.entries[0].k - 1.0).abs() < 1e-8);
        assert!((t.entries[1].k - 2f64.sqrt()).abs() < 1e-8);
        assert!(t.half_band);
    }

    #[test]
    fn resonant_pair_rejected() {
        let e = [(PI / 3.0).powi(2), (2.0 * PI / 3.0).powi(2)];
        match guard_operator(&Operator::free_continuous(), &e) {
            Err(Error::ResonantSet(msg)) => assert!(msg.contains("k + k'")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn half_band_jacobi() {
        let e = [2.0 * 0.5f64.cos(), 2.0 * 1.2f64.cos()];
        let t = guard_operator(&Operator::free_jacobi(), &e).unwrap();
        assert!(t.half_band);
        assert!((t.entries[0].k - 0.5).abs() < 1e-8);
        assert!((t.entries[1].k - 1.2).abs() < 1e-8);
    }

    #[test]
    fn mixed_halves_and_center() {
        // k = 1 and k = 2 straddle π/2 without resonating
        let t = guard_operator(&Operator::free_jacobi(), &[2.0 * 1f64.cos(), 2.0 * 2f64.cos()]).unwrap();
        assert!(!t.half_band);
        assert!(matches!(guard_operator(&Operator::free_jacobi(), &[0.0]), Err(Error::ResonantSet(_))));
        assert!(matches!(guard_operator(&Operator::free_jacobi(), &[]), Err(Error::EmptyTargetSet)));
        assert!(matches!(guard_operator(&Operator::free_jacobi(), &[2.5]), Err(Error::Precondition(_))));
    }

    #[test]
    fn inequality_from_check_splits_anchor() {
        let i = Inequality::from_check(&Check::le("stage.monotone epoch 1 slot 0", 0.0, 1e-8));
        assert_eq!(i.anchor, "stage.monotone");
        assert_eq!(i.location, "epoch 1 slot 0");
        assert!(i.holds && i.margin > 0.0);
    }
}
