//! Floquet solution `φ(n) = p(n) e^{ikn/q}` of a periodic Jacobi matrix.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::floquet::EDGE_MARGIN;

use super::PeriodicJacobi;

/// Tabulated over one period; `|φ|`, `Δγ` and `e^{iΔγ}` are `q`-periodic
/// and `φ(n + q) = e^{iμ} φ(n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JacobiFloquet {
    pub energy: f64,
    pub k: f64,
    pub disc: f64,
    pub q: usize,
    /// `±k`, whichever branch has `ω > 0`.
    pub multiplier_phase: f64,
    pub omega: f64,
    /// `γ(0) ∈ [0, 2π)`.
    pub gamma0: f64,
    /// `γ(n + q) - γ(n)`, congruent to `μ` mod `2π`.
    pub gamma_period: f64,
    /// `1/K ≤ R(n)/|(u(n), u(n-1))| ≤ K` for every real solution.
    pub norm_k: f64,
    a: Vec<f64>,
    phi: Vec<Complex64>,
    mag: Vec<f64>,
    dgamma: Vec<f64>,
    rot: Vec<Complex64>,
}

impl JacobiFloquet {
    #[inline]
    fn idx(&self, n: i64) -> usize {
        n.rem_euclid(self.q as i64) as usize
    }

    #[inline]
    pub fn a(&self, n: i64) -> f64 {
        self.a[self.idx(n)]
    }

    /// `|φ(n)|`
    #[inline]
    pub fn mag(&self, n: i64) -> f64 {
        self.mag[self.idx(n)]
    }

    #[inline]
    pub fn abs_sq(&self, n: i64) -> f64 {
        let m = self.mag(n);
        m * m
    }

    /// `γ(n+1) - γ(n) ∈ (0, π)`.
    #[inline]
    pub fn dgamma(&self, n: i64) -> f64 {
        self.dgamma[self.idx(n)]
    }

    /// `e^{i(γ(n+1) - γ(n))}`
    #[inline]
    pub fn rot(&self, n: i64) -> Complex64 {
        self.rot[self.idx(n)]
    }

    pub fn phi(&self, n: i64) -> Complex64 {
        let q = self.q as i64;
        let m = n.div_euclid(q);
        self.phi[self.idx(n)] * Complex64::from_polar(1.0, (m as f64 * self.multiplier_phase).rem_euclid(std::f64::consts::TAU))
    }

    /// Unwrapped `γ(n)` for `n ≥ 0`.
    pub fn gamma(&self, n: i64) -> f64 {
        let q = self.q as i64;
        let m = n.div_euclid(q);
        let r = self.idx(n);
        self.gamma0 + m as f64 * self.gamma_period + self.dgamma[..r].iter().sum::<f64>()
    }

    /// `2 |φ(n)| |φ(n+1)| a_{n+1} sin Δγ(n)`, equal to `ω` for every `n`.
    pub fn wronskian_at(&self, n: i64) -> f64 {
        2.0 * self.mag(n) * self.mag(n + 1) * self.a(n + 1) * self.dgamma(n).sin()
    }

    /// `min_n |φ(n)|²` and `max_n |φ(n)|²`.
    pub fn abs_sq_range(&self) -> (f64, f64) {
        self.mag.iter().fold((f64::INFINITY, 0f64), |(lo, hi), m| (lo.min(m * m), hi.max(m * m)))
    }
}

pub fn jacobi_floquet(j0: &PeriodicJacobi, energy: f64) -> Result<JacobiFloquet> {
    let q = j0.period();
    let m = j0.monodromy(energy);
    let disc = m[0][0] + m[1][1];
    if disc.abs() >= 2.0 {
        return Err(Error::NotInBand { energy, disc });
    }
    if disc.abs() > 2.0 - EDGE_MARGIN {
        return Err(Error::DegenerateEigenvector { energy, disc });
    }
    let k = (0.5 * disc).acos();
    let lambda = Complex64::from_polar(1.0, k);
    // (φ(1), φ(0)) is an eigenvector of M
    let va = [Complex64::new(m[0][1], 0.0), lambda - m[0][0]];
    let vb = [lambda - m[1][1], Complex64::new(m[1][0], 0.0)];
    let nrm = |v: &[Complex64; 2]| v[0].norm_sqr() + v[1].norm_sqr();
    let v = if nrm(&va) >= nrm(&vb) { va } else { vb };
    let s = nrm(&v).sqrt();
    let mut phi = vec![v[1] / s, v[0] / s];
    for n in 1..=q as i64 {
        let (p, pm) = (phi[n as usize], phi[n as usize - 1]);
        phi.push(((energy - j0.b(n + 1)) * p - j0.a(n) * pm) / j0.a(n + 1));
    }
    let mut mu = k;
    let mut omega = 2.0 * j0.a(1) * (phi[0].conj() * phi[1]).im;
    if omega < 0.0 {
        phi.iter_mut().for_each(|p| *p = p.conj());
        mu = -k;
        omega = -omega;
    }
    if !(omega > 0.0) {
        return Err(Error::DegenerateEigenvector { energy, disc });
    }
    phi.truncate(q + 1);
    let mag: Vec<f64> = phi[..q].iter().map(|p| p.norm()).collect();
    let mut dgamma = Vec::with_capacity(q);
    let mut rot = Vec::with_capacity(q);
    for j in 0..q {
        let r = phi[j + 1] * phi[j].conj();
        let d = r.arg();
        if !(d > 0.0 && d < std::f64::consts::PI) {
            return Err(Error::DegenerateEigenvector { energy, disc });
        }
        dgamma.push(d);
        rot.push(r / r.norm());
    }
    let mut norm_k = 1f64;
    for j in 0..q {
        let (m0, m1) = (mag[(j + q - 1) % q], mag[j]);
        // singular values of (cos θ, sin θ) -> (u(n), u(n-1))/R
        let prod = m0 * m1 * dgamma[(j + q - 1) % q].sin();
        let sum = m0 * m0 + m1 * m1;
        let smax2 = 0.5 * (sum + (sum * sum - 4.0 * prod * prod).max(0.0).sqrt());
        let smin2 = prod * prod / smax2;
        norm_k = norm_k.max(smax2.sqrt()).max(1.0 / smin2.sqrt());
    }
    Ok(JacobiFloquet {
        energy,
        k,
        disc,
        q,
        multiplier_phase: mu,
        omega,
        gamma0: phi[0].arg().rem_euclid(std::f64::consts::TAU),
        gamma_period: dgamma.iter().sum(),
        norm_k,
        a: (0..q as i64).map(|n| j0.a(n)).collect(),
        phi,
        mag,
        dgamma,
        rot,
    })
}
