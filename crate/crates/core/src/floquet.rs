//! Floquet theory for `-u'' + V0 u = E u` with a 1-periodic `V0`.

use std::f64::consts::{FRAC_PI_2, TAU};

use num_complex::Complex64;

use crate::bands::{self, BandStructure, ScanOptions};
use crate::error::{Error, Result};
use crate::ode::Dopri5;
use crate::potential::PeriodicPotential;

pub type Mat2 = [[f64; 2]; 2];

/// Refusal margin `2 - |Δ|` for Floquet data near band edges.
pub const EDGE_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy)]
pub struct FloquetOptions {
    pub rtol: f64,
    /// Samples per period for the stored Floquet solution.
    pub grid: usize,
    pub edge_margin: f64,
}

impl Default for FloquetOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-11,
            grid: 1024,
            edge_margin: EDGE_MARGIN,
        }
    }
}

fn solver(v0: &PeriodicPotential, energy: f64, tol: f64) -> Dopri5 {
    let scale = (energy.abs() + v0.sup_estimate()).sqrt().max(1.0);
    Dopri5::new(tol, tol * 1e-3).with_h_max((0.25 / scale).min(1.0 / 16.0))
}

/// Transfer matrix over one period, `(u(0), u'(0)) -> (u(1), u'(1))`.
pub fn monodromy(v0: &PeriodicPotential, energy: f64, tol: f64) -> Result<Mat2> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput("tol must be positive".into()));
    }
    let mut y = [1.0, 0.0, 0.0, 1.0];
    let mut ode = solver(v0, energy, tol);
    ode.integrate(
        |x, y, dy| {
            let q = v0.eval(x) - energy;
            dy[0] = y[1];
            dy[1] = q * y[0];
            dy[2] = y[3];
            dy[3] = q * y[2];
        },
        0.0,
        &mut y,
        1.0,
        &[],
        |_, _, _| {},
    )?;
    Ok([[y[0], y[2]], [y[1], y[3]]])
}

/// `(Δ(E), dΔ/dE)`, the derivative from the variational equation in `E`.
pub fn discriminant_with_derivative(
    v0: &PeriodicPotential,
    energy: f64,
    tol: f64,
) -> Result<(f64, f64)> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput("tol must be positive".into()));
    }
    // [u1, u1', u2, u2', du1, du1', du2, du2'] with d = ∂/∂E
    let mut y = [1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0];
    let mut ode = solver(v0, energy, tol);
    ode.integrate(
        |x, y, dy| {
            let q = v0.eval(x) - energy;
            dy[0] = y[1];
            dy[1] = q * y[0];
            dy[2] = y[3];
            dy[3] = q * y[2];
            dy[4] = y[5];
            dy[5] = q * y[4] - y[0];
            dy[6] = y[7];
            dy[7] = q * y[6] - y[2];
        },
        0.0,
        &mut y,
        1.0,
        &[],
        |_, _, _| {},
    )?;
    Ok((y[0] + y[3], y[4] + y[7]))
}

pub fn discriminant(v0: &PeriodicPotential, energy: f64, tol: f64) -> Result<f64> {
    let m = monodromy(v0, energy, tol)?;
    Ok(m[0][0] + m[1][1])
}

pub fn locate_bands(
    v0: &PeriodicPotential,
    e_min: f64,
    e_max: f64,
    opts: ScanOptions,
) -> Result<BandStructure> {
    bands::locate_bands(
        |e| discriminant_with_derivative(v0, e, 1e-11),
        e_min,
        e_max,
        opts,
    )
}

/// `k(E) = arccos(Δ(E)/2) ∈ (0, π)`; monotone across each band since `Δ` is.
pub fn quasimomentum(v0: &PeriodicPotential, energy: f64, root_tol: f64) -> Result<f64> {
    let d = discriminant(v0, energy, 1e-11)?;
    bands::quasimomentum_from_disc(energy, d, root_tol)
}

#[inline]
fn hermite(t: f64, h: f64, f0: f64, d0: f64, f1: f64, d1: f64) -> f64 {
    let t2 = t * t;
    let t3 = t2 * t;
    (2.0 * t3 - 3.0 * t2 + 1.0) * f0
        + (t3 - 2.0 * t2 + t) * h * d0
        + (-2.0 * t3 + 3.0 * t2) * f1
        + (t3 - t2) * h * d1
}

#[inline]
fn hermite_c(t: f64, h: f64, f0: Complex64, d0: Complex64, f1: Complex64, d1: Complex64) -> Complex64 {
    Complex64::new(
        hermite(t, h, f0.re, d0.re, f1.re, d1.re),
        hermite(t, h, f0.im, d0.im, f1.im, d1.im),
    )
}

/// Floquet solution `φ = |φ| e^{iγ}` at one band-interior energy.
///
/// Values are tabulated over one period and interpolated with cubic
/// Hermite polynomials using exact derivatives from the equation itself;
/// `φ(x + m) = e^{iμm} φ(x)` extends them to the line.
#[derive(Debug, Clone)]
pub struct FloquetData {
    pub energy: f64,
    pub k: f64,
    pub disc: f64,
    /// Phase `μ` of the Floquet multiplier of the chosen branch, `±k`.
    pub multiplier_phase: f64,
    /// `γ(x + 1) - γ(x)`, congruent to `μ` mod 2π.
    pub gamma_increment: f64,
    pub phi0: Complex64,
    pub dphi0: Complex64,
    /// `Im(φ̄ φ')`, constant in `x` and positive.
    pub omega: f64,
    /// `1/G ≤ γ' ≤ G`.
    pub g_bound: f64,
    /// `(|u|² + |u'|²)/R² ∈ [1/K, K]` for every real solution.
    pub norm_k: f64,
    n: usize,
    phi: Vec<Complex64>,
    dphi: Vec<Complex64>,
    ddphi: Vec<Complex64>,
    gamma: Vec<f64>,
    abs_sq: Vec<f64>,
    /// `d|φ|²/dx` at the nodes.
    abs_sq_d: Vec<f64>,
    /// `γ'` at the nodes.
    gamma_d: Vec<f64>,
}

impl FloquetData {
    #[inline]
    fn locate(&self, x: f64) -> (f64, usize, f64) {
        let m = x.floor();
        let s = (x - m) * self.n as f64;
        let j = (s as usize).min(self.n - 1);
        (m, j, s - j as f64)
    }

    pub fn grid_len(&self) -> usize {
        self.n
    }

    /// `(φ(x), φ'(x))`.
    pub fn phi(&self, x: f64) -> (Complex64, Complex64) {
        let (m, j, t) = self.locate(x);
        let h = 1.0 / self.n as f64;
        let p = hermite_c(t, h, self.phi[j], self.dphi[j], self.phi[j + 1], self.dphi[j + 1]);
        let dp = hermite_c(t, h, self.dphi[j], self.ddphi[j], self.dphi[j + 1], self.ddphi[j + 1]);
        let f = Complex64::from_polar(1.0, self.multiplier_phase * m);
        (p * f, dp * f)
    }

    #[inline]
    pub fn abs_phi_sq(&self, x: f64) -> f64 {
        let (_, j, t) = self.locate(x);
        let h = 1.0 / self.n as f64;
        hermite(t, h, self.abs_sq[j], self.abs_sq_d[j], self.abs_sq[j + 1], self.abs_sq_d[j + 1])
    }

    #[inline]
    pub fn gamma_prime(&self, x: f64) -> f64 {
        self.omega / self.abs_phi_sq(x)
    }

    #[inline]
    pub fn gamma(&self, x: f64) -> f64 {
        self.phase(x).0
    }

    /// `(γ(x), γ'(x))` from a single table lookup.
    #[inline]
    pub fn phase(&self, x: f64) -> (f64, f64) {
        let (m, j, t) = self.locate(x);
        let h = 1.0 / self.n as f64;
        let g = hermite(t, h, self.gamma[j], self.gamma_d[j], self.gamma[j + 1], self.gamma_d[j + 1]);
        let s = hermite(t, h, self.abs_sq[j], self.abs_sq_d[j], self.abs_sq[j + 1], self.abs_sq_d[j + 1]);
        (g + m * self.gamma_increment, self.omega / s)
    }

    /// Periodic factor `p(x) = φ(x) e^{-iμx}` on the stored grid.
    pub fn p_samples(&self) -> Vec<(f64, Complex64)> {
        (0..self.n)
            .map(|j| {
                let x = j as f64 / self.n as f64;
                (x, self.phi[j] * Complex64::from_polar(1.0, -self.multiplier_phase * x))
            })
            .collect()
    }

    /// Grid samples `(x, φ, φ')` over one period.
    pub fn samples(&self) -> impl Iterator<Item = (f64, Complex64, Complex64)> + '_ {
        (0..=self.n).map(move |j| (j as f64 / self.n as f64, self.phi[j], self.dphi[j]))
    }

    /// `A` with `u = Im(Aφ)`, `u' = Im(Aφ')` for real data `(u, u')` at `x`.
    pub fn amplitude(&self, x: f64, u: f64, du: f64) -> Complex64 {
        let (p, dp) = self.phi(x);
        (p.conj() * du - dp.conj() * u) / self.omega
    }
}

pub fn floquet_solution(
    v0: &PeriodicPotential,
    energy: f64,
    opts: FloquetOptions,
) -> Result<FloquetData> {
    if opts.grid < 16 {
        return Err(Error::InvalidInput("Floquet grid needs at least 16 points".into()));
    }
    let m = monodromy(v0, energy, opts.rtol)?;
    let disc = m[0][0] + m[1][1];
    if disc.abs() >= 2.0 {
        return Err(Error::NotInBand { energy, disc });
    }
    if disc.abs() > 2.0 - opts.edge_margin {
        return Err(Error::DegenerateEigenvector { energy, disc });
    }
    let k = (0.5 * disc).acos();
    let lambda = Complex64::from_polar(1.0, k);
    let va = [Complex64::new(m[0][1], 0.0), lambda - m[0][0]];
    let vb = [lambda - m[1][1], Complex64::new(m[1][0], 0.0)];
    let nrm = |v: &[Complex64; 2]| v[0].norm_sqr() + v[1].norm_sqr();
    let mut v = if nrm(&va) >= nrm(&vb) { va } else { vb };
    let mut mu = k;
    if (v[0].conj() * v[1]).im < 0.0 {
        v = [v[0].conj(), v[1].conj()];
        mu = -k;
    }
    let s = nrm(&v).sqrt();
    let (phi0, dphi0) = (v[0] / s, v[1] / s);
    let omega = (phi0.conj() * dphi0).im;
    if !(omega > 0.0) {
        return Err(Error::DegenerateEigenvector { energy, disc });
    }

    let n = opts.grid;
    let stops: Vec<f64> = (1..=n).map(|j| j as f64 / n as f64).collect();
    let mut y = [phi0.re, dphi0.re, phi0.im, dphi0.im];
    let mut phi = vec![phi0];
    let mut dphi = vec![dphi0];
    let mut ode = solver(v0, energy, opts.rtol);
    ode.integrate(
        |x, y, dy| {
            let q = v0.eval(x) - energy;
            dy[0] = y[1];
            dy[1] = q * y[0];
            dy[2] = y[3];
            dy[3] = q * y[2];
        },
        0.0,
        &mut y,
        1.0,
        &stops,
        |_, y, is_stop| {
            if is_stop {
                phi.push(Complex64::new(y[0], y[2]));
                dphi.push(Complex64::new(y[1], y[3]));
            }
        },
    )?;
    if phi.len() != n + 1 {
        return Err(Error::InvalidInput("Floquet grid sampling incomplete".into()));
    }
    // close the period exactly
    let mult = Complex64::from_polar(1.0, mu);
    phi[n] = phi0 * mult;
    dphi[n] = dphi0 * mult;
    let ddphi: Vec<Complex64> = phi
        .iter()
        .enumerate()
        .map(|(j, p)| p * (v0.eval(j as f64 / n as f64) - energy))
        .collect();

    let mut gamma = Vec::with_capacity(n + 1);
    gamma.push(phi0.arg().rem_euclid(TAU));
    for j in 0..n {
        let step = (phi[j + 1] / phi[j]).arg();
        if step.abs() > FRAC_PI_2 {
            return Err(Error::PhaseGridTooCoarse {
                x: j as f64 / n as f64,
                step,
            });
        }
        gamma.push(gamma[j] + step);
    }
    let raw = gamma[n] - gamma[0];
    let wraps = ((raw - mu) / TAU).round();
    let increment = mu + TAU * wraps;
    gamma[n] = gamma[0] + increment;

    let abs_sq: Vec<f64> = phi.iter().map(|p| p.norm_sqr()).collect();
    let abs_sq_d: Vec<f64> = phi
        .iter()
        .zip(&dphi)
        .map(|(p, dp)| 2.0 * (p.conj() * dp).re)
        .collect();
    let gamma_d: Vec<f64> = abs_sq.iter().map(|s| omega / s).collect();
    let mut g_bound = 1.0f64;
    let mut norm_k = 1.0f64;
    for j in 0..=n {
        let gp = omega / abs_sq[j];
        g_bound = g_bound.max(gp).max(1.0 / gp);
        // singular values of A -> (Im Aφ, Im Aφ'): product ω, squares sum |φ|²+|φ'|²
        let fro = abs_sq[j] + dphi[j].norm_sqr();
        let disc_sv = (fro * fro - 4.0 * omega * omega).max(0.0).sqrt();
        let s_max2 = 0.5 * (fro + disc_sv);
        let s_min2 = omega * omega / s_max2;
        norm_k = norm_k.max(s_max2).max(1.0 / s_min2);
    }

    Ok(FloquetData {
        energy,
        k,
        disc,
        multiplier_phase: mu,
        gamma_increment: increment,
        phi0,
        dphi0,
        omega,
        g_bound,
        norm_k,
        n,
        phi,
        dphi,
        ddphi,
        gamma,
        abs_sq,
        abs_sq_d,
        gamma_d,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn free() -> PeriodicPotential {
        PeriodicPotential::Zero
    }

    #[test]
    fn free_traces() {
        let m = monodromy(&free(), PI * PI, 1e-10).unwrap();
        assert!((m[0][0] + m[1][1] + 2.0).abs() < 1e-9);
        let d = discriminant(&free(), PI * PI / 4.0, 1e-10).unwrap();
        assert!(d.abs() < 1e-9);
        let d = discriminant(&free(), 4.0 * PI * PI, 1e-10).unwrap();
        assert!((d - 2.0).abs() < 1e-9);
        let d = discriminant(&free(), (PI / 3.0).powi(2), 1e-10).unwrap();
        assert!((d - 1.0).abs() < 1e-9);
    }

    #[test]
    fn determinant_is_one() {
        let v0 = PeriodicPotential::cosine(2.0, 1);
        for e in [-1.0, 0.5, 1.0, 7.3, 20.0] {
            let tol = 1e-10;
            let m = monodromy(&v0, e, tol).unwrap();
            let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
            assert!((det - 1.0).abs() < 10.0 * tol, "E = {e}: det = {det}");
        }
    }

    #[test]
    fn free_floquet_first_band() {
        let fd = floquet_solution(&free(), 1.0, FloquetOptions::default()).unwrap();
        assert!((fd.k - 1.0).abs() < 1e-9);
        assert!((fd.gamma_increment - 1.0).abs() < 1e-9);
        for i in 0..50 {
            let x = 0.37 * i as f64;
            assert!((fd.gamma_prime(x) - 1.0).abs() < 1e-8);
            assert!((fd.gamma(x) - fd.gamma(0.0) - x).abs() < 1e-8);
        }
        assert!(fd.g_bound < 1.0 + 1e-8);
    }

    #[test]
    fn free_floquet_second_band() {
        let fd = floquet_solution(&free(), 4.0, FloquetOptions::default()).unwrap();
        assert!((fd.gamma_prime(0.3) - 2.0).abs() < 1e-8);
        assert!((fd.gamma_increment - 2.0).abs() < 1e-9);
    }

    #[test]
    fn higher_band_uses_conjugate_branch() {
        // √E = 1.5π lies in the second free band, k = π/2
        let e = (1.5 * PI).powi(2);
        let fd = floquet_solution(&free(), e, FloquetOptions::default()).unwrap();
        assert!(fd.omega > 0.0);
        assert!((fd.gamma_increment - 1.5 * PI).abs() < 1e-8);
        assert!(((fd.gamma_increment - fd.multiplier_phase) / TAU).fract().abs() < 1e-9);
    }

    #[test]
    fn mathieu_wronskian_constancy() {
        let v0 = PeriodicPotential::cosine(2.0, 1);
        let fd = floquet_solution(&v0, 1.0, FloquetOptions::default()).unwrap();
        for (_, p, dp) in fd.samples() {
            let w = (p.conj() * dp).im;
            assert!(((w - fd.omega) / fd.omega).abs() < 1e-8);
        }
        // interpolated values satisfy the identity to interpolation accuracy
        for i in 0..200 {
            let x = 0.013 * i as f64 + 0.0007;
            let (p, dp) = fd.phi(x);
            let w = (p.conj() * dp).im;
            assert!(((w - fd.omega) / fd.omega).abs() < 1e-8, "x = {x}");
        }
    }

    #[test]
    fn refuses_edges_and_gaps() {
        assert!(matches!(
            floquet_solution(&free(), -1.0, FloquetOptions::default()),
            Err(Error::NotInBand { .. })
        ));
        let e = PI * PI * (1.0 - 1e-9);
        assert!(matches!(
            floquet_solution(&free(), e, FloquetOptions::default()),
            Err(Error::DegenerateEigenvector { .. })
        ));
    }

    #[test]
    fn coarse_grid_is_rejected() {
        // γ advances about 30 rad per period, ~1.85 rad per step on 16 points
        let opts = FloquetOptions {
            grid: 16,
            ..Default::default()
        };
        let e = (30.0f64 - 0.4).powi(2);
        assert!(matches!(
            floquet_solution(&free(), e, opts),
            Err(Error::PhaseGridTooCoarse { .. })
        ));
    }
}
