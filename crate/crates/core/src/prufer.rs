//! Generalized Prüfer variables relative to a Floquet frame.
//!
//! A real solution of `-u'' + (V0 + V) u = E u` is written as
//! `u = Im(A φ)`, `u' = Im(A φ')` with `A = R e^{i(θ - γ)}`, so that
//! `u = R |φ| sin θ`. Then
//!
//! ```text
//! θ'      = γ' - (V / γ') sin²θ
//! (ln R)' = (V / (2γ')) sin 2θ
//! ```

use std::f64::consts::{FRAC_PI_2, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::floquet::FloquetData;
use crate::ode::Dopri5;
use crate::potential::PeriodicPotential;

/// `u'(a)/u(a) = tan θ0` with `θ0 ∈ [0, π]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryCondition {
    pub theta0: f64,
    pub location: f64,
}

impl BoundaryCondition {
    pub fn new(theta0: f64, location: f64) -> Result<Self> {
        if !(0.0..=std::f64::consts::PI).contains(&theta0) {
            return Err(Error::InvalidInput(format!(
                "boundary angle {theta0} outside [0, π]"
            )));
        }
        Ok(Self { theta0, location })
    }

    /// Unit vector `(u(a), u'(a))`; the Dirichlet angle maps to `(0, 1)`.
    pub fn direction(&self) -> (f64, f64) {
        if (self.theta0 - FRAC_PI_2).abs() < 1e-15 {
            (0.0, 1.0)
        } else {
            (self.theta0.cos(), self.theta0.sin())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PruferStart {
    /// Prüfer angle at the boundary, in `[0, 2π)`.
    pub psi0: f64,
    /// `R(a)` of the solution with unit boundary direction; dividing that
    /// solution by it gives `R(a) = 1`.
    pub amplitude: f64,
}

/// Prüfer angle reproducing the boundary direction of `bc`.
pub fn initial_prufer_angle(bc: &BoundaryCondition, fd: &FloquetData) -> PruferStart {
    let (u, du) = bc.direction();
    let a = fd.amplitude(bc.location, u, du);
    PruferStart {
        psi0: (a.arg() + fd.gamma(bc.location)).rem_euclid(TAU),
        amplitude: a.norm(),
    }
}

/// `(u, u')` at `x` for Prüfer data `(ln R, θ)`.
pub fn solution_at(fd: &FloquetData, x: f64, ln_r: f64, theta: f64) -> (f64, f64) {
    let (p, dp) = fd.phi(x);
    let a = num_complex::Complex64::from_polar(ln_r.exp(), theta - fd.gamma(x));
    ((a * p).im, (a * dp).im)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruferTrajectory {
    pub energy: f64,
    pub grid: Vec<f64>,
    pub ln_r: Vec<f64>,
    pub theta: Vec<f64>,
}

impl PruferTrajectory {
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PruferOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Dense output samples per period of γ (one 2π turn).
    pub points_per_turn: usize,
}

impl Default for PruferOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            points_per_turn: 16,
        }
    }
}

/// Output grid with `points_per_turn` samples per 2π of phase.
pub fn phase_grid(fd: &FloquetData, x0: f64, x1: f64, points_per_turn: usize) -> Vec<f64> {
    let dx = TAU / (fd.gamma_increment.abs() * points_per_turn.max(1) as f64);
    let n = ((x1 - x0) / dx).ceil().max(1.0) as usize;
    (0..=n)
        .map(|i| if i == n { x1 } else { x0 + (x1 - x0) * i as f64 / n as f64 })
        .collect()
}

pub(crate) fn step_cap(fd: &FloquetData) -> f64 {
    // a quarter turn of the phase
    FRAC_PI_2 / (fd.gamma_increment.abs().max(1e-3) * fd.g_bound)
}

/// Integrates the Prüfer flow from `θ(x0) = psi0`, `ln R(x0) = 0`.
pub fn integrate_prufer<V>(
    fd: &FloquetData,
    v: V,
    x0: f64,
    x1: f64,
    psi0: f64,
    opts: PruferOptions,
) -> Result<PruferTrajectory>
where
    V: Fn(f64) -> f64,
{
    if !(x0 < x1) {
        return Err(Error::InvalidInput(format!("need x0 < x1, got [{x0}, {x1}]")));
    }
    let grid = phase_grid(fd, x0, x1, opts.points_per_turn);
    integrate_prufer_on(fd, v, &grid, psi0, opts)
}

/// As [`integrate_prufer`] but sampled on a caller-supplied increasing grid.
pub fn integrate_prufer_on<V>(
    fd: &FloquetData,
    v: V,
    grid: &[f64],
    psi0: f64,
    opts: PruferOptions,
) -> Result<PruferTrajectory>
where
    V: Fn(f64) -> f64,
{
    if grid.len() < 2 || grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidInput("grid must be strictly increasing".into()));
    }
    let mut out = PruferTrajectory {
        energy: fd.energy,
        grid: Vec::with_capacity(grid.len()),
        ln_r: Vec::with_capacity(grid.len()),
        theta: Vec::with_capacity(grid.len()),
    };
    out.grid.push(grid[0]);
    out.ln_r.push(0.0);
    out.theta.push(psi0);
    // the state carries θ - γ(x), which stays O(1) where θ itself grows
    let mut y = [psi0 - fd.gamma(grid[0]), 0.0];
    let mut ode = Dopri5::new(opts.rtol, opts.atol).with_h_max(step_cap(fd));
    ode.integrate(
        |x, y, dy| {
            let (g, gp) = fd.phase(x);
            let vx = v(x);
            let (s, c) = (y[0] + g).sin_cos();
            dy[0] = -vx * s * s / gp;
            dy[1] = vx * s * c / gp;
        },
        grid[0],
        &mut y,
        grid[grid.len() - 1],
        &grid[1..],
        |x, y, is_stop| {
            if is_stop {
                out.grid.push(x);
                out.theta.push(y[0] + fd.gamma(x));
                out.ln_r.push(y[1]);
            }
        },
    )?;
    Ok(out)
}

/// `(u, u')` on the trajectory grid.
pub fn reconstruct_solution(traj: &PruferTrajectory, fd: &FloquetData) -> Result<Vec<(f64, f64)>> {
    if traj.energy != fd.energy {
        return Err(Error::InvalidInput(format!(
            "trajectory at E = {} but Floquet data at E = {}",
            traj.energy, fd.energy
        )));
    }
    Ok(traj
        .grid
        .iter()
        .zip(traj.ln_r.iter().zip(&traj.theta))
        .map(|(&x, (&l, &t))| solution_at(fd, x, l, t))
        .collect())
}

/// Plain initial-value integration of `-u'' + (V0 + V) u = E u`.
///
/// Starts from `(u, u')(grid[0]) = initial` and returns `(u, u')` on `grid`.
pub fn direct_solve<V>(
    v0: &PeriodicPotential,
    v: V,
    energy: f64,
    initial: (f64, f64),
    grid: &[f64],
    rtol: f64,
) -> Result<Vec<(f64, f64)>>
where
    V: Fn(f64) -> f64,
{
    if grid.len() < 2 || grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidInput("grid must be strictly increasing".into()));
    }
    let mut out = Vec::with_capacity(grid.len());
    out.push(initial);
    let mut y = [initial.0, initial.1];
    let scale = (energy.abs() + v0.sup_estimate()).sqrt().max(1.0);
    let mut ode = Dopri5::new(rtol, rtol * 1e-3).with_h_max(0.25 / scale);
    ode.integrate(
        |x, y, dy| {
            dy[0] = y[1];
            dy[1] = (v0.eval(x) + v(x) - energy) * y[0];
        },
        grid[0],
        &mut y,
        grid[grid.len() - 1],
        &grid[1..],
        |_, y, is_stop| {
            if is_stop {
                out.push((y[0], y[1]));
            }
        },
    )?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::floquet::{floquet_solution, FloquetOptions};
    use std::f64::consts::PI;

    fn fd(v0: &PeriodicPotential, e: f64) -> FloquetData {
        floquet_solution(v0, e, FloquetOptions::default()).unwrap()
    }

    #[test]
    fn free_neumann_start_is_quarter_turn() {
        let f = fd(&PeriodicPotential::Zero, 1.0);
        let s = initial_prufer_angle(&BoundaryCondition::new(0.0, 0.0).unwrap(), &f);
        assert!((s.psi0 - FRAC_PI_2).abs() < 1e-9 || (s.psi0 - 1.5 * PI).abs() < 1e-9);
    }

    #[test]
    fn dirichlet_start_is_multiple_of_pi() {
        let v0 = PeriodicPotential::cosine(2.0, 1);
        let f = fd(&v0, 1.0);
        for a in [0.0, 0.3, 17.25] {
            let s = initial_prufer_angle(&BoundaryCondition::new(FRAC_PI_2, a).unwrap(), &f);
            assert!(s.psi0.sin().abs() < 1e-12, "psi0 = {}", s.psi0);
        }
    }

    #[test]
    fn zero_perturbation_is_pure_phase() {
        let v0 = PeriodicPotential::cosine(2.0, 1);
        let f = fd(&v0, 1.0);
        let t = integrate_prufer(&f, |_| 0.0, 3.0, 103.0, 0.4, PruferOptions::default()).unwrap();
        let g0 = f.gamma(3.0);
        for i in 0..t.len() {
            assert!(t.ln_r[i].abs() < 1e-8);
            let want = 0.4 + f.gamma(t.grid[i]) - g0;
            assert!((t.theta[i] - want).abs() < 1e-7, "x = {}", t.grid[i]);
        }
    }

    #[test]
    fn free_direct_solutions() {
        let grid: Vec<f64> = (0..=100).map(|i| 0.1 * i as f64).collect();
        let s = direct_solve(&PeriodicPotential::Zero, |_| 0.0, 4.0, (0.0, 2.0), &grid, 1e-11).unwrap();
        for (x, (u, du)) in grid.iter().zip(&s) {
            assert!((u - (2.0 * x).sin()).abs() < 1e-8);
            assert!((du - 2.0 * (2.0 * x).cos()).abs() < 1e-8);
        }
        let s = direct_solve(&PeriodicPotential::Zero, |_| 0.0, 1.0, (1.0, 0.0), &grid, 1e-11).unwrap();
        for (x, (u, _)) in grid.iter().zip(&s) {
            assert!((u - x.cos()).abs() < 1e-8);
        }
    }

    #[test]
    fn reconstruction_matches_boundary_direction() {
        let v0 = PeriodicPotential::cosine(2.0, 1);
        let f = fd(&v0, 1.0);
        let bc = BoundaryCondition::new(1.0, 0.0).unwrap();
        let s = initial_prufer_angle(&bc, &f);
        let (u, du) = solution_at(&f, 0.0, 0.0, s.psi0);
        assert!((du / u - 1.0f64.tan()).abs() < 1e-8);
        assert!(((u * u + du * du).sqrt() * s.amplitude - 1.0).abs() < 1e-10);
    }

    #[test]
    fn energy_mismatch_rejected() {
        let f = fd(&PeriodicPotential::Zero, 1.0);
        let t = PruferTrajectory {
            energy: 2.0,
            grid: vec![0.0],
            ln_r: vec![0.0],
            theta: vec![0.0],
        };
        assert!(reconstruct_solution(&t, &f).is_err());
    }
}
