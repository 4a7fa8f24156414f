use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::floquet::FloquetData;
use crate::prufer::{initial_prufer_angle, phase_grid, BoundaryCondition, PruferTrajectory};
use crate::resonance::{check_pair, is_half_band};

use super::engine::{Engine, EngineConfig, Segment};
use super::mollifier::{cutoff, default_width};
use super::{fit_slope, geometric_grid};

/// One block of the construction: a potential on `(x0, x1)` decaying the
/// target while leaving the protected energies essentially untouched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub target: f64,
    pub protected: Vec<f64>,
    pub x0: f64,
    pub x1: f64,
    pub b: f64,
    /// Boundary angle at `x0`, `u'/u = tan θ0`.
    pub theta0: f64,
    pub coupling: f64,
    pub mollify_width: f64,
}

impl Stage {
    pub fn new(target: f64, protected: Vec<f64>, x0: f64, x1: f64, b: f64, theta0: f64, coupling: f64) -> Self {
        Self {
            target,
            protected,
            x0,
            x1,
            b,
            theta0,
            coupling,
            mollify_width: default_width(x0, x1),
        }
    }

    pub fn segment(&self, target: Option<usize>) -> Segment {
        Segment {
            x0: self.x0,
            x1: self.x1,
            b: self.b,
            coupling: self.coupling,
            width: self.mollify_width,
            target,
        }
    }

    /// Admissibility: geometry, `x0 - b ≥ k_min`, non-resonance.
    pub fn validate(&self, k_min: f64, fd_target: &FloquetData, fd_protected: &[&FloquetData]) -> Result<()> {
        if !(self.x0 < self.x1) || !(self.b < self.x0) {
            return Err(Error::StageNotAdmissible(format!(
                "need b < x0 < x1, got b = {}, [{}, {}]",
                self.b, self.x0, self.x1
            )));
        }
        if !(self.x0 - self.b >= k_min) {
            return Err(Error::StageNotAdmissible(format!(
                "x0 - b = {} is below K_min = {k_min}",
                self.x0 - self.b
            )));
        }
        if !(self.coupling >= 0.0) || !(self.mollify_width >= 0.0) {
            return Err(Error::StageNotAdmissible("negative coupling or width".into()));
        }
        if !(0.0..=PI).contains(&self.theta0) {
            return Err(Error::StageNotAdmissible(format!(
                "boundary angle {} outside [0, π]",
                self.theta0
            )));
        }
        if fd_target.energy != self.target {
            return Err(Error::InvalidInput("Floquet data does not match the stage target".into()));
        }
        if is_half_band(fd_target.k) {
            return Err(Error::StageNotAdmissible(format!(
                "target quasimomentum {} is π/2",
                fd_target.k
            )));
        }
        if fd_protected.len() != self.protected.len() {
            return Err(Error::InvalidInput("protected Floquet data does not match the stage".into()));
        }
        for fd in fd_protected {
            check_pair(fd_target.k, fd.k)?;
        }
        Ok(())
    }
}

/// `C = 4 D G`: enough coupling for a decay exponent of at least `D`.
pub fn coupling_for(decay_exponent: f64, fd: &FloquetData) -> f64 {
    4.0 * decay_exponent * fd.g_bound
}

#[derive(Debug, Clone, Copy)]
pub struct StageOptions {
    pub engine: EngineConfig,
    /// Boundary-angle probes, equispaced in `[0, π)`.
    pub probes: usize,
    /// Relative slack on the fitted slope: pass if `s ≤ -D (1 - slack)`.
    pub slope_slack: f64,
    pub record_rel: f64,
    pub record_min_dx: f64,
    pub monotone_tol: f64,
    pub k_min: f64,
}

impl Default for StageOptions {
    fn default() -> Self {
        Self {
            engine: EngineConfig::default(),
            probes: 8,
            slope_slack: 0.1,
            record_rel: 2e-3,
            record_min_dx: 1.0,
            monotone_tol: 1e-8,
            k_min: 1000.0,
        }
    }
}

pub fn probe_angles(n: usize) -> Vec<f64> {
    (0..n).map(|j| PI * j as f64 / n as f64).collect()
}

fn start_angle(theta0: f64, x0: f64, fd: &FloquetData) -> Result<f64> {
    Ok(initial_prufer_angle(&BoundaryCondition::new(theta0, x0)?, fd).psi0)
}

/// Target trajectory under its own stage potential, sampled 16 times per
/// turn of the phase.
pub fn solve_stage_theta(stage: &Stage, fd: &FloquetData, cfg: EngineConfig) -> Result<PruferTrajectory> {
    let psi0 = start_angle(stage.theta0, stage.x0, fd)?;
    solve_stage_from(stage, fd, psi0, &phase_grid(fd, stage.x0, stage.x1, 16), cfg)
}

/// As [`solve_stage_theta`] from a given Prüfer angle and output grid.
pub fn solve_stage_from(
    stage: &Stage,
    fd: &FloquetData,
    psi0: f64,
    grid: &[f64],
    cfg: EngineConfig,
) -> Result<PruferTrajectory> {
    let mut engine = Engine::new(vec![fd], &[(psi0, 0.0)], stage.x0, cfg);
    let mut traj = PruferTrajectory {
        energy: fd.energy,
        grid: vec![stage.x0],
        ln_r: vec![0.0],
        theta: vec![psi0],
    };
    let stops: Vec<f64> = grid.iter().copied().filter(|&x| x > stage.x0).collect();
    engine.run(&stage.segment(Some(0)), &stops, |s| {
        if s.is_stop {
            traj.grid.push(s.x);
            traj.ln_r.push(s.ln_r(0));
            traj.theta.push(s.theta(0));
        }
    })?;
    Ok(traj)
}

/// The mollified stage potential reconstructed from a target trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StagePotential {
    pub x0: f64,
    pub x1: f64,
    pub b: f64,
    pub coupling: f64,
    pub width: f64,
    pub grid: Vec<f64>,
    pub theta: Vec<f64>,
    pub dtheta: Vec<f64>,
}

impl StagePotential {
    /// Unmollified profile `-C sin 2θ/(1+x-b)` at a sample.
    pub fn raw_at_sample(&self, i: usize) -> f64 {
        -self.coupling * (2.0 * self.theta[i]).sin() / (1.0 + self.grid[i] - self.b)
    }

    fn theta_at(&self, x: f64) -> f64 {
        let j = match self.grid.partition_point(|&g| g <= x) {
            0 => 0,
            p if p >= self.grid.len() => self.grid.len() - 2,
            p => p - 1,
        };
        let h = self.grid[j + 1] - self.grid[j];
        let t = (x - self.grid[j]) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * self.theta[j]
            + (t3 - 2.0 * t2 + t) * h * self.dtheta[j]
            + (-2.0 * t3 + 3.0 * t2) * self.theta[j + 1]
            + (t3 - t2) * h * self.dtheta[j + 1]
    }

    pub fn eval(&self, x: f64) -> f64 {
        let chi = cutoff(x, self.x0, self.x1, self.width);
        if chi == 0.0 {
            return 0.0;
        }
        -self.coupling * chi * (2.0 * self.theta_at(x)).sin() / (1.0 + x - self.b)
    }
}

pub fn stage_potential(stage: &Stage, traj: &PruferTrajectory, fd: &FloquetData) -> Result<StagePotential> {
    if traj.len() < 2 {
        return Err(Error::InvalidInput("trajectory needs at least two samples".into()));
    }
    let seg = stage.segment(Some(0));
    let dtheta = traj
        .grid
        .iter()
        .zip(&traj.theta)
        .map(|(&x, &th)| {
            let gp = fd.gamma_prime(x);
            let v = seg.potential(x, th);
            gp - v * th.sin().powi(2) / gp
        })
        .collect();
    Ok(StagePotential {
        x0: stage.x0,
        x1: stage.x1,
        b: stage.b,
        coupling: stage.coupling,
        width: stage.mollify_width,
        grid: traj.grid.clone(),
        theta: traj.theta.clone(),
        dtheta,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtectedStability {
    pub energy: f64,
    /// `max_x R(x)/R(x0)` over all probes.
    pub max_ratio: f64,
    pub worst_angle: f64,
    pub worst_x: f64,
    /// Sup of the cross oscillation integral over the stage, worst probe.
    pub cross_sup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub target: f64,
    pub coupling: f64,
    pub x0: f64,
    pub x1: f64,
    pub b: f64,
    pub decay_exponent: f64,
    /// Least-squares slope of `ln R` against `ln((x-b)/(x0-b))`.
    pub slope: f64,
    pub slope_bound: f64,
    /// `max_x ln R(x) - ln R(x0)` for the target; should not be positive.
    pub target_max_rise: f64,
    pub target_ln_r_end: f64,
    /// `sup |V(x)| (x - b)`, at most the coupling.
    pub sup_v_xb: f64,
    pub cos4_sup: f64,
    pub protected: Vec<ProtectedStability>,
}

impl StageReport {
    pub fn max_protected_ratio(&self) -> f64 {
        self.protected.iter().map(|p| p.max_ratio).fold(1.0, f64::max)
    }

    /// The first failing inequality, if any.
    pub fn violation(&self, monotone_tol: f64) -> Option<Error> {
        if self.slope > self.slope_bound {
            return Some(Error::ContractViolated {
                name: "stage.decay_slope".into(),
                location: self.x1,
                lhs: self.slope,
                rhs: self.slope_bound,
            });
        }
        if self.target_max_rise > monotone_tol {
            return Some(Error::ContractViolated {
                name: "stage.target_monotone".into(),
                location: self.x0,
                lhs: self.target_max_rise,
                rhs: monotone_tol,
            });
        }
        if self.sup_v_xb > self.coupling * (1.0 + 1e-12) {
            return Some(Error::ContractViolated {
                name: "stage.envelope".into(),
                location: self.x0,
                lhs: self.sup_v_xb,
                rhs: self.coupling,
            });
        }
        for p in &self.protected {
            if p.max_ratio > 2.0 {
                return Some(Error::ContractViolated {
                    name: format!("stage.protected_stability(E = {})", p.energy),
                    location: p.worst_x,
                    lhs: p.max_ratio,
                    rhs: 2.0,
                });
            }
        }
        None
    }
}

struct ProbeOutcome {
    samples: Vec<(f64, f64)>,
    target_max_rise: f64,
    target_end: f64,
    sup_v_xb: f64,
    cos4_sup: f64,
    /// per protected: (max lnR, x at max, cross sup)
    protected: Vec<(f64, f64, f64)>,
}

fn run_probe(
    stage: &Stage,
    fd_target: &FloquetData,
    fd_protected: &[&FloquetData],
    psi_target: f64,
    angle: f64,
    record: &[f64],
    opts: &StageOptions,
) -> Result<ProbeOutcome> {
    let mut fds = vec![fd_target];
    fds.extend_from_slice(fd_protected);
    let mut init = vec![(psi_target, 0.0)];
    for fd in fd_protected {
        init.push((start_angle(angle, stage.x0, fd)?, 0.0));
    }
    let cfg = EngineConfig {
        oscillation: true,
        ..opts.engine
    };
    let mut engine = Engine::new(fds, &init, stage.x0, cfg);
    let np = fd_protected.len();
    let mut out = ProbeOutcome {
        samples: vec![(0.0, 0.0)],
        target_max_rise: 0.0,
        target_end: 0.0,
        sup_v_xb: 0.0,
        cos4_sup: 0.0,
        protected: vec![(0.0, stage.x0, 0.0); np],
    };
    let l0 = stage.x0 - stage.b;
    engine.run(&stage.segment(Some(0)), record, |s| {
        let lt = s.ln_r(0);
        out.target_max_rise = out.target_max_rise.max(lt);
        out.sup_v_xb = out.sup_v_xb.max(s.v.abs() * (s.x - stage.b));
        out.cos4_sup = out.cos4_sup.max(s.osc_cos().abs());
        for j in 0..np {
            let l = s.ln_r(j + 1);
            let p = &mut out.protected[j];
            if l > p.0 {
                p.0 = l;
                p.1 = s.x;
            }
            p.2 = p.2.max(s.osc_cross(j + 1).abs());
        }
        if s.is_stop {
            out.samples.push((((s.x - stage.b) / l0).ln(), lt));
        }
    })?;
    out.target_end = engine.ln_r(0);
    Ok(out)
}

/// Runs a stage with all probes and measures every stage inequality.
pub fn evaluate_stage(
    stage: &Stage,
    fd_target: &FloquetData,
    fd_protected: &[&FloquetData],
    decay_exponent: f64,
    opts: &StageOptions,
) -> Result<StageReport> {
    stage.validate(opts.k_min, fd_target, fd_protected)?;
    let psi_target = start_angle(stage.theta0, stage.x0, fd_target)?;
    let record: Vec<f64> = geometric_grid(stage.x0, stage.x1, opts.record_rel, opts.record_min_dx)
        .into_iter()
        .skip(1)
        .collect();
    let angles = if fd_protected.is_empty() {
        vec![0.0]
    } else {
        probe_angles(opts.probes.max(1))
    };
    let outcomes: Vec<ProbeOutcome> = angles
        .par_iter()
        .map(|&a| run_probe(stage, fd_target, fd_protected, psi_target, a, &record, opts))
        .collect::<Result<_>>()?;

    let first = &outcomes[0];
    let (ls, rs): (Vec<f64>, Vec<f64>) = first.samples.iter().copied().unzip();
    let slope = fit_slope(&ls, &rs);
    let mut protected = Vec::with_capacity(fd_protected.len());
    for (j, fd) in fd_protected.iter().enumerate() {
        let mut best = ProtectedStability {
            energy: fd.energy,
            max_ratio: 1.0,
            worst_angle: angles[0],
            worst_x: stage.x0,
            cross_sup: 0.0,
        };
        for (o, &a) in outcomes.iter().zip(&angles) {
            let (m, x, c) = o.protected[j];
            if m.exp() > best.max_ratio {
                best.max_ratio = m.exp();
                best.worst_angle = a;
                best.worst_x = x;
            }
            best.cross_sup = best.cross_sup.max(c);
        }
        protected.push(best);
    }
    Ok(StageReport {
        target: stage.target,
        coupling: stage.coupling,
        x0: stage.x0,
        x1: stage.x1,
        b: stage.b,
        decay_exponent,
        slope,
        slope_bound: -decay_exponent * (1.0 - opts.slope_slack),
        target_max_rise: first.target_max_rise,
        target_ln_r_end: first.target_end,
        sup_v_xb: first.sup_v_xb,
        cos4_sup: first.cos4_sup,
        protected,
    })
}

/// [`evaluate_stage`], failing on the first violated inequality.
pub fn check_stage_contract(
    stage: &Stage,
    fd_target: &FloquetData,
    fd_protected: &[&FloquetData],
    decay_exponent: f64,
    opts: &StageOptions,
) -> Result<StageReport> {
    let report = evaluate_stage(stage, fd_target, fd_protected, decay_exponent, opts)?;
    match report.violation(opts.monotone_tol) {
        Some(e) => Err(e),
        None => Ok(report),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscillationReport {
    /// `(X, sup_{x0 ≤ y ≤ X} |∫_{x0}^y cos 4θ_E / (1+s-b) ds|)` at the checkpoints.
    pub cos4: Vec<(f64, f64)>,
    /// Same for the cross integral with the second energy.
    pub cross: Option<Vec<(f64, f64)>>,
}

impl OscillationReport {
    pub fn cos4_until(&self, x: f64) -> Option<f64> {
        self.cos4.iter().find(|(c, _)| *c >= x).map(|p| p.1)
    }

    pub fn cross_until(&self, x: f64) -> Option<f64> {
        self.cross.as_ref()?.iter().find(|(c, _)| *c >= x).map(|p| p.1)
    }
}

/// Sup of the partial oscillatory integrals along a stage, reported at
/// increasing `checkpoints` (each inside `(x0, x1]`).
pub fn oscillation_diagnostic(
    stage: &Stage,
    fd_target: &FloquetData,
    fd_other: Option<&FloquetData>,
    checkpoints: &[f64],
    cfg: EngineConfig,
) -> Result<OscillationReport> {
    if let Some(other) = fd_other {
        if other.energy == fd_target.energy {
            return Err(Error::Precondition("second energy equals the target".into()));
        }
        check_pair(fd_target.k, other.k)?;
    }
    if checkpoints.windows(2).any(|w| !(w[0] < w[1]))
        || checkpoints.iter().any(|&c| !(c > stage.x0 && c <= stage.x1))
    {
        return Err(Error::InvalidInput("checkpoints must increase inside (x0, x1]".into()));
    }
    let mut fds = vec![fd_target];
    let mut init = vec![(start_angle(stage.theta0, stage.x0, fd_target)?, 0.0)];
    if let Some(other) = fd_other {
        fds.push(other);
        init.push((start_angle(stage.theta0, stage.x0, other)?, 0.0));
    }
    let cfg = EngineConfig {
        oscillation: true,
        ..cfg
    };
    let mut engine = Engine::new(fds, &init, stage.x0, cfg);
    let mut sup_c = 0.0f64;
    let mut sup_x = 0.0f64;
    let mut cos4 = Vec::new();
    let mut cross = Vec::new();
    let two = fd_other.is_some();
    engine.run(&stage.segment(Some(0)), checkpoints, |s| {
        sup_c = sup_c.max(s.osc_cos().abs());
        if two {
            sup_x = sup_x.max(s.osc_cross(1).abs());
        }
        if s.is_stop {
            cos4.push((s.x, sup_c));
            cross.push((s.x, sup_x));
        }
    })?;
    Ok(OscillationReport {
        cos4,
        cross: two.then_some(cross),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMinCalibration {
    /// `(x0 - b, worst protected ratio)` per candidate.
    pub trials: Vec<(f64, f64)>,
    pub k_min: Option<f64>,
}

/// Smallest candidate `x0 - b` whose stage keeps every protected ratio
/// within 1.5; stages span `[s, s (1 + length_factor)]` with `b = 0`.
pub fn calibrate_k_min(
    fd_target: &FloquetData,
    fd_protected: &[&FloquetData],
    decay_exponent: f64,
    candidates: &[f64],
    length_factor: f64,
    opts: &StageOptions,
) -> Result<KMinCalibration> {
    let mut trials = Vec::new();
    let mut k_min = None;
    let coupling = coupling_for(decay_exponent, fd_target);
    for &s in candidates {
        let stage = Stage::new(
            fd_target.energy,
            fd_protected.iter().map(|f| f.energy).collect(),
            s,
            s * (1.0 + length_factor),
            0.0,
            0.0,
            coupling,
        );
        let o = StageOptions { k_min: 0.0, ..*opts };
        let r = evaluate_stage(&stage, fd_target, fd_protected, decay_exponent, &o)?;
        let worst = r.max_protected_ratio();
        trials.push((s, worst));
        if worst <= 1.5 && k_min.is_none() {
            k_min = Some(s);
        }
    }
    Ok(KMinCalibration { trials, k_min })
}
