//! Concatenation of stages into one potential on `[0, J_W]`, integrating every
//! target energy continuously across all epochs.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::floquet::FloquetData;
use crate::prufer::{initial_prufer_angle, BoundaryCondition, PruferTrajectory};

use super::engine::{Engine, EngineConfig, Segment};
use super::schedule::{Check, GrowthMode, Schedule};
use super::stage::{coupling_for, Stage};
use super::{fit_slope, geometric_grid};

/// Tolerance on the pointwise monotonicity of the target inside its stage.
pub const MONOTONE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub epoch: usize,
    pub slot: usize,
    pub target: usize,
    pub x0: f64,
    pub x1: f64,
    pub b: f64,
    pub coupling: f64,
    /// Exponent guaranteed by the coupling, `min(D, c/(4G))`.
    pub decay_target: f64,
    pub ln_r_start: Vec<f64>,
    pub ln_r_end: Vec<f64>,
    /// `max_x ln R_i(x) - ln R_i(x0)` over the stage.
    pub max_rise: Vec<f64>,
    /// Slope of `ln R_target` against `ln(1 + x - b)`.
    pub target_slope: f64,
    pub sup_v_xb: f64,
}

impl StageRecord {
    /// Largest `R_i(x)/R_i(x0)` among the non-target tracks.
    pub fn protected_ratio(&self) -> f64 {
        self.max_rise
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != self.target)
            .map(|(_, r)| r.exp())
            .fold(1.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochCheck {
    pub epoch: usize,
    pub eigen: usize,
    pub energy: f64,
    /// `ln R(J_w) - ln R(J_{w-1})`
    pub lhs: f64,
    /// `N(w) ln 2 + p ln N(w-1) - p' ln C_w`
    pub rhs: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochEnvelope {
    pub epoch: usize,
    /// `sup |V(x)| (1 + x)` over the epoch.
    pub sup_v_x: f64,
    /// The same divided by `N(w) C_w²`.
    pub measured_m: f64,
    pub bound_m: f64,
    /// `sup |V(x)| (1 + x) / h(x)` in infinite mode.
    pub sup_v_over_h: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assembly {
    pub schedule: Schedule,
    /// Recorded points, geometric in `x`.
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    /// `ln_r[i][k]` and `theta[i][k]` at `x[k]`.
    pub ln_r: Vec<Vec<f64>>,
    pub theta: Vec<Vec<f64>>,
    pub stages: Vec<StageRecord>,
    pub epoch_checks: Vec<EpochCheck>,
    pub envelopes: Vec<EpochEnvelope>,
    /// `ln R_i(J_w)` for `w = 0..=W`.
    pub ln_r_joints: Vec<Vec<f64>>,
    /// `∫ R_i²` over `[0, J_0]` then over each epoch.
    pub l2_epochs: Vec<Vec<f64>>,
    pub steps: usize,
}

impl Assembly {
    pub fn stage_checks(&self) -> Vec<Check> {
        let mut out = Vec::new();
        for s in &self.stages {
            let at = format!("epoch {} slot {}", s.epoch, s.slot);
            out.push(Check::le(format!("stage.protected_stability {at}"), s.protected_ratio(), 2.0));
            out.push(Check::le(format!("stage.monotone {at}"), s.max_rise[s.target], MONOTONE_TOL));
            out.push(Check::le(
                format!("stage.decay_slope {at}"),
                s.target_slope,
                -s.decay_target * (1.0 - self.schedule.policy.slope_slack),
            ));
        }
        out
    }

    pub fn envelope_checks(&self) -> Vec<Check> {
        let mut out = Vec::new();
        for e in &self.envelopes {
            out.push(Check::le(format!("envelope.m epoch {}", e.epoch), e.measured_m, e.bound_m));
            if let Some(r) = e.sup_v_over_h {
                out.push(Check::le(format!("envelope.h epoch {}", e.epoch), r, 1.0));
            }
        }
        out
    }

    /// First violated contract, if any.
    pub fn ensure_contracts(&self) -> Result<()> {
        if let Some(c) = self.epoch_checks.iter().find(|c| !c.holds) {
            return Err(Error::EpochContractFailed {
                epoch: c.epoch,
                energy: c.energy,
                lhs: c.lhs,
                rhs: c.rhs,
            });
        }
        for c in self.stage_checks().into_iter().chain(self.envelope_checks()) {
            if !c.holds {
                return Err(Error::ContractViolated {
                    name: c.name,
                    location: 0.0,
                    lhs: c.lhs,
                    rhs: c.rhs,
                });
            }
        }
        Ok(())
    }

    pub fn passes(&self) -> bool {
        self.ensure_contracts().is_ok()
    }

    pub fn trajectory(&self, i: usize) -> PruferTrajectory {
        PruferTrajectory {
            energy: self.schedule.eigenvalues[i],
            grid: self.x.clone(),
            ln_r: self.ln_r[i].clone(),
            theta: self.theta[i].clone(),
        }
    }

    /// `|V(x)| (1 + x)` at the recorded points.
    pub fn weighted_potential(&self) -> Vec<(f64, f64)> {
        self.x.iter().zip(&self.v).map(|(x, v)| (*x, v.abs() * (1.0 + x))).collect()
    }
}

struct Sups {
    v_x: f64,
    v_over_h: f64,
}

/// Builds the potential of `schedule` and integrates all of its energies.
pub fn assemble(schedule: &Schedule, fds: &[FloquetData]) -> Result<Assembly> {
    let n = schedule.eigenvalues.len();
    if fds.len() != n {
        return Err(Error::InvalidInput(format!("{n} eigenvalues but {} Floquet solutions", fds.len())));
    }
    for (fd, &e) in fds.iter().zip(&schedule.eigenvalues) {
        if fd.energy != e {
            return Err(Error::InvalidInput(format!("Floquet data at {} given for eigenvalue {e}", fd.energy)));
        }
    }
    let policy = &schedule.policy;
    let init: Vec<(f64, f64)> = fds
        .iter()
        .zip(&schedule.angles)
        .map(|(fd, &a)| Ok((initial_prufer_angle(&BoundaryCondition::new(a, 0.0)?, fd).psi0, 0.0)))
        .collect::<Result<_>>()?;
    let cfg = EngineConfig {
        rtol: policy.rtol,
        atol: policy.rtol * 1e-2,
        l2: true,
        oscillation: false,
    };
    let mut engine = Engine::new(fds.iter().collect(), &init, 0.0, cfg);
    let total = schedule.total_length() as f64;
    let grid = geometric_grid(0.0, total, policy.record_rel, 1.0);

    let mut out = Assembly {
        schedule: schedule.clone(),
        x: vec![0.0],
        v: vec![0.0],
        ln_r: (0..n).map(|_| vec![0.0]).collect(),
        theta: init.iter().map(|(t, _)| vec![*t]).collect(),
        stages: Vec::new(),
        epoch_checks: Vec::new(),
        envelopes: Vec::new(),
        ln_r_joints: vec![Vec::new(); n],
        l2_epochs: vec![Vec::new(); n],
        steps: 0,
    };
    let mut q_prev = vec![0.0; n];

    let run = |engine: &mut Engine<'_>,
                   seg: &Segment,
                   out: &mut Assembly,
                   sups: &mut Sups,
                   rise: &mut [f64],
                   base: &[f64]|
     -> Result<()> {
        let lo = grid.partition_point(|&g| g <= engine.x());
        let hi = grid.partition_point(|&g| g <= seg.x1);
        let h = schedule.envelope;
        engine.run(seg, &grid[lo..hi], |s| {
            out.steps += 1;
            let vx = s.v.abs() * (1.0 + s.x);
            sups.v_x = sups.v_x.max(vx);
            if let Some(h) = h {
                sups.v_over_h = sups.v_over_h.max(vx / h.eval(s.x));
            }
            for i in 0..s.tracks() {
                rise[i] = rise[i].max(s.ln_r(i) - base[i]);
            }
            if s.is_stop && s.x > *out.x.last().unwrap() {
                out.x.push(s.x);
                out.v.push(s.v);
                for i in 0..s.tracks() {
                    out.ln_r[i].push(s.ln_r(i));
                    out.theta[i].push(s.theta(i));
                }
            }
        })
    };

    let mut sups = Sups { v_x: 0.0, v_over_h: 0.0 };
    let mut rise = vec![0.0; n];
    run(&mut engine, &Segment::free(0.0, schedule.j0 as f64), &mut out, &mut sups, &mut rise, &vec![0.0; n])?;
    for i in 0..n {
        out.ln_r_joints[i].push(engine.ln_r(i));
        out.l2_epochs[i].push(engine.l2(i));
        q_prev[i] = engine.l2(i);
    }

    for epoch in &schedule.epochs {
        let mut sups = Sups { v_x: 0.0, v_over_h: 0.0 };
        for t in 0..epoch.n {
            let (b, x0, x1) = epoch.slot(t);
            let fd_t = &fds[t];
            let mut coupling = coupling_for(policy.decay_exponent, fd_t);
            if let Some(cap) = epoch.coupling_cap {
                coupling = coupling.min(cap);
            }
            let others: Vec<usize> = (0..n).filter(|&i| i != t).collect();
            let stage = Stage::new(
                schedule.eigenvalues[t],
                others.iter().map(|&i| schedule.eigenvalues[i]).collect(),
                x0 as f64,
                x1 as f64,
                b as f64,
                schedule.angles[t],
                coupling,
            );
            let fd_others: Vec<&FloquetData> = others.iter().map(|&i| &fds[i]).collect();
            stage.validate(policy.k_min, fd_t, &fd_others)?;

            let base: Vec<f64> = (0..n).map(|i| engine.ln_r(i)).collect();
            let mut rise = vec![0.0; n];
            let mut stage_sups = Sups { v_x: 0.0, v_over_h: 0.0 };
            let first = out.x.len();
            let seg = stage.segment(Some(t));
            run(&mut engine, &seg, &mut out, &mut stage_sups, &mut rise, &base)?;
            sups.v_x = sups.v_x.max(stage_sups.v_x);
            sups.v_over_h = sups.v_over_h.max(stage_sups.v_over_h);

            let (mut xs, mut ys) = (Vec::new(), Vec::new());
            let mut sup_v_xb = 0f64;
            for k in first..out.x.len() {
                let x = out.x[k];
                sup_v_xb = sup_v_xb.max(out.v[k].abs() * (1.0 + x - stage.b));
                if x >= stage.x0 + stage.mollify_width {
                    xs.push((1.0 + x - stage.b).ln());
                    ys.push(out.ln_r[t][k]);
                }
            }
            out.stages.push(StageRecord {
                epoch: epoch.w,
                slot: t,
                target: t,
                x0: stage.x0,
                x1: stage.x1,
                b: stage.b,
                coupling,
                decay_target: policy.decay_exponent.min(coupling / (4.0 * fd_t.g_bound)),
                ln_r_start: base,
                ln_r_end: (0..n).map(|i| engine.ln_r(i)).collect(),
                max_rise: rise,
                target_slope: fit_slope(&xs, &ys),
                sup_v_xb,
            });
        }
        let n_prev = schedule.n_of(epoch.w - 1) as f64;
        let rhs = epoch.n as f64 * LN_2 + policy.p * n_prev.ln() - policy.p_prime * (epoch.c as f64).ln();
        for i in 0..n {
            let end = engine.ln_r(i);
            let lhs = end - out.ln_r_joints[i].last().unwrap();
            if i < epoch.n {
                out.epoch_checks.push(EpochCheck {
                    epoch: epoch.w,
                    eigen: i,
                    energy: schedule.eigenvalues[i],
                    lhs,
                    rhs,
                    holds: lhs <= rhs,
                });
            }
            out.ln_r_joints[i].push(end);
            let q = engine.l2(i);
            out.l2_epochs[i].push(q - q_prev[i]);
            q_prev[i] = q;
        }
        out.envelopes.push(EpochEnvelope {
            epoch: epoch.w,
            sup_v_x: sups.v_x,
            measured_m: sups.v_x / (epoch.n as f64 * (epoch.c * epoch.c) as f64),
            bound_m: policy.envelope_m,
            sup_v_over_h: (schedule.mode == GrowthMode::Infinite).then_some(sups.v_over_h),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct L2Tail {
    pub energy: f64,
    pub activation_epoch: usize,
    /// `∫ R²` over `[0, J_0]`, then per epoch.
    pub contributions: Vec<f64>,
    /// `L_{w+1}/L_w` for `w` from the activation epoch on.
    pub ratios: Vec<f64>,
    pub max_ratio: f64,
    pub passes: bool,
}

/// Geometric decay of the per-epoch `L²` contributions of each target.
pub fn verify_l2(assembly: &Assembly, ratio_bound: f64) -> Vec<L2Tail> {
    l2_tails(&assembly.schedule, &assembly.l2_epochs, ratio_bound)
}

/// Ratios `L_{w+1}/L_w` of per-epoch contributions from each target's
/// activation epoch on.
pub fn l2_tails(s: &Schedule, l2_epochs: &[Vec<f64>], ratio_bound: f64) -> Vec<L2Tail> {
    (0..s.eigenvalues.len())
        .map(|i| {
            let contributions = l2_epochs[i].clone();
            let act = s.activation_epoch(i).unwrap_or(s.epochs.len() + 1);
            let ratios: Vec<f64> = (act..s.epochs.len())
                .map(|w| contributions[w + 1] / contributions[w])
                .collect();
            let max_ratio = ratios.iter().copied().fold(0.0, f64::max);
            L2Tail {
                energy: s.eigenvalues[i],
                activation_epoch: act,
                passes: !ratios.is_empty() && max_ratio <= ratio_bound,
                contributions,
                ratios,
                max_ratio,
            }
        })
        .collect()
}
