//! Discrete assembly over a schedule, and the no-embedding lower bound.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::construction::assembly::{EpochCheck, EpochEnvelope, MONOTONE_TOL};
use crate::construction::schedule::{Check, GrowthMode, Schedule};
use crate::construction::{fit_slope, geometric_grid, probe_angles};
use crate::error::{Error, Result};

use super::floquet::JacobiFloquet;
use super::prufer::{advance, z_from_solution, JacobiState};
use super::stage::{coupling_for_jacobi, JacobiStage};
use super::PeriodicJacobi;

/// Relative slack on the `ε` growth allowance.
pub const GROWTH_SLACK: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JacobiStageRecord {
    pub epoch: usize,
    pub slot: usize,
    pub target: usize,
    pub n0: i64,
    pub n1: i64,
    pub v: i64,
    pub coupling: f64,
    pub decay_target: f64,
    pub eps: f64,
    pub ln_r_start: Vec<f64>,
    pub max_rise: Vec<f64>,
    pub target_slope: f64,
    /// `max |b'_{n+1}| (n - v)`.
    pub sup_b_nv: f64,
}

impl JacobiStageRecord {
    pub fn allowance(&self) -> f64 {
        self.eps * ((self.n1 - self.v) as f64 / (self.n0 - self.v) as f64).ln()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JacobiAssembly {
    pub schedule: Schedule,
    /// `b_prime[n - 1] = b'_n` for `n = 1..=J_W`.
    pub b_prime: Vec<f64>,
    /// Recorded sites, geometric in `n`.
    pub n: Vec<i64>,
    pub ln_r: Vec<Vec<f64>>,
    pub eta: Vec<Vec<f64>>,
    pub stages: Vec<JacobiStageRecord>,
    pub epoch_checks: Vec<EpochCheck>,
    /// `sup |b'_n| (1 + n)` per epoch, in the continuous report's shape.
    pub envelopes: Vec<EpochEnvelope>,
    pub ln_r_joints: Vec<Vec<f64>>,
    /// `Σ R_i(n)²` over `[1, J_0]`, then per epoch.
    pub l2_epochs: Vec<Vec<f64>>,
}

impl JacobiAssembly {
    pub fn stage_checks(&self) -> Vec<Check> {
        let slack = self.schedule.policy.slope_slack;
        let mut out = Vec::new();
        for s in &self.stages {
            let at = format!("epoch {} slot {}", s.epoch, s.slot);
            let grow = s
                .max_rise
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != s.target)
                .map(|(_, r)| *r)
                .fold(0.0, f64::max);
            out.push(Check::le(
                format!("stage.protected_growth {at}"),
                grow,
                (1.0 + GROWTH_SLACK) * s.allowance(),
            ));
            out.push(Check::le(format!("stage.monotone {at}"), s.max_rise[s.target], MONOTONE_TOL));
            out.push(Check::le(format!("stage.decay_slope {at}"), s.target_slope, -s.decay_target * (1.0 - slack)));
            out.push(Check::le(format!("stage.perturbation {at}"), s.sup_b_nv, s.coupling * (1.0 + 1e-12)));
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
}

/// Builds `b'` for `schedule` with `a' ≡ 0` and boundary conditions
/// `u(1)/u(0) = tan θ_j`.
pub fn assemble_jacobi(schedule: &Schedule, jfs: &[JacobiFloquet]) -> Result<JacobiAssembly> {
    let n_tr = schedule.eigenvalues.len();
    if jfs.len() != n_tr {
        return Err(Error::InvalidInput(format!("{n_tr} eigenvalues but {} Floquet solutions", jfs.len())));
    }
    for (jf, &e) in jfs.iter().zip(&schedule.eigenvalues) {
        if jf.energy != e {
            return Err(Error::InvalidInput(format!("Floquet data at {} given for eigenvalue {e}", jf.energy)));
        }
    }
    let policy = &schedule.policy;
    let total = schedule.total_length() as i64;
    let mut states: Vec<JacobiState> = jfs
        .iter()
        .zip(&schedule.angles)
        .map(|(jf, &a)| z_from_solution(a.cos(), a.sin(), 1, jf))
        .collect::<Result<_>>()?;
    // R(1) = 1 for every track
    states.iter_mut().for_each(|s| s.ln_r = 0.0);
    let mut record_at: Vec<i64> = geometric_grid(1.0, total as f64, policy.record_rel, 1.0)
        .into_iter()
        .map(|x| x.round() as i64)
        .collect();
    record_at.dedup();
    let mut out = JacobiAssembly {
        schedule: schedule.clone(),
        b_prime: Vec::with_capacity(total as usize),
        n: Vec::new(),
        ln_r: vec![Vec::new(); n_tr],
        eta: vec![Vec::new(); n_tr],
        stages: Vec::new(),
        epoch_checks: Vec::new(),
        envelopes: Vec::new(),
        ln_r_joints: vec![Vec::new(); n_tr],
        l2_epochs: vec![Vec::new(); n_tr],
    };
    let mut next_rec = 0usize;
    let mut l2 = vec![0.0; n_tr];
    let h = schedule.envelope;

    // advances every track from n to n + 1 with b'_{n+1} = bp
    let mut step = |n: i64, bp: f64, states: &mut [JacobiState], out: &mut JacobiAssembly, l2: &mut [f64]| {
        if next_rec < record_at.len() && record_at[next_rec] == n {
            out.n.push(n);
            for (i, s) in states.iter().enumerate() {
                out.ln_r[i].push(s.ln_r);
                out.eta[i].push(s.eta(&jfs[i]));
            }
            next_rec += 1;
        }
        out.b_prime.push(bp);
        for (i, s) in states.iter_mut().enumerate() {
            advance(s, bp, &jfs[i]);
            l2[i] += (2.0 * s.ln_r).exp();
        }
    };

    // R(1)² counts toward the prefix
    for (i, s) in states.iter().enumerate() {
        l2[i] = (2.0 * s.ln_r).exp();
    }
    // b'_1 is outside the operator's reach from n = 1; it stays 0
    out.b_prime.push(0.0);
    for n in 1..schedule.j0 as i64 {
        step(n, 0.0, &mut states, &mut out, &mut l2);
    }
    for i in 0..n_tr {
        out.ln_r_joints[i].push(states[i].ln_r);
        out.l2_epochs[i].push(l2[i]);
        l2[i] = 0.0;
    }

    for epoch in &schedule.epochs {
        let (mut sup_bx, mut sup_bh) = (0f64, 0f64);
        for t in 0..epoch.n {
            let (b, x0, x1) = epoch.slot(t);
            let jf_t = &jfs[t];
            let mut coupling = coupling_for_jacobi(policy.decay_exponent, jf_t);
            if let Some(cap) = epoch.coupling_cap {
                coupling = coupling.min(cap);
            }
            let others: Vec<usize> = (0..n_tr).filter(|&i| i != t).collect();
            let stage = JacobiStage {
                target: jf_t.energy,
                protected: others.iter().map(|&i| jfs[i].energy).collect(),
                n0: x0 as i64,
                n1: x1 as i64,
                v: b as i64,
                theta0: schedule.angles[t],
                coupling,
                eps: epoch.eps,
            };
            let jf_o: Vec<&JacobiFloquet> = others.iter().map(|&i| &jfs[i]).collect();
            stage.validate(policy.k_min, jf_t, &jf_o)?;
            let base: Vec<f64> = states.iter().map(|s| s.ln_r).collect();
            let mut rise = vec![0f64; n_tr];
            let (mut xs, mut ys) = (Vec::new(), Vec::new());
            let d0 = (stage.n0 - stage.v) as f64;
            let mut next_fit = d0;
            let mut sup_b_nv = 0f64;
            for n in stage.n0..stage.n1 {
                let bp = stage.b_prime_next(n, states[t].phase);
                sup_b_nv = sup_b_nv.max(bp.abs() * (n - stage.v) as f64);
                let m = n + 1;
                let bx = bp.abs() * (1.0 + m as f64);
                sup_bx = sup_bx.max(bx);
                if let Some(h) = h {
                    sup_bh = sup_bh.max(bx / h.eval(m as f64));
                }
                step(n, bp, &mut states, &mut out, &mut l2);
                for i in 0..n_tr {
                    rise[i] = rise[i].max(states[i].ln_r - base[i]);
                }
                let d = (m - stage.v) as f64;
                if d >= next_fit {
                    xs.push((d / d0).ln());
                    ys.push(states[t].ln_r);
                    next_fit = d * 1.002;
                }
            }
            out.stages.push(JacobiStageRecord {
                epoch: epoch.w,
                slot: t,
                target: t,
                n0: stage.n0,
                n1: stage.n1,
                v: stage.v,
                coupling,
                decay_target: policy
                    .decay_exponent
                    .min(coupling * jf_t.abs_sq_range().0 / (2.0 * jf_t.omega)),
                eps: epoch.eps,
                ln_r_start: base,
                max_rise: rise,
                target_slope: fit_slope(&xs, &ys),
                sup_b_nv,
            });
        }
        let n_prev = schedule.n_of(epoch.w - 1) as f64;
        let rhs = epoch.n as f64 * LN_2 + policy.p * n_prev.ln() - policy.p_prime * (epoch.c as f64).ln();
        for i in 0..n_tr {
            let end = states[i].ln_r;
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
            out.l2_epochs[i].push(l2[i]);
            l2[i] = 0.0;
        }
        out.envelopes.push(EpochEnvelope {
            epoch: epoch.w,
            sup_v_x: sup_bx,
            measured_m: sup_bx / (epoch.n as f64 * (epoch.c * epoch.c) as f64),
            bound_m: policy.envelope_m,
            sup_v_over_h: (schedule.mode == GrowthMode::Infinite).then_some(sup_bh),
        });
    }
    // final site
    out.n.push(total);
    for (i, s) in states.iter().enumerate() {
        out.ln_r[i].push(s.ln_r);
        out.eta[i].push(s.eta(&jfs[i]));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoEmbedReport {
    pub energy: f64,
    pub n0: i64,
    pub horizon: i64,
    /// `sup_{n ≥ n0} |b'_n| n` over the horizon.
    pub envelope: f64,
    /// `ω / (3 max |φ|²)`
    pub envelope_limit: f64,
    /// `min [ln R(n) - ln R(n0) + ln(n/n0)/3]` over probes and `n`.
    pub worst_margin: f64,
    pub worst_angle: f64,
    pub worst_n: i64,
    pub slack: f64,
    pub passes: bool,
}

/// Checks `ln R(n) ≥ ln R(n0) - ln(n/n0)/3 - slack` for `n0 ≤ n ≤ horizon`
/// over `probes` boundary angles at `n = 1`.
pub fn no_embed_jacobi<B>(
    j0: &PeriodicJacobi,
    jf: &JacobiFloquet,
    b_prime: B,
    n0: i64,
    horizon: i64,
    probes: usize,
    slack: f64,
) -> Result<NoEmbedReport>
where
    B: Fn(i64) -> f64 + Sync,
{
    if !(1 <= n0 && n0 < horizon) {
        return Err(Error::InvalidInput(format!("need 1 ≤ n0 < horizon, got {n0}, {horizon}")));
    }
    if j0.period() != jf.q {
        return Err(Error::InvalidInput("Floquet data belongs to another operator".into()));
    }
    let envelope = (n0..=horizon).map(|n| b_prime(n).abs() * n as f64).fold(0.0, f64::max);
    let envelope_limit = jf.omega / (3.0 * jf.abs_sq_range().1);
    if envelope > envelope_limit {
        return Err(Error::Precondition(format!(
            "sup |b'_n| n = {envelope} exceeds ω/(3 max|φ|²) = {envelope_limit}"
        )));
    }
    use rayon::prelude::*;
    let worst = probe_angles(probes)
        .into_par_iter()
        .map(|a| -> Result<(f64, f64, i64)> {
            let mut s = z_from_solution(a.cos(), a.sin(), 1, jf)?;
            while s.n < n0 {
                let n = s.n;
                advance(&mut s, b_prime(n + 1), jf);
            }
            let base = s.ln_r;
            let mut worst = (0f64, a, n0);
            while s.n < horizon {
                let n = s.n;
                advance(&mut s, b_prime(n + 1), jf);
                let margin = s.ln_r - base + ((s.n as f64) / n0 as f64).ln() / 3.0;
                if margin < worst.0 {
                    worst = (margin, a, s.n);
                }
            }
            Ok(worst)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold((f64::INFINITY, 0.0, n0), |w, x| if x.0 < w.0 { x } else { w });
    Ok(NoEmbedReport {
        energy: jf.energy,
        n0,
        horizon,
        envelope,
        envelope_limit,
        worst_margin: worst.0,
        worst_angle: worst.1,
        worst_n: worst.2,
        slack,
        passes: worst.0 >= -slack,
    })
}
