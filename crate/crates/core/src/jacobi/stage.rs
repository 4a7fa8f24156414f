//! Discrete stages `b'_{n+1} = C sin 2θ(n) / (n - v)` on `(n0, n1)` and the
//! oscillatory-sum diagnostics behind their protected-energy estimates.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::construction::{fit_slope, probe_angles};
use crate::error::{Error, Result};
use crate::resonance::{check_pair, is_half_band};

use super::floquet::JacobiFloquet;
use super::prufer::{prufer_step, JacobiState};

/// Identity residual tolerated at any step.
pub const STEP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JacobiStage {
    pub target: f64,
    pub protected: Vec<f64>,
    pub n0: i64,
    pub n1: i64,
    pub v: i64,
    /// `θ(n0)` of the target.
    pub theta0: f64,
    pub coupling: f64,
    /// Growth allowance for protected energies.
    pub eps: f64,
}

impl JacobiStage {
    pub fn validate(&self, k_min: f64, jf_t: &JacobiFloquet, jf_p: &[&JacobiFloquet]) -> Result<()> {
        if !(self.v < self.n0 && self.n0 < self.n1) {
            return Err(Error::StageNotAdmissible(format!(
                "need v < n0 < n1, got v = {}, n0 = {}, n1 = {}",
                self.v, self.n0, self.n1
            )));
        }
        if ((self.n0 - self.v) as f64) < k_min {
            return Err(Error::StageNotAdmissible(format!(
                "n0 - v = {} is below K_min = {k_min}",
                self.n0 - self.v
            )));
        }
        if !(self.coupling >= 0.0) || !(self.eps > 0.0) {
            return Err(Error::StageNotAdmissible("coupling must be ≥ 0 and ε > 0".into()));
        }
        if !(0.0..=PI).contains(&self.theta0) {
            return Err(Error::StageNotAdmissible(format!("θ0 = {} outside [0, π]", self.theta0)));
        }
        if jf_t.energy != self.target || jf_p.len() != self.protected.len() {
            return Err(Error::InvalidInput("Floquet data does not match the stage energies".into()));
        }
        if is_half_band(jf_t.k) {
            return Err(Error::StageNotAdmissible(format!("target quasimomentum {} is π/2", jf_t.k)));
        }
        for jf in jf_p {
            check_pair(jf_t.k, jf.k)?;
        }
        Ok(())
    }

    /// `b'_{n+1}` given the target angle at `n`.
    #[inline]
    pub fn b_prime_next(&self, n: i64, theta_target: Complex) -> f64 {
        if n < self.n0 || n + 1 >= self.n1 {
            return 0.0;
        }
        // sin 2θ = 2 Im(e^{iθ}) Re(e^{iθ})
        self.coupling / (n - self.v) as f64 * 2.0 * theta_target.re * theta_target.im
    }

    /// `ln((n1 - v)/(n0 - v))`
    pub fn log_span(&self) -> f64 {
        ((self.n1 - self.v) as f64 / (self.n0 - self.v) as f64).ln()
    }
}

type Complex = num_complex::Complex64;

/// `C = 2 D ω / min |φ|²`, so that the averaged decay rate is at least `D`.
pub fn coupling_for_jacobi(decay_exponent: f64, jf: &JacobiFloquet) -> f64 {
    2.0 * decay_exponent * jf.omega / jf.abs_sq_range().0
}

/// Full record of one stage run: the `b'` sequence and every track.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JacobiStageRun {
    pub n0: i64,
    /// `b_prime[j] = b'_{n0+1+j}`, up to `b'_{n1}`.
    pub b_prime: Vec<f64>,
    /// `ln_r[i][j]`, `theta[i][j]` at `n0 + j`, track 0 the target.
    pub ln_r: Vec<Vec<f64>>,
    pub theta: Vec<Vec<f64>>,
    /// `max_n |b'_{n+1}| (n - v)`.
    pub sup_b_nv: f64,
    pub max_step_residual: f64,
}

impl JacobiStageRun {
    /// `max_n ln R_i(n) - ln R_i(n0)`.
    pub fn max_rise(&self, i: usize) -> f64 {
        let base = self.ln_r[i][0];
        self.ln_r[i].iter().fold(0f64, |m, x| m.max(x - base))
    }

    /// Slope of `ln R` of the target against `ln((n - v)/(n0 - v))`.
    pub fn target_slope(&self, v: i64, from_ratio: f64) -> f64 {
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        let d0 = (self.n0 - v) as f64;
        let mut next = d0 * from_ratio;
        for (j, l) in self.ln_r[0].iter().enumerate() {
            let d = (self.n0 + j as i64 - v) as f64;
            if d >= next {
                xs.push((d / d0).ln());
                ys.push(*l);
                next = d * 1.01;
            }
        }
        fit_slope(&xs, &ys)
    }
}

/// Runs the stage with the target at `θ0` and the protected energies at the
/// given angles (all with `R(n0) = 1`), checking both step identities.
pub fn build_jacobi_stage(
    stage: &JacobiStage,
    jf_t: &JacobiFloquet,
    jf_p: &[&JacobiFloquet],
    protected_theta: &[f64],
) -> Result<JacobiStageRun> {
    if protected_theta.len() != jf_p.len() {
        return Err(Error::InvalidInput("one initial angle per protected energy".into()));
    }
    let len = (stage.n1 - stage.n0) as usize;
    let mut states: Vec<JacobiState> = std::iter::once(stage.theta0)
        .chain(protected_theta.iter().copied())
        .map(|t| JacobiState::new(stage.n0, 0.0, t))
        .collect();
    let jfs: Vec<&JacobiFloquet> = std::iter::once(jf_t).chain(jf_p.iter().copied()).collect();
    let mut run = JacobiStageRun {
        n0: stage.n0,
        b_prime: Vec::with_capacity(len),
        ln_r: vec![Vec::with_capacity(len + 1); jfs.len()],
        theta: vec![Vec::with_capacity(len + 1); jfs.len()],
        sup_b_nv: 0.0,
        max_step_residual: 0.0,
    };
    let record = |run: &mut JacobiStageRun, states: &[JacobiState]| {
        for (i, s) in states.iter().enumerate() {
            run.ln_r[i].push(s.ln_r);
            run.theta[i].push(s.theta());
        }
    };
    record(&mut run, &states);
    for n in stage.n0..stage.n1 {
        let bp = stage.b_prime_next(n, states[0].phase);
        run.b_prime.push(bp);
        run.sup_b_nv = run.sup_b_nv.max(bp.abs() * (n - stage.v) as f64);
        for (s, jf) in states.iter_mut().zip(&jfs) {
            let (next, chk) = prufer_step(s, bp, jf);
            let res = (chk.ratio_sq - chk.ratio_sq_closed).abs().max(chk.cot_residual.unwrap_or(0.0));
            run.max_step_residual = run.max_step_residual.max(res);
            *s = next;
        }
        record(&mut run, &states);
    }
    if run.max_step_residual > STEP_TOL {
        return Err(Error::ContractViolated {
            name: "jacobi.step_identity".into(),
            location: stage.n0 as f64,
            lhs: run.max_step_residual,
            rhs: STEP_TOL,
        });
    }
    Ok(run)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JacobiProtected {
    pub energy: f64,
    /// `max ln R(n) - ln R(n0)` over probes.
    pub max_ln_growth: f64,
    /// `ε ln((n1 - v)/(n0 - v))`
    pub allowance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JacobiStageReport {
    pub target: f64,
    pub coupling: f64,
    pub n0: i64,
    pub n1: i64,
    pub v: i64,
    /// Largest (least negative) fitted slope over the probes.
    pub slope: f64,
    pub target_max_rise: f64,
    pub sup_b_nv: f64,
    pub protected: Vec<JacobiProtected>,
    pub max_step_residual: f64,
}

impl JacobiStageReport {
    /// Protected growth within `(1 + slack)` of the `ε` allowance.
    pub fn protected_within(&self, slack: f64) -> bool {
        self.protected.iter().all(|p| p.max_ln_growth <= (1.0 + slack) * p.allowance)
    }
}

/// Stage contract over `probes` equispaced boundary angles, the same angle
/// used for the target and for every protected energy.
pub fn evaluate_jacobi_stage(
    stage: &JacobiStage,
    jf_t: &JacobiFloquet,
    jf_p: &[&JacobiFloquet],
    probes: usize,
    k_min: f64,
) -> Result<JacobiStageReport> {
    stage.validate(k_min, jf_t, jf_p)?;
    let runs: Vec<JacobiStageRun> = probe_angles(probes)
        .into_par_iter()
        .map(|a| {
            let st = JacobiStage {
                theta0: a,
                ..stage.clone()
            };
            build_jacobi_stage(&st, jf_t, jf_p, &vec![a; jf_p.len()])
        })
        .collect::<Result<_>>()?;
    let span = stage.log_span();
    Ok(JacobiStageReport {
        target: stage.target,
        coupling: stage.coupling,
        n0: stage.n0,
        n1: stage.n1,
        v: stage.v,
        slope: runs.iter().map(|r| r.target_slope(stage.v, 2.0)).fold(f64::NEG_INFINITY, f64::max),
        target_max_rise: runs.iter().map(|r| r.max_rise(0)).fold(0.0, f64::max),
        sup_b_nv: runs.iter().map(|r| r.sup_b_nv).fold(0.0, f64::max),
        protected: jf_p
            .iter()
            .enumerate()
            .map(|(i, jf)| JacobiProtected {
                energy: jf.energy,
                max_ln_growth: runs.iter().map(|r| r.max_rise(i + 1)).fold(0.0, f64::max),
                allowance: stage.eps * span,
            })
            .collect(),
        max_step_residual: runs.iter().map(|r| r.max_step_residual).fold(0.0, f64::max),
    })
}

/// Rational `k/π = p/q` (reduced, `q ≤ max_den`) within `tol`, else `None`.
pub fn classify_rational(x: f64, max_den: u64, tol: f64) -> Option<(i64, u64)> {
    let (mut h0, mut h1) = (0i64, 1i64);
    let (mut k0, mut k1) = (1u64, 0u64);
    let mut r = x;
    for _ in 0..64 {
        let a = r.floor();
        let (h, k) = (a as i64 * h1 + h0, a as u64 * k1 + k0);
        if k > max_den {
            return None;
        }
        if (x - h as f64 / k as f64).abs() <= tol {
            return Some((h, k));
        }
        (h0, h1, k0, k1) = (h1, h, k1, k);
        let frac = r - a;
        if frac.abs() < 1e-300 {
            return None;
        }
        r = 1.0 / frac;
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum QuasiBranch {
    Rational { num: i64, den: u64 },
    Irrational,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErgodicReport {
    pub branch: QuasiBranch,
    /// `(n, max_{m ≤ n} |S(m)|)` at geometric checkpoints.
    pub cos4_sup: Vec<(i64, f64)>,
    pub cross_sup: Vec<(i64, f64)>,
    /// Smallest `(D, ε)` with `sup ≤ D + ε ln((n - v)/(n0 - v))` past the
    /// first doubling.
    pub fitted_d: f64,
    pub fitted_eps: f64,
    pub allowed_eps: f64,
}

impl ErgodicReport {
    pub fn consistent(&self) -> bool {
        self.fitted_eps <= self.allowed_eps
    }

    pub fn sup_until(&self, n: i64) -> f64 {
        let pick = |v: &[(i64, f64)]| v.iter().filter(|(m, _)| *m <= n).map(|p| p.1).fold(0.0, f64::max);
        pick(&self.cos4_sup).max(pick(&self.cross_sup))
    }
}

/// Partial sums `Σ f(t) cos 4θ(t)/(t - v)` and, given a second record,
/// `Σ f(t) sin 2θ(t) sin 2θ̂(t)/(t - v)`, for `t = n0, n0+1, ...`.
pub fn ergodic_sum_check(
    jf: &JacobiFloquet,
    f: &[f64],
    theta: &[f64],
    theta_other: Option<&[f64]>,
    n0: i64,
    v: i64,
    eps: f64,
) -> ErgodicReport {
    let branch = match classify_rational(jf.k / PI, 1_000_000, 1e-13) {
        Some((num, den)) => QuasiBranch::Rational { num, den },
        None => QuasiBranch::Irrational,
    };
    let mut report = ErgodicReport {
        branch,
        cos4_sup: Vec::new(),
        cross_sup: Vec::new(),
        fitted_d: 0.0,
        fitted_eps: 0.0,
        allowed_eps: eps,
    };
    if theta.is_empty() || f.is_empty() {
        return report;
    }
    let q = f.len() as i64;
    let (mut s4, mut sx) = (0.0f64, 0.0f64);
    let (mut m4, mut mx) = (0.0f64, 0.0f64);
    let mut next = n0 + 1;
    for (j, th) in theta.iter().enumerate() {
        let t = n0 + j as i64;
        let w = f[t.rem_euclid(q) as usize] / (t - v) as f64;
        s4 += w * (4.0 * th).cos();
        m4 = m4.max(s4.abs());
        if let Some(o) = theta_other {
            sx += w * (2.0 * th).sin() * (2.0 * o[j]).sin();
            mx = mx.max(sx.abs());
        }
        if t >= next || j + 1 == theta.len() {
            report.cos4_sup.push((t, m4));
            if theta_other.is_some() {
                report.cross_sup.push((t, mx));
            }
            next = t + 1 + ((t - v) as f64 * 0.05) as i64;
        }
    }
    let d0 = (n0 - v) as f64;
    let mut d_ref = None;
    let mut eps_fit = 0f64;
    for (idx, (n, _)) in report.cos4_sup.iter().enumerate() {
        let l = ((*n - v) as f64 / d0).ln();
        let sup = report.cos4_sup[idx].1.max(report.cross_sup.get(idx).map_or(0.0, |p| p.1));
        match d_ref {
            None if l >= std::f64::consts::LN_2 => d_ref = Some((sup, l)),
            Some((d, l_ref)) if l > l_ref => eps_fit = eps_fit.max((sup - d) / l),
            _ => {}
        }
    }
    if let Some((d, _)) = d_ref {
        report.fitted_d = d;
        report.fitted_eps = eps_fit.max(0.0);
    }
    report
}

/// Unweighted sums of `cos 4θ` over `count` consecutive blocks of `block`.
pub fn block_cos4_sums(theta: &[f64], block: usize, count: usize) -> Vec<f64> {
    theta
        .chunks_exact(block)
        .take(count)
        .map(|c| c.iter().map(|t| (4.0 * t).cos()).sum())
        .collect()
}
