//! The no-embedding bound and the finite/infinite embedding pipelines.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::construction::{
    assemble, build_schedule, l2_tails, probe_angles, Assembly, Envelope, GrowthMode, L2Tail, Schedule, ScalingPolicy,
};
use crate::error::{Error, Result};
use crate::floquet::{floquet_solution, FloquetData, FloquetOptions};
use crate::jacobi::{assemble_jacobi, jacobi_floquet, no_embed_jacobi, JacobiAssembly, JacobiFloquet};
use crate::prufer::{initial_prufer_angle, integrate_prufer_on, phase_grid, BoundaryCondition, PruferOptions};
use crate::resonance::ANGLE_TOL;

use super::{guard_operator, pair_gaps, ExperimentReport, Inequality, Operator, QuasiTable};

/// `amplitude sin(frequency x + phase) / (1 + x)`, or the same in `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Perturbation {
    pub amplitude: f64,
    pub frequency: f64,
    #[serde(default)]
    pub phase: f64,
}

impl Perturbation {
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        self.amplitude * (self.frequency * x + self.phase).sin() / (1.0 + x)
    }
}

fn default_probes() -> usize {
    8
}

fn default_slack() -> f64 {
    0.5
}

/// Serializable experiment description; `run` dispatches to the drivers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "snake_case", deny_unknown_fields)]
pub enum Experiment {
    NoEmbedding {
        operator: Operator,
        perturbation: Perturbation,
        energy: f64,
        /// `x0` (continuous) or `n0` (Jacobi).
        start: f64,
        horizon: f64,
        #[serde(default = "default_probes")]
        probes: usize,
        #[serde(default = "default_slack")]
        slack: f64,
    },
    EmbeddingFinite {
        operator: Operator,
        eigenvalues: Vec<f64>,
        angles: Vec<f64>,
        #[serde(default)]
        policy: ScalingPolicy,
    },
    EmbeddingInfinite {
        operator: Operator,
        eigenvalues: Vec<f64>,
        angles: Vec<f64>,
        envelope: Envelope,
        #[serde(default = "ScalingPolicy::infinite_default")]
        policy: ScalingPolicy,
    },
}

impl Experiment {
    pub fn run(&self) -> Result<ExperimentReport> {
        match self {
            Self::NoEmbedding {
                operator,
                perturbation,
                energy,
                start,
                horizon,
                probes,
                slack,
            } => no_embedding_demo(operator, perturbation, *energy, *start, *horizon, *probes, *slack),
            Self::EmbeddingFinite {
                operator,
                eigenvalues,
                angles,
                policy,
            } => embedding_demo_finite(operator, eigenvalues, angles, policy).map(|r| r.report),
            Self::EmbeddingInfinite {
                operator,
                eigenvalues,
                angles,
                envelope,
                policy,
            } => embedding_demo_infinite(operator, eigenvalues, angles, *envelope, policy).map(|r| r.report),
        }
    }
}

/// Runs independent experiments in parallel; results keep input order.
pub fn run_experiments(exps: &[Experiment]) -> Vec<Result<ExperimentReport>> {
    exps.par_iter().map(Experiment::run).collect()
}

/// Checks `ln R(x) ≥ ln R(x0) - ln(x/x0)/3 - slack` on `[x0, horizon]` for
/// `probes` boundary angles at the origin, after gating the perturbation
/// envelope `sup |V| (1 + x)` against the rate the bound needs.
pub fn no_embedding_demo(
    op: &Operator,
    pert: &Perturbation,
    energy: f64,
    start: f64,
    horizon: f64,
    probes: usize,
    slack: f64,
) -> Result<ExperimentReport> {
    let clock = Instant::now();
    let inputs = json!({
        "operator": op,
        "perturbation": pert,
        "energy": energy,
        "start": start,
        "horizon": horizon,
        "probes": probes,
        "slack": slack,
    });
    let mut report = ExperimentReport::new("no_embedding", inputs);
    if !(start >= 1.0 && start < horizon) || probes == 0 {
        return Err(Error::InvalidInput(format!(
            "need 1 ≤ start < horizon and probes > 0, got {start}, {horizon}, {probes}"
        )));
    }
    match op {
        Operator::Continuous { potential } => {
            let fd = floquet_solution(&potential.build(), energy, FloquetOptions::default())?;
            let r = no_embed_continuous(&fd, pert, start, horizon, probes)?;
            report.inequalities.push(Inequality::le(
                "no_embedding.envelope",
                "sup |V| (1+x) <= 2/(3G)",
                r.envelope,
                r.envelope_limit,
                format!("[{start}, {horizon}]"),
            ));
            for p in &r.probes {
                report.inequalities.push(Inequality::le(
                    "no_embedding.lower_bound",
                    format!("ln R deficit, angle {:.6}", p.angle),
                    -p.worst_margin,
                    slack,
                    format!("x = {}", p.worst_x),
                ));
            }
            report.summary = json!({
                "g_bound": fd.g_bound,
                "worst_margin": r.probes.iter().map(|p| p.worst_margin).fold(f64::INFINITY, f64::min),
                "max_abs_ln_r": r.probes.iter().map(|p| p.max_abs_ln_r).fold(0.0, f64::max),
            });
        }
        Operator::Jacobi { .. } => {
            let j0 = op.jacobi()?.expect("jacobi operator");
            let jf = jacobi_floquet(&j0, energy)?;
            let p = *pert;
            let r = no_embed_jacobi(
                &j0,
                &jf,
                move |n| p.eval(n as f64),
                start as i64,
                horizon as i64,
                probes,
                slack,
            )?;
            report.inequalities.push(Inequality::le(
                "no_embedding.envelope",
                "sup |b'_n| n <= ω/(3 max|φ|²)",
                r.envelope,
                r.envelope_limit,
                format!("[{}, {}]", r.n0, r.horizon),
            ));
            report.inequalities.push(Inequality::le(
                "no_embedding.lower_bound",
                format!("ln R deficit, worst angle {:.6}", r.worst_angle),
                -r.worst_margin,
                slack,
                format!("n = {}", r.worst_n),
            ));
            report.summary = json!({ "omega": jf.omega, "worst_margin": r.worst_margin });
        }
    }
    Ok(report.finish(clock.elapsed().as_secs_f64()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeMargin {
    pub angle: f64,
    /// `min [ln R(x) - ln R(x0) + ln(x/x0)/3]`.
    pub worst_margin: f64,
    pub worst_x: f64,
    pub max_abs_ln_r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoEmbedContinuous {
    pub envelope: f64,
    pub envelope_limit: f64,
    pub probes: Vec<ProbeMargin>,
}

/// Continuous lower bound. Since `|(ln R)'| ≤ G |V| / 2`, an envelope
/// `|V| (1 + x) ≤ 2/(3G)` gives the rate `1/3`.
pub fn no_embed_continuous(
    fd: &FloquetData,
    pert: &Perturbation,
    x0: f64,
    horizon: f64,
    probes: usize,
) -> Result<NoEmbedContinuous> {
    let mut grid = phase_grid(fd, 0.0, x0, 16);
    grid.pop();
    let i0 = grid.len();
    grid.extend(phase_grid(fd, x0, horizon, 16));
    let envelope = grid[i0..]
        .iter()
        .map(|&x| pert.eval(x).abs() * (1.0 + x))
        .fold(0.0, f64::max);
    let envelope_limit = 2.0 / (3.0 * fd.g_bound);
    if envelope > envelope_limit {
        return Err(Error::Precondition(format!(
            "sup |V| (1+x) = {envelope} exceeds 2/(3G) = {envelope_limit}; the perturbation is not small enough"
        )));
    }
    let opts = PruferOptions::default();
    let p = *pert;
    let probes = probe_angles(probes)
        .into_par_iter()
        .map(|a| -> Result<ProbeMargin> {
            let psi0 = initial_prufer_angle(&BoundaryCondition::new(a, 0.0)?, fd).psi0;
            let tr = integrate_prufer_on(fd, move |x| p.eval(x), &grid, psi0, opts)?;
            let base = tr.ln_r[i0];
            let mut out = ProbeMargin {
                angle: a,
                worst_margin: 0.0,
                worst_x: x0,
                max_abs_ln_r: 0.0,
            };
            for k in i0..tr.len() {
                let x = tr.grid[k];
                let m = tr.ln_r[k] - base + (x / x0).ln() / 3.0;
                if m < out.worst_margin {
                    out.worst_margin = m;
                    out.worst_x = x;
                }
                out.max_abs_ln_r = out.max_abs_ln_r.max(tr.ln_r[k].abs());
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(NoEmbedContinuous {
        envelope,
        envelope_limit,
        probes,
    })
}

/// Either assembled output, for the file writers.
#[derive(Debug, Clone)]
pub enum Synthesis {
    Continuous(Box<Assembly>),
    Jacobi(Box<JacobiAssembly>),
}

impl Synthesis {
    pub fn schedule(&self) -> &Schedule {
        match self {
            Self::Continuous(a) => &a.schedule,
            Self::Jacobi(a) => &a.schedule,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EmbeddingRun {
    pub report: ExperimentReport,
    pub table: QuasiTable,
    pub l2: Vec<L2Tail>,
    pub synthesis: Synthesis,
}

/// Guard, schedule, assemble and check a finite target set.
pub fn embedding_demo_finite(
    op: &Operator,
    eigs: &[f64],
    angles: &[f64],
    policy: &ScalingPolicy,
) -> Result<EmbeddingRun> {
    pipeline("embedding_finite", op, eigs, angles, GrowthMode::Finite, policy, None)
}

/// The infinite-mode prefix: `policy.epochs` epochs with `N(w)` growing and
/// the coupling capped under `h`.
pub fn embedding_demo_infinite(
    op: &Operator,
    eigs: &[f64],
    angles: &[f64],
    envelope: Envelope,
    policy: &ScalingPolicy,
) -> Result<EmbeddingRun> {
    pipeline("embedding_infinite", op, eigs, angles, GrowthMode::Infinite, policy, Some(envelope))
}

fn pipeline(
    id: &str,
    op: &Operator,
    eigs: &[f64],
    angles: &[f64],
    mode: GrowthMode,
    policy: &ScalingPolicy,
    envelope: Option<Envelope>,
) -> Result<EmbeddingRun> {
    let clock = Instant::now();
    let inputs = json!({
        "operator": op,
        "eigenvalues": eigs,
        "angles": angles,
        "mode": mode,
        "policy": policy,
        "envelope": envelope,
    });
    let table = guard_operator(op, eigs)?;
    let schedule = build_schedule(eigs, angles, mode, policy, envelope)?;
    let mut report = ExperimentReport::new(id, inputs);
    schedule_records(&schedule, &table, &mut report);

    let (synthesis, l2) = match op {
        Operator::Continuous { potential } => {
            let v0 = potential.build();
            let fds = eigs
                .par_iter()
                .map(|&e| floquet_solution(&v0, e, FloquetOptions::default()))
                .collect::<Result<Vec<_>>>()?;
            let a = assemble(&schedule, &fds)?;
            push_checks(&mut report, &a.epoch_checks, a.stage_checks(), a.envelope_checks());
            let l2 = l2_tails(&schedule, &a.l2_epochs, policy.l2_ratio_bound);
            (Synthesis::Continuous(Box::new(a)), l2)
        }
        Operator::Jacobi { .. } => {
            let j0 = op.jacobi()?.expect("jacobi operator");
            let jfs = eigs
                .iter()
                .map(|&e| jacobi_floquet(&j0, e))
                .collect::<Result<Vec<JacobiFloquet>>>()?;
            let a = assemble_jacobi(&schedule, &jfs)?;
            push_checks(&mut report, &a.epoch_checks, a.stage_checks(), a.envelope_checks());
            let l2 = l2_tails(&schedule, &a.l2_epochs, policy.l2_ratio_bound);
            (Synthesis::Jacobi(Box::new(a)), l2)
        }
    };
    for t in &l2 {
        for (k, r) in t.ratios.iter().enumerate() {
            let w = t.activation_epoch + k;
            let rec = Inequality::le(
                "l2.epoch_ratio",
                format!("E = {}", t.energy),
                *r,
                policy.l2_ratio_bound,
                format!("epoch {} -> {}", w, w + 1),
            );
            // the infinite prefix asserts envelope and contracts only
            match mode {
                GrowthMode::Finite => report.inequalities.push(rec),
                GrowthMode::Infinite => report.reported.push(rec),
            }
        }
    }
    let envelopes = match &synthesis {
        Synthesis::Continuous(a) => &a.envelopes,
        Synthesis::Jacobi(a) => &a.envelopes,
    };
    report.summary = json!({
        "total_length": schedule.total_length(),
        "envelope_constant": envelopes.iter().map(|e| e.sup_v_x).fold(0.0, f64::max),
        "measured_m": envelopes.iter().map(|e| e.measured_m).fold(0.0, f64::max),
        "sup_v_over_h": envelopes.iter().filter_map(|e| e.sup_v_over_h).reduce(f64::max),
        "half_band": table.half_band,
        "l2_max_ratio": l2.iter().map(|t| t.max_ratio).collect::<Vec<_>>(),
    });
    let report = report.finish(clock.elapsed().as_secs_f64());
    Ok(EmbeddingRun {
        report,
        table,
        l2,
        synthesis,
    })
}

fn schedule_records(s: &Schedule, table: &QuasiTable, report: &mut ExperimentReport) {
    report.inequalities.push(Inequality::le(
        "schedule.identities",
        "T_w = T_(w-1) C_w and J_w = sum N(i) T_i, exact",
        if s.identities_hold() { 0.0 } else { 1.0 },
        0.0,
        "all epochs",
    ));
    for a in &s.audit {
        for c in &a.scaled {
            report
                .inequalities
                .push(Inequality::le("schedule.scaled", c.name.clone(), c.lhs, c.rhs, format!("epoch {}", a.w)));
        }
        for c in &a.unscaled {
            report
                .reported
                .push(Inequality::le("schedule.unscaled", c.name.clone(), c.lhs, c.rhs, format!("epoch {}", a.w)));
        }
    }
    let ks = table.ks();
    if ks.len() > 1 {
        let (sum_gap, eq_gap) = pair_gaps(&ks);
        report
            .reported
            .push(Inequality::le("resonance.sum_gap", "min |k_i + k_j - π|", ANGLE_TOL, sum_gap, "pairs"));
        report
            .reported
            .push(Inequality::le("resonance.distinct", "min |k_i - k_j|", ANGLE_TOL, eq_gap, "pairs"));
    }
}

fn push_checks(
    report: &mut ExperimentReport,
    epochs: &[crate::construction::EpochCheck],
    stage: Vec<crate::construction::Check>,
    envelope: Vec<crate::construction::Check>,
) {
    for c in epochs {
        report.inequalities.push(Inequality::le(
            "epoch.contract",
            format!("E = {}", c.energy),
            c.lhs,
            c.rhs,
            format!("epoch {}", c.epoch),
        ));
    }
    report
        .inequalities
        .extend(stage.iter().chain(&envelope).map(Inequality::from_check));
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::PotentialSpec;

    fn pert() -> Perturbation {
        Perturbation {
            amplitude: 0.1,
            frequency: 2.0,
            phase: 0.0,
        }
    }

    #[test]
    fn zero_perturbation_keeps_ln_r() {
        let z = Perturbation {
            amplitude: 0.0,
            ..pert()
        };
        let r = no_embedding_demo(&Operator::free_continuous(), &z, 1.0, 10.0, 2000.0, 4, 0.5).unwrap();
        assert!(r.pass);
        assert!(r.summary["max_abs_ln_r"].as_f64().unwrap() < 1e-8);
    }

    #[test]
    fn continuous_bound_holds() {
        let r = no_embedding_demo(&Operator::free_continuous(), &pert(), 1.0, 10.0, 1e4, 8, 0.5).unwrap();
        assert!(r.pass, "{:?}", r.failures().collect::<Vec<_>>());
        assert_eq!(r.family("no_embedding.lower_bound").count(), 8);
    }

    #[test]
    fn stage_sized_perturbation_rejected() {
        let wvn = Perturbation {
            amplitude: 8.0,
            frequency: 2.0,
            phase: 0.0,
        };
        let err = no_embedding_demo(&Operator::free_continuous(), &wvn, 1.0, 10.0, 1e4, 8, 0.5).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
        let err = no_embedding_demo(&Operator::free_jacobi(), &wvn, 0.0, 10.0, 1e4, 8, 0.5).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    #[test]
    fn jacobi_bound_holds() {
        let r = no_embedding_demo(&Operator::free_jacobi(), &pert(), 0.3, 10.0, 1e5, 8, 0.5).unwrap();
        assert!(r.pass);
    }

    #[test]
    fn finite_single_eigenvalue_reports_envelope() {
        let policy = ScalingPolicy {
            epochs: 2,
            ..Default::default()
        };
        let run = embedding_demo_finite(&Operator::free_continuous(), &[1.0], &[0.3], &policy).unwrap();
        assert!(run.report.pass, "{:?}", run.report.failures().collect::<Vec<_>>());
        assert!(run.report.summary["envelope_constant"].as_f64().unwrap().is_finite());
        assert!(run.report.family("epoch.contract").count() == 2);
        assert!(run.report.reported.iter().any(|i| i.anchor == "schedule.unscaled"));
    }

    #[test]
    fn resonant_input_never_runs() {
        let e = [(std::f64::consts::PI / 3.0).powi(2), (2.0 * std::f64::consts::PI / 3.0).powi(2)];
        let err = embedding_demo_finite(&Operator::free_continuous(), &e, &[0.0, 0.0], &ScalingPolicy::default())
            .unwrap_err();
        assert!(matches!(err, Error::ResonantSet(_)));
    }

    #[test]
    fn bounded_h_rejected() {
        let err = embedding_demo_infinite(
            &Operator::free_continuous(),
            &[1.0, 2.0],
            &[0.0, 0.0],
            Envelope::Constant { value: 5.0 },
            &ScalingPolicy::infinite_default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::InfeasibleEnvelope(_)));
    }

    #[test]
    fn experiment_roundtrip_and_determinism() {
        let e = Experiment::NoEmbedding {
            operator: Operator::Continuous {
                potential: PotentialSpec::Cosine { amp: 1.0, freq: 1 },
            },
            perturbation: pert(),
            energy: 1.0,
            start: 10.0,
            horizon: 3000.0,
            probes: 4,
            slack: 0.5,
        };
        let s = serde_json::to_string(&e).unwrap();
        let back: Experiment = serde_json::from_str(&s).unwrap();
        assert_eq!(back, e);
        let r = run_experiments(&[e.clone(), e]);
        let a = r[0].as_ref().unwrap().without_runtime();
        let b = r[1].as_ref().unwrap().without_runtime();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }
}
