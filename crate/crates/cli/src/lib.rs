//! `wvn bands | synthesize | verify`.

pub mod config;
pub mod output;

use std::path::Path;

use anyhow::Context;
use serde_json::json;
use wvn_core::construction::{EpochCheck, Schedule};
use wvn_core::verify::{embedding_demo_finite, embedding_demo_infinite, EmbeddingRun, Experiment, Synthesis};
use wvn_core::{Error, Operator};

use config::{Mode, RunConfig};
use output::{save_json, Csv, VERSION};

pub const EXIT_PASS: u8 = 0;
pub const EXIT_CONTRACT: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;

/// Exit code for a failed command: contract failures are 1, everything
/// else (parse errors, invalid or resonant input) is 2.
pub fn exit_code_for(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(
            Error::ContractViolated { .. }
            | Error::EpochContractFailed { .. }
            | Error::InfeasibleEnvelope(_)
            | Error::InfeasibleScaling(_),
        ) => EXIT_CONTRACT,
        _ => EXIT_CONFIG,
    }
}

pub fn cmd_bands(cfg: &RunConfig) -> anyhow::Result<bool> {
    let op = cfg.operator()?;
    let (lo, hi) = match &op {
        Operator::Continuous { potential } => {
            let s = potential.build().sup_estimate();
            (cfg.bands.e_min.unwrap_or(-s - 1.0), cfg.bands.e_max.unwrap_or(50.0))
        }
        Operator::Jacobi { .. } => {
            let (a, b) = op.jacobi()?.expect("jacobi operator").spectral_hull();
            (cfg.bands.e_min.unwrap_or(a - 0.5), cfg.bands.e_max.unwrap_or(b + 0.5))
        }
    };
    let bs = match &op {
        Operator::Continuous { potential } => {
            wvn_core::floquet::locate_bands(&potential.build(), lo, hi, Default::default())?
        }
        Operator::Jacobi { .. } => {
            wvn_core::jacobi::jacobi_bands(&op.jacobi()?.expect("jacobi operator"), lo, hi, Default::default())?
        }
    };
    let hash = cfg.hash();
    let mut bands = Csv::new(&hash, "band_index,c,d");
    let mut ks = Csv::new(&hash, "E,k");
    println!("band_index,c,d");
    for (i, b) in bs.bands.iter().enumerate() {
        bands.row([i.to_string(), b.lower.to_string(), b.upper.to_string()]);
        println!("{i},{},{}", b.lower, b.upper);
        let n = cfg.bands.k_samples;
        for j in 1..=n {
            let e = b.lower + b.width() * j as f64 / (n + 1) as f64;
            if let Ok(k) = op.quasimomentum(e) {
                ks.row([e, k]);
            }
        }
    }
    bands.save(&cfg.out.join("bands.csv"))?;
    ks.save(&cfg.out.join("k.csv"))?;
    Ok(true)
}

fn epochs_json(s: &Schedule, checks: &[EpochCheck]) -> serde_json::Value {
    s.epochs
        .iter()
        .map(|e| {
            json!({
                "w": e.w,
                "n": e.n,
                "c": e.c,
                "t": e.t,
                "j_start": e.j_start,
                "j_end": e.j_end,
                "eps": e.eps,
                "min_h": e.min_h,
                "coupling_cap": e.coupling_cap,
                "checks": checks.iter().filter(|c| c.epoch == e.w).collect::<Vec<_>>(),
            })
        })
        .collect()
}

/// Writes the potential (or `b'`), one trajectory file per eigenvalue and
/// `report.json` into `dir`.
pub fn write_synthesis(run: &EmbeddingRun, dir: &Path, hash: &str) -> anyhow::Result<()> {
    let (epochs, envelopes, stages) = match &run.synthesis {
        Synthesis::Continuous(a) => {
            let mut v = Csv::new(hash, "x,V");
            for (x, y) in a.x.iter().zip(&a.v) {
                v.row([x, y]);
            }
            v.save(&dir.join("potential.csv"))?;
            for i in 0..a.ln_r.len() {
                let mut t = Csv::new(hash, "x,lnR,theta");
                for k in 0..a.x.len() {
                    t.row([a.x[k], a.ln_r[i][k], a.theta[i][k]]);
                }
                t.save(&dir.join(format!("trajectory_{i}.csv")))?;
            }
            (
                epochs_json(&a.schedule, &a.epoch_checks),
                serde_json::to_value(&a.envelopes)?,
                serde_json::to_value(&a.stages)?,
            )
        }
        Synthesis::Jacobi(a) => {
            let mut v = Csv::new(hash, "n,b_prime");
            for (k, b) in a.b_prime.iter().enumerate() {
                v.row([(k + 1).to_string(), b.to_string()]);
            }
            v.save(&dir.join("b_prime.csv"))?;
            for i in 0..a.ln_r.len() {
                let mut t = Csv::new(hash, "n,lnR,eta");
                for k in 0..a.n.len() {
                    t.row([a.n[k] as f64, a.ln_r[i][k], a.eta[i][k]]);
                }
                t.save(&dir.join(format!("trajectory_{i}.csv")))?;
            }
            (
                epochs_json(&a.schedule, &a.epoch_checks),
                serde_json::to_value(&a.envelopes)?,
                serde_json::to_value(&a.stages)?,
            )
        }
    };
    let report = json!({
        "version": VERSION,
        "config_sha256": hash,
        "schedule": run.synthesis.schedule(),
        "quasimomenta": run.table,
        "epochs": epochs,
        "envelopes": envelopes,
        "stages": stages,
        "l2_tails": run.l2,
        "report": run.report,
        "pass": run.report.pass,
    });
    save_json(&dir.join("report.json"), &report)
}

pub fn cmd_synthesize(cfg: &RunConfig) -> anyhow::Result<bool> {
    let op = cfg.operator()?;
    let angles = cfg.boundary_angles()?;
    let policy = cfg.scaling_policy()?;
    let run = match cfg.mode {
        Mode::Finite => embedding_demo_finite(&op, &cfg.eigenvalues, &angles, &policy)?,
        Mode::Infinite => embedding_demo_infinite(&op, &cfg.eigenvalues, &angles, cfg.envelope(), &policy)?,
    };
    write_synthesis(&run, &cfg.out, &cfg.hash())?;
    print_report(&run.report);
    Ok(run.report.pass)
}

pub fn cmd_verify(cfg: &RunConfig) -> anyhow::Result<bool> {
    let exp: Experiment = cfg.experiment()?;
    let report = exp.run()?;
    let mut v = serde_json::to_value(&report)?;
    v["version"] = json!(VERSION);
    v["config_sha256"] = json!(cfg.hash());
    save_json(&cfg.out.join("verify.json"), &v).context("writing verify.json")?;
    print_report(&report);
    Ok(report.pass)
}

fn print_report(r: &wvn_core::ExperimentReport) {
    let failed: Vec<_> = r.failures().collect();
    println!(
        "{}: {} ({} inequalities, {} failed, {:.2} s)",
        r.id,
        if r.pass { "PASS" } else { "FAIL" },
        r.inequalities.len(),
        failed.len(),
        r.runtime_s
    );
    for f in failed {
        println!("  {} [{}] {} > {} at {}", f.anchor, f.name, f.lhs, f.rhs, f.location);
    }
}
