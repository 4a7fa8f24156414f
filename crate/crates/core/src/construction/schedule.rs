//! Epoch bookkeeping `{N(w), C_w, T_w, J_w}` in exact integer arithmetic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GrowthMode {
    Finite,
    Infinite,
}

/// Envelope `h` with `|V(x)| ≤ h(x)/(1+x)` in the infinite construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Envelope {
    /// `ln(shift + x)`
    Log { shift: f64 },
    /// `(1 + x)^exponent`
    Power { exponent: f64 },
    Constant { value: f64 },
}

impl Envelope {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Envelope::Log { shift } => (shift + x).ln(),
            Envelope::Power { exponent } => (1.0 + x).powf(exponent),
            Envelope::Constant { value } => value,
        }
    }

    pub fn is_unbounded(&self) -> bool {
        match *self {
            Envelope::Log { shift } => shift > 0.0,
            Envelope::Power { exponent } => exponent > 0.0,
            Envelope::Constant { .. } => false,
        }
    }

    /// Minimum over `[a, b]` from log-spaced samples plus both ends.
    pub fn sampled_min(&self, a: f64, b: f64) -> f64 {
        let n = 1000;
        let (la, lb) = ((1.0 + a).ln(), (1.0 + b).ln());
        (0..=n)
            .map(|i| (la + (lb - la) * i as f64 / n as f64).exp() - 1.0)
            .chain([a, b])
            .map(|x| self.eval(x.clamp(a, b)))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Knobs that replace the proof constants with desk-scale ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScalingPolicy {
    /// Target decay exponent `D`; stage coupling is `4 D G`.
    pub decay_exponent: f64,
    /// Scaled `T_w ≥ base^w`.
    pub epoch_base: f64,
    /// Scaled `C_w ≥ base^{N(w+1)}`.
    pub addliu_base: f64,
    /// Epoch contract `R(J_w) ≤ 2^{N(w)} N(w-1)^p C_w^{-p'} R(J_{w-1})`.
    pub p: f64,
    pub p_prime: f64,
    /// Lower bound on `T_0 = J_0`, the unperturbed prefix.
    pub k_min: f64,
    /// `T_0 = t0_scale · C_1`, raised if needed.
    pub t0_scale: u64,
    pub c_floor: u64,
    /// Epochs spent at each value of `N`.
    pub hold: usize,
    pub epochs: usize,
    pub slope_slack: f64,
    pub l2_ratio_bound: f64,
    /// Constant in the envelope `|V| (1+x) ≤ M N(w) C_w²`.
    pub envelope_m: f64,
    pub rtol: f64,
    pub record_rel: f64,
    /// Smallest stage coupling accepted in infinite mode.
    pub coupling_floor: f64,
    /// Jacobi growth allowance `ε_w = 1/(eps_denominator · N(w))`.
    pub eps_denominator: f64,
}

impl Default for ScalingPolicy {
    fn default() -> Self {
        Self {
            decay_exponent: 2.0,
            epoch_base: 4.0,
            addliu_base: 2.0,
            p: 2.0,
            p_prime: 2.0,
            k_min: 1000.0,
            t0_scale: 250,
            c_floor: 2,
            hold: 1,
            epochs: 4,
            slope_slack: 0.1,
            l2_ratio_bound: 0.5,
            envelope_m: 100.0,
            rtol: 1e-8,
            record_rel: 1e-3,
            coupling_floor: 1.0,
            eps_denominator: 100.0,
        }
    }
}

impl ScalingPolicy {
    /// Defaults for the infinite construction under a logarithmic envelope.
    pub fn infinite_default() -> Self {
        Self {
            addliu_base: 2f64.powf(0.25),
            t0_scale: 1000,
            hold: 2,
            epochs: 6,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("decay_exponent", self.decay_exponent),
            ("epoch_base", self.epoch_base),
            ("addliu_base", self.addliu_base),
            ("rtol", self.rtol),
            ("record_rel", self.record_rel),
            ("l2_ratio_bound", self.l2_ratio_bound),
            ("envelope_m", self.envelope_m),
            ("eps_denominator", self.eps_denominator),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidInput(format!("policy.{name} must be positive, got {v}")));
            }
        }
        if self.decay_exponent < 0.0 || self.p < 0.0 || self.p_prime < 0.0 || self.k_min < 0.0 {
            return Err(Error::InvalidInput("policy exponents must be non-negative".into()));
        }
        if self.hold == 0 || self.epochs == 0 || self.c_floor < 2 || self.t0_scale == 0 {
            return Err(Error::InvalidInput(
                "policy needs hold ≥ 1, epochs ≥ 1, c_floor ≥ 2, t0_scale ≥ 1".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.slope_slack) {
            return Err(Error::InvalidInput("policy.slope_slack must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Epoch {
    pub w: usize,
    pub n: usize,
    pub c: u64,
    pub t: u64,
    pub j_start: u64,
    pub j_end: u64,
    /// Jacobi growth allowance.
    pub eps: f64,
    /// Infinite mode: `min h` on `[J_{w-1}, J_w]` and the stage coupling cap.
    pub min_h: Option<f64>,
    pub coupling_cap: Option<f64>,
}

impl Epoch {
    /// `b` and `[x0, x1]` of slot `t`.
    pub fn slot(&self, t: usize) -> (u64, u64, u64) {
        let b = t as u64 * self.t;
        (b, self.j_start + b, self.j_start + b + self.t)
    }
}

/// One inequality `lhs ≤ rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl Check {
    pub fn le(name: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        Self {
            name: name.into(),
            lhs,
            rhs,
            holds: lhs <= rhs,
        }
    }
}

/// Unscaled constraints next to the scaled ones actually enforced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintAudit {
    pub w: usize,
    pub unscaled: Vec<Check>,
    pub scaled: Vec<Check>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub eigenvalues: Vec<f64>,
    pub angles: Vec<f64>,
    pub mode: GrowthMode,
    pub policy: ScalingPolicy,
    pub envelope: Option<Envelope>,
    pub t0: u64,
    pub j0: u64,
    pub epochs: Vec<Epoch>,
    pub audit: Vec<ConstraintAudit>,
}

impl Schedule {
    /// `N(w)` with `N(0) = 1`.
    pub fn n_of(&self, w: usize) -> usize {
        if w == 0 {
            1
        } else {
            self.epochs[w - 1].n
        }
    }

    /// First epoch in which eigenvalue `i` (0-based) is targeted.
    pub fn activation_epoch(&self, i: usize) -> Option<usize> {
        self.epochs.iter().find(|e| e.n > i).map(|e| e.w)
    }

    pub fn total_length(&self) -> u64 {
        self.epochs.last().map_or(self.j0, |e| e.j_end)
    }

    /// Re-derives `T_w = T_{w-1} C_w` and `J_w = Σ_{i=0}^{w} N(i) T_i` exactly.
    pub fn identities_hold(&self) -> bool {
        let mut t = self.t0 as u128;
        let mut j = t;
        if self.j0 != self.t0 {
            return false;
        }
        for (idx, e) in self.epochs.iter().enumerate() {
            t *= e.c as u128;
            j += e.n as u128 * t;
            if e.w != idx + 1 || e.t as u128 != t || e.j_end as u128 != j || e.j_start as u128 != j - e.n as u128 * t {
                return false;
            }
        }
        true
    }

    pub fn audit_passes(&self) -> bool {
        self.audit.iter().all(|a| a.scaled.iter().all(|c| c.holds))
    }
}

fn n_rule(mode: GrowthMode, hold: usize, n_max: usize, w: usize) -> usize {
    let n = 1 + (w.max(1) - 1) / hold;
    match mode {
        GrowthMode::Finite => n.min(n_max),
        GrowthMode::Infinite => n,
    }
}

fn ceil_pow(base: f64, n: usize) -> u64 {
    // tolerance keeps exact powers such as (2^{1/4})^4 from rounding up
    (base.powi(n as i32) - 1e-9).ceil().max(1.0) as u64
}

fn overflow(what: &str) -> Error {
    Error::InfeasibleScaling(format!("{what} overflows 64-bit schedule arithmetic"))
}

pub fn build_schedule(
    eigenvalues: &[f64],
    angles: &[f64],
    mode: GrowthMode,
    policy: &ScalingPolicy,
    envelope: Option<Envelope>,
) -> Result<Schedule> {
    if eigenvalues.is_empty() {
        return Err(Error::EmptyTargetSet);
    }
    if angles.len() != eigenvalues.len() {
        return Err(Error::InvalidInput(format!(
            "{} eigenvalues but {} boundary angles",
            eigenvalues.len(),
            angles.len()
        )));
    }
    policy.validate()?;
    if mode == GrowthMode::Infinite {
        match envelope {
            None => return Err(Error::InvalidInput("infinite mode needs an envelope h".into())),
            Some(h) if !h.is_unbounded() => {
                return Err(Error::InfeasibleEnvelope("h must grow without bound".into()))
            }
            _ => {}
        }
    }
    let n_max = eigenvalues.len();
    let epochs_n = policy.epochs;
    let ns: Vec<usize> = (1..=epochs_n + 1).map(|w| n_rule(mode, policy.hold, n_max, w)).collect();
    if mode == GrowthMode::Infinite && ns[epochs_n - 1] > n_max {
        return Err(Error::InvalidInput(format!(
            "{} epochs activate {} eigenvalues but only {n_max} are enumerated",
            epochs_n,
            ns[epochs_n - 1]
        )));
    }
    let mut cs = Vec::with_capacity(epochs_n);
    let mut prev = 0u64;
    for w in 1..=epochs_n {
        let c = policy.c_floor.max(ceil_pow(policy.addliu_base, ns[w])).max(prev);
        cs.push(c);
        prev = c;
    }
    // T_w ≥ epoch_base^w fixes the smallest admissible T_0
    let mut t0 = policy.t0_scale.checked_mul(cs[0]).ok_or_else(|| overflow("T_0"))?;
    let mut prod = 1f64;
    for (w, c) in cs.iter().enumerate() {
        prod *= *c as f64;
        let need = (policy.epoch_base.powi(w as i32 + 1) / prod).ceil();
        if need > t0 as f64 {
            t0 = need as u64;
        }
    }
    t0 = t0.max(policy.k_min.ceil() as u64);
    // N(0) = 1, so the prefix [0, J_0] has length T_0
    let j0 = t0;

    let mut epochs = Vec::with_capacity(epochs_n);
    let mut audit = Vec::with_capacity(epochs_n);
    let mut t = t0;
    let mut j = j0;
    for w in 1..=epochs_n {
        let n = ns[w - 1];
        let c = cs[w - 1];
        t = t.checked_mul(c).ok_or_else(|| overflow("T_w"))?;
        let j_start = j;
        j = (n as u64)
            .checked_mul(t)
            .and_then(|nt| nt.checked_add(j))
            .ok_or_else(|| overflow("J_w"))?;
        let mut min_h = None;
        let mut cap = None;
        let mut unscaled = vec![
            Check::le("C_w >= 4^N(w+1)", 4f64.powi(ns[w] as i32), c as f64),
            Check::le("T_w >= 1000^w", 1000f64.powi(w as i32), t as f64),
        ];
        let mut scaled = vec![
            Check::le(
                format!("C_w >= {:.4}^N(w+1)", policy.addliu_base),
                policy.addliu_base.powi(ns[w] as i32) - 1e-9,
                c as f64,
            ),
            Check::le(
                format!("T_w >= {}^w", policy.epoch_base),
                policy.epoch_base.powi(w as i32),
                t as f64,
            ),
            Check::le("J_0 >= K_min", policy.k_min, j0 as f64),
        ];
        if let (GrowthMode::Infinite, Some(h)) = (mode, envelope) {
            let mh = h.sampled_min(j_start as f64, j as f64);
            // (1+x)/(1+x-b) over the epoch is at most this factor
            let spread = 1.0 + (n as f64 - 1.0) * t as f64 / (1.0 + j_start as f64);
            let c_cap = 0.999 * mh / spread;
            unscaled.push(Check::le("C_w^2 N(w) <= min h / 100", (c * c) as f64 * n as f64, mh / 100.0));
            scaled.push(Check::le("coupling cap * spread <= min h", c_cap * spread, mh));
            scaled.push(Check::le("coupling floor <= coupling cap", policy.coupling_floor, c_cap));
            if c_cap < policy.coupling_floor {
                return Err(Error::InfeasibleEnvelope(format!(
                    "epoch {w}: coupling cap {c_cap:.4} below floor {} (min h = {mh:.4}, spread = {spread:.4})",
                    policy.coupling_floor
                )));
            }
            min_h = Some(mh);
            cap = Some(c_cap);
        }
        epochs.push(Epoch {
            w,
            n,
            c,
            t,
            j_start,
            j_end: j,
            eps: 1.0 / (policy.eps_denominator * n as f64),
            min_h,
            coupling_cap: cap,
        });
        audit.push(ConstraintAudit { w, unscaled, scaled });
    }
    let schedule = Schedule {
        eigenvalues: eigenvalues.to_vec(),
        angles: angles.to_vec(),
        mode,
        policy: policy.clone(),
        envelope,
        t0,
        j0,
        epochs,
        audit,
    };
    if !schedule.audit_passes() {
        return Err(Error::InfeasibleScaling("scaled constraint set not satisfied".into()));
    }
    Ok(schedule)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn finite_two_targets() {
        let s = build_schedule(&[1.0, 2.89], &[0.0, 0.5], GrowthMode::Finite, &ScalingPolicy::default(), None).unwrap();
        let ns: Vec<usize> = s.epochs.iter().map(|e| e.n).collect();
        assert_eq!(ns, vec![1, 2, 2, 2]);
        assert!(s.epochs.iter().all(|e| e.c == 4));
        assert_eq!(s.t0, 1000);
        assert_eq!(s.epochs[0].t, 4000);
        assert_eq!(s.j0, 1000);
        assert_eq!(s.epochs[3].j_end, 1000 + 4000 + 2 * (16_000 + 64_000 + 256_000));
        assert!(s.identities_hold());
        for w in 1..s.epochs.len() {
            assert_eq!(s.epochs[w].t, s.epochs[w - 1].t * s.epochs[w].c);
        }
        // unscaled constraints are reported, and fail at this scale
        assert!(s.audit.iter().any(|a| a.unscaled.iter().any(|c| !c.holds)));
    }

    #[test]
    fn single_target_degenerates() {
        let s = build_schedule(&[1.0], &[0.0], GrowthMode::Finite, &ScalingPolicy::default(), None).unwrap();
        assert!(s.epochs.iter().all(|e| e.n == 1));
    }

    #[test]
    fn infinite_log_envelope() {
        let p = ScalingPolicy::infinite_default();
        let h = Envelope::Log { shift: 2.0 };
        let s = build_schedule(&[1.0, 2.89, 0.16], &[0.0; 3], GrowthMode::Infinite, &p, Some(h)).unwrap();
        let ns: Vec<usize> = s.epochs.iter().map(|e| e.n).collect();
        assert_eq!(ns, vec![1, 1, 2, 2, 3, 3]);
        assert!(s.epochs.iter().all(|e| e.c == 2));
        for e in &s.epochs {
            // direct dense scan of h on the epoch
            let direct = (0..=100_000)
                .map(|i| h.eval(e.j_start as f64 + (e.j_end - e.j_start) as f64 * i as f64 / 1e5))
                .fold(f64::INFINITY, f64::min);
            assert!((e.min_h.unwrap() - direct).abs() < 1e-9);
            let spread = 1.0 + (e.n as f64 - 1.0) * e.t as f64 / (1.0 + e.j_start as f64);
            assert!(e.coupling_cap.unwrap() * spread <= direct);
        }
    }

    #[test]
    fn rejections() {
        let p = ScalingPolicy::infinite_default();
        let err = build_schedule(&[1.0], &[0.0], GrowthMode::Infinite, &p, Some(Envelope::Constant { value: 5.0 }));
        assert!(matches!(err, Err(Error::InfeasibleEnvelope(_))));
        let err = build_schedule(&[], &[], GrowthMode::Finite, &ScalingPolicy::default(), None);
        assert!(matches!(err, Err(Error::EmptyTargetSet)));
        // an envelope too flat for any useful coupling
        let p = ScalingPolicy {
            coupling_floor: 50.0,
            ..ScalingPolicy::infinite_default()
        };
        let err = build_schedule(&[1.0, 2.0, 3.0], &[0.0; 3], GrowthMode::Infinite, &p, Some(Envelope::Log { shift: 2.0 }));
        assert!(matches!(err, Err(Error::InfeasibleEnvelope(_))));
    }

    proptest! {
        #[test]
        fn recurrences_are_exact(
            neig in 1usize..4,
            epochs in 1usize..7,
            hold in 1usize..3,
            base in 1.1f64..3.0,
            t0_scale in 1u64..500,
            k_min in 0.0f64..5000.0,
        ) {
            let p = ScalingPolicy { epochs, hold, addliu_base: base, t0_scale, k_min, ..ScalingPolicy::default() };
            let eigs: Vec<f64> = (0..neig).map(|i| 1.0 + i as f64).collect();
            let s = build_schedule(&eigs, &vec![0.0; neig], GrowthMode::Finite, &p, None).unwrap();
            prop_assert!(s.identities_hold());
            prop_assert_eq!(s.epochs[0].n, 1);
            for w in 1..s.epochs.len() {
                prop_assert!(s.epochs[w].c >= s.epochs[w - 1].c);
                prop_assert!(s.epochs[w].j_end > s.epochs[w - 1].j_end);
                let dn = s.epochs[w].n - s.epochs[w - 1].n;
                prop_assert!(dn <= 1);
            }
        }
    }
}
