//! Adaptive Dormand–Prince 5(4) integrator.
//!
//! Every long-range integration in the crate (monodromy matrices, Prüfer
//! flows, stage constructions) goes through [`Dopri5`]. The state is a plain
//! `&mut [f64]` so callers can couple a variable number of tracked energies
//! without allocating per step.

use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Counters accumulated over the lifetime of an integrator.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub evals: usize,
}

/// Embedded Runge–Kutta 5(4) with FSAL and standard step-size control.
///
/// The integrator remembers its last accepted step size, so integrating a
/// long interval segment by segment costs about the same as one call.
#[derive(Debug, Clone)]
pub struct Dopri5 {
    pub rtol: f64,
    pub atol: f64,
    /// Upper bound on the step size; oscillatory right-hand sides need this
    /// to stay below the oscillation period.
    pub h_max: f64,
    pub max_steps: usize,
    h: Option<f64>,
    stats: Stats,
    k: [Vec<f64>; 7],
    y_tmp: Vec<f64>,
    y_new: Vec<f64>,
}

impl Dopri5 {
    pub fn new(rtol: f64, atol: f64) -> Self {
        Self {
            rtol,
            atol,
            h_max: f64::INFINITY,
            max_steps: 500_000_000,
            h: None,
            stats: Stats::default(),
            k: Default::default(),
            y_tmp: Vec::new(),
            y_new: Vec::new(),
        }
    }

    pub fn with_h_max(mut self, h_max: f64) -> Self {
        self.h_max = h_max;
        self
    }

    pub fn stats(&self) -> Stats {
        self.stats
    }

    fn ensure_buffers(&mut self, n: usize) {
        if self.y_tmp.len() != n {
            for k in self.k.iter_mut() {
                k.resize(n, 0.0);
            }
            self.y_tmp.resize(n, 0.0);
            self.y_new.resize(n, 0.0);
        }
    }

    fn initial_step<F>(&mut self, rhs: &mut F, t: f64, y: &[f64], span: f64) -> f64
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        rhs(t, y, &mut self.k[0]);
        self.stats.evals += 1;
        let mut d0 = 0.0f64;
        let mut d1 = 0.0f64;
        for (yi, fi) in y.iter().zip(self.k[0].iter()) {
            let sc = self.atol + self.rtol * yi.abs();
            d0 += (yi / sc).powi(2);
            d1 += (fi / sc).powi(2);
        }
        let n = y.len().max(1) as f64;
        let (d0, d1) = ((d0 / n).sqrt(), (d1 / n).sqrt());
        let h = if d0 < 1e-5 || d1 < 1e-5 {
            1e-6
        } else {
            0.01 * d0 / d1
        };
        h.min(span.abs()).min(self.h_max)
    }

    /// Integrates `y' = rhs(t, y)` from `t0` to `t1 > t0`, overwriting `y`.
    ///
    /// `stops` lists increasing times inside `(t0, t1]` that the integrator
    /// lands on exactly. `observer(t, y, is_stop)` fires after every
    /// accepted step.
    pub fn integrate<F, O>(
        &mut self,
        mut rhs: F,
        t0: f64,
        y: &mut [f64],
        t1: f64,
        stops: &[f64],
        mut observer: O,
    ) -> Result<Stats>
    where
        F: FnMut(f64, &[f64], &mut [f64]),
        O: FnMut(f64, &[f64], bool),
    {
        if !(t1 > t0) {
            if t1 == t0 {
                return Ok(self.stats);
            }
            return Err(Error::InvalidInput(format!(
                "integration interval must be increasing, got [{t0}, {t1}]"
            )));
        }
        let n = y.len();
        self.ensure_buffers(n);
        let mut t = t0;
        let mut h = match self.h {
            Some(h) => h.min(self.h_max),
            None => self.initial_step(&mut rhs, t, y, t1 - t0),
        };
        rhs(t, y, &mut self.k[0]);
        self.stats.evals += 1;

        let mut stop_idx = 0;
        while stop_idx < stops.len() && stops[stop_idx] <= t0 {
            stop_idx += 1;
        }
        let mut steps = 0usize;
        let mut last_reject = false;

        while t < t1 {
            let target = if stop_idx < stops.len() {
                stops[stop_idx].min(t1)
            } else {
                t1
            };
            let mut h_try = h.min(self.h_max);
            let mut hits_target = false;
            if t + h_try >= target || (target - t - h_try) < 1e-12 * h_try {
                h_try = target - t;
                hits_target = true;
            }
            if h_try <= f64::EPSILON * t.abs().max(1.0) * 4.0 {
                return Err(Error::StepUnderflow { t });
            }

            self.stage_and_error(&mut rhs, t, y, h_try);
            let err = self.error_norm(y);
            steps += 1;
            if steps > self.max_steps {
                return Err(Error::TooManySteps { t });
            }
            if !err.is_finite() {
                if h_try < 1e-12 * t.abs().max(1.0) {
                    return Err(Error::NonFinite { t });
                }
                h = h_try * 0.1;
                self.stats.rejected += 1;
                last_reject = true;
                continue;
            }

            if err <= 1.0 {
                let t_new = if hits_target { target } else { t + h_try };
                y.copy_from_slice(&self.y_new);
                // FSAL: k7 is f(t_new, y_new)
                self.k.swap(0, 6);
                t = t_new;
                self.stats.accepted += 1;
                let mut is_stop = false;
                if hits_target && stop_idx < stops.len() && stops[stop_idx] <= t {
                    is_stop = true;
                    while stop_idx < stops.len() && stops[stop_idx] <= t {
                        stop_idx += 1;
                    }
                }
                observer(t, y, is_stop);
                let mut fac = 0.9 * err.max(1e-10).powf(-0.2);
                fac = fac.clamp(0.2, 10.0);
                if last_reject {
                    fac = fac.min(1.0);
                }
                // A step shortened to land on a stop says nothing about the
                // natural step size.
                if !hits_target || h_try >= h {
                    h = h_try * fac;
                }
                last_reject = false;
            } else {
                let fac = (0.9 * err.powf(-0.2)).max(0.2);
                h = h_try * fac;
                self.stats.rejected += 1;
                last_reject = true;
            }
        }
        self.h = Some(h);
        Ok(self.stats)
    }

    fn stage_and_error<F>(&mut self, rhs: &mut F, t: f64, y: &[f64], h: f64)
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        let n = y.len();
        let [k1, k2, k3, k4, k5, k6, k7] = &mut self.k;
        let yt = &mut self.y_tmp;
        for i in 0..n {
            yt[i] = y[i] + h * A21 * k1[i];
        }
        rhs(t + C2 * h, yt, k2);
        for i in 0..n {
            yt[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        rhs(t + C3 * h, yt, k3);
        for i in 0..n {
            yt[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        rhs(t + C4 * h, yt, k4);
        for i in 0..n {
            yt[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        rhs(t + C5 * h, yt, k5);
        for i in 0..n {
            yt[i] = y[i]
                + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        rhs(t + h, yt, k6);
        let yn = &mut self.y_new;
        for i in 0..n {
            yn[i] = y[i]
                + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        rhs(t + h, yn, k7);
        // reuse y_tmp for the error estimate
        for i in 0..n {
            yt[i] = h
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }
        self.stats.evals += 6;
    }

    fn error_norm(&self, y: &[f64]) -> f64 {
        let n = y.len().max(1) as f64;
        let mut acc = 0.0;
        for i in 0..y.len() {
            let sc = self.atol + self.rtol * y[i].abs().max(self.y_new[i].abs());
            acc += (self.y_tmp[i] / sc).powi(2);
        }
        (acc / n).sqrt()
    }
}
