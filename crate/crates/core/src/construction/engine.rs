//! Coupled Prüfer integration of several energies under one self-consistent
//! stage potential.
//!
//! State layout: `[η_0, lnR_0, η_1, lnR_1, ...]` with `η_i = θ_i - γ_i(x)`,
//! optionally followed by `∫ R_i²` slots and the oscillation integrals.

use crate::error::Result;
use crate::floquet::FloquetData;
use crate::ode::Dopri5;
use crate::prufer::step_cap;

use super::mollifier::cutoff;

/// Where the potential is switched on and whom it chases.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub x0: f64,
    pub x1: f64,
    pub b: f64,
    pub coupling: f64,
    pub width: f64,
    /// Index of the target track; `None` means `V ≡ 0`.
    pub target: Option<usize>,
}

impl Segment {
    pub fn free(x0: f64, x1: f64) -> Self {
        Self {
            x0,
            x1,
            b: 0.0,
            coupling: 0.0,
            width: 0.0,
            target: None,
        }
    }

    /// `-c χ(x) sin 2θ / (1 + x - b)`.
    #[inline]
    pub fn potential(&self, x: f64, theta_target: f64) -> f64 {
        if self.target.is_none() || self.coupling == 0.0 {
            return 0.0;
        }
        let chi = cutoff(x, self.x0, self.x1, self.width);
        if chi == 0.0 {
            return 0.0;
        }
        -self.coupling * chi * (2.0 * theta_target).sin() / (1.0 + x - self.b)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EngineConfig {
    pub rtol: f64,
    pub atol: f64,
    /// Accumulate `∫ R_i² dx` per track.
    pub l2: bool,
    /// Accumulate `∫ cos 4θ_t/(1+x-b)` and the cross integrals
    /// `∫ sin 2θ_t sin 2θ_j / (2γ_j'(1+x-b))`.
    pub oscillation: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-10,
            l2: false,
            oscillation: false,
        }
    }
}

pub struct Engine<'a> {
    fds: Vec<&'a FloquetData>,
    cfg: EngineConfig,
    ode: Dopri5,
    state: Vec<f64>,
    x: f64,
}

/// Read-only view of the state after an accepted step.
pub struct StepView<'s, 'a> {
    pub x: f64,
    pub is_stop: bool,
    pub v: f64,
    fds: &'s [&'a FloquetData],
    state: &'s [f64],
    l2_off: usize,
    osc_off: usize,
}

impl StepView<'_, '_> {
    pub fn theta(&self, i: usize) -> f64 {
        self.state[2 * i] + self.fds[i].gamma(self.x)
    }

    pub fn ln_r(&self, i: usize) -> f64 {
        self.state[2 * i + 1]
    }

    pub fn l2(&self, i: usize) -> f64 {
        self.state[self.l2_off + i]
    }

    pub fn osc_cos(&self) -> f64 {
        self.state[self.osc_off]
    }

    pub fn osc_cross(&self, j: usize) -> f64 {
        self.state[self.osc_off + 1 + j]
    }

    pub fn tracks(&self) -> usize {
        self.fds.len()
    }
}

impl<'a> Engine<'a> {
    /// Tracks start at `x_start` with the given `(θ, ln R)` pairs.
    pub fn new(fds: Vec<&'a FloquetData>, init: &[(f64, f64)], x_start: f64, cfg: EngineConfig) -> Self {
        assert_eq!(fds.len(), init.len());
        let n = fds.len();
        let mut state = vec![0.0; 2 * n + if cfg.l2 { n } else { 0 } + if cfg.oscillation { n + 1 } else { 0 }];
        for (i, (fd, &(theta, ln_r))) in fds.iter().zip(init).enumerate() {
            state[2 * i] = theta - fd.gamma(x_start);
            state[2 * i + 1] = ln_r;
        }
        let h_max = fds.iter().map(|f| step_cap(f)).fold(f64::INFINITY, f64::min);
        Self {
            fds,
            cfg,
            ode: Dopri5::new(cfg.rtol, cfg.atol).with_h_max(h_max),
            state,
            x: x_start,
        }
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn tracks(&self) -> usize {
        self.fds.len()
    }

    pub fn theta(&self, i: usize) -> f64 {
        self.state[2 * i] + self.fds[i].gamma(self.x)
    }

    pub fn ln_r(&self, i: usize) -> f64 {
        self.state[2 * i + 1]
    }

    fn l2_off(&self) -> usize {
        2 * self.fds.len()
    }

    fn osc_off(&self) -> usize {
        self.l2_off() + if self.cfg.l2 { self.fds.len() } else { 0 }
    }

    pub fn l2(&self, i: usize) -> f64 {
        self.state[self.l2_off() + i]
    }

    pub fn reset_oscillation(&mut self) {
        if self.cfg.oscillation {
            let off = self.osc_off();
            self.state[off..].iter_mut().for_each(|s| *s = 0.0);
        }
    }

    pub fn osc_cos(&self) -> f64 {
        self.state[self.osc_off()]
    }

    pub fn osc_cross(&self, j: usize) -> f64 {
        self.state[self.osc_off() + 1 + j]
    }

    /// Integrates across `seg` (from the current position to `seg.x1`),
    /// landing on `stops` and reporting every accepted step.
    pub fn run<O>(&mut self, seg: &Segment, stops: &[f64], mut on_step: O) -> Result<()>
    where
        O: FnMut(&StepView<'_, 'a>),
    {
        let n = self.fds.len();
        let fds = &self.fds;
        let l2 = self.cfg.l2;
        let osc = self.cfg.oscillation;
        let l2_off = 2 * n;
        let osc_off = l2_off + if l2 { n } else { 0 };
        let target = seg.target;
        let rhs = |x: f64, y: &[f64], dy: &mut [f64]| {
            let theta_t = target.map(|t| y[2 * t] + fds[t].gamma(x));
            let v = theta_t.map_or(0.0, |th| seg.potential(x, th));
            let inv = 1.0 / (1.0 + x - seg.b);
            let (s2t, c2t) = theta_t.map_or((0.0, 0.0), |th| (2.0 * th).sin_cos());
            for i in 0..n {
                let (g, gp) = fds[i].phase(x);
                let (s, c) = (y[2 * i] + g).sin_cos();
                dy[2 * i] = -v * s * s / gp;
                dy[2 * i + 1] = v * s * c / gp;
                if l2 {
                    dy[l2_off + i] = (2.0 * y[2 * i + 1]).exp();
                }
                if osc {
                    dy[osc_off + 1 + i] = if Some(i) == target {
                        0.0
                    } else {
                        s2t * 2.0 * s * c / (2.0 * gp) * inv
                    };
                }
            }
            if osc {
                // cos 4θ = cos² 2θ - sin² 2θ
                dy[osc_off] = if target.is_some() {
                    (c2t * c2t - s2t * s2t) * inv
                } else {
                    0.0
                };
            }
        };
        let start = self.x;
        let end = seg.x1;
        let fds_view: &[&FloquetData] = &self.fds;
        self.ode.integrate(
            rhs,
            start,
            &mut self.state,
            end,
            stops,
            |x, y, is_stop| {
                let theta_t = target.map(|t| y[2 * t] + fds_view[t].gamma(x));
                let v = theta_t.map_or(0.0, |th| seg.potential(x, th));
                on_step(&StepView {
                    x,
                    is_stop,
                    v,
                    fds: fds_view,
                    state: y,
                    l2_off,
                    osc_off,
                });
            },
        )?;
        self.x = end;
        Ok(())
    }
}
