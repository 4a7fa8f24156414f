//! Smooth cutoffs vanishing to all orders at the ends of a stage.

#[inline]
fn psi(t: f64) -> f64 {
    if t > 0.0 {
        (-1.0 / t).exp()
    } else {
        0.0
    }
}

/// Smooth step: 0 for `t ≤ 0`, 1 for `t ≥ 1`, `C^∞` in between.
#[inline]
pub fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let a = psi(t);
        a / (a + psi(1.0 - t))
    }
}

/// Equal to 1 on `[x0 + w, x1 - w]`, vanishing to all orders at `x0`, `x1`.
/// `w = 0` gives the sharp indicator of `(x0, x1)`.
#[inline]
pub fn cutoff(x: f64, x0: f64, x1: f64, w: f64) -> f64 {
    if x <= x0 || x >= x1 {
        return 0.0;
    }
    if w <= 0.0 {
        return 1.0;
    }
    smooth_step((x - x0) / w) * smooth_step((x1 - x) / w)
}

/// Default mollification width for a stage on `[x0, x1]`.
pub fn default_width(x0: f64, x1: f64) -> f64 {
    (0.01 * (x1 - x0)).min(1.0)
}
