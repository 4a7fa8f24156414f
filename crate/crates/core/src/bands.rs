//! Band location from a discriminant `E -> (Δ(E), Δ'(E))`.
//!
//! Shared by the continuous and the Jacobi operators. Edges are the points
//! where `|Δ| = 2`; simple edges are bracketed by sign changes of `Δ ∓ 2`,
//! closed gaps (tangential touches of `|Δ| = 2`) by sign changes of `Δ'`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `| |Δ(E*)| - 2 |` at a critical point for it to count as a
/// closed gap rather than a gap too narrow for the scan grid.
pub const TOUCH_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lower: f64,
    pub upper: f64,
    /// `true` when the quasimomentum increases from 0 to π across the band.
    pub k_increasing: bool,
    /// The band continues past the scanned range on this side.
    pub lower_truncated: bool,
    pub upper_truncated: bool,
}

impl Band {
    pub fn contains_interior(&self, energy: f64) -> bool {
        energy > self.lower && energy < self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub energy: f64,
    /// Value of the discriminant at the edge, `±2` up to tolerance.
    pub disc: f64,
    /// Both sides of a tangential edge lie in the spectrum.
    pub tangential: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandStructure {
    pub range: (f64, f64),
    pub edges: Vec<Edge>,
    pub bands: Vec<Band>,
}

impl BandStructure {
    pub fn band_of(&self, energy: f64) -> Option<&Band> {
        self.bands.iter().find(|b| b.contains_interior(energy))
    }

    pub fn band_index(&self, energy: f64) -> Option<usize> {
        self.bands.iter().position(|b| b.contains_interior(energy))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ScanOptions {
    pub points_per_unit: f64,
    pub root_tol: f64,
    /// Lower bound on the number of scan cells regardless of range width.
    pub min_cells: usize,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            points_per_unit: 400.0,
            root_tol: 1e-10,
            min_cells: 64,
        }
    }
}

fn bisect<F>(mut f: F, mut lo: f64, mut hi: f64, f_lo: f64, tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let s_lo = f_lo >= 0.0;
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let fm = f(mid)?;
        if fm == 0.0 {
            return Ok(mid);
        }
        if (fm >= 0.0) == s_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Scans `[e_min, e_max]` and assembles the bands `|Δ| ≤ 2`.
pub fn locate_bands<F>(mut disc: F, e_min: f64, e_max: f64, opts: ScanOptions) -> Result<BandStructure>
where
    F: FnMut(f64) -> Result<(f64, f64)>,
{
    if !(e_min < e_max) {
        return Err(Error::InvalidInput(format!(
            "empty energy range [{e_min}, {e_max}]"
        )));
    }
    if !(opts.root_tol > 0.0) {
        return Err(Error::InvalidInput("root_tol must be positive".into()));
    }
    let cells = (((e_max - e_min) * opts.points_per_unit).ceil() as usize).max(opts.min_cells);
    let step = (e_max - e_min) / cells as f64;
    let grid: Vec<f64> = (0..=cells)
        .map(|i| if i == cells { e_max } else { e_min + step * i as f64 })
        .collect();
    let samples: Vec<(f64, f64)> = grid.iter().map(|&e| disc(e)).collect::<Result<_>>()?;

    let mut edges: Vec<Edge> = Vec::new();
    let tol = opts.root_tol;
    for i in 0..cells {
        let (lo, hi) = (grid[i], grid[i + 1]);
        let (d_lo, dd_lo) = samples[i];
        let (d_hi, dd_hi) = samples[i + 1];
        let mut found = 0;
        for level in [2.0, -2.0] {
            let (g_lo, g_hi) = (d_lo - level, d_hi - level);
            if (g_lo >= 0.0) != (g_hi >= 0.0) {
                let e = bisect(|e| disc(e).map(|(d, _)| d - level), lo, hi, g_lo, tol)?;
                edges.push(Edge {
                    energy: e,
                    disc: level,
                    tangential: false,
                });
                found += 1;
            }
        }
        // critical point of Δ inside the cell
        if (dd_lo >= 0.0) != (dd_hi >= 0.0) {
            let e_star = bisect(|e| disc(e).map(|(_, dd)| dd), lo, hi, dd_lo, tol)?;
            let (d_star, _) = disc(e_star)?;
            let excess = d_star.abs() - 2.0;
            if excess.abs() <= TOUCH_TOL {
                if found == 0 {
                    edges.push(Edge {
                        energy: e_star,
                        disc: 2.0 * d_star.signum(),
                        tangential: true,
                    });
                }
            } else if excess > 0.0 && found == 0 && d_lo.abs() < 2.0 && d_hi.abs() < 2.0 {
                return Err(Error::UnresolvedEdge { lo, hi });
            }
        }
    }
    edges.sort_by(|a, b| a.energy.total_cmp(&b.energy));
    edges.dedup_by(|a, b| (a.energy - b.energy).abs() <= 2.0 * tol);

    let mut bounds: Vec<f64> = Vec::with_capacity(edges.len() + 2);
    bounds.push(e_min);
    bounds.extend(edges.iter().map(|e| e.energy));
    bounds.push(e_max);
    let mut bands = Vec::new();
    for w in 0..bounds.len() - 1 {
        let (lo, hi) = (bounds[w], bounds[w + 1]);
        if hi - lo <= 2.0 * tol {
            continue;
        }
        let mid = 0.5 * (lo + hi);
        let (d_mid, dd_mid) = disc(mid)?;
        if d_mid.abs() <= 2.0 {
            bands.push(Band {
                lower: lo,
                upper: hi,
                k_increasing: dd_mid < 0.0,
                lower_truncated: w == 0 && (samples[0].0.abs() < 2.0 - TOUCH_TOL),
                upper_truncated: w == bounds.len() - 2
                    && (samples[cells].0.abs() < 2.0 - TOUCH_TOL),
            });
        }
    }
    Ok(BandStructure {
        range: (e_min, e_max),
        edges,
        bands,
    })
}

/// `k = arccos(Δ/2)`, refusing energies within `margin` of a band edge.
pub fn quasimomentum_from_disc(energy: f64, disc: f64, margin: f64) -> Result<f64> {
    if disc.abs() >= 2.0 - margin {
        return Err(Error::NotInBand { energy, disc });
    }
    Ok((0.5 * disc).acos())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn free(e: f64) -> Result<(f64, f64)> {
        if e > 0.0 {
            let s = e.sqrt();
            Ok((2.0 * s.cos(), -s.sin() / s))
        } else if e < 0.0 {
            let s = (-e).sqrt();
            Ok((2.0 * s.cosh(), -s.sinh() / s))
        } else {
            Ok((2.0, -1.0))
        }
    }

    #[test]
    fn free_edges_closed_form() {
        let bs = locate_bands(free, 0.0, 50.0, ScanOptions::default()).unwrap();
        let es: Vec<f64> = bs.edges.iter().map(|e| e.energy).collect();
        assert_eq!(es.len(), 3, "{es:?}");
        for (e, want) in es.iter().zip([0.0, PI * PI, 4.0 * PI * PI]) {
            assert!((e - want).abs() < 1e-8, "{e} vs {want}");
        }
        assert_eq!(bs.bands.len(), 3);
        assert!(bs.bands[0].k_increasing);
        assert!(!bs.bands[1].k_increasing);
        assert!(bs.bands[2].upper_truncated);
    }

    #[test]
    fn no_bands_below_free_spectrum() {
        let bs = locate_bands(free, -5.0, -1e-3, ScanOptions::default()).unwrap();
        assert!(bs.bands.is_empty());
    }

    #[test]
    fn narrow_gap_in_one_cell_is_unresolved() {
        // |Δ| exceeds 2 on (0.5 - 1e-4, 0.5 + 1e-4), narrower than a scan cell
        let d = |e: f64| Ok((2.0 + 1e-6 - 100.0 * (e - 0.5).powi(2), -200.0 * (e - 0.5)));
        let opts = ScanOptions {
            points_per_unit: 10.0,
            min_cells: 10,
            ..Default::default()
        };
        let err = locate_bands(d, 0.05, 0.9, opts).unwrap_err();
        assert!(matches!(err, Error::UnresolvedEdge { .. }));
    }

    #[test]
    fn rejects_bad_range() {
        assert!(locate_bands(free, 1.0, 1.0, ScanOptions::default()).is_err());
    }
}
