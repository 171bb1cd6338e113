//! BP EXIT curve and the area-theorem upper bound on the MAP threshold.
//!
//! Bits of a symbol are erased independently, so the area theorem holds for
//! the binary image of the code: the EXIT value is the probability that one
//! bit stays unknown given the extrinsic symbol message and the channel
//! observations of the *other* bits of the same symbol. Its area over
//! `[ε̄, 1]` is compared with the design rate.
//!
//! [`symbol_exit`] gives the coarser per-symbol quantity, the expected
//! extrinsic degrees of freedom divided by `m`. It lower-bounds [`bp_exit`]
//! and agrees with it for `m = 1`.

use std::io::Write;

use rayon::prelude::*;

use crate::density::{
    bp_threshold, channel_distribution, extrinsic_fixed_point, DeOptions, DimensionDistribution,
};
use crate::ensemble::EnsembleSpec;
use crate::error::{Error, Result};
use crate::kernels::{log2_gaussian_binomial, KernelTable};

/// `(1/m) Σ_i i P*(ε, i)`.
pub fn symbol_exit(e: &EnsembleSpec, epsilon: f64, opts: &DeOptions) -> Result<f64> {
    let p = extrinsic_fixed_point(e, epsilon, opts)?;
    Ok((p.expected_dim() / e.m as f64).clamp(0.0, 1.0))
}

/// Probability that a given bit is undetermined when the extrinsic message
/// is a uniform random subspace with dimension law `extrinsic` and each of
/// the other `m - 1` bits of the symbol is erased with probability `epsilon`.
///
/// With `s` other bits erased the channel allows the coordinate subspace
/// `C` of dimension `s + 1` (the bit itself is free). `V ∩ C` is uniform
/// among its dimension class inside `C`, and the bit is known iff `V ∩ C`
/// lies in the hyperplane `C'` of `C` where the bit is zero, which for a
/// `k`-dimensional subspace happens with probability `[s;k] / [s+1;k]`.
pub fn bit_exit_from_extrinsic(extrinsic: &DimensionDistribution, epsilon: f64) -> Result<f64> {
    let m = extrinsic.m();
    let table = KernelTable::cached(m);
    let others = channel_distribution(m - 1, epsilon)?;
    let mut h = 0.0;
    for (i, &pi) in extrinsic.probs().iter().enumerate() {
        if pi == 0.0 {
            continue;
        }
        for (s, &ps) in others.probs().iter().enumerate() {
            if ps == 0.0 {
                continue;
            }
            let c = s + 1;
            for (k, &pk) in table.intersect(c, i).iter().enumerate().take(c + 1) {
                if pk == 0.0 {
                    continue;
                }
                let known = (log2_gaussian_binomial(s as i64, k as i64)
                    - log2_gaussian_binomial(c as i64, k as i64))
                .exp2();
                h += pi * ps * pk * (1.0 - known);
            }
        }
    }
    Ok(h.clamp(0.0, 1.0))
}

/// BP EXIT value at `epsilon`.
pub fn bp_exit(e: &EnsembleSpec, epsilon: f64, opts: &DeOptions) -> Result<f64> {
    let p = extrinsic_fixed_point(e, epsilon, opts)?;
    bit_exit_from_extrinsic(&p, epsilon)
}

/// Sampled EXIT curve. `grid` is ascending; `values[i] = h(grid[i])`.
#[derive(Clone, Debug)]
pub struct ExitCurve {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    /// BP threshold; the curve is zero to its left and jumps (or rises
    /// continuously) at it.
    pub jump: f64,
    /// `lim h(ε)` as ε decreases to `jump`.
    pub value_at_jump: f64,
}

/// Offset above the threshold at which the right limit of the curve is
/// sampled.
const JUMP_OFFSET: f64 = 1e-7;

fn uniform_grid(step: f64) -> Vec<f64> {
    let n = (1.0 / step).round() as usize;
    (0..=n).map(|i| (i as f64 * step).min(1.0)).collect()
}

/// Samples `bp_exit` on a uniform grid over `[0, 1]` and locates the jump.
pub fn exit_curve(e: &EnsembleSpec, step: f64, opts: &DeOptions) -> Result<ExitCurve> {
    if !(step > 0.0 && step <= 0.01) {
        return Err(Error::InvalidEnsemble(format!(
            "grid step {step} outside (0, 0.01]"
        )));
    }
    let jump = bp_threshold(e, opts)?;
    let grid = uniform_grid(step);
    let values = grid
        .par_iter()
        .map(|&eps| {
            if eps <= jump {
                Ok(0.0)
            } else {
                bp_exit(e, eps, opts)
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    let value_at_jump = if jump < 1.0 {
        bp_exit(e, (jump + JUMP_OFFSET).min(1.0), opts)?
    } else {
        1.0
    };
    Ok(ExitCurve {
        grid,
        values,
        jump,
        value_at_jump,
    })
}

impl ExitCurve {
    /// Area under the curve between `from` and 1, with the same piecewise
    /// linear model used by [`map_upper_bound`].
    pub fn area_from(&self, from: f64) -> f64 {
        let mut area = 0.0;
        for (x, y) in self.segments() {
            let (a, b) = (x.0.max(from), x.1);
            if a >= b {
                continue;
            }
            let ya = y.0 + (y.1 - y.0) * (a - x.0) / (x.1 - x.0);
            area += 0.5 * (ya + y.1) * (b - a);
        }
        area
    }

    /// Linear pieces right of the jump, left end first.
    fn segments(&self) -> Vec<((f64, f64), (f64, f64))> {
        let mut pts: Vec<(f64, f64)> = Vec::with_capacity(self.grid.len() + 1);
        if self.jump < 1.0 {
            pts.push((self.jump, self.value_at_jump));
        }
        pts.extend(
            self.grid
                .iter()
                .zip(&self.values)
                .filter(|(x, _)| **x > self.jump)
                .map(|(x, y)| (*x, *y)),
        );
        pts.windows(2)
            .filter(|w| w[1].0 > w[0].0)
            .map(|w| ((w[0].0, w[1].0), (w[0].1, w[1].1)))
            .collect()
    }

    /// Writes `epsilon,h_bp` rows at 6 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "epsilon,h_bp")?;
        for (x, y) in self.grid.iter().zip(&self.values) {
            writeln!(out, "{},{}", crate::fmt6(*x), crate::fmt6(*y))?;
        }
        Ok(())
    }
}

/// Result of the area-theorem bound.
#[derive(Clone, Debug)]
pub struct MapBound {
    pub epsilon: f64,
    pub design_rate: f64,
    pub bp_threshold: f64,
    /// Area right of `epsilon`; equals `design_rate` unless `reached` is false.
    pub area: f64,
    /// False when the whole curve right of the jump holds less area than the
    /// design rate, in which case `epsilon` is the BP threshold.
    pub reached: bool,
}

/// Walks the curve down from `ε = 1` accumulating trapezoid area until it
/// equals the design rate; the crossing inside the last cell is solved
/// exactly for the linear piece.
pub fn map_bound_from_curve(curve: &ExitCurve, design_rate: f64) -> MapBound {
    let mut area = 0.0;
    for ((x0, x1), (y0, y1)) in curve.segments().into_iter().rev() {
        let cell = 0.5 * (y0 + y1) * (x1 - x0);
        if area + cell >= design_rate {
            let need = design_rate - area;
            // ∫_x^{x1} of the line through (x0,y0),(x1,y1) equals `need`;
            // with t = x1 - x: y1 t - s t²/2 = need, s = slope.
            let s = (y1 - y0) / (x1 - x0);
            let t = if s.abs() < 1e-14 {
                need / y1
            } else {
                let disc = (y1 * y1 - 2.0 * s * need).max(0.0);
                (y1 - disc.sqrt()) / s
            };
            return MapBound {
                epsilon: (x1 - t).clamp(x0, x1),
                design_rate,
                bp_threshold: curve.jump,
                area: design_rate,
                reached: true,
            };
        }
        area += cell;
    }
    MapBound {
        epsilon: curve.jump,
        design_rate,
        bp_threshold: curve.jump,
        area,
        reached: false,
    }
}

/// Upper bound on the MAP threshold from the BP EXIT curve sampled with
/// grid spacing `step` (at most `1e-3`).
pub fn map_upper_bound(e: &EnsembleSpec, step: f64, opts: &DeOptions) -> Result<MapBound> {
    if step > 1e-3 {
        return Err(Error::InvalidEnsemble(format!(
            "grid step {step} too coarse for the area bound (need <= 1e-3)"
        )));
    }
    let curve = exit_curve(e, step, opts)?;
    Ok(map_bound_from_curve(&curve, e.design_rate()))
}
