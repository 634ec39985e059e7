//! Box-constrained extremization of one field component, as needed by the
//! tight decomposition.
//!
//! Stage 1 probes the sign of every free coordinate's partial derivative on a
//! grid of at least three points per coordinate. Coordinates whose sign never changes are pinned to the
//! minimizing end of their interval; if all are pinned the induced corner is
//! the exact optimum. Stage 2 handles the remaining coordinates with a dense
//! grid followed by coordinate descent, each line search being a grid scan
//! refined by golden-section search around each discrete local minimum.

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::Result;
use crate::system::VectorField;

/// Tuning for the tight-decomposition optimizer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TightOptions {
    /// Grid points per searched dimension.
    pub grid: usize,
    /// Golden-section bracket width at which a line search stops.
    pub tol: f64,
    /// Maximum coordinate-descent sweeps.
    pub max_sweeps: usize,
    /// Relative step for the sign probes.
    pub probe_step: f64,
    /// Approximate number of sign-probe points; spread as
    /// `clamp(budget^(1/k), 3, 17)` points per free coordinate.
    pub probe_budget: usize,
}

impl Default for TightOptions {
    fn default() -> Self {
        Self {
            grid: 9,
            tol: 1e-8,
            max_sweeps: 64,
            probe_step: 1e-6,
            probe_budget: 100,
        }
    }
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

#[derive(Clone, Copy)]
struct Free {
    /// Index into the concatenated `(y, z)` point.
    slot: usize,
    lo: f64,
    hi: f64,
}

type Buf = SmallVec<[f64; 8]>;

/// Objective `sense · F_i(y, z)` over a point stored as `(y, z)` concatenated.
struct Objective<'a> {
    field: &'a dyn VectorField,
    component: usize,
    n: usize,
    sense: f64,
    evals: usize,
}

impl Objective<'_> {
    #[inline]
    fn value(&mut self, point: &[f64]) -> Result<f64> {
        self.evals += 1;
        let (y, z) = point.split_at(self.n);
        Ok(self.sense * self.field.eval_component(self.component, y, z)?)
    }
}

/// Minimizes (`sense = 1`) or maximizes (`sense = -1`) `F_i(y, z)` over
/// `y_j ∈ [ylo_j, yhi_j]`, `z ∈ [zlo, zhi]` with `y_i` pinned to `pinned`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn extremize(
    field: &dyn VectorField,
    i: usize,
    pinned: f64,
    ylo: &[f64],
    yhi: &[f64],
    zlo: &[f64],
    zhi: &[f64],
    maximize: bool,
    opts: &TightOptions,
) -> Result<f64> {
    let n = ylo.len();
    let mut point: Buf = ylo.iter().chain(zlo).copied().collect();
    point[i] = pinned;
    let mut free: SmallVec<[Free; 8]> = SmallVec::new();
    for j in 0..n {
        if j != i && yhi[j] > ylo[j] {
            free.push(Free {
                slot: j,
                lo: ylo[j],
                hi: yhi[j],
            });
        }
    }
    for k in 0..zlo.len() {
        if zhi[k] > zlo[k] {
            free.push(Free {
                slot: n + k,
                lo: zlo[k],
                hi: zhi[k],
            });
        }
    }
    let mut obj = Objective {
        field,
        component: i,
        n,
        sense: if maximize { -1.0 } else { 1.0 },
        evals: 0,
    };
    if free.is_empty() {
        return Ok(obj.sense * obj.value(&point)?);
    }

    // Stage 1: sign probes on a p^k grid.
    let k = free.len();
    let p = probes_per_dim(opts.probe_budget, k);
    let mut pos = vec![false; k];
    let mut neg = vec![false; k];
    let mut probe: Buf = point.clone();
    let total = p.saturating_pow(k as u32);
    for idx in 0..total {
        let mut rem = idx;
        for f in &free {
            let digit = rem % p;
            rem /= p;
            probe[f.slot] = if digit + 1 == p {
                f.hi
            } else {
                f.lo + (f.hi - f.lo) * digit as f64 / (p - 1) as f64
            };
        }
        for (c, f) in free.iter().enumerate() {
            if pos[c] && neg[c] {
                continue;
            }
            let v = probe[f.slot];
            let h = opts.probe_step * v.abs().max(1.0);
            probe[f.slot] = v + h;
            let gp = obj.value(&probe)?;
            probe[f.slot] = v - h;
            let gm = obj.value(&probe)?;
            probe[f.slot] = v;
            let d = (gp - gm) / (2.0 * h);
            let eps = 1e-8 * (0.5 * (gp + gm)).abs().max(1.0);
            if d > eps {
                pos[c] = true;
            } else if d < -eps {
                neg[c] = true;
            }
        }
    }
    let mut search: SmallVec<[Free; 8]> = SmallVec::new();
    for (c, f) in free.iter().enumerate() {
        match (pos[c], neg[c]) {
            (true, true) => search.push(*f),
            (false, true) => point[f.slot] = f.hi,
            _ => point[f.slot] = f.lo,
        }
    }
    if search.is_empty() {
        return Ok(obj.sense * obj.value(&point)?);
    }

    // Stage 2: dense grid over the unstable coordinates (a single line search
    // already contains it in 1-D), then coordinate descent.
    let g = opts.grid.max(2);
    let mut best;
    if search.len() > 1 {
        let total = g.pow(search.len() as u32);
        let mut best_point = point.clone();
        best = f64::INFINITY;
        let mut trial = point.clone();
        for idx in 0..total {
            let mut rem = idx;
            for f in &search {
                let t = (rem % g) as f64 / (g - 1) as f64;
                rem /= g;
                trial[f.slot] = f.lo + t * (f.hi - f.lo);
            }
            let v = obj.value(&trial)?;
            if v < best {
                best = v;
                best_point.copy_from_slice(&trial);
            }
        }
        point = best_point;
    } else {
        best = obj.value(&point)?;
    }
    for _ in 0..opts.max_sweeps {
        let before = best;
        for f in &search {
            best = line_search(&mut obj, &mut point, *f, best, g, opts.tol)?;
        }
        if search.len() == 1 || before - best <= 1e-14 * best.abs().max(1.0) {
            break;
        }
    }
    Ok(obj.sense * best)
}

fn probes_per_dim(budget: usize, k: usize) -> usize {
    let p = (budget as f64).powf(1.0 / k as f64).floor() as usize;
    p.clamp(3, 17)
}

/// Golden-section search for a minimum on `[a, c]`; returns the better of the
/// two final interior points.
fn golden(
    obj: &mut Objective<'_>,
    point: &mut Buf,
    slot: usize,
    mut a: f64,
    mut c: f64,
    tol: f64,
) -> Result<(f64, f64)> {
    let mut x1 = c - INV_PHI * (c - a);
    let mut x2 = a + INV_PHI * (c - a);
    point[slot] = x1;
    let mut f1 = obj.value(point)?;
    point[slot] = x2;
    let mut f2 = obj.value(point)?;
    while c - a > tol {
        if f1 <= f2 {
            c = x2;
            x2 = x1;
            f2 = f1;
            x1 = c - INV_PHI * (c - a);
            point[slot] = x1;
            f1 = obj.value(point)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (c - a);
            point[slot] = x2;
            f2 = obj.value(point)?;
        }
    }
    Ok(if f1 <= f2 { (x1, f1) } else { (x2, f2) })
}

/// Minimizes along one coordinate; `point` is updated to the best location
/// found and its value returned. `current` is the value at the entry point.
fn line_search(obj: &mut Objective<'_>, point: &mut Buf, f: Free, current: f64, grid: usize, tol: f64) -> Result<f64> {
    let slot = f.slot;
    let mut best_v = current;
    let mut best_x = point[slot];
    let step = (f.hi - f.lo) / (grid - 1) as f64;
    let at = |j: usize| if j + 1 == grid { f.hi } else { f.lo + j as f64 * step };
    let mut vals = SmallVec::<[f64; 16]>::with_capacity(grid);
    for j in 0..grid {
        point[slot] = at(j);
        let v = obj.value(point)?;
        vals.push(v);
        if v < best_v {
            best_v = v;
            best_x = point[slot];
        }
    }
    // Refine around every discrete local minimum, not only the best one: an
    // interior optimum can hide between grid points whose values are worse
    // than an endpoint.
    for b in 0..grid {
        let left = b == 0 || vals[b] <= vals[b - 1];
        let right = b + 1 == grid || vals[b] <= vals[b + 1];
        if !(left && right) {
            continue;
        }
        let (x, v) = golden(
            obj,
            point,
            slot,
            at(b.saturating_sub(1)),
            at((b + 1).min(grid - 1)),
            tol,
        )?;
        if v < best_v {
            best_v = v;
            best_x = x;
        }
    }
    point[slot] = best_x;
    Ok(best_v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{presets, SystemDef};

    #[test]
    fn corner_case_is_exact() {
        // F1 = x1 x2 + w with x1 = 1 pinned: increasing in x2 and w.
        let s = presets::bilinear();
        let v = extremize(
            &s,
            0,
            1.0,
            &[1.0, 0.0],
            &[2.0, 1.0],
            &[0.0],
            &[0.25],
            false,
            &TightOptions::default(),
        )
        .unwrap();
        assert_eq!(v, 0.0);
        let v = extremize(
            &s,
            0,
            2.0,
            &[1.0, 0.0],
            &[2.0, 1.0],
            &[0.0],
            &[0.25],
            true,
            &TightOptions::default(),
        )
        .unwrap();
        assert_eq!(v, 2.25);
    }

    #[test]
    fn interior_minimum_found() {
        // F1 = (x2 - 0.3)^2 + sin(3 x2) over x2 ∈ [-1, 1]: brute force reference.
        let s = SystemDef::parse(&["(x2 - 0.3)^2 + sin(3*x2)", "0"], &[], &[]).unwrap();
        let v = extremize(
            &s,
            0,
            0.0,
            &[0.0, -1.0],
            &[0.0, 1.0],
            &[],
            &[],
            false,
            &TightOptions::default(),
        )
        .unwrap();
        let brute = (0..=200_000)
            .map(|k| -1.0 + 2.0 * k as f64 / 200_000.0)
            .map(|t| (t - 0.3f64).powi(2) + (3.0 * t).sin())
            .fold(f64::INFINITY, f64::min);
        assert!(v <= brute + 1e-12, "{v} vs {brute}");
        assert!(v >= brute - 1e-9);
    }

    #[test]
    fn interior_optimum_between_grid_points() {
        // max of x2^3 - x2 + w over x2 ∈ [-1.835, 1.143]: the local maximum at
        // -1/√3 beats the endpoint but sits between coarse grid points.
        let s = presets::cubic();
        let (lo, hi) = (-1.8354089861792091, 1.142909977219626);
        let v = extremize(
            &s,
            0,
            0.0,
            &[0.0, lo],
            &[0.0, hi],
            &[-1.0],
            &[1.0],
            true,
            &TightOptions::default(),
        )
        .unwrap();
        let r = 1.0 / 3f64.sqrt();
        assert!((v - (r - r.powi(3) + 1.0)).abs() < 1e-12, "{v}");
    }

    #[test]
    fn sign_change_between_coarse_probes() {
        // x2^3 - x2 on [-0.6, 1.8] has positive slope at -0.6, 0.6 and 1.8 but
        // its minimum is interior.
        let s = presets::cubic();
        let v = extremize(
            &s,
            0,
            0.0,
            &[0.0, -0.6],
            &[0.0, 1.8],
            &[-1.0],
            &[1.0],
            false,
            &TightOptions::default(),
        )
        .unwrap();
        let r = 1.0 / 3f64.sqrt();
        assert!((v - (r.powi(3) - r - 1.0)).abs() < 1e-12, "{v}");
    }

    #[test]
    fn probe_counts() {
        assert_eq!(probes_per_dim(100, 1), 17);
        assert_eq!(probes_per_dim(100, 2), 10);
        assert_eq!(probes_per_dim(100, 3), 4);
        assert_eq!(probes_per_dim(100, 6), 3);
    }

    #[test]
    fn two_dimensional_search() {
        // Non-separable saddle-free bowl with its minimum inside the box.
        let s = SystemDef::parse(&["(x2 - 0.2)^2 + (x3 + 0.1)^2 + 0.5*x2*x3", "0", "0"], &[], &[]).unwrap();
        let v = extremize(
            &s,
            0,
            0.0,
            &[0.0, -1.0, -1.0],
            &[0.0, 1.0, 1.0],
            &[],
            &[],
            false,
            &TightOptions::default(),
        )
        .unwrap();
        let mut brute = f64::INFINITY;
        for a in 0..=800 {
            for b in 0..=800 {
                let p = -1.0 + a as f64 / 400.0;
                let q = -1.0 + b as f64 / 400.0;
                brute = brute.min((p - 0.2f64).powi(2) + (q + 0.1f64).powi(2) + 0.5 * p * q);
            }
        }
        assert!(v <= brute + 1e-10, "{v} vs {brute}");
    }
}
