//! Monte-Carlo ground truth: sampled trajectories under random
//! piecewise-constant disturbances, containment audits and area estimates.

use std::collections::HashSet;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embed::{Direction, ReachSpec};
use crate::error::{Error, Result};
use crate::geometry::{Hyperrect, Parallelotope, Polygon2D};
use crate::multiorder::UnionInitialSet;
use crate::ode::{step_grid, Rk4};
use crate::system::{SystemDef, VectorField};

/// Membership tolerance used by audits.
pub const AUDIT_TOL: f64 = 1e-9;
/// Maximum number of witnesses kept in a report.
pub const MAX_WITNESSES: usize = 10;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// Uniform over the initial set.
    #[default]
    Uniform,
    /// The vertices of the initial set first, then uniform samples.
    CornersPlusUniform,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleConfig {
    pub count: usize,
    #[serde(default)]
    pub seed: u64,
    /// Disturbance switches per horizon.
    #[serde(default = "default_switches")]
    pub switch_count: usize,
    #[serde(default)]
    pub init_mode: InitMode,
    /// Probability that a segment's disturbance level is a random corner of W.
    #[serde(default = "default_corner_prob")]
    pub corner_prob: f64,
}

fn default_switches() -> usize {
    4
}

fn default_corner_prob() -> f64 {
    0.2
}

impl SampleConfig {
    pub fn new(count: usize, seed: u64) -> Self {
        Self {
            count,
            seed,
            switch_count: default_switches(),
            init_mode: InitMode::Uniform,
            corner_prob: default_corner_prob(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::Invalid("sample count must be ≥ 1".into()));
        }
        if !(0.0..=1.0).contains(&self.corner_prob) {
            return Err(Error::Invalid(format!(
                "corner_prob {} not in [0, 1]",
                self.corner_prob
            )));
        }
        Ok(())
    }
}

/// Sets that initial states can be drawn from.
#[derive(Clone, Debug, PartialEq)]
pub enum InitialSet {
    Box(Hyperrect),
    Parallelotope(Parallelotope),
    /// Convex planar polygon.
    Polygon(Polygon2D),
    Union(UnionInitialSet),
}

impl InitialSet {
    pub fn dim(&self) -> usize {
        match self {
            InitialSet::Box(b) => b.dim(),
            InitialSet::Parallelotope(p) => p.dim(),
            InitialSet::Polygon(_) => 2,
            InitialSet::Union(u) => u.dim(),
        }
    }

    fn corners(&self) -> Result<Vec<Vec<f64>>> {
        Ok(match self {
            InitialSet::Box(b) => Parallelotope::from_box(b.clone()).vertices()?,
            InitialSet::Parallelotope(p) => p.vertices()?,
            InitialSet::Polygon(p) => p.vertices().iter().map(|v| v.to_vec()).collect(),
            InitialSet::Union(u) => {
                let mut all = Vec::new();
                for p in u.members() {
                    all.extend(p.vertices()?);
                }
                all
            }
        })
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        match self {
            InitialSet::Box(b) => uniform_box(rng, b),
            InitialSet::Parallelotope(p) => p.shape().mul_vec(&uniform_box(rng, p.coords())),
            InitialSet::Polygon(poly) => {
                let xs = poly.vertices().iter().map(|v| v[0]);
                let ys = poly.vertices().iter().map(|v| v[1]);
                let bb = Hyperrect::new(
                    vec![
                        xs.clone().fold(f64::INFINITY, f64::min),
                        ys.clone().fold(f64::INFINITY, f64::min),
                    ],
                    vec![
                        xs.fold(f64::NEG_INFINITY, f64::max),
                        ys.fold(f64::NEG_INFINITY, f64::max),
                    ],
                )
                .expect("ordered");
                if poly.area() <= 0.0 {
                    return poly.vertices()[0].to_vec();
                }
                loop {
                    let p = uniform_box(rng, &bb);
                    if poly.margin([p[0], p[1]]) >= 0.0 {
                        return p;
                    }
                }
            }
            InitialSet::Union(u) => {
                // Pick a member by volume, then accept with probability
                // 1 / (number of members containing the point).
                let vols: Vec<f64> = u.members().iter().map(Parallelotope::volume).collect();
                let total: f64 = vols.iter().sum();
                loop {
                    let mut r = rng.random::<f64>() * total;
                    let mut k = 0;
                    while k + 1 < vols.len() && r >= vols[k] {
                        r -= vols[k];
                        k += 1;
                    }
                    let p = &u.members()[k];
                    let x = p.shape().mul_vec(&uniform_box(rng, p.coords()));
                    let cover = u
                        .members()
                        .iter()
                        .filter(|q| q.contains_tol(&x, 0.0).unwrap_or(false))
                        .count()
                        .max(1);
                    if cover == 1 || rng.random::<f64>() * (cover as f64) < 1.0 {
                        return x;
                    }
                }
            }
        }
    }
}

fn uniform_box(rng: &mut ChaCha8Rng, b: &Hyperrect) -> Vec<f64> {
    b.lo()
        .iter()
        .zip(b.hi())
        .map(|(&l, &h)| if h > l { rng.random_range(l..=h) } else { l })
        .collect()
}

/// Endpoints of sampled trajectories.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Samples {
    pub points: Vec<Vec<f64>>,
    /// Trajectories dropped because they left the finite range.
    pub diverged: usize,
}

impl Samples {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let dim = self.points.first().map_or(0, Vec::len);
        let header: Vec<String> = (1..=dim).map(|k| format!("x{k}")).collect();
        writeln!(out, "{}", header.join(","))?;
        for p in &self.points {
            let row: Vec<String> = p.iter().map(|v| format!("{v:.17e}")).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// A random piecewise-constant disturbance on the integration grid.
struct Signal {
    /// Step index at which each segment starts (first is 0).
    starts: Vec<usize>,
    levels: Vec<Vec<f64>>,
}

impl Signal {
    fn draw(rng: &mut ChaCha8Rng, w: &Hyperrect, steps: usize, cfg: &SampleConfig) -> Self {
        let mut starts = vec![0];
        for _ in 0..cfg.switch_count {
            starts.push(rng.random_range(0..=steps));
        }
        starts.sort_unstable();
        let levels = starts
            .iter()
            .map(|_| {
                if rng.random::<f64>() < cfg.corner_prob {
                    w.lo()
                        .iter()
                        .zip(w.hi())
                        .map(|(&l, &h)| if rng.random::<bool>() { h } else { l })
                        .collect()
                } else {
                    uniform_box(rng, w)
                }
            })
            .collect();
        Self { starts, levels }
    }

    fn at(&self, step: usize) -> &[f64] {
        let k = self.starts.partition_point(|&s| s <= step);
        &self.levels[k.max(1) - 1]
    }
}

/// Integrate `field` from `x` under `signal`; `None` on divergence.
fn simulate(field: &dyn VectorField, x: &mut [f64], steps: &[f64], signal: &Signal) -> Option<()> {
    let mut rk = Rk4::new(x.len());
    for (k, h) in steps.iter().enumerate() {
        let w = signal.at(k);
        rk.step(x, *h, |y, out| {
            field.eval_into(y, w, out)?;
            if out.iter().all(|v| v.is_finite()) {
                Ok(())
            } else {
                Err(Error::Divergence { last_time: 0.0 })
            }
        })
        .ok()?;
        if x.iter().any(|v| !v.is_finite()) {
            return None;
        }
    }
    Some(())
}

fn sample_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Endpoints `Φ(t; x, w)` for random `x ∈ X0` and random piecewise-constant
/// `w`. A backward spec samples the time-reversed system, whose endpoints are
/// members of the backward reachable set.
pub fn sample_endpoints(s: &SystemDef, x0: &InitialSet, spec: &ReachSpec, cfg: &SampleConfig) -> Result<Samples> {
    spec.validate()?;
    cfg.validate()?;
    if x0.dim() != s.state_dim() {
        return Err(Error::Dimension(format!(
            "initial set has dimension {}, system has n = {}",
            x0.dim(),
            s.state_dim()
        )));
    }
    let reversed;
    let field: &SystemDef = match spec.direction {
        Direction::Forward => s,
        Direction::Backward => {
            reversed = s.reverse_time();
            &reversed
        }
    };
    let steps = step_grid(spec.horizon, spec.dt);
    let corners = match cfg.init_mode {
        InitMode::Uniform => Vec::new(),
        InitMode::CornersPlusUniform => x0.corners()?,
    };
    let w = field.disturbance().clone();
    let results: Vec<Option<Vec<f64>>> = (0..cfg.count)
        .into_par_iter()
        .map(|idx| {
            let mut rng = sample_rng(cfg.seed, idx);
            let mut x = match corners.get(idx) {
                Some(c) => c.clone(),
                None => x0.sample(&mut rng),
            };
            let signal = Signal::draw(&mut rng, &w, steps.len(), cfg);
            simulate(field, &mut x, &steps, &signal).map(|_| x)
        })
        .collect();
    let diverged = results.iter().filter(|r| r.is_none()).count();
    Ok(Samples {
        points: results.into_iter().flatten().collect(),
        diverged,
    })
}

/// Regions that audits test membership in.
#[derive(Clone, Debug, PartialEq)]
pub enum Region {
    Box(Hyperrect),
    Parallelotope(Parallelotope),
    Polygon(Polygon2D),
    Union(Vec<Region>),
}

impl Region {
    /// Signed distance-like margin in the region's native coordinates:
    /// positive inside, negative outside.
    pub fn margin(&self, x: &[f64]) -> f64 {
        match self {
            Region::Box(b) => b.margin(x),
            Region::Parallelotope(p) => p.margin(x),
            Region::Polygon(p) => p.margin([x[0], x[1]]),
            Region::Union(rs) => rs.iter().map(|r| r.margin(x)).fold(f64::NEG_INFINITY, f64::max),
        }
    }

    pub fn dim(&self) -> Option<usize> {
        match self {
            Region::Box(b) => Some(b.dim()),
            Region::Parallelotope(p) => Some(p.dim()),
            Region::Polygon(_) => Some(2),
            Region::Union(rs) => rs.first().and_then(Region::dim),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub point: Vec<f64>,
    pub margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContainmentReport {
    pub total: usize,
    pub violations: usize,
    /// Smallest margin over all points (negative means outside).
    pub worst_margin: f64,
    pub witnesses: Vec<Witness>,
}

impl ContainmentReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Check every point against `region` with tolerance [`AUDIT_TOL`].
pub fn audit_containment(points: &[Vec<f64>], region: &Region) -> Result<ContainmentReport> {
    if let (Some(p), Some(d)) = (points.first(), region.dim()) {
        if p.len() != d {
            return Err(Error::Dimension(format!(
                "points have dimension {}, region has {d}",
                p.len()
            )));
        }
    }
    let margins: Vec<f64> = points.par_iter().map(|p| region.margin(p)).collect();
    let mut report = ContainmentReport {
        total: points.len(),
        violations: 0,
        worst_margin: f64::INFINITY,
        witnesses: Vec::new(),
    };
    for (p, &m) in points.iter().zip(&margins) {
        report.worst_margin = report.worst_margin.min(m);
        if m < -AUDIT_TOL || m.is_nan() {
            report.violations += 1;
            if report.witnesses.len() < MAX_WITNESSES {
                report.witnesses.push(Witness {
                    point: p.clone(),
                    margin: m,
                });
            }
        }
    }
    Ok(report)
}

/// Area covered by grid cells of side `cell` that contain at least one point.
pub fn occupancy_area(points: &[Vec<f64>], cell: f64) -> Result<f64> {
    if !(cell > 0.0 && cell.is_finite()) {
        return Err(Error::Invalid(format!("cell size must be positive, got {cell}")));
    }
    let mut occupied = HashSet::with_capacity(points.len() / 4);
    for p in points {
        if p.len() != 2 {
            return Err(Error::Dimension(format!(
                "occupancy needs planar points, got {}",
                p.len()
            )));
        }
        occupied.insert(((p[0] / cell).floor() as i64, (p[1] / cell).floor() as i64));
    }
    Ok(occupied.len() as f64 * cell * cell)
}

/// Start states in `search_box` whose forward trajectory, under a random
/// disturbance signal, ends in `x0` at `spec.horizon`.
pub fn backward_witnesses(
    s: &SystemDef,
    x0: &Parallelotope,
    spec: &ReachSpec,
    cfg: &SampleConfig,
    search_box: &Hyperrect,
) -> Result<Vec<Vec<f64>>> {
    spec.validate()?;
    cfg.validate()?;
    if search_box.dim() != s.state_dim() || x0.dim() != s.state_dim() {
        return Err(Error::Dimension(
            "search box, target set and system disagree in dimension".into(),
        ));
    }
    let steps = step_grid(spec.horizon, spec.dt);
    let w = s.disturbance().clone();
    let found: Vec<Option<Vec<f64>>> = (0..cfg.count)
        .into_par_iter()
        .map(|idx| {
            let mut rng = sample_rng(cfg.seed, idx);
            let start = uniform_box(&mut rng, search_box);
            let signal = Signal::draw(&mut rng, &w, steps.len(), cfg);
            let mut x = start.clone();
            simulate(s, &mut x, &steps, &signal)?;
            x0.contains_tol(&x, 0.0).ok()?.then_some(start)
        })
        .collect();
    Ok(found.into_iter().flatten().collect())
}

/// Monte-Carlo volume of an intersection of parallelotopes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolumeEstimate {
    pub volume: f64,
    /// Half-width of the 95% confidence interval.
    pub ci95: f64,
    pub samples: usize,
}

/// Sample uniformly in the smallest member and count points inside all
/// others.
pub fn intersection_volume_mc(sets: &[Parallelotope], samples: usize, seed: u64) -> Result<VolumeEstimate> {
    let Some(smallest) = sets.iter().min_by(|a, b| a.volume().total_cmp(&b.volume())) else {
        return Err(Error::Invalid("no sets to intersect".into()));
    };
    if samples == 0 {
        return Err(Error::Invalid("sample count must be ≥ 1".into()));
    }
    let hits = (0..samples)
        .into_par_iter()
        .filter(|&idx| {
            let mut rng = sample_rng(seed, idx);
            let x = smallest.shape().mul_vec(&uniform_box(&mut rng, smallest.coords()));
            sets.iter().all(|p| p.margin(&x) >= -AUDIT_TOL)
        })
        .count();
    let p = hits as f64 / samples as f64;
    let v = smallest.volume();
    Ok(VolumeEstimate {
        volume: v * p,
        ci95: 1.96 * v * (p * (1.0 - p) / samples as f64).sqrt(),
        samples,
    })
}
