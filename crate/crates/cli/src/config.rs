//! Problem configuration: the TOML schema and its validation into library
//! types.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use mmreach::embed::{Direction, ReachSpec};
use mmreach::geometry::{Hyperrect, Matrix, Parallelotope, Polygon2D};
use mmreach::multiorder::{default_transform_family, DecompositionMethod, PlanEntry, TransformPlan, UnionInitialSet};
use mmreach::oracle::{InitMode, InitialSet, SampleConfig};
use mmreach::system::{SystemDef, VectorField};
use mmreach::Expr;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub system: SystemConfig,
    pub initial_set: InitialSetConfig,
    pub reach: ReachConfig,
    #[serde(default)]
    pub method: DecompositionMethod,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<PlanConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampling: Option<SamplingConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub n: usize,
    pub m: usize,
    /// One expression per state component over `x1..xn`, `w1..wm`.
    pub field: Vec<String>,
    #[serde(default)]
    pub w_lo: Vec<f64>,
    #[serde(default)]
    pub w_hi: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSetConfig {
    Box {
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    Parallelotope {
        shape: Vec<Vec<f64>>,
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    /// Convex hull of the listed points.
    Vertices {
        points: Vec<Vec<f64>>,
    },
    Union {
        members: Vec<MemberConfig>,
    },
}

impl InitialSetConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            InitialSetConfig::Box { .. } => "box",
            InitialSetConfig::Parallelotope { .. } => "parallelotope",
            InitialSetConfig::Vertices { .. } => "vertices",
            InitialSetConfig::Union { .. } => "union",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemberConfig {
    pub shape: Vec<Vec<f64>>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReachConfig {
    pub horizon: f64,
    pub dt: f64,
    #[serde(default)]
    pub direction: Direction,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Rotations,
}

/// Either a named family with a count, or explicit matrices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<Family>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrices: Option<Vec<Vec<Vec<f64>>>>,
    /// Per-matrix methods; defaults to `[method]` for every entry.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub methods: Option<Vec<DecompositionMethod>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    pub count: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_switch_count")]
    pub switch_count: usize,
    #[serde(default)]
    pub init_mode: InitMode,
    #[serde(default = "default_corner_prob")]
    pub corner_prob: f64,
    /// Step for the sampled trajectories; defaults to `reach.dt`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    /// Where backward verification draws start states.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search_box: Option<BoxConfig>,
}

fn default_switch_count() -> usize {
    SampleConfig::new(1, 0).switch_count
}

fn default_corner_prob() -> f64 {
    SampleConfig::new(1, 0).corner_prob
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxConfig {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    /// File name stem for everything written.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

/// Presets shipped with the binary.
pub const PRESETS: &[(&str, &str)] = &[
    ("example1", include_str!("../../../presets/example1.toml")),
    (
        "example1_backward",
        include_str!("../../../presets/example1_backward.toml"),
    ),
    ("example2", include_str!("../../../presets/example2.toml")),
    ("example3", include_str!("../../../presets/example3.toml")),
    ("hexagon", include_str!("../../../presets/hexagon.toml")),
    ("hexagon_overlap", include_str!("../../../presets/hexagon_overlap.toml")),
];

pub fn preset_source(name: &str) -> Result<&'static str> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, s)| *s)
        .ok_or_else(|| {
            let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
            anyhow!("unknown preset `{name}` (available: {})", names.join(", "))
        })
}

impl ProblemConfig {
    pub fn from_toml(src: &str) -> Result<Self> {
        toml::from_str(src).map_err(|e| anyhow!("schema error: {e}"))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        Self::from_toml(&src).with_context(|| format!("in {}", path.display()))
    }
}

/// Initial set after validation.
#[derive(Clone, Debug)]
pub enum Initial {
    Box(Hyperrect),
    Parallelotope(Parallelotope),
    Vertices(Vec<Vec<f64>>),
    Union(UnionInitialSet),
}

impl Initial {
    /// Points whose convex hull is the set (for fitting plan parallelotopes).
    pub fn vertices(&self) -> Result<Vec<Vec<f64>>> {
        Ok(match self {
            Initial::Box(b) => Parallelotope::from_box(b.clone()).vertices()?,
            Initial::Parallelotope(p) => p.vertices()?,
            Initial::Vertices(v) => v.clone(),
            Initial::Union(u) => {
                let mut all = Vec::new();
                for p in u.members() {
                    all.extend(p.vertices()?);
                }
                all
            }
        })
    }

    pub fn sampling_set(&self) -> Result<InitialSet> {
        Ok(match self {
            Initial::Box(b) => InitialSet::Box(b.clone()),
            Initial::Parallelotope(p) => InitialSet::Parallelotope(p.clone()),
            Initial::Vertices(v) => InitialSet::Polygon(hull(v)?),
            Initial::Union(u) => InitialSet::Union(u.clone()),
        })
    }

    /// Planar outlines (one per union member); empty unless `n = 2`.
    pub fn polygons(&self) -> Result<Vec<Polygon2D>> {
        Ok(match self {
            Initial::Box(b) if b.dim() == 2 => vec![Parallelotope::from_box(b.clone()).to_polygon()?],
            Initial::Parallelotope(p) if p.dim() == 2 => vec![p.to_polygon()?],
            Initial::Vertices(v) if v[0].len() == 2 => vec![hull(v)?],
            Initial::Union(u) if u.dim() == 2 => {
                u.members().iter().map(|p| p.to_polygon()).collect::<Result<_, _>>()?
            }
            _ => Vec::new(),
        })
    }
}

fn hull(points: &[Vec<f64>]) -> Result<Polygon2D> {
    let pts: Vec<[f64; 2]> = points.iter().map(|p| [p[0], p[1]]).collect();
    Ok(Polygon2D::convex_hull(&pts)?)
}

/// Which computation `reach` runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pipeline {
    Box,
    Parallelotope,
    Intersection,
    Union,
}

impl Pipeline {
    pub fn name(self) -> &'static str {
        match self {
            Pipeline::Box => "box",
            Pipeline::Parallelotope => "parallelotope",
            Pipeline::Intersection => "intersection",
            Pipeline::Union => "union",
        }
    }
}

/// Sampling settings after validation.
#[derive(Clone, Debug)]
pub struct Sampling {
    pub config: SampleConfig,
    pub spec: ReachSpec,
    pub search_box: Option<Hyperrect>,
}

/// A validated problem, ready to run.
#[derive(Clone, Debug)]
pub struct Problem {
    pub config: ProblemConfig,
    pub system: SystemDef,
    pub initial: Initial,
    pub spec: ReachSpec,
    pub plan: Option<TransformPlan>,
    pub sampling: Option<Sampling>,
    pub pipeline: Pipeline,
}

/// Command-line overrides applied before validation.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub dt: Option<f64>,
    pub samples: Option<usize>,
}

impl ProblemConfig {
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(dt) = o.dt {
            self.reach.dt = dt;
        }
        if let Some(s) = &mut self.sampling {
            if let Some(seed) = o.seed {
                s.seed = seed;
            }
            if let Some(count) = o.samples {
                s.count = count;
            }
        }
    }

    /// Schema-level checks and construction of every library object, so
    /// that running the problem cannot fail on malformed input.
    pub fn validate(&self) -> Result<Problem> {
        let system = self.build_system()?;
        let n = system.state_dim();
        let initial = self.build_initial(n).context("initial_set")?;
        let spec = ReachSpec::new(self.reach.horizon, self.reach.dt, self.reach.direction).context("reach")?;
        check_method(&self.method, n).context("method")?;
        let plan = self.build_plan(n, spec).context("plan")?;

        let pipeline = match (&initial, &plan) {
            (Initial::Union(_), Some(_)) => {
                bail!("plan: a union initial set is reached member by member and cannot take a plan")
            }
            (Initial::Union(_), None) => Pipeline::Union,
            (_, Some(_)) => Pipeline::Intersection,
            (Initial::Vertices(_), None) => {
                bail!("initial_set: a vertex set needs a [plan] to fit parallelotopes around it")
            }
            (Initial::Box(_), None) => Pipeline::Box,
            (Initial::Parallelotope(_), None) => Pipeline::Parallelotope,
        };
        if pipeline == Pipeline::Intersection && self.reach.direction == Direction::Backward {
            bail!("plan: intersection plans are forward only");
        }

        let sampling = match &self.sampling {
            None => None,
            Some(s) => Some(self.build_sampling(s, &initial, n).context("sampling")?),
        };
        Ok(Problem {
            config: self.clone(),
            system,
            initial,
            spec,
            plan,
            sampling,
            pipeline,
        })
    }

    fn build_system(&self) -> Result<SystemDef> {
        let s = &self.system;
        if s.n == 0 {
            bail!("system.n must be at least 1");
        }
        if s.field.len() != s.n {
            bail!("system.field has {} expressions but n = {}", s.field.len(), s.n);
        }
        if s.w_lo.len() != s.m || s.w_hi.len() != s.m {
            bail!(
                "system.w_lo / system.w_hi have lengths {} / {} but m = {}",
                s.w_lo.len(),
                s.w_hi.len(),
                s.m
            );
        }
        let exprs = s
            .field
            .iter()
            .enumerate()
            .map(|(i, src)| Expr::parse(src, s.n, s.m).with_context(|| format!("system.field[{i}] (F{})", i + 1)))
            .collect::<Result<Vec<_>>>()?;
        let dist = Hyperrect::new(s.w_lo.clone(), s.w_hi.clone()).context("system.w_lo / system.w_hi")?;
        Ok(SystemDef::new(exprs, dist)?)
    }

    fn build_initial(&self, n: usize) -> Result<Initial> {
        Ok(match &self.initial_set {
            InitialSetConfig::Box { lo, hi } => Initial::Box(make_box(lo, hi, n)?),
            InitialSetConfig::Parallelotope { shape, lo, hi } => {
                Initial::Parallelotope(make_parallelotope(shape, lo, hi, n)?)
            }
            InitialSetConfig::Vertices { points } => {
                if points.is_empty() {
                    bail!("vertex list is empty");
                }
                if let Some((k, p)) = points.iter().enumerate().find(|(_, p)| p.len() != n) {
                    bail!("points[{k}] has dimension {}, system has n = {n}", p.len());
                }
                if points.iter().flatten().any(|v| !v.is_finite()) {
                    bail!("points must be finite");
                }
                Initial::Vertices(points.clone())
            }
            InitialSetConfig::Union { members } => {
                let ps = members
                    .iter()
                    .enumerate()
                    .map(|(k, m)| {
                        make_parallelotope(&m.shape, &m.lo, &m.hi, n).with_context(|| format!("members[{k}]"))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Initial::Union(UnionInitialSet::new(ps)?)
            }
        })
    }

    fn build_plan(&self, n: usize, spec: ReachSpec) -> Result<Option<TransformPlan>> {
        let Some(p) = &self.plan else {
            return Ok(None);
        };
        let shapes = match (&p.family, &p.matrices) {
            (Some(Family::Rotations), None) => {
                if n != 2 {
                    bail!("the rotations family is planar, system has n = {n}");
                }
                let count = p.count.ok_or_else(|| anyhow!("family needs a count"))?;
                default_transform_family(count)?
            }
            (None, Some(ms)) => {
                if p.count.is_some() {
                    bail!("count only applies to a family");
                }
                ms.iter()
                    .enumerate()
                    .map(|(k, m)| make_matrix(m, n).with_context(|| format!("matrices[{k}]")))
                    .collect::<Result<Vec<_>>>()?
            }
            _ => bail!("give exactly one of `family` or `matrices`"),
        };
        let methods = match &p.methods {
            None => vec![self.method.clone(); shapes.len()],
            Some(ms) if ms.len() == shapes.len() => ms.clone(),
            Some(ms) => bail!("{} methods for {} matrices", ms.len(), shapes.len()),
        };
        for (k, m) in methods.iter().enumerate() {
            check_method(m, n).with_context(|| format!("methods[{k}]"))?;
        }
        let entries = shapes
            .into_iter()
            .zip(methods)
            .map(|(shape, method)| PlanEntry { shape, method })
            .collect();
        Ok(Some(TransformPlan::new(entries, spec)?))
    }

    fn build_sampling(&self, s: &SamplingConfig, initial: &Initial, n: usize) -> Result<Sampling> {
        let config = SampleConfig {
            count: s.count,
            seed: s.seed,
            switch_count: s.switch_count,
            init_mode: s.init_mode,
            corner_prob: s.corner_prob,
        };
        config.validate()?;
        let spec = ReachSpec::forward(self.reach.horizon, s.dt.unwrap_or(self.reach.dt)).context("dt")?;
        let search_box = s
            .search_box
            .as_ref()
            .map(|b| make_box(&b.lo, &b.hi, n).context("search_box"))
            .transpose()?;
        match self.reach.direction {
            Direction::Backward => {
                if search_box.is_none() {
                    bail!("backward verification needs a search_box");
                }
                if matches!(initial, Initial::Vertices(_) | Initial::Union(_)) {
                    bail!("backward verification supports box and parallelotope initial sets");
                }
            }
            Direction::Forward => {
                if search_box.is_some() {
                    bail!("search_box only applies to backward problems");
                }
                if matches!(initial, Initial::Vertices(_)) && n != 2 {
                    bail!("sampling a vertex set is supported for planar systems only");
                }
                if let Initial::Vertices(v) = initial {
                    hull(v)?;
                }
            }
        }
        Ok(Sampling {
            config,
            spec,
            search_box,
        })
    }
}

fn check_method(m: &DecompositionMethod, n: usize) -> Result<()> {
    match m {
        DecompositionMethod::JacobianSign { domain, .. } | DecompositionMethod::Monotone { domain, .. } => {
            if domain.dim() != n {
                bail!("domain has dimension {}, system has n = {n}", domain.dim());
            }
        }
        DecompositionMethod::ClosedForm { expressions } => {
            if expressions.len() != n {
                bail!("{} closed-form expressions for n = {n}", expressions.len());
            }
        }
        DecompositionMethod::Tight | DecompositionMethod::TightWith { .. } => {}
    }
    Ok(())
}

fn make_box(lo: &[f64], hi: &[f64], n: usize) -> Result<Hyperrect> {
    if lo.len() != n || hi.len() != n {
        bail!("lo / hi have lengths {} / {}, system has n = {n}", lo.len(), hi.len());
    }
    Ok(Hyperrect::new(lo.to_vec(), hi.to_vec())?)
}

fn make_matrix(rows: &[Vec<f64>], n: usize) -> Result<Matrix> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        bail!("shape must be {n}x{n}");
    }
    Ok(Matrix::from_rows(rows)?)
}

fn make_parallelotope(shape: &[Vec<f64>], lo: &[f64], hi: &[f64], n: usize) -> Result<Parallelotope> {
    let t = make_matrix(shape, n).context("shape")?;
    let coords = make_box(lo, hi, n)?;
    Parallelotope::new(t, coords).context("shape")
}
