//! Parallelotope reachability through linear changes of coordinates,
//! intersections across several transforms, and unions over split initial
//! sets.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decomp::{
    closed_form_from_str, jacobian_sign_decomposition, monotone_decomposition, tight_decomposition_with, Decomposition,
    TightOptions,
};
use crate::embed::{backward_reach_box, forward_reach_box, Direction, ReachSpec};
use crate::error::{Error, Result};
use crate::geometry::{bounding_coords, clip_intersection_2d, Hyperrect, Matrix, Parallelotope, Polygon2D};
use crate::oracle::{intersection_volume_mc, VolumeEstimate};
use crate::system::{SystemDef, VectorField};

/// How to build the decomposition of a (transformed) system.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DecompositionMethod {
    #[default]
    Tight,
    TightWith {
        options: TightOptions,
    },
    /// Sign sampling over `domain` (in the coordinates of the system being
    /// decomposed).
    JacobianSign {
        domain: Hyperrect,
        #[serde(default = "default_samples")]
        samples: usize,
        #[serde(default)]
        seed: u64,
    },
    Monotone {
        domain: Hyperrect,
        #[serde(default = "default_samples")]
        samples: usize,
        #[serde(default)]
        seed: u64,
    },
    /// Expressions over `x, w, xh, wh`, one per state component.
    ClosedForm {
        expressions: Vec<String>,
    },
}

fn default_samples() -> usize {
    1000
}

impl DecompositionMethod {
    pub fn name(&self) -> &'static str {
        match self {
            DecompositionMethod::Tight | DecompositionMethod::TightWith { .. } => "tight",
            DecompositionMethod::JacobianSign { .. } => "jacobian_sign",
            DecompositionMethod::Monotone { .. } => "monotone",
            DecompositionMethod::ClosedForm { .. } => "closed_form",
        }
    }
}

pub fn build_decomposition(field: Arc<dyn VectorField>, method: &DecompositionMethod) -> Result<Decomposition> {
    match method {
        DecompositionMethod::Tight => Ok(tight_decomposition_with(field, TightOptions::default())),
        DecompositionMethod::TightWith { options } => Ok(tight_decomposition_with(field, *options)),
        DecompositionMethod::JacobianSign { domain, samples, seed } => {
            jacobian_sign_decomposition(field, domain, *samples, *seed)
        }
        DecompositionMethod::Monotone { domain, samples, seed } => {
            monotone_decomposition(field, domain, *samples, *seed)
        }
        DecompositionMethod::ClosedForm { expressions } => {
            let refs: Vec<&str> = expressions.iter().map(String::as_str).collect();
            closed_form_from_str(field, &refs)
        }
    }
}

/// One shape matrix of a plan with its decomposition method.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub shape: Matrix,
    #[serde(default)]
    pub method: DecompositionMethod,
}

/// Transforms to apply, sharing one reach specification.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransformPlan {
    entries: Vec<PlanEntry>,
    spec: ReachSpec,
}

impl TransformPlan {
    pub fn new(entries: Vec<PlanEntry>, spec: ReachSpec) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Invalid("transform plan is empty".into()));
        }
        let n = entries[0].shape.dim();
        for (k, e) in entries.iter().enumerate() {
            if e.shape.dim() != n {
                return Err(Error::Dimension(format!(
                    "plan entry {} is {}x{}, expected {n}x{n}",
                    k + 1,
                    e.shape.dim(),
                    e.shape.dim()
                )));
            }
            e.shape
                .inverse()
                .map_err(|err| Error::Geometry(format!("plan entry {}: {err}", k + 1)))?;
        }
        spec.validate()?;
        Ok(Self { entries, spec })
    }

    /// All transforms with the same method.
    pub fn uniform(shapes: Vec<Matrix>, method: DecompositionMethod, spec: ReachSpec) -> Result<Self> {
        Self::new(
            shapes
                .into_iter()
                .map(|shape| PlanEntry {
                    shape,
                    method: method.clone(),
                })
                .collect(),
            spec,
        )
    }

    pub fn entries(&self) -> &[PlanEntry] {
        &self.entries
    }

    pub fn spec(&self) -> &ReachSpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// A union of parallelotopes, kept as a list (no hull is taken).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnionInitialSet {
    members: Vec<Parallelotope>,
}

impl UnionInitialSet {
    pub fn new(members: Vec<Parallelotope>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::Invalid("union needs at least one member".into()));
        }
        let n = members[0].dim();
        if members.iter().any(|p| p.dim() != n) {
            return Err(Error::Dimension("union members differ in dimension".into()));
        }
        Ok(Self { members })
    }

    pub fn members(&self) -> &[Parallelotope] {
        &self.members
    }

    pub fn dim(&self) -> usize {
        self.members[0].dim()
    }

    pub fn contains_tol(&self, x: &[f64], tol: f64) -> Result<bool> {
        for p in &self.members {
            if p.contains_tol(x, tol)? {
                return Ok(true);
            }
        }
        Ok(false)
    }
}

/// Over-approximate the forward (or backward) reachable set of a
/// parallelotope by simulating the embedding of the transformed system in its
/// own coordinates.
pub fn reach_parallelotope(
    s: &SystemDef,
    x0: &Parallelotope,
    method: &DecompositionMethod,
    spec: &ReachSpec,
) -> Result<Parallelotope> {
    if x0.dim() != s.state_dim() {
        return Err(Error::Dimension(format!(
            "initial set has dimension {}, system has n = {}",
            x0.dim(),
            s.state_dim()
        )));
    }
    let ts = s.transform(x0.shape())?;
    let coords = match spec.direction {
        Direction::Forward => {
            let d = build_decomposition(Arc::new(ts), method)?;
            forward_reach_box(&d, x0.coords(), spec)?
        }
        Direction::Backward => {
            let d = build_decomposition(Arc::new(ts.reverse_time()), method)?;
            backward_reach_box(&d, x0.coords(), spec)?
        }
    };
    Parallelotope::new(x0.shape().clone(), coords)
}

/// Output of [`reach_intersection`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntersectionResult {
    /// One over-approximation per plan entry, in plan order.
    pub parallelotopes: Vec<Parallelotope>,
    /// Initial parallelotopes fitted around the vertex set.
    pub initial: Vec<Parallelotope>,
    /// Intersection of all over-approximations (planar systems only).
    pub intersection: Option<Polygon2D>,
    /// `(k, area of the intersection of the first k)` for planar systems.
    pub area_curve: Vec<(usize, f64)>,
    /// Monte-Carlo intersection volume for `n > 2`.
    pub volume: Option<VolumeEstimate>,
}

/// Samples used for the intersection volume when `n > 2`.
pub const VOLUME_SAMPLES: usize = 1_000_000;

/// Apply every transform of `plan` to the polytope with the given vertices and
/// intersect the results.
pub fn reach_intersection(s: &SystemDef, plan: &TransformPlan, vertices: &[Vec<f64>]) -> Result<IntersectionResult> {
    let n = s.state_dim();
    if plan.entries()[0].shape.dim() != n {
        return Err(Error::Dimension(format!(
            "plan matrices are {0}x{0}, system has n = {n}",
            plan.entries()[0].shape.dim()
        )));
    }
    let initial = plan
        .entries()
        .iter()
        .map(|e| Parallelotope::new(e.shape.clone(), bounding_coords(vertices, &e.shape)?))
        .collect::<Result<Vec<_>>>()?;
    let parallelotopes = initial
        .par_iter()
        .zip(plan.entries().par_iter())
        .map(|(p0, e)| reach_parallelotope(s, p0, &e.method, plan.spec()))
        .collect::<Result<Vec<_>>>()?;
    let mut result = IntersectionResult {
        parallelotopes,
        initial,
        intersection: None,
        area_curve: Vec::new(),
        volume: None,
    };
    if n == 2 {
        let mut current: Option<Polygon2D> = None;
        for (k, p) in result.parallelotopes.iter().enumerate() {
            let poly = p.to_polygon()?;
            let next = match current {
                None => Some(poly),
                Some(c) => clip_intersection_2d(&[c, poly])?,
            };
            let Some(next) = next else {
                return Err(Error::Integrity(format!(
                    "intersection of the first {} over-approximations is empty",
                    k + 1
                )));
            };
            result.area_curve.push((k + 1, next.area()));
            current = Some(next);
        }
        result.intersection = current;
    } else {
        result.volume = Some(intersection_volume_mc(&result.parallelotopes, VOLUME_SAMPLES, 0)?);
    }
    Ok(result)
}

/// Reach each member of a union separately.
pub fn reach_union(
    s: &SystemDef,
    u: &UnionInitialSet,
    method: &DecompositionMethod,
    spec: &ReachSpec,
) -> Result<Vec<Parallelotope>> {
    u.members()
        .par_iter()
        .map(|p| reach_parallelotope(s, p, method, spec))
        .collect()
}

/// `k` planar rotations by `πj/(2k)`, `j = 0..k`.
pub fn default_transform_family(count: usize) -> Result<Vec<Matrix>> {
    if count == 0 {
        return Err(Error::Invalid("transform family needs count ≥ 1".into()));
    }
    Ok((0..count)
        .map(|j| {
            if j == 0 {
                Matrix::identity(2)
            } else {
                Matrix::rotation(PI * j as f64 / (2.0 * count as f64))
            }
        })
        .collect())
}

/// Regular hexagon with vertices `(1 + cos(iπ/3), 1 + sin(iπ/3))`.
pub mod hexagon {
    use std::f64::consts::PI;

    use super::*;

    pub const CENTER: [f64; 2] = [1.0, 1.0];

    pub fn vertices() -> Vec<Vec<f64>> {
        (0..6)
            .map(|i| {
                let a = i as f64 * PI / 3.0;
                vec![CENTER[0] + a.cos(), CENTER[1] + a.sin()]
            })
            .collect()
    }

    pub fn polygon() -> Polygon2D {
        Polygon2D::new(vertices().iter().map(|v| [v[0], v[1]]).collect()).expect("hexagon is convex")
    }

    /// Shape matrix of the `i`-th (1-based) rhombus of the disjoint split.
    pub fn disjoint_shape(i: usize) -> Matrix {
        let a = 2.0 * PI * (i as f64 - 1.0) / 3.0;
        let b = 2.0 * PI * i as f64 / 3.0;
        Matrix::from_rows(&[vec![-a.cos(), b.cos()], vec![-a.sin(), b.sin()]]).expect("2x2")
    }

    /// Three rhombi meeting at the center that tile the hexagon.
    pub fn disjoint_split() -> UnionInitialSet {
        let members = (1..=3)
            .map(|i| {
                let t = disjoint_shape(i);
                let c = t.inverse().expect("nonsingular").mul_vec(&CENTER);
                let coords = Hyperrect::new(vec![c[0] - 1.0, c[1]], vec![c[0], c[1] + 1.0]).expect("ordered");
                Parallelotope::new(t, coords).expect("valid")
            })
            .collect();
        UnionInitialSet::new(members).expect("nonempty")
    }

    /// Three central rectangles, rotated by 0, π/3 and 2π/3, whose union is
    /// the hexagon and which overlap pairwise.
    pub fn overlapping_split() -> UnionInitialSet {
        let h = 3f64.sqrt() / 2.0;
        let members = (0..3)
            .map(|k| {
                let t = Matrix::rotation(k as f64 * PI / 3.0);
                let c = t.inverse().expect("nonsingular").mul_vec(&CENTER);
                let coords = Hyperrect::new(vec![c[0] - 0.5, c[1] - h], vec![c[0] + 0.5, c[1] + h]).expect("ordered");
                Parallelotope::new(t, coords).expect("valid")
            })
            .collect();
        UnionInitialSet::new(members).expect("nonempty")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomp::tight_decomposition;
    use crate::system::presets;

    fn spec() -> ReachSpec {
        ReachSpec::forward(1.0, 0.01).unwrap()
    }

    #[test]
    fn family_examples() {
        assert_eq!(default_transform_family(1).unwrap(), vec![Matrix::identity(2)]);
        let f = default_transform_family(2).unwrap();
        assert_eq!(f[0], Matrix::identity(2));
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!((f[1].get(0, 0) - r).abs() < 1e-15 && (f[1].get(1, 0) - r).abs() < 1e-15);
        let f = default_transform_family(10).unwrap();
        assert_eq!(f.len(), 10);
        // Angle between first columns modulo π/2 (column cones repeat with that period).
        for a in 0..10 {
            for b in a + 1..10 {
                let ta = f[a].get(1, 0).atan2(f[a].get(0, 0));
                let tb = f[b].get(1, 0).atan2(f[b].get(0, 0));
                let d = (tb - ta).rem_euclid(PI / 2.0);
                let d = d.min(PI / 2.0 - d);
                assert!(d >= PI / 20.0 - 1e-12, "{a} {b} {d}");
            }
        }
        assert!(default_transform_family(0).is_err());
    }

    #[test]
    fn plan_validation() {
        let singular = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        assert!(matches!(
            TransformPlan::uniform(vec![singular], DecompositionMethod::Tight, spec()),
            Err(Error::Geometry(_))
        ));
        assert!(TransformPlan::uniform(vec![], DecompositionMethod::Tight, spec()).is_err());
    }

    #[test]
    fn identity_reduces_to_box_reach() {
        let s = presets::bilinear();
        let x0 = Hyperrect::new(vec![0.0, -0.25], vec![0.75, 0.25]).unwrap();
        let b = forward_reach_box(&tight_decomposition(Arc::new(s.clone())), &x0, &spec()).unwrap();
        let p = reach_parallelotope(&s, &Parallelotope::from_box(x0), &DecompositionMethod::Tight, &spec()).unwrap();
        for (u, v) in p
            .coords()
            .lo()
            .iter()
            .chain(p.coords().hi())
            .zip(b.lo().iter().chain(b.hi()))
        {
            assert!((u - v).abs() <= 1e-12);
        }
    }

    #[test]
    fn hexagon_splits() {
        let hex = hexagon::polygon();
        assert!((hex.area() - 3.0 * 3f64.sqrt() / 2.0).abs() < 1e-12);
        let d = hexagon::disjoint_split();
        let total: f64 = d.members().iter().map(|p| p.volume()).sum();
        assert!((total - hex.area()).abs() < 1e-12);
        for p in d.members() {
            for v in p.vertices().unwrap() {
                assert!(hex.margin([v[0], v[1]]) > -1e-12, "{v:?}");
            }
        }
        // The first rhombus has vertices at the center and at angles 0, π/3, 2π/3.
        let v1 = d.members()[0].to_polygon().unwrap();
        let want = Polygon2D::new(vec![
            [1.0, 1.0],
            [2.0, 1.0],
            [1.5, 1.0 + 3f64.sqrt() / 2.0],
            [0.5, 1.0 + 3f64.sqrt() / 2.0],
        ])
        .unwrap();
        assert!(v1.approx_eq(&want, 1e-12), "{v1:?}");

        let o = hexagon::overlapping_split();
        for p in o.members() {
            for v in p.vertices().unwrap() {
                assert!(hex.margin([v[0], v[1]]) > -1e-12, "{v:?}");
            }
        }
        for a in 0..3 {
            for b in a + 1..3 {
                let pa = o.members()[a].to_polygon().unwrap();
                let pb = o.members()[b].to_polygon().unwrap();
                let i = clip_intersection_2d(&[pa, pb]).unwrap().unwrap();
                assert!(i.area() > 0.1);
            }
        }
        // Every hexagon vertex belongs to the union, and so does a dense grid.
        for v in hexagon::vertices() {
            assert!(o.contains_tol(&v, 1e-9).unwrap());
        }
        for a in 0..=100 {
            for b in 0..=100 {
                let p = [a as f64 / 50.0, b as f64 / 50.0];
                if hex.margin(p) >= 0.0 {
                    assert!(o.contains_tol(&p, 1e-9).unwrap(), "{p:?}");
                    assert!(d.contains_tol(&p, 1e-9).unwrap(), "{p:?}");
                }
            }
        }
    }

    #[test]
    fn single_member_union_matches() {
        let s = presets::trigonometric();
        let p = hexagon::disjoint_split().members()[0].clone();
        let u = UnionInitialSet::new(vec![p.clone()]).unwrap();
        let a = reach_union(&s, &u, &DecompositionMethod::Tight, &spec()).unwrap();
        let b = reach_parallelotope(&s, &p, &DecompositionMethod::Tight, &spec()).unwrap();
        assert_eq!(a, vec![b]);
    }

    #[test]
    fn single_identity_plan_area_is_box_area() {
        let s = presets::bilinear();
        let verts = vec![vec![0.0, -0.25], vec![0.75, -0.25], vec![0.75, 0.25], vec![0.0, 0.25]];
        let plan = TransformPlan::uniform(vec![Matrix::identity(2)], DecompositionMethod::Tight, spec()).unwrap();
        let r = reach_intersection(&s, &plan, &verts).unwrap();
        let b = forward_reach_box(
            &tight_decomposition(Arc::new(s)),
            &Hyperrect::new(vec![0.0, -0.25], vec![0.75, 0.25]).unwrap(),
            &spec(),
        )
        .unwrap();
        assert_eq!(r.area_curve.len(), 1);
        assert!((r.area_curve[0].1 - b.volume()).abs() < 1e-12);
    }
}
