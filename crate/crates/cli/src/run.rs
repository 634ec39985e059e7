//! Running a validated problem: reach computation, sampling audits and the
//! result document.

use std::sync::Arc;

use anyhow::{Context, Result};
use mmreach::decomp::Construction;
use mmreach::embed::{backward_reach_box, forward_reach_box, Direction};
use mmreach::geometry::{Hyperrect, Matrix, Parallelotope, Polygon2D};
use mmreach::multiorder::{
    build_decomposition, reach_intersection, reach_parallelotope, reach_union, DecompositionMethod,
};
use mmreach::oracle::{audit_containment, backward_witnesses, sample_endpoints, Region, VolumeEstimate};
use mmreach::system::{SystemDef, VectorField};

use crate::config::{Initial, Pipeline, Problem};
use crate::output::{AreaPoint, BoxOut, Meta, MethodInfo, ParallelotopeOut, PolygonOut, RegionReport, ResultDoc};

/// Everything `reach` computes.
#[derive(Clone, Debug)]
pub struct Computed {
    pub boxes: Vec<(String, Hyperrect)>,
    pub parallelotopes: Vec<(String, Parallelotope)>,
    pub intersection: Option<Polygon2D>,
    pub area_curve: Vec<(usize, f64)>,
    pub volume: Option<VolumeEstimate>,
    pub requested: Vec<DecompositionMethod>,
    pub constructions: Vec<Construction>,
}

/// The decomposition that a reach in frame `shape` builds, for reporting.
fn construction(s: &SystemDef, shape: &Matrix, method: &DecompositionMethod, dir: Direction) -> Result<Construction> {
    let ts = s.transform(shape)?;
    let field: Arc<dyn VectorField> = match dir {
        Direction::Forward => Arc::new(ts),
        Direction::Backward => Arc::new(ts.reverse_time()),
    };
    Ok(build_decomposition(field, method)?.construction().clone())
}

pub fn compute(p: &Problem) -> Result<Computed> {
    let s = &p.system;
    let method = &p.config.method;
    let dir = p.spec.direction;
    let mut out = Computed {
        boxes: Vec::new(),
        parallelotopes: Vec::new(),
        intersection: None,
        area_curve: Vec::new(),
        volume: None,
        requested: vec![method.clone()],
        constructions: Vec::new(),
    };
    match (&p.initial, p.pipeline) {
        (Initial::Box(b), Pipeline::Box) => {
            let field: Arc<dyn VectorField> = match dir {
                Direction::Forward => Arc::new(s.clone()),
                Direction::Backward => Arc::new(s.reverse_time()),
            };
            let d = build_decomposition(field, method)?;
            let r = match dir {
                Direction::Forward => forward_reach_box(&d, b, &p.spec)?,
                Direction::Backward => backward_reach_box(&d, b, &p.spec)?,
            };
            out.constructions.push(d.construction().clone());
            out.boxes.push(("box".into(), r));
        }
        (Initial::Parallelotope(x0), Pipeline::Parallelotope) => {
            out.constructions.push(construction(s, x0.shape(), method, dir)?);
            let r = reach_parallelotope(s, x0, method, &p.spec)?;
            out.parallelotopes.push(("P1".into(), r));
        }
        (Initial::Union(u), Pipeline::Union) => {
            for m in u.members() {
                out.constructions.push(construction(s, m.shape(), method, dir)?);
            }
            let rs = reach_union(s, u, method, &p.spec)?;
            for (k, r) in rs.into_iter().enumerate() {
                out.parallelotopes.push((format!("P{}", k + 1), r));
            }
        }
        (initial, Pipeline::Intersection) => {
            let plan = p.plan.as_ref().expect("intersection pipeline has a plan");
            out.requested = plan.entries().iter().map(|e| e.method.clone()).collect();
            for e in plan.entries() {
                out.constructions.push(construction(s, &e.shape, &e.method, dir)?);
            }
            let r = reach_intersection(s, plan, &initial.vertices()?)?;
            for (k, q) in r.parallelotopes.into_iter().enumerate() {
                out.parallelotopes.push((format!("P{}", k + 1), q));
            }
            out.intersection = r.intersection;
            out.area_curve = r.area_curve;
            out.volume = r.volume;
        }
        _ => unreachable!("pipeline is derived from the initial set"),
    }
    // Axis-aligned hulls of the parallelotopes, for quick inspection.
    if s.state_dim() <= 10 {
        for (label, q) in &out.parallelotopes {
            out.boxes
                .push((format!("{label} hull"), Hyperrect::hull(&q.vertices()?)?));
        }
    }
    Ok(out)
}

/// Regions that sampled points are audited against, scaled by `shrink`.
pub fn regions(c: &Computed, pipeline: Pipeline, shrink: f64) -> Vec<(String, Region)> {
    let mut rs = Vec::new();
    if pipeline == Pipeline::Box {
        for (label, b) in &c.boxes {
            rs.push((label.clone(), Region::Box(b.scaled(shrink))));
        }
    }
    let ps: Vec<Region> = c
        .parallelotopes
        .iter()
        .map(|(_, q)| Region::Parallelotope(q.scaled(shrink)))
        .collect();
    if pipeline == Pipeline::Union {
        rs.push(("union".into(), Region::Union(ps)));
    } else {
        for ((label, _), r) in c.parallelotopes.iter().zip(ps) {
            rs.push((label.clone(), r));
        }
    }
    if let Some(poly) = &c.intersection {
        rs.push(("intersection".into(), Region::Polygon(poly.scaled(shrink))));
    }
    rs
}

/// Sample the problem and audit every region.
pub fn audit(p: &Problem, c: &Computed, shrink: f64) -> Result<Vec<RegionReport>> {
    let sampling = p.sampling.as_ref().context("verification needs a [sampling] section")?;
    let (points, diverged) = match p.spec.direction {
        Direction::Forward => {
            let set = p.initial.sampling_set()?;
            let s = sample_endpoints(&p.system, &set, &sampling.spec, &sampling.config)?;
            (s.points, s.diverged)
        }
        Direction::Backward => {
            let target = match &p.initial {
                Initial::Box(b) => Parallelotope::from_box(b.clone()),
                Initial::Parallelotope(q) => q.clone(),
                _ => unreachable!("validated"),
            };
            let search = sampling.search_box.as_ref().expect("validated");
            let w = backward_witnesses(&p.system, &target, &sampling.spec, &sampling.config, search)?;
            (w, 0)
        }
    };
    regions(c, p.pipeline, shrink)
        .iter()
        .map(|(label, r)| Ok(RegionReport::new(label, &audit_containment(&points, r)?, diverged)))
        .collect()
}

pub struct DocContext<'a> {
    pub command: &'a str,
    pub source: &'a str,
    pub timestamp: u64,
    pub shrink: Option<f64>,
}

pub fn document(p: &Problem, c: &Computed, ctx: &DocContext, reports: Option<Vec<RegionReport>>) -> Result<ResultDoc> {
    Ok(ResultDoc {
        meta: Meta {
            tool: "mmreach".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: ctx.command.into(),
            timestamp: ctx.timestamp,
            source: ctx.source.into(),
            pipeline: p.pipeline.name().into(),
            horizon: p.spec.horizon,
            dt: p.spec.dt,
            direction: match p.spec.direction {
                Direction::Forward => "forward",
                Direction::Backward => "backward",
            }
            .into(),
            seed: reports.as_ref().and(p.sampling.as_ref()).map(|s| s.config.seed),
            shrink: ctx.shrink,
        },
        system: p.config.system.clone(),
        initial_set: p.config.initial_set.clone(),
        method: MethodInfo {
            requested: c.requested.clone(),
            constructions: c.constructions.clone(),
        },
        boxes: c.boxes.iter().map(|(l, b)| BoxOut::new(l, b)).collect(),
        parallelotopes: c
            .parallelotopes
            .iter()
            .map(|(l, q)| ParallelotopeOut::new(l, q))
            .collect::<Result<_>>()?,
        intersection_polygon: c.intersection.as_ref().map(|poly| PolygonOut {
            vertices: poly.vertices().to_vec(),
            area: poly.area(),
        }),
        intersection_volume: c.volume,
        area_curve: (!c.area_curve.is_empty())
            .then(|| c.area_curve.iter().map(|&(k, area)| AreaPoint { k, area }).collect()),
        reports,
    })
}
