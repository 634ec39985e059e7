//! Result document, number formatting and plot files.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use mmreach::decomp::Construction;
use mmreach::geometry::{Hyperrect, Matrix, Parallelotope, Polygon2D};
use mmreach::multiorder::DecompositionMethod;
use mmreach::oracle::{ContainmentReport, VolumeEstimate, Witness};
use serde::ser::Serialize;
use serde::Deserialize;
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::config::{InitialSetConfig, SystemConfig};

/// `%.17g`: 17 significant digits, trailing zeros dropped.
pub fn fmt17(v: f64) -> String {
    if !v.is_finite() {
        return format!("{v}");
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.16e}");
    let (mant, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..17).contains(&exp) {
        let decimals = (16 - exp) as usize;
        trim_zeros(format!("{v:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mant.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// Pretty JSON with floats written by [`fmt17`].
struct Sig17(PrettyFormatter<'static>);

impl Formatter for Sig17 {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
        let s = fmt17(v);
        // JSON has no integer/float distinction, but keep floats recognizable.
        if s.contains(['.', 'e']) {
            w.write_all(s.as_bytes())
        } else {
            write!(w, "{s}.0")
        }
    }
    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Sig17(PrettyFormatter::new()));
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf)?)
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultDoc {
    pub meta: Meta,
    pub system: SystemConfig,
    pub initial_set: InitialSetConfig,
    pub method: MethodInfo,
    pub boxes: Vec<BoxOut>,
    pub parallelotopes: Vec<ParallelotopeOut>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intersection_polygon: Option<PolygonOut>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intersection_volume: Option<VolumeEstimate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub area_curve: Option<Vec<AreaPoint>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reports: Option<Vec<RegionReport>>,
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Meta {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Seconds since the Unix epoch; the only field that differs between
    /// identical runs.
    pub timestamp: u64,
    pub source: String,
    pub pipeline: String,
    pub horizon: f64,
    pub dt: f64,
    pub direction: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shrink: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodInfo {
    pub requested: Vec<DecompositionMethod>,
    /// What was actually built, one per computed set.
    pub constructions: Vec<Construction>,
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxOut {
    pub label: String,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxOut {
    pub fn new(label: &str, b: &Hyperrect) -> Self {
        Self {
            label: label.into(),
            lo: b.lo().to_vec(),
            hi: b.hi().to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParallelotopeOut {
    pub label: String,
    pub shape: Vec<Vec<f64>>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub volume: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vertices: Option<Vec<[f64; 2]>>,
}

impl ParallelotopeOut {
    pub fn new(label: &str, p: &Parallelotope) -> Result<Self> {
        Ok(Self {
            label: label.into(),
            shape: p.shape().rows(),
            lo: p.coords().lo().to_vec(),
            hi: p.coords().hi().to_vec(),
            volume: p.volume(),
            vertices: if p.dim() == 2 {
                Some(p.to_polygon()?.vertices().to_vec())
            } else {
                None
            },
        })
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolygonOut {
    pub vertices: Vec<[f64; 2]>,
    pub area: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AreaPoint {
    pub k: usize,
    pub area: f64,
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionReport {
    pub region: String,
    pub total: usize,
    pub violations: usize,
    /// Smallest margin over all points; absent when there were none.
    pub worst_margin: Option<f64>,
    pub witnesses: Vec<Witness>,
    /// Sampled trajectories that diverged (not audited).
    pub diverged: usize,
}

impl RegionReport {
    pub fn new(region: &str, r: &ContainmentReport, diverged: usize) -> Self {
        Self {
            region: region.into(),
            total: r.total,
            violations: r.violations,
            worst_margin: r.worst_margin.is_finite().then_some(r.worst_margin),
            witnesses: r.witnesses.clone(),
            diverged,
        }
    }
}

impl ResultDoc {
    /// Structural checks on a (possibly re-read) document.
    pub fn validate(&self) -> Result<()> {
        let n = self.system.n;
        for b in &self.boxes {
            if b.lo.len() != n {
                bail!("box `{}` has dimension {}, system has n = {n}", b.label, b.lo.len());
            }
            Hyperrect::new(b.lo.clone(), b.hi.clone()).with_context(|| format!("box `{}`", b.label))?;
        }
        for p in &self.parallelotopes {
            let t = Matrix::from_rows(&p.shape).with_context(|| format!("parallelotope `{}`", p.label))?;
            if t.dim() != n {
                bail!(
                    "parallelotope `{}` has dimension {}, system has n = {n}",
                    p.label,
                    t.dim()
                );
            }
            let q = Parallelotope::new(t, Hyperrect::new(p.lo.clone(), p.hi.clone())?)
                .with_context(|| format!("parallelotope `{}`", p.label))?;
            if let Some(v) = &p.vertices {
                let poly = q.to_polygon()?;
                if !poly.approx_eq(&Polygon2D::new(v.clone())?, 1e-9) {
                    bail!(
                        "parallelotope `{}`: vertices disagree with shape and coordinates",
                        p.label
                    );
                }
            }
        }
        if let Some(poly) = &self.intersection_polygon {
            let p = Polygon2D::new(poly.vertices.clone()).context("intersection_polygon")?;
            if (p.area() - poly.area).abs() > 1e-9 * poly.area.max(1.0) {
                bail!(
                    "intersection_polygon: stated area {} but vertices give {}",
                    poly.area,
                    p.area()
                );
            }
        }
        if let Some(curve) = &self.area_curve {
            for (j, a) in curve.iter().enumerate() {
                if a.k != j + 1 || !(a.area >= 0.0) {
                    bail!("area_curve row {j} is malformed");
                }
            }
        }
        Ok(())
    }
}

/// Writes result files under one directory with a common name stem.
pub struct Writer {
    dir: PathBuf,
    stem: String,
    written: Vec<PathBuf>,
}

impl Writer {
    pub fn new(dir: &Path, stem: &str) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            stem: stem.to_string(),
            written: Vec::new(),
        })
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    fn write(&mut self, suffix: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(format!("{}{suffix}", self.stem));
        fs::write(&path, contents).with_context(|| format!("cannot write {}", path.display()))?;
        self.written.push(path);
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, suffix: &str, value: &T) -> Result<()> {
        self.write(suffix, &to_json(value)?)
    }

    /// One `x y` line per vertex.
    pub fn polygon(&mut self, suffix: &str, vertices: &[[f64; 2]]) -> Result<()> {
        let mut s = String::new();
        for v in vertices {
            s.push_str(&format!("{} {}\n", fmt17(v[0]), fmt17(v[1])));
        }
        self.write(suffix, &s)
    }

    pub fn area_curve(&mut self, curve: &[AreaPoint]) -> Result<()> {
        let mut s = String::from("k,area\n");
        for a in curve {
            s.push_str(&format!("{},{}\n", a.k, fmt17(a.area)));
        }
        self.write("_area_curve.csv", &s)
    }
}
