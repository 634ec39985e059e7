//! Orders, hyperrectangles, parallelotopes and the planar polygon operations
//! used to intersect and measure parallelotope approximations.
//!
//! Conventions:
//! - Vectors are plain `f64` slices; `lo ⪯ hi` is the componentwise order.
//! - A parallelotope `[lo, hi]_T` is the set `{x | T⁻¹x ∈ [lo, hi]}`.
//! - Polygons are convex, counterclockwise, and start at their
//!   lexicographically smallest vertex.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance for parallelotope membership in transformed coordinates.
pub const MEMBERSHIP_TOL: f64 = 1e-12;
/// Matrices with `|det| ≤ SINGULAR_DET` are treated as singular.
pub const SINGULAR_DET: f64 = 1e-12;
/// Matrices whose 1-norm condition number exceeds this are treated as singular.
pub const MAX_CONDITION: f64 = 1e12;
/// Largest dimension for which vertices are enumerated.
pub const MAX_VERTEX_DIM: usize = 20;
/// Tolerance for duplicate/collinear polygon vertices.
pub const POLY_TOL: f64 = 1e-12;

fn check_len(a: &[f64], b: &[f64], what: &str) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!("{what}: lengths {} and {}", a.len(), b.len())));
    }
    Ok(())
}

/// Componentwise order `a ⪯ b`.
pub fn leq(a: &[f64], b: &[f64]) -> Result<bool> {
    check_len(a, b, "leq")?;
    Ok(a.iter().zip(b).all(|(x, y)| x <= y))
}

/// Southeast order on embedding states: `a.lower ⪯ b.lower` and
/// `b.upper ⪯ a.upper`. For valid states this is `⟦b⟧ ⊆ ⟦a⟧`.
pub fn se_leq(a: &EmbeddingState, b: &EmbeddingState) -> Result<bool> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension(format!(
            "se_leq: state dimensions {} and {}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(leq(&a.lower, &b.lower)? && leq(&b.upper, &a.upper)?)
}

// ---------------------------------------------------------------------------
// Matrix

/// Dense square matrix, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self { n, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Dimension(format!(
                    "matrix row {} has {} entries, expected {n}",
                    i + 1,
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Geometry("matrix has non-finite entries".into()));
        }
        Ok(Self { n, data })
    }

    pub fn from_row_slice(n: usize, data: &[f64]) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::Dimension(format!("{} entries for a {n}x{n} matrix", data.len())));
        }
        Ok(Self { n, data: data.to_vec() })
    }

    /// Planar rotation by `theta` radians.
    pub fn rotation(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self {
            n: 2,
            data: vec![c, -s, s, c],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.n.max(1)).map(<[f64]>::to_vec).collect()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, j)).collect()
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.mul_vec_into(v, &mut out);
        out
    }

    #[inline]
    pub fn mul_vec_into(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.n);
        for (i, o) in out.iter_mut().enumerate().take(self.n) {
            *o = self.row(i).iter().zip(v).map(|(a, b)| a * b).sum();
        }
    }

    pub fn mul(&self, other: &Matrix) -> Matrix {
        let n = self.n;
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                data[i * n + j] = (0..n).map(|k| self.get(i, k) * other.get(k, j)).sum();
            }
        }
        Matrix { n, data }
    }

    fn to_na(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_row_slice(self.n, self.n, &self.data)
    }

    pub fn det(&self) -> f64 {
        if self.n == 0 {
            return 1.0;
        }
        self.to_na().lu().determinant()
    }

    /// Maximum absolute column sum.
    pub fn norm1(&self) -> f64 {
        (0..self.n)
            .map(|j| (0..self.n).map(|i| self.get(i, j).abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Inverse via LU with partial pivoting. Rejects matrices with
    /// `|det| ≤ 1e-12` or 1-norm condition number above `1e12`.
    pub fn inverse(&self) -> Result<Matrix> {
        if self.n == 0 {
            return Ok(self.clone());
        }
        let lu = self.to_na().lu();
        let det = lu.determinant();
        if !(det.abs() > SINGULAR_DET) {
            return Err(Error::Geometry(format!("singular shape matrix (det = {det:.3e})")));
        }
        let inv = lu
            .try_inverse()
            .ok_or_else(|| Error::Geometry("singular shape matrix".into()))?;
        let data: Vec<f64> = (0..self.n)
            .flat_map(|i| (0..self.n).map(move |j| (i, j)))
            .map(|(i, j)| inv[(i, j)])
            .collect();
        let inverse = Matrix { n: self.n, data };
        let cond = self.norm1() * inverse.norm1();
        if !(cond <= MAX_CONDITION) {
            return Err(Error::Geometry(format!(
                "ill-conditioned shape matrix (condition estimate {cond:.3e})"
            )));
        }
        Ok(inverse)
    }
}

impl TryFrom<Vec<Vec<f64>>> for Matrix {
    type Error = Error;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Matrix::from_rows(&rows)
    }
}

impl From<Matrix> for Vec<Vec<f64>> {
    fn from(m: Matrix) -> Self {
        m.rows()
    }
}

// ---------------------------------------------------------------------------
// Hyperrectangle

#[derive(Deserialize)]
struct RawRect {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

/// Axis-aligned box `[lo, hi]`.
#[doc(alias = "Box")]
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawRect")]
pub struct Hyperrect {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl TryFrom<RawRect> for Hyperrect {
    type Error = Error;
    fn try_from(raw: RawRect) -> Result<Self> {
        Hyperrect::new(raw.lo, raw.hi)
    }
}

impl Hyperrect {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        check_len(&lo, &hi, "box endpoints")?;
        if lo.iter().chain(&hi).any(|v| !v.is_finite()) {
            return Err(Error::Geometry("box has non-finite endpoints".into()));
        }
        if let Some(i) = (0..lo.len()).find(|&i| lo[i] > hi[i]) {
            return Err(Error::Geometry(format!(
                "box endpoints unordered in component {}: {} > {}",
                i + 1,
                lo[i],
                hi[i]
            )));
        }
        Ok(Self { lo, hi })
    }

    /// Degenerate box `[x, x]`.
    pub fn point(x: &[f64]) -> Result<Self> {
        Self::new(x.to_vec(), x.to_vec())
    }

    /// The empty-dimensional box (no disturbances).
    pub fn empty() -> Self {
        Self {
            lo: Vec::new(),
            hi: Vec::new(),
        }
    }

    /// Smallest box containing all `points`.
    pub fn hull(points: &[Vec<f64>]) -> Result<Self> {
        let first = points
            .first()
            .ok_or_else(|| Error::Invalid("hull of an empty point set".into()))?;
        let mut lo = first.clone();
        let mut hi = first.clone();
        for p in &points[1..] {
            check_len(p, &lo, "hull")?;
            for i in 0..p.len() {
                lo[i] = lo[i].min(p[i]);
                hi[i] = hi[i].max(p[i]);
            }
        }
        Self::new(lo, hi)
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn widths(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).collect()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| 0.5 * (l + h)).collect()
    }

    pub fn volume(&self) -> f64 {
        self.widths().iter().product()
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.dim() && (0..x.len()).all(|i| x[i] >= self.lo[i] - tol && x[i] <= self.hi[i] + tol)
    }

    /// Signed distance to the boundary in the sup-norm sense: positive inside,
    /// negative outside.
    pub fn margin(&self, x: &[f64]) -> f64 {
        (0..self.dim())
            .map(|i| (x[i] - self.lo[i]).min(self.hi[i] - x[i]))
            .fold(f64::INFINITY, f64::min)
    }

    /// `self ⊆ other` with an absolute endpoint tolerance.
    pub fn is_subset_of(&self, other: &Hyperrect, tol: f64) -> bool {
        self.dim() == other.dim()
            && (0..self.dim()).all(|i| self.lo[i] >= other.lo[i] - tol && self.hi[i] <= other.hi[i] + tol)
    }

    pub fn intersect(&self, other: &Hyperrect) -> Option<Hyperrect> {
        if self.dim() != other.dim() {
            return None;
        }
        let lo: Vec<f64> = (0..self.dim()).map(|i| self.lo[i].max(other.lo[i])).collect();
        let hi: Vec<f64> = (0..self.dim()).map(|i| self.hi[i].min(other.hi[i])).collect();
        Hyperrect::new(lo, hi).ok()
    }

    /// Corner selected by the bits of `mask` (bit `i` set → `hi[i]`).
    pub fn corner(&self, mask: usize) -> Vec<f64> {
        (0..self.dim())
            .map(|i| if mask >> i & 1 == 1 { self.hi[i] } else { self.lo[i] })
            .collect()
    }

    /// Box scaled by `factor` about its center.
    pub fn scaled(&self, factor: f64) -> Hyperrect {
        let c = self.center();
        let lo = (0..self.dim()).map(|i| c[i] + factor * (self.lo[i] - c[i])).collect();
        let hi = (0..self.dim()).map(|i| c[i] + factor * (self.hi[i] - c[i])).collect();
        Hyperrect { lo, hi }
    }
}

// ---------------------------------------------------------------------------
// Parallelotope

#[derive(Serialize, Deserialize)]
struct RawParallelotope {
    shape: Matrix,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

/// Parallelotope `[lo, hi]_T = {x | T⁻¹x ∈ [lo, hi]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParallelotope", into = "RawParallelotope")]
pub struct Parallelotope {
    shape: Matrix,
    shape_inv: Matrix,
    coords: Hyperrect,
}

impl TryFrom<RawParallelotope> for Parallelotope {
    type Error = Error;
    fn try_from(raw: RawParallelotope) -> Result<Self> {
        Parallelotope::new(raw.shape, Hyperrect::new(raw.lo, raw.hi)?)
    }
}

impl From<Parallelotope> for RawParallelotope {
    fn from(p: Parallelotope) -> Self {
        RawParallelotope {
            shape: p.shape,
            lo: p.coords.lo,
            hi: p.coords.hi,
        }
    }
}

impl Parallelotope {
    pub fn new(shape: Matrix, coords: Hyperrect) -> Result<Self> {
        if shape.dim() != coords.dim() {
            return Err(Error::Dimension(format!(
                "shape is {0}x{0} but coordinate box has dimension {1}",
                shape.dim(),
                coords.dim()
            )));
        }
        let shape_inv = shape.inverse()?;
        Ok(Self {
            shape,
            shape_inv,
            coords,
        })
    }

    /// Axis-aligned parallelotope equal to `b`.
    pub fn from_box(b: Hyperrect) -> Self {
        let n = b.dim();
        Self {
            shape: Matrix::identity(n),
            shape_inv: Matrix::identity(n),
            coords: b,
        }
    }

    pub fn dim(&self) -> usize {
        self.shape.dim()
    }

    pub fn shape(&self) -> &Matrix {
        &self.shape
    }

    pub fn shape_inverse(&self) -> &Matrix {
        &self.shape_inv
    }

    pub fn coords(&self) -> &Hyperrect {
        &self.coords
    }

    /// `T⁻¹x`.
    pub fn to_coords(&self, x: &[f64]) -> Vec<f64> {
        self.shape_inv.mul_vec(x)
    }

    pub fn contains(&self, x: &[f64]) -> Result<bool> {
        self.contains_tol(x, MEMBERSHIP_TOL)
    }

    pub fn contains_tol(&self, x: &[f64], tol: f64) -> Result<bool> {
        if x.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "point of length {} vs parallelotope of dimension {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(self.coords.contains(&self.to_coords(x), tol))
    }

    /// Signed margin measured in transformed coordinates.
    pub fn margin(&self, x: &[f64]) -> f64 {
        self.coords.margin(&self.to_coords(x))
    }

    /// The `2^n` images of the coordinate-box corners. For `n = 2` they are
    /// returned counterclockwise.
    pub fn vertices(&self) -> Result<Vec<Vec<f64>>> {
        let n = self.dim();
        if n > MAX_VERTEX_DIM {
            return Err(Error::Size(format!(
                "vertex enumeration limited to n ≤ {MAX_VERTEX_DIM}, got {n}"
            )));
        }
        if n == 2 {
            let masks: [usize; 4] = if self.shape.det() > 0.0 {
                [0b00, 0b01, 0b11, 0b10]
            } else {
                [0b00, 0b10, 0b11, 0b01]
            };
            return Ok(masks
                .iter()
                .map(|&m| self.shape.mul_vec(&self.coords.corner(m)))
                .collect());
        }
        Ok((0..1usize << n)
            .map(|m| self.shape.mul_vec(&self.coords.corner(m)))
            .collect())
    }

    /// The planar polygon occupied by a 2-D parallelotope.
    pub fn to_polygon(&self) -> Result<Polygon2D> {
        if self.dim() != 2 {
            return Err(Error::Dimension(format!(
                "polygon conversion needs n = 2, got {}",
                self.dim()
            )));
        }
        let pts = self.vertices()?.into_iter().map(|v| [v[0], v[1]]).collect();
        Polygon2D::new(pts)
    }

    /// `|det T| · vol(coords)`.
    pub fn volume(&self) -> f64 {
        self.shape.det().abs() * self.coords.volume()
    }

    /// Parallelotope with the coordinate box scaled about its center.
    pub fn scaled(&self, factor: f64) -> Parallelotope {
        Parallelotope {
            shape: self.shape.clone(),
            shape_inv: self.shape_inv.clone(),
            coords: self.coords.scaled(factor),
        }
    }
}

/// Smallest coordinate box `B` with `T⁻¹v ∈ B` for every vertex `v`; the
/// parallelotope `[B]_T` then contains the convex hull of the vertices.
pub fn bounding_coords(vertices: &[Vec<f64>], shape: &Matrix) -> Result<Hyperrect> {
    if vertices.is_empty() {
        return Err(Error::Invalid("bounding_coords needs at least one vertex".into()));
    }
    let inv = shape.inverse()?;
    let mapped = vertices
        .iter()
        .map(|v| {
            if v.len() != shape.dim() {
                return Err(Error::Dimension(format!(
                    "vertex of length {} vs shape {}x{}",
                    v.len(),
                    shape.dim(),
                    shape.dim()
                )));
            }
            Ok(inv.mul_vec(v))
        })
        .collect::<Result<Vec<_>>>()?;
    Hyperrect::hull(&mapped)
}

// ---------------------------------------------------------------------------
// Embedding state

/// Pair `(lower, upper)` with `lower ⪯ upper`, denoting the box `[lower, upper]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingState {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl EmbeddingState {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        check_len(&lower, &upper, "embedding state")?;
        if !leq(&lower, &upper)? {
            return Err(Error::Geometry("embedding state requires lower ⪯ upper".into()));
        }
        Ok(Self { lower, upper })
    }

    pub fn from_box(b: &Hyperrect) -> Self {
        Self {
            lower: b.lo().to_vec(),
            upper: b.hi().to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// `⟦a⟧`.
    pub fn to_box(&self) -> Result<Hyperrect> {
        Hyperrect::new(self.lower.clone(), self.upper.clone())
    }
}

// ---------------------------------------------------------------------------
// Polygons

pub type Point2 = [f64; 2];

#[inline]
fn cross(o: Point2, a: Point2, b: Point2) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

#[inline]
fn near(a: Point2, b: Point2, tol: f64) -> bool {
    (a[0] - b[0]).abs() <= tol && (a[1] - b[1]).abs() <= tol
}

fn signed_area(pts: &[Point2]) -> f64 {
    if pts.len() < 3 {
        return 0.0;
    }
    let mut s = 0.0;
    for i in 0..pts.len() {
        let a = pts[i];
        let b = pts[(i + 1) % pts.len()];
        s += a[0] * b[1] - b[0] * a[1];
    }
    0.5 * s
}

/// Drop near-duplicate and collinear vertices (cyclically).
fn simplify(mut pts: Vec<Point2>) -> Vec<Point2> {
    loop {
        let k = pts.len();
        if k < 2 {
            return pts;
        }
        let scale = pts.iter().flat_map(|p| p.iter()).fold(1.0f64, |m, v| m.max(v.abs()));
        let tol = POLY_TOL * scale;
        let drop = (0..k).find(|&i| {
            let prev = pts[(i + k - 1) % k];
            let cur = pts[i];
            let next = pts[(i + 1) % k];
            near(prev, cur, tol) || (k >= 3 && cross(prev, cur, next).abs() <= tol * scale)
        });
        match drop {
            Some(i) => {
                pts.remove(i);
            }
            None => return pts,
        }
    }
}

/// Convex polygon, counterclockwise, starting at the lexicographically
/// smallest vertex.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polygon2D {
    vertices: Vec<Point2>,
}

impl Polygon2D {
    /// Canonicalizes orientation and start vertex, drops duplicate and
    /// collinear vertices, and rejects non-convex input.
    pub fn new(points: Vec<Point2>) -> Result<Self> {
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Geometry("polygon has non-finite vertices".into()));
        }
        let mut pts = simplify(points);
        if signed_area(&pts) < 0.0 {
            pts.reverse();
        }
        let k = pts.len();
        if k >= 3 {
            let scale = pts.iter().flat_map(|p| p.iter()).fold(1.0f64, |m, v| m.max(v.abs()));
            for i in 0..k {
                let c = cross(pts[i], pts[(i + 1) % k], pts[(i + 2) % k]);
                if c < -POLY_TOL * scale * scale {
                    return Err(Error::Geometry(format!(
                        "non-convex polygon: turn at vertex {} has cross product {c:.3e}",
                        (i + 1) % k
                    )));
                }
            }
        }
        if let Some(start) =
            (0..k).min_by(|&a, &b| pts[a][0].total_cmp(&pts[b][0]).then(pts[a][1].total_cmp(&pts[b][1])))
        {
            pts.rotate_left(start);
        }
        Ok(Self { vertices: pts })
    }

    /// Convex hull of an unordered point set (monotone chain).
    pub fn convex_hull(points: &[Point2]) -> Result<Self> {
        let mut pts = points.to_vec();
        pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
        pts.dedup();
        if pts.len() < 3 {
            return Self::new(pts);
        }
        let mut hull: Vec<Point2> = Vec::with_capacity(2 * pts.len());
        for pass in 0..2 {
            let start = hull.len();
            for &p in &pts {
                while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                    hull.pop();
                }
                hull.push(p);
            }
            hull.pop();
            if pass == 0 {
                pts.reverse();
            }
        }
        Self::new(hull)
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Shoelace area; 0 for fewer than three vertices.
    pub fn area(&self) -> f64 {
        polygon_area(self)
    }

    /// Signed distance to the boundary (positive inside) for polygons with at
    /// least three vertices; `-∞` otherwise.
    pub fn margin(&self, p: Point2) -> f64 {
        let k = self.vertices.len();
        if k < 3 {
            return f64::NEG_INFINITY;
        }
        (0..k)
            .map(|i| {
                let a = self.vertices[i];
                let b = self.vertices[(i + 1) % k];
                let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
                cross(a, b, p) / len
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn centroid(&self) -> Point2 {
        let k = self.vertices.len().max(1) as f64;
        let sx: f64 = self.vertices.iter().map(|v| v[0]).sum();
        let sy: f64 = self.vertices.iter().map(|v| v[1]).sum();
        [sx / k, sy / k]
    }

    /// Polygon scaled about its vertex centroid.
    pub fn scaled(&self, factor: f64) -> Polygon2D {
        let c = self.centroid();
        Polygon2D {
            vertices: self
                .vertices
                .iter()
                .map(|v| [c[0] + factor * (v[0] - c[0]), c[1] + factor * (v[1] - c[1])])
                .collect(),
        }
    }

    /// Vertex-set equality within `tol`, assuming both are canonical.
    pub fn approx_eq(&self, other: &Polygon2D, tol: f64) -> bool {
        self.len() == other.len()
            && self
                .vertices
                .iter()
                .zip(&other.vertices)
                .all(|(a, b)| near(*a, *b, tol))
    }
}

/// Shoelace area of `p`.
pub fn polygon_area(p: &Polygon2D) -> f64 {
    signed_area(&p.vertices).abs()
}

/// Clip `subject` against the half-plane to the left of the directed edge `a → b`.
fn clip_half_plane(subject: &[Point2], a: Point2, b: Point2, tol: f64) -> Vec<Point2> {
    let k = subject.len();
    let mut out = Vec::with_capacity(k + 1);
    let side = |p: Point2| cross(a, b, p);
    for i in 0..k {
        let cur = subject[i];
        let next = subject[(i + 1) % k];
        let sc = side(cur);
        let sn = side(next);
        let cur_in = sc >= -tol;
        let next_in = sn >= -tol;
        if cur_in {
            out.push(cur);
        }
        if cur_in != next_in && (sc - sn).abs() > 0.0 {
            let t = sc / (sc - sn);
            out.push([cur[0] + t * (next[0] - cur[0]), cur[1] + t * (next[1] - cur[1])]);
        }
    }
    out
}

/// Intersection of convex polygons by successive half-plane clipping.
/// Returns `None` when the intersection has zero area.
pub fn clip_intersection_2d(polys: &[Polygon2D]) -> Result<Option<Polygon2D>> {
    let Some(first) = polys.first() else {
        return Err(Error::Invalid("intersection of an empty polygon list".into()));
    };
    // Re-validate: callers may have built polygons by hand via serde.
    for p in polys {
        Polygon2D::new(p.vertices.clone())?;
    }
    let mut acc: Vec<Point2> = first.vertices.clone();
    for clip in &polys[1..] {
        let k = clip.vertices.len();
        if k < 3 || acc.len() < 3 {
            return Ok(None);
        }
        let scale = clip
            .vertices
            .iter()
            .chain(&acc)
            .flat_map(|p| p.iter())
            .fold(1.0f64, |m, v| m.max(v.abs()));
        let tol = POLY_TOL * scale * scale;
        for i in 0..k {
            acc = clip_half_plane(&acc, clip.vertices[i], clip.vertices[(i + 1) % k], tol);
            if acc.len() < 3 {
                return Ok(None);
            }
        }
    }
    let poly = Polygon2D::new(acc)?;
    if poly.len() < 3 || poly.area() <= POLY_TOL {
        return Ok(None);
    }
    Ok(Some(poly))
}

#[cfg(test)]
mod tests {
    #[test]
    fn hull_of_scattered_points() {
        let pts = [
            [0.0, 0.0],
            [1.0, 1.0],
            [2.0, 0.0],
            [1.0, 0.2],
            [2.0, 2.0],
            [0.0, 2.0],
            [0.5, 1.5],
        ];
        let h = super::Polygon2D::convex_hull(&pts).unwrap();
        assert_eq!(h.vertices(), &[[0.0, 0.0], [2.0, 0.0], [2.0, 2.0], [0.0, 2.0]]);
    }

    use super::*;
    use approx::assert_relative_eq;

    fn example1_ptope() -> Parallelotope {
        let t = Matrix::from_rows(&[vec![1.0, -2.0], vec![1.0, 1.0]]).unwrap();
        Parallelotope::new(t, Hyperrect::new(vec![0.0, -0.25], vec![0.25, 0.0]).unwrap()).unwrap()
    }

    fn square(x0: f64, y0: f64, x1: f64, y1: f64) -> Polygon2D {
        Polygon2D::new(vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]]).unwrap()
    }

    #[test]
    fn componentwise_order() {
        assert!(leq(&[0.0, 0.0], &[1.0, 1.0]).unwrap());
        assert!(!leq(&[0.0, 2.0], &[1.0, 1.0]).unwrap());
        assert!(leq(&[1.0, 1.0], &[1.0, 1.0]).unwrap());
        assert!(matches!(leq(&[1.0], &[1.0, 2.0]), Err(Error::Dimension(_))));
    }

    #[test]
    fn southeast_order() {
        let a = EmbeddingState::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let b = EmbeddingState::new(vec![0.2, 0.1], vec![0.9, 0.8]).unwrap();
        let c = EmbeddingState::new(vec![-0.1, 0.0], vec![1.0, 1.0]).unwrap();
        assert!(se_leq(&a, &b).unwrap());
        assert!(!se_leq(&a, &c).unwrap());
        assert!(se_leq(&a, &a).unwrap());
        let d = EmbeddingState::new(vec![0.0], vec![1.0]).unwrap();
        assert!(se_leq(&a, &d).is_err());
        assert!(EmbeddingState::new(vec![1.0], vec![0.0]).is_err());
    }

    #[test]
    fn parallelotope_membership() {
        let p = example1_ptope();
        assert!(p.contains(&[3.0 / 8.0, 0.0]).unwrap());
        // T⁻¹(10, 10) = (10, 0), far outside [0, 1/4].
        let y = p.to_coords(&[10.0, 10.0]);
        assert_relative_eq!(y[0], 10.0, epsilon = 1e-12);
        assert_relative_eq!(y[1], 0.0, epsilon = 1e-12);
        assert!(!p.contains(&[10.0, 10.0]).unwrap());
        let unit = Parallelotope::from_box(Hyperrect::new(vec![0.0; 2], vec![1.0; 2]).unwrap());
        assert!(unit.contains(&[0.5, 0.5]).unwrap());
    }

    #[test]
    fn singular_shapes_rejected() {
        let s = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        let b = Hyperrect::new(vec![0.0; 2], vec![1.0; 2]).unwrap();
        assert!(matches!(Parallelotope::new(s, b), Err(Error::Geometry(_))));
        let ill = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1e-13]]).unwrap();
        assert!(ill.inverse().is_err());
    }

    #[test]
    fn vertices_of_unit_square_and_example_parallelogram() {
        let unit = Parallelotope::from_box(Hyperrect::new(vec![0.0; 2], vec![1.0; 2]).unwrap());
        assert_eq!(
            unit.vertices().unwrap(),
            vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0]]
        );
        let v = example1_ptope().vertices().unwrap();
        let expected = [[0.5, -0.25], [0.75, 0.0], [0.25, 0.25], [0.0, 0.0]];
        for e in expected {
            assert!(v
                .iter()
                .any(|p| (p[0] - e[0]).abs() < 1e-12 && (p[1] - e[1]).abs() < 1e-12));
        }
        let p = example1_ptope();
        for vert in &v {
            assert!(p.contains_tol(vert, 1e-9).unwrap());
        }
    }

    #[test]
    fn degenerate_vertices_repeat() {
        let t = Matrix::rotation(0.3);
        let p = Parallelotope::new(t.clone(), Hyperrect::point(&[1.0, 2.0]).unwrap()).unwrap();
        let image = t.mul_vec(&[1.0, 2.0]);
        for v in p.vertices().unwrap() {
            assert_eq!(v, image);
        }
    }

    #[test]
    fn vertex_guard() {
        let n = 21;
        let p = Parallelotope::from_box(Hyperrect::new(vec![0.0; n], vec![1.0; n]).unwrap());
        assert!(matches!(p.vertices(), Err(Error::Size(_))));
    }

    #[test]
    fn bounding_coords_cases() {
        let sq = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0]];
        let b = bounding_coords(&sq, &Matrix::identity(2)).unwrap();
        assert_eq!(b, Hyperrect::new(vec![0.0; 2], vec![1.0; 2]).unwrap());

        let t = Matrix::from_rows(&[vec![2.0, 1.0], vec![0.0, 1.0]]).unwrap();
        let b = bounding_coords(&[vec![3.0, 1.0]], &t).unwrap();
        assert_eq!(b.lo(), b.hi());
        assert_relative_eq!(b.lo()[0], 1.0);
        assert_relative_eq!(b.lo()[1], 1.0);

        let singular = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert!(bounding_coords(&sq, &singular).is_err());
    }

    #[test]
    fn polygon_areas() {
        assert_relative_eq!(square(0.0, 0.0, 1.0, 1.0).area(), 1.0);
        let hex: Vec<Point2> = (0..6)
            .map(|i| {
                let a = std::f64::consts::PI * i as f64 / 3.0;
                [a.cos(), a.sin()]
            })
            .collect();
        let hex = Polygon2D::new(hex).unwrap();
        assert_relative_eq!(hex.area(), 3.0 * 3f64.sqrt() / 2.0, epsilon = 1e-12);
        let ex1 = example1_ptope().to_polygon().unwrap();
        assert_relative_eq!(ex1.area(), 3.0 / 16.0, epsilon = 1e-12);
        let seg = Polygon2D::new(vec![[0.0, 0.0], [1.0, 1.0]]).unwrap();
        assert_eq!(seg.area(), 0.0);
    }

    #[test]
    fn polygon_canonical_form() {
        let cw = Polygon2D::new(vec![[1.0, 1.0], [1.0, 0.0], [0.0, 0.0], [0.0, 1.0]]).unwrap();
        assert_eq!(cw.vertices()[0], [0.0, 0.0]);
        assert!(cw.approx_eq(&square(0.0, 0.0, 1.0, 1.0), 1e-12));
        let dup = Polygon2D::new(vec![
            [0.0, 0.0],
            [0.5, 0.0],
            [1.0, 0.0],
            [1.0, 1.0],
            [1.0, 1.0],
            [0.0, 1.0],
        ])
        .unwrap();
        assert_eq!(dup.len(), 4);
    }

    #[test]
    fn nonconvex_rejected() {
        let dart = vec![[0.0, 0.0], [2.0, 0.0], [1.0, 0.5], [2.0, 2.0], [0.0, 2.0]];
        assert!(matches!(Polygon2D::new(dart), Err(Error::Geometry(_))));
    }

    #[test]
    fn axis_aligned_overlap() {
        let a = square(0.0, 0.0, 1.0, 1.0);
        let b = square(0.5, 0.0, 1.5, 1.0);
        let c = clip_intersection_2d(&[a.clone(), b]).unwrap().unwrap();
        assert!(c.approx_eq(&square(0.5, 0.0, 1.0, 1.0), 1e-9));
        let same = clip_intersection_2d(&[a.clone(), a.clone()]).unwrap().unwrap();
        assert!(same.approx_eq(&a, 1e-9));
    }

    #[test]
    fn rotated_squares_make_an_octagon() {
        let c = [0.5, 0.5];
        let rot = |t: f64| -> Polygon2D {
            let (s, co) = t.sin_cos();
            let pts = [[-0.5, -0.5], [0.5, -0.5], [0.5, 0.5], [-0.5, 0.5]]
                .iter()
                .map(|p| [c[0] + co * p[0] - s * p[1], c[1] + s * p[0] + co * p[1]])
                .collect();
            Polygon2D::new(pts).unwrap()
        };
        let oct = clip_intersection_2d(&[rot(0.0), rot(std::f64::consts::FRAC_PI_4)])
            .unwrap()
            .unwrap();
        assert_eq!(oct.len(), 8);
        // Regular octagon with inradius 1/2: area = 2 (√2 − 1).
        assert_relative_eq!(oct.area(), 2.0 * (2f64.sqrt() - 1.0), epsilon = 1e-12);
    }

    #[test]
    fn disjoint_intersection_is_none() {
        let a = square(0.0, 0.0, 1.0, 1.0);
        let b = square(2.0, 2.0, 3.0, 3.0);
        assert!(clip_intersection_2d(&[a.clone(), b]).unwrap().is_none());
        let touching = square(1.0, 0.0, 2.0, 1.0);
        assert!(clip_intersection_2d(&[a, touching]).unwrap().is_none());
    }

    #[test]
    fn matrix_serde_is_row_major() {
        let m = Matrix::from_rows(&[vec![1.0, -2.0], vec![1.0, 1.0]]).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(s, "[[1.0,-2.0],[1.0,1.0]]");
        let p = example1_ptope();
        let json = serde_json::to_string(&p).unwrap();
        let back: Parallelotope = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
        assert!(serde_json::from_str::<Hyperrect>(r#"{"lo":[1.0],"hi":[0.0]}"#).is_err());
    }
}
