//! Disturbed vector fields `ẋ = F(x, w)`, their linear state transformations
//! `ẏ = T⁻¹F(Ty, w)`, and time reversal.

use std::fmt;

use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::expr::{Expr, VarKind, VarSpace};
use crate::geometry::{Hyperrect, Matrix};

/// Anything that can be integrated and decomposed: a disturbed vector field
/// with a box of admissible disturbances.
pub trait VectorField: Send + Sync + fmt::Debug {
    fn state_dim(&self) -> usize;
    fn dist_dim(&self) -> usize;
    /// The disturbance box `W = [w_lo, w_hi]`.
    fn disturbance(&self) -> &Hyperrect;
    /// Writes `F(x, w)` into `out`.
    fn eval_into(&self, x: &[f64], w: &[f64], out: &mut [f64]) -> Result<()>;
    /// Component `F_i(x, w)`.
    fn eval_component(&self, i: usize, x: &[f64], w: &[f64]) -> Result<f64> {
        let mut out: SmallVec<[f64; 8]> = SmallVec::from_elem(0.0, self.state_dim());
        self.eval_into(x, w, &mut out)?;
        Ok(out[i])
    }
    /// Canonical text identifying the field; equal fingerprints mean the same
    /// system.
    fn fingerprint(&self) -> String;

    fn eval(&self, x: &[f64], w: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.state_dim()];
        self.eval_into(x, w, &mut out)?;
        Ok(out)
    }
}

fn check_dims(n: usize, m: usize, x: &[f64], w: &[f64]) -> Result<()> {
    if x.len() != n || w.len() != m {
        return Err(Error::Dimension(format!(
            "field expects x ∈ R^{n}, w ∈ R^{m}; got {} and {}",
            x.len(),
            w.len()
        )));
    }
    Ok(())
}

/// A system defined by one expression per state component.
#[derive(Clone, Debug)]
pub struct SystemDef {
    n: usize,
    m: usize,
    field: Vec<Expr>,
    dist: Hyperrect,
    note: Option<String>,
}

impl SystemDef {
    pub fn new(field: Vec<Expr>, dist: Hyperrect) -> Result<Self> {
        let n = field.len();
        let m = dist.dim();
        if n == 0 {
            return Err(Error::Invalid("a system needs at least one state".into()));
        }
        for (i, e) in field.iter().enumerate() {
            let s = e.space();
            if s.hats || s.n != n || s.m != m {
                return Err(Error::Dimension(format!(
                    "field component {} declared over (n={}, m={}), system is (n={n}, m={m})",
                    i + 1,
                    s.n,
                    s.m
                )));
            }
        }
        Ok(Self {
            n,
            m,
            field,
            dist,
            note: None,
        })
    }

    /// Parse a system from source strings. Disturbance bounds set `m`.
    pub fn parse(field: &[&str], w_lo: &[f64], w_hi: &[f64]) -> Result<Self> {
        let dist = Hyperrect::new(w_lo.to_vec(), w_hi.to_vec())?;
        let n = field.len();
        let exprs = field
            .iter()
            .map(|s| Expr::parse(s, n, dist.dim()))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(exprs, dist)
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    pub fn note(&self) -> Option<&str> {
        self.note.as_deref()
    }

    pub fn field(&self) -> &[Expr] {
        &self.field
    }

    /// `F(x, w)`.
    pub fn eval_field(&self, x: &[f64], w: &[f64]) -> Result<Vec<f64>> {
        self.eval(x, w)
    }

    /// Finite-difference partial `∂F_i/∂(x|w)_j`.
    pub fn partial(&self, i: usize, kind: VarKind, j: usize, x: &[f64], w: &[f64], h: f64) -> Result<f64> {
        Ok(self.field[i].partial(kind, j, x, w, h)?)
    }

    /// The system `ẋ = -F(x, w)` with the same disturbance box.
    pub fn reverse_time(&self) -> SystemDef {
        SystemDef {
            n: self.n,
            m: self.m,
            field: self.field.iter().map(Expr::negated).collect(),
            dist: self.dist.clone(),
            note: self.note.clone(),
        }
    }

    /// The transformed system `ẏ = T⁻¹F(Ty, w)`.
    pub fn transform(&self, shape: &Matrix) -> Result<TransformedSystem> {
        TransformedSystem::new(self.clone(), shape.clone())
    }
}

impl VectorField for SystemDef {
    fn state_dim(&self) -> usize {
        self.n
    }

    fn dist_dim(&self) -> usize {
        self.m
    }

    fn disturbance(&self) -> &Hyperrect {
        &self.dist
    }

    fn eval_into(&self, x: &[f64], w: &[f64], out: &mut [f64]) -> Result<()> {
        check_dims(self.n, self.m, x, w)?;
        for (o, e) in out.iter_mut().zip(&self.field) {
            *o = e.eval(x, w)?;
        }
        Ok(())
    }

    fn eval_component(&self, i: usize, x: &[f64], w: &[f64]) -> Result<f64> {
        check_dims(self.n, self.m, x, w)?;
        Ok(self.field[i].eval(x, w)?)
    }

    fn fingerprint(&self) -> String {
        let exprs: Vec<String> = self.field.iter().map(|e| e.to_string()).collect();
        format!(
            "F=[{}]; W=[{:?}, {:?}]",
            exprs.join("; "),
            self.dist.lo(),
            self.dist.hi()
        )
    }
}

/// `ẏ = T⁻¹F(Ty, w)` with `T⁻¹` cached.
#[derive(Clone, Debug)]
pub struct TransformedSystem {
    base: SystemDef,
    shape: Matrix,
    shape_inv: Matrix,
}

impl TransformedSystem {
    pub fn new(base: SystemDef, shape: Matrix) -> Result<Self> {
        if shape.dim() != base.n {
            return Err(Error::Dimension(format!(
                "shape matrix is {0}x{0}, system has n = {1}",
                shape.dim(),
                base.n
            )));
        }
        let shape_inv = shape.inverse()?;
        Ok(Self { base, shape, shape_inv })
    }

    pub fn base(&self) -> &SystemDef {
        &self.base
    }

    pub fn shape(&self) -> &Matrix {
        &self.shape
    }

    pub fn shape_inverse(&self) -> &Matrix {
        &self.shape_inv
    }

    /// `ẏ = -F_T(y, w)`, i.e. the transform of the reversed base system.
    pub fn reverse_time(&self) -> TransformedSystem {
        TransformedSystem {
            base: self.base.reverse_time(),
            shape: self.shape.clone(),
            shape_inv: self.shape_inv.clone(),
        }
    }
}

impl VectorField for TransformedSystem {
    fn state_dim(&self) -> usize {
        self.base.n
    }

    fn dist_dim(&self) -> usize {
        self.base.m
    }

    fn disturbance(&self) -> &Hyperrect {
        &self.base.dist
    }

    fn eval_into(&self, y: &[f64], w: &[f64], out: &mut [f64]) -> Result<()> {
        let n = self.base.n;
        check_dims(n, self.base.m, y, w)?;
        let mut x: SmallVec<[f64; 8]> = SmallVec::from_elem(0.0, n);
        let mut f: SmallVec<[f64; 8]> = SmallVec::from_elem(0.0, n);
        self.shape.mul_vec_into(y, &mut x);
        self.base.eval_into(&x, w, &mut f)?;
        self.shape_inv.mul_vec_into(&f, out);
        Ok(())
    }

    fn fingerprint(&self) -> String {
        format!("{}; T={:?}", self.base.fingerprint(), self.shape.rows())
    }
}

/// Parse a field list for an `n`-state, `m`-disturbance system.
pub fn parse_field(field: &[String], m: usize) -> Result<Vec<Expr>> {
    let n = field.len();
    field
        .iter()
        .map(|s| Expr::parse_in(s, VarSpace::field(n, m)).map_err(Error::from))
        .collect()
}

/// Systems used throughout the examples and presets.
pub mod presets {
    use super::SystemDef;

    /// `ẋ₁ = x₁x₂ + w`, `ẋ₂ = x₁ + 1`, `w ∈ [0, 1/4]`.
    pub fn bilinear() -> SystemDef {
        SystemDef::parse(&["x1*x2 + w1", "x1 + 1"], &[0.0], &[0.25])
            .expect("preset parses")
            .with_note("X = R^2")
    }

    /// `ẋ₁ = x₁ − x₂ + x₂³ + w`, `ẋ₂ = x₁ − x₂`, `w ∈ [−1, 1]`.
    pub fn cubic() -> SystemDef {
        SystemDef::parse(&["x1 - x2 + x2^3 + w1", "x1 - x2"], &[-1.0], &[1.0])
            .expect("preset parses")
            .with_note("X = R^2")
    }

    /// `ẋ₁ = x₂ + sin x₂ + w`, `ẋ₂ = x₁ + cos x₁ + 1`, `w ∈ [0, 1/2]`.
    pub fn trigonometric() -> SystemDef {
        SystemDef::parse(&["x2 + sin(x2) + w1", "x1 + cos(x1) + 1"], &[0.0], &[0.5])
            .expect("preset parses")
            .with_note("X = R^2")
    }

    /// Scalar `ẋ = −x` without disturbances.
    pub fn scalar_decay() -> SystemDef {
        SystemDef::parse(&["-x1"], &[], &[]).expect("preset parses")
    }
}
