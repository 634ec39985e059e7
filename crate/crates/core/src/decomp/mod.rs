//! Mixed-monotone decomposition functions `d(x, w, x̂, ŵ)` and their
//! constructions.
//!
//! A decomposition is evaluated on a pair of ordered arguments. When
//! `(x, w) ⪯ (x̂, ŵ)` it returns a componentwise lower bound on the field over
//! the box between them (with `x_i` pinned); when `(x̂, ŵ) ⪯ (x, w)` it returns
//! an upper bound. Unordered arguments are rejected.

mod check;
mod tight;

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::expr::{Expr, VarSpace};
use crate::geometry::Hyperrect;
use crate::system::VectorField;

pub use check::{check_decomposition, CheckOptions, CheckReport, Condition, Violation, ViolationCounts};
pub use tight::TightOptions;

/// Ordering tolerance used to classify a pair of arguments.
pub const ORDER_TOL: f64 = 1e-9;

/// Relative finite-difference step used by the sign-sampling constructions.
const SIGN_STEP: f64 = 1e-6;
/// Derivatives smaller than this (relative to `max(1, |F|)`) count as zero.
const SIGN_EPS: f64 = 1e-8;

/// Which side of the embedding a decomposition call computes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    /// `(x, w) ⪯ (x̂, ŵ)`: lower bound.
    Lower,
    /// `(x̂, ŵ) ⪯ (x, w)`: upper bound.
    Upper,
}

/// Determine the side of an argument pair, tolerating violations up to
/// [`ORDER_TOL`]. Equal arguments count as [`Side::Lower`].
pub fn classify(x: &[f64], w: &[f64], xh: &[f64], wh: &[f64]) -> Result<Side> {
    let mut le = true;
    let mut ge = true;
    for (a, b) in x.iter().zip(xh).chain(w.iter().zip(wh)) {
        if !(a.is_finite() && b.is_finite()) {
            return Err(Error::Order(format!("non-finite argument {a} / {b}")));
        }
        if *a > b + ORDER_TOL {
            le = false;
        }
        if *a < b - ORDER_TOL {
            ge = false;
        }
    }
    match (le, ge) {
        (true, _) => Ok(Side::Lower),
        (false, true) => Ok(Side::Upper),
        _ => Err(Error::Order(format!(
            "neither (x, w) ⪯ (x̂, ŵ) nor the reverse: x = {x:?}, w = {w:?}, x̂ = {xh:?}, ŵ = {wh:?}"
        ))),
    }
}

/// Sign of a Jacobian entry sampled over a domain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    /// `≥ 0` everywhere sampled (also used for identically zero entries).
    Nonneg,
    /// `≤ 0` everywhere sampled.
    Nonpos,
}

/// Serializable description of how a decomposition was built.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Construction {
    Tight {
        options: TightOptions,
    },
    JacobianSign {
        domain: Hyperrect,
        samples: usize,
        /// `state_signs[i][j]` is the sign of `∂F_i/∂x_j` (diagonal unused).
        state_signs: Vec<Vec<Sign>>,
        dist_signs: Vec<Vec<Sign>>,
    },
    Monotone {
        domain: Hyperrect,
        samples: usize,
    },
    ClosedForm {
        expressions: Vec<String>,
    },
    Combined {
        parts: Vec<Construction>,
    },
}

impl Construction {
    /// Short method name.
    pub fn name(&self) -> &'static str {
        match self {
            Construction::Tight { .. } => "tight",
            Construction::JacobianSign { .. } => "jacobian_sign",
            Construction::Monotone { .. } => "monotone",
            Construction::ClosedForm { .. } => "closed_form",
            Construction::Combined { .. } => "combined",
        }
    }
}

#[derive(Clone, Debug)]
enum Kind {
    Tight(TightOptions),
    Signs {
        state: Vec<Vec<Sign>>,
        dist: Vec<Vec<Sign>>,
    },
    Monotone,
    ClosedForm(Vec<Expr>),
    Combined(Box<Decomposition>, Box<Decomposition>),
}

/// A decomposition function for a particular system.
#[derive(Clone)]
pub struct Decomposition {
    field: Arc<dyn VectorField>,
    kind: Kind,
    construction: Construction,
    /// Domain on which a sign-based construction was validated.
    domain: Option<Hyperrect>,
}

impl fmt::Debug for Decomposition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Decomposition")
            .field("system", &self.field.fingerprint())
            .field("construction", &self.construction)
            .finish()
    }
}

type Buf = SmallVec<[f64; 8]>;

impl Decomposition {
    pub fn system(&self) -> &Arc<dyn VectorField> {
        &self.field
    }

    pub fn state_dim(&self) -> usize {
        self.field.state_dim()
    }

    pub fn dist_dim(&self) -> usize {
        self.field.dist_dim()
    }

    pub fn construction(&self) -> &Construction {
        &self.construction
    }

    /// The validation domain of a sign-based construction, if any.
    pub fn domain(&self) -> Option<&Hyperrect> {
        self.domain.as_ref()
    }

    /// Evaluate `d(x, w, x̂, ŵ)`.
    pub fn eval(&self, x: &[f64], w: &[f64], xh: &[f64], wh: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.state_dim()];
        self.eval_into(x, w, xh, wh, &mut out)?;
        Ok(out)
    }

    /// Evaluate `d(x, w, x̂, ŵ)` into `out`.
    pub fn eval_into(&self, x: &[f64], w: &[f64], xh: &[f64], wh: &[f64], out: &mut [f64]) -> Result<()> {
        let (n, m) = (self.state_dim(), self.dist_dim());
        if x.len() != n || xh.len() != n || w.len() != m || wh.len() != m || out.len() != n {
            return Err(Error::Dimension(format!(
                "decomposition expects states in R^{n} and disturbances in R^{m}; got {}, {}, {}, {} (output {})",
                x.len(),
                w.len(),
                xh.len(),
                wh.len(),
                out.len()
            )));
        }
        let side = classify(x, w, xh, wh)?;
        self.eval_side(side, x, w, xh, wh, out)
    }

    fn eval_side(&self, side: Side, x: &[f64], w: &[f64], xh: &[f64], wh: &[f64], out: &mut [f64]) -> Result<()> {
        match &self.kind {
            Kind::Tight(opts) => {
                let n = x.len();
                let mut ylo: Buf = SmallVec::with_capacity(n);
                let mut yhi: Buf = SmallVec::with_capacity(n);
                for (a, b) in x.iter().zip(xh) {
                    ylo.push(a.min(*b));
                    yhi.push(a.max(*b));
                }
                let mut zlo: Buf = SmallVec::with_capacity(w.len());
                let mut zhi: Buf = SmallVec::with_capacity(w.len());
                for (a, b) in w.iter().zip(wh) {
                    zlo.push(a.min(*b));
                    zhi.push(a.max(*b));
                }
                for (i, o) in out.iter_mut().enumerate() {
                    *o = tight::extremize(
                        self.field.as_ref(),
                        i,
                        x[i],
                        &ylo,
                        &yhi,
                        &zlo,
                        &zhi,
                        side == Side::Upper,
                        opts,
                    )?;
                }
                Ok(())
            }
            Kind::Signs { state, dist } => {
                let n = x.len();
                let mut xi: Buf = SmallVec::from_elem(0.0, n);
                let mut zeta: Buf = SmallVec::from_elem(0.0, w.len());
                for i in 0..n {
                    for j in 0..n {
                        xi[j] = if j == i || state[i][j] == Sign::Nonneg {
                            x[j]
                        } else {
                            xh[j]
                        };
                    }
                    for k in 0..w.len() {
                        zeta[k] = if dist[i][k] == Sign::Nonneg { w[k] } else { wh[k] };
                    }
                    out[i] = self.field.eval_component(i, &xi, &zeta)?;
                }
                Ok(())
            }
            Kind::Monotone => self.field.eval_into(x, w, out),
            Kind::ClosedForm(exprs) => {
                for (o, e) in out.iter_mut().zip(exprs) {
                    *o = e.eval_vars(&[x, w, xh, wh])?;
                }
                Ok(())
            }
            Kind::Combined(a, b) => {
                let n = x.len();
                let mut other: Buf = SmallVec::from_elem(0.0, n);
                a.eval_side(side, x, w, xh, wh, out)?;
                b.eval_side(side, x, w, xh, wh, &mut other)?;
                for (o, v) in out.iter_mut().zip(&other) {
                    *o = match side {
                        Side::Lower => o.max(*v),
                        Side::Upper => o.min(*v),
                    };
                }
                Ok(())
            }
        }
    }
}

/// The tight decomposition: each component is the exact extremum of `F_i`
/// over the box spanned by the arguments, computed numerically.
pub fn tight_decomposition(field: Arc<dyn VectorField>) -> Decomposition {
    tight_decomposition_with(field, TightOptions::default())
}

/// [`tight_decomposition`] with explicit optimizer settings.
pub fn tight_decomposition_with(field: Arc<dyn VectorField>, options: TightOptions) -> Decomposition {
    Decomposition {
        field,
        kind: Kind::Tight(options),
        construction: Construction::Tight { options },
        domain: None,
    }
}

struct SignSample {
    pos: Option<Vec<f64>>,
    neg: Option<Vec<f64>>,
}

/// Sample off-diagonal Jacobian signs over `domain × W`.
fn sample_signs(
    field: &dyn VectorField,
    domain: &Hyperrect,
    samples: usize,
    seed: u64,
) -> Result<(Vec<Vec<SignSample>>, Vec<Vec<SignSample>>)> {
    let (n, m) = (field.state_dim(), field.dist_dim());
    if domain.dim() != n {
        return Err(Error::Dimension(format!(
            "sampling domain has dimension {}, system has n = {n}",
            domain.dim()
        )));
    }
    let dist = field.disturbance().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let new = |cols: usize| -> Vec<Vec<SignSample>> {
        (0..n)
            .map(|_| (0..cols).map(|_| SignSample { pos: None, neg: None }).collect())
            .collect()
    };
    let mut sx = new(n);
    let mut sw = new(m);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; m];
    let total = samples.max(1) + (1 << n.min(10)) * (1 << m.min(10));
    for s in 0..total {
        // Corners of domain × W first, then uniform samples.
        let corners = (1usize << n.min(10)) * (1usize << m.min(10));
        if s < corners && n <= 10 && m <= 10 {
            let (cx, cw) = (s % (1 << n), s >> n);
            x.copy_from_slice(&domain.corner(cx));
            w.copy_from_slice(&dist.corner(cw));
        } else {
            for (j, v) in x.iter_mut().enumerate() {
                *v = uniform(&mut rng, domain.lo()[j], domain.hi()[j]);
            }
            for (k, v) in w.iter_mut().enumerate() {
                *v = uniform(&mut rng, dist.lo()[k], dist.hi()[k]);
            }
        }
        for i in 0..n {
            let f0 = field.eval_component(i, &x, &w)?.abs().max(1.0);
            for j in 0..n {
                if j == i {
                    continue;
                }
                let d = central(field, i, &mut x, &mut w, j, true)?;
                record(&mut sx[i][j], d, SIGN_EPS * f0, &x, &w);
            }
            for k in 0..m {
                let d = central(field, i, &mut x, &mut w, k, false)?;
                record(&mut sw[i][k], d, SIGN_EPS * f0, &x, &w);
            }
        }
    }
    Ok((sx, sw))
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

fn central(field: &dyn VectorField, i: usize, x: &mut [f64], w: &mut [f64], j: usize, state: bool) -> Result<f64> {
    let v = if state { &mut x[j] } else { &mut w[j] };
    let orig = *v;
    let h = SIGN_STEP * orig.abs().max(1.0);
    let set = |x: &mut [f64], w: &mut [f64], val: f64| {
        if state {
            x[j] = val
        } else {
            w[j] = val
        }
    };
    set(x, w, orig + h);
    let fp = field.eval_component(i, x, w);
    set(x, w, orig - h);
    let fm = field.eval_component(i, x, w);
    set(x, w, orig);
    Ok((fp? - fm?) / (2.0 * h))
}

fn record(s: &mut SignSample, d: f64, eps: f64, x: &[f64], w: &[f64]) {
    let at = || x.iter().chain(w).copied().collect::<Vec<_>>();
    if d > eps && s.pos.is_none() {
        s.pos = Some(at());
    } else if d < -eps && s.neg.is_none() {
        s.neg = Some(at());
    }
}

fn var_name(j: usize, state: bool) -> String {
    if state {
        format!("x{}", j + 1)
    } else {
        format!("w{}", j + 1)
    }
}

/// Decomposition from sampled Jacobian signs. Each off-diagonal entry of
/// `∂F/∂x` and every entry of `∂F/∂w` must keep one sign over `domain × W`;
/// otherwise an [`Error::Indefinite`] with a witness pair is returned.
///
/// The result is a valid decomposition only on `domain`.
pub fn jacobian_sign_decomposition(
    field: Arc<dyn VectorField>,
    domain: &Hyperrect,
    samples: usize,
    seed: u64,
) -> Result<Decomposition> {
    let (sx, sw) = sample_signs(field.as_ref(), domain, samples, seed)?;
    let resolve = |rows: Vec<Vec<SignSample>>, state: bool| -> Result<Vec<Vec<Sign>>> {
        rows.into_iter()
            .enumerate()
            .map(|(i, row)| {
                row.into_iter()
                    .enumerate()
                    .map(|(j, s)| match (s.pos, s.neg) {
                        (Some(p), Some(q)) => Err(Error::Indefinite {
                            row: i + 1,
                            col: var_name(j, state),
                            positive_at: p,
                            negative_at: q,
                        }),
                        (None, Some(_)) => Ok(Sign::Nonpos),
                        _ => Ok(Sign::Nonneg),
                    })
                    .collect()
            })
            .collect()
    };
    let state = resolve(sx, true)?;
    let dist = resolve(sw, false)?;
    Ok(Decomposition {
        field,
        construction: Construction::JacobianSign {
            domain: domain.clone(),
            samples,
            state_signs: state.clone(),
            dist_signs: dist.clone(),
        },
        kind: Kind::Signs { state, dist },
        domain: Some(domain.clone()),
    })
}

/// `d(x, w, x̂, ŵ) = F(x, w)` for a field that is monotone on `domain × W`
/// (nonnegative off-diagonal state partials and nonnegative disturbance
/// partials, checked by sampling).
pub fn monotone_decomposition(
    field: Arc<dyn VectorField>,
    domain: &Hyperrect,
    samples: usize,
    seed: u64,
) -> Result<Decomposition> {
    let (sx, sw) = sample_signs(field.as_ref(), domain, samples, seed)?;
    for (rows, state) in [(&sx, true), (&sw, false)] {
        for (i, row) in rows.iter().enumerate() {
            for (j, s) in row.iter().enumerate() {
                if let Some(at) = &s.neg {
                    let n = field.state_dim();
                    let (x, w) = at.split_at(n);
                    let mut x = x.to_vec();
                    let mut w = w.to_vec();
                    let value = central(field.as_ref(), i, &mut x, &mut w, j, state)?;
                    return Err(Error::NotMonotone {
                        what: format!("∂F{}/∂{}", i + 1, var_name(j, state)),
                        value,
                        at: at.clone(),
                    });
                }
            }
        }
    }
    Ok(Decomposition {
        field,
        kind: Kind::Monotone,
        construction: Construction::Monotone {
            domain: domain.clone(),
            samples,
        },
        domain: Some(domain.clone()),
    })
}

/// A user-supplied decomposition, one expression per component over the
/// variables `x, w, xh, wh`.
pub fn closed_form_decomposition(field: Arc<dyn VectorField>, exprs: Vec<Expr>) -> Result<Decomposition> {
    let (n, m) = (field.state_dim(), field.dist_dim());
    if exprs.len() != n {
        return Err(Error::Dimension(format!(
            "closed-form decomposition needs {n} expressions, got {}",
            exprs.len()
        )));
    }
    let want = VarSpace::decomposition(n, m);
    for e in &exprs {
        if e.space() != want {
            return Err(Error::Dimension(format!(
                "expression `{e}` is declared over {:?}, expected {want:?}",
                e.space()
            )));
        }
    }
    Ok(Decomposition {
        field,
        construction: Construction::ClosedForm {
            expressions: exprs.iter().map(|e| e.to_string()).collect(),
        },
        kind: Kind::ClosedForm(exprs),
        domain: None,
    })
}

/// Parse and build a closed-form decomposition.
pub fn closed_form_from_str(field: Arc<dyn VectorField>, exprs: &[&str]) -> Result<Decomposition> {
    let space = VarSpace::decomposition(field.state_dim(), field.dist_dim());
    let parsed = exprs
        .iter()
        .map(|s| Expr::parse_in(s, space).map_err(Error::from))
        .collect::<Result<Vec<_>>>()?;
    closed_form_decomposition(field, parsed)
}

/// Componentwise max (lower side) / min (upper side) of two decompositions of
/// the same system.
pub fn combine(a: &Decomposition, b: &Decomposition) -> Result<Decomposition> {
    if a.field.fingerprint() != b.field.fingerprint() {
        return Err(Error::SystemMismatch);
    }
    let domain = match (&a.domain, &b.domain) {
        (Some(p), Some(q)) => p.intersect(q),
        (Some(p), None) | (None, Some(p)) => Some(p.clone()),
        (None, None) => None,
    };
    Ok(Decomposition {
        field: a.field.clone(),
        construction: Construction::Combined {
            parts: vec![a.construction.clone(), b.construction.clone()],
        },
        kind: Kind::Combined(Box::new(a.clone()), Box::new(b.clone())),
        domain,
    })
}
