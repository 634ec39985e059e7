//! Embedding systems and hyperrectangular reachable-set bounds.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::decomp::Decomposition;
use crate::error::{Error, Result};
use crate::geometry::{EmbeddingState, Hyperrect};
use crate::ode::{step_grid, Rk4};

/// Order violations up to this size are treated as rounding and clipped.
pub const ORDER_CLIP_TOL: f64 = 1e-9;
/// Largest admissible number of integration steps.
pub const MAX_STEPS: f64 = 1e8;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    #[default]
    Forward,
    Backward,
}

/// Horizon, step and direction of a reachability computation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReachSpec {
    pub horizon: f64,
    pub dt: f64,
    #[serde(default)]
    pub direction: Direction,
}

impl ReachSpec {
    pub fn new(horizon: f64, dt: f64, direction: Direction) -> Result<Self> {
        let s = Self { horizon, dt, direction };
        s.validate()?;
        Ok(s)
    }

    pub fn forward(horizon: f64, dt: f64) -> Result<Self> {
        Self::new(horizon, dt, Direction::Forward)
    }

    pub fn backward(horizon: f64, dt: f64) -> Result<Self> {
        Self::new(horizon, dt, Direction::Backward)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon.is_finite() && self.horizon >= 0.0) {
            return Err(Error::Spec(format!(
                "horizon must be finite and ≥ 0, got {}",
                self.horizon
            )));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::Spec(format!("dt must be finite and > 0, got {}", self.dt)));
        }
        if self.horizon > 0.0 && self.dt > self.horizon {
            return Err(Error::Spec(format!(
                "dt = {} exceeds the horizon {}",
                self.dt, self.horizon
            )));
        }
        if self.horizon / self.dt > MAX_STEPS {
            return Err(Error::Spec(format!(
                "horizon / dt = {:.3e} exceeds the step limit {MAX_STEPS:e}",
                self.horizon / self.dt
            )));
        }
        Ok(())
    }
}

/// Sampled solution of an ODE.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<&[f64]> {
        self.states.last().map(Vec::as_slice)
    }

    /// For an embedding trajectory, the box `⟦lower, upper⟧` at each stored time.
    pub fn boxes(&self) -> Result<Vec<Hyperrect>> {
        self.states
            .iter()
            .map(|s| {
                let n = s.len() / 2;
                Hyperrect::new(s[..n].to_vec(), s[n..].to_vec())
            })
            .collect()
    }

    /// CSV with a header `t,s1,s2,...`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let dim = self.states.first().map_or(0, Vec::len);
        write!(out, "t")?;
        for k in 1..=dim {
            write!(out, ",s{k}")?;
        }
        writeln!(out)?;
        for (t, s) in self.times.iter().zip(&self.states) {
            write!(out, "{t:.17e}")?;
            for v in s {
                write!(out, ",{v:.17e}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// `E(x, x̂) = (d(x, w̲, x̂, w̄), d(x̂, w̄, x, w̲))`.
#[derive(Clone, Debug)]
pub struct EmbeddingFunction {
    decomposition: Decomposition,
    w_lo: Vec<f64>,
    w_hi: Vec<f64>,
}

impl EmbeddingFunction {
    pub fn new(decomposition: Decomposition) -> Self {
        let dist = decomposition.system().disturbance().clone();
        Self {
            w_lo: dist.lo().to_vec(),
            w_hi: dist.hi().to_vec(),
            decomposition,
        }
    }

    pub fn decomposition(&self) -> &Decomposition {
        &self.decomposition
    }

    pub fn state_dim(&self) -> usize {
        self.decomposition.state_dim()
    }

    /// Evaluate on the stacked state `(x, x̂)`.
    pub fn eval_into(&self, state: &[f64], out: &mut [f64]) -> Result<()> {
        let n = self.state_dim();
        if state.len() != 2 * n || out.len() != 2 * n {
            return Err(Error::Dimension(format!(
                "embedding state must have length {}, got {} (output {})",
                2 * n,
                state.len(),
                out.len()
            )));
        }
        let (x, xh) = state.split_at(n);
        let violation = x.iter().zip(xh).map(|(a, b)| a - b).fold(0.0, f64::max);
        if violation > ORDER_CLIP_TOL {
            return Err(Error::IntegratorStep {
                time: f64::NAN,
                violation,
            });
        }
        let (lo, hi) = out.split_at_mut(n);
        self.decomposition.eval_into(x, &self.w_lo, xh, &self.w_hi, lo)?;
        self.decomposition.eval_into(xh, &self.w_hi, x, &self.w_lo, hi)
    }

    pub fn eval(&self, state: &EmbeddingState) -> Result<EmbeddingState> {
        let n = self.state_dim();
        let mut s = state.lower.clone();
        s.extend_from_slice(&state.upper);
        let mut out = vec![0.0; 2 * n];
        self.eval_into(&s, &mut out)?;
        Ok(EmbeddingState {
            upper: out.split_off(n),
            lower: out,
        })
    }
}

pub fn embedding_function(d: Decomposition) -> EmbeddingFunction {
    EmbeddingFunction::new(d)
}

/// RK4 integration of the embedding system from `a0` over `spec.horizon`.
///
/// The direction field of `spec` is ignored here; backward reach is obtained
/// by passing a decomposition of the time-reversed system.
pub fn integrate(e: &EmbeddingFunction, a0: &EmbeddingState, spec: &ReachSpec) -> Result<Trajectory> {
    spec.validate()?;
    let n = e.state_dim();
    if a0.dim() != n {
        return Err(Error::Dimension(format!(
            "initial embedding state has dimension {}, system has n = {n}",
            a0.dim()
        )));
    }
    let mut y = a0.lower.clone();
    y.extend_from_slice(&a0.upper);
    let steps = step_grid(spec.horizon, spec.dt);
    let mut traj = Trajectory {
        times: Vec::with_capacity(steps.len() + 1),
        states: Vec::with_capacity(steps.len() + 1),
    };
    traj.times.push(0.0);
    traj.states.push(y.clone());
    let mut rk = Rk4::new(2 * n);
    let mut t = 0.0;
    for (k, h) in steps.iter().enumerate() {
        let res = rk.step(&mut y, *h, |s, out| {
            if s.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence { last_time: t });
            }
            e.eval_into(s, out)
        });
        match res {
            Ok(()) => {}
            Err(Error::IntegratorStep { violation, .. }) => return Err(Error::IntegratorStep { time: t, violation }),
            Err(Error::Expr(crate::error::ExprError::NonFinite { .. })) => {
                return Err(Error::Divergence { last_time: t })
            }
            Err(err) => return Err(err),
        }
        let t_next = if k + 1 == steps.len() {
            spec.horizon
        } else {
            (k + 1) as f64 * spec.dt
        };
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { last_time: t });
        }
        for i in 0..n {
            let gap = y[i] - y[n + i];
            if gap > ORDER_CLIP_TOL {
                return Err(Error::IntegratorStep {
                    time: t_next,
                    violation: gap,
                });
            }
            if gap > 0.0 {
                y.swap(i, n + i);
            }
        }
        t = t_next;
        traj.times.push(t);
        traj.states.push(y.clone());
    }
    Ok(traj)
}

fn reach_box(d: &Decomposition, x0: &Hyperrect, spec: &ReachSpec) -> Result<Hyperrect> {
    let e = EmbeddingFunction::new(d.clone());
    let traj = integrate(&e, &EmbeddingState::from_box(x0), spec)?;
    let last = traj.last().expect("trajectory holds the initial state");
    let n = x0.dim();
    Hyperrect::new(last[..n].to_vec(), last[n..].to_vec())
}

/// Hyperrectangle containing every state reachable at `spec.horizon` from
/// `x0` under all disturbance signals in `W`.
pub fn forward_reach_box(d: &Decomposition, x0: &Hyperrect, spec: &ReachSpec) -> Result<Hyperrect> {
    if spec.direction != Direction::Forward {
        return Err(Error::Spec("forward_reach_box needs a forward spec".into()));
    }
    reach_box(d, x0, spec)
}

/// Hyperrectangle containing every state from which `x0` is reachable at
/// `spec.horizon` for some disturbance signal. `d_neg` must decompose the
/// time-reversed system.
pub fn backward_reach_box(d_neg: &Decomposition, x0: &Hyperrect, spec: &ReachSpec) -> Result<Hyperrect> {
    if spec.direction != Direction::Backward {
        return Err(Error::Spec("backward_reach_box needs a backward spec".into()));
    }
    reach_box(d_neg, x0, spec)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::decomp::{monotone_decomposition, tight_decomposition};
    use crate::geometry::Matrix;
    use crate::system::{presets, SystemDef, VectorField};

    fn scalar() -> Decomposition {
        monotone_decomposition(
            Arc::new(presets::scalar_decay()),
            &Hyperrect::new(vec![-5.0], vec![5.0]).unwrap(),
            10,
            0,
        )
        .unwrap()
    }

    #[test]
    fn spec_validation() {
        assert!(ReachSpec::forward(1.0, 0.01).is_ok());
        assert!(ReachSpec::forward(0.0, 0.01).is_ok());
        assert!(matches!(ReachSpec::forward(1.0, 2.0), Err(Error::Spec(_))));
        assert!(matches!(ReachSpec::forward(1.0, 0.0), Err(Error::Spec(_))));
        assert!(matches!(ReachSpec::forward(-1.0, 0.1), Err(Error::Spec(_))));
        assert!(matches!(ReachSpec::forward(1.0, 1e-9), Err(Error::Spec(_))));
    }

    #[test]
    fn scalar_decay_forward_and_backward() {
        let d = scalar();
        let b = forward_reach_box(
            &d,
            &Hyperrect::new(vec![1.0], vec![2.0]).unwrap(),
            &ReachSpec::forward(1.0, 1e-3).unwrap(),
        )
        .unwrap();
        let e1 = (-1.0f64).exp();
        assert!((b.lo()[0] - e1).abs() < 1e-6 && (b.hi()[0] - 2.0 * e1).abs() < 1e-6);

        let rev = monotone_decomposition(
            Arc::new(presets::scalar_decay().reverse_time()),
            &Hyperrect::new(vec![-5.0], vec![5.0]).unwrap(),
            10,
            0,
        )
        .unwrap();
        let b = backward_reach_box(
            &rev,
            &Hyperrect::new(vec![e1], vec![2.0 * e1]).unwrap(),
            &ReachSpec::backward(1.0, 1e-3).unwrap(),
        )
        .unwrap();
        assert!((b.lo()[0] - 1.0).abs() < 1e-6 && (b.hi()[0] - 2.0).abs() < 1e-6);
        assert!(forward_reach_box(&rev, &b, &ReachSpec::backward(1.0, 1e-3).unwrap()).is_err());
    }

    #[test]
    fn zero_horizon_is_identity() {
        let d = tight_decomposition(Arc::new(presets::bilinear()));
        let x0 = Hyperrect::new(vec![0.0, -0.25], vec![0.75, 0.25]).unwrap();
        let e = EmbeddingFunction::new(d.clone());
        let tr = integrate(
            &e,
            &EmbeddingState::from_box(&x0),
            &ReachSpec::forward(0.0, 0.1).unwrap(),
        )
        .unwrap();
        assert_eq!(tr.len(), 1);
        assert_eq!(
            forward_reach_box(&d, &x0, &ReachSpec::forward(0.0, 0.1).unwrap()).unwrap(),
            x0
        );
    }

    #[test]
    fn monotone_embedding_example() {
        let t1 = Matrix::from_rows(&[vec![1.0, 1.0], vec![0.0, 1.0]]).unwrap();
        let ft = Arc::new(presets::cubic().transform(&t1).unwrap());
        let d = monotone_decomposition(ft, &Hyperrect::new(vec![-2.0, -2.0], vec![2.0, 2.0]).unwrap(), 100, 0).unwrap();
        let e = embedding_function(d);
        let out = e
            .eval(&EmbeddingState::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap())
            .unwrap();
        for (a, b) in out.lower.iter().chain(&out.upper).zip([-1.0, 0.0, 2.0, 1.0]) {
            assert!((a - b).abs() < 1e-12, "{out:?}");
        }
    }

    #[test]
    fn tight_embedding_lower_half() {
        let d = tight_decomposition(Arc::new(presets::bilinear()));
        let e = embedding_function(d);
        let out = e
            .eval(&EmbeddingState::new(vec![1.0, 0.0], vec![2.0, 1.0]).unwrap())
            .unwrap();
        assert_eq!(out.lower, vec![0.0, 2.0]);
        // Upper half: max of x1 x2 + w with x1 = 2, x2 ∈ [0, 1], w = 1/4; x̂1 + 1.
        assert_eq!(out.upper, vec![2.25, 3.0]);
    }

    #[test]
    fn degenerate_disturbance_collapses() {
        let s = SystemDef::parse(&["x1*x2 + w1", "x1 + 1"], &[0.1], &[0.1]).unwrap();
        let f = s.eval(&[0.3, 0.4], &[0.1]).unwrap();
        let e = embedding_function(tight_decomposition(Arc::new(s)));
        let out = e
            .eval(&EmbeddingState::new(vec![0.3, 0.4], vec![0.3, 0.4]).unwrap())
            .unwrap();
        assert_eq!(out.lower, f);
        assert_eq!(out.upper, f);
    }

    #[test]
    fn divergence_reported() {
        let s = SystemDef::parse(&["x1^2"], &[], &[]).unwrap();
        let d = monotone_decomposition(Arc::new(s), &Hyperrect::new(vec![0.0], vec![1.0]).unwrap(), 10, 0).unwrap();
        let err = forward_reach_box(
            &d,
            &Hyperrect::new(vec![1.0], vec![2.0]).unwrap(),
            &ReachSpec::forward(2.0, 1e-3).unwrap(),
        )
        .unwrap_err();
        match err {
            Error::Divergence { last_time } => assert!(last_time > 0.4 && last_time < 1.0, "{last_time}"),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn order_violation_reported() {
        // A bogus closed form that drives lower above upper.
        let sys: Arc<dyn VectorField> = Arc::new(presets::scalar_decay());
        let d = crate::decomp::closed_form_from_str(sys, &["-x1 + 10*(xh1 - x1)"]).unwrap();
        let err = forward_reach_box(
            &d,
            &Hyperrect::new(vec![0.0], vec![1.0]).unwrap(),
            &ReachSpec::forward(1.0, 0.1).unwrap(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::IntegratorStep { .. }), "{err:?}");
    }

    #[test]
    fn csv_export() {
        let tr = Trajectory {
            times: vec![0.0, 0.5],
            states: vec![vec![1.0, 2.0], vec![3.0, 4.0]],
        };
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "t,s1,s2");
        assert_eq!(lines.len(), 3);
        let parsed: Vec<f64> = lines[2].split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(parsed, vec![0.5, 3.0, 4.0]);
    }
}
