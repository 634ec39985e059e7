//! Randomized verification of the decomposition conditions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{classify, Decomposition};
use crate::error::{Error, Result};
use crate::geometry::Hyperrect;

/// The monotonicity condition a violation refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    /// `d_i` nondecreasing in `x_j`, `j ≠ i`.
    CrossState,
    /// `d` nonincreasing in `x̂`.
    HatState,
    /// `d` nondecreasing in `w` and nonincreasing in `ŵ`.
    Disturbance,
}

/// One failing finite-difference probe.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub condition: Condition,
    /// 1-based component of `d`.
    pub component: usize,
    /// Perturbed variable, e.g. `xh2`.
    pub variable: String,
    /// Signed derivative estimate; the violating direction is negative.
    pub derivative: f64,
    pub x: Vec<f64>,
    pub w: Vec<f64>,
    pub xh: Vec<f64>,
    pub wh: Vec<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViolationCounts {
    pub cross_state: usize,
    pub hat_state: usize,
    pub disturbance: usize,
}

impl ViolationCounts {
    pub fn total(&self) -> usize {
        self.cross_state + self.hat_state + self.disturbance
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckOptions {
    pub probes: usize,
    pub seed: u64,
    /// State box to sample from. Defaults to the decomposition's validation
    /// domain, or `[-1, 1]^n`.
    pub state_box: Option<Hyperrect>,
    /// Relative finite-difference step.
    pub step: f64,
    /// A derivative counts as violating only below `-slack`.
    pub slack: f64,
    /// Maximum number of witnesses kept in the report.
    pub max_witnesses: usize,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            probes: 1000,
            seed: 0,
            state_box: None,
            step: 1e-6,
            slack: 1e-7,
            max_witnesses: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub method: String,
    pub probes: usize,
    pub state_box: Hyperrect,
    /// `max |d(x, w, x, w) − F(x, w)|` over all probes.
    pub consistency_residual: f64,
    pub violations: ViolationCounts,
    /// Finite-difference probes skipped because the perturbation would break
    /// the ordering of the arguments.
    pub skipped: usize,
    pub witnesses: Vec<Violation>,
}

impl CheckReport {
    pub fn passed(&self, residual_tol: f64) -> bool {
        self.violations.total() == 0 && self.consistency_residual <= residual_tol
    }
}

#[derive(Clone, Copy)]
enum Slot {
    X,
    W,
    Xh,
    Wh,
}

/// Probe the four decomposition conditions at random ordered argument pairs.
///
/// Each probe draws two points of `state_box × W`, sorts them componentwise
/// and tests either the lower or the upper ordering (alternating). Condition
/// one is checked at both points; the sign conditions are checked by central
/// differences of the whole vector `d`.
pub fn check_decomposition(d: &Decomposition, opts: &CheckOptions) -> Result<CheckReport> {
    let (n, m) = (d.state_dim(), d.dist_dim());
    let sbox = match (&opts.state_box, d.domain()) {
        (Some(b), _) => b.clone(),
        (None, Some(b)) => b.clone(),
        (None, None) => Hyperrect::new(vec![-1.0; n], vec![1.0; n])?,
    };
    if sbox.dim() != n {
        return Err(Error::Dimension(format!(
            "check box has dimension {}, system has n = {n}",
            sbox.dim()
        )));
    }
    let wbox = d.system().disturbance().clone();
    let field = d.system().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut report = CheckReport {
        method: d.construction().name().to_string(),
        probes: opts.probes,
        state_box: sbox.clone(),
        consistency_residual: 0.0,
        violations: ViolationCounts::default(),
        skipped: 0,
        witnesses: Vec::new(),
    };
    let draw = |rng: &mut ChaCha8Rng, b: &Hyperrect| -> Vec<f64> {
        b.lo()
            .iter()
            .zip(b.hi())
            .map(|(&l, &h)| if h > l { rng.random_range(l..=h) } else { l })
            .collect()
    };
    let mut dp = vec![0.0; n];
    let mut dm = vec![0.0; n];
    for probe in 0..opts.probes {
        let (a, b) = (draw(&mut rng, &sbox), draw(&mut rng, &sbox));
        let (c, e) = (draw(&mut rng, &wbox), draw(&mut rng, &wbox));
        let lo_x: Vec<f64> = a.iter().zip(&b).map(|(p, q)| p.min(*q)).collect();
        let hi_x: Vec<f64> = a.iter().zip(&b).map(|(p, q)| p.max(*q)).collect();
        let lo_w: Vec<f64> = c.iter().zip(&e).map(|(p, q)| p.min(*q)).collect();
        let hi_w: Vec<f64> = c.iter().zip(&e).map(|(p, q)| p.max(*q)).collect();

        for (x, w) in [(&a, &c), (&b, &e)] {
            let dv = d.eval(x, w, x, w)?;
            let fv = field.eval(x, w)?;
            for (p, q) in dv.iter().zip(&fv) {
                report.consistency_residual = report.consistency_residual.max((p - q).abs());
            }
        }

        let mut args = if probe % 2 == 0 {
            [lo_x, lo_w, hi_x, hi_w]
        } else {
            [hi_x, hi_w, lo_x, lo_w]
        };
        for (slot, len) in [(Slot::X, n), (Slot::W, m), (Slot::Xh, n), (Slot::Wh, m)] {
            let idx = slot as usize;
            for j in 0..len {
                let orig = args[idx][j];
                let h = opts.step * orig.abs().max(1.0);
                args[idx][j] = orig + h;
                let ok_p = classify(&args[0], &args[1], &args[2], &args[3]).is_ok();
                args[idx][j] = orig - h;
                let ok_m = classify(&args[0], &args[1], &args[2], &args[3]).is_ok();
                let side_ok = ok_p && ok_m && {
                    args[idx][j] = orig + h;
                    let sp = classify(&args[0], &args[1], &args[2], &args[3])?;
                    args[idx][j] = orig - h;
                    let sm = classify(&args[0], &args[1], &args[2], &args[3])?;
                    sp == sm
                };
                if !side_ok {
                    args[idx][j] = orig;
                    report.skipped += 1;
                    continue;
                }
                args[idx][j] = orig + h;
                d.eval_into(&args[0], &args[1], &args[2], &args[3], &mut dp)?;
                args[idx][j] = orig - h;
                d.eval_into(&args[0], &args[1], &args[2], &args[3], &mut dm)?;
                args[idx][j] = orig;
                for i in 0..n {
                    if matches!(slot, Slot::X) && i == j {
                        continue;
                    }
                    let raw = (dp[i] - dm[i]) / (2.0 * h);
                    let (signed, cond, name) = match slot {
                        Slot::X => (raw, Condition::CrossState, format!("x{}", j + 1)),
                        Slot::Xh => (-raw, Condition::HatState, format!("xh{}", j + 1)),
                        Slot::W => (raw, Condition::Disturbance, format!("w{}", j + 1)),
                        Slot::Wh => (-raw, Condition::Disturbance, format!("wh{}", j + 1)),
                    };
                    if signed < -opts.slack {
                        match cond {
                            Condition::CrossState => report.violations.cross_state += 1,
                            Condition::HatState => report.violations.hat_state += 1,
                            Condition::Disturbance => report.violations.disturbance += 1,
                        }
                        if report.witnesses.len() < opts.max_witnesses {
                            report.witnesses.push(Violation {
                                condition: cond,
                                component: i + 1,
                                variable: name,
                                derivative: signed,
                                x: args[0].clone(),
                                w: args[1].clone(),
                                xh: args[2].clone(),
                                wh: args[3].clone(),
                            });
                        }
                    }
                }
            }
        }
    }
    Ok(report)
}
