mod common;

use common::*;
use mmreach::decomp::{closed_form_from_str, combine, jacobian_sign_decomposition, tight_decomposition, Decomposition};
use mmreach::geometry::{clip_intersection_2d, se_leq, EmbeddingState, Hyperrect, Matrix, Parallelotope, Polygon2D};
use mmreach::system::presets;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn interval() -> impl Strategy<Value = (f64, f64)> {
    (-2.0f64..2.0, 0.0f64..2.0).prop_map(|(a, w)| (a, a + w))
}

fn state2() -> impl Strategy<Value = EmbeddingState> {
    (interval(), interval()).prop_map(|((a, b), (c, d))| EmbeddingState::new(vec![a, c], vec![b, d]).unwrap())
}

fn matrix2() -> impl Strategy<Value = Matrix> {
    prop::array::uniform4(-2.0f64..2.0)
        .prop_map(|v| Matrix::from_rows(&[vec![v[0], v[1]], vec![v[2], v[3]]]).unwrap())
        .prop_filter("well conditioned", |t| t.det().abs() > 0.1)
}

fn parallelogram() -> impl Strategy<Value = Parallelotope> {
    (matrix2(), interval(), interval())
        .prop_map(|(t, (a, b), (c, d))| Parallelotope::new(t, Hyperrect::new(vec![a, c], vec![b, d]).unwrap()).unwrap())
}

/// Parallelogram of positive area around the origin.
fn centered_parallelogram() -> impl Strategy<Value = Polygon2D> {
    (matrix2(), 0.2f64..1.5, 0.2f64..1.5).prop_map(|(t, a, b)| {
        Parallelotope::new(t, Hyperrect::new(vec![-a, -b], vec![a, b]).unwrap())
            .unwrap()
            .to_polygon()
            .unwrap()
    })
}

fn inside(b: &Hyperrect, x: &[f64]) -> bool {
    (0..x.len()).all(|i| b.lo()[i] <= x[i] && x[i] <= b.hi()[i])
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, ..ProptestConfig::default() })]

    /// `a ⪯_SE b` exactly when b's box lies inside a's, judged by membership
    /// of b's corners and 1000 random points of b.
    #[test]
    fn se_order_is_box_inclusion(a in state2(), b in state2(), seed in any::<u64>()) {
        let (ba, bb) = (a.to_box().unwrap(), b.to_box().unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut probes: Vec<Vec<f64>> = (0..4).map(|m| bb.corner(m)).collect();
        for _ in 0..1000 {
            probes.push((0..2).map(|i| rng.random_range(bb.lo()[i]..=bb.hi()[i])).collect());
        }
        let contained = probes.iter().all(|x| inside(&ba, x));
        prop_assert_eq!(se_leq(&a, &b).unwrap(), contained);
    }

    #[test]
    fn vertices_are_members(p in parallelogram()) {
        for v in p.vertices().unwrap() {
            prop_assert!(p.contains_tol(&v, 1e-9).unwrap(), "{:?}", v);
        }
    }

    #[test]
    fn polygon_area_is_det_times_box_area(p in parallelogram()) {
        let w = p.coords().widths();
        let expected = p.shape().det().abs() * w[0] * w[1];
        let area = p.to_polygon().map(|q| q.area()).unwrap_or(0.0);
        prop_assert!((area - expected).abs() <= 1e-9 * expected.max(1.0), "{} vs {}", area, expected);
    }

    #[test]
    fn clipping_is_commutative_and_idempotent(p in centered_parallelogram(), q in centered_parallelogram()) {
        let pq = clip_intersection_2d(&[p.clone(), q.clone()]).unwrap().expect("both contain the origin");
        let qp = clip_intersection_2d(&[q.clone(), p.clone()]).unwrap().expect("both contain the origin");
        prop_assert!(pq.approx_eq(&qp, 1e-9), "{:?} vs {:?}", pq, qp);
        let pp = clip_intersection_2d(&[p.clone(), p.clone()]).unwrap().unwrap();
        prop_assert!(pp.approx_eq(&p, 1e-9));
        prop_assert!(pq.area() <= p.area().min(q.area()) + 1e-9);
    }
}

/// Random ordered quadruple on the lower side inside `b` (and `W`).
fn lower_pair(rng: &mut ChaCha8Rng, b: &Hyperrect, w: &Hyperrect) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut draw = |lo: &[f64], hi: &[f64]| -> (Vec<f64>, Vec<f64>) {
        (0..lo.len())
            .map(|i| {
                let (u, v) = (rng.random_range(lo[i]..=hi[i]), rng.random_range(lo[i]..=hi[i]));
                (u.min(v), u.max(v))
            })
            .unzip()
    };
    let (x, xh) = draw(b.lo(), b.hi());
    let (w1, wh) = draw(w.lo(), w.hi());
    (x, w1, xh, wh)
}

/// Evaluate both decompositions on 1000 random ordered pairs, both sides;
/// returns the worst amount by which `a` is looser than `b`.
fn looseness(a: &Decomposition, b: &Decomposition, region: &Hyperrect, seed: u64) -> f64 {
    let w = a.system().disturbance().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::NEG_INFINITY;
    for k in 0..1000 {
        let (x, wl, xh, wh) = lower_pair(&mut rng, region, &w);
        let (u, v) = if k % 2 == 0 {
            (a.eval(&x, &wl, &xh, &wh).unwrap(), b.eval(&x, &wl, &xh, &wh).unwrap())
        } else {
            let (u, v) = (a.eval(&xh, &wh, &x, &wl).unwrap(), b.eval(&xh, &wh, &x, &wl).unwrap());
            (u.iter().map(|s| -s).collect(), v.iter().map(|s| -s).collect())
        };
        // Lower side: larger is tighter. Upper side was negated above.
        for (s, t) in u.iter().zip(&v) {
            worst = worst.max(t - s);
        }
    }
    worst
}

fn bilinear_family() -> Vec<Decomposition> {
    let s = arc(&bilinear());
    let dom = Hyperrect::new(vec![0.0, -2.0], vec![2.0, 2.0]).unwrap();
    vec![
        closed_form_from_str(s.clone(), &BILINEAR_TIGHT).unwrap(),
        closed_form_from_str(s.clone(), &["x1*x2 + w1 - (xh2 - x2)", "x1 + 1"]).unwrap(),
        closed_form_from_str(
            s.clone(),
            &["max(x1, 0)*x2 + min(x1, 0)*xh2 + w1", "x1 + 1 - 0.5*(xh1 - x1)"],
        )
        .unwrap(),
        jacobian_sign_decomposition(s, &dom, 1000, 3).unwrap(),
    ]
}

#[test]
fn tight_dominates_other_decompositions() {
    let tight = tight_decomposition(arc(&bilinear()));
    // The sign-based decomposition is only valid on x1 ≥ 0.
    let region = Hyperrect::new(vec![0.0, -2.0], vec![2.0, 2.0]).unwrap();
    for (k, d) in bilinear_family().iter().enumerate() {
        let gap = looseness(&tight, d, &region, 40 + k as u64);
        assert!(gap <= 1e-7, "decomposition {k}: tight is looser by {gap}");
    }
}

#[test]
fn combine_dominates_both_inputs_exactly() {
    let fam = bilinear_family();
    let region = Hyperrect::new(vec![0.0, -2.0], vec![2.0, 2.0]).unwrap();
    for i in 0..fam.len() {
        for j in 0..fam.len() {
            let c = combine(&fam[i], &fam[j]).unwrap();
            assert!(looseness(&c, &fam[i], &region, 7) <= 0.0);
            assert!(looseness(&c, &fam[j], &region, 7) <= 0.0);
        }
    }
}

#[test]
fn combine_identities() {
    let s = presets::cubic();
    let tight = tight_decomposition(arc(&s));
    // Combining any function with itself leaves it unchanged, valid or not.
    let closed = closed_form_from_str(arc(&s), &["x1 - xh2 + x2^3 + w1", "x1 - xh2"]).unwrap();
    let region = Hyperrect::new(vec![-1.5, -1.5], vec![1.5, 1.5]).unwrap();
    let same = combine(&closed, &closed).unwrap();
    assert_eq!(looseness(&same, &closed, &region, 1), 0.0);
    assert_eq!(looseness(&closed, &same, &region, 1), 0.0);

    let bil = arc(&bilinear());
    let tight_b = tight_decomposition(bil.clone());
    // The penalized forms are valid for x1 ≥ -1.
    let region_b = Hyperrect::new(vec![-1.0, -2.0], vec![2.0, 2.0]).unwrap();
    for other in bilinear_family().iter().take(3) {
        let c = combine(&tight_b, other).unwrap();
        let g1 = looseness(&c, &tight_b, &region_b, 2);
        let g2 = looseness(&tight_b, &c, &region_b, 2);
        assert!(g1 <= 1e-9 && g2 <= 1e-9, "{g1} {g2}");
    }
    let c = combine(&tight, &tight).unwrap();
    assert!(looseness(&c, &tight, &region, 3) <= 0.0);
}
