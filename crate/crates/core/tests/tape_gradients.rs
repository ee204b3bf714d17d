use diffevo::gradcheck::{check_graph, TOLERANCE};
use diffevo::tape::{Tape, TapeError};
use proptest::prelude::*;

fn vec6() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, 6)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn composite_graph_matches_finite_differences(a in vec6(), b in vec6()) {
        let c = check_graph(
            "composite",
            &[("a", a, 2, 3), ("b", b, 2, 3)],
            |t, v| {
                let p = t.mul(v[0], v[1])?;
                let p = t.tanh(p)?;
                let s = t.sin(v[0])?;
                let s = t.exp(s)?;
                let q = t.add(p, s)?;
                let r = t.sum_rows(q)?;
                let m = t.square(v[1])?;
                let m = t.mean_rows(m)?;
                let den = t.shift(m, 1.0)?;
                t.div(r, den)
            },
        )
        .unwrap();
        prop_assert!(c.max_rel_err < TOLERANCE, "{c:?}");
    }

    #[test]
    fn linear_form_has_constant_gradient(x in vec6(), w in vec6()) {
        let mut t = Tape::new();
        let xv = t.param("x", x, 6, 1).unwrap();
        let wv = t.constant(w.clone(), 6, 1).unwrap();
        let p = t.mul(xv, wv).unwrap();
        let l = t.sum(p).unwrap();
        t.backward(l).unwrap();
        prop_assert_eq!(t.grad(xv).unwrap(), w.as_slice());
    }

    #[test]
    fn clamp_passes_inside_and_blocks_outside(x in prop::collection::vec(-3.0f64..3.0, 8)) {
        let mut t = Tape::new();
        let xv = t.param("x", x.clone(), 8, 1).unwrap();
        let c = t.clamp(xv, &[-1.0; 8], &[1.0; 8]).unwrap();
        let l = t.sum(c).unwrap();
        t.backward(l).unwrap();
        for (xi, g) in x.iter().zip(t.grad(xv).unwrap()) {
            let inside = *xi > -1.0 && *xi < 1.0;
            prop_assert_eq!(*g, if inside { 1.0 } else { 0.0 });
        }
        prop_assert!(t.value(c).iter().all(|v| (-1.0..=1.0).contains(v)));
    }
}

#[test]
fn gradients_accumulate_until_zeroed() {
    let mut t = Tape::new();
    let x = t.param("x", vec![1.5, -0.5], 2, 1).unwrap();
    for pass in 1..=3 {
        t.reset();
        let s = t.square(x).unwrap();
        let l = t.sum(s).unwrap();
        t.backward(l).unwrap();
        let want: Vec<f64> = [3.0, -1.0].iter().map(|g| g * pass as f64).collect();
        assert_eq!(t.grad(x).unwrap(), want.as_slice());
    }
    t.zero_grad();
    assert!(t.grad(x).map_or(true, |g| g.iter().all(|&v| v == 0.0)));
}

#[test]
fn reset_invalidates_intermediates_but_keeps_params() {
    let mut t = Tape::new();
    let x = t.param("x", vec![2.0], 1, 1).unwrap();
    let y = t.exp(x).unwrap();
    t.reset();
    assert!(matches!(t.backward(y), Err(TapeError::StaleVar { .. })));
    let y = t.exp(x).unwrap();
    t.backward(y).unwrap();
    assert!((t.grad(x).unwrap()[0] - 2f64.exp()).abs() < 1e-12);
}

#[test]
fn straight_through_forwards_hard_and_differentiates_soft() {
    let mut t = Tape::new();
    let a = t.param("a", vec![0.3, -0.2], 2, 1).unwrap();
    let soft = t.sigmoid(a).unwrap();
    let hard = t.constant(vec![1.0, 0.0], 2, 1).unwrap();
    let st = t.straight_through(hard, soft).unwrap();
    assert_eq!(t.value(st), &[1.0, 0.0]);
    let l = t.sum(st).unwrap();
    t.backward(l).unwrap();
    for (g, v) in t.grad(a).unwrap().iter().zip([0.3f64, -0.2]) {
        let s = 1.0 / (1.0 + (-v).exp());
        assert!((g - s * (1.0 - s)).abs() < 1e-12);
    }
}
