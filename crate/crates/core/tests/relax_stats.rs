use diffevo::relax::{gumbel_sigmoid, gumbel_softmax, RelaxConfig, Rng};
use diffevo::tape::Tape;
use proptest::prelude::*;

fn sigmoid(a: f64) -> f64 {
    1.0 / (1.0 + (-a).exp())
}

/// Hits of a hard mask over `n` draws, on one tape reset per draw.
fn mask_hits(alpha: f64, n: usize, seed: u64) -> usize {
    let mut rng = Rng::seed_from(seed);
    let mut t = Tape::new();
    let a = t.param("alpha", vec![alpha], 1, 1).unwrap();
    let mut hits = 0;
    for _ in 0..n {
        t.reset();
        let m = gumbel_sigmoid(&mut t, a, RelaxConfig::default(), &mut rng).unwrap();
        hits += t.value(m)[0] as usize;
    }
    hits
}

#[test]
fn mask_rate_tracks_sigmoid_of_logit() {
    let n = 20_000;
    for alpha in [-1.5, 0.5, 3.0] {
        let p = sigmoid(alpha);
        let rate = mask_hits(alpha, n, 11) as f64 / n as f64;
        let sd = (p * (1.0 - p) / n as f64).sqrt();
        assert!((rate - p).abs() < 4.0 * sd, "alpha {alpha}: {rate} vs {p}");
    }
}

#[test]
fn hard_selection_follows_softmax_of_logits() {
    let logits = [1.0, 0.0, -1.0, 0.5];
    let z: f64 = logits.iter().map(|l: &f64| l.exp()).sum();
    let n = 20_000;
    let mut rng = Rng::seed_from(3);
    let mut t = Tape::new();
    let l = t.param("logits", logits.to_vec(), 4, 1).unwrap();
    let mut counts = [0usize; 4];
    for _ in 0..n {
        t.reset();
        let s = gumbel_softmax(&mut t, l, RelaxConfig::default(), &mut rng).unwrap();
        counts[t.value(s).iter().position(|&v| v == 1.0).unwrap()] += 1;
    }
    for (k, c) in counts.iter().enumerate() {
        let p = logits[k].exp() / z;
        let sd = (p * (1.0 - p) / n as f64).sqrt();
        let rate = *c as f64 / n as f64;
        assert!((rate - p).abs() < 4.0 * sd, "category {k}: {rate} vs {p}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn soft_mask_lies_in_unit_interval(alpha in -20.0f64..20.0, tau in 0.05f64..5.0, seed in any::<u64>()) {
        let mut t = Tape::new();
        let a = t.param("alpha", vec![alpha; 8], 8, 1).unwrap();
        let cfg = RelaxConfig::new(tau, false).unwrap();
        let m = gumbel_sigmoid(&mut t, a, cfg, &mut Rng::seed_from(seed)).unwrap();
        prop_assert!(t.value(m).iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn selection_is_a_distribution(
        logits in prop::collection::vec(-5.0f64..5.0, 2..8),
        tau in 0.05f64..5.0,
        seed in any::<u64>(),
    ) {
        let n = logits.len();
        let mut t = Tape::new();
        let l = t.param("logits", logits, n, 1).unwrap();
        let mut rng = Rng::seed_from(seed);
        let soft = gumbel_softmax(&mut t, l, RelaxConfig::new(tau, false).unwrap(), &mut rng).unwrap();
        let s = t.value(soft);
        prop_assert!(s.iter().all(|&v| v >= 0.0));
        prop_assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let hard = gumbel_softmax(&mut t, l, RelaxConfig::new(tau, true).unwrap(), &mut rng).unwrap();
        let h = t.value(hard);
        prop_assert_eq!(h.iter().filter(|&&v| v == 1.0).count(), 1);
        prop_assert_eq!(h.iter().filter(|&&v| v == 0.0).count(), n - 1);
    }

    #[test]
    fn hard_mask_gradient_is_the_soft_one(alpha in -4.0f64..4.0, seed in any::<u64>()) {
        let tau = 0.7;
        let mut rng = Rng::seed_from(seed);
        let mut t = Tape::new();
        let a = t.param("alpha", vec![alpha], 1, 1).unwrap();
        let probe = rng.clone().logistic();
        let m = gumbel_sigmoid(&mut t, a, RelaxConfig::new(tau, true).unwrap(), &mut rng).unwrap();
        t.backward(m).unwrap();
        let s = sigmoid((probe + alpha) / tau);
        prop_assert!((t.grad(a).unwrap()[0] - s * (1.0 - s) / tau).abs() < 1e-12);
        prop_assert_eq!(t.value(m)[0], if probe + alpha > 0.0 { 1.0 } else { 0.0 });
    }
}
