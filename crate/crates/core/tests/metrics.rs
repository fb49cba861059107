use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sizereg::metrics::{cmd, linear_cka, mcc, CmdConfig, Confusion};
use sizereg::tensor::{gradient_check, ParamStore, Tape, Tensor};

fn cmd_value(x: &[Vec<f64>], y: &[Vec<f64>], cfg: &CmdConfig) -> f64 {
    let mut t = Tape::new();
    let a = t.constant(Tensor::from_rows(x).unwrap());
    let b = t.constant(Tensor::from_rows(y).unwrap());
    let d = cmd(&mut t, a, b, cfg).unwrap();
    t.value(d).item()
}

fn sample(rows: usize, cols: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-1.0f64..1.0, cols), rows)
}

fn brute_mcc(pred: &[usize], label: &[usize]) -> f64 {
    let (mut tp, mut tn, mut fp, mut fn_) = (0.0, 0.0, 0.0, 0.0);
    for (&p, &l) in pred.iter().zip(label) {
        match (p, l) {
            (1, 1) => tp += 1.0,
            (0, 0) => tn += 1.0,
            (1, 0) => fp += 1.0,
            _ => fn_ += 1.0,
        }
    }
    let den: f64 = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
    if den == 0.0 {
        0.0
    } else {
        (tp * tn - fp * fn_) / den.sqrt()
    }
}

proptest! {
    #[test]
    fn cmd_is_symmetric_and_non_negative(dims in (1usize..6, 1usize..12, 1usize..12), seed in any::<u64>()) {
        let (d, n, m) = dims;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let y: Vec<Vec<f64>> = (0..m).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let cfg = CmdConfig::default();
        let (xy, yx) = (cmd_value(&x, &y, &cfg), cmd_value(&y, &x, &cfg));
        prop_assert!(xy >= 0.0);
        prop_assert!((xy - yx).abs() <= 1e-12);
        prop_assert!(cmd_value(&x, &x, &cfg) <= 1e-6);
    }

    #[test]
    fn cmd_ignores_row_order(x in sample(7, 3), y in sample(5, 3), shift in 0usize..7) {
        let cfg = CmdConfig::default();
        let mut rotated = x.clone();
        rotated.rotate_left(shift);
        prop_assert!((cmd_value(&x, &y, &cfg) - cmd_value(&rotated, &y, &cfg)).abs() < 1e-12);
    }

    #[test]
    fn cmd_gradient_matches_finite_differences(x in sample(4, 2), y in sample(3, 2)) {
        let mut store = ParamStore::new();
        let id = store.add("x", Tensor::from_rows(&x).unwrap());
        let target = Tensor::from_rows(&y).unwrap();
        let cfg = CmdConfig::default();
        let report = gradient_check(&store, &[id], 1e-6, |t, s| {
            let a = t.param(s, id);
            let b = t.constant(target.clone());
            cmd(t, a, b, &cfg)
        }).unwrap();
        prop_assert!(report.max_relative_error < 1e-4, "{:?}", report);
    }

    #[test]
    fn cka_invariant_to_rotation_and_scale(a in sample(12, 2), b in sample(12, 3), theta in 0.0f64..std::f64::consts::TAU, scale in 0.1f64..10.0) {
        let base = linear_cka(&a, &b).unwrap();
        let (c, s) = (theta.cos(), theta.sin());
        let rotated: Vec<Vec<f64>> = a.iter().map(|r| vec![scale * (c * r[0] - s * r[1]), scale * (s * r[0] + c * r[1])]).collect();
        prop_assert!((linear_cka(&rotated, &b).unwrap() - base).abs() < 1e-9);
        prop_assert!((0.0..=1.0).contains(&base));
        prop_assert!((linear_cka(&a, &a).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn mcc_matches_confusion_matrix(pairs in prop::collection::vec((0usize..2, 0usize..2), 1..60)) {
        let (pred, label): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
        let got = mcc(&pred, &label).unwrap();
        prop_assert!((got - brute_mcc(&pred, &label)).abs() <= 1e-12);
        prop_assert!((-1.0..=1.0).contains(&got));
        let c = Confusion::from_labels(&pred, &label).unwrap();
        prop_assert_eq!(c.tp + c.tn + c.fp + c.fn_, pred.len() as u64);
    }
}

#[test]
fn cka_of_independent_noise_is_small() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut draw = |cols: usize| -> Vec<Vec<f64>> { (0..1000).map(|_| (0..cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect() };
    let (a, b) = (draw(4), draw(4));
    assert!(linear_cka(&a, &b).unwrap() < 0.1);
}

#[test]
fn degenerate_mcc_is_zero() {
    assert_eq!(mcc(&[1, 1, 1], &[1, 1, 1]).unwrap(), 0.0);
    assert_eq!(mcc(&[0, 0], &[1, 0]).unwrap(), 0.0);
    assert!(mcc(&[0, 1], &[0]).is_err());
}

#[test]
fn cmd_hand_case() {
    let exact = CmdConfig { eps: 0.0, ..CmdConfig::default() };
    let x = vec![vec![-1.0], vec![1.0]];
    let y = vec![vec![0.0], vec![0.0]];
    assert_eq!(cmd_value(&x, &y, &exact), 0.3125);
    assert!((cmd_value(&x, &y, &CmdConfig::default()) - 0.3125).abs() < 1e-6);
}
