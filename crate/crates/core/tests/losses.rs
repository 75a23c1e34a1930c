mod common;

use candle_core::{DType, Device, Tensor, Var};
use common::*;
use mugan_core::losses::{adv_loss_d, adv_loss_g, cls_loss, gradient_penalty, rec_loss};
use mugan_core::{ArchConfig, Discriminator};
use proptest::prelude::*;

fn bits(r: &mut rand_chacha::ChaCha8Rng, shape: &[usize]) -> Tensor {
    use rand::Rng;
    let n: usize = shape.iter().product();
    let v: Vec<f64> = (0..n).map(|_| if r.random_bool(0.5) { 1.0 } else { 0.0 }).collect();
    Tensor::from_vec(v, shape, &Device::Cpu).unwrap()
}

#[test]
fn bce_matches_textbook_formula() {
    for seed in 0..6u64 {
        let mut r = rng(seed);
        let rows = 1 + seed as usize;
        let logits = randn(&mut r, &[rows, 13], 3.0);
        let targets = bits(&mut r, &[rows, 13]);
        let got = scalar(&cls_loss(&logits, &targets).unwrap());
        let want = oracle_bce(&values(&logits), &values(&targets), rows);
        assert!((got - want).abs() < 1e-6, "seed {seed}: {got} vs {want}");
    }
}

#[test]
fn bce_at_uniform_logits() {
    for rows in [1, 4, 9] {
        let zeros = Tensor::zeros((rows, 13), DType::F64, &Device::Cpu).unwrap();
        let targets = bits(&mut rng(rows as u64), &[rows, 13]);
        let v = scalar(&cls_loss(&zeros, &targets).unwrap());
        assert!((v - 9.0109).abs() < 1e-4, "{v}");
    }
}

#[test]
fn l1_matches_brute_force() {
    for seed in 0..6u64 {
        let mut r = rng(50 + seed);
        let shape = [2, 3, 4 + seed as usize, 5];
        let x = randn(&mut r, &shape, 1.0);
        let y = randn(&mut r, &shape, 1.0);
        let got = scalar(&rec_loss(&x, &y).unwrap());
        assert!((got - oracle_l1(&values(&x), &values(&y))).abs() < 1e-6);
    }
}

#[test]
fn mismatched_shapes_rejected() {
    let a = Tensor::zeros((2, 13), DType::F64, &Device::Cpu).unwrap();
    let b = Tensor::zeros((2, 12), DType::F64, &Device::Cpu).unwrap();
    assert!(cls_loss(&a, &b).is_err());
    assert!(rec_loss(&a, &b).is_err());
    let scores = Tensor::zeros((2, 1), DType::F64, &Device::Cpu).unwrap();
    assert!(adv_loss_g(&scores).is_err());
}

#[test]
fn loss_gradients_match_finite_differences() {
    let mut r = rng(12);
    let real = Var::from_tensor(&randn(&mut r, &[5], 1.0)).unwrap();
    let fake = Var::from_tensor(&randn(&mut r, &[5], 1.0)).unwrap();
    let logits = Var::from_tensor(&randn(&mut r, &[3, 13], 2.0)).unwrap();
    let targets = bits(&mut r, &[3, 13]);
    let x = Var::from_tensor(&randn(&mut r, &[2, 3, 4, 4], 1.0)).unwrap();
    let y = randn(&mut r, &[2, 3, 4, 4], 1.0);

    let cases: Vec<(&str, Box<dyn Fn() -> Tensor>, Vec<(&str, &Var)>)> = vec![
        (
            "adv_d",
            Box::new(|| adv_loss_d(real.as_tensor(), fake.as_tensor()).unwrap()),
            vec![("real", &real), ("fake", &fake)],
        ),
        (
            "adv_g",
            Box::new(|| adv_loss_g(fake.as_tensor()).unwrap()),
            vec![("fake", &fake)],
        ),
        (
            "cls",
            Box::new(|| cls_loss(logits.as_tensor(), &targets).unwrap()),
            vec![("logits", &logits)],
        ),
        (
            "rec",
            Box::new(|| rec_loss(x.as_tensor(), &y).unwrap()),
            vec![("x", &x)],
        ),
    ];
    for (loss, f, vars) in cases {
        let (err, name) = grad_check(&vars, f, 1e-5, 128);
        assert!(err < 1e-4, "{loss}/{name}: {err}");
    }
}

#[test]
fn penalty_gradients_match_finite_differences() {
    let arch = ArchConfig {
        image_size: 16,
        base_width: 8,
        depth: 2,
    };
    let disc = Discriminator::new(arch, 3, DType::F64).unwrap();
    randomize(disc.params(), &mut rng(13), 0.3);
    let mut r = rng(14);
    let real = randn(&mut r, &[2, 3, 16, 16], 1.0);
    let fake = randn(&mut r, &[2, 3, 16, 16], 1.0);
    let mix = Tensor::new(&[0.3f64, 0.8], &Device::Cpu).unwrap();
    let params = trainable(disc.params());
    let vars: Vec<(&str, &Var)> = params.iter().map(|(n, v)| (n.as_str(), v)).collect();
    let (err, name) = grad_check(
        &vars,
        || gradient_penalty(|t| disc.adv_score(t), &real, &fake, &mix).unwrap(),
        1e-5,
        24,
    );
    assert!(err < 1e-4, "{name}: {err}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bce_is_non_negative(seed in any::<u64>(), scale in 0.0f64..40.0) {
        let mut r = rng(seed);
        let logits = randn(&mut r, &[3, 13], scale);
        let targets = bits(&mut r, &[3, 13]);
        let v = scalar(&cls_loss(&logits, &targets).unwrap());
        prop_assert!(v >= 0.0 && v.is_finite());
    }

    #[test]
    fn l1_is_a_symmetric_non_negative_distance(seed in any::<u64>()) {
        let mut r = rng(seed);
        let x = randn(&mut r, &[1, 3, 4, 4], 1.0);
        let y = randn(&mut r, &[1, 3, 4, 4], 1.0);
        let xy = scalar(&rec_loss(&x, &y).unwrap());
        let yx = scalar(&rec_loss(&y, &x).unwrap());
        prop_assert!(xy >= 0.0);
        prop_assert!((xy - yx).abs() < 1e-12);
        prop_assert_eq!(scalar(&rec_loss(&x, &x).unwrap()), 0.0);
    }

    #[test]
    fn critic_loss_is_antisymmetric(seed in any::<u64>()) {
        let mut r = rng(seed);
        let a = randn(&mut r, &[4], 2.0);
        let b = randn(&mut r, &[4], 2.0);
        let ab = scalar(&adv_loss_d(&a, &b).unwrap());
        let ba = scalar(&adv_loss_d(&b, &a).unwrap());
        prop_assert!((ab + ba).abs() < 1e-12);
    }
}
