mod common;

use candle_core::{DType, Tensor, Var};
use common::*;
use mugan_core::attention::{auc_gate, self_attention, AttentionMap, AucGate, FeatureMap, SelfAttention};
use mugan_core::params::ParamStore;
use proptest::prelude::*;

fn gate(seed: u64, ce: usize, cd: usize) -> (ParamStore, AucGate) {
    let mut store = ParamStore::new(seed, DType::F64);
    let g = AucGate::with_decoder_channels(&mut store.scope("g"), ce, cd).unwrap();
    randomize(&store, &mut rng(seed), 0.5);
    (store, g)
}

fn attention(seed: u64, c: usize, gamma: f64) -> (ParamStore, SelfAttention) {
    let mut store = ParamStore::new(seed, DType::F64);
    let sa = SelfAttention::new(&mut store.scope("sa"), c).unwrap();
    randomize(&store, &mut rng(seed), 0.3);
    sa.gamma().set(&Tensor::new(&[gamma], &candle_core::Device::Cpu).unwrap()).unwrap();
    (store, sa)
}

#[test]
fn gate_matches_brute_force() {
    for seed in 0..6u64 {
        let (b, ce, cd, h, w) = (2, 4, 6 + 2 * (seed as usize % 2), 3, 2 + seed as usize % 3);
        let (_s, g) = gate(seed, ce, cd);
        let mut r = rng(100 + seed);
        let d = randn(&mut r, &[b, cd, h, w], 1.0);
        let e = randn(&mut r, &[b, ce, h, w], 1.0);
        let (gated, alpha) = auc_gate(&FeatureMap::new(d.clone()).unwrap(), &FeatureMap::new(e.clone()).unwrap(), &g).unwrap();
        let (og, oa) = oracle_auc_gate(&g, &values(&d), &values(&e), (b, h, w));
        assert!(max_abs_diff(&values(gated.tensor()), &og) < 1e-6, "seed {seed}");
        assert!(max_abs_diff(&values(alpha.tensor()), &oa) < 1e-6, "seed {seed}");
        assert!(matches!(alpha, AttentionMap::Spatial(_)));
    }
}

#[test]
fn self_attention_matches_brute_force() {
    for seed in 0..6u64 {
        let (b, c, h, w) = (2, 8 * (1 + seed as usize % 2), 2 + seed as usize % 2, 3);
        let (_s, sa) = attention(seed, c, 0.25 + seed as f64 * 0.3);
        let x = randn(&mut rng(200 + seed), &[b, c, h, w], 1.0);
        let (y, beta) = self_attention(&FeatureMap::new(x.clone()).unwrap(), &sa).unwrap();
        let (oy, ob) = oracle_self_attention(&sa, &values(&x), (b, h, w));
        assert!(max_abs_diff(&values(y.tensor()), &oy) < 1e-6, "seed {seed}");
        assert!(max_abs_diff(&values(beta.tensor()), &ob) < 1e-6, "seed {seed}");
        assert_eq!(beta.tensor().dims(), &[b, h * w, h * w]);
    }
}

#[test]
fn zero_gain_self_attention_is_exact_identity() {
    let (_s, sa) = attention(4, 16, 0.0);
    let x = randn(&mut rng(5), &[3, 16, 4, 4], 10.0).to_dtype(DType::F32).unwrap();
    let mut store32 = ParamStore::new(4, DType::F32);
    let sa32 = SelfAttention::new(&mut store32.scope("sa"), 16).unwrap();
    let (y, _) = sa32.forward(&x).unwrap();
    assert_eq!(values(&y), values(&x));
    let x64 = x.to_dtype(DType::F64).unwrap();
    let (y64, _) = sa.forward(&x64).unwrap();
    assert_eq!(values(&y64), values(&x64));
}

#[test]
fn gate_gradients_match_finite_differences() {
    let (store, g) = gate(7, 4, 4);
    let mut r = rng(8);
    let d = Var::from_tensor(&randn(&mut r, &[2, 4, 3, 3], 1.0)).unwrap();
    let e = Var::from_tensor(&randn(&mut r, &[2, 4, 3, 3], 1.0)).unwrap();
    let params = trainable(&store);
    let mut vars: Vec<(&str, &Var)> = params.iter().map(|(n, v)| (n.as_str(), v)).collect();
    vars.push(("decoder", &d));
    vars.push(("encoder", &e));
    let (err, name) = grad_check(
        &vars,
        || {
            let (gated, alpha) = g.forward(d.as_tensor(), e.as_tensor()).unwrap();
            (gated.sqr().unwrap().sum_all().unwrap() + alpha.sum_all().unwrap()).unwrap()
        },
        1e-5,
        64,
    );
    assert!(err < 1e-4, "{name}: {err}");
}

#[test]
fn self_attention_gradients_match_finite_differences() {
    let (store, sa) = attention(9, 8, 0.7);
    let x = Var::from_tensor(&randn(&mut rng(10), &[2, 8, 2, 3], 1.0)).unwrap();
    let params = trainable(&store);
    let mut vars: Vec<(&str, &Var)> = params.iter().map(|(n, v)| (n.as_str(), v)).collect();
    vars.push(("x", &x));
    let weights = randn(&mut rng(11), &[2, 8, 2, 3], 1.0);
    let (err, name) = grad_check(
        &vars,
        || {
            let (y, beta) = sa.forward(x.as_tensor()).unwrap();
            let a = (y * &weights).unwrap().sum_all().unwrap();
            (a + beta.sqr().unwrap().sum_all().unwrap()).unwrap()
        },
        1e-5,
        64,
    );
    assert!(err < 1e-4, "{name}: {err}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gate_coefficients_stay_in_unit_interval(seed in any::<u64>(), scale in 0.01f64..50.0, h in 1usize..5, w in 1usize..5) {
        let (_s, g) = gate(seed, 4, 4);
        let mut r = rng(seed ^ 1);
        let d = randn(&mut r, &[1, 4, h, w], scale);
        let e = randn(&mut r, &[1, 4, h, w], scale);
        let (gated, alpha) = g.forward(&d, &e).unwrap();
        let a = values(&alpha);
        prop_assert!(a.iter().all(|v| (0.0..=1.0).contains(v)));
        // |gated| never exceeds |encoder|
        for (gv, ev) in values(&gated).iter().zip(values(&e)) {
            prop_assert!(gv.abs() <= ev.abs());
        }
    }

    #[test]
    fn affinity_rows_are_distributions(seed in any::<u64>(), scale in 0.01f64..20.0, h in 1usize..4, w in 1usize..4) {
        let (_s, sa) = attention(seed, 8, 0.5);
        let x = randn(&mut rng(seed ^ 2), &[2, 8, h, w], scale);
        let (_, beta) = sa.forward(&x).unwrap();
        let n = h * w;
        let b = values(&beta);
        for row in b.chunks(n) {
            prop_assert!(row.iter().all(|v| *v >= 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn self_attention_preserves_shape(c in prop::sample::select(vec![8usize, 16, 24]), h in 1usize..4, w in 1usize..4) {
        let (_s, sa) = attention(1, c, 0.3);
        let x = randn(&mut rng(3), &[1, c, h, w], 1.0);
        let (y, _) = self_attention(&FeatureMap::new(x).unwrap(), &sa).unwrap();
        prop_assert_eq!(y.shape(), (c, h, w));
        prop_assert_eq!(y.positions(), h * w);
    }
}
