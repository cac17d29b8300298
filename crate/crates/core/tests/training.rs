mod common;

use common::{early_stop_contract, epochs_run, tiny_dataset};
use gfz_core::nn::Model;
use gfz_core::optim::AdamState;
use proptest::prelude::*;

#[test]
fn early_stopping_contract() {
    early_stop_contract().unwrap();
}

#[test]
fn adam_respects_freeze_flags_and_is_deterministic() {
    let data = tiny_dataset(3, 16, 51);
    let (x, y) = data.batch(&(0..16).collect::<Vec<_>>(), None);
    let step = |frozen: &[usize]| {
        let mut model = Model::<f32>::mini_resnet(3, &[4, 6], 52).unwrap();
        model.set_base_lr(1e-2).unwrap();
        model.set_frozen(frozen, true).unwrap();
        let mut adam = AdamState::new(&model);
        let before = model.snapshot();
        for _ in 0..3 {
            let mut tape = gfz_core::autodiff::Tape::new();
            let xv = tape.constant(&x);
            let fwd = model.forward(&mut tape, xv).unwrap();
            let loss = gfz_core::nn::multilabel_bce(&mut tape, fwd.logits, &y).unwrap();
            let grads = tape.backward(loss).unwrap();
            model.zero_grad();
            model.accumulate_grads(&grads, &fwd).unwrap();
            adam.step(&mut model).unwrap();
        }
        (before, model.snapshot(), adam)
    };
    let (before, after, adam) = step(&[0, 3]);
    for i in 0..after.len() {
        if [0, 3].contains(&i) {
            assert_eq!(after[i], before[i]);
            assert!(adam.first_moment(i, 0).iter().all(|&m| m == 0.0));
            assert_eq!(adam.layer_steps()[i], 0);
        } else {
            assert_ne!(after[i], before[i]);
            assert_eq!(adam.layer_steps()[i], 3);
        }
    }
    assert_eq!(step(&[0, 3]).1, after);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn plateau_stops_exactly_patience_after_best(best in 1usize..30, patience in 1usize..8) {
        let curve: Vec<f64> = (1..=50).map(|e| e.min(best) as f64).collect();
        prop_assert_eq!(epochs_run(curve, patience, 50), (best + patience, true));
    }

    #[test]
    fn strictly_improving_never_stops(patience in 1usize..8, cap in 1usize..20) {
        let curve: Vec<f64> = (1..=cap).map(|e| e as f64).collect();
        prop_assert_eq!(epochs_run(curve, patience, cap), (cap, false));
    }
}
