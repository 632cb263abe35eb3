mod common;

use common::gradcheck::{worst_over_seeds, COMPOSITES, KERNELS};
use common::{project, random_matrix, rng};
use gad_core::autodiff::{Activation, Tape};
use gad_core::Matrix;
use proptest::prelude::*;

const TOL: f64 = 1e-4;

#[test]
fn every_kernel_matches_finite_differences() {
    for (name, suite) in KERNELS {
        let err = worst_over_seeds(*suite);
        assert!(err < TOL, "{name}: relative error {err:e}");
    }
}

#[test]
fn composite_losses_match_finite_differences() {
    for (name, suite) in COMPOSITES {
        let err = worst_over_seeds(*suite);
        assert!(err < TOL, "{name}: relative error {err:e}");
    }
}

fn grads_of(x: &Matrix, a: f64, b: f64, seed: u64) -> Matrix {
    let mut tape = Tape::new();
    let v = tape.param(x.clone()).unwrap();
    let l1 = {
        let y = tape.activation(v, Activation::Tanh).unwrap();
        project(&mut tape, y, &mut rng(seed))
    };
    let l2 = {
        let y = tape.activation(v, Activation::Sigmoid).unwrap();
        let y = tape.mean_rows(y).unwrap();
        project(&mut tape, y, &mut rng(seed + 1))
    };
    let s1 = tape.scale(l1, a).unwrap();
    let s2 = tape.scale(l2, b).unwrap();
    let total = tape.add(s1, s2).unwrap();
    tape.backward(total).unwrap().wrt(v)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn backward_is_linear(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let x = random_matrix(&mut rng(seed), 5, 3);
        let combined = grads_of(&x, a, b, seed);
        let g1 = grads_of(&x, 1.0, 0.0, seed);
        let g2 = grads_of(&x, 0.0, 1.0, seed);
        for k in 0..x.len() {
            let expect = a * g1.data()[k] + b * g2.data()[k];
            prop_assert!((combined.data()[k] - expect).abs() < 1e-10);
        }
    }

    #[test]
    fn kernels_are_bit_deterministic(seed in any::<u64>()) {
        let x = random_matrix(&mut rng(seed), 6, 4);
        let run = || {
            let mut tape = Tape::new();
            let v = tape.param(x.clone()).unwrap();
            let y = tape.activation(v, Activation::LeakyRelu).unwrap();
            let m = tape.mean_rows(y).unwrap();
            let l = tape.scaled_cosine_error(&Matrix::filled(1, 4, 1.0), m, 2.0).unwrap();
            let g = tape.backward(l).unwrap().wrt(v);
            (tape.value(l).data()[0].to_bits(), g.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>())
        };
        prop_assert_eq!(run(), run());
    }
}
