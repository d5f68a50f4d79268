mod common;

use holosplat::oracles::{direct_dft_propagate, random_field};
use holosplat::propagation::{propagate, propagate_backward, RGB_WAVELENGTHS};
use holosplat::{ComplexField, PropagationSpec, Propagator};

const DISTANCES: [f64; 5] = [0.0, 1e-3, 3e-3, 6.5e-3, 10e-3];

fn unpadded(wavelengths: Vec<f64>) -> PropagationSpec {
    PropagationSpec {
        pad_factor: 1,
        ..PropagationSpec::with_wavelengths(wavelengths)
    }
}

#[test]
fn fft_propagation_matches_direct_dft() {
    let spec = PropagationSpec::mono();
    let field = random_field(1, 64, 64, 11);
    let prop = Propagator::new(&spec, 64, 64, &DISTANCES).unwrap();
    let spectrum = prop.spectrum(&field).unwrap();
    for (l, &d) in DISTANCES.iter().enumerate() {
        let fast = prop.propagate_spectrum(&spectrum, l);
        let slow = direct_dft_propagate(&field, &spec, d).unwrap();
        let err = fast.max_abs_diff(&slow);
        assert!(err <= 1e-5, "d = {d}: {err:e}");
    }
}

#[test]
fn rgb_propagation_matches_direct_dft_on_a_rectangle() {
    let spec = PropagationSpec::default();
    let field = random_field(3, 24, 40, 12);
    for d in [-2e-3, 4e-3] {
        let err = propagate(&field, &spec, d)
            .unwrap()
            .max_abs_diff(&direct_dft_propagate(&field, &spec, d).unwrap());
        assert!(err <= 1e-5, "d = {d}: {err:e}");
    }
}

#[test]
fn in_band_energy_is_preserved() {
    let spec = unpadded(RGB_WAVELENGTHS.to_vec());
    for (seed, &d) in DISTANCES.iter().enumerate() {
        let field = random_field(3, 48, 64, seed as u64);
        let out = propagate(&field, &spec, d).unwrap();
        let expected = common::in_band_energy(&field, &spec, d);
        let rel = (out.energy() - expected).abs() / expected;
        assert!(rel <= 1e-6, "d = {d}: relative energy change {rel:e}");
    }
}

#[test]
fn zero_distance_keeps_all_energy_without_padding() {
    let spec = unpadded(vec![532e-9]);
    let field = random_field(1, 32, 32, 3);
    let out = propagate(&field, &spec, 0.0).unwrap();
    assert!(out.max_abs_diff(&field) < 1e-12);
}

#[test]
fn backward_is_the_adjoint_of_forward() {
    for pad in [1, 2] {
        let spec = PropagationSpec {
            pad_factor: pad,
            ..PropagationSpec::default()
        };
        for pair in 0..10u64 {
            let d = DISTANCES[pair as usize % 5] * if pair % 2 == 0 { 1.0 } else { -1.0 };
            let u = random_field(3, 20, 28, 2 * pair);
            let v = random_field(3, 20, 28, 2 * pair + 1);
            let lhs = propagate(&u, &spec, d).unwrap().inner(&v);
            let rhs = u.inner(&propagate_backward(&v, &spec, d).unwrap());
            let rel = (lhs - rhs).norm() / lhs.norm().max(rhs.norm());
            assert!(rel <= 1e-6, "pad {pad} pair {pair}: {rel:e}");
        }
    }
}

#[test]
fn backward_sum_equals_sum_of_backwards() {
    let spec = PropagationSpec::mono();
    let distances = [2e-3, 4e-3, 6e-3];
    let prop = Propagator::new(&spec, 16, 24, &distances).unwrap();
    let grads: Vec<ComplexField> = (0..3).map(|l| random_field(1, 16, 24, 40 + l)).collect();
    let mut expected = ComplexField::zeros(1, 16, 24);
    for (l, g) in grads.iter().enumerate() {
        expected.add_assign(&prop.backward(g, l).unwrap());
    }
    assert!(prop.backward_sum(&grads).unwrap().max_abs_diff(&expected) < 1e-12);
}

#[test]
fn forward_then_backward_propagation_is_a_projection() {
    let spec = unpadded(vec![532e-9]);
    let field = random_field(1, 32, 40, 8);
    let once = propagate(&propagate(&field, &spec, 5e-3).unwrap(), &spec, -5e-3).unwrap();
    let twice = propagate(&propagate(&once, &spec, 5e-3).unwrap(), &spec, -5e-3).unwrap();
    assert!(once.max_abs_diff(&twice) < 1e-12);
}

#[test]
fn mismatched_inputs_are_rejected() {
    let spec = PropagationSpec::default();
    assert!(propagate(&random_field(1, 8, 8, 0), &spec, 1e-3).is_err());
    assert!(Propagator::new(&spec, 8, 8, &[f64::NAN]).is_err());
    let bad = PropagationSpec {
        pixel_pitch: -1.0,
        ..PropagationSpec::default()
    };
    assert!(bad.validate().is_err());
}
