use sdr_core::detect::BoundingBox;
use sdr_wasm_demo::{to_rgba, Demo, SIZE};

#[test]
fn session_produces_bounded_consistent_set() {
    let mut demo = Demo::create(1, 8.0).unwrap();
    assert_eq!(demo.initial_rgba().len(), 4 * SIZE * SIZE);
    let b = BoundingBox::new(16.0, 16.0, 40.0, 40.0).unwrap();
    let s = demo.generate(b, 3, 5, 3.0, 2).unwrap();
    assert_eq!(s.distances_to_initial.len(), 3);
    assert!(s.distances_to_initial.iter().all(|&d| d <= 3.0 + 1e-9));
    assert!(s.consistency_residuals.iter().all(|&r| r < 1e-2));
    assert_eq!(s.diversity_matrix.len(), 3);
    assert!(s.final_mean_distance >= s.seeded_mean_distance);
    assert_eq!(demo.reconstruction_rgba(2).len(), 4 * SIZE * SIZE);
    assert!(demo.reconstruction_rgba(3).is_empty());
}

#[test]
fn same_seed_same_slice() {
    let a = Demo::create(5, 4.0).unwrap();
    let b = Demo::create(5, 4.0).unwrap();
    assert_eq!(a.initial_rgba(), b.initial_rgba());
    assert_eq!(a.ground_truth_json(), b.ground_truth_json());
}

#[test]
fn rgba_saturates_and_is_opaque() {
    let x = sdr_core::mri::ComplexImage::from_real(2, 1, &[0.0, 1e9]).unwrap();
    assert_eq!(to_rgba(&x, 1.0), [0, 0, 0, 255, 255, 255, 255, 255]);
}
