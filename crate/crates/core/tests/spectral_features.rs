use drgp_pac::linalg::{min_eigenvalue, psd_tolerance};
use drgp_pac::spectral_features::{feature_matrix, feature_vector, kernel_approx, SpectralLayerHyper, SpectralPoints};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use proptest::strategy::ValueTree;
use std::f64::consts::TAU;

fn layer(q: usize, m: usize) -> impl Strategy<Value = (SpectralLayerHyper, SpectralPoints)> {
    (
        0.1f64..3.0,
        prop::collection::vec(0.2f64..3.0, q),
        prop::collection::vec(-1.0f64..1.0, q),
        prop::collection::vec(-2.0f64..2.0, m * q),
        prop::collection::vec(0.0f64..TAU, m),
        prop::collection::vec(-3.0f64..3.0, m * q),
    )
        .prop_map(move |(sp, ls, p, u, b, z)| {
            let hyper = SpectralLayerHyper {
                num_features: m,
                sigma_power: sp,
                lengthscales: DVector::from_vec(ls),
                spectral_mean: DVector::from_vec(p),
                shifts: DMatrix::from_vec(m, q, u),
                phases: DVector::from_vec(b),
                sigma_noise: 0.1,
            };
            (hyper, SpectralPoints(DMatrix::from_vec(m, q, z)))
        })
}

fn inputs(k: usize, q: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-5.0f64..5.0, k * q).prop_map(move |v| DMatrix::from_vec(k, q, v))
}

proptest! {
    #[test]
    fn features_are_bounded((hyper, z) in layer(3, 8), x in inputs(4, 3)) {
        let phi = feature_matrix(&x, &z, &hyper).unwrap();
        let bound = hyper.amplitude();
        prop_assert!(phi.iter().all(|v| v.abs() <= bound * (1.0 + 1e-15)));
    }

    #[test]
    fn kernel_is_psd_with_bounded_rank((hyper, z) in layer(2, 5), x in inputs(9, 2)) {
        let k = kernel_approx(&x, &z, &hyper).unwrap();
        prop_assert!((&k - k.transpose()).abs().max() == 0.0);
        prop_assert!(min_eigenvalue(&k) >= -psd_tolerance(&k));
        let rank = k.clone().svd(false, false).rank(1e-9 * k.trace().max(1e-300));
        prop_assert!(rank <= 5);
    }

    #[test]
    fn rows_are_feature_vectors((hyper, z) in layer(2, 4), x in inputs(3, 2)) {
        let phi = feature_matrix(&x, &z, &hyper).unwrap();
        for r in 0..3 {
            let v = feature_vector(&x.row(r).transpose(), &z, &hyper).unwrap();
            prop_assert_eq!(phi.row(r).transpose(), v);
        }
    }
}

#[test]
fn large_kernel_min_eigenvalue() {
    let mut runner = proptest::test_runner::TestRunner::deterministic();
    let (hyper, z) = layer(3, 32).new_tree(&mut runner).unwrap().current();
    let x = inputs(16, 3).new_tree(&mut runner).unwrap().current();
    let k = kernel_approx(&x, &z, &hyper).unwrap();
    assert!(min_eigenvalue(&k) >= -1e-10);
}

#[test]
fn single_row_kernel_is_squared_norm() {
    let mut runner = proptest::test_runner::TestRunner::deterministic();
    let (hyper, z) = layer(2, 6).new_tree(&mut runner).unwrap().current();
    let x = inputs(1, 2).new_tree(&mut runner).unwrap().current();
    let k = kernel_approx(&x, &z, &hyper).unwrap();
    let phi = feature_vector(&x.row(0).transpose(), &z, &hyper).unwrap();
    assert_eq!(k.shape(), (1, 1));
    assert!((k[(0, 0)] - phi.norm_squared()).abs() < 1e-14);
}

#[test]
fn duplicate_rows_duplicate_kernel_entries() {
    let mut runner = proptest::test_runner::TestRunner::deterministic();
    let (hyper, z) = layer(2, 6).new_tree(&mut runner).unwrap().current();
    let mut x = inputs(4, 2).new_tree(&mut runner).unwrap().current();
    let first = x.row(0).into_owned();
    x.set_row(2, &first);
    let k = kernel_approx(&x, &z, &hyper).unwrap();
    assert_eq!(k.row(0), k.row(2));
    assert_eq!(k.column(0), k.column(2));
}
