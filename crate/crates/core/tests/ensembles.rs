use nalgebra::DMatrix;

use spectral_barrier::ensembles::{build_kashin, sample, Ensemble, EnsembleSpec, Family};

fn second_moment(x: &DMatrix<f64>) -> DMatrix<f64> {
    x * x.transpose() / x.ncols() as f64
}

#[test]
fn sampled_second_moments_are_near_identity() {
    let count = 40_000;
    for (family, tol) in [
        (Family::Gaussian, 0.04),
        (Family::Rademacher, 0.04),
        // Coordinate fourth moment 3(ν-2)/(ν-4) = 9 widens the spread.
        (Family::StudentT { nu: 5.0 }, 0.1),
        (Family::SparseCoordinate, 0.1),
        (Family::KashinDiscrete { n_points: 12, delta: 0.5 }, 0.1),
    ] {
        let spec = EnsembleSpec::new(family, 4, 9).unwrap();
        let m = second_moment(&sample(&spec, count).unwrap());
        let err = (m - DMatrix::identity(4, 4)).amax();
        assert!(err < tol, "{family:?}: max deviation {err}");
    }
}

#[test]
fn finite_supports_are_exactly_isotropic() {
    for family in [
        Family::Rademacher,
        Family::SparseCoordinate,
        Family::KashinDiscrete { n_points: 20, delta: 0.25 },
    ] {
        let spec = EnsembleSpec::new(family, 5, 1).unwrap();
        let support = Ensemble::new(spec).unwrap().finite_support().unwrap();
        let err = (second_moment(&support) - DMatrix::identity(5, 5)).amax();
        assert!(err < 1e-10, "{family:?}: {err}");
    }
}

#[test]
fn streams_are_deterministic_and_distinct() {
    let ens = Ensemble::new("student_t:p=3,nu=4".parse().unwrap()).unwrap();
    let a: Vec<_> = ens.sampler(0).take(5).collect();
    let b: Vec<_> = ens.sampler(0).take(5).collect();
    let c: Vec<_> = ens.sampler(1).take(5).collect();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn kashin_constant_is_a_valid_small_ball_value() {
    let k = build_kashin(32, 0.5, 16, 3).unwrap();
    assert_eq!(k.support().shape(), (16, 32));
    // K ≤ √(E(X,v)²) = 1, and K > 0 for a spanning support.
    assert!(k.k_hat() > 0.0 && k.k_hat() <= 1.0);
    assert!(build_kashin(32, 0.5, 17, 3).is_err());
}
