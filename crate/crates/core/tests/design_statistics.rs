mod common;

use common::gaussian_matrix;
use rankthresh::designs::{
    accumulate_surrogate, mu_squared, sample_design, trace_inner, DesignKind, DesignSpec, Observation, StreamRng,
};
use rankthresh::harness::{generate_ground_truth, sample_trial_data, NoiseModel};
use rankthresh::linalg::Matrix;

/// Mean and standard error of `<A, X>^2` over `n` draws.
fn isometry_moment(spec: &DesignSpec, a: &Matrix, n: usize, seed: u64) -> (f64, f64) {
    let mut rng = StreamRng::new(seed, 0);
    let draws: Vec<f64> = (0..n)
        .map(|_| trace_inner(&sample_design(spec, &mut rng), a).unwrap().powi(2))
        .collect();
    let mean = draws.iter().sum::<f64>() / n as f64;
    let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

#[test]
fn isometry_holds_with_equality_for_every_random_design() {
    let mut rng = StreamRng::new(31, 0);
    let a = gaussian_matrix(5, 4, &mut rng);
    let fro_sq = a.frobenius_norm().powi(2);
    for kind in [
        DesignKind::UsrCompletion,
        DesignKind::ColumnMask,
        DesignKind::GaussianFull,
        DesignKind::RademacherFull,
    ] {
        let spec = DesignSpec::new(kind, 5, 4, None).unwrap();
        let expected = fro_sq / mu_squared(&spec).unwrap();
        let (mean, se) = isometry_moment(&spec, &a, 100_000, 1 + kind as u64);
        assert!(
            (mean - expected).abs() <= 4.0 * se,
            "{kind:?}: mean {mean}, expected {expected}, se {se}"
        );
    }
}

#[test]
fn surrogate_is_unbiased() {
    let mut rng = StreamRng::new(8, 0);
    let a = gaussian_matrix(4, 3, &mut rng);
    for kind in [
        DesignKind::UsrCompletion,
        DesignKind::ColumnMask,
        DesignKind::GaussianFull,
    ] {
        let spec = DesignSpec::new(kind, 4, 3, None).unwrap();
        let mut draw_rng = StreamRng::new(99, kind as u64);
        let n = 200_000;
        let obs: Vec<Observation> = (0..n)
            .map(|_| {
                let x = sample_design(&spec, &mut draw_rng);
                let y = trace_inner(&x, &a).unwrap();
                Observation::new(x, y)
            })
            .collect();
        let surrogate = accumulate_surrogate(&obs, 4, 3, mu_squared(&spec).unwrap()).unwrap();
        let err = (&surrogate - &a).frobenius_norm() / a.frobenius_norm();
        assert!(err < 0.05, "{kind:?}: relative error {err}");
    }
}

#[test]
fn gaussian_noise_has_requested_variance() {
    let mut rng = StreamRng::new(5, 0);
    let truth = generate_ground_truth(6, 6, 2, 1.0, &mut rng).unwrap();
    let spec = DesignSpec::usr(6, 6).unwrap();
    let sigma = 0.3;
    let obs = sample_trial_data(&truth, &spec, &NoiseModel::Gaussian { sigma }, 100_000, &mut rng).unwrap();
    let xi: Vec<f64> = obs
        .iter()
        .map(|o| o.response - trace_inner(&o.design, &truth.a0).unwrap())
        .collect();
    let n = xi.len() as f64;
    let sq: Vec<f64> = xi.iter().map(|x| x * x).collect();
    let mean_sq = sq.iter().sum::<f64>() / n;
    let se = (sq.iter().map(|s| (s - mean_sq).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
    assert!(
        (mean_sq - sigma * sigma).abs() <= 4.0 * se,
        "{mean_sq} vs {}",
        sigma * sigma
    );
}

#[test]
fn streams_are_reproducible_and_distinct() {
    let spec = DesignSpec::new(DesignKind::GaussianFull, 3, 3, None).unwrap();
    let draw = |seed, stream| {
        let mut rng = StreamRng::new(seed, stream);
        (0..5)
            .map(|_| format!("{:?}", sample_design(&spec, &mut rng)))
            .collect::<Vec<_>>()
    };
    assert_eq!(draw(1, 0), draw(1, 0));
    assert_ne!(draw(1, 0), draw(1, 1));
    assert_ne!(draw(1, 0), draw(2, 0));
}

#[test]
fn regression_design_cycles_rows() {
    let v = Matrix::from_row_major(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
    let spec = DesignSpec::regression(v, 4).unwrap();
    assert!(mu_squared(&spec).is_err());
    let mut rng = StreamRng::new(0, 0);
    let rows: Vec<String> = (0..7)
        .map(|_| format!("{:?}", sample_design(&spec, &mut rng)))
        .collect();
    assert_eq!(rows[0], rows[3]);
    assert_eq!(rows[1], rows[4]);
    assert_ne!(rows[0], rows[1]);
}
