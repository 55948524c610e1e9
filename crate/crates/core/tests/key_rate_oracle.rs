//! Closed-form key-rate quantities against the numeric Gaussian-state oracle.

mod common;

use cvqkd::key_rate::{
    build_covariance, conditional_eigenvalue, holevo_bound, mutual_information, secure_key_rate, symplectic_eigenvalues,
    SkrInputs,
};
use common::*;
use nalgebra::Matrix4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn random_inputs(rng: &mut ChaCha8Rng) -> (f64, f64, f64) {
    let n = 10f64.powf(rng.gen_range(-2.0..1.7));
    let tau = 10f64.powf(rng.gen_range(-3.0..0.0));
    let n_ex = if rng.gen_bool(0.1) { 0.0 } else { 10f64.powf(rng.gen_range(-5.0..-0.3)) };
    (n, tau, n_ex)
}

#[test]
fn covariance_matrix_layout_matches_oracle() {
    let cov = build_covariance(&SkrInputs::new(3.0, 0.4, 0.01, 0.95)).unwrap();
    let m = cov.to_matrix();
    let g = joint_covariance(3.0, 0.4, 0.01);
    for i in 0..4 {
        for j in 0..4 {
            assert!((m[i][j] - g[(i, j)]).abs() < 1e-12);
        }
    }
}

#[test]
fn closed_form_matches_numeric_oracle_on_random_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst_chi: f64 = 0.0;
    for _ in 0..1000 {
        let (n, tau, n_ex) = random_inputs(&mut rng);
        let cov = build_covariance(&SkrInputs::new(n, tau, n_ex, 1.0)).unwrap();
        let gamma = joint_covariance(n, tau, n_ex);

        let (nu1, nu2) = symplectic_eigenvalues(&cov).unwrap();
        let [o1, o2] = spectrum4(&gamma);
        let scale = 1.0 + o1;
        assert!((nu1 - o1).abs() < 1e-9 * scale, "ν1 {nu1} vs {o1} at {n} {tau} {n_ex}");
        assert!((nu2 - o2).abs() < 1e-9 * scale, "ν2 {nu2} vs {o2} at {n} {tau} {n_ex}");

        let nu3 = conditional_eigenvalue(&cov).unwrap();
        let o3 = spectrum2(&conditional_on_heterodyne(&gamma));
        assert!((nu3 - o3).abs() < 1e-9 * (1.0 + o3));

        let chi = holevo_bound(&cov).unwrap();
        let d = (chi - numeric_holevo(&gamma)).abs();
        worst_chi = worst_chi.max(d);

        let sigma = (gamma + Matrix4::identity()) * 0.5;
        assert!((mutual_information(&cov) - heterodyne_mi(&sigma)).abs() < 1e-6);
    }
    assert!(worst_chi < 1e-6, "max |Δχ| = {worst_chi:e}");
}

#[test]
fn holevo_at_fixed_point_matches_oracle() {
    let (n, tau, n_ex) = (6.0, 0.01, 1.6e-3);
    let cov = build_covariance(&SkrInputs::new(n, tau, n_ex, 0.95)).unwrap();
    let chi = holevo_bound(&cov).unwrap();
    let oracle = numeric_holevo(&joint_covariance(n, tau, n_ex));
    assert!((chi - oracle).abs() < 1e-6, "{chi} vs {oracle}");
    assert!(chi > 0.0);
}

#[test]
fn lossless_mutual_information_matches_sampled_heterodyne() {
    let gamma = joint_covariance(6.0, 1.0, 0.0);
    let sigma = (gamma + Matrix4::identity()) * 0.5;
    let l = sigma.cholesky().unwrap().l();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let samples = 400_000;
    let mut acc = Matrix4::<f64>::zeros();
    for _ in 0..samples {
        let z = nalgebra::Vector4::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        let x = l * z;
        acc += x * x.transpose();
    }
    let estimate = heterodyne_mi(&(acc / samples as f64));
    let cov = build_covariance(&SkrInputs::new(6.0, 1.0, 0.0, 1.0)).unwrap();
    let closed = mutual_information(&cov);
    assert!((closed - 7f64.log2()).abs() < 1e-12);
    assert!((estimate - closed).abs() < 0.02, "{estimate} vs {closed}");
    let k = secure_key_rate(&SkrInputs::new(6.0, 1.0, 0.0, 1.0)).unwrap();
    assert!((k - 7f64.log2()).abs() < 1e-9);
}
