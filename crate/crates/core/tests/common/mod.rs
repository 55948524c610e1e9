//! Numeric Gaussian-state oracle shared by the integration targets: symplectic
//! spectra from a dense eigensolver, conditioning by Schur complement.

#![allow(dead_code)]

use nalgebra::{DMatrix, Matrix2, Matrix4};

pub fn joint_covariance(n: f64, tau: f64, n_ex: f64) -> Matrix4<f64> {
    let v = 2.0 * n + 1.0;
    let b = tau * (v - 1.0) + 1.0 + 2.0 * n_ex;
    let c = (tau * (v * v - 1.0)).sqrt();
    Matrix4::new(
        v, 0.0, c, 0.0, //
        0.0, v, 0.0, -c, //
        c, 0.0, b, 0.0, //
        0.0, -c, 0.0, b,
    )
}

pub fn omega4() -> Matrix4<f64> {
    let w = Matrix2::new(0.0, 1.0, -1.0, 0.0);
    let mut o = Matrix4::zeros();
    o.fixed_view_mut::<2, 2>(0, 0).copy_from(&w);
    o.fixed_view_mut::<2, 2>(2, 2).copy_from(&w);
    o
}

fn sqrt_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let e = m.clone().symmetric_eigen();
    let d = DMatrix::from_diagonal(&e.eigenvalues.map(|v| v.max(0.0).sqrt()));
    &e.eigenvectors * d * e.eigenvectors.transpose()
}

/// Symplectic spectrum of a covariance matrix, descending. The eigenvalues
/// of γ^½·Ωᵀ·γ·Ω·γ^½ are ν², each twice.
fn symplectic_spectrum(gamma: DMatrix<f64>, omega: DMatrix<f64>) -> Vec<f64> {
    let r = sqrt_psd(&gamma);
    let s = &r * omega.transpose() * &gamma * &omega * &r;
    let s = (&s + s.transpose()) * 0.5;
    let mut ev: Vec<f64> = s.symmetric_eigen().eigenvalues.iter().map(|v| v.max(0.0).sqrt()).collect();
    ev.sort_by(|a, b| b.partial_cmp(a).unwrap());
    ev.chunks(2).map(|p| 0.5 * (p[0] + p[1])).collect()
}

pub fn spectrum4(gamma: &Matrix4<f64>) -> [f64; 2] {
    let s = symplectic_spectrum(DMatrix::from_column_slice(4, 4, gamma.as_slice()), DMatrix::from_column_slice(4, 4, omega4().as_slice()));
    [s[0], s[1]]
}

pub fn spectrum2(gamma: &Matrix2<f64>) -> f64 {
    let w = Matrix2::new(0.0, 1.0, -1.0, 0.0);
    symplectic_spectrum(DMatrix::from_column_slice(2, 2, gamma.as_slice()), DMatrix::from_column_slice(2, 2, w.as_slice()))[0]
}

/// Alice's covariance after Bob's heterodyne measurement.
pub fn conditional_on_heterodyne(gamma: &Matrix4<f64>) -> Matrix2<f64> {
    let ga: Matrix2<f64> = gamma.fixed_view::<2, 2>(0, 0).into();
    let gb: Matrix2<f64> = gamma.fixed_view::<2, 2>(2, 2).into();
    let sab: Matrix2<f64> = gamma.fixed_view::<2, 2>(0, 2).into();
    let inv = (gb + Matrix2::identity()).try_inverse().unwrap();
    ga - sab * inv * sab.transpose()
}

/// Von Neumann entropy (bits) of a thermal mode with symplectic eigenvalue `nu`.
pub fn thermal_entropy(nu: f64) -> f64 {
    let mean = (nu - 1.0) / 2.0;
    if mean <= 0.0 {
        return 0.0;
    }
    (mean + 1.0) * (mean + 1.0).log2() - mean * mean.log2()
}

pub fn numeric_holevo(gamma: &Matrix4<f64>) -> f64 {
    let [n1, n2] = spectrum4(gamma);
    let n3 = spectrum2(&conditional_on_heterodyne(gamma));
    thermal_entropy(n1) + thermal_entropy(n2) - thermal_entropy(n3)
}

/// Gaussian mutual information between the two heterodyne outcome pairs,
/// whose covariance is (γ + I)/2.
pub fn heterodyne_mi(sigma: &Matrix4<f64>) -> f64 {
    let sa: Matrix2<f64> = sigma.fixed_view::<2, 2>(0, 0).into();
    let sb: Matrix2<f64> = sigma.fixed_view::<2, 2>(2, 2).into();
    0.5 * (sa.determinant() * sb.determinant() / sigma.determinant()).log2()
}
