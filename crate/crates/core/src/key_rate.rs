//! Asymptotic key rate of Gaussian-modulated coherent-state CV-QKD with
//! heterodyne detection and reverse reconciliation.
//!
//! Photon numbers convert to shot-noise units (SNU) as `V_mod = 2 n̄` and
//! `ξ = 2 n_ex`. The excess noise is referred to Bob's input, so it adds
//! to Bob's variance unattenuated.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Slack allowed on symplectic eigenvalues sitting at the vacuum bound.
const PHYSICAL_TOL: f64 = 1e-9;

pub const DEFAULT_BETA: f64 = 0.95;

/// Arguments of the key-rate function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkrInputs {
    pub mean_photon: f64,
    pub transmittance: f64,
    pub excess_photons: f64,
    pub beta: f64,
}

impl SkrInputs {
    pub fn new(mean_photon: f64, transmittance: f64, excess_photons: f64, beta: f64) -> Self {
        Self {
            mean_photon,
            transmittance,
            excess_photons,
            beta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mean_photon >= 0.0) || !self.mean_photon.is_finite() {
            return Err(invalid(format!("mean photon number must be non-negative, got {}", self.mean_photon)));
        }
        if !(self.transmittance > 0.0 && self.transmittance <= 1.0) {
            return Err(invalid(format!("transmittance must lie in (0, 1], got {}", self.transmittance)));
        }
        if !(self.excess_photons >= 0.0) || !self.excess_photons.is_finite() {
            return Err(invalid(format!("excess noise must be non-negative, got {}", self.excess_photons)));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(invalid(format!("reconciliation efficiency must lie in (0, 1], got {}", self.beta)));
        }
        Ok(())
    }

    /// Modulation variance in SNU.
    pub fn modulation_variance(&self) -> f64 {
        2.0 * self.mean_photon
    }

    /// Excess noise in SNU.
    pub fn excess_snu(&self) -> f64 {
        2.0 * self.excess_photons
    }
}

/// Two-mode covariance `[[a I, c Z], [c Z, b I]]` in SNU.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoModeCovariance {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl TwoModeCovariance {
    /// Row-major 4×4 matrix with quadrature ordering (x_A, p_A, x_B, p_B).
    pub fn to_matrix(&self) -> [[f64; 4]; 4] {
        let (a, b, c) = (self.a, self.b, self.c);
        [
            [a, 0.0, c, 0.0],
            [0.0, a, 0.0, -c],
            [c, 0.0, b, 0.0],
            [0.0, -c, 0.0, b],
        ]
    }
}

pub fn build_covariance(inputs: &SkrInputs) -> Result<TwoModeCovariance> {
    inputs.validate()?;
    let v = inputs.modulation_variance() + 1.0;
    let tau = inputs.transmittance;
    Ok(TwoModeCovariance {
        a: v,
        b: tau * (v - 1.0) + 1.0 + inputs.excess_snu(),
        c: (tau * (v * v - 1.0)).sqrt(),
    })
}

/// Closed-form symplectic eigenvalues `(ν1, ν2)`, `ν1 >= ν2`.
pub fn symplectic_eigenvalues(cov: &TwoModeCovariance) -> Result<(f64, f64)> {
    let (a, b, c) = (cov.a, cov.b, cov.c);
    let big_a = a * a + b * b - 2.0 * c * c;
    let det_root = a * b - c * c;
    let disc = big_a * big_a - 4.0 * det_root * det_root;
    if disc < -PHYSICAL_TOL * big_a * big_a {
        return Err(Error::NumericalDomain(format!("negative discriminant {disc}")));
    }
    let nu1 = ((big_a + disc.max(0.0).sqrt()) / 2.0).sqrt();
    if !(nu1 > 0.0) {
        return Err(Error::NumericalDomain("degenerate covariance".into()));
    }
    // ν1·ν2 = |ab - c²| avoids the cancellation in (A - √D)/2.
    let nu2 = det_root.abs() / nu1;
    if nu2 < 1.0 - PHYSICAL_TOL {
        return Err(Error::NumericalDomain(format!("unphysical symplectic eigenvalue {nu2}")));
    }
    Ok((nu1.max(1.0), nu2.max(1.0)))
}

/// Symplectic eigenvalue of Alice's mode conditioned on Bob's heterodyne
/// outcome.
pub fn conditional_eigenvalue(cov: &TwoModeCovariance) -> Result<f64> {
    let nu3 = cov.a - cov.c * cov.c / (cov.b + 1.0);
    if nu3 < 1.0 - PHYSICAL_TOL {
        return Err(Error::NumericalDomain(format!("unphysical conditional eigenvalue {nu3}")));
    }
    Ok(nu3.max(1.0))
}

/// Von Neumann entropy (bits) of a thermal mode with symplectic eigenvalue `nu`.
pub fn entropy_g(nu: f64) -> f64 {
    let up = (nu + 1.0) / 2.0;
    let down = (nu - 1.0) / 2.0;
    if down <= 0.0 {
        return 0.0;
    }
    up * up.log2() - down * down.log2()
}

/// Eve's Holevo information on Bob's data, in bits per symbol.
pub fn holevo_bound(cov: &TwoModeCovariance) -> Result<f64> {
    let (nu1, nu2) = symplectic_eigenvalues(cov)?;
    let nu3 = conditional_eigenvalue(cov)?;
    Ok(entropy_g(nu1) + entropy_g(nu2) - entropy_g(nu3))
}

/// Alice–Bob mutual information under heterodyne detection, bits per symbol.
pub fn mutual_information(cov: &TwoModeCovariance) -> f64 {
    let b1 = cov.b + 1.0;
    (b1 / (b1 - cov.c * cov.c / (cov.a + 1.0))).log2()
}

/// `β·I_AB − χ_BE` without clipping; negative when no key can be extracted.
pub fn key_rate_margin(inputs: &SkrInputs) -> Result<f64> {
    let cov = build_covariance(inputs)?;
    Ok(inputs.beta * mutual_information(&cov) - holevo_bound(&cov)?)
}

/// Secure key rate in bits per symbol, clipped at zero.
pub fn secure_key_rate(inputs: &SkrInputs) -> Result<f64> {
    Ok(key_rate_margin(inputs)?.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inputs(n: f64, tau: f64, nex: f64, beta: f64) -> SkrInputs {
        SkrInputs::new(n, tau, nex, beta)
    }

    #[test]
    fn covariance_examples() {
        let c = build_covariance(&inputs(6.0, 1.0, 0.0, 1.0)).unwrap();
        assert_eq!((c.a, c.b), (13.0, 13.0));
        assert!((c.c - 168f64.sqrt()).abs() < 1e-12);
        assert!((c.c - 12.961).abs() < 1e-3);

        let c = build_covariance(&inputs(1e-14, 0.3, 0.0, 1.0)).unwrap();
        assert!((c.a - 1.0).abs() < 1e-12 && (c.b - 1.0).abs() < 1e-12 && c.c.abs() < 1e-6);

        let c = build_covariance(&inputs(6.0, 0.01, 8e-4, 1.0)).unwrap();
        assert!((c.b - 1.1216).abs() < 1e-12);

        assert!(build_covariance(&inputs(6.0, 0.0, 0.0, 1.0)).is_err());
        assert!(build_covariance(&inputs(6.0, -0.1, 0.0, 1.0)).is_err());
        assert!(build_covariance(&inputs(6.0, 0.5, -1e-3, 1.0)).is_err());
        assert!(build_covariance(&inputs(6.0, 0.5, 0.0, 0.0)).is_err());
    }

    #[test]
    fn pure_and_product_states() {
        for v in [1.5, 13.0, 101.0] {
            let cov = TwoModeCovariance { a: v, b: v, c: (v * v - 1.0f64).sqrt() };
            let (n1, n2) = symplectic_eigenvalues(&cov).unwrap();
            assert!((n1 - 1.0).abs() < 1e-9 && (n2 - 1.0).abs() < 1e-9, "{n1} {n2}");
        }
        let (n1, n2) = symplectic_eigenvalues(&TwoModeCovariance { a: 3.0, b: 2.0, c: 0.0 }).unwrap();
        assert!((n1 - 3.0).abs() < 1e-12 && (n2 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn unphysical_covariance_is_rejected() {
        let cov = TwoModeCovariance { a: 2.0, b: 2.0, c: 2.5 };
        assert!(holevo_bound(&cov).is_err());
    }

    #[test]
    fn entropy_function() {
        assert_eq!(entropy_g(1.0), 0.0);
        assert!((entropy_g(3.0) - 2.0).abs() < 1e-15);
        let mut last = 0.0;
        for i in 1..400 {
            let g = entropy_g(1.0 + i as f64 * 0.05);
            assert!(g > last);
            last = g;
        }
    }

    #[test]
    fn lossless_channel_leaks_nothing() {
        let cov = build_covariance(&inputs(6.0, 1.0, 0.0, 1.0)).unwrap();
        assert!(holevo_bound(&cov).unwrap().abs() < 1e-9);
        assert!((mutual_information(&cov) - 7f64.log2()).abs() < 1e-12);
        let k = secure_key_rate(&inputs(6.0, 1.0, 0.0, 1.0)).unwrap();
        assert!((k - 7f64.log2()).abs() < 1e-9);
    }

    #[test]
    fn uncorrelated_modes_share_nothing() {
        assert_eq!(mutual_information(&TwoModeCovariance { a: 5.0, b: 2.0, c: 0.0 }), 0.0);
    }

    #[test]
    fn vanishing_transmittance_gives_no_key() {
        let k = secure_key_rate(&inputs(6.0, 1e-9, 0.0, 1.0)).unwrap();
        assert!(k < 1e-6, "{k}");
    }

    #[test]
    fn mutual_information_grows_with_power() {
        let mut last = -1.0;
        for i in 0..=200 {
            let n = 0.1 + i as f64 * (49.9 / 200.0);
            let cov = build_covariance(&inputs(n, 0.05, 1e-3, 0.95)).unwrap();
            let m = mutual_information(&cov);
            assert!(m > last);
            last = m;
        }
    }

    #[test]
    fn excess_noise_threshold_exists() {
        let mut last = f64::INFINITY;
        let mut threshold = None;
        for i in 0..2000 {
            let nex = i as f64 * 1e-5;
            let k = secure_key_rate(&inputs(6.0, 0.01, nex, 0.95)).unwrap_or(0.0);
            assert!(k <= last + 1e-15);
            if k == 0.0 && threshold.is_none() {
                threshold = Some(nex);
            }
            last = k;
        }
        let t = threshold.expect("key rate never reached zero");
        assert!(t > 0.0);
    }

    #[test]
    fn monotone_in_noise_transmittance_and_efficiency() {
        let grid = |i: usize| i as f64 / 99.0;
        for &(n, tau, nex) in &[(2.0, 0.1, 1e-3), (6.0, 0.01, 1e-4), (13.0, 0.8, 5e-3)] {
            let mut last = f64::INFINITY;
            for i in 0..100 {
                let k = secure_key_rate(&inputs(n, tau, grid(i) * 0.05, 0.95)).unwrap();
                assert!(k <= last + 1e-12);
                last = k;
            }
            let mut last = -1.0;
            for i in 0..100 {
                let k = secure_key_rate(&inputs(n, 1e-3 + grid(i) * (1.0 - 1e-3), nex, 0.95)).unwrap();
                assert!(k >= last - 1e-12);
                last = k;
            }
            let mut last = -1.0;
            for i in 0..100 {
                let k = secure_key_rate(&inputs(n, tau, nex, 0.5 + 0.5 * grid(i))).unwrap();
                assert!(k >= last - 1e-12);
                last = k;
            }
        }
    }

    #[test]
    fn key_rate_is_unimodal_in_photon_number() {
        for &(tau, nex) in &[(0.1, 1e-3), (0.5, 1e-2), (0.01, 1e-4)] {
            let f = |n: f64| key_rate_margin(&inputs(n, tau, nex, 0.95)).unwrap();
            let grid: Vec<f64> = (0..=500).map(|i| 0.1 + i as f64 * (49.9 / 500.0)).collect();
            let vals: Vec<f64> = grid.iter().map(|&n| f(n)).collect();
            let imax = vals
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0;
            assert!(imax > 0 && imax < grid.len() - 1, "tau {tau}: boundary maximum");
            assert!(vals[..=imax].windows(2).all(|w| w[1] >= w[0]));
            assert!(vals[imax..].windows(2).all(|w| w[1] <= w[0]));

            // golden-section search must land on the grid maximizer
            let (mut lo, mut hi) = (0.1, 50.0);
            let phi = (5f64.sqrt() - 1.0) / 2.0;
            for _ in 0..100 {
                let m1 = hi - phi * (hi - lo);
                let m2 = lo + phi * (hi - lo);
                if f(m1) < f(m2) {
                    lo = m1;
                } else {
                    hi = m2;
                }
            }
            let golden = 0.5 * (lo + hi);
            assert!((golden - grid[imax]).abs() <= 49.9 / 500.0 + 1e-9, "{golden} vs {}", grid[imax]);
        }
    }
}
