//! Closed-form two-level results for `H = hσˣ + iγσʸ`.
//!
//! Note the sign and scale: the reservoir generator carries `−(iγ/2)σʸ`, so
//! a reservoir strength `γ_res` corresponds to `γ = −γ_res/2` here. Use
//! [`twolevel_gamma_from_reservoir`] for the conversion.

use faer::Mat;

use crate::linalg::{c64, CMat, I, ZERO};

/// `|ω| t` below which the series forms replace the trigonometric ones.
pub const SERIES_THRESHOLD: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoLevelParams {
    pub h: f64,
    pub gamma: f64,
    pub t: f64,
    pub t_prime: f64,
    pub theta: f64,
}

impl TwoLevelParams {
    pub fn new(h: f64, gamma: f64, t: f64) -> Self {
        Self { h, gamma, t, t_prime: 0.0, theta: 0.0 }
    }

    /// `ω² = h² − γ²`; negative in the broken phase.
    pub fn omega_sq(&self) -> f64 {
        self.h * self.h - self.gamma * self.gamma
    }
}

pub fn twolevel_gamma_from_reservoir(gamma_res: f64) -> f64 {
    -0.5 * gamma_res
}

/// `hσˣ + iγσʸ = [[0, h+γ], [h−γ, 0]]`.
pub fn twolevel_generator(h: f64, gamma: f64) -> CMat {
    let v = [ZERO, c64::new(h + gamma, 0.0), c64::new(h - gamma, 0.0), ZERO];
    Mat::from_fn(2, 2, |i, j| v[2 * i + j])
}

/// `(cos ωt, sin(ωt)/ω)` continued analytically to imaginary `ω`.
fn c_and_s(omega_sq: f64, t: f64) -> (f64, f64) {
    let x = omega_sq * t * t;
    if x.abs() < SERIES_THRESHOLD * SERIES_THRESHOLD {
        let c = 1.0 - x / 2.0 + x * x / 24.0;
        let s = t * (1.0 - x / 6.0 + x * x / 120.0);
        (c, s)
    } else if omega_sq > 0.0 {
        let w = omega_sq.sqrt();
        ((w * t).cos(), (w * t).sin() / w)
    } else {
        let k = (-omega_sq).sqrt();
        ((k * t).cosh(), (k * t).sinh() / k)
    }
}

/// Coefficients of `Σᶻ(t) = Aσᶻ + Bσʸ + Cσˣ + D·I` and the norm
/// `Tr[U U†] = 2c² + 2s²(h²+γ²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeisenbergCoeffs {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub norm: f64,
}

pub fn twolevel_heisenberg_coeffs(p: &TwoLevelParams) -> HeisenbergCoeffs {
    let (c, s) = c_and_s(p.omega_sq(), p.t);
    let hg = p.h * p.h + p.gamma * p.gamma;
    HeisenbergCoeffs {
        a: c * c - s * s * hg,
        b: 2.0 * p.h * c * s,
        c: 0.0,
        d: 2.0 * p.h * p.gamma * s * s,
        norm: 2.0 * c * c + 2.0 * s * s * hg,
    }
}

/// Unnormalized `σᶻ(t)` including the input rotation by `Θ = θt'`, as
/// Pauli components `(I, x, y, z)`.
pub fn twolevel_sigma_z(p: &TwoLevelParams) -> [f64; 4] {
    let k = twolevel_heisenberg_coeffs(p);
    let two_theta = 2.0 * p.theta * p.t_prime;
    let (cos2, sin2) = (two_theta.cos(), two_theta.sin());
    [k.d, k.c, k.a * sin2 + k.b * cos2, k.a * cos2 - k.b * sin2]
}

/// `Σ_k c_k σ_k` for components `(I, x, y, z)`.
pub fn pauli_combination(coeffs: [f64; 4]) -> CMat {
    let [e, x, y, z] = coeffs.map(|v| c64::new(v, 0.0));
    let v = [e + z, x - I * y, x + I * y, e - z];
    Mat::from_fn(2, 2, |i, j| v[2 * i + j])
}

/// Trace distance between the evolved `|↑⟩` and `|↓⟩`.
pub fn twolevel_distance(p: &TwoLevelParams) -> f64 {
    let (c, s) = c_and_s(p.omega_sq(), p.t);
    // sin(2ωt)/ω = 2cs
    let ratio = 2.0 * c * s;
    (1.0 + p.gamma * p.gamma * ratio * ratio).powf(-0.5)
}

/// Oscillation period `π/(2ω)` of the distance in the unbroken phase.
pub fn twolevel_distance_period(h: f64, gamma: f64) -> Option<f64> {
    let w2 = h * h - gamma * gamma;
    (w2 > 0.0).then(|| std::f64::consts::PI / (2.0 * w2.sqrt()))
}

pub fn distance_curve(h: f64, gamma: f64, times: &[f64]) -> Vec<(f64, f64)> {
    times.iter().map(|&t| (t, twolevel_distance(&TwoLevelParams::new(h, gamma, t)))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermitian_limit() {
        for t in [0.0, 0.3, 1.7] {
            let k = twolevel_heisenberg_coeffs(&TwoLevelParams::new(1.3, 0.0, t));
            assert!((k.a - (2.6 * t).cos()).abs() < 1e-14);
            assert!((k.b - (2.6 * t).sin()).abs() < 1e-14);
            assert_eq!(k.d, 0.0);
            assert!((k.norm - 2.0).abs() < 1e-14);
            assert!((twolevel_distance(&TwoLevelParams::new(1.3, 0.0, t)) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn exceptional_point_polynomials() {
        let (h, t) = (0.8, 2.5);
        let k = twolevel_heisenberg_coeffs(&TwoLevelParams::new(h, h, t));
        assert!((k.a - (1.0 - 2.0 * h * h * t * t)).abs() < 1e-12);
        assert!((k.b - 2.0 * h * t).abs() < 1e-12);
        assert!((k.d - 2.0 * h * h * t * t).abs() < 1e-12);
    }

    #[test]
    fn distance_at_time_zero_and_large_gamma() {
        assert_eq!(twolevel_distance(&TwoLevelParams::new(1.0, 0.5, 0.0)), 1.0);
        let d = twolevel_distance(&TwoLevelParams::new(1.0, 5.0, 3.0));
        assert!(d > 0.0 && d < 1e-10);
    }

    #[test]
    fn exceptional_point_distance_decays_as_inverse_time() {
        let h = 1.0;
        let d1 = twolevel_distance(&TwoLevelParams::new(h, h, 100.0));
        let d2 = twolevel_distance(&TwoLevelParams::new(h, h, 200.0));
        assert!((d1 / d2 - 2.0).abs() < 1e-3);
    }

    #[test]
    fn reservoir_gamma_mapping() {
        assert_eq!(twolevel_gamma_from_reservoir(3.0), -1.5);
    }
}
