//! Biorthogonal diagonalization and PT-breaking indicators.

use faer::{Mat, MatRef};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::RegularGraph;
use crate::linalg::{c64, identity, norm_1, solve, CMat, ZERO};
use crate::spin::{build_reservoir_hamiltonian, embed_pauli, Axis, DisorderRealization, ModelParams, NHHamiltonian};

/// Relative threshold above which `|Im E|` counts as complex.
pub const COMPLEX_RTOL: f64 = 1e-8;
/// Right-vector condition number beyond which `R⁻¹` is not trusted.
pub const MAX_CONDITION: f64 = 1e8;
pub const DEFAULT_GAMMA_RANGE: (f64, f64) = (0.0, 4.0);
pub const DEFAULT_GAMMA_TOL: f64 = 1e-3;

/// Eigenvalues with paired right (columns) and left (rows) eigenvectors,
/// normalized so that `⟨L_j|R_j⟩ = 1`.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub eigenvalues: Vec<c64>,
    pub right_vectors: CMat,
    /// `None` when the eigenbasis is (numerically) defective.
    pub left_vectors: Option<CMat>,
    pub lambda_im: f64,
    pub n_complex: usize,
    pub tol: f64,
    /// 1-norm condition number of the column-normalized right-vector matrix.
    pub condition: f64,
}

impl Spectrum {
    pub fn is_defective(&self) -> bool {
        self.left_vectors.is_none()
    }

    /// `Σ_j E_j |R_j⟩⟨L_j|`, if a biorthogonal basis is available.
    pub fn reconstruct(&self) -> Option<CMat> {
        let l = self.left_vectors.as_ref()?;
        let r = &self.right_vectors;
        let d = r.nrows();
        let scaled = Mat::from_fn(d, d, |i, j| r[(i, j)] * self.eigenvalues[j]);
        Some(crate::linalg::matmul(scaled.as_ref(), l.as_ref()))
    }
}

/// Default complexity threshold `1e-8 · max(1, ‖H‖₁)`.
pub fn default_tolerance(h: MatRef<'_, c64>) -> f64 {
    COMPLEX_RTOL * norm_1(h).max(1.0)
}

pub fn diagonalize(h: &NHHamiltonian) -> Result<Spectrum> {
    let hc = h.to_complex();
    let tol = default_tolerance(hc.as_ref());
    diagonalize_matrix(hc.as_ref(), tol)
}

pub fn diagonalize_matrix(h: MatRef<'_, c64>, tol: f64) -> Result<Spectrum> {
    if h.nrows() != h.ncols() {
        return Err(Error::DimensionMismatch { expected: h.nrows(), found: h.ncols() });
    }
    if !(tol > 0.0) {
        return Err(Error::param("tol", "must be positive"));
    }
    let d = h.nrows();
    let evd = h.eigen().map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let s = evd.S().column_vector();
    let eigenvalues: Vec<c64> = (0..d).map(|i| s[i]).collect();
    let mut right = evd.U().to_owned();
    for j in 0..d {
        let norm = (0..d).map(|i| right[(i, j)].norm_sqr()).sum::<f64>().sqrt();
        if norm > 0.0 {
            for i in 0..d {
                right[(i, j)] /= norm;
            }
        }
    }

    let inv = solve(right.as_ref(), identity(d).as_ref());
    let condition = norm_1(right.as_ref()) * norm_1(inv.as_ref());
    let left = if condition.is_finite() && condition <= MAX_CONDITION {
        Some(inv)
    } else {
        left_from_adjoint(h, &eigenvalues, &right)?
    };

    let lambda_im = eigenvalues.iter().map(|e| e.im.abs()).fold(0.0, f64::max);
    let n_complex = eigenvalues.iter().filter(|e| e.im.abs() > tol).count();
    Ok(Spectrum { eigenvalues, right_vectors: right, left_vectors: left, lambda_im, n_complex, tol, condition })
}

/// Left vectors from eigenvectors of `H†`, matched to `conj(E_j)`. Returns
/// `None` when some overlap `⟨L_j|R_j⟩` vanishes or pairing is ambiguous.
fn left_from_adjoint(h: MatRef<'_, c64>, values: &[c64], right: &CMat) -> Result<Option<CMat>> {
    let d = h.nrows();
    let adj = h.adjoint().to_owned();
    let evd = adj.eigen().map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let s = evd.S().column_vector();
    let u = evd.U();
    let mut used = vec![false; d];
    let mut left = Mat::<c64>::zeros(d, d);
    for (j, e) in values.iter().enumerate() {
        let target = e.conj();
        let Some(k) =
            (0..d).filter(|&k| !used[k]).min_by(|&a, &b| (s[a] - target).norm().total_cmp(&(s[b] - target).norm()))
        else {
            return Ok(None);
        };
        used[k] = true;
        // ⟨L| = v†, scaled so that ⟨L|R_j⟩ = 1.
        let overlap: c64 = (0..d).map(|i| u[(i, k)].conj() * right[(i, j)]).sum();
        if overlap.norm() < 1e-12 {
            return Ok(None);
        }
        for i in 0..d {
            left[(j, i)] = u[(i, k)].conj() / overlap;
        }
    }
    // Degenerate eigenvalues make the pairing arbitrary; only accept a
    // genuinely biorthonormal result.
    let gram = crate::linalg::matmul(left.as_ref(), right.as_ref());
    if crate::linalg::max_abs_diff(gram.as_ref(), identity(d).as_ref()) > 1e-6 {
        return Ok(None);
    }
    Ok(Some(left))
}

pub fn count_complex(s: &Spectrum, tol: f64) -> usize {
    s.eigenvalues.iter().filter(|e| e.im.abs() > tol).count()
}

pub fn max_imag(s: &Spectrum) -> f64 {
    s.lambda_im
}

/// Number of eigenvalues with `|Im E|` above the default threshold, without
/// computing eigenvectors.
pub fn complex_count(h: &NHHamiltonian) -> Result<(usize, f64)> {
    let values = h.real_matrix().eigenvalues().map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let tol = default_tolerance(h.to_complex().as_ref());
    let count = values.iter().filter(|e| e.im.abs() > tol).count();
    let lambda_im = values.iter().map(|e| e.im.abs()).fold(0.0, f64::max);
    Ok((count, lambda_im))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionStatus {
    Resolved,
    /// Complex eigenvalues already at the bracket start; `gamma_c` is the start.
    ComplexAtStart,
    /// Spectrum stays real across the whole bracket; `gamma_c` is the end.
    NoTransition,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GammaCriticalResult {
    pub gamma_c: f64,
    pub prediction: f64,
    /// Width of the final bisection bracket.
    pub resolution: f64,
    pub status: TransitionStatus,
}

/// Bisects for the smallest `γ` at which complex eigenvalues appear.
pub fn find_gamma_critical(
    params: &ModelParams,
    graph: &RegularGraph,
    disorder: &DisorderRealization,
    gamma_range: (f64, f64),
    tol: f64,
) -> Result<GammaCriticalResult> {
    let (mut lo, mut hi) = gamma_range;
    if !(lo >= 0.0 && hi > lo && tol > 0.0) {
        return Err(Error::param("gamma_range", format!("need 0 <= lo < hi and tol > 0, got ({lo}, {hi}), {tol}")));
    }
    let prediction = gamma_critical_prediction(params.hx, &disorder.eps_x);
    let is_complex = |g: f64| -> Result<bool> {
        let h = build_reservoir_hamiltonian(&params.with_gamma(g), graph, disorder)?;
        Ok(complex_count(&h)?.0 > 0)
    };
    if is_complex(lo)? {
        return Ok(GammaCriticalResult {
            gamma_c: lo,
            prediction,
            resolution: 0.0,
            status: TransitionStatus::ComplexAtStart,
        });
    }
    if !is_complex(hi)? {
        return Ok(GammaCriticalResult {
            gamma_c: hi,
            prediction,
            resolution: 0.0,
            status: TransitionStatus::NoTransition,
        });
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if is_complex(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(GammaCriticalResult {
        gamma_c: 0.5 * (lo + hi),
        prediction,
        resolution: hi - lo,
        status: TransitionStatus::Resolved,
    })
}

/// `min_l 2|hˣ + εˣ_l|`.
pub fn gamma_critical_prediction(h_x: f64, eps_x: &[f64]) -> f64 {
    eps_x.iter().map(|e| 2.0 * (h_x + e).abs()).fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumClass {
    Real,
    Exceptional,
    Complex,
}

/// Classifies `V = Σ_l f₊σ⁺_l + f₋σ⁻_l` by the sign of `f₊f₋`. Products below
/// `1e-12 · max(f₊², f₋²)` in magnitude count as zero.
pub fn real_spectrum_condition(f_plus: f64, f_minus: f64) -> Result<SpectrumClass> {
    if !f_plus.is_finite() || !f_minus.is_finite() {
        return Err(Error::NonFinite { what: "amplitudes" });
    }
    let p = f_plus * f_minus;
    let scale = f_plus.powi(2).max(f_minus.powi(2));
    Ok(if p.abs() <= 1e-12 * scale {
        SpectrumClass::Exceptional
    } else if p > 0.0 {
        SpectrumClass::Real
    } else {
        SpectrumClass::Complex
    })
}

/// Similarity map taking `√(f₊f₋)·Σσˣ` to `V` for `f₊f₋ > 0`.
#[derive(Debug, Clone)]
pub struct SimilarityTransform {
    pub theta: f64,
    /// `±√(f₊f₋)`, signed like `f₊`.
    pub amplitude: f64,
    pub s: CMat,
    pub s_inv: CMat,
}

/// `S = exp(ϑ Σ_l σᶻ_l)` with `ϑ = (ln|f₊| − ln|f₋|)/4`.
pub fn similarity_transform(f_plus: f64, f_minus: f64, n: usize) -> Result<SimilarityTransform> {
    if real_spectrum_condition(f_plus, f_minus)? != SpectrumClass::Real {
        return Err(Error::param("f_plus", "similarity transform needs f_plus * f_minus > 0"));
    }
    let theta = (f_plus.abs().ln() - f_minus.abs().ln()) / 4.0;
    let amplitude = f_plus.signum() * (f_plus * f_minus).sqrt();
    let dim = 1usize << n;
    let diag = |sign: f64| {
        Mat::from_fn(dim, dim, |i, j| {
            if i != j {
                return ZERO;
            }
            let mz: f64 = (0..n).map(|l| crate::spin::z_value(i, l, n)).sum();
            c64::new((sign * theta * mz).exp(), 0.0)
        })
    };
    Ok(SimilarityTransform { theta, amplitude, s: diag(1.0), s_inv: diag(-1.0) })
}

/// `Σ_l f₊σ⁺_l + f₋σ⁻_l`.
pub fn hardcore_boson_operator(f_plus: f64, f_minus: f64, n: usize) -> Result<CMat> {
    let dim = 1usize << n;
    let mut v = Mat::<c64>::zeros(dim, dim);
    for l in 0..n {
        let p = embed_pauli(Axis::Plus, l, n)?;
        let m = embed_pauli(Axis::Minus, l, n)?;
        for i in 0..dim {
            for j in 0..dim {
                v[(i, j)] += p[(i, j)] * f_plus + m[(i, j)] * f_minus;
            }
        }
    }
    Ok(v)
}

/// Convenience for one-off scans: the real Hamiltonian's eigenvalues as complex.
pub fn eigenvalues(h: &NHHamiltonian) -> Result<Vec<c64>> {
    h.real_matrix().eigenvalues().map_err(|e| Error::Eigen(format!("{e:?}")))
}
