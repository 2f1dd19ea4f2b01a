//! No-click dynamics emulated by a weighted ensemble of unitaries.
//!
//! The anti-Hermitian part of `H_eff = H − (iγ/2) Σ_l M_l` is specified by
//! Hermitian decay operators `M_l` (`M_l = L†_l L_l` for a jump operator
//! `L_l`). Each `M_l` is shifted to `M_l + λ̄_l I > 0` and replaced by its
//! positive root `L̄_l`, which then drives the pair of unitaries
//! `U_{±l} = exp[−i δt (H ± a L̄_l)]` with `a = √(Lγ/δt)`.
//!
//! The short-time rule is
//! `ρ̄ = (1/4L) Σ_l (U_{+l}+U_{−l}) ρ (U_{+l}+U_{−l})†`, whose trace is
//! `1 − γ δt Γ + O(δt²)` with `Γ = Σ_l Tr[ρ L̄_l²]`.

use faer::Mat;
use serde::Serialize;

use crate::dynamics::{trace_distance, DensityMatrix, Propagator};
use crate::error::{Error, Result};
use crate::linalg::{
    add, adjoint, c64, conjugate, expm, hermitian_eigen, hermitian_eigenvalues, hermitize, matmul, max_abs_diff,
    rescale, trace, CMat,
};
use crate::spin::{embed_pauli, Axis, NHHamiltonian};

/// Margin added on top of the positivity requirement by [`default_shift`].
pub const DEFAULT_SHIFT_MARGIN: f64 = 0.1;

/// Positive square root of `M + λ̄ I` for Hermitian `M`.
pub fn shift_decay_operator(m: &CMat, lambda_bar: f64) -> Result<CMat> {
    let d = m.nrows();
    if m.ncols() != d {
        return Err(Error::DimensionMismatch { expected: d, found: m.ncols() });
    }
    if max_abs_diff(m.as_ref(), adjoint(m.as_ref()).as_ref()) > 1e-12 * m.norm_l2().max(1.0) {
        return Err(Error::param("decay operator", "must be Hermitian"));
    }
    let mut shifted = m.clone();
    for i in 0..d {
        shifted[(i, i)] += lambda_bar;
    }
    let (values, u) = hermitian_eigen(shifted.as_ref())?;
    if !(values[0] > 0.0) {
        return Err(Error::ShiftTooSmall { min_eigenvalue: values[0] });
    }
    let scaled = Mat::from_fn(d, d, |i, j| u[(i, j)] * values[j].sqrt());
    let root = crate::linalg::matmul_adj(scaled.as_ref(), u.as_ref());
    Ok(crate::linalg::hermitize(root.as_ref()))
}

/// `L̄ = √(L†L + λ̄ I)`.
pub fn shift_jump_operator(l_op: &CMat, lambda_bar: f64) -> Result<CMat> {
    let m = matmul(adjoint(l_op.as_ref()).as_ref(), l_op.as_ref());
    shift_decay_operator(&m, lambda_bar)
}

/// `max(0, −λ_min(M)) + 0.1 · max(1, ρ(M))`.
pub fn default_shift(m: &CMat) -> Result<f64> {
    let ev = hermitian_eigenvalues(m.as_ref())?;
    let (lo, hi) = (ev[0], ev[ev.len() - 1]);
    let radius = lo.abs().max(hi.abs());
    Ok((-lo).max(0.0) + DEFAULT_SHIFT_MARGIN * radius.max(1.0))
}

#[derive(Debug, Clone)]
pub struct EmulationEnsemble {
    pub h: CMat,
    pub decay_ops: Vec<CMat>,
    pub shifted: Vec<CMat>,
    pub shifts: Vec<f64>,
    pub u_plus: Vec<CMat>,
    pub u_minus: Vec<CMat>,
    pub gamma: f64,
    pub dt: f64,
    /// `(U_{+l} + U_{−l})` per jump channel.
    sums: Vec<CMat>,
    /// `L̄_l²`, used for `Γ`.
    squares: Vec<CMat>,
}

impl EmulationEnsemble {
    pub fn n_jumps(&self) -> usize {
        self.decay_ops.len()
    }

    pub fn amplitude(&self) -> f64 {
        (self.n_jumps() as f64 * self.gamma / self.dt).sqrt()
    }

    /// `max_l max(‖U†_{+l}U_{+l} − I‖, ‖U†_{−l}U_{−l} − I‖)`.
    pub fn unitarity_defect(&self) -> f64 {
        let d = self.h.nrows();
        let id = crate::linalg::identity(d);
        self.u_plus
            .iter()
            .chain(&self.u_minus)
            .map(|u| max_abs_diff(matmul(adjoint(u.as_ref()).as_ref(), u.as_ref()).as_ref(), id.as_ref()))
            .fold(0.0, f64::max)
    }

    /// The generator whose normalized no-click step is being emulated.
    pub fn effective_hamiltonian(&self) -> CMat {
        effective_hamiltonian(&self.h, &self.decay_ops, self.gamma)
    }
}

/// `H − (iγ/2) Σ_l M_l`.
pub fn effective_hamiltonian(h: &CMat, decay_ops: &[CMat], gamma: f64) -> CMat {
    let mut out = h.clone();
    for m in decay_ops {
        out = add(out.as_ref(), crate::linalg::scale(m.as_ref(), c64::new(0.0, -0.5 * gamma)).as_ref());
    }
    out
}

/// Hermitian part of a reservoir generator with `M_l = σʸ_l`, so that
/// [`effective_hamiltonian`] at the same `γ` returns the generator itself.
pub fn reservoir_instance(h: &NHHamiltonian) -> Result<(CMat, Vec<CMat>)> {
    let n = h.params.n;
    let herm = hermitize(h.to_complex().as_ref());
    let decay = (0..n).map(|l| embed_pauli(Axis::Y, l, n)).collect::<Result<Vec<_>>>()?;
    Ok((herm, decay))
}

/// Builds `U_{±l}` for jump operators `L_l`. `shifts` defaults to
/// [`default_shift`] of each `L†_l L_l`.
pub fn build_ensemble(
    h: &CMat,
    jumps: &[CMat],
    gamma: f64,
    dt: f64,
    shifts: Option<&[f64]>,
) -> Result<EmulationEnsemble> {
    build_ensemble_from_decay(h, &decay_operators(jumps), gamma, dt, shifts)
}

/// `L†_l L_l` for each jump operator.
pub fn decay_operators(jumps: &[CMat]) -> Vec<CMat> {
    jumps.iter().map(|l| matmul(adjoint(l.as_ref()).as_ref(), l.as_ref())).collect()
}

/// As [`build_ensemble`], with the Hermitian decay operators `M_l` given
/// directly. `M_l` need not be positive; the shift restores positivity.
pub fn build_ensemble_from_decay(
    h: &CMat,
    decay_ops: &[CMat],
    gamma: f64,
    dt: f64,
    shifts: Option<&[f64]>,
) -> Result<EmulationEnsemble> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::param("dt", "must be positive"));
    }
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::param("gamma", "must be non-negative"));
    }
    if decay_ops.is_empty() {
        return Err(Error::param("decay_ops", "need at least one jump channel"));
    }
    if max_abs_diff(h.as_ref(), adjoint(h.as_ref()).as_ref()) > 1e-12 * h.norm_l2().max(1.0) {
        return Err(Error::param("h", "must be Hermitian"));
    }
    let shifts: Vec<f64> = match shifts {
        Some(s) if s.len() == decay_ops.len() => s.to_vec(),
        Some(s) => return Err(Error::DimensionMismatch { expected: decay_ops.len(), found: s.len() }),
        None => decay_ops.iter().map(default_shift).collect::<Result<_>>()?,
    };
    let shifted: Vec<CMat> =
        decay_ops.iter().zip(&shifts).map(|(m, &s)| shift_decay_operator(m, s)).collect::<Result<_>>()?;
    let a = (decay_ops.len() as f64 * gamma / dt).sqrt();
    let mut u_plus = Vec::with_capacity(shifted.len());
    let mut u_minus = Vec::with_capacity(shifted.len());
    let mut sums = Vec::with_capacity(shifted.len());
    for lb in &shifted {
        let kick = crate::linalg::scale(lb.as_ref(), c64::new(a, 0.0));
        let up = expm(add(h.as_ref(), kick.as_ref()).as_ref(), c64::new(0.0, -dt))?;
        let um = expm(crate::linalg::sub(h.as_ref(), kick.as_ref()).as_ref(), c64::new(0.0, -dt))?;
        sums.push(add(up.as_ref(), um.as_ref()));
        u_plus.push(up);
        u_minus.push(um);
    }
    let squares = shifted.iter().map(|l| matmul(l.as_ref(), l.as_ref())).collect();
    Ok(EmulationEnsemble {
        h: h.clone(),
        decay_ops: decay_ops.to_vec(),
        shifted,
        shifts,
        u_plus,
        u_minus,
        gamma,
        dt,
        sums,
        squares,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepBookkeeping {
    /// `Γ = Σ_l Tr[ρ L̄_l²]` on the input state.
    pub gamma_functional: f64,
    /// Trace of `ρ̄` before the `e^{γδtΓ}` factor and renormalization.
    pub raw_trace: f64,
}

/// One emulated step followed by exact renormalization.
pub fn emulate_step(rho: &DensityMatrix, ens: &EmulationEnsemble) -> Result<(DensityMatrix, StepBookkeeping)> {
    let d = ens.h.nrows();
    if rho.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, found: rho.dim() });
    }
    let gamma_functional: f64 =
        ens.squares.iter().map(|sq| trace(matmul(rho.matrix().as_ref(), sq.as_ref()).as_ref()).re).sum();
    let mut acc = Mat::<c64>::zeros(d, d);
    for s in &ens.sums {
        acc += conjugate(s.as_ref(), rho.matrix().as_ref());
    }
    rescale(&mut acc, 1.0 / (4.0 * ens.n_jumps() as f64));
    let raw_trace = trace(acc.as_ref()).re;
    rescale(&mut acc, (ens.gamma * ens.dt * gamma_functional).exp());
    let out = DensityMatrix::from_unnormalized(acc)?;
    Ok((out, StepBookkeeping { gamma_functional, raw_trace }))
}

/// Normalized no-click step under [`effective_hamiltonian`].
pub fn exact_step(rho: &DensityMatrix, ens: &EmulationEnsemble) -> Result<DensityMatrix> {
    let u = Propagator::from_matrix(&ens.effective_hamiltonian(), ens.dt)?;
    crate::dynamics::propagate(rho, &u)
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorScan {
    pub dt: Vec<f64>,
    pub error: Vec<f64>,
    /// Least-squares slope of `ln error` against `ln δt`; `None` if any
    /// error is at the numerical floor.
    pub slope: Option<f64>,
}

impl ErrorScan {
    /// Largest `error/δt²` over the scan.
    pub fn envelope_constant(&self) -> f64 {
        self.dt.iter().zip(&self.error).map(|(dt, e)| e / (dt * dt)).fold(0.0, f64::max)
    }
}

/// Below this one-step error the log-log fit is meaningless.
pub const ERROR_FLOOR: f64 = 1e-13;

/// One-step trace-distance error of the emulation against the exact step,
/// for each `δt` (descending).
pub fn emulation_error_scan(
    h: &CMat,
    jumps: &[CMat],
    gamma: f64,
    dt_list: &[f64],
    rho0: &DensityMatrix,
    shifts: Option<&[f64]>,
) -> Result<ErrorScan> {
    emulation_error_scan_from_decay(h, &decay_operators(jumps), gamma, dt_list, rho0, shifts)
}

pub fn emulation_error_scan_from_decay(
    h: &CMat,
    decay_ops: &[CMat],
    gamma: f64,
    dt_list: &[f64],
    rho0: &DensityMatrix,
    shifts: Option<&[f64]>,
) -> Result<ErrorScan> {
    if dt_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::param("dt_list", "must be strictly descending"));
    }
    let mut error = Vec::with_capacity(dt_list.len());
    for &dt in dt_list {
        let ens = build_ensemble_from_decay(h, decay_ops, gamma, dt, shifts)?;
        let (emulated, _) = emulate_step(rho0, &ens)?;
        let exact = exact_step(rho0, &ens)?;
        error.push(trace_distance(&emulated, &exact)?);
    }
    let slope = if error.iter().all(|&e| e > ERROR_FLOOR) && dt_list.len() >= 2 {
        let xs: Vec<f64> = dt_list.iter().map(|d| d.ln()).collect();
        let ys: Vec<f64> = error.iter().map(|e| e.ln()).collect();
        Some(least_squares_slope(&xs, &ys))
    } else {
        None
    };
    Ok(ErrorScan { dt: dt_list.to_vec(), error, slope })
}

pub(crate) fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}
