//! Normalized no-click evolution, stochastic jump unraveling and state
//! diagnostics (trace distance, purity, logarithmic negativity).

use faer::Mat;
use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{
    adjoint, c64, conjugate, expm, hermitian_eigen, hermitian_eigenvalues, hermitize, identity, matmul, matmul_adj,
    matmul_into, max_abs_diff, rescale, trace, CMat, I, ONE, ZERO,
};
use crate::spin::{embed_pauli, site_mask, Axis, NHHamiltonian};

/// Eigenvalues above `-CLIP_THRESHOLD` are treated as round-off.
pub const CLIP_THRESHOLD: f64 = 1e-10;
/// Largest negative mass that may be clipped before the map is declared broken.
pub const MAX_CLIPPED_MASS: f64 = 1e-6;
/// Traces below this are treated as a collapsed state.
pub const TRACE_FLOOR: f64 = 1e-280;
/// Log-negativities below this are round-off of a separable state.
pub const NEGATIVITY_FLOOR: f64 = 1e-12;
/// Upper bound on the total jump probability per step.
pub const MAX_JUMP_PROBABILITY: f64 = 0.1;

/// Hermitian, unit-trace, positive semidefinite matrix.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    m: CMat,
}

impl DensityMatrix {
    /// Hermitizes, normalizes and clips round-off negativity of `m`.
    pub fn from_unnormalized(m: CMat) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch { expected: m.nrows(), found: m.ncols() });
        }
        if !crate::linalg::is_finite(m.as_ref()) {
            return Err(Error::NonFinite { what: "density matrix" });
        }
        let mut h = hermitize(m.as_ref());
        let tr = trace(h.as_ref()).re;
        if !(tr > TRACE_FLOOR) {
            return Err(Error::VanishingNorm { trace: tr });
        }
        rescale(&mut h, 1.0 / (tr));
        let ev = hermitian_eigenvalues(h.as_ref())?;
        if ev[0] < -CLIP_THRESHOLD {
            h = clip_negative(h)?;
        }
        Ok(Self { m: h })
    }

    /// `|ψ⟩⟨ψ|` for a (not necessarily normalized) vector.
    pub fn pure(psi: &[c64]) -> Result<Self> {
        let d = psi.len();
        let norm2: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        if !(norm2 > TRACE_FLOOR) {
            return Err(Error::VanishingNorm { trace: norm2 });
        }
        Ok(Self { m: Mat::from_fn(d, d, |i, j| psi[i] * psi[j].conj() / norm2) })
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        let mut m = identity(dim);
        rescale(&mut m, 1.0 / (dim as f64));
        Self { m }
    }

    /// `G G† / Tr(G G†)`.
    pub fn from_factor(g: &CMat) -> Result<Self> {
        let norm2 = g.norm_l2().powi(2);
        if !(norm2 > TRACE_FLOOR) {
            return Err(Error::VanishingNorm { trace: norm2 });
        }
        let mut m = matmul_adj(g.as_ref(), g.as_ref());
        rescale(&mut m, 1.0 / (norm2));
        Ok(Self { m: hermitize(m.as_ref()) })
    }

    pub fn matrix(&self) -> &CMat {
        &self.m
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    /// Real parts of the diagonal, i.e. computational-basis populations.
    pub fn populations(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.m[(i, i)].re).collect()
    }
}

fn clip_negative(h: CMat) -> Result<CMat> {
    let (values, u) = hermitian_eigen(h.as_ref())?;
    let mass: f64 = values.iter().filter(|&&v| v < 0.0).map(|v| -v).sum();
    if mass > MAX_CLIPPED_MASS {
        return Err(Error::PositivityViolation { mass, limit: MAX_CLIPPED_MASS });
    }
    let clipped: Vec<f64> = values.iter().map(|&v| v.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    let d = h.nrows();
    let scaled = Mat::from_fn(d, d, |i, j| u[(i, j)] * (clipped[j] / total));
    Ok(hermitize(matmul_adj(scaled.as_ref(), u.as_ref()).as_ref()))
}

/// `exp(-i t H)` for a fixed generator and duration.
#[derive(Debug, Clone)]
pub struct Propagator {
    pub u: CMat,
    pub t: f64,
}

impl Propagator {
    pub fn new(h: &NHHamiltonian, t: f64) -> Result<Self> {
        Self::from_matrix(&h.to_complex(), t)
    }

    pub fn from_matrix(h: &CMat, t: f64) -> Result<Self> {
        if !t.is_finite() {
            return Err(Error::param("t", "must be finite"));
        }
        Ok(Self { u: expm(h.as_ref(), c64::new(0.0, -t))?, t })
    }

    pub fn dim(&self) -> usize {
        self.u.nrows()
    }

    /// `‖U†U − I‖_max`.
    pub fn unitarity_defect(&self) -> f64 {
        let d = self.dim();
        let uu = matmul(adjoint(self.u.as_ref()).as_ref(), self.u.as_ref());
        max_abs_diff(uu.as_ref(), identity(d).as_ref())
    }
}

/// `ρ' = UρU† / Tr[UρU†]`.
pub fn propagate(rho: &DensityMatrix, u: &Propagator) -> Result<DensityMatrix> {
    if rho.dim() != u.dim() {
        return Err(Error::DimensionMismatch { expected: u.dim(), found: rho.dim() });
    }
    DensityMatrix::from_unnormalized(conjugate(u.u.as_ref(), rho.m.as_ref()))
}

/// State kept as `ρ ∝ G G†`. One step costs a single matrix product and
/// positivity holds by construction.
#[derive(Debug, Clone)]
pub struct FactoredState {
    g: CMat,
    scratch: CMat,
}

impl FactoredState {
    pub fn new(g: CMat) -> Result<Self> {
        let mut s = Self { scratch: Mat::zeros(g.nrows(), g.ncols()), g };
        s.normalize()?;
        Ok(s)
    }

    pub fn pure(psi: &[c64]) -> Result<Self> {
        Self::new(Mat::from_fn(psi.len(), 1, |i, _| psi[i]))
    }

    pub fn factor(&self) -> &CMat {
        &self.g
    }

    pub fn factor_mut(&mut self) -> &mut CMat {
        &mut self.g
    }

    /// `G ← U G`, renormalized.
    pub fn apply(&mut self, u: &CMat) -> Result<()> {
        matmul_into(self.scratch.as_mut(), u.as_ref(), self.g.as_ref());
        std::mem::swap(&mut self.g, &mut self.scratch);
        self.normalize()
    }

    pub fn normalize(&mut self) -> Result<()> {
        let norm2 = self.g.norm_l2().powi(2);
        if !norm2.is_finite() {
            return Err(Error::NonFinite { what: "state factor" });
        }
        if !(norm2 > TRACE_FLOOR) {
            return Err(Error::VanishingNorm { trace: norm2 });
        }
        rescale(&mut self.g, 1.0 / (norm2.sqrt()));
        Ok(())
    }

    /// Diagonal of `ρ` (the factor is kept at unit Frobenius norm).
    pub fn populations(&self) -> Vec<f64> {
        let (d, r) = (self.g.nrows(), self.g.ncols());
        let mut p = vec![0.0; d];
        for j in 0..r {
            for (i, pi) in p.iter_mut().enumerate() {
                *pi += self.g[(i, j)].norm_sqr();
            }
        }
        p
    }

    pub fn density(&self) -> Result<DensityMatrix> {
        DensityMatrix::from_factor(&self.g)
    }
}

/// Square Ginibre factor with i.i.d. standard complex Gaussian entries.
pub fn ginibre_factor(dim: usize, seed: u64) -> CMat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Mat::from_fn(dim, dim, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c64::new(re, im)
    })
}

/// `GG†/Tr(GG†)` with `G` a square Ginibre matrix.
pub fn random_mixed_state(dim: usize, seed: u64) -> Result<DensityMatrix> {
    if dim < 2 {
        return Err(Error::param("dim", "need dim >= 2"));
    }
    DensityMatrix::from_factor(&ginibre_factor(dim, seed))
}

pub fn trace_distance(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), found: b.dim() });
    }
    let diff = crate::linalg::sub(a.m.as_ref(), b.m.as_ref());
    let ev = hermitian_eigenvalues(diff.as_ref())?;
    Ok((0.5 * ev.iter().map(|v| v.abs()).sum::<f64>()).min(1.0))
}

/// `Tr ρ²`.
pub fn purity(rho: &DensityMatrix) -> f64 {
    rho.m.norm_l2().powi(2)
}

/// Advantage `(1 + D)/2` of the best single-shot discrimination between two
/// equally likely states.
pub fn discrimination_probability(distance: f64) -> f64 {
    0.5 * (1.0 + distance)
}

fn check_subsystem(subsystem: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    for &s in subsystem {
        if s >= n || seen[s] {
            return Err(Error::param("subsystem", format!("invalid or repeated site {s} for {n} spins")));
        }
        seen[s] = true;
    }
    Ok(())
}

fn spins_of(dim: usize) -> Result<usize> {
    if !dim.is_power_of_two() || dim < 2 {
        return Err(Error::param("dim", format!("{dim} is not a register dimension")));
    }
    Ok(dim.trailing_zeros() as usize)
}

/// Partial transpose over the sites in `subsystem`.
pub fn partial_transpose(rho: &DensityMatrix, subsystem: &[usize]) -> Result<CMat> {
    let n = spins_of(rho.dim())?;
    check_subsystem(subsystem, n)?;
    let mask: usize = subsystem.iter().map(|&s| site_mask(s, n)).sum();
    let d = rho.dim();
    Ok(Mat::from_fn(d, d, |i, j| {
        let swap = (i ^ j) & mask;
        rho.m[(i ^ swap, j ^ swap)]
    }))
}

/// `log₂ ‖ρ^{T_A}‖₁`.
pub fn logarithmic_negativity(rho: &DensityMatrix, subsystem: &[usize]) -> Result<f64> {
    let pt = partial_transpose(rho, subsystem)?;
    let ev = hermitian_eigenvalues(hermitize(pt.as_ref()).as_ref())?;
    Ok(snap_log2(ev.iter().map(|v| v.abs()).sum::<f64>()))
}

/// Pure-state log-negativity `2 log₂ Σ_k s_k` from the Schmidt coefficients.
pub fn pure_state_negativity(psi: &[c64], subsystem: &[usize]) -> Result<f64> {
    let n = spins_of(psi.len())?;
    check_subsystem(subsystem, n)?;
    let rest: Vec<usize> = (0..n).filter(|s| !subsystem.contains(s)).collect();
    let (na, nb) = (subsystem.len(), rest.len());
    let index = |a: usize, b: usize| -> usize {
        let mut i = 0;
        for (k, &s) in subsystem.iter().enumerate() {
            if a >> (na - 1 - k) & 1 == 1 {
                i |= site_mask(s, n);
            }
        }
        for (k, &s) in rest.iter().enumerate() {
            if b >> (nb - 1 - k) & 1 == 1 {
                i |= site_mask(s, n);
            }
        }
        i
    };
    let norm2: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
    let m = Mat::from_fn(1 << na, 1 << nb, |a, b| psi[index(a, b)] / norm2.sqrt());
    let s = m.singular_values().map_err(|e| Error::Eigen(format!("{e:?}")))?;
    Ok(2.0 * snap_log2(s.iter().sum::<f64>()))
}

/// `log₂ x` for a trace norm `x ≥ 1`; round-off excess over 1 maps to 0.
fn snap_log2(x: f64) -> f64 {
    let v = x.log2();
    if v < NEGATIVITY_FLOOR {
        0.0
    } else {
        v
    }
}

/// `count` random subsets of `n/2` sites, each sorted.
pub fn random_subsystems(n: usize, count: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut s = sample_indices(&mut rng, n, n / 2).into_vec();
            s.sort_unstable();
            s
        })
        .collect()
}

/// `|+⟩^{⊗n}`.
pub fn plus_state(n: usize) -> Vec<c64> {
    let d = 1usize << n;
    vec![c64::new((d as f64).sqrt().recip(), 0.0); d]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JumpEvent {
    pub site: usize,
    pub time: f64,
}

/// Per-realization time series. Series that a run does not produce are empty.
#[derive(Debug, Clone, Default, Serialize)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub distance: Vec<f64>,
    pub purity: Vec<f64>,
    pub negativity: Vec<f64>,
    pub jumps: Vec<JumpEvent>,
}

fn step_count(t_max: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::param("dt", "must be positive"));
    }
    if !(t_max >= 0.0 && t_max.is_finite()) {
        return Err(Error::param("t_max", "must be non-negative"));
    }
    Ok((t_max / dt).round() as usize)
}

/// Evolves two Ginibre states under the no-click map and records their trace
/// distance and the purity of the first every `record_every` steps.
pub fn distinguishability_trajectory(
    h: &NHHamiltonian,
    t_max: f64,
    dt: f64,
    seeds: (u64, u64),
    record_every: usize,
) -> Result<TrajectoryRecord> {
    let steps = step_count(t_max, dt)?;
    let every = record_every.max(1);
    let u = Propagator::new(h, dt)?;
    let d = h.dim();
    let mut a = FactoredState::new(ginibre_factor(d, seeds.0))?;
    let mut b = FactoredState::new(ginibre_factor(d, seeds.1))?;
    let mut rec = TrajectoryRecord::default();
    for step in 0..=steps {
        if step > 0 {
            a.apply(&u.u)?;
            b.apply(&u.u)?;
        }
        if step % every == 0 || step == steps {
            let (ra, rb) = (a.density()?, b.density()?);
            rec.times.push(step as f64 * dt);
            rec.distance.push(trace_distance(&ra, &rb)?);
            rec.purity.push(purity(&ra));
        }
    }
    Ok(rec)
}

/// Evolves `|+⟩^{⊗N}` and records `ℰ` averaged over the given bipartitions.
pub fn negativity_trajectory(
    h: &NHHamiltonian,
    t_max: f64,
    dt: f64,
    subsystems: &[Vec<usize>],
    record_every: usize,
) -> Result<TrajectoryRecord> {
    if subsystems.is_empty() {
        return Err(Error::param("subsystems", "need at least one bipartition"));
    }
    let steps = step_count(t_max, dt)?;
    let every = record_every.max(1);
    let u = Propagator::new(h, dt)?;
    let n = spins_of(h.dim())?;
    let mut state = FactoredState::pure(&plus_state(n))?;
    let mut rec = TrajectoryRecord::default();
    for step in 0..=steps {
        if step > 0 {
            state.apply(&u.u)?;
        }
        if step % every == 0 || step == steps {
            let psi: Vec<c64> = (0..h.dim()).map(|i| state.factor()[(i, 0)]).collect();
            let mut e = 0.0;
            for s in subsystems {
                e += pure_state_negativity(&psi, s)?;
            }
            rec.times.push(step as f64 * dt);
            rec.negativity.push(e / subsystems.len() as f64);
        }
    }
    Ok(rec)
}

/// Generator and jump operators of a stochastic unraveling. The no-jump
/// Kraus step is `K₀ = I − i dt H_eff`.
#[derive(Debug, Clone)]
pub struct JumpModel {
    pub h_eff: CMat,
    pub jumps: Vec<CMat>,
    pub gamma: f64,
    ldl: Vec<CMat>,
}

impl JumpModel {
    /// Standard unraveling of the master equation with Hermitian `h`:
    /// `H_eff = h − (iγ/2) Σ L†L`.
    pub fn lindblad(h: &CMat, jumps: Vec<CMat>, gamma: f64) -> Result<Self> {
        let d = h.nrows();
        let ldl: Vec<CMat> = jumps.iter().map(|l| matmul(adjoint(l.as_ref()).as_ref(), l.as_ref())).collect();
        let mut h_eff = h.clone();
        for m in &ldl {
            for j in 0..d {
                for i in 0..d {
                    h_eff[(i, j)] += m[(i, j)] * c64::new(0.0, -0.5 * gamma);
                }
            }
        }
        Ok(Self { h_eff, jumps, gamma, ldl })
    }

    /// Reservoir unraveling: no-jump steps use the reservoir generator itself
    /// and jumps are the local `σʸ_l`.
    pub fn reservoir(h: &NHHamiltonian) -> Result<Self> {
        let n = spins_of(h.dim())?;
        let jumps: Vec<CMat> = (0..n).map(|l| embed_pauli(Axis::Y, l, n)).collect::<Result<_>>()?;
        let ldl = jumps.iter().map(|l| matmul(adjoint(l.as_ref()).as_ref(), l.as_ref())).collect();
        Ok(Self { h_eff: h.to_complex(), jumps, gamma: h.params.gamma, ldl })
    }

    pub fn dim(&self) -> usize {
        self.h_eff.nrows()
    }

    /// `p_l = γ dt Tr[L†_l L_l ρ]`.
    pub fn jump_probabilities(&self, rho: &DensityMatrix, dt: f64) -> Vec<f64> {
        self.ldl
            .iter()
            .map(|m| {
                let d = m.nrows();
                let mut tr = ZERO;
                for i in 0..d {
                    for j in 0..d {
                        tr += m[(i, j)] * rho.m[(j, i)];
                    }
                }
                (self.gamma * dt * tr.re).max(0.0)
            })
            .collect()
    }

    /// `I − i dt H_eff`.
    pub fn no_jump_kraus(&self, dt: f64) -> CMat {
        let d = self.dim();
        Mat::from_fn(d, d, |i, j| if i == j { ONE } else { ZERO } - I * dt * self.h_eff[(i, j)])
    }
}

/// One quantum-jump trajectory from `rho0`; `final_state` holds the state at `t_max`.
#[derive(Debug, Clone)]
pub struct JumpTrajectory {
    pub record: TrajectoryRecord,
    pub final_state: DensityMatrix,
}

pub fn jump_trajectory(
    rho0: &DensityMatrix,
    model: &JumpModel,
    dt: f64,
    t_max: f64,
    seed: u64,
) -> Result<JumpTrajectory> {
    if rho0.dim() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), found: rho0.dim() });
    }
    let steps = step_count(t_max, dt)?;
    let k0 = model.no_jump_kraus(dt);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rho = rho0.clone();
    let mut rec = TrajectoryRecord { times: vec![0.0], purity: vec![purity(&rho)], ..Default::default() };
    for step in 1..=steps {
        let p = model.jump_probabilities(&rho, dt);
        let total: f64 = p.iter().sum();
        if total >= MAX_JUMP_PROBABILITY {
            return Err(Error::StepTooLarge { total, limit: MAX_JUMP_PROBABILITY });
        }
        let r: f64 = rng.random();
        let next = if r < total {
            let mut acc = 0.0;
            let site = p
                .iter()
                .position(|&pl| {
                    acc += pl;
                    r < acc
                })
                .unwrap_or(p.len() - 1);
            rec.jumps.push(JumpEvent { site, time: step as f64 * dt });
            conjugate(model.jumps[site].as_ref(), rho.m.as_ref())
        } else {
            conjugate(k0.as_ref(), rho.m.as_ref())
        };
        rho = renormalize(next)?;
        rec.times.push(step as f64 * dt);
        rec.purity.push(purity(&rho));
    }
    Ok(JumpTrajectory { record: rec, final_state: rho })
}

/// Hermitize and rescale without the positivity check; used on maps that
/// are positive by construction.
fn renormalize(m: CMat) -> Result<DensityMatrix> {
    let mut h = hermitize(m.as_ref());
    let tr = trace(h.as_ref()).re;
    if !(tr > TRACE_FLOOR) {
        return Err(Error::VanishingNorm { trace: tr });
    }
    rescale(&mut h, 1.0 / (tr));
    Ok(DensityMatrix { m: h })
}

/// Least-squares fit of `ln D = a − r t` over the decaying tail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailFit {
    /// Decay rate `r`; the relaxation time is `ζ = 1/r`.
    pub rate: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

impl TailFit {
    pub fn zeta(&self) -> f64 {
        1.0 / self.rate
    }
}

/// Fits the later half of the samples with `D > floor`.
pub fn fit_exponential_tail(times: &[f64], values: &[f64], floor: f64) -> Option<TailFit> {
    let usable: Vec<(f64, f64)> =
        times.iter().zip(values).filter(|(_, &v)| v > floor && v.is_finite()).map(|(&t, &v)| (t, v.ln())).collect();
    let tail = &usable[usable.len() / 2..];
    if tail.len() < 3 {
        return None;
    }
    let n = tail.len() as f64;
    let mt = tail.iter().map(|p| p.0).sum::<f64>() / n;
    let my = tail.iter().map(|p| p.1).sum::<f64>() / n;
    let stt: f64 = tail.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sty: f64 = tail.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let syy: f64 = tail.iter().map(|p| (p.1 - my).powi(2)).sum();
    if stt == 0.0 {
        return None;
    }
    let slope = sty / stt;
    let r_squared = if syy == 0.0 { 1.0 } else { sty * sty / (stt * syy) };
    Some(TailFit { rate: -slope, intercept: my - slope * mt, r_squared, points: tail.len() })
}

/// Pointwise mean and standard error over equally sampled series.
#[derive(Debug, Clone, Serialize)]
pub struct EnsembleSeries {
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub samples: usize,
}

impl EnsembleSeries {
    pub fn from_samples(times: &[f64], series: &[&[f64]]) -> Result<Self> {
        if series.is_empty() {
            return Err(Error::param("series", "empty ensemble"));
        }
        let m = series.len() as f64;
        let mut mean = vec![0.0; times.len()];
        let mut stderr = vec![0.0; times.len()];
        for (k, (mu, se)) in mean.iter_mut().zip(stderr.iter_mut()).enumerate() {
            let xs: Vec<f64> = series
                .iter()
                .map(|s| s.get(k).copied().ok_or(Error::DimensionMismatch { expected: times.len(), found: s.len() }))
                .collect::<Result<_>>()?;
            *mu = xs.iter().sum::<f64>() / m;
            if series.len() > 1 {
                let var = xs.iter().map(|x| (x - *mu).powi(2)).sum::<f64>() / (m - 1.0);
                *se = (var / m).sqrt();
            }
        }
        Ok(Self { times: times.to_vec(), mean, stderr, samples: series.len() })
    }
}
