//! Many-body Pauli operators and the reservoir / encoding Hamiltonians.
//!
//! Basis states are bit strings with site 0 as the leftmost tensor factor,
//! i.e. site `l` of an `n`-spin register lives in bit `n - 1 - l` of the
//! basis index. Bit value 0 is spin up (`σᶻ = +1`).

use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::RegularGraph;
use crate::linalg::{c64, to_complex, CMat, I, ONE, ZERO};

/// Largest register the dense representation is meant for (dim 4096).
pub const MAX_SPINS: usize = 12;

/// Largest allowed per-site encoding error.
pub const MAX_ENCODING_ERROR: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
    /// Raising operator `|0⟩⟨1|`.
    Plus,
    /// Lowering operator `|1⟩⟨0|`.
    Minus,
}

#[inline]
pub(crate) fn site_mask(site: usize, n: usize) -> usize {
    1 << (n - 1 - site)
}

/// `σᶻ` eigenvalue of `site` in basis state `b`.
#[inline]
pub fn z_value(b: usize, site: usize, n: usize) -> f64 {
    if b & site_mask(site, n) == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Single-site Pauli operator embedded in an `n`-spin register.
pub fn embed_pauli(axis: Axis, site: usize, n: usize) -> Result<CMat> {
    if site >= n {
        return Err(Error::param("site", format!("site {site} out of range for {n} spins")));
    }
    if n > MAX_SPINS {
        return Err(Error::param("n", format!("{n} spins exceeds the dense limit {MAX_SPINS}")));
    }
    let dim = 1usize << n;
    let mask = site_mask(site, n);
    let mut m: CMat = Mat::zeros(dim, dim);
    for b in 0..dim {
        let up = b & mask == 0;
        let flipped = b ^ mask;
        match axis {
            Axis::X => m[(flipped, b)] = ONE,
            Axis::Y => m[(flipped, b)] = if up { I } else { -I },
            Axis::Z => m[(b, b)] = if up { ONE } else { -ONE },
            Axis::Plus => {
                if !up {
                    m[(flipped, b)] = ONE;
                }
            }
            Axis::Minus => {
                if up {
                    m[(flipped, b)] = ONE;
                }
            }
        }
    }
    Ok(m)
}

fn default_jz() -> f64 {
    1.0
}
fn default_hx() -> f64 {
    1.0
}
fn default_delta_z() -> f64 {
    1.0
}
fn default_n() -> usize {
    8
}
fn default_k() -> usize {
    4
}

/// Physical parameters of the reservoir Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    #[serde(default = "default_jz")]
    pub jz: f64,
    #[serde(default)]
    pub jx: f64,
    #[serde(default = "default_hx")]
    pub hx: f64,
    #[serde(default)]
    pub hz: f64,
    #[serde(default)]
    pub delta_x: f64,
    #[serde(default = "default_delta_z")]
    pub delta_z: f64,
    #[serde(default)]
    pub gamma: f64,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_k")]
    pub k: usize,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self { jz: 1.0, jx: 0.0, hx: 1.0, hz: 0.0, delta_x: 0.0, delta_z: 1.0, gamma: 0.0, n: 8, k: 4 }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("jz", self.jz),
            ("jx", self.jx),
            ("hx", self.hx),
            ("hz", self.hz),
            ("delta_x", self.delta_x),
            ("delta_z", self.delta_z),
            ("gamma", self.gamma),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(Error::config(format!("model.{name}"), "must be finite"));
            }
        }
        if self.delta_x < 0.0 {
            return Err(Error::config("model.delta_x", "must be >= 0"));
        }
        if self.delta_z < 0.0 {
            return Err(Error::config("model.delta_z", "must be >= 0"));
        }
        if self.n == 0 || self.n > MAX_SPINS {
            return Err(Error::config("model.n", format!("must be in 1..={MAX_SPINS}")));
        }
        if self.n > 1 && (self.k == 0 || self.k >= self.n || !(self.n * self.k).is_multiple_of(2)) {
            return Err(Error::config("model.k", "need 0 < k < n and n*k even"));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        1 << self.n
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }
}

/// Per-site random field offsets `εˣ_l`, `εᶻ_l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisorderRealization {
    pub eps_x: Vec<f64>,
    pub eps_z: Vec<f64>,
}

impl DisorderRealization {
    pub fn clean(n: usize) -> Self {
        Self { eps_x: vec![0.0; n], eps_z: vec![0.0; n] }
    }
}

fn uniform_sym(rng: &mut ChaCha8Rng, half_width: f64) -> f64 {
    if half_width == 0.0 {
        0.0
    } else {
        rng.random_range(-half_width..=half_width)
    }
}

/// Draws i.i.d. uniform offsets on `[-Δ, Δ]`, all x offsets first.
pub fn sample_disorder(params: &ModelParams, seed: u64) -> DisorderRealization {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eps_x = (0..params.n).map(|_| uniform_sym(&mut rng, params.delta_x)).collect();
    let eps_z = (0..params.n).map(|_| uniform_sym(&mut rng, params.delta_z)).collect();
    DisorderRealization { eps_x, eps_z }
}

/// Reservoir generator. Every entry is real in the computational basis, so
/// the matrix is stored as `f64`.
#[derive(Debug, Clone)]
pub struct NHHamiltonian {
    pub params: ModelParams,
    matrix: Mat<f64>,
}

impl NHHamiltonian {
    pub fn real_matrix(&self) -> &Mat<f64> {
        &self.matrix
    }

    pub fn to_complex(&self) -> CMat {
        to_complex(self.matrix.as_ref())
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// Builds `Σ_edges Σ_α Jᵅ σᵅ_l σᵅ_m + Σ_l Σ_α hᵅ_l σᵅ_l − (iγ/2) Σ_l σʸ_l`
/// for `α ∈ {x, z}`, counting each undirected edge once.
pub fn build_reservoir_hamiltonian(
    params: &ModelParams,
    graph: &RegularGraph,
    disorder: &DisorderRealization,
) -> Result<NHHamiltonian> {
    let n = params.n;
    if graph.n_vertices() != n {
        return Err(Error::DimensionMismatch { expected: n, found: graph.n_vertices() });
    }
    if disorder.eps_x.len() != n || disorder.eps_z.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: disorder.eps_x.len().min(disorder.eps_z.len()) });
    }
    if n > MAX_SPINS {
        return Err(Error::param("n", format!("{n} spins exceeds the dense limit {MAX_SPINS}")));
    }
    let dim = 1usize << n;
    let edges = graph.edge_list();
    let hx: Vec<f64> = disorder.eps_x.iter().map(|e| params.hx + e).collect();
    let hz: Vec<f64> = disorder.eps_z.iter().map(|e| params.hz + e).collect();
    let half_gamma = 0.5 * params.gamma;

    let mut h = Mat::<f64>::zeros(dim, dim);
    for b in 0..dim {
        let mut diag = 0.0;
        for &(l, m) in &edges {
            diag += params.jz * z_value(b, l, n) * z_value(b, m, n);
        }
        for l in 0..n {
            diag += hz[l] * z_value(b, l, n);
        }
        h[(b, b)] = diag;

        for l in 0..n {
            let mask = site_mask(l, n);
            // -(iγ/2)σʸ: ⟨1|·|0⟩ = γ/2, ⟨0|·|1⟩ = -γ/2.
            let nh = if b & mask == 0 { half_gamma } else { -half_gamma };
            h[(b ^ mask, b)] += hx[l] + nh;
        }
        if params.jx != 0.0 {
            for &(l, m) in &edges {
                let flipped = b ^ site_mask(l, n) ^ site_mask(m, n);
                h[(flipped, b)] += params.jx;
            }
        }
    }
    Ok(NHHamiltonian { params: *params, matrix: h })
}

/// `Σ_l (θ + δ_l) σˣ_l`.
pub fn build_encoding_hamiltonian(theta: f64, delta: &[f64], n: usize) -> Result<CMat> {
    check_encoding(theta, delta, n)?;
    let dim = 1usize << n;
    let mut h: CMat = Mat::zeros(dim, dim);
    for b in 0..dim {
        for (l, d) in delta.iter().enumerate() {
            h[(b ^ site_mask(l, n), b)] += c64::new(theta + d, 0.0);
        }
    }
    Ok(h)
}

fn check_encoding(theta: f64, delta: &[f64], n: usize) -> Result<()> {
    if delta.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: delta.len() });
    }
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::param("theta", format!("input {theta} outside [0, 1]")));
    }
    if let Some(d) = delta.iter().find(|d| !(d.abs() <= MAX_ENCODING_ERROR)) {
        return Err(Error::param("delta", format!("|{d}| exceeds the encoding-error bound {MAX_ENCODING_ERROR}")));
    }
    Ok(())
}

/// `exp(-i t' H_enc)` kept in factorized form `⊗_l exp(-i a_l σˣ)`.
#[derive(Debug, Clone)]
pub struct LocalXRotations {
    n: usize,
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl LocalXRotations {
    pub fn encoding(theta: f64, delta: &[f64], t_prime: f64) -> Result<Self> {
        check_encoding(theta, delta, delta.len())?;
        let angles: Vec<f64> = delta.iter().map(|d| t_prime * (theta + d)).collect();
        Ok(Self {
            n: delta.len(),
            cos: angles.iter().map(|a| a.cos()).collect(),
            sin: angles.iter().map(|a| a.sin()).collect(),
        })
    }

    /// Replaces `g` by `U g`.
    pub fn apply_left(&self, g: &mut CMat) {
        let n = self.n;
        let dim = 1usize << n;
        debug_assert_eq!(g.nrows(), dim);
        for j in 0..g.ncols() {
            let col = g.col_mut(j).try_as_col_major_mut().expect("contiguous column").as_slice_mut();
            for l in 0..n {
                let mask = site_mask(l, n);
                let (c, s) = (self.cos[l], self.sin[l]);
                for block in col.chunks_exact_mut(2 * mask) {
                    let (ups, downs) = block.split_at_mut(mask);
                    for (up, down) in ups.iter_mut().zip(downs.iter_mut()) {
                        let (u, d) = (*up, *down);
                        // c·u − i s·d, −i s·u + c·d
                        *up = c64::new(c * u.re + s * d.im, c * u.im - s * d.re);
                        *down = c64::new(c * d.re + s * u.im, c * d.im - s * u.re);
                    }
                }
            }
        }
    }

    pub fn to_matrix(&self) -> CMat {
        let dim = 1usize << self.n;
        let mut m = Mat::from_fn(dim, dim, |i, j| if i == j { ONE } else { ZERO });
        self.apply_left(&mut m);
        m
    }
}
