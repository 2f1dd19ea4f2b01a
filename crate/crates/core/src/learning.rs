//! Reservoir computing pipeline: input cycles, z-basis features, ridge
//! readout and the memory / NARMA benchmarks.

use faer::linalg::solvers::{Llt, Solve};
use faer::{Mat, MatRef, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{ginibre_factor, trace_distance, FactoredState};
use crate::graph::{sample_regular_graph, RegularGraph};
use crate::linalg::{c64, expm, hermitian_eigen, CMat};
use crate::seeds::RealizationSeeds;
use crate::spin::{
    build_reservoir_hamiltonian, sample_disorder, z_value, DisorderRealization, LocalXRotations, ModelParams,
    NHHamiltonian, MAX_ENCODING_ERROR,
};
use crate::{Error, Result};

/// Largest allowed `θ_max · t'`.
pub const MAX_ENCODING_ANGLE: f64 = 0.2;
/// NARMA series magnitude treated as divergence.
pub const NARMA_BOUND: f64 = 10.0;
/// Factor directions carrying less than this fraction of the leading weight
/// are discarded during evolution.
pub const RANK_CUTOFF: f64 = 1e-14;

const FIRST_COMPRESSION: usize = 16;
const MAX_COMPRESSION_INTERVAL: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageLengths {
    pub washout: usize,
    pub train: usize,
    pub test: usize,
}

impl Default for StageLengths {
    fn default() -> Self {
        Self { washout: 2000, train: 1300, test: 1300 }
    }
}

impl StageLengths {
    pub fn total(&self) -> usize {
        self.washout + self.train + self.test
    }

    pub fn train_rows(&self) -> std::ops::Range<usize> {
        self.washout..self.washout + self.train
    }

    pub fn test_rows(&self) -> std::ops::Range<usize> {
        self.washout + self.train..self.total()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReservoirConfig {
    pub model: ModelParams,
    /// Reservoir evolution time per cycle, in units of `1/Jᶻ`.
    pub t_res: f64,
    pub t_prime: f64,
    pub delta_enc: f64,
    pub stages: StageLengths,
    pub input_range: (f64, f64),
    pub lambda: f64,
}

impl Default for ReservoirConfig {
    fn default() -> Self {
        Self {
            model: ModelParams::default(),
            t_res: 0.4,
            t_prime: 0.1,
            delta_enc: 0.01,
            stages: StageLengths::default(),
            input_range: (0.0, 1.0),
            lambda: 1e-3,
        }
    }
}

impl ReservoirConfig {
    /// Inputs on `[0, 0.2]`.
    pub fn narma(model: ModelParams, t_res: f64) -> Self {
        Self { model, t_res, input_range: (0.0, 0.2), ..Self::default() }
    }

    pub fn memory(model: ModelParams, t_res: f64) -> Self {
        Self { model, t_res, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if !(self.t_res.is_finite() && self.t_res > 0.0) {
            return Err(Error::config("t_res", "must be finite and > 0"));
        }
        if !(self.t_prime.is_finite() && self.t_prime >= 0.0) {
            return Err(Error::config("t_prime", "must be finite and >= 0"));
        }
        if !(0.0..=MAX_ENCODING_ERROR).contains(&self.delta_enc) {
            return Err(Error::config("delta_enc", format!("must lie in [0, {MAX_ENCODING_ERROR}]")));
        }
        let (lo, hi) = self.input_range;
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return Err(Error::config("input_range", "need 0 <= lo <= hi <= 1"));
        }
        if hi * self.t_prime > MAX_ENCODING_ANGLE {
            return Err(Error::config(
                "t_prime",
                format!("theta_max * t_prime = {} exceeds {MAX_ENCODING_ANGLE}", hi * self.t_prime),
            ));
        }
        let s = self.stages;
        if s.washout == 0 || s.train == 0 || s.test == 0 {
            return Err(Error::config("stages", "washout, train and test must all be >= 1"));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::config("lambda", "must be finite and >= 0"));
        }
        Ok(())
    }

    pub fn n_features(&self) -> usize {
        n_features(self.model.n)
    }
}

pub fn n_features(n: usize) -> usize {
    n + n * (n - 1) / 2
}

/// Names in column order: `z0..z{n-1}` then `zz{l}_{m}` for `l < m`.
pub fn feature_names(n: usize) -> Vec<String> {
    let mut names: Vec<String> = (0..n).map(|l| format!("z{l}")).collect();
    for l in 0..n {
        for m in l + 1..n {
            names.push(format!("zz{l}_{m}"));
        }
    }
    names
}

#[derive(Debug, Clone)]
pub struct FeatureMatrix {
    pub n_spins: usize,
    pub data: Mat<f64>,
}

impl FeatureMatrix {
    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn cols(&self) -> usize {
        self.data.ncols()
    }

    pub fn names(&self) -> Vec<String> {
        feature_names(self.n_spins)
    }

    pub fn row_range(&self, rows: std::ops::Range<usize>) -> MatRef<'_, f64> {
        self.data.as_ref().subrows(rows.start, rows.len())
    }
}

/// `z[b][l]` for every basis state.
struct ZTable {
    n: usize,
    z: Vec<f64>,
}

impl ZTable {
    fn new(n: usize) -> Self {
        let dim = 1usize << n;
        let z = (0..dim).flat_map(|b| (0..n).map(move |l| z_value(b, l, n))).collect();
        Self { n, z }
    }

    fn features(&self, p: &[f64], out: &mut [f64]) {
        let n = self.n;
        out.iter_mut().for_each(|v| *v = 0.0);
        for (b, &pb) in p.iter().enumerate() {
            let zb = &self.z[b * n..(b + 1) * n];
            for l in 0..n {
                out[l] += pb * zb[l];
            }
            let mut c = n;
            for l in 0..n {
                let w = pb * zb[l];
                for m in l + 1..n {
                    out[c] += w * zb[m];
                    c += 1;
                }
            }
        }
    }
}

/// Drops factor directions whose weight in `GG†` is below [`RANK_CUTOFF`]
/// relative to the largest one. Returns `None` when nothing is dropped.
fn compress_factor(g: &CMat) -> Result<Option<CMat>> {
    let k = g.ncols();
    if k <= 1 {
        return Ok(None);
    }
    let gram: CMat = g.adjoint() * g;
    let (vals, vecs) = hermitian_eigen(gram.as_ref())?;
    let top = vals.iter().cloned().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..k).filter(|&i| vals[i] > RANK_CUTOFF * top).collect();
    if keep.len() == k || keep.is_empty() {
        return Ok(None);
    }
    let v = Mat::from_fn(k, keep.len(), |i, j| vecs[(i, keep[j])]);
    Ok(Some(g * &v))
}

/// Graph, disorder and the precomputed cycle propagator of one realization.
#[derive(Debug, Clone)]
pub struct Reservoir {
    pub graph: RegularGraph,
    pub disorder: DisorderRealization,
    pub hamiltonian: NHHamiltonian,
    u_res: CMat,
}

impl Reservoir {
    pub fn build(cfg: &ReservoirConfig, graph_seed: u64, disorder_seed: u64) -> Result<Self> {
        cfg.validate()?;
        let p = &cfg.model;
        let graph =
            if p.n == 1 { RegularGraph::from_edges(1, &[])? } else { sample_regular_graph(p.n, p.k, graph_seed)? };
        let disorder = sample_disorder(p, disorder_seed);
        let hamiltonian = build_reservoir_hamiltonian(p, &graph, &disorder)?;
        let u_res = expm(hamiltonian.to_complex().as_ref(), c64::new(0.0, -cfg.t_res))?;
        Ok(Self { graph, disorder, hamiltonian, u_res })
    }

    pub fn propagator(&self) -> &CMat {
        &self.u_res
    }

    /// Runs the input sequence from `state`, reading features after each
    /// cycle. Encoding errors are drawn from `encoding_seed`, per site and
    /// step.
    pub fn run(
        &self,
        cfg: &ReservoirConfig,
        inputs: &[f64],
        mut state: FactoredState,
        encoding_seed: u64,
    ) -> Result<(FeatureMatrix, FactoredState)> {
        let n = cfg.model.n;
        if state.factor().nrows() != 1 << n {
            return Err(Error::DimensionMismatch { expected: 1 << n, found: state.factor().nrows() });
        }
        let (lo, hi) = cfg.input_range;
        if let Some(bad) = inputs.iter().find(|&&x| !(lo..=hi).contains(&x)) {
            return Err(Error::param("inputs", format!("{bad} outside [{lo}, {hi}]")));
        }
        let table = ZTable::new(n);
        let nf = n_features(n);
        let mut data = Mat::zeros(inputs.len(), nf);
        let mut row = vec![0.0; nf];
        let mut rng = ChaCha8Rng::seed_from_u64(encoding_seed);
        let mut delta = vec![0.0; n];
        let (mut next_check, mut interval) = (FIRST_COMPRESSION, FIRST_COMPRESSION);
        for (step, &theta) in inputs.iter().enumerate() {
            if cfg.delta_enc > 0.0 {
                delta.iter_mut().for_each(|d| *d = rng.random_range(-cfg.delta_enc..=cfg.delta_enc));
            }
            LocalXRotations::encoding(theta, &delta, cfg.t_prime)?.apply_left(state.factor_mut());
            state.apply(&self.u_res)?;
            table.features(&state.populations(), &mut row);
            for (j, &v) in row.iter().enumerate() {
                data[(step, j)] = v;
            }
            if step + 1 == next_check {
                match compress_factor(state.factor())? {
                    Some(g) => state = FactoredState::new(g)?,
                    None => interval = (2 * interval).min(MAX_COMPRESSION_INTERVAL),
                }
                next_check += interval;
            }
        }
        Ok((FeatureMatrix { n_spins: n, data }, state))
    }
}

pub fn sample_inputs(len: usize, range: (f64, f64), seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.random_range(range.0..=range.1)).collect()
}

/// Features for `inputs` on the realization derived from `seed`, starting
/// from a Ginibre mixed state.
pub fn run_reservoir(cfg: &ReservoirConfig, inputs: &[f64], seed: u64) -> Result<FeatureMatrix> {
    let s = RealizationSeeds::from_seed(seed);
    let res = Reservoir::build(cfg, s.graph, s.disorder)?;
    let state = FactoredState::new(ginibre_factor(cfg.model.dim(), s.state))?;
    Ok(res.run(cfg, inputs, state, s.encoding)?.0)
}

/// Trace distance between the final states of two runs that share the
/// realization, the inputs and the encoding errors but start from different
/// Ginibre states.
pub fn echo_state_distance(cfg: &ReservoirConfig, inputs: &[f64], seed: u64, other_state_seed: u64) -> Result<f64> {
    let s = RealizationSeeds::from_seed(seed);
    let res = Reservoir::build(cfg, s.graph, s.disorder)?;
    let dim = cfg.model.dim();
    let (_, a) = res.run(cfg, inputs, FactoredState::new(ginibre_factor(dim, s.state))?, s.encoding)?;
    let (_, b) = res.run(cfg, inputs, FactoredState::new(ginibre_factor(dim, other_state_seed))?, s.encoding)?;
    trace_distance(&a.density()?, &b.density()?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub stdev: Vec<f64>,
    /// Retained column indices into the raw feature matrix.
    pub kept: Vec<usize>,
    pub dropped: Vec<usize>,
}

impl Standardization {
    pub fn identity(cols: usize) -> Self {
        Self { mean: vec![0.0; cols], stdev: vec![1.0; cols], kept: (0..cols).collect(), dropped: vec![] }
    }

    pub fn apply(&self, x: MatRef<'_, f64>) -> Mat<f64> {
        Mat::from_fn(x.nrows(), self.kept.len(), |i, j| {
            let c = self.kept[j];
            (x[(i, c)] - self.mean[j]) / self.stdev[j]
        })
    }
}

fn mean_and_std(col: impl Iterator<Item = f64> + Clone, len: usize) -> (f64, f64) {
    let mean = col.clone().sum::<f64>() / len as f64;
    let var = col.map(|v| (v - mean) * (v - mean)).sum::<f64>() / len as f64;
    (mean, var.sqrt())
}

/// Train-set statistics, applied to both sets. Constant train columns are
/// dropped from both.
pub fn standardize(train: MatRef<'_, f64>, test: MatRef<'_, f64>) -> Result<(Mat<f64>, Mat<f64>, Standardization)> {
    if train.nrows() == 0 {
        return Err(Error::param("train", "empty training set"));
    }
    if train.ncols() != test.ncols() {
        return Err(Error::DimensionMismatch { expected: train.ncols(), found: test.ncols() });
    }
    let rows = train.nrows();
    let mut stats = Standardization { mean: vec![], stdev: vec![], kept: vec![], dropped: vec![] };
    for c in 0..train.ncols() {
        let (mean, sd) = mean_and_std((0..rows).map(|i| train[(i, c)]), rows);
        if sd <= 1e-12 * mean.abs().max(1.0) {
            stats.dropped.push(c);
        } else {
            stats.mean.push(mean);
            stats.stdev.push(sd);
            stats.kept.push(c);
        }
    }
    if stats.kept.is_empty() {
        return Err(Error::AllColumnsConstant);
    }
    Ok((stats.apply(train), stats.apply(test), stats))
}

/// Linear readout on standardized features, with the target mean as
/// intercept.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RidgeModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
    pub standardization: Standardization,
}

impl RidgeModel {
    pub fn predict(&self, raw: MatRef<'_, f64>) -> Vec<f64> {
        let x = self.standardization.apply(raw);
        predict_standardized(x.as_ref(), &self.weights, self.intercept)
    }
}

fn predict_standardized(x: MatRef<'_, f64>, w: &[f64], intercept: f64) -> Vec<f64> {
    (0..x.nrows()).map(|i| intercept + (0..x.ncols()).map(|j| x[(i, j)] * w[j]).sum::<f64>()).collect()
}

/// Solves `(XᵀX + λI) w = Xᵀ(y − ȳ)` by Cholesky. `X` is taken as already
/// standardized.
pub fn ridge_fit(x: MatRef<'_, f64>, y: &[f64], lambda: f64) -> Result<RidgeModel> {
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch { expected: x.nrows(), found: y.len() });
    }
    if y.is_empty() {
        return Err(Error::param("y", "no samples"));
    }
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::param("lambda", "must be finite and >= 0"));
    }
    let p = x.ncols();
    let intercept = y.iter().sum::<f64>() / y.len() as f64;
    let yc = Mat::from_fn(y.len(), 1, |i, _| y[i] - intercept);
    let mut a: Mat<f64> = x.transpose() * x;
    for i in 0..p {
        a[(i, i)] += lambda;
    }
    let mut rhs: Mat<f64> = x.transpose() * &yc;
    let singular = || Error::Singular("normal equations are singular; use lambda > 0".into());
    let llt = Llt::new(a.as_ref(), Side::Lower).map_err(|_| singular())?;
    if lambda == 0.0 {
        let diag: Vec<f64> = (0..p).map(|i| llt.L()[(i, i)].powi(2)).collect();
        let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &d| (l.min(d), h.max(d)));
        if !(lo > 1e-13 * hi) {
            return Err(singular());
        }
    }
    llt.solve_in_place(rhs.as_mut());
    let weights: Vec<f64> = (0..p).map(|i| rhs[(i, 0)]).collect();
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::NonFinite { what: "ridge weights" });
    }
    Ok(RidgeModel { weights, intercept, lambda, standardization: Standardization::identity(p) })
}

/// Standardizes on the train rows and fits the readout there. Test rows
/// are never read.
pub fn fit_readout(
    features: MatRef<'_, f64>,
    targets: &[f64],
    train: std::ops::Range<usize>,
    lambda: f64,
) -> Result<RidgeModel> {
    let xt = features.subrows(train.start, train.len());
    let (xs, _, stats) = standardize(xt, xt.subrows(0, 0))?;
    let mut model = ridge_fit(xs.as_ref(), &targets[train], lambda)?;
    model.standardization = stats;
    Ok(model)
}

/// Squared Pearson correlation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Capacity {
    pub value: f64,
    pub degenerate: bool,
}

fn centered_moments(y: &[f64], yh: &[f64]) -> (f64, f64, f64) {
    let n = y.len() as f64;
    let my = y.iter().sum::<f64>() / n;
    let mh = yh.iter().sum::<f64>() / n;
    let (mut cov, mut vy, mut vh) = (0.0, 0.0, 0.0);
    for (a, b) in y.iter().zip(yh) {
        let (da, db) = (a - my, b - mh);
        cov += da * db;
        vy += da * da;
        vh += db * db;
    }
    (cov / n, vy / n, vh / n)
}

fn is_constant(y: &[f64], var: f64) -> bool {
    let scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    var <= (1e-14 * scale).powi(2)
}

pub fn pearson_capacity(y: &[f64], y_hat: &[f64]) -> Result<Capacity> {
    if y.len() != y_hat.len() {
        return Err(Error::DimensionMismatch { expected: y.len(), found: y_hat.len() });
    }
    if y.len() < 2 {
        return Err(Error::param("y", "need at least two samples"));
    }
    let (cov, vy, vh) = centered_moments(y, y_hat);
    if is_constant(y, vy) || is_constant(y_hat, vh) {
        return Ok(Capacity { value: 0.0, degenerate: true });
    }
    let value = (cov * cov / (vy * vh)).clamp(0.0, 1.0);
    Ok(Capacity { value, degenerate: false })
}

/// `sqrt(Σ(y − ŷ)² / (len · var y))` with the population variance.
pub fn nrmse(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    if y.len() != y_hat.len() {
        return Err(Error::DimensionMismatch { expected: y.len(), found: y_hat.len() });
    }
    if y.is_empty() {
        return Err(Error::param("y", "no samples"));
    }
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if var == 0.0 {
        return Err(Error::param("y", "target has zero variance"));
    }
    let sse: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b).powi(2)).sum();
    Ok((sse / (n * var)).sqrt())
}

/// `y_n = 0.3y_{n−1} + 0.05y_{n−1}Σ_{τ=1..τmax} y_{n−τ} + 1.5θ_{n−τmax}θ_{n−1} + 0.1`
/// with zero history.
pub fn narma_target(inputs: &[f64], tau_max: usize) -> Result<Vec<f64>> {
    if tau_max == 0 {
        return Err(Error::param("tau_max", "must be >= 1"));
    }
    let mut y = vec![0.0; inputs.len()];
    let at = |v: &[f64], i: isize| if i < 0 { 0.0 } else { v[i as usize] };
    for n in 0..inputs.len() {
        let i = n as isize;
        let prev = at(&y, i - 1);
        let window: f64 = (1..=tau_max as isize).map(|t| at(&y, i - t)).sum();
        let v = 0.3 * prev + 0.05 * prev * window + 1.5 * at(inputs, i - tau_max as isize) * at(inputs, i - 1) + 0.1;
        if !v.is_finite() || v.abs() > NARMA_BOUND {
            return Err(Error::Divergence { step: n, value: v });
        }
        y[n] = v;
    }
    Ok(y)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    LinearMemory,
    Narma,
}

/// Inputs and features of one realization, reusable across tasks.
#[derive(Debug, Clone)]
pub struct RealizationRun {
    pub seed: u64,
    pub inputs: Vec<f64>,
    pub features: FeatureMatrix,
}

pub fn simulate_realization(cfg: &ReservoirConfig, seed: u64) -> Result<RealizationRun> {
    cfg.validate()?;
    let s = RealizationSeeds::from_seed(seed);
    let inputs = sample_inputs(cfg.stages.total(), cfg.input_range, s.inputs);
    let features = run_reservoir(cfg, &inputs, seed)?;
    Ok(RealizationRun { seed, inputs, features })
}

#[derive(Debug, Clone, Serialize)]
pub struct RealizationOutcome {
    pub seed: u64,
    /// One entry per target (per delay for the memory task).
    pub capacities: Vec<f64>,
    pub degenerate: Vec<bool>,
    pub nrmse: Vec<f64>,
    pub dropped_features: Vec<usize>,
    #[serde(skip)]
    pub predictions: Vec<Vec<f64>>,
}

impl RealizationOutcome {
    pub fn total(&self) -> f64 {
        self.capacities.iter().sum()
    }

    pub fn mean_nrmse(&self) -> f64 {
        self.nrmse.iter().sum::<f64>() / self.nrmse.len() as f64
    }
}

fn evaluate_targets(
    cfg: &ReservoirConfig,
    run: &RealizationRun,
    targets: &[Vec<f64>],
    lambda: f64,
) -> Result<RealizationOutcome> {
    let stages = cfg.stages;
    let x = run.features.data.as_ref();
    let test = stages.test_rows();
    let mut out = RealizationOutcome {
        seed: run.seed,
        capacities: vec![],
        degenerate: vec![],
        nrmse: vec![],
        dropped_features: vec![],
        predictions: vec![],
    };
    for y in targets {
        let model = fit_readout(x, y, stages.train_rows(), lambda)?;
        let pred = model.predict(x.subrows(test.start, test.len()));
        let c = pearson_capacity(&y[test.clone()], &pred)?;
        out.capacities.push(c.value);
        out.degenerate.push(c.degenerate);
        out.nrmse.push(nrmse(&y[test.clone()], &pred)?);
        out.dropped_features = model.standardization.dropped.clone();
        out.predictions.push(pred);
    }
    Ok(out)
}

fn check_history(cfg: &ReservoirConfig, tau_max: usize) -> Result<()> {
    if tau_max == 0 {
        return Err(Error::param("tau_max", "must be >= 1"));
    }
    if cfg.stages.washout < tau_max {
        return Err(Error::param("tau_max", "washout must cover the delay history"));
    }
    Ok(())
}

/// Targets `θ_{n−τ}` for `τ = 1..=τmax` (zero before the series starts).
pub fn memory_targets(inputs: &[f64], tau_max: usize) -> Vec<Vec<f64>> {
    (1..=tau_max).map(|tau| (0..inputs.len()).map(|n| if n >= tau { inputs[n - tau] } else { 0.0 }).collect()).collect()
}

pub fn evaluate_memory(
    cfg: &ReservoirConfig,
    run: &RealizationRun,
    tau_max: usize,
    lambda: f64,
) -> Result<RealizationOutcome> {
    check_history(cfg, tau_max)?;
    evaluate_targets(cfg, run, &memory_targets(&run.inputs, tau_max), lambda)
}

pub fn evaluate_narma(
    cfg: &ReservoirConfig,
    run: &RealizationRun,
    tau_max: usize,
    lambda: f64,
) -> Result<RealizationOutcome> {
    check_history(cfg, tau_max)?;
    evaluate_targets(cfg, run, &[narma_target(&run.inputs, tau_max)?], lambda)
}

/// Sample mean and standard error (zero for a single sample).
pub fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Realization-averaged metrics.
#[derive(Debug, Clone, Serialize)]
pub struct TaskResult {
    pub kind: TaskKind,
    pub tau_max: usize,
    pub lambda: f64,
    pub capacities: Vec<f64>,
    pub capacity_stderr: Vec<f64>,
    pub total: f64,
    pub total_stderr: f64,
    pub normalized: f64,
    pub normalized_stderr: f64,
    pub nrmse: f64,
    pub nrmse_stderr: f64,
    pub realizations: Vec<RealizationOutcome>,
}

impl TaskResult {
    pub fn aggregate(
        kind: TaskKind,
        tau_max: usize,
        lambda: f64,
        realizations: Vec<RealizationOutcome>,
    ) -> Result<Self> {
        if realizations.is_empty() {
            return Err(Error::param("seeds", "need at least one realization"));
        }
        let targets = realizations[0].capacities.len();
        let (capacities, capacity_stderr) = (0..targets)
            .map(|t| mean_stderr(&realizations.iter().map(|r| r.capacities[t]).collect::<Vec<_>>()))
            .unzip();
        let (total, total_stderr) = mean_stderr(&realizations.iter().map(|r| r.total()).collect::<Vec<_>>());
        let (nrmse, nrmse_stderr) = mean_stderr(&realizations.iter().map(|r| r.mean_nrmse()).collect::<Vec<_>>());
        let norm = targets as f64;
        Ok(Self {
            kind,
            tau_max,
            lambda,
            capacities,
            capacity_stderr,
            total,
            total_stderr,
            normalized: total / norm,
            normalized_stderr: total_stderr / norm,
            nrmse,
            nrmse_stderr,
            realizations,
        })
    }
}

/// Realizations run in parallel; results come back in seed order.
fn over_realizations<F>(cfg: &ReservoirConfig, seeds: &[u64], eval: F) -> Result<Vec<RealizationOutcome>>
where
    F: Fn(&RealizationRun) -> Result<RealizationOutcome> + Sync,
{
    seeds.par_iter().map(|&s| eval(&simulate_realization(cfg, s)?)).collect()
}

pub fn linear_memory_task(cfg: &ReservoirConfig, tau_max: usize, lambda: f64, seeds: &[u64]) -> Result<TaskResult> {
    check_history(cfg, tau_max)?;
    let outs = over_realizations(cfg, seeds, |run| evaluate_memory(cfg, run, tau_max, lambda))?;
    TaskResult::aggregate(TaskKind::LinearMemory, tau_max, lambda, outs)
}

pub fn narma_task(cfg: &ReservoirConfig, tau_max: usize, lambda: f64, seeds: &[u64]) -> Result<TaskResult> {
    check_history(cfg, tau_max)?;
    let outs = over_realizations(cfg, seeds, |run| evaluate_narma(cfg, run, tau_max, lambda))?;
    TaskResult::aggregate(TaskKind::Narma, tau_max, lambda, outs)
}
