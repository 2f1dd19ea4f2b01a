//! Configured experiment runs: TOML config, seeded realizations, CSV
//! output and a JSON manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{
    distinguishability_trajectory, fit_exponential_tail, negativity_trajectory, random_mixed_state, random_subsystems,
    trace_distance, EnsembleSeries, TrajectoryRecord,
};
use crate::emulation::{
    build_ensemble_from_decay, decay_operators, default_shift, emulate_step, emulation_error_scan_from_decay,
    reservoir_instance,
};
use crate::graph::{sample_regular_graph, RegularGraph};
use crate::learning::{
    evaluate_memory, evaluate_narma, feature_names, mean_stderr, simulate_realization, ReservoirConfig, StageLengths,
    TaskKind, TaskResult,
};
use crate::linalg::{scale, CMat};
use crate::seeds::{derive_seed, RealizationSeeds};
use crate::spectral::{complex_count, find_gamma_critical, TransitionStatus};
use crate::spin::{
    build_reservoir_hamiltonian, embed_pauli, sample_disorder, Axis, DisorderRealization, ModelParams, NHHamiltonian,
};
use crate::{Error, Result};

/// Worker-count environment variable.
pub const THREADS_ENV: &str = "NHQRC_THREADS";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_ECHO_FILE: &str = "config.toml";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    SpectrumScan,
    GammaCritical,
    Distance,
    Negativity,
    QrcLinear,
    QrcNarma,
    EmulateCheck,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 7] = [
        Self::SpectrumScan,
        Self::GammaCritical,
        Self::Distance,
        Self::Negativity,
        Self::QrcLinear,
        Self::QrcNarma,
        Self::EmulateCheck,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Self::SpectrumScan => "spectrum-scan",
            Self::GammaCritical => "gamma-critical",
            Self::Distance => "distance",
            Self::Negativity => "negativity",
            Self::QrcLinear => "qrc-linear",
            Self::QrcNarma => "qrc-narma",
            Self::EmulateCheck => "emulate-check",
        }
    }

    fn default_gammas(self, model: &ModelParams, emulation_gamma: f64) -> Vec<f64> {
        match self {
            Self::SpectrumScan => (0..=16).map(|i| 0.25 * i as f64).collect(),
            Self::GammaCritical => vec![model.gamma],
            Self::Distance => vec![1.0, 2.5, 3.0, 4.0],
            Self::Negativity => vec![0.5, 1.0, 2.0],
            Self::QrcLinear => vec![1.6, 2.0, 2.4],
            Self::QrcNarma => vec![0.0, 0.3, 1.0, 3.0],
            Self::EmulateCheck => vec![emulation_gamma],
        }
    }

    fn default_delta_x(self, model: &ModelParams) -> Vec<f64> {
        match self {
            Self::GammaCritical => vec![0.0, 0.25, 0.5, 0.75, 1.0],
            _ => vec![model.delta_x],
        }
    }
}

impl std::fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.label() == s)
            .ok_or_else(|| Error::config("kind", format!("unknown experiment kind `{s}`")))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub gamma: Option<Vec<f64>>,
    pub delta_x: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReservoirSection {
    pub t_res: f64,
    pub t_prime: f64,
    pub delta_enc: f64,
    pub washout: usize,
    pub train: usize,
    pub test: usize,
    pub lambda: f64,
    pub tau_max: Option<usize>,
}

impl Default for ReservoirSection {
    fn default() -> Self {
        let d = ReservoirConfig::default();
        Self {
            t_res: d.t_res,
            t_prime: d.t_prime,
            delta_enc: d.delta_enc,
            washout: d.stages.washout,
            train: d.stages.train,
            test: d.stages.test,
            lambda: d.lambda,
            tau_max: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DynamicsSection {
    pub t_max: f64,
    pub dt: f64,
    pub record_every: usize,
    /// Random bipartitions averaged per realization for the negativity.
    pub bipartitions: usize,
    /// Fraction of the recorded window, from the end, averaged as the
    /// steady-state value.
    pub steady_fraction: f64,
}

impl Default for DynamicsSection {
    fn default() -> Self {
        Self { t_max: 20.0, dt: 0.05, record_every: 1, bipartitions: 10, steady_fraction: 0.25 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumSection {
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub tol: f64,
}

impl Default for SpectrumSection {
    fn default() -> Self {
        Self { gamma_min: 0.0, gamma_max: 4.0, tol: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmulationSection {
    pub dt: Vec<f64>,
    pub gamma: f64,
    pub reservoir_spins: usize,
    pub reservoir_degree: usize,
    /// Added to the default shift for the second shift choice.
    pub extra_shift: f64,
}

impl Default for EmulationSection {
    fn default() -> Self {
        Self {
            dt: vec![1e-2, 5e-3, 2e-3, 1e-3, 5e-4, 2e-4, 1e-4],
            gamma: 0.5,
            reservoir_spins: 3,
            reservoir_degree: 2,
            extra_shift: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_ensemble")]
    pub ensemble: i64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub model: ModelParams,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub reservoir: ReservoirSection,
    #[serde(default)]
    pub dynamics: DynamicsSection,
    #[serde(default)]
    pub spectrum: SpectrumSection,
    #[serde(default)]
    pub emulation: EmulationSection,
}

fn default_seed() -> u64 {
    1
}

fn default_ensemble() -> i64 {
    100
}

impl ExperimentConfig {
    /// Defaults for `kind`, already validated.
    pub fn for_kind(kind: ExperimentKind) -> Self {
        let mut cfg = Self {
            kind,
            seed: default_seed(),
            ensemble: default_ensemble(),
            out: None,
            model: ModelParams::default(),
            sweep: SweepSection::default(),
            reservoir: ReservoirSection::default(),
            dynamics: DynamicsSection::default(),
            spectrum: SpectrumSection::default(),
            emulation: EmulationSection::default(),
        };
        cfg.resolve().expect("defaults are valid");
        cfg
    }

    pub fn gammas(&self) -> &[f64] {
        self.sweep.gamma.as_deref().unwrap_or(&[])
    }

    pub fn delta_xs(&self) -> &[f64] {
        self.sweep.delta_x.as_deref().unwrap_or(&[])
    }

    pub fn ensemble_size(&self) -> usize {
        self.ensemble.max(0) as usize
    }

    pub fn tau_max(&self) -> usize {
        self.reservoir.tau_max.unwrap_or(match self.kind {
            ExperimentKind::QrcNarma => 3,
            _ => 10,
        })
    }

    pub fn reservoir_config(&self, model: ModelParams) -> ReservoirConfig {
        let r = &self.reservoir;
        ReservoirConfig {
            model,
            t_res: r.t_res,
            t_prime: r.t_prime,
            delta_enc: r.delta_enc,
            stages: StageLengths { washout: r.washout, train: r.train, test: r.test },
            input_range: if self.kind == ExperimentKind::QrcNarma { (0.0, 0.2) } else { (0.0, 1.0) },
            lambda: r.lambda,
        }
    }

    /// Seed of realization `index`.
    pub fn realization_seed(&self, index: usize) -> u64 {
        derive_seed(self.seed, index as u64, self.kind.label())
    }

    pub fn realization_seeds(&self) -> Vec<u64> {
        (0..self.ensemble_size()).map(|i| self.realization_seed(i)).collect()
    }

    /// Fills kind-dependent defaults and checks every field.
    pub fn resolve(&mut self) -> Result<()> {
        let kind = self.kind;
        if self.sweep.gamma.is_none() {
            self.sweep.gamma = Some(kind.default_gammas(&self.model, self.emulation.gamma));
        }
        if self.sweep.delta_x.is_none() {
            self.sweep.delta_x = Some(kind.default_delta_x(&self.model));
        }
        if kind == ExperimentKind::QrcLinear || kind == ExperimentKind::QrcNarma {
            self.reservoir.tau_max.get_or_insert(self.tau_max());
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.ensemble < 1 {
            return Err(Error::config("ensemble", format!("must be >= 1, got {}", self.ensemble)));
        }
        check_grid("sweep.gamma", self.sweep.gamma.as_deref(), |g| g >= 0.0)?;
        check_grid("sweep.delta_x", self.sweep.delta_x.as_deref(), |d| d >= 0.0)?;
        match self.kind {
            ExperimentKind::GammaCritical => {
                let s = &self.spectrum;
                if !(s.gamma_min >= 0.0 && s.gamma_max > s.gamma_min && s.gamma_max.is_finite()) {
                    return Err(Error::config("spectrum.gamma_max", "need 0 <= gamma_min < gamma_max"));
                }
                if !(s.tol > 0.0 && s.tol.is_finite()) {
                    return Err(Error::config("spectrum.tol", "must be > 0"));
                }
            }
            ExperimentKind::Distance | ExperimentKind::Negativity => {
                let d = &self.dynamics;
                if !(d.dt > 0.0 && d.dt.is_finite()) {
                    return Err(Error::config("dynamics.dt", "must be > 0"));
                }
                if !(d.t_max >= d.dt && d.t_max.is_finite()) {
                    return Err(Error::config("dynamics.t_max", "must be finite and >= dt"));
                }
                if d.record_every == 0 {
                    return Err(Error::config("dynamics.record_every", "must be >= 1"));
                }
                if !(d.steady_fraction > 0.0 && d.steady_fraction <= 1.0) {
                    return Err(Error::config("dynamics.steady_fraction", "must lie in (0, 1]"));
                }
                if self.kind == ExperimentKind::Negativity && (d.bipartitions == 0 || self.model.n < 2) {
                    return Err(Error::config("dynamics.bipartitions", "need >= 1 bipartition and n >= 2"));
                }
            }
            ExperimentKind::QrcLinear | ExperimentKind::QrcNarma => {
                for &dx in self.delta_xs() {
                    for &g in self.gammas() {
                        let mut m = self.model.with_gamma(g);
                        m.delta_x = dx;
                        self.reservoir_config(m).validate().map_err(|e| prefix_field("reservoir", e))?;
                    }
                }
                let tau = self.tau_max();
                if tau == 0 || tau > self.reservoir.washout {
                    return Err(Error::config("reservoir.tau_max", "need 1 <= tau_max <= washout"));
                }
            }
            ExperimentKind::EmulateCheck => {
                let e = &self.emulation;
                if e.dt.len() < 2 || e.dt.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
                    return Err(Error::config("emulation.dt", "need at least two positive steps"));
                }
                if e.dt.windows(2).any(|w| w[1] >= w[0]) {
                    return Err(Error::config("emulation.dt", "must be strictly descending"));
                }
                if !(e.gamma >= 0.0 && e.gamma.is_finite()) {
                    return Err(Error::config("emulation.gamma", "must be >= 0"));
                }
                if !(e.extra_shift > 0.0 && e.extra_shift.is_finite()) {
                    return Err(Error::config("emulation.extra_shift", "must be > 0"));
                }
                let probe = ModelParams { n: e.reservoir_spins, k: e.reservoir_degree, ..self.model };
                probe.validate().map_err(|e| prefix_field("emulation", e))?;
            }
            ExperimentKind::SpectrumScan => {}
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

fn prefix_field(section: &str, e: Error) -> Error {
    match e {
        Error::Config { field, message } => Error::Config { field: format!("{section}.{field}"), message },
        other => other,
    }
}

fn check_grid(name: &str, grid: Option<&[f64]>, ok: impl Fn(f64) -> bool) -> Result<()> {
    let grid = grid.unwrap_or(&[]);
    if grid.is_empty() {
        return Err(Error::config(name, "grid must be nonempty"));
    }
    if let Some(bad) = grid.iter().find(|&&v| !(v.is_finite() && ok(v))) {
        return Err(Error::config(name, format!("value {bad} out of range")));
    }
    Ok(())
}

/// Every dotted key of a fully populated config.
fn known_keys() -> Vec<String> {
    let value =
        toml::Table::try_from(ExperimentConfig::for_kind(ExperimentKind::QrcLinear)).expect("config serializes");
    let mut keys = vec!["out".to_string()];
    fn walk(prefix: &str, t: &toml::Table, keys: &mut Vec<String>) {
        for (k, v) in t {
            let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
            match v {
                toml::Value::Table(sub) => walk(&path, sub, keys),
                _ => keys.push(path),
            }
        }
    }
    walk("", &value, &mut keys);
    keys
}

/// Sections searched first when a key is misplaced.
const SECTION_PRIORITY: [&str; 3] = ["model.", "sweep.", "reservoir."];

/// Finds the dotted path of the first occurrence of `key`.
fn locate(t: &toml::Table, key: &str, prefix: &str) -> Option<String> {
    for (k, v) in t {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        if k == key {
            return Some(path);
        }
        if let toml::Value::Table(sub) = v {
            if let Some(p) = locate(sub, key, &path) {
                return Some(p);
            }
        }
    }
    None
}

fn unknown_field_error(table: &toml::Table, message: &str) -> Option<Error> {
    let rest = message.split("unknown field `").nth(1)?;
    let key = &rest[..rest.find('`')?];
    let path = locate(table, key, "").unwrap_or_else(|| key.to_string());
    let section = path.rsplit_once('.').map(|(s, _)| s.to_string());
    let best = known_keys()
        .into_iter()
        .map(|cand| {
            let leaf = cand.rsplit('.').next().unwrap_or(&cand).to_string();
            let same_section = cand.rsplit_once('.').map(|(s, _)| s.to_string()) == section;
            let rank = SECTION_PRIORITY.iter().position(|p| cand.starts_with(p)).unwrap_or(SECTION_PRIORITY.len());
            (strsim::levenshtein(key, &leaf), !same_section, rank, cand)
        })
        .min();
    let mut msg = format!("unknown key `{key}`");
    if let Some((dist, _, _, cand)) = best {
        if dist <= 2.max(key.len() / 3) {
            let _ = write!(msg, "; did you mean `{cand}`?");
        }
    }
    Some(Error::config(path, msg))
}

/// Parses and validates a TOML config. `kind` fills or must match the
/// file's `kind` key.
pub fn validate_config(raw: &str, kind: Option<ExperimentKind>) -> Result<ExperimentConfig> {
    let mut table: toml::Table = raw.parse().map_err(|e: toml::de::Error| Error::config("<document>", e.message()))?;
    if let Some(kind) = kind {
        match table.get("kind").and_then(|v| v.as_str()) {
            Some(k) if k != kind.label() => {
                return Err(Error::config("kind", format!("config is for `{k}`, not `{kind}`")));
            }
            _ => {
                table.insert("kind".into(), toml::Value::String(kind.label().into()));
            }
        }
    }
    let mut cfg: ExperimentConfig = table.clone().try_into().map_err(|e: toml::de::Error| {
        let msg = e.message().to_string();
        unknown_field_error(&table, &msg).unwrap_or_else(|| {
            let field = if msg.contains("missing field `kind`") { "kind" } else { "<document>" };
            Error::config(field, msg)
        })
    })?;
    cfg.resolve()?;
    Ok(cfg)
}

/// Value of [`THREADS_ENV`], or the available parallelism.
pub fn thread_count() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(Error::config(THREADS_ENV, format!("expected a positive integer, got `{v}`"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub kind: ExperimentKind,
    pub code_version: String,
    pub master_seed: u64,
    pub threads: usize,
    /// Resolved config; feeding it back to [`validate_config`] reproduces
    /// the run.
    pub config: String,
    pub realization_seeds: Vec<u64>,
    /// Per grid point, features dropped as constant in any realization.
    pub dropped_features: BTreeMap<String, Vec<String>>,
    pub elapsed_seconds: f64,
    pub files: Vec<FileEntry>,
}

struct Csv {
    name: &'static str,
    text: String,
}

impl Csv {
    fn new(name: &'static str, header: &[&str]) -> Self {
        Self { name, text: header.join(",") + "\n" }
    }

    fn row(&mut self, cells: &[String]) {
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }
}

fn f(v: f64) -> String {
    format!("{v}")
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<FileEntry> {
    std::fs::write(dir.join(name), bytes)?;
    Ok(FileEntry { name: name.to_string(), sha256: hex::encode(Sha256::digest(bytes)), bytes: bytes.len() as u64 })
}

struct Output {
    tables: Vec<Csv>,
    dropped: BTreeMap<String, Vec<String>>,
}

/// Runs `f` for every realization in parallel and returns results in index
/// order. The first failing index aborts the run.
fn per_realization<T, F>(seeds: &[u64], f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync,
{
    let results: Vec<Result<T>> = seeds.par_iter().map(|&s| f(s)).collect();
    results
        .into_iter()
        .enumerate()
        .map(|(index, r)| r.map_err(|e| Error::Realization { index, seed: seeds[index], source: Box::new(e) }))
        .collect()
}

fn point_model(cfg: &ExperimentConfig, gamma: f64, delta_x: f64) -> ModelParams {
    ModelParams { gamma, delta_x, ..cfg.model }
}

fn realization_structure(model: &ModelParams, seed: u64) -> Result<(RegularGraph, DisorderRealization)> {
    let s = RealizationSeeds::from_seed(seed);
    let graph =
        if model.n == 1 { RegularGraph::from_edges(1, &[])? } else { sample_regular_graph(model.n, model.k, s.graph)? };
    Ok((graph, sample_disorder(model, s.disorder)))
}

fn realization_hamiltonian(model: &ModelParams, seed: u64) -> Result<NHHamiltonian> {
    let (graph, disorder) = realization_structure(model, seed)?;
    build_reservoir_hamiltonian(model, &graph, &disorder)
}

fn spectrum_scan(cfg: &ExperimentConfig, seeds: &[u64]) -> Result<Output> {
    let mut summary = Csv::new(
        "spectrum_scan.csv",
        &[
            "delta_x[Jz]",
            "gamma[Jz]",
            "n_complex_mean",
            "n_complex_stderr",
            "lambda_im_mean[Jz]",
            "lambda_im_stderr[Jz]",
            "n_realizations",
        ],
    );
    let mut detail = Csv::new(
        "spectrum_realizations.csv",
        &["delta_x[Jz]", "gamma[Jz]", "realization", "seed", "n_complex", "lambda_im[Jz]"],
    );
    for &dx in cfg.delta_xs() {
        let per = per_realization(seeds, |s| {
            cfg.gammas()
                .iter()
                .map(|&g| complex_count(&realization_hamiltonian(&point_model(cfg, g, dx), s)?))
                .collect::<Result<Vec<_>>>()
        })?;
        for (gi, &g) in cfg.gammas().iter().enumerate() {
            let counts: Vec<f64> = per.iter().map(|r| r[gi].0 as f64).collect();
            let lims: Vec<f64> = per.iter().map(|r| r[gi].1).collect();
            let (cm, cs) = mean_stderr(&counts);
            let (lm, ls) = mean_stderr(&lims);
            summary.row(&[f(dx), f(g), f(cm), f(cs), f(lm), f(ls), seeds.len().to_string()]);
            for (i, r) in per.iter().enumerate() {
                detail.row(&[f(dx), f(g), i.to_string(), seeds[i].to_string(), r[gi].0.to_string(), f(r[gi].1)]);
            }
        }
    }
    Ok(Output { tables: vec![summary, detail], dropped: BTreeMap::new() })
}

/// Least-squares line `y = a + b x`.
pub fn fit_line(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = x.len() as f64;
    if x.len() < 2 {
        return None;
    }
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Some((my - slope * mx, slope))
}

fn gamma_critical(cfg: &ExperimentConfig, seeds: &[u64]) -> Result<Output> {
    let mut summary = Csv::new(
        "gamma_critical.csv",
        &[
            "delta_x[Jz]",
            "gamma_c_mean[Jz]",
            "gamma_c_stderr[Jz]",
            "prediction_mean[Jz]",
            "n_resolved",
            "n_realizations",
        ],
    );
    let mut detail = Csv::new(
        "gamma_critical_realizations.csv",
        &["delta_x[Jz]", "realization", "seed", "gamma_c[Jz]", "prediction[Jz]", "resolution[Jz]", "status"],
    );
    let s = &cfg.spectrum;
    let (mut xs, mut ys) = (vec![], vec![]);
    for &dx in cfg.delta_xs() {
        let model = point_model(cfg, 0.0, dx);
        let per = per_realization(seeds, |seed| {
            let (graph, disorder) = realization_structure(&model, seed)?;
            find_gamma_critical(&model, &graph, &disorder, (s.gamma_min, s.gamma_max), s.tol)
        })?;
        let resolved: Vec<f64> =
            per.iter().filter(|r| r.status == TransitionStatus::Resolved).map(|r| r.gamma_c).collect();
        let preds: Vec<f64> = per.iter().map(|r| r.prediction).collect();
        let (gm, gs) = if resolved.is_empty() { (f64::NAN, f64::NAN) } else { mean_stderr(&resolved) };
        summary.row(&[
            f(dx),
            f(gm),
            f(gs),
            f(mean_stderr(&preds).0),
            resolved.len().to_string(),
            seeds.len().to_string(),
        ]);
        if !resolved.is_empty() {
            xs.push(dx);
            ys.push(gm);
        }
        for (i, r) in per.iter().enumerate() {
            let status = serde_json::to_value(r.status)?.as_str().unwrap_or_default().to_string();
            detail.row(&[
                f(dx),
                i.to_string(),
                seeds[i].to_string(),
                f(r.gamma_c),
                f(r.prediction),
                f(r.resolution),
                status,
            ]);
        }
    }
    let mut fit = Csv::new("gamma_critical_fit.csv", &["intercept[Jz]", "slope", "points"]);
    if let Some((a, b)) = fit_line(&xs, &ys) {
        fit.row(&[f(a), f(b), xs.len().to_string()]);
    }
    Ok(Output { tables: vec![summary, detail, fit], dropped: BTreeMap::new() })
}

fn series_of(records: &[TrajectoryRecord], pick: impl Fn(&TrajectoryRecord) -> &Vec<f64>) -> Result<EnsembleSeries> {
    let times = &records[0].times;
    let samples: Vec<&[f64]> = records.iter().map(|r| pick(r).as_slice()).collect();
    EnsembleSeries::from_samples(times, &samples)
}

fn distance(cfg: &ExperimentConfig, seeds: &[u64]) -> Result<Output> {
    let d = &cfg.dynamics;
    let mut series = Csv::new(
        "distance.csv",
        &["gamma[Jz]", "t[1/Jz]", "distance_mean", "distance_stderr", "purity_mean", "purity_stderr"],
    );
    let mut fits = Csv::new("distance_fit.csv", &["gamma[Jz]", "rate[Jz]", "intercept", "r_squared", "points"]);
    for &g in cfg.gammas() {
        let model = point_model(cfg, g, cfg.delta_xs()[0]);
        let recs = per_realization(seeds, |seed| {
            let h = realization_hamiltonian(&model, seed)?;
            let s = RealizationSeeds::from_seed(seed);
            distinguishability_trajectory(&h, d.t_max, d.dt, (s.state, derive_seed(seed, 1, "state")), d.record_every)
        })?;
        let dist = series_of(&recs, |r| &r.distance)?;
        let pur = series_of(&recs, |r| &r.purity)?;
        for i in 0..dist.times.len() {
            series.row(&[f(g), f(dist.times[i]), f(dist.mean[i]), f(dist.stderr[i]), f(pur.mean[i]), f(pur.stderr[i])]);
        }
        if let Some(fit) = fit_exponential_tail(&dist.times, &dist.mean, 1e-12) {
            fits.row(&[f(g), f(fit.rate), f(fit.intercept), f(fit.r_squared), fit.points.to_string()]);
        }
    }
    Ok(Output { tables: vec![series, fits], dropped: BTreeMap::new() })
}

fn steady_value(r: &TrajectoryRecord, fraction: f64) -> f64 {
    let len = r.negativity.len();
    let take = ((len as f64 * fraction).ceil() as usize).clamp(1, len);
    r.negativity[len - take..].iter().sum::<f64>() / take as f64
}

fn negativity(cfg: &ExperimentConfig, seeds: &[u64]) -> Result<Output> {
    let d = &cfg.dynamics;
    let mut series =
        Csv::new("negativity.csv", &["delta_x[Jz]", "gamma[Jz]", "t[1/Jz]", "negativity_mean", "negativity_stderr"]);
    let mut steady = Csv::new(
        "negativity_steady.csv",
        &["delta_x[Jz]", "gamma[Jz]", "steady_mean", "steady_stderr", "n_realizations"],
    );
    for &dx in cfg.delta_xs() {
        for &g in cfg.gammas() {
            let model = point_model(cfg, g, dx);
            let recs = per_realization(seeds, |seed| {
                let h = realization_hamiltonian(&model, seed)?;
                let parts = random_subsystems(model.n, d.bipartitions, derive_seed(seed, 0, "bipartitions"));
                negativity_trajectory(&h, d.t_max, d.dt, &parts, d.record_every)
            })?;
            let s = series_of(&recs, |r| &r.negativity)?;
            for i in 0..s.times.len() {
                series.row(&[f(dx), f(g), f(s.times[i]), f(s.mean[i]), f(s.stderr[i])]);
            }
            let vals: Vec<f64> = recs.iter().map(|r| steady_value(r, d.steady_fraction)).collect();
            let (m, e) = mean_stderr(&vals);
            steady.row(&[f(dx), f(g), f(m), f(e), seeds.len().to_string()]);
        }
    }
    Ok(Output { tables: vec![series, steady], dropped: BTreeMap::new() })
}

fn qrc(cfg: &ExperimentConfig, seeds: &[u64]) -> Result<Output> {
    let narma = cfg.kind == ExperimentKind::QrcNarma;
    let (name, delays_name) =
        if narma { ("qrc_narma.csv", "qrc_narma_targets.csv") } else { ("qrc_linear.csv", "qrc_linear_delays.csv") };
    let header = [
        "delta_x[Jz]",
        "gamma[Jz]",
        "C_T",
        "C_T_norm",
        "NRMSE",
        "C_T_stderr",
        "C_T_norm_stderr",
        "NRMSE_stderr",
        "n_realizations",
    ];
    let mut summary = Csv::new(name, &header);
    let mut delays = Csv::new(delays_name, &["delta_x[Jz]", "gamma[Jz]", "tau", "capacity", "capacity_stderr"]);
    let mut dropped = BTreeMap::new();
    let tau_max = cfg.tau_max();
    let lambda = cfg.reservoir.lambda;
    let names = feature_names(cfg.model.n);
    for &dx in cfg.delta_xs() {
        for &g in cfg.gammas() {
            let rc = cfg.reservoir_config(point_model(cfg, g, dx));
            let outs = per_realization(seeds, |seed| {
                let run = simulate_realization(&rc, seed)?;
                if narma {
                    evaluate_narma(&rc, &run, tau_max, lambda)
                } else {
                    evaluate_memory(&rc, &run, tau_max, lambda)
                }
            })?;
            let kind = if narma { TaskKind::Narma } else { TaskKind::LinearMemory };
            let r = TaskResult::aggregate(kind, tau_max, lambda, outs)?;
            summary.row(&[
                f(dx),
                f(g),
                f(r.total),
                f(r.normalized),
                f(r.nrmse),
                f(r.total_stderr),
                f(r.normalized_stderr),
                f(r.nrmse_stderr),
                seeds.len().to_string(),
            ]);
            for (t, (c, e)) in r.capacities.iter().zip(&r.capacity_stderr).enumerate() {
                let tau = if narma { tau_max } else { t + 1 };
                delays.row(&[f(dx), f(g), tau.to_string(), f(*c), f(*e)]);
            }
            let mut cols: Vec<usize> = r.realizations.iter().flat_map(|o| o.dropped_features.iter().copied()).collect();
            cols.sort_unstable();
            cols.dedup();
            if !cols.is_empty() {
                dropped.insert(format!("delta_x={dx},gamma={g}"), cols.into_iter().map(|c| names[c].clone()).collect());
            }
        }
    }
    Ok(Output { tables: vec![summary, delays], dropped })
}

fn emulate_check(cfg: &ExperimentConfig) -> Result<Output> {
    let e = &cfg.emulation;
    let mut errors = Csv::new("emulation.csv", &["instance", "shift", "dt[1/Jz]", "error"]);
    let mut slopes = Csv::new("emulation_slopes.csv", &["instance", "shift", "slope", "envelope"]);
    let mut invariance = Csv::new("emulation_shift.csv", &["instance", "dt[1/Jz]", "difference", "envelope_bound"]);

    let qubit_h = scale(embed_pauli(Axis::X, 0, 1)?.as_ref(), crate::linalg::c64::new(cfg.model.hx, 0.0));
    let qubit_decay = decay_operators(&[embed_pauli(Axis::Minus, 0, 1)?]);
    let res_model = ModelParams { n: e.reservoir_spins, k: e.reservoir_degree, gamma: e.gamma, ..cfg.model };
    let res_h = realization_hamiltonian(&res_model, cfg.realization_seed(0))?;
    let (res_herm, res_decay) = reservoir_instance(&res_h)?;
    let instances: [(&str, CMat, Vec<CMat>); 2] = [("qubit", qubit_h, qubit_decay), ("reservoir", res_herm, res_decay)];

    for (label, h, decay) in &instances {
        let dim = h.nrows();
        let rho = random_mixed_state(dim, derive_seed(cfg.seed, dim as u64, "emulation"))?;
        let base: Vec<f64> = decay.iter().map(default_shift).collect::<Result<_>>()?;
        let raised: Vec<f64> = base.iter().map(|s| s + e.extra_shift).collect();
        let mut envelope: f64 = 0.0;
        for (shift_label, shifts) in [("default", &base), ("raised", &raised)] {
            let scan = emulation_error_scan_from_decay(h, decay, e.gamma, &e.dt, &rho, Some(shifts))?;
            for (dt, err) in scan.dt.iter().zip(&scan.error) {
                errors.row(&[label.to_string(), shift_label.into(), f(*dt), f(*err)]);
            }
            let slope = scan.slope.map(f).unwrap_or_else(|| "nan".into());
            envelope = envelope.max(scan.envelope_constant());
            slopes.row(&[label.to_string(), shift_label.into(), slope, f(scan.envelope_constant())]);
        }
        for &dt in &e.dt {
            let a = emulate_step(&rho, &build_ensemble_from_decay(h, decay, e.gamma, dt, Some(&base))?)?.0;
            let b = emulate_step(&rho, &build_ensemble_from_decay(h, decay, e.gamma, dt, Some(&raised))?)?.0;
            invariance.row(&[label.to_string(), f(dt), f(trace_distance(&a, &b)?), f(2.0 * envelope * dt * dt)]);
        }
    }
    Ok(Output { tables: vec![errors, slopes, invariance], dropped: BTreeMap::new() })
}

/// Runs `cfg` on `threads` workers and writes every output into `out`.
pub fn run_experiment_with_threads(cfg: &ExperimentConfig, out: &Path, threads: usize) -> Result<RunManifest> {
    cfg.validate()?;
    let start = Instant::now();
    std::fs::create_dir_all(out)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::config(THREADS_ENV, e.to_string()))?;
    let seeds =
        if cfg.kind == ExperimentKind::EmulateCheck { vec![cfg.realization_seed(0)] } else { cfg.realization_seeds() };
    let output = pool.install(|| match cfg.kind {
        ExperimentKind::SpectrumScan => spectrum_scan(cfg, &seeds),
        ExperimentKind::GammaCritical => gamma_critical(cfg, &seeds),
        ExperimentKind::Distance => distance(cfg, &seeds),
        ExperimentKind::Negativity => negativity(cfg, &seeds),
        ExperimentKind::QrcLinear | ExperimentKind::QrcNarma => qrc(cfg, &seeds),
        ExperimentKind::EmulateCheck => emulate_check(cfg),
    })?;
    let config = cfg.to_toml();
    let mut files = vec![write_file(out, CONFIG_ECHO_FILE, config.as_bytes())?];
    for t in &output.tables {
        files.push(write_file(out, t.name, t.text.as_bytes())?);
    }
    let manifest = RunManifest {
        kind: cfg.kind,
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        master_seed: cfg.seed,
        threads,
        config,
        realization_seeds: seeds,
        dropped_features: output.dropped,
        elapsed_seconds: start.elapsed().as_secs_f64(),
        files,
    };
    std::fs::write(out.join(MANIFEST_FILE), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(manifest)
}

/// As [`run_experiment_with_threads`] with the worker count from
/// [`THREADS_ENV`]. The output directory defaults to `cfg.out`, then to
/// `out/<kind>`.
pub fn run_experiment(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<RunManifest> {
    let dir = out
        .map(Path::to_path_buf)
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(cfg.kind.label()));
    run_experiment_with_threads(cfg, &dir, thread_count()?)
}
