//! End-to-end orchestration: load, engineer, encode, select the training
//! scope, identify constraints, fit metrics, segment and evaluate.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::{segment_distances, Clustering};
use crate::constraints::{identify_constraints, ConstraintParams, ConstraintSets};
use crate::dataset::{
    available_features, encode, engineer_features, load_outputs, load_raw, outputs_to_csv, ColumnSchema,
    EngineeredFeature, FeatureMatrix, OutputVector, RawTable, Schema, SyntheticSpec,
};
use crate::dendrogram::Dendrogram;
use crate::error::{Error, Result, StageExt};
use crate::evaluation::{compare_metrics, cv_summary, feature_importance, maximum_range, MethodSpec, SegmentationReport};
use crate::learners::{fit, select_itml_gamma, Algorithm, FitReport, LearnerConfig};
use crate::metrics::{covariance_metric, pairwise_distances, DistanceSpec, MetricMatrix};
use crate::prototypes::{minimax_linkage_cluster, select_prototypes, training_size, PrototypeSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Euclidean,
    Covariance,
    Mmc,
    Itml,
    Lmnn,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Euclidean, Method::Covariance, Method::Mmc, Method::Itml, Method::Lmnn];

    pub fn name(self) -> &'static str {
        match self {
            Method::Euclidean => "euclidean",
            Method::Covariance => "covariance",
            Method::Mmc => "mmc",
            Method::Itml => "itml",
            Method::Lmnn => "lmnn",
        }
    }

    /// Learner behind a supervised method.
    pub fn algorithm(self) -> Option<Algorithm> {
        match self {
            Method::Mmc => Some(Algorithm::Mmc),
            Method::Itml => Some(Algorithm::Itml),
            Method::Lmnn => Some(Algorithm::Lmnn),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EngineerMode {
    /// Every engineered feature whose sources are present.
    Auto,
    None,
    /// All ten; missing sources are an error.
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub features: PathBuf,
    pub schema: PathBuf,
    pub outputs: PathBuf,
    pub out_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            features: "features.csv".into(),
            schema: "schema.txt".into(),
            outputs: "outputs.csv".into(),
            out_dir: "out".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub engineer: EngineerMode,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            engineer: EngineerMode::Auto,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    /// Share of the population picked as minimax prototypes.
    pub fraction: f64,
    /// Explicit training ids; overrides `fraction` when non-empty.
    pub ids: Vec<String>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            fraction: 0.40,
            ids: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstraintsConfig {
    pub tail: f64,
    pub rho_micro: usize,
    pub rho_macro: usize,
}

impl Default for ConstraintsConfig {
    fn default() -> Self {
        let p = ConstraintParams::default();
        Self {
            tail: p.tail,
            rho_micro: p.rho_micro,
            rho_macro: p.rho_macro,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MmcConfig {
    pub max_iter: usize,
    pub tol: f64,
    pub patience: usize,
    pub dissimilar_floor: f64,
}

impl Default for MmcConfig {
    fn default() -> Self {
        Self {
            max_iter: 1000,
            tol: 1e-6,
            patience: 3,
            dissimilar_floor: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ItmlConfig {
    pub max_iter: usize,
    pub tol: f64,
    pub gamma: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
    pub quantile_low: f64,
    pub quantile_high: f64,
    /// Choose γ from `gamma_grid` by cross-validation on the constraints.
    pub select_gamma: bool,
    pub gamma_grid: Vec<f64>,
    pub folds: usize,
}

impl Default for ItmlConfig {
    fn default() -> Self {
        Self {
            max_iter: 1000,
            tol: 1e-3,
            gamma: 1.0,
            upper: None,
            lower: None,
            quantile_low: 0.05,
            quantile_high: 0.95,
            select_gamma: false,
            gamma_grid: vec![0.1, 1.0, 10.0],
            folds: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmnnConfig {
    pub max_iter: usize,
    pub tol: f64,
    pub patience: usize,
    pub mu: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_step: Option<f64>,
    pub grow: f64,
    pub shrink: f64,
}

impl Default for LmnnConfig {
    fn default() -> Self {
        Self {
            max_iter: 1000,
            tol: 1e-6,
            patience: 3,
            mu: 0.5,
            initial_step: None,
            grow: 1.2,
            shrink: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub ks: Vec<usize>,
    /// Outputs to analyse; all outputs in the file when empty.
    pub outputs: Vec<String>,
    pub methods: Vec<Method>,
    /// Worker threads; 0 uses the default pool.
    pub threads: usize,
    pub top_features: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            ks: vec![5, 10, 15, 20],
            outputs: Vec::new(),
            methods: Method::ALL.to_vec(),
            threads: 0,
            top_features: 15,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: PathsConfig,
    pub dataset: DatasetConfig,
    pub training: TrainingConfig,
    pub constraints: ConstraintsConfig,
    pub mmc: MmcConfig,
    pub itml: ItmlConfig,
    pub lmnn: LmnnConfig,
    pub run: RunConfig,
}

pub const EFFECTIVE_CONFIG: &str = "effective_config.toml";
const LOCK_FILE: &str = ".aviseg.lock";
const STAGING_DIR: &str = ".staging";

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Read a config file; relative paths resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(base) = path.parent() {
            cfg.paths.resolve_against(base);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.training;
        if t.ids.is_empty() && !(t.fraction > 0.0 && t.fraction < 1.0) {
            return Err(Error::Config(format!("training fraction {} outside (0, 1)", t.fraction)));
        }
        let c = &self.constraints;
        if !(c.tail > 0.0 && c.tail < 0.5) {
            return Err(Error::Config(format!("constraint tail {} outside (0, 0.5)", c.tail)));
        }
        if c.rho_micro == 0 || c.rho_macro == 0 {
            return Err(Error::Config("reduction factors must be >= 1".into()));
        }
        if self.run.ks.is_empty() || self.run.ks.contains(&0) {
            return Err(Error::Config("ks must be a non-empty list of positive counts".into()));
        }
        if self.run.methods.is_empty() {
            return Err(Error::Config("at least one method is required".into()));
        }
        if self.itml.select_gamma && (self.itml.gamma_grid.is_empty() || self.itml.folds < 2) {
            return Err(Error::Config("gamma selection needs a grid and >= 2 folds".into()));
        }
        for m in self.run.methods.iter().filter_map(|m| m.algorithm()) {
            self.learner_config(m).validate()?;
        }
        Ok(())
    }

    pub fn learner_config(&self, algorithm: Algorithm) -> LearnerConfig {
        let mut cfg = LearnerConfig::new(algorithm);
        match algorithm {
            Algorithm::Mmc => {
                cfg.max_iter = self.mmc.max_iter;
                cfg.tol = self.mmc.tol;
                cfg.patience = self.mmc.patience;
                cfg.mmc.dissimilar_floor = self.mmc.dissimilar_floor;
            }
            Algorithm::Itml => {
                cfg.max_iter = self.itml.max_iter;
                cfg.itml.tol = self.itml.tol;
                cfg.itml.gamma = self.itml.gamma;
                cfg.itml.bound_quantiles = (self.itml.quantile_low, self.itml.quantile_high);
                if let (Some(u), Some(l)) = (self.itml.upper, self.itml.lower) {
                    cfg.itml.bounds = Some((u, l));
                }
            }
            Algorithm::Lmnn => {
                cfg.max_iter = self.lmnn.max_iter;
                cfg.tol = self.lmnn.tol;
                cfg.patience = self.lmnn.patience;
                cfg.lmnn.mu = self.lmnn.mu;
                cfg.lmnn.initial_step = self.lmnn.initial_step;
                cfg.lmnn.grow = self.lmnn.grow;
                cfg.lmnn.shrink = self.lmnn.shrink;
            }
        }
        cfg
    }

    pub fn constraint_params(&self) -> ConstraintParams {
        ConstraintParams {
            tail: self.constraints.tail,
            rho_micro: self.constraints.rho_micro,
            rho_macro: self.constraints.rho_macro,
        }
    }
}

impl PathsConfig {
    pub fn resolve_against(&mut self, base: &Path) {
        for p in [&mut self.features, &mut self.schema, &mut self.outputs, &mut self.out_dir] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

/// Run `f` on a pool with `threads` workers, or on the global pool for 0.
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if threads == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Exclusive, staged writer for one output directory. Files are written to a
/// staging directory and moved into place by [`OutputDir::commit`]; dropping
/// without committing discards them.
pub struct OutputDir {
    root: PathBuf,
    staging: PathBuf,
    lock: PathBuf,
    files: Vec<String>,
}

impl OutputDir {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        let lock = root.join(LOCK_FILE);
        fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&lock)
            .map_err(|e| match e.kind() {
                std::io::ErrorKind::AlreadyExists => Error::Config(format!(
                    "{} is locked by another run (remove {} if stale)",
                    root.display(),
                    lock.display()
                )),
                _ => Error::io(&lock, e),
            })?;
        let staging = root.join(STAGING_DIR);
        let dir = Self {
            root,
            staging,
            lock,
            files: Vec::new(),
        };
        if dir.staging.exists() {
            fs::remove_dir_all(&dir.staging).map_err(|e| Error::io(&dir.staging, e))?;
        }
        fs::create_dir_all(&dir.staging).map_err(|e| Error::io(&dir.staging, e))?;
        Ok(dir)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Write straight into the root, bypassing staging.
    pub fn write_now(&self, name: &str, contents: &str) -> Result<PathBuf> {
        let path = self.root.join(name);
        fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn stage(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.staging.join(name);
        fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        Ok(())
    }

    /// Move staged files into the root; returns their final paths.
    pub fn commit(mut self) -> Result<Vec<PathBuf>> {
        let mut out = Vec::with_capacity(self.files.len());
        for name in std::mem::take(&mut self.files) {
            let (from, to) = (self.staging.join(&name), self.root.join(&name));
            fs::rename(&from, &to).map_err(|e| Error::io(&to, e))?;
            out.push(to);
        }
        Ok(out)
    }
}

impl Drop for OutputDir {
    fn drop(&mut self) {
        let _ = fs::remove_dir_all(&self.staging);
        let _ = fs::remove_file(&self.lock);
    }
}

/// File-name-safe form of an output or method name.
pub fn file_token(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect()
}

/// Loaded and encoded population with the selected training scope.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub raw: RawTable,
    pub features: FeatureMatrix,
    pub outputs: Vec<OutputVector>,
    /// Training rows, ascending.
    pub training: Vec<usize>,
    /// Minimax dendrogram and prototypes when the scope was selected by
    /// prototypes.
    pub selection: Option<(Dendrogram, PrototypeSet)>,
}

impl Prepared {
    pub fn held_out(&self) -> Vec<usize> {
        (0..self.features.n()).filter(|i| self.training.binary_search(i).is_err()).collect()
    }

    pub fn output(&self, name: &str) -> Result<&OutputVector> {
        self.outputs
            .iter()
            .find(|o| o.name == name)
            .ok_or_else(|| Error::Config(format!("unknown output {name:?}")))
    }

    pub fn training_ids(&self) -> Vec<String> {
        self.training.iter().map(|&i| self.features.ids()[i].clone()).collect()
    }
}

/// Load, engineer and encode the feature table.
pub fn load_features(cfg: &PipelineConfig) -> Result<(RawTable, FeatureMatrix)> {
    let schema = Schema::load(&cfg.paths.schema).stage("load")?;
    let raw = load_raw(&cfg.paths.features, &schema).stage("load")?;
    for r in &raw.rejected {
        info!("rejected line {} ({}): {}", r.line, r.id, r.reason);
    }
    let engineered: Vec<EngineeredFeature> = match cfg.dataset.engineer {
        EngineerMode::None => Vec::new(),
        EngineerMode::All => EngineeredFeature::ALL.to_vec(),
        EngineerMode::Auto => available_features(&raw),
    };
    let raw = if engineered.is_empty() {
        raw
    } else {
        let rejected = raw.rejected.clone();
        let mut out = engineer_features(&raw, &engineered).stage("engineer")?;
        out.rejected = rejected;
        out
    };
    let features = encode(&raw).stage("encode")?;
    Ok((raw, features))
}

/// Outputs named in the config (all when none are named), aligned to `ids`.
pub fn load_selected_outputs(cfg: &PipelineConfig, ids: &[String]) -> Result<Vec<OutputVector>> {
    let all = load_outputs(&cfg.paths.outputs).stage("load")?;
    let chosen: Vec<OutputVector> = if cfg.run.outputs.is_empty() {
        all
    } else {
        cfg.run
            .outputs
            .iter()
            .map(|name| {
                all.iter()
                    .find(|o| &o.name == name)
                    .cloned()
                    .ok_or_else(|| Error::Config(format!("output {name:?} not in outputs file")))
            })
            .collect::<Result<_>>()?
    };
    if chosen.is_empty() {
        return Err(Error::Config("no outputs to analyse".into()));
    }
    chosen.iter().map(|o| o.aligned_to(ids)).collect::<Result<_>>().stage("load")
}

/// Training rows: explicit ids, or minimax prototypes under Euclidean
/// distance on the encoded features.
pub fn select_training(
    cfg: &PipelineConfig,
    features: &FeatureMatrix,
) -> Result<(Vec<usize>, Option<(Dendrogram, PrototypeSet)>)> {
    if !cfg.training.ids.is_empty() {
        let index = features.index_of();
        let mut rows = cfg
            .training
            .ids
            .iter()
            .map(|id| {
                index
                    .get(id.as_str())
                    .copied()
                    .ok_or_else(|| Error::Config(format!("training id {id:?} not in features")))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.sort_unstable();
        rows.dedup();
        return Ok((rows, None));
    }
    let run = || -> Result<_> {
        let d = pairwise_distances(features, &DistanceSpec::euclidean())?;
        let dend = minimax_linkage_cluster(&d)?;
        let k = training_size(features.n(), cfg.training.fraction);
        let protos = select_prototypes(&dend, k, &d)?;
        Ok((protos.prototypes.clone(), Some((dend, protos))))
    };
    run().stage("prototypes")
}

pub fn prepare(cfg: &PipelineConfig) -> Result<Prepared> {
    let (raw, features) = load_features(cfg)?;
    let outputs = load_selected_outputs(cfg, features.ids())?;
    let (training, selection) = select_training(cfg, &features)?;
    Ok(Prepared {
        raw,
        features,
        outputs,
        training,
        selection,
    })
}

/// Constraint sets for one output on the training rows.
pub fn constraints_for(cfg: &PipelineConfig, prep: &Prepared, output: &str) -> Result<ConstraintSets> {
    let y = prep.output(output)?.select(&prep.training)?;
    let x = prep.features.select_rows(&prep.training)?;
    identify_constraints(x.x(), y.values(), &cfg.constraint_params()).stage("constraints")
}

/// Fit one supervised method on training constraints.
pub fn fit_method(
    cfg: &PipelineConfig,
    prep: &Prepared,
    constraints: &ConstraintSets,
    algorithm: Algorithm,
) -> Result<(MetricMatrix, FitReport)> {
    let x = prep.features.select_rows(&prep.training)?;
    let mut lc = cfg.learner_config(algorithm);
    let mut notes = Vec::new();
    if algorithm == Algorithm::Itml && cfg.itml.select_gamma {
        let sel = select_itml_gamma(
            x.x(),
            &constraints.similar,
            &constraints.dissimilar,
            &lc,
            &cfg.itml.gamma_grid,
            cfg.itml.folds,
        )
        .stage("fit")?;
        notes.push(format!("gamma {} chosen from {:?}", sel.gamma, sel.scores));
        lc.itml.gamma = sel.gamma;
    }
    let (m, mut report) = fit(x.x(), constraints, &lc).stage("fit")?;
    report.notes.extend(notes);
    Ok((m, report))
}

/// Distance for an unsupervised method.
pub fn baseline_spec(method: Method, features: &FeatureMatrix) -> Result<Option<DistanceSpec>> {
    Ok(match method {
        Method::Euclidean => Some(DistanceSpec::euclidean()),
        Method::Covariance => Some(DistanceSpec::Mahalanobis(covariance_metric(features).stage("baseline")?)),
        _ => None,
    })
}

/// Everything learned for one output.
struct Learned {
    output: String,
    method: Method,
    metric: MetricMatrix,
    report: FitReport,
}

pub struct PipelineOutcome {
    pub report: SegmentationReport,
    pub prepared: Prepared,
    /// Committed artifact paths, in write order.
    pub files: Vec<PathBuf>,
}

pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutcome> {
    cfg.validate()?;
    let mut dir = OutputDir::open(&cfg.paths.out_dir)?;
    dir.write_now(EFFECTIVE_CONFIG, &cfg.to_toml()?)?;
    let (report, prepared) = with_threads(cfg.run.threads, || run_stages(cfg, &mut dir))??;
    let files = dir.commit()?;
    Ok(PipelineOutcome {
        report,
        prepared,
        files,
    })
}

fn run_stages(cfg: &PipelineConfig, dir: &mut OutputDir) -> Result<(SegmentationReport, Prepared)> {
    let prep = prepare(cfg)?;
    let ids = prep.features.ids().to_vec();
    if let Some(&k) = cfg.run.ks.iter().find(|&&k| k > prep.features.n()) {
        return Err(Error::Config(format!("k = {k} exceeds population {}", prep.features.n())));
    }
    info!(
        "population n={} d={}, training {} objects",
        prep.features.n(),
        prep.features.d(),
        prep.training.len()
    );
    dir.stage("encoded.csv", &prep.features.to_csv())?;
    let mut rejected = String::from("line,id,reason\n");
    for r in &prep.raw.rejected {
        rejected.push_str(&format!("{},{},\"{}\"\n", r.line, r.id, r.reason.replace('"', "'")));
    }
    dir.stage("rejected_rows.csv", &rejected)?;
    match &prep.selection {
        Some((dend, protos)) => {
            dir.stage("training.csv", &protos.to_csv(&ids))?;
            dir.stage("dendrogram_prototypes.txt", &dend.to_text(&ids))?;
        }
        None => {
            let mut t = String::from("id\n");
            for id in prep.training_ids() {
                t.push_str(&id);
                t.push('\n');
            }
            dir.stage("training.csv", &t)?;
        }
    }

    let mut specs = Vec::new();
    for &m in &cfg.run.methods {
        if let Some(spec) = baseline_spec(m, &prep.features)? {
            if let DistanceSpec::Mahalanobis(metric) = &spec {
                dir.stage(&format!("metric_{}.txt", m.name()), &metric.to_text())?;
            }
            specs.push(MethodSpec {
                method: m.name().to_string(),
                output: None,
                spec,
            });
        }
    }

    let learners: Vec<Method> = cfg.run.methods.iter().copied().filter(|m| m.algorithm().is_some()).collect();
    let train_ids = prep.training_ids();
    if !learners.is_empty() {
        let constraint_sets = prep
            .outputs
            .iter()
            .map(|o| constraints_for(cfg, &prep, &o.name))
            .collect::<Result<Vec<_>>>()?;
        for (o, cs) in prep.outputs.iter().zip(&constraint_sets) {
            dir.stage(&format!("constraints_{}.csv", file_token(&o.name)), &cs.to_csv(&train_ids))?;
        }
        let jobs: Vec<(usize, Method)> = (0..prep.outputs.len())
            .flat_map(|oi| learners.iter().map(move |&m| (oi, m)))
            .collect();
        let learned = jobs
            .par_iter()
            .map(|&(oi, m)| {
                let alg = m.algorithm().expect("learner method");
                let (metric, report) = fit_method(cfg, &prep, &constraint_sets[oi], alg)?;
                Ok(Learned {
                    output: prep.outputs[oi].name.clone(),
                    method: m,
                    metric,
                    report,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        for l in learned {
            let tag = format!("{}_{}", l.method.name(), file_token(&l.output));
            info!("{} on {}: {} iterations, converged={}", l.method, l.output, l.report.iterations, l.report.converged);
            dir.stage(&format!("metric_{tag}.txt"), &l.metric.to_text())?;
            dir.stage(&format!("fit_{tag}.txt"), &l.report.to_text())?;
            if l.method == Method::Mmc {
                let fi = feature_importance(&l.metric, prep.features.columns(), cfg.run.top_features)
                    .stage("evaluate")?;
                dir.stage(&format!("feature_importance_{}.csv", file_token(&l.output)), &fi.to_csv(&l.output))?;
            }
            specs.push(MethodSpec {
                method: l.method.name().to_string(),
                output: Some(l.output),
                spec: DistanceSpec::Mahalanobis(l.metric),
            });
        }
    }

    let held_out = prep.held_out();
    let report = compare_metrics(
        &prep.features,
        &prep.outputs,
        &specs,
        &cfg.run.ks,
        (!held_out.is_empty()).then_some(held_out.as_slice()),
    )
    .stage("evaluate")?;
    dir.stage("report_long.csv", &report.long_csv())?;
    dir.stage("report_boxplot.csv", &report.boxplot_csv())?;
    dir.stage("report_winloss.csv", &report.win_loss_csv())?;
    dir.stage("labels.csv", &report.labels_csv(&ids))?;
    for (method, output, dend) in &report.dendrograms {
        let name = if output.is_empty() {
            format!("dendrogram_{method}.txt")
        } else {
            format!("dendrogram_{method}_{}.txt", file_token(output))
        };
        dir.stage(&name, &dend.to_text(&ids))?;
    }
    Ok((report, prep))
}

/// Distance for `method`, fitting it on `output` when it is a learner.
pub fn method_spec(cfg: &PipelineConfig, prep: &Prepared, method: Method, output: Option<&str>) -> Result<DistanceSpec> {
    if let Some(spec) = baseline_spec(method, &prep.features)? {
        return Ok(spec);
    }
    let output = output.ok_or_else(|| Error::Config(format!("method {method} needs an output")))?;
    let cs = constraints_for(cfg, prep, output)?;
    let (m, _) = fit_method(cfg, prep, &cs, method.algorithm().expect("learner method"))?;
    Ok(DistanceSpec::Mahalanobis(m))
}

/// `n x n` distance CSV under `method` (fit on `output` for learners).
pub fn export_distance_matrix(cfg: &PipelineConfig, method: Method, output: Option<&str>) -> Result<String> {
    let prep = prepare(cfg)?;
    if let Some(o) = output {
        prep.output(o)?;
    }
    let spec = method_spec(cfg, &prep, method, output)?;
    let d = pairwise_distances(&prep.features, &spec)?;
    Ok(d.to_csv(prep.features.ids()))
}

/// Segment the population under one method; returns the dendrogram and
/// clusterings for every configured `k`.
pub fn segment_method(
    cfg: &PipelineConfig,
    prep: &Prepared,
    method: Method,
    output: Option<&str>,
) -> Result<(Dendrogram, Vec<Clustering>)> {
    let spec = method_spec(cfg, prep, method, output)?;
    let d = pairwise_distances(&prep.features, &spec)?;
    segment_distances(&d, &spec.descriptor(), &cfg.run.ks).stage("segment")
}

/// Score an `id,cluster` labels file against one output: boxplot statistics
/// of per-cluster CV and the maximum range.
pub fn evaluate_labels(labels_csv: &str, y: &OutputVector) -> Result<String> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(labels_csv.as_bytes());
    let mut ids = Vec::new();
    let mut labels = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|source| Error::Csv {
            path: "<labels>".into(),
            source,
        })?;
        let id = rec.get(0).unwrap_or_default().to_string();
        let l: usize = rec
            .get(1)
            .unwrap_or_default()
            .parse()
            .map_err(|_| Error::Config(format!("bad cluster label for {id}")))?;
        ids.push(id);
        labels.push(l);
    }
    let y = y.aligned_to(&ids)?;
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut groups = vec![Vec::new(); k];
    for (i, &l) in labels.iter().enumerate() {
        groups[l].push(i);
    }
    groups.retain(|g| !g.is_empty());
    let clustering = Clustering::from_groups(groups, ids.len(), "labels")?;
    let cv = cv_summary(&clustering, &y)?;
    let mr = maximum_range(&clustering, &y)?;
    let s = cv.stats;
    let mut out = String::from("output,clusters,q1,median,q3,iqr,whisker_lo,whisker_hi,mr\n");
    out.push_str(&format!(
        "{},{},{},{},{},{},{},{},{}\n",
        y.name,
        clustering.k,
        s.q1,
        s.median,
        s.q3,
        s.iqr,
        s.whisker_lo,
        s.whisker_hi,
        mr
    ));
    out.push_str("# cluster,cv\n");
    for (l, v) in cv.cvs.iter().enumerate() {
        out.push_str(&format!("# {l},{v}\n"));
    }
    Ok(out)
}

/// Write a synthetic population as pipeline inputs (`schema.txt`,
/// `features.csv`, `outputs.csv`) plus a `config.toml` that runs on them.
pub fn write_synthetic(spec: &SyntheticSpec, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    let (fm, y) = crate::dataset::generate_synthetic(spec)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let names: Vec<String> = fm.columns().iter().map(|c| c.name.clone()).collect();
    let schema = Schema::new(names.iter().map(ColumnSchema::numeric).collect())?;
    let mut features = String::from("id");
    for n in &names {
        features.push(',');
        features.push_str(n);
    }
    features.push('\n');
    for (i, id) in fm.ids().iter().enumerate() {
        features.push_str(id);
        for j in 0..fm.d() {
            features.push(',');
            features.push_str(&fm.x()[(i, j)].to_string());
        }
        features.push('\n');
    }
    let write = |name: &str, text: &str| {
        let p = dir.join(name);
        fs::write(&p, text).map_err(|e| Error::io(&p, e))
    };
    write("schema.txt", &schema.to_text())?;
    write("features.csv", &features)?;
    write("outputs.csv", &outputs_to_csv(&[y]))?;
    let mut cfg = PipelineConfig::default();
    cfg.dataset.engineer = EngineerMode::None;
    cfg.run.ks.retain(|&k| k <= spec.n);
    if cfg.run.ks.is_empty() {
        cfg.run.ks = vec![spec.n.min(2)];
    }
    write("config.toml", &cfg.to_toml()?)?;
    Ok(dir.join("config.toml"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips() {
        let mut cfg = PipelineConfig::default();
        cfg.itml.upper = Some(1.5);
        cfg.training.ids = vec!["a".into()];
        let text = cfg.to_toml().unwrap();
        assert_eq!(PipelineConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_config_fills_defaults() {
        let cfg = PipelineConfig::from_toml("[run]\nks = [3]\nmethods = [\"euclidean\"]\n").unwrap();
        assert_eq!(cfg.run.ks, vec![3]);
        assert_eq!(cfg.training.fraction, 0.40);
        assert_eq!(cfg.constraints.rho_macro, 5);
        assert!(PipelineConfig::from_toml("[run]\nbogus = 1\n").is_err());
        assert!(PipelineConfig::from_toml("[run]\nmethods = [\"knn\"]\n").is_err());
    }

    #[test]
    fn validation_rejects_bad_values() {
        let mut cfg = PipelineConfig::default();
        cfg.training.fraction = 1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = PipelineConfig::default();
        cfg.run.ks = vec![0];
        assert!(cfg.validate().is_err());
        let mut cfg = PipelineConfig::default();
        cfg.run.methods.clear();
        assert!(cfg.validate().is_err());
        let mut cfg = PipelineConfig::default();
        cfg.itml.upper = Some(3.0);
        cfg.itml.lower = Some(1.0);
        assert!(cfg.validate().is_err());
        assert!(PipelineConfig::default().validate().is_ok());
    }

    #[test]
    fn lock_blocks_second_writer_and_drop_cleans() {
        let tmp = tempfile::tempdir().unwrap();
        let mut a = OutputDir::open(tmp.path()).unwrap();
        assert!(OutputDir::open(tmp.path()).is_err());
        a.stage("x.txt", "1").unwrap();
        drop(a);
        assert!(!tmp.path().join("x.txt").exists());
        assert!(!tmp.path().join(LOCK_FILE).exists());
        let mut b = OutputDir::open(tmp.path()).unwrap();
        b.stage("x.txt", "2").unwrap();
        b.commit().unwrap();
        assert_eq!(fs::read_to_string(tmp.path().join("x.txt")).unwrap(), "2");
    }

    #[test]
    fn method_names_parse() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("nope".parse::<Method>().is_err());
    }
}
