//! File-level commands behind the command line front-end: run
//! configuration, GeoLife ingestion, training, evaluation, prediction and
//! STL inspection.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{
    label_join, parse_labels, parse_plt, read_dataset_file, segment_stay_points, write_dataset_file, JoinStats,
    StayPointConfig,
};
use crate::mapping::GridConfig;
use crate::metrics::{confusion, macro_metrics, MetricsReport};
use crate::model::{
    encode_checkpoint, load_checkpoint, train, CnnConfig, EpochLog, FeatureConfig, TcnConfig, TrainSpec,
    TrainedModel,
};
use crate::partition::{train_partitioned, FusedPrediction, PartitionSet, PartitionedModel};
use crate::stl::{stl_decompose, InjectionConfig, StlConfig};
use crate::tensor::AdamConfig;
use crate::trajectory::{LabelMap, Trajectory};

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const TRAIN_LOG_FILE: &str = "train_log.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TcnSection {
    pub hidden_units: usize,
    pub kernel: usize,
    pub dilation_base: usize,
    pub levels: usize,
    pub dropout: f64,
}

impl Default for TcnSection {
    fn default() -> Self {
        let t = TcnConfig::default();
        TcnSection {
            hidden_units: t.hidden_units,
            kernel: t.kernel,
            dilation_base: t.dilation_base,
            levels: t.levels,
            dropout: t.dropout,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSection {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        let a = AdamConfig::default();
        OptimizerSection {
            lr: a.lr,
            batch_size: 64,
            epochs: 20,
            beta1: a.beta1,
            beta2: a.beta2,
            eps: a.eps,
        }
    }
}

/// STL settings; omitted spans follow from `period`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StlSection {
    pub period: usize,
    pub inner_iterations: Option<usize>,
    pub seasonal_span: Option<usize>,
    pub trend_span: Option<usize>,
    pub lowpass_span: Option<usize>,
}

impl Default for StlSection {
    fn default() -> Self {
        StlSection {
            period: StlConfig::default().period,
            inner_iterations: None,
            seasonal_span: None,
            trend_span: None,
            lowpass_span: None,
        }
    }
}

impl StlSection {
    pub fn resolve(&self) -> StlConfig {
        let base = StlConfig::with_period(self.period);
        StlConfig {
            period: self.period,
            inner_iterations: self.inner_iterations.unwrap_or(base.inner_iterations),
            seasonal_span: self.seasonal_span.unwrap_or(base.seasonal_span),
            trend_span: self.trend_span.unwrap_or(base.trend_span),
            lowpass_span: self.lowpass_span.unwrap_or(base.lowpass_span),
        }
    }
}

/// One JSON file describing a whole run. Missing keys take their defaults;
/// unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub grid: GridConfig,
    pub seq_len: usize,
    pub tcn: TcnSection,
    pub cnn: CnnConfig,
    pub optimizer: OptimizerSection,
    pub stl: StlSection,
    pub inject_weight: f64,
    pub staypoint: StayPointConfig,
    pub split: f64,
    pub seed: u64,
    pub partition_file: Option<PathBuf>,
    pub parallel: bool,
    pub label_map: LabelMap,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            grid: GridConfig::default(),
            seq_len: 300,
            tcn: TcnSection::default(),
            cnn: CnnConfig::default(),
            optimizer: OptimizerSection::default(),
            stl: StlSection::default(),
            inject_weight: InjectionConfig::default().weight,
            staypoint: StayPointConfig::default(),
            split: 0.8,
            seed: 0,
            partition_file: None,
            parallel: false,
            label_map: LabelMap::default(),
        }
    }
}

impl PipelineConfig {
    /// Parses and validates a config file. A relative `partition_file` is
    /// resolved against the config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: PipelineConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if let (Some(pf), Some(dir)) = (&cfg.partition_file, path.parent()) {
            if pf.is_relative() {
                cfg.partition_file = Some(dir.join(pf));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.staypoint.validate()?;
        self.train_spec().validate()
    }

    pub fn feature_config(&self) -> FeatureConfig {
        FeatureConfig {
            grid: self.grid,
            seq_len: self.seq_len,
            stl: self.stl.resolve(),
            inject: InjectionConfig {
                weight: self.inject_weight,
            },
        }
    }

    pub fn train_spec(&self) -> TrainSpec {
        TrainSpec {
            features: self.feature_config(),
            cnn: self.cnn.clone(),
            tcn: TcnConfig {
                in_channels: crate::model::SEQ_CHANNELS,
                hidden_units: self.tcn.hidden_units,
                kernel: self.tcn.kernel,
                dilation_base: self.tcn.dilation_base,
                levels: self.tcn.levels,
                dropout: self.tcn.dropout,
                seq_len: self.seq_len,
            },
            optimizer: AdamConfig {
                lr: self.optimizer.lr,
                beta1: self.optimizer.beta1,
                beta2: self.optimizer.beta2,
                eps: self.optimizer.eps,
            },
            batch_size: self.optimizer.batch_size,
            epochs: self.optimizer.epochs,
            split: self.split,
            fixed_alpha: None,
            label_map: self.label_map.clone(),
        }
    }

    pub fn partitions(&self) -> Result<Option<PartitionSet>> {
        self.partition_file.as_deref().map(PartitionSet::load).transpose()
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = create(path)?;
    for r in rows {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<_>>()?;
    out.sort();
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct IngestSummary {
    pub users: usize,
    pub skipped_users: usize,
    pub files: usize,
    pub segments: usize,
    pub per_mode: BTreeMap<String, usize>,
    pub unlabeled_points: usize,
    pub unmapped_points: usize,
}

/// Reads a GeoLife tree (`Data/<user>/Trajectory/*.plt` plus
/// `Data/<user>/labels.txt`), keeps labeled runs, cuts them at stay points
/// and writes the canonical dataset ordered by user, file and time. Users without
/// `labels.txt` are skipped. `root` may be the tree root or its `Data`
/// directory.
pub fn cmd_ingest(root: &Path, cfg: &PipelineConfig, out: &Path) -> Result<IngestSummary> {
    if !root.is_dir() {
        return Err(Error::io(root, std::io::Error::new(std::io::ErrorKind::NotFound, "not a directory")));
    }
    let data_dir = if root.join("Data").is_dir() { root.join("Data") } else { root.to_path_buf() };
    let mut summary = IngestSummary::default();
    let mut stats = JoinStats::default();
    let mut segments = Vec::new();
    for user_dir in sorted_entries(&data_dir)?.into_iter().filter(|p| p.is_dir()) {
        let user = user_dir.file_name().unwrap_or_default().to_string_lossy().into_owned();
        let labels_path = user_dir.join("labels.txt");
        if !labels_path.is_file() {
            summary.skipped_users += 1;
            continue;
        }
        summary.users += 1;
        let labels_bytes = fs::read(&labels_path).map_err(|e| Error::io(&labels_path, e))?;
        let intervals = parse_labels(&labels_bytes).map_err(|e| in_file(e, &labels_path))?;
        let traj_dir = user_dir.join("Trajectory");
        if !traj_dir.is_dir() {
            continue;
        }
        for plt in sorted_entries(&traj_dir)? {
            if plt.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() != Some("plt") {
                continue;
            }
            summary.files += 1;
            let stem = plt.file_stem().unwrap_or_default().to_string_lossy();
            let bytes = fs::read(&plt).map_err(|e| Error::io(&plt, e))?;
            let traj = match parse_plt(&format!("{user}/{stem}"), &bytes) {
                Ok(t) => t,
                Err(Error::EmptyTrajectory) => continue,
                Err(e) => return Err(in_file(e, &plt)),
            };
            let (runs, s) = label_join(&traj, &intervals, &cfg.label_map);
            stats += s;
            for run in &runs {
                segments.extend(segment_stay_points(run, &cfg.staypoint));
            }
        }
    }
    if segments.is_empty() {
        return Err(Error::Data(format!("no labeled segments under {}", root.display())));
    }
    for s in &segments {
        let name = s.mode.as_ref().map_or("?", |m| m.name.as_str());
        *summary.per_mode.entry(name.to_string()).or_default() += 1;
    }
    summary.segments = segments.len();
    summary.unlabeled_points = stats.unlabeled_points;
    summary.unmapped_points = stats.unmapped_points;
    write_dataset_file(out, &segments)?;
    Ok(summary)
}

fn in_file(e: Error, path: &Path) -> Error {
    match e {
        Error::Parse { line, msg } => Error::Parse {
            line,
            msg: format!("{}: {msg}", path.display()),
        },
        other => other,
    }
}

/// Written next to per-partition checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub partitions: PartitionSet,
    /// Partition name to checkpoint file (relative to the manifest);
    /// `None` for skipped partitions.
    pub checkpoints: BTreeMap<String, Option<String>>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainSummary {
    /// Checkpoint file per partition, `"all"` without partitions.
    pub checkpoints: BTreeMap<String, PathBuf>,
    pub skipped: Vec<String>,
    pub final_val_acc: BTreeMap<String, Option<f64>>,
}

fn last_acc(log: &[EpochLog]) -> Option<f64> {
    log.last().and_then(|e| e.val_acc)
}

/// Trains one model, or one per partition when the config names a
/// partition file. Writes checkpoints and JSON Lines epoch logs into
/// `out_dir`; partitioned runs also get a manifest.
pub fn cmd_train(dataset: &Path, cfg: &PipelineConfig, out_dir: &Path) -> Result<TrainSummary> {
    cfg.validate()?;
    let data = read_dataset_file(dataset, &cfg.label_map)?;
    let spec = cfg.train_spec();
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut summary = TrainSummary {
        checkpoints: BTreeMap::new(),
        skipped: Vec::new(),
        final_val_acc: BTreeMap::new(),
    };
    match cfg.partitions()? {
        None => {
            let outcome = train(&data, &spec, cfg.seed)?;
            let path = out_dir.join(CHECKPOINT_FILE);
            fs::write(&path, encode_checkpoint(&outcome.model)?).map_err(|e| Error::io(&path, e))?;
            write_jsonl(&out_dir.join(TRAIN_LOG_FILE), &outcome.log)?;
            summary.final_val_acc.insert("all".into(), last_acc(&outcome.log));
            summary.checkpoints.insert("all".into(), path);
        }
        Some(ps) => {
            let runs = train_partitioned(&data, &ps, &spec, cfg.seed, cfg.parallel)?;
            let mut checkpoints = BTreeMap::new();
            for run in &runs {
                match &run.outcome {
                    crate::partition::PartitionOutcome::Trained(o) => {
                        let file = format!("{}.ckpt", run.name);
                        let path = out_dir.join(&file);
                        fs::write(&path, encode_checkpoint(&o.model)?).map_err(|e| Error::io(&path, e))?;
                        write_jsonl(&out_dir.join(format!("{}.log.jsonl", run.name)), &o.log)?;
                        checkpoints.insert(run.name.clone(), Some(file));
                        summary.final_val_acc.insert(run.name.clone(), last_acc(&o.log));
                        summary.checkpoints.insert(run.name.clone(), path);
                    }
                    crate::partition::PartitionOutcome::Skipped { .. } => {
                        checkpoints.insert(run.name.clone(), None);
                        summary.skipped.push(run.name.clone());
                    }
                }
            }
            let manifest = Manifest {
                partitions: ps,
                checkpoints,
                seed: cfg.seed,
            };
            write_json(&out_dir.join(MANIFEST_FILE), &manifest)?;
        }
    }
    Ok(summary)
}

/// A trained single model or a set of per-partition models.
#[derive(Debug, Clone)]
pub enum Predictor {
    Single(Box<TrainedModel>),
    Partitioned(PartitionedModel),
}

impl Predictor {
    /// Accepts a checkpoint, a manifest, or a training output directory.
    pub fn load(path: &Path) -> Result<Self> {
        let path = if path.is_dir() {
            let manifest = path.join(MANIFEST_FILE);
            if manifest.is_file() {
                manifest
            } else {
                path.join(CHECKPOINT_FILE)
            }
        } else {
            path.to_path_buf()
        };
        if path.extension().and_then(|e| e.to_str()) != Some("json") {
            return Ok(Predictor::Single(Box::new(load_checkpoint(&path)?)));
        }
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        manifest.partitions.validate()?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut models = BTreeMap::new();
        for (name, file) in &manifest.checkpoints {
            if let Some(file) = file {
                models.insert(name.clone(), load_checkpoint(&base.join(file))?);
            }
        }
        Ok(Predictor::Partitioned(PartitionedModel {
            partitions: manifest.partitions,
            models,
        }))
    }

    pub fn check_compatible(&self, cfg: &PipelineConfig) -> Result<()> {
        let features = cfg.feature_config();
        match self {
            Predictor::Single(m) => m.check_compatible(&features, &cfg.label_map),
            Predictor::Partitioned(p) => p
                .models
                .values()
                .try_for_each(|m| m.check_compatible(&features, &cfg.label_map)),
        }
    }

    /// Predictions sorted by trajectory id.
    pub fn predict(&self, dataset: &[Trajectory]) -> Result<Vec<FusedPrediction>> {
        match self {
            Predictor::Single(m) => {
                let labels = m.predict(dataset)?;
                let mut out = dataset
                    .iter()
                    .zip(labels)
                    .map(|(t, c)| FusedPrediction {
                        traj_id: t.traj_id.clone(),
                        label: m.label_map.label(c),
                    })
                    .collect::<Vec<_>>();
                out.sort_by(|a, b| a.traj_id.cmp(&b.traj_id));
                Ok(out)
            }
            Predictor::Partitioned(p) => p.predict(dataset),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub acc: f64,
    pub per_class: Vec<crate::metrics::ClassMetrics>,
    pub macro_f1: f64,
    /// Scored trajectories.
    pub count: u64,
    /// Trajectories in partitions without a model; not scored.
    pub unclassified: usize,
    /// Rows are true classes, columns predictions.
    pub confusion: Vec<Vec<u64>>,
}

/// Scores fused predictions against the labels in `dataset`.
pub fn score(dataset: &[Trajectory], predictions: &[FusedPrediction], label_map: &LabelMap) -> Result<EvalReport> {
    let truth: BTreeMap<&str, usize> = dataset
        .iter()
        .map(|t| {
            let m = t
                .mode
                .as_ref()
                .ok_or_else(|| Error::Data(format!("{}: evaluation needs a mode label", t.traj_id)))?;
            Ok((t.traj_id.as_str(), m.index))
        })
        .collect::<Result<_>>()?;
    let (mut y, mut p, mut unclassified) = (Vec::new(), Vec::new(), 0);
    for pred in predictions {
        let t = *truth
            .get(pred.traj_id.as_str())
            .ok_or_else(|| Error::Internal(format!("prediction for unknown trajectory {}", pred.traj_id)))?;
        match &pred.label {
            Some(l) => {
                y.push(t);
                p.push(l.index);
            }
            None => unclassified += 1,
        }
    }
    if y.is_empty() && unclassified > 0 {
        return Err(Error::Data("every trajectory is unclassified".into()));
    }
    let cm = confusion(&y, &p, label_map.num_classes())?;
    let MetricsReport {
        acc,
        per_class,
        macro_f1,
        count,
    } = macro_metrics(&cm).with_names(label_map);
    Ok(EvalReport {
        acc,
        per_class,
        macro_f1,
        count,
        unclassified,
        confusion: cm.rows(),
    })
}

pub fn cmd_eval(dataset: &Path, model: &Path, cfg: &PipelineConfig) -> Result<EvalReport> {
    let predictor = Predictor::load(model)?;
    predictor.check_compatible(cfg)?;
    let data = read_dataset_file(dataset, &cfg.label_map)?;
    let predictions = predictor.predict(&data)?;
    score(&data, &predictions, &cfg.label_map)
}

#[derive(Serialize)]
struct PredictionRow<'a> {
    traj_id: &'a str,
    mode: &'a str,
}

/// Writes `{"traj_id", "mode"}` lines sorted by id; returns the count.
pub fn cmd_predict(dataset: &Path, model: &Path, cfg: &PipelineConfig, out: &Path) -> Result<usize> {
    let predictor = Predictor::load(model)?;
    predictor.check_compatible(cfg)?;
    let data = read_dataset_file(dataset, &cfg.label_map)?;
    let predictions = if data.is_empty() { Vec::new() } else { predictor.predict(&data)? };
    let rows: Vec<PredictionRow> = predictions
        .iter()
        .map(|p| PredictionRow {
            traj_id: &p.traj_id,
            mode: p.mode(),
        })
        .collect();
    write_jsonl(out, &rows)?;
    Ok(rows.len())
}

/// Writes the STL components of one trajectory's timestamp series as CSV
/// `v,y,trend,seasonal,residual`; returns the row count.
pub fn cmd_decompose(dataset: &Path, traj_id: &str, cfg: &PipelineConfig, out: &Path) -> Result<usize> {
    let data = read_dataset_file(dataset, &cfg.label_map)?;
    let traj = data
        .iter()
        .find(|t| t.traj_id == traj_id)
        .ok_or_else(|| Error::Invalid(format!("no trajectory with id {traj_id:?}")))?;
    let dec = stl_decompose(&traj.timestamps(), &cfg.stl.resolve())?;
    let mut w = create(out)?;
    let io = |e| Error::io(out, e);
    writeln!(w, "v,y,trend,seasonal,residual").map_err(io)?;
    for v in 0..dec.y.len() {
        writeln!(
            w,
            "{v},{},{},{},{}",
            dec.y[v], dec.trend[v], dec.seasonal[v], dec.residual[v]
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)?;
    Ok(dec.y.len())
}
