//! Experiment configuration, registry, dispatch and metrics emission.
//!
//! A run is described by an [`ExperimentConfig`] (usually a JSON file), executed
//! by [`run_experiment`] into a [`RunOutput`], and written to disk with
//! [`write_outputs`]. Every random stream is derived from the config seed, so a
//! run is a pure function of its config.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::crossbar::{CrossbarConfig, TiledMatrix};
use crate::cs::{recover_image, sparse_signal, CsConfig, CsProblem, GrayImage};
use crate::devices::{plan_set_train, set_staircase, DeviceParams, DeviceState, Pulse};
use crate::dnn::{infer_with_drift, train, MixedPrecisionNet, NetConfig, SplitDataset};
use crate::linalg::{norm2, Matrix};
use crate::psnn::{encoding_task, target_raster_task, Encoder, EncodingTaskConfig, TargetRasterConfig};
use crate::reservoir::{echo_state_check, narma_benchmark, NarmaConfig, Reservoir};
use crate::rng::{indexed_substream, substream};
use crate::snn::{correlation_experiment, snn_efficiency_favorable, CorrelationConfig, EfficiencyModel};
use crate::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Base device parameters that the `device` block overrides.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviceProfile {
    #[default]
    Default,
    Ideal,
}

impl DeviceProfile {
    pub fn params(self) -> DeviceParams {
        match self {
            DeviceProfile::Default => DeviceParams::default(),
            DeviceProfile::Ideal => DeviceParams::ideal(),
        }
    }
}

/// `"psnn"` block.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PsnnConfig {
    pub encoding: EncodingTaskConfig,
    pub target_raster: TargetRasterConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub seed: u64,
    #[serde(default)]
    pub device_profile: DeviceProfile,
    /// Fully resolved device parameters (profile plus overrides).
    #[serde(default)]
    pub device: DeviceParams,
    #[serde(default)]
    pub crossbar: CrossbarConfig,
    #[serde(default)]
    pub cs: CsConfig,
    #[serde(default)]
    pub dnn: NetConfig,
    #[serde(default)]
    pub snn: CorrelationConfig,
    #[serde(default)]
    pub efficiency: EfficiencyModel,
    #[serde(default)]
    pub psnn: PsnnConfig,
    #[serde(default)]
    pub reservoir: NarmaConfig,
    /// Directory with the four MNIST IDX files; the bundled digits otherwise.
    #[serde(default)]
    pub data: Option<PathBuf>,
    /// PGM image for the image-mode compressed-sensing run.
    #[serde(default)]
    pub image: Option<PathBuf>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

const TOP_LEVEL_KEYS: &[&str] = &[
    "experiment",
    "seed",
    "device_profile",
    "device",
    "crossbar",
    "cs",
    "dnn",
    "snn",
    "efficiency",
    "psnn",
    "reservoir",
    "data",
    "image",
    "output_dir",
];

impl ExperimentConfig {
    /// Registry defaults for `experiment` with the given seed.
    pub fn new(experiment: &str, seed: u64) -> Result<Self> {
        parse_config(&json!({ "experiment": experiment, "seed": seed }).to_string()).map(|(c, _)| c)
    }

    pub fn validate(&self) -> Result<()> {
        find_experiment(&self.experiment)?;
        self.device.validate()
    }
}

/// Parses a JSON config, filling defaults. Unknown top-level keys are dropped
/// and returned as warnings; unknown keys inside a block are errors.
pub fn parse_config(text: &str) -> Result<(ExperimentConfig, Vec<String>)> {
    let mut root: Value = serde_json::from_str(text)
        .map_err(|e| Error::Parse(format!("line {} column {}: {e}", e.line(), e.column())))?;
    let obj = root.as_object_mut().ok_or_else(|| Error::Config("config must be a JSON object".into()))?;
    let mut warnings = Vec::new();
    let unknown: Vec<String> = obj.keys().filter(|k| !TOP_LEVEL_KEYS.contains(&k.as_str())).cloned().collect();
    for k in unknown {
        obj.remove(&k);
        warnings.push(format!("ignoring unknown key '{k}'; valid keys: {}", TOP_LEVEL_KEYS.join(", ")));
    }
    if !obj.contains_key("seed") {
        return Err(Error::Config("missing required key 'seed'".into()));
    }
    let name = obj
        .get("experiment")
        .ok_or_else(|| Error::Config("missing required key 'experiment'".into()))?
        .as_str()
        .ok_or_else(|| Error::Config("'experiment' must be a string".into()))?;
    let info = find_experiment(name)?;
    let defaults: Value = serde_json::from_str(info.defaults)?;
    for (k, v) in defaults.as_object().expect("registry defaults are objects") {
        match (obj.get_mut(k), v) {
            (None, _) => {
                obj.insert(k.clone(), v.clone());
            }
            (Some(Value::Object(user)), Value::Object(d)) if k == "device" => {
                for (dk, dv) in d {
                    user.entry(dk.clone()).or_insert_with(|| dv.clone());
                }
            }
            _ => {}
        }
    }
    let profile: DeviceProfile = match obj.get("device_profile") {
        Some(v) => serde_json::from_value(v.clone()).map_err(|e| Error::Config(format!("device_profile: {e}")))?,
        None => DeviceProfile::Default,
    };
    let mut device = serde_json::to_value(profile.params())?;
    if let Some(over) = obj.get("device") {
        let over = over.as_object().ok_or_else(|| Error::Config("'device' must be an object".into()))?;
        let base = device.as_object_mut().expect("device params serialize to an object");
        for (k, v) in over {
            if !base.contains_key(k) {
                let valid: Vec<&str> = base.keys().map(String::as_str).collect();
                return Err(Error::Config(format!("unknown device key '{k}'; valid keys: {}", valid.join(", "))));
            }
            base.insert(k.clone(), v.clone());
        }
    }
    obj.insert("device".into(), device);
    let cfg: ExperimentConfig = serde_json::from_value(root).map_err(|e| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok((cfg, warnings))
}

/// Reads and parses a config file, logging warnings.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path)?;
    let (cfg, warnings) = parse_config(&text)?;
    for w in warnings {
        log::warn!("{}: {w}", path.display());
    }
    Ok(cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ExperimentInfo {
    pub name: &'static str,
    pub module: &'static str,
    pub figure: &'static str,
    pub summary: &'static str,
    /// JSON object merged under the user's config; `device` merges key-wise.
    pub defaults: &'static str,
}

pub const REGISTRY: &[ExperimentInfo] = &[
    ExperimentInfo {
        name: "device_programming",
        module: "devices",
        figure: "Fig 3",
        summary: "SET staircase and closed-loop programming accuracy",
        defaults: r#"{}"#,
    },
    ExperimentInfo {
        name: "crossbar_mvm",
        module: "crossbar",
        figure: "Fig 2",
        summary: "analog MVM and transpose error against float linear algebra",
        defaults: r#"{}"#,
    },
    ExperimentInfo {
        name: "cs_basic",
        module: "cs",
        figure: "Fig 4",
        summary: "one compressed-sensing problem recovered with AMP on the crossbar",
        defaults: r#"{}"#,
    },
    ExperimentInfo {
        name: "fig4_cs_recovery",
        module: "cs",
        figure: "Fig 4",
        summary: "ideal versus noisy AMP error curves over many seeds",
        defaults: r#"{}"#,
    },
    ExperimentInfo {
        name: "fig6_drift_inference",
        module: "dnn",
        figure: "Fig 6 (methodology)",
        summary: "test accuracy of a crossbar network as conductances drift",
        defaults: r#"{}"#,
    },
    ExperimentInfo {
        name: "fig7_mnist_mixed_precision",
        module: "dnn",
        figure: "Fig 7",
        summary: "mixed-precision training with accumulated updates flushed as pulses",
        defaults: r#"{}"#,
    },
    ExperimentInfo {
        name: "fig9_correlation",
        module: "snn",
        figure: "Fig 9",
        summary: "STDP correlation detection with 1 and 7 devices per synapse",
        defaults: r#"{"device_profile":"ideal","device":{"prog_noise_rel":0.1}}"#,
    },
    ExperimentInfo {
        name: "snn_efficiency",
        module: "snn",
        figure: "Sec 4 inequality",
        summary: "add-versus-multiply cost predicate",
        defaults: r#"{}"#,
    },
    ExperimentInfo {
        name: "fig11_encoding",
        module: "psnn",
        figure: "Fig 11",
        summary: "rate versus Gaussian receptive field time encoding",
        defaults: r#"{}"#,
    },
    ExperimentInfo {
        name: "psnn_target_raster",
        module: "psnn",
        figure: "Sec 4.7",
        summary: "REINFORCE training toward a teacher spike raster",
        defaults: r#"{}"#,
    },
    ExperimentInfo {
        name: "fig14_reservoir",
        module: "reservoir",
        figure: "Fig 14",
        summary: "echo-state network on NARMA-10 with a linear baseline",
        defaults: r#"{}"#,
    },
];

pub fn find_experiment(name: &str) -> Result<&'static ExperimentInfo> {
    REGISTRY.iter().find(|e| e.name == name).ok_or_else(|| Error::UnknownExperiment(name.to_string()))
}

/// One row of metrics. Values are finite and keys are never overwritten.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRecord {
    pub experiment: String,
    pub seed: u64,
    pub timestamp: u64,
    pub version: String,
    pub metrics: BTreeMap<String, f64>,
}

/// `SOURCE_DATE_EPOCH` when set, else 0, so emitted files stay reproducible.
pub fn timestamp() -> u64 {
    std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|v| v.parse().ok()).unwrap_or(0)
}

impl MetricsRecord {
    pub fn new(experiment: &str, seed: u64, metrics: &[(&str, f64)]) -> Result<Self> {
        let mut r = Self {
            experiment: experiment.to_string(),
            seed,
            timestamp: timestamp(),
            version: VERSION.to_string(),
            metrics: BTreeMap::new(),
        };
        for (k, v) in metrics {
            r.insert(k, *v)?;
        }
        Ok(r)
    }

    pub fn insert(&mut self, key: &str, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("metric '{key}' = {value}")));
        }
        if self.metrics.contains_key(key) {
            return Err(Error::Config(format!("metric '{key}' already recorded")));
        }
        self.metrics.insert(key.to_string(), value);
        Ok(())
    }
}

const FIXED_COLUMNS: [&str; 4] = ["experiment", "seed", "timestamp", "version"];

/// CSV text: fixed columns then the sorted union of metric keys.
pub fn metrics_csv(records: &[MetricsRecord]) -> Result<String> {
    let keys: std::collections::BTreeSet<&str> =
        records.iter().flat_map(|r| r.metrics.keys().map(String::as_str)).collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(FIXED_COLUMNS.iter().copied().chain(keys.iter().copied()))?;
    for r in records {
        let mut row = vec![r.experiment.clone(), r.seed.to_string(), r.timestamp.to_string(), r.version.clone()];
        row.extend(keys.iter().map(|k| r.metrics.get(*k).map(|v| format!("{v:?}")).unwrap_or_default()));
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
}

/// Writes `metrics.csv` and `metrics.json` into `dir`, replacing old files.
pub fn emit_metrics(records: &[MetricsRecord], dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let csv_path = dir.join("metrics.csv");
    fs::write(&csv_path, metrics_csv(records)?)?;
    let json_path = dir.join("metrics.json");
    fs::write(&json_path, serde_json::to_string_pretty(records)? + "\n")?;
    Ok(vec![csv_path, json_path])
}

/// A data file produced by a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub contents: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub records: Vec<MetricsRecord>,
    /// Nested per-experiment detail written as `report.json`.
    pub report: Value,
    pub artifacts: Vec<Artifact>,
}

/// Writes metrics, `report.json` and artifacts to `dir`.
pub fn write_outputs(out: &RunOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths = emit_metrics(&out.records, dir)?;
    let report = dir.join("report.json");
    fs::write(&report, serde_json::to_string_pretty(&out.report)? + "\n")?;
    paths.push(report);
    for a in &out.artifacts {
        let p = dir.join(&a.name);
        fs::write(&p, &a.contents)?;
        paths.push(p);
    }
    Ok(paths)
}

/// Caps the worker pool from `MEMSIM_THREADS`. Call once at startup.
pub fn configure_threads() -> Result<Option<usize>> {
    let Ok(v) = std::env::var("MEMSIM_THREADS") else {
        return Ok(None);
    };
    let n: usize = v.parse().map_err(|_| Error::Config(format!("MEMSIM_THREADS must be a positive integer, got '{v}'")))?;
    if n == 0 {
        return Err(Error::Config("MEMSIM_THREADS must be >= 1".into()));
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(e.to_string()))?;
    Ok(Some(n))
}

/// Ordered map over `0..n`, in parallel when the feature is on.
fn par_map<T: Send>(n: usize, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

fn csv_table(header: &[&str], rows: &[Vec<f64>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r.iter().map(|v| format!("{v:?}")))?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Runs the configured experiment. Nothing is written to disk.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    log::info!("running {} (seed {})", cfg.experiment, cfg.seed);
    match cfg.experiment.as_str() {
        "device_programming" => run_device_programming(cfg),
        "crossbar_mvm" => run_crossbar_mvm(cfg),
        "cs_basic" => run_cs_basic(cfg),
        "fig4_cs_recovery" => run_cs_recovery(cfg),
        "fig6_drift_inference" => run_drift(cfg),
        "fig7_mnist_mixed_precision" => run_mixed_precision(cfg),
        "fig9_correlation" => run_correlation(cfg),
        "snn_efficiency" => run_efficiency(cfg),
        "fig11_encoding" => run_encoding(cfg, &[Encoder::Rate, Encoder::Grf]),
        "psnn_target_raster" => run_target_raster(cfg),
        "fig14_reservoir" => run_reservoir(cfg),
        other => Err(Error::UnknownExperiment(other.to_string())),
    }
}

fn run_device_programming(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let p = cfg.device;
    let mut rng = substream(cfg.seed, "devices/staircase");
    let mut cell = DeviceState::new(&p);
    let mut rows = Vec::new();
    for k in 0..=100u32 {
        if k > 0 {
            cell.apply_pulse(&p, Pulse::set(1), 0.0, &mut rng)?;
        }
        rows.push(vec![f64::from(k), cell.g_programmed, set_staircase(&p, p.g_min, k)]);
    }
    let mut rng = substream(cfg.seed, "devices/targets");
    let (tol, max_iter) = (0.005, 200);
    let (mut err, mut iters, mut unconverged, mut open_err) = (0.0, 0.0, 0.0, 0.0);
    let n = 200;
    for _ in 0..n {
        let target = rng.random_range(p.g_min..p.g_max);
        let mut c = DeviceState::new(&p);
        let o = c.program_iterative(&p, target, tol, max_iter, 0.0, &mut rng)?;
        err += (c.g_programmed - target).abs() / p.range();
        iters += f64::from(o.iters);
        unconverged += f64::from(u8::from(!o.converged));
        let mut c = DeviceState::new(&p);
        c.program_open_loop(&p, target, 0.0, &mut rng)?;
        open_err += (c.g_programmed - target).abs() / p.range();
    }
    let nf = f64::from(n);
    let pulses_to_mid = f64::from(plan_set_train(&p, p.g_min, 0.5 * (p.g_min + p.g_max)).0);
    let rec = MetricsRecord::new(
        &cfg.experiment,
        cfg.seed,
        &[
            ("g_after_10_pulses", rows[10][1]),
            ("g_after_100_pulses", rows[100][1]),
            ("pulses_to_mid_range", pulses_to_mid),
            ("iterative_mean_error_rel", err / nf),
            ("iterative_mean_cycles", iters / nf),
            ("iterative_unconverged", unconverged),
            ("open_loop_mean_error_rel", open_err / nf),
        ],
    )?;
    Ok(RunOutput {
        report: json!({ "device": p, "staircase": rows }),
        artifacts: vec![Artifact { name: "staircase.csv".into(), contents: csv_table(&["pulse", "g", "g_noiseless"], &rows)? }],
        records: vec![rec],
    })
}

fn run_crossbar_mvm(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let mut rng = substream(cfg.seed, "crossbar/matrix");
    let (rows, cols) = (300, 200);
    let a = Matrix::uniform(rows, cols, cfg.crossbar.w_max, &mut rng);
    let x: Vec<f64> = (0..cols).map(|_| rng.random_range(-1.0..1.0)).collect();
    let y: Vec<f64> = (0..rows).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut t = TiledMatrix::from_config(rows, cols, cfg.device, &cfg.crossbar)?;
    let stats = t.program_matrix(&a, cfg.crossbar.programming, &mut substream(cfg.seed, "crossbar/program"))?;
    let mut read = substream(cfg.seed, "crossbar/read");
    let rel = |got: &[f64], want: &[f64]| {
        let d: Vec<f64> = got.iter().zip(want).map(|(g, w)| g - w).collect();
        norm2(&d) / norm2(want)
    };
    let fwd = rel(&t.mvm(&x, &mut read)?, &a.matvec(&x)?);
    let bwd = rel(&t.mvm_transpose(&y, &mut read)?, &a.matvec_t(&y)?);
    let rec = MetricsRecord::new(
        &cfg.experiment,
        cfg.seed,
        &[
            ("mvm_rel_error", fwd),
            ("mvm_transpose_rel_error", bwd),
            ("program_pulses", stats.pulses as f64),
            ("program_unconverged", stats.unconverged as f64),
        ],
    )?;
    Ok(RunOutput { report: json!({ "rows": rows, "cols": cols, "tiles": t.tile_grid() }), artifacts: vec![], records: vec![rec] })
}

/// Final NMSE curve of one problem with replicate index `i`.
fn cs_curve(c: &CsConfig, params: DeviceParams, xbar: &CrossbarConfig, seed: u64, i: u64) -> Result<Vec<f64>> {
    let mut prob_rng = indexed_substream(seed, "cs/problem", i);
    let problem = CsProblem::gaussian(c.n, c.m, c.k, params, xbar, &mut prob_rng)?;
    let x = sparse_signal(c.n, c.k, &mut prob_rng);
    let mut read = indexed_substream(seed, "cs/read", i);
    let y = problem.compress(&x, &mut read)?;
    Ok(problem.amp_recover(&y, c.iters, c.schedule, Some(&x), &mut read)?.nmse_db)
}

fn run_cs_basic(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let curve = cs_curve(&cfg.cs, cfg.device, &cfg.crossbar, cfg.seed, 0)?;
    let rows: Vec<Vec<f64>> = curve.iter().enumerate().map(|(i, v)| vec![(i + 1) as f64, *v]).collect();
    let mut artifacts = vec![Artifact { name: "nmse_curve.csv".into(), contents: csv_table(&["iteration", "nmse_db"], &rows)? }];
    let mut metrics = vec![
        ("final_nmse_db", *curve.last().expect("iters >= 1")),
        ("best_nmse_db", curve.iter().copied().fold(f64::INFINITY, f64::min)),
    ];
    let mut report = json!({ "cs": cfg.cs, "device": cfg.device, "nmse_db": curve });
    if let Some(path) = &cfg.image {
        let img = GrayImage::from_pgm(&fs::read(path)?)?;
        let mut rng = substream(cfg.seed, "cs/image");
        let problem = CsProblem::gaussian(cfg.cs.n, cfg.cs.m, cfg.cs.k, cfg.device, &cfg.crossbar, &mut rng)?;
        let rec = recover_image(&problem, &img, cfg.cs.iters, cfg.cs.schedule, &mut rng)?;
        metrics.push(("image_final_nmse_db", *rec.nmse_db.last().expect("iters >= 1")));
        report["image_nmse_db"] = json!(rec.nmse_db);
        artifacts.push(Artifact { name: "recovered.pgm".into(), contents: rec.image.to_pgm() });
    }
    Ok(RunOutput { records: vec![MetricsRecord::new(&cfg.experiment, cfg.seed, &metrics)?], report, artifacts })
}

fn run_cs_recovery(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let c = &cfg.cs;
    if c.seeds == 0 {
        return Err(Error::InvalidParam("cs.seeds must be >= 1".into()));
    }
    let ideal = par_map(c.seeds, |i| cs_curve(c, DeviceParams::ideal(), &cfg.crossbar, cfg.seed, i as u64))?;
    let noisy = par_map(c.seeds, |i| cs_curve(c, cfg.device, &cfg.crossbar, cfg.seed, i as u64))?;
    let mean_curve = |curves: &[Vec<f64>]| -> Vec<f64> { (0..c.iters).map(|t| mean(&curves.iter().map(|v| v[t]).collect::<Vec<_>>())).collect() };
    let (mi, mn) = (mean_curve(&ideal), mean_curve(&noisy));
    let tail = (c.iters / 5).max(1);
    let floor = |v: &[f64]| mean(&v[v.len() - tail..]);
    let rows: Vec<Vec<f64>> = (0..c.iters).map(|t| vec![(t + 1) as f64, mi[t], mn[t]]).collect();
    let rec = MetricsRecord::new(
        &cfg.experiment,
        cfg.seed,
        &[
            ("ideal_final_nmse_db", mi[c.iters - 1]),
            ("ideal_floor_db", floor(&mi)),
            ("noisy_final_nmse_db", mn[c.iters - 1]),
            ("noisy_floor_db", floor(&mn)),
            ("seeds", c.seeds as f64),
        ],
    )?;
    Ok(RunOutput {
        records: vec![rec],
        report: json!({ "cs": c, "device": cfg.device, "ideal_mean_db": mi, "noisy_mean_db": mn }),
        artifacts: vec![Artifact {
            name: "nmse_curves.csv".into(),
            contents: csv_table(&["iteration", "ideal_nmse_db", "noisy_nmse_db"], &rows)?,
        }],
    })
}

fn dnn_data(cfg: &ExperimentConfig) -> Result<SplitDataset> {
    match &cfg.data {
        Some(dir) => SplitDataset::mnist_dir(dir),
        None => Ok(SplitDataset::digits()),
    }
}

fn trained_net(cfg: &ExperimentConfig, data: &SplitDataset) -> Result<(MixedPrecisionNet, crate::dnn::TrainingReport)> {
    let mut net_cfg = cfg.dnn.clone();
    net_cfg.train.seed = cfg.seed;
    if let Some(first) = net_cfg.sizes.first_mut() {
        *first = data.train.input_dim();
    }
    let mut net = MixedPrecisionNet::random(&net_cfg, cfg.device, &cfg.crossbar, &mut substream(cfg.seed, "dnn/init"))?;
    let report = train(&mut net, data, &net_cfg.train)?;
    Ok((net, report))
}

fn run_mixed_precision(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let data = dnn_data(cfg)?;
    let (_, report) = trained_net(cfg, &data)?;
    let last = report.epochs.last().expect("epochs >= 1");
    let rec = MetricsRecord::new(
        &cfg.experiment,
        cfg.seed,
        &[
            ("final_test_acc", last.acc),
            ("final_train_loss", last.loss),
            ("best_test_acc", report.epochs.iter().map(|e| e.acc).fold(0.0, f64::max)),
            ("total_pulses", report.epochs.iter().map(|e| e.pulses as f64).sum()),
            ("total_clamps", report.epochs.iter().map(|e| e.clamps as f64).sum()),
        ],
    )?;
    let rows: Vec<Vec<f64>> = report
        .epochs
        .iter()
        .enumerate()
        .map(|(i, e)| vec![(i + 1) as f64, e.loss, e.acc, e.pulses as f64])
        .collect();
    Ok(RunOutput {
        records: vec![rec],
        report: json!({ "dnn": cfg.dnn, "device": cfg.device, "training": report }),
        artifacts: vec![Artifact { name: "epochs.csv".into(), contents: csv_table(&["epoch", "loss", "test_acc", "pulses"], &rows)? }],
    })
}

fn run_drift(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let data = dnn_data(cfg)?;
    let (net, mut report) = trained_net(cfg, &data)?;
    let times: Vec<f64> = cfg.dnn.drift_times.iter().map(|t| t * cfg.device.drift_t0).collect();
    report.drift_curve = infer_with_drift(&net, &data.test, &times, &substream(cfg.seed, "dnn/drift-read"))?;
    let mut rec = MetricsRecord::new(&cfg.experiment, cfg.seed, &[("trained_test_acc", report.epochs.last().expect("epochs >= 1").acc)])?;
    for p in &report.drift_curve {
        rec.insert(&format!("acc_t{:e}", p.t), p.acc)?;
    }
    let rows: Vec<Vec<f64>> = report.drift_curve.iter().map(|p| vec![p.t, p.acc]).collect();
    Ok(RunOutput {
        records: vec![rec],
        report: json!({ "dnn": cfg.dnn, "device": cfg.device, "training": report }),
        artifacts: vec![Artifact { name: "drift_curve.csv".into(), contents: csv_table(&["t", "test_acc"], &rows)? }],
    })
}

fn run_correlation(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let n_multi = if cfg.snn.n_per_synapse > 1 { cfg.snn.n_per_synapse } else { 7 };
    let runs = par_map(2, |i| {
        let n = if i == 0 { 1 } else { n_multi };
        correlation_experiment(&CorrelationConfig { n_per_synapse: n, ..cfg.snn.clone() }, &cfg.device, cfg.seed)
    })?;
    let (one, multi) = (&runs[0], &runs[1]);
    let rec = MetricsRecord::new(
        &cfg.experiment,
        cfg.seed,
        &[
            ("d_n1", one.separation),
            ("d_multi", multi.separation),
            ("n_multi", n_multi as f64),
            ("post_spikes_n1", one.post_spikes as f64),
            ("post_spikes_multi", multi.post_spikes as f64),
        ],
    )?;
    let mut rows = Vec::new();
    for (r, n) in [(one, 1.0), (multi, n_multi as f64)] {
        for (i, e) in r.histogram.edges.windows(2).enumerate() {
            rows.push(vec![n, e[0], e[1], r.histogram.correlated[i] as f64, r.histogram.uncorrelated[i] as f64]);
        }
    }
    Ok(RunOutput {
        records: vec![rec],
        report: json!({ "snn": cfg.snn, "device": cfg.device, "n1": one, "multi": multi }),
        artifacts: vec![Artifact {
            name: "weight_histograms.csv".into(),
            contents: csv_table(&["n_per_synapse", "bin_lo", "bin_hi", "correlated", "uncorrelated"], &rows)?,
        }],
    })
}

fn run_efficiency(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let (ok, margin) = snn_efficiency_favorable(&cfg.efficiency)?;
    let rec = MetricsRecord::new(&cfg.experiment, cfg.seed, &[("favorable", f64::from(u8::from(ok))), ("margin", margin)])?;
    Ok(RunOutput { records: vec![rec], report: json!({ "model": cfg.efficiency, "favorable": ok, "margin": margin }), artifacts: vec![] })
}

/// The band classification task for each listed encoder.
pub fn run_encoding(cfg: &ExperimentConfig, encoders: &[Encoder]) -> Result<RunOutput> {
    if encoders.is_empty() {
        return Err(Error::InvalidParam("no encoders requested".into()));
    }
    let runs = par_map(encoders.len(), |i| encoding_task(&cfg.psnn.encoding, encoders[i], cfg.seed))?;
    let mut rec = MetricsRecord::new(&cfg.experiment, cfg.seed, &[])?;
    let mut report = json!({ "config": cfg.psnn.encoding });
    let mut header = vec!["epoch".to_string()];
    for r in &runs {
        let tag = serde_json::to_value(r.encoder)?.as_str().unwrap_or("encoder").to_string();
        rec.insert(&format!("{tag}_final_loss"), r.final_loss)?;
        rec.insert(&format!("{tag}_input_spikes"), r.input_spikes_per_sample)?;
        header.push(format!("{tag}_loss"));
        report[tag] = serde_json::to_value(r)?;
    }
    let epochs = runs[0].train.loss_curve.len();
    let rows: Vec<Vec<f64>> =
        (0..epochs).map(|e| std::iter::once((e + 1) as f64).chain(runs.iter().map(|r| r.train.loss_curve[e])).collect()).collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    Ok(RunOutput {
        records: vec![rec],
        report,
        artifacts: vec![Artifact { name: "loss_curves.csv".into(), contents: csv_table(&header, &rows)? }],
    })
}

fn run_target_raster(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let r = target_raster_task(&cfg.psnn.target_raster, cfg.seed)?;
    let rec = MetricsRecord::new(
        &cfg.experiment,
        cfg.seed,
        &[("initial_loss", r.initial_loss), ("final_loss", r.final_loss), ("reduction", 1.0 - r.final_loss / r.initial_loss)],
    )?;
    Ok(RunOutput { records: vec![rec], report: json!({ "config": cfg.psnn.target_raster, "result": r }), artifacts: vec![] })
}

fn run_reservoir(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let r = narma_benchmark(&cfg.reservoir, cfg.seed)?;
    let res = Reservoir::new(&cfg.reservoir.reservoir, &mut substream(cfg.seed, "reservoir/weights"))?;
    let esp = echo_state_check(&res, 500, cfg.seed)?;
    let rec = MetricsRecord::new(
        &cfg.experiment,
        cfg.seed,
        &[
            ("train_nrmse", r.train_nrmse),
            ("test_nrmse", r.test_nrmse),
            ("linear_test_nrmse", r.linear_test_nrmse),
            ("esp_final_distance", esp.final_distance),
        ],
    )?;
    let rows: Vec<Vec<f64>> = r.test_target.iter().zip(&r.test_prediction).enumerate().map(|(t, (y, p))| vec![t as f64, *y, *p]).collect();
    Ok(RunOutput {
        records: vec![rec],
        report: json!({ "config": cfg.reservoir, "result": r, "echo_state": esp }),
        artifacts: vec![Artifact { name: "prediction.csv".into(), contents: csv_table(&["t", "target", "prediction"], &rows)? }],
    })
}
