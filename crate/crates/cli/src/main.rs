//! `memsim` command-line front end.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use memsim_core::harness::{self, ExperimentConfig, RunOutput, REGISTRY};
use memsim_core::psnn::Encoder;
use memsim_core::Error;
use serde_json::{json, Map, Value};

#[derive(Parser)]
#[command(name = "memsim", version, about = "Memristive in-memory computing simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// JSON experiment config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for every random stream (default 0 without a config).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, or a file ending in .csv (metrics) or .json (report).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Print the experiment registry.
    List,
    /// Run any registered experiment from a config file.
    Run {
        /// Experiment name; overrides the config's.
        #[arg(long)]
        experiment: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Single-device programming.
    Devices {
        #[command(subcommand)]
        cmd: DevicesCmd,
    },
    /// Crossbar matrix-vector products.
    Crossbar {
        #[command(subcommand)]
        cmd: CrossbarCmd,
    },
    /// Compressed sensing with AMP recovery.
    Cs(CsArgs),
    /// Crossbar-backed neural network training and drift inference.
    Dnn {
        #[command(subcommand)]
        cmd: DnnCmd,
    },
    /// Spiking networks: STDP correlation detection and cost model.
    Snn {
        #[command(subcommand)]
        cmd: SnnCmd,
    },
    /// Probabilistic spiking networks.
    Psnn {
        #[command(subcommand)]
        cmd: PsnnCmd,
    },
    /// Echo-state network benchmark.
    Reservoir(ReservoirArgs),
}

#[derive(Subcommand)]
enum DevicesCmd {
    /// SET staircase and closed-loop programming accuracy.
    Program(Common),
}

#[derive(Subcommand)]
enum CrossbarCmd {
    /// MVM error against float linear algebra.
    Mvm(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum CsMode {
    /// One problem.
    Recover,
    /// Ideal versus noisy curves over `cs.seeds` problems.
    Sweep,
}

#[derive(Clone, Copy, ValueEnum)]
enum NoiseProfile {
    Ideal,
    Default,
}

#[derive(Args)]
struct CsArgs {
    #[arg(value_enum, default_value = "recover")]
    mode: CsMode,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long, value_enum)]
    noise_profile: Option<NoiseProfile>,
    /// Binary PGM image to compress block-wise.
    #[arg(long)]
    image: Option<PathBuf>,
    /// Where to write the recovered PGM (default: next to the outputs).
    #[arg(long)]
    image_out: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct DnnArgs {
    /// Directory with the MNIST IDX files (bundled 8x8 digits otherwise).
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand)]
enum DnnCmd {
    /// Mixed-precision training.
    Train(DnnArgs),
    /// Train, then evaluate under conductance drift.
    Infer(DnnArgs),
}

#[derive(Subcommand)]
enum SnnCmd {
    /// STDP correlation detection, single versus multi-device synapses.
    Correlation {
        #[arg(long)]
        n_per_synapse: Option<usize>,
        #[arg(long)]
        steps: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Add-versus-multiply cost predicate.
    Efficiency {
        #[arg(long)]
        c_add: Option<f64>,
        #[arg(long)]
        c_mul: Option<f64>,
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        ratio_t_dt: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PsnnTask {
    TargetRaster,
    Classify,
}

#[derive(Clone, Copy, ValueEnum)]
enum EncoderArg {
    Rate,
    Grf,
    Both,
}

#[derive(Subcommand)]
enum PsnnCmd {
    /// REINFORCE training of a GLM spiking network.
    Train {
        #[arg(long, value_enum, default_value = "classify")]
        task: PsnnTask,
        #[arg(long, value_enum, default_value = "both")]
        encoder: EncoderArg,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ReservoirTask {
    Narma10,
}

#[derive(Clone, Copy, ValueEnum)]
enum NodeKindArg {
    Tanh,
    Volatile,
}

#[derive(Args)]
struct ReservoirArgs {
    #[arg(long, value_enum, default_value = "narma10")]
    task: ReservoirTask,
    #[arg(long)]
    nodes: Option<usize>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    leak: Option<f64>,
    #[arg(long, value_enum)]
    node_kind: Option<NodeKindArg>,
    #[command(flatten)]
    common: Common,
}

/// Failure with the exit code it maps to.
struct Failure {
    code: u8,
    error: Error,
}

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        let code = match error {
            Error::UnknownExperiment(_) | Error::Config(_) | Error::Parse(_) => 2,
            _ => 1,
        };
        Self { code, error }
    }
}

fn usage(msg: String) -> Failure {
    Failure { code: 2, error: Error::Config(msg) }
}

/// Sets `root[path...] = v`, creating objects on the way.
fn set(root: &mut Value, path: &[&str], v: Value) {
    let mut cur = root;
    for key in &path[..path.len() - 1] {
        let obj = cur.as_object_mut().expect("config nodes are objects");
        cur = obj.entry(key.to_string()).or_insert_with(|| Value::Object(Map::new()));
    }
    cur[path[path.len() - 1]] = v;
}

fn set_opt<T: Into<Value>>(root: &mut Value, path: &[&str], v: Option<T>) {
    if let Some(v) = v {
        set(root, path, v.into());
    }
}

/// Reads `--config` (if any), pins the experiment and applies `--seed`.
fn base_config(common: &Common, experiment: &str) -> Result<Value, Failure> {
    let mut root = match &common.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(Error::from)?;
            let v: Value = serde_json::from_str(&text)
                .map_err(|e| Error::Parse(format!("{}: line {} column {}: {e}", p.display(), e.line(), e.column())))?;
            if let Some(name) = v.get("experiment").and_then(Value::as_str) {
                if name != experiment {
                    return Err(usage(format!("config is for '{name}' but this command runs '{experiment}'")));
                }
            }
            v
        }
        None => json!({ "seed": 0 }),
    };
    if !root.is_object() {
        return Err(Error::Config("config must be a JSON object".into()).into());
    }
    set(&mut root, &["experiment"], json!(experiment));
    set_opt(&mut root, &["seed"], common.seed);
    Ok(root)
}

fn finish(root: Value) -> Result<ExperimentConfig, Failure> {
    let (cfg, warnings) = harness::parse_config(&root.to_string())?;
    for w in warnings {
        log::warn!("{w}");
    }
    Ok(cfg)
}

fn write(out: &RunOutput, target: &Path) -> Result<Vec<PathBuf>, Failure> {
    let ext = target.extension().and_then(|e| e.to_str());
    if !matches!(ext, Some("csv") | Some("json")) {
        return Ok(harness::write_outputs(out, target)?);
    }
    let dir = target.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(Error::from)?;
    let body = if ext == Some("csv") {
        harness::metrics_csv(&out.records)?
    } else {
        serde_json::to_string_pretty(&json!({ "metrics": out.records, "report": out.report })).map_err(Error::from)? + "\n"
    };
    std::fs::write(target, body).map_err(Error::from)?;
    let mut paths = vec![target.to_path_buf()];
    for a in &out.artifacts {
        let p = dir.join(&a.name);
        std::fs::write(&p, &a.contents).map_err(Error::from)?;
        paths.push(p);
    }
    Ok(paths)
}

fn run_and_write(cfg: &ExperimentConfig, common: &Common, out: RunOutput) -> Result<(), Failure> {
    let target = common.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    for p in write(&out, &target)? {
        println!("{}", p.display());
    }
    Ok(())
}

fn simple(common: &Common, experiment: &str, edit: impl FnOnce(&mut Value)) -> Result<(), Failure> {
    let mut root = base_config(common, experiment)?;
    edit(&mut root);
    let cfg = finish(root)?;
    let out = harness::run_experiment(&cfg)?;
    run_and_write(&cfg, common, out)
}

fn dispatch(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::List => {
            for e in REGISTRY {
                println!("{:<28} {:<10} {:<20} {}", e.name, e.module, e.figure, e.summary);
            }
            Ok(())
        }
        Command::Run { experiment, common } => {
            let name = match (&experiment, &common.config) {
                (Some(n), _) => n.clone(),
                (None, Some(p)) => harness::load_config(p)?.experiment,
                (None, None) => return Err(usage("run needs --experiment or --config".into())),
            };
            harness::find_experiment(&name)?;
            simple(&common, &name, |_| {})
        }
        Command::Devices { cmd: DevicesCmd::Program(c) } => simple(&c, "device_programming", |_| {}),
        Command::Crossbar { cmd: CrossbarCmd::Mvm(c) } => simple(&c, "crossbar_mvm", |_| {}),
        Command::Cs(a) => {
            let name = match a.mode {
                CsMode::Recover => "cs_basic",
                CsMode::Sweep => "fig4_cs_recovery",
            };
            let mut root = base_config(&a.common, name)?;
            set_opt(&mut root, &["cs", "n"], a.n);
            set_opt(&mut root, &["cs", "m"], a.m);
            set_opt(&mut root, &["cs", "k"], a.k);
            set_opt(&mut root, &["cs", "iters"], a.iters);
            set_opt(&mut root, &["cs", "seeds"], a.seeds);
            set_opt(&mut root, &["image"], a.image.as_ref().map(|p| p.display().to_string()));
            if let Some(p) = a.noise_profile {
                set(&mut root, &["device_profile"], json!(match p {
                    NoiseProfile::Ideal => "ideal",
                    NoiseProfile::Default => "default",
                }));
            }
            let cfg = finish(root)?;
            let mut out = harness::run_experiment(&cfg)?;
            if let Some(dst) = &a.image_out {
                if let Some(i) = out.artifacts.iter().position(|x| x.name == "recovered.pgm") {
                    let art = out.artifacts.remove(i);
                    std::fs::write(dst, art.contents).map_err(Error::from)?;
                    println!("{}", dst.display());
                }
            }
            run_and_write(&cfg, &a.common, out)
        }
        Command::Dnn { cmd } => {
            let (a, name) = match cmd {
                DnnCmd::Train(a) => (a, "fig7_mnist_mixed_precision"),
                DnnCmd::Infer(a) => (a, "fig6_drift_inference"),
            };
            simple(&a.common, name, |root| {
                set_opt(root, &["data"], a.data.as_ref().map(|p| p.display().to_string()));
                set_opt(root, &["dnn", "train", "epochs"], a.epochs);
            })
        }
        Command::Snn { cmd: SnnCmd::Correlation { n_per_synapse, steps, common } } => {
            simple(&common, "fig9_correlation", |root| {
                set_opt(root, &["snn", "n_per_synapse"], n_per_synapse);
                set_opt(root, &["snn", "steps"], steps);
            })
        }
        Command::Snn { cmd: SnnCmd::Efficiency { c_add, c_mul, p, ratio_t_dt, common } } => {
            simple(&common, "snn_efficiency", |root| {
                set_opt(root, &["efficiency", "c_add"], c_add);
                set_opt(root, &["efficiency", "c_mul"], c_mul);
                set_opt(root, &["efficiency", "p"], p);
                set_opt(root, &["efficiency", "ratio_t_dt"], ratio_t_dt);
            })
        }
        Command::Psnn { cmd: PsnnCmd::Train { task, encoder, common } } => match task {
            PsnnTask::TargetRaster => simple(&common, "psnn_target_raster", |_| {}),
            PsnnTask::Classify => {
                let cfg = finish(base_config(&common, "fig11_encoding")?)?;
                let encoders: &[Encoder] = match encoder {
                    EncoderArg::Rate => &[Encoder::Rate],
                    EncoderArg::Grf => &[Encoder::Grf],
                    EncoderArg::Both => &[Encoder::Rate, Encoder::Grf],
                };
                let out = harness::run_encoding(&cfg, encoders)?;
                run_and_write(&cfg, &common, out)
            }
        },
        Command::Reservoir(a) => {
            let ReservoirTask::Narma10 = a.task;
            simple(&a.common, "fig14_reservoir", |root| {
                set_opt(root, &["reservoir", "reservoir", "n_nodes"], a.nodes);
                set_opt(root, &["reservoir", "reservoir", "rho"], a.rho);
                set_opt(root, &["reservoir", "reservoir", "leak"], a.leak);
                if let Some(k) = a.node_kind {
                    set(root, &["reservoir", "reservoir", "node_kind"], json!(match k {
                        NodeKindArg::Tanh => "tanh",
                        NodeKindArg::Volatile => "volatile",
                    }));
                }
            })
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = harness::configure_threads().map_err(Failure::from).and_then(|_| dispatch(cli.command));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let body = json!({ "error": f.error.kind(), "message": f.error.to_string(), "exit_code": f.code });
            eprintln!("{body}");
            ExitCode::from(f.code)
        }
    }
}
