use std::collections::BTreeMap;
use std::fmt::Display;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use meshgrow::features::{assemble_features_with, FeatureOptions, CHANNEL_NAMES};
use meshgrow::mesh::{load_mesh, save_mesh};
use meshgrow::metrics::emit_report;
use meshgrow::nn::gradcheck::run_gradcheck;
use meshgrow::nn::load_checkpoint;
use meshgrow::synth::{generate_dataset, SynthConfig};
use meshgrow::train::{
    curvedness_baseline, evaluate_checkpoints, kfold_split, load_dataset, read_manifest, run_experiment,
    save_experiment, ExperimentConfig, SplitFile, TrainError,
};
use meshgrow::voxel::{load_mask, mesh_from_masks, MeshMode};

const SEED_ENV: &str = "MESHGROW_SEED";

#[derive(Debug, Parser)]
#[command(name = "meshgrow", version, about = "Mesh-based growth classification pipeline")]
struct Cli {
    /// Master seed. Falls back to the config file, then $MESHGROW_SEED, then 0.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "info")]
    log_level: log::LevelFilter,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a network input mesh from voxel masks.
    MeshFromMask(MeshFromMaskArgs),
    /// Write the per-edge input features of a mesh as CSV.
    Features(FeaturesArgs),
    /// Generate a labelled synthetic dataset.
    Synth(SynthArgs),
    /// Cross-validated training from an experiment config.
    Train(TrainArgs),
    /// Re-score trained runs from their checkpoints.
    Eval(EvalArgs),
    /// Finite-difference check of every layer's gradients.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args, Serialize)]
struct MeshFromMaskArgs {
    /// Lesion mask sidecar (`*.mask.json`).
    #[arg(long)]
    lesion: PathBuf,
    /// Vessel mask sidecar, used in roi mode.
    #[arg(long)]
    vessels: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "uia")]
    mode: MeshMode,
    #[arg(long, default_value_t = 20.0)]
    cube_mm: f64,
    /// Defaults to 1000 (uia) or 2000 (roi).
    #[arg(long)]
    target_edges: Option<usize>,
    /// Output mesh (.obj or .off).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct FeaturesArgs {
    #[arg(long)]
    mesh: PathBuf,
    #[arg(long)]
    with_coords: bool,
    /// Midpoints relative to the enclosed-volume centroid.
    #[arg(long, requires = "with_coords")]
    center_coords: bool,
    /// Output CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct SynthArgs {
    /// JSON synth config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    growing_frac: Option<f64>,
    #[arg(long, value_enum)]
    mode: Option<MeshMode>,
    #[arg(long)]
    write_masks: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct EvalArgs {
    /// Training output directory; repeat to report several models.
    #[arg(long = "run", required = true)]
    runs: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct GradcheckArgs {
    /// Directory for gradcheck.json and run.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failure reported as one JSON line on stderr.
#[derive(Debug)]
struct Failure {
    kind: &'static str,
    message: String,
    exit: u8,
}

impl Failure {
    fn runtime(kind: &'static str, e: impl Display) -> Self {
        Self {
            kind,
            message: e.to_string(),
            exit: 1,
        }
    }

    fn config(e: impl Display) -> Self {
        Self {
            kind: "config",
            message: e.to_string(),
            exit: 2,
        }
    }
}

impl From<TrainError> for Failure {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(_) => Failure::config(e),
            TrainError::Io(_) => Failure::runtime("io", e),
            _ => Failure::runtime("train", e),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Failure + '_ {
    move |e| Failure::runtime("io", format!("{}: {e}", path.display()))
}

fn sha256_file(path: &Path) -> Result<String, Failure> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Provenance record written next to every output.
struct RunRecord {
    command: &'static str,
    config: Value,
    seed: Option<u64>,
    threads: usize,
    inputs: BTreeMap<String, String>,
}

impl RunRecord {
    fn new(command: &'static str, config: impl Serialize, seed: Option<u64>, threads: usize) -> Self {
        let config = serde_json::to_value(config).expect("config serializes");
        log::info!("{command} config: {config}");
        Self {
            command,
            config,
            seed,
            threads,
            inputs: BTreeMap::new(),
        }
    }

    fn input(&mut self, path: &Path) -> CmdResult {
        let h = sha256_file(path)?;
        self.inputs.insert(path.display().to_string(), h);
        Ok(())
    }

    fn write(&self, dir: &Path) -> CmdResult {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let v = json!({
            "command": self.command,
            "version": env!("CARGO_PKG_VERSION"),
            "seed": self.seed,
            "threads": self.threads,
            "config": self.config,
            "inputs": self.inputs,
        });
        let path = dir.join("run.json");
        let mut s = serde_json::to_string_pretty(&v).expect("json value");
        s.push('\n');
        std::fs::write(&path, s).map_err(io_err(&path))
    }
}

fn parent_dir(p: &Path) -> PathBuf {
    match p.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn env_seed() -> Result<Option<u64>, Failure> {
    match std::env::var(SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Failure::config(format!("{SEED_ENV}={s:?} is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

/// Flag, then config file, then environment, then 0.
fn resolve_seed(flag: Option<u64>, config: Option<u64>) -> Result<u64, Failure> {
    Ok(match flag.or(config) {
        Some(s) => s,
        None => env_seed()?.unwrap_or(0),
    })
}

fn mesh_from_mask(a: &MeshFromMaskArgs, threads: usize) -> CmdResult {
    let voxel = |e: meshgrow::voxel::VoxelError| Failure::runtime("voxel", e);
    let mut rec = RunRecord::new("mesh-from-mask", a, None, threads);
    let lesion = load_mask(&a.lesion).map_err(voxel)?;
    rec.input(&a.lesion)?;
    let vessels = match &a.vessels {
        Some(p) => {
            rec.input(p)?;
            Some(load_mask(p).map_err(voxel)?)
        }
        None => None,
    };
    if a.mode == MeshMode::Roi && vessels.is_none() {
        log::warn!("roi mode without --vessels: the region holds the lesion only");
    }
    let target = a.target_edges.unwrap_or(a.mode.default_edge_budget());
    let mesh = mesh_from_masks(vessels.as_ref(), &lesion, a.mode, a.cube_mm, target).map_err(voxel)?;
    log::info!(
        "mesh: {} vertices, {} faces, {} edges (target {target})",
        mesh.vertex_count(),
        mesh.face_count(),
        mesh.edge_count()
    );
    std::fs::create_dir_all(parent_dir(&a.out)).map_err(io_err(&a.out))?;
    save_mesh(&mesh, &a.out).map_err(|e| Failure::runtime("mesh", e))?;
    rec.write(&parent_dir(&a.out))
}

fn features(a: &FeaturesArgs, threads: usize) -> CmdResult {
    let mut rec = RunRecord::new("features", a, None, threads);
    rec.input(&a.mesh)?;
    let mesh = load_mesh(&a.mesh).map_err(|e| Failure::runtime("mesh", e))?;
    let opts = FeatureOptions {
        with_coords: a.with_coords,
        center_coords: a.center_coords,
    };
    let f = assemble_features_with(&mesh, &opts).map_err(|e| Failure::runtime("features", e))?;
    std::fs::create_dir_all(parent_dir(&a.out)).map_err(io_err(&a.out))?;
    let csv_err = |e: csv::Error| Failure::runtime("io", e);
    let mut w = csv::Writer::from_path(&a.out).map_err(csv_err)?;
    w.write_record(&CHANNEL_NAMES[..f.nrows()]).map_err(csv_err)?;
    for col in f.columns() {
        w.write_record(col.iter().map(|v| v.to_string())).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(&a.out))?;
    rec.write(&parent_dir(&a.out))
}

fn synth(a: &SynthArgs, seed_flag: Option<u64>, threads: usize) -> CmdResult {
    let (mut cfg, from_file) = match &a.config {
        Some(p) => {
            let s = std::fs::read_to_string(p).map_err(io_err(p))?;
            let v: Value = serde_json::from_str(&s).map_err(Failure::config)?;
            let has_seed = v.get("seed").is_some();
            (serde_json::from_value::<SynthConfig>(v).map_err(Failure::config)?, has_seed)
        }
        None => (SynthConfig::default(), false),
    };
    if let Some(n) = a.n {
        cfg.n_samples = n;
    }
    if let Some(f) = a.growing_frac {
        cfg.growing_fraction = f;
    }
    if let Some(m) = a.mode {
        cfg.mode = m;
    }
    cfg.write_masks |= a.write_masks;
    cfg.seed = resolve_seed(seed_flag, from_file.then_some(cfg.seed))?;
    cfg.validate().map_err(Failure::config)?;
    let mut rec = RunRecord::new("synth", &cfg, Some(cfg.seed), threads);
    if let Some(p) = &a.config {
        rec.input(p)?;
    }
    let rows = generate_dataset(&cfg, &a.out).map_err(|e| match e {
        meshgrow::synth::SynthError::Config(_) => Failure::config(e),
        _ => Failure::runtime("synth", e),
    })?;
    let growing = rows.iter().filter(|r| r.label == meshgrow::train::Label::Growing).count();
    log::info!("wrote {} samples ({growing} growing) to {}", rows.len(), a.out.display());
    rec.write(&a.out)
}

fn write_json(path: &Path, v: &impl Serialize) -> CmdResult {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    std::fs::write(path, s).map_err(io_err(path))
}

fn manifest_inputs(rec: &mut RunRecord, manifest: &Path) -> CmdResult {
    rec.input(manifest)?;
    let base = parent_dir(manifest);
    for row in read_manifest(manifest)? {
        rec.input(&base.join(&row.mesh_path))?;
    }
    Ok(())
}

fn train(a: &TrainArgs, seed_flag: Option<u64>, threads: usize) -> CmdResult {
    let mut exp = ExperimentConfig::load(&a.config).map_err(|e| match e {
        TrainError::Io(_) => Failure::runtime("io", format!("{}: {e}", a.config.display())),
        other => Failure::config(other),
    })?;
    exp.manifest = std::fs::canonicalize(&exp.manifest).map_err(io_err(&exp.manifest))?;
    exp.seed = Some(resolve_seed(seed_flag, exp.seed)?);
    let cfg = exp.train_config(0)?;
    let name = exp.model_name();
    let mut rec = RunRecord::new("train", &exp, exp.seed, threads);
    rec.input(&a.config)?;
    manifest_inputs(&mut rec, &exp.manifest)?;

    let samples = load_dataset(&exp.manifest, &exp.features)?;
    log::info!("loaded {} samples from {}", samples.len(), exp.manifest.display());
    let split = match &exp.split_file {
        Some(p) => {
            rec.input(p)?;
            let s = SplitFile::load(p)?;
            if s.k != cfg.k_folds {
                return Err(Failure::config(format!(
                    "split file has {} folds, config asks for {}",
                    s.k, cfg.k_folds
                )));
            }
            s
        }
        None => {
            let labels: Vec<_> = samples.iter().map(|s| s.label).collect();
            let groups: Vec<_> = samples.iter().map(|s| s.group_id.clone()).collect();
            kfold_split(&labels, &groups, cfg.k_folds, cfg.seed, exp.split_mode)?
        }
    };
    std::fs::create_dir_all(&a.out).map_err(io_err(&a.out))?;
    write_json(&a.out.join("experiment.json"), &exp)?;
    split.save(&a.out.join("split.json"))?;

    let (base_mean, base_std) = curvedness_baseline(&samples, &split)?;
    log::info!("mean-curvedness baseline AUC {base_mean:.3} ({base_std:.3})");
    let result = run_experiment(&name, &cfg, exp.features, &samples, &split)?;
    for f in &result.folds {
        log::info!(
            "fold {}: best macro F1 {:.3} at epoch {}",
            f.fold,
            f.best_macro_f1,
            f.best_epoch
        );
    }
    save_experiment(&result, &a.out)?;
    let ag = &result.report.aggregate;
    log::info!(
        "{name}: accuracy {} F1 {} sensitivity {} specificity {} AUC {}",
        ag.accuracy.formatted(),
        ag.macro_f1.formatted(),
        ag.sensitivity.formatted(),
        ag.specificity.formatted(),
        ag.auc.formatted()
    );
    rec.write(&a.out)
}

fn eval(a: &EvalArgs, threads: usize) -> CmdResult {
    let mut rec = RunRecord::new("eval", a, None, threads);
    let mut reports = Vec::with_capacity(a.runs.len());
    for run in &a.runs {
        let exp_path = run.join("experiment.json");
        rec.input(&exp_path)?;
        let text = std::fs::read_to_string(&exp_path).map_err(io_err(&exp_path))?;
        let exp: ExperimentConfig = serde_json::from_str(&text).map_err(Failure::config)?;
        let split_path = run.join("split.json");
        rec.input(&split_path)?;
        let split = SplitFile::load(&split_path)?;
        manifest_inputs(&mut rec, &exp.manifest)?;
        let samples = load_dataset(&exp.manifest, &exp.features)?;
        let checkpoints = (0..split.k)
            .map(|k| {
                let p = run.join(format!("fold_{k}")).join("best.ckpt");
                rec.input(&p)?;
                load_checkpoint(&p).map_err(|e| Failure::runtime("checkpoint", format!("{}: {e}", p.display())))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let report = evaluate_checkpoints(&exp.model_name(), &samples, &split, &checkpoints)?;
        log::info!("{}: AUC {}", report.model, report.aggregate.auc.formatted());
        reports.push(report);
    }
    emit_report(&reports, &a.out).map_err(|e| Failure::runtime("metrics", e))?;
    rec.write(&a.out)
}

fn gradcheck(a: &GradcheckArgs, seed: u64, threads: usize) -> Result<bool, Failure> {
    let rec = RunRecord::new("gradcheck", a, Some(seed), threads);
    let report = run_gradcheck(seed).map_err(|e| Failure::runtime("nn", e))?;
    let mut out = std::io::stdout().lock();
    for e in report.layers.iter().chain(&report.end_to_end) {
        writeln!(
            out,
            "{:<44} {:>6} checked {:>3} skipped  max rel err {:.3e}  tol {:.0e}  {}",
            e.name,
            e.checked,
            e.skipped,
            e.max_rel_error,
            e.tolerance,
            if e.passed() { "PASS" } else { "FAIL" }
        )
        .map_err(|e| Failure::runtime("io", e))?;
    }
    writeln!(
        out,
        "max layer error {:.3e}, max end-to-end error {:.3e}, skipped {:.2}% of end-to-end coordinates",
        report.max_layer_error(),
        report.max_end_to_end_error(),
        100.0 * report.skipped_fraction()
    )
    .map_err(|e| Failure::runtime("io", e))?;
    if let Some(dir) = &a.out {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        write_json(&dir.join("gradcheck.json"), &report)?;
        rec.write(dir)?;
    }
    Ok(report.passed())
}

fn dispatch(cli: &Cli) -> Result<bool, Failure> {
    let t = cli.threads;
    match &cli.command {
        Command::MeshFromMask(a) => mesh_from_mask(a, t).map(|_| true),
        Command::Features(a) => features(a, t).map(|_| true),
        Command::Synth(a) => synth(a, cli.seed, t).map(|_| true),
        Command::Train(a) => train(a, cli.seed, t).map(|_| true),
        Command::Eval(a) => eval(a, t).map(|_| true),
        Command::Gradcheck(a) => gradcheck(a, resolve_seed(cli.seed, None)?, t),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(cli.log_level)
        .format_timestamp(None)
        .init();
    if cli.threads == 0 {
        eprintln!("{}", json!({"error": "--threads must be at least 1", "kind": "usage"}));
        return ExitCode::from(2);
    }
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
        eprintln!("{}", json!({"error": e.to_string(), "kind": "runtime"}));
        return ExitCode::from(1);
    }
    match dispatch(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("{}", json!({"error": "gradient check failed", "kind": "gradcheck"}));
            ExitCode::from(1)
        }
        Err(f) => {
            eprintln!("{}", json!({"error": f.message, "kind": f.kind}));
            ExitCode::from(f.exit)
        }
    }
}
