//! `dpm` — pipeline driver: photon tracing, path tracing, training,
//! density-estimation rendering, compositing, metrics, and the evaluation
//! grid. Every run writes a `run.json` manifest with the resolved
//! parameters and content hashes of inputs and outputs; identical manifests
//! reproduce byte-identical outputs regardless of `--threads`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use dpm_core::density::KernelKind;
use dpm_core::eval::{eval_grid, render_ls_layer, collect_ls_points, Estimator, EvalGridConfig};
use dpm_core::image::{composite, read_image, write_image, ImageFormat};
use dpm_core::kdtree::KnnIndex;
use dpm_core::metrics::{psnr, rmse, ssim};
use dpm_core::nn::{
    load_checkpoint, make_training_set, save_checkpoint, train, CheckpointMeta, DatasetConfig,
    Head, NetParams, TrainConfig, FEATURE_DIM,
};
use dpm_core::photon::{load_photons, save_photons, trace_photons};
use dpm_core::pt::{render_pt, Mode, RenderJob};
use dpm_core::scene::load_scene;

#[derive(Parser)]
#[command(name = "dpm", version, about = "Deep photon mapping pipeline")]
struct Cli {
    /// Base seed for every stochastic stage.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Worker threads; 0 means one per core. Affects wall time only.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Directory the run manifest is written to.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Full,
    #[value(name = "no_ls")]
    NoLs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum HeadArg {
    Kernel,
    Direct,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Ours,
    Classic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum KernelArg {
    Constant,
    Epanechnikov,
    Cone,
}

impl KernelArg {
    fn to_kind(self) -> KernelKind<f64> {
        match self {
            KernelArg::Constant => KernelKind::Constant,
            KernelArg::Epanechnikov => KernelKind::Epanechnikov,
            KernelArg::Cone => KernelKind::Cone { c: 1.1 },
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Trace photon paths and store the light-specular photon map.
    TracePhotons {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        n_emit: u64,
        #[arg(long, default_value_t = 8)]
        max_bounces: u32,
        /// Output photon dump (binary).
        #[arg(long)]
        out: PathBuf,
    },
    /// Path-trace the scene to a PFM/PPM image.
    RenderPt {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        spp: u32,
        #[arg(long, value_enum, default_value_t = ModeArg::Full)]
        mode: ModeArg,
        #[arg(long, default_value_t = 8)]
        max_bounces: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a training set from the scenes and train a network.
    Train {
        #[arg(long, required = true, num_args = 1..)]
        scenes: Vec<PathBuf>,
        /// Photons per query; 50 and 500 are the paper-analog settings.
        #[arg(long)]
        k: usize,
        #[arg(long)]
        steps: u64,
        #[arg(long, value_enum, default_value_t = HeadArg::Kernel)]
        head: HeadArg,
        #[arg(long)]
        out_ckpt: PathBuf,
        /// Optional CSV of (step, window-averaged loss).
        #[arg(long)]
        loss_curve: Option<PathBuf>,
        #[arg(long, default_value_t = 20_000)]
        photons_per_scene: u64,
        #[arg(long, default_value_t = 4_000)]
        points_per_scene: usize,
        #[arg(long, default_value_t = 4)]
        maps_per_scene: usize,
        #[arg(long, default_value_t = 100)]
        reference_factor: u64,
        #[arg(long, default_value_t = 8)]
        batch_size: usize,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
    },
    /// Render the light-specular layer by photon density estimation.
    RenderPm {
        #[arg(long)]
        scene: PathBuf,
        /// Photon dump produced by trace-photons.
        #[arg(long)]
        photons: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long, value_enum)]
        method: MethodArg,
        /// Checkpoint; required for --method ours.
        #[arg(long)]
        ckpt: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = KernelArg::Epanechnikov)]
        kernel: KernelArg,
        /// Camera samples per pixel for shading-point selection.
        #[arg(long, default_value_t = 4)]
        spp_ls: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pixelwise sum of the PM caustic layer and the no-LS PT layer.
    Composite {
        #[arg(long)]
        pm: PathBuf,
        #[arg(long)]
        pt: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// RMSE grid over (K, M) cells for classic PM and the trained networks.
    EvalGrid {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "50,500")]
        ks: Vec<usize>,
        /// Photon paths to emit per M column.
        #[arg(long, value_delimiter = ',')]
        ms: Vec<u64>,
        #[arg(long)]
        ckpt50: Option<PathBuf>,
        #[arg(long)]
        ckpt500: Option<PathBuf>,
        /// Reference LS-layer image.
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        out_table: PathBuf,
        #[arg(long, default_value_t = 2)]
        spp_ls: usize,
        #[arg(long, default_value_t = 8)]
        max_bounces: u32,
    },
    /// Print rmse, psnr, and ssim between two images.
    Metrics {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap uses exit code 2 for usage errors.
            e.exit();
        }
    };
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .ok();
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(RunError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(2)
        }
        Err(RunError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

enum RunError {
    Usage(String),
    Runtime(String),
}

/// Tag a module's error so failures name their subsystem.
fn tag<E: std::fmt::Display>(module: &'static str) -> impl Fn(E) -> RunError {
    move |e| RunError::Runtime(format!("[{module}] {e}"))
}

fn format_for(path: &Path) -> Result<ImageFormat, RunError> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("pfm") => Ok(ImageFormat::Pfm),
        Some("ppm") => Ok(ImageFormat::Ppm),
        other => Err(RunError::Usage(format!(
            "image path {} must end in .pfm or .ppm (got {:?})",
            path.display(),
            other
        ))),
    }
}

fn sha256_hex(path: &Path) -> Result<String, RunError> {
    let bytes = std::fs::read(path)
        .map_err(|e| RunError::Runtime(format!("[cli] hashing {}: {e}", path.display())))?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

struct ManifestBuilder<'a> {
    cli: &'a Cli,
    command: &'static str,
    params: Value,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl<'a> ManifestBuilder<'a> {
    fn new(cli: &'a Cli, command: &'static str, params: Value) -> Self {
        Self { cli, command, params, inputs: Vec::new(), outputs: Vec::new() }
    }

    fn input(&mut self, path: &Path) -> &mut Self {
        self.inputs.push(path.to_owned());
        self
    }

    fn output(&mut self, path: &Path) -> &mut Self {
        self.outputs.push(path.to_owned());
        self
    }

    fn write(&self) -> Result<(), RunError> {
        let hash_all = |paths: &[PathBuf]| -> Result<Value, RunError> {
            let mut map = serde_json::Map::new();
            for p in paths {
                map.insert(p.display().to_string(), Value::String(sha256_hex(p)?));
            }
            Ok(Value::Object(map))
        };
        let manifest = json!({
            "command": self.command,
            "seed": self.cli.seed,
            "params": self.params,
            "inputs": hash_all(&self.inputs)?,
            "outputs": hash_all(&self.outputs)?,
            "execution": { "threads": self.cli.threads },
        });
        std::fs::create_dir_all(&self.cli.out_dir)
            .map_err(|e| RunError::Runtime(format!("[cli] creating out dir: {e}")))?;
        let path = self.cli.out_dir.join("run.json");
        std::fs::write(&path, serde_json::to_string_pretty(&manifest).expect("json") + "\n")
            .map_err(|e| RunError::Runtime(format!("[cli] writing {}: {e}", path.display())))?;
        Ok(())
    }
}

fn run(cli: &Cli) -> Result<(), RunError> {
    match &cli.command {
        Command::TracePhotons { scene, n_emit, max_bounces, out } => {
            let loaded = load_scene(scene).map_err(tag("scene-core"))?;
            let map = trace_photons(&loaded, *n_emit, *max_bounces, cli.seed)
                .map_err(tag("photon-tracer"))?;
            save_photons(&map, out).map_err(tag("photon-tracer"))?;
            println!(
                "traced {} paths, stored {} LS photons -> {}",
                map.n_emitted,
                map.m_valid,
                out.display()
            );
            let mut m = ManifestBuilder::new(cli, "trace-photons", json!({
                "scene": scene.display().to_string(),
                "n_emit": n_emit,
                "max_bounces": max_bounces,
                "out": out.display().to_string(),
            }));
            m.input(scene).output(out);
            m.write()
        }
        Command::RenderPt { scene, spp, mode, max_bounces, out } => {
            if *spp < 1 {
                return Err(RunError::Usage("--spp must be at least 1".into()));
            }
            let format = format_for(out)?;
            let loaded = load_scene(scene).map_err(tag("scene-core"))?;
            let job = RenderJob {
                scene: &loaded,
                spp: *spp,
                max_bounces: *max_bounces,
                mode: match mode {
                    ModeArg::Full => Mode::Full,
                    ModeArg::NoLs => Mode::NoLs,
                },
                seed: cli.seed,
            };
            let img = render_pt(&job);
            write_image(&img, out, format).map_err(tag("compositor-eval"))?;
            println!("rendered {}x{} at {spp} spp -> {}", img.width(), img.height(), out.display());
            let mut m = ManifestBuilder::new(cli, "render-pt", json!({
                "scene": scene.display().to_string(),
                "spp": spp,
                "mode": format!("{mode:?}"),
                "max_bounces": max_bounces,
                "out": out.display().to_string(),
            }));
            m.input(scene).output(out);
            m.write()
        }
        Command::Train {
            scenes,
            k,
            steps,
            head,
            out_ckpt,
            loss_curve,
            photons_per_scene,
            points_per_scene,
            maps_per_scene,
            reference_factor,
            batch_size,
            lr,
        } => {
            if *k < 1 {
                return Err(RunError::Usage("--k must be at least 1".into()));
            }
            let mut loaded = Vec::new();
            for path in scenes {
                loaded.push(load_scene(path).map_err(tag("scene-core"))?);
            }
            let mut ds_cfg = DatasetConfig::new(*k, *photons_per_scene, *points_per_scene, cli.seed);
            ds_cfg.maps_per_scene = *maps_per_scene;
            ds_cfg.reference_factor = *reference_factor;
            let (set, report) = make_training_set(&loaded, &ds_cfg).map_err(tag("neural-kernel"))?;
            for ix in &report.skipped_scenes {
                eprintln!(
                    "warning: scene {} produced no LS photons; skipped",
                    scenes[*ix].display()
                );
            }
            println!("dataset: {} samples (K = {k})", set.samples.len());
            let mut cfg = TrainConfig::new(
                *k,
                match head {
                    HeadArg::Kernel => Head::Kernel,
                    HeadArg::Direct => Head::Direct,
                },
                *steps,
                cli.seed,
            );
            cfg.batch_size = *batch_size;
            cfg.adam.lr = *lr;
            let out = train(&cfg, &set).map_err(tag("neural-kernel"))?;
            if let Some((step, loss)) = out.loss_curve.last() {
                println!("final smoothed loss at step {step}: {loss:.6}");
            }
            let meta = CheckpointMeta {
                k: *k as u32,
                feature_dim: FEATURE_DIM as u32,
                train_seed: cli.seed,
            };
            save_checkpoint(&out.params, &meta, out_ckpt).map_err(tag("neural-kernel"))?;
            if let Some(curve_path) = loss_curve {
                std::fs::write(curve_path, dpm_core::nn::train::loss_curve_to_csv(&out.loss_curve))
                    .map_err(|e| RunError::Runtime(format!("[cli] writing loss curve: {e}")))?;
            }
            let mut m = ManifestBuilder::new(cli, "train", json!({
                "scenes": scenes.iter().map(|s| s.display().to_string()).collect::<Vec<_>>(),
                "k": k,
                "steps": steps,
                "head": format!("{head:?}"),
                "photons_per_scene": photons_per_scene,
                "points_per_scene": points_per_scene,
                "maps_per_scene": maps_per_scene,
                "reference_factor": reference_factor,
                "batch_size": batch_size,
                "lr": lr,
                "out_ckpt": out_ckpt.display().to_string(),
            }));
            for s in scenes {
                m.input(s);
            }
            m.output(out_ckpt);
            if let Some(curve_path) = loss_curve {
                m.output(curve_path);
            }
            m.write()
        }
        Command::RenderPm { scene, photons, k, method, ckpt, kernel, spp_ls, out } => {
            if *spp_ls < 1 {
                return Err(RunError::Usage("--spp-ls must be at least 1".into()));
            }
            if *method == MethodArg::Ours && ckpt.is_none() {
                return Err(RunError::Usage("--method ours needs --ckpt".into()));
            }
            let format = format_for(out)?;
            let loaded = load_scene(scene).map_err(tag("scene-core"))?;
            let map = load_photons(photons).map_err(tag("photon-tracer"))?;
            let index = KnnIndex::build(&map.positions()).map_err(tag("knn-index"))?;
            let points = collect_ls_points(&loaded, *spp_ls, cli.seed);
            let net;
            let estimator = match method {
                MethodArg::Classic => Estimator::Classic { k: *k, kind: kernel.to_kind() },
                MethodArg::Ours => {
                    let ckpt_path = ckpt.as_ref().ok_or_else(|| {
                        RunError::Usage("--method ours needs --ckpt".into())
                    })?;
                    let (params, meta): (NetParams<f64>, _) =
                        load_checkpoint(ckpt_path).map_err(tag("neural-kernel"))?;
                    meta.expect_k(*k).map_err(tag("neural-kernel"))?;
                    net = params;
                    Estimator::Learned { params: &net, k: *k }
                }
            };
            let img = render_ls_layer(&points, &map, &index, estimator);
            write_image(&img, out, format).map_err(tag("compositor-eval"))?;
            println!(
                "estimated LS layer ({:?}, K = {k}, M = {}) -> {}",
                method,
                map.m_valid,
                out.display()
            );
            let mut m = ManifestBuilder::new(cli, "render-pm", json!({
                "scene": scene.display().to_string(),
                "photons": photons.display().to_string(),
                "k": k,
                "method": format!("{method:?}"),
                "kernel": format!("{kernel:?}"),
                "spp_ls": spp_ls,
                "ckpt": ckpt.as_ref().map(|c| c.display().to_string()),
                "out": out.display().to_string(),
            }));
            m.input(scene).input(photons);
            if let Some(c) = ckpt {
                m.input(c);
            }
            m.output(out);
            m.write()
        }
        Command::Composite { pm, pt, out } => {
            let format = format_for(out)?;
            let a = read_image(pm).map_err(tag("compositor-eval"))?;
            let b = read_image(pt).map_err(tag("compositor-eval"))?;
            let sum = composite(&a, &b).map_err(tag("compositor-eval"))?;
            write_image(&sum, out, format).map_err(tag("compositor-eval"))?;
            println!("composited {} + {} -> {}", pm.display(), pt.display(), out.display());
            let mut m = ManifestBuilder::new(cli, "composite", json!({
                "pm": pm.display().to_string(),
                "pt": pt.display().to_string(),
                "out": out.display().to_string(),
            }));
            m.input(pm).input(pt).output(out);
            m.write()
        }
        Command::EvalGrid {
            scene,
            ks,
            ms,
            ckpt50,
            ckpt500,
            reference,
            out_table,
            spp_ls,
            max_bounces,
        } => {
            if ms.is_empty() {
                return Err(RunError::Usage("--ms needs at least one photon count".into()));
            }
            let loaded = load_scene(scene).map_err(tag("scene-core"))?;
            let ref_img = read_image(reference).map_err(tag("compositor-eval"))?;
            let mut checkpoints: Vec<(usize, NetParams<f64>)> = Vec::new();
            for (k, path) in [(50usize, ckpt50), (500usize, ckpt500)] {
                if let Some(path) = path {
                    let (params, meta) = load_checkpoint(path).map_err(tag("neural-kernel"))?;
                    meta.expect_k(k).map_err(tag("neural-kernel"))?;
                    checkpoints.push((k, params));
                }
            }
            let refs: Vec<(usize, &NetParams<f64>)> =
                checkpoints.iter().map(|(k, p)| (*k, p)).collect();
            let cfg = EvalGridConfig {
                ks: ks.clone(),
                n_emits: ms.clone(),
                spp: *spp_ls,
                kernel: KernelKind::Epanechnikov,
                max_bounces: *max_bounces,
                seed: cli.seed,
            };
            let table = eval_grid(&loaded, &cfg, &refs, &ref_img).map_err(tag("compositor-eval"))?;
            std::fs::write(out_table, table.to_csv())
                .map_err(|e| RunError::Runtime(format!("[cli] writing table: {e}")))?;
            println!("{}", table.to_csv().trim_end());
            let mut m = ManifestBuilder::new(cli, "eval-grid", json!({
                "scene": scene.display().to_string(),
                "ks": ks,
                "ms": ms,
                "spp_ls": spp_ls,
                "max_bounces": max_bounces,
                "ref": reference.display().to_string(),
                "out_table": out_table.display().to_string(),
            }));
            m.input(scene).input(reference);
            if let Some(c) = ckpt50 {
                m.input(c);
            }
            if let Some(c) = ckpt500 {
                m.input(c);
            }
            m.output(out_table);
            m.write()
        }
        Command::Metrics { a, b } => {
            let ia = read_image(a).map_err(tag("compositor-eval"))?;
            let ib = read_image(b).map_err(tag("compositor-eval"))?;
            let r = rmse(&ia, &ib).map_err(tag("compositor-eval"))?;
            let p = psnr(&ia, &ib, 1.0).map_err(tag("compositor-eval"))?;
            let s = ssim(&ia, &ib).map_err(tag("compositor-eval"))?;
            println!("rmse {r}");
            println!("psnr {p}");
            println!("ssim {s}");
            let mut m = ManifestBuilder::new(cli, "metrics", json!({
                "a": a.display().to_string(),
                "b": b.display().to_string(),
                "rmse": r,
                "psnr": if p.is_finite() { json!(p) } else { json!("inf") },
                "ssim": s,
            }));
            m.input(a).input(b);
            m.write()
        }
    }
}
