//! `seamforge`: generate fixtures, extract weld paths, evaluate them.
//!
//! Exit codes: 0 success, 2 no weld seam found, 1 any other error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use seamforge::eval::{evaluate, run_ablation, run_sweep, sweep_csv, sweep_json};
use seamforge::io::{manifest_truth_path, read_mask_pgm, read_scene, read_weld_path, write_scene, write_weld_path, SceneBundle};
use seamforge::pipeline::{run_pipeline, PipelineConfig};
use seamforge::preprocess::AxisBox;
use seamforge::synth::{generate, GroundTruth, WorkpieceKind, WorkpieceSpec};
use seamforge::Error;

#[derive(Parser)]
#[command(name = "seamforge", version, about = "Coarse-to-fine multi weld seam extraction")]
struct Cli {
    /// Worker threads for the parallel stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic workpiece scene with ground truth.
    Gen(GenArgs),
    /// Extract weld paths from a scene.
    Run(RunArgs),
    /// Score a scene's weld paths against its ground truth.
    Eval(EvalArgs),
    /// Run the pipeline over a range of voxel sizes.
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Butt,
    TeeRibArray,
    CurvedSinusoid,
}

#[derive(Args)]
struct GenArgs {
    /// Workpiece spec JSON; overrides --kind.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "butt")]
    kind: Kind,
    #[arg(long)]
    ribs: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct PipelineArgs {
    /// Scene manifest, or a directory holding `scene.json`.
    #[arg(long)]
    scene: PathBuf,
    /// Pipeline config JSON; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Pass-through box `xmin,xmax,ymin,ymax,zmin,zmax` in camera mm.
    #[arg(long, allow_hyphen_values = true)]
    passthrough: Option<String>,
    #[arg(long)]
    voxel_size: Option<f64>,
    /// Comma separated PGM masks replacing the scene's masks.
    #[arg(long, value_delimiter = ',')]
    masks: Option<Vec<PathBuf>>,
    #[arg(long)]
    dilate_px: Option<usize>,
    #[arg(long)]
    no_crop: bool,
    #[arg(long)]
    knn: Option<usize>,
    #[arg(long)]
    theta1_deg: Option<f64>,
    #[arg(long)]
    curv_seed: Option<f64>,
    #[arg(long)]
    k_grow: Option<usize>,
    #[arg(long)]
    min_segment: Option<usize>,
    #[arg(long)]
    step_mm: Option<f64>,
    #[arg(long)]
    line_tol: Option<f64>,
    #[arg(long)]
    curve_tol: Option<f64>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Output directory for `weld_path.json` and `report.json`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Ground truth JSON (default: the manifest's `truth`).
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Score this weld-path file instead of running the pipeline.
    #[arg(long)]
    path: Option<PathBuf>,
    /// Voxel sweep `start:end[:step]` in mm.
    #[arg(long)]
    sweep: Option<String>,
    /// Compare runs with and without cropping.
    #[arg(long)]
    ablation: bool,
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Voxel sizes `start:end[:step]` in mm.
    #[arg(long, default_value = "1:10")]
    r: String,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("SEAMFORGE_LOG", "warn")).init();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", one_line(&e));
            match e.downcast_ref::<Error>() {
                Some(Error::NoSeamsFound) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn one_line(e: &anyhow::Error) -> String {
    format!("{e:#}").replace('\n', " ")
}

fn dispatch(cli: Cli) -> anyhow::Result<ExitCode> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match cli.command {
        Command::Gen(a) => gen(a),
        Command::Run(a) => run(a),
        Command::Eval(a) => eval(a),
        Command::Sweep(a) => sweep(a),
    }
}

fn gen(a: GenArgs) -> anyhow::Result<ExitCode> {
    let mut spec = match &a.spec {
        Some(p) => WorkpieceSpec::from_json(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
        None => WorkpieceSpec::defaults(match a.kind {
            Kind::Butt => WorkpieceKind::Butt,
            Kind::TeeRibArray => WorkpieceKind::TeeRibArray,
            Kind::CurvedSinusoid => WorkpieceKind::CurvedSinusoid,
        }),
    };
    if let Some(n) = a.ribs {
        spec = WorkpieceSpec {
            ribs: n,
            width_mm: spec.rib_spacing_mm * n as f64,
            ..spec
        };
    }
    if let Some(s) = a.sigma {
        spec.sigma_mm = s;
    }
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    let g = generate(&spec)?;
    let files = write_scene(&g.scene, &a.out, Some("truth.json"))?;
    write(&a.out.join("truth.json"), &g.truth.to_json())?;
    let config = PipelineConfig {
        passthrough: Some(g.passthrough),
        dilate_px: g.dilate_px,
        ..Default::default()
    };
    write(&a.out.join("config.json"), &config.to_json())?;
    write(
        &a.out.join("spec.json"),
        &(serde_json::to_string_pretty(&spec)? + "\n"),
    )?;
    println!(
        "wrote {} ({} points, {} masks, {} seams)",
        files.manifest.display(),
        g.scene.cloud.len(),
        g.scene.masks.len(),
        g.truth.seams.len()
    );
    Ok(ExitCode::SUCCESS)
}

fn manifest_path(scene: &Path) -> PathBuf {
    if scene.is_dir() {
        scene.join("scene.json")
    } else {
        scene.to_path_buf()
    }
}

fn load(p: &PipelineArgs) -> anyhow::Result<(SceneBundle, PipelineConfig)> {
    let mut scene = read_scene(&manifest_path(&p.scene))?;
    if let Some(masks) = &p.masks {
        scene.masks = masks.iter().map(|m| read_mask_pgm(m)).collect::<Result<_, _>>()?;
    }
    let mut c = match &p.config {
        Some(path) => PipelineConfig::read(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(b) = &p.passthrough {
        c.passthrough = Some(AxisBox::parse(b)?);
    }
    if let Some(v) = p.voxel_size {
        c.voxel_mm = v;
    }
    if let Some(v) = p.dilate_px {
        c.dilate_px = v;
    }
    if p.no_crop {
        c.crop = false;
    }
    if let Some(v) = p.knn {
        c.knn = v;
    }
    if let Some(v) = p.theta1_deg {
        c.growth.theta1_deg = v;
    }
    if let Some(v) = p.curv_seed {
        c.growth.c2 = v;
    }
    if let Some(v) = p.k_grow {
        c.growth.k_grow = v;
    }
    if let Some(v) = p.min_segment {
        c.growth.min_segment = v;
    }
    if let Some(v) = p.step_mm {
        c.fit.step_mm = v;
    }
    if let Some(v) = p.line_tol {
        c.fit.line_tol_mm = v;
    }
    if let Some(v) = p.curve_tol {
        c.fit.curve_tol_mm = v;
    }
    c.validate()?;
    Ok((scene, c))
}

fn load_truth(scene: &Path, explicit: Option<&Path>) -> anyhow::Result<GroundTruth> {
    let path = match explicit {
        Some(p) => p.to_path_buf(),
        None => manifest_truth_path(&manifest_path(scene))?
            .context("scene manifest names no ground truth; pass --truth")?,
    };
    Ok(GroundTruth::read(&path)?)
}

fn write(path: &Path, text: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn run(a: RunArgs) -> anyhow::Result<ExitCode> {
    let (scene, config) = load(&a.pipeline)?;
    let result = run_pipeline(&scene, &config)?;
    write(&a.out.join("report.json"), &result.report.to_json())?;
    if let Err(e) = result.status() {
        if let Some(stage) = &result.report.stopped_after {
            eprintln!("note: no points left after {stage}");
        }
        return Err(e.into());
    }
    fs::create_dir_all(&a.out)?;
    write_weld_path(&result.paths, &a.out.join("weld_path.json"))?;
    println!("{} seam(s) written to {}", result.paths.len(), a.out.join("weld_path.json").display());
    Ok(ExitCode::SUCCESS)
}

/// `a:b` or `a:b:step`, inclusive.
fn parse_range(s: &str) -> anyhow::Result<Vec<f64>> {
    let parts: Vec<f64> = s
        .split(':')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .with_context(|| format!("bad range {s:?}"))?;
    let (lo, hi, step) = match parts.as_slice() {
        [a, b] => (*a, *b, 1.0),
        [a, b, c] => (*a, *b, *c),
        _ => bail!("range must be start:end[:step], got {s:?}"),
    };
    if !(step > 0.0 && lo > 0.0 && hi >= lo) {
        bail!("range must satisfy 0 < start <= end and step > 0, got {s:?}");
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| lo + step * i as f64).collect())
}

fn eval(a: EvalArgs) -> anyhow::Result<ExitCode> {
    let (scene, config) = load(&a.pipeline)?;
    let truth = load_truth(&a.pipeline.scene, a.truth.as_deref())?;
    if let Some(r) = &a.sweep {
        return write_sweep(&scene, &truth, &config, &parse_range(r)?, &a.out);
    }
    if a.ablation {
        let ab = run_ablation(&scene, &truth, &config, a.repeats)?;
        write(&a.out.join("ablation.json"), &ab.to_json())?;
        write(&a.out.join("ablation.csv"), &ab.to_csv())?;
        print!("{}", ab.to_csv());
        println!("point ratio {:.3}, time ratio {:.3}", ab.point_ratio(), ab.time_ratio());
        return Ok(ExitCode::SUCCESS);
    }
    let report = match &a.path {
        Some(p) => evaluate(&read_weld_path(p)?, &truth, None),
        None => {
            let result = run_pipeline(&scene, &config)?;
            evaluate(&result.paths, &truth, Some(&result.report))
        }
    };
    write(&a.out.join("eval.json"), &report.to_json())?;
    write(&a.out.join("eval.csv"), &report.to_csv())?;
    println!(
        "matched {} missed {} spurious {}; mean RMSE {:.3} mm, max error {:.3} mm",
        report.matched, report.missed, report.spurious, report.mean_rmse_mm, report.max_error_mm
    );
    Ok(ExitCode::SUCCESS)
}

fn sweep(a: SweepArgs) -> anyhow::Result<ExitCode> {
    let (scene, config) = load(&a.pipeline)?;
    let truth = load_truth(&a.pipeline.scene, a.truth.as_deref())?;
    write_sweep(&scene, &truth, &config, &parse_range(&a.r)?, &a.out)
}

fn write_sweep(scene: &SceneBundle, truth: &GroundTruth, config: &PipelineConfig, sizes: &[f64], out: &Path) -> anyhow::Result<ExitCode> {
    let rows = run_sweep(scene, truth, config, sizes);
    write(&out.join("sweep.json"), &sweep_json(&rows))?;
    let csv = sweep_csv(&rows);
    write(&out.join("sweep.csv"), &csv)?;
    print!("{csv}");
    Ok(ExitCode::SUCCESS)
}
