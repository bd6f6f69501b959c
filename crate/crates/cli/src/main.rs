use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use lsv_core::compositor::RenderConfig;
use lsv_core::fit::{self, FitConfig, UvMask};
use lsv_core::gradcheck::{gradcheck, GradcheckConfig};
use lsv_core::io::{
    self, load_camera, load_layer_config, load_manifest, load_mesh, load_pose, load_shape,
    load_texture, save_layer_config, save_texture, FloatImage, LayerConfig, Split,
};
use lsv_core::mesh::{build_layers, LayerStack, Shape, TemplateMesh};
use lsv_core::render::render;
use lsv_core::synth::{make_synthetic_scene, write_scene, SceneConfig};

/// Layered surface volumes: render, animate and fit multi-shell textured
/// avatars.
#[derive(Parser)]
#[command(name = "lsv", version)]
struct Cli {
    /// Worker threads (defaults to the number of logical cores).
    #[arg(long, global = true, env = "LSV_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a layer schedule for a mesh and save it as JSON.
    Layers(LayersArgs),
    /// Render one posed view.
    Render(RenderArgs),
    /// Render one frame per pose file in a directory.
    Animate(AnimateArgs),
    /// Fit layer textures to a multi-view dataset.
    Fit(FitArgs),
    /// Report PSNR of a fitted texture on the test split.
    Eval(EvalArgs),
    /// Compare analytic texture gradients with finite differences.
    Gradcheck(GradcheckArgs),
    /// Generate the procedural ground-truth scene.
    Synth(SynthArgs),
}

/// Errors that should exit with the usage code.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn parse_rgb(s: &str) -> Result<[f64; 3], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| format!("{x:?}: {e}")))
        .collect::<Result<_, _>>()?;
    match v.as_slice() {
        [r, g, b] => Ok([*r, *g, *b]),
        [x] => Ok([*x; 3]),
        _ => Err(format!("expected r,g,b, got {s:?}")),
    }
}

/// Coarse-to-fine schedule as parsed from `ITER:RES,ITER:RES`.
#[derive(Debug, Clone)]
struct Milestones(Vec<(usize, usize)>);

fn parse_milestones(s: &str) -> Result<Milestones, String> {
    if s.trim().is_empty() {
        return Ok(Milestones(Vec::new()));
    }
    s.split(',')
        .map(|m| {
            let (it, res) = m
                .split_once(':')
                .ok_or_else(|| format!("milestone {m:?} is not ITER:RES"))?;
            Ok((
                it.trim().parse().map_err(|e| format!("{it:?}: {e}"))?,
                res.trim().parse().map_err(|e| format!("{res:?}: {e}"))?,
            ))
        })
        .collect::<Result<_, String>>()
        .map(Milestones)
}

fn positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(x) if x > 0.0 && x.is_finite() => Ok(x),
        Ok(x) => Err(format!("must be > 0, got {x}")),
        Err(e) => Err(e.to_string()),
    }
}

#[derive(Args)]
struct LayersArgs {
    #[arg(long)]
    mesh: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    n: u32,
    #[arg(long, default_value_t = -0.01, allow_hyphen_values = true)]
    tmin: f64,
    #[arg(long, default_value_t = 0.01, allow_hyphen_values = true)]
    tmax: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ViewArgs {
    #[arg(long)]
    mesh: PathBuf,
    #[arg(long)]
    tex: PathBuf,
    /// Layer schedule JSON written by `lsv layers`.
    #[arg(long)]
    layers: PathBuf,
    #[arg(long)]
    camera: PathBuf,
    #[arg(long)]
    shape: Option<PathBuf>,
    #[arg(long, default_value_t = 0.1, value_parser = positive)]
    gamma: f64,
    /// Background color as r,g,b in [0,1].
    #[arg(long, default_value = "1,1,1", value_parser = parse_rgb)]
    bg: [f64; 3],
}

#[derive(Args)]
struct RenderArgs {
    #[command(flatten)]
    view: ViewArgs,
    #[arg(long)]
    pose: PathBuf,
    /// Output PNG; the float raster goes next to it as .lsvimg.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AnimateArgs {
    #[command(flatten)]
    view: ViewArgs,
    /// Directory of pose JSON files, rendered in file-name order.
    #[arg(long)]
    pose_dir: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    mesh: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    n: u32,
    #[arg(long, default_value_t = -0.01, allow_hyphen_values = true)]
    tmin: f64,
    #[arg(long, default_value_t = 0.01, allow_hyphen_values = true)]
    tmax: f64,
    #[arg(long, default_value_t = 500)]
    iters: usize,
    #[arg(long, default_value_t = 1e-2, value_parser = positive)]
    lr: f64,
    #[arg(long, default_value_t = 0.1, value_parser = positive)]
    gamma: f64,
    /// Opacity regularizer weight (default 1 with --mask, else 0).
    #[arg(long)]
    lambda: Option<f64>,
    /// UV-space mask PNG for the opacity regularizer, or `full`.
    #[arg(long)]
    mask: Option<String>,
    /// Coarse-to-fine milestones as ITER:RES,ITER:RES.
    #[arg(long, value_parser = parse_milestones)]
    c2f: Option<Milestones>,
    /// Starting texture resolution.
    #[arg(long, default_value_t = 128)]
    tex_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "1,1,1", value_parser = parse_rgb)]
    bg: [f64; 3],
    /// Output directory (texture.lsvtex, layers.json, loss.csv).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    mesh: PathBuf,
    #[arg(long)]
    layers: PathBuf,
    #[arg(long)]
    tex: PathBuf,
    #[arg(long, default_value_t = 0.1, value_parser = positive)]
    gamma: f64,
    #[arg(long, default_value = "1,1,1", value_parser = parse_rgb)]
    bg: [f64; 3],
}

#[derive(Args)]
struct GradcheckArgs {
    /// Mesh to check on (defaults to the procedural humanoid).
    #[arg(long)]
    mesh: Option<PathBuf>,
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u32).range(1..))]
    n: u32,
    /// Texture and image resolution.
    #[arg(long, default_value_t = 64)]
    size: usize,
    #[arg(long, default_value_t = 2048)]
    samples: usize,
    #[arg(long, default_value_t = 1e-3, value_parser = positive)]
    h: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 64)]
    views: usize,
    #[arg(long, default_value_t = 128)]
    size: usize,
    #[arg(long)]
    out: PathBuf,
}

const GRADCHECK_TOL: f64 = 1e-4;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .context("configuring the worker pool")?;
    }
    match cli.command {
        Command::Layers(a) => cmd_layers(a),
        Command::Render(a) => cmd_render(a),
        Command::Animate(a) => cmd_animate(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::Synth(a) => cmd_synth(a),
    }
}

fn load_arc_mesh(path: &Path) -> Result<Arc<TemplateMesh>> {
    Ok(Arc::new(load_mesh(path).with_context(|| format!("loading mesh {}", path.display()))?))
}

fn cmd_layers(a: LayersArgs) -> Result<ExitCode> {
    if !(a.tmin <= a.tmax) {
        return Err(usage(format!("--tmin {} exceeds --tmax {}", a.tmin, a.tmax)));
    }
    let mesh = load_arc_mesh(&a.mesh)?;
    let stack = build_layers(mesh, a.n as usize, a.tmin, a.tmax)?;
    for (n, t) in stack.thickness.iter().enumerate() {
        println!("layer {n:2}: t = {t}");
    }
    save_layer_config(
        &a.out,
        &LayerConfig { n: a.n as usize, t_min: a.tmin, t_max: a.tmax, thickness: stack.thickness.clone() },
    )?;
    Ok(ExitCode::SUCCESS)
}

struct Viewer {
    stack: LayerStack,
    tex: lsv_core::TextureStack,
    camera: lsv_core::Camera,
    shape: Shape,
    cfg: RenderConfig,
}

fn stack_from_config(mesh: Arc<TemplateMesh>, layers: &LayerConfig) -> Result<LayerStack> {
    Ok(build_layers(mesh, layers.n, layers.t_min, layers.t_max)?)
}

impl Viewer {
    fn load(v: &ViewArgs) -> Result<Viewer> {
        let mesh = load_arc_mesh(&v.mesh)?;
        let layers = load_layer_config(&v.layers)?;
        let tex = load_texture(&v.tex).with_context(|| format!("loading texture {}", v.tex.display()))?;
        if tex.num_layers() != layers.n {
            bail!("texture has {} layers, schedule has {}", tex.num_layers(), layers.n);
        }
        let shape = match &v.shape {
            Some(p) => load_shape(p)?,
            None => Shape::zero(mesh.num_shapes()),
        };
        Ok(Viewer {
            stack: stack_from_config(mesh, &layers)?,
            tex,
            camera: load_camera(&v.camera)?,
            shape,
            cfg: RenderConfig { gamma: v.gamma, background: v.bg },
        })
    }

    fn render_to(&self, pose: &lsv_core::Pose, out: &Path) -> Result<lsv_core::render::StageTimings> {
        let r = render(&self.stack, &self.tex, &self.camera, pose, &self.shape, &self.cfg, false)?;
        let img = FloatImage::from_composited(r.image.width, r.image.height, &r.image.rgb, &r.image.alpha, self.cfg.background);
        io::save_image_png(out, &img)?;
        io::save_lsvimg(&out.with_extension("lsvimg"), &img)?;
        Ok(r.timings)
    }
}

fn ms(d: std::time::Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

fn cmd_render(a: RenderArgs) -> Result<ExitCode> {
    let viewer = Viewer::load(&a.view)?;
    let pose = load_pose(&a.pose)?;
    let t = viewer.render_to(&pose, &a.out)?;
    println!("deform: {:.3} ms", ms(t.deform));
    println!("raster: {:.3} ms", ms(t.raster));
    println!("composite: {:.3} ms", ms(t.composite));
    println!("total: {:.3} ms", ms(t.total()));
    Ok(ExitCode::SUCCESS)
}

fn cmd_animate(a: AnimateArgs) -> Result<ExitCode> {
    let entries = std::fs::read_dir(&a.pose_dir)
        .map_err(|e| usage(format!("--pose-dir {}: {e}", a.pose_dir.display())))?;
    let mut poses: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    poses.sort();
    if poses.is_empty() {
        return Err(usage(format!("no pose files in {}", a.pose_dir.display())));
    }
    let viewer = Viewer::load(&a.view)?;
    for (k, path) in poses.iter().enumerate() {
        let pose = load_pose(path)?;
        let out = a.out.join(format!("frame_{k:04}.png"));
        let t = viewer.render_to(&pose, &out)?;
        println!("{}: {:.3} ms", out.display(), ms(t.total()));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_fit(a: FitArgs) -> Result<ExitCode> {
    let mask = match a.mask.as_deref() {
        None => None,
        Some("full") => Some(UvMask::full(a.tex_size, a.tex_size)),
        Some(p) => Some(UvMask::load(Path::new(p))?),
    };
    let lambda = a.lambda.unwrap_or(if mask.is_some() { 1.0 } else { 0.0 });
    if !(lambda >= 0.0) {
        return Err(usage(format!("--lambda must be ≥ 0, got {lambda}")));
    }
    let cfg = FitConfig {
        iterations: a.iters,
        adam: fit::AdamConfig { learning_rate: a.lr, ..Default::default() },
        render: RenderConfig { gamma: a.gamma, background: a.bg },
        texture_size: a.tex_size,
        opacity_reg_weight: lambda,
        opacity_reg_mask: mask,
        coarse_to_fine: a.c2f.map(|m| m.0).unwrap_or_default(),
        seed: a.seed,
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let mesh = load_arc_mesh(&a.mesh)?;
    let manifest = load_manifest(&a.manifest)?;
    let train = fit::load_views(&manifest, Split::Train, mesh.num_shapes(), a.bg)?;
    let layers = LayerConfig { n: a.n as usize, t_min: a.tmin, t_max: a.tmax, thickness: Vec::new() };
    let stack = stack_from_config(mesh, &layers)?;
    let result = fit::fit_scene(&train, &stack, &cfg)?;

    save_texture(&a.out.join("texture.lsvtex"), &result.texture)?;
    save_layer_config(&a.out.join("layers.json"), &LayerConfig { thickness: stack.thickness.clone(), ..layers })?;
    fit::write_loss_csv(&a.out.join("loss.csv"), &result.history)?;
    if let Some(last) = result.history.last() {
        println!("final loss: {:e} (reg {:e})", last.loss, last.reg_loss);
    }
    let train_eval = fit::evaluate(&train, &stack, &result.texture, &cfg.render)?;
    println!("train PSNR: {:.3} dB", train_eval.mean_psnr);
    println!("mean opacity: {:.6}", fit::mean_opacity(&result.texture));
    Ok(ExitCode::SUCCESS)
}

fn cmd_eval(a: EvalArgs) -> Result<ExitCode> {
    let mesh = load_arc_mesh(&a.mesh)?;
    let layers = load_layer_config(&a.layers)?;
    let tex = load_texture(&a.tex)?;
    let manifest = load_manifest(&a.manifest)?;
    let test = fit::load_views(&manifest, Split::Test, mesh.num_shapes(), a.bg)?;
    let stack = stack_from_config(mesh, &layers)?;
    let e = fit::evaluate(&test, &stack, &tex, &RenderConfig { gamma: a.gamma, background: a.bg })?;
    for (k, p) in e.per_view.iter().enumerate() {
        println!("view {k}: {p:.3} dB");
    }
    println!("mean PSNR: {:.3} dB", e.mean_psnr);
    Ok(ExitCode::SUCCESS)
}

fn cmd_gradcheck(a: GradcheckArgs) -> Result<ExitCode> {
    let mesh = match &a.mesh {
        Some(p) => load_arc_mesh(p)?,
        None => Arc::new(lsv_core::synth::build_humanoid().mesh),
    };
    let cfg = GradcheckConfig {
        layers: a.n as usize,
        texture_size: a.size,
        image_size: a.size,
        samples: a.samples,
        h: a.h,
        seed: a.seed,
        ..Default::default()
    };
    let r = gradcheck(mesh, &cfg)?;
    println!("checked {} params in {:.1} ms", r.checked, ms(r.elapsed));
    println!("worst texels (layer, x, y, channel): analytic vs numeric");
    for w in r.worst.iter().take(5) {
        println!(
            "  ({}, {}, {}, {}): {:e} vs {:e}, rel {:e}",
            w.layer, w.x, w.y, w.channel, w.analytic, w.numeric, w.rel_error
        );
    }
    println!("max relative error: {:e}", r.max_rel_error);
    Ok(if r.max_rel_error < GRADCHECK_TOL {
        ExitCode::SUCCESS
    } else {
        println!("FAILED: exceeds {GRADCHECK_TOL:e}");
        ExitCode::from(1)
    })
}

fn cmd_synth(a: SynthArgs) -> Result<ExitCode> {
    if a.views < 8 {
        return Err(usage(format!("--views must be at least 8, got {}", a.views)));
    }
    if a.size == 0 {
        return Err(usage("--size must be positive"));
    }
    let scene = make_synthetic_scene(&SceneConfig::new(a.seed, a.views, a.size))?;
    let manifest = write_scene(&scene, &a.out)?;
    println!(
        "{} views ({} train, {} test) -> {}",
        scene.views.len(),
        scene.split(Split::Train).count(),
        scene.split(Split::Test).count(),
        manifest.display()
    );
    Ok(ExitCode::SUCCESS)
}
