//! Command-line front end: clip generation and perturbation, the skeleton
//! token codec, loss evaluation, the metric protocol, and the fine-tuning
//! demo. All stochastic stages derive from the global `--seed`, per-clip
//! substreams come from the clip id hash, and multi-clip work parallelizes
//! over clips with order-stable reduction, so reports are byte-identical
//! across runs and thread counts.

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use temporig::error::{Error, Result};
use temporig::metrics::{
    self, skeleton_clip_metrics, ClipMetrics, MetricReport, SkelMetricOptions,
};
use temporig::rig::{validate_clip, RigClip};
use temporig::skelgeom::{self, Alignment, GeomLossConfig};
use temporig::skinloss::SkinLossWeights;
use temporig::skinops::{self, MaskedTeacher};
use temporig::synth::{self, SynthConfig, Topology};
use temporig::token::{self, TokenLossWeights, TokenSequence};
use temporig::toy::{self, FinetuneOptions};
use temporig::{fmt, rigio};

#[derive(Parser)]
#[command(
    name = "temporig",
    version,
    about = "Temporal rig-consistency toolkit: synthetic clips, token codec, consistency losses, stability metrics, fine-tuning demo"
)]
struct Cli {
    /// Global seed feeding every stochastic stage; per-clip substreams are
    /// derived from the clip id hash.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// Worker threads for multi-clip batches (0 = auto). Results are
    /// byte-identical for any value.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Md,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TopologyArg {
    Chain,
    TwoBranch,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AlignmentArg {
    /// Correspondence-free principal-axis alignment (works across joint counts).
    StructureTensor,
    /// Index-correspondence Kabsch; falls back per frame when counts differ.
    Kabsch,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic articulated clip with ground-truth skinning.
    SynthGen(SynthGenArgs),
    /// Add Gaussian noise to the non-anchor frames of a clip.
    Perturb(PerturbArgs),
    /// Quantize one skeleton frame into (tx, ty, tz, tp) token quadruples.
    Tokenize(TokenizeArgs),
    /// Decode a token file back into a single-frame clip.
    Detokenize(DetokenizeArgs),
    /// Token-space and geometry-space skeleton losses for a clip.
    SkelLoss(SkelLossArgs),
    /// Masked skinning distillation loss of a clip's own weights.
    SkinLoss(SkinLossArgs),
    /// Temporal stability metrics (and static metrics given ground truth).
    SkelMetrics(SkelMetricsArgs),
    /// Teacher-based skinning consistency metrics.
    SkinMetrics(SkinMetricsArgs),
    /// Fine-tune the toy skinning head on a clip and report the change.
    DemoFinetune(DemoFinetuneArgs),
    /// Re-emit a JSON metric report as CSV or Markdown.
    Report(ReportArgs),
}

#[derive(Args)]
struct SynthGenArgs {
    /// Output clip JSON path.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "demo")]
    clip_id: String,
    #[arg(long, default_value_t = 6)]
    joints: usize,
    /// Frame count K+1 including the anchor.
    #[arg(long, default_value_t = 3)]
    frames: usize,
    #[arg(long, value_enum, default_value_t = TopologyArg::TwoBranch)]
    topology: TopologyArg,
    /// Trunk length for the two-branch topology.
    #[arg(long, default_value_t = 2)]
    trunk: usize,
    /// Swing amplitude in radians: one value broadcast to all joints, or
    /// one per joint. Default: root fixed, 0.35 elsewhere.
    #[arg(long, num_args = 1..)]
    amplitude: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.3)]
    bone_length: f64,
    #[arg(long, default_value_t = 0.05)]
    tube_radius: f64,
    #[arg(long, default_value_t = 8)]
    tube_segments: usize,
    #[arg(long, default_value_t = 24)]
    tube_rings: usize,
}

#[derive(Args)]
struct PerturbArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Noise standard deviation applied to non-anchor joints and vertices.
    #[arg(long)]
    sigma: f64,
}

#[derive(Args)]
struct TokenizeArgs {
    #[arg(long)]
    input: PathBuf,
    /// Frame index to tokenize.
    #[arg(long, default_value_t = 0)]
    frame: usize,
    /// Coordinate bin count (toolkit default; the codec contract allows any >= 2).
    #[arg(long, default_value_t = token::DEFAULT_N_DISC)]
    n_disc: u32,
    /// Output token JSON path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DetokenizeArgs {
    /// Token JSON produced by `tokenize`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "detokenized")]
    clip_id: String,
}

#[derive(Args)]
struct SkelLossArgs {
    #[arg(long)]
    clip: PathBuf,
    /// Binary logits for the anchor frame (SPRL format).
    #[arg(long)]
    anchor_logits: PathBuf,
    /// Binary logits per non-anchor frame, in frame order.
    #[arg(long, num_args = 0..)]
    frame_logits: Vec<PathBuf>,
    #[arg(long, default_value_t = token::DEFAULT_N_DISC)]
    n_disc: u32,
    /// Parent-slot weight in the weighted cross entropy (method default 3.0).
    #[arg(long, default_value_t = 3.0)]
    alpha: f64,
    /// Anchor-term weight (unspecified upstream; only the ratio matters).
    #[arg(long, default_value_t = 1.0)]
    lambda_anchor: f64,
    /// Cross-frame term weight (method default 1.0).
    #[arg(long, default_value_t = 1.0)]
    lambda_sym: f64,
    /// Weight of the token loss in the combined objective (toolkit default).
    #[arg(long, default_value_t = 1.0)]
    lambda_token: f64,
    /// Weight of the geometry loss in the combined objective (method default 0.5).
    #[arg(long, default_value_t = 0.5)]
    lambda_geom: f64,
    /// Fraction of longest edges entering the directional term (toolkit default).
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
    /// Per-term geometry weights (unspecified upstream; toolkit defaults).
    #[arg(long, default_value_t = 1.0)]
    lambda_dir: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda_len: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda_ch: f64,
    #[arg(long, value_enum, default_value_t = AlignmentArg::StructureTensor)]
    alignment: AlignmentArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SkinLossArgs {
    #[arg(long)]
    clip: PathBuf,
    /// Surface samples drawn on the anchor mesh.
    #[arg(long, default_value_t = 512)]
    samples: usize,
    /// Teacher support size (method default 4).
    #[arg(long, default_value_t = 4)]
    k_s: usize,
    /// Mask value on non-support valid joints (method default 0).
    #[arg(long, default_value_t = 0.0)]
    gamma: f64,
    #[arg(long, default_value_t = 1e-8)]
    epsilon: f64,
    /// Prior sharpness (method default 15.0).
    #[arg(long, default_value_t = 15.0)]
    beta: f64,
    /// Epoch used for the prior warmup scaling.
    #[arg(long, default_value_t = 5)]
    epoch: usize,
    /// Warmup horizon in epochs (method default 5).
    #[arg(long, default_value_t = 5)]
    warmup_epochs: usize,
    /// Loss weights (method defaults).
    #[arg(long, default_value_t = 1.0)]
    lambda_sym: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda_l1: f64,
    #[arg(long, default_value_t = 0.25)]
    lambda_anchor: f64,
    #[arg(long, default_value_t = 0.02)]
    lambda_ent: f64,
    #[arg(long, default_value_t = 0.1)]
    lambda_prior: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SkelMetricsArgs {
    /// Clip JSON file or directory of clip JSON files.
    #[arg(long)]
    input: PathBuf,
    /// Ground-truth clip file or directory (matched by file name); enables
    /// MPJPE@Anchor and the Chamfer variants.
    #[arg(long)]
    gt: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Eigenvalues compared by the spectral metric (method default 8).
    #[arg(long, default_value_t = 8)]
    n_eigs: usize,
    /// Points per bone in the Chamfer variants (toolkit default).
    #[arg(long, default_value_t = 16)]
    samples_per_bone: usize,
}

#[derive(Args)]
struct SkinMetricsArgs {
    /// Clip JSON file or directory; clips need meshes and per-frame weights.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 512)]
    samples: usize,
    #[arg(long, default_value_t = 4)]
    k_s: usize,
    #[arg(long, default_value_t = 0.0)]
    gamma: f64,
    #[arg(long, default_value_t = 1e-8)]
    epsilon: f64,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Debug CSV of the drawn surface samples (single-clip input only).
    #[arg(long)]
    dump_samples: Option<PathBuf>,
}

#[derive(Args)]
struct DemoFinetuneArgs {
    /// Clip to fine-tune on; omitted = generate the default demo clip.
    #[arg(long)]
    clip: Option<PathBuf>,
    /// Noise added to non-anchor frames before training.
    #[arg(long, default_value_t = 0.02)]
    sigma: f64,
    #[arg(long, default_value_t = 200)]
    steps: usize,
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
    #[arg(long, default_value_t = 512)]
    samples: usize,
    /// Random Fourier feature count of the toy head.
    #[arg(long, default_value_t = 64)]
    features: usize,
    /// Scale of the seeded random head init.
    #[arg(long, default_value_t = 0.1)]
    init_scale: f64,
    #[arg(long, default_value_t = 4)]
    k_s: usize,
    #[arg(long, default_value_t = 0.0)]
    gamma: f64,
    #[arg(long, default_value_t = 1e-8)]
    epsilon: f64,
    #[arg(long, default_value_t = 15.0)]
    beta: f64,
    #[arg(long, default_value_t = 5)]
    warmup_epochs: usize,
    #[arg(long, default_value_t = 1.0)]
    lambda_sym: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda_l1: f64,
    #[arg(long, default_value_t = 0.25)]
    lambda_anchor: f64,
    #[arg(long, default_value_t = 0.02)]
    lambda_ent: f64,
    #[arg(long, default_value_t = 0.1)]
    lambda_prior: f64,
    /// Per-step loss trace CSV path.
    #[arg(long)]
    trace_out: Option<PathBuf>,
    /// Before/after report JSON path (stdout when omitted).
    #[arg(long)]
    report_out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Metric report JSON produced by skel-metrics or skin-metrics.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .expect("thread pool");
    match pool.install(|| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!(
                "{}",
                json!({ "error": e.code(), "message": e.to_string() })
            );
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::SynthGen(args) => synth_gen(args, cli.seed),
        Command::Perturb(args) => perturb(args, cli.seed),
        Command::Tokenize(args) => tokenize(args),
        Command::Detokenize(args) => detokenize(args),
        Command::SkelLoss(args) => skel_loss(args),
        Command::SkinLoss(args) => skin_loss(args, cli.seed),
        Command::SkelMetrics(args) => skel_metrics(args),
        Command::SkinMetrics(args) => skin_metrics(args, cli.seed),
        Command::DemoFinetune(args) => demo_finetune(args, cli.seed),
        Command::Report(args) => reformat_report(args),
    }
}

fn check_skin_flags(samples: usize, k_s: usize, gamma: f64, epsilon: f64, beta: f64) -> Result<()> {
    check(samples >= 1, "--samples must be at least 1")?;
    check(k_s >= 1, "--k-s must be at least 1")?;
    check((0.0..1.0).contains(&gamma), "--gamma must lie in [0, 1)")?;
    check(epsilon > 0.0, "--epsilon must be positive")?;
    check(beta > 0.0 && beta.is_finite(), "--beta must be positive")?;
    Ok(())
}

fn bad_range(msg: &str) -> Error {
    Error::InvalidConfig(msg.into())
}

/// Flag ranges are rejected up front so library preconditions never see
/// out-of-range user input.
fn check(cond: bool, msg: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(bad_range(msg))
    }
}

/// Output paths must be writable locations before any work starts.
fn ensure_writable(path: &Path) -> Result<()> {
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(parent) = parent {
        if !parent.is_dir() {
            return Err(Error::InvalidConfig(format!(
                "output directory {} does not exist",
                parent.display()
            )));
        }
    }
    Ok(())
}

fn load_clip(path: &Path) -> Result<RigClip> {
    let (clip, warnings) = rigio::read_clip(path)?;
    for w in warnings {
        eprintln!("warning: {}: {w}", path.display());
    }
    let report = validate_clip(&clip);
    for v in &report.violations {
        eprintln!(
            "{}: {}: {} ({})",
            path.display(),
            match v.severity {
                temporig::rig::Severity::Error => "error",
                temporig::rig::Severity::Warning => "warning",
            },
            v.message,
            v.code.as_str()
        );
    }
    if !report.is_valid() {
        return Err(Error::ClipFormat(format!(
            "{} failed validation",
            path.display()
        )));
    }
    Ok(clip)
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn synth_gen(args: SynthGenArgs, seed: u64) -> Result<()> {
    check(args.joints >= 2, "--joints must be at least 2")?;
    ensure_writable(&args.out)?;
    let amplitudes = args.amplitude.unwrap_or_else(|| {
        let mut a = vec![0.35; args.joints];
        a[0] = 0.0;
        a
    });
    let cfg = SynthConfig {
        clip_id: args.clip_id,
        joints: args.joints,
        topology: match args.topology {
            TopologyArg::Chain => Topology::Chain,
            TopologyArg::TwoBranch => Topology::TwoBranch { trunk: args.trunk },
        },
        amplitudes,
        frames: args.frames,
        bone_length: args.bone_length,
        tube_radius: args.tube_radius,
        tube_segments: args.tube_segments,
        tube_rings: args.tube_rings,
        seed,
    };
    let clip = synth::generate_clip(&cfg)?;
    rigio::write_clip(&clip, &args.out)
}

fn perturb(args: PerturbArgs, seed: u64) -> Result<()> {
    check(args.sigma >= 0.0, "--sigma must be non-negative")?;
    ensure_writable(&args.out)?;
    let clip = load_clip(&args.input)?;
    let noisy = synth::perturb_clip(&clip, args.sigma, seed);
    rigio::write_clip(&noisy, &args.out)
}

fn tokenize(args: TokenizeArgs) -> Result<()> {
    check(args.n_disc >= 2, "--n-disc must be at least 2")?;
    if let Some(out) = &args.out {
        ensure_writable(out)?;
    }
    let clip = load_clip(&args.input)?;
    let frame = clip
        .skeleton_frames
        .get(args.frame)
        .ok_or(Error::PositionOutOfRange {
            position: args.frame,
            len: clip.frame_count(),
        })?;
    let tokens = token::tokenize(frame, args.n_disc)?;
    let text = serde_json::to_string_pretty(&tokens)? + "\n";
    emit(&text, args.out.as_deref())
}

fn detokenize(args: DetokenizeArgs) -> Result<()> {
    if let Some(out) = &args.out {
        ensure_writable(out)?;
    }
    let text = std::fs::read_to_string(&args.input)?;
    let tokens: TokenSequence = serde_json::from_str(&text)?;
    let skeleton = token::detokenize(&tokens)?;
    let clip = RigClip {
        clip_id: args.clip_id,
        skeleton_frames: vec![skeleton],
        faces: None,
        mesh_frames: None,
        skin_weights: None,
        valid_mask: None,
    };
    let text = rigio::clip_to_string(&clip);
    emit(&text, args.out.as_deref())
}

fn read_logits_file(path: &Path) -> Result<token::SlotLogits> {
    let bytes = std::fs::read(path)?;
    token::read_logits(bytes.as_slice())
}

fn skel_loss(args: SkelLossArgs) -> Result<()> {
    check(args.n_disc >= 2, "--n-disc must be at least 2")?;
    check(args.alpha >= 1.0, "--alpha must be at least 1")?;
    check(args.rho > 0.0 && args.rho <= 1.0, "--rho must lie in (0, 1]")?;
    for (name, v) in [
        ("--lambda-anchor", args.lambda_anchor),
        ("--lambda-sym", args.lambda_sym),
        ("--lambda-token", args.lambda_token),
        ("--lambda-geom", args.lambda_geom),
        ("--lambda-dir", args.lambda_dir),
        ("--lambda-len", args.lambda_len),
        ("--lambda-ch", args.lambda_ch),
    ] {
        check(v >= 0.0 && v.is_finite(), &format!("{name} must be a non-negative number"))?;
    }
    if let Some(out) = &args.out {
        ensure_writable(out)?;
    }
    let clip = load_clip(&args.clip)?;
    let targets = token::tokenize(clip.anchor(), args.n_disc)?;
    let anchor_logits = read_logits_file(&args.anchor_logits)?;
    let frame_logits = args
        .frame_logits
        .iter()
        .map(|p| read_logits_file(p))
        .collect::<Result<Vec<_>>>()?;
    let token_weights = TokenLossWeights {
        alpha: args.alpha,
        lambda_anchor: args.lambda_anchor,
        lambda_sym: args.lambda_sym,
    };
    let token_out = token::token_loss(&anchor_logits, &frame_logits, &targets, &token_weights)?;

    let geom_cfg = GeomLossConfig {
        rho: args.rho,
        lambda_dir: args.lambda_dir,
        lambda_len: args.lambda_len,
        lambda_ch: args.lambda_ch,
        alignment: match args.alignment {
            AlignmentArg::StructureTensor => Alignment::StructureTensor,
            AlignmentArg::Kabsch => Alignment::Kabsch,
        },
    };
    let geom_out = if clip.k() > 0 {
        Some(skelgeom::geom_loss(
            clip.anchor(),
            &clip.skeleton_frames[1..],
            &geom_cfg,
        )?)
    } else {
        None
    };

    let combined = args.lambda_token * token_out.total
        + args.lambda_geom * geom_out.as_ref().map(|g| g.total).unwrap_or(0.0);
    let doc = json!({
        "clip_id": clip.clip_id,
        "token": {
            "total": token_out.total,
            "anchor": token_out.anchor_term,
            "sym": token_out.sym_term,
        },
        "geom": geom_out.as_ref().map(|g| json!({
            "total": g.total,
            "per_frame": g.per_frame.iter().map(|f| json!({
                "dir": f.dir,
                "len": f.len,
                "chamfer": f.chamfer,
                "combined": f.combined,
                "degenerate": f.degenerate,
            })).collect::<Vec<_>>(),
        })),
        "combined": combined,
    });
    emit(&fmt::to_json_12(&doc), args.out.as_deref())
}

/// Per-frame point predictions from the clip's own vertex weights, plus the
/// anchor teacher, via the shared sample set.
fn clip_point_weights(
    clip: &RigClip,
    samples: &skinops::SurfaceSamples,
    k_s: usize,
    gamma: f64,
    epsilon: f64,
) -> Result<(Vec<temporig::ndarray::Array2<f64>>, MaskedTeacher)> {
    let weights = clip.skin_weights.as_ref().ok_or(Error::NoMesh)?;
    let valid = clip
        .valid_mask
        .clone()
        .unwrap_or_else(|| vec![true; clip.anchor().joint_count()]);
    let preds = weights
        .iter()
        .map(|w| skinops::barycentric_transfer(w, samples))
        .collect::<Result<Vec<_>>>()?;
    let teacher = MaskedTeacher::new(preds[0].clone(), valid, k_s, gamma, epsilon)?;
    Ok((preds, teacher))
}

fn skin_loss(args: SkinLossArgs, seed: u64) -> Result<()> {
    check_skin_flags(args.samples, args.k_s, args.gamma, args.epsilon, args.beta)?;
    if let Some(out) = &args.out {
        ensure_writable(out)?;
    }
    let clip = load_clip(&args.clip)?;
    let samples = skinops::sample_surface(
        &clip,
        args.samples,
        skinops::clip_seed(seed, &clip.clip_id),
    )?;
    let (preds, teacher) =
        clip_point_weights(&clip, &samples, args.k_s, args.gamma, args.epsilon)?;
    let weights = SkinLossWeights {
        lambda_sym: args.lambda_sym,
        lambda_l1: args.lambda_l1,
        lambda_anchor: args.lambda_anchor,
        lambda_ent: args.lambda_ent,
        lambda_prior: args.lambda_prior,
        beta: args.beta,
        warmup_epochs: args.warmup_epochs,
        prior_window: None,
    };
    let window: Vec<usize> = (0..samples.frame_count()).collect();
    let prior = temporig::skinloss::geometric_prior(
        &samples,
        clip.anchor(),
        &teacher.valid,
        weights.beta,
        &window,
    )?;
    let breakdown =
        temporig::skinloss::skin_total_loss(&preds, &teacher, &prior, &weights, args.epoch)?;
    let doc = json!({
        "clip_id": clip.clip_id,
        "total": breakdown.total,
        "sym": breakdown.sym,
        "l1": breakdown.l1,
        "anchor": breakdown.anchor,
        "ent": breakdown.ent,
        "prior": breakdown.prior,
    });
    emit(&fmt::to_json_12(&doc), args.out.as_deref())
}

/// Clip files to evaluate: a single file, or every `.json` in a directory
/// sorted by name so batch order is stable.
fn clip_paths(input: &Path) -> Result<Vec<PathBuf>> {
    if input.is_dir() {
        let mut paths: Vec<PathBuf> = std::fs::read_dir(input)?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.extension().map(|x| x == "json").unwrap_or(false))
            .collect();
        paths.sort();
        if paths.is_empty() {
            return Err(Error::ClipFormat(format!(
                "no .json clips under {}",
                input.display()
            )));
        }
        Ok(paths)
    } else {
        Ok(vec![input.to_path_buf()])
    }
}

fn write_report(report: &MetricReport, format: Format, out: Option<&Path>) -> Result<()> {
    let text = match format {
        Format::Json => metrics::report_to_json(report),
        Format::Csv => metrics::report_to_csv(report),
        Format::Md => metrics::report_to_markdown(report),
    };
    emit(&text, out)
}

fn skel_metrics(args: SkelMetricsArgs) -> Result<()> {
    use rayon::prelude::*;
    check(args.n_eigs >= 1, "--n-eigs must be at least 1")?;
    check(args.samples_per_bone >= 2, "--samples-per-bone must be at least 2")?;
    if let Some(out) = &args.out {
        ensure_writable(out)?;
    }
    let paths = clip_paths(&args.input)?;
    let gt_for = |path: &Path| -> Option<PathBuf> {
        let gt = args.gt.as_ref()?;
        if gt.is_dir() {
            let name = path.file_name()?;
            let candidate = gt.join(name);
            candidate.exists().then_some(candidate)
        } else {
            Some(gt.clone())
        }
    };
    let opts = SkelMetricOptions {
        n_eigs: args.n_eigs,
        samples_per_bone: args.samples_per_bone,
    };
    let clips: Vec<ClipMetrics> = paths
        .par_iter()
        .map(|path| -> Result<ClipMetrics> {
            let clip = load_clip(path)?;
            let gt_clip = match gt_for(path) {
                Some(p) => Some(load_clip(&p)?),
                None => None,
            };
            Ok(skeleton_clip_metrics(
                &clip,
                gt_clip.as_ref().map(|c| c.anchor()),
                &opts,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let report = metrics::assemble_report(clips);
    write_report(&report, args.format, args.out.as_deref())
}

fn skin_metrics(args: SkinMetricsArgs, seed: u64) -> Result<()> {
    use rayon::prelude::*;
    check_skin_flags(args.samples, args.k_s, args.gamma, args.epsilon, 1.0)?;
    if let Some(out) = &args.out {
        ensure_writable(out)?;
    }
    if let Some(dump) = &args.dump_samples {
        ensure_writable(dump)?;
    }
    let paths = clip_paths(&args.input)?;
    if let Some(dump) = &args.dump_samples {
        if paths.len() != 1 {
            return Err(Error::InvalidConfig(
                "--dump-samples needs a single clip input".into(),
            ));
        }
        let clip = load_clip(&paths[0])?;
        let samples = skinops::sample_surface(
            &clip,
            args.samples,
            skinops::clip_seed(seed, &clip.clip_id),
        )?;
        let file = std::fs::File::create(dump)?;
        skinops::write_samples_csv(&samples, file)?;
    }
    let clips: Vec<ClipMetrics> = paths
        .par_iter()
        .map(|path| -> Result<ClipMetrics> {
            let clip = load_clip(path)?;
            let samples = skinops::sample_surface(
                &clip,
                args.samples,
                skinops::clip_seed(seed, &clip.clip_id),
            )?;
            let (preds, teacher) =
                clip_point_weights(&clip, &samples, args.k_s, args.gamma, args.epsilon)?;
            let consistency = metrics::skin_consistency(&preds, &teacher)?;
            let cons_j = metrics::per_joint_variance(&preds).ok();
            Ok(ClipMetrics {
                clip_id: clip.clip_id.clone(),
                frames: clip.frame_count(),
                joints: clip.anchor().joint_count(),
                skin_l1: Some(consistency.l1_bca),
                skin_symkl: Some(consistency.symkl_bca),
                skin_entropy: Some(consistency.entropy),
                cons_j,
                ..ClipMetrics::default()
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let report = metrics::assemble_report(clips);
    write_report(&report, args.format, args.out.as_deref())
}

fn demo_finetune(args: DemoFinetuneArgs, seed: u64) -> Result<()> {
    check_skin_flags(args.samples, args.k_s, args.gamma, args.epsilon, args.beta)?;
    check(args.sigma >= 0.0, "--sigma must be non-negative")?;
    check(args.lr >= 0.0 && args.lr.is_finite(), "--lr must be non-negative")?;
    for out in [&args.trace_out, &args.report_out].into_iter().flatten() {
        ensure_writable(out)?;
    }
    let clip = match &args.clip {
        Some(path) => load_clip(path)?,
        None => synth::generate_clip(&SynthConfig {
            seed,
            ..SynthConfig::default()
        })?,
    };
    let clip = synth::perturb_clip(&clip, args.sigma, seed);
    let samples = skinops::sample_surface(
        &clip,
        args.samples,
        skinops::clip_seed(seed, &clip.clip_id),
    )?;
    let (_, teacher) = clip_point_weights(&clip, &samples, args.k_s, args.gamma, args.epsilon)?;
    let weights = SkinLossWeights {
        lambda_sym: args.lambda_sym,
        lambda_l1: args.lambda_l1,
        lambda_anchor: args.lambda_anchor,
        lambda_ent: args.lambda_ent,
        lambda_prior: args.lambda_prior,
        beta: args.beta,
        warmup_epochs: args.warmup_epochs,
        prior_window: None,
    };
    let opt = FinetuneOptions {
        lr: args.lr,
        steps: args.steps,
        seed,
        feature_count: args.features,
        init_scale: args.init_scale,
    };
    let result = toy::finetune(&clip, &samples, &teacher, &weights, &opt)?;

    if let Some(path) = &args.trace_out {
        let mut csv = String::from("step,total,sym,l1,anchor,ent,prior\n");
        for rec in &result.trace {
            csv.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                rec.step,
                fmt::fmt12(rec.loss.total),
                fmt::fmt12(rec.loss.sym),
                fmt::fmt12(rec.loss.l1),
                fmt::fmt12(rec.loss.anchor),
                fmt::fmt12(rec.loss.ent),
                fmt::fmt12(rec.loss.prior),
            ));
        }
        std::fs::write(path, csv)?;
    }

    let reduction = |before: f64, after: f64| {
        if before > 0.0 {
            100.0 * (before - after) / before
        } else {
            0.0
        }
    };
    let delta_j = match (&result.cons_before, &result.cons_after) {
        (Some(b), Some(a)) => Some(metrics::delta_cons(b, a)),
        _ => None,
    };
    let final_loss = &result.trace.last().expect("nonempty trace").loss;
    let doc = json!({
        "clip_id": clip.clip_id,
        "steps": args.steps,
        "before": result.before,
        "after": result.after,
        "symkl_reduction_pct": reduction(result.before.symkl_bca, result.after.symkl_bca),
        "l1_reduction_pct": reduction(result.before.l1_bca, result.after.l1_bca),
        "cons_before": result.cons_before,
        "cons_after": result.cons_after,
        "delta_j": delta_j,
        "final_loss": final_loss,
        "initial_loss": result.trace.first().expect("nonempty trace").loss,
    });
    emit(&fmt::to_json_12(&doc), args.report_out.as_deref())
}

fn reformat_report(args: ReportArgs) -> Result<()> {
    if let Some(out) = &args.out {
        ensure_writable(out)?;
    }
    let text = std::fs::read_to_string(&args.input)?;
    let report: MetricReport = serde_json::from_str(&text)?;
    write_report(&report, args.format, args.out.as_deref())
}
