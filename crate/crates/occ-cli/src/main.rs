//! `occ`: batch front end for the semantic occupancy pipeline.
//!
//! Subcommands chain through the binary tensor/grid formats; every run
//! prints line-oriented `key=value` summary records and exits nonzero on any
//! error without leaving partial output files.

mod run;
mod stages;
mod synth_cmd;

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use occ_core::cloud;
use occ_core::distill;
use occ_core::io;
use occ_core::lift;
use occ_core::metrics;
use occ_core::types::{ClassCode, GridSpec, SemanticPointCloud};
use occ_core::voxel;

use stages::SpecArgs;

#[derive(Parser)]
#[command(
    name = "occ",
    about = "Semantic occupancy pipeline: depth frames to voxel grids, region-contrastive pooling, and evaluation",
    version
)]
struct Cli {
    /// Worker threads (0 = available parallelism). Results do not depend on
    /// the thread count.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic room clip: depth/mask/feature frames, voxel
    /// features, ground-truth grid, and a manifest.
    Synth(synth_cmd::SynthArgs),
    /// Back-project manifest frames into a labeled point cloud.
    Lift(LiftArgs),
    /// Clean a point cloud with the radius and statistical outlier filters.
    Filter(FilterArgs),
    /// Estimate the floor plane, rotate z-up, and scale to metric height.
    Align(AlignArgs),
    /// Vote a labeled point cloud into a semantic voxel grid.
    Voxelize(VoxelizeArgs),
    /// Build the per-pixel voxel-index map for one frame.
    Map(MapArgs),
    /// Group a region mask into superpixels.
    Superpix(SuperpixArgs),
    /// Pool 2D superpixel and 3D supervoxel features for one frame.
    Pool(PoolArgs),
    /// Contrastive distillation loss (and optional gradient) between pooled
    /// feature files.
    Loss(LossArgs),
    /// Evaluate a predicted grid against ground truth (IoU / mIoU).
    Eval(EvalArgs),
    /// Run the full pipeline from a manifest: lift, filter, align, voxelize,
    /// distill, evaluate.
    Run(run::RunArgs),
}

#[derive(Args)]
struct LiftArgs {
    /// Clip manifest.
    #[arg(long)]
    manifest: PathBuf,
    /// Output cloud stem (writes <stem>.points.occt and <stem>.labels.occt).
    #[arg(long)]
    out: PathBuf,
    /// Lift a single frame instead of the whole clip.
    #[arg(long)]
    frame: Option<usize>,
}

#[derive(Args)]
struct FilterArgs {
    /// Input cloud stem.
    #[arg(long)]
    cloud: PathBuf,
    /// Output cloud stem.
    #[arg(long)]
    out: PathBuf,
    /// Radius-filter radius in meters (engineering default: 0.05 x bounding
    /// diagonal).
    #[arg(long)]
    radius: Option<f64>,
    /// Neighbors required within the radius (engineering default).
    #[arg(long, default_value_t = 4)]
    min_neighbors: usize,
    /// Neighbor count for the statistical filter (engineering default).
    #[arg(long, default_value_t = 16)]
    knn: usize,
    /// Standard-deviation multiplier for the statistical filter
    /// (engineering default).
    #[arg(long, default_value_t = 2.0)]
    std_ratio: f64,
    /// Skip the radius filter.
    #[arg(long)]
    skip_radius: bool,
    /// Skip the statistical filter.
    #[arg(long)]
    skip_statistical: bool,
}

#[derive(Args)]
struct AlignArgs {
    /// Input cloud stem.
    #[arg(long)]
    cloud: PathBuf,
    /// Output cloud stem.
    #[arg(long)]
    out: PathBuf,
    /// RANSAC iterations (engineering default).
    #[arg(long, default_value_t = 2048)]
    iterations: usize,
    /// RANSAC inlier threshold in input units (engineering default:
    /// 0.01 x bounding diagonal).
    #[arg(long)]
    inlier_threshold: Option<f64>,
    /// RANSAC seed.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Metric anchor: interior wall height in meters (dataset convention).
    #[arg(long, default_value_t = cloud::DEFAULT_WALL_HEIGHT)]
    target_height: f64,
    /// Align only; skip metric scaling.
    #[arg(long)]
    skip_scale: bool,
}

#[derive(Args)]
struct VoxelizeArgs {
    /// Input cloud stem.
    #[arg(long)]
    cloud: PathBuf,
    /// Output grid file (.occg).
    #[arg(long)]
    out: PathBuf,
    /// Voxel edge length in meters (dataset convention: 8 cm).
    #[arg(long, default_value_t = 0.08)]
    voxel_size: f64,
    /// Grid dims X,Y,Z (dataset convention: 60,60,36).
    #[arg(long)]
    dims: Option<String>,
    /// Size the grid from the cloud extent instead of fixed dims.
    #[arg(long)]
    auto: bool,
    /// Window anchor when dims are fixed: `min` (cloud minimum) or `center`.
    #[arg(long, default_value = "min")]
    anchor: String,
    /// Explicit grid origin x,y,z (overrides --anchor).
    #[arg(long)]
    origin: Option<String>,
    /// Adopt the spec of an existing grid file.
    #[arg(long)]
    spec_from: Option<PathBuf>,
}

#[derive(Args)]
struct MapArgs {
    /// Clip manifest.
    #[arg(long)]
    manifest: PathBuf,
    /// Frame index.
    #[arg(long)]
    frame: usize,
    /// Output pixel-map tensor (.occt, u32, max = unmapped).
    #[arg(long)]
    out: PathBuf,
    /// Adopt the grid spec of an existing grid file.
    #[arg(long)]
    spec_from: Option<PathBuf>,
    /// Voxel edge length in meters (dataset convention: 8 cm).
    #[arg(long, default_value_t = 0.08)]
    voxel_size: f64,
    /// Grid dims X,Y,Z (dataset convention: 60,60,36).
    #[arg(long)]
    dims: Option<String>,
    /// Grid origin x,y,z.
    #[arg(long)]
    origin: Option<String>,
}

#[derive(Args)]
struct SuperpixArgs {
    /// Region mask tensor [H, W] (unsigned ints; dtype max = ignored).
    #[arg(long)]
    mask: PathBuf,
    /// Output partition tensor (.occt, u32, max = unassigned).
    #[arg(long)]
    out: PathBuf,
    /// Split each region id into 4-connected components.
    #[arg(long)]
    split_components: bool,
}

#[derive(Args)]
struct PoolArgs {
    /// Clip manifest (frame features and clip voxel features).
    #[arg(long)]
    manifest: PathBuf,
    /// Frame index.
    #[arg(long)]
    frame: usize,
    /// Superpixel partition tensor from `superpix`.
    #[arg(long)]
    part: PathBuf,
    /// Pixel-map tensor from `map`.
    #[arg(long)]
    map: PathBuf,
    /// Output pooled 2D features [Q, D] (validity sidecar written alongside).
    #[arg(long)]
    out_2d: PathBuf,
    /// Output pooled 3D features [Q, D] (validity sidecar written alongside).
    #[arg(long)]
    out_3d: PathBuf,
    /// Adopt the grid spec of an existing grid file.
    #[arg(long)]
    spec_from: Option<PathBuf>,
    /// Voxel edge length in meters (dataset convention: 8 cm).
    #[arg(long, default_value_t = 0.08)]
    voxel_size: f64,
    /// Grid dims X,Y,Z (dataset convention: 60,60,36).
    #[arg(long)]
    dims: Option<String>,
    /// Grid origin x,y,z.
    #[arg(long)]
    origin: Option<String>,
}

#[derive(Args)]
struct LossArgs {
    /// Pooled 3D features [Q, D].
    #[arg(long)]
    f3d: PathBuf,
    /// Pooled 2D features [Q, D].
    #[arg(long)]
    f2d: PathBuf,
    /// Softmax temperature (engineering default; no published value).
    #[arg(long, default_value_t = 0.07)]
    tau: f64,
    /// L2-normalize rows before the dot products (default: raw dot product).
    #[arg(long)]
    normalize: bool,
    /// Also report the loss divided by the matched-pair count.
    #[arg(long)]
    mean: bool,
    /// Write the analytic gradient d(loss)/d(f3d) to this tensor file.
    #[arg(long)]
    grad_out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Predicted grid (.occg).
    #[arg(long, conflicts_with = "pred_scores")]
    pred: Option<PathBuf>,
    /// Per-voxel class scores [N, 13] over the ground-truth grid, decoded by
    /// argmax before evaluation.
    #[arg(long)]
    pred_scores: Option<PathBuf>,
    /// Ground-truth grid (.occg).
    #[arg(long)]
    gt: PathBuf,
    /// Average all 11 classes (absent classes as 0) instead of only the
    /// present ones.
    #[arg(long)]
    all_classes: bool,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .context("initializing thread pool")?;
    }
    match cli.command {
        Command::Synth(args) => synth_cmd::run(args),
        Command::Lift(args) => cmd_lift(args),
        Command::Filter(args) => cmd_filter(args),
        Command::Align(args) => cmd_align(args),
        Command::Voxelize(args) => cmd_voxelize(args),
        Command::Map(args) => cmd_map(args),
        Command::Superpix(args) => cmd_superpix(args),
        Command::Pool(args) => cmd_pool(args),
        Command::Loss(args) => cmd_loss(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Run(args) => run::run(args),
    }
}

/// Back-project one manifest frame, attaching per-pixel classes from its
/// mask when present (mask bytes are class codes; anything else errors).
fn lift_frame(entry: &io::FrameEntry) -> Result<SemanticPointCloud<f64>> {
    let depth_tensor = io::read_tensor(&entry.depth)
        .with_context(|| format!("reading {}", entry.depth.display()))?;
    let depth = stages::depth_from_tensor(&depth_tensor)?;
    let cloud = lift::backproject(&depth, &entry.intrinsics, &entry.pose)?;
    let Some(mask_path) = &entry.mask else {
        return Ok(cloud);
    };
    let mask_tensor =
        io::read_tensor(mask_path).with_context(|| format!("reading {}", mask_path.display()))?;
    let mask = mask_tensor
        .as_u8()
        .context("semantic mask tensor must be u8 class codes")?;
    if mask.len() != depth.values().len() {
        bail!("mask and depth sizes differ for {}", mask_path.display());
    }
    // Valid pixels in row-major order mirror the backprojected point order.
    let mut labels = Vec::with_capacity(cloud.len());
    for (i, &d) in depth.values().iter().enumerate() {
        if occ_core::types::DepthMap::is_valid(d) {
            labels.push(ClassCode::from_u8(mask[i])?);
        }
    }
    Ok(SemanticPointCloud::new(cloud.points().to_vec(), labels)?)
}

fn cmd_lift(args: LiftArgs) -> Result<()> {
    let manifest = io::load_manifest(&args.manifest)?;
    let selected: Vec<&io::FrameEntry> = match args.frame {
        Some(k) => vec![manifest
            .frames
            .get(k)
            .with_context(|| format!("manifest has no frame {k}"))?],
        None => manifest.frames.iter().collect(),
    };
    let clouds: Vec<SemanticPointCloud<f64>> = selected
        .iter()
        .map(|e| lift_frame(e))
        .collect::<Result<_>>()?;
    let merged = SemanticPointCloud::concat(&clouds);
    stages::save_cloud(&args.out, &merged)?;
    summary!("lift", frames = clouds.len(), points = merged.len());
    Ok(())
}

fn cmd_filter(args: FilterArgs) -> Result<()> {
    let cloud = stages::load_cloud(&args.cloud)?;
    let input = cloud.len();
    let radius = args
        .radius
        .unwrap_or_else(|| 0.05 * cloud.bounding_diagonal());
    let after_radius = if args.skip_radius {
        cloud
    } else {
        cloud::radius_filter(&cloud, radius, args.min_neighbors)?
    };
    let removed_radius = input - after_radius.len();
    let filtered = if args.skip_statistical {
        after_radius
    } else {
        cloud::statistical_filter(&after_radius, args.knn, args.std_ratio)?
    };
    let removed_statistical = input - removed_radius - filtered.len();
    stages::save_cloud(&args.out, &filtered)?;
    summary!(
        "filter",
        input = input,
        kept = filtered.len(),
        removed_radius = removed_radius,
        removed_statistical = removed_statistical,
        radius = radius,
    );
    Ok(())
}

fn cmd_align(args: AlignArgs) -> Result<()> {
    let cloud = stages::load_cloud(&args.cloud)?;
    let threshold = args
        .inlier_threshold
        .unwrap_or_else(|| 0.01 * cloud.bounding_diagonal());
    let plane = cloud::estimate_floor_plane(&cloud, args.iterations, threshold, args.seed)?;
    let (aligned, _) = cloud::align_z_up(&cloud, &plane)?;
    let n = plane.normal();
    let (out_cloud, scale) = if args.skip_scale {
        (aligned, 1.0)
    } else {
        cloud::metric_scale(&aligned, args.target_height)?
    };
    stages::save_cloud(&args.out, &out_cloud)?;
    summary!(
        "align",
        points = out_cloud.len(),
        floor_nx = n.x,
        floor_ny = n.y,
        floor_nz = n.z,
        floor_offset = plane.offset(),
        scale = scale,
    );
    Ok(())
}

fn resolve_voxelize_spec(args: &VoxelizeArgs, cloud: &SemanticPointCloud<f64>) -> Result<GridSpec<f64>> {
    if args.auto {
        return Ok(voxel::auto_spec(cloud, args.voxel_size)?);
    }
    if let Some(path) = &args.spec_from {
        let grid = io::read_grid(path)?;
        return Ok(grid.spec.cast::<f64>());
    }
    let dims = stages::parse_triple_usize(args.dims.as_deref().unwrap_or("60,60,36"))?;
    let origin = match (&args.origin, args.anchor.as_str()) {
        (Some(s), _) => stages::parse_triple_f64(s)?,
        (None, "min") => {
            let (lo, _) = cloud.bounding_box().context("empty cloud")?;
            lo
        }
        (None, "center") => {
            let (lo, hi) = cloud.bounding_box().context("empty cloud")?;
            let center = (lo + hi) * 0.5;
            let half = occ_core::geom::Vec3::new(
                dims[0] as f64 * args.voxel_size * 0.5,
                dims[1] as f64 * args.voxel_size * 0.5,
                dims[2] as f64 * args.voxel_size * 0.5,
            );
            center - half
        }
        (None, other) => bail!("unknown anchor {other:?} (use min or center)"),
    };
    Ok(GridSpec::new(origin, args.voxel_size, dims)?)
}

fn cmd_voxelize(args: VoxelizeArgs) -> Result<()> {
    let cloud = stages::load_cloud(&args.cloud)?;
    let spec = resolve_voxelize_spec(&args, &cloud)?;
    let hist = voxel::accumulate(&cloud, &spec);
    let grid = voxel::vote(&hist);
    io::write_grid(&args.out, &stages::grid_to_f32(&grid))?;
    summary!(
        "voxelize",
        total = spec.voxel_count(),
        occupied = grid.occupied_count(),
        in_range = hist.in_range_points(),
        dropped = hist.dropped_points(),
    );
    Ok(())
}

fn cmd_map(args: MapArgs) -> Result<()> {
    let manifest = io::load_manifest(&args.manifest)?;
    let entry = manifest
        .frames
        .get(args.frame)
        .with_context(|| format!("manifest has no frame {}", args.frame))?;
    let spec = SpecArgs {
        spec_from: args.spec_from,
        voxel_size: args.voxel_size,
        dims: args.dims,
        origin: args.origin,
    }
    .resolve()?;
    let depth_tensor = io::read_tensor(&entry.depth)?;
    let depth = stages::depth_from_tensor(&depth_tensor)?;
    let map = lift::build_pixel_voxel_map(&depth, &entry.intrinsics, &entry.pose, &spec)?;
    io::write_tensor(&args.out, &stages::map_to_tensor(&map)?)?;
    summary!(
        "map",
        frame = args.frame,
        pixels = map.entries().len(),
        mapped = map.mapped_count(),
    );
    Ok(())
}

fn cmd_superpix(args: SuperpixArgs) -> Result<()> {
    let mask_tensor = io::read_tensor(&args.mask)?;
    let mask = stages::label_map_from_tensor(&mask_tensor)?;
    let part = distill::superpixels_from_mask(&mask, args.split_components);
    io::write_tensor(&args.out, &stages::partition_to_tensor(&part)?)?;
    summary!(
        "superpix",
        superpixels = part.count(),
        split_components = args.split_components,
    );
    Ok(())
}

fn cmd_pool(args: PoolArgs) -> Result<()> {
    let manifest = io::load_manifest(&args.manifest)?;
    let entry = manifest
        .frames
        .get(args.frame)
        .with_context(|| format!("manifest has no frame {}", args.frame))?;
    let features_path = entry
        .features
        .as_ref()
        .with_context(|| format!("frame {} has no feature tensor", args.frame))?;
    let voxel_features_path = manifest
        .voxel_features
        .as_ref()
        .context("manifest has no clip.voxel_features record")?;

    let spec = SpecArgs {
        spec_from: args.spec_from,
        voxel_size: args.voxel_size,
        dims: args.dims,
        origin: args.origin,
    }
    .resolve()?;

    let part = stages::partition_from_tensor(&io::read_tensor(&args.part)?)?;
    let map = stages::map_from_tensor(&io::read_tensor(&args.map)?, spec)?;
    let features = stages::feature_map_from_tensor(&io::read_tensor(features_path)?)?;
    let vox = stages::voxel_features_from_tensor(&io::read_tensor(voxel_features_path)?, spec)?;

    let assign = distill::assign_supervoxels(&part, &map)?;
    let f2d = distill::pool_superpixel_features(&features, &part)?;
    let f3d = distill::pool_supervoxel_features(&vox, &assign)?;

    let (t2d, v2d) = stages::pooled_to_tensors(&f2d)?;
    let (t3d, v3d) = stages::pooled_to_tensors(&f3d)?;
    io::write_tensor(&args.out_2d, &t2d)?;
    io::write_tensor(&stages::validity_path(&args.out_2d), &v2d)?;
    io::write_tensor(&args.out_3d, &t3d)?;
    io::write_tensor(&stages::validity_path(&args.out_3d), &v3d)?;
    summary!(
        "pool",
        frame = args.frame,
        superpixels = part.count(),
        assigned_voxels = assign.assigned_voxels(),
        valid_3d_rows = f3d.valid_flags().iter().filter(|&&v| v).count(),
    );
    Ok(())
}

fn cmd_loss(args: LossArgs) -> Result<()> {
    let f3d = stages::pooled_from_files(&args.f3d)?;
    let f2d = stages::pooled_from_files(&args.f2d)?;
    let (loss, valid_pairs) = if let Some(grad_path) = &args.grad_out {
        let (loss, grad, valid_pairs) =
            distill::contrastive_loss_grad(&f3d, &f2d, args.tau, args.normalize)?;
        let tensor = occ_core::io::Tensor::new(
            vec![f3d.count() as u64, f3d.dim() as u64],
            occ_core::io::TensorData::F64(grad),
        )?;
        io::write_tensor(grad_path, &tensor)?;
        (loss, valid_pairs)
    } else {
        distill::contrastive_loss(&f3d, &f2d, args.tau, args.normalize)?
    };
    if args.mean {
        summary!(
            "loss",
            loss = loss,
            loss_mean = loss / valid_pairs as f64,
            valid_pairs = valid_pairs,
            tau = args.tau,
            normalize = args.normalize,
        );
    } else {
        summary!(
            "loss",
            loss = loss,
            valid_pairs = valid_pairs,
            tau = args.tau,
            normalize = args.normalize,
        );
    }
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let gt = io::read_grid(&args.gt)?;
    let pred = match (&args.pred, &args.pred_scores) {
        (Some(path), None) => io::read_grid(path)?,
        (None, Some(path)) => {
            let tensor = io::read_tensor(path)?;
            let dims = tensor.dims();
            let expected = [
                gt.spec.voxel_count() as u64,
                metrics::ClassScores::<f64>::CLASS_COUNT as u64,
            ];
            if dims != expected {
                bail!("score tensor must be {expected:?} for this grid, got {dims:?}");
            }
            let scores =
                metrics::ClassScores::new(gt.spec.cast::<f64>(), tensor.to_f64_vec())?;
            stages::grid_to_f32(&metrics::decode_occupancy(&scores))
        }
        _ => bail!("provide exactly one of --pred or --pred-scores"),
    };
    print_eval(&pred, &gt, args.all_classes)
}

/// Shared by `eval` and `run`: print per-class records then the headline
/// IoU/mIoU record.
fn print_eval(
    pred: &occ_core::types::VoxelGrid<f32>,
    gt: &occ_core::types::VoxelGrid<f32>,
    all_classes: bool,
) -> Result<()> {
    let iou = metrics::binary_iou(pred, gt)?;
    let sem = metrics::semantic_miou(pred, gt)?;
    for (i, class) in ClassCode::SEMANTIC.iter().enumerate() {
        match sem.per_class[i] {
            Some(v) => summary!("eval_class", class = class.name(), iou = v),
            None => summary!("eval_class", class = class.name(), iou = "absent"),
        }
    }
    let miou = if all_classes {
        sem.miou_all_classes()
    } else {
        sem.miou
    };
    summary!(
        "eval",
        iou = iou,
        miou = miou,
        all_classes = all_classes,
    );
    Ok(())
}
