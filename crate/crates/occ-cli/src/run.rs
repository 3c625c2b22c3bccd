//! `occ run`: the whole pipeline from one manifest.
//!
//! lift → filter → align/scale → voxelize → per-frame distillation loss →
//! evaluation against the manifest's ground-truth grid. Stages that lack
//! inputs (no masks, no voxel features, no ground truth) are skipped with no
//! record; explicit `--skip-*` flags disable the optional stages.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use occ_core::cloud::{self, SimilarityTransform};
use occ_core::distill;
use occ_core::geom::Vec3;
use occ_core::io::{self, FrameEntry};
use occ_core::lift::{self, PixelVoxelMap};
use occ_core::types::{DepthMap, GridSpec, SemanticPointCloud};
use occ_core::voxel;

use crate::stages;
use crate::summary;

#[derive(Args)]
pub struct RunArgs {
    /// Clip manifest.
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory (created if missing); the voted grid lands in
    /// `grid.occg`.
    #[arg(long)]
    out_dir: PathBuf,

    // filter
    /// Skip both outlier filters.
    #[arg(long)]
    skip_filter: bool,
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

    // align
    /// Skip floor alignment and metric scaling.
    #[arg(long)]
    skip_align: bool,
    /// RANSAC iterations (engineering default).
    #[arg(long, default_value_t = 2048)]
    iterations: usize,
    /// RANSAC inlier threshold (engineering default: 0.01 x bounding
    /// diagonal).
    #[arg(long)]
    inlier_threshold: Option<f64>,
    /// Seed for the seeded stages.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Metric anchor: interior wall height in meters (dataset convention).
    #[arg(long, default_value_t = cloud::DEFAULT_WALL_HEIGHT)]
    target_height: f64,
    /// Align only; skip metric scaling.
    #[arg(long)]
    skip_scale: bool,

    // voxelize
    /// Voxel edge length in meters (dataset convention: 8 cm); ignored when
    /// a grid spec is adopted.
    #[arg(long, default_value_t = 0.08)]
    voxel_size: f64,
    /// Grid dims X,Y,Z (dataset convention: 60,60,36); ignored when a grid
    /// spec is adopted.
    #[arg(long)]
    dims: Option<String>,
    /// Adopt the spec of this grid file (default: the manifest's
    /// ground-truth grid when present).
    #[arg(long)]
    spec_from: Option<PathBuf>,
    /// Window anchor when dims are fixed: `min` or `center`.
    #[arg(long, default_value = "min")]
    anchor: String,

    // distill
    /// Skip the distillation-loss stage.
    #[arg(long)]
    skip_distill: bool,
    /// Softmax temperature (engineering default; no published value).
    #[arg(long, default_value_t = 0.07)]
    tau: f64,
    /// L2-normalize pooled rows before the dot products.
    #[arg(long)]
    normalize: bool,
    /// Split mask regions into 4-connected components.
    #[arg(long)]
    split_components: bool,
    /// Report per-frame mean loss alongside the sum.
    #[arg(long)]
    mean: bool,

    // eval
    /// Skip evaluation against the manifest's ground-truth grid.
    #[arg(long)]
    skip_eval: bool,
    /// Average all 11 classes (absent as 0) in the mIoU.
    #[arg(long)]
    all_classes: bool,
}

struct LoadedFrame {
    entry: FrameEntry,
    depth: DepthMap<f64>,
}

pub fn run(args: RunArgs) -> Result<()> {
    std::fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;
    let manifest = io::load_manifest(&args.manifest)?;
    if manifest.frames.is_empty() {
        bail!("manifest has no frames");
    }

    // lift
    let frames: Vec<LoadedFrame> = manifest
        .frames
        .iter()
        .map(|entry| {
            let tensor = io::read_tensor(&entry.depth)
                .with_context(|| format!("reading {}", entry.depth.display()))?;
            Ok(LoadedFrame {
                entry: entry.clone(),
                depth: stages::depth_from_tensor(&tensor)?,
            })
        })
        .collect::<Result<_>>()?;
    let clouds: Vec<SemanticPointCloud<f64>> = frames
        .iter()
        .map(|f| crate::lift_frame(&f.entry))
        .collect::<Result<_>>()?;
    let raw = SemanticPointCloud::concat(&clouds);
    summary!("lift", frames = frames.len(), points = raw.len());

    // filter
    let filtered = if args.skip_filter {
        raw
    } else {
        let input = raw.len();
        let radius = args
            .radius
            .unwrap_or_else(|| 0.05 * raw.bounding_diagonal());
        let after_radius = cloud::radius_filter(&raw, radius, args.min_neighbors)?;
        let removed_radius = input - after_radius.len();
        let kept = cloud::statistical_filter(&after_radius, args.knn, args.std_ratio)?;
        summary!(
            "filter",
            input = input,
            kept = kept.len(),
            removed_radius = removed_radius,
            removed_statistical = after_radius.len() - kept.len(),
        );
        kept
    };

    // align + scale; the composed transform also maps lifted pixels during
    // distillation so maps and grid stay in one frame.
    let (aligned, transform) = if args.skip_align {
        (filtered, SimilarityTransform::identity())
    } else {
        let threshold = args
            .inlier_threshold
            .unwrap_or_else(|| 0.01 * filtered.bounding_diagonal());
        let plane =
            cloud::estimate_floor_plane(&filtered, args.iterations, threshold, args.seed)?;
        let (upright, rigid) = cloud::align_z_up(&filtered, &plane)?;
        let n = plane.normal();
        let (metric, scale) = if args.skip_scale {
            (upright, 1.0)
        } else {
            cloud::metric_scale(&upright, args.target_height)?
        };
        summary!(
            "align",
            floor_nx = n.x,
            floor_ny = n.y,
            floor_nz = n.z,
            floor_offset = plane.offset(),
            scale = scale,
        );
        let total = SimilarityTransform::compose(&SimilarityTransform::uniform_scale(scale), &rigid);
        (metric, total)
    };

    // voxelize
    let spec = resolve_spec(&args, &manifest, &aligned)?;
    let hist = voxel::accumulate(&aligned, &spec);
    let grid = voxel::vote(&hist);
    let grid_path = args.out_dir.join("grid.occg");
    io::write_grid(&grid_path, &stages::grid_to_f32(&grid))?;
    summary!(
        "voxelize",
        total = spec.voxel_count(),
        occupied = grid.occupied_count(),
        in_range = hist.in_range_points(),
        dropped = hist.dropped_points(),
    );

    // distill
    if !args.skip_distill {
        if let Some(vf_path) = &manifest.voxel_features {
            let vox_tensor = io::read_tensor(vf_path)?;
            let vox = stages::voxel_features_from_tensor(&vox_tensor, spec)?;
            let mut loss_sum = 0.0;
            let mut pair_sum = 0usize;
            let mut frames_with_loss = 0usize;
            for (k, frame) in frames.iter().enumerate() {
                let (Some(mask_path), Some(feat_path)) =
                    (&frame.entry.mask, &frame.entry.features)
                else {
                    continue;
                };
                let mask = stages::label_map_from_tensor(&io::read_tensor(mask_path)?)?;
                let features = stages::feature_map_from_tensor(&io::read_tensor(feat_path)?)?;
                let part = distill::superpixels_from_mask(&mask, args.split_components);
                if part.count() == 0 {
                    continue;
                }
                let map = transformed_map(&frame.depth, &frame.entry, &transform, &spec)?;
                let assign = distill::assign_supervoxels(&part, &map)?;
                let f2d = distill::pool_superpixel_features(&features, &part)?;
                let f3d = distill::pool_supervoxel_features(&vox, &assign)?;
                let (loss, pairs) =
                    match distill::contrastive_loss(&f3d, &f2d, args.tau, args.normalize) {
                        Ok(ok) => ok,
                        Err(occ_core::Error::NoMatchedPairs) => {
                            // A frame whose pixels all miss the grid has no
                            // pairs; it contributes nothing.
                            summary!("loss", frame = k, skipped = "no_matched_pairs");
                            continue;
                        }
                        Err(e) => return Err(e.into()),
                    };
                if args.mean {
                    summary!(
                        "loss",
                        frame = k,
                        loss = loss,
                        loss_mean = loss / pairs as f64,
                        valid_pairs = pairs,
                    );
                } else {
                    summary!("loss", frame = k, loss = loss, valid_pairs = pairs);
                }
                loss_sum += loss;
                pair_sum += pairs;
                frames_with_loss += 1;
            }
            if frames_with_loss > 0 {
                summary!(
                    "loss_total",
                    frames = frames_with_loss,
                    loss_sum = loss_sum,
                    valid_pairs = pair_sum,
                    tau = args.tau,
                    normalize = args.normalize,
                );
            }
        }
    }

    // eval
    if !args.skip_eval {
        if let Some(gt_path) = &manifest.grid {
            let gt = io::read_grid(gt_path)?;
            let pred = stages::grid_to_f32(&grid);
            if pred.spec.same_layout(&gt.spec) {
                crate::print_eval(&pred, &gt, args.all_classes)?;
            } else {
                // Different window: compare on the ground-truth layout.
                let windowed = voxel::window_to_grid(&pred, &gt.spec)?;
                crate::print_eval(&windowed, &gt, args.all_classes)?;
            }
        }
    }
    Ok(())
}

fn resolve_spec(
    args: &RunArgs,
    manifest: &io::FrameManifest,
    cloud: &SemanticPointCloud<f64>,
) -> Result<GridSpec<f64>> {
    let adopt = args.spec_from.clone().or_else(|| manifest.grid.clone());
    if let Some(path) = adopt {
        let grid = io::read_grid(&path)
            .with_context(|| format!("reading grid spec from {}", path.display()))?;
        return Ok(grid.spec.cast::<f64>());
    }
    let dims = stages::parse_triple_usize(args.dims.as_deref().unwrap_or("60,60,36"))?;
    let (lo, hi) = cloud.bounding_box().context("empty cloud")?;
    let origin = match args.anchor.as_str() {
        "min" => lo,
        "center" => {
            let center = (lo + hi) * 0.5;
            center
                - Vec3::new(
                    dims[0] as f64 * args.voxel_size * 0.5,
                    dims[1] as f64 * args.voxel_size * 0.5,
                    dims[2] as f64 * args.voxel_size * 0.5,
                )
        }
        other => bail!("unknown anchor {other:?} (use min or center)"),
    };
    Ok(GridSpec::new(origin, args.voxel_size, dims)?)
}

/// Pixel→voxel map with the pipeline's similarity transform applied to every
/// lifted point, so entries land in the aligned grid frame.
fn transformed_map(
    depth: &DepthMap<f64>,
    entry: &FrameEntry,
    transform: &SimilarityTransform<f64>,
    spec: &GridSpec<f64>,
) -> Result<PixelVoxelMap<f64>> {
    let (w, h) = (depth.width(), depth.height());
    let mut entries = Vec::with_capacity(w as usize * h as usize);
    for v in 0..h {
        for u in 0..w {
            let d = depth.at(u, v);
            let entry_idx = if DepthMap::is_valid(d) {
                let p = lift::pixel_to_world(u, v, d, &entry.intrinsics, &entry.pose);
                spec.voxel_of_point(transform.apply(p))
                    .map(|c| spec.linear_index(c).expect("in-range voxel"))
            } else {
                None
            };
            entries.push(entry_idx);
        }
    }
    Ok(PixelVoxelMap::from_entries(*spec, w, h, entries)?)
}
