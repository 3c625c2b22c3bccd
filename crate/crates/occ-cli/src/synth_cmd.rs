//! `occ synth`: write a complete synthetic clip (frames + ground truth +
//! manifest) that the rest of the pipeline can consume.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use occ_core::cloud::DEFAULT_WALL_HEIGHT;
use occ_core::geom::Vec3;
use occ_core::io::{self, Tensor, TensorData};
use occ_core::synth::{analytic_grid, generate_scene, render_frame, SceneConfig};
use occ_core::types::{CameraIntrinsics, GridSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::stages;
use crate::summary;

#[derive(Args)]
pub struct SynthArgs {
    /// Output directory (created if missing).
    #[arg(long)]
    out_dir: PathBuf,
    /// Scene seed; identical seeds give identical clips.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Number of rendered frames (>= 3).
    #[arg(long, default_value_t = 4)]
    frames: usize,
    /// Furniture slab count.
    #[arg(long, default_value_t = 5)]
    furniture: usize,
    /// Frame width in pixels.
    #[arg(long, default_value_t = 96)]
    width: u32,
    /// Frame height in pixels.
    #[arg(long, default_value_t = 72)]
    height: u32,
    /// Vertical field of view in degrees.
    #[arg(long, default_value_t = 70.0)]
    fov_deg: f64,
    /// Synthetic feature dimension D.
    #[arg(long, default_value_t = 8)]
    feature_dim: usize,
    /// Voxel edge length in meters (dataset convention: 8 cm).
    #[arg(long, default_value_t = 0.08)]
    voxel_size: f64,
    /// Containment samples per voxel for the ground-truth grid.
    #[arg(long, default_value_t = 8)]
    samples_per_voxel: usize,
    /// Interior wall height in meters (dataset convention).
    #[arg(long, default_value_t = DEFAULT_WALL_HEIGHT)]
    wall_height: f64,
}

pub fn run(args: SynthArgs) -> Result<()> {
    std::fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;

    let config = SceneConfig {
        furniture_count: args.furniture,
        pose_count: args.frames,
        wall_height: args.wall_height,
        ..SceneConfig::default()
    };
    let (scene, trajectory) = generate_scene::<f64>(args.seed, &config)?;

    let fov = args.fov_deg.to_radians();
    let fy = 0.5 * args.height as f64 / (0.5 * fov).tan();
    let intr = CameraIntrinsics::new(
        fy,
        fy,
        (args.width as f64 - 1.0) / 2.0,
        (args.height as f64 - 1.0) / 2.0,
        args.width,
        args.height,
    )?;

    // Ground-truth spec covers every box (shell included) at the voxel size.
    let (lo, hi) = scene.boxes().iter().fold(
        (Vec3::splat(f64::INFINITY), Vec3::splat(f64::NEG_INFINITY)),
        |(lo, hi), b| (lo.min_component_wise(b.min), hi.max_component_wise(b.max)),
    );
    let extent = hi - lo;
    let dims = [
        (extent.x / args.voxel_size).ceil() as usize,
        (extent.y / args.voxel_size).ceil() as usize,
        (extent.z / args.voxel_size).ceil() as usize,
    ];
    let spec = GridSpec::new(lo, args.voxel_size, dims)?;
    let gt = analytic_grid(&scene, &spec, args.samples_per_voxel);
    io::write_grid(&args.out_dir.join("gt.occg"), &stages::grid_to_f32(&gt))?;

    // Clip-level voxel features: seeded synthetic stand-ins for a 3D
    // network's output.
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed ^ 0x7fea_00dd);
    let n = spec.voxel_count();
    let vox_values: Vec<f32> = (0..n * args.feature_dim)
        .map(|_| rng.gen_range(-1.0f32..1.0))
        .collect();
    let vox_tensor = Tensor::new(
        vec![n as u64, args.feature_dim as u64],
        TensorData::F32(vox_values),
    )?;
    io::write_tensor(&args.out_dir.join("voxel_features.occt"), &vox_tensor)?;

    let mut manifest_frames = Vec::with_capacity(trajectory.len());
    let mut total_valid = 0usize;
    for (k, pose) in trajectory.iter().enumerate() {
        let (depth, labels) = render_frame(&scene, pose, &intr);
        total_valid += labels.ids().iter().filter(|l| l.is_some()).count();

        let depth_name = format!("depth_{k}.occt");
        let mask_name = format!("mask_{k}.occt");
        let feat_name = format!("features_{k}.occt");
        io::write_tensor(
            &args.out_dir.join(&depth_name),
            &stages::depth_to_tensor_f32(&depth)?,
        )?;
        io::write_tensor(
            &args.out_dir.join(&mask_name),
            &stages::label_map_to_tensor_u8(&labels)?,
        )?;

        let count = args.width as usize * args.height as usize * args.feature_dim;
        let values: Vec<f32> = (0..count).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
        let feat = Tensor::new(
            vec![
                args.height as u64,
                args.width as u64,
                args.feature_dim as u64,
            ],
            TensorData::F32(values),
        )?;
        io::write_tensor(&args.out_dir.join(&feat_name), &feat)?;

        manifest_frames.push((intr, *pose, depth_name, Some(mask_name), Some(feat_name)));
    }

    let manifest = io::manifest_text(
        &manifest_frames,
        Some("voxel_features.occt"),
        Some("gt.occg"),
    );
    io::write_atomic(&args.out_dir.join("manifest.txt"), manifest.as_bytes())?;

    summary!(
        "synth",
        seed = args.seed,
        frames = trajectory.len(),
        boxes = scene.boxes().len(),
        grid_voxels = spec.voxel_count(),
        valid_pixels = total_valid,
        wall_height = scene.wall_height(),
    );
    Ok(())
}
