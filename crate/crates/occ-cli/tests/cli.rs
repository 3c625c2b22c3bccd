//! Subcommand-level integration: each stage runs as a real process against
//! files produced by the previous stage.

use std::path::Path;
use std::process::{Command, Output};

use occ_core::io::{self, Tensor, TensorData};

fn occ(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_occ"))
        .args(args)
        .output()
        .expect("spawn occ")
}

fn occ_ok(args: &[&str]) -> String {
    let out = occ(args);
    assert!(
        out.status.success(),
        "occ {:?} failed: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("utf-8 summary")
}

fn field<'a>(summary: &'a str, stage: &str, key: &str) -> &'a str {
    let line = summary
        .lines()
        .find(|l| l.split_whitespace().next() == Some(&format!("stage={stage}")))
        .unwrap_or_else(|| panic!("no {stage} record in {summary:?}"));
    line.split_whitespace()
        .find_map(|kv| kv.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no {key} in {line:?}"))
}

fn p(path: &Path) -> String {
    path.display().to_string()
}

#[test]
fn stage_by_stage_pipeline_matches_run() {
    let dir = tempfile::tempdir().unwrap();
    let clip = dir.path().join("clip");
    occ_ok(&["synth", "--out-dir", &p(&clip), "--seed", "31", "--frames", "3"]);
    let manifest = clip.join("manifest.txt");
    let gt = clip.join("gt.occg");

    // lift -> filter -> align -> voxelize
    let cloud = dir.path().join("cloud");
    let lifted = occ_ok(&["lift", "--manifest", &p(&manifest), "--out", &p(&cloud)]);
    assert_eq!(field(&lifted, "lift", "frames"), "3");
    assert!(cloud.with_extension("points.occt").exists());
    assert!(cloud.with_extension("labels.occt").exists());

    let filtered_stem = dir.path().join("filtered");
    let filtered = occ_ok(&["filter", "--cloud", &p(&cloud), "--out", &p(&filtered_stem)]);
    let kept: usize = field(&filtered, "filter", "kept").parse().unwrap();
    assert!(kept > 0);

    let aligned_stem = dir.path().join("aligned");
    let aligned = occ_ok(&["align", "--cloud", &p(&filtered_stem), "--out", &p(&aligned_stem)]);
    let scale: f64 = field(&aligned, "align", "scale").parse().unwrap();
    assert!((scale - 1.0).abs() < 0.05, "synthetic room is already metric");

    let grid = dir.path().join("pred.occg");
    let voxelized = occ_ok(&[
        "voxelize",
        "--cloud",
        &p(&aligned_stem),
        "--out",
        &p(&grid),
        "--spec-from",
        &p(&gt),
    ]);
    let occupied: usize = field(&voxelized, "voxelize", "occupied").parse().unwrap();
    assert!(occupied > 500);

    // map -> superpix -> pool -> loss for frame 0
    let map_path = dir.path().join("map0.occt");
    occ_ok(&[
        "map",
        "--manifest",
        &p(&manifest),
        "--frame",
        "0",
        "--out",
        &p(&map_path),
        "--spec-from",
        &p(&gt),
    ]);
    let part_path = dir.path().join("part0.occt");
    let sp = occ_ok(&[
        "superpix",
        "--mask",
        &p(&clip.join("mask_0.occt")),
        "--out",
        &p(&part_path),
    ]);
    let q: usize = field(&sp, "superpix", "superpixels").parse().unwrap();
    assert!(q >= 2);

    let f2d = dir.path().join("f2d.occt");
    let f3d = dir.path().join("f3d.occt");
    occ_ok(&[
        "pool",
        "--manifest",
        &p(&manifest),
        "--frame",
        "0",
        "--part",
        &p(&part_path),
        "--map",
        &p(&map_path),
        "--out-2d",
        &p(&f2d),
        "--out-3d",
        &p(&f3d),
        "--spec-from",
        &p(&gt),
    ]);
    assert!(dir.path().join("f3d.valid.occt").exists());

    let loss_out = occ_ok(&[
        "loss",
        "--f3d",
        &p(&f3d),
        "--f2d",
        &p(&f2d),
        "--grad-out",
        &p(&dir.path().join("grad.occt")),
    ]);
    let loss: f64 = field(&loss_out, "loss", "loss").parse().unwrap();
    assert!(loss >= 0.0 && loss.is_finite());
    let grad = io::read_tensor(&dir.path().join("grad.occt")).unwrap();
    assert_eq!(grad.dims().len(), 2);
    assert_eq!(grad.dims()[0] as usize, q);

    // eval against ground truth works on the shared spec
    let eval = occ_ok(&["eval", "--pred", &p(&grid), "--gt", &p(&gt)]);
    let iou: f64 = field(&eval, "eval", "iou").parse().unwrap();
    assert!((0.0..=100.0).contains(&iou));
}

#[test]
fn eval_perfect_prediction_reports_100() {
    let dir = tempfile::tempdir().unwrap();
    let clip = dir.path().join("clip");
    occ_ok(&["synth", "--out-dir", &p(&clip), "--seed", "5", "--frames", "3"]);
    let gt = clip.join("gt.occg");
    let eval = occ_ok(&["eval", "--pred", &p(&gt), "--gt", &p(&gt)]);
    assert_eq!(field(&eval, "eval", "iou"), "100");
    assert_eq!(field(&eval, "eval", "miou"), "100");
}

#[test]
fn eval_decodes_score_tensors() {
    let dir = tempfile::tempdir().unwrap();
    let clip = dir.path().join("clip");
    occ_ok(&["synth", "--out-dir", &p(&clip), "--seed", "21", "--frames", "3"]);
    let gt_path = clip.join("gt.occg");
    let gt = io::read_grid(&gt_path).unwrap();

    // One-hot scores reproducing the ground truth decode to a perfect score.
    let n = gt.spec.voxel_count();
    let mut scores = vec![0.0f32; n * 13];
    for (i, label) in gt.labels().iter().enumerate() {
        let col = match label.as_u8() {
            255 => 0, // decode never predicts unknown; free is the mask filler
            c => c as usize,
        };
        scores[i * 13 + col] = 1.0;
    }
    let tensor = Tensor::new(vec![n as u64, 13], TensorData::F32(scores)).unwrap();
    let scores_path = dir.path().join("scores.occt");
    io::write_tensor(&scores_path, &tensor).unwrap();

    let eval = occ_ok(&[
        "eval",
        "--pred-scores",
        &p(&scores_path),
        "--gt",
        &p(&gt_path),
    ]);
    assert_eq!(field(&eval, "eval", "iou"), "100");
    assert_eq!(field(&eval, "eval", "miou"), "100");
}

#[test]
fn loss_single_pair_fixture_prints_zero() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("one.occt");
    let tensor = Tensor::new(vec![1, 3], TensorData::F64(vec![0.2, -0.1, 0.9])).unwrap();
    io::write_tensor(&f, &tensor).unwrap();
    let out = occ_ok(&["loss", "--f3d", &p(&f), "--f2d", &p(&f), "--mean"]);
    assert_eq!(field(&out, "loss", "loss"), "0");
    assert_eq!(field(&out, "loss", "valid_pairs"), "1");
}

#[test]
fn failures_exit_nonzero_without_partial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out_grid = dir.path().join("never.occg");
    let missing = dir.path().join("missing-cloud");
    let result = occ(&["voxelize", "--cloud", &p(&missing), "--out", &p(&out_grid), "--auto"]);
    assert!(!result.status.success());
    assert!(!out_grid.exists(), "failed stage must not leave outputs");

    // Corrupt grid file: eval must fail cleanly.
    let bad = dir.path().join("bad.occg");
    std::fs::write(&bad, b"OCCGgarbage").unwrap();
    let result = occ(&["eval", "--pred", &p(&bad), "--gt", &p(&bad)]);
    assert!(!result.status.success());
}

#[test]
fn help_marks_convention_and_engineering_defaults() {
    let out = occ_ok(&["run", "--help"]);
    assert!(out.contains("dataset convention"));
    assert!(out.contains("engineering default"));
}
