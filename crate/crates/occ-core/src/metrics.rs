//! Occupancy decoding and semantic-scene-completion evaluation metrics.
//!
//! Evaluation masks out voxels whose ground truth is unknown, follows the
//! standard binary-IoU-over-occupancy and per-class-IoU protocol, and reports
//! percentages in [0, 100].

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::types::{ClassCode, GridSpec, VoxelGrid};

/// N×C per-voxel class scores with C = 13 columns in class-code order
/// (free, the 11 semantic classes, unknown).
#[derive(Debug, Clone)]
pub struct ClassScores<T> {
    pub spec: GridSpec<T>,
    values: Vec<T>,
}

impl<T: Real> ClassScores<T> {
    pub const CLASS_COUNT: usize = ClassCode::TOTAL_COUNT;

    pub fn new(spec: GridSpec<T>, values: Vec<T>) -> Result<Self> {
        let expected = spec.voxel_count() * Self::CLASS_COUNT;
        if values.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "class scores need {} values, got {}",
                expected,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("class scores".into()));
        }
        Ok(Self { spec, values })
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.values[i * Self::CLASS_COUNT..(i + 1) * Self::CLASS_COUNT]
    }
}

/// Argmax-decode per-voxel scores into class labels.
///
/// The unknown column is excluded (a model never predicts unknown); ties go
/// to the lowest class code.
pub fn decode_occupancy<T: Real>(scores: &ClassScores<T>) -> VoxelGrid<T> {
    let n = scores.spec.voxel_count();
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let row = scores.row(i);
        let mut best = 0usize;
        for (c, &v) in row.iter().enumerate().take(12).skip(1) {
            if v > row[best] {
                best = c;
            }
        }
        labels.push(ClassCode::from_u8(best as u8).expect("codes 0..=11"));
    }
    VoxelGrid::new(scores.spec, labels).expect("labels per voxel")
}

fn check_specs<T: Real>(pred: &VoxelGrid<T>, gt: &VoxelGrid<T>) -> Result<()> {
    if !pred.spec.same_layout(&gt.spec) {
        return Err(Error::SpecMismatch(
            "prediction and ground truth cover different grids".into(),
        ));
    }
    Ok(())
}

/// Binary IoU (percent) of occupied voxels, semantics ignored, over the
/// voxels whose ground truth is not unknown. An empty union scores 100.
pub fn binary_iou<T: Real>(pred: &VoxelGrid<T>, gt: &VoxelGrid<T>) -> Result<f64> {
    check_specs(pred, gt)?;
    let mut intersection = 0u64;
    let mut union = 0u64;
    for (&p, &g) in pred.labels().iter().zip(gt.labels()) {
        if g == ClassCode::Unknown {
            continue;
        }
        let po = p.is_semantic();
        let go = g.is_semantic();
        if po && go {
            intersection += 1;
        }
        if po || go {
            union += 1;
        }
    }
    if union == 0 {
        return Ok(100.0);
    }
    Ok(100.0 * intersection as f64 / union as f64)
}

/// Per-class IoU report: `None` marks a class absent from both grids over
/// the evaluation mask.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticIoU {
    pub per_class: [Option<f64>; ClassCode::SEMANTIC_COUNT],
    /// Mean over present classes.
    pub miou: f64,
}

impl SemanticIoU {
    /// Benchmark-compatible mean: absent classes count as 0 and all 11
    /// classes are always averaged.
    pub fn miou_all_classes(&self) -> f64 {
        let sum: f64 = self.per_class.iter().map(|c| c.unwrap_or(0.0)).sum();
        sum / ClassCode::SEMANTIC_COUNT as f64
    }
}

/// Semantic mIoU (percent) over the gt-known mask. Classes with no true
/// positives, false positives, or false negatives are reported absent and
/// excluded from the mean; errors when no class is present at all.
pub fn semantic_miou<T: Real>(pred: &VoxelGrid<T>, gt: &VoxelGrid<T>) -> Result<SemanticIoU> {
    check_specs(pred, gt)?;
    let mut tp = [0u64; ClassCode::SEMANTIC_COUNT];
    let mut fp = [0u64; ClassCode::SEMANTIC_COUNT];
    let mut fneg = [0u64; ClassCode::SEMANTIC_COUNT];
    for (&p, &g) in pred.labels().iter().zip(gt.labels()) {
        if g == ClassCode::Unknown {
            continue;
        }
        if p == g {
            if p.is_semantic() {
                tp[p.as_u8() as usize - 1] += 1;
            }
            continue;
        }
        if p.is_semantic() {
            fp[p.as_u8() as usize - 1] += 1;
        }
        if g.is_semantic() {
            fneg[g.as_u8() as usize - 1] += 1;
        }
    }
    let mut per_class = [None; ClassCode::SEMANTIC_COUNT];
    let mut sum = 0.0;
    let mut present = 0usize;
    for c in 0..ClassCode::SEMANTIC_COUNT {
        let denom = tp[c] + fp[c] + fneg[c];
        if denom == 0 {
            continue;
        }
        let iou = 100.0 * tp[c] as f64 / denom as f64;
        per_class[c] = Some(iou);
        sum += iou;
        present += 1;
    }
    if present == 0 {
        return Err(Error::NoPresentClass);
    }
    Ok(SemanticIoU {
        per_class,
        miou: sum / present as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vec3;

    fn grid(dims: [usize; 3], labels: Vec<u8>) -> VoxelGrid<f64> {
        let spec = GridSpec::new(Vec3::zero(), 0.08, dims).unwrap();
        let labels = labels
            .into_iter()
            .map(|l| ClassCode::from_u8(l).unwrap())
            .collect();
        VoxelGrid::new(spec, labels).unwrap()
    }

    #[test]
    fn decode_picks_argmax_and_ties_to_lowest() {
        let spec = GridSpec::new(Vec3::zero(), 0.08, [2, 1, 1]).unwrap();
        let mut values = vec![0.0; 26];
        // Voxel 0: class 1 wins.
        values[0] = 0.1;
        values[1] = 2.0;
        values[2] = -1.0;
        // Voxel 1: all equal → free (code 0).
        let scores = ClassScores::new(spec, values).unwrap();
        let grid = decode_occupancy(&scores);
        assert_eq!(grid.labels()[0], ClassCode::Ceiling);
        assert_eq!(grid.labels()[1], ClassCode::Free);
    }

    #[test]
    fn decode_never_emits_unknown() {
        let spec = GridSpec::new(Vec3::zero(), 0.08, [1, 1, 1]).unwrap();
        let mut values = vec![0.0; 13];
        values[12] = 100.0; // huge unknown score must be ignored
        let scores = ClassScores::new(spec, values).unwrap();
        assert_eq!(decode_occupancy(&scores).labels()[0], ClassCode::Free);
    }

    #[test]
    fn perfect_prediction_scores_100() {
        let g = grid([2, 2, 1], vec![0, 3, 6, 2]);
        assert_eq!(binary_iou(&g, &g).unwrap(), 100.0);
        let s = semantic_miou(&g, &g).unwrap();
        assert_eq!(s.miou, 100.0);
        for c in [ClassCode::Wall, ClassCode::Bed, ClassCode::Floor] {
            assert_eq!(s.per_class[c.as_u8() as usize - 1], Some(100.0));
        }
    }

    #[test]
    fn binary_iou_half_overlap() {
        // pred occupies v0 only, gt occupies v0 and v1 → 1/2.
        let pred = grid([2, 1, 1], vec![3, 0]);
        let gt = grid([2, 1, 1], vec![3, 3]);
        assert_eq!(binary_iou(&pred, &gt).unwrap(), 50.0);
    }

    #[test]
    fn binary_iou_all_unknown_gt_is_100() {
        let pred = grid([2, 1, 1], vec![3, 0]);
        let gt = grid([2, 1, 1], vec![255, 255]);
        assert_eq!(binary_iou(&pred, &gt).unwrap(), 100.0);
    }

    #[test]
    fn binary_iou_is_symmetric() {
        let a = grid([2, 2, 2], vec![0, 3, 0, 5, 0, 0, 9, 1]);
        let b = grid([2, 2, 2], vec![3, 3, 0, 0, 1, 0, 9, 0]);
        assert_eq!(binary_iou(&a, &b).unwrap(), binary_iou(&b, &a).unwrap());
    }

    #[test]
    fn miou_hand_example() {
        // gt (1, 2), pred (1, 1): IoU_1 = 1/2, IoU_2 = 0 → mIoU 25.
        let pred = grid([2, 1, 1], vec![1, 1]);
        let gt = grid([2, 1, 1], vec![1, 2]);
        let s = semantic_miou(&pred, &gt).unwrap();
        assert_eq!(s.per_class[0], Some(50.0));
        assert_eq!(s.per_class[1], Some(0.0));
        assert_eq!(s.miou, 25.0);
    }

    #[test]
    fn absent_classes_are_excluded() {
        let pred = grid([2, 1, 1], vec![1, 0]);
        let gt = grid([2, 1, 1], vec![1, 0]);
        let s = semantic_miou(&pred, &gt).unwrap();
        assert_eq!(s.per_class[0], Some(100.0));
        assert!(s.per_class[1..].iter().all(|c| c.is_none()));
        assert_eq!(s.miou, 100.0);
        // Benchmark mode averages absent classes as zero.
        assert!((s.miou_all_classes() - 100.0 / 11.0).abs() < 1e-12);
    }

    #[test]
    fn no_present_class_is_an_error() {
        let empty = grid([2, 1, 1], vec![0, 0]);
        assert!(matches!(
            semantic_miou(&empty, &empty),
            Err(Error::NoPresentClass)
        ));
    }

    #[test]
    fn spec_mismatch_is_an_error() {
        let a = grid([2, 1, 1], vec![1, 1]);
        let b = grid([1, 2, 1], vec![1, 1]);
        assert!(binary_iou(&a, &b).is_err());
        assert!(semantic_miou(&a, &b).is_err());
    }

    #[test]
    fn correcting_a_voxel_never_decreases_class_iou() {
        let gt = grid([4, 1, 1], vec![2, 2, 3, 0]);
        let worse = grid([4, 1, 1], vec![2, 3, 3, 0]);
        let better = grid([4, 1, 1], vec![2, 2, 3, 0]);
        let a = semantic_miou(&worse, &gt).unwrap();
        let b = semantic_miou(&better, &gt).unwrap();
        assert!(b.per_class[1].unwrap() >= a.per_class[1].unwrap());
    }
}
