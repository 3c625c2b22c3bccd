//! Property tests for the crate's structural invariants.

use occ_core::distill::{
    contrastive_loss, pool_superpixel_features, superpixels_from_mask, FeatureMap, LabelMap,
    PooledFeatures,
};
use occ_core::geom::Vec3;
use occ_core::io::{read_tensor_bytes, write_tensor_bytes, Tensor, TensorData};
use occ_core::types::GridSpec;
use proptest::prelude::*;

fn arb_spec() -> impl Strategy<Value = GridSpec<f64>> {
    (1usize..24, 1usize..24, 1usize..24, 0.01f64..0.5).prop_map(|(x, y, z, s)| {
        GridSpec::new(Vec3::new(-1.0, 0.5, 2.0), s, [x, y, z]).unwrap()
    })
}

proptest! {
    #[test]
    fn linear_index_round_trips(spec in arb_spec(), seed in 0usize..1_000_000) {
        let n = spec.voxel_count();
        let i = seed % n;
        let coords = spec.delinearize(i).unwrap();
        prop_assert_eq!(spec.linear_index(coords).unwrap(), i);

        let c = [
            seed % spec.dims[0],
            (seed / 7) % spec.dims[1],
            (seed / 49) % spec.dims[2],
        ];
        prop_assert_eq!(spec.delinearize(spec.linear_index(c).unwrap()).unwrap(), c);
    }

    #[test]
    fn tensor_round_trip_bitwise(values in proptest::collection::vec(any::<f32>(), 1..64)) {
        let t = Tensor::new(vec![values.len() as u64], TensorData::F32(values)).unwrap();
        let bytes = write_tensor_bytes(&t);
        let back = read_tensor_bytes(&bytes).unwrap();
        // NaN payloads must survive bit-for-bit, so compare encodings.
        prop_assert_eq!(write_tensor_bytes(&back), bytes);
    }

    #[test]
    fn pooled_rows_stay_in_member_envelope(
        vals in proptest::collection::vec(-10.0f64..10.0, 24),
        ids in proptest::collection::vec(0u32..3, 12),
    ) {
        let features = FeatureMap::new(4, 3, 2, vals).unwrap();
        let mask = LabelMap::new(4, 3, ids.iter().map(|&v| Some(v)).collect()).unwrap();
        let part = superpixels_from_mask(&mask, false);
        let pooled = pool_superpixel_features(&features, &part).unwrap();
        for q in 0..pooled.count() {
            for d in 0..2 {
                let members: Vec<f64> = part
                    .indices()
                    .iter()
                    .enumerate()
                    .filter(|(_, idx)| **idx == Some(q as u32))
                    .map(|(i, _)| features.pixel(i)[d])
                    .collect();
                let lo = members.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = members.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let v = pooled.row(q)[d];
                prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn loss_is_nonnegative(
        rows3 in proptest::collection::vec(-2.0f64..2.0, 12),
        rows2 in proptest::collection::vec(-2.0f64..2.0, 12),
        tau in 0.05f64..2.0,
        normalize in any::<bool>(),
    ) {
        let f3d = PooledFeatures::new(4, 3, rows3, vec![true; 4]).unwrap();
        let f2d = PooledFeatures::new(4, 3, rows2, vec![true; 4]).unwrap();
        match contrastive_loss(&f3d, &f2d, tau, normalize) {
            Ok((loss, pairs)) => {
                prop_assert!(loss >= -1e-12, "loss {loss}");
                prop_assert_eq!(pairs, 4);
            }
            // Zero-norm rows are rejected under normalization.
            Err(occ_core::Error::InvalidParameter(_)) => prop_assert!(normalize),
            Err(e) => return Err(TestCaseError::fail(format!("unexpected error {e}"))),
        }
    }
}
