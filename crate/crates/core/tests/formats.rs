use proptest::prelude::*;

use frnf::features::{decode_feature_map, encode_feature_map, load_feature_map, save_feature_map, FeatureMap};
use frnf::scene_field::{decode_checkpoint, encode_checkpoint, FieldConfig, SceneParams};
use frnf::simio::formats::{decode_depth, decode_labels, encode_depth, encode_labels};
use frnf::simio::Image;
use frnf::Error;

fn raster<T: std::fmt::Debug + Clone>(elem: impl Strategy<Value = T> + Clone) -> impl Strategy<Value = (usize, usize, Vec<T>)> {
    (1usize..12, 1usize..12).prop_flat_map(move |(w, h)| (Just(w), Just(h), prop::collection::vec(elem.clone(), w * h)))
}

proptest! {
    #[test]
    fn depth_round_trips_bitwise((w, h, data) in raster(any::<f32>().prop_filter("finite, non-negative", |v| v.is_finite() && *v >= 0.0))) {
        let img = Image::new(w, h, data).unwrap();
        let bytes = encode_depth(&img).unwrap();
        let back = decode_depth(&bytes).unwrap();
        prop_assert_eq!((back.width, back.height), (w, h));
        for (a, b) in back.data.iter().zip(&img.data) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
        prop_assert_eq!(encode_depth(&back).unwrap(), bytes);
    }

    #[test]
    fn invalid_depth_is_not_encoded(bad in prop_oneof![Just(f32::NAN), Just(f32::INFINITY), -1e30f32..-1e-30]) {
        let img = Image::new(2, 1, vec![1.0, bad]).unwrap();
        prop_assert!(encode_depth(&img).is_err());
    }

    #[test]
    fn labels_round_trip((w, h, data) in raster(any::<u16>())) {
        let img = Image::new(w, h, data).unwrap();
        let bytes = encode_labels(&img).unwrap();
        prop_assert_eq!(decode_labels(&bytes).unwrap(), img);
    }

    #[test]
    fn feature_maps_round_trip(
        (hh, ww, dim, data, mask) in (1usize..5, 1usize..6, 1usize..9).prop_flat_map(|(h, w, d)| (
            Just(h), Just(w), Just(d),
            prop::collection::vec(-10.0f32..10.0, h * w * d),
            prop::collection::vec(any::<bool>(), h * w),
        )),
        frame_id in any::<u32>(),
    ) {
        let map = FeatureMap::with_mask(hh, ww, dim, data, mask, frame_id).unwrap();
        let bytes = encode_feature_map(&map).unwrap();
        prop_assert_eq!(decode_feature_map(&bytes).unwrap(), map);
    }

    #[test]
    fn truncated_depth_is_rejected((w, h, data) in raster(0.0f32..5.0), cut in 0.0f64..1.0) {
        let bytes = encode_depth(&Image::new(w, h, data).unwrap()).unwrap();
        let n = ((bytes.len() as f64) * cut) as usize;
        prop_assert!(decode_depth(&bytes[..n]).is_err());
    }
}

#[test]
fn checkpoints_round_trip_for_several_shapes() {
    for (h, seed) in [(8usize, 1u64), (16, 2), (33, 3)] {
        let cfg = FieldConfig {
            feature_dim: 24,
            ..FieldConfig::default()
        }
        .with_hidden(h);
        let params = SceneParams::new(cfg, &cfg.basis().unwrap(), seed).unwrap();
        let bytes = encode_checkpoint(&params).unwrap();
        let back = decode_checkpoint(&bytes).unwrap();
        assert_eq!(back, params);
        assert_eq!(back.config(), &cfg);
        // trailing garbage is an error too
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(decode_checkpoint(&long), Err(Error::Format { .. })));
    }
}

#[test]
fn feature_map_files_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("f.fmap");
    let data: Vec<f32> = (0..2 * 3 * 4).map(|i| i as f32 * 0.25 - 1.0).collect();
    let map = FeatureMap::new(2, 3, 4, data, 7).unwrap();
    save_feature_map(&path, &map).unwrap();
    assert_eq!(load_feature_map(&path).unwrap(), map);
    assert!(load_feature_map(&tmp.path().join("missing.fmap")).is_err());
}
