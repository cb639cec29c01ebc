use super::*;

use proptest::prelude::{prop_assert, prop_assert_eq, proptest};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Error;
use crate::features::FeatureMap;
use crate::renderer::{Camera, Field, Pose, VOID_LABEL};
use crate::scene_field::{Aabb, FieldConfig, SceneParams};

#[test]
fn miou_examples() {
    let (per, mean) = miou(&[0, 1, 1, 1], &[0, 0, 1, 1], &[]).unwrap();
    assert_eq!(per, vec![(0, 0.5), (1, 2.0 / 3.0)]);
    assert!((mean - 7.0 / 12.0).abs() < 1e-15);
    assert_eq!(miou(&[3, 1, 2], &[3, 1, 2], &[]).unwrap().1, 1.0);
    // everything but one correct pixel ignored
    assert_eq!(miou(&[0, 1, 1, 2], &[9, 9, 1, 9], &[9]).unwrap().1, 1.0);
    assert!(matches!(miou(&[0, 1], &[9, 9], &[9]), Err(Error::Evaluation(_))));
    assert!(miou(&[0], &[0, 1], &[]).is_err());
}

#[test]
fn void_and_extra_classes_are_penalised() {
    let (per, _) = miou(&[VOID_LABEL, 0], &[0, 0], &[]).unwrap();
    assert_eq!(per, vec![(0, 0.5)]);
    // predicting a class absent from gt enlarges nothing but still misses
    let (per, mean) = miou(&[5, 0], &[0, 0], &[]).unwrap();
    assert_eq!(per, vec![(0, 0.5)]);
    assert_eq!(mean, 0.5);
}

/// Independent oracle: a dense confusion matrix over labels 0..n.
fn confusion_miou(pred: &[u16], gt: &[u16], n: usize, ignore: u16) -> f64 {
    let mut m = vec![vec![0u64; n]; n];
    for (&p, &g) in pred.iter().zip(gt) {
        if g != ignore {
            m[g as usize][p as usize] += 1;
        }
    }
    let mut ious = Vec::new();
    for c in 0..n {
        let row: u64 = m[c].iter().sum();
        if row == 0 {
            continue;
        }
        let col: u64 = (0..n).map(|r| m[r][c]).sum();
        ious.push(m[c][c] as f64 / (row + col - m[c][c]) as f64);
    }
    ious.iter().sum::<f64>() / ious.len() as f64
}

#[test]
fn miou_agrees_with_confusion_matrix() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..100 {
        let n = rng.random_range(2..6usize);
        let len = rng.random_range(4..60);
        let pred: Vec<u16> = (0..len).map(|_| rng.random_range(0..n as u16)).collect();
        let mut gt: Vec<u16> = (0..len).map(|_| rng.random_range(0..n as u16)).collect();
        // class n-1 doubles as the ignore label; keep at least one real pixel
        gt[0] = 0;
        let ignore = n as u16 - 1;
        let got = miou(&pred, &gt, &[ignore]).unwrap().1;
        let want = confusion_miou(&pred, &gt, n, ignore);
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }
}

#[test]
fn accumulator_pools_frames() {
    let mut acc = IouAccumulator::new();
    acc.add(&[0, 1], &[0, 0], &[]).unwrap();
    acc.add(&[1, 1], &[1, 1], &[]).unwrap();
    let (per, _) = acc.result().unwrap();
    assert_eq!(per, vec![(0, 0.5), (1, 2.0 / 3.0)]);
}

proptest! {
    #[test]
    fn miou_bounded(pred in proptest::collection::vec(0u16..4, 1..50), seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gt: Vec<u16> = pred.iter().map(|_| rng.random_range(0..4)).collect();
        let (per, mean) = miou(&pred, &gt, &[]).unwrap();
        prop_assert!((0.0..=1.0).contains(&mean));
        prop_assert!(per.iter().all(|p| (0.0..=1.0).contains(&p.1)));
    }

    #[test]
    fn miou_symmetric_for_two_classes(bits in proptest::collection::vec(proptest::bool::ANY, 2..40)) {
        // both classes present in both rasters
        let mut pred: Vec<u16> = bits.iter().map(|&b| b as u16).collect();
        let mut gt: Vec<u16> = pred.iter().rev().copied().collect();
        let n = pred.len();
        pred[0] = 0;
        pred[n - 1] = 1;
        gt[0] = 0;
        gt[n - 1] = 1;
        let a = miou(&pred, &gt, &[]).unwrap().1;
        let b = miou(&gt, &pred, &[]).unwrap().1;
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn labels_shift_invariant(logits in proptest::collection::vec(-20f32..20.0, 4), shift in -50f32..50.0, n in 1usize..5) {
        let shifted: Vec<f32> = logits.iter().map(|l| l + shift).collect();
        let (a, _) = classify_logits(&logits, n);
        let (b, _) = classify_logits(&shifted, n);
        // the shift can merge near-ties after rounding; compare only clear winners
        let mut sorted: Vec<f32> = logits[..n].to_vec();
        sorted.sort_by(|x, y| y.partial_cmp(x).unwrap());
        if n == 1 || sorted[0] - sorted[1] > 1e-3 {
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn knn_scale_invariant(scale in 0.01f32..100.0, seed in 0u64..500) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let anchors = AnchorSet::new((0..3).map(|_| (0..6).map(|_| rng.random_range(-1f32..1.0)).collect()).collect()).unwrap();
        let f: Vec<f32> = (0..6).map(|_| rng.random_range(-1f32..1.0)).collect();
        let g: Vec<f32> = f.iter().map(|x| x * scale).collect();
        prop_assert_eq!(anchors.classify(&f).unwrap(), anchors.classify(&g).unwrap());
    }
}

#[test]
fn logits_softmax_examples() {
    let (l, p) = classify_logits(&[2.0, 1.0, 0.0, 9.0], 3);
    assert_eq!(l, 0);
    let e = std::f64::consts::E;
    assert!((p as f64 - e * e / (e * e + e + 1.0)).abs() < 1e-6);
    assert!((p - 0.665).abs() < 1e-3);
    assert_eq!(classify_logits(&[-3.0, 7.0], 1), (0, 1.0));
    assert_eq!(classify_logits(&[1.0, 1.0, 1.0], 3).0, 0);
    assert_eq!(classify_logits(&[0.0, 4.0, 4.0], 3).0, 1);
}

#[test]
fn knn_examples() {
    let e1 = vec![1.0, 0.0, 0.0];
    let e2 = vec![0.0, 1.0, 0.0];
    let a = AnchorSet::new(vec![e1.clone(), e2.clone()]).unwrap();
    assert_eq!(a.classify(&[0.9, 0.1, 0.0]).unwrap(), 0);
    assert_eq!(a.classify(&e2).unwrap(), 1);
    assert_eq!(a.classify(&[1.0, 1.0, 0.0]).unwrap(), 0);
    assert!(matches!(a.classify(&[0.0; 3]), Err(Error::Numeric { .. })));
    assert!(matches!(AnchorSet::new(vec![vec![0.0; 3]]), Err(Error::Numeric { .. })));
    assert!(AnchorSet::new(vec![e1, vec![1.0]]).is_err());
}

#[test]
fn knn_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let k = 8;
    let (h, w) = (10, 10);
    let anchor_map =
        FeatureMap::new(h, w, k, (0..h * w * k).map(|_| rng.random_range(-1f32..1.0)).collect(), 0).unwrap();
    let target = FeatureMap::new(h, w, k, (0..h * w * k).map(|_| rng.random_range(-1f32..1.0)).collect(), 1).unwrap();
    // cell centers, so the bilinear query returns the cell exactly
    let cells = [(1usize, 2usize), (5, 7), (8, 3)];
    let zetas: Vec<[f64; 2]> = cells
        .iter()
        .map(|&(i, j)| [(j as f64 + 0.5) / w as f64, (i as f64 + 0.5) / h as f64])
        .collect();
    let labels = knn_baseline(&anchor_map, &zetas, &target).unwrap();
    assert_eq!(labels.len(), 100);
    for (n, &got) in labels.iter().enumerate() {
        let f = target.cell(n / w, n % w);
        let mut best = (0, f64::MIN);
        for (c, &(i, j)) in cells.iter().enumerate() {
            let a = anchor_map.cell(i, j);
            let dot: f64 = a.iter().zip(f).map(|(x, y)| (*x as f64) * (*y as f64)).sum();
            let na: f64 = a.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
            let nf: f64 = f.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
            if dot / (na * nf) > best.1 {
                best = (c as u16, dot / (na * nf));
            }
        }
        assert_eq!(got, best.0, "cell {n}");
    }
}

#[test]
fn upsampling_is_nearest_neighbour() {
    let cam = Camera {
        width: 6,
        height: 4,
        ..Camera::desk(0.5, 3.0)
    };
    let img = upsample_labels(&[1, 2, 3, 4, 5, 6], 2, 3, &cam).unwrap();
    assert_eq!(
        img.data,
        vec![1, 1, 2, 2, 3, 3, 1, 1, 2, 2, 3, 3, 4, 4, 5, 5, 6, 6, 4, 4, 5, 5, 6, 6]
    );
    assert!(upsample_labels(&[1, 2], 2, 3, &cam).is_err());
    assert_eq!(pixel_to_zeta(0, 0, &cam), [1.0 / 12.0, 0.125]);
}

#[test]
fn registry_assigns_ordinals() {
    let cam = Camera::desk(0.5, 3.0);
    let mut r = ClickRegistry::new(3);
    assert_eq!(r.add_click(0, 1, 1, "a", &cam).unwrap(), 0);
    assert_eq!(r.add_click(0, 2, 1, "b", &cam).unwrap(), 1);
    assert_eq!(r.add_click(4, 3, 1, "", &cam).unwrap(), 2);
    let before = r.clone();
    assert!(matches!(r.add_click(0, 1, 1, "d", &cam), Err(Error::Capacity(_))));
    assert_eq!(r, before);
    assert_eq!(r.class_names(), ["a", "b", "class2"]);
    let mut r = ClickRegistry::new(3);
    assert!(matches!(r.add_click(0, 160, 0, "", &cam), Err(Error::Input(_))));
    assert_eq!(r.n_active_classes(), 0);
}

#[test]
fn ablation_modes_are_paired() {
    let cfg = crate::mapper::MapperConfig {
        seed: 42,
        ..Default::default()
    };
    let nf = ablation_mode(&cfg, AblationMode::NoFeature);
    assert_eq!(nf.lambda_feat, 0.0);
    assert_eq!(nf.seed, cfg.seed);
    assert_eq!(ablation_mode(&cfg, AblationMode::Fused), cfg);
}

#[test]
fn click_script_round_trip_and_order() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("clicks.json");
    let clicks = vec![
        ClickSpec {
            at_frame: 3,
            keyframe_id: 3,
            u: 1,
            v: 2,
            name: "late".into(),
        },
        ClickSpec {
            at_frame: 0,
            keyframe_id: 0,
            u: 5,
            v: 6,
            name: String::new(),
        },
    ];
    save_click_script(&p, &clicks).unwrap();
    assert_eq!(load_click_script(&p).unwrap(), clicks);
    let ordered = script_order(clicks.clone());
    assert_eq!(ordered[0], clicks[1]);
    std::fs::write(&p, r#"[{"at_frame":0,"keyframe_id":2,"u":0,"v":0}]"#).unwrap();
    assert!(matches!(load_click_script(&p), Err(Error::Input(_))));
    std::fs::write(&p, "[{").unwrap();
    assert!(load_click_script(&p).is_err());
}

#[test]
fn single_active_class_is_certain() {
    let cfg = FieldConfig {
        hidden_dim: 8,
        n_hidden_layers: 2,
        latent_dim: 8,
        feature_dim: 4,
        max_classes: 3,
        skip_layer: 1,
        n_frequencies: 2,
    };
    let basis = cfg.basis().unwrap();
    let mut p = SceneParams::new(cfg, &basis, 9).unwrap();
    // opaque everywhere
    let d = 2 * cfg.n_hidden_layers;
    p.blocks_mut()[d].values.fill(0.0);
    p.blocks_mut()[d + 1].values.fill(30.0);
    let field = Field::new(p.view(), &basis, Aabb::cube(2.0)).unwrap();
    let cam = Camera {
        fx: 8.0,
        fy: 8.0,
        cx: 3.5,
        cy: 2.5,
        width: 8,
        height: 6,
        near: 0.5,
        far: 3.0,
    };
    let pose = Pose::look_at([0.0, 0.0, -1.5], [0.0; 3], [0.0, -1.0, 0.0]).unwrap();
    let s = segment_view(&field, &cam, &pose, 1, 1, 8).unwrap();
    assert_eq!((s.width, s.height), (8, 6));
    assert!(s.labels.iter().all(|&l| l == 0));
    assert!(s.confidence.iter().all(|&c| c == 1.0));
    let s = segment_view(&field, &cam, &pose, 3, 4, 8).unwrap();
    assert_eq!((s.width, s.height, s.labels.len()), (2, 2, 4));
    assert!(segment_view(&field, &cam, &pose, 0, 1, 8).is_err());
    assert!(segment_view(&field, &cam, &pose, 4, 1, 8).is_err());

    // transparent everywhere
    p.blocks_mut()[d + 1].values.fill(-30.0);
    let field = Field::new(p.view(), &basis, Aabb::cube(2.0)).unwrap();
    let s = segment_view(&field, &cam, &pose, 2, 2, 8).unwrap();
    assert!(s.labels.iter().all(|&l| l == VOID_LABEL));
}
