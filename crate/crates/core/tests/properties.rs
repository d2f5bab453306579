use ndarray::Array2;
use pixelgame::backbone::{PlayerNetwork, Variant};
use pixelgame::data::{augment, label_components, synth_dataset, SceneParams};
use pixelgame::metrics::score;
use pixelgame::{binarize, confusion_counts, fuse, metrics, scr, soft_confusion_counts, BinaryMask, GrayImage, ProbabilityMap};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn mask_pair() -> impl Strategy<Value = (BinaryMask, BinaryMask)> {
    (1usize..12, 1usize..12).prop_flat_map(|(h, w)| {
        (prop::collection::vec(any::<bool>(), h * w), prop::collection::vec(any::<bool>(), h * w)).prop_map(move |(a, b)| {
            (BinaryMask::from_fn((h, w), |y, x| a[y * w + x]), BinaryMask::from_fn((h, w), |y, x| b[y * w + x]))
        })
    })
}

fn prob_pair() -> impl Strategy<Value = (ProbabilityMap, ProbabilityMap)> {
    (1usize..10, 1usize..10).prop_flat_map(|(h, w)| {
        (prop::collection::vec(0.0f64..=1.0, h * w), prop::collection::vec(0.0f64..=1.0, h * w)).prop_map(move |(a, b)| {
            (
                ProbabilityMap::new(Array2::from_shape_vec((h, w), a).unwrap()).unwrap(),
                ProbabilityMap::new(Array2::from_shape_vec((h, w), b).unwrap()).unwrap(),
            )
        })
    })
}

proptest! {
    #[test]
    fn hard_counts_partition_the_pixels((pred, gt) in mask_pair()) {
        let c = confusion_counts(&pred, &gt).unwrap();
        prop_assert_eq!(c.tps + c.fps + c.tns + c.fns, c.n);
        prop_assert_eq!(c.n as usize, pred.pixels().len());
        for v in [c.tps, c.fps, c.tns, c.fns] {
            prop_assert!(v >= 0.0 && v.fract() == 0.0);
        }
    }

    #[test]
    fn soft_counts_equal_hard_counts_on_binary_maps((pred, gt) in mask_pair()) {
        let soft = soft_confusion_counts(&ProbabilityMap::from_mask(&pred), &gt).unwrap();
        prop_assert_eq!(soft, confusion_counts(&pred, &gt).unwrap());
    }

    #[test]
    fn clearing_a_false_alarm_never_hurts((mut pred, gt) in mask_pair(), pick in any::<prop::sample::Index>()) {
        let (h, w) = pred.shape();
        let alarms: Vec<(usize, usize)> =
            (0..h).flat_map(|y| (0..w).map(move |x| (y, x))).filter(|&(y, x)| pred.get(y, x) && !gt.get(y, x)).collect();
        prop_assume!(!alarms.is_empty());
        let before = metrics(&confusion_counts(&pred, &gt).unwrap());
        let (y, x) = alarms[pick.index(alarms.len())];
        pred.set(y, x, false);
        let after = metrics(&confusion_counts(&pred, &gt).unwrap());
        prop_assert!(after.precision >= before.precision);
        prop_assert!(after.f1 >= before.f1);
        prop_assert!(after.iou >= before.iou);
    }

    #[test]
    fn fusion_lies_between_the_players((o1, o2) in prob_pair()) {
        let f = fuse(&o1, &o2).unwrap();
        for ((a, b), m) in o1.pixels().iter().zip(o2.pixels()).zip(f.pixels()) {
            prop_assert!(a.min(*b) <= *m && *m <= a.max(*b));
        }
    }

    #[test]
    fn raising_the_threshold_shrinks_the_mask((o1, _) in prob_pair(), t in 0.01f64..0.98, dt in 0.0f64..0.01) {
        let low = binarize(&o1, t).unwrap();
        let high = binarize(&o1, t + dt).unwrap();
        prop_assert!(low.pixels().iter().zip(high.pixels()).all(|(l, h)| l >= h));
        prop_assert!(binarize(&o1, 0.0).is_err() && binarize(&o1, 1.0).is_err());
    }

    #[test]
    fn scr_ignores_a_brightness_offset(seed in 0u64..1000, offset in -0.2f64..0.2) {
        let data = synth_dataset(&SceneParams { image_size: 32, clutter_strength: 0.5, ..SceneParams::default() }, 1, seed).unwrap();
        let s = &data.items[0];
        let p = s.image.pixels();
        prop_assume!(p.iter().all(|v| (0.0..=1.0).contains(&(v + offset))));
        let shifted = GrayImage::new(p.mapv(|v| v + offset)).unwrap();
        let (a, b) = (scr(&s.image, &s.mask), scr(&shifted, &s.mask));
        match (a, b) {
            (Ok(a), Ok(b)) => prop_assert!((a.scr - b.scr).abs() <= 1e-6 * a.scr.abs().max(1.0), "{} {}", a.scr, b.scr),
            (a, b) => prop_assert_eq!(a.is_err(), b.is_err()),
        }
    }

    #[test]
    fn augmentation_keeps_masks_binary_and_sized(seed in 0u64..500, resize in 16usize..48, crop_frac in 0.3f64..1.0) {
        let data = synth_dataset(&SceneParams { image_size: 32, ..SceneParams::default() }, 1, seed).unwrap();
        let s = &data.items[0];
        let crop = ((resize as f64 * crop_frac) as usize).max(1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (img, mask) = augment(&s.image, &s.mask, resize, crop, &mut rng).unwrap();
        prop_assert_eq!(img.shape(), (crop, crop));
        prop_assert_eq!(mask.shape(), (crop, crop));
        prop_assert!(mask.pixels().iter().all(|&v| v <= 1));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn networks_preserve_resolution(h in 16usize..128, w in 16usize..128, seed in any::<u64>()) {
        let img = GrayImage::new(Array2::from_shape_fn((h, w), |(y, x)| ((y * 7 + x * 3) % 11) as f64 / 10.0)).unwrap();
        for variant in [Variant::Fdcn9, Variant::Fdcn13] {
            let net = PlayerNetwork::<f32>::new(variant, 2, true, seed);
            let (out, feats) = net.forward(&img);
            prop_assert_eq!(out.shape(), (h, w));
            for f in &feats {
                prop_assert_eq!((f.shape()[1], f.shape()[2]), (h, w));
            }
            let (again, _) = net.forward(&img);
            prop_assert_eq!(out, again);
        }
    }
}

#[test]
fn generation_is_a_pure_function_of_the_seed() {
    let p = SceneParams::default();
    let a = synth_dataset(&p, 5, 77).unwrap();
    let b = synth_dataset(&p, 5, 77).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, synth_dataset(&p, 5, 78).unwrap());
}

#[test]
fn clutter_free_scenes_have_their_declared_targets() {
    let p = SceneParams { clutter_strength: 0.0, ..SceneParams::default() };
    for s in synth_dataset(&p, 30, 9).unwrap().items {
        let (_, comps) = label_components(&s.mask);
        let declared = s.meta.as_ref().expect("synthetic metadata").targets.len();
        assert_eq!(comps.len(), declared, "{}", s.stem);
    }
}

#[test]
fn perfect_prediction_scores_one() {
    let s = &synth_dataset(&SceneParams::default(), 1, 3).unwrap().items[0];
    let r = score(&ProbabilityMap::from_mask(&s.mask), &s.mask, 0.5).unwrap();
    assert_eq!((r.precision, r.recall, r.f1, r.iou), (1.0, 1.0, 1.0, 1.0));
}
