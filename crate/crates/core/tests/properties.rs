//! Randomized invariants over the public API.
//!
//! Each property states something that must hold for every input in its
//! domain, not just the hand-picked cases in the unit tests: containers
//! survive the disk, evaluation order never changes scan results, metrics
//! respect their algebraic ranges, splits stay disjoint.

use proptest::prelude::*;

use mambaseg::data::{load_scene, save_scene, split_per_class, HsiScene};
use mambaseg::metrics::evaluate;
use mambaseg::ssm::{
    mamba_block_forward, scan_convolutional, scan_recurrent, zoh_discretize, LtiSsm, ScanMode,
    SelectiveSsmParams, SsmDims,
};
use mambaseg::tensor::{no_grad, Tensor};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn scratch_file(tag: &str, case: u64) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("mambaseg-prop-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(format!("{tag}-{case}.hsc"))
}

/// A structurally valid scene: labels within range, masks disjoint and
/// confined to labeled pixels.
fn arb_scene() -> impl Strategy<Value = HsiScene> {
    (1usize..5, 1usize..5, 1usize..4, 1usize..4).prop_flat_map(|(h, w, c, k)| {
        let pixels = h * w;
        (
            proptest::collection::vec(-10.0f32..10.0, pixels * c),
            proptest::collection::vec(0u16..=k as u16, pixels),
            proptest::collection::vec(0u8..4, pixels),
        )
            .prop_map(move |(cube, labels, roles)| {
                let pick = |want: u8| -> Vec<bool> {
                    roles
                        .iter()
                        .zip(&labels)
                        .map(|(&r, &l)| l != 0 && r == want)
                        .collect()
                };
                let (train_mask, val_mask, test_mask) = (pick(1), pick(2), pick(3));
                HsiScene {
                    height: h,
                    width: w,
                    channels: c,
                    class_count: k,
                    cube,
                    labels,
                    train_mask,
                    val_mask,
                    test_mask,
                }
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn scene_roundtrip_is_bit_exact(scene in arb_scene(), case in 0u64..u64::MAX) {
        scene.validate().unwrap();
        let path = scratch_file("roundtrip", case);
        save_scene(&scene, &path).unwrap();
        let back = load_scene(&path).unwrap();
        std::fs::remove_file(&path).ok();
        prop_assert_eq!(scene, back);
    }

    #[test]
    fn lti_recurrence_equals_convolution(
        seed in 0u64..1 << 48,
        states in 1usize..8,
        len in 1usize..48,
    ) {
        let mut rng = mambaseg::data::Xorshift64Star::new(seed | 1);
        let mut draw = |lo: f32, hi: f32| lo + (hi - lo) * rng.next_f64() as f32;
        let a: Vec<f32> = (0..states).map(|_| draw(-2.0, -0.05)).collect();
        let b: Vec<f32> = (0..states).map(|_| draw(-1.0, 1.0)).collect();
        let c: Vec<f32> = (0..states).map(|_| draw(-1.0, 1.0)).collect();
        let ssm = LtiSsm::new(a, b, c, draw(0.01, 0.5)).unwrap();
        let x: Vec<f32> = (0..len).map(|_| draw(-1.0, 1.0)).collect();
        let d = zoh_discretize(&ssm);
        let rec = scan_recurrent(&d, &x, None);
        let conv = scan_convolutional(&d, &x);
        for (r, cv) in rec.iter().zip(&conv) {
            prop_assert!((r - cv).abs() < 1e-4, "recurrent {r} vs convolutional {cv}");
        }
    }

    #[test]
    fn scan_order_does_not_change_block_output(
        seed in 0u64..1 << 32,
        len in 1usize..24,
        dim in 1usize..6,
    ) {
        let dims = SsmDims::new(dim, 2, 4, 3, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = SelectiveSsmParams::init(dims, &mut rng);
        let mut data_rng = mambaseg::data::Xorshift64Star::new(seed | 1);
        let data: Vec<f32> = (0..len * dim)
            .map(|_| data_rng.next_gaussian() as f32)
            .collect();
        let tokens = Tensor::from_vec(data, &[len, dim]);
        let (seq, par) = no_grad(|| {
            (
                mamba_block_forward(&params, &tokens, ScanMode::Sequential).to_vec(),
                mamba_block_forward(&params, &tokens, ScanMode::ParallelPrefix).to_vec(),
            )
        });
        for (s, p) in seq.iter().zip(&par) {
            prop_assert!((s - p).abs() < 1e-4, "sequential {s} vs prefix {p}");
        }
    }

    #[test]
    fn metric_scores_stay_in_range(
        truth in proptest::collection::vec(1u16..=4, 1..120),
        noise in proptest::collection::vec(0u16..4, 1..120),
    ) {
        let n = truth.len().min(noise.len());
        let labels = &truth[..n];
        // Predictions are the truth with some entries shifted, so every
        // value stays a valid class.
        let pred: Vec<u16> =
            labels.iter().zip(&noise[..n]).map(|(&l, &d)| (l + d - 1) % 4 + 1).collect();
        let mask = vec![true; n];
        let report = evaluate(&pred, labels, &mask, 4).unwrap();
        prop_assert!((0.0..=1.0).contains(&report.oa));
        prop_assert!((0.0..=1.0).contains(&report.aa));
        prop_assert!(report.kappa <= 1.0 + 1e-12);
        prop_assert_eq!(report.n, n as u64);
    }

    #[test]
    fn relabeling_classes_preserves_every_score(
        truth in proptest::collection::vec(1u16..=3, 8..80),
        shift in proptest::collection::vec(0u16..3, 8..80),
    ) {
        let n = truth.len().min(shift.len());
        let labels = &truth[..n];
        let pred: Vec<u16> =
            labels.iter().zip(&shift[..n]).map(|(&l, &d)| (l + d - 1) % 3 + 1).collect();
        let mask = vec![true; n];
        // Cyclic relabeling: class 1 -> 2 -> 3 -> 1 on both sides.
        let rot = |v: &[u16]| -> Vec<u16> { v.iter().map(|&x| x % 3 + 1).collect() };
        let base = evaluate(&pred, labels, &mask, 3).unwrap();
        let turned = evaluate(&rot(&pred), &rot(labels), &mask, 3).unwrap();
        prop_assert!((base.oa - turned.oa).abs() < 1e-12);
        prop_assert!((base.aa - turned.aa).abs() < 1e-12);
        prop_assert!((base.kappa - turned.kappa).abs() < 1e-12);
    }

    #[test]
    fn split_masks_are_disjoint_and_labeled(
        labels in proptest::collection::vec(0u16..=3, 30..200),
        n_train in 0usize..6,
        n_val in 0usize..4,
        seed in 0u64..1 << 40,
    ) {
        prop_assume!((1..=3).all(|k| labels.contains(&k)));
        let (train, val, test) = split_per_class(&labels, n_train, n_val, seed).unwrap();
        for i in 0..labels.len() {
            let picked = train[i] as u8 + val[i] as u8 + test[i] as u8;
            prop_assert!(picked <= 1, "pixel {} drawn into {} splits", i, picked);
            if labels[i] == 0 {
                prop_assert_eq!(picked, 0, "unlabeled pixel {} was split", i);
            } else {
                prop_assert_eq!(picked, 1, "labeled pixel {} left out", i);
            }
        }
        // Same inputs, same masks.
        let again = split_per_class(&labels, n_train, n_val, seed).unwrap();
        prop_assert_eq!((train, val, test), again);
    }
}
