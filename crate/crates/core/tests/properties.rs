mod common;

use nalgebra::DMatrix;
use patchland::config::{ClassifierKind, RunConfig};
use patchland::eval::{classify_scene, confusion, PatchClassifier};
use patchland::nn::{softmax, train_mlp, TrainConfig};
use patchland::optim::adagrad_step;
use patchland::pipeline::{prepare_split, train_classifier, ModelBundle};
use patchland::raster::{
    compute_stats, exclude_bands, extract_patches, normalize, split_dataset, BorderPolicy, LabelMap, PatchSpec,
    RasterCube,
};
use patchland::svm::{rbf_kernel, train_binary_smo, SvmHyperparams};
use patchland::synth::{generate_scene, SceneSpec};
use patchland::Result;
use proptest::prelude::*;

use common::*;

fn cube_strategy() -> impl Strategy<Value = (RasterCube, LabelMap)> {
    (1usize..10, 1usize..10, 1usize..4).prop_flat_map(|(rows, cols, bands)| {
        (
            prop::collection::vec(-5.0f32..5.0, rows * cols * bands),
            prop::collection::vec(0u16..4, rows * cols),
        )
            .prop_map(move |(v, l)| {
                (
                    RasterCube::new(rows, cols, bands, v).unwrap(),
                    LabelMap::new(rows, cols, l).unwrap(),
                )
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gram_matrix_is_symmetric_psd(
        pts in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 3), 1..12),
        gamma in 0.05f64..5.0,
    ) {
        let n = pts.len();
        let k = DMatrix::from_fn(n, n, |i, j| rbf_kernel(&pts[i], &pts[j], gamma).unwrap());
        prop_assert_eq!(&k, &k.transpose());
        let min = k.symmetric_eigenvalues().min();
        prop_assert!(min >= -1e-8, "min eigenvalue {}", min);
    }

    #[test]
    fn rescaled_inputs_with_rescaled_gamma_decide_alike(s in 0.2f64..5.0, seed in 0u64..1000) {
        let x = vec![vec![0.1, 0.4], vec![0.9, 0.2], vec![0.3, 0.8], vec![0.7, 0.7]];
        let y = [-1i8, 1, -1, 1];
        let gamma = 1.5;
        let a = train_binary_smo(&x, &y, &SvmHyperparams::new(10.0, gamma), seed).unwrap();
        let xs: Vec<Vec<f64>> = x.iter().map(|r| r.iter().map(|v| v * s).collect()).collect();
        let b = train_binary_smo(&xs, &y, &SvmHyperparams::new(10.0, gamma / (s * s)), seed).unwrap();
        for q in [[0.5, 0.5], [0.0, 1.0], [1.2, -0.3]] {
            let da = a.decision(&q).unwrap();
            let db = b.decision(&[q[0] * s, q[1] * s]).unwrap();
            prop_assert!((da - db).abs() <= 1e-9, "{} vs {}", da, db);
        }
    }

    #[test]
    fn adagrad_accumulators_never_shrink(
        grads in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 4), 1..10),
    ) {
        let mut params = vec![0.5; 4];
        let mut acc = vec![0.0; 4];
        for g in &grads {
            let before = acc.clone();
            adagrad_step(&mut params, g, &mut acc, 0.01, 1e-8);
            prop_assert!(acc.iter().zip(&before).all(|(a, b)| a >= b));
        }
        let frozen = params.clone();
        adagrad_step(&mut params, &[0.0; 4], &mut acc, 0.01, 1e-8);
        prop_assert_eq!(params, frozen);
    }

    #[test]
    fn softmax_is_a_distribution_and_shift_invariant(
        logits in prop::collection::vec(-30.0f64..30.0, 1..8),
        shift in -100.0f64..100.0,
    ) {
        let p = softmax(&logits);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        let shifted: Vec<f64> = logits.iter().map(|v| v + shift).collect();
        for (a, b) in p.iter().zip(softmax(&shifted)) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn split_partitions_the_dataset(seed in 0u64..500, fraction in 0.1f64..0.9) {
        let s = scene(12, 12, 2, 3, 4, 0.05, 0.1, seed);
        let ds = extract_patches(&s.cube, &s.labels, PatchSpec::new(1, BorderPolicy::Skip).unwrap()).unwrap();
        let (train, test) = split_dataset(&ds, fraction, seed).unwrap();
        let mut all: Vec<_> = train.source_coords.iter().chain(&test.source_coords).copied().collect();
        all.sort();
        let mut want = ds.source_coords.clone();
        want.sort();
        prop_assert_eq!(all, want);
        for &class in &ds.class_ids {
            prop_assert!(train.patches.iter().any(|p| p.center_label == class));
        }
    }

    #[test]
    fn excluding_twice_equals_excluding_the_union(bands in 5usize..12, a in 1usize..4) {
        let cube = RasterCube::new(1, 1, bands, (0..bands).map(|b| b as f32).collect()).unwrap();
        let first = exclude_bands(&cube, &[(1, a)]).unwrap();
        let rest = bands - a;
        let second = exclude_bands(&first, &[(rest, rest)]).unwrap();
        let together = exclude_bands(&cube, &[(1, a), (bands, bands)]).unwrap();
        prop_assert_eq!(second, together);
    }

    #[test]
    fn interior_patches_ignore_the_border_policy((cube, labels) in cube_strategy(), half in 0usize..3) {
        let p = 2 * half + 1;
        let skip = extract_patches(&cube, &labels, PatchSpec::new(p, BorderPolicy::Skip).unwrap());
        let mirror = extract_patches(&cube, &labels, PatchSpec::new(p, BorderPolicy::Mirror).unwrap());
        if let (Ok(skip), Ok(mirror)) = (skip, mirror) {
            for (patch, coord) in skip.patches.iter().zip(&skip.source_coords) {
                let j = mirror.source_coords.iter().position(|c| c == coord).unwrap();
                prop_assert_eq!(&patch.values, &mirror.patches[j].values);
            }
        }
    }

    #[test]
    fn patch_center_is_the_pixel((cube, labels) in cube_strategy(), half in 0usize..3) {
        let p = 2 * half + 1;
        if let Ok(ds) = extract_patches(&cube, &labels, PatchSpec::new(p, BorderPolicy::Mirror).unwrap()) {
            for (patch, &(r, c)) in ds.patches.iter().zip(&ds.source_coords) {
                prop_assert_eq!(patch.center(), cube.spectrum(r, c));
                prop_assert_eq!(patch.center_label, labels.get(r, c));
            }
        }
    }

    #[test]
    fn normalized_values_lie_in_unit_interval((cube, labels) in cube_strategy()) {
        if let Ok(stats) = compute_stats(&cube, &labels) {
            let out = normalize(&cube, &stats).unwrap();
            prop_assert!(out.values().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}

#[test]
fn swap_rate_is_binomial() {
    let rate = 0.15;
    let s = generate_scene(&SceneSpec::random(80, 80, 2, 4, 10, 0.01, rate, 21)).unwrap();
    let labeled = s.labels.labels().iter().filter(|&&l| l != 0).count() as f64;
    let swapped = s.swapped.iter().filter(|&&w| w).count() as f64;
    let sd = (labeled * rate * (1.0 - rate)).sqrt();
    assert!((swapped - labeled * rate).abs() <= 3.0 * sd, "{swapped} of {labeled}");
}

/// Assigns each pixel the class whose mean is nearest.
struct NearestMean(Vec<Vec<f64>>);

impl PatchClassifier for NearestMean {
    fn feature_length(&self) -> usize {
        self.0[0].len()
    }

    fn predict_features(&self, x: &[f32]) -> Result<u16> {
        let dist = |m: &Vec<f64>| m.iter().zip(x).map(|(a, &b)| (a - f64::from(b)).powi(2)).sum::<f64>();
        let best = (0..self.0.len())
            .min_by(|&a, &b| dist(&self.0[a]).total_cmp(&dist(&self.0[b])))
            .unwrap();
        Ok(best as u16 + 1)
    }
}

#[test]
fn noiseless_scene_is_separable_by_nearest_mean() {
    let s = generate_scene(&SceneSpec::random(40, 40, 5, 4, 10, 0.0, 0.0, 4)).unwrap();
    let model = NearestMean(s.spec.class_means.clone().unwrap());
    let map = classify_scene(&s.cube, &model, PatchSpec::new(1, BorderPolicy::Mirror).unwrap()).unwrap();
    for (&got, &want) in map.labels().iter().zip(s.labels.labels()) {
        if want != 0 {
            assert_eq!(got, want);
        }
    }
}

#[test]
fn training_is_thread_count_independent() {
    let s = scene(20, 20, 3, 3, 6, 0.05, 0.1, 2);
    let ds = extract_patches(&s.cube, &s.labels, PatchSpec::new(3, BorderPolicy::Mirror).unwrap()).unwrap();
    let cfg = TrainConfig {
        epochs: 3,
        batch_size: 16,
        ..TrainConfig::default()
    };
    let train_in = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| train_mlp(&ds, &[12, 6], &cfg).unwrap())
    };
    let (a, ra) = train_in(1);
    let (b, rb) = train_in(4);
    assert_eq!(a, b);
    assert_eq!(ra.loss_trace, rb.loss_trace);
}

#[test]
fn confusion_rows_sum_to_class_support() {
    let truth = [1u16, 1, 2, 3, 3, 3];
    let preds = [1u16, 2, 2, 3, 1, 3];
    let cm = confusion(&preds, &truth, &[1, 2, 3]).unwrap();
    let sums: Vec<u64> = cm.counts.iter().map(|r| r.iter().sum()).collect();
    assert_eq!(sums, vec![2, 1, 3]);
    assert_eq!(cm.total(), 6);
}

fn bundle_for(s: &patchland::synth::Scene, p: usize) -> ModelBundle {
    let split = prepare_split(&s.cube, &s.labels, p, 0.75, 0).unwrap();
    let model = train_classifier(ClassifierKind::Svm, &split.train, &RunConfig::default()).unwrap();
    ModelBundle {
        patch_size: p,
        source_bands: s.cube.bands(),
        exclude_bands: vec![],
        normalization: split.stats,
        split_seed: 0,
        split_fraction: 0.75,
        model,
    }
}

#[test]
fn classified_map_has_no_unlabeled_pixels() {
    let s = scene(16, 16, 3, 3, 5, 0.05, 0.1, 6);
    let bundle = bundle_for(&s, 3);
    let cube = bundle.prepare_cube(&s.cube).unwrap();
    let map = classify_scene(&cube, &bundle, PatchSpec::new(3, BorderPolicy::Mirror).unwrap()).unwrap();
    assert!(map.labels().iter().all(|&l| (1..=3).contains(&l)));
}

#[test]
fn single_pixel_map_matches_per_pixel_prediction() {
    let s = scene(12, 12, 3, 3, 5, 0.05, 0.1, 8);
    let bundle = bundle_for(&s, 1);
    let cube = bundle.prepare_cube(&s.cube).unwrap();
    let map = classify_scene(&cube, &bundle, PatchSpec::new(1, BorderPolicy::Mirror).unwrap()).unwrap();
    for r in 0..12 {
        for c in 0..12 {
            assert_eq!(map.get(r, c), bundle.predict_features(cube.spectrum(r, c)).unwrap());
        }
    }
}
