use std::path::Path;

use dfsmc::ingest::{
    load_samples, preprocess, read_image, stratified_split, DatasetManifest, Split,
};
use dfsmc::models::{build_model, Arch, ModelConfig, NetModel};
use dfsmc::pipeline::{
    compare_csv, dfsmc_predict, dfsmc_train, evaluate, evaluate_dfsmc, fuse, fused_rows,
    predict_samples, FeatureCache, FeatureSource, FeatureVector,
};
use dfsmc::svm::SolverConfig;
use dfsmc::synth::write_texture_dataset;
use dfsmc::Error;
use proptest::prelude::*;

fn extractor(arch: Arch) -> NetModel {
    build_model(
        arch,
        ModelConfig {
            input: [1, 16, 16],
            classes: 5,
            features: 64,
            seed: 21,
        },
    )
    .unwrap()
}

fn dataset(root: &Path) -> DatasetManifest {
    write_texture_dataset(root, 4, 16, 8).unwrap();
    stratified_split(&DatasetManifest::build(root).unwrap(), 0.5, 3).unwrap()
}

fn solver() -> SolverConfig {
    SolverConfig {
        cost: 100.0,
        ..SolverConfig::default()
    }
}

#[test]
fn fused_training_matrix_and_cached_features() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(&dir.path().join("data"));
    let (r, d) = (extractor(Arch::MiniResNet), extractor(Arch::MiniDenseNet));
    let cache_dir = dir.path().join("cache");
    let trained = dfsmc_train(&manifest, &r, &d, &solver(), Some(&cache_dir)).unwrap();

    let resnet = FeatureCache::read(&cache_dir.join("resnet.csv")).unwrap();
    let densenet = FeatureCache::read(&cache_dir.join("densenet.csv")).unwrap();
    assert_eq!(resnet, trained.resnet_cache);
    assert_eq!(densenet, trained.densenet_cache);
    let (rows, labels) = fused_rows(&resnet, &densenet).unwrap();
    assert_eq!((rows.len(), rows[0].len()), (10, 128));
    assert_eq!(trained.svm.dim(), 128);
    assert_eq!(trained.svm.class_count(), 5);

    for (row, &label) in rows.iter().zip(&labels) {
        assert_eq!(trained.svm.predict(row).unwrap().class, label);
    }
}

#[test]
fn predictions_match_offline_recomputation() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(&dir.path().join("data"));
    let (r, d) = (extractor(Arch::MiniResNet), extractor(Arch::MiniDenseNet));
    let svm = dfsmc_train(&manifest, &r, &d, &solver(), None).unwrap().svm;

    let test: Vec<_> = manifest.split_records(Split::Test).collect();
    let r_samples = load_samples(&manifest, Split::Test, r.config.input).unwrap();
    let d_samples = load_samples(&manifest, Split::Test, d.config.input).unwrap();
    let batched = predict_samples(&svm, &r, &d, &r_samples, &d_samples).unwrap();
    assert_eq!(batched.len(), test.len());

    for (record, batch) in test.iter().zip(&batched) {
        let img = read_image(&manifest.path_of(record)).unwrap();
        let single = dfsmc_predict(&svm, &r, &d, &img).unwrap();
        assert_eq!(&single, batch);

        let input = preprocess(&img, [1, 16, 16]).unwrap();
        let mut x = r.features(&input).unwrap().into_data();
        x.extend(d.features(&input).unwrap().into_data());
        for k in 0..svm.class_count() {
            let mut margin = svm.biases[k];
            for (j, v) in x.iter().enumerate() {
                margin += svm.weights[k][j] * (v - svm.mean[j]) / svm.scale[j];
            }
            assert!(
                (margin - single.margins[k]).abs() <= 1e-12,
                "class {k}: {margin} vs {}",
                single.margins[k]
            );
        }
    }

    let report = evaluate_dfsmc(&svm, &r, &d, &manifest).unwrap();
    assert_eq!(report.test_samples, 10);
    assert_eq!(report.train_samples, 10);
    assert_eq!(report.class_names[0], "checker");
}

#[test]
fn swapped_or_mismatched_extractors_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(&dir.path().join("data"));
    let (r, d) = (extractor(Arch::MiniResNet), extractor(Arch::MiniDenseNet));
    assert!(matches!(
        dfsmc_train(&manifest, &d, &r, &solver(), None),
        Err(Error::Contract(_))
    ));

    let svm = dfsmc_train(&manifest, &r, &d, &solver(), None).unwrap().svm;
    let narrow = build_model(
        Arch::MiniDenseNet,
        ModelConfig {
            input: [1, 16, 16],
            classes: 5,
            features: 32,
            seed: 21,
        },
    )
    .unwrap();
    let img = read_image(&manifest.path_of(&manifest.records[0])).unwrap();
    let err = dfsmc_predict(&svm, &r, &narrow, &img).unwrap_err();
    assert!(matches!(err, Error::Shape(_)), "{err}");
}

fn permuted(v: &[usize], perm: &[usize]) -> Vec<usize> {
    v.iter().map(|&c| perm[c]).collect()
}

proptest! {
    #[test]
    fn macro_scores_ignore_class_relabelling(
        pairs in proptest::collection::vec((0usize..4, 0usize..4), 1..60),
        perm in Just(vec![0usize, 1, 2, 3]).prop_shuffle(),
    ) {
        let preds: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let truths: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        let a = evaluate(&preds, &truths, 4).unwrap();
        let b = evaluate(&permuted(&preds, &perm), &permuted(&truths, &perm), 4).unwrap();
        prop_assert!((a.macro_f1 - b.macro_f1).abs() < 1e-12);
        prop_assert!((a.macro_precision - b.macro_precision).abs() < 1e-12);
        prop_assert!((a.macro_recall - b.macro_recall).abs() < 1e-12);
        prop_assert_eq!(a.accuracy, b.accuracy);
        for (c, &p) in perm.iter().enumerate() {
            prop_assert_eq!(a.per_class[c], b.per_class[p]);
        }

        let diagonal: usize = (0..4).map(|c| a.confusion[c][c]).sum();
        let correct = preds.iter().zip(&truths).filter(|(p, t)| p == t).count();
        prop_assert_eq!(diagonal, correct);
        prop_assert_eq!(a.confusion.iter().flatten().sum::<usize>(), preds.len());
        prop_assert!((a.accuracy - correct as f64 / preds.len() as f64).abs() < 1e-15);
    }

    #[test]
    fn fusion_is_injective(
        a in proptest::collection::vec(-1e3f64..1e3, 1..6),
        b in proptest::collection::vec(-1e3f64..1e3, 1..6),
        c in proptest::collection::vec(-1e3f64..1e3, 1..6),
    ) {
        let r = |v: &Vec<f64>| FeatureVector { values: v.clone(), source: FeatureSource::Resnet };
        let d = |v: &Vec<f64>| FeatureVector { values: v.clone(), source: FeatureSource::Densenet };
        let ab = fuse(&r(&a), &d(&b)).unwrap();
        prop_assert_eq!(ab.values.len(), a.len() + b.len());
        prop_assert_eq!(&ab.values[..a.len()], &a[..]);
        prop_assert_eq!(&ab.values[a.len()..], &b[..]);
        if c != b {
            prop_assert_ne!(fuse(&r(&a), &d(&c)).unwrap(), ab);
        }
        prop_assert!(fuse(&d(&b), &r(&a)).is_err());
    }
}

#[test]
fn comparison_csv_reparses_to_the_report_values() {
    let a = evaluate(&[0, 1, 2, 2, 1], &[0, 1, 1, 2, 2], 3).unwrap();
    let b = evaluate(&[0, 0, 2, 2, 1], &[0, 1, 1, 2, 2], 3).unwrap();
    let text = compare_csv(&[("dfsmc".into(), a.clone()), ("resnet".into(), b.clone())]).unwrap();
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 2 * 3 + 2);
    let num = |s: &str| s.parse::<f64>().unwrap();
    for (i, row) in rows.iter().take(6).enumerate() {
        let report = if i < 3 { &a } else { &b };
        let m = &report.per_class[i % 3];
        assert_eq!(&row[1], "class");
        assert!((num(&row[3]) - m.precision).abs() <= 1e-12);
        assert!((num(&row[4]) - m.recall).abs() <= 1e-12);
        assert!((num(&row[5]) - m.f1).abs() <= 1e-12);
    }
    for (row, report) in rows[6..].iter().zip([&a, &b]) {
        assert_eq!(&row[1], "macro");
        assert!((num(&row[5]) - report.macro_f1).abs() <= 1e-12);
        assert!((num(&row[6]) - report.accuracy).abs() <= 1e-12);
    }
}
