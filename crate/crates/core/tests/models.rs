use dfsmc::ingest::preprocess;
use dfsmc::models::{
    accuracy, build_model, decode_weights, encode_weights, replace_head, train_samples, Arch,
    ModelConfig, NetModel, Sample, TrainConfig,
};
use dfsmc::synth::texture_images;
use dfsmc::Error;

const ARCHES: [Arch; 2] = [Arch::MiniResNet, Arch::MiniDenseNet];

fn model(arch: Arch, classes: usize, seed: u64) -> NetModel {
    build_model(
        arch,
        ModelConfig {
            input: [1, 8, 8],
            classes,
            features: 8,
            seed,
        },
    )
    .unwrap()
}

fn texture_samples(per_class: usize, seed: u64) -> Vec<Sample> {
    texture_images(per_class, 8, seed)
        .into_iter()
        .map(|(label, img)| Sample {
            input: preprocess(&img, [1, 8, 8]).unwrap(),
            label,
        })
        .collect()
}

#[test]
fn small_set_is_memorized() {
    let samples = texture_samples(1, 4);
    let hyper = TrainConfig {
        epochs: 800,
        batch_size: 5,
        ..TrainConfig::default()
    };
    for arch in ARCHES {
        let mut m = model(arch, 5, 1);
        let report = train_samples(&mut m, &samples, &hyper).unwrap();
        let last = *report.epoch_loss.last().unwrap();
        assert!(last < 0.01, "{arch}: final loss {last}");
        assert_eq!(accuracy(&m, &samples).unwrap(), 1.0);
        assert_eq!(report.steps, 800);
    }
}

#[test]
fn training_is_reproducible() {
    let samples = texture_samples(3, 5);
    let hyper = TrainConfig {
        epochs: 2,
        batch_size: 4,
        seed: 77,
        ..TrainConfig::default()
    };
    for arch in ARCHES {
        let mut a = model(arch, 5, 2);
        let mut b = model(arch, 5, 2);
        let ra = train_samples(&mut a, &samples, &hyper).unwrap();
        let rb = train_samples(&mut b, &samples, &hyper).unwrap();
        assert_eq!(ra, rb);
        assert_eq!(encode_weights(&a), encode_weights(&b));

        let mut c = model(arch, 5, 2);
        train_samples(&mut c, &samples, &TrainConfig { seed: 78, ..hyper }).unwrap();
        assert_ne!(encode_weights(&a), encode_weights(&c));
    }
}

#[test]
fn missing_class_is_rejected() {
    let samples: Vec<Sample> = texture_samples(2, 6)
        .into_iter()
        .filter(|s| s.label != 3)
        .collect();
    let mut m = model(Arch::MiniResNet, 5, 3);
    let err = train_samples(&mut m, &samples, &TrainConfig::default()).unwrap_err();
    assert!(
        matches!(err, Error::Dataset(ref msg) if msg.contains("class 3")),
        "{err}"
    );
}

#[test]
fn different_seeds_give_different_weights() {
    for arch in ARCHES {
        assert_ne!(
            encode_weights(&model(arch, 3, 1)),
            encode_weights(&model(arch, 3, 2))
        );
        assert_eq!(
            encode_weights(&model(arch, 3, 1)),
            encode_weights(&model(arch, 3, 1))
        );
    }
}

#[test]
fn frozen_finetune_only_moves_the_head() {
    let samples = texture_samples(2, 7);
    for arch in ARCHES {
        let source = model(arch, 3, 4);
        let mut tuned = replace_head(&source, 5, true, 9).unwrap();
        train_samples(
            &mut tuned,
            &samples,
            &TrainConfig {
                epochs: 2,
                ..TrainConfig::default()
            },
        )
        .unwrap();
        let before = source.params();
        let after = tuned.params();
        let head = tuned.head_param_count();
        assert_eq!(before.len(), after.len());
        for (i, ((n, a), (_, b))) in before.iter().zip(&after).enumerate() {
            if i < before.len() - head {
                assert_eq!(a, b, "{arch}: {n} changed");
            }
        }
        assert_eq!(tuned.classes(), 5);
        let back = decode_weights(&encode_weights(&tuned)).unwrap();
        assert_eq!(back.classes(), 5);
    }
}
