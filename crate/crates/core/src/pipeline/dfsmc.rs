use std::path::Path;

use rayon::prelude::*;

use super::{evaluate, fuse, EvalReport, FeatureCache, FeatureSource, FeatureVector};
use crate::error::{Error, Result};
use crate::ingest::{load_samples, preprocess, DatasetManifest, GrayImage, Sample, Split};
use crate::models::{predict_class, NetModel};
use crate::svm::{train_multiclass, Prediction, SolverConfig, SvmModel};

/// Pair the rows of a residual and a dense feature cache and fuse them.
pub fn fused_rows(
    resnet: &FeatureCache,
    densenet: &FeatureCache,
) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    if resnet.source != FeatureSource::Resnet || densenet.source != FeatureSource::Densenet {
        return Err(Error::Contract(
            "expected one resnet and one densenet feature cache".into(),
        ));
    }
    if resnet.len() != densenet.len() || resnet.labels != densenet.labels {
        return Err(Error::Dataset(
            "feature caches describe different samples".into(),
        ));
    }
    let rows = (0..resnet.len())
        .map(|i| Ok(fuse(&resnet.vector(i), &densenet.vector(i))?.values))
        .collect::<Result<Vec<_>>>()?;
    Ok((rows, resnet.labels.clone()))
}

pub fn train_fused_svm(
    resnet: &FeatureCache,
    densenet: &FeatureCache,
    config: &SolverConfig,
) -> Result<SvmModel> {
    let (rows, labels) = fused_rows(resnet, densenet)?;
    train_multiclass(&rows, &labels, config)
}

/// SVM on one extractor's features alone.
pub fn train_single_svm(cache: &FeatureCache, config: &SolverConfig) -> Result<SvmModel> {
    train_multiclass(&cache.rows, &cache.labels, config)
}

#[derive(Clone, Debug)]
pub struct DfsmcTraining {
    pub svm: SvmModel,
    pub resnet_cache: FeatureCache,
    pub densenet_cache: FeatureCache,
}

fn check_extractors(resnet: &NetModel, densenet: &NetModel) -> Result<()> {
    if FeatureSource::of(resnet.arch) != FeatureSource::Resnet
        || FeatureSource::of(densenet.arch) != FeatureSource::Densenet
    {
        return Err(Error::Contract(
            "expected a mini-resnet and a mini-densenet extractor".into(),
        ));
    }
    Ok(())
}

/// Extract both feature sets for the training split, write them to
/// `cache_dir` (as `resnet.csv` and `densenet.csv`) when given, and train
/// the SVM on the fused features.
pub fn dfsmc_train(
    manifest: &DatasetManifest,
    resnet: &NetModel,
    densenet: &NetModel,
    config: &SolverConfig,
    cache_dir: Option<&Path>,
) -> Result<DfsmcTraining> {
    check_extractors(resnet, densenet)?;
    let resnet_cache = FeatureCache::extract(
        resnet,
        &load_samples(manifest, Split::Train, resnet.config.input)?,
    )?;
    let densenet_cache = FeatureCache::extract(
        densenet,
        &load_samples(manifest, Split::Train, densenet.config.input)?,
    )?;
    if let Some(dir) = cache_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        resnet_cache.write(&dir.join("resnet.csv"))?;
        densenet_cache.write(&dir.join("densenet.csv"))?;
    }
    let svm = train_fused_svm(&resnet_cache, &densenet_cache, config)?;
    Ok(DfsmcTraining {
        svm,
        resnet_cache,
        densenet_cache,
    })
}

fn check_dims(svm: &SvmModel, resnet: &NetModel, densenet: &NetModel) -> Result<()> {
    check_extractors(resnet, densenet)?;
    let fused = resnet.feature_dim() + densenet.feature_dim();
    if svm.dim() != fused {
        return Err(Error::shape(format!(
            "SVM expects {} features but the extractors produce {fused}",
            svm.dim()
        )));
    }
    Ok(())
}

fn fused_feature(
    resnet: &NetModel,
    densenet: &NetModel,
    r_input: &crate::nncore::Tensor,
    d_input: &crate::nncore::Tensor,
) -> Result<FeatureVector> {
    let fr = FeatureVector {
        values: resnet.features(r_input)?.into_data(),
        source: FeatureSource::Resnet,
    };
    let fd = FeatureVector {
        values: densenet.features(d_input)?.into_data(),
        source: FeatureSource::Densenet,
    };
    fuse(&fr, &fd)
}

/// Classify one image with the full pipeline.
pub fn dfsmc_predict(
    svm: &SvmModel,
    resnet: &NetModel,
    densenet: &NetModel,
    img: &GrayImage,
) -> Result<Prediction> {
    check_dims(svm, resnet, densenet)?;
    let r_input = preprocess(img, resnet.config.input)?;
    let d_input = preprocess(img, densenet.config.input)?;
    svm.predict(&fused_feature(resnet, densenet, &r_input, &d_input)?.values)
}

/// Classify preprocessed samples; each extractor gets its own sample list so
/// the two may see differently sized (or differently masked) inputs.
pub fn predict_samples(
    svm: &SvmModel,
    resnet: &NetModel,
    densenet: &NetModel,
    resnet_samples: &[Sample],
    densenet_samples: &[Sample],
) -> Result<Vec<Prediction>> {
    check_dims(svm, resnet, densenet)?;
    if resnet_samples.len() != densenet_samples.len() {
        return Err(Error::shape("extractor sample lists differ in length"));
    }
    resnet_samples
        .par_iter()
        .zip(densenet_samples)
        .map(|(r, d)| svm.predict(&fused_feature(resnet, densenet, &r.input, &d.input)?.values))
        .collect()
}

fn labelled(report: EvalReport, manifest: &DatasetManifest) -> Result<EvalReport> {
    let mut report = report.with_class_names(manifest.family_names())?;
    report.train_samples = manifest.count(Split::Train);
    Ok(report)
}

/// Evaluate the fused pipeline on the test split.
pub fn evaluate_dfsmc(
    svm: &SvmModel,
    resnet: &NetModel,
    densenet: &NetModel,
    manifest: &DatasetManifest,
) -> Result<EvalReport> {
    check_dims(svm, resnet, densenet)?;
    let r = load_samples(manifest, Split::Test, resnet.config.input)?;
    let d = load_samples(manifest, Split::Test, densenet.config.input)?;
    let predictions: Vec<usize> = predict_samples(svm, resnet, densenet, &r, &d)?
        .into_iter()
        .map(|p| p.class)
        .collect();
    let truths: Vec<usize> = r.iter().map(|s| s.label).collect();
    labelled(
        evaluate(&predictions, &truths, manifest.family_count)?,
        manifest,
    )
}

/// Evaluate a network's own softmax head on the test split.
pub fn evaluate_softmax(model: &NetModel, manifest: &DatasetManifest) -> Result<EvalReport> {
    let samples = load_samples(manifest, Split::Test, model.config.input)?;
    let predictions = samples
        .par_iter()
        .map(|s| predict_class(model, &s.input))
        .collect::<Result<Vec<_>>>()?;
    let truths: Vec<usize> = samples.iter().map(|s| s.label).collect();
    labelled(
        evaluate(&predictions, &truths, manifest.family_count)?,
        manifest,
    )
}
