use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use super::write_atomic;
use crate::error::{Error, Result};
use crate::ingest::Sample;
use crate::models::{Arch, NetModel};
use crate::svm::fmt17;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FeatureSource {
    Resnet,
    Densenet,
    Fused,
}

impl FeatureSource {
    pub fn tag(self) -> &'static str {
        match self {
            FeatureSource::Resnet => "resnet",
            FeatureSource::Densenet => "densenet",
            FeatureSource::Fused => "fused",
        }
    }

    pub fn of(arch: Arch) -> Self {
        match arch {
            Arch::MiniResNet => FeatureSource::Resnet,
            Arch::MiniDenseNet => FeatureSource::Densenet,
        }
    }
}

impl fmt::Display for FeatureSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for FeatureSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "resnet" => Ok(FeatureSource::Resnet),
            "densenet" => Ok(FeatureSource::Densenet),
            "fused" => Ok(FeatureSource::Fused),
            other => Err(Error::Contract(format!("unknown feature source {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub source: FeatureSource,
}

/// Concatenate a residual-network feature vector with a dense-network one,
/// in that order.
pub fn fuse(resnet: &FeatureVector, densenet: &FeatureVector) -> Result<FeatureVector> {
    if resnet.source != FeatureSource::Resnet || densenet.source != FeatureSource::Densenet {
        return Err(Error::Contract(format!(
            "fuse expects resnet then densenet features, got {} and {}",
            resnet.source, densenet.source
        )));
    }
    if resnet.values.is_empty() || densenet.values.is_empty() {
        return Err(Error::shape("cannot fuse an empty feature vector"));
    }
    let mut values = Vec::with_capacity(resnet.values.len() + densenet.values.len());
    values.extend_from_slice(&resnet.values);
    values.extend_from_slice(&densenet.values);
    Ok(FeatureVector {
        values,
        source: FeatureSource::Fused,
    })
}

/// Penultimate-layer features of every sample, in sample order.
pub fn extract_features(model: &NetModel, samples: &[Sample]) -> Result<Vec<FeatureVector>> {
    let source = FeatureSource::of(model.arch);
    samples
        .par_iter()
        .map(|s| {
            Ok(FeatureVector {
                values: model.features(&s.input)?.into_data(),
                source,
            })
        })
        .collect()
}

/// Extracted features with their labels, stored as CSV so SVM experiments
/// can be rerun without the networks.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureCache {
    pub source: FeatureSource,
    pub labels: Vec<usize>,
    pub rows: Vec<Vec<f64>>,
}

impl FeatureCache {
    pub fn extract(model: &NetModel, samples: &[Sample]) -> Result<Self> {
        let features = extract_features(model, samples)?;
        Ok(FeatureCache {
            source: FeatureSource::of(model.arch),
            labels: samples.iter().map(|s| s.label).collect(),
            rows: features.into_iter().map(|f| f.values).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn vector(&self, i: usize) -> FeatureVector {
        FeatureVector {
            values: self.rows[i].clone(),
            source: self.source,
        }
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["label".to_string(), "src".to_string()];
        header.extend((0..self.dim()).map(|k| format!("f{k}")));
        w.write_record(&header).map_err(csv_err)?;
        for (label, row) in self.labels.iter().zip(&self.rows) {
            let mut record = vec![label.to_string(), self.source.tag().to_string()];
            record.extend(row.iter().map(|&v| fmt17(v)));
            w.write_record(&record).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Contract(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let header = r.headers().map_err(csv_err)?.clone();
        let dim = header.len().saturating_sub(2);
        let expected = (0..dim).map(|k| format!("f{k}"));
        if header.get(0) != Some("label")
            || header.get(1) != Some("src")
            || !header.iter().skip(2).eq(expected)
        {
            return Err(Error::Dataset(
                "feature cache header must be label,src,f0..".into(),
            ));
        }
        let mut source = None;
        let mut labels = Vec::new();
        let mut rows = Vec::new();
        for record in r.records() {
            let record = record.map_err(csv_err)?;
            let label = record[0]
                .parse::<usize>()
                .map_err(|_| Error::Dataset(format!("bad label {:?}", &record[0])))?;
            let src: FeatureSource = record[1].parse()?;
            if *source.get_or_insert(src) != src {
                return Err(Error::Dataset("feature cache mixes sources".into()));
            }
            let row = record
                .iter()
                .skip(2)
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|_| Error::Dataset(format!("bad value {v:?}")))
                })
                .collect::<Result<Vec<_>>>()?;
            labels.push(label);
            rows.push(row);
        }
        let source = source.ok_or_else(|| Error::Dataset("empty feature cache".into()))?;
        Ok(FeatureCache {
            source,
            labels,
            rows,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv()?.as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Dataset(format!("feature cache: {e}"))
}
