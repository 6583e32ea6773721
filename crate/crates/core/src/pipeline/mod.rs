//! Feature extraction, fusion, SVM training and evaluation reports.

mod dfsmc;
mod eval;
mod features;

use std::io::Write;
use std::path::Path;

pub use dfsmc::{
    dfsmc_predict, dfsmc_train, evaluate_dfsmc, evaluate_softmax, fused_rows, predict_samples,
    train_fused_svm, train_single_svm, DfsmcTraining,
};
pub use eval::{compare_csv, compare_report, evaluate, ClassMetrics, EvalReport};
pub use features::{extract_features, fuse, FeatureCache, FeatureSource, FeatureVector};

use crate::error::{Error, Result};

/// Write through a temporary file in the target directory, then rename, so
/// readers never see a partial file.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}
