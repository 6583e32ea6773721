use std::cmp::Ordering;

use rayon::prelude::*;

use super::binary::{dot, train_binary, SolverConfig};
use crate::error::{Error, Result};

/// One-vs-rest linear SVM over z-scored features.
#[derive(Clone, Debug, PartialEq)]
pub struct SvmModel {
    /// One weight vector per class.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
    pub cost: f64,
    /// Per-dimension standardization fitted on the training features.
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    /// Per-class primal objective on the standardized training set.
    pub objectives: Vec<f64>,
    pub iterations: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub class: usize,
    pub margins: Vec<f64>,
}

impl SvmModel {
    pub fn class_count(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn standardize(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::shape(format!(
                "feature vector has {} values, model expects {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(x.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect())
    }

    /// Class margins `w_k . z + b_k` of the standardized input `z`.
    pub fn margins(&self, x: &[f64]) -> Result<Vec<f64>> {
        let z = self.standardize(x)?;
        Ok(self
            .weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| dot(w, &z) + b)
            .collect())
    }

    /// Largest margin wins; the lowest class index wins ties.
    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        let margins = self.margins(x)?;
        let mut class = 0;
        for (k, &m) in margins.iter().enumerate() {
            if m > margins[class] {
                class = k;
            }
        }
        Ok(Prediction { class, margins })
    }
}

/// Per-dimension mean and standard deviation; constant dimensions get
/// scale 1.
pub fn fit_standardization<R: AsRef<[f64]>>(x: &[R]) -> (Vec<f64>, Vec<f64>) {
    let n = x.len() as f64;
    let dim = x[0].as_ref().len();
    let mut mean = vec![0.0; dim];
    for row in x {
        for (m, v) in mean.iter_mut().zip(row.as_ref()) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut var = vec![0.0; dim];
    for row in x {
        for ((s, v), m) in var.iter_mut().zip(row.as_ref()).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let scale = var
        .into_iter()
        .map(|s| {
            let sd = (s / n).sqrt();
            if sd > 1e-12 {
                sd
            } else {
                1.0
            }
        })
        .collect();
    (mean, scale)
}

fn canonical_cmp(a: (&Vec<f64>, usize), b: (&Vec<f64>, usize)) -> Ordering {
    a.1.cmp(&b.1).then_with(|| {
        a.0.iter()
            .zip(b.0)
            .map(|(p, q)| p.total_cmp(q))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    })
}

/// Train `K` one-vs-rest problems. Samples are put into a canonical order
/// first, so the result does not depend on the order they were given in.
pub fn train_multiclass(
    x: &[Vec<f64>],
    labels: &[usize],
    config: &SolverConfig,
) -> Result<SvmModel> {
    if x.len() != labels.len() || x.is_empty() {
        return Err(Error::shape(format!(
            "{} samples, {} labels",
            x.len(),
            labels.len()
        )));
    }
    let dim = x[0].len();
    if dim == 0 || x.iter().any(|r| r.len() != dim) {
        return Err(Error::shape("ragged or empty feature rows"));
    }
    let k = labels.iter().max().expect("non-empty") + 1;
    let mut present = vec![false; k];
    for &l in labels {
        present[l] = true;
    }
    if let Some(missing) = present.iter().position(|p| !p) {
        return Err(Error::Dataset(format!(
            "class {missing} has no training samples"
        )));
    }
    if k < 2 {
        return Err(Error::DegenerateLabels);
    }
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| canonical_cmp((&x[a], labels[a]), (&x[b], labels[b])));
    let sorted: Vec<&Vec<f64>> = order.iter().map(|&i| &x[i]).collect();
    let (mean, scale) = fit_standardization(&sorted);
    let z: Vec<Vec<f64>> = sorted
        .iter()
        .map(|row| {
            row.iter()
                .zip(&mean)
                .zip(&scale)
                .map(|((v, m), s)| (v - m) / s)
                .collect()
        })
        .collect();
    let sorted_labels: Vec<usize> = order.iter().map(|&i| labels[i]).collect();
    let solved = (0..k)
        .into_par_iter()
        .map(|class| {
            let y: Vec<f64> = sorted_labels
                .iter()
                .map(|&l| if l == class { 1.0 } else { -1.0 })
                .collect();
            train_binary(&z, &y, config)
        })
        .collect::<Result<Vec<_>>>()?;
    for (class, m) in solved.iter().enumerate() {
        if !m.converged {
            log::warn!(
                "class {class}: solver stopped after {} updates with violation {:.3e}",
                m.iterations,
                m.violation
            );
        }
    }
    Ok(SvmModel {
        weights: solved.iter().map(|m| m.weights.clone()).collect(),
        biases: solved.iter().map(|m| m.bias).collect(),
        cost: config.cost,
        mean,
        scale,
        objectives: solved.iter().map(|m| m.objective).collect(),
        iterations: solved.iter().map(|m| m.iterations).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_ties_go_low() {
        let m = SvmModel {
            weights: vec![vec![0.0], vec![0.0], vec![0.0]],
            biases: vec![-1.0, 2.0, 2.0],
            cost: 1.0,
            mean: vec![0.0],
            scale: vec![1.0],
            objectives: vec![],
            iterations: vec![],
        };
        assert_eq!(m.predict(&[5.0]).unwrap().class, 1);
        assert!(m.predict(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn missing_class() {
        let x = vec![vec![0.0], vec![1.0]];
        assert!(train_multiclass(&x, &[0, 2], &SolverConfig::default()).is_err());
    }

    #[test]
    fn constant_dimension_has_unit_scale() {
        let (mean, scale) = fit_standardization(&[vec![3.0, 1.0], vec![3.0, 3.0]]);
        assert_eq!(mean, vec![3.0, 2.0]);
        assert_eq!(scale, vec![1.0, 1.0]);
    }
}
