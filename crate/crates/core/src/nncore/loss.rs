use super::Tensor;
use crate::error::{Error, Result};

/// Numerically stable softmax of a rank-1 tensor.
pub fn softmax(v: &Tensor) -> Tensor {
    let max = v.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = v.data().iter().map(|&x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Tensor::vector(exps.into_iter().map(|e| e / total).collect())
}

/// `-ln(probs[target])`.
pub fn cross_entropy(probs: &Tensor, target: usize) -> Result<f64> {
    let p = probs
        .data()
        .get(target)
        .ok_or_else(|| Error::shape(format!("class {target} out of range {}", probs.len())))?;
    Ok(-p.ln())
}

/// Gradient of `cross_entropy(softmax(logits), target)` with respect to the
/// logits: `probs - onehot(target)`.
pub fn cross_entropy_grad(probs: &Tensor, target: usize) -> Result<Tensor> {
    if target >= probs.len() {
        return Err(Error::shape(format!(
            "class {target} out of range {}",
            probs.len()
        )));
    }
    let mut g = probs.clone();
    g.data_mut()[target] -= 1.0;
    Ok(g)
}
