//! Central finite-difference verification of analytic gradients.

use std::fmt;

use super::Tensor;

/// Step for central differences.
pub const STEP: f64 = 1e-5;

/// Floor on the relative-error denominator so that near-zero gradients are
/// compared absolutely.
pub const REL_FLOOR: f64 = 1e-3;

/// A scalar function of a list of tensors with a known analytic gradient.
///
/// The variables are the fragment's parameters followed by its input.
pub trait Fragment {
    fn variables(&self) -> Vec<(String, Tensor)>;
    fn loss(&self, values: &[Tensor]) -> f64;
    fn gradients(&self, values: &[Tensor]) -> Vec<Tensor>;
}

#[derive(Clone, Debug)]
pub struct VariableReport {
    pub name: String,
    pub entries: usize,
    pub max_rel_error: f64,
}

#[derive(Clone, Debug)]
pub struct GradReport {
    pub label: String,
    pub variables: Vec<VariableReport>,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl fmt::Display for GradReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<5} {:<28} max_rel_err={:.3e} tol={:.0e}",
            if self.passed { "PASS" } else { "FAIL" },
            self.label,
            self.max_rel_error,
            self.tolerance
        )
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(REL_FLOOR);
    (analytic - numeric).abs() / denom
}

/// Compare `fragment.gradients` against central differences at the
/// fragment's current point.
pub fn gradcheck(label: &str, fragment: &dyn Fragment, tolerance: f64) -> GradReport {
    let vars = fragment.variables();
    let mut values: Vec<Tensor> = vars.iter().map(|(_, t)| t.clone()).collect();
    let analytic = fragment.gradients(&values);
    assert_eq!(analytic.len(), values.len(), "one gradient per variable");

    let mut reports = Vec::with_capacity(vars.len());
    for (vi, (name, _)) in vars.iter().enumerate() {
        assert!(
            analytic[vi].same_shape(&values[vi]),
            "gradient shape for {name}"
        );
        let mut worst = 0.0f64;
        for k in 0..values[vi].len() {
            let orig = values[vi].data()[k];
            values[vi].data_mut()[k] = orig + STEP;
            let up = fragment.loss(&values);
            values[vi].data_mut()[k] = orig - STEP;
            let down = fragment.loss(&values);
            values[vi].data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * STEP);
            let err = relative_error(analytic[vi].data()[k], numeric);
            worst = if err.is_nan() {
                f64::INFINITY
            } else {
                worst.max(err)
            };
        }
        reports.push(VariableReport {
            name: name.clone(),
            entries: values[vi].len(),
            max_rel_error: worst,
        });
    }
    let max_rel_error = reports.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
    GradReport {
        label: label.to_string(),
        variables: reports,
        max_rel_error,
        tolerance,
        passed: max_rel_error <= tolerance,
    }
}

/// Fixed projection turning a tensor output into a scalar loss, so every
/// output entry contributes to the checked gradient.
#[derive(Clone, Debug)]
pub struct Probe {
    pub weights: Tensor,
}

impl Probe {
    pub fn random(shape: &[usize], rng: &mut crate::rng::Rng) -> Self {
        use rand::Rng as _;
        let mut w = Tensor::zeros(shape);
        for v in w.data_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        Probe { weights: w }
    }

    pub fn loss(&self, y: &Tensor) -> f64 {
        assert!(self.weights.same_shape(y), "probe shape");
        self.weights
            .data()
            .iter()
            .zip(y.data())
            .map(|(a, b)| a * b)
            .sum()
    }

    /// d loss / d y
    pub fn grad(&self) -> Tensor {
        self.weights.clone()
    }
}
