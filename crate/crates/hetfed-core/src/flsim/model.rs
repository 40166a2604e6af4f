//! Small classification models with analytically derived gradients.
//!
//! Parameters live in one flat vector per model. Canonical layout:
//! softmax regression stores `[W (C×d, row-major), b (C)]`; the MLP stores
//! `[W1 (h×d), b1 (h), W2 (C×h), b2 (C)]`. A layer is one (W, b) pair, so
//! the models have one and two layers respectively.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use rand::Rng;

use crate::fmath;
use crate::numerics::Matrix;
use crate::streams::{self, tag};

use super::FlError;

/// Model family plus its dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Architecture {
    SoftmaxRegression { input_dim: usize, num_classes: usize },
    Mlp { input_dim: usize, hidden_dim: usize, num_classes: usize },
}

impl Architecture {
    pub fn param_count(&self) -> usize {
        match *self {
            Self::SoftmaxRegression { input_dim, num_classes } => num_classes * (input_dim + 1),
            Self::Mlp { input_dim, hidden_dim, num_classes } => {
                hidden_dim * (input_dim + 1) + num_classes * (hidden_dim + 1)
            }
        }
    }

    pub fn input_dim(&self) -> usize {
        match *self {
            Self::SoftmaxRegression { input_dim, .. } => input_dim,
            Self::Mlp { input_dim, .. } => input_dim,
        }
    }

    pub fn num_classes(&self) -> usize {
        match *self {
            Self::SoftmaxRegression { num_classes, .. } => num_classes,
            Self::Mlp { num_classes, .. } => num_classes,
        }
    }

    /// Flat-vector range of each (W, b) layer, in forward order.
    pub fn layer_ranges(&self) -> Vec<Range<usize>> {
        match *self {
            Self::SoftmaxRegression { .. } => vec![0..self.param_count()],
            Self::Mlp { input_dim, hidden_dim, num_classes } => {
                let first = hidden_dim * (input_dim + 1);
                vec![0..first, first..first + num_classes * (hidden_dim + 1)]
            }
        }
    }

    /// Uniform init in ±1/√fan_in per layer, drawn in layout order from
    /// the model-init stream so every run of the same (seed, index) agrees.
    pub fn init(&self, seed: u64, model_index: u64) -> ModelParams {
        let mut rng = streams::derive_rng(seed, &[tag::MODEL_INIT, model_index]);
        let mut values = vec![0.0; self.param_count()];
        let fill = |vals: &mut [f64], fan_in: usize, rng: &mut rand_chacha::ChaCha12Rng| {
            let bound = 1.0 / fmath::sqrt(fan_in as f64);
            for v in vals.iter_mut() {
                *v = rng.gen_range(-bound..bound);
            }
        };
        match *self {
            Self::SoftmaxRegression { input_dim, .. } => {
                fill(&mut values, input_dim, &mut rng);
            }
            Self::Mlp { input_dim, hidden_dim, .. } => {
                let first = hidden_dim * (input_dim + 1);
                fill(&mut values[..first], input_dim, &mut rng);
                fill(&mut values[first..], hidden_dim, &mut rng);
            }
        }
        ModelParams {
            architecture: *self,
            values,
        }
    }
}

/// One model's flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub architecture: Architecture,
    pub values: Vec<f64>,
}

impl ModelParams {
    pub fn new(architecture: Architecture, values: Vec<f64>) -> Result<Self, FlError> {
        if values.len() != architecture.param_count() {
            return Err(FlError::ArchitectureMismatch);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(FlError::Diverged);
        }
        Ok(Self { architecture, values })
    }
}

/// Mean cross-entropy loss over `batch` together with its gradient in the
/// model's flat parameter layout. This is the exact quantity one SGD step
/// descends, exposed so callers can probe the training arithmetic directly.
pub fn batch_loss_and_gradient(
    model: &ModelParams,
    features: &Matrix,
    labels: &[usize],
    batch: &[usize],
) -> Result<(f64, Vec<f64>), FlError> {
    let arch = model.architecture;
    if features.cols() != arch.input_dim() {
        return Err(FlError::ArchitectureMismatch);
    }
    if labels.len() != features.rows() {
        return Err(FlError::PartitionMismatch);
    }
    if batch.is_empty() {
        return Err(FlError::BadConfig("batch must be non-empty"));
    }
    for &idx in batch {
        if idx >= features.rows() || labels[idx] >= arch.num_classes() {
            return Err(FlError::PartitionMismatch);
        }
    }
    let mut grad = vec![0.0; arch.param_count()];
    let loss = batch_loss_grad(&arch, &model.values, features, labels, batch, Some(&mut grad));
    Ok((loss, grad))
}

/// Per-class logits of one sample; scratch holds the MLP's post-ReLU
/// hidden activations (resized as needed, unused for softmax regression).
pub(crate) fn logits(
    arch: &Architecture,
    params: &[f64],
    x: &[f64],
    hidden_scratch: &mut Vec<f64>,
    out: &mut Vec<f64>,
) {
    match *arch {
        Architecture::SoftmaxRegression { input_dim, num_classes } => {
            out.clear();
            for c in 0..num_classes {
                let w = &params[c * input_dim..(c + 1) * input_dim];
                let mut z = params[num_classes * input_dim + c];
                for (wi, xi) in w.iter().zip(x) {
                    z += wi * xi;
                }
                out.push(z);
            }
        }
        Architecture::Mlp { input_dim, hidden_dim, num_classes } => {
            let (w1, rest) = params.split_at(hidden_dim * input_dim);
            let (b1, rest) = rest.split_at(hidden_dim);
            let (w2, b2) = rest.split_at(num_classes * hidden_dim);
            hidden_scratch.clear();
            for h in 0..hidden_dim {
                let mut z = b1[h];
                for (wi, xi) in w1[h * input_dim..(h + 1) * input_dim].iter().zip(x) {
                    z += wi * xi;
                }
                hidden_scratch.push(z.max(0.0));
            }
            out.clear();
            for c in 0..num_classes {
                let mut z = b2[c];
                for (wi, hi) in w2[c * hidden_dim..(c + 1) * hidden_dim]
                    .iter()
                    .zip(hidden_scratch.iter())
                {
                    z += wi * hi;
                }
                out.push(z);
            }
        }
    }
}

/// Numerically stable softmax cross-entropy: returns the loss and leaves
/// the probability vector in `z`. Uses log-sum-exp, so the loss is
/// `(zmax + ln Σ exp(z − zmax)) − z[label]`, non-negative and finite for
/// finite logits.
fn softmax_loss_inplace(z: &mut [f64], label: usize) -> f64 {
    let zmax = z.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let z_label = z[label];
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = fmath::exp(*v - zmax);
        sum += *v;
    }
    let loss = zmax + fmath::ln(sum) - z_label;
    for v in z.iter_mut() {
        *v /= sum;
    }
    loss
}

/// Mean cross-entropy loss over `batch` and, when `grad` is given, the mean
/// gradient added into it (callers zero it first).
pub(crate) fn batch_loss_grad(
    arch: &Architecture,
    params: &[f64],
    features: &Matrix,
    labels: &[usize],
    batch: &[usize],
    mut grad: Option<&mut [f64]>,
) -> f64 {
    let mut hidden = Vec::new();
    let mut z = Vec::new();
    let mut loss_sum = 0.0;
    let inv = 1.0 / batch.len() as f64;
    for &idx in batch {
        let x = features.row(idx);
        let label = labels[idx];
        logits(arch, params, x, &mut hidden, &mut z);
        loss_sum += softmax_loss_inplace(&mut z, label);
        let Some(g) = grad.as_deref_mut() else {
            continue;
        };
        // z now holds softmax probabilities; the logit gradient is p − 1
        // at the true class, p elsewhere.
        z[label] -= 1.0;
        match *arch {
            Architecture::SoftmaxRegression { input_dim, num_classes } => {
                for c in 0..num_classes {
                    let gz = z[c] * inv;
                    let row = &mut g[c * input_dim..(c + 1) * input_dim];
                    for (gw, xi) in row.iter_mut().zip(x) {
                        *gw += gz * xi;
                    }
                    g[num_classes * input_dim + c] += gz;
                }
            }
            Architecture::Mlp { input_dim, hidden_dim, num_classes } => {
                let first = hidden_dim * input_dim;
                let w2_off = first + hidden_dim;
                let b2_off = w2_off + num_classes * hidden_dim;
                // Output layer.
                for c in 0..num_classes {
                    let gz = z[c] * inv;
                    for (h, &hv) in hidden.iter().enumerate() {
                        g[w2_off + c * hidden_dim + h] += gz * hv;
                    }
                    g[b2_off + c] += gz;
                }
                // Hidden layer; ReLU gradient is zero at and below zero.
                for (h, &hv) in hidden.iter().enumerate() {
                    if hv <= 0.0 {
                        continue;
                    }
                    let mut gh = 0.0;
                    for c in 0..num_classes {
                        gh += z[c] * params[w2_off + c * hidden_dim + h];
                    }
                    gh *= inv;
                    let row = &mut g[h * input_dim..(h + 1) * input_dim];
                    for (gw, xi) in row.iter_mut().zip(x) {
                        *gw += gh * xi;
                    }
                    g[first + h] += gh;
                }
            }
        }
    }
    loss_sum * inv
}

/// Fraction of `indices` classified correctly; argmax ties resolve to the
/// lowest class index.
pub(crate) fn accuracy(
    arch: &Architecture,
    params: &[f64],
    features: &Matrix,
    labels: &[usize],
    indices: &[usize],
) -> f64 {
    if indices.is_empty() {
        return 0.0;
    }
    let mut hidden = Vec::new();
    let mut z = Vec::new();
    let mut correct = 0usize;
    for &idx in indices {
        logits(arch, params, features.row(idx), &mut hidden, &mut z);
        let mut best = 0usize;
        for (c, &v) in z.iter().enumerate() {
            if v > z[best] {
                best = c;
            }
        }
        correct += usize::from(best == labels[idx]);
    }
    correct as f64 / indices.len() as f64
}

// ── Tests ───────────────────────────────────────────────────────────────

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    const SR: Architecture = Architecture::SoftmaxRegression { input_dim: 4, num_classes: 3 };
    const MLP: Architecture = Architecture::Mlp { input_dim: 4, hidden_dim: 5, num_classes: 3 };

    fn toy_data(n: usize, arch: &Architecture, seed: u64) -> (Matrix, Vec<usize>) {
        let mut rng = streams::derive_rng(seed, &[77]);
        let d = arch.input_dim();
        let features = Matrix::from_fn(n, d, |_, _| rng.gen_range(0.0..1.0));
        let labels = (0..n).map(|_| rng.gen_range(0..arch.num_classes())).collect();
        (features, labels)
    }

    #[test]
    fn layout_sizes() {
        assert_eq!(SR.param_count(), 15);
        assert_eq!(MLP.param_count(), 43);
        assert_eq!(SR.layer_ranges(), vec![0..15]);
        assert_eq!(MLP.layer_ranges(), vec![0..25, 25..43]);
    }

    #[test]
    fn init_deterministic_and_bounded() {
        let a = MLP.init(9, 0);
        let b = MLP.init(9, 0);
        assert_eq!(a, b);
        let c = MLP.init(9, 1);
        assert_ne!(a.values, c.values);
        let bound1 = 1.0 / 2.0;
        for &v in &a.values[..25] {
            assert!(v.abs() <= bound1, "first layer bound");
        }
        let bound2 = 1.0 / (5f64).sqrt();
        for &v in &a.values[25..] {
            assert!(v.abs() <= bound2, "second layer bound");
        }
    }

    #[test]
    fn model_params_validated() {
        assert_eq!(
            ModelParams::new(SR, vec![0.0; 14]).unwrap_err(),
            FlError::ArchitectureMismatch
        );
        let mut bad = vec![0.0; 15];
        bad[3] = f64::NAN;
        assert_eq!(ModelParams::new(SR, bad).unwrap_err(), FlError::Diverged);
    }

    #[test]
    fn single_sample_softmax_gradient_closed_form() {
        // One sample, W = 0, b = 0: probabilities are uniform, so the
        // logit gradient is 1/C − 1 at the label and 1/C elsewhere.
        let arch = Architecture::SoftmaxRegression { input_dim: 2, num_classes: 2 };
        let params = vec![0.0; 6];
        let features = Matrix::new(1, 2, vec![0.3, 0.9]).unwrap();
        let labels = vec![1usize];
        let mut g = vec![0.0; 6];
        let loss = batch_loss_grad(&arch, &params, &features, &labels, &[0], Some(&mut g));
        assert!((loss - 2f64.ln()).abs() < 1e-12);
        let expect = [
            0.5 * 0.3,
            0.5 * 0.9,
            -0.5 * 0.3,
            -0.5 * 0.9,
            0.5,
            -0.5,
        ];
        for (got, want) in g.iter().zip(expect) {
            assert!((got - want).abs() < 1e-9, "{g:?}");
        }
    }

    fn finite_difference_check(arch: Architecture, rel_tol: f64, seed: u64) {
        let (features, labels) = toy_data(12, &arch, seed);
        let model = arch.init(seed, 0);
        let batch: Vec<usize> = (0..12).collect();
        let mut g = vec![0.0; arch.param_count()];
        batch_loss_grad(&arch, &model.values, &features, &labels, &batch, Some(&mut g));

        let mut rng = streams::derive_rng(seed, &[78]);
        for _ in 0..5 {
            let k = rng.gen_range(0..arch.param_count());
            let h = 1e-5;
            let mut plus = model.values.clone();
            plus[k] += h;
            let mut minus = model.values.clone();
            minus[k] -= h;
            let lp = batch_loss_grad(&arch, &plus, &features, &labels, &batch, None);
            let lm = batch_loss_grad(&arch, &minus, &features, &labels, &batch, None);
            let fd = (lp - lm) / (2.0 * h);
            let denom = fd.abs().max(g[k].abs()).max(1e-8);
            assert!(
                ((g[k] - fd) / denom).abs() <= rel_tol,
                "coordinate {k}: analytic {} vs fd {fd}",
                g[k]
            );
        }
    }

    #[test]
    fn softmax_gradient_matches_finite_differences() {
        finite_difference_check(SR, 1e-6, 3);
    }

    #[test]
    fn mlp_gradient_matches_finite_differences() {
        finite_difference_check(MLP, 1e-4, 4);
    }

    #[test]
    fn accuracy_ties_take_lowest_class() {
        let arch = Architecture::SoftmaxRegression { input_dim: 1, num_classes: 3 };
        // All-zero parameters make every logit equal; argmax must pick
        // class 0.
        let params = vec![0.0; 6];
        let features = Matrix::new(2, 1, vec![0.4, 0.6]).unwrap();
        let labels = vec![0usize, 1];
        let acc = accuracy(&arch, &params, &features, &labels, &[0, 1]);
        assert_eq!(acc, 0.5);
    }
}
