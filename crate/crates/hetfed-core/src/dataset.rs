//! In-memory dataset views, preprocessing to a common ambient dimension, and
//! synthetic dataset generation with planted subspace structure.
//!
//! Features are stored one sample per row, flattened channel-planar
//! (`index = channel·h·w + row·w + col`), every pixel in [0, 1]. File
//! loaders live in the companion `hetfed` crate; this module only owns the
//! in-memory representation.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::fmath;
use crate::numerics::Matrix;
use crate::streams::{self, tag};

// ── Errors ──────────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DatasetError {
    /// A label is outside [0, num_classes).
    LabelOutOfRange,
    /// Feature dimension does not equal height × width × channels.
    FeatureDimMismatch,
    /// A pixel value falls outside [0, 1].
    PixelOutOfRange,
    /// Label count does not match sample count.
    LengthMismatch,
    /// Source image larger than the padding target, or unsupported channel
    /// count.
    UnsupportedShape,
    /// Requested planted-subspace geometry cannot be embedded.
    InfeasibleGeometry,
    /// Datasets being concatenated have differing feature dimensions.
    MixedDimensions,
}

impl core::fmt::Display for DatasetError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Self::LabelOutOfRange => write!(f, "label outside [0, num_classes)"),
            Self::FeatureDimMismatch => {
                write!(f, "feature dimension does not equal height * width * channels")
            }
            Self::PixelOutOfRange => write!(f, "pixel values must lie in [0, 1]"),
            Self::LengthMismatch => write!(f, "label count does not match sample count"),
            Self::UnsupportedShape => write!(f, "unsupported image shape for this operation"),
            Self::InfeasibleGeometry => write!(f, "requested subspace geometry cannot be embedded"),
            Self::MixedDimensions => write!(f, "datasets have differing feature dimensions"),
        }
    }
}

impl core::error::Error for DatasetError {}

// ── DatasetView ─────────────────────────────────────────────────────────

/// An immutable labeled dataset with an optional held-out test split.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetView {
    name: String,
    train_features: Matrix,
    train_labels: Vec<usize>,
    test: Option<(Matrix, Vec<usize>)>,
    num_classes: usize,
    image_shape: (usize, usize, usize),
}

fn validate_split(
    features: &Matrix,
    labels: &[usize],
    num_classes: usize,
    dim: usize,
) -> Result<(), DatasetError> {
    if features.cols() != dim {
        return Err(DatasetError::FeatureDimMismatch);
    }
    if labels.len() != features.rows() {
        return Err(DatasetError::LengthMismatch);
    }
    if labels.iter().any(|&l| l >= num_classes) {
        return Err(DatasetError::LabelOutOfRange);
    }
    if features.as_slice().iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(DatasetError::PixelOutOfRange);
    }
    Ok(())
}

impl DatasetView {
    pub fn new(
        name: String,
        train_features: Matrix,
        train_labels: Vec<usize>,
        test: Option<(Matrix, Vec<usize>)>,
        num_classes: usize,
        image_shape: (usize, usize, usize),
    ) -> Result<Self, DatasetError> {
        let (h, w, c) = image_shape;
        let dim = h * w * c;
        validate_split(&train_features, &train_labels, num_classes, dim)?;
        if let Some((tf, tl)) = &test {
            validate_split(tf, tl, num_classes, dim)?;
        }
        Ok(Self {
            name,
            train_features,
            train_labels,
            test,
            num_classes,
            image_shape,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn train_features(&self) -> &Matrix {
        &self.train_features
    }

    pub fn train_labels(&self) -> &[usize] {
        &self.train_labels
    }

    pub fn test_split(&self) -> Option<(&Matrix, &[usize])> {
        self.test.as_ref().map(|(f, l)| (f, l.as_slice()))
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn image_shape(&self) -> (usize, usize, usize) {
        self.image_shape
    }

    pub fn train_len(&self) -> usize {
        self.train_features.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.train_features.cols()
    }

    /// Training-split indices of one class, ascending.
    pub fn samples_of_class(&self, class: usize) -> Vec<usize> {
        self.train_labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == class)
            .map(|(i, _)| i)
            .collect()
    }

    /// Gathers the given training rows as the columns of a d × n matrix
    /// (the orientation signature building expects).
    pub fn columns_matrix(&self, indices: &[usize]) -> Matrix {
        let d = self.feature_dim();
        let mut out = Matrix::zeros(d, indices.len());
        for (j, &idx) in indices.iter().enumerate() {
            for (i, &v) in self.train_features.row(idx).iter().enumerate() {
                out.set(i, j, v);
            }
        }
        out
    }
}

// ── Common-dimension preprocessing ──────────────────────────────────────

fn pad_features(
    features: &Matrix,
    src: (usize, usize, usize),
    target: (usize, usize, usize),
) -> Matrix {
    let (sh, sw, sc) = src;
    let (th, tw, tc) = target;
    let top = (th - sh) / 2;
    let left = (tw - sw) / 2;
    let mut out = Matrix::zeros(features.rows(), th * tw * tc);
    for s in 0..features.rows() {
        let row = features.row(s);
        for tch in 0..tc {
            // A single source channel replicates into every target channel.
            let sch = if sc == 1 { 0 } else { tch };
            for r in 0..sh {
                for c in 0..sw {
                    let v = row[sch * sh * sw + r * sw + c];
                    out.set(s, tch * th * tw + (top + r) * tw + (left + c), v);
                }
            }
        }
    }
    out
}

/// Center zero-pads images to the target height/width and replicates
/// single-channel inputs across the target's channels. Used to bring
/// grayscale 28×28 or 16×16 datasets up to 32×32×3 before cross-dataset
/// comparison or mixing.
pub fn to_common_dim(
    view: &DatasetView,
    target: (usize, usize, usize),
) -> Result<DatasetView, DatasetError> {
    let (sh, sw, sc) = view.image_shape;
    let (th, tw, tc) = target;
    if sh > th || sw > tw {
        return Err(DatasetError::UnsupportedShape);
    }
    if sc != tc && sc != 1 {
        return Err(DatasetError::UnsupportedShape);
    }
    if view.image_shape == target {
        return Ok(view.clone());
    }
    let train = pad_features(&view.train_features, view.image_shape, target);
    let test = view
        .test
        .as_ref()
        .map(|(f, l)| (pad_features(f, view.image_shape, target), l.clone()));
    DatasetView::new(
        view.name.clone(),
        train,
        view.train_labels.clone(),
        test,
        view.num_classes,
        target,
    )
}

/// Concatenates datasets into one view whose labels are offset by the
/// cumulative class counts of the preceding datasets (four ten-class
/// datasets become one forty-class dataset). Sample order is dataset order;
/// index `offsets()[d] + i` addresses sample `i` of dataset `d`.
pub fn concat_datasets(views: &[DatasetView]) -> Result<DatasetView, DatasetError> {
    if views.is_empty() {
        return Err(DatasetError::MixedDimensions);
    }
    let dim = views[0].feature_dim();
    let shape = views[0].image_shape;
    if views.iter().any(|v| v.feature_dim() != dim || v.image_shape != shape) {
        return Err(DatasetError::MixedDimensions);
    }
    let total: usize = views.iter().map(|v| v.train_len()).sum();
    let mut features = Matrix::zeros(total, dim);
    let mut labels = Vec::with_capacity(total);
    let mut names = Vec::new();
    let mut class_offset = 0;
    let mut row = 0;
    for v in views {
        for s in 0..v.train_len() {
            for (j, &x) in v.train_features.row(s).iter().enumerate() {
                features.set(row, j, x);
            }
            labels.push(class_offset + v.train_labels[s]);
            row += 1;
        }
        class_offset += v.num_classes;
        names.push(v.name.clone());
    }
    DatasetView::new(
        format!("mix({})", names.join("+")),
        features,
        labels,
        None,
        class_offset,
        shape,
    )
}

/// Starting row of each dataset inside [`concat_datasets`]' output.
pub fn concat_offsets(views: &[DatasetView]) -> Vec<usize> {
    let mut out = Vec::with_capacity(views.len());
    let mut acc = 0;
    for v in views {
        out.push(acc);
        acc += v.train_len();
    }
    out
}

// ── Synthetic planted-subspace generator ────────────────────────────────

/// A synthetic dataset together with its planted class-to-cluster ground
/// truth.
#[derive(Debug, Clone)]
pub struct PlantedDataset {
    pub view: DatasetView,
    /// cluster index of each class label.
    pub cluster_of_class: Vec<usize>,
}

/// Generates a dataset whose classes span planted 2-dimensional subspaces:
/// classes within a cluster sit at principal angle ≈ `within_angle` from
/// each other, classes across clusters at ≈ `across_angle` (both in
/// degrees). Samples are non-negative subspace draws plus uniform noise of
/// amplitude `noise`, scaled into [0, 1].
///
/// The construction embeds, per class, an orthonormal 2-frame
/// `v_i = cos β (cos α e_i + sin α g_i) + sin β h_i` over disjoint
/// coordinate blocks, with α and β solving `cos²α = cos(across)` and
/// `cos²β = cos(within)`; the cross-Gram of two frames is then diagonal with
/// the desired cosines.
#[allow(clippy::too_many_arguments)]
pub fn synth_superclusters(
    num_clusters: usize,
    classes_per_cluster: usize,
    samples_per_class: usize,
    ambient_dim: usize,
    within_angle: f64,
    across_angle: f64,
    noise: f64,
    seed: u64,
) -> Result<PlantedDataset, DatasetError> {
    let (k_n, l_n, s_n) = (num_clusters, classes_per_cluster, samples_per_class);
    if k_n == 0 || l_n == 0 || s_n == 0 {
        return Err(DatasetError::InfeasibleGeometry);
    }
    if !(0.0..=90.0).contains(&within_angle)
        || !(0.0..=90.0).contains(&across_angle)
        || across_angle <= within_angle
        || noise < 0.0
    {
        return Err(DatasetError::InfeasibleGeometry);
    }
    // Coordinate budget: 2 shared + 2 per cluster + 2 per class.
    let needed = 2 + 2 * k_n + 2 * k_n * l_n;
    if ambient_dim < needed {
        return Err(DatasetError::InfeasibleGeometry);
    }

    let alpha = fmath::acos(fmath::sqrt(fmath::cos(fmath::to_radians(across_angle))));
    let beta = fmath::acos(fmath::sqrt(fmath::cos(fmath::to_radians(within_angle))));
    let (ca, sa) = (fmath::cos(alpha), fmath::sin(alpha));
    let (cb, sb) = (fmath::cos(beta), fmath::sin(beta));

    let num_classes = k_n * l_n;
    let total = num_classes * s_n;
    let mut features = Matrix::zeros(total, ambient_dim);
    let mut labels = Vec::with_capacity(total);
    let mut rng = streams::derive_rng(seed, &[tag::SYNTH]);
    let scale = 1.0 / (1.0 + noise);

    let mut row = 0;
    for k in 0..k_n {
        for l in 0..l_n {
            let class = k * l_n + l;
            // Frame vector i touches coordinates e_i, g_{k,i}, h_{class,i}.
            let coords = |i: usize| {
                (
                    i,
                    2 + 2 * k + i,
                    2 + 2 * k_n + 2 * class + i,
                )
            };
            for _ in 0..s_n {
                let a0: f64 = rng.gen_range(0.25..1.0);
                let a1: f64 = rng.gen_range(0.25..1.0);
                let mut x = vec![0.0; ambient_dim];
                for (amp, i) in [(a0, 0usize), (a1, 1usize)] {
                    let (e, g, h) = coords(i);
                    x[e] += amp * cb * ca;
                    x[g] += amp * cb * sa;
                    x[h] += amp * sb;
                }
                if noise > 0.0 {
                    for t in x.iter_mut() {
                        *t += rng.gen_range(0.0..noise);
                    }
                }
                for (j, &v) in x.iter().enumerate() {
                    features.set(row, j, v * scale);
                }
                labels.push(class);
                row += 1;
            }
        }
    }

    let view = DatasetView::new(
        format!("synth(k={k_n},l={l_n})"),
        features,
        labels,
        None,
        num_classes,
        (1, ambient_dim, 1),
    )?;
    let cluster_of_class = (0..num_classes).map(|c| c / l_n).collect();
    Ok(PlantedDataset {
        view,
        cluster_of_class,
    })
}

// ── Tests ───────────────────────────────────────────────────────────────

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{principal_angles, truncated_svd};
    use alloc::string::ToString;

    fn tiny_view() -> DatasetView {
        let f = Matrix::new(3, 4, vec![0.0, 0.1, 0.2, 0.3, 1.0, 0.9, 0.8, 0.7, 0.5, 0.5, 0.5, 0.5])
            .unwrap();
        DatasetView::new("tiny".to_string(), f, vec![0, 1, 0], None, 2, (2, 2, 1)).unwrap()
    }

    #[test]
    fn view_validation() {
        let f = Matrix::new(1, 4, vec![0.0, 0.1, 0.2, 0.3]).unwrap();
        assert_eq!(
            DatasetView::new("x".to_string(), f.clone(), vec![2], None, 2, (2, 2, 1)).unwrap_err(),
            DatasetError::LabelOutOfRange
        );
        assert_eq!(
            DatasetView::new("x".to_string(), f.clone(), vec![0], None, 2, (3, 2, 1)).unwrap_err(),
            DatasetError::FeatureDimMismatch
        );
        assert_eq!(
            DatasetView::new("x".to_string(), f, vec![0, 1], None, 2, (2, 2, 1)).unwrap_err(),
            DatasetError::LengthMismatch
        );
        let over = Matrix::new(1, 4, vec![0.0, 0.1, 1.2, 0.3]).unwrap();
        assert_eq!(
            DatasetView::new("x".to_string(), over, vec![0], None, 2, (2, 2, 1)).unwrap_err(),
            DatasetError::PixelOutOfRange
        );
    }

    #[test]
    fn samples_of_class_ascending() {
        let v = tiny_view();
        assert_eq!(v.samples_of_class(0), vec![0, 2]);
        assert_eq!(v.samples_of_class(1), vec![1]);
    }

    #[test]
    fn columns_matrix_transposes_rows() {
        let v = tiny_view();
        let m = v.columns_matrix(&[1, 2]);
        assert_eq!(m.rows(), 4);
        assert_eq!(m.cols(), 2);
        assert_eq!(m.get(0, 0), 1.0);
        assert_eq!(m.get(3, 1), 0.5);
    }

    #[test]
    fn common_dim_pads_and_replicates() {
        // 2×2 grayscale into 4×4×3: centered with a 1-pixel border.
        let f = Matrix::new(1, 4, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let v = DatasetView::new("g".to_string(), f, vec![0], None, 1, (2, 2, 1)).unwrap();
        let out = to_common_dim(&v, (4, 4, 3)).unwrap();
        assert_eq!(out.feature_dim(), 48);
        let row = out.train_features().row(0);
        for ch in 0..3 {
            let plane = &row[ch * 16..(ch + 1) * 16];
            assert_eq!(plane[5], 0.1);
            assert_eq!(plane[6], 0.2);
            assert_eq!(plane[9], 0.3);
            assert_eq!(plane[10], 0.4);
            for (i, &v) in plane.iter().enumerate() {
                if ![5, 6, 9, 10].contains(&i) {
                    assert_eq!(v, 0.0, "padding adds zeros only (index {i})");
                }
            }
        }
        // Per-sample L2 norm grows by exactly √3 under channel replication.
        let src_norm = (0.01f64 + 0.04 + 0.09 + 0.16).sqrt();
        let out_norm = (row.iter().map(|v| v * v).sum::<f64>()).sqrt();
        assert!((out_norm - src_norm * 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn common_dim_identity_and_errors() {
        let v = tiny_view();
        let same = to_common_dim(&v, (2, 2, 1)).unwrap();
        assert_eq!(&same, &v);
        assert_eq!(
            to_common_dim(&v, (1, 1, 1)).unwrap_err(),
            DatasetError::UnsupportedShape
        );
        let rgb = DatasetView::new(
            "rgb".to_string(),
            Matrix::new(1, 12, vec![0.5; 12]).unwrap(),
            vec![0],
            None,
            1,
            (2, 2, 3),
        )
        .unwrap();
        assert_eq!(
            to_common_dim(&rgb, (4, 4, 1)).unwrap_err(),
            DatasetError::UnsupportedShape
        );
    }

    #[test]
    fn concat_offsets_labels() {
        let a = tiny_view();
        let b = tiny_view();
        let mixed = concat_datasets(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(mixed.train_len(), 6);
        assert_eq!(mixed.num_classes(), 4);
        assert_eq!(mixed.train_labels(), &[0, 1, 0, 2, 3, 2]);
        assert_eq!(concat_offsets(&[a, b]), vec![0, 3]);
    }

    fn class_basis(view: &DatasetView, class: usize) -> crate::numerics::OrthonormalBasis {
        let m = view.columns_matrix(&view.samples_of_class(class));
        truncated_svd(&m, 2).unwrap().left_basis
    }

    #[test]
    fn synth_within_zero_collapses_cluster() {
        let d = synth_superclusters(2, 3, 20, 32, 0.0, 60.0, 0.0, 9).unwrap();
        // Classes 0..2 share cluster 0; with within = 0 their subspaces
        // coincide.
        let b0 = class_basis(&d.view, 0);
        let b1 = class_basis(&d.view, 1);
        let angles = principal_angles(&b0, &b1).unwrap();
        assert!(angles[1] < 1e-5, "within-cluster angle ≈ 0: {angles:?}");
        assert_eq!(d.cluster_of_class, vec![0, 0, 0, 1, 1, 1]);
    }

    #[test]
    fn synth_across_ninety_orthogonal() {
        let d = synth_superclusters(2, 2, 30, 24, 10.0, 90.0, 1e-3, 4).unwrap();
        let b0 = class_basis(&d.view, 0);
        let b2 = class_basis(&d.view, 2);
        let angles = principal_angles(&b0, &b2).unwrap();
        assert!(
            angles[0] > 89.0,
            "cross-cluster angle near 90°: {angles:?}"
        );
    }

    #[test]
    fn synth_planted_angles_respected() {
        let d = synth_superclusters(2, 2, 40, 24, 20.0, 70.0, 0.0, 11).unwrap();
        let within = principal_angles(&class_basis(&d.view, 0), &class_basis(&d.view, 1)).unwrap();
        let across = principal_angles(&class_basis(&d.view, 0), &class_basis(&d.view, 3)).unwrap();
        assert!((within[0] - 20.0).abs() < 1.0, "within: {within:?}");
        assert!(across[0] > 65.0, "across: {across:?}");
    }

    #[test]
    fn synth_validates_geometry() {
        assert_eq!(
            synth_superclusters(2, 2, 5, 4, 10.0, 80.0, 0.0, 1).unwrap_err(),
            DatasetError::InfeasibleGeometry
        );
        assert_eq!(
            synth_superclusters(2, 2, 5, 64, 50.0, 30.0, 0.0, 1).unwrap_err(),
            DatasetError::InfeasibleGeometry
        );
    }

    #[test]
    fn synth_deterministic() {
        let a = synth_superclusters(2, 3, 10, 32, 15.0, 75.0, 0.01, 42).unwrap();
        let b = synth_superclusters(2, 3, 10, 32, 15.0, 75.0, 0.01, 42).unwrap();
        assert_eq!(a.view, b.view);
    }
}
