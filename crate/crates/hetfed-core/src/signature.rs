//! Subspace signatures and proximity matrices.
//!
//! A signature is the rank-p left singular basis of a subject's samples
//! (one class, one whole dataset, or one client's shard), with samples laid
//! out as columns. Two proximity measures compare signatures: the smallest
//! principal angle between the spanned subspaces, and the sum of angles
//! between corresponding basis vectors. Both are reported in degrees.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::fmath;
use crate::numerics::{principal_angles, truncated_svd, Matrix, NumericsError, OrthonormalBasis};

// ── Errors ──────────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq)]
pub enum SignatureError {
    /// Subject has fewer samples than the requested rank.
    TooFewSamples { subject: String, have: usize, need: usize },
    /// Signatures being compared differ in ambient dimension or rank.
    MismatchedSignatures,
    /// Proximity entries are not a symmetric matrix with zero diagonal.
    MalformedProximity,
    /// Client proximity supports the two angle measures only.
    UnsupportedMeasure,
    Numerics(NumericsError),
}

impl From<NumericsError> for SignatureError {
    fn from(e: NumericsError) -> Self {
        Self::Numerics(e)
    }
}

impl core::fmt::Display for SignatureError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Self::TooFewSamples { subject, have, need } => {
                write!(f, "subject {subject} has {have} samples, needs at least {need}")
            }
            Self::MismatchedSignatures => {
                write!(f, "signatures differ in ambient dimension or rank")
            }
            Self::MalformedProximity => {
                write!(f, "proximity entries must be symmetric with zero diagonal")
            }
            Self::UnsupportedMeasure => {
                write!(f, "client proximity supports only the angle measures")
            }
            Self::Numerics(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for SignatureError {}

// ── Types ───────────────────────────────────────────────────────────────

/// The rank-p orthonormal basis summarizing one subject's samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Signature {
    pub subject_id: String,
    pub basis: OrthonormalBasis,
    pub sample_count: usize,
    pub p: usize,
}

/// Which comparison produced a [`ProximityMatrix`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProximityMeasure {
    /// Smallest principal angle, degrees in [0, 90].
    Eq2,
    /// Sum of angles between corresponding basis vectors, degrees in
    /// [0, 90·p].
    Eq3,
    /// Earth mover's distance between label distributions.
    Emd,
    /// 1 − linear CKA similarity.
    CkaDistance,
}

impl ProximityMeasure {
    pub fn tag(&self) -> &'static str {
        match self {
            Self::Eq2 => "EQ2",
            Self::Eq3 => "EQ3",
            Self::Emd => "EMD",
            Self::CkaDistance => "CKA-DISTANCE",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "EQ2" => Some(Self::Eq2),
            "EQ3" => Some(Self::Eq3),
            "EMD" => Some(Self::Emd),
            "CKA-DISTANCE" => Some(Self::CkaDistance),
            _ => None,
        }
    }
}

/// Symmetric pairwise distances between named subjects.
#[derive(Debug, Clone, PartialEq)]
pub struct ProximityMatrix {
    subjects: Vec<String>,
    entries: Matrix,
    measure: ProximityMeasure,
}

impl ProximityMatrix {
    pub fn new(
        subjects: Vec<String>,
        entries: Matrix,
        measure: ProximityMeasure,
    ) -> Result<Self, SignatureError> {
        let n = subjects.len();
        if entries.rows() != n || entries.cols() != n {
            return Err(SignatureError::MalformedProximity);
        }
        for i in 0..n {
            if entries.get(i, i) != 0.0 {
                return Err(SignatureError::MalformedProximity);
            }
            for j in 0..i {
                if (entries.get(i, j) - entries.get(j, i)).abs() > 1e-9 {
                    return Err(SignatureError::MalformedProximity);
                }
            }
        }
        Ok(Self { subjects, entries, measure })
    }

    pub fn subjects(&self) -> &[String] {
        &self.subjects
    }

    pub fn entries(&self) -> &Matrix {
        &self.entries
    }

    pub fn measure(&self) -> ProximityMeasure {
        self.measure
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries.get(i, j)
    }

    /// Mean of the strict upper triangle; 0 for a single subject.
    pub fn mean_off_diagonal(&self) -> f64 {
        let n = self.subjects.len();
        if n < 2 {
            return 0.0;
        }
        let mut sum = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                sum += self.entries.get(i, j);
            }
        }
        sum / (n * (n - 1) / 2) as f64
    }
}

// ── Signature construction ──────────────────────────────────────────────

/// Builds the rank-p signature of samples laid out as the columns of
/// `samples`. Columns are used as-is (no mean centering); positive
/// rescaling of the samples therefore leaves the signature unchanged.
pub fn build_signature(
    samples: &Matrix,
    subject_id: &str,
    p: usize,
) -> Result<Signature, SignatureError> {
    if samples.cols() < p {
        return Err(SignatureError::TooFewSamples {
            subject: subject_id.to_string(),
            have: samples.cols(),
            need: p,
        });
    }
    let svd = truncated_svd(samples, p)?;
    Ok(Signature {
        subject_id: subject_id.to_string(),
        basis: svd.left_basis,
        sample_count: samples.cols(),
        p,
    })
}

// ── Proximity builders ──────────────────────────────────────────────────

fn check_signatures(sigs: &[Signature]) -> Result<(), SignatureError> {
    if let Some(first) = sigs.first() {
        let (dim, p) = (first.basis.ambient_dim(), first.p);
        if sigs.iter().any(|s| s.basis.ambient_dim() != dim || s.p != p) {
            return Err(SignatureError::MismatchedSignatures);
        }
    }
    Ok(())
}

fn assemble<F>(
    sigs: &[Signature],
    measure: ProximityMeasure,
    mut pairwise: F,
) -> Result<ProximityMatrix, SignatureError>
where
    F: FnMut(&Signature, &Signature) -> Result<f64, SignatureError>,
{
    check_signatures(sigs)?;
    let n = sigs.len();
    let mut entries = Matrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let d = pairwise(&sigs[i], &sigs[j])?;
            entries.set(i, j, d);
            entries.set(j, i, d);
        }
    }
    let subjects = sigs.iter().map(|s| s.subject_id.clone()).collect();
    ProximityMatrix::new(subjects, entries, measure)
}

/// Smallest principal angle between each pair of signature subspaces,
/// degrees.
pub fn proximity_eq2(sigs: &[Signature]) -> Result<ProximityMatrix, SignatureError> {
    assemble(sigs, ProximityMeasure::Eq2, |a, b| {
        Ok(principal_angles(&a.basis, &b.basis)?[0])
    })
}

fn eq3_angle(a: &Signature, b: &Signature) -> f64 {
    let mut sum = 0.0;
    for k in 0..a.p {
        let mut dot = 0.0;
        let u = a.basis.column(k);
        let w = b.basis.column(k);
        for (x, y) in u.iter().zip(w.iter()) {
            dot += x * y;
        }
        sum += fmath::to_degrees(fmath::acos(fmath::abs(dot).min(1.0)));
    }
    sum
}

/// Sum of angles between corresponding basis vectors (first with first,
/// second with second, ...), degrees. The absolute value of each dot
/// product keeps every summand in [0°, 90°].
pub fn proximity_eq3(sigs: &[Signature]) -> Result<ProximityMatrix, SignatureError> {
    assemble(sigs, ProximityMeasure::Eq3, |a, b| Ok(eq3_angle(a, b)))
}

// ── Dataset-level comparison ────────────────────────────────────────────

use crate::dataset::DatasetView;

fn dataset_signature(d: &DatasetView, p: usize) -> Result<Signature, SignatureError> {
    let all: Vec<usize> = (0..d.train_len()).collect();
    build_signature(&d.columns_matrix(&all), d.name(), p)
}

/// Pools every training sample of each dataset into one signature and
/// returns (smallest-principal-angle, correspondence-sum) in degrees.
/// Both datasets must already share the common preprocessed dimension.
pub fn compare_datasets(
    a: &DatasetView,
    b: &DatasetView,
    p: usize,
) -> Result<(f64, f64), SignatureError> {
    if a.feature_dim() != b.feature_dim() {
        return Err(SignatureError::MismatchedSignatures);
    }
    let sa = dataset_signature(a, p)?;
    let sb = dataset_signature(b, p)?;
    let eq2 = principal_angles(&sa.basis, &sb.basis)?[0];
    Ok((eq2, eq3_angle(&sa, &sb)))
}

/// Builds one signature per client of `partition` from its local samples
/// (subject ids are the client indices) and compares them with the chosen
/// measure. A client owning fewer than `p` samples is reported by id.
pub fn client_proximity(
    partition: &crate::partition::Partition,
    dataset: &DatasetView,
    p: usize,
    measure: ProximityMeasure,
) -> Result<ProximityMatrix, SignatureError> {
    let mut sigs = Vec::with_capacity(partition.num_clients());
    for (client, indices) in partition.client_indices.iter().enumerate() {
        let samples = dataset.columns_matrix(indices);
        sigs.push(build_signature(&samples, &client.to_string(), p)?);
    }
    match measure {
        ProximityMeasure::Eq2 => proximity_eq2(&sigs),
        ProximityMeasure::Eq3 => proximity_eq3(&sigs),
        _ => Err(SignatureError::UnsupportedMeasure),
    }
}

/// Builds one signature per class of `dataset` from its training samples.
pub fn class_signatures(
    dataset: &DatasetView,
    p: usize,
) -> Result<Vec<Signature>, SignatureError> {
    let mut out = Vec::with_capacity(dataset.num_classes());
    for c in 0..dataset.num_classes() {
        let idx = dataset.samples_of_class(c);
        let samples = dataset.columns_matrix(&idx);
        out.push(build_signature(&samples, &c.to_string(), p)?);
    }
    Ok(out)
}

// ── Tests ───────────────────────────────────────────────────────────────
