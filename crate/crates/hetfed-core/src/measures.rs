//! Alternative heterogeneity measures: exact earth mover's distance between
//! label distributions, linear centered kernel alignment, and the average
//! pairwise client distance summaries built from them.
//!
//! The EMD solver is a transportation simplex (network simplex specialized
//! to dense bipartite transport): northwest-corner start, dual-based entering
//! checks with Bland's rule, so it terminates even on degenerate bases. At
//! label-distribution sizes (≤ a few hundred classes) exactness is cheap.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::dataset::DatasetView;
use crate::flsim::{model_logits, Architecture, ModelParams};
use crate::numerics::Matrix;
use crate::partition::Partition;
use crate::signature::{
    build_signature, client_proximity, proximity_eq2, ProximityMatrix, ProximityMeasure,
    Signature, SignatureError,
};
use crate::streams::{self, tag};

// ── Errors ──────────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq)]
pub enum MeasureError {
    /// Distribution is empty, has negative mass, or does not sum to 1.
    BadDistribution,
    /// Distributions (or ground metric) differ in support size.
    SupportMismatch,
    /// Ground metric has negative, asymmetric, or non-zero-diagonal costs.
    BadGroundMetric,
    /// Input has zero variance after centering.
    DegenerateInput,
    /// Pairwise summaries need at least two clients.
    TooFewClients,
    /// A client has too few samples for the requested measure.
    ClientTooSmall { client: usize },
    /// The transport solver exceeded its iteration cap.
    SolverStalled,
    /// Model list is empty, architectures differ, or the probe does not
    /// match the models' input dimension.
    ArchitectureMismatch,
    Signature(SignatureError),
}

impl From<SignatureError> for MeasureError {
    fn from(e: SignatureError) -> Self {
        Self::Signature(e)
    }
}

impl core::fmt::Display for MeasureError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Self::BadDistribution => write!(f, "probabilities must be non-negative and sum to 1"),
            Self::SupportMismatch => write!(f, "support sizes differ"),
            Self::BadGroundMetric => {
                write!(f, "ground costs must be non-negative, symmetric, zero-diagonal")
            }
            Self::DegenerateInput => write!(f, "input has zero variance"),
            Self::TooFewClients => write!(f, "need at least two clients"),
            Self::ClientTooSmall { client } => {
                write!(f, "client {client} has too few samples for this measure")
            }
            Self::SolverStalled => write!(f, "transport solver exceeded its iteration cap"),
            Self::ArchitectureMismatch => {
                write!(f, "models must be non-empty, share one architecture, and fit the probe")
            }
            Self::Signature(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for MeasureError {}

// ── Label distributions and ground metrics ──────────────────────────────

/// A normalized distribution over class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelDistribution {
    probabilities: Vec<f64>,
}

impl LabelDistribution {
    pub fn new(probabilities: Vec<f64>) -> Result<Self, MeasureError> {
        if probabilities.is_empty() || probabilities.iter().any(|&p| !(p >= 0.0) || !p.is_finite())
        {
            return Err(MeasureError::BadDistribution);
        }
        let sum: f64 = probabilities.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(MeasureError::BadDistribution);
        }
        Ok(Self { probabilities })
    }

    pub fn from_counts(counts: &[usize]) -> Result<Self, MeasureError> {
        let total: usize = counts.iter().sum();
        if counts.is_empty() || total == 0 {
            return Err(MeasureError::BadDistribution);
        }
        Ok(Self {
            probabilities: counts.iter().map(|&c| c as f64 / total as f64).collect(),
        })
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn support_size(&self) -> usize {
        self.probabilities.len()
    }
}

/// Per-class transport costs.
#[derive(Debug, Clone, PartialEq)]
pub enum GroundMetric {
    /// Cost 1 between distinct classes, 0 on the diagonal.
    Discrete,
    /// Explicit symmetric zero-diagonal non-negative costs, typically the
    /// smallest-principal-angle class proximity normalized by 90°.
    Angle(Matrix),
}

impl GroundMetric {
    pub fn angle(costs: Matrix) -> Result<Self, MeasureError> {
        let n = costs.rows();
        if costs.cols() != n || n == 0 {
            return Err(MeasureError::BadGroundMetric);
        }
        for i in 0..n {
            if costs.get(i, i) != 0.0 {
                return Err(MeasureError::BadGroundMetric);
            }
            for j in 0..n {
                let c = costs.get(i, j);
                if !(c >= 0.0) || !c.is_finite() || (c - costs.get(j, i)).abs() > 1e-9 {
                    return Err(MeasureError::BadGroundMetric);
                }
            }
        }
        Ok(Self::Angle(costs))
    }

    /// Angle costs from a smallest-principal-angle class proximity matrix,
    /// normalized by 90° into [0, 1].
    pub fn from_class_proximity(
        proximity: &crate::signature::ProximityMatrix,
    ) -> Result<Self, MeasureError> {
        let n = proximity.len();
        let scaled = Matrix::from_fn(n, n, |i, j| proximity.get(i, j) / 90.0);
        Self::angle(scaled)
    }

    fn cost(&self, i: usize, j: usize) -> f64 {
        match self {
            Self::Discrete => f64::from(u8::from(i != j)),
            Self::Angle(m) => m.get(i, j),
        }
    }

    fn support(&self) -> Option<usize> {
        match self {
            Self::Discrete => None,
            Self::Angle(m) => Some(m.rows()),
        }
    }
}

// ── Earth mover's distance ──────────────────────────────────────────────

const EMD_ITERATION_CAP: usize = 100_000;
const REDUCED_COST_TOL: f64 = 1e-12;

struct TransportTableau {
    n: usize,
    flow: Vec<f64>,
    in_basis: Vec<bool>,
}

impl TransportTableau {
    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.n + j
    }

    /// Northwest-corner start: always advances exactly one index per cell,
    /// yielding the 2n − 1 basic cells (some degenerate) the simplex needs.
    fn northwest_corner(p: &[f64], q: &[f64]) -> Self {
        let n = p.len();
        let mut t = Self {
            n,
            flow: vec![0.0; n * n],
            in_basis: vec![false; n * n],
        };
        let mut a = p.to_vec();
        let mut b = q.to_vec();
        let (mut i, mut j) = (0usize, 0usize);
        loop {
            let f = a[i].min(b[j]);
            let cell = t.idx(i, j);
            t.flow[cell] = f;
            t.in_basis[cell] = true;
            a[i] -= f;
            b[j] -= f;
            if i == n - 1 && j == n - 1 {
                break;
            }
            if i < n - 1 && (a[i] <= b[j] || j == n - 1) {
                i += 1;
            } else {
                j += 1;
            }
        }
        t
    }

    /// Solves u_i + v_j = cost(i, j) over the basis tree with u_0 = 0.
    fn duals(&self, ground: &GroundMetric) -> (Vec<f64>, Vec<f64>) {
        let n = self.n;
        let mut u = vec![f64::NAN; n];
        let mut v = vec![f64::NAN; n];
        u[0] = 0.0;
        // The basis is a spanning tree, so repeated sweeps settle every
        // dual in at most n rounds.
        for _ in 0..2 * n {
            let mut changed = false;
            for i in 0..n {
                for j in 0..n {
                    if !self.in_basis[self.idx(i, j)] {
                        continue;
                    }
                    match (u[i].is_nan(), v[j].is_nan()) {
                        (false, true) => {
                            v[j] = ground.cost(i, j) - u[i];
                            changed = true;
                        }
                        (true, false) => {
                            u[i] = ground.cost(i, j) - v[j];
                            changed = true;
                        }
                        _ => {}
                    }
                }
            }
            if !changed {
                break;
            }
        }
        (u, v)
    }

    /// Unique alternating cycle created by adding `(ei, ej)` to the basis
    /// tree, as (row, col, is_plus) triples starting from the entering cell.
    /// Found as the tree path from row node `ei` to column node `ej`.
    fn pivot_cycle(&self, ei: usize, ej: usize) -> Vec<(usize, usize, bool)> {
        let n = self.n;
        // Nodes 0..n are rows, n..2n are columns; basic cells are edges.
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); 2 * n];
        for i in 0..n {
            for j in 0..n {
                if self.in_basis[self.idx(i, j)] {
                    adj[i].push(n + j);
                    adj[n + j].push(i);
                }
            }
        }
        let mut prev = vec![usize::MAX; 2 * n];
        let mut visited = vec![false; 2 * n];
        visited[ei] = true;
        let mut queue = alloc::collections::VecDeque::new();
        queue.push_back(ei);
        while let Some(node) = queue.pop_front() {
            if node == n + ej {
                break;
            }
            for &next in &adj[node] {
                if !visited[next] {
                    visited[next] = true;
                    prev[next] = node;
                    queue.push_back(next);
                }
            }
        }
        let mut path = Vec::new();
        let mut cur = n + ej;
        while cur != usize::MAX {
            path.push(cur);
            cur = prev[cur];
        }
        path.reverse();
        debug_assert_eq!(path.first(), Some(&ei), "basis tree must connect the entering cell");

        let mut cycle = vec![(ei, ej, true)];
        for (k, w) in path.windows(2).enumerate() {
            let (i, j) = if w[0] < n { (w[0], w[1] - n) } else { (w[1], w[0] - n) };
            // The first path cell shares the entering row, so signs
            // alternate minus, plus, minus, ... along the path.
            cycle.push((i, j, k % 2 == 1));
        }
        cycle
    }
}

/// Exact optimal-transport cost between two label distributions. The
/// discrete ground reduces to total variation, which the solver reproduces;
/// angle grounds price moves between close classes more cheaply.
pub fn emd(
    p: &LabelDistribution,
    q: &LabelDistribution,
    ground: &GroundMetric,
) -> Result<f64, MeasureError> {
    let n = p.support_size();
    if q.support_size() != n {
        return Err(MeasureError::SupportMismatch);
    }
    if let Some(g) = ground.support() {
        if g != n {
            return Err(MeasureError::SupportMismatch);
        }
    }
    if n == 1 {
        return Ok(0.0);
    }

    let mut t = TransportTableau::northwest_corner(p.probabilities(), q.probabilities());
    for _ in 0..EMD_ITERATION_CAP {
        let (u, v) = t.duals(ground);
        // Entering cell by Bland's rule: the first (row-major) nonbasic
        // cell with negative reduced cost. This guarantees termination
        // under degeneracy.
        let mut entering = None;
        'scan: for i in 0..n {
            for j in 0..n {
                if t.in_basis[t.idx(i, j)] {
                    continue;
                }
                if ground.cost(i, j) - u[i] - v[j] < -REDUCED_COST_TOL {
                    entering = Some((i, j));
                    break 'scan;
                }
            }
        }
        let Some((ei, ej)) = entering else {
            let mut total = 0.0;
            for i in 0..n {
                for j in 0..n {
                    total += t.flow[t.idx(i, j)] * ground.cost(i, j);
                }
            }
            return Ok(total);
        };

        let cycle = t.pivot_cycle(ei, ej);
        // Leaving cell: minimum flow among the minus positions, ties to
        // the lexicographically smallest cell.
        let mut theta = f64::INFINITY;
        let mut leaving = (usize::MAX, usize::MAX);
        for &(i, j, plus) in &cycle {
            if plus {
                continue;
            }
            let f = t.flow[t.idx(i, j)];
            if f < theta || (f == theta && (i, j) < leaving) {
                theta = f;
                leaving = (i, j);
            }
        }
        for &(i, j, plus) in &cycle {
            let cell = t.idx(i, j);
            if plus {
                t.flow[cell] += theta;
            } else {
                t.flow[cell] -= theta;
            }
        }
        let leave_cell = t.idx(leaving.0, leaving.1);
        let enter_cell = t.idx(ei, ej);
        t.flow[leave_cell] = 0.0;
        t.in_basis[leave_cell] = false;
        t.in_basis[enter_cell] = true;
    }
    Err(MeasureError::SolverStalled)
}

// ── Linear CKA ──────────────────────────────────────────────────────────

fn center_columns(x: &Matrix) -> Matrix {
    let (n, d) = (x.rows(), x.cols());
    let mut means = vec![0.0; d];
    for i in 0..n {
        for (j, m) in means.iter_mut().enumerate() {
            *m += x.get(i, j);
        }
    }
    for m in means.iter_mut() {
        *m /= n as f64;
    }
    Matrix::from_fn(n, d, |i, j| x.get(i, j) - means[j])
}

/// Linear centered kernel alignment between two feature matrices with one
/// sample per row: ‖YᵀX‖_F² / (‖XᵀX‖_F · ‖YᵀY‖_F) after column centering.
/// 1 means identical up to orthogonal transform and scale, 0 means
/// uncorrelated.
pub fn linear_cka(x: &Matrix, y: &Matrix) -> Result<f64, MeasureError> {
    if x.rows() != y.rows() || x.rows() < 2 {
        return Err(MeasureError::SupportMismatch);
    }
    let xc = center_columns(x);
    let yc = center_columns(y);
    let n = x.rows();
    // Both routes compute the same alignment; the Gram route is cheaper
    // when samples are fewer than features.
    let (cross, x_norm, y_norm) = if n < x.cols().max(y.cols()) {
        let kx = xc.gram_rows();
        let ky = yc.gram_rows();
        let mut cross = 0.0;
        let mut xn = 0.0;
        let mut yn = 0.0;
        for i in 0..n {
            for j in 0..n {
                cross += kx.get(i, j) * ky.get(i, j);
                xn += kx.get(i, j) * kx.get(i, j);
                yn += ky.get(i, j) * ky.get(i, j);
            }
        }
        (cross, crate::fmath::sqrt(xn), crate::fmath::sqrt(yn))
    } else {
        let yx = yc.t_mul(&xc).expect("row counts checked");
        let cross = yx.frobenius_norm();
        let xx = xc.t_mul(&xc).expect("square");
        let yy = yc.t_mul(&yc).expect("square");
        (cross * cross, xx.frobenius_norm(), yy.frobenius_norm())
    };
    // Centering a constant matrix leaves rounding residue of order
    // ε·‖X‖, so zero variance is judged relative to the uncentered scale.
    let x_scale = x.frobenius_norm();
    let y_scale = y.frobenius_norm();
    if x_norm <= 1e-20 * x_scale * x_scale || y_norm <= 1e-20 * y_scale * y_scale {
        return Err(MeasureError::DegenerateInput);
    }
    Ok((cross / (x_norm * y_norm)).clamp(0.0, 1.0))
}

// ── Average pairwise client distance ────────────────────────────────────

/// Which per-client measure to average over all unordered client pairs.
#[derive(Debug, Clone, PartialEq)]
pub enum ClientDistanceMeasure {
    /// Earth mover's distance between label histograms.
    Emd(GroundMetric),
    /// Smallest principal angle between client signatures, normalized by
    /// 90° into [0, 1].
    Eq2 { p: usize },
    /// Correspondence-angle sum between client signatures, normalized by
    /// 90°·p into [0, 1].
    Eq3 { p: usize },
    /// Linear CKA similarity on raw samples (higher = more alike), with
    /// every client subsampled to the smallest client size.
    Cka,
}

/// Mean pairwise distance (or CKA similarity) across all client pairs of a
/// partition. Angle measures are normalized into [0, 1]; CKA is reported as
/// a similarity, so heterogeneous partitions score lower.
pub fn avg_pairwise_client_distance(
    partition: &Partition,
    dataset: &DatasetView,
    measure: &ClientDistanceMeasure,
) -> Result<f64, MeasureError> {
    let k = partition.num_clients();
    if k < 2 {
        return Err(MeasureError::TooFewClients);
    }
    match measure {
        ClientDistanceMeasure::Emd(ground) => {
            let dists: Vec<LabelDistribution> = partition
                .label_histograms
                .iter()
                .enumerate()
                .map(|(c, h)| {
                    LabelDistribution::from_counts(h)
                        .map_err(|_| MeasureError::ClientTooSmall { client: c })
                })
                .collect::<Result<_, _>>()?;
            let mut sum = 0.0;
            for i in 0..k {
                for j in (i + 1)..k {
                    sum += emd(&dists[i], &dists[j], ground)?;
                }
            }
            Ok(sum / (k * (k - 1) / 2) as f64)
        }
        ClientDistanceMeasure::Eq2 { p } => {
            let m = client_proximity(partition, dataset, *p, ProximityMeasure::Eq2)?;
            Ok(m.mean_off_diagonal() / 90.0)
        }
        ClientDistanceMeasure::Eq3 { p } => {
            let m = client_proximity(partition, dataset, *p, ProximityMeasure::Eq3)?;
            Ok(m.mean_off_diagonal() / (90.0 * *p as f64))
        }
        ClientDistanceMeasure::Cka => {
            let common = partition
                .client_indices
                .iter()
                .map(Vec::len)
                .min()
                .expect("k >= 2");
            if common < 2 {
                let c = partition
                    .client_indices
                    .iter()
                    .position(|v| v.len() < 2)
                    .unwrap();
                return Err(MeasureError::ClientTooSmall { client: c });
            }
            if common < dataset.feature_dim() {
                // Gram route with one centered Gram per client, the same
                // arithmetic linear_cka would run per pair; caching it
                // keeps the quadratic pair loop off the feature dimension.
                let mut grams: Vec<Matrix> = Vec::with_capacity(k);
                let mut norms: Vec<f64> = Vec::with_capacity(k);
                for (c, idxs) in partition.client_indices.iter().enumerate() {
                    let take = subsample(idxs, common, partition.spec.seed, c as u64);
                    let x = rows_matrix(dataset, &take);
                    let xc = center_columns(&x);
                    let gram = xc.gram_rows();
                    let mut norm2 = 0.0;
                    for v in gram.as_slice() {
                        norm2 += v * v;
                    }
                    let norm = crate::fmath::sqrt(norm2);
                    let scale = x.frobenius_norm();
                    if norm <= 1e-20 * scale * scale {
                        return Err(MeasureError::DegenerateInput);
                    }
                    grams.push(gram);
                    norms.push(norm);
                }
                let mut sum = 0.0;
                for i in 0..k {
                    for j in (i + 1)..k {
                        let mut cross = 0.0;
                        for (a, b) in grams[i].as_slice().iter().zip(grams[j].as_slice()) {
                            cross += a * b;
                        }
                        sum += (cross / (norms[i] * norms[j])).clamp(0.0, 1.0);
                    }
                }
                return Ok(sum / (k * (k - 1) / 2) as f64);
            }
            let views: Vec<Matrix> = partition
                .client_indices
                .iter()
                .enumerate()
                .map(|(c, idxs)| {
                    let take = subsample(idxs, common, partition.spec.seed, c as u64);
                    rows_matrix(dataset, &take)
                })
                .collect();
            let mut sum = 0.0;
            for i in 0..k {
                for j in (i + 1)..k {
                    sum += linear_cka(&views[i], &views[j])?;
                }
            }
            Ok(sum / (k * (k - 1) / 2) as f64)
        }
    }
}

/// Deterministic subsample of `count` indices keyed by (seed, client).
fn subsample(indices: &[usize], count: usize, seed: u64, client: u64) -> Vec<usize> {
    let mut rng = streams::derive_rng(seed, &[tag::SUBSAMPLE, client]);
    let mut items = indices.to_vec();
    use rand::Rng;
    for i in 0..count {
        let j = rng.gen_range(i..items.len());
        items.swap(i, j);
    }
    items.truncate(count);
    items.sort_unstable();
    items
}

fn rows_matrix(dataset: &DatasetView, indices: &[usize]) -> Matrix {
    Matrix::from_fn(indices.len(), dataset.feature_dim(), |i, j| {
        dataset.train_features().get(indices[i], j)
    })
}

// ── Layer-wise model similarity ─────────────────────────────────────────

/// How to compare per-layer activations in [`layerwise_similarity`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerMeasure {
    /// Linear CKA between activation matrices, stored as 1 − CKA.
    Cka,
    /// Smallest principal angle between rank-p activation signatures.
    Eq2 { p: usize },
}

/// Compares the models layer by layer on a shared probe set.
///
/// Every model maps each probe row through its layers; softmax regression
/// exposes one activation matrix (the logits), the MLP two (post-ReLU
/// hidden, then logits). Activations are compared raw. CKA similarities
/// are stored as 1 − CKA so identical models sit at distance zero and the
/// matrices share the zero-diagonal proximity container; EQ2 entries are
/// the smallest principal angles, in degrees, between rank-p signatures of
/// the activations with samples as columns.
pub fn layerwise_similarity(
    models: &[ModelParams],
    probe: &Matrix,
    measure: LayerMeasure,
) -> Result<Vec<ProximityMatrix>, MeasureError> {
    let Some(first) = models.first() else {
        return Err(MeasureError::ArchitectureMismatch);
    };
    let arch = first.architecture;
    if models.iter().any(|m| m.architecture != arch) || probe.cols() != arch.input_dim() {
        return Err(MeasureError::ArchitectureMismatch);
    }
    if probe.rows() == 0 {
        return Err(MeasureError::DegenerateInput);
    }

    let widths: Vec<usize> = match arch {
        Architecture::SoftmaxRegression { num_classes, .. } => vec![num_classes],
        Architecture::Mlp { hidden_dim, num_classes, .. } => vec![hidden_dim, num_classes],
    };
    let n = probe.rows();
    let mut activations: Vec<Vec<Matrix>> = widths
        .iter()
        .map(|&w| models.iter().map(|_| Matrix::zeros(n, w)).collect())
        .collect();
    let mut hidden = Vec::new();
    let mut z = Vec::new();
    for (mi, m) in models.iter().enumerate() {
        for s in 0..n {
            model_logits(&arch, &m.values, probe.row(s), &mut hidden, &mut z);
            if widths.len() == 2 {
                for (u, &v) in hidden.iter().enumerate() {
                    activations[0][mi].set(s, u, v);
                }
            }
            let last = widths.len() - 1;
            for (c, &v) in z.iter().enumerate() {
                activations[last][mi].set(s, c, v);
            }
        }
    }

    let subjects: Vec<String> = (0..models.len()).map(|i| i.to_string()).collect();
    let mut out = Vec::with_capacity(widths.len());
    for layer in &activations {
        let matrix = match measure {
            LayerMeasure::Cka => {
                let k = models.len();
                let mut entries = Matrix::zeros(k, k);
                for i in 0..k {
                    for j in (i + 1)..k {
                        let d = 1.0 - linear_cka(&layer[i], &layer[j])?;
                        entries.set(i, j, d);
                        entries.set(j, i, d);
                    }
                }
                ProximityMatrix::new(subjects.clone(), entries, ProximityMeasure::CkaDistance)?
            }
            LayerMeasure::Eq2 { p } => {
                let sigs: Vec<Signature> = layer
                    .iter()
                    .zip(&subjects)
                    .map(|(a, id)| build_signature(&a.transpose(), id, p))
                    .collect::<Result<_, _>>()?;
                proximity_eq2(&sigs)?
            }
        };
        out.push(matrix);
    }
    Ok(out)
}

// ── Tests ───────────────────────────────────────────────────────────────
