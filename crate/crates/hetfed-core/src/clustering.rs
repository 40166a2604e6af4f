//! Threshold-stopped agglomerative clustering over a proximity matrix.
//!
//! Starting from singletons, the closest pair of clusters under the chosen
//! linkage is merged repeatedly until the minimum inter-cluster distance
//! exceeds the threshold (merges at exactly the threshold still happen).
//! Ties are broken by the lexicographically smallest pair of representative
//! indices, so repeated runs agree byte for byte.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::signature::ProximityMatrix;

// ── Errors ──────────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClusteringError {
    /// Threshold suggestion needs at least three subjects.
    TooFewSubjects,
    /// Reassembled clustering violates its own invariants.
    Inconsistent,
}

impl core::fmt::Display for ClusteringError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Self::TooFewSubjects => write!(f, "need at least 3 subjects"),
            Self::Inconsistent => write!(f, "clustering violates its invariants"),
        }
    }
}

impl core::error::Error for ClusteringError {}

// ── Types ───────────────────────────────────────────────────────────────

/// Inter-cluster distance rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Linkage {
    #[default]
    Average,
    Complete,
    Single,
}

impl Linkage {
    pub fn tag(&self) -> &'static str {
        match self {
            Self::Average => "AVERAGE",
            Self::Complete => "COMPLETE",
            Self::Single => "SINGLE",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "AVERAGE" => Some(Self::Average),
            "COMPLETE" => Some(Self::Complete),
            "SINGLE" => Some(Self::Single),
            _ => None,
        }
    }
}

/// Disjoint clusters of subjects with the merge trace that produced them.
///
/// Cluster indices are ordered by each cluster's smallest original subject
/// position, and `merge_history` names each merged pair by its
/// representative (first-position) subject.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperClustering {
    pub assignments: BTreeMap<String, usize>,
    pub num_clusters: usize,
    pub threshold: f64,
    pub linkage: Linkage,
    pub merge_history: Vec<(String, String, f64)>,
}

impl SuperClustering {
    /// Validates a clustering reassembled from serialized parts.
    pub fn from_parts(
        assignments: BTreeMap<String, usize>,
        threshold: f64,
        linkage: Linkage,
        merge_history: Vec<(String, String, f64)>,
    ) -> Result<Self, ClusteringError> {
        if assignments.is_empty() {
            return Err(ClusteringError::Inconsistent);
        }
        let num_clusters = assignments.values().max().map_or(0, |m| m + 1);
        for c in 0..num_clusters {
            if !assignments.values().any(|&v| v == c) {
                return Err(ClusteringError::Inconsistent);
            }
        }
        for w in merge_history.windows(2) {
            if w[1].2 < w[0].2 {
                return Err(ClusteringError::Inconsistent);
            }
        }
        if merge_history.iter().any(|m| m.2 > threshold) {
            return Err(ClusteringError::Inconsistent);
        }
        Ok(Self {
            assignments,
            num_clusters,
            threshold,
            linkage,
            merge_history,
        })
    }

    pub fn cluster_of(&self, subject: &str) -> Option<usize> {
        self.assignments.get(subject).copied()
    }

    /// Member lists per cluster index, members sorted lexicographically.
    pub fn clusters(&self) -> Vec<Vec<String>> {
        let mut out = alloc::vec![Vec::new(); self.num_clusters];
        for (subject, &c) in &self.assignments {
            out[c].push(subject.clone());
        }
        for members in &mut out {
            members.sort();
        }
        out
    }
}

// ── Agglomeration ───────────────────────────────────────────────────────

fn linkage_distance(
    entries: &crate::numerics::Matrix,
    a: &[usize],
    b: &[usize],
    linkage: Linkage,
) -> f64 {
    match linkage {
        Linkage::Average => {
            let mut sum = 0.0;
            for &i in a {
                for &j in b {
                    sum += entries.get(i, j);
                }
            }
            sum / (a.len() * b.len()) as f64
        }
        Linkage::Complete => {
            let mut best = f64::NEG_INFINITY;
            for &i in a {
                for &j in b {
                    best = best.max(entries.get(i, j));
                }
            }
            best
        }
        Linkage::Single => {
            let mut best = f64::INFINITY;
            for &i in a {
                for &j in b {
                    best = best.min(entries.get(i, j));
                }
            }
            best
        }
    }
}

/// Merges singletons bottom-up until every inter-cluster distance exceeds
/// `threshold`. Symmetry and the zero diagonal are guaranteed by
/// [`ProximityMatrix`]'s constructor.
pub fn agglomerative_cluster(
    proximity: &ProximityMatrix,
    threshold: f64,
    linkage: Linkage,
) -> SuperClustering {
    let subjects = proximity.subjects();
    let entries = proximity.entries();
    // Clusters stay sorted by representative, the smallest member index.
    let mut clusters: Vec<Vec<usize>> = (0..subjects.len()).map(|i| alloc::vec![i]).collect();
    let mut merge_history = Vec::new();

    while clusters.len() > 1 {
        let mut best: Option<(f64, usize, usize)> = None;
        for si in 0..clusters.len() {
            for sj in (si + 1)..clusters.len() {
                let d = linkage_distance(entries, &clusters[si], &clusters[sj], linkage);
                let better = match best {
                    None => true,
                    // Representative order equals slot order, so (si, sj)
                    // is already the lexicographic tie-break key.
                    Some((bd, _, _)) => d < bd,
                };
                if better {
                    best = Some((d, si, sj));
                }
            }
        }
        let (d, si, sj) = best.unwrap();
        if d > threshold {
            break;
        }
        merge_history.push((
            subjects[clusters[si][0]].clone(),
            subjects[clusters[sj][0]].clone(),
            d,
        ));
        let absorbed = clusters.remove(sj);
        clusters[si].extend(absorbed);
        clusters[si].sort_unstable();
    }

    let mut assignments = BTreeMap::new();
    for (c, members) in clusters.iter().enumerate() {
        for &m in members {
            assignments.insert(subjects[m].clone(), c);
        }
    }
    SuperClustering {
        assignments,
        num_clusters: clusters.len(),
        threshold,
        linkage,
        merge_history,
    }
}

/// Suggests a stopping threshold as the midpoint of the largest gap in the
/// merge-distance sequence of a full agglomeration. Equal largest gaps
/// resolve to the latest one (fewer clusters); a fully degenerate sequence
/// (all merges at one distance) returns that common distance.
pub fn suggest_threshold(
    proximity: &ProximityMatrix,
    linkage: Linkage,
) -> Result<f64, ClusteringError> {
    if proximity.len() < 3 {
        return Err(ClusteringError::TooFewSubjects);
    }
    let full = agglomerative_cluster(proximity, f64::INFINITY, linkage);
    let ds: Vec<f64> = full.merge_history.iter().map(|m| m.2).collect();
    let mut best_gap = 0.0;
    let mut best_idx = 0;
    for i in 0..ds.len() - 1 {
        let gap = ds[i + 1] - ds[i];
        if gap >= best_gap {
            best_gap = gap;
            best_idx = i;
        }
    }
    if best_gap <= 1e-12 {
        return Ok(ds[0]);
    }
    Ok((ds[best_idx] + ds[best_idx + 1]) / 2.0)
}

// ── Tests ───────────────────────────────────────────────────────────────
