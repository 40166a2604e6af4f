//! Shared oracles for the integration suites, implemented independently of
//! the library's solvers so agreement is evidence rather than tautology.

// Each suite links its own copy and uses its own subset.
#![allow(dead_code)]

use hetfed_core::numerics::Matrix;
use hetfed_core::streams;
use rand::Rng;

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
///
/// Returns eigenvalues in descending order with the matching eigenvectors
/// as columns of the second output. Plain textbook rotations, no
/// tridiagonalization, so it shares no code path with the library's
/// Householder + QL solver.
pub fn jacobi_eigen(a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect())
        .collect();
    let scale: f64 = a
        .iter()
        .flat_map(|row| row.iter().map(|x| x * x))
        .sum::<f64>()
        .sqrt()
        .max(1e-300);

    for _sweep in 0..80 {
        let off: f64 = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-13 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p][q];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    1.0 / (theta - (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[k][p], v[k][q]);
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j][j].partial_cmp(&m[i][i]).unwrap().then(i.cmp(&j)));
    let values: Vec<f64> = order.iter().map(|&i| m[i][i]).collect();
    let vectors: Vec<Vec<f64>> = order
        .iter()
        .map(|&col| (0..n).map(|row| v[row][col]).collect())
        .collect();
    (values, vectors)
}

/// Gram matrix MᵀM as plain nested vectors, summed in naive order.
pub fn gram_t(m: &Matrix) -> Vec<Vec<f64>> {
    let (rows, cols) = (m.rows(), m.cols());
    let mut g = vec![vec![0.0; cols]; cols];
    for a in 0..cols {
        for b in 0..cols {
            let mut acc = 0.0;
            for r in 0..rows {
                acc += m.get(r, a) * m.get(r, b);
            }
            g[a][b] = acc;
        }
    }
    g
}

/// Uniform random matrix with entries in (-1, 1).
pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = streams::derive_rng(seed, &[0xBEEF]);
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

/// Projector UUᵀ onto the span of the columns of `u`.
pub fn projector(u: &[Vec<f64>], dim: usize) -> Vec<Vec<f64>> {
    let mut p = vec![vec![0.0; dim]; dim];
    for col in u {
        for i in 0..dim {
            for j in 0..dim {
                p[i][j] += col[i] * col[j];
            }
        }
    }
    p
}

/// Frobenius distance between two square nested-vector matrices.
pub fn frob_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| (x - y) * (x - y)))
        .sum::<f64>()
        .sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Random orthonormal dim × p matrix via two-pass Gram-Schmidt.
pub fn orthonormal_columns(dim: usize, p: usize, seed: u64) -> Matrix {
    let raw = random_matrix(dim, p, seed);
    let mut cols: Vec<Vec<f64>> = (0..p).map(|j| raw.column_vec(j)).collect();
    for j in 0..p {
        for _pass in 0..2 {
            for k in 0..j {
                let r = dot(&cols[k], &cols[j]);
                let (head, tail) = cols.split_at_mut(j);
                for (t, s) in tail[0].iter_mut().zip(&head[k]) {
                    *t -= r * s;
                }
            }
        }
        let norm = dot(&cols[j], &cols[j]).sqrt();
        assert!(norm > 1e-8, "random columns should stay independent");
        for t in cols[j].iter_mut() {
            *t /= norm;
        }
    }
    Matrix::from_fn(dim, p, |i, j| cols[j][i])
}
