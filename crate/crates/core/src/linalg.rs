//! Small dense helpers shared by the PCA-based modules.

use nalgebra::{DMatrix, SymmetricEigen};

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    squared_distance(a, b).sqrt()
}

pub fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn column_means(rows: &[Vec<f64>]) -> Vec<f64> {
    let d = rows[0].len();
    let mut mean = vec![0.0; d];
    for r in rows {
        for (m, x) in mean.iter_mut().zip(r) {
            *m += x;
        }
    }
    let n = rows.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    mean
}

/// Row-major centered data matrix (`n x d`).
pub fn centered_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let mean = column_means(rows);
    let d = mean.len();
    DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j] - mean[j])
}

/// Eigenpairs of a symmetric matrix, eigenvalues sorted descending.
/// Column `i` of the returned matrix is the eigenvector of value `i`.
pub fn sym_eigen_desc(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |r, c| {
        eig.eigenvectors[(r, order[c])]
    });
    (values, vectors)
}
