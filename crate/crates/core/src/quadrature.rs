//! Gauss-Hermite quadrature against the standard normal density.

use nalgebra::DMatrix;

/// Nodes and weights with `sum_i w_i f(x_i) ~ E[f(Z)]`, `Z ~ N(0, 1)`.
/// Exact for polynomials of degree `< 2 * order`. Golub-Welsch on the Jacobi
/// matrix of the probabilists' Hermite polynomials.
pub fn gauss_hermite(order: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(order >= 1, "quadrature order must be positive");
    let mut jacobi = DMatrix::<f64>::zeros(order, order);
    for k in 1..order {
        let b = (k as f64).sqrt();
        jacobi[(k - 1, k)] = b;
        jacobi[(k, k - 1)] = b;
    }
    let eig = jacobi.symmetric_eigen();
    let mut pairs: Vec<(f64, f64)> = (0..order)
        .map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    pairs.into_iter().map(|(x, w)| (x, w / total)).unzip()
}
