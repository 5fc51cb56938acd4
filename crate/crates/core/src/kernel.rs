//! Kernelized covariance for small training sets, kernel PCA, and the
//! pathway that factorizes the kernel instead of the data.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::IncidenceOperator;
use crate::pca::fix_signs;
use crate::prox::RegularizerWeights;
use crate::shape::{fit_all, DeformationModel};
use crate::solver::{solve, SolverConfig, SolverTrace};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelConfig {
    /// Gaussian bandwidth, relative to the largest vertex distance.
    pub bandwidth: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig { bandwidth: 0.2 }
    }
}

impl KernelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) {
            return Err(Error::invalid("bandwidth", "must be positive"));
        }
        Ok(())
    }
}

/// `K′_ij = exp(−(D_ij / (2β max D))²)`.
pub fn spatial_kernel(distances: &DMatrix<f64>, bandwidth: f64) -> DMatrix<f64> {
    let dmax = distances.amax();
    let denom = 2.0 * bandwidth * dmax;
    distances.map(|d| if d == 0.0 { 1.0 } else { (-(d / denom).powi(2)).exp() })
}

/// `XXᵀ / max|XXᵀ| + I₃ ⊗ K′` for a `3N × K` data matrix and the `N × N`
/// Euclidean distances of the mean shape.
pub fn kernelized_covariance(data: &DMatrix<f64>, distances: &DMatrix<f64>, bandwidth: f64) -> Result<DMatrix<f64>> {
    let n = distances.nrows();
    if distances.ncols() != n {
        return Err(Error::dim("distance matrix columns", n, distances.ncols()));
    }
    if data.nrows() != 3 * n {
        return Err(Error::dim("data rows", 3 * n, data.nrows()));
    }
    KernelConfig { bandwidth }.validate()?;
    let mut k = data * data.transpose();
    let peak = k.amax();
    if peak > 0.0 {
        k /= peak;
    }
    let spatial = spatial_kernel(distances, bandwidth);
    for d in 0..3 {
        let mut block = k.view_mut((d * n, d * n), (n, n));
        block += &spatial;
    }
    // Products accumulate in different orders above and below the diagonal.
    let k = (&k + k.transpose()) * 0.5;
    Ok(k)
}

/// Leading `m` eigenvectors of a symmetric matrix, by non-increasing
/// eigenvalue, with the largest-magnitude entry of each made positive.
pub fn kpca(kernel: &DMatrix<f64>, m: usize) -> Result<DMatrix<f64>> {
    let (eigenvectors, values) = sorted_eigen(kernel)?;
    if m > values.len() {
        return Err(Error::dim("kpca factor count (at most 3N)", values.len(), m));
    }
    let mut phi = eigenvectors.columns(0, m).into_owned();
    fix_signs(&mut phi);
    Ok(phi)
}

/// Eigenvectors and eigenvalues sorted by non-increasing eigenvalue.
pub fn sorted_eigen(kernel: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>)> {
    if !kernel.is_square() {
        return Err(Error::dim("kernel columns", kernel.nrows(), kernel.ncols()));
    }
    if kernel.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("eigen-decomposition of non-finite matrix"));
    }
    let eig = SymmetricEigen::try_new(kernel.clone(), f64::EPSILON, 0)
        .ok_or_else(|| Error::numeric("symmetric eigen-solver did not converge"))?;
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    Ok((eig.eigenvectors.select_columns(&order), values))
}

/// Factorizes the kernelized covariance with the BCD solver, then recovers
/// the coefficients of the training data by least squares. The returned
/// model is in normalized units with `scale` 1 and a zero mean; callers attach
/// the training normalization.
pub fn solve_kernelized(
    data: &DMatrix<f64>,
    distances: &DMatrix<f64>,
    incidence: &IncidenceOperator,
    weights: &RegularizerWeights,
    config: &SolverConfig,
    kernel: &KernelConfig,
) -> Result<(DeformationModel, SolverTrace)> {
    kernel.validate()?;
    let k = kernelized_covariance(data, distances, kernel.bandwidth)?;
    let (fact, trace) = solve(&k, incidence, weights, config)?;
    let a = fit_all(&fact.factors, data)?;
    let model = DeformationModel::new(nalgebra::DVector::zeros(data.nrows()), fact.factors, a, 1.0)?;
    Ok((model, trace))
}
