//! PCA reference model.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Flips each column so that its largest-magnitude entry is positive. Entries
/// within a relative `1e-9` of the maximum count as tied and the first wins,
/// so rounding noise cannot flip the choice.
pub fn fix_signs(m: &mut DMatrix<f64>) {
    for mut col in m.column_iter_mut() {
        let best = col.amax();
        let pick = col.iter().find(|v| v.abs() >= best * (1.0 - 1e-9));
        if matches!(pick, Some(&v) if v < 0.0) {
            col.neg_mut();
        }
    }
}

/// Leading `m` principal directions of the (already centred) data matrix,
/// from its thin SVD. Returns fewer columns, with a warning, when `m` exceeds
/// the numerical rank.
pub fn pca(data: &DMatrix<f64>, m: usize) -> Result<DMatrix<f64>> {
    let (rows, cols) = data.shape();
    if m == 0 {
        return Err(Error::invalid("factors", "must be at least 1"));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("pca on non-finite data"));
    }
    let svd = data.clone().svd(true, false);
    let u = svd.u.ok_or_else(|| Error::numeric("svd did not return left vectors"))?;
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&i, &j| sv[j].total_cmp(&sv[i]).then(i.cmp(&j)));
    let smax = order.first().map(|&i| sv[i]).unwrap_or(0.0);
    let tol = smax * rows.max(cols) as f64 * f64::EPSILON;
    let rank = order.iter().filter(|&&i| sv[i] > tol).count();
    let keep = m.min(rank);
    if keep < m {
        log::warn!("requested {m} principal components but the data has rank {rank}; returning {keep}");
    }
    let mut phi = u.select_columns(&order[..keep]);
    fix_signs(&mut phi);
    Ok(phi)
}

/// Eigenvalues of `(1/(K−1)) XXᵀ` that belong to [`pca`]'s columns.
pub fn explained_variance(data: &DMatrix<f64>, factors: &DMatrix<f64>) -> DVector<f64> {
    let k = data.ncols().max(2) as f64;
    let proj = factors.transpose() * data;
    DVector::from_iterator(factors.ncols(), proj.row_iter().map(|r| r.norm_squared() / (k - 1.0)))
}
