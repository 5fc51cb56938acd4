//! Shape sets, the x/y/z block vectorization, and the linear deformation model.
//!
//! A shape with `N` vertices is an `N x 3` matrix. Its vectorized form stacks the
//! x-coordinates, then the y-coordinates, then the z-coordinates, so rows
//! `i`, `i + N` and `i + 2N` of a `3N` vector belong to vertex `i`. Every module
//! in the crate uses this layout.

use nalgebra::{DMatrix, DVector, SVD};

use crate::error::{Error, Result};

/// Stacks the columns of an `N x 3` shape into a `3N` vector.
pub fn vectorize(shape: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(shape.as_slice())
}

/// Inverse of [`vectorize`].
pub fn devectorize(v: &DVector<f64>) -> Result<DMatrix<f64>> {
    if v.len() % 3 != 0 {
        return Err(Error::invalid("vector", "length is not a multiple of 3"));
    }
    Ok(DMatrix::from_column_slice(v.len() / 3, 3, v.as_slice()))
}

/// `K` centred and scaled training shapes with a shared topology.
#[derive(Debug, Clone)]
pub struct ShapeSet {
    vertex_count: usize,
    shapes: Vec<DMatrix<f64>>,
    mean_shape: DMatrix<f64>,
    data: DMatrix<f64>,
    scale: f64,
    faces: Vec<[usize; 3]>,
}

impl ShapeSet {
    /// Centres the shapes at their mean and divides by one global scalar so the
    /// entries of the data matrix have unit (population) standard deviation.
    pub fn prepare(raw_shapes: Vec<DMatrix<f64>>) -> Result<Self> {
        let shape_count = raw_shapes.len();
        if shape_count < 2 {
            return Err(Error::invalid("shapes", "need at least two shapes"));
        }
        let vertex_count = raw_shapes[0].nrows();
        if vertex_count < 2 {
            return Err(Error::invalid("shapes", "need at least two vertices"));
        }
        for s in &raw_shapes {
            if s.ncols() != 3 {
                return Err(Error::dim("shape columns", 3, s.ncols()));
            }
            if s.nrows() != vertex_count {
                return Err(Error::dim("shape vertex count", vertex_count, s.nrows()));
            }
            if s.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("shapes", "non-finite coordinate"));
            }
        }

        let mut mean_shape = DMatrix::zeros(vertex_count, 3);
        for s in &raw_shapes {
            mean_shape += s;
        }
        mean_shape /= shape_count as f64;

        let dim = 3 * vertex_count;
        let mut data = DMatrix::zeros(dim, shape_count);
        for (k, s) in raw_shapes.iter().enumerate() {
            let centred = s - &mean_shape;
            data.column_mut(k).copy_from_slice(centred.as_slice());
        }
        let count = (dim * shape_count) as f64;
        let mu = data.sum() / count;
        let var = data.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / count;
        let scale = var.sqrt();
        let magnitude = mean_shape.amax().max(1.0);
        if !(scale > 1e-14 * magnitude) {
            return Err(Error::DegenerateInput("training shapes have zero variance".into()));
        }
        data /= scale;

        Ok(ShapeSet {
            vertex_count,
            shapes: raw_shapes,
            mean_shape,
            data,
            scale,
            faces: Vec::new(),
        })
    }

    /// Builds a shape set from a `3N x K` matrix of raw vectorized shapes.
    pub fn from_columns(raw: &DMatrix<f64>) -> Result<Self> {
        if raw.nrows() % 3 != 0 {
            return Err(Error::invalid("shapes", "row count is not a multiple of 3"));
        }
        let shapes = raw
            .column_iter()
            .map(|c| DMatrix::from_column_slice(raw.nrows() / 3, 3, c.as_slice()))
            .collect();
        Self::prepare(shapes)
    }

    pub fn with_faces(mut self, faces: Vec<[usize; 3]>) -> Result<Self> {
        if let Some(bad) = faces.iter().flatten().find(|&&i| i >= self.vertex_count) {
            return Err(Error::invalid("faces", format!("vertex index {bad} out of range")));
        }
        self.faces = faces;
        Ok(self)
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn shape_count(&self) -> usize {
        self.shapes.len()
    }

    /// Raw input shapes in original units.
    pub fn shapes(&self) -> &[DMatrix<f64>] {
        &self.shapes
    }

    pub fn mean_shape(&self) -> &DMatrix<f64> {
        &self.mean_shape
    }

    pub fn mean_vector(&self) -> DVector<f64> {
        vectorize(&self.mean_shape)
    }

    /// The `3N x K` normalized data matrix `X`.
    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    /// Factor that maps normalized units back to original units.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    /// Returns the shape set restricted to the given shape indices. The
    /// normalization of `self` (mean and scale) is kept.
    pub fn select(&self, indices: &[usize]) -> ShapeSubset<'_> {
        ShapeSubset {
            parent: self,
            indices: indices.to_vec(),
        }
    }
}

/// A view on a subset of the columns of a [`ShapeSet`].
#[derive(Debug, Clone)]
pub struct ShapeSubset<'a> {
    parent: &'a ShapeSet,
    indices: Vec<usize>,
}

impl ShapeSubset<'_> {
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn data(&self) -> DMatrix<f64> {
        self.parent.data.select_columns(&self.indices)
    }
}

/// Mean shape, factor matrix and coefficient matrix of a linear deformation
/// model. `factors` and `coefficients` live in normalized units; `scale`
/// converts offsets back to the units of `mean`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeformationModel {
    pub mean: DVector<f64>,
    pub factors: DMatrix<f64>,
    pub coefficients: DMatrix<f64>,
    pub scale: f64,
}

impl DeformationModel {
    pub fn new(mean: DVector<f64>, factors: DMatrix<f64>, coefficients: DMatrix<f64>, scale: f64) -> Result<Self> {
        if factors.nrows() != mean.len() {
            return Err(Error::dim("factor rows", mean.len(), factors.nrows()));
        }
        if coefficients.nrows() != factors.ncols() {
            return Err(Error::dim("coefficient rows", factors.ncols(), coefficients.nrows()));
        }
        Ok(DeformationModel {
            mean,
            factors,
            coefficients,
            scale,
        })
    }

    pub fn factor_count(&self) -> usize {
        self.factors.ncols()
    }

    pub fn vertex_count(&self) -> usize {
        self.mean.len() / 3
    }

    /// `x̄ + scale · Φα`, in the units of the mean shape.
    pub fn deform(&self, alpha: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(&self.mean + self.offset(alpha)? * self.scale)
    }

    /// `x̄ / scale + Φα`, i.e. [`Self::deform`] without undoing the normalization.
    pub fn deform_normalized(&self, alpha: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(&self.mean / self.scale + self.offset(alpha)?)
    }

    /// The deformation `Φα` relative to the mean, in normalized units.
    pub fn offset(&self, alpha: &DVector<f64>) -> Result<DVector<f64>> {
        if alpha.len() != self.factors.ncols() {
            return Err(Error::dim("weights", self.factors.ncols(), alpha.len()));
        }
        Ok(&self.factors * alpha)
    }
}

/// Minimum-norm least-squares solver for a fixed matrix, via the SVD.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    rows: usize,
    svd: SVD<f64, nalgebra::Dyn, nalgebra::Dyn>,
    eps: f64,
}

impl LeastSquares {
    pub fn new(matrix: &DMatrix<f64>) -> Result<Self> {
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("least squares on non-finite matrix"));
        }
        let rows = matrix.nrows();
        let svd = SVD::new(matrix.clone(), true, true);
        let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
        let eps = smax * (matrix.nrows().max(matrix.ncols()) as f64) * f64::EPSILON;
        Ok(LeastSquares { rows, svd, eps })
    }

    pub fn rank(&self) -> usize {
        self.svd.singular_values.iter().filter(|&&s| s > self.eps).count()
    }

    pub fn solve(&self, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if rhs.nrows() != self.rows {
            return Err(Error::dim("least-squares rhs", self.rows, rhs.nrows()));
        }
        if self.svd.singular_values.is_empty() {
            let cols = self.svd.v_t.as_ref().map(|v| v.ncols()).unwrap_or(0);
            return Ok(DMatrix::zeros(cols, rhs.ncols()));
        }
        // SVD::solve zeroes singular values <= eps, which yields the minimum-norm solution.
        let eps = self.eps.max(f64::MIN_POSITIVE);
        self.svd
            .solve(rhs, eps)
            .map_err(|e| Error::numeric(format!("least squares: {e}")))
    }

    pub fn solve_vector(&self, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        let m = DMatrix::from_column_slice(rhs.len(), 1, rhs.as_slice());
        Ok(self.solve(&m)?.column(0).into_owned())
    }
}

/// `argmin_α ‖Φα − x‖₂`, minimum-norm when `Φ` is rank deficient.
pub fn fit_coefficients(factors: &DMatrix<f64>, x: &DVector<f64>) -> Result<DVector<f64>> {
    if factors.nrows() != x.len() {
        return Err(Error::dim("fit target", factors.nrows(), x.len()));
    }
    LeastSquares::new(factors)?.solve_vector(x)
}

/// Column-wise [`fit_coefficients`] for a whole data matrix.
pub fn fit_all(factors: &DMatrix<f64>, data: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    LeastSquares::new(factors)?.solve(data)
}
