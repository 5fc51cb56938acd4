//! Quantitative evaluation of a deformation model: reconstruction,
//! specificity, generalisation and sparse reconstruction errors, each as
//! average and maximum per-vertex distance, plus random parameter search.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::shape::{fit_all, LeastSquares, ShapeSet};

/// Diagonal shift added to the coefficient covariance before factorizing it.
pub const COVARIANCE_JITTER: f64 = 1e-10;

fn check_pair(x: &[f64], y: &[f64]) -> Result<usize> {
    if x.len() != y.len() {
        return Err(Error::dim("shape vector length", x.len(), y.len()));
    }
    if x.len() % 3 != 0 {
        return Err(Error::invalid("shape vector", "length is not a multiple of 3"));
    }
    Ok(x.len() / 3)
}

fn vertex_distances<'a>(x: &'a [f64], y: &'a [f64], n: usize) -> impl Iterator<Item = f64> + 'a {
    (0..n).map(move |i| {
        let dx = x[i] - y[i];
        let dy = x[i + n] - y[i + n];
        let dz = x[i + 2 * n] - y[i + 2 * n];
        (dx * dx + dy * dy + dz * dz).sqrt()
    })
}

/// Mean per-vertex Euclidean distance between two vectorized shapes.
pub fn e_avg(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = check_pair(x, y)?;
    if n == 0 {
        return Ok(0.0);
    }
    Ok(vertex_distances(x, y, n).sum::<f64>() / n as f64)
}

/// Largest per-vertex Euclidean distance between two vectorized shapes.
pub fn e_max(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = check_pair(x, y)?;
    Ok(vertex_distances(x, y, n).fold(0.0, f64::max))
}

/// Average and maximum error of one shape comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorPair {
    pub avg: f64,
    pub max: f64,
}

impl ErrorPair {
    /// Errors between normalized vectors, reported in original units.
    pub fn between(x: &[f64], y: &[f64], scale: f64) -> Result<Self> {
        Ok(ErrorPair {
            avg: e_avg(x, y)? * scale,
            max: e_max(x, y)? * scale,
        })
    }
}

/// How cross-validation folds are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FoldMode {
    /// A shuffled partition into `folds` near-equal parts.
    #[default]
    Disjoint,
    /// `folds` independent draws of `round(K / folds)` test shapes each.
    Literal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub specificity_samples: usize,
    pub folds: usize,
    pub fold_mode: FoldMode,
    pub sparse_fraction: f64,
    /// Multiplies the Tikhonov factor of the sparse reconstruction.
    pub gamma_scale: f64,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            specificity_samples: 100,
            folds: 5,
            fold_mode: FoldMode::Disjoint,
            sparse_fraction: 0.05,
            gamma_scale: 1.0,
            seed: 0,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::invalid("folds", "must be at least 2"));
        }
        if !(self.sparse_fraction > 0.0 && self.sparse_fraction <= 1.0) {
            return Err(Error::invalid("sparse_fraction", "must lie in (0, 1]"));
        }
        if !(self.gamma_scale >= 0.0 && self.gamma_scale.is_finite()) {
            return Err(Error::invalid("gamma_scale", "must be non-negative"));
        }
        Ok(())
    }
}

/// Least-squares fit of every training shape, with errors per shape.
pub fn reconstruction_error(factors: &DMatrix<f64>, set: &ShapeSet) -> Result<Vec<ErrorPair>> {
    fit_errors(factors, set.data(), set.scale())
}

fn fit_errors(factors: &DMatrix<f64>, targets: &DMatrix<f64>, scale: f64) -> Result<Vec<ErrorPair>> {
    if factors.nrows() != targets.nrows() {
        return Err(Error::dim("factor rows", targets.nrows(), factors.nrows()));
    }
    let fitted = factors * fit_all(factors, targets)?;
    (0..targets.ncols())
        .map(|k| ErrorPair::between(fitted.column(k).as_slice(), targets.column(k).as_slice(), scale))
        .collect()
}

/// `Σ_k α_k α_kᵀ / (K − 1)` over the columns of `alpha`.
pub fn coefficient_covariance(alpha: &DMatrix<f64>) -> DMatrix<f64> {
    let k = alpha.ncols().max(2) as f64;
    alpha * alpha.transpose() / (k - 1.0)
}

fn jittered_cholesky(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let m = cov.nrows();
    let c = cov + DMatrix::identity(m, m) * COVARIANCE_JITTER;
    c.cholesky()
        .map(|ch| ch.l())
        .ok_or_else(|| Error::numeric("coefficient covariance is not positive definite"))
}

/// For each of `samples` random shapes `Φα`, `α ~ N(0, C_α)`, the errors to
/// the training shape with the smallest average error.
pub fn specificity(factors: &DMatrix<f64>, set: &ShapeSet, samples: usize, seed: u64) -> Result<Vec<ErrorPair>> {
    let data = set.data();
    if factors.nrows() != data.nrows() {
        return Err(Error::dim("factor rows", data.nrows(), factors.nrows()));
    }
    let cov = coefficient_covariance(&fit_all(factors, data)?);
    specificity_with_covariance(factors, data, &cov, set.scale(), samples, seed)
}

/// [`specificity`] with an explicit covariance and training matrix.
pub fn specificity_with_covariance(
    factors: &DMatrix<f64>,
    training: &DMatrix<f64>,
    covariance: &DMatrix<f64>,
    scale: f64,
    samples: usize,
    seed: u64,
) -> Result<Vec<ErrorPair>> {
    let m = factors.ncols();
    if covariance.shape() != (m, m) {
        return Err(Error::dim("covariance size", m, covariance.nrows()));
    }
    let l = jittered_cholesky(covariance)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<DVector<f64>> = (0..samples)
        .map(|_| {
            let z = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
            &l * z
        })
        .collect();
    draws
        .par_iter()
        .map(|alpha| {
            let x = factors * alpha;
            nearest_shape(x.as_slice(), training, scale).map(|(_, e)| e)
        })
        .collect()
}

/// Index of and errors to the column of `training` with the smallest average
/// error to `x` (first on ties).
pub fn nearest_shape(x: &[f64], training: &DMatrix<f64>, scale: f64) -> Result<(usize, ErrorPair)> {
    let mut best: Option<(usize, ErrorPair)> = None;
    for k in 0..training.ncols() {
        let e = ErrorPair::between(x, training.column(k).as_slice(), scale)?;
        if best.is_none_or(|(_, b)| e.avg < b.avg) {
            best = Some((k, e));
        }
    }
    best.ok_or_else(|| Error::invalid("training", "no training shapes"))
}

/// Test-index sets of each cross-validation fold.
pub fn draw_folds(shape_count: usize, folds: usize, mode: FoldMode, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(Error::invalid("folds", "must be at least 2"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sets: Vec<Vec<usize>> = match mode {
        FoldMode::Disjoint => {
            if folds > shape_count {
                return Err(Error::invalid(
                    "folds",
                    format!("{folds} folds for {shape_count} shapes"),
                ));
            }
            let mut idx: Vec<usize> = (0..shape_count).collect();
            idx.shuffle(&mut rng);
            (0..folds)
                .map(|f| {
                    let mut s: Vec<usize> = idx.iter().skip(f).step_by(folds).copied().collect();
                    s.sort_unstable();
                    s
                })
                .collect()
        }
        FoldMode::Literal => {
            let size = ((shape_count as f64 / folds as f64).round() as usize).max(1);
            (0..folds)
                .map(|_| {
                    let mut s = rand::seq::index::sample(&mut rng, shape_count, size.min(shape_count)).into_vec();
                    s.sort_unstable();
                    s
                })
                .collect()
        }
    };
    for s in &sets {
        if shape_count - s.len() < 2 {
            return Err(Error::invalid("folds", "a fold leaves fewer than two training shapes"));
        }
    }
    Ok(sets)
}

/// Maps a training data matrix (`3N × K_train`, columns of the prepared set)
/// to a factor matrix.
pub type Trainer<'a> = dyn Fn(&DMatrix<f64>) -> Result<DMatrix<f64>> + Sync + 'a;

/// Held-out errors of one cross-validation run, in fold order.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossValidation {
    /// `(fold, shape index)` of each entry.
    pub tested: Vec<(usize, usize)>,
    pub generalisation: Vec<ErrorPair>,
    pub sparse: Vec<ErrorPair>,
}

/// Trains on the complement of each fold and fits every held-out shape, once
/// with all coordinates and once from a random subset of rows.
pub fn cross_validate(trainer: &Trainer<'_>, set: &ShapeSet, config: &EvalConfig) -> Result<CrossValidation> {
    config.validate()?;
    let k = set.shape_count();
    let folds = draw_folds(k, config.folds, config.fold_mode, config.seed)?;
    let mut out = CrossValidation {
        tested: Vec::new(),
        generalisation: Vec::new(),
        sparse: Vec::new(),
    };
    for (f, test) in folds.iter().enumerate() {
        let train: Vec<usize> = (0..k).filter(|i| test.binary_search(i).is_err()).collect();
        let train_data = set.select(&train).data();
        let test_data = set.select(test).data();
        let phi = trainer(&train_data)?;
        if phi.nrows() != train_data.nrows() {
            return Err(Error::dim("trained factor rows", train_data.nrows(), phi.nrows()));
        }
        out.generalisation.extend(fit_errors(&phi, &test_data, set.scale())?);
        let cov = coefficient_covariance(&fit_all(&phi, &train_data)?);
        let fold_seed = config.seed.wrapping_add(1 + f as u64);
        out.sparse.extend(sparse_reconstruction(
            &phi,
            &test_data,
            &cov,
            config.sparse_fraction,
            config.gamma_scale,
            set.scale(),
            fold_seed,
        )?);
        out.tested.extend(test.iter().map(|&i| (f, i)));
    }
    Ok(out)
}

/// Number of rows used by the sparse reconstruction.
pub fn sparse_row_count(dim: usize, fraction: f64) -> usize {
    ((fraction * dim as f64).ceil() as usize).clamp(1, dim)
}

/// Fits each target column from `⌈fraction · 3N⌉` random rows with the
/// Tikhonov term `‖Γα‖²`, `ΓᵀΓ = gamma_scale² (C_α + jitter · I)`, and
/// reports errors on the full shape.
pub fn sparse_reconstruction(
    factors: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    covariance: &DMatrix<f64>,
    fraction: f64,
    gamma_scale: f64,
    scale: f64,
    seed: u64,
) -> Result<Vec<ErrorPair>> {
    let (dim, m) = factors.shape();
    if targets.nrows() != dim {
        return Err(Error::dim("target rows", dim, targets.nrows()));
    }
    if covariance.shape() != (m, m) {
        return Err(Error::dim("covariance size", m, covariance.nrows()));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid("sparse_fraction", "must lie in (0, 1]"));
    }
    let rows = sparse_row_count(dim, fraction);
    if rows < m {
        log::warn!("sparse reconstruction uses {rows} rows for {m} factors");
    }
    let gamma = jittered_cholesky(covariance)?.transpose() * gamma_scale;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(targets.ncols());
    for j in 0..targets.ncols() {
        let mut picked = rand::seq::index::sample(&mut rng, dim, rows).into_vec();
        picked.sort_unstable();
        let mut stacked = DMatrix::zeros(rows + m, m);
        let mut rhs = DVector::zeros(rows + m);
        for (r, &i) in picked.iter().enumerate() {
            stacked.row_mut(r).copy_from(&factors.row(i));
            rhs[r] = targets[(i, j)];
        }
        stacked.view_mut((rows, 0), (m, m)).copy_from(&gamma);
        let alpha = LeastSquares::new(&stacked)?.solve_vector(&rhs)?;
        let x = factors * alpha;
        out.push(ErrorPair::between(x.as_slice(), targets.column(j).as_slice(), scale)?);
    }
    Ok(out)
}

/// Names of the eight measures, in report order.
pub const METRIC_NAMES: [&str; 8] = [
    "reconstruction_avg",
    "reconstruction_max",
    "specificity_avg",
    "specificity_max",
    "generalisation_avg",
    "generalisation_max",
    "sparse_avg",
    "sparse_max",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreReport {
    pub reconstruction: Vec<ErrorPair>,
    pub specificity: Vec<ErrorPair>,
    pub generalisation: Vec<ErrorPair>,
    pub sparse: Vec<ErrorPair>,
    pub seed: u64,
}

/// Summary statistics of one metric distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let count = values.len();
        if count == 0 {
            return Summary {
                count,
                mean: f64::NAN,
                median: f64::NAN,
                min: f64::NAN,
                max: f64::NAN,
                std: f64::NAN,
            };
        }
        let mean = values.iter().sum::<f64>() / count as f64;
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let median = if count % 2 == 1 {
            sorted[count / 2]
        } else {
            0.5 * (sorted[count / 2 - 1] + sorted[count / 2])
        };
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / count as f64;
        Summary {
            count,
            mean,
            median,
            min: sorted[0],
            max: sorted[count - 1],
            std: var.sqrt(),
        }
    }
}

impl ScoreReport {
    /// The eight value distributions, paired with [`METRIC_NAMES`].
    pub fn families(&self) -> Vec<(&'static str, Vec<f64>)> {
        let groups = [
            &self.reconstruction,
            &self.specificity,
            &self.generalisation,
            &self.sparse,
        ];
        let mut out = Vec::with_capacity(8);
        for (g, names) in groups.iter().zip(METRIC_NAMES.chunks(2)) {
            out.push((names[0], g.iter().map(|e| e.avg).collect()));
            out.push((names[1], g.iter().map(|e| e.max).collect()));
        }
        out
    }

    /// Mean of each family, in [`METRIC_NAMES`] order.
    pub fn means(&self) -> [f64; 8] {
        let mut out = [0.0; 8];
        for (o, (_, v)) in out.iter_mut().zip(self.families()) {
            *o = Summary::of(&v).mean;
        }
        out
    }

    /// One row per value: `metric,index,value`.
    pub fn long_csv(&self) -> String {
        let mut s = String::from("metric,index,value\n");
        for (name, values) in self.families() {
            for (i, v) in values.iter().enumerate() {
                let _ = writeln!(s, "{name},{i},{v:.17e}");
            }
        }
        s
    }

    /// One row per metric with summary statistics and the seed.
    pub fn summary_csv(&self) -> String {
        let mut s = String::from("metric,count,mean,median,min,max,std,seed\n");
        for (name, values) in self.families() {
            let t = Summary::of(&values);
            let _ = writeln!(
                s,
                "{name},{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{}",
                t.count, t.mean, t.median, t.min, t.max, t.std, self.seed
            );
        }
        s
    }
}

/// All eight measures: reconstruction and specificity of `factors` on the
/// whole set, generalisation and sparse reconstruction by cross-validation
/// with `trainer`.
pub fn evaluate(
    factors: &DMatrix<f64>,
    trainer: &Trainer<'_>,
    set: &ShapeSet,
    config: &EvalConfig,
) -> Result<ScoreReport> {
    config.validate()?;
    let reconstruction = reconstruction_error(factors, set)?;
    let specificity = specificity(factors, set, config.specificity_samples, config.seed)?;
    let cv = cross_validate(trainer, set, config)?;
    Ok(ScoreReport {
        reconstruction,
        specificity,
        generalisation: cv.generalisation,
        sparse: cv.sparse,
        seed: config.seed,
    })
}

/// Min-max maps each column onto `[0, 1]`; constant columns become zeros.
pub fn normalize_scores(scores: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = scores.clone();
    for mut col in out.column_iter_mut() {
        let lo = col.min();
        let hi = col.max();
        if hi > lo {
            col.apply(|v| *v = (*v - lo) / (hi - lo));
        } else {
            col.fill(0.0);
        }
    }
    out
}

/// Row with the smallest sum of normalized scores (lowest index on ties).
pub fn select_best(scores: &DMatrix<f64>) -> Option<usize> {
    let normalized = normalize_scores(scores);
    let sums: Vec<f64> = normalized.row_iter().map(|r| r.sum()).collect();
    let mut best: Option<usize> = None;
    for (i, s) in sums.iter().enumerate() {
        if best.is_none_or(|b| *s < sums[b]) {
            best = Some(i);
        }
    }
    best
}

/// One random parameter draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterDraw {
    /// Kernel bandwidth, `1 / U(1, 10)`.
    pub bandwidth: f64,
}

impl ParameterDraw {
    pub fn sample(rng: &mut impl Rng) -> Self {
        let u: f64 = rng.random_range(1.0..10.0);
        ParameterDraw { bandwidth: 1.0 / u }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub draws: Vec<ParameterDraw>,
    /// `n_r × 8` raw scores.
    pub scores: DMatrix<f64>,
    pub best: usize,
}

impl SearchResult {
    pub fn best_draw(&self) -> ParameterDraw {
        self.draws[self.best]
    }

    /// `sample,bandwidth,<metrics...>,normalized_sum`.
    pub fn csv(&self) -> String {
        let normalized = normalize_scores(&self.scores);
        let mut s = format!("sample,bandwidth,{},normalized_sum\n", METRIC_NAMES.join(","));
        for (i, d) in self.draws.iter().enumerate() {
            let _ = write!(s, "{i},{:.17e}", d.bandwidth);
            for v in self.scores.row(i).iter() {
                let _ = write!(s, ",{v:.17e}");
            }
            let _ = writeln!(s, ",{:.17e}", normalized.row(i).sum());
        }
        s
    }
}

/// Draws `samples` parameter sets, scores each with `runner` and picks the
/// best by normalized score sum.
pub fn parameter_search(
    mut runner: impl FnMut(&ParameterDraw) -> Result<[f64; 8]>,
    samples: usize,
    seed: u64,
) -> Result<SearchResult> {
    if samples == 0 {
        return Err(Error::invalid("samples", "must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<ParameterDraw> = (0..samples).map(|_| ParameterDraw::sample(&mut rng)).collect();
    let mut scores = DMatrix::zeros(samples, 8);
    for (i, d) in draws.iter().enumerate() {
        let row = runner(d)?;
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric(format!("non-finite score for sample {i}")));
        }
        scores.row_mut(i).copy_from_slice(&row);
    }
    let best = select_best(&scores).expect("at least one sample");
    Ok(SearchResult { draws, scores, best })
}
