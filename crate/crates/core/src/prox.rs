//! Proximal operators for the factor and coefficient norms.
//!
//! `prox_{sθ}(y) = argmin_x ½‖x − y‖² + s·θ(x)`. The closed forms (soft
//! thresholding, block soft thresholding, grouped ℓ1/ℓ∞) are exact. The
//! proximal map of the full factor norm, which contains the non-separable
//! graph term `λ_G‖Ez‖₂`, is computed by dual forward–backward splitting.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::graph::IncidenceOperator;

/// Weights of the factor norm `‖·‖_Φ`, the coefficient norm `‖·‖_A` and the
/// data-versus-regularizer trade-off `λ`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RegularizerWeights {
    pub lambda: f64,
    pub lambda_a: f64,
    pub lambda_1: f64,
    pub lambda_2: f64,
    pub lambda_inf: f64,
    pub lambda_g: f64,
}

impl RegularizerWeights {
    /// Default weights for `N` vertices, `K` shapes, `M` factors and `|E|` edges:
    /// `λ = 64·3NK/M`, `λ_G = 1/√(3|E|)`, `λ₁ = λ₂ = 1/√(3N)`, `λ_∞ = 2/√N`,
    /// `λ_A = 10⁻⁴/√K`. With no edges `λ_G` is 0.
    pub fn defaults(vertices: usize, shapes: usize, factors: usize, edges: usize) -> Self {
        let n = vertices as f64;
        let k = shapes as f64;
        let m = factors as f64;
        RegularizerWeights {
            lambda: 64.0 * 3.0 * n * k / m,
            lambda_a: 1e-4 / k.sqrt(),
            lambda_1: 1.0 / (3.0 * n).sqrt(),
            lambda_2: 1.0 / (3.0 * n).sqrt(),
            lambda_inf: 2.0 / n.sqrt(),
            lambda_g: if edges == 0 {
                0.0
            } else {
                1.0 / (3.0 * edges as f64).sqrt()
            },
        }
    }

    /// Defaults for factorizing the `3N x 3N` kernel matrix: the shape count in
    /// the `λ` and `λ_A` rules is replaced by the column count `3N`.
    pub fn kernelized_defaults(vertices: usize, factors: usize, edges: usize) -> Self {
        Self::defaults(vertices, 3 * vertices, factors, edges)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            ("lambda", self.lambda),
            ("lambda_a", self.lambda_a),
            ("lambda_1", self.lambda_1),
            ("lambda_2", self.lambda_2),
            ("lambda_inf", self.lambda_inf),
            ("lambda_g", self.lambda_g),
        ];
        for (name, v) in all {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, format!("{v} must be finite and >= 0")));
            }
        }
        if !(self.lambda > 0.0) {
            return Err(Error::invalid("lambda", "must be positive"));
        }
        if !(self.lambda_a > 0.0) {
            return Err(Error::invalid("lambda_a", "must be positive"));
        }
        if self.lambda_1 + self.lambda_2 + self.lambda_inf + self.lambda_g <= 0.0 {
            return Err(Error::invalid(
                "lambda_1",
                "at least one of lambda_1, lambda_2, lambda_inf, lambda_g must be positive",
            ));
        }
        Ok(())
    }

    /// `‖z‖_Φ = λ₁‖z‖₁ + λ₂‖z‖₂ + λ_∞‖z‖₁,∞ + λ_G‖Ez‖₂`.
    pub fn phi_norm(&self, z: &[f64], e: &IncidenceOperator) -> f64 {
        let mut v = self.lambda_1 * l1_norm(z) + self.lambda_2 * l2_norm(z) + self.lambda_inf * l1_linf_norm(z);
        if self.lambda_g > 0.0 && !e.is_empty() {
            v += self.lambda_g * e.norm_of_image(z);
        }
        v
    }

    /// `‖z‖_A = λ_A‖z‖₂`.
    pub fn a_norm(&self, z: &[f64]) -> f64 {
        self.lambda_a * l2_norm(z)
    }
}

/// Parameters of the dual forward–backward inner solver.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProxConfig {
    /// Dual step size, in `(0, 2)`.
    pub gamma: f64,
    /// Relaxation parameter `β = (1 + epsilon) / 2`.
    pub epsilon: f64,
    pub max_iterations: usize,
    /// Early exit when successive primal iterates differ by less than this in ∞-norm.
    pub change_tolerance: f64,
}

impl Default for ProxConfig {
    fn default() -> Self {
        ProxConfig {
            gamma: 1.999,
            epsilon: 1e-4,
            max_iterations: 20,
            change_tolerance: 1e-8,
        }
    }
}

impl ProxConfig {
    pub fn relaxation(&self) -> f64 {
        (1.0 + self.epsilon) / 2.0
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 2.0) {
            return Err(Error::invalid("prox.gamma", "must lie in (0, 2)"));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::invalid("prox.epsilon", "must lie in (0, 1)"));
        }
        if self.max_iterations == 0 {
            return Err(Error::invalid("prox.max_iterations", "must be at least 1"));
        }
        if !(self.change_tolerance >= 0.0) {
            return Err(Error::invalid("prox.change_tolerance", "must be >= 0"));
        }
        Ok(())
    }
}

/// Inner-loop diagnostics of one [`prox_phi_norm_traced`] call.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProxTrace {
    pub iterations: usize,
    pub converged: bool,
    /// ∞-norm change of the primal iterate per inner iteration.
    pub changes: Vec<f64>,
}

pub fn l1_norm(z: &[f64]) -> f64 {
    z.iter().map(|v| v.abs()).sum()
}

pub fn l2_norm(z: &[f64]) -> f64 {
    z.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Sum over vertices of the largest coordinate magnitude, with groups
/// `{i, i + N, i + 2N}`.
pub fn l1_linf_norm(z: &[f64]) -> f64 {
    let n = z.len() / 3;
    (0..n)
        .map(|i| z[i].abs().max(z[i + n].abs()).max(z[i + 2 * n].abs()))
        .sum()
}

/// `(y − s)₊ − (−y − s)₊`, elementwise.
pub fn soft_threshold(y: &DVector<f64>, s: f64) -> DVector<f64> {
    let mut out = y.clone();
    soft_threshold_in_place(out.as_mut_slice(), s);
    out
}

pub(crate) fn soft_threshold_in_place(y: &mut [f64], s: f64) {
    if s <= 0.0 {
        return;
    }
    for v in y {
        *v = if *v > s {
            *v - s
        } else if *v < -s {
            *v + s
        } else {
            0.0
        };
    }
}

/// `(1 − s/‖y‖₂)₊ · y`; zero for `y = 0`.
pub fn block_soft_threshold(y: &DVector<f64>, s: f64) -> DVector<f64> {
    let mut out = y.clone();
    block_soft_threshold_in_place(out.as_mut_slice(), s);
    out
}

pub(crate) fn block_soft_threshold_in_place(y: &mut [f64], s: f64) {
    if s <= 0.0 {
        return;
    }
    let norm = l2_norm(y);
    let f = if norm > s { 1.0 - s / norm } else { 0.0 };
    y.iter_mut().for_each(|v| *v *= f);
}

/// Euclidean projection onto `{x : ‖x‖₂ ≤ r}`.
pub fn project_l2_ball(y: &DVector<f64>, r: f64) -> DVector<f64> {
    let norm = y.norm();
    if norm <= r {
        y.clone()
    } else {
        y * (r / norm)
    }
}

/// Euclidean projection onto `{x : ‖x‖₁ ≤ r}` by the sort-based simplex
/// projection of the magnitudes.
pub fn project_l1_ball(y: &DVector<f64>, r: f64) -> Result<DVector<f64>> {
    if !(r > 0.0) {
        return Err(Error::invalid("radius", format!("{r} must be positive")));
    }
    let mut out = y.clone();
    project_l1_ball_in_place(out.as_mut_slice(), r);
    Ok(out)
}

fn project_l1_ball_in_place(y: &mut [f64], r: f64) {
    if l1_norm(y) <= r {
        return;
    }
    let tau = simplex_threshold(y, r);
    for v in y {
        let m = (v.abs() - tau).max(0.0);
        *v = m.copysign(*v);
    }
}

/// Threshold `τ` such that `Σ (|y_i| − τ)₊ = r`, assuming `‖y‖₁ > r`.
fn simplex_threshold(y: &[f64], r: f64) -> f64 {
    let mut mags: Vec<f64> = y.iter().map(|v| v.abs()).collect();
    mags.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut tau = 0.0;
    for (k, &u) in mags.iter().enumerate() {
        cumulative += u;
        let t = (cumulative - r) / (k + 1) as f64;
        if u > t {
            tau = t;
        } else {
            break;
        }
    }
    tau
}

/// Projection of a 3-vector onto the ℓ1 ball of radius `r > 0`, unrolled.
#[inline]
fn project_l1_ball3(g: [f64; 3], r: f64) -> [f64; 3] {
    let a = [g[0].abs(), g[1].abs(), g[2].abs()];
    if a[0] + a[1] + a[2] <= r {
        return g;
    }
    let mut s = a;
    // Sort descending.
    if s[0] < s[1] {
        s.swap(0, 1);
    }
    if s[1] < s[2] {
        s.swap(1, 2);
    }
    if s[0] < s[1] {
        s.swap(0, 1);
    }
    let mut tau = s[0] - r;
    let t2 = (s[0] + s[1] - r) / 2.0;
    if s[1] > t2 {
        tau = t2;
        let t3 = (s[0] + s[1] + s[2] - r) / 3.0;
        if s[2] > t3 {
            tau = t3;
        }
    }
    [
        (a[0] - tau).max(0.0).copysign(g[0]),
        (a[1] - tau).max(0.0).copysign(g[1]),
        (a[2] - tau).max(0.0).copysign(g[2]),
    ]
}

/// Prox of `s·Σ_g ‖y_g‖_∞` over the vertex groups `{i, i + N, i + 2N}`:
/// `y_g − proj_{‖·‖₁ ≤ s}(y_g)` per group.
pub fn prox_l1_linf_group(y: &DVector<f64>, s: f64) -> Result<DVector<f64>> {
    if y.len() % 3 != 0 {
        return Err(Error::invalid("vector", "length is not a multiple of 3"));
    }
    let mut out = y.clone();
    prox_l1_linf_group_in_place(out.as_mut_slice(), s);
    Ok(out)
}

pub(crate) fn prox_l1_linf_group_in_place(y: &mut [f64], s: f64) {
    if s <= 0.0 {
        return;
    }
    let n = y.len() / 3;
    for i in 0..n {
        let g = [y[i], y[i + n], y[i + 2 * n]];
        let p = project_l1_ball3(g, s);
        y[i] = g[0] - p[0];
        y[i + n] = g[1] - p[1];
        y[i + 2 * n] = g[2] - p[2];
    }
}

/// Prox of `scale·‖·‖_A`, i.e. block soft thresholding at `scale·λ_A`.
pub fn prox_a_norm(z: &DVector<f64>, scale: f64, lambda_a: f64) -> DVector<f64> {
    block_soft_threshold(z, scale * lambda_a)
}

/// Prox of `scale·(λ₁‖·‖₁ + λ_∞‖·‖₁,∞ + λ₂‖·‖₂)`, evaluated in that order by
/// composition.
pub(crate) fn prox_separable_in_place(x: &mut [f64], scale: f64, w: &RegularizerWeights) {
    soft_threshold_in_place(x, scale * w.lambda_1);
    prox_l1_linf_group_in_place(x, scale * w.lambda_inf);
    block_soft_threshold_in_place(x, scale * w.lambda_2);
}

/// Proximal objective `½‖x − z‖² + scale·‖x‖_Φ`.
pub fn phi_prox_objective(
    x: &[f64],
    z: &[f64],
    scale: f64,
    weights: &RegularizerWeights,
    e: &IncidenceOperator,
) -> f64 {
    let d: f64 = x.iter().zip(z).map(|(a, b)| (a - b).powi(2)).sum();
    0.5 * d + scale * weights.phi_norm(x, e)
}

/// Prox of `scale·‖·‖_Φ` by dual forward–backward splitting. Returns the last
/// iterate if the inner loop has not converged after `cfg.max_iterations`.
pub fn prox_phi_norm(
    z: &DVector<f64>,
    scale: f64,
    weights: &RegularizerWeights,
    e: &IncidenceOperator,
    cfg: &ProxConfig,
) -> Result<DVector<f64>> {
    prox_phi_norm_traced(z, scale, weights, e, cfg).map(|(x, _)| x)
}

pub fn prox_phi_norm_traced(
    z: &DVector<f64>,
    scale: f64,
    weights: &RegularizerWeights,
    e: &IncidenceOperator,
    cfg: &ProxConfig,
) -> Result<(DVector<f64>, ProxTrace)> {
    if z.len() != e.cols() {
        return Err(Error::dim("prox input", e.cols(), z.len()));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("prox input is not finite"));
    }
    if !(scale >= 0.0 && scale.is_finite()) {
        return Err(Error::numeric(format!("prox scale {scale}")));
    }
    let mut x = z.clone();
    let mut trace = ProxTrace::default();
    if scale == 0.0 {
        trace.converged = true;
        return Ok((x, trace));
    }

    let lambda_g = scale * weights.lambda_g;
    let fro = e.frobenius_norm();
    if lambda_g == 0.0 || fro == 0.0 {
        prox_separable_in_place(x.as_mut_slice(), scale, weights);
        trace.converged = true;
        trace.iterations = 1;
        return Ok((x, trace));
    }

    // ‖Ex‖ is homogeneous: move ‖E‖_F into the weight so the operator has unit norm.
    let e_unit = e.scaled(1.0 / fro);
    let lambda_g = lambda_g * fro;
    let gamma = cfg.gamma;
    let beta = cfg.relaxation();

    let dim = z.len();
    let rows = e_unit.rows();
    let mut v = vec![0.0; rows];
    let mut etv = vec![0.0; dim];
    let mut ex = vec![0.0; rows];
    let mut w = vec![0.0; rows];
    let mut prev = vec![0.0; dim];

    for it in 0..cfg.max_iterations {
        prev.copy_from_slice(x.as_slice());

        e_unit.apply_transpose_into(&v, &mut etv);
        for ((xi, zi), ti) in x.iter_mut().zip(z.iter()).zip(&etv) {
            *xi = zi - ti;
        }
        prox_separable_in_place(x.as_mut_slice(), scale, weights);

        // v ← v + βγ(Ex − prox_{(λ_G/γ)‖·‖₂}((v + γEx)/γ))
        e_unit.apply_into(x.as_slice(), &mut ex);
        for ((wi, vi), ei) in w.iter_mut().zip(&v).zip(&ex) {
            *wi = (vi + gamma * ei) / gamma;
        }
        block_soft_threshold_in_place(&mut w, lambda_g / gamma);
        for ((vi, ei), wi) in v.iter_mut().zip(&ex).zip(&w) {
            *vi += beta * gamma * (ei - wi);
        }

        let change = x.iter().zip(&prev).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        trace.changes.push(change);
        trace.iterations = it + 1;
        if it > 0 && change < cfg.change_tolerance {
            trace.converged = true;
            break;
        }
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("prox iterate diverged"));
    }
    if !trace.converged {
        log::trace!(
            "prox_phi_norm stopped after {} iterations, last change {:e}",
            trace.iterations,
            trace.changes.last().copied().unwrap_or(0.0)
        );
    }
    Ok((x, trace))
}
