//! Exact Gaussian functionals of a marked configuration.
//!
//! Under the Gaussian measure `P_{ξ,u}` the increments `X_{s_i,t_i}` are
//! penalized by `exp(-u_i² |X_{s_i,t_i}|² / 2)`. In one coordinate this is
//! Brownian motion `B` conditioned on `u_i B_{s_i,t_i} + Z_i = 0` with
//! independent standard normals `Z_i`; the vector `Y_i = u_i B_{s_i,t_i} + Z_i`
//! has covariance `C = I + D_u K D_u`, where `K_ij` is the overlap length of
//! intervals `i` and `j`. Everything here is expressed through `C`, its
//! Cholesky factor and the cross covariance `b_i = Cov(Y_i, B_{0,T})`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::estimator::EstimateResult;
use crate::pointprocess::{IntervalConfig, MarkedConfig};

/// Marks at or above this size trigger diagonal rescaling before factorization.
pub const RESCALE_THRESHOLD: f64 = 1e6;

/// Overlap matrix `K_ij = λ([s_i,t_i] ∩ [s_j,t_j])`.
pub fn overlap_matrix(xi: &IntervalConfig) -> DMatrix<f64> {
    let iv = xi.intervals();
    let n = iv.len();
    DMatrix::from_fn(n, n, |i, j| if i == j { iv[i].len() } else { iv[i].overlap(&iv[j]) })
}

/// Covariance `C(ξ,u) = I + D_u K D_u` of `(u_i B_{s_i,t_i} + Z_i)_i`.
pub fn covariance_matrix(xi: &IntervalConfig, marks: &[f64]) -> DMatrix<f64> {
    let k = overlap_matrix(xi);
    let n = k.nrows();
    DMatrix::from_fn(n, n, |i, j| marks[i] * marks[j] * k[(i, j)] + if i == j { 1.0 } else { 0.0 })
}

/// Factorized covariance data for one marked configuration and horizon.
#[derive(Debug, Clone)]
pub struct GaussianWorkspace {
    overlap: DMatrix<f64>,
    marks: Vec<f64>,
    /// `λ([s_i,t_i] ∩ [0,T])`
    clipped: Vec<f64>,
    /// Diagonal scaling `S`; the factor is of `S C S`.
    scale: Vec<f64>,
    chol: Cholesky<f64, Dyn>,
    /// `S b`
    scaled_cross: DVector<f64>,
    horizon: f64,
}

impl GaussianWorkspace {
    pub fn new(xi: &IntervalConfig, marks: &[f64], horizon: f64) -> Result<Self> {
        if xi.len() != marks.len() {
            return Err(Error::InvalidArgument(format!(
                "{} intervals but {} marks",
                xi.len(),
                marks.len()
            )));
        }
        if let Some(u) = marks.iter().find(|u| !(u.is_finite() && **u >= 0.0)) {
            return Err(Error::InvalidArgument(format!("marks must be finite and nonnegative, got {u}")));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
        }
        let overlap = overlap_matrix(xi);
        let n = marks.len();
        let rescale = marks.iter().any(|&u| u >= RESCALE_THRESHOLD);
        let scale: Vec<f64> = marks.iter().map(|&u| if rescale { 1.0 / u.max(1.0) } else { 1.0 }).collect();
        let su: Vec<f64> = scale.iter().zip(marks).map(|(s, u)| s * u).collect();
        let scaled = DMatrix::from_fn(n, n, |i, j| {
            su[i] * su[j] * overlap[(i, j)] + if i == j { scale[i] * scale[i] } else { 0.0 }
        });
        let chol = Cholesky::new(scaled)
            .ok_or_else(|| Error::Precondition("covariance matrix is not positive definite".into()))?;
        let clipped: Vec<f64> = xi.iter().map(|iv| iv.overlap_with(0.0, horizon)).collect();
        let scaled_cross = DVector::from_fn(n, |i, _| su[i] * clipped[i]);
        Ok(Self { overlap, marks: marks.to_vec(), clipped, scale, chol, scaled_cross, horizon })
    }

    pub fn from_marked(cfg: &MarkedConfig, horizon: f64) -> Result<Self> {
        Self::new(cfg.config(), cfg.marks(), horizon)
    }

    pub fn len(&self) -> usize {
        self.marks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.marks.is_empty()
    }

    pub fn overlap(&self) -> &DMatrix<f64> {
        &self.overlap
    }

    /// `C(ξ,u)` without scaling.
    pub fn covariance(&self) -> DMatrix<f64> {
        let n = self.len();
        let u = &self.marks;
        DMatrix::from_fn(n, n, |i, j| u[i] * u[j] * self.overlap[(i, j)] + if i == j { 1.0 } else { 0.0 })
    }

    /// `b_i = u_i λ([s_i,t_i] ∩ [0,T])`.
    pub fn cross_covariance(&self) -> DVector<f64> {
        DVector::from_fn(self.len(), |i, _| self.marks[i] * self.clipped[i])
    }

    /// `ln det C(ξ,u)`.
    pub fn log_det(&self) -> f64 {
        let l = self.chol.l_dirty();
        let scaled: f64 = (0..self.len()).map(|i| l[(i, i)].ln()).sum::<f64>() * 2.0;
        scaled - 2.0 * self.scale.iter().map(|s| s.ln()).sum::<f64>()
    }

    /// Cholesky diagonal of the (possibly rescaled) covariance.
    pub fn cholesky_diagonal(&self) -> Vec<f64> {
        let l = self.chol.l_dirty();
        (0..self.len()).map(|i| l[(i, i)] / self.scale[i]).collect()
    }

    /// `φ(ξ,u) = det C^{-d/2}`.
    pub fn phi(&self, d: u32) -> f64 {
        (-0.5 * f64::from(d) * self.log_det()).exp()
    }

    /// `bᵀ C⁻¹ b`, the variance of the projection of `B_{0,T}`.
    pub fn explained_variance(&self) -> f64 {
        let y = self.chol.solve(&self.scaled_cross);
        self.scaled_cross.dot(&y)
    }

    /// `σ²_T = (T - bᵀ C⁻¹ b) / T` via the Schur complement.
    pub fn sigma2(&self) -> f64 {
        (self.horizon - self.explained_variance()) / self.horizon
    }

    /// `σ²_T` via the determinant ratio `det [[C, b], [bᵀ, T]] / det C / T`,
    /// both determinants by LU with partial pivoting.
    pub fn sigma2_determinant_ratio(&self) -> f64 {
        let n = self.len();
        let cov = self.covariance();
        let b = self.cross_covariance();
        let bordered = DMatrix::from_fn(n + 1, n + 1, |i, j| match (i < n, j < n) {
            (true, true) => cov[(i, j)],
            (true, false) => b[i],
            (false, true) => b[j],
            (false, false) => self.horizon,
        });
        let (ln_num, sign_num) = lu_log_abs_det(bordered);
        let (ln_den, sign_den) = lu_log_abs_det(cov);
        sign_num * sign_den * (ln_num - ln_den).exp() / self.horizon
    }

    /// `E[B_{0,T} B_{s_i,t_i}]` for one coordinate under `P_{ξ,u}`.
    pub fn conditional_cross_moments(&self) -> Vec<f64> {
        let y = self.chol.solve(&self.scaled_cross);
        let n = self.len();
        let su: Vec<f64> = self.scale.iter().zip(&self.marks).map(|(s, u)| s * u).collect();
        (0..n)
            .map(|i| {
                let correction: f64 = (0..n).map(|j| y[j] * su[j] * self.overlap[(j, i)]).sum();
                self.clipped[i] - correction
            })
            .collect()
    }

    /// `∂σ²_T/∂u_i = -(2 u_i / T) E[X¹_{0,T} X¹_{s_i,t_i}]²`.
    pub fn sigma2_gradient(&self) -> Vec<f64> {
        self.conditional_cross_moments()
            .into_iter()
            .zip(&self.marks)
            .map(|(m, u)| -2.0 * u / self.horizon * m * m)
            .collect()
    }
}

/// `(ln |det A|, sign det A)` from an LU factorization.
fn lu_log_abs_det(a: DMatrix<f64>) -> (f64, f64) {
    let n = a.nrows();
    if n == 0 {
        return (0.0, 1.0);
    }
    let lu = a.lu();
    let u = lu.u();
    let mut ln = 0.0;
    let mut sign = lu.p().determinant::<f64>();
    for i in 0..n {
        let d = u[(i, i)];
        ln += d.abs().ln();
        sign *= d.signum();
    }
    (ln, sign)
}

/// `φ` for a precomputed overlap matrix; the hot path of the kernel quadratures.
pub fn phi_from_overlap(overlap: &DMatrix<f64>, marks: &[f64], d: u32) -> f64 {
    let n = marks.len();
    if n == 0 {
        return 1.0;
    }
    let cov = DMatrix::from_fn(n, n, |i, j| {
        marks[i] * marks[j] * overlap[(i, j)] + if i == j { 1.0 } else { 0.0 }
    });
    match Cholesky::new(cov) {
        Some(ch) => {
            let l = ch.l_dirty();
            let ln: f64 = (0..n).map(|i| l[(i, i)].ln()).sum::<f64>() * 2.0;
            (-0.5 * f64::from(d) * ln).exp()
        }
        // only reachable through overflow for astronomically large marks
        None => 0.0,
    }
}

/// `φ(ξ,u) = det C(ξ,u)^{-d/2}`.
pub fn phi(xi: &IntervalConfig, marks: &[f64], d: u32) -> Result<f64> {
    if xi.is_empty() {
        return Ok(1.0);
    }
    // horizon does not enter φ
    Ok(GaussianWorkspace::new(xi, marks, 1.0)?.phi(d))
}

/// Diffusion functional `σ²_T(ξ,u)` via the Schur complement.
pub fn sigma2_exact(xi: &IntervalConfig, marks: &[f64], horizon: f64) -> Result<f64> {
    Ok(GaussianWorkspace::new(xi, marks, horizon)?.sigma2())
}

/// Diffusion functional via the determinant ratio of the bordered covariance.
pub fn sigma2_determinant_ratio(xi: &IntervalConfig, marks: &[f64], horizon: f64) -> Result<f64> {
    Ok(GaussianWorkspace::new(xi, marks, horizon)?.sigma2_determinant_ratio())
}

/// Closed form for pairwise disjoint intervals inside `[0, T]`:
/// `1 - Σ τ_i / T + Σ τ_i / (τ_i u_i² + 1) / T`.
pub fn sigma2_disjoint(xi: &IntervalConfig, marks: &[f64], horizon: f64) -> Result<f64> {
    if xi.len() != marks.len() {
        return Err(Error::InvalidArgument(format!("{} intervals but {} marks", xi.len(), marks.len())));
    }
    if !xi.is_disjoint() {
        return Err(Error::Precondition("intervals overlap".into()));
    }
    if let Some(iv) = xi.iter().find(|iv| iv.s < 0.0 || iv.t > horizon) {
        return Err(Error::Precondition(format!(
            "interval ({}, {}) is not contained in [0, {horizon}]",
            iv.s, iv.t
        )));
    }
    let mut acc = horizon;
    for (iv, &u) in xi.iter().zip(marks) {
        let tau = iv.len();
        acc += tau / (tau * u * u + 1.0) - tau;
    }
    Ok(acc / horizon)
}

pub fn sigma2_grad_u(xi: &IntervalConfig, marks: &[f64], horizon: f64) -> Result<Vec<f64>> {
    Ok(GaussianWorkspace::new(xi, marks, horizon)?.sigma2_gradient())
}

/// Effective sample size below which an oracle estimate is flagged.
pub const MIN_EFFECTIVE_SAMPLES: f64 = 30.0;

/// Importance-sampling estimate of `σ²_T(ξ,u)` from raw Brownian paths.
///
/// Samples `d`-dimensional increments on the breakpoint grid `{0, s_i, t_i, T}`
/// and reweights `|X_{0,T}|² / (dT)` by `exp(-Σ u_i² |X_{s_i,t_i}|² / 2)`.
/// The standard error is the delta-method error of the self-normalized ratio.
pub fn sigma2_mc_oracle(
    xi: &IntervalConfig,
    marks: &[f64],
    horizon: f64,
    d: u32,
    n_samples: usize,
    seed: u64,
) -> Result<EstimateResult> {
    if n_samples < 1000 {
        return Err(Error::InvalidArgument(format!("oracle needs at least 1000 samples, got {n_samples}")));
    }
    if xi.len() != marks.len() {
        return Err(Error::InvalidArgument(format!("{} intervals but {} marks", xi.len(), marks.len())));
    }
    let mut grid: Vec<f64> = vec![0.0, horizon];
    for iv in xi {
        grid.push(iv.s);
        grid.push(iv.t);
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let idx = |x: f64| grid.binary_search_by(|p| p.total_cmp(&x)).expect("breakpoint on grid");
    let ends: Vec<(usize, usize)> = xi.iter().map(|iv| (idx(iv.s), idx(iv.t))).collect();
    let (i0, i_t) = (idx(0.0), idx(horizon));
    let steps: Vec<f64> = grid.windows(2).map(|w| (w[1] - w[0]).sqrt()).collect();

    let dim = d as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pos = vec![0.0; grid.len() * dim];
    let mut log_w = Vec::with_capacity(n_samples);
    let mut vals = Vec::with_capacity(n_samples);
    let norm = f64::from(d) * horizon;
    for _ in 0..n_samples {
        pos[..dim].fill(0.0);
        for (k, sd) in steps.iter().enumerate() {
            for c in 0..dim {
                let z: f64 = StandardNormal.sample(&mut rng);
                pos[(k + 1) * dim + c] = pos[k * dim + c] + sd * z;
            }
        }
        let sq = |a: usize, b: usize| -> f64 { (0..dim).map(|c| (pos[b * dim + c] - pos[a * dim + c]).powi(2)).sum() };
        let lw: f64 = ends.iter().zip(marks).map(|(&(a, b), u)| -0.5 * u * u * sq(a, b)).sum();
        log_w.push(lw);
        vals.push(sq(i0, i_t) / norm);
    }
    let max_lw = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_w.iter().map(|l| (l - max_lw).exp()).collect();
    let sw: f64 = w.iter().sum();
    let sw2: f64 = w.iter().map(|x| x * x).sum();
    let est = w.iter().zip(&vals).map(|(a, b)| a * b).sum::<f64>() / sw;
    let var = w.iter().zip(&vals).map(|(a, b)| (a * (b - est)).powi(2)).sum::<f64>() / (sw * sw);
    let ess = sw * sw / sw2;
    let mut result = EstimateResult::new(est, var.sqrt(), n_samples, seed, "importance-sampling-oracle");
    result.insert_meta("T", horizon);
    result.insert_meta("d", d);
    result.insert_meta("n_samples", n_samples);
    result.insert_meta("ess", ess);
    result.insert_meta("low_ess_warning", ess < MIN_EFFECTIVE_SAMPLES);
    Ok(result)
}

/// `E[∏ e^{-X_i²/2}] = det(I + C)^{-1/2}` for a centered Gaussian vector with covariance `C`.
pub fn gaussian_product_expectation(cov: &DMatrix<f64>) -> f64 {
    let n = cov.nrows();
    let shifted = cov + DMatrix::<f64>::identity(n, n);
    let (ln, _) = lu_log_abs_det(shifted);
    (-0.5 * ln).exp()
}

/// Squared residual norms `dist(X_k, span{X_1..X_{k-1}})²` by modified
/// Gram–Schmidt in the inner product `⟨x, y⟩ = xᵀ C y`. Their product is `det C`.
pub fn gram_schmidt_residuals(cov: &DMatrix<f64>) -> Vec<f64> {
    let n = cov.nrows();
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(n);
    let mut norms = Vec::with_capacity(n);
    for k in 0..n {
        let mut v = DVector::<f64>::zeros(n);
        v[k] = 1.0;
        for (q, &qq) in basis.iter().zip(&norms) {
            let proj = (q.transpose() * cov * &v)[(0, 0)] / qq;
            v -= q * proj;
        }
        let vv = (v.transpose() * cov * &v)[(0, 0)];
        basis.push(v);
        norms.push(vv);
    }
    norms
}
