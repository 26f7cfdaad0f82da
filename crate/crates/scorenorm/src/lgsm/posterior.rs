//! Hidden-variable posterior and the closed-form marginal likelihood.
//!
//! The stacked hidden vector z holds x_1..x_K then y_1..y_L. Conditioning on
//! the observed scores couples the a-priori independent hidden variables
//! (explaining away); the posterior is Gaussian with precision
//!
//! ```text
//! Lambda_z = [ A  C ]    A_ii = I + sum_j a_ij a_ij'/v_ij   (block diagonal)
//!            [ C' B ]    B_jj = I + sum_i b_ij b_ij'/v_ij   (block diagonal)
//!                        C_ij = a_ij b_ij'/v_ij
//! ```
//!
//! with natural parameter gamma built from the score residuals. Sums run over
//! observed cells only. The marginal log-likelihood of the scores follows
//! from evaluating joint over posterior at z = 0:
//! `log P(S|H) = data_term + 1/2 mu_z'Lambda_z mu_z - 1/2 log|Lambda_z|`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::data::{validate_pair, LabelMatrix, ScoreMatrix};
use crate::error::{Error, Result};
use crate::lgsm::LgsmParams;

/// Jitter added to the precision diagonal on a failed factorization, once.
const CHOLESKY_JITTER: f64 = 1e-10;

/// Gaussian posterior over the stacked hidden variables for one score grid.
#[derive(Debug, Clone)]
pub struct PosteriorSummary {
    pub d: usize,
    pub k: usize,
    pub l: usize,
    /// Posterior precision Lambda_z, dimension D*(K+L).
    pub precision: DMatrix<f64>,
    /// Natural parameter (gamma_x stacked over gamma_y).
    pub gamma: DVector<f64>,
    /// Posterior mean mu_z, the solution of Lambda_z mu_z = gamma.
    pub mean: DVector<f64>,
    /// Sum of per-cell Gaussian log-densities evaluated at z = 0.
    pub data_term: f64,
    pub log_det: f64,
    chol: Cholesky<f64, Dyn>,
}

impl PosteriorSummary {
    /// Marginal log-likelihood of the observed scores under the grid labels.
    pub fn log_marginal(&self) -> f64 {
        finish_log_marginal(self.data_term, &self.gamma, &self.mean, self.log_det)
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(rhs)
    }

    /// First and second posterior moments, including cross-moments.
    pub fn moments(&self) -> PosteriorMoments {
        let covariance = self.chol.inverse();
        PosteriorMoments { d: self.d, k: self.k, mean: self.mean.clone(), covariance }
    }
}

pub(super) fn finish_log_marginal(
    data_term: f64,
    gamma: &DVector<f64>,
    mean: &DVector<f64>,
    log_det: f64,
) -> f64 {
    data_term + 0.5 * gamma.dot(mean) - 0.5 * log_det
}

/// Posterior means and covariance blocks per hidden variable.
#[derive(Debug, Clone)]
pub struct PosteriorMoments {
    d: usize,
    k: usize,
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl PosteriorMoments {
    pub fn mean_x(&self, i: usize) -> DVector<f64> {
        self.mean.rows(i * self.d, self.d).into_owned()
    }

    pub fn mean_y(&self, j: usize) -> DVector<f64> {
        self.mean.rows((self.k + j) * self.d, self.d).into_owned()
    }

    fn cov_block(&self, bi: usize, bj: usize) -> DMatrix<f64> {
        self.covariance.view((bi * self.d, bj * self.d), (self.d, self.d)).into_owned()
    }

    /// E[x_i x_i'] = Cov(x_i) + E[x_i]E[x_i]'.
    pub fn second_xx(&self, i: usize) -> DMatrix<f64> {
        let m = self.mean_x(i);
        self.cov_block(i, i) + &m * m.transpose()
    }

    pub fn second_yy(&self, j: usize) -> DMatrix<f64> {
        let m = self.mean_y(j);
        self.cov_block(self.k + j, self.k + j) + &m * m.transpose()
    }

    /// E[x_i y_j'] = Cov(x_i, y_j) + E[x_i]E[y_j]'.
    pub fn second_xy(&self, i: usize, j: usize) -> DMatrix<f64> {
        let mx = self.mean_x(i);
        let my = self.mean_y(j);
        self.cov_block(i, self.k + j) + &mx * my.transpose()
    }
}

pub(super) fn build_precision(
    params: &LgsmParams,
    scores: &ScoreMatrix,
    labels: &LabelMatrix,
) -> DMatrix<f64> {
    let d = params.d;
    let k = scores.rows();
    let l = scores.cols();
    let n = d * (k + l);
    let mut lam = DMatrix::<f64>::identity(n, n);
    for i in 0..k {
        for j in 0..l {
            let Some(h) = labels.get(i, j).hypothesis() else { continue };
            let a = params.alpha(h);
            let b = params.beta(h);
            let v = params.var(h);
            let xo = i * d;
            let yo = (k + j) * d;
            for p in 0..d {
                for q in 0..d {
                    lam[(xo + p, xo + q)] += a[p] * a[q] / v;
                    lam[(yo + p, yo + q)] += b[p] * b[q] / v;
                    lam[(xo + p, yo + q)] += a[p] * b[q] / v;
                    lam[(yo + q, xo + p)] += a[p] * b[q] / v;
                }
            }
        }
    }
    lam
}

pub(super) fn build_gamma_and_data_term(
    params: &LgsmParams,
    scores: &ScoreMatrix,
    labels: &LabelMatrix,
) -> (DVector<f64>, f64) {
    let d = params.d;
    let k = scores.rows();
    let l = scores.cols();
    let mut gamma = DVector::<f64>::zeros(d * (k + l));
    let mut data_term = 0.0;
    for i in 0..k {
        for j in 0..l {
            let Some(h) = labels.get(i, j).hypothesis() else { continue };
            let a = params.alpha(h);
            let b = params.beta(h);
            let v = params.var(h);
            let r = scores.get(i, j) - params.mu(h);
            for p in 0..d {
                gamma[i * d + p] += r * a[p] / v;
                gamma[(k + j) * d + p] += r * b[p] / v;
            }
            data_term += -0.5 * (r * r / v + (2.0 * std::f64::consts::PI * v).ln());
        }
    }
    (gamma, data_term)
}

pub(super) fn factorize(mut precision: DMatrix<f64>) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let n = precision.nrows();
    let chol = match Cholesky::new(precision.clone()) {
        Some(c) => c,
        None => {
            for i in 0..n {
                precision[(i, i)] += CHOLESKY_JITTER;
            }
            Cholesky::new(precision).ok_or_else(|| {
                Error::Numerical(
                    "posterior precision is not positive definite even after jitter; \
                     check model variances"
                        .into(),
                )
            })?
        }
    };
    let log_det = 2.0 * chol.l_dirty().diagonal().iter().take(n).map(|x| x.ln()).sum::<f64>();
    Ok((chol, log_det))
}

/// Builds the hidden-variable posterior for one labeled score grid.
pub fn build_posterior(
    params: &LgsmParams,
    scores: &ScoreMatrix,
    labels: &LabelMatrix,
) -> Result<PosteriorSummary> {
    params.validate()?;
    validate_pair(scores, labels)?;
    let precision = build_precision(params, scores, labels);
    let (gamma, data_term) = build_gamma_and_data_term(params, scores, labels);
    let (chol, log_det) = factorize(precision.clone())?;
    let mean = chol.solve(&gamma);
    Ok(PosteriorSummary {
        d: params.d,
        k: scores.rows(),
        l: scores.cols(),
        precision,
        gamma,
        mean,
        data_term,
        log_det,
        chol,
    })
}

/// Marginal log-likelihood of the observed scores given the grid labels.
pub fn log_marginal(
    params: &LgsmParams,
    scores: &ScoreMatrix,
    labels: &LabelMatrix,
) -> Result<f64> {
    Ok(build_posterior(params, scores, labels)?.log_marginal())
}
