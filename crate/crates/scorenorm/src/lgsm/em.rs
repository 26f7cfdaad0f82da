//! EM training with minimum-divergence re-standardization.
//!
//! The E-step collects, per class, the expected regression moments of each
//! score on `[1, x_i, y_j]`; the M-step solves the resulting normal equations
//! jointly for (mu_h, alpha_h, beta_h) and updates var_h as the expected
//! residual variance. The minimum-divergence step whitens the empirical
//! posterior second moments of the hidden variables, absorbing the symmetric
//! square root into the loading vectors. Both updates never decrease the
//! training likelihood; at convergence the empirical moments are identity and
//! the step becomes a no-op.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{Hypothesis, LabelMatrix, ScoreMatrix};
use crate::error::{Error, Result};
use crate::lgsm::posterior::build_posterior;
use crate::lgsm::{LgsmParams, VAR_FLOOR};
use crate::par;

/// Per-class accumulators for the expected least-squares regression.
#[derive(Debug, Clone)]
pub struct ClassStats {
    /// Observed cell count.
    pub n: usize,
    pub score_sum: f64,
    pub score_sq_sum: f64,
    /// Sum of E[phi phi'] with phi = [1, x_i, y_j], dimension 1+2D.
    pub design: DMatrix<f64>,
    /// Sum of s_ij E[phi].
    pub response: DVector<f64>,
}

impl ClassStats {
    fn zeros(d: usize) -> Self {
        let q = 1 + 2 * d;
        ClassStats {
            n: 0,
            score_sum: 0.0,
            score_sq_sum: 0.0,
            design: DMatrix::zeros(q, q),
            response: DVector::zeros(q),
        }
    }

    fn merge(&mut self, other: &ClassStats) {
        self.n += other.n;
        self.score_sum += other.score_sum;
        self.score_sq_sum += other.score_sq_sum;
        self.design += &other.design;
        self.response += &other.response;
    }
}

/// Sufficient statistics produced by the E-step, additive across matrices.
#[derive(Debug, Clone)]
pub struct SufficientStats {
    pub d: usize,
    pub tar: ClassStats,
    pub non: ClassStats,
    /// Sum over rows of E[x_i x_i'].
    pub xx_sum: DMatrix<f64>,
    /// Sum over columns of E[y_j y_j'].
    pub yy_sum: DMatrix<f64>,
    pub x_count: usize,
    pub y_count: usize,
    /// Marginal log-likelihood of the data the stats were collected from.
    pub loglik: f64,
}

impl SufficientStats {
    pub fn zeros(d: usize) -> Self {
        SufficientStats {
            d,
            tar: ClassStats::zeros(d),
            non: ClassStats::zeros(d),
            xx_sum: DMatrix::zeros(d, d),
            yy_sum: DMatrix::zeros(d, d),
            x_count: 0,
            y_count: 0,
            loglik: 0.0,
        }
    }

    pub fn class(&self, h: Hypothesis) -> &ClassStats {
        match h {
            Hypothesis::Target => &self.tar,
            Hypothesis::NonTarget => &self.non,
        }
    }

    pub fn merge(&mut self, other: &SufficientStats) {
        assert_eq!(self.d, other.d, "cannot merge stats of different hidden dimension");
        self.tar.merge(&other.tar);
        self.non.merge(&other.non);
        self.xx_sum += &other.xx_sum;
        self.yy_sum += &other.yy_sum;
        self.x_count += other.x_count;
        self.y_count += other.y_count;
        self.loglik += other.loglik;
    }

    /// Empirical posterior second moment of the row hidden variables.
    pub fn empirical_xx(&self) -> DMatrix<f64> {
        &self.xx_sum / self.x_count as f64
    }

    pub fn empirical_yy(&self) -> DMatrix<f64> {
        &self.yy_sum / self.y_count as f64
    }
}

/// E-step over one labeled score grid.
pub fn e_step(
    params: &LgsmParams,
    scores: &ScoreMatrix,
    labels: &LabelMatrix,
) -> Result<SufficientStats> {
    let d = params.d;
    let q = 1 + 2 * d;
    let post = build_posterior(params, scores, labels)?;
    let moments = post.moments();
    let mut stats = SufficientStats::zeros(d);
    stats.loglik = post.log_marginal();
    let k = scores.rows();
    let l = scores.cols();
    stats.x_count = k;
    stats.y_count = l;
    for i in 0..k {
        stats.xx_sum += moments.second_xx(i);
    }
    for j in 0..l {
        stats.yy_sum += moments.second_yy(j);
    }
    let mean_x: Vec<DVector<f64>> = (0..k).map(|i| moments.mean_x(i)).collect();
    let mean_y: Vec<DVector<f64>> = (0..l).map(|j| moments.mean_y(j)).collect();
    let xx: Vec<DMatrix<f64>> = (0..k).map(|i| moments.second_xx(i)).collect();
    let yy: Vec<DMatrix<f64>> = (0..l).map(|j| moments.second_yy(j)).collect();
    for i in 0..k {
        for j in 0..l {
            let Some(h) = labels.get(i, j).hypothesis() else { continue };
            let s = scores.get(i, j);
            let cls = match h {
                Hypothesis::Target => &mut stats.tar,
                Hypothesis::NonTarget => &mut stats.non,
            };
            cls.n += 1;
            cls.score_sum += s;
            cls.score_sq_sum += s * s;
            // design block layout: [1 | x | y]
            let mut g = DMatrix::<f64>::zeros(q, q);
            g[(0, 0)] = 1.0;
            for p in 0..d {
                g[(0, 1 + p)] = mean_x[i][p];
                g[(1 + p, 0)] = mean_x[i][p];
                g[(0, 1 + d + p)] = mean_y[j][p];
                g[(1 + d + p, 0)] = mean_y[j][p];
            }
            let exy = moments.second_xy(i, j);
            for p in 0..d {
                for r in 0..d {
                    g[(1 + p, 1 + r)] = xx[i][(p, r)];
                    g[(1 + d + p, 1 + d + r)] = yy[j][(p, r)];
                    g[(1 + p, 1 + d + r)] = exy[(p, r)];
                    g[(1 + d + r, 1 + p)] = exy[(p, r)];
                }
            }
            cls.design += &g;
            for p in 0..d {
                cls.response[1 + p] += s * mean_x[i][p];
                cls.response[1 + d + p] += s * mean_y[j][p];
            }
            cls.response[0] += s;
        }
    }
    Ok(stats)
}

/// E-step over a whole collection, parallel over matrices with a
/// deterministic in-order reduction.
pub fn accumulate_stats(
    params: &LgsmParams,
    matrices: &[(ScoreMatrix, LabelMatrix)],
) -> Result<SufficientStats> {
    let partials = par::map_collect(matrices, |(s, h)| e_step(params, s, h));
    let mut total = SufficientStats::zeros(params.d);
    for p in partials {
        total.merge(&p?);
    }
    Ok(total)
}

fn class_weights(params: &LgsmParams, h: Hypothesis) -> DVector<f64> {
    let d = params.d;
    let mut w = DVector::zeros(1 + 2 * d);
    w[0] = params.mu(h);
    for p in 0..d {
        w[1 + p] = params.alpha(h)[p];
        w[1 + d + p] = params.beta(h)[p];
    }
    w
}

/// Expected complete-data log-likelihood terms that depend on the trainable
/// parameters, evaluated against frozen posterior moments. Used to verify
/// that the M-step never decreases the EM objective.
pub fn expected_complete_ll(params: &LgsmParams, stats: &SufficientStats) -> f64 {
    let mut total = 0.0;
    for h in [Hypothesis::Target, Hypothesis::NonTarget] {
        let cls = stats.class(h);
        if cls.n == 0 {
            continue;
        }
        let w = class_weights(params, h);
        let v = params.var(h);
        let rss = cls.score_sq_sum - 2.0 * w.dot(&cls.response) + (w.transpose() * &cls.design * &w)[0];
        total += -0.5 * cls.n as f64 * (2.0 * std::f64::consts::PI * v).ln() - rss / (2.0 * v);
    }
    total
}

/// M-step: per class, solves the expected least-squares normal equations for
/// (mu_h, alpha_h, beta_h) and sets var_h to the expected residual variance.
/// Classes with no observed cells keep their previous parameters.
pub fn m_step(params: &LgsmParams, stats: &SufficientStats) -> Result<LgsmParams> {
    let d = params.d;
    let mut out = params.clone();
    for h in [Hypothesis::Target, Hypothesis::NonTarget] {
        let cls = stats.class(h);
        if cls.n == 0 {
            continue;
        }
        let w = solve_normal_equations(&cls.design, &cls.response)?;
        let rss = cls.score_sq_sum - 2.0 * w.dot(&cls.response) + (w.transpose() * &cls.design * &w)[0];
        let var = (rss / cls.n as f64).max(VAR_FLOOR);
        let alpha: Vec<f64> = (0..d).map(|p| w[1 + p]).collect();
        let beta: Vec<f64> = (0..d).map(|p| w[1 + d + p]).collect();
        match h {
            Hypothesis::Target => {
                out.mu_tar = w[0];
                out.var_tar = var;
                out.alpha_tar = alpha;
                out.beta_tar = beta;
            }
            Hypothesis::NonTarget => {
                out.mu_non = w[0];
                out.var_non = var;
                out.alpha_non = alpha;
                out.beta_non = beta;
            }
        }
    }
    out.validate()?;
    Ok(out)
}

/// Solves design * w = response; on a singular system falls back to a small
/// ridge proportional to the design trace.
fn solve_normal_equations(design: &DMatrix<f64>, response: &DVector<f64>) -> Result<DVector<f64>> {
    if let Some(chol) = nalgebra::Cholesky::new(design.clone()) {
        return Ok(chol.solve(response));
    }
    let q = design.nrows();
    let ridge = 1e-8 * design.trace().max(1.0) / q as f64;
    let mut reg = design.clone();
    for i in 0..q {
        reg[(i, i)] += ridge;
    }
    nalgebra::Cholesky::new(reg)
        .map(|c| c.solve(response))
        .ok_or_else(|| Error::Numerical("singular M-step normal equations".into()))
}

fn symmetric_sqrt(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let eig = m.clone().symmetric_eigen();
    if eig.eigenvalues.iter().any(|&v| v <= 0.0) {
        return None;
    }
    let sqrt_vals = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.sqrt()));
    Some(&eig.eigenvectors * sqrt_vals * eig.eigenvectors.transpose())
}

/// Minimum-divergence step: whitens the empirical posterior second moments of
/// the row and column hidden variables, absorbing the symmetric square roots
/// into the loading vectors. Skips (with a warning) on a non-positive
/// empirical moment.
pub fn min_div_step(params: &LgsmParams, stats: &SufficientStats) -> Result<LgsmParams> {
    if params.d == 0 {
        return Ok(params.clone());
    }
    let rx = stats.empirical_xx();
    let ry = stats.empirical_yy();
    let (Some(sx), Some(sy)) = (symmetric_sqrt(&rx), symmetric_sqrt(&ry)) else {
        log::warn!("minimum-divergence step skipped: empirical posterior moment not positive definite");
        return Ok(params.clone());
    };
    let apply = |s: &DMatrix<f64>, v: &[f64]| -> Vec<f64> {
        (s * DVector::from_column_slice(v)).iter().copied().collect()
    };
    let mut out = params.clone();
    out.alpha_tar = apply(&sx, &params.alpha_tar);
    out.alpha_non = apply(&sx, &params.alpha_non);
    out.beta_tar = apply(&sy, &params.beta_tar);
    out.beta_non = apply(&sy, &params.beta_non);
    Ok(out)
}

/// Training configuration.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct EmConfig {
    /// Relative objective change below which training stops.
    pub tol: f64,
    pub max_iters: usize,
    pub seed: u64,
    /// Loading init scale as a fraction of the class standard deviation.
    pub init_scale: f64,
    pub min_div: bool,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig { tol: 1e-8, max_iters: 500, seed: 0, init_scale: 0.1, min_div: true }
    }
}

/// Per-iteration objective values of a training run.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct TrainTrace {
    pub objectives: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

fn initial_params(
    matrices: &[(ScoreMatrix, LabelMatrix)],
    d: usize,
    config: &EmConfig,
) -> Result<LgsmParams> {
    let mut n = [0usize; 2];
    let mut sum = [0.0f64; 2];
    let mut sum_sq = [0.0f64; 2];
    for (scores, labels) in matrices {
        crate::data::validate_pair(scores, labels)?;
        for i in 0..scores.rows() {
            for j in 0..scores.cols() {
                let Some(h) = labels.get(i, j).hypothesis() else { continue };
                let c = match h {
                    Hypothesis::Target => 0,
                    Hypothesis::NonTarget => 1,
                };
                n[c] += 1;
                sum[c] += scores.get(i, j);
                sum_sq[c] += scores.get(i, j) * scores.get(i, j);
            }
        }
    }
    for (c, name) in [(0, "target"), (1, "non-target")] {
        if n[c] == 0 {
            return Err(Error::Training(format!("no observed {name} cells in the collection")));
        }
    }
    let mean = [sum[0] / n[0] as f64, sum[1] / n[1] as f64];
    let var = [
        (sum_sq[0] / n[0] as f64 - mean[0] * mean[0]).max(VAR_FLOOR),
        (sum_sq[1] / n[1] as f64 - mean[1] * mean[1]).max(VAR_FLOOR),
    ];
    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
    let mut draw = |scale: f64| -> Vec<f64> {
        (0..d)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                scale * z
            })
            .collect::<Vec<f64>>()
    };
    let alpha_tar = draw(config.init_scale * var[0].sqrt());
    let alpha_non = draw(config.init_scale * var[1].sqrt());
    let beta_tar = draw(config.init_scale * var[0].sqrt());
    let beta_non = draw(config.init_scale * var[1].sqrt());
    LgsmParams::new(d, mean[0], mean[1], var[0], var[1], alpha_tar, alpha_non, beta_tar, beta_non)
}

/// Fits the model on a collection of labeled score matrices, summing the
/// per-matrix objectives with equal weight.
pub fn em_fit(
    matrices: &[(ScoreMatrix, LabelMatrix)],
    d: usize,
    config: &EmConfig,
) -> Result<(LgsmParams, TrainTrace)> {
    if matrices.is_empty() {
        return Err(Error::Training("no training matrices".into()));
    }
    let mut params = initial_params(matrices, d, config)?;
    let mut objectives = Vec::new();
    let mut converged = false;
    for _ in 0..config.max_iters {
        let stats = accumulate_stats(&params, matrices)?;
        let objective = stats.loglik;
        if !objective.is_finite() {
            return Err(Error::Numerical(format!("training objective became {objective}")));
        }
        if let Some(&prev) = objectives.last() {
            objectives.push(objective);
            if (objective - prev).abs() <= config.tol * prev.abs() {
                converged = true;
                break;
            }
        } else {
            objectives.push(objective);
        }
        params = m_step(&params, &stats)?;
        if config.min_div {
            params = min_div_step(&params, &stats)?;
        }
    }
    let iterations = objectives.len();
    Ok((params, TrainTrace { objectives, converged, iterations }))
}
