//! Normalized-score computation.
//!
//! The normalized score of a trial is the log-likelihood ratio of the whole
//! runtime grid (cohort scores + trial score) between the two hypotheses for
//! the trial cell. When every trial shares one cohort, the posterior
//! precision depends only on the label pattern, so batch scoring factorizes
//! it exactly twice, once per hypothesis.

use nalgebra::{Cholesky, Dyn};

use crate::data::{
    assemble_runtime_grid, Hypothesis, Label, LabelMatrix, Prior, ScoreMatrix, TrialContext,
};
use crate::error::{Error, Result};
use crate::lgsm::posterior::{
    build_gamma_and_data_term, build_precision, factorize, finish_log_marginal,
};
use crate::lgsm::LgsmParams;
use crate::par;

/// Normalized score of a single trial with its cohorts.
pub fn normalize_trial(params: &LgsmParams, ctx: &TrialContext) -> Result<f64> {
    params.validate()?;
    let (scores_tar, labels_tar) = assemble_runtime_grid(ctx, Hypothesis::Target)?;
    let (scores_non, labels_non) = assemble_runtime_grid(ctx, Hypothesis::NonTarget)?;
    let tar = crate::lgsm::posterior::log_marginal(params, &scores_tar, &labels_tar)?;
    let non = crate::lgsm::posterior::log_marginal(params, &scores_non, &labels_non)?;
    Ok(tar - non)
}

/// Posterior probability of the target hypothesis given a normalized score
/// interpreted as a log-likelihood ratio.
pub fn target_posterior(s_norm: f64, prior: Prior) -> f64 {
    let t = s_norm + prior.logit();
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

struct HypothesisFactor {
    labels: LabelMatrix,
    chol: Cholesky<f64, Dyn>,
    log_det: f64,
}

/// Scores many trials against one shared cohort with exactly two precision
/// factorizations.
pub struct BatchNormalizer {
    params: LgsmParams,
    s_inter: ScoreMatrix,
    n: usize,
    m: usize,
    tar: HypothesisFactor,
    non: HypothesisFactor,
    factorizations: usize,
}

impl BatchNormalizer {
    /// `cohort_labels` covers the full (N+1)x(M+1) runtime grid; every cell
    /// except the trial corner must be observed. The corner value is ignored
    /// and replaced per hypothesis.
    pub fn new(
        params: &LgsmParams,
        s_inter: &ScoreMatrix,
        cohort_labels: &LabelMatrix,
    ) -> Result<Self> {
        params.validate()?;
        let n = s_inter.rows();
        let m = s_inter.cols();
        if cohort_labels.rows() != n + 1 || cohort_labels.cols() != m + 1 {
            return Err(Error::Shape(format!(
                "cohort labels are {}x{}, expected {}x{}",
                cohort_labels.rows(),
                cohort_labels.cols(),
                n + 1,
                m + 1
            )));
        }
        for i in 0..=n {
            for j in 0..=m {
                if (i, j) != (n, m) && !cohort_labels.get(i, j).is_observed() {
                    return Err(Error::Shape(format!(
                        "cohort label ({i},{j}) must be observed for batch scoring"
                    )));
                }
            }
        }
        // Precision depends on the labels only; scores enter through gamma.
        let shape_only = ScoreMatrix::zeros(n + 1, m + 1)?;
        let mut factorizations = 0;
        let mut build = |h: Label| -> Result<HypothesisFactor> {
            let mut labels = cohort_labels.clone();
            labels.set(n, m, h);
            let precision = build_precision(params, &shape_only, &labels);
            let (chol, log_det) = factorize(precision)?;
            factorizations += 1;
            Ok(HypothesisFactor { labels, chol, log_det })
        };
        let tar = build(Label::Target)?;
        let non = build(Label::NonTarget)?;
        Ok(BatchNormalizer {
            params: params.clone(),
            s_inter: s_inter.clone(),
            n,
            m,
            tar,
            non,
            factorizations,
        })
    }

    /// Number of precision factorizations performed since construction.
    /// Always 2: scoring reuses the cached factors.
    pub fn factorizations(&self) -> usize {
        self.factorizations
    }

    pub fn score(&self, s_trial: f64, s_e: &[f64], s_t: &[f64]) -> Result<f64> {
        if s_e.len() != self.m || s_t.len() != self.n {
            return Err(Error::Shape(format!(
                "trial cohort scores |s_e|={}, |s_t|={} do not match cohort {}x{}",
                s_e.len(),
                s_t.len(),
                self.n,
                self.m
            )));
        }
        let ctx = TrialContext::new(s_trial, s_e.to_vec(), s_t.to_vec(), self.s_inter.clone())?;
        let (grid, _) = assemble_runtime_grid(&ctx, Hypothesis::Target)?;
        let lm = |f: &HypothesisFactor| -> f64 {
            let (gamma, data_term) = build_gamma_and_data_term(&self.params, &grid, &f.labels);
            let mean = f.chol.solve(&gamma);
            finish_log_marginal(data_term, &gamma, &mean, f.log_det)
        };
        Ok(lm(&self.tar) - lm(&self.non))
    }
}

/// Batch counterpart of [`normalize_trial`] for trials sharing one cohort.
/// Trials are `(s_trial, s_e, s_t)` tuples; outputs preserve order.
pub fn normalize_batch(
    params: &LgsmParams,
    s_inter: &ScoreMatrix,
    cohort_labels: &LabelMatrix,
    trials: &[(f64, Vec<f64>, Vec<f64>)],
) -> Result<Vec<f64>> {
    let norm = BatchNormalizer::new(params, s_inter, cohort_labels)?;
    let out = par::map_collect(trials, |(s, s_e, s_t)| norm.score(*s, s_e, s_t));
    out.into_iter().collect()
}
