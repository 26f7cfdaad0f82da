//! Classical cohort-based score normalizations: T-norm, Z-norm, ZT-norm and
//! S-norm. These serve as baselines for the generative model.

use crate::data::TrialContext;
use crate::error::{Error, Result};

/// Standard deviations below this are treated as degenerate.
pub const STD_TOLERANCE: f64 = 1e-12;

/// Mean and sample standard deviation (divisor N-1) of a cohort score set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CohortStats {
    pub mean: f64,
    pub std: f64,
}

impl CohortStats {
    pub fn from_scores(scores: &[f64]) -> Result<Self> {
        if scores.len() < 2 {
            return Err(Error::DegenerateCohort(format!(
                "need at least 2 cohort scores, got {}",
                scores.len()
            )));
        }
        let n = scores.len() as f64;
        let mean = scores.iter().sum::<f64>() / n;
        let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let std = var.sqrt();
        if std < STD_TOLERANCE {
            return Err(Error::DegenerateCohort(format!(
                "cohort standard deviation {std:e} below tolerance"
            )));
        }
        Ok(CohortStats { mean, std })
    }

    pub fn standardize(&self, s: f64) -> f64 {
        (s - self.mean) / self.std
    }
}

/// T-norm: standardizes the trial score by the test-side cohort scores.
pub fn tnorm(s_trial: f64, cohort: &[f64]) -> Result<f64> {
    Ok(CohortStats::from_scores(cohort)?.standardize(s_trial))
}

/// Z-norm: same standardization with the enrollment-side cohort scores.
pub fn znorm(s_trial: f64, cohort: &[f64]) -> Result<f64> {
    Ok(CohortStats::from_scores(cohort)?.standardize(s_trial))
}

/// ZT-norm, pinned as Z-then-T.
///
/// Z step: the trial score is z-normalized with `s_e`, and each T-step cohort
/// score `s_t[j]` is z-normalized against row j of the inter-cohort matrix.
/// T step: the z-normalized trial score is t-normalized with the N
/// z-normalized cohort scores.
pub fn ztnorm(ctx: &TrialContext) -> Result<f64> {
    let step = |e: Error, step: &str| match e {
        Error::DegenerateCohort(msg) => Error::DegenerateCohort(format!("{step} step: {msg}")),
        other => other,
    };
    let z_trial = CohortStats::from_scores(&ctx.s_e)
        .map_err(|e| step(e, "Z"))?
        .standardize(ctx.s_trial);
    let mut z_cohort = Vec::with_capacity(ctx.n());
    for (j, &s) in ctx.s_t.iter().enumerate() {
        let row: Vec<f64> = (0..ctx.m()).map(|k| ctx.s_inter.get(j, k)).collect();
        let stats = CohortStats::from_scores(&row).map_err(|e| step(e, "Z"))?;
        z_cohort.push(stats.standardize(s));
    }
    tnorm(z_trial, &z_cohort).map_err(|e| step(e, "T"))
}

/// S-norm: symmetric average of the two one-sided standardizations.
pub fn snorm(s_trial: f64, s_e: &[f64], s_t: &[f64]) -> Result<f64> {
    let e = CohortStats::from_scores(s_e)?;
    let t = CohortStats::from_scores(s_t)?;
    Ok(0.5 * (e.standardize(s_trial) + t.standardize(s_trial)))
}
