//! Seeded synthetic score generation from model parameters.
//!
//! Sampling follows the generative story exactly: standard Gaussian hidden
//! variables per row and column, then each observed score from
//! `N(mu_h + alpha_h'x_i + beta_h'y_j, var_h)`. All draws run on ChaCha
//! streams derived from the corpus seed (stream = matrix index), so per-item
//! output is reproducible across platforms and independent of scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{Hypothesis, Label, LabelMatrix, ScoreMatrix};
use crate::error::{Error, Result};
use crate::lgsm::LgsmParams;
use crate::par;

/// Rule assigning hypothesis labels to grid cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetLayout {
    /// Cells (i, i) are targets, everything else non-target. Mirrors
    /// one-enrollment-per-speaker scoring.
    Diagonal,
    /// Every cell non-target (cohort-style grids).
    AllNonTarget,
}

impl TargetLayout {
    pub fn label(self, i: usize, j: usize) -> Label {
        match self {
            TargetLayout::Diagonal if i == j => Label::Target,
            _ => Label::NonTarget,
        }
    }
}

impl std::str::FromStr for TargetLayout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "diagonal" => Ok(TargetLayout::Diagonal),
            "all-non" => Ok(TargetLayout::AllNonTarget),
            other => Err(Error::InvalidParam(format!("unknown layout `{other}`"))),
        }
    }
}

/// Shape of a synthetic training corpus.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct CorpusSpec {
    pub n_matrices: usize,
    pub rows: usize,
    pub cols: usize,
    pub layout: TargetLayout,
    pub seed: u64,
}

fn standard_normal(rng: &mut ChaCha12Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn draw_hidden(rng: &mut ChaCha12Rng, count: usize, d: usize) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| (0..d).map(|_| standard_normal(rng)).collect())
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn draw_score(params: &LgsmParams, h: Hypothesis, x: &[f64], y: &[f64], rng: &mut ChaCha12Rng) -> f64 {
    params.mu(h)
        + dot(params.alpha(h), x)
        + dot(params.beta(h), y)
        + params.var(h).sqrt() * standard_normal(rng)
}

fn sample_matrix_with_rng(
    params: &LgsmParams,
    rows: usize,
    cols: usize,
    layout: TargetLayout,
    rng: &mut ChaCha12Rng,
) -> Result<(ScoreMatrix, LabelMatrix)> {
    let x = draw_hidden(rng, rows, params.d);
    let y = draw_hidden(rng, cols, params.d);
    let mut scores = ScoreMatrix::zeros(rows, cols)?;
    let mut labels = LabelMatrix::filled(rows, cols, Label::NonTarget)?;
    for i in 0..rows {
        for j in 0..cols {
            let label = layout.label(i, j);
            let h = label.hypothesis().expect("layouts only emit observed labels");
            scores.set(i, j, draw_score(params, h, &x[i], &y[j], rng));
            labels.set(i, j, label);
        }
    }
    Ok((scores, labels))
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Samples one labeled score matrix; deterministic given the seed.
pub fn sample_matrix(
    params: &LgsmParams,
    rows: usize,
    cols: usize,
    layout: TargetLayout,
    seed: u64,
) -> Result<(ScoreMatrix, LabelMatrix)> {
    params.validate()?;
    sample_matrix_with_rng(params, rows, cols, layout, &mut stream_rng(seed, 0))
}

/// Samples independent matrices on per-matrix derived streams, parallel over
/// matrices; output does not depend on scheduling.
pub fn sample_corpus(params: &LgsmParams, spec: &CorpusSpec) -> Result<Vec<(ScoreMatrix, LabelMatrix)>> {
    params.validate()?;
    if spec.n_matrices == 0 {
        return Err(Error::InvalidParam("corpus must contain at least one matrix".into()));
    }
    par::map_indexed(spec.n_matrices, |idx| {
        sample_matrix_with_rng(
            params,
            spec.rows,
            spec.cols,
            spec.layout,
            &mut stream_rng(spec.seed, idx as u64),
        )
    })
    .into_iter()
    .collect()
}

/// One evaluation trial: the trial score, its two cohort score vectors and
/// the ground-truth hypothesis.
#[derive(Debug, Clone)]
pub struct EvalTrial {
    pub label: Hypothesis,
    pub s_trial: f64,
    pub s_e: Vec<f64>,
    pub s_t: Vec<f64>,
}

/// A shared cohort plus labeled trials for evaluation experiments.
#[derive(Debug, Clone)]
pub struct EvalSet {
    /// N x M inter-cohort scores (all non-target).
    pub s_inter: ScoreMatrix,
    /// (N+1) x (M+1) runtime-grid labels, all non-target.
    pub cohort_labels: LabelMatrix,
    pub trials: Vec<EvalTrial>,
}

/// Samples a self-consistent evaluation set: the cohort hidden variables are
/// shared between the inter-cohort grid and every trial's cohort scores, and
/// each trial introduces fresh hidden variables for its own enrollment and
/// test side. Target trials come first in the output.
pub fn sample_eval_set(
    params: &LgsmParams,
    n_cohort_enroll: usize,
    m_cohort_test: usize,
    n_target_trials: usize,
    n_nontarget_trials: usize,
    seed: u64,
) -> Result<EvalSet> {
    params.validate()?;
    let (n, m) = (n_cohort_enroll, m_cohort_test);
    if n < 2 || m < 2 {
        return Err(Error::InvalidParam(format!("cohort sizes must be >= 2, got N={n}, M={m}")));
    }
    let mut rng = stream_rng(seed, 0);
    let xc = draw_hidden(&mut rng, n, params.d);
    let yc = draw_hidden(&mut rng, m, params.d);
    let mut s_inter = ScoreMatrix::zeros(n, m)?;
    for i in 0..n {
        for j in 0..m {
            s_inter.set(i, j, draw_score(params, Hypothesis::NonTarget, &xc[i], &yc[j], &mut rng));
        }
    }
    let total = n_target_trials + n_nontarget_trials;
    let trials: Result<Vec<EvalTrial>> = par::map_indexed(total, |t| {
        let label = if t < n_target_trials { Hypothesis::Target } else { Hypothesis::NonTarget };
        let mut rng = stream_rng(seed, 1 + t as u64);
        let xt: Vec<f64> = (0..params.d).map(|_| standard_normal(&mut rng)).collect();
        let yt: Vec<f64> = (0..params.d).map(|_| standard_normal(&mut rng)).collect();
        let s_t: Vec<f64> = (0..n)
            .map(|i| draw_score(params, Hypothesis::NonTarget, &xc[i], &yt, &mut rng))
            .collect();
        let s_e: Vec<f64> = (0..m)
            .map(|j| draw_score(params, Hypothesis::NonTarget, &xt, &yc[j], &mut rng))
            .collect();
        let s_trial = draw_score(params, label, &xt, &yt, &mut rng);
        Ok(EvalTrial { label, s_trial, s_e, s_t })
    })
    .into_iter()
    .collect();
    Ok(EvalSet {
        s_inter,
        cohort_labels: LabelMatrix::filled(n + 1, m + 1, Label::NonTarget)?,
        trials: trials?,
    })
}
