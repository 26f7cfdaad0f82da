//! Discrimination and calibration metrics: DET points, EER, Cllr and minCllr.

use crate::error::{Error, Result};

/// Scores split by ground-truth hypothesis.
#[derive(Debug, Clone)]
pub struct LabeledScores {
    pub target: Vec<f64>,
    pub nontarget: Vec<f64>,
}

impl LabeledScores {
    pub fn new(target: Vec<f64>, nontarget: Vec<f64>) -> Result<Self> {
        if target.is_empty() || nontarget.is_empty() {
            return Err(Error::InvalidParam(
                "metrics need at least one target and one non-target score".into(),
            ));
        }
        if target.iter().chain(&nontarget).any(|s| !s.is_finite()) {
            return Err(Error::InvalidParam("non-finite score in metric input".into()));
        }
        Ok(LabeledScores { target, nontarget })
    }
}

/// One DET operating point.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DetPoint {
    pub pfa: f64,
    pub pmiss: f64,
}

/// Metrics for one labeled score set. Cllr values are in bits.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct MetricsReport {
    pub eer: f64,
    pub cllr: f64,
    pub min_cllr: f64,
    pub det: Vec<DetPoint>,
}

/// Empirical ROC staircase: one point per distinct threshold of the decision
/// rule "accept if score >= t", from (pfa=1, pmiss=0) to (0, 1).
pub fn det_points(scores: &LabeledScores) -> Result<Vec<DetPoint>> {
    Ok(roc_points(scores))
}

fn roc_points(scores: &LabeledScores) -> Vec<DetPoint> {
    let nt = scores.target.len() as f64;
    let nn = scores.nontarget.len() as f64;
    let mut all: Vec<(f64, bool)> = scores
        .target
        .iter()
        .map(|&s| (s, true))
        .chain(scores.nontarget.iter().map(|&s| (s, false)))
        .collect();
    // ascending scores; raising the threshold lowers pfa and raises pmiss
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut pts = vec![DetPoint { pfa: 1.0, pmiss: 0.0 }];
    let mut detected = scores.target.len();
    let mut fa = scores.nontarget.len();
    let mut idx = 0;
    while idx < all.len() {
        let threshold = all[idx].0;
        while idx < all.len() && all[idx].0 == threshold {
            if all[idx].1 {
                detected -= 1;
            } else {
                fa -= 1;
            }
            idx += 1;
        }
        // moving the threshold just above `threshold`
        pts.push(DetPoint {
            pfa: fa as f64 / nn,
            pmiss: 1.0 - detected as f64 / nt,
        });
    }
    pts.reverse(); // ascending pfa
    pts
}

/// Lower convex hull of the ROC staircase, pfa ascending.
fn roc_convex_hull(pts: &[DetPoint]) -> Vec<DetPoint> {
    let mut hull: Vec<DetPoint> = Vec::new();
    for &p in pts {
        while hull.len() >= 2 {
            let o = hull[hull.len() - 2];
            let a = hull[hull.len() - 1];
            let cross = (a.pfa - o.pfa) * (p.pmiss - o.pmiss) - (a.pmiss - o.pmiss) * (p.pfa - o.pfa);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    hull
}

/// Equal error rate: the crossing of the ROC convex hull with pmiss = pfa,
/// linearly interpolated on the crossing segment.
pub fn eer(scores: &LabeledScores) -> Result<f64> {
    let hull = roc_convex_hull(&roc_points(scores));
    for w in hull.windows(2) {
        let (a, b) = (w[0], w[1]);
        let da = a.pmiss - a.pfa;
        let db = b.pmiss - b.pfa;
        // hull runs pfa ascending, pmiss descending: d goes from >= 0 to <= 0
        if da >= 0.0 && db <= 0.0 {
            if da - db == 0.0 {
                return Ok(b.pfa.min(a.pfa));
            }
            let t = da / (da - db);
            return Ok(a.pfa + t * (b.pfa - a.pfa));
        }
    }
    Ok(0.0)
}

fn neg_log_sigmoid(s: f64) -> f64 {
    // ln(1 + e^{-s}), overflow safe
    if s >= 0.0 {
        (-s).exp().ln_1p()
    } else {
        -s + s.exp().ln_1p()
    }
}

const LN2: f64 = std::f64::consts::LN_2;

/// Calibration loss in bits of scores interpreted as base-e log-likelihood
/// ratios.
pub fn cllr(llrs: &LabeledScores) -> Result<f64> {
    let t = llrs.target.iter().map(|&s| neg_log_sigmoid(s)).sum::<f64>() / llrs.target.len() as f64;
    let n = llrs.nontarget.iter().map(|&s| neg_log_sigmoid(-s)).sum::<f64>()
        / llrs.nontarget.len() as f64;
    Ok((t + n) / (2.0 * LN2))
}

/// Bound on the optimal-calibration log-likelihood ratios; pure blocks map
/// to +-700 instead of +-infinity, which contributes ~1e-304 to Cllr.
const LLR_CLAMP: f64 = 700.0;

/// Pool-adjacent-violators fit of the target indicator against the score
/// ranking; equal scores are pooled first. Returns the optimal monotone
/// log-likelihood ratio per input score, targets then non-targets.
fn pav_llrs(scores: &LabeledScores) -> (Vec<f64>, Vec<f64>) {
    let nt = scores.target.len();
    let nn = scores.nontarget.len();
    let mut all: Vec<(f64, bool, usize)> = scores
        .target
        .iter()
        .enumerate()
        .map(|(i, &s)| (s, true, i))
        .chain(scores.nontarget.iter().enumerate().map(|(i, &s)| (s, false, nt + i)))
        .collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    // blocks of tied scores
    struct Block {
        tar: f64,
        count: f64,
        members_end: usize, // exclusive index into `all`
    }
    let mut blocks: Vec<Block> = Vec::new();
    let mut idx = 0;
    while idx < all.len() {
        let s = all[idx].0;
        let mut tar = 0.0;
        let mut count = 0.0;
        while idx < all.len() && all[idx].0 == s {
            if all[idx].1 {
                tar += 1.0;
            }
            count += 1.0;
            idx += 1;
        }
        blocks.push(Block { tar, count, members_end: idx });
        // isotonic (non-decreasing) pooling
        while blocks.len() >= 2 {
            let last = blocks.len() - 1;
            let a = blocks[last - 1].tar / blocks[last - 1].count;
            let b = blocks[last].tar / blocks[last].count;
            if a >= b {
                let merged = Block {
                    tar: blocks[last - 1].tar + blocks[last].tar,
                    count: blocks[last - 1].count + blocks[last].count,
                    members_end: blocks[last].members_end,
                };
                blocks.pop();
                blocks.pop();
                blocks.push(merged);
            } else {
                break;
            }
        }
    }
    let prior_logit = (nt as f64 / nn as f64).ln();
    let mut out = vec![0.0; nt + nn];
    let mut start = 0;
    for block in &blocks {
        let p = block.tar / block.count;
        let llr = if p <= 0.0 {
            -LLR_CLAMP
        } else if p >= 1.0 {
            LLR_CLAMP
        } else {
            ((p / (1.0 - p)).ln() - prior_logit).clamp(-LLR_CLAMP, LLR_CLAMP)
        };
        for item in &all[start..block.members_end] {
            out[item.2] = llr;
        }
        start = block.members_end;
    }
    (out[..nt].to_vec(), out[nt..].to_vec())
}

/// Cllr after the Cllr-minimizing monotone rescoring (isotonic fit of the
/// posterior over the merged ranking).
pub fn min_cllr(scores: &LabeledScores) -> Result<f64> {
    let (tar, non) = pav_llrs(scores);
    cllr(&LabeledScores { target: tar, nontarget: non })
}

/// Full metric report for one labeled score set.
pub fn compute_report(scores: &LabeledScores) -> Result<MetricsReport> {
    Ok(MetricsReport {
        eer: eer(scores)?,
        cllr: cllr(scores)?,
        min_cllr: min_cllr(scores)?,
        det: det_points(scores)?,
    })
}

/// Probit warp used for DET plotting output.
pub fn probit(p: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    let clamped = p.clamp(1e-12, 1.0 - 1e-12);
    Normal::new(0.0, 1.0).unwrap().inverse_cdf(clamped)
}
