#![allow(dead_code)] // each test target uses a subset of these oracles

//! Independent reference implementations used to cross-check the library.
//! Everything here takes the direct route (explicit joint covariance, slope
//! search, naive isotonic scan) rather than the factorized computations the
//! library uses.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use scorenorm::data::{Label, LabelMatrix, ScoreMatrix};
use scorenorm::lgsm::LgsmParams;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Cell {
    i: usize,
    j: usize,
    s: f64,
    h: scorenorm::data::Hypothesis,
}

fn observed_cells(scores: &ScoreMatrix, labels: &LabelMatrix) -> Vec<Cell> {
    let mut cells = Vec::new();
    for i in 0..scores.rows() {
        for j in 0..scores.cols() {
            if let Some(h) = labels.get(i, j).hypothesis() {
                cells.push(Cell { i, j, s: scores.get(i, j), h });
            }
        }
    }
    cells
}

/// Joint log-density of the observed scores computed from the explicit
/// score-space covariance, one entry per cell pair.
pub fn brute_log_marginal(params: &LgsmParams, scores: &ScoreMatrix, labels: &LabelMatrix) -> f64 {
    let cells = observed_cells(scores, labels);
    let n = cells.len();
    if n == 0 {
        return 0.0;
    }
    let mut cov = DMatrix::<f64>::zeros(n, n);
    let mut resid = DVector::<f64>::zeros(n);
    for (a, ca) in cells.iter().enumerate() {
        resid[a] = ca.s - params.mu(ca.h);
        for (b, cb) in cells.iter().enumerate() {
            let mut v = 0.0;
            if ca.i == cb.i {
                v += dot(params.alpha(ca.h), params.alpha(cb.h));
            }
            if ca.j == cb.j {
                v += dot(params.beta(ca.h), params.beta(cb.h));
            }
            if a == b {
                v += params.var(ca.h);
            }
            cov[(a, b)] = v;
        }
    }
    let chol = Cholesky::new(cov.clone()).expect("score covariance must be PD");
    let log_det = 2.0 * chol.l_dirty().diagonal().iter().take(n).map(|x| x.ln()).sum::<f64>();
    let quad = resid.dot(&chol.solve(&resid));
    -0.5 * (quad + log_det + n as f64 * (2.0 * std::f64::consts::PI).ln())
}

/// Hidden-variable posterior via plain Gaussian conditioning on the joint
/// over (z, s). Returns (mean, covariance) in x_1..x_K, y_1..y_L order.
pub fn conditioned_posterior(
    params: &LgsmParams,
    scores: &ScoreMatrix,
    labels: &LabelMatrix,
) -> (DVector<f64>, DMatrix<f64>) {
    let d = params.d;
    let k = scores.rows();
    let l = scores.cols();
    let nz = d * (k + l);
    let cells = observed_cells(scores, labels);
    let n = cells.len();
    // s = mu + Load z + eps
    let mut load = DMatrix::<f64>::zeros(n, nz);
    let mut resid = DVector::<f64>::zeros(n);
    let mut noise = DMatrix::<f64>::zeros(n, n);
    for (a, c) in cells.iter().enumerate() {
        resid[a] = c.s - params.mu(c.h);
        noise[(a, a)] = params.var(c.h);
        for p in 0..d {
            load[(a, c.i * d + p)] = params.alpha(c.h)[p];
            load[(a, (k + c.j) * d + p)] = params.beta(c.h)[p];
        }
    }
    let cov_ss = &load * load.transpose() + noise;
    let chol = Cholesky::new(cov_ss).expect("score covariance must be PD");
    let mean = load.transpose() * chol.solve(&resid);
    let cov = DMatrix::<f64>::identity(nz, nz) - load.transpose() * chol.solve(&load);
    (mean, cov)
}

/// Every ROC operating point of the rule "accept if score >= t", one per
/// threshold placed between distinct scores plus the two extremes.
pub fn enumerate_det(target: &[f64], nontarget: &[f64]) -> Vec<(f64, f64)> {
    let mut thresholds: Vec<f64> = Vec::new();
    let mut all: Vec<f64> = target.iter().chain(nontarget).copied().collect();
    all.sort_by(|a, b| a.partial_cmp(b).unwrap());
    all.dedup();
    thresholds.push(all[0] - 1.0);
    for w in all.windows(2) {
        thresholds.push((w[0] + w[1]) / 2.0);
    }
    thresholds.push(all[all.len() - 1] + 1.0);
    let mut pts = Vec::new();
    for t in thresholds {
        let pfa = nontarget.iter().filter(|&&s| s >= t).count() as f64 / nontarget.len() as f64;
        let pmiss = target.iter().filter(|&&s| s < t).count() as f64 / target.len() as f64;
        pts.push((pfa, pmiss));
    }
    pts
}

/// EER by gift-wrapping the lower convex hull of the enumerated ROC points
/// and interpolating the pmiss = pfa crossing.
pub fn eer_oracle(target: &[f64], nontarget: &[f64]) -> f64 {
    let mut pts = enumerate_det(target, nontarget);
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    let mut hull = vec![pts[0]];
    loop {
        let cur = *hull.last().unwrap();
        // next hull vertex: minimum slope among points to the right, then
        // farthest; vertical drops at the same pfa go to the lowest point
        let mut best: Option<(f64, f64)> = None;
        let mut best_slope = f64::INFINITY;
        for &p in &pts {
            if p.0 < cur.0 || (p.0 == cur.0 && p.1 >= cur.1) {
                continue;
            }
            let slope =
                if p.0 == cur.0 { f64::NEG_INFINITY } else { (p.1 - cur.1) / (p.0 - cur.0) };
            let better = match best {
                None => true,
                Some(b) => {
                    slope < best_slope - 1e-15
                        || ((slope - best_slope).abs() <= 1e-15
                            && (p.0 - cur.0).hypot(p.1 - cur.1) > (b.0 - cur.0).hypot(b.1 - cur.1))
                }
            };
            if better {
                best = Some(p);
                best_slope = slope;
            }
        }
        match best {
            Some(p) => hull.push(p),
            None => break,
        }
    }
    for w in hull.windows(2) {
        let (a, b) = (w[0], w[1]);
        let da = a.1 - a.0;
        let db = b.1 - b.0;
        if da >= 0.0 && db <= 0.0 {
            if da - db == 0.0 {
                return a.0.min(b.0);
            }
            let t = da / (da - db);
            return a.0 + t * (b.0 - a.0);
        }
    }
    0.0
}

fn direct_cllr(tar_llrs: &[f64], non_llrs: &[f64]) -> f64 {
    let soft = |s: f64| (1.0 + (-s).exp()).ln();
    let t = tar_llrs.iter().map(|&s| soft(s)).sum::<f64>() / tar_llrs.len() as f64;
    let n = non_llrs.iter().map(|&s| soft(-s)).sum::<f64>() / non_llrs.len() as f64;
    (t + n) / (2.0 * std::f64::consts::LN_2)
}

/// minCllr by a naive repeated-scan isotonic fit of the target indicator.
pub fn min_cllr_oracle(target: &[f64], nontarget: &[f64]) -> f64 {
    #[derive(Clone)]
    struct Block {
        score: f64,
        tar: f64,
        count: f64,
        members: Vec<bool>,
    }
    let mut blocks: Vec<Block> = target
        .iter()
        .map(|&s| (s, true))
        .chain(nontarget.iter().map(|&s| (s, false)))
        .map(|(s, is_tar)| Block {
            score: s,
            tar: is_tar as u8 as f64,
            count: 1.0,
            members: vec![is_tar],
        })
        .collect();
    blocks.sort_by(|a, b| a.score.partial_cmp(&b.score).unwrap());
    // pool tied scores, then scan until no adjacent violation remains
    let merge = |blocks: &mut Vec<Block>, violated: fn(&Block, &Block) -> bool| loop {
        let mut changed = false;
        let mut idx = 0;
        while idx + 1 < blocks.len() {
            if violated(&blocks[idx], &blocks[idx + 1]) {
                let next = blocks.remove(idx + 1);
                blocks[idx].tar += next.tar;
                blocks[idx].count += next.count;
                blocks[idx].members.extend(next.members);
                changed = true;
            } else {
                idx += 1;
            }
        }
        if !changed {
            break;
        }
    };
    merge(&mut blocks, |a, b| a.score == b.score);
    merge(&mut blocks, |a, b| a.tar / a.count >= b.tar / b.count);
    let prior_logit = (target.len() as f64 / nontarget.len() as f64).ln();
    let mut tar_llrs = Vec::new();
    let mut non_llrs = Vec::new();
    for b in &blocks {
        let p = b.tar / b.count;
        let llr = if p <= 0.0 {
            -700.0
        } else if p >= 1.0 {
            700.0
        } else {
            ((p / (1.0 - p)).ln() - prior_logit).clamp(-700.0, 700.0)
        };
        for &is_tar in &b.members {
            if is_tar {
                tar_llrs.push(llr);
            } else {
                non_llrs.push(llr);
            }
        }
    }
    direct_cllr(&tar_llrs, &non_llrs)
}

pub fn random_params(rng: &mut impl rand::Rng, d: usize) -> LgsmParams {
    let vec = |rng: &mut dyn rand::RngCore| -> Vec<f64> {
        (0..d).map(|_| rng.gen_range(-1.5..1.5)).collect()
    };
    LgsmParams::new(
        d,
        rng.gen_range(-2.0..2.0),
        rng.gen_range(-2.0..2.0),
        rng.gen_range(0.3..3.0),
        rng.gen_range(0.3..3.0),
        vec(rng),
        vec(rng),
        vec(rng),
        vec(rng),
    )
    .unwrap()
}

pub fn random_grid(
    rng: &mut impl rand::Rng,
    k: usize,
    l: usize,
    allow_unobserved: bool,
) -> (ScoreMatrix, LabelMatrix) {
    let cells: Vec<f64> = (0..k * l).map(|_| rng.gen_range(-4.0..4.0)).collect();
    let labels: Vec<Label> = (0..k * l)
        .map(|_| match rng.gen_range(0..if allow_unobserved { 5 } else { 4 }) {
            0 | 1 => Label::Target,
            2 | 3 => Label::NonTarget,
            _ => Label::Unobserved,
        })
        .collect();
    (ScoreMatrix::new(k, l, cells).unwrap(), LabelMatrix::new(k, l, labels).unwrap())
}
