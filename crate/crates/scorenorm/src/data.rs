//! Score matrices, hypothesis labels, trial contexts and their file format.
//!
//! Conventions used everywhere in this crate: rows are the enrollment side,
//! columns are the test side. The inter-cohort matrix is N rows (enrollment
//! cohort) by M columns (test cohort).

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Trial hypothesis: do enrollment and test side belong to the same speaker?
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Hypothesis {
    Target,
    NonTarget,
}

impl Hypothesis {
    pub fn label(self) -> Label {
        match self {
            Hypothesis::Target => Label::Target,
            Hypothesis::NonTarget => Label::NonTarget,
        }
    }
}

impl fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Hypothesis::Target => "tar",
            Hypothesis::NonTarget => "non",
        })
    }
}

/// Per-cell label in a score grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Label {
    Target,
    NonTarget,
    Unobserved,
}

impl Label {
    pub fn token(self) -> &'static str {
        match self {
            Label::Target => "tar",
            Label::NonTarget => "non",
            Label::Unobserved => "NA",
        }
    }

    pub fn from_token(tok: &str) -> Option<Label> {
        match tok {
            "tar" => Some(Label::Target),
            "non" => Some(Label::NonTarget),
            "NA" => Some(Label::Unobserved),
            _ => None,
        }
    }

    pub fn hypothesis(self) -> Option<Hypothesis> {
        match self {
            Label::Target => Some(Hypothesis::Target),
            Label::NonTarget => Some(Hypothesis::NonTarget),
            Label::Unobserved => None,
        }
    }

    pub fn is_observed(self) -> bool {
        self != Label::Unobserved
    }
}

/// Rectangular grid of raw verification scores, row-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    rows: usize,
    cols: usize,
    cells: Vec<f64>,
}

impl ScoreMatrix {
    pub fn new(rows: usize, cols: usize, cells: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Shape(format!("matrix must be at least 1x1, got {rows}x{cols}")));
        }
        if cells.len() != rows * cols {
            return Err(Error::Shape(format!(
                "expected {} cells for a {rows}x{cols} matrix, got {}",
                rows * cols,
                cells.len()
            )));
        }
        Ok(ScoreMatrix { rows, cols, cells })
    }

    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        Self::new(rows, cols, vec![0.0; rows * cols])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.cells[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.cells[i * self.cols + j] = v;
    }

    pub fn cells(&self) -> &[f64] {
        &self.cells
    }
}

/// Hypothesis labels paired with a [`ScoreMatrix`] of the same shape.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMatrix {
    rows: usize,
    cols: usize,
    cells: Vec<Label>,
}

impl LabelMatrix {
    pub fn new(rows: usize, cols: usize, cells: Vec<Label>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Shape(format!("matrix must be at least 1x1, got {rows}x{cols}")));
        }
        if cells.len() != rows * cols {
            return Err(Error::Shape(format!(
                "expected {} labels for a {rows}x{cols} matrix, got {}",
                rows * cols,
                cells.len()
            )));
        }
        Ok(LabelMatrix { rows, cols, cells })
    }

    pub fn filled(rows: usize, cols: usize, label: Label) -> Result<Self> {
        Self::new(rows, cols, vec![label; rows * cols])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> Label {
        self.cells[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, label: Label) {
        self.cells[i * self.cols + j] = label;
    }

    pub fn observed_count(&self) -> usize {
        self.cells.iter().filter(|l| l.is_observed()).count()
    }

    pub fn count(&self, label: Label) -> usize {
        self.cells.iter().filter(|&&l| l == label).count()
    }
}

/// Checks that a score/label pair forms a valid observed grid: same shape,
/// at least one observed cell, all observed scores finite.
pub fn validate_pair(scores: &ScoreMatrix, labels: &LabelMatrix) -> Result<()> {
    if scores.rows() != labels.rows() || scores.cols() != labels.cols() {
        return Err(Error::Shape(format!(
            "score matrix {}x{} does not match label matrix {}x{}",
            scores.rows(),
            scores.cols(),
            labels.rows(),
            labels.cols()
        )));
    }
    if labels.observed_count() == 0 {
        return Err(Error::Shape("matrix has no observed cells".into()));
    }
    for i in 0..scores.rows() {
        for j in 0..scores.cols() {
            if labels.get(i, j).is_observed() && !scores.get(i, j).is_finite() {
                return Err(Error::Shape(format!("non-finite score in observed cell ({i},{j})")));
            }
        }
    }
    Ok(())
}

/// Hypothesis prior for the trial-at-hand.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Prior {
    pi: f64,
}

impl Prior {
    pub fn new(pi: f64) -> Result<Self> {
        if !(pi > 0.0 && pi < 1.0) {
            return Err(Error::InvalidParam(format!("prior must be in (0,1), got {pi}")));
        }
        Ok(Prior { pi })
    }

    pub fn pi(self) -> f64 {
        self.pi
    }

    pub fn logit(self) -> f64 {
        (self.pi / (1.0 - self.pi)).ln()
    }
}

/// The trial-at-hand score together with its three cohort score sets.
///
/// `s_e` holds the M scores of the trial enrollment against the test cohort,
/// `s_t` the N scores of the enrollment cohort against the trial test, and
/// `s_inter` the NxM inter-cohort scores. `cohort_labels` covers the full
/// (N+1)x(M+1) grid; the trial corner cell is ignored (the hypothesis there
/// is what gets scored). Default labels are all non-target, matching the
/// assumption that cohort speakers are disjoint from the trial.
#[derive(Debug, Clone)]
pub struct TrialContext {
    pub s_trial: f64,
    pub s_e: Vec<f64>,
    pub s_t: Vec<f64>,
    pub s_inter: ScoreMatrix,
    pub cohort_labels: LabelMatrix,
}

impl TrialContext {
    /// Builds a context with all cohort labels non-target.
    pub fn new(s_trial: f64, s_e: Vec<f64>, s_t: Vec<f64>, s_inter: ScoreMatrix) -> Result<Self> {
        let labels = LabelMatrix::filled(s_t.len() + 1, s_e.len() + 1, Label::NonTarget)?;
        Self::with_labels(s_trial, s_e, s_t, s_inter, labels)
    }

    pub fn with_labels(
        s_trial: f64,
        s_e: Vec<f64>,
        s_t: Vec<f64>,
        s_inter: ScoreMatrix,
        cohort_labels: LabelMatrix,
    ) -> Result<Self> {
        let n = s_t.len();
        let m = s_e.len();
        if s_inter.rows() != n || s_inter.cols() != m {
            return Err(Error::Shape(format!(
                "inter-cohort matrix is {}x{}, expected {n}x{m} from |s_t|={n}, |s_e|={m}",
                s_inter.rows(),
                s_inter.cols()
            )));
        }
        if cohort_labels.rows() != n + 1 || cohort_labels.cols() != m + 1 {
            return Err(Error::Shape(format!(
                "cohort labels are {}x{}, expected {}x{}",
                cohort_labels.rows(),
                cohort_labels.cols(),
                n + 1,
                m + 1
            )));
        }
        let ctx = TrialContext { s_trial, s_e, s_t, s_inter, cohort_labels };
        for (name, v) in [("s_e", &ctx.s_e), ("s_t", &ctx.s_t)] {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Shape(format!("non-finite score in {name}")));
            }
        }
        if !ctx.s_trial.is_finite() {
            return Err(Error::Shape("non-finite trial score".into()));
        }
        if ctx.s_inter.cells().iter().any(|x| !x.is_finite()) {
            return Err(Error::Shape("non-finite score in s_inter".into()));
        }
        Ok(ctx)
    }

    /// Size of the enrollment cohort.
    pub fn n(&self) -> usize {
        self.s_t.len()
    }

    /// Size of the test cohort.
    pub fn m(&self) -> usize {
        self.s_e.len()
    }
}

/// Places the cohort scores and the trial score into one (N+1)x(M+1) grid:
/// `s_inter` in the top-left block, `s_t` as the last column, `s_e` as the
/// last row and the trial score in the corner, labeled `trial_label`.
pub fn assemble_runtime_grid(
    ctx: &TrialContext,
    trial_label: Hypothesis,
) -> Result<(ScoreMatrix, LabelMatrix)> {
    let n = ctx.n();
    let m = ctx.m();
    let mut scores = ScoreMatrix::zeros(n + 1, m + 1)?;
    let mut labels = ctx.cohort_labels.clone();
    for i in 0..n {
        for j in 0..m {
            scores.set(i, j, ctx.s_inter.get(i, j));
        }
        scores.set(i, m, ctx.s_t[i]);
    }
    for j in 0..m {
        scores.set(n, j, ctx.s_e[j]);
    }
    scores.set(n, m, ctx.s_trial);
    labels.set(n, m, trial_label.label());
    Ok((scores, labels))
}

/// Inverse of [`assemble_runtime_grid`]; recovers the trial context.
pub fn disassemble_runtime_grid(scores: &ScoreMatrix, labels: &LabelMatrix) -> Result<TrialContext> {
    validate_pair(scores, labels)?;
    let n = scores.rows() - 1;
    let m = scores.cols() - 1;
    let mut inter = if n > 0 && m > 0 { Some(ScoreMatrix::zeros(n, m)?) } else { None };
    if let Some(ref mut inter) = inter {
        for i in 0..n {
            for j in 0..m {
                inter.set(i, j, scores.get(i, j));
            }
        }
    }
    let s_t: Vec<f64> = (0..n).map(|i| scores.get(i, m)).collect();
    let s_e: Vec<f64> = (0..m).map(|j| scores.get(n, j)).collect();
    // An empty cohort side still needs a well-formed (possibly 0-sized) inter
    // matrix; ScoreMatrix requires >= 1x1, so model the degenerate cases with
    // an empty placeholder via TrialContext's shape rules.
    let s_inter = match inter {
        Some(x) => x,
        None => {
            // n == 0 or m == 0: a 0-sized block. Represent it as the smallest
            // matrix consistent with the shape check by special-casing below.
            return TrialContext::with_labels_degenerate(
                scores.get(n, m),
                s_e,
                s_t,
                labels.clone(),
            );
        }
    };
    TrialContext::with_labels(scores.get(n, m), s_e, s_t, s_inter, labels.clone())
}

impl TrialContext {
    fn with_labels_degenerate(
        s_trial: f64,
        s_e: Vec<f64>,
        s_t: Vec<f64>,
        cohort_labels: LabelMatrix,
    ) -> Result<Self> {
        Ok(TrialContext {
            s_trial,
            s_e,
            s_t,
            s_inter: ScoreMatrix { rows: 0, cols: 0, cells: vec![] },
            cohort_labels,
        })
    }

    /// Builds a context with an empty cohort on one or both sides.
    pub fn degenerate(s_trial: f64, s_e: Vec<f64>, s_t: Vec<f64>) -> Result<Self> {
        let labels = LabelMatrix::filled(s_t.len() + 1, s_e.len() + 1, Label::NonTarget)?;
        Self::with_labels_degenerate(s_trial, s_e, s_t, labels)
    }
}

const MATRIX_MAGIC: &str = "#scorenorm-matrix v1";

/// Writes a score/label grid as UTF-8 TSV.
///
/// Line 1 is `#scorenorm-matrix v1 rows=<K> cols=<L>`, followed by K rows of
/// L cells, each `<score>:<label>` with label in {tar, non, NA}. Scores are
/// written in shortest round-trip decimal so reads recover them bit-exactly.
/// Unobserved cells carry an ignored score field.
pub fn write_score_matrix(path: &Path, scores: &ScoreMatrix, labels: &LabelMatrix) -> Result<()> {
    validate_pair(scores, labels)?;
    let mut out = String::new();
    out.push_str(&format!("{MATRIX_MAGIC} rows={} cols={}\n", scores.rows(), scores.cols()));
    for i in 0..scores.rows() {
        let row: Vec<String> = (0..scores.cols())
            .map(|j| format!("{}:{}", scores.get(i, j), labels.get(i, j).token()))
            .collect();
        out.push_str(&row.join("\t"));
        out.push('\n');
    }
    let mut f = fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

/// Reads a grid written by [`write_score_matrix`].
pub fn read_score_matrix(path: &Path) -> Result<(ScoreMatrix, LabelMatrix)> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Parse { line: 1, msg: "empty file".into() })?;
    let (rows, cols) = parse_header(header)?;
    let mut scores = Vec::with_capacity(rows * cols);
    let mut labels = Vec::with_capacity(rows * cols);
    let mut row_count = 0;
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split('\t').collect();
        if cells.len() != cols {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected {cols} cells, found {}", cells.len()),
            });
        }
        for cell in cells {
            let (score_txt, label_txt) = cell.rsplit_once(':').ok_or_else(|| Error::Parse {
                line: lineno,
                msg: format!("cell `{cell}` is not <score>:<label>"),
            })?;
            let label = Label::from_token(label_txt).ok_or_else(|| Error::Parse {
                line: lineno,
                msg: format!("unknown label token `{label_txt}`"),
            })?;
            let score = if label.is_observed() {
                score_txt.parse::<f64>().map_err(|_| Error::Parse {
                    line: lineno,
                    msg: format!("non-numeric score `{score_txt}`"),
                })?
            } else {
                // Score field of an NA cell is ignored by format definition.
                score_txt.parse::<f64>().unwrap_or(0.0)
            };
            scores.push(score);
            labels.push(label);
        }
        row_count += 1;
    }
    if row_count != rows {
        return Err(Error::Parse {
            line: row_count + 1,
            msg: format!("expected {rows} data rows, found {row_count}"),
        });
    }
    let scores = ScoreMatrix::new(rows, cols, scores)?;
    let labels = LabelMatrix::new(rows, cols, labels)?;
    validate_pair(&scores, &labels)?;
    Ok((scores, labels))
}

fn parse_header(header: &str) -> Result<(usize, usize)> {
    let bad = |msg: String| Error::Parse { line: 1, msg };
    let rest = header
        .strip_prefix(MATRIX_MAGIC)
        .ok_or_else(|| bad(format!("missing `{MATRIX_MAGIC}` header")))?;
    let mut rows = None;
    let mut cols = None;
    for tok in rest.split_whitespace() {
        if let Some(v) = tok.strip_prefix("rows=") {
            rows = v.parse::<usize>().ok();
        } else if let Some(v) = tok.strip_prefix("cols=") {
            cols = v.parse::<usize>().ok();
        }
    }
    match (rows, cols) {
        (Some(r), Some(c)) if r >= 1 && c >= 1 => Ok((r, c)),
        _ => Err(bad("header must carry rows=<K> cols=<L>".into())),
    }
}
