//! On-disk formats owned by the CLI: manifests, trial lists, score lists and
//! evaluation reports. Score matrices and model files are defined in the
//! library.

use std::path::{Path, PathBuf};

use crate::data::Hypothesis;
use crate::error::{Error, Result};
use crate::lgsm::LgsmParams;
use crate::synth::TargetLayout;

pub const MANIFEST_FORMAT: &str = "scorenorm-manifest";
pub const REPORT_FORMAT: &str = "scorenorm-report";
pub const FORMAT_VERSION: u32 = 1;

/// Index of a simulated data set; paths are relative to the manifest file.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub params: LgsmParams,
    #[serde(flatten)]
    pub kind: ManifestKind,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ManifestKind {
    /// Training corpus: one score-matrix file per entry.
    Corpus { layout: TargetLayout, matrices: Vec<PathBuf> },
    /// Evaluation set: a shared inter-cohort grid plus per-trial cohort
    /// score rows and a trial list.
    Eval {
        inter: PathBuf,
        enroll_cohort: PathBuf,
        test_cohort: PathBuf,
        trials: PathBuf,
    },
}

pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(manifest)?)?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let manifest: Manifest = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    if manifest.format != MANIFEST_FORMAT || manifest.version != FORMAT_VERSION {
        return Err(Error::InvalidParam(format!(
            "unsupported manifest {}/{}",
            manifest.format, manifest.version
        )));
    }
    manifest.params.validate()?;
    Ok(manifest)
}

/// Resolves a manifest-relative path.
pub fn sibling(manifest_path: &Path, rel: &Path) -> PathBuf {
    match manifest_path.parent() {
        Some(dir) => dir.join(rel),
        None => rel.to_path_buf(),
    }
}

/// One line of a trial list: the raw trial score plus row indices into the
/// two cohort-score matrices.
#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub id: String,
    pub s_trial: f64,
    pub enroll_id: usize,
    pub test_id: usize,
    pub label: Hypothesis,
}

const TRIALS_HEADER: &str = "#scorenorm-trials v1";

pub fn write_trials(path: &Path, trials: &[TrialRecord]) -> Result<()> {
    let mut out = format!("{TRIALS_HEADER} count={}\n", trials.len());
    for t in trials {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            t.id,
            t.s_trial,
            t.enroll_id,
            t.test_id,
            t.label.label().token()
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_trials(path: &Path) -> Result<Vec<TrialRecord>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Parse { line: 1, msg: "empty trial file".into() })?;
    if !header.starts_with(TRIALS_HEADER) {
        return Err(Error::Parse { line: 1, msg: format!("bad trial header `{header}`") });
    }
    let mut trials = Vec::new();
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let n = idx + 1;
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(Error::Parse { line: n, msg: format!("expected 5 fields, got {}", fields.len()) });
        }
        let parse_num = |v: &str, what: &str| -> Result<f64> {
            v.parse::<f64>()
                .map_err(|_| Error::Parse { line: n, msg: format!("bad {what} `{v}`") })
        };
        let parse_idx = |v: &str, what: &str| -> Result<usize> {
            v.parse::<usize>()
                .map_err(|_| Error::Parse { line: n, msg: format!("bad {what} `{v}`") })
        };
        let label = match fields[4] {
            "tar" => Hypothesis::Target,
            "non" => Hypothesis::NonTarget,
            other => {
                return Err(Error::Parse { line: n, msg: format!("unknown label `{other}`") })
            }
        };
        trials.push(TrialRecord {
            id: fields[0].to_string(),
            s_trial: parse_num(fields[1], "score")?,
            enroll_id: parse_idx(fields[2], "enroll id")?,
            test_id: parse_idx(fields[3], "test id")?,
            label,
        });
    }
    Ok(trials)
}

/// One output line of `normalize`: a score or a per-trial error.
#[derive(Debug, Clone)]
pub struct ScoreRecord {
    pub id: String,
    pub label: Hypothesis,
    pub outcome: ScoreOutcome,
}

#[derive(Debug, Clone)]
pub enum ScoreOutcome {
    Score { value: f64, posterior: Option<f64> },
    Failed(String),
}

const SCORES_HEADER: &str = "#scorenorm-scores v1";

pub fn write_scores(path: &Path, records: &[ScoreRecord]) -> Result<()> {
    let mut out = format!("{SCORES_HEADER} count={}\n", records.len());
    for r in records {
        let label = r.label.label().token();
        match &r.outcome {
            ScoreOutcome::Score { value, posterior: None } => {
                out.push_str(&format!("{}\t{}\t{}\n", r.id, value, label));
            }
            ScoreOutcome::Score { value, posterior: Some(p) } => {
                out.push_str(&format!("{}\t{}\t{}\t{}\n", r.id, value, label, p));
            }
            ScoreOutcome::Failed(msg) => {
                out.push_str(&format!("{}\tERROR\t{}\t{}\n", r.id, label, msg.replace(['\t', '\n'], " ")));
            }
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Reads a score list, skipping per-trial error records.
pub fn read_scores(path: &Path) -> Result<Vec<(String, f64, Hypothesis)>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Parse { line: 1, msg: "empty score file".into() })?;
    if !header.starts_with(SCORES_HEADER) {
        return Err(Error::Parse { line: 1, msg: format!("bad score header `{header}`") });
    }
    let mut scores = Vec::new();
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let n = idx + 1;
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 3 {
            return Err(Error::Parse { line: n, msg: "expected at least 3 fields".into() });
        }
        if fields[1] == "ERROR" {
            log::warn!("skipping failed trial `{}` in {}", fields[0], path.display());
            continue;
        }
        let value = fields[1]
            .parse::<f64>()
            .map_err(|_| Error::Parse { line: n, msg: format!("bad score `{}`", fields[1]) })?;
        let label = match fields[2] {
            "tar" => Hypothesis::Target,
            "non" => Hypothesis::NonTarget,
            other => {
                return Err(Error::Parse { line: n, msg: format!("unknown label `{other}`") })
            }
        };
        scores.push((fields[0].to_string(), value, label));
    }
    Ok(scores)
}

/// Per-method summary plus DET points in probability and probit coordinates.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct MethodReport {
    pub name: String,
    pub eer: f64,
    pub cllr: f64,
    pub min_cllr: f64,
    pub det: Vec<DetRow>,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct DetRow {
    pub pfa: f64,
    pub pmiss: f64,
    pub probit_pfa: f64,
    pub probit_pmiss: f64,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct Report {
    pub format: String,
    pub version: u32,
    pub methods: Vec<MethodReport>,
}

pub fn write_report(path: &Path, report: &Report) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(report)?)?;
    Ok(())
}

pub fn read_report(path: &Path) -> Result<Report> {
    let report: Report = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    if report.format != REPORT_FORMAT || report.version != FORMAT_VERSION {
        return Err(Error::InvalidParam(format!(
            "unsupported report {}/{}",
            report.format, report.version
        )));
    }
    Ok(report)
}
