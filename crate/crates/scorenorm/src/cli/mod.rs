//! Command-line pipeline: simulate, train, normalize, eval, inspect-model.
//!
//! Every subcommand is deterministic given its flags (seeds included). Exit
//! codes: 0 success, 2 validation failure, 3 numerical failure. A JSON config
//! file can supply defaults for the common knobs; explicit flags win.

pub mod files;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::data::{
    read_score_matrix, write_score_matrix, Hypothesis, Label, LabelMatrix, Prior, ScoreMatrix,
    TrialContext,
};
use crate::error::{Error, Result};
use crate::lgsm::{
    em_fit, read_model, target_posterior, write_model, BatchNormalizer, EmConfig,
    LgsmParams, ModelFile, TrainMeta,
};
use crate::metrics::{compute_report, probit, LabeledScores};
use crate::norms;
use crate::synth::{sample_corpus, sample_eval_set, CorpusSpec, TargetLayout};
use files::{
    read_manifest, read_scores, read_trials, sibling, write_manifest, write_report, write_scores,
    write_trials, DetRow, Manifest, ManifestKind, MethodReport, Report, ScoreOutcome, ScoreRecord,
    TrialRecord,
};

#[derive(Debug, Parser)]
#[command(name = "scorenorm", version, about = "Score normalization toolkit")]
pub struct Cli {
    /// JSON file with default values for common flags; explicit flags win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic score data from model parameters.
    Simulate(SimulateArgs),
    /// Fit model parameters on labeled score matrices.
    Train(TrainArgs),
    /// Normalize the trials of an evaluation set.
    Normalize(NormalizeArgs),
    /// Compute EER, Cllr and DET points for labeled score files.
    Eval(EvalArgs),
    /// Print a model file in readable form.
    InspectModel(InspectArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Raw,
    Tnorm,
    Znorm,
    Ztnorm,
    Snorm,
    Lgsm,
}

/// Flag defaults loadable from `--config`.
#[derive(Debug, Default, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub dim: Option<usize>,
    pub method: Option<String>,
    pub prior: Option<f64>,
    pub tol: Option<f64>,
    pub max_iters: Option<usize>,
    pub n_matrices: Option<usize>,
    pub rows: Option<usize>,
    pub cols: Option<usize>,
    pub layout: Option<String>,
    pub cohort_rows: Option<usize>,
    pub cohort_cols: Option<usize>,
    pub targets: Option<usize>,
    pub nontargets: Option<usize>,
}

impl FileConfig {
    fn load(path: Option<&Path>) -> Result<FileConfig> {
        match path {
            Some(p) => Ok(serde_json::from_str(&std::fs::read_to_string(p)?)?),
            None => Ok(FileConfig::default()),
        }
    }

    fn layout(&self) -> Result<Option<TargetLayout>> {
        self.layout.as_deref().map(str::parse).transpose()
    }

    fn method(&self) -> Result<Option<Method>> {
        self.method
            .as_deref()
            .map(|m| {
                Method::from_str(m, true)
                    .map_err(|_| Error::InvalidParam(format!("unknown method `{m}` in config")))
            })
            .transpose()
    }
}

fn parse_layout(s: &str) -> std::result::Result<TargetLayout, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Directory for the generated files and manifest.
    #[arg(long, value_name = "DIR")]
    pub out_dir: PathBuf,
    /// Model file supplying the generating parameters; overrides the inline
    /// parameter flags.
    #[arg(long, value_name = "FILE")]
    pub params: Option<PathBuf>,
    #[arg(long, default_value_t = 2.0)]
    pub mu_tar: f64,
    #[arg(long, default_value_t = 0.0)]
    pub mu_non: f64,
    #[arg(long, default_value_t = 1.0)]
    pub var_tar: f64,
    #[arg(long, default_value_t = 1.0)]
    pub var_non: f64,
    /// Comma-separated loading vector; its length sets the hidden dimension.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub alpha_tar: Vec<f64>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub alpha_non: Vec<f64>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub beta_tar: Vec<f64>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub beta_non: Vec<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Corpus mode: number of score matrices.
    #[arg(long)]
    pub n_matrices: Option<usize>,
    #[arg(long)]
    pub rows: Option<usize>,
    #[arg(long)]
    pub cols: Option<usize>,
    /// Label layout, `diagonal` or `all-non`.
    #[arg(long, value_parser = parse_layout)]
    pub layout: Option<TargetLayout>,
    /// Generate an evaluation set (cohorts + trials) instead of a corpus.
    #[arg(long)]
    pub eval: bool,
    /// Enrollment-cohort size N (eval mode).
    #[arg(long)]
    pub cohort_rows: Option<usize>,
    /// Test-cohort size M (eval mode).
    #[arg(long)]
    pub cohort_cols: Option<usize>,
    /// Number of target trials (eval mode).
    #[arg(long)]
    pub targets: Option<usize>,
    /// Number of non-target trials (eval mode).
    #[arg(long)]
    pub nontargets: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Score-matrix files; may be combined with --manifest.
    #[arg(value_name = "MATRIX")]
    pub inputs: Vec<PathBuf>,
    /// Corpus manifest listing training matrices.
    #[arg(long, value_name = "FILE")]
    pub manifest: Option<PathBuf>,
    /// Hidden dimension D.
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Relative objective-change convergence threshold.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Disable the minimum-divergence re-standardization step.
    #[arg(long)]
    pub no_min_div: bool,
    /// Output model file.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Optional JSON training trace (per-iteration objectives).
    #[arg(long, value_name = "FILE")]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct NormalizeArgs {
    /// Evaluation-set manifest.
    #[arg(long, value_name = "FILE")]
    pub manifest: PathBuf,
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    /// Model file, required for --method lgsm.
    #[arg(long, value_name = "FILE")]
    pub model: Option<PathBuf>,
    /// Target prior; adds a posterior column to the output.
    #[arg(long)]
    pub prior: Option<f64>,
    /// Output score file.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Labeled score file per method, as NAME=PATH; repeatable.
    #[arg(long = "scores", value_name = "NAME=PATH", required = true)]
    pub scores: Vec<String>,
    /// Output report file.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Directory for per-method DET point files (TSV with probit columns).
    #[arg(long, value_name = "DIR")]
    pub det_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(value_name = "MODEL")]
    pub model: PathBuf,
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = FileConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Simulate(args) => cmd_simulate(args, &cfg),
        Command::Train(args) => cmd_train(args, &cfg),
        Command::Normalize(args) => cmd_normalize(args, &cfg),
        Command::Eval(args) => cmd_eval(args),
        Command::InspectModel(args) => cmd_inspect(args),
    }
}

fn inline_params(args: &SimulateArgs) -> Result<LgsmParams> {
    let d = args.alpha_tar.len();
    LgsmParams::new(
        d,
        args.mu_tar,
        args.mu_non,
        args.var_tar,
        args.var_non,
        args.alpha_tar.clone(),
        args.alpha_non.clone(),
        args.beta_tar.clone(),
        args.beta_non.clone(),
    )
}

fn matrix_row(m: &ScoreMatrix, i: usize) -> Vec<f64> {
    (0..m.cols()).map(|j| m.get(i, j)).collect()
}

fn cmd_simulate(args: SimulateArgs, cfg: &FileConfig) -> Result<()> {
    let params = match &args.params {
        Some(path) => read_model(path)?.params,
        None => inline_params(&args)?,
    };
    let seed = args.seed.or(cfg.seed).unwrap_or(0);
    std::fs::create_dir_all(&args.out_dir)?;
    let manifest_path = args.out_dir.join("manifest.json");
    if args.eval {
        let n = args.cohort_rows.or(cfg.cohort_rows).unwrap_or(10);
        let m = args.cohort_cols.or(cfg.cohort_cols).unwrap_or(10);
        let n_tar = args.targets.or(cfg.targets).unwrap_or(100);
        let n_non = args.nontargets.or(cfg.nontargets).unwrap_or(100);
        let eval = sample_eval_set(&params, n, m, n_tar, n_non, seed)?;
        let total = eval.trials.len();

        let inter_labels = LabelMatrix::filled(n, m, Label::NonTarget)?;
        write_score_matrix(&args.out_dir.join("inter.tsv"), &eval.s_inter, &inter_labels)?;

        let mut enroll = ScoreMatrix::zeros(total, m)?;
        let mut test = ScoreMatrix::zeros(total, n)?;
        let mut trials = Vec::with_capacity(total);
        for (t, trial) in eval.trials.iter().enumerate() {
            for j in 0..m {
                enroll.set(t, j, trial.s_e[j]);
            }
            for i in 0..n {
                test.set(t, i, trial.s_t[i]);
            }
            trials.push(TrialRecord {
                id: format!("trial_{t:05}"),
                s_trial: trial.s_trial,
                enroll_id: t,
                test_id: t,
                label: trial.label,
            });
        }
        let enroll_labels = LabelMatrix::filled(total, m, Label::NonTarget)?;
        let test_labels = LabelMatrix::filled(total, n, Label::NonTarget)?;
        write_score_matrix(&args.out_dir.join("enroll_cohort.tsv"), &enroll, &enroll_labels)?;
        write_score_matrix(&args.out_dir.join("test_cohort.tsv"), &test, &test_labels)?;
        write_trials(&args.out_dir.join("trials.tsv"), &trials)?;
        write_manifest(
            &manifest_path,
            &Manifest {
                format: files::MANIFEST_FORMAT.into(),
                version: files::FORMAT_VERSION,
                seed,
                params,
                kind: ManifestKind::Eval {
                    inter: "inter.tsv".into(),
                    enroll_cohort: "enroll_cohort.tsv".into(),
                    test_cohort: "test_cohort.tsv".into(),
                    trials: "trials.tsv".into(),
                },
            },
        )?;
        println!(
            "wrote evaluation set: {n}x{m} cohort, {n_tar} target / {n_non} non-target trials -> {}",
            manifest_path.display()
        );
    } else {
        let spec = CorpusSpec {
            n_matrices: args.n_matrices.or(cfg.n_matrices).unwrap_or(1),
            rows: args.rows.or(cfg.rows).unwrap_or(20),
            cols: args.cols.or(cfg.cols).unwrap_or(20),
            layout: match args.layout {
                Some(l) => l,
                None => cfg.layout()?.unwrap_or(TargetLayout::Diagonal),
            },
            seed,
        };
        let corpus = sample_corpus(&params, &spec)?;
        let mut paths = Vec::with_capacity(corpus.len());
        for (i, (scores, labels)) in corpus.iter().enumerate() {
            let name = format!("matrix_{i:04}.tsv");
            write_score_matrix(&args.out_dir.join(&name), scores, labels)?;
            paths.push(PathBuf::from(name));
        }
        write_manifest(
            &manifest_path,
            &Manifest {
                format: files::MANIFEST_FORMAT.into(),
                version: files::FORMAT_VERSION,
                seed,
                params,
                kind: ManifestKind::Corpus { layout: spec.layout, matrices: paths },
            },
        )?;
        println!(
            "wrote {} {}x{} matrices -> {}",
            spec.n_matrices,
            spec.rows,
            spec.cols,
            manifest_path.display()
        );
    }
    Ok(())
}

fn cmd_train(args: TrainArgs, cfg: &FileConfig) -> Result<()> {
    let mut paths = args.inputs.clone();
    if let Some(manifest_path) = &args.manifest {
        let manifest = read_manifest(manifest_path)?;
        match manifest.kind {
            ManifestKind::Corpus { matrices, .. } => {
                paths.extend(matrices.iter().map(|p| sibling(manifest_path, p)));
            }
            ManifestKind::Eval { .. } => {
                return Err(Error::InvalidParam(
                    "training expects a corpus manifest, got an evaluation-set manifest".into(),
                ))
            }
        }
    }
    if paths.is_empty() {
        return Err(Error::InvalidParam("no training matrices given".into()));
    }
    let matrices: Result<Vec<_>> = paths.iter().map(|p| read_score_matrix(p)).collect();
    let matrices = matrices?;
    let config = EmConfig {
        tol: args.tol.or(cfg.tol).unwrap_or(1e-8),
        max_iters: args.max_iters.or(cfg.max_iters).unwrap_or(500),
        seed: args.seed.or(cfg.seed).unwrap_or(0),
        min_div: !args.no_min_div,
        ..EmConfig::default()
    };
    let d = args.dim.or(cfg.dim).unwrap_or(1);
    let (params, trace) = em_fit(&matrices, d, &config)?;
    let objective = *trace.objectives.last().expect("at least one iteration");
    if !trace.converged {
        log::warn!("training stopped at max_iters={} without converging", config.max_iters);
    }
    let model = ModelFile::new(
        params.clone(),
        TrainMeta {
            seed: config.seed,
            iterations: trace.iterations,
            final_objective: objective,
            converged: trace.converged,
        },
    );
    write_model(&args.out, &model)?;
    if let Some(trace_path) = &args.trace {
        std::fs::write(trace_path, serde_json::to_string_pretty(&trace)?)?;
    }
    println!("class       mu        sigma2        nu");
    for h in [Hypothesis::Target, Hypothesis::NonTarget] {
        let name = match h {
            Hypothesis::Target => "target   ",
            Hypothesis::NonTarget => "nontarget",
        };
        println!(
            "{name}  {:>9.5}  {:>9.5}  {:>9.5}",
            params.mu(h),
            params.var(h),
            params.nu(h)
        );
    }
    println!("final objective  {objective:.6}");
    println!(
        "converged        {} ({} iterations)",
        if trace.converged { "yes" } else { "no" },
        trace.iterations
    );
    Ok(())
}

struct EvalSetFiles {
    inter: ScoreMatrix,
    enroll: ScoreMatrix,
    test: ScoreMatrix,
    trials: Vec<TrialRecord>,
}

fn load_eval_set(manifest_path: &Path) -> Result<EvalSetFiles> {
    let manifest = read_manifest(manifest_path)?;
    let ManifestKind::Eval { inter, enroll_cohort, test_cohort, trials } = manifest.kind else {
        return Err(Error::InvalidParam(
            "normalize expects an evaluation-set manifest, got a corpus manifest".into(),
        ));
    };
    let (inter, _) = read_score_matrix(&sibling(manifest_path, &inter))?;
    let (enroll, _) = read_score_matrix(&sibling(manifest_path, &enroll_cohort))?;
    let (test, _) = read_score_matrix(&sibling(manifest_path, &test_cohort))?;
    let trials = read_trials(&sibling(manifest_path, &trials))?;
    if enroll.cols() != inter.cols() || test.cols() != inter.rows() {
        return Err(Error::Shape(format!(
            "cohort files disagree: inter is {}x{}, enroll rows have {} scores, test rows have {}",
            inter.rows(),
            inter.cols(),
            enroll.cols(),
            test.cols()
        )));
    }
    for t in &trials {
        if t.enroll_id >= enroll.rows() || t.test_id >= test.rows() {
            return Err(Error::Shape(format!(
                "trial `{}` references cohort rows ({}, {}) outside ({}, {})",
                t.id,
                t.enroll_id,
                t.test_id,
                enroll.rows(),
                test.rows()
            )));
        }
    }
    Ok(EvalSetFiles { inter, enroll, test, trials })
}

fn cmd_normalize(args: NormalizeArgs, cfg: &FileConfig) -> Result<()> {
    let method = match args.method {
        Some(m) => m,
        None => cfg.method()?.ok_or_else(|| Error::InvalidParam("no --method given".into()))?,
    };
    let prior = args.prior.or(cfg.prior).map(Prior::new).transpose()?;
    let set = load_eval_set(&args.manifest)?;
    let batch = match method {
        Method::Lgsm => {
            let model_path = args
                .model
                .as_ref()
                .ok_or_else(|| Error::InvalidParam("--method lgsm requires --model".into()))?;
            let model = read_model(model_path)?;
            let labels =
                LabelMatrix::filled(set.inter.rows() + 1, set.inter.cols() + 1, Label::NonTarget)?;
            Some((BatchNormalizer::new(&model.params, &set.inter, &labels)?, model.params))
        }
        _ => None,
    };
    let mut records = Vec::with_capacity(set.trials.len());
    let mut failures = 0usize;
    let mut first_err: Option<Error> = None;
    for t in &set.trials {
        let s_e = matrix_row(&set.enroll, t.enroll_id);
        let s_t = matrix_row(&set.test, t.test_id);
        let value = match (method, &batch) {
            (Method::Raw, _) => Ok(t.s_trial),
            (Method::Tnorm, _) => norms::tnorm(t.s_trial, &s_t),
            (Method::Znorm, _) => norms::znorm(t.s_trial, &s_e),
            (Method::Ztnorm, _) => TrialContext::new(t.s_trial, s_e, s_t, set.inter.clone())
                .and_then(|ctx| norms::ztnorm(&ctx)),
            (Method::Snorm, _) => norms::snorm(t.s_trial, &s_e, &s_t),
            (Method::Lgsm, Some((norm, _))) => norm.score(t.s_trial, &s_e, &s_t),
            (Method::Lgsm, None) => unreachable!(),
        };
        let outcome = match value {
            Ok(v) => ScoreOutcome::Score { value: v, posterior: prior.map(|p| target_posterior(v, p)) },
            Err(e) => {
                log::warn!("trial `{}` failed: {e}", t.id);
                failures += 1;
                let msg = e.to_string();
                if first_err.is_none() {
                    first_err = Some(e);
                }
                ScoreOutcome::Failed(msg)
            }
        };
        records.push(ScoreRecord { id: t.id.clone(), label: t.label, outcome });
    }
    if failures == set.trials.len() {
        return Err(first_err.expect("at least one failure"));
    }
    write_scores(&args.out, &records)?;
    println!(
        "normalized {} trials with {:?} ({} failed) -> {}",
        records.len(),
        method,
        failures,
        args.out.display()
    );
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let mut methods = Vec::new();
    for entry in &args.scores {
        let (name, path) = entry
            .split_once('=')
            .ok_or_else(|| Error::InvalidParam(format!("expected NAME=PATH, got `{entry}`")))?;
        let scores = read_scores(Path::new(path))?;
        let target: Vec<f64> =
            scores.iter().filter(|s| s.2 == Hypothesis::Target).map(|s| s.1).collect();
        let nontarget: Vec<f64> =
            scores.iter().filter(|s| s.2 == Hypothesis::NonTarget).map(|s| s.1).collect();
        let report = compute_report(&LabeledScores::new(target, nontarget)?)?;
        let det: Vec<DetRow> = report
            .det
            .iter()
            .map(|p| DetRow {
                pfa: p.pfa,
                pmiss: p.pmiss,
                probit_pfa: probit(p.pfa),
                probit_pmiss: probit(p.pmiss),
            })
            .collect();
        methods.push(MethodReport {
            name: name.to_string(),
            eer: report.eer,
            cllr: report.cllr,
            min_cllr: report.min_cllr,
            det,
        });
    }
    if let Some(dir) = &args.det_dir {
        std::fs::create_dir_all(dir)?;
        for m in &methods {
            let mut out = String::from("#pfa\tpmiss\tprobit_pfa\tprobit_pmiss\n");
            for row in &m.det {
                out.push_str(&format!(
                    "{}\t{}\t{}\t{}\n",
                    row.pfa, row.pmiss, row.probit_pfa, row.probit_pmiss
                ));
            }
            std::fs::write(dir.join(format!("{}_det.tsv", m.name)), out)?;
        }
    }
    println!("method            eer%      cllr  min_cllr");
    for m in &methods {
        println!("{:<12}  {:>8.3}  {:>8.4}  {:>8.4}", m.name, 100.0 * m.eer, m.cllr, m.min_cllr);
    }
    write_report(
        &args.out,
        &Report { format: files::REPORT_FORMAT.into(), version: files::FORMAT_VERSION, methods },
    )?;
    Ok(())
}

fn cmd_inspect(args: InspectArgs) -> Result<()> {
    let model = read_model(&args.model)?;
    let p = &model.params;
    println!("hidden dimension  {}", p.d);
    println!("trainable scalars {}", p.scalar_count());
    for h in [Hypothesis::Target, Hypothesis::NonTarget] {
        let name = match h {
            Hypothesis::Target => "target   ",
            Hypothesis::NonTarget => "nontarget",
        };
        println!(
            "{name}  mu {:>10.5}  sigma2 {:>10.5}  nu {:>10.5}  score var {:>10.5}",
            p.mu(h),
            p.var(h),
            p.nu(h),
            p.single_score_variance(h)
        );
        println!("           alpha {:?}  beta {:?}", p.alpha(h), p.beta(h));
    }
    println!(
        "trained with seed {} ({} iterations, converged: {}, objective {:.6})",
        model.meta.seed, model.meta.iterations, model.meta.converged, model.meta.final_objective
    );
    Ok(())
}
