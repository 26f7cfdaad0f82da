//! End-to-end tests of the `scorenorm` binary.

use std::path::Path;
use std::process::{Command, Output};

use scorenorm::cli::files::{read_manifest, read_report, read_scores, write_trials, ManifestKind,
                            TrialRecord};
use scorenorm::data::{write_score_matrix, Hypothesis, Label, LabelMatrix, ScoreMatrix};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_scorenorm"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let corpus = root.join("corpus");
    let model = root.join("model.json");
    let evaldir = root.join("eval");
    assert_ok(&run(&[
        "simulate",
        "--out-dir",
        path_str(&corpus),
        "--n-matrices",
        "4",
        "--rows",
        "20",
        "--cols",
        "20",
        "--alpha-tar",
        "0.6",
        "--alpha-non",
        "0.3",
        "--beta-tar",
        "0.5",
        "--beta-non",
        "0.4",
        "--seed",
        "5",
    ]));
    let manifest = read_manifest(&corpus.join("manifest.json")).unwrap();
    let ManifestKind::Corpus { matrices, .. } = &manifest.kind else {
        panic!("expected corpus manifest")
    };
    assert_eq!(matrices.len(), 4);
    for m in matrices {
        assert!(corpus.join(m).exists());
    }

    assert_ok(&run(&[
        "train",
        "--manifest",
        path_str(&corpus.join("manifest.json")),
        "--dim",
        "1",
        "--out",
        path_str(&model),
        "--trace",
        path_str(&root.join("trace.json")),
    ]));

    assert_ok(&run(&[
        "simulate",
        "--eval",
        "--out-dir",
        path_str(&evaldir),
        "--params",
        path_str(&model),
        "--cohort-rows",
        "6",
        "--cohort-cols",
        "6",
        "--targets",
        "40",
        "--nontargets",
        "40",
        "--seed",
        "9",
    ]));
    let eval_manifest = evaldir.join("manifest.json");

    for (method, extra) in [("raw", None), ("snorm", None), ("lgsm", Some(&model))] {
        let out_file = root.join(format!("{method}.tsv"));
        let mut args = vec![
            "normalize".to_string(),
            "--manifest".into(),
            path_str(&eval_manifest).into(),
            "--method".into(),
            method.into(),
            "--out".into(),
            path_str(&out_file).into(),
        ];
        if let Some(m) = extra {
            args.push("--model".into());
            args.push(path_str(m).into());
        }
        let out = bin().args(&args).output().unwrap();
        assert_ok(&out);
        assert_eq!(read_scores(&out_file).unwrap().len(), 80);
    }

    let report_path = root.join("report.json");
    let det_dir = root.join("det");
    assert_ok(&run(&[
        "eval",
        "--scores",
        &format!("raw={}", path_str(&root.join("raw.tsv"))),
        "--scores",
        &format!("lgsm={}", path_str(&root.join("lgsm.tsv"))),
        "--out",
        path_str(&report_path),
        "--det-dir",
        path_str(&det_dir),
    ]));
    let report = read_report(&report_path).unwrap();
    assert_eq!(report.methods.len(), 2);
    for m in &report.methods {
        assert!(m.cllr >= m.min_cllr - 1e-12, "{}: cllr < min_cllr", m.name);
        assert!(!m.det.is_empty());
        assert!(det_dir.join(format!("{}_det.tsv", m.name)).exists());
    }

    assert_ok(&run(&["inspect-model", path_str(&model)]));
}

#[test]
fn simulate_and_train_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    for sub in ["a", "b"] {
        assert_ok(&run(&[
            "simulate",
            "--out-dir",
            path_str(&root.join(sub)),
            "--n-matrices",
            "3",
            "--rows",
            "12",
            "--cols",
            "12",
            "--alpha-tar",
            "0.5",
            "--alpha-non",
            "0.2",
            "--beta-tar",
            "0.4",
            "--beta-non",
            "0.3",
            "--seed",
            "77",
        ]));
        assert_ok(&run(&[
            "train",
            "--manifest",
            path_str(&root.join(sub).join("manifest.json")),
            "--dim",
            "1",
            "--seed",
            "4",
            "--out",
            path_str(&root.join(format!("model_{sub}.json"))),
        ]));
    }
    for name in ["manifest.json", "matrix_0000.tsv", "matrix_0002.tsv"] {
        let a = std::fs::read(root.join("a").join(name)).unwrap();
        let b = std::fs::read(root.join("b").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
    let ma = std::fs::read(root.join("model_a.json")).unwrap();
    let mb = std::fs::read(root.join("model_b.json")).unwrap();
    assert_eq!(ma, mb, "model files differ between identical runs");
}

#[test]
fn validation_failures_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let out = run(&["simulate", "--out-dir", path_str(&root.join("x")), "--n-matrices", "0"]);
    assert_eq!(out.status.code(), Some(2), "n_matrices=0 should exit 2");

    let out = run(&[
        "train",
        path_str(&root.join("missing.tsv")),
        "--out",
        path_str(&root.join("m.json")),
    ]);
    assert_eq!(out.status.code(), Some(2), "missing input should exit 2");

    // one-class matrix: both hypotheses are required for training
    let scores = ScoreMatrix::new(2, 2, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
    let labels = LabelMatrix::filled(2, 2, Label::NonTarget).unwrap();
    let one_class = root.join("one_class.tsv");
    write_score_matrix(&one_class, &scores, &labels).unwrap();
    let out = run(&["train", path_str(&one_class), "--out", path_str(&root.join("m.json"))]);
    assert_eq!(out.status.code(), Some(2), "missing class should exit 2");
}

fn tiny_eval_set(root: &Path) -> std::path::PathBuf {
    // N=3 enrollment cohort rows, M=2 test cohort columns
    let inter = ScoreMatrix::new(3, 2, vec![0.5, -0.5, 1.0, 0.0, -1.0, 0.5]).unwrap();
    write_score_matrix(
        &root.join("inter.tsv"),
        &inter,
        &LabelMatrix::filled(3, 2, Label::NonTarget).unwrap(),
    )
    .unwrap();
    let enroll = ScoreMatrix::new(2, 2, vec![0.2, -0.1, 0.4, 0.3]).unwrap();
    write_score_matrix(
        &root.join("enroll.tsv"),
        &enroll,
        &LabelMatrix::filled(2, 2, Label::NonTarget).unwrap(),
    )
    .unwrap();
    let test = ScoreMatrix::new(2, 3, vec![1.0, 2.0, 3.0, 0.0, 1.0, -1.0]).unwrap();
    write_score_matrix(
        &root.join("test.tsv"),
        &test,
        &LabelMatrix::filled(2, 3, Label::NonTarget).unwrap(),
    )
    .unwrap();
    write_trials(
        &root.join("trials.tsv"),
        &[
            TrialRecord {
                id: "t0".into(),
                s_trial: 3.0,
                enroll_id: 0,
                test_id: 0,
                label: Hypothesis::Target,
            },
            TrialRecord {
                id: "t1".into(),
                s_trial: -0.25,
                enroll_id: 1,
                test_id: 1,
                label: Hypothesis::NonTarget,
            },
        ],
    )
    .unwrap();
    let manifest = serde_json::json!({
        "format": "scorenorm-manifest",
        "version": 1,
        "seed": 0,
        "params": {
            "d": 0, "mu_tar": 1.0, "mu_non": 0.0, "var_tar": 1.0, "var_non": 1.0,
            "alpha_tar": [], "alpha_non": [], "beta_tar": [], "beta_non": []
        },
        "kind": "eval",
        "inter": "inter.tsv",
        "enroll_cohort": "enroll.tsv",
        "test_cohort": "test.tsv",
        "trials": "trials.tsv"
    });
    let path = root.join("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest).unwrap()).unwrap();
    path
}

#[test]
fn normalize_raw_is_identity_and_tnorm_matches_hand_example() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let manifest = tiny_eval_set(root);

    let raw_out = root.join("raw.tsv");
    assert_ok(&run(&[
        "normalize",
        "--manifest",
        path_str(&manifest),
        "--method",
        "raw",
        "--out",
        path_str(&raw_out),
    ]));
    let raw = read_scores(&raw_out).unwrap();
    assert_eq!(raw.len(), 2);
    assert_eq!(raw[0].0, "t0");
    assert_eq!(raw[0].1, 3.0);
    assert_eq!(raw[1].0, "t1");
    assert_eq!(raw[1].1, -0.25);

    // trial t0: s=3 against test-cohort scores {1,2,3}, sample stats (2, 1)
    let t_out = root.join("tnorm.tsv");
    assert_ok(&run(&[
        "normalize",
        "--manifest",
        path_str(&manifest),
        "--method",
        "tnorm",
        "--out",
        path_str(&t_out),
    ]));
    let tn = read_scores(&t_out).unwrap();
    assert!((tn[0].1 - 1.0).abs() < 1e-12, "tnorm gave {}", tn[0].1);
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let cfg = root.join("cfg.json");
    std::fs::write(&cfg, r#"{"seed": 5, "n_matrices": 2, "rows": 8, "cols": 8}"#).unwrap();

    assert_ok(&run(&[
        "simulate",
        "--out-dir",
        path_str(&root.join("from_cfg")),
        "--config",
        path_str(&cfg),
    ]));
    assert_ok(&run(&[
        "simulate",
        "--out-dir",
        path_str(&root.join("from_flags")),
        "--n-matrices",
        "2",
        "--rows",
        "8",
        "--cols",
        "8",
        "--seed",
        "5",
    ]));
    let a = std::fs::read(root.join("from_cfg").join("matrix_0001.tsv")).unwrap();
    let b = std::fs::read(root.join("from_flags").join("matrix_0001.tsv")).unwrap();
    assert_eq!(a, b);

    // the explicit flag overrides the config seed
    assert_ok(&run(&[
        "simulate",
        "--out-dir",
        path_str(&root.join("override")),
        "--config",
        path_str(&cfg),
        "--seed",
        "6",
    ]));
    let c = std::fs::read(root.join("override").join("matrix_0001.tsv")).unwrap();
    assert_ne!(a, c);
}

#[test]
fn lgsm_without_model_exits_2_and_numerical_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let manifest = tiny_eval_set(root);

    let out = run(&[
        "normalize",
        "--manifest",
        path_str(&manifest),
        "--method",
        "lgsm",
        "--out",
        path_str(&root.join("x.tsv")),
    ]);
    assert_eq!(out.status.code(), Some(2), "lgsm without --model should exit 2");

    // loadings large enough to overflow alpha^2/var push the precision to
    // infinity, which is a numerical failure
    let bad = serde_json::json!({
        "format": "scorenorm-model",
        "version": 1,
        "params": {
            "d": 1, "mu_tar": 1.0, "mu_non": 0.0, "var_tar": 1e-300, "var_non": 1.0,
            "alpha_tar": [1e200], "alpha_non": [0.1], "beta_tar": [1e200], "beta_non": [0.1]
        },
        "meta": {"seed": 0, "iterations": 0, "final_objective": 0.0, "converged": true}
    });
    let bad_path = root.join("bad_model.json");
    std::fs::write(&bad_path, serde_json::to_string(&bad).unwrap()).unwrap();
    let out = run(&[
        "normalize",
        "--manifest",
        path_str(&manifest),
        "--method",
        "lgsm",
        "--model",
        path_str(&bad_path),
        "--out",
        path_str(&root.join("y.tsv")),
    ]);
    assert_eq!(out.status.code(), Some(3), "overflowing model should exit 3");
}

#[test]
fn eval_with_single_class_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let scores_path = root.join("scores.tsv");
    std::fs::write(&scores_path, "#scorenorm-scores v1 count=2\na\t1.0\ttar\nb\t2.0\ttar\n")
        .unwrap();
    let out = run(&[
        "eval",
        "--scores",
        &format!("only={}", path_str(&scores_path)),
        "--out",
        path_str(&root.join("report.json")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}
