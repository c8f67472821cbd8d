use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use mvfuse_cli::synthetic::{write_bundle, BundleConfig};

fn mvfuse(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mvfuse"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn bundle(dir: &Path, cfg: &BundleConfig) {
    write_bundle(dir, cfg).unwrap();
}

fn small() -> BundleConfig {
    let mut c = BundleConfig::with_seed(3);
    c.views.n_samples = 300;
    c
}

fn run(dir: &Path, model: &str, extra: &[&str]) -> Output {
    let mut args = vec!["run", "--config-data", "data.yaml", "--config-model", model];
    args.extend_from_slice(extra);
    mvfuse(&args, dir)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn classification_run_then_refuses_to_overwrite() {
    let dir = tempfile::tempdir().unwrap();
    bundle(dir.path(), &small());
    let ok = run(dir.path(), "model.yaml", &[]);
    assert!(ok.status.success(), "{}", stderr(&ok));
    let preds = fs::read_to_string(dir.path().join("results/predictions.csv")).unwrap();
    assert!(preds.starts_with("sample_id,probability\n"));
    let again = run(dir.path(), "model.yaml", &[]);
    assert_eq!(again.status.code(), Some(2));
    assert!(stderr(&again).contains("not empty"));
}

#[test]
fn config_errors_exit_2_and_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    bundle(dir.path(), &small());
    let text = fs::read_to_string(dir.path().join("model.yaml")).unwrap();
    fs::write(dir.path().join("bad.yaml"), text.replace("logregrssm:", "svm:")).unwrap();
    let o = run(dir.path(), "bad.yaml", &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("prediction.svm"), "{}", stderr(&o));

    let o = run(dir.path(), "model.yaml", &["--cohort-cov", "age,height"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("cohort_cov"));

    let o = run(dir.path(), "model.yaml", &["--cohort-file", "absent.csv"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("cohort.file"));
}

#[test]
fn malformed_view_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    bundle(dir.path(), &small());
    let path = dir.path().join("view1.csv");
    let text = fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut cells: Vec<&str> = lines[5].split(',').collect();
    cells[2] = "oops";
    lines[5] = cells.join(",");
    fs::write(&path, lines.join("\n")).unwrap();
    let o = run(dir.path(), "model.yaml", &[]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn survival_run_with_covariates() {
    let dir = tempfile::tempdir().unwrap();
    bundle(dir.path(), &small());
    let text = fs::read_to_string(dir.path().join("model.yaml")).unwrap();
    let text = text
        .replace("  logregrssm:\n", "  coxph:\n")
        .replace("task: classification", "task: survival");
    fs::write(dir.path().join("cox.yaml"), text).unwrap();
    let o = run(dir.path(), "cox.yaml", &["--cohort-cov", "age,sex", "--out-path", "cox"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let preds = fs::read_to_string(dir.path().join("cox/predictions.csv")).unwrap();
    assert!(preds.starts_with("sample_id,risk_score\n"));
    let cv = fs::read_to_string(dir.path().join("cox/cv_metrics.csv")).unwrap();
    assert!(cv.lines().nth(1).unwrap().contains("c_index"));
    let summary = fs::read_to_string(dir.path().join("cox/model_summary.json")).unwrap();
    assert!(summary.contains("\"age\""));
}

#[test]
fn clustering_writes_assignments_for_every_subject() {
    let dir = tempfile::tempdir().unwrap();
    bundle(dir.path(), &small());
    let model = "integration:\n  ajive:\n    use: true\nprediction:\n  kmeans:\n    use: true\n    params:\n      k: 3\nend_study_date: 2020-01-01\nout_path: clusters\n";
    fs::write(dir.path().join("km.yaml"), model).unwrap();
    let o = run(dir.path(), "km.yaml", &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let preds = fs::read_to_string(dir.path().join("clusters/predictions.csv")).unwrap();
    let rows: Vec<&str> = preds.lines().skip(1).collect();
    assert!(rows.len() > 250);
    assert!(rows.iter().all(|r| matches!(r.rsplit(',').next(), Some("0" | "1" | "2"))));
    let cv = fs::read_to_string(dir.path().join("clusters/cv_metrics.csv")).unwrap();
    assert_eq!(cv.trim(), "model,fold,metric_name,value");
    assert!(!dir.path().join("clusters/comparisons.csv").exists());
}

#[test]
fn latent_imputation_keeps_samples_missing_a_view() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small();
    cfg.missing_fraction = 0.3;
    bundle(dir.path(), &cfg);
    let text = fs::read_to_string(dir.path().join("model.yaml")).unwrap();
    let text = text
        .replace("  ajive:\n    use: true", "  ajive:\n    use: false")
        .replace("  gfa:\n    use: false", "  gfa:\n    use: true\n    params:\n      max_factors: 6")
        .replace("compare_single_views: true", "compare_single_views: false");
    fs::write(dir.path().join("gfa.yaml"), text).unwrap();

    let o = run(dir.path(), "gfa.yaml", &["--out-path", "complete"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = run(dir.path(), "gfa.yaml", &["--out-path", "imputed", "--latent-impute"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let count = |d: &str| fs::read_to_string(dir.path().join(d).join("merged_scores.csv")).unwrap().lines().count() - 1;
    assert_eq!(count("complete"), 210);
    assert_eq!(count("imputed"), 300);

    let o = run(dir.path(), "model.yaml", &["--out-path", "x", "--latent-impute"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("latent_impute"));
}

#[test]
fn compare_reads_cv_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let a = "model,fold,metric_name,value\na,0,auc,0.9\na,1,auc,0.8\na,2,auc,0.85\nb,0,auc,0.7\nb,1,auc,0.6\nb,2,auc,0.75\n";
    fs::write(dir.path().join("cv.csv"), a).unwrap();
    let o = mvfuse(&["compare", "cv.csv"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let out = String::from_utf8(o.stdout).unwrap();
    assert_eq!(out, "model_a,model_b,p_value,significant\na,b,0.125,false\n");
}
