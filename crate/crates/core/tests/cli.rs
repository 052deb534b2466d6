mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::mild;
use rppi::io::{default_header, read_table, write_compositions};
use rppi::model::ParamsFile;
use rppi::sampling::sample_rppi;
use rppi::*;
use serde_json::Value;

fn rppi(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rppi"))
        .args(args)
        .current_dir(dir)
        .env_remove("RPPI_SEED")
        .env_remove("RPPI_THREADS")
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = rppi(dir, args);
    assert!(out.status.success(), "rppi {args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn json(dir: &Path, file: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join(file)).unwrap()).unwrap()
}

fn write_params(dir: &Path, name: &str, params: &RppiParams) {
    std::fs::write(dir.join(name), serde_json::to_string_pretty(&ParamsFile::from(params)).unwrap()).unwrap();
}

/// A five-part count file shaped like the microbiome data.
fn counts_file(dir: &Path) {
    write_params(dir, "truth.json", &dataset2_estimates());
    ok(dir, &["sample", "truth.json", "--n", "94", "--m", "2000", "--seed", "5", "--out", "counts.csv"]);
}

#[test]
fn fit_writes_estimates_and_weight_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    counts_file(dir.path());
    ok(dir.path(), &["fit", "counts.csv", "--kstar", "2", "--c", "0.7", "--out", "fit.json"]);
    let v = json(dir.path(), "fit.json");
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["config"]["kstar"], 2);
    assert_eq!(v["fit"]["pi"].as_array().unwrap().len(), 14);
    assert_eq!(v["fit"]["labels"].as_array().unwrap().len(), 14);
    assert!(v["fit"]["converged"].as_bool().unwrap());
    assert!(v["fit"]["weights"].is_object());
}

#[test]
fn zero_c_matches_the_library_fit() {
    let dir = tempfile::tempdir().unwrap();
    counts_file(dir.path());
    ok(dir.path(), &["fit", "counts.csv", "--c", "0", "--out", "fit.json"]);
    let data = read_table(&dir.path().join("counts.csv")).unwrap().data.compositions().unwrap();
    let want = fit_alr_sme(&data).unwrap().pi_hat.pi;
    let got: Vec<f64> = json(dir.path(), "fit.json")["fit"]["pi"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert_eq!(got, want);
}

#[test]
fn malformed_csv_reports_the_line() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.csv"), "a,b,c\n0.2,0.3,0.5\n0.1,oops,0.9\n").unwrap();
    let out = rppi(dir.path(), &["fit", "bad.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn exit_codes_for_numerical_failures() {
    let dir = tempfile::tempdir().unwrap();
    let (data, _) = sample_rppi(&dataset2_estimates(), 10, 1).unwrap();
    write_compositions(std::fs::File::create(dir.path().join("tiny.csv")).unwrap(), &default_header(5), &data).unwrap();
    assert_eq!(rppi(dir.path(), &["fit", "tiny.csv"]).status.code(), Some(3));

    let (data, _) = sample_rppi(&mild(), 300, 2).unwrap();
    write_compositions(std::fs::File::create(dir.path().join("mild.csv")).unwrap(), &default_header(3), &data).unwrap();
    let out = rppi(dir.path(), &["fit", "mild.csv", "--c", "1", "--max-iter", "1", "--tol", "1e-300"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn sample_without_tilt_is_dirichlet_and_bad_params_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    write_params(dir.path(), "dir.json", &RppiParams::dirichlet(vec![-0.5, 0.5, 0.0], 2).unwrap());
    ok(dir.path(), &["sample", "dir.json", "--n", "1000", "--out", "u.csv", "--report", "r.json"]);
    assert_eq!(json(dir.path(), "r.json")["rejection"]["acceptance_rate"], 1.0);
    assert_eq!(read_table(&dir.path().join("u.csv")).unwrap().data.n(), 1000);

    std::fs::write(dir.path().join("broken.json"), "{\"p\": 3,").unwrap();
    assert_eq!(rppi(dir.path(), &["sample", "broken.json", "--n", "5"]).status.code(), Some(2));
    let mut bad = ParamsFile::from(&mild());
    bad.beta[0] = -1.5;
    std::fs::write(dir.path().join("nonint.json"), serde_json::to_string(&bad).unwrap()).unwrap();
    assert_eq!(rppi(dir.path(), &["sample", "nonint.json", "--n", "5"]).status.code(), Some(2));
}

#[test]
fn fitted_parameters_emit_sparse_counts() {
    let dir = tempfile::tempdir().unwrap();
    counts_file(dir.path());
    let table = read_table(&dir.path().join("counts.csv")).unwrap();
    let counts = table.data.counts().unwrap();
    let zeros = counts.rows().iter().filter(|r| r[0] == 0).count();
    assert!(zeros > 30, "{zeros}");
}

#[test]
fn tune_rejects_an_empty_grid_and_runs_a_small_one() {
    let dir = tempfile::tempdir().unwrap();
    counts_file(dir.path());
    assert_eq!(rppi(dir.path(), &["tune", "counts.csv", "--grid", ""]).status.code(), Some(2));
    ok(dir.path(), &["tune", "counts.csv", "--grid", "0,1.25", "--R", "2000", "--out", "t.json", "--csv", "t.csv"]);
    let v = json(dir.path(), "t.json");
    assert_eq!(v["report"]["points"].as_array().unwrap().len(), 2);
    let csv = std::fs::read_to_string(dir.path().join("t.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 5);
}

#[test]
fn bootstrap_writes_ratios_and_flags_degradation() {
    let dir = tempfile::tempdir().unwrap();
    counts_file(dir.path());
    ok(dir.path(), &["fit", "counts.csv", "--c", "1.25", "--out", "fit.json"]);
    ok(dir.path(), &["bootstrap", "fit.json", "counts.csv", "--B", "10", "--out", "b.json", "--csv", "b.csv"]);
    let v = json(dir.path(), "b.json");
    assert_eq!(v["report"]["ratio"].as_array().unwrap().len(), 14);
    assert_eq!(v["degraded"], false);
    assert!(std::fs::read_to_string(dir.path().join("b.csv")).unwrap().starts_with("parameter,estimate,se,ratio"));

    let mut fit = json(dir.path(), "fit.json");
    fit["config"]["max_iter"] = 1.into();
    fit["config"]["tol"] = 1e-300.into();
    std::fs::write(dir.path().join("starved.json"), fit.to_string()).unwrap();
    let out = rppi(dir.path(), &["bootstrap", "starved.json", "counts.csv", "--B", "4", "--out", "d.json"]);
    assert_eq!(out.status.code(), Some(5));
    let v = json(dir.path(), "d.json");
    assert_eq!(v["degraded"], true);
    assert_eq!(v["report"]["failed"], 4);
}

#[test]
fn study_presets_and_missing_truth() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["study", "sim7", "--R", "1", "--out", "s.csv"]);
    let v = json(dir.path(), "s.json");
    assert_eq!(v["scenario"]["replicates"], 1);
    assert_eq!(v["rmse"].as_array().unwrap().len(), 14);
    let out = rppi(dir.path(), &["study", "sim1", "--R", "1"]);
    assert_eq!(out.status.code(), Some(6));
    assert!(String::from_utf8_lossy(&out.stderr).contains("truth.a_l"));
}

#[test]
fn influence_at_a_vertex_and_over_a_grid() {
    let dir = tempfile::tempdir().unwrap();
    let (data, _) = sample_rppi(&mild(), 400, 3).unwrap();
    write_compositions(std::fs::File::create(dir.path().join("mild.csv")).unwrap(), &default_header(3), &data).unwrap();
    ok(dir.path(), &["fit", "mild.csv", "--c", "0.5", "--out", "fit.json"]);
    ok(dir.path(), &["influence", "fit.json", "--z", "1,0,0", "--grid-density", "10", "--reference-size", "5000", "--out", "if.json"]);
    let v = json(dir.path(), "if.json");
    let text = v.to_string();
    assert!(!text.contains("null") && !text.contains("NaN"));
    assert!(v["sweep"]["all_finite"].as_bool().unwrap());

    std::fs::write(dir.path().join("one.csv"), "u1,u2,u3\n0.2,0.3,0.5\n").unwrap();
    let out = rppi(dir.path(), &["influence", "fit.json", "--z", "1,0,0", "--reference", "one.csv"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn seed_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    write_params(dir.path(), "p.json", &mild());
    ok(dir.path(), &["sample", "p.json", "--n", "50", "--seed", "12", "--out", "a.csv"]);
    let out = Command::new(env!("CARGO_BIN_EXE_rppi"))
        .args(["sample", "p.json", "--n", "50", "--out", "b.csv"])
        .current_dir(dir.path())
        .env("RPPI_SEED", "12")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(std::fs::read(dir.path().join("a.csv")).unwrap(), std::fs::read(dir.path().join("b.csv")).unwrap());
}
