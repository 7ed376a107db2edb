use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn isac(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_isac"))
        .arg("--out")
        .arg(dir)
        .args(args)
        .output()
        .unwrap()
}

fn header(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

fn small_scenario(dir: &Path) -> String {
    let path = dir.join("scenario.json");
    fs::write(
        &path,
        r#"{"array": {"n_t": 6, "n_r": 6}, "users": {"angles_deg": [-40, 40]}, "design": {"n_e": 20}}"#,
    )
    .unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn help_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(isac(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn bad_arguments_exit_four() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(isac(dir.path(), &["sweep", "--axis", "bogus"]).status.code(), Some(4));
    assert_eq!(isac(dir.path(), &["frobnicate"]).status.code(), Some(4));
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"array": {"antennas": 3}}"#).unwrap();
    assert_eq!(isac(dir.path(), &["--scenario", bad.to_str().unwrap(), "contour"]).status.code(), Some(4));
}

#[test]
fn contour_and_crb_tables() {
    let dir = tempfile::tempdir().unwrap();
    assert!(isac(dir.path(), &["contour", "--samples", "90"]).status.success());
    let contour = dir.path().join("contour.csv");
    assert_eq!(header(&contour), "u,x_local,y_local,x_global,y_global,visible");
    assert_eq!(fs::read_to_string(&contour).unwrap().lines().count(), 91);
    assert!(isac(dir.path(), &["crb"]).status.success());
    assert_eq!(header(&dir.path().join("crb_terms.csv")), "k,u,phi_rad,d_m,l_m,term");
    assert!(dir.path().join("crb.json").exists());
}

#[test]
fn design_then_crb_from_precoder() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = small_scenario(dir.path());
    let out = isac(dir.path(), &["--scenario", &scenario, "--seed", "3", "design"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["status"], "optimal");
    let w = dir.path().join("w.csv");
    assert_eq!(header(&w), "antenna,w0_re,w0_im,w1_re,w1_im");
    let out = isac(dir.path(), &["--scenario", &scenario, "crb", "--w", w.to_str().unwrap()]);
    assert!(out.status.success());
    let crb: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let a = report["crb_rad2"].as_f64().unwrap();
    let b = crb["crb_closed_rad2"].as_f64().unwrap();
    assert!((a - b).abs() <= 1e-9 * a);
}

#[test]
fn sweep_audits_clean() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = small_scenario(dir.path());
    let out = isac(
        dir.path(),
        &["--scenario", &scenario, "sweep", "--axis", "Gamma_dB", "--values", "3,6", "--variants", "crb-min,bp2"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        header(&dir.path().join("sweep.csv")),
        "axis,value,variant,status,crb_rad2,crb_db,min_sinr_db,sinr_margin_db,power_w,coverage_margin,iterations,provenance,w_file"
    );
    assert!(dir.path().join("plot_Gamma_dB_crb-min.dat").exists());
    let out = isac(dir.path(), &["--scenario", &scenario, "audit"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(header(&dir.path().join("audit.csv")), "row,axis,value,variant,crb_stored,crb_recomputed,rel_error,ok");
}

#[test]
fn infeasible_design_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tight.json");
    fs::write(
        &path,
        r#"{"array": {"n_t": 4, "n_r": 4}, "users": {"angles_deg": [-10, -9, 9, 10], "gamma_db": 60}, "power": {"pt_dbw": -60}}"#,
    )
    .unwrap();
    let out = isac(dir.path(), &["--scenario", path.to_str().unwrap(), "design"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}
