use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nullwave"))
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("nullwave-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&d);
    fs::create_dir_all(&d).unwrap();
    d
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin().arg("--out").arg(dir.join("out")).args(args).output().unwrap()
}

fn small_config(epsilon: f64) -> String {
    format!(
        "[grid]\nn = 32\nhalf_width = 12.0\n\n[data]\nprofile = \"gaussian-bump\"\nepsilon = {epsilon:?}\n\n\
         [time]\nt_end = 2.0\noutput_every = 0.5\ndt = 0.25\n\n[diagnostics]\ngamma_stride = 2\n"
    )
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("run.toml");
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("out/manifest.json")).unwrap()).unwrap()
}

fn assert_manifest_sizes(dir: &Path) {
    let m = manifest(dir);
    let outputs = m["outputs"].as_array().unwrap();
    assert!(!outputs.is_empty());
    for o in outputs {
        let p = dir.join("out").join(o["path"].as_str().unwrap());
        assert_eq!(fs::metadata(&p).unwrap().len(), o["bytes"].as_u64().unwrap(), "{}", p.display());
    }
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn zero_data_simulation_has_zero_diagnostics() {
    let d = scratch("zero");
    let cfg = write_config(&d, &small_config(0.0));
    let out = run_in(&d, &["simulate", &cfg]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let energies = fs::read_to_string(d.join("out/energies.csv")).unwrap();
    let mut lines = energies.lines();
    assert_eq!(lines.next().unwrap().split(',').count(), 11);
    let rows: Vec<_> = lines.collect();
    assert_eq!(rows.len(), 5);
    for r in rows {
        assert!(r.split(',').skip(1).all(|x| x.parse::<f64>().unwrap() == 0.0), "{r}");
    }
    assert!(d.join("out/snapshots/snap_00000.bin").exists());
    assert!(d.join("out/snapshots/snap_00004.hdr").exists());
    assert_manifest_sizes(&d);
}

#[test]
fn same_config_gives_identical_csvs() {
    let (a, b) = (scratch("det-a"), scratch("det-b"));
    for d in [&a, &b] {
        let cfg = write_config(d, &small_config(0.05));
        let out = run_in(d, &["simulate", &cfg]);
        assert!(out.status.code() == Some(0) || out.status.code() == Some(1));
    }
    for f in ["energies.csv", "gamma_energies.csv", "decay_series.csv", "decay_fits.csv", "sup_history.csv"] {
        let x = fs::read(a.join("out").join(f)).unwrap();
        let y = fs::read(b.join("out").join(f)).unwrap();
        assert!(x == y, "{f} differs");
    }
    assert_eq!(manifest(&a)["config_hash"], manifest(&b)["config_hash"]);
}

#[test]
fn bad_configs_name_the_line() {
    let d = scratch("bad");
    let cfg = write_config(&d, &small_config(0.0).replace("half_width = 12.0", "half_width = 6.0"));
    let out = run_in(&d, &["simulate", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3") && err.contains("no-wrap"), "{err}");

    let cfg = write_config(&d, &small_config(0.0).replace("[time]", "[time]\nsteps = 3"));
    let out = run_in(&d, &["simulate", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 10") && err.contains("steps"), "{err}");
}

#[test]
fn picard_with_zero_data_stops_after_one_iteration() {
    let d = scratch("picard0");
    let cfg = write_config(&d, &small_config(0.0));
    let out = run_in(&d, &["picard", &cfg]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let log = fs::read_to_string(d.join("out/picard_log.csv")).unwrap();
    let lines: Vec<_> = log.lines().collect();
    assert_eq!(lines[0], "iter,x_norm_value,diff_norm,ratio,wall_time_s");
    assert_eq!(lines.len(), 2);
    assert_manifest_sizes(&d);
}

#[test]
fn picard_contracts_on_small_data() {
    let d = scratch("picard");
    let text = small_config(0.004).replace("n = 32", "n = 64").replace("half_width = 12.0", "half_width = 14.0")
        + "\n[picard]\nmax_iter = 6\ntol = 1e-10\nxnorm_stride = 2\ndelta = 0.5\n";
    let cfg = write_config(&d, &text);
    let out = run_in(&d, &["picard", &cfg]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}\n{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout.contains("[PASS] successive ratios < 0.6"), "{stdout}");
    assert!(d.join("out/normal_form_residual.csv").exists());
}

#[test]
fn decay_fit_recovers_a_power_law() {
    let d = scratch("fit");
    let mut csv = String::from("series_id,t,value\n");
    for k in 1..=40 {
        let t = k as f64;
        csv += &format!("a,{t},{}\nb,{t},{}\n", 3.0 / t, t.powf(-0.5));
    }
    let p = d.join("series.csv");
    fs::write(&p, csv).unwrap();
    let out = run_in(&d, &["decay-fit", p.to_str().unwrap(), "--window", "10,40"]);
    assert!(out.status.success());
    let fits = fs::read_to_string(d.join("out/decay_fits.csv")).unwrap();
    let rows: Vec<Vec<&str>> = fits.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 2);
    assert!((rows[0][1].parse::<f64>().unwrap() + 1.0).abs() < 1e-9);
    assert!((rows[1][1].parse::<f64>().unwrap() + 0.5).abs() < 1e-9);
    assert_eq!(rows[0][3], "10");
    assert_manifest_sizes(&d);
}

#[test]
fn checks_pass_and_write_manifests() {
    for (name, args) in [("identities", vec!["identities"]), ("linear", vec!["linear-check"])] {
        let d = scratch(name);
        let out = run_in(&d, &args);
        assert!(out.status.success(), "{name}: {}", String::from_utf8_lossy(&out.stdout));
        assert!(manifest(&d)["acceptance"].as_array().unwrap().iter().all(|a| a["passed"] == true));
        assert_manifest_sizes(&d);
    }
}

#[test]
fn convergence_reports_fourth_order() {
    let d = scratch("conv");
    let cfg = write_config(&d, &small_config(0.5).replace("output_every = 0.5", "cfl = 0.6"));
    let out = run_in(&d, &["convergence", &cfg]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let text = fs::read_to_string(d.join("out/convergence.csv")).unwrap();
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn thread_cap_must_be_positive() {
    let d = scratch("threads");
    let out = bin().env("NULLWAVE_THREADS", "zero").arg("--out").arg(&d).arg("identities").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = bin().env("NULLWAVE_THREADS", "1").arg("--out").arg(&d).arg("linear-check").output().unwrap();
    assert!(out.status.success());
}
