//! One function per subcommand. Each writes its files into the output
//! directory, then the manifest, and returns whether its checks passed.

use std::fs;
use std::path::{Path, PathBuf};

use nullwave::decay::{fit_power_law, DecayFit};
use nullwave::energies::EnergyReport;
use nullwave::error::Error;
use nullwave::evolve::{make_initial_data, run, GammaEnergies};
use nullwave::experiments::{energy_structure, oracle_equivalence, self_convergence, SeriesSet};
use nullwave::identities::{run_corpus, CheckKind};
use nullwave::io::write_snapshot;
use nullwave::picard::{divergence_decomposition, normal_form_residual, picard_iterate_with, IterationRecord};

use crate::config::ConfigFile;
use crate::manifest::RunManifest;

pub type CmdResult = Result<bool, String>;

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, String> {
    csv::Writer::from_path(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn io_err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// `{}` on f64 is the shortest round-trip form, so equal values always
/// print identically.
fn num(x: f64) -> String {
    format!("{x}")
}

fn load(path: &Path) -> Result<(String, ConfigFile), String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let cfg = ConfigFile::parse(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok((text, cfg))
}

fn check_range(m: &mut RunManifest, name: &str, fit: Option<&DecayFit>, lo: f64, hi: f64) {
    match fit {
        Some(f) => m.check(
            name,
            (lo..=hi).contains(&f.exponent),
            format!("exponent {:.4} on [{}, {}], expected [{lo}, {hi}]", f.exponent, f.t_lo, f.t_hi),
        ),
        None => m.check(name, false, "series could not be fitted".into()),
    }
}

pub fn simulate(cfg_path: &Path, out: &Path) -> CmdResult {
    let (text, file) = load(cfg_path)?;
    let cfg = file.sim_config(&text).map_err(|e| format!("{}: {e}", cfg_path.display()))?;
    let mut manifest = RunManifest::start("simulate", text.as_bytes());
    let snap_dir = out.join("snapshots");
    fs::create_dir_all(&snap_dir).map_err(io_err)?;

    let (n_out, _, _) = cfg.time_plan();
    let every = file.diagnostics.snapshot_every;
    let mut files: Vec<PathBuf> = Vec::new();
    let mut reports: Vec<EnergyReport> = Vec::new();
    let mut gammas: Vec<GammaEnergies> = Vec::new();
    let mut series = SeriesSet::standard();
    let scheme = cfg.scheme;
    let outcome = run(&cfg, &mut |s| {
        series.observe(s, scheme)?;
        reports.extend(s.report);
        gammas.extend(s.gamma.clone());
        let keep = s.index == 0 || s.index == n_out || (every > 0 && s.index % every == 0);
        if keep {
            files.extend(write_snapshot(&snap_dir, &format!("snap_{:05}", s.index), &s.state)?);
        }
        Ok(())
    });
    let summary = match outcome {
        Ok(s) => {
            manifest.check("no blow-up", true, format!("{} steps of dt = {}", s.steps, s.dt));
            manifest.check(
                "no wrap",
                s.max_boundary_ratio < 1e-12,
                format!("max boundary/sup ratio {:e}", s.max_boundary_ratio),
            );
            Some(s)
        }
        Err(Error::BlowUp { t, sup, .. }) => {
            manifest.check("no blow-up", false, format!("sup {sup:e} at t = {t}"));
            None
        }
        Err(e) => return Err(e.to_string()),
    };

    let path = out.join("energies.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(EnergyReport::CSV_HEADER).map_err(io_err)?;
    for r in &reports {
        w.write_record(r.csv_row().map(num)).map_err(io_err)?;
    }
    w.flush().map_err(io_err)?;
    files.push(path);

    if !gammas.is_empty() {
        let path = out.join("gamma_energies.csv");
        let mut w = csv_writer(&path)?;
        let labels = GammaEnergies::labels();
        let header: Vec<String> = std::iter::once("t".to_string())
            .chain(labels.iter().map(|l| format!("u_{l}")))
            .chain(labels.iter().map(|l| format!("v_{l}")))
            .collect();
        w.write_record(&header).map_err(io_err)?;
        for g in &gammas {
            let row: Vec<String> = std::iter::once(g.t).chain(g.u).chain(g.v).map(num).collect();
            w.write_record(&row).map_err(io_err)?;
        }
        w.flush().map_err(io_err)?;
        files.push(path);
    }

    if let Some(s) = &summary {
        let path = out.join("sup_history.csv");
        let mut w = csv_writer(&path)?;
        w.write_record(["t", "sup_u", "sup_v"]).map_err(io_err)?;
        for &(t, a, b) in &s.sup_history {
            w.write_record([num(t), num(a), num(b)]).map_err(io_err)?;
        }
        w.flush().map_err(io_err)?;
        files.push(path);
    }

    let path = out.join("decay_series.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["series_id", "t", "value"]).map_err(io_err)?;
    for (spec, vals) in series.specs.iter().zip(&series.values) {
        for &(t, v) in vals {
            w.write_record([spec.id.clone(), num(t), num(v)]).map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)?;
    files.push(path);

    let window = file.fit_window();
    let fits: Vec<DecayFit> = series.fit_plain(window).into_iter().filter_map(Result::ok).collect();
    let path = out.join("decay_fits.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(DecayFit::CSV_HEADER).map_err(io_err)?;
    for f in &fits {
        w.write_record(f.csv_record()).map_err(io_err)?;
    }
    w.flush().map_err(io_err)?;
    files.push(path);

    if cfg.epsilon != 0.0 && summary.is_some() {
        let fit = |id: &str| fits.iter().find(|f| f.series_id == id);
        check_range(&mut manifest, "v decays like 1/t", fit("v_sup"), -1.15, -0.85);
        check_range(&mut manifest, "u decays like 1/sqrt(t)", fit("u_sup"), -0.65, -0.4);
        check_range(&mut manifest, "du on ball(2) decays like t^-1.25", fit("du_ball2"), -1.45, -1.05);
    }
    if !gammas.is_empty() && !reports.is_empty() {
        let es = energy_structure(&gammas, &reports).map_err(io_err)?;
        manifest.check(
            "vector-field energies stay below 3x",
            es.worst_growth <= 3.0,
            format!("worst growth {:.4} ({})", es.worst_growth, es.worst_growth_label),
        );
        if cfg.diagnostics.ghost {
            manifest.check("ghost integrals monotone", es.monotone, String::new());
            manifest.check(
                "ghost integrals saturate",
                es.tail_fraction < 0.05,
                format!("last 10% of time contributes {:.4}", es.tail_fraction),
            );
        }
    }
    for f in &fits {
        println!("{:<12} exponent {:>9.4}  rsq {:.5}  [{}, {}]", f.series_id, f.exponent, f.rsq, f.t_lo, f.t_hi);
    }
    let manifest = manifest.finish(out, &files).map_err(io_err)?;
    report(&manifest);
    Ok(summary.is_some())
}

pub fn identities(out: &Path) -> CmdResult {
    let manifest = RunManifest::start("identities", b"identities");
    let checks = run_corpus().map_err(io_err)?;
    let path = out.join("identities.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["name", "kind", "value", "passed"]).map_err(io_err)?;
    let mut manifest = manifest;
    println!("{:<44} {:>6} {:>12}  result", "identity", "kind", "value");
    for c in &checks {
        let kind = match c.kind {
            CheckKind::Exact => "exact",
            CheckKind::Order => "order",
        };
        println!("{:<44} {:>6} {:>12.3e}  {}", c.name, kind, c.value, if c.passed { "PASS" } else { "FAIL" });
        w.write_record([c.name.clone(), kind.into(), num(c.value), c.passed.to_string()]).map_err(io_err)?;
        let detail = match c.kind {
            CheckKind::Exact => format!("max residual {:e}", c.value),
            CheckKind::Order => format!("observed order {:.3}", c.value),
        };
        manifest.check(&c.name, c.passed, detail);
    }
    w.flush().map_err(io_err)?;
    let manifest = manifest.finish(out, &[path]).map_err(io_err)?;
    Ok(manifest.all_passed())
}

pub fn picard(cfg_path: &Path, out: &Path) -> CmdResult {
    let (text, file) = load(cfg_path)?;
    let cfg = file.picard_config(&text).map_err(|e| format!("{}: {e}", cfg_path.display()))?;
    let mut manifest = RunManifest::start("picard", text.as_bytes());
    let data = make_initial_data(cfg.profile, cfg.epsilon, cfg.grid.build().map_err(io_err)?).map_err(io_err)?;
    let path = out.join("picard_log.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(IterationRecord::CSV_HEADER).map_err(io_err)?;
    let mut rows = Vec::new();
    let outcome = picard_iterate_with(&cfg, &data, &mut |r| {
        println!(
            "iter {:>3}  |X| {:.6e}  |dX| {:.6e}  ratio {}",
            r.iter,
            r.x_norm_value,
            r.diff_norm,
            r.ratio.map_or("-".into(), |q| format!("{q:.4}"))
        );
        rows.push(r.csv_record());
    })
    .map_err(io_err)?;
    for r in &rows {
        w.write_record(r).map_err(io_err)?;
    }
    w.flush().map_err(io_err)?;
    let mut files = vec![path];

    let ratios: Vec<f64> = outcome.records.iter().filter_map(|r| r.ratio).collect();
    let worst = ratios.iter().copied().fold(0.0f64, f64::max);
    manifest.check("converged", outcome.converged, format!("{} iterations", outcome.records.len()));
    if cfg.in_contraction_regime() {
        manifest.check("successive ratios < 0.6", worst < 0.6, format!("largest ratio {worst:.4}"));
        if let Some(c) = outcome.contraction_vs_zero {
            manifest.check("contraction against the zero pair < 0.5", c < 0.5, format!("{c:.4}"));
        }
    }

    let p1 = cfg.couplings.p1;
    let dec = divergence_decomposition(&outcome.last, &p1, &data).map_err(io_err)?;
    let rel = if dec.phi_max > 0.0 { dec.reconstruction_residual / dec.phi_max } else { 0.0 };
    println!("decomposition: reconstruction residual {:.3e} (relative {rel:.3e})", dec.reconstruction_residual);
    let path = out.join("normal_form_residual.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["t", "residual"]).map_err(io_err)?;
    match normal_form_residual(&outcome.last, &p1, &dec.phi_gamma, cfg.xnorm_stride) {
        Ok(res) => {
            let worst_nf = res.iter().map(|r| r.1).fold(0.0f64, f64::max);
            println!("normal form: max residual {worst_nf:.3e}");
            for (t, r) in res {
                w.write_record([num(t), num(r)]).map_err(io_err)?;
            }
        }
        // too few levels for the centred time differences
        Err(Error::InsufficientTimeLevels { .. }) => {}
        Err(e) => return Err(e.to_string()),
    }
    w.flush().map_err(io_err)?;
    files.push(path);

    let path = out.join("picard_summary.json");
    let summary = serde_json::json!({
        "converged": outcome.converged,
        "contraction_vs_zero": outcome.contraction_vs_zero,
        "ratios": ratios,
        "final_norm": outcome.final_norm,
        "reconstruction_residual": dec.reconstruction_residual,
        "phi_max": dec.phi_max,
    });
    fs::write(&path, serde_json::to_string_pretty(&summary).map_err(io_err)? + "\n").map_err(io_err)?;
    files.push(path);
    let manifest = manifest.finish(out, &files).map_err(io_err)?;
    report(&manifest);
    Ok(outcome.converged)
}

/// Reads `series_id,t,value` rows, or plain `t,value` rows whose series is
/// named after the file.
pub fn read_series(path: &Path) -> Result<Vec<(String, Vec<(f64, f64)>)>, String> {
    let mut r = csv::Reader::from_path(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let header = r.headers().map_err(io_err)?.clone();
    let cols: Vec<&str> = header.iter().collect();
    let stem = path.file_stem().map_or("series".into(), |s| s.to_string_lossy().into_owned());
    let long = match cols.as_slice() {
        ["series_id", "t", "value"] => true,
        ["t", "value"] => false,
        _ => return Err(format!("{}: expected columns series_id,t,value or t,value", path.display())),
    };
    let mut out: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec.map_err(io_err)?;
        let parse = |i: usize| -> Result<f64, String> {
            rec.get(i)
                .unwrap_or("")
                .trim()
                .parse()
                .map_err(|e| format!("{} row {}: {e}", path.display(), k + 2))
        };
        let (id, t, v) = if long {
            (rec.get(0).unwrap_or("").to_string(), parse(1)?, parse(2)?)
        } else {
            (stem.clone(), parse(0)?, parse(1)?)
        };
        match out.iter_mut().find(|s| s.0 == id) {
            Some(s) => s.1.push((t, v)),
            None => out.push((id, vec![(t, v)])),
        }
    }
    Ok(out)
}

pub fn decay_fit(csv_path: &Path, window: (f64, f64), out: &Path) -> CmdResult {
    let bytes = fs::read(csv_path).map_err(|e| format!("{}: {e}", csv_path.display()))?;
    let mut hashed = bytes;
    hashed.extend_from_slice(format!("window {} {}", window.0, window.1).as_bytes());
    let mut manifest = RunManifest::start("decay-fit", &hashed);
    let all = read_series(csv_path)?;
    let path = out.join("decay_fits.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(DecayFit::CSV_HEADER).map_err(io_err)?;
    let mut ok = true;
    for (id, s) in &all {
        match fit_power_law(s, window, id) {
            Ok(f) => {
                println!("{:<24} exponent {:>9.4}  amplitude {:.4e}  rsq {:.5}", id, f.exponent, f.amplitude, f.rsq);
                w.write_record(f.csv_record()).map_err(io_err)?;
                manifest.check(id, true, format!("exponent {}", f.exponent));
            }
            Err(e) => {
                println!("{id:<24} not fitted: {e}");
                manifest.check(id, false, e.to_string());
                ok = false;
            }
        }
    }
    w.flush().map_err(io_err)?;
    manifest.finish(out, &[path]).map_err(io_err)?;
    Ok(ok)
}

pub fn linear_check(out: &Path) -> CmdResult {
    let mut manifest = RunManifest::start("linear-check", b"linear-check t=6");
    let r = oracle_equivalence(6.0).map_err(io_err)?;
    let path = out.join("linear_check.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["x", "y", "oracle", "propagator", "rel_err"]).map_err(io_err)?;
    for &(x, y, o, p) in &r.samples {
        w.write_record([num(x), num(y), num(o), num(p), num((o - p).abs() / p.abs())]).map_err(io_err)?;
    }
    w.flush().map_err(io_err)?;
    manifest.check(
        "propagator matches the disc integral",
        r.max_rel_quadrature < 1e-3,
        format!("largest relative difference {:e} at 10 nodes", r.max_rel_quadrature),
    );
    manifest.check(
        "free propagator matches the zero-source Duhamel stepper",
        r.free_vs_sourced < 1e-12,
        format!("relative difference {:e}", r.free_vs_sourced),
    );
    let manifest = manifest.finish(out, &[path]).map_err(io_err)?;
    report(&manifest);
    Ok(manifest.all_passed())
}

pub fn convergence(cfg_path: &Path, out: &Path) -> CmdResult {
    let (text, file) = load(cfg_path)?;
    let cfg = file.sim_config(&text).map_err(|e| format!("{}: {e}", cfg_path.display()))?;
    let mut manifest = RunManifest::start("convergence", text.as_bytes());
    let r = self_convergence(&cfg).map_err(io_err)?;
    let path = out.join("convergence.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["cfl", "dt", "diff_to_next"]).map_err(io_err)?;
    for (k, &(c, dt)) in r.levels.iter().enumerate() {
        let d = r.diffs.get(k).map_or(String::new(), |d| num(*d));
        w.write_record([num(c), num(dt), d]).map_err(io_err)?;
    }
    w.flush().map_err(io_err)?;
    manifest.check("time self-convergence order >= 3.5", r.order >= 3.5, format!("order {:.3}", r.order));
    let manifest = manifest.finish(out, &[path]).map_err(io_err)?;
    report(&manifest);
    Ok(manifest.all_passed())
}

fn report(m: &RunManifest) {
    for a in &m.acceptance {
        println!("[{}] {}: {}", if a.passed { "PASS" } else { "FAIL" }, a.criterion, a.detail);
    }
}
