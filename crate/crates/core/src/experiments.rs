//! Reusable experiment drivers shared by the command line and the
//! acceptance suite: the standard decay series of a run, linear decay and
//! energy conservation, the perturbation gap, and energy-structure checks.

use serde::{Deserialize, Serialize};

use crate::decay::{default_window, fit_power_law, weighted_sup, DecayFit, Quantity, SeriesSpec, Weight};
use crate::energies::{energy, EnergyReport};
use crate::error::{Error, Result};
use crate::evolve::{make_initial_data, run, DataProfile, GammaEnergies, GridSpec, SimConfig, Snapshot};
use crate::grid::{Region, RegionMask, Scheme};
use crate::grid::Field2D;
use crate::linear::{propagate_free, propagate_sourced, representation_oracle, PropagatorKind};
use crate::nullforms::Couplings;

/// Weighted sup series accumulated snapshot by snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesSet {
    pub specs: Vec<SeriesSpec>,
    /// one `(t, value)` list per spec; slices with an empty region are skipped
    pub values: Vec<Vec<(f64, f64)>>,
}

impl SeriesSet {
    pub fn new(specs: Vec<SeriesSpec>) -> Self {
        let values = vec![Vec::new(); specs.len()];
        Self { specs, values }
    }

    /// Plain sups of `v`, `u`, `∂u` near the origin, and the weighted
    /// versions whose boundedness expresses the expected rates.
    pub fn standard() -> Self {
        let ball = Region::Ball { radius: 2.0 };
        Self::new(vec![
            SeriesSpec::new("v_sup", Quantity::V, Weight::None, Region::All),
            SeriesSpec::new("u_sup", Quantity::U, Weight::None, Region::All),
            SeriesSpec::new("du_ball2", Quantity::Du, Weight::None, ball),
            SeriesSpec::new("du_sup", Quantity::Du, Weight::None, Region::All),
            SeriesSpec::new("v_weighted_t", Quantity::V, Weight::T, Region::All),
            SeriesSpec::new("u_weighted_thalf", Quantity::U, Weight::THalf, Region::All),
            SeriesSpec::new("du_weighted_cone", Quantity::Du, Weight::Cone { p: 0.75, q: 0.5 }, Region::All),
            SeriesSpec::new("ddu_weighted_interior", Quantity::Ddu, Weight::Cone { p: 1.0, q: 0.5 }, Region::All),
        ])
    }

    pub fn observe(&mut self, snap: &Snapshot, scheme: Scheme) -> Result<()> {
        let (u, v) = (snap.u_jet(), snap.v_jet());
        for (spec, out) in self.specs.iter().zip(&mut self.values) {
            match weighted_sup(&u, &v, spec, scheme) {
                Ok(val) => out.push((snap.t(), val)),
                Err(Error::EmptyRegion) => {}
                Err(e) => return Err(e),
            }
        }
        Ok(())
    }

    pub fn series(&self, id: &str) -> Option<&[(f64, f64)]> {
        self.specs.iter().position(|s| s.id == id).map(|k| self.values[k].as_slice())
    }

    /// Fits of the unweighted series (ids without "weighted").
    pub fn fit_plain(&self, window: (f64, f64)) -> Vec<Result<DecayFit>> {
        self.specs
            .iter()
            .zip(&self.values)
            .filter(|(s, _)| !s.id.contains("weighted"))
            .map(|(s, v)| fit_power_law(v, window, &s.id))
            .collect()
    }
}

/// `(t, max |w(t)|)` of the free wave (`mass = 0`) or Klein-Gordon
/// (`mass = 1`) evolution of the profile's data, with the sup over the
/// grid and samples every `sample_dt` up to `t_end`.
pub fn linear_sup_series(
    kind: PropagatorKind,
    grid: GridSpec,
    profile: DataProfile,
    epsilon: f64,
    t_end: f64,
    sample_dt: f64,
) -> Result<Vec<(f64, f64)>> {
    let data = make_initial_data(profile, epsilon, grid.build()?)?;
    let (w0, w1) = if kind.mass == 0.0 { (&data.u0, &data.u1) } else { (&data.v0, &data.v1) };
    let n = (t_end / sample_dt).round() as usize;
    (0..=n)
        .map(|k| {
            let t = k as f64 * sample_dt;
            Ok((t, propagate_free(kind, w0, w1, t)?.0.max_abs()))
        })
        .collect()
}

pub fn linear_decay_fit(
    kind: PropagatorKind,
    grid: GridSpec,
    t_end: f64,
    sample_dt: f64,
) -> Result<(Vec<(f64, f64)>, DecayFit)> {
    let s = linear_sup_series(kind, grid, DataProfile::GaussianBump, 1.0, t_end, sample_dt)?;
    let id = if kind.mass == 0.0 { "u_sup_free" } else { "v_sup_free" };
    let fit = fit_power_law(&s, default_window(t_end), id)?;
    Ok((s, fit))
}

/// Largest `|E(t) - E(0)| / E(0)` of the free evolution sampled every
/// `sample_dt`.
pub fn free_energy_drift(kind: PropagatorKind, grid: GridSpec, t_end: f64, sample_dt: f64) -> Result<f64> {
    let g = grid.build()?;
    let data = make_initial_data(DataProfile::GaussianBump, 1.0, g)?;
    let (w0, w1) = if kind.mass == 0.0 { (&data.u0, &data.u1) } else { (&data.v0, &data.v1) };
    let mask = RegionMask::all(g);
    let e0 = energy(kind.mass, w0, w1, &mask)?;
    let n = (t_end / sample_dt).round() as usize;
    let mut worst = 0.0f64;
    for k in 1..=n {
        let (w, wt) = propagate_free(kind, w0, w1, k as f64 * sample_dt)?;
        worst = worst.max((energy(kind.mass, &w, &wt, &mask)? - e0).abs() / e0);
    }
    Ok(worst)
}

/// `max(sup |u - u_lin|, sup |v - v_lin|)` at `t_end`, where the linear run
/// uses the same integrator with the couplings switched off.
pub fn perturbation_gap(base: &SimConfig, epsilon: f64) -> Result<f64> {
    let mut cfg = *base;
    cfg.epsilon = epsilon;
    cfg.output_every = cfg.t_end.max(f64::MIN_POSITIVE);
    cfg.diagnostics.energies = false;
    cfg.diagnostics.ghost = false;
    cfg.diagnostics.gamma_energies = false;
    let (nl, _) = final_state(&cfg)?;
    cfg.couplings = Couplings::zero();
    let (lin, _) = final_state(&cfg)?;
    Ok(nl.u.sub(&lin.u)?.max_abs().max(nl.v.sub(&lin.v)?.max_abs()))
}

/// Gap exponent in ε over one halving: `log2(gap(ε) / gap(ε/2))`.
pub fn perturbation_exponent(base: &SimConfig, epsilon: f64) -> Result<(f64, f64, f64)> {
    let a = perturbation_gap(base, epsilon)?;
    let b = perturbation_gap(base, 0.5 * epsilon)?;
    Ok(((a / b).log2(), a, b))
}

/// Agreement of the spectral propagator with independent references.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    /// `(x, y, oracle, propagator)` at the sample nodes
    pub samples: Vec<(f64, f64, f64, f64)>,
    /// largest `|oracle - propagator| / |propagator|`
    pub max_rel_quadrature: f64,
    /// largest `|free - sourced(0)|` over w, w_t and both masses, relative
    /// to the sup of the free solution
    pub free_vs_sourced: f64,
}

/// Free wave from zero position and a Gaussian velocity on 256² points,
/// compared with the disc integral at ten nodes inside the light cone, and
/// the closed-form propagator compared with the Duhamel stepper at zero
/// source.
pub fn oracle_equivalence(t: f64) -> Result<OracleReport> {
    let half = 16.0f64.max(t + 8.0);
    let g = GridSpec { n: 256, half_width: half }.build()?;
    let data = make_initial_data(DataProfile::GaussianBump, 1.0, g)?;
    let zero = Field2D::zeros(g);
    let (w, _) = propagate_free(PropagatorKind::WAVE, &zero, &data.u1, t)?;
    let c = g.nx / 2;
    let mut samples = Vec::new();
    let mut worst = 0.0f64;
    for k in 0..10 {
        // radii up to 0.7 t on a spiral, so that no two nodes coincide
        let r = 0.07 * t * k as f64;
        let th = 2.39996 * k as f64;
        let i = (c as f64 + (r * th.cos() / g.dx).round()) as usize;
        let j = (c as f64 + (r * th.sin() / g.dy).round()) as usize;
        let x = (g.x(i), g.y(j));
        let o = representation_oracle(&data.u1, t, x)?;
        let p = w.at(i, j);
        worst = worst.max((o - p).abs() / p.abs());
        samples.push((x.0, x.1, o, p));
    }
    let mut fvs = 0.0f64;
    for kind in [PropagatorKind::WAVE, PropagatorKind::KLEIN_GORDON] {
        let (w0, w1) = if kind.mass == 0.0 { (&data.u0, &data.u1) } else { (&data.v0, &data.v1) };
        let (a, at) = propagate_free(kind, w0, w1, t)?;
        let traj = propagate_sourced(kind, w0, w1, |_| Ok(None), t, 0.25)?;
        let (b, bt) = (traj.w.last().expect("levels"), traj.wt.last().expect("levels"));
        let scale = a.max_abs().max(at.max_abs());
        fvs = fvs.max(a.sub(b)?.max_abs().max(at.sub(bt)?.max_abs()) / scale);
    }
    Ok(OracleReport { samples, max_rel_quadrature: worst, free_vs_sourced: fvs })
}

/// Temporal self-convergence of the nonlinear integrator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    /// `(cfl, dt)` of the three runs
    pub levels: Vec<(f64, f64)>,
    /// sup distance of the final states of runs k and k+1
    pub diffs: Vec<f64>,
    /// `log2(diffs[0] / diffs[1])`
    pub order: f64,
}

fn final_state(c: &SimConfig) -> Result<(crate::evolve::EvolState, f64)> {
    let mut last = None;
    let summary = run(c, &mut |s| {
        last = Some(s.state.clone());
        Ok(())
    })?;
    Ok((last.ok_or(Error::InsufficientTimeLevels { needed: 1, got: 0 })?, summary.dt))
}

fn state_distance(a: &crate::evolve::EvolState, b: &crate::evolve::EvolState) -> Result<f64> {
    let mut d = 0.0f64;
    for (x, y) in [(&a.u, &b.u), (&a.ut, &b.ut), (&a.v, &b.v), (&a.vt, &b.vt)] {
        d = d.max(x.sub(y)?.max_abs());
    }
    Ok(d)
}

/// Runs `base` at its step, half and a quarter of it, and compares the
/// final states. RK4 gives an order near 4.
pub fn self_convergence(base: &SimConfig) -> Result<ConvergenceReport> {
    let mut cfg = *base;
    cfg.output_every = cfg.t_end.max(f64::MIN_POSITIVE);
    cfg.diagnostics.energies = false;
    cfg.diagnostics.ghost = false;
    cfg.diagnostics.gamma_energies = false;
    let mut states = Vec::new();
    let mut levels = Vec::new();
    let dx = 2.0 * cfg.grid.half_width / cfg.grid.n as f64;
    let dt0 = cfg.time_plan().2;
    for k in 0..3 {
        // exact halvings of the step the base run takes
        cfg.cfl = dt0 / f64::from(1u32 << k) / dx;
        let (s, dt) = final_state(&cfg)?;
        levels.push((cfg.cfl, dt));
        states.push(s);
    }
    let diffs = vec![state_distance(&states[0], &states[1])?, state_distance(&states[1], &states[2])?];
    let order = (diffs[0] / diffs[1]).log2();
    Ok(ConvergenceReport { levels, diffs, order })
}

/// Outcome of the energy-structure checks on one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyStructure {
    /// `max_t E(Γw)(t) / E(Γw)(0)` over Γ ∈ {1} ∪ admissible, for u and v
    pub worst_growth: f64,
    pub worst_growth_label: String,
    /// every accumulated ghost column is non-decreasing in t
    pub monotone: bool,
    /// largest `(I(T) - I(0.9 T)) / I(T)` over the ghost columns
    pub tail_fraction: f64,
}

pub fn energy_structure(gamma: &[GammaEnergies], reports: &[EnergyReport]) -> Result<EnergyStructure> {
    let first = gamma.first().ok_or(Error::InsufficientTimeLevels { needed: 1, got: 0 })?;
    let labels = GammaEnergies::labels();
    let mut worst = (0.0f64, String::new());
    for g in gamma {
        for (comp, now, start) in [("u", &g.u, &first.u), ("v", &g.v, &first.v)] {
            for k in 0..7 {
                if start[k] > 0.0 && now[k] / start[k] > worst.0 {
                    worst = (now[k] / start[k], format!("{}:{}", comp, labels[k]));
                }
            }
        }
    }
    let columns: [fn(&EnergyReport) -> f64; 4] =
        [|r| r.ighost_g, |r| r.ighost_m, |r| r.ighost_g_damped, |r| r.ighost_m_damped];
    let t_end = reports.last().map_or(0.0, |r| r.t);
    let mut monotone = true;
    let mut tail = 0.0f64;
    for col in columns {
        monotone &= reports.windows(2).all(|w| col(&w[1]) >= col(&w[0]));
        let total = reports.last().map_or(0.0, col);
        if total > 0.0 {
            let at90 = reports.iter().filter(|r| r.t <= 0.9 * t_end + 1e-9).map(col).last().unwrap_or(0.0);
            tail = tail.max((total - at90) / total);
        }
    }
    Ok(EnergyStructure { worst_growth: worst.0, worst_growth_label: worst.1, monotone, tail_fraction: tail })
}

/// The configuration of the main nonlinear run: ε = 0.01, generic
/// couplings, T = 100 on 1024² points.
pub fn headline_config() -> SimConfig {
    let mut c = SimConfig::new(GridSpec { n: 1024, half_width: 110.0 }, 0.01, 100.0);
    c.diagnostics.gamma_stride = 2;
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn series_set_on_zero_run_is_zero() {
        let cfg = SimConfig::new(GridSpec { n: 32, half_width: 12.0 }, 0.0, 1.0);
        let mut set = SeriesSet::standard();
        run(&cfg, &mut |s| set.observe(s, cfg.scheme)).unwrap();
        for v in &set.values {
            assert!(v.iter().all(|p| p.1 == 0.0));
        }
        // the interior cone at t = 0 is the origin node only
        assert_eq!(set.series("ddu_weighted_interior").unwrap().len(), 2);
        assert_eq!(set.series("v_sup").unwrap().len(), 2);
    }

    #[test]
    fn free_energies_are_conserved() {
        // dx = 0.25 resolves the bump; at dx = 0.5 the Nyquist content is
        // ~1e-9 of the energy and is not seen by the derivatives
        let g = GridSpec { n: 128, half_width: 16.0 };
        let d = free_energy_drift(PropagatorKind::WAVE, g, 5.0, 1.0).unwrap();
        assert!(d < 1e-12, "{d}");
        assert!(free_energy_drift(PropagatorKind::KLEIN_GORDON, g, 5.0, 1.0).unwrap() < 1e-12);
    }

    #[test]
    fn oracles_agree() {
        let r = oracle_equivalence(6.0).unwrap();
        assert_eq!(r.samples.len(), 10);
        assert!(r.max_rel_quadrature < 1e-3, "{}", r.max_rel_quadrature);
        assert!(r.free_vs_sourced < 1e-12, "{}", r.free_vs_sourced);
    }

    #[test]
    fn rk4_self_convergence() {
        let mut cfg = SimConfig::new(GridSpec { n: 32, half_width: 12.0 }, 0.5, 2.0);
        cfg.cfl = 0.6;
        let r = self_convergence(&cfg).unwrap();
        assert!(r.order > 3.5 && r.order < 4.6, "{r:?}");
    }

    #[test]
    fn gap_vanishes_without_couplings() {
        let mut cfg = SimConfig::new(GridSpec { n: 32, half_width: 12.0 }, 0.01, 1.0);
        cfg.couplings = Couplings::zero();
        assert_eq!(perturbation_gap(&cfg, 0.01).unwrap(), 0.0);
    }

    #[test]
    fn energy_structure_flags_growth_and_tails() {
        let g = |t: f64, s: f64| GammaEnergies { t, u: [s; 7], v: [1.0; 7] };
        let rep = |t: f64, i: f64| EnergyReport { t, ighost_g: i, ighost_m: i, ..Default::default() };
        let reps: Vec<_> = (0..=10).map(|k| rep(k as f64, 1.0 - 0.5f64.powi(k))).collect();
        let es = energy_structure(&[g(0.0, 1.0), g(1.0, 2.5)], &reps).unwrap();
        assert_eq!(es.worst_growth, 2.5);
        assert!(es.worst_growth_label.starts_with("u:"));
        assert!(es.monotone);
        assert!((es.tail_fraction - 0.5f64.powi(10) / (1.0 - 0.5f64.powi(10))).abs() < 1e-12);
        let mut bad = reps.clone();
        bad[5].ighost_g = 0.0;
        assert!(!energy_structure(&[g(0.0, 1.0)], &bad).unwrap().monotone);
    }
}
