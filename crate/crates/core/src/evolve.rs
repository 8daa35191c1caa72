//! Method-of-lines solver for
//!
//! ```text
//! -□u      = P_1^{αβ} Q_αβ(u, v)
//! -□v + v  = P_2^{αβ} Q_αβ(u, v)
//! ```
//!
//! in first-order form `(u, u_t, v, v_t)` with classical RK4 in time and
//! spectral (or fd4) derivatives in space.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::energies::{self, conformal_energy, EnergyReport, GhostReport, SlabEnd};
use crate::error::{Error, Result};
use crate::grid::{self, spatial_derivative, weighted_data_norm, Axis, Field2D, Grid2D, RegionMask, Scheme};
use crate::nullforms::{coupled_source_field, Couplings};
use crate::spectral;
use crate::vectorfields::{apply_gamma, apply_gamma_dt, TimeJetField, VectorFieldId, WttSource};

/// `(t, u, u_t, v, v_t)` on one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EvolState {
    pub t: f64,
    pub u: Field2D,
    pub ut: Field2D,
    pub v: Field2D,
    pub vt: Field2D,
}

impl EvolState {
    pub fn new(t: f64, u: Field2D, ut: Field2D, v: Field2D, vt: Field2D) -> Result<Self> {
        for f in [&ut, &v, &vt] {
            u.check_same_grid(f)?;
        }
        Ok(Self { t, u, ut, v, vt })
    }

    pub fn from_data(data: &InitialData) -> Self {
        Self {
            t: 0.0,
            u: data.u0.clone(),
            ut: data.u1.clone(),
            v: data.v0.clone(),
            vt: data.v1.clone(),
        }
    }

    pub fn grid(&self) -> &Grid2D {
        self.u.grid()
    }

    pub fn is_finite(&self) -> bool {
        [&self.u, &self.ut, &self.v, &self.vt].iter().all(|f| f.is_finite())
    }

    /// `(max |u|, max |v|)`
    pub fn sups(&self) -> (f64, f64) {
        (self.u.max_abs(), self.v.max_abs())
    }
}

/// Time derivative of an [`EvolState`]: `(u_t, u_tt, v_t, v_tt)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateRate {
    pub u: Field2D,
    pub ut: Field2D,
    pub v: Field2D,
    pub vt: Field2D,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataProfile {
    GaussianBump,
    Ring,
    TwoBump,
}

impl DataProfile {
    /// Radius outside which every data field is below `1e-14 ε`.
    pub fn support_radius(self) -> f64 {
        match self {
            DataProfile::GaussianBump => 7.0,
            DataProfile::Ring => 6.0,
            DataProfile::TwoBump => 8.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DataProfile::GaussianBump => "gaussian-bump",
            DataProfile::Ring => "ring",
            DataProfile::TwoBump => "two-bump",
        }
    }
}

/// `(u_0, u_1, v_0, v_1)` at t = 0.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialData {
    pub u0: Field2D,
    pub u1: Field2D,
    pub v0: Field2D,
    pub v1: Field2D,
}

impl InitialData {
    pub fn zero(grid: Grid2D) -> Self {
        let z = Field2D::zeros(grid);
        Self { u0: z.clone(), u1: z.clone(), v0: z.clone(), v1: z }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            u0: self.u0.scaled(c),
            u1: self.u1.scaled(c),
            v0: self.v0.scaled(c),
            v1: self.v1.scaled(c),
        }
    }

    pub fn grid(&self) -> &Grid2D {
        self.u0.grid()
    }

    /// Weighted data norms for derivative orders 0..=4.
    pub fn norms(&self) -> Result<[f64; grid::MAX_DATA_ORDER + 1]> {
        let mut out = [0.0; grid::MAX_DATA_ORDER + 1];
        for (k, o) in out.iter_mut().enumerate() {
            *o = weighted_data_norm(&self.u0, &self.u1, &self.v0, &self.v1, k)?;
        }
        Ok(out)
    }
}

fn gauss(x: f64, y: f64, cx: f64, cy: f64) -> f64 {
    (-((x - cx).powi(2) + (y - cy).powi(2))).exp()
}

/// Smooth, rapidly decaying data of amplitude `epsilon`. The two components
/// are deliberately not radial about the same centre, so every null form
/// in the system is active.
pub fn make_initial_data(profile: DataProfile, epsilon: f64, grid: Grid2D) -> Result<InitialData> {
    if !epsilon.is_finite() {
        return Err(Error::ConfigRejected("epsilon must be finite".into()));
    }
    let e = epsilon;
    let f = |h: &dyn Fn(f64, f64) -> f64| Field2D::from_fn(grid, |x, y| e * h(x, y));
    Ok(match profile {
        DataProfile::GaussianBump => InitialData {
            u0: f(&|x, y| gauss(x, y, 0.0, 0.0))?,
            u1: f(&|x, y| (0.5 + x) * gauss(x, y, 0.0, 0.0))?,
            v0: f(&|x, y| gauss(x, y, 0.5, 0.0))?,
            v1: f(&|x, y| (y - 0.3) * gauss(x, y, 0.0, 0.5))?,
        },
        DataProfile::Ring => {
            let ring = |x: f64, y: f64| (-4.0 * (x.hypot(y) - 3.0).powi(2)).exp();
            InitialData {
                u0: f(&|x, y| ring(x, y))?,
                u1: Field2D::zeros(grid),
                v0: f(&|x, y| ring(x, y) * (1.0 + 0.3 * x / 3.0))?,
                v1: f(&|x, y| 0.5 * ring(x, y) * y / 3.0)?,
            }
        }
        DataProfile::TwoBump => InitialData {
            u0: f(&|x, y| gauss(x, y, 2.0, 0.0) - gauss(x, y, -2.0, 0.0))?,
            u1: Field2D::zeros(grid),
            v0: f(&|x, y| gauss(x, y, 0.0, 2.0) + gauss(x, y, 0.0, -2.0))?,
            v1: Field2D::zeros(grid),
        },
    })
}

/// Square grid `n × n` on `[-half_width, half_width)²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n: usize,
    pub half_width: f64,
}

impl GridSpec {
    pub fn build(&self) -> Result<Grid2D> {
        Grid2D::centered(self.n, self.half_width)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticToggles {
    /// E_m, conformal energy
    pub energies: bool,
    /// ghost-weight energies and spacetime integrals, accumulated every step
    pub ghost: bool,
    /// energies of Γu, Γv for the admissible fields, every `gamma_stride`
    /// snapshots
    pub gamma_energies: bool,
    pub gamma_stride: usize,
}

impl Default for DiagnosticToggles {
    fn default() -> Self {
        Self { energies: true, ghost: true, gamma_energies: true, gamma_stride: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub grid: GridSpec,
    pub couplings: Couplings,
    pub epsilon: f64,
    pub profile: DataProfile,
    pub t_end: f64,
    pub cfl: f64,
    /// time between snapshots
    pub output_every: f64,
    pub scheme: Scheme,
    /// exponent of the ⟨t⟩^{-δ} damping
    pub delta: f64,
    pub diagnostics: DiagnosticToggles,
}

impl SimConfig {
    pub fn new(grid: GridSpec, epsilon: f64, t_end: f64) -> Self {
        Self {
            grid,
            couplings: Couplings::generic(),
            epsilon,
            profile: DataProfile::GaussianBump,
            t_end,
            cfl: 0.5,
            output_every: 1.0,
            scheme: Scheme::Spectral,
            delta: 0.1,
            diagnostics: DiagnosticToggles::default(),
        }
    }

    /// Largest `cfl` for which RK4 is stable with the highest resolved
    /// frequency of the spatial operator (RK4 covers |λ dt| ≤ 2√2 on the
    /// imaginary axis).
    pub fn cfl_limit(&self) -> f64 {
        let per_axis = match self.scheme {
            Scheme::Spectral => std::f64::consts::PI,
            Scheme::Fd4 => (16.0f64 / 3.0).sqrt(),
        };
        let dx = 2.0 * self.grid.half_width / self.grid.n as f64;
        let omega = (2.0 * per_axis * per_axis / (dx * dx) + 1.0).sqrt();
        2.0 * 2f64.sqrt() / (omega * dx)
    }

    /// Checks everything that can be checked before allocating fields.
    pub fn validate(&self) -> Result<()> {
        let reject = |m: String| Err(Error::ConfigRejected(m));
        if !self.grid.n.is_power_of_two() || self.grid.n < 16 {
            return reject(format!("grid.n = {} must be a power of two >= 16", self.grid.n));
        }
        if !(self.grid.half_width > 0.0) || !self.grid.half_width.is_finite() {
            return reject("grid.half_width must be positive".into());
        }
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return reject("t_end must be finite and >= 0".into());
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return reject(format!("cfl = {} must lie in (0, 1]", self.cfl));
        }
        if self.cfl > self.cfl_limit() {
            return reject(format!("cfl = {} exceeds the RK4 stability limit {:.3}", self.cfl, self.cfl_limit()));
        }
        if !(self.output_every > 0.0) {
            return reject("output_every must be positive".into());
        }
        if !self.epsilon.is_finite() || !self.delta.is_finite() || self.delta < 0.0 {
            return reject("epsilon and delta must be finite, delta >= 0".into());
        }
        if self.diagnostics.gamma_stride == 0 {
            return reject("gamma_stride must be >= 1".into());
        }
        Couplings::new(self.couplings.p1, self.couplings.p2)?;
        let needed = self.profile.support_radius() + self.t_end + 2.0;
        if self.grid.half_width < needed {
            return reject(format!(
                "no-wrap condition violated: half_width {} < data radius {} + t_end {} + 2",
                self.grid.half_width,
                self.profile.support_radius(),
                self.t_end
            ));
        }
        Ok(())
    }

    /// `(snapshots, steps per snapshot, dt)`: the step is the largest that
    /// respects the CFL number and lands exactly on every output time.
    pub fn time_plan(&self) -> (usize, usize, f64) {
        let dx = 2.0 * self.grid.half_width / self.grid.n as f64;
        if self.t_end == 0.0 {
            return (0, 1, self.cfl * dx);
        }
        let n_out = ((self.t_end / self.output_every).round() as usize).max(1);
        let span = self.t_end / n_out as f64;
        let per = (span / (self.cfl * dx) - 1e-9).ceil().max(1.0) as usize;
        (n_out, per, span / per as f64)
    }
}

/// Everything the right-hand side computes, kept for the diagnostics.
struct RhsParts {
    utt: Field2D,
    vtt: Field2D,
    f1: Field2D,
    f2: Field2D,
}

fn spatial_parts(s: &EvolState, scheme: Scheme) -> Result<([Field2D; 4], Field2D, Field2D)> {
    let g = *s.grid();
    match scheme {
        Scheme::Spectral => {
            if !s.u.is_finite() || !s.v.is_finite() {
                return Err(Error::InvalidField("non-finite state".into()));
            }
            let ops = spectral::ops(&g);
            let z = ops.forward_pair(s.u.values(), s.v.values());
            // the packed spectrum of u + i v goes through any multiplier
            // with m(-k) = conj m(k) without mixing the two
            let (d1u, d1v) = ops.inverse_pair(ops.multiply(&z, |k| ops.ik(k, 0)));
            let (d2u, d2v) = ops.inverse_pair(ops.multiply(&z, |k| ops.ik(k, 1)));
            let (lu, lv) = ops.inverse_pair(ops.multiply(&z, |k| Complex64::new(-ops.k_squared(k), 0.0)));
            let f = |v| Field2D::from_raw(g, v);
            Ok(([f(d1u), f(d2u), f(d1v), f(d2v)], f(lu), f(lv)))
        }
        Scheme::Fd4 => Ok((
            [
                spatial_derivative(&s.u, Axis::X1, scheme)?,
                spatial_derivative(&s.u, Axis::X2, scheme)?,
                spatial_derivative(&s.v, Axis::X1, scheme)?,
                spatial_derivative(&s.v, Axis::X2, scheme)?,
            ],
            grid::laplacian_with(&s.u, scheme)?,
            grid::laplacian_with(&s.v, scheme)?,
        )),
    }
}

fn rhs_parts(s: &EvolState, p: &Couplings, scheme: Scheme) -> Result<RhsParts> {
    let blow = |s: &EvolState| Error::BlowUp {
        t: s.t,
        sup: s.u.max_abs().max(s.v.max_abs()),
        history: Vec::new(),
    };
    let (grads, lu, lv) = spatial_parts(s, scheme).map_err(|_| blow(s))?;
    let du = [&s.ut, &grads[0], &grads[1]];
    let dv = [&s.vt, &grads[2], &grads[3]];
    let f1 = coupled_source_field(&p.p1, du, dv).map_err(|_| blow(s))?;
    let f2 = coupled_source_field(&p.p2, du, dv).map_err(|_| blow(s))?;
    let utt = lu.add(&f1)?;
    let vtt = lv.zip_map(&s.v, |l, v| l - v)?.add(&f2)?;
    if !utt.is_finite() || !vtt.is_finite() {
        return Err(blow(s));
    }
    Ok(RhsParts { utt, vtt, f1, f2 })
}

/// `(u_t, Δu + F_1, v_t, Δv - v + F_2)` with `F_i = P_i^{αβ} Q_αβ(u, v)`.
pub fn rhs(state: &EvolState, p: &Couplings, scheme: Scheme) -> Result<StateRate> {
    let parts = rhs_parts(state, p, scheme)?;
    Ok(StateRate { u: state.ut.clone(), ut: parts.utt, v: state.vt.clone(), vt: parts.vtt })
}

fn shifted(s: &EvolState, h: f64, k: &StateRate) -> Result<EvolState> {
    let mut out = s.clone();
    out.t += h;
    out.u.axpy(h, &k.u)?;
    out.ut.axpy(h, &k.ut)?;
    out.v.axpy(h, &k.v)?;
    out.vt.axpy(h, &k.vt)?;
    Ok(out)
}

fn rk4_from(s: &EvolState, k1: StateRate, p: &Couplings, dt: f64, scheme: Scheme) -> Result<EvolState> {
    let k2 = rhs(&shifted(s, 0.5 * dt, &k1)?, p, scheme)?;
    let k3 = rhs(&shifted(s, 0.5 * dt, &k2)?, p, scheme)?;
    let k4 = rhs(&shifted(s, dt, &k3)?, p, scheme)?;
    let mut out = s.clone();
    out.t = s.t + dt;
    let c = dt / 6.0;
    let upd = |o: &mut Field2D, a: &Field2D, b: &Field2D, cc: &Field2D, d: &Field2D| -> Result<()> {
        o.axpy(c, a)?;
        o.axpy(2.0 * c, b)?;
        o.axpy(2.0 * c, cc)?;
        o.axpy(c, d)
    };
    upd(&mut out.u, &k1.u, &k2.u, &k3.u, &k4.u)?;
    upd(&mut out.ut, &k1.ut, &k2.ut, &k3.ut, &k4.ut)?;
    upd(&mut out.v, &k1.v, &k2.v, &k3.v, &k4.v)?;
    upd(&mut out.vt, &k1.vt, &k2.vt, &k3.vt, &k4.vt)?;
    Ok(out)
}

/// One classical RK4 step.
pub fn step_rk4(state: &EvolState, p: &Couplings, dt: f64, scheme: Scheme) -> Result<EvolState> {
    let k1 = rhs(state, p, scheme)?;
    rk4_from(state, k1, p, dt, scheme)
}

/// `E_m` of `Γw` for no field (index 0) and each admissible field in order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaEnergies {
    pub t: f64,
    pub u: [f64; 7],
    pub v: [f64; 7],
}

impl GammaEnergies {
    pub fn labels() -> [&'static str; 7] {
        let mut out = ["none"; 7];
        for (k, id) in VectorFieldId::ADMISSIBLE.iter().enumerate() {
            out[k + 1] = id.name();
        }
        out
    }

    pub fn compute(u: &TimeJetField, v: &TimeJetField, scheme: Scheme) -> Result<Self> {
        let mask = RegionMask::all(*u.grid());
        let of = |w: &TimeJetField, m: f64| -> Result<[f64; 7]> {
            let mut out = [0.0; 7];
            out[0] = energies::energy(m, &w.w, &w.wt, &mask)?;
            for (k, &id) in VectorFieldId::ADMISSIBLE.iter().enumerate() {
                let gw = apply_gamma(id, w, scheme)?;
                let gwt = apply_gamma_dt(id, w, scheme)?;
                out[k + 1] = energies::energy(m, &gw, &gwt, &mask)?;
            }
            Ok(out)
        };
        Ok(Self { t: u.t, u: of(u, 0.0)?, v: of(v, 1.0)? })
    }
}

/// One output time of a run.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub index: usize,
    pub state: EvolState,
    /// second time derivatives from the equations
    pub utt: Field2D,
    pub vtt: Field2D,
    pub report: Option<EnergyReport>,
    pub gamma: Option<GammaEnergies>,
}

impl Snapshot {
    pub fn t(&self) -> f64 {
        self.state.t
    }

    pub fn u_jet(&self) -> TimeJetField {
        TimeJetField {
            t: self.state.t,
            w: self.state.u.clone(),
            wt: self.state.ut.clone(),
            wtt: self.utt.clone(),
            wtt_source: WttSource::Pde,
        }
    }

    pub fn v_jet(&self) -> TimeJetField {
        TimeJetField {
            t: self.state.t,
            w: self.state.v.clone(),
            wt: self.state.vt.clone(),
            wtt: self.vtt.clone(),
            wtt_source: WttSource::Pde,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub steps: usize,
    pub dt: f64,
    pub t_end: f64,
    pub snapshots: usize,
    pub data_norms: [f64; grid::MAX_DATA_ORDER + 1],
    /// largest `max_boundary |w| / max |w|` over snapshots and both fields
    pub max_boundary_ratio: f64,
    /// (t, max |u|, max |v|) after every step
    pub sup_history: Vec<(f64, f64, f64)>,
    /// final ghost bookkeeping for u and v
    pub ghost_u: Option<GhostReport>,
    pub ghost_v: Option<GhostReport>,
}

fn boundary_ratio(f: &Field2D) -> f64 {
    let g = f.grid();
    let sup = f.max_abs();
    if sup == 0.0 {
        return 0.0;
    }
    let mut b = 0.0f64;
    for i in 0..g.nx {
        b = b.max(f.at(i, 0).abs()).max(f.at(i, g.ny - 1).abs());
    }
    for j in 0..g.ny {
        b = b.max(f.at(0, j).abs()).max(f.at(g.nx - 1, j).abs());
    }
    b / sup
}

/// Evolve the configured data from 0 to `t_end`, handing every snapshot to
/// `observer`.
pub fn run(config: &SimConfig, observer: &mut dyn FnMut(&Snapshot) -> Result<()>) -> Result<RunSummary> {
    config.validate()?;
    let grid = config.grid.build()?;
    let data = make_initial_data(config.profile, config.epsilon, grid)?;
    run_with_data(config, &data, observer)
}

/// [`run`] with caller-supplied data (the no-wrap check still uses the
/// configured profile's radius).
pub fn run_with_data(
    config: &SimConfig,
    data: &InitialData,
    observer: &mut dyn FnMut(&Snapshot) -> Result<()>,
) -> Result<RunSummary> {
    config.validate()?;
    if *data.grid() != config.grid.build()? {
        return Err(Error::GridMismatch);
    }
    let (n_out, per, dt) = config.time_plan();
    let total = n_out * per;
    let scheme = config.scheme;
    let p = config.couplings;
    let diag = config.diagnostics;
    let threshold = if config.epsilon != 0.0 { 1e6 * config.epsilon.abs() } else { f64::INFINITY };

    let mut state = EvolState::from_data(data);
    let mut history = Vec::with_capacity(total + 1);
    let (su, sv) = state.sups();
    history.push((0.0, su, sv));
    let mut ghost: Option<(GhostReport, GhostReport)> = None;
    let mut summary = RunSummary {
        steps: total,
        dt,
        t_end: config.t_end,
        snapshots: 0,
        data_norms: data.norms()?,
        max_boundary_ratio: 0.0,
        sup_history: Vec::new(),
        ghost_u: None,
        ghost_v: None,
    };
    let with_history = |e: Error, history: &[(f64, f64, f64)]| match e {
        Error::BlowUp { t, sup, .. } => Error::BlowUp { t, sup, history: history.to_vec() },
        other => other,
    };

    for step in 0..=total {
        let parts = rhs_parts(&state, &p, scheme).map_err(|e| with_history(e, &history))?;
        let t = state.t;
        if diag.ghost {
            ghost = Some(match ghost.take() {
                None => (
                    GhostReport::start(0.0, config.delta, t, &state.u, &state.ut, Some(&parts.f1))?,
                    GhostReport::start(1.0, config.delta, t, &state.v, &state.vt, Some(&parts.f2))?,
                ),
                Some((gu, gv)) => {
                    let t0 = gu.t;
                    (
                        energies::ghost_energy_step(
                            &gu,
                            SlabEnd { t_start: t0, t_end: t, w: &state.u, wt: &state.ut, f: Some(&parts.f1) },
                        )?,
                        energies::ghost_energy_step(
                            &gv,
                            SlabEnd { t_start: t0, t_end: t, w: &state.v, wt: &state.vt, f: Some(&parts.f2) },
                        )?,
                    )
                }
            });
        }
        if step % per == 0 {
            let index = step / per;
            let mut snap = Snapshot {
                index,
                state: state.clone(),
                utt: parts.utt.clone(),
                vtt: parts.vtt.clone(),
                report: None,
                gamma: None,
            };
            if diag.energies {
                let mask = RegionMask::all(grid_of(&state));
                let e_wave = energies::energy(0.0, &state.u, &state.ut, &mask)?;
                let e_kg = energies::energy(1.0, &state.v, &state.vt, &mask)?;
                let con = conformal_energy(&snap.u_jet(), scheme)?;
                let mut rep = EnergyReport { t, e_wave, e_kg, ..Default::default() };
                rep.econ_s = con.scaling;
                rep.econ_omega = con.rotation;
                rep.econ_l = con.boosts;
                if let Some((gu, gv)) = &ghost {
                    rep = EnergyReport::assemble(t, e_wave, e_kg, con, gu, gv);
                }
                snap.report = Some(rep);
            }
            if diag.gamma_energies && index % diag.gamma_stride == 0 {
                snap.gamma = Some(GammaEnergies::compute(&snap.u_jet(), &snap.v_jet(), scheme)?);
            }
            summary.max_boundary_ratio = summary
                .max_boundary_ratio
                .max(boundary_ratio(&state.u))
                .max(boundary_ratio(&state.v));
            summary.snapshots += 1;
            observer(&snap)?;
        }
        if step == total {
            break;
        }
        let k1 = StateRate { u: state.ut.clone(), ut: parts.utt, v: state.vt.clone(), vt: parts.vtt };
        let next = rk4_from(&state, k1, &p, dt, scheme).map_err(|e| with_history(e, &history))?;
        // land exactly on the planned mesh
        state = EvolState { t: (step + 1) as f64 * dt, ..next };
        let (su, sv) = state.sups();
        history.push((state.t, su, sv));
        if !state.is_finite() || su.max(sv) > threshold {
            return Err(Error::BlowUp { t: state.t, sup: su.max(sv), history });
        }
    }
    if let Some((gu, gv)) = ghost {
        summary.ghost_u = Some(gu);
        summary.ghost_v = Some(gv);
    }
    summary.sup_history = history;
    Ok(summary)
}

fn grid_of(s: &EvolState) -> Grid2D {
    *s.grid()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear::{propagate_free, PropagatorKind};
    use std::f64::consts::PI;

    fn small_config(eps: f64, t_end: f64) -> SimConfig {
        let mut c = SimConfig::new(GridSpec { n: 64, half_width: 7.0 + t_end + 2.0 }, eps, t_end);
        c.output_every = t_end.max(0.5) / 4.0;
        c
    }

    #[test]
    fn zero_state_has_zero_rate_and_stays_zero() {
        let g = Grid2D::centered(32, 4.0).unwrap();
        let s = EvolState::from_data(&InitialData::zero(g));
        let r = rhs(&s, &Couplings::generic(), Scheme::Spectral).unwrap();
        for f in [&r.u, &r.ut, &r.v, &r.vt] {
            assert_eq!(f.max_abs(), 0.0);
        }
        let n = step_rk4(&s, &Couplings::generic(), 0.1, Scheme::Spectral).unwrap();
        assert_eq!(n.u.max_abs() + n.v.max_abs() + n.ut.max_abs() + n.vt.max_abs(), 0.0);
    }

    #[test]
    fn decoupled_rhs_is_the_linear_operator() {
        let g = Grid2D::centered(32, 4.0).unwrap();
        let l = 8.0;
        let k = 2.0 * PI / l;
        let mode = Field2D::from_fn(g, |x, y| (k * x).sin() * (2.0 * k * y).cos()).unwrap();
        let s = EvolState::new(0.0, mode.clone(), mode.scaled(0.3), mode.scaled(-2.0), Field2D::zeros(g)).unwrap();
        for scheme in [Scheme::Spectral] {
            let r = rhs(&s, &Couplings::zero(), scheme).unwrap();
            let k2 = 5.0 * k * k;
            let e1 = r.ut.sub(&mode.scaled(-k2)).unwrap().max_abs();
            let e2 = r.vt.sub(&mode.scaled(2.0 * k2 + 2.0)).unwrap().max_abs();
            assert!(e1 < 1e-12 && e2 < 1e-12, "{e1} {e2}");
            assert_eq!(r.u, s.ut);
        }
    }

    #[test]
    fn klein_gordon_zero_mode_is_fourth_order() {
        // spatially constant v: v'' = -v, v(0) = 1 → cos t
        let g = Grid2D::centered(16, 2.0).unwrap();
        let err = |dt: f64| {
            let mut s = EvolState::new(
                0.0,
                Field2D::zeros(g),
                Field2D::zeros(g),
                Field2D::constant(g, 1.0).unwrap(),
                Field2D::zeros(g),
            )
            .unwrap();
            let n = (2.0 / dt).round() as usize;
            for _ in 0..n {
                s = step_rk4(&s, &Couplings::zero(), dt, Scheme::Spectral).unwrap();
            }
            (s.v.values()[0] - 2f64.cos()).abs()
        };
        let ratio = err(0.1) / err(0.05);
        assert!((ratio - 16.0).abs() < 1.5, "ratio {ratio}");
    }

    #[test]
    fn nonlinear_self_convergence_is_fourth_order() {
        let g = Grid2D::centered(64, 10.0).unwrap();
        let data = make_initial_data(DataProfile::GaussianBump, 0.5, g).unwrap();
        let p = Couplings::generic();
        let run = |dt: f64| {
            let mut s = EvolState::from_data(&data);
            let n = (1.0 / dt).round() as usize;
            for _ in 0..n {
                s = step_rk4(&s, &p, dt, Scheme::Spectral).unwrap();
            }
            s
        };
        let (a, b, c) = (run(0.1), run(0.05), run(0.025));
        let e1 = a.u.sub(&b.u).unwrap().max_abs();
        let e2 = b.u.sub(&c.u).unwrap().max_abs();
        let order = (e1 / e2).log2();
        assert!(order >= 3.5, "order {order}");
    }

    #[test]
    fn profiles_scale_and_localize() {
        let g = Grid2D::centered(128, 10.0).unwrap();
        assert_eq!(make_initial_data(DataProfile::Ring, 0.0, g).unwrap(), InitialData::zero(g));
        let a = make_initial_data(DataProfile::GaussianBump, 0.01, g).unwrap().norms().unwrap();
        let b = make_initial_data(DataProfile::GaussianBump, 0.02, g).unwrap().norms().unwrap();
        for k in 0..a.len() {
            assert!((b[k] - 2.0 * a[k]).abs() < 1e-14 * b[k]);
        }
        for profile in [DataProfile::Ring, DataProfile::GaussianBump, DataProfile::TwoBump] {
            let d = make_initial_data(profile, 1.0, g).unwrap();
            let r0 = profile.support_radius();
            for f in [&d.u0, &d.u1, &d.v0, &d.v1] {
                for n in 0..g.len() {
                    let (x, y) = g.point(n);
                    if x.hypot(y) > r0 {
                        assert!(f.values()[n].abs() < 1e-14, "{profile:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn config_validation() {
        let mut c = small_config(0.01, 2.0);
        assert!(c.validate().is_ok());
        c.grid.half_width = 8.0;
        assert!(matches!(c.validate(), Err(Error::ConfigRejected(m)) if m.contains("no-wrap")));
        let mut c = small_config(0.01, 2.0);
        c.cfl = 0.95;
        assert!(c.validate().is_err());
        c.cfl = 0.0;
        assert!(c.validate().is_err());
        let (n_out, per, dt) = small_config(0.01, 2.0).time_plan();
        assert!((n_out * per) as f64 * dt - 2.0 < 1e-12);
    }

    #[test]
    fn zero_epsilon_run_is_identically_zero() {
        let c = small_config(0.0, 1.0);
        let mut seen = 0;
        let sum = run(&c, &mut |s: &Snapshot| {
            seen += 1;
            assert_eq!(s.state.u.max_abs() + s.state.v.max_abs(), 0.0);
            let rep = s.report.unwrap();
            assert!(rep.csv_row()[1..].iter().all(|&x| x == 0.0));
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, 5);
        assert_eq!(sum.snapshots, 5);
    }

    #[test]
    fn decoupled_run_matches_free_propagation() {
        let mut c = small_config(0.01, 2.0);
        c.couplings = Couplings::zero();
        // RK4 phase error is ~5e-5 at cfl 0.5 on this grid
        c.cfl = 0.05;
        let g = c.grid.build().unwrap();
        let data = make_initial_data(c.profile, c.epsilon, g).unwrap();
        let mut last = None;
        run(&c, &mut |s: &Snapshot| {
            last = Some(s.state.clone());
            Ok(())
        })
        .unwrap();
        let last = last.unwrap();
        let (u, _) = propagate_free(PropagatorKind::WAVE, &data.u0, &data.u1, 2.0).unwrap();
        let (v, _) = propagate_free(PropagatorKind::KLEIN_GORDON, &data.v0, &data.v1, 2.0).unwrap();
        let eu = last.u.sub(&u).unwrap().max_abs() / u.max_abs();
        let ev = last.v.sub(&v).unwrap().max_abs() / v.max_abs();
        assert!(eu < 1e-6 && ev < 1e-6, "{eu} {ev}");
    }

    #[test]
    fn energies_and_ghost_integrals_are_sane() {
        let mut c = small_config(0.05, 3.0);
        // the data must be resolved to round-off for the no-wrap check
        c.grid.n = 128;
        let mut reports = Vec::new();
        let sum = run(&c, &mut |s: &Snapshot| {
            reports.push(s.report.unwrap());
            assert!(s.gamma.is_some());
            Ok(())
        })
        .unwrap();
        for w in reports.windows(2) {
            assert!(w[1].ighost_g >= w[0].ighost_g && w[1].ighost_m >= w[0].ighost_m);
        }
        for r in &reports {
            assert!(r.csv_row().iter().all(|x| *x >= 0.0));
        }
        assert!(sum.max_boundary_ratio < 1e-12, "{}", sum.max_boundary_ratio);
        assert_eq!(sum.sup_history.len(), sum.steps + 1);
    }

    #[test]
    fn blow_up_is_reported_with_history() {
        // large data and coupling on a coarse grid: the detector must fire
        let mut c = small_config(1e-6, 2.0);
        c.couplings = Couplings::generic().scaled(1e8);
        let g = c.grid.build().unwrap();
        let data = make_initial_data(c.profile, 1.0, g).unwrap();
        match run_with_data(&c, &data, &mut |_| Ok(())) {
            Err(Error::BlowUp { history, .. }) => assert!(!history.is_empty()),
            other => panic!("expected blow-up, got {other:?}"),
        }
    }
}
