//! Fixed-point machinery: the solution map T, a discrete surrogate of the
//! trajectory norm used for the contraction argument, Picard iteration, and
//! the divergence decomposition of the wave component with its normal form.
//!
//! The wave unknown is `m` (mass 0) and the Klein-Gordon unknown is `n`
//! (mass 1) throughout.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::energies::japanese;
use crate::error::{Error, Result};
use crate::evolve::{make_initial_data, DataProfile, GridSpec, InitialData};
use crate::grid::{self, spatial_derivative, Axis, Field2D, Grid2D, Scheme};
use crate::linear::{propagate_free, time_mesh, PropagatorKind, SourcedPropagator, Trajectory};
use crate::nullforms::{coupled_source_field, q0, Couplings, Jet1, Matrix3, TimeSlab};
use crate::taylor::{box_op, Jet};
use crate::vectorfields::VectorFieldId;

/// A pair of trajectories `(m, n)` on a common grid and time mesh.
#[derive(Debug, Clone)]
pub struct IteratePair {
    pub m: Trajectory,
    pub n: Trajectory,
}

fn same_mesh(a: &Trajectory, b: &Trajectory) -> bool {
    a.len() == b.len()
        && a.times.iter().zip(&b.times).all(|(x, y)| (x - y).abs() <= 1e-12 * (1.0 + x.abs()))
}

fn map_traj(a: &Trajectory, f: impl Fn(&Field2D) -> Field2D) -> Trajectory {
    Trajectory {
        times: a.times.clone(),
        w: a.w.iter().map(&f).collect(),
        wt: a.wt.iter().map(&f).collect(),
    }
}

fn zip_traj(a: &Trajectory, b: &Trajectory, f: impl Fn(&Field2D, &Field2D) -> Result<Field2D>) -> Result<Trajectory> {
    if !same_mesh(a, b) {
        return Err(Error::TimeMeshMismatch);
    }
    Ok(Trajectory {
        times: a.times.clone(),
        w: a.w.iter().zip(&b.w).map(|(x, y)| f(x, y)).collect::<Result<_>>()?,
        wt: a.wt.iter().zip(&b.wt).map(|(x, y)| f(x, y)).collect::<Result<_>>()?,
    })
}

impl IteratePair {
    pub fn new(m: Trajectory, n: Trajectory) -> Result<Self> {
        if m.is_empty() || !same_mesh(&m, &n) {
            return Err(Error::TimeMeshMismatch);
        }
        let g = *m.w[0].grid();
        for f in m.w.iter().chain(&m.wt).chain(&n.w).chain(&n.wt) {
            if *f.grid() != g {
                return Err(Error::GridMismatch);
            }
            if !f.is_finite() {
                return Err(Error::InvalidField("iterate pair has non-finite samples".into()));
            }
        }
        Ok(Self { m, n })
    }

    pub fn zero(grid: Grid2D, t_end: f64, dt: f64) -> Result<Self> {
        let (steps, h) = time_mesh(t_end, dt)?;
        let times: Vec<f64> = (0..=steps).map(|k| k as f64 * h).collect();
        let z = Field2D::zeros(grid);
        let traj = Trajectory { times: times.clone(), w: vec![z.clone(); times.len()], wt: vec![z; times.len()] };
        Ok(Self { m: traj.clone(), n: traj })
    }

    /// Free wave evolution of `(u0, u1)` and free Klein-Gordon evolution of
    /// `(v0, v1)`, sampled on the mesh.
    pub fn free(data: &InitialData, t_end: f64, dt: f64) -> Result<Self> {
        let (steps, h) = time_mesh(t_end, dt)?;
        let mut m = Trajectory { times: Vec::new(), w: Vec::new(), wt: Vec::new() };
        let mut n = m.clone();
        for k in 0..=steps {
            let t = k as f64 * h;
            let (a, b) = propagate_free(PropagatorKind::WAVE, &data.u0, &data.u1, t)?;
            let (c, d) = propagate_free(PropagatorKind::KLEIN_GORDON, &data.v0, &data.v1, t)?;
            m.times.push(t);
            m.w.push(a);
            m.wt.push(b);
            n.times.push(t);
            n.w.push(c);
            n.wt.push(d);
        }
        Self::new(m, n)
    }

    pub fn times(&self) -> &[f64] {
        &self.m.times
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    pub fn grid(&self) -> Grid2D {
        *self.m.w[0].grid()
    }

    /// Mesh spacing (0 for a single level).
    pub fn dt(&self) -> f64 {
        if self.len() < 2 {
            0.0
        } else {
            self.m.times[1] - self.m.times[0]
        }
    }

    pub fn sub(&self, other: &IteratePair) -> Result<IteratePair> {
        Ok(IteratePair {
            m: zip_traj(&self.m, &other.m, |a, b| a.sub(b))?,
            n: zip_traj(&self.n, &other.n, |a, b| a.sub(b))?,
        })
    }

    pub fn add(&self, other: &IteratePair) -> Result<IteratePair> {
        Ok(IteratePair {
            m: zip_traj(&self.m, &other.m, |a, b| a.add(b))?,
            n: zip_traj(&self.n, &other.n, |a, b| a.add(b))?,
        })
    }

    pub fn scaled(&self, c: f64) -> IteratePair {
        IteratePair { m: map_traj(&self.m, |f| f.scaled(c)), n: map_traj(&self.n, |f| f.scaled(c)) }
    }

    /// `max |m|` and `max |n|` at the last level.
    pub fn final_sups(&self) -> (f64, f64) {
        (self.m.w.last().map_or(0.0, |f| f.max_abs()), self.n.w.last().map_or(0.0, |f| f.max_abs()))
    }
}

/// `(∂_t, ∂_1, ∂_2)` of a level of a trajectory, time part as stored.
fn level_gradient(tr: &Trajectory, k: usize) -> [Field2D; 3] {
    let (d1, d2) = grid::gradient(&tr.w[k]);
    [tr.wt[k].clone(), d1, d2]
}

/// `P^{αβ} Q_αβ(m, n)` at level `k` for `P_1` and `P_2`.
fn sources_at(pair: &IteratePair, p: &Couplings, k: usize) -> Result<(Field2D, Field2D)> {
    let dm = level_gradient(&pair.m, k);
    let dn = level_gradient(&pair.n, k);
    let dm = [&dm[0], &dm[1], &dm[2]];
    let dn = [&dn[0], &dn[1], &dn[2]];
    Ok((coupled_source_field(&p.p1, dm, dn)?, coupled_source_field(&p.p2, dm, dn)?))
}

fn is_zero(pair: &IteratePair) -> bool {
    pair.m.w.iter().chain(&pair.m.wt).chain(&pair.n.w).chain(&pair.n.wt).all(|f| f.max_abs() == 0.0)
}

fn midpoint(a: &Field2D, b: &Field2D) -> Result<Field2D> {
    a.zip_map(b, |x, y| 0.5 * (x + y))
}

/// `T(m, n) = (φ, ψ)` with `-□φ = P_1 Q(m, n)`, `-□ψ + ψ = P_2 Q(m, n)` and
/// the given data. Each step uses exact free flight and the mean of the
/// sources at its two ends.
pub fn apply_t(pair: &IteratePair, p: &Couplings, data: &InitialData) -> Result<IteratePair> {
    if *data.grid() != pair.grid() {
        return Err(Error::GridMismatch);
    }
    let zero_source = is_zero(pair);
    let mut phi = SourcedPropagator::new(PropagatorKind::WAVE, &data.u0, &data.u1)?;
    let mut psi = SourcedPropagator::new(PropagatorKind::KLEIN_GORDON, &data.v0, &data.v1)?;
    let times = pair.times().to_vec();
    let mut m = Trajectory { times: times.clone(), w: vec![data.u0.clone()], wt: vec![data.u1.clone()] };
    let mut n = Trajectory { times: times.clone(), w: vec![data.v0.clone()], wt: vec![data.v1.clone()] };
    let mut prev = if zero_source { None } else { Some(sources_at(pair, p, 0)?) };
    for k in 0..times.len().saturating_sub(1) {
        let h = times[k + 1] - times[k];
        if zero_source {
            phi.step(h, None)?;
            psi.step(h, None)?;
        } else {
            let next = sources_at(pair, p, k + 1)?;
            let (a, b) = prev.as_ref().expect("sources for a nonzero pair");
            phi.step(h, Some(&midpoint(a, &next.0)?))?;
            psi.step(h, Some(&midpoint(b, &next.1)?))?;
            prev = Some(next);
        }
        let (w, wt) = phi.state();
        m.w.push(w);
        m.wt.push(wt);
        let (w, wt) = psi.state();
        n.w.push(w);
        n.wt.push(wt);
    }
    IteratePair::new(m, n)
}

/// Second time derivative of a trajectory at level `k` from its stored
/// velocities (centered inside, one-sided second order at the ends).
fn wtt_at(tr: &Trajectory, k: usize) -> Field2D {
    let l = tr.len();
    let g = *tr.w[0].grid();
    if l < 3 {
        return Field2D::zeros(g);
    }
    let h = tr.times[1] - tr.times[0];
    let v = |i: usize| tr.wt[i].values();
    let n = g.len();
    let values: Vec<f64> = if k == 0 {
        (0..n).map(|i| (-3.0 * v(0)[i] + 4.0 * v(1)[i] - v(2)[i]) / (2.0 * h)).collect()
    } else if k == l - 1 {
        (0..n).map(|i| (3.0 * v(k)[i] - 4.0 * v(k - 1)[i] + v(k - 2)[i]) / (2.0 * h)).collect()
    } else {
        (0..n).map(|i| (v(k + 1)[i] - v(k - 1)[i]) / (2.0 * h)).collect()
    };
    Field2D::from_values(g, values).expect("finite differences of finite data")
}

/// The surrogate norm and its labelled parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XNormSurrogate {
    pub value: f64,
    pub parts: Vec<(String, f64)>,
    /// highest vector-field order used
    pub order: usize,
    /// the sup over t is taken on [0, horizon]
    pub horizon: f64,
    pub delta: f64,
}

impl XNormSurrogate {
    pub fn part(&self, name: &str) -> Option<f64> {
        self.parts.iter().find(|(n, _)| n == name).map(|p| p.1)
    }
}

pub const XNORM_PARTS: [&str; 6] =
    ["energy", "ghost_damped", "ghost_undamped", "scaling", "kg_sup", "wave_derivative_sup"];

/// Per-level, per-field quantities entering the norm.
#[derive(Debug, Clone, Copy, Default)]
struct GammaLevel {
    l2: f64,
    energy: f64,
    /// ∫ ⟨t-r⟩^{-3/2} Σ_a (G_a Γw)²
    good: f64,
    /// ∫ ⟨t-r⟩^{-3/2} (Γw)²
    plain: f64,
}

const N_GAMMA: usize = 7;

/// `(Γw, ∂_t Γw)` for the identity (index 0) and the admissible fields.
fn gamma_pairs(t: f64, w: &Field2D, wt: &Field2D, wtt: &Field2D) -> Vec<(Field2D, Field2D)> {
    let g = *w.grid();
    let (d1, d2) = grid::gradient(w);
    let (d1t, d2t) = grid::gradient(wt);
    let build = |f: &dyn Fn(usize, f64, f64) -> f64| {
        Field2D::from_raw(
            g,
            (0..g.len())
                .map(|n| {
                    let (x, y) = g.point(n);
                    f(n, x, y)
                })
                .collect(),
        )
    };
    let (wt_, wtt_) = (wt.values(), wtt.values());
    let (a1, a2, b1, b2) = (d1.values(), d2.values(), d1t.values(), d2t.values());
    let mut out = Vec::with_capacity(N_GAMMA);
    out.push((w.clone(), wt.clone()));
    for id in VectorFieldId::ADMISSIBLE {
        let pair = match id {
            VectorFieldId::Dt => (wt.clone(), wtt.clone()),
            VectorFieldId::D1 => (d1.clone(), d1t.clone()),
            VectorFieldId::D2 => (d2.clone(), d2t.clone()),
            VectorFieldId::Omega12 => (
                build(&|n, x, y| x * a2[n] - y * a1[n]),
                build(&|n, x, y| x * b2[n] - y * b1[n]),
            ),
            VectorFieldId::L1 => (
                build(&|n, x, _| x * wt_[n] + t * a1[n]),
                build(&|n, x, _| x * wtt_[n] + a1[n] + t * b1[n]),
            ),
            VectorFieldId::L2 => (
                build(&|n, _, y| y * wt_[n] + t * a2[n]),
                build(&|n, _, y| y * wtt_[n] + a2[n] + t * b2[n]),
            ),
            VectorFieldId::S => unreachable!("S is not admissible"),
        };
        out.push(pair);
    }
    out
}

fn gamma_level(t: f64, m: f64, gw: &Field2D, gwt: &Field2D, r_min: f64) -> GammaLevel {
    let g = *gw.grid();
    let (d1, d2) = grid::gradient(gw);
    let (w, wt, a1, a2) = (gw.values(), gwt.values(), d1.values(), d2.values());
    let mut out = GammaLevel::default();
    for j in 0..g.ny {
        let mut row = GammaLevel::default();
        for i in 0..g.nx {
            let n = g.idx(i, j);
            let (x, y) = g.point(n);
            let r = x.hypot(y);
            let dq = (1.0 + (t - r) * (t - r)).powf(-0.75);
            row.l2 += w[n] * w[n];
            row.energy += wt[n] * wt[n] + a1[n] * a1[n] + a2[n] * a2[n] + m * m * w[n] * w[n];
            row.plain += dq * w[n] * w[n];
            if r >= r_min {
                let g1 = x / r * wt[n] + a1[n];
                let g2 = y / r * wt[n] + a2[n];
                row.good += dq * (g1 * g1 + g2 * g2);
            }
        }
        out.l2 += row.l2;
        out.energy += row.energy;
        out.plain += row.plain;
        out.good += row.good;
    }
    let da = g.cell_area();
    GammaLevel { l2: (out.l2 * da).sqrt(), energy: out.energy * da, good: out.good * da, plain: out.plain * da }
}

/// Sup-type quantities at one level (vector-field order 0).
fn sup_parts(t: f64, m: &Field2D, mt: &Field2D, n: &Field2D) -> (f64, f64, f64) {
    let g = *m.grid();
    let (d1, d2) = grid::gradient(m);
    let mut su2 = 0.0;
    let mut kg = 0.0f64;
    let mut dw = 0.0f64;
    for k in 0..g.len() {
        let (x, y) = g.point(k);
        let r = x.hypot(y);
        let s = t * mt.values()[k] + x * d1.values()[k] + y * d2.values()[k];
        su2 += s * s;
        kg = kg.max(japanese(t + r) * n.values()[k].abs());
        let du = mt.values()[k].abs().max(d1.values()[k].abs()).max(d2.values()[k].abs());
        dw = dw.max(japanese(t - r).powf(0.75) * japanese(t).sqrt() * du);
    }
    ((su2 * g.cell_area()).sqrt(), kg, dw)
}

/// Surrogate of the trajectory norm with vector-field strings of length at
/// most one. `stride` subsamples the time levels (the last level is always
/// included); the spacetime integrals use the trapezoid rule on the
/// subsampled levels.
pub fn x_norm(pair: &IteratePair, delta: f64, stride: usize) -> Result<XNormSurrogate> {
    let stride = stride.max(1);
    let l = pair.len();
    let mut levels: Vec<usize> = (0..l).step_by(stride).collect();
    if *levels.last().expect("nonempty pair") != l - 1 {
        levels.push(l - 1);
    }
    let g = pair.grid();
    let r_min = 0.5 * g.dx.min(g.dy);
    let mut best = [0.0f64; 6];
    // running time integrals per Γ: wave good, kg good, kg plain, damped kg
    let mut i_u_good = [0.0; N_GAMMA];
    let mut i_v_good = [0.0; N_GAMMA];
    let mut i_v_plain = [0.0; N_GAMMA];
    let mut i_damped = [0.0; N_GAMMA];
    let mut prev: Option<(f64, [GammaLevel; N_GAMMA], [GammaLevel; N_GAMMA])> = None;
    for &k in &levels {
        let t = pair.times()[k];
        let mtt = wtt_at(&pair.m, k);
        let ntt = wtt_at(&pair.n, k);
        let gu = gamma_pairs(t, &pair.m.w[k], &pair.m.wt[k], &mtt);
        let gv = gamma_pairs(t, &pair.n.w[k], &pair.n.wt[k], &ntt);
        let mut lu = [GammaLevel::default(); N_GAMMA];
        let mut lv = [GammaLevel::default(); N_GAMMA];
        for i in 0..N_GAMMA {
            lu[i] = gamma_level(t, 0.0, &gu[i].0, &gu[i].1, r_min);
            lv[i] = gamma_level(t, 1.0, &gv[i].0, &gv[i].1, r_min);
        }
        if let Some((t0, pu, pv)) = &prev {
            let h = t - t0;
            let (d0, d1) = (japanese(*t0).powf(-delta), japanese(t).powf(-delta));
            for i in 0..N_GAMMA {
                i_u_good[i] += 0.5 * h * (pu[i].good + lu[i].good);
                i_v_good[i] += 0.5 * h * (pv[i].good + lv[i].good);
                i_v_plain[i] += 0.5 * h * (pv[i].plain + lv[i].plain);
                i_damped[i] +=
                    0.5 * h * (d0 * (pv[i].plain + pv[i].good) + d1 * (lv[i].plain + lv[i].good));
            }
        }
        let damp = japanese(t).powf(-delta);
        for i in 0..N_GAMMA {
            let egst_u = lu[i].energy + i_u_good[i];
            let egst_v = lv[i].energy + i_v_plain[i] + i_v_good[i];
            best[0] = best[0].max(damp * (lu[i].l2 + egst_u.sqrt() + egst_v.sqrt()));
            best[1] = best[1].max(japanese(t).powf(-0.5 * delta) * i_damped[i].sqrt());
            if i == 0 {
                best[2] = best[2].max(egst_u.sqrt() + egst_v.sqrt());
            }
        }
        let (su, kg, dw) = sup_parts(t, &pair.m.w[k], &pair.m.wt[k], &pair.n.w[k]);
        best[3] = best[3].max(japanese(t).powf(-0.5 - delta) * su);
        best[4] = best[4].max(kg);
        best[5] = best[5].max(dw);
        prev = Some((t, lu, lv));
    }
    let parts: Vec<(String, f64)> = XNORM_PARTS.iter().zip(best).map(|(n, v)| (n.to_string(), v)).collect();
    Ok(XNormSurrogate {
        value: best.iter().copied().fold(0.0, f64::max),
        parts,
        order: 1,
        horizon: *pair.times().last().expect("nonempty pair"),
        delta,
    })
}

/// `x_norm(T(A) - T(B)) / x_norm(A - B)`
pub fn contraction_ratio(
    a: &IteratePair,
    b: &IteratePair,
    p: &Couplings,
    data: &InitialData,
    delta: f64,
    stride: usize,
) -> Result<f64> {
    let den = x_norm(&a.sub(b)?, delta, stride)?.value;
    if den == 0.0 {
        return Err(Error::UndefinedRatio);
    }
    let ta = apply_t(a, p, data)?;
    let tb = apply_t(b, p, data)?;
    Ok(x_norm(&ta.sub(&tb)?, delta, stride)?.value / den)
}

/// `A^{αγ} = P^{αγ} - P^{γα}`, so that `F^γ = A^{αγ} n ∂_α m`.
fn antisym(p: &Matrix3) -> Matrix3 {
    let mut a = [[0.0; 3]; 3];
    for al in 0..3 {
        for ga in 0..3 {
            a[al][ga] = p[al][ga] - p[ga][al];
        }
    }
    a
}

/// `F^γ = P^{αγ} n ∂_α m - P^{γβ} n ∂_β m` at level `k`, γ = 0, 1, 2.
fn divergence_fluxes(pair: &IteratePair, p1: &Matrix3, k: usize) -> Result<[Field2D; 3]> {
    let a = antisym(p1);
    let dm = level_gradient(&pair.m, k);
    let n = &pair.n.w[k];
    let g = *n.grid();
    let mut out = [Field2D::zeros(g), Field2D::zeros(g), Field2D::zeros(g)];
    for (ga, o) in out.iter_mut().enumerate() {
        for (al, d) in dm.iter().enumerate() {
            if a[al][ga] != 0.0 {
                o.axpy(a[al][ga], &n.mul(d)?)?;
            }
        }
    }
    Ok(out)
}

/// `φ = φ⁵ + ∂_γ φ^γ` with its pieces.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub phi5: Trajectory,
    pub phi_gamma: [Trajectory; 3],
    /// `max_t max_x |φ - φ⁵ - ∂_γ φ^γ|` against the wave component of T(m, n)
    pub reconstruction_residual: f64,
    /// `max_t max_x |φ|`, for scale
    pub phi_max: f64,
}

/// Solves `-□φ^γ = F^γ` with zero data and the free wave `φ⁵` with data
/// `(u_0, u_1 - F^0(0))`. The velocity correction is what makes the sum
/// reproduce φ: `∂_t ∂_γ φ^γ (0) = F^0(0)`. The time derivative of φ⁰ is
/// the velocity carried by the propagator.
pub fn divergence_decomposition(pair: &IteratePair, p1: &Matrix3, data: &InitialData) -> Result<Decomposition> {
    let g = pair.grid();
    let times = pair.times().to_vec();
    let zero = Field2D::zeros(g);
    let mut props = [
        SourcedPropagator::new(PropagatorKind::WAVE, &zero, &zero)?,
        SourcedPropagator::new(PropagatorKind::WAVE, &zero, &zero)?,
        SourcedPropagator::new(PropagatorKind::WAVE, &zero, &zero)?,
    ];
    let empty = || Trajectory { times: times.clone(), w: vec![zero.clone()], wt: vec![zero.clone()] };
    let mut phi_gamma = [empty(), empty(), empty()];
    let mut prev = divergence_fluxes(pair, p1, 0)?;
    let u1_corrected = data.u1.sub(&prev[0])?;
    let mut phi5 = Trajectory { times: times.clone(), w: vec![data.u0.clone()], wt: vec![u1_corrected.clone()] };
    for k in 0..times.len().saturating_sub(1) {
        let h = times[k + 1] - times[k];
        let next = divergence_fluxes(pair, p1, k + 1)?;
        for ga in 0..3 {
            props[ga].step(h, Some(&midpoint(&prev[ga], &next[ga])?))?;
            let (w, wt) = props[ga].state();
            phi_gamma[ga].w.push(w);
            phi_gamma[ga].wt.push(wt);
        }
        let (w, wt) = propagate_free(PropagatorKind::WAVE, &data.u0, &u1_corrected, times[k + 1])?;
        phi5.w.push(w);
        phi5.wt.push(wt);
        prev = next;
    }
    let phi = apply_t(pair, &Couplings { p1: *p1, p2: [[0.0; 3]; 3] }, data)?;
    let mut res = 0.0f64;
    let mut phi_max = 0.0f64;
    for k in 0..times.len() {
        let mut rec = phi5.w[k].add(&phi_gamma[0].wt[k])?;
        rec = rec.add(&spatial_derivative(&phi_gamma[1].w[k], Axis::X1, Scheme::Spectral)?)?;
        rec = rec.add(&spatial_derivative(&phi_gamma[2].w[k], Axis::X2, Scheme::Spectral)?)?;
        res = res.max(phi.m.w[k].sub(&rec)?.max_abs());
        phi_max = phi_max.max(phi.m.w[k].max_abs());
    }
    Ok(Decomposition { phi5, phi_gamma, reconstruction_residual: res, phi_max })
}

/// Residual of the normal-form equation for `Φ^γ = φ^γ + F^γ`:
///
/// ```text
/// -□Φ^γ = A^{αγ} [ (-□n) ∂_α m + n (-□ + 1) ∂_α m - 2 Q_0(n, ∂_α m) ]
/// ```
///
/// with `A^{αγ} = P^{αγ} - P^{γα}`, at every `stride`-th level that has two
/// neighbours on each side. Time derivatives are fourth-order differences
/// of the stored levels, spatial ones spectral. Returns `(t, max_γ max_x
/// |residual|)`.
pub fn normal_form_residual(
    pair: &IteratePair,
    p1: &Matrix3,
    phi_gamma: &[Trajectory; 3],
    stride: usize,
) -> Result<Vec<(f64, f64)>> {
    let l = pair.len();
    if l < 5 {
        return Err(Error::InsufficientTimeLevels { needed: 5, got: l });
    }
    for pg in phi_gamma {
        if !same_mesh(pg, &pair.m) {
            return Err(Error::TimeMeshMismatch);
        }
    }
    let a = antisym(p1);
    let h = pair.dt();
    let sch = Scheme::Spectral;
    let lap = grid::laplacian;
    let mut out = Vec::new();
    for k in (2..l - 2).step_by(stride.max(1)) {
        let t = pair.times()[k];
        let win = k - 2..=k + 2;
        let slab = |fs: Vec<Field2D>| TimeSlab::new(t, h, fs);
        // ∂_α m on the window
        let g_slabs = [
            slab(pair.m.wt[win.clone()].to_vec())?,
            slab(pair.m.w[win.clone()].iter().map(|f| spatial_derivative(f, Axis::X1, sch)).collect::<Result<_>>()?)?,
            slab(pair.m.w[win.clone()].iter().map(|f| spatial_derivative(f, Axis::X2, sch)).collect::<Result<_>>()?)?,
        ];
        let n = &pair.n.w[k];
        let nt = &pair.n.wt[k];
        let ntt = slab(pair.n.wt[win.clone()].to_vec())?.dt();
        let box_n = ntt.sub(&lap(n))?;
        let (n1, n2) = grid::gradient(n);
        let fluxes: Vec<[Field2D; 3]> = win.clone().map(|j| divergence_fluxes(pair, p1, j)).collect::<Result<_>>()?;
        let mut worst = 0.0f64;
        for ga in 0..3 {
            let cap_phi: Vec<Field2D> = (0..5)
                .map(|i| phi_gamma[ga].w[k - 2 + i].add(&fluxes[i][ga]))
                .collect::<Result<_>>()?;
            let cap = slab(cap_phi)?;
            let mut res = cap.dtt().sub(&lap(cap.mid()))?;
            for (al, gs) in g_slabs.iter().enumerate() {
                let c = a[al][ga];
                if c == 0.0 {
                    continue;
                }
                let gm = gs.mid();
                let (g1, g2) = grid::gradient(gm);
                let gt = gs.dt();
                let box_g = gs.dtt().sub(&lap(gm))?;
                let gg = *gm.grid();
                let term: Vec<f64> = (0..gg.len())
                    .map(|i| {
                        let q = -nt.values()[i] * gt.values()[i]
                            + n1.values()[i] * g1.values()[i]
                            + n2.values()[i] * g2.values()[i];
                        box_n.values()[i] * gm.values()[i]
                            + n.values()[i] * (box_g.values()[i] + gm.values()[i])
                            - 2.0 * q
                    })
                    .collect();
                res.axpy(-c, &Field2D::from_values(gg, term)?)?;
            }
            worst = worst.max(res.max_abs());
        }
        out.push((t, worst));
    }
    Ok(out)
}

/// `∂_γ F^γ - P^{αβ} Q_αβ(m, n)` on exact jets: the algebra behind the
/// decomposition.
pub fn divergence_source_residual_exact(m: &Jet, n: &Jet, p1: &Matrix3) -> f64 {
    let a = antisym(p1);
    let mut div = 0.0;
    for ga in 0..3 {
        let mut f = Jet::constant(0.0);
        for al in 0..3 {
            f = f + *n * m.deriv(al) * a[al][ga];
        }
        div += f.d(ga);
    }
    let (jm, jn) = (Jet1::from_jet(m), Jet1::from_jet(n));
    div - crate::nullforms::coupled_source(p1, &jm, &jn)
}

/// The normal-form identity on exact jets, with `-□φ^γ = F^γ` substituted:
/// returns `max_γ |F^γ - □F^γ - RHS^γ|`. `m` and `n` need order 4.
pub fn normal_form_residual_exact(m: &Jet, n: &Jet, p1: &Matrix3) -> f64 {
    let a = antisym(p1);
    let neg_box = |w: &Jet| -box_op(w).value();
    let jn = Jet1::from_jet(n);
    let mut worst = 0.0f64;
    for ga in 0..3 {
        let mut f = Jet::constant(0.0);
        let mut rhs = 0.0;
        for al in 0..3 {
            let g = m.deriv(al);
            f = f + *n * g * a[al][ga];
            let q = q0(&jn, &Jet1::from_jet(&g));
            rhs += a[al][ga] * (neg_box(n) * g.value() + n.value() * (neg_box(&g) + g.value()) - 2.0 * q);
        }
        let lhs = f.value() + neg_box(&f);
        worst = worst.max((lhs - rhs).abs());
    }
    worst
}

/// Settings for a Picard run from the zero pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PicardConfig {
    pub grid: GridSpec,
    pub couplings: Couplings,
    pub epsilon: f64,
    pub profile: DataProfile,
    pub t_end: f64,
    pub dt: f64,
    pub delta: f64,
    pub max_iter: usize,
    /// stop once `diff ≤ tol · value`
    pub tol: f64,
    /// time-level subsampling inside the norm
    pub xnorm_stride: usize,
}

impl PicardConfig {
    pub fn validate(&self) -> Result<()> {
        let reject = |m: String| Err(Error::ConfigRejected(m));
        self.grid.build()?;
        let needed = self.profile.support_radius() + self.t_end + 2.0;
        if self.grid.half_width < needed {
            return reject(format!("no-wrap condition violated: half_width {} < {needed}", self.grid.half_width));
        }
        time_mesh(self.t_end, self.dt)?;
        if self.max_iter == 0 || self.xnorm_stride == 0 {
            return reject("max_iter and xnorm_stride must be >= 1".into());
        }
        if !(self.tol > 0.0) || !(self.delta > 0.0) || !self.epsilon.is_finite() {
            return reject("tol and delta must be positive, epsilon finite".into());
        }
        Ok(())
    }

    /// Whether `ε ≤ δ/100`, the regime in which contraction is claimed.
    pub fn in_contraction_regime(&self) -> bool {
        self.epsilon.abs() <= self.delta / 100.0
    }
}

/// One row of the iteration log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub x_norm_value: f64,
    pub diff_norm: f64,
    pub ratio: Option<f64>,
    pub wall_time_s: f64,
}

impl IterationRecord {
    pub const CSV_HEADER: [&'static str; 5] = ["iter", "x_norm_value", "diff_norm", "ratio", "wall_time_s"];

    pub fn csv_record(&self) -> [String; 5] {
        [
            self.iter.to_string(),
            format!("{}", self.x_norm_value),
            format!("{}", self.diff_norm),
            self.ratio.map_or(String::new(), |r| format!("{r}")),
            format!("{:.3}", self.wall_time_s),
        ]
    }
}

#[derive(Debug, Clone)]
pub struct PicardOutcome {
    pub records: Vec<IterationRecord>,
    pub converged: bool,
    pub last: IteratePair,
    /// `x_norm(T(X_1) - T(0)) / x_norm(X_1 - 0)`, where `X_1 = T(0)` is the
    /// free pair; present once two iterations ran
    pub contraction_vs_zero: Option<f64>,
    pub final_norm: Option<XNormSurrogate>,
}

/// Iterate `X_{k+1} = T(X_k)` from the zero pair.
pub fn picard_iterate(
    config: &PicardConfig,
    log: &mut dyn FnMut(&IterationRecord),
) -> Result<PicardOutcome> {
    config.validate()?;
    let grid = config.grid.build()?;
    let data = make_initial_data(config.profile, config.epsilon, grid)?;
    picard_iterate_with(config, &data, log)
}

pub fn picard_iterate_with(
    config: &PicardConfig,
    data: &InitialData,
    log: &mut dyn FnMut(&IterationRecord),
) -> Result<PicardOutcome> {
    let start = Instant::now();
    let p = config.couplings;
    let mut x = IteratePair::zero(*data.grid(), config.t_end, config.dt)?;
    let mut records = Vec::new();
    let mut prev_diff: Option<f64> = None;
    let mut converged = false;
    let mut final_norm = None;
    for iter in 1..=config.max_iter {
        let next = apply_t(&x, &p, data)?;
        let diff = x_norm(&next.sub(&x)?, config.delta, config.xnorm_stride)?.value;
        let value_norm = x_norm(&next, config.delta, config.xnorm_stride)?;
        let value = value_norm.value;
        let ratio = prev_diff.filter(|&d| d > 0.0).map(|d| diff / d);
        let rec = IterationRecord {
            iter,
            x_norm_value: value,
            diff_norm: diff,
            ratio,
            wall_time_s: start.elapsed().as_secs_f64(),
        };
        log(&rec);
        records.push(rec);
        prev_diff = Some(diff);
        x = next;
        final_norm = Some(value_norm);
        if diff <= config.tol * value || diff == 0.0 {
            converged = true;
            break;
        }
    }
    let contraction_vs_zero = records.get(1).and_then(|r| r.ratio);
    Ok(PicardOutcome { records, converged, last: x, contraction_vs_zero, final_norm })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taylor::Point;
    use proptest::prelude::*;

    fn setup(n: usize, hw: f64, eps: f64) -> (Grid2D, InitialData) {
        let g = Grid2D::centered(n, hw).unwrap();
        let d = make_initial_data(DataProfile::GaussianBump, eps, g).unwrap();
        (g, d)
    }

    #[test]
    fn t_of_zero() {
        let (g, d) = setup(32, 8.0, 0.01);
        let z = IteratePair::zero(g, 1.0, 0.25).unwrap();
        let t0 = apply_t(&z, &Couplings::generic(), &InitialData::zero(g)).unwrap();
        assert!(is_zero(&t0));
        let free = IteratePair::free(&d, 1.0, 0.25).unwrap();
        let t1 = apply_t(&z, &Couplings::generic(), &d).unwrap();
        let diff = t1.sub(&free).unwrap();
        assert!(diff.m.w.iter().chain(&diff.n.w).all(|f| f.max_abs() < 1e-12 * 0.01));
        assert_eq!(x_norm(&z, 0.1, 1).unwrap().value, 0.0);
        assert!(matches!(
            contraction_ratio(&z, &z, &Couplings::generic(), &d, 0.1, 1),
            Err(Error::UndefinedRatio)
        ));
    }

    #[test]
    fn t_is_quadratic_in_the_pair() {
        let (g, d) = setup(32, 8.0, 0.05);
        let pair = IteratePair::free(&d, 1.0, 0.25).unwrap();
        let zero = InitialData::zero(g);
        let p = Couplings::generic();
        let a = apply_t(&pair, &p, &zero).unwrap();
        let b = apply_t(&pair.scaled(3.0), &p, &zero).unwrap();
        let diff = b.sub(&a.scaled(9.0)).unwrap();
        let scale = a.m.w.last().unwrap().max_abs();
        assert!(diff.m.w.iter().all(|f| f.max_abs() < 1e-10 * 9.0 * scale));
    }

    #[test]
    fn gamma_pairs_match_vectorfields() {
        use crate::vectorfields::{apply_gamma, apply_gamma_dt, TimeJetField};
        let g = Grid2D::centered(32, 6.0).unwrap();
        let t = 1.3;
        let f = TimeJetField::from_fn(g, t, &|x: &[Jet; 3]| {
            let [t, a, b] = *x;
            (t - 0.4 * a).sin() * (-(a * a + b * b) * 0.3).exp()
        })
        .unwrap();
        let pairs = gamma_pairs(t, &f.w, &f.wt, &f.wtt);
        for (i, id) in VectorFieldId::ADMISSIBLE.iter().enumerate() {
            let a = apply_gamma(*id, &f, Scheme::Spectral).unwrap();
            let b = apply_gamma_dt(*id, &f, Scheme::Spectral).unwrap();
            assert!(a.sub(&pairs[i + 1].0).unwrap().max_abs() < 1e-10);
            assert!(b.sub(&pairs[i + 1].1).unwrap().max_abs() < 1e-10);
        }
    }

    #[test]
    fn x_norm_is_a_norm() {
        let (g, d) = setup(32, 8.0, 0.02);
        let a = IteratePair::free(&d, 1.0, 0.25).unwrap();
        let d2 = make_initial_data(DataProfile::Ring, 0.01, g).unwrap();
        let b = IteratePair::free(&d2, 1.0, 0.25).unwrap();
        let na = x_norm(&a, 0.1, 1).unwrap();
        let nb = x_norm(&b, 0.1, 1).unwrap().value;
        let nab = x_norm(&a.add(&b).unwrap(), 0.1, 1).unwrap().value;
        assert!(nab <= na.value + nb + 1e-12 * (na.value + nb));
        let nc = x_norm(&a.scaled(-2.5), 0.1, 1).unwrap();
        assert!((nc.value - 2.5 * na.value).abs() < 1e-12 * nc.value);
        for (p, q) in na.parts.iter().zip(&nc.parts) {
            assert!((q.1 - 2.5 * p.1).abs() <= 1e-12 * q.1.max(1e-300));
        }
        assert_eq!(na.parts.len(), XNORM_PARTS.len());
        assert!(na.parts.iter().all(|p| p.1 >= 0.0));
    }

    #[test]
    fn contraction_ratio_is_scale_invariant() {
        let (_, d) = setup(32, 10.0, 0.01);
        let p = Couplings::generic();
        let a = IteratePair::free(&d, 1.0, 0.25).unwrap();
        let b = a.scaled(0.5);
        let zero_data = InitialData::zero(*d.grid());
        let r1 = contraction_ratio(&a, &b, &p, &zero_data, 0.1, 1).unwrap();
        let r2 = contraction_ratio(&a.scaled(2.0), &b.scaled(2.0), &p.scaled(0.5), &zero_data, 0.1, 1).unwrap();
        assert!((r1 - r2).abs() < 1e-9 * r1, "{r1} vs {r2}");
    }

    #[test]
    fn picard_with_zero_data_stops_at_once() {
        let cfg = PicardConfig {
            grid: GridSpec { n: 32, half_width: 12.0 },
            couplings: Couplings::generic(),
            epsilon: 0.0,
            profile: DataProfile::GaussianBump,
            t_end: 1.0,
            dt: 0.25,
            delta: 0.5,
            max_iter: 5,
            tol: 1e-10,
            xnorm_stride: 1,
        };
        let out = picard_iterate(&cfg, &mut |_| {}).unwrap();
        assert!(out.converged);
        assert_eq!(out.records.len(), 1);
    }

    #[test]
    fn picard_contracts_for_small_data() {
        let cfg = PicardConfig {
            grid: GridSpec { n: 64, half_width: 14.0 },
            couplings: Couplings::generic(),
            epsilon: 0.005,
            profile: DataProfile::GaussianBump,
            t_end: 4.0,
            dt: 0.25,
            delta: 0.5,
            max_iter: 8,
            tol: 1e-10,
            xnorm_stride: 2,
        };
        let out = picard_iterate(&cfg, &mut |_| {}).unwrap();
        assert!(out.converged);
        for r in out.records.iter().filter_map(|r| r.ratio) {
            assert!(r < 0.6, "ratio {r}");
        }
        assert!(out.contraction_vs_zero.unwrap() < 0.5);
    }

    fn mn(p: Point) -> (Jet, Jet) {
        let [t, a, b] = Jet::coords(p);
        let m = (t - 0.3 * a).sin() * (b * 0.7).cos() + t * a * b;
        let n = (0.5 * t + b).cos() * (-(a * a) * 0.2).exp();
        (m, n)
    }

    #[test]
    fn exact_identities_of_the_decomposition() {
        let p1 = Couplings::generic().p1;
        for p in [[0.3, 1.0, -0.5], [2.0, -1.2, 0.4], [5.0, 0.1, 3.0]] {
            let (m, n) = mn(p);
            assert!(divergence_source_residual_exact(&m, &n, &p1).abs() < 1e-12);
            assert!(normal_form_residual_exact(&m, &n, &p1) < 1e-11);
        }
        // the identity needs the factor 2 on Q_0
        let [t, a, b] = Jet::coords([1.0, 0.5, 0.5]);
        let m = t * a + b * b;
        let n = t * t - a;
        assert!(normal_form_residual_exact(&m, &n, &p1) < 1e-12);
    }

    #[test]
    fn decomposition_and_normal_form_converge() {
        let (g, _) = setup(64, 12.0, 0.0);
        let d = make_initial_data(DataProfile::GaussianBump, 0.1, g).unwrap();
        let p1 = Couplings::generic().p1;
        let measure = |dt: f64| {
            let pair = IteratePair::free(&d, 2.0, dt).unwrap();
            let dec = divergence_decomposition(&pair, &p1, &d).unwrap();
            let nf = normal_form_residual(&pair, &p1, &dec.phi_gamma, 1).unwrap();
            // compare at the common time t = 1
            let at1 = nf.iter().find(|(t, _)| (t - 1.0).abs() < 1e-9).unwrap().1;
            (dec.reconstruction_residual, at1)
        };
        let (r1, n1) = measure(0.1);
        let (r2, n2) = measure(0.05);
        assert!((r1 / r2).log2() >= 1.5, "reconstruction {r1} -> {r2}");
        assert!((n1 / n2).log2() >= 1.5, "normal form {n1} -> {n2}");
        // P_1 = 0: φ^γ vanish and φ = φ⁵
        let pair = IteratePair::free(&d, 1.0, 0.25).unwrap();
        let dec = divergence_decomposition(&pair, &[[0.0; 3]; 3], &d).unwrap();
        assert!(dec.reconstruction_residual < 1e-14);
        assert!(dec.phi_gamma.iter().all(|t| t.w.iter().all(|f| f.max_abs() == 0.0)));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn decomposition_algebra_random_points(t in 0.0..5.0f64, a in -3.0..3.0f64, b in -3.0..3.0f64) {
            let p1 = Couplings::generic().p1;
            let (m, n) = mn([t, a, b]);
            prop_assert!(divergence_source_residual_exact(&m, &n, &p1).abs() < 1e-11);
            prop_assert!(normal_form_residual_exact(&m, &n, &p1) < 1e-10);
        }
    }
}
