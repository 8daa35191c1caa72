//! Energy functionals: the standard energy E_m, the conformal energy, the
//! ghost-weighted energy with weight e^q, its spacetime integrals, and the
//! pointwise multiplier identity behind the ghost-weight estimate.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{self, Field2D, Grid2D, RegionMask, Scheme};
use crate::quad;
use crate::taylor::{Jet, Point};
use crate::vectorfields::{apply_gamma, TimeJetField, VectorFieldId};

/// `⟨s⟩^{-3/2} = (1 + s²)^{-3/4}`.
#[inline]
pub fn ghost_density(s: f64) -> f64 {
    (1.0 + s * s).powf(-0.75)
}

/// `⟨s⟩ = sqrt(1 + s²)`.
#[inline]
pub fn japanese(s: f64) -> f64 {
    (1.0 + s * s).sqrt()
}

/// Tabulated primitive `q(σ) = ∫_{-∞}^σ (1 + s²)^{-3/4} ds`.
///
/// With `s = sinh y` the integrand becomes `cosh(y)^{-1/2}`, which is smooth
/// and decays like `e^{-|y|/2}`; the table is uniform in `y` and interpolated
/// with cubic Hermite polynomials using the exact derivative. Outside
/// `|σ| <= SIGMA_MAX` an asymptotic series is used.
pub struct GhostWeight {
    y0: f64,
    h: f64,
    values: Vec<f64>,
    q_total: f64,
}

const SIGMA_MAX: f64 = 1e4;
const TABLE_STEP: f64 = 0.01;

fn sech_half(y: f64) -> f64 {
    1.0 / y.cosh().sqrt()
}

/// `∫_a^∞ (1+s²)^{-3/4} ds` for large `a`, from the binomial expansion of
/// `s^{-3/2} (1 + s^{-2})^{-3/4}`.
fn upper_tail(a: f64) -> f64 {
    let a2 = 1.0 / (a * a);
    a.powf(-0.5) * (2.0 - 0.3 * a2 + (7.0 / 48.0) * a2 * a2 - (231.0 / 2496.0) * a2 * a2 * a2)
}

impl GhostWeight {
    fn build() -> Self {
        // Q_total: ∫ cosh^{-1/2} over [-60, 60] plus tails 2 ∫_60^∞ ≈ 4√2 e^{-30}
        let y_cut = 60.0;
        let core = quad::adaptive(&sech_half, -y_cut, 0.0, 1e-13)
            + quad::adaptive(&sech_half, 0.0, y_cut, 1e-13);
        let q_total = core + 2.0 * 2.0 * std::f64::consts::SQRT_2 * (-y_cut / 2.0).exp();

        let y_max = SIGMA_MAX.asinh();
        let n = (2.0 * y_max / TABLE_STEP).ceil() as usize;
        let h = 2.0 * y_max / n as f64;
        let y0 = -y_max;
        let rule = quad::rule(12);
        let mut values = Vec::with_capacity(n + 1);
        let mut acc = upper_tail(SIGMA_MAX);
        values.push(acc);
        for k in 0..n {
            let a = y0 + k as f64 * h;
            acc += rule.integrate(a, a + h, sech_half);
            values.push(acc);
        }
        Self { y0, h, values, q_total }
    }

    pub fn global() -> &'static GhostWeight {
        static W: OnceLock<GhostWeight> = OnceLock::new();
        W.get_or_init(Self::build)
    }

    /// `q(+∞)`.
    pub fn q_total(&self) -> f64 {
        self.q_total
    }

    pub fn q(&self, sigma: f64) -> f64 {
        if sigma.is_nan() {
            return f64::NAN;
        }
        if sigma < -SIGMA_MAX {
            return upper_tail(-sigma);
        }
        if sigma > SIGMA_MAX {
            return self.q_total - upper_tail(sigma);
        }
        let y = sigma.asinh();
        let u = (y - self.y0) / self.h;
        let k = (u.floor() as usize).min(self.values.len() - 2);
        let s = u - k as f64;
        let ya = self.y0 + k as f64 * self.h;
        let (p0, p1) = (self.values[k], self.values[k + 1]);
        let (m0, m1) = (sech_half(ya) * self.h, sech_half(ya + self.h) * self.h);
        let s2 = s * s;
        let s3 = s2 * s;
        (2.0 * s3 - 3.0 * s2 + 1.0) * p0
            + (s3 - 2.0 * s2 + s) * m0
            + (-2.0 * s3 + 3.0 * s2) * p1
            + (s3 - s2) * m1
    }

    /// `q'(σ)`.
    pub fn dq(&self, sigma: f64) -> f64 {
        ghost_density(sigma)
    }
}

/// `q(σ)` from the shared table.
pub fn q_weight(sigma: f64) -> f64 {
    GhostWeight::global().q(sigma)
}

/// `∫_mask (w_t² + |∇w|² + m² w²) dx`.
pub fn energy(m: f64, w: &Field2D, wt: &Field2D, mask: &RegionMask) -> Result<f64> {
    w.check_same_grid(wt)?;
    let (d1, d2) = grid::gradient(w);
    let density = Field2D::from_raw(
        *w.grid(),
        (0..w.grid().len())
            .map(|n| {
                let (a, b, c, v) = (wt.values()[n], d1.values()[n], d2.values()[n], w.values()[n]);
                a * a + b * b + c * c + m * m * v * v
            })
            .collect(),
    );
    grid::integral(&density, mask)
}

/// The three pieces of the conformal energy of a wave-type slice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConformalEnergy {
    pub total: f64,
    /// ‖S w + w‖²
    pub scaling: f64,
    /// ‖Ω_12 w‖²
    pub rotation: f64,
    /// Σ_a ‖L_a w‖²
    pub boosts: f64,
}

pub fn conformal_energy(f: &TimeJetField, scheme: Scheme) -> Result<ConformalEnergy> {
    let mask = RegionMask::all(*f.grid());
    let sq = |h: &Field2D| -> Result<f64> { Ok(grid::l2_norm(h, &mask)?.powi(2)) };
    let s = apply_gamma(VectorFieldId::S, f, scheme)?.add(&f.w)?;
    let scaling = sq(&s)?;
    let rotation = sq(&apply_gamma(VectorFieldId::Omega12, f, scheme)?)?;
    let boosts = sq(&apply_gamma(VectorFieldId::L1, f, scheme)?)?
        + sq(&apply_gamma(VectorFieldId::L2, f, scheme)?)?;
    Ok(ConformalEnergy { total: scaling + rotation + boosts, scaling, rotation, boosts })
}

/// Spatial integrands of the ghost-weight estimate at one time.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GhostIntegrands {
    /// ∫ e^q (w_t² + |∇w|² + m² w²)
    pub weighted_energy: f64,
    /// ∫ e^q q' Σ_a (G_a w)²
    pub good_derivatives: f64,
    /// ∫ e^q q' w²
    pub mass_term: f64,
    /// ∫ e^q f w_t
    pub source_work: f64,
    /// ∫ e^q |f w_t|
    pub source_work_abs: f64,
    /// Area of the masked disc `r < r_min`.
    pub masked_area: f64,
    /// What the masked nodes would add to `good_derivatives` with the
    /// direction-averaged value `w_t² + |∇w|²` of Σ_a (G_a w)².
    pub masked_good_derivatives: f64,
}

/// Nodes with `r < r_min` are left out of the good-derivative integral,
/// where `x/r` is undefined; their area and an estimate of their share are
/// reported separately.
pub fn ghost_integrands(
    m: f64,
    t: f64,
    w: &Field2D,
    wt: &Field2D,
    f: Option<&Field2D>,
    r_min: f64,
) -> Result<GhostIntegrands> {
    w.check_same_grid(wt)?;
    if let Some(f) = f {
        w.check_same_grid(f)?;
    }
    let g = *w.grid();
    let gw = GhostWeight::global();
    let (d1, d2) = grid::gradient(w);
    let mut out = GhostIntegrands::default();
    for j in 0..g.ny {
        let mut row = GhostIntegrands::default();
        for i in 0..g.nx {
            let n = g.idx(i, j);
            let (x, y) = g.point(n);
            let r = x.hypot(y);
            let sigma = r - t;
            let eq = gw.q(sigma).exp();
            let dq = gw.dq(sigma);
            let (a, b, c, v) = (wt.values()[n], d1.values()[n], d2.values()[n], w.values()[n]);
            row.weighted_energy += eq * (a * a + b * b + c * c + m * m * v * v);
            row.mass_term += eq * dq * v * v;
            if r >= r_min {
                let g1 = x / r * a + b;
                let g2 = y / r * a + c;
                row.good_derivatives += eq * dq * (g1 * g1 + g2 * g2);
            } else {
                row.masked_area += 1.0;
                row.masked_good_derivatives += eq * dq * (a * a + b * b + c * c);
            }
            if let Some(f) = f {
                let fw = f.values()[n] * a;
                row.source_work += eq * fw;
                row.source_work_abs += eq * fw.abs();
            }
        }
        out.weighted_energy += row.weighted_energy;
        out.good_derivatives += row.good_derivatives;
        out.mass_term += row.mass_term;
        out.source_work += row.source_work;
        out.source_work_abs += row.source_work_abs;
        out.masked_area += row.masked_area;
        out.masked_good_derivatives += row.masked_good_derivatives;
    }
    let da = g.cell_area();
    out.weighted_energy *= da;
    out.good_derivatives *= da;
    out.mass_term *= da;
    out.source_work *= da;
    out.source_work_abs *= da;
    out.masked_area *= da;
    out.masked_good_derivatives *= da;
    Ok(out)
}

/// Running ghost-weight bookkeeping for one field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GhostReport {
    pub mass: f64,
    pub delta: f64,
    pub r_min: f64,
    pub t: f64,
    /// Integrands at `t`, reused as the left end of the next slab.
    pub current: GhostIntegrands,
    pub initial_weighted_energy: f64,
    /// ∫_0^t ∫ e^q q' Σ (G_a w)²
    pub i_good: f64,
    /// ∫_0^t ∫ e^q q' w²
    pub i_mass: f64,
    /// time integral of `masked_good_derivatives`
    pub i_good_masked: f64,
    /// damped by ⟨t'⟩^{-δ}
    pub i_good_damped: f64,
    pub i_mass_damped: f64,
    /// ∫_0^t ∫ e^q f w_t
    pub source_work: f64,
    /// ∫_0^t ∫ e^q |f w_t|
    pub source_work_abs: f64,
    pub source_work_abs_damped: f64,
}

impl GhostReport {
    pub fn start(
        mass: f64,
        delta: f64,
        t: f64,
        w: &Field2D,
        wt: &Field2D,
        f: Option<&Field2D>,
    ) -> Result<Self> {
        let r_min = 0.5 * w.grid().dx.min(w.grid().dy);
        let current = ghost_integrands(mass, t, w, wt, f, r_min)?;
        Ok(Self {
            mass,
            delta,
            r_min,
            t,
            current,
            initial_weighted_energy: current.weighted_energy,
            i_good: 0.0,
            i_mass: 0.0,
            i_good_masked: 0.0,
            i_good_damped: 0.0,
            i_mass_damped: 0.0,
            source_work: 0.0,
            source_work_abs: 0.0,
            source_work_abs_damped: 0.0,
        })
    }

    /// `∫ e^q (w_t² + |∇w|² + m²w²)` at the report time.
    pub fn weighted_energy(&self) -> f64 {
        self.current.weighted_energy
    }

    /// Left side of the integrated identity,
    /// `E^q(t) + I_G + m² I_m`, with the masked-disc estimate included.
    pub fn balance_lhs(&self) -> f64 {
        self.current.weighted_energy
            + self.i_good
            + self.i_good_masked
            + self.mass * self.mass * self.i_mass
    }

    /// Right side with the source term in absolute value:
    /// `E^q(0) + 2 ∫∫ e^q |f w_t|`.
    pub fn balance_rhs(&self) -> f64 {
        self.initial_weighted_energy + 2.0 * self.source_work_abs
    }
}

/// The end state of one time slab.
#[derive(Debug, Clone, Copy)]
pub struct SlabEnd<'a> {
    pub t_start: f64,
    pub t_end: f64,
    pub w: &'a Field2D,
    pub wt: &'a Field2D,
    pub f: Option<&'a Field2D>,
}

/// Advance the ghost bookkeeping across one slab by the trapezoid rule.
pub fn ghost_energy_step(report: &GhostReport, slab: SlabEnd<'_>) -> Result<GhostReport> {
    let tol = 1e-9 * (1.0 + report.t.abs());
    if (slab.t_start - report.t).abs() > tol || slab.t_end <= slab.t_start {
        return Err(Error::NotAdjacent { report_t: report.t, slab_start: slab.t_start });
    }
    let next = ghost_integrands(report.mass, slab.t_end, slab.w, slab.wt, slab.f, report.r_min)?;
    let prev = report.current;
    let h = slab.t_end - slab.t_start;
    let damp = |t: f64| japanese(t).powf(-report.delta);
    let (d0, d1) = (damp(slab.t_start), damp(slab.t_end));
    let trap = |a: f64, b: f64| 0.5 * h * (a + b);
    let trap_d = |a: f64, b: f64| 0.5 * h * (d0 * a + d1 * b);
    let mut out = report.clone();
    out.t = slab.t_end;
    out.current = next;
    out.i_good += trap(prev.good_derivatives, next.good_derivatives);
    out.i_mass += trap(prev.mass_term, next.mass_term);
    out.i_good_masked += trap(prev.masked_good_derivatives, next.masked_good_derivatives);
    out.i_good_damped += trap_d(prev.good_derivatives, next.good_derivatives);
    out.i_mass_damped += trap_d(prev.mass_term, next.mass_term);
    out.source_work += trap(prev.source_work, next.source_work);
    out.source_work_abs += trap(prev.source_work_abs, next.source_work_abs);
    out.source_work_abs_damped += trap_d(prev.source_work_abs, next.source_work_abs);
    Ok(out)
}

/// Pointwise residual of the multiplier identity, with `f = (-□ + m²) w`:
///
/// ½∂_t(e^q(w_t² + |∇w|² + m²w²)) - ∂_a(e^q w_t ∂_a w)
///   + ½ e^q q' Σ_a (G_a w)² + (m²/2) e^q q' w² - e^q f w_t,
///
/// where `q = q(r - t)` and `q' = ⟨t - r⟩^{-3/2}`. `w` is an exact jet at `p`.
pub fn ghost_identity_residual_exact(w: &Jet, p: Point, m: f64, r_min: f64) -> Result<f64> {
    let [_, x1, x2] = p;
    let r = x1.hypot(x2);
    if r < r_min {
        return Err(Error::NearOrigin { r, r_min });
    }
    // e^q as a jet: q(σ) composed with σ = r - t
    let [tj, xj, yj] = Jet::coords(p);
    let rj = (xj * xj + yj * yj).sqrt();
    let sigma = rj - tj;
    let s0 = sigma.value();
    let gw = GhostWeight::global();
    // q' = u^{-3/4}, q'' = -(3/2) s u^{-7/4}, q''' = (3/4)(5s² - 2) u^{-11/4},
    // q'''' = (3/8) s (42 - 35 s²) u^{-15/4}, with u = 1 + s²
    let u = 1.0 + s0 * s0;
    let qd = [
        gw.q(s0),
        u.powf(-0.75),
        -1.5 * s0 * u.powf(-1.75),
        0.75 * (5.0 * s0 * s0 - 2.0) * u.powf(-2.75),
        0.375 * s0 * (42.0 - 35.0 * s0 * s0) * u.powf(-3.75),
    ];
    let q = sigma.compose(qd);
    let eq = q.exp();
    let wt = w.deriv(0);
    let w1 = w.deriv(1);
    let w2 = w.deriv(2);
    let dens = eq * (wt * wt + w1 * w1 + w2 * w2 + m * m * (*w * *w));
    let flux1 = eq * wt * w1;
    let flux2 = eq * wt * w2;
    let lhs = 0.5 * dens.d(0) - flux1.d(1) - flux2.d(2);
    let eqv = eq.value();
    let dq = ghost_density(s0);
    let (a, b, c) = (wt.value(), w1.value(), w2.value());
    let g1 = x1 / r * a + b;
    let g2 = x2 / r * a + c;
    let good = 0.5 * eqv * dq * (g1 * g1 + g2 * g2) + 0.5 * m * m * eqv * dq * w.value().powi(2);
    let f = w.partial(2, 0, 0) - w.partial(0, 2, 0) - w.partial(0, 0, 2) + m * m * w.value();
    Ok(lhs + good - eqv * f * a)
}

/// Grid version from three consecutive time levels `(w, w_t)` at
/// `t - h, t, t + h`; the time derivative of the density uses a centered
/// difference and `w_tt` a centered difference of `w_t`. The residual is
/// evaluated at the middle level and set to zero for `r < r_cut`: the weight
/// e^q has a conical kink at the origin, so difference stencils that reach it
/// are not consistent there.
pub fn ghost_identity_residual_grid(
    levels: [(&Field2D, &Field2D); 3],
    t: f64,
    h: f64,
    m: f64,
    scheme: Scheme,
    r_cut: f64,
) -> Result<Field2D> {
    let g: Grid2D = *levels[1].0.grid();
    for (w, wt) in levels {
        levels[1].0.check_same_grid(w)?;
        levels[1].0.check_same_grid(wt)?;
    }
    let gw = GhostWeight::global();
    let r_min = r_cut.max(0.5 * g.dx.min(g.dy));
    let density = |tt: f64, w: &Field2D, wt: &Field2D| -> Result<Vec<f64>> {
        let d1 = grid::spatial_derivative(w, grid::Axis::X1, scheme)?;
        let d2 = grid::spatial_derivative(w, grid::Axis::X2, scheme)?;
        Ok((0..g.len())
            .map(|n| {
                let (x, y) = g.point(n);
                let eq = gw.q(x.hypot(y) - tt).exp();
                let (a, b, c, v) = (wt.values()[n], d1.values()[n], d2.values()[n], w.values()[n]);
                eq * (a * a + b * b + c * c + m * m * v * v)
            })
            .collect())
    };
    let e_minus = density(t - h, levels[0].0, levels[0].1)?;
    let e_plus = density(t + h, levels[2].0, levels[2].1)?;
    let (w, wt) = levels[1];
    let d1 = grid::spatial_derivative(w, grid::Axis::X1, scheme)?;
    let d2 = grid::spatial_derivative(w, grid::Axis::X2, scheme)?;
    let eqs: Vec<f64> = (0..g.len())
        .map(|n| {
            let (x, y) = g.point(n);
            gw.q(x.hypot(y) - t).exp()
        })
        .collect();
    let flux1 = Field2D::from_raw(g, (0..g.len()).map(|n| eqs[n] * wt.values()[n] * d1.values()[n]).collect());
    let flux2 = Field2D::from_raw(g, (0..g.len()).map(|n| eqs[n] * wt.values()[n] * d2.values()[n]).collect());
    let div = grid::spatial_derivative(&flux1, grid::Axis::X1, scheme)?
        .add(&grid::spatial_derivative(&flux2, grid::Axis::X2, scheme)?)?;
    let lap = grid::spatial_derivative(&d1, grid::Axis::X1, scheme)?
        .add(&grid::spatial_derivative(&d2, grid::Axis::X2, scheme)?)?;
    let mut out = vec![0.0; g.len()];
    for (n, o) in out.iter_mut().enumerate() {
        let (x, y) = g.point(n);
        let r = x.hypot(y);
        if r < r_min {
            continue;
        }
        let a = wt.values()[n];
        let wtt = (levels[2].1.values()[n] - levels[0].1.values()[n]) / (2.0 * h);
        let dens_t = (e_plus[n] - e_minus[n]) / (2.0 * h);
        let dq = ghost_density(r - t);
        let g1 = x / r * a + d1.values()[n];
        let g2 = y / r * a + d2.values()[n];
        let v = w.values()[n];
        let f = wtt - lap.values()[n] + m * m * v;
        *o = 0.5 * dens_t - div.values()[n] + 0.5 * eqs[n] * dq * (g1 * g1 + g2 * g2)
            + 0.5 * m * m * eqs[n] * dq * v * v
            - eqs[n] * f * a;
    }
    Ok(Field2D::from_raw(g, out))
}

/// One row of the energy diagnostics CSV.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub t: f64,
    pub e_wave: f64,
    pub e_kg: f64,
    pub econ_s: f64,
    pub econ_omega: f64,
    pub econ_l: f64,
    pub egst_inst: f64,
    pub ighost_g: f64,
    pub ighost_m: f64,
    pub ighost_g_damped: f64,
    pub ighost_m_damped: f64,
}

impl EnergyReport {
    pub const CSV_HEADER: [&'static str; 11] = [
        "t",
        "E_wave",
        "E_kg",
        "Econ_S",
        "Econ_Omega",
        "Econ_L",
        "Egst_inst",
        "Ighost_G",
        "Ighost_m",
        "Ighost_G_damped",
        "Ighost_m_damped",
    ];

    pub fn csv_row(&self) -> [f64; 11] {
        [
            self.t,
            self.e_wave,
            self.e_kg,
            self.econ_s,
            self.econ_omega,
            self.econ_l,
            self.egst_inst,
            self.ighost_g,
            self.ighost_m,
            self.ighost_g_damped,
            self.ighost_m_damped,
        ]
    }

    /// Combine per-field diagnostics: the wave component `u` (mass 0) and the
    /// Klein-Gordon component `v` (mass 1).
    pub fn assemble(
        t: f64,
        e_wave: f64,
        e_kg: f64,
        con: ConformalEnergy,
        ghost_u: &GhostReport,
        ghost_v: &GhostReport,
    ) -> Self {
        Self {
            t,
            e_wave,
            e_kg,
            econ_s: con.scaling,
            econ_omega: con.rotation,
            econ_l: con.boosts,
            egst_inst: ghost_u.weighted_energy() + ghost_v.weighted_energy(),
            ighost_g: ghost_u.i_good + ghost_v.i_good,
            ighost_m: ghost_v.i_mass,
            ighost_g_damped: ghost_u.i_good_damped + ghost_v.i_good_damped,
            ighost_m_damped: ghost_v.i_mass_damped,
        }
    }
}
