//! Exact-in-time linear propagators for the wave (m = 0) and Klein-Gordon
//! (m = 1) equations, Duhamel source integration, and the disc-integral
//! representation of the 2D wave solution used as an independent oracle.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field2D, Grid2D};
use crate::quad;
use crate::spectral::{self, SpectralOps};

const SERIES_CUTOFF: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagatorKind {
    pub mass: f64,
}

impl PropagatorKind {
    pub const WAVE: PropagatorKind = PropagatorKind { mass: 0.0 };
    pub const KLEIN_GORDON: PropagatorKind = PropagatorKind { mass: 1.0 };

    pub fn new(mass: f64) -> Self {
        assert!(mass >= 0.0 && mass.is_finite(), "mass must be finite and >= 0");
        Self { mass }
    }

    #[inline]
    pub fn omega(&self, k2: f64) -> f64 {
        (self.mass * self.mass + k2).sqrt()
    }
}

/// `sin(t ω) / ω`, with the ω → 0 limit `t`.
#[inline]
pub fn sinc_t(omega: f64, t: f64) -> f64 {
    let x = omega * t;
    if x.abs() < SERIES_CUTOFF {
        let x2 = x * x;
        t * (1.0 - x2 / 6.0 + x2 * x2 / 120.0)
    } else {
        x.sin() / omega
    }
}

/// `(1 - cos(t ω)) / ω²`, with the ω → 0 limit `t² / 2`.
#[inline]
pub fn versine_t(omega: f64, t: f64) -> f64 {
    let x = omega * t;
    if x.abs() < SERIES_CUTOFF {
        let x2 = x * x;
        t * t * (0.5 - x2 / 24.0 + x2 * x2 / 720.0)
    } else {
        // 1 - cos x = 2 sin²(x/2) avoids cancellation
        let s = (0.5 * x).sin();
        2.0 * s * s / (omega * omega)
    }
}

/// Per-mode coefficients of one free flight of length `dt` plus the
/// midpoint source weights.
#[derive(Debug, Clone, Copy)]
struct Flight {
    cos: f64,
    sinc: f64,
    omega_sin: f64,
    versine: f64,
}

fn flight_table(ops: &SpectralOps, kind: PropagatorKind, dt: f64) -> Vec<Flight> {
    (0..ops.len())
        .into_par_iter()
        .map(|s| {
            let w = kind.omega(ops.k_squared(s));
            let x = w * dt;
            Flight {
                cos: x.cos(),
                sinc: sinc_t(w, dt),
                omega_sin: w * x.sin(),
                versine: versine_t(w, dt),
            }
        })
        .collect()
}

/// Free evolution of `(w0, w1)` to time `t`: returns `(w(t), ∂_t w(t))`.
pub fn propagate_free(
    kind: PropagatorKind,
    w0: &Field2D,
    w1: &Field2D,
    t: f64,
) -> Result<(Field2D, Field2D)> {
    w0.check_same_grid(w1)?;
    if !t.is_finite() {
        return Err(Error::InvalidField(format!("time {t} is not finite")));
    }
    let grid = *w0.grid();
    let ops = spectral::ops(&grid);
    let (a, b) = ops.split_pair(&ops.forward_pair(w0.values(), w1.values()));
    let packed: Vec<Complex64> = (0..ops.len())
        .into_par_iter()
        .map(|s| {
            let w = kind.omega(ops.k_squared(s));
            let c = (w * t).cos();
            let val = a[s] * c + b[s] * sinc_t(w, t);
            let vel = a[s] * (-w * (w * t).sin()) + b[s] * c;
            val + vel * Complex64::i()
        })
        .collect();
    let (w, wt) = ops.inverse_pair(packed);
    Ok((Field2D::from_raw(grid, w), Field2D::from_raw(grid, wt)))
}

/// Linear evolution with a source, kept in frequency space between steps.
///
/// Each step is an exact free flight followed by the exact response to a
/// source frozen at its midpoint value, giving second-order global accuracy
/// with no stability restriction on `dt`.
pub struct SourcedPropagator {
    kind: PropagatorKind,
    grid: Grid2D,
    ops: std::sync::Arc<SpectralOps>,
    w_hat: Vec<Complex64>,
    wt_hat: Vec<Complex64>,
    t: f64,
    table: Option<(u64, Vec<Flight>)>,
}

impl SourcedPropagator {
    pub fn new(kind: PropagatorKind, w0: &Field2D, w1: &Field2D) -> Result<Self> {
        w0.check_same_grid(w1)?;
        let grid = *w0.grid();
        let ops = spectral::ops(&grid);
        let (w_hat, wt_hat) = ops.split_pair(&ops.forward_pair(w0.values(), w1.values()));
        Ok(Self { kind, grid, ops, w_hat, wt_hat, t: 0.0, table: None })
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    /// Advance by `dt` with the source value `f_mid` at `t + dt/2`
    /// (`None` for a free step).
    pub fn step(&mut self, dt: f64, f_mid: Option<&Field2D>) -> Result<()> {
        let f_hat = match f_mid {
            Some(f) => {
                if f.grid() != &self.grid {
                    return Err(Error::GridMismatch);
                }
                if !f.is_finite() {
                    return Err(Error::InvalidSource { t: self.t + 0.5 * dt });
                }
                Some(self.ops.forward_real(f.values()))
            }
            None => None,
        };
        let key = dt.to_bits();
        if self.table.as_ref().map(|(k, _)| *k) != Some(key) {
            self.table = Some((key, flight_table(&self.ops, self.kind, dt)));
        }
        let table = &self.table.as_ref().expect("table just built").1;
        let f_hat = f_hat.as_deref();
        self.w_hat
            .par_iter_mut()
            .zip(self.wt_hat.par_iter_mut())
            .enumerate()
            .for_each(|(s, (w, wt))| {
                let fl = table[s];
                let nw = *w * fl.cos + *wt * fl.sinc;
                let mut nwt = *w * (-fl.omega_sin) + *wt * fl.cos;
                let mut nw = nw;
                if let Some(f) = f_hat {
                    nw += f[s] * fl.versine;
                    nwt += f[s] * fl.sinc;
                }
                *w = nw;
                *wt = nwt;
            });
        self.t += dt;
        Ok(())
    }

    /// Current `(w, ∂_t w)` in physical space.
    pub fn state(&self) -> (Field2D, Field2D) {
        let packed: Vec<Complex64> = self
            .w_hat
            .par_iter()
            .zip(self.wt_hat.par_iter())
            .map(|(w, wt)| w + wt * Complex64::i())
            .collect();
        let (w, wt) = self.ops.inverse_pair(packed);
        (Field2D::from_raw(self.grid, w), Field2D::from_raw(self.grid, wt))
    }
}

/// Time levels of a linear solve: `times[k]`, `w[k]`, `wt[k]`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub w: Vec<Field2D>,
    pub wt: Vec<Field2D>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Uniform time mesh on [0, t_end] whose step does not exceed `dt`.
pub fn time_mesh(t_end: f64, dt: f64) -> Result<(usize, f64)> {
    if !(dt > 0.0 && dt.is_finite()) || !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(Error::ConfigRejected(format!(
            "need dt > 0 and t_end >= 0, got dt = {dt}, t_end = {t_end}"
        )));
    }
    let n = ((t_end / dt) - 1e-9).ceil().max(0.0) as usize;
    if n == 0 {
        return Ok((0, 0.0));
    }
    Ok((n, t_end / n as f64))
}

/// Duhamel integration of `(-□ + m²) w = f` on [0, t_end].
///
/// `source(t)` is queried at step midpoints and may return `None` for a
/// vanishing source. All levels, including t = 0, are returned.
pub fn propagate_sourced(
    kind: PropagatorKind,
    w0: &Field2D,
    w1: &Field2D,
    mut source: impl FnMut(f64) -> Result<Option<Field2D>>,
    t_end: f64,
    dt: f64,
) -> Result<Trajectory> {
    let (n, h) = time_mesh(t_end, dt)?;
    let mut prop = SourcedPropagator::new(kind, w0, w1)?;
    let mut traj = Trajectory {
        times: vec![0.0],
        w: vec![w0.clone()],
        wt: vec![w1.clone()],
    };
    for k in 0..n {
        let t_mid = (k as f64 + 0.5) * h;
        let f = source(t_mid)?;
        prop.step(h, f.as_ref())?;
        let (w, wt) = prop.state();
        traj.times.push((k + 1) as f64 * h);
        traj.w.push(w);
        traj.wt.push(wt);
    }
    Ok(traj)
}

/// Solution of the free wave equation with zero initial position and initial
/// velocity `w1`, at `(t, x)`, from the disc integral
/// `(1/2π) ∫_{|y| ≤ t} w1(x + y) / sqrt(t² - |y|²) dy`.
///
/// With `|y| = t sin φ` the integrand becomes `w1 · t sin φ dφ dθ`, smooth on
/// [0, π/2] × [0, 2π); both directions use composite Gauss-Legendre panels
/// about one grid cell long, and `w1` is interpolated bilinearly.
pub fn representation_oracle(w1: &Field2D, t: f64, x: (f64, f64)) -> Result<f64> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::OutOfDomain(format!("oracle needs t > 0, got {t}")));
    }
    let g = w1.grid();
    let (px, py) = x;
    let xmax = g.x(g.nx - 1);
    let ymax = g.y(g.ny - 1);
    if px - t < g.x0 || px + t > xmax || py - t < g.y0 || py + t > ymax {
        return Err(Error::DomainExceeded { x: px, y: py, radius: t });
    }
    let h = g.dx.min(g.dy);
    let phi_panels = ((t * std::f64::consts::FRAC_PI_2 / h).ceil() as usize).max(4);
    let theta_panels = ((t * 2.0 * std::f64::consts::PI / h).ceil() as usize).max(8);
    let rule = quad::rule(8);
    let theta_nodes = composite_nodes(&rule, 0.0, 2.0 * std::f64::consts::PI, theta_panels);
    let phi_nodes = composite_nodes(&rule, 0.0, std::f64::consts::FRAC_PI_2, phi_panels);
    let total: f64 = phi_nodes
        .par_iter()
        .map(|&(phi, wphi)| {
            let rho = t * phi.sin();
            let inner: f64 = theta_nodes
                .iter()
                .map(|&(th, wth)| {
                    let (s, c) = th.sin_cos();
                    // the domain check above keeps every sample inside the box
                    wth * w1.interpolate(px + rho * c, py + rho * s).unwrap_or(0.0)
                })
                .sum();
            wphi * rho * inner
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum();
    Ok(total / (2.0 * std::f64::consts::PI))
}

fn composite_nodes(rule: &quad::GaussLegendre, a: f64, b: f64, panels: usize) -> Vec<(f64, f64)> {
    let h = (b - a) / panels as f64;
    let mut out = Vec::with_capacity(panels * rule.nodes.len());
    for p in 0..panels {
        let c = a + (p as f64 + 0.5) * h;
        for (x, w) in rule.nodes.iter().zip(&rule.weights) {
            out.push((c + 0.5 * h * x, 0.5 * h * w));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::RegionMask;
    use std::f64::consts::PI;

    fn bump(g: Grid2D, cx: f64, cy: f64, w: f64) -> Field2D {
        Field2D::from_fn(g, |x, y| (-((x - cx).powi(2) + (y - cy).powi(2)) / (2.0 * w * w)).exp())
            .unwrap()
    }

    #[test]
    fn identity_at_time_zero() {
        let g = Grid2D::centered(32, 6.0).unwrap();
        let w0 = bump(g, 0.5, -0.3, 1.0);
        let (w, wt) = propagate_free(PropagatorKind::KLEIN_GORDON, &w0, &Field2D::zeros(g), 0.0)
            .unwrap();
        assert!(w.sub(&w0).unwrap().max_abs() < 1e-14);
        assert!(wt.max_abs() < 1e-14);
    }

    #[test]
    fn zero_frequency_limit_of_the_wave_propagator() {
        let g = Grid2D::centered(16, 2.0).unwrap();
        let c = 0.7;
        let w1 = Field2D::constant(g, c).unwrap();
        let (w, wt) = propagate_free(PropagatorKind::WAVE, &Field2D::zeros(g), &w1, 3.5).unwrap();
        for v in w.values() {
            assert!((v - c * 3.5).abs() < 1e-13);
        }
        for v in wt.values() {
            assert!((v - c).abs() < 1e-13);
        }
    }

    #[test]
    fn klein_gordon_single_mode_closed_form() {
        let g = Grid2D::centered(32, 5.0).unwrap();
        let l = g.lengths().0;
        let k = 2.0 * PI / l;
        let w0 = Field2D::from_fn(g, |x, _| (k * x).sin()).unwrap();
        let t = 7.3;
        let (w, _) =
            propagate_free(PropagatorKind::KLEIN_GORDON, &w0, &Field2D::zeros(g), t).unwrap();
        let om = (1.0 + k * k).sqrt();
        let exact = Field2D::from_fn(g, |x, _| (t * om).cos() * (k * x).sin()).unwrap();
        assert!(w.sub(&exact).unwrap().max_abs() < 1e-10);
    }

    #[test]
    fn series_branches_are_continuous() {
        for om in [0.0, 1e-9, 3e-5, 0.99e-4, 1.01e-4, 0.5] {
            let t = 1.0;
            let s = sinc_t(om, t);
            let v = versine_t(om, t);
            let s_ref = if om == 0.0 { t } else { (om * t).sin() / om };
            let v_ref = if om == 0.0 { 0.5 } else { 2.0 * (0.5 * om * t).sin().powi(2) / (om * om) };
            assert!((s - s_ref).abs() < 1e-15);
            assert!((v - v_ref).abs() < 1e-13);
        }
    }

    #[test]
    fn sourced_with_zero_source_matches_free() {
        let g = Grid2D::centered(64, 8.0).unwrap();
        let w0 = bump(g, 0.0, 0.0, 1.0);
        let w1 = bump(g, 1.0, 0.5, 0.8);
        for kind in [PropagatorKind::WAVE, PropagatorKind::KLEIN_GORDON] {
            let traj = propagate_sourced(kind, &w0, &w1, |_| Ok(None), 4.0, 0.1).unwrap();
            for (k, &t) in traj.times.iter().enumerate() {
                let (w, wt) = propagate_free(kind, &w0, &w1, t).unwrap();
                assert!(traj.w[k].sub(&w).unwrap().max_abs() < 1e-12);
                assert!(traj.wt[k].sub(&wt).unwrap().max_abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_source_zero_mode_matches_closed_forms() {
        let g = Grid2D::centered(16, 2.0).unwrap();
        let z = Field2D::zeros(g);
        let c = 0.3;
        let src = |_: f64| Ok(Some(Field2D::constant(g, c).unwrap()));
        // constant source: the midpoint rule is exact here
        let wave = propagate_sourced(PropagatorKind::WAVE, &z, &z, src, 5.0, 0.25).unwrap();
        let kg = propagate_sourced(PropagatorKind::KLEIN_GORDON, &z, &z, src, 5.0, 0.25).unwrap();
        for k in 0..wave.len() {
            let t = wave.times[k];
            assert!((wave.w[k].at(3, 4) - c * t * t / 2.0).abs() < 1e-12);
            assert!((kg.w[k].at(3, 4) - c * (1.0 - t.cos())).abs() < 1e-12);
        }
    }

    #[test]
    fn time_dependent_source_converges_at_second_order() {
        // ẅ + w = cos(2t), w(0) = ẇ(0) = 0  =>  w = (cos t - cos 2t) / 3
        let g = Grid2D::centered(16, 2.0).unwrap();
        let z = Field2D::zeros(g);
        let err = |dt: f64| {
            let tr = propagate_sourced(
                PropagatorKind::KLEIN_GORDON,
                &z,
                &z,
                |t| Ok(Some(Field2D::constant(g, (2.0 * t).cos()).unwrap())),
                6.0,
                dt,
            )
            .unwrap();
            let t = 6.0f64;
            (tr.w.last().unwrap().at(0, 0) - (t.cos() - (2.0 * t).cos()) / 3.0).abs()
        };
        let order = (err(0.1) / err(0.05)).log2();
        assert!(order > 1.9 && order < 2.1, "order {order}");
    }

    #[test]
    fn non_finite_source_is_reported_with_its_time() {
        let g = Grid2D::centered(16, 2.0).unwrap();
        let z = Field2D::zeros(g);
        let r = propagate_sourced(
            PropagatorKind::WAVE,
            &z,
            &z,
            |t| {
                Ok(if t > 0.5 {
                    Some(Field2D::from_raw(g, vec![f64::NAN; g.len()]))
                } else {
                    None
                })
            },
            1.0,
            0.25,
        );
        assert_eq!(r.unwrap_err(), Error::InvalidSource { t: 0.625 });
    }

    #[test]
    fn oracle_closed_forms() {
        let g = Grid2D::centered(64, 8.0).unwrap();
        let one = Field2D::constant(g, 1.0).unwrap();
        for t in [0.5, 1.7, 3.0] {
            let v = representation_oracle(&one, t, (0.2, -0.4)).unwrap();
            assert!((v - t).abs() < 1e-10, "t = {t}: {v}");
        }
        assert_eq!(representation_oracle(&Field2D::zeros(g), 2.0, (0.0, 0.0)).unwrap(), 0.0);
        assert!(matches!(
            representation_oracle(&one, 7.0, (3.0, 0.0)),
            Err(Error::DomainExceeded { .. })
        ));
    }

    #[test]
    fn oracle_agrees_with_frequency_space_solution() {
        let g = Grid2D::centered(256, 16.0).unwrap();
        let w1 = bump(g, 0.0, 0.0, 1.0);
        let t = 6.0;
        let (w, _) = propagate_free(PropagatorKind::WAVE, &Field2D::zeros(g), &w1, t).unwrap();
        for (i, j) in [(128, 128), (140, 120), (110, 150), (135, 135)] {
            let x = (g.x(i), g.y(j));
            let o = representation_oracle(&w1, t, x).unwrap();
            let p = w.at(i, j);
            assert!((o - p).abs() < 1e-3 * p.abs(), "{x:?}: oracle {o}, spectral {p}");
        }
    }

    mod props {
        use super::*;
        use crate::energies::energy;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(16))]

            #[test]
            fn group_property(t1 in 0.0f64..4.0, t2 in 0.0f64..4.0, mass in prop::sample::select(vec![0.0, 1.0])) {
                let g = Grid2D::centered(64, 10.0).unwrap();
                let kind = PropagatorKind::new(mass);
                let w0 = bump(g, 0.3, 0.0, 1.0);
                let w1 = bump(g, -0.5, 0.4, 1.2);
                let (a, at) = propagate_free(kind, &w0, &w1, t1).unwrap();
                let (b, bt) = propagate_free(kind, &a, &at, t2).unwrap();
                let (c, ct) = propagate_free(kind, &w0, &w1, t1 + t2).unwrap();
                let scale = c.max_abs().max(ct.max_abs());
                prop_assert!(b.sub(&c).unwrap().max_abs() < 1e-11 * scale);
                prop_assert!(bt.sub(&ct).unwrap().max_abs() < 1e-11 * scale);
            }

            #[test]
            fn time_reversal(t in 0.0f64..6.0, mass in prop::sample::select(vec![0.0, 1.0])) {
                let g = Grid2D::centered(64, 10.0).unwrap();
                let kind = PropagatorKind::new(mass);
                let w0 = bump(g, 0.3, 0.0, 1.0);
                let w1 = bump(g, -0.5, 0.4, 1.2);
                let (a, at) = propagate_free(kind, &w0, &w1, t).unwrap();
                let (b, bt) = propagate_free(kind, &a, &at.scaled(-1.0), t).unwrap();
                prop_assert!(b.sub(&w0).unwrap().max_abs() < 1e-10);
                prop_assert!(bt.add(&w1).unwrap().max_abs() < 1e-10);
            }

            #[test]
            fn free_energy_is_conserved(t in 0.0f64..20.0, mass in prop::sample::select(vec![0.0, 1.0])) {
                let g = Grid2D::centered(64, 10.0).unwrap();
                let kind = PropagatorKind::new(mass);
                let w0 = bump(g, 0.3, 0.0, 1.0);
                let w1 = bump(g, -0.5, 0.4, 1.2);
                let mask = RegionMask::all(g);
                let e0 = energy(mass, &w0, &w1, &mask).unwrap();
                let (a, at) = propagate_free(kind, &w0, &w1, t).unwrap();
                let e1 = energy(mass, &a, &at, &mask).unwrap();
                prop_assert!((e1 - e0).abs() < 1e-10 * e0);
            }
        }
    }
}
