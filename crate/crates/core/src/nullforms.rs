//! The null forms Q_0 and Q_αβ, the couplings P_1, P_2, the ghost derivative
//! G_a and the exact identities behind the null-form estimates.
//!
//! Index 0 is time, 1 and 2 are space; the metric is diag(-1, 1, 1).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{spatial_derivative, Axis, Field2D, Scheme};
use crate::taylor::{Jet, Point};
use crate::vectorfields::{gamma_jet, VectorFieldId};

/// Value and first derivatives (∂_t, ∂_1, ∂_2) of a function at one point.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Jet1 {
    pub w: f64,
    pub dt: f64,
    pub d1: f64,
    pub d2: f64,
}

impl Jet1 {
    pub fn new(w: f64, dt: f64, d1: f64, d2: f64) -> Result<Self> {
        let j = Self { w, dt, d1, d2 };
        if j.grad().iter().chain([&w]).all(|c| c.is_finite()) {
            Ok(j)
        } else {
            Err(Error::InvalidField("jet entries must be finite".into()))
        }
    }

    pub fn from_jet(j: &Jet) -> Self {
        Self { w: j.value(), dt: j.d(0), d1: j.d(1), d2: j.d(2) }
    }

    /// `(∂_t, ∂_1, ∂_2)`
    pub fn grad(&self) -> [f64; 3] {
        [self.dt, self.d1, self.d2]
    }
}

pub type Matrix3 = [[f64; 3]; 3];

/// Constant coefficient matrices `P_1^{αβ}` (wave equation) and `P_2^{αβ}`
/// (Klein-Gordon equation).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Couplings {
    pub p1: Matrix3,
    pub p2: Matrix3,
}

impl Couplings {
    pub fn new(p1: Matrix3, p2: Matrix3) -> Result<Self> {
        if p1.iter().chain(&p2).flatten().all(|c| c.is_finite()) {
            Ok(Self { p1, p2 })
        } else {
            Err(Error::ConfigRejected("coupling entries must be finite".into()))
        }
    }

    pub fn zero() -> Self {
        Self { p1: [[0.0; 3]; 3], p2: [[0.0; 3]; 3] }
    }

    /// A fixed generic choice: both antisymmetric parts have all three
    /// independent entries of order one.
    pub fn generic() -> Self {
        Self {
            p1: [[0.2, 1.0, -0.7], [-0.3, 0.1, 0.9], [0.6, -0.4, -0.2]],
            p2: [[-0.1, -0.8, 0.5], [0.6, 0.3, 1.1], [-0.4, -0.5, 0.2]],
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        let s = |m: &Matrix3| m.map(|row| row.map(|x| c * x));
        Self { p1: s(&self.p1), p2: s(&self.p2) }
    }

    /// Only the antisymmetric part of P contributes to `P^{αβ} Q_αβ`.
    pub fn antisymmetric_part(p: &Matrix3) -> Matrix3 {
        let mut out = [[0.0; 3]; 3];
        for a in 0..3 {
            for b in 0..3 {
                out[a][b] = 0.5 * (p[a][b] - p[b][a]);
            }
        }
        out
    }
}

/// `Q_0(u, v) = ∂_α u ∂^α v = -u_t v_t + ∇u·∇v`
pub fn q0(ju: &Jet1, jv: &Jet1) -> f64 {
    -ju.dt * jv.dt + ju.d1 * jv.d1 + ju.d2 * jv.d2
}

/// `Q_αβ(u, v) = ∂_α u ∂_β v - ∂_α v ∂_β u`
pub fn q_ab(alpha: usize, beta: usize, ju: &Jet1, jv: &Jet1) -> f64 {
    let (du, dv) = (ju.grad(), jv.grad());
    du[alpha] * dv[beta] - dv[alpha] * du[beta]
}

/// `P^{αβ} Q_αβ(u, v)`, summed over the three independent pairs.
pub fn coupled_source(p: &Matrix3, ju: &Jet1, jv: &Jet1) -> f64 {
    let (du, dv) = (ju.grad(), jv.grad());
    let mut s = 0.0;
    for (a, b) in [(0, 1), (0, 2), (1, 2)] {
        s += (p[a][b] - p[b][a]) * (du[a] * dv[b] - dv[a] * du[b]);
    }
    s
}

/// [`coupled_source`] at every node, from the gradients `(∂_t, ∂_1, ∂_2)`
/// of u and v.
pub fn coupled_source_field(p: &Matrix3, du: [&Field2D; 3], dv: [&Field2D; 3]) -> Result<Field2D> {
    for f in du.iter().chain(&dv) {
        du[0].check_same_grid(f)?;
    }
    let g = *du[0].grid();
    let c = [p[0][1] - p[1][0], p[0][2] - p[2][0], p[1][2] - p[2][1]];
    let u = du.map(|f| f.values());
    let v = dv.map(|f| f.values());
    let values: Vec<f64> = (0..g.len())
        .into_par_iter()
        .with_min_len(1024)
        .map(|n| {
            let q01 = u[0][n] * v[1][n] - v[0][n] * u[1][n];
            let q02 = u[0][n] * v[2][n] - v[0][n] * u[2][n];
            let q12 = u[1][n] * v[2][n] - v[1][n] * u[2][n];
            c[0] * q01 + c[1] * q02 + c[2] * q12
        })
        .collect();
    Field2D::from_values(g, values)
}

/// `G_a w = (x_a / r) ∂_t w + ∂_a w`
pub fn ghost_derivative(a: Axis, j: &Jet1, x: (f64, f64), r_min: f64) -> Result<f64> {
    let r = x.0.hypot(x.1);
    if r < r_min {
        return Err(Error::NearOrigin { r, r_min });
    }
    Ok(match a {
        Axis::X1 => x.0 / r * j.dt + j.d1,
        Axis::X2 => x.1 / r * j.dt + j.d2,
    })
}

/// Residuals of the rewriting of the null forms through good derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GhostDecomposition {
    /// `Q_0 - Σ_a [G_a u G_a v - (x_a/r)(G_a u ∂_t v + G_a v ∂_t u)]`
    pub q0: f64,
    /// `Q_0b - [∂_t u G_b v - ∂_t v G_b u]` for b = 1, 2
    pub q0b: [f64; 2],
}

impl GhostDecomposition {
    pub fn max_abs(&self) -> f64 {
        self.q0.abs().max(self.q0b[0].abs()).max(self.q0b[1].abs())
    }
}

pub fn ghost_decomposition_residual(
    ju: &Jet1,
    jv: &Jet1,
    x: (f64, f64),
    r_min: f64,
) -> Result<GhostDecomposition> {
    let r = x.0.hypot(x.1);
    let omega = [x.0 / r, x.1 / r];
    let mut gu = [0.0; 2];
    let mut gv = [0.0; 2];
    for (a, axis) in [Axis::X1, Axis::X2].into_iter().enumerate() {
        gu[a] = ghost_derivative(axis, ju, x, r_min)?;
        gv[a] = ghost_derivative(axis, jv, x, r_min)?;
    }
    let mut rhs0 = 0.0;
    for a in 0..2 {
        rhs0 += gu[a] * gv[a] - omega[a] * (gu[a] * jv.dt + gv[a] * ju.dt);
    }
    let q0b = [0, 1].map(|b| q_ab(0, b + 1, ju, jv) - (ju.dt * gv[b] - jv.dt * gu[b]));
    Ok(GhostDecomposition { q0: q0(ju, jv) - rhs0, q0b })
}

/// Residual of `Q_αβ(u, v) = ∂_β(∂_α u v) - ∂_α(∂_β u v)` on exact jets.
pub fn divergence_form_residual_exact(u: &Jet, v: &Jet, alpha: usize, beta: usize) -> f64 {
    let lhs = q_ab(alpha, beta, &Jet1::from_jet(u), &Jet1::from_jet(v));
    let a = u.deriv(alpha) * *v;
    let b = u.deriv(beta) * *v;
    lhs - (a.d(beta) - b.d(alpha))
}

/// Equally spaced time levels of one field, centered on the middle level.
#[derive(Debug, Clone)]
pub struct TimeSlab {
    /// time of the middle level
    pub t: f64,
    /// level spacing
    pub h: f64,
    pub levels: Vec<Field2D>,
}

impl TimeSlab {
    /// Needs an odd number of levels, at least three. With five or more the
    /// time differences are fourth order.
    pub fn new(t: f64, h: f64, levels: Vec<Field2D>) -> Result<Self> {
        if levels.len() < 3 || levels.len() % 2 == 0 {
            return Err(Error::InsufficientTimeLevels { needed: 3, got: levels.len() });
        }
        if !(h > 0.0) {
            return Err(Error::InvalidGrid("time level spacing must be positive".into()));
        }
        for l in &levels {
            levels[0].check_same_grid(l)?;
        }
        Ok(Self { t, h, levels })
    }

    pub fn mid(&self) -> &Field2D {
        &self.levels[self.levels.len() / 2]
    }

    fn around(&self) -> (usize, bool) {
        (self.levels.len() / 2, self.levels.len() >= 5)
    }

    /// ∂_t at the middle level.
    pub fn dt(&self) -> Field2D {
        let (c, fourth) = self.around();
        let l = &self.levels;
        let g = *l[c].grid();
        let n = g.len();
        let values = if fourth {
            let k = 1.0 / (12.0 * self.h);
            let (a, b, d, e) = (l[c - 2].values(), l[c - 1].values(), l[c + 1].values(), l[c + 2].values());
            (0..n).map(|i| k * (a[i] - 8.0 * b[i] + 8.0 * d[i] - e[i])).collect()
        } else {
            let k = 0.5 / self.h;
            let (b, d) = (l[c - 1].values(), l[c + 1].values());
            (0..n).map(|i| k * (d[i] - b[i])).collect()
        };
        Field2D::from_raw(g, values)
    }

    /// ∂_t² at the middle level.
    pub fn dtt(&self) -> Field2D {
        let (c, fourth) = self.around();
        let l = &self.levels;
        let g = *l[c].grid();
        let n = g.len();
        let m = l[c].values();
        let values = if fourth {
            let k = 1.0 / (12.0 * self.h * self.h);
            let (a, b, d, e) = (l[c - 2].values(), l[c - 1].values(), l[c + 1].values(), l[c + 2].values());
            (0..n).map(|i| k * (-a[i] + 16.0 * b[i] - 30.0 * m[i] + 16.0 * d[i] - e[i])).collect()
        } else {
            let k = 1.0 / (self.h * self.h);
            let (b, d) = (l[c - 1].values(), l[c + 1].values());
            (0..n).map(|i| k * (b[i] - 2.0 * m[i] + d[i])).collect()
        };
        Field2D::from_raw(g, values)
    }

    /// Apply `f` level by level.
    pub fn map_levels(&self, f: impl Fn(&Field2D) -> Result<Field2D>) -> Result<TimeSlab> {
        let levels = self.levels.iter().map(f).collect::<Result<Vec<_>>>()?;
        Ok(TimeSlab { t: self.t, h: self.h, levels })
    }

    pub fn zip_levels(
        &self,
        other: &TimeSlab,
        f: impl Fn(&Field2D, &Field2D) -> Result<Field2D>,
    ) -> Result<TimeSlab> {
        if self.levels.len() != other.levels.len() || (self.h - other.h).abs() > 1e-12 * self.h {
            return Err(Error::TimeMeshMismatch);
        }
        let levels = self
            .levels
            .iter()
            .zip(&other.levels)
            .map(|(a, b)| f(a, b))
            .collect::<Result<Vec<_>>>()?;
        Ok(TimeSlab { t: self.t, h: self.h, levels })
    }

    /// ∂_α at the middle level: time by differences, space by `scheme`.
    pub fn partial(&self, alpha: usize, scheme: Scheme) -> Result<Field2D> {
        match alpha {
            0 => Ok(self.dt()),
            a => spatial_derivative(self.mid(), Axis::from_index(a - 1), scheme),
        }
    }

    /// ∂_α of every level (only meaningful for spatial α).
    fn partial_levels(&self, alpha: usize, scheme: Scheme) -> Result<TimeSlab> {
        debug_assert!(alpha > 0);
        self.map_levels(|l| spatial_derivative(l, Axis::from_index(alpha - 1), scheme))
    }
}

/// Residual of `Q_αβ(u, v) = ∂_β(∂_α u v) - ∂_α(∂_β u v)` at the middle
/// level of two slabs, every derivative discretized. Time derivatives of
/// products are differences of the products, so the residual measures the
/// consistency of the discretization rather than an algebraic cancellation.
pub fn divergence_form_residual(
    u: &TimeSlab,
    v: &TimeSlab,
    alpha: usize,
    beta: usize,
    scheme: Scheme,
) -> Result<Field2D> {
    assert!(alpha < 3 && beta < 3);
    let g = *u.mid().grid();
    if alpha == beta {
        return Ok(Field2D::zeros(g));
    }
    let du = [u.partial(0, scheme)?, u.partial(1, scheme)?, u.partial(2, scheme)?];
    let dv = [v.partial(0, scheme)?, v.partial(1, scheme)?, v.partial(2, scheme)?];
    let lhs = du[alpha].mul(&dv[beta])?.sub(&dv[alpha].mul(&du[beta])?)?;
    // ∂_γ(∂_δ u v)
    let outer = |gamma: usize, delta: usize| -> Result<Field2D> {
        if gamma == 0 {
            // ∂_δ u is spatial here (δ ≠ γ)
            let prod = u.partial_levels(delta, scheme)?.zip_levels(v, |a, b| a.mul(b))?;
            Ok(prod.dt())
        } else {
            let inner = du[delta].mul(v.mid())?;
            spatial_derivative(&inner, Axis::from_index(gamma - 1), scheme)
        }
    };
    let rhs = outer(beta, alpha)?.sub(&outer(alpha, beta)?)?;
    lhs.sub(&rhs)
}

/// Measured constants in the three pointwise null-form bounds at one point
/// (ratios of left to right sides; `None` where the right side vanishes).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NullBoundRatios {
    /// `|Q_0| / (⟨t+r⟩^{-1}(|Su||Γv| + |Γu||Γv|))`
    pub q0_vector_fields: Option<f64>,
    /// `max|Q_αβ| / (⟨t+r⟩^{-1}(|Γv||∂u| + |Γu||∂v|))`
    pub qab_vector_fields: Option<f64>,
    /// `(|Q_0| + max|Q_αβ|) / Σ_a(|G_a u||∂v| + |G_a v||∂u|)`
    pub good_derivatives: Option<f64>,
}

/// `|Γw|` is the sum over the admissible fields, `|∂w|` over the three
/// partials.
pub fn null_bound_ratios(u: &Jet, v: &Jet, p: Point) -> Result<NullBoundRatios> {
    let [t, x1, x2] = p;
    let r = x1.hypot(x2);
    let (ju, jv) = (Jet1::from_jet(u), Jet1::from_jet(v));
    let gamma_sum = |w: &Jet| -> f64 {
        VectorFieldId::ADMISSIBLE.iter().map(|&id| gamma_jet(id, w, p).value().abs()).sum()
    };
    let d_sum = |j: &Jet1| j.grad().iter().map(|c| c.abs()).sum::<f64>();
    let (gu, gv) = (gamma_sum(u), gamma_sum(v));
    let su = gamma_jet(VectorFieldId::S, u, p).value().abs();
    let w = 1.0 / (1.0 + (t + r).powi(2)).sqrt();
    let q0v = q0(&ju, &jv).abs();
    let qab = [(0, 1), (0, 2), (1, 2)]
        .iter()
        .map(|&(a, b)| q_ab(a, b, &ju, &jv).abs())
        .fold(0.0, f64::max);
    let ratio = |num: f64, den: f64| if den > 0.0 { Some(num / den) } else { None };
    let mut good = 0.0;
    for axis in [Axis::X1, Axis::X2] {
        let r_min = f64::MIN_POSITIVE;
        good += ghost_derivative(axis, &ju, (x1, x2), r_min)?.abs() * d_sum(&jv)
            + ghost_derivative(axis, &jv, (x1, x2), r_min)?.abs() * d_sum(&ju);
    }
    Ok(NullBoundRatios {
        q0_vector_fields: ratio(q0v, w * (su * gv + gu * gv)),
        qab_vector_fields: ratio(qab, w * (gv * d_sum(&ju) + gu * d_sum(&jv))),
        good_derivatives: ratio(q0v + qab, good),
    })
}
