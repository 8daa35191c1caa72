//! The commuting vector fields ∂_α, Ω_12, L_a and the scaling field S on grid
//! slices and on exact jets, plus the operator identities relating them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{self, spatial_derivative, Axis, Field2D, Grid2D, RegionMask, Scheme};
use crate::taylor::{box_op, Jet, Point, SpacetimeFn};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VectorFieldId {
    Dt,
    D1,
    D2,
    Omega12,
    L1,
    L2,
    S,
}

impl VectorFieldId {
    /// The admissible fields; S is deliberately absent.
    pub const ADMISSIBLE: [VectorFieldId; 6] = [
        VectorFieldId::Dt,
        VectorFieldId::D1,
        VectorFieldId::D2,
        VectorFieldId::Omega12,
        VectorFieldId::L1,
        VectorFieldId::L2,
    ];

    pub const ALL: [VectorFieldId; 7] = [
        VectorFieldId::Dt,
        VectorFieldId::D1,
        VectorFieldId::D2,
        VectorFieldId::Omega12,
        VectorFieldId::L1,
        VectorFieldId::L2,
        VectorFieldId::S,
    ];

    pub fn name(self) -> &'static str {
        match self {
            VectorFieldId::Dt => "Dt",
            VectorFieldId::D1 => "D1",
            VectorFieldId::D2 => "D2",
            VectorFieldId::Omega12 => "Omega12",
            VectorFieldId::L1 => "L1",
            VectorFieldId::L2 => "L2",
            VectorFieldId::S => "S",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.name().eq_ignore_ascii_case(s))
    }
}

/// How the second time derivative stored in a [`TimeJetField`] was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WttSource {
    /// Substituted from the equation of motion.
    Pde,
    /// Centered (or one-sided at the ends) differences of stored levels.
    Differences,
    /// Supplied analytically.
    Exact,
}

/// A time slice carrying w, ∂_t w and ∂_t² w.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeJetField {
    pub t: f64,
    pub w: Field2D,
    pub wt: Field2D,
    pub wtt: Field2D,
    pub wtt_source: WttSource,
}

impl TimeJetField {
    pub fn new(t: f64, w: Field2D, wt: Field2D, wtt: Field2D, wtt_source: WttSource) -> Result<Self> {
        w.check_same_grid(&wt)?;
        w.check_same_grid(&wtt)?;
        Ok(Self { t, w, wt, wtt, wtt_source })
    }

    /// Sample an analytic function and its time derivatives at time `t`.
    pub fn from_fn(grid: Grid2D, t: f64, f: &dyn SpacetimeFn) -> Result<Self> {
        let n = grid.len();
        let (mut w, mut wt, mut wtt) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        for k in 0..n {
            let (x, y) = grid.point(k);
            let j = f.jet_at([t, x, y]);
            w[k] = j.value();
            wt[k] = j.partial(1, 0, 0);
            wtt[k] = j.partial(2, 0, 0);
        }
        Self::new(
            t,
            Field2D::from_values(grid, w)?,
            Field2D::from_values(grid, wt)?,
            Field2D::from_values(grid, wtt)?,
            WttSource::Exact,
        )
    }

    pub fn grid(&self) -> &Grid2D {
        self.w.grid()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            t: self.t,
            w: self.w.scaled(c),
            wt: self.wt.scaled(c),
            wtt: self.wtt.scaled(c),
            wtt_source: self.wtt_source,
        }
    }
}

/// `Σ_k c_k f_k` with the coefficient of each term given per node.
fn combine(g: Grid2D, terms: &[(&dyn Fn(f64, f64) -> f64, &Field2D)]) -> Field2D {
    let values = (0..g.len())
        .map(|n| {
            let (x, y) = g.point(n);
            terms.iter().map(|(c, f)| c(x, y) * f.values()[n]).sum()
        })
        .collect();
    Field2D::from_raw(g, values)
}

/// Γ applied to a field given its value, time derivative, and time.
fn gamma_of(id: VectorFieldId, t: f64, w: &Field2D, wt: &Field2D, scheme: Scheme) -> Result<Field2D> {
    let g = *w.grid();
    let d = |a| spatial_derivative(w, a, scheme);
    Ok(match id {
        VectorFieldId::Dt => wt.clone(),
        VectorFieldId::D1 => d(Axis::X1)?,
        VectorFieldId::D2 => d(Axis::X2)?,
        VectorFieldId::Omega12 => {
            let (d1, d2) = (d(Axis::X1)?, d(Axis::X2)?);
            combine(g, &[(&|x, _| x, &d2), (&|_, y| -y, &d1)])
        }
        VectorFieldId::L1 => {
            let d1 = d(Axis::X1)?;
            combine(g, &[(&|x, _| x, wt), (&|_, _| t, &d1)])
        }
        VectorFieldId::L2 => {
            let d2 = d(Axis::X2)?;
            combine(g, &[(&|_, y| y, wt), (&|_, _| t, &d2)])
        }
        VectorFieldId::S => {
            let (d1, d2) = (d(Axis::X1)?, d(Axis::X2)?);
            combine(g, &[(&|_, _| t, wt), (&|x, _| x, &d1), (&|_, y| y, &d2)])
        }
    })
}

/// `Γ w` on the slice.
pub fn apply_gamma(id: VectorFieldId, f: &TimeJetField, scheme: Scheme) -> Result<Field2D> {
    gamma_of(id, f.t, &f.w, &f.wt, scheme)
}

/// `∂_t (Γ w)` on the slice, using the stored second time derivative.
pub fn apply_gamma_dt(id: VectorFieldId, f: &TimeJetField, scheme: Scheme) -> Result<Field2D> {
    let g = *f.grid();
    let t = f.t;
    let dwt = |a| spatial_derivative(&f.wt, a, scheme);
    let dw = |a| spatial_derivative(&f.w, a, scheme);
    Ok(match id {
        VectorFieldId::Dt => f.wtt.clone(),
        VectorFieldId::D1 => dwt(Axis::X1)?,
        VectorFieldId::D2 => dwt(Axis::X2)?,
        VectorFieldId::Omega12 => gamma_of(id, t, &f.wt, &f.wtt, scheme)?,
        VectorFieldId::L1 => {
            let (a, b) = (dw(Axis::X1)?, dwt(Axis::X1)?);
            combine(g, &[(&|x, _| x, &f.wtt), (&|_, _| 1.0, &a), (&|_, _| t, &b)])
        }
        VectorFieldId::L2 => {
            let (a, b) = (dw(Axis::X2)?, dwt(Axis::X2)?);
            combine(g, &[(&|_, y| y, &f.wtt), (&|_, _| 1.0, &a), (&|_, _| t, &b)])
        }
        VectorFieldId::S => {
            let (a, b) = (dwt(Axis::X1)?, dwt(Axis::X2)?);
            combine(
                g,
                &[(&|_, _| 1.0, &f.wt), (&|_, _| t, &f.wtt), (&|x, _| x, &a), (&|_, y| y, &b)],
            )
        }
    })
}

/// Γ applied to an exact jet expanded about `p` (the result is exact to one
/// order less).
pub fn gamma_jet(id: VectorFieldId, w: &Jet, p: Point) -> Jet {
    let [t, x1, x2] = Jet::coords(p);
    match id {
        VectorFieldId::Dt => w.deriv(0),
        VectorFieldId::D1 => w.deriv(1),
        VectorFieldId::D2 => w.deriv(2),
        VectorFieldId::Omega12 => x1 * w.deriv(2) - x2 * w.deriv(1),
        VectorFieldId::L1 => x1 * w.deriv(0) + t * w.deriv(1),
        VectorFieldId::L2 => x2 * w.deriv(0) + t * w.deriv(2),
        VectorFieldId::S => t * w.deriv(0) + x1 * w.deriv(1) + x2 * w.deriv(2),
    }
}

/// `[a, b]` expanded in the fields themselves: `[a, b] = Σ c_k Γ_k`.
pub fn commutator_expansion(a: VectorFieldId, b: VectorFieldId) -> Vec<(f64, VectorFieldId)> {
    use VectorFieldId::*;
    let forward = |a, b| -> Option<Vec<(f64, VectorFieldId)>> {
        Some(match (a, b) {
            (Dt, L1) => vec![(1.0, D1)],
            (Dt, L2) => vec![(1.0, D2)],
            (D1, L1) | (D2, L2) => vec![(1.0, Dt)],
            (D1, Omega12) => vec![(1.0, D2)],
            (D2, Omega12) => vec![(-1.0, D1)],
            (Omega12, L1) => vec![(-1.0, L2)],
            (Omega12, L2) => vec![(1.0, L1)],
            (L1, L2) => vec![(1.0, Omega12)],
            (Dt, S) => vec![(1.0, Dt)],
            (D1, S) => vec![(1.0, D1)],
            (D2, S) => vec![(1.0, D2)],
            _ => return None,
        })
    };
    if let Some(v) = forward(a, b) {
        return v;
    }
    if let Some(v) = forward(b, a) {
        return v.into_iter().map(|(c, g)| (-c, g)).collect();
    }
    Vec::new()
}

/// Which commutator identity to test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CommutatorCase {
    /// `[□, Γ] w`, which vanishes for admissible Γ and equals `-2 □ w` for S.
    WithBox(VectorFieldId),
    /// `[Γ', Γ''] w` against its expansion in the fields.
    Pair(VectorFieldId, VectorFieldId),
}

/// Largest residual of the commutator identity over the sample points, using
/// exact jet derivatives of `w`.
pub fn commutator_residual(case: CommutatorCase, w: &dyn SpacetimeFn, points: &[Point]) -> f64 {
    points
        .iter()
        .map(|&p| {
            let j = w.jet_at(p);
            let r = match case {
                CommutatorCase::WithBox(g) => {
                    let lhs = box_op(&gamma_jet(g, &j, p)) - gamma_jet(g, &box_op(&j), p);
                    // [□, S] = 2□
                    let expected = if g == VectorFieldId::S { 2.0 * box_op(&j).value() } else { 0.0 };
                    lhs.value() - expected
                }
                CommutatorCase::Pair(a, b) => {
                    let lhs = gamma_jet(a, &gamma_jet(b, &j, p), p) - gamma_jet(b, &gamma_jet(a, &j, p), p);
                    let rhs: f64 = commutator_expansion(a, b)
                        .into_iter()
                        .map(|(c, g)| c * gamma_jet(g, &j, p).value())
                        .sum();
                    lhs.value() - rhs
                }
            };
            r.abs()
        })
        .fold(0.0, f64::max)
}

/// Residuals of
/// `(t² - r²) ∂_t w = t S w - x^a L_a w` and
/// `(t² - r²) ∂_a w = t L_a w - x_a S w - x^b Ω_ba w` on a slice.
pub fn weighted_derivative_residual(
    f: &TimeJetField,
    scheme: Scheme,
) -> Result<(Field2D, Field2D, Field2D)> {
    let g = *f.grid();
    let t = f.t;
    let s = apply_gamma(VectorFieldId::S, f, scheme)?;
    let l1 = apply_gamma(VectorFieldId::L1, f, scheme)?;
    let l2 = apply_gamma(VectorFieldId::L2, f, scheme)?;
    let om = apply_gamma(VectorFieldId::Omega12, f, scheme)?;
    let d1 = spatial_derivative(&f.w, Axis::X1, scheme)?;
    let d2 = spatial_derivative(&f.w, Axis::X2, scheme)?;
    let mut rt = vec![0.0; g.len()];
    let mut r1 = vec![0.0; g.len()];
    let mut r2 = vec![0.0; g.len()];
    for n in 0..g.len() {
        let (x, y) = g.point(n);
        let rr = t * t - x * x - y * y;
        let (sv, l1v, l2v, omv) = (s.values()[n], l1.values()[n], l2.values()[n], om.values()[n]);
        rt[n] = rr * f.wt.values()[n] - (t * sv - x * l1v - y * l2v);
        // Ω_21 = -Ω_12, Ω_12 = x1 ∂2 - x2 ∂1
        r1[n] = rr * d1.values()[n] - (t * l1v - x * sv - y * (-omv));
        r2[n] = rr * d2.values()[n] - (t * l2v - y * sv - x * omv);
    }
    Ok((Field2D::from_raw(g, rt), Field2D::from_raw(g, r1), Field2D::from_raw(g, r2)))
}

/// The same identities evaluated on an exact jet at `p`; returns
/// `[res_t, res_1, res_2]`.
pub fn weighted_derivative_residual_exact(w: &Jet, p: Point) -> [f64; 3] {
    let [t, x1, x2] = p;
    let rr = t * t - x1 * x1 - x2 * x2;
    let s = gamma_jet(VectorFieldId::S, w, p).value();
    let l1 = gamma_jet(VectorFieldId::L1, w, p).value();
    let l2 = gamma_jet(VectorFieldId::L2, w, p).value();
    let om = gamma_jet(VectorFieldId::Omega12, w, p).value();
    [
        rr * w.d(0) - (t * s - x1 * l1 - x2 * l2),
        rr * w.d(1) - (t * l1 - x1 * s + x2 * om),
        rr * w.d(2) - (t * l2 - x2 * s - x1 * om),
    ]
}

/// Residual of
/// `-□ = ((t-r)(t+r)/t²) ∂_t² + 2 (x^a/t²) ∂_t L_a - (1/t²) L^a L_a + (2/t) ∂_t - (x^a/t²) ∂_a`
/// applied to an exact jet at `p` (t >= 1).
pub fn wave_operator_decomposition_residual_exact(w: &Jet, p: Point) -> Result<f64> {
    let [t, x1, x2] = p;
    if t < 1.0 {
        return Err(Error::OutOfDomain(format!(
            "wave-operator decomposition needs t >= 1, got t = {t}"
        )));
    }
    let lhs = -box_op(w).value();
    let wtt = w.partial(2, 0, 0);
    let l1 = gamma_jet(VectorFieldId::L1, w, p);
    let l2 = gamma_jet(VectorFieldId::L2, w, p);
    let dt_l = [l1.d(0), l2.d(0)];
    let ll = gamma_jet(VectorFieldId::L1, &l1, p).value() + gamma_jet(VectorFieldId::L2, &l2, p).value();
    let x = [x1, x2];
    let r2 = x1 * x1 + x2 * x2;
    let t2 = t * t;
    let mut rhs = (t2 - r2) / t2 * wtt - ll / t2 + 2.0 / t * w.d(0);
    for a in 0..2 {
        rhs += 2.0 * x[a] / t2 * dt_l[a] - x[a] / t2 * w.d(a + 1);
    }
    Ok(lhs - rhs)
}

/// Grid version of the decomposition on a slice; every derivative is taken
/// with `scheme`, so the residual measures the scheme's consistency error.
pub fn wave_operator_decomposition_residual(f: &TimeJetField, scheme: Scheme) -> Result<Field2D> {
    let t = f.t;
    if t < 1.0 {
        return Err(Error::OutOfDomain(format!(
            "wave-operator decomposition needs t >= 1, got t = {t}"
        )));
    }
    let g = *f.grid();
    let d = |h: &Field2D, a| spatial_derivative(h, a, scheme);
    let lap = d(&d(&f.w, Axis::X1)?, Axis::X1)?.add(&d(&d(&f.w, Axis::X2)?, Axis::X2)?)?;
    let l = [
        apply_gamma(VectorFieldId::L1, f, scheme)?,
        apply_gamma(VectorFieldId::L2, f, scheme)?,
    ];
    let dt_l = [
        apply_gamma_dt(VectorFieldId::L1, f, scheme)?,
        apply_gamma_dt(VectorFieldId::L2, f, scheme)?,
    ];
    // L_a (L_a w) = x_a ∂_t(L_a w) + t ∂_a(L_a w)
    let dl = [d(&l[0], Axis::X1)?, d(&l[1], Axis::X2)?];
    let dw = [d(&f.w, Axis::X1)?, d(&f.w, Axis::X2)?];
    let mut out = vec![0.0; g.len()];
    for (n, o) in out.iter_mut().enumerate() {
        let (x1, x2) = g.point(n);
        let x = [x1, x2];
        let r2 = x1 * x1 + x2 * x2;
        let t2 = t * t;
        let wtt = f.wtt.values()[n];
        let lhs = wtt - lap.values()[n];
        let mut rhs = (t2 - r2) / t2 * wtt + 2.0 / t * f.wt.values()[n];
        for a in 0..2 {
            let ll = x[a] * dt_l[a].values()[n] + t * dl[a].values()[n];
            rhs += 2.0 * x[a] / t2 * dt_l[a].values()[n] - ll / t2 - x[a] / t2 * dw[a].values()[n];
        }
        *o = lhs - rhs;
    }
    Ok(Field2D::from_raw(g, out))
}

/// Empirical Klainerman-Sobolev constant at time `t` and Γ-order `order <= 1`:
/// `sup|u(t)| ⟨t⟩^{1/2} / sup_{s <= 2t, |I| <= order} ‖Γ^I u(s)‖`.
///
/// `traj` must be time-ordered and reach `2t`; the slice nearest to `t` is
/// used for the numerator. A vanishing trajectory gives 0.
pub fn ks_ratio(traj: &[TimeJetField], t: f64, order: usize, scheme: Scheme) -> Result<f64> {
    if order > 1 {
        return Err(Error::UnsupportedOrder { requested: order, max: 1 });
    }
    let covered = traj.last().map(|s| s.t).unwrap_or(0.0);
    let tol = 1e-9 * (1.0 + 2.0 * t);
    if traj.is_empty() || covered + tol < 2.0 * t {
        return Err(Error::InsufficientCoverage { covered, needed: 2.0 * t });
    }
    let at = traj
        .iter()
        .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
        .expect("non-empty trajectory");
    let mask = RegionMask::all(*at.grid());
    let num = grid::sup_norm(&at.w, &mask)? * (1.0 + t * t).sqrt();
    let mut den: f64 = 0.0;
    for s in traj.iter().filter(|s| s.t <= 2.0 * t + tol) {
        den = den.max(grid::l2_norm(&s.w, &mask)?);
        if order == 1 {
            for id in VectorFieldId::ADMISSIBLE {
                den = den.max(grid::l2_norm(&apply_gamma(id, s, scheme)?, &mask)?);
            }
        }
    }
    if den == 0.0 {
        return Ok(0.0);
    }
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taylor::Jet;
    use proptest::prelude::*;

    fn sample_points(n: usize, seed: u64) -> Vec<Point> {
        // small deterministic LCG so the points are reproducible
        let mut s = seed;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64
        };
        (0..n)
            .map(|_| [1.0 + 4.0 * next(), 6.0 * next() - 3.0, 6.0 * next() - 3.0])
            .collect()
    }

    fn poly4(x: &[Jet; 3]) -> Jet {
        let [t, a, b] = *x;
        t * t * a * b - 3.0 * a * a * a * a + t * b * b * b + 0.5 * t * t * t * t - a * b + 2.0
    }

    fn trig(x: &[Jet; 3]) -> Jet {
        let [t, a, _] = *x;
        t.sin() * a.cos()
    }

    fn gauss(x: &[Jet; 3]) -> Jet {
        let [t, a, b] = *x;
        (-(a * a + b * b) * 0.5 + t * 0.3).exp() * (t * a - b).cos()
    }

    #[test]
    fn apply_gamma_examples() {
        let g = Grid2D::centered(64, 6.0).unwrap();
        let t = 1.3;
        let f = TimeJetField::from_fn(g, t, &|x: &[Jet; 3]| x[0] * x[0] - x[1] * x[1] - x[2] * x[2])
            .unwrap();
        // degree-2 polynomials are not periodic; compare away from the wrap
        let s = apply_gamma(VectorFieldId::S, &f, Scheme::Fd4).unwrap();
        let l1 = apply_gamma(VectorFieldId::L1, &TimeJetField::from_fn(g, t, &|x: &[Jet; 3]| x[0] * x[1]).unwrap(), Scheme::Fd4).unwrap();
        for i in 8..56 {
            for j in 8..56 {
                let (x, y) = (g.x(i), g.y(j));
                let w = t * t - x * x - y * y;
                assert!((s.at(i, j) - 2.0 * w).abs() < 1e-10);
                assert!((l1.at(i, j) - (x * x + t * t)).abs() < 1e-10);
            }
        }
        let radial = TimeJetField::from_fn(g, t, &|x: &[Jet; 3]| (-(x[1] * x[1] + x[2] * x[2])).exp())
            .unwrap();
        let om = apply_gamma(VectorFieldId::Omega12, &radial, Scheme::Spectral).unwrap();
        assert!(om.max_abs() < 1e-10);
    }

    #[test]
    fn commutators_with_box() {
        let pts = sample_points(100, 7);
        for id in VectorFieldId::ALL {
            for f in [&poly4 as &dyn SpacetimeFn, &trig, &gauss] {
                let r = commutator_residual(CommutatorCase::WithBox(id), f, &pts);
                assert!(r < 1e-11, "{id:?}: {r}");
            }
        }
    }

    #[test]
    fn pairwise_commutators_match_their_expansion() {
        let pts = sample_points(40, 11);
        for a in VectorFieldId::ALL {
            for b in VectorFieldId::ALL {
                for f in [&poly4 as &dyn SpacetimeFn, &gauss] {
                    let r = commutator_residual(CommutatorCase::Pair(a, b), f, &pts);
                    assert!(r < 1e-10, "[{a:?}, {b:?}]: {r}");
                }
                if a == b {
                    assert_eq!(commutator_residual(CommutatorCase::Pair(a, b), &gauss, &pts), 0.0);
                }
            }
        }
    }

    #[test]
    fn weighted_derivative_identities_on_jets() {
        for p in sample_points(50, 3) {
            for f in [&poly4 as &dyn SpacetimeFn, &trig, &gauss] {
                let j = f.jet_at(p);
                let r = weighted_derivative_residual_exact(&j, p);
                let scale = 1.0 + (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]) * j.max_partial();
                for v in r {
                    assert!(v.abs() < 1e-13 * scale, "{v}");
                }
            }
            // w = t and w = x1 reduce to polynomial identities
            let t = Jet::var(0, p);
            let x1 = Jet::var(1, p);
            assert!(weighted_derivative_residual_exact(&t, p)[0].abs() < 1e-12);
            assert!(weighted_derivative_residual_exact(&x1, p)[1].abs() < 1e-12);
        }
    }

    #[test]
    fn weighted_derivative_identities_on_the_grid() {
        let g = Grid2D::centered(64, 8.0).unwrap();
        let f = TimeJetField::from_fn(g, 2.0, &gauss).unwrap();
        for scheme in [Scheme::Spectral, Scheme::Fd4] {
            let (a, b, c) = weighted_derivative_residual(&f, scheme).unwrap();
            for r in [a, b, c] {
                assert!(r.max_abs() < 1e-11);
            }
        }
    }

    #[test]
    fn wave_operator_decomposition_cases() {
        let p = [2.0, 0.7, -1.1];
        let t2 = |x: &[Jet; 3]| x[0] * x[0];
        let r2 = |x: &[Jet; 3]| x[1] * x[1] + x[2] * x[2];
        assert!(wave_operator_decomposition_residual_exact(&t2.jet_at(p), p).unwrap().abs() < 1e-12);
        for q in sample_points(30, 5) {
            for f in [&r2 as &dyn SpacetimeFn, &poly4, &gauss] {
                let r = wave_operator_decomposition_residual_exact(&f.jet_at(q), q).unwrap();
                assert!(r.abs() < 1e-11, "{r}");
            }
        }
        let zero = Jet::constant(0.0);
        assert_eq!(wave_operator_decomposition_residual_exact(&zero, p).unwrap(), 0.0);
        assert!(matches!(
            wave_operator_decomposition_residual_exact(&zero, [0.5, 0.0, 0.0]),
            Err(Error::OutOfDomain(_))
        ));
    }

    #[test]
    fn wave_operator_decomposition_on_grid_converges() {
        let err = |n: usize| {
            let g = Grid2D::centered(n, 8.0).unwrap();
            let f = TimeJetField::from_fn(g, 1.5, &gauss).unwrap();
            wave_operator_decomposition_residual(&f, Scheme::Fd4).unwrap().max_abs()
        };
        let order = (err(64) / err(128)).log2();
        assert!(order > 3.5, "order {order}");
    }

    #[test]
    fn ks_ratio_cases() {
        let g = Grid2D::centered(32, 4.0).unwrap();
        let zero: Vec<TimeJetField> = (0..5)
            .map(|k| TimeJetField::from_fn(g, k as f64, &|_: &[Jet; 3]| Jet::constant(0.0)).unwrap())
            .collect();
        assert_eq!(ks_ratio(&zero, 2.0, 1, Scheme::Spectral).unwrap(), 0.0);
        assert!(matches!(
            ks_ratio(&zero, 3.0, 1, Scheme::Spectral),
            Err(Error::InsufficientCoverage { .. })
        ));
        let traj: Vec<TimeJetField> = (0..5)
            .map(|k| TimeJetField::from_fn(g, k as f64 * 0.5, &gauss).unwrap())
            .collect();
        let a = ks_ratio(&traj, 1.0, 1, Scheme::Spectral).unwrap();
        let doubled: Vec<_> = traj.iter().map(|s| s.scaled(2.0)).collect();
        let b = ks_ratio(&doubled, 1.0, 1, Scheme::Spectral).unwrap();
        assert!((a - b).abs() < 1e-14 * a);
    }

    #[test]
    fn commutator_table_is_antisymmetric() {
        for a in VectorFieldId::ALL {
            for b in VectorFieldId::ALL {
                let ab = commutator_expansion(a, b);
                let ba = commutator_expansion(b, a);
                assert_eq!(ab.len(), ba.len());
                for ((c1, g1), (c2, g2)) in ab.iter().zip(&ba) {
                    assert_eq!(g1, g2);
                    assert_eq!(*c1, -c2);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn apply_gamma_is_linear(a in -2.0f64..2.0, b in -2.0f64..2.0, idx in 0usize..7) {
            let id = VectorFieldId::ALL[idx];
            let g = Grid2D::centered(32, 5.0).unwrap();
            let f = TimeJetField::from_fn(g, 0.8, &gauss).unwrap();
            let h = TimeJetField::from_fn(g, 0.8, &trig).unwrap();
            let comb = TimeJetField::new(
                0.8,
                f.w.scaled(a).add(&h.w.scaled(b)).unwrap(),
                f.wt.scaled(a).add(&h.wt.scaled(b)).unwrap(),
                f.wtt.scaled(a).add(&h.wtt.scaled(b)).unwrap(),
                WttSource::Exact,
            ).unwrap();
            let lhs = apply_gamma(id, &comb, Scheme::Spectral).unwrap();
            let rhs = apply_gamma(id, &f, Scheme::Spectral).unwrap().scaled(a)
                .add(&apply_gamma(id, &h, Scheme::Spectral).unwrap().scaled(b)).unwrap();
            prop_assert!(lhs.sub(&rhs).unwrap().max_abs() < 1e-11 * (1.0 + rhs.max_abs()));
        }
    }
}
