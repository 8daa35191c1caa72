//! Uniform periodic grids, scalar fields, derivative operators and region masks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral;

/// Uniform Cartesian grid; node `(i, j)` sits at `(x0 + i dx, y0 + j dy)`.
///
/// Spectral operators treat the domain as periodic with periods
/// `nx * dx` and `ny * dy`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
    pub x0: f64,
    pub y0: f64,
}

impl Grid2D {
    pub fn new(nx: usize, ny: usize, dx: f64, dy: f64, x0: f64, y0: f64) -> Result<Self> {
        for (name, n) in [("nx", nx), ("ny", ny)] {
            if n < 16 || !n.is_power_of_two() {
                return Err(Error::InvalidGrid(format!(
                    "{name} = {n} must be a power of two >= 16"
                )));
            }
        }
        if !(dx > 0.0 && dy > 0.0 && dx.is_finite() && dy.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "spacings must be positive, got dx = {dx}, dy = {dy}"
            )));
        }
        if !(x0.is_finite() && y0.is_finite()) {
            return Err(Error::InvalidGrid("corner must be finite".into()));
        }
        Ok(Self { nx, ny, dx, dy, x0, y0 })
    }

    /// Square `n x n` grid on `[-half_width, half_width)^2`; the origin is a node.
    pub fn centered(n: usize, half_width: f64) -> Result<Self> {
        let d = 2.0 * half_width / n as f64;
        Self::new(n, n, d, d, -half_width, -half_width)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        self.x0 + i as f64 * self.dx
    }

    #[inline]
    pub fn y(&self, j: usize) -> f64 {
        self.y0 + j as f64 * self.dy
    }

    /// Coordinates of flat node index `n`.
    #[inline]
    pub fn point(&self, n: usize) -> (f64, f64) {
        (self.x(n % self.nx), self.y(n / self.nx))
    }

    #[inline]
    pub fn cell_area(&self) -> f64 {
        self.dx * self.dy
    }

    /// Periods (Lx, Ly).
    pub fn lengths(&self) -> (f64, f64) {
        (self.nx as f64 * self.dx, self.ny as f64 * self.dy)
    }

    /// Smallest distance from the origin to the edge of the sampled box.
    pub fn inner_half_width(&self) -> f64 {
        let xmax = self.x(self.nx - 1);
        let ymax = self.y(self.ny - 1);
        [-self.x0, xmax, -self.y0, ymax]
            .into_iter()
            .fold(f64::INFINITY, f64::min)
    }

    /// Indices of the node nearest to `(x, y)`, if inside the box.
    pub fn nearest(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let i = ((x - self.x0) / self.dx).round();
        let j = ((y - self.y0) / self.dy).round();
        if i < 0.0 || j < 0.0 || i >= self.nx as f64 || j >= self.ny as f64 {
            return None;
        }
        Some((i as usize, j as usize))
    }
}

/// Real samples on a grid. Fields built through the public constructors are
/// always finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Field2D {
    grid: Grid2D,
    values: Vec<f64>,
}

impl Field2D {
    pub fn zeros(grid: Grid2D) -> Self {
        Self { grid, values: vec![0.0; grid.len()] }
    }

    pub fn constant(grid: Grid2D, c: f64) -> Result<Self> {
        Self::from_values(grid, vec![c; grid.len()])
    }

    pub fn from_values(grid: Grid2D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidField(format!(
                "expected {} samples, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some(n) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidField(format!("sample {n} is not finite")));
        }
        Ok(Self { grid, values })
    }

    /// Sample `f(x, y)` at every node.
    pub fn from_fn(grid: Grid2D, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let values = (0..grid.len())
            .map(|n| {
                let (x, y) = grid.point(n);
                f(x, y)
            })
            .collect();
        Self::from_values(grid, values)
    }

    /// Unchecked constructor for internal kernels that cannot produce
    /// non-finite values from finite inputs.
    pub(crate) fn from_raw(grid: Grid2D, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    #[inline]
    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.idx(i, j)]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub(crate) fn check_same_grid(&self, other: &Field2D) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field2D {
        Field2D::from_raw(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    /// Pointwise `f(x, y, value)`.
    pub fn map_with_coords(&self, f: impl Fn(f64, f64, f64) -> f64) -> Field2D {
        let g = self.grid;
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(n, &v)| {
                let (x, y) = g.point(n);
                f(x, y, v)
            })
            .collect();
        Field2D::from_raw(g, values)
    }

    pub fn zip_map(&self, other: &Field2D, f: impl Fn(f64, f64) -> f64) -> Result<Field2D> {
        self.check_same_grid(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Field2D::from_raw(self.grid, values))
    }

    pub fn add(&self, other: &Field2D) -> Result<Field2D> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field2D) -> Result<Field2D> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Field2D) -> Result<Field2D> {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scaled(&self, c: f64) -> Field2D {
        self.map(|v| c * v)
    }

    /// `self += a * x`.
    pub fn axpy(&mut self, a: f64, x: &Field2D) -> Result<()> {
        self.check_same_grid(x)?;
        for (s, v) in self.values.iter_mut().zip(&x.values) {
            *s += a * v;
        }
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Bilinear interpolation at an arbitrary point inside the sampled box.
    pub fn interpolate(&self, x: f64, y: f64) -> Option<f64> {
        let g = &self.grid;
        let fx = (x - g.x0) / g.dx;
        let fy = (y - g.y0) / g.dy;
        if fx < 0.0 || fy < 0.0 || fx > (g.nx - 1) as f64 || fy > (g.ny - 1) as f64 {
            return None;
        }
        let i = (fx.floor() as usize).min(g.nx - 2);
        let j = (fy.floor() as usize).min(g.ny - 2);
        let sx = fx - i as f64;
        let sy = fy - j as f64;
        let v00 = self.at(i, j);
        let v10 = self.at(i + 1, j);
        let v01 = self.at(i, j + 1);
        let v11 = self.at(i + 1, j + 1);
        Some(
            (1.0 - sx) * (1.0 - sy) * v00
                + sx * (1.0 - sy) * v10
                + (1.0 - sx) * sy * v01
                + sx * sy * v11,
        )
    }
}

/// Spatial axis: `X1` is the fast (x) direction, `X2` the slow (y) one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    X1,
    X2,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X1 => 0,
            Axis::X2 => 1,
        }
    }

    pub fn from_index(a: usize) -> Axis {
        if a == 0 {
            Axis::X1
        } else {
            Axis::X2
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    #[default]
    Spectral,
    Fd4,
}

/// Discrete `∂_a f`.
pub fn spatial_derivative(f: &Field2D, axis: Axis, scheme: Scheme) -> Result<Field2D> {
    if !f.is_finite() {
        return Err(Error::InvalidField("input contains non-finite samples".into()));
    }
    Ok(match scheme {
        Scheme::Spectral => spectral_derivative(f, axis),
        Scheme::Fd4 => fd4_derivative(f, axis),
    })
}

fn spectral_derivative(f: &Field2D, axis: Axis) -> Field2D {
    let ops = spectral::ops(f.grid());
    let spec = ops.forward_real(f.values());
    let a = axis.index();
    let d = ops.multiply(&spec, |s| ops.ik(s, a));
    Field2D::from_raw(*f.grid(), ops.inverse_real(d))
}

fn fd4_derivative(f: &Field2D, axis: Axis) -> Field2D {
    let g = *f.grid();
    let v = f.values();
    let mut out = vec![0.0; g.len()];
    match axis {
        Axis::X1 => {
            let c = 1.0 / (12.0 * g.dx);
            let n = g.nx;
            for j in 0..g.ny {
                let row = &v[j * n..(j + 1) * n];
                for i in 0..n {
                    let ip1 = row[(i + 1) % n];
                    let ip2 = row[(i + 2) % n];
                    let im1 = row[(i + n - 1) % n];
                    let im2 = row[(i + n - 2) % n];
                    out[j * n + i] = c * (-ip2 + 8.0 * ip1 - 8.0 * im1 + im2);
                }
            }
        }
        Axis::X2 => {
            let c = 1.0 / (12.0 * g.dy);
            let n = g.ny;
            let nx = g.nx;
            for j in 0..n {
                let jp1 = (j + 1) % n;
                let jp2 = (j + 2) % n;
                let jm1 = (j + n - 1) % n;
                let jm2 = (j + n - 2) % n;
                for i in 0..nx {
                    out[j * nx + i] = c
                        * (-v[jp2 * nx + i] + 8.0 * v[jp1 * nx + i] - 8.0 * v[jm1 * nx + i]
                            + v[jm2 * nx + i]);
                }
            }
        }
    }
    Field2D::from_raw(g, out)
}

/// Spectral Laplacian.
pub fn laplacian(f: &Field2D) -> Field2D {
    let ops = spectral::ops(f.grid());
    let spec = ops.forward_real(f.values());
    let d = ops.multiply(&spec, |s| (-ops.k_squared(s)).into());
    Field2D::from_raw(*f.grid(), ops.inverse_real(d))
}

/// `Δf` with the chosen scheme; fd4 uses the periodic five-point second
/// difference on each axis.
pub fn laplacian_with(f: &Field2D, scheme: Scheme) -> Result<Field2D> {
    if !f.is_finite() {
        return Err(Error::InvalidField("input contains non-finite samples".into()));
    }
    if scheme == Scheme::Spectral {
        return Ok(laplacian(f));
    }
    let g = *f.grid();
    let v = f.values();
    let (cx, cy) = (1.0 / (12.0 * g.dx * g.dx), 1.0 / (12.0 * g.dy * g.dy));
    let (nx, ny) = (g.nx, g.ny);
    let mut out = vec![0.0; g.len()];
    for j in 0..ny {
        let js = [(j + ny - 2) % ny, (j + ny - 1) % ny, (j + 1) % ny, (j + 2) % ny];
        for i in 0..nx {
            let is = [(i + nx - 2) % nx, (i + nx - 1) % nx, (i + 1) % nx, (i + 2) % nx];
            let c = v[j * nx + i];
            let xx = -v[j * nx + is[0]] + 16.0 * v[j * nx + is[1]] - 30.0 * c + 16.0 * v[j * nx + is[2]]
                - v[j * nx + is[3]];
            let yy = -v[js[0] * nx + i] + 16.0 * v[js[1] * nx + i] - 30.0 * c + 16.0 * v[js[2] * nx + i]
                - v[js[3] * nx + i];
            out[j * nx + i] = cx * xx + cy * yy;
        }
    }
    Ok(Field2D::from_raw(g, out))
}

/// Spectral gradient `(∂_1 f, ∂_2 f)` with one forward and one inverse transform.
pub fn gradient(f: &Field2D) -> (Field2D, Field2D) {
    let ops = spectral::ops(f.grid());
    let spec = ops.forward_real(f.values());
    // i k1 F + i (i k2 F) inverts to ∂_1 f + i ∂_2 f
    let packed = ops.multiply(&spec, |s| {
        let (k1, k2) = ops.k_odd(s);
        num_complex::Complex64::new(-k2, k1)
    });
    let (d1, d2) = ops.inverse_pair(packed);
    (Field2D::from_raw(*f.grid(), d1), Field2D::from_raw(*f.grid(), d2))
}

/// Region descriptors for masks; cones are evaluated at the mask's time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Region {
    /// r <= c t
    InteriorCone { c: f64 },
    /// r >= c t
    ExteriorCone { c: f64 },
    /// r <= radius
    Ball { radius: f64 },
    /// inner <= r <= outer
    Annulus { inner: f64, outer: f64 },
    All,
}

impl Region {
    pub fn contains(&self, r: f64, t: f64) -> bool {
        match *self {
            Region::InteriorCone { c } => r <= c * t,
            Region::ExteriorCone { c } => r >= c * t,
            Region::Ball { radius } => r <= radius,
            Region::Annulus { inner, outer } => inner <= r && r <= outer,
            Region::All => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionMask {
    grid: Grid2D,
    region: Region,
    t: f64,
    indicator: Vec<bool>,
}

impl RegionMask {
    pub fn new(grid: Grid2D, region: Region, t: f64) -> Self {
        let indicator = (0..grid.len())
            .map(|n| {
                let (x, y) = grid.point(n);
                region.contains(x.hypot(y), t)
            })
            .collect();
        Self { grid, region, t, indicator }
    }

    pub fn all(grid: Grid2D) -> Self {
        Self::new(grid, Region::All, 0.0)
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn region(&self) -> Region {
        self.region
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    #[inline]
    pub fn contains(&self, n: usize) -> bool {
        self.indicator[n]
    }

    pub fn count(&self) -> usize {
        self.indicator.iter().filter(|&&b| b).count()
    }

    fn check(&self, f: &Field2D) -> Result<()> {
        if self.grid != *f.grid() {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }
}

/// Sum over rows in a fixed order so results do not depend on threading.
fn masked_sum(f: &Field2D, mask: &RegionMask, term: impl Fn(f64) -> f64) -> f64 {
    let g = f.grid();
    let v = f.values();
    let mut total = 0.0;
    for j in 0..g.ny {
        let mut row = 0.0;
        for i in 0..g.nx {
            let n = j * g.nx + i;
            if mask.contains(n) {
                row += term(v[n]);
            }
        }
        total += row;
    }
    total
}

/// `sqrt(Σ_mask f² dx dy)`.
pub fn l2_norm(f: &Field2D, mask: &RegionMask) -> Result<f64> {
    mask.check(f)?;
    Ok((masked_sum(f, mask, |v| v * v) * f.grid().cell_area()).sqrt())
}

/// `Σ_mask |f| dx dy`.
pub fn l1_norm(f: &Field2D, mask: &RegionMask) -> Result<f64> {
    mask.check(f)?;
    Ok(masked_sum(f, mask, f64::abs) * f.grid().cell_area())
}

/// `∫_mask f dx`, midpoint rule.
pub fn integral(f: &Field2D, mask: &RegionMask) -> Result<f64> {
    mask.check(f)?;
    Ok(masked_sum(f, mask, |v| v) * f.grid().cell_area())
}

pub fn sup_norm(f: &Field2D, mask: &RegionMask) -> Result<f64> {
    mask.check(f)?;
    let mut any = false;
    let mut m: f64 = 0.0;
    for (n, v) in f.values().iter().enumerate() {
        if mask.contains(n) {
            any = true;
            m = m.max(v.abs());
        }
    }
    if !any {
        return Err(Error::EmptyRegion);
    }
    Ok(m)
}

pub const MAX_DATA_ORDER: usize = 4;

/// Binomial coefficient for small arguments.
fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `| ⟨x⟩^w ∇^k f |` at every node, where `|∇^k f|²` sums the squares of all
/// ordered k-th partial derivatives (fd4).
fn weighted_gradient_power(f: &Field2D, k: usize, weight_power: usize) -> Field2D {
    // partials[a] = ∂_1^a ∂_2^(k-a) f
    let mut acc = vec![0.0; f.grid().len()];
    for a in 0..=k {
        let mut d = f.clone();
        for _ in 0..a {
            d = fd4_derivative(&d, Axis::X1);
        }
        for _ in 0..(k - a) {
            d = fd4_derivative(&d, Axis::X2);
        }
        let mult = binomial(k, a);
        for (s, v) in acc.iter_mut().zip(d.values()) {
            *s += mult * v * v;
        }
    }
    let g = *f.grid();
    let values = acc
        .into_iter()
        .enumerate()
        .map(|(n, s)| {
            let (x, y) = g.point(n);
            let jw = (1.0 + x * x + y * y).sqrt().powi(weight_power as i32);
            jw * s.sqrt()
        })
        .collect();
    Field2D::from_raw(g, values)
}

/// Discrete smallness functional for initial data, truncated at derivative
/// order `max_order` (at most [`MAX_DATA_ORDER`]):
///
/// Σ_k ‖⟨x⟩^k ∇^k u0‖_{L¹∩L²} + ‖⟨x⟩^{k+1} ∇^k v0‖ + ‖⟨x⟩^{k+1} ∇^k u1‖_{L¹∩L²}
///   + ‖⟨x⟩^{k+2} ∇^k v1‖,
///
/// with the L¹∩L² norm taken as the larger of the two norms.
pub fn weighted_data_norm(
    u0: &Field2D,
    u1: &Field2D,
    v0: &Field2D,
    v1: &Field2D,
    max_order: usize,
) -> Result<f64> {
    if max_order > MAX_DATA_ORDER {
        return Err(Error::UnsupportedOrder { requested: max_order, max: MAX_DATA_ORDER });
    }
    for f in [u1, v0, v1] {
        u0.check_same_grid(f)?;
    }
    let mask = RegionMask::all(*u0.grid());
    let l1l2 = |f: &Field2D| -> Result<f64> { Ok(l1_norm(f, &mask)?.max(l2_norm(f, &mask)?)) };
    let mut total = 0.0;
    for k in 0..=max_order {
        total += l1l2(&weighted_gradient_power(u0, k, k))?;
        total += l2_norm(&weighted_gradient_power(v0, k, k + 1), &mask)?;
        total += l1l2(&weighted_gradient_power(u1, k, k + 1))?;
        total += l2_norm(&weighted_gradient_power(v1, k, k + 2), &mask)?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid(n: usize, half: f64) -> Grid2D {
        Grid2D::centered(n, half).unwrap()
    }

    #[test]
    fn grid_rejects_bad_sizes() {
        assert!(Grid2D::new(15, 16, 1.0, 1.0, 0.0, 0.0).is_err());
        assert!(Grid2D::new(24, 16, 1.0, 1.0, 0.0, 0.0).is_err());
        assert!(Grid2D::new(16, 16, 0.0, 1.0, 0.0, 0.0).is_err());
        assert!(Grid2D::new(16, 32, 1.0, 0.5, 0.0, 0.0).is_ok());
    }

    #[test]
    fn node_coordinates_are_exact() {
        let g = Grid2D::new(16, 32, 0.25, 0.5, -2.0, 1.0).unwrap();
        assert_eq!(g.x(3), -2.0 + 3.0 * 0.25);
        assert_eq!(g.y(5), 1.0 + 5.0 * 0.5);
        assert_eq!(g.point(g.idx(3, 5)), (g.x(3), g.y(5)));
        let c = grid(32, 4.0);
        assert_eq!(c.point(c.idx(16, 16)), (0.0, 0.0));
    }

    #[test]
    fn non_finite_samples_are_rejected() {
        let g = grid(16, 1.0);
        let mut v = vec![0.0; g.len()];
        v[7] = f64::NAN;
        assert!(matches!(Field2D::from_values(g, v), Err(Error::InvalidField(_))));
    }

    #[test]
    fn derivative_of_constant_is_zero() {
        let g = grid(32, 3.0);
        let f = Field2D::constant(g, 1.0).unwrap();
        for scheme in [Scheme::Spectral, Scheme::Fd4] {
            for axis in [Axis::X1, Axis::X2] {
                let d = spatial_derivative(&f, axis, scheme).unwrap();
                assert!(d.max_abs() < 1e-13);
            }
        }
    }

    #[test]
    fn spectral_derivative_of_resolved_mode() {
        let g = grid(64, 5.0);
        let l = g.lengths().0;
        let kk = 2.0 * PI / l;
        let f = Field2D::from_fn(g, |x, _| (kk * x).sin()).unwrap();
        let d = spatial_derivative(&f, Axis::X1, Scheme::Spectral).unwrap();
        let exact = Field2D::from_fn(g, |x, _| kk * (kk * x).cos()).unwrap();
        assert!(d.sub(&exact).unwrap().max_abs() < 1e-12 * kk);
        let d2 = spatial_derivative(&f, Axis::X2, Scheme::Spectral).unwrap();
        assert!(d2.max_abs() < 1e-12);
    }

    #[test]
    fn fd4_converges_at_fourth_order() {
        let err = |n: usize| {
            let g = grid(n, 5.0);
            let kk = 2.0 * PI / g.lengths().1;
            let f = Field2D::from_fn(g, |_, y| (kk * y).sin()).unwrap();
            let d = spatial_derivative(&f, Axis::X2, Scheme::Fd4).unwrap();
            let exact = Field2D::from_fn(g, |_, y| kk * (kk * y).cos()).unwrap();
            d.sub(&exact).unwrap().max_abs()
        };
        let order = (err(16) / err(32)).log2();
        assert!(order >= 3.5, "measured order {order}");
    }

    #[test]
    fn derivative_mismatch_and_nonfinite_errors() {
        let g = grid(16, 1.0);
        let f = Field2D::from_raw(g, vec![f64::INFINITY; g.len()]);
        assert!(matches!(
            spatial_derivative(&f, Axis::X1, Scheme::Fd4),
            Err(Error::InvalidField(_))
        ));
        let a = Field2D::zeros(g);
        let b = Field2D::zeros(grid(32, 1.0));
        assert_eq!(a.add(&b), Err(Error::GridMismatch));
        assert_eq!(l2_norm(&a, &RegionMask::all(*b.grid())), Err(Error::GridMismatch));
    }

    #[test]
    fn l2_norm_cases() {
        let g = grid(128, 8.0);
        let all = RegionMask::all(g);
        assert_eq!(l2_norm(&Field2D::zeros(g), &all).unwrap(), 0.0);
        let one = Field2D::constant(g, 1.0).unwrap();
        let (lx, ly) = g.lengths();
        assert!((l2_norm(&one, &all).unwrap() - (lx * ly).sqrt()).abs() < 1e-12);
        // ∫ exp(-r²) dx = π
        let gauss = Field2D::from_fn(g, |x, y| (-(x * x + y * y) / 2.0).exp()).unwrap();
        assert!((l2_norm(&gauss, &all).unwrap() - PI.sqrt()).abs() < 1e-8);
    }

    #[test]
    fn sup_norm_cases() {
        let g = grid(64, 4.0);
        let all = RegionMask::all(g);
        assert_eq!(sup_norm(&Field2D::zeros(g), &all).unwrap(), 0.0);
        let mut v = vec![0.5; g.len()];
        v[100] = -3.0;
        assert_eq!(sup_norm(&Field2D::from_values(g, v).unwrap(), &all).unwrap(), 3.0);
        let empty = RegionMask::new(g, Region::Annulus { inner: 100.0, outer: 101.0 }, 0.0);
        assert_eq!(sup_norm(&Field2D::zeros(g), &empty), Err(Error::EmptyRegion));
    }

    #[test]
    fn sup_norm_on_annulus_matches_node_maximum() {
        let g = grid(64, 4.0);
        let f = Field2D::from_fn(g, |x, y| (-(x * x + y * y)).exp()).unwrap();
        let ann = RegionMask::new(g, Region::Annulus { inner: 1.0, outer: 2.0 }, 0.0);
        // brute force: smallest sampled radius inside the annulus
        let rmin = (0..g.len())
            .map(|n| {
                let (x, y) = g.point(n);
                x.hypot(y)
            })
            .filter(|&r| (1.0..=2.0).contains(&r))
            .fold(f64::INFINITY, f64::min);
        let got = sup_norm(&f, &ann).unwrap();
        assert!((got - (-rmin * rmin).exp()).abs() < 1e-15);
        // the analytic maximum on the annulus is e^{-1}, attained at r = 1 (a node here)
        assert!((got - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn l2_squared_is_additive_over_disjoint_masks() {
        let g = grid(64, 6.0);
        let f = Field2D::from_fn(g, |x, y| (x - 0.3 * y).sin() * (-(x * x + y * y) / 8.0).exp())
            .unwrap();
        let inner = RegionMask::new(g, Region::Ball { radius: 2.5 }, 0.0);
        let outer = RegionMask::new(g, Region::ExteriorCone { c: 1.0 }, 2.6);
        let all = RegionMask::all(g);
        let sum = l2_norm(&f, &inner).unwrap().powi(2) + l2_norm(&f, &outer).unwrap().powi(2);
        let gap_band = RegionMask::new(g, Region::Annulus { inner: 2.5000001, outer: 2.5999999 }, 0.0);
        let band = l2_norm(&f, &gap_band).unwrap().powi(2);
        assert!((sum + band - l2_norm(&f, &all).unwrap().powi(2)).abs() < 1e-12);
    }

    #[test]
    fn weighted_data_norm_cases() {
        let g = grid(64, 6.0);
        let z = Field2D::zeros(g);
        assert_eq!(weighted_data_norm(&z, &z, &z, &z, 2).unwrap(), 0.0);
        assert!(matches!(
            weighted_data_norm(&z, &z, &z, &z, 5),
            Err(Error::UnsupportedOrder { .. })
        ));
        let eps = 0.01;
        let bump = Field2D::from_fn(g, |x, y| (-(x * x + y * y) / 2.0).exp()).unwrap();
        let u0 = bump.scaled(eps);
        let all = RegionMask::all(g);
        let expected = eps * l1_norm(&bump, &all).unwrap().max(l2_norm(&bump, &all).unwrap());
        let got = weighted_data_norm(&u0, &z, &z, &z, 0).unwrap();
        assert!((got - expected).abs() < 1e-15);
        // homogeneity
        let n1 = weighted_data_norm(&bump, &bump, &bump, &bump, 3).unwrap();
        let n2 = weighted_data_norm(&u0, &u0, &u0, &u0, 3).unwrap();
        assert!((n2 - eps * n1).abs() < 1e-12 * n1);
    }

    #[test]
    fn masks_follow_their_descriptor() {
        let g = grid(32, 4.0);
        let t = 1.5;
        let m = RegionMask::new(g, Region::InteriorCone { c: 2.0 }, t);
        for n in 0..g.len() {
            let (x, y) = g.point(n);
            assert_eq!(m.contains(n), x.hypot(y) <= 2.0 * t);
        }
        assert_eq!(RegionMask::all(g).count(), g.len());
    }

    #[test]
    fn bilinear_interpolation_is_exact_for_bilinear_functions() {
        let g = grid(32, 4.0);
        let f = Field2D::from_fn(g, |x, y| 1.0 + 2.0 * x - y + 0.5 * x * y).unwrap();
        let v = f.interpolate(0.37, -1.23).unwrap();
        assert!((v - (1.0 + 0.74 + 1.23 + 0.5 * 0.37 * -1.23)).abs() < 1e-12);
        assert!(f.interpolate(10.0, 0.0).is_none());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn derivative_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, s in 0.1f64..2.0) {
                let g = grid(32, 4.0);
                let f = Field2D::from_fn(g, |x, y| (s * x).sin() * (-(y * y) / 4.0).exp()).unwrap();
                let h = Field2D::from_fn(g, |x, y| (x * y / 3.0).cos()).unwrap();
                let mut comb = f.scaled(a);
                comb.axpy(b, &h).unwrap();
                for scheme in [Scheme::Spectral, Scheme::Fd4] {
                    let lhs = spatial_derivative(&comb, Axis::X1, scheme).unwrap();
                    let mut rhs = spatial_derivative(&f, Axis::X1, scheme).unwrap().scaled(a);
                    rhs.axpy(b, &spatial_derivative(&h, Axis::X1, scheme).unwrap()).unwrap();
                    let scale = 1.0 + lhs.max_abs();
                    prop_assert!(lhs.sub(&rhs).unwrap().max_abs() < 1e-12 * scale);
                }
            }

            #[test]
            fn spectral_exact_on_single_modes(mx in -7i32..8, my in -7i32..8) {
                let g = grid(16, 2.0);
                let (l, _) = g.lengths();
                let k1 = 2.0 * PI * mx as f64 / l;
                let k2 = 2.0 * PI * my as f64 / l;
                let f = Field2D::from_fn(g, |x, y| (k1 * x + k2 * y).cos()).unwrap();
                let d = spatial_derivative(&f, Axis::X2, Scheme::Spectral).unwrap();
                let e = Field2D::from_fn(g, |x, y| -k2 * (k1 * x + k2 * y).sin()).unwrap();
                prop_assert!(d.sub(&e).unwrap().max_abs() <= 1e-12 * (1.0 + k2.abs()));
            }
        }
    }
}
