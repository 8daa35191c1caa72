//! Region-restricted weighted sup norms of a trajectory and log-log power-law
//! fits of the resulting time series.

use serde::{Deserialize, Serialize};

use crate::energies::japanese;
use crate::error::{Error, Result};
use crate::grid::{spatial_derivative, Axis, Field2D, Region, RegionMask, Scheme};
use crate::vectorfields::TimeJetField;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quantity {
    /// |v|
    V,
    /// |u|
    U,
    /// max(|∂_t u|, |∂_1 u|, |∂_2 u|)
    Du,
    /// largest second derivative of u, with `u_tt` taken from the slice;
    /// always restricted to the interior cone `r ≤ 2t`
    Ddu,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weight {
    None,
    /// ⟨t⟩
    T,
    /// ⟨t⟩^{1/2}
    THalf,
    /// ⟨t - r⟩^p ⟨t⟩^q
    Cone { p: f64, q: f64 },
}

impl Weight {
    pub fn at(&self, t: f64, r: f64) -> f64 {
        match *self {
            Weight::None => 1.0,
            Weight::T => japanese(t),
            Weight::THalf => japanese(t).sqrt(),
            Weight::Cone { p, q } => japanese(t - r).powf(p) * japanese(t).powf(q),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesSpec {
    pub id: String,
    pub quantity: Quantity,
    pub weight: Weight,
    pub region: Region,
}

impl SeriesSpec {
    pub fn new(id: &str, quantity: Quantity, weight: Weight, region: Region) -> Self {
        Self { id: id.to_string(), quantity, weight, region }
    }
}

/// Pointwise magnitude of the requested quantity.
fn magnitude(u: &TimeJetField, v: &TimeJetField, q: Quantity, scheme: Scheme) -> Result<Field2D> {
    u.w.check_same_grid(&v.w)?;
    let d = |f: &Field2D, a| spatial_derivative(f, a, scheme);
    let max_abs = |fs: &[&Field2D]| -> Field2D {
        let mut out = fs[0].map(f64::abs);
        for f in &fs[1..] {
            out = out.zip_map(f, |a, b| a.max(b.abs())).expect("same grid");
        }
        out
    };
    Ok(match q {
        Quantity::V => v.w.map(f64::abs),
        Quantity::U => u.w.map(f64::abs),
        Quantity::Du => {
            let (d1, d2) = (d(&u.w, Axis::X1)?, d(&u.w, Axis::X2)?);
            max_abs(&[&u.wt, &d1, &d2])
        }
        Quantity::Ddu => {
            let (d1, d2) = (d(&u.w, Axis::X1)?, d(&u.w, Axis::X2)?);
            let d11 = d(&d1, Axis::X1)?;
            let d12 = d(&d1, Axis::X2)?;
            let d22 = d(&d2, Axis::X2)?;
            let dt1 = d(&u.wt, Axis::X1)?;
            let dt2 = d(&u.wt, Axis::X2)?;
            max_abs(&[&u.wtt, &dt1, &dt2, &d11, &d12, &d22])
        }
    })
}

/// Sup over the masked nodes of `weight × quantity` on one slice.
pub fn weighted_sup(u: &TimeJetField, v: &TimeJetField, spec: &SeriesSpec, scheme: Scheme) -> Result<f64> {
    let t = u.t;
    let g = *u.grid();
    let mask = RegionMask::new(g, spec.region, t);
    let interior = RegionMask::new(g, Region::InteriorCone { c: 2.0 }, t);
    let m = magnitude(u, v, spec.quantity, scheme)?;
    let mut best: Option<f64> = None;
    for n in 0..g.len() {
        if !mask.contains(n) || (spec.quantity == Quantity::Ddu && !interior.contains(n)) {
            continue;
        }
        let (x, y) = g.point(n);
        let val = spec.weight.at(t, x.hypot(y)) * m.values()[n];
        best = Some(best.map_or(val, |b: f64| b.max(val)));
    }
    best.ok_or(Error::EmptyRegion)
}

/// `(t, weighted sup)` per slice; each slice is the pair `(u, v)`.
pub fn weighted_sup_series(
    traj: &[(TimeJetField, TimeJetField)],
    spec: &SeriesSpec,
    scheme: Scheme,
) -> Result<Vec<(f64, f64)>> {
    traj.iter().map(|(u, v)| Ok((u.t, weighted_sup(u, v, spec, scheme)?))).collect()
}

/// Least-squares fit `value ≈ amplitude · t^exponent` on a window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub series_id: String,
    pub exponent: f64,
    pub amplitude: f64,
    pub t_lo: f64,
    pub t_hi: f64,
    pub rsq: f64,
    pub samples: usize,
}

impl DecayFit {
    pub const CSV_HEADER: [&'static str; 6] = ["series_id", "exponent", "amplitude", "t_lo", "t_hi", "rsq"];
    pub const MIN_SAMPLES: usize = 8;

    pub fn csv_record(&self) -> [String; 6] {
        [
            self.series_id.clone(),
            format!("{}", self.exponent),
            format!("{}", self.amplitude),
            format!("{}", self.t_lo),
            format!("{}", self.t_hi),
            format!("{}", self.rsq),
        ]
    }
}

/// `[t_end / 4, t_end]`
pub fn default_window(t_end: f64) -> (f64, f64) {
    (0.25 * t_end, t_end)
}

pub fn fit_power_law(series: &[(f64, f64)], window: (f64, f64), id: &str) -> Result<DecayFit> {
    let (lo, hi) = window;
    if !(lo < hi) || !(lo > 0.0) {
        return Err(Error::Unfittable(format!("window [{lo}, {hi}] must satisfy 0 < t_lo < t_hi")));
    }
    let pts: Vec<(f64, f64)> = series.iter().copied().filter(|&(t, _)| t >= lo && t <= hi).collect();
    if pts.len() < DecayFit::MIN_SAMPLES {
        return Err(Error::Unfittable(format!(
            "{} samples in [{lo}, {hi}], need at least {}",
            pts.len(),
            DecayFit::MIN_SAMPLES
        )));
    }
    if let Some(&(t, y)) = pts.iter().find(|&&(_, y)| !(y > 0.0) || !y.is_finite()) {
        return Err(Error::Unfittable(format!("value {y} at t = {t} is not positive")));
    }
    let xs: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let ss_res: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - icpt - slope * x).powi(2)).sum();
    let rsq = if syy > 0.0 { (1.0 - ss_res / syy).clamp(0.0, 1.0) } else { 1.0 };
    Ok(DecayFit {
        series_id: id.to_string(),
        exponent: slope,
        amplitude: icpt.exp(),
        t_lo: lo,
        t_hi: hi,
        rsq,
        samples: pts.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{sup_norm, Grid2D};
    use crate::linear::{propagate_free, PropagatorKind};
    use crate::vectorfields::WttSource;
    use proptest::prelude::*;

    fn times() -> Vec<f64> {
        (1..=40).map(|k| k as f64 * 2.5).collect()
    }

    #[test]
    fn exact_power_law() {
        let s: Vec<_> = times().into_iter().map(|t| (t, 3.0 / t)).collect();
        let f = fit_power_law(&s, (25.0, 100.0), "y").unwrap();
        assert!((f.exponent + 1.0).abs() < 1e-6);
        assert!((f.amplitude - 3.0).abs() < 1e-6);
        assert!(f.rsq > 0.999999);
    }

    #[test]
    fn perturbed_power_law() {
        let s: Vec<_> = times().into_iter().map(|t| (t, t.powf(-0.5) * (2.0 + 0.01 * t.ln().sin()))).collect();
        let f = fit_power_law(&s, (25.0, 100.0), "y").unwrap();
        assert!((f.exponent + 0.5).abs() < 0.01);
    }

    #[test]
    fn constant_and_bad_series() {
        let s: Vec<_> = times().into_iter().map(|t| (t, 0.7)).collect();
        let f = fit_power_law(&s, (25.0, 100.0), "c").unwrap();
        assert!(f.exponent.abs() < 1e-9);
        let mut bad = s.clone();
        bad[20].1 = 0.0;
        assert!(matches!(fit_power_law(&bad, (25.0, 100.0), "b"), Err(Error::Unfittable(_))));
        assert!(matches!(fit_power_law(&s, (99.0, 100.0), "b"), Err(Error::Unfittable(_))));
    }

    fn slice(w: Field2D, wt: Field2D, t: f64) -> TimeJetField {
        let g = *w.grid();
        TimeJetField::new(t, w, wt, Field2D::zeros(g), WttSource::Exact).unwrap()
    }

    #[test]
    fn zero_and_unweighted_series() {
        let g = Grid2D::centered(32, 4.0).unwrap();
        let z = slice(Field2D::zeros(g), Field2D::zeros(g), 1.0);
        let spec = SeriesSpec::new("v", Quantity::V, Weight::T, Region::All);
        assert_eq!(weighted_sup(&z, &z, &spec, Scheme::Spectral).unwrap(), 0.0);
        let f = Field2D::from_fn(g, |x, y| (x - 0.3 * y).sin() * (-(x * x + y * y) / 3.0).exp()).unwrap();
        let s = slice(f.clone(), Field2D::zeros(g), 2.0);
        let spec = SeriesSpec::new("u", Quantity::U, Weight::None, Region::All);
        let got = weighted_sup(&s, &z, &spec, Scheme::Spectral).unwrap();
        assert_eq!(got, sup_norm(&f, &RegionMask::all(g)).unwrap());
        let spec = SeriesSpec::new("u", Quantity::U, Weight::None, Region::Ball { radius: 1e-9 });
        let off = Grid2D::new(32, 32, 0.25, 0.25, 0.1, 0.1).unwrap();
        let zo = slice(Field2D::zeros(off), Field2D::zeros(off), 0.0);
        assert!(matches!(weighted_sup(&zo, &zo, &spec, Scheme::Spectral), Err(Error::EmptyRegion)));
    }

    #[test]
    fn free_klein_gordon_decays_like_one_over_t() {
        let g = Grid2D::centered(256, 40.0).unwrap();
        let v0 = Field2D::from_fn(g, |x, y| (-(x * x + y * y)).exp()).unwrap();
        let v1 = Field2D::zeros(g);
        let spec = SeriesSpec::new("v", Quantity::V, Weight::T, Region::All);
        let mut s = Vec::new();
        for k in 1..=30 {
            let t = k as f64;
            let (v, vt) = propagate_free(PropagatorKind::KLEIN_GORDON, &v0, &v1, t).unwrap();
            let sl = slice(v, vt, t);
            s.push((t, weighted_sup(&sl, &sl, &spec, Scheme::Spectral).unwrap()));
        }
        let late: Vec<f64> = s[14..].iter().map(|p| p.1).collect();
        let (mn, mx) = late.iter().fold((f64::MAX, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
        assert!(mx / mn < 1.4, "weighted series not flat: {mn} .. {mx}");
    }

    proptest! {
        #[test]
        fn exponent_is_scale_invariant(c in 0.01..100.0f64, p in -2.0..0.5f64) {
            let s: Vec<_> = times().into_iter().map(|t| (t, t.powf(p) * (1.0 + 0.1 * (t * 0.3).sin()))).collect();
            let sc: Vec<_> = s.iter().map(|&(t, y)| (t, c * y)).collect();
            let a = fit_power_law(&s, (10.0, 100.0), "a").unwrap();
            let b = fit_power_law(&sc, (10.0, 100.0), "b").unwrap();
            prop_assert!((a.exponent - b.exponent).abs() < 1e-9);
        }
    }
}
