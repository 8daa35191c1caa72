//! One-dimensional quadrature: Gauss-Legendre rules and an adaptive driver.

use std::collections::{BinaryHeap, HashMap};
use std::sync::{Arc, Mutex, OnceLock};

/// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            // Chebyshev guess, then Newton on P_n
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    /// Integral of `f` over [a, b].
    pub fn integrate(&self, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
        let h = 0.5 * (b - a);
        let c = 0.5 * (b + a);
        let s: f64 = self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(c + h * x))
            .sum();
        h * s
    }

    /// Composite rule: [a, b] split into `panels` equal pieces.
    pub fn composite(&self, a: f64, b: f64, panels: usize, f: impl Fn(f64) -> f64) -> f64 {
        let h = (b - a) / panels as f64;
        (0..panels)
            .map(|p| {
                let lo = a + p as f64 * h;
                self.integrate(lo, lo + h, &f)
            })
            .sum()
    }
}

/// (P_n(x), P_n'(x)) by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Cached rule of order `n`.
pub fn rule(n: usize) -> Arc<GaussLegendre> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussLegendre>>>> = OnceLock::new();
    let mut map = CACHE
        .get_or_init(|| Mutex::new(HashMap::new()))
        .lock()
        .expect("quadrature cache poisoned");
    map.entry(n).or_insert_with(|| Arc::new(GaussLegendre::new(n))).clone()
}

/// Globally adaptive integration with a 10-point rule: the panel with the
/// largest error estimate (difference between the panel and its two halves)
/// is split until the summed estimate drops below `tol` or to round-off, or
/// a fixed panel budget is used up.
pub fn adaptive(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    const MAX_PANELS: usize = 20_000;
    let g = rule(10);
    let panel = |lo: f64, hi: f64| {
        let m = 0.5 * (lo + hi);
        let l = g.integrate(lo, m, f);
        let r = g.integrate(m, hi, f);
        let whole = g.integrate(lo, hi, f);
        Panel { lo, hi, value: l + r, err: (l + r - whole).abs() }
    };
    let mut heap = BinaryHeap::new();
    let first = panel(a, b);
    let mut total_err = first.err;
    let mut sum_abs = first.value.abs();
    heap.push(first);
    while heap.len() < MAX_PANELS {
        if total_err <= tol.max(32.0 * f64::EPSILON * sum_abs) {
            break;
        }
        let worst = heap.pop().expect("heap is never empty");
        let m = 0.5 * (worst.lo + worst.hi);
        let (l, r) = (panel(worst.lo, m), panel(m, worst.hi));
        total_err += l.err + r.err - worst.err;
        sum_abs += l.value.abs() + r.value.abs() - worst.value.abs();
        heap.push(l);
        heap.push(r);
    }
    // fixed summation order for reproducibility
    let mut panels = heap.into_vec();
    panels.sort_by(|p, q| p.lo.total_cmp(&q.lo));
    panels.iter().map(|p| p.value).sum()
}

struct Panel {
    lo: f64,
    hi: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Panel {
    fn eq(&self, o: &Self) -> bool {
        self.err.total_cmp(&o.err).is_eq()
    }
}

impl Eq for Panel {}

impl PartialOrd for Panel {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}

impl Ord for Panel {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.err.total_cmp(&o.err)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rules_integrate_polynomials_exactly() {
        for n in [1, 2, 5, 10, 16] {
            let g = GaussLegendre::new(n);
            let wsum: f64 = g.weights.iter().sum();
            assert!((wsum - 2.0).abs() < 1e-14, "n = {n}");
            // degree 2n - 1 monomial on [0, 1]
            let d = 2 * n - 1;
            let got = g.integrate(0.0, 1.0, |x| x.powi(d as i32));
            assert!((got - 1.0 / (d as f64 + 1.0)).abs() < 1e-14, "n = {n}");
        }
    }

    #[test]
    fn adaptive_handles_peaked_integrands() {
        // ∫_0^1 x^{-1/2} dx = 2, singular endpoint
        let got = adaptive(&|x: f64| x.powf(-0.5), 0.0, 1.0, 1e-10);
        assert!((got - 2.0).abs() < 1e-8);
        let got = adaptive(&|x: f64| 1.0 / (1.0 + 1e4 * x * x), -1.0, 1.0, 1e-13);
        let exact = 2.0 * (100.0f64).atan() / 100.0;
        assert!((got - exact).abs() < 1e-12);
    }
}
