//! Truncated multivariate Taylor arithmetic in the spacetime variables
//! (t, x1, x2).
//!
//! A [`Jet`] holds the Taylor coefficients of a function about a base point
//! up to total degree [`DEGREE`]. Arithmetic propagates them exactly, so an
//! analytic test function written once in terms of jets yields all its partial
//! derivatives through fourth order without symbolic algebra or finite
//! differences. Each jet also tracks the degree up to which its coefficients
//! are still exact (differentiation lowers it by one).

use std::ops::{Add, Mul, Neg, Sub};
use std::sync::OnceLock;

pub const DEGREE: usize = 4;
const NCOEF: usize = 35;

struct Tables {
    exps: [[usize; 3]; NCOEF],
    index: [[[usize; DEGREE + 1]; DEGREE + 1]; DEGREE + 1],
    /// (a, b, product index) for every pair of monomials with degree sum <= DEGREE
    products: Vec<(usize, usize, usize, usize)>,
}

fn tables() -> &'static Tables {
    static T: OnceLock<Tables> = OnceLock::new();
    T.get_or_init(|| {
        let mut exps = [[0usize; 3]; NCOEF];
        let mut index = [[[usize::MAX; DEGREE + 1]; DEGREE + 1]; DEGREE + 1];
        let mut n = 0;
        for d in 0..=DEGREE {
            for i in (0..=d).rev() {
                for j in (0..=(d - i)).rev() {
                    let k = d - i - j;
                    exps[n] = [i, j, k];
                    index[i][j][k] = n;
                    n += 1;
                }
            }
        }
        assert_eq!(n, NCOEF);
        let mut products = Vec::new();
        for a in 0..NCOEF {
            for b in 0..NCOEF {
                let e = [
                    exps[a][0] + exps[b][0],
                    exps[a][1] + exps[b][1],
                    exps[a][2] + exps[b][2],
                ];
                let deg = e[0] + e[1] + e[2];
                if deg <= DEGREE {
                    products.push((a, b, index[e[0]][e[1]][e[2]], deg));
                }
            }
        }
        Tables { exps, index, products }
    })
}

fn degree_of(n: usize) -> usize {
    let e = tables().exps[n];
    e[0] + e[1] + e[2]
}

fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |a, k| a * k as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    c: [f64; NCOEF],
    order: usize,
}

/// Spacetime point (t, x1, x2).
pub type Point = [f64; 3];

impl Jet {
    pub fn constant(v: f64) -> Self {
        let mut c = [0.0; NCOEF];
        c[0] = v;
        Self { c, order: DEGREE }
    }

    /// Coordinate `axis` (0 = t, 1 = x1, 2 = x2) expanded about `p`.
    pub fn var(axis: usize, p: Point) -> Self {
        let mut j = Self::constant(p[axis]);
        let mut e = [0, 0, 0];
        e[axis] = 1;
        j.c[tables().index[e[0]][e[1]][e[2]]] = 1.0;
        j
    }

    /// The three coordinate jets (t, x1, x2) at `p`.
    pub fn coords(p: Point) -> [Jet; 3] {
        [Jet::var(0, p), Jet::var(1, p), Jet::var(2, p)]
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    /// Highest derivative order still represented exactly.
    pub fn order(&self) -> usize {
        self.order
    }

    /// ∂_t^i ∂_1^j ∂_2^k at the base point.
    pub fn partial(&self, i: usize, j: usize, k: usize) -> f64 {
        assert!(
            i + j + k <= self.order,
            "derivative of order {} requested from a jet exact to order {}",
            i + j + k,
            self.order
        );
        self.c[tables().index[i][j][k]] * factorial(i) * factorial(j) * factorial(k)
    }

    /// First partial along `axis`.
    pub fn d(&self, axis: usize) -> f64 {
        let mut e = [0, 0, 0];
        e[axis] = 1;
        self.partial(e[0], e[1], e[2])
    }

    /// The derivative jet ∂_axis f.
    pub fn deriv(&self, axis: usize) -> Jet {
        assert!(self.order >= 1, "cannot differentiate a jet of order 0");
        let t = tables();
        let mut c = [0.0; NCOEF];
        for (n, e) in t.exps.iter().enumerate() {
            if e[0] + e[1] + e[2] >= DEGREE {
                continue;
            }
            let mut up = *e;
            up[axis] += 1;
            c[n] = self.c[t.index[up[0]][up[1]][up[2]]] * up[axis] as f64;
        }
        Jet { c, order: self.order - 1 }
    }

    /// `f(self)` for a univariate `f` given its derivatives `f, f', ..., f''''`
    /// at the value of `self`.
    pub fn compose(&self, derivs: [f64; DEGREE + 1]) -> Jet {
        let mut h = *self;
        h.c[0] = 0.0;
        let mut out = Jet::constant(derivs[0]);
        out.order = self.order;
        let mut pow = Jet::constant(1.0);
        for (k, dk) in derivs.iter().enumerate().skip(1) {
            pow = pow * h;
            let s = dk / factorial(k);
            for n in 0..NCOEF {
                out.c[n] += s * pow.c[n];
            }
        }
        out
    }

    pub fn exp(&self) -> Jet {
        let e = self.value().exp();
        self.compose([e; DEGREE + 1])
    }

    pub fn sin(&self) -> Jet {
        let (s, c) = self.value().sin_cos();
        self.compose([s, c, -s, -c, s])
    }

    pub fn cos(&self) -> Jet {
        let (s, c) = self.value().sin_cos();
        self.compose([c, -s, -c, s, c])
    }

    /// `self^p` for real `p` (base value must be positive unless `p` is a
    /// non-negative integer).
    pub fn powf(&self, p: f64) -> Jet {
        let x = self.value();
        let mut d = [0.0; DEGREE + 1];
        let mut coef = 1.0;
        for (k, dk) in d.iter_mut().enumerate() {
            *dk = if coef == 0.0 { 0.0 } else { coef * x.powf(p - k as f64) };
            coef *= p - k as f64;
        }
        self.compose(d)
    }

    pub fn sqrt(&self) -> Jet {
        self.powf(0.5)
    }

    pub fn recip(&self) -> Jet {
        self.powf(-1.0)
    }

    pub fn square(&self) -> Jet {
        *self * *self
    }

    pub fn is_finite(&self) -> bool {
        self.c.iter().all(|v| v.is_finite())
    }

    /// Largest |coefficient| weighted by factorials, i.e. the largest
    /// represented partial derivative in absolute value.
    pub fn max_partial(&self) -> f64 {
        let t = tables();
        (0..NCOEF)
            .filter(|&n| degree_of(n) <= self.order)
            .map(|n| {
                let e = t.exps[n];
                (self.c[n] * factorial(e[0]) * factorial(e[1]) * factorial(e[2])).abs()
            })
            .fold(0.0, f64::max)
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(mut self, o: Jet) -> Jet {
        for n in 0..NCOEF {
            self.c[n] += o.c[n];
        }
        self.order = self.order.min(o.order);
        self
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(mut self, o: Jet) -> Jet {
        for n in 0..NCOEF {
            self.c[n] -= o.c[n];
        }
        self.order = self.order.min(o.order);
        self
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(mut self) -> Jet {
        for v in &mut self.c {
            *v = -*v;
        }
        self
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        let order = self.order.min(o.order);
        let mut c = [0.0; NCOEF];
        for &(a, b, p, deg) in &tables().products {
            if deg <= order {
                c[p] += self.c[a] * o.c[b];
            }
        }
        Jet { c, order }
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(mut self, s: f64) -> Jet {
        for v in &mut self.c {
            *v *= s;
        }
        self
    }
}

impl Mul<Jet> for f64 {
    type Output = Jet;
    fn mul(self, j: Jet) -> Jet {
        j * self
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(mut self, s: f64) -> Jet {
        self.c[0] += s;
        self
    }
}

impl Sub<f64> for Jet {
    type Output = Jet;
    fn sub(mut self, s: f64) -> Jet {
        self.c[0] -= s;
        self
    }
}

/// A scalar function of spacetime evaluated on jets.
pub trait SpacetimeFn: Sync {
    fn eval(&self, x: &[Jet; 3]) -> Jet;

    fn jet_at(&self, p: Point) -> Jet {
        self.eval(&Jet::coords(p))
    }
}

impl<F> SpacetimeFn for F
where
    F: Fn(&[Jet; 3]) -> Jet + Sync,
{
    fn eval(&self, x: &[Jet; 3]) -> Jet {
        self(x)
    }
}

/// Flat-space wave operator □w = -w_tt + Δw of a jet (needs order >= 2).
pub fn box_op(w: &Jet) -> Jet {
    let wtt = w.deriv(0).deriv(0);
    let w11 = w.deriv(1).deriv(1);
    let w22 = w.deriv(2).deriv(2);
    w11 + w22 - wtt
}
