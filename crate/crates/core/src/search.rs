//! One-dimensional search routines used by the frontier and bargaining solvers.

const INV_PHI: f64 = 0.618_033_988_749_894_8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Maximum {
    pub x: f64,
    pub value: f64,
    pub iterations: usize,
}

/// Golden-section maximization of a unimodal `f` on `[lo, hi]`.
///
/// Stops once the bracket is narrower than `rel_tol * max(1, |x|)` or after
/// `max_iter` iterations.
pub fn golden_section_max<F>(mut f: F, lo: f64, hi: f64, rel_tol: f64, max_iter: usize) -> Maximum
where
    F: FnMut(f64) -> f64,
{
    let (mut a, mut b) = (lo.min(hi), lo.max(hi));
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    let mut iterations = 0;
    while iterations < max_iter {
        let mid = 0.5 * (a + b);
        if (b - a) <= rel_tol * mid.abs().max(1.0) {
            break;
        }
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        }
        iterations += 1;
    }
    let (x, value) = if f1 >= f2 { (x1, f1) } else { (x2, f2) };
    Maximum { x, value, iterations }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bisection {
    Root { x: f64, residual: f64 },
    /// `g(lo)` and `g(hi)` share a sign.
    NoSignChange { g_lo: f64, g_hi: f64 },
}

/// Bisection for a root of `g` on `[lo, hi]`. An endpoint whose residual is
/// already zero is returned as is.
pub fn bisect<G>(mut g: G, lo: f64, hi: f64, max_iter: usize) -> Bisection
where
    G: FnMut(f64) -> f64,
{
    let (mut a, mut b) = (lo, hi);
    let (mut ga, gb) = (g(a), g(b));
    if ga == 0.0 {
        return Bisection::Root { x: a, residual: 0.0 };
    }
    if gb == 0.0 {
        return Bisection::Root { x: b, residual: 0.0 };
    }
    if ga.signum() == gb.signum() {
        return Bisection::NoSignChange { g_lo: ga, g_hi: gb };
    }
    let mut best = if ga.abs() < gb.abs() { (a, ga) } else { (b, gb) };
    for _ in 0..max_iter {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let gm = g(m);
        if gm.abs() < best.1.abs() {
            best = (m, gm);
        }
        if gm == 0.0 {
            break;
        }
        if gm.signum() == ga.signum() {
            a = m;
            ga = gm;
        } else {
            b = m;
        }
    }
    Bisection::Root { x: best.0, residual: best.1 }
}
