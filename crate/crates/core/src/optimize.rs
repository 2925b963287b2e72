//! One-dimensional maximization on a compact interval.

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section search for a maximizer of `f` on `[lo, hi]`, stopping
/// once the bracket is narrower than `tol`.
pub fn golden_section_max<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, tol: f64) -> f64 {
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while b - a > tol {
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
    }
    0.5 * (a + b)
}

/// Bisection for a root of `g` on `[a, b]` with `g(a) > 0 > g(b)`.
fn bisect_decreasing<G: Fn(f64) -> f64>(g: G, mut a: f64, mut b: f64, tol: f64) -> f64 {
    while b - a > tol {
        let m = 0.5 * (a + b);
        if g(m) > 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Maximizer of `f` on `[lo, hi]` given its derivative `df`.
///
/// A coarse golden-section pass locates the peak; when `df` changes sign
/// around it the root is refined by bisection to `tol`. Endpoints win when
/// they score at least as high.
pub fn maximize_scalar<F, D>(f: F, df: D, lo: f64, hi: f64, tol: f64) -> f64
where
    F: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    if hi <= lo {
        return lo;
    }
    let coarse_tol = (1e-6 * (hi - lo)).max(tol);
    let x = golden_section_max(&f, lo, hi, coarse_tol);
    let pad = 4.0 * coarse_tol;
    let (a, b) = ((x - pad).max(lo), (x + pad).min(hi));
    let mut best = x;
    if df(a) > 0.0 && df(b) < 0.0 {
        best = bisect_decreasing(&df, a, b, tol);
    }
    for cand in [lo, hi] {
        if f(cand) >= f(best) {
            best = cand;
        }
    }
    best
}
