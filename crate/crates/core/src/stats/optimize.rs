//! Derivative-free one-dimensional local minimization.

const GOLDEN: f64 = 1.618_033_988_749_895;
const CGOLD: f64 = 0.381_966_011_250_105;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Minimum {
    pub x: f64,
    pub fx: f64,
    pub evaluations: usize,
}

/// Local minimum of `f` reached from `x0`: a downhill bracket is grown
/// geometrically from `x0` with first step `step`, then refined by Brent's
/// golden-section/parabolic search to absolute tolerance `tol`.
///
/// `max_span` caps the bracket width (π for π-periodic objectives, so a
/// search never wraps around a full period).
pub fn local_minimize<F: FnMut(f64) -> f64>(
    mut f: F,
    x0: f64,
    step: f64,
    max_span: f64,
    tol: f64,
    max_iter: usize,
) -> Minimum {
    let mut evals = 0usize;
    let mut eval = |x: f64, evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let f0 = eval(x0, &mut evals);
    let mut a = x0;
    let mut fa = f0;
    let mut b = x0 + step;
    let mut fb = eval(b, &mut evals);
    if fb > fa {
        let left = x0 - step;
        let fl = eval(left, &mut evals);
        if fl >= fa {
            let m = brent(&mut |x| eval(x, &mut evals), left, x0, x0 + step, f0, tol, max_iter);
            return Minimum { evaluations: evals, ..m };
        }
        b = left;
        fb = fl;
    }
    // Walk downhill from a through b.
    let mut c = b + GOLDEN * (b - a);
    let mut fc = eval(c, &mut evals);
    while fc < fb {
        if (c - x0).abs() >= max_span {
            return Minimum { x: c, fx: fc, evaluations: evals };
        }
        a = b;
        fa = fb;
        b = c;
        fb = fc;
        c = b + GOLDEN * (b - a);
        fc = eval(c, &mut evals);
    }
    let _ = fa;
    let (lo, hi) = if a < c { (a, c) } else { (c, a) };
    let m = brent(&mut |x| eval(x, &mut evals), lo, b, hi, fb, tol, max_iter);
    Minimum { evaluations: evals, ..m }
}

/// Brent minimization on `[lo, hi]` given an interior point `x` with value `fx`.
fn brent<F: FnMut(f64) -> f64>(f: &mut F, lo: f64, x: f64, hi: f64, fx: f64, tol: f64, max_iter: usize) -> Minimum {
    let (mut a, mut b) = (lo, hi);
    let (mut x, mut w, mut v) = (x, x, x);
    let (mut fx, mut fw, mut fv) = (fx, fx, fx);
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;
    let mut evals = 0;
    for _ in 0..max_iter {
        let xm = 0.5 * (a + b);
        let tol1 = tol * (1.0 + x.abs());
        let tol2 = 2.0 * tol1;
        if (x - xm).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let etemp = e;
            e = d;
            if p.abs() < (0.5 * q * etemp).abs() && p > q * (a - x) && p < q * (b - x) {
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = tol1.copysign(xm - x);
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= xm { a - x } else { b - x };
            d = CGOLD * e;
        }
        let u = if d.abs() >= tol1 { x + d } else { x + tol1.copysign(d) };
        let fu = f(u);
        evals += 1;
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    Minimum { x, fx, evaluations: evals }
}
