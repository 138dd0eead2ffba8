//! Special functions: incomplete gamma, χ² and normal quantiles, and the
//! modified Bessel function of the first kind in log space.

use core::f64::consts::PI;

use crate::error::{invalid, Result};

pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// Regularized lower incomplete gamma `P(a, x)`.
pub fn gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x < a + 1.0 {
        gamma_p_series(a, x)
    } else {
        1.0 - gamma_q_fraction(a, x)
    }
}

/// Regularized upper incomplete gamma `Q(a, x) = 1 − P(a, x)`.
pub fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        1.0 - gamma_p_series(a, x)
    } else {
        gamma_q_fraction(a, x)
    }
}

fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut sum = 1.0 / a;
    let mut del = sum;
    for _ in 0..10_000 {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if del.abs() < sum.abs() * 1e-17 {
            break;
        }
    }
    sum * libm::exp(-x + a * libm::log(x) - ln_gamma(a))
}

// Modified Lentz evaluation of the continued fraction for Q(a, x).
fn gamma_q_fraction(a: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..10_000 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    libm::exp(-x + a * libm::log(x) - ln_gamma(a)) * h
}

pub fn chi2_cdf(x: f64, df: f64) -> f64 {
    gamma_p(df / 2.0, x / 2.0)
}

pub fn chi2_sf(x: f64, df: f64) -> f64 {
    gamma_q(df / 2.0, x / 2.0)
}

fn chi2_log_pdf(x: f64, df: f64) -> f64 {
    let h = df / 2.0;
    (h - 1.0) * libm::log(x) - x / 2.0 - h * libm::log(2.0) - ln_gamma(h)
}

/// Quantile of the χ² distribution with `df` degrees of freedom.
pub fn chi2_quantile(p: f64, df: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(invalid!("chi-square quantile level must lie in (0, 1), got {p}"));
    }
    if !(df > 0.0) {
        return Err(invalid!("chi-square degrees of freedom must be positive, got {df}"));
    }
    // Bracket, then safeguarded Newton on the CDF.
    let mut lo = 0.0;
    let mut hi = df.max(1.0);
    while chi2_cdf(hi, df) < p {
        lo = hi;
        hi *= 2.0;
    }
    let z = normal_quantile_approx(p);
    let wh = 1.0 - 2.0 / (9.0 * df) + z * libm::sqrt(2.0 / (9.0 * df));
    let mut x = (df * wh * wh * wh).clamp(lo, hi);
    if !(x > lo && x < hi) {
        x = 0.5 * (lo + hi);
    }
    for _ in 0..200 {
        let f = chi2_cdf(x, df) - p;
        if f > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let step = f / libm::exp(chi2_log_pdf(x, df));
        let mut next = x - step;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-14 * x.max(1e-300) {
            return Ok(next);
        }
        x = next;
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(x)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / core::f64::consts::SQRT_2)
}

/// Standard normal quantile (Acklam's rational approximation plus one Halley step).
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(invalid!("normal quantile level must lie in (0, 1), got {p}"));
    }
    let x = normal_quantile_approx(p);
    let e = normal_cdf(x) - p;
    let u = e * libm::sqrt(2.0 * PI) * libm::exp(x * x / 2.0);
    Ok(x - u / (1.0 + x * u / 2.0))
}

fn normal_quantile_approx(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.024_25;
    if p < P_LOW {
        let q = libm::sqrt(-2.0 * libm::log(p));
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = libm::sqrt(-2.0 * libm::log(1.0 - p));
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}

/// Argument at which the Bessel evaluation switches from the power series to
/// the large-argument expansion.
pub const BESSEL_SWITCH: f64 = 30.0;

/// `log(x^{-ν} I_ν(x))` for `ν ≥ 0`, `x ≥ 0`.
///
/// At `x = 0` this is the limit `−ν log 2 − log Γ(ν + 1)`.
pub fn log_bessel_i_scaled(nu: f64, x: f64) -> f64 {
    debug_assert!(nu >= 0.0 && x >= 0.0);
    if x < BESSEL_SWITCH {
        log_bessel_series_scaled(nu, x)
    } else {
        log_bessel_asymptotic(nu, x) - nu * libm::log(x)
    }
}

/// `log I_ν(x)` for `ν ≥ 0`, `x > 0`.
pub fn log_bessel_i(nu: f64, x: f64) -> f64 {
    if x < BESSEL_SWITCH {
        log_bessel_series_scaled(nu, x) + nu * libm::log(x)
    } else {
        log_bessel_asymptotic(nu, x)
    }
}

// Σ_m (x/2)^{2m} / (2^ν m! Γ(m+ν+1)), summed in log space.
fn log_bessel_series_scaled(nu: f64, x: f64) -> f64 {
    let base = -nu * core::f64::consts::LN_2 - ln_gamma(nu + 1.0);
    if x == 0.0 {
        return base;
    }
    let l2 = 2.0 * libm::log(x / 2.0);
    let next = |log_term: f64, m: f64| log_term + l2 - libm::log(m) - libm::log(m + nu);
    // Terms rise until m ≈ x/2 and then fall; locate the peak first.
    let mut peak = base;
    let mut log_term = base;
    let mut m = 0.0;
    while m < x {
        m += 1.0;
        log_term = next(log_term, m);
        peak = peak.max(log_term);
    }
    let mut acc = 0.0;
    let mut log_term = base;
    let mut m = 0.0;
    loop {
        let r = libm::exp(log_term - peak);
        acc += r;
        if m > x && r < 1e-18 * acc {
            break;
        }
        m += 1.0;
        log_term = next(log_term, m);
    }
    peak + libm::log(acc)
}

// log I_ν(x) ~ x − ½ log(2πx) + log Σ_j (−1)^j a_j(ν) / x^j.
fn log_bessel_asymptotic(nu: f64, x: f64) -> f64 {
    let mu = 4.0 * nu * nu;
    let mut term = 1.0;
    let mut sum = 1.0;
    for j in 1..60 {
        let jf = j as f64;
        let k = 2.0 * jf - 1.0;
        let next = -term * (mu - k * k) / (jf * 8.0 * x);
        if next.abs() >= term.abs() {
            break;
        }
        term = next;
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    x - 0.5 * libm::log(2.0 * PI * x) + libm::log(sum)
}
