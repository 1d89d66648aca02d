//! Error function family and chi-squared quantiles, implemented from scratch so
//! results are bit-reproducible across platforms that share `libm`.

use crate::error::{Error, Result};
use core::f64::consts::{PI, SQRT_2};

const FRAC_2_SQRT_PI: f64 = core::f64::consts::FRAC_2_SQRT_PI;

/// Below this magnitude `erf` uses its power series; above, `erfc` uses a
/// continued fraction.
const SERIES_LIMIT: f64 = 2.5;

/// `erf(x) = 2/√π ∫₀ˣ e^{−t²} dt`.
pub fn erf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    let ax = libm::fabs(x);
    let value = if ax < SERIES_LIMIT {
        erf_series(ax)
    } else {
        1.0 - erfc_continued_fraction(ax)
    };
    if x < 0.0 {
        -value
    } else {
        value
    }
}

/// Complementary error function `1 − erf(x)`, accurate in the upper tail.
pub fn erfc(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x >= SERIES_LIMIT {
        erfc_continued_fraction(x)
    } else if x > -SERIES_LIMIT {
        1.0 - erf(x)
    } else {
        2.0 - erfc_continued_fraction(-x)
    }
}

// erf(x) = 2x/√π · e^{−x²} · Σ (2x²)ⁿ / (1·3·…·(2n+1)); all terms positive.
fn erf_series(x: f64) -> f64 {
    let two_x2 = 2.0 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut n = 0.0;
    loop {
        n += 1.0;
        term *= two_x2 / (2.0 * n + 1.0);
        sum += term;
        if term <= 1e-17 * sum {
            break;
        }
    }
    FRAC_2_SQRT_PI * x * libm::exp(-x * x) * sum
}

// Modified Lentz evaluation of erfc(x) = e^{−x²}/√π · 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + …)))).
fn erfc_continued_fraction(x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for n in 1..500 {
        let a = n as f64 * 0.5;
        d = x + a * d;
        if d == 0.0 {
            d = TINY;
        }
        c = x + a / c;
        if c == 0.0 {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if libm::fabs(delta - 1.0) < 1e-16 {
            break;
        }
    }
    libm::exp(-x * x) / (f * libm::sqrt(PI))
}

/// Inverse error function on `(−1, 1)`, accurate to ~1e-15 absolute.
pub fn erf_inv(y: f64) -> Result<f64> {
    if !(y > -1.0 && y < 1.0) {
        return Err(Error::Domain {
            what: "erf_inv argument",
            value: y,
        });
    }
    if y == 0.0 {
        return Ok(0.0);
    }
    let target = libm::fabs(y);
    let tail = 1.0 - target;
    let mut x = initial_erf_inv(target);
    for _ in 0..12 {
        // Residual taken through erfc in the tail to avoid cancellation.
        let residual = if x > 1.0 { tail - erfc(x) } else { erf(x) - target };
        let slope = FRAC_2_SQRT_PI * libm::exp(-x * x);
        if slope == 0.0 {
            break;
        }
        let newton = residual / slope;
        // Halley correction: f'' / f' = −2x.
        let step = newton / (1.0 + x * newton);
        x -= step;
        if libm::fabs(step) <= 1e-16 * x {
            break;
        }
    }
    Ok(if y < 0.0 { -x } else { x })
}

// Giles' single-precision rational approximation, refined by Halley above.
fn initial_erf_inv(y: f64) -> f64 {
    let mut w = -libm::log((1.0 - y) * (1.0 + y));
    let p = if w < 5.0 {
        w -= 2.5;
        let mut p = 2.810_226_36e-08;
        p = 3.432_739_39e-07 + p * w;
        p = -3.523_387_7e-06 + p * w;
        p = -4.391_506_54e-06 + p * w;
        p = 0.000_218_580_87 + p * w;
        p = -0.001_253_725_03 + p * w;
        p = -0.004_177_681_64 + p * w;
        p = 0.246_640_727 + p * w;
        1.501_409_41 + p * w
    } else {
        w = libm::sqrt(w) - 3.0;
        let mut p = -0.000_200_214_257;
        p = 0.000_100_950_558 + p * w;
        p = 0.001_349_343_22 + p * w;
        p = -0.003_673_428_44 + p * w;
        p = 0.005_739_507_73 + p * w;
        p = -0.007_622_461_3 + p * w;
        p = 0.009_438_870_47 + p * w;
        p = 1.001_674_06 + p * w;
        2.832_976_82 + p * w
    };
    p * y
}

/// Standard normal CDF `Φ(z)`.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

/// Regularized lower incomplete gamma function `P(a, x)`.
pub fn gamma_p(a: f64, x: f64) -> Result<f64> {
    if !(a > 0.0) || x.is_nan() {
        return Err(Error::Domain {
            what: "gamma_p shape",
            value: a,
        });
    }
    if x <= 0.0 {
        return Ok(0.0);
    }
    let log_prefactor = -x + a * libm::log(x) - libm::lgamma(a);
    if x < a + 1.0 {
        let mut term = 1.0 / a;
        let mut sum = term;
        let mut ap = a;
        for _ in 0..10_000 {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term < 1e-17 * sum {
                break;
            }
        }
        Ok((sum * libm::exp(log_prefactor)).min(1.0))
    } else {
        const TINY: f64 = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..10_000 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if libm::fabs(d) < TINY {
                d = TINY;
            }
            c = b + an / c;
            if libm::fabs(c) < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if libm::fabs(delta - 1.0) < 1e-16 {
                break;
            }
        }
        Ok((1.0 - libm::exp(log_prefactor) * h).max(0.0))
    }
}

/// CDF of the chi-squared distribution with `dof` degrees of freedom.
pub fn chi2_cdf(dof: u32, x: f64) -> Result<f64> {
    if dof == 0 {
        return Err(Error::Domain {
            what: "chi-squared degrees of freedom",
            value: 0.0,
        });
    }
    gamma_p(dof as f64 / 2.0, x / 2.0)
}

/// `c²` with `Prob(χ²_dof ≤ c²) = beta`, found by bracketing and bisection.
pub fn chi2_quantile(dof: u32, beta: f64) -> Result<f64> {
    if dof == 0 {
        return Err(Error::Domain {
            what: "chi-squared degrees of freedom",
            value: 0.0,
        });
    }
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::Domain {
            what: "chi-squared probability",
            value: beta,
        });
    }
    if beta == 0.0 {
        return Ok(0.0);
    }
    let mut lo = 0.0;
    let mut hi = f64::from(dof).max(1.0);
    while chi2_cdf(dof, hi)? < beta {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::Numeric("chi2_quantile: bracket overflow".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if chi2_cdf(dof, mid)? < beta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
