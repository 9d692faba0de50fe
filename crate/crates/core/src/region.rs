//! Exact Poisson α-outlier regions.
//!
//! The outlier region of `Poi(m)` at level α is `{y : poi(y, m) < K(α)}`,
//! where `K(α)` is the largest threshold whose sub-threshold mass stays within
//! α. Because the pmf is unimodal this is the complement of an interval
//! `[lo, hi]` around the mode.
//!
//! A count `y` is an outlier exactly when the total mass of all points whose
//! pmf does not exceed `poi(y, m)` is at most α. Both region ends are found by
//! bisection on that criterion; tails are summed from the far end inward, so no
//! fixed truncation point is involved.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

// ln(n!) - ln(sqrt(2 pi n) (n/e)^n) for n = 1..=15
const STIRLING_ERR: [f64; 15] = [
    0.081_061_466_795_327_26,
    0.041_340_695_955_409_29,
    0.027_677_925_684_998_34,
    0.020_790_672_103_765_09,
    0.016_644_691_189_821_19,
    0.013_876_128_823_070_75,
    0.011_896_709_945_891_77,
    0.010_411_265_261_972_1,
    0.009_255_462_182_712_733,
    0.008_330_563_433_362_871,
    0.007_573_675_487_951_841,
    0.006_942_840_107_209_53,
    0.006_408_994_188_004_207,
    0.005_951_370_112_758_848,
    0.005_554_733_551_962_801,
];

fn stirling_err(n: u64) -> f64 {
    if n <= 15 {
        return STIRLING_ERR[(n - 1) as usize];
    }
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;
    let n = n as f64;
    let nn = n * n;
    if n > 500.0 {
        (S0 - S1 / nn) / n
    } else if n > 80.0 {
        (S0 - (S1 - S2 / nn) / nn) / n
    } else if n > 35.0 {
        (S0 - (S1 - (S2 - S3 / nn) / nn) / nn) / n
    } else {
        (S0 - (S1 - (S2 - (S3 - S4 / nn) / nn) / nn) / nn) / n
    }
}

/// Deviance term `x ln(x/m) + m - x`, evaluated without cancellation near `x = m`.
fn bd0(x: f64, m: f64) -> f64 {
    if (x - m).abs() < 0.1 * (x + m) {
        let mut v = (x - m) / (x + m);
        let mut s = (x - m) * v;
        let mut ej = 2.0 * x * v;
        v *= v;
        for j in 1..1000 {
            ej *= v;
            let s1 = s + ej / (2 * j + 1) as f64;
            if s1 == s {
                return s1;
            }
            s = s1;
        }
        s
    } else {
        x * (x / m).ln() + m - x
    }
}

/// Natural log of the Poisson pmf (saddle-point form, accurate for large `y`).
pub fn ln_poisson_pmf(y: u64, m: f64) -> f64 {
    if y == 0 {
        return -m;
    }
    let x = y as f64;
    -stirling_err(y) - bd0(x, m) - LN_SQRT_2PI - 0.5 * x.ln()
}

/// Poisson probability `e^{-m} m^y / y!`.
pub fn poisson_pmf(y: u64, m: f64) -> Result<f64> {
    if !(m > 0.0) || !m.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "Poisson mean must be positive and finite, got {m}"
        )));
    }
    Ok(pmf(y, m))
}

#[inline]
fn pmf(y: u64, m: f64) -> f64 {
    ln_poisson_pmf(y, m).exp()
}

/// Largest pmf value's location.
fn mode(m: f64) -> u64 {
    m.floor() as u64
}

/// `P(Y <= y)` for `y <= mode`, summed smallest term first.
fn lower_tail(y: u64, m: f64) -> f64 {
    let mut terms = Vec::new();
    let mut t = pmf(y, m);
    let mut k = y;
    let mut acc = 0.0;
    loop {
        terms.push(t);
        acc += t;
        if k == 0 || t < acc * 1e-20 {
            break;
        }
        t *= k as f64 / m;
        k -= 1;
    }
    terms.iter().rev().sum()
}

/// `P(Y >= h)` for `h > mode`, summed smallest term first.
fn upper_tail(h: u64, m: f64) -> f64 {
    let mut terms = Vec::new();
    let mut t = pmf(h, m);
    let mut k = h;
    let mut acc = 0.0;
    loop {
        terms.push(t);
        acc += t;
        if t < acc * 1e-20 || t == 0.0 {
            break;
        }
        k += 1;
        t *= m / k as f64;
    }
    terms.iter().rev().sum()
}

/// Total probability of the points whose pmf is at most `level`.
fn mass_at_or_below(level: f64, m: f64) -> f64 {
    let top = mode(m);
    // left branch: pmf non-decreasing on [0, top]
    let left = if pmf(0, m) > level {
        0.0
    } else {
        let (mut a, mut b) = (0u64, top);
        // invariant: pmf(a) <= level, and either b == a or pmf(b) > level or b is the last candidate
        if pmf(b, m) <= level {
            a = b;
        } else {
            while b - a > 1 {
                let mid = a + (b - a) / 2;
                if pmf(mid, m) <= level {
                    a = mid;
                } else {
                    b = mid;
                }
            }
        }
        lower_tail(a, m)
    };
    // right branch: pmf strictly decreasing on [top + 1, inf)
    let start = top + 1;
    let first = if pmf(start, m) <= level {
        start
    } else {
        let mut step = 1u64;
        let mut lo = start;
        let mut hi = start + step;
        while pmf(hi, m) > level {
            lo = hi;
            step *= 2;
            hi = start + step;
        }
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if pmf(mid, m) <= level {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    };
    left + upper_tail(first, m)
}

/// True iff `y` lies in the α-outlier region of `Poi(m)`.
///
/// Equivalent to `outlier_region(m, alpha)?.is_outlier(y)` but a single
/// criterion evaluation, for hot loops.
pub fn is_alpha_outlier(y: u64, m: f64, alpha: f64) -> bool {
    mass_at_or_below(pmf(y, m), m) <= alpha
}

/// Inlier interval `[lo, hi]` of `Poi(mean)` at level `alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutlierRegion {
    pub mean: f64,
    pub alpha: f64,
    pub lo: u64,
    pub hi: u64,
    /// The threshold `K(alpha)`: pmf of the least likely inlier. Diagnostic only.
    pub threshold: f64,
}

impl OutlierRegion {
    pub fn is_outlier(&self, y: u64) -> bool {
        y < self.lo || y > self.hi
    }

    /// Probability mass of the outlier region.
    pub fn outlier_mass(&self) -> f64 {
        let left = if self.lo == 0 {
            0.0
        } else {
            lower_tail(self.lo - 1, self.mean)
        };
        left + upper_tail(self.hi + 1, self.mean)
    }
}

/// Computes the exact α-outlier region of `Poi(m)`.
pub fn outlier_region(m: f64, alpha: f64) -> Result<OutlierRegion> {
    if !(m > 0.0) || !m.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "Poisson mean must be positive and finite, got {m}"
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    let top = mode(m);
    let out = |y: u64| is_alpha_outlier(y, m, alpha);

    // smallest inlier on [0, top]; the mode is always an inlier
    let lo = if !out(0) {
        0
    } else {
        let (mut a, mut b) = (0u64, top);
        while b - a > 1 {
            let mid = a + (b - a) / 2;
            if out(mid) {
                a = mid;
            } else {
                b = mid;
            }
        }
        b
    };
    // largest inlier on [top, inf)
    let mut step = 1u64;
    let mut a = top;
    let mut b = top + step;
    while !out(b) {
        a = b;
        step *= 2;
        b = top + step;
    }
    while b - a > 1 {
        let mid = a + (b - a) / 2;
        if out(mid) {
            b = mid;
        } else {
            a = mid;
        }
    }
    let hi = a;
    Ok(OutlierRegion {
        mean: m,
        alpha,
        lo,
        hi,
        threshold: pmf(lo, m).min(pmf(hi, m)),
    })
}
