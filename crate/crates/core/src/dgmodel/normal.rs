//! Univariate and bivariate standard normal distribution functions.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::sync::LazyLock;

use crate::error::{Error, Result};

/// Standard normal CDF, `(1 + erf(x / sqrt 2)) / 2`.
///
/// Evaluated through `erfc` so that the lower tail keeps full relative
/// precision.
pub fn phi(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Inverse standard normal CDF (Wichura's AS241, about 1e-16 relative).
#[allow(clippy::excessive_precision)]
pub fn phi_inv(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::DegenerateMarginal(p));
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = (((((((2_509.080_928_730_122_7 * r + 33_430.575_583_588_13) * r + 67_265.770_927_008_7) * r + 45_921.953_931_549_87)
            * r
            + 13_731.693_765_509_46)
            * r
            + 1_971.590_950_306_551_3)
            * r
            + 133.141_667_891_784_38)
            * r
            + 3.387_132_872_796_366_5)
            * q;
        let den = ((((((5_226.495_278_852_546 * r + 28_729.085_735_721_943) * r + 39_307.895_800_092_71) * r + 21_213.794_301_586_597)
            * r
            + 5_394.196_021_424_751)
            * r
            + 687.187_007_492_057_9)
            * r
            + 42.313_330_701_600_91)
            * r
            + 1.0;
        return Ok(num / den);
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-tail.ln()).sqrt();
    let value = if r <= 5.0 {
        r -= 1.6;
        let num = ((((((7.745_450_142_783_414e-4 * r + 0.022_723_844_989_269_184) * r + 0.241_780_725_177_450_6) * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_5)
            * r
            + 5.769_497_221_460_691)
            * r
            + 4.630_337_846_156_546)
            * r
            + 1.423_437_110_749_683_5;
        let den = ((((((1.050_750_071_644_416_9e-9 * r + 5.475_938_084_995_345e-4) * r + 0.015_198_666_563_616_457) * r
            + 0.148_103_976_427_480_08)
            * r
            + 0.689_767_334_985_1)
            * r
            + 1.676_384_830_183_803_8)
            * r
            + 2.053_191_626_637_759)
            * r
            + 1.0;
        num / den
    } else {
        r -= 5.0;
        let num = ((((((2.010_334_399_292_288_1e-7 * r + 2.711_555_568_743_487_6e-5) * r + 0.001_242_660_947_388_078_4) * r
            + 0.026_532_189_526_576_124)
            * r
            + 0.296_560_571_828_504_87)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114)
            * r
            + 6.657_904_643_501_103;
        let den = ((((((2.044_263_103_389_939_7e-15 * r + 1.421_511_758_316_446e-7) * r + 1.846_318_317_510_054_8e-5) * r
            + 7.868_691_311_456_133e-4)
            * r
            + 0.014_875_361_290_850_615)
            * r
            + 0.136_929_880_922_735_8)
            * r
            + 0.599_832_206_555_888)
            * r
            + 1.0;
        num / den
    };
    Ok(if q < 0.0 { -value } else { value })
}

/// Negative half of the n-point Gauss-Legendre rule, as (nodes, weights).
fn gauss_legendre_half(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = Vec::with_capacity(n / 2);
    let mut weights = Vec::with_capacity(n / 2);
    for i in 0..n / 2 {
        let mut x = -(PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes.push(x);
        weights.push(2.0 / ((1.0 - x * x) * dp * dp));
    }
    (nodes, weights)
}

static GL_RULES: LazyLock<[(Vec<f64>, Vec<f64>); 3]> =
    LazyLock::new(|| [gauss_legendre_half(6), gauss_legendre_half(12), gauss_legendre_half(20)]);

/// Upper orthant probability `P(X > h, Y > k)` for standard bivariate
/// normals with correlation `r` (Genz's BVND; double-precision accurate).
fn bvnd(h: f64, k: f64, r: f64) -> f64 {
    const TWO_PI: f64 = 2.0 * PI;
    let rule = if r.abs() < 0.3 {
        &GL_RULES[0]
    } else if r.abs() < 0.75 {
        &GL_RULES[1]
    } else {
        &GL_RULES[2]
    };
    let (xs, ws) = (&rule.0, &rule.1);
    let mut k = k;
    let mut hk = h * k;
    let mut bvn = 0.0;
    if r.abs() < 0.925 {
        let hs = (h * h + k * k) / 2.0;
        let asr = r.asin();
        for (&x, &w) in xs.iter().zip(ws) {
            for sign in [1.0, -1.0] {
                let sn = (asr * (sign * x + 1.0) / 2.0).sin();
                bvn += w * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
            }
        }
        return bvn * asr / (2.0 * TWO_PI) + phi(-h) * phi(-k);
    }
    if r < 0.0 {
        k = -k;
        hk = -hk;
    }
    if r.abs() < 1.0 {
        let a_s = (1.0 - r) * (1.0 + r);
        let mut a = a_s.sqrt();
        let bs = (h - k) * (h - k);
        let c = (4.0 - hk) / 8.0;
        let d = (12.0 - hk) / 16.0;
        bvn = a * (-(bs / a_s + hk) / 2.0).exp() * (1.0 - c * (bs - a_s) * (1.0 - d * bs / 5.0) / 3.0 + c * d * a_s * a_s / 5.0);
        if hk > -160.0 {
            let b = bs.sqrt();
            bvn -= (-hk / 2.0).exp() * TWO_PI.sqrt() * phi(-b / a) * b * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
        }
        a /= 2.0;
        for (&x, &w) in xs.iter().zip(ws) {
            let xs1 = (a * (x + 1.0)).powi(2);
            let rs = (1.0 - xs1).sqrt();
            bvn += a
                * w
                * ((-bs / (2.0 * xs1) - hk / (1.0 + rs)).exp() / rs - (-(bs / xs1 + hk) / 2.0).exp() * (1.0 + c * xs1 * (1.0 + d * xs1)));
            let xs2 = a_s * (1.0 - x).powi(2) / 4.0;
            let rs = (1.0 - xs2).sqrt();
            bvn += a
                * w
                * (-(bs / xs2 + hk) / 2.0).exp()
                * ((-hk * (1.0 - rs) / (2.0 * (1.0 + rs))).exp() / rs - (1.0 + c * xs2 * (1.0 + d * xs2)));
        }
        bvn = -bvn / TWO_PI;
    }
    if r > 0.0 {
        bvn + phi(-h.max(k))
    } else {
        -bvn + (phi(-h) - phi(-k)).max(0.0)
    }
}

/// Bivariate standard normal CDF `P(X <= a, Y <= b)` with correlation `rho`.
/// `rho` is clamped to [-1, 1].
pub fn phi2(a: f64, b: f64, rho: f64) -> f64 {
    let rho = rho.clamp(-1.0, 1.0);
    bvnd(-a, -b, rho).clamp(0.0, 1.0)
}
