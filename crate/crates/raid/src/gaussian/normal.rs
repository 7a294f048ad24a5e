//! Univariate normal CDF, density and percent-point function.

use crate::error::{Error, Result};

use super::brent::brent_root;

const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// Standard normal CDF via the complementary error function.
pub fn std_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / SQRT_2)
}

/// Standard normal density.
pub(crate) fn std_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// CDF of N(mean, var) at `x`.
pub fn uni_cdf(x: f64, mean: f64, var: f64) -> Result<f64> {
    if !(var > 0.0) {
        return Err(Error::NonPositiveVariance(var));
    }
    Ok(std_cdf((x - mean) / var.sqrt()))
}

/// Quantile of N(mean, var): the `x` with `uni_cdf(x) = q` to 1e-9.
///
/// Works in standardized space: start from the bracket [-10, 10],
/// expand geometrically by a factor of 10 until the bracket straddles
/// the target quantile, then root-find `F(z) - q` with Brent and map
/// back through `z * sqrt(var) + mean`.
pub fn uni_ppf(q: f64, mean: f64, var: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidQuantile(q));
    }
    if !(var > 0.0) {
        return Err(Error::NonPositiveVariance(var));
    }
    let factor = 10.0;
    let mut lo = -factor;
    let mut hi = factor;
    while std_cdf(lo) - q > 0.0 {
        hi = lo;
        lo *= factor;
    }
    while std_cdf(hi) - q < 0.0 {
        lo = hi;
        hi *= factor;
    }
    let z = brent_root(|z| std_cdf(z) - q, lo, hi, 1e-12)?;
    Ok(z * var.sqrt() + mean)
}

/// Standard normal quantile via the Wichura AS 241 rational
/// approximation (double precision). Used on the quasi-Monte Carlo hot
/// path, where a root-finder per point would be far too slow.
pub(crate) fn inv_std_cdf(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0);
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q
            * (((((((2.509_080_928_730_122_7e3 * r + 3.343_057_558_358_812_8e4) * r
                + 6.726_577_092_700_87e4)
                * r
                + 4.592_195_393_154_987e4)
                * r
                + 1.373_169_376_550_946_1e4)
                * r
                + 1.971_590_950_306_551_3e3)
                * r
                + 1.331_416_678_917_843_8e2)
                * r
                + 3.387_132_872_796_366_5)
            / (((((((5.226_495_278_852_545_5e3 * r + 2.872_908_573_572_194_3e4) * r
                + 3.930_789_580_009_271e4)
                * r
                + 2.121_379_430_158_659_7e4)
                * r
                + 5.394_196_021_424_751e3)
                * r
                + 6.871_870_074_920_579e2)
                * r
                + 4.231_333_070_160_091e1)
                * r
                + 1.0);
    }
    let mut r = if q < 0.0 { p } else { 1.0 - p };
    r = (-r.ln()).sqrt();
    let val = if r <= 5.0 {
        let r = r - 1.6;
        (((((((7.745_450_142_783_414e-4 * r + 2.272_384_498_926_918_4e-2) * r
            + 2.417_807_251_774_506e-1)
            * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_5)
            * r
            + 5.769_497_221_460_691)
            * r
            + 4.630_337_846_156_546)
            * r
            + 1.423_437_110_749_683_5)
            / (((((((1.050_750_071_644_416_9e-9 * r + 5.475_938_084_995_345e-4) * r
                + 1.519_866_656_361_645_7e-2)
                * r
                + 1.481_039_764_274_800_8e-1)
                * r
                + 6.897_673_349_851e-1)
                * r
                + 1.676_384_830_183_803_8)
                * r
                + 2.053_191_626_637_759)
                * r
                + 1.0)
    } else {
        let r = r - 5.0;
        (((((((2.010_334_399_292_288_1e-7 * r + 2.711_555_568_743_487_6e-5) * r
            + 1.242_660_947_388_078_4e-3)
            * r
            + 2.653_218_952_657_612_4e-2)
            * r
            + 2.965_605_718_285_048_7e-1)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114)
            * r
            + 6.657_904_643_501_103)
            / (((((((2.044_263_103_389_939_7e-15 * r + 1.421_511_758_316_446e-7) * r
                + 1.846_318_317_510_054_8e-5)
                * r
                + 7.868_691_311_456_133e-4)
                * r
                + 1.487_536_129_085_061_5e-2)
                * r
                + 1.369_298_809_227_358e-1)
                * r
                + 5.998_322_065_558_88e-1)
                * r
                + 1.0)
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_at_median() {
        assert_eq!(uni_cdf(0.0, 0.0, 1.0).unwrap(), 0.5);
    }

    #[test]
    fn cdf_three_sigma() {
        // One-sided complement of the 0.99730 two-sided mass.
        let p = uni_cdf(3.0, 0.0, 1.0).unwrap();
        assert!((p - 0.99865).abs() < 1e-5);
    }

    #[test]
    fn cdf_symmetry() {
        for x in [-4.2, -1.0, 0.3, 2.5, 7.0] {
            let s = uni_cdf(x, 0.0, 1.0).unwrap() + uni_cdf(-x, 0.0, 1.0).unwrap();
            assert!((s - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn cdf_rejects_nonpositive_variance() {
        assert!(uni_cdf(0.0, 0.0, 0.0).is_err());
        assert!(uni_cdf(0.0, 0.0, -1.0).is_err());
    }

    #[test]
    fn ppf_median() {
        assert!(uni_ppf(0.5, 0.0, 1.0).unwrap().abs() < 1e-9);
    }

    #[test]
    fn ppf_three_sigma() {
        let x = uni_ppf(0.99865, 0.0, 1.0).unwrap();
        assert!((x - 3.0).abs() < 1e-3);
    }

    #[test]
    fn ppf_roundtrip() {
        for q in [1e-6, 0.00135, 0.5, 0.9973, 1.0 - 1e-6] {
            let x = uni_ppf(q, 2.0, 4.0).unwrap();
            let back = uni_cdf(x, 2.0, 4.0).unwrap();
            assert!((back - q).abs() <= 1e-9, "q={q} back={back}");
        }
    }

    #[test]
    fn ppf_rejects_bad_inputs() {
        assert!(uni_ppf(0.0, 0.0, 1.0).is_err());
        assert!(uni_ppf(1.0, 0.0, 1.0).is_err());
        assert!(uni_ppf(0.5, 0.0, 0.0).is_err());
    }

    #[test]
    fn rational_inverse_matches_cdf() {
        // Upper tail capped at 4: past that, 1 - p loses the digits
        // needed to pin z regardless of the approximation quality.
        for &z in &[-8.0, -3.7, -1.0, -1e-3, 0.2, 1.5, 4.0] {
            let p = std_cdf(z);
            assert!((inv_std_cdf(p) - z).abs() < 1e-9, "z={z}");
        }
    }

    #[test]
    fn pdf_integrates_to_one() {
        // Trapezoid over +/- 10 sigma.
        let n = 200_000;
        let (a, b) = (-10.0, 10.0);
        let h = (b - a) / n as f64;
        let mut sum = 0.5 * (std_pdf(a) + std_pdf(b));
        for i in 1..n {
            sum += std_pdf(a + i as f64 * h);
        }
        assert!((sum * h - 1.0).abs() < 1e-6);
    }
}
