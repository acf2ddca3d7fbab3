//! Gamma function and a few closed-form helpers.

#![allow(clippy::excessive_precision)]

use std::f64::consts::PI;

const LANCZOS_G: f64 = 4.742_187_5; // 607/128
const LANCZOS_COF: [f64; 14] = [
    57.156_235_665_862_923_517,
    -59.597_960_355_475_491_248,
    14.136_097_974_741_747_174,
    -0.491_913_816_097_620_199_78,
    0.339_946_499_848_118_886_99e-4,
    0.465_236_289_270_485_756_65e-4,
    -0.983_744_753_048_795_646_77e-4,
    0.158_088_703_224_912_488_84e-3,
    -0.210_264_441_724_104_883_19e-3,
    0.217_439_618_115_212_643_20e-3,
    -0.164_318_106_536_763_890_22e-3,
    0.844_182_239_838_527_432_93e-4,
    -0.261_908_384_015_814_086_70e-4,
    0.368_991_826_595_316_227_04e-5,
];

/// ln Γ(x) for x > 0 (Lanczos, g = 607/128, 15 terms).
pub fn ln_gamma(x: f64) -> f64 {
    assert!(x > 0.0, "ln_gamma requires x > 0, got {x}");
    let t = x + LANCZOS_G + 0.5;
    let mut ser = 0.999_999_999_999_997_091_82;
    let mut y = x;
    for c in LANCZOS_COF {
        y += 1.0;
        ser += c / y;
    }
    (x + 0.5) * t.ln() - t + (2.506_628_274_631_000_5 * ser / x).ln()
}

/// Γ(x) for x > 0.
pub fn gamma(x: f64) -> f64 {
    ln_gamma(x).exp()
}

/// Surface area of the unit sphere S^m ⊂ R^{m+1}: 2π^{(m+1)/2} / Γ((m+1)/2).
pub fn sphere_volume(m: usize) -> f64 {
    let k = (m + 1) as f64 / 2.0;
    2.0 * (k * PI.ln() - ln_gamma(k)).exp()
}

/// Density of N(0, variance) at x.
pub fn normal_pdf(x: f64, variance: f64) -> f64 {
    (-x * x / (2.0 * variance)).exp() / (2.0 * PI * variance).sqrt()
}
