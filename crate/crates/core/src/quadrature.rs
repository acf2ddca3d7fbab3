//! Adaptive Gauss–Kronrod (7/15) quadrature, 1-D and nested over the
//! ordered simplex `lo < x_1 < … < x_m < hi`.

#![allow(clippy::excessive_precision)]

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
// Gauss weights for XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

const MAX_INTERVALS: usize = 2000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quad {
    pub value: f64,
    pub error: f64,
}

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Quad {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for (j, (&x, &w)) in XGK.iter().zip(&WGK).take(7).enumerate() {
        let s = f(c - h * x) + f(c + h * x);
        kron += w * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    Quad {
        value: kron * h,
        error: ((kron - gauss) * h).abs(),
    }
}

struct Piece {
    a: f64,
    b: f64,
    q: Quad,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.q.error == other.q.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.q.error.total_cmp(&other.q.error)
    }
}

/// Globally adaptive bisection; returns the best estimate even when the
/// tolerance was not reached (check `error`).
pub fn integrate_best<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Quad {
    if a == b {
        return Quad { value: 0.0, error: 0.0 };
    }
    let first = gk15(&mut f, a, b);
    let mut heap = BinaryHeap::new();
    let mut total = first;
    heap.push(Piece { a, b, q: first });
    while total.error > abs_tol.max(rel_tol * total.value.abs()) && heap.len() < MAX_INTERVALS {
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            heap.push(worst);
            break;
        }
        let left = gk15(&mut f, worst.a, mid);
        let right = gk15(&mut f, mid, worst.b);
        total.value += left.value + right.value - worst.q.value;
        total.error += left.error + right.error - worst.q.error;
        heap.push(Piece { a: worst.a, b: mid, q: left });
        heap.push(Piece { a: mid, b: worst.b, q: right });
    }
    // Re-sum to shed accumulated update rounding.
    let (value, error) = heap
        .iter()
        .fold((0.0, 0.0), |(v, e), p| (v + p.q.value, e + p.q.error));
    Quad { value, error }
}

pub fn integrate<F: FnMut(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<Quad> {
    let q = integrate_best(f, a, b, abs_tol, rel_tol);
    if q.error > abs_tol.max(rel_tol * q.value.abs()) {
        return Err(Error::NonConvergence {
            achieved: q.error,
            requested: abs_tol,
        });
    }
    Ok(q)
}

/// Integrates `f` over `{lo < x_1 < x_2 < … < x_m < hi}` by nesting the 1-D
/// rule. `f` receives the sorted point. Inner levels run at a tighter
/// tolerance so their errors stay below the outer budget.
pub fn integrate_ordered<F: Fn(&[f64]) -> f64>(m: usize, lo: f64, hi: f64, f: F, abs_tol: f64) -> Result<Quad> {
    if m == 0 {
        return Ok(Quad { value: f(&[]), error: 0.0 });
    }
    let mut point = vec![0.0; m];
    let mut inner_err = 0.0_f64;
    let q = {
        let f = &f;
        let point = &mut point;
        let inner_err = &mut inner_err;
        integrate_best(
            |x| {
                point[0] = x;
                let (v, e) = nested_level(1, m, x, hi, point, f, abs_tol * 1e-3);
                *inner_err = inner_err.max(e);
                v
            },
            lo,
            hi,
            abs_tol,
            0.0,
        )
    };
    let total_err = q.error + inner_err * (hi - lo);
    if total_err > abs_tol {
        return Err(Error::NonConvergence {
            achieved: total_err,
            requested: abs_tol,
        });
    }
    Ok(Quad { value: q.value, error: total_err })
}

fn nested_level<F: Fn(&[f64]) -> f64>(
    level: usize,
    m: usize,
    lo: f64,
    hi: f64,
    point: &mut [f64],
    f: &F,
    tol: f64,
) -> (f64, f64) {
    if level == m {
        return (f(point), 0.0);
    }
    let mut inner_err = 0.0_f64;
    let q = integrate_best(
        |x| {
            point[level] = x;
            let (v, e) = nested_level(level + 1, m, x, hi, point, f, tol * 1e-3);
            inner_err = inner_err.max(e);
            v
        },
        lo,
        hi,
        tol,
        0.0,
    );
    (q.value, q.error + inner_err * (hi - lo))
}
