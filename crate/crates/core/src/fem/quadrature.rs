//! Fixed triangle rules, three-point Gauss in time and an adaptive
//! Gauss–Kronrod integrator for the constitutive integrals.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

/// A triangle rule: barycentric points and weights summing to one.
pub struct TriangleRule {
    pub points: &'static [[f64; 3]],
    pub weights: &'static [f64],
}

const S6: f64 = 1.0 / 6.0;
const T3: f64 = 2.0 / 3.0;

/// Interior three-point rule, exact for quadratics.
pub const TRI_DEGREE2: TriangleRule =
    TriangleRule { points: &[[T3, S6, S6], [S6, T3, S6], [S6, S6, T3]], weights: &[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0] };

// Seven-point rule exact for quintics; sqrt(15) expanded to literals.
const A1: f64 = 0.101_286_507_323_456_34;
const B1: f64 = 0.797_426_985_353_087_3;
const A2: f64 = 0.470_142_064_105_115_1;
const B2: f64 = 0.059_715_871_789_769_82;
const W0: f64 = 0.225;
const W1: f64 = 0.125_939_180_544_827_15;
const W2: f64 = 0.132_394_152_788_506_2;

pub const TRI_DEGREE5: TriangleRule = TriangleRule {
    points: &[
        [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
        [A1, A1, B1],
        [A1, B1, A1],
        [B1, A1, A1],
        [A2, A2, B2],
        [A2, B2, A2],
        [B2, A2, A2],
    ],
    weights: &[W0, W1, W1, W1, W2, W2, W2],
};

impl TriangleRule {
    /// `∫_K f` for the triangle with vertices `p` and area `area`.
    pub fn integrate(&self, p: &[[f64; 2]; 3], area: f64, f: &impl Fn(f64, f64) -> f64) -> f64 {
        let mut sum = 0.0;
        for (l, w) in self.points.iter().zip(self.weights) {
            let x = l[0] * p[0][0] + l[1] * p[1][0] + l[2] * p[2][0];
            let y = l[0] * p[0][1] + l[1] * p[1][1] + l[2] * p[2][1];
            sum += w * f(x, y);
        }
        sum * area
    }
}

/// Three-point Gauss–Legendre abscissae on [-1, 1] and weights.
pub const GAUSS3: [(f64, f64); 3] =
    [(-0.774_596_669_241_483_4, 5.0 / 9.0), (0.0, 8.0 / 9.0), (0.774_596_669_241_483_4, 5.0 / 9.0)];

/// Mean value of `f` over `[a, b]` by three-point Gauss.
pub fn gauss3_mean(a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    0.5 * GAUSS3.iter().map(|&(x, w)| w * f(mid + half * x)).sum::<f64>()
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] =
    [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

fn kronrod15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
    let fc = f(c);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for k in 0..7 {
        let pair = f(c - h * XGK[k]) + f(c + h * XGK[k]);
        kron += WGK[k] * pair;
        if k % 2 == 1 {
            gauss += WG[k / 2] * pair;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
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
        self.err.total_cmp(&other.err)
    }
}

/// Globally adaptive 7/15-point Gauss–Kronrod integration to absolute
/// tolerance `tol`. Endpoints are never evaluated, so integrable endpoint
/// singularities are allowed.
pub fn integrate_adaptive(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    const MAX_PIECES: usize = 4000;
    if a == b {
        return Ok(0.0);
    }
    let (value, err) = kronrod15(&f, a, b);
    let mut heap = BinaryHeap::new();
    let (mut total, mut total_err) = (value, err);
    heap.push(Piece { a, b, value, err });
    while total_err > tol {
        if !total.is_finite() {
            return Err(Error::Quadrature { a, b, msg: "integrand is not finite at a quadrature node".into() });
        }
        if heap.len() >= MAX_PIECES {
            return Err(Error::Quadrature {
                a,
                b,
                msg: format!("{MAX_PIECES} subintervals, estimated error {total_err:.3e} > {tol:.3e}"),
            });
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            return Err(Error::Quadrature {
                a: worst.a,
                b: worst.b,
                msg: format!("interval cannot be split further, estimated error {total_err:.3e}"),
            });
        }
        let (v1, e1) = kronrod15(&f, worst.a, mid);
        let (v2, e2) = kronrod15(&f, mid, worst.b);
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.err;
        heap.push(Piece { a: worst.a, b: mid, value: v1, err: e1 });
        heap.push(Piece { a: mid, b: worst.b, value: v2, err: e2 });
    }
    if !total.is_finite() {
        return Err(Error::Quadrature { a, b, msg: "integral is not finite".into() });
    }
    // re-sum to shed the running-update rounding
    Ok(heap.into_sorted_vec().iter().map(|p| p.value).sum())
}
