//! Cumulative-integral lookup tables with monotone cubic Hermite
//! interpolation.
//!
//! `[0, 1]` is cut at the breakpoints of the integrand (kinks), and every
//! segment `[a, b]` carries a grid `x = a + (b - a) sin²(π u / 2)` uniform in
//! `u`, which clusters nodes at both segment ends where power-type
//! singularities live.

use std::f64::consts::FRAC_PI_2;

use crate::error::Result;
use crate::fem::quadrature::integrate_adaptive;

/// Grid nodes per segment.
pub(crate) const TABLE_POINTS: usize = 4096;
/// Absolute tolerance for the full integral over `[0, 1]`.
pub(crate) const AUX_TOLERANCE: f64 = 1e-10;

#[derive(Clone)]
struct Segment {
    a: f64,
    b: f64,
    /// Values of `F` at the grid nodes.
    values: Vec<f64>,
    /// `dF/du` at the grid nodes.
    slopes: Vec<f64>,
}

impl Segment {
    fn to_u(&self, x: f64) -> f64 {
        let t = ((x - self.a) / (self.b - self.a)).clamp(0.0, 1.0);
        if t <= 0.5 {
            t.sqrt().asin() / FRAC_PI_2
        } else {
            1.0 - (1.0 - t).sqrt().asin() / FRAC_PI_2
        }
    }

    fn eval(&self, x: f64) -> f64 {
        let n = self.values.len();
        let h = 1.0 / (n - 1) as f64;
        let u = self.to_u(x);
        let k = ((u / h) as usize).min(n - 2);
        let t = (u - k as f64 * h) / h;
        let (y0, y1) = (self.values[k], self.values[k + 1]);
        let (d0, d1) = (self.slopes[k] * h, self.slopes[k + 1] * h);
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * y0 + (t3 - 2.0 * t2 + t) * d0 + (-2.0 * t3 + 3.0 * t2) * y1 + (t3 - t2) * d1
    }
}

/// Position `x`, complement `1 - x` and `dx/du` at parameter `u` of the
/// segment `[a, b]`. The complement is formed without cancellation so that
/// integrands singular at `x = 1` can be evaluated arbitrarily close to it.
fn node(a: f64, b: f64, u: f64) -> (f64, f64, f64) {
    let s = (FRAC_PI_2 * u).sin();
    let c = (FRAC_PI_2 * (1.0 - u)).sin();
    let w = b - a;
    let x = if u >= 1.0 { b } else { a + w * s * s };
    (x, (1.0 - b) + w * c * c, w * 2.0 * FRAC_PI_2 * s * c)
}

/// `F(x) = ∫_0^x f` over `[0, 1]`.
#[derive(Clone)]
pub(crate) struct Table {
    segments: Vec<Segment>,
}

impl Table {
    /// `f(x, 1 - x)` is the integrand; `breaks` are interior kinks of `f`.
    pub(crate) fn build(f: impl Fn(f64, f64) -> f64, breaks: &[f64]) -> Result<Self> {
        let mut cuts = vec![0.0];
        cuts.extend(breaks.iter().copied().filter(|&b| b > 0.0 && b < 1.0));
        cuts.push(1.0);
        let mut segments = Vec::with_capacity(cuts.len() - 1);
        let mut offset = 0.0;
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            let n = TABLE_POINTS;
            let h = 1.0 / (n - 1) as f64;
            let tol = AUX_TOLERANCE * (b - a) / (n - 1) as f64;
            // dF/du = f(x) dx/du
            let g = |u: f64| {
                let (x, xc, dx) = node(a, b, u);
                f(x, xc) * dx
            };
            let mut values = Vec::with_capacity(n);
            values.push(offset);
            for k in 0..n - 1 {
                let u1 = if k == n - 2 { 1.0 } else { (k + 1) as f64 * h };
                offset += integrate_adaptive(g, k as f64 * h, u1, tol)?;
                values.push(offset);
            }
            let mut slopes: Vec<f64> = (0..n).map(|k| g(if k == n - 1 { 1.0 } else { k as f64 * h })).collect();
            limit_slopes(&values, &mut slopes, h);
            segments.push(Segment { a, b, values, slopes });
        }
        Ok(Table { segments })
    }

    pub(crate) fn total(&self) -> f64 {
        *self.segments.last().and_then(|s| s.values.last()).expect("non-empty table")
    }

    /// Interpolated value; arguments are clamped to `[0, 1]`.
    pub(crate) fn eval(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, 1.0);
        let seg = self.segments.iter().find(|s| x <= s.b).unwrap_or_else(|| self.segments.last().unwrap());
        seg.eval(x)
    }
}

/// Fritsch–Carlson limiting of nodal slopes on intervals where the data are
/// monotone. Non-finite slopes (integrable endpoint singularities) fall back
/// to the adjacent secant first. Intervals containing a genuine extremum
/// (slopes of opposite sign) are left untouched.
fn limit_slopes(values: &[f64], slopes: &mut [f64], h: f64) {
    let n = values.len();
    let secant = |k: usize| (values[k + 1] - values[k]) / h;
    for k in 0..n {
        if !slopes[k].is_finite() {
            slopes[k] = if k + 1 < n { secant(k) } else { secant(k - 1) };
        }
    }
    for k in 0..n - 1 {
        let delta = secant(k);
        let (d0, d1) = (slopes[k], slopes[k + 1]);
        if d0 * d1 < 0.0 {
            continue;
        }
        if delta == 0.0 {
            slopes[k] = 0.0;
            slopes[k + 1] = 0.0;
            continue;
        }
        let (a, b) = ((d0 / delta).max(0.0), (d1 / delta).max(0.0));
        let r = a * a + b * b;
        let scale = if r > 9.0 { 3.0 / r.sqrt() } else { 1.0 };
        slopes[k] = a * scale * delta;
        slopes[k + 1] = b * scale * delta;
    }
}
