use std::f64::consts::PI;

use super::SimplicialMesh;

/// Outcome of the angle-condition check. Never an error: callers decide.
#[derive(Debug, Clone, PartialEq)]
pub struct AcutenessReport {
    pub ok: bool,
    /// Largest interior angle over the whole mesh, in radians.
    pub worst_angle: f64,
    /// Elements where some `∫_K ∇φ_i·∇φ_j` is positive.
    pub offenders: Vec<usize>,
}

/// Relative tolerance on the sign of `∫_K ∇φ_i·∇φ_j`, scaled by `|∇φ_i||∇φ_j||K|`.
pub const ANGLE_TOLERANCE: f64 = 1e-12;

pub fn check_acuteness(mesh: &SimplicialMesh) -> AcutenessReport {
    let mut worst = 0.0f64;
    let mut offenders = Vec::new();
    for (k, el) in mesh.elements().iter().enumerate() {
        let p = el.map(|i| mesh.nodes()[i]);
        for a in 0..3 {
            let (b, c) = ((a + 1) % 3, (a + 2) % 3);
            let u = [p[b][0] - p[a][0], p[b][1] - p[a][1]];
            let v = [p[c][0] - p[a][0], p[c][1] - p[a][1]];
            let cos =
                (u[0] * v[0] + u[1] * v[1]) / ((u[0] * u[0] + u[1] * u[1]).sqrt() * (v[0] * v[0] + v[1] * v[1]).sqrt());
            worst = worst.max(cos.clamp(-1.0, 1.0).acos());
        }
        // The angle at vertex a is obtuse iff the gradients of the two other
        // basis functions have a positive inner product.
        let grads = gradients(&p);
        let bad = (0..3).any(|a| {
            let (i, j) = ((a + 1) % 3, (a + 2) % 3);
            let dot = grads[i][0] * grads[j][0] + grads[i][1] * grads[j][1];
            dot > ANGLE_TOLERANCE * norm(grads[i]) * norm(grads[j])
        });
        if bad {
            offenders.push(k);
        }
    }
    AcutenessReport { ok: offenders.is_empty(), worst_angle: worst.min(PI), offenders }
}

fn norm(v: [f64; 2]) -> f64 {
    (v[0] * v[0] + v[1] * v[1]).sqrt()
}

/// Constant gradients of the three barycentric basis functions of a triangle.
pub(crate) fn gradients(p: &[[f64; 2]; 3]) -> [[f64; 2]; 3] {
    let twice_area = 2.0 * super::signed_area(&p[0], &p[1], &p[2]);
    let mut g = [[0.0; 2]; 3];
    for a in 0..3 {
        let (b, c) = (p[(a + 1) % 3], p[(a + 2) % 3]);
        g[a] = [(b[1] - c[1]) / twice_area, (c[0] - b[0]) / twice_area];
    }
    g
}
