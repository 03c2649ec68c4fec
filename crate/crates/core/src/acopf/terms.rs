//! Value, gradient and Hessian of the polar power expressions
//!
//! ```text
//! P = G_ii v_i² + v_i v_k (G_ik cos θ_ik + B_ik sin θ_ik)
//! Q = -B_ii v_i² + v_i v_k (G_ik sin θ_ik - B_ik cos θ_ik)
//! ```
//!
//! with local variable order `[θ_i, θ_k, v_i, v_k]`.

use num_complex::Complex64;

pub(crate) type Grad4 = [f64; 4];
pub(crate) type Hess4 = [[f64; 4]; 4];

/// Self term `c v_i²` (acts on `v_i` only).
pub(crate) fn self_term(c: f64, vi: f64) -> (f64, f64, f64) {
    (c * vi * vi, 2.0 * c * vi, 2.0 * c)
}

/// Mutual term `v_i v_k φ(θ_i - θ_k)` where `φ = α cos + β sin`.
pub(crate) fn mutual_term(alpha: f64, beta: f64, vi: f64, vk: f64, dtheta: f64) -> (f64, Grad4, Hess4) {
    let (s, c) = dtheta.sin_cos();
    let phi = alpha * c + beta * s;
    let dphi = -alpha * s + beta * c;
    let ddphi = -phi;
    let vv = vi * vk;
    let grad = [vv * dphi, -vv * dphi, vk * phi, vi * phi];
    let mut h = [[0.0; 4]; 4];
    h[0][0] = vv * ddphi;
    h[0][1] = -vv * ddphi;
    h[1][1] = vv * ddphi;
    h[0][2] = vk * dphi;
    h[0][3] = vi * dphi;
    h[1][2] = -vk * dphi;
    h[1][3] = -vi * dphi;
    h[2][3] = phi;
    for r in 0..4 {
        for c in 0..r {
            h[r][c] = h[c][r];
        }
    }
    (vv * phi, grad, h)
}

/// `(α, β)` of the mutual active-power term for admittance `y`.
pub(crate) fn p_coeffs(y: Complex64) -> (f64, f64) {
    (y.re, y.im)
}

/// `(α, β)` of the mutual reactive-power term for admittance `y`.
pub(crate) fn q_coeffs(y: Complex64) -> (f64, f64) {
    (-y.im, y.re)
}

/// Full value/gradient/Hessian of `c_self v_i² + v_i v_k φ` in local order.
pub(crate) fn branch_end(c_self: f64, alpha: f64, beta: f64, vi: f64, vk: f64, dtheta: f64) -> (f64, Grad4, Hess4) {
    let (val, mut g, mut h) = mutual_term(alpha, beta, vi, vk, dtheta);
    let (sv, sg, sh) = self_term(c_self, vi);
    g[2] += sg;
    h[2][2] += sh;
    (val + sv, g, h)
}
