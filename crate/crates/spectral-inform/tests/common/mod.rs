//! Independent numeric oracles for the integration and acceptance suites.
//!
//! Everything here is deliberately self-contained: plain Simpson quadrature
//! on analytic densities plus bisection root finding. None of it calls into
//! the library's transform code, so these values can stand as independent
//! references for it.

#![allow(dead_code)]

/// Simpson's rule with `2k` intervals.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
    let n = if intervals % 2 == 0 { intervals } else { intervals + 1 };
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + h * k as f64);
    }
    acc * h / 3.0
}

/// Semicircle density on [-2, 2].
pub fn semicircle_density(x: f64) -> f64 {
    let d = 4.0 - x * x;
    if d <= 0.0 {
        0.0
    } else {
        d.sqrt() / (2.0 * std::f64::consts::PI)
    }
}

/// Quarter-circle density on [0, 2] (singular values of square iid noise).
pub fn quarter_circle_density(t: f64) -> f64 {
    let d = 4.0 - t * t;
    if d <= 0.0 || t < 0.0 {
        0.0
    } else {
        d.sqrt() / std::f64::consts::PI
    }
}

const QUAD_INTERVALS: usize = 200_000;

/// Cauchy transform of the semicircle via quadrature.
pub fn semicircle_g(z: f64) -> f64 {
    simpson(|x| semicircle_density(x) / (z - x), -2.0, 2.0, QUAD_INTERVALS)
}

/// phi transform of the quarter-circle law via quadrature.
pub fn quarter_circle_phi(z: f64) -> f64 {
    simpson(
        |t| quarter_circle_density(t) * z / (z * z - t * t),
        0.0,
        2.0,
        QUAD_INTERVALS,
    )
}

/// D-transform of the quarter-circle law at aspect ratio 1 (D = phi^2).
pub fn quarter_circle_d(z: f64) -> f64 {
    let p = quarter_circle_phi(z);
    p * p
}

/// Central finite difference of the quadrature D-transform.
pub fn quarter_circle_d_prime(z: f64) -> f64 {
    let h = 1e-6 * z.max(1.0);
    (quarter_circle_d(z + h) - quarter_circle_d(z - h)) / (2.0 * h)
}

/// Bisection for a strictly decreasing function.
pub fn bisect_decreasing(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, y: f64) -> f64 {
    assert!(f(lo) > y && f(hi) < y, "target not bracketed");
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > y {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Oracle location of the square-iid singular value outlier: the root of
/// `D(rho) = 1/theta^2` on the gap above the bulk edge 2.
pub fn quarter_circle_outlier(theta: f64) -> f64 {
    bisect_decreasing(quarter_circle_d, 2.0 + 1e-9, 50.0, 1.0 / (theta * theta))
}

/// Oracle overlap of the left (and right, at c = 1) singular vector:
/// `-2 phi(rho) / (theta^2 D'(rho))`.
pub fn quarter_circle_overlap(theta: f64) -> f64 {
    let rho = quarter_circle_outlier(theta);
    -2.0 * quarter_circle_phi(rho) / (theta * theta * quarter_circle_d_prime(rho))
}

/// Oracle location of the semicircle eigenvalue outlier: root of
/// `G(rho) = 1/theta` above 2.
pub fn semicircle_outlier(theta: f64) -> f64 {
    bisect_decreasing(semicircle_g, 2.0 + 1e-9, 50.0, 1.0 / theta)
}

#[allow(unused_imports)]
#[cfg(test)]
mod self_checks {
    use super::*;

    #[test]
    fn oracle_matches_closed_forms() {
        // Semicircle: G(z) = (z - sqrt(z^2 - 4))/2.
        for &z in &[2.2f64, 2.5, 3.0, 5.0] {
            let exact = (z - (z * z - 4.0).sqrt()) / 2.0;
            assert!((semicircle_g(z) - exact).abs() < 1e-6, "z = {z}");
        }
        // theta = 2 outliers at theta + 1/theta = 2.5 in both geometries.
        assert!((semicircle_outlier(2.0) - 2.5).abs() < 1e-6);
        assert!((quarter_circle_outlier(2.0) - 2.5).abs() < 1e-5);
        // overlap (1 - 1/theta^4)/(1 + 1/theta^2) = 0.75 at theta = 2, c=1.
        assert!((quarter_circle_overlap(2.0) - 0.75).abs() < 1e-4);
    }
}
