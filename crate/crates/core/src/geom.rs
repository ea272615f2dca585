//! Small fixed-size vector helpers. Positions are always 3-vectors; planar
//! packings keep z = 0.

pub type Vec3 = [f64; 3];

#[inline]
pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn normalize(a: Vec3) -> Vec3 {
    scale(a, 1.0 / norm(a))
}

/// Orthonormal basis of the plane perpendicular to the unit vector `n`.
pub fn tangent_basis(n: Vec3) -> (Vec3, Vec3) {
    let helper = if n[2].abs() < 0.9 {
        [0.0, 0.0, 1.0]
    } else {
        [1.0, 0.0, 0.0]
    };
    let t1 = normalize(cross(n, helper));
    let t2 = cross(n, t1);
    (t1, t2)
}

/// Separation `b - a` under the minimum-image convention on the axes where
/// `period` is `Some(L)` with L > 0.
#[inline]
pub fn min_image_delta(a: Vec3, b: Vec3, period: &[Option<f64>; 3]) -> Vec3 {
    let mut d = sub(b, a);
    for k in 0..3 {
        if let Some(len) = period[k] {
            d[k] -= len * (d[k] / len).round();
        }
    }
    d
}

#[inline]
pub fn min_image_distance(a: Vec3, b: Vec3, period: &[Option<f64>; 3]) -> f64 {
    norm(min_image_delta(a, b, period))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn min_image_wraps_across_the_box() {
        let period = [Some(100.0), Some(100.0), Some(100.0)];
        let d = min_image_distance([1.0, 50.0, 50.0], [99.0, 50.0, 50.0], &period);
        assert!((d - 2.0).abs() < 1e-12);
    }

    #[test]
    fn tangent_basis_is_orthonormal() {
        for n in [[0.0, 0.0, 1.0], normalize([1.0, 2.0, -0.5]), [1.0, 0.0, 0.0]] {
            let (a, b) = tangent_basis(n);
            assert!(dot(a, n).abs() < 1e-12);
            assert!(dot(b, n).abs() < 1e-12);
            assert!(dot(a, b).abs() < 1e-12);
            assert!((norm(a) - 1.0).abs() < 1e-12);
            assert!((norm(b) - 1.0).abs() < 1e-12);
        }
    }
}
