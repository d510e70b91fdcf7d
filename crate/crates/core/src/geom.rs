//! Small 3D vector helpers used throughout the crate.
//!
//! Points are plain `[f64; 3]` world coordinates in millimetres.

pub type Point3 = [f64; 3];

#[inline]
pub fn sub(a: Point3, b: Point3) -> Point3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn add(a: Point3, b: Point3) -> Point3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn scale(a: Point3, s: f64) -> Point3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn dot(a: Point3, b: Point3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross(a: Point3, b: Point3) -> Point3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn norm(a: Point3) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn dist(a: Point3, b: Point3) -> f64 {
    norm(sub(a, b))
}

#[inline]
pub fn lerp(a: Point3, b: Point3, t: f64) -> Point3 {
    [
        a[0] + (b[0] - a[0]) * t,
        a[1] + (b[1] - a[1]) * t,
        a[2] + (b[2] - a[2]) * t,
    ]
}

/// Axis-aligned box in world space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Point3,
    pub max: Point3,
}

impl Aabb {
    pub fn new(min: Point3, max: Point3) -> Self {
        Aabb { min, max }
    }

    pub fn has_positive_extent(&self) -> bool {
        (0..3).all(|a| self.max[a] > self.min[a])
    }

    pub fn contains(&self, p: Point3) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }
}

/// 3x3 rotation matrix (row major) plus translation.
#[derive(Debug, Clone, Copy)]
pub struct RigidTransform {
    pub rotation: [[f64; 3]; 3],
    pub translation: Point3,
}

impl RigidTransform {
    pub fn identity() -> Self {
        RigidTransform {
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0; 3],
        }
    }

    /// Rotation by `angle_rad` about the given axis (Rodrigues), then translation.
    pub fn about_axis(axis: Point3, angle_rad: f64, translation: Point3) -> Self {
        let n = norm(axis);
        assert!(n > 0.0, "rotation axis must be nonzero");
        let u = scale(axis, 1.0 / n);
        let (s, c) = angle_rad.sin_cos();
        let omc = 1.0 - c;
        let rotation = [
            [
                c + u[0] * u[0] * omc,
                u[0] * u[1] * omc - u[2] * s,
                u[0] * u[2] * omc + u[1] * s,
            ],
            [
                u[1] * u[0] * omc + u[2] * s,
                c + u[1] * u[1] * omc,
                u[1] * u[2] * omc - u[0] * s,
            ],
            [
                u[2] * u[0] * omc - u[1] * s,
                u[2] * u[1] * omc + u[0] * s,
                c + u[2] * u[2] * omc,
            ],
        ];
        RigidTransform { rotation, translation }
    }

    pub fn apply(&self, p: Point3) -> Point3 {
        let r = &self.rotation;
        [
            r[0][0] * p[0] + r[0][1] * p[1] + r[0][2] * p[2] + self.translation[0],
            r[1][0] * p[0] + r[1][1] * p[1] + r[1][2] * p[2] + self.translation[1],
            r[2][0] * p[0] + r[2][1] * p[1] + r[2][2] * p[2] + self.translation[2],
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotation_preserves_length_and_angles() {
        let t = RigidTransform::about_axis([1.0, 2.0, -0.5], 1.234, [5.0, -3.0, 2.0]);
        let a = [1.0, 0.0, 0.0];
        let b = [0.3, -0.7, 2.0];
        let ta = sub(t.apply(a), t.translation);
        let tb = sub(t.apply(b), t.translation);
        assert!((norm(ta) - norm(a)).abs() < 1e-12);
        assert!((dot(ta, tb) - dot(a, b)).abs() < 1e-12);
    }

    #[test]
    fn aabb_contains() {
        let b = Aabb::new([0.0, 0.0, 0.0], [1.0, 2.0, 3.0]);
        assert!(b.contains([0.5, 1.0, 3.0]));
        assert!(!b.contains([0.5, 2.1, 1.0]));
    }
}
