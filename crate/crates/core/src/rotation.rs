//! Euler rotations about the z, y and x axes and rigid voxel transforms.
//!
//! Angles `(alpha, beta, gamma)` are in degrees and compose as
//! `R = Rz(alpha) * Ry(beta) * Rx(gamma)`. Multiples of 90 degrees use exact
//! sine/cosine values so axis-aligned rotations map integer lattices onto
//! themselves without rounding noise.

use serde::{Deserialize, Serialize};

pub type Vec3 = [f64; 3];

/// Euler angles in degrees about z, y, x.
pub type EulerDeg = [f64; 3];

fn cos_sin_deg(deg: f64) -> (f64, f64) {
    let r = deg.rem_euclid(360.0);
    if r == 0.0 {
        (1.0, 0.0)
    } else if r == 90.0 {
        (0.0, 1.0)
    } else if r == 180.0 {
        (-1.0, 0.0)
    } else if r == 270.0 {
        (0.0, -1.0)
    } else {
        let rad = deg.to_radians();
        (rad.cos(), rad.sin())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rotation {
    pub m: [[f64; 3]; 3],
}

impl Rotation {
    pub const IDENTITY: Rotation = Rotation {
        m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };

    pub fn from_euler_deg(angles: EulerDeg) -> Self {
        let (ca, sa) = cos_sin_deg(angles[0]);
        let (cb, sb) = cos_sin_deg(angles[1]);
        let (cg, sg) = cos_sin_deg(angles[2]);
        let rz = Rotation {
            m: [[ca, -sa, 0.0], [sa, ca, 0.0], [0.0, 0.0, 1.0]],
        };
        let ry = Rotation {
            m: [[cb, 0.0, sb], [0.0, 1.0, 0.0], [-sb, 0.0, cb]],
        };
        let rx = Rotation {
            m: [[1.0, 0.0, 0.0], [0.0, cg, -sg], [0.0, sg, cg]],
        };
        rz.mul(&ry).mul(&rx)
    }

    pub fn mul(&self, other: &Rotation) -> Rotation {
        let mut m = [[0.0; 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (0..3).map(|k| self.m[i][k] * other.m[k][j]).sum();
            }
        }
        Rotation { m }
    }

    pub fn inverse(&self) -> Rotation {
        let mut m = [[0.0; 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = self.m[j][i];
            }
        }
        Rotation { m }
    }

    #[inline]
    pub fn apply(&self, v: Vec3) -> Vec3 {
        [
            self.m[0][0] * v[0] + self.m[0][1] * v[1] + self.m[0][2] * v[2],
            self.m[1][0] * v[0] + self.m[1][1] * v[1] + self.m[1][2] * v[2],
            self.m[2][0] * v[0] + self.m[2][1] * v[1] + self.m[2][2] * v[2],
        ]
    }

    /// True when every entry is exactly -1, 0 or 1.
    pub fn is_axis_aligned(&self) -> bool {
        self.m
            .iter()
            .flatten()
            .all(|&x| x == 0.0 || x == 1.0 || x == -1.0)
    }
}

/// The 24 proper axis-aligned cube rotations, each as the lexicographically
/// smallest Euler triple (multiples of 90 degrees) producing it.
pub fn axis_aligned_rotations() -> Vec<EulerDeg> {
    let steps = [0.0, 90.0, 180.0, 270.0];
    let mut seen: Vec<Rotation> = Vec::with_capacity(24);
    let mut out = Vec::with_capacity(24);
    for &a in &steps {
        for &b in &steps {
            for &g in &steps {
                let r = Rotation::from_euler_deg([a, b, g]);
                if !seen.contains(&r) {
                    seen.push(r);
                    out.push([a, b, g]);
                }
            }
        }
    }
    debug_assert_eq!(out.len(), 24);
    out
}

/// `x -> R x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Rotation,
    pub translation: Vec3,
}

impl RigidTransform {
    pub const IDENTITY: RigidTransform = RigidTransform {
        rotation: Rotation::IDENTITY,
        translation: [0.0; 3],
    };

    /// Rotation about `center` followed by a shift of `shift`.
    pub fn about(rotation: Rotation, center: Vec3, shift: Vec3) -> Self {
        let rc = rotation.apply(center);
        RigidTransform {
            rotation,
            translation: [
                center[0] - rc[0] + shift[0],
                center[1] - rc[1] + shift[1],
                center[2] - rc[2] + shift[2],
            ],
        }
    }

    #[inline]
    pub fn apply(&self, v: Vec3) -> Vec3 {
        let r = self.rotation.apply(v);
        [
            r[0] + self.translation[0],
            r[1] + self.translation[1],
            r[2] + self.translation[2],
        ]
    }

    /// Applies the transform and rounds to the nearest voxel, halves up.
    #[inline]
    pub fn apply_voxel(&self, p: [i64; 3]) -> [i64; 3] {
        let q = self.apply([p[0] as f64, p[1] as f64, p[2] as f64]);
        q.map(|v| (v + 0.5).floor() as i64)
    }

    pub fn inverse(&self) -> RigidTransform {
        let inv = self.rotation.inverse();
        let t = inv.apply(self.translation);
        RigidTransform {
            rotation: inv,
            translation: [-t[0], -t[1], -t[2]],
        }
    }

    /// `other ∘ self`: first `self`, then `other`.
    pub fn then(&self, other: &RigidTransform) -> RigidTransform {
        let t = other.rotation.apply(self.translation);
        RigidTransform {
            rotation: other.rotation.mul(&self.rotation),
            translation: [
                t[0] + other.translation[0],
                t[1] + other.translation[1],
                t[2] + other.translation[2],
            ],
        }
    }
}

/// Euler angles (degrees, each in `[0, 360)`) with
/// `from_euler_deg(euler_from_rotation(r)) == r` up to rounding. Angles
/// within 1e-9 degrees of a multiple of 90 are snapped onto it.
pub fn euler_from_rotation(r: &Rotation) -> EulerDeg {
    let m = &r.m;
    let sb = (-m[2][0]).clamp(-1.0, 1.0);
    let cb = (m[2][1] * m[2][1] + m[2][2] * m[2][2]).sqrt();
    let (a, b, g) = if cb > 1e-9 {
        (m[1][0].atan2(m[0][0]), sb.atan2(cb), m[2][1].atan2(m[2][2]))
    } else {
        // gimbal lock: fold gamma into alpha
        ((-m[0][1]).atan2(m[1][1]), sb.atan2(cb), 0.0)
    };
    let snap = |deg: f64| {
        let q = (deg / 90.0).round() * 90.0;
        if (deg - q).abs() < 1e-9 {
            q
        } else {
            deg
        }
    };
    normalize_angles([snap(a.to_degrees()), snap(b.to_degrees()), snap(g.to_degrees())])
}

/// Wraps each angle into `[0, 360)`.
pub fn normalize_angles(a: EulerDeg) -> EulerDeg {
    let w = |x: f64| {
        let r = x.rem_euclid(360.0);
        // rem_euclid can return 360.0 for tiny negative inputs
        if r >= 360.0 {
            0.0
        } else {
            r
        }
    };
    [w(a[0]), w(a[1]), w(a[2])]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twenty_four_distinct() {
        let rots = axis_aligned_rotations();
        assert_eq!(rots.len(), 24);
        assert_eq!(rots[0], [0.0, 0.0, 0.0]);
        for r in &rots {
            assert!(Rotation::from_euler_deg(*r).is_axis_aligned());
        }
    }

    #[test]
    fn quarter_turn_about_z() {
        let r = Rotation::from_euler_deg([90.0, 0.0, 0.0]);
        assert_eq!(r.apply([1.0, 0.0, 0.0]), [0.0, 1.0, 0.0]);
    }

    #[test]
    fn inverse_round_trip() {
        let t = RigidTransform::about(
            Rotation::from_euler_deg([33.0, -12.0, 71.0]),
            [3.0, 4.0, 5.0],
            [1.5, -2.0, 0.25],
        );
        let p = [7.0, -1.0, 2.0];
        let back = t.inverse().apply(t.apply(p));
        for a in 0..3 {
            assert!((back[a] - p[a]).abs() < 1e-12);
        }
        let id = t.then(&t.inverse());
        for a in 0..3 {
            assert!(id.translation[a].abs() < 1e-12);
        }
    }

    #[test]
    fn half_range_gamma_covers_all() {
        // Rz(a)Ry(b)Rx(g) == Rz(a+180)Ry(180-b)Rx(g-180)
        let r1 = Rotation::from_euler_deg([30.0, 45.0, 250.0]);
        let r2 = Rotation::from_euler_deg([210.0, 135.0, 70.0]);
        for i in 0..3 {
            for j in 0..3 {
                assert!((r1.m[i][j] - r2.m[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn euler_extraction_round_trips() {
        let close = |a: &Rotation, b: &Rotation| {
            a.m.iter().flatten().zip(b.m.iter().flatten()).all(|(x, y)| (x - y).abs() < 1e-9)
        };
        for angles in [[10.0, 20.0, 30.0], [300.0, 85.0, 200.0], [45.0, 90.0, 10.0], [0.0, 270.0, 0.0]] {
            let r = Rotation::from_euler_deg(angles);
            assert!(close(&Rotation::from_euler_deg(euler_from_rotation(&r)), &r), "{angles:?}");
        }
        for angles in axis_aligned_rotations() {
            let r = Rotation::from_euler_deg(angles);
            let e = euler_from_rotation(&r.inverse());
            assert!(e.iter().all(|v| v % 90.0 == 0.0));
            assert_eq!(Rotation::from_euler_deg(e), r.inverse());
        }
    }
}
