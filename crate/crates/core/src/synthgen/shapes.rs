//! Irregular fragment shapes built from unions of overlapping ellipsoids.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::rotation::{Rotation, Vec3};
use crate::separation::{label_components, Connectivity};
use crate::volume::{core, shell, Mask, FACE_OFFSETS};

#[derive(Debug, Clone)]
pub(crate) struct Ellipsoid {
    center: Vec3,
    semi_axes: Vec3,
    /// Particle-to-body frame.
    to_body: Rotation,
}

impl Ellipsoid {
    fn contains(&self, p: Vec3) -> bool {
        let d = [
            p[0] - self.center[0],
            p[1] - self.center[1],
            p[2] - self.center[2],
        ];
        let q = self.to_body.apply(d);
        (0..3)
            .map(|a| (q[a] / self.semi_axes[a]).powi(2))
            .sum::<f64>()
            <= 1.0
    }

    fn reach(&self) -> f64 {
        let c = self.center;
        (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt()
            + self.semi_axes.iter().cloned().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub(crate) struct ParticleShape {
    parts: Vec<Ellipsoid>,
}

fn random_orientation(rng: &mut ChaCha8Rng) -> Rotation {
    Rotation::from_euler_deg([
        rng.random_range(0.0..360.0),
        rng.random_range(0.0..180.0),
        rng.random_range(0.0..360.0),
    ])
}

impl ParticleShape {
    /// Two to six ellipsoids around a characteristic radius drawn from
    /// `[r_min, r_max]`. Semi-axes stay within `[r_min / 2, r_max]`.
    pub(crate) fn from_seed(seed: u64, r_min: f64, r_max: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let radius = if r_max > r_min {
            rng.random_range(r_min..=r_max)
        } else {
            r_min
        };
        let clamp = |x: f64| x.clamp(0.5 * r_min, r_max.max(r_min));
        let count = rng.random_range(2..=6usize);
        let mut parts = Vec::with_capacity(count);
        let main_axes = [
            clamp(radius * rng.random_range(0.4..1.6)),
            clamp(radius * rng.random_range(0.4..1.6)),
            clamp(radius * rng.random_range(0.4..1.6)),
        ];
        parts.push(Ellipsoid {
            center: [0.0; 3],
            semi_axes: main_axes,
            to_body: random_orientation(&mut rng),
        });
        let main_max = main_axes.iter().cloned().fold(0.0, f64::max);
        for _ in 1..count {
            let dir = random_orientation(&mut rng).apply([1.0, 0.0, 0.0]);
            let dist = rng.random_range(0.5..1.0) * main_max;
            parts.push(Ellipsoid {
                center: [dir[0] * dist, dir[1] * dist, dir[2] * dist],
                semi_axes: [
                    clamp(radius * rng.random_range(0.35..0.8)),
                    clamp(radius * rng.random_range(0.35..0.8)),
                    clamp(radius * rng.random_range(0.35..0.8)),
                ],
                to_body: random_orientation(&mut rng),
            });
        }
        ParticleShape { parts }
    }

    fn contains(&self, p: Vec3) -> bool {
        self.parts.iter().any(|e| e.contains(p))
    }

    /// Samples the shape rotated by `rotation` at voxel centres shifted by
    /// `offset`, then regularizes and crops it tight.
    pub(crate) fn rasterize(&self, rotation: &Rotation, offset: Vec3) -> Mask {
        let reach = self.parts.iter().map(Ellipsoid::reach).fold(0.0, f64::max);
        let half = reach.ceil() as i64 + 2;
        let side = (2 * half + 1) as usize;
        let inv = rotation.inverse();
        let mut grid = Mask::new([side; 3], false);
        for z in 0..side {
            for y in 0..side {
                for x in 0..side {
                    let p = [
                        (x as i64 - half) as f64 - offset[0],
                        (y as i64 - half) as f64 - offset[1],
                        (z as i64 - half) as f64 - offset[2],
                    ];
                    if self.contains(inv.apply(p)) {
                        grid.set([x, y, z], true);
                    }
                }
            }
        }
        tight(&regularize(&grid))
    }
}

/// Repeatedly strips surface voxels that have no face neighbour in the
/// interior, so every surface voxel rests on an interior voxel.
pub(crate) fn regularize(mask: &Mask) -> Mask {
    let mut m = mask.clone();
    loop {
        let sh = shell(&m);
        let interior = core(&m);
        let mut changed = false;
        for i in 0..m.len() {
            if !sh.data()[i] {
                continue;
            }
            let c = m.coords(i);
            let supported = FACE_OFFSETS.iter().any(|o| {
                let q = [c[0] as i64 + o[0], c[1] as i64 + o[1], c[2] as i64 + o[2]];
                interior.get_signed(q).unwrap_or(false)
            });
            if !supported {
                m.data_mut()[i] = false;
                changed = true;
            }
        }
        if !changed {
            return m;
        }
    }
}

/// Interior nonempty and 26-connected, surface fully supported.
pub(crate) fn is_well_formed(mask: &Mask) -> bool {
    let interior = core(mask);
    if interior.popcount() == 0 {
        return false;
    }
    if label_components(&interior, Connectivity::TwentySix).max_label() != 1 {
        return false;
    }
    label_components(mask, Connectivity::Six).max_label() == 1 && regularize(mask) == *mask
}

/// Crops a mask to the bounding box of its set voxels.
pub(crate) fn tight(mask: &Mask) -> Mask {
    let pts: Vec<_> = mask.iter_set().collect();
    match crate::volume::MaskCrop::from_points(&pts) {
        Some(c) => c.mask,
        None => Mask::new([1, 1, 1], false),
    }
}

/// Applies an axis-aligned rotation to a mask as an exact voxel permutation.
/// The result is re-anchored at the origin.
pub fn permute_axis_aligned(mask: &Mask, rotation: &Rotation) -> Mask {
    assert!(rotation.is_axis_aligned(), "rotation is not axis aligned");
    let d = mask.dims();
    let corner = rotation.apply([
        (d[0] - 1) as f64,
        (d[1] - 1) as f64,
        (d[2] - 1) as f64,
    ]);
    let shift = [
        (-corner[0]).max(0.0) as i64,
        (-corner[1]).max(0.0) as i64,
        (-corner[2]).max(0.0) as i64,
    ];
    let out_dims = [
        corner[0].abs() as usize + 1,
        corner[1].abs() as usize + 1,
        corner[2].abs() as usize + 1,
    ];
    let mut out = Mask::new(out_dims, false);
    for p in mask.iter_set() {
        let q = rotation.apply([p[0] as f64, p[1] as f64, p[2] as f64]);
        out.set(
            [
                (q[0] as i64 + shift[0]) as usize,
                (q[1] as i64 + shift[1]) as usize,
                (q[2] as i64 + shift[2]) as usize,
            ],
            true,
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rotation::axis_aligned_rotations;

    #[test]
    fn shapes_are_deterministic_and_regular() {
        for seed in 0..10 {
            let a = ParticleShape::from_seed(seed, 4.0, 8.0).rasterize(&Rotation::IDENTITY, [0.0; 3]);
            let b = ParticleShape::from_seed(seed, 4.0, 8.0).rasterize(&Rotation::IDENTITY, [0.0; 3]);
            assert_eq!(a, b);
            assert!(a.popcount() > 100);
            assert_eq!(regularize(&a), a);
        }
    }

    #[test]
    fn permutation_preserves_count() {
        let m = ParticleShape::from_seed(3, 4.0, 6.0).rasterize(&Rotation::IDENTITY, [0.0; 3]);
        for r in axis_aligned_rotations() {
            let p = permute_axis_aligned(&m, &Rotation::from_euler_deg(r));
            assert_eq!(p.popcount(), m.popcount());
            assert_eq!(tight(&p), p);
        }
    }
}
