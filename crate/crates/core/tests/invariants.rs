use proptest::prelude::*;

use svl_forge::matching::{rotate_mask_by, rotdice, MatchRecord, MatchSet, ParticleRecord, RotationGrid};
use svl_forge::rotation::{axis_aligned_rotations, euler_from_rotation, RigidTransform, Rotation};
use svl_forge::separation::{label_components, positive_mask, separate, Connectivity};
use svl_forge::synthgen::permute_axis_aligned;
use svl_forge::volume::{load_volume, save_volume, Labels, Mask, Volume};

fn mask_strategy(max: usize) -> impl Strategy<Value = Mask> {
    (1..=max, 1..=max, 1..=max).prop_flat_map(|(x, y, z)| {
        prop::collection::vec(any::<bool>(), x * y * z)
            .prop_map(move |data| Mask::from_vec([x, y, z], data).unwrap())
    })
}

fn nonempty_mask(max: usize) -> impl Strategy<Value = Mask> {
    mask_strategy(max).prop_map(|mut m| {
        m.set([0, 0, 0], true);
        m
    })
}

fn shifted(m: &Mask, by: [usize; 3]) -> Vec<[usize; 3]> {
    m.iter_set().map(|p| [p[0] + by[0], p[1] + by[1], p[2] + by[2]]).collect()
}

fn close(a: &Rotation, b: &Rotation) -> bool {
    (0..3).all(|i| (0..3).all(|j| (a.m[i][j] - b.m[i][j]).abs() < 1e-9))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn histogram_ignores_cube_rotations_and_shifts(m in nonempty_mask(7), shift in prop::array::uniform3(0usize..20)) {
        let base = ParticleRecord::from_points(0, 1, &shifted(&m, [0; 3])).unwrap();
        for angles in axis_aligned_rotations() {
            let r = permute_axis_aligned(&m, &Rotation::from_euler_deg(angles));
            let moved = ParticleRecord::from_points(1, 1, &shifted(&r, shift)).unwrap();
            prop_assert_eq!(&moved.histogram, &base.histogram);
            prop_assert_eq!(moved.voxel_count, base.voxel_count);
        }
    }

    #[test]
    fn quarter_turns_round_trip(m in mask_strategy(7), k in 0usize..24, c in prop::array::uniform3(0i64..7)) {
        let rot = Rotation::from_euler_deg(axis_aligned_rotations()[k]);
        let center = c.map(|v| v as f64);
        let once = rotate_mask_by(&m, &rot, center);
        prop_assert_eq!(once.mask.popcount(), m.popcount());
        let inv = rot.inverse();
        let mut back_pts: Vec<[i64; 3]> = once
            .points()
            .into_iter()
            .map(|p| {
                let v = inv.apply([p[0] as f64 - center[0], p[1] as f64 - center[1], p[2] as f64 - center[2]]);
                [0, 1, 2].map(|a| (v[a] + center[a]).round() as i64)
            })
            .collect();
        back_pts.sort();
        let mut orig: Vec<[i64; 3]> = m.iter_set().map(|p| p.map(|v| v as i64)).collect();
        orig.sort();
        prop_assert_eq!(back_pts, orig);
    }

    #[test]
    fn euler_round_trip(a in 0.0f64..360.0, b in 0.0f64..360.0, g in 0.0f64..360.0) {
        let r = Rotation::from_euler_deg([a, b, g]);
        prop_assert!(close(&Rotation::from_euler_deg(euler_from_rotation(&r)), &r));
    }

    #[test]
    fn transform_inverse_cancels(angles in prop::array::uniform3(0.0f64..360.0), t in prop::array::uniform3(-50.0f64..50.0), p in prop::array::uniform3(-50.0f64..50.0)) {
        let x = RigidTransform { rotation: Rotation::from_euler_deg(angles), translation: t };
        let q = x.then(&x.inverse()).apply(p);
        for a in 0..3 {
            prop_assert!((q[a] - p[a]).abs() < 1e-9);
        }
    }

    #[test]
    fn separate_without_boundary_labels_components(m in mask_strategy(8)) {
        let b = Mask::new(m.dims(), false);
        let labels = separate(&m, &b, 1, Connectivity::TwentySix).unwrap();
        let comps = label_components(&m, Connectivity::TwentySix);
        prop_assert_eq!(labels.max_label(), comps.max_label());
        prop_assert_eq!(labels.map(|v| v != 0), m.clone());
    }

    #[test]
    fn separate_covers_mask((m, b) in mask_strategy(8).prop_flat_map(|m| {
        let d = m.dims();
        (Just(m), prop::collection::vec(any::<bool>(), d[0] * d[1] * d[2]).prop_map(move |v| Mask::from_vec(d, v).unwrap()))
    })) {
        let labels = separate(&m, &b, 1, Connectivity::Six).unwrap();
        prop_assert_eq!(labels.map(|v| v != 0), m);
    }

    #[test]
    fn positive_mask_is_unlabeled_remainder(m in mask_strategy(6), seed in any::<u64>()) {
        let s = m.map(|v| v as u32 * (seed % 3) as u32);
        let p = positive_mask(&m, &s).unwrap();
        for i in 0..m.len() {
            prop_assert_eq!(p.data()[i], m.data()[i] && s.data()[i] == 0);
        }
    }

    #[test]
    fn label_volume_round_trip(dims in prop::array::uniform3(1usize..9), seed in any::<u32>()) {
        let n = dims[0] * dims[1] * dims[2];
        let data: Vec<u32> = (0..n as u32).map(|i| i.wrapping_mul(2654435761) ^ seed).collect();
        let v: Labels = Volume::from_vec(dims, data).unwrap().with_spacing([0.5, 1.0, 2.0]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v");
        save_volume(&v, &path).unwrap();
        let back: Labels = load_volume(dir.path().join("v.json")).unwrap();
        prop_assert_eq!(back, v);
    }

    #[test]
    fn match_set_round_trip(
        rows in prop::collection::vec((0usize..4, 1u32..1000, 0.0f64..1.0, prop::array::uniform3(0.0f64..360.0), prop::array::uniform3(-100.0f64..100.0)), 0..10)
    ) {
        let set = MatchSet {
            matches: rows
                .into_iter()
                .map(|(s, id, d, rot, t)| MatchRecord {
                    scan_a: s,
                    id_a: id,
                    scan_b: s + 1,
                    id_b: id + 1,
                    rotdice: d,
                    rotation: rot,
                    translation: t,
                    centroid_a: [t[2], t[0], t[1]],
                })
                .collect(),
            inconsistent: Vec::new(),
        };
        prop_assert_eq!(MatchSet::from_jsonl(&set.to_jsonl().unwrap()).unwrap(), set);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn rotdice_of_self_is_one_at_zero(m in nonempty_mask(6)) {
        let p = ParticleRecord::from_points(0, 1, &shifted(&m, [2, 2, 2])).unwrap();
        let r = rotdice(&p, &p, &RotationGrid::default());
        prop_assert_eq!(r.score, 1.0);
        prop_assert_eq!(r.angles, [0.0, 0.0, 0.0]);
    }
}
