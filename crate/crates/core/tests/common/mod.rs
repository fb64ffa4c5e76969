//! Direct, unoptimised versions of the voxel operations, run against the
//! library on seeded random volumes. Each check panics on the first
//! disagreement.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use svl_forge::boundary::{explicit_boundary_labels, gaussian_kernel, ignore_mask, patch_boundary};
use svl_forge::correction::{majority_vote, pairwise_correct, Instance, PairTransforms};
use svl_forge::matching::dice;
use svl_forge::rotation::{RigidTransform, Rotation};
use svl_forge::separation::fill_boundary_nearest;
use svl_forge::volume::{Labels, Mask, MaskCrop};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn dims(r: &mut ChaCha8Rng, max: usize) -> [usize; 3] {
    [0; 3].map(|_| r.random_range(1..=max))
}

fn all_points(d: [usize; 3]) -> impl Iterator<Item = [usize; 3]> {
    (0..d[2]).flat_map(move |z| (0..d[1]).flat_map(move |y| (0..d[0]).map(move |x| [x, y, z])))
}

fn random_mask(r: &mut ChaCha8Rng, d: [usize; 3], density: f64) -> Mask {
    let mut m = Mask::new(d, false);
    for p in all_points(d) {
        m.set(p, r.random_bool(density));
    }
    m
}

/// A few labeled boxes, later ones painted over earlier ones.
fn random_labels(r: &mut ChaCha8Rng, d: [usize; 3], boxes: u32) -> Labels {
    let mut l = Labels::new(d, 0);
    for id in 1..=boxes {
        let lo = [0, 1, 2].map(|a| r.random_range(0..d[a]));
        let hi = [0, 1, 2].map(|a| r.random_range(lo[a]..d[a]));
        for z in lo[2]..=hi[2] {
            for y in lo[1]..=hi[1] {
                for x in lo[0]..=hi[0] {
                    l.set([x, y, z], id);
                }
            }
        }
    }
    l
}

/// Never empty: one voxel is always set.
fn random_crop(r: &mut ChaCha8Rng, d: [usize; 3], density: f64) -> MaskCrop {
    let mut pts: Vec<[usize; 3]> = all_points(d).filter(|_| r.random_bool(density)).collect();
    pts.push([0, 1, 2].map(|a| r.random_range(0..d[a])));
    MaskCrop::from_points(&pts).unwrap()
}

fn random_transform(r: &mut ChaCha8Rng, d: [usize; 3]) -> RigidTransform {
    let angles = [0; 3].map(|_| r.random_range(0.0..360.0));
    let center = d.map(|v| v as f64 / 2.0);
    let shift = [0; 3].map(|_| r.random_range(-3.0..3.0));
    RigidTransform::about(Rotation::from_euler_deg(angles), center, shift)
}

fn signed(p: [usize; 3]) -> [i64; 3] {
    p.map(|v| v as i64)
}

pub fn dice_matches_dense_count(cases: u64) {
    for seed in 0..cases {
        let mut r = rng(seed);
        let d = dims(&mut r, 32);
        let p = random_crop(&mut r, d, 0.05);
        let q = random_crop(&mut r, d, 0.05);
        let (mut np, mut nq, mut both) = (0, 0, 0);
        for x in all_points(d) {
            let (a, b) = (p.contains(signed(x)), q.contains(signed(x)));
            np += a as usize;
            nq += b as usize;
            both += (a && b) as usize;
        }
        let want = 2.0 * both as f64 / (np + nq) as f64;
        assert_eq!(dice(&p, &q), want, "seed {seed}");
    }
}

pub fn patch_boundary_matches_neighbour_scan(cases: u64) {
    for seed in 0..cases {
        let mut r = rng(seed);
        let d = dims(&mut r, 32);
        let density = r.random_range(0.05..0.95);
        let m = random_mask(&mut r, d, density);
        let got = patch_boundary(&m);
        for x in all_points(d) {
            let mut want = false;
            for a in 0..3 {
                for s in [-1i64, 1] {
                    let mut y = signed(x);
                    y[a] += s;
                    if let Some(v) = m.get_signed(y) {
                        want |= v != m.get(x);
                    }
                }
            }
            assert_eq!(got.get(x), want, "seed {seed} at {x:?}");
        }
    }
}

pub fn fill_matches_nearest_site_search(cases: u64) {
    for seed in 0..cases {
        let mut r = rng(seed);
        let d = dims(&mut r, 16);
        let mut labels = Labels::new(d, 0);
        let sites = r.random_range(0..6);
        for _ in 0..sites {
            let p = [0, 1, 2].map(|a| r.random_range(0..d[a]));
            labels.set(p, r.random_range(1..5));
        }
        let removed = random_mask(&mut r, d, 0.5);
        let got = fill_boundary_nearest(&labels, &removed);
        let site_list: Vec<([usize; 3], u32)> = all_points(d)
            .filter(|&p| labels.get(p) != 0)
            .map(|p| (p, labels.get(p)))
            .collect();
        let needs_fill = all_points(d).any(|p| removed.get(p) && labels.get(p) == 0);
        if site_list.is_empty() && needs_fill {
            assert!(got.is_err(), "seed {seed}");
            continue;
        }
        let got = got.unwrap();
        for x in all_points(d) {
            let want = if removed.get(x) && labels.get(x) == 0 {
                site_list
                    .iter()
                    .map(|&(p, l)| {
                        let d2: i64 = (0..3).map(|a| (p[a] as i64 - x[a] as i64).pow(2)).sum();
                        (d2, l)
                    })
                    .min()
                    .unwrap()
                    .1
            } else {
                labels.get(x)
            };
            assert_eq!(got.get(x), want, "seed {seed} at {x:?}");
        }
    }
}

/// Boundary image by neighbour scan, then a direct triple sum with the
/// integer kernel.
fn explicit_brute(s: &Labels, sigma: f64, threshold: f64) -> Mask {
    let d = s.dims();
    let mut phi = Mask::new(d, false);
    for x in all_points(d) {
        for a in 0..3 {
            for sgn in [-1i64, 1] {
                let mut y = signed(x);
                y[a] += sgn;
                if s.get_signed(y).is_some_and(|v| v != s.get(x)) {
                    phi.set(x, true);
                }
            }
        }
    }
    let k = gaussian_kernel(sigma);
    let rad = (k.len() / 2) as i64;
    let norm: i64 = k.iter().sum();
    let mut out = Mask::new(d, false);
    for x in all_points(d) {
        let mut acc = 0i64;
        for (i, &wz) in k.iter().enumerate() {
            for (j, &wy) in k.iter().enumerate() {
                for (l, &wx) in k.iter().enumerate() {
                    let y = [
                        x[0] as i64 + l as i64 - rad,
                        x[1] as i64 + j as i64 - rad,
                        x[2] as i64 + i as i64 - rad,
                    ];
                    if phi.get_signed(y).unwrap_or(false) {
                        acc += wx * wy * wz;
                    }
                }
            }
        }
        out.set(x, acc as f64 > threshold * (norm as f64).powi(3));
    }
    out
}

pub fn explicit_labels_match_direct_convolution(cases: u64) {
    for seed in 0..cases {
        let mut r = rng(seed);
        let d = dims(&mut r, 14);
        let boxes = r.random_range(0..5);
        let s = random_labels(&mut r, d, boxes);
        let sigma = [0.5, 1.0, 1.5][seed as usize % 3];
        let t = r.random_range(0.0..0.3);
        assert_eq!(explicit_boundary_labels(&s, sigma, t).unwrap(), explicit_brute(&s, sigma, t), "seed {seed}");
    }
}

pub fn ignore_mask_matches_definition(cases: u64) {
    for seed in 0..cases {
        let mut r = rng(seed);
        let d = dims(&mut r, 12);
        let boxes = r.random_range(1..6);
        let full = random_labels(&mut r, d, boxes);
        let m = full.map(|v| v != 0);
        let s = full.map(|v| if v % 2 == 1 { v } else { 0 });
        let sigma = [0.5, 1.0][seed as usize % 2];
        let t = 0.1;
        let bm = explicit_brute(&m.map(|v| v as u32), sigma, t);
        let bs = explicit_brute(&s, sigma, t);
        let got = ignore_mask(&m, &s, sigma, t).unwrap();
        for x in all_points(d) {
            let wide_m = bm.get(x) || m.get(x);
            let wide_s = bs.get(x) || s.get(x) != 0;
            assert_eq!(got.get(x), !(wide_m && !wide_s), "seed {seed} at {x:?}");
        }
    }
}

pub fn majority_vote_matches_full_scan(cases: u64) {
    for seed in 0..cases {
        let mut r = rng(seed);
        let n = r.random_range(3..=5);
        let mut instances = Vec::new();
        let mut to = vec![RigidTransform::IDENTITY];
        for k in 0..n {
            let d = dims(&mut r, 14).map(|v| v.max(4));
            let crop = random_crop(&mut r, d, 0.3);
            if k > 0 {
                to.push(random_transform(&mut r, d));
            }
            instances.push(Instance { crop, dims: d });
        }
        let pt = PairTransforms::from_root(&to);
        let strict = seed % 2 == 0;
        let got = majority_vote(&instances, &pt, strict).unwrap();
        for i in 0..n {
            let kept: Vec<[usize; 3]> = all_points(instances[i].dims)
                .filter(|&x| {
                    let votes = (0..n)
                        .filter(|&j| {
                            j != i && instances[j].crop.contains(pt.get(i, j).unwrap().apply_voxel(signed(x)))
                        })
                        .count();
                    if strict {
                        2 * votes > n
                    } else {
                        2 * votes >= n
                    }
                })
                .collect();
            assert_eq!(got[i], MaskCrop::from_points(&kept), "seed {seed} instance {i}");
        }
    }
}

pub fn pairwise_matches_full_scan(cases: u64) {
    for seed in 0..cases {
        let mut r = rng(seed);
        let d1 = dims(&mut r, 16).map(|v| v.max(3));
        let d2 = dims(&mut r, 16).map(|v| v.max(3));
        let p1 = random_crop(&mut r, d1, 0.2);
        let p2 = random_crop(&mut r, d2, 0.2);
        let m1 = random_mask(&mut r, d1, 0.7);
        let m2 = random_mask(&mut r, d2, 0.7);
        let l1 = random_mask(&mut r, d1, 0.2);
        let l2 = random_mask(&mut r, d2, 0.2);
        let t = random_transform(&mut r, d1);
        let brute = |p: &MaskCrop, q: &MaskCrop, ms: &Mask, mo: &Mask, t: &RigidTransform, l: &Mask| {
            let pts: Vec<[usize; 3]> = all_points(ms.dims())
                .filter(|&x| {
                    let y = t.apply_voxel(signed(x));
                    if p.contains(signed(x)) {
                        mo.get_signed(y).unwrap_or(false)
                    } else {
                        q.contains(y) && ms.get(x) && !l.get(x)
                    }
                })
                .collect();
            MaskCrop::from_points(&pts)
        };
        let (a, b) = pairwise_correct(&p1, &p2, &m1, &m2, &t, &l1, &l2);
        assert_eq!(a, brute(&p1, &p2, &m1, &m2, &t, &l1), "seed {seed} first");
        assert_eq!(b, brute(&p2, &p1, &m2, &m1, &t.inverse(), &l2), "seed {seed} second");
    }
}
