//! Turning a particle mask plus a boundary map into labeled instances.
//!
//! [`separate`] subtracts the boundary from the mask, labels the remaining
//! cores, hands every subtracted voxel to the label of its Euclidean-nearest
//! core voxel and finally relabels by size. The building blocks are public
//! because the pipeline and the tests use them on their own.

mod components;
mod edt;

pub use components::{label_components, Connectivity};

use std::collections::VecDeque;

use crate::error::{Result, SvlError};
use crate::volume::{Labels, Mask, FACE_OFFSETS};

/// Particle voxels not yet covered by a validated label:
/// `m(x) - s(x) / max(1, s(x))`.
pub fn positive_mask(m: &Mask, s: &Labels) -> Result<Mask> {
    m.same_dims(s)?;
    let data = m
        .data()
        .iter()
        .zip(s.data())
        .map(|(&mv, &sv)| mv && sv == 0)
        .collect();
    Mask::from_vec(m.dims(), data)
}

/// Gives every voxel of `removed` the label of its Euclidean-nearest labeled
/// voxel, breaking distance ties towards the smallest label. Labeled voxels
/// are never changed.
pub fn fill_boundary_nearest(labels: &Labels, removed: &Mask) -> Result<Labels> {
    labels.same_dims(removed)?;
    let mut out = labels.clone();
    let todo: Vec<usize> = removed
        .data()
        .iter()
        .zip(labels.data())
        .enumerate()
        .filter(|(_, (&r, &l))| r && l == 0)
        .map(|(i, _)| i)
        .collect();
    if todo.is_empty() {
        return Ok(out);
    }
    let sites: Vec<bool> = labels.data().iter().map(|&l| l != 0).collect();
    if !sites.iter().any(|&s| s) {
        return Err(SvlError::NoLabeledVoxels);
    }
    let dims = labels.dims();
    let (dist, arg) = edt::squared_edt(dims, &sites);

    for i in todo {
        let d2 = dist[i];
        let mut best = labels.data()[arg[i]];
        // the transform returns one nearest site; scan the sphere shell for
        // equidistant sites carrying a smaller label
        let r = (d2 as f64).sqrt().floor() as i64;
        let p = labels.coords(i);
        for dz in -r..=r {
            for dy in -r..=r {
                let rem = d2 - dz * dz - dy * dy;
                if rem < 0 {
                    continue;
                }
                let dx = (rem as f64).sqrt().round() as i64;
                if dx * dx != rem {
                    continue;
                }
                for sx in [dx, -dx] {
                    let q = [p[0] as i64 + sx, p[1] as i64 + dy, p[2] as i64 + dz];
                    if let Some(l) = labels.get_signed(q) {
                        if l != 0 && l < best {
                            best = l;
                        }
                    }
                    if dx == 0 {
                        break;
                    }
                }
            }
        }
        out.data_mut()[i] = best;
    }
    Ok(out)
}

/// Voxel count per label, indexed by label id.
pub fn label_sizes(labels: &Labels) -> Vec<usize> {
    let mut sizes = vec![0usize; labels.max_label() as usize + 1];
    for &l in labels.data() {
        sizes[l as usize] += 1;
    }
    sizes
}

/// Drops components smaller than `min_voxels` and renumbers the survivors
/// `1..=K` by ascending size (label 1 = smallest); equal sizes keep their old
/// relative order.
pub fn relabel_and_filter(labels: &Labels, min_voxels: usize) -> Labels {
    let sizes = label_sizes(labels);
    let mut survivors: Vec<(usize, u32)> = sizes
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(_, &n)| n > 0 && n >= min_voxels)
        .map(|(l, &n)| (n, l as u32))
        .collect();
    survivors.sort_unstable();
    let mut remap = vec![0u32; sizes.len()];
    for (new, &(_, old)) in survivors.iter().enumerate() {
        remap[old as usize] = new as u32 + 1;
    }
    labels.map(|l| remap[l as usize])
}

/// Sets every background voxel that cannot reach the grid border through
/// face-connected background.
pub fn fill_inclusions(p: &Mask) -> Mask {
    let dims = p.dims();
    let mut outside = vec![false; p.len()];
    let mut queue = VecDeque::new();
    for (i, &set) in p.data().iter().enumerate() {
        if set {
            continue;
        }
        let c = p.coords(i);
        let on_border = (0..3).any(|a| c[a] == 0 || c[a] + 1 == dims[a]);
        if on_border {
            outside[i] = true;
            queue.push_back(c);
        }
    }
    while let Some(c) = queue.pop_front() {
        for o in FACE_OFFSETS {
            let q = [c[0] as i64 + o[0], c[1] as i64 + o[1], c[2] as i64 + o[2]];
            if !p.in_bounds(q) {
                continue;
            }
            let q = [q[0] as usize, q[1] as usize, q[2] as usize];
            let j = p.index(q);
            if !p.data()[j] && !outside[j] {
                outside[j] = true;
                queue.push_back(q);
            }
        }
    }
    let data = outside.iter().map(|&o| !o).collect();
    Mask::from_vec(dims, data).expect("dims preserved")
}

/// Splits the mask `m` into particles along the boundary map `b`.
///
/// Components of `m` that lie entirely inside `b` have no core to grow from;
/// they are kept as particles of their own instead of being handed to a
/// distant label.
pub fn separate(
    m: &Mask,
    b: &Mask,
    min_voxels: usize,
    connectivity: Connectivity,
) -> Result<Labels> {
    m.same_dims(b)?;
    let dims = m.dims();
    let core = Mask::from_vec(
        dims,
        m.data()
            .iter()
            .zip(b.data())
            .map(|(&mv, &bv)| mv && !bv)
            .collect(),
    )?;
    let mut labels = label_components(&core, connectivity);

    let whole = label_components(m, connectivity);
    let mut has_core = vec![false; whole.max_label() as usize + 1];
    for (w, &l) in whole.data().iter().zip(labels.data()) {
        if l != 0 {
            has_core[*w as usize] = true;
        }
    }
    if has_core.iter().skip(1).any(|&c| !c) {
        let mut next = labels.max_label();
        let mut assigned = vec![0u32; has_core.len()];
        for (i, &w) in whole.data().iter().enumerate() {
            if w != 0 && !has_core[w as usize] {
                if assigned[w as usize] == 0 {
                    next += 1;
                    assigned[w as usize] = next;
                }
                labels.data_mut()[i] = assigned[w as usize];
            }
        }
    }

    let removed = Mask::from_vec(
        dims,
        m.data()
            .iter()
            .zip(labels.data())
            .map(|(&mv, &l)| mv && l == 0)
            .collect(),
    )?;
    let filled = fill_boundary_nearest(&labels, &removed)?;
    Ok(relabel_and_filter(&filled, min_voxels))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn positive_mask_cases() {
        let m = Mask::from_vec([3, 1, 1], vec![true, true, false]).unwrap();
        let s = Labels::from_vec([3, 1, 1], vec![5, 0, 0]).unwrap();
        let p = positive_mask(&m, &s).unwrap();
        assert_eq!(p.data(), &[false, true, false]);
        assert!(positive_mask(&m, &Labels::new([2, 1, 1], 0)).is_err());
    }

    #[test]
    fn fill_adjacent_and_tie() {
        let mut l = Labels::new([5, 1, 1], 0);
        l.set([0, 0, 0], 3);
        let mut r = Mask::new([5, 1, 1], false);
        r.set([1, 0, 0], true);
        assert_eq!(fill_boundary_nearest(&l, &r).unwrap().get([1, 0, 0]), 3);

        let mut l = Labels::new([3, 1, 1], 0);
        l.set([0, 0, 0], 7);
        l.set([2, 0, 0], 2);
        let mut r = Mask::new([3, 1, 1], false);
        r.set([1, 0, 0], true);
        assert_eq!(fill_boundary_nearest(&l, &r).unwrap().get([1, 0, 0]), 2);
    }

    #[test]
    fn fill_without_labels_fails() {
        let l = Labels::new([3, 3, 3], 0);
        let r = Mask::new([3, 3, 3], true);
        assert!(matches!(
            fill_boundary_nearest(&l, &r),
            Err(SvlError::NoLabeledVoxels)
        ));
    }

    #[test]
    fn relabel_by_size() {
        let mut data = vec![0u32; 60];
        data[..30].fill(1);
        data[30..40].fill(2);
        data[40..60].fill(3);
        let l = Labels::from_vec([60, 1, 1], data).unwrap();
        let out = relabel_and_filter(&l, 15);
        assert_eq!(out.get([0, 0, 0]), 2);
        assert_eq!(out.get([35, 0, 0]), 0);
        assert_eq!(out.get([45, 0, 0]), 1);
        let pure = relabel_and_filter(&l, 1);
        assert_eq!(pure.max_label(), 3);
        assert_eq!(pure.get([35, 0, 0]), 1);
    }

    #[test]
    fn inclusions() {
        let solid = Mask::new([4, 4, 4], true);
        assert_eq!(fill_inclusions(&solid), solid);

        let mut shell = Mask::new([7, 7, 7], true);
        for z in 1..6 {
            for y in 1..6 {
                for x in 1..6 {
                    shell.set([x, y, z], false);
                }
            }
        }
        assert_eq!(fill_inclusions(&shell).popcount(), 343);
    }

    fn two_cubes_with_plane() -> (Mask, Mask) {
        // cubes x in 0..5 and 6..11, plane at x = 5
        let mut m = Mask::new([11, 5, 5], false);
        let mut b = Mask::new([11, 5, 5], false);
        for z in 0..5 {
            for y in 0..5 {
                for x in 0..11 {
                    m.set([x, y, z], true);
                }
                b.set([5, y, z], true);
            }
        }
        (m, b)
    }

    #[test]
    fn plane_joined_cubes() {
        let (m, b) = two_cubes_with_plane();
        let l = separate(&m, &b, 1, Connectivity::TwentySix).unwrap();
        assert_eq!(l.max_label(), 2);
        assert_eq!(l.count(|v| v != 0), m.popcount());
        // both cubes are 125 voxels; the plane is equidistant and goes to the
        // smaller provisional label, i.e. the cube met first in scan order
        let left = l.get([0, 0, 0]);
        let right = l.get([10, 0, 0]);
        assert_ne!(left, right);
        for z in 0..5 {
            for y in 0..5 {
                assert_eq!(l.get([5, y, z]), left);
            }
        }
    }

    #[test]
    fn empty_boundary_single_blob() {
        let m = Mask::new([6, 6, 6], true);
        let b = Mask::new([6, 6, 6], false);
        let l = separate(&m, &b, 1, Connectivity::TwentySix).unwrap();
        assert_eq!(l.max_label(), 1);
        assert_eq!(l.count(|v| v == 1), 216);
    }

    #[test]
    fn coreless_component_kept_on_its_own() {
        let mut m = Mask::new([12, 3, 3], false);
        let mut b = Mask::new([12, 3, 3], false);
        for z in 0..3 {
            for y in 0..3 {
                for x in 0..5 {
                    m.set([x, y, z], true);
                }
            }
        }
        m.set([10, 1, 1], true);
        b.set([10, 1, 1], true);
        let l = separate(&m, &b, 1, Connectivity::TwentySix).unwrap();
        assert_eq!(l.max_label(), 2);
        assert_ne!(l.get([10, 1, 1]), l.get([0, 0, 0]));
    }
}
