use serde::{Deserialize, Serialize};

use crate::volume::{Labels, Mask};

/// Voxel adjacency used for connected components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Connectivity {
    /// Face neighbours only.
    Six,
    /// Face, edge and corner neighbours.
    #[default]
    TwentySix,
}

impl TryFrom<u8> for Connectivity {
    type Error = String;
    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            6 => Ok(Connectivity::Six),
            26 => Ok(Connectivity::TwentySix),
            other => Err(format!("connectivity must be 6 or 26, got {other}")),
        }
    }
}

impl From<Connectivity> for u8 {
    fn from(c: Connectivity) -> u8 {
        match c {
            Connectivity::Six => 6,
            Connectivity::TwentySix => 26,
        }
    }
}

impl Connectivity {
    /// Neighbour offsets that precede a voxel in z-slowest scan order.
    pub(crate) fn backward_offsets(self) -> Vec<[i64; 3]> {
        match self {
            Connectivity::Six => vec![[-1, 0, 0], [0, -1, 0], [0, 0, -1]],
            Connectivity::TwentySix => {
                let mut v = Vec::with_capacity(13);
                for dz in -1..=0i64 {
                    for dy in -1..=1i64 {
                        for dx in -1..=1i64 {
                            if (dz, dy, dx) < (0, 0, 0) {
                                v.push([dx, dy, dz]);
                            }
                        }
                    }
                }
                v
            }
        }
    }

    pub fn offsets(self) -> Vec<[i64; 3]> {
        let mut v = self.backward_offsets();
        let fwd: Vec<_> = v.iter().map(|o| [-o[0], -o[1], -o[2]]).collect();
        v.extend(fwd);
        v
    }
}

struct UnionFind {
    parent: Vec<u32>,
}

impl UnionFind {
    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let p = self.parent[x as usize];
            self.parent[x as usize] = self.parent[p as usize];
            x = p;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi as usize] = lo;
        }
    }
}

/// Labels each maximal connected foreground region `1..=K`, numbered by the
/// scan-order position of its first voxel.
pub fn label_components(mask: &Mask, connectivity: Connectivity) -> Labels {
    let dims = mask.dims();
    let offsets = connectivity.backward_offsets();
    let mut provisional = vec![0u32; mask.len()];
    let mut uf = UnionFind { parent: vec![0] };

    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let i = mask.index([x, y, z]);
                if !mask.data()[i] {
                    continue;
                }
                let mut current = 0u32;
                for o in &offsets {
                    let q = [x as i64 + o[0], y as i64 + o[1], z as i64 + o[2]];
                    if !mask.in_bounds(q) {
                        continue;
                    }
                    let j = mask.index([q[0] as usize, q[1] as usize, q[2] as usize]);
                    let l = provisional[j];
                    if l == 0 {
                        continue;
                    }
                    if current == 0 {
                        current = l;
                    } else {
                        uf.union(current, l);
                    }
                }
                if current == 0 {
                    current = uf.parent.len() as u32;
                    uf.parent.push(current);
                }
                provisional[i] = current;
            }
        }
    }

    let mut remap = vec![0u32; uf.parent.len()];
    let mut next = 0u32;
    let data = provisional
        .iter()
        .map(|&l| {
            if l == 0 {
                return 0;
            }
            let root = uf.find(l) as usize;
            if remap[root] == 0 {
                next += 1;
                remap[root] = next;
            }
            remap[root]
        })
        .collect();
    Labels::from_vec(dims, data).expect("dims preserved")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_disjoint_cubes() {
        let mut m = Mask::new([10, 4, 4], false);
        for z in 0..2 {
            for y in 0..2 {
                for x in 0..2 {
                    m.set([x, y, z], true);
                    m.set([x + 6, y + 2, z + 2], true);
                }
            }
        }
        let l = label_components(&m, Connectivity::Six);
        assert_eq!(l.max_label(), 2);
        assert_eq!(l.get([0, 0, 0]), 1);
        assert_eq!(l.get([7, 3, 3]), 2);
    }

    #[test]
    fn empty_mask_stays_empty() {
        let l = label_components(&Mask::new([5, 5, 5], false), Connectivity::TwentySix);
        assert_eq!(l.max_label(), 0);
    }

    #[test]
    fn diagonal_touch_depends_on_connectivity() {
        let mut m = Mask::new([3, 3, 3], false);
        m.set([0, 0, 0], true);
        m.set([1, 1, 1], true);
        assert_eq!(label_components(&m, Connectivity::Six).max_label(), 2);
        assert_eq!(label_components(&m, Connectivity::TwentySix).max_label(), 1);
    }

    #[test]
    fn u_shape_merges_late() {
        // two arms joined only at the far end: provisional labels must merge
        let mut m = Mask::new([5, 5, 1], false);
        for y in 0..5 {
            m.set([0, y, 0], true);
            m.set([4, y, 0], true);
        }
        for x in 0..5 {
            m.set([x, 4, 0], true);
        }
        let l = label_components(&m, Connectivity::Six);
        assert_eq!(l.max_label(), 1);
    }
}
