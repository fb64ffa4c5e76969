use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SvlError};
use crate::volume::{Labels, FACE_OFFSETS};

/// Controlled segmentation errors applied to a label volume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    /// Probability that a face-touching pair is fused under one label.
    pub p_merge: f64,
    /// Probability that a particle is cut in two by a random plane.
    pub p_split: f64,
    pub p_erode: f64,
    pub p_dilate: f64,
    /// Erosion/dilation depth in voxels.
    pub radius: usize,
    pub seed: u64,
}

impl Default for CorruptionSpec {
    fn default() -> Self {
        CorruptionSpec::none(0)
    }
}

impl CorruptionSpec {
    pub fn none(seed: u64) -> Self {
        CorruptionSpec {
            p_merge: 0.0,
            p_split: 0.0,
            p_erode: 0.0,
            p_dilate: 0.0,
            radius: 1,
            seed,
        }
    }

    /// Every rate multiplied by `factor` (clamped to 1).
    pub fn scaled(&self, factor: f64, seed: u64) -> Self {
        let f = |p: f64| (p * factor).clamp(0.0, 1.0);
        CorruptionSpec {
            p_merge: f(self.p_merge),
            p_split: f(self.p_split),
            p_erode: f(self.p_erode),
            p_dilate: f(self.p_dilate),
            radius: self.radius,
            seed,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.p_merge == 0.0 && self.p_split == 0.0 && self.p_erode == 0.0 && self.p_dilate == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("p_merge", self.p_merge),
            ("p_split", self.p_split),
            ("p_erode", self.p_erode),
            ("p_dilate", self.p_dilate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(SvlError::Config(format!("{name} = {p} is not a probability")));
            }
        }
        if self.radius < 1 {
            return Err(SvlError::Config("corruption radius must be at least 1".into()));
        }
        Ok(())
    }
}

/// What `corrupt_labels` did, by original label id.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorruptionLedger {
    /// `(kept, absorbed)`: `absorbed` now carries label `kept`.
    pub merged: Vec<(u32, u32)>,
    /// `(original, new)`: part of `original` now carries label `new`.
    pub split: Vec<(u32, u32)>,
    pub eroded: Vec<u32>,
    pub dilated: Vec<u32>,
}

impl CorruptionLedger {
    /// Labels touched by any corruption.
    pub fn affected(&self) -> BTreeSet<u32> {
        let mut s = BTreeSet::new();
        for &(a, b) in self.merged.iter().chain(&self.split) {
            s.insert(a);
            s.insert(b);
        }
        s.extend(self.eroded.iter().copied());
        s.extend(self.dilated.iter().copied());
        s
    }
}

/// Applies merges, then splits, then erosions, then dilations, each drawn
/// from a generator seeded by `spec.seed`.
pub fn corrupt_labels(labels: &Labels, spec: &CorruptionSpec) -> Result<(Labels, CorruptionLedger)> {
    spec.validate()?;
    let mut out = labels.clone();
    let mut ledger = CorruptionLedger::default();
    if spec.is_identity() {
        return Ok((out, ledger));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    if spec.p_merge > 0.0 {
        let pairs = touching_pairs(&out);
        let max = out.max_label() as usize;
        let mut parent: Vec<u32> = (0..=max as u32).collect();
        fn root(parent: &mut [u32], mut x: u32) -> u32 {
            while parent[x as usize] != x {
                x = parent[x as usize];
            }
            x
        }
        for (a, b) in pairs {
            if rng.random_bool(spec.p_merge) {
                let (ra, rb) = (root(&mut parent, a), root(&mut parent, b));
                if ra != rb {
                    let (keep, gone) = (ra.min(rb), ra.max(rb));
                    parent[gone as usize] = keep;
                    ledger.merged.push((keep, gone));
                }
            }
        }
        let remap: Vec<u32> = (0..=max as u32).map(|l| root(&mut parent, l)).collect();
        out = out.map(|l| remap[l as usize]);
    }

    if spec.p_split > 0.0 {
        let stats = label_stats(&out);
        let mut next = out.max_label();
        for (l, st) in stats.iter().enumerate().skip(1) {
            if st.0 == 0 || !rng.random_bool(spec.p_split) {
                continue;
            }
            let c = st.1.map(|v| v / st.0 as f64);
            let normal = random_unit(&mut rng);
            let side = |p: [usize; 3]| {
                (0..3).map(|a| (p[a] as f64 - c[a]) * normal[a]).sum::<f64>() > 0.0
            };
            let members: Vec<usize> = (0..out.len()).filter(|&i| out.data()[i] == l as u32).collect();
            let positive: Vec<usize> = members.iter().copied().filter(|&i| side(out.coords(i))).collect();
            if positive.is_empty() || positive.len() == members.len() {
                continue;
            }
            next += 1;
            for i in positive {
                out.data_mut()[i] = next;
            }
            ledger.split.push((l as u32, next));
        }
    }

    if spec.p_erode > 0.0 || spec.p_dilate > 0.0 {
        let mut members = vec![Vec::new(); out.max_label() as usize + 1];
        for (i, &l) in out.data().iter().enumerate() {
            members[l as usize].push(i);
        }
        for l in 1..members.len() as u32 {
            if spec.p_erode == 0.0 || !rng.random_bool(spec.p_erode) {
                continue;
            }
            let list = &mut members[l as usize];
            let mut changed = false;
            for _ in 0..spec.radius {
                let (surface, inner): (Vec<usize>, Vec<usize>) =
                    list.iter().partition(|&&i| on_surface(&out, i, l));
                if surface.is_empty() || inner.is_empty() {
                    break;
                }
                for i in surface {
                    out.data_mut()[i] = 0;
                }
                *list = inner;
                changed = true;
            }
            if changed {
                ledger.eroded.push(l);
            }
        }
        for l in 1..members.len() as u32 {
            if spec.p_dilate == 0.0 || !rng.random_bool(spec.p_dilate) {
                continue;
            }
            let mut front = members[l as usize].clone();
            let mut changed = false;
            for _ in 0..spec.radius {
                let mut grow = BTreeSet::new();
                for &i in &front {
                    let c = out.coords(i);
                    for o in FACE_OFFSETS {
                        let q = [c[0] as i64 + o[0], c[1] as i64 + o[1], c[2] as i64 + o[2]];
                        if out.get_signed(q) == Some(0) {
                            grow.insert(out.index([q[0] as usize, q[1] as usize, q[2] as usize]));
                        }
                    }
                }
                if grow.is_empty() {
                    break;
                }
                for &i in &grow {
                    out.data_mut()[i] = l;
                }
                front = grow.into_iter().collect();
                changed = true;
            }
            if changed {
                ledger.dilated.push(l);
            }
        }
    }
    Ok((out, ledger))
}

fn random_unit(rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let v = [
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ];
        let n: f64 = v.iter().map(|x: &f64| x * x).sum::<f64>().sqrt();
        if n > 0.1 && n <= 1.0 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

/// Voxel count and coordinate sums per label.
fn label_stats(labels: &Labels) -> Vec<(usize, [f64; 3])> {
    let mut st = vec![(0usize, [0.0; 3]); labels.max_label() as usize + 1];
    for (i, &l) in labels.data().iter().enumerate() {
        if l == 0 {
            continue;
        }
        let c = labels.coords(i);
        let e = &mut st[l as usize];
        e.0 += 1;
        for a in 0..3 {
            e.1[a] += c[a] as f64;
        }
    }
    st
}

fn neighbours(labels: &Labels, i: usize) -> impl Iterator<Item = Option<u32>> + '_ {
    let c = labels.coords(i);
    FACE_OFFSETS
        .iter()
        .map(move |o| labels.get_signed([c[0] as i64 + o[0], c[1] as i64 + o[1], c[2] as i64 + o[2]]))
}

fn on_surface(labels: &Labels, i: usize, l: u32) -> bool {
    neighbours(labels, i).any(|n| n != Some(l))
}

/// Sorted, distinct pairs of labels that share a face.
pub fn touching_pairs(labels: &Labels) -> Vec<(u32, u32)> {
    let mut set = BTreeSet::new();
    let d = labels.dims();
    for (i, &l) in labels.data().iter().enumerate() {
        if l == 0 {
            continue;
        }
        let c = labels.coords(i);
        for a in 0..3 {
            if c[a] + 1 >= d[a] {
                continue;
            }
            let mut q = c;
            q[a] += 1;
            let m = labels.get(q);
            if m != 0 && m != l {
                set.insert((l.min(m), l.max(m)));
            }
        }
    }
    set.into_iter().collect()
}
