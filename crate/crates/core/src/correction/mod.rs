//! Consensus refinement of particles matched across scans.
//!
//! Instances of one physical particle form a clique in the match graph.
//! Cliques of three or more are corrected by a vote among the other
//! instances, pairs by the mutual mask rule. Corrected voxels are recorded in
//! a per-scan lock mask that later pairwise corrections may not grow into.

use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SvlError};
use crate::matching::{components, MatchRecord, MatchSet};
use crate::rotation::RigidTransform;
use crate::volume::{label_crops, BoundingBox, Labels, Mask, MaskCrop};

/// Rigid maps between the instances of one clique. `get(i, j)` takes the
/// coordinates of instance `i`'s scan to those of instance `j`'s scan.
#[derive(Debug, Clone)]
pub struct PairTransforms {
    n: usize,
    map: Vec<Option<RigidTransform>>,
}

impl PairTransforms {
    /// Only the identities on the diagonal are known.
    pub fn new(n: usize) -> Self {
        let mut map = vec![None; n * n];
        for i in 0..n {
            map[i * n + i] = Some(RigidTransform::IDENTITY);
        }
        PairTransforms { n, map }
    }

    /// From the maps of instance 0's coordinates into every instance's.
    pub fn from_root(to: &[RigidTransform]) -> Self {
        let n = to.len();
        let mut out = PairTransforms::new(n);
        for i in 0..n {
            let back = to[i].inverse();
            for j in 0..n {
                if i != j {
                    out.map[i * n + j] = Some(back.then(&to[j]));
                }
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Sets `i -> j` and its inverse for `j -> i`.
    pub fn set(&mut self, i: usize, j: usize, t: RigidTransform) {
        self.map[i * self.n + j] = Some(t);
        self.map[j * self.n + i] = Some(t.inverse());
    }

    pub fn get(&self, i: usize, j: usize) -> Result<RigidTransform> {
        self.map
            .get(i * self.n + j)
            .copied()
            .flatten()
            .ok_or(SvlError::MissingRotation(i, j))
    }
}

/// One matched particle: its voxels and the dimensions of its scan.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub crop: MaskCrop,
    pub dims: [usize; 3],
}

/// Voxels of a `dims` volume that `back`'s inverse may round into `crop`.
/// `back` maps the crop's scan to the target scan.
fn preimage_box(crop: &MaskCrop, back: &RigidTransform, dims: [usize; 3]) -> Option<BoundingBox> {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for corner in 0..8 {
        let c = [0, 1, 2].map(|a| {
            if corner >> a & 1 == 0 {
                crop.bbox.lo[a] as f64 - 0.5
            } else {
                crop.bbox.hi[a] as f64 + 0.5
            }
        });
        let v = back.apply(c);
        for a in 0..3 {
            lo[a] = lo[a].min(v[a]);
            hi[a] = hi[a].max(v[a]);
        }
    }
    let mut bbox = BoundingBox::point([0; 3]);
    for a in 0..3 {
        let l = (lo[a].floor() - 1.0).max(0.0);
        let h = (hi[a].ceil() + 1.0).min(dims[a] as f64 - 1.0);
        if h < l {
            return None;
        }
        bbox.lo[a] = l as usize;
        bbox.hi[a] = h as usize;
    }
    Some(bbox)
}

fn box_points(b: &BoundingBox) -> impl Iterator<Item = [usize; 3]> + '_ {
    (b.lo[2]..=b.hi[2]).flat_map(move |z| {
        (b.lo[1]..=b.hi[1]).flat_map(move |y| (b.lo[0]..=b.hi[0]).map(move |x| [x, y, z]))
    })
}

fn signed(p: [usize; 3]) -> [i64; 3] {
    p.map(|v| v as i64)
}

/// Majority vote over `n >= 3` instances.
///
/// Voxel `x` of instance `i` is kept when `sum_{j != i} p_j(R_ij(x)) >= n/2`,
/// or `> n/2` when `strict`. Foreign masks are sampled at the nearest voxel.
/// An instance whose result is empty comes back as `None`.
pub fn majority_vote(
    instances: &[Instance],
    transforms: &PairTransforms,
    strict: bool,
) -> Result<Vec<Option<MaskCrop>>> {
    let n = instances.len();
    if n < 3 {
        return Err(SvlError::Config(format!(
            "majority vote needs at least 3 instances, got {n}"
        )));
    }
    if transforms.len() != n {
        return Err(SvlError::Config(format!(
            "{} transforms for {n} instances",
            transforms.len()
        )));
    }
    let mut maps = vec![RigidTransform::IDENTITY; n * n];
    for i in 0..n {
        for j in 0..n {
            maps[i * n + j] = transforms.get(i, j)?;
        }
    }
    let keep = |votes: usize| if strict { 2 * votes > n } else { 2 * votes >= n };
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let dims = instances[i].dims;
            let mut support: Option<BoundingBox> = None;
            for j in (0..n).filter(|&j| j != i) {
                if let Some(b) = preimage_box(&instances[j].crop, &maps[j * n + i], dims) {
                    support = Some(support.map_or(b, |s| s.union(&b)));
                }
            }
            let support = support?;
            let points: Vec<[usize; 3]> = box_points(&support)
                .filter(|&x| {
                    let votes = (0..n)
                        .filter(|&j| {
                            j != i && instances[j].crop.contains(maps[i * n + j].apply_voxel(signed(x)))
                        })
                        .count();
                    keep(votes)
                })
                .collect();
            MaskCrop::from_points(&points)
        })
        .collect())
}

/// `p_hat = m_o(R x) p + q(R x) m_s (1 - p) (1 - L)` for the particle `p` of
/// this scan, its partner `q`, the particle masks `m_s` / `m_o` of this and
/// the other scan and `t` mapping this scan onto the other.
fn correct_one(p: &MaskCrop, q: &MaskCrop, m_self: &Mask, m_other: &Mask, t: &RigidTransform, lock: &Mask) -> Option<MaskCrop> {
    let dims = m_self.dims();
    let support = match preimage_box(q, &t.inverse(), dims) {
        Some(b) => p.bbox.union(&b),
        None => p.bbox,
    };
    let points: Vec<[usize; 3]> = box_points(&support)
        .filter(|&x| {
            let y = t.apply_voxel(signed(x));
            let inside = p.contains(signed(x));
            if inside {
                m_other.get_signed(y).unwrap_or(false)
            } else {
                q.contains(y) && m_self.get(x) && !lock.get(x)
            }
        })
        .collect();
    MaskCrop::from_points(&points)
}

/// Two-instance correction: voxels of each particle lying on background in
/// the other scan are removed, and voxels the partner has are added where
/// this scan has particle voxels that are neither taken by the particle
/// already nor locked. `t12` maps scan 1 onto scan 2.
#[allow(clippy::too_many_arguments)]
pub fn pairwise_correct(
    p1: &MaskCrop,
    p2: &MaskCrop,
    m1: &Mask,
    m2: &Mask,
    t12: &RigidTransform,
    l1: &Mask,
    l2: &Mask,
) -> (Option<MaskCrop>, Option<MaskCrop>) {
    let t21 = t12.inverse();
    (
        correct_one(p1, p2, m1, m2, t12, l1),
        correct_one(p2, p1, m2, m1, &t21, l2),
    )
}

/// Maps between the members of a clique, composed along a breadth-first
/// spanning tree of its matches rooted at the first member. Members are
/// `(scan, id)` pairs; the result is indexed by position in `members`.
pub fn clique_transforms(members: &[(usize, u32)], matches: &[&MatchRecord]) -> Result<PairTransforms> {
    let Some(&root) = members.first() else {
        return Ok(PairTransforms::new(0));
    };
    let mut reached: BTreeMap<(usize, u32), RigidTransform> = BTreeMap::new();
    reached.insert(root, RigidTransform::IDENTITY);
    let mut queue = VecDeque::from([root]);
    while let Some(node) = queue.pop_front() {
        let here = reached[&node];
        for m in matches {
            let (next, step) = if (m.scan_a, m.id_a) == node {
                ((m.scan_b, m.id_b), m.transform())
            } else if (m.scan_b, m.id_b) == node {
                ((m.scan_a, m.id_a), m.transform().inverse())
            } else {
                continue;
            };
            if let Entry::Vacant(e) = reached.entry(next) {
                e.insert(here.then(&step));
                queue.push_back(next);
            }
        }
    }
    let to = members
        .iter()
        .enumerate()
        .map(|(k, m)| reached.get(m).copied().ok_or(SvlError::MissingRotation(0, k)))
        .collect::<Result<Vec<_>>>()?;
    Ok(PairTransforms::from_root(&to))
}

/// Per-scan volumes the corrections read and write.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanState {
    /// Validated particle labels.
    pub validated: Labels,
    /// All-particle mask.
    pub mask: Mask,
    pub locks: Mask,
}

impl ScanState {
    /// Fresh state with empty locks.
    pub fn new(validated: Labels, mask: Mask) -> Result<Self> {
        validated.same_dims(&mask)?;
        let locks = Mask::new(mask.dims(), false);
        Ok(ScanState {
            validated,
            mask,
            locks,
        })
    }
}

/// What correcting one particle changed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParticleCorrection {
    pub scan: usize,
    pub id: u32,
    pub added: usize,
    pub removed: usize,
    /// Additions dropped because another label holds the voxel.
    pub collisions: usize,
    /// Additions dropped because the voxel is background in this scan.
    pub outside_mask: usize,
    /// Removals skipped because the voxel was locked by an earlier correction.
    pub locked_kept: usize,
    /// The correction would have erased the particle; it was left as is.
    pub emptied: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrectionReport {
    pub cliques_corrected: usize,
    pub cliques_skipped: usize,
    pub collisions: usize,
    pub particles: Vec<ParticleCorrection>,
}

/// A clique as its sorted `(scan, id)` members.
pub type Clique = Vec<(usize, u32)>;

fn write_back(scan: &mut ScanState, id: u32, old: &MaskCrop, new: Option<&MaskCrop>, out: &mut ParticleCorrection) {
    let Some(new) = new else {
        out.emptied = true;
        return;
    };
    for p in old.points() {
        if !new.contains(signed(p)) && scan.validated.get(p) == id {
            if scan.locks.get(p) {
                out.locked_kept += 1;
                continue;
            }
            scan.validated.set(p, 0);
            out.removed += 1;
        }
    }
    for p in new.points() {
        if old.contains(signed(p)) {
            continue;
        }
        if !scan.mask.get(p) {
            out.outside_mask += 1;
            continue;
        }
        match scan.validated.get(p) {
            0 => {
                scan.validated.set(p, id);
                out.added += 1;
            }
            l if l != id => out.collisions += 1,
            _ => {}
        }
    }
    for p in new.points() {
        if scan.validated.get(p) == id {
            scan.locks.set(p, true);
        }
    }
}

/// Corrects every clique of `matches` in place.
///
/// Cliques are visited in ascending order of their smallest member. A
/// clique covering all scans that is already in `corrected` is skipped;
/// every clique corrected here is added to it. All corrections are
/// computed before anything is written, so an error leaves `scans`
/// untouched. Write-back keeps the labels a partition: a voxel held by
/// another label stays with it. Locked voxels are never removed, so a
/// corrected particle is not altered by later corrections.
pub fn apply_corrections(
    scans: &mut [ScanState],
    matches: &MatchSet,
    corrected: &mut BTreeSet<Clique>,
    strict: bool,
) -> Result<CorrectionReport> {
    let crops: Vec<BTreeMap<u32, MaskCrop>> = scans.par_iter().map(|s| label_crops(&s.validated)).collect();
    let mut report = CorrectionReport::default();
    let mut todo: Vec<(Clique, Vec<&MatchRecord>)> = Vec::new();
    for group in components(matches.matches.iter()) {
        let members: Clique = group.into_iter().collect();
        let scan_set: BTreeSet<usize> = members.iter().map(|m| m.0).collect();
        if scan_set.len() != members.len() {
            return Err(SvlError::Config(format!(
                "clique {members:?} holds two particles of one scan"
            )));
        }
        for &(s, id) in &members {
            if s >= scans.len() {
                return Err(SvlError::Config(format!("match refers to scan {s}")));
            }
            if !crops[s].contains_key(&id) {
                return Err(SvlError::LabelAbsent(id));
            }
        }
        if members.len() == scans.len() && corrected.contains(&members) {
            report.cliques_skipped += 1;
            continue;
        }
        let edges = matches
            .matches
            .iter()
            .filter(|m| members.binary_search(&(m.scan_a, m.id_a)).is_ok())
            .collect();
        todo.push((members, edges));
    }

    let results: Vec<Vec<Option<MaskCrop>>> = todo
        .par_iter()
        .map(|(members, edges)| {
            let t = clique_transforms(members, edges)?;
            let instances: Vec<Instance> = members
                .iter()
                .map(|&(s, id)| Instance {
                    crop: crops[s][&id].clone(),
                    dims: scans[s].mask.dims(),
                })
                .collect();
            if members.len() >= 3 {
                majority_vote(&instances, &t, strict)
            } else {
                let (s1, s2) = (members[0].0, members[1].0);
                let (a, b) = pairwise_correct(
                    &instances[0].crop,
                    &instances[1].crop,
                    &scans[s1].mask,
                    &scans[s2].mask,
                    &t.get(0, 1)?,
                    &scans[s1].locks,
                    &scans[s2].locks,
                );
                Ok(vec![a, b])
            }
        })
        .collect::<Result<_>>()?;

    for ((members, _), fixed) in todo.into_iter().zip(results) {
        for (&(s, id), new) in members.iter().zip(&fixed) {
            let mut entry = ParticleCorrection {
                scan: s,
                id,
                ..Default::default()
            };
            write_back(&mut scans[s], id, &crops[s][&id], new.as_ref(), &mut entry);
            report.collisions += entry.collisions;
            report.particles.push(entry);
        }
        report.cliques_corrected += 1;
        corrected.insert(members);
    }
    Ok(report)
}
