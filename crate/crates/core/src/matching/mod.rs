//! Cross-scan particle matching: a volume gate, surface-to-centroid distance
//! histograms to pick one candidate, and rotation-optimised Dice to accept
//! or reject it.

mod records;
mod rotdice;

pub use records::{
    best_histogram_match, build_record, build_records, candidate_filter, distance_histogram,
    histogram_mse, ParticleRecord,
};
pub use rotdice::{
    dice, rotate_mask, rotate_mask_by, rotdice, PlacedMask, RotDice, RotationGrid,
    DOWNSCALE_VOXELS,
};

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SvlError};
use crate::rotation::{EulerDeg, RigidTransform, Rotation, Vec3};

/// Accepted correspondence between particle `id_a` of scan `scan_a` and
/// particle `id_b` of scan `scan_b` (`scan_a < scan_b`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchRecord {
    pub scan_a: usize,
    pub id_a: u32,
    pub scan_b: usize,
    pub id_b: u32,
    pub rotdice: f64,
    /// Euler angles in degrees rotating particle a onto particle b.
    pub rotation: EulerDeg,
    /// Centroid of b minus centroid of a.
    pub translation: Vec3,
    /// Centroid of a that the rotation is taken about.
    pub centroid_a: Vec3,
}

impl MatchRecord {
    /// Maps scan-a coordinates of particle a onto scan-b coordinates.
    pub fn transform(&self) -> RigidTransform {
        RigidTransform::about(
            Rotation::from_euler_deg(self.rotation),
            self.centroid_a,
            self.translation,
        )
    }

    pub fn key(&self) -> (usize, u32, usize, u32) {
        (self.scan_a, self.id_a, self.scan_b, self.id_b)
    }

    pub fn involves(&self, scan: usize, id: u32) -> bool {
        (self.scan_a == scan && self.id_a == id) || (self.scan_b == scan && self.id_b == id)
    }
}

/// Accepted matches plus the particles expelled for inconsistency.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchSet {
    pub matches: Vec<MatchRecord>,
    /// `(scan, id)` of particles removed because their matches conflicted.
    #[serde(default)]
    pub inconsistent: Vec<(usize, u32)>,
}

impl MatchSet {
    pub fn len(&self) -> usize {
        self.matches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matches.is_empty()
    }

    /// Partner of `(scan, id)` in `other`, if matched.
    pub fn partner(&self, scan: usize, id: u32, other: usize) -> Option<u32> {
        self.matches.iter().find_map(|m| {
            if m.scan_a == scan && m.id_a == id && m.scan_b == other {
                Some(m.id_b)
            } else if m.scan_b == scan && m.id_b == id && m.scan_a == other {
                Some(m.id_a)
            } else {
                None
            }
        })
    }

    /// Ids of each scan that take part in at least one match.
    pub fn matched_ids(&self) -> BTreeMap<usize, BTreeSet<u32>> {
        let mut out: BTreeMap<usize, BTreeSet<u32>> = BTreeMap::new();
        for m in &self.matches {
            out.entry(m.scan_a).or_default().insert(m.id_a);
            out.entry(m.scan_b).or_default().insert(m.id_b);
        }
        out
    }

    fn sort(&mut self) {
        self.matches.sort_by_key(|m| m.key());
        self.inconsistent.sort_unstable();
        self.inconsistent.dedup();
    }

    /// One JSON object per line.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut s = String::new();
        for m in &self.matches {
            s.push_str(&serde_json::to_string(m)?);
            s.push('\n');
        }
        Ok(s)
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut set = MatchSet::default();
        for line in text.lines() {
            if !line.trim().is_empty() {
                set.matches.push(serde_json::from_str(line)?);
            }
        }
        Ok(set)
    }

    pub fn save_jsonl(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| SvlError::io(path, e))?;
        f.write_all(self.to_jsonl()?.as_bytes())
            .map_err(|e| SvlError::io(path, e))
    }

    pub fn load_jsonl(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| SvlError::io(path, e))?;
        let mut set = MatchSet::default();
        for line in std::io::BufReader::new(f).lines() {
            let line = line.map_err(|e| SvlError::io(path, e))?;
            if !line.trim().is_empty() {
                set.matches.push(serde_json::from_str(&line)?);
            }
        }
        Ok(set)
    }
}

/// A proposed match before the consistency pass.
struct Claim {
    from: (usize, u32),
    to: (usize, u32),
    record: MatchRecord,
}

fn propose(
    p: &ParticleRecord,
    catalog: &[ParticleRecord],
    threshold: f64,
    grid: &RotationGrid,
) -> Option<Claim> {
    let candidates = candidate_filter(p, catalog);
    let q = best_histogram_match(p, &candidates).ok()?;
    let r = rotdice(p, q, grid);
    if r.score < threshold {
        return None;
    }
    // store with the lower scan first
    let record = if p.scan < q.scan {
        MatchRecord {
            scan_a: p.scan,
            id_a: p.id,
            scan_b: q.scan,
            id_b: q.id,
            rotdice: r.score,
            rotation: r.angles,
            translation: [0, 1, 2].map(|a| r.center_q[a] - r.center_p[a]),
            centroid_a: r.center_p,
        }
    } else {
        let inv = Rotation::from_euler_deg(r.angles).inverse();
        MatchRecord {
            scan_a: q.scan,
            id_a: q.id,
            scan_b: p.scan,
            id_b: p.id,
            rotdice: r.score,
            rotation: crate::rotation::euler_from_rotation(&inv),
            translation: [0, 1, 2].map(|a| r.center_p[a] - r.center_q[a]),
            centroid_a: r.center_q,
        }
    };
    Some(Claim {
        from: (p.scan, p.id),
        to: (q.scan, q.id),
        record,
    })
}

/// Matches every pair of scans.
///
/// For scans `a < b`, particles of `a` without a match into `b` in `prior`
/// are matched first, then the still unclaimed particles of `b` against
/// `a`. Prior matches are kept as they are and never recomputed. When two
/// particles of one scan claim the same foreign particle, or the matches of
/// one physical particle would include two particles of the same scan, every
/// new match involved is dropped and its particles are reported as
/// inconsistent. The inconsistent list covers this call only.
pub fn match_scans(
    catalogs: &[Vec<ParticleRecord>],
    threshold: f64,
    grid: &RotationGrid,
    prior: &MatchSet,
) -> Result<MatchSet> {
    if catalogs.len() < 2 {
        return Err(SvlError::TooFewScans(catalogs.len()));
    }
    grid.validate()?;
    let mut claims: Vec<Claim> = Vec::new();
    for a in 0..catalogs.len() {
        for b in a + 1..catalogs.len() {
            let done = |scan: usize, id: u32, other: usize| prior.partner(scan, id, other).is_some();
            let forward: Vec<Claim> = catalogs[a]
                .par_iter()
                .filter(|p| !done(a, p.id, b))
                .filter_map(|p| propose(p, &catalogs[b], threshold, grid))
                .collect();
            let claimed: BTreeSet<u32> = forward.iter().map(|c| c.to.1).collect();
            let backward: Vec<Claim> = catalogs[b]
                .par_iter()
                .filter(|q| !done(b, q.id, a) && !claimed.contains(&q.id))
                .filter_map(|q| propose(q, &catalogs[a], threshold, grid))
                .collect();
            claims.extend(forward);
            claims.extend(backward);
        }
    }
    Ok(resolve(prior, claims))
}

fn resolve(prior: &MatchSet, claims: Vec<Claim>) -> MatchSet {
    let mut bad: BTreeSet<usize> = BTreeSet::new();
    let mut inconsistent: BTreeSet<(usize, u32)> = BTreeSet::new();

    // several claims on one target, or a target already matched in prior
    let mut by_target: BTreeMap<((usize, u32), usize), Vec<usize>> = BTreeMap::new();
    for (i, c) in claims.iter().enumerate() {
        by_target.entry((c.to, c.from.0)).or_default().push(i);
        by_target.entry((c.from, c.to.0)).or_default().push(i);
    }
    for ((node, other_scan), idx) in &by_target {
        let taken = prior.partner(node.0, node.1, *other_scan).is_some();
        let sources: BTreeSet<(usize, u32)> = idx
            .iter()
            .map(|&i| {
                let c = &claims[i];
                if c.to == *node {
                    c.from
                } else {
                    c.to
                }
            })
            .collect();
        if sources.len() > 1 || taken {
            bad.extend(idx.iter().copied());
        }
    }

    let mut kept: Vec<MatchRecord> = prior.matches.clone();
    let mut seen: BTreeSet<(usize, u32, usize, u32)> = kept.iter().map(|m| m.key()).collect();
    let mut fresh: Vec<MatchRecord> = Vec::new();
    for (i, c) in claims.iter().enumerate() {
        if bad.contains(&i) {
            inconsistent.insert(c.from);
            inconsistent.insert(c.to);
        } else if seen.insert(c.record.key()) {
            fresh.push(c.record.clone());
        }
    }

    // transitive closure must not join two particles of the same scan
    loop {
        let groups = components(kept.iter().chain(&fresh));
        let conflicted: Vec<BTreeSet<(usize, u32)>> = groups
            .into_iter()
            .filter(|g| {
                let scans: BTreeSet<usize> = g.iter().map(|n| n.0).collect();
                scans.len() < g.len()
            })
            .collect();
        if conflicted.is_empty() {
            break;
        }
        let before = fresh.len();
        fresh.retain(|m| {
            let hit = conflicted
                .iter()
                .any(|g| g.contains(&(m.scan_a, m.id_a)) || g.contains(&(m.scan_b, m.id_b)));
            if hit {
                inconsistent.insert((m.scan_a, m.id_a));
                inconsistent.insert((m.scan_b, m.id_b));
            }
            !hit
        });
        if fresh.len() == before {
            // only prior matches are involved; leave them alone
            break;
        }
    }

    kept.extend(fresh);
    let mut set = MatchSet {
        matches: kept,
        inconsistent: inconsistent.into_iter().collect(),
    };
    set.sort();
    set
}

/// Connected groups of `(scan, id)` nodes linked by matches.
pub fn components<'a>(matches: impl Iterator<Item = &'a MatchRecord>) -> Vec<BTreeSet<(usize, u32)>> {
    let mut adj: BTreeMap<(usize, u32), Vec<(usize, u32)>> = BTreeMap::new();
    for m in matches {
        let a = (m.scan_a, m.id_a);
        let b = (m.scan_b, m.id_b);
        adj.entry(a).or_default().push(b);
        adj.entry(b).or_default().push(a);
    }
    let mut seen: BTreeSet<(usize, u32)> = BTreeSet::new();
    let mut out = Vec::new();
    for &start in adj.keys() {
        if seen.contains(&start) {
            continue;
        }
        let mut group = BTreeSet::new();
        let mut stack = vec![start];
        seen.insert(start);
        while let Some(n) = stack.pop() {
            group.insert(n);
            for &m in &adj[&n] {
                if seen.insert(m) {
                    stack.push(m);
                }
            }
        }
        out.push(group);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Labels;

    fn block(labels: &mut Labels, lo: [usize; 3], size: [usize; 3], id: u32) {
        for z in 0..size[2] {
            for y in 0..size[1] {
                for x in 0..size[0] {
                    labels.set([lo[0] + x, lo[1] + y, lo[2] + z], id);
                }
            }
        }
    }

    fn scan_with(blocks: &[([usize; 3], [usize; 3], u32)]) -> Labels {
        let mut l = Labels::new([40, 20, 20], 0);
        for &(lo, size, id) in blocks {
            block(&mut l, lo, size, id);
        }
        l
    }

    #[test]
    fn matches_rotated_blocks_and_rejects_above_one() {
        let a = scan_with(&[([1, 1, 1], [6, 3, 2], 1), ([20, 5, 5], [4, 4, 4], 2)]);
        let b = scan_with(&[([30, 2, 2], [2, 6, 3], 5), ([3, 10, 3], [4, 4, 4], 7)]);
        let cats = vec![build_records(&a, 0).unwrap(), build_records(&b, 1).unwrap()];
        let set = match_scans(&cats, 0.9, &RotationGrid::default(), &MatchSet::default()).unwrap();
        assert_eq!(set.len(), 2);
        assert!(set.matches.iter().all(|m| m.rotdice == 1.0));
        assert_eq!(set.partner(0, 1, 1), Some(5));
        assert_eq!(set.partner(1, 7, 0), Some(2));
        assert!(set.inconsistent.is_empty());

        let again = match_scans(&cats, 0.9, &RotationGrid::default(), &set).unwrap();
        assert_eq!(again, set);

        let none = match_scans(&cats, 1.01, &RotationGrid::default(), &MatchSet::default()).unwrap();
        assert!(none.is_empty());
    }

    #[test]
    fn duplicate_claims_are_expelled() {
        // two identical blocks in scan 0 both want the single copy in scan 1
        let a = scan_with(&[([1, 1, 1], [5, 3, 2], 1), ([20, 5, 5], [5, 3, 2], 2)]);
        let b = scan_with(&[([10, 10, 10], [3, 5, 2], 4)]);
        let cats = vec![build_records(&a, 0).unwrap(), build_records(&b, 1).unwrap()];
        let set = match_scans(&cats, 0.9, &RotationGrid::default(), &MatchSet::default()).unwrap();
        assert!(set.is_empty());
        assert_eq!(set.inconsistent, vec![(0, 1), (0, 2), (1, 4)]);
    }

    #[test]
    fn single_catalog_is_an_error() {
        assert!(matches!(
            match_scans(&[Vec::new()], 0.9, &RotationGrid::default(), &MatchSet::default()),
            Err(SvlError::TooFewScans(1))
        ));
    }

    #[test]
    fn jsonl_round_trip() {
        let set = MatchSet {
            matches: vec![MatchRecord {
                scan_a: 0,
                id_a: 3,
                scan_b: 2,
                id_b: 9,
                rotdice: 0.9371234567891234,
                rotation: [15.0, 0.1 + 0.2, 345.0],
                translation: [1.0 / 3.0, -2.5, 7.0],
                centroid_a: [10.1, 11.2, 12.3],
            }],
            inconsistent: Vec::new(),
        };
        let text = set.to_jsonl().unwrap();
        assert_eq!(text.lines().count(), 1);
        assert_eq!(MatchSet::from_jsonl(&text).unwrap(), set);
    }
}
