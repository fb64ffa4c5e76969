use std::collections::BTreeMap;

use crate::error::{Result, SvlError};
use crate::volume::{Labels, MaskCrop, FACE_OFFSETS};

/// One extracted particle with its matching descriptors.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleRecord {
    pub scan: usize,
    pub id: u32,
    pub crop: MaskCrop,
    pub voxel_count: usize,
    /// Sum of voxel coordinates; `centroid = coord_sum / voxel_count`.
    pub coord_sum: [u64; 3],
    pub centroid: [f64; 3],
    /// Voxels with at least one face neighbour outside the particle.
    pub surface: Vec<[usize; 3]>,
    pub histogram: Vec<u64>,
    pub locked: bool,
}

impl ParticleRecord {
    /// Builds a record from the particle's voxel coordinates.
    pub fn from_points(scan: usize, id: u32, points: &[[usize; 3]]) -> Result<Self> {
        let crop = MaskCrop::from_points(points).ok_or(SvlError::LabelAbsent(id))?;
        let mut coord_sum = [0u64; 3];
        for p in points {
            for a in 0..3 {
                coord_sum[a] += p[a] as u64;
            }
        }
        let n = points.len();
        let centroid = coord_sum.map(|s| s as f64 / n as f64);
        let surface = points
            .iter()
            .copied()
            .filter(|p| {
                FACE_OFFSETS.iter().any(|o| {
                    !crop.contains([p[0] as i64 + o[0], p[1] as i64 + o[1], p[2] as i64 + o[2]])
                })
            })
            .collect();
        let mut record = ParticleRecord {
            scan,
            id,
            crop,
            voxel_count: n,
            coord_sum,
            centroid,
            surface,
            histogram: Vec::new(),
            locked: false,
        };
        record.histogram = distance_histogram(&record);
        Ok(record)
    }
}

/// Record of the particle labeled `id`.
pub fn build_record(labels: &Labels, id: u32, scan: usize) -> Result<ParticleRecord> {
    let points: Vec<[usize; 3]> = labels
        .data()
        .iter()
        .enumerate()
        .filter(|(_, &l)| l == id)
        .map(|(i, _)| labels.coords(i))
        .collect();
    if points.is_empty() || id == 0 {
        return Err(SvlError::LabelAbsent(id));
    }
    ParticleRecord::from_points(scan, id, &points)
}

/// Records of every nonzero label, in ascending id order.
pub fn build_records(labels: &Labels, scan: usize) -> Result<Vec<ParticleRecord>> {
    let mut points: BTreeMap<u32, Vec<[usize; 3]>> = BTreeMap::new();
    for (i, &l) in labels.data().iter().enumerate() {
        if l != 0 {
            points.entry(l).or_default().push(labels.coords(i));
        }
    }
    points
        .into_iter()
        .map(|(id, pts)| ParticleRecord::from_points(scan, id, &pts))
        .collect()
}

/// Integer square root of `n`, rounded down.
fn isqrt(n: u128) -> u128 {
    if n < 2 {
        return n;
    }
    let mut x = (n as f64).sqrt() as u128;
    while x * x > n {
        x -= 1;
    }
    while (x + 1) * (x + 1) <= n {
        x += 1;
    }
    x
}

/// Bin of distance `|s - c| / 2`, computed exactly from integer coordinates:
/// with `N` voxels and coordinate sum `S`, `|N s - S| = N |s - c|`.
fn bin_of(s: [usize; 3], n: u64, sum: [u64; 3]) -> usize {
    let q: u128 = (0..3)
        .map(|a| {
            let d = n as i128 * s[a] as i128 - sum[a] as i128;
            (d * d) as u128
        })
        .sum();
    (isqrt(q) / (2 * n as u128)) as usize
}

/// Surface-to-centroid distance counts in bins `[0,2), [2,4), ...`, long
/// enough to hold the largest distance.
pub fn distance_histogram(record: &ParticleRecord) -> Vec<u64> {
    let n = record.voxel_count as u64;
    let bins: Vec<usize> = record
        .surface
        .iter()
        .map(|&s| bin_of(s, n, record.coord_sum))
        .collect();
    let len = bins.iter().copied().max().map_or(1, |m| m + 1);
    let mut h = vec![0u64; len];
    for b in bins {
        h[b] += 1;
    }
    h
}

/// Records whose size lies within ten percent of `p`'s, bounds included.
pub fn candidate_filter<'a>(p: &ParticleRecord, catalog: &'a [ParticleRecord]) -> Vec<&'a ParticleRecord> {
    let np = p.voxel_count as u128;
    catalog
        .iter()
        .filter(|q| {
            let nq = q.voxel_count as u128;
            10 * nq >= 9 * np && 10 * nq <= 11 * np
        })
        .collect()
}

/// Sum of squared differences after zero-padding, and the padded length.
fn sse(a: &[u64], b: &[u64]) -> (u128, u128) {
    let len = a.len().max(b.len());
    let s = (0..len)
        .map(|i| {
            let x = *a.get(i).unwrap_or(&0) as i128;
            let y = *b.get(i).unwrap_or(&0) as i128;
            ((x - y) * (x - y)) as u128
        })
        .sum();
    (s, len as u128)
}

/// Mean squared histogram difference between two records.
pub fn histogram_mse(p: &ParticleRecord, q: &ParticleRecord) -> f64 {
    let (s, l) = sse(&p.histogram, &q.histogram);
    s as f64 / l as f64
}

/// Candidate with the smallest mean squared histogram difference; ties go
/// to the closer voxel count, then to the smaller id.
pub fn best_histogram_match<'a>(
    p: &ParticleRecord,
    candidates: &[&'a ParticleRecord],
) -> Result<&'a ParticleRecord> {
    let mut best: Option<(&ParticleRecord, (u128, u128))> = None;
    for &q in candidates {
        let e = sse(&p.histogram, &q.histogram);
        let better = match best {
            None => true,
            Some((b, eb)) => {
                // compare e.0 / e.1 with eb.0 / eb.1 exactly
                let lhs = e.0 * eb.1;
                let rhs = eb.0 * e.1;
                if lhs != rhs {
                    lhs < rhs
                } else {
                    let dq = q.voxel_count.abs_diff(p.voxel_count);
                    let db = b.voxel_count.abs_diff(p.voxel_count);
                    (dq, q.id) < (db, b.id)
                }
            }
        };
        if better {
            best = Some((q, e));
        }
    }
    best.map(|(q, _)| q).ok_or(SvlError::EmptyCandidates)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record_of(points: &[[usize; 3]]) -> ParticleRecord {
        ParticleRecord::from_points(0, 1, points).unwrap()
    }

    #[test]
    fn single_voxel() {
        let r = record_of(&[[3, 4, 5]]);
        assert_eq!(r.centroid, [3.0, 4.0, 5.0]);
        assert_eq!(r.voxel_count, 1);
        assert_eq!(r.surface, vec![[3, 4, 5]]);
        assert_eq!(r.histogram, vec![1]);
    }

    #[test]
    fn small_cube() {
        let pts: Vec<_> = (0..8).map(|i| [i & 1, (i >> 1) & 1, i >> 2]).collect();
        let r = record_of(&pts);
        assert_eq!(r.centroid, [0.5, 0.5, 0.5]);
        assert_eq!(r.surface.len(), 8);
    }

    #[test]
    fn sphere_volume_and_shell() {
        let mut pts = Vec::new();
        for z in 0..21usize {
            for y in 0..21usize {
                for x in 0..21usize {
                    let d2 = [x, y, z].iter().map(|&v| (v as i64 - 10).pow(2)).sum::<i64>();
                    if d2 <= 100 {
                        pts.push([x + 5, y + 5, z + 5]);
                    }
                }
            }
        }
        let r = record_of(&pts);
        let ideal = 4.0 / 3.0 * std::f64::consts::PI * 1000.0;
        assert!((r.voxel_count as f64 - ideal).abs() / ideal < 0.01);
        let near: u64 = r.histogram[4] + r.histogram[5];
        assert!(near as f64 >= 0.95 * r.surface.len() as f64);
    }

    #[test]
    fn histogram_sums_to_surface_and_ignores_translation() {
        let pts = [[0, 0, 0], [1, 0, 0], [2, 0, 0], [2, 1, 0], [2, 2, 1]];
        let r = record_of(&pts);
        assert_eq!(r.histogram.iter().sum::<u64>() as usize, r.surface.len());
        let moved: Vec<_> = pts.iter().map(|p| [p[0] + 7, p[1] + 3, p[2] + 1]).collect();
        assert_eq!(record_of(&moved).histogram, r.histogram);
    }

    #[test]
    fn size_gate_bounds() {
        let mk = |n: usize, id: u32| {
            let pts: Vec<_> = (0..n).map(|i| [i, 0, 0]).collect();
            ParticleRecord::from_points(1, id, &pts).unwrap()
        };
        let p = mk(1000, 1);
        let catalog = vec![mk(899, 1), mk(900, 2), mk(1100, 3), mk(1101, 4)];
        let ids: Vec<u32> = candidate_filter(&p, &catalog).iter().map(|q| q.id).collect();
        assert_eq!(ids, vec![2, 3]);
        assert!(candidate_filter(&p, &[]).is_empty());
    }

    #[test]
    fn histogram_match_ties_and_empty() {
        let p = record_of(&[[0, 0, 0], [1, 0, 0]]);
        let mut a = p.clone();
        a.id = 9;
        let mut b = p.clone();
        b.id = 4;
        assert_eq!(best_histogram_match(&p, &[&a, &b]).unwrap().id, 4);
        assert_eq!(best_histogram_match(&p, &[&a]).unwrap().id, 9);
        assert!(matches!(best_histogram_match(&p, &[]), Err(SvlError::EmptyCandidates)));
    }

    #[test]
    fn exact_isqrt() {
        for n in [0u128, 1, 2, 3, 4, 15, 16, 17, 1 << 60, (1u128 << 100) - 1] {
            let r = isqrt(n);
            assert!(r * r <= n && (r + 1) * (r + 1) > n);
        }
    }
}
