use serde::{Deserialize, Serialize};

use super::records::ParticleRecord;
use crate::error::{Result, SvlError};
use crate::rotation::{normalize_angles, EulerDeg, Rotation, Vec3};
use crate::separation::fill_inclusions;
use crate::volume::{Mask, MaskCrop};

/// Particles larger than this are searched at reduced resolution first.
pub const DOWNSCALE_VOXELS: usize = 10_000;

/// `2 |P ∩ Q| / (|P| + |Q|)` in parent-volume coordinates; 0 when both are
/// empty.
pub fn dice(p: &MaskCrop, q: &MaskCrop) -> f64 {
    let np = p.voxel_count();
    let nq = q.voxel_count();
    if np + nq == 0 {
        return 0.0;
    }
    let inter = p
        .points()
        .into_iter()
        .filter(|v| q.contains([v[0] as i64, v[1] as i64, v[2] as i64]))
        .count();
    2.0 * inter as f64 / (np + nq) as f64
}

/// A mask placed at a signed lattice offset.
#[derive(Debug, Clone, PartialEq)]
pub struct PlacedMask {
    pub origin: [i64; 3],
    pub mask: Mask,
}

impl PlacedMask {
    pub fn points(&self) -> Vec<[i64; 3]> {
        self.mask
            .iter_set()
            .map(|p| {
                [
                    p[0] as i64 + self.origin[0],
                    p[1] as i64 + self.origin[1],
                    p[2] as i64 + self.origin[2],
                ]
            })
            .collect()
    }
}

#[inline]
fn round_half_up(v: f64) -> i64 {
    (v + 0.5).floor() as i64
}

/// Lattice box `[lo, hi]` holding every rotated voxel cube of a `dims` grid.
fn rotated_extent(dims: [usize; 3], rot: &Rotation, from: Vec3, to: Vec3) -> ([i64; 3], [i64; 3]) {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for k in 0..8 {
        let corner = [
            if k & 1 == 0 { -0.5 } else { dims[0] as f64 - 0.5 },
            if k & 2 == 0 { -0.5 } else { dims[1] as f64 - 0.5 },
            if k & 4 == 0 { -0.5 } else { dims[2] as f64 - 0.5 },
        ];
        let r = rot.apply([corner[0] - from[0], corner[1] - from[1], corner[2] - from[2]]);
        for a in 0..3 {
            lo[a] = lo[a].min(r[a] + to[a]);
            hi[a] = hi[a].max(r[a] + to[a]);
        }
    }
    (lo.map(|v| v.ceil() as i64 - 1), hi.map(|v| v.floor() as i64 + 1))
}

/// Rotates `mask` about `center` (mask-local coordinates) by inverse-mapped
/// nearest-neighbour sampling. The result is returned in the same
/// coordinate frame, on a grid large enough for any rotation.
///
/// At multiples of 90 degrees, with `center` on the lattice, the result is
/// an exact permutation of the input voxels.
pub fn rotate_mask_by(mask: &Mask, rot: &Rotation, center: Vec3) -> PlacedMask {
    let d = mask.dims();
    let inv = rot.inverse();
    let (lo, hi) = rotated_extent(d, rot, center, center);
    let dims = [0, 1, 2].map(|a| (hi[a] - lo[a] + 1) as usize);
    let mut out = Mask::new(dims, false);
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let g = [x as i64 + lo[0], y as i64 + lo[1], z as i64 + lo[2]];
                let v = inv.apply([
                    g[0] as f64 - center[0],
                    g[1] as f64 - center[1],
                    g[2] as f64 - center[2],
                ]);
                let s = [0, 1, 2].map(|a| round_half_up(v[a] + center[a]));
                if mask.get_signed(s).unwrap_or(false) {
                    out.set([x, y, z], true);
                }
            }
        }
    }
    PlacedMask { origin: lo, mask: out }
}

/// [`rotate_mask_by`] with Euler angles in degrees about z, y, x.
pub fn rotate_mask(mask: &Mask, angles: EulerDeg, center: Vec3) -> PlacedMask {
    rotate_mask_by(mask, &Rotation::from_euler_deg(angles), center)
}

/// Coarse-to-fine search grid over Euler angles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotationGrid {
    /// Degrees; must divide 360.
    pub coarse_step: f64,
    pub levels: usize,
    /// Step multiplier per refinement level, in (0, 1).
    pub shrink: f64,
}

impl Default for RotationGrid {
    fn default() -> Self {
        RotationGrid {
            coarse_step: 15.0,
            levels: 3,
            shrink: 1.0 / 3.0,
        }
    }
}

impl RotationGrid {
    pub fn validate(&self) -> Result<()> {
        let n = 360.0 / self.coarse_step;
        if self.coarse_step.is_nan() || self.coarse_step <= 0.0 || (n - n.round()).abs() > 1e-9 {
            return Err(SvlError::Config(format!(
                "coarse step {} does not divide 360",
                self.coarse_step
            )));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(SvlError::Config(format!("shrink {} outside (0, 1)", self.shrink)));
        }
        Ok(())
    }

    /// Parses `STEPxLEVELS`, e.g. `15x3`.
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || SvlError::Config(format!("grid must look like 15x3, got {s:?}"));
        let (step, levels) = s.split_once('x').ok_or_else(bad)?;
        let g = RotationGrid {
            coarse_step: step.trim().parse().map_err(|_| bad())?,
            levels: levels.trim().parse().map_err(|_| bad())?,
            ..RotationGrid::default()
        };
        g.validate()?;
        Ok(g)
    }

    /// Coarse angles in lexicographic order: alpha and beta over `[0, 360)`,
    /// gamma over `[0, 180]`.
    ///
    /// The half range for gamma loses nothing because
    /// `Rz(a) Ry(b) Rx(g) = Rz(a + 180) Ry(180 - b) Rx(g - 180)`.
    pub fn coarse_angles(&self) -> Vec<EulerDeg> {
        let n = (360.0 / self.coarse_step).round() as usize;
        let ng = (180.0 / self.coarse_step + 1e-9).floor() as usize + 1;
        let step = self.coarse_step;
        let mut out = Vec::with_capacity(n * n * ng);
        for a in 0..n {
            for b in 0..n {
                for g in 0..ng {
                    out.push([a as f64 * step, b as f64 * step, g as f64 * step]);
                }
            }
        }
        out
    }
}

/// Mask in its own lattice with a centroid in that lattice.
struct Frame {
    dims: [usize; 3],
    data: Vec<bool>,
    centroid: Vec3,
    count: usize,
    /// Set voxels per `(y, z)` row.
    row_counts: Vec<u64>,
}

impl Frame {
    fn new(mask: Mask) -> Self {
        let dims = mask.dims();
        let mut sum = [0.0; 3];
        let mut count = 0;
        let mut row_counts = vec![0u64; dims[1] * dims[2]];
        for p in mask.iter_set() {
            for a in 0..3 {
                sum[a] += p[a] as f64;
            }
            count += 1;
            row_counts[p[1] + dims[1] * p[2]] += 1;
        }
        let centroid = sum.map(|s| s / count.max(1) as f64);
        Frame {
            dims,
            data: mask.into_data(),
            centroid,
            count,
            row_counts,
        }
    }

    fn downscaled(&self, f: f64) -> Frame {
        let nd = self.dims.map(|d| ((d as f64 * f).round() as usize).max(1));
        let mut m = Mask::new(nd, false);
        let src = |i: usize, a: usize| (((i as f64 + 0.5) / f) as usize).min(self.dims[a] - 1);
        for z in 0..nd[2] {
            let sz = src(z, 2);
            for y in 0..nd[1] {
                let sy = src(y, 1);
                for x in 0..nd[0] {
                    let sx = src(x, 0);
                    if self.data[sx + self.dims[0] * (sy + self.dims[1] * sz)] {
                        m.set([x, y, z], true);
                    }
                }
            }
        }
        Frame::new(m)
    }

    #[inline(always)]
    fn get(&self, x: i64, y: i64, z: i64) -> bool {
        let (ux, uy, uz) = (x as usize, y as usize, z as usize);
        // negative values wrap to huge indices and fail the bounds test
        ux < self.dims[0]
            && uy < self.dims[1]
            && uz < self.dims[2]
            && self.data[ux + self.dims[0] * (uy + self.dims[1] * uz)]
    }

    fn row_count(&self, y: i64, z: i64) -> u64 {
        if y < 0 || z < 0 || y as usize >= self.dims[1] || z as usize >= self.dims[2] {
            0
        } else {
            self.row_counts[y as usize + self.dims[1] * z as usize]
        }
    }
}

/// Dice as the exact ratio `2 |P ∩ Q| / (|P| + |Q|)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Ratio {
    num: u64,
    den: u64,
}

impl Ratio {
    fn value(self) -> f64 {
        if self.den == 0 {
            0.0
        } else {
            self.num as f64 / self.den as f64
        }
    }

    fn cmp(self, other: Ratio) -> std::cmp::Ordering {
        (self.num as u128 * other.den as u128).cmp(&(other.num as u128 * self.den as u128))
    }
}

/// Score an evaluation has to reach to stay interesting.
#[derive(Debug, Clone, Copy)]
struct Bound {
    best: Ratio,
    /// Whether matching `best` exactly is enough.
    equal_ok: bool,
}

/// Dice between `p` rotated by `rot` about its centroid onto `q`'s centroid,
/// and `q`. The rotated `p` is sampled on `q`'s lattice by inverse mapping.
///
/// Rows are visited in four interleaved passes. After each row the best
/// still reachable score is `2 (I + R) / (N + R + |Q|)`, with `I` and `N`
/// the intersection and rotated counts so far and `R` the voxels of `q` in
/// rows not yet visited; once that falls below `bound` the evaluation is
/// abandoned and `None` returned.
fn aligned_dice(p: &Frame, q: &Frame, rot: &Rotation, bound: Option<Bound>) -> Option<Ratio> {
    let inv = rot.inverse();
    let (lo, hi) = rotated_extent(p.dims, rot, p.centroid, q.centroid);
    let step = [inv.m[0][0], inv.m[1][0], inv.m[2][0]];
    let dp = p.dims.map(|d| d as f64);
    let qn = q.count as u64;
    let mut remaining: u64 = (lo[2]..=hi[2])
        .flat_map(|z| (lo[1]..=hi[1]).map(move |y| (y, z)))
        .map(|(y, z)| q.row_count(y, z))
        .sum();
    let mut rotated = 0u64;
    let mut inter = 0u64;
    for phase in 0..4i64 {
        let mut z = lo[2] + phase / 2;
        while z <= hi[2] {
            let mut y = lo[1] + phase % 2;
            while y <= hi[1] {
                let rel = [-q.centroid[0], y as f64 - q.centroid[1], z as f64 - q.centroid[2]];
                let r = inv.apply(rel);
                let base = [r[0] + p.centroid[0], r[1] + p.centroid[1], r[2] + p.centroid[2]];
                // x range whose preimage stays inside p's grid
                let mut xa = lo[0] as f64;
                let mut xb = hi[0] as f64;
                for a in 0..3 {
                    let (l, h) = (-0.5 - base[a], dp[a] - 0.5 - base[a]);
                    if step[a].abs() < 1e-12 {
                        if l > 0.0 || h <= 0.0 {
                            xb = xa - 1.0;
                        }
                        continue;
                    }
                    let (t0, t1) = if step[a] > 0.0 {
                        (l / step[a], h / step[a])
                    } else {
                        (h / step[a], l / step[a])
                    };
                    xa = xa.max(t0);
                    xb = xb.min(t1);
                }
                if xb >= xa {
                    let x0 = (xa.floor() as i64 - 1).max(lo[0]);
                    let x1 = (xb.ceil() as i64 + 1).min(hi[0]);
                    let q_row = q.row_count(y, z) > 0;
                    for x in x0..=x1 {
                        let xf = x as f64;
                        let sx = round_half_up(base[0] + xf * step[0]);
                        let sy = round_half_up(base[1] + xf * step[1]);
                        let sz = round_half_up(base[2] + xf * step[2]);
                        if p.get(sx, sy, sz) {
                            rotated += 1;
                            if q_row && q.get(x, y, z) {
                                inter += 1;
                            }
                        }
                    }
                }
                remaining -= q.row_count(y, z);
                if let Some(b) = bound {
                    let reach = Ratio {
                        num: 2 * (inter + remaining),
                        den: rotated + remaining + qn,
                    };
                    match reach.cmp(b.best) {
                        std::cmp::Ordering::Less => return None,
                        std::cmp::Ordering::Equal if !b.equal_ok => return None,
                        _ => {}
                    }
                }
                y += 2;
            }
            z += 2;
        }
    }
    Some(Ratio {
        num: 2 * inter,
        den: rotated + qn,
    })
}

/// Highest Dice over the searched rotations and the angles achieving it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotDice {
    pub score: f64,
    /// Euler angles (degrees, each in `[0, 360)`) rotating `p` onto `q`.
    pub angles: EulerDeg,
    /// Centroids used for alignment, in parent-volume coordinates, after
    /// filling inclusions.
    pub center_p: Vec3,
    pub center_q: Vec3,
}

fn lex_less(a: &EulerDeg, b: &EulerDeg) -> bool {
    a.partial_cmp(b) == Some(std::cmp::Ordering::Less)
}

fn is_perfect(r: Ratio) -> bool {
    r.den > 0 && r.num == r.den
}

/// Best of `candidates` (and of `seed`, when given); ties resolve to the
/// lexicographically smallest angles. Stops early on a perfect score.
fn search(
    p: &Frame,
    q: &Frame,
    candidates: &[EulerDeg],
    seed: Option<(Ratio, EulerDeg)>,
) -> (Ratio, EulerDeg) {
    let mut best = seed;
    for &angles in candidates {
        if best.is_some_and(|(r, _)| is_perfect(r)) {
            break;
        }
        let a = normalize_angles(angles);
        let bound = best.map(|(r, ba)| Bound {
            best: r,
            equal_ok: lex_less(&a, &ba),
        });
        if let Some(s) = aligned_dice(p, q, &Rotation::from_euler_deg(angles), bound) {
            let better = match best {
                None => true,
                Some((r, ba)) => match s.cmp(r) {
                    std::cmp::Ordering::Greater => true,
                    std::cmp::Ordering::Equal => lex_less(&a, &ba),
                    std::cmp::Ordering::Less => false,
                },
            };
            if better {
                best = Some((s, a));
            }
        }
    }
    best.unwrap_or((Ratio { num: 0, den: 0 }, [0.0; 3]))
}

fn window(center: EulerDeg, prev_step: f64, step: f64) -> Vec<EulerDeg> {
    let k = (prev_step / step).round() as i64;
    let mut out = Vec::new();
    for i in -k..=k {
        for j in -k..=k {
            for l in -k..=k {
                out.push(normalize_angles([
                    center[0] + i as f64 * step,
                    center[1] + j as f64 * step,
                    center[2] + l as f64 * step,
                ]));
            }
        }
    }
    out.sort_by(|a, b| a.partial_cmp(b).unwrap());
    out.dedup();
    out
}

/// Rotation-optimised Dice of `p` against `q`.
///
/// Both masks are inclusion-filled and aligned at their centroids. If `p`
/// has more than [`DOWNSCALE_VOXELS`] voxels the coarse grid is searched on
/// copies shrunk so `p` has about that many; refinement always runs at full
/// resolution within one step of the previous best. The result equals an
/// exhaustive evaluation of every searched rotation: evaluations are only cut
/// short once they provably cannot win.
pub fn rotdice(p: &ParticleRecord, q: &ParticleRecord, grid: &RotationGrid) -> RotDice {
    let fp = Frame::new(fill_inclusions(&p.crop.mask));
    let fq = Frame::new(fill_inclusions(&q.crop.mask));
    let global = |f: &Frame, c: &MaskCrop| [0, 1, 2].map(|a| f.centroid[a] + c.bbox.lo[a] as f64);
    let center_p = global(&fp, &p.crop);
    let center_q = global(&fq, &q.crop);

    let coarse = grid.coarse_angles();
    let mut best = if fp.count > DOWNSCALE_VOXELS {
        let f = (DOWNSCALE_VOXELS as f64 / fp.count as f64).cbrt();
        let (_, angles) = search(&fp.downscaled(f), &fq.downscaled(f), &coarse, None);
        let full = aligned_dice(&fp, &fq, &Rotation::from_euler_deg(angles), None)
            .expect("unbounded evaluation");
        (full, angles)
    } else {
        search(&fp, &fq, &coarse, None)
    };
    let mut step = grid.coarse_step;
    for _ in 0..grid.levels {
        if is_perfect(best.0) {
            break;
        }
        let next = step * grid.shrink;
        best = search(&fp, &fq, &window(best.1, step, next), Some(best));
        step = next;
    }
    RotDice {
        score: best.0.value(),
        angles: best.1,
        center_p,
        center_q,
    }
}
