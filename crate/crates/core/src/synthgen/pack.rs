use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::shapes::{is_well_formed, permute_axis_aligned, ParticleShape};
use crate::error::{Result, SvlError};
use crate::rotation::{axis_aligned_rotations, EulerDeg, Rotation, Vec3};
use crate::volume::{core, Gray, Labels, Mask, MaskCrop, BoundingBox};

pub const FOREGROUND_INTENSITY: f64 = 40000.0;
pub const BACKGROUND_INTENSITY: f64 = 8000.0;

/// How particles are reoriented between scans.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RotationMode {
    /// Only the 24 axis-aligned cube rotations; copies are voxel-exact.
    Exact24,
    /// Arbitrary Euler angles and sub-voxel offsets; copies are re-rasterized.
    FreeEuler,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackConfig {
    pub count: usize,
    pub radius_min: f64,
    pub radius_max: f64,
    pub scans: usize,
    pub mode: RotationMode,
    pub seed: u64,
    /// Container size; derived from the particle sizes when absent.
    #[serde(default)]
    pub container: Option<[usize; 3]>,
    /// Particles (beyond two) placed in face contact with an earlier one,
    /// as a fraction of `count`.
    #[serde(default = "default_contact_fraction")]
    pub contact_fraction: f64,
}

fn default_contact_fraction() -> f64 {
    0.2
}

impl PackConfig {
    pub fn new(count: usize, radius: (f64, f64), scans: usize, mode: RotationMode, seed: u64) -> Self {
        PackConfig {
            count,
            radius_min: radius.0,
            radius_max: radius.1,
            scans,
            mode,
            seed,
            container: None,
            contact_fraction: default_contact_fraction(),
        }
    }
}

/// Run-length encoded binary mask: run lengths alternate starting with unset
/// voxels, in z-slowest order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RleMask {
    pub dims: [usize; 3],
    pub runs: Vec<u32>,
}

impl RleMask {
    pub fn encode(mask: &Mask) -> Self {
        let mut runs = Vec::new();
        let mut current = false;
        let mut len = 0u32;
        for &b in mask.data() {
            if b == current {
                len += 1;
            } else {
                runs.push(len);
                current = b;
                len = 1;
            }
        }
        runs.push(len);
        RleMask {
            dims: mask.dims(),
            runs,
        }
    }

    pub fn decode(&self) -> Result<Mask> {
        let mut data = Vec::with_capacity(self.dims.iter().product());
        let mut value = false;
        for &r in &self.runs {
            data.extend(std::iter::repeat_n(value, r as usize));
            value = !value;
        }
        Mask::from_vec(self.dims, data)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleEntry {
    pub id: u32,
    pub shape_seed: u64,
    pub canonical: RleMask,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub id: u32,
    /// Lower corner of the placed mask's bounding box.
    pub translation: [usize; 3],
    /// Euler angles in degrees about z, y, x.
    pub rotation: EulerDeg,
    /// Sub-voxel sampling offset (free-euler only).
    #[serde(default)]
    pub offset: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanLedger {
    pub placements: Vec<Placement>,
    /// Pairs of particle ids placed in face contact.
    pub contacts: Vec<(u32, u32)>,
}

/// Synthetic particle population with the rigid placement of every particle
/// in every scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthPack {
    pub config: PackConfig,
    pub container: [usize; 3],
    pub mode: RotationMode,
    pub particles: Vec<ParticleEntry>,
    pub scans: Vec<ScanLedger>,
}

impl GroundTruthPack {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    fn shape(&self, id: u32) -> ParticleShape {
        let entry = &self.particles[id as usize - 1];
        ParticleShape::from_seed(entry.shape_seed, self.config.radius_min, self.config.radius_max)
    }

    /// Replays the stored transform of particle `id` in scan `scan`.
    pub fn placed_mask(&self, scan: usize, id: u32) -> Result<MaskCrop> {
        let placement = self.scans[scan]
            .placements
            .iter()
            .find(|p| p.id == id)
            .ok_or(SvlError::LabelAbsent(id))?;
        let local = match self.mode {
            RotationMode::Exact24 => {
                let canonical = self.particles[id as usize - 1].canonical.decode()?;
                permute_axis_aligned(&canonical, &Rotation::from_euler_deg(placement.rotation))
            }
            RotationMode::FreeEuler => self
                .shape(id)
                .rasterize(&Rotation::from_euler_deg(placement.rotation), placement.offset),
        };
        Ok(place(&local, placement.translation))
    }

    /// Ground-truth instance labels of one scan (label = particle id).
    pub fn label_volume(&self, scan: usize) -> Result<Labels> {
        let mut labels = Labels::new(self.container, 0);
        for p in &self.scans[scan].placements {
            self.placed_mask(scan, p.id)?.embed(&mut labels, p.id);
        }
        Ok(labels)
    }
}

fn place(local: &Mask, at: [usize; 3]) -> MaskCrop {
    let d = local.dims();
    MaskCrop {
        bbox: BoundingBox {
            lo: at,
            hi: [at[0] + d[0] - 1, at[1] + d[1] - 1, at[2] + d[2] - 1],
        },
        mask: local.clone(),
    }
}

const MAX_SHAPE_TRIES: u64 = 64;
const MAX_POSITION_TRIES: usize = 4000;

/// Generates a pack of `count` particles reshuffled into `scans` scans.
pub fn generate_pack(cfg: &PackConfig) -> Result<GroundTruthPack> {
    if cfg.count == 0 {
        return Err(SvlError::Config("count must be at least 1".into()));
    }
    if cfg.scans == 0 {
        return Err(SvlError::Config("at least one scan is required".into()));
    }
    if !(cfg.radius_min >= 1.0 && cfg.radius_max >= cfg.radius_min) {
        return Err(SvlError::Config(format!(
            "bad radius range [{}, {}]",
            cfg.radius_min, cfg.radius_max
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut particles = Vec::with_capacity(cfg.count);
    let mut canon_masks = Vec::with_capacity(cfg.count);
    for id in 1..=cfg.count as u32 {
        let base: u64 = rng.random();
        let mut found = None;
        for k in 0..MAX_SHAPE_TRIES {
            let seed = base.wrapping_add(k);
            let m = ParticleShape::from_seed(seed, cfg.radius_min, cfg.radius_max)
                .rasterize(&Rotation::IDENTITY, [0.0; 3]);
            if is_well_formed(&m) {
                found = Some((seed, m));
                break;
            }
        }
        let (shape_seed, mask) = found
            .ok_or_else(|| SvlError::Packing(format!("no well-formed shape for particle {id}")))?;
        particles.push(ParticleEntry {
            id,
            shape_seed,
            canonical: RleMask::encode(&mask),
        });
        canon_masks.push(mask);
    }

    let container = match cfg.container {
        Some(c) => c,
        None => {
            let total: f64 = canon_masks
                .iter()
                .map(|m| {
                    let d = m.dims().iter().cloned().max().unwrap() as f64;
                    (d * 1.2).powi(3)
                })
                .sum();
            let side = (total / 0.3).cbrt().ceil() as usize + 4;
            [side; 3]
        }
    };

    let mut pack = GroundTruthPack {
        config: cfg.clone(),
        container,
        mode: cfg.mode,
        particles,
        scans: Vec::with_capacity(cfg.scans),
    };

    let axis_rots = axis_aligned_rotations();
    for _ in 0..cfg.scans {
        let scan_seed: u64 = rng.random();
        let ledger = pack_scan(&pack, &canon_masks, &axis_rots, scan_seed)?;
        pack.scans.push(ledger);
    }
    Ok(pack)
}

struct Occupancy {
    owner: Labels,
}

impl Occupancy {
    fn fits(&self, local: &Mask, at: [usize; 3]) -> bool {
        let d = local.dims();
        let c = self.owner.dims();
        (0..3).all(|a| at[a] >= 1 && at[a] + d[a] < c[a])
    }

    /// Owners found in the 26-neighbourhood of the placed voxels, or `None`
    /// on overlap.
    fn neighbours(&self, local: &Mask, at: [usize; 3]) -> Option<Vec<u32>> {
        let mut found = Vec::new();
        for p in local.iter_set() {
            let g = [p[0] + at[0], p[1] + at[1], p[2] + at[2]];
            if self.owner.get(g) != 0 {
                return None;
            }
            for dz in -1..=1i64 {
                for dy in -1..=1i64 {
                    for dx in -1..=1i64 {
                        let q = [g[0] as i64 + dx, g[1] as i64 + dy, g[2] as i64 + dz];
                        if let Some(o) = self.owner.get_signed(q) {
                            if o != 0 && !found.contains(&o) {
                                found.push(o);
                            }
                        }
                    }
                }
            }
        }
        Some(found)
    }

    fn face_contact(&self, local: &Mask, at: [usize; 3], partner: u32) -> bool {
        local.iter_set().any(|p| {
            let g = [p[0] + at[0], p[1] + at[1], p[2] + at[2]];
            crate::volume::FACE_OFFSETS.iter().any(|o| {
                let q = [g[0] as i64 + o[0], g[1] as i64 + o[1], g[2] as i64 + o[2]];
                self.owner.get_signed(q) == Some(partner)
            })
        })
    }

    /// Interiors of the new particle and `partner` must not touch, even
    /// diagonally.
    fn interiors_apart(&self, local: &Mask, at: [usize; 3], partner: u32) -> bool {
        let interior = core(local);
        let partner_core = |q: [i64; 3]| -> bool {
            if self.owner.get_signed(q) != Some(partner) {
                return false;
            }
            crate::volume::FACE_OFFSETS.iter().all(|o| {
                self.owner.get_signed([q[0] + o[0], q[1] + o[1], q[2] + o[2]]) == Some(partner)
            })
        };
        for p in interior.iter_set() {
            let g = [(p[0] + at[0]) as i64, (p[1] + at[1]) as i64, (p[2] + at[2]) as i64];
            for dz in -1..=1i64 {
                for dy in -1..=1i64 {
                    for dx in -1..=1i64 {
                        if partner_core([g[0] + dx, g[1] + dy, g[2] + dz]) {
                            return false;
                        }
                    }
                }
            }
        }
        true
    }

    fn stamp(&mut self, local: &Mask, at: [usize; 3], id: u32) {
        for p in local.iter_set() {
            self.owner.set([p[0] + at[0], p[1] + at[1], p[2] + at[2]], id);
        }
    }
}

fn pack_scan(
    pack: &GroundTruthPack,
    canon: &[Mask],
    axis_rots: &[EulerDeg],
    seed: u64,
) -> Result<ScanLedger> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = canon.len();
    let mut order: Vec<u32> = (1..=count as u32).collect();
    order.shuffle(&mut rng);

    let contacts_wanted = if count < 2 {
        0
    } else {
        let frac = (pack.config.contact_fraction * count as f64).round() as usize;
        frac.max(2).min(count - 1)
    };

    let mut occ = Occupancy {
        owner: Labels::new(pack.container, 0),
    };
    let mut placements = Vec::with_capacity(count);
    let mut contacts = Vec::new();
    let mut bboxes: Vec<(u32, [usize; 3], [usize; 3])> = Vec::new();

    for (k, &id) in order.iter().enumerate() {
        let (rotation, offset, local) = match pack.mode {
            RotationMode::Exact24 => {
                let r = axis_rots[rng.random_range(0..axis_rots.len())];
                let m = permute_axis_aligned(&canon[id as usize - 1], &Rotation::from_euler_deg(r));
                (r, [0.0; 3], m)
            }
            RotationMode::FreeEuler => {
                let shape = pack.shape(id);
                let mut attempt = None;
                for _ in 0..MAX_SHAPE_TRIES {
                    let r = [
                        rng.random_range(0.0..360.0),
                        rng.random_range(0.0..180.0),
                        rng.random_range(0.0..360.0),
                    ];
                    let off = [
                        rng.random_range(-0.5..0.5),
                        rng.random_range(-0.5..0.5),
                        rng.random_range(-0.5..0.5),
                    ];
                    let m = shape.rasterize(&Rotation::from_euler_deg(r), off);
                    if is_well_formed(&m) {
                        attempt = Some((r, off, m));
                        break;
                    }
                }
                attempt.ok_or_else(|| {
                    SvlError::Packing(format!("particle {id} has no well-formed orientation"))
                })?
            }
        };
        let d = local.dims();
        let c = pack.container;
        if (0..3).any(|a| d[a] + 2 >= c[a]) {
            return Err(SvlError::Packing(format!(
                "particle {id} ({d:?}) does not fit into container {c:?}"
            )));
        }

        let want_contact = k >= 1 && k <= contacts_wanted;
        let mut at = None;
        if want_contact {
            for _ in 0..200 {
                let &(partner, plo, phi) = &bboxes[rng.random_range(0..bboxes.len())];
                if let Some(pos) = slide_into_contact(&occ, &local, partner, plo, phi, &mut rng) {
                    contacts.push((partner.min(id), partner.max(id)));
                    at = Some(pos);
                    break;
                }
            }
        }
        if at.is_none() {
            for _ in 0..MAX_POSITION_TRIES {
                let pos = [
                    rng.random_range(1..c[0] - d[0]),
                    rng.random_range(1..c[1] - d[1]),
                    rng.random_range(1..c[2] - d[2]),
                ];
                if matches!(occ.neighbours(&local, pos), Some(n) if n.is_empty()) {
                    at = Some(pos);
                    break;
                }
            }
        }
        let at = at.ok_or_else(|| {
            SvlError::Packing(format!(
                "could not place particle {id} in container {:?}",
                pack.container
            ))
        })?;
        occ.stamp(&local, at, id);
        bboxes.push((id, at, [at[0] + d[0] - 1, at[1] + d[1] - 1, at[2] + d[2] - 1]));
        placements.push(Placement {
            id,
            translation: at,
            rotation,
            offset,
        });
    }
    if contacts.len() < contacts_wanted {
        return Err(SvlError::Packing(format!(
            "only {} of {contacts_wanted} contacts could be made",
            contacts.len()
        )));
    }
    placements.sort_by_key(|p| p.id);
    Ok(ScanLedger {
        placements,
        contacts,
    })
}

/// Approaches `partner` along a random axis until the new particle touches
/// it face-to-face without overlapping or touching anything else.
fn slide_into_contact(
    occ: &Occupancy,
    local: &Mask,
    partner: u32,
    plo: [usize; 3],
    phi: [usize; 3],
    rng: &mut ChaCha8Rng,
) -> Option<[usize; 3]> {
    let d = local.dims();
    let axis = rng.random_range(0..3usize);
    let positive = rng.random_bool(0.5);
    let mut pos = [0i64; 3];
    for a in 0..3 {
        if a == axis {
            continue;
        }
        let centre = (plo[a] + phi[a]) as f64 / 2.0;
        let jitter = rng.random_range(-2.0..=2.0);
        pos[a] = (centre - d[a] as f64 / 2.0 + jitter).round() as i64;
    }
    pos[axis] = if positive {
        phi[axis] as i64 + 2
    } else {
        plo[axis] as i64 - d[axis] as i64 - 1
    };
    let step = if positive { -1 } else { 1 };
    let span = (d[axis] + phi[axis] - plo[axis] + 4) as i64;
    for _ in 0..span {
        if pos.iter().any(|&v| v < 0) {
            return None;
        }
        let at = [pos[0] as usize, pos[1] as usize, pos[2] as usize];
        if !occ.fits(local, at) {
            return None;
        }
        let neighbours = occ.neighbours(local, at)?;
        if neighbours.iter().any(|&n| n != partner) {
            return None;
        }
        if !neighbours.is_empty() && occ.face_contact(local, at, partner) {
            return occ.interiors_apart(local, at, partner).then_some(at);
        }
        pos[axis] += step;
    }
    None
}

/// Renders grayscale and label volumes for every scan.
///
/// Foreground is 40000, background 8000, plus seeded Gaussian noise of
/// standard deviation `noise_sigma`, clamped to 16 bits.
pub fn render_scans(pack: &GroundTruthPack, noise_sigma: f64, seed: u64) -> Result<Vec<(Gray, Labels)>> {
    (0..pack.scans.len())
        .into_par_iter()
        .map(|scan| {
            let labels = pack.label_volume(scan)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (0x9E37_79B9_7F4A_7C15u64.wrapping_mul(scan as u64 + 1)));
            let noise = Normal::new(0.0, noise_sigma.max(0.0))
                .map_err(|e| SvlError::Config(e.to_string()))?;
            let gray = labels.map(|l| if l != 0 { FOREGROUND_INTENSITY } else { BACKGROUND_INTENSITY } as u16);
            let data = gray
                .data()
                .iter()
                .map(|&v| {
                    if noise_sigma > 0.0 {
                        (v as f64 + noise.sample(&mut rng)).round().clamp(0.0, 65535.0) as u16
                    } else {
                        v
                    }
                })
                .collect();
            Ok((Gray::from_vec(labels.dims(), data)?, labels))
        })
        .collect()
}
