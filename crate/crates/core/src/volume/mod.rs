//! Dense voxel volumes shared by every stage of the pipeline.
//!
//! A [`Volume`] stores one scalar per voxel in z-slowest row-major order, so
//! the flat index of `(x, y, z)` is `x + nx * (y + ny * z)`. Coordinates are
//! always `(x, y, z)` triples in voxel units. Three element types are used:
//! 16-bit grayscale intensities ([`Gray`]), 32-bit instance labels
//! ([`Labels`], `0` = background or unlabeled) and binary masks ([`Mask`]).

mod io;

pub use io::{load_any, load_volume, save_volume, AnyVolume, VolumeHeader};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SvlError};

/// On-disk element tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DType {
    #[serde(rename = "u16")]
    U16,
    #[serde(rename = "u32")]
    U32,
    #[serde(rename = "u8mask")]
    U8Mask,
}

impl DType {
    pub fn tag(self) -> &'static str {
        match self {
            DType::U16 => "u16",
            DType::U32 => "u32",
            DType::U8Mask => "u8mask",
        }
    }

    pub fn from_tag(tag: &str) -> Result<Self> {
        match tag {
            "u16" => Ok(DType::U16),
            "u32" => Ok(DType::U32),
            "u8mask" => Ok(DType::U8Mask),
            other => Err(SvlError::UnknownDtype(other.to_string())),
        }
    }

    pub fn width(self) -> usize {
        match self {
            DType::U16 => 2,
            DType::U32 => 4,
            DType::U8Mask => 1,
        }
    }
}

/// Element types that can live in a [`Volume`] and be written to disk.
pub trait Voxel: Copy + Default + PartialEq + Send + Sync + std::fmt::Debug + 'static {
    const DTYPE: DType;
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Result<Self>;
    fn to_u32(self) -> u32;
}

impl Voxel for u16 {
    const DTYPE: DType = DType::U16;
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Result<Self> {
        Ok(u16::from_le_bytes([bytes[0], bytes[1]]))
    }
    fn to_u32(self) -> u32 {
        self as u32
    }
}

impl Voxel for u32 {
    const DTYPE: DType = DType::U32;
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Result<Self> {
        Ok(u32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]))
    }
    fn to_u32(self) -> u32 {
        self
    }
}

impl Voxel for bool {
    const DTYPE: DType = DType::U8Mask;
    fn write_le(self, out: &mut Vec<u8>) {
        out.push(self as u8);
    }
    fn read_le(bytes: &[u8]) -> Result<Self> {
        match bytes[0] {
            0 => Ok(false),
            1 => Ok(true),
            v => Err(SvlError::MaskValue(v)),
        }
    }
    fn to_u32(self) -> u32 {
        self as u32
    }
}

/// Dense 3D grid of voxels.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume<T> {
    dims: [usize; 3],
    spacing: [f64; 3],
    data: Vec<T>,
}

pub type Gray = Volume<u16>;
pub type Labels = Volume<u32>;
pub type Mask = Volume<bool>;

/// Face-neighbour offsets.
pub const FACE_OFFSETS: [[i64; 3]; 6] = [
    [-1, 0, 0],
    [1, 0, 0],
    [0, -1, 0],
    [0, 1, 0],
    [0, 0, -1],
    [0, 0, 1],
];

impl<T: Voxel> Volume<T> {
    pub fn new(dims: [usize; 3], fill: T) -> Self {
        assert!(dims.iter().all(|&d| d > 0), "volume dims must be positive");
        Volume {
            dims,
            spacing: [1.0; 3],
            data: vec![fill; dims[0] * dims[1] * dims[2]],
        }
    }

    pub fn from_vec(dims: [usize; 3], data: Vec<T>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(SvlError::Header(format!("non-positive dims {dims:?}")));
        }
        let expected = dims[0] * dims[1] * dims[2];
        if data.len() != expected {
            return Err(SvlError::PayloadSize {
                expected: expected * T::DTYPE.width(),
                actual: data.len() * T::DTYPE.width(),
            });
        }
        Ok(Volume {
            dims,
            spacing: [1.0; 3],
            data,
        })
    }

    pub fn with_spacing(mut self, spacing: [f64; 3]) -> Self {
        self.spacing = spacing;
        self
    }

    #[inline]
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn index(&self, p: [usize; 3]) -> usize {
        debug_assert!(p[0] < self.dims[0] && p[1] < self.dims[1] && p[2] < self.dims[2]);
        p[0] + self.dims[0] * (p[1] + self.dims[1] * p[2])
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let x = idx % self.dims[0];
        let rest = idx / self.dims[0];
        [x, rest % self.dims[1], rest / self.dims[1]]
    }

    #[inline]
    pub fn get(&self, p: [usize; 3]) -> T {
        self.data[self.index(p)]
    }

    #[inline]
    pub fn set(&mut self, p: [usize; 3], v: T) {
        let i = self.index(p);
        self.data[i] = v;
    }

    /// Signed lookup; `None` outside the grid.
    #[inline]
    pub fn get_signed(&self, p: [i64; 3]) -> Option<T> {
        self.in_bounds(p)
            .then(|| self.data[self.index([p[0] as usize, p[1] as usize, p[2] as usize])])
    }

    #[inline]
    pub fn in_bounds(&self, p: [i64; 3]) -> bool {
        (0..3).all(|a| p[a] >= 0 && (p[a] as usize) < self.dims[a])
    }

    pub fn same_dims<U>(&self, other: &Volume<U>) -> Result<()> {
        if self.dims == other.dims {
            Ok(())
        } else {
            Err(SvlError::DimMismatch(self.dims, other.dims))
        }
    }

    pub fn map<U: Voxel>(&self, f: impl Fn(T) -> U) -> Volume<U> {
        Volume {
            dims: self.dims,
            spacing: self.spacing,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn count(&self, pred: impl Fn(T) -> bool) -> usize {
        self.data.iter().filter(|&&v| pred(v)).count()
    }

    /// Copies the box `bbox` out into a new volume.
    pub fn extract(&self, bbox: &BoundingBox) -> Volume<T> {
        let d = bbox.dims();
        let mut out = Vec::with_capacity(d[0] * d[1] * d[2]);
        for z in bbox.lo[2]..=bbox.hi[2] {
            for y in bbox.lo[1]..=bbox.hi[1] {
                let start = self.index([bbox.lo[0], y, z]);
                out.extend_from_slice(&self.data[start..start + d[0]]);
            }
        }
        Volume {
            dims: d,
            spacing: self.spacing,
            data: out,
        }
    }
}

impl Mask {
    /// Number of set voxels.
    pub fn popcount(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn iter_set(&self) -> impl Iterator<Item = [usize; 3]> + '_ {
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| self.coords(i))
    }
}

impl Labels {
    pub fn max_label(&self) -> u32 {
        self.data.iter().copied().max().unwrap_or(0)
    }

    /// Binary mask of all nonzero voxels.
    pub fn foreground(&self) -> Mask {
        self.map(|l| l != 0)
    }
}

/// Set voxels with at least one face neighbour outside the mask (the grid
/// border counts as outside).
pub fn shell(mask: &Mask) -> Mask {
    let mut out = Mask::new(mask.dims(), false);
    for (i, &set) in mask.data().iter().enumerate() {
        if !set {
            continue;
        }
        let c = mask.coords(i);
        let exposed = FACE_OFFSETS.iter().any(|o| {
            let q = [c[0] as i64 + o[0], c[1] as i64 + o[1], c[2] as i64 + o[2]];
            !mask.get_signed(q).unwrap_or(false)
        });
        if exposed {
            out.data_mut()[i] = true;
        }
    }
    out
}

/// Set voxels whose six face neighbours are all set.
pub fn core(mask: &Mask) -> Mask {
    let sh = shell(mask);
    let data = mask
        .data()
        .iter()
        .zip(sh.data())
        .map(|(&m, &s)| m && !s)
        .collect();
    Mask::from_vec(mask.dims(), data).expect("dims preserved")
}

/// Inclusive axis-aligned voxel box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub lo: [usize; 3],
    pub hi: [usize; 3],
}

impl BoundingBox {
    pub fn point(p: [usize; 3]) -> Self {
        BoundingBox { lo: p, hi: p }
    }

    pub fn of_dims(dims: [usize; 3]) -> Self {
        BoundingBox {
            lo: [0; 3],
            hi: [dims[0] - 1, dims[1] - 1, dims[2] - 1],
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        [
            self.hi[0] - self.lo[0] + 1,
            self.hi[1] - self.lo[1] + 1,
            self.hi[2] - self.lo[2] + 1,
        ]
    }

    pub fn volume(&self) -> usize {
        let d = self.dims();
        d[0] * d[1] * d[2]
    }

    pub fn include(&mut self, p: [usize; 3]) {
        for a in 0..3 {
            self.lo[a] = self.lo[a].min(p[a]);
            self.hi[a] = self.hi[a].max(p[a]);
        }
    }

    pub fn contains(&self, p: [usize; 3]) -> bool {
        (0..3).all(|a| p[a] >= self.lo[a] && p[a] <= self.hi[a])
    }

    pub fn union(&self, other: &BoundingBox) -> BoundingBox {
        let mut b = *self;
        b.include(other.lo);
        b.include(other.hi);
        b
    }
}

/// Binary particle mask cropped to its tight bounding box, remembering where
/// it sits in the parent volume.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskCrop {
    pub bbox: BoundingBox,
    pub mask: Mask,
}

impl MaskCrop {
    /// Builds a tight crop from global voxel coordinates. `None` if empty.
    pub fn from_points(points: &[[usize; 3]]) -> Option<Self> {
        let first = *points.first()?;
        let mut bbox = BoundingBox::point(first);
        for &p in points {
            bbox.include(p);
        }
        let mut mask = Mask::new(bbox.dims(), false);
        for &p in points {
            mask.set(
                [p[0] - bbox.lo[0], p[1] - bbox.lo[1], p[2] - bbox.lo[2]],
                true,
            );
        }
        Some(MaskCrop { bbox, mask })
    }

    pub fn voxel_count(&self) -> usize {
        self.mask.popcount()
    }

    /// Membership test in parent-volume coordinates.
    #[inline]
    pub fn contains(&self, p: [i64; 3]) -> bool {
        let local = [
            p[0] - self.bbox.lo[0] as i64,
            p[1] - self.bbox.lo[1] as i64,
            p[2] - self.bbox.lo[2] as i64,
        ];
        self.mask.get_signed(local).unwrap_or(false)
    }

    /// Set voxels in parent-volume coordinates.
    pub fn points(&self) -> Vec<[usize; 3]> {
        self.mask
            .iter_set()
            .map(|p| {
                [
                    p[0] + self.bbox.lo[0],
                    p[1] + self.bbox.lo[1],
                    p[2] + self.bbox.lo[2],
                ]
            })
            .collect()
    }

    /// Writes `value` into `target` at every set voxel.
    pub fn embed<T: Voxel>(&self, target: &mut Volume<T>, value: T) {
        for p in self.points() {
            target.set(p, value);
        }
    }
}

/// Tight crop of the voxels equal to `value`, binarized.
pub fn crop_to_mask<T: Voxel>(v: &Volume<T>, value: T) -> Result<MaskCrop> {
    let mut bbox: Option<BoundingBox> = None;
    for (i, &x) in v.data().iter().enumerate() {
        if x == value {
            let p = v.coords(i);
            match bbox.as_mut() {
                Some(b) => b.include(p),
                None => bbox = Some(BoundingBox::point(p)),
            }
        }
    }
    let bbox = bbox.ok_or_else(|| SvlError::LabelAbsent(value.to_u32()))?;
    let sub = v.extract(&bbox);
    Ok(MaskCrop {
        bbox,
        mask: sub.map(|x| x == value),
    })
}

/// Tight crop of every nonzero label, keyed by label.
pub fn label_crops(labels: &Labels) -> BTreeMap<u32, MaskCrop> {
    let mut points: BTreeMap<u32, Vec<[usize; 3]>> = BTreeMap::new();
    for (i, &l) in labels.data().iter().enumerate() {
        if l != 0 {
            points.entry(l).or_default().push(labels.coords(i));
        }
    }
    points
        .into_iter()
        .filter_map(|(l, pts)| MaskCrop::from_points(&pts).map(|c| (l, c)))
        .collect()
}

/// Otsu threshold over the full 16-bit histogram. Voxels `>= t` are foreground.
pub fn otsu_threshold(gray: &Gray) -> u16 {
    let mut hist = vec![0u64; 65536];
    for &v in gray.data() {
        hist[v as usize] += 1;
    }
    let total = gray.len() as f64;
    let sum_all: f64 = hist
        .iter()
        .enumerate()
        .map(|(i, &c)| i as f64 * c as f64)
        .sum();
    let (mut w_bg, mut sum_bg) = (0.0f64, 0.0f64);
    let (mut best_t, mut best_var) = (1usize, -1.0f64);
    // threshold t splits [0, t) | [t, 65535]
    for t in 1..65536usize {
        w_bg += hist[t - 1] as f64;
        sum_bg += (t - 1) as f64 * hist[t - 1] as f64;
        let w_fg = total - w_bg;
        if w_bg == 0.0 || w_fg == 0.0 {
            continue;
        }
        let mean_bg = sum_bg / w_bg;
        let mean_fg = (sum_all - sum_bg) / w_fg;
        let var = w_bg * w_fg * (mean_bg - mean_fg).powi(2);
        if var > best_var {
            best_var = var;
            best_t = t;
        }
    }
    best_t as u16
}

pub fn threshold(gray: &Gray, t: u16) -> Mask {
    gray.map(|v| v >= t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crop_single_voxel() {
        let mut v = Labels::new([8, 8, 8], 0);
        v.set([3, 4, 5], 5);
        let crop = crop_to_mask(&v, 5).unwrap();
        assert_eq!(crop.bbox, BoundingBox::point([3, 4, 5]));
        assert_eq!(crop.mask.dims(), [1, 1, 1]);
        assert!(crop.mask.get([0, 0, 0]));
    }

    #[test]
    fn crop_full_volume() {
        let v = Labels::new([4, 3, 2], 9);
        let crop = crop_to_mask(&v, 9).unwrap();
        assert_eq!(crop.bbox, BoundingBox::of_dims([4, 3, 2]));
        assert_eq!(crop.voxel_count(), 24);
    }

    #[test]
    fn crop_absent_label() {
        let v = Labels::new([4, 4, 4], 1);
        assert!(matches!(crop_to_mask(&v, 2), Err(SvlError::LabelAbsent(2))));
    }

    #[test]
    fn index_is_z_slowest() {
        let v = Labels::new([3, 4, 5], 0);
        assert_eq!(v.index([1, 0, 0]), 1);
        assert_eq!(v.index([0, 1, 0]), 3);
        assert_eq!(v.index([0, 0, 1]), 12);
        assert_eq!(v.coords(v.index([2, 3, 4])), [2, 3, 4]);
    }

    #[test]
    fn otsu_splits_two_levels() {
        let mut g = Gray::new([10, 10, 10], 8000);
        for i in 0..300 {
            g.data_mut()[i] = 40000;
        }
        let t = otsu_threshold(&g);
        assert!(t > 8000 && t <= 40000);
        assert_eq!(threshold(&g, t).popcount(), 300);
        assert_eq!(threshold(&g, 24000).popcount(), 300);
    }
}
