//! Implicit boundary detection from overlapping patch predictions, plus the
//! explicit boundary labels and ignore mask used to train explicit models.
//!
//! A patch is identified by its centre `c` and covers
//! `[c - size/2, c - size/2 + size)` on every axis, clipped to the volume.
//! For an unclipped patch the centre is the patch origin plus `size/2`
//! rounded down, the voxel whose label the patch mask is defined by.

mod explicit;
mod predictors;

pub use explicit::{boundary_image, explicit_boundary_labels, gaussian_kernel, ignore_mask};
pub use predictors::{OraclePredictor, RegionGrowPredictor, TrainableStubPredictor};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SvlError};
use crate::volume::{BoundingBox, Gray, Labels, Mask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchSpec {
    pub size: usize,
    pub train_stride: usize,
    pub inference_stride: usize,
}

impl Default for PatchSpec {
    fn default() -> Self {
        PatchSpec {
            size: 16,
            train_stride: 8,
            inference_stride: 4,
        }
    }
}

impl PatchSpec {
    pub fn validate(&self) -> Result<()> {
        if self.size < 4 {
            return Err(SvlError::Config(format!("patch size {} < 4", self.size)));
        }
        for s in [self.train_stride, self.inference_stride] {
            if s == 0 || s > self.size {
                return Err(SvlError::Config(format!(
                    "stride {s} outside [1, {}]",
                    self.size
                )));
            }
        }
        Ok(())
    }

    /// Voxel box of the patch centred at `c`, clipped to `dims`.
    pub fn patch_box(&self, c: [usize; 3], dims: [usize; 3]) -> BoundingBox {
        let half = self.size / 2;
        let mut lo = [0; 3];
        let mut hi = [0; 3];
        for a in 0..3 {
            lo[a] = c[a].saturating_sub(half);
            hi[a] = (c[a] + self.size - half).min(dims[a]) - 1;
        }
        BoundingBox { lo, hi }
    }
}

/// Where a patch sits in the volume.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchLocation {
    pub bbox: BoundingBox,
    pub center: [usize; 3],
}

impl PatchLocation {
    /// Patch-local coordinates of the centre.
    pub fn local_center(&self) -> [usize; 3] {
        [
            self.center[0] - self.bbox.lo[0],
            self.center[1] - self.bbox.lo[1],
            self.center[2] - self.bbox.lo[2],
        ]
    }
}

/// Maps a grayscale patch to the mask of the particle containing its centre.
pub trait PatchPredictor: Sync {
    fn predict(&self, patch: &Gray, location: &PatchLocation) -> Result<Mask>;
}

fn grid(dims: [usize; 3], stride: usize) -> impl Iterator<Item = [usize; 3]> {
    let (nx, ny, nz) = (dims[0].div_ceil(stride), dims[1].div_ceil(stride), dims[2].div_ceil(stride));
    (0..nz).flat_map(move |z| {
        (0..ny).flat_map(move |y| (0..nx).map(move |x| [x * stride, y * stride, z * stride]))
    })
}

/// Training patches: centres on the training-stride grid with a nonzero
/// label; the mask is 1 exactly on voxels carrying the centre's label.
pub fn extract_training_patches(
    u: &Gray,
    s: &Labels,
    spec: &PatchSpec,
) -> Result<Vec<(Gray, Mask, PatchLocation)>> {
    u.same_dims(s)?;
    spec.validate()?;
    let dims = u.dims();
    Ok(grid(dims, spec.train_stride)
        .filter_map(|c| {
            let l = s.get(c);
            if l == 0 {
                return None;
            }
            let bbox = spec.patch_box(c, dims);
            let m = s.extract(&bbox).map(|v| v == l);
            Some((u.extract(&bbox), m, PatchLocation { bbox, center: c }))
        })
        .collect())
}

/// Voxels whose forward difference along some axis is nonzero, marking both
/// voxels of each disagreeing in-patch pair.
pub fn patch_boundary(m: &Mask) -> Mask {
    let d = m.dims();
    let mut out = Mask::new(d, false);
    let strides = [1, d[0], d[0] * d[1]];
    for i in 0..m.len() {
        let c = m.coords(i);
        for a in 0..3 {
            if c[a] + 1 < d[a] {
                let j = i + strides[a];
                if m.data()[i] != m.data()[j] {
                    out.data_mut()[i] = true;
                    out.data_mut()[j] = true;
                }
            }
        }
    }
    out
}

/// Patch centres admitted for inference on `positive`.
///
/// Every positive inference-grid point is a centre. In addition, each
/// stride cell `[k*stride, (k+1)*stride)` containing a positive voxel
/// contributes its first positive voxel in scan order, so thin regions
/// between grid points are still seen.
pub fn inference_centers(positive: &Mask, stride: usize) -> Vec<[usize; 3]> {
    let dims = positive.dims();
    let mut centers = Vec::new();
    for g in grid(dims, stride) {
        let hi = [
            (g[0] + stride).min(dims[0]),
            (g[1] + stride).min(dims[1]),
            (g[2] + stride).min(dims[2]),
        ];
        let first = (g[2]..hi[2])
            .flat_map(|z| (g[1]..hi[1]).flat_map(move |y| (g[0]..hi[0]).map(move |x| [x, y, z])))
            .find(|&p| positive.get(p));
        if let Some(p) = first {
            if positive.get(g) && p != g {
                centers.push(g);
            }
            centers.push(p);
        }
    }
    centers
}

/// Boundary map and the number of predictor invocations.
#[derive(Debug, Clone)]
pub struct BoundaryPrediction {
    pub boundary: Mask,
    pub predictor_calls: usize,
}

/// Unions the boundaries of patch predictions centred on positive voxels and
/// restricts the result to `positive`.
pub fn predict_boundaries(
    u: &Gray,
    positive: &Mask,
    predictor: &dyn PatchPredictor,
    spec: &PatchSpec,
) -> Result<BoundaryPrediction> {
    u.same_dims(positive)?;
    spec.validate()?;
    let dims = u.dims();
    let centers = inference_centers(positive, spec.inference_stride);
    let pieces: Vec<Vec<usize>> = centers
        .par_iter()
        .map(|&c| {
            let bbox = spec.patch_box(c, dims);
            let location = PatchLocation { bbox, center: c };
            let patch = u.extract(&bbox);
            let m = predictor.predict(&patch, &location)?;
            if m.dims() != patch.dims() {
                return Err(SvlError::PredictorOutput {
                    expected: patch.dims(),
                    got: m.dims(),
                });
            }
            let b = patch_boundary(&m);
            Ok(b
                .iter_set()
                .map(|p| u.index([p[0] + bbox.lo[0], p[1] + bbox.lo[1], p[2] + bbox.lo[2]]))
                .collect())
        })
        .collect::<Result<_>>()?;
    let mut boundary = Mask::new(dims, false);
    for idx in pieces.into_iter().flatten() {
        if positive.data()[idx] {
            boundary.data_mut()[idx] = true;
        }
    }
    Ok(BoundaryPrediction {
        boundary,
        predictor_calls: centers.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_blocks() -> Labels {
        let mut l = Labels::new([20, 10, 10], 0);
        for z in 2..8 {
            for y in 2..8 {
                for x in 2..18 {
                    l.set([x, y, z], if x < 10 { 1 } else { 2 });
                }
            }
        }
        l
    }

    #[test]
    fn patch_spec_defaults_and_validation() {
        let p = PatchSpec::default();
        assert_eq!((p.size, p.train_stride, p.inference_stride), (16, 8, 4));
        assert!(p.validate().is_ok());
        assert!(PatchSpec { size: 3, ..p }.validate().is_err());
        assert!(PatchSpec { inference_stride: 17, ..p }.validate().is_err());
        let b = p.patch_box([0, 5, 30], [32, 32, 32]);
        assert_eq!(b.lo, [0, 0, 22]);
        assert_eq!(b.hi, [7, 12, 31]);
    }

    #[test]
    fn training_patches() {
        let l = two_blocks();
        let u = Gray::new(l.dims(), 0);
        let spec = PatchSpec {
            train_stride: 4,
            ..PatchSpec::default()
        };
        assert!(extract_training_patches(&u, &Labels::new(l.dims(), 0), &spec)
            .unwrap()
            .is_empty());
        let patches = extract_training_patches(&u, &l, &spec).unwrap();
        assert_eq!(patches.len(), 4);
        for (_, m, loc) in &patches {
            let label = l.get(loc.center);
            let expect = l.extract(&loc.bbox).map(|v| v == label);
            assert_eq!(m, &expect);
        }
    }

    #[test]
    fn plane_boundary_is_two_layers() {
        let mut m = Mask::new([6, 4, 4], false);
        for z in 0..4 {
            for y in 0..4 {
                for x in 0..3 {
                    m.set([x, y, z], true);
                }
            }
        }
        let b = patch_boundary(&m);
        assert_eq!(b.popcount(), 32);
        assert!(b.get([2, 1, 1]) && b.get([3, 1, 1]) && !b.get([1, 1, 1]));
        assert_eq!(patch_boundary(&Mask::new([4, 4, 4], true)).popcount(), 0);
    }

    #[test]
    fn empty_positive_mask_calls_nothing() {
        struct Panics;
        impl PatchPredictor for Panics {
            fn predict(&self, _: &Gray, _: &PatchLocation) -> Result<Mask> {
                panic!("must not be called")
            }
        }
        let u = Gray::new([12, 12, 12], 0);
        let r = predict_boundaries(&u, &Mask::new([12, 12, 12], false), &Panics, &PatchSpec::default()).unwrap();
        assert_eq!(r.predictor_calls, 0);
        assert_eq!(r.boundary.popcount(), 0);
    }

    #[test]
    fn wrong_output_dims_rejected() {
        struct Tiny;
        impl PatchPredictor for Tiny {
            fn predict(&self, _: &Gray, _: &PatchLocation) -> Result<Mask> {
                Ok(Mask::new([1, 1, 1], true))
            }
        }
        let u = Gray::new([12, 12, 12], 0);
        let r = predict_boundaries(&u, &Mask::new([12, 12, 12], true), &Tiny, &PatchSpec::default());
        assert!(matches!(r, Err(SvlError::PredictorOutput { .. })));
    }

    #[test]
    fn oracle_splits_touching_blocks() {
        let l = two_blocks();
        let m = l.foreground();
        let u = Gray::new(l.dims(), 0);
        let oracle = OraclePredictor::new(l.clone());
        let r = predict_boundaries(&u, &m, &oracle, &PatchSpec::default()).unwrap();
        let sep = crate::separation::separate(&m, &r.boundary, 1, Default::default()).unwrap();
        assert_eq!(sep.max_label(), 2);
        assert_eq!(sep.get([2, 2, 2]), sep.get([9, 7, 7]));
        assert_ne!(sep.get([9, 2, 2]), sep.get([10, 2, 2]));
    }

    #[test]
    fn centers_cover_every_positive_cell() {
        let mut p = Mask::new([9, 9, 9], false);
        p.set([5, 6, 7], true);
        assert_eq!(inference_centers(&p, 4), vec![[5, 6, 7]]);
        p.set([4, 4, 4], true);
        assert_eq!(inference_centers(&p, 4), vec![[4, 4, 4]]);
    }
}
