use crate::error::{Result, SvlError};
use crate::volume::{Labels, Mask};

/// Fixed-point scale of each 1D kernel; the three-axis product stays below
/// 2^53 so every smoothed value is an exact integer in `f64`.
const KERNEL_SCALE: f64 = 65536.0;

/// Two-voxel-thick boundary image: both voxels of every face-adjacent pair
/// with different labels (background included) are set.
pub fn boundary_image(s: &Labels) -> Mask {
    let d = s.dims();
    let mut out = Mask::new(d, false);
    let strides = [1, d[0], d[0] * d[1]];
    for i in 0..s.len() {
        let c = s.coords(i);
        for a in 0..3 {
            if c[a] + 1 < d[a] && s.data()[i] != s.data()[i + strides[a]] {
                out.data_mut()[i] = true;
                out.data_mut()[i + strides[a]] = true;
            }
        }
    }
    out
}

/// Integer 1D Gaussian weights over `[-r, r]` with `r = ceil(4 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<i64> {
    let r = (4.0 * sigma).ceil() as i64;
    let raw: Vec<f64> = (-r..=r)
        .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.iter()
        .map(|w| (w / total * KERNEL_SCALE).round() as i64)
        .collect()
}

fn convolve_axis(data: &[i64], dims: [usize; 3], axis: usize, kernel: &[i64]) -> Vec<i64> {
    let r = (kernel.len() / 2) as i64;
    let strides = [1, dims[0], dims[0] * dims[1]];
    let mut out = vec![0i64; data.len()];
    for (i, o) in out.iter_mut().enumerate() {
        let c = [i % dims[0], (i / dims[0]) % dims[1], i / (dims[0] * dims[1])];
        let mut acc = 0i64;
        for (k, &w) in kernel.iter().enumerate() {
            let q = c[axis] as i64 + k as i64 - r;
            if q < 0 || q >= dims[axis] as i64 {
                continue;
            }
            let j = (i as i64 + (q - c[axis] as i64) * strides[axis] as i64) as usize;
            acc += w * data[j];
        }
        *o = acc;
    }
    out
}

/// Boundary labels for explicit boundary training: the boundary image of
/// `s`, smoothed by an isotropic Gaussian (zero outside the volume) and
/// thresholded strictly above `threshold`.
pub fn explicit_boundary_labels(s: &Labels, sigma: f64, threshold: f64) -> Result<Mask> {
    if sigma.is_nan() || sigma <= 0.0 {
        return Err(SvlError::Config(format!("sigma must be positive, got {sigma}")));
    }
    let phi = boundary_image(s);
    let dims = s.dims();
    let kernel = gaussian_kernel(sigma);
    let norm: i64 = kernel.iter().sum();
    let cut = threshold * (norm as f64).powi(3);
    let mut v: Vec<i64> = phi.data().iter().map(|&b| b as i64).collect();
    for axis in 0..3 {
        v = convolve_axis(&v, dims, axis, &kernel);
    }
    Mask::from_vec(dims, v.iter().map(|&x| x as f64 > cut).collect())
}

/// Zero on particle voxels and their enlarged boundaries that the partial
/// labeling `s` does not account for; one elsewhere.
pub fn ignore_mask(m: &Mask, s: &Labels, sigma: f64, threshold: f64) -> Result<Mask> {
    m.same_dims(s)?;
    if let Some(i) = (0..m.len()).find(|&i| s.data()[i] != 0 && !m.data()[i]) {
        return Err(SvlError::LabelOutsideMask(s.coords(i)));
    }
    let bm = explicit_boundary_labels(&m.map(|v| v as u32), sigma, threshold)?;
    let bs = explicit_boundary_labels(s, sigma, threshold)?;
    let data = (0..m.len())
        .map(|i| {
            let wide_m = bm.data()[i] || m.data()[i];
            let wide_s = bs.data()[i] || s.data()[i] != 0;
            !(wide_m && !wide_s)
        })
        .collect();
    Mask::from_vec(m.dims(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cubes() -> Labels {
        let mut l = Labels::new([16, 8, 8], 0);
        for z in 2..6 {
            for y in 2..6 {
                for x in 2..14 {
                    l.set([x, y, z], if x < 8 { 1 } else { 2 });
                }
            }
        }
        l
    }

    #[test]
    fn kernel_is_symmetric() {
        let k = gaussian_kernel(1.0);
        assert_eq!(k.len(), 9);
        assert!(k.iter().zip(k.iter().rev()).all(|(a, b)| a == b));
        assert!((k.iter().sum::<i64>() - 65536).abs() <= 4);
    }

    #[test]
    fn no_background_contact_gives_nothing() {
        let l = Labels::new([6, 6, 6], 3);
        assert_eq!(explicit_boundary_labels(&l, 1.0, 0.25).unwrap().popcount(), 0);
    }

    #[test]
    fn interface_is_thick() {
        let b = explicit_boundary_labels(&cubes(), 1.0, 0.25).unwrap();
        for x in 6..10 {
            assert!(b.get([x, 4, 4]), "x = {x}");
        }
        assert_eq!(explicit_boundary_labels(&cubes(), 1.0, 1.0).unwrap().popcount(), 0);
    }

    #[test]
    fn ignore_mask_cases() {
        let s = cubes();
        let m = s.foreground();
        assert!(ignore_mask(&m, &s, 1.0, 0.25).unwrap().data().iter().all(|&v| v));

        let empty = Labels::new(s.dims(), 0);
        let mi = ignore_mask(&m, &empty, 1.0, 0.25).unwrap();
        let bm = explicit_boundary_labels(&m.map(|v| v as u32), 1.0, 0.25).unwrap();
        for i in 0..m.len() {
            assert_eq!(mi.data()[i], !(bm.data()[i] || m.data()[i]));
        }

        let mut outside = s.clone();
        outside.set([0, 0, 0], 4);
        assert!(matches!(
            ignore_mask(&m, &outside, 1.0, 0.25),
            Err(SvlError::LabelOutsideMask(_))
        ));
    }
}
