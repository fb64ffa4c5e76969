//! Volume container: a JSON sidecar header plus a raw little-endian payload.
//!
//! ```json
//! {"dims":[l,m,n],"dtype":"u32","spacing":[1,1,1],
//!  "order":"zyx-row-major","endian":"little","raw":"name.raw"}
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{DType, Gray, Labels, Mask, Volume, Voxel};
use crate::error::{Result, SvlError};

pub const ORDER: &str = "zyx-row-major";
pub const ENDIAN: &str = "little";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeHeader {
    pub dims: [usize; 3],
    pub dtype: String,
    pub spacing: [f64; 3],
    pub order: String,
    pub endian: String,
    pub raw: String,
}

/// A volume whose element type is only known after reading the header.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyVolume {
    Gray(Gray),
    Labels(Labels),
    Mask(Mask),
}

impl AnyVolume {
    pub fn dtype(&self) -> DType {
        match self {
            AnyVolume::Gray(_) => DType::U16,
            AnyVolume::Labels(_) => DType::U32,
            AnyVolume::Mask(_) => DType::U8Mask,
        }
    }

    /// Any volume viewed as labels (masks become 0/1, grayscale is widened).
    pub fn into_labels(self) -> Labels {
        match self {
            AnyVolume::Gray(g) => g.map(|v| v as u32),
            AnyVolume::Labels(l) => l,
            AnyVolume::Mask(m) => m.map(|b| b as u32),
        }
    }

    /// Nonzero voxels as a mask.
    pub fn into_mask(self) -> Mask {
        match self {
            AnyVolume::Gray(g) => g.map(|v| v != 0),
            AnyVolume::Labels(l) => l.map(|v| v != 0),
            AnyVolume::Mask(m) => m,
        }
    }
}

/// `foo`, `foo.json` and `foo.raw` all resolve to (`foo.json`, `foo.raw`).
fn container_paths(path: &Path) -> (PathBuf, PathBuf) {
    let stem = match path.extension().and_then(|e| e.to_str()) {
        Some("json") | Some("raw") => path.with_extension(""),
        _ => path.to_path_buf(),
    };
    let mut header = stem.clone().into_os_string();
    header.push(".json");
    let mut raw = stem.into_os_string();
    raw.push(".raw");
    (header.into(), raw.into())
}

fn read_header(path: &Path) -> Result<(VolumeHeader, PathBuf)> {
    let (header_path, _) = container_paths(path);
    let text = fs::read_to_string(&header_path).map_err(|e| SvlError::io(&header_path, e))?;
    let header: VolumeHeader =
        serde_json::from_str(&text).map_err(|e| SvlError::Header(e.to_string()))?;
    if header.dims.contains(&0) {
        return Err(SvlError::Header(format!("dims must be positive, got {:?}", header.dims)));
    }
    if header.order != ORDER {
        return Err(SvlError::Header(format!("unsupported order {:?}", header.order)));
    }
    if header.endian != ENDIAN {
        return Err(SvlError::Header(format!("unsupported endian {:?}", header.endian)));
    }
    let raw_path = header_path
        .parent()
        .map(|d| d.join(&header.raw))
        .unwrap_or_else(|| PathBuf::from(&header.raw));
    Ok((header, raw_path))
}

fn decode<T: Voxel>(header: &VolumeHeader, raw_path: &Path) -> Result<Volume<T>> {
    let bytes = fs::read(raw_path).map_err(|e| SvlError::io(raw_path, e))?;
    let n = header.dims[0] * header.dims[1] * header.dims[2];
    let width = T::DTYPE.width();
    if bytes.len() != n * width {
        return Err(SvlError::PayloadSize {
            expected: n * width,
            actual: bytes.len(),
        });
    }
    let data = bytes
        .chunks_exact(width)
        .map(T::read_le)
        .collect::<Result<Vec<T>>>()?;
    Ok(Volume::from_vec(header.dims, data)?.with_spacing(header.spacing))
}

/// Loads a volume of a statically known element type.
pub fn load_volume<T: Voxel>(path: impl AsRef<Path>) -> Result<Volume<T>> {
    let (header, raw_path) = read_header(path.as_ref())?;
    let dtype = DType::from_tag(&header.dtype)?;
    if dtype != T::DTYPE {
        return Err(SvlError::DtypeMismatch {
            expected: T::DTYPE.tag().into(),
            found: header.dtype,
        });
    }
    decode(&header, &raw_path)
}

/// Loads a volume of whatever element type its header declares.
pub fn load_any(path: impl AsRef<Path>) -> Result<AnyVolume> {
    let (header, raw_path) = read_header(path.as_ref())?;
    Ok(match DType::from_tag(&header.dtype)? {
        DType::U16 => AnyVolume::Gray(decode(&header, &raw_path)?),
        DType::U32 => AnyVolume::Labels(decode(&header, &raw_path)?),
        DType::U8Mask => AnyVolume::Mask(decode(&header, &raw_path)?),
    })
}

pub fn save_volume<T: Voxel>(v: &Volume<T>, path: impl AsRef<Path>) -> Result<()> {
    let (header_path, raw_path) = container_paths(path.as_ref());
    if let Some(dir) = header_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| SvlError::io(dir, e))?;
    }
    let header = VolumeHeader {
        dims: v.dims(),
        dtype: T::DTYPE.tag().to_string(),
        spacing: v.spacing(),
        order: ORDER.to_string(),
        endian: ENDIAN.to_string(),
        raw: raw_path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
    };
    let mut payload = Vec::with_capacity(v.len() * T::DTYPE.width());
    for &x in v.data() {
        x.write_le(&mut payload);
    }
    fs::write(&raw_path, payload).map_err(|e| SvlError::io(&raw_path, e))?;
    let text = serde_json::to_string_pretty(&header)?;
    fs::write(&header_path, text).map_err(|e| SvlError::io(&header_path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_raw(dir: &Path, name: &str, dims: [usize; 3], dtype: &str, payload: &[u8]) -> PathBuf {
        let header = VolumeHeader {
            dims,
            dtype: dtype.into(),
            spacing: [1.0; 3],
            order: ORDER.into(),
            endian: ENDIAN.into(),
            raw: format!("{name}.raw"),
        };
        fs::write(dir.join(format!("{name}.raw")), payload).unwrap();
        let p = dir.join(format!("{name}.json"));
        fs::write(&p, serde_json::to_string(&header).unwrap()).unwrap();
        p
    }

    #[test]
    fn all_ones_mask() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_raw(dir.path(), "ones", [2, 2, 2], "u8mask", &[1; 8]);
        let m: Mask = load_volume(&p).unwrap();
        assert_eq!(m.popcount(), 8);
    }

    #[test]
    fn short_payload_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_raw(dir.path(), "short", [3, 3, 3], "u8mask", &[0; 26]);
        let err = load_volume::<bool>(&p).unwrap_err();
        assert!(matches!(err, SvlError::PayloadSize { expected: 27, actual: 26 }));
        assert!(err.to_string().contains("payload size mismatch"));
    }

    #[test]
    fn unknown_dtype_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_raw(dir.path(), "odd", [1, 1, 1], "f32", &[0; 4]);
        assert!(matches!(load_any(&p), Err(SvlError::UnknownDtype(_))));
    }

    #[test]
    fn missing_header_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_any(dir.path().join("nope.json")),
            Err(SvlError::Io { .. })
        ));
    }

    #[test]
    fn empty_mask_is_one_zero_byte() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("tiny");
        save_volume(&Mask::new([1, 1, 1], false), &p).unwrap();
        assert_eq!(fs::read(dir.path().join("tiny.raw")).unwrap(), vec![0u8]);
    }

    #[test]
    fn wide_labels_are_not_truncated() {
        let dir = tempfile::tempdir().unwrap();
        let mut v = Labels::new([2, 1, 1], 0);
        v.set([1, 0, 0], 70000);
        let p = dir.path().join("wide.json");
        save_volume(&v, &p).unwrap();
        assert_eq!(fs::read(dir.path().join("wide.raw")).unwrap().len(), 8);
        let back: Labels = load_volume(&p).unwrap();
        assert_eq!(back.get([1, 0, 0]), 70000);
    }

    #[test]
    fn dtype_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g");
        save_volume(&Gray::new([2, 2, 2], 7), &p).unwrap();
        assert!(matches!(
            load_volume::<u32>(&p),
            Err(SvlError::DtypeMismatch { .. })
        ));
        assert!(matches!(load_any(&p).unwrap(), AnyVolume::Gray(_)));
    }

    #[test]
    fn bad_mask_byte_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_raw(dir.path(), "bad", [2, 1, 1], "u8mask", &[0, 2]);
        assert!(matches!(load_volume::<bool>(&p), Err(SvlError::MaskValue(2))));
    }
}
