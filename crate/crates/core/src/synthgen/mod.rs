//! Synthetic particle packs, reshuffled rescans and segmentation corruption.

mod corrupt;
mod pack;
mod shapes;

pub use corrupt::{corrupt_labels, touching_pairs, CorruptionLedger, CorruptionSpec};
pub use pack::{
    generate_pack, render_scans, GroundTruthPack, PackConfig, ParticleEntry, Placement, RleMask,
    RotationMode, ScanLedger, BACKGROUND_INTENSITY, FOREGROUND_INTENSITY,
};
pub use shapes::permute_axis_aligned;
