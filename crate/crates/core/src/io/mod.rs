//! Model files, PGM/PPM images and dataset manifests.

mod manifest;
mod model_file;
mod pnm;

pub use manifest::{load_manifest, load_samples, parse_manifest, DatasetManifest, ManifestEntry};
pub use model_file::{
    decode_model, encode_model, expected_file_size, load_model, save_model, FORMAT_VERSION, MAGIC,
};
pub use pnm::{
    decode_pnm, encode_pnm, load_image, load_mask, overlay, save_image, save_mask, save_overlay, OVERLAY_FN,
    OVERLAY_FP, OVERLAY_TP,
};
