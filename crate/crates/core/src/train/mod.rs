//! Dice loss, ADAM, data preparation, augmentation and the training loop.

mod adam;
mod augment;
mod data;
mod loss;
mod trainer;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use augment::{
    adjust_brightness, adjust_contrast, augment, hflip, hflip_mask, rotate, rotate_mask, vflip, vflip_mask,
    AugmentPolicy,
};
pub use data::{
    extract_patches, resize_bilinear, resize_nearest, split_dataset, stitch_patches, zscore_normalize, Patch,
    ZSCORE_EPS,
};
pub use loss::{dice_loss, DICE_SMOOTH, FOREGROUND};
pub use trainer::{fit, prepare_samples, train, write_history_csv, EpochRecord, Sample, TrainConfig};
