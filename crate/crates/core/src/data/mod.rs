//! Synthetic tasks with planted dependences, covariate-shift operators, patch
//! extraction and on-disk formats.

mod cache;
mod corrupt;
mod idx;
mod patches;
mod planted;

pub use cache::{decode_arrays, decode_dataset, encode_arrays, load_dataset, save_dataset, DatasetDescriptor};
pub use corrupt::{corrupt, mean_feature_std, ComponentEnd, CorruptionSpec, BRIGHTNESS_SHIFT_STDS, FOG_SHIFT_STDS};
pub use idx::{idx_dataset, load_idx, parse_idx, IdxArray, Standardizer};
pub use patches::{extract_patches, image_geometry, select_positions, translation_safe_positions};
pub use planted::{gen_planted, DependenceSpec, GeneratorConfig, LabelRule, PlantedTask};

#[cfg(test)]
mod tests;
