//! On-disk formats: CRC-checked checkpoints of named arrays, single-array
//! files for datasets and generated gestures, and key=value text.

mod binary;
mod dataset;
mod kv;
mod models;

pub use binary::{
    decode_array, encode_array, read_array, write_array, ArrayData, Checkpoint, NamedArray, ARRAY_MAGIC,
    CHECKPOINT_MAGIC, FORMAT_VERSION,
};
pub use dataset::{read_dataset, write_dataset, LoadedDataset, MANIFEST_FILE};
pub use kv::{world_config_from_kv, world_config_to_kv, KeyValues};
pub use models::{
    f2g_from_checkpoint, GESTURES, f2g_to_checkpoint, f2t_from_checkpoint, f2t_to_checkpoint, gestures_from_array,
    gestures_to_array, gestures_to_checkpoint, load_gestures, model_kind, t2g_from_checkpoint, t2g_to_checkpoint,
};
