//! File formats: FASTA sequences, feature tables (CSV and `.vgfb`), label
//! files and train/test splits.

pub mod binfmt;
pub mod fasta;
pub mod features;
pub mod labels;
pub mod split;

pub use binfmt::{decode_feature_bin, encode_feature_bin, read_feature_bin, write_feature_bin};
pub use fasta::{parse_fasta, read_fasta_file, write_fasta, SequenceRecord};
pub use features::{
    load_feature_csv, load_features, read_feature_csv, save_feature_csv, save_features,
    write_feature_csv, FeatureTable,
};
pub use labels::{
    load_label_map, load_sequence_labels, save_label_map, save_sequence_labels, LabelMap,
    SequenceLabels,
};
pub use split::{load_split, save_split, SplitSpec};
