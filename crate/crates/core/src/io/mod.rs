//! On-disk formats: record files, joint files, manifests and reports.

mod binary;
pub mod joints;
pub mod manifest;
pub mod records;
pub mod report;

pub use joints::{joint_file_name, read_joint_file, write_joint_file, JointEntry, JointFile};
pub use manifest::Manifest;
pub use records::{
    read_record_file, read_records, write_record_file, write_records, DecodeReport,
    EncodeOptions, RawRecord, RawTable, RecordFile, RecordHeader, Validation,
};
