//! The `PJJ1` joint file: one file per construction, one joint per record.
//!
//! ```text
//! magic        [u8; 4]  "PJJ1"
//! version      u16      1
//! method       u8       0 mlm, 1 mrf, 2 mrf_logit, 3 hcb, 4 ag
//! reserved     u8       0
//! vocab_size   u32
//! count        u64
//! entry (repeated count times)
//!   example_id str      (u32 byte length + UTF-8)
//!   has_pivot  u8       then pivot_a u32, pivot_b u32 (zero when absent)
//!   has_iters  u8       then iterations u32 (zero when absent)
//!   log_joint  V × V f64, row-major, row = slot a token
//! ```
//!
//! Joints are stored as `f64` so a reloaded joint keeps its normalization.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::binary::{len_u32, LeReader, LeWriter};
use crate::numeric::SquareTable;
use crate::types::{JointTable, Method};

pub const JOINT_MAGIC: [u8; 4] = *b"PJJ1";
pub const JOINT_VERSION: u16 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct JointEntry {
    pub example_id: String,
    pub joint: JointTable,
}

#[derive(Clone, Debug, PartialEq)]
pub struct JointFile {
    pub method: Method,
    pub vocab_size: usize,
    pub entries: Vec<JointEntry>,
}

impl JointFile {
    pub fn write_to<W: Write>(&self, out: W) -> Result<W> {
        let mut w = LeWriter::new(out);
        w.bytes(&JOINT_MAGIC)?;
        w.u16(JOINT_VERSION)?;
        w.u8(self.method.code())?;
        w.u8(0)?;
        w.u32(len_u32(self.vocab_size)?)?;
        w.u64(self.entries.len() as u64)?;
        for e in &self.entries {
            if e.joint.vocab_size() != self.vocab_size || e.joint.method() != self.method {
                return Err(Error::InvalidRecord {
                    example_id: e.example_id.clone(),
                    reason: "joint does not match file method or vocabulary".into(),
                });
            }
            w.str(&e.example_id)?;
            let (pa, pb) = e.joint.pivot().unwrap_or((0, 0));
            w.u8(e.joint.pivot().is_some() as u8)?;
            w.u32(len_u32(pa)?)?;
            w.u32(len_u32(pb)?)?;
            w.u8(e.joint.iterations().is_some() as u8)?;
            w.u32(len_u32(e.joint.iterations().unwrap_or(0))?)?;
            w.f64s(e.joint.log_joint().as_slice())?;
        }
        Ok(w.into_inner())
    }

    pub fn read_from<R: Read>(input: R) -> Result<JointFile> {
        let mut r = LeReader::new(input);
        let magic: [u8; 4] = r.array("magic")?;
        if magic != JOINT_MAGIC {
            return Err(Error::BadMagic {
                expected: JOINT_MAGIC,
                found: magic,
            });
        }
        let version = r.u16("version")?;
        if version != JOINT_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let code = r.u8("method")?;
        let method =
            Method::from_code(code).ok_or_else(|| Error::Format(format!("unknown method {code}")))?;
        r.u8("reserved")?;
        let vocab_size = r.u32("vocab_size")? as usize;
        let count = r.u64("count")?;
        let mut entries = Vec::new();
        for _ in 0..count {
            let example_id = r.str("example_id")?;
            let has_pivot = r.u8("pivot flag")? != 0;
            let pivot = (r.u32("pivot_a")? as usize, r.u32("pivot_b")? as usize);
            let has_iters = r.u8("iterations flag")? != 0;
            let iters = r.u32("iterations")? as usize;
            let data = r.f64s(vocab_size * vocab_size, "log_joint")?;
            let joint = JointTable::from_log_joint(method, SquareTable::from_row_major(vocab_size, data)?)
                .map_err(|e| Error::InvalidRecord {
                    example_id: example_id.clone(),
                    reason: e.to_string(),
                })?
                .with_provenance(has_pivot.then_some(pivot), has_iters.then_some(iters));
            entries.push(JointEntry { example_id, joint });
        }
        r.expect_end()?;
        Ok(JointFile {
            method,
            vocab_size,
            entries,
        })
    }
}

pub fn joint_file_name(method: Method) -> String {
    format!("joints_{}.pjj", method.as_str())
}

pub fn write_joint_file(path: &Path, file: &JointFile) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut w = file.write_to(BufWriter::new(f))?;
    w.flush().map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn read_joint_file(path: &Path) -> Result<JointFile> {
    let f = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    JointFile::read_from(BufReader::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compat::unfaithful_mrf_fixture;
    use crate::constructions::{hcb_joint, mrf_joint, Channel};

    #[test]
    fn round_trip_keeps_provenance() {
        let f = unfaithful_mrf_fixture();
        let joint = hcb_joint(&f.cond_a_given_b, &f.cond_b_given_a, (1, 0)).unwrap();
        let file = JointFile {
            method: Method::Hcb,
            vocab_size: 2,
            entries: vec![JointEntry {
                example_id: "x".into(),
                joint,
            }],
        };
        let bytes = file.write_to(Vec::new()).unwrap();
        let back = JointFile::read_from(bytes.as_slice()).unwrap();
        assert_eq!(back, file);
        assert_eq!(back.entries[0].joint.pivot(), Some((1, 0)));
        assert_eq!(back.write_to(Vec::new()).unwrap(), bytes);
    }

    #[test]
    fn method_mismatch_rejected() {
        let f = unfaithful_mrf_fixture();
        let joint = mrf_joint(&f.cond_a_given_b, &f.cond_b_given_a, Channel::Probs).unwrap();
        let file = JointFile {
            method: Method::Ag,
            vocab_size: 2,
            entries: vec![JointEntry {
                example_id: "x".into(),
                joint,
            }],
        };
        assert!(file.write_to(Vec::new()).is_err());
    }
}
