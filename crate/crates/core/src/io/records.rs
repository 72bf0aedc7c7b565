//! The `PJR1` record file.
//!
//! All integers are little-endian; all matrices are row-major `f32`
//! natural-log probabilities (or raw logits).
//!
//! ```text
//! header
//!   magic          [u8; 4]  "PJR1"
//!   version        u16      1
//!   flags          u16      bit 0: logits channel present
//!                           bit 1: syntactic distance present
//!                           bit 2: rows truncated to top-K
//!   vocab_size     u32      V
//!   top_k          u32      K when bit 2 is set, else 0
//!   record_count   u64
//!   model_label    str      (u32 byte length + UTF-8)
//! record (repeated record_count times)
//!   example_id     str
//!   scheme         u8       0 random_pairs, 1 contiguous_pairs, 2 synthetic
//!   pos_a, pos_b   u32, u32
//!   gold_a, gold_b u32, u32
//!   syntactic      u32      only when bit 1 is set
//!   sentence       u32 length + length × u32 token ids (0xFFFFFFFF = mask)
//!   marg_a         V × f32
//!   marg_b         V × f32
//!   cond_a_given_b table
//!   cond_b_given_a table
//! table, dense (bit 2 clear)
//!   log_probs      V × V f32, row = context token, column = target token
//!   logits         V × V f32, only when bit 0 is set
//! table, top-K (bit 2 set)
//!   per row: K × (u32 target index, f32 log-prob), by descending probability
//!   logits         V × K f32 aligned with the stored indices, only when bit 0 is set
//! ```
//!
//! Top-K rows are renormalized over the kept entries when written. On load,
//! dropped entries sit at the probability floor, and dropped logits are set
//! to `logsumexp(kept logits) + log(1e-12)` so that they carry the same
//! relative weight as the floored probabilities.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::binary::{len_u32, LeReader, LeWriter};
use crate::numeric::{log_normalize_slice, logsumexp, SquareTable, PROB_FLOOR};
use crate::types::{
    ConditionalTable, MarginalVector, PairRecord, Position, RowCheck, Scheme,
};

pub const RECORD_MAGIC: [u8; 4] = *b"PJR1";
pub const RECORD_VERSION: u16 = 1;

const FLAG_LOGITS: u16 = 1;
const FLAG_SYNTACTIC: u16 = 1 << 1;
const FLAG_TOP_K: u16 = 1 << 2;

/// Row sums of stored `f32` tables must be within this of one.
pub const FILE_ROW_SUM_TOL: f64 = 1e-4;

const MAX_STRING: usize = 1 << 20;
const MAX_SENTENCE: usize = 1 << 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Validation {
    /// Reject any row whose mass is off by more than [`FILE_ROW_SUM_TOL`].
    Strict,
    /// Renormalize such rows and count them.
    Lenient,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RecordHeader {
    pub vocab_size: u32,
    pub has_logits: bool,
    pub has_syntactic: bool,
    pub top_k: Option<u32>,
    pub model_label: String,
}

impl RecordHeader {
    fn flags(&self) -> u16 {
        let mut f = 0;
        if self.has_logits {
            f |= FLAG_LOGITS;
        }
        if self.has_syntactic {
            f |= FLAG_SYNTACTIC;
        }
        if self.top_k.is_some() {
            f |= FLAG_TOP_K;
        }
        f
    }

    /// Entries stored per row.
    pub fn row_width(&self) -> usize {
        self.top_k.unwrap_or(self.vocab_size) as usize
    }
}

/// A conditional table exactly as stored.
#[derive(Clone, Debug, PartialEq)]
pub struct RawTable {
    /// Kept target indices per row, `V × K`, present only for top-K files.
    pub indices: Option<Vec<u32>>,
    /// `V × width` log-probabilities.
    pub log_probs: Vec<f32>,
    /// `V × width` logits aligned with `log_probs`.
    pub logits: Option<Vec<f32>>,
}

/// A record exactly as stored, `f32` payload untouched.
#[derive(Clone, Debug, PartialEq)]
pub struct RawRecord {
    pub example_id: String,
    pub scheme: Scheme,
    pub pos_a: u32,
    pub pos_b: u32,
    pub gold_a: u32,
    pub gold_b: u32,
    pub syntactic_distance: Option<u32>,
    pub sentence: Vec<u32>,
    pub marg_a: Vec<f32>,
    pub marg_b: Vec<f32>,
    pub cond_a_given_b: RawTable,
    pub cond_b_given_a: RawTable,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecordFile {
    pub header: RecordHeader,
    pub records: Vec<RawRecord>,
}

/// What decoding had to repair.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DecodeReport {
    pub rows_renormalized: usize,
    pub floored_entries: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodeOptions {
    pub model_label: String,
    /// Keep only the K most probable entries of each conditional row.
    pub top_k: Option<usize>,
}

impl Default for EncodeOptions {
    fn default() -> Self {
        EncodeOptions {
            model_label: "unknown".into(),
            top_k: None,
        }
    }
}

fn to_f32(xs: &[f64]) -> Vec<f32> {
    xs.iter().map(|&x| x as f32).collect()
}

fn encode_table(table: &ConditionalTable, top_k: Option<usize>, with_logits: bool) -> RawTable {
    let n = table.vocab_size();
    let lp = table.log_probs();
    match top_k {
        None => RawTable {
            indices: None,
            log_probs: to_f32(lp.as_slice()),
            logits: with_logits.then(|| to_f32(table.logits().unwrap().as_slice())),
        },
        Some(k) => {
            let mut indices = Vec::with_capacity(n * k);
            let mut values = Vec::with_capacity(n * k);
            let mut logits = with_logits.then(|| Vec::with_capacity(n * k));
            for ctx in 0..n {
                let row = lp.row(ctx);
                let mut order: Vec<usize> = (0..n).collect();
                order.sort_by(|&x, &y| row[y].total_cmp(&row[x]).then(x.cmp(&y)));
                order.truncate(k);
                let mut kept: Vec<f64> = order.iter().map(|&t| row[t]).collect();
                log_normalize_slice(&mut kept);
                indices.extend(order.iter().map(|&t| t as u32));
                values.extend(kept.iter().map(|&x| x as f32));
                if let Some(l) = logits.as_mut() {
                    let src = table.logits().unwrap().row(ctx);
                    l.extend(order.iter().map(|&t| src[t] as f32));
                }
            }
            RawTable {
                indices: Some(indices),
                log_probs: values,
                logits,
            }
        }
    }
}

impl RecordFile {
    /// Converts in-memory records to their stored form. All records must
    /// share the vocabulary size, the logits channel and the presence of a
    /// syntactic distance.
    pub fn encode(records: &[PairRecord], options: &EncodeOptions) -> Result<RecordFile> {
        let vocab_size = records.first().map_or(2, |r| r.vocab_size());
        let has_logits = records.first().is_some_and(|r| {
            r.cond_a_given_b.logits().is_some() && r.cond_b_given_a.logits().is_some()
        });
        let has_syntactic = records
            .first()
            .is_some_and(|r| r.syntactic_distance.is_some());
        if let Some(k) = options.top_k {
            if k == 0 || k > vocab_size {
                return Err(Error::InvalidConfig(format!(
                    "top-k {k} must be in 1..={vocab_size}"
                )));
            }
        }
        let mut raw = Vec::with_capacity(records.len());
        for r in records {
            r.validate()?;
            let mismatch = |reason: &str| Error::InvalidRecord {
                example_id: r.example_id.clone(),
                reason: reason.to_string(),
            };
            if r.vocab_size() != vocab_size {
                return Err(mismatch("vocabulary size differs from the first record"));
            }
            let logits = r.cond_a_given_b.logits().is_some() && r.cond_b_given_a.logits().is_some();
            if logits != has_logits {
                return Err(mismatch("logits channel differs from the first record"));
            }
            if r.syntactic_distance.is_some() != has_syntactic {
                return Err(mismatch("syntactic distance presence differs from the first record"));
            }
            raw.push(RawRecord {
                example_id: r.example_id.clone(),
                scheme: r.scheme,
                pos_a: len_u32(r.pos_a)?,
                pos_b: len_u32(r.pos_b)?,
                gold_a: len_u32(r.gold_a)?,
                gold_b: len_u32(r.gold_b)?,
                syntactic_distance: r.syntactic_distance,
                sentence: r.sentence.clone(),
                marg_a: to_f32(r.marg_a.log_probs()),
                marg_b: to_f32(r.marg_b.log_probs()),
                cond_a_given_b: encode_table(&r.cond_a_given_b, options.top_k, has_logits),
                cond_b_given_a: encode_table(&r.cond_b_given_a, options.top_k, has_logits),
            });
        }
        Ok(RecordFile {
            header: RecordHeader {
                vocab_size: len_u32(vocab_size)?,
                has_logits,
                has_syntactic,
                top_k: options.top_k.map(len_u32).transpose()?,
                model_label: options.model_label.clone(),
            },
            records: raw,
        })
    }

    pub fn write_to<W: Write>(&self, out: W) -> Result<W> {
        let h = &self.header;
        let v = h.vocab_size as usize;
        let width = h.row_width();
        let mut w = LeWriter::new(out);
        w.bytes(&RECORD_MAGIC)?;
        w.u16(RECORD_VERSION)?;
        w.u16(h.flags())?;
        w.u32(h.vocab_size)?;
        w.u32(h.top_k.unwrap_or(0))?;
        w.u64(self.records.len() as u64)?;
        w.str(&h.model_label)?;
        for r in &self.records {
            let bad = |reason: String| Error::InvalidRecord {
                example_id: r.example_id.clone(),
                reason,
            };
            if r.marg_a.len() != v || r.marg_b.len() != v {
                return Err(bad("marginal length differs from header".into()));
            }
            if r.syntactic_distance.is_some() != h.has_syntactic {
                return Err(bad("syntactic distance does not match header flag".into()));
            }
            w.str(&r.example_id)?;
            w.u8(r.scheme.code())?;
            for x in [r.pos_a, r.pos_b, r.gold_a, r.gold_b] {
                w.u32(x)?;
            }
            if let Some(d) = r.syntactic_distance {
                w.u32(d)?;
            }
            w.u32(len_u32(r.sentence.len())?)?;
            w.u32s(&r.sentence)?;
            w.f32s(&r.marg_a)?;
            w.f32s(&r.marg_b)?;
            for table in [&r.cond_a_given_b, &r.cond_b_given_a] {
                if table.log_probs.len() != v * width
                    || table.indices.is_some() != h.top_k.is_some()
                    || table.logits.is_some() != h.has_logits
                {
                    return Err(bad("table layout does not match header".into()));
                }
                match &table.indices {
                    None => w.f32s(&table.log_probs)?,
                    Some(idx) => {
                        if idx.len() != v * width {
                            return Err(bad("top-k index count does not match header".into()));
                        }
                        let mut buf = Vec::with_capacity(idx.len() * 8);
                        for (i, x) in idx.iter().zip(&table.log_probs) {
                            buf.extend_from_slice(&i.to_le_bytes());
                            buf.extend_from_slice(&x.to_le_bytes());
                        }
                        w.bytes(&buf)?;
                    }
                }
                if let Some(l) = &table.logits {
                    if l.len() != v * width {
                        return Err(bad("logits length does not match header".into()));
                    }
                    w.f32s(l)?;
                }
            }
        }
        Ok(w.into_inner())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.write_to(Vec::new())
    }

    pub fn read_from<R: Read>(input: R) -> Result<RecordFile> {
        let mut r = LeReader::new(input);
        let magic: [u8; 4] = r.array("magic")?;
        if magic != RECORD_MAGIC {
            return Err(Error::BadMagic {
                expected: RECORD_MAGIC,
                found: magic,
            });
        }
        let version = r.u16("version")?;
        if version != RECORD_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let flags = r.u16("flags")?;
        if flags & !(FLAG_LOGITS | FLAG_SYNTACTIC | FLAG_TOP_K) != 0 {
            return Err(Error::Format(format!("unknown flag bits {flags:#06x}")));
        }
        let vocab_size = r.u32("vocab_size")?;
        if vocab_size < 2 {
            return Err(Error::VocabTooSmall(vocab_size as usize));
        }
        let top_k_raw = r.u32("top_k")?;
        let top_k = if flags & FLAG_TOP_K != 0 {
            if top_k_raw == 0 || top_k_raw > vocab_size {
                return Err(Error::Format(format!(
                    "top_k {top_k_raw} out of range for vocabulary size {vocab_size}"
                )));
            }
            Some(top_k_raw)
        } else {
            if top_k_raw != 0 {
                return Err(Error::Format("top_k set without the top-k flag".into()));
            }
            None
        };
        let count = r.u64("record_count")?;
        let model_label = read_bounded_str(&mut r, "model_label")?;
        let header = RecordHeader {
            vocab_size,
            has_logits: flags & FLAG_LOGITS != 0,
            has_syntactic: flags & FLAG_SYNTACTIC != 0,
            top_k,
            model_label,
        };
        let v = vocab_size as usize;
        let width = header.row_width();
        let mut records = Vec::new();
        for _ in 0..count {
            let example_id = read_bounded_str(&mut r, "example_id")?;
            let scheme_code = r.u8("scheme")?;
            let scheme = Scheme::from_code(scheme_code)
                .ok_or_else(|| Error::Format(format!("unknown scheme code {scheme_code}")))?;
            let pos_a = r.u32("pos_a")?;
            let pos_b = r.u32("pos_b")?;
            let gold_a = r.u32("gold_a")?;
            let gold_b = r.u32("gold_b")?;
            let syntactic_distance = if header.has_syntactic {
                Some(r.u32("syntactic_distance")?)
            } else {
                None
            };
            let len = r.u32("sentence length")? as usize;
            if len > MAX_SENTENCE {
                return Err(Error::Format(format!("sentence length {len} too large")));
            }
            let sentence = r.u32s(len, "sentence")?;
            let marg_a = r.f32s(v, "marg_a")?;
            let marg_b = r.f32s(v, "marg_b")?;
            let mut tables = Vec::with_capacity(2);
            for _ in 0..2 {
                let (indices, log_probs) = match top_k {
                    None => (None, r.f32s(v * width, "conditional table")?),
                    Some(_) => {
                        let mut idx = Vec::with_capacity(v * width);
                        let mut vals = Vec::with_capacity(v * width);
                        for _ in 0..v * width {
                            let i = r.u32("top-k index")?;
                            if i >= vocab_size {
                                return Err(Error::Format(format!(
                                    "top-k index {i} out of range in record {example_id}"
                                )));
                            }
                            idx.push(i);
                            vals.push(f32::from_le_bytes(r.array("top-k value")?));
                        }
                        (Some(idx), vals)
                    }
                };
                let logits = if header.has_logits {
                    Some(r.f32s(v * width, "logits")?)
                } else {
                    None
                };
                tables.push(RawTable {
                    indices,
                    log_probs,
                    logits,
                });
            }
            let cond_b_given_a = tables.pop().unwrap();
            let cond_a_given_b = tables.pop().unwrap();
            records.push(RawRecord {
                example_id,
                scheme,
                pos_a,
                pos_b,
                gold_a,
                gold_b,
                syntactic_distance,
                sentence,
                marg_a,
                marg_b,
                cond_a_given_b,
                cond_b_given_a,
            });
        }
        r.expect_end()?;
        Ok(RecordFile { header, records })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<RecordFile> {
        Self::read_from(bytes)
    }

    /// Converts every record to its in-memory form, validating row sums.
    pub fn decode(&self, validation: Validation) -> Result<(Vec<PairRecord>, DecodeReport)> {
        let mut report = DecodeReport::default();
        let mut out = Vec::with_capacity(self.records.len());
        for (index, raw) in self.records.iter().enumerate() {
            out.push(self.decode_one(index, raw, validation, &mut report)?);
        }
        if report.rows_renormalized > 0 {
            log::warn!(
                "renormalized {} rows whose mass was off by more than {FILE_ROW_SUM_TOL}",
                report.rows_renormalized
            );
        }
        Ok((out, report))
    }

    fn decode_one(
        &self,
        index: usize,
        raw: &RawRecord,
        validation: Validation,
        report: &mut DecodeReport,
    ) -> Result<PairRecord> {
        let v = self.header.vocab_size as usize;
        let width = self.header.row_width();
        let mut check_row = |table: &'static str, row: usize, xs: &[f64]| -> Result<()> {
            let sum = logsumexp(xs).exp();
            if (sum - 1.0).abs() > FILE_ROW_SUM_TOL || !sum.is_finite() {
                match validation {
                    Validation::Strict => {
                        return Err(Error::RecordRowSum {
                            index,
                            example_id: raw.example_id.clone(),
                            table,
                            row,
                            sum,
                        })
                    }
                    Validation::Lenient => report.rows_renormalized += 1,
                }
            }
            Ok(())
        };

        let widen = |xs: &[f32]| -> Vec<f64> { xs.iter().map(|&x| x as f64).collect() };
        let marg_a = widen(&raw.marg_a);
        check_row("marg_a", 0, &marg_a)?;
        let marg_b = widen(&raw.marg_b);
        check_row("marg_b", 0, &marg_b)?;

        let mut expand = |name: &'static str, t: &RawTable| -> Result<(SquareTable, Option<SquareTable>)> {
            let mut lp = SquareTable::filled(v, f64::NEG_INFINITY);
            let mut logits = t.logits.as_ref().map(|_| SquareTable::filled(v, 0.0));
            for ctx in 0..v {
                let span = ctx * width..(ctx + 1) * width;
                let stored = widen(&t.log_probs[span.clone()]);
                check_row(name, ctx, &stored)?;
                match &t.indices {
                    None => {
                        lp.row_mut(ctx).copy_from_slice(&stored);
                        if let (Some(dst), Some(src)) = (logits.as_mut(), &t.logits) {
                            dst.row_mut(ctx).copy_from_slice(&widen(&src[span]));
                        }
                    }
                    Some(idx) => {
                        let kept = &idx[span.clone()];
                        for (&tgt, &x) in kept.iter().zip(&stored) {
                            lp.set(ctx, tgt as usize, x);
                        }
                        if let (Some(dst), Some(src)) = (logits.as_mut(), &t.logits) {
                            let kept_logits = widen(&src[span]);
                            let fill = logsumexp(&kept_logits) + PROB_FLOOR.ln();
                            dst.row_mut(ctx).iter_mut().for_each(|x| *x = fill);
                            for (&tgt, &x) in kept.iter().zip(&kept_logits) {
                                dst.set(ctx, tgt as usize, x);
                            }
                        }
                    }
                }
            }
            Ok((lp, logits))
        };
        let (a_lp, a_logits) = expand("cond_a_given_b", &raw.cond_a_given_b)?;
        let (b_lp, b_logits) = expand("cond_b_given_a", &raw.cond_b_given_a)?;

        let with_id = |e: Error| Error::InvalidRecord {
            example_id: raw.example_id.clone(),
            reason: e.to_string(),
        };
        let cond_a_given_b =
            ConditionalTable::with_check(Position::A, a_lp, a_logits, RowCheck::Renormalize)
                .map_err(with_id)?;
        let cond_b_given_a =
            ConditionalTable::with_check(Position::B, b_lp, b_logits, RowCheck::Renormalize)
                .map_err(with_id)?;
        let marg_a =
            MarginalVector::with_check(Position::A, marg_a, RowCheck::Renormalize).map_err(with_id)?;
        let marg_b =
            MarginalVector::with_check(Position::B, marg_b, RowCheck::Renormalize).map_err(with_id)?;

        let record = PairRecord {
            example_id: raw.example_id.clone(),
            sentence: raw.sentence.clone(),
            pos_a: raw.pos_a as usize,
            pos_b: raw.pos_b as usize,
            gold_a: raw.gold_a as usize,
            gold_b: raw.gold_b as usize,
            scheme: raw.scheme,
            cond_a_given_b,
            cond_b_given_a,
            marg_a,
            marg_b,
            syntactic_distance: raw.syntactic_distance,
        };
        record.validate()?;
        report.floored_entries += record.floor_warnings();
        Ok(record)
    }
}

fn read_bounded_str<R: Read>(r: &mut LeReader<R>, what: &str) -> Result<String> {
    let s = r.str(what)?;
    if s.len() > MAX_STRING {
        return Err(Error::Format(format!("{what} longer than {MAX_STRING} bytes")));
    }
    Ok(s)
}

pub fn write_records(path: &Path, records: &[PairRecord], options: &EncodeOptions) -> Result<()> {
    let file = RecordFile::encode(records, options)?;
    write_record_file(path, &file)
}

pub fn write_record_file(path: &Path, file: &RecordFile) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut w = file.write_to(BufWriter::new(f))?;
    w.flush()
        .map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn read_record_file(path: &Path) -> Result<RecordFile> {
    let f = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    RecordFile::read_from(BufReader::new(f))
}

pub fn read_records(path: &Path, validation: Validation) -> Result<(Vec<PairRecord>, DecodeReport)> {
    read_record_file(path)?.decode(validation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compat::gen_synthetic;

    fn record(id: &str, seed: u64, v: usize) -> PairRecord {
        let inst = gen_synthetic(v, seed, 1.0, 0.0).unwrap();
        let marg = |p: Position| {
            MarginalVector::new(p, inst.true_joint.log_marginal(p)).unwrap()
        };
        PairRecord {
            example_id: id.into(),
            sentence: vec![5, crate::types::MASK_TOKEN, 7, crate::types::MASK_TOKEN],
            pos_a: 1,
            pos_b: 3,
            gold_a: 0,
            gold_b: v - 1,
            scheme: Scheme::ContiguousPairs,
            cond_a_given_b: inst.cond_a_given_b,
            cond_b_given_a: inst.cond_b_given_a,
            marg_a: marg(Position::A),
            marg_b: marg(Position::B),
            syntactic_distance: None,
        }
    }

    #[test]
    fn empty_file_is_valid() {
        let file = RecordFile::encode(&[], &EncodeOptions::default()).unwrap();
        let bytes = file.to_bytes().unwrap();
        let back = RecordFile::from_bytes(&bytes).unwrap();
        assert!(back.records.is_empty());
        assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn single_record_round_trips() {
        let file = RecordFile::encode(&[record("r0", 3, 4)], &EncodeOptions::default()).unwrap();
        let bytes = file.to_bytes().unwrap();
        let back = RecordFile::from_bytes(&bytes).unwrap();
        assert_eq!(back, file);
        assert_eq!(back.to_bytes().unwrap(), bytes);
        let (records, report) = back.decode(Validation::Strict).unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(report.rows_renormalized, 0);
    }

    #[test]
    fn bad_row_sum_strict_vs_lenient() {
        let mut file =
            RecordFile::encode(&[record("bad", 9, 4)], &EncodeOptions::default()).unwrap();
        // Scale row 2 of the b|a table to mass 0.9.
        let shift = 0.9f32.ln();
        for x in &mut file.records[0].cond_b_given_a.log_probs[8..12] {
            *x += shift;
        }
        match file.decode(Validation::Strict) {
            Err(Error::RecordRowSum {
                index: 0,
                ref example_id,
                table: "cond_b_given_a",
                row: 2,
                sum,
            }) if example_id == "bad" => assert!((sum - 0.9).abs() < 1e-5),
            other => panic!("unexpected {other:?}"),
        }
        let (records, report) = file.decode(Validation::Lenient).unwrap();
        assert_eq!(report.rows_renormalized, 1);
        let row = records[0].cond_b_given_a.row(2);
        assert!((logsumexp(row).exp() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn structural_errors() {
        let bytes = RecordFile::encode(&[record("r", 1, 3)], &EncodeOptions::default())
            .unwrap()
            .to_bytes()
            .unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            RecordFile::from_bytes(&bad),
            Err(Error::BadMagic { .. })
        ));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(
            RecordFile::from_bytes(&bad),
            Err(Error::UnsupportedVersion(9))
        ));
        assert!(matches!(
            RecordFile::from_bytes(&bytes[..bytes.len() - 3]),
            Err(Error::Format(_))
        ));
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(RecordFile::from_bytes(&long), Err(Error::Format(_))));
        // Declared count larger than actual.
        let mut more = bytes;
        more[16] = 2;
        assert!(matches!(RecordFile::from_bytes(&more), Err(Error::Format(_))));
    }

    #[test]
    fn top_k_keeps_largest_and_floors_rest() {
        let r = record("k", 5, 6);
        let opts = EncodeOptions {
            model_label: "m".into(),
            top_k: Some(2),
        };
        let file = RecordFile::encode(std::slice::from_ref(&r), &opts).unwrap();
        let bytes = file.to_bytes().unwrap();
        assert_eq!(RecordFile::from_bytes(&bytes).unwrap().to_bytes().unwrap(), bytes);
        let (back, report) = file.decode(Validation::Strict).unwrap();
        assert!(report.floored_entries > 0);
        for ctx in 0..6 {
            let orig = r.cond_a_given_b.row(ctx);
            let mut order: Vec<usize> = (0..6).collect();
            order.sort_by(|&x, &y| orig[y].total_cmp(&orig[x]));
            let row = back[0].cond_a_given_b.row(ctx);
            for &t in &order[2..] {
                assert!((row[t] - PROB_FLOOR.ln()).abs() < 1e-9);
            }
            let kept: f64 = order[..2].iter().map(|&t| row[t].exp()).sum();
            assert!((kept - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn mixed_flags_rejected() {
        let a = record("a", 1, 3);
        let mut b = record("b", 2, 3);
        b.syntactic_distance = Some(2);
        assert!(matches!(
            RecordFile::encode(&[a, b], &EncodeOptions::default()),
            Err(Error::InvalidRecord { .. })
        ));
    }
}
