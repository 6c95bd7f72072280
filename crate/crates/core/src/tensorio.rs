//! MMTF tensor files and paired-embedding datasets on disk.
//!
//! MMTF layout (all integers little-endian):
//!
//! | offset | size | field                         |
//! |--------|------|-------------------------------|
//! | 0      | 4    | magic `b"MMTF"`               |
//! | 4      | 2    | version, `u16` = 1            |
//! | 6      | 1    | dtype, `u8` = 2 (`f64`)       |
//! | 7      | 1    | ndim, `u8` = 2                |
//! | 8      | 8    | rows, `u64`                   |
//! | 16     | 8    | cols, `u64`                   |
//! | 24     | 8·rows·cols | payload, row-major `f64` |
//!
//! A dataset directory holds `img.mmtf` and `txt.mmtf`, optionally
//! `eval_img.mmtf`, `eval_txt.mmtf` and `samples.jsonl`.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const MAGIC: [u8; 4] = *b"MMTF";
pub const VERSION: u16 = 1;
pub const DTYPE_F64: u8 = 2;
pub const HEADER_LEN: usize = 24;

pub const IMG_FILE: &str = "img.mmtf";
pub const TXT_FILE: &str = "txt.mmtf";
pub const EVAL_IMG_FILE: &str = "eval_img.mmtf";
pub const EVAL_TXT_FILE: &str = "eval_txt.mmtf";
pub const SAMPLES_FILE: &str = "samples.jsonl";

pub fn encode_tensor(m: &Matrix) -> Result<Vec<u8>> {
    if m.rows() == 0 || m.cols() == 0 {
        return Err(Error::Dimension("cannot write a zero-dimension matrix".into()));
    }
    if let Some((index, &value)) = m.data().iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFinite { index, value });
    }
    let mut buf = Vec::with_capacity(HEADER_LEN + 8 * m.data().len());
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.push(DTYPE_F64);
    buf.push(2);
    buf.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    buf.extend_from_slice(&(m.cols() as u64).to_le_bytes());
    for v in m.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    Ok(buf)
}

pub fn decode_tensor(bytes: &[u8]) -> Result<Matrix> {
    if bytes.len() < 4 || bytes[..4] != MAGIC {
        return Err(Error::Format("bad magic, expected \"MMTF\"".into()));
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    if bytes[6] != DTYPE_F64 {
        return Err(Error::Format(format!("unsupported dtype code {}", bytes[6])));
    }
    if bytes[7] != 2 {
        return Err(Error::Format(format!("unsupported ndim {}", bytes[7])));
    }
    let rows = read_u64(&bytes[8..16]);
    let cols = read_u64(&bytes[16..24]);
    if rows == 0 || cols == 0 {
        return Err(Error::Dimension(format!(
            "zero-dimension tensor {rows}x{cols}"
        )));
    }
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .and_then(|n| usize::try_from(n).ok())
        .ok_or_else(|| Error::Dimension(format!("tensor {rows}x{cols} too large")))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() < expected {
        return Err(Error::Truncated {
            expected,
            found: payload.len(),
        });
    }
    if payload.len() > expected {
        return Err(Error::Format(format!(
            "{} trailing bytes after payload",
            payload.len() - expected
        )));
    }
    let data: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Matrix::new(rows as usize, cols as usize, data)
}

fn read_u64(b: &[u8]) -> u64 {
    u64::from_le_bytes(b.try_into().expect("8-byte slice"))
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Matrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_tensor(&bytes)
}

pub fn write_tensor(m: &Matrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_tensor(m)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// One line of `samples.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: i64,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairedEmbeddingDataset {
    pub img: Matrix,
    pub txt: Matrix,
    pub eval_img: Option<Matrix>,
    pub eval_txt: Option<Matrix>,
    pub sample_ids: Vec<i64>,
    pub texts: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub m: usize,
    pub d: usize,
    pub d_eval: Option<usize>,
    pub has_texts: bool,
}

impl PairedEmbeddingDataset {
    /// Validates and assembles a dataset; `sample_ids` default to `0..M`.
    pub fn new(
        img: Matrix,
        txt: Matrix,
        eval: Option<(Matrix, Matrix)>,
        samples: Option<Vec<SampleRecord>>,
    ) -> Result<Self> {
        if img.rows() != txt.rows() {
            return Err(Error::Alignment(format!(
                "image embeddings have {} rows but text embeddings have {}",
                img.rows(),
                txt.rows()
            )));
        }
        if img.cols() != txt.cols() {
            return Err(Error::Alignment(format!(
                "image width {} differs from text width {}",
                img.cols(),
                txt.cols()
            )));
        }
        let m = img.rows();
        let (eval_img, eval_txt) = match eval {
            Some((ei, et)) => {
                if ei.rows() != m || et.rows() != m {
                    return Err(Error::Alignment(format!(
                        "evaluation embeddings have {}/{} rows, expected {m}",
                        ei.rows(),
                        et.rows()
                    )));
                }
                if ei.cols() != et.cols() {
                    return Err(Error::Alignment(format!(
                        "evaluation widths differ: {} vs {}",
                        ei.cols(),
                        et.cols()
                    )));
                }
                (Some(ei), Some(et))
            }
            None => (None, None),
        };
        let (sample_ids, texts) = match samples {
            None => ((0..m as i64).collect(), None),
            Some(mut records) => {
                if records.len() != m {
                    return Err(Error::Metadata(format!(
                        "{} sample records for {m} embedding rows",
                        records.len()
                    )));
                }
                let mut seen = HashSet::with_capacity(m);
                if let Some(dup) = records.iter().find(|r| !seen.insert(r.id)) {
                    return Err(Error::Metadata(format!("duplicate sample id {}", dup.id)));
                }
                // Row r pairs with the r-th smallest id.
                records.sort_by_key(|r| r.id);
                let ids = records.iter().map(|r| r.id).collect();
                let texts = records.into_iter().map(|r| r.text).collect();
                (ids, Some(texts))
            }
        };
        Ok(Self {
            img,
            txt,
            eval_img,
            eval_txt,
            sample_ids,
            texts,
        })
    }

    pub fn len(&self) -> usize {
        self.img.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.img.cols()
    }

    pub fn summary(&self) -> DatasetSummary {
        DatasetSummary {
            m: self.len(),
            d: self.dim(),
            d_eval: self.eval_img.as_ref().map(Matrix::cols),
            has_texts: self.texts.is_some(),
        }
    }

    /// Keeps only the listed rows in every aligned field.
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        let pick = |m: &Matrix| m.select_rows(rows);
        Ok(Self {
            img: pick(&self.img)?,
            txt: pick(&self.txt)?,
            eval_img: self.eval_img.as_ref().map(pick).transpose()?,
            eval_txt: self.eval_txt.as_ref().map(pick).transpose()?,
            sample_ids: rows.iter().map(|&r| self.sample_ids[r]).collect(),
            texts: self
                .texts
                .as_ref()
                .map(|t| rows.iter().map(|&r| t[r].clone()).collect()),
        })
    }
}

pub fn read_samples_jsonl(path: impl AsRef<Path>) -> Result<Vec<SampleRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            serde_json::from_str::<SampleRecord>(line).map_err(|e| {
                Error::Metadata(format!("{}: line {}: {e}", path.display(), i + 1))
            })
        })
        .collect()
}

pub fn write_samples_jsonl(records: &[SampleRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_paired_dataset(dir: impl AsRef<Path>) -> Result<PairedEmbeddingDataset> {
    let dir = dir.as_ref();
    let img = read_tensor(dir.join(IMG_FILE))?;
    let txt = read_tensor(dir.join(TXT_FILE))?;
    let ei_path = dir.join(EVAL_IMG_FILE);
    let et_path = dir.join(EVAL_TXT_FILE);
    let eval = match (ei_path.exists(), et_path.exists()) {
        (true, true) => Some((read_tensor(&ei_path)?, read_tensor(&et_path)?)),
        (false, false) => None,
        _ => {
            return Err(Error::Alignment(
                "eval_img.mmtf and eval_txt.mmtf must be present together".into(),
            ))
        }
    };
    let samples_path = dir.join(SAMPLES_FILE);
    let samples = if samples_path.exists() {
        Some(read_samples_jsonl(&samples_path)?)
    } else {
        None
    };
    PairedEmbeddingDataset::new(img, txt, eval, samples)
}

pub fn save_paired_dataset(data: &PairedEmbeddingDataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_tensor(&data.img, dir.join(IMG_FILE))?;
    write_tensor(&data.txt, dir.join(TXT_FILE))?;
    if let (Some(ei), Some(et)) = (&data.eval_img, &data.eval_txt) {
        write_tensor(ei, dir.join(EVAL_IMG_FILE))?;
        write_tensor(et, dir.join(EVAL_TXT_FILE))?;
    }
    if let Some(texts) = &data.texts {
        let records: Vec<SampleRecord> = data
            .sample_ids
            .iter()
            .zip(texts)
            .map(|(&id, t)| SampleRecord {
                id,
                text: t.clone(),
            })
            .collect();
        write_samples_jsonl(&records, dir.join(SAMPLES_FILE))?;
    }
    Ok(())
}

/// Writes pretty JSON followed by a newline.
pub fn write_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&s)?)
}
