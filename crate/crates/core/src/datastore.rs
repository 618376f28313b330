//! Persistent, ordered record store.
//!
//! A dataset is a fixed-width binary row file plus a human-readable meta
//! sidecar. Ids are dense 0-based row indices, so any record can be seeked
//! in O(1) and the number of records in a closed range is `hi - lo + 1`.
//!
//! File layout (`data.mcds`, all little-endian):
//!   magic "MCDS" | version u32 | n u64 | d u32 | target_kind u8 | class_count u32
//! followed by `n` rows of `d + 1` f64 values, target last. Class labels are
//! stored as the f64 of the integer index.
//!
//! The store is written once at ingest time and immutable afterwards; reads
//! take `&self` and are safe from any number of threads.

use crate::error::{Error, Result};
use crate::range::IdRange;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Read, Seek, SeekFrom, Write};
use std::os::unix::fs::FileExt;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

pub const MAGIC: &[u8; 4] = b"MCDS";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: u64 = 4 + 4 + 8 + 4 + 1 + 4;

pub const DATA_FILE: &str = "data.mcds";
pub const META_FILE: &str = "data.meta";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TargetKind {
    Regression,
    Classification,
}

impl fmt::Display for TargetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TargetKind::Regression => write!(f, "regression"),
            TargetKind::Classification => write!(f, "classification"),
        }
    }
}

impl std::str::FromStr for TargetKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "regression" => Ok(TargetKind::Regression),
            "classification" => Ok(TargetKind::Classification),
            other => Err(Error::InvalidArgument(format!(
                "unknown target kind {other:?}"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub n: u64,
    pub d: u32,
    pub target_kind: TargetKind,
    /// Number of classes; 0 for regression datasets.
    pub class_count: u32,
    pub source_path: String,
}

/// One record of the base dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub id: u64,
    pub features: Vec<f64>,
    pub target: f64,
}

/// Borrowed view of one row; what the statistic builders consume.
#[derive(Clone, Copy, Debug)]
pub struct RowRef<'a> {
    pub id: u64,
    pub features: &'a [f64],
    pub target: f64,
}

/// Contiguous block of rows fetched in one read; the hot-path row container.
#[derive(Clone, Debug)]
pub struct RowBlock {
    start_id: u64,
    d: usize,
    data: Vec<f64>, // rows of (d + 1), target last
}

impl RowBlock {
    pub fn len(&self) -> usize {
        self.data.len() / (self.d + 1)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> RowRef<'_> {
        let w = self.d + 1;
        let row = &self.data[i * w..(i + 1) * w];
        RowRef {
            id: self.start_id + i as u64,
            features: &row[..self.d],
            target: row[self.d],
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = RowRef<'_>> {
        (0..self.len()).map(move |i| self.row(i))
    }

    pub fn to_records(&self) -> Vec<Record> {
        self.iter()
            .map(|r| Record {
                id: r.id,
                features: r.features.to_vec(),
                target: r.target,
            })
            .collect()
    }

    /// Size of the underlying row bytes.
    pub fn byte_len(&self) -> u64 {
        (self.data.len() * 8) as u64
    }

    pub fn from_records(records: &[Record]) -> RowBlock {
        let d = records.first().map_or(0, |r| r.features.len());
        let mut data = Vec::with_capacity(records.len() * (d + 1));
        for r in records {
            data.extend_from_slice(&r.features);
            data.push(r.target);
        }
        RowBlock {
            start_id: records.first().map_or(0, |r| r.id),
            d,
            data,
        }
    }
}

/// Read handle over one ingested dataset.
pub struct DataStore {
    file: File,
    meta: DatasetMeta,
    bytes_read: AtomicU64,
}

impl DataStore {
    pub fn open(dir: &Path) -> Result<DataStore> {
        let path = dir.join(DATA_FILE);
        let mut file = File::open(&path)?;
        let mut header = [0u8; HEADER_LEN as usize];
        file.read_exact(&mut header)
            .map_err(|_| Error::BadDataFile(format!("{}: truncated header", path.display())))?;
        if &header[0..4] != MAGIC {
            return Err(Error::BadDataFile(format!(
                "{}: bad magic",
                path.display()
            )));
        }
        let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::BadDataFile(format!(
                "{}: unsupported version {version}",
                path.display()
            )));
        }
        let n = u64::from_le_bytes(header[8..16].try_into().unwrap());
        let d = u32::from_le_bytes(header[16..20].try_into().unwrap());
        let target_kind = match header[20] {
            0 => TargetKind::Regression,
            1 => TargetKind::Classification,
            k => {
                return Err(Error::BadDataFile(format!(
                    "{}: unknown target kind tag {k}",
                    path.display()
                )))
            }
        };
        let class_count = u32::from_le_bytes(header[21..25].try_into().unwrap());
        let expected = HEADER_LEN + n * (d as u64 + 1) * 8;
        let actual = file.metadata()?.len();
        if actual != expected {
            return Err(Error::BadDataFile(format!(
                "{}: expected {expected} bytes, found {actual}",
                path.display()
            )));
        }
        let source_path = read_meta_sidecar(&dir.join(META_FILE))
            .map(|m| m.source_path)
            .unwrap_or_default();
        Ok(DataStore {
            file,
            meta: DatasetMeta {
                n,
                d,
                target_kind,
                class_count,
                source_path,
            },
            bytes_read: AtomicU64::new(0),
        })
    }

    pub fn meta(&self) -> &DatasetMeta {
        &self.meta
    }

    pub fn row_bytes(&self) -> u64 {
        (self.meta.d as u64 + 1) * 8
    }

    /// Total row bytes read through this handle so far.
    pub fn bytes_read(&self) -> u64 {
        self.bytes_read.load(Ordering::Relaxed)
    }

    fn check_bounds(&self, lo: u64, hi: u64) -> Result<()> {
        if lo > hi {
            return Err(Error::InvertedRange { lo, hi });
        }
        if self.meta.n == 0 || hi > self.meta.n - 1 {
            return Err(Error::RangeOutOfBounds {
                lo,
                hi,
                n: self.meta.n,
            });
        }
        Ok(())
    }

    /// Fetches records with `lo <= id <= hi` in ascending id order.
    pub fn fetch_range(&self, lo: u64, hi: u64) -> Result<Vec<Record>> {
        Ok(self.fetch_block(lo, hi)?.to_records())
    }

    /// Same rows as `fetch_range`, without per-record allocation.
    pub fn fetch_block(&self, lo: u64, hi: u64) -> Result<RowBlock> {
        self.check_bounds(lo, hi)?;
        let w = self.meta.d as usize + 1;
        let count = (hi - lo + 1) as usize;
        let mut bytes = vec![0u8; count * w * 8];
        let offset = HEADER_LEN + lo * (w as u64) * 8;
        self.file.read_exact_at(&mut bytes, offset)?;
        self.bytes_read
            .fetch_add(bytes.len() as u64, Ordering::Relaxed);
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(RowBlock {
            start_id: lo,
            d: self.meta.d as usize,
            data,
        })
    }

    /// Number of records in the closed range. Dense ids make this pure
    /// arithmetic; no read happens.
    pub fn count_in_range(&self, lo: u64, hi: u64) -> Result<u64> {
        if lo > hi {
            return Err(Error::InvertedRange { lo, hi });
        }
        Ok(hi - lo + 1)
    }

    pub fn fetch_id_range(&self, range: IdRange) -> Result<RowBlock> {
        self.fetch_block(range.lo, range.hi)
    }
}

/// Writer used by ingestion and the synthesizer. Single-writer: the file is
/// complete only after `finish`.
pub struct DatasetWriter {
    writer: BufWriter<File>,
    dir: PathBuf,
    d: u32,
    target_kind: TargetKind,
    class_count: u32,
    source_path: String,
    n: u64,
}

impl DatasetWriter {
    pub fn create(
        dir: &Path,
        d: u32,
        target_kind: TargetKind,
        class_count: u32,
        source_path: &str,
    ) -> Result<DatasetWriter> {
        std::fs::create_dir_all(dir)?;
        let file = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(true)
            .open(dir.join(DATA_FILE))?;
        let mut writer = BufWriter::new(file);
        write_header(&mut writer, 0, d, target_kind, class_count)?;
        Ok(DatasetWriter {
            writer,
            dir: dir.to_path_buf(),
            d,
            target_kind,
            class_count,
            source_path: source_path.to_string(),
            n: 0,
        })
    }

    pub fn write_row(&mut self, features: &[f64], target: f64) -> Result<()> {
        if features.len() != self.d as usize {
            return Err(Error::DimensionMismatch {
                expected: self.d as usize,
                got: features.len(),
            });
        }
        for v in features {
            self.writer.write_all(&v.to_le_bytes())?;
        }
        self.writer.write_all(&target.to_le_bytes())?;
        self.n += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<DatasetMeta> {
        self.writer.flush()?;
        let mut file = self.writer.into_inner().map_err(|e| e.into_error())?;
        // Rewrite the header with the final row count.
        file.seek(SeekFrom::Start(0))?;
        write_header(&mut file, self.n, self.d, self.target_kind, self.class_count)?;
        file.sync_all()?;
        let meta = DatasetMeta {
            n: self.n,
            d: self.d,
            target_kind: self.target_kind,
            class_count: self.class_count,
            source_path: self.source_path,
        };
        write_meta_sidecar(&self.dir.join(META_FILE), &meta)?;
        Ok(meta)
    }
}

fn write_header<W: Write>(
    w: &mut W,
    n: u64,
    d: u32,
    target_kind: TargetKind,
    class_count: u32,
) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&n.to_le_bytes())?;
    w.write_all(&d.to_le_bytes())?;
    w.write_all(&[match target_kind {
        TargetKind::Regression => 0u8,
        TargetKind::Classification => 1u8,
    }])?;
    w.write_all(&class_count.to_le_bytes())?;
    Ok(())
}

fn write_meta_sidecar(path: &Path, meta: &DatasetMeta) -> Result<()> {
    let text = format!(
        "n = {}\nd = {}\ntarget_kind = {}\nclass_count = {}\nsource_path = {}\n",
        meta.n, meta.d, meta.target_kind, meta.class_count, meta.source_path
    );
    std::fs::write(path, text)?;
    Ok(())
}

fn read_meta_sidecar(path: &Path) -> Result<DatasetMeta> {
    let text = std::fs::read_to_string(path)?;
    let mut n = 0u64;
    let mut d = 0u32;
    let mut target_kind = TargetKind::Regression;
    let mut class_count = 0u32;
    let mut source_path = String::new();
    for line in text.lines() {
        let Some((key, value)) = line.split_once('=') else {
            continue;
        };
        let (key, value) = (key.trim(), value.trim());
        match key {
            "n" => n = value.parse().unwrap_or(0),
            "d" => d = value.parse().unwrap_or(0),
            "target_kind" => target_kind = value.parse()?,
            "class_count" => class_count = value.parse().unwrap_or(0),
            "source_path" => source_path = value.to_string(),
            _ => {}
        }
    }
    Ok(DatasetMeta {
        n,
        d,
        target_kind,
        class_count,
        source_path,
    })
}

/// Ingests a CSV file with a header row into `dir`.
///
/// Every non-target column becomes a feature, in header order. For
/// classification targets the labels must be integer class indices; the
/// class count is `max label + 1` unless `class_count` is given.
pub fn ingest_csv(
    dir: &Path,
    csv_path: &Path,
    target_column: &str,
    kind: TargetKind,
    class_count: Option<u32>,
) -> Result<DatasetMeta> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(csv_path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) if !csv_path.exists() => {
                Error::InvalidArgument(format!("file not found: {}", csv_path.display()))
            }
            _ => Error::Csv(e),
        })?;

    let headers: Vec<String> = match reader.headers() {
        Ok(h) if !h.is_empty() => h.iter().map(str::to_string).collect(),
        _ => return Err(Error::EmptyFile(csv_path.display().to_string())),
    };
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(Error::EmptyFile(csv_path.display().to_string()));
    }
    let target_idx = headers
        .iter()
        .position(|h| h == target_column)
        .ok_or_else(|| Error::MissingColumn(target_column.to_string()))?;
    let d = (headers.len() - 1) as u32;
    if d == 0 {
        return Err(Error::InvalidArgument(
            "dataset needs at least one feature column".into(),
        ));
    }

    // First pass: parse everything so a bad cell never leaves a half-written
    // data file behind.
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut max_label = -1i64;
    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        let row = row_idx as u64;
        let mut features = Vec::with_capacity(d as usize);
        let mut target = 0.0f64;
        for (col, cell) in record.iter().enumerate() {
            let column = headers
                .get(col)
                .cloned()
                .unwrap_or_else(|| format!("col{col}"));
            let value: f64 = cell.parse().map_err(|_| Error::NonNumericCell {
                row,
                column: column.clone(),
                value: cell.to_string(),
            })?;
            if !value.is_finite() {
                return Err(Error::NonFiniteValue { row, column });
            }
            if col == target_idx {
                target = value;
            } else {
                features.push(value);
            }
        }
        if features.len() != d as usize {
            return Err(Error::DimensionMismatch {
                expected: d as usize,
                got: features.len(),
            });
        }
        if kind == TargetKind::Classification {
            if target.fract() != 0.0 || target < 0.0 {
                return Err(Error::BadClassLabel {
                    row,
                    value: target,
                    class_count: class_count.unwrap_or(0),
                });
            }
            max_label = max_label.max(target as i64);
        }
        rows.push((features, target));
    }

    let classes = match kind {
        TargetKind::Regression => 0,
        TargetKind::Classification => {
            let inferred = (max_label + 1).max(2) as u32;
            let c = class_count.unwrap_or(inferred);
            if max_label >= c as i64 {
                return Err(Error::BadClassLabel {
                    row: 0,
                    value: max_label as f64,
                    class_count: c,
                });
            }
            c
        }
    };

    let mut writer = DatasetWriter::create(
        dir,
        d,
        kind,
        classes,
        &csv_path.display().to_string(),
    )?;
    for (features, target) in &rows {
        writer.write_row(features, *target)?;
    }
    writer.finish()
}
