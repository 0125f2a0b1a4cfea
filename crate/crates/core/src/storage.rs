//! On-disk formats: scan archives, dataset manifests and results files.
//!
//! Scan archive layout (all integers `u32` LE, all reals `f32` LE):
//!
//! ```text
//! "SGV1" | N | d' | d | id_len | id (UTF-8)
//! points N×3 | features N×d' | descriptor d | pose 4×4 row-major | geo_location 3
//! ```
//!
//! Manifests are text, one `<db|query> <id> <relative-path>` per line, `#`
//! starts a comment. Results files hold one JSON object per line.

use std::collections::HashSet;
use std::fs;
use std::io::{self, BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{GeometryError, Point3, RigidTransform};
use crate::report::{ResultRecord, ResultsFile};
use crate::scalar::Real;
use crate::scan::{Features, ScanError, ScanRecord};

pub const MAGIC: &[u8; 4] = b"SGV1";

/// Orthonormality tolerance for poses read back from `f32` storage.
pub const STORED_POSE_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Error)]
pub enum StorageError {
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("bad magic: expected SGV1")]
    MagicMismatch,
    #[error("file truncated: need {needed} bytes, have {available}")]
    TruncatedFile { needed: usize, available: usize },
    #[error("header declares {declared} payload bytes but file carries {actual}")]
    DimMismatch { declared: usize, actual: usize },
    #[error("scan id is not valid UTF-8")]
    InvalidId,
    #[error("value does not fit the archive format: {0}")]
    Unrepresentable(&'static str),
    #[error("invalid pose: {0}")]
    InvalidPose(#[from] GeometryError),
    #[error("invalid record: {0}")]
    InvalidRecord(#[from] ScanError),
    #[error("manifest line {line}: {message}")]
    ManifestParse { line: usize, message: String },
    #[error("duplicate id `{0}` in manifest")]
    DuplicateId(String),
    #[error("missing scan file {0}")]
    MissingFile(PathBuf),
    #[error("inconsistent dims: `{id}` has d'={feature_dim}, d={descriptor_dim}; dataset has d'={expected_feature_dim}, d={expected_descriptor_dim}")]
    InconsistentDims {
        id: String,
        feature_dim: usize,
        descriptor_dim: usize,
        expected_feature_dim: usize,
        expected_descriptor_dim: usize,
    },
    #[error("manifest id `{manifest}` does not match archive id `{archive}`")]
    IdMismatch { manifest: String, archive: String },
    #[error("results line {line}: {message}")]
    ResultsParse { line: usize, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StorageError + '_ {
    move |source| StorageError::Io { path: path.to_path_buf(), source }
}

fn put_u32(buf: &mut Vec<u8>, v: usize) -> Result<(), StorageError> {
    let v = u32::try_from(v).map_err(|_| StorageError::Unrepresentable("count exceeds u32"))?;
    buf.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_f32<T: Real>(buf: &mut Vec<u8>, v: T) {
    let f = v.to_f32().unwrap_or(f32::NAN);
    buf.extend_from_slice(&f.to_le_bytes());
}

/// Serializes a scan. Values are narrowed to `f32`.
pub fn encode_scan<T: Real>(record: &ScanRecord<T>) -> Result<Vec<u8>, StorageError> {
    let n = record.len();
    let fd = record.feature_dim();
    let dd = record.descriptor_dim();
    let id = record.id().as_bytes();
    let mut buf = Vec::with_capacity(20 + id.len() + 4 * (n * (3 + fd) + dd + 19));
    buf.extend_from_slice(MAGIC);
    put_u32(&mut buf, n)?;
    put_u32(&mut buf, fd)?;
    put_u32(&mut buf, dd)?;
    put_u32(&mut buf, id.len())?;
    buf.extend_from_slice(id);
    for p in record.cloud() {
        put_f32(&mut buf, p.x);
        put_f32(&mut buf, p.y);
        put_f32(&mut buf, p.z);
    }
    for &v in record.local_features().as_slice() {
        put_f32(&mut buf, v);
    }
    for &v in record.global_descriptor() {
        put_f32(&mut buf, v);
    }
    for row in record.gt_pose().to_homogeneous() {
        for v in row {
            put_f32(&mut buf, v);
        }
    }
    let g = record.geo_location();
    for v in [g.x, g.y, g.z] {
        put_f32(&mut buf, v);
    }
    Ok(buf)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8], StorageError> {
        let end = self
            .pos
            .checked_add(len)
            .ok_or(StorageError::TruncatedFile { needed: usize::MAX, available: self.bytes.len() })?;
        if end > self.bytes.len() {
            return Err(StorageError::TruncatedFile { needed: end, available: self.bytes.len() });
        }
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<usize, StorageError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn reals<T: Real>(&mut self, count: usize) -> Result<Vec<T>, StorageError> {
        let b = self.take(count * 4)?;
        Ok(b.chunks_exact(4)
            .map(|c| T::from_f32(f32::from_le_bytes([c[0], c[1], c[2], c[3]])).expect("f32 widens"))
            .collect())
    }
}

pub fn decode_scan<T: Real>(bytes: &[u8]) -> Result<ScanRecord<T>, StorageError> {
    if bytes.len() < 4 {
        return Err(StorageError::TruncatedFile { needed: 4, available: bytes.len() });
    }
    if &bytes[..4] != MAGIC {
        return Err(StorageError::MagicMismatch);
    }
    let mut r = Reader { bytes, pos: 4 };
    let n = r.u32()?;
    let fd = r.u32()?;
    let dd = r.u32()?;
    let id_len = r.u32()?;
    let payload = n
        .checked_mul(3 + fd)
        .and_then(|v| v.checked_add(dd + 19))
        .and_then(|v| v.checked_mul(4))
        .and_then(|v| v.checked_add(id_len))
        .ok_or(StorageError::Unrepresentable("header sizes overflow"))?;
    let actual = bytes.len() - r.pos;
    if actual < payload {
        return Err(StorageError::TruncatedFile { needed: r.pos + payload, available: bytes.len() });
    }
    if actual > payload {
        return Err(StorageError::DimMismatch { declared: payload, actual });
    }
    let id = std::str::from_utf8(r.take(id_len)?).map_err(|_| StorageError::InvalidId)?.to_string();
    let flat = r.reals::<T>(n * 3)?;
    let cloud = flat.chunks_exact(3).map(|c| Point3::try_new(c[0], c[1], c[2])).collect::<Result<Vec<_>, _>>()?;
    let features = Features::new(fd, r.reals(n * fd)?).expect("length is n * d'");
    let descriptor = r.reals(dd)?;
    let h = r.reals::<T>(16)?;
    let mut m = [[T::zero(); 4]; 4];
    for (i, row) in m.iter_mut().enumerate() {
        row.copy_from_slice(&h[i * 4..i * 4 + 4]);
    }
    let pose = RigidTransform::from_homogeneous(&m, STORED_POSE_TOLERANCE)?;
    let g = r.reals::<T>(3)?;
    let geo = Point3::try_new(g[0], g[1], g[2])?;
    Ok(ScanRecord::new(id, cloud, features, descriptor, pose, geo)?)
}

pub fn write_scan<T: Real>(path: &Path, record: &ScanRecord<T>) -> Result<(), StorageError> {
    let bytes = encode_scan(record)?;
    fs::write(path, bytes).map_err(io_err(path))
}

pub fn read_scan<T: Real>(path: &Path) -> Result<ScanRecord<T>, StorageError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode_scan(&bytes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Database,
    Query,
}

impl Role {
    fn keyword(self) -> &'static str {
        match self {
            Role::Database => "db",
            Role::Query => "query",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub role: Role,
    pub id: String,
    /// Relative to the manifest's directory.
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn parse(text: &str) -> Result<Self, StorageError> {
        let mut entries = Vec::new();
        let mut seen = HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [role, id, path] = fields[..] else {
                return Err(StorageError::ManifestParse {
                    line: i + 1,
                    message: format!("expected `<db|query> <id> <path>`, got {} fields", fields.len()),
                });
            };
            let role = match role {
                "db" => Role::Database,
                "query" => Role::Query,
                other => {
                    return Err(StorageError::ManifestParse { line: i + 1, message: format!("unknown role `{other}`") })
                }
            };
            if !seen.insert(id.to_string()) {
                return Err(StorageError::DuplicateId(id.to_string()));
            }
            entries.push(ManifestEntry { role, id: id.to_string(), path: PathBuf::from(path) });
        }
        Ok(Self { entries })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# role id path\n");
        for e in &self.entries {
            out.push_str(&format!("{} {} {}\n", e.role.keyword(), e.id, e.path.display()));
        }
        out
    }

    pub fn ids(&self, role: Role) -> impl Iterator<Item = &str> {
        self.entries.iter().filter(move |e| e.role == role).map(|e| e.id.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub database: Vec<ScanRecord<T>>,
    pub queries: Vec<ScanRecord<T>>,
}

/// Loads every archive listed in a manifest, preserving listed order.
pub fn load_dataset<T: Real>(manifest_path: &Path) -> Result<Dataset<T>, StorageError> {
    let text = fs::read_to_string(manifest_path).map_err(io_err(manifest_path))?;
    let manifest = DatasetManifest::parse(&text)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));

    let scans: Vec<ScanRecord<T>> = manifest
        .entries
        .par_iter()
        .map(|e| {
            let path = base.join(&e.path);
            if !path.is_file() {
                return Err(StorageError::MissingFile(path));
            }
            let scan = read_scan::<T>(&path)?;
            if scan.id() != e.id {
                return Err(StorageError::IdMismatch { manifest: e.id.clone(), archive: scan.id().to_string() });
            }
            Ok(scan)
        })
        .collect::<Result<_, _>>()?;

    if let Some(first) = scans.first() {
        let (fd, dd) = (first.feature_dim(), first.descriptor_dim());
        for s in &scans {
            if s.feature_dim() != fd || s.descriptor_dim() != dd {
                return Err(StorageError::InconsistentDims {
                    id: s.id().to_string(),
                    feature_dim: s.feature_dim(),
                    descriptor_dim: s.descriptor_dim(),
                    expected_feature_dim: fd,
                    expected_descriptor_dim: dd,
                });
            }
        }
    }

    let mut dataset = Dataset { database: Vec::new(), queries: Vec::new() };
    for (e, s) in manifest.entries.iter().zip(scans) {
        match e.role {
            Role::Database => dataset.database.push(s),
            Role::Query => dataset.queries.push(s),
        }
    }
    Ok(dataset)
}

/// Writes one archive per scan under `dir/scans/` and a `manifest.txt`.
pub fn export_dataset<T: Real>(dataset: &Dataset<T>, dir: &Path) -> Result<PathBuf, StorageError> {
    let scan_dir = dir.join("scans");
    fs::create_dir_all(&scan_dir).map_err(io_err(&scan_dir))?;
    let mut manifest = DatasetManifest::default();
    let roles =
        dataset.database.iter().map(|s| (Role::Database, s)).chain(dataset.queries.iter().map(|s| (Role::Query, s)));
    for (role, scan) in roles {
        let rel = PathBuf::from("scans").join(format!("{}.sgv", scan.id()));
        write_scan(&dir.join(&rel), scan)?;
        manifest.entries.push(ManifestEntry { role, id: scan.id().to_string(), path: rel });
    }
    let path = dir.join("manifest.txt");
    fs::write(&path, manifest.to_text()).map_err(io_err(&path))?;
    Ok(path)
}

/// Header line, one line per query, then the summary when there is one.
pub fn write_results(path: &Path, results: &ResultsFile) -> Result<(), StorageError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for record in results.records() {
        let line = serde_json::to_string(&record).expect("results serialize");
        writeln!(w, "{line}").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_results(path: &Path) -> Result<ResultsFile, StorageError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut records = Vec::new();
    for (i, line) in io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ResultRecord = serde_json::from_str(&line)
            .map_err(|e| StorageError::ResultsParse { line: i + 1, message: e.to_string() })?;
        records.push(rec);
    }
    ResultsFile::from_records(records).map_err(|message| StorageError::ResultsParse { line: 0, message })
}
