//! Dataset directory format.
//!
//! ```text
//! <dataset>/<record id>/meta.json    UTF-8 JSON metadata, format_version = 1
//! <dataset>/<record id>/kspace.cplx  little-endian f32 (re, im) pairs,
//!                                    coil-major, row-major within a coil
//! <dataset>/<record id>/sens.cplx    optional maps, same layout
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::coils::SensitivityMaps;
use crate::data::acquisition::DatasetRecord;
use crate::error::{Error, Result};
use crate::image::CoilStack;
use crate::sampling::SamplingMask;

pub const FORMAT_VERSION: u64 = 1;
pub const META_FILE: &str = "meta.json";
pub const KSPACE_FILE: &str = "kspace.cplx";
pub const SENS_FILE: &str = "sens.cplx";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordMeta {
    pub format_version: u64,
    pub id: String,
    pub protocol: String,
    pub height: usize,
    pub width: usize,
    pub n_coil: usize,
    pub seed: u64,
    pub noise_sigma: f64,
    pub sampled_lines: Vec<usize>,
    #[serde(default)]
    pub mask_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub af: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calib: Option<usize>,
    #[serde(default)]
    pub has_sens: bool,
}

impl RecordMeta {
    pub fn of(record: &DatasetRecord) -> Self {
        let (height, width) = record.dims();
        Self {
            format_version: FORMAT_VERSION,
            id: record.id.clone(),
            protocol: record.protocol.clone(),
            height,
            width,
            n_coil: record.n_coil(),
            seed: record.seed,
            noise_sigma: record.noise_sigma,
            sampled_lines: record.mask.sampled_lines().to_vec(),
            mask_seed: record.mask.seed(),
            af: record.af,
            calib: record.calib,
            has_sens: record.maps.is_some(),
        }
    }

    /// Complex samples in `kspace.cplx`, or `None` on overflow.
    pub fn sample_count(&self) -> Option<usize> {
        self.n_coil.checked_mul(self.height)?.checked_mul(self.width)
    }
}

fn malformed(context: &str, reason: impl Into<String>) -> Error {
    Error::MalformedHeader {
        context: context.to_string(),
        reason: reason.into(),
    }
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id != "." && id != ".." && !id.contains(['/', '\\', '\0'])
}

/// Parses and validates `meta.json`.
pub fn parse_meta(bytes: &[u8]) -> Result<RecordMeta> {
    let value: serde_json::Value =
        serde_json::from_slice(bytes).map_err(|e| malformed(META_FILE, e.to_string()))?;
    let version = value
        .get("format_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| malformed(META_FILE, "missing format_version"))?;
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let meta: RecordMeta = serde_json::from_value(value).map_err(|e| malformed(META_FILE, e.to_string()))?;
    if meta.height == 0 || meta.width == 0 || meta.n_coil == 0 {
        return Err(malformed(META_FILE, "dimensions and n_coil must be positive"));
    }
    if meta.sample_count().is_none() {
        return Err(malformed(META_FILE, "dimensions overflow"));
    }
    if !valid_id(&meta.id) {
        return Err(malformed(META_FILE, format!("id {:?} is not a valid directory name", meta.id)));
    }
    if !(meta.noise_sigma >= 0.0 && meta.noise_sigma.is_finite()) {
        return Err(malformed(META_FILE, "noise_sigma must be finite and >= 0"));
    }
    if let Some(af) = meta.af {
        if !(af.is_finite() && af >= 1.0) {
            return Err(malformed(META_FILE, "af must be >= 1"));
        }
    }
    Ok(meta)
}

pub fn encode_meta(meta: &RecordMeta) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(meta).expect("meta serializes");
    out.push(b'\n');
    out
}

pub fn encode_cplx(data: &[Complex64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(data.len() * 8);
    for z in data {
        out.extend_from_slice(&(z.re as f32).to_le_bytes());
        out.extend_from_slice(&(z.im as f32).to_le_bytes());
    }
    out
}

/// Decodes exactly `samples` complex values.
pub fn decode_cplx(bytes: &[u8], samples: usize, context: &str) -> Result<Vec<Complex64>> {
    let expected = samples
        .checked_mul(8)
        .ok_or_else(|| malformed(context, "sample count overflows"))?;
    if bytes.len() < expected {
        return Err(Error::TruncatedPayload {
            context: context.to_string(),
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(Error::TrailingBytes {
            context: context.to_string(),
            expected,
            found: bytes.len(),
        });
    }
    let mut out = Vec::with_capacity(samples);
    for pair in bytes.chunks_exact(8) {
        let re = f32::from_le_bytes(pair[0..4].try_into().expect("4 bytes"));
        let im = f32::from_le_bytes(pair[4..8].try_into().expect("4 bytes"));
        if !re.is_finite() || !im.is_finite() {
            return Err(Error::NonFinite(format!("{context} sample {}", out.len())));
        }
        out.push(Complex64::new(re as f64, im as f64));
    }
    Ok(out)
}

/// Builds a record from raw file contents.
pub fn decode_record(meta_bytes: &[u8], kspace_bytes: &[u8], sens_bytes: Option<&[u8]>) -> Result<DatasetRecord> {
    let meta = parse_meta(meta_bytes)?;
    let n = meta.sample_count().expect("validated");
    let mask = SamplingMask::from_lines(meta.height, meta.width, meta.sampled_lines.clone(), meta.mask_seed)
        .map_err(|e| malformed(META_FILE, e.to_string()))?;
    let kspace = CoilStack::new(
        meta.n_coil,
        meta.height,
        meta.width,
        decode_cplx(kspace_bytes, n, KSPACE_FILE)?,
    )?;
    let maps = sens_bytes
        .map(|b| -> Result<SensitivityMaps> {
            let stack = CoilStack::new(meta.n_coil, meta.height, meta.width, decode_cplx(b, n, SENS_FILE)?)?;
            Ok(SensitivityMaps::from_normalized(stack))
        })
        .transpose()?;
    Ok(DatasetRecord {
        id: meta.id,
        protocol: meta.protocol,
        seed: meta.seed,
        noise_sigma: meta.noise_sigma,
        kspace,
        mask,
        af: meta.af,
        calib: meta.calib,
        maps,
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Writes one record directory `<parent>/<id>`.
pub fn write_record(record: &DatasetRecord, parent: &Path) -> Result<PathBuf> {
    if !valid_id(&record.id) {
        return Err(Error::InvalidArgument(format!("record id {:?} is not a valid directory name", record.id)));
    }
    let dir = parent.join(&record.id);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    write_file(&dir.join(META_FILE), &encode_meta(&RecordMeta::of(record)))?;
    write_file(&dir.join(KSPACE_FILE), &encode_cplx(record.kspace.data()))?;
    if let Some(maps) = &record.maps {
        write_file(&dir.join(SENS_FILE), &encode_cplx(maps.maps().data()))?;
    }
    Ok(dir)
}

pub fn read_record(dir: &Path) -> Result<DatasetRecord> {
    let meta = read_file(&dir.join(META_FILE))?;
    let kspace = read_file(&dir.join(KSPACE_FILE))?;
    let sens_path = dir.join(SENS_FILE);
    let sens = if sens_path.exists() { Some(read_file(&sens_path)?) } else { None };
    decode_record(&meta, &kspace, sens.as_deref())
}

/// Writes all records into a fresh temporary directory and renames it to
/// `dir`. `dir` must not exist or be empty.
pub fn write_dataset(records: &[DatasetRecord], dir: &Path) -> Result<()> {
    if dir.exists() {
        let mut entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        if entries.next().is_some() {
            return Err(Error::io(
                dir,
                std::io::Error::new(std::io::ErrorKind::AlreadyExists, "dataset directory is not empty"),
            ));
        }
    }
    let name = dir
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("{} has no file name", dir.display())))?;
    let parent = dir.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    let tmp = parent.join(format!(".{}.tmp-{}", name.to_string_lossy(), std::process::id()));
    if tmp.exists() {
        fs::remove_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
    }
    fs::create_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
    for r in records {
        write_record(r, &tmp)?;
    }
    if dir.exists() {
        fs::remove_dir(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::rename(&tmp, dir).map_err(|e| Error::io(dir, e))
}

/// Reads every record directory under `dir`, ordered by directory name.
pub fn read_dataset(dir: &Path) -> Result<Vec<DatasetRecord>> {
    let mut dirs = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() && path.join(META_FILE).exists() {
            dirs.push(path);
        }
    }
    dirs.sort();
    dirs.iter().map(|d| read_record(d)).collect()
}
