//! `recon`: per-record reconstructions, PGM previews and a manifest.

use std::fs;
use std::path::Path;

use mrdc::data::{format::encode_cplx, DatasetRecord};
use mrdc::pipeline::{derive_mask, prepare_sample, reconstruct, Method};
use mrdc::sampling::DEFAULT_CALIB_LINES;
use mrdc::training::load_checkpoint;
use mrdc::{ComplexImage, Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::args::{Baseline, ReconArgs};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub method: String,
    pub source: String,
    pub records: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub protocol: String,
    pub af: f64,
    pub calib: usize,
    pub height: usize,
    pub width: usize,
    pub sampled_lines: Vec<usize>,
    /// Raw complex image, interleaved little-endian `f32` pairs.
    pub image: String,
    pub pgm: String,
}

/// 16-bit binary PGM of `|img|`, scaled so the brightest pixel is 65535.
pub fn encode_pgm(img: &ComplexImage) -> Vec<u8> {
    let mag = img.magnitude();
    let peak = mag.iter().copied().fold(0.0, f64::max);
    let mut out = format!("P5\n{} {}\n65535\n", img.width(), img.height()).into_bytes();
    for m in mag {
        let v = if peak > 0.0 { (m / peak * 65535.0).round() as u16 } else { 0 };
        out.extend_from_slice(&v.to_be_bytes());
    }
    out
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn effective_calib(record: &DatasetRecord, flag: Option<usize>) -> usize {
    flag.or(record.calib).unwrap_or(DEFAULT_CALIB_LINES)
}

pub fn run(a: ReconArgs) -> Result<()> {
    let records = crate::load_records(&a.data)?;
    let checkpoint = a.model.as_deref().map(load_checkpoint).transpose()?;
    let (method, source) = match (&checkpoint, a.baseline) {
        (Some(ck), _) => (Some(Method::Model(&ck.model)), a.model.as_ref().expect("model path").display().to_string()),
        (None, Some(Baseline::Zf)) => (Some(Method::ZeroFilled), "zf".to_string()),
        (None, Some(Baseline::Pocsense)) => (
            Some(Method::Pocsense {
                iters: a.iters,
                step: a.step,
            }),
            "pocsense".to_string(),
        ),
        (None, Some(Baseline::Reference)) => (None, "reference".to_string()),
        (None, None) => return Err(Error::InvalidArgument("need --model or --baseline".into())),
    };
    let label = method.map_or("Reference", |m| m.label()).to_string();
    let results: Vec<(ManifestEntry, ComplexImage)> = records
        .par_iter()
        .map(|r| {
            let calib = effective_calib(r, a.calib);
            let mask = derive_mask(r, a.af, calib, 0)?;
            let sample = prepare_sample(r, &mask, calib)?;
            let mut img = match method {
                Some(m) => reconstruct(&sample, m)?,
                None => sample.truth_image.clone(),
            };
            img.scale(sample.scale);
            let af = a.af.or(r.af).unwrap_or_else(|| sample.acceleration());
            let entry = ManifestEntry {
                id: r.id.clone(),
                protocol: r.protocol.clone(),
                af,
                calib,
                height: mask.height(),
                width: mask.width(),
                sampled_lines: mask.sampled_lines().to_vec(),
                image: format!("{}.cplx", r.id),
                pgm: format!("{}.pgm", r.id),
            };
            Ok((entry, img))
        })
        .collect::<Result<_>>()?;
    fs::create_dir_all(&a.out).map_err(|e| Error::Io {
        path: a.out.clone(),
        source: e,
    })?;
    let mut entries = Vec::with_capacity(results.len());
    for (entry, img) in results {
        write(&a.out.join(&entry.image), &encode_cplx(img.data()))?;
        write(&a.out.join(&entry.pgm), &encode_pgm(&img))?;
        entries.push(entry);
    }
    let manifest = Manifest {
        method: label.clone(),
        source,
        records: entries,
    };
    let mut json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    json.push(b'\n');
    write(&a.out.join(MANIFEST_FILE), &json)?;
    println!("{label}: reconstructed {} records into {}", manifest.records.len(), a.out.display());
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let bytes = fs::read(&path).map_err(|e| Error::Io {
        path: path.clone(),
        source: e,
    })?;
    serde_json::from_slice(&bytes).map_err(|e| Error::MalformedHeader {
        context: path.display().to_string(),
        reason: e.to_string(),
    })
}
