//! `eval`: PSNR/SSIM per protocol and model, one column pair per AF.

use std::collections::HashMap;
use std::fs;

use mrdc::data::format::decode_cplx;
use mrdc::data::{DatasetRecord, Protocol};
use mrdc::metrics::{psnr, ssim};
use mrdc::pipeline::prepare_sample;
use mrdc::sampling::SamplingMask;
use mrdc::{Complex64, ComplexImage, Error, Result};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::args::EvalArgs;
use crate::recon::{read_manifest, ManifestEntry};

pub const ALL_PROTOCOLS: &str = "All";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    /// Mean and sample standard deviation; all-infinite input is `inf ± 0`.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        if values.iter().all(|v| *v == f64::INFINITY) {
            return Stat { mean: f64::INFINITY, std: 0.0 };
        }
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Stat { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub n: usize,
    pub psnr: Stat,
    pub ssim: Stat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub protocol: String,
    pub model: String,
    /// Aligned with [`Table::afs`].
    pub cells: Vec<Option<Cell>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub afs: Vec<f64>,
    pub rows: Vec<Row>,
}

pub fn fmt_value(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:.2}")
    }
}

fn fmt_stat(s: &Stat) -> String {
    format!("{} ± {}", fmt_value(s.mean), fmt_value(s.std))
}

fn fmt_af(af: f64) -> String {
    format!("AF={af}")
}

impl Table {
    pub fn to_text(&self) -> String {
        let mut grid: Vec<Vec<String>> = Vec::new();
        let mut head1 = vec![String::new(), String::new()];
        let mut head2 = vec!["Protocol".to_string(), "Model".to_string()];
        for &af in &self.afs {
            head1.extend([fmt_af(af), String::new()]);
            head2.extend(["PSNR".to_string(), "SSIM".to_string()]);
        }
        grid.push(head1);
        grid.push(head2);
        let mut last_protocol = None;
        for row in &self.rows {
            let protocol = if last_protocol == Some(&row.protocol) { String::new() } else { row.protocol.clone() };
            last_protocol = Some(&row.protocol);
            let mut line = vec![protocol, row.model.clone()];
            for cell in &row.cells {
                match cell {
                    Some(c) => line.extend([fmt_stat(&c.psnr), fmt_stat(&c.ssim)]),
                    None => line.extend(["-".to_string(), "-".to_string()]),
                }
            }
            grid.push(line);
        }
        let cols = grid[0].len();
        let widths: Vec<usize> = (0..cols)
            .map(|c| grid.iter().map(|l| l[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for line in &grid {
            let cells: Vec<String> = line
                .iter()
                .zip(&widths)
                .map(|(s, w)| format!("{s}{}", " ".repeat(w - s.chars().count())))
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> Value {
        fn num(v: f64) -> Value {
            if v.is_finite() {
                json!(v)
            } else {
                json!(fmt_value(v))
            }
        }
        let stat = |s: &Stat| json!({ "mean": num(s.mean), "std": num(s.std) });
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|r| {
                let cells: Vec<Value> = r
                    .cells
                    .iter()
                    .zip(&self.afs)
                    .map(|(c, af)| match c {
                        Some(c) => json!({ "af": af, "n": c.n, "psnr": stat(&c.psnr), "ssim": stat(&c.ssim) }),
                        None => Value::Null,
                    })
                    .collect();
                json!({ "protocol": r.protocol, "model": r.model, "cells": cells })
            })
            .collect();
        json!({ "afs": self.afs, "rows": rows })
    }
}

/// One scored reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub struct Scored {
    pub protocol: String,
    pub model: String,
    pub af: f64,
    pub psnr: f64,
    pub ssim: f64,
}

fn protocol_label(tag: &str) -> String {
    tag.parse::<Protocol>().map(|p| p.label().to_string()).unwrap_or_else(|_| tag.to_string())
}

fn protocol_rank(label: &str) -> (usize, String) {
    if label == ALL_PROTOCOLS {
        return (usize::MAX, String::new());
    }
    let pos = Protocol::ALL.iter().position(|p| p.label() == label).unwrap_or(Protocol::ALL.len());
    (pos, label.to_string())
}

/// Groups scores into protocol × model rows (plus an all-protocol group per
/// model), models in first-seen order.
pub fn build_table(scores: &[Scored]) -> Table {
    let mut afs: Vec<f64> = Vec::new();
    let mut models: Vec<String> = Vec::new();
    let mut protocols: Vec<String> = Vec::new();
    for s in scores {
        if !afs.contains(&s.af) {
            afs.push(s.af);
        }
        if !models.contains(&s.model) {
            models.push(s.model.clone());
        }
        let label = protocol_label(&s.protocol);
        if !protocols.contains(&label) {
            protocols.push(label);
        }
    }
    afs.sort_by(f64::total_cmp);
    protocols.sort_by_key(|p| protocol_rank(p));
    if protocols.len() > 1 {
        protocols.push(ALL_PROTOCOLS.to_string());
    }
    let mut rows = Vec::new();
    for p in &protocols {
        for m in &models {
            let cells: Vec<Option<Cell>> = afs
                .iter()
                .map(|&af| {
                    let sel: Vec<&Scored> = scores
                        .iter()
                        .filter(|s| {
                            s.model == *m && s.af == af && (p == ALL_PROTOCOLS || protocol_label(&s.protocol) == *p)
                        })
                        .collect();
                    if sel.is_empty() {
                        return None;
                    }
                    let ps: Vec<f64> = sel.iter().map(|s| s.psnr).collect();
                    let ss: Vec<f64> = sel.iter().map(|s| s.ssim).collect();
                    Some(Cell {
                        n: sel.len(),
                        psnr: Stat::of(&ps),
                        ssim: Stat::of(&ss),
                    })
                })
                .collect();
            if cells.iter().any(Option::is_some) {
                rows.push(Row {
                    protocol: p.clone(),
                    model: m.clone(),
                    cells,
                });
            }
        }
    }
    Table { afs, rows }
}

fn quantize(img: &ComplexImage) -> ComplexImage {
    ComplexImage::from_fn(img.height(), img.width(), |r, c| {
        let z = img.get(r, c);
        Complex64::new(z.re as f32 as f64, z.im as f32 as f64)
    })
}

fn score_entry(record: &DatasetRecord, entry: &ManifestEntry, dir: &std::path::Path) -> Result<(f64, f64)> {
    if (entry.height, entry.width) != record.dims() {
        return Err(Error::ShapeMismatch(format!(
            "reconstruction {} is {}x{}, record is {:?}",
            entry.id,
            entry.height,
            entry.width,
            record.dims()
        )));
    }
    let mask = SamplingMask::from_lines(entry.height, entry.width, entry.sampled_lines.clone(), 0)?;
    let sample = prepare_sample(record, &mask, entry.calib)?;
    let mut reference = sample.truth_image.clone();
    reference.scale(sample.scale);
    // The stored prediction went through f32; so does the reference.
    let reference = quantize(&reference);
    let path = dir.join(&entry.image);
    let bytes = fs::read(&path).map_err(|e| Error::Io { path: path.clone(), source: e })?;
    let data = decode_cplx(&bytes, entry.height * entry.width, &entry.image)?;
    let pred = ComplexImage::new(entry.height, entry.width, data)?;
    let roi = Some(sample.roi());
    Ok((psnr(&pred, &reference, roi)?, ssim(&pred, &reference, roi)?))
}

pub fn score_dirs(records: &[DatasetRecord], dirs: &[std::path::PathBuf]) -> Result<Vec<Scored>> {
    let by_id: HashMap<&str, &DatasetRecord> = records.iter().map(|r| (r.id.as_str(), r)).collect();
    let mut out = Vec::new();
    for dir in dirs {
        let manifest = read_manifest(dir)?;
        let scored: Vec<Scored> = manifest
            .records
            .par_iter()
            .map(|e| {
                let record = by_id
                    .get(e.id.as_str())
                    .ok_or_else(|| Error::InvalidArgument(format!("{}: record {} not in dataset", dir.display(), e.id)))?;
                let (p, s) = score_entry(record, e, dir)?;
                Ok(Scored {
                    protocol: e.protocol.clone(),
                    model: manifest.method.clone(),
                    af: e.af,
                    psnr: p,
                    ssim: s,
                })
            })
            .collect::<Result<_>>()?;
        out.extend(scored);
    }
    Ok(out)
}

pub fn run(a: EvalArgs) -> Result<()> {
    let records = crate::load_records(&a.data)?;
    let scores = score_dirs(&records, &a.recon)?;
    let table = build_table(&scores);
    print!("{}", table.to_text());
    let json = serde_json::to_string_pretty(&table.to_json()).expect("json value") + "\n";
    match &a.json {
        Some(path) => fs::write(path, json).map_err(|e| Error::Io { path: path.clone(), source: e })?,
        None => print!("\n{json}"),
    }
    Ok(())
}
