//! Binary dataset ("FSDS") and episode ("FSEP") files, plus CSV import.
//!
//! Both formats are little-endian with a magic tag, a u16 format
//! version, and a trailing CRC32 over everything before the checksum.
//! Vectors are stored as raw f64 bits, so `load(save(x)) == x`
//! bit-exactly and files are shareable across platforms.

use super::binfmt::{read_file, Reader, Writer};
use super::{Dataset, Episode};
use crate::{Error, Result};
use std::path::Path;

const EPISODE_MAGIC: &[u8; 4] = b"FSEP";
const DATASET_MAGIC: &[u8; 4] = b"FSDS";

/// Writes an episode set; an empty list is a valid file with zero
/// episodes.
pub fn save_episodes(path: &Path, episodes: &[Episode]) -> Result<()> {
    let mut w = Writer::new(EPISODE_MAGIC);
    w.u32(episodes.len() as u32);
    for e in episodes {
        w.u32(e.way);
        w.u32(e.support_shot);
        w.u32(e.query_shot);
        w.u64(e.seed);
        w.u32(e.dim() as u32);
        for c in &e.class_ids {
            w.u32(*c);
        }
        for (v, y) in e.support.iter().chain(&e.query) {
            w.u32(*y);
            w.f64s(v);
        }
    }
    w.finish(path)
}

pub fn load_episodes(path: &Path) -> Result<Vec<Episode>> {
    let buf = read_file(path)?;
    let mut r = Reader::open(path, &buf, EPISODE_MAGIC)?;
    let count = r.u32()?;
    let mut episodes = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let way = r.u32()?;
        let support_shot = r.u32()?;
        let query_shot = r.u32()?;
        let seed = r.u64()?;
        let dim = r.u32()? as usize;
        let class_ids: Vec<u32> = (0..way).map(|_| r.u32()).collect::<Result<_>>()?;
        let mut read_samples = |n: usize| -> Result<Vec<(Vec<f64>, u32)>> {
            (0..n)
                .map(|_| {
                    let y = r.u32()?;
                    let v = r.f64s(dim)?;
                    Ok((v, y))
                })
                .collect()
        };
        let support = read_samples((way * support_shot) as usize)?;
        let query = read_samples((way * query_shot) as usize)?;
        episodes.push(Episode {
            way,
            support_shot,
            query_shot,
            class_ids,
            support,
            query,
            seed,
        });
    }
    r.expect_end()?;
    Ok(episodes)
}

pub fn save_dataset(path: &Path, dataset: &Dataset) -> Result<()> {
    let mut w = Writer::new(DATASET_MAGIC);
    w.str(dataset.name());
    w.u32(dataset.dim() as u32);
    w.u32(dataset.n_classes() as u32);
    for (id, samples) in dataset.iter_classes() {
        w.u32(id);
        w.u32(samples.len() as u32);
        for s in samples {
            w.f64s(s);
        }
    }
    w.finish(path)
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let buf = read_file(path)?;
    let mut r = Reader::open(path, &buf, DATASET_MAGIC)?;
    let name = r.str()?;
    let dim = r.u32()? as usize;
    let n_classes = r.u32()?;
    let mut classes = Vec::with_capacity(n_classes as usize);
    for _ in 0..n_classes {
        let id = r.u32()?;
        let n = r.u32()?;
        let samples: Vec<Vec<f64>> = (0..n).map(|_| r.f64s(dim)).collect::<Result<_>>()?;
        classes.push((id, samples));
    }
    r.expect_end()?;
    Dataset::new(name, dim, classes)
}

/// Imports a headerless CSV: first column the class id, remaining
/// columns the feature values.
pub fn read_dataset_csv(path: &Path, name: &str) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| Error::Format {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
    let mut by_class: std::collections::BTreeMap<u32, Vec<Vec<f64>>> = Default::default();
    let mut dim: Option<usize> = None;
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Format {
            path: path.display().to_string(),
            detail: format!("row {row}: {e}"),
        })?;
        let mut fields = record.iter();
        let class: u32 = fields
            .next()
            .and_then(|f| f.trim().parse().ok())
            .ok_or_else(|| Error::Format {
                path: path.display().to_string(),
                detail: format!("row {row}: missing or non-integer class id"),
            })?;
        let values: Vec<f64> = fields
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Format {
                path: path.display().to_string(),
                detail: format!("row {row}: {e}"),
            })?;
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(Error::Format {
                    path: path.display().to_string(),
                    detail: format!("row {row}: {} features, expected {d}", values.len()),
                })
            }
            _ => {}
        }
        by_class.entry(class).or_default().push(values);
    }
    let dim = dim.ok_or_else(|| Error::Format {
        path: path.display().to_string(),
        detail: "empty csv".into(),
    })?;
    Dataset::new(name.to_string(), dim, by_class.into_iter().collect())
}
