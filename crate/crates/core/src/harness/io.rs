//! Dataset and report files.
//!
//! A dataset is `episodes.jsonl` (one [`EpisodeLog`] per line) plus `meta.json`. Only the
//! sidecar may carry a timestamp, so the JSONL is byte-identical across identical runs. Every
//! file is written to a temporary sibling first and renamed into place.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{EpisodeLog, RunDataset, SuiteGrid};
use crate::error::{Error, Result};

pub const EPISODES_FILE: &str = "episodes.jsonl";
pub const META_FILE: &str = "meta.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteManifest {
    pub tasks: Vec<String>,
    pub presets: Vec<String>,
    pub strategies: Vec<String>,
    pub candidates: Vec<usize>,
    pub seeds: u64,
    pub master_seed: u64,
    pub alpha: f64,
    pub tau: f64,
}

impl SuiteManifest {
    pub fn of(grid: &SuiteGrid) -> Self {
        SuiteManifest {
            tasks: grid.tasks.iter().map(|t| t.task_id.clone()).collect(),
            presets: grid.presets.iter().map(|(n, _)| n.clone()).collect(),
            strategies: grid.strategies.iter().map(|s| s.name().to_string()).collect(),
            candidates: grid.candidates.clone(),
            seeds: grid.seeds,
            master_seed: grid.master_seed,
            alpha: grid.consistency.alpha,
            tau: grid.tau,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub fingerprint: String,
    pub version: String,
    pub episodes: usize,
    pub manifest: SuiteManifest,
    pub alignment: std::collections::BTreeMap<String, super::Alignment>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_at: Option<String>,
}

/// Writes `contents` through a temporary file so readers never see a partial file.
pub fn write_atomic(path: &Path, write: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    let result = (|| {
        let mut w = BufWriter::new(File::create(&tmp)?);
        write(&mut w)?;
        w.flush()?;
        drop(w);
        fs::rename(&tmp, path)?;
        Ok(())
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

pub fn write_jsonl(path: &Path, episodes: &[EpisodeLog]) -> Result<()> {
    write_atomic(path, |w| {
        for e in episodes {
            serde_json::to_writer(&mut *w, e)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    })
}

pub fn read_jsonl(path: &Path) -> Result<Vec<EpisodeLog>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = vec![];
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let e: EpisodeLog =
            serde_json::from_str(&line).map_err(|err| Error::Config(format!("{}:{}: {err}", path.display(), i + 1)))?;
        out.push(e);
    }
    Ok(out)
}

/// Writes the dataset into `dir`, returning the JSONL and sidecar paths.
pub fn write_dataset(
    dir: &Path,
    dataset: &RunDataset,
    manifest: SuiteManifest,
    created_at: Option<String>,
) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir)?;
    let jsonl = dir.join(EPISODES_FILE);
    let meta_path = dir.join(META_FILE);
    write_jsonl(&jsonl, &dataset.episodes)?;
    let meta = DatasetMeta {
        fingerprint: dataset.fingerprint.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        episodes: dataset.episodes.len(),
        manifest,
        alignment: dataset.alignment.clone(),
        created_at,
    };
    let written = write_atomic(&meta_path, |w| {
        serde_json::to_writer_pretty(&mut *w, &meta)?;
        w.write_all(b"\n")?;
        Ok(())
    });
    if let Err(e) = written {
        let _ = fs::remove_file(&jsonl);
        return Err(e);
    }
    Ok((jsonl, meta_path))
}

fn jsonl_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(EPISODES_FILE)
    } else {
        path.to_path_buf()
    }
}

/// The sidecar next to a dataset, if there is one.
pub fn read_meta(path: &Path) -> Result<Option<DatasetMeta>> {
    let meta_path = jsonl_path(path).with_file_name(META_FILE);
    if !meta_path.exists() {
        return Ok(None);
    }
    let meta = serde_json::from_reader(BufReader::new(File::open(&meta_path)?))
        .map_err(|e| Error::Config(format!("{}: {e}", meta_path.display())))?;
    Ok(Some(meta))
}

/// Loads a dataset from a directory holding `episodes.jsonl` or from the JSONL file itself.
/// The fingerprint comes from the sidecar when one is present.
pub fn read_dataset(path: &Path) -> Result<RunDataset> {
    let episodes = read_jsonl(&jsonl_path(path))?;
    let fingerprint = read_meta(path)?.map(|m| m.fingerprint).unwrap_or_default();
    Ok(RunDataset::from_episodes(fingerprint, episodes))
}

pub fn write_csv<S: Serialize>(path: &Path, rows: &[S]) -> Result<()> {
    write_atomic(path, |w| {
        let mut csv = csv::Writer::from_writer(w);
        for r in rows {
            csv.serialize(r)?;
        }
        csv.flush()?;
        Ok(())
    })
}

/// CSV with an explicit header, for reports whose columns are only known at run time.
pub fn write_table(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    write_atomic(path, |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(header)?;
        for r in rows {
            csv.write_record(r)?;
        }
        csv.flush()?;
        Ok(())
    })
}
