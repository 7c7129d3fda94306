//! Chain output files and atomic writes.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::mcmc::{ChainMeta, ModelSpec, PosteriorDraws, SdSemParams, SsvsState};
use crate::state_space::FactorPath;

/// Writes to a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let name = path.file_name().ok_or_else(|| Error::InvalidInput(format!("not a file path: {}", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn draws_path(dir: &Path, chain: usize) -> PathBuf {
    dir.join(format!("draws_chain{chain}.csv"))
}

pub fn factors_path(dir: &Path, chain: usize) -> PathBuf {
    dir.join(format!("factors_chain{chain}.csv"))
}

pub fn meta_path(dir: &Path, chain: usize) -> PathBuf {
    dir.join(format!("meta_chain{chain}.json"))
}

/// Sidecar describing a chain file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainFileMeta {
    pub chain: ChainMeta,
    pub spec: ModelSpec,
    pub ssvs: SsvsState,
    pub config_hash: String,
    pub grid: Option<(usize, usize)>,
}

/// One row per retained draw: every named parameter, then `deviance`.
pub fn write_draws_csv(path: &Path, draws: &PosteriorDraws) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let header: Vec<String> = match draws.params.first() {
        Some(p) => p.named_values().into_iter().map(|(n, _)| n).chain(std::iter::once("deviance".into())).collect(),
        None => vec!["deviance".into()],
    };
    w.write_record(&header)?;
    for (p, dev) in draws.params.iter().zip(&draws.deviance) {
        let row: Vec<String> = p.values().iter().chain(std::iter::once(dev)).map(|v| format!("{v}")).collect();
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?;
    write_atomic(path, &bytes)
}

/// Header and numeric rows of a draw file.
pub fn read_draws_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(|s| s.to_string()).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|s| s.parse::<f64>().map_err(|e| Error::Parse(format!("{}: {e}", path.display()))))
            .collect::<Result<Vec<_>>>()?;
        if row.len() != header.len() {
            return Err(Error::Parse(format!("{}: ragged row", path.display())));
        }
        rows.push(row);
    }
    Ok((header, rows))
}

/// Long format `draw,t,d0,d1,…` with `t` starting at 1.
pub fn write_factors_csv(path: &Path, draws: &PosteriorDraws) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let k = draws.factors.first().map_or(0, |f| f.dim());
    let mut header = vec!["draw".to_string(), "t".to_string()];
    header.extend((0..k).map(|j| format!("d{j}")));
    w.write_record(&header)?;
    for (i, f) in draws.factors.iter().enumerate() {
        for t in 0..f.len() {
            let mut row = vec![i.to_string(), (t + 1).to_string()];
            row.extend(f.values.row(t).iter().map(|v| format!("{v}")));
            w.write_record(&row)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?;
    write_atomic(path, &bytes)
}

pub fn read_factors_csv(path: &Path) -> Result<Vec<FactorPath>> {
    let mut r = csv::Reader::from_path(path)?;
    let k = r.headers()?.len().saturating_sub(2);
    let mut out: Vec<Vec<Vec<f64>>> = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let draw: usize = rec.get(0).unwrap_or("").parse().map_err(|e| Error::Parse(format!("draw index: {e}")))?;
        let vals = rec.iter().skip(2).map(|s| s.parse::<f64>().map_err(|e| Error::Parse(e.to_string()))).collect::<Result<Vec<_>>>()?;
        if vals.len() != k {
            return Err(Error::Parse("ragged factor row".into()));
        }
        while out.len() <= draw {
            out.push(Vec::new());
        }
        out[draw].push(vals);
    }
    Ok(out
        .into_iter()
        .map(|rows| FactorPath { values: DMatrix::from_fn(rows.len(), k, |t, j| rows[t][j]) })
        .collect())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let s = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&s)?)
}

/// Writes the three files of one chain into `dir`.
pub fn save_chain(dir: &Path, draws: &PosteriorDraws, meta: &ChainFileMeta) -> Result<()> {
    let c = draws.meta.chain_id;
    write_draws_csv(&draws_path(dir, c), draws)?;
    write_factors_csv(&factors_path(dir, c), draws)?;
    write_json(&meta_path(dir, c), meta)
}

/// Reads a chain written by [`save_chain`].
pub fn load_chain(dir: &Path, chain: usize) -> Result<(PosteriorDraws, ChainFileMeta)> {
    let meta: ChainFileMeta = read_json(&meta_path(dir, chain))?;
    let (header, rows) = read_draws_csv(&draws_path(dir, chain))?;
    if header.last().map(String::as_str) != Some("deviance") {
        return Err(Error::SchemaError("draw file lacks a deviance column".into()));
    }
    let mut params = Vec::with_capacity(rows.len());
    let mut deviance = Vec::with_capacity(rows.len());
    for row in rows {
        let (vals, dev) = row.split_at(row.len() - 1);
        params.push(SdSemParams::from_values(&meta.spec, vals, &meta.ssvs)?);
        deviance.push(dev[0]);
    }
    let factors = read_factors_csv(&factors_path(dir, chain))?;
    if factors.len() != params.len() {
        return Err(dim_err(format!("{} factor paths for {} draws", factors.len(), params.len())));
    }
    Ok((PosteriorDraws { params, factors, deviance, meta: meta.chain.clone() }, meta))
}

/// All chains `0, 1, …` present in `dir`.
pub fn load_chains(dir: &Path) -> Result<Vec<(PosteriorDraws, ChainFileMeta)>> {
    let mut out = Vec::new();
    while meta_path(dir, out.len()).exists() {
        out.push(load_chain(dir, out.len())?);
    }
    if out.is_empty() {
        return Err(Error::InvalidInput(format!("no chain files in {}", dir.display())));
    }
    Ok(out)
}
