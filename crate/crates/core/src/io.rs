//! File formats.
//!
//! * Ensemble CSV: long format `path,t,mode,value`, preceded by `#` comment
//!   lines carrying `schema_version` and `config_hash`.
//! * Ensemble binary: three little-endian `u64` (`n_paths`, `n_steps`,
//!   `n_modes`) followed by `f64` little-endian values ordered
//!   `[path][time][mode]` with `n_steps + 1` time nodes.
//! * Riccati CSV: `t,i,j,value`.
//! * JSON documents: an object with `schema_version`, `config_hash` and the payload fields.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::forward::{PathEnsemble, TimeGrid};
use crate::riccati::RiccatiSolution;

pub const SCHEMA_VERSION: &str = "1.0";

/// SHA-256 of the canonical serialization of a configuration.
pub fn config_hash<T: Serialize>(config: &T) -> Result<String> {
    let bytes = serde_json::to_vec(config)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    schema_version: &'a str,
    config_hash: &'a str,
    #[serde(flatten)]
    body: &'a T,
}

pub fn write_json<T: Serialize>(path: &Path, config_hash: &str, body: &T) -> Result<()> {
    let env = Envelope {
        schema_version: SCHEMA_VERSION,
        config_hash,
        body,
    };
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, &env)?;
    w.write_all(b"\n")?;
    Ok(())
}

fn comment_header(w: &mut impl Write, config_hash: &str) -> Result<()> {
    writeln!(w, "# schema_version={SCHEMA_VERSION}")?;
    writeln!(w, "# config_hash={config_hash}")?;
    Ok(())
}

pub fn write_ensemble_csv(path: &Path, config_hash: &str, ens: &PathEnsemble) -> Result<()> {
    let mut file = BufWriter::new(File::create(path)?);
    comment_header(&mut file, config_hash)?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["path", "t", "mode", "value"])?;
    for i in 0..ens.n_paths {
        for (m, s) in ens.states.iter().enumerate() {
            let t = ens.grid.node(m).to_string();
            for k in 0..ens.n_modes {
                w.write_record([i.to_string(), t.clone(), k.to_string(), format!("{:e}", s[(i, k)])])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_ensemble_binary(path: &Path, ens: &PathEnsemble) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for v in [ens.n_paths as u64, ens.grid.n_steps() as u64, ens.n_modes as u64] {
        w.write_all(&v.to_le_bytes())?;
    }
    for i in 0..ens.n_paths {
        for s in &ens.states {
            for k in 0..ens.n_modes {
                w.write_all(&s[(i, k)].to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a binary dump; the horizon is not stored and must be supplied.
pub fn read_ensemble_binary(path: &Path, horizon: f64) -> Result<PathEnsemble> {
    let mut r = BufReader::new(File::open(path)?);
    let mut word = [0u8; 8];
    let mut header = [0usize; 3];
    for h in header.iter_mut() {
        r.read_exact(&mut word)?;
        *h = u64::from_le_bytes(word) as usize;
    }
    let [n_paths, n_steps, n_modes] = header;
    let grid = TimeGrid::new(horizon, n_steps)?;
    let mut states = vec![DMatrix::zeros(n_paths, n_modes); n_steps + 1];
    for i in 0..n_paths {
        for s in states.iter_mut() {
            for k in 0..n_modes {
                r.read_exact(&mut word)?;
                s[(i, k)] = f64::from_le_bytes(word);
            }
        }
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::Config(format!("{} trailing bytes in binary ensemble", rest.len())));
    }
    Ok(PathEnsemble {
        grid,
        n_paths,
        n_modes,
        seed: None,
        states,
    })
}

pub fn write_riccati_csv(path: &Path, config_hash: &str, sol: &RiccatiSolution) -> Result<()> {
    let mut file = BufWriter::new(File::create(path)?);
    comment_header(&mut file, config_hash)?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["t", "i", "j", "value"])?;
    for (m, p) in sol.p.iter().enumerate() {
        let t = sol.grid.node(m).to_string();
        for i in 0..p.nrows() {
            for j in 0..p.ncols() {
                w.write_record([t.clone(), i.to_string(), j.to_string(), format!("{:e}", p[(i, j)])])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Time series with named columns, one row per grid node.
pub fn write_series_csv(path: &Path, config_hash: &str, grid: TimeGrid, columns: &[(&str, &[f64])]) -> Result<()> {
    let mut file = BufWriter::new(File::create(path)?);
    comment_header(&mut file, config_hash)?;
    let mut w = csv::Writer::from_writer(file);
    let mut header = vec!["t".to_string()];
    header.extend(columns.iter().map(|(n, _)| n.to_string()));
    w.write_record(&header)?;
    for m in 0..grid.n_nodes() {
        let mut row = vec![grid.node(m).to_string()];
        row.extend(columns.iter().map(|(_, v)| format!("{:e}", v[m])));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
