//! Draw store: one directory per run holding `manifest.json`, the design,
//! tree JSON and one raw little-endian `f64` block per parameter.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{DesignData, ModelConfig};
use crate::sampler::{PosteriorDraws, RetainedDraw};
use crate::tree::{Ensemble, MoveStats};

const MAGIC: &[u8; 8] = b"TVPBLK01";
pub const MANIFEST: &str = "manifest.json";
const DESIGN: &str = "design.json";
const TREES: &str = "trees.json";
const FORMAT: &str = "tvpbart-draws";
const FORMAT_VERSION: u32 = 1;

/// Dense array with its shape, stored row-major (last index fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Block {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::Store(format!("shape {shape:?} does not match {} values", data.len())));
        }
        Ok(Block { shape, data })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 8 * (self.shape.len() + self.data.len()));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.shape.len() as u64).to_le_bytes());
        for d in &self.shape {
            out.extend_from_slice(&(*d as u64).to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let word = |i: usize| -> Result<[u8; 8]> {
            bytes
                .get(i..i + 8)
                .map(|s| s.try_into().expect("eight bytes"))
                .ok_or_else(|| Error::Store("truncated block".into()))
        };
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(Error::Store("not a draw block (bad magic)".into()));
        }
        let ndim = u64::from_le_bytes(word(8)?) as usize;
        let mut shape = Vec::with_capacity(ndim);
        for d in 0..ndim {
            shape.push(u64::from_le_bytes(word(16 + 8 * d)?) as usize);
        }
        let start = 16 + 8 * ndim;
        let n: usize = shape.iter().product();
        if bytes.len() != start + 8 * n {
            return Err(Error::Store(format!(
                "block of shape {shape:?} should hold {} bytes, found {}",
                start + 8 * n,
                bytes.len()
            )));
        }
        let data = (0..n).map(|i| f64::from_le_bytes(word(start + 8 * i).expect("checked length"))).collect();
        Ok(Block { shape, data })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockInfo {
    pub name: String,
    pub file: String,
    pub shape: Vec<usize>,
    pub sha256: String,
}

/// Run metadata written next to the draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub format_version: u32,
    pub software_version: String,
    pub config: ModelConfig,
    pub seed: u64,
    /// Content hashes of the input files, by role.
    pub inputs: BTreeMap<String, String>,
    pub sweeps: Vec<usize>,
    pub tree_moves: MoveStats,
    pub vol_moves: MoveStats,
    pub blocks: Vec<BlockInfo>,
    /// Hash over every stored file except the manifest.
    pub content_hash: String,
    pub started_at: String,
    pub finished_at: String,
}

/// Caller-supplied provenance of a run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunInfo {
    pub inputs: BTreeMap<String, String>,
    pub started_at: String,
    pub finished_at: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_hash(path: &Path) -> Result<String> {
    let mut f = fs::File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Current UTC time as RFC 3339.
pub fn timestamp() -> String {
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs() as i64)
        .unwrap_or(0);
    chrono::DateTime::from_timestamp(secs, 0)
        .map(|d| d.to_rfc3339())
        .unwrap_or_default()
}

fn stack<F: Fn(&RetainedDraw) -> Vec<f64>>(draws: &[RetainedDraw], inner: Vec<usize>, f: F) -> Result<Block> {
    let mut shape = vec![draws.len()];
    shape.extend(inner);
    let data = draws.iter().flat_map(f).collect();
    Block::new(shape, data)
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

fn blocks(p: &PosteriorDraws) -> Result<Vec<(&'static str, Block)>> {
    let d = &p.draws;
    let first = d.first().ok_or_else(|| Error::Store("no retained draws to store".into()))?;
    let (m, k, t) = (first.variables(), first.a.ncols(), first.periods());
    let (qq, qb) = (first.gamma.ncols(), first.lambda.first().map_or(0, |l| l.ncols()));
    Ok(vec![
        ("a", stack(d, vec![m, k], |x| row_major(&x.a))?),
        ("beta", stack(d, vec![m, t, k], |x| x.beta.iter().flat_map(row_major).collect())?),
        ("lambda", stack(d, vec![m, k, qb], |x| x.lambda.iter().flat_map(row_major).collect())?),
        ("v", stack(d, vec![m, k], |x| row_major(&x.v))?),
        ("gamma", stack(d, vec![m, qq], |x| row_major(&x.gamma))?),
        ("q", stack(d, vec![t, qq], |x| row_major(&x.q))?),
        ("log_r", stack(d, vec![t, qq], |x| row_major(&x.log_r))?),
        ("log_sigma2", stack(d, vec![t, m], |x| row_major(&x.log_sigma2))?),
        ("sv_params", stack(d, vec![m, 3], |x| row_major(&x.sv_params))?),
        ("loglik", Block::new(vec![p.loglik.nrows(), p.loglik.ncols()], row_major(&p.loglik))?),
    ])
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<String> {
    let mut f = fs::File::create(dir.join(name))?;
    f.write_all(bytes)?;
    Ok(sha256_hex(bytes))
}

/// Writes the draws into `dir` (created if needed) and returns the manifest.
pub fn write_store(dir: &Path, draws: &PosteriorDraws, info: &RunInfo) -> Result<RunManifest> {
    fs::create_dir_all(dir)?;
    let mut infos = Vec::new();
    let mut hasher = Sha256::new();
    for (name, block) in blocks(draws)? {
        let file = format!("{name}.bin");
        let sha = write_file(dir, &file, &block.to_bytes())?;
        hasher.update(sha.as_bytes());
        infos.push(BlockInfo {
            name: name.to_string(),
            file,
            shape: block.shape,
            sha256: sha,
        });
    }
    let design = serde_json::to_vec_pretty(&draws.design)?;
    hasher.update(write_file(dir, DESIGN, &design)?.as_bytes());
    let trees: Vec<&Vec<Vec<Ensemble>>> = draws.draws.iter().map(|d| &d.mean_trees).collect();
    hasher.update(write_file(dir, TREES, &serde_json::to_vec(&trees)?)?.as_bytes());
    let manifest = RunManifest {
        format: FORMAT.into(),
        format_version: FORMAT_VERSION,
        software_version: env!("CARGO_PKG_VERSION").into(),
        config: draws.config.clone(),
        seed: draws.config.seed,
        inputs: info.inputs.clone(),
        sweeps: draws.draws.iter().map(|d| d.sweep).collect(),
        tree_moves: draws.tree_stats,
        vol_moves: draws.vol_stats,
        blocks: infos,
        content_hash: hex::encode(hasher.finalize()),
        started_at: info.started_at.clone(),
        finished_at: info.finished_at.clone(),
    };
    write_file(dir, MANIFEST, &serde_json::to_vec_pretty(&manifest)?)?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<RunManifest> {
    let bytes = fs::read(dir.join(MANIFEST))
        .map_err(|e| Error::Store(format!("cannot read {}: {e}", dir.join(MANIFEST).display())))?;
    let m: RunManifest = serde_json::from_slice(&bytes)?;
    if m.format != FORMAT || m.format_version != FORMAT_VERSION {
        return Err(Error::Store(format!(
            "unsupported store format {} v{}",
            m.format, m.format_version
        )));
    }
    Ok(m)
}

fn read_checked(dir: &Path, file: &str, sha: Option<&str>) -> Result<Vec<u8>> {
    let bytes = fs::read(dir.join(file)).map_err(|e| Error::Store(format!("cannot read {file}: {e}")))?;
    if let Some(expected) = sha {
        if sha256_hex(&bytes) != expected {
            return Err(Error::Store(format!("{file} does not match its manifest hash")));
        }
    }
    Ok(bytes)
}

/// Reads a store written by [`write_store`], verifying hashes and shapes.
pub fn read_store(dir: &Path) -> Result<PosteriorDraws> {
    let manifest = read_manifest(dir)?;
    let mut map = BTreeMap::new();
    for b in &manifest.blocks {
        let block = Block::from_bytes(&read_checked(dir, &b.file, Some(&b.sha256))?)?;
        if block.shape != b.shape {
            return Err(Error::Store(format!("block {} has shape {:?}, manifest says {:?}", b.name, block.shape, b.shape)));
        }
        map.insert(b.name.clone(), block);
    }
    let get = |name: &str| map.get(name).ok_or_else(|| Error::Store(format!("missing block {name}")));
    let design: DesignData = serde_json::from_slice(&read_checked(dir, DESIGN, None)?)?;
    let trees: Vec<Vec<Vec<Ensemble>>> = serde_json::from_slice(&read_checked(dir, TREES, None)?)?;
    let a = get("a")?;
    let (s, m, k) = (a.shape[0], a.shape[1], a.shape[2]);
    let beta = get("beta")?;
    let t = beta.shape[2];
    let lambda = get("lambda")?;
    let qb = lambda.shape[3];
    let gamma = get("gamma")?;
    let qq = gamma.shape[2];
    let loglik = get("loglik")?;
    if trees.len() != s || manifest.sweeps.len() != s || design.periods() != t || design.variables() != m || design.regressors() != k {
        return Err(Error::Store("store blocks, trees and design disagree in size".into()));
    }
    let mat = |b: &Block, draw: usize, offset: usize, rows: usize, cols: usize| {
        let per_draw = b.data.len() / s;
        let start = draw * per_draw + offset;
        DMatrix::from_row_slice(rows, cols, &b.data[start..start + rows * cols])
    };
    let mut draws = Vec::with_capacity(s);
    for (i, tr) in trees.into_iter().enumerate() {
        draws.push(RetainedDraw {
            sweep: manifest.sweeps[i],
            a: mat(a, i, 0, m, k),
            beta: (0..m).map(|e| mat(beta, i, e * t * k, t, k)).collect(),
            lambda: (0..m).map(|e| mat(lambda, i, e * k * qb, k, qb)).collect(),
            v: mat(get("v")?, i, 0, m, k),
            mean_trees: tr,
            gamma: mat(gamma, i, 0, m, qq),
            q: mat(get("q")?, i, 0, t, qq),
            log_r: mat(get("log_r")?, i, 0, t, qq),
            log_sigma2: mat(get("log_sigma2")?, i, 0, t, m),
            sv_params: mat(get("sv_params")?, i, 0, m, 3),
        });
    }
    Ok(PosteriorDraws {
        config: manifest.config.clone(),
        design,
        draws,
        loglik: DMatrix::from_row_slice(loglik.shape[0], loglik.shape[1], &loglik.data),
        tree_stats: manifest.tree_moves,
        vol_stats: manifest.vol_moves,
    })
}
