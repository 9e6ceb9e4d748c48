//! On-disk formats.
//!
//! * Graph datasets: JSON lines `{"n", "edges": [[i, j, w], …], "signal": [[…], …], "label"}`.
//! * Point-cloud datasets: JSON lines `{"points": [[x, y, z], …], "label"}`.
//! * Dataset manifest: JSON with generator, config, seed, sample count and
//!   the SHA-256 of the data file.
//! * Checkpoints: the 8 bytes `ANISOCK1`, a little-endian `u64` header
//!   length, a JSON header, then every parameter as a little-endian `f64`.
//! * Decomposition cache: `ANISODC1`, then little-endian `u64` and `f64`
//!   fields (see [`write_decomposition`]).
//! * Decision audit log: JSON lines of [`DecisionRecord`].
//!
//! Floats in JSON are printed in shortest round-trip form and parsed
//! exactly, so writing and reading a dataset gives bitwise-equal values.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::sync::Arc;

use anisocanon::data::{LabeledCloud, LabeledGraph};
use anisocanon::pointcloud::PointCloud;
use anisocanon::spectral::{adjacency_from_edges, BandDecomposition, BandPlan, Graph};
use anisocanon::Matrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::dataset::{Dataset, GeneratorInfo};
use crate::models::{build_model, AnyModel, ModelShape};
use crate::error::{LabError, LabResult};
use crate::train::DecisionRecord;

#[derive(Serialize, Deserialize)]
struct GraphLine {
    n: usize,
    edges: Vec<(usize, usize, f64)>,
    signal: Vec<Vec<f64>>,
    label: usize,
}

#[derive(Serialize, Deserialize)]
struct CloudLine {
    points: Vec<[f64; 3]>,
    label: usize,
}

fn rows_of(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

fn matrix_from_rows(rows: &[Vec<f64>], line: usize) -> LabResult<Matrix> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(LabError::Data(format!("line {line}: ragged rows")));
    }
    Ok(Matrix::from_rows(rows))
}

pub fn write_graphs(w: &mut impl Write, graphs: &[LabeledGraph]) -> LabResult<()> {
    for g in graphs {
        let line = GraphLine {
            n: g.graph.n(),
            edges: g.graph.edges(),
            signal: rows_of(g.graph.signal()),
            label: g.label,
        };
        serde_json::to_writer(&mut *w, &line)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Node count and edge list with weights as raw bits.
type EdgeKey = (usize, Vec<(usize, usize, u64)>);

/// Reads graph lines. Graphs with identical edge lists share one adjacency
/// allocation, so decomposition caches see them as one graph.
pub fn read_graphs(r: impl Read) -> LabResult<Vec<LabeledGraph>> {
    let mut interned: HashMap<EdgeKey, Arc<Matrix>> = HashMap::new();
    let mut out = Vec::new();
    for (i, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let g: GraphLine = serde_json::from_str(&line)?;
        if g.signal.len() != g.n {
            return Err(LabError::Data(format!("line {}: signal has {} rows for {} nodes", i + 1, g.signal.len(), g.n)));
        }
        let key = (g.n, g.edges.iter().map(|&(a, b, w)| (a, b, w.to_bits())).collect::<Vec<_>>());
        let adjacency = match interned.get(&key) {
            Some(a) => a.clone(),
            None => {
                let a = Arc::new(adjacency_from_edges(g.n, &g.edges)?);
                interned.insert(key, a.clone());
                a
            }
        };
        let signal = matrix_from_rows(&g.signal, i + 1)?;
        out.push(LabeledGraph { graph: Graph::new(adjacency, signal)?, label: g.label });
    }
    Ok(out)
}

pub fn write_clouds(w: &mut impl Write, clouds: &[LabeledCloud]) -> LabResult<()> {
    for c in clouds {
        let p = c.cloud.points();
        let line = CloudLine { points: (0..p.rows()).map(|r| [p[(r, 0)], p[(r, 1)], p[(r, 2)]]).collect(), label: c.label };
        serde_json::to_writer(&mut *w, &line)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_clouds(r: impl Read) -> LabResult<Vec<LabeledCloud>> {
    let mut out = Vec::new();
    for line in BufReader::new(r).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let c: CloudLine = serde_json::from_str(&line)?;
        let rows: Vec<Vec<f64>> = c.points.iter().map(|p| p.to_vec()).collect();
        let m = if rows.is_empty() { Matrix::zeros(0, 3) } else { Matrix::from_rows(&rows) };
        out.push(LabeledCloud { cloud: PointCloud::new(m)?, label: c.label });
    }
    Ok(out)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub generator: String,
    /// `graphs` or `clouds`.
    pub kind: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub samples: usize,
    pub data_file: String,
    pub sha256: String,
    pub notes: Vec<String>,
}

pub const DATA_FILE: &str = "data.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Writes `data.jsonl` and `manifest.json` into `dir`.
pub fn write_dataset(dir: &Path, data: &Dataset, info: &GeneratorInfo) -> LabResult<DatasetManifest> {
    fs::create_dir_all(dir)?;
    let mut bytes = Vec::new();
    let kind = match data {
        Dataset::Graphs(g) => {
            write_graphs(&mut bytes, g)?;
            "graphs"
        }
        Dataset::Clouds(c) => {
            write_clouds(&mut bytes, c)?;
            "clouds"
        }
    };
    fs::write(dir.join(DATA_FILE), &bytes)?;
    let manifest = DatasetManifest {
        generator: info.generator.into(),
        kind: kind.into(),
        config: info.config.clone(),
        seed: info.seed,
        samples: data.len(),
        data_file: DATA_FILE.into(),
        sha256: sha256_hex(&bytes),
        notes: info.notes.iter().map(|s| s.to_string()).collect(),
    };
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

/// Reads a dataset directory, refusing data whose checksum differs from
/// the manifest.
pub fn read_dataset(dir: &Path) -> LabResult<(Dataset, DatasetManifest)> {
    let manifest: DatasetManifest = serde_json::from_slice(&fs::read(dir.join(MANIFEST_FILE))?)?;
    let bytes = fs::read(dir.join(&manifest.data_file))?;
    let actual = sha256_hex(&bytes);
    if actual != manifest.sha256 {
        return Err(LabError::Data(format!("checksum mismatch: manifest {}, file {actual}", manifest.sha256)));
    }
    let data = match manifest.kind.as_str() {
        "graphs" => Dataset::Graphs(read_graphs(&bytes[..])?),
        "clouds" => Dataset::Clouds(read_clouds(&bytes[..])?),
        other => return Err(LabError::Data(format!("unknown dataset kind `{other}`"))),
    };
    if data.len() != manifest.samples {
        return Err(LabError::Data(format!("manifest lists {} samples, file has {}", manifest.samples, data.len())));
    }
    Ok((data, manifest))
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"ANISOCK1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub model: String,
    /// The experiment config in its text form, enough to rebuild the model.
    pub config: String,
    pub j_dims: Vec<usize>,
    pub channels: usize,
    pub classes: usize,
    pub init_seed: u64,
    /// Cross-validation fold the model was trained for.
    pub fold: usize,
    pub layer_shapes: Vec<(usize, usize)>,
    pub activation: String,
    pub byte_order: String,
    pub num_params: usize,
}

pub fn write_checkpoint(w: &mut impl Write, header: &CheckpointHeader, params: &[f64]) -> LabResult<()> {
    if header.num_params != params.len() {
        return Err(LabError::Data("header parameter count differs from the parameters".into()));
    }
    let json = serde_json::to_vec(header)?;
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    for p in params {
        w.write_all(&p.to_le_bytes())?;
    }
    Ok(())
}

fn read_u64(r: &mut impl Read) -> LabResult<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> LabResult<f64> {
    Ok(f64::from_bits(read_u64(r)?))
}

fn read_magic(r: &mut impl Read, magic: &[u8; 8]) -> LabResult<()> {
    let mut m = [0u8; 8];
    r.read_exact(&mut m)?;
    if &m != magic {
        return Err(LabError::Data(format!("bad magic, expected {}", String::from_utf8_lossy(magic))));
    }
    Ok(())
}

/// Largest length field accepted when reading.
const MAX_LEN: u64 = 1 << 32;

fn read_len(r: &mut impl Read) -> LabResult<usize> {
    let n = read_u64(r)?;
    if n > MAX_LEN {
        return Err(LabError::Data(format!("length field {n} is implausible")));
    }
    Ok(n as usize)
}

pub fn read_checkpoint(r: &mut impl Read) -> LabResult<(CheckpointHeader, Vec<f64>)> {
    read_magic(r, CHECKPOINT_MAGIC)?;
    let len = read_len(r)?;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json)?;
    let header: CheckpointHeader = serde_json::from_slice(&json)?;
    let params = (0..header.num_params).map(|_| read_f64(r)).collect::<LabResult<Vec<_>>>()?;
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(LabError::Data(format!("{} trailing bytes after the parameters", rest.len())));
    }
    Ok((header, params))
}

/// Writes a trained model with everything needed to rebuild it.
pub fn save_model(
    w: &mut impl Write,
    cfg: &ExperimentConfig,
    shape: &ModelShape,
    model: &AnyModel,
    init_seed: u64,
    fold: usize,
) -> LabResult<()> {
    let params = model.params();
    let header = CheckpointHeader {
        model: cfg.model.name().into(),
        config: cfg.to_text(),
        j_dims: shape.j_dims.clone(),
        channels: shape.channels,
        classes: shape.classes,
        init_seed,
        fold,
        layer_shapes: model.layer_shapes(),
        activation: "relu".into(),
        byte_order: "little-endian".into(),
        num_params: params.len(),
    };
    write_checkpoint(w, &header, &params)
}

/// Rebuilds the model described by a checkpoint and loads its parameters.
pub fn load_model(r: &mut impl Read) -> LabResult<(ExperimentConfig, ModelShape, AnyModel, CheckpointHeader)> {
    let (header, params) = read_checkpoint(r)?;
    let cfg = ExperimentConfig::parse(&header.config)?;
    let shape = ModelShape { j_dims: header.j_dims.clone(), channels: header.channels, classes: header.classes };
    let mut model = build_model(&cfg, &shape, header.init_seed)?;
    if model.layer_shapes() != header.layer_shapes {
        return Err(LabError::Data("checkpoint layer shapes differ from the rebuilt model".into()));
    }
    model.set_params(&params)?;
    Ok((cfg, shape, model, header))
}

const DECOMPOSITION_MAGIC: &[u8; 8] = b"ANISODC1";

/// Layout after the magic: plan fingerprint, boundary count, boundaries,
/// node count `n`, band count, then per band its dimension `m`, `m`
/// eigenvalues and the `n × m` basis in row-major order.
pub fn write_decomposition(w: &mut impl Write, plan: &BandPlan, dec: &BandDecomposition) -> LabResult<()> {
    w.write_all(DECOMPOSITION_MAGIC)?;
    w.write_all(&plan.fingerprint().to_le_bytes())?;
    w.write_all(&(plan.boundaries().len() as u64).to_le_bytes())?;
    for b in plan.boundaries() {
        w.write_all(&b.to_le_bytes())?;
    }
    w.write_all(&(dec.n() as u64).to_le_bytes())?;
    w.write_all(&(dec.band_count() as u64).to_le_bytes())?;
    for k in 0..dec.band_count() {
        let e = dec.eigenvalues(k);
        w.write_all(&(e.len() as u64).to_le_bytes())?;
        for v in e.iter().chain(dec.basis(k).data()) {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_decomposition(r: &mut impl Read) -> LabResult<(BandPlan, BandDecomposition)> {
    read_magic(r, DECOMPOSITION_MAGIC)?;
    let fingerprint = read_u64(r)?;
    let count = read_len(r)?;
    let boundaries = (0..count).map(|_| read_f64(r)).collect::<LabResult<Vec<_>>>()?;
    let plan = BandPlan::new(boundaries)?;
    if plan.fingerprint() != fingerprint {
        return Err(LabError::Data("band plan fingerprint mismatch".into()));
    }
    let n = read_len(r)?;
    let bands = read_len(r)?;
    let mut bases = Vec::with_capacity(bands);
    let mut eigenvalues = Vec::with_capacity(bands);
    for _ in 0..bands {
        let m = read_len(r)?;
        eigenvalues.push((0..m).map(|_| read_f64(r)).collect::<LabResult<Vec<_>>>()?);
        let data = (0..n * m).map(|_| read_f64(r)).collect::<LabResult<Vec<_>>>()?;
        bases.push(Matrix::from_vec(n, m, data));
    }
    Ok((plan, BandDecomposition::from_parts(n, bases, eigenvalues)?))
}

pub fn write_audit_log(w: &mut impl Write, records: &[DecisionRecord]) -> LabResult<()> {
    for r in records {
        serde_json::to_writer(&mut *w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
