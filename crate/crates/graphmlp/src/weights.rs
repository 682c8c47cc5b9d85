//! Weight files: magic "GMLP", version, JSON model config, then every
//! parameter tensor in canonical order as a shape-prefixed f64 payload.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use graphmlp_core::graph::SkeletonTopology;
use graphmlp_core::model::{param_specs, GraphMlpModel, ModelConfig};
use graphmlp_core::tensor::Tensor;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"GMLP";
pub const VERSION: u32 = 1;

pub fn write_weights<W: Write>(w: &mut W, model: &GraphMlpModel) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let config = serde_json::to_vec(model.config()).expect("config serializes");
    w.write_all(&(config.len() as u32).to_le_bytes())?;
    w.write_all(&config)?;
    w.write_all(&(model.params().len() as u32).to_le_bytes())?;
    for t in model.params() {
        w.write_all(&(t.rank() as u32).to_le_bytes())?;
        for &d in t.shape() {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn save_weights(path: &Path, model: &GraphMlpModel) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_weights(&mut w, model)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

fn take<R: Read, const N: usize>(r: &mut R, what: &str) -> Result<[u8; N]> {
    let mut b = [0; N];
    r.read_exact(&mut b)
        .map_err(|e| Error::Format(format!("truncated weight file while reading {what}: {e}")))?;
    Ok(b)
}

/// Header config and raw tensors, without any compatibility check.
pub fn read_weights<R: Read>(r: &mut R) -> Result<(ModelConfig, Vec<Tensor>)> {
    let magic: [u8; 4] = take(r, "magic")?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}, expected \"GMLP\"")));
    }
    let version = u32::from_le_bytes(take(r, "version")?);
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported weight file version {version} (expected {VERSION})"
        )));
    }
    let len = u32::from_le_bytes(take(r, "config length")?) as usize;
    let mut config = vec![0; len];
    r.read_exact(&mut config)
        .map_err(|e| Error::Format(format!("truncated weight file while reading config: {e}")))?;
    let config: ModelConfig =
        serde_json::from_slice(&config).map_err(|e| Error::Format(format!("config header: {e}")))?;
    let count = u32::from_le_bytes(take(r, "tensor count")?) as usize;
    let mut tensors = Vec::with_capacity(count.min(4096));
    for i in 0..count {
        let what = format!("tensor {i}");
        let rank = u32::from_le_bytes(take(r, &what)?) as usize;
        if rank == 0 || rank > 8 {
            return Err(Error::Format(format!("{what}: implausible rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(u32::from_le_bytes(take(r, &what)?) as usize);
        }
        let n: usize = shape.iter().product();
        let mut bytes = vec![0; n * 8];
        r.read_exact(&mut bytes)
            .map_err(|e| Error::Format(format!("truncated weight file in {what}: {e}")))?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        tensors.push(Tensor::new(&shape, data).map_err(|e| Error::Format(format!("{what}: {e}")))?);
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest).map_err(|e| Error::Format(e.to_string()))? != 0 {
        return Err(Error::Format("trailing bytes after last tensor".into()));
    }
    Ok((config, tensors))
}

fn read_file(path: &Path) -> Result<(ModelConfig, Vec<Tensor>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_weights(&mut BufReader::new(file)).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Loads a checkpoint for an expected configuration. Tensor shapes are
/// checked first so a mismatch names the offending tensor; remaining
/// header differences (other than the seed) are format errors.
pub fn load_weights(path: &Path, config: &ModelConfig, topo: &SkeletonTopology) -> Result<GraphMlpModel> {
    let (header, tensors) = read_file(path)?;
    check_shapes(config, &tensors)?;
    let strip = |c: &ModelConfig| ModelConfig { seed: 0, ..c.clone() };
    if strip(&header) != strip(config) {
        return Err(Error::Format(format!(
            "{}: header config {header:?} does not match expected {config:?}",
            path.display()
        )));
    }
    Ok(GraphMlpModel::from_params(config.clone(), topo, tensors)?)
}

/// Loads a checkpoint using the configuration stored in its header.
pub fn load_weights_from_header(path: &Path, topo: &SkeletonTopology) -> Result<GraphMlpModel> {
    let (header, tensors) = read_file(path)?;
    check_shapes(&header, &tensors)?;
    Ok(GraphMlpModel::from_params(header, topo, tensors)?)
}

fn check_shapes(config: &ModelConfig, tensors: &[Tensor]) -> Result<()> {
    let specs = param_specs(config);
    for (i, spec) in specs.iter().enumerate() {
        let found = tensors.get(i).map(|t| t.shape().to_vec()).unwrap_or_default();
        if found != spec.shape {
            return Err(graphmlp_core::Error::ParamShape {
                name: spec.name.clone(),
                expected: spec.shape.clone(),
                found,
            }
            .into());
        }
    }
    if tensors.len() != specs.len() {
        return Err(Error::Format(format!(
            "file holds {} tensors, configuration defines {}",
            tensors.len(),
            specs.len()
        )));
    }
    Ok(())
}
