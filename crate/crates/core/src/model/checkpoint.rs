//! Binary parameter checkpoints with a JSON sidecar.
//!
//! Layout: magic `DDCP`, format version, architecture header, then the
//! raw parameter arrays as little-endian f32 in declaration order. The
//! sidecar at `<path>.json` lists entry names and shapes so checkpoints
//! stay inspectable without this loader.

use super::{entry_specs, DdcParameters, ModelConfig, ModelVariant, ParamEntry};
use crate::error::{Error, Result};
use crate::nn::Tensor;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

const MAGIC: &[u8; 4] = b"DDCP";
const VERSION: u32 = 1;

/// Architecture fields stored in a checkpoint. Training-only knobs
/// (dropout, gin_epsilon, detach_struct) are not part of the weights and
/// take their defaults on load.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub version: u32,
    pub variant: ModelVariant,
    pub num_layers: usize,
    pub hidden: usize,
    pub feature_dim: usize,
    pub struct_dim: usize,
    pub num_classes: usize,
    pub param_count: usize,
}

impl CheckpointHeader {
    pub fn to_model_config(&self) -> ModelConfig {
        ModelConfig {
            variant: self.variant,
            num_layers: self.num_layers,
            hidden: self.hidden,
            feature_dim: self.feature_dim,
            struct_dim: self.struct_dim,
            num_classes: self.num_classes,
            dropout: super::default_dropout(),
            gin_epsilon: 0.0,
            detach_struct: false,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct SidecarEntry {
    name: String,
    shape: Vec<usize>,
    structural: bool,
    is_bias: bool,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    #[serde(flatten)]
    header: CheckpointHeader,
    entries: Vec<SidecarEntry>,
}

fn variant_code(v: ModelVariant) -> u8 {
    match v {
        ModelVariant::Ddc => 0,
        ModelVariant::Decoupled => 1,
        ModelVariant::Single => 2,
    }
}

fn variant_from_code(c: u8) -> Result<ModelVariant> {
    match c {
        0 => Ok(ModelVariant::Ddc),
        1 => Ok(ModelVariant::Decoupled),
        2 => Ok(ModelVariant::Single),
        other => Err(Error::Checkpoint(format!("unknown variant code {other}"))),
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".json");
    PathBuf::from(os)
}

/// Writes `params` to `path` and the shape sidecar to `<path>.json`.
/// `cfg` must be the config the parameters were built from.
pub fn save_checkpoint(params: &DdcParameters<f32>, cfg: &ModelConfig, path: &Path) -> Result<()> {
    let specs = entry_specs(cfg);
    if specs.len() != params.entries().len()
        || specs
            .iter()
            .zip(params.entries())
            .any(|(s, e)| s.name != e.name || s.shape != e.tensor.shape())
    {
        return Err(Error::Checkpoint(
            "parameters do not match the given model config".into(),
        ));
    }
    let header = CheckpointHeader {
        version: VERSION,
        variant: cfg.variant,
        num_layers: cfg.num_layers,
        hidden: cfg.hidden,
        feature_dim: cfg.feature_dim,
        struct_dim: cfg.struct_dim,
        num_classes: cfg.num_classes,
        param_count: params.param_count(),
    };

    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&[variant_code(cfg.variant)])?;
    for field in [
        header.num_layers,
        header.hidden,
        header.feature_dim,
        header.struct_dim,
        header.num_classes,
    ] {
        w.write_all(&(field as u32).to_le_bytes())?;
    }
    w.write_all(&(header.param_count as u64).to_le_bytes())?;
    for e in params.entries() {
        for &v in e.tensor.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;

    let sidecar = Sidecar {
        header,
        entries: params
            .entries()
            .iter()
            .map(|e| SidecarEntry {
                name: e.name.clone(),
                shape: e.tensor.shape().to_vec(),
                structural: e.structural,
                is_bias: e.is_bias,
            })
            .collect(),
    };
    let json = serde_json::to_string_pretty(&sidecar)?;
    std::fs::write(sidecar_path(path), json)?;
    Ok(())
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::Checkpoint(format!("truncated while reading {what}")))
}

fn read_u32(r: &mut impl Read, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

/// Loads a checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint(path: &Path) -> Result<(CheckpointHeader, DdcParameters<f32>)> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic, "magic")?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint(format!(
            "bad magic {magic:?}, expected {MAGIC:?}"
        )));
    }
    let version = read_u32(&mut r, "version")?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let mut vb = [0u8; 1];
    read_exact(&mut r, &mut vb, "variant")?;
    let variant = variant_from_code(vb[0])?;
    let num_layers = read_u32(&mut r, "num_layers")? as usize;
    let hidden = read_u32(&mut r, "hidden")? as usize;
    let feature_dim = read_u32(&mut r, "feature_dim")? as usize;
    let struct_dim = read_u32(&mut r, "struct_dim")? as usize;
    let num_classes = read_u32(&mut r, "num_classes")? as usize;
    let mut cb = [0u8; 8];
    read_exact(&mut r, &mut cb, "param_count")?;
    let param_count = u64::from_le_bytes(cb) as usize;

    let header = CheckpointHeader {
        version,
        variant,
        num_layers,
        hidden,
        feature_dim,
        struct_dim,
        num_classes,
        param_count,
    };
    let cfg = header.to_model_config();
    let specs = entry_specs(&cfg);
    let expected: usize = specs.iter().map(|s| s.shape.iter().product::<usize>()).sum();
    if expected != param_count {
        return Err(Error::Checkpoint(format!(
            "header claims {param_count} parameters but the architecture implies {expected}"
        )));
    }

    let mut entries = Vec::with_capacity(specs.len());
    for spec in specs {
        let len: usize = spec.shape.iter().product();
        let mut bytes = vec![0u8; len * 4];
        read_exact(&mut r, &mut bytes, &spec.name)?;
        let data: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        entries.push(ParamEntry {
            name: spec.name,
            structural: spec.structural,
            is_bias: spec.is_bias,
            tensor: Tensor::new(spec.shape, data).expect("consistent shape"),
        });
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::Checkpoint("trailing bytes after parameters".into()));
    }
    Ok((header, DdcParameters::from_entries(variant, entries)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::init_params;

    fn cfg() -> ModelConfig {
        ModelConfig {
            variant: ModelVariant::Ddc,
            num_layers: 3,
            hidden: 16,
            feature_dim: 4,
            struct_dim: 32,
            num_classes: 2,
            dropout: 0.5,
            gin_epsilon: 0.0,
            detach_struct: false,
        }
    }

    #[test]
    fn roundtrip_preserves_every_bit() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ddcp");
        let c = cfg();
        let mut params: DdcParameters<f32> = init_params(&c, 123).unwrap();
        for e in params.entries_mut() {
            if e.is_bias {
                for (i, v) in e.tensor.data_mut().iter_mut().enumerate() {
                    *v = i as f32 * 0.25 - 1.0;
                }
            }
        }
        save_checkpoint(&params, &c, &path).unwrap();
        let (header, loaded) = load_checkpoint(&path).unwrap();
        assert_eq!(header.param_count, params.param_count());
        assert_eq!(header.variant, ModelVariant::Ddc);
        assert_eq!(params, loaded);
    }

    #[test]
    fn sidecar_lists_names_and_shapes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ddcp");
        let c = cfg();
        let params: DdcParameters<f32> = init_params(&c, 1).unwrap();
        save_checkpoint(&params, &c, &path).unwrap();
        let text = std::fs::read_to_string(sidecar_path(&path)).unwrap();
        let json: serde_json::Value = serde_json::from_str(&text).unwrap();
        let entries = json["entries"].as_array().unwrap();
        assert_eq!(entries.len(), params.entries().len());
        assert_eq!(entries[0]["name"], "feature_init.weight");
        assert_eq!(entries[0]["shape"][0], 4);
        assert_eq!(json["param_count"], params.param_count());
        let struct_entry = entries
            .iter()
            .find(|e| e["name"] == "struct_init.weight")
            .unwrap();
        assert_eq!(struct_entry["structural"], true);
    }

    #[test]
    fn bad_magic_and_truncation_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ddcp");
        let c = cfg();
        let params: DdcParameters<f32> = init_params(&c, 1).unwrap();
        save_checkpoint(&params, &c, &path).unwrap();

        let bytes = std::fs::read(&path).unwrap();
        let garbled = dir.path().join("garbled.ddcp");
        let mut g = bytes.clone();
        g[0] = b'X';
        std::fs::write(&garbled, &g).unwrap();
        assert!(matches!(
            load_checkpoint(&garbled),
            Err(Error::Checkpoint(_))
        ));

        let short = dir.path().join("short.ddcp");
        std::fs::write(&short, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(load_checkpoint(&short), Err(Error::Checkpoint(_))));

        let missing = dir.path().join("nope.ddcp");
        assert!(matches!(
            load_checkpoint(&missing),
            Err(Error::MissingFile(_))
        ));
    }

    #[test]
    fn mismatched_config_is_rejected_on_save() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ddcp");
        let c = cfg();
        let params: DdcParameters<f32> = init_params(&c, 1).unwrap();
        let other = ModelConfig { hidden: 8, ..c };
        assert!(matches!(
            save_checkpoint(&params, &other, &path),
            Err(Error::Checkpoint(_))
        ));
    }
}
