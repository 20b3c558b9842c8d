//! Self-describing binary checkpoints, little-endian throughout:
//!
//! ```text
//! magic "GDXM" | version u16
//! arch block:  len u32 | input_h u32 | input_w u32 | kernel u32 | padding u8
//!              | n_conv u32 | filters u32… | n_pool u32 | pool_after u32…
//!              | n_drop u32 | dropouts f64… | dense u32 | classes u32
//! optimizer:   rho f64 | epsilon f64
//! tensors:     count u32, then 3·count tensors (params, E[g²], E[Δx²]),
//!              each as ndim u32 | dims u32… | f32 values
//! trailer:     SHA-256 of every preceding byte
//! ```

use std::path::Path;

use sha2::{Digest, Sha256};

use super::{ArchConfig, ModelError, NetworkParams, Result};
use crate::tensor::{Adadelta, AdadeltaState, Padding, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"GDXM";
const VERSION: u16 = 1;
// Bounds keep a hostile header from requesting absurd allocations.
const MAX_DIM: u32 = 1 << 20;
const MAX_LIST: u32 = 64;
const DIGEST_LEN: usize = 32;

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u32).to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn tensor(&mut self, t: &Tensor<f32>) {
        self.u32(t.shape().len());
        for &d in t.shape() {
            self.u32(d);
        }
        for v in t.data() {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
    }
}

fn encode_arch(arch: &ArchConfig) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.u32(arch.input_height);
    w.u32(arch.input_width);
    w.u32(arch.kernel);
    w.u8(match arch.padding {
        Padding::Same => 0,
        Padding::Valid => 1,
    });
    w.u32(arch.conv_filters.len());
    arch.conv_filters.iter().for_each(|&f| w.u32(f));
    w.u32(arch.pool_after.len());
    arch.pool_after.iter().for_each(|&p| w.u32(p));
    w.u32(arch.dropouts.len());
    arch.dropouts.iter().for_each(|&d| w.f64(d));
    w.u32(arch.dense_units);
    w.u32(arch.output_classes);
    w.0
}

pub fn encode_checkpoint(params: &NetworkParams<f32>) -> Vec<u8> {
    let mut w = Writer(Vec::with_capacity(12 * params.param_count() + 256));
    w.0.extend_from_slice(CHECKPOINT_MAGIC);
    w.u16(VERSION);
    let arch = encode_arch(&params.arch);
    w.u32(arch.len());
    w.0.extend_from_slice(&arch);
    w.f64(params.optimizer.config.rho);
    w.f64(params.optimizer.config.epsilon);
    w.u32(params.tensors.len());
    for t in params
        .tensors
        .iter()
        .chain(&params.optimizer.accum_grad_sq)
        .chain(&params.optimizer.accum_update_sq)
    {
        w.tensor(t);
    }
    let digest = Sha256::digest(&w.0);
    w.0.extend_from_slice(&digest);
    w.0
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

fn corrupt(msg: impl Into<String>) -> ModelError {
    ModelError::Corrupt(msg.into())
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| corrupt(format!("truncated at byte {}", self.pos)))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn bounded(&mut self, max: u32, what: &str) -> Result<usize> {
        let v = self.u32()?;
        if v > max {
            return Err(corrupt(format!("{what} = {v} exceeds {max}")));
        }
        Ok(v as usize)
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn tensor(&mut self, expected: &[usize]) -> Result<Tensor<f32>> {
        let ndim = self.bounded(8, "tensor rank")?;
        let shape = (0..ndim)
            .map(|_| self.bounded(u32::MAX, "dim"))
            .collect::<Result<Vec<_>>>()?;
        if shape != expected {
            return Err(corrupt(format!("tensor shape {shape:?}, architecture needs {expected:?}")));
        }
        let bytes_len = shape
            .iter()
            .try_fold(4usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| corrupt("tensor too large"))?;
        let bytes = self.take(bytes_len)?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        Tensor::from_vec(&shape, data).map_err(|e| corrupt(e.to_string()))
    }
}

fn decode_arch(r: &mut Reader<'_>) -> Result<ArchConfig> {
    let input_height = r.bounded(MAX_DIM, "input height")?;
    let input_width = r.bounded(MAX_DIM, "input width")?;
    let kernel = r.bounded(MAX_DIM, "kernel")?;
    let padding = match r.u8()? {
        0 => Padding::Same,
        1 => Padding::Valid,
        other => return Err(corrupt(format!("padding tag {other}"))),
    };
    let n = r.bounded(MAX_LIST, "conv count")?;
    let conv_filters = (0..n)
        .map(|_| r.bounded(MAX_DIM, "filters"))
        .collect::<Result<Vec<_>>>()?;
    let n = r.bounded(MAX_LIST, "pool count")?;
    let pool_after = (0..n)
        .map(|_| r.bounded(MAX_LIST, "pool index"))
        .collect::<Result<Vec<_>>>()?;
    let n = r.bounded(MAX_LIST, "dropout count")?;
    let dropouts = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    let dense_units = r.bounded(MAX_DIM, "dense units")?;
    let output_classes = r.bounded(MAX_DIM, "classes")?;
    let arch = ArchConfig {
        input_height,
        input_width,
        conv_filters,
        kernel,
        pool_after,
        dropouts,
        dense_units,
        output_classes,
        padding,
    };
    arch.validate().map_err(|e| corrupt(e.to_string()))?;
    Ok(arch)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<NetworkParams<f32>> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(ModelError::Checkpoint(format!(
            "format version {version}, this build reads {VERSION}"
        )));
    }
    let body_len = bytes
        .len()
        .checked_sub(DIGEST_LEN)
        .filter(|&n| n >= r.pos)
        .ok_or_else(|| corrupt("truncated before checksum"))?;
    let (body, digest) = bytes.split_at(body_len);
    if Sha256::digest(body).as_slice() != digest {
        return Err(corrupt("checksum mismatch"));
    }
    let bytes = body;
    let mut r = Reader { buf: bytes, pos: r.pos };
    let arch_len = r.u32()? as usize;
    let arch_bytes = r.take(arch_len)?;
    let mut ar = Reader { buf: arch_bytes, pos: 0 };
    let arch = decode_arch(&mut ar)?;
    if ar.pos != arch_bytes.len() {
        return Err(corrupt("trailing bytes in architecture block"));
    }
    let config = Adadelta {
        rho: r.f64()?,
        epsilon: r.f64()?,
    };
    let shapes = arch.param_shapes();
    let count = r.u32()? as usize;
    if count != shapes.len() {
        return Err(corrupt(format!(
            "{count} tensors for an architecture with {}",
            shapes.len()
        )));
    }
    let mut read_set = || shapes.iter().map(|s| r.tensor(s)).collect::<Result<Vec<_>>>();
    let tensors = read_set()?;
    let accum_grad_sq = read_set()?;
    let accum_update_sq = read_set()?;
    if r.pos != bytes.len() {
        return Err(corrupt(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(NetworkParams {
        arch,
        tensors,
        optimizer: AdadeltaState {
            config,
            accum_grad_sq,
            accum_update_sq,
        },
    })
}

pub fn save_checkpoint(params: &NetworkParams<f32>, path: &Path) -> Result<()> {
    std::fs::write(path, encode_checkpoint(params))
        .map_err(|e| ModelError::Io(format!("{}: {e}", path.display())))
}

/// Loads a checkpoint; when `expected` is given the embedded architecture
/// must match it.
pub fn load_checkpoint(path: &Path, expected: Option<&ArchConfig>) -> Result<NetworkParams<f32>> {
    let bytes =
        std::fs::read(path).map_err(|e| ModelError::Io(format!("{}: {e}", path.display())))?;
    let params = decode_checkpoint(&bytes)?;
    if let Some(arch) = expected {
        if *arch != params.arch {
            return Err(ModelError::Checkpoint(format!(
                "checkpoint holds [{}], expected [{arch}]",
                params.arch
            )));
        }
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_network, predict_patch};

    fn arch() -> ArchConfig {
        ArchConfig {
            input_height: 8,
            input_width: 8,
            conv_filters: vec![2, 3, 2, 3],
            dense_units: 5,
            ..ArchConfig::default()
        }
    }

    fn trained_like() -> NetworkParams<f32> {
        let mut net = build_network::<f32>(arch(), 11).unwrap();
        for (i, t) in net.optimizer.accum_grad_sq.iter_mut().enumerate() {
            t.fill(0.25 * i as f32 + 1e-9);
        }
        for t in net.optimizer.accum_update_sq.iter_mut() {
            t.fill(f32::MIN_POSITIVE);
        }
        net
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let net = trained_like();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.gdxm");
        save_checkpoint(&net, &path).unwrap();
        let back = load_checkpoint(&path, Some(&arch())).unwrap();
        assert_eq!(back, net);
        let gray = [123u8; 64];
        assert_eq!(
            predict_patch(&back, &gray).unwrap().map(f32::to_bits),
            predict_patch(&net, &gray).unwrap().map(f32::to_bits)
        );
    }

    #[test]
    fn flipped_magic_is_corruption() {
        let mut bytes = encode_checkpoint(&trained_like());
        bytes[0] ^= 0xff;
        assert!(matches!(decode_checkpoint(&bytes), Err(ModelError::Corrupt(_))));
    }

    #[test]
    fn truncation_and_trailing_bytes_are_corruption() {
        let bytes = encode_checkpoint(&trained_like());
        for cut in [3, 6, 20, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(decode_checkpoint(&bytes[..cut]), Err(ModelError::Corrupt(_))), "{cut}");
        }
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(decode_checkpoint(&long), Err(ModelError::Corrupt(_))));
    }

    #[test]
    fn any_flipped_payload_byte_is_corruption() {
        let bytes = encode_checkpoint(&trained_like());
        for at in (6..bytes.len()).step_by(97) {
            let mut bad = bytes.clone();
            bad[at] ^= 0x01;
            assert!(matches!(decode_checkpoint(&bad), Err(ModelError::Corrupt(_))), "{at}");
        }
    }

    #[test]
    fn version_and_arch_mismatch_are_checkpoint_errors() {
        let mut bytes = encode_checkpoint(&trained_like());
        bytes[4] = 7;
        assert!(matches!(decode_checkpoint(&bytes), Err(ModelError::Checkpoint(_))));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.gdxm");
        save_checkpoint(&trained_like(), &path).unwrap();
        let other = ArchConfig { dense_units: 6, ..arch() };
        assert!(matches!(load_checkpoint(&path, Some(&other)), Err(ModelError::Checkpoint(_))));
    }
}
