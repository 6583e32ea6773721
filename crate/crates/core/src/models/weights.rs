//! Binary weight files.
//!
//! ```text
//! "DFSMC1\n"
//! "<arch-tag> input=<c>x<h>x<w>\n"
//! repeated: u32 name length, UTF-8 name, u8 rank, rank x u32 extents,
//!           f64 values (row-major)
//! u64 checksum: wrapping sum of every value's bit pattern
//! ```
//! All integers and floats are little-endian.

use std::fs;
use std::path::Path;

use super::net::{build_model, Arch, ModelConfig, NetModel};
use crate::error::{Error, Result};
use crate::nncore::Tensor;

const MAGIC: &[u8] = b"DFSMC1\n";
const MAGIC_STEM: &[u8] = b"DFSMC";

pub fn encode_weights(model: &NetModel) -> Vec<u8> {
    let [c, h, w] = model.config.input;
    let mut out = MAGIC.to_vec();
    out.extend_from_slice(format!("{} input={c}x{h}x{w}\n", model.arch).as_bytes());
    let mut checksum = 0u64;
    for (name, t) in model.params() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(t.rank() as u8);
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in t.data() {
            checksum = checksum.wrapping_add(v.to_bits());
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.extend_from_slice(&checksum.to_le_bytes());
    out
}

pub fn save_weights(model: &NetModel, path: &Path) -> Result<()> {
    crate::pipeline::write_atomic(path, &encode_weights(model))
}

pub fn load_weights(path: &Path) -> Result<NetModel> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_weights(&bytes)
}

/// Load and insist on a particular architecture.
pub fn load_weights_as(arch: Arch, path: &Path) -> Result<NetModel> {
    let model = load_weights(path)?;
    if model.arch != arch {
        return Err(Error::WeightFile(format!(
            "architecture mismatch: file holds {}, expected {arch}",
            model.arch
        )));
    }
    Ok(model)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::WeightFile("truncated file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

fn parse_input(spec: &str) -> Option<[usize; 3]> {
    let dims: Vec<usize> = spec
        .split('x')
        .map(|d| d.parse().ok())
        .collect::<Option<_>>()?;
    dims.try_into().ok()
}

pub fn decode_weights(bytes: &[u8]) -> Result<NetModel> {
    if !bytes.starts_with(MAGIC) {
        if bytes.starts_with(MAGIC_STEM) {
            return Err(Error::WeightFile("unsupported format version".into()));
        }
        return Err(Error::BadMagic);
    }
    let mut r = Reader {
        bytes,
        pos: MAGIC.len(),
    };
    let line_end = bytes[r.pos..]
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::WeightFile("missing architecture line".into()))?;
    let line = std::str::from_utf8(r.take(line_end + 1)?)
        .map_err(|_| Error::WeightFile("architecture line is not UTF-8".into()))?
        .trim_end();
    let mut parts = line.split_whitespace();
    let arch: Arch = parts
        .next()
        .ok_or_else(|| Error::WeightFile("empty architecture line".into()))?
        .parse()?;
    let input = parts
        .next()
        .and_then(|p| p.strip_prefix("input="))
        .and_then(parse_input)
        .ok_or_else(|| Error::WeightFile(format!("bad architecture line {line:?}")))?;

    let mut records: Vec<(String, Tensor)> = Vec::new();
    let mut checksum = 0u64;
    while r.remaining() > 8 {
        let n = r.u32()? as usize;
        let name = String::from_utf8(r.take(n)?.to_vec())
            .map_err(|_| Error::WeightFile("parameter name is not UTF-8".into()))?;
        let rank = r.take(1)?[0] as usize;
        let shape = (0..rank)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let count = shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
        let count = count.ok_or_else(|| Error::WeightFile(format!("{name}: extents overflow")))?;
        let raw = r.take(
            count
                .checked_mul(8)
                .ok_or_else(|| Error::WeightFile("overflow".into()))?,
        )?;
        let values: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        for v in &values {
            checksum = checksum.wrapping_add(v.to_bits());
        }
        let t =
            Tensor::new(shape, values).map_err(|e| Error::WeightFile(format!("{name}: {e}")))?;
        records.push((name, t));
    }
    if r.remaining() != 8 {
        return Err(Error::WeightFile("truncated file".into()));
    }
    let stored = u64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
    if stored != checksum {
        return Err(Error::WeightFile("checksum mismatch".into()));
    }

    let lookup = |name: &str| records.iter().find(|(n, _)| n == name).map(|(_, t)| t);
    let head = lookup("head.weight")
        .ok_or_else(|| Error::WeightFile(format!("no head.weight for {arch}")))?;
    let fc =
        lookup("fc.weight").ok_or_else(|| Error::WeightFile(format!("no fc.weight for {arch}")))?;
    if head.rank() != 2 || fc.rank() != 2 {
        return Err(Error::WeightFile(
            "fully connected weights must be rank 2".into(),
        ));
    }
    let config = ModelConfig {
        input,
        classes: head.shape()[0],
        features: fc.shape()[0],
        seed: 0,
    };
    let mut model = build_model(arch, config)?;
    let expected: Vec<(String, Vec<usize>)> = model
        .params()
        .into_iter()
        .map(|(n, t)| (n, t.shape().to_vec()))
        .collect();
    if expected.len() != records.len() {
        return Err(Error::WeightFile(format!(
            "shape mismatch for {arch}: expected {} parameter tensors, found {}",
            expected.len(),
            records.len()
        )));
    }
    for ((name, shape), (rname, t)) in expected.iter().zip(&records) {
        if name != rname || shape.as_slice() != t.shape() {
            return Err(Error::WeightFile(format!(
                "shape mismatch for {arch}: expected {name} {shape:?}, found {rname} {:?}",
                t.shape()
            )));
        }
    }
    for (dst, (_, src)) in model.params_mut().into_iter().zip(records) {
        *dst = src;
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(arch: Arch) -> NetModel {
        build_model(
            arch,
            ModelConfig {
                input: [1, 8, 8],
                classes: 4,
                features: 5,
                seed: 11,
            },
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        for arch in [Arch::MiniResNet, Arch::MiniDenseNet] {
            let m = model(arch);
            let back = decode_weights(&encode_weights(&m)).unwrap();
            assert_eq!(back.arch, m.arch);
            assert_eq!(back.params(), m.params());
        }
    }

    #[test]
    fn bad_magic() {
        let mut bytes = encode_weights(&model(Arch::MiniResNet));
        bytes[0] = b'X';
        assert_eq!(
            decode_weights(&bytes).unwrap_err().to_string(),
            "not a dfsmc weight file"
        );
        bytes[0] = b'D';
        bytes[5] = b'9';
        assert!(decode_weights(&bytes)
            .unwrap_err()
            .to_string()
            .contains("version"));
    }

    #[test]
    fn truncation_and_corruption() {
        let bytes = encode_weights(&model(Arch::MiniDenseNet));
        assert!(decode_weights(&bytes[..bytes.len() - 3]).is_err());
        let mut flipped = bytes.clone();
        let i = flipped.len() - 20;
        flipped[i] ^= 1;
        assert!(decode_weights(&flipped)
            .unwrap_err()
            .to_string()
            .contains("checksum"));
    }

    #[test]
    fn tag_swap_is_a_shape_error() {
        let mut bytes = encode_weights(&model(Arch::MiniResNet));
        let text = b"mini-resnet ";
        let pos = bytes.windows(text.len()).position(|w| w == text).unwrap();
        bytes.splice(pos..pos + text.len(), b"mini-densenet ".iter().copied());
        let err = decode_weights(&bytes).unwrap_err().to_string();
        assert!(err.contains("mini-densenet"), "{err}");
    }
}
