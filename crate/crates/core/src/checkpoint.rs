//! Checkpoint formats.
//!
//! Binary: one ASCII header line
//! `varsolve-ckpt v1; d=..; N=..; L=..; role=..; seed=..`
//! followed by the flat parameter vector as little-endian f64 and a
//! trailing CRC32 (IEEE) of the payload bytes.
//!
//! Text: the same header, then one decimal value per line with 17
//! significant digits (for cross-language comparison).

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::network::{ParamVector, ResNetConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Primal,
    Multiplier,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Role::Primal => write!(f, "primal"),
            Role::Multiplier => write!(f, "multiplier"),
        }
    }
}

impl std::str::FromStr for Role {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "primal" => Ok(Role::Primal),
            "multiplier" => Ok(Role::Multiplier),
            other => Err(Error::Checkpoint(format!("unknown role {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CkptHeader {
    pub input_dim: usize,
    pub width: usize,
    pub depth: usize,
    pub role: Role,
    pub seed: u64,
}

impl CkptHeader {
    pub fn config(&self) -> Result<ResNetConfig> {
        ResNetConfig::new(self.input_dim, self.width, self.depth)
    }

    fn line(&self) -> String {
        format!(
            "varsolve-ckpt v1; d={}; N={}; L={}; role={}; seed={}",
            self.input_dim, self.width, self.depth, self.role, self.seed
        )
    }

    fn parse(line: &str) -> Result<Self> {
        let line = line.trim_end();
        let mut parts = line.split("; ");
        let magic = parts.next().unwrap_or("");
        if magic != "varsolve-ckpt v1" {
            return Err(Error::Checkpoint(format!("bad header magic {magic:?}")));
        }
        let mut d = None;
        let mut n = None;
        let mut l = None;
        let mut role = None;
        let mut seed = None;
        for part in parts {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| Error::Checkpoint(format!("bad header field {part:?}")))?;
            match key {
                "d" => d = Some(parse_num(key, value)?),
                "N" => n = Some(parse_num(key, value)?),
                "L" => l = Some(parse_num(key, value)?),
                "role" => role = Some(value.parse::<Role>()?),
                "seed" => seed = Some(parse_num(key, value)? as u64),
                other => return Err(Error::Checkpoint(format!("unknown header field {other:?}"))),
            }
        }
        Ok(CkptHeader {
            input_dim: d.ok_or_else(|| Error::Checkpoint("header missing d".into()))?,
            width: n.ok_or_else(|| Error::Checkpoint("header missing N".into()))?,
            depth: l.ok_or_else(|| Error::Checkpoint("header missing L".into()))?,
            role: role.ok_or_else(|| Error::Checkpoint("header missing role".into()))?,
            seed: seed.ok_or_else(|| Error::Checkpoint("header missing seed".into()))?,
        })
    }
}

fn parse_num(key: &str, value: &str) -> Result<usize> {
    value
        .parse()
        .map_err(|_| Error::Checkpoint(format!("bad value for {key}: {value:?}")))
}

pub fn write_binary(path: &Path, header: &CkptHeader, params: &ParamVector) -> Result<()> {
    let expected = header.config()?.param_len();
    if params.len() != expected {
        return Err(Error::Checkpoint(format!(
            "parameter vector has length {}, header wants {expected}",
            params.len()
        )));
    }
    let mut payload = Vec::with_capacity(params.len() * 8);
    for &v in params.iter() {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    let mut hasher = crc32fast::Hasher::new();
    hasher.update(&payload);
    let crc = hasher.finalize();
    let mut file = fs::File::create(path)?;
    file.write_all(header.line().as_bytes())?;
    file.write_all(b"\n")?;
    file.write_all(&payload)?;
    file.write_all(&crc.to_le_bytes())?;
    Ok(())
}

pub fn read_binary(path: &Path) -> Result<(CkptHeader, ParamVector)> {
    let bytes = fs::read(path)?;
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Checkpoint("missing header line".into()))?;
    let header_line = std::str::from_utf8(&bytes[..newline])
        .map_err(|_| Error::Checkpoint("header is not UTF-8".into()))?;
    let header = CkptHeader::parse(header_line)?;
    let expected = header.config()?.param_len();
    let body = &bytes[newline + 1..];
    if body.len() != expected * 8 + 4 {
        return Err(Error::Checkpoint(format!(
            "payload has {} bytes, header wants {} values plus CRC",
            body.len(),
            expected
        )));
    }
    let (payload, crc_bytes) = body.split_at(expected * 8);
    let mut hasher = crc32fast::Hasher::new();
    hasher.update(payload);
    let crc = hasher.finalize();
    let stored = u32::from_le_bytes(crc_bytes.try_into().unwrap());
    if crc != stored {
        return Err(Error::Checkpoint(format!("CRC mismatch: computed {crc:#x}, stored {stored:#x}")));
    }
    let mut values = Vec::with_capacity(expected);
    for chunk in payload.chunks_exact(8) {
        values.push(f64::from_le_bytes(chunk.try_into().unwrap()));
    }
    Ok((header, ParamVector::from_vec(values)))
}

/// Plain-text export: header line, then one value per line with 17
/// significant digits.
pub fn write_text(path: &Path, header: &CkptHeader, params: &ParamVector) -> Result<()> {
    write_text_raw(path, &header.line(), params.as_slice())
}

pub(crate) fn write_text_raw(path: &Path, header_line: &str, values: &[f64]) -> Result<()> {
    let mut out = String::with_capacity(values.len() * 26 + header_line.len() + 1);
    out.push_str(header_line);
    out.push('\n');
    for v in values {
        out.push_str(&format!("{v:.16e}\n"));
    }
    fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::init_params;

    fn sample_header() -> CkptHeader {
        CkptHeader { input_dim: 2, width: 4, depth: 2, role: Role::Primal, seed: 42 }
    }

    #[test]
    fn binary_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.ckpt");
        let header = sample_header();
        let cfg = header.config().unwrap();
        let params = init_params(&cfg, 42);
        write_binary(&path, &header, &params).unwrap();
        let (h2, p2) = read_binary(&path).unwrap();
        assert_eq!(h2, header);
        assert_eq!(p2, params);
    }

    #[test]
    fn corruption_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.ckpt");
        let header = sample_header();
        let params = init_params(&header.config().unwrap(), 1);
        write_binary(&path, &header, &params).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0xff;
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_binary(&path), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn wrong_length_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.ckpt");
        let header = sample_header();
        let params = ParamVector::zeros(3);
        assert!(write_binary(&path, &header, &params).is_err());
    }

    #[test]
    fn text_export_has_17_significant_digits() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.txt");
        let header = sample_header();
        let params = init_params(&header.config().unwrap(), 7);
        write_text(&path, &header, &params).unwrap();
        let content = fs::read_to_string(&path).unwrap();
        let mut lines = content.lines();
        assert!(lines.next().unwrap().starts_with("varsolve-ckpt v1; "));
        for (line, &want) in lines.zip(params.iter()) {
            let got: f64 = line.parse().unwrap();
            assert_eq!(got, want, "17 significant digits round-trip f64 exactly");
        }
    }
}
