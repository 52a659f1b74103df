//! `HAZE` checkpoint format.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "HAZE"                 magic
//! u32                    format version (1)
//! u32 epoch, u8 phase, u64 seed
//! [u8; 32]               SHA-256 of the config text
//! u32 len, bytes         config text (UTF-8, `key = value` lines)
//! u32                    tensor count
//! per tensor: u16 name len, name, u8 rank, u32 × rank extents, f64 × numel
//! ```

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::blocks::ParamTree;
use crate::error::{Error, Result};
use crate::gaze::GazeConfig;
use crate::sr::SrConfig;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"HAZE";
pub const VERSION: u32 = 1;

/// Segment prefix of the super-resolution parameters.
pub const SR_SEGMENT: &str = "sr";
/// Segment prefix of the gaze parameters.
pub const GAZE_SEGMENT: &str = "gaze";

#[derive(Debug, Clone, Default)]
pub struct Checkpoint {
    pub epoch: u32,
    pub phase: u8,
    pub seed: u64,
    pub config: String,
    pub tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn digest(&self) -> [u8; 32] {
        Sha256::digest(self.config.as_bytes()).into()
    }

    /// Appends every parameter of `net` under `segment.`.
    pub fn add_segment(&mut self, segment: &str, net: &dyn ParamTree) {
        net.visit(segment, &mut |name, t| {
            self.tensors.push((name.to_string(), t.detach()));
        });
    }

    pub fn has_segment(&self, segment: &str) -> bool {
        let prefix = format!("{segment}.");
        self.tensors.iter().any(|(n, _)| n.starts_with(&prefix))
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Copies `segment.*` tensors into `net`; every parameter must be present
    /// with a matching shape.
    pub fn restore_segment(&self, segment: &str, net: &mut dyn ParamTree) -> Result<()> {
        let mut failure = None;
        net.visit_mut(segment, &mut |name, t| {
            if failure.is_some() {
                return;
            }
            match self.get(name) {
                Some(src) if src.shape() == t.shape() => {
                    *t = if t.requires_grad() {
                        src.requiring_grad()
                    } else {
                        src.detach()
                    };
                }
                Some(src) => {
                    failure = Some(Error::Format(format!(
                        "checkpoint tensor `{name}` has shape {:?}, model expects {:?}",
                        src.shape(),
                        t.shape()
                    )))
                }
                None => failure = Some(Error::Format(format!("checkpoint lacks tensor `{name}`"))),
            }
        });
        failure.map_or(Ok(()), Err)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut seen = HashSet::new();
        for (name, _) in &self.tensors {
            if !seen.insert(name.as_str()) {
                return Err(Error::Usage(format!(
                    "duplicate checkpoint tensor name `{name}`"
                )));
            }
            if name.len() > u16::MAX as usize {
                return Err(Error::Usage(format!(
                    "tensor name too long: {} bytes",
                    name.len()
                )));
            }
        }
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.epoch.to_le_bytes());
        out.push(self.phase);
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&self.digest());
        out.extend_from_slice(&(self.config.len() as u32).to_le_bytes());
        out.extend_from_slice(self.config.as_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(t.shape().len() as u8);
            for &d in t.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format("bad magic, not a HAZE checkpoint".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let epoch = r.u32()?;
        let phase = r.take(1)?[0];
        let seed = r.u64()?;
        let digest: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
        let clen = r.u32()? as usize;
        let config = String::from_utf8(r.take(clen)?.to_vec())
            .map_err(|_| Error::Format("config text is not UTF-8".into()))?;
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let nlen = u16::from_le_bytes(r.take(2)?.try_into().expect("2 bytes")) as usize;
            let name = String::from_utf8(r.take(nlen)?.to_vec())
                .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
            let rank = r.take(1)?[0] as usize;
            let shape = (0..rank)
                .map(|_| r.u32().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let raw = r.take(
                n.checked_mul(8)
                    .ok_or_else(|| Error::Format("tensor too large".into()))?,
            )?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            let t = Tensor::new(&shape, data)
                .map_err(|e| Error::Format(format!("tensor `{name}`: {e}")))?;
            tensors.push((name, t));
        }
        if r.pos != bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        let ckpt = Checkpoint {
            epoch,
            phase,
            seed,
            config,
            tensors,
        };
        if ckpt.digest() != digest {
            return Err(Error::Format("config digest mismatch".into()));
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint> {
        Checkpoint::from_bytes(&fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("truncated checkpoint at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
}

/// `key = value` lines describing the architectures stored in a checkpoint.
pub fn encode_configs(sr: Option<&SrConfig>, gaze: Option<&GazeConfig>) -> String {
    let mut s = String::new();
    if let Some(c) = sr {
        s += &format!("sr.scale = {}\n", c.scale);
        s += &format!("sr.channels = {}\n", c.channels);
        s += &format!("sr.num_hfab = {}\n", c.num_hfab);
        s += &format!("sr.lambda = {}\n", c.lambda);
        s += &format!("sr.hr_height = {}\n", c.hr_size.0);
        s += &format!("sr.hr_width = {}\n", c.hr_size.1);
        s += &format!("sr.reduction = {}\n", c.reduction);
        s += &format!("sr.hf_mode = {}\n", c.hf_mode.as_str());
    }
    if let Some(c) = gaze {
        s += &format!("gaze.patch_frac = {}\n", c.patch_frac);
        let widths: Vec<String> = c.backbone.iter().map(usize::to_string).collect();
        s += &format!("gaze.backbone = {}\n", widths.join(" "));
        s += &format!("gaze.hidden = {}\n", c.hidden);
        s += &format!("gaze.lambda = {}\n", c.lambda);
    }
    s
}

fn field<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Format(format!("bad config value `{value}` for `{key}`")))
}

/// Inverse of [`encode_configs`]; unrelated keys are ignored.
pub fn decode_configs(text: &str) -> Result<(Option<SrConfig>, Option<GazeConfig>)> {
    let mut sr: Option<SrConfig> = None;
    let mut gaze: Option<GazeConfig> = None;
    for line in text.lines() {
        let Some((k, v)) = line.split_once('=') else {
            continue;
        };
        let (k, v) = (k.trim(), v.trim());
        if let Some(key) = k.strip_prefix("sr.") {
            let c = sr.get_or_insert_with(SrConfig::default);
            match key {
                "scale" => c.scale = field(k, v)?,
                "channels" => c.channels = field(k, v)?,
                "num_hfab" => c.num_hfab = field(k, v)?,
                "lambda" => c.lambda = field(k, v)?,
                "hr_height" => c.hr_size.0 = field(k, v)?,
                "hr_width" => c.hr_size.1 = field(k, v)?,
                "reduction" => c.reduction = field(k, v)?,
                "hf_mode" => {
                    c.hf_mode = v
                        .parse()
                        .map_err(|_| Error::Format(format!("bad hf_mode `{v}`")))?
                }
                _ => {}
            }
        } else if let Some(key) = k.strip_prefix("gaze.") {
            let c = gaze.get_or_insert_with(GazeConfig::default);
            match key {
                "patch_frac" => c.patch_frac = field(k, v)?,
                "backbone" => {
                    c.backbone = v
                        .split_whitespace()
                        .map(|w| field(k, w))
                        .collect::<Result<_>>()?
                }
                "hidden" => c.hidden = field(k, v)?,
                "lambda" => c.lambda = field(k, v)?,
                _ => {}
            }
        }
    }
    Ok((sr, gaze))
}
