//! Binary checkpoints.
//!
//! Layout: `APEXCKPT`, version byte, u32 header length and a JSON header,
//! u32 block count, then blocks of `u16 name length, name, u8 rank, u32
//! dims, f32 data`, all little-endian, closed by a CRC-32 of everything
//! before it.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::policy::Policy;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"APEXCKPT";
pub const VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub obs_dim: usize,
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub env_steps: u64,
    pub updates: u64,
    pub adam_step: u64,
    /// Free-form configuration snapshot (PPO and environment key-value text).
    pub fingerprint: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub policy: Policy<f32>,
    pub adam: Adam<f32>,
}

struct Block {
    name: String,
    dims: Vec<usize>,
    data: Vec<f32>,
}

fn blocks_of(policy: &Policy<f32>, adam: &Adam<f32>) -> Vec<Block> {
    let mut out = Vec::new();
    let p = policy.params();
    let mut offset = 0;
    for (prefix, net) in [("actor", policy.actor()), ("critic", policy.critic())] {
        for l in 0..net.n_layers() {
            let (wr, br) = net.layer_ranges(l);
            let (i, o) = (net.sizes()[l], net.sizes()[l + 1]);
            out.push(Block { name: format!("{prefix}.{l}.weight"), dims: vec![i, o], data: p[offset + wr.start..offset + wr.end].to_vec() });
            out.push(Block { name: format!("{prefix}.{l}.bias"), dims: vec![o], data: p[offset + br.start..offset + br.end].to_vec() });
        }
        offset += net.param_len();
    }
    out.push(Block { name: "log_std".into(), dims: vec![p.len() - offset], data: p[offset..].to_vec() });
    out.push(Block { name: "adam.m".into(), dims: vec![adam.m.len()], data: adam.m.clone() });
    out.push(Block { name: "adam.v".into(), dims: vec![adam.v.len()], data: adam.v.clone() });
    out
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.push(VERSION);
        let header = serde_json::to_vec(&self.meta).expect("metadata serializes");
        buf.extend_from_slice(&(header.len() as u32).to_le_bytes());
        buf.extend_from_slice(&header);
        let blocks = blocks_of(&self.policy, &self.adam);
        buf.extend_from_slice(&(blocks.len() as u32).to_le_bytes());
        for b in &blocks {
            buf.extend_from_slice(&(b.name.len() as u16).to_le_bytes());
            buf.extend_from_slice(b.name.as_bytes());
            buf.push(b.dims.len() as u8);
            for d in &b.dims {
                buf.extend_from_slice(&(*d as u32).to_le_bytes());
            }
            for v in &b.data {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&buf);
        buf.extend_from_slice(&crc.to_le_bytes());
        buf
    }

    /// Parses a checkpoint; with `expected_obs_dim` set, a network built
    /// for another observation length is rejected.
    pub fn from_bytes(bytes: &[u8], expected_obs_dim: Option<usize>) -> Result<Self> {
        let corrupt = |m: &str| Error::CorruptCheckpoint(m.to_string());
        if bytes.len() < MAGIC.len() + 1 + 4 + 4 || &bytes[..8] != MAGIC {
            return Err(corrupt("missing APEXCKPT magic"));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let crc = u32::from_le_bytes(tail.try_into().unwrap());
        if crc32fast::hash(body) != crc {
            return Err(corrupt("checksum mismatch (truncated or damaged file)"));
        }
        if body[8] != VERSION {
            return Err(corrupt(&format!("unsupported version {}", body[8])));
        }
        let mut r = Reader { buf: body, pos: 9 };
        let hlen = r.u32()? as usize;
        let meta: CheckpointMeta = serde_json::from_slice(r.take(hlen)?).map_err(|e| corrupt(&format!("bad header: {e}")))?;
        if let Some(dim) = expected_obs_dim {
            if dim != meta.obs_dim {
                return Err(Error::DimensionMismatch { expected: dim, got: meta.obs_dim });
            }
        }
        let mut policy = Policy::<f32>::zeros(meta.obs_dim, &meta.actor_hidden, &meta.critic_hidden);
        let mut adam = Adam::new(policy.params().len());
        adam.step = meta.adam_step;
        let template = blocks_of(&policy, &adam);
        let count = r.u32()? as usize;
        if count != template.len() {
            return Err(corrupt(&format!("expected {} blocks, found {count}", template.len())));
        }
        let mut params = Vec::with_capacity(policy.params().len());
        for t in &template {
            let nlen = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(nlen)?).map_err(|_| corrupt("block name is not UTF-8"))?;
            let rank = r.take(1)?[0] as usize;
            let dims = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            if name != t.name || dims != t.dims {
                return Err(corrupt(&format!("block `{name}` {dims:?} does not match expected `{}` {:?}", t.name, t.dims)));
            }
            let n: usize = dims.iter().product();
            let raw = r.take(n * 4)?;
            let data: Vec<f32> = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
            match name {
                "adam.m" => adam.m = data,
                "adam.v" => adam.v = data,
                _ => params.extend(data),
            }
        }
        if r.pos != body.len() {
            return Err(corrupt("trailing bytes after last block"));
        }
        policy.set_params(params)?;
        Ok(Self { meta, policy, adam })
    }

    /// Writes through a temporary file so readers never see a partial file.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path, expected_obs_dim: Option<usize>) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, expected_obs_dim)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::CorruptCheckpoint("unexpected end of data".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> Checkpoint {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let policy = Policy::<f32>::new(7, &[16, 16], &[32, 32], -1.2, &mut rng);
        let mut adam = Adam::new(policy.params().len());
        adam.m.iter_mut().enumerate().for_each(|(i, v)| *v = i as f32 * 1e-3);
        adam.v.iter_mut().enumerate().for_each(|(i, v)| *v = (i as f32).sqrt());
        adam.step = 42;
        Checkpoint {
            meta: CheckpointMeta {
                obs_dim: 7,
                actor_hidden: vec![16, 16],
                critic_hidden: vec![32, 32],
                env_steps: 12345,
                updates: 3,
                adam_step: 42,
                fingerprint: "gamma = 0.99".into(),
            },
            policy,
            adam,
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let c = sample();
        let back = Checkpoint::from_bytes(&c.to_bytes(), Some(7)).unwrap();
        assert_eq!(back, c);
        let obs = [0.1f32, -0.3, 0.5, 0.0, 1.0, -1.0, 0.25];
        assert_eq!(back.policy.forward(&obs).unwrap(), c.policy.forward(&obs).unwrap());
    }

    #[test]
    fn wrong_obs_dim_is_rejected() {
        let c = sample();
        assert!(matches!(Checkpoint::from_bytes(&c.to_bytes(), Some(11)), Err(Error::DimensionMismatch { expected: 11, got: 7 })));
    }

    #[test]
    fn truncation_and_damage_are_detected() {
        let bytes = sample().to_bytes();
        for cut in [0, 5, 20, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(Checkpoint::from_bytes(&bytes[..cut], None), Err(Error::CorruptCheckpoint(_))));
        }
        let mut bad = bytes.clone();
        bad[100] ^= 0x40;
        assert!(matches!(Checkpoint::from_bytes(&bad, None), Err(Error::CorruptCheckpoint(_))));
    }
}
