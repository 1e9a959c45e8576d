//! Binary checkpoint format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "USR1" | version u32 | stage u8 | step u64 | seed u64
//! config digest [32]
//! rng count u32, then per stream: name, chacha seed [32], stream u64, word_pos u128
//! adam count u32, then per optimizer: name, t u64
//! entry count u32, then per entry: name, dtype u8 (0 = f32), dims 4 x u64,
//!                                  payload numel x f32
//! ```
//!
//! Entries cover every parameter store and every optimizer moment buffer, in
//! name order, so a round trip reproduces training state bit-exactly.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::networks::ParamStore;
use crate::optim::AdamState;
use crate::rng::RngState;
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"USR1";
const VERSION: u32 = 1;
const DTYPE_F32: u8 = 0;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub stage: u8,
    pub step: u64,
    pub seed: u64,
    pub config_digest: [u8; 32],
    pub rngs: Vec<(String, RngState)>,
    pub adam_steps: Vec<(String, u64)>,
    pub entries: Vec<(String, Tensor<f32>)>,
}

impl Checkpoint {
    pub fn new(stage: u8, step: u64, seed: u64, config_digest: [u8; 32]) -> Self {
        Checkpoint { stage, step, seed, config_digest, rngs: Vec::new(), adam_steps: Vec::new(), entries: Vec::new() }
    }

    /// Add a parameter store and its optimizer state under `prefix`.
    pub fn add_net(&mut self, prefix: &str, params: &ParamStore<f32>, adam: &AdamState) {
        for (name, value) in params.iter() {
            self.entries.push((format!("{prefix}.{name}"), value.clone()));
        }
        for (name, value) in adam.m.iter() {
            self.entries.push((format!("adam.{prefix}.{name}.m"), value.clone()));
        }
        for (name, value) in adam.v.iter() {
            self.entries.push((format!("adam.{prefix}.{name}.v"), value.clone()));
        }
        self.adam_steps.push((prefix.to_string(), adam.t));
    }

    /// Reassemble a parameter store and optimizer state stored under
    /// `prefix`.
    pub fn extract_net(&self, prefix: &str) -> Result<(ParamStore<f32>, AdamState)> {
        let mut params = ParamStore::new();
        let mut m = ParamStore::new();
        let mut v = ParamStore::new();
        let param_prefix = format!("{prefix}.");
        let m_prefix = format!("adam.{prefix}.");
        for (name, value) in &self.entries {
            if let Some(rest) = name.strip_prefix(&m_prefix) {
                if let Some(base) = rest.strip_suffix(".m") {
                    m.insert(base, value.clone());
                } else if let Some(base) = rest.strip_suffix(".v") {
                    v.insert(base, value.clone());
                }
            } else if let Some(rest) = name.strip_prefix(&param_prefix) {
                params.insert(rest, value.clone());
            }
        }
        if params.is_empty() {
            return Err(Error::Checkpoint(format!("no entries for network `{prefix}`")));
        }
        let t = self
            .adam_steps
            .iter()
            .find(|(n, _)| n == prefix)
            .map(|(_, t)| *t)
            .ok_or_else(|| Error::Checkpoint(format!("no optimizer step for `{prefix}`")))?;
        Ok((params, AdamState { m, v, t }))
    }

    pub fn rng(&self, name: &str) -> Result<&RngState> {
        self.rngs
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, s)| s)
            .ok_or_else(|| Error::Checkpoint(format!("no rng state `{name}`")))
    }

    /// Short content identifier: step plus a digest over all payloads.
    pub fn content_id(&self) -> String {
        use sha2::Digest as _;
        let mut hasher = sha2::Sha256::new();
        for (name, value) in &self.entries {
            hasher.update(name.as_bytes());
            for v in value.data() {
                hasher.update(v.to_le_bytes());
            }
        }
        let digest = hasher.finalize();
        let hex: String = digest.iter().take(6).map(|b| format!("{b:02x}")).collect();
        format!("{hex}-step{}", self.step)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io_err = |e: std::io::Error| Error::io(path, e);

        w.write_all(MAGIC).map_err(io_err)?;
        w.write_all(&VERSION.to_le_bytes()).map_err(io_err)?;
        w.write_all(&[self.stage]).map_err(io_err)?;
        w.write_all(&self.step.to_le_bytes()).map_err(io_err)?;
        w.write_all(&self.seed.to_le_bytes()).map_err(io_err)?;
        w.write_all(&self.config_digest).map_err(io_err)?;

        w.write_all(&(self.rngs.len() as u32).to_le_bytes()).map_err(io_err)?;
        for (name, state) in &self.rngs {
            write_str(&mut w, name).map_err(io_err)?;
            w.write_all(&state.seed).map_err(io_err)?;
            w.write_all(&state.stream.to_le_bytes()).map_err(io_err)?;
            w.write_all(&state.word_pos.to_le_bytes()).map_err(io_err)?;
        }

        w.write_all(&(self.adam_steps.len() as u32).to_le_bytes()).map_err(io_err)?;
        for (name, t) in &self.adam_steps {
            write_str(&mut w, name).map_err(io_err)?;
            w.write_all(&t.to_le_bytes()).map_err(io_err)?;
        }

        w.write_all(&(self.entries.len() as u32).to_le_bytes()).map_err(io_err)?;
        for (name, value) in &self.entries {
            write_str(&mut w, name).map_err(io_err)?;
            w.write_all(&[DTYPE_F32]).map_err(io_err)?;
            for d in value.shape() {
                w.write_all(&(d as u64).to_le_bytes()).map_err(io_err)?;
            }
            for v in value.data() {
                w.write_all(&v.to_le_bytes()).map_err(io_err)?;
            }
        }
        w.flush().map_err(io_err)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        let bad = |what: &str| Error::Checkpoint(format!("malformed checkpoint {}: {what}", path.display()));

        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic, path)?;
        if &magic != MAGIC {
            return Err(bad("bad magic"));
        }
        let version = read_u32(&mut r, path)?;
        if version != VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let mut stage = [0u8; 1];
        read_exact(&mut r, &mut stage, path)?;
        let step = read_u64(&mut r, path)?;
        let seed = read_u64(&mut r, path)?;
        let mut config_digest = [0u8; 32];
        read_exact(&mut r, &mut config_digest, path)?;

        let n_rngs = read_u32(&mut r, path)?;
        let mut rngs = Vec::with_capacity(n_rngs as usize);
        for _ in 0..n_rngs {
            let name = read_str(&mut r, path)?;
            let mut seed32 = [0u8; 32];
            read_exact(&mut r, &mut seed32, path)?;
            let stream = read_u64(&mut r, path)?;
            let mut wp = [0u8; 16];
            read_exact(&mut r, &mut wp, path)?;
            rngs.push((name, RngState { seed: seed32, stream, word_pos: u128::from_le_bytes(wp) }));
        }

        let n_adam = read_u32(&mut r, path)?;
        let mut adam_steps = Vec::with_capacity(n_adam as usize);
        for _ in 0..n_adam {
            let name = read_str(&mut r, path)?;
            adam_steps.push((name, read_u64(&mut r, path)?));
        }

        let n_entries = read_u32(&mut r, path)?;
        let mut entries = Vec::with_capacity(n_entries as usize);
        for _ in 0..n_entries {
            let name = read_str(&mut r, path)?;
            let mut dtype = [0u8; 1];
            read_exact(&mut r, &mut dtype, path)?;
            if dtype[0] != DTYPE_F32 {
                return Err(bad(&format!("unsupported dtype tag {}", dtype[0])));
            }
            let mut shape = [0usize; 4];
            for d in &mut shape {
                *d = read_u64(&mut r, path)? as usize;
            }
            let numel: usize = shape.iter().product();
            let mut payload = vec![0u8; numel * 4];
            read_exact(&mut r, &mut payload, path)?;
            let data = payload.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
            entries.push((name, Tensor::new(shape, data)));
        }

        Ok(Checkpoint { stage: stage[0], step, seed, config_digest, rngs, adam_steps, entries })
    }
}

/// Digest of a canonical config serialization, stored in checkpoints and
/// verified on resume.
pub fn config_digest(canonical: &str) -> [u8; 32] {
    use sha2::Digest as _;
    let mut hasher = sha2::Sha256::new();
    hasher.update(canonical.as_bytes());
    hasher.finalize().into()
}

fn write_str(w: &mut impl Write, s: &str) -> std::io::Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], path: &Path) -> Result<()> {
    r.read_exact(buf).map_err(|e| Error::io(path, e))
}

fn read_u32(r: &mut impl Read, path: &Path) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, path)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read, path: &Path) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b, path)?;
    Ok(u64::from_le_bytes(b))
}

fn read_str(r: &mut impl Read, path: &Path) -> Result<String> {
    let len = read_u32(r, path)? as usize;
    if len > 1 << 20 {
        return Err(Error::Checkpoint("unreasonable string length".into()));
    }
    let mut buf = vec![0u8; len];
    read_exact(r, &mut buf, path)?;
    String::from_utf8(buf).map_err(|_| Error::Checkpoint("non-utf8 name".into()))
}

/// Convenience map of `prefix -> (params, adam)` for multi-network states.
pub type NetMap = BTreeMap<String, (ParamStore<f32>, AdamState)>;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, RngState};
    use rand::Rng as _;

    #[test]
    fn roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = stream_rng(5, "ckpt-test");
        let mut params = ParamStore::new();
        let mut t = Tensor::zeros([2, 3, 4, 4]);
        for v in t.data_mut() {
            *v = rng.random_range(-1.0..1.0f32);
        }
        params.insert("head.weight", t);
        params.insert("head.bias", Tensor::zeros([1, 3, 1, 1]));
        let mut adam = AdamState::new(&params);
        adam.t = 42;
        for v in adam.m.get_mut("head.weight").unwrap().data_mut() {
            *v = rng.random_range(-0.1..0.1f32);
        }

        let mut ckpt = Checkpoint::new(1, 100, 7, config_digest("cfg"));
        ckpt.add_net("g", &params, &adam);
        ckpt.rngs.push(("data".into(), RngState::capture(&rng)));

        let path = dir.path().join("state.ckpt");
        ckpt.save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        assert_eq!(loaded, ckpt);

        let (p2, a2) = loaded.extract_net("g").unwrap();
        assert_eq!(p2, params);
        assert_eq!(a2, adam);
    }

    #[test]
    fn missing_net_is_checkpoint_error() {
        let ckpt = Checkpoint::new(1, 0, 0, [0; 32]);
        assert!(matches!(ckpt.extract_net("nope"), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn content_id_changes_with_payload() {
        let mut params = ParamStore::new();
        params.insert("w", Tensor::new([1, 1, 1, 1], vec![1.0f32]));
        let adam = AdamState::new(&params);
        let mut a = Checkpoint::new(1, 5, 0, [0; 32]);
        a.add_net("g", &params, &adam);
        let mut params2 = ParamStore::new();
        params2.insert("w", Tensor::new([1, 1, 1, 1], vec![2.0f32]));
        let mut b = Checkpoint::new(1, 5, 0, [0; 32]);
        b.add_net("g", &params2, &adam);
        assert_ne!(a.content_id(), b.content_id());
        assert!(a.content_id().ends_with("-step5"));
    }
}
