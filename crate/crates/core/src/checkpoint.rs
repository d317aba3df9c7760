//! Binary policy checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "RSIMCKPT"  u32 version
//! u32 metadata length, metadata JSON
//! u32 tensor count
//! per tensor: u32 name length, name, u32 rank, rank × u64 dims, f64 data (row-major)
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{RunConfig, StrategyTable, Vocab};
use crate::model::{PolicyParams, PolicyRole, PolicySpec, Tensor};

pub const MAGIC: &[u8; 8] = b"RSIMCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CheckpointError {
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("vocabulary mismatch: {0}")]
    VocabMismatch(String),
    #[error("io error: {0}")]
    Io(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub role: PolicyRole,
    pub spec: PolicySpec,
    pub vocab: Vec<String>,
    pub vocab_hash: String,
    pub strategy_table_hash: String,
    pub update_count: u64,
    pub stage: u8,
    pub config: Option<RunConfig>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub params: PolicyParams,
}

impl Checkpoint {
    /// A checkpoint over the standard vocabulary and bundled strategy table.
    pub fn new(role: PolicyRole, params: PolicyParams, update_count: u64, stage: u8, config: Option<RunConfig>) -> Checkpoint {
        let vocab = Vocab::standard();
        Checkpoint {
            meta: CheckpointMeta {
                role,
                spec: params.spec.clone(),
                vocab: vocab.tokens().to_vec(),
                vocab_hash: vocab.hash(),
                strategy_table_hash: StrategyTable::bundled_hash(),
                update_count,
                stage,
                config,
            },
            params,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let meta = serde_json::to_vec(&self.meta).expect("checkpoint metadata serializes");
        let mut out = Vec::with_capacity(64 + meta.len() + 8 * self.params.num_scalars());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(&meta);
        out.extend_from_slice(&(self.params.tensors.len() as u32).to_le_bytes());
        for t in &self.params.tensors {
            out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.extend_from_slice(&(t.dims.len() as u32).to_le_bytes());
            for &d in &t.dims {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &x in &t.data {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    /// Parses and verifies a checkpoint against the runtime vocabulary and strategy table.
    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(corrupt("bad magic"));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(corrupt(format!("unsupported format version {version}")));
        }
        let meta_len = r.u32()? as usize;
        let meta: CheckpointMeta =
            serde_json::from_slice(r.take(meta_len)?).map_err(|e| corrupt(format!("metadata: {e}")))?;
        let n = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(n.min(64));
        for _ in 0..n {
            let name_len = r.u32()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec()).map_err(|_| corrupt("tensor name is not UTF-8"))?;
            let rank = r.u32()? as usize;
            let dims = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
            let len = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or_else(|| corrupt("tensor too large"))?;
            let raw = r.take(len.checked_mul(8).ok_or_else(|| corrupt("tensor too large"))?)?;
            let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            tensors.push(Tensor { name, dims, data });
        }
        if r.pos != bytes.len() {
            return Err(corrupt("trailing bytes"));
        }
        verify_meta(&meta)?;
        let params = PolicyParams::from_tensors(meta.spec.clone(), tensors).map_err(|e| corrupt(e.to_string()))?;
        meta.spec.validate_role(meta.role).map_err(|e| corrupt(e.to_string()))?;
        Ok(Checkpoint { meta, params })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        std::fs::write(path, self.to_bytes()).map_err(|e| CheckpointError::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Checkpoint, CheckpointError> {
        let bytes = std::fs::read(path).map_err(|e| CheckpointError::Io(format!("{}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }
}

fn corrupt(m: impl Into<String>) -> CheckpointError {
    CheckpointError::Corrupt(m.into())
}

fn verify_meta(meta: &CheckpointMeta) -> Result<(), CheckpointError> {
    let stored = Vocab::from_tokens(meta.vocab.clone()).map_err(|e| corrupt(format!("vocabulary: {e}")))?;
    if stored.hash() != meta.vocab_hash {
        return Err(corrupt("vocabulary hash does not match the stored vocabulary"));
    }
    let runtime = Vocab::standard();
    if stored.hash() != runtime.hash() {
        return Err(CheckpointError::VocabMismatch(format!(
            "checkpoint vocabulary {} differs from runtime {}",
            &meta.vocab_hash[..12],
            &runtime.hash()[..12]
        )));
    }
    if meta.strategy_table_hash != StrategyTable::bundled_hash() {
        return Err(CheckpointError::VocabMismatch("strategy table differs from the bundled one".into()));
    }
    if meta.spec.vocab_size != runtime.len() {
        return Err(corrupt("policy vocab size disagrees with the stored vocabulary"));
    }
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| corrupt("truncated"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::PolicyShape;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample(role: PolicyRole) -> Checkpoint {
        let spec = PolicySpec::for_role(role, &PolicyShape::default(), Vocab::standard().len());
        let params = PolicyParams::init(&spec, &mut ChaCha8Rng::seed_from_u64(3));
        Checkpoint::new(role, params, 17, 2, Some(RunConfig::default()))
    }

    #[test]
    fn bytes_round_trip() {
        for role in [PolicyRole::Planner, PolicyRole::Reasoner] {
            let ck = sample(role);
            let bytes = ck.to_bytes();
            let back = Checkpoint::from_bytes(&bytes).unwrap();
            assert_eq!(back, ck);
            assert_eq!(back.to_bytes(), bytes);
        }
    }

    #[test]
    fn truncation_and_bit_flips_detected() {
        let bytes = sample(PolicyRole::Planner).to_bytes();
        assert!(matches!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]), Err(CheckpointError::Corrupt(_))));
        let mut bad = bytes.clone();
        bad[0] ^= 1;
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(CheckpointError::Corrupt(_))));
        let mut long = bytes;
        long.push(0);
        assert!(matches!(Checkpoint::from_bytes(&long), Err(CheckpointError::Corrupt(_))));
    }

    #[test]
    fn foreign_vocabulary_rejected() {
        let mut ck = sample(PolicyRole::Reasoner);
        ck.meta.vocab.swap(6, 7);
        ck.meta.vocab_hash = Vocab::from_tokens(ck.meta.vocab.clone()).unwrap().hash();
        assert!(matches!(Checkpoint::from_bytes(&ck.to_bytes()), Err(CheckpointError::VocabMismatch(_))));

        let mut tampered = sample(PolicyRole::Reasoner);
        tampered.meta.vocab.swap(6, 7);
        assert!(matches!(Checkpoint::from_bytes(&tampered.to_bytes()), Err(CheckpointError::Corrupt(_))));
    }
}
