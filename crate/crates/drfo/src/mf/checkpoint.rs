//! Binary checkpoint container for trained models.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  b"DRFOCKPT"
//! version  u32      currently 1
//! n_users  u32
//! n_items  u32
//! dim      u32
//! seed     u64      initialization seed, for provenance only
//! n_params u64
//! params   n_params * 8 bytes of f64 bits
//! checksum 8 bytes  first 8 bytes of SHA-256 over everything above
//! ```
//!
//! Parameters round-trip bit-exactly: the f64 bit patterns are written and
//! read verbatim, so a saved model scores identically after loading.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::MFModel;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"DRFOCKPT";
const VERSION: u32 = 1;

pub fn save_checkpoint(model: &MFModel, seed: u64) -> Vec<u8> {
    let params = model.params();
    let mut buf = Vec::with_capacity(8 + 4 * 3 + 8 * 2 + params.len() * 8 + 8);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&model.n_users().to_le_bytes());
    buf.extend_from_slice(&model.n_items().to_le_bytes());
    buf.extend_from_slice(&(model.dim() as u32).to_le_bytes());
    buf.extend_from_slice(&seed.to_le_bytes());
    buf.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for p in params {
        buf.extend_from_slice(&p.to_bits().to_le_bytes());
    }
    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(&digest[..8]);
    buf
}

pub fn load_checkpoint(bytes: &[u8]) -> Result<(MFModel, u64)> {
    let corrupt = |msg: &str| Error::Integrity(format!("checkpoint: {msg}"));

    if bytes.len() < 8 + 4 * 3 + 8 * 2 + 8 {
        return Err(corrupt("truncated header"));
    }
    let (head, _) = bytes.split_at(bytes.len() - 8);
    let stored: [u8; 8] = bytes[bytes.len() - 8..].try_into().unwrap();
    let digest = Sha256::digest(head);
    if stored != digest[..8] {
        return Err(corrupt("checksum mismatch"));
    }

    fn take<'a>(head: &'a [u8], pos: &mut usize, n: usize) -> Result<&'a [u8]> {
        let end = pos
            .checked_add(n)
            .filter(|&e| e <= head.len())
            .ok_or_else(|| Error::Integrity("checkpoint: truncated body".into()))?;
        let s = &head[*pos..end];
        *pos = end;
        Ok(s)
    }

    let mut pos = 0usize;
    if take(head, &mut pos, 8)? != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = u32::from_le_bytes(take(head, &mut pos, 4)?.try_into().unwrap());
    if version != VERSION {
        return Err(corrupt(&format!("unsupported version {version}")));
    }
    let n_users = u32::from_le_bytes(take(head, &mut pos, 4)?.try_into().unwrap());
    let n_items = u32::from_le_bytes(take(head, &mut pos, 4)?.try_into().unwrap());
    let dim = u32::from_le_bytes(take(head, &mut pos, 4)?.try_into().unwrap()) as usize;
    let seed = u64::from_le_bytes(take(head, &mut pos, 8)?.try_into().unwrap());
    let n_params = u64::from_le_bytes(take(head, &mut pos, 8)?.try_into().unwrap());
    let n_params = usize::try_from(n_params).map_err(|_| corrupt("parameter count overflow"))?;
    let expected = n_params
        .checked_mul(8)
        .ok_or_else(|| corrupt("parameter count overflow"))?;
    if head.len() - pos != expected {
        return Err(corrupt("parameter payload length mismatch"));
    }
    let mut params = Vec::with_capacity(n_params);
    for _ in 0..n_params {
        let bits = u64::from_le_bytes(take(head, &mut pos, 8)?.try_into().unwrap());
        params.push(f64::from_bits(bits));
    }
    let model = MFModel::from_params(n_users, n_items, dim, params)?;
    Ok((model, seed))
}

pub fn save_checkpoint_file(path: &Path, model: &MFModel, seed: u64) -> Result<()> {
    fs::write(path, save_checkpoint(model, seed))?;
    Ok(())
}

/// Loads a checkpoint file; `stage` names the pipeline stage that should
/// have produced it, for the missing-artifact diagnostic.
pub fn load_checkpoint_file(path: &Path, stage: &str) -> Result<(MFModel, u64)> {
    if !path.exists() {
        return Err(Error::MissingArtifact {
            stage: stage.into(),
            path: path.display().to_string(),
        });
    }
    load_checkpoint(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_model() -> MFModel {
        MFModel::init(5, 7, 3, 42).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let model = sample_model();
        let bytes = save_checkpoint(&model, 42);
        let (loaded, seed) = load_checkpoint(&bytes).unwrap();
        assert_eq!(seed, 42);
        assert_eq!(loaded.n_users(), model.n_users());
        assert_eq!(loaded.n_items(), model.n_items());
        assert_eq!(loaded.dim(), model.dim());
        let a: Vec<u64> = model.params().iter().map(|p| p.to_bits()).collect();
        let b: Vec<u64> = loaded.params().iter().map(|p| p.to_bits()).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn special_float_values_survive() {
        let mut model = MFModel::from_params(1, 1, 1, vec![0.0; 5]).unwrap();
        model.params_mut()[0] = -0.0;
        model.params_mut()[1] = f64::MIN_POSITIVE / 2.0; // subnormal
        model.params_mut()[2] = 1.0 + f64::EPSILON;
        let bytes = save_checkpoint(&model, 0);
        let (loaded, _) = load_checkpoint(&bytes).unwrap();
        assert_eq!(loaded.params()[0].to_bits(), (-0.0f64).to_bits());
        assert_eq!(loaded.params()[1], f64::MIN_POSITIVE / 2.0);
        assert_eq!(loaded.params()[2], 1.0 + f64::EPSILON);
    }

    #[test]
    fn corruption_is_detected() {
        let model = sample_model();
        let good = save_checkpoint(&model, 1);

        let mut flipped = good.clone();
        flipped[30] ^= 0x01;
        assert!(matches!(load_checkpoint(&flipped), Err(Error::Integrity(_))));

        assert!(matches!(load_checkpoint(&good[..20]), Err(Error::Integrity(_))));

        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(matches!(load_checkpoint(&bad_magic), Err(Error::Integrity(_))));

        // Truncating the params while fixing up the checksum must still fail
        // on the declared-vs-actual length check.
        let mut short = good[..good.len() - 16].to_vec();
        let digest = Sha256::digest(&short);
        short.extend_from_slice(&digest[..8]);
        assert!(matches!(load_checkpoint(&short), Err(Error::Integrity(_))));
    }

    #[test]
    fn file_round_trip_and_missing_path() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let model = sample_model();
        save_checkpoint_file(&path, &model, 9).unwrap();
        let (loaded, seed) = load_checkpoint_file(&path, "pretrain").unwrap();
        assert_eq!(seed, 9);
        assert_eq!(loaded.params(), model.params());

        let missing = dir.path().join("absent.ckpt");
        match load_checkpoint_file(&missing, "train") {
            Err(Error::MissingArtifact { stage, .. }) => assert_eq!(stage, "train"),
            other => panic!("expected a missing-artifact error, got {other:?}"),
        }
    }
}
