//! `FDTL1 || nonce(12) || AES-256-GCM(csv, aad = manifest json) || tag`.

use std::path::Path;

use aes_gcm::aead::{Aead, AeadCore, KeyInit, OsRng, Payload};
use aes_gcm::{Aes256Gcm, Key, Nonce};
use thiserror::Error;

pub const MAGIC: &[u8; 5] = b"FDTL1";
pub const NONCE_LEN: usize = 12;
pub const TAG_LEN: usize = 16;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EnvelopeError {
    #[error("not an FDTL1 envelope")]
    BadMagic,
    #[error("envelope truncated")]
    Truncated,
    #[error("authentication failed: wrong key, modified manifest or corrupted ciphertext")]
    AuthFailed,
    #[error("key missing")]
    KeyMissing,
    #[error("bad key: {0}")]
    BadKey(String),
}

/// 256-bit trace key.
#[derive(Clone, PartialEq, Eq)]
pub struct TraceKey([u8; 32]);

impl std::fmt::Debug for TraceKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("TraceKey(..)")
    }
}

impl TraceKey {
    pub fn from_bytes(bytes: [u8; 32]) -> Self {
        Self(bytes)
    }

    pub fn from_hex(text: &str) -> Result<Self, EnvelopeError> {
        let raw = hex::decode(text.trim()).map_err(|e| EnvelopeError::BadKey(e.to_string()))?;
        let arr: [u8; 32] = raw
            .try_into()
            .map_err(|v: Vec<u8>| EnvelopeError::BadKey(format!("need 32 bytes, got {}", v.len())))?;
        Ok(Self(arr))
    }

    /// Reads a hex key from a file.
    pub fn load(path: &Path) -> Result<Self, EnvelopeError> {
        let text = std::fs::read_to_string(path).map_err(|_| EnvelopeError::KeyMissing)?;
        Self::from_hex(&text)
    }

    pub fn generate() -> Self {
        Self(Aes256Gcm::generate_key(&mut OsRng).into())
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    fn cipher(&self) -> Aes256Gcm {
        Aes256Gcm::new(Key::<Aes256Gcm>::from_slice(&self.0))
    }
}

pub fn seal(key: &TraceKey, aad: &[u8], plaintext: &[u8]) -> Vec<u8> {
    let nonce = Aes256Gcm::generate_nonce(&mut OsRng);
    let ct = key
        .cipher()
        .encrypt(&nonce, Payload { msg: plaintext, aad })
        .expect("in-memory encryption");
    let mut out = Vec::with_capacity(MAGIC.len() + NONCE_LEN + ct.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&nonce);
    out.extend_from_slice(&ct);
    out
}

pub fn open(key: &TraceKey, aad: &[u8], envelope: &[u8]) -> Result<Vec<u8>, EnvelopeError> {
    if envelope.len() < MAGIC.len() || &envelope[..MAGIC.len()] != MAGIC {
        return Err(EnvelopeError::BadMagic);
    }
    let rest = &envelope[MAGIC.len()..];
    if rest.len() < NONCE_LEN + TAG_LEN {
        return Err(EnvelopeError::Truncated);
    }
    let (nonce, ct) = rest.split_at(NONCE_LEN);
    key.cipher()
        .decrypt(Nonce::from_slice(nonce), Payload { msg: ct, aad })
        .map_err(|_| EnvelopeError::AuthFailed)
}
