//! Authenticated encryption of dataset bundles at rest.
//!
//! Container layout (`.glds.enc`), big-endian, no padding:
//!
//! ```text
//! "GLDS" | version 0x01 | cipher_id | nonce (12 bytes) | ciphertext || tag
//! ```
//!
//! The 6-byte header is authenticated together with the caller's associated
//! data, so any modified byte, wrong key, or wrong associated data yields the
//! same [`VaultError::Authentication`] and no plaintext.

use std::fmt;

use chacha20poly1305::aead::{Aead, AeadCore, KeyInit, OsRng, Payload};
use chacha20poly1305::{ChaCha20Poly1305, Nonce};
use hmac::{Hmac, Mac};
use sha2::Sha256;

use crate::model::{self, CohortDataset, ModelError, Stage};

pub const MAGIC: &[u8; 4] = b"GLDS";
pub const VERSION: u8 = 0x01;
/// ChaCha20-Poly1305 (RFC 8439).
pub const CIPHER_CHACHA20_POLY1305: u8 = 0x01;
pub const NONCE_LEN: usize = 12;
pub const HEADER_LEN: usize = 4 + 1 + 1 + NONCE_LEN;
pub const TAG_LEN: usize = 16;
pub const KEY_LEN: usize = 32;
pub const DEFAULT_KEY_ENV: &str = "GLLA_KEY";
pub const CONTAINER_EXTENSION: &str = "glds.enc";

#[derive(Debug, thiserror::Error)]
pub enum VaultError {
    #[error("key must be exactly {KEY_LEN} bytes, got {0}")]
    KeyLength(usize),
    #[error("environment variable {0} is not set")]
    MissingKey(String),
    #[error("environment variable {0} must hold {len} hex characters", len = KEY_LEN * 2)]
    MalformedKey(String),
    #[error("container authentication failed")]
    Authentication,
    #[error(transparent)]
    Bundle(#[from] ModelError),
    #[error("container stage {container} disagrees with manifest stage {manifest}")]
    StageMismatch { container: Stage, manifest: Stage },
}

/// A 32-byte symmetric key. Debug output never shows the bytes.
#[derive(Clone, PartialEq, Eq)]
pub struct VaultKey([u8; KEY_LEN]);

impl VaultKey {
    pub fn from_slice(bytes: &[u8]) -> Result<Self, VaultError> {
        let arr: [u8; KEY_LEN] = bytes.try_into().map_err(|_| VaultError::KeyLength(bytes.len()))?;
        Ok(Self(arr))
    }

    pub fn from_hex(text: &str) -> Option<Self> {
        let bytes = hex::decode(text.trim()).ok()?;
        Self::from_slice(&bytes).ok()
    }

    /// Read a key from the environment variable `var` (64 hex characters).
    pub fn from_env(var: &str) -> Result<Self, VaultError> {
        let value = std::env::var(var).map_err(|_| VaultError::MissingKey(var.to_string()))?;
        Self::from_hex(&value).ok_or_else(|| VaultError::MalformedKey(var.to_string()))
    }

    pub fn as_bytes(&self) -> &[u8; KEY_LEN] {
        &self.0
    }

    /// Independent key for another purpose, HMAC-SHA256(key, label).
    pub fn derive(&self, label: &str) -> VaultKey {
        let mut mac = <Hmac<Sha256> as Mac>::new_from_slice(&self.0).expect("hmac accepts any key length");
        mac.update(label.as_bytes());
        VaultKey(mac.finalize().into_bytes().into())
    }
}

impl fmt::Debug for VaultKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("VaultKey(..)")
    }
}

fn header_aad(header: &[u8], associated: &[u8]) -> Vec<u8> {
    let mut aad = Vec::with_capacity(6 + associated.len());
    aad.extend_from_slice(&header[..6]);
    aad.extend_from_slice(associated);
    aad
}

/// Encrypt `plain` under `key`, binding `associated`. A fresh random nonce is drawn per call.
pub fn encrypt(plain: &[u8], key: &[u8], associated: &[u8]) -> Result<Vec<u8>, VaultError> {
    let key = VaultKey::from_slice(key)?;
    let cipher = ChaCha20Poly1305::new(key.as_bytes().into());
    let nonce = ChaCha20Poly1305::generate_nonce(&mut OsRng);

    let mut out = Vec::with_capacity(HEADER_LEN + plain.len() + TAG_LEN);
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(CIPHER_CHACHA20_POLY1305);
    out.extend_from_slice(&nonce);
    let aad = header_aad(&out, associated);
    let body = cipher
        .encrypt(&nonce, Payload { msg: plain, aad: &aad })
        .expect("chacha20poly1305 encryption is infallible for in-range lengths");
    out.extend_from_slice(&body);
    Ok(out)
}

pub fn decrypt(container: &[u8], key: &[u8], associated: &[u8]) -> Result<Vec<u8>, VaultError> {
    let key = VaultKey::from_slice(key)?;
    if container.len() < HEADER_LEN + TAG_LEN
        || &container[..4] != MAGIC
        || container[4] != VERSION
        || container[5] != CIPHER_CHACHA20_POLY1305
    {
        return Err(VaultError::Authentication);
    }
    let cipher = ChaCha20Poly1305::new(key.as_bytes().into());
    let nonce = Nonce::from_slice(&container[6..HEADER_LEN]);
    let aad = header_aad(container, associated);
    cipher
        .decrypt(nonce, Payload { msg: &container[HEADER_LEN..], aad: &aad })
        .map_err(|_| VaultError::Authentication)
}

/// Associated data binding a bundle container to its schema version and stage.
pub fn stage_associated_data(stage: Stage) -> Vec<u8> {
    format!("glds/{}/{}", model::SCHEMA_VERSION, stage).into_bytes()
}

/// Serialize and encrypt a dataset, bound to its manifest stage.
pub fn seal_dataset(ds: &CohortDataset, key: &VaultKey) -> Result<Vec<u8>, VaultError> {
    let plain = model::serialize(ds)?;
    encrypt(&plain, key.as_bytes(), &stage_associated_data(ds.stage()))
}

/// Decrypt a bundle container without knowing its stage in advance.
///
/// Each stage's associated data is tried in turn; the one that authenticates
/// is the container's stage and must agree with the manifest inside.
pub fn open_dataset(container: &[u8], key: &VaultKey) -> Result<CohortDataset, VaultError> {
    for stage in Stage::ALL {
        if let Ok(plain) = decrypt(container, key.as_bytes(), &stage_associated_data(stage)) {
            let ds = model::deserialize(&plain)?;
            if ds.stage() != stage {
                return Err(VaultError::StageMismatch { container: stage, manifest: ds.stage() });
            }
            return Ok(ds);
        }
    }
    Err(VaultError::Authentication)
}

#[cfg(test)]
mod tests {
    use super::*;

    const KEY: [u8; 32] = [7; 32];

    #[test]
    fn empty_plaintext_round_trips() {
        let c = encrypt(b"", &KEY, b"ad").unwrap();
        assert_eq!(c.len(), HEADER_LEN + TAG_LEN);
        assert_eq!(decrypt(&c, &KEY, b"ad").unwrap(), Vec::<u8>::new());
    }

    #[test]
    fn nonces_are_fresh() {
        let a = encrypt(b"same", &KEY, b"").unwrap();
        let b = encrypt(b"same", &KEY, b"").unwrap();
        assert_ne!(a[6..HEADER_LEN], b[6..HEADER_LEN]);
        assert_ne!(a[HEADER_LEN..], b[HEADER_LEN..]);
    }

    #[test]
    fn header_layout() {
        let c = encrypt(b"x", &KEY, b"").unwrap();
        assert_eq!(&c[..4], b"GLDS");
        assert_eq!(c[4], 0x01);
        assert_eq!(c[5], CIPHER_CHACHA20_POLY1305);
    }

    #[test]
    fn bad_key_length_is_usage_error() {
        assert!(matches!(encrypt(b"x", &[0; 31], b""), Err(VaultError::KeyLength(31))));
        assert!(matches!(decrypt(b"x", &[0; 33], b""), Err(VaultError::KeyLength(33))));
    }

    #[test]
    fn tampering_fails_authentication() {
        let c = encrypt(b"payload", &KEY, b"ad").unwrap();
        let mut flipped = c.clone();
        flipped[HEADER_LEN] ^= 0x01;
        assert!(matches!(decrypt(&flipped, &KEY, b"ad"), Err(VaultError::Authentication)));
        assert!(matches!(decrypt(&c, &[8; 32], b"ad"), Err(VaultError::Authentication)));
        assert!(matches!(decrypt(&c, &KEY, b"other"), Err(VaultError::Authentication)));
        assert!(matches!(decrypt(&c[..c.len() - 1], &KEY, b"ad"), Err(VaultError::Authentication)));
        let mut magic = c.clone();
        magic[0] = b'X';
        assert!(matches!(decrypt(&magic, &KEY, b"ad"), Err(VaultError::Authentication)));
    }

    #[test]
    fn dataset_stage_is_recovered() {
        let key = VaultKey::from_slice(&KEY).unwrap();
        let ds = CohortDataset::empty(Stage::Resolved).seal();
        let c = seal_dataset(&ds, &key).unwrap();
        assert_eq!(open_dataset(&c, &key).unwrap(), ds);
    }

    #[test]
    fn derived_keys_differ_by_label() {
        let key = VaultKey::from_slice(&KEY).unwrap();
        assert_ne!(key.derive("a"), key.derive("b"));
        assert_eq!(key.derive("a"), key.derive("a"));
        assert_eq!(format!("{key:?}"), "VaultKey(..)");
    }
}
