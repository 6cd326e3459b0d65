//! Convergent encryption and a challenge-response proof of ownership.
//!
//! The key is the SHA-256 of the plaintext. Encryption XORs the plaintext with
//! a SHA-256 counter-mode keystream, and the tag is the SHA-256 of the
//! ciphertext, so identical files always produce identical ciphertexts and tags.

use std::collections::BTreeSet;
use std::fmt;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CryptoError {
    #[error("empty file")]
    EmptyFile,
    #[error("empty ciphertext")]
    EmptyCiphertext,
    #[error("decryption produced data that does not match the key")]
    IntegrityFailure,
}

#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FileObject {
    bytes: Vec<u8>,
}

impl FileObject {
    pub fn new(bytes: impl Into<Vec<u8>>) -> Self {
        FileObject { bytes: bytes.into() }
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn length_bits(&self) -> u64 {
        self.bytes.len() as u64 * 8
    }
}

impl fmt::Debug for FileObject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FileObject({} bytes)", self.bytes.len())
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct ConvergentKey([u8; 32]);

impl ConvergentKey {
    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }
}

impl fmt::Debug for ConvergentKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ConvergentKey({})", hex::encode(&self.0[..4]))
    }
}

#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Ciphertext {
    bytes: Vec<u8>,
}

impl Ciphertext {
    pub fn from_bytes(bytes: impl Into<Vec<u8>>) -> Self {
        Ciphertext { bytes: bytes.into() }
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }
}

impl fmt::Debug for Ciphertext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Ciphertext({} bytes)", self.bytes.len())
    }
}

/// Content tag, rendered as lowercase hex.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Tag([u8; 32]);

impl Tag {
    pub fn from_bytes(bytes: [u8; 32]) -> Self {
        Tag(bytes)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    /// Short prefix for logs.
    pub fn short(&self) -> String {
        hex::encode(&self.0[..4])
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tag({})", self.short())
    }
}

impl std::str::FromStr for Tag {
    type Err = hex::FromHexError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut out = [0u8; 32];
        hex::decode_to_slice(s, &mut out)?;
        Ok(Tag(out))
    }
}

impl Serialize for Tag {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Tag {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

pub fn ce_keygen(d: &FileObject) -> Result<ConvergentKey, CryptoError> {
    if d.bytes.is_empty() {
        return Err(CryptoError::EmptyFile);
    }
    Ok(ConvergentKey(Sha256::digest(&d.bytes).into()))
}

fn apply_keystream(key: &ConvergentKey, data: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(data.len());
    for (counter, chunk) in data.chunks(32).enumerate() {
        let mut h = Sha256::new();
        h.update(key.0);
        h.update((counter as u64).to_be_bytes());
        let block = h.finalize();
        out.extend(chunk.iter().zip(block.iter()).map(|(a, b)| a ^ b));
    }
    out
}

pub fn ce_encrypt(k: &ConvergentKey, d: &FileObject) -> Ciphertext {
    Ciphertext { bytes: apply_keystream(k, &d.bytes) }
}

/// Decrypts and checks that the result hashes back to `k`.
pub fn ce_decrypt(k: &ConvergentKey, c: &Ciphertext) -> Result<FileObject, CryptoError> {
    if c.bytes.is_empty() {
        return Err(CryptoError::EmptyCiphertext);
    }
    let d = FileObject { bytes: apply_keystream(k, &c.bytes) };
    if ce_keygen(&d)? != *k {
        return Err(CryptoError::IntegrityFailure);
    }
    Ok(d)
}

pub fn ce_tag(c: &Ciphertext) -> Tag {
    Tag(Sha256::digest(&c.bytes).into())
}

/// Key, ciphertext and tag in one go.
pub fn ce_pipeline(d: &FileObject) -> Result<(ConvergentKey, Ciphertext, Tag), CryptoError> {
    let k = ce_keygen(d)?;
    let c = ce_encrypt(&k, d);
    let t = ce_tag(&c);
    Ok((k, c, t))
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PopChallenge(#[serde(with = "hex_array")] [u8; 16]);

#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PopProof(#[serde(with = "hex_array")] [u8; 32]);

impl fmt::Debug for PopChallenge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PopChallenge({})", hex::encode(self.0))
    }
}

impl fmt::Debug for PopProof {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PopProof({})", hex::encode(&self.0[..4]))
    }
}

mod hex_array {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer, const N: usize>(v: &[u8; N], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>, const N: usize>(d: D) -> Result<[u8; N], D::Error> {
        let s = String::deserialize(d)?;
        let mut out = [0u8; N];
        hex::decode_to_slice(&s, &mut out).map_err(serde::de::Error::custom)?;
        Ok(out)
    }
}

pub fn pop_prove(ch: &PopChallenge, c: &Ciphertext) -> PopProof {
    let mut h = Sha256::new();
    h.update(b"pop");
    h.update(ch.0);
    h.update(&c.bytes);
    PopProof(h.finalize().into())
}

/// Issues single-use challenges from a seeded stream.
///
/// A challenge is consumed by its first verification, so replays and stale
/// challenges fail.
#[derive(Debug, Clone)]
pub struct ChallengeBook {
    rng: ChaCha20Rng,
    outstanding: BTreeSet<PopChallenge>,
}

impl ChallengeBook {
    pub fn new(seed: u64) -> Self {
        ChallengeBook { rng: ChaCha20Rng::seed_from_u64(seed), outstanding: BTreeSet::new() }
    }

    pub fn pop_challenge(&mut self) -> PopChallenge {
        let mut nonce = [0u8; 16];
        self.rng.fill_bytes(&mut nonce);
        let ch = PopChallenge(nonce);
        self.outstanding.insert(ch);
        ch
    }

    pub fn pop_verify(&mut self, ch: &PopChallenge, proof: &PopProof, stored: &Ciphertext) -> bool {
        if !self.outstanding.remove(ch) {
            return false;
        }
        pop_prove(ch, stored) == *proof
    }

    pub fn outstanding(&self) -> usize {
        self.outstanding.len()
    }
}
