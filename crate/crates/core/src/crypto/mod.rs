//! Cryptographic primitives behind the protocol: asymmetric encryption,
//! signatures, authenticated symmetric encryption, and the attestation
//! certificate chain for temporary keys.
//!
//! Two interchangeable backends exist. `Real` uses x25519 sealed boxes,
//! ed25519 signatures, and ChaCha20-Poly1305. `Toy` is a fast seeded
//! hash-based construction with the same algebra but no security margin;
//! it exists so protocol tests stay cheap and byte-reproducible. All
//! randomness comes from a caller-supplied seeded stream, so full runs
//! are deterministic under a fixed seed.

use rand::RngCore;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::wire::Nonce;

mod real;
mod toy;

pub const PUBLIC_KEY_LEN: usize = 64;
pub const SYMMETRIC_KEY_LEN: usize = 32;

/// Combined verification/encryption public key (32 bytes each half).
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PublicKey {
    pub sign: [u8; 32],
    pub enc: [u8; 32],
}

impl PublicKey {
    pub fn encode(&self) -> [u8; PUBLIC_KEY_LEN] {
        let mut out = [0u8; PUBLIC_KEY_LEN];
        out[..32].copy_from_slice(&self.sign);
        out[32..].copy_from_slice(&self.enc);
        out
    }

    pub fn decode(bytes: &[u8]) -> Option<PublicKey> {
        if bytes.len() != PUBLIC_KEY_LEN {
            return None;
        }
        let mut pk = PublicKey { sign: [0; 32], enc: [0; 32] };
        pk.sign.copy_from_slice(&bytes[..32]);
        pk.enc.copy_from_slice(&bytes[32..]);
        Some(pk)
    }
}

impl std::fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "PublicKey({}..)", hex_prefix(&self.sign))
    }
}

/// Private half of a key pair. Both the signing and the decryption
/// secret derive from the stored seed.
#[derive(Clone, PartialEq, Eq)]
pub struct PrivateKey {
    seed: [u8; 32],
}

impl PrivateKey {
    pub(crate) fn seed(&self) -> &[u8; 32] {
        &self.seed
    }

    /// Raw secret bytes, exposed only so tests can scan transcripts for
    /// key leakage.
    pub fn leak_check_bytes(&self) -> [u8; 32] {
        self.seed
    }
}

impl std::fmt::Debug for PrivateKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("PrivateKey(..)")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AsymKeyPair {
    pub public: PublicKey,
    pub private: PrivateKey,
}

/// 32-byte key for authenticated symmetric encryption.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SymmetricKey(pub [u8; SYMMETRIC_KEY_LEN]);

impl std::fmt::Debug for SymmetricKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "SymmetricKey({}..)", hex_prefix(&self.0))
    }
}

/// Detached signature; length depends on the backend.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Signature(Vec<u8>);

impl Signature {
    pub fn new(bytes: Vec<u8>) -> Self {
        Signature(bytes)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CryptoError {
    #[error("decryption failure")]
    DecryptFailure,
    #[error("authentication failure")]
    AuthFailure,
}

/// One link of an attestation chain: a public key signed by its issuer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Certificate {
    pub subject_public: PublicKey,
    pub subject_label: String,
    pub issuer_id: String,
    pub signature: Signature,
}

impl Certificate {
    /// The bytes the issuer signs.
    pub fn signing_bytes(subject_public: &PublicKey, subject_label: &str, issuer_id: &str) -> Vec<u8> {
        let mut out = Vec::new();
        push_field(&mut out, &subject_public.encode());
        push_field(&mut out, subject_label.as_bytes());
        push_field(&mut out, issuer_id.as_bytes());
        out
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Self::signing_bytes(&self.subject_public, &self.subject_label, &self.issuer_id);
        push_field(&mut out, self.signature.as_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Option<Certificate> {
        let (subject, rest) = take_field(bytes)?;
        let (label, rest) = take_field(rest)?;
        let (issuer, rest) = take_field(rest)?;
        let (sig, rest) = take_field(rest)?;
        if !rest.is_empty() {
            return None;
        }
        Some(Certificate {
            subject_public: PublicKey::decode(subject)?,
            subject_label: std::str::from_utf8(label).ok()?.to_string(),
            issuer_id: std::str::from_utf8(issuer).ok()?.to_string(),
            signature: Signature::new(sig.to_vec()),
        })
    }
}

fn push_field(out: &mut Vec<u8>, bytes: &[u8]) {
    out.extend_from_slice(&(bytes.len() as u16).to_be_bytes());
    out.extend_from_slice(bytes);
}

fn take_field(bytes: &[u8]) -> Option<(&[u8], &[u8])> {
    if bytes.len() < 2 {
        return None;
    }
    let len = u16::from_be_bytes([bytes[0], bytes[1]]) as usize;
    if bytes.len() < 2 + len {
        return None;
    }
    Some((&bytes[2..2 + len], &bytes[2 + len..]))
}

/// Temporary key pair plus its certificate chain, leaf first.
#[derive(Debug, Clone)]
pub struct AttestedKeyPair {
    pub pair: AsymKeyPair,
    pub chain: Vec<Certificate>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendKind {
    Real,
    Toy,
}

/// Dispatch handle for one backend's primitive set.
#[derive(Debug, Clone, Copy)]
pub struct CryptoSuite {
    kind: BackendKind,
}

impl CryptoSuite {
    pub fn new(kind: BackendKind) -> Self {
        CryptoSuite { kind }
    }

    pub fn real() -> Self {
        CryptoSuite::new(BackendKind::Real)
    }

    pub fn toy() -> Self {
        CryptoSuite::new(BackendKind::Toy)
    }

    pub fn kind(&self) -> BackendKind {
        self.kind
    }

    pub fn generate_keypair(&self, rng: &mut ChaCha20Rng) -> AsymKeyPair {
        let mut seed = [0u8; 32];
        rng.fill_bytes(&mut seed);
        self.keypair_from_seed(seed)
    }

    pub fn keypair_from_seed(&self, seed: [u8; 32]) -> AsymKeyPair {
        let public = match self.kind {
            BackendKind::Real => real::public_from_seed(&seed),
            BackendKind::Toy => toy::public_from_seed(&seed),
        };
        AsymKeyPair { public, private: PrivateKey { seed } }
    }

    pub fn asym_encrypt(&self, pk: &PublicKey, plaintext: &[u8], rng: &mut ChaCha20Rng) -> Vec<u8> {
        match self.kind {
            BackendKind::Real => real::asym_encrypt(pk, plaintext, rng),
            BackendKind::Toy => toy::asym_encrypt(pk, plaintext, rng),
        }
    }

    pub fn asym_decrypt(&self, key: &PrivateKey, ciphertext: &[u8]) -> Result<Vec<u8>, CryptoError> {
        match self.kind {
            BackendKind::Real => real::asym_decrypt(key, ciphertext),
            BackendKind::Toy => toy::asym_decrypt(key, ciphertext),
        }
    }

    pub fn sign(&self, key: &PrivateKey, message: &[u8]) -> Signature {
        match self.kind {
            BackendKind::Real => real::sign(key, message),
            BackendKind::Toy => toy::sign(key, message),
        }
    }

    pub fn verify(&self, pk: &PublicKey, message: &[u8], signature: &Signature) -> bool {
        match self.kind {
            BackendKind::Real => real::verify(pk, message, signature),
            BackendKind::Toy => toy::verify(pk, message, signature),
        }
    }

    pub fn gen_symmetric_key(&self, rng: &mut ChaCha20Rng) -> SymmetricKey {
        let mut key = [0u8; SYMMETRIC_KEY_LEN];
        rng.fill_bytes(&mut key);
        SymmetricKey(key)
    }

    pub fn sym_encrypt(&self, key: &SymmetricKey, plaintext: &[u8], rng: &mut ChaCha20Rng) -> Vec<u8> {
        match self.kind {
            BackendKind::Real => real::sym_encrypt(key, plaintext, rng),
            BackendKind::Toy => toy::sym_encrypt(key, plaintext, rng),
        }
    }

    pub fn sym_decrypt(&self, key: &SymmetricKey, ciphertext: &[u8]) -> Result<Vec<u8>, CryptoError> {
        match self.kind {
            BackendKind::Real => real::sym_decrypt(key, ciphertext),
            BackendKind::Toy => toy::sym_decrypt(key, ciphertext),
        }
    }

    /// Issue a temporary key pair with a certificate chain rooted in the
    /// given attestation root. The chain is leaf first, root last; the
    /// verifier accepts any depth.
    pub fn issue_attested_keypair(
        &self,
        root: &AsymKeyPair,
        root_label: &str,
        device_label: &str,
        rng: &mut ChaCha20Rng,
    ) -> AttestedKeyPair {
        let pair = self.generate_keypair(rng);
        let leaf_bytes = Certificate::signing_bytes(&pair.public, device_label, root_label);
        let leaf = Certificate {
            subject_public: pair.public,
            subject_label: device_label.to_string(),
            issuer_id: root_label.to_string(),
            signature: self.sign(&root.private, &leaf_bytes),
        };
        let root_bytes = Certificate::signing_bytes(&root.public, root_label, root_label);
        let root_cert = Certificate {
            subject_public: root.public,
            subject_label: root_label.to_string(),
            issuer_id: root_label.to_string(),
            signature: self.sign(&root.private, &root_bytes),
        };
        AttestedKeyPair { pair, chain: vec![leaf, root_cert] }
    }

    /// True iff every certificate verifies under its issuer's key and the
    /// final certificate is the configured root.
    pub fn verify_attestation_chain(&self, root_public: &PublicKey, chain: &[Certificate]) -> bool {
        if chain.is_empty() {
            return false;
        }
        for window in chain.windows(2) {
            let (cert, issuer) = (&window[0], &window[1]);
            let bytes = Certificate::signing_bytes(&cert.subject_public, &cert.subject_label, &cert.issuer_id);
            if !self.verify(&issuer.subject_public, &bytes, &cert.signature) {
                return false;
            }
        }
        let root = chain.last().unwrap();
        if root.subject_public != *root_public {
            return false;
        }
        let bytes = Certificate::signing_bytes(&root.subject_public, &root.subject_label, &root.issuer_id);
        self.verify(root_public, &bytes, &root.signature)
    }
}

/// Draw a fresh nonce; the all-zero value is reserved and re-drawn.
pub fn fresh_nonce(rng: &mut ChaCha20Rng) -> Nonce {
    loop {
        let mut bytes = [0u8; 16];
        rng.fill_bytes(&mut bytes);
        if bytes != [0u8; 16] {
            return Nonce(bytes);
        }
    }
}

pub(crate) fn sha256(parts: &[&[u8]]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update(part);
    }
    hasher.finalize().into()
}

/// Counter-mode hash keystream used by the toy backend.
pub(crate) fn keystream(seed: &[u8; 32], len: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(len);
    let mut counter = 0u32;
    while out.len() < len {
        let block = sha256(&[seed, &counter.to_be_bytes()]);
        out.extend_from_slice(&block);
        counter += 1;
    }
    out.truncate(len);
    out
}

fn hex_prefix(bytes: &[u8]) -> String {
    bytes.iter().take(4).map(|b| format!("{b:02x}")).collect()
}
