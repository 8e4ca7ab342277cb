//! Seeded hash-based backend for fast deterministic protocol tests.
//!
//! This backend models the primitives symbolically: round trips, key
//! binding, and tamper detection behave like the real thing, but the
//! constructions offer no actual security (public keys are hash images
//! and "signatures" are hashes anyone holding the public key could
//! recompute). Attacks in the harness are structural, never
//! cryptanalytic, so the distinction is invisible to the protocol.

use rand::RngCore;
use rand_chacha::ChaCha20Rng;

use super::{keystream, sha256, CryptoError, PrivateKey, PublicKey, Signature, SymmetricKey};

const SALT_LEN: usize = 16;
const TAG_LEN: usize = 16;

pub(super) fn public_from_seed(seed: &[u8; 32]) -> PublicKey {
    PublicKey {
        sign: sha256(&[b"toy-sign-pk", seed]),
        enc: sha256(&[b"toy-enc-pk", seed]),
    }
}

// Layout: enc-half of target key (32) || salt (16) || tag (16) || body.
pub(super) fn asym_encrypt(pk: &PublicKey, plaintext: &[u8], rng: &mut ChaCha20Rng) -> Vec<u8> {
    let mut salt = [0u8; SALT_LEN];
    rng.fill_bytes(&mut salt);
    let stream = keystream(&sha256(&[b"toy-asym", &pk.enc, &salt]), plaintext.len());
    let tag = sha256(&[b"toy-asym-tag", &pk.enc, &salt, plaintext]);
    let mut out = Vec::with_capacity(32 + SALT_LEN + TAG_LEN + plaintext.len());
    out.extend_from_slice(&pk.enc);
    out.extend_from_slice(&salt);
    out.extend_from_slice(&tag[..TAG_LEN]);
    out.extend(plaintext.iter().zip(&stream).map(|(p, k)| p ^ k));
    out
}

pub(super) fn asym_decrypt(key: &PrivateKey, ciphertext: &[u8]) -> Result<Vec<u8>, CryptoError> {
    if ciphertext.len() < 32 + SALT_LEN + TAG_LEN {
        return Err(CryptoError::DecryptFailure);
    }
    let own = public_from_seed(key.seed());
    if ciphertext[..32] != own.enc {
        return Err(CryptoError::DecryptFailure);
    }
    let salt = &ciphertext[32..32 + SALT_LEN];
    let tag = &ciphertext[32 + SALT_LEN..32 + SALT_LEN + TAG_LEN];
    let body = &ciphertext[32 + SALT_LEN + TAG_LEN..];
    let stream = keystream(&sha256(&[b"toy-asym", &own.enc, salt]), body.len());
    let plaintext: Vec<u8> = body.iter().zip(&stream).map(|(c, k)| c ^ k).collect();
    let expect = sha256(&[b"toy-asym-tag", &own.enc, salt, &plaintext]);
    if tag != &expect[..TAG_LEN] {
        return Err(CryptoError::DecryptFailure);
    }
    Ok(plaintext)
}

pub(super) fn sign(key: &PrivateKey, message: &[u8]) -> Signature {
    let pk = public_from_seed(key.seed());
    Signature::new(sha256(&[b"toy-sig", &pk.sign, message]).to_vec())
}

pub(super) fn verify(pk: &PublicKey, message: &[u8], signature: &Signature) -> bool {
    signature.as_bytes() == sha256(&[b"toy-sig", &pk.sign, message])
}

// Layout: salt (16) || tag (16) || body.
pub(super) fn sym_encrypt(key: &SymmetricKey, plaintext: &[u8], rng: &mut ChaCha20Rng) -> Vec<u8> {
    let mut salt = [0u8; SALT_LEN];
    rng.fill_bytes(&mut salt);
    let stream = keystream(&sha256(&[b"toy-sym", &key.0, &salt]), plaintext.len());
    let tag = sha256(&[b"toy-sym-tag", &key.0, &salt, plaintext]);
    let mut out = Vec::with_capacity(SALT_LEN + TAG_LEN + plaintext.len());
    out.extend_from_slice(&salt);
    out.extend_from_slice(&tag[..TAG_LEN]);
    out.extend(plaintext.iter().zip(&stream).map(|(p, k)| p ^ k));
    out
}

pub(super) fn sym_decrypt(key: &SymmetricKey, ciphertext: &[u8]) -> Result<Vec<u8>, CryptoError> {
    if ciphertext.len() < SALT_LEN + TAG_LEN {
        return Err(CryptoError::AuthFailure);
    }
    let salt = &ciphertext[..SALT_LEN];
    let tag = &ciphertext[SALT_LEN..SALT_LEN + TAG_LEN];
    let body = &ciphertext[SALT_LEN + TAG_LEN..];
    let stream = keystream(&sha256(&[b"toy-sym", &key.0, salt]), body.len());
    let plaintext: Vec<u8> = body.iter().zip(&stream).map(|(c, k)| c ^ k).collect();
    let expect = sha256(&[b"toy-sym-tag", &key.0, salt, &plaintext]);
    if tag != &expect[..TAG_LEN] {
        return Err(CryptoError::AuthFailure);
    }
    Ok(plaintext)
}
