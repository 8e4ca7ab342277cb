//! Default backend: x25519 sealed boxes for public-key encryption,
//! ed25519 for signatures, ChaCha20-Poly1305 for symmetric encryption.

use chacha20poly1305::aead::Aead;
use chacha20poly1305::{ChaCha20Poly1305, Key, KeyInit, Nonce as AeadNonce};
use ed25519_dalek::{Signer, SigningKey, Verifier, VerifyingKey};
use rand::RngCore;
use rand_chacha::ChaCha20Rng;

use super::{sha256, CryptoError, PrivateKey, PublicKey, Signature, SymmetricKey};

const SYM_NONCE_LEN: usize = 12;
const SEAL_OVERHEAD: usize = 32 + 16; // ephemeral public key + AEAD tag

fn enc_secret(seed: &[u8; 32]) -> x25519_dalek::StaticSecret {
    x25519_dalek::StaticSecret::from(sha256(&[b"secrow-enc-derive", seed]))
}

pub(super) fn public_from_seed(seed: &[u8; 32]) -> PublicKey {
    let sign = SigningKey::from_bytes(seed).verifying_key().to_bytes();
    let enc = x25519_dalek::PublicKey::from(&enc_secret(seed)).to_bytes();
    PublicKey { sign, enc }
}

pub(super) fn asym_encrypt(pk: &PublicKey, plaintext: &[u8], rng: &mut ChaCha20Rng) -> Vec<u8> {
    let mut eph_seed = [0u8; 32];
    rng.fill_bytes(&mut eph_seed);
    let eph = x25519_dalek::StaticSecret::from(eph_seed);
    let eph_pk = x25519_dalek::PublicKey::from(&eph);
    let shared = eph.diffie_hellman(&x25519_dalek::PublicKey::from(pk.enc));
    let key = sha256(&[b"secrow-seal", shared.as_bytes(), eph_pk.as_bytes(), &pk.enc]);
    let cipher = ChaCha20Poly1305::new(Key::from_slice(&key));
    // Fresh key per message, so a fixed nonce is fine.
    let ct = cipher
        .encrypt(AeadNonce::from_slice(&[0u8; SYM_NONCE_LEN]), plaintext)
        .expect("aead encrypt");
    let mut out = Vec::with_capacity(32 + ct.len());
    out.extend_from_slice(eph_pk.as_bytes());
    out.extend_from_slice(&ct);
    out
}

pub(super) fn asym_decrypt(key: &PrivateKey, ciphertext: &[u8]) -> Result<Vec<u8>, CryptoError> {
    if ciphertext.len() < SEAL_OVERHEAD {
        return Err(CryptoError::DecryptFailure);
    }
    let mut eph_pk = [0u8; 32];
    eph_pk.copy_from_slice(&ciphertext[..32]);
    let secret = enc_secret(key.seed());
    let own_pk = x25519_dalek::PublicKey::from(&secret);
    let shared = secret.diffie_hellman(&x25519_dalek::PublicKey::from(eph_pk));
    let aead_key = sha256(&[b"secrow-seal", shared.as_bytes(), &eph_pk, own_pk.as_bytes()]);
    let cipher = ChaCha20Poly1305::new(Key::from_slice(&aead_key));
    cipher
        .decrypt(AeadNonce::from_slice(&[0u8; SYM_NONCE_LEN]), &ciphertext[32..])
        .map_err(|_| CryptoError::DecryptFailure)
}

pub(super) fn sign(key: &PrivateKey, message: &[u8]) -> Signature {
    let sk = SigningKey::from_bytes(key.seed());
    Signature::new(sk.sign(message).to_bytes().to_vec())
}

pub(super) fn verify(pk: &PublicKey, message: &[u8], signature: &Signature) -> bool {
    let Ok(vk) = VerifyingKey::from_bytes(&pk.sign) else {
        return false;
    };
    let Ok(sig) = ed25519_dalek::Signature::from_slice(signature.as_bytes()) else {
        return false;
    };
    vk.verify(message, &sig).is_ok()
}

pub(super) fn sym_encrypt(key: &SymmetricKey, plaintext: &[u8], rng: &mut ChaCha20Rng) -> Vec<u8> {
    let mut nonce = [0u8; SYM_NONCE_LEN];
    rng.fill_bytes(&mut nonce);
    let cipher = ChaCha20Poly1305::new(Key::from_slice(&key.0));
    let ct = cipher
        .encrypt(AeadNonce::from_slice(&nonce), plaintext)
        .expect("aead encrypt");
    let mut out = Vec::with_capacity(SYM_NONCE_LEN + ct.len());
    out.extend_from_slice(&nonce);
    out.extend_from_slice(&ct);
    out
}

pub(super) fn sym_decrypt(key: &SymmetricKey, ciphertext: &[u8]) -> Result<Vec<u8>, CryptoError> {
    if ciphertext.len() < SYM_NONCE_LEN + 16 {
        return Err(CryptoError::AuthFailure);
    }
    let cipher = ChaCha20Poly1305::new(Key::from_slice(&key.0));
    cipher
        .decrypt(AeadNonce::from_slice(&ciphertext[..SYM_NONCE_LEN]), &ciphertext[SYM_NONCE_LEN..])
        .map_err(|_| CryptoError::AuthFailure)
}
