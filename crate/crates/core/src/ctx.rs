//! Per-dispatch context handed to role handlers: the seeded randomness
//! stream, the crypto suite, the operation meter, and read-only world
//! facts (step counter, public-key directory, configuration).
//!
//! All crypto performed by a role goes through these wrappers so the
//! bench mode can report operation counts per role as its energy proxy.

use std::collections::BTreeMap;

use rand_chacha::ChaCha20Rng;

use crate::crypto::{
    AsymKeyPair, AttestedKeyPair, Certificate, CryptoError, CryptoSuite, PrivateKey, PublicKey,
    Signature, SymmetricKey,
};
use crate::sut::WorldConfig;
use crate::wire::{Identifier, Nonce};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum RoleKind {
    Td,
    Cd,
    Ts,
}

impl RoleKind {
    pub fn label(&self) -> &'static str {
        match self {
            RoleKind::Td => "TD",
            RoleKind::Cd => "CD",
            RoleKind::Ts => "TS",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum CryptoOp {
    AsymEnc,
    AsymDec,
    Sign,
    Verify,
    SymEnc,
    SymDec,
    KeyGen,
}

impl CryptoOp {
    pub fn label(&self) -> &'static str {
        match self {
            CryptoOp::AsymEnc => "asym_enc",
            CryptoOp::AsymDec => "asym_dec",
            CryptoOp::Sign => "sign",
            CryptoOp::Verify => "verify",
            CryptoOp::SymEnc => "sym_enc",
            CryptoOp::SymDec => "sym_dec",
            CryptoOp::KeyGen => "key_gen",
        }
    }

    pub const ALL: [CryptoOp; 7] = [
        CryptoOp::AsymEnc,
        CryptoOp::AsymDec,
        CryptoOp::Sign,
        CryptoOp::Verify,
        CryptoOp::SymEnc,
        CryptoOp::SymDec,
        CryptoOp::KeyGen,
    ];
}

/// Crypto-operation counters per role; the reproducible stand-in for
/// hardware energy measurements.
#[derive(Debug, Clone, Default)]
pub struct Meter {
    counts: BTreeMap<(RoleKind, CryptoOp), u64>,
}

impl Meter {
    pub fn count(&mut self, role: RoleKind, op: CryptoOp) {
        *self.counts.entry((role, op)).or_insert(0) += 1;
    }

    pub fn get(&self, role: RoleKind, op: CryptoOp) -> u64 {
        self.counts.get(&(role, op)).copied().unwrap_or(0)
    }

    pub fn role_total(&self, role: RoleKind) -> u64 {
        self.counts
            .iter()
            .filter(|((r, _), _)| *r == role)
            .map(|(_, v)| v)
            .sum()
    }

    pub fn snapshot(&self) -> Meter {
        self.clone()
    }

    /// Counts accumulated since `earlier`.
    pub fn since(&self, earlier: &Meter) -> Meter {
        let mut diff = Meter::default();
        for (key, value) in &self.counts {
            let before = earlier.counts.get(key).copied().unwrap_or(0);
            if *value > before {
                diff.counts.insert(*key, value - before);
            }
        }
        diff
    }
}

/// World-level public knowledge: every provisioned device's public key.
#[derive(Debug, Clone, Default)]
pub struct Directory {
    pub td_keys: BTreeMap<Identifier, PublicKey>,
}

pub struct NetCtx<'a> {
    pub step: u64,
    pub role: RoleKind,
    pub suite: CryptoSuite,
    pub cfg: &'a WorldConfig,
    pub directory: &'a Directory,
    pub attestation_root_pk: PublicKey,
    pub rng: &'a mut ChaCha20Rng,
    pub meter: &'a mut Meter,
}

impl NetCtx<'_> {
    pub fn fresh_nonce(&mut self) -> Nonce {
        crate::crypto::fresh_nonce(self.rng)
    }

    pub fn generate_keypair(&mut self) -> AsymKeyPair {
        self.meter.count(self.role, CryptoOp::KeyGen);
        self.suite.generate_keypair(self.rng)
    }

    pub fn gen_symmetric_key(&mut self) -> SymmetricKey {
        self.meter.count(self.role, CryptoOp::KeyGen);
        self.suite.gen_symmetric_key(self.rng)
    }

    pub fn asym_encrypt(&mut self, pk: &PublicKey, plaintext: &[u8]) -> Vec<u8> {
        self.meter.count(self.role, CryptoOp::AsymEnc);
        self.suite.asym_encrypt(pk, plaintext, self.rng)
    }

    pub fn asym_decrypt(&mut self, key: &PrivateKey, ciphertext: &[u8]) -> Result<Vec<u8>, CryptoError> {
        self.meter.count(self.role, CryptoOp::AsymDec);
        self.suite.asym_decrypt(key, ciphertext)
    }

    pub fn sign(&mut self, key: &PrivateKey, message: &[u8]) -> Signature {
        self.meter.count(self.role, CryptoOp::Sign);
        self.suite.sign(key, message)
    }

    pub fn verify(&mut self, pk: &PublicKey, message: &[u8], signature: &Signature) -> bool {
        self.meter.count(self.role, CryptoOp::Verify);
        self.suite.verify(pk, message, signature)
    }

    pub fn sym_encrypt(&mut self, key: &SymmetricKey, plaintext: &[u8]) -> Vec<u8> {
        self.meter.count(self.role, CryptoOp::SymEnc);
        self.suite.sym_encrypt(key, plaintext, self.rng)
    }

    pub fn sym_decrypt(&mut self, key: &SymmetricKey, ciphertext: &[u8]) -> Result<Vec<u8>, CryptoError> {
        self.meter.count(self.role, CryptoOp::SymDec);
        self.suite.sym_decrypt(key, ciphertext)
    }

    pub fn issue_attested_keypair(&mut self, root: &AsymKeyPair, root_label: &str, device_label: &str) -> AttestedKeyPair {
        self.meter.count(self.role, CryptoOp::KeyGen);
        self.meter.count(self.role, CryptoOp::Sign);
        self.meter.count(self.role, CryptoOp::Sign);
        self.suite.issue_attested_keypair(root, root_label, device_label, self.rng)
    }

    pub fn verify_attestation_chain(&mut self, root_public: &PublicKey, chain: &[Certificate]) -> bool {
        for _ in chain {
            self.meter.count(self.role, CryptoOp::Verify);
        }
        self.suite.verify_attestation_chain(root_public, chain)
    }
}
