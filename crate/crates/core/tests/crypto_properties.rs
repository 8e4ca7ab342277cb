//! Smoke-level security properties of the crypto backends: ciphertext
//! freshness, forgery resistance against random signatures, and seeded
//! determinism of full operation sequences.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use secrow_core::crypto::{CryptoSuite, Signature};

fn suites() -> Vec<CryptoSuite> {
    vec![CryptoSuite::real(), CryptoSuite::toy()]
}

#[test]
fn equal_plaintexts_encrypt_differently_under_fresh_randomness() {
    for suite in suites() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let pair = suite.generate_keypair(&mut rng);
        let sym = suite.gen_symmetric_key(&mut rng);
        for _ in 0..100 {
            let a = suite.asym_encrypt(&pair.public, b"same plaintext", &mut rng);
            let b = suite.asym_encrypt(&pair.public, b"same plaintext", &mut rng);
            assert_ne!(a, b);
            let a = suite.sym_encrypt(&sym, b"same plaintext", &mut rng);
            let b = suite.sym_encrypt(&sym, b"same plaintext", &mut rng);
            assert_ne!(a, b);
        }
    }
}

#[test]
fn random_strings_never_verify_as_signatures() {
    // 10^4 forgery trials per backend, zero successes expected.
    for suite in suites() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let pair = suite.generate_keypair(&mut rng);
        let mut successes = 0;
        for _ in 0..10_000 {
            let mut junk = vec![0u8; 64];
            rng.fill_bytes(&mut junk);
            if suite.verify(&pair.public, b"target message", &Signature::new(junk)) {
                successes += 1;
            }
        }
        assert_eq!(successes, 0);
    }
}

#[test]
fn seeded_streams_reproduce_whole_operation_sequences() {
    for suite in suites() {
        let run = || {
            let mut rng = ChaCha20Rng::seed_from_u64(3);
            let pair = suite.generate_keypair(&mut rng);
            let sym = suite.gen_symmetric_key(&mut rng);
            let ct = suite.asym_encrypt(&pair.public, b"p", &mut rng);
            let sig = suite.sign(&pair.private, b"m");
            let sct = suite.sym_encrypt(&sym, b"q", &mut rng);
            (pair.public, ct, sig, sct)
        };
        assert_eq!(run(), run());
    }
}

#[test]
fn tampered_asym_ciphertext_fails() {
    for suite in suites() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let pair = suite.generate_keypair(&mut rng);
        let ct = suite.asym_encrypt(&pair.public, &[0xaa; 64], &mut rng);
        for i in 0..ct.len() {
            let mut broken = ct.clone();
            broken[i] ^= 0x80;
            assert!(
                suite.asym_decrypt(&pair.private, &broken).is_err(),
                "bit flip at byte {i} went undetected"
            );
        }
    }
}
