//! Golden-file corpus for the canonical wire encoding: one binary file
//! per message tag, checked bit-exactly. Regenerate intentionally with
//! `UPDATE_WIRE_GOLDEN=1 cargo test -p secrow-core --test golden_wire`.

use std::path::PathBuf;

use secrow_core::crypto::{Certificate, PublicKey, Signature};
use secrow_core::wire::{
    decode_message, encode_message, ErrorCode, Identifier, LocationFix, Nonce, PrimaryCmd,
    ProtocolMessage, SessionToken,
};

fn pk(fill: u8) -> PublicKey {
    PublicKey { sign: [fill; 32], enc: [fill ^ 0xff; 32] }
}

fn sig(fill: u8) -> Signature {
    Signature::new(vec![fill; 64])
}

fn chain() -> Vec<Certificate> {
    vec![
        Certificate {
            subject_public: pk(0x31),
            subject_label: "secrow-tee".to_string(),
            issuer_id: "secrow-attestation-root".to_string(),
            signature: sig(0x32),
        },
        Certificate {
            subject_public: pk(0x33),
            subject_label: "secrow-attestation-root".to_string(),
            issuer_id: "secrow-attestation-root".to_string(),
            signature: sig(0x34),
        },
    ]
}

fn fix() -> LocationFix {
    LocationFix::new(371_234_567, -1_197_654_321, 86_400).unwrap()
}

/// One representative message per tag, with fixed deterministic contents.
fn corpus() -> Vec<ProtocolMessage> {
    use ProtocolMessage::*;
    let td = Identifier::td([0x00, 0x1b, 0x44, 0x11, 0x3a, 0xb7]);
    let cd = Identifier::cd([0xc0, 0xff, 0xee, 0x00, 0x00, 0x01]);
    vec![
        AddPOwner { pk: pk(0x01) },
        PairingChallenge { n1: Nonce([0x02; 16]) },
        PairingProof { signature: sig(0x03) },
        AddOwnerRequest { session: SessionToken([0x04; 16]), cd_id: cd, td_id: td },
        OwnershipTicket { ticket: vec![0x05; 48] },
        CheckOwner { pk: pk(0x06), ticket: vec![0x07; 48] },
        OwnershipProof { proof: vec![0x08; 96] },
        CommitOwner { session: SessionToken([0x09; 16]), proof: vec![0x0a; 96] },
        PrimaryCmdBegin { cmd: PrimaryCmd::UpdateLocKey },
        PrimaryCmdChallenge { challenge: vec![0x0b; 48] },
        PrimaryCmdRequest { cmd: PrimaryCmd::AddSOwner, request: vec![0x0c; 80] },
        LocUpdateRequest { td_id: td, tpk: pk(0x0d), chain: chain() },
        LocUpdateGrant { e_c: vec![0x0e; 48], e_t: vec![0x0f; 48] },
        SignTokenRequest {
            e_t: vec![0x10; 48],
            tpk: pk(0x11),
            chain: chain(),
            loc: fix(),
            n_c: Nonce([0x12; 16]),
            claim_sig: sig(0x13),
        },
        SignTokenResponse { s_t: sig(0x14), e_l: vec![0x15; 60] },
        AttestedLocationUpdate { tpk: pk(0x16), s_t: sig(0x17), e_l: vec![0x18; 60] },
        LocQueryRequest { session: SessionToken([0x19; 16]), td_id: td },
        LocQueryResponse { token: vec![0x1a; 108] },
        Ack,
        Err { code: ErrorCode::NotInPairingMode },
        RingRequest { pk: pk(0x1b) },
        RingChallenge { nonce: Nonce([0x1c; 16]) },
        RingProof { pk: pk(0x1d), signature: sig(0x1e) },
        BaselineClaim { token: SessionToken([0x1f; 16]), trackerid: "0000b73a-11441b00".to_string() },
        BaselineUpdate { trackerid: "0000b73a-11441b00".to_string(), loc: fix() },
        BaselineQuery { token: SessionToken([0x20; 16]) },
        BaselineQueryResponse {
            items: vec![
                ("0000b73a-11441b00".to_string(), fix()),
                ("0000b83a-11441b00".to_string(), LocationFix::new(0, 0, 0).unwrap()),
            ],
        },
        BaselineRing,
    ]
}

fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

#[test]
fn corpus_covers_every_tag_once() {
    let mut tags: Vec<u8> = corpus().iter().map(|m| m.tag()).collect();
    tags.sort_unstable();
    tags.dedup();
    assert_eq!(tags.len(), corpus().len());
}

#[test]
fn golden_files_match_bit_exactly() {
    let dir = golden_dir();
    let update = std::env::var("UPDATE_WIRE_GOLDEN").is_ok();
    if update {
        std::fs::create_dir_all(&dir).unwrap();
    }
    for msg in corpus() {
        let encoded = encode_message(&msg);
        let path = dir.join(format!("{}.bin", msg.tag_name()));
        if update {
            std::fs::write(&path, &encoded).unwrap();
            continue;
        }
        let golden = std::fs::read(&path)
            .unwrap_or_else(|_| panic!("missing golden file {}", path.display()));
        assert_eq!(encoded, golden, "encoding drifted for {}", msg.tag_name());
        assert_eq!(decode_message(&golden).as_ref(), Ok(&msg), "decode of golden {}", msg.tag_name());
    }
}

#[test]
fn pinned_sizes() {
    // tag + 2-byte length prefix + 16-byte nonce
    let challenge = ProtocolMessage::PairingChallenge { n1: Nonce([7; 16]) };
    assert_eq!(encode_message(&challenge).len(), 19);
    assert_eq!(encode_message(&ProtocolMessage::Ack), vec![0x13]);
}
