//! The attack scenario library. Every scenario builds a fresh world from
//! a seed derived from its name and the system label, runs one attack,
//! and reports whether it succeeded together with the full transcript.
//!
//! Scenarios are deterministic, so a violation witness can be replayed
//! byte-for-byte by re-running its scenario.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::baseline::{BaselineFlowSpec, BaselineResult};
use crate::cd::{FlowResult, FlowSpec};
use crate::crypto::{sha256, Signature};
use crate::simnet::adversary::{Capabilities, Mutation};
use crate::simnet::World;
use crate::sut::{SutKind, SystemUnderTest};
use crate::transcript::Endpoint;
use crate::wire::{
    derive_trackerid, ErrorCode, Identifier, LocationFix, PrimaryCmd, ProtocolMessage, SessionToken,
};

use super::AttackReport;

/// Publicly runnable attacks (`run_attack` names).
pub const ATTACK_LIBRARY: &[&str] = &[
    "remote_claim",
    "mac_enumeration_claim",
    "nonowner_ring",
    "spoof_location_update",
    "replay_primary_cmd",
    "replay_owner_proof",
    "sybil_far_update",
    "mimic_td",
    "breach_dump_read",
    "hostile_tee_driver",
    "el_swap_in_transit",
];

/// All scenario names, including battery-internal ones.
pub const ALL_SCENARIOS: &[&str] = &[
    "remote_claim",
    "mac_enumeration_claim",
    "nonowner_ring",
    "spoof_location_update",
    "replay_primary_cmd",
    "replay_owner_proof",
    "sybil_far_update",
    "mimic_td",
    "breach_dump_read",
    "hostile_tee_driver",
    "el_swap_in_transit",
    "nonowner_query",
    "unauthenticated_query",
    "claim_without_pairing_action",
    "phantom_td_update",
    "ts_endpoint_mimicry",
];

pub fn scenario_seed(name: &str, sut_label: &str) -> u64 {
    let digest = sha256(&[b"scenario-seed", name.as_bytes(), sut_label.as_bytes()]);
    u64::from_be_bytes(digest[..8].try_into().unwrap())
}

pub fn run_scenario(name: &str, sut: &SystemUnderTest) -> AttackReport {
    let seed = scenario_seed(name, &sut.label);
    let (succeeded, detail, world) = match name {
        "nonowner_ring" => nonowner_ring(sut, seed),
        "nonowner_query" => nonowner_query(sut, seed),
        "unauthenticated_query" => unauthenticated_query(sut, seed),
        "claim_without_pairing_action" => claim_without_pairing_action(sut, seed),
        "remote_claim" => remote_claim(sut, seed),
        "mac_enumeration_claim" => mac_enumeration_claim(sut, seed),
        "spoof_location_update" => spoof_location_update(sut, seed),
        "sybil_far_update" => sybil_far_update(sut, seed),
        "mimic_td" => mimic_td(sut, seed),
        "phantom_td_update" => phantom_td_update(sut, seed),
        "hostile_tee_driver" => hostile_tee_driver(sut, seed),
        "replay_primary_cmd" => replay_primary_cmd(sut, seed),
        "replay_owner_proof" => replay_owner_proof(sut, seed),
        "breach_dump_read" => breach_dump_read(sut, seed),
        "el_swap_in_transit" => el_swap_in_transit(sut, seed),
        "ts_endpoint_mimicry" => ts_endpoint_mimicry(sut, seed),
        other => panic!("unknown scenario {other}"),
    };
    AttackReport {
        name: ALL_SCENARIOS.iter().find(|n| **n == name).expect("scenario name"),
        sut_label: sut.label.clone(),
        seed,
        succeeded,
        detail,
        transcript: world.transcript().clone(),
    }
}

// ---- fixtures ------------------------------------------------------------

struct Owned {
    world: World,
    td: Identifier,
    owner: Identifier,
}

/// Victim device with an honest, fully set-up owner.
fn owned_world(sut: &SystemUnderTest, seed: u64) -> Owned {
    let mut world = World::new(sut, seed);
    let td = world.add_td("victim");
    let owner = world.add_cd("owner");
    world
        .setup_owner(owner, td, "owner", "owner-pw")
        .expect("honest owner setup");
    Owned { world, td, owner }
}

fn owner_fix(seed: u64) -> LocationFix {
    LocationFix::from_degrees(37.4275, -122.1697, seed % 1000).expect("fix")
}

fn honest_update(world: &mut World, cd: Identifier, td: Identifier, loc: LocationFix) -> bool {
    world.set_gps(cd, loc);
    match world.kind() {
        SutKind::Secrow => world.run_flow(cd, FlowSpec::UpdateLocation { td }).is_ok(),
        SutKind::BaselineTrackr => world.run_baseline_honest_update(cd, td).is_ok(),
    }
}

/// First delivered message since `marker` matching the predicate.
fn reply_since(world: &World, marker: usize, pred: impl Fn(&ProtocolMessage) -> bool) -> Option<ProtocolMessage> {
    world
        .transcript()
        .since(marker)
        .iter()
        .filter(|e| e.disposition.is_delivered())
        .filter_map(|e| e.message())
        .find(|m| pred(m))
}

fn ack_from_td_since(world: &World, marker: usize, td: Identifier) -> bool {
    world
        .transcript()
        .since(marker)
        .iter()
        .filter(|e| e.disposition.is_delivered())
        .any(|e| e.sender == Endpoint::Td(td) && matches!(e.message(), Some(ProtocolMessage::Ack)))
}

fn attack_rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed ^ 0x5eed_a77a_c4e5_0000)
}

fn random_bytes(rng: &mut ChaCha20Rng, len: usize) -> Vec<u8> {
    let mut out = vec![0u8; len];
    rng.fill_bytes(&mut out);
    out
}

// ---- C1 --------------------------------------------------------------------

fn nonowner_ring(sut: &SystemUnderTest, seed: u64) -> (bool, String, World) {
    let Owned { mut world, td, .. } = owned_world(sut, seed);
    let stranger = world.add_cd("stranger");
    world.set_proximity(stranger, td, true);
    let before = world.td_ring_count(td);
    let outcome = match world.kind() {
        SutKind::Secrow => format!("{:?}", world.run_flow(stranger, FlowSpec::Ring { td })),
        SutKind::BaselineTrackr => {
            format!("{:?}", world.run_baseline_flow(stranger, BaselineFlowSpec::Ring { td }))
        }
    };
    let succeeded = world.td_ring_count(td) > before;
    let detail = format!("stranger ring attempt in BLE range: {outcome}; ring fired: {succeeded}");
    (succeeded, detail, world)
}

// ---- C2 --------------------------------------------------------------------

fn nonowner_query(sut: &SystemUnderTest, seed: u64) -> (bool, String, World) {
    let Owned { mut world, td, owner } = owned_world(sut, seed);
    assert!(honest_update(&mut world, owner, td, owner_fix(seed)), "fixture update");
    let attacker = world.add_cd("attacker");
    world.register_account(attacker, "attacker", "pw").expect("account");
    world.login(attacker, "attacker", "pw").expect("login");
    let marker = world.transcript().len();
    let (succeeded, detail) = match world.kind() {
        SutKind::Secrow => {
            let outcome = world.run_flow(attacker, FlowSpec::QueryLocation { td });
            let answered = reply_since(&world, marker, |m| {
                matches!(m, ProtocolMessage::LocQueryResponse { .. })
            })
            .is_some();
            (answered, format!("non-owner query outcome {outcome:?}; service answered: {answered}"))
        }
        SutKind::BaselineTrackr => {
            let outcome = world.run_baseline_flow(attacker, BaselineFlowSpec::Query);
            let leaked = matches!(
                &outcome,
                BaselineResult::Items(items) if items.iter().any(|(id, _)| *id == derive_trackerid(&td.bytes))
            );
            (leaked, format!("non-owner query outcome {outcome:?}; victim visible: {leaked}"))
        }
    };
    (succeeded, detail, world)
}

fn unauthenticated_query(sut: &SystemUnderTest, seed: u64) -> (bool, String, World) {
    let Owned { mut world, td, owner } = owned_world(sut, seed);
    assert!(honest_update(&mut world, owner, td, owner_fix(seed)), "fixture update");
    let attacker = world.add_cd("attacker");
    let marker = world.transcript().len();
    let msg = match world.kind() {
        SutKind::Secrow => ProtocolMessage::LocQueryRequest { session: SessionToken([0; 16]), td_id: td },
        SutKind::BaselineTrackr => ProtocolMessage::BaselineQuery { token: SessionToken([0; 16]) },
    };
    world.rogue_send(attacker, Endpoint::Ts, &msg).expect("ts channel");
    world.run_until_idle(50);
    let answered = reply_since(&world, marker, |m| {
        matches!(
            m,
            ProtocolMessage::LocQueryResponse { .. } | ProtocolMessage::BaselineQueryResponse { .. }
        )
    })
    .is_some();
    let detail = format!("query without a session: answered = {answered}");
    (answered, detail, world)
}

// ---- C3 --------------------------------------------------------------------

fn claim_without_pairing_action(sut: &SystemUnderTest, seed: u64) -> (bool, String, World) {
    let mut world = World::new(sut, seed);
    let fresh = world.add_td("fresh");
    let rogue = world.add_cd("rogue");
    world.set_proximity(rogue, fresh, true);
    match world.kind() {
        SutKind::Secrow => {
            // Attempt 1: pairing mode was never activated.
            let first = world.run_flow(rogue, FlowSpec::PairClaim { td: fresh });
            // Attempt 2: activated once, but the window lapsed.
            world.set_pairing_mode(fresh, true);
            let budget = world.config().pairing_mode_budget;
            world.step(budget + 1);
            let second = world.run_flow(rogue, FlowSpec::PairClaim { td: fresh });
            let succeeded = world.td_primary_owner(fresh) == world.cd_public_key(rogue);
            let detail = format!(
                "claims without a live pairing action: {first:?} / {second:?}; rogue became primary: {succeeded}"
            );
            (succeeded, detail, world)
        }
        SutKind::BaselineTrackr => {
            world.register_account(rogue, "rogue", "pw").expect("account");
            world.login(rogue, "rogue", "pw").expect("login");
            let trackerid = derive_trackerid(&fresh.bytes);
            let outcome = world.run_baseline_flow(rogue, BaselineFlowSpec::Claim { trackerid });
            let succeeded = world.is_owner_at_ts(rogue, fresh, "rogue");
            let detail =
                format!("claim with zero physical interaction: {outcome:?}; owned: {succeeded}");
            (succeeded, detail, world)
        }
    }
}

// ---- C4 --------------------------------------------------------------------

fn remote_claim(sut: &SystemUnderTest, seed: u64) -> (bool, String, World) {
    let Owned { mut world, td, .. } = owned_world(sut, seed);
    let attacker = world.add_cd("attacker");
    world.register_account(attacker, "attacker", "pw").expect("account");
    world.login(attacker, "attacker", "pw").expect("login");
    // Deliberately no proximity: the whole point is claiming from afar.
    match world.kind() {
        SutKind::Secrow => {
            let flow = world.run_flow(attacker, FlowSpec::RegisterOwnership { td });
            // Rogue path: request a ticket, then commit garbage in place of
            // the device proof it cannot produce.
            let session = world.cd_session(attacker).expect("session");
            world
                .rogue_send(
                    attacker,
                    Endpoint::Ts,
                    &ProtocolMessage::AddOwnerRequest { session, cd_id: attacker, td_id: td },
                )
                .expect("ts send");
            world.run_until_idle(50);
            let mut rng = attack_rng(seed);
            let forged = random_bytes(&mut rng, 96);
            world
                .rogue_send(attacker, Endpoint::Ts, &ProtocolMessage::CommitOwner { session, proof: forged })
                .expect("ts send");
            world.run_until_idle(50);
            let succeeded = world.is_owner_at_ts(attacker, td, "attacker");
            let detail = format!(
                "remote registration: honest flow {flow:?}, forged commit accepted: {succeeded}"
            );
            (succeeded, detail, world)
        }
        SutKind::BaselineTrackr => {
            let trackerid = derive_trackerid(&td.bytes);
            let outcome = world.run_baseline_flow(attacker, BaselineFlowSpec::Claim { trackerid });
            let succeeded = world.is_owner_at_ts(attacker, td, "attacker");
            let detail = format!("remote claim with login token only: {outcome:?}; owned: {succeeded}");
            (succeeded, detail, world)
        }
    }
}

fn mac_enumeration_claim(sut: &SystemUnderTest, seed: u64) -> (bool, String, World) {
    let mut world = World::new(sut, seed);
    let advertised = world.add_td("advertised");
    let enumerated = world.add_td("enumerated");
    let attacker = world.add_cd("attacker");
    world.register_account(attacker, "attacker", "pw").expect("account");
    world.login(attacker, "attacker", "pw").expect("login");
    // Attacker only ever observes the first tracker on the air.
    world.set_proximity(attacker, advertised, true);
    let observed = world.observe_ble(attacker);
    assert_eq!(observed, vec![advertised]);
    // Organization prefix is shared; incrementing the serial enumerates
    // sibling devices.
    let mut mac = observed[0].bytes;
    let serial = u32::from_be_bytes([0, mac[3], mac[4], mac[5]]) + 1;
    mac[3] = (serial >> 16) as u8;
    mac[4] = (serial >> 8) as u8;
    mac[5] = serial as u8;
    assert_eq!(mac, enumerated.bytes, "enumeration reaches the sibling device");
    match world.kind() {
        SutKind::Secrow => {
            let target = Identifier::td(mac);
            let session = world.cd_session(attacker).expect("session");
            world
                .rogue_send(
                    attacker,
                    Endpoint::Ts,
                    &ProtocolMessage::AddOwnerRequest { session, cd_id: attacker, td_id: target },
                )
                .expect("ts send");
            world.run_until_idle(50);
            let mut rng = attack_rng(seed);
            let forged = random_bytes(&mut rng, 96);
            world
                .rogue_send(attacker, Endpoint::Ts, &ProtocolMessage::CommitOwner { session, proof: forged })
                .expect("ts send");
            world.run_until_idle(50);
            let succeeded = world.is_owner_at_ts(attacker, enumerated, "attacker");
            let detail = format!("enumerated-id registration accepted: {succeeded}");
            (succeeded, detail, world)
        }
        SutKind::BaselineTrackr => {
            let trackerid = derive_trackerid(&mac);
            let outcome = world.run_baseline_flow(attacker, BaselineFlowSpec::Claim { trackerid });
            let succeeded = world.is_owner_at_ts(attacker, enumerated, "attacker");
            let detail = format!(
                "claimed a never-seen tracker from its derived id: {outcome:?}; owned: {succeeded}"
            );
            (succeeded, detail, world)
        }
    }
}

// ---- C5 --------------------------------------------------------------------

fn spoof_location_update(sut: &SystemUnderTest, seed: u64) -> (bool, String, World) {
    let Owned { mut world, td, .. } = owned_world(sut, seed);
    let attacker = world.add_cd("attacker");
    let fake = LocationFix::from_degrees(48.8566, 2.3522, 777).expect("fix");
    world.set_gps(attacker, fake);
    // Out of BLE range throughout.
    let before = world.ts_location_count();
    let outcome = match world.kind() {
        SutKind::Secrow => format!("{:?}", world.run_flow(attacker, FlowSpec::UpdateLocation { td })),
        SutKind::BaselineTrackr => {
            let trackerid = derive_trackerid(&td.bytes);
            format!(
                "{:?}",
                world.run_baseline_flow(attacker, BaselineFlowSpec::Update { trackerid, loc: fake })
            )
        }
    };
    let succeeded = world.ts_location_count() > before;
    let detail = format!("out-of-proximity update: {outcome}; location stored: {succeeded}");
    (succeeded, detail, world)
}

fn sybil_far_update(sut: &SystemUnderTest, seed: u64) -> (bool, String, World) {
    let Owned { mut world, td, .. } = owned_world(sut, seed);
    let before = world.ts_location_count();
    let fake = LocationFix::from_degrees(-33.8688, 151.2093, 1).expect("fix");
    for i in 0..50 {
        let sybil = world.add_cd(&format!("sybil{i}"));
        world.set_gps(sybil, fake);
        match world.kind() {
            SutKind::Secrow => {
                world.run_flow(sybil, FlowSpec::UpdateLocation { td });
            }
            SutKind::BaselineTrackr => {
                let trackerid = derive_trackerid(&td.bytes);
                world.run_baseline_flow(sybil, BaselineFlowSpec::Update { trackerid, loc: fake });
            }
        }
    }
    let succeeded = world.ts_location_count() > before;
    let detail = format!("50 sybil devices, none in range; any write: {succeeded}");
    (succeeded, detail, world)
}

// ---- C6 --------------------------------------------------------------------

fn mimic_td(sut: &SystemUnderTest, seed: u64) -> (bool, String, World) {
    let Owned { mut world, td, owner } = owned_world(sut, seed);
    // The real device is gone; an attacker device answers at its identity.
    world.set_proximity(owner, td, false);
    world.adversary.caps = Capabilities { run_mimic_td: true, ..Capabilities::default() };
    world.attach_mimic(td).expect("mimic");
    let crowd = world.add_cd("crowd");
    world.set_proximity(crowd, td, true);
    let before = world.ts_location_count();
    let loc = LocationFix::from_degrees(51.5074, -0.1278, 9).expect("fix");
    let outcome = match world.kind() {
        SutKind::Secrow => {
            world.set_gps(crowd, loc);
            format!("{:?}", world.run_flow(crowd, FlowSpec::UpdateLocation { td }))
        }
        SutKind::BaselineTrackr => {
            world.set_gps(crowd, loc);
            format!("{:?}", world.run_baseline_honest_update(crowd, td))
        }
    };
    let succeeded = world.ts_location_count() > before;
    let detail = format!("honest crowd device served by a mimic: {outcome}; stored: {succeeded}");
    (succeeded, detail, world)
}

fn phantom_td_update(sut: &SystemUnderTest, seed: u64) -> (bool, String, World) {
    let Owned { mut world, td, .. } = owned_world(sut, seed);
    let attacker = world.add_cd("attacker");
    let before = world.ts_location_count();
    let mut rng = attack_rng(seed);
    match world.kind() {
        SutKind::Secrow => {
            // Play the device's role with no device at all: obtain a grant,
            // then fabricate the proximity signature.
            world.tee_rotate(attacker).expect("tee");
            let (tpk, chain) = world.tee_attested_public(attacker).expect("tee");
            let marker = world.transcript().len();
            world
                .rogue_send(
                    attacker,
                    Endpoint::Ts,
                    &ProtocolMessage::LocUpdateRequest { td_id: td, tpk, chain },
                )
                .expect("ts send");
            world.run_until_idle(50);
            let grant = reply_since(&world, marker, |m| matches!(m, ProtocolMessage::LocUpdateGrant { .. }));
            let Some(ProtocolMessage::LocUpdateGrant { .. }) = grant else {
                let detail = "no grant issued; phantom update impossible".to_string();
                return (false, detail, world);
            };
            let s_t = Signature::new(random_bytes(&mut rng, 64));
            let e_l = random_bytes(&mut rng, 60);
            world
                .rogue_send(
                    attacker,
                    Endpoint::Ts,
                    &ProtocolMessage::AttestedLocationUpdate { tpk, s_t, e_l },
                )
                .expect("ts send");
            world.run_until_idle(50);
        }
        SutKind::BaselineTrackr => {
            // A tracker that does not exist anywhere is trivially spoofable.
            let ghost_mac = [0x00, 0x1b, 0x44, 0xde, 0xad, 0x01];
            let loc = LocationFix::from_degrees(1.0, 1.0, 1).expect("fix");
            world.run_baseline_flow(
                attacker,
                BaselineFlowSpec::Update { trackerid: derive_trackerid(&ghost_mac), loc },
            );
        }
    }
    let succeeded = world.ts_location_count() > before;
    let detail = format!("device role fabricated without the device; stored: {succeeded}");
    (succeeded, detail, world)
}

// ---- C7 --------------------------------------------------------------------

fn hostile_tee_driver(sut: &SystemUnderTest, seed: u64) -> (bool, String, World) {
    match sut.kind {
        SutKind::Secrow => hostile_tee_driver_secrow(sut, seed),
        SutKind::BaselineTrackr => {
            let Owned { mut world, td, .. } = owned_world(sut, seed);
            let attacker = world.add_cd("attacker");
            world.set_proximity(attacker, td, true);
            let real = LocationFix::from_degrees(43.6047, 1.4442, 5).expect("fix");
            let fake = LocationFix::from_degrees(-89.0, 170.0, 5).expect("fix");
            world.set_gps(attacker, real);
            let trackerid = derive_trackerid(&td.bytes);
            let outcome = world.run_baseline_flow(attacker, BaselineFlowSpec::Update { trackerid, loc: fake });
            let succeeded = world.ts_stored_plaintext(td) == Some(fake);
            let detail = format!("fabricated coordinates: {outcome:?}; stored verbatim: {succeeded}");
            (succeeded, detail, world)
        }
    }
}

fn hostile_tee_driver_secrow(sut: &SystemUnderTest, seed: u64) -> (bool, String, World) {
    let Owned { mut world, td, .. } = owned_world(sut, seed);
    let rogue = world.add_cd("rogue");
    world.set_proximity(rogue, td, true);
    let real = LocationFix::from_degrees(43.6047, 1.4442, 5).expect("fix");
    let fake = LocationFix::from_degrees(-89.0, 170.0, 5).expect("fix");
    world.set_gps(rogue, real);
    let mut rng = attack_rng(seed);
    let suite = world.suite();

    // One legitimate grant; the signing attempts reuse its nonce material.
    world.tee_rotate(rogue).expect("tee");
    let (tee_tpk, tee_chain) = world.tee_attested_public(rogue).expect("tee");
    let marker = world.transcript().len();
    world
        .rogue_send(
            rogue,
            Endpoint::Ts,
            &ProtocolMessage::LocUpdateRequest { td_id: td, tpk: tee_tpk, chain: tee_chain.clone() },
        )
        .expect("ts send");
    world.run_until_idle(50);
    let Some(ProtocolMessage::LocUpdateGrant { e_c, e_t }) =
        reply_since(&world, marker, |m| matches!(m, ProtocolMessage::LocUpdateGrant { .. }))
    else {
        return (false, "no grant issued".to_string(), world);
    };
    let n_c = world.tee_decrypt_grant(rogue, &e_c).expect("tee grant");

    let mut forged_response = false;
    let check_attempt = |world: &mut World, request: ProtocolMessage| {
        let marker = world.transcript().len();
        world.rogue_send(rogue, Endpoint::Td(td), &request).expect("ble send");
        world.run_until_idle(50);
        let produced = reply_since(world, marker, |m| matches!(m, ProtocolMessage::SignTokenResponse { .. }));
        produced.is_some()
    };

    // (a) Own key pair under a self-made attestation root.
    let own_root = suite.generate_keypair(&mut rng);
    let own_attested = suite.issue_attested_keypair(&own_root, "rogue-root", "rogue-tee", &mut rng);
    let mut claim = Vec::new();
    claim.extend_from_slice(&fake.encode());
    claim.extend_from_slice(n_c.as_bytes());
    let own_sig = suite.sign(&own_attested.pair.private, &claim);
    forged_response |= check_attempt(
        &mut world,
        ProtocolMessage::SignTokenRequest {
            e_t: e_t.clone(),
            tpk: own_attested.pair.public,
            chain: own_attested.chain.clone(),
            loc: fake,
            n_c,
            claim_sig: own_sig.clone(),
        },
    );

    // (b) Own key presented with the genuine TEE chain.
    forged_response |= check_attempt(
        &mut world,
        ProtocolMessage::SignTokenRequest {
            e_t: e_t.clone(),
            tpk: own_attested.pair.public,
            chain: tee_chain.clone(),
            loc: fake,
            n_c,
            claim_sig: own_sig,
        },
    );

    // (c) Genuine TEE signature, fix swapped after signing.
    let (_true_loc, tee_sig) = world.tee_sign_location(rogue, n_c).expect("tee sign");
    forged_response |= check_attempt(
        &mut world,
        ProtocolMessage::SignTokenRequest {
            e_t: e_t.clone(),
            tpk: tee_tpk,
            chain: tee_chain.clone(),
            loc: fake,
            n_c,
            claim_sig: tee_sig,
        },
    );

    // (d) Every exported TEE call: only an explicitly broken TEE will sign
    // an arbitrary fix.
    if let Some(sig) = world.tee_sign_arbitrary(rogue, fake, n_c) {
        forged_response |= check_attempt(
            &mut world,
            ProtocolMessage::SignTokenRequest {
                e_t,
                tpk: tee_tpk,
                chain: tee_chain,
                loc: fake,
                n_c,
                claim_sig: sig,
            },
        );
    }

    let detail = format!(
        "hostile driver attempts (self-rooted chain, chain mismatch, fix swap, TEE oracle): device signed a fake fix: {forged_response}"
    );
    (forged_response, detail, world)
}

// ---- replay attacks ---------------------------------------------------------

fn replay_primary_cmd(sut: &SystemUnderTest, seed: u64) -> (bool, String, World) {
    if sut.kind == SutKind::BaselineTrackr {
        let world = World::new(sut, seed);
        return (false, "baseline has no primary-owner commands".to_string(), world);
    }
    let Owned { mut world, td, owner } = owned_world(sut, seed);
    world.adversary.caps = Capabilities { snoop_ble: true, replay: true, ..Capabilities::default() };
    let peer = world.add_cd("peer");
    let peer_pk = world.cd_public_key(peer);
    let flow = world.run_flow(
        owner,
        FlowSpec::PrimaryCommand { td, cmd: PrimaryCmd::AddSOwner, owner_key: peer_pk },
    );
    assert!(flow.is_ok(), "fixture primary command");
    let marker = world.transcript().len();
    world.adversary.replay_last(0x0b).expect("recorded request");
    world.run_until_idle(50);
    let succeeded = ack_from_td_since(&world, marker, td);
    let detail = format!("byte-exact replay of a primary command request; accepted: {succeeded}");
    (succeeded, detail, world)
}

fn replay_owner_proof(sut: &SystemUnderTest, seed: u64) -> (bool, String, World) {
    if sut.kind == SutKind::BaselineTrackr {
        let world = World::new(sut, seed);
        return (false, "baseline ownership has no device proof to replay".to_string(), world);
    }
    let mut world = World::new(sut, seed);
    world.adversary.caps = Capabilities { snoop_ble: true, replay: true, ..Capabilities::default() };
    let td = world.add_td("victim");
    let cd = world.add_cd("replayer");
    world.setup_owner(cd, td, "replayer", "pw").expect("setup");
    let proof = world
        .adversary
        .last_recorded_with_tag(0x07)
        .and_then(|r| crate::wire::decode_message(&r.bytes).ok())
        .and_then(|m| match m {
            ProtocolMessage::OwnershipProof { proof } => Some(proof),
            _ => None,
        })
        .expect("recorded owner proof");
    let session = world.cd_session(cd).expect("session");

    // Stale replay straight after the original commit.
    let marker = world.transcript().len();
    world
        .rogue_send(cd, Endpoint::Ts, &ProtocolMessage::CommitOwner { session, proof: proof.clone() })
        .expect("ts send");
    world.run_until_idle(50);
    let first = reply_since(&world, marker, |m| matches!(m, ProtocolMessage::Ack));

    // Replay against a fresh pending request (fresh nonce and one-time key).
    world
        .rogue_send(
            cd,
            Endpoint::Ts,
            &ProtocolMessage::AddOwnerRequest { session, cd_id: cd, td_id: td },
        )
        .expect("ts send");
    world.run_until_idle(50);
    let marker = world.transcript().len();
    world
        .rogue_send(cd, Endpoint::Ts, &ProtocolMessage::CommitOwner { session, proof })
        .expect("ts send");
    world.run_until_idle(50);
    let second = reply_since(&world, marker, |m| matches!(m, ProtocolMessage::Ack));

    let succeeded = first.is_some() || second.is_some();
    let detail = format!(
        "stale owner-proof replays (consumed entry, fresh entry): accepted: {succeeded}"
    );
    (succeeded, detail, world)
}

// ---- storage & transit attacks ------------------------------------------------

fn breach_dump_read(sut: &SystemUnderTest, seed: u64) -> (bool, String, World) {
    let Owned { mut world, td, owner } = owned_world(sut, seed);
    let loc = owner_fix(seed);
    assert!(honest_update(&mut world, owner, td, loc), "fixture update");
    let dump = world.breach_dump();
    let mut recovered = crate::transcript::contains(&dump.bytes, &loc.encode());
    if let Some(e_l) = world.ts_stored_ciphertext(td) {
        let suite = world.suite();
        for key in &dump.candidate_keys {
            if suite.sym_decrypt(key, &e_l).is_ok() {
                recovered = true;
            }
        }
    }
    let detail = format!(
        "full service breach: plaintext fix or working decryption key found: {recovered}"
    );
    (recovered, detail, world)
}

fn el_swap_in_transit(sut: &SystemUnderTest, seed: u64) -> (bool, String, World) {
    if sut.kind == SutKind::BaselineTrackr {
        let world = World::new(sut, seed);
        return (false, "baseline carries no encrypted location to swap".to_string(), world);
    }
    let Owned { mut world, td, owner } = owned_world(sut, seed);
    world.adversary.caps = Capabilities { snoop_ble: true, modify: true, ..Capabilities::default() };
    let mut rng = attack_rng(seed);
    let substitute = random_bytes(&mut rng, 60);
    world
        .adversary
        .modify_next(0x0f, Mutation::SwapSignTokenEl(substitute.clone()))
        .expect("modify");
    let loc = owner_fix(seed);
    world.set_gps(owner, loc);
    let update = world.run_flow(owner, FlowSpec::UpdateLocation { td });
    let stored_swapped = world.ts_stored_ciphertext(td).as_deref() == Some(substitute.as_slice());
    let query = world.run_flow(owner, FlowSpec::QueryLocation { td });
    let owner_detected = query == FlowResult::Failed(ErrorCode::LocationAuthFailure);
    // The proximity signature covers only the nonces, so the service
    // accepts the swap; the owner's authenticated decryption exposes it.
    let succeeded = update.is_ok() && stored_swapped;
    let detail = format!(
        "in-flight ciphertext swap accepted at service: {stored_swapped}; owner detected on decrypt: {owner_detected}"
    );
    (succeeded, detail, world)
}

fn ts_endpoint_mimicry(sut: &SystemUnderTest, seed: u64) -> (bool, String, World) {
    let mut world = World::new(sut, seed);
    let outcome = world.try_register_rogue_ts();
    let succeeded = outcome.is_ok();
    let detail = format!(
        "service endpoint mimicry: {outcome:?} (channel authenticity is a model assumption)"
    );
    (succeeded, detail, world)
}
