//! Acceptance suite: one test per acceptance criterion, each printing a
//! PASS line on success. Run with
//! `cargo test -p secrow-core --test acceptance -- --nocapture`.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use secrow_core::bench::run_bench;
use secrow_core::cd::{FlowResult, FlowSpec};
use secrow_core::harness::report::VerifyReport;
use secrow_core::harness::{self, check_condition, Condition};
use secrow_core::scenario;
use secrow_core::simnet::adversary::Capabilities;
use secrow_core::simnet::World;
use secrow_core::sut::{DefenseKnobs, SutKind, SystemUnderTest, WorldConfig};
use secrow_core::transcript::{contains, Endpoint};
use secrow_core::wire::{derive_trackerid, ErrorCode, Identifier, LocationFix, ProtocolMessage};

fn owned_world(seed: u64) -> (World, Identifier, Identifier) {
    let mut world = World::new(&SystemUnderTest::secrow(), seed);
    let td = world.add_td("tag");
    let owner = world.add_cd("owner");
    world.setup_owner(owner, td, "owner", "pw").expect("owner setup");
    (world, td, owner)
}

fn seeded_fix(rng: &mut ChaCha20Rng, ts: u64) -> LocationFix {
    LocationFix::from_degrees(rng.gen_range(-85.0..85.0), rng.gen_range(-175.0..175.0), ts)
        .expect("fix")
}

#[test]
fn criterion_01_table2_reproduction_within_time_budget() {
    let start = Instant::now();

    let secrow = VerifyReport::evaluate(&SystemUnderTest::secrow());
    assert!(secrow.all_conditions_hold(), "violated: {:?}", secrow.violated_conditions());
    assert!(secrow.properties.iter().all(|p| p.holds));

    let baseline = VerifyReport::evaluate(&SystemUnderTest::baseline_trackr());
    assert_eq!(
        baseline.violated_conditions(),
        harness::expected_baseline_violations(),
        "baseline must fail exactly C1, C3, C4, C5, C6, C7"
    );
    let failed: Vec<Vec<Condition>> =
        baseline.properties.iter().map(|p| p.failed_conditions.clone()).collect();
    assert_eq!(
        failed,
        vec![
            vec![Condition::C1],
            vec![Condition::C3, Condition::C4],
            vec![Condition::C5],
            vec![Condition::C6, Condition::C7],
        ]
    );

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 60, "verify battery took {elapsed:?}, budget is 60s");
    println!(
        "ACCEPTANCE criterion 1: PASS — both verdict matrices exact, battery ran in {elapsed:?}"
    );
}

#[test]
fn criterion_02_trackerid_vector() {
    let mac = [0x00, 0x1b, 0x44, 0x11, 0x3a, 0xb7];
    assert_eq!(derive_trackerid(&mac), "0000b73a-11441b00");
    println!("ACCEPTANCE criterion 2: PASS — trackerid vector bit-exact");
}

#[test]
fn criterion_03_replay_resistance_100_trials() {
    let mut rejected = 0;
    for seed in 0..100u64 {
        let mut world = World::new(&SystemUnderTest::secrow(), 40_000 + seed);
        world.adversary.caps =
            Capabilities { snoop_ble: true, replay: true, ..Capabilities::default() };
        let td = world.add_td("tag");
        let cd = world.add_cd("owner");
        world.setup_owner(cd, td, "owner", "pw").unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        world.set_gps(cd, seeded_fix(&mut rng, seed));
        assert!(world.run_flow(cd, FlowSpec::UpdateLocation { td }).is_ok());

        let no_ack_after = |world: &mut World, marker: usize| {
            world.run_until_idle(50);
            !world
                .transcript()
                .since(marker)
                .iter()
                .filter(|e| e.disposition.is_delivered())
                .filter(|e| matches!(e.sender, Endpoint::Td(_) | Endpoint::Ts))
                .any(|e| matches!(e.message(), Some(ProtocolMessage::Ack)))
        };

        // Recorded pairing proof.
        let marker = world.transcript().len();
        world.adversary.replay_last(0x03).unwrap();
        let pairing_rejected = no_ack_after(&mut world, marker);

        // Recorded primary command request.
        let marker = world.transcript().len();
        world.adversary.replay_last(0x0b).unwrap();
        let cmd_rejected = no_ack_after(&mut world, marker);

        // Recorded ownership proof, re-committed by a rogue CD.
        let proof = world
            .adversary
            .last_recorded_with_tag(0x07)
            .and_then(|r| secrow_core::wire::decode_message(&r.bytes).ok())
            .and_then(|m| match m {
                ProtocolMessage::OwnershipProof { proof } => Some(proof),
                _ => None,
            })
            .unwrap();
        let session = world.cd_session(cd).unwrap();
        let marker = world.transcript().len();
        world
            .rogue_send(cd, Endpoint::Ts, &ProtocolMessage::CommitOwner { session, proof })
            .unwrap();
        let proof_rejected = no_ack_after(&mut world, marker);

        // Recorded proximity attestation, re-uploaded.
        let tpk = world
            .adversary
            .last_recorded_with_tag(0x0e)
            .and_then(|r| secrow_core::wire::decode_message(&r.bytes).ok())
            .and_then(|m| match m {
                ProtocolMessage::SignTokenRequest { tpk, .. } => Some(tpk),
                _ => None,
            })
            .unwrap();
        let (s_t, e_l) = world
            .adversary
            .last_recorded_with_tag(0x0f)
            .and_then(|r| secrow_core::wire::decode_message(&r.bytes).ok())
            .and_then(|m| match m {
                ProtocolMessage::SignTokenResponse { s_t, e_l } => Some((s_t, e_l)),
                _ => None,
            })
            .unwrap();
        let marker = world.transcript().len();
        world
            .rogue_send(cd, Endpoint::Ts, &ProtocolMessage::AttestedLocationUpdate { tpk, s_t, e_l })
            .unwrap();
        let attestation_rejected = no_ack_after(&mut world, marker);

        if pairing_rejected && cmd_rejected && proof_rejected && attestation_rejected {
            rejected += 1;
        }
    }
    assert_eq!(rejected, 100, "every replay in every trial must be rejected");
    println!("ACCEPTANCE criterion 3: PASS — 100/100 seeded trials rejected all four replays");
}

#[test]
fn criterion_04_proximity_enforcement_1000_worlds() {
    // Out-of-proximity worlds: zero stores.
    for seed in 0..1000u64 {
        let (mut world, td, _) = owned_world(50_000 + seed);
        let updater = world.add_cd("updater");
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        world.set_gps(updater, seeded_fix(&mut rng, seed));
        let result = world.run_flow(updater, FlowSpec::UpdateLocation { td });
        assert_eq!(result, FlowResult::Failed(ErrorCode::ChannelUnavailable), "seed {seed}");
        assert_eq!(world.ts_location_count(), 0, "seed {seed}: write from afar");
    }

    // Matched in-proximity worlds: all succeed.
    for seed in 0..1000u64 {
        let (mut world, td, _) = owned_world(50_000 + seed);
        let updater = world.add_cd("updater");
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        world.set_gps(updater, seeded_fix(&mut rng, seed));
        world.set_proximity(updater, td, true);
        let result = world.run_flow(updater, FlowSpec::UpdateLocation { td });
        assert_eq!(result, FlowResult::Ok, "seed {seed}");
        assert_eq!(world.ts_location_count(), 1, "seed {seed}");
    }

    // Sybil-at-distance: 50 rogue devices, none near, zero writes.
    let report = harness::run_attack("sybil_far_update", &SystemUnderTest::secrow()).unwrap();
    assert!(!report.succeeded, "{}", report.detail);

    println!(
        "ACCEPTANCE criterion 4: PASS — 1000/1000 far worlds stored nothing, 1000/1000 near worlds succeeded, sybils blocked"
    );
}

#[test]
fn criterion_05_end_to_end_encryption_100_scenarios() {
    for seed in 0..100u64 {
        let (mut world, td, owner) = owned_world(60_000 + seed);
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let fix = seeded_fix(&mut rng, seed);
        world.set_gps(owner, fix);
        assert!(world.run_flow(owner, FlowSpec::UpdateLocation { td }).is_ok());

        let dump = world.breach_dump();
        assert!(
            !contains(&dump.bytes, &fix.encode()),
            "seed {seed}: plaintext fix inside the breach dump"
        );
        let stored = world.ts_stored_ciphertext(td).expect("stored ciphertext");
        let suite = world.suite();
        for key in &dump.candidate_keys {
            assert!(
                suite.sym_decrypt(key, &stored).is_err(),
                "seed {seed}: a key recovered from the dump decrypts the location"
            );
        }
        // The legitimate owner still recovers the exact fix.
        assert_eq!(world.run_flow(owner, FlowSpec::QueryLocation { td }), FlowResult::Location(fix));
    }
    println!(
        "ACCEPTANCE criterion 5: PASS — 100 seeded breaches leak nothing; owners recover exact fixes"
    );
}

#[test]
fn criterion_06_no_location_spoof_10000_attempts() {
    // Raised rate budget so the device answers all 10k crafted requests;
    // all defenses stay on.
    let config = WorldConfig { rate_capacity: 30_000, ..WorldConfig::default() };
    let sut = SystemUnderTest::custom("secrow_hi_rate", SutKind::Secrow, config);
    let mut world = World::new(&sut, 77);
    let td = world.add_td("tag");
    let owner = world.add_cd("owner");
    world.setup_owner(owner, td, "owner", "pw").unwrap();
    let rogue = world.add_cd("rogue");
    world.set_proximity(rogue, td, true);
    let true_fix = LocationFix::from_degrees(43.6047, 1.4442, 5).unwrap();
    world.set_gps(rogue, true_fix);

    // One legitimate grant supplies the nonce material.
    world.tee_rotate(rogue).unwrap();
    let (tee_tpk, tee_chain) = world.tee_attested_public(rogue).unwrap();
    let marker = world.transcript().len();
    world
        .rogue_send(
            rogue,
            Endpoint::Ts,
            &ProtocolMessage::LocUpdateRequest { td_id: td, tpk: tee_tpk, chain: tee_chain.clone() },
        )
        .unwrap();
    world.run_until_idle(20);
    let (e_c, e_t) = world
        .transcript()
        .since(marker)
        .iter()
        .find_map(|e| match e.message() {
            Some(ProtocolMessage::LocUpdateGrant { e_c, e_t }) => Some((e_c, e_t)),
            _ => None,
        })
        .expect("grant");
    let n_c = world.tee_decrypt_grant(rogue, &e_c).unwrap();
    let (_, true_sig) = world.tee_sign_location(rogue, n_c).unwrap();
    assert!(world.tee_sign_arbitrary(rogue, true_fix, n_c).is_none(), "TEE exposes no raw oracle");

    let suite = world.suite();
    let mut rng = ChaCha20Rng::seed_from_u64(99);
    let own_root = suite.generate_keypair(&mut rng);
    let own_attested = suite.issue_attested_keypair(&own_root, "rogue-root", "rogue-tee", &mut rng);
    let mut forgeries = 0u32;
    for attempt in 0..10_000u32 {
        let fake = seeded_fix(&mut rng, attempt as u64);
        let request = match attempt % 3 {
            0 => {
                // Self-rooted attestation chain.
                let mut claim = Vec::new();
                claim.extend_from_slice(&fake.encode());
                claim.extend_from_slice(n_c.as_bytes());
                let sig = suite.sign(&own_attested.pair.private, &claim);
                ProtocolMessage::SignTokenRequest {
                    e_t: e_t.clone(),
                    tpk: own_attested.pair.public,
                    chain: own_attested.chain.clone(),
                    loc: fake,
                    n_c,
                    claim_sig: sig,
                }
            }
            1 => {
                // Own key smuggled under the genuine chain.
                let mut claim = Vec::new();
                claim.extend_from_slice(&fake.encode());
                claim.extend_from_slice(n_c.as_bytes());
                let sig = suite.sign(&own_attested.pair.private, &claim);
                ProtocolMessage::SignTokenRequest {
                    e_t: e_t.clone(),
                    tpk: own_attested.pair.public,
                    chain: tee_chain.clone(),
                    loc: fake,
                    n_c,
                    claim_sig: sig,
                }
            }
            _ => {
                // Genuine TEE signature with the fix swapped afterwards.
                ProtocolMessage::SignTokenRequest {
                    e_t: e_t.clone(),
                    tpk: tee_tpk,
                    chain: tee_chain.clone(),
                    loc: fake,
                    n_c,
                    claim_sig: true_sig.clone(),
                }
            }
        };
        let marker = world.transcript().len();
        world.rogue_send(rogue, Endpoint::Td(td), &request).unwrap();
        world.run_until_idle(5);
        let signed = world
            .transcript()
            .since(marker)
            .iter()
            .any(|e| matches!(e.message(), Some(ProtocolMessage::SignTokenResponse { .. })));
        if signed {
            forgeries += 1;
        }
    }
    assert_eq!(forgeries, 0, "a fake fix was accepted");
    println!("ACCEPTANCE criterion 6: PASS — 0/10000 forged fixes produced a valid signed claim");
}

#[test]
fn criterion_07_update_anonymity_100_flows() {
    for seed in 0..100u64 {
        let (mut world, td, owner) = owned_world(70_000 + seed);
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        world.set_gps(owner, seeded_fix(&mut rng, seed));
        let cd_id = owner.bytes;
        let pk = world.cd_public_key(owner).unwrap().encode();
        let session = world.cd_session(owner).unwrap().0;

        let marker = world.transcript().len();
        assert!(world.run_flow(owner, FlowSpec::UpdateLocation { td }).is_ok());
        for entry in world.transcript().since(marker) {
            assert!(!contains(&entry.bytes, &cd_id), "seed {seed}: CD identifier in update flow");
            assert!(!contains(&entry.bytes, &pk), "seed {seed}: CD public key in update flow");
            assert!(!contains(&entry.bytes, &session), "seed {seed}: session token in update flow");
        }
    }
    println!(
        "ACCEPTANCE criterion 7: PASS — 100 update flows carry no CD identity, key, or session bytes"
    );
}

#[test]
fn criterion_08_determinism_of_scenario_corpus() {
    let dir = std::path::PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let mut files: Vec<_> = std::fs::read_dir(&dir)
        .expect("scenario corpus directory")
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|ext| ext == "scn"))
        .collect();
    files.sort();
    assert!(files.len() >= 10, "expected a bundled corpus, found {}", files.len());
    for path in &files {
        let text = std::fs::read_to_string(path).unwrap();
        let parsed = scenario::parse(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let label = path.file_stem().unwrap().to_string_lossy().to_string();
        let first = scenario::run(&parsed, &label, 42);
        let second = scenario::run(&parsed, &label, 42);
        assert!(first.passed(), "{label} failed:\n{}", first.render_text());
        assert_eq!(
            first.transcript_bytes, second.transcript_bytes,
            "{label}: transcript bytes differ between identical runs"
        );
        assert_eq!(
            first.render_text(),
            second.render_text(),
            "{label}: report text differs between identical runs"
        );
    }
    println!(
        "ACCEPTANCE criterion 8: PASS — {} scenarios byte-identical across repeated seeded runs",
        files.len()
    );
}

#[test]
fn criterion_09_bench_structure_and_ordering() {
    let report = run_bench(3);
    let names: Vec<&str> = report.flows.iter().map(|f| f.flow).collect();
    assert_eq!(
        names,
        ["Owner Registration", "Primary Owner Operation", "Location Update", "Location Query"]
    );
    for row in &report.flows {
        match row.flow {
            "Primary Owner Operation" => {
                assert!(row.baseline_micros.is_none(), "baseline primary op must be N/A")
            }
            _ => {
                let baseline = row.baseline_micros.expect("baseline timing");
                assert!(
                    row.secrow_micros > baseline,
                    "{}: secure flow ({:.1}us) must cost more than baseline ({:.1}us)",
                    row.flow,
                    row.secrow_micros,
                    baseline
                );
            }
        }
    }
    println!("ACCEPTANCE criterion 9: PASS — four flow rows, N/A cell, secure flows strictly slower");
}

#[test]
fn criterion_10_mutation_soundness_of_knobs() {
    let cases = [
        Condition::C1,
        Condition::C2,
        Condition::C3,
        Condition::C4,
        Condition::C5,
        Condition::C6,
        Condition::C7,
    ];
    for target in cases {
        let knobs = DefenseKnobs::for_condition(target).expect("knob exists");
        let sut = SystemUnderTest::custom(
            &format!("secrow_knob_{}", target.label()),
            SutKind::Secrow,
            WorldConfig::with_knobs(knobs),
        );
        for condition in Condition::ALL {
            let verdict = check_condition(condition, &sut);
            let expect_holds = condition != target;
            assert_eq!(
                verdict.holds,
                expect_holds,
                "knob for {}: condition {} expected holds={} (witness {:?})",
                target.label(),
                condition.label(),
                expect_holds,
                verdict.witness.map(|w| w.scenario)
            );
        }
    }
    println!(
        "ACCEPTANCE criterion 10: PASS — each of 7 defense knobs flips exactly its mapped condition"
    );
}
