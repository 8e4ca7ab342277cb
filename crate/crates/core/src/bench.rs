//! Bench mode: crypto-primitive micro-timings, end-to-end flow timings
//! for both systems, and per-flow device operation counts as the
//! reproducible stand-in for hardware energy measurements.
//!
//! Absolute numbers are host-specific; only the table structure and the
//! secure-system-slower ordering are meaningful.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::baseline::BaselineFlowSpec;
use crate::cd::FlowSpec;
use crate::crypto::CryptoSuite;
use crate::ctx::RoleKind;
use crate::simnet::World;
use crate::sut::SystemUnderTest;
use crate::wire::{derive_trackerid, LocationFix, PrimaryCmd};

pub const FLOW_NAMES: [&str; 4] =
    ["Owner Registration", "Primary Owner Operation", "Location Update", "Location Query"];

#[derive(Debug, Clone, Serialize)]
pub struct CryptoRow {
    pub op: &'static str,
    pub mean_micros: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FlowRow {
    pub flow: &'static str,
    /// `None` renders as N/A: the baseline has no such operation.
    pub baseline_micros: Option<f64>,
    pub secrow_micros: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OpsRow {
    pub flow: &'static str,
    pub baseline_td_ops: Option<u64>,
    pub secrow_td_ops: u64,
    pub secrow_cd_ops: u64,
    pub secrow_ts_ops: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub reps: u32,
    pub crypto: Vec<CryptoRow>,
    pub flows: Vec<FlowRow>,
    pub td_ops: Vec<OpsRow>,
}

impl BenchReport {
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("bench ({} repetitions)\n\n", self.reps));
        out.push_str("cryptographic operations, 64-byte payloads (mean us):\n");
        for row in &self.crypto {
            out.push_str(&format!("  {:<12} {:>12.2}\n", row.op, row.mean_micros));
        }
        out.push_str("\nend-to-end flow time (mean us):\n");
        out.push_str(&format!("  {:<26} {:>14} {:>14}\n", "flow", "baseline", "secrow"));
        for row in &self.flows {
            let baseline = match row.baseline_micros {
                Some(us) => format!("{us:.1}"),
                None => "N/A".to_string(),
            };
            out.push_str(&format!(
                "  {:<26} {:>14} {:>14.1}\n",
                row.flow, baseline, row.secrow_micros
            ));
        }
        out.push_str("\ncrypto operations per flow (energy proxy; TD column mirrors the device budget):\n");
        out.push_str(&format!(
            "  {:<26} {:>12} {:>10} {:>10} {:>10}\n",
            "flow", "baseline TD", "TD", "CD", "TS"
        ));
        for row in &self.td_ops {
            let baseline = match row.baseline_td_ops {
                Some(n) => n.to_string(),
                None => "N/A".to_string(),
            };
            out.push_str(&format!(
                "  {:<26} {:>12} {:>10} {:>10} {:>10}\n",
                row.flow, baseline, row.secrow_td_ops, row.secrow_cd_ops, row.secrow_ts_ops
            ));
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("bench report serializes")
    }
}

fn bench_fix() -> LocationFix {
    LocationFix::from_degrees(37.0, -120.0, 1).expect("fix")
}

/// One timed secrow flow on a fresh world; setup runs outside the timer.
fn time_secrow_flow(flow: &'static str, seed: u64) -> (f64, [u64; 3]) {
    let sut = SystemUnderTest::secrow();
    let mut world = World::new(&sut, seed);
    let td = world.add_td("tag");
    let cd = world.add_cd("owner");
    world.register_account(cd, "owner", "pw").expect("account");
    world.login(cd, "owner", "pw").expect("login");
    world.set_proximity(cd, td, true);
    world.set_pairing_mode(td, true);
    world.set_gps(cd, bench_fix());

    match flow {
        "Owner Registration" => {}
        "Primary Owner Operation" | "Location Update" | "Location Query" => {
            assert!(world.run_flow(cd, FlowSpec::PairClaim { td }).is_ok());
            assert!(world.run_flow(cd, FlowSpec::RegisterOwnership { td }).is_ok());
        }
        _ => unreachable!(),
    }
    if matches!(flow, "Location Update" | "Location Query") {
        assert!(world
            .run_flow(cd, FlowSpec::PrimaryCommand { td, cmd: PrimaryCmd::UpdateLocKey, owner_key: None })
            .is_ok());
    }
    if flow == "Location Query" {
        assert!(world.run_flow(cd, FlowSpec::UpdateLocation { td }).is_ok());
    }

    let before_ops = world.meter().snapshot();
    let start = Instant::now();
    let ok = match flow {
        "Owner Registration" => {
            world.run_flow(cd, FlowSpec::PairClaim { td }).is_ok()
                && world.run_flow(cd, FlowSpec::RegisterOwnership { td }).is_ok()
        }
        "Primary Owner Operation" => world
            .run_flow(cd, FlowSpec::PrimaryCommand { td, cmd: PrimaryCmd::UpdateLocKey, owner_key: None })
            .is_ok(),
        "Location Update" => world.run_flow(cd, FlowSpec::UpdateLocation { td }).is_ok(),
        "Location Query" => world.run_flow(cd, FlowSpec::QueryLocation { td }).is_ok(),
        _ => unreachable!(),
    };
    let elapsed = start.elapsed().as_secs_f64() * 1e6;
    assert!(ok, "bench flow {flow} failed");
    let ops = world.meter().since(&before_ops);
    (
        elapsed,
        [
            ops.role_total(RoleKind::Td),
            ops.role_total(RoleKind::Cd),
            ops.role_total(RoleKind::Ts),
        ],
    )
}

/// One timed baseline flow; `None` when the flow has no baseline analog.
fn time_baseline_flow(flow: &'static str, seed: u64) -> Option<(f64, u64)> {
    let sut = SystemUnderTest::baseline_trackr();
    let mut world = World::new(&sut, seed);
    let td = world.add_td("tag");
    let cd = world.add_cd("owner");
    world.register_account(cd, "owner", "pw").expect("account");
    world.login(cd, "owner", "pw").expect("login");
    world.set_proximity(cd, td, true);
    world.set_gps(cd, bench_fix());
    let trackerid = derive_trackerid(&td.bytes);

    match flow {
        "Owner Registration" => {}
        "Primary Owner Operation" => return None,
        "Location Update" | "Location Query" => {
            assert!(world
                .run_baseline_flow(cd, BaselineFlowSpec::Claim { trackerid: trackerid.clone() })
                .is_ok());
        }
        _ => unreachable!(),
    }
    if flow == "Location Query" {
        assert!(world.run_baseline_honest_update(cd, td).is_ok());
    }

    let before_ops = world.meter().snapshot();
    let start = Instant::now();
    let ok = match flow {
        "Owner Registration" => world
            .run_baseline_flow(cd, BaselineFlowSpec::Claim { trackerid: trackerid.clone() })
            .is_ok(),
        "Location Update" => world.run_baseline_honest_update(cd, td).is_ok(),
        "Location Query" => world.run_baseline_flow(cd, BaselineFlowSpec::Query).is_ok(),
        _ => unreachable!(),
    };
    let elapsed = start.elapsed().as_secs_f64() * 1e6;
    assert!(ok, "bench baseline flow {flow} failed");
    let td_ops = world.meter().since(&before_ops).role_total(RoleKind::Td);
    Some((elapsed, td_ops))
}

fn time_crypto(reps: u32) -> Vec<CryptoRow> {
    let suite = CryptoSuite::real();
    let mut rng = ChaCha20Rng::seed_from_u64(4242);
    let pair = suite.generate_keypair(&mut rng);
    let sym = suite.gen_symmetric_key(&mut rng);
    let payload = [0x5au8; 64];

    let mut asym_cts = Vec::new();
    let start = Instant::now();
    for _ in 0..reps {
        asym_cts.push(suite.asym_encrypt(&pair.public, &payload, &mut rng));
    }
    let asym_enc = start.elapsed().as_secs_f64() * 1e6 / reps as f64;

    let start = Instant::now();
    for ct in &asym_cts {
        suite.asym_decrypt(&pair.private, ct).expect("decrypt");
    }
    let asym_dec = start.elapsed().as_secs_f64() * 1e6 / reps as f64;

    let mut sym_cts = Vec::new();
    let start = Instant::now();
    for _ in 0..reps {
        sym_cts.push(suite.sym_encrypt(&sym, &payload, &mut rng));
    }
    let sym_enc = start.elapsed().as_secs_f64() * 1e6 / reps as f64;

    let start = Instant::now();
    for ct in &sym_cts {
        suite.sym_decrypt(&sym, ct).expect("decrypt");
    }
    let sym_dec = start.elapsed().as_secs_f64() * 1e6 / reps as f64;

    vec![
        CryptoRow { op: "asym_enc", mean_micros: asym_enc },
        CryptoRow { op: "asym_dec", mean_micros: asym_dec },
        CryptoRow { op: "sym_enc", mean_micros: sym_enc },
        CryptoRow { op: "sym_dec", mean_micros: sym_dec },
    ]
}

pub fn run_bench(reps: u32) -> BenchReport {
    let reps = reps.max(1);
    let crypto = time_crypto(reps);
    let mut flows = Vec::new();
    let mut td_ops = Vec::new();
    for flow in FLOW_NAMES {
        let mut secrow_total = 0.0;
        let mut secrow_ops = [0u64; 3];
        let mut baseline_total: Option<f64> = None;
        let mut baseline_ops: Option<u64> = None;
        for rep in 0..reps {
            let (us, ops) = time_secrow_flow(flow, 1000 + rep as u64);
            secrow_total += us;
            secrow_ops = ops;
            if let Some((us, ops)) = time_baseline_flow(flow, 2000 + rep as u64) {
                *baseline_total.get_or_insert(0.0) += us;
                baseline_ops = Some(ops);
            }
        }
        flows.push(FlowRow {
            flow,
            baseline_micros: baseline_total.map(|t| t / reps as f64),
            secrow_micros: secrow_total / reps as f64,
        });
        td_ops.push(OpsRow {
            flow,
            baseline_td_ops: baseline_ops,
            secrow_td_ops: secrow_ops[0],
            secrow_cd_ops: secrow_ops[1],
            secrow_ts_ops: secrow_ops[2],
        });
    }
    BenchReport { reps, crypto, flows, td_ops }
}
