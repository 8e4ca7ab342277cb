//! Scenario files: a declarative line-oriented script format for world
//! setup, flows, adversary interventions, and expected outcomes.
//!
//! One action per line, `#` comments. Example:
//!
//! ```text
//! system secrow
//! td tag
//! cd alice
//! account alice secret
//! login alice secret expect ok
//! proximity alice tag near
//! pairing-mode tag on
//! flow alice pair-claim tag expect ok
//! ```

use thiserror::Error;

use crate::baseline::{BaselineFlowSpec, BaselineResult};
use crate::cd::{FlowResult, FlowSpec};
use crate::simnet::adversary::{Capabilities, Mutation};
use crate::simnet::World;
use crate::sut::SystemUnderTest;
use crate::transcript::Endpoint;
use crate::wire::{derive_trackerid, ErrorCode, LocationFix, PrimaryCmd, ProtocolMessage};

#[derive(Debug, Error, PartialEq, Eq)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expect {
    Ok,
    Err(ErrorCode),
    Stalled,
    Loc { lat: f64, lon: f64 },
    Contains { td: String, lat: f64, lon: f64 },
    Empty,
    Reject,
    Accept,
}

#[derive(Debug, Clone)]
pub enum FlowKind {
    PairClaim { td: String },
    RegisterOwnership { td: String },
    UpdateLocKey { td: String },
    AddSOwner { td: String, peer: String },
    RemSOwner { td: String, peer: String },
    UpdateLocation { td: String },
    QueryLocation { td: String },
    Ring { td: String },
    BaselineClaim { td: String },
    BaselineClaimId { trackerid: String },
    BaselineUpdate { td: String, lat: f64, lon: f64 },
    BaselineQuery,
    BaselineRing { td: String },
}

#[derive(Debug, Clone)]
pub enum Action {
    AddTd { name: String, mac: Option<[u8; 6]> },
    AddCd { name: String },
    Account { cd: String, password: String },
    Login { cd: String, password: String, expect: Expect },
    Proximity { cd: String, td: String, near: bool },
    PairingMode { td: String, on: bool },
    Gps { cd: String, lat: f64, lon: f64 },
    Step { n: u64 },
    Flow { cd: String, kind: FlowKind, expect: Expect },
    ShareKey { from: String, to: String, td: String, expect: Expect },
    AdvCaps { caps: Capabilities },
    AdvReplay { tag: u8, tag_name: String, expect: Expect },
    AdvFlip { tag: u8, offset: usize },
    AdvDrop { tag: u8 },
    AssertTsHasLocation { td: String, expected: bool },
    AssertRingCount { td: String, count: usize },
    AssertDropped { count: usize },
}

#[derive(Debug)]
pub struct Scenario {
    pub system: SystemUnderTest,
    pub actions: Vec<(usize, String, Action)>,
}

const MESSAGE_TAGS: &[(&str, u8)] = &[
    ("AddPOwner", 0x01),
    ("PairingChallenge", 0x02),
    ("PairingProof", 0x03),
    ("AddOwnerRequest", 0x04),
    ("OwnershipTicket", 0x05),
    ("CheckOwner", 0x06),
    ("OwnershipProof", 0x07),
    ("CommitOwner", 0x08),
    ("PrimaryCmdBegin", 0x09),
    ("PrimaryCmdChallenge", 0x0a),
    ("PrimaryCmdRequest", 0x0b),
    ("LocUpdateRequest", 0x0c),
    ("LocUpdateGrant", 0x0d),
    ("SignTokenRequest", 0x0e),
    ("SignTokenResponse", 0x0f),
    ("AttestedLocationUpdate", 0x10),
    ("LocQueryRequest", 0x11),
    ("LocQueryResponse", 0x12),
    ("Ack", 0x13),
    ("Err", 0x14),
    ("RingRequest", 0x15),
    ("RingChallenge", 0x16),
    ("RingProof", 0x17),
    ("BaselineClaim", 0x20),
    ("BaselineUpdate", 0x21),
    ("BaselineQuery", 0x22),
    ("BaselineQueryResponse", 0x23),
    ("BaselineRing", 0x24),
];

fn tag_by_name(name: &str) -> Option<u8> {
    MESSAGE_TAGS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn parse(input: &str) -> Result<Scenario, ParseError> {
    let mut system: Option<SystemUnderTest> = None;
    let mut actions = Vec::new();
    for (idx, raw) in input.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let words: Vec<&str> = line.split_whitespace().collect();
        let err = |message: &str| ParseError { line: line_no, message: message.to_string() };
        if words[0] == "system" {
            let label = words.get(1).ok_or_else(|| err("missing system label"))?;
            system =
                Some(SystemUnderTest::from_label(label).ok_or_else(|| err("unknown system label"))?);
        } else {
            let action = parse_action(&words, line_no)?;
            actions.push((line_no, line.to_string(), action));
        }
    }
    let system = system.ok_or(ParseError { line: 0, message: "missing `system` line".to_string() })?;
    Ok(Scenario { system, actions })
}

fn parse_mac(text: &str) -> Option<[u8; 6]> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 6 {
        return None;
    }
    let mut mac = [0u8; 6];
    for (i, part) in parts.iter().enumerate() {
        mac[i] = u8::from_str_radix(part, 16).ok()?;
    }
    Some(mac)
}

fn parse_expect(words: &[&str], line: usize) -> Result<Expect, ParseError> {
    let err = |message: String| ParseError { line, message };
    match words {
        ["expect", "ok"] => Ok(Expect::Ok),
        ["expect", "stalled"] => Ok(Expect::Stalled),
        ["expect", "reject"] => Ok(Expect::Reject),
        ["expect", "accept"] => Ok(Expect::Accept),
        ["expect", "empty"] => Ok(Expect::Empty),
        ["expect", "err", code] => ErrorCode::from_name(code)
            .map(Expect::Err)
            .ok_or_else(|| err(format!("unknown error code {code}"))),
        ["expect", "loc", lat, lon] => {
            let lat = lat.parse().map_err(|_| err("bad latitude".to_string()))?;
            let lon = lon.parse().map_err(|_| err("bad longitude".to_string()))?;
            Ok(Expect::Loc { lat, lon })
        }
        ["expect", "contains", td, lat, lon] => {
            let lat = lat.parse().map_err(|_| err("bad latitude".to_string()))?;
            let lon = lon.parse().map_err(|_| err("bad longitude".to_string()))?;
            Ok(Expect::Contains { td: td.to_string(), lat, lon })
        }
        _ => Err(err(format!("bad expectation: {}", words.join(" ")))),
    }
}

fn parse_action(words: &[&str], line: usize) -> Result<Action, ParseError> {
    let err = |message: String| ParseError { line, message };
    let s = |w: &&str| w.to_string();
    match words {
        ["td", name] => Ok(Action::AddTd { name: s(name), mac: None }),
        ["td", name, "mac", mac] => Ok(Action::AddTd {
            name: s(name),
            mac: Some(parse_mac(mac).ok_or_else(|| err("bad mac".to_string()))?),
        }),
        ["cd", name] => Ok(Action::AddCd { name: s(name) }),
        ["account", cd, password] => Ok(Action::Account { cd: s(cd), password: s(password) }),
        ["login", cd, password, rest @ ..] => Ok(Action::Login {
            cd: s(cd),
            password: s(password),
            expect: parse_expect(rest, line)?,
        }),
        ["proximity", cd, td, state] => Ok(Action::Proximity {
            cd: s(cd),
            td: s(td),
            near: match *state {
                "near" => true,
                "far" => false,
                _ => return Err(err("expected near|far".to_string())),
            },
        }),
        ["pairing-mode", td, state] => Ok(Action::PairingMode {
            td: s(td),
            on: match *state {
                "on" => true,
                "off" => false,
                _ => return Err(err("expected on|off".to_string())),
            },
        }),
        ["gps", cd, lat, lon] => Ok(Action::Gps {
            cd: s(cd),
            lat: lat.parse().map_err(|_| err("bad latitude".to_string()))?,
            lon: lon.parse().map_err(|_| err("bad longitude".to_string()))?,
        }),
        ["step", n] => Ok(Action::Step { n: n.parse().map_err(|_| err("bad step count".to_string()))? }),
        ["flow", cd, rest @ ..] => parse_flow(s(cd), rest, line),
        ["share-key", from, to, td, rest @ ..] => Ok(Action::ShareKey {
            from: s(from),
            to: s(to),
            td: s(td),
            expect: parse_expect(rest, line)?,
        }),
        ["adversary", "caps", list] => {
            let mut caps = Capabilities::default();
            for name in list.split(',') {
                let apply = Capabilities::parse_one(name)
                    .ok_or_else(|| err(format!("unknown capability {name}")))?;
                apply(&mut caps);
            }
            Ok(Action::AdvCaps { caps })
        }
        ["adversary", "replay", tag, rest @ ..] => Ok(Action::AdvReplay {
            tag: tag_by_name(tag).ok_or_else(|| err(format!("unknown message tag {tag}")))?,
            tag_name: s(tag),
            expect: parse_expect(rest, line)?,
        }),
        ["adversary", "flip-byte", tag, offset] => Ok(Action::AdvFlip {
            tag: tag_by_name(tag).ok_or_else(|| err(format!("unknown message tag {tag}")))?,
            offset: offset.parse().map_err(|_| err("bad offset".to_string()))?,
        }),
        ["adversary", "drop", tag] => Ok(Action::AdvDrop {
            tag: tag_by_name(tag).ok_or_else(|| err(format!("unknown message tag {tag}")))?,
        }),
        ["assert", "ts-has-location", td, flag] => Ok(Action::AssertTsHasLocation {
            td: s(td),
            expected: match *flag {
                "yes" => true,
                "no" => false,
                _ => return Err(err("expected yes|no".to_string())),
            },
        }),
        ["assert", "ring-count", td, n] => Ok(Action::AssertRingCount {
            td: s(td),
            count: n.parse().map_err(|_| err("bad count".to_string()))?,
        }),
        ["assert", "dropped", n] => Ok(Action::AssertDropped {
            count: n.parse().map_err(|_| err("bad count".to_string()))?,
        }),
        _ => Err(err(format!("unrecognized action: {}", words.join(" ")))),
    }
}

fn parse_flow(cd: String, words: &[&str], line: usize) -> Result<Action, ParseError> {
    let err = |message: String| ParseError { line, message };
    let (kind, rest): (FlowKind, &[&str]) = match words {
        ["pair-claim", td, rest @ ..] => (FlowKind::PairClaim { td: td.to_string() }, rest),
        ["register-ownership", td, rest @ ..] => (FlowKind::RegisterOwnership { td: td.to_string() }, rest),
        ["update-loc-key", td, rest @ ..] => (FlowKind::UpdateLocKey { td: td.to_string() }, rest),
        ["add-sowner", td, peer, rest @ ..] => {
            (FlowKind::AddSOwner { td: td.to_string(), peer: peer.to_string() }, rest)
        }
        ["rem-sowner", td, peer, rest @ ..] => {
            (FlowKind::RemSOwner { td: td.to_string(), peer: peer.to_string() }, rest)
        }
        ["update-location", td, rest @ ..] => (FlowKind::UpdateLocation { td: td.to_string() }, rest),
        ["query-location", td, rest @ ..] => (FlowKind::QueryLocation { td: td.to_string() }, rest),
        ["ring", td, rest @ ..] => (FlowKind::Ring { td: td.to_string() }, rest),
        ["baseline-claim", td, rest @ ..] => (FlowKind::BaselineClaim { td: td.to_string() }, rest),
        ["baseline-claim-id", id, rest @ ..] => {
            (FlowKind::BaselineClaimId { trackerid: id.to_string() }, rest)
        }
        ["baseline-update", td, lat, lon, rest @ ..] => (
            FlowKind::BaselineUpdate {
                td: td.to_string(),
                lat: lat.parse().map_err(|_| err("bad latitude".to_string()))?,
                lon: lon.parse().map_err(|_| err("bad longitude".to_string()))?,
            },
            rest,
        ),
        ["baseline-query", rest @ ..] => (FlowKind::BaselineQuery, rest),
        ["baseline-ring", td, rest @ ..] => (FlowKind::BaselineRing { td: td.to_string() }, rest),
        _ => return Err(err(format!("unrecognized flow: {}", words.join(" ")))),
    };
    Ok(Action::Flow { cd, kind, expect: parse_expect(rest, line)? })
}

#[derive(Debug, Clone)]
pub struct LineResult {
    pub line: usize,
    pub text: String,
    pub passed: bool,
    pub note: String,
}

#[derive(Debug)]
pub struct RunReport {
    pub scenario_label: String,
    pub seed: u64,
    pub lines: Vec<LineResult>,
    pub transcript_bytes: Vec<u8>,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.lines.iter().all(|l| l.passed)
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("scenario: {} (seed {})\n", self.scenario_label, self.seed));
        for line in &self.lines {
            out.push_str(&format!(
                "{} line {:>3}: {}  -- {}\n",
                if line.passed { "PASS" } else { "FAIL" },
                line.line,
                line.text,
                line.note
            ));
        }
        out.push_str(&format!("result: {}\n", if self.passed() { "PASS" } else { "FAIL" }));
        out
    }
}

struct Runner {
    world: World,
    results: Vec<LineResult>,
}

impl Runner {
    fn id(&self, name: &str) -> Result<crate::wire::Identifier, String> {
        self.world.id_of(name).ok_or_else(|| format!("unknown entity {name}"))
    }
}

/// Execute a parsed scenario with the given seed.
pub fn run(scenario: &Scenario, label: &str, seed: u64) -> RunReport {
    let mut runner = Runner { world: World::new(&scenario.system, seed), results: Vec::new() };
    for (line, text, action) in &scenario.actions {
        let outcome = execute(&mut runner, action);
        let (passed, note) = match outcome {
            Ok(note) => (true, note),
            Err(note) => (false, note),
        };
        runner.results.push(LineResult { line: *line, text: text.clone(), passed, note });
    }
    RunReport {
        scenario_label: label.to_string(),
        seed,
        lines: runner.results,
        transcript_bytes: runner.world.transcript().to_bytes(),
    }
}

fn check_expect(expect: &Expect, result: &FlowResult) -> Result<String, String> {
    let note = format!("{result:?}");
    let pass = match expect {
        Expect::Ok => result.is_ok(),
        Expect::Err(code) => result.error() == Some(*code),
        Expect::Stalled => matches!(result, FlowResult::Stalled),
        Expect::Loc { lat, lon } => match result {
            FlowResult::Location(loc) => {
                let want = LocationFix::from_degrees(*lat, *lon, 0).map_err(|e| e.to_string())?;
                loc.lat_e7() == want.lat_e7() && loc.lon_e7() == want.lon_e7()
            }
            _ => false,
        },
        _ => false,
    };
    if pass {
        Ok(note)
    } else {
        Err(format!("expected {expect:?}, got {note}"))
    }
}

fn check_baseline_expect(expect: &Expect, result: &BaselineResult) -> Result<String, String> {
    let note = format!("{result:?}");
    let pass = match expect {
        Expect::Ok => result.is_ok(),
        Expect::Err(code) => matches!(result, BaselineResult::Failed(c) if c == code),
        Expect::Stalled => matches!(result, BaselineResult::Stalled),
        Expect::Empty => matches!(result, BaselineResult::Items(items) if items.is_empty()),
        _ => false,
    };
    if pass {
        Ok(note)
    } else {
        Err(format!("expected {expect:?}, got {note}"))
    }
}

fn execute(runner: &mut Runner, action: &Action) -> Result<String, String> {
    match action {
        Action::AddTd { name, mac } => {
            let id = match mac {
                Some(mac) => runner.world.add_td_with_mac(name, *mac),
                None => runner.world.add_td(name),
            };
            Ok(format!("td {} at {}", name, id.mac_string()))
        }
        Action::AddCd { name } => {
            let id = runner.world.add_cd(name);
            Ok(format!("cd {} at {}", name, id.mac_string()))
        }
        Action::Account { cd, password } => {
            let id = runner.id(cd)?;
            runner
                .world
                .register_account(id, cd, password)
                .map(|_| "account registered".to_string())
                .map_err(|e| e.to_string())
        }
        Action::Login { cd, password, expect } => {
            let id = runner.id(cd)?;
            let result = match runner.world.login(id, cd, password) {
                Ok(()) => FlowResult::Ok,
                Err(code) => FlowResult::Failed(code),
            };
            check_expect(expect, &result)
        }
        Action::Proximity { cd, td, near } => {
            let cd_id = runner.id(cd)?;
            let td_id = runner.id(td)?;
            runner.world.set_proximity(cd_id, td_id, *near);
            Ok(if *near { "near" } else { "far" }.to_string())
        }
        Action::PairingMode { td, on } => {
            let td_id = runner.id(td)?;
            runner.world.set_pairing_mode(td_id, *on);
            Ok(format!("pairing mode {}", if *on { "on" } else { "off" }))
        }
        Action::Gps { cd, lat, lon } => {
            let cd_id = runner.id(cd)?;
            let ts = runner.world.step_count();
            let loc = LocationFix::from_degrees(*lat, *lon, ts).map_err(|e| e.to_string())?;
            runner.world.set_gps(cd_id, loc);
            Ok("gps set".to_string())
        }
        Action::Step { n } => {
            runner.world.step(*n);
            Ok(format!("now at step {}", runner.world.step_count()))
        }
        Action::Flow { cd, kind, expect } => {
            let cd_id = runner.id(cd)?;
            run_flow_action(runner, cd_id, kind, expect)
        }
        Action::ShareKey { from, to, td, expect } => {
            let from_id = runner.id(from)?;
            let to_id = runner.id(to)?;
            let td_id = runner.id(td)?;
            let result = match runner.world.share_location_key(from_id, to_id, td_id) {
                Ok(()) => FlowResult::Ok,
                Err(code) => FlowResult::Failed(code),
            };
            check_expect(expect, &result)
        }
        Action::AdvCaps { caps } => {
            runner.world.adversary.caps = *caps;
            Ok("capabilities set".to_string())
        }
        Action::AdvReplay { tag, tag_name, expect } => {
            let world = &mut runner.world;
            let marker = world.transcript().len();
            world.adversary.replay_last(*tag).map_err(|e| format!("replay failed: {e:?}"))?;
            world.run_until_idle(100);
            let acked = world
                .transcript()
                .since(marker)
                .iter()
                .filter(|e| e.disposition.is_delivered())
                .any(|e| {
                    matches!(e.sender, Endpoint::Td(_) | Endpoint::Ts)
                        && matches!(e.message(), Some(ProtocolMessage::Ack))
                });
            match expect {
                Expect::Reject if !acked => Ok(format!("replayed {tag_name}: rejected")),
                Expect::Accept if acked => Ok(format!("replayed {tag_name}: accepted")),
                Expect::Reject => Err("replay was accepted".to_string()),
                Expect::Accept => Err("replay was rejected".to_string()),
                other => Err(format!("replay expects reject|accept, got {other:?}")),
            }
        }
        Action::AdvFlip { tag, offset } => {
            runner
                .world
                .adversary
                .modify_next(*tag, Mutation::FlipByte(*offset))
                .map_err(|e| format!("modify refused: {e:?}"))?;
            Ok("armed flip-byte".to_string())
        }
        Action::AdvDrop { tag } => {
            runner
                .world
                .adversary
                .drop_next(*tag)
                .map_err(|e| format!("drop refused: {e:?}"))?;
            Ok("armed drop".to_string())
        }
        Action::AssertTsHasLocation { td, expected } => {
            let td_id = runner.id(td)?;
            let world = &runner.world;
            let has =
                world.ts_stored_ciphertext(td_id).is_some() || world.ts_stored_plaintext(td_id).is_some();
            if has == *expected {
                Ok(format!("service location present: {has}"))
            } else {
                Err(format!("expected location present={expected}, got {has}"))
            }
        }
        Action::AssertRingCount { td, count } => {
            let td_id = runner.id(td)?;
            let actual = runner.world.td_ring_count(td_id);
            if actual == *count {
                Ok(format!("ring count {actual}"))
            } else {
                Err(format!("expected ring count {count}, got {actual}"))
            }
        }
        Action::AssertDropped { count } => {
            let actual = runner.world.transcript().dropped_count();
            if actual == *count {
                Ok(format!("dropped {actual}"))
            } else {
                Err(format!("expected {count} dropped, got {actual}"))
            }
        }
    }
}

fn run_flow_action(
    runner: &mut Runner,
    cd: crate::wire::Identifier,
    kind: &FlowKind,
    expect: &Expect,
) -> Result<String, String> {
    match kind {
        FlowKind::PairClaim { td } => {
            let td = runner.id(td)?;
            let result = runner.world.run_flow(cd, FlowSpec::PairClaim { td });
            check_expect(expect, &result)
        }
        FlowKind::RegisterOwnership { td } => {
            let td = runner.id(td)?;
            let result = runner.world.run_flow(cd, FlowSpec::RegisterOwnership { td });
            check_expect(expect, &result)
        }
        FlowKind::UpdateLocKey { td } => {
            let td = runner.id(td)?;
            let result = runner.world.run_flow(
                cd,
                FlowSpec::PrimaryCommand { td, cmd: PrimaryCmd::UpdateLocKey, owner_key: None },
            );
            check_expect(expect, &result)
        }
        FlowKind::AddSOwner { td, peer } | FlowKind::RemSOwner { td, peer } => {
            let cmd = if matches!(kind, FlowKind::AddSOwner { .. }) {
                PrimaryCmd::AddSOwner
            } else {
                PrimaryCmd::RemSOwner
            };
            let td = runner.id(td)?;
            let peer = runner.id(peer)?;
            let owner_key = runner.world.cd_public_key(peer);
            let result = runner.world.run_flow(cd, FlowSpec::PrimaryCommand { td, cmd, owner_key });
            check_expect(expect, &result)
        }
        FlowKind::UpdateLocation { td } => {
            let td = runner.id(td)?;
            let result = runner.world.run_flow(cd, FlowSpec::UpdateLocation { td });
            check_expect(expect, &result)
        }
        FlowKind::QueryLocation { td } => {
            let td = runner.id(td)?;
            let result = runner.world.run_flow(cd, FlowSpec::QueryLocation { td });
            check_expect(expect, &result)
        }
        FlowKind::Ring { td } => {
            let td = runner.id(td)?;
            let result = runner.world.run_flow(cd, FlowSpec::Ring { td });
            check_expect(expect, &result)
        }
        FlowKind::BaselineClaim { td } => {
            let td = runner.id(td)?;
            let trackerid = derive_trackerid(&td.bytes);
            let result = runner.world.run_baseline_flow(cd, BaselineFlowSpec::Claim { trackerid });
            check_baseline_expect(expect, &result)
        }
        FlowKind::BaselineClaimId { trackerid } => {
            let result = runner
                .world
                .run_baseline_flow(cd, BaselineFlowSpec::Claim { trackerid: trackerid.clone() });
            check_baseline_expect(expect, &result)
        }
        FlowKind::BaselineUpdate { td, lat, lon } => {
            let td = runner.id(td)?;
            let ts = runner.world.step_count();
            let loc = LocationFix::from_degrees(*lat, *lon, ts).map_err(|e| e.to_string())?;
            let trackerid = derive_trackerid(&td.bytes);
            let result = runner.world.run_baseline_flow(cd, BaselineFlowSpec::Update { trackerid, loc });
            check_baseline_expect(expect, &result)
        }
        FlowKind::BaselineQuery => {
            let result = runner.world.run_baseline_flow(cd, BaselineFlowSpec::Query);
            if let Expect::Contains { td, lat, lon } = expect {
                let td_id = runner.id(td)?;
                let trackerid = derive_trackerid(&td_id.bytes);
                let want = LocationFix::from_degrees(*lat, *lon, 0).map_err(|e| e.to_string())?;
                match &result {
                    BaselineResult::Items(items) => {
                        let hit = items.iter().any(|(id, loc)| {
                            *id == trackerid
                                && loc.lat_e7() == want.lat_e7()
                                && loc.lon_e7() == want.lon_e7()
                        });
                        if hit {
                            Ok(format!("{} items, match found", items.len()))
                        } else {
                            Err(format!("no matching item in {result:?}"))
                        }
                    }
                    other => Err(format!("expected items, got {other:?}")),
                }
            } else {
                check_baseline_expect(expect, &result)
            }
        }
        FlowKind::BaselineRing { td } => {
            let td = runner.id(td)?;
            let result = runner.world.run_baseline_flow(cd, BaselineFlowSpec::Ring { td });
            check_baseline_expect(expect, &result)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_missing_system() {
        let err = parse("td tag\n").unwrap_err();
        assert_eq!(err.line, 0);
    }

    #[test]
    fn reports_line_numbers() {
        let err = parse("system secrow\ntd tag\nbogus action here\n").unwrap_err();
        assert_eq!(err.line, 3);
    }

    #[test]
    fn parses_comments_and_macs() {
        let scenario =
            parse("# comment\nsystem baseline_trackr\ntd tag mac 00:1b:44:11:3a:b7  # trailing\ncd eve\n")
                .unwrap();
        assert_eq!(scenario.actions.len(), 2);
    }

    #[test]
    fn runs_a_minimal_honest_scenario() {
        let text = "\
system secrow
td tag
cd alice
account alice pw
login alice pw expect ok
proximity alice tag near
pairing-mode tag on
flow alice pair-claim tag expect ok
flow alice register-ownership tag expect ok
flow alice update-loc-key tag expect ok
gps alice 37.1234567 -119.7654321
flow alice update-location tag expect ok
flow alice query-location tag expect loc 37.1234567 -119.7654321
";
        let scenario = parse(text).unwrap();
        let report = run(&scenario, "mini", 5);
        assert!(report.passed(), "{}", report.render_text());
    }

    #[test]
    fn expectation_failures_fail_the_run() {
        let text = "\
system secrow
td tag
cd alice
proximity alice tag near
flow alice pair-claim tag expect ok
";
        let scenario = parse(text).unwrap();
        let report = run(&scenario, "bad", 5);
        assert!(!report.passed());
    }
}
