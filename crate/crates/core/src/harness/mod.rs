//! Executable checkers for the eight necessary security conditions, the
//! four role-level security property verdicts assembled from them, and
//! the library of named attack scenarios.
//!
//! A condition "holds" when every attack in its battery fails against
//! the system under test; a single successful attack flips it to
//! violated and yields a replayable witness. Property verdicts follow
//! the implication rule: a property is violated exactly when one of its
//! necessary conditions is.

pub mod attacks;
pub mod report;

use serde::Serialize;

use crate::sut::SystemUnderTest;
use crate::transcript::Transcript;

/// The eight necessary security conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Condition {
    C1,
    C2,
    C3,
    C4,
    C5,
    C6,
    C7,
    C8,
}

impl Condition {
    pub const ALL: [Condition; 8] = [
        Condition::C1,
        Condition::C2,
        Condition::C3,
        Condition::C4,
        Condition::C5,
        Condition::C6,
        Condition::C7,
        Condition::C8,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Condition::C1 => "C1",
            Condition::C2 => "C2",
            Condition::C3 => "C3",
            Condition::C4 => "C4",
            Condition::C5 => "C5",
            Condition::C6 => "C6",
            Condition::C7 => "C7",
            Condition::C8 => "C8",
        }
    }

    pub fn description(&self) -> &'static str {
        match self {
            Condition::C1 => "device recognizes its owners",
            Condition::C2 => "service recognizes the owners of a device",
            Condition::C3 => "owning requires a physical action on the device",
            Condition::C4 => "registering ownership requires communicating with the device",
            Condition::C5 => "location updates only from devices in communication range",
            Condition::C6 => "impossible to spoof a tracking device",
            Condition::C7 => "impossible for a CD to spoof a location",
            Condition::C8 => "impossible to spoof the tracking service",
        }
    }

    pub fn from_label(label: &str) -> Option<Condition> {
        Condition::ALL.into_iter().find(|c| c.label() == label)
    }
}

/// The four role-level security properties and their condition sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Property {
    TdS1,
    TdS2,
    CdS1,
    TsS1,
}

impl Property {
    pub const ALL: [Property; 4] = [Property::TdS1, Property::TdS2, Property::CdS1, Property::TsS1];

    pub fn label(&self) -> &'static str {
        match self {
            Property::TdS1 => "TD-S1",
            Property::TdS2 => "TD-S2",
            Property::CdS1 => "CD-S1",
            Property::TsS1 => "TS-S1",
        }
    }

    pub fn title(&self) -> &'static str {
        match self {
            Property::TdS1 => "Privileged owners",
            Property::TdS2 => "Physical ownership",
            Property::CdS1 => "Anonymous & proximity-aware location update",
            Property::TsS1 => "Reliable location service",
        }
    }

    pub fn conditions(&self) -> &'static [Condition] {
        match self {
            Property::TdS1 => &[Condition::C1, Condition::C2],
            Property::TdS2 => &[Condition::C3, Condition::C4],
            Property::CdS1 => &[Condition::C5],
            Property::TsS1 => &[Condition::C6, Condition::C7, Condition::C8],
        }
    }
}

/// A replayable demonstration that a condition was violated.
#[derive(Debug, Clone)]
pub struct Witness {
    pub scenario: &'static str,
    pub seed: u64,
    pub detail: String,
    pub transcript: Transcript,
}

#[derive(Debug, Clone)]
pub struct NscVerdict {
    pub condition: Condition,
    pub holds: bool,
    /// True for conditions encoded as model assumptions (C8): the verdict
    /// reports the model, not an attack battery.
    pub by_model: bool,
    pub witness: Option<Witness>,
}

#[derive(Debug, Clone)]
pub struct PropertyVerdict {
    pub property: Property,
    pub holds: bool,
    pub failed_conditions: Vec<Condition>,
}

/// Outcome of one attack scenario run.
#[derive(Debug, Clone)]
pub struct AttackReport {
    pub name: &'static str,
    pub sut_label: String,
    pub seed: u64,
    pub succeeded: bool,
    pub detail: String,
    pub transcript: Transcript,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UnknownAttack;

impl std::fmt::Display for UnknownAttack {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("unknown attack name")
    }
}

impl std::error::Error for UnknownAttack {}

/// Run one condition's fixed attack battery. Every attack must fail for
/// the condition to hold.
pub fn check_condition(condition: Condition, sut: &SystemUnderTest) -> NscVerdict {
    if condition == Condition::C8 {
        let report = attacks::run_scenario("ts_endpoint_mimicry", sut);
        return NscVerdict {
            condition,
            holds: !report.succeeded,
            by_model: true,
            witness: witness_of(report),
        };
    }
    for name in condition_battery(condition) {
        let report = attacks::run_scenario(name, sut);
        if report.succeeded {
            return NscVerdict { condition, holds: false, by_model: false, witness: witness_of(report) };
        }
    }
    NscVerdict { condition, holds: true, by_model: false, witness: None }
}

/// The fixed scenario battery backing each condition's verdict.
pub fn condition_battery(condition: Condition) -> &'static [&'static str] {
    match condition {
        Condition::C1 => &["nonowner_ring"],
        Condition::C2 => &["nonowner_query", "unauthenticated_query"],
        Condition::C3 => &["claim_without_pairing_action"],
        Condition::C4 => &["remote_claim", "mac_enumeration_claim"],
        Condition::C5 => &["spoof_location_update", "sybil_far_update"],
        Condition::C6 => &["mimic_td", "phantom_td_update"],
        Condition::C7 => &["hostile_tee_driver"],
        Condition::C8 => &["ts_endpoint_mimicry"],
    }
}

fn witness_of(report: AttackReport) -> Option<Witness> {
    report.succeeded.then_some(Witness {
        scenario: report.name,
        seed: report.seed,
        detail: report.detail,
        transcript: report.transcript,
    })
}

pub fn evaluate_conditions(sut: &SystemUnderTest) -> Vec<NscVerdict> {
    Condition::ALL.iter().map(|c| check_condition(*c, sut)).collect()
}

/// Apply the condition-to-property mapping to a full condition sweep.
pub fn evaluate_properties(sut: &SystemUnderTest) -> (Vec<NscVerdict>, Vec<PropertyVerdict>) {
    let conditions = evaluate_conditions(sut);
    let properties = properties_from_conditions(&conditions);
    (conditions, properties)
}

pub fn properties_from_conditions(conditions: &[NscVerdict]) -> Vec<PropertyVerdict> {
    Property::ALL
        .iter()
        .map(|property| {
            let failed: Vec<Condition> = property
                .conditions()
                .iter()
                .filter(|c| conditions.iter().any(|v| v.condition == **c && !v.holds))
                .copied()
                .collect();
            PropertyVerdict { property: *property, holds: failed.is_empty(), failed_conditions: failed }
        })
        .collect()
}

/// Re-run a witness byte-for-byte: same scenario, same seed, and require
/// the same verdict and transcript bytes.
pub fn replay_witness(witness: &Witness, sut: &SystemUnderTest) -> bool {
    let report = attacks::run_scenario(witness.scenario, sut);
    report.succeeded && report.transcript.to_bytes() == witness.transcript.to_bytes()
}

/// Run a named attack from the public library.
pub fn run_attack(name: &str, sut: &SystemUnderTest) -> Result<AttackReport, UnknownAttack> {
    if !attacks::ATTACK_LIBRARY.contains(&name) {
        return Err(UnknownAttack);
    }
    Ok(attacks::run_scenario(name, sut))
}

pub fn attack_names() -> &'static [&'static str] {
    attacks::ATTACK_LIBRARY
}

/// The violation pattern the TrackR-style baseline must reproduce.
pub fn expected_baseline_violations() -> Vec<Condition> {
    vec![
        Condition::C1,
        Condition::C3,
        Condition::C4,
        Condition::C5,
        Condition::C6,
        Condition::C7,
    ]
}
