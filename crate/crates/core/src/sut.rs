//! System-under-test selection and world configuration, including the
//! defense-disabling knobs the harness uses for mutation soundness
//! checks: each knob removes exactly one defense so the matching
//! necessary condition flips from holding to violated.

use crate::crypto::BackendKind;
use crate::harness::Condition;

/// Which protocol implementation a world hosts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SutKind {
    Secrow,
    BaselineTrackr,
}

impl SutKind {
    pub fn label(&self) -> &'static str {
        match self {
            SutKind::Secrow => "secrow",
            SutKind::BaselineTrackr => "baseline_trackr",
        }
    }

    pub fn from_label(label: &str) -> Option<SutKind> {
        match label {
            "secrow" => Some(SutKind::Secrow),
            "baseline_trackr" => Some(SutKind::BaselineTrackr),
            _ => None,
        }
    }
}

/// Test-only switches that each disable one deployed defense.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DefenseKnobs {
    /// C1: device rings for any requester, owner table ignored.
    pub td_skip_ring_owner_check: bool,
    /// C2: service answers location queries without the ownership check.
    pub ts_skip_query_owner_check: bool,
    /// C3: device accepts AddPOwner without the physical pairing action.
    pub td_ignore_pairing_mode: bool,
    /// C4: service commits owners without validating the device proof.
    pub ts_commit_without_td_proof: bool,
    /// C5: BLE delivery works regardless of proximity.
    pub ignore_proximity: bool,
    /// C6: service stores updates without verifying the proximity signature.
    pub ts_skip_proximity_proof: bool,
    /// C7: TEE exposes a raw signing oracle over arbitrary fixes.
    pub tee_unrestricted_sign: bool,
}

impl DefenseKnobs {
    /// The knob that disables the defense behind `condition`, when one exists.
    pub fn for_condition(condition: Condition) -> Option<DefenseKnobs> {
        let mut knobs = DefenseKnobs::default();
        match condition {
            Condition::C1 => knobs.td_skip_ring_owner_check = true,
            Condition::C2 => knobs.ts_skip_query_owner_check = true,
            Condition::C3 => knobs.td_ignore_pairing_mode = true,
            Condition::C4 => knobs.ts_commit_without_td_proof = true,
            Condition::C5 => knobs.ignore_proximity = true,
            Condition::C6 => knobs.ts_skip_proximity_proof = true,
            Condition::C7 => knobs.tee_unrestricted_sign = true,
            Condition::C8 => return None,
        }
        Some(knobs)
    }
}

/// Timing budgets and backend selection for one world.
#[derive(Debug, Clone)]
pub struct WorldConfig {
    pub backend: BackendKind,
    pub knobs: DefenseKnobs,
    /// Steps a pairing-mode activation stays live.
    pub pairing_mode_budget: u64,
    /// Steps a device-issued challenge stays pending.
    pub challenge_budget: u64,
    /// Steps a service-side pending entry stays live.
    pub pending_budget: u64,
    /// Steps a login session stays valid.
    pub session_budget: u64,
    /// Token-bucket budget for crypto-heavy device handlers.
    pub rate_capacity: u64,
    pub rate_window: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            backend: BackendKind::Real,
            knobs: DefenseKnobs::default(),
            pairing_mode_budget: 100,
            challenge_budget: 100,
            pending_budget: 1000,
            session_budget: 10_000,
            rate_capacity: 100,
            rate_window: 1000,
        }
    }
}

impl WorldConfig {
    pub fn with_backend(backend: BackendKind) -> Self {
        WorldConfig { backend, ..WorldConfig::default() }
    }

    pub fn with_knobs(knobs: DefenseKnobs) -> Self {
        WorldConfig { knobs, ..WorldConfig::default() }
    }
}

/// A runnable system: the world kind plus any knob overrides. The plain
/// constructors give the two reference systems; `custom` builds hybrids
/// (e.g. the baseline-equivalent with a single condition patched).
#[derive(Debug, Clone)]
pub struct SystemUnderTest {
    pub kind: SutKind,
    pub config: WorldConfig,
    pub label: String,
}

impl SystemUnderTest {
    pub fn secrow() -> Self {
        SystemUnderTest {
            kind: SutKind::Secrow,
            config: WorldConfig::default(),
            label: "secrow".to_string(),
        }
    }

    pub fn baseline_trackr() -> Self {
        SystemUnderTest {
            kind: SutKind::BaselineTrackr,
            config: WorldConfig::default(),
            label: "baseline_trackr".to_string(),
        }
    }

    pub fn custom(label: &str, kind: SutKind, config: WorldConfig) -> Self {
        SystemUnderTest { kind, config, label: label.to_string() }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        match SutKind::from_label(label)? {
            SutKind::Secrow => Some(SystemUnderTest::secrow()),
            SutKind::BaselineTrackr => Some(SystemUnderTest::baseline_trackr()),
        }
    }
}
