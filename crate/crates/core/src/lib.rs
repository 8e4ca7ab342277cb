//! SECrow: a crowdsourced BLE location-tracking protocol with three
//! roles (tracking device, communication device, tracking service), a
//! deterministic simulated network, and an executable security harness.
//!
//! The harness checks eight necessary security conditions against both
//! the secure protocol and a deliberately insecure TrackR-style baseline,
//! assembles the four role-level security verdicts from them, and can
//! replay every violation witness byte-for-byte.
//!
//! Highlights of the secure design:
//!
//! - primary ownership requires a physical pairing action at the device,
//!   and service-side registration requires a device round trip;
//! - location updates are anonymous (fresh attested temporary keys) and
//!   only possible in BLE proximity (the device countersigns nonces);
//! - locations are stored end-to-end encrypted under a key the service
//!   never sees, so even a full data breach reveals no fix.
//!
//! Entry points: [`simnet::World`] hosts a run, [`harness`] evaluates
//! conditions and properties, [`scenario`] executes script files, and
//! [`bench`] produces the timing/operation-count tables.

pub mod baseline;
pub mod bench;
pub mod cd;
pub mod crypto;
pub mod ctx;
pub mod harness;
pub mod ratelimit;
pub mod scenario;
pub mod simnet;
pub mod sut;
pub mod td;
pub mod transcript;
pub mod ts;
pub mod wire;

pub use crypto::{AsymKeyPair, CryptoSuite, PublicKey, SymmetricKey};
pub use simnet::World;
pub use sut::{DefenseKnobs, SutKind, SystemUnderTest};
pub use wire::{ErrorCode, Identifier, LocationFix, Nonce, ProtocolMessage};
