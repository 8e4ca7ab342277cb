//! Protocol message definitions and the canonical wire encoding.
//!
//! Every message is encoded as a 1-byte tag followed by its fields in
//! declared order, each field prefixed with a big-endian `u16` length.
//! The encoding is strict and canonical: decoding accepts exactly the
//! bytes that encoding produces, so recorded traffic can be replayed
//! bit-exactly and distinct messages never collide.

use crate::crypto::{Certificate, PublicKey, Signature};
use thiserror::Error;

pub const NONCE_LEN: usize = 16;
pub const SESSION_TOKEN_LEN: usize = 16;
pub const IDENTIFIER_LEN: usize = 6;

/// Which kind of entity an identifier names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum IdKind {
    Td,
    Cd,
}

/// Opaque unique ID for a tracking or communication device.
///
/// For tracking devices the six bytes are the simulated Bluetooth MAC
/// address; for communication devices they are an account-scoped value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Identifier {
    pub kind: IdKind,
    pub bytes: [u8; IDENTIFIER_LEN],
}

impl Identifier {
    pub fn td(bytes: [u8; IDENTIFIER_LEN]) -> Self {
        Identifier { kind: IdKind::Td, bytes }
    }

    pub fn cd(bytes: [u8; IDENTIFIER_LEN]) -> Self {
        Identifier { kind: IdKind::Cd, bytes }
    }

    /// MAC-style rendering, e.g. `00:1b:44:11:3a:b7`.
    pub fn mac_string(&self) -> String {
        self.bytes
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect::<Vec<_>>()
            .join(":")
    }

    fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(1 + IDENTIFIER_LEN);
        out.push(match self.kind {
            IdKind::Td => 0,
            IdKind::Cd => 1,
        });
        out.extend_from_slice(&self.bytes);
        out
    }

    fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        if bytes.len() != 1 + IDENTIFIER_LEN {
            return Err(WireError::TruncatedField);
        }
        let kind = match bytes[0] {
            0 => IdKind::Td,
            1 => IdKind::Cd,
            _ => return Err(WireError::TruncatedField),
        };
        let mut id = [0u8; IDENTIFIER_LEN];
        id.copy_from_slice(&bytes[1..]);
        Ok(Identifier { kind, bytes: id })
    }
}

/// 16-byte random value. The all-zero nonce is reserved as a sentinel
/// and is never produced by a generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Nonce(pub [u8; NONCE_LEN]);

impl Nonce {
    pub fn as_bytes(&self) -> &[u8; NONCE_LEN] {
        &self.0
    }
}

/// Opaque login session token issued by the tracking service.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SessionToken(pub [u8; SESSION_TOKEN_LEN]);

/// A GPS fix in fixed-point degrees (1e-7 degree resolution) plus a
/// timestamp in seconds since the simulation epoch.
///
/// Fixed-point storage keeps encodings byte-stable across hosts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LocationFix {
    lat_e7: i32,
    lon_e7: i32,
    pub timestamp: u64,
}

pub const LOCATION_FIX_LEN: usize = 16;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LocationError {
    #[error("latitude out of range")]
    LatitudeOutOfRange,
    #[error("longitude out of range")]
    LongitudeOutOfRange,
}

impl LocationFix {
    pub const LAT_LIMIT_E7: i32 = 900_000_000;
    pub const LON_LIMIT_E7: i32 = 1_800_000_000;

    pub fn new(lat_e7: i32, lon_e7: i32, timestamp: u64) -> Result<Self, LocationError> {
        if lat_e7.abs() > Self::LAT_LIMIT_E7 {
            return Err(LocationError::LatitudeOutOfRange);
        }
        if lon_e7.abs() > Self::LON_LIMIT_E7 {
            return Err(LocationError::LongitudeOutOfRange);
        }
        Ok(LocationFix { lat_e7, lon_e7, timestamp })
    }

    /// Convenience constructor from floating-point degrees; rounds to
    /// the fixed-point grid.
    pub fn from_degrees(lat: f64, lon: f64, timestamp: u64) -> Result<Self, LocationError> {
        let lat_e7 = (lat * 1e7).round();
        let lon_e7 = (lon * 1e7).round();
        if !lat_e7.is_finite() || lat_e7.abs() > Self::LAT_LIMIT_E7 as f64 {
            return Err(LocationError::LatitudeOutOfRange);
        }
        if !lon_e7.is_finite() || lon_e7.abs() > Self::LON_LIMIT_E7 as f64 {
            return Err(LocationError::LongitudeOutOfRange);
        }
        LocationFix::new(lat_e7 as i32, lon_e7 as i32, timestamp)
    }

    pub fn lat_e7(&self) -> i32 {
        self.lat_e7
    }

    pub fn lon_e7(&self) -> i32 {
        self.lon_e7
    }

    pub fn lat_degrees(&self) -> f64 {
        self.lat_e7 as f64 / 1e7
    }

    pub fn lon_degrees(&self) -> f64 {
        self.lon_e7 as f64 / 1e7
    }

    pub fn encode(&self) -> [u8; LOCATION_FIX_LEN] {
        let mut out = [0u8; LOCATION_FIX_LEN];
        out[0..4].copy_from_slice(&self.lat_e7.to_be_bytes());
        out[4..8].copy_from_slice(&self.lon_e7.to_be_bytes());
        out[8..16].copy_from_slice(&self.timestamp.to_be_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        if bytes.len() != LOCATION_FIX_LEN {
            return Err(WireError::TruncatedField);
        }
        let lat_e7 = i32::from_be_bytes(bytes[0..4].try_into().unwrap());
        let lon_e7 = i32::from_be_bytes(bytes[4..8].try_into().unwrap());
        let timestamp = u64::from_be_bytes(bytes[8..16].try_into().unwrap());
        LocationFix::new(lat_e7, lon_e7, timestamp).map_err(|_| WireError::TruncatedField)
    }
}

/// Protocol-level rejection codes carried by [`ProtocolMessage::Err`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u16)]
pub enum ErrorCode {
    NotInPairingMode = 1,
    OwnerExists = 2,
    NoPendingChallenge = 3,
    BadSignature = 4,
    MalformedTicket = 5,
    NoOwnersRegistered = 6,
    NoPrimaryOwner = 7,
    NonceMismatch = 8,
    NotAnOwner = 9,
    BadLocationSignature = 10,
    MalformedToken = 11,
    NoLocationKey = 12,
    RateLimited = 13,
    Unauthenticated = 14,
    UnknownTd = 15,
    NoPendingRequest = 16,
    KeyMismatch = 17,
    BadAttestation = 18,
    NoPendingUpdate = 19,
    BadProximityProof = 20,
    NoLocationOnRecord = 21,
    AccountExists = 22,
    BadCredentials = 23,
    ChannelUnavailable = 24,
    NotPrimary = 25,
    TicketExpired = 26,
    NotOwnerAtDevice = 27,
    LocationAuthFailure = 28,
    UnexpectedMessage = 29,
    Busy = 30,
}

impl ErrorCode {
    pub fn from_u16(v: u16) -> Option<ErrorCode> {
        use ErrorCode::*;
        Some(match v {
            1 => NotInPairingMode,
            2 => OwnerExists,
            3 => NoPendingChallenge,
            4 => BadSignature,
            5 => MalformedTicket,
            6 => NoOwnersRegistered,
            7 => NoPrimaryOwner,
            8 => NonceMismatch,
            9 => NotAnOwner,
            10 => BadLocationSignature,
            11 => MalformedToken,
            12 => NoLocationKey,
            13 => RateLimited,
            14 => Unauthenticated,
            15 => UnknownTd,
            16 => NoPendingRequest,
            17 => KeyMismatch,
            18 => BadAttestation,
            19 => NoPendingUpdate,
            20 => BadProximityProof,
            21 => NoLocationOnRecord,
            22 => AccountExists,
            23 => BadCredentials,
            24 => ChannelUnavailable,
            25 => NotPrimary,
            26 => TicketExpired,
            27 => NotOwnerAtDevice,
            28 => LocationAuthFailure,
            29 => UnexpectedMessage,
            30 => Busy,
            _ => return None,
        })
    }

    pub fn name(&self) -> &'static str {
        use ErrorCode::*;
        match self {
            NotInPairingMode => "NotInPairingMode",
            OwnerExists => "OwnerExists",
            NoPendingChallenge => "NoPendingChallenge",
            BadSignature => "BadSignature",
            MalformedTicket => "MalformedTicket",
            NoOwnersRegistered => "NoOwnersRegistered",
            NoPrimaryOwner => "NoPrimaryOwner",
            NonceMismatch => "NonceMismatch",
            NotAnOwner => "NotAnOwner",
            BadLocationSignature => "BadLocationSignature",
            MalformedToken => "MalformedToken",
            NoLocationKey => "NoLocationKey",
            RateLimited => "RateLimited",
            Unauthenticated => "Unauthenticated",
            UnknownTd => "UnknownTd",
            NoPendingRequest => "NoPendingRequest",
            KeyMismatch => "KeyMismatch",
            BadAttestation => "BadAttestation",
            NoPendingUpdate => "NoPendingUpdate",
            BadProximityProof => "BadProximityProof",
            NoLocationOnRecord => "NoLocationOnRecord",
            AccountExists => "AccountExists",
            BadCredentials => "BadCredentials",
            ChannelUnavailable => "ChannelUnavailable",
            NotPrimary => "NotPrimary",
            TicketExpired => "TicketExpired",
            NotOwnerAtDevice => "NotOwnerAtDevice",
            LocationAuthFailure => "LocationAuthFailure",
            UnexpectedMessage => "UnexpectedMessage",
            Busy => "Busy",
        }
    }

    pub fn from_name(name: &str) -> Option<ErrorCode> {
        (1..=30u16)
            .filter_map(ErrorCode::from_u16)
            .find(|c| c.name() == name)
    }
}

impl std::fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Commands only the primary owner of a tracking device may issue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum PrimaryCmd {
    UpdateLocKey = 1,
    AddSOwner = 2,
    RemSOwner = 3,
}

impl PrimaryCmd {
    fn from_u8(v: u8) -> Option<PrimaryCmd> {
        match v {
            1 => Some(PrimaryCmd::UpdateLocKey),
            2 => Some(PrimaryCmd::AddSOwner),
            3 => Some(PrimaryCmd::RemSOwner),
            _ => None,
        }
    }
}

/// Decode failures for the canonical wire format.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum WireError {
    #[error("unknown message tag")]
    UnknownTag,
    #[error("truncated or malformed field")]
    TruncatedField,
    #[error("trailing bytes after message")]
    TrailingBytes,
}

/// Every message that crosses a simulated channel, for both the secure
/// protocol and the TrackR-style baseline.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProtocolMessage {
    /// Claim primary ownership; carries the claimant public key.
    AddPOwner { pk: PublicKey },
    /// Challenge nonce from the device during pairing.
    PairingChallenge { n1: Nonce },
    /// Claimant signature over the pairing challenge.
    PairingProof { signature: Signature },
    /// Service-side ownership registration request.
    AddOwnerRequest { session: SessionToken, cd_id: Identifier, td_id: Identifier },
    /// Service response: encrypted (nonce, one-time key) ticket for the device.
    OwnershipTicket { ticket: Vec<u8> },
    /// Relay of the ticket to the device with the requester public key.
    CheckOwner { pk: PublicKey, ticket: Vec<u8> },
    /// Device response: owner proof encrypted under the one-time key.
    OwnershipProof { proof: Vec<u8> },
    /// Relay of the owner proof back to the service.
    CommitOwner { session: SessionToken, proof: Vec<u8> },
    /// Start a primary-owner command exchange.
    PrimaryCmdBegin { cmd: PrimaryCmd },
    /// Challenge nonce encrypted under the stored primary-owner key.
    PrimaryCmdChallenge { challenge: Vec<u8> },
    /// Command payload and echoed nonce encrypted under the device key.
    PrimaryCmdRequest { cmd: PrimaryCmd, request: Vec<u8> },
    /// Anonymous location-update request with attested temporary key.
    LocUpdateRequest { td_id: Identifier, tpk: PublicKey, chain: Vec<Certificate> },
    /// Service grant: nonces encrypted for the CD's TEE and the device.
    LocUpdateGrant { e_c: Vec<u8>, e_t: Vec<u8> },
    /// BLE leg of the update: encrypted device nonce plus the TEE-signed fix.
    SignTokenRequest {
        e_t: Vec<u8>,
        tpk: PublicKey,
        chain: Vec<Certificate>,
        loc: LocationFix,
        n_c: Nonce,
        claim_sig: Signature,
    },
    /// Device output: proximity signature and the encrypted location.
    SignTokenResponse { s_t: Signature, e_l: Vec<u8> },
    /// Final upload of the attested update to the service.
    AttestedLocationUpdate { tpk: PublicKey, s_t: Signature, e_l: Vec<u8> },
    /// Owner query for the last known location.
    LocQueryRequest { session: SessionToken, td_id: Identifier },
    /// Query response: encrypted location token.
    LocQueryResponse { token: Vec<u8> },
    Ack,
    Err { code: ErrorCode },
    /// Ask the device for a ring challenge.
    RingRequest { pk: PublicKey },
    /// Ring challenge nonce.
    RingChallenge { nonce: Nonce },
    /// Signature over the ring challenge.
    RingProof { pk: PublicKey, signature: Signature },
    /// Baseline: claim a tracker id under a login token.
    BaselineClaim { token: SessionToken, trackerid: String },
    /// Baseline: plaintext location update, no authentication.
    BaselineUpdate { trackerid: String, loc: LocationFix },
    /// Baseline: query all items of the logged-in user.
    BaselineQuery { token: SessionToken },
    /// Baseline: plaintext locations of the user's items.
    BaselineQueryResponse { items: Vec<(String, LocationFix)> },
    /// Baseline: unauthenticated ring over BLE.
    BaselineRing,
}

mod tag {
    pub const ADD_P_OWNER: u8 = 0x01;
    pub const PAIRING_CHALLENGE: u8 = 0x02;
    pub const PAIRING_PROOF: u8 = 0x03;
    pub const ADD_OWNER_REQUEST: u8 = 0x04;
    pub const OWNERSHIP_TICKET: u8 = 0x05;
    pub const CHECK_OWNER: u8 = 0x06;
    pub const OWNERSHIP_PROOF: u8 = 0x07;
    pub const COMMIT_OWNER: u8 = 0x08;
    pub const PRIMARY_CMD_BEGIN: u8 = 0x09;
    pub const PRIMARY_CMD_CHALLENGE: u8 = 0x0a;
    pub const PRIMARY_CMD_REQUEST: u8 = 0x0b;
    pub const LOC_UPDATE_REQUEST: u8 = 0x0c;
    pub const LOC_UPDATE_GRANT: u8 = 0x0d;
    pub const SIGN_TOKEN_REQUEST: u8 = 0x0e;
    pub const SIGN_TOKEN_RESPONSE: u8 = 0x0f;
    pub const ATTESTED_LOCATION_UPDATE: u8 = 0x10;
    pub const LOC_QUERY_REQUEST: u8 = 0x11;
    pub const LOC_QUERY_RESPONSE: u8 = 0x12;
    pub const ACK: u8 = 0x13;
    pub const ERR: u8 = 0x14;
    pub const RING_REQUEST: u8 = 0x15;
    pub const RING_CHALLENGE: u8 = 0x16;
    pub const RING_PROOF: u8 = 0x17;
    pub const BASELINE_CLAIM: u8 = 0x20;
    pub const BASELINE_UPDATE: u8 = 0x21;
    pub const BASELINE_QUERY: u8 = 0x22;
    pub const BASELINE_QUERY_RESPONSE: u8 = 0x23;
    pub const BASELINE_RING: u8 = 0x24;
}

impl ProtocolMessage {
    pub fn tag(&self) -> u8 {
        use ProtocolMessage::*;
        match self {
            AddPOwner { .. } => tag::ADD_P_OWNER,
            PairingChallenge { .. } => tag::PAIRING_CHALLENGE,
            PairingProof { .. } => tag::PAIRING_PROOF,
            AddOwnerRequest { .. } => tag::ADD_OWNER_REQUEST,
            OwnershipTicket { .. } => tag::OWNERSHIP_TICKET,
            CheckOwner { .. } => tag::CHECK_OWNER,
            OwnershipProof { .. } => tag::OWNERSHIP_PROOF,
            CommitOwner { .. } => tag::COMMIT_OWNER,
            PrimaryCmdBegin { .. } => tag::PRIMARY_CMD_BEGIN,
            PrimaryCmdChallenge { .. } => tag::PRIMARY_CMD_CHALLENGE,
            PrimaryCmdRequest { .. } => tag::PRIMARY_CMD_REQUEST,
            LocUpdateRequest { .. } => tag::LOC_UPDATE_REQUEST,
            LocUpdateGrant { .. } => tag::LOC_UPDATE_GRANT,
            SignTokenRequest { .. } => tag::SIGN_TOKEN_REQUEST,
            SignTokenResponse { .. } => tag::SIGN_TOKEN_RESPONSE,
            AttestedLocationUpdate { .. } => tag::ATTESTED_LOCATION_UPDATE,
            LocQueryRequest { .. } => tag::LOC_QUERY_REQUEST,
            LocQueryResponse { .. } => tag::LOC_QUERY_RESPONSE,
            Ack => tag::ACK,
            Err { .. } => tag::ERR,
            RingRequest { .. } => tag::RING_REQUEST,
            RingChallenge { .. } => tag::RING_CHALLENGE,
            RingProof { .. } => tag::RING_PROOF,
            BaselineClaim { .. } => tag::BASELINE_CLAIM,
            BaselineUpdate { .. } => tag::BASELINE_UPDATE,
            BaselineQuery { .. } => tag::BASELINE_QUERY,
            BaselineQueryResponse { .. } => tag::BASELINE_QUERY_RESPONSE,
            BaselineRing => tag::BASELINE_RING,
        }
    }

    pub fn tag_name(&self) -> &'static str {
        use ProtocolMessage::*;
        match self {
            AddPOwner { .. } => "AddPOwner",
            PairingChallenge { .. } => "PairingChallenge",
            PairingProof { .. } => "PairingProof",
            AddOwnerRequest { .. } => "AddOwnerRequest",
            OwnershipTicket { .. } => "OwnershipTicket",
            CheckOwner { .. } => "CheckOwner",
            OwnershipProof { .. } => "OwnershipProof",
            CommitOwner { .. } => "CommitOwner",
            PrimaryCmdBegin { .. } => "PrimaryCmdBegin",
            PrimaryCmdChallenge { .. } => "PrimaryCmdChallenge",
            PrimaryCmdRequest { .. } => "PrimaryCmdRequest",
            LocUpdateRequest { .. } => "LocUpdateRequest",
            LocUpdateGrant { .. } => "LocUpdateGrant",
            SignTokenRequest { .. } => "SignTokenRequest",
            SignTokenResponse { .. } => "SignTokenResponse",
            AttestedLocationUpdate { .. } => "AttestedLocationUpdate",
            LocQueryRequest { .. } => "LocQueryRequest",
            LocQueryResponse { .. } => "LocQueryResponse",
            Ack => "Ack",
            Err { .. } => "Err",
            RingRequest { .. } => "RingRequest",
            RingChallenge { .. } => "RingChallenge",
            RingProof { .. } => "RingProof",
            BaselineClaim { .. } => "BaselineClaim",
            BaselineUpdate { .. } => "BaselineUpdate",
            BaselineQuery { .. } => "BaselineQuery",
            BaselineQueryResponse { .. } => "BaselineQueryResponse",
            BaselineRing => "BaselineRing",
        }
    }
}

struct Writer {
    out: Vec<u8>,
}

impl Writer {
    fn new(tag: u8) -> Self {
        Writer { out: vec![tag] }
    }

    fn field(&mut self, bytes: &[u8]) -> &mut Self {
        debug_assert!(bytes.len() <= u16::MAX as usize);
        self.out.extend_from_slice(&(bytes.len() as u16).to_be_bytes());
        self.out.extend_from_slice(bytes);
        self
    }

    fn finish(self) -> Vec<u8> {
        self.out
    }
}

struct Reader<'a> {
    rest: &'a [u8],
}

impl<'a> Reader<'a> {
    fn field(&mut self) -> Result<&'a [u8], WireError> {
        if self.rest.len() < 2 {
            return Err(WireError::TruncatedField);
        }
        let len = u16::from_be_bytes([self.rest[0], self.rest[1]]) as usize;
        if self.rest.len() < 2 + len {
            return Err(WireError::TruncatedField);
        }
        let (body, rest) = self.rest[2..].split_at(len);
        self.rest = rest;
        Ok(body)
    }

    fn fixed<const N: usize>(&mut self) -> Result<[u8; N], WireError> {
        let body = self.field()?;
        if body.len() != N {
            return Err(WireError::TruncatedField);
        }
        let mut out = [0u8; N];
        out.copy_from_slice(body);
        Ok(out)
    }

    fn done(&self) -> Result<(), WireError> {
        if self.rest.is_empty() {
            Ok(())
        } else {
            Err(WireError::TrailingBytes)
        }
    }
}

fn encode_chain(chain: &[Certificate]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&(chain.len() as u16).to_be_bytes());
    for cert in chain {
        let enc = cert.encode();
        out.extend_from_slice(&(enc.len() as u16).to_be_bytes());
        out.extend_from_slice(&enc);
    }
    out
}

fn decode_chain(bytes: &[u8]) -> Result<Vec<Certificate>, WireError> {
    if bytes.len() < 2 {
        return Err(WireError::TruncatedField);
    }
    let count = u16::from_be_bytes([bytes[0], bytes[1]]) as usize;
    let mut rest = &bytes[2..];
    let mut chain = Vec::with_capacity(count);
    for _ in 0..count {
        if rest.len() < 2 {
            return Err(WireError::TruncatedField);
        }
        let len = u16::from_be_bytes([rest[0], rest[1]]) as usize;
        if rest.len() < 2 + len {
            return Err(WireError::TruncatedField);
        }
        chain.push(Certificate::decode(&rest[2..2 + len]).ok_or(WireError::TruncatedField)?);
        rest = &rest[2 + len..];
    }
    if !rest.is_empty() {
        return Err(WireError::TruncatedField);
    }
    Ok(chain)
}

fn encode_items(items: &[(String, LocationFix)]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&(items.len() as u16).to_be_bytes());
    for (id, loc) in items {
        out.extend_from_slice(&(id.len() as u16).to_be_bytes());
        out.extend_from_slice(id.as_bytes());
        out.extend_from_slice(&loc.encode());
    }
    out
}

fn decode_items(bytes: &[u8]) -> Result<Vec<(String, LocationFix)>, WireError> {
    if bytes.len() < 2 {
        return Err(WireError::TruncatedField);
    }
    let count = u16::from_be_bytes([bytes[0], bytes[1]]) as usize;
    let mut rest = &bytes[2..];
    let mut items = Vec::with_capacity(count);
    for _ in 0..count {
        if rest.len() < 2 {
            return Err(WireError::TruncatedField);
        }
        let len = u16::from_be_bytes([rest[0], rest[1]]) as usize;
        if rest.len() < 2 + len + LOCATION_FIX_LEN {
            return Err(WireError::TruncatedField);
        }
        let id = std::str::from_utf8(&rest[2..2 + len])
            .map_err(|_| WireError::TruncatedField)?
            .to_string();
        let loc = LocationFix::decode(&rest[2 + len..2 + len + LOCATION_FIX_LEN])?;
        items.push((id, loc));
        rest = &rest[2 + len + LOCATION_FIX_LEN..];
    }
    if !rest.is_empty() {
        return Err(WireError::TruncatedField);
    }
    Ok(items)
}

/// Deterministic canonical encoding of a protocol message.
pub fn encode_message(msg: &ProtocolMessage) -> Vec<u8> {
    use ProtocolMessage::*;
    let mut w = Writer::new(msg.tag());
    match msg {
        AddPOwner { pk } => {
            w.field(&pk.encode());
        }
        PairingChallenge { n1 } => {
            w.field(n1.as_bytes());
        }
        PairingProof { signature } => {
            w.field(signature.as_bytes());
        }
        AddOwnerRequest { session, cd_id, td_id } => {
            w.field(&session.0).field(&cd_id.encode()).field(&td_id.encode());
        }
        OwnershipTicket { ticket } => {
            w.field(ticket);
        }
        CheckOwner { pk, ticket } => {
            w.field(&pk.encode()).field(ticket);
        }
        OwnershipProof { proof } => {
            w.field(proof);
        }
        CommitOwner { session, proof } => {
            w.field(&session.0).field(proof);
        }
        PrimaryCmdBegin { cmd } => {
            w.field(&[*cmd as u8]);
        }
        PrimaryCmdChallenge { challenge } => {
            w.field(challenge);
        }
        PrimaryCmdRequest { cmd, request } => {
            w.field(&[*cmd as u8]).field(request);
        }
        LocUpdateRequest { td_id, tpk, chain } => {
            w.field(&td_id.encode()).field(&tpk.encode()).field(&encode_chain(chain));
        }
        LocUpdateGrant { e_c, e_t } => {
            w.field(e_c).field(e_t);
        }
        SignTokenRequest { e_t, tpk, chain, loc, n_c, claim_sig } => {
            w.field(e_t)
                .field(&tpk.encode())
                .field(&encode_chain(chain))
                .field(&loc.encode())
                .field(n_c.as_bytes())
                .field(claim_sig.as_bytes());
        }
        SignTokenResponse { s_t, e_l } => {
            w.field(s_t.as_bytes()).field(e_l);
        }
        AttestedLocationUpdate { tpk, s_t, e_l } => {
            w.field(&tpk.encode()).field(s_t.as_bytes()).field(e_l);
        }
        LocQueryRequest { session, td_id } => {
            w.field(&session.0).field(&td_id.encode());
        }
        LocQueryResponse { token } => {
            w.field(token);
        }
        Ack => {}
        Err { code } => {
            w.field(&(*code as u16).to_be_bytes());
        }
        RingRequest { pk } => {
            w.field(&pk.encode());
        }
        RingChallenge { nonce } => {
            w.field(nonce.as_bytes());
        }
        RingProof { pk, signature } => {
            w.field(&pk.encode()).field(signature.as_bytes());
        }
        BaselineClaim { token, trackerid } => {
            w.field(&token.0).field(trackerid.as_bytes());
        }
        BaselineUpdate { trackerid, loc } => {
            w.field(trackerid.as_bytes()).field(&loc.encode());
        }
        BaselineQuery { token } => {
            w.field(&token.0);
        }
        BaselineQueryResponse { items } => {
            w.field(&encode_items(items));
        }
        BaselineRing => {}
    }
    w.finish()
}

/// Strict decode of the canonical encoding; trailing bytes are an error.
pub fn decode_message(bytes: &[u8]) -> Result<ProtocolMessage, WireError> {
    use ProtocolMessage::*;
    let (&t, body) = bytes.split_first().ok_or(WireError::TruncatedField)?;
    let mut r = Reader { rest: body };
    let msg = match t {
        tag::ADD_P_OWNER => AddPOwner { pk: decode_pk(&mut r)? },
        tag::PAIRING_CHALLENGE => PairingChallenge { n1: Nonce(r.fixed()?) },
        tag::PAIRING_PROOF => PairingProof { signature: Signature::new(r.field()?.to_vec()) },
        tag::ADD_OWNER_REQUEST => AddOwnerRequest {
            session: SessionToken(r.fixed()?),
            cd_id: Identifier::decode(r.field()?)?,
            td_id: Identifier::decode(r.field()?)?,
        },
        tag::OWNERSHIP_TICKET => OwnershipTicket { ticket: r.field()?.to_vec() },
        tag::CHECK_OWNER => CheckOwner { pk: decode_pk(&mut r)?, ticket: r.field()?.to_vec() },
        tag::OWNERSHIP_PROOF => OwnershipProof { proof: r.field()?.to_vec() },
        tag::COMMIT_OWNER => CommitOwner {
            session: SessionToken(r.fixed()?),
            proof: r.field()?.to_vec(),
        },
        tag::PRIMARY_CMD_BEGIN => PrimaryCmdBegin { cmd: decode_cmd(&mut r)? },
        tag::PRIMARY_CMD_CHALLENGE => PrimaryCmdChallenge { challenge: r.field()?.to_vec() },
        tag::PRIMARY_CMD_REQUEST => PrimaryCmdRequest {
            cmd: decode_cmd(&mut r)?,
            request: r.field()?.to_vec(),
        },
        tag::LOC_UPDATE_REQUEST => LocUpdateRequest {
            td_id: Identifier::decode(r.field()?)?,
            tpk: decode_pk(&mut r)?,
            chain: decode_chain(r.field()?)?,
        },
        tag::LOC_UPDATE_GRANT => LocUpdateGrant {
            e_c: r.field()?.to_vec(),
            e_t: r.field()?.to_vec(),
        },
        tag::SIGN_TOKEN_REQUEST => SignTokenRequest {
            e_t: r.field()?.to_vec(),
            tpk: decode_pk(&mut r)?,
            chain: decode_chain(r.field()?)?,
            loc: LocationFix::decode(r.field()?)?,
            n_c: Nonce(r.fixed()?),
            claim_sig: Signature::new(r.field()?.to_vec()),
        },
        tag::SIGN_TOKEN_RESPONSE => SignTokenResponse {
            s_t: Signature::new(r.field()?.to_vec()),
            e_l: r.field()?.to_vec(),
        },
        tag::ATTESTED_LOCATION_UPDATE => AttestedLocationUpdate {
            tpk: decode_pk(&mut r)?,
            s_t: Signature::new(r.field()?.to_vec()),
            e_l: r.field()?.to_vec(),
        },
        tag::LOC_QUERY_REQUEST => LocQueryRequest {
            session: SessionToken(r.fixed()?),
            td_id: Identifier::decode(r.field()?)?,
        },
        tag::LOC_QUERY_RESPONSE => LocQueryResponse { token: r.field()?.to_vec() },
        tag::ACK => Ack,
        tag::ERR => {
            let raw: [u8; 2] = r.fixed()?;
            let code = ErrorCode::from_u16(u16::from_be_bytes(raw))
                .ok_or(WireError::TruncatedField)?;
            Err { code }
        }
        tag::RING_REQUEST => RingRequest { pk: decode_pk(&mut r)? },
        tag::RING_CHALLENGE => RingChallenge { nonce: Nonce(r.fixed()?) },
        tag::RING_PROOF => RingProof {
            pk: decode_pk(&mut r)?,
            signature: Signature::new(r.field()?.to_vec()),
        },
        tag::BASELINE_CLAIM => BaselineClaim {
            token: SessionToken(r.fixed()?),
            trackerid: decode_str(&mut r)?,
        },
        tag::BASELINE_UPDATE => BaselineUpdate {
            trackerid: decode_str(&mut r)?,
            loc: LocationFix::decode(r.field()?)?,
        },
        tag::BASELINE_QUERY => BaselineQuery { token: SessionToken(r.fixed()?) },
        tag::BASELINE_QUERY_RESPONSE => BaselineQueryResponse { items: decode_items(r.field()?)? },
        tag::BASELINE_RING => BaselineRing,
        _ => return Result::Err(WireError::UnknownTag),
    };
    r.done()?;
    Ok(msg)
}

fn decode_pk(r: &mut Reader<'_>) -> Result<PublicKey, WireError> {
    PublicKey::decode(r.field()?).ok_or(WireError::TruncatedField)
}

fn decode_cmd(r: &mut Reader<'_>) -> Result<PrimaryCmd, WireError> {
    let body = r.field()?;
    if body.len() != 1 {
        return Err(WireError::TruncatedField);
    }
    PrimaryCmd::from_u8(body[0]).ok_or(WireError::TruncatedField)
}

fn decode_str(r: &mut Reader<'_>) -> Result<String, WireError> {
    std::str::from_utf8(r.field()?)
        .map(str::to_string)
        .map_err(|_| WireError::TruncatedField)
}

/// Tracker id used by the TrackR-style baseline: four zeros followed by
/// the byte-reversed MAC in lowercase hex, split 8-'-'-8.
pub fn derive_trackerid(mac: &[u8; 6]) -> String {
    let mut rev = *mac;
    rev.reverse();
    let hex: String = rev.iter().map(|b| format!("{b:02x}")).collect();
    format!("0000{}-{}", &hex[..4], &hex[4..])
}

/// Inverse of [`derive_trackerid`]; accepts exactly its output format.
pub fn trackerid_to_mac(id: &str) -> Option<[u8; 6]> {
    let (a, b) = id.split_once('-')?;
    if a.len() != 8 || b.len() != 8 || !a.starts_with("0000") {
        return None;
    }
    let hex: String = format!("{}{}", &a[4..], b);
    if hex.chars().any(|c| !c.is_ascii_hexdigit() || c.is_ascii_uppercase()) {
        return None;
    }
    let mut rev = [0u8; 6];
    for (i, chunk) in hex.as_bytes().chunks(2).enumerate() {
        rev[i] = u8::from_str_radix(std::str::from_utf8(chunk).ok()?, 16).ok()?;
    }
    rev.reverse();
    Some(rev)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ack_is_tag_only() {
        assert_eq!(encode_message(&ProtocolMessage::Ack), vec![tag::ACK]);
    }

    #[test]
    fn pairing_challenge_is_19_bytes() {
        // 1 tag + 2 length prefix + 16 nonce
        let msg = ProtocolMessage::PairingChallenge { n1: Nonce([7u8; 16]) };
        assert_eq!(encode_message(&msg).len(), 1 + 2 + 16);
    }

    #[test]
    fn empty_input_is_truncated() {
        assert_eq!(decode_message(&[]), Err(WireError::TruncatedField));
    }

    #[test]
    fn trailing_bytes_rejected() {
        let mut bytes = encode_message(&ProtocolMessage::Ack);
        bytes.push(0);
        assert_eq!(decode_message(&bytes), Err(WireError::TrailingBytes));
    }

    #[test]
    fn unknown_tag_rejected() {
        assert_eq!(decode_message(&[0xff]), Err(WireError::UnknownTag));
    }

    #[test]
    fn trackerid_paper_vector() {
        let mac = [0x00, 0x1b, 0x44, 0x11, 0x3a, 0xb7];
        assert_eq!(derive_trackerid(&mac), "0000b73a-11441b00");
    }

    #[test]
    fn trackerid_zero_mac() {
        assert_eq!(derive_trackerid(&[0u8; 6]), "00000000-00000000");
    }

    #[test]
    fn trackerid_reversal_rule() {
        // Independent check: reverse by hand, render, compare.
        let mac = [0xff, 0xee, 0xdd, 0xcc, 0xbb, 0xaa];
        let by_hand = {
            let rev = [0xaau8, 0xbb, 0xcc, 0xdd, 0xee, 0xff];
            let hex: String = rev.iter().map(|b| format!("{b:02x}")).collect();
            format!("0000{}-{}", &hex[..4], &hex[4..])
        };
        assert_eq!(by_hand, "0000aabb-ccddeeff");
        assert_eq!(derive_trackerid(&mac), by_hand);
    }

    #[test]
    fn trackerid_inverts() {
        let mac = [0x12, 0x34, 0x56, 0x78, 0x9a, 0xbc];
        assert_eq!(trackerid_to_mac(&derive_trackerid(&mac)), Some(mac));
        assert_eq!(trackerid_to_mac("0000b73a11441b00"), None);
        assert_eq!(trackerid_to_mac("1000b73a-11441b00"), None);
    }

    #[test]
    fn location_fix_bounds() {
        assert!(LocationFix::new(900_000_001, 0, 0).is_err());
        assert!(LocationFix::new(0, -1_800_000_001, 0).is_err());
        let fix = LocationFix::from_degrees(37.1234567, -119.7654321, 42).unwrap();
        assert_eq!(fix.lat_e7(), 371_234_567);
        assert_eq!(fix.lon_e7(), -1_197_654_321);
    }

    #[test]
    fn error_code_names_round_trip() {
        for v in 1..=30u16 {
            let code = ErrorCode::from_u16(v).unwrap();
            assert_eq!(ErrorCode::from_name(code.name()), Some(code));
        }
        assert_eq!(ErrorCode::from_u16(0), None);
        assert_eq!(ErrorCode::from_u16(31), None);
    }
}
