//! The communication device: drives every multi-step flow against the
//! device and the service, and hosts the emulated TEE that guards the
//! true GPS fix and the attested temporary keys.
//!
//! Flows are small state machines advanced one delivered message at a
//! time by the network scheduler, so runs from several devices interleave
//! deterministically. A device runs at most one flow at a time.

use std::collections::BTreeMap;

use crate::crypto::{AsymKeyPair, Certificate, PublicKey, Signature, SymmetricKey};
use crate::ctx::NetCtx;
use crate::transcript::Endpoint;
use crate::wire::{
    ErrorCode, Identifier, LocationFix, Nonce, PrimaryCmd, ProtocolMessage, SessionToken, NONCE_LEN,
};

/// The hardware trust boundary inside a CD. Untrusted device code holds
/// a reference to this handle and can only call its exported methods:
/// it can request signatures over the true fix but can never choose the
/// fix that gets signed, and it can never read the temporary private key.
#[derive(Debug)]
pub struct TeeHandle {
    root: AsymKeyPair,
    root_label: String,
    device_label: String,
    temp: crate::crypto::AttestedKeyPair,
    true_location: LocationFix,
    unrestricted_sign: bool,
}

impl TeeHandle {
    pub(crate) fn new(
        root: AsymKeyPair,
        root_label: &str,
        device_label: &str,
        unrestricted_sign: bool,
        ctx: &mut NetCtx,
    ) -> Self {
        let temp = ctx.issue_attested_keypair(&root, root_label, device_label);
        TeeHandle {
            root,
            root_label: root_label.to_string(),
            device_label: device_label.to_string(),
            temp,
            true_location: LocationFix::new(0, 0, 0).expect("origin fix"),
            unrestricted_sign,
        }
    }

    /// Exported: current attested temporary public key and its chain.
    pub fn attested_public(&self) -> (PublicKey, Vec<Certificate>) {
        (self.temp.pair.public, self.temp.chain.clone())
    }

    /// Exported: discard the temporary key pair and attest a fresh one.
    pub fn rotate(&mut self, ctx: &mut NetCtx) {
        self.temp = ctx.issue_attested_keypair(&self.root, &self.root_label, &self.device_label);
    }

    /// Exported: recover the challenge nonce encrypted to the temporary key.
    pub fn decrypt_grant_nonce(&self, e_c: &[u8], ctx: &mut NetCtx) -> Result<Nonce, ErrorCode> {
        let plain = ctx
            .asym_decrypt(&self.temp.pair.private, e_c)
            .map_err(|_| ErrorCode::MalformedToken)?;
        let bytes: [u8; NONCE_LEN] = plain.try_into().map_err(|_| ErrorCode::MalformedToken)?;
        Ok(Nonce(bytes))
    }

    /// Exported: sign `true_location || n_c` with the temporary key. The
    /// caller receives the fix that was signed; it has no way to swap in
    /// another one.
    pub fn sign_location(&self, n_c: Nonce, ctx: &mut NetCtx) -> (LocationFix, Signature) {
        let mut body = Vec::with_capacity(16 + NONCE_LEN);
        body.extend_from_slice(&self.true_location.encode());
        body.extend_from_slice(n_c.as_bytes());
        (self.true_location, ctx.sign(&self.temp.pair.private, &body))
    }

    /// Knob-gated raw signing oracle; present only in mutation worlds
    /// that deliberately break the TEE guarantee.
    pub fn sign_location_unchecked(
        &self,
        loc: LocationFix,
        n_c: Nonce,
        ctx: &mut NetCtx,
    ) -> Option<Signature> {
        if !self.unrestricted_sign {
            return None;
        }
        let mut body = Vec::with_capacity(16 + NONCE_LEN);
        body.extend_from_slice(&loc.encode());
        body.extend_from_slice(n_c.as_bytes());
        Some(ctx.sign(&self.temp.pair.private, &body))
    }

    /// GPS channel only; reached through the world, never through flows.
    pub(crate) fn set_true_location(&mut self, loc: LocationFix) {
        self.true_location = loc;
    }

    pub fn true_location(&self) -> LocationFix {
        self.true_location
    }
}

/// What a finished flow produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FlowResult {
    Ok,
    Location(LocationFix),
    Failed(ErrorCode),
    /// The flow never completed (e.g. its messages were dropped).
    Stalled,
}

impl FlowResult {
    pub fn is_ok(&self) -> bool {
        matches!(self, FlowResult::Ok | FlowResult::Location(_))
    }

    pub fn error(&self) -> Option<ErrorCode> {
        match self {
            FlowResult::Failed(code) => Some(*code),
            _ => None,
        }
    }
}

/// A flow the driver can start on a CD.
#[derive(Debug, Clone)]
pub enum FlowSpec {
    PairClaim { td: Identifier },
    RegisterOwnership { td: Identifier },
    PrimaryCommand { td: Identifier, cmd: PrimaryCmd, owner_key: Option<PublicKey> },
    UpdateLocation { td: Identifier },
    QueryLocation { td: Identifier },
    Ring { td: Identifier },
}

#[derive(Debug)]
enum CmdPayload {
    NewLocationKey(SymmetricKey),
    OwnerKey(PublicKey),
}

#[derive(Debug)]
enum ActiveFlow {
    PairClaim { td: Identifier, await_ack: bool },
    Register { td: Identifier, stage: RegisterStage },
    Primary { td: Identifier, cmd: PrimaryCmd, payload: CmdPayload, await_ack: bool },
    Update { td: Identifier, stage: UpdateStage },
    Query { td: Identifier },
    Ring { td: Identifier, await_ack: bool },
}

#[derive(Debug, PartialEq)]
enum RegisterStage {
    Ticket,
    Proof,
    Commit,
}

#[derive(Debug, PartialEq)]
enum UpdateStage {
    Grant,
    SignToken,
    Upload,
}

pub type Outgoing = (Endpoint, ProtocolMessage);

#[derive(Debug)]
pub struct CommunicationDevice {
    id: Identifier,
    keys: AsymKeyPair,
    session: Option<SessionToken>,
    tee: TeeHandle,
    key_ring: BTreeMap<Identifier, SymmetricKey>,
    active: Option<ActiveFlow>,
    outcome: Option<FlowResult>,
    stray: Vec<ProtocolMessage>,
}

impl CommunicationDevice {
    pub fn new(id: Identifier, keys: AsymKeyPair, tee: TeeHandle) -> Self {
        CommunicationDevice {
            id,
            keys,
            session: None,
            tee,
            key_ring: BTreeMap::new(),
            active: None,
            outcome: None,
            stray: Vec::new(),
        }
    }

    pub fn id(&self) -> Identifier {
        self.id
    }

    pub fn public_key(&self) -> PublicKey {
        self.keys.public
    }

    pub(crate) fn keys(&self) -> &AsymKeyPair {
        &self.keys
    }

    pub fn session(&self) -> Option<SessionToken> {
        self.session
    }

    pub(crate) fn set_session(&mut self, token: Option<SessionToken>) {
        self.session = token;
    }

    pub fn tee(&self) -> &TeeHandle {
        &self.tee
    }

    pub(crate) fn tee_mut(&mut self) -> &mut TeeHandle {
        &mut self.tee
    }

    pub fn key_ring(&self) -> &BTreeMap<Identifier, SymmetricKey> {
        &self.key_ring
    }

    pub(crate) fn insert_location_key(&mut self, td: Identifier, key: SymmetricKey) {
        self.key_ring.insert(td, key);
    }

    pub fn is_busy(&self) -> bool {
        self.active.is_some()
    }

    pub fn take_outcome(&mut self) -> Option<FlowResult> {
        self.outcome.take()
    }

    pub fn stray_messages(&self) -> &[ProtocolMessage] {
        &self.stray
    }

    /// Mark the in-flight flow failed (used by the world when a send
    /// cannot happen, e.g. BLE out of range).
    pub(crate) fn fail_active(&mut self, code: ErrorCode) {
        if self.active.take().is_some() {
            self.outcome = Some(FlowResult::Failed(code));
        }
    }

    /// Resolve a flow that never completed.
    pub(crate) fn resolve_stalled(&mut self) {
        if self.active.take().is_some() {
            self.outcome = Some(FlowResult::Stalled);
        }
    }

    pub(crate) fn start_flow(&mut self, spec: FlowSpec, ctx: &mut NetCtx) -> Result<Vec<Outgoing>, ErrorCode> {
        if self.active.is_some() {
            return Err(ErrorCode::Busy);
        }
        self.outcome = None;
        match spec {
            FlowSpec::PairClaim { td } => {
                self.active = Some(ActiveFlow::PairClaim { td, await_ack: false });
                Ok(vec![(Endpoint::Td(td), ProtocolMessage::AddPOwner { pk: self.keys.public })])
            }
            FlowSpec::RegisterOwnership { td } => {
                let session = self.session.ok_or(ErrorCode::Unauthenticated)?;
                self.active = Some(ActiveFlow::Register { td, stage: RegisterStage::Ticket });
                Ok(vec![(
                    Endpoint::Ts,
                    ProtocolMessage::AddOwnerRequest { session, cd_id: self.id, td_id: td },
                )])
            }
            FlowSpec::PrimaryCommand { td, cmd, owner_key } => {
                let payload = match cmd {
                    PrimaryCmd::UpdateLocKey => CmdPayload::NewLocationKey(ctx.gen_symmetric_key()),
                    PrimaryCmd::AddSOwner | PrimaryCmd::RemSOwner => {
                        CmdPayload::OwnerKey(owner_key.ok_or(ErrorCode::UnexpectedMessage)?)
                    }
                };
                self.active = Some(ActiveFlow::Primary { td, cmd, payload, await_ack: false });
                Ok(vec![(Endpoint::Td(td), ProtocolMessage::PrimaryCmdBegin { cmd })])
            }
            FlowSpec::UpdateLocation { td } => {
                // Fresh attested key per update session keeps reports unlinkable;
                // no session token is attached anywhere in this flow.
                self.tee.rotate(ctx);
                let (tpk, chain) = self.tee.attested_public();
                self.active = Some(ActiveFlow::Update { td, stage: UpdateStage::Grant });
                Ok(vec![(Endpoint::Ts, ProtocolMessage::LocUpdateRequest { td_id: td, tpk, chain })])
            }
            FlowSpec::QueryLocation { td } => {
                let session = self.session.ok_or(ErrorCode::Unauthenticated)?;
                self.active = Some(ActiveFlow::Query { td });
                Ok(vec![(Endpoint::Ts, ProtocolMessage::LocQueryRequest { session, td_id: td })])
            }
            FlowSpec::Ring { td } => {
                self.active = Some(ActiveFlow::Ring { td, await_ack: false });
                Ok(vec![(Endpoint::Td(td), ProtocolMessage::RingRequest { pk: self.keys.public })])
            }
        }
    }

    pub(crate) fn on_message(&mut self, msg: &ProtocolMessage, ctx: &mut NetCtx) -> Vec<Outgoing> {
        let Some(flow) = self.active.take() else {
            self.stray.push(msg.clone());
            return Vec::new();
        };
        if let ProtocolMessage::Err { code } = msg {
            self.outcome = Some(FlowResult::Failed(map_flow_error(&flow, *code)));
            return Vec::new();
        }
        match (flow, msg) {
            (ActiveFlow::PairClaim { td, await_ack: false }, ProtocolMessage::PairingChallenge { n1 }) => {
                let signature = ctx.sign(&self.keys.private, n1.as_bytes());
                self.active = Some(ActiveFlow::PairClaim { td, await_ack: true });
                vec![(Endpoint::Td(td), ProtocolMessage::PairingProof { signature })]
            }
            (ActiveFlow::PairClaim { await_ack: true, .. }, ProtocolMessage::Ack) => {
                self.outcome = Some(FlowResult::Ok);
                Vec::new()
            }
            (ActiveFlow::Register { td, stage: RegisterStage::Ticket }, ProtocolMessage::OwnershipTicket { ticket }) => {
                self.active = Some(ActiveFlow::Register { td, stage: RegisterStage::Proof });
                vec![(
                    Endpoint::Td(td),
                    ProtocolMessage::CheckOwner { pk: self.keys.public, ticket: ticket.clone() },
                )]
            }
            (ActiveFlow::Register { td, stage: RegisterStage::Proof }, ProtocolMessage::OwnershipProof { proof }) => {
                match self.session {
                    Some(session) => {
                        self.active = Some(ActiveFlow::Register { td, stage: RegisterStage::Commit });
                        vec![(Endpoint::Ts, ProtocolMessage::CommitOwner { session, proof: proof.clone() })]
                    }
                    None => {
                        self.outcome = Some(FlowResult::Failed(ErrorCode::Unauthenticated));
                        Vec::new()
                    }
                }
            }
            (ActiveFlow::Register { stage: RegisterStage::Commit, .. }, ProtocolMessage::Ack) => {
                self.outcome = Some(FlowResult::Ok);
                Vec::new()
            }
            (ActiveFlow::Primary { td, cmd, payload, await_ack: false }, ProtocolMessage::PrimaryCmdChallenge { challenge }) => {
                // Only the primary owner's private key recovers the nonce.
                let Ok(nonce) = ctx.asym_decrypt(&self.keys.private, challenge) else {
                    self.outcome = Some(FlowResult::Failed(ErrorCode::NotPrimary));
                    return Vec::new();
                };
                if nonce.len() != NONCE_LEN {
                    self.outcome = Some(FlowResult::Failed(ErrorCode::NotPrimary));
                    return Vec::new();
                }
                let Some(td_pk) = ctx.directory.td_keys.get(&td).copied() else {
                    self.outcome = Some(FlowResult::Failed(ErrorCode::UnknownTd));
                    return Vec::new();
                };
                let mut body = nonce;
                match &payload {
                    CmdPayload::NewLocationKey(key) => body.extend_from_slice(&key.0),
                    CmdPayload::OwnerKey(pk) => body.extend_from_slice(&pk.encode()),
                }
                let request = ctx.asym_encrypt(&td_pk, &body);
                self.active = Some(ActiveFlow::Primary { td, cmd, payload, await_ack: true });
                vec![(Endpoint::Td(td), ProtocolMessage::PrimaryCmdRequest { cmd, request })]
            }
            (ActiveFlow::Primary { td, payload, await_ack: true, .. }, ProtocolMessage::Ack) => {
                if let CmdPayload::NewLocationKey(key) = payload {
                    self.key_ring.insert(td, key);
                }
                self.outcome = Some(FlowResult::Ok);
                Vec::new()
            }
            (ActiveFlow::Update { td, stage: UpdateStage::Grant }, ProtocolMessage::LocUpdateGrant { e_c, e_t }) => {
                let n_c = match self.tee.decrypt_grant_nonce(e_c, ctx) {
                    Ok(n_c) => n_c,
                    Err(code) => {
                        self.outcome = Some(FlowResult::Failed(code));
                        return Vec::new();
                    }
                };
                let (loc, claim_sig) = self.tee.sign_location(n_c, ctx);
                let (tpk, chain) = self.tee.attested_public();
                self.active = Some(ActiveFlow::Update { td, stage: UpdateStage::SignToken });
                vec![(
                    Endpoint::Td(td),
                    ProtocolMessage::SignTokenRequest { e_t: e_t.clone(), tpk, chain, loc, n_c, claim_sig },
                )]
            }
            (ActiveFlow::Update { td, stage: UpdateStage::SignToken }, ProtocolMessage::SignTokenResponse { s_t, e_l }) => {
                let (tpk, _) = self.tee.attested_public();
                self.active = Some(ActiveFlow::Update { td, stage: UpdateStage::Upload });
                vec![(
                    Endpoint::Ts,
                    ProtocolMessage::AttestedLocationUpdate { tpk, s_t: s_t.clone(), e_l: e_l.clone() },
                )]
            }
            (ActiveFlow::Update { stage: UpdateStage::Upload, .. }, ProtocolMessage::Ack) => {
                self.outcome = Some(FlowResult::Ok);
                Vec::new()
            }
            (ActiveFlow::Query { td }, ProtocolMessage::LocQueryResponse { token }) => {
                self.outcome = Some(self.open_query_token(td, token, ctx));
                Vec::new()
            }
            (ActiveFlow::Ring { td, await_ack: false }, ProtocolMessage::RingChallenge { nonce }) => {
                let signature = ctx.sign(&self.keys.private, nonce.as_bytes());
                self.active = Some(ActiveFlow::Ring { td, await_ack: true });
                vec![(Endpoint::Td(td), ProtocolMessage::RingProof { pk: self.keys.public, signature })]
            }
            (ActiveFlow::Ring { await_ack: true, .. }, ProtocolMessage::Ack) => {
                self.outcome = Some(FlowResult::Ok);
                Vec::new()
            }
            (flow, other) => {
                // Out-of-band delivery (e.g. a reply to an adversary replay):
                // keep the flow, log the message.
                self.stray.push(other.clone());
                self.active = Some(flow);
                Vec::new()
            }
        }
    }

    fn open_query_token(&self, td: Identifier, token: &[u8], ctx: &mut NetCtx) -> FlowResult {
        let Ok(plain) = ctx.asym_decrypt(&self.keys.private, token) else {
            return FlowResult::Failed(ErrorCode::MalformedToken);
        };
        if plain.len() <= NONCE_LEN {
            return FlowResult::Failed(ErrorCode::MalformedToken);
        }
        // Trailing random salt is discarded.
        let e_l = &plain[..plain.len() - NONCE_LEN];
        let Some(key) = self.key_ring.get(&td) else {
            return FlowResult::Failed(ErrorCode::NoLocationKey);
        };
        let Ok(body) = ctx.sym_decrypt(key, e_l) else {
            return FlowResult::Failed(ErrorCode::LocationAuthFailure);
        };
        if body.len() != 16 + NONCE_LEN {
            return FlowResult::Failed(ErrorCode::LocationAuthFailure);
        }
        match LocationFix::decode(&body[..16]) {
            Ok(loc) => FlowResult::Location(loc),
            Err(_) => FlowResult::Failed(ErrorCode::LocationAuthFailure),
        }
    }
}

fn map_flow_error(flow: &ActiveFlow, code: ErrorCode) -> ErrorCode {
    match flow {
        // The service saw a proof embedding someone else's key: surface
        // that as "the device does not know us".
        ActiveFlow::Register { .. } if code == ErrorCode::KeyMismatch => ErrorCode::NotOwnerAtDevice,
        _ => code,
    }
}
