//! Deterministic simulated world: BLE proximity graph, authenticated
//! channels to the tracking service, a stepped scheduler with seeded
//! randomness, and the interposing adversary.
//!
//! Each step delivers at most one queued message per channel, channels in
//! a fixed order, so `(seed, script)` fully determines the transcript.
//! Every delivered or dropped message lands in the transcript before any
//! handler runs.

pub mod adversary;

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::baseline::{BaselineCd, BaselineFlowSpec, BaselineResult, BaselineTd, BaselineTs};
use crate::cd::{CommunicationDevice, FlowResult, FlowSpec, TeeHandle};
use crate::crypto::{AsymKeyPair, CryptoSuite, PublicKey, SymmetricKey};
use crate::ctx::{Directory, Meter, NetCtx, RoleKind};
use crate::sut::{SutKind, SystemUnderTest, WorldConfig};
use crate::td::TrackingDevice;
use crate::transcript::{ChannelId, Disposition, Endpoint, Transcript};
use crate::ts::{BreachDump, TrackingService};
use crate::wire::{
    decode_message, encode_message, derive_trackerid, ErrorCode, Identifier, LocationFix,
    ProtocolMessage, SessionToken,
};

use adversary::{Adversary, Injection, MimicTd, ModOutcome};

pub const ATTESTATION_ROOT_LABEL: &str = "secrow-attestation-root";
pub const TEE_DEVICE_LABEL: &str = "secrow-tee";

const DEFAULT_FLOW_BUDGET: u64 = 200;

#[derive(Debug)]
enum TdNode {
    Secrow(Box<TrackingDevice>),
    Baseline(BaselineTd),
}

#[derive(Debug)]
enum CdNode {
    Secrow(Box<CommunicationDevice>),
    Baseline(BaselineCd),
}

#[derive(Debug)]
enum TsNode {
    Secrow(TrackingService),
    Baseline(BaselineTs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Origin {
    Normal,
    Injected,
}

#[derive(Debug)]
struct Envelope {
    sender: Endpoint,
    receiver: Endpoint,
    bytes: Vec<u8>,
    origin: Origin,
}

/// Split-borrow the world into its node maps plus a ready handler
/// context; keeps every dispatch site down to one line of setup.
macro_rules! split_world {
    ($self:ident, $role:expr => $ctx:ident, $tds:ident, $cds:ident, $ts:ident, $mimics:ident) => {
        let World {
            ref mut $tds,
            ref mut $cds,
            ref mut $ts,
            ref mut $mimics,
            ref mut rng,
            ref mut meter,
            ref cfg,
            ref directory,
            ref attestation_root,
            ref suite,
            step,
            ..
        } = *$self;
        #[allow(unused_variables)]
        let ($tds, $cds, $ts, $mimics) = ($tds, $cds, $ts, $mimics);
        let mut $ctx = NetCtx {
            step,
            role: $role,
            suite: *suite,
            cfg,
            directory,
            attestation_root_pk: attestation_root.public,
            rng,
            meter,
        };
    };
}

pub struct World {
    kind: SutKind,
    cfg: WorldConfig,
    suite: CryptoSuite,
    step: u64,
    rng: ChaCha20Rng,
    meter: Meter,
    attestation_root: AsymKeyPair,
    directory: Directory,
    proximity: BTreeSet<(Identifier, Identifier)>,
    channels: BTreeMap<ChannelId, VecDeque<Envelope>>,
    tds: BTreeMap<Identifier, TdNode>,
    cds: BTreeMap<Identifier, CdNode>,
    ts: TsNode,
    mimics: BTreeMap<Identifier, MimicTd>,
    transcript: Transcript,
    pub adversary: Adversary,
    gps: BTreeMap<Identifier, LocationFix>,
    names: BTreeMap<String, Identifier>,
    td_seeds: BTreeMap<Identifier, [u8; 32]>,
    next_td: u32,
    next_cd: u32,
}

impl World {
    pub fn new(sut: &SystemUnderTest, seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let suite = CryptoSuite::new(sut.config.backend);
        let attestation_root = suite.generate_keypair(&mut rng);
        let ts = match sut.kind {
            SutKind::Secrow => TsNode::Secrow(TrackingService::new()),
            SutKind::BaselineTrackr => TsNode::Baseline(BaselineTs::new()),
        };
        World {
            kind: sut.kind,
            cfg: sut.config.clone(),
            suite,
            step: 0,
            rng,
            meter: Meter::default(),
            attestation_root,
            directory: Directory::default(),
            proximity: BTreeSet::new(),
            channels: BTreeMap::new(),
            tds: BTreeMap::new(),
            cds: BTreeMap::new(),
            ts,
            mimics: BTreeMap::new(),
            transcript: Transcript::default(),
            adversary: Adversary::default(),
            gps: BTreeMap::new(),
            names: BTreeMap::new(),
            td_seeds: BTreeMap::new(),
            next_td: 0,
            next_cd: 0,
        }
    }

    pub fn kind(&self) -> SutKind {
        self.kind
    }

    pub fn config(&self) -> &WorldConfig {
        &self.cfg
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn meter(&self) -> &Meter {
        &self.meter
    }

    pub fn suite(&self) -> CryptoSuite {
        self.suite
    }

    pub fn id_of(&self, name: &str) -> Option<Identifier> {
        self.names.get(name).copied()
    }

    // ---- provisioning ------------------------------------------------

    /// Add a tracking device. MACs are assigned consecutively within one
    /// organization prefix, which is what makes enumeration attacks cheap.
    pub fn add_td(&mut self, name: &str) -> Identifier {
        let serial = 0x113ab7u32 + self.next_td;
        let mac = [0x00, 0x1b, 0x44, (serial >> 16) as u8, (serial >> 8) as u8, serial as u8];
        self.add_td_with_mac(name, mac)
    }

    pub fn add_td_with_mac(&mut self, name: &str, mac: [u8; 6]) -> Identifier {
        self.next_td += 1;
        let id = Identifier::td(mac);
        let node = match self.kind {
            SutKind::Secrow => {
                let keys = self.suite.generate_keypair(&mut self.rng);
                self.td_seeds.insert(id, keys.private.leak_check_bytes());
                self.directory.td_keys.insert(id, keys.public);
                if let TsNode::Secrow(ts) = &mut self.ts {
                    ts.register_td(id, keys.public);
                }
                TdNode::Secrow(Box::new(TrackingDevice::new(
                    id,
                    keys,
                    self.attestation_root.public,
                    self.cfg.rate_capacity,
                    self.cfg.rate_window,
                )))
            }
            SutKind::BaselineTrackr => TdNode::Baseline(BaselineTd::new(id)),
        };
        self.tds.insert(id, node);
        self.names.insert(name.to_string(), id);
        id
    }

    pub fn add_cd(&mut self, name: &str) -> Identifier {
        self.next_cd += 1;
        let serial = self.next_cd;
        let id = Identifier::cd([0xc0, 0xff, 0xee, (serial >> 16) as u8, (serial >> 8) as u8, serial as u8]);
        let node = match self.kind {
            SutKind::Secrow => {
                let keys = self.suite.generate_keypair(&mut self.rng);
                let root = self.attestation_root.clone();
                let unrestricted = self.cfg.knobs.tee_unrestricted_sign;
                let tee = {
                    split_world!(self, RoleKind::Cd => ctx, tds, cds, ts, mimics);
                    TeeHandle::new(root, ATTESTATION_ROOT_LABEL, TEE_DEVICE_LABEL, unrestricted, &mut ctx)
                };
                CdNode::Secrow(Box::new(CommunicationDevice::new(id, keys, tee)))
            }
            SutKind::BaselineTrackr => CdNode::Baseline(BaselineCd::new(id)),
        };
        self.cds.insert(id, node);
        self.names.insert(name.to_string(), id);
        id
    }

    pub fn register_account(&mut self, cd: Identifier, username: &str, password: &str) -> Result<(), ErrorCode> {
        match (&mut self.ts, self.cds.get(&cd)) {
            (TsNode::Secrow(ts), Some(CdNode::Secrow(node))) => {
                ts.register_user(username, password, cd, node.public_key())
            }
            (TsNode::Baseline(ts), Some(CdNode::Baseline(_))) => ts.register_user(username, password),
            _ => Err(ErrorCode::UnexpectedMessage),
        }
    }

    /// Login over the authenticated service channel. The secure system
    /// uses a sign-the-server-nonce exchange; the baseline a password.
    pub fn login(&mut self, cd: Identifier, username: &str, password: &str) -> Result<(), ErrorCode> {
        split_world!(self, RoleKind::Ts => ctx, tds, cds, ts, mimics);
        let node = cds.get_mut(&cd).ok_or(ErrorCode::UnknownTd)?;
        match (ts, node) {
            (TsNode::Secrow(ts), CdNode::Secrow(cd_node)) => {
                let challenge = ts.auth_begin(username, &mut ctx)?;
                ctx.role = RoleKind::Cd;
                let proof = ctx.sign(&cd_node.keys().private, challenge.as_bytes());
                ctx.role = RoleKind::Ts;
                let token = ts.auth_finish(username, password, &proof, &mut ctx)?;
                cd_node.set_session(Some(token));
                Ok(())
            }
            (TsNode::Baseline(ts), CdNode::Baseline(cd_node)) => {
                let token = ts.login(username, password, &mut ctx)?;
                cd_node.set_token(Some(token));
                Ok(())
            }
            _ => Err(ErrorCode::UnexpectedMessage),
        }
    }

    /// Service-side session revocation (test hook).
    pub fn revoke_sessions_of(&mut self, username: &str) {
        if let TsNode::Secrow(ts) = &mut self.ts {
            ts.revoke_sessions_of(username);
        }
    }

    // ---- physical & out-of-band channels ------------------------------

    /// Simulated physical button; unreachable over any message channel.
    pub fn set_pairing_mode(&mut self, td: Identifier, enabled: bool) {
        if let Some(TdNode::Secrow(node)) = self.tds.get_mut(&td) {
            node.set_pairing_mode(enabled, self.step, self.cfg.pairing_mode_budget);
        }
    }

    /// Simulated GPS feed; inside the secure system it lands in the TEE.
    pub fn set_gps(&mut self, cd: Identifier, loc: LocationFix) {
        self.gps.insert(cd, loc);
        if let Some(CdNode::Secrow(node)) = self.cds.get_mut(&cd) {
            node.tee_mut().set_true_location(loc);
        }
    }

    pub fn gps_of(&self, cd: Identifier) -> Option<LocationFix> {
        self.gps.get(&cd).copied()
    }

    pub fn set_proximity(&mut self, cd: Identifier, td: Identifier, near: bool) {
        if near {
            self.proximity.insert((cd, td));
        } else {
            self.proximity.remove(&(cd, td));
            // In-flight BLE messages die with the link.
            let channel = ChannelId::Ble { cd, td };
            if let Some(queue) = self.channels.get_mut(&channel) {
                let orphans: Vec<Envelope> = queue.drain(..).collect();
                for env in orphans {
                    self.transcript.record(
                        self.step,
                        channel,
                        env.sender,
                        env.receiver,
                        env.bytes,
                        Disposition::DroppedOutOfProximity,
                    );
                }
            }
        }
    }

    pub fn is_near(&self, cd: Identifier, td: Identifier) -> bool {
        self.proximity.contains(&(cd, td))
    }

    /// Tracker identities visible to a CD over BLE advertisement.
    pub fn observe_ble(&self, cd: Identifier) -> Vec<Identifier> {
        self.proximity
            .iter()
            .filter(|(c, _)| *c == cd)
            .map(|(_, td)| *td)
            .collect()
    }

    /// Out-of-band location-key share from the primary owner to a peer.
    pub fn share_location_key(&mut self, from: Identifier, to: Identifier, td: Identifier) -> Result<(), ErrorCode> {
        let sharer_pk = match self.cds.get(&from) {
            Some(CdNode::Secrow(node)) => node.public_key(),
            _ => return Err(ErrorCode::UnexpectedMessage),
        };
        let is_primary = match self.tds.get(&td) {
            Some(TdNode::Secrow(node)) => node.primary_owner() == Some(&sharer_pk),
            _ => false,
        };
        if !is_primary {
            return Err(ErrorCode::NotPrimary);
        }
        let key = match self.cds.get(&from) {
            Some(CdNode::Secrow(node)) => node.key_ring().get(&td).copied(),
            _ => None,
        }
        .ok_or(ErrorCode::NoLocationKey)?;
        match self.cds.get_mut(&to) {
            Some(CdNode::Secrow(node)) => {
                node.insert_location_key(td, key);
                Ok(())
            }
            _ => Err(ErrorCode::UnexpectedMessage),
        }
    }

    /// The service endpoint is authenticated by construction; there is no
    /// way to stand up a second one (the TLS assumption, modeled).
    pub fn try_register_rogue_ts(&mut self) -> Result<(), &'static str> {
        Err("service endpoint is pinned; rogue registration rejected by construction")
    }

    /// Swap an attacker device in at a victim identity: subsequent BLE
    /// deliveries to this TD reach the mimic.
    pub fn attach_mimic(&mut self, td: Identifier) -> Result<(), ErrorCode> {
        if !self.adversary.caps.run_mimic_td {
            return Err(ErrorCode::UnexpectedMessage);
        }
        let keys = self.suite.generate_keypair(&mut self.rng);
        let sym_key = self.suite.gen_symmetric_key(&mut self.rng);
        self.mimics.insert(td, MimicTd::new(keys, sym_key));
        Ok(())
    }

    pub fn detach_mimic(&mut self, td: Identifier) {
        self.mimics.remove(&td);
    }

    // ---- scheduler -----------------------------------------------------

    /// Advance the scheduler `n` steps. Each step delivers at most one
    /// queued message per channel, channels in deterministic order, then
    /// fires expiries.
    pub fn step(&mut self, n: u64) {
        for _ in 0..n {
            self.step_once();
        }
    }

    fn step_once(&mut self) {
        self.step += 1;
        for Injection { channel, sender, receiver, bytes } in self.adversary.take_injections() {
            self.channels
                .entry(channel)
                .or_default()
                .push_back(Envelope { sender, receiver, bytes, origin: Origin::Injected });
        }
        let ready: Vec<ChannelId> = self
            .channels
            .iter()
            .filter(|(_, queue)| !queue.is_empty())
            .map(|(channel, _)| *channel)
            .collect();
        for channel in ready {
            if let Some(env) = self.channels.get_mut(&channel).and_then(|q| q.pop_front()) {
                self.process_delivery(channel, env);
            }
        }
        for node in self.tds.values_mut() {
            if let TdNode::Secrow(td) = node {
                td.on_step(self.step);
            }
        }
        if let TsNode::Secrow(ts) = &mut self.ts {
            ts.on_step(self.step);
        }
    }

    fn has_work(&self) -> bool {
        self.adversary.has_queued_injections() || self.channels.values().any(|q| !q.is_empty())
    }

    /// Step until all queues drain (or the budget runs out).
    pub fn run_until_idle(&mut self, max_steps: u64) {
        let mut used = 0;
        while self.has_work() && used < max_steps {
            self.step_once();
            used += 1;
        }
    }

    fn process_delivery(&mut self, channel: ChannelId, mut env: Envelope) {
        let mut disposition = match env.origin {
            Origin::Injected => Disposition::InjectedByAdversary,
            Origin::Normal => Disposition::Delivered,
        };
        if channel.is_ble() {
            self.adversary.observe(channel, env.sender, env.receiver, &env.bytes, self.step);
            match self.adversary.apply_mods(channel, &mut env.bytes) {
                ModOutcome::Dropped => {
                    self.transcript.record(
                        self.step,
                        channel,
                        env.sender,
                        env.receiver,
                        env.bytes,
                        Disposition::DroppedByAdversary,
                    );
                    return;
                }
                ModOutcome::Modified => disposition = Disposition::ModifiedByAdversary,
                ModOutcome::Untouched => {}
            }
            if let ChannelId::Ble { cd, td } = channel {
                if !self.cfg.knobs.ignore_proximity && !self.proximity.contains(&(cd, td)) {
                    self.transcript.record(
                        self.step,
                        channel,
                        env.sender,
                        env.receiver,
                        env.bytes,
                        Disposition::DroppedOutOfProximity,
                    );
                    return;
                }
            }
        }
        self.transcript.record(
            self.step,
            channel,
            env.sender,
            env.receiver,
            env.bytes.clone(),
            disposition,
        );
        let Ok(msg) = decode_message(&env.bytes) else {
            // Mangled bytes are logged but no handler sees them.
            return;
        };
        match env.receiver {
            Endpoint::Td(id) => {
                let reply = self.dispatch_td(id, &msg);
                if let Some(reply) = reply {
                    let _ = self.send(Endpoint::Td(id), env.sender, &reply);
                }
            }
            Endpoint::Cd(id) => {
                let outgoing = self.dispatch_cd(id, &msg);
                self.send_cd_outputs(id, outgoing);
            }
            Endpoint::Ts => {
                let reply = self.dispatch_ts(&msg);
                let _ = self.send(Endpoint::Ts, env.sender, &reply);
            }
            Endpoint::Adversary => {}
        }
    }

    fn dispatch_td(&mut self, id: Identifier, msg: &ProtocolMessage) -> Option<ProtocolMessage> {
        split_world!(self, RoleKind::Td => ctx, tds, cds, ts, mimics);
        if let Some(mimic) = mimics.get_mut(&id) {
            return mimic.handle(msg, &mut ctx);
        }
        match tds.get_mut(&id)? {
            TdNode::Secrow(node) => Some(node.handle(msg, &mut ctx)),
            TdNode::Baseline(node) => Some(node.handle(msg, &mut ctx)),
        }
    }

    fn dispatch_cd(&mut self, id: Identifier, msg: &ProtocolMessage) -> Vec<(Endpoint, ProtocolMessage)> {
        split_world!(self, RoleKind::Cd => ctx, tds, cds, ts, mimics);
        match cds.get_mut(&id) {
            Some(CdNode::Secrow(cd)) => cd.on_message(msg, &mut ctx),
            Some(CdNode::Baseline(cd)) => cd.on_message(msg),
            None => Vec::new(),
        }
    }

    fn dispatch_ts(&mut self, msg: &ProtocolMessage) -> ProtocolMessage {
        split_world!(self, RoleKind::Ts => ctx, tds, cds, ts, mimics);
        match ts {
            TsNode::Secrow(node) => node.handle(msg, &mut ctx),
            TsNode::Baseline(node) => node.handle(msg, &mut ctx),
        }
    }

    fn send_cd_outputs(&mut self, cd: Identifier, outgoing: Vec<(Endpoint, ProtocolMessage)>) {
        for (to, msg) in outgoing {
            if self.send(Endpoint::Cd(cd), to, &msg).is_err() {
                match self.cds.get_mut(&cd) {
                    Some(CdNode::Secrow(node)) => node.fail_active(ErrorCode::ChannelUnavailable),
                    Some(CdNode::Baseline(node)) => node.fail_active(ErrorCode::ChannelUnavailable),
                    None => {}
                }
            }
        }
    }

    fn send(&mut self, from: Endpoint, to: Endpoint, msg: &ProtocolMessage) -> Result<(), ErrorCode> {
        let channel = match (from, to) {
            (Endpoint::Cd(cd), Endpoint::Td(td)) | (Endpoint::Td(td), Endpoint::Cd(cd)) => {
                ChannelId::Ble { cd, td }
            }
            (Endpoint::Cd(cd), Endpoint::Ts) | (Endpoint::Ts, Endpoint::Cd(cd)) => {
                ChannelId::Ts { principal: cd }
            }
            _ => return Err(ErrorCode::ChannelUnavailable),
        };
        if let ChannelId::Ble { cd, td } = channel {
            if !self.cfg.knobs.ignore_proximity && !self.proximity.contains(&(cd, td)) {
                return Err(ErrorCode::ChannelUnavailable);
            }
        }
        self.channels.entry(channel).or_default().push_back(Envelope {
            sender: from,
            receiver: to,
            bytes: encode_message(msg),
            origin: Origin::Normal,
        });
        Ok(())
    }

    /// A rogue CD sending an arbitrary message on its own channels. The
    /// attacker owns the CD software, so this needs no adversary power.
    pub fn rogue_send(&mut self, cd: Identifier, to: Endpoint, msg: &ProtocolMessage) -> Result<(), ErrorCode> {
        self.send(Endpoint::Cd(cd), to, msg)
    }

    // ---- flow drivers ---------------------------------------------------

    pub fn start_flow(&mut self, cd: Identifier, spec: FlowSpec) -> Result<(), ErrorCode> {
        let outgoing = {
            split_world!(self, RoleKind::Cd => ctx, tds, cds, ts, mimics);
            let Some(CdNode::Secrow(node)) = cds.get_mut(&cd) else {
                return Err(ErrorCode::UnexpectedMessage);
            };
            node.start_flow(spec, &mut ctx)
        };
        match outgoing {
            Ok(messages) => {
                self.send_cd_outputs(cd, messages);
                Ok(())
            }
            Err(ErrorCode::Busy) => Err(ErrorCode::Busy),
            Err(code) => {
                if let Some(CdNode::Secrow(node)) = self.cds.get_mut(&cd) {
                    node.fail_active(code);
                    // start_flow failed before activation; record directly.
                    let _ = node.take_outcome();
                }
                Err(code)
            }
        }
    }

    pub fn take_flow_outcome(&mut self, cd: Identifier) -> Option<FlowResult> {
        match self.cds.get_mut(&cd)? {
            CdNode::Secrow(node) => node.take_outcome(),
            CdNode::Baseline(_) => None,
        }
    }

    /// Start a flow, pump the scheduler until idle, and return the result.
    pub fn run_flow(&mut self, cd: Identifier, spec: FlowSpec) -> FlowResult {
        if let Err(code) = self.start_flow(cd, spec) {
            return FlowResult::Failed(code);
        }
        self.run_until_idle(DEFAULT_FLOW_BUDGET);
        match self.cds.get_mut(&cd) {
            Some(CdNode::Secrow(node)) => {
                if let Some(outcome) = node.take_outcome() {
                    outcome
                } else {
                    node.resolve_stalled();
                    node.take_outcome().unwrap_or(FlowResult::Stalled)
                }
            }
            _ => FlowResult::Failed(ErrorCode::UnexpectedMessage),
        }
    }

    pub fn run_baseline_flow(&mut self, cd: Identifier, spec: BaselineFlowSpec) -> BaselineResult {
        let outgoing = {
            let Some(CdNode::Baseline(node)) = self.cds.get_mut(&cd) else {
                return BaselineResult::Failed(ErrorCode::UnexpectedMessage);
            };
            node.start_flow(spec)
        };
        match outgoing {
            Ok(messages) => self.send_cd_outputs(cd, messages),
            Err(code) => return BaselineResult::Failed(code),
        }
        self.run_until_idle(DEFAULT_FLOW_BUDGET);
        match self.cds.get_mut(&cd) {
            Some(CdNode::Baseline(node)) => {
                if let Some(outcome) = node.take_outcome() {
                    outcome
                } else {
                    node.resolve_stalled();
                    node.take_outcome().unwrap_or(BaselineResult::Stalled)
                }
            }
            _ => BaselineResult::Failed(ErrorCode::UnexpectedMessage),
        }
    }

    /// Honest crowd behavior for the baseline: update only what the radio
    /// actually shows nearby.
    pub fn run_baseline_honest_update(&mut self, cd: Identifier, td: Identifier) -> BaselineResult {
        if !self.observe_ble(cd).contains(&td) {
            return BaselineResult::Failed(ErrorCode::ChannelUnavailable);
        }
        let Some(loc) = self.gps_of(cd) else {
            return BaselineResult::Failed(ErrorCode::NoLocationOnRecord);
        };
        let trackerid = derive_trackerid(&td.bytes);
        self.run_baseline_flow(cd, BaselineFlowSpec::Update { trackerid, loc })
    }

    // ---- TEE pass-throughs for attacker-driven CDs -----------------------

    pub fn tee_rotate(&mut self, cd: Identifier) -> Result<(), ErrorCode> {
        split_world!(self, RoleKind::Cd => ctx, tds, cds, ts, mimics);
        let Some(CdNode::Secrow(node)) = cds.get_mut(&cd) else {
            return Err(ErrorCode::UnexpectedMessage);
        };
        node.tee_mut().rotate(&mut ctx);
        Ok(())
    }

    pub fn tee_attested_public(&self, cd: Identifier) -> Option<(PublicKey, Vec<crate::crypto::Certificate>)> {
        match self.cds.get(&cd)? {
            CdNode::Secrow(node) => Some(node.tee().attested_public()),
            CdNode::Baseline(_) => None,
        }
    }

    pub fn tee_decrypt_grant(&mut self, cd: Identifier, e_c: &[u8]) -> Result<crate::wire::Nonce, ErrorCode> {
        split_world!(self, RoleKind::Cd => ctx, tds, cds, ts, mimics);
        let Some(CdNode::Secrow(node)) = cds.get_mut(&cd) else {
            return Err(ErrorCode::UnexpectedMessage);
        };
        node.tee().decrypt_grant_nonce(e_c, &mut ctx)
    }

    pub fn tee_sign_location(&mut self, cd: Identifier, n_c: crate::wire::Nonce) -> Result<(LocationFix, crate::crypto::Signature), ErrorCode> {
        split_world!(self, RoleKind::Cd => ctx, tds, cds, ts, mimics);
        let Some(CdNode::Secrow(node)) = cds.get_mut(&cd) else {
            return Err(ErrorCode::UnexpectedMessage);
        };
        Ok(node.tee().sign_location(n_c, &mut ctx))
    }

    /// Knob-gated TEE bypass; `None` whenever the TEE is intact.
    pub fn tee_sign_arbitrary(&mut self, cd: Identifier, loc: LocationFix, n_c: crate::wire::Nonce) -> Option<crate::crypto::Signature> {
        split_world!(self, RoleKind::Cd => ctx, tds, cds, ts, mimics);
        let Some(CdNode::Secrow(node)) = cds.get_mut(&cd) else {
            return None;
        };
        node.tee().sign_location_unchecked(loc, n_c, &mut ctx)
    }

    // ---- inspection -------------------------------------------------------

    pub fn td_public_key(&self, td: Identifier) -> Option<PublicKey> {
        self.directory.td_keys.get(&td).copied()
    }

    pub fn cd_public_key(&self, cd: Identifier) -> Option<PublicKey> {
        match self.cds.get(&cd)? {
            CdNode::Secrow(node) => Some(node.public_key()),
            CdNode::Baseline(_) => None,
        }
    }

    pub fn cd_session(&self, cd: Identifier) -> Option<SessionToken> {
        match self.cds.get(&cd)? {
            CdNode::Secrow(node) => node.session(),
            CdNode::Baseline(node) => node.token(),
        }
    }

    pub fn cd_location_key(&self, cd: Identifier, td: Identifier) -> Option<SymmetricKey> {
        match self.cds.get(&cd)? {
            CdNode::Secrow(node) => node.key_ring().get(&td).copied(),
            CdNode::Baseline(_) => None,
        }
    }

    pub fn td_ring_count(&self, td: Identifier) -> usize {
        match self.tds.get(&td) {
            Some(TdNode::Secrow(node)) => node.ring_count(),
            Some(TdNode::Baseline(node)) => node.ring_count(),
            None => 0,
        }
    }

    pub fn td_snapshot(&self, td: Identifier) -> Option<Vec<u8>> {
        match self.tds.get(&td)? {
            TdNode::Secrow(node) => Some(node.snapshot(self.step)),
            TdNode::Baseline(_) => None,
        }
    }

    pub fn td_primary_owner(&self, td: Identifier) -> Option<PublicKey> {
        match self.tds.get(&td)? {
            TdNode::Secrow(node) => node.primary_owner().copied(),
            TdNode::Baseline(_) => None,
        }
    }

    pub fn td_has_location_key(&self, td: Identifier) -> bool {
        matches!(self.tds.get(&td), Some(TdNode::Secrow(node)) if node.has_location_key())
    }

    /// Is the CD an owner in the service's books? For the baseline this
    /// means the account has claimed the tracker id.
    pub fn is_owner_at_ts(&self, cd: Identifier, td: Identifier, username: &str) -> bool {
        match &self.ts {
            TsNode::Secrow(ts) => ts.is_owner(cd, td),
            TsNode::Baseline(ts) => ts.is_claimed_by(username, &derive_trackerid(&td.bytes)),
        }
    }

    pub fn ts_stored_ciphertext(&self, td: Identifier) -> Option<Vec<u8>> {
        match &self.ts {
            TsNode::Secrow(ts) => ts.stored_location(td).map(|(bytes, _)| bytes.to_vec()),
            TsNode::Baseline(_) => None,
        }
    }

    pub fn ts_stored_plaintext(&self, td: Identifier) -> Option<LocationFix> {
        match &self.ts {
            TsNode::Baseline(ts) => ts.stored_location(&derive_trackerid(&td.bytes)).map(|(loc, _)| loc),
            TsNode::Secrow(_) => None,
        }
    }

    pub fn ts_location_count(&self) -> usize {
        match &self.ts {
            TsNode::Secrow(ts) => ts.location_store_len(),
            TsNode::Baseline(ts) => ts.location_store_len(),
        }
    }

    pub fn ts_pending_audit(&self) -> (usize, usize) {
        match &self.ts {
            TsNode::Secrow(ts) => ts.pending_audit(self.step),
            TsNode::Baseline(_) => (0, 0),
        }
    }

    pub fn breach_dump(&self) -> BreachDump {
        match &self.ts {
            TsNode::Secrow(ts) => ts.breach_dump(),
            TsNode::Baseline(ts) => BreachDump { bytes: ts.breach_dump(), candidate_keys: Vec::new() },
        }
    }

    /// Private-seed bytes of a device key, for leak scans only.
    pub fn td_private_seed_for_scan(&self, td: Identifier) -> Option<[u8; 32]> {
        self.td_seeds.get(&td).copied()
    }

    // ---- fixtures ---------------------------------------------------------

    /// Full honest ownership setup: account, login, physical pairing,
    /// service registration, and a fresh location key.
    pub fn setup_owner(&mut self, cd: Identifier, td: Identifier, username: &str, password: &str) -> Result<(), ErrorCode> {
        self.register_account(cd, username, password)?;
        self.login(cd, username, password)?;
        match self.kind {
            SutKind::Secrow => {
                self.set_proximity(cd, td, true);
                self.set_pairing_mode(td, true);
                let result = self.run_flow(cd, FlowSpec::PairClaim { td });
                if !result.is_ok() {
                    return Err(result.error().unwrap_or(ErrorCode::UnexpectedMessage));
                }
                let result = self.run_flow(cd, FlowSpec::RegisterOwnership { td });
                if !result.is_ok() {
                    return Err(result.error().unwrap_or(ErrorCode::UnexpectedMessage));
                }
                let result = self.run_flow(cd, FlowSpec::PrimaryCommand {
                    td,
                    cmd: crate::wire::PrimaryCmd::UpdateLocKey,
                    owner_key: None,
                });
                if !result.is_ok() {
                    return Err(result.error().unwrap_or(ErrorCode::UnexpectedMessage));
                }
                Ok(())
            }
            SutKind::BaselineTrackr => {
                // Honest users do pair over BLE before claiming, even though
                // the service never checks it.
                self.set_proximity(cd, td, true);
                let trackerid = derive_trackerid(&td.bytes);
                let result = self.run_baseline_flow(cd, BaselineFlowSpec::Claim { trackerid });
                if result.is_ok() {
                    Ok(())
                } else {
                    Err(ErrorCode::UnexpectedMessage)
                }
            }
        }
    }
}
