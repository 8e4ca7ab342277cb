//! The tracking device: an etched key pair, a pairing-mode gate, an
//! owner table, the location key, and one handler per BLE message.
//!
//! All challenges are single-use and expire after a step budget. The
//! private key and the location key never leave the device in plaintext;
//! transcript scans in the harness enforce both.

use std::collections::BTreeSet;

use crate::crypto::{sha256, AsymKeyPair, PublicKey, SymmetricKey};
use crate::ctx::NetCtx;
use crate::ratelimit::TokenBucket;
use crate::wire::{
    ErrorCode, Identifier, LocationFix, Nonce, PrimaryCmd, ProtocolMessage, NONCE_LEN,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum PendingKind {
    Pairing,
    Cmd(PrimaryCmd),
    Ring,
}

#[derive(Debug, Clone)]
struct PendingChallenge {
    nonce: Nonce,
    bound_pk: Option<PublicKey>,
    expires: u64,
}

#[derive(Debug)]
pub struct TrackingDevice {
    id: Identifier,
    keys: AsymKeyPair,
    attestation_root: PublicKey,
    pairing_until: Option<u64>,
    primary_owner: Option<PublicKey>,
    secondary_owners: BTreeSet<PublicKey>,
    location_key: Option<SymmetricKey>,
    pending: Vec<(PendingKind, PendingChallenge)>,
    bucket: TokenBucket,
    ring_log: Vec<(u64, PublicKey)>,
}

impl TrackingDevice {
    pub fn new(id: Identifier, keys: AsymKeyPair, attestation_root: PublicKey, rate_capacity: u64, rate_window: u64) -> Self {
        TrackingDevice {
            id,
            keys,
            attestation_root,
            pairing_until: None,
            primary_owner: None,
            secondary_owners: BTreeSet::new(),
            location_key: None,
            pending: Vec::new(),
            bucket: TokenBucket::new(rate_capacity, rate_window),
            ring_log: Vec::new(),
        }
    }

    pub fn id(&self) -> Identifier {
        self.id
    }

    pub fn public_key(&self) -> PublicKey {
        self.keys.public
    }

    /// Physical-action channel only; never reachable over BLE.
    pub fn set_pairing_mode(&mut self, enabled: bool, step: u64, budget: u64) {
        self.pairing_until = enabled.then(|| step + budget);
    }

    pub fn pairing_mode_active(&self, step: u64) -> bool {
        self.pairing_until.is_some_and(|until| step < until)
    }

    pub fn primary_owner(&self) -> Option<&PublicKey> {
        self.primary_owner.as_ref()
    }

    pub fn secondary_owners(&self) -> &BTreeSet<PublicKey> {
        &self.secondary_owners
    }

    pub fn has_location_key(&self) -> bool {
        self.location_key.is_some()
    }

    pub fn ring_count(&self) -> usize {
        self.ring_log.len()
    }

    fn is_owner(&self, pk: &PublicKey) -> bool {
        self.primary_owner.as_ref() == Some(pk) || self.secondary_owners.contains(pk)
    }

    fn take_pending(&mut self, kind: PendingKind, step: u64) -> Option<PendingChallenge> {
        let idx = self
            .pending
            .iter()
            .position(|(k, c)| *k == kind && c.expires > step)?;
        Some(self.pending.remove(idx).1)
    }

    fn put_pending(&mut self, kind: PendingKind, challenge: PendingChallenge) {
        self.pending.retain(|(k, _)| *k != kind);
        self.pending.push((kind, challenge));
    }

    pub fn on_step(&mut self, step: u64) {
        self.pending.retain(|(_, c)| c.expires > step);
        if self.pairing_until.is_some_and(|until| step >= until) {
            self.pairing_until = None;
        }
    }

    /// Test-only hook: wipes ownership state so fixtures can re-pair.
    /// Not reachable through any protocol message.
    pub fn factory_reset(&mut self) {
        self.primary_owner = None;
        self.secondary_owners.clear();
        self.location_key = None;
        self.pending.clear();
        self.ring_log.clear();
    }

    /// Canonical state snapshot for harness assertions. Carries an owner
    /// digest and a location-key flag, never the keys themselves.
    pub fn snapshot(&self, step: u64) -> Vec<u8> {
        let mut owners = Vec::new();
        if let Some(pk) = &self.primary_owner {
            owners.extend_from_slice(&pk.encode());
        }
        for pk in &self.secondary_owners {
            owners.extend_from_slice(&pk.encode());
        }
        let digest = sha256(&[b"td-owner-digest", &owners]);
        let mut out = Vec::new();
        out.push(match self.id.kind {
            crate::wire::IdKind::Td => 0,
            crate::wire::IdKind::Cd => 1,
        });
        out.extend_from_slice(&self.id.bytes);
        out.push(self.pairing_mode_active(step) as u8);
        out.extend_from_slice(&digest);
        out.push(self.location_key.is_some() as u8);
        out
    }

    pub fn handle(&mut self, msg: &ProtocolMessage, ctx: &mut NetCtx) -> ProtocolMessage {
        match self.dispatch(msg, ctx) {
            Ok(reply) => reply,
            Err(code) => ProtocolMessage::Err { code },
        }
    }

    fn dispatch(&mut self, msg: &ProtocolMessage, ctx: &mut NetCtx) -> Result<ProtocolMessage, ErrorCode> {
        match msg {
            ProtocolMessage::AddPOwner { pk } => self.handle_add_p_owner(*pk, ctx),
            ProtocolMessage::PairingProof { signature } => self.handle_pairing_proof(signature, ctx),
            ProtocolMessage::CheckOwner { pk, ticket } => self.handle_check_owner(*pk, ticket, ctx),
            ProtocolMessage::PrimaryCmdBegin { cmd } => self.begin_primary_cmd(*cmd, ctx),
            ProtocolMessage::PrimaryCmdRequest { cmd, request } => self.commit_primary_cmd(*cmd, request, ctx),
            ProtocolMessage::SignTokenRequest { e_t, tpk, chain, loc, n_c, claim_sig } => {
                self.handle_sign_token(e_t, tpk, chain, *loc, *n_c, claim_sig, ctx)
            }
            ProtocolMessage::RingRequest { pk } => self.begin_ring(*pk, ctx),
            ProtocolMessage::RingProof { pk, signature } => self.handle_ring(*pk, signature, ctx),
            _ => Err(ErrorCode::UnexpectedMessage),
        }
    }

    fn handle_add_p_owner(&mut self, pk: PublicKey, ctx: &mut NetCtx) -> Result<ProtocolMessage, ErrorCode> {
        if !self.pairing_mode_active(ctx.step) && !ctx.cfg.knobs.td_ignore_pairing_mode {
            return Err(ErrorCode::NotInPairingMode);
        }
        if self.primary_owner.is_some() {
            return Err(ErrorCode::OwnerExists);
        }
        let n1 = ctx.fresh_nonce();
        self.put_pending(
            PendingKind::Pairing,
            PendingChallenge { nonce: n1, bound_pk: Some(pk), expires: ctx.step + ctx.cfg.challenge_budget },
        );
        Ok(ProtocolMessage::PairingChallenge { n1 })
    }

    fn handle_pairing_proof(&mut self, sig: &crate::crypto::Signature, ctx: &mut NetCtx) -> Result<ProtocolMessage, ErrorCode> {
        let Some(pending) = self.peek_pending(PendingKind::Pairing, ctx.step) else {
            return Err(ErrorCode::NoPendingChallenge);
        };
        let pk = pending.bound_pk.expect("pairing challenge binds a key");
        let nonce = pending.nonce;
        if !ctx.verify(&pk, nonce.as_bytes(), sig) {
            // Failed proof leaves the challenge in place.
            return Err(ErrorCode::BadSignature);
        }
        self.take_pending(PendingKind::Pairing, ctx.step);
        if self.primary_owner.is_some() {
            return Err(ErrorCode::OwnerExists);
        }
        self.primary_owner = Some(pk);
        Ok(ProtocolMessage::Ack)
    }

    fn peek_pending(&self, kind: PendingKind, step: u64) -> Option<PendingChallenge> {
        self.pending
            .iter()
            .find(|(k, c)| *k == kind && c.expires > step)
            .map(|(_, c)| c.clone())
    }

    fn handle_check_owner(&mut self, pk: PublicKey, ticket: &[u8], ctx: &mut NetCtx) -> Result<ProtocolMessage, ErrorCode> {
        if !self.bucket.admit(ctx.step) {
            return Err(ErrorCode::RateLimited);
        }
        let plain = ctx
            .asym_decrypt(&self.keys.private, ticket)
            .map_err(|_| ErrorCode::MalformedTicket)?;
        if plain.len() != NONCE_LEN + 32 {
            return Err(ErrorCode::MalformedTicket);
        }
        let (n2, ot_k) = plain.split_at(NONCE_LEN);
        let ot_k = SymmetricKey(ot_k.try_into().unwrap());
        // A stranger gets a valid proof embedding a real owner's key, so
        // the response alone reveals nothing about who is an owner.
        let embedded = if self.is_owner(&pk) {
            pk
        } else {
            *self.primary_owner.as_ref().ok_or(ErrorCode::NoOwnersRegistered)?
        };
        let n3 = ctx.fresh_nonce();
        let mut body = Vec::with_capacity(64 + 2 * NONCE_LEN);
        body.extend_from_slice(&embedded.encode());
        body.extend_from_slice(n2);
        body.extend_from_slice(n3.as_bytes());
        let proof = ctx.sym_encrypt(&ot_k, &body);
        Ok(ProtocolMessage::OwnershipProof { proof })
    }

    fn begin_primary_cmd(&mut self, cmd: PrimaryCmd, ctx: &mut NetCtx) -> Result<ProtocolMessage, ErrorCode> {
        let primary = self.primary_owner.ok_or(ErrorCode::NoPrimaryOwner)?;
        let nonce = ctx.fresh_nonce();
        self.put_pending(
            PendingKind::Cmd(cmd),
            PendingChallenge { nonce, bound_pk: None, expires: ctx.step + ctx.cfg.challenge_budget },
        );
        let challenge = ctx.asym_encrypt(&primary, nonce.as_bytes());
        Ok(ProtocolMessage::PrimaryCmdChallenge { challenge })
    }

    fn commit_primary_cmd(&mut self, cmd: PrimaryCmd, request: &[u8], ctx: &mut NetCtx) -> Result<ProtocolMessage, ErrorCode> {
        let pending = self
            .take_pending(PendingKind::Cmd(cmd), ctx.step)
            .ok_or(ErrorCode::NoPendingChallenge)?;
        // The challenge is consumed whatever happens next; replays of this
        // request can only see NoPendingChallenge.
        let plain = ctx
            .asym_decrypt(&self.keys.private, request)
            .map_err(|_| ErrorCode::MalformedToken)?;
        if plain.len() < NONCE_LEN {
            return Err(ErrorCode::MalformedToken);
        }
        let (nonce, payload) = plain.split_at(NONCE_LEN);
        if nonce != pending.nonce.as_bytes() {
            return Err(ErrorCode::NonceMismatch);
        }
        match cmd {
            PrimaryCmd::UpdateLocKey => {
                let key: [u8; 32] = payload.try_into().map_err(|_| ErrorCode::MalformedToken)?;
                self.location_key = Some(SymmetricKey(key));
            }
            PrimaryCmd::AddSOwner => {
                let pk = PublicKey::decode(payload).ok_or(ErrorCode::MalformedToken)?;
                if Some(&pk) == self.primary_owner.as_ref() {
                    return Err(ErrorCode::NotAnOwner);
                }
                self.secondary_owners.insert(pk);
            }
            PrimaryCmd::RemSOwner => {
                let pk = PublicKey::decode(payload).ok_or(ErrorCode::MalformedToken)?;
                if !self.secondary_owners.remove(&pk) {
                    return Err(ErrorCode::NotAnOwner);
                }
            }
        }
        Ok(ProtocolMessage::Ack)
    }

    #[allow(clippy::too_many_arguments)]
    fn handle_sign_token(
        &mut self,
        e_t: &[u8],
        tpk: &PublicKey,
        chain: &[crate::crypto::Certificate],
        loc: LocationFix,
        n_c: Nonce,
        claim_sig: &crate::crypto::Signature,
        ctx: &mut NetCtx,
    ) -> Result<ProtocolMessage, ErrorCode> {
        let location_key = self.location_key.ok_or(ErrorCode::NoLocationKey)?;
        if !self.bucket.admit(ctx.step) {
            return Err(ErrorCode::RateLimited);
        }
        // The signed fix is only trustworthy under a key the manufacturer
        // root attests; an unattested key would let a hostile driver smuggle
        // in an arbitrary fix.
        if chain.first().map(|c| c.subject_public) != Some(*tpk)
            || !ctx.verify_attestation_chain(&self.attestation_root, chain)
        {
            return Err(ErrorCode::BadAttestation);
        }
        let mut claim = Vec::with_capacity(16 + NONCE_LEN);
        claim.extend_from_slice(&loc.encode());
        claim.extend_from_slice(n_c.as_bytes());
        if !ctx.verify(tpk, &claim, claim_sig) {
            return Err(ErrorCode::BadLocationSignature);
        }
        let n_t = ctx
            .asym_decrypt(&self.keys.private, e_t)
            .map_err(|_| ErrorCode::MalformedToken)?;
        if n_t.len() != NONCE_LEN {
            return Err(ErrorCode::MalformedToken);
        }
        let mut nonces = Vec::with_capacity(2 * NONCE_LEN);
        nonces.extend_from_slice(&n_t);
        nonces.extend_from_slice(n_c.as_bytes());
        let s_t = ctx.sign(&self.keys.private, &nonces);
        let n_l = ctx.fresh_nonce();
        let mut body = Vec::with_capacity(16 + NONCE_LEN);
        body.extend_from_slice(&loc.encode());
        body.extend_from_slice(n_l.as_bytes());
        let e_l = ctx.sym_encrypt(&location_key, &body);
        Ok(ProtocolMessage::SignTokenResponse { s_t, e_l })
    }

    fn begin_ring(&mut self, pk: PublicKey, ctx: &mut NetCtx) -> Result<ProtocolMessage, ErrorCode> {
        let nonce = ctx.fresh_nonce();
        self.put_pending(
            PendingKind::Ring,
            PendingChallenge { nonce, bound_pk: Some(pk), expires: ctx.step + ctx.cfg.challenge_budget },
        );
        Ok(ProtocolMessage::RingChallenge { nonce })
    }

    fn handle_ring(&mut self, pk: PublicKey, sig: &crate::crypto::Signature, ctx: &mut NetCtx) -> Result<ProtocolMessage, ErrorCode> {
        let Some(pending) = self.peek_pending(PendingKind::Ring, ctx.step) else {
            return Err(ErrorCode::NoPendingChallenge);
        };
        if pending.bound_pk != Some(pk) {
            return Err(ErrorCode::NoPendingChallenge);
        }
        if !ctx.verify(&pk, pending.nonce.as_bytes(), sig) {
            return Err(ErrorCode::BadSignature);
        }
        self.take_pending(PendingKind::Ring, ctx.step);
        if !self.is_owner(&pk) && !ctx.cfg.knobs.td_skip_ring_owner_check {
            return Err(ErrorCode::NotAnOwner);
        }
        self.ring_log.push((ctx.step, pk));
        Ok(ProtocolMessage::Ack)
    }
}
