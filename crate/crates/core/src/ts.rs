//! The tracking service: account registry, per-device ownership map,
//! pending stores for the ownership and location-update flows, and the
//! encrypted location store it can never read.
//!
//! The service holds device public keys only. Location values arrive and
//! stay as opaque ciphertexts; nothing in this module ever calls
//! `sym_decrypt` on them, and the breach-dump check proves it can't.

use std::collections::{BTreeMap, BTreeSet};

use crate::crypto::{sha256, PublicKey, Signature, SymmetricKey};
use crate::ctx::NetCtx;
use crate::wire::{
    ErrorCode, Identifier, Nonce, ProtocolMessage, SessionToken, NONCE_LEN, SESSION_TOKEN_LEN,
};

#[derive(Debug, Clone)]
struct Account {
    cd_id: Identifier,
    pk: PublicKey,
    password_hash: [u8; 32],
}

#[derive(Debug, Clone)]
struct SessionInfo {
    username: String,
    expires: u64,
}

#[derive(Debug, Clone)]
struct PendingOwnership {
    n2: Nonce,
    ot_k: SymmetricKey,
    expires: u64,
}

#[derive(Debug, Clone)]
struct PendingUpdate {
    td_id: Identifier,
    n_t: Nonce,
    n_c: Nonce,
    expires: u64,
}

/// Full service state dump for the data-breach check, plus every piece
/// of key material an attacker would find inside it.
pub struct BreachDump {
    pub bytes: Vec<u8>,
    pub candidate_keys: Vec<SymmetricKey>,
}

#[derive(Debug, Default)]
pub struct TrackingService {
    td_registry: BTreeMap<Identifier, PublicKey>,
    accounts: BTreeMap<String, Account>,
    sessions: BTreeMap<[u8; SESSION_TOKEN_LEN], SessionInfo>,
    auth_challenges: BTreeMap<String, Nonce>,
    ownership: BTreeMap<Identifier, BTreeSet<Identifier>>,
    pending_ownership: BTreeMap<(Identifier, Identifier), PendingOwnership>,
    pending_updates: BTreeMap<(Vec<u8>, u64), PendingUpdate>,
    update_seq: u64,
    location_store: BTreeMap<Identifier, (Vec<u8>, u64)>,
}

impl TrackingService {
    pub fn new() -> Self {
        TrackingService::default()
    }

    /// Manufacture-time provisioning of a device public key.
    pub fn register_td(&mut self, td_id: Identifier, pk: PublicKey) {
        self.td_registry.insert(td_id, pk);
    }

    pub fn register_user(
        &mut self,
        username: &str,
        password: &str,
        cd_id: Identifier,
        pk: PublicKey,
    ) -> Result<(), ErrorCode> {
        if self.accounts.contains_key(username) {
            return Err(ErrorCode::AccountExists);
        }
        self.accounts.insert(
            username.to_string(),
            Account { cd_id, pk, password_hash: hash_password(password) },
        );
        Ok(())
    }

    /// First half of the login challenge-response.
    pub fn auth_begin(&mut self, username: &str, ctx: &mut NetCtx) -> Result<Nonce, ErrorCode> {
        if !self.accounts.contains_key(username) {
            return Err(ErrorCode::BadCredentials);
        }
        let challenge = ctx.fresh_nonce();
        self.auth_challenges.insert(username.to_string(), challenge);
        Ok(challenge)
    }

    /// Second half: password plus a signature over the challenge under
    /// the account key. Issues a fresh session, revoking any prior one.
    pub fn auth_finish(
        &mut self,
        username: &str,
        password: &str,
        proof: &Signature,
        ctx: &mut NetCtx,
    ) -> Result<SessionToken, ErrorCode> {
        let account = self.accounts.get(username).ok_or(ErrorCode::BadCredentials)?.clone();
        if account.password_hash != hash_password(password) {
            return Err(ErrorCode::BadCredentials);
        }
        let challenge = self
            .auth_challenges
            .remove(username)
            .ok_or(ErrorCode::BadCredentials)?;
        if !ctx.verify(&account.pk, challenge.as_bytes(), proof) {
            return Err(ErrorCode::BadCredentials);
        }
        self.sessions.retain(|_, info| info.username != username);
        let mut token = [0u8; SESSION_TOKEN_LEN];
        rand::RngCore::fill_bytes(ctx.rng, &mut token);
        self.sessions.insert(
            token,
            SessionInfo { username: username.to_string(), expires: ctx.step + ctx.cfg.session_budget },
        );
        Ok(SessionToken(token))
    }

    /// Test hook mirroring a service-side logout.
    pub fn revoke_sessions_of(&mut self, username: &str) {
        self.sessions.retain(|_, info| info.username != username);
    }

    fn session_account(&self, token: &SessionToken, step: u64) -> Option<(Identifier, PublicKey)> {
        let info = self.sessions.get(&token.0)?;
        if step >= info.expires {
            return None;
        }
        let account = self.accounts.get(&info.username)?;
        Some((account.cd_id, account.pk))
    }

    pub fn is_owner(&self, cd_id: Identifier, td_id: Identifier) -> bool {
        self.ownership.get(&td_id).is_some_and(|set| set.contains(&cd_id))
    }

    pub fn stored_location(&self, td_id: Identifier) -> Option<(&[u8], u64)> {
        self.location_store.get(&td_id).map(|(bytes, step)| (bytes.as_slice(), *step))
    }

    pub fn location_store_len(&self) -> usize {
        self.location_store.len()
    }

    /// (live, expired) pending-entry counts; the leak check expects the
    /// expired side to drain to zero after every run.
    pub fn pending_audit(&self, step: u64) -> (usize, usize) {
        let live = self
            .pending_ownership
            .values()
            .map(|p| p.expires)
            .chain(self.pending_updates.values().map(|p| p.expires))
            .filter(|expires| *expires > step)
            .count();
        let total = self.pending_ownership.len() + self.pending_updates.len();
        (live, total - live)
    }

    pub fn on_step(&mut self, step: u64) {
        self.pending_ownership.retain(|_, p| p.expires > step);
        self.pending_updates.retain(|_, p| p.expires > step);
        self.sessions.retain(|_, info| info.expires > step);
    }

    pub fn handle(&mut self, msg: &ProtocolMessage, ctx: &mut NetCtx) -> ProtocolMessage {
        match self.dispatch(msg, ctx) {
            Ok(reply) => reply,
            Err(code) => ProtocolMessage::Err { code },
        }
    }

    fn dispatch(&mut self, msg: &ProtocolMessage, ctx: &mut NetCtx) -> Result<ProtocolMessage, ErrorCode> {
        match msg {
            ProtocolMessage::AddOwnerRequest { session, cd_id, td_id } => {
                self.handle_add_owner(session, *cd_id, *td_id, ctx)
            }
            ProtocolMessage::CommitOwner { session, proof } => self.handle_commit_owner(session, proof, ctx),
            ProtocolMessage::LocUpdateRequest { td_id, tpk, chain } => {
                self.handle_loc_update_request(*td_id, tpk, chain, ctx)
            }
            ProtocolMessage::AttestedLocationUpdate { tpk, s_t, e_l } => {
                self.handle_attested_update(tpk, s_t, e_l, ctx)
            }
            ProtocolMessage::LocQueryRequest { session, td_id } => self.handle_loc_query(session, *td_id, ctx),
            _ => Err(ErrorCode::UnexpectedMessage),
        }
    }

    fn handle_add_owner(
        &mut self,
        session: &SessionToken,
        cd_id: Identifier,
        td_id: Identifier,
        ctx: &mut NetCtx,
    ) -> Result<ProtocolMessage, ErrorCode> {
        let (session_cd, _) = self.session_account(session, ctx.step).ok_or(ErrorCode::Unauthenticated)?;
        if session_cd != cd_id {
            return Err(ErrorCode::Unauthenticated);
        }
        let td_pk = *self.td_registry.get(&td_id).ok_or(ErrorCode::UnknownTd)?;
        let n2 = ctx.fresh_nonce();
        let ot_k = ctx.gen_symmetric_key();
        self.pending_ownership.insert(
            (cd_id, td_id),
            PendingOwnership { n2, ot_k, expires: ctx.step + ctx.cfg.pending_budget },
        );
        let mut plain = Vec::with_capacity(NONCE_LEN + 32);
        plain.extend_from_slice(n2.as_bytes());
        plain.extend_from_slice(&ot_k.0);
        let ticket = ctx.asym_encrypt(&td_pk, &plain);
        Ok(ProtocolMessage::OwnershipTicket { ticket })
    }

    fn handle_commit_owner(
        &mut self,
        session: &SessionToken,
        proof: &[u8],
        ctx: &mut NetCtx,
    ) -> Result<ProtocolMessage, ErrorCode> {
        let (cd_id, account_pk) = self.session_account(session, ctx.step).ok_or(ErrorCode::Unauthenticated)?;
        let candidates: Vec<(Identifier, Identifier)> = self
            .pending_ownership
            .keys()
            .filter(|(cd, _)| *cd == cd_id)
            .copied()
            .collect();
        if candidates.is_empty() {
            return Err(ErrorCode::NoPendingRequest);
        }
        if ctx.cfg.knobs.ts_commit_without_td_proof {
            // Knob: believe the requester outright, as the baseline does.
            let key = candidates[0];
            self.pending_ownership.remove(&key);
            self.ownership.entry(key.1).or_default().insert(cd_id);
            return Ok(ProtocolMessage::Ack);
        }
        for key in candidates {
            let pending = self.pending_ownership.get(&key).expect("candidate present").clone();
            let Ok(plain) = ctx.sym_decrypt(&pending.ot_k, proof) else {
                continue;
            };
            // Consumed from here on, success or not.
            self.pending_ownership.remove(&key);
            if pending.expires <= ctx.step {
                return Err(ErrorCode::TicketExpired);
            }
            if plain.len() != 64 + 2 * NONCE_LEN {
                return Err(ErrorCode::MalformedTicket);
            }
            let embedded_pk = PublicKey::decode(&plain[..64]).ok_or(ErrorCode::MalformedTicket)?;
            let n2 = &plain[64..64 + NONCE_LEN];
            // Trailing freshness nonce N3 is discarded unread.
            if n2 != pending.n2.as_bytes() {
                return Err(ErrorCode::NonceMismatch);
            }
            if embedded_pk != account_pk {
                return Err(ErrorCode::KeyMismatch);
            }
            self.ownership.entry(key.1).or_default().insert(cd_id);
            return Ok(ProtocolMessage::Ack);
        }
        Err(ErrorCode::MalformedTicket)
    }

    fn handle_loc_update_request(
        &mut self,
        td_id: Identifier,
        tpk: &PublicKey,
        chain: &[crate::crypto::Certificate],
        ctx: &mut NetCtx,
    ) -> Result<ProtocolMessage, ErrorCode> {
        if chain.first().map(|c| c.subject_public) != Some(*tpk)
            || !ctx.verify_attestation_chain(&ctx.attestation_root_pk.clone(), chain)
        {
            return Err(ErrorCode::BadAttestation);
        }
        let td_pk = *self.td_registry.get(&td_id).ok_or(ErrorCode::UnknownTd)?;
        let n_t = ctx.fresh_nonce();
        let n_c = ctx.fresh_nonce();
        self.update_seq += 1;
        self.pending_updates.insert(
            (tpk.encode().to_vec(), self.update_seq),
            PendingUpdate { td_id, n_t, n_c, expires: ctx.step + ctx.cfg.pending_budget },
        );
        let e_c = ctx.asym_encrypt(tpk, n_c.as_bytes());
        let e_t = ctx.asym_encrypt(&td_pk, n_t.as_bytes());
        Ok(ProtocolMessage::LocUpdateGrant { e_c, e_t })
    }

    fn handle_attested_update(
        &mut self,
        tpk: &PublicKey,
        s_t: &Signature,
        e_l: &[u8],
        ctx: &mut NetCtx,
    ) -> Result<ProtocolMessage, ErrorCode> {
        let tpk_bytes = tpk.encode().to_vec();
        let candidates: Vec<u64> = self
            .pending_updates
            .range((tpk_bytes.clone(), 0)..=(tpk_bytes.clone(), u64::MAX))
            .filter(|(_, p)| p.expires > ctx.step)
            .map(|((_, seq), _)| *seq)
            .collect();
        if candidates.is_empty() {
            return Err(ErrorCode::NoPendingUpdate);
        }
        for seq in candidates {
            let key = (tpk_bytes.clone(), seq);
            let pending = self.pending_updates.get(&key).expect("candidate present").clone();
            let accept = if ctx.cfg.knobs.ts_skip_proximity_proof {
                true
            } else {
                let td_pk = match self.td_registry.get(&pending.td_id) {
                    Some(pk) => *pk,
                    None => continue,
                };
                let mut nonces = Vec::with_capacity(2 * NONCE_LEN);
                nonces.extend_from_slice(pending.n_t.as_bytes());
                nonces.extend_from_slice(pending.n_c.as_bytes());
                ctx.verify(&td_pk, &nonces, s_t)
            };
            if accept {
                self.pending_updates.remove(&key);
                self.location_store.insert(pending.td_id, (e_l.to_vec(), ctx.step));
                return Ok(ProtocolMessage::Ack);
            }
        }
        Err(ErrorCode::BadProximityProof)
    }

    fn handle_loc_query(
        &mut self,
        session: &SessionToken,
        td_id: Identifier,
        ctx: &mut NetCtx,
    ) -> Result<ProtocolMessage, ErrorCode> {
        let (cd_id, account_pk) = self.session_account(session, ctx.step).ok_or(ErrorCode::Unauthenticated)?;
        if !self.is_owner(cd_id, td_id) && !ctx.cfg.knobs.ts_skip_query_owner_check {
            return Err(ErrorCode::NotAnOwner);
        }
        let (e_l, _) = self.location_store.get(&td_id).ok_or(ErrorCode::NoLocationOnRecord)?;
        // Fresh salt per query, so identical stored ciphertexts still yield
        // distinct tokens and reveal nothing about change-over-time.
        let salt = ctx.fresh_nonce();
        let mut plain = Vec::with_capacity(e_l.len() + NONCE_LEN);
        plain.extend_from_slice(e_l);
        plain.extend_from_slice(salt.as_bytes());
        let token = ctx.asym_encrypt(&account_pk, &plain);
        Ok(ProtocolMessage::LocQueryResponse { token })
    }

    /// Byte-exact dump of everything a server-side breach would expose.
    pub fn breach_dump(&self) -> BreachDump {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"TSDUMP");

        section(&mut bytes, b"td_registry", |out| {
            for (id, pk) in &self.td_registry {
                push_id(out, id);
                out.extend_from_slice(&pk.encode());
            }
        });
        section(&mut bytes, b"accounts", |out| {
            for (name, account) in &self.accounts {
                push_bytes(out, name.as_bytes());
                push_id(out, &account.cd_id);
                out.extend_from_slice(&account.pk.encode());
                out.extend_from_slice(&account.password_hash);
            }
        });
        section(&mut bytes, b"sessions", |out| {
            for (token, info) in &self.sessions {
                out.extend_from_slice(token);
                push_bytes(out, info.username.as_bytes());
                out.extend_from_slice(&info.expires.to_be_bytes());
            }
        });
        section(&mut bytes, b"ownership", |out| {
            for (td, cds) in &self.ownership {
                push_id(out, td);
                for cd in cds {
                    push_id(out, cd);
                }
            }
        });
        section(&mut bytes, b"pending_ownership", |out| {
            for ((cd, td), p) in &self.pending_ownership {
                push_id(out, cd);
                push_id(out, td);
                out.extend_from_slice(p.n2.as_bytes());
                out.extend_from_slice(&p.ot_k.0);
                out.extend_from_slice(&p.expires.to_be_bytes());
            }
        });
        section(&mut bytes, b"pending_updates", |out| {
            for ((tpk, seq), p) in &self.pending_updates {
                push_bytes(out, tpk);
                out.extend_from_slice(&seq.to_be_bytes());
                push_id(out, &p.td_id);
                out.extend_from_slice(p.n_t.as_bytes());
                out.extend_from_slice(p.n_c.as_bytes());
            }
        });
        section(&mut bytes, b"location_store", |out| {
            for (td, (e_l, step)) in &self.location_store {
                push_id(out, td);
                out.extend_from_slice(&step.to_be_bytes());
                push_bytes(out, e_l);
            }
        });

        let mut candidate_keys = Vec::new();
        for p in self.pending_ownership.values() {
            candidate_keys.push(p.ot_k);
        }
        for pk in self
            .td_registry
            .values()
            .chain(self.accounts.values().map(|a| &a.pk))
        {
            candidate_keys.push(SymmetricKey(pk.sign));
            candidate_keys.push(SymmetricKey(pk.enc));
        }
        for account in self.accounts.values() {
            candidate_keys.push(SymmetricKey(account.password_hash));
        }
        for token in self.sessions.keys() {
            candidate_keys.push(SymmetricKey(sha256(&[b"stretch", token])));
        }

        BreachDump { bytes, candidate_keys }
    }
}

fn hash_password(password: &str) -> [u8; 32] {
    sha256(&[b"password", password.as_bytes()])
}

fn section(out: &mut Vec<u8>, name: &[u8], fill: impl FnOnce(&mut Vec<u8>)) {
    push_bytes(out, name);
    let mut body = Vec::new();
    fill(&mut body);
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(&body);
}

fn push_bytes(out: &mut Vec<u8>, bytes: &[u8]) {
    out.extend_from_slice(&(bytes.len() as u16).to_be_bytes());
    out.extend_from_slice(bytes);
}

fn push_id(out: &mut Vec<u8>, id: &Identifier) {
    out.push(match id.kind {
        crate::wire::IdKind::Td => 0,
        crate::wire::IdKind::Cd => 1,
    });
    out.extend_from_slice(&id.bytes);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{BackendKind, CryptoSuite};
    use crate::ctx::{Directory, Meter, RoleKind};
    use crate::sut::WorldConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    struct Fixture {
        ts: TrackingService,
        suite: CryptoSuite,
        cfg: WorldConfig,
        rng: ChaCha20Rng,
        meter: Meter,
        directory: Directory,
        root: crate::crypto::AsymKeyPair,
        step: u64,
    }

    impl Fixture {
        fn new() -> Self {
            let suite = CryptoSuite::toy();
            let mut rng = ChaCha20Rng::seed_from_u64(31);
            let root = suite.generate_keypair(&mut rng);
            Fixture {
                ts: TrackingService::new(),
                suite,
                cfg: WorldConfig::with_backend(BackendKind::Toy),
                rng,
                meter: Meter::default(),
                directory: Directory::default(),
                root,
                step: 0,
            }
        }

        fn with_ctx<T>(&mut self, f: impl FnOnce(&mut TrackingService, &mut NetCtx) -> T) -> T {
            let Fixture { ts, suite, cfg, rng, meter, directory, root, step } = self;
            let mut ctx = NetCtx {
                step: *step,
                role: RoleKind::Ts,
                suite: *suite,
                cfg,
                directory,
                attestation_root_pk: root.public,
                rng,
                meter,
            };
            f(ts, &mut ctx)
        }

        fn login(&mut self, username: &str, password: &str, pair: &crate::crypto::AsymKeyPair) -> SessionToken {
            let challenge = self.with_ctx(|ts, ctx| ts.auth_begin(username, ctx).unwrap());
            let sig = self.suite.sign(&pair.private, challenge.as_bytes());
            self.with_ctx(|ts, ctx| ts.auth_finish(username, password, &sig, ctx).unwrap())
        }
    }

    #[test]
    fn account_lifecycle() {
        let mut fx = Fixture::new();
        let pair = fx.suite.generate_keypair(&mut fx.rng);
        let cd = Identifier::cd([1; 6]);
        fx.ts.register_user("alice", "pw", cd, pair.public).unwrap();
        assert_eq!(
            fx.ts.register_user("alice", "other", cd, pair.public),
            Err(ErrorCode::AccountExists)
        );
        let token = fx.login("alice", "pw", &pair);

        // Wrong password refused.
        let challenge = fx.with_ctx(|ts, ctx| ts.auth_begin("alice", ctx).unwrap());
        let sig = fx.suite.sign(&pair.private, challenge.as_bytes());
        assert_eq!(
            fx.with_ctx(|ts, ctx| ts.auth_finish("alice", "nope", &sig, ctx)),
            Err(ErrorCode::BadCredentials)
        );

        // Token works until revoked.
        let td = Identifier::td([2; 6]);
        let msg = ProtocolMessage::LocQueryRequest { session: token, td_id: td };
        let reply = fx.with_ctx(|ts, ctx| ts.handle(&msg, ctx));
        assert_eq!(reply, ProtocolMessage::Err { code: ErrorCode::NotAnOwner });
        fx.ts.revoke_sessions_of("alice");
        let reply = fx.with_ctx(|ts, ctx| ts.handle(&msg, ctx));
        assert_eq!(reply, ProtocolMessage::Err { code: ErrorCode::Unauthenticated });
    }

    #[test]
    fn session_expiry() {
        let mut fx = Fixture::new();
        let pair = fx.suite.generate_keypair(&mut fx.rng);
        let cd = Identifier::cd([1; 6]);
        fx.ts.register_user("alice", "pw", cd, pair.public).unwrap();
        let token = fx.login("alice", "pw", &pair);
        fx.step = fx.cfg.session_budget;
        let msg = ProtocolMessage::LocQueryRequest { session: token, td_id: Identifier::td([2; 6]) };
        assert_eq!(
            fx.with_ctx(|ts, ctx| ts.handle(&msg, ctx)),
            ProtocolMessage::Err { code: ErrorCode::Unauthenticated }
        );
    }

    #[test]
    fn add_owner_unknown_td() {
        let mut fx = Fixture::new();
        let pair = fx.suite.generate_keypair(&mut fx.rng);
        let cd = Identifier::cd([1; 6]);
        fx.ts.register_user("alice", "pw", cd, pair.public).unwrap();
        let token = fx.login("alice", "pw", &pair);
        let msg = ProtocolMessage::AddOwnerRequest { session: token, cd_id: cd, td_id: Identifier::td([7; 6]) };
        assert_eq!(
            fx.with_ctx(|ts, ctx| ts.handle(&msg, ctx)),
            ProtocolMessage::Err { code: ErrorCode::UnknownTd }
        );
    }

    #[test]
    fn add_owner_tickets_are_independent() {
        let mut fx = Fixture::new();
        let td_pair = fx.suite.generate_keypair(&mut fx.rng);
        let td = Identifier::td([2; 6]);
        fx.ts.register_td(td, td_pair.public);
        let pair = fx.suite.generate_keypair(&mut fx.rng);
        let cd = Identifier::cd([1; 6]);
        fx.ts.register_user("alice", "pw", cd, pair.public).unwrap();
        let token = fx.login("alice", "pw", &pair);
        let msg = ProtocolMessage::AddOwnerRequest { session: token, cd_id: cd, td_id: td };
        let ProtocolMessage::OwnershipTicket { ticket: t1 } = fx.with_ctx(|ts, ctx| ts.handle(&msg, ctx)) else {
            panic!()
        };
        let ProtocolMessage::OwnershipTicket { ticket: t2 } = fx.with_ctx(|ts, ctx| ts.handle(&msg, ctx)) else {
            panic!()
        };
        let p1 = fx.suite.asym_decrypt(&td_pair.private, &t1).unwrap();
        let p2 = fx.suite.asym_decrypt(&td_pair.private, &t2).unwrap();
        assert_eq!(p1.len(), NONCE_LEN + 32);
        assert_ne!(p1, p2, "fresh nonce and one-time key per request");
    }

    #[test]
    fn commit_owner_stranger_key_mismatch() {
        let mut fx = Fixture::new();
        let td_pair = fx.suite.generate_keypair(&mut fx.rng);
        let td = Identifier::td([2; 6]);
        fx.ts.register_td(td, td_pair.public);

        let attacker = fx.suite.generate_keypair(&mut fx.rng);
        let owner = fx.suite.generate_keypair(&mut fx.rng);
        let cd = Identifier::cd([1; 6]);
        fx.ts.register_user("eve", "pw", cd, attacker.public).unwrap();
        let token = fx.login("eve", "pw", &attacker);

        let msg = ProtocolMessage::AddOwnerRequest { session: token, cd_id: cd, td_id: td };
        let ProtocolMessage::OwnershipTicket { ticket } = fx.with_ctx(|ts, ctx| ts.handle(&msg, ctx)) else {
            panic!()
        };
        // Simulate the device embedding the real owner's key, as it does
        // for non-owners.
        let plain = fx.suite.asym_decrypt(&td_pair.private, &ticket).unwrap();
        let ot_k = SymmetricKey(plain[NONCE_LEN..].try_into().unwrap());
        let mut body = Vec::new();
        body.extend_from_slice(&owner.public.encode());
        body.extend_from_slice(&plain[..NONCE_LEN]);
        body.extend_from_slice(crate::crypto::fresh_nonce(&mut fx.rng).as_bytes());
        let proof = fx.suite.sym_encrypt(&ot_k, &body, &mut fx.rng);

        let commit = ProtocolMessage::CommitOwner { session: token, proof };
        let reply = fx.with_ctx(|ts, ctx| ts.handle(&commit, ctx));
        assert_eq!(reply, ProtocolMessage::Err { code: ErrorCode::KeyMismatch });
        assert!(!fx.ts.is_owner(cd, td));

        // Garbage afterwards: the pending entry was consumed.
        let garbage = ProtocolMessage::CommitOwner { session: token, proof: vec![0; 64] };
        let reply = fx.with_ctx(|ts, ctx| ts.handle(&garbage, ctx));
        assert_eq!(reply, ProtocolMessage::Err { code: ErrorCode::NoPendingRequest });
    }

    #[test]
    fn loc_update_request_validation() {
        let mut fx = Fixture::new();
        let td_pair = fx.suite.generate_keypair(&mut fx.rng);
        let td = Identifier::td([2; 6]);
        fx.ts.register_td(td, td_pair.public);
        let root = fx.root.clone();
        let attested = fx.suite.issue_attested_keypair(&root, "root", "tee", &mut fx.rng);

        // Valid attested key: grant issued, fresh nonces per request.
        let msg = ProtocolMessage::LocUpdateRequest {
            td_id: td,
            tpk: attested.pair.public,
            chain: attested.chain.clone(),
        };
        let ProtocolMessage::LocUpdateGrant { e_t: t1, .. } = fx.with_ctx(|ts, ctx| ts.handle(&msg, ctx))
        else {
            panic!()
        };
        let ProtocolMessage::LocUpdateGrant { e_t: t2, .. } = fx.with_ctx(|ts, ctx| ts.handle(&msg, ctx))
        else {
            panic!()
        };
        assert_eq!(fx.ts.pending_audit(0).0, 2, "independent pending entries");
        assert_ne!(
            fx.suite.asym_decrypt(&td_pair.private, &t1).unwrap(),
            fx.suite.asym_decrypt(&td_pair.private, &t2).unwrap()
        );

        // Chain under a rogue root.
        let rogue_root = fx.suite.generate_keypair(&mut fx.rng);
        let rogue = fx.suite.issue_attested_keypair(&rogue_root, "root", "tee", &mut fx.rng);
        let msg = ProtocolMessage::LocUpdateRequest {
            td_id: td,
            tpk: rogue.pair.public,
            chain: rogue.chain,
        };
        assert_eq!(
            fx.with_ctx(|ts, ctx| ts.handle(&msg, ctx)),
            ProtocolMessage::Err { code: ErrorCode::BadAttestation }
        );

        // Unknown device.
        let msg = ProtocolMessage::LocUpdateRequest {
            td_id: Identifier::td([9; 6]),
            tpk: attested.pair.public,
            chain: attested.chain,
        };
        assert_eq!(
            fx.with_ctx(|ts, ctx| ts.handle(&msg, ctx)),
            ProtocolMessage::Err { code: ErrorCode::UnknownTd }
        );
    }

    #[test]
    fn query_tokens_are_fresh_per_request() {
        let mut fx = Fixture::new();
        let td_pair = fx.suite.generate_keypair(&mut fx.rng);
        let td = Identifier::td([2; 6]);
        fx.ts.register_td(td, td_pair.public);
        let pair = fx.suite.generate_keypair(&mut fx.rng);
        let cd = Identifier::cd([1; 6]);
        fx.ts.register_user("alice", "pw", cd, pair.public).unwrap();
        let token = fx.login("alice", "pw", &pair);
        // Make alice an owner and store one opaque blob.
        fx.ts.ownership.entry(td).or_default().insert(cd);
        fx.ts.location_store.insert(td, (vec![0xee; 60], 0));

        let msg = ProtocolMessage::LocQueryRequest { session: token, td_id: td };
        let ProtocolMessage::LocQueryResponse { token: q1 } = fx.with_ctx(|ts, ctx| ts.handle(&msg, ctx))
        else {
            panic!()
        };
        let ProtocolMessage::LocQueryResponse { token: q2 } = fx.with_ctx(|ts, ctx| ts.handle(&msg, ctx))
        else {
            panic!()
        };
        // Same stored ciphertext, distinct tokens: nothing to compare
        // across queries.
        assert_ne!(q1, q2);
        let p1 = fx.suite.asym_decrypt(&pair.private, &q1).unwrap();
        let p2 = fx.suite.asym_decrypt(&pair.private, &q2).unwrap();
        assert_eq!(&p1[..60], &p2[..60]);
        assert_ne!(&p1[60..], &p2[60..], "fresh salt per token");
    }

    #[test]
    fn commit_at_expiry_boundary_reports_ticket_expired() {
        let mut fx = Fixture::new();
        let td_pair = fx.suite.generate_keypair(&mut fx.rng);
        let td = Identifier::td([2; 6]);
        fx.ts.register_td(td, td_pair.public);
        let pair = fx.suite.generate_keypair(&mut fx.rng);
        let cd = Identifier::cd([1; 6]);
        fx.ts.register_user("alice", "pw", cd, pair.public).unwrap();
        let token = fx.login("alice", "pw", &pair);
        let msg = ProtocolMessage::AddOwnerRequest { session: token, cd_id: cd, td_id: td };
        let ProtocolMessage::OwnershipTicket { ticket } = fx.with_ctx(|ts, ctx| ts.handle(&msg, ctx))
        else {
            panic!()
        };
        // Build a proof the device would have produced.
        let plain = fx.suite.asym_decrypt(&td_pair.private, &ticket).unwrap();
        let ot_k = SymmetricKey(plain[NONCE_LEN..].try_into().unwrap());
        let mut body = Vec::new();
        body.extend_from_slice(&pair.public.encode());
        body.extend_from_slice(&plain[..NONCE_LEN]);
        body.extend_from_slice(crate::crypto::fresh_nonce(&mut fx.rng).as_bytes());
        let proof = fx.suite.sym_encrypt(&ot_k, &body, &mut fx.rng);

        // Arrive exactly when the entry lapses, before the sweep runs.
        fx.step = fx.cfg.pending_budget;
        let commit = ProtocolMessage::CommitOwner { session: token, proof };
        assert_eq!(
            fx.with_ctx(|ts, ctx| ts.handle(&commit, ctx)),
            ProtocolMessage::Err { code: ErrorCode::TicketExpired }
        );
        assert!(!fx.ts.is_owner(cd, td));
    }

    #[test]
    fn pending_stores_expire() {
        let mut fx = Fixture::new();
        let td_pair = fx.suite.generate_keypair(&mut fx.rng);
        let td = Identifier::td([2; 6]);
        fx.ts.register_td(td, td_pair.public);
        let pair = fx.suite.generate_keypair(&mut fx.rng);
        let cd = Identifier::cd([1; 6]);
        fx.ts.register_user("alice", "pw", cd, pair.public).unwrap();
        let token = fx.login("alice", "pw", &pair);
        let msg = ProtocolMessage::AddOwnerRequest { session: token, cd_id: cd, td_id: td };
        fx.with_ctx(|ts, ctx| ts.handle(&msg, ctx));
        assert_eq!(fx.ts.pending_audit(fx.step).0, 1);
        let lapse = fx.cfg.pending_budget;
        fx.ts.on_step(lapse);
        assert_eq!(fx.ts.pending_audit(lapse), (0, 0));
    }
}
