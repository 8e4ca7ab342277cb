//! TrackR-style baseline system: trackerid-based claims with no device
//! round trip, unauthenticated plaintext location updates, and a device
//! that rings for anyone in BLE range.
//!
//! The REST endpoints of the real service map one-to-one onto these
//! messages (see the README table); transport syntax aside, the missing
//! checks are preserved faithfully because their absence is the point.

use std::collections::{BTreeMap, BTreeSet};

use rand::RngCore;

use crate::crypto::sha256;
use crate::ctx::NetCtx;
use crate::transcript::Endpoint;
use crate::wire::{
    ErrorCode, Identifier, LocationFix, ProtocolMessage, SessionToken, SESSION_TOKEN_LEN,
};

/// A baseline tracker: broadcasts its MAC, keeps no owner table.
#[derive(Debug)]
pub struct BaselineTd {
    id: Identifier,
    ring_log: Vec<u64>,
}

impl BaselineTd {
    pub fn new(id: Identifier) -> Self {
        BaselineTd { id, ring_log: Vec::new() }
    }

    pub fn id(&self) -> Identifier {
        self.id
    }

    pub fn trackerid(&self) -> String {
        crate::wire::derive_trackerid(&self.id.bytes)
    }

    pub fn ring_count(&self) -> usize {
        self.ring_log.len()
    }

    pub fn handle(&mut self, msg: &ProtocolMessage, ctx: &mut NetCtx) -> ProtocolMessage {
        match msg {
            // No owner check of any kind: anyone in range can ring.
            ProtocolMessage::BaselineRing => {
                self.ring_log.push(ctx.step);
                ProtocolMessage::Ack
            }
            _ => ProtocolMessage::Err { code: ErrorCode::UnexpectedMessage },
        }
    }
}

#[derive(Debug, Clone)]
struct BaselineAccount {
    password_hash: [u8; 32],
}

/// The baseline service: token-authenticated claims and queries, open
/// location updates, everything stored in plaintext.
#[derive(Debug, Default)]
pub struct BaselineTs {
    accounts: BTreeMap<String, BaselineAccount>,
    tokens: BTreeMap<[u8; SESSION_TOKEN_LEN], String>,
    items: BTreeMap<String, BTreeSet<String>>,
    locations: BTreeMap<String, (LocationFix, u64)>,
}

impl BaselineTs {
    pub fn new() -> Self {
        BaselineTs::default()
    }

    pub fn register_user(&mut self, username: &str, password: &str) -> Result<(), ErrorCode> {
        if self.accounts.contains_key(username) {
            return Err(ErrorCode::AccountExists);
        }
        self.accounts.insert(
            username.to_string(),
            BaselineAccount { password_hash: sha256(&[b"baseline-pw", password.as_bytes()]) },
        );
        Ok(())
    }

    pub fn login(&mut self, username: &str, password: &str, ctx: &mut NetCtx) -> Result<SessionToken, ErrorCode> {
        let account = self.accounts.get(username).ok_or(ErrorCode::BadCredentials)?;
        if account.password_hash != sha256(&[b"baseline-pw", password.as_bytes()]) {
            return Err(ErrorCode::BadCredentials);
        }
        self.tokens.retain(|_, user| user != username);
        let mut token = [0u8; SESSION_TOKEN_LEN];
        ctx.rng.fill_bytes(&mut token);
        self.tokens.insert(token, username.to_string());
        Ok(SessionToken(token))
    }

    fn user_of(&self, token: &SessionToken) -> Option<&str> {
        self.tokens.get(&token.0).map(String::as_str)
    }

    pub fn is_claimed_by(&self, username: &str, trackerid: &str) -> bool {
        self.items.get(username).is_some_and(|set| set.contains(trackerid))
    }

    pub fn stored_location(&self, trackerid: &str) -> Option<(LocationFix, u64)> {
        self.locations.get(trackerid).copied()
    }

    pub fn location_store_len(&self) -> usize {
        self.locations.len()
    }

    /// Plaintext state dump; the baseline has nothing to hide it behind.
    pub fn breach_dump(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(b"BASEDUMP");
        for (trackerid, (loc, step)) in &self.locations {
            out.extend_from_slice(&(trackerid.len() as u16).to_be_bytes());
            out.extend_from_slice(trackerid.as_bytes());
            out.extend_from_slice(&loc.encode());
            out.extend_from_slice(&step.to_be_bytes());
        }
        out
    }

    pub fn handle(&mut self, msg: &ProtocolMessage, ctx: &mut NetCtx) -> ProtocolMessage {
        match msg {
            ProtocolMessage::BaselineClaim { token, trackerid } => match self.user_of(token) {
                Some(user) => {
                    // No device round trip, no pairing proof: knowing the
                    // trackerid string is enough, and several accounts may
                    // claim the same one.
                    let user = user.to_string();
                    self.items.entry(user).or_default().insert(trackerid.clone());
                    ProtocolMessage::Ack
                }
                None => ProtocolMessage::Err { code: ErrorCode::Unauthenticated },
            },
            ProtocolMessage::BaselineUpdate { trackerid, loc } => {
                // Stored verbatim for any sender, claimed or not.
                self.locations.insert(trackerid.clone(), (*loc, ctx.step));
                ProtocolMessage::Ack
            }
            ProtocolMessage::BaselineQuery { token } => match self.user_of(token) {
                Some(user) => {
                    let items = self
                        .items
                        .get(user)
                        .map(|set| {
                            set.iter()
                                .filter_map(|id| {
                                    self.locations.get(id).map(|(loc, _)| (id.clone(), *loc))
                                })
                                .collect()
                        })
                        .unwrap_or_default();
                    ProtocolMessage::BaselineQueryResponse { items }
                }
                None => ProtocolMessage::Err { code: ErrorCode::Unauthenticated },
            },
            _ => ProtocolMessage::Err { code: ErrorCode::UnexpectedMessage },
        }
    }
}

/// Flows the baseline app can run.
#[derive(Debug, Clone)]
pub enum BaselineFlowSpec {
    Claim { trackerid: String },
    Update { trackerid: String, loc: LocationFix },
    Query,
    Ring { td: Identifier },
}

#[derive(Debug)]
enum BaselineActive {
    AwaitAck,
    AwaitItems,
}

/// Result of a finished baseline flow.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BaselineResult {
    Ok,
    Items(Vec<(String, LocationFix)>),
    Failed(ErrorCode),
    Stalled,
}

impl BaselineResult {
    pub fn is_ok(&self) -> bool {
        matches!(self, BaselineResult::Ok | BaselineResult::Items(_))
    }
}

#[derive(Debug)]
pub struct BaselineCd {
    id: Identifier,
    token: Option<SessionToken>,
    active: Option<BaselineActive>,
    outcome: Option<BaselineResult>,
}

impl BaselineCd {
    pub fn new(id: Identifier) -> Self {
        BaselineCd { id, token: None, active: None, outcome: None }
    }

    pub fn id(&self) -> Identifier {
        self.id
    }

    pub fn token(&self) -> Option<SessionToken> {
        self.token
    }

    pub(crate) fn set_token(&mut self, token: Option<SessionToken>) {
        self.token = token;
    }

    pub fn is_busy(&self) -> bool {
        self.active.is_some()
    }

    pub fn take_outcome(&mut self) -> Option<BaselineResult> {
        self.outcome.take()
    }

    pub(crate) fn fail_active(&mut self, code: ErrorCode) {
        if self.active.take().is_some() {
            self.outcome = Some(BaselineResult::Failed(code));
        }
    }

    pub(crate) fn resolve_stalled(&mut self) {
        if self.active.take().is_some() {
            self.outcome = Some(BaselineResult::Stalled);
        }
    }

    pub(crate) fn start_flow(&mut self, spec: BaselineFlowSpec) -> Result<Vec<(Endpoint, ProtocolMessage)>, ErrorCode> {
        if self.active.is_some() {
            return Err(ErrorCode::Busy);
        }
        self.outcome = None;
        match spec {
            BaselineFlowSpec::Claim { trackerid } => {
                let token = self.token.ok_or(ErrorCode::Unauthenticated)?;
                self.active = Some(BaselineActive::AwaitAck);
                Ok(vec![(Endpoint::Ts, ProtocolMessage::BaselineClaim { token, trackerid })])
            }
            BaselineFlowSpec::Update { trackerid, loc } => {
                self.active = Some(BaselineActive::AwaitAck);
                Ok(vec![(Endpoint::Ts, ProtocolMessage::BaselineUpdate { trackerid, loc })])
            }
            BaselineFlowSpec::Query => {
                let token = self.token.ok_or(ErrorCode::Unauthenticated)?;
                self.active = Some(BaselineActive::AwaitItems);
                Ok(vec![(Endpoint::Ts, ProtocolMessage::BaselineQuery { token })])
            }
            BaselineFlowSpec::Ring { td } => {
                self.active = Some(BaselineActive::AwaitAck);
                Ok(vec![(Endpoint::Td(td), ProtocolMessage::BaselineRing)])
            }
        }
    }

    pub(crate) fn on_message(&mut self, msg: &ProtocolMessage) -> Vec<(Endpoint, ProtocolMessage)> {
        let Some(active) = self.active.take() else {
            return Vec::new();
        };
        self.outcome = Some(match (active, msg) {
            (_, ProtocolMessage::Err { code }) => BaselineResult::Failed(*code),
            (BaselineActive::AwaitAck, ProtocolMessage::Ack) => BaselineResult::Ok,
            (BaselineActive::AwaitItems, ProtocolMessage::BaselineQueryResponse { items }) => {
                BaselineResult::Items(items.clone())
            }
            (active, _) => {
                self.active = Some(active);
                self.outcome.take().unwrap_or(BaselineResult::Stalled);
                return Vec::new();
            }
        });
        Vec::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{BackendKind, CryptoSuite};
    use crate::ctx::{Directory, Meter, NetCtx, RoleKind};
    use crate::sut::WorldConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn with_ctx<T>(f: impl FnOnce(&mut NetCtx) -> T) -> T {
        let suite = CryptoSuite::toy();
        let cfg = WorldConfig::with_backend(BackendKind::Toy);
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let mut meter = Meter::default();
        let directory = Directory::default();
        let root = suite.generate_keypair(&mut rng);
        let mut ctx = NetCtx {
            step: 0,
            role: RoleKind::Ts,
            suite,
            cfg: &cfg,
            directory: &directory,
            attestation_root_pk: root.public,
            rng: &mut rng,
            meter: &mut meter,
        };
        f(&mut ctx)
    }

    #[test]
    fn claim_requires_login_only() {
        with_ctx(|ctx| {
            let mut ts = BaselineTs::new();
            ts.register_user("eve", "pw").unwrap();
            let token = ts.login("eve", "pw", ctx).unwrap();
            // Tracker never seen, never contacted.
            let reply = ts.handle(
                &ProtocolMessage::BaselineClaim { token, trackerid: "0000b73a-11441b00".into() },
                ctx,
            );
            assert_eq!(reply, ProtocolMessage::Ack);
            assert!(ts.is_claimed_by("eve", "0000b73a-11441b00"));

            let bogus = SessionToken([9; 16]);
            let reply = ts.handle(
                &ProtocolMessage::BaselineClaim { token: bogus, trackerid: "x".into() },
                ctx,
            );
            assert_eq!(reply, ProtocolMessage::Err { code: ErrorCode::Unauthenticated });
        });
    }

    #[test]
    fn multi_owner_claims_allowed() {
        with_ctx(|ctx| {
            let mut ts = BaselineTs::new();
            ts.register_user("a", "pw").unwrap();
            ts.register_user("b", "pw").unwrap();
            let ta = ts.login("a", "pw", ctx).unwrap();
            let tb = ts.login("b", "pw", ctx).unwrap();
            for token in [ta, tb] {
                let reply = ts.handle(
                    &ProtocolMessage::BaselineClaim { token, trackerid: "id".into() },
                    ctx,
                );
                assert_eq!(reply, ProtocolMessage::Ack);
            }
            assert!(ts.is_claimed_by("a", "id") && ts.is_claimed_by("b", "id"));
        });
    }

    #[test]
    fn update_is_open_and_verbatim() {
        with_ctx(|ctx| {
            let mut ts = BaselineTs::new();
            let loc = LocationFix::from_degrees(1.0, 2.0, 3).unwrap();
            // Never claimed, no token, spoofed coordinates: stored anyway.
            let reply = ts.handle(
                &ProtocolMessage::BaselineUpdate { trackerid: "ghost".into(), loc },
                ctx,
            );
            assert_eq!(reply, ProtocolMessage::Ack);
            assert_eq!(ts.stored_location("ghost"), Some((loc, 0)));
        });
    }

    #[test]
    fn query_scopes_to_claimed_items() {
        with_ctx(|ctx| {
            let mut ts = BaselineTs::new();
            ts.register_user("a", "pw").unwrap();
            let token = ts.login("a", "pw", ctx).unwrap();
            let reply = ts.handle(&ProtocolMessage::BaselineQuery { token }, ctx);
            assert_eq!(reply, ProtocolMessage::BaselineQueryResponse { items: vec![] });

            let loc = LocationFix::from_degrees(4.0, 5.0, 6).unwrap();
            ts.handle(&ProtocolMessage::BaselineClaim { token, trackerid: "id".into() }, ctx);
            ts.handle(&ProtocolMessage::BaselineUpdate { trackerid: "id".into(), loc }, ctx);
            ts.handle(&ProtocolMessage::BaselineUpdate { trackerid: "other".into(), loc }, ctx);
            let reply = ts.handle(&ProtocolMessage::BaselineQuery { token }, ctx);
            assert_eq!(
                reply,
                ProtocolMessage::BaselineQueryResponse { items: vec![("id".into(), loc)] }
            );
        });
    }

    #[test]
    fn td_rings_for_anyone() {
        with_ctx(|ctx| {
            let mut td = BaselineTd::new(Identifier::td([1; 6]));
            assert_eq!(td.handle(&ProtocolMessage::BaselineRing, ctx), ProtocolMessage::Ack);
            assert_eq!(td.ring_count(), 1);
        });
    }
}
