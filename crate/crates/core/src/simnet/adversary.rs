//! Message-level adversary: records BLE traffic, replays, modifies,
//! drops, and injects, and can stand up mimic devices and rogue CDs.
//!
//! The adversary never holds device private keys, location keys, or TEE
//! internals; every power it has is a capability over bytes on the air.

use std::collections::VecDeque;

use crate::crypto::{AsymKeyPair, SymmetricKey};
use crate::ctx::NetCtx;
use crate::transcript::{ChannelId, Endpoint};
use crate::wire::{decode_message, encode_message, ErrorCode, ProtocolMessage};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Capabilities {
    pub snoop_ble: bool,
    pub replay: bool,
    pub modify: bool,
    pub inject: bool,
    pub run_rogue_cd: bool,
    pub run_mimic_td: bool,
}

impl Capabilities {
    pub fn all() -> Self {
        Capabilities {
            snoop_ble: true,
            replay: true,
            modify: true,
            inject: true,
            run_rogue_cd: true,
            run_mimic_td: true,
        }
    }

    pub fn parse_one(name: &str) -> Option<fn(&mut Capabilities)> {
        match name {
            "snoop_ble" => Some(|c| c.snoop_ble = true),
            "replay" => Some(|c| c.replay = true),
            "modify" => Some(|c| c.modify = true),
            "inject" => Some(|c| c.inject = true),
            "run_rogue_cd" => Some(|c| c.run_rogue_cd = true),
            "run_mimic_td" => Some(|c| c.run_mimic_td = true),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RecordedMessage {
    pub channel: ChannelId,
    pub sender: Endpoint,
    pub receiver: Endpoint,
    pub bytes: Vec<u8>,
    pub step: u64,
}

/// Byte mutations the adversary can apply in flight.
#[derive(Debug, Clone)]
pub enum Mutation {
    FlipByte(usize),
    /// Replace the encrypted-location field of a SignTokenResponse,
    /// leaving the proximity signature untouched.
    SwapSignTokenEl(Vec<u8>),
}

#[derive(Debug, Clone)]
enum PendingMod {
    DropNext { tag: u8 },
    ModifyNext { tag: u8, mutation: Mutation },
}

#[derive(Debug)]
pub(crate) struct Injection {
    pub channel: ChannelId,
    pub sender: Endpoint,
    pub receiver: Endpoint,
    pub bytes: Vec<u8>,
}

pub(crate) enum ModOutcome {
    Untouched,
    Modified,
    Dropped,
}

#[derive(Debug, Default)]
pub struct Adversary {
    pub caps: Capabilities,
    recorded: Vec<RecordedMessage>,
    mods: Vec<PendingMod>,
    injections: VecDeque<Injection>,
    pub intervention_log: Vec<String>,
}

impl Adversary {
    pub(crate) fn observe(&mut self, channel: ChannelId, sender: Endpoint, receiver: Endpoint, bytes: &[u8], step: u64) {
        if self.caps.snoop_ble && channel.is_ble() {
            self.recorded.push(RecordedMessage {
                channel,
                sender,
                receiver,
                bytes: bytes.to_vec(),
                step,
            });
        }
    }

    pub fn recorded(&self) -> &[RecordedMessage] {
        &self.recorded
    }

    pub fn last_recorded_with_tag(&self, tag: u8) -> Option<&RecordedMessage> {
        self.recorded.iter().rev().find(|r| r.bytes.first() == Some(&tag))
    }

    /// Queue a byte-exact replay of the last recorded message with `tag`
    /// onto its original channel, keeping the spoofed sender.
    pub fn replay_last(&mut self, tag: u8) -> Result<(), ErrorCode> {
        if !(self.caps.snoop_ble && self.caps.replay) {
            return Err(ErrorCode::UnexpectedMessage);
        }
        let rec = self
            .last_recorded_with_tag(tag)
            .cloned()
            .ok_or(ErrorCode::NoPendingRequest)?;
        self.intervention_log.push(format!("replay tag {tag:#04x} on {}", rec.channel.render()));
        self.injections.push_back(Injection {
            channel: rec.channel,
            sender: rec.sender,
            receiver: rec.receiver,
            bytes: rec.bytes,
        });
        Ok(())
    }

    /// Queue an adversary-originated message.
    pub fn inject(&mut self, channel: ChannelId, sender: Endpoint, receiver: Endpoint, bytes: Vec<u8>) -> Result<(), ErrorCode> {
        if !self.caps.inject {
            return Err(ErrorCode::UnexpectedMessage);
        }
        self.intervention_log.push(format!("inject on {}", channel.render()));
        self.injections.push_back(Injection { channel, sender, receiver, bytes });
        Ok(())
    }

    pub fn drop_next(&mut self, tag: u8) -> Result<(), ErrorCode> {
        if !self.caps.modify {
            return Err(ErrorCode::UnexpectedMessage);
        }
        self.mods.push(PendingMod::DropNext { tag });
        Ok(())
    }

    pub fn modify_next(&mut self, tag: u8, mutation: Mutation) -> Result<(), ErrorCode> {
        if !self.caps.modify {
            return Err(ErrorCode::UnexpectedMessage);
        }
        self.mods.push(PendingMod::ModifyNext { tag, mutation });
        Ok(())
    }

    pub(crate) fn take_injections(&mut self) -> Vec<Injection> {
        self.injections.drain(..).collect()
    }

    pub(crate) fn has_queued_injections(&self) -> bool {
        !self.injections.is_empty()
    }

    /// Apply the first matching one-shot intervention to an in-flight
    /// BLE message.
    pub(crate) fn apply_mods(&mut self, channel: ChannelId, bytes: &mut Vec<u8>) -> ModOutcome {
        if !channel.is_ble() {
            return ModOutcome::Untouched;
        }
        let tag = match bytes.first() {
            Some(t) => *t,
            None => return ModOutcome::Untouched,
        };
        let idx = self.mods.iter().position(|m| match m {
            PendingMod::DropNext { tag: t } | PendingMod::ModifyNext { tag: t, .. } => *t == tag,
        });
        let Some(idx) = idx else {
            return ModOutcome::Untouched;
        };
        match self.mods.remove(idx) {
            PendingMod::DropNext { .. } => {
                self.intervention_log.push(format!("drop tag {tag:#04x}"));
                ModOutcome::Dropped
            }
            PendingMod::ModifyNext { mutation, .. } => {
                self.intervention_log.push(format!("modify tag {tag:#04x}"));
                match mutation {
                    Mutation::FlipByte(offset) => {
                        let idx = offset.min(bytes.len().saturating_sub(1));
                        if let Some(byte) = bytes.get_mut(idx) {
                            *byte ^= 0x01;
                        }
                        ModOutcome::Modified
                    }
                    Mutation::SwapSignTokenEl(replacement) => match decode_message(bytes) {
                        Ok(ProtocolMessage::SignTokenResponse { s_t, .. }) => {
                            *bytes = encode_message(&ProtocolMessage::SignTokenResponse {
                                s_t,
                                e_l: replacement,
                            });
                            ModOutcome::Modified
                        }
                        _ => ModOutcome::Untouched,
                    },
                }
            }
        }
    }
}

/// An attacker-run fake device answering at a victim identity. It holds
/// its own keys only; producing a proximity signature that verifies under
/// the victim's registered key is exactly what it cannot do.
#[derive(Debug)]
pub struct MimicTd {
    keys: AsymKeyPair,
    sym_key: SymmetricKey,
}

impl MimicTd {
    pub fn new(keys: AsymKeyPair, sym_key: SymmetricKey) -> Self {
        MimicTd { keys, sym_key }
    }

    pub fn handle(&mut self, msg: &ProtocolMessage, ctx: &mut NetCtx) -> Option<ProtocolMessage> {
        match msg {
            ProtocolMessage::SignTokenRequest { loc, n_c, .. } => {
                // Cannot decrypt the device nonce; guess and sign with the
                // wrong key, which is the best any mimic can do.
                let guess = ctx.fresh_nonce();
                let mut nonces = Vec::with_capacity(32);
                nonces.extend_from_slice(guess.as_bytes());
                nonces.extend_from_slice(n_c.as_bytes());
                let s_t = ctx.sign(&self.keys.private, &nonces);
                let n_l = ctx.fresh_nonce();
                let mut body = Vec::with_capacity(32);
                body.extend_from_slice(&loc.encode());
                body.extend_from_slice(n_l.as_bytes());
                let e_l = ctx.sym_encrypt(&self.sym_key, &body);
                Some(ProtocolMessage::SignTokenResponse { s_t, e_l })
            }
            ProtocolMessage::RingRequest { .. } => {
                let nonce = ctx.fresh_nonce();
                Some(ProtocolMessage::RingChallenge { nonce })
            }
            ProtocolMessage::BaselineRing => Some(ProtocolMessage::Ack),
            _ => Some(ProtocolMessage::Err { code: ErrorCode::UnexpectedMessage }),
        }
    }
}
