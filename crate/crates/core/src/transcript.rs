//! Ordered record of every message the simulated world carried, whether
//! delivered, dropped, or injected. Condition checkers and the adversary
//! both consume it; attack witnesses serialize slices of it.

use crate::wire::{decode_message, Identifier, ProtocolMessage};

/// One logical link in the world: a BLE pairing between a CD and a TD,
/// or an authenticated channel from a principal to the tracking service.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ChannelId {
    Ble { cd: Identifier, td: Identifier },
    Ts { principal: Identifier },
}

impl ChannelId {
    pub fn is_ble(&self) -> bool {
        matches!(self, ChannelId::Ble { .. })
    }

    pub fn render(&self) -> String {
        match self {
            ChannelId::Ble { cd, td } => format!("ble:{}<->{}", cd.mac_string(), td.mac_string()),
            ChannelId::Ts { principal } => format!("ts:{}", principal.mac_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Endpoint {
    Td(Identifier),
    Cd(Identifier),
    Ts,
    Adversary,
}

impl Endpoint {
    pub fn render(&self) -> String {
        match self {
            Endpoint::Td(id) => format!("td:{}", id.mac_string()),
            Endpoint::Cd(id) => format!("cd:{}", id.mac_string()),
            Endpoint::Ts => "ts".to_string(),
            Endpoint::Adversary => "adversary".to_string(),
        }
    }
}

/// What happened to a message at its delivery step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Disposition {
    Delivered,
    /// Delivered after the adversary altered the bytes.
    ModifiedByAdversary,
    /// Originated by the adversary (injected or replayed), then delivered.
    InjectedByAdversary,
    DroppedByAdversary,
    DroppedOutOfProximity,
}

impl Disposition {
    fn code(&self) -> u8 {
        match self {
            Disposition::Delivered => 0,
            Disposition::ModifiedByAdversary => 1,
            Disposition::InjectedByAdversary => 2,
            Disposition::DroppedByAdversary => 3,
            Disposition::DroppedOutOfProximity => 4,
        }
    }

    pub fn is_delivered(&self) -> bool {
        matches!(
            self,
            Disposition::Delivered | Disposition::ModifiedByAdversary | Disposition::InjectedByAdversary
        )
    }

    pub fn render(&self) -> &'static str {
        match self {
            Disposition::Delivered => "delivered",
            Disposition::ModifiedByAdversary => "modified",
            Disposition::InjectedByAdversary => "injected",
            Disposition::DroppedByAdversary => "dropped/adversary",
            Disposition::DroppedOutOfProximity => "dropped/proximity",
        }
    }
}

#[derive(Debug, Clone)]
pub struct TranscriptEntry {
    /// Strictly increasing event index.
    pub seq: u64,
    /// Scheduler step at which the event fired.
    pub step: u64,
    pub channel: ChannelId,
    pub sender: Endpoint,
    pub receiver: Endpoint,
    pub bytes: Vec<u8>,
    pub disposition: Disposition,
    /// Set when the bytes no longer parse as a protocol message.
    pub mangled: bool,
}

impl TranscriptEntry {
    pub fn message(&self) -> Option<ProtocolMessage> {
        decode_message(&self.bytes).ok()
    }
}

#[derive(Debug, Clone, Default)]
pub struct Transcript {
    entries: Vec<TranscriptEntry>,
}

impl Transcript {
    pub fn record(
        &mut self,
        step: u64,
        channel: ChannelId,
        sender: Endpoint,
        receiver: Endpoint,
        bytes: Vec<u8>,
        disposition: Disposition,
    ) {
        let mangled = decode_message(&bytes).is_err();
        self.entries.push(TranscriptEntry {
            seq: self.entries.len() as u64,
            step,
            channel,
            sender,
            receiver,
            bytes,
            disposition,
            mangled,
        });
    }

    pub fn entries(&self) -> &[TranscriptEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries recorded at or after `seq`, e.g. everything since a marker
    /// taken with [`Transcript::len`].
    pub fn since(&self, seq: usize) -> &[TranscriptEntry] {
        &self.entries[seq.min(self.entries.len())..]
    }

    pub fn dropped_count(&self) -> usize {
        self.entries.iter().filter(|e| !e.disposition.is_delivered()).count()
    }

    /// True if `needle` occurs as a byte substring of any entry.
    pub fn contains_bytes(&self, needle: &[u8]) -> bool {
        self.entries.iter().any(|e| contains(&e.bytes, needle))
    }

    pub fn last_delivered_matching<F>(&self, pred: F) -> Option<&TranscriptEntry>
    where
        F: Fn(&ProtocolMessage) -> bool,
    {
        self.entries
            .iter()
            .rev()
            .filter(|e| e.disposition.is_delivered())
            .find(|e| e.message().map(|m| pred(&m)).unwrap_or(false))
    }

    /// Canonical binary serialization, stable across runs with one seed.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(b"SCRT");
        out.extend_from_slice(&(self.entries.len() as u64).to_be_bytes());
        for e in &self.entries {
            out.extend_from_slice(&e.seq.to_be_bytes());
            out.extend_from_slice(&e.step.to_be_bytes());
            match e.channel {
                ChannelId::Ble { cd, td } => {
                    out.push(0);
                    push_id(&mut out, &cd);
                    push_id(&mut out, &td);
                }
                ChannelId::Ts { principal } => {
                    out.push(1);
                    push_id(&mut out, &principal);
                }
            }
            push_endpoint(&mut out, &e.sender);
            push_endpoint(&mut out, &e.receiver);
            out.push(e.disposition.code());
            out.push(e.mangled as u8);
            out.extend_from_slice(&(e.bytes.len() as u32).to_be_bytes());
            out.extend_from_slice(&e.bytes);
        }
        out
    }

    /// Human-readable rendering used in run reports.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            let what = match e.message() {
                Some(msg) => msg.tag_name().to_string(),
                None => format!("<mangled {} bytes>", e.bytes.len()),
            };
            out.push_str(&format!(
                "{:>5} step {:>5}  {:<28} {} -> {}  {} [{}]\n",
                e.seq,
                e.step,
                e.channel.render(),
                e.sender.render(),
                e.receiver.render(),
                what,
                e.disposition.render(),
            ));
        }
        out
    }
}

fn push_id(out: &mut Vec<u8>, id: &Identifier) {
    out.push(match id.kind {
        crate::wire::IdKind::Td => 0,
        crate::wire::IdKind::Cd => 1,
    });
    out.extend_from_slice(&id.bytes);
}

fn push_endpoint(out: &mut Vec<u8>, ep: &Endpoint) {
    match ep {
        Endpoint::Td(id) => {
            out.push(0);
            push_id(out, id);
        }
        Endpoint::Cd(id) => {
            out.push(1);
            push_id(out, id);
        }
        Endpoint::Ts => out.push(2),
        Endpoint::Adversary => out.push(3),
    }
}

/// Byte-substring search used by transcript and breach-dump scans.
pub fn contains(haystack: &[u8], needle: &[u8]) -> bool {
    if needle.is_empty() || haystack.len() < needle.len() {
        return false;
    }
    haystack.windows(needle.len()).any(|w| w == needle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wire::{encode_message, ProtocolMessage};

    fn channel() -> ChannelId {
        ChannelId::Ble {
            cd: Identifier::cd([1; 6]),
            td: Identifier::td([2; 6]),
        }
    }

    #[test]
    fn seq_strictly_increases() {
        let mut t = Transcript::default();
        for _ in 0..5 {
            t.record(
                0,
                channel(),
                Endpoint::Cd(Identifier::cd([1; 6])),
                Endpoint::Td(Identifier::td([2; 6])),
                encode_message(&ProtocolMessage::Ack),
                Disposition::Delivered,
            );
        }
        let seqs: Vec<u64> = t.entries().iter().map(|e| e.seq).collect();
        assert!(seqs.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn mangled_flagging() {
        let mut t = Transcript::default();
        t.record(
            0,
            channel(),
            Endpoint::Adversary,
            Endpoint::Td(Identifier::td([2; 6])),
            vec![0xff, 0xff],
            Disposition::InjectedByAdversary,
        );
        assert!(t.entries()[0].mangled);
    }

    #[test]
    fn substring_scan() {
        let mut t = Transcript::default();
        t.record(
            0,
            channel(),
            Endpoint::Cd(Identifier::cd([1; 6])),
            Endpoint::Td(Identifier::td([2; 6])),
            vec![1, 2, 3, 4, 5],
            Disposition::Delivered,
        );
        assert!(t.contains_bytes(&[2, 3, 4]));
        assert!(!t.contains_bytes(&[3, 2]));
    }
}
