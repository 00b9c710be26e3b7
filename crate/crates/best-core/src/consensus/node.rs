//! Message-driven RSU node state machine.
//!
//! Every RSU consumes an ordered inbox of messages and timers and emits
//! outbound messages; all interaction flows through the netsim scheduler, so
//! the whole system is a pure function of (config, seed, fault script).
//!
//! Round pacing: round k's proposal fires at (k + 0.5) s and its deadline at
//! (k + 1.5) s, one round per block interval. The half-second offset leaves
//! room for record delivery ahead of the proposal.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{
    apply_penalty, finality_reached, finality_unreachable, replace_member, settle_round, Committee,
    ConsensusError, MisbehaviorTracker, RewardConfig, RoundEvents, RoundOutcome, RoundState,
    StakePool, TokenLedger, ValidationReply,
};
use crate::crypto::{self, Digest, Identity, PrivateKey, PublicKey, Signature};
use crate::ledger::{build_block, validate_block, AdmissionVerdict, Block, Chain, Transaction};
use crate::netsim::NodeId;
use crate::telemetry::StatusRecord;

#[derive(Clone, Debug, PartialEq)]
pub enum Msg {
    /// Vehicle -> nearest RSU (data plane).
    Submit(StatusRecord),
    /// RSU -> every CRN (data plane).
    Forward(StatusRecord),
    Propose {
        round: u64,
        block: Block,
    },
    Reply {
        round: u64,
        reply: ValidationReply,
    },
    /// Second broadcast: the finalized block plus its approval certificate.
    Announce {
        round: u64,
        block: Block,
        cert: Vec<ValidationReply>,
    },
    /// A validator's signed rejection, gossiped so every RSU can attribute
    /// invalid proposals consistently.
    Accuse {
        round: u64,
        producer: u32,
        reply: ValidationReply,
    },
    /// Two producer-signed headers for the same round with different digests.
    EquivocationProof {
        round: u64,
        producer: u32,
        first: (Digest, Signature),
        second: (Digest, Signature),
    },
}

impl Msg {
    /// Signaling messages are the consensus-overhead counters; record
    /// submission and forwarding are data-plane traffic.
    pub fn is_signaling(&self) -> bool {
        !matches!(self, Msg::Submit(_) | Msg::Forward(_))
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Msg::Submit(_) => "submit",
            Msg::Forward(_) => "forward",
            Msg::Propose { .. } => "propose",
            Msg::Reply { .. } => "reply",
            Msg::Announce { .. } => "announce",
            Msg::Accuse { .. } => "accuse",
            Msg::EquivocationProof { .. } => "equivocation_proof",
        }
    }

    pub fn round(&self) -> Option<u64> {
        match self {
            Msg::Submit(_) | Msg::Forward(_) => None,
            Msg::Propose { round, .. }
            | Msg::Reply { round, .. }
            | Msg::Announce { round, .. }
            | Msg::Accuse { round, .. }
            | Msg::EquivocationProof { round, .. } => Some(*round),
        }
    }
}

/// Timer tags: two per round.
pub const TIMER_ROUND_START: u64 = 0;
pub const TIMER_ROUND_DEADLINE: u64 = 1;

pub fn timer_tag(kind: u64, round: u64) -> u64 {
    round * 2 + kind
}

pub fn timer_kind(tag: u64) -> (u64, u64) {
    (tag % 2, tag / 2)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ByzMode {
    /// Never sends anything.
    Silent,
    /// Votes false on every proposal and accuses honest producers.
    RejectAll,
    /// Votes true on anything, including invalid blocks.
    ApproveAll,
    /// Proposes blocks with a corrupted transaction root.
    InvalidProposer,
    /// Signs two different blocks for its round and splits them among the
    /// validators.
    Equivocator,
}

impl ByzMode {
    pub fn from_code(code: u32) -> Option<ByzMode> {
        Some(match code {
            1 => ByzMode::Silent,
            2 => ByzMode::RejectAll,
            3 => ByzMode::ApproveAll,
            4 => ByzMode::InvalidProposer,
            5 => ByzMode::Equivocator,
            _ => return None,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeMode {
    Honest,
    Crashed,
    Byzantine(ByzMode),
}

/// Static, shared consensus parameters every node derives its state from.
#[derive(Clone, Debug)]
pub struct NetContext {
    pub committee_size: u32,
    pub rsu_count: u32,
    pub pool: StakePool,
    pub rewards: RewardConfig,
    pub round_interval_us: u64,
    /// Verification keys of all RSUs, indexed by RSU id.
    pub rsu_keys: Vec<PublicKey>,
}

impl NetContext {
    pub fn fault_tolerance(&self) -> u32 {
        (self.committee_size - 1) / 3
    }
}

#[derive(Clone, Debug, Default)]
struct RoundView {
    producer: Option<u32>,
    /// First producer-signed header seen (for equivocation detection).
    seen_header: Option<(Digest, Signature)>,
    equivocation: bool,
    accusers: BTreeSet<PublicKey>,
    finalized: Option<Digest>,
    proposal_seen: bool,
}

pub struct RsuNode {
    pub index: u32,
    pub identity: Identity,
    key: PrivateKey,
    pub chain: Chain,
    pub mode: NodeMode,
    pub committee: Committee,
    epoch_start_round: u64,
    pub tracker: MisbehaviorTracker,
    pub tokens: TokenLedger,
    pending: Vec<Transaction>,
    pending_digests: BTreeSet<Digest>,
    /// Producer-side state for rounds this node leads.
    rounds: BTreeMap<u64, RoundState>,
    views: BTreeMap<u64, RoundView>,
    replied: BTreeSet<u64>,
    /// Unique admission verdicts observed while collecting records.
    pub verdicts: BTreeMap<Digest, AdmissionVerdict>,
    /// Concluded rounds, for experiment metrics.
    pub round_log: Vec<RoundEvents>,
}

type Outbound = Vec<(NodeId, Msg)>;

impl RsuNode {
    pub fn new(
        index: u32,
        identity: Identity,
        key: PrivateKey,
        chain: Chain,
        committee: Committee,
    ) -> RsuNode {
        RsuNode {
            index,
            identity,
            key,
            chain,
            mode: NodeMode::Honest,
            committee,
            epoch_start_round: 0,
            tracker: MisbehaviorTracker::default(),
            tokens: TokenLedger::default(),
            pending: Vec::new(),
            pending_digests: BTreeSet::new(),
            rounds: BTreeMap::new(),
            views: BTreeMap::new(),
            replied: BTreeSet::new(),
            verdicts: BTreeMap::new(),
            round_log: Vec::new(),
        }
    }

    pub fn producer_of(&self, round: u64) -> u32 {
        self.committee.producer_for(round - self.epoch_start_round)
    }

    fn is_crn(&self) -> bool {
        self.committee.is_crn(self.index)
    }

    fn view(&mut self, round: u64) -> &mut RoundView {
        self.views.entry(round).or_default()
    }

    fn other_rsus(&self, ctx: &NetContext) -> impl Iterator<Item = u32> + '_ {
        let me = self.index;
        (0..ctx.rsu_count).filter(move |i| *i != me)
    }

    fn validators_of(&self, round: u64) -> Vec<u32> {
        let producer = self.producer_of(round);
        self.committee
            .crns
            .iter()
            .copied()
            .filter(|c| *c != producer)
            .collect()
    }

    pub fn handle_message(&mut self, ctx: &NetContext, _from: NodeId, msg: Msg) -> Outbound {
        if self.mode == NodeMode::Crashed {
            return Vec::new();
        }
        match msg {
            Msg::Submit(record) => self.on_submit(record),
            Msg::Forward(record) => self.on_forward(record),
            Msg::Propose { round, block } => self.on_propose(ctx, round, block),
            Msg::Reply { round, reply } => self.on_reply(ctx, round, reply),
            Msg::Announce { round, block, cert } => self.on_announce(ctx, round, block, cert),
            Msg::Accuse { round, reply, .. } => {
                self.on_accuse(ctx, round, reply);
                Vec::new()
            }
            Msg::EquivocationProof { round, producer, first, second } => {
                self.on_equivocation_proof(ctx, round, producer, first, second);
                Vec::new()
            }
        }
    }

    pub fn handle_timer(&mut self, ctx: &NetContext, tag: u64) -> Outbound {
        if self.mode == NodeMode::Crashed {
            return Vec::new();
        }
        let (kind, round) = timer_kind(tag);
        match kind {
            TIMER_ROUND_START => self.on_round_start(ctx, round),
            TIMER_ROUND_DEADLINE => self.on_round_deadline(ctx, round),
            _ => Vec::new(),
        }
    }

    /// An RSU relays each record it collects to every current CRN.
    fn on_submit(&mut self, record: StatusRecord) -> Outbound {
        self.committee
            .crns
            .iter()
            .map(|c| (NodeId::Rsu(*c), Msg::Forward(record)))
            .collect()
    }

    fn on_forward(&mut self, record: StatusRecord) -> Outbound {
        if !self.is_crn() {
            return Vec::new();
        }
        let tx = Transaction::new(record);
        if self.pending_digests.contains(&tx.digest) {
            return Vec::new();
        }
        let verdict = self.chain.admission_check(&record);
        self.verdicts.insert(tx.digest, verdict);
        if verdict == AdmissionVerdict::Admit {
            self.pending_digests.insert(tx.digest);
            self.pending.push(tx);
        }
        Vec::new()
    }

    /// Build and broadcast this round's block. Errors with NotYourTurn when
    /// the caller is not the scheduled producer.
    pub fn propose(&mut self, _ctx: &NetContext, round: u64) -> Result<Outbound, ConsensusError> {
        if self.producer_of(round) != self.index {
            return Err(ConsensusError::NotYourTurn);
        }
        // Drop pending txs that stopped being admissible against the current
        // chain (e.g. superseded after an abort), respecting in-block order.
        let admissible = self.admissible_pending();
        let parent = self.chain.tip().clone();
        let (block, _spill) = build_block(&admissible, &parent, round + 1, &self.key)
            .expect("oversized transaction");

        let mut state = RoundState::new(round, self.index);
        state.proposed = Some(block.clone());
        self.rounds.insert(round, state);
        self.view(round).proposal_seen = true;

        let mut out: Outbound = Vec::new();
        match self.mode {
            NodeMode::Byzantine(ByzMode::Silent) => {}
            NodeMode::Byzantine(ByzMode::InvalidProposer) => {
                let mut bad = block.clone();
                bad.tx_root.0[0] ^= 0xff;
                bad.producer_signature = crypto::sign(&bad.header_digest().0, &self.key);
                if let Some(st) = self.rounds.get_mut(&round) {
                    st.proposed = Some(bad.clone());
                }
                for v in self.validators_of(round) {
                    out.push((NodeId::Rsu(v), Msg::Propose { round, block: bad.clone() }));
                }
            }
            NodeMode::Byzantine(ByzMode::Equivocator) => {
                let mut twin = block.clone();
                twin.timestamp += 1;
                twin.producer_signature = crypto::sign(&twin.header_digest().0, &self.key);
                let validators = self.validators_of(round);
                for (i, v) in validators.iter().enumerate() {
                    let b = if i % 2 == 0 { block.clone() } else { twin.clone() };
                    out.push((NodeId::Rsu(*v), Msg::Propose { round, block: b }));
                }
            }
            _ => {
                for v in self.validators_of(round) {
                    out.push((NodeId::Rsu(v), Msg::Propose { round, block: block.clone() }));
                }
            }
        }
        Ok(out)
    }

    fn admissible_pending(&self) -> Vec<Transaction> {
        let mut seen: BTreeMap<PublicKey, StatusRecord> = BTreeMap::new();
        let mut keep = Vec::new();
        for tx in &self.pending {
            let prev = seen.get(&tx.record.vehicle);
            if self.chain.admission_check_after(&tx.record, prev) == AdmissionVerdict::Admit {
                seen.insert(tx.record.vehicle, tx.record);
                keep.push(*tx);
            }
        }
        keep
    }

    fn on_round_start(&mut self, ctx: &NetContext, round: u64) -> Outbound {
        self.view(round).producer = Some(self.producer_of(round));
        if self.producer_of(round) == self.index {
            self.propose(ctx, round).unwrap_or_default()
        } else {
            Vec::new()
        }
    }

    fn on_propose(&mut self, ctx: &NetContext, round: u64, block: Block) -> Outbound {
        let producer = self.producer_of(round);
        let producer_key = ctx.rsu_keys[producer as usize];
        // Only the scheduled producer's signed proposals count at all.
        if block.producer != producer_key
            || !crypto::verify(&block.header_digest().0, &block.producer_signature, &producer_key)
        {
            return Vec::new();
        }
        let digest = block.header_digest();
        let mut out: Outbound = Vec::new();

        // Equivocation check against any earlier header from this producer.
        let seen = self.view(round).seen_header;
        match seen {
            None => self.view(round).seen_header = Some((digest, block.producer_signature)),
            Some((first_digest, first_sig)) if first_digest != digest => {
                self.view(round).equivocation = true;
                for r in self.other_rsus(ctx) {
                    out.push((
                        NodeId::Rsu(r),
                        Msg::EquivocationProof {
                            round,
                            producer,
                            first: (first_digest, first_sig),
                            second: (digest, block.producer_signature),
                        },
                    ));
                }
            }
            _ => {}
        }
        self.view(round).proposal_seen = true;

        // Reply once per round, as a current validator.
        if !self.validators_of(round).contains(&self.index) || !self.replied.insert(round) {
            return out;
        }
        let valid = validate_block(&block, self.chain.tip(), &self.chain);
        let verdict = match self.mode {
            NodeMode::Byzantine(ByzMode::Silent) => return out,
            NodeMode::Byzantine(ByzMode::RejectAll) => false,
            NodeMode::Byzantine(ByzMode::ApproveAll) => true,
            _ => valid,
        };
        let reply = ValidationReply::new(digest, verdict, &self.key);
        out.push((NodeId::Rsu(producer), Msg::Reply { round, reply }));
        if !verdict {
            // Gossip the signed rejection so all RSUs attribute the invalid
            // proposal to its producer.
            for r in self.other_rsus(ctx) {
                if r != producer {
                    out.push((NodeId::Rsu(r), Msg::Accuse { round, producer, reply }));
                }
            }
            let own_key = self.identity.public_key;
            self.view(round).accusers.insert(own_key);
        }
        out
    }

    fn on_reply(&mut self, ctx: &NetContext, round: u64, reply: ValidationReply) -> Outbound {
        let m = self.committee.size();
        let validator_keys: Vec<PublicKey> = self
            .validators_of(round)
            .iter()
            .map(|v| ctx.rsu_keys[*v as usize])
            .collect();
        let Some(state) = self.rounds.get_mut(&round) else {
            return Vec::new();
        };
        if state.outcome != RoundOutcome::Pending {
            return Vec::new();
        }
        let Some(block) = &state.proposed else {
            return Vec::new();
        };
        if !reply.verify()
            || !validator_keys.contains(&reply.validator)
            || reply.block_digest != block.header_digest()
            || state.replies.contains_key(&reply.validator)
        {
            return Vec::new();
        }
        state.replies.insert(reply.validator, reply);

        if finality_reached(state.approvals(), m) {
            state.outcome = RoundOutcome::Finalized;
            let block = state.proposed.clone().unwrap();
            let cert: Vec<ValidationReply> =
                state.replies.values().filter(|r| r.verdict).copied().collect();
            self.finalize_block(round, block.clone());
            let mut out: Outbound = Vec::new();
            for r in self.other_rsus(ctx) {
                out.push((
                    NodeId::Rsu(r),
                    Msg::Announce { round, block: block.clone(), cert: cert.clone() },
                ));
            }
            return out;
        }
        if finality_unreachable(state.rejections(), m) {
            state.outcome = RoundOutcome::Aborted;
        }
        Vec::new()
    }

    fn on_announce(
        &mut self,
        ctx: &NetContext,
        round: u64,
        block: Block,
        cert: Vec<ValidationReply>,
    ) -> Outbound {
        if self.view(round).finalized.is_some() {
            return Vec::new();
        }
        let producer = self.producer_of(round);
        let producer_key = ctx.rsu_keys[producer as usize];
        let digest = block.header_digest();
        if block.producer != producer_key
            || !crypto::verify(&digest.0, &block.producer_signature, &producer_key)
        {
            return Vec::new();
        }
        let mut out: Outbound = Vec::new();
        // The announced header also feeds equivocation detection.
        let seen = self.view(round).seen_header;
        match seen {
            None => self.view(round).seen_header = Some((digest, block.producer_signature)),
            Some((first_digest, first_sig)) if first_digest != digest => {
                self.view(round).equivocation = true;
                for r in self.other_rsus(ctx) {
                    out.push((
                        NodeId::Rsu(r),
                        Msg::EquivocationProof {
                            round,
                            producer,
                            first: (first_digest, first_sig),
                            second: (digest, block.producer_signature),
                        },
                    ));
                }
            }
            _ => {}
        }

        // Certificate: distinct current validators, valid signatures over
        // this digest, approvals (with the producer) past the 2/3 line.
        let validator_keys: Vec<PublicKey> = self
            .validators_of(round)
            .iter()
            .map(|v| ctx.rsu_keys[*v as usize])
            .collect();
        let mut approvers: BTreeSet<PublicKey> = BTreeSet::new();
        for r in &cert {
            if r.verdict
                && r.block_digest == digest
                && validator_keys.contains(&r.validator)
                && r.verify()
            {
                approvers.insert(r.validator);
            }
        }
        if !finality_reached(1 + approvers.len() as u32, self.committee.size()) {
            return out;
        }
        if !validate_block(&block, self.chain.tip(), &self.chain) {
            return out;
        }
        self.finalize_block(round, block);
        out
    }

    fn finalize_block(&mut self, round: u64, block: Block) {
        self.view(round).finalized = Some(block.header_digest());
        for tx in &block.transactions {
            self.pending_digests.remove(&tx.digest);
        }
        let included: BTreeSet<Digest> =
            block.transactions.iter().map(|tx| tx.digest).collect();
        self.pending.retain(|tx| !included.contains(&tx.digest));
        self.chain.append(block);
    }

    fn on_accuse(&mut self, ctx: &NetContext, round: u64, reply: ValidationReply) {
        let validator_keys: Vec<PublicKey> = self
            .validators_of(round)
            .iter()
            .map(|v| ctx.rsu_keys[*v as usize])
            .collect();
        if !reply.verdict && reply.verify() && validator_keys.contains(&reply.validator) {
            self.view(round).accusers.insert(reply.validator);
        }
    }

    fn on_equivocation_proof(
        &mut self,
        ctx: &NetContext,
        round: u64,
        producer: u32,
        first: (Digest, Signature),
        second: (Digest, Signature),
    ) {
        if producer != self.producer_of(round) || first.0 == second.0 {
            return;
        }
        let key = ctx.rsu_keys[producer as usize];
        if crypto::verify(&first.0 .0, &first.1, &key) && crypto::verify(&second.0 .0, &second.1, &key)
        {
            self.view(round).equivocation = true;
        }
    }

    /// Round conclusion: identical on every honest node, so committees,
    /// token ledgers, and misbehavior state stay in lockstep.
    fn on_round_deadline(&mut self, ctx: &NetContext, round: u64) -> Outbound {
        let producer = self.producer_of(round);
        let view = self.views.entry(round).or_default();
        let finalized = view.finalized.is_some();
        let invalid_proposal =
            !finalized && view.accusers.len() as u32 > ctx.fault_tolerance();
        let equivocated = view.equivocation;
        let missed_slot = !finalized && !invalid_proposal && !equivocated;
        let events = RoundEvents {
            round,
            producer,
            finalized,
            invalid_proposal,
            equivocated,
            missed_slot,
        };
        self.round_log.push(events);

        let outcome = if finalized {
            RoundOutcome::Finalized
        } else {
            RoundOutcome::Aborted
        };
        settle_round(outcome, &self.committee, &ctx.pool, &mut self.tokens, &ctx.rewards, round);

        if let Some(offender) = self.tracker.observe(&events, ctx.rewards.k_miss) {
            apply_penalty(&mut self.tokens, round, offender, &ctx.rewards);
            if let Some(next) =
                replace_member(&self.committee, &ctx.pool, offender, &self.tracker.flagged)
            {
                self.committee = next;
                self.epoch_start_round = round + 1;
            }
        }
        // Producer-side state for this round is settled.
        self.rounds.remove(&round);
        Vec::new()
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    pub fn finalized_digest(&self, round: u64) -> Option<Digest> {
        self.views.get(&round).and_then(|v| v.finalized)
    }

    pub fn finalized_count(&self) -> u64 {
        self.chain.height()
    }
}
