//! BFT-DPoS consensus: stake-weighted committee election, pseudorandom
//! round-robin producer scheduling, >2/3 single-broadcast finality,
//! reward/punishment bookkeeping, and misbehavior-triggered re-election.
//!
//! This module holds the pure state-transition logic; the message-driven
//! node state machine lives in [`node`].

pub mod node;

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::crypto::{self, Canonical, CanonicalWriter, Digest, PrivateKey, PublicKey, Signature};

/// Voted token deposits per RSU; the basis for committee election, producer
/// scheduling, and reward proportions. Deposits are fixed at run start.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StakePool {
    pub deposits: BTreeMap<u32, f64>,
}

impl StakePool {
    pub fn uniform(rsu_count: u32, amount: f64) -> StakePool {
        StakePool {
            deposits: (0..rsu_count).map(|i| (i, amount)).collect(),
        }
    }

    pub fn total(&self) -> f64 {
        self.deposits.values().sum()
    }
}

impl Canonical for StakePool {
    fn write_canonical(&self, w: &mut CanonicalWriter) {
        w.u32(self.deposits.len() as u32);
        for (id, amount) in &self.deposits {
            w.u32(*id).f64(*amount);
        }
    }
}

/// Committee for one epoch: consensus nodes (CRNs), the remaining ordinary
/// nodes (ORNs), and the epoch's producer schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Committee {
    pub crns: Vec<u32>,
    pub orns: Vec<u32>,
    pub schedule: Vec<u32>,
    pub epoch: u64,
}

impl Committee {
    pub fn size(&self) -> u32 {
        self.crns.len() as u32
    }

    pub fn is_crn(&self, rsu: u32) -> bool {
        self.crns.contains(&rsu)
    }

    /// Producer for a round, cycling round-robin through the epoch schedule.
    /// `rounds_into_epoch` counts rounds since this epoch began.
    pub fn producer_for(&self, rounds_into_epoch: u64) -> u32 {
        self.schedule[(rounds_into_epoch % self.schedule.len() as u64) as usize]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConsensusError {
    InsufficientNodes,
    NotYourTurn,
}

/// Elect the M RSUs with the largest deposits as CRNs, ties broken by
/// ascending RSU id. The schedule is filled in by [`schedule_producers`].
pub fn elect_committee(pool: &StakePool, m: u32, epoch: u64) -> Result<Committee, ConsensusError> {
    assert!(m >= 4, "BFT needs tolerance for at least one fault");
    if (pool.deposits.len() as u32) < m {
        return Err(ConsensusError::InsufficientNodes);
    }
    elect_committee_excluding(pool, m, epoch, &BTreeSet::new())
}

/// Election with a set of RSUs barred from the committee (voted-out nodes).
pub fn elect_committee_excluding(
    pool: &StakePool,
    m: u32,
    epoch: u64,
    barred: &BTreeSet<u32>,
) -> Result<Committee, ConsensusError> {
    let mut ranked: Vec<(u32, f64)> = pool
        .deposits
        .iter()
        .filter(|(id, _)| !barred.contains(id))
        .map(|(id, d)| (*id, *d))
        .collect();
    if (ranked.len() as u32) < m {
        return Err(ConsensusError::InsufficientNodes);
    }
    // descending deposit, ascending id on ties
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let crns: Vec<u32> = ranked[..m as usize].iter().map(|(id, _)| *id).collect();
    let orns: Vec<u32> = pool
        .deposits
        .keys()
        .copied()
        .filter(|id| !crns.contains(id))
        .collect();
    let mut committee = Committee {
        crns,
        orns,
        schedule: Vec::new(),
        epoch,
    };
    committee.schedule = schedule_producers(&committee, pool);
    Ok(committee)
}

/// Deterministic pseudorandom permutation of the CRNs, seeded with the digest
/// of (pool, epoch). Every node derives the same schedule independently.
pub fn schedule_producers(committee: &Committee, pool: &StakePool) -> Vec<u32> {
    let mut w = CanonicalWriter::new();
    pool.write_canonical(&mut w);
    w.u64(committee.epoch);
    let seed = crypto::digest(&w.finish());
    let mut rng = rand_chacha::ChaCha20Rng::from_seed(seed.0);
    let mut schedule = committee.crns.clone();
    // Fisher-Yates
    for i in (1..schedule.len()).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        schedule.swap(i, j);
    }
    schedule
}

/// The >2/3 finality rule: approvals (counting the producer's implicit
/// self-approval) must strictly exceed 2M/3. Exact integer arithmetic.
pub fn finality_reached(approvals: u32, m: u32) -> bool {
    3 * approvals > 2 * m
}

/// True once enough rejections or silence make the threshold unreachable.
pub fn finality_unreachable(rejections: u32, m: u32) -> bool {
    // best case: everyone who has not rejected approves
    !finality_reached(m - rejections, m)
}

/// A validator's signed verdict on a proposed block.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReply {
    pub block_digest: Digest,
    pub verdict: bool,
    pub validator: PublicKey,
    pub signature: Signature,
}

impl ValidationReply {
    fn signed_bytes(block_digest: &Digest, verdict: bool) -> Vec<u8> {
        let mut w = CanonicalWriter::new();
        w.fixed(&block_digest.0).u8(verdict as u8);
        w.finish()
    }

    pub fn new(block_digest: Digest, verdict: bool, key: &PrivateKey) -> ValidationReply {
        let signature = crypto::sign(&Self::signed_bytes(&block_digest, verdict), key);
        ValidationReply {
            block_digest,
            verdict,
            validator: key.public_key(),
            signature,
        }
    }

    pub fn verify(&self) -> bool {
        crypto::verify(
            &Self::signed_bytes(&self.block_digest, self.verdict),
            &self.signature,
            &self.validator,
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RoundOutcome {
    Pending,
    Finalized,
    Aborted,
}

/// Bookkeeping for one consensus round as seen by the producer.
#[derive(Clone, Debug)]
pub struct RoundState {
    pub round: u64,
    pub producer: u32,
    pub proposed: Option<crate::ledger::Block>,
    pub replies: BTreeMap<PublicKey, ValidationReply>,
    pub outcome: RoundOutcome,
}

impl RoundState {
    pub fn new(round: u64, producer: u32) -> RoundState {
        RoundState {
            round,
            producer,
            proposed: None,
            replies: BTreeMap::new(),
            outcome: RoundOutcome::Pending,
        }
    }

    pub fn approvals(&self) -> u32 {
        1 + self.replies.values().filter(|r| r.verdict).count() as u32
    }

    pub fn rejections(&self) -> u32 {
        self.replies.values().filter(|r| !r.verdict).count() as u32
    }
}

/// Reward and punishment constants. All invented and configurable.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub r_crn: f64,
    pub r_orn: f64,
    pub penalty: f64,
    pub k_miss: u32,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            r_crn: 7.0,
            r_orn: 1.0,
            penalty: 10.0,
            k_miss: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TokenEntry {
    pub round: u64,
    pub rsu: u32,
    pub delta: f64,
    pub reason: String,
}

/// Per-RSU token balances with a full change history. Deductions floor at
/// zero; the history records the delta actually applied.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TokenLedger {
    pub balances: BTreeMap<u32, f64>,
    pub history: Vec<TokenEntry>,
}

impl TokenLedger {
    fn apply(&mut self, round: u64, rsu: u32, delta: f64, reason: &str) {
        let balance = self.balances.entry(rsu).or_insert(0.0);
        let applied = if delta < 0.0 && *balance + delta < 0.0 {
            -*balance
        } else {
            delta
        };
        *balance += applied;
        self.history.push(TokenEntry {
            round,
            rsu,
            delta: applied,
            reason: String::from(reason),
        });
    }

    /// Replay the history from zero balances; must reproduce `balances`.
    pub fn replays_consistently(&self) -> bool {
        let mut acc: BTreeMap<u32, f64> = BTreeMap::new();
        for e in &self.history {
            *acc.entry(e.rsu).or_insert(0.0) += e.delta;
        }
        acc.retain(|_, v| *v != 0.0);
        let mut cur = self.balances.clone();
        cur.retain(|_, v| *v != 0.0);
        acc.len() == cur.len()
            && acc
                .iter()
                .all(|(k, v)| cur.get(k).is_some_and(|c| (c - v).abs() < 1e-9))
    }
}

/// Distribute round rewards: each CRN gains R_crn weighted by its share of
/// CRN deposits, each ORN an even split of R_orn. Only finalized rounds pay.
pub fn settle_round(
    outcome: RoundOutcome,
    committee: &Committee,
    pool: &StakePool,
    ledger: &mut TokenLedger,
    rewards: &RewardConfig,
    round: u64,
) {
    if outcome != RoundOutcome::Finalized {
        return;
    }
    let crn_total: f64 = committee
        .crns
        .iter()
        .map(|id| pool.deposits.get(id).copied().unwrap_or(0.0))
        .sum();
    for id in &committee.crns {
        let dep = pool.deposits.get(id).copied().unwrap_or(0.0);
        let share = if crn_total > 0.0 {
            rewards.r_crn * dep / crn_total
        } else {
            rewards.r_crn / committee.crns.len() as f64
        };
        ledger.apply(round, *id, share, "crn_reward");
    }
    if !committee.orns.is_empty() {
        let dividend = rewards.r_orn / committee.orns.len() as f64;
        for id in &committee.orns {
            ledger.apply(round, *id, dividend, "orn_dividend");
        }
    }
}

pub fn apply_penalty(ledger: &mut TokenLedger, round: u64, rsu: u32, rewards: &RewardConfig) {
    ledger.apply(round, rsu, -rewards.penalty, "misbehavior_penalty");
}

/// Publicly attributable events of one concluded round.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundEvents {
    pub round: u64,
    pub producer: u32,
    pub finalized: bool,
    /// Proposal existed but failed honest validation.
    pub invalid_proposal: bool,
    /// Two different producer-signed blocks observed for this round.
    pub equivocated: bool,
    /// No proposal observed at all (crash or silence).
    pub missed_slot: bool,
}

/// Tracks consecutive missed production slots and already-flagged nodes.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MisbehaviorTracker {
    pub consecutive_misses: BTreeMap<u32, u32>,
    pub flagged: BTreeSet<u32>,
}

impl MisbehaviorTracker {
    /// Apply one round's events; returns the offender if a CRN must be
    /// voted out now.
    pub fn observe(&mut self, ev: &RoundEvents, k_miss: u32) -> Option<u32> {
        if ev.invalid_proposal || ev.equivocated {
            self.flagged.insert(ev.producer);
            return Some(ev.producer);
        }
        if ev.missed_slot {
            let misses = self.consecutive_misses.entry(ev.producer).or_insert(0);
            *misses += 1;
            if *misses >= k_miss {
                self.flagged.insert(ev.producer);
                return Some(ev.producer);
            }
        } else {
            self.consecutive_misses.insert(ev.producer, 0);
        }
        None
    }
}

/// Remove a flagged CRN, promote the highest-deposit eligible ORN (ties by
/// ascending id), and begin a new epoch with a fresh schedule.
pub fn replace_member(
    committee: &Committee,
    pool: &StakePool,
    offender: u32,
    flagged: &BTreeSet<u32>,
) -> Option<Committee> {
    let replacement = committee
        .orns
        .iter()
        .filter(|id| !flagged.contains(id))
        .map(|id| (*id, pool.deposits.get(id).copied().unwrap_or(0.0)))
        .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(b.0.cmp(&a.0)))?
        .0;
    let mut crns: Vec<u32> = committee
        .crns
        .iter()
        .copied()
        .filter(|id| *id != offender)
        .collect();
    crns.push(replacement);
    crns.sort_unstable();
    let mut orns: Vec<u32> = committee
        .orns
        .iter()
        .copied()
        .filter(|id| *id != replacement)
        .collect();
    orns.push(offender);
    orns.sort_unstable();
    let mut next = Committee {
        crns,
        orns,
        schedule: Vec::new(),
        epoch: committee.epoch + 1,
    };
    next.schedule = schedule_producers(&next, pool);
    Some(next)
}
