//! Validator state machine: transaction validation against pseudonym
//! certificates, hash-based leader election, block proposal, and a
//! three-phase byzantine agreement (pre-prepare, prepare, commit) with
//! timeout-driven round advancement.
//!
//! The state machine is a pure transition function over explicit inputs; it
//! owns no clock and sends no messages itself. The harness delivers
//! messages, block-time ticks, and timeout checks, and forwards the
//! returned outputs. A validator that reaches a prepare quorum locks on
//! that block and will neither prepare nor propose a different block at the
//! same height until it commits; this keeps round advancement safe when
//! commit messages are lost.

use std::collections::{BTreeMap, BTreeSet};

use crate::crypto::{self, Digest, KeyPair, PublicKey, Signature};
use crate::encoding::{
    Canon, CodecError, Decoder, Encoder, TAG_BLOCK_CERTIFICATE, TAG_COMMIT, TAG_COMMIT_PAYLOAD,
    TAG_NEW_ROUND, TAG_PREPARE, TAG_PREPARE_PAYLOAD, TAG_PRE_PREPARE, TAG_PRE_PREPARE_PAYLOAD,
};
use crate::ledger::{
    Block, CertLookup, HashTransaction, SharedLedger, ValidatorId, MAX_BLOCK_TRANSACTIONS,
};

/// Smallest integer strictly greater than two thirds of `n`.
pub fn quorum(n: usize) -> usize {
    2 * n / 3 + 1
}

/// Static consensus parameters shared by all validators of a deployment.
#[derive(Clone, Debug)]
pub struct RoundConfig {
    /// Sorted, deduplicated validator identifiers.
    pub validator_ids: Vec<ValidatorId>,
    /// Tolerated byzantine validators; requires `n >= 3f + 1`.
    pub max_faulty: usize,
    pub block_time_secs: u64,
    pub round_timeout_secs: u64,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("{n} validators cannot tolerate f={f}; need n >= 3f + 1")]
    TooFewValidators { n: usize, f: usize },
    #[error("validator set must not be empty")]
    Empty,
}

impl RoundConfig {
    pub fn new(
        mut validator_ids: Vec<ValidatorId>,
        max_faulty: usize,
        block_time_secs: u64,
        round_timeout_secs: u64,
    ) -> Result<RoundConfig, ConfigError> {
        validator_ids.sort();
        validator_ids.dedup();
        if validator_ids.is_empty() {
            return Err(ConfigError::Empty);
        }
        if validator_ids.len() < 3 * max_faulty + 1 {
            return Err(ConfigError::TooFewValidators {
                n: validator_ids.len(),
                f: max_faulty,
            });
        }
        Ok(RoundConfig {
            validator_ids,
            max_faulty,
            block_time_secs,
            round_timeout_secs,
        })
    }

    pub fn n(&self) -> usize {
        self.validator_ids.len()
    }

    pub fn quorum(&self) -> usize {
        quorum(self.n())
    }
}

/// Deterministic per-round leader: hash the previous block digest together
/// with the round number and reduce modulo the validator count. Every honest
/// node computes the same leader without coordination.
pub fn elect_leader(config: &RoundConfig, prev_block_digest: &Digest, round: u64) -> ValidatorId {
    let mut input = Vec::with_capacity(40);
    input.extend_from_slice(&prev_block_digest.0);
    input.extend_from_slice(&round.to_be_bytes());
    let d = crypto::digest(&input);
    // Big-endian integer of the digest, reduced mod n byte by byte.
    let n = config.n() as u128;
    let mut acc: u128 = 0;
    for byte in d.0 {
        acc = (acc * 256 + byte as u128) % n;
    }
    config.validator_ids[acc as usize].clone()
}

/// Why a transaction was accepted into or rejected from the mempool.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TxVerdict {
    Accept,
    UnknownPseudonym,
    BadSignature,
    OutsideValidityWindow,
    Duplicate,
}

impl TxVerdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            TxVerdict::Accept => "accept",
            TxVerdict::UnknownPseudonym => "unknown_pseudonym",
            TxVerdict::BadSignature => "bad_signature",
            TxVerdict::OutsideValidityWindow => "outside_validity_window",
            TxVerdict::Duplicate => "duplicate",
        }
    }
}

/// Validate a hash transaction against the certificate directory. `seen`
/// supplies the deduplication context (mempool plus chain for gossip,
/// chain plus in-block prefix for block validation).
pub fn validate_transaction(
    tx: &HashTransaction,
    ca_public: &PublicKey,
    certs: &CertLookup,
    seen: impl Fn(&Digest) -> bool,
) -> TxVerdict {
    let Some(cert) = certs.get(&tx.pseudonym_id) else {
        return TxVerdict::UnknownPseudonym;
    };
    if !crypto::verify(ca_public, &cert.signing_payload(), &cert.ca_signature) {
        return TxVerdict::BadSignature;
    }
    if !crypto::verify(&cert.subject_key, &tx.signing_payload(), &tx.signature) {
        return TxVerdict::BadSignature;
    }
    if !cert.covers(tx.submit_time) {
        return TxVerdict::OutsideValidityWindow;
    }
    if seen(&tx.record_digest) {
        return TxVerdict::Duplicate;
    }
    TxVerdict::Accept
}

/// Leader's signed block announcement.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PrePrepare {
    pub round: u64,
    pub block: Block,
    pub leader: ValidatorId,
    pub signature: Signature,
}

impl PrePrepare {
    fn signing_payload(round: u64, block_digest: &Digest, leader: &ValidatorId) -> Vec<u8> {
        let mut enc = Encoder::with_tag(TAG_PRE_PREPARE_PAYLOAD);
        enc.put_u64(round);
        enc.put_fixed(&block_digest.0);
        enc.put_str(leader.as_str());
        enc.into_bytes()
    }

    pub fn signed(round: u64, block: Block, leader: ValidatorId, key: &KeyPair) -> PrePrepare {
        let signature = key.sign(&Self::signing_payload(round, &block.block_digest, &leader));
        PrePrepare {
            round,
            block,
            leader,
            signature,
        }
    }

    pub fn signature_verifies(&self, key: &PublicKey) -> bool {
        crypto::verify(
            key,
            &Self::signing_payload(self.round, &self.block.block_digest, &self.leader),
            &self.signature,
        )
    }
}

/// Which voting phase a vote belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum VotePhase {
    Prepare,
    Commit,
}

/// A validator's signed vote for a block digest in a round.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vote {
    pub phase: VotePhase,
    pub round: u64,
    pub block_digest: Digest,
    pub voter: ValidatorId,
    pub signature: Signature,
}

impl Vote {
    fn signing_payload(
        phase: VotePhase,
        round: u64,
        block_digest: &Digest,
        voter: &ValidatorId,
    ) -> Vec<u8> {
        let tag = match phase {
            VotePhase::Prepare => TAG_PREPARE_PAYLOAD,
            VotePhase::Commit => TAG_COMMIT_PAYLOAD,
        };
        let mut enc = Encoder::with_tag(tag);
        enc.put_u64(round);
        enc.put_fixed(&block_digest.0);
        enc.put_str(voter.as_str());
        enc.into_bytes()
    }

    pub fn signed(
        phase: VotePhase,
        round: u64,
        block_digest: Digest,
        voter: ValidatorId,
        key: &KeyPair,
    ) -> Vote {
        let signature = key.sign(&Self::signing_payload(phase, round, &block_digest, &voter));
        Vote {
            phase,
            round,
            block_digest,
            voter,
            signature,
        }
    }

    pub fn signature_verifies(&self, key: &PublicKey) -> bool {
        crypto::verify(
            key,
            &Self::signing_payload(self.phase, self.round, &self.block_digest, &self.voter),
            &self.signature,
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NewRoundReason {
    Timeout,
}

/// Wire messages of the agreement protocol.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ConsensusMessage {
    PrePrepare(PrePrepare),
    Prepare(Vote),
    Commit(Vote),
    NewRound { round: u64, reason: NewRoundReason },
}

impl ConsensusMessage {
    pub fn round(&self) -> u64 {
        match self {
            ConsensusMessage::PrePrepare(pp) => pp.round,
            ConsensusMessage::Prepare(v) | ConsensusMessage::Commit(v) => v.round,
            ConsensusMessage::NewRound { round, .. } => *round,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ConsensusMessage::PrePrepare(_) => "pre_prepare",
            ConsensusMessage::Prepare(_) => "prepare",
            ConsensusMessage::Commit(_) => "commit",
            ConsensusMessage::NewRound { .. } => "new_round",
        }
    }
}

impl Canon for ConsensusMessage {
    fn write(&self, enc: &mut Encoder) -> Result<(), CodecError> {
        match self {
            ConsensusMessage::PrePrepare(pp) => {
                enc.put_u8(TAG_PRE_PREPARE);
                enc.put_u64(pp.round);
                pp.block.write(enc)?;
                enc.put_str(pp.leader.as_str());
                enc.put_fixed(&pp.signature.0);
            }
            ConsensusMessage::Prepare(v) | ConsensusMessage::Commit(v) => {
                enc.put_u8(match v.phase {
                    VotePhase::Prepare => TAG_PREPARE,
                    VotePhase::Commit => TAG_COMMIT,
                });
                enc.put_u64(v.round);
                enc.put_fixed(&v.block_digest.0);
                enc.put_str(v.voter.as_str());
                enc.put_fixed(&v.signature.0);
            }
            ConsensusMessage::NewRound { round, reason } => {
                enc.put_u8(TAG_NEW_ROUND);
                enc.put_u64(*round);
                enc.put_u8(match reason {
                    NewRoundReason::Timeout => 0,
                });
            }
        }
        Ok(())
    }

    fn read(dec: &mut Decoder) -> Result<Self, CodecError> {
        let tag = dec.take_u8()?;
        match tag {
            TAG_PRE_PREPARE => Ok(ConsensusMessage::PrePrepare(PrePrepare {
                round: dec.take_u64()?,
                block: Block::read(dec)?,
                leader: ValidatorId::new(dec.take_str()?),
                signature: Signature(dec.take_fixed()?),
            })),
            TAG_PREPARE | TAG_COMMIT => {
                let phase = if tag == TAG_PREPARE {
                    VotePhase::Prepare
                } else {
                    VotePhase::Commit
                };
                let vote = Vote {
                    phase,
                    round: dec.take_u64()?,
                    block_digest: Digest(dec.take_fixed()?),
                    voter: ValidatorId::new(dec.take_str()?),
                    signature: Signature(dec.take_fixed()?),
                };
                Ok(if phase == VotePhase::Prepare {
                    ConsensusMessage::Prepare(vote)
                } else {
                    ConsensusMessage::Commit(vote)
                })
            }
            TAG_NEW_ROUND => Ok(ConsensusMessage::NewRound {
                round: dec.take_u64()?,
                reason: match dec.take_u8()? {
                    0 => NewRoundReason::Timeout,
                    b => return Err(CodecError::UnknownDiscriminant(b)),
                },
            }),
            b => Err(CodecError::UnknownDiscriminant(b)),
        }
    }
}

/// A committed block plus the commit votes proving quorum agreement; what
/// validators forward to monitor units.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockCertificate {
    pub block: Block,
    pub commits: Vec<Vote>,
}

impl Canon for BlockCertificate {
    fn write(&self, enc: &mut Encoder) -> Result<(), CodecError> {
        enc.put_u8(TAG_BLOCK_CERTIFICATE);
        self.block.write(enc)?;
        enc.put_count(self.commits.len());
        for vote in &self.commits {
            enc.put_u64(vote.round);
            enc.put_fixed(&vote.block_digest.0);
            enc.put_str(vote.voter.as_str());
            enc.put_fixed(&vote.signature.0);
        }
        Ok(())
    }

    fn read(dec: &mut Decoder) -> Result<Self, CodecError> {
        dec.expect_tag(TAG_BLOCK_CERTIFICATE)?;
        let block = Block::read(dec)?;
        let n = dec.take_count()?;
        let mut commits = Vec::with_capacity(n);
        for _ in 0..n {
            commits.push(Vote {
                phase: VotePhase::Commit,
                round: dec.take_u64()?,
                block_digest: Digest(dec.take_fixed()?),
                voter: ValidatorId::new(dec.take_str()?),
                signature: Signature(dec.take_fixed()?),
            });
        }
        Ok(BlockCertificate { block, commits })
    }
}

/// Consensus progress within the current round.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Idle,
    PrePrepared,
    Prepared,
}

/// One structured line of the simulator trace.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceEvent {
    pub kind: &'static str,
    pub round: u64,
    pub digest: Option<Digest>,
}

/// Everything a transition wants the harness to do.
#[derive(Debug, Default)]
pub struct StepOutput {
    /// Point-to-point consensus messages.
    pub to_validators: Vec<(ValidatorId, ConsensusMessage)>,
    /// Transaction to flood to the other validators (first sight only).
    pub relay: Option<HashTransaction>,
    /// Blocks committed during this transition, oldest first.
    pub committed: Vec<BlockCertificate>,
    /// Ask the harness to deliver a timeout check for this round after
    /// `round_timeout_secs`.
    pub schedule_timeout: Option<u64>,
    pub trace: Vec<TraceEvent>,
}

impl StepOutput {
    fn merge(&mut self, mut other: StepOutput) {
        self.to_validators.append(&mut other.to_validators);
        if other.relay.is_some() {
            self.relay = other.relay;
        }
        self.committed.append(&mut other.committed);
        if other.schedule_timeout.is_some() {
            self.schedule_timeout = other.schedule_timeout;
        }
        self.trace.append(&mut other.trace);
    }

    fn trace(&mut self, kind: &'static str, round: u64, digest: Option<Digest>) {
        self.trace.push(TraceEvent { kind, round, digest });
    }
}

/// Full per-validator consensus state.
pub struct ValidatorState {
    id: ValidatorId,
    keypair: KeyPair,
    config: RoundConfig,
    validator_keys: BTreeMap<ValidatorId, PublicKey>,
    ca_public: PublicKey,
    certs: CertLookup,
    ledger: SharedLedger,
    mempool: BTreeMap<(u64, Digest), HashTransaction>,
    mempool_digests: BTreeSet<Digest>,
    round: u64,
    phase: Phase,
    candidate: Option<Block>,
    /// Block this validator is locked on after reaching a prepare quorum;
    /// cleared when a block commits at the current height.
    locked: Option<Block>,
    prepare_tally: BTreeMap<(u64, Digest), BTreeSet<ValidatorId>>,
    commit_tally: BTreeMap<(u64, Digest), Vec<Vote>>,
    prepare_voters: BTreeSet<(u64, ValidatorId)>,
    commit_voters: BTreeSet<(u64, ValidatorId)>,
    /// Messages for rounds this validator has not reached yet.
    future: BTreeMap<u64, Vec<(ValidatorId, ConsensusMessage)>>,
}

impl ValidatorState {
    pub fn new(
        id: ValidatorId,
        keypair: KeyPair,
        config: RoundConfig,
        validator_keys: BTreeMap<ValidatorId, PublicKey>,
        ca_public: PublicKey,
        certs: CertLookup,
        ledger: SharedLedger,
    ) -> ValidatorState {
        ValidatorState {
            id,
            keypair,
            config,
            validator_keys,
            ca_public,
            certs,
            ledger,
            mempool: BTreeMap::new(),
            mempool_digests: BTreeSet::new(),
            round: 0,
            phase: Phase::Idle,
            candidate: None,
            locked: None,
            prepare_tally: BTreeMap::new(),
            commit_tally: BTreeMap::new(),
            prepare_voters: BTreeSet::new(),
            commit_voters: BTreeSet::new(),
            future: BTreeMap::new(),
        }
    }

    pub fn id(&self) -> &ValidatorId {
        &self.id
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn config(&self) -> &RoundConfig {
        &self.config
    }

    pub fn ledger(&self) -> &SharedLedger {
        &self.ledger
    }

    pub fn mempool_len(&self) -> usize {
        self.mempool.len()
    }

    pub fn current_leader(&self) -> ValidatorId {
        elect_leader(&self.config, &self.ledger.tip_digest(), self.round)
    }

    fn others(&self) -> impl Iterator<Item = &ValidatorId> {
        let me = self.id.clone();
        self.config
            .validator_ids
            .iter()
            .filter(move |v| **v != me)
    }

    fn broadcast(&self, out: &mut StepOutput, msg: ConsensusMessage) {
        for peer in self.others() {
            out.to_validators.push((peer.clone(), msg.clone()));
        }
    }

    /// Gossip entry point: validate, admit to the mempool, and relay on
    /// first sight.
    pub fn receive_transaction(&mut self, tx: HashTransaction) -> (TxVerdict, StepOutput) {
        let mut out = StepOutput::default();
        let verdict = validate_transaction(&tx, &self.ca_public, &self.certs, |d| {
            self.ledger.contains_digest(d).is_some() || self.mempool_digests.contains(d)
        });
        if verdict == TxVerdict::Accept {
            out.trace("tx_accept", self.round, Some(tx.record_digest));
            self.mempool_digests.insert(tx.record_digest);
            self.mempool.insert(tx.order_key(), tx.clone());
            out.relay = Some(tx);
        } else {
            out.trace("tx_reject", self.round, Some(tx.record_digest));
        }
        (verdict, out)
    }

    /// Deterministic block proposal from the mempool, or the locked block if
    /// this validator is locked. Returns nothing when there is nothing to
    /// propose.
    pub fn propose_block(&self, now_ms: u64) -> Option<Block> {
        if let Some(locked) = &self.locked {
            return Some(locked.clone());
        }
        if self.mempool.is_empty() {
            return None;
        }
        let transactions: Vec<HashTransaction> = self
            .mempool
            .values()
            .take(MAX_BLOCK_TRANSACTIONS)
            .cloned()
            .collect();
        let height = self.ledger.height().map_or(0, |h| h + 1);
        Some(Block::assemble(
            height,
            self.ledger.tip_digest(),
            now_ms / 1000,
            self.id.clone(),
            transactions,
        ))
    }

    /// Block-time tick: the elected leader proposes if it has anything to
    /// propose and the round is still idle.
    pub fn on_block_tick(&mut self, now_ms: u64) -> StepOutput {
        let mut out = StepOutput::default();
        if self.phase != Phase::Idle || self.current_leader() != self.id {
            return out;
        }
        let Some(block) = self.propose_block(now_ms) else {
            return out;
        };
        let pp = PrePrepare::signed(self.round, block, self.id.clone(), &self.keypair);
        out.trace("propose", self.round, Some(pp.block.block_digest));
        self.broadcast(&mut out, ConsensusMessage::PrePrepare(pp.clone()));
        let own = self.accept_pre_prepare(pp);
        out.merge(own);
        out
    }

    /// Handle a consensus message from `from`. Future-round messages are
    /// buffered until this validator advances; stale ones are dropped.
    pub fn on_message(
        &mut self,
        from: &ValidatorId,
        msg: ConsensusMessage,
        now_ms: u64,
    ) -> StepOutput {
        let mut out = StepOutput::default();
        if !self.validator_keys.contains_key(from) {
            out.trace("drop_unknown_sender", self.round, None);
            return out;
        }
        let round = msg.round();
        if round < self.round {
            out.trace("drop_stale", round, None);
            return out;
        }
        if round > self.round {
            out.trace("buffer_future", round, None);
            self.future.entry(round).or_default().push((from.clone(), msg));
            return out;
        }
        match msg {
            ConsensusMessage::PrePrepare(pp) => out.merge(self.handle_pre_prepare(from, pp)),
            ConsensusMessage::Prepare(vote) => out.merge(self.handle_prepare(vote)),
            ConsensusMessage::Commit(vote) => out.merge(self.handle_commit(vote)),
            ConsensusMessage::NewRound { round, .. } => {
                out.trace("peer_new_round", round, None);
            }
        }
        let _ = now_ms;
        out
    }

    /// Timeout check scheduled when the round began. A no-op unless the
    /// validator is still stuck in that round.
    pub fn on_timeout_check(&mut self, round: u64, _now_ms: u64) -> StepOutput {
        let mut out = StepOutput::default();
        if self.round != round {
            return out;
        }
        out.trace("timeout", round, None);
        self.advance_round(&mut out);
        self.broadcast(
            &mut out,
            ConsensusMessage::NewRound {
                round: self.round,
                reason: NewRoundReason::Timeout,
            },
        );
        out
    }

    fn advance_round(&mut self, out: &mut StepOutput) {
        self.round += 1;
        self.phase = Phase::Idle;
        self.candidate = None;
        self.prune_rounds_below(self.round);
        out.schedule_timeout = Some(self.round);
        out.trace("enter_round", self.round, None);
        self.drain_future(out);
    }

    fn prune_rounds_below(&mut self, round: u64) {
        self.prepare_tally.retain(|(r, _), _| *r >= round);
        self.commit_tally.retain(|(r, _), _| *r >= round);
        self.prepare_voters.retain(|(r, _)| *r >= round);
        self.commit_voters.retain(|(r, _)| *r >= round);
        self.future.retain(|r, _| *r >= round);
    }

    fn drain_future(&mut self, out: &mut StepOutput) {
        // Handling a buffered message can advance the round again, which
        // makes the next buffer current; loop until no buffer is current.
        while let Some(buffered) = self.future.remove(&self.round) {
            for (from, msg) in buffered {
                let step = self.on_message(&from, msg, 0);
                out.merge(step);
            }
        }
    }

    fn handle_pre_prepare(&mut self, from: &ValidatorId, pp: PrePrepare) -> StepOutput {
        let mut out = StepOutput::default();
        let leader = self.current_leader();
        if pp.leader != leader || *from != leader {
            out.trace("drop_not_leader", pp.round, Some(pp.block.block_digest));
            return out;
        }
        let Some(leader_key) = self.validator_keys.get(&pp.leader) else {
            out.trace("drop_unknown_sender", pp.round, None);
            return out;
        };
        if !pp.signature_verifies(leader_key) {
            out.trace("drop_bad_sig", pp.round, Some(pp.block.block_digest));
            return out;
        }
        if let Some(existing) = &self.candidate {
            if existing.block_digest == pp.block.block_digest {
                out.trace("drop_duplicate", pp.round, Some(pp.block.block_digest));
            } else {
                out.trace("drop_equivocation", pp.round, Some(pp.block.block_digest));
            }
            return out;
        }
        if let Some(locked) = &self.locked {
            if locked.block_digest != pp.block.block_digest {
                out.trace("drop_locked_elsewhere", pp.round, Some(pp.block.block_digest));
                return out;
            }
        }
        if !self.block_is_valid(&pp.block) {
            out.trace("drop_invalid_block", pp.round, Some(pp.block.block_digest));
            return out;
        }
        out.merge(self.accept_pre_prepare(pp));
        out
    }

    fn block_is_valid(&self, block: &Block) -> bool {
        if !block.digest_recomputes() {
            return false;
        }
        let expected_height = self.ledger.height().map_or(0, |h| h + 1);
        if block.height != expected_height || block.prev_digest != self.ledger.tip_digest() {
            return false;
        }
        if block.transactions.is_empty() || block.transactions.len() > MAX_BLOCK_TRANSACTIONS {
            return false;
        }
        // Strict order by (submit_time, digest) rules out in-block duplicates.
        let ordered = block
            .transactions
            .windows(2)
            .all(|pair| pair[0].order_key() < pair[1].order_key());
        if !ordered {
            return false;
        }
        block.transactions.iter().all(|tx| {
            validate_transaction(tx, &self.ca_public, &self.certs, |d| {
                self.ledger.contains_digest(d).is_some()
            }) == TxVerdict::Accept
        })
    }

    fn accept_pre_prepare(&mut self, pp: PrePrepare) -> StepOutput {
        let mut out = StepOutput::default();
        let digest = pp.block.block_digest;
        self.candidate = Some(pp.block);
        self.phase = Phase::PrePrepared;
        out.trace("pre_prepared", self.round, Some(digest));

        let vote = Vote::signed(
            VotePhase::Prepare,
            self.round,
            digest,
            self.id.clone(),
            &self.keypair,
        );
        self.broadcast(&mut out, ConsensusMessage::Prepare(vote.clone()));
        out.merge(self.handle_prepare(vote));
        out
    }

    fn handle_prepare(&mut self, vote: Vote) -> StepOutput {
        let mut out = StepOutput::default();
        if !self.vote_is_valid(&vote, VotePhase::Prepare) {
            out.trace("drop_bad_sig", vote.round, Some(vote.block_digest));
            return out;
        }
        if !self.prepare_voters.insert((vote.round, vote.voter.clone())) {
            out.trace("drop_duplicate_vote", vote.round, Some(vote.block_digest));
            return out;
        }
        self.prepare_tally
            .entry((vote.round, vote.block_digest))
            .or_default()
            .insert(vote.voter.clone());
        out.trace("prepare", vote.round, Some(vote.block_digest));
        self.check_prepared(&mut out);
        out
    }

    fn handle_commit(&mut self, vote: Vote) -> StepOutput {
        let mut out = StepOutput::default();
        if !self.vote_is_valid(&vote, VotePhase::Commit) {
            out.trace("drop_bad_sig", vote.round, Some(vote.block_digest));
            return out;
        }
        if !self.commit_voters.insert((vote.round, vote.voter.clone())) {
            out.trace("drop_duplicate_vote", vote.round, Some(vote.block_digest));
            return out;
        }
        self.commit_tally
            .entry((vote.round, vote.block_digest))
            .or_default()
            .push(vote.clone());
        out.trace("commit_tallied", vote.round, Some(vote.block_digest));
        self.check_committed(&mut out);
        out
    }

    fn vote_is_valid(&self, vote: &Vote, expected_phase: VotePhase) -> bool {
        if vote.phase != expected_phase {
            return false;
        }
        let Some(key) = self.validator_keys.get(&vote.voter) else {
            return false;
        };
        vote.signature_verifies(key)
    }

    fn check_prepared(&mut self, out: &mut StepOutput) {
        if self.phase != Phase::PrePrepared {
            return;
        }
        let Some(candidate) = self.candidate.clone() else {
            return;
        };
        let digest = candidate.block_digest;
        let count = self
            .prepare_tally
            .get(&(self.round, digest))
            .map_or(0, |voters| voters.len());
        if count < self.config.quorum() {
            return;
        }
        self.phase = Phase::Prepared;
        self.locked = Some(candidate);
        out.trace("prepared", self.round, Some(digest));

        let vote = Vote::signed(
            VotePhase::Commit,
            self.round,
            digest,
            self.id.clone(),
            &self.keypair,
        );
        self.broadcast(out, ConsensusMessage::Commit(vote.clone()));
        out.merge(self.handle_commit(vote));
    }

    fn check_committed(&mut self, out: &mut StepOutput) {
        if self.phase == Phase::Idle {
            return;
        }
        let Some(candidate) = &self.candidate else {
            return;
        };
        let digest = candidate.block_digest;
        let votes = match self.commit_tally.get(&(self.round, digest)) {
            Some(votes) if votes.len() >= self.config.quorum() => votes.clone(),
            _ => return,
        };
        let block = candidate.clone();
        let committed_round = self.round;
        if self.ledger.append_block(block.clone()).is_err() {
            // Cannot happen for a block validated against our own tip.
            out.trace("commit_append_failed", committed_round, Some(digest));
            return;
        }
        for tx in &block.transactions {
            self.mempool.remove(&tx.order_key());
        }
        self.locked = None;
        out.trace("commit", committed_round, Some(digest));
        out.committed.push(BlockCertificate {
            block,
            commits: votes,
        });
        self.advance_round(out);
    }
}

/// Monitor unit: replicates the shared ledger from commit certificates
/// without voting.
pub struct MonitorState {
    id: String,
    quorum: usize,
    validator_keys: BTreeMap<ValidatorId, PublicKey>,
    ledger: SharedLedger,
}

impl MonitorState {
    pub fn new(
        id: String,
        config: &RoundConfig,
        validator_keys: BTreeMap<ValidatorId, PublicKey>,
        ledger: SharedLedger,
    ) -> MonitorState {
        MonitorState {
            id,
            quorum: config.quorum(),
            validator_keys,
            ledger,
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn ledger(&self) -> &SharedLedger {
        &self.ledger
    }

    /// Append the certified block if the certificate carries a quorum of
    /// valid commit votes and the block links to this monitor's tip.
    /// Duplicate deliveries are ignored.
    pub fn receive_certificate(&mut self, cert: &BlockCertificate) -> bool {
        let digest = cert.block.block_digest;
        if !cert.block.digest_recomputes() {
            return false;
        }
        let mut voters = BTreeSet::new();
        for vote in &cert.commits {
            if vote.block_digest != digest || vote.phase != VotePhase::Commit {
                continue;
            }
            let Some(key) = self.validator_keys.get(&vote.voter) else {
                continue;
            };
            if vote.signature_verifies(key) {
                voters.insert(vote.voter.clone());
            }
        }
        if voters.len() < self.quorum {
            return false;
        }
        self.ledger.append_block(cert.block.clone()).is_ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{digest, CertificateAuthority};
    use crate::ledger::{Role, FragmentedLedger};
    use crate::records::{make_signed_record, ForensicRecord, RecordKind};

    fn seed(n: u8) -> [u8; 32] {
        let mut s = [0u8; 32];
        s[0] = n;
        s
    }

    fn names(n: usize) -> Vec<ValidatorId> {
        (0..n).map(|i| ValidatorId::new(format!("v{i}"))).collect()
    }

    #[test]
    fn quorum_values_match_two_thirds_rule() {
        assert_eq!(quorum(1), 1);
        assert_eq!(quorum(4), 3);
        assert_eq!(quorum(7), 5);
        assert_eq!(quorum(10), 7);
    }

    #[test]
    fn config_enforces_fault_bound() {
        assert!(RoundConfig::new(names(4), 1, 10, 30).is_ok());
        assert!(matches!(
            RoundConfig::new(names(3), 1, 10, 30),
            Err(ConfigError::TooFewValidators { n: 3, f: 1 })
        ));
    }

    #[test]
    fn single_validator_is_always_leader() {
        let config = RoundConfig::new(names(1), 0, 10, 30).unwrap();
        for round in 0..20 {
            assert_eq!(
                elect_leader(&config, &digest(b"tip"), round),
                ValidatorId::new("v0")
            );
        }
    }

    #[test]
    fn leader_election_is_deterministic() {
        let config = RoundConfig::new(names(4), 1, 10, 30).unwrap();
        let tip = digest(b"genesis");
        for round in 0..50 {
            assert_eq!(
                elect_leader(&config, &tip, round),
                elect_leader(&config, &tip, round)
            );
        }
    }

    /// Independent evaluation of the election formula (fold-free big-integer
    /// reduction via u128 over the first 16 bytes is not equivalent, so the
    /// check uses full modular reduction written separately), plus the smoke
    /// check that every validator gets elected somewhere in 100 rounds.
    #[test]
    fn leader_election_matches_independent_formula_and_covers_all() {
        let config = RoundConfig::new(names(4), 1, 10, 30).unwrap();
        let tip = Block::genesis().block_digest;
        let mut elected = BTreeSet::new();
        for round in 0..100u64 {
            let mut input = Vec::new();
            input.extend_from_slice(&tip.0);
            input.extend_from_slice(&round.to_be_bytes());
            let d = crate::crypto::digest(&input);
            // Reference reduction: repeated remainder over the decimal value,
            // done with u128 chunks of the big-endian integer.
            let mut acc: u128 = 0;
            for b in d.0 {
                acc = (acc << 8 | b as u128) % 4;
            }
            let expect = config.validator_ids[acc as usize].clone();
            let got = elect_leader(&config, &tip, round);
            assert_eq!(got, expect);
            elected.insert(got);
        }
        assert_eq!(elected.len(), 4, "every validator should lead at least once");
    }

    struct Net {
        ca: CertificateAuthority,
        vehicle: crate::crypto::KeyPair,
        cert: crate::crypto::PseudonymCertificate,
        validators: Vec<ValidatorState>,
    }

    fn build_net(n: usize, f: usize) -> Net {
        let mut ca = CertificateAuthority::new(crate::crypto::KeyPair::generate(seed(100)));
        let vehicle = crate::crypto::KeyPair::generate(seed(101));
        let cert = ca
            .issue_pseudonym_batch(&[vehicle.public()], 600)
            .unwrap()
            .remove(0);
        let mut certs = CertLookup::new();
        certs.insert(cert.pseudonym_id, cert.clone());

        let config = RoundConfig::new(names(n), f, 10, 30).unwrap();
        let keys: Vec<crate::crypto::KeyPair> =
            (0..n).map(|i| crate::crypto::KeyPair::generate(seed(10 + i as u8))).collect();
        let key_map: BTreeMap<ValidatorId, PublicKey> = config
            .validator_ids
            .iter()
            .zip(&keys)
            .map(|(id, kp)| (id.clone(), kp.public()))
            .collect();
        let validators = config
            .validator_ids
            .iter()
            .zip(&keys)
            .map(|(id, kp)| {
                ValidatorState::new(
                    id.clone(),
                    kp.clone(),
                    config.clone(),
                    key_map.clone(),
                    ca.public_key(),
                    certs.clone(),
                    SharedLedger::with_genesis(),
                )
            })
            .collect();
        Net {
            ca,
            vehicle,
            cert,
            validators,
        }
    }

    fn make_tx(net: &Net, submit_time: u64, payload: u8) -> HashTransaction {
        let record = make_signed_record(
            ForensicRecord::Bsm({
                let mut b = crate::records::tests::sample_bsm();
                b.sender = net.cert.pseudonym_id;
                b.timestamp = submit_time;
                b.positional_accuracy_mm = payload as u32;
                b
            }),
            &net.cert,
            &net.vehicle,
            submit_time,
        )
        .unwrap();
        let mut tx = HashTransaction {
            record_digest: record.digest().unwrap(),
            record_kind: RecordKind::Bsm,
            pseudonym_id: net.cert.pseudonym_id,
            submit_time,
            signature: Signature::EMPTY,
        };
        tx.signature = net.vehicle.sign(&tx.signing_payload());
        tx
    }

    /// Deliver all pending messages until quiescence, with no loss.
    fn run_to_quiescence(validators: &mut [ValidatorState], initial: Vec<(ValidatorId, ConsensusMessage)>) {
        let mut queue = std::collections::VecDeque::from(initial);
        while let Some((target, msg)) = queue.pop_front() {
            let idx = validators.iter().position(|v| *v.id() == target).unwrap();
            let from_ids: Vec<ValidatorId> = Vec::new();
            let _ = from_ids;
            // Determine sender: encoded in the message for votes; for
            // pre-prepare the leader field. Tests deliver with true sender.
            let sender = match &msg {
                ConsensusMessage::PrePrepare(pp) => pp.leader.clone(),
                ConsensusMessage::Prepare(v) | ConsensusMessage::Commit(v) => v.voter.clone(),
                ConsensusMessage::NewRound { .. } => target.clone(),
            };
            let out = validators[idx].on_message(&sender, msg, 0);
            queue.extend(out.to_validators);
        }
    }

    #[test]
    fn validate_transaction_verdicts() {
        let net = build_net(4, 1);
        let ca_pub = net.ca.public_key();
        let mut certs = CertLookup::new();
        certs.insert(net.cert.pseudonym_id, net.cert.clone());

        let tx = make_tx(&net, 700, 1);
        assert_eq!(
            validate_transaction(&tx, &ca_pub, &certs, |_| false),
            TxVerdict::Accept
        );

        // Boundary: the last covered second is valid_until - 1.
        let tx_at_end = make_tx(&net, 899, 2);
        assert_eq!(
            validate_transaction(&tx_at_end, &ca_pub, &certs, |_| false),
            TxVerdict::Accept
        );
        let tx_past = make_tx(&net, 900, 3);
        assert_eq!(
            validate_transaction(&tx_past, &ca_pub, &certs, |_| false),
            TxVerdict::OutsideValidityWindow
        );

        // Unknown pseudonym.
        assert_eq!(
            validate_transaction(&tx, &ca_pub, &CertLookup::new(), |_| false),
            TxVerdict::UnknownPseudonym
        );

        // Duplicate.
        assert_eq!(
            validate_transaction(&tx, &ca_pub, &certs, |_| true),
            TxVerdict::Duplicate
        );

        // Tampered signature.
        let mut forged = tx;
        forged.signature.0[0] ^= 1;
        assert_eq!(
            validate_transaction(&forged, &ca_pub, &certs, |_| false),
            TxVerdict::BadSignature
        );
    }

    #[test]
    fn duplicate_submission_is_rejected_by_mempool() {
        let mut net = build_net(4, 1);
        let tx = make_tx(&net, 700, 1);
        let (first, _) = net.validators[0].receive_transaction(tx.clone());
        assert_eq!(first, TxVerdict::Accept);
        let (second, _) = net.validators[0].receive_transaction(tx);
        assert_eq!(second, TxVerdict::Duplicate);
    }

    #[test]
    fn proposal_caps_and_orders_transactions() {
        let mut net = build_net(4, 1);
        // Insert transactions in scrambled submit-time order.
        for (i, t) in [705u64, 701, 703, 702, 704].iter().enumerate() {
            let tx = make_tx(&net, *t, i as u8);
            let (verdict, _) = net.validators[0].receive_transaction(tx);
            assert_eq!(verdict, TxVerdict::Accept);
        }
        let block = net.validators[0].propose_block(20_000).unwrap();
        let times: Vec<u64> = block.transactions.iter().map(|t| t.submit_time).collect();
        assert_eq!(times, vec![701, 702, 703, 704, 705]);
        assert_eq!(block.height, 1);
    }

    #[test]
    fn identical_state_proposes_identical_blocks() {
        let mut net = build_net(4, 1);
        let tx = make_tx(&net, 700, 1);
        net.validators[0].receive_transaction(tx.clone());
        net.validators[1].receive_transaction(tx);
        let a = net.validators[0].propose_block(20_000).unwrap();
        let b = net.validators[1].propose_block(20_000).unwrap();
        // Same mempool and tip; leader id differs only in the leader field.
        assert_eq!(a.transactions, b.transactions);
        assert_eq!(a.prev_digest, b.prev_digest);
    }

    #[test]
    fn full_round_commits_on_all_validators() {
        let mut net = build_net(4, 1);
        let tx = make_tx(&net, 700, 1);
        for v in net.validators.iter_mut() {
            v.receive_transaction(tx.clone());
        }
        let leader = net.validators[0].current_leader();
        let idx = net
            .validators
            .iter()
            .position(|v| *v.id() == leader)
            .unwrap();
        let out = net.validators[idx].on_block_tick(10_000);
        run_to_quiescence(&mut net.validators, out.to_validators);

        let digests: Vec<Digest> = net
            .validators
            .iter()
            .map(|v| v.ledger().tip_digest())
            .collect();
        assert!(net.validators.iter().all(|v| v.ledger().height() == Some(1)));
        assert!(digests.windows(2).all(|w| w[0] == w[1]));
        assert!(net.validators.iter().all(|v| v.round() == 1));
        assert!(net.validators.iter().all(|v| v.mempool_len() == 0));
    }

    #[test]
    fn single_validator_commits_alone() {
        let mut net = build_net(1, 0);
        let tx = make_tx(&net, 700, 1);
        net.validators[0].receive_transaction(tx);
        let out = net.validators[0].on_block_tick(10_000);
        assert_eq!(out.committed.len(), 1);
        assert_eq!(net.validators[0].ledger().height(), Some(1));
    }

    #[test]
    fn non_leader_pre_prepare_is_dropped() {
        let mut net = build_net(4, 1);
        let tx = make_tx(&net, 700, 1);
        for v in net.validators.iter_mut() {
            v.receive_transaction(tx.clone());
        }
        let leader = net.validators[0].current_leader();
        let impostor_idx = net
            .validators
            .iter()
            .position(|v| *v.id() != leader)
            .unwrap();
        let impostor_id = net.validators[impostor_idx].id().clone();
        let block = net.validators[impostor_idx].propose_block(10_000).unwrap();
        let keypair = crate::crypto::KeyPair::generate(seed(10 + impostor_idx as u8));
        let pp = PrePrepare::signed(0, block, impostor_id.clone(), &keypair);

        let target = (impostor_idx + 1) % 4;
        let before = net.validators[target].phase();
        let out = net.validators[target].on_message(
            &impostor_id,
            ConsensusMessage::PrePrepare(pp),
            0,
        );
        assert!(out.to_validators.is_empty());
        assert_eq!(net.validators[target].phase(), before);
        assert!(out.trace.iter().any(|t| t.kind == "drop_not_leader"));
    }

    #[test]
    fn two_prepares_do_not_advance_phase_when_quorum_is_three() {
        let mut net = build_net(4, 1);
        let tx = make_tx(&net, 700, 1);
        for v in net.validators.iter_mut() {
            v.receive_transaction(tx.clone());
        }
        let leader = net.validators[0].current_leader();
        let idx = net.validators.iter().position(|v| *v.id() == leader).unwrap();
        let out = net.validators[idx].on_block_tick(10_000);

        // Deliver the pre-prepare to exactly one follower, then one prepare.
        let (follower_id, pp) = out
            .to_validators
            .iter()
            .find(|(_, m)| matches!(m, ConsensusMessage::PrePrepare(_)))
            .cloned()
            .unwrap();
        let fidx = net.validators.iter().position(|v| *v.id() == follower_id).unwrap();
        let fout = net.validators[fidx].on_message(&leader, pp, 0);
        // Follower now has its own prepare; add the leader's prepare: 2 < 3.
        let leader_prepare = fout
            .to_validators
            .iter()
            .map(|(_, m)| m)
            .find(|m| matches!(m, ConsensusMessage::Prepare(_)));
        assert!(leader_prepare.is_some());
        assert_eq!(net.validators[fidx].phase(), Phase::PrePrepared);
    }

    #[test]
    fn timeout_advances_round_monotonically() {
        let mut net = build_net(4, 1);
        assert_eq!(net.validators[0].round(), 0);
        let out = net.validators[0].on_timeout_check(0, 30_000);
        assert_eq!(net.validators[0].round(), 1);
        assert_eq!(out.schedule_timeout, Some(1));
        assert!(out
            .to_validators
            .iter()
            .all(|(_, m)| matches!(m, ConsensusMessage::NewRound { round: 1, .. })));
        // Stale timeout for round 0 is a no-op now.
        let out2 = net.validators[0].on_timeout_check(0, 60_000);
        assert_eq!(net.validators[0].round(), 1);
        assert!(out2.trace.is_empty());
        // Next timeout advances again.
        net.validators[0].on_timeout_check(1, 60_000);
        assert_eq!(net.validators[0].round(), 2);
    }

    #[test]
    fn timeout_retains_mempool() {
        let mut net = build_net(4, 1);
        let tx = make_tx(&net, 700, 1);
        net.validators[0].receive_transaction(tx);
        net.validators[0].on_timeout_check(0, 30_000);
        assert_eq!(net.validators[0].mempool_len(), 1);
    }

    #[test]
    fn replayed_votes_are_ignored() {
        let mut net = build_net(4, 1);
        let tx = make_tx(&net, 700, 1);
        for v in net.validators.iter_mut() {
            v.receive_transaction(tx.clone());
        }
        let leader = net.validators[0].current_leader();
        let lidx = net.validators.iter().position(|v| *v.id() == leader).unwrap();
        let out = net.validators[lidx].on_block_tick(10_000);
        let (fid, pp) = out
            .to_validators
            .iter()
            .find(|(_, m)| matches!(m, ConsensusMessage::PrePrepare(_)))
            .cloned()
            .unwrap();
        let fidx = net.validators.iter().position(|v| *v.id() == fid).unwrap();
        net.validators[fidx].on_message(&leader, pp, 0);

        // Replay the leader's prepare twice; the tally must count it once.
        let leader_prepare = out
            .to_validators
            .iter()
            .filter_map(|(t, m)| {
                if *t == fid {
                    if let ConsensusMessage::Prepare(v) = m {
                        return Some(v.clone());
                    }
                }
                None
            })
            .next()
            .unwrap();
        net.validators[fidx].on_message(&leader, ConsensusMessage::Prepare(leader_prepare.clone()), 0);
        let out2 = net.validators[fidx].on_message(&leader, ConsensusMessage::Prepare(leader_prepare), 0);
        assert!(out2.trace.iter().any(|t| t.kind == "drop_duplicate_vote"));
        assert_eq!(net.validators[fidx].phase(), Phase::Prepared);
    }

    #[test]
    fn corrupted_vote_signature_is_dropped() {
        let mut net = build_net(4, 1);
        let voter = net.validators[1].id().clone();
        let mut vote = Vote::signed(
            VotePhase::Prepare,
            0,
            digest(b"whatever"),
            voter.clone(),
            &crate::crypto::KeyPair::generate(seed(11)),
        );
        vote.signature.0[0] ^= 0xFF;
        let out = net.validators[0].on_message(&voter, ConsensusMessage::Prepare(vote), 0);
        assert!(out.trace.iter().any(|t| t.kind == "drop_bad_sig"));
    }

    #[test]
    fn committed_transactions_validate_individually_post_hoc() {
        let mut net = build_net(4, 1);
        for i in 0..5u8 {
            let tx = make_tx(&net, 700 + i as u64, i);
            for v in net.validators.iter_mut() {
                v.receive_transaction(tx.clone());
            }
        }
        let leader = net.validators[0].current_leader();
        let idx = net.validators.iter().position(|v| *v.id() == leader).unwrap();
        let out = net.validators[idx].on_block_tick(10_000);
        run_to_quiescence(&mut net.validators, out.to_validators);

        let mut certs = CertLookup::new();
        certs.insert(net.cert.pseudonym_id, net.cert.clone());
        for v in &net.validators {
            for block in v.ledger().blocks().iter().skip(1) {
                for tx in &block.transactions {
                    assert_eq!(
                        validate_transaction(tx, &net.ca.public_key(), &certs, |_| false),
                        TxVerdict::Accept
                    );
                }
            }
        }
    }

    #[test]
    fn monitor_accepts_only_quorum_certificates() {
        let mut net = build_net(4, 1);
        let tx = make_tx(&net, 700, 1);
        for v in net.validators.iter_mut() {
            v.receive_transaction(tx.clone());
        }
        let leader = net.validators[0].current_leader();
        let idx = net.validators.iter().position(|v| *v.id() == leader).unwrap();
        let out = net.validators[idx].on_block_tick(10_000);

        let key_map: BTreeMap<ValidatorId, PublicKey> = net.validators[0]
            .config()
            .validator_ids
            .iter()
            .enumerate()
            .map(|(i, id)| {
                (
                    id.clone(),
                    crate::crypto::KeyPair::generate(seed(10 + i as u8)).public(),
                )
            })
            .collect();
        let mut monitor = MonitorState::new(
            "m0".into(),
            net.validators[0].config(),
            key_map,
            SharedLedger::with_genesis(),
        );

        let mut queue = std::collections::VecDeque::from(out.to_validators);
        let mut cert: Option<BlockCertificate> = None;
        while let Some((target, msg)) = queue.pop_front() {
            let sender = match &msg {
                ConsensusMessage::PrePrepare(pp) => pp.leader.clone(),
                ConsensusMessage::Prepare(v) | ConsensusMessage::Commit(v) => v.voter.clone(),
                ConsensusMessage::NewRound { .. } => target.clone(),
            };
            let tidx = net.validators.iter().position(|v| *v.id() == target).unwrap();
            let step = net.validators[tidx].on_message(&sender, msg, 0);
            if let Some(c) = step.committed.into_iter().next() {
                cert.get_or_insert(c);
            }
            queue.extend(step.to_validators);
        }
        let cert = cert.expect("some validator committed");

        // Truncated certificate: below quorum.
        let mut weak = cert.clone();
        weak.commits.truncate(2);
        assert!(!monitor.receive_certificate(&weak));
        assert_eq!(monitor.ledger().height(), Some(0));

        assert!(monitor.receive_certificate(&cert));
        assert_eq!(monitor.ledger().height(), Some(1));
        // Duplicate delivery is ignored.
        assert!(!monitor.receive_certificate(&cert));
        assert_eq!(
            monitor.ledger().tip_digest(),
            net.validators[0].ledger().tip_digest()
        );
    }

    #[test]
    fn consensus_messages_roundtrip_canonically() {
        let block = Block::genesis();
        let kp = crate::crypto::KeyPair::generate(seed(42));
        let msgs = vec![
            ConsensusMessage::PrePrepare(PrePrepare::signed(
                3,
                block.clone(),
                ValidatorId::new("v1"),
                &kp,
            )),
            ConsensusMessage::Prepare(Vote::signed(
                VotePhase::Prepare,
                4,
                block.block_digest,
                ValidatorId::new("v2"),
                &kp,
            )),
            ConsensusMessage::Commit(Vote::signed(
                VotePhase::Commit,
                5,
                block.block_digest,
                ValidatorId::new("v3"),
                &kp,
            )),
            ConsensusMessage::NewRound {
                round: 6,
                reason: NewRoundReason::Timeout,
            },
        ];
        for msg in msgs {
            let bytes = msg.canon_bytes().unwrap();
            assert_eq!(ConsensusMessage::from_canon_bytes(&bytes).unwrap(), msg);
        }
    }

    // Fragments get exercised together with consensus in the simulator; the
    // import here keeps the test surface honest about the storage side.
    #[test]
    fn committed_record_is_fetchable_from_fragment() {
        let net = build_net(4, 1);
        let record = make_signed_record(
            ForensicRecord::Bsm({
                let mut b = crate::records::tests::sample_bsm();
                b.sender = net.cert.pseudonym_id;
                b
            }),
            &net.cert,
            &net.vehicle,
            700,
        )
        .unwrap();
        let mut fragment = FragmentedLedger::new(Role::Insurer);
        let d = fragment.store(record.clone()).unwrap();
        assert_eq!(fragment.fetch(&d), Some(&record));
    }
}
