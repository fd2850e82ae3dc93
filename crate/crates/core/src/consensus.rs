//! Block production by authorised validators: round-robin proposers and a
//! two-thirds endorsement quorum.
//!
//! The rule set is deliberately small — one scheduled proposer per height,
//! endorsements from distinct validators over the block hash, commit at
//! `floor(2n/3) + 1` — which is enough to exercise validator authorisation
//! and quorum failure end to end.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;
use core::fmt;

use crate::crypto::{self, Digest, KeyPair, PublicKey, Signature};
use crate::ledger::{Block, BlockError, Chain, Transaction, TxVerdict, ValidationView, MAX_BLOCK_TXS};

/// The authorised validators, in schedule order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidatorSet {
    members: Vec<PublicKey>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValidatorSetError {
    Empty,
    DuplicateMember,
}

impl fmt::Display for ValidatorSetError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidatorSetError::Empty => write!(f, "validator set is empty"),
            ValidatorSetError::DuplicateMember => write!(f, "duplicate validator"),
        }
    }
}

impl core::error::Error for ValidatorSetError {}

impl ValidatorSet {
    pub fn new(members: Vec<PublicKey>) -> Result<Self, ValidatorSetError> {
        if members.is_empty() {
            return Err(ValidatorSetError::Empty);
        }
        let distinct: BTreeSet<_> = members.iter().collect();
        if distinct.len() != members.len() {
            return Err(ValidatorSetError::DuplicateMember);
        }
        Ok(ValidatorSet { members })
    }

    pub fn members(&self) -> &[PublicKey] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        false // construction forbids empty sets
    }

    pub fn is_member(&self, pk: &PublicKey) -> bool {
        self.members.contains(pk)
    }

    /// Endorsements required to commit: `floor(2n/3) + 1`.
    pub fn quorum(&self) -> usize {
        self.members.len() * 2 / 3 + 1
    }

    /// Round-robin proposer for `height`: `members[(height - 1) mod n]`.
    /// Height 0 is the manufacturer's genesis block and has no scheduled
    /// proposer.
    pub fn scheduled_proposer(&self, height: u64) -> &PublicKey {
        debug_assert!(height >= 1, "height 0 is the genesis block");
        let idx = (height.saturating_sub(1) as usize) % self.members.len();
        &self.members[idx]
    }
}

/// FIFO queue of transactions awaiting commitment, deduplicated by id.
#[derive(Debug, Clone, Default)]
pub struct PendingPool {
    queue: Vec<Transaction>,
    known: BTreeSet<Digest>,
}

impl PendingPool {
    pub fn new() -> Self {
        PendingPool::default()
    }

    /// Enqueue unless the id was ever seen before. Returns whether it was
    /// admitted. Ids stay known after their transaction commits, so gossip
    /// re-deliveries never re-enter the queue.
    pub fn push(&mut self, tx: Transaction) -> bool {
        if !self.known.insert(tx.t_id) {
            return false;
        }
        self.queue.push(tx);
        true
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transaction> {
        self.queue.iter()
    }

    /// Drop every queued transaction the chain has committed.
    pub fn prune_committed(&mut self, chain: &Chain) {
        self.queue.retain(|tx| !chain.is_committed(&tx.t_id));
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProposeError {
    /// The proposer is not scheduled for the next height.
    NotScheduled,
    /// No valid pending transaction and no timeout to justify an empty block.
    EmptyProposal,
}

impl fmt::Display for ProposeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProposeError::NotScheduled => write!(f, "proposer not scheduled for this height"),
            ProposeError::EmptyProposal => write!(f, "nothing valid to propose"),
        }
    }
}

impl core::error::Error for ProposeError {}

/// Pending transactions that were skipped by a proposal, with the verdict
/// each one failed.
pub type SkipReport = Vec<(Digest, TxVerdict)>;

/// Assemble the next block from the pool in FIFO order, skipping (and
/// reporting) transactions that do not validate. The block carries the
/// proposer's own endorsement over its hash. `timeout_fired` permits an
/// empty block when the pool holds nothing valid.
pub fn propose_block(
    pool: &PendingPool,
    chain: &Chain,
    proposer: &KeyPair,
    now: u64,
    timeout_fired: bool,
) -> Result<(Block, SkipReport), ProposeError> {
    let height = chain.height() + 1;
    if *chain.validator_set().scheduled_proposer(height) != proposer.public {
        return Err(ProposeError::NotScheduled);
    }
    let mut view = ValidationView::of_chain(chain);
    let mut selected = Vec::new();
    let mut skipped = SkipReport::new();
    for tx in pool.iter() {
        if selected.len() == MAX_BLOCK_TXS {
            break;
        }
        let verdict = view.validate(tx);
        if verdict.is_accept() {
            view.apply(tx);
            selected.push(tx.clone());
        } else {
            skipped.push((tx.t_id, verdict));
        }
    }
    if selected.is_empty() && !timeout_fired {
        return Err(ProposeError::EmptyProposal);
    }
    let mut block = Block {
        height,
        prev_block_hash: chain.tip_hash(),
        tx_root: crate::ledger::tx_root(&selected),
        proposer_pk: proposer.public,
        timestamp: now,
        transactions: selected,
        endorsements: Vec::new(),
    };
    let sig = crypto::sign(&proposer.secret, &block.hash().0);
    block.endorsements.push((proposer.public, sig));
    Ok((block, skipped))
}

/// Re-validate a proposed block and, if it checks out, endorse its hash.
pub fn endorse_block(
    block: &Block,
    validator: &KeyPair,
    chain: &Chain,
) -> Result<(PublicKey, Signature), BlockError> {
    chain.check_block_content(block)?;
    let sig = crypto::sign(&validator.secret, &block.hash().0);
    Ok((validator.public, sig))
}

/// Attach endorsements to a proposed block and commit it if the distinct
/// endorser count meets quorum; committed ids are pruned from the pool.
pub fn finalize_block(
    mut block: Block,
    endorsements: Vec<(PublicKey, Signature)>,
    chain: &mut Chain,
    pool: &mut PendingPool,
) -> Result<(), BlockError> {
    let mut have: BTreeSet<PublicKey> = block.endorsements.iter().map(|(pk, _)| *pk).collect();
    for (pk, sig) in endorsements {
        if have.insert(pk) {
            block.endorsements.push((pk, sig));
        }
    }
    chain.append_block(block)?;
    pool.prune_committed(chain);
    Ok(())
}

/// One full consensus round driven by whoever holds the validator keys:
/// propose, endorse by everyone, finalize. Used by the simulator and by the
/// offline alert-commitment path.
pub fn run_round(
    chain: &mut Chain,
    pool: &mut PendingPool,
    validator_keys: &[KeyPair],
    now: u64,
) -> Result<SkipReport, RoundError> {
    let height = chain.height() + 1;
    let scheduled = *chain.validator_set().scheduled_proposer(height);
    let proposer = validator_keys
        .iter()
        .find(|kp| kp.public == scheduled)
        .ok_or(RoundError::MissingProposerKey)?;
    let (block, skipped) =
        propose_block(pool, chain, proposer, now, false).map_err(RoundError::Propose)?;
    let mut endorsements = Vec::new();
    for kp in validator_keys {
        if kp.public == proposer.public {
            continue;
        }
        let endorsement = endorse_block(&block, kp, chain).map_err(RoundError::Endorse)?;
        endorsements.push(endorsement);
    }
    finalize_block(block, endorsements, chain, pool).map_err(RoundError::Finalize)?;
    Ok(skipped)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RoundError {
    /// The scheduled proposer's keypair was not supplied.
    MissingProposerKey,
    Propose(ProposeError),
    Endorse(BlockError),
    Finalize(BlockError),
}

impl fmt::Display for RoundError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RoundError::MissingProposerKey => write!(f, "scheduled proposer key not available"),
            RoundError::Propose(e) => write!(f, "propose: {e}"),
            RoundError::Endorse(e) => write!(f, "endorse: {e}"),
            RoundError::Finalize(e) => write!(f, "finalize: {e}"),
        }
    }
}

impl core::error::Error for RoundError {}

impl Chain {
    /// Block checks shared by endorsers: everything `append_block` verifies
    /// except the endorsement quorum, which does not exist yet at
    /// endorsement time.
    pub fn check_block_content(&self, block: &Block) -> Result<(), BlockError> {
        if block.height != self.height() + 1 || block.prev_block_hash != self.tip_hash() {
            return Err(BlockError::StaleParent);
        }
        if block.transactions.len() > MAX_BLOCK_TXS {
            return Err(BlockError::TooManyTransactions(block.transactions.len()));
        }
        let scheduled = self.validator_set().scheduled_proposer(block.height);
        if block.proposer_pk != *scheduled {
            return Err(BlockError::WrongProposer);
        }
        if crate::ledger::tx_root(&block.transactions) != block.tx_root {
            return Err(BlockError::BadTxRoot);
        }
        let mut view = ValidationView::of_chain(self);
        for (i, tx) in block.transactions.iter().enumerate() {
            let verdict = view.validate(tx);
            if !verdict.is_accept() {
                return Err(BlockError::InvalidTx {
                    index: i as u32,
                    verdict,
                });
            }
            view.apply(tx);
        }
        Ok(())
    }
}
