//! Transactions, blocks, and the hash-linked chain.
//!
//! Every participant (device or site manager) is admitted by a genesis
//! transaction signed by the manufacturer authority and then forms its own
//! transaction chain: each later transaction carries `p_t_id`, the id of the
//! participant's previous transaction. Blocks link by previous-block hash,
//! carry a root over their transaction ids, and are endorsed by validators;
//! the [`Chain`] replays all of this to audit a stored ledger byte by byte.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;
use core::fmt;

use rand_core::CryptoRngCore;

use crate::consensus::ValidatorSet;
use crate::crypto::{
    self, envelope_encrypt, hash, verify, CryptoError, Digest, Envelope, KeyPair, PublicKey,
    SecretKey, Signature, DIGEST_LEN, KEY_LEN, SIGNATURE_LEN,
};

/// Upper bound on transactions per block.
pub const MAX_BLOCK_TXS: usize = 256;

// ---------------------------------------------------------------------------
// Transactions
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TxKind {
    Genesis,
    KeyUpdate,
    LogStore,
    AnomalyAlert,
}

impl TxKind {
    pub fn tag(self) -> u8 {
        match self {
            TxKind::Genesis => 0,
            TxKind::KeyUpdate => 1,
            TxKind::LogStore => 2,
            TxKind::AnomalyAlert => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Option<TxKind> {
        match tag {
            0 => Some(TxKind::Genesis),
            1 => Some(TxKind::KeyUpdate),
            2 => Some(TxKind::LogStore),
            3 => Some(TxKind::AnomalyAlert),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TxKind::Genesis => "genesis",
            TxKind::KeyUpdate => "key-update",
            TxKind::LogStore => "log-store",
            TxKind::AnomalyAlert => "anomaly-alert",
        }
    }
}

/// One ledger transaction. Which optional fields are present is fixed by the
/// kind: genesis carries `pk_data` plus the manufacturer's `authority_sig`;
/// key updates carry the new `pk_data` signed under the previous one; log
/// stores carry `p_t_id` and an encrypted `log`; anomaly alerts additionally
/// carry `m_pk`, the suspect's public key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transaction {
    pub kind: TxKind,
    /// Hash of the canonical serialization of all fields below.
    pub t_id: Digest,
    pub p_t_id: Option<Digest>,
    pub pk: PublicKey,
    pub pk_data: Option<PublicKey>,
    pub m_pk: Option<PublicKey>,
    pub log: Option<Envelope>,
    pub timestamp: u64,
    pub signature: Signature,
    /// Manufacturer signature admitting a participant (genesis only). A
    /// genesis transaction carries the same manufacturer signature in
    /// `signature`, since the admitted device never sees its own genesis
    /// before it is published.
    pub authority_sig: Option<Signature>,
}

impl Transaction {
    /// Deterministic byte form covered by `t_id` and all signatures: the
    /// kind tag, then each field as a 4-byte big-endian length prefix plus
    /// raw bytes, in the fixed order `p_t_id, pk, pk_data, m_pk, log,
    /// timestamp`. Absent optional fields contribute a zero-length entry,
    /// which keeps the encoding injective for variable-length logs.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let log_bytes = self.log.as_ref().map(|e| e.to_bytes());
        let mut out = Vec::with_capacity(64 + log_bytes.as_ref().map_or(0, |b| b.len()));
        out.push(self.kind.tag());
        push_entry(&mut out, self.p_t_id.as_ref().map_or(&[][..], |d| &d.0));
        push_entry(&mut out, &self.pk.0);
        push_entry(&mut out, self.pk_data.as_ref().map_or(&[][..], |k| &k.0));
        push_entry(&mut out, self.m_pk.as_ref().map_or(&[][..], |k| &k.0));
        push_entry(&mut out, log_bytes.as_deref().unwrap_or(&[]));
        push_entry(&mut out, &self.timestamp.to_be_bytes());
        out
    }

    /// Full storage form: canonical bytes, then `t_id`, `signature`, and a
    /// length-prefixed `authority_sig` entry.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = self.canonical_bytes();
        out.extend_from_slice(&self.t_id.0);
        out.extend_from_slice(&self.signature.0);
        push_entry(
            &mut out,
            self.authority_sig.as_ref().map_or(&[][..], |s| &s.0),
        );
        out
    }

    /// Decode one transaction, consuming the whole slice.
    pub fn decode(bytes: &[u8]) -> Result<Transaction, CodecError> {
        let mut r = Reader::new(bytes);
        let tag = r.take(1)?[0];
        let kind = TxKind::from_tag(tag).ok_or(CodecError::BadTag(tag))?;
        let p_t_id = optional_digest(r.entry()?)?;
        let pk = PublicKey::from_slice(r.entry()?).map_err(|_| CodecError::BadFieldLength("pk"))?;
        let pk_data = optional_key(r.entry()?)?;
        let m_pk = optional_key(r.entry()?)?;
        let log_bytes = r.entry()?;
        let log = if log_bytes.is_empty() {
            None
        } else {
            Some(Envelope::from_bytes(log_bytes).map_err(|_| CodecError::BadFieldLength("log"))?)
        };
        let ts_bytes = r.entry()?;
        let timestamp = u64::from_be_bytes(
            ts_bytes
                .try_into()
                .map_err(|_| CodecError::BadFieldLength("timestamp"))?,
        );
        let t_id = Digest(
            r.take(DIGEST_LEN)?
                .try_into()
                .expect("reader returned requested length"),
        );
        let signature = Signature(
            r.take(SIGNATURE_LEN)?
                .try_into()
                .expect("reader returned requested length"),
        );
        let auth_bytes = r.entry()?;
        let authority_sig = if auth_bytes.is_empty() {
            None
        } else {
            Some(
                Signature::from_slice(auth_bytes)
                    .map_err(|_| CodecError::BadFieldLength("authority_sig"))?,
            )
        };
        r.finish()?;
        Ok(Transaction {
            kind,
            t_id,
            p_t_id,
            pk,
            pk_data,
            m_pk,
            log,
            timestamp,
            signature,
            authority_sig,
        })
    }
}

fn push_entry(out: &mut Vec<u8>, bytes: &[u8]) {
    out.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
    out.extend_from_slice(bytes);
}

fn optional_digest(bytes: &[u8]) -> Result<Option<Digest>, CodecError> {
    if bytes.is_empty() {
        return Ok(None);
    }
    Digest::from_slice(bytes)
        .map(Some)
        .map_err(|_| CodecError::BadFieldLength("p_t_id"))
}

fn optional_key(bytes: &[u8]) -> Result<Option<PublicKey>, CodecError> {
    if bytes.is_empty() {
        return Ok(None);
    }
    PublicKey::from_slice(bytes)
        .map(Some)
        .map_err(|_| CodecError::BadFieldLength("pk_data/m_pk"))
}

/// Build the manufacturer's genesis transaction admitting `device_pk` and
/// announcing the data-encryption key the device must use.
pub fn build_genesis_tx(
    device_pk: PublicKey,
    pk_data: PublicKey,
    authority: &KeyPair,
    timestamp: u64,
) -> Transaction {
    let mut tx = Transaction {
        kind: TxKind::Genesis,
        t_id: Digest::ZERO,
        p_t_id: None,
        pk: device_pk,
        pk_data: Some(pk_data),
        m_pk: None,
        log: None,
        timestamp,
        signature: Signature([0u8; SIGNATURE_LEN]),
        authority_sig: None,
    };
    let canon = tx.canonical_bytes();
    tx.t_id = hash(&canon);
    let sig = crypto::sign(&authority.secret, &canon);
    tx.signature = sig;
    tx.authority_sig = Some(sig);
    tx
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BuildError {
    /// Anomaly alerts must name the suspect public key.
    MissingSuspectKey,
    Crypto(CryptoError),
}

impl fmt::Display for BuildError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BuildError::MissingSuspectKey => write!(f, "anomaly alert requires m_pk"),
            BuildError::Crypto(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for BuildError {}

impl From<CryptoError> for BuildError {
    fn from(e: CryptoError) -> Self {
        BuildError::Crypto(e)
    }
}

/// Build a device transaction: a log store, or an anomaly alert when `m_pk`
/// names the suspect. The payload is envelope-encrypted under `pk_data` and
/// the transaction is chained onto `prev_t_id`, the device's latest
/// transaction id.
#[allow(clippy::too_many_arguments)]
pub fn build_device_tx(
    kind: TxKind,
    device: &KeyPair,
    prev_t_id: Digest,
    payload: &[u8],
    pk_data: &PublicKey,
    m_pk: Option<PublicKey>,
    timestamp: u64,
    rng: &mut impl CryptoRngCore,
) -> Result<Transaction, BuildError> {
    debug_assert!(matches!(kind, TxKind::LogStore | TxKind::AnomalyAlert));
    if kind == TxKind::AnomalyAlert && m_pk.is_none() {
        return Err(BuildError::MissingSuspectKey);
    }
    let log = envelope_encrypt(pk_data, payload, rng)?;
    let mut tx = Transaction {
        kind,
        t_id: Digest::ZERO,
        p_t_id: Some(prev_t_id),
        pk: device.public,
        pk_data: None,
        m_pk: if kind == TxKind::AnomalyAlert { m_pk } else { None },
        log: Some(log),
        timestamp,
        signature: Signature([0u8; SIGNATURE_LEN]),
        authority_sig: None,
    };
    let canon = tx.canonical_bytes();
    tx.t_id = hash(&canon);
    tx.signature = crypto::sign(&device.secret, &canon);
    Ok(tx)
}

/// Build a key-update transaction announcing `new_pk_data`, signed with the
/// secret key behind the chain's current data key.
pub fn build_key_update_tx(
    new_pk_data: PublicKey,
    old_sk_data: &SecretKey,
    timestamp: u64,
) -> Transaction {
    let old_pair = KeyPair::from_seed(old_sk_data.as_bytes()).expect("secret key is 32 bytes");
    let mut tx = Transaction {
        kind: TxKind::KeyUpdate,
        t_id: Digest::ZERO,
        p_t_id: None,
        pk: old_pair.public,
        pk_data: Some(new_pk_data),
        m_pk: None,
        log: None,
        timestamp,
        signature: Signature([0u8; SIGNATURE_LEN]),
        authority_sig: None,
    };
    let canon = tx.canonical_bytes();
    tx.t_id = hash(&canon);
    tx.signature = crypto::sign(&old_pair.secret, &canon);
    tx
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

/// Outcome of validating one transaction; non-`Accept` variants name the
/// first rule that failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TxVerdict {
    Accept,
    /// Required field absent, or a field present that the kind forbids.
    MissingField,
    /// `t_id` does not match the recomputed canonical hash.
    BadHash,
    /// Signature does not verify under the responsible key.
    BadSignature,
    /// Participant has no genesis transaction (or duplicates one).
    Unauthorized,
    /// `p_t_id` does not point at the participant's latest transaction.
    BrokenDeviceChain,
}

impl TxVerdict {
    pub fn is_accept(self) -> bool {
        self == TxVerdict::Accept
    }

    pub fn name(self) -> &'static str {
        match self {
            TxVerdict::Accept => "accept",
            TxVerdict::MissingField => "missing-field",
            TxVerdict::BadHash => "bad-hash",
            TxVerdict::BadSignature => "bad-signature",
            TxVerdict::Unauthorized => "unauthorized",
            TxVerdict::BrokenDeviceChain => "broken-device-chain",
        }
    }
}

impl fmt::Display for TxVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Mutable view of chain state used to validate transactions in sequence,
/// so transactions inside one block may chain onto each other.
pub(crate) struct ValidationView<'c> {
    chain: Option<&'c Chain>,
    authority_pk: PublicKey,
    pk_data: PublicKey,
    tips: BTreeMap<PublicKey, Digest>,
    admitted: BTreeSet<PublicKey>,
}

impl<'c> ValidationView<'c> {
    pub(crate) fn of_chain(chain: &'c Chain) -> Self {
        ValidationView {
            chain: Some(chain),
            authority_pk: chain.authority_pk,
            pk_data: chain.current_pk_data,
            tips: BTreeMap::new(),
            admitted: BTreeSet::new(),
        }
    }

    /// View over nothing but the authority key: used to admit the genesis
    /// block itself.
    pub(crate) fn bootstrap(authority_pk: PublicKey, pk_data: PublicKey) -> Self {
        ValidationView {
            chain: None,
            authority_pk,
            pk_data,
            tips: BTreeMap::new(),
            admitted: BTreeSet::new(),
        }
    }

    fn is_admitted(&self, pk: &PublicKey) -> bool {
        self.admitted.contains(pk)
            || self
                .chain
                .map(|c| c.authorized.contains(pk))
                .unwrap_or(false)
    }

    fn tip(&self, pk: &PublicKey) -> Option<Digest> {
        self.tips.get(pk).copied().or_else(|| {
            self.chain
                .and_then(|c| c.device_index.get(pk).and_then(|ids| ids.last().copied()))
        })
    }

    pub(crate) fn validate(&self, tx: &Transaction) -> TxVerdict {
        if !shape_ok(tx) {
            return TxVerdict::MissingField;
        }
        let canon = tx.canonical_bytes();
        if hash(&canon) != tx.t_id {
            return TxVerdict::BadHash;
        }
        match tx.kind {
            TxKind::Genesis => {
                let auth = tx.authority_sig.as_ref().expect("shape checked");
                if !verify(&self.authority_pk, &canon, &tx.signature)
                    || !verify(&self.authority_pk, &canon, auth)
                {
                    return TxVerdict::BadSignature;
                }
                if self.is_admitted(&tx.pk) {
                    return TxVerdict::Unauthorized;
                }
            }
            TxKind::KeyUpdate => {
                if tx.pk != self.pk_data || !verify(&self.pk_data, &canon, &tx.signature) {
                    return TxVerdict::BadSignature;
                }
            }
            TxKind::LogStore | TxKind::AnomalyAlert => {
                if !verify(&tx.pk, &canon, &tx.signature) {
                    return TxVerdict::BadSignature;
                }
                if !self.is_admitted(&tx.pk) {
                    return TxVerdict::Unauthorized;
                }
                if self.tip(&tx.pk) != tx.p_t_id {
                    return TxVerdict::BrokenDeviceChain;
                }
            }
        }
        TxVerdict::Accept
    }

    /// Record an accepted transaction's effect on the view.
    pub(crate) fn apply(&mut self, tx: &Transaction) {
        match tx.kind {
            TxKind::Genesis => {
                self.admitted.insert(tx.pk);
                self.tips.insert(tx.pk, tx.t_id);
            }
            TxKind::KeyUpdate => {
                self.pk_data = tx.pk_data.expect("shape checked");
            }
            TxKind::LogStore | TxKind::AnomalyAlert => {
                self.tips.insert(tx.pk, tx.t_id);
            }
        }
    }
}

fn shape_ok(tx: &Transaction) -> bool {
    match tx.kind {
        TxKind::Genesis => {
            tx.pk_data.is_some()
                && tx.authority_sig.is_some()
                && tx.p_t_id.is_none()
                && tx.m_pk.is_none()
                && tx.log.is_none()
        }
        TxKind::KeyUpdate => {
            tx.pk_data.is_some()
                && tx.authority_sig.is_none()
                && tx.p_t_id.is_none()
                && tx.m_pk.is_none()
                && tx.log.is_none()
        }
        TxKind::LogStore => {
            tx.p_t_id.is_some()
                && tx.log.is_some()
                && tx.pk_data.is_none()
                && tx.m_pk.is_none()
                && tx.authority_sig.is_none()
        }
        TxKind::AnomalyAlert => {
            tx.p_t_id.is_some()
                && tx.log.is_some()
                && tx.m_pk.is_some()
                && tx.pk_data.is_none()
                && tx.authority_sig.is_none()
        }
    }
}

/// Validate one transaction against committed chain state.
pub fn validate_transaction(chain: &Chain, tx: &Transaction) -> TxVerdict {
    ValidationView::of_chain(chain).validate(tx)
}

// ---------------------------------------------------------------------------
// Blocks
// ---------------------------------------------------------------------------

/// One block. The header (height, previous hash, transaction root, proposer,
/// timestamp) is what gets hashed; endorsements are validator signatures
/// over that hash, and by convention the first endorsement is the
/// proposer's own.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub height: u64,
    pub prev_block_hash: Digest,
    pub tx_root: Digest,
    pub proposer_pk: PublicKey,
    pub timestamp: u64,
    pub transactions: Vec<Transaction>,
    pub endorsements: Vec<(PublicKey, Signature)>,
}

impl Block {
    /// Hash of the canonical 112-byte header serialization.
    pub fn hash(&self) -> Digest {
        let mut header = [0u8; 112];
        header[..8].copy_from_slice(&self.height.to_be_bytes());
        header[8..40].copy_from_slice(&self.prev_block_hash.0);
        header[40..72].copy_from_slice(&self.tx_root.0);
        header[72..104].copy_from_slice(&self.proposer_pk.0);
        header[104..112].copy_from_slice(&self.timestamp.to_be_bytes());
        hash(&header)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.height.to_be_bytes());
        out.extend_from_slice(&self.prev_block_hash.0);
        out.extend_from_slice(&self.tx_root.0);
        out.extend_from_slice(&self.proposer_pk.0);
        out.extend_from_slice(&self.timestamp.to_be_bytes());
        out.extend_from_slice(&(self.transactions.len() as u32).to_be_bytes());
        for tx in &self.transactions {
            push_entry(&mut out, &tx.encode());
        }
        out.extend_from_slice(&(self.endorsements.len() as u32).to_be_bytes());
        for (pk, sig) in &self.endorsements {
            out.extend_from_slice(&pk.0);
            out.extend_from_slice(&sig.0);
        }
        out
    }

    /// Decode one block, consuming the whole slice. Structural failures are
    /// reported with the transaction index they occurred in, so audits can
    /// localize tampering.
    pub fn decode(bytes: &[u8]) -> Result<Block, (Option<u32>, CodecError)> {
        let mut r = Reader::new(bytes);
        let mut block = (|r: &mut Reader| -> Result<Block, CodecError> {
            Ok(Block {
                height: r.u64be()?,
                prev_block_hash: Digest(r.take(DIGEST_LEN)?.try_into().expect("len")),
                tx_root: Digest(r.take(DIGEST_LEN)?.try_into().expect("len")),
                proposer_pk: PublicKey(r.take(KEY_LEN)?.try_into().expect("len")),
                timestamp: r.u64be()?,
                transactions: Vec::new(),
                endorsements: Vec::new(),
            })
        })(&mut r)
        .map_err(|e| (None, e))?;
        let tx_count = r.u32be().map_err(|e| (None, e))?;
        for i in 0..tx_count {
            let span = r.entry().map_err(|e| (Some(i), e))?;
            let tx = Transaction::decode(span).map_err(|e| (Some(i), e))?;
            block.transactions.push(tx);
        }
        let end_count = r.u32be().map_err(|e| (None, e))?;
        for _ in 0..end_count {
            let pk = PublicKey(
                r.take(KEY_LEN)
                    .map_err(|e| (None, e))?
                    .try_into()
                    .expect("len"),
            );
            let sig = Signature(
                r.take(SIGNATURE_LEN)
                    .map_err(|e| (None, e))?
                    .try_into()
                    .expect("len"),
            );
            block.endorsements.push((pk, sig));
        }
        r.finish().map_err(|e| (None, e))?;
        Ok(block)
    }
}

/// Root over the block's transaction ids: the hash of their concatenation
/// in block order.
pub fn tx_root(transactions: &[Transaction]) -> Digest {
    let mut concat = Vec::with_capacity(transactions.len() * DIGEST_LEN);
    for tx in transactions {
        concat.extend_from_slice(&tx.t_id.0);
    }
    hash(&concat)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BlockError {
    /// Height or previous-hash does not extend the current tip.
    StaleParent,
    /// Proposer is not the validator scheduled for this height.
    WrongProposer,
    TooManyTransactions(usize),
    /// Stored transaction root does not match the recomputed one.
    BadTxRoot,
    InvalidTx { index: u32, verdict: TxVerdict },
    /// An endorsement is by a non-member, duplicated, or fails to verify.
    BadEndorsement { index: u32 },
    InsufficientEndorsements { distinct: usize, quorum: usize },
}

impl fmt::Display for BlockError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BlockError::StaleParent => write!(f, "stale parent"),
            BlockError::WrongProposer => write!(f, "wrong proposer"),
            BlockError::TooManyTransactions(n) => write!(f, "{n} transactions exceeds limit"),
            BlockError::BadTxRoot => write!(f, "transaction root mismatch"),
            BlockError::InvalidTx { index, verdict } => {
                write!(f, "invalid transaction at index {index}: {verdict}")
            }
            BlockError::BadEndorsement { index } => write!(f, "bad endorsement at index {index}"),
            BlockError::InsufficientEndorsements { distinct, quorum } => {
                write!(f, "{distinct} endorsements, quorum is {quorum}")
            }
        }
    }
}

impl core::error::Error for BlockError {}

// ---------------------------------------------------------------------------
// Chain
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LedgerError {
    UnknownDevice(PublicKey),
}

impl fmt::Display for LedgerError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LedgerError::UnknownDevice(pk) => write!(f, "unknown device {pk}"),
        }
    }
}

impl core::error::Error for LedgerError {}

/// The committed chain plus the indexes rebuilt from it: per-device
/// transaction ids, the admitted participant set, and the currently
/// announced data key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chain {
    authority_pk: PublicKey,
    validators: ValidatorSet,
    blocks: Vec<Block>,
    device_index: BTreeMap<PublicKey, Vec<Digest>>,
    authorized: BTreeSet<PublicKey>,
    current_pk_data: PublicKey,
    tx_location: BTreeMap<Digest, (u64, u32)>,
}

impl Chain {
    /// Create a chain whose genesis block admits `participants` (devices and
    /// site managers alike) under the announced `pk_data`. The genesis block
    /// is authored by the manufacturer and carries no endorsements; quorum
    /// rules start at height 1.
    pub fn bootstrap(
        authority: &KeyPair,
        pk_data: PublicKey,
        participants: &[PublicKey],
        validators: ValidatorSet,
        timestamp: u64,
    ) -> Chain {
        let transactions: Vec<Transaction> = participants
            .iter()
            .map(|pk| build_genesis_tx(*pk, pk_data, authority, timestamp))
            .collect();
        let block = Block {
            height: 0,
            prev_block_hash: Digest::ZERO,
            tx_root: tx_root(&transactions),
            proposer_pk: authority.public,
            timestamp,
            transactions,
            endorsements: Vec::new(),
        };
        let mut chain = Chain {
            authority_pk: authority.public,
            validators,
            blocks: Vec::new(),
            device_index: BTreeMap::new(),
            authorized: BTreeSet::new(),
            current_pk_data: pk_data,
            tx_location: BTreeMap::new(),
        };
        chain.commit(block);
        chain
    }

    pub fn authority_pk(&self) -> &PublicKey {
        &self.authority_pk
    }

    pub fn validator_set(&self) -> &ValidatorSet {
        &self.validators
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn height(&self) -> u64 {
        self.blocks.last().map_or(0, |b| b.height)
    }

    pub fn tip_hash(&self) -> Digest {
        self.blocks.last().map_or(Digest::ZERO, |b| b.hash())
    }

    pub fn current_pk_data(&self) -> &PublicKey {
        &self.current_pk_data
    }

    pub fn authorized_devices(&self) -> &BTreeSet<PublicKey> {
        &self.authorized
    }

    pub fn device_index(&self) -> &BTreeMap<PublicKey, Vec<Digest>> {
        &self.device_index
    }

    pub fn is_committed(&self, t_id: &Digest) -> bool {
        self.tx_location.contains_key(t_id)
    }

    /// Latest committed transaction id of a participant; its genesis id if
    /// nothing else is committed yet.
    pub fn device_tip(&self, pk: &PublicKey) -> Option<Digest> {
        self.device_index.get(pk).and_then(|ids| ids.last().copied())
    }

    pub fn find_transaction(&self, t_id: &Digest) -> Option<&Transaction> {
        let (height, index) = self.tx_location.get(t_id)?;
        self.blocks
            .get(*height as usize)
            .and_then(|b| b.transactions.get(*index as usize))
    }

    /// Validate `block` as the next block and commit it. On any error the
    /// chain is left untouched.
    pub fn append_block(&mut self, block: Block) -> Result<(), BlockError> {
        self.check_block(&block)?;
        self.commit(block);
        Ok(())
    }

    /// All of `append_block`'s checks without the commit; endorsing
    /// validators run exactly this.
    pub fn check_block(&self, block: &Block) -> Result<(), BlockError> {
        if block.height != self.height() + 1 || block.prev_block_hash != self.tip_hash() {
            return Err(BlockError::StaleParent);
        }
        if block.transactions.len() > MAX_BLOCK_TXS {
            return Err(BlockError::TooManyTransactions(block.transactions.len()));
        }
        let scheduled = self.validators.scheduled_proposer(block.height);
        if block.proposer_pk != *scheduled {
            return Err(BlockError::WrongProposer);
        }
        if tx_root(&block.transactions) != block.tx_root {
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
        let block_hash = block.hash();
        let mut endorsers = BTreeSet::new();
        for (i, (pk, sig)) in block.endorsements.iter().enumerate() {
            let valid = self.validators.is_member(pk)
                && endorsers.insert(*pk)
                && verify(pk, &block_hash.0, sig);
            if !valid {
                return Err(BlockError::BadEndorsement { index: i as u32 });
            }
        }
        if endorsers.len() < self.validators.quorum() {
            return Err(BlockError::InsufficientEndorsements {
                distinct: endorsers.len(),
                quorum: self.validators.quorum(),
            });
        }
        Ok(())
    }

    fn commit(&mut self, block: Block) {
        let height = block.height;
        for (i, tx) in block.transactions.iter().enumerate() {
            match tx.kind {
                TxKind::Genesis => {
                    self.authorized.insert(tx.pk);
                    self.device_index.entry(tx.pk).or_default().push(tx.t_id);
                }
                TxKind::KeyUpdate => {
                    self.current_pk_data = tx.pk_data.expect("validated shape");
                }
                TxKind::LogStore | TxKind::AnomalyAlert => {
                    self.device_index.entry(tx.pk).or_default().push(tx.t_id);
                }
            }
            self.tx_location.insert(tx.t_id, (height, i as u32));
        }
        self.blocks.push(block);
    }

    /// Committed transactions of one participant, in device-chain order.
    pub fn device_history(&self, device_pk: &PublicKey) -> Result<Vec<&Transaction>, LedgerError> {
        let ids = self
            .device_index
            .get(device_pk)
            .ok_or(LedgerError::UnknownDevice(*device_pk))?;
        let mut out = Vec::with_capacity(ids.len());
        let mut prev: Option<Digest> = None;
        for id in ids {
            let tx = self
                .find_transaction(id)
                .expect("indexed transaction exists");
            debug_assert_eq!(tx.p_t_id, prev, "device chain linkage");
            prev = Some(*id);
            out.push(tx);
        }
        Ok(out)
    }

    /// Full replay audit from the genesis block; reports the first
    /// divergence, if any.
    pub fn verify(&self) -> AuditReport {
        match replay(self.authority_pk, self.validators.clone(), &self.blocks) {
            Ok(_) => AuditReport { fault: None },
            Err(fault) => AuditReport { fault: Some(fault) },
        }
    }

    /// Serialize the whole chain, including the authority key and validator
    /// set needed to re-validate it.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHAIN_MAGIC);
        out.extend_from_slice(&self.authority_pk.0);
        out.extend_from_slice(&(self.validators.members().len() as u32).to_be_bytes());
        for pk in self.validators.members() {
            out.extend_from_slice(&pk.0);
        }
        out.extend_from_slice(&(self.blocks.len() as u32).to_be_bytes());
        for block in &self.blocks {
            push_entry(&mut out, &block.encode());
        }
        out
    }

    /// Decode and fully re-validate a serialized chain.
    pub fn decode(bytes: &[u8]) -> Result<Chain, ChainFault> {
        let (authority_pk, validators, blocks) = decode_chain_parts(bytes)?;
        replay(authority_pk, validators, &blocks)
    }
}

const CHAIN_MAGIC: &[u8; 8] = b"ICSLOG01";

/// Audit a serialized chain without trusting any of it: structural decode
/// failures and replay failures are both localized to (height, tx).
pub fn audit_chain_bytes(bytes: &[u8]) -> AuditReport {
    let fault = match decode_chain_parts(bytes) {
        Ok((authority_pk, validators, blocks)) => replay(authority_pk, validators, &blocks).err(),
        Err(fault) => Some(fault),
    };
    AuditReport { fault }
}

fn decode_chain_parts(bytes: &[u8]) -> Result<(PublicKey, ValidatorSet, Vec<Block>), ChainFault> {
    let structural = |height: u64, tx: Option<u32>, what: &'static str| ChainFault {
        height,
        tx_index: tx,
        kind: FaultKind::Structural(what),
    };
    let mut r = Reader::new(bytes);
    let magic = r
        .take(8)
        .map_err(|_| structural(0, None, "truncated header"))?;
    if magic != CHAIN_MAGIC {
        return Err(structural(0, None, "bad magic"));
    }
    let authority_pk = PublicKey(
        r.take(KEY_LEN)
            .map_err(|_| structural(0, None, "truncated header"))?
            .try_into()
            .expect("len"),
    );
    let n = r
        .u32be()
        .map_err(|_| structural(0, None, "truncated header"))?;
    let mut members = Vec::with_capacity(n as usize);
    for _ in 0..n {
        members.push(PublicKey(
            r.take(KEY_LEN)
                .map_err(|_| structural(0, None, "truncated header"))?
                .try_into()
                .expect("len"),
        ));
    }
    let validators =
        ValidatorSet::new(members).map_err(|_| structural(0, None, "bad validator set"))?;
    let block_count = r
        .u32be()
        .map_err(|_| structural(0, None, "truncated header"))?;
    let mut blocks = Vec::with_capacity(block_count as usize);
    for h in 0..block_count {
        let span = r
            .entry()
            .map_err(|_| structural(h as u64, None, "truncated block"))?;
        let block =
            Block::decode(span).map_err(|(tx, _)| structural(h as u64, tx, "malformed block"))?;
        blocks.push(block);
    }
    r.finish()
        .map_err(|_| structural(block_count as u64, None, "trailing bytes"))?;
    Ok((authority_pk, validators, blocks))
}

/// Rebuild chain state from raw blocks, re-validating everything.
fn replay(
    authority_pk: PublicKey,
    validators: ValidatorSet,
    blocks: &[Block],
) -> Result<Chain, ChainFault> {
    let fault = |height: u64, tx: Option<u32>, kind: FaultKind| ChainFault {
        height,
        tx_index: tx,
        kind,
    };
    let Some(genesis_block) = blocks.first() else {
        return Err(fault(0, None, FaultKind::Structural("empty chain")));
    };
    if genesis_block.height != 0 || genesis_block.prev_block_hash != Digest::ZERO {
        return Err(fault(0, None, FaultKind::BadGenesisBlock("height or parent")));
    }
    if genesis_block.proposer_pk != authority_pk {
        return Err(fault(0, None, FaultKind::BadGenesisBlock("proposer")));
    }
    if tx_root(&genesis_block.transactions) != genesis_block.tx_root {
        return Err(fault(0, None, FaultKind::Block(BlockError::BadTxRoot)));
    }
    let mut pk_data: Option<PublicKey> = None;
    for tx in &genesis_block.transactions {
        if tx.kind != TxKind::Genesis {
            return Err(fault(0, None, FaultKind::BadGenesisBlock("non-genesis tx")));
        }
        match (pk_data, tx.pk_data) {
            (None, announced) => pk_data = announced,
            (Some(a), Some(b)) if a == b => {}
            _ => {
                return Err(fault(
                    0,
                    None,
                    FaultKind::BadGenesisBlock("pk_data mismatch"),
                ))
            }
        }
    }
    let Some(pk_data) = pk_data else {
        return Err(fault(0, None, FaultKind::BadGenesisBlock("no participants")));
    };
    let mut view = ValidationView::bootstrap(authority_pk, pk_data);
    for (i, tx) in genesis_block.transactions.iter().enumerate() {
        let verdict = view.validate(tx);
        if !verdict.is_accept() {
            return Err(fault(0, Some(i as u32), FaultKind::Tx(verdict)));
        }
        view.apply(tx);
    }
    let mut chain = Chain {
        authority_pk,
        validators,
        blocks: Vec::new(),
        device_index: BTreeMap::new(),
        authorized: BTreeSet::new(),
        current_pk_data: pk_data,
        tx_location: BTreeMap::new(),
    };
    chain.commit(genesis_block.clone());
    for block in &blocks[1..] {
        let height = block.height;
        chain.append_block(block.clone()).map_err(|e| {
            let tx_index = match &e {
                BlockError::InvalidTx { index, .. } => Some(*index),
                _ => None,
            };
            let kind = match e {
                BlockError::InvalidTx { verdict, .. } => FaultKind::Tx(verdict),
                other => FaultKind::Block(other),
            };
            fault(height, tx_index, kind)
        })?;
    }
    Ok(chain)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditReport {
    pub fault: Option<ChainFault>,
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        self.fault.is_none()
    }
}

impl fmt::Display for AuditReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.fault {
            None => write!(f, "clean"),
            Some(fault) => write!(f, "{fault}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainFault {
    pub height: u64,
    pub tx_index: Option<u32>,
    pub kind: FaultKind,
}

impl fmt::Display for ChainFault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.tx_index {
            Some(i) => write!(f, "block {} tx {}: {}", self.height, i, self.kind),
            None => write!(f, "block {}: {}", self.height, self.kind),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FaultKind {
    /// Bytes could not be decoded at all.
    Structural(&'static str),
    /// The genesis block violates its special shape.
    BadGenesisBlock(&'static str),
    Block(BlockError),
    Tx(TxVerdict),
}

impl fmt::Display for FaultKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FaultKind::Structural(what) => write!(f, "structural: {what}"),
            FaultKind::BadGenesisBlock(what) => write!(f, "bad genesis block: {what}"),
            FaultKind::Block(e) => write!(f, "{e}"),
            FaultKind::Tx(v) => write!(f, "{v}"),
        }
    }
}

// ---------------------------------------------------------------------------
// Byte reader
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CodecError {
    Truncated,
    TrailingBytes,
    BadTag(u8),
    BadFieldLength(&'static str),
}

impl fmt::Display for CodecError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CodecError::Truncated => write!(f, "truncated input"),
            CodecError::TrailingBytes => write!(f, "trailing bytes"),
            CodecError::BadTag(t) => write!(f, "unknown kind tag {t}"),
            CodecError::BadFieldLength(field) => write!(f, "bad length for field {field}"),
        }
    }
}

impl core::error::Error for CodecError {}

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        let end = self.pos.checked_add(n).ok_or(CodecError::Truncated)?;
        if end > self.buf.len() {
            return Err(CodecError::Truncated);
        }
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub(crate) fn u32be(&mut self) -> Result<u32, CodecError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().expect("len")))
    }

    pub(crate) fn u64be(&mut self) -> Result<u64, CodecError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().expect("len")))
    }

    /// A 4-byte big-endian length prefix followed by that many bytes.
    pub(crate) fn entry(&mut self) -> Result<&'a [u8], CodecError> {
        let len = self.u32be()? as usize;
        self.take(len)
    }

    /// Require that the input was consumed exactly.
    pub(crate) fn finish(&self) -> Result<(), CodecError> {
        if self.pos == self.buf.len() {
            Ok(())
        } else {
            Err(CodecError::TrailingBytes)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consensus::ValidatorSet;
    use crate::crypto::envelope_decrypt;
    use rand_core::SeedableRng;

    fn rng(seed: u64) -> rand_chacha::ChaCha12Rng {
        rand_chacha::ChaCha12Rng::seed_from_u64(seed)
    }

    fn pair(tag: u8) -> KeyPair {
        KeyPair::from_seed(&[tag; 32]).unwrap()
    }

    struct Fixture {
        authority: KeyPair,
        data_key: KeyPair,
        validator: KeyPair,
        device_a: KeyPair,
        device_b: KeyPair,
        chain: Chain,
    }

    fn fixture() -> Fixture {
        let authority = pair(1);
        let data_key = pair(2);
        let validator = pair(3);
        let device_a = pair(4);
        let device_b = pair(5);
        let chain = Chain::bootstrap(
            &authority,
            data_key.public,
            &[device_a.public, device_b.public, validator.public],
            ValidatorSet::new(alloc::vec![validator.public]).unwrap(),
            0,
        );
        Fixture {
            authority,
            data_key,
            validator,
            device_a,
            device_b,
            chain,
        }
    }

    /// Assemble and endorse a block extending the fixture chain.
    fn make_block(fx: &Fixture, transactions: Vec<Transaction>, timestamp: u64) -> Block {
        let height = fx.chain.height() + 1;
        let mut block = Block {
            height,
            prev_block_hash: fx.chain.tip_hash(),
            tx_root: tx_root(&transactions),
            proposer_pk: fx.validator.public,
            timestamp,
            transactions,
            endorsements: Vec::new(),
        };
        let sig = crypto::sign(&fx.validator.secret, &block.hash().0);
        block.endorsements.push((fx.validator.public, sig));
        block
    }

    fn log_tx(fx: &Fixture, device: &KeyPair, payload: &[u8], ts: u64, seed: u64) -> Transaction {
        let prev = fx.chain.device_tip(&device.public).unwrap();
        build_device_tx(
            TxKind::LogStore,
            device,
            prev,
            payload,
            &fx.data_key.public,
            None,
            ts,
            &mut rng(seed),
        )
        .unwrap()
    }

    #[test]
    fn canonical_serialization_is_deterministic() {
        let fx = fixture();
        let tx = log_tx(&fx, &fx.device_a, b"log line", 7, 1);
        assert_eq!(tx.canonical_bytes(), tx.canonical_bytes());
    }

    #[test]
    fn canonical_serialization_differs_on_log_byte() {
        let fx = fixture();
        let tx = log_tx(&fx, &fx.device_a, b"log line", 7, 1);
        let mut other = tx.clone();
        other.log.as_mut().unwrap().ciphertext[0] ^= 1;
        assert_ne!(tx.canonical_bytes(), other.canonical_bytes());
    }

    #[test]
    fn transaction_encode_decode_round_trip() {
        let fx = fixture();
        for tx in [
            log_tx(&fx, &fx.device_a, b"payload", 9, 2),
            build_genesis_tx(fx.device_a.public, fx.data_key.public, &fx.authority, 3),
            build_key_update_tx(pair(9).public, &fx.data_key.secret, 4),
            build_device_tx(
                TxKind::AnomalyAlert,
                &fx.validator,
                fx.chain.device_tip(&fx.validator.public).unwrap(),
                b"pattern",
                &fx.data_key.public,
                Some(fx.device_b.public),
                5,
                &mut rng(3),
            )
            .unwrap(),
        ] {
            let decoded = Transaction::decode(&tx.encode()).unwrap();
            assert_eq!(decoded, tx);
        }
    }

    #[test]
    fn genesis_validates_against_fresh_chain() {
        let fx = fixture();
        let tx = build_genesis_tx(pair(8).public, fx.data_key.public, &fx.authority, 1);
        assert_eq!(validate_transaction(&fx.chain, &tx), TxVerdict::Accept);
    }

    #[test]
    fn genesis_with_tampered_pk_data_fails_validation() {
        let fx = fixture();
        let mut tx = build_genesis_tx(pair(8).public, fx.data_key.public, &fx.authority, 1);
        tx.pk_data = Some(pair(9).public);
        // The hash no longer matches the canonical bytes, so rule (a) fires.
        assert_eq!(validate_transaction(&fx.chain, &tx), TxVerdict::BadHash);
        // Re-stamping the hash without re-signing trips the signature rule.
        tx.t_id = hash(&tx.canonical_bytes());
        assert_eq!(validate_transaction(&fx.chain, &tx), TxVerdict::BadSignature);
    }

    #[test]
    fn genesis_ids_differ_per_device() {
        let fx = fixture();
        let a = build_genesis_tx(pair(8).public, fx.data_key.public, &fx.authority, 1);
        let b = build_genesis_tx(pair(9).public, fx.data_key.public, &fx.authority, 1);
        assert_ne!(a.t_id, b.t_id);
    }

    #[test]
    fn duplicate_genesis_is_unauthorized() {
        let fx = fixture();
        let dup = build_genesis_tx(fx.device_a.public, fx.data_key.public, &fx.authority, 1);
        assert_eq!(validate_transaction(&fx.chain, &dup), TxVerdict::Unauthorized);
    }

    #[test]
    fn log_store_round_trips_through_validation_and_decryption() {
        let fx = fixture();
        let tx = log_tx(&fx, &fx.device_a, b"sensor says 42", 10, 4);
        assert_eq!(validate_transaction(&fx.chain, &tx), TxVerdict::Accept);
        let opened = envelope_decrypt(&fx.data_key.secret, tx.log.as_ref().unwrap()).unwrap();
        assert_eq!(opened, b"sensor says 42");
    }

    #[test]
    fn log_store_chained_to_another_devices_tx_is_rejected() {
        let fx = fixture();
        let foreign_tip = fx.chain.device_tip(&fx.device_b.public).unwrap();
        let tx = build_device_tx(
            TxKind::LogStore,
            &fx.device_a,
            foreign_tip,
            b"x",
            &fx.data_key.public,
            None,
            10,
            &mut rng(5),
        )
        .unwrap();
        assert_eq!(
            validate_transaction(&fx.chain, &tx),
            TxVerdict::BrokenDeviceChain
        );
    }

    #[test]
    fn log_store_from_unauthorized_key_is_rejected() {
        let fx = fixture();
        let outsider = pair(77);
        let tx = build_device_tx(
            TxKind::LogStore,
            &outsider,
            Digest::ZERO,
            b"x",
            &fx.data_key.public,
            None,
            10,
            &mut rng(6),
        )
        .unwrap();
        assert_eq!(validate_transaction(&fx.chain, &tx), TxVerdict::Unauthorized);
    }

    #[test]
    fn replayed_log_store_breaks_device_chain() {
        let mut fx = fixture();
        let tx1 = log_tx(&fx, &fx.device_a, b"one", 10, 7);
        let block = make_block(&fx, alloc::vec![tx1.clone()], 10);
        fx.chain.append_block(block).unwrap();
        // A second transaction pointing two steps back (at the genesis id).
        let genesis_id = fx.chain.device_index()[&fx.device_a.public][0];
        let replay = build_device_tx(
            TxKind::LogStore,
            &fx.device_a,
            genesis_id,
            b"two",
            &fx.data_key.public,
            None,
            11,
            &mut rng(8),
        )
        .unwrap();
        assert_eq!(
            validate_transaction(&fx.chain, &replay),
            TxVerdict::BrokenDeviceChain
        );
    }

    #[test]
    fn anomaly_alert_requires_suspect_key() {
        let fx = fixture();
        let err = build_device_tx(
            TxKind::AnomalyAlert,
            &fx.validator,
            fx.chain.device_tip(&fx.validator.public).unwrap(),
            b"pattern",
            &fx.data_key.public,
            None,
            10,
            &mut rng(9),
        )
        .unwrap_err();
        assert_eq!(err, BuildError::MissingSuspectKey);
    }

    #[test]
    fn key_update_rotates_current_pk_data() {
        let mut fx = fixture();
        let new_key = pair(20);
        let update = build_key_update_tx(new_key.public, &fx.data_key.secret, 12);
        assert_eq!(validate_transaction(&fx.chain, &update), TxVerdict::Accept);
        let block = make_block(&fx, alloc::vec![update], 12);
        fx.chain.append_block(block).unwrap();
        assert_eq!(fx.chain.current_pk_data(), &new_key.public);

        // A second update must be signed under the *new* key.
        let newer = pair(21);
        let stale = build_key_update_tx(newer.public, &fx.data_key.secret, 13);
        assert_eq!(
            validate_transaction(&fx.chain, &stale),
            TxVerdict::BadSignature
        );
        let fresh = build_key_update_tx(newer.public, &new_key.secret, 13);
        assert_eq!(validate_transaction(&fx.chain, &fresh), TxVerdict::Accept);
        let block = make_block(&fx, alloc::vec![fresh], 13);
        fx.chain.append_block(block).unwrap();
        assert_eq!(fx.chain.current_pk_data(), &newer.public);
    }

    #[test]
    fn key_update_signed_by_arbitrary_device_is_rejected() {
        let fx = fixture();
        let update = build_key_update_tx(pair(20).public, &fx.device_a.secret, 12);
        assert_eq!(
            validate_transaction(&fx.chain, &update),
            TxVerdict::BadSignature
        );
    }

    #[test]
    fn append_block_of_three_logs_grows_index() {
        let mut fx = fixture();
        let t1 = log_tx(&fx, &fx.device_a, b"a1", 10, 10);
        let t3 = log_tx(&fx, &fx.device_b, b"b1", 11, 11);
        // Second transaction for device A chains onto the first, inside the
        // same block.
        let t2 = build_device_tx(
            TxKind::LogStore,
            &fx.device_a,
            t1.t_id,
            b"a2",
            &fx.data_key.public,
            None,
            12,
            &mut rng(12),
        )
        .unwrap();
        let entries_before: usize = fx.chain.device_index().values().map(Vec::len).sum();
        let block = make_block(&fx, alloc::vec![t1, t2, t3], 12);
        fx.chain.append_block(block).unwrap();
        assert_eq!(fx.chain.height(), 1);
        let entries_after: usize = fx.chain.device_index().values().map(Vec::len).sum();
        assert_eq!(entries_after, entries_before + 3);
    }

    #[test]
    fn append_block_with_stale_parent_leaves_chain_unchanged() {
        let mut fx = fixture();
        let tx = log_tx(&fx, &fx.device_a, b"a", 10, 13);
        let mut block = make_block(&fx, alloc::vec![tx], 10);
        block.prev_block_hash = Digest([7u8; 32]);
        let before = fx.chain.encode();
        assert_eq!(fx.chain.append_block(block), Err(BlockError::StaleParent));
        assert_eq!(fx.chain.encode(), before);
    }

    #[test]
    fn append_block_is_atomic_on_invalid_tx() {
        let mut fx = fixture();
        let good = log_tx(&fx, &fx.device_a, b"ok", 10, 14);
        let mut bad = log_tx(&fx, &fx.device_b, b"bad", 10, 15);
        bad.timestamp += 1; // breaks the t_id without re-hashing
        let trailing = build_device_tx(
            TxKind::LogStore,
            &fx.device_a,
            good.t_id,
            b"after",
            &fx.data_key.public,
            None,
            11,
            &mut rng(16),
        )
        .unwrap();
        let block = make_block(&fx, alloc::vec![good, bad, trailing], 11);
        let before = fx.chain.encode();
        assert_eq!(
            fx.chain.append_block(block),
            Err(BlockError::InvalidTx {
                index: 1,
                verdict: TxVerdict::BadHash
            })
        );
        assert_eq!(fx.chain.encode(), before);
    }

    #[test]
    fn append_block_rejects_wrong_proposer() {
        let mut fx = fixture();
        let tx = log_tx(&fx, &fx.device_a, b"a", 10, 17);
        let mut block = make_block(&fx, alloc::vec![tx], 10);
        block.proposer_pk = fx.device_a.public;
        assert_eq!(fx.chain.append_block(block), Err(BlockError::WrongProposer));
    }

    #[test]
    fn append_block_rejects_missing_endorsements() {
        let mut fx = fixture();
        let tx = log_tx(&fx, &fx.device_a, b"a", 10, 18);
        let mut block = make_block(&fx, alloc::vec![tx], 10);
        block.endorsements.clear();
        assert_eq!(
            fx.chain.append_block(block),
            Err(BlockError::InsufficientEndorsements {
                distinct: 0,
                quorum: 1
            })
        );
    }

    fn ten_block_chain() -> Fixture {
        let mut fx = fixture();
        let mut seed = 100u64;
        for ts in 1..=10u64 {
            let a = log_tx(&fx, &fx.device_a, b"tick a", ts, seed);
            let b = log_tx(&fx, &fx.device_b, b"tick b", ts, seed + 1);
            seed += 2;
            let block = make_block(&fx, alloc::vec![a, b], ts);
            fx.chain.append_block(block).unwrap();
        }
        fx
    }

    #[test]
    fn verify_accepts_fresh_chain() {
        let fx = ten_block_chain();
        assert!(fx.chain.verify().is_clean());
        assert!(audit_chain_bytes(&fx.chain.encode()).is_clean());
    }

    #[test]
    fn verify_reports_flipped_ciphertext_byte_at_exact_tx() {
        let mut fx = ten_block_chain();
        fx.chain.blocks[4].transactions[1]
            .log
            .as_mut()
            .unwrap()
            .ciphertext[0] ^= 1;
        let report = fx.chain.verify();
        let fault = report.fault.unwrap();
        assert_eq!(fault.height, 4);
        assert_eq!(fault.tx_index, Some(1));
        assert_eq!(fault.kind, FaultKind::Tx(TxVerdict::BadHash));
    }

    #[test]
    fn verify_reports_deleted_middle_block() {
        let mut fx = ten_block_chain();
        fx.chain.blocks.remove(5);
        let report = fx.chain.verify();
        let fault = report.fault.unwrap();
        assert_eq!(fault.height, 6);
        assert_eq!(fault.kind, FaultKind::Block(BlockError::StaleParent));
    }

    #[test]
    fn device_history_is_ordered_and_matches_full_scan() {
        let fx = ten_block_chain();
        let history = fx.chain.device_history(&fx.device_a.public).unwrap();
        assert_eq!(history.len(), 11); // genesis + 10 logs

        // Full-scan oracle: walk every block and filter by pk.
        let mut scanned = Vec::new();
        for block in fx.chain.blocks() {
            for tx in &block.transactions {
                if tx.pk == fx.device_a.public {
                    scanned.push(tx.t_id);
                }
            }
        }
        let ids: Vec<Digest> = history.iter().map(|tx| tx.t_id).collect();
        assert_eq!(ids, scanned);

        // Linkage: p_t_id pointers reproduce the index order.
        for pairs in history.windows(2) {
            assert_eq!(pairs[1].p_t_id, Some(pairs[0].t_id));
        }
    }

    #[test]
    fn device_history_unknown_device_errors() {
        let fx = fixture();
        assert!(matches!(
            fx.chain.device_history(&pair(99).public),
            Err(LedgerError::UnknownDevice(_))
        ));
    }

    #[test]
    fn committed_chain_never_contains_unauthorized_pk() {
        let fx = ten_block_chain();
        for block in fx.chain.blocks() {
            for tx in &block.transactions {
                if matches!(tx.kind, TxKind::LogStore | TxKind::AnomalyAlert) {
                    assert!(fx.chain.authorized_devices().contains(&tx.pk));
                }
            }
        }
    }

    #[test]
    fn per_device_linkage_matches_index_replay() {
        let fx = ten_block_chain();
        for (pk, ids) in fx.chain.device_index() {
            // Rebuild the id sequence by following p_t_id pointers forward.
            let mut by_parent: BTreeMap<Option<Digest>, Digest> = BTreeMap::new();
            for block in fx.chain.blocks() {
                for tx in &block.transactions {
                    if tx.pk == *pk {
                        by_parent.insert(tx.p_t_id, tx.t_id);
                    }
                }
            }
            let mut rebuilt = Vec::new();
            let mut cursor: Option<Digest> = None;
            while let Some(next) = by_parent.get(&cursor) {
                rebuilt.push(*next);
                cursor = Some(*next);
            }
            assert_eq!(&rebuilt, ids);
        }
    }

    #[test]
    fn chain_encode_decode_round_trip() {
        let fx = ten_block_chain();
        let bytes = fx.chain.encode();
        let decoded = Chain::decode(&bytes).unwrap();
        assert_eq!(decoded, fx.chain);
        assert_eq!(decoded.encode(), bytes);
    }

    #[test]
    fn oversized_block_is_rejected() {
        let mut fx = fixture();
        let mut txs = Vec::new();
        let mut prev = fx.chain.device_tip(&fx.device_a.public).unwrap();
        for i in 0..(MAX_BLOCK_TXS + 1) {
            let tx = build_device_tx(
                TxKind::LogStore,
                &fx.device_a,
                prev,
                b"x",
                &fx.data_key.public,
                None,
                i as u64,
                &mut rng(1000 + i as u64),
            )
            .unwrap();
            prev = tx.t_id;
            txs.push(tx);
        }
        let block = make_block(&fx, txs, 1);
        assert_eq!(
            fx.chain.append_block(block),
            Err(BlockError::TooManyTransactions(MAX_BLOCK_TXS + 1))
        );
    }
}
