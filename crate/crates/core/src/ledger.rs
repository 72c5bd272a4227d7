//! The shared hash-chained ledger and the per-role fragmented content
//! stores.
//!
//! The shared ledger carries nothing but fixed-size digest transactions, so
//! its growth is independent of record payload sizes; full record content
//! lives in the fragment of whichever role collects that record kind.

use std::collections::BTreeMap;
use std::collections::HashMap;
use std::fmt;
use thiserror::Error;

use crate::crypto::{Digest, PseudonymId, PublicKey, Signature};
use crate::encoding::{
    canon_digest, Canon, CodecError, Decoder, Encoder, TAG_BLOCK, TAG_BLOCK_PAYLOAD,
    TAG_TRANSACTION, TAG_TRANSACTION_PAYLOAD,
};
use crate::records::{RecordKind, SignedRecord};

/// Upper bound on transactions per block.
pub const MAX_BLOCK_TRANSACTIONS: usize = 1024;

/// Canonical encoded size of a [`HashTransaction`], independent of the
/// underlying record: tag + digest + kind + pseudonym + time + signature.
pub const TRANSACTION_ENCODED_LEN: usize = 1 + 32 + 1 + 16 + 8 + 64;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LedgerError {
    #[error("block height {got} does not extend tip height {tip}")]
    HeightGap { got: u64, tip: i64 },
    #[error("block prev digest does not match tip digest")]
    WrongPrevDigest,
    #[error("block digest does not recompute")]
    DigestMismatch,
    #[error("genesis block must carry an all-zero prev digest")]
    BadGenesis,
    #[error("different record stored under digest {0}")]
    DigestCollision(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
}

/// Node identifier for validators, monitors, and block leaders.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ValidatorId(pub String);

impl ValidatorId {
    pub fn new(id: impl Into<String>) -> ValidatorId {
        ValidatorId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for ValidatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ValidatorId({})", self.0)
    }
}

impl fmt::Display for ValidatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// The only thing the shared ledger stores: a record digest plus the
/// pseudonym, time, and signature needed to validate membership.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HashTransaction {
    pub record_digest: Digest,
    pub record_kind: RecordKind,
    pub pseudonym_id: PseudonymId,
    pub submit_time: u64,
    pub signature: Signature,
}

impl HashTransaction {
    /// Bytes the submitting vehicle signs: every field except the signature.
    pub fn signing_payload(&self) -> Vec<u8> {
        let mut enc = Encoder::with_tag(TAG_TRANSACTION_PAYLOAD);
        enc.put_fixed(&self.record_digest.0);
        enc.put_u8(self.record_kind.to_byte());
        enc.put_fixed(&self.pseudonym_id.0);
        enc.put_u64(self.submit_time);
        enc.into_bytes()
    }

    /// Ordering key inside blocks and mempools.
    pub fn order_key(&self) -> (u64, Digest) {
        (self.submit_time, self.record_digest)
    }
}

impl Canon for HashTransaction {
    fn write(&self, enc: &mut Encoder) -> Result<(), CodecError> {
        enc.put_u8(TAG_TRANSACTION);
        enc.put_fixed(&self.record_digest.0);
        enc.put_u8(self.record_kind.to_byte());
        enc.put_fixed(&self.pseudonym_id.0);
        enc.put_u64(self.submit_time);
        enc.put_fixed(&self.signature.0);
        Ok(())
    }

    fn read(dec: &mut Decoder) -> Result<Self, CodecError> {
        dec.expect_tag(TAG_TRANSACTION)?;
        Ok(HashTransaction {
            record_digest: Digest(dec.take_fixed()?),
            record_kind: RecordKind::from_byte(dec.take_u8()?)?,
            pseudonym_id: PseudonymId(dec.take_fixed()?),
            submit_time: dec.take_u64()?,
            signature: Signature(dec.take_fixed()?),
        })
    }
}

/// One batch of agreed transactions, chained to its predecessor by digest.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block {
    pub height: u64,
    pub prev_digest: Digest,
    pub block_time: u64,
    pub leader_id: ValidatorId,
    pub transactions: Vec<HashTransaction>,
    pub block_digest: Digest,
}

impl Block {
    /// Assemble a block and fill in its digest.
    pub fn assemble(
        height: u64,
        prev_digest: Digest,
        block_time: u64,
        leader_id: ValidatorId,
        transactions: Vec<HashTransaction>,
    ) -> Block {
        let mut block = Block {
            height,
            prev_digest,
            block_time,
            leader_id,
            transactions,
            block_digest: Digest::ZERO,
        };
        block.block_digest = block.compute_digest();
        block
    }

    /// The genesis block shared by every ledger replica.
    pub fn genesis() -> Block {
        Block::assemble(0, Digest::ZERO, 0, ValidatorId::new("genesis"), Vec::new())
    }

    /// Digest over every field except `block_digest` itself.
    pub fn compute_digest(&self) -> Digest {
        let mut enc = Encoder::with_tag(TAG_BLOCK_PAYLOAD);
        self.write_payload(&mut enc)
            .expect("block payload encoding cannot fail");
        crate::crypto::digest(&enc.into_bytes())
    }

    pub fn digest_recomputes(&self) -> bool {
        self.compute_digest() == self.block_digest
    }

    fn write_payload(&self, enc: &mut Encoder) -> Result<(), CodecError> {
        enc.put_u64(self.height);
        enc.put_fixed(&self.prev_digest.0);
        enc.put_u64(self.block_time);
        enc.put_str(self.leader_id.as_str());
        enc.put_count(self.transactions.len());
        for tx in &self.transactions {
            tx.write(enc)?;
        }
        Ok(())
    }
}

impl Canon for Block {
    fn write(&self, enc: &mut Encoder) -> Result<(), CodecError> {
        enc.put_u8(TAG_BLOCK);
        self.write_payload(enc)?;
        enc.put_fixed(&self.block_digest.0);
        Ok(())
    }

    fn read(dec: &mut Decoder) -> Result<Self, CodecError> {
        dec.expect_tag(TAG_BLOCK)?;
        let height = dec.take_u64()?;
        let prev_digest = Digest(dec.take_fixed()?);
        let block_time = dec.take_u64()?;
        let leader_id = ValidatorId::new(dec.take_str()?);
        let n = dec.take_count()?;
        let mut transactions = Vec::with_capacity(n);
        for _ in 0..n {
            transactions.push(HashTransaction::read(dec)?);
        }
        Ok(Block {
            height,
            prev_digest,
            block_time,
            leader_id,
            transactions,
            block_digest: Digest(dec.take_fixed()?),
        })
    }
}

/// The replicated chain of digest transactions, with an index for O(1)
/// membership lookups during investigations.
#[derive(Clone, Debug, Default)]
pub struct SharedLedger {
    blocks: Vec<Block>,
    index: HashMap<Digest, (u64, usize)>,
}

impl SharedLedger {
    pub fn new() -> SharedLedger {
        SharedLedger::default()
    }

    /// An empty ledger with the genesis block already installed.
    pub fn with_genesis() -> SharedLedger {
        let mut ledger = SharedLedger::new();
        ledger
            .append_block(Block::genesis())
            .expect("genesis always appends to an empty ledger");
        ledger
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn height(&self) -> Option<u64> {
        self.blocks.last().map(|b| b.height)
    }

    pub fn tip_digest(&self) -> Digest {
        self.blocks.last().map_or(Digest::ZERO, |b| b.block_digest)
    }

    /// Total committed transactions.
    pub fn transaction_count(&self) -> usize {
        self.blocks.iter().map(|b| b.transactions.len()).sum()
    }

    /// Append `block` if it extends the tip; the ledger is unchanged on error.
    pub fn append_block(&mut self, block: Block) -> Result<(), LedgerError> {
        if !block.digest_recomputes() {
            return Err(LedgerError::DigestMismatch);
        }
        match self.blocks.last() {
            None => {
                if block.height != 0 {
                    return Err(LedgerError::HeightGap {
                        got: block.height,
                        tip: -1,
                    });
                }
                if block.prev_digest != Digest::ZERO {
                    return Err(LedgerError::BadGenesis);
                }
            }
            Some(tip) => {
                if block.height != tip.height + 1 {
                    return Err(LedgerError::HeightGap {
                        got: block.height,
                        tip: tip.height as i64,
                    });
                }
                if block.prev_digest != tip.block_digest {
                    return Err(LedgerError::WrongPrevDigest);
                }
            }
        }
        for (pos, tx) in block.transactions.iter().enumerate() {
            self.index.insert(tx.record_digest, (block.height, pos));
        }
        self.blocks.push(block);
        Ok(())
    }

    /// Recompute every block digest and every link. An empty ledger is
    /// vacuously intact.
    pub fn verify_chain(&self) -> bool {
        let mut prev: Option<&Block> = None;
        for (i, block) in self.blocks.iter().enumerate() {
            if block.height != i as u64 || !block.digest_recomputes() {
                return false;
            }
            let expected_prev = prev.map_or(Digest::ZERO, |p| p.block_digest);
            if block.prev_digest != expected_prev {
                return false;
            }
            prev = Some(block);
        }
        true
    }

    /// Locate a committed record digest as (height, position in block).
    pub fn contains_digest(&self, d: &Digest) -> Option<(u64, usize)> {
        self.index.get(d).copied()
    }

    /// Bytes of the canonical encodings of all blocks.
    pub fn encoded_size(&self) -> u64 {
        self.blocks
            .iter()
            .map(|b| b.canon_bytes().expect("committed blocks encode").len() as u64)
            .sum()
    }

    /// Serialize as length-prefixed canonical blocks.
    pub fn write_dump(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for block in &self.blocks {
            let bytes = block.canon_bytes().expect("committed blocks encode");
            out.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
            out.extend_from_slice(&bytes);
        }
        out
    }

    /// Parse a dump produced by [`SharedLedger::write_dump`]. The result is
    /// index-consistent but not yet chain-verified; call
    /// [`SharedLedger::verify_chain`] to check integrity.
    pub fn read_dump(bytes: &[u8]) -> Result<SharedLedger, LedgerError> {
        let mut blocks = Vec::new();
        let mut pos = 0usize;
        while pos < bytes.len() {
            if bytes.len() - pos < 4 {
                return Err(LedgerError::Codec(CodecError::UnexpectedEnd(pos)));
            }
            let len = u32::from_be_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
            pos += 4;
            if bytes.len() - pos < len {
                return Err(LedgerError::Codec(CodecError::LengthOverrun(len as u32)));
            }
            blocks.push(Block::from_canon_bytes(&bytes[pos..pos + len])?);
            pos += len;
        }
        let mut ledger = SharedLedger::new();
        for block in &blocks {
            for (tx_pos, tx) in block.transactions.iter().enumerate() {
                ledger.index.insert(tx.record_digest, (block.height, tx_pos));
            }
        }
        ledger.blocks = blocks;
        Ok(ledger)
    }
}

/// Which participant owns a fragmented content store.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Role {
    Insurer,
    Manufacturer,
    MaintenanceProvider,
    PersonalStore,
}

impl Role {
    pub const ALL: [Role; 4] = [
        Role::Insurer,
        Role::Manufacturer,
        Role::MaintenanceProvider,
        Role::PersonalStore,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Role::Insurer => "insurer",
            Role::Manufacturer => "manufacturer",
            Role::MaintenanceProvider => "maintenance_provider",
            Role::PersonalStore => "personal_store",
        }
    }
}

/// A participant's private store of full record content, keyed by the digest
/// that anchors each record to the shared ledger.
#[derive(Clone, Debug)]
pub struct FragmentedLedger {
    pub owner_role: Role,
    entries: BTreeMap<Digest, SignedRecord>,
}

impl FragmentedLedger {
    pub fn new(owner_role: Role) -> FragmentedLedger {
        FragmentedLedger {
            owner_role,
            entries: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn records(&self) -> impl Iterator<Item = (&Digest, &SignedRecord)> {
        self.entries.iter()
    }

    /// Store a record under its content digest. Storing identical content
    /// twice is idempotent; different content under one digest means the
    /// hash function failed and must abort the run.
    pub fn store(&mut self, record: SignedRecord) -> Result<Digest, LedgerError> {
        let digest = record.digest()?;
        if let Some(existing) = self.entries.get(&digest) {
            if *existing != record {
                return Err(LedgerError::DigestCollision(digest.to_hex()));
            }
            return Ok(digest);
        }
        self.entries.insert(digest, record);
        Ok(digest)
    }

    pub fn fetch(&self, d: &Digest) -> Option<&SignedRecord> {
        self.entries.get(d)
    }

    /// Bytes of the canonical encodings of all stored records.
    pub fn encoded_size(&self) -> u64 {
        self.entries
            .values()
            .map(|r| r.canon_bytes().expect("stored records encode").len() as u64)
            .sum()
    }
}

/// Byte accounting across the shared ledger and the fragments.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StorageStats {
    pub shared_bytes: u64,
    /// Shared transaction bytes divided by transaction count; absent when
    /// no transactions are committed.
    pub per_tx_shared_bytes: Option<u64>,
    pub fragment_bytes: u64,
}

/// Compute storage totals for a shared ledger and a set of fragments.
pub fn storage_stats(shared: &SharedLedger, fragments: &[&FragmentedLedger]) -> StorageStats {
    let tx_count = shared.transaction_count() as u64;
    let tx_bytes: u64 = shared
        .blocks()
        .iter()
        .flat_map(|b| &b.transactions)
        .map(|tx| tx.canon_bytes().expect("committed transactions encode").len() as u64)
        .sum();
    StorageStats {
        shared_bytes: shared.encoded_size(),
        per_tx_shared_bytes: (tx_count > 0).then(|| tx_bytes / tx_count),
        fragment_bytes: fragments.iter().map(|f| f.encoded_size()).sum(),
    }
}

/// A pseudonym certificate directory, as validators and investigators hold it.
pub type CertLookup = BTreeMap<PseudonymId, crate::crypto::PseudonymCertificate>;

/// Long-term keys of registered maintenance providers.
pub type ProviderKeys = BTreeMap<String, PublicKey>;
