//! Keys, signatures, content digests, and the short-lived pseudonym
//! certificates that give vehicles rotating identities.
//!
//! Certificates are valid for exactly five minutes and are issued in
//! contiguous batches so a vehicle always has exactly one identity for any
//! instant covered by its batch. All verification is pure: verdicts encode
//! the failure cause instead of erroring.

use ed25519_dalek::{Signer, SigningKey, Verifier, VerifyingKey};
use sha2::{Digest as _, Sha256};
use std::collections::BTreeSet;
use std::fmt;
use thiserror::Error;

use crate::encoding::{Canon, Decoder, Encoder, CodecError, TAG_CERTIFICATE, TAG_CERTIFICATE_PAYLOAD};

/// Validity span of every pseudonym certificate, in seconds.
pub const PSEUDONYM_VALIDITY_SECS: u64 = 300;

/// Byte width of [`Digest`].
pub const DIGEST_LEN: usize = 32;
/// Byte width of [`PublicKey`].
pub const PUBLIC_KEY_LEN: usize = 32;
/// Byte width of [`Signature`].
pub const SIGNATURE_LEN: usize = 64;
/// Byte width of [`PseudonymId`].
pub const PSEUDONYM_ID_LEN: usize = 16;

#[derive(Debug, Error)]
pub enum CryptoError {
    #[error("certificate batch requires at least one subject key")]
    EmptySubjectList,
}

/// 32-byte SHA-256 content digest.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Digest(pub [u8; DIGEST_LEN]);

impl Digest {
    pub const ZERO: Digest = Digest([0u8; DIGEST_LEN]);

    pub fn as_bytes(&self) -> &[u8; DIGEST_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    /// First four bytes as hex, used in trace lines and human summaries.
    pub fn short_hex(&self) -> String {
        hex::encode(&self.0[..4])
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({}..)", self.short_hex())
    }
}

/// Hash a byte string into a [`Digest`].
pub fn digest(message: &[u8]) -> Digest {
    let out = Sha256::digest(message);
    Digest(out.into())
}

/// Ed25519 verification key.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PublicKey(pub [u8; PUBLIC_KEY_LEN]);

impl PublicKey {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<PublicKey> {
        let bytes = hex::decode(s).ok()?;
        let arr: [u8; PUBLIC_KEY_LEN] = bytes.try_into().ok()?;
        Some(PublicKey(arr))
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({}..)", hex::encode(&self.0[..4]))
    }
}

/// Detached Ed25519 signature.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Signature(pub [u8; SIGNATURE_LEN]);

impl Signature {
    /// Placeholder used while assembling values whose signature is computed
    /// over the already-encoded unsigned fields.
    pub const EMPTY: Signature = Signature([0u8; SIGNATURE_LEN]);
}

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({}..)", hex::encode(&self.0[..4]))
    }
}

/// Signing/verification key pair. Generation is deterministic in the seed so
/// scenarios and tests reproduce bit-identically.
#[derive(Clone)]
pub struct KeyPair {
    signing: SigningKey,
    public: PublicKey,
}

impl KeyPair {
    pub fn generate(seed: [u8; 32]) -> KeyPair {
        let signing = SigningKey::from_bytes(&seed);
        let public = PublicKey(signing.verifying_key().to_bytes());
        KeyPair { signing, public }
    }

    pub fn public(&self) -> PublicKey {
        self.public
    }

    pub fn sign(&self, message: &[u8]) -> Signature {
        Signature(self.signing.sign(message).to_bytes())
    }
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair")
            .field("public", &self.public)
            .finish_non_exhaustive()
    }
}

/// Verify `sig` over `message` under `public`. Malformed key or signature
/// bytes yield `false`, never a panic.
pub fn verify(public: &PublicKey, message: &[u8], sig: &Signature) -> bool {
    let Ok(key) = VerifyingKey::from_bytes(&public.0) else {
        return false;
    };
    let sig = ed25519_dalek::Signature::from_bytes(&sig.0);
    key.verify(message, &sig).is_ok()
}

/// Rotating identity token: distinct per certificate, never reused by a CA.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PseudonymId(pub [u8; PSEUDONYM_ID_LEN]);

impl PseudonymId {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<PseudonymId> {
        let bytes = hex::decode(s).ok()?;
        let arr: [u8; PSEUDONYM_ID_LEN] = bytes.try_into().ok()?;
        Some(PseudonymId(arr))
    }
}

impl fmt::Debug for PseudonymId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PseudonymId({})", hex::encode(&self.0[..4]))
    }
}

/// CA-signed binding of a subject key to a five-minute validity window.
/// Windows are half-open: the certificate covers `valid_from ..= valid_until - 1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PseudonymCertificate {
    pub pseudonym_id: PseudonymId,
    pub subject_key: PublicKey,
    pub valid_from: u64,
    pub valid_until: u64,
    pub ca_signature: Signature,
}

impl PseudonymCertificate {
    pub fn covers(&self, at_time: u64) -> bool {
        self.valid_from <= at_time && at_time < self.valid_until
    }

    /// Bytes the CA signs: every field except the signature itself.
    pub fn signing_payload(&self) -> Vec<u8> {
        let mut enc = Encoder::with_tag(TAG_CERTIFICATE_PAYLOAD);
        enc.put_fixed(&self.pseudonym_id.0);
        enc.put_fixed(&self.subject_key.0);
        enc.put_u64(self.valid_from);
        enc.put_u64(self.valid_until);
        enc.into_bytes()
    }
}

impl Canon for PseudonymCertificate {
    fn write(&self, enc: &mut Encoder) -> Result<(), CodecError> {
        if self.valid_until.saturating_sub(self.valid_from) != PSEUDONYM_VALIDITY_SECS {
            return Err(CodecError::Invariant("certificate window must span exactly 300 s"));
        }
        enc.put_u8(TAG_CERTIFICATE);
        enc.put_fixed(&self.pseudonym_id.0);
        enc.put_fixed(&self.subject_key.0);
        enc.put_u64(self.valid_from);
        enc.put_u64(self.valid_until);
        enc.put_fixed(&self.ca_signature.0);
        Ok(())
    }

    fn read(dec: &mut Decoder) -> Result<Self, CodecError> {
        dec.expect_tag(TAG_CERTIFICATE)?;
        let cert = PseudonymCertificate {
            pseudonym_id: PseudonymId(dec.take_fixed()?),
            subject_key: PublicKey(dec.take_fixed()?),
            valid_from: dec.take_u64()?,
            valid_until: dec.take_u64()?,
            ca_signature: Signature(dec.take_fixed()?),
        };
        if cert.valid_until.saturating_sub(cert.valid_from) != PSEUDONYM_VALIDITY_SECS {
            return Err(CodecError::Invariant("certificate window must span exactly 300 s"));
        }
        Ok(cert)
    }
}

/// Outcome of checking a certificate at a point in time.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CertVerdict {
    Valid,
    BadSignature,
    Expired,
    NotYetValid,
}

/// Check the CA signature and the validity window of `cert` at `at_time`.
pub fn verify_certificate(
    ca_public: &PublicKey,
    cert: &PseudonymCertificate,
    at_time: u64,
) -> CertVerdict {
    if !verify(ca_public, &cert.signing_payload(), &cert.ca_signature) {
        return CertVerdict::BadSignature;
    }
    if at_time < cert.valid_from {
        return CertVerdict::NotYetValid;
    }
    if at_time >= cert.valid_until {
        return CertVerdict::Expired;
    }
    CertVerdict::Valid
}

/// Issues batches of pseudonym certificates. Pseudonym ids are derived from
/// the CA key and a monotone counter, so one CA never repeats an id.
pub struct CertificateAuthority {
    keypair: KeyPair,
    issued: BTreeSet<PseudonymId>,
    counter: u64,
}

impl CertificateAuthority {
    pub fn new(keypair: KeyPair) -> CertificateAuthority {
        CertificateAuthority {
            keypair,
            issued: BTreeSet::new(),
            counter: 0,
        }
    }

    pub fn public_key(&self) -> PublicKey {
        self.keypair.public()
    }

    pub fn issued_count(&self) -> usize {
        self.issued.len()
    }

    fn next_pseudonym_id(&mut self) -> PseudonymId {
        loop {
            let mut input = Vec::with_capacity(PUBLIC_KEY_LEN + 8);
            input.extend_from_slice(&self.keypair.public().0);
            input.extend_from_slice(&self.counter.to_be_bytes());
            self.counter += 1;
            let d = digest(&input);
            let mut id = [0u8; PSEUDONYM_ID_LEN];
            id.copy_from_slice(&d.0[..PSEUDONYM_ID_LEN]);
            let id = PseudonymId(id);
            if self.issued.insert(id) {
                return id;
            }
        }
    }

    /// Issue one certificate per subject key, with consecutive non-overlapping
    /// five-minute windows starting at `start_time`.
    pub fn issue_pseudonym_batch(
        &mut self,
        subject_keys: &[PublicKey],
        start_time: u64,
    ) -> Result<Vec<PseudonymCertificate>, CryptoError> {
        if subject_keys.is_empty() {
            return Err(CryptoError::EmptySubjectList);
        }
        let mut certs = Vec::with_capacity(subject_keys.len());
        for (i, subject) in subject_keys.iter().enumerate() {
            let valid_from = start_time + PSEUDONYM_VALIDITY_SECS * i as u64;
            let mut cert = PseudonymCertificate {
                pseudonym_id: self.next_pseudonym_id(),
                subject_key: *subject,
                valid_from,
                valid_until: valid_from + PSEUDONYM_VALIDITY_SECS,
                ca_signature: Signature::EMPTY,
            };
            cert.ca_signature = self.keypair.sign(&cert.signing_payload());
            certs.push(cert);
        }
        Ok(certs)
    }
}

impl fmt::Debug for CertificateAuthority {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CertificateAuthority")
            .field("public", &self.keypair.public())
            .field("issued", &self.issued.len())
            .finish()
    }
}
