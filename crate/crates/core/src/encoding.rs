//! Canonical byte encoding shared by digests, signatures, and the ledger
//! dump format.
//!
//! The encoding is deterministic and injective on valid values: a one-byte
//! type tag, then fields in declaration order. Integers are fixed-width
//! big-endian, physical quantities are fixed-point integers (mm, mm/s,
//! centidegrees), lists and maps are length-prefixed with map entries sorted
//! by key bytes, and optional fields carry a presence byte. Top-level
//! decoding rejects trailing bytes so a value has exactly one encoding.
//!
//! The full byte layout, including the tag table, is documented in
//! `docs/encoding.md`.

use thiserror::Error;

// Type tags. One byte, the first of every top-level encoding. Payload tags
// (the *_PAYLOAD variants) cover the sign-then-attach pattern: the signature
// is computed over a differently-tagged encoding of the unsigned fields, so
// no payload can be confused with a complete value.
pub const TAG_BSM: u8 = 0x01;
pub const TAG_EDR: u8 = 0x02;
pub const TAG_DIAGNOSIS: u8 = 0x03;
pub const TAG_MAINTENANCE: u8 = 0x04;
pub const TAG_MAINTENANCE_PAYLOAD: u8 = 0x05;
pub const TAG_SIGNED_RECORD: u8 = 0x10;
pub const TAG_SIGNED_RECORD_PAYLOAD: u8 = 0x11;
pub const TAG_CERTIFICATE: u8 = 0x20;
pub const TAG_CERTIFICATE_PAYLOAD: u8 = 0x21;
pub const TAG_TRANSACTION: u8 = 0x30;
pub const TAG_TRANSACTION_PAYLOAD: u8 = 0x31;
pub const TAG_BLOCK: u8 = 0x38;
pub const TAG_BLOCK_PAYLOAD: u8 = 0x39;
pub const TAG_PRE_PREPARE: u8 = 0x43;
pub const TAG_PREPARE: u8 = 0x44;
pub const TAG_COMMIT: u8 = 0x45;
pub const TAG_NEW_ROUND: u8 = 0x46;
pub const TAG_PRE_PREPARE_PAYLOAD: u8 = 0x47;
pub const TAG_PREPARE_PAYLOAD: u8 = 0x48;
pub const TAG_COMMIT_PAYLOAD: u8 = 0x49;
pub const TAG_BLOCK_CERTIFICATE: u8 = 0x4a;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CodecError {
    #[error("unexpected end of input at offset {0}")]
    UnexpectedEnd(usize),
    #[error("trailing bytes after value ({0} left)")]
    TrailingBytes(usize),
    #[error("unexpected type tag {found:#04x}, wanted {wanted:#04x}")]
    WrongTag { found: u8, wanted: u8 },
    #[error("unknown discriminant {0:#04x}")]
    UnknownDiscriminant(u8),
    #[error("invalid boolean byte {0:#04x}")]
    InvalidBool(u8),
    #[error("invalid presence byte {0:#04x}")]
    InvalidPresence(u8),
    #[error("map keys not strictly ascending")]
    UnsortedMap,
    #[error("string is not valid utf-8")]
    InvalidUtf8,
    #[error("length prefix {0} exceeds remaining input")]
    LengthOverrun(u32),
    #[error("value violates an invariant: {0}")]
    Invariant(&'static str),
}

/// Append-only canonical byte writer.
#[derive(Default)]
pub struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new() -> Encoder {
        Encoder::default()
    }

    pub fn with_tag(tag: u8) -> Encoder {
        let mut enc = Encoder::new();
        enc.put_u8(tag);
        enc
    }

    pub fn put_u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn put_bool(&mut self, v: bool) {
        self.buf.push(v as u8);
    }

    pub fn put_u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    pub fn put_u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    pub fn put_i32(&mut self, v: i32) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    pub fn put_i64(&mut self, v: i64) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    pub fn put_fixed(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    pub fn put_var_bytes(&mut self, bytes: &[u8]) {
        self.put_u32(bytes.len() as u32);
        self.buf.extend_from_slice(bytes);
    }

    pub fn put_str(&mut self, s: &str) {
        self.put_var_bytes(s.as_bytes());
    }

    pub fn put_count(&mut self, n: usize) {
        self.put_u32(n as u32);
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }
}

/// Cursor over canonical bytes. Every read is bounds-checked.
pub struct Decoder<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Decoder<'a> {
    pub fn new(buf: &'a [u8]) -> Decoder<'a> {
        Decoder { buf, pos: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        if self.remaining() < n {
            return Err(CodecError::UnexpectedEnd(self.pos));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn take_u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.take(1)?[0])
    }

    pub fn take_bool(&mut self) -> Result<bool, CodecError> {
        match self.take_u8()? {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(CodecError::InvalidBool(b)),
        }
    }

    pub fn take_u32(&mut self) -> Result<u32, CodecError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn take_u64(&mut self) -> Result<u64, CodecError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn take_i32(&mut self) -> Result<i32, CodecError> {
        Ok(i32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn take_i64(&mut self) -> Result<i64, CodecError> {
        Ok(i64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn take_fixed<const N: usize>(&mut self) -> Result<[u8; N], CodecError> {
        Ok(self.take(N)?.try_into().unwrap())
    }

    pub fn take_var_bytes(&mut self) -> Result<&'a [u8], CodecError> {
        let len = self.take_u32()?;
        if self.remaining() < len as usize {
            return Err(CodecError::LengthOverrun(len));
        }
        self.take(len as usize)
    }

    pub fn take_str(&mut self) -> Result<String, CodecError> {
        let bytes = self.take_var_bytes()?;
        String::from_utf8(bytes.to_vec()).map_err(|_| CodecError::InvalidUtf8)
    }

    pub fn take_count(&mut self) -> Result<usize, CodecError> {
        let n = self.take_u32()?;
        // A count can never exceed the remaining bytes (every element is at
        // least one byte); reject early so corrupt prefixes cannot trigger
        // huge allocations.
        if n as usize > self.remaining() {
            return Err(CodecError::LengthOverrun(n));
        }
        Ok(n as usize)
    }

    pub fn peek_u8(&self) -> Result<u8, CodecError> {
        self.buf
            .get(self.pos)
            .copied()
            .ok_or(CodecError::UnexpectedEnd(self.pos))
    }

    pub fn expect_tag(&mut self, wanted: u8) -> Result<(), CodecError> {
        let found = self.take_u8()?;
        if found != wanted {
            return Err(CodecError::WrongTag { found, wanted });
        }
        Ok(())
    }

    /// Top-level decodes call this to enforce the no-trailing-bytes rule.
    pub fn finish(&self) -> Result<(), CodecError> {
        if self.remaining() != 0 {
            return Err(CodecError::TrailingBytes(self.remaining()));
        }
        Ok(())
    }
}

/// Canonical encode/decode. `write` validates invariants before emitting
/// bytes; `read` revalidates so no invalid value can round-trip.
pub trait Canon: Sized {
    fn write(&self, enc: &mut Encoder) -> Result<(), CodecError>;
    fn read(dec: &mut Decoder) -> Result<Self, CodecError>;

    fn canon_bytes(&self) -> Result<Vec<u8>, CodecError> {
        let mut enc = Encoder::new();
        self.write(&mut enc)?;
        Ok(enc.into_bytes())
    }

    fn from_canon_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut dec = Decoder::new(bytes);
        let value = Self::read(&mut dec)?;
        dec.finish()?;
        Ok(value)
    }
}

/// Digest of a value's canonical encoding.
pub fn canon_digest<T: Canon>(value: &T) -> Result<crate::crypto::Digest, CodecError> {
    Ok(crate::crypto::digest(&value.canon_bytes()?))
}
